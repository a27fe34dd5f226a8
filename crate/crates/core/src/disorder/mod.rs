//! Quenched against annealed: partition-ratio tracks, concentration of
//! `log Q`, the Sinai-type expansion of quenched renewal sums and the
//! fractional-moment pipeline in two dimensions.
//!
//! Annealed partition functions beyond enumeration are estimated by
//! averaging `Q` over the same replicas whose logarithms are tracked. By
//! Jensen this biases `log(Q/A)` towards zero, so a strong-disorder verdict
//! obtained this way is conservative.

mod fractional;
mod sinai;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::coarse::ConeSpec;
use crate::ensembles::{ensemble_stats, quenched_dp, DpOptions, Ensemble, Observables};
use crate::environment::{Environment, PotentialDistribution};
use crate::error::{Error, Result};
use crate::lattice::{LatticeBox, Site};
use crate::lyapunov::{replica_log_partitions, DisorderModel};
use crate::numerics::{fit_line, fit_line_weighted, logsumexp, quantile, variance, LineFit, Welford};
use crate::path::WeightParams;
use crate::renewal::{build_irreducible_tables, calibrate_lambda, EffectiveStepLaw};
use crate::seeds::derive_seed;

pub use fractional::{fractional_moment_test, tilted_cost_exponent, FractionalMomentReport, MomentRow, TiltRow};
pub use sinai::{sinai_experiment, sinai_identity_check, SinaiLedger, SinaiReplica};

const TAG_RATIO: u64 = 0x5241_5449;
const TAG_CONC: u64 = 0x434f_4e43;
const TAG_BOOT: u64 = 0x424f_4f54;
const TAG_LLN: u64 = 0x4c4c_4e51;

/// Fewer replicas than this make every verdict inconclusive.
pub const MIN_REPLICAS: usize = 20;
pub const BOOTSTRAP_RESAMPLES: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    WeakConsistent,
    StrongConsistent,
    Inconclusive,
}

/// Weighted least-squares slope with a percentile bootstrap interval.
#[derive(Clone, Debug, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub ci: [f64; 2],
    pub resamples: usize,
    /// `1 / bootstrap variance` of each point, or all ones when some point
    /// has no spread.
    pub weights: Vec<f64>,
}

impl SlopeFit {
    pub fn width(&self) -> f64 {
        self.ci[1] - self.ci[0]
    }
}

/// Per-grid statistic of the full sample, its bootstrap standard errors and
/// the slope fit. `rows` are replicas, each holding one value per grid point.
pub(crate) fn bootstrap_slope<F>(rows: &[Vec<f64>], xs: &[f64], stat: F, seed: u64) -> Result<(Vec<f64>, Vec<f64>, SlopeFit)>
where
    F: Fn(&[&Vec<f64>]) -> Vec<f64>,
{
    if rows.is_empty() {
        return Err(Error::InvalidParameter("no replicas".into()));
    }
    let all: Vec<&Vec<f64>> = rows.iter().collect();
    let point = stat(&all);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let boots: Vec<Vec<f64>> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            let pick: Vec<&Vec<f64>> = (0..rows.len()).map(|_| &rows[rng.random_range(0..rows.len())]).collect();
            stat(&pick)
        })
        .collect();
    let se: Vec<f64> = (0..xs.len()).map(|i| variance(&boots.iter().map(|b| b[i]).collect::<Vec<_>>()).sqrt()).collect();
    let weights = if se.iter().all(|&s| s > 0.0) { se.iter().map(|s| 1.0 / (s * s)).collect() } else { vec![1.0; xs.len()] };
    let fit = fit_line_weighted(xs, &point, &weights)?;
    let slopes: Vec<f64> = boots
        .iter()
        .map(|b| fit_line_weighted(xs, b, &weights).map_or(f64::NAN, |f| f.slope))
        .filter(|s| s.is_finite())
        .collect();
    let ci = if slopes.is_empty() { [fit.slope, fit.slope] } else { [quantile(&slopes, 0.025), quantile(&slopes, 0.975)] };
    Ok((point, se, SlopeFit { slope: fit.slope, intercept: fit.intercept, ci, resamples: BOOTSTRAP_RESAMPLES, weights }))
}

fn log_mean_exp(xs: &[f64]) -> f64 {
    logsumexp(xs) - (xs.len() as f64).ln()
}

/// Verdict from a slope interval: strong when it lies strictly below zero,
/// weak when it straddles zero and is narrower than `weak_width`.
pub fn slope_verdict(fit: &SlopeFit, replicas: usize, weak_width: f64) -> Verdict {
    if replicas < MIN_REPLICAS {
        Verdict::Inconclusive
    } else if fit.ci[1] < 0.0 {
        Verdict::StrongConsistent
    } else if fit.ci[0] <= 0.0 && fit.width() < weak_width {
        Verdict::WeakConsistent
    } else {
        Verdict::Inconclusive
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RatioRow {
    pub n: usize,
    /// Replica mean of `log(Q_n / A_n)`.
    pub mean: f64,
    pub stderr: f64,
    pub min: f64,
    pub max: f64,
    /// `log A_n` used for the ratio.
    pub log_annealed: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DisorderReport {
    pub dist: String,
    pub h: Vec<f64>,
    pub beta: f64,
    pub lambda: f64,
    pub replicas: usize,
    pub seed: u64,
    /// `exact` when quenched and annealed coincide, `replica-average` otherwise.
    pub annealed_source: String,
    pub rows: Vec<RatioRow>,
    /// `tracks[r][i]` is `log(Q_{n_i} / A_{n_i})` for replica `r`.
    pub tracks: Vec<Vec<f64>>,
    pub slope: SlopeFit,
    pub weak_width: f64,
    /// Every pooled mean is at most two standard errors above zero.
    pub jensen_ok: bool,
    pub verdict: Verdict,
}

/// Default width below which a zero-straddling slope interval counts as weak.
pub const DEFAULT_WEAK_WIDTH: f64 = 0.01;

/// Per-replica `log(Q_n(h) / A_n(h))` from the transfer DP at `lambda = 0`.
pub fn ratio_track(
    dist: &PotentialDistribution,
    h: &[f64],
    beta: f64,
    ns: &[usize],
    replicas: usize,
    seed: u64,
) -> Result<DisorderReport> {
    ratio_track_with(dist, h, beta, ns, replicas, seed, DEFAULT_WEAK_WIDTH)
}

pub fn ratio_track_with(
    dist: &PotentialDistribution,
    h: &[f64],
    beta: f64,
    ns: &[usize],
    replicas: usize,
    seed: u64,
    weak_width: f64,
) -> Result<DisorderReport> {
    check_grid(ns)?;
    if replicas == 0 {
        return Err(Error::InvalidParameter("need at least one replica".into()));
    }
    let model = DisorderModel::new(dist.clone(), beta)?;
    let dim = h.len();
    let p = WeightParams::new(beta, 0.0, h.to_vec())?;
    let nmax = *ns.last().unwrap();
    let bx = LatticeBox::centered(dim, nmax as i32 + 2)?;
    let trivial = model.is_trivial();
    let log_q: Vec<Vec<f64>> = (0..if trivial { 1 } else { replicas })
        .into_par_iter()
        .map(|r| {
            let env = if trivial {
                Environment::zero(bx)
            } else {
                Environment::sample(dist, bx, derive_seed(seed, TAG_RATIO, r as u64))?
            };
            let zeroed;
            let p = if trivial {
                zeroed = WeightParams::new(0.0, 0.0, h.to_vec())?;
                &zeroed
            } else {
                &p
            };
            let table = quenched_dp(&env, p, nmax, &DpOptions::default())?;
            Ok(ns.iter().map(|&n| table.log_total(n)).collect())
        })
        .collect::<Result<_>>()?;
    let log_q = if trivial { vec![log_q[0].clone(); replicas] } else { log_q };
    let stat = |rows: &[&Vec<f64>]| -> Vec<f64> {
        if trivial {
            return vec![0.0; ns.len()];
        }
        (0..ns.len())
            .map(|i| {
                let col: Vec<f64> = rows.iter().map(|r| r[i]).collect();
                col.iter().sum::<f64>() / col.len() as f64 - log_mean_exp(&col)
            })
            .collect()
    };
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let (means, se, slope) = bootstrap_slope(&log_q, &xs, stat, derive_seed(seed, TAG_BOOT, 0))?;
    let log_a: Vec<f64> = (0..ns.len())
        .map(|i| if trivial { log_q[0][i] } else { log_mean_exp(&log_q.iter().map(|r| r[i]).collect::<Vec<_>>()) })
        .collect();
    let tracks: Vec<Vec<f64>> = log_q.iter().map(|r| r.iter().zip(&log_a).map(|(q, a)| if trivial { 0.0 } else { q - a }).collect()).collect();
    let rows: Vec<RatioRow> = ns
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let col: Vec<f64> = tracks.iter().map(|t| t[i]).collect();
            RatioRow {
                n,
                mean: means[i],
                stderr: se[i],
                min: col.iter().copied().fold(f64::INFINITY, f64::min),
                max: col.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                log_annealed: log_a[i],
            }
        })
        .collect();
    let jensen_ok = rows.iter().all(|r| r.mean <= 2.0 * r.stderr);
    let verdict = slope_verdict(&slope, replicas, weak_width);
    Ok(DisorderReport {
        dist: dist.to_string(),
        h: h.to_vec(),
        beta,
        lambda: 0.0,
        replicas,
        seed,
        annealed_source: if trivial { "exact" } else { "replica-average" }.into(),
        rows,
        tracks,
        slope,
        weak_width,
        jensen_ok,
        verdict,
    })
}

fn check_grid(ns: &[usize]) -> Result<()> {
    if ns.is_empty() || ns[0] == 0 || ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("grid must be positive and strictly increasing".into()));
    }
    if ns.len() < 2 {
        return Err(Error::InvalidParameter("slope fits need at least two grid points".into()));
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct ConcentrationRow {
    pub n: usize,
    pub target: Vec<i32>,
    pub mean: f64,
    pub variance: f64,
    /// `Var / N`.
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConcentrationReport {
    pub dist: String,
    pub beta: f64,
    pub lambda: f64,
    pub direction: Vec<i32>,
    pub replicas: usize,
    pub seed: u64,
    pub rows: Vec<ConcentrationRow>,
    /// Largest `Var / N`: one constant with `Var <= c N` on the grid.
    pub c_hat: f64,
    /// `max (Var/N) / min (Var/N)`; 1 when every variance vanishes.
    pub ratio_spread: f64,
    /// Straight-line fit of `Var` against `N`.
    pub variance_fit: Option<LineFit>,
    /// Slope of `log Var` against `log N` with a bootstrap interval; values
    /// above 1 would signal super-linear growth.
    pub loglog: Option<SlopeFit>,
    pub starved: bool,
    pub within_factor_two: bool,
    pub verdict: crate::coarse::Outcome,
}

/// Empirical variance of `log Q_lambda(N direction)` across replicas.
pub fn concentration_check(
    dist: &PotentialDistribution,
    beta: f64,
    lambda: f64,
    direction: Site,
    dim: usize,
    ns: &[usize],
    replicas: usize,
    seed: u64,
) -> Result<ConcentrationReport> {
    use crate::coarse::Outcome;
    check_grid(ns)?;
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter("concentration needs lambda > 0".into()));
    }
    if direction.is_origin() {
        return Err(Error::InvalidParameter("direction must be nonzero".into()));
    }
    if replicas < 2 {
        return Err(Error::InvalidParameter("need at least 2 replicas".into()));
    }
    let model = DisorderModel::new(dist.clone(), beta)?;
    let targets: Vec<Site> = ns.iter().map(|&n| Site(std::array::from_fn(|i| direction.0[i] * n as i32))).collect();
    let rows = replica_log_partitions(&model, dim, lambda, &targets, replicas, derive_seed(seed, TAG_CONC, 0), 1e-12)?;
    let stats = |rows: &[&Vec<f64>]| -> Vec<f64> {
        (0..ns.len()).map(|i| variance(&rows.iter().map(|r| r[i]).collect::<Vec<_>>())).collect()
    };
    let all: Vec<&Vec<f64>> = rows.iter().collect();
    let vars = stats(&all);
    let out_rows: Vec<ConcentrationRow> = ns
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let col: Vec<f64> = rows.iter().map(|r| r[i]).collect();
            ConcentrationRow {
                n,
                target: targets[i].coords(dim).to_vec(),
                mean: col.iter().sum::<f64>() / col.len() as f64,
                variance: vars[i],
                ratio: vars[i] / n as f64,
            }
        })
        .collect();
    let ratios: Vec<f64> = out_rows.iter().map(|r| r.ratio).collect();
    let c_hat = ratios.iter().copied().fold(0.0, f64::max);
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let ratio_spread = if c_hat == 0.0 { 1.0 } else if lo == 0.0 { f64::INFINITY } else { c_hat / lo };
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let variance_fit = fit_line(&xs, &vars).ok();
    let loglog = if vars.iter().all(|&v| v > 0.0) {
        let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
        let st = |rows: &[&Vec<f64>]| -> Vec<f64> { stats(rows).iter().map(|v| v.max(f64::MIN_POSITIVE).ln()).collect() };
        Some(bootstrap_slope(&rows, &lx, st, derive_seed(seed, TAG_BOOT, 1))?.2)
    } else {
        None
    };
    let starved = replicas < MIN_REPLICAS;
    let within_factor_two = ratio_spread <= 2.0;
    let no_curvature = loglog.as_ref().is_none_or(|f| f.ci[0] <= 1.0);
    let verdict = if starved {
        Outcome::Inconclusive
    } else if within_factor_two && no_curvature {
        Outcome::Pass
    } else {
        Outcome::Fail
    };
    Ok(ConcentrationReport {
        dist: dist.to_string(),
        beta,
        lambda,
        direction: direction.coords(dim).to_vec(),
        replicas,
        seed,
        rows: out_rows,
        c_hat,
        ratio_spread,
        variance_fit,
        loglog,
        starved,
        within_factor_two,
        verdict,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct LlnRow {
    pub n: usize,
    pub annealed_mean: Vec<f64>,
    /// `|E_n^A X / n - v|`.
    pub annealed_gap: f64,
    /// Largest `|E_n^omega X / n - v|` over replicas.
    pub max_deviation: f64,
    pub mean_deviation: f64,
    pub deviation_stderr: f64,
    /// `max_deviation <= 3 annealed_gap`.
    pub within_three_gaps: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct LlnReport {
    pub dist: String,
    pub h: Vec<f64>,
    pub beta: f64,
    pub delta: f64,
    pub replicas: usize,
    pub seed: u64,
    /// Annealed velocity from the calibrated renewal table.
    pub v: Vec<f64>,
    pub calibration_deficit: f64,
    pub rows: Vec<LlnRow>,
}

/// Quenched mean extensions per replica against the annealed velocity.
///
/// `v` comes from the irreducible table of the annealed model at the same
/// `(h, beta)` with cone aperture `delta`, calibrated to total mass one.
/// When the caller has a ratio-track verdict at these parameters it passes
/// it in; a strong-disorder verdict is rejected.
#[allow(clippy::too_many_arguments)]
pub fn quenched_lln_check(
    dist: &PotentialDistribution,
    h: &[f64],
    beta: f64,
    delta: f64,
    ns: &[usize],
    replicas: usize,
    seed: u64,
    ratio_verdict: Option<Verdict>,
) -> Result<LlnReport> {
    if ratio_verdict == Some(Verdict::StrongConsistent) {
        return Err(Error::Precondition(
            "ratio_track reports strong disorder at these parameters; the quenched LLN needs weak disorder".into(),
        ));
    }
    if ns.is_empty() || ns[0] == 0 {
        return Err(Error::InvalidParameter("lengths must be positive".into()));
    }
    if replicas == 0 {
        return Err(Error::InvalidParameter("need at least one replica".into()));
    }
    let dim = h.len();
    let nmax = *ns.iter().max().unwrap();
    let cone = ConeSpec::free_walk(h.to_vec(), delta)?.lookup(nmax as i32 + 1)?;
    let table = build_irreducible_tables(dist, beta, &cone, nmax)?;
    let (cal, info) = calibrate_lambda(&table, 1e-15, 1e-2)?;
    let law = EffectiveStepLaw::from_table(&cal)?;
    let v = law.drift();
    let p = WeightParams::new(beta, 0.0, h.to_vec())?;
    let obs = Observables::default();
    let model = DisorderModel::new(dist.clone(), beta)?;
    let trivial = model.is_trivial();
    let bx = LatticeBox::centered(dim, nmax as i32 + 2)?;
    let per_replica: Vec<Vec<Vec<f64>>> = (0..if trivial { 1 } else { replicas })
        .into_par_iter()
        .map(|r| {
            let env = if trivial { Environment::zero(bx) } else { Environment::sample(dist, bx, derive_seed(seed, TAG_LLN, r as u64))? };
            let pz;
            let pp = if trivial {
                pz = WeightParams::new(0.0, 0.0, h.to_vec())?;
                &pz
            } else {
                &p
            };
            ns.iter().map(|&n| Ok(ensemble_stats(Ensemble::Quenched(&env), pp, n, &obs)?.mean_extension)).collect()
        })
        .collect::<Result<_>>()?;
    let gap = |m: &[f64], n: usize| -> f64 { m.iter().zip(&v).map(|(a, b)| (a / n as f64 - b).powi(2)).sum::<f64>().sqrt() };
    let mut rows = Vec::new();
    for (i, &n) in ns.iter().enumerate() {
        let annealed = ensemble_stats(Ensemble::Annealed(dist), &p, n, &obs)?.mean_extension;
        let annealed_gap = gap(&annealed, n);
        let mut w = Welford::default();
        let mut worst = 0.0f64;
        for rep in &per_replica {
            let d = gap(&rep[i], n);
            w.push(d);
            worst = worst.max(d);
        }
        rows.push(LlnRow {
            n,
            annealed_mean: annealed,
            annealed_gap,
            max_deviation: worst,
            mean_deviation: w.mean(),
            deviation_stderr: w.stderr(),
            within_three_gaps: worst <= 3.0 * annealed_gap,
        });
    }
    Ok(LlnReport {
        dist: dist.to_string(),
        h: h.to_vec(),
        beta,
        delta,
        replicas,
        seed,
        v,
        calibration_deficit: info.deficit_estimate,
        rows,
    })
}
