//! Fractional moments `E[(Q_lambda(x_N) / A_lambda(x_N))^alpha]` along the
//! first axis in two dimensions, with the change-of-measure diagnostic.
//!
//! The tilt raises the potential inside `A_N = {0..KN} x {-w..w}`,
//! `w = floor(N^(1/2+eps))`, by sampling there from the law tilted at
//! `-delta_N`, `delta_N = N^(-1/2-2 eps)`. Tilted and untilted fields share
//! their site uniforms, so the drop `log E Q - log E~ Q` has little noise.

use rayon::prelude::*;
use serde::Serialize;

use crate::ensembles::{conjugate_box, conjugate_green};
use crate::environment::{Environment, PotentialDistribution, TiltSpec};
use crate::error::{Error, Result};
use crate::lattice::{LatticeBox, Site};
use crate::lyapunov::DisorderModel;
use crate::path::WeightParams;
use crate::seeds::derive_seed;

use super::{bootstrap_slope, log_mean_exp, slope_verdict, SlopeFit, Verdict, DEFAULT_WEAK_WIDTH, MIN_REPLICAS, TAG_BOOT};

const TAG_FRAC: u64 = 0x4652_4143;

/// `-g(-c delta) - c g(delta)`, `c = alpha / (1 - alpha)`: the per-site log of
/// `E[(dP/dP~)^c]` for the law tilted at `delta`.
pub fn tilted_cost_exponent(dist: &PotentialDistribution, alpha: f64, delta: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha = {alpha} outside (0, 1)")));
    }
    let c = alpha / (1.0 - alpha);
    Ok(-dist.tilt_g(-c * delta)? - c * dist.tilt_g(delta)?)
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentRow {
    pub n: usize,
    /// `log E[(Q/A)^alpha]` with `A` the replica mean of `Q`.
    pub log_moment: f64,
    pub stderr: f64,
    /// `log A` and its standard error from a Welford pass over `Q`.
    pub log_annealed: f64,
    pub log_annealed_stderr: f64,
    /// `log(mean of Q on the second half / mean on the first half)`: the
    /// `alpha = 1` moment with `A` estimated independently.
    pub alpha_one: f64,
    pub alpha_one_halfwidth: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TiltRow {
    pub n: usize,
    pub delta: f64,
    pub box_sites: usize,
    /// `|A_N|` times the exact per-site cost for the tilt actually applied.
    pub cost_exact: f64,
    /// `|A_N| alpha delta^2 / (1 - alpha^2)^2`.
    pub cost_bound: f64,
    /// `log E Q - log E~ Q`.
    pub drop: f64,
    /// `alpha (-drop) + (1 - alpha) cost_exact`, the Hoelder bound on the moment.
    pub holder_bound: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FractionalMomentReport {
    pub dist: String,
    pub beta: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub replicas: usize,
    pub seed: u64,
    pub ns: Vec<usize>,
    pub rows: Vec<MomentRow>,
    pub slope: SlopeFit,
    /// Every moment estimate within two standard errors of `<= 0`.
    pub jensen_ok: bool,
    pub alpha_one_consistent: bool,
    /// `K` of the tilt box, `ceil(2 / a_hat)`.
    pub k: i32,
    pub a_hat: f64,
    pub tilt: Vec<TiltRow>,
    /// Least-squares `c` in `drop = c delta_N N`.
    pub c_fit: f64,
    /// `(1 - alpha) cost < alpha drop` on the whole grid.
    pub cost_below_drop: bool,
    pub slope_verdict: Verdict,
    pub verdict: Verdict,
}

/// Fractional-moment pipeline at `x_N = N e_1` in `d = 2`.
#[allow(clippy::too_many_arguments)]
pub fn fractional_moment_test(
    dist: &PotentialDistribution,
    beta: f64,
    lambda: f64,
    alpha: f64,
    ns: &[usize],
    replicas: usize,
    epsilon: f64,
    seed: u64,
) -> Result<FractionalMomentReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha = {alpha} outside (0, 1)")));
    }
    if !(epsilon > 0.0 && epsilon < 1.0 / 3.0) {
        return Err(Error::InvalidParameter(format!("epsilon = {epsilon} outside (0, 1/3)")));
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter("fractional moments need lambda > 0".into()));
    }
    if replicas < 2 {
        return Err(Error::InvalidParameter("need at least 2 replicas".into()));
    }
    super::check_grid(ns)?;
    let dim = 2;
    let model = DisorderModel::new(dist.clone(), beta)?;
    let trivial = model.is_trivial();
    let p = WeightParams::new(beta, lambda, vec![0.0; dim])?;
    let targets: Vec<Site> = ns.iter().map(|&n| Site::axis(dim, 0, n as i32)).collect();
    let base_box = conjugate_box(dim, &targets)?;
    let run = |env: &Environment, bx: LatticeBox| -> Result<Vec<f64>> {
        Ok(conjugate_green(env, &p, &targets, bx, 1e-12)?.targets.iter().map(|t| t.1).collect())
    };
    let seeds: Vec<u64> = (0..replicas).map(|r| derive_seed(seed, TAG_FRAC, r as u64)).collect();
    let log_q: Vec<Vec<f64>> = if trivial {
        vec![run(&Environment::zero(base_box), base_box)?; replicas]
    } else {
        seeds.par_iter().map(|&s| run(&Environment::sample(dist, base_box, s)?, base_box)).collect::<Result<_>>()?
    };
    let moment = |rows: &[&Vec<f64>]| -> Vec<f64> {
        (0..ns.len())
            .map(|i| {
                if trivial {
                    return 0.0;
                }
                let col: Vec<f64> = rows.iter().map(|r| r[i]).collect();
                let scaled: Vec<f64> = col.iter().map(|q| alpha * q).collect();
                (log_mean_exp(&scaled) - alpha * log_mean_exp(&col)).min(0.0)
            })
            .collect()
    };
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let (point, se, slope) = bootstrap_slope(&log_q, &xs, moment, derive_seed(seed, TAG_BOOT, 2))?;

    let half = replicas / 2;
    let mut rows = Vec::new();
    for (i, &n) in ns.iter().enumerate() {
        let col: Vec<f64> = log_q.iter().map(|r| r[i]).collect();
        let (la, la_se) = log_mean_with_stderr(&col);
        let (a1, h1) = if trivial || half == 0 {
            (0.0, 0.0)
        } else {
            let (m1, s1) = log_mean_with_stderr(&col[..half]);
            let (m2, s2) = log_mean_with_stderr(&col[half..]);
            (m2 - m1, 1.96 * (s1 * s1 + s2 * s2).sqrt())
        };
        rows.push(MomentRow {
            n,
            log_moment: point[i],
            stderr: se[i],
            log_annealed: la,
            log_annealed_stderr: la_se,
            alpha_one: a1,
            alpha_one_halfwidth: h1,
        });
    }
    let jensen_ok = rows.iter().all(|r| r.log_moment <= 2.0 * r.stderr);
    let alpha_one_consistent = rows.iter().all(|r| r.alpha_one.abs() <= r.alpha_one_halfwidth.max(1e-12));

    let last = rows.last().unwrap();
    let a_hat = -last.log_annealed / *ns.last().unwrap() as f64;
    if !(a_hat > 0.0 && a_hat.is_finite()) {
        return Err(Error::Precondition(format!("annealed exponent estimate {a_hat} is not positive")));
    }
    let k = (2.0 / a_hat).ceil() as i32;
    let mut tilt = Vec::new();
    for (i, &n) in ns.iter().enumerate() {
        let nf = n as f64;
        let delta = nf.powf(-0.5 - 2.0 * epsilon);
        let w = nf.powf(0.5 + epsilon).floor() as i32;
        let region = LatticeBox::new(dim, &[0, -w], &[k * n as i32, w])?;
        let bx = cover(&base_box, &region)?;
        let box_sites = region.len();
        let cost_exact = box_sites as f64 * tilted_cost_exponent(dist, alpha, -delta)?;
        let cost_bound = box_sites as f64 * alpha * delta * delta / (1.0 - alpha * alpha).powi(2);
        let drop = if trivial {
            0.0
        } else {
            let (plain, tilted): (Vec<f64>, Vec<f64>) = seeds
                .par_iter()
                .map(|&s| {
                    let spec = TiltSpec { delta: -delta, region };
                    let a = run(&Environment::sample(dist, bx, s)?, bx)?[i];
                    let b = run(&Environment::sample_tilted(dist, spec, bx, s)?, bx)?[i];
                    Ok((a, b))
                })
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .unzip();
            log_mean_exp(&plain) - log_mean_exp(&tilted)
        };
        tilt.push(TiltRow {
            n,
            delta,
            box_sites,
            cost_exact,
            cost_bound,
            drop,
            holder_bound: -alpha * drop + (1.0 - alpha) * cost_exact,
        });
    }
    let (sxy, sxx) = tilt.iter().fold((0.0, 0.0), |(a, b), t| {
        let x = t.delta * t.n as f64;
        (a + x * t.drop, b + x * x)
    });
    let c_fit = sxy / sxx;
    let cost_below_drop = tilt.iter().all(|t| (1.0 - alpha) * t.cost_exact < alpha * t.drop);
    let sv = slope_verdict(&slope, replicas, DEFAULT_WEAK_WIDTH);
    let verdict = match sv {
        Verdict::StrongConsistent if !cost_below_drop => Verdict::Inconclusive,
        v => v,
    };
    Ok(FractionalMomentReport {
        dist: dist.to_string(),
        beta,
        lambda,
        alpha,
        epsilon,
        replicas,
        seed,
        ns: ns.to_vec(),
        rows,
        slope,
        jensen_ok,
        alpha_one_consistent,
        k,
        a_hat,
        tilt,
        c_fit,
        cost_below_drop,
        slope_verdict: if replicas < MIN_REPLICAS { Verdict::Inconclusive } else { sv },
        verdict,
    })
}

/// `log mean exp(x)` and the standard error of that logarithm, from a
/// Welford pass over `exp(x - max)`.
fn log_mean_with_stderr(xs: &[f64]) -> (f64, f64) {
    let top = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return (top, 0.0);
    }
    let mut w = crate::numerics::Welford::default();
    xs.iter().for_each(|x| w.push((x - top).exp()));
    (w.mean().ln() + top, w.stderr() / w.mean())
}

fn cover(a: &LatticeBox, b: &LatticeBox) -> Result<LatticeBox> {
    let d = a.dim;
    let lo: Vec<i32> = (0..d).map(|i| a.lo.0[i].min(b.lo.0[i] - 2)).collect();
    let hi: Vec<i32> = (0..d).map(|i| a.hi.0[i].max(b.hi.0[i] + 2)).collect();
    LatticeBox::new(d, &lo, &hi)
}
