//! Lyapunov exponents, polar norms, critical drifts and rate functions.

mod norms;

use std::collections::BTreeMap;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::ensembles::{conjugate_box, conjugate_green};
use crate::environment::{Environment, PotentialDistribution};
use crate::error::{Error, Result};
use crate::lattice::{direction_fan, LatticeBox, Site};
use crate::numerics::{fit_line, logsumexp, LogSum};
use crate::path::WeightParams;
use crate::seeds::derive_seed;

pub use norms::{FreeWalkNorm, LyapunovNorm, PolygonalNorm};

const TAG_LYAPUNOV: u64 = 0x4c59_4150;
const TAG_SERIES: u64 = 0x5345_5249;

/// Disorder law and inverse temperature.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DisorderModel {
    pub dist: PotentialDistribution,
    pub beta: f64,
}

impl DisorderModel {
    pub fn new(dist: PotentialDistribution, beta: f64) -> Result<DisorderModel> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter(format!("beta = {beta} must be finite and >= 0")));
        }
        Ok(DisorderModel { dist, beta })
    }

    /// No effective disorder: quenched and annealed objects coincide.
    pub fn is_trivial(&self) -> bool {
        self.beta == 0.0 || (self.dist.is_degenerate() && self.dist.in_support(0.0))
    }

    pub fn params(&self, dim: usize, lambda: f64) -> Result<WeightParams> {
        WeightParams::new(self.beta, lambda, vec![0.0; dim])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum LyapunovKind {
    Quenched,
    Annealed,
}

/// Per-replica `log Q_lambda(N_i * direction)`, replicas in seed order.
pub fn replica_log_partitions(
    model: &DisorderModel,
    dim: usize,
    lambda: f64,
    targets: &[Site],
    replicas: usize,
    seed: u64,
    tol: f64,
) -> Result<Vec<Vec<f64>>> {
    let p = model.params(dim, lambda)?;
    let bx = conjugate_box(dim, targets)?;
    if model.is_trivial() {
        let r = conjugate_green(&Environment::zero(bx), &p, targets, bx, tol)?;
        let row: Vec<f64> = r.targets.iter().map(|t| t.1).collect();
        return Ok(vec![row; replicas.max(1)]);
    }
    (0..replicas)
        .into_par_iter()
        .map(|r| {
            let env = Environment::sample(&model.dist, bx, derive_seed(seed, TAG_LYAPUNOV, r as u64))?;
            let res = conjugate_green(&env, &p, targets, bx, tol)?;
            Ok(res.targets.iter().map(|t| t.1).collect())
        })
        .collect()
}

/// Extrapolated Lyapunov exponent in one lattice direction.
#[derive(Clone, Debug, Serialize)]
pub struct LyapunovEstimate {
    pub direction: Vec<i32>,
    pub lambda: f64,
    pub kind: LyapunovKind,
    /// Exponent per unit Euclidean length.
    pub value: f64,
    pub stderr: f64,
    /// `a(direction)` for the lattice vector itself (the fit intercept).
    pub per_vector: f64,
    pub ns: Vec<usize>,
    /// `-log Z(N d) / N = intercept + slope / N`.
    pub fit_intercept: f64,
    pub fit_slope: f64,
    /// Computed without sampling error (no disorder).
    pub exact: bool,
    /// Annealed estimate from replica-averaged Q (biased by finite replicas).
    pub replica_averaged: bool,
}

fn fit_exponent(ns: &[usize], ys: &[f64]) -> Result<(f64, f64)> {
    if ys.iter().any(|y| y.is_infinite()) {
        return Ok((f64::INFINITY, 0.0));
    }
    if ns.len() == 1 {
        return Ok((ys[0], 0.0));
    }
    let xs: Vec<f64> = ns.iter().map(|&n| 1.0 / n as f64).collect();
    let f = fit_line(&xs, ys)?;
    Ok((f.intercept, f.slope))
}

/// Per-N values `-log Z / N` from replica rows: quenched averages the logs,
/// annealed takes the log of the averaged partition functions.
fn per_n(kind: LyapunovKind, ns: &[usize], rows: &[&Vec<f64>]) -> Vec<f64> {
    (0..ns.len())
        .map(|i| {
            let col: Vec<f64> = rows.iter().map(|r| r[i]).collect();
            let lz = match kind {
                LyapunovKind::Quenched => col.iter().sum::<f64>() / col.len() as f64,
                LyapunovKind::Annealed => logsumexp(&col) - (col.len() as f64).ln(),
            };
            -lz / ns[i] as f64
        })
        .collect()
}

/// `1/N`-extrapolated exponent from `replicas` environments, with a
/// bootstrap standard error over replicas.
#[allow(clippy::too_many_arguments)]
pub fn estimate_lyapunov(
    kind: LyapunovKind,
    model: &DisorderModel,
    lambda: f64,
    direction: Site,
    dim: usize,
    ns: &[usize],
    replicas: usize,
    seed: u64,
) -> Result<LyapunovEstimate> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter("Lyapunov exponents need lambda > 0".into()));
    }
    if ns.is_empty() || ns.windows(2).any(|w| w[0] >= w[1]) || ns[0] == 0 {
        return Err(Error::InvalidParameter("Ns must be positive and increasing".into()));
    }
    if direction.is_origin() {
        return Err(Error::InvalidParameter("direction must be nonzero".into()));
    }
    let exact = model.is_trivial();
    if !exact && replicas < 2 {
        return Err(Error::InvalidParameter("need at least 2 replicas".into()));
    }
    let targets: Vec<Site> = ns
        .iter()
        .map(|&n| Site(std::array::from_fn(|i| direction.0[i] * n as i32)))
        .collect();
    let rows = replica_log_partitions(model, dim, lambda, &targets, if exact { 1 } else { replicas }, seed, 1e-12)?;
    let all: Vec<&Vec<f64>> = rows.iter().collect();
    let (intercept, slope) = fit_exponent(ns, &per_n(kind, ns, &all))?;
    let mut stderr = 0.0;
    if !exact && intercept.is_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, TAG_LYAPUNOV, u64::MAX));
        let boots: Vec<f64> = (0..1000)
            .map(|_| {
                let pick: Vec<&Vec<f64>> = (0..rows.len()).map(|_| &rows[rng.random_range(0..rows.len())]).collect();
                fit_exponent(ns, &per_n(kind, ns, &pick)).map(|f| f.0).unwrap_or(f64::NAN)
            })
            .collect();
        stderr = crate::numerics::variance(&boots).sqrt();
    }
    let len = direction.l2();
    Ok(LyapunovEstimate {
        direction: direction.coords(dim).to_vec(),
        lambda,
        kind,
        value: intercept / len,
        stderr: stderr / len,
        per_vector: intercept,
        ns: ns.to_vec(),
        fit_intercept: intercept,
        fit_slope: slope,
        exact,
        replica_averaged: kind == LyapunovKind::Annealed && !exact,
    })
}

/// Findings of the norm-property checks over a direction fan.
#[derive(Clone, Debug, Serialize)]
pub struct NormReport {
    pub directions: usize,
    pub min_value: f64,
    pub max_value: f64,
    pub positive_and_finite: bool,
    /// Directions where `q < a - 2 stderr` (should be empty).
    pub quenched_below_annealed: Vec<Vec<i32>>,
    /// Fan pairs `(d_i, d_j)` with `d_i + d_j = k d_l` violating the
    /// triangle inequality beyond two combined standard errors.
    pub triangle_violations: Vec<(Vec<i32>, Vec<i32>)>,
    pub triangle_checked: usize,
}

pub fn norm_checks(annealed: &[LyapunovEstimate], quenched: &[LyapunovEstimate]) -> NormReport {
    let vals: Vec<f64> = annealed.iter().chain(quenched).map(|e| e.value).collect();
    let min_value = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_value = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut below = Vec::new();
    for a in annealed {
        if let Some(q) = quenched.iter().find(|q| q.direction == a.direction) {
            if q.value < a.value - 2.0 * (q.stderr + a.stderr) {
                below.push(a.direction.clone());
            }
        }
    }
    let mut violations = Vec::new();
    let mut checked = 0;
    let by_dir: BTreeMap<Vec<i32>, &LyapunovEstimate> = annealed.iter().map(|e| (e.direction.clone(), e)).collect();
    for (i, a) in annealed.iter().enumerate() {
        for b in &annealed[i..] {
            let sum: Vec<i32> = a.direction.iter().zip(&b.direction).map(|(x, y)| x + y).collect();
            let g = sum.iter().fold(0i32, |acc, &c| gcd(acc, c));
            if g == 0 {
                continue;
            }
            let prim: Vec<i32> = sum.iter().map(|c| c / g).collect();
            if let Some(c) = by_dir.get(&prim) {
                checked += 1;
                let lhs = g as f64 * c.per_vector;
                let rhs = a.per_vector + b.per_vector;
                let se = g as f64 * c.stderr * c.direction_len() + a.stderr * a.direction_len() + b.stderr * b.direction_len();
                if lhs > rhs + 2.0 * se + 1e-9 {
                    violations.push((a.direction.clone(), b.direction.clone()));
                }
            }
        }
    }
    NormReport {
        directions: annealed.len().max(quenched.len()),
        min_value,
        max_value,
        positive_and_finite: min_value > 0.0 && max_value.is_finite(),
        quenched_below_annealed: below,
        triangle_violations: violations,
        triangle_checked: checked,
    }
}

fn gcd(a: i32, b: i32) -> i32 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl LyapunovEstimate {
    fn direction_len(&self) -> f64 {
        self.direction.iter().map(|&c| (c as f64).powi(2)).sum::<f64>().sqrt()
    }
}

/// Fan lower bound of the polar norm: `max_x h.x / a(x)` over the fan.
pub fn polar_norm(fan_values: &[(Site, f64)], h: &[f64]) -> Result<f64> {
    if fan_values.is_empty() {
        return Err(Error::InvalidParameter("empty direction fan".into()));
    }
    Ok(fan_values.iter().map(|(d, a)| d.dot(h) / a).fold(0.0f64, f64::max))
}

/// A family of norms indexed by `lambda`.
pub trait NormFamily: Sync {
    fn dim(&self) -> usize;
    /// Smallest mass at which the family can be evaluated.
    fn min_lambda(&self) -> f64;
    fn fan(&self) -> Vec<Site>;
    /// `(direction, a_lambda(direction))` over the fan.
    fn fan_values(&self, lambda: f64) -> Result<Vec<(Site, f64)>>;
    /// Evaluator for arbitrary vectors.
    fn norm_at(&self, lambda: f64) -> Result<Box<dyn LyapunovNorm>>;
}

/// The exact norms of the potential-free walk.
#[derive(Clone, Debug)]
pub struct FreeWalkFamily {
    pub dim: usize,
    pub fan_height: i32,
}

impl NormFamily for FreeWalkFamily {
    fn dim(&self) -> usize {
        self.dim
    }

    fn min_lambda(&self) -> f64 {
        0.0
    }

    fn fan(&self) -> Vec<Site> {
        direction_fan(self.dim, self.fan_height)
    }

    fn fan_values(&self, lambda: f64) -> Result<Vec<(Site, f64)>> {
        let n = FreeWalkNorm::new(self.dim, lambda)?;
        Ok(self.fan().into_iter().map(|d| (d, n.at_site(d))).collect())
    }

    fn norm_at(&self, lambda: f64) -> Result<Box<dyn LyapunovNorm>> {
        Ok(Box::new(FreeWalkNorm::new(self.dim, lambda)?))
    }
}

/// Norms estimated from conjugate partition functions over a direction fan
/// and interpolated by their convex polygon. Values are cached per lambda.
pub struct EstimatedFamily {
    pub model: DisorderModel,
    pub kind: LyapunovKind,
    pub dim: usize,
    pub fan_height: i32,
    /// Target l1 distances; direction `d` uses `N = round(L / |d|_1)`.
    pub lengths: Vec<usize>,
    pub replicas: usize,
    pub seed: u64,
    pub min_lambda: f64,
    cache: Mutex<BTreeMap<u64, Vec<(Site, f64)>>>,
}

impl EstimatedFamily {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        model: DisorderModel,
        kind: LyapunovKind,
        dim: usize,
        fan_height: i32,
        lengths: Vec<usize>,
        replicas: usize,
        seed: u64,
        min_lambda: f64,
    ) -> EstimatedFamily {
        EstimatedFamily {
            model,
            kind,
            dim,
            fan_height,
            lengths,
            replicas,
            seed,
            min_lambda,
            cache: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn estimates(&self, lambda: f64) -> Result<Vec<LyapunovEstimate>> {
        self.fan()
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let mut ns: Vec<usize> =
                    self.lengths.iter().map(|&l| ((l as f64 / d.l1() as f64).round() as usize).max(1)).collect();
                ns.dedup();
                estimate_lyapunov(
                    self.kind,
                    &self.model,
                    lambda,
                    *d,
                    self.dim,
                    &ns,
                    self.replicas,
                    derive_seed(self.seed, i as u64, lambda.to_bits()),
                )
            })
            .collect()
    }
}

impl NormFamily for EstimatedFamily {
    fn dim(&self) -> usize {
        self.dim
    }

    fn min_lambda(&self) -> f64 {
        self.min_lambda
    }

    fn fan(&self) -> Vec<Site> {
        direction_fan(self.dim, self.fan_height)
    }

    fn fan_values(&self, lambda: f64) -> Result<Vec<(Site, f64)>> {
        if lambda < self.min_lambda {
            return Err(Error::InvalidParameter(format!("lambda {lambda} below the family floor {}", self.min_lambda)));
        }
        if let Some(v) = self.cache.lock().unwrap().get(&lambda.to_bits()) {
            return Ok(v.clone());
        }
        let v: Vec<(Site, f64)> = self
            .estimates(lambda)?
            .into_iter()
            .map(|e| (Site::new(&e.direction), e.per_vector))
            .collect();
        self.cache.lock().unwrap().insert(lambda.to_bits(), v.clone());
        Ok(v)
    }

    fn norm_at(&self, lambda: f64) -> Result<Box<dyn LyapunovNorm>> {
        Ok(Box::new(PolygonalNorm::from_fan(self.dim, &self.fan_values(lambda)?)?))
    }
}

/// `Lambda(h)`: the mass at which `h` lies on the boundary of the dual ball,
/// found by bisection on `lambda -> a*_lambda(h) - 1` (decreasing in lambda).
/// Returns 0 when `a*(h) <= 1` already at the family floor.
pub fn lambda_of_h(family: &dyn NormFamily, h: &[f64], tol: f64, lambda_hi: f64) -> Result<f64> {
    if h.len() != family.dim() {
        return Err(Error::InvalidParameter("h has the wrong dimension".into()));
    }
    if h.iter().all(|&x| x == 0.0) {
        return Ok(0.0);
    }
    let target = |lambda: f64| -> f64 {
        if lambda == 0.0 {
            // a_0 = 0 for the free walk, so every nonzero h is outside K_0.
            return match family.fan_values(0.0) {
                Ok(v) if v.iter().all(|x| x.1 > 0.0) => polar_norm(&v, h).unwrap_or(f64::INFINITY) - 1.0,
                _ => f64::INFINITY,
            };
        }
        family.fan_values(lambda).and_then(|v| polar_norm(&v, h)).unwrap_or(f64::NAN) - 1.0
    };
    let lo = family.min_lambda();
    if target(lo) <= 0.0 {
        return Ok(0.0);
    }
    if target(lambda_hi) > 0.0 {
        return Err(Error::Bracketing(format!("a*_lambda(h) > 1 at lambda = {lambda_hi}; raise the bracket")));
    }
    crate::numerics::bisect(target, lo, lambda_hi, tol)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Phase {
    SubCritical,
    NearCritical,
    Ballistic,
}

/// Phase of a drift.
#[derive(Clone, Debug, Serialize)]
pub struct DriftClassification {
    pub h: Vec<f64>,
    pub lambda_of_h: f64,
    pub phase: Phase,
    /// `|a*_floor(h) - 1|`.
    pub margin: f64,
    /// Within 0.05 of the critical surface.
    pub near_critical: bool,
}

pub fn classify_drift(family: &dyn NormFamily, h: &[f64], tol: f64, lambda_hi: f64) -> Result<DriftClassification> {
    let lam = lambda_of_h(family, h, tol, lambda_hi)?;
    let floor = family.min_lambda();
    let star = if h.iter().all(|&x| x == 0.0) {
        0.0
    } else if floor == 0.0 {
        let v = family.fan_values(0.0)?;
        if v.iter().any(|x| x.1 <= 0.0) {
            f64::INFINITY
        } else {
            polar_norm(&v, h)?
        }
    } else {
        polar_norm(&family.fan_values(floor)?, h)?
    };
    let margin = (star - 1.0).abs();
    let near = margin < 0.05;
    let phase = if lam > tol {
        Phase::Ballistic
    } else if near {
        Phase::NearCritical
    } else {
        Phase::SubCritical
    };
    Ok(DriftClassification { h: h.to_vec(), lambda_of_h: lam, phase, margin, near_critical: near })
}

/// Value of the rate function `J^h(v)` on a lambda grid.
#[derive(Clone, Debug, Serialize)]
pub struct RateValue {
    pub j: f64,
    pub argmax_lambda: f64,
    pub lambda_of_h: f64,
    /// Argmax on an end of the grid that is not the natural boundary `lambda = 0`.
    pub boundary_flag: bool,
}

/// `J^h(v) = max_lambda { a_lambda(v) - lambda } + Lambda(h) - h.v`.
pub fn rate_function(family: &dyn NormFamily, h: &[f64], v: &[f64], lambdas: &[f64], lambda_of_h: f64) -> Result<RateValue> {
    if lambdas.is_empty() {
        return Err(Error::InvalidParameter("empty lambda grid".into()));
    }
    let mut best = f64::NEG_INFINITY;
    let mut arg = 0usize;
    for (i, &l) in lambdas.iter().enumerate() {
        let val = family.norm_at(l)?.value(v) - l;
        if val > best {
            best = val;
            arg = i;
        }
    }
    let hv: f64 = h.iter().zip(v).map(|(a, b)| a * b).sum();
    let boundary_flag = arg == lambdas.len() - 1 || (arg == 0 && lambdas[0] > 0.0 && v.iter().any(|&x| x != 0.0));
    Ok(RateValue { j: best + lambda_of_h - hv, argmax_lambda: lambdas[arg], lambda_of_h, boundary_flag })
}

/// Partial sums of `sum_{|x|_1 <= R} e^{h.x} A_lambda(x)` by shells.
#[derive(Clone, Debug, Serialize)]
pub struct SeriesDiagnostic {
    pub h: Vec<f64>,
    pub lambda: f64,
    /// Log of the shell sums `sum_{|x|_1 = R} e^{h.x} A_lambda(x)`.
    pub log_shells: Vec<f64>,
    pub log_partial_sums: Vec<f64>,
    /// Slope of `log shell` against `R` over the upper half of the shells.
    pub shell_slope: f64,
    pub converging: bool,
}

/// Shell sums with `A_lambda` replaced by its unbiased replica average
/// `mean_r Q_lambda` (exact when there is no disorder).
pub fn series_diagnostic(
    model: &DisorderModel,
    dim: usize,
    lambda: f64,
    h: &[f64],
    radius: usize,
    replicas: usize,
    seed: u64,
) -> Result<SeriesDiagnostic> {
    let ball = LatticeBox::centered(dim, radius as i32)?;
    let targets: Vec<Site> = ball.sites().filter(|s| s.l1() as usize <= radius).collect();
    let rows = replica_log_partitions(model, dim, lambda, &targets, replicas, derive_seed(seed, TAG_SERIES, 0), 1e-12)?;
    let mut shells = vec![LogSum::new(); radius + 1];
    for (j, t) in targets.iter().enumerate() {
        let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        let la = logsumexp(&col) - (col.len() as f64).ln();
        shells[t.l1() as usize].add(la + t.dot(h));
    }
    let log_shells: Vec<f64> = shells.iter().map(|s| s.value()).collect();
    let mut partial = Vec::with_capacity(log_shells.len());
    let mut acc = LogSum::new();
    for &s in &log_shells {
        acc.add(s);
        partial.push(acc.value());
    }
    let half = radius / 2;
    let rs: Vec<f64> = (half..=radius).map(|r| r as f64).collect();
    let ys: Vec<f64> = log_shells[half..].to_vec();
    let slope = fit_line(&rs, &ys)?.slope;
    Ok(SeriesDiagnostic {
        h: h.to_vec(),
        lambda,
        log_shells,
        log_partial_sums: partial,
        shell_slope: slope,
        converging: slope < 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_family_critical_mass_in_one_dimension() {
        let fam = FreeWalkFamily { dim: 1, fan_height: 1 };
        for h in [0.5f64, 1.0, 2.5] {
            let l = lambda_of_h(&fam, &[h], 1e-13, 10.0).unwrap();
            assert!((l - h.cosh().ln()).abs() < 1e-9, "{h}: {l}");
        }
        assert_eq!(lambda_of_h(&fam, &[0.0], 1e-12, 10.0).unwrap(), 0.0);
        let c = classify_drift(&fam, &[0.3], 1e-10, 10.0).unwrap();
        assert_eq!(c.phase, Phase::Ballistic);
    }

    #[test]
    fn polar_norm_is_homogeneous() {
        let fam = FreeWalkFamily { dim: 2, fan_height: 3 };
        let v = fam.fan_values(0.5).unwrap();
        let h = [0.4, -0.9];
        let a = polar_norm(&v, &h).unwrap();
        let b = polar_norm(&v, &[0.8, -1.8]).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-12);
        assert_eq!(polar_norm(&v, &[0.0, 0.0]).unwrap(), 0.0);
        assert!(polar_norm(&[], &h).is_err());
    }
}
