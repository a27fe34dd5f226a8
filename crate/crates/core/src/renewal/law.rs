//! The step law `(Y, M)` of irreducible pieces, the implicit function
//! `mu(z)` defined by `sum e^{-mu n + z.x} f_{x,n} = 1`, and annealed limit
//! theorems checked against exact convolutions.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{check_dim, unit_step, Site};
use crate::numerics::{bisect, fit_line, is_positive_definite, solve_linear};

use super::table::{convolve_tables, IrreducibleTable, KernelTable};

/// Law of one irreducible piece: displacement `Y` and length `M >= 1`.
#[derive(Clone, Debug, Serialize)]
pub struct EffectiveStepLaw {
    pub name: String,
    pub dim: usize,
    /// `(y, m, probability)`, sorted by `(y, m)`.
    pub atoms: Vec<(Site, usize, f64)>,
    pub mean_y: Vec<f64>,
    pub mean_m: f64,
    /// Covariance of `(Y_1, ..., Y_d, M)`.
    pub cov: Vec<Vec<f64>>,
    pub total: f64,
}

impl EffectiveStepLaw {
    pub fn new(name: &str, dim: usize, atoms: Vec<(Site, usize, f64)>) -> Result<EffectiveStepLaw> {
        check_dim(dim)?;
        if atoms.iter().any(|a| a.1 == 0 || !(a.2 >= 0.0) || !a.2.is_finite()) {
            return Err(Error::InvalidParameter("atoms need length >= 1 and finite mass >= 0".into()));
        }
        let mut merged: BTreeMap<(Site, usize), f64> = BTreeMap::new();
        for (y, m, p) in atoms {
            if p > 0.0 {
                *merged.entry((y, m)).or_default() += p;
            }
        }
        let atoms: Vec<(Site, usize, f64)> = merged.into_iter().map(|((y, m), p)| (y, m, p)).collect();
        let total: f64 = atoms.iter().map(|a| a.2).sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::Precondition(format!("step law has total mass {total}; calibrate first")));
        }
        let mut mean = vec![0.0; dim + 1];
        for (y, m, p) in &atoms {
            let v = joint(*y, *m, dim);
            for i in 0..=dim {
                mean[i] += p * v[i];
            }
        }
        mean.iter_mut().for_each(|x| *x /= total);
        let mut cov = vec![vec![0.0; dim + 1]; dim + 1];
        for (y, m, p) in &atoms {
            let v = joint(*y, *m, dim);
            for i in 0..=dim {
                for j in 0..=dim {
                    cov[i][j] += p * (v[i] - mean[i]) * (v[j] - mean[j]);
                }
            }
        }
        cov.iter_mut().flatten().for_each(|x| *x /= total);
        Ok(EffectiveStepLaw { name: name.into(), dim, mean_y: mean[..dim].to_vec(), mean_m: mean[dim], cov, atoms, total })
    }

    /// Step law of a calibrated table.
    pub fn from_table(table: &IrreducibleTable) -> Result<EffectiveStepLaw> {
        let atoms = table
            .entries
            .keys()
            .filter(|k| k.1 >= 1)
            .map(|&(x, n)| (x, n, table.log_f(x, n).exp()))
            .collect();
        EffectiveStepLaw::new("table", table.dim, atoms)
    }

    /// Every piece is a single `+e1` step.
    pub fn degenerate(dim: usize) -> Result<EffectiveStepLaw> {
        EffectiveStepLaw::new("degenerate", dim, vec![(unit_step(0), 1, 1.0)])
    }

    /// `M ~ Geometric(rho)` on `{1, 2, ...}`; each of the `M` micro-steps is
    /// `+e1` with probability 3/4, otherwise uniform over `+-e_i`, `i >= 2`
    /// (in d=1: zero). Lengths beyond `mmax` are dropped.
    pub fn geometric(dim: usize, rho: f64, mmax: usize) -> Result<EffectiveStepLaw> {
        check_dim(dim)?;
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::InvalidParameter(format!("rho = {rho} outside [0, 1)")));
        }
        let micro = micro_steps(dim);
        let mut dist: BTreeMap<Site, f64> = BTreeMap::from([(Site::ORIGIN, 1.0)]);
        let mut atoms = Vec::new();
        for m in 1..=mmax {
            let mut next: BTreeMap<Site, f64> = BTreeMap::new();
            for (y, p) in &dist {
                for (s, q) in &micro {
                    *next.entry(*y + *s).or_default() += p * q;
                }
            }
            dist = next;
            let pm = (1.0 - rho) * rho.powi(m as i32 - 1);
            atoms.extend(dist.iter().map(|(y, p)| (*y, m, pm * p)));
        }
        EffectiveStepLaw::new(&format!("geometric(rho={rho})"), dim, atoms)
    }

    pub fn max_len(&self) -> usize {
        self.atoms.iter().map(|a| a.1).max().unwrap_or(0)
    }

    /// `P(M = m)` for `m = 0..=max_len`.
    pub fn length_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.max_len() + 1];
        for a in &self.atoms {
            out[a.1] += a.2;
        }
        out
    }

    /// `f` as a dense kernel up to length `nmax`.
    pub fn kernel(&self, nmax: usize) -> Result<KernelTable> {
        let mut k = KernelTable::new(self.dim, nmax)?;
        for &(y, m, p) in self.atoms.iter().filter(|a| a.1 <= nmax) {
            k.add(y, m, p);
        }
        Ok(k)
    }

    /// Drift `E[Y] / E[M]`.
    pub fn drift(&self) -> Vec<f64> {
        self.mean_y.iter().map(|y| y / self.mean_m).collect()
    }

    /// `E[(Y - M v)(Y - M v)^T] / E[M]`.
    pub fn hessian(&self) -> Vec<Vec<f64>> {
        let v = self.drift();
        let d = self.dim;
        let mut h = vec![vec![0.0; d]; d];
        for (y, m, p) in &self.atoms {
            let r: Vec<f64> = (0..d).map(|i| y.0[i] as f64 - *m as f64 * v[i]).collect();
            for i in 0..d {
                for j in 0..d {
                    h[i][j] += p * r[i] * r[j];
                }
            }
        }
        h.iter_mut().flatten().for_each(|x| *x /= self.mean_m * self.total);
        h
    }

    fn log_laplace(&self, z: &[f64], mu: f64) -> f64 {
        let terms: Vec<f64> = self.atoms.iter().map(|(y, m, p)| p.ln() + y.dot(z) - mu * *m as f64).collect();
        crate::numerics::logsumexp(&terms)
    }

    /// Under weights `p e^{z.y - mu m}`: `g = E Y / E M` and
    /// `E[(Y - M g)(Y - M g)^T] / E M`, the gradient and Hessian of `mu` at `z`.
    fn tilted(&self, z: &[f64], mu: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
        let d = self.dim;
        let ws: Vec<f64> = self.atoms.iter().map(|(y, m, p)| p * (y.dot(z) - mu * *m as f64).exp()).collect();
        let mut ey = vec![0.0; d];
        let mut em = 0.0;
        for ((y, m, _), w) in self.atoms.iter().zip(&ws) {
            for i in 0..d {
                ey[i] += w * y.0[i] as f64;
            }
            em += w * *m as f64;
        }
        let g: Vec<f64> = ey.iter().map(|y| y / em).collect();
        let mut h = vec![vec![0.0; d]; d];
        for ((y, m, _), w) in self.atoms.iter().zip(&ws) {
            let r: Vec<f64> = (0..d).map(|i| y.0[i] as f64 - *m as f64 * g[i]).collect();
            for i in 0..d {
                for j in 0..d {
                    h[i][j] += w * r[i] * r[j];
                }
            }
        }
        h.iter_mut().flatten().for_each(|x| *x /= em);
        (g, h)
    }
}

fn joint(y: Site, m: usize, dim: usize) -> Vec<f64> {
    let mut v = y.to_f64(dim);
    v.push(m as f64);
    v
}

fn micro_steps(dim: usize) -> Vec<(Site, f64)> {
    if dim == 1 {
        return vec![(unit_step(0), 0.75), (Site::ORIGIN, 0.25)];
    }
    let side = 0.25 / (2 * (dim - 1)) as f64;
    let mut out = vec![(unit_step(0), 0.75)];
    out.extend((2..2 * dim).map(|k| (unit_step(k), side)));
    out
}

/// Real root of `sum p e^{z.y - mu m} = 1`: safeguarded Newton on the log
/// (convex, decreasing in `mu`) with a bisection fallback.
pub fn solve_mu(law: &EffectiveStepLaw, z: &[f64]) -> Result<f64> {
    if z.len() != law.dim {
        return Err(Error::InvalidParameter("z has the wrong dimension".into()));
    }
    let g = |mu: f64| law.log_laplace(z, mu);
    let mut lo = -1.0;
    let mut hi = 1.0;
    for _ in 0..100 {
        if g(lo) > 0.0 {
            break;
        }
        lo = 2.0 * lo - 1.0;
    }
    for _ in 0..100 {
        if g(hi) < 0.0 {
            break;
        }
        hi = 2.0 * hi + 1.0;
    }
    if !(g(lo) > 0.0 && g(hi) < 0.0) {
        return Err(Error::Bracketing(format!("mu(z) not bracketed for z = {z:?}")));
    }
    let mut mu = 0.0f64.clamp(lo, hi);
    for _ in 0..100 {
        let v = g(mu);
        if v.abs() < 1e-15 {
            return Ok(mu);
        }
        if v > 0.0 {
            lo = mu;
        } else {
            hi = mu;
        }
        // d/dmu log F = -E_tilt[M]
        let ws: Vec<f64> = law.atoms.iter().map(|(y, m, p)| p * (y.dot(z) - mu * *m as f64 - v).exp()).collect();
        let em: f64 = law.atoms.iter().zip(&ws).map(|(a, w)| a.1 as f64 * w).sum();
        let next = mu + v / em;
        mu = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
        if hi - lo < 1e-14 {
            return Ok(mu);
        }
    }
    bisect(g, lo, hi, 1e-14)
}

/// Complex root `mu(z)` for complex `z`, by Newton from the quadratic
/// approximation `z.v + z^T H z / 2`.
pub fn solve_mu_complex(law: &EffectiveStepLaw, z: &[Complex64]) -> Result<Complex64> {
    let v = law.drift();
    let h = law.hessian();
    let d = law.dim;
    let mut mu: Complex64 = (0..d).map(|i| z[i] * v[i]).sum::<Complex64>()
        + (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| z[i] * z[j] * h[i][j] * 0.5).sum::<Complex64>();
    for _ in 0..100 {
        let mut f = Complex64::new(0.0, 0.0);
        let mut df = Complex64::new(0.0, 0.0);
        for (y, m, p) in &law.atoms {
            let e: Complex64 = (0..d).map(|i| z[i] * y.0[i] as f64).sum::<Complex64>() - mu * *m as f64;
            let w = e.exp() * *p;
            f += w;
            df -= w * *m as f64;
        }
        let step = (f - 1.0) / df;
        mu -= step;
        if step.norm() < 1e-13 {
            return Ok(mu);
        }
    }
    Err(Error::NoConvergence(format!("complex mu(z) for z = {z:?}")))
}

/// Derivatives of `mu` at 0 from moments and from central differences.
#[derive(Clone, Debug, Serialize)]
pub struct MuDerivatives {
    pub mu0: f64,
    pub grad_moment: Vec<f64>,
    pub grad_fd: Vec<f64>,
    pub grad_gap: f64,
    pub hess_moment: Vec<Vec<f64>>,
    pub hess_fd: Vec<Vec<f64>>,
    pub hess_gap: f64,
    pub hess_asymmetry: f64,
    pub hess_positive_definite: bool,
}

impl MuDerivatives {
    pub fn compute(law: &EffectiveStepLaw) -> Result<MuDerivatives> {
        let d = law.dim;
        let mu0 = solve_mu(law, &vec![0.0; d])?;
        let at = |i: usize, a: f64, j: usize, b: f64| -> Result<f64> {
            let mut z = vec![0.0; d];
            z[i] += a;
            z[j] += b;
            solve_mu(law, &z)
        };
        let eps = 1e-4;
        let mut grad_fd = vec![0.0; d];
        for i in 0..d {
            grad_fd[i] = (at(i, eps, i, 0.0)? - at(i, -eps, i, 0.0)?) / (2.0 * eps);
        }
        let e2 = 1e-3;
        let mut hess_fd = vec![vec![0.0; d]; d];
        for i in 0..d {
            for j in 0..d {
                hess_fd[i][j] = (at(i, e2, j, e2)? - at(i, e2, j, -e2)? - at(i, -e2, j, e2)? + at(i, -e2, j, -e2)?) / (4.0 * e2 * e2);
            }
        }
        let grad_moment = law.drift();
        let hess_moment = law.hessian();
        let grad_gap = grad_moment.iter().zip(&grad_fd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let mut hess_gap = 0.0f64;
        let mut hess_asymmetry = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                hess_gap = hess_gap.max((hess_moment[i][j] - hess_fd[i][j]).abs());
                hess_asymmetry = hess_asymmetry.max((hess_moment[i][j] - hess_moment[j][i]).abs());
            }
        }
        let hess_positive_definite = is_positive_definite(&hess_moment);
        Ok(MuDerivatives { mu0, grad_moment, grad_fd, grad_gap, hess_moment, hess_fd, hess_gap, hess_asymmetry, hess_positive_definite })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RenewalAsymptotics {
    pub kappa: f64,
    pub limit: f64,
    /// `t_n = sum_x t_{x,n}` for `n = 0..=n_range`.
    pub t_n: Vec<f64>,
    /// `t_n - 1/kappa`, computed directly.
    pub gap: Vec<f64>,
    /// `N`: the fit runs over `N/2..=N`.
    pub fit_range: usize,
    /// Fitted decay rate of `|t_n - 1/kappa|` over the upper half of the range;
    /// `None` when the gap vanishes there.
    pub tail_rate: Option<f64>,
    pub tail_r2: Option<f64>,
    pub v: Vec<f64>,
    pub xi_inv: Vec<Vec<f64>>,
    pub derivatives: MuDerivatives,
}

/// Gaps `|t_n - 1/kappa|` below this are treated as round-off.
pub const GAP_FLOOR: f64 = 1e-14;

/// `t_n` by the renewal recursion, `kappa = E M` and the `mu`-derivatives.
///
/// The exponential fit uses the upper half of `1..=N`, where `N` is given
/// by `n_range` or, when `None`, is the last length below `8 max M` (at
/// least 64) whose gap still exceeds [`GAP_FLOOR`].
pub fn renewal_limit(law: &EffectiveStepLaw, n_range: Option<usize>) -> Result<RenewalAsymptotics> {
    if (law.total - 1.0).abs() > 1e-6 {
        return Err(Error::Precondition(format!("step law is not normalized (total {})", law.total)));
    }
    let fm: Vec<f64> = law.length_marginal().iter().map(|p| p / law.total).collect();
    let cap = n_range.unwrap_or((8 * law.max_len()).max(64));
    let kappa: f64 = fm.iter().enumerate().map(|(m, p)| m as f64 * p).sum();
    let limit = 1.0 / kappa;
    // g_n = t_n - 1/kappa obeys g_n = sum_m f_m g_{n-m} - P(M > n) / kappa,
    // which keeps its relative precision as g_n decays
    let mut tail = vec![0.0; fm.len() + 1];
    for m in (0..fm.len()).rev() {
        tail[m] = tail[m + 1] + if m + 1 < fm.len() { fm[m + 1] } else { 0.0 };
    }
    let mut g = vec![1.0 - limit];
    for n in 1..=cap {
        let s: f64 = (1..=n.min(fm.len() - 1)).map(|m| fm[m] * g[n - m]).sum();
        g.push(s - tail.get(n).copied().unwrap_or(0.0) * limit);
    }
    let t: Vec<f64> = g.iter().map(|x| x + limit).collect();
    let n_fit = match n_range {
        Some(n) => n,
        None => (1..=cap).rev().find(|&n| g[n].abs() > GAP_FLOOR).unwrap_or(0),
    };
    let upper: Vec<(f64, f64)> = (n_fit.div_ceil(2).max(1)..=n_fit)
        .map(|n| (n as f64, g[n].abs()))
        .filter(|(_, g)| *g > 0.0)
        .collect();
    let (tail_rate, tail_r2) = if upper.len() >= 3 {
        let xs: Vec<f64> = upper.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = upper.iter().map(|p| p.1.ln()).collect();
        let fit = fit_line(&xs, &ys)?;
        (Some(-fit.slope), Some(fit.r2))
    } else {
        (None, None)
    };
    // a degenerate law has a singular Hessian; it is reported, not refused
    let derivatives = MuDerivatives::compute(law)?;
    Ok(RenewalAsymptotics {
        kappa,
        limit,
        t_n: t,
        gap: g,
        fit_range: n_fit,
        tail_rate,
        tail_r2,
        v: derivatives.grad_moment.clone(),
        xi_inv: derivatives.hess_moment.clone(),
        derivatives,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CltRow {
    pub n: usize,
    pub t_n: f64,
    pub mean: Vec<f64>,
    /// `|mean - n v|`.
    pub lln_gap: f64,
    /// `|mean - n v| / |n v|`.
    pub lln_relative_gap: f64,
    /// `sup_alpha |S_n(alpha)/t_n - exp(-alpha.Xi^{-1} alpha/2)|`.
    pub clt_sup_gap: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CltReport {
    pub v: Vec<f64>,
    pub xi_inv: Vec<Vec<f64>>,
    pub rows: Vec<CltRow>,
    /// `max_n |mean_n - n v|`, the fitted LLN constant.
    pub lln_constant: f64,
    pub clt_decreasing: bool,
}

/// Exact `t_{x,n}` by convolution of the step law, compared with the LLN
/// and with the Gaussian characteristic function of `(X - n v)/sqrt(n)`.
pub fn annealed_lln_clt_check(law: &EffectiveStepLaw, ns: &[usize], alphas: &[Vec<f64>]) -> Result<CltReport> {
    let nmax = ns.iter().copied().max().ok_or_else(|| Error::InvalidParameter("empty n-grid".into()))?;
    let der = MuDerivatives::compute(law)?;
    if !der.hess_positive_definite {
        return Err(Error::IdentityViolation(format!("Hess mu(0) = {:?} is not positive definite", der.hess_moment)));
    }
    let (v, xi) = (der.grad_moment.clone(), der.hess_moment.clone());
    let t = convolve_tables(&law.kernel(nmax)?, nmax)?;
    let d = law.dim;
    let mut rows = Vec::new();
    for &n in ns {
        let layer = t.layer(n);
        let tn: f64 = layer.iter().map(|e| e.1).sum();
        let mut mean = vec![0.0; d];
        for (x, w) in &layer {
            for i in 0..d {
                mean[i] += w * x.0[i] as f64 / tn;
            }
        }
        let gap = (0..d).map(|i| (mean[i] - n as f64 * v[i]).powi(2)).sum::<f64>().sqrt();
        let vn = (0..d).map(|i| (n as f64 * v[i]).powi(2)).sum::<f64>().sqrt();
        let sq = (n as f64).sqrt();
        let mut sup = 0.0f64;
        for a in alphas {
            let mut s = Complex64::new(0.0, 0.0);
            for (x, w) in &layer {
                let phase: f64 = (0..d).map(|i| a[i] * (x.0[i] as f64 - n as f64 * v[i]) / sq).sum();
                s += Complex64::from_polar(*w, phase);
            }
            let q: f64 = (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| a[i] * xi[i][j] * a[j]).sum();
            sup = sup.max((s / tn - (-0.5 * q).exp()).norm());
        }
        rows.push(CltRow { n, t_n: tn, mean, lln_gap: gap, lln_relative_gap: gap / vn, clt_sup_gap: sup });
    }
    let lln_constant = rows.iter().map(|r| r.lln_gap).fold(0.0, f64::max);
    let clt_decreasing = rows.windows(2).all(|w| w[1].clt_sup_gap < w[0].clt_sup_gap);
    Ok(CltReport { v, xi_inv: xi, rows, lln_constant, clt_decreasing })
}

/// `I(u) = sup_z [z.u - mu(z)]` by Newton on `grad mu(z) = u`.
pub fn legendre_rate(law: &EffectiveStepLaw, u: &[f64]) -> Result<f64> {
    let d = law.dim;
    let mut z = vec![0.0; d];
    for _ in 0..200 {
        let mu = solve_mu(law, &z)?;
        let (g, h) = law.tilted(&z, mu);
        let r: Vec<f64> = (0..d).map(|i| g[i] - u[i]).collect();
        if r.iter().all(|x| x.abs() < 1e-12) {
            return Ok(z.iter().zip(u).map(|(a, b)| a * b).sum::<f64>() - mu);
        }
        let step = solve_linear(&h, &r)?;
        let mut scale = 1.0;
        let norm0: f64 = r.iter().map(|x| x * x).sum();
        loop {
            let trial: Vec<f64> = (0..d).map(|i| z[i] - scale * step[i]).collect();
            let ok = solve_mu(law, &trial).map(|m| {
                let (g2, _) = law.tilted(&trial, m);
                (0..d).map(|i| (g2[i] - u[i]).powi(2)).sum::<f64>() < norm0
            });
            if matches!(ok, Ok(true)) || scale < 1e-6 {
                z = trial;
                break;
            }
            scale *= 0.5;
        }
    }
    Err(Error::NoConvergence(format!("Legendre transform at u = {u:?}")))
}

#[derive(Clone, Debug, Serialize)]
pub struct LocalLimitPoint {
    pub x: Vec<i32>,
    pub u: Vec<f64>,
    pub rate: f64,
    /// `t_{x,n} n^{d/2} e^{n I(x/n)}`.
    pub g: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LocalLimitReport {
    pub n: usize,
    pub radius: i32,
    pub points: Vec<LocalLimitPoint>,
    pub g_at_v: f64,
    /// `max G / min G` over the neighborhood.
    pub flatness: f64,
    /// Max relative change of `G` under `x_2 -> -x_2` (d >= 2).
    pub transverse_asymmetry: Option<f64>,
}

/// Implied prefactor `G(u)` of the local limit theorem on the lattice
/// points within `radius` (sup norm) of `n v` that carry weight.
pub fn local_limit_check(law: &EffectiveStepLaw, n: usize, radius: i32) -> Result<LocalLimitReport> {
    let t = convolve_tables(&law.kernel(n)?, n)?;
    local_limit_from(law, &t, n, radius)
}

pub(crate) fn local_limit_from(law: &EffectiveStepLaw, t: &KernelTable, n: usize, radius: i32) -> Result<LocalLimitReport> {
    let d = law.dim;
    let v = law.drift();
    let center: Vec<i32> = v.iter().map(|c| (c * n as f64).round() as i32).collect();
    let layer: BTreeMap<Site, f64> = t.layer(n).into_iter().collect();
    let mut points = Vec::new();
    let mut offsets = vec![vec![]];
    for _ in 0..d {
        offsets = offsets.into_iter().flat_map(|o: Vec<i32>| (-radius..=radius).map(move |k| [o.clone(), vec![k]].concat())).collect();
    }
    for off in offsets {
        let coords: Vec<i32> = (0..d).map(|i| center[i] + off[i]).collect();
        let x = Site::new(&coords);
        if (x.l1() as usize) > n {
            return Err(Error::InvalidParameter(format!("neighborhood point {coords:?} lies outside the support")));
        }
        let Some(&w) = layer.get(&x) else { continue };
        if w <= 0.0 {
            continue;
        }
        let u: Vec<f64> = coords.iter().map(|&c| c as f64 / n as f64).collect();
        let rate = legendre_rate(law, &u)?;
        let g = w * (n as f64).powf(d as f64 / 2.0) * (n as f64 * rate).exp();
        points.push(LocalLimitPoint { x: coords, u, rate, g });
    }
    if points.is_empty() {
        return Err(Error::InvalidParameter("no weighted lattice points near n v".into()));
    }
    let gmax = points.iter().map(|p| p.g).fold(0.0, f64::max);
    let gmin = points.iter().map(|p| p.g).fold(f64::INFINITY, f64::min);
    let near = points
        .iter()
        .min_by(|a, b| {
            let da: f64 = a.u.iter().zip(&v).map(|(x, y)| (x - y).powi(2)).sum();
            let db: f64 = b.u.iter().zip(&v).map(|(x, y)| (x - y).powi(2)).sum();
            da.total_cmp(&db)
        })
        .unwrap()
        .g;
    let transverse_asymmetry = (d >= 2).then(|| {
        let by: BTreeMap<Vec<i32>, f64> = points.iter().map(|p| (p.x.clone(), p.g)).collect();
        by.iter()
            .filter_map(|(x, g)| {
                let mut m = x.clone();
                m[1] = -m[1];
                by.get(&m).map(|g2| (g - g2).abs() / g.max(*g2))
            })
            .fold(0.0, f64::max)
    });
    Ok(LocalLimitReport { n, radius, points, g_at_v: near, flatness: gmax / gmin, transverse_asymmetry })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_fixture_moments() {
        let law = EffectiveStepLaw::geometric(1, 0.4, 60).unwrap();
        assert!((law.mean_m - 5.0 / 3.0).abs() < 1e-12);
        assert!((law.drift()[0] - 0.75).abs() < 1e-12);
        let lim = renewal_limit(&law, None).unwrap();
        assert!(lim.t_n[1..].iter().all(|t| (t - 0.6).abs() < 1e-12));
        assert!(lim.tail_rate.is_none());
    }

    #[test]
    fn degenerate_law_renews_every_step() {
        let law = EffectiveStepLaw::degenerate(2).unwrap();
        let lim = renewal_limit(&law, Some(10)).unwrap();
        assert_eq!(lim.kappa, 1.0);
        assert!(lim.t_n.iter().all(|&t| t == 1.0));
        assert!(!lim.derivatives.hess_positive_definite);
        assert!(annealed_lln_clt_check(&law, &[4], &[vec![0.1, 0.0]]).is_err());
        let t = convolve_tables(&law.kernel(5).unwrap(), 5).unwrap();
        assert_eq!(t.get(Site::new(&[5, 0]), 5), 1.0);
    }

    #[test]
    fn mu_vanishes_at_zero_and_is_convex() {
        let law = EffectiveStepLaw::geometric(2, 0.4, 40).unwrap();
        assert!(solve_mu(&law, &[0.0, 0.0]).unwrap().abs() < 1e-12);
        let m = |s: f64| solve_mu(&law, &[0.3 * s, -0.2 * s]).unwrap();
        for k in -4..4 {
            let s = k as f64 * 0.25;
            assert!(m(s) + m(s + 0.5) >= 2.0 * m(s + 0.25) - 1e-12);
        }
        let z = [Complex64::new(0.0, 0.3), Complex64::new(0.0, -0.1)];
        let mc = solve_mu_complex(&law, &z).unwrap();
        let back: Complex64 = law
            .atoms
            .iter()
            .map(|(y, m, p)| (z[0] * y.0[0] as f64 + z[1] * y.0[1] as f64 - mc * *m as f64).exp() * *p)
            .sum();
        assert!((back - 1.0).norm() < 1e-10);
    }
}
