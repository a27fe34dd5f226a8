//! Transfer-matrix recursion for quenched partition functions.
//!
//! `Z_n(x) = sum_e Z_{n-1}(x - e) exp(h.e - lambda - beta V(x)) / 2d`
//! is iterated on a box padded with one layer of zero-weight cells
//! (absorbing boundary). Each layer is rescaled to max 1 and the log of the
//! scale is carried separately, so lengths in the thousands are fine.

use serde::Serialize;

use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::lattice::{Grid, LatticeBox, Site};
use crate::numerics::LogSum;
use crate::path::WeightParams;

pub(crate) struct Transfer {
    pub grid: Grid,
    pub interior: Vec<usize>,
    /// Interior cells next to the padding, with the summed direction
    /// factors of the steps that leave the box.
    edge: Vec<(usize, f64)>,
    site: Vec<f64>,
    base: f64,
    dir: Vec<f64>,
    offs: Vec<isize>,
}

impl Transfer {
    pub fn new(env: &Environment, p: &WeightParams, bx: LatticeBox) -> Result<Transfer> {
        p.validate()?;
        let dim = p.dim();
        if env.dim() != dim || bx.dim != dim {
            return Err(Error::InvalidParameter("dimension mismatch between h, box and environment".into()));
        }
        if !env.bounds().contains_box(&bx) {
            return Err(Error::InvalidParameter(format!(
                "DP box {} exceeds environment box {}",
                bx.to_spec(),
                env.bounds().to_spec()
            )));
        }
        let grid = Grid::new(bx);
        let mut site = vec![0.0; grid.len()];
        let base = (-p.lambda).exp() / (2 * dim) as f64;
        let interior = grid.interior_indices();
        for &i in &interior {
            let v = env.value(grid.site(i))?;
            site[i] = if p.beta == 0.0 {
                base
            } else if v == f64::INFINITY {
                0.0
            } else {
                base * (-p.beta * v).exp()
            };
        }
        let dir: Vec<f64> = (0..2 * dim).map(|k| crate::lattice::unit_step(k).dot(&p.h).exp()).collect();
        let offs: Vec<isize> = (0..2 * dim).map(|k| grid.step_offset(k)).collect();
        let mut edge = Vec::new();
        for &x in &interior {
            let s = grid.site(x);
            if bx.on_boundary(s) {
                let out: f64 = (0..2 * dim)
                    .filter(|&k| !bx.contains(s + crate::lattice::unit_step(k)))
                    .map(|k| dir[k])
                    .sum();
                edge.push((x, out));
            }
        }
        Ok(Transfer { grid, interior, edge, site, base, dir, offs })
    }

    pub fn zero_layer(&self) -> Vec<f64> {
        vec![0.0; self.grid.len()]
    }

    /// `next[x] = site[x] sum_k dir[k] cur[x - e_k]`; returns the max entry.
    pub fn forward(&self, cur: &[f64], next: &mut [f64]) -> f64 {
        let mut m = 0.0f64;
        let nd = self.dir.len();
        for &x in &self.interior {
            let mut acc = 0.0;
            for k in 0..nd {
                acc += self.dir[k] * cur[(x as isize - self.offs[k]) as usize];
            }
            let v = self.site[x] * acc;
            next[x] = v;
            m = m.max(v);
        }
        m
    }

    /// `next[z] = sum_k dir[k] site[z + e_k] cur[z + e_k]`: sums over paths ending at a fixed site.
    pub fn backward(&self, cur: &[f64], next: &mut [f64]) -> f64 {
        let mut m = 0.0f64;
        let nd = self.dir.len();
        for &z in &self.interior {
            let mut acc = 0.0;
            for k in 0..nd {
                let y = (z as isize + self.offs[k]) as usize;
                acc += self.dir[k] * self.site[y] * cur[y];
            }
            next[z] = acc;
            m = m.max(acc);
        }
        m
    }

    /// Mass that one more forward step would push into the padding layer,
    /// charged with the potential-free site factor (an upper bound).
    pub fn leaving_mass(&self, cur: &[f64]) -> f64 {
        self.edge.iter().map(|&(x, out)| cur[x] * out).sum::<f64>() * self.base
    }

    /// Largest factor by which one step can grow the total mass.
    pub fn growth_bound(&self) -> f64 {
        self.base * self.dir.iter().sum::<f64>()
    }
}

/// Which measure a table describes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum TableKind {
    Quenched { dist: String, seed: u64 },
    Annealed { dist: String },
}

/// Log-domain table of `Z_n(x)` for `x` in a box and `n <= nmax`.
#[derive(Clone, Debug)]
pub struct PartitionTable {
    pub kind: TableKind,
    pub params: WeightParams,
    pub bx: LatticeBox,
    pub nmax: usize,
    /// `layers[n][box index]`, `-inf` for zero.
    pub layers: Vec<Vec<f64>>,
    /// Log of the mass absorbed at the boundary when stepping from layer `n`.
    pub boundary_log_mass: Vec<f64>,
}

impl PartitionTable {
    pub fn log_value(&self, x: Site, n: usize) -> Option<f64> {
        if n > self.nmax {
            return None;
        }
        self.bx.index(x).map(|i| self.layers[n][i])
    }

    pub fn is_truncated(&self, x: Site) -> bool {
        self.bx.on_boundary(x)
    }

    /// `log sum_x Z_n(x)`.
    pub fn log_total(&self, n: usize) -> f64 {
        let mut acc = LogSum::new();
        self.layers[n].iter().for_each(|&v| acc.add(v));
        acc.value()
    }

    /// All finite entries as `(n, x, log value, truncated)`.
    pub fn entries(&self) -> Vec<(usize, Site, f64, bool)> {
        let mut out = Vec::new();
        for (n, layer) in self.layers.iter().enumerate() {
            for (i, &v) in layer.iter().enumerate() {
                if v > f64::NEG_INFINITY {
                    let s = self.bx.site(i);
                    out.push((n, s, v, self.bx.on_boundary(s)));
                }
            }
        }
        out
    }
}

/// Options for [`quenched_dp`].
#[derive(Clone, Debug)]
pub struct DpOptions {
    /// Defaults to the cube of radius `nmax + 2`, which no path can leave.
    pub bx: Option<LatticeBox>,
    /// Maximal tolerated absorbed-mass fraction.
    pub boundary_tol: f64,
}

impl Default for DpOptions {
    fn default() -> Self {
        DpOptions { bx: None, boundary_tol: 1e-12 }
    }
}

/// Quenched partition functions `Q_{lambda,h,n}(x)` by the transfer recursion.
pub fn quenched_dp(env: &Environment, p: &WeightParams, nmax: usize, opts: &DpOptions) -> Result<PartitionTable> {
    let bx = match opts.bx {
        Some(b) => b,
        None => LatticeBox::centered(p.dim(), nmax as i32 + 2)?,
    };
    if !bx.contains(Site::ORIGIN) {
        return Err(Error::InvalidParameter("DP box must contain the origin".into()));
    }
    let tr = Transfer::new(env, p, bx)?;
    let mut cur = tr.zero_layer();
    cur[tr.grid.index(Site::ORIGIN).unwrap()] = 1.0;
    let mut offset = 0.0f64;
    let mut next = tr.zero_layer();
    let mut layers = Vec::with_capacity(nmax + 1);
    let mut boundary = Vec::with_capacity(nmax + 1);
    let mut absorbed = LogSum::new();
    let extract = |cur: &[f64], offset: f64| -> Vec<f64> {
        bx.sites()
            .map(|s| {
                let v = cur[tr.grid.index(s).unwrap()];
                if v > 0.0 {
                    v.ln() + offset
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect()
    };
    for n in 0..=nmax {
        layers.push(extract(&cur, offset));
        let leave = tr.leaving_mass(&cur);
        let lb = if leave > 0.0 { leave.ln() + offset } else { f64::NEG_INFINITY };
        boundary.push(lb);
        if n == nmax {
            break;
        }
        absorbed.add(lb);
        let m = tr.forward(&cur, &mut next);
        std::mem::swap(&mut cur, &mut next);
        if m > 0.0 {
            for &i in &tr.interior {
                cur[i] /= m;
            }
            offset += m.ln();
        }
        let kept = {
            let mut acc = LogSum::new();
            for &i in &tr.interior {
                if cur[i] > 0.0 {
                    acc.add(cur[i].ln() + offset);
                }
            }
            acc.value()
        };
        if !absorbed.is_empty() {
            let frac = (absorbed.value() - crate::numerics::log_add(kept, absorbed.value())).exp();
            if frac > opts.boundary_tol {
                return Err(Error::BoxTooSmall { fraction: frac, tolerance: opts.boundary_tol });
            }
        }
    }
    Ok(PartitionTable {
        kind: TableKind::Quenched { dist: env.dist().to_string(), seed: env.seed() },
        params: p.clone(),
        bx,
        nmax,
        layers,
        boundary_log_mass: boundary,
    })
}

/// Output of a conjugate (all-lengths) sum.
#[derive(Clone, Debug, Serialize)]
pub struct ConjugateResult {
    /// `log Q_lambda(x)` for each requested target, in request order.
    pub targets: Vec<(Site, f64)>,
    /// Number of length layers summed.
    pub layers_used: usize,
    /// The a-priori cutoff `ceil(-log(tol)/lambda) + |x|_1` for the farthest target.
    pub spec_cutoff: usize,
    /// Log of `exp(-lambda (n+1)) / (1 - exp(-lambda))` at the layer actually used.
    pub log_tail_bound: f64,
    /// Log of the total mass absorbed by the box boundary.
    pub log_boundary_mass: f64,
    pub bx: LatticeBox,
}

/// Default box for conjugate sums towards `targets`.
pub fn conjugate_box(dim: usize, targets: &[Site]) -> Result<LatticeBox> {
    let reach = targets.iter().map(|t| t.l1()).max().unwrap_or(0);
    let margin = 8 + (4.0 * (reach as f64).sqrt()).ceil() as i32;
    let mut pts = targets.to_vec();
    pts.push(Site::ORIGIN);
    LatticeBox::bounding(dim, &pts, margin)
}

/// `Q_lambda(x) = sum_n Q_{lambda,n}(x)` for several targets at once.
///
/// The series is summed at least up to the a-priori cutoff and further until,
/// for every reachable target, the last two layers contribute less than
/// `tol` relative to the running sum (two layers because of parity).
pub fn conjugate_green(
    env: &Environment,
    p: &WeightParams,
    targets: &[Site],
    bx: LatticeBox,
    tol: f64,
) -> Result<ConjugateResult> {
    if !(p.lambda > 0.0) {
        return Err(Error::InvalidParameter("conjugate sums need lambda > 0".into()));
    }
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::InvalidParameter("tolerance must lie in (0, 1)".into()));
    }
    let tr = Transfer::new(env, p, bx)?;
    let idx: Vec<usize> = targets
        .iter()
        .map(|t| {
            tr.grid
                .index(*t)
                .filter(|&i| tr.grid.is_interior(i))
                .ok_or_else(|| Error::OutsideBox(t.0.to_vec()))
        })
        .collect::<Result<_>>()?;
    let far = targets.iter().map(|t| t.l1()).max().unwrap_or(0) as usize;
    let spec_cutoff = (-tol.ln() / p.lambda).ceil() as usize + far;
    let max_layers = 50 * spec_cutoff.max(10);
    let mut cur = tr.zero_layer();
    cur[tr.grid.index(Site::ORIGIN).ok_or_else(|| Error::OutsideBox(vec![0]))?] = 1.0;
    let mut next = tr.zero_layer();
    let mut offset = 0.0f64;
    let mut acc = vec![LogSum::new(); targets.len()];
    let mut last = vec![f64::NEG_INFINITY; targets.len()];
    let mut absorbed = LogSum::new();
    let log_tol = tol.ln();
    let mut n = 0usize;
    loop {
        let mut done = n >= spec_cutoff;
        for (j, &i) in idx.iter().enumerate() {
            let v = if cur[i] > 0.0 { cur[i].ln() + offset } else { f64::NEG_INFINITY };
            acc[j].add(v);
            let recent = crate::numerics::log_add(v, last[j]);
            last[j] = v;
            if !acc[j].is_empty() && recent - acc[j].value() > log_tol {
                done = false;
            }
        }
        let leave = tr.leaving_mass(&cur);
        if leave > 0.0 {
            absorbed.add(leave.ln() + offset);
        }
        if done {
            break;
        }
        if n >= max_layers {
            return Err(Error::NoConvergence(format!("conjugate sum not settled after {n} layers")));
        }
        let m = tr.forward(&cur, &mut next);
        std::mem::swap(&mut cur, &mut next);
        n += 1;
        if m == 0.0 {
            break;
        }
        for &i in &tr.interior {
            cur[i] /= m;
        }
        offset += m.ln();
    }
    let log_tail_bound = -p.lambda * (n as f64 + 1.0) - (-(-p.lambda).exp_m1()).ln();
    Ok(ConjugateResult {
        targets: targets.iter().zip(&acc).map(|(t, a)| (*t, a.value())).collect(),
        layers_used: n,
        spec_cutoff,
        log_tail_bound,
        log_boundary_mass: absorbed.value(),
        bx,
    })
}

/// Log Green's function `log sum_{paths start -> y} w` for every `y` of `bx`
/// (forward), or `log sum_{paths y -> start} w` (backward). Paths of length 0
/// are included. Entries are in box order.
pub fn green_table(
    env: &Environment,
    p: &WeightParams,
    start: Site,
    bx: LatticeBox,
    tol: f64,
    backward: bool,
) -> Result<Vec<f64>> {
    if !(p.lambda > 0.0) {
        return Err(Error::InvalidParameter("Green's functions need lambda > 0".into()));
    }
    let tr = Transfer::new(env, p, bx)?;
    let s = tr.grid.index(start).filter(|&i| tr.grid.is_interior(i)).ok_or_else(|| Error::OutsideBox(start.0.to_vec()))?;
    let mut cur = tr.zero_layer();
    cur[s] = 1.0;
    let mut next = tr.zero_layer();
    let mut offset = 0.0;
    let mut acc = vec![LogSum::new(); tr.grid.len()];
    let log_tol = tol.ln();
    let min_layers = (-tol.ln() / p.lambda).ceil() as usize;
    let r = tr.growth_bound();
    if r >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "per-step mass growth {r} >= 1: the Green's function diverges"
        )));
    }
    let log_geom = r.ln() - (1.0 - r).ln();
    let mut n = 0usize;
    let mut total_acc = LogSum::new();
    loop {
        let mut layer_total = LogSum::new();
        for &i in &tr.interior {
            if cur[i] > 0.0 {
                let v = cur[i].ln() + offset;
                acc[i].add(v);
                layer_total.add(v);
            }
        }
        total_acc.merge(&layer_total);
        if layer_total.is_empty() {
            break;
        }
        // All later layers together carry at most layer_total * r / (1 - r).
        if n >= min_layers && layer_total.value() + log_geom - total_acc.value() < log_tol {
            break;
        }
        let m = if backward { tr.backward(&cur, &mut next) } else { tr.forward(&cur, &mut next) };
        std::mem::swap(&mut cur, &mut next);
        n += 1;
        if m == 0.0 {
            break;
        }
        for &i in &tr.interior {
            cur[i] /= m;
        }
        offset += m.ln();
    }
    Ok(bx.sites().map(|y| acc[tr.grid.index(y).unwrap()].value()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::PotentialDistribution;

    #[test]
    fn free_walk_mass_is_one() {
        let env = Environment::zero(LatticeBox::centered(2, 12).unwrap());
        let p = WeightParams::new(0.0, 0.0, vec![0.0, 0.0]).unwrap();
        let t = quenched_dp(&env, &p, 10, &DpOptions::default()).unwrap();
        for n in 0..=10 {
            assert!(t.log_total(n).abs() < 1e-13);
        }
    }

    #[test]
    fn small_box_is_detected() {
        let env = Environment::zero(LatticeBox::centered(1, 30).unwrap());
        let p = WeightParams::new(0.0, 0.0, vec![0.0]).unwrap();
        let opts = DpOptions { bx: Some(LatticeBox::centered(1, 3).unwrap()), boundary_tol: 1e-12 };
        assert!(matches!(quenched_dp(&env, &p, 10, &opts), Err(Error::BoxTooSmall { .. })));
    }

    #[test]
    fn one_dimensional_green_function_closed_form() {
        // G(N) = F^N / sqrt(1 - u^2) for the killed simple walk, u = e^{-lambda}.
        let lambda = 0.7f64;
        let u = (-lambda).exp();
        let f = (1.0 - (1.0 - u * u).sqrt()) / u;
        let env = Environment::zero(LatticeBox::centered(1, 120).unwrap());
        let p = WeightParams::new(0.0, lambda, vec![0.0]).unwrap();
        let targets: Vec<Site> = [0, 3, 10].iter().map(|&x| Site::new(&[x])).collect();
        let r = conjugate_green(&env, &p, &targets, LatticeBox::centered(1, 120).unwrap(), 1e-14).unwrap();
        for (t, v) in &r.targets {
            let want = t.0[0] as f64 * f.ln() - 0.5 * (1.0 - u * u).ln();
            assert!((v - want).abs() < 1e-10, "{t:?}: {v} vs {want}");
        }
        let g = green_table(&env, &p, Site::ORIGIN, LatticeBox::centered(1, 120).unwrap(), 1e-14, false).unwrap();
        let i = LatticeBox::centered(1, 120).unwrap().index(Site::new(&[10])).unwrap();
        assert!((g[i] - r.targets[2].1).abs() < 1e-10);
    }

    #[test]
    fn traps_block_paths() {
        let d = PotentialDistribution::new(
            crate::environment::DistKind::Discrete { atoms: vec![(0.0, 0.5), (f64::INFINITY, 0.5)] },
            true,
            false,
        )
        .unwrap();
        let env = Environment::sample(&d, LatticeBox::centered(2, 8).unwrap(), 3).unwrap();
        let p = WeightParams::new(1.0, 0.0, vec![0.0, 0.0]).unwrap();
        let t = quenched_dp(&env, &p, 6, &DpOptions::default()).unwrap();
        for s in LatticeBox::centered(2, 8).unwrap().sites() {
            if env.value(s).unwrap().is_infinite() {
                for n in 1..=6 {
                    assert_eq!(t.log_value(s, n).unwrap(), f64::NEG_INFINITY);
                }
            }
        }
    }
}
