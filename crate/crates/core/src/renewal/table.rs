//! Exact tables of cone-confined (`t`) and irreducible (`f`) weights.
//!
//! Weights are stored in the log domain at `lambda = 0, h = 0` and shifted
//! by `h.x - lambda n` on demand, so recalibrating `lambda` never touches
//! the enumeration.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::coarse::{ConeLookup, ConeTracker};
use crate::ensembles::{check_cap, Ensemble, Walker};
use crate::environment::PotentialDistribution;
use crate::error::{Error, Result};
use crate::lattice::{unit_step, LatticeBox, Site};
use crate::numerics::{bisect, LogSum};
use crate::path::WeightParams;

use super::quenched::{ConeShapes, Shape};

/// Where a table's weights come from.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum TableSource {
    Annealed { dist: String },
    Quenched { dist: String, seed: u64, start: Vec<i32> },
}

/// Log weights of `(x, n)` at `lambda = 0, h = 0`; `-inf` for zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Entry {
    pub log_f: f64,
    pub log_t: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IrreducibleTable {
    pub source: TableSource,
    pub dim: usize,
    pub beta: f64,
    pub h: Vec<f64>,
    pub lambda: f64,
    pub delta: f64,
    /// Mass at which the cone norm was frozen.
    pub cone_lambda: f64,
    pub nmax: usize,
    pub entries: BTreeMap<(Site, usize), Entry>,
}

impl IrreducibleTable {
    fn shift(&self, x: Site, n: usize) -> f64 {
        x.dot(&self.h) - self.lambda * n as f64
    }

    /// `log f_{x,n}` at the table's `(lambda, h)`.
    pub fn log_f(&self, x: Site, n: usize) -> f64 {
        self.entries.get(&(x, n)).map_or(f64::NEG_INFINITY, |e| e.log_f + self.shift(x, n))
    }

    pub fn log_t(&self, x: Site, n: usize) -> f64 {
        self.entries.get(&(x, n)).map_or(f64::NEG_INFINITY, |e| e.log_t + self.shift(x, n))
    }

    pub fn with_lambda(&self, lambda: f64) -> IrreducibleTable {
        IrreducibleTable { lambda, ..self.clone() }
    }

    /// `log sum_x f_{x,n}` for `n = 0..=nmax`.
    pub fn log_f_marginal(&self) -> Vec<f64> {
        self.log_f_marginal_base().iter().enumerate().map(|(n, v)| v - self.lambda * n as f64).collect()
    }

    fn log_f_marginal_base(&self) -> Vec<f64> {
        let mut acc = vec![LogSum::new(); self.nmax + 1];
        for (&(x, n), e) in &self.entries {
            acc[n].add(e.log_f + x.dot(&self.h));
        }
        acc.iter().map(LogSum::value).collect()
    }

    pub fn sum_f(&self) -> f64 {
        self.log_f_marginal().iter().map(|v| v.exp()).sum()
    }

    /// Linear `f` and `t` at the table's parameters, `t_{0,0} = 1`.
    pub fn kernels(&self) -> Result<(KernelTable, KernelTable)> {
        let mut f = KernelTable::new(self.dim, self.nmax)?;
        let mut t = KernelTable::new(self.dim, self.nmax)?;
        for (&(x, n), e) in &self.entries {
            let s = self.shift(x, n);
            f.add(x, n, (e.log_f + s).exp());
            t.add(x, n, (e.log_t + s).exp());
        }
        Ok((f, t))
    }

    /// Max over `(x, n)` of `|t - sum_{m<n} t_m * f_{n-m}|`, divided by `max t`.
    pub fn renewal_residual(&self) -> Result<f64> {
        let (f, t) = self.kernels()?;
        let conv = convolve_tables(&f, self.nmax)?;
        Ok(conv.max_abs_diff(&t) / t.max_abs())
    }

    /// Text form: a `#` header echoing the parameters, then one line
    /// `x1..xd n log_f log_t` per entry with `lambda = 0, h = 0` weights.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# irreducible-table v1 weights=base\n");
        match &self.source {
            TableSource::Annealed { dist } => writeln!(out, "# source=annealed dist={dist}").unwrap(),
            TableSource::Quenched { dist, seed, start } => {
                writeln!(out, "# source=quenched dist={dist} seed={seed} start={}", join(start)).unwrap()
            }
        }
        writeln!(
            out,
            "# dim={} beta={} lambda={} delta={} cone_lambda={} nmax={} h={}",
            self.dim,
            self.beta,
            self.lambda,
            self.delta,
            self.cone_lambda,
            self.nmax,
            join(&self.h)
        )
        .unwrap();
        for (&(x, n), e) in &self.entries {
            writeln!(out, "{} {n} {} {}", x.coords(self.dim).iter().map(i32::to_string).collect::<Vec<_>>().join(" "), e.log_f, e.log_t)
                .unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<IrreducibleTable> {
        let bad = |m: &str| Error::Parse(format!("irreducible table: {m}"));
        let mut kv: BTreeMap<String, String> = BTreeMap::new();
        let mut body = Vec::new();
        for line in text.lines() {
            if let Some(rest) = line.strip_prefix('#') {
                for tok in rest.split_whitespace() {
                    if let Some((k, v)) = tok.split_once('=') {
                        kv.insert(k.to_string(), v.to_string());
                    }
                }
            } else if !line.trim().is_empty() {
                body.push(line);
            }
        }
        let get = |k: &str| kv.get(k).ok_or_else(|| bad(&format!("missing `{k}`")));
        let num = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|_| bad(&format!("bad `{k}`"))) };
        let dim: usize = get("dim")?.parse().map_err(|_| bad("bad dim"))?;
        let nmax: usize = get("nmax")?.parse().map_err(|_| bad("bad nmax"))?;
        let h = split_nums(get("h")?).ok_or_else(|| bad("bad h"))?;
        let source = match get("source")?.as_str() {
            "annealed" => TableSource::Annealed { dist: get("dist")?.clone() },
            "quenched" => TableSource::Quenched {
                dist: get("dist")?.clone(),
                seed: get("seed")?.parse().map_err(|_| bad("bad seed"))?,
                start: get("start")?.split(',').map(|s| s.parse().map_err(|_| bad("bad start"))).collect::<Result<_>>()?,
            },
            _ => return Err(bad("unknown source")),
        };
        let mut entries = BTreeMap::new();
        for line in body {
            let tok: Vec<&str> = line.split_whitespace().collect();
            if tok.len() != dim + 3 {
                return Err(bad(&format!("line `{line}` has {} fields", tok.len())));
            }
            let coords: Vec<i32> = tok[..dim].iter().map(|s| s.parse().map_err(|_| bad("bad coordinate"))).collect::<Result<_>>()?;
            let n: usize = tok[dim].parse().map_err(|_| bad("bad length"))?;
            let log_f: f64 = tok[dim + 1].parse().map_err(|_| bad("bad log_f"))?;
            let log_t: f64 = tok[dim + 2].parse().map_err(|_| bad("bad log_t"))?;
            entries.insert((Site::new(&coords), n), Entry { log_f, log_t });
        }
        Ok(IrreducibleTable {
            source,
            dim,
            beta: num("beta")?,
            h,
            lambda: num("lambda")?,
            delta: num("delta")?,
            cone_lambda: num("cone_lambda")?,
            nmax,
            entries,
        })
    }
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn split_nums(s: &str) -> Option<Vec<f64>> {
    s.split(',').map(|x| x.parse().ok()).collect()
}

/// Dense linear table over `[-nmax, nmax]^d x {0..=nmax}`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelTable {
    pub dim: usize,
    pub nmax: usize,
    bx: LatticeBox,
    data: Vec<f64>,
}

impl KernelTable {
    pub fn new(dim: usize, nmax: usize) -> Result<KernelTable> {
        let bx = LatticeBox::centered(dim, nmax as i32)?;
        Ok(KernelTable { dim, nmax, bx, data: vec![0.0; bx.len() * (nmax + 1)] })
    }

    #[inline]
    fn slot(&self, x: Site, n: usize) -> Option<usize> {
        if n > self.nmax {
            return None;
        }
        self.bx.index(x).map(|i| n * self.bx.len() + i)
    }

    pub fn get(&self, x: Site, n: usize) -> f64 {
        self.slot(x, n).map_or(0.0, |i| self.data[i])
    }

    /// Adds `v` at `(x, n)`; panics outside the table.
    pub fn add(&mut self, x: Site, n: usize, v: f64) {
        let i = self.slot(x, n).expect("kernel entry outside the table");
        self.data[i] += v;
    }

    pub fn set(&mut self, x: Site, n: usize, v: f64) {
        let i = self.slot(x, n).expect("kernel entry outside the table");
        self.data[i] = v;
    }

    /// Nonzero entries of layer `n`.
    pub fn layer(&self, n: usize) -> Vec<(Site, f64)> {
        let len = self.bx.len();
        self.data[n * len..(n + 1) * len]
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, &v)| (self.bx.site(i), v))
            .collect()
    }

    /// `sum_x` per layer.
    pub fn marginal(&self) -> Vec<f64> {
        self.data.chunks(self.bx.len()).map(|c| c.iter().sum()).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Max absolute difference over the common range of lengths.
    pub fn max_abs_diff(&self, other: &KernelTable) -> f64 {
        let n = self.nmax.min(other.nmax);
        let mut worst = 0.0f64;
        for m in 0..=n {
            for (x, v) in self.layer(m) {
                worst = worst.max((v - other.get(x, m)).abs());
            }
            for (x, v) in other.layer(m) {
                worst = worst.max((v - self.get(x, m)).abs());
            }
        }
        worst
    }

    /// Copy restricted to lengths `<= nmax`.
    pub fn truncated(&self, nmax: usize) -> Result<KernelTable> {
        let mut out = KernelTable::new(self.dim, nmax)?;
        for n in 0..=nmax.min(self.nmax) {
            for (x, v) in self.layer(n) {
                if out.bx.contains(x) {
                    out.set(x, n, v);
                }
            }
        }
        Ok(out)
    }
}

/// Renewal sums `t_{x,n} = sum_{m<n} sum_y t_{y,m} f_{x-y,n-m}` with
/// `t_{0,0} = 1`, for `n <= nmax`. Entries of `f` at length 0 are ignored.
pub fn convolve_tables(f: &KernelTable, nmax: usize) -> Result<KernelTable> {
    let mut t = KernelTable::new(f.dim, nmax)?;
    t.set(Site::ORIGIN, 0, 1.0);
    let f_layers: Vec<Vec<(Site, f64)>> = (0..=nmax).map(|n| if n == 0 || n > f.nmax { Vec::new() } else { f.layer(n) }).collect();
    let mut t_layers = vec![vec![(Site::ORIGIN, 1.0)]];
    for n in 1..=nmax {
        for m in 0..n {
            for &(y, a) in &t_layers[m] {
                for &(z, b) in &f_layers[n - m] {
                    t.add(y + z, n, a * b);
                }
            }
        }
        t_layers.push(t.layer(n));
    }
    Ok(t)
}

/// Exact annealed `f` and `t` tables by cone-pruned enumeration. With
/// `keep_shapes`, the cone-confined shapes are returned for quenched reuse.
pub fn build_irreducible_tables(
    dist: &PotentialDistribution,
    beta: f64,
    cone: &ConeLookup,
    nmax: usize,
) -> Result<IrreducibleTable> {
    Ok(enumerate_cone(dist, beta, cone, nmax, false)?.0)
}

pub(super) fn enumerate_cone(
    dist: &PotentialDistribution,
    beta: f64,
    cone: &ConeLookup,
    nmax: usize,
    keep_shapes: bool,
) -> Result<(IrreducibleTable, Option<ConeShapes>)> {
    let spec = cone.spec();
    let dim = spec.dim();
    check_cap(dim, nmax)?;
    if nmax >= 63 {
        return Err(Error::InvalidParameter("paths longer than 62 steps are not tracked".into()));
    }
    let p = WeightParams::new(beta, 0.0, vec![0.0; dim])?;
    let walker = Walker::new(Ensemble::Annealed(dist), &p, nmax, Site::ORIGIN)?;
    type Acc = BTreeMap<(Site, usize), (LogSum, LogSum)>;
    let shards = walker.walk(
        || (ConeTracker::new(), Vec::<Site>::with_capacity(nmax + 1), Acc::new(), Vec::<Shape>::new()),
        |(tr, sites, acc, shapes), node| {
            let d = node.depth;
            sites.truncate(d);
            while sites.len() <= d {
                sites.push(walker.site(node.path[sites.len()]));
            }
            tr.update(sites, d, cone);
            if !tr.last_sees_all() {
                return;
            }
            let irreducible = d >= 1 && tr.count() == 2;
            let e = acc.entry((sites[d], d)).or_insert_with(|| (LogSum::new(), LogSum::new()));
            e.1.add(node.log_w);
            if irreducible {
                e.0.add(node.log_w);
            }
            if keep_shapes && d >= 1 {
                shapes.push(Shape::from_sites(sites, irreducible));
            }
        },
        |depth, idx| depth >= 1 && !cone.forward(walker.site(idx)),
    );
    let mut acc: BTreeMap<(Site, usize), (LogSum, LogSum)> = BTreeMap::new();
    let mut shapes = Vec::new();
    for (_, _, a, s) in shards {
        for (k, (f, t)) in a {
            let e = acc.entry(k).or_insert_with(|| (LogSum::new(), LogSum::new()));
            e.0.merge(&f);
            e.1.merge(&t);
        }
        shapes.extend(s);
    }
    let entries = acc.into_iter().map(|(k, (f, t))| (k, Entry { log_f: f.value(), log_t: t.value() })).collect();
    let table = IrreducibleTable {
        source: TableSource::Annealed { dist: dist.to_string() },
        dim,
        beta,
        h: spec.h.clone(),
        lambda: 0.0,
        delta: spec.delta,
        cone_lambda: spec.lambda,
        nmax,
        entries,
    };
    let shapes = keep_shapes.then_some(ConeShapes { dim, nmax, shapes });
    Ok((table, shapes))
}

pub(super) fn step_code(d: Site) -> u64 {
    (0..2 * crate::MAX_DIM).find(|&k| unit_step(k) == d).expect("not a unit step") as u64
}

/// Result of normalizing `sum f = 1` in `lambda`.
#[derive(Clone, Debug, Serialize)]
pub struct Calibration {
    pub lambda: f64,
    pub sum_f: f64,
    /// `sum_n n f_n` over the table.
    pub kappa: f64,
    /// Geometric extrapolation of the mass of lengths beyond `nmax`.
    pub deficit_estimate: f64,
    /// Fitted ratio `f_{n+1} / f_n` near `nmax`.
    pub tail_ratio: f64,
}

/// Bisection for `lambda` with `sum_{x, n <= nmax} f_{x,n} e^{h.x - lambda n} = 1`.
/// Fails when the extrapolated truncation deficit exceeds `max_deficit`.
pub fn calibrate_lambda(table: &IrreducibleTable, tol: f64, max_deficit: f64) -> Result<(IrreducibleTable, Calibration)> {
    let base = table.log_f_marginal_base();
    if base.iter().all(|v| *v == f64::NEG_INFINITY) {
        return Err(Error::Precondition("the table has no irreducible paths".into()));
    }
    let log_sum = |lambda: f64| {
        let mut acc = LogSum::new();
        for (n, v) in base.iter().enumerate() {
            acc.add(v - lambda * n as f64);
        }
        acc.value()
    };
    let mut lo = -1.0;
    let mut hi = 1.0;
    for _ in 0..200 {
        if log_sum(lo) > 0.0 {
            break;
        }
        lo -= 2.0 * (1.0 + lo.abs());
    }
    for _ in 0..200 {
        if log_sum(hi) < 0.0 {
            break;
        }
        hi += 2.0 * (1.0 + hi.abs());
    }
    let lambda = bisect(log_sum, lo, hi, tol)?;
    let out = table.with_lambda(lambda);
    let fm: Vec<f64> = out.log_f_marginal().iter().map(|v| v.exp()).collect();
    let sum_f: f64 = fm.iter().sum();
    let kappa: f64 = fm.iter().enumerate().map(|(n, v)| n as f64 * v).sum();
    let (tail_ratio, deficit_estimate) = tail_extrapolation(&fm);
    if !(deficit_estimate <= max_deficit) {
        return Err(Error::Precondition(format!(
            "truncation deficit {deficit_estimate:e} exceeds {max_deficit:e} at nmax = {}; raise nmax",
            table.nmax
        )));
    }
    Ok((out, Calibration { lambda, sum_f, kappa, deficit_estimate, tail_ratio }))
}

fn tail_extrapolation(fm: &[f64]) -> (f64, f64) {
    let nmax = fm.len() - 1;
    let pts: Vec<(usize, f64)> = (nmax.saturating_sub(3).max(1)..=nmax).filter(|&n| fm[n] > 0.0).map(|n| (n, fm[n])).collect();
    if pts.len() < 2 {
        return if fm[nmax] == 0.0 { (0.0, 0.0) } else { (f64::INFINITY, f64::INFINITY) };
    }
    let (n0, a) = pts[0];
    let (n1, b) = pts[pts.len() - 1];
    let r = (b / a).powf(1.0 / (n1 - n0) as f64);
    if r >= 1.0 {
        (r, f64::INFINITY)
    } else {
        (r, fm[nmax] * r / (1.0 - r))
    }
}

/// Weight split of all length-`n` paths by number of cone points.
#[derive(Clone, Debug, Serialize)]
pub struct CompletenessRow {
    pub n: usize,
    pub log_total: f64,
    /// Paths with at least two cone points (the irreducible-decomposition sum).
    pub log_decomposed: f64,
    /// Paths with at most one cone point.
    pub log_remainder: f64,
    /// `|total - decomposed - remainder| / total`.
    pub residual: f64,
    pub remainder_fraction: f64,
}

/// Exhaustive split of `e^{-lambda n} A_n(h)` (or `Q_n`) into paths that
/// decompose into irreducible pieces and the flagged remainder.
pub fn decomposition_completeness(
    ensemble: Ensemble<'_>,
    p: &WeightParams,
    cone: &ConeLookup,
    ns: &[usize],
) -> Result<Vec<CompletenessRow>> {
    let dim = p.dim();
    let nmax = ns.iter().copied().max().ok_or_else(|| Error::InvalidParameter("empty n-grid".into()))?;
    check_cap(dim, nmax)?;
    if nmax >= 63 {
        return Err(Error::InvalidParameter("paths longer than 62 steps are not tracked".into()));
    }
    let walker = Walker::new(ensemble, p, nmax, Site::ORIGIN)?;
    let shards = walker.walk(
        || (ConeTracker::new(), Vec::<Site>::with_capacity(nmax + 1), vec![[LogSum::new(), LogSum::new(), LogSum::new()]; nmax + 1]),
        |(tr, sites, acc), node| {
            let d = node.depth;
            sites.truncate(d);
            while sites.len() <= d {
                sites.push(walker.site(node.path[sites.len()]));
            }
            tr.update(sites, d, cone);
            acc[d][0].add(node.log_w);
            acc[d][if tr.count() >= 2 { 1 } else { 2 }].add(node.log_w);
        },
        |_, _| false,
    );
    let mut acc = vec![[LogSum::new(), LogSum::new(), LogSum::new()]; nmax + 1];
    for (_, _, a) in &shards {
        for (x, y) in acc.iter_mut().zip(a) {
            for i in 0..3 {
                x[i].merge(&y[i]);
            }
        }
    }
    Ok(ns
        .iter()
        .map(|&n| {
            let [t, s, r] = acc[n].map(|x| x.value());
            let residual = ((t.exp() - s.exp() - r.exp()) / t.exp()).abs();
            CompletenessRow { n, log_total: t, log_decomposed: s, log_remainder: r, residual, remainder_fraction: (r - t).exp() }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coarse::ConeSpec;

    #[test]
    fn single_steps_into_the_cone_are_irreducible() {
        let cone = ConeSpec::free_walk(vec![1.5, 0.0], 0.25).unwrap().lookup(8).unwrap();
        let d = PotentialDistribution::bernoulli(0.5, 1.0).unwrap();
        let t = build_irreducible_tables(&d, 0.7, &cone, 4).unwrap();
        let phi1 = d.phi_beta(0.7, 1).unwrap();
        let e1 = Site::new(&[1, 0]);
        assert!((t.entries[&(e1, 1)].log_f - (-(4f64).ln() - phi1)).abs() < 1e-13);
        assert!(!t.entries.contains_key(&(Site::new(&[0, 1]), 1)));
        assert!(t.renewal_residual().unwrap() < 1e-12);
    }

    #[test]
    fn text_round_trip_is_exact() {
        let cone = ConeSpec::free_walk(vec![1.2, 0.3], 0.3).unwrap().lookup(8).unwrap();
        let d = PotentialDistribution::uniform(1.0).unwrap();
        let t = build_irreducible_tables(&d, 0.4, &cone, 5).unwrap().with_lambda(0.37);
        assert_eq!(IrreducibleTable::from_text(&t.to_text()).unwrap(), t);
    }

    #[test]
    fn calibration_recovers_the_free_mass_in_d1() {
        let h = 3.0f64;
        let cone = ConeSpec::free_walk(vec![h], 0.25).unwrap().lookup(30).unwrap();
        let t = build_irreducible_tables(&PotentialDistribution::zero(), 0.0, &cone, 15).unwrap();
        let (_, cal) = calibrate_lambda(&t, 1e-15, 1e-6).unwrap();
        assert!((cal.lambda - h.cosh().ln()).abs() < 1e-3);
        assert!((cal.sum_f - 1.0).abs() < 1e-12);
    }
}
