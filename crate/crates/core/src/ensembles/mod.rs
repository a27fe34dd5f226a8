//! Exact partition functions and path measures.
//!
//! Brute-force enumeration is the reference for everything else; the
//! transfer DP in [`dp`] reproduces it for quenched weights at any length.

pub mod dp;
pub mod enumerate;
mod sampling;
mod stats;

use std::collections::BTreeMap;

use crate::environment::{Environment, PotentialDistribution};
use crate::error::{Error, Result};
use crate::lattice::{LatticeBox, Site};
use crate::numerics::LogSum;
use crate::path::WeightParams;

pub use dp::{
    conjugate_box, conjugate_green, green_table, quenched_dp, ConjugateResult, DpOptions, PartitionTable,
    TableKind,
};
pub use enumerate::{check_cap, enumeration_cap, NodeView, Walker};
pub use sampling::sample_paths;
pub use stats::{conjugate_loop_moment, conjugate_loop_moment_enumerated, ensemble_stats, EnsembleStats, Observables};

/// Quenched (fixed environment) or annealed (averaged) weights.
#[derive(Clone, Copy, Debug)]
pub enum Ensemble<'a> {
    Quenched(&'a Environment),
    Annealed(&'a PotentialDistribution),
}

impl Ensemble<'_> {
    pub fn table_kind(&self) -> TableKind {
        match self {
            Ensemble::Quenched(e) => TableKind::Quenched { dist: e.dist().to_string(), seed: e.seed() },
            Ensemble::Annealed(d) => TableKind::Annealed { dist: d.to_string() },
        }
    }
}

/// Endpoint restriction for fixed-length sums.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Constraint {
    Free,
    Endpoint(Site),
    /// `h.x = N` for an axis-parallel drift `h`.
    Slab(i64),
}

/// Fixed-length sum together with its endpoint distribution.
#[derive(Clone, Debug)]
pub struct EnumeratedPartition {
    pub n: usize,
    pub log_value: f64,
    pub endpoints: BTreeMap<Site, f64>,
}

/// Per-length endpoint tables `log Z_m(x)` for `m = 0..=nmax` by enumeration.
pub fn enumerate_all_lengths(ensemble: Ensemble<'_>, p: &WeightParams, nmax: usize) -> Result<Vec<BTreeMap<Site, f64>>> {
    check_cap(p.dim(), nmax)?;
    let walker = Walker::new(ensemble, p, nmax, Site::ORIGIN)?;
    let glen = walker.grid.len();
    let shards = walker.walk(
        || vec![LogSum::new(); (nmax + 1) * glen],
        |acc, node| acc[node.depth * glen + node.path[node.depth]].add(node.log_w),
        |_, _| false,
    );
    let mut total = vec![LogSum::new(); (nmax + 1) * glen];
    for s in &shards {
        for (t, a) in total.iter_mut().zip(s) {
            t.merge(a);
        }
    }
    Ok((0..=nmax)
        .map(|m| {
            (0..glen)
                .filter(|&i| !total[m * glen + i].is_empty())
                .map(|i| (walker.site(i), total[m * glen + i].value()))
                .collect()
        })
        .collect())
}

fn slab_axis(h: &[f64]) -> Result<(usize, f64)> {
    let nz: Vec<usize> = (0..h.len()).filter(|&i| h[i] != 0.0).collect();
    if nz.len() != 1 {
        return Err(Error::InvalidParameter("slab constraints need an axis-parallel nonzero h".into()));
    }
    Ok((nz[0], h[nz[0]].signum()))
}

/// Exact `log Z_n` under `constraint`, plus the full endpoint table.
pub fn enumerate_partition(
    ensemble: Ensemble<'_>,
    p: &WeightParams,
    n: usize,
    constraint: Constraint,
) -> Result<EnumeratedPartition> {
    let layers = enumerate_all_lengths(ensemble, p, n)?;
    let endpoints = layers.into_iter().nth(n).unwrap();
    let mut acc = LogSum::new();
    match constraint {
        Constraint::Free => endpoints.values().for_each(|&v| acc.add(v)),
        Constraint::Endpoint(x) => {
            if let Some(&v) = endpoints.get(&x) {
                acc.add(v)
            }
        }
        Constraint::Slab(level) => {
            let (axis, sign) = slab_axis(&p.h)?;
            for (x, &v) in &endpoints {
                if (x.0[axis] as f64 * sign) as i64 == level {
                    acc.add(v);
                }
            }
        }
    }
    Ok(EnumeratedPartition { n, log_value: acc.value(), endpoints })
}

/// Exact table of all fixed-length sums up to `nmax` as a [`PartitionTable`].
pub fn enumerated_table(ensemble: Ensemble<'_>, p: &WeightParams, nmax: usize) -> Result<PartitionTable> {
    let layers = enumerate_all_lengths(ensemble, p, nmax)?;
    let bx = LatticeBox::centered(p.dim(), nmax as i32 + 2)?;
    let dense = layers
        .iter()
        .map(|m| {
            let mut v = vec![f64::NEG_INFINITY; bx.len()];
            for (x, &w) in m {
                v[bx.index(*x).unwrap()] = w;
            }
            v
        })
        .collect();
    Ok(PartitionTable {
        kind: ensemble.table_kind(),
        params: p.clone(),
        bx,
        nmax,
        layers: dense,
        boundary_log_mass: vec![f64::NEG_INFINITY; nmax + 1],
    })
}

/// `log Q_lambda(x)` (quenched) or `log A_lambda(x)` (annealed, exact only
/// when `beta = 0`) by a conjugate transfer sum on the default box.
pub fn conjugate_partition(ensemble: Ensemble<'_>, p: &WeightParams, x: Site, tol: f64) -> Result<ConjugateResult> {
    let bx = conjugate_box(p.dim(), &[x])?;
    match ensemble {
        Ensemble::Quenched(env) => conjugate_green(env, p, &[x], bx, tol),
        Ensemble::Annealed(dist) => {
            if p.beta == 0.0 || dist.is_degenerate() && dist.in_support(0.0) {
                conjugate_green(&Environment::zero(bx), p, &[x], bx, tol)
            } else {
                Err(Error::Precondition(
                    "annealed conjugate sums at beta > 0 are only available truncated; use annealed_conjugate_truncated"
                        .into(),
                ))
            }
        }
    }
}

/// Annealed conjugate sum over paths `0 -> x` of length at most `max_len`,
/// by targeted enumeration. Returns `(log value, log tail bound)`.
pub fn annealed_conjugate_truncated(
    dist: &PotentialDistribution,
    p: &WeightParams,
    x: Site,
    max_len: usize,
) -> Result<(f64, f64)> {
    if !(p.lambda > 0.0) {
        return Err(Error::InvalidParameter("conjugate sums need lambda > 0".into()));
    }
    if x.l1() as usize > max_len {
        return Err(Error::InvalidParameter("target farther than the length cap".into()));
    }
    let walker = Walker::new(Ensemble::Annealed(dist), p, max_len, Site::ORIGIN)?;
    let target = walker.grid.index(x).unwrap();
    let shards = walker.walk(
        LogSum::new,
        |acc, node| {
            if node.path[node.depth] == target {
                acc.add(node.log_w)
            }
        },
        |depth, idx| (walker.site(idx) - x).l1() as usize > max_len - depth,
    );
    let mut acc = LogSum::new();
    shards.iter().for_each(|s| acc.merge(s));
    let tail = -p.lambda * (max_len as f64 + 1.0) - (-(-p.lambda).exp_m1()).ln();
    Ok((acc.value(), tail))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_walk_normalization_and_cosh_law() {
        let d = PotentialDistribution::bernoulli(0.5, 1.0).unwrap();
        for n in [0usize, 1, 4, 7] {
            let p = WeightParams::new(0.0, 0.0, vec![0.0, 0.0]).unwrap();
            let r = enumerate_partition(Ensemble::Annealed(&d), &p, n, Constraint::Free).unwrap();
            assert!(r.log_value.abs() < 1e-12);
            let p = WeightParams::new(0.0, 0.0, vec![0.7]).unwrap();
            let r = enumerate_partition(Ensemble::Annealed(&d), &p, n, Constraint::Free).unwrap();
            assert!((r.log_value - n as f64 * 0.7f64.cosh().ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn slab_sums_add_up() {
        let d = PotentialDistribution::bernoulli(0.5, 1.0).unwrap();
        let p = WeightParams::new(0.5, 0.1, vec![0.0, -0.4]).unwrap();
        let free = enumerate_partition(Ensemble::Annealed(&d), &p, 5, Constraint::Free).unwrap();
        let mut acc = LogSum::new();
        for level in -5..=5 {
            let r = enumerate_partition(Ensemble::Annealed(&d), &p, 5, Constraint::Slab(level)).unwrap();
            acc.add(r.log_value);
        }
        assert!((acc.value() - free.log_value).abs() < 1e-12);
    }

    #[test]
    fn truncated_conjugate_sum_matches_green_function_at_zero_beta() {
        let d = PotentialDistribution::bernoulli(0.5, 1.0).unwrap();
        let p = WeightParams::new(0.0, 2.0, vec![0.0, 0.0]).unwrap();
        let x = Site::new(&[2, 1]);
        let (v, tail) = annealed_conjugate_truncated(&d, &p, x, 13).unwrap();
        let g = conjugate_partition(Ensemble::Annealed(&d), &p, x, 1e-14).unwrap();
        assert!(tail < -25.0);
        assert!((v - g.targets[0].1).abs() < 1e-8);
    }
}
