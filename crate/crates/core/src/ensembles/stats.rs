//! Exact expectations under the fixed-length and conjugate path measures.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::lattice::{LatticeBox, Site};
use crate::numerics::LogSum;
use crate::path::WeightParams;

use super::dp::{conjugate_box, green_table, quenched_dp, DpOptions};
use super::enumerate::{check_cap, Walker};
use super::Ensemble;

/// Which expectations to compute.
#[derive(Clone, Debug, Default)]
pub struct Observables {
    /// Points at which to evaluate `E exp(i alpha . X)`.
    pub alphas: Vec<Vec<f64>>,
    /// Also compute `E sum_x l(x)^2` (needs enumeration).
    pub loop_moment: bool,
}

/// Exact moments of the endpoint under `A_n^h` or `Q_n^h`.
#[derive(Clone, Debug, Serialize)]
pub struct EnsembleStats {
    pub n: usize,
    pub log_partition: f64,
    pub mean_extension: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    /// `(alpha, re, im)` triples.
    pub char_fn: Vec<(Vec<f64>, f64, f64)>,
    pub loop_moment: Option<f64>,
}

fn moments(dim: usize, n: usize, endpoints: &BTreeMap<Site, f64>, alphas: &[Vec<f64>]) -> EnsembleStats {
    let mut acc = LogSum::new();
    endpoints.values().for_each(|&v| acc.add(v));
    let logz = acc.value();
    let probs: Vec<(Site, f64)> = endpoints.iter().map(|(x, v)| (*x, (v - logz).exp())).collect();
    let mut mean = vec![0.0; dim];
    for (x, w) in &probs {
        for i in 0..dim {
            mean[i] += w * x.0[i] as f64;
        }
    }
    let mut cov = vec![vec![0.0; dim]; dim];
    for (x, w) in &probs {
        for i in 0..dim {
            for j in 0..dim {
                cov[i][j] += w * (x.0[i] as f64 - mean[i]) * (x.0[j] as f64 - mean[j]);
            }
        }
    }
    let char_fn = alphas
        .iter()
        .map(|a| {
            let (mut re, mut im) = (0.0, 0.0);
            for (x, w) in &probs {
                let t = x.dot(a);
                re += w * t.cos();
                im += w * t.sin();
            }
            (a.clone(), re, im)
        })
        .collect();
    EnsembleStats { n, log_partition: logz, mean_extension: mean, covariance: cov, char_fn, loop_moment: None }
}

/// Exact expectations at length `n`.
///
/// Quenched extension moments use the transfer DP (any `n` the environment
/// box allows); annealed moments and the loop moment use enumeration.
pub fn ensemble_stats(ensemble: Ensemble<'_>, p: &WeightParams, n: usize, obs: &Observables) -> Result<EnsembleStats> {
    let dim = p.dim();
    if let Some(a) = obs.alphas.iter().find(|a| a.len() != dim) {
        return Err(Error::InvalidParameter(format!("alpha {a:?} has the wrong dimension")));
    }
    if let (Ensemble::Quenched(env), false) = (ensemble, obs.loop_moment) {
        let t = quenched_dp(env, p, n, &DpOptions::default())?;
        let endpoints = t
            .bx
            .sites()
            .zip(&t.layers[n])
            .filter(|(_, v)| **v > f64::NEG_INFINITY)
            .map(|(s, v)| (s, *v))
            .collect();
        return Ok(moments(dim, n, &endpoints, &obs.alphas));
    }
    check_cap(dim, n).map_err(|e| match e {
        Error::CapExceeded { .. } if obs.loop_moment => {
            Error::Precondition(format!("local-time observables need enumeration: {e}"))
        }
        other => other,
    })?;
    let walker = Walker::new(ensemble, p, n, Site::ORIGIN)?;
    let glen = walker.grid.len();
    let shards = walker.walk(
        || (vec![LogSum::new(); glen], LogSum::new()),
        |(ends, l2), node| {
            if node.depth == n {
                ends[node.path[n]].add(node.log_w);
                if node.l2 > 0 {
                    l2.add(node.log_w + (node.l2 as f64).ln());
                }
            }
        },
        |_, _| false,
    );
    let mut ends = vec![LogSum::new(); glen];
    let mut l2 = LogSum::new();
    for (e, l) in &shards {
        for (t, a) in ends.iter_mut().zip(e) {
            t.merge(a);
        }
        l2.merge(l);
    }
    let endpoints: BTreeMap<Site, f64> = (0..glen)
        .filter(|&i| !ends[i].is_empty())
        .map(|i| (walker.site(i), ends[i].value()))
        .collect();
    let mut st = moments(dim, n, &endpoints, &obs.alphas);
    if obs.loop_moment {
        st.loop_moment = Some(if l2.is_empty() { 0.0 } else { (l2.value() - st.log_partition).exp() });
    }
    Ok(st)
}

/// `E sum_z l(z)^2` under the conjugate measure of paths `0 -> x`, restricted
/// to the default conjugate box.
///
/// Uses the decomposition of ordered visit pairs `(i, j)` with
/// `gamma_i = gamma_j = z`: diagonal pairs give `G1(0,z) G(z,x)` and
/// off-diagonal ones `2 G1(0,z) L(z) G(z,x)`, where `G1` counts paths of
/// length >= 1 and `L(z)` is the loop weight at `z`.
pub fn conjugate_loop_moment(env: &Environment, p: &WeightParams, x: Site, tol: f64) -> Result<f64> {
    let bx = conjugate_box(p.dim(), &[x])?;
    conjugate_loop_moment_in(env, p, x, bx, tol)
}

pub fn conjugate_loop_moment_in(env: &Environment, p: &WeightParams, x: Site, bx: LatticeBox, tol: f64) -> Result<f64> {
    let from0 = green_table(env, p, Site::ORIGIN, bx, tol, false)?;
    let to_x = green_table(env, p, x, bx, tol, true)?;
    let q = from0[bx.index(x).ok_or_else(|| Error::OutsideBox(x.0.to_vec()))?];
    let o = bx.index(Site::ORIGIN).unwrap();
    let g1 = |i: usize| -> f64 {
        if i == o {
            let v = from0[i];
            // exp(v) - 1 in log form; the origin always carries the empty path.
            if v <= 0.0 {
                f64::NEG_INFINITY
            } else {
                v + (-(-v).exp()).ln_1p()
            }
        } else {
            from0[i]
        }
    };
    let mut num = LogSum::new();
    let cut = q + (1e-3 * tol).ln();
    for (i, z) in bx.sites().enumerate() {
        let base = g1(i) + to_x[i];
        if !(base > cut) {
            continue;
        }
        let gz = green_table(env, p, z, bx, tol, false)?;
        let gzz = gz[i];
        let loops = if gzz <= 0.0 { 0.0 } else { gzz.exp_m1() };
        num.add(base + (1.0 + 2.0 * loops).ln());
    }
    Ok((num.value() - q).exp())
}

/// Same expectation by length-capped enumeration (an oracle for small `x`).
pub fn conjugate_loop_moment_enumerated(ensemble: Ensemble<'_>, p: &WeightParams, x: Site, max_len: usize) -> Result<f64> {
    let walker = Walker::new(ensemble, p, max_len, Site::ORIGIN)?;
    let target = walker.grid.index(x).unwrap();
    let shards = walker.walk(
        || (LogSum::new(), LogSum::new()),
        |(z, l), node| {
            if node.path[node.depth] == target {
                z.add(node.log_w);
                if node.l2 > 0 {
                    l.add(node.log_w + (node.l2 as f64).ln());
                }
            }
        },
        |depth, idx| (walker.site(idx) - x).l1() as usize > max_len - depth,
    );
    let mut z = LogSum::new();
    let mut l = LogSum::new();
    for (a, b) in &shards {
        z.merge(a);
        l.merge(b);
    }
    Ok((l.value() - z.value()).exp())
}
