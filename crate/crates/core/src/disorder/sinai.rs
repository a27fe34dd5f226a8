//! Expansion of quenched renewal sums around the annealed ones.
//!
//! Telescoping a product of quenched irreducible weights against annealed
//! ones piece by piece gives
//! `t^w_{z,n} = t_{z,n} + sum t^w_{x,l} (f^{theta_x w}_{y-x,m} - f_{y-x,m}) t_{z-y,r}`
//! over `l + m + r = n`, `m >= 1`. Summing over `z` and splitting
//! `t_r = 1/kappa + (t_r - 1/kappa)` yields
//! `t^w_n = s_n / kappa + (t_n - 1/kappa) + eps_n`.

use rayon::prelude::*;
use serde::Serialize;

use crate::coarse::ConeLookup;
use crate::environment::{Environment, PotentialDistribution};
use crate::error::{Error, Result};
use crate::lattice::{LatticeBox, Site};
use crate::path::WeightParams;
use crate::renewal::{quenched_irreducible_inversion, ConeShapes, IrreducibleTable, KernelTable};
use crate::seeds::derive_seed;

const TAG_SINAI: u64 = 0x5349_4e41;

#[derive(Clone, Debug, Serialize)]
pub struct SinaiReplica {
    pub seed: u64,
    /// Max over `(z, n)` of the identity residual, relative to `max t^w`.
    pub identity_residual: f64,
    pub identity_abs: f64,
    /// `s_n` for `n = 0..=nmax`.
    pub s_track: Vec<f64>,
    /// Largest gap between `s_n` and its direct double-loop evaluation.
    pub s_direct_gap: f64,
    pub t_quenched: Vec<f64>,
    pub epsilon: Vec<f64>,
    /// Largest `|t^w_n - s_n / kappa - (t_n - 1/kappa) - eps_n|`.
    pub decomposition_residual: f64,
    /// `max |t^w - t|` relative to `max t^w`; zero without disorder.
    pub quenched_annealed_gap: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SinaiLedger {
    pub nmax: usize,
    pub beta: f64,
    pub lambda: f64,
    pub h: Vec<f64>,
    pub kappa: f64,
    pub t_annealed: Vec<f64>,
    pub replicas: Vec<SinaiReplica>,
    pub max_identity_residual: f64,
    pub max_s_gap: f64,
    pub max_decomposition_residual: f64,
}

fn check_conventions(env: &Environment, annealed: &IrreducibleTable, p: &WeightParams, shapes: &ConeShapes) -> Result<()> {
    let mut bad = Vec::new();
    if annealed.dim != p.dim() || shapes.dim != p.dim() {
        bad.push("dimension".to_string());
    }
    if annealed.beta != p.beta {
        bad.push(format!("beta {} vs {}", annealed.beta, p.beta));
    }
    if annealed.lambda != p.lambda {
        bad.push(format!("lambda {} vs {}", annealed.lambda, p.lambda));
    }
    if annealed.h != p.h {
        bad.push(format!("h {:?} vs {:?}", annealed.h, p.h));
    }
    if annealed.nmax != shapes.nmax {
        bad.push(format!("nmax {} vs {}", annealed.nmax, shapes.nmax));
    }
    if let crate::renewal::TableSource::Annealed { dist } = &annealed.source {
        if p.beta > 0.0 && *dist != env.dist().to_string() {
            bad.push(format!("dist {dist} vs {}", env.dist()));
        }
    } else {
        bad.push("annealed table expected".into());
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::IdentityViolation(format!("convention mismatch: {}", bad.join("; "))))
    }
}

/// Verifies the expansion for each environment. Residuals above `tol`
/// abort with the offending replica in the message.
pub fn sinai_identity_check(
    envs: &[Environment],
    annealed: &IrreducibleTable,
    shapes: &ConeShapes,
    p: &WeightParams,
    tol: f64,
) -> Result<SinaiLedger> {
    if envs.is_empty() {
        return Err(Error::InvalidParameter("need at least one environment".into()));
    }
    for e in envs {
        check_conventions(e, annealed, p, shapes)?;
    }
    let nmax = shapes.nmax;
    let (fa, ta) = annealed.kernels()?;
    let fa_marg = fa.marginal();
    let ta_marg = ta.marginal();
    let kappa: f64 = fa_marg.iter().enumerate().map(|(n, v)| n as f64 * v).sum();
    let replicas: Vec<SinaiReplica> = envs
        .par_iter()
        .map(|env| one_replica(env, p, shapes, &fa, &ta, &fa_marg, &ta_marg, kappa))
        .collect::<Result<_>>()?;
    for (i, r) in replicas.iter().enumerate() {
        if !(r.identity_residual <= tol) || !(r.decomposition_residual <= tol) {
            return Err(Error::IdentityViolation(format!(
                "replica {i} (seed {}): identity residual {:e}, decomposition residual {:e}, tolerance {tol:e}",
                r.seed, r.identity_residual, r.decomposition_residual
            )));
        }
    }
    Ok(SinaiLedger {
        nmax,
        beta: p.beta,
        lambda: p.lambda,
        h: p.h.clone(),
        kappa,
        t_annealed: ta_marg,
        max_identity_residual: replicas.iter().map(|r| r.identity_residual).fold(0.0, f64::max),
        max_s_gap: replicas.iter().map(|r| r.s_direct_gap).fold(0.0, f64::max),
        max_decomposition_residual: replicas.iter().map(|r| r.decomposition_residual).fold(0.0, f64::max),
        replicas,
    })
}

#[allow(clippy::too_many_arguments)]
fn one_replica(
    env: &Environment,
    p: &WeightParams,
    shapes: &ConeShapes,
    fa: &KernelTable,
    ta: &KernelTable,
    fa_marg: &[f64],
    ta_marg: &[f64],
    kappa: f64,
) -> Result<SinaiReplica> {
    let nmax = shapes.nmax;
    let inv = quenched_irreducible_inversion(env, p, shapes)?;
    let tq = &inv.kernels.t[&Site::ORIGIN];
    let fq = &inv.recovered;
    let tq_layers: Vec<Vec<(Site, f64)>> = (0..=nmax).map(|n| tq.layer(n)).collect();
    // c_{y,k} = sum_{l+m=k} sum_x t^w_{x,l} (f^{theta_x}_{y-x,m} - f_{y-x,m})
    let mut c = KernelTable::new(p.dim(), nmax)?;
    for (l, layer) in tq_layers.iter().enumerate().take(nmax) {
        for &(x, a) in layer {
            let fx = fq.get(&x).ok_or_else(|| Error::IdentityViolation(format!("no recovered weights at {x:?}")))?;
            for m in 1..=nmax - l {
                for (w, b) in fx.layer(m) {
                    c.add(x + w, l + m, a * b);
                }
                for (w, b) in fa.layer(m) {
                    c.add(x + w, l + m, -a * b);
                }
            }
        }
    }
    let mut rhs = ta.clone();
    for k in 1..=nmax {
        for (y, a) in c.layer(k) {
            for r in 0..=nmax - k {
                for (u, b) in ta.layer(r) {
                    rhs.add(y + u, k + r, a * b);
                }
            }
        }
    }
    let scale = tq.max_abs();
    let identity_abs = rhs.max_abs_diff(tq);
    let c_marg = c.marginal();
    let tq_marg = tq.marginal();
    let mut s_track = vec![1.0; nmax + 1];
    for n in 1..=nmax {
        s_track[n] = s_track[n - 1] + c_marg[n];
    }
    // The same sum in the order x, l, then m.
    let fq_marg: std::collections::BTreeMap<Site, Vec<f64>> = fq.iter().map(|(x, f)| (*x, f.marginal())).collect();
    let s_direct: Vec<f64> = (0..=nmax)
        .map(|n| {
            let mut s = 1.0;
            for (l, layer) in tq_layers.iter().enumerate().take(n) {
                for &(x, a) in layer {
                    let fx = &fq_marg[&x];
                    for m in 1..=n - l {
                        s += a * (fx[m] - fa_marg[m]);
                    }
                }
            }
            s
        })
        .collect();
    let s_direct_gap = s_track.iter().zip(&s_direct).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let epsilon: Vec<f64> = (0..=nmax)
        .map(|n| (1..=n).map(|k| c_marg[k] * (ta_marg[n - k] - 1.0 / kappa)).sum())
        .collect();
    let decomposition_residual = (0..=nmax)
        .map(|n| (tq_marg[n] - (s_track[n] / kappa + (ta_marg[n] - 1.0 / kappa) + epsilon[n])).abs())
        .fold(0.0, f64::max)
        / tq_marg.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(SinaiReplica {
        seed: env.seed(),
        identity_residual: identity_abs / scale,
        identity_abs,
        s_track,
        s_direct_gap,
        t_quenched: tq_marg,
        epsilon,
        decomposition_residual,
        quenched_annealed_gap: tq.max_abs_diff(ta) / scale,
    })
}

/// Builds the annealed table and shapes for `cone`, samples `replicas`
/// environments and runs [`sinai_identity_check`] at mass `lambda`.
#[allow(clippy::too_many_arguments)]
pub fn sinai_experiment(
    dist: &PotentialDistribution,
    beta: f64,
    cone: &ConeLookup,
    lambda: f64,
    nmax: usize,
    replicas: usize,
    seed: u64,
    tol: f64,
) -> Result<SinaiLedger> {
    let (table, shapes) = ConeShapes::with_annealed(dist, beta, cone, nmax)?;
    let table = table.with_lambda(lambda);
    let dim = cone.spec().dim();
    let bx = LatticeBox::centered(dim, nmax as i32 + 1)?;
    let envs: Vec<Environment> = (0..replicas)
        .map(|r| Environment::sample(dist, bx, derive_seed(seed, TAG_SINAI, r as u64)))
        .collect::<Result<_>>()?;
    let p = WeightParams::new(beta, lambda, cone.spec().h.clone())?;
    sinai_identity_check(&envs, &table, &shapes, &p, tol)
}
