//! Exact-enumeration experiments on skeleton surcharges and cone-point
//! densities.

use serde::Serialize;

use crate::ensembles::{conjugate_green, conjugate_partition, Ensemble, Walker};
use crate::environment::PotentialDistribution;
use crate::error::{Error, Result};
use crate::lattice::{unit_steps, LatticeBox, Site};
use crate::lyapunov::{FreeWalkNorm, LyapunovKind, LyapunovNorm};
use crate::numerics::{fit_line, LogSum};
use crate::path::{LatticePath, WeightParams};

use super::skeleton::build_skeleton;
use super::{ConeInfo, ConeLookup, ConeTracker};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Outcome {
    Pass,
    Fail,
    Inconclusive,
}

/// Rigorous lower bound on `Lambda(h)`: `Lambda_0(h) - phi_beta(1)` for the
/// annealed model (subadditivity of `phi_beta`) and `Lambda_0(h) - beta E V`
/// for the quenched one (Jensen under the free path measure).
pub fn annealed_lambda_lower_bound(dist: &PotentialDistribution, beta: f64, h: &[f64], kind: LyapunovKind) -> Result<f64> {
    let free = FreeWalkNorm::lambda_of(h);
    Ok(match kind {
        LyapunovKind::Annealed => free - dist.phi_beta(beta, 1)?,
        LyapunovKind::Quenched => {
            if beta == 0.0 {
                free
            } else {
                free - beta * dist.mean()
            }
        }
    })
}

/// One target of the surcharge experiment.
#[derive(Clone, Debug, Serialize)]
pub struct SurchargeRow {
    pub target: Vec<i32>,
    pub l1: i64,
    pub h: Vec<f64>,
    pub eps: f64,
    pub threshold: f64,
    /// `exp(-eps |x|_1)`.
    pub bound: f64,
    pub max_len: usize,
    pub log_enumerated: f64,
    pub log_exact_total: Option<f64>,
    pub log_tail_bound: f64,
    pub p_lower: f64,
    pub p_upper: f64,
    pub outcome: Outcome,
}

#[derive(Clone, Debug, Serialize)]
pub struct SurchargeTailReport {
    pub k: f64,
    pub lambda: f64,
    pub beta: f64,
    pub rows: Vec<SurchargeRow>,
}

/// Probability under the conjugate measure of paths `0 -> x` that the
/// `K`-skeleton surcharge exceeds `2 eps |x|_1`, bracketed rigorously: paths
/// up to `|x|_1 + extra_len` steps are enumerated and the rest bounded by
/// their total mass (exactly when the full conjugate sum is computable,
/// otherwise by `e^{-lambda (L+1)} / (1 - e^{-lambda})`).
#[allow(clippy::too_many_arguments)]
pub fn surcharge_tail_test(
    ensemble: Ensemble<'_>,
    beta: f64,
    lambda: f64,
    norm: &dyn LyapunovNorm,
    targets: &[(Site, Vec<f64>)],
    k: f64,
    eps: &[f64],
    extra_len: usize,
) -> Result<SurchargeTailReport> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter("conjugate measures need lambda > 0".into()));
    }
    let dim = norm.dim();
    let unit = unit_steps(dim).into_iter().map(|s| norm.at_site(s)).fold(f64::INFINITY, f64::min);
    if !(k >= 2.0 * unit && k.is_finite()) {
        return Err(Error::InvalidParameter(format!("skeleton scale {k} is below two unit steps ({})", 2.0 * unit)));
    }
    let mut rows = Vec::new();
    for (x, h) in targets {
        let star = norm.dual(h);
        let ax = norm.at_site(*x);
        if (star - 1.0).abs() > 1e-6 || (x.dot(h) - ax).abs() > 1e-6 * ax.max(1.0) {
            return Err(Error::InvalidParameter(format!("h = {h:?} is not dual-aligned with {x:?}")));
        }
        let l1 = x.l1();
        let max_len = l1 as usize + extra_len;
        let table_box = LatticeBox::centered(dim, max_len as i32)?;
        let table: Vec<f64> = table_box.sites().map(|y| norm.at_site(y)).collect();
        let nrm = |y: Site| table[table_box.index(y).unwrap()];
        let thresholds: Vec<f64> = eps.iter().map(|e| 2.0 * e * l1 as f64).collect();
        let p = WeightParams::new(beta, lambda, vec![0.0; dim])?;
        let walker = Walker::new(ensemble, &p, max_len, Site::ORIGIN)?;
        let target = walker.grid.index(*x).unwrap();
        let shards = walker.walk(
            || (LogSum::new(), vec![LogSum::new(); thresholds.len()]),
            |(tot, ex), node| {
                if node.path[node.depth] != target {
                    return;
                }
                tot.add(node.log_w);
                let sites: Vec<Site> = node.path.iter().map(|&i| walker.site(i)).collect();
                let path = LatticePath::from_sites_unchecked(dim, sites);
                let sk = build_skeleton(&path, k, nrm).expect("scale checked");
                let s: f64 = sk.trunk().windows(2).map(|w| nrm(w[1] - w[0]) - (w[1] - w[0]).dot(h)).sum();
                for (t, acc) in thresholds.iter().zip(ex.iter_mut()) {
                    if s > *t {
                        acc.add(node.log_w);
                    }
                }
            },
            |depth, idx| (walker.site(idx) - *x).l1() as usize > max_len - depth,
        );
        // validate the scale once, outside the parallel section
        build_skeleton(&LatticePath::new(dim, vec![Site::ORIGIN])?, k, nrm)?;
        let mut tot = LogSum::new();
        let mut ex = vec![LogSum::new(); thresholds.len()];
        for (t, e) in &shards {
            tot.merge(t);
            for (a, b) in ex.iter_mut().zip(e) {
                a.merge(b);
            }
        }
        let log_tot = tot.value();
        let tail = -lambda * (max_len as f64 + 1.0) - (-(-lambda).exp_m1()).ln();
        let exact = exact_total(ensemble, &p, *x)?;
        for (i, &e) in eps.iter().enumerate() {
            let log_ex = ex[i].value();
            let pe = (log_ex - log_tot).exp();
            let (p_lower, p_upper) = match exact {
                Some(q) => {
                    let missing = (1.0 - (log_tot - q).exp()).max(0.0);
                    ((log_ex - q).exp(), (log_ex - q).exp() + missing)
                }
                None => {
                    let r = (tail - log_tot).exp();
                    (pe / (1.0 + r), pe + r)
                }
            };
            let bound = (-e * l1 as f64).exp();
            let outcome = if p_upper <= bound {
                Outcome::Pass
            } else if p_lower > bound {
                Outcome::Fail
            } else {
                Outcome::Inconclusive
            };
            rows.push(SurchargeRow {
                target: x.coords(dim).to_vec(),
                l1,
                h: h.clone(),
                eps: e,
                threshold: thresholds[i],
                bound,
                max_len,
                log_enumerated: log_tot,
                log_exact_total: exact,
                log_tail_bound: tail,
                p_lower,
                p_upper,
                outcome,
            });
        }
    }
    Ok(SurchargeTailReport { k, lambda, beta, rows })
}

fn exact_total(ensemble: Ensemble<'_>, p: &WeightParams, x: Site) -> Result<Option<f64>> {
    Ok(match ensemble {
        Ensemble::Quenched(env) => {
            let bx = *env.bounds();
            Some(conjugate_green(env, p, &[x], bx, 1e-14)?.targets[0].1)
        }
        Ensemble::Annealed(_) => conjugate_partition(ensemble, p, x, 1e-14).ok().map(|r| r.targets[0].1),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DensityRow {
    pub n: usize,
    pub mean_density: f64,
    /// `P(#cone = c)` for `c = 0..=n+1`.
    pub count_probs: Vec<f64>,
    /// `P(#cone < c n)`.
    pub p_below: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConeDensityReport {
    pub cone: ConeInfo,
    pub kind: LyapunovKind,
    pub lambda_lower_bound: f64,
    pub c: f64,
    pub rows: Vec<DensityRow>,
    /// `-slope` of `log P(#cone < c n)` against `n`, when all are positive.
    pub decay_rate: Option<f64>,
}

/// Exact distribution of the number of cone points under `A_n^h` or `Q_n^h`
/// by enumeration. Refuses drifts that cannot be certified ballistic.
pub fn cone_density_test(
    ensemble: Ensemble<'_>,
    p: &WeightParams,
    cone: &ConeLookup,
    ns: &[usize],
    c: Option<f64>,
) -> Result<ConeDensityReport> {
    let dim = p.dim();
    if ns.is_empty() || ns.contains(&0) {
        return Err(Error::InvalidParameter("n-grid must be nonempty and positive".into()));
    }
    if p.h.iter().all(|&x| x == 0.0) {
        return Err(Error::Precondition("cone-point densities need a ballistic drift; h = 0".into()));
    }
    let (kind, dist) = match ensemble {
        Ensemble::Annealed(d) => (LyapunovKind::Annealed, d.clone()),
        Ensemble::Quenched(e) => (LyapunovKind::Quenched, e.dist().clone()),
    };
    let lb = annealed_lambda_lower_bound(&dist, p.beta, &p.h, kind)?;
    if !(lb > 0.0) {
        return Err(Error::Precondition(format!("cannot certify h = {:?} as ballistic (lower bound {lb})", p.h)));
    }
    let nmax = *ns.iter().max().unwrap();
    crate::ensembles::check_cap(dim, nmax)?;
    if nmax >= 63 {
        return Err(Error::InvalidParameter("paths longer than 62 steps are not tracked".into()));
    }
    let walker = Walker::new(ensemble, p, nmax, Site::ORIGIN)?;
    let slot: Vec<Option<usize>> = (0..=nmax).map(|n| ns.iter().position(|&m| m == n)).collect();
    let shards = walker.walk(
        || {
            (
                ConeTracker::new(),
                Vec::<Site>::with_capacity(nmax + 1),
                ns.iter().map(|&n| vec![LogSum::new(); n + 2]).collect::<Vec<_>>(),
            )
        },
        |(tr, sites, acc), node| {
            let d = node.depth;
            if sites.len() > d {
                sites.truncate(d);
            }
            while sites.len() <= d {
                sites.push(walker.site(node.path[sites.len()]));
            }
            tr.update(sites, d, cone);
            if let Some(i) = slot[d] {
                acc[i][tr.count() as usize].add(node.log_w);
            }
        },
        |_, _| false,
    );
    let mut acc: Vec<Vec<LogSum>> = ns.iter().map(|&n| vec![LogSum::new(); n + 2]).collect();
    for (_, _, a) in &shards {
        for (t, s) in acc.iter_mut().zip(a) {
            for (x, y) in t.iter_mut().zip(s) {
                x.merge(y);
            }
        }
    }
    let mut rows: Vec<DensityRow> = ns
        .iter()
        .zip(&acc)
        .map(|(&n, a)| {
            let mut tot = LogSum::new();
            a.iter().for_each(|x| tot.merge(x));
            let z = tot.value();
            let probs: Vec<f64> = a.iter().map(|x| (x.value() - z).exp()).collect();
            let mean = probs.iter().enumerate().map(|(c, q)| c as f64 * q).sum::<f64>() / n as f64;
            DensityRow { n, mean_density: mean, count_probs: probs, p_below: 0.0 }
        })
        .collect();
    let c = c.unwrap_or_else(|| 0.5 * rows.iter().max_by_key(|r| r.n).unwrap().mean_density);
    for r in rows.iter_mut() {
        r.p_below = r.count_probs.iter().enumerate().filter(|(k, _)| (*k as f64) < c * r.n as f64).map(|x| x.1).sum();
    }
    let decay_rate = if rows.len() >= 2 && rows.iter().all(|r| r.p_below > 0.0) {
        let xs: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.p_below.ln()).collect();
        fit_line(&xs, &ys).ok().map(|f| -f.slope)
    } else {
        None
    };
    Ok(ConeDensityReport { cone: cone.spec().describe(), kind, lambda_lower_bound: lb, c, rows, decay_rate })
}
