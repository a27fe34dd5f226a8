//! Exact i.i.d. sampling from the fixed-length path measures.

use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;

use crate::error::{Error, Result};
use crate::lattice::{unit_step, Site};
use crate::path::{LatticePath, WeightParams};

use super::dp::{quenched_dp, DpOptions};
use super::enumerate::{check_cap, Walker};
use super::Ensemble;

/// Largest number of paths the annealed sampler will tabulate.
const MAX_TABULATED: f64 = 1.7e7;

/// `count` independent paths of length `n` from `Q_n^h` (quenched, backward
/// sampling through the DP table) or `A_n^h` (annealed, alias sampling over
/// the enumerated paths).
pub fn sample_paths(ensemble: Ensemble<'_>, p: &WeightParams, n: usize, count: usize, seed: u64) -> Result<Vec<LatticePath>> {
    let dim = p.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match ensemble {
        Ensemble::Quenched(env) => {
            let t = quenched_dp(env, p, n, &DpOptions::default())?;
            let last = &t.layers[n];
            let m = last.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if m == f64::NEG_INFINITY {
                return Err(Error::Precondition("all paths have zero weight".into()));
            }
            let w: Vec<f64> = last.iter().map(|v| (v - m).exp()).collect();
            let ends = WeightedAliasIndex::new(w).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            let hfac: Vec<f64> = (0..2 * dim).map(|k| unit_step(k).dot(&p.h)).collect();
            let mut out = Vec::with_capacity(count);
            for _ in 0..count {
                let mut x = t.bx.site(ends.sample(&mut rng));
                let mut rev = vec![x];
                for k in (1..=n).rev() {
                    let cand: Vec<(Site, f64)> = (0..2 * dim)
                        .map(|j| {
                            let y = x - unit_step(j);
                            let lv = t.log_value(y, k - 1).unwrap_or(f64::NEG_INFINITY);
                            (y, lv + hfac[j])
                        })
                        .collect();
                    let mx = cand.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
                    let ws: Vec<f64> = cand.iter().map(|c| (c.1 - mx).exp()).collect();
                    let total: f64 = ws.iter().sum();
                    let u = rng.random::<f64>() * total;
                    let mut cum = 0.0;
                    let mut pick = cand.len() - 1;
                    for (j, wj) in ws.iter().enumerate() {
                        cum += wj;
                        if u < cum {
                            pick = j;
                            break;
                        }
                    }
                    x = cand[pick].0;
                    rev.push(x);
                }
                rev.reverse();
                out.push(LatticePath::from_sites_unchecked(dim, rev));
            }
            Ok(out)
        }
        Ensemble::Annealed(_) => {
            check_cap(dim, n)?;
            if ((2 * dim) as f64).powi(n as i32) > MAX_TABULATED {
                return Err(Error::Precondition(format!("annealed sampling at n = {n} needs too large a table")));
            }
            let walker = Walker::new(ensemble, p, n, Site::ORIGIN)?;
            let offsets: Vec<isize> = (0..2 * dim).map(|k| walker.grid.step_offset(k)).collect();
            let shards = walker.walk(
                Vec::new,
                |v: &mut Vec<(u64, f64)>, node| {
                    if node.depth == n {
                        let mut code = 0u64;
                        for w in node.path.windows(2) {
                            let d = w[1] as isize - w[0] as isize;
                            let k = offsets.iter().position(|&o| o == d).unwrap() as u64;
                            code = (code << 3) | k;
                        }
                        v.push((code, node.log_w));
                    }
                },
                |_, _| false,
            );
            let all: Vec<(u64, f64)> = shards.into_iter().flatten().collect();
            let m = all.iter().map(|a| a.1).fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = all.iter().map(|a| (a.1 - m).exp()).collect();
            let alias = WeightedAliasIndex::new(w).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            let mut out = Vec::with_capacity(count);
            for _ in 0..count {
                let code = all[alias.sample(&mut rng)].0;
                let steps: Vec<usize> = (0..n).rev().map(|i| ((code >> (3 * i)) & 7) as usize).collect();
                out.push(LatticePath::from_steps(dim, Site::ORIGIN, &steps)?);
            }
            Ok(out)
        }
    }
}
