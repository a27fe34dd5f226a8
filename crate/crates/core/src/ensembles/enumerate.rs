//! Depth-first enumeration of all nearest-neighbour paths.
//!
//! The walker keeps the path as flat grid indices together with the running
//! log-weight, the local-time counts and `sum_x l(x)^2`, all updated
//! incrementally. Work is split over the first step and shard results are
//! returned in step order, so reductions are independent of thread count.

use rayon::prelude::*;

use crate::environment::PotentialDistribution;
use crate::error::{Error, Result};
use crate::lattice::{Grid, LatticeBox, Site};
use crate::path::WeightParams;

use super::Ensemble;

/// Default enumeration caps by dimension.
pub fn enumeration_cap(dim: usize) -> usize {
    match dim {
        1 => 24,
        2 => 14,
        _ => 12,
    }
}

pub fn check_cap(dim: usize, n: usize) -> Result<()> {
    let cap = enumeration_cap(dim);
    if n > cap {
        Err(Error::CapExceeded { n, cap, dim })
    } else {
        Ok(())
    }
}

/// What the visitor sees at every node of the search tree.
pub struct NodeView<'a> {
    pub depth: usize,
    /// Grid indices of `gamma_0 .. gamma_depth`.
    pub path: &'a [usize],
    pub log_w: f64,
    /// `sum_x l(x)^2` over times `1..=depth`.
    pub l2: u64,
}

enum SiteTerm {
    /// `-beta V(x)` per grid cell; NaN marks cells outside the environment.
    Quenched(Vec<f64>),
    /// `phi_beta(0..=nmax+1)`.
    Annealed(Vec<f64>),
}

pub struct Walker {
    pub grid: Grid,
    nmax: usize,
    step_log: Vec<f64>,
    offsets: Vec<isize>,
    term: SiteTerm,
    root: usize,
}

struct DfsState {
    path: Vec<usize>,
    counts: Vec<u16>,
    l2: u64,
}

impl Walker {
    /// Walker for paths of length at most `nmax` starting at `start`.
    pub fn new(ensemble: Ensemble<'_>, p: &WeightParams, nmax: usize, start: Site) -> Result<Walker> {
        p.validate()?;
        let dim = p.dim();
        let reach = LatticeBox::centered(dim, nmax as i32)?.translate(start);
        let (grid, term) = match ensemble {
            Ensemble::Quenched(env) => {
                if env.dim() != dim {
                    return Err(Error::InvalidParameter("environment and h dimensions differ".into()));
                }
                if !env.bounds().contains_box(&reach) {
                    return Err(Error::InvalidParameter(format!(
                        "environment box {} does not cover all paths of length {nmax}",
                        env.bounds().to_spec()
                    )));
                }
                let grid = Grid::new(reach);
                let mut t = vec![f64::NAN; grid.len()];
                for s in reach.sites() {
                    let v = env.value(s)?;
                    t[grid.index(s).unwrap()] = if p.beta == 0.0 {
                        0.0
                    } else if v == f64::INFINITY {
                        f64::NEG_INFINITY
                    } else {
                        -p.beta * v
                    };
                }
                (grid, SiteTerm::Quenched(t))
            }
            Ensemble::Annealed(dist) => (Grid::new(reach), SiteTerm::Annealed(phi_table(dist, p.beta, nmax + 1)?)),
        };
        let step_log = (0..2 * dim).map(|k| p.step_log_factor(k)).collect();
        let offsets = (0..2 * dim).map(|k| grid.step_offset(k)).collect();
        let root = grid.index(start).unwrap();
        Ok(Walker { grid, nmax, step_log, offsets, term, root })
    }

    pub fn nmax(&self) -> usize {
        self.nmax
    }

    pub fn site(&self, idx: usize) -> Site {
        self.grid.site(idx)
    }

    /// Runs the search. `prune(depth, idx)` returning true skips a node and
    /// its subtree. The result holds one visitor state for the root followed
    /// by one per first step, in step order.
    pub fn walk<S, I, V, P>(&self, init: I, visit: V, prune: P) -> Vec<S>
    where
        S: Send,
        I: Fn() -> S + Sync,
        V: Fn(&mut S, &NodeView<'_>) + Sync,
        P: Fn(usize, usize) -> bool + Sync,
    {
        let mut root_state = init();
        let root_path = [self.root];
        if !prune(0, self.root) {
            visit(&mut root_state, &NodeView { depth: 0, path: &root_path, log_w: 0.0, l2: 0 });
        }
        let mut out = vec![root_state];
        if self.nmax == 0 || prune(0, self.root) {
            return out;
        }
        let shards: Vec<S> = (0..self.step_log.len())
            .into_par_iter()
            .map(|k| {
                let mut s = init();
                let mut st = DfsState {
                    path: Vec::with_capacity(self.nmax + 1),
                    counts: vec![0; self.grid.len()],
                    l2: 0,
                };
                st.path.push(self.root);
                self.descend(&mut st, k, 0.0, &mut s, &visit, &prune);
                s
            })
            .collect();
        out.extend(shards);
        out
    }

    #[inline]
    fn descend<S, V, P>(&self, st: &mut DfsState, k: usize, log_w: f64, s: &mut S, visit: &V, prune: &P)
    where
        V: Fn(&mut S, &NodeView<'_>),
        P: Fn(usize, usize) -> bool,
    {
        let cur = *st.path.last().unwrap();
        let next = (cur as isize + self.offsets[k]) as usize;
        let depth = st.path.len();
        if prune(depth, next) {
            return;
        }
        let ell = st.counts[next] as usize;
        let w = match &self.term {
            SiteTerm::Quenched(t) => {
                let v = t[next];
                debug_assert!(!v.is_nan(), "walk left the environment box");
                if v == f64::NEG_INFINITY {
                    return;
                }
                log_w + self.step_log[k] + v
            }
            SiteTerm::Annealed(phi) => {
                let inc = phi[ell + 1] - phi[ell];
                if !inc.is_finite() {
                    return;
                }
                log_w + self.step_log[k] - inc
            }
        };
        st.counts[next] += 1;
        st.l2 += 2 * ell as u64 + 1;
        st.path.push(next);
        visit(s, &NodeView { depth, path: &st.path, log_w: w, l2: st.l2 });
        if depth < self.nmax {
            for k2 in 0..self.step_log.len() {
                self.descend(st, k2, w, s, visit, prune);
            }
        }
        st.path.pop();
        st.l2 -= 2 * ell as u64 + 1;
        st.counts[next] -= 1;
    }
}

fn phi_table(dist: &PotentialDistribution, beta: f64, lmax: usize) -> Result<Vec<f64>> {
    dist.phi_table(beta, lmax)
}
