//! Cones, cone points, irreducible decompositions and skeletons.
//!
//! Cone points are time-ordered: `gamma_k` is a cone point when every later
//! site lies in `gamma_k + Y>` and every earlier site in `gamma_k + Y<`.
//! This makes the pieces between consecutive cone points cone-confined and
//! keeps them irreducible when re-tested on their own.

mod skeleton;
mod experiments;

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{LatticeBox, Site};
use crate::lyapunov::{FreeWalkNorm, LyapunovNorm};
use crate::path::LatticePath;

pub use skeleton::{build_skeleton, skeleton_surcharge, surcharge, SkeletonDecomposition};
pub use experiments::{
    annealed_lambda_lower_bound, cone_density_test, surcharge_tail_test, ConeDensityReport, DensityRow, Outcome,
    SurchargeRow, SurchargeTailReport,
};

/// Forward cone `Y>(h) = { y : a(y) - h.y < delta a(y) }` for a frozen norm.
#[derive(Clone, Debug)]
pub struct ConeSpec {
    pub h: Vec<f64>,
    pub delta: f64,
    /// Mass at which the norm was evaluated (metadata).
    pub lambda: f64,
    pub norm: Arc<dyn LyapunovNorm>,
}

impl ConeSpec {
    pub fn new(h: Vec<f64>, delta: f64, lambda: f64, norm: Arc<dyn LyapunovNorm>) -> Result<ConeSpec> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidParameter(format!("cone aperture {delta} outside (0, 1)")));
        }
        if h.len() != norm.dim() || h.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("h must be finite with the norm's dimension".into()));
        }
        Ok(ConeSpec { h, delta, lambda, norm })
    }

    /// Cone of the potential-free walk at `lambda = Lambda_0(h)`, so that
    /// `h` lies on the dual unit sphere.
    pub fn free_walk(h: Vec<f64>, delta: f64) -> Result<ConeSpec> {
        if h.iter().all(|&x| x == 0.0) {
            return Err(Error::InvalidParameter("cones need a nonzero drift".into()));
        }
        let lambda = FreeWalkNorm::lambda_of(&h);
        let norm = FreeWalkNorm::new(h.len(), lambda)?;
        ConeSpec::new(h, delta, lambda, Arc::new(norm))
    }

    pub fn dim(&self) -> usize {
        self.h.len()
    }

    pub fn surcharge(&self, y: Site) -> f64 {
        self.norm.at_site(y) - y.dot(&self.h)
    }

    pub fn in_forward(&self, y: Site) -> bool {
        if y.is_origin() {
            return false;
        }
        let a = self.norm.at_site(y);
        a - y.dot(&self.h) < self.delta * a
    }

    /// Precomputed memberships and norm values for displacements with
    /// coordinates in `[-radius, radius]`.
    pub fn lookup(&self, radius: i32) -> Result<ConeLookup> {
        let bx = LatticeBox::centered(self.dim(), radius)?;
        let mut norm_vals = Vec::with_capacity(bx.len());
        let mut fwd = Vec::with_capacity(bx.len());
        for y in bx.sites() {
            norm_vals.push(self.norm.at_site(y));
            fwd.push(self.in_forward(y));
        }
        Ok(ConeLookup { spec: self.clone(), bx, norm_vals, fwd })
    }

    /// Metadata describing the frozen cone.
    pub fn describe(&self) -> ConeInfo {
        ConeInfo { h: self.h.clone(), delta: self.delta, lambda: self.lambda, norm: format!("{:?}", self.norm) }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ConeInfo {
    pub h: Vec<f64>,
    pub delta: f64,
    pub lambda: f64,
    pub norm: String,
}

/// Table of cone memberships and norm values on a displacement box, with
/// direct evaluation outside it.
#[derive(Clone, Debug)]
pub struct ConeLookup {
    spec: ConeSpec,
    bx: LatticeBox,
    norm_vals: Vec<f64>,
    fwd: Vec<bool>,
}

impl ConeLookup {
    pub fn spec(&self) -> &ConeSpec {
        &self.spec
    }

    #[inline]
    pub fn forward(&self, y: Site) -> bool {
        match self.bx.index(y) {
            Some(i) => self.fwd[i],
            None => self.spec.in_forward(y),
        }
    }

    #[inline]
    pub fn norm(&self, y: Site) -> f64 {
        match self.bx.index(y) {
            Some(i) => self.norm_vals[i],
            None => self.spec.norm.at_site(y),
        }
    }

    pub fn surcharge(&self, y: Site) -> f64 {
        self.norm(y) - y.dot(&self.spec.h)
    }
}

/// Indices of the cone points of `path`, increasing.
pub fn cone_points(path: &LatticePath, cone: &ConeLookup) -> Vec<usize> {
    let s = path.sites();
    (0..s.len())
        .filter(|&k| {
            (0..k).all(|j| cone.forward(s[k] - s[j])) && (k + 1..s.len()).all(|j| cone.forward(s[j] - s[k]))
        })
        .collect()
}

/// Whether `path` lies in `Y> cap (x + Y<)` apart from its endpoints.
pub fn is_cone_confined(path: &LatticePath, cone: &ConeLookup) -> bool {
    let s = path.sites();
    let (a, b) = (s[0], s[s.len() - 1]);
    s.len() == 1
        || (s[1..].iter().all(|&y| cone.forward(y - a)) && s[..s.len() - 1].iter().all(|&y| cone.forward(b - y)))
}

/// `gamma = prefix + pieces + suffix`, split at consecutive cone points.
#[derive(Clone, Debug, Serialize)]
pub struct IrreducibleSplit {
    pub cone_points: Vec<usize>,
    /// Path up to the first cone point (the whole path when flagged).
    pub prefix: LatticePath,
    pub pieces: Vec<LatticePath>,
    /// Path from the last cone point on.
    pub suffix: LatticePath,
    /// Fewer than two cone points: nothing was split.
    pub flagged: bool,
}

impl IrreducibleSplit {
    pub fn reassemble(&self) -> Result<LatticePath> {
        let mut out = self.prefix.clone();
        for p in &self.pieces {
            out = out.concat(p)?;
        }
        if !self.flagged {
            out = out.concat(&self.suffix)?;
        }
        Ok(out)
    }
}

pub fn irreducible_decompose(path: &LatticePath, cone: &ConeLookup) -> IrreducibleSplit {
    let cp = cone_points(path, cone);
    let n = path.len();
    if cp.len() < 2 {
        return IrreducibleSplit {
            cone_points: cp,
            prefix: path.clone(),
            pieces: Vec::new(),
            suffix: path.segment(n, n),
            flagged: true,
        };
    }
    let pieces = cp.windows(2).map(|w| path.segment(w[0], w[1])).collect();
    IrreducibleSplit {
        prefix: path.segment(0, cp[0]),
        suffix: path.segment(cp[cp.len() - 1], n),
        pieces,
        cone_points: cp,
        flagged: false,
    }
}

/// Incremental cone-point bookkeeping along a growing path.
///
/// `cand[t]` is the bit set of cone points of `gamma_0..gamma_t`;
/// `confined[t]` records whether every `gamma_j`, `j < t`, lies in
/// `gamma_t + Y<`.
#[derive(Clone, Debug, Default)]
pub(crate) struct ConeTracker {
    cand: Vec<u64>,
    confined: Vec<bool>,
}

impl ConeTracker {
    pub(crate) fn new() -> ConeTracker {
        ConeTracker::default()
    }

    /// Updates the state for `sites[..=depth]`, rebuilding missing levels.
    pub(crate) fn update(&mut self, sites: &[Site], depth: usize, cone: &ConeLookup) {
        debug_assert!(depth < 64);
        if self.cand.len() > depth {
            self.cand.truncate(depth);
            self.confined.truncate(depth);
        }
        while self.cand.len() <= depth {
            let t = self.cand.len();
            if t == 0 {
                self.cand.push(1);
                self.confined.push(true);
                continue;
            }
            let mut ok = 0u64;
            for j in 0..t {
                if cone.forward(sites[t] - sites[j]) {
                    ok |= 1 << j;
                }
            }
            let all = (1u64 << t) - 1;
            let mut c = self.cand[t - 1] & ok;
            if ok == all {
                c |= 1 << t;
            }
            self.cand.push(c);
            self.confined.push(ok == all);
        }
    }

    /// Number of cone points of the current prefix.
    pub(crate) fn count(&self) -> u32 {
        self.cand.last().map_or(0, |c| c.count_ones())
    }

    /// Every earlier site lies in the backward cone of the last one.
    pub(crate) fn last_sees_all(&self) -> bool {
        *self.confined.last().unwrap_or(&true)
    }
}
