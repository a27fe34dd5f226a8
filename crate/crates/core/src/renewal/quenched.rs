//! Quenched cone-confined weights from every start point and the triangular
//! inversion that recovers the quenched irreducible weights.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::coarse::ConeLookup;
use crate::environment::{Environment, PotentialDistribution};
use crate::error::{Error, Result};
use crate::lattice::{unit_step, LatticeBox, Site};
use crate::path::WeightParams;

use super::table::{enumerate_cone, step_code, IrreducibleTable, KernelTable};

/// A cone-confined path from the origin, packed three bits per step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Shape {
    pub code: u64,
    pub len: u8,
    pub irreducible: bool,
    pub end: Site,
}

impl Shape {
    pub(super) fn from_sites(sites: &[Site], irreducible: bool) -> Shape {
        let mut code = 0u64;
        for (t, w) in sites.windows(2).enumerate() {
            code |= step_code(w[1] - w[0]) << (3 * t);
        }
        Shape { code, len: (sites.len() - 1) as u8, irreducible, end: sites[sites.len() - 1] }
    }

    /// Sites `gamma_1, ..., gamma_n` relative to the start.
    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        let mut cur = Site::ORIGIN;
        (0..self.len as usize).map(move |t| {
            cur = cur + unit_step(((self.code >> (3 * t)) & 7) as usize);
            cur
        })
    }
}

/// All cone-confined paths from the origin up to length `nmax`.
#[derive(Clone, Debug)]
pub struct ConeShapes {
    pub dim: usize,
    pub nmax: usize,
    pub shapes: Vec<Shape>,
}

impl ConeShapes {
    pub fn enumerate(cone: &ConeLookup, nmax: usize) -> Result<ConeShapes> {
        let (_, s) = enumerate_cone(&PotentialDistribution::zero(), 0.0, cone, nmax, true)?;
        Ok(s.unwrap())
    }

    /// Annealed table and shapes from one enumeration.
    pub fn with_annealed(
        dist: &PotentialDistribution,
        beta: f64,
        cone: &ConeLookup,
        nmax: usize,
    ) -> Result<(IrreducibleTable, ConeShapes)> {
        let (t, s) = enumerate_cone(dist, beta, cone, nmax, true)?;
        Ok((t, s.unwrap()))
    }

    /// The origin and every endpoint reachable in fewer than `nmax` steps,
    /// each with the shortest such length.
    pub fn starts(&self) -> BTreeMap<Site, usize> {
        let mut out = BTreeMap::from([(Site::ORIGIN, 0usize)]);
        for s in &self.shapes {
            if (s.len as usize) < self.nmax {
                let e = out.entry(s.end).or_insert(s.len as usize);
                *e = (*e).min(s.len as usize);
            }
        }
        out
    }
}

/// Quenched `t^{theta_y omega}` and directly classified `f^{theta_y omega}`
/// for every start `y`, up to length `nmax - L(y)`.
#[derive(Clone, Debug)]
pub struct QuenchedKernels {
    pub nmax: usize,
    pub t: BTreeMap<Site, KernelTable>,
    pub f_direct: BTreeMap<Site, KernelTable>,
}

impl QuenchedKernels {
    pub fn compute(env: &Environment, p: &WeightParams, shapes: &ConeShapes) -> Result<QuenchedKernels> {
        p.validate()?;
        let dim = shapes.dim;
        if env.dim() != dim || p.dim() != dim {
            return Err(Error::InvalidParameter("environment, parameters and shapes disagree on d".into()));
        }
        let need = LatticeBox::centered(dim, shapes.nmax as i32)?;
        if !env.bounds().contains_box(&need) {
            return Err(Error::InvalidParameter(format!("environment must cover {}", need.to_spec())));
        }
        let starts: Vec<(Site, usize)> = shapes.starts().into_iter().collect();
        let step = ((2 * dim) as f64).ln();
        let pot = |s: Site| -> f64 {
            if p.beta == 0.0 {
                return 0.0;
            }
            let v = env.value(s).expect("site checked against the box");
            if v == f64::INFINITY {
                f64::NEG_INFINITY
            } else {
                -p.beta * v
            }
        };
        let built: Vec<Result<(Site, KernelTable, KernelTable)>> = starts
            .par_iter()
            .map(|&(y, l)| {
                let nm = shapes.nmax - l;
                let mut t = KernelTable::new(dim, nm)?;
                let mut f = KernelTable::new(dim, nm)?;
                t.set(Site::ORIGIN, 0, 1.0);
                for s in shapes.shapes.iter().filter(|s| (s.len as usize) <= nm) {
                    let n = s.len as usize;
                    let mut lw = s.end.dot(&p.h) - (p.lambda + step) * n as f64;
                    for z in s.sites() {
                        lw += pot(y + z);
                    }
                    let w = lw.exp();
                    t.add(s.end, n, w);
                    if s.irreducible {
                        f.add(s.end, n, w);
                    }
                }
                Ok((y, t, f))
            })
            .collect();
        let mut t = BTreeMap::new();
        let mut f_direct = BTreeMap::new();
        for r in built {
            let (y, a, b) = r?;
            t.insert(y, a);
            f_direct.insert(y, b);
        }
        Ok(QuenchedKernels { nmax: shapes.nmax, t, f_direct })
    }

    /// Triangular inversion of `t^{theta_y} = sum f^{theta_y} * t^{theta_{y+z}}`.
    pub fn invert(&self) -> Result<BTreeMap<Site, KernelTable>> {
        let mut out = BTreeMap::new();
        for (&y, ty) in &self.t {
            let nm = ty.nmax;
            let mut f = KernelTable::new(ty.dim, nm)?;
            let mut layers: Vec<Vec<(Site, f64)>> = vec![Vec::new()];
            for n in 1..=nm {
                for (x, v) in ty.layer(n) {
                    f.add(x, n, v);
                }
                for m in 1..n {
                    for &(z, a) in &layers[m] {
                        let tz = self.t.get(&(y + z)).ok_or_else(|| {
                            Error::IdentityViolation(format!("no table for start {:?}", y + z))
                        })?;
                        for (w, b) in tz.layer(n - m) {
                            f.add(z + w, n, -a * b);
                        }
                    }
                }
                layers.push(f.layer(n));
            }
            out.insert(y, f);
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct InversionReport {
    pub starts: usize,
    pub nmax: usize,
    /// Re-convolution of the recovered `f` against `t`, first-piece form.
    pub forward_residual: f64,
    /// Same identity in last-piece form `t^omega = sum t^omega_z f^{theta_z}`.
    pub last_piece_residual: f64,
    /// Recovered against directly classified irreducible weights.
    pub direct_mismatch: f64,
    pub min_recovered_f: f64,
    /// Recovered weights below `-1e-9`.
    pub negative_flagged: usize,
    #[serde(skip)]
    pub kernels: QuenchedKernels,
    #[serde(skip)]
    pub recovered: BTreeMap<Site, KernelTable>,
}

/// Quenched irreducible weights recovered from quenched cone-confined
/// weights, with the forward identity re-verified. Residuals are relative to
/// the largest `t` entry.
pub fn quenched_irreducible_inversion(env: &Environment, p: &WeightParams, shapes: &ConeShapes) -> Result<InversionReport> {
    let kernels = QuenchedKernels::compute(env, p, shapes)?;
    let recovered = kernels.invert()?;
    let scale = kernels.t.values().map(KernelTable::max_abs).fold(0.0, f64::max);
    let mut forward = 0.0f64;
    let mut last_piece = 0.0f64;
    let mut mismatch = 0.0f64;
    let mut min_f = f64::INFINITY;
    let mut negative = 0;
    for (&y, ty) in &kernels.t {
        let fy = &recovered[&y];
        let nm = ty.nmax;
        let mut first = KernelTable::new(ty.dim, nm)?;
        let mut last = KernelTable::new(ty.dim, nm)?;
        first.set(Site::ORIGIN, 0, 1.0);
        last.set(Site::ORIGIN, 0, 1.0);
        for n in 1..=nm {
            for m in 1..=n {
                for (z, a) in fy.layer(m) {
                    if m == n {
                        first.add(z, n, a);
                        continue;
                    }
                    for (w, b) in kernels.t[&(y + z)].layer(n - m) {
                        first.add(z + w, n, a * b);
                    }
                }
                for (z, a) in ty.layer(n - m) {
                    for (w, b) in recovered[&(y + z)].layer(m) {
                        last.add(z + w, n, a * b);
                    }
                }
            }
        }
        forward = forward.max(first.max_abs_diff(ty));
        last_piece = last_piece.max(last.max_abs_diff(ty));
        mismatch = mismatch.max(fy.max_abs_diff(&kernels.f_direct[&y]));
        for n in 1..=nm {
            for (_, v) in fy.layer(n) {
                min_f = min_f.min(v);
                if v < -1e-9 * scale {
                    negative += 1;
                }
            }
        }
    }
    Ok(InversionReport {
        starts: kernels.t.len(),
        nmax: kernels.nmax,
        forward_residual: forward / scale,
        last_piece_residual: last_piece / scale,
        direct_mismatch: mismatch / scale,
        min_recovered_f: min_f,
        negative_flagged: negative,
        kernels,
        recovered,
    })
}
