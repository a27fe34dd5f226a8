//! Nearest-neighbour lattice paths, local times and path weights.
//!
//! Local times count visits at times `1..=n`; the starting site is not
//! charged. With this convention annealed weights are exactly the
//! environment average of quenched weights and concatenation is additive.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::environment::{Environment, PotentialDistribution};
use crate::error::{Error, Result};
use crate::lattice::{check_dim, unit_step, Site};

/// Inverse temperature, mass per step and pulling force.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeightParams {
    pub beta: f64,
    pub lambda: f64,
    pub h: Vec<f64>,
}

impl WeightParams {
    pub fn new(beta: f64, lambda: f64, h: Vec<f64>) -> Result<WeightParams> {
        let p = WeightParams { beta, lambda, h };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::InvalidParameter(format!("beta = {} must be finite and >= 0", self.beta)));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::InvalidParameter(format!("lambda = {} must be finite and >= 0", self.lambda)));
        }
        if self.h.iter().any(|x| !x.is_finite()) || self.h.is_empty() {
            return Err(Error::InvalidParameter("h must be a finite vector".into()));
        }
        check_dim(self.h.len())
    }

    pub fn dim(&self) -> usize {
        self.h.len()
    }

    /// Log of the per-step factor `exp(h.e - lambda) / 2d` for unit step `k`.
    pub fn step_log_factor(&self, k: usize) -> f64 {
        let d = self.dim();
        unit_step(k).dot(&self.h) - self.lambda - ((2 * d) as f64).ln()
    }
}

/// Visit counts of a path at times `1..=n`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LocalTimeProfile {
    pub counts: BTreeMap<Site, u32>,
}

impl LocalTimeProfile {
    pub fn total(&self) -> u64 {
        self.counts.values().map(|&c| c as u64).sum()
    }

    /// `sum_x l(x)^2`.
    pub fn square_sum(&self) -> u64 {
        self.counts.values().map(|&c| (c as u64) * (c as u64)).sum()
    }
}

/// A nearest-neighbour trajectory `gamma_0, ..., gamma_n`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LatticePath {
    dim: usize,
    sites: Vec<Site>,
}

impl Serialize for LatticePath {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let coords: Vec<&[i32]> = self.sites.iter().map(|s| s.coords(self.dim)).collect();
        coords.serialize(ser)
    }
}

impl LatticePath {
    /// A path starting at the origin.
    pub fn new(dim: usize, sites: Vec<Site>) -> Result<LatticePath> {
        if sites.first() != Some(&Site::ORIGIN) {
            return Err(Error::InvalidPath("paths start at the origin; use LatticePath::shifted".into()));
        }
        Self::shifted(dim, sites)
    }

    /// A path with an arbitrary starting site.
    pub fn shifted(dim: usize, sites: Vec<Site>) -> Result<LatticePath> {
        check_dim(dim)?;
        if sites.is_empty() {
            return Err(Error::InvalidPath("a path has at least one site".into()));
        }
        for s in &sites {
            if s.0[dim..].iter().any(|&c| c != 0) {
                return Err(Error::InvalidPath(format!("site {s:?} has coordinates beyond d = {dim}")));
            }
        }
        for w in sites.windows(2) {
            if (w[1] - w[0]).l1() != 1 {
                return Err(Error::InvalidPath(format!("{:?} -> {:?} is not a unit step", w[0], w[1])));
            }
        }
        Ok(LatticePath { dim, sites })
    }

    /// Path from `start` following unit-step codes (see [`crate::lattice::unit_steps`]).
    pub fn from_steps(dim: usize, start: Site, steps: &[usize]) -> Result<LatticePath> {
        let mut sites = Vec::with_capacity(steps.len() + 1);
        sites.push(start);
        let mut cur = start;
        for &k in steps {
            if k >= 2 * dim {
                return Err(Error::InvalidPath(format!("step code {k} invalid in d = {dim}")));
            }
            cur = cur + unit_step(k);
            sites.push(cur);
        }
        Self::shifted(dim, sites)
    }

    pub(crate) fn from_sites_unchecked(dim: usize, sites: Vec<Site>) -> LatticePath {
        LatticePath { dim, sites }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of steps `n`.
    pub fn len(&self) -> usize {
        self.sites.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.sites.len() == 1
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn start(&self) -> Site {
        self.sites[0]
    }

    pub fn end(&self) -> Site {
        *self.sites.last().unwrap()
    }

    /// Spatial extension `gamma_n - gamma_0`.
    pub fn extension(&self) -> Site {
        self.end() - self.start()
    }

    /// Step codes of the path.
    pub fn steps(&self) -> Vec<usize> {
        self.sites
            .windows(2)
            .map(|w| {
                let d = w[1] - w[0];
                let axis = (0..self.dim).find(|&i| d.0[i] != 0).unwrap();
                2 * axis + usize::from(d.0[axis] < 0)
            })
            .collect()
    }

    pub fn reversed(&self) -> LatticePath {
        let mut s = self.sites.clone();
        s.reverse();
        LatticePath { dim: self.dim, sites: s }
    }

    pub fn translated(&self, by: Site) -> LatticePath {
        LatticePath { dim: self.dim, sites: self.sites.iter().map(|&s| s + by).collect() }
    }

    /// Sub-path over times `a..=b`, keeping absolute positions.
    pub fn segment(&self, a: usize, b: usize) -> LatticePath {
        LatticePath { dim: self.dim, sites: self.sites[a..=b].to_vec() }
    }

    /// Concatenation; `other` must start where `self` ends.
    pub fn concat(&self, other: &LatticePath) -> Result<LatticePath> {
        if other.start() != self.end() || other.dim != self.dim {
            return Err(Error::InvalidPath("concatenated paths must share the junction site".into()));
        }
        let mut s = self.sites.clone();
        s.extend_from_slice(&other.sites[1..]);
        Ok(LatticePath { dim: self.dim, sites: s })
    }

    pub fn local_times(&self) -> LocalTimeProfile {
        let mut counts = BTreeMap::new();
        for s in &self.sites[1..] {
            *counts.entry(*s).or_insert(0) += 1;
        }
        LocalTimeProfile { counts }
    }

    /// One line per site, whitespace-separated coordinates.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.sites {
            let c: Vec<String> = s.coords(self.dim).iter().map(|c| c.to_string()).collect();
            out.push_str(&c.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<LatticePath> {
        let mut sites = Vec::new();
        let mut dim = None;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let c: Vec<i32> = line
                .split_whitespace()
                .map(|t| t.parse::<i32>().map_err(|e| Error::Parse(e.to_string())))
                .collect::<Result<_>>()?;
            if *dim.get_or_insert(c.len()) != c.len() {
                return Err(Error::Parse("inconsistent coordinate count".into()));
            }
            check_dim(c.len())?;
            sites.push(Site::new(&c));
        }
        Self::shifted(dim.unwrap_or(1), sites)
    }
}

fn check_params(path: &LatticePath, p: &WeightParams) -> Result<()> {
    p.validate()?;
    if p.dim() != path.dim() {
        return Err(Error::InvalidParameter("h and path dimensions differ".into()));
    }
    Ok(())
}

fn free_part(path: &LatticePath, p: &WeightParams) -> f64 {
    let n = path.len() as f64;
    path.extension().dot(&p.h) - p.lambda * n - n * ((2 * path.dim()) as f64).ln()
}

/// `h.X - lambda n - beta sum_{i>=1} V(gamma_i) - n log 2d`; `-inf` on traps.
pub fn log_quenched_weight(path: &LatticePath, env: &Environment, p: &WeightParams) -> Result<f64> {
    check_params(path, p)?;
    let mut pot = 0.0;
    for s in &path.sites()[1..] {
        let v = env.value(*s)?;
        if p.beta > 0.0 {
            pot += v;
        }
    }
    if pot == f64::INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(free_part(path, p) - p.beta * pot)
}

/// `h.X - lambda n - sum_x phi_beta(l(x)) - n log 2d`.
pub fn log_annealed_weight(path: &LatticePath, dist: &PotentialDistribution, p: &WeightParams) -> Result<f64> {
    check_params(path, p)?;
    let mut phi = 0.0;
    for &l in path.local_times().counts.values() {
        phi += dist.phi_beta(p.beta, l)?;
    }
    Ok(free_part(path, p) - phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeBox;

    fn p1(beta: f64, lambda: f64, h: f64) -> WeightParams {
        WeightParams::new(beta, lambda, vec![h]).unwrap()
    }

    #[test]
    fn extension_and_local_times() {
        let path = LatticePath::new(2, vec![Site::new(&[0, 0]), Site::new(&[1, 0]), Site::new(&[1, 1])]).unwrap();
        assert_eq!(path.extension(), Site::new(&[1, 1]));
        assert_eq!(path.reversed().extension(), -path.extension());
        let d1 = LatticePath::from_steps(1, Site::ORIGIN, &[0, 1, 0]).unwrap();
        let lt = d1.local_times();
        assert_eq!(lt.counts.get(&Site::new(&[1])), Some(&2));
        assert_eq!(lt.counts.get(&Site::new(&[0])), Some(&1));
        assert_eq!(lt.total(), 3);
        assert!(LatticePath::new(1, vec![Site::ORIGIN]).unwrap().local_times().counts.is_empty());
    }

    #[test]
    fn rejects_bad_paths() {
        assert!(LatticePath::new(1, vec![Site::new(&[1])]).is_err());
        assert!(LatticePath::new(1, vec![Site::ORIGIN, Site::new(&[2])]).is_err());
        assert!(LatticePath::shifted(1, vec![Site::new(&[5]), Site::new(&[4])]).is_ok());
    }

    #[test]
    fn single_step_weight_in_one_dimension() {
        let d = PotentialDistribution::bernoulli(0.5, 1.0).unwrap();
        let env = Environment::sample(&d, LatticeBox::centered(1, 3).unwrap(), 4).unwrap();
        let path = LatticePath::from_steps(1, Site::ORIGIN, &[0]).unwrap();
        let p = p1(0.8, 0.3, 1.1);
        let want = 1.1 - 0.3 - 0.8 * env.value(Site::new(&[1])).unwrap() - 2f64.ln();
        assert!((log_quenched_weight(&path, &env, &p).unwrap() - want).abs() < 1e-15);
        let free = p1(0.0, 0.0, 0.0);
        let long = LatticePath::from_steps(1, Site::ORIGIN, &[0, 1, 1, 0]).unwrap();
        assert!((log_quenched_weight(&long, &env, &free).unwrap() + 4.0 * 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn traps_give_minus_infinity() {
        let d = PotentialDistribution::new(
            crate::environment::DistKind::Discrete { atoms: vec![(0.0, 0.5), (f64::INFINITY, 0.5)] },
            true,
            false,
        )
        .unwrap();
        let env = Environment::sample(&d, LatticeBox::centered(1, 4).unwrap(), 11).unwrap();
        let trap = (1..=4).map(|x| Site::new(&[x])).find(|s| env.value(*s).unwrap().is_infinite());
        if let Some(t) = trap {
            let steps = vec![0usize; t.0[0] as usize];
            let path = LatticePath::from_steps(1, Site::ORIGIN, &steps).unwrap();
            assert_eq!(log_quenched_weight(&path, &env, &p1(1.0, 0.0, 0.0)).unwrap(), f64::NEG_INFINITY);
            assert!(log_quenched_weight(&path, &env, &p1(0.0, 0.0, 0.0)).unwrap().is_finite());
        }
    }

    #[test]
    fn text_round_trip() {
        let path = LatticePath::from_steps(2, Site::ORIGIN, &[0, 2, 2, 1, 3]).unwrap();
        assert_eq!(LatticePath::from_text(&path.to_text()).unwrap(), path);
        assert_eq!(path.steps(), vec![0, 2, 2, 1, 3]);
    }
}
