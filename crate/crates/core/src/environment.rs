//! I.i.d. potential fields: laws, sampling, tilting and persistence.
//!
//! Every site draws exactly one uniform from its own ChaCha8 stream (see
//! [`crate::seeds::site_stream`]), and values are produced by inverse CDF.
//! A sub-box of a field is therefore identical to the corresponding part of
//! a larger field with the same seed, and a tilted field with `delta = 0`
//! reproduces the untilted one exactly.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{LatticeBox, Site};
use crate::seeds::site_stream;

const PROB_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum DistKind {
    /// `V = v1` with probability `p`, else `V = 0`.
    Bernoulli { p: f64, v1: f64 },
    /// Finite list of `(value, probability)` atoms; values may be `+inf`.
    Discrete { atoms: Vec<(f64, f64)> },
    /// `V ~ Uniform(0, b)`.
    Uniform { b: f64 },
}

/// Law of the single-site potential.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PotentialDistribution {
    pub kind: DistKind,
    pub traps_ok: bool,
    pub degenerate_ok: bool,
}

impl PotentialDistribution {
    pub fn new(kind: DistKind, traps_ok: bool, degenerate_ok: bool) -> Result<Self> {
        let d = PotentialDistribution { kind, traps_ok, degenerate_ok };
        d.validate()?;
        Ok(d)
    }

    pub fn bernoulli(p: f64, v1: f64) -> Result<Self> {
        Self::new(DistKind::Bernoulli { p, v1 }, false, false)
    }

    pub fn uniform(b: f64) -> Result<Self> {
        Self::new(DistKind::Uniform { b }, false, false)
    }

    pub fn discrete(atoms: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(DistKind::Discrete { atoms }, false, false)
    }

    /// Point mass at zero (flagged degenerate). Useful as the "no disorder" law.
    pub fn zero() -> Self {
        Self::new(DistKind::Discrete { atoms: vec![(0.0, 1.0)] }, false, true).unwrap()
    }

    pub fn with_traps(mut self) -> Result<Self> {
        self.traps_ok = true;
        self.validate()?;
        Ok(self)
    }

    pub fn with_degenerate(mut self) -> Result<Self> {
        self.degenerate_ok = true;
        self.validate()?;
        Ok(self)
    }

    /// Atoms in sampling order; `None` for the continuous uniform law.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match &self.kind {
            DistKind::Bernoulli { p, v1 } => Some(vec![(0.0, 1.0 - p), (*v1, *p)]),
            DistKind::Discrete { atoms } => Some(atoms.clone()),
            DistKind::Uniform { .. } => None,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidDistribution(m));
        match &self.kind {
            DistKind::Uniform { b } => {
                if !(b.is_finite() && *b >= 0.0) {
                    return bad(format!("uniform bound {b} must be finite and >= 0"));
                }
                if *b == 0.0 && !self.degenerate_ok {
                    return bad("uniform(0) is a point mass; flag degenerate-ok".into());
                }
                Ok(())
            }
            _ => {
                let atoms = self.atoms().unwrap();
                if atoms.is_empty() {
                    return bad("no atoms".into());
                }
                let mut total = 0.0;
                for &(v, p) in &atoms {
                    if v.is_nan() || v < 0.0 {
                        return bad(format!("atom value {v} must lie in [0, inf]"));
                    }
                    if !(0.0..=1.0).contains(&p) {
                        return bad(format!("atom probability {p} outside [0, 1]"));
                    }
                    if v == f64::INFINITY && p > 0.0 && !self.traps_ok {
                        return bad("trap atoms need the traps-ok flag".into());
                    }
                    total += p;
                }
                if (total - 1.0).abs() > PROB_TOL {
                    return bad(format!("probabilities sum to {total}"));
                }
                let charged: Vec<f64> =
                    atoms.iter().filter(|a| a.1 > 0.0).map(|a| a.0).collect();
                let degenerate = charged.windows(2).all(|w| w[0] == w[1]);
                if degenerate {
                    // A point mass is only allowed for tests; the flag also
                    // waives the "0 in the support" normalisation so that
                    // shifted constants such as bernoulli(1, v) are usable.
                    if !self.degenerate_ok {
                        return bad("point mass; flag degenerate-ok".into());
                    }
                    return Ok(());
                }
                if !charged.contains(&0.0) {
                    return bad("0 must lie in the support".into());
                }
                Ok(())
            }
        }
    }

    pub fn is_degenerate(&self) -> bool {
        match &self.kind {
            DistKind::Uniform { b } => *b == 0.0,
            _ => {
                let atoms = self.atoms().unwrap();
                let charged: Vec<f64> =
                    atoms.iter().filter(|a| a.1 > 0.0).map(|a| a.0).collect();
                charged.windows(2).all(|w| w[0] == w[1])
            }
        }
    }

    /// Whether `v` is a possible value of the law.
    pub fn in_support(&self, v: f64) -> bool {
        match &self.kind {
            DistKind::Uniform { b } => (0.0..=*b).contains(&v),
            _ => self.atoms().unwrap().iter().any(|a| a.1 > 0.0 && a.0 == v),
        }
    }

    /// `E V` (infinite when traps carry mass).
    pub fn mean(&self) -> f64 {
        match &self.kind {
            DistKind::Uniform { b } => b / 2.0,
            _ => self.atoms().unwrap().iter().filter(|a| a.1 > 0.0).map(|a| a.0 * a.1).sum(),
        }
    }

    /// `E exp(-s V)` in closed form; traps contribute zero.
    pub fn mgf_neg(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0) {
            return Err(Error::InvalidParameter(format!("mgf_neg needs s >= 0, got {s}")));
        }
        if s == 0.0 {
            return Ok(1.0);
        }
        Ok(match &self.kind {
            DistKind::Uniform { b } => {
                let sb = s * b;
                if sb == 0.0 {
                    1.0
                } else {
                    -(-sb).exp_m1() / sb
                }
            }
            _ => self
                .atoms()
                .unwrap()
                .iter()
                .map(|&(v, p)| if v == f64::INFINITY { 0.0 } else { p * (-s * v).exp() })
                .sum(),
        })
    }

    /// Annealed potential `phi_beta(l) = -log E exp(-beta l V)`.
    pub fn phi_beta(&self, beta: f64, ell: u32) -> Result<f64> {
        if !(beta >= 0.0) {
            return Err(Error::InvalidParameter(format!("beta must be >= 0, got {beta}")));
        }
        if ell == 0 || beta == 0.0 {
            return Ok(0.0);
        }
        let m = self.mgf_neg(beta * ell as f64)?;
        Ok(if m <= 0.0 { f64::INFINITY } else { -m.ln() })
    }

    /// Table `phi_beta(0..=lmax)`.
    pub fn phi_table(&self, beta: f64, lmax: usize) -> Result<Vec<f64>> {
        (0..=lmax).map(|l| self.phi_beta(beta, l as u32)).collect()
    }

    /// `E exp(-delta min(V, 1))`, finite for every real `delta`.
    pub fn truncated_mgf(&self, delta: f64) -> f64 {
        if delta == 0.0 {
            return 1.0;
        }
        match &self.kind {
            DistKind::Uniform { b } => {
                if *b == 0.0 {
                    return 1.0;
                }
                let c = b.min(1.0);
                let head = if delta == 0.0 { c } else { -(-delta * c).exp_m1() / delta };
                (head + (b - c) * (-delta).exp()) / b
            }
            _ => self
                .atoms()
                .unwrap()
                .iter()
                .map(|&(v, p)| p * (-delta * v.min(1.0)).exp())
                .sum(),
        }
    }

    /// Tilt exponent `g(delta) = -log E exp(-delta min(V, 1))`.
    pub fn tilt_g(&self, delta: f64) -> Result<f64> {
        if !delta.is_finite() {
            return Err(Error::InvalidParameter(format!("tilt delta {delta} not finite")));
        }
        let g = -self.truncated_mgf(delta).ln();
        if !g.is_finite() {
            return Err(Error::InvalidParameter(format!("g({delta}) is not finite")));
        }
        Ok(g)
    }

    /// Atom probabilities under the tilted law `exp(-delta min(V,1) + g(delta)) dP`.
    pub fn tilted_atoms(&self, delta: f64) -> Option<Vec<(f64, f64)>> {
        let atoms = self.atoms()?;
        let z = self.truncated_mgf(delta);
        Some(atoms.iter().map(|&(v, p)| (v, p * (-delta * v.min(1.0)).exp() / z)).collect())
    }

    /// `E[min(V,1)]` under the law tilted by `delta`.
    pub fn tilted_truncated_mean(&self, delta: f64) -> f64 {
        match &self.kind {
            DistKind::Uniform { .. } => {
                let h = 1e-6;
                // -d/dd log E e^{-dW} by a central difference; exact enough for reporting.
                -(self.truncated_mgf(delta + h).ln() - self.truncated_mgf(delta - h).ln()) / (2.0 * h)
            }
            _ => self
                .tilted_atoms(delta)
                .unwrap()
                .iter()
                .map(|&(v, p)| p * v.min(1.0))
                .sum(),
        }
    }

    /// Inverse CDF of the law tilted by `delta` evaluated at `u` in [0, 1).
    /// `delta = 0` is the untilted law and shares the exact code path.
    pub fn quantile(&self, u: f64, delta: f64) -> f64 {
        match &self.kind {
            DistKind::Uniform { b } => {
                if delta == 0.0 || *b == 0.0 {
                    return u * b;
                }
                let c = b.min(1.0);
                let head = -(-delta * c).exp_m1() / delta;
                let tail_density = (-delta).exp();
                let total = head + (b - c) * tail_density;
                let t = u * total;
                if t < head {
                    (-(-delta * t).ln_1p() / delta).min(c)
                } else {
                    (c + (t - head) / tail_density).min(*b)
                }
            }
            _ => {
                let atoms = self.atoms().unwrap();
                let w: Vec<f64> =
                    atoms.iter().map(|&(v, p)| p * (-delta * v.min(1.0)).exp()).collect();
                let total: f64 = w.iter().sum();
                let target = u * total;
                let mut cum = 0.0;
                for (i, wi) in w.iter().enumerate() {
                    cum += wi;
                    if target < cum {
                        return atoms[i].0;
                    }
                }
                // u * total rounded up to total: take the last charged atom.
                atoms.iter().rev().find(|a| a.1 > 0.0).unwrap().0
            }
        }
    }
}

fn fmt_num(x: f64) -> String {
    format!("{x}")
}

impl fmt::Display for PotentialDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            DistKind::Bernoulli { p, v1 } => write!(f, "bernoulli({},{})", fmt_num(*p), fmt_num(*v1))?,
            DistKind::Uniform { b } => write!(f, "uniform({})", fmt_num(*b))?,
            DistKind::Discrete { atoms } => {
                let body: Vec<String> =
                    atoms.iter().map(|(v, p)| format!("{}@{}", fmt_num(*v), fmt_num(*p))).collect();
                write!(f, "discrete({})", body.join(","))?
            }
        }
        if self.traps_ok {
            write!(f, "+traps-ok")?;
        }
        if self.degenerate_ok {
            write!(f, "+degenerate-ok")?;
        }
        Ok(())
    }
}

fn parse_num(s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad number `{s}`")))
}

impl FromStr for PotentialDistribution {
    type Err = Error;

    /// Accepts `bernoulli(p,v1)`, `uniform(b)` and `discrete(v@p,...)`,
    /// optionally followed by `+traps-ok` and/or `+degenerate-ok`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let close = s.find(')').ok_or_else(|| Error::Parse(format!("missing `)` in `{s}`")))?;
        let open = s.find('(').ok_or_else(|| Error::Parse(format!("missing `(` in `{s}`")))?;
        let name = &s[..open];
        let args = &s[open + 1..close];
        let mut traps_ok = false;
        let mut degenerate_ok = false;
        for flag in s[close + 1..].split('+').map(str::trim).filter(|f| !f.is_empty()) {
            match flag {
                "traps-ok" => traps_ok = true,
                "degenerate-ok" => degenerate_ok = true,
                other => return Err(Error::Parse(format!("unknown flag `{other}`"))),
            }
        }
        let kind = match name.trim() {
            "bernoulli" => {
                let parts: Vec<&str> = args.split(',').collect();
                if parts.len() != 2 {
                    return Err(Error::Parse("bernoulli takes (p, v1)".into()));
                }
                DistKind::Bernoulli { p: parse_num(parts[0])?, v1: parse_num(parts[1])? }
            }
            "uniform" => DistKind::Uniform { b: parse_num(args)? },
            "discrete" => {
                let mut atoms = Vec::new();
                for a in args.split(',') {
                    let (v, p) = a
                        .split_once('@')
                        .ok_or_else(|| Error::Parse(format!("atom `{a}` is not value@prob")))?;
                    atoms.push((parse_num(v)?, parse_num(p)?));
                }
                DistKind::Discrete { atoms }
            }
            other => return Err(Error::Parse(format!("unknown distribution `{other}`"))),
        };
        PotentialDistribution::new(kind, traps_ok, degenerate_ok)
    }
}

/// Exponential tilt applied on a sub-region of the host box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TiltSpec {
    pub delta: f64,
    pub region: LatticeBox,
}

/// A sampled potential field on a finite box.
#[derive(Clone, Debug, PartialEq)]
pub struct Environment {
    dist: PotentialDistribution,
    bx: LatticeBox,
    seed: u64,
    tilt: Option<TiltSpec>,
    values: Vec<f64>,
}

fn site_uniforms(bx: &LatticeBox, seed: u64) -> impl Iterator<Item = (Site, f64)> + '_ {
    let base = ChaCha8Rng::seed_from_u64(seed);
    bx.sites().map(move |s| {
        let mut rng = base.clone();
        rng.set_stream(site_stream(s));
        (s, rng.random::<f64>())
    })
}

impl Environment {
    pub fn sample(dist: &PotentialDistribution, bx: LatticeBox, seed: u64) -> Result<Environment> {
        dist.validate()?;
        let values = site_uniforms(&bx, seed).map(|(_, u)| dist.quantile(u, 0.0)).collect();
        Ok(Environment { dist: dist.clone(), bx, seed, tilt: None, values })
    }

    /// Field whose sites in `tilt.region` follow the tilted law; the coupling
    /// through shared uniforms makes `delta = 0` bit-identical to [`Environment::sample`].
    pub fn sample_tilted(
        dist: &PotentialDistribution,
        tilt: TiltSpec,
        bx: LatticeBox,
        seed: u64,
    ) -> Result<Environment> {
        dist.validate()?;
        if !bx.contains_box(&tilt.region) {
            return Err(Error::InvalidParameter("tilt region must lie inside the box".into()));
        }
        dist.tilt_g(tilt.delta)?;
        let values = site_uniforms(&bx, seed)
            .map(|(s, u)| {
                let d = if tilt.region.contains(s) { tilt.delta } else { 0.0 };
                dist.quantile(u, d)
            })
            .collect();
        Ok(Environment { dist: dist.clone(), bx, seed, tilt: Some(tilt), values })
    }

    /// The all-zero field on `bx`.
    pub fn zero(bx: LatticeBox) -> Environment {
        Environment {
            dist: PotentialDistribution::zero(),
            bx,
            seed: 0,
            tilt: None,
            values: vec![0.0; bx.len()],
        }
    }

    pub fn dist(&self) -> &PotentialDistribution {
        &self.dist
    }

    pub fn bounds(&self) -> &LatticeBox {
        &self.bx
    }

    pub fn dim(&self) -> usize {
        self.bx.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn tilt(&self) -> Option<&TiltSpec> {
        self.tilt.as_ref()
    }

    pub fn value(&self, s: Site) -> Result<f64> {
        self.bx
            .index(s)
            .map(|i| self.values[i])
            .ok_or_else(|| Error::OutsideBox(s.coords(self.bx.dim).to_vec()))
    }

    /// Values in box order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Copy with one site changed; used by monotonicity tests.
    pub fn with_value(&self, s: Site, v: f64) -> Result<Environment> {
        let i = self
            .bx
            .index(s)
            .ok_or_else(|| Error::OutsideBox(s.coords(self.bx.dim).to_vec()))?;
        let mut e = self.clone();
        e.values[i] = v;
        Ok(e)
    }

    /// Canonical text form: header lines followed by one `x1 .. xd value` line per site.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("dim={}\n", self.bx.dim));
        out.push_str(&format!("box={}\n", self.bx.to_spec()));
        out.push_str(&format!("dist={}\n", self.dist));
        out.push_str(&format!("seed={}\n", self.seed));
        if let Some(t) = &self.tilt {
            out.push_str(&format!("tilt={}@{}\n", t.delta, t.region.to_spec()));
        }
        for (s, v) in self.bx.sites().zip(&self.values) {
            let coords: Vec<String> = s.coords(self.bx.dim).iter().map(|c| c.to_string()).collect();
            out.push_str(&format!("{} {}\n", coords.join(" "), v));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Environment> {
        let mut dim = None;
        let mut bx = None;
        let mut dist = None;
        let mut seed = None;
        let mut tilt = None;
        let mut values = Vec::new();
        let mut expected = 0usize;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            if let Some((key, val)) = line.split_once('=') {
                match key.trim() {
                    "dim" => dim = Some(val.trim().parse::<usize>().map_err(|e| Error::Parse(e.to_string()))?),
                    "box" => bx = Some(LatticeBox::parse_spec(val)?),
                    "dist" => dist = Some(val.parse::<PotentialDistribution>()?),
                    "seed" => seed = Some(val.trim().parse::<u64>().map_err(|e| Error::Parse(e.to_string()))?),
                    "tilt" => {
                        let (d, r) = val
                            .split_once('@')
                            .ok_or_else(|| Error::Parse("tilt must be delta@box".into()))?;
                        tilt = Some(TiltSpec { delta: parse_num(d)?, region: LatticeBox::parse_spec(r)? });
                    }
                    other => return Err(Error::Parse(format!("unknown header `{other}`"))),
                }
                continue;
            }
            let b = bx.ok_or_else(|| Error::Parse("site line before box header".into()))?;
            let d = dim.ok_or_else(|| Error::Parse("site line before dim header".into()))?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != d + 1 {
                return Err(Error::Parse(format!("site line `{line}` needs {} fields", d + 1)));
            }
            let coords: Vec<i32> = fields[..d]
                .iter()
                .map(|c| c.parse::<i32>().map_err(|e| Error::Parse(e.to_string())))
                .collect::<Result<_>>()?;
            if Site::new(&coords) != b.site(expected) {
                return Err(Error::Parse(format!("site line `{line}` out of canonical order")));
            }
            values.push(parse_num(fields[d])?);
            expected += 1;
        }
        let (dim, bx, dist, seed) = match (dim, bx, dist, seed) {
            (Some(a), Some(b), Some(c), Some(d)) => (a, b, c, d),
            _ => return Err(Error::Parse("missing header line".into())),
        };
        if bx.dim != dim {
            return Err(Error::Parse("dim and box disagree".into()));
        }
        if values.len() != bx.len() {
            return Err(Error::Parse(format!("expected {} sites, found {}", bx.len(), values.len())));
        }
        if let Some(v) = values.iter().find(|v| !dist.in_support(**v)) {
            return Err(Error::Parse(format!("value {v} not in the support of {dist}")));
        }
        Ok(Environment { dist, bx, seed, tilt, values })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_mass_atom_gives_zero_field() {
        let d = PotentialDistribution::bernoulli(0.0, 1.0).unwrap_err();
        assert!(matches!(d, Error::InvalidDistribution(_)));
        let d = PotentialDistribution::bernoulli(0.0, 1.0)
            .or_else(|_| PotentialDistribution::new(DistKind::Bernoulli { p: 0.0, v1: 1.0 }, false, true))
            .unwrap();
        let env = Environment::sample(&d, LatticeBox::centered(2, 4).unwrap(), 9).unwrap();
        assert!(env.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mgf_closed_forms() {
        let d = PotentialDistribution::bernoulli(0.3, 1.0).unwrap();
        for s in [0.0, 0.5, 2.0] {
            let want = 1.0 - 0.3 + 0.3 * (-s as f64).exp();
            assert!((d.mgf_neg(s).unwrap() - want).abs() < 1e-15);
        }
        let t = PotentialDistribution::discrete(vec![(0.0, 0.5), (f64::INFINITY, 0.5)]);
        assert!(t.is_err());
        let t = PotentialDistribution::new(
            DistKind::Discrete { atoms: vec![(0.0, 0.5), (f64::INFINITY, 0.5)] },
            true,
            false,
        )
        .unwrap();
        assert_eq!(t.mgf_neg(1.0).unwrap(), 0.5);
        assert!(d.mgf_neg(-1.0).is_err());
        let u = PotentialDistribution::uniform(2.0).unwrap();
        assert!((u.mgf_neg(1.5).unwrap() - (1.0 - (-3.0f64).exp()) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn point_mass_phi_is_linear() {
        let d = PotentialDistribution::new(DistKind::Bernoulli { p: 1.0, v1: 1.0 }, false, true).unwrap();
        for l in 0..10u32 {
            assert!((d.phi_beta(0.7, l).unwrap() - 0.7 * l as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn tilt_g_closed_forms() {
        for p in [0.2, 0.5] {
            let a = PotentialDistribution::bernoulli(p, 1.0).unwrap();
            let b = PotentialDistribution::bernoulli(p, 3.0).unwrap();
            for delta in [-0.7, 0.0, 0.1, 1.3] {
                let want = -(1.0 - p + p * (-delta as f64).exp()).ln();
                assert!((a.tilt_g(delta).unwrap() - want).abs() < 1e-14);
                assert!((b.tilt_g(delta).unwrap() - want).abs() < 1e-14);
            }
        }
        let u = PotentialDistribution::uniform(0.5).unwrap();
        assert_eq!(u.tilt_g(0.0).unwrap(), 0.0);
        let want = -((1.0 - (-0.5f64 * 2.0).exp()) / (2.0 * 0.5)).ln();
        assert!((u.tilt_g(2.0).unwrap() - want).abs() < 1e-14);
    }

    #[test]
    fn dist_spec_round_trip() {
        for s in [
            "bernoulli(0.5,1)",
            "uniform(2.5)",
            "discrete(0@0.25,1.5@0.5,inf@0.25)+traps-ok",
            "discrete(0@1)+degenerate-ok",
        ] {
            let d: PotentialDistribution = s.parse().unwrap();
            assert_eq!(d.to_string(), s);
        }
        assert!("discrete(1@1)".parse::<PotentialDistribution>().is_err());
        assert!("discrete(1@0.5,2@0.5)".parse::<PotentialDistribution>().is_err());
    }

    #[test]
    fn uniform_tilted_quantile_is_monotone_and_in_range() {
        let u = PotentialDistribution::uniform(2.0).unwrap();
        let mut prev = -1.0;
        for k in 0..1000 {
            let x = u.quantile(k as f64 / 1000.0, 0.8);
            assert!(x >= prev && (0.0..=2.0).contains(&x));
            prev = x;
        }
    }

    #[test]
    fn box_queries_outside_fail() {
        let d = PotentialDistribution::bernoulli(0.5, 1.0).unwrap();
        let env = Environment::sample(&d, LatticeBox::centered(1, 3).unwrap(), 1).unwrap();
        assert!(env.value(Site::new(&[4])).is_err());
        assert!(env.value(Site::new(&[-3])).is_ok());
    }
}
