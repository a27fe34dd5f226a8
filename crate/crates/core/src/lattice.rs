//! Integer lattice geometry: sites, boxes, unit steps and padded grids.

use std::fmt;
use std::ops::{Add, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 3;

/// A point of Z^d for d <= 3. Unused trailing coordinates are zero.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Site(pub [i32; MAX_DIM]);

impl Site {
    pub const ORIGIN: Site = Site([0; MAX_DIM]);

    pub fn new(coords: &[i32]) -> Site {
        assert!(coords.len() <= MAX_DIM, "at most {MAX_DIM} coordinates");
        let mut c = [0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Site(c)
    }

    pub fn axis(dim: usize, axis: usize, length: i32) -> Site {
        debug_assert!(axis < dim);
        let mut c = [0; MAX_DIM];
        c[axis] = length;
        Site(c)
    }

    pub fn coords(&self, dim: usize) -> &[i32] {
        &self.0[..dim]
    }

    pub fn l1(&self) -> i64 {
        self.0.iter().map(|&c| (c as i64).abs()).sum()
    }

    pub fn l2(&self) -> f64 {
        self.0.iter().map(|&c| (c as f64) * (c as f64)).sum::<f64>().sqrt()
    }

    pub fn dot(&self, h: &[f64]) -> f64 {
        h.iter().zip(self.0.iter()).map(|(a, &b)| a * b as f64).sum()
    }

    pub fn to_f64(&self, dim: usize) -> Vec<f64> {
        self.0[..dim].iter().map(|&c| c as f64).collect()
    }

    pub fn is_origin(&self) -> bool {
        self.0 == [0; MAX_DIM]
    }

    /// Parity of the l1 norm; the lattice is bipartite.
    pub fn parity(&self) -> i64 {
        self.l1() & 1
    }
}

impl fmt::Debug for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.0[0], self.0[1], self.0[2])
    }
}

impl Add for Site {
    type Output = Site;
    fn add(self, o: Site) -> Site {
        Site([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl Sub for Site {
    type Output = Site;
    fn sub(self, o: Site) -> Site {
        Site([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl Neg for Site {
    type Output = Site;
    fn neg(self) -> Site {
        Site([-self.0[0], -self.0[1], -self.0[2]])
    }
}

pub fn check_dim(dim: usize) -> Result<()> {
    if (1..=MAX_DIM).contains(&dim) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("dimension {dim} not in 1..={MAX_DIM}")))
    }
}

/// Unit steps in the fixed order +e1, -e1, +e2, -e2, ...
pub fn unit_steps(dim: usize) -> Vec<Site> {
    (0..2 * dim).map(unit_step).collect()
}

#[inline]
pub fn unit_step(k: usize) -> Site {
    Site::axis(MAX_DIM, k / 2, if k.is_multiple_of(2) { 1 } else { -1 })
}

fn gcd(a: i32, b: i32) -> i32 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Primitive lattice directions (coprime coordinates) with l1 norm at most
/// `height`, sorted by angle in d=2. In d=2 with height 3 there are 16.
pub fn direction_fan(dim: usize, height: i32) -> Vec<Site> {
    match dim {
        1 => vec![Site::new(&[1]), Site::new(&[-1])],
        2 => {
            let mut out = Vec::new();
            for x in -height..=height {
                for y in -height..=height {
                    if (x, y) != (0, 0) && x.abs() + y.abs() <= height && gcd(x, y) == 1 {
                        out.push(Site::new(&[x, y]));
                    }
                }
            }
            out.sort_by(|a, b| {
                let ta = (a.0[1] as f64).atan2(a.0[0] as f64);
                let tb = (b.0[1] as f64).atan2(b.0[0] as f64);
                ta.total_cmp(&tb)
            });
            out
        }
        _ => {
            let mut out = Vec::new();
            for x in -height..=height {
                for y in -height..=height {
                    for z in -height..=height {
                        if x.abs() + y.abs() + z.abs() <= height
                            && (x, y, z) != (0, 0, 0)
                            && gcd(gcd(x, y), z) == 1
                        {
                            out.push(Site::new(&[x, y, z]));
                        }
                    }
                }
            }
            out
        }
    }
}

/// A finite box `lo <= x <= hi` (inclusive) in Z^d.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct LatticeBox {
    pub dim: usize,
    pub lo: Site,
    pub hi: Site,
}

impl LatticeBox {
    pub fn new(dim: usize, lo: &[i32], hi: &[i32]) -> Result<LatticeBox> {
        check_dim(dim)?;
        if lo.len() != dim || hi.len() != dim {
            return Err(Error::InvalidParameter("box bounds must have d entries".into()));
        }
        if lo.iter().zip(hi).any(|(a, b)| a > b) {
            return Err(Error::InvalidParameter("empty box".into()));
        }
        Ok(LatticeBox { dim, lo: Site::new(lo), hi: Site::new(hi) })
    }

    /// The cube `[-r, r]^d`.
    pub fn centered(dim: usize, radius: i32) -> Result<LatticeBox> {
        let lo = vec![-radius; dim];
        let hi = vec![radius; dim];
        LatticeBox::new(dim, &lo, &hi)
    }

    /// Smallest box containing all `sites`, enlarged by `margin` on every side.
    pub fn bounding(dim: usize, sites: &[Site], margin: i32) -> Result<LatticeBox> {
        let mut lo = vec![0; dim];
        let mut hi = vec![0; dim];
        for s in sites {
            for i in 0..dim {
                lo[i] = lo[i].min(s.0[i]);
                hi[i] = hi[i].max(s.0[i]);
            }
        }
        for i in 0..dim {
            lo[i] -= margin;
            hi[i] += margin;
        }
        LatticeBox::new(dim, &lo, &hi)
    }

    pub fn extent(&self, axis: usize) -> usize {
        (self.hi.0[axis] - self.lo.0[axis] + 1) as usize
    }

    pub fn len(&self) -> usize {
        (0..self.dim).map(|i| self.extent(i)).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, s: Site) -> bool {
        (0..self.dim).all(|i| s.0[i] >= self.lo.0[i] && s.0[i] <= self.hi.0[i])
            && (self.dim..MAX_DIM).all(|i| s.0[i] == 0)
    }

    pub fn contains_box(&self, other: &LatticeBox) -> bool {
        other.dim == self.dim && self.contains(other.lo) && self.contains(other.hi)
    }

    pub fn on_boundary(&self, s: Site) -> bool {
        self.contains(s) && (0..self.dim).any(|i| s.0[i] == self.lo.0[i] || s.0[i] == self.hi.0[i])
    }

    /// Row-major index; the last coordinate varies fastest.
    pub fn index(&self, s: Site) -> Option<usize> {
        if !self.contains(s) {
            return None;
        }
        let mut idx = 0usize;
        for i in 0..self.dim {
            idx = idx * self.extent(i) + (s.0[i] - self.lo.0[i]) as usize;
        }
        Some(idx)
    }

    pub fn site(&self, mut idx: usize) -> Site {
        let mut c = [0; MAX_DIM];
        for i in (0..self.dim).rev() {
            let e = self.extent(i);
            c[i] = self.lo.0[i] + (idx % e) as i32;
            idx /= e;
        }
        Site(c)
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.len()).map(move |i| self.site(i))
    }

    pub fn translate(&self, by: Site) -> LatticeBox {
        LatticeBox { dim: self.dim, lo: self.lo + by, hi: self.hi + by }
    }

    /// Canonical text form `lo1:hi1,lo2:hi2,...`.
    pub fn to_spec(&self) -> String {
        (0..self.dim)
            .map(|i| format!("{}:{}", self.lo.0[i], self.hi.0[i]))
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn parse_spec(s: &str) -> Result<LatticeBox> {
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        for part in s.trim().split(',') {
            let (a, b) = part
                .split_once(':')
                .ok_or_else(|| Error::Parse(format!("bad box component `{part}`")))?;
            lo.push(a.trim().parse::<i32>().map_err(|e| Error::Parse(e.to_string()))?);
            hi.push(b.trim().parse::<i32>().map_err(|e| Error::Parse(e.to_string()))?);
        }
        LatticeBox::new(lo.len(), &lo, &hi)
    }
}

/// A box padded by one layer of cells on every side, with flat strides so
/// neighbour lookups are a single offset. Padding cells never hold mass.
#[derive(Clone, Debug)]
pub struct Grid {
    pub inner: LatticeBox,
    lo: Site,
    ext: [usize; MAX_DIM],
    strides: [usize; MAX_DIM],
    len: usize,
}

impl Grid {
    pub fn new(inner: LatticeBox) -> Grid {
        let dim = inner.dim;
        let mut ext = [1usize; MAX_DIM];
        let mut lo = Site::ORIGIN;
        for i in 0..dim {
            ext[i] = inner.extent(i) + 2;
            lo.0[i] = inner.lo.0[i] - 1;
        }
        let mut strides = [0usize; MAX_DIM];
        let mut s = 1usize;
        for i in (0..dim).rev() {
            strides[i] = s;
            s *= ext[i];
        }
        Grid { inner, lo, ext, strides, len: s }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.inner.dim
    }

    /// Index of a site in the padded grid, including the padding layer.
    #[inline]
    pub fn index(&self, s: Site) -> Option<usize> {
        let mut idx = 0usize;
        for i in 0..self.inner.dim {
            let off = s.0[i] - self.lo.0[i];
            if off < 0 || off as usize >= self.ext[i] {
                return None;
            }
            idx += off as usize * self.strides[i];
        }
        Some(idx)
    }

    #[inline]
    pub fn site(&self, idx: usize) -> Site {
        let mut c = [0; MAX_DIM];
        for i in 0..self.inner.dim {
            c[i] = self.lo.0[i] + ((idx / self.strides[i]) % self.ext[i]) as i32;
        }
        Site(c)
    }

    /// Signed index offset of unit step `k`.
    #[inline]
    pub fn step_offset(&self, k: usize) -> isize {
        let s = self.strides[k / 2] as isize;
        if k.is_multiple_of(2) {
            s
        } else {
            -s
        }
    }

    pub fn is_interior(&self, idx: usize) -> bool {
        self.inner.contains(self.site(idx))
    }

    /// Flat indices of the interior (non-padding) cells in row-major order.
    pub fn interior_indices(&self) -> Vec<usize> {
        self.inner.sites().map(|s| self.index(s).unwrap()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fan_has_sixteen_directions_in_the_plane() {
        let fan = direction_fan(2, 3);
        assert_eq!(fan.len(), 16);
        assert!(fan.contains(&Site::new(&[1, 2])));
        assert!(!fan.contains(&Site::new(&[2, 0])));
    }

    #[test]
    fn box_index_round_trip() {
        let b = LatticeBox::new(3, &[-1, 0, 2], &[1, 3, 4]).unwrap();
        for i in 0..b.len() {
            assert_eq!(b.index(b.site(i)), Some(i));
        }
        assert_eq!(b.index(Site::new(&[2, 0, 2])), None);
    }

    #[test]
    fn grid_padding_and_offsets() {
        let b = LatticeBox::centered(2, 2).unwrap();
        let g = Grid::new(b);
        assert_eq!(g.len(), 49);
        let o = g.index(Site::ORIGIN).unwrap();
        for k in 0..4 {
            let n = (o as isize + g.step_offset(k)) as usize;
            assert_eq!(g.site(n), unit_step(k));
        }
        assert!(g.index(Site::new(&[3, 3])).is_some());
        assert!(!g.is_interior(g.index(Site::new(&[3, 0])).unwrap()));
        assert_eq!(g.interior_indices().len(), 25);
    }

    #[test]
    fn box_spec_round_trip() {
        let b = LatticeBox::new(2, &[-3, 0], &[5, 2]).unwrap();
        assert_eq!(LatticeBox::parse_spec(&b.to_spec()).unwrap(), b);
    }
}
