//! K-skeletons: ball-exit coarse graining of a path.
//!
//! Starting from `u_0 = 0`, `v_i` is the first time the path leaves the open
//! ball `{ a(y - u_{i-1}) < K }`. Then `u_i` is the first time after which
//! the path never returns to any ball built so far and never revisits an
//! exit point `v_j`, `j <= i`. If the path ends inside that region the
//! last hair runs to the endpoint and `u_m = x`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{unit_steps, Site};
use crate::lyapunov::LyapunovNorm;
use crate::path::LatticePath;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SkeletonDecomposition {
    pub k: f64,
    /// Times of `u_0, ..., u_m`.
    pub u_idx: Vec<usize>,
    /// Times of `v_1, ..., v_m`.
    pub v_idx: Vec<usize>,
    /// `u_0, v_1, u_1, ..., v_m, u_m`.
    pub vertices: Vec<Site>,
    pub end: Site,
    pub len: usize,
}

impl SkeletonDecomposition {
    pub fn m(&self) -> usize {
        self.v_idx.len()
    }

    /// Confined pieces `gamma_1, ..., gamma_{m+1}` as time ranges.
    pub fn piece_ranges(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = self.v_idx.iter().zip(&self.u_idx).map(|(&v, &u)| (u, v)).collect();
        out.push((self.u_idx[self.m()], self.len));
        out
    }

    /// Hairs `eta_1, ..., eta_m` as time ranges.
    pub fn hair_ranges(&self) -> Vec<(usize, usize)> {
        self.v_idx.iter().zip(&self.u_idx[1..]).map(|(&v, &u)| (v, u)).collect()
    }

    pub fn pieces(&self, path: &LatticePath) -> Vec<LatticePath> {
        self.piece_ranges().into_iter().map(|(a, b)| path.segment(a, b)).collect()
    }

    pub fn hairs(&self, path: &LatticePath) -> Vec<LatticePath> {
        self.hair_ranges().into_iter().map(|(a, b)| path.segment(a, b)).collect()
    }

    /// `gamma_1 eta_1 gamma_2 ... eta_m gamma_{m+1}`.
    pub fn reassemble(pieces: &[LatticePath], hairs: &[LatticePath]) -> Result<LatticePath> {
        if pieces.len() != hairs.len() + 1 {
            return Err(Error::InvalidParameter("need exactly one more piece than hairs".into()));
        }
        let mut out = pieces[0].clone();
        for (h, p) in hairs.iter().zip(&pieces[1..]) {
            out = out.concat(h)?.concat(p)?;
        }
        Ok(out)
    }

    /// Skeleton points `u_0, ..., u_m`, closed by the endpoint when the last
    /// piece is nontrivial.
    pub fn trunk(&self) -> Vec<Site> {
        let mut out: Vec<Site> = (0..=self.m()).map(|i| self.vertices[2 * i]).collect();
        if *out.last().unwrap() != self.end {
            out.push(self.end);
        }
        out
    }

    /// Checks the confinement and avoidance properties against `path`.
    pub fn check_properties(&self, path: &LatticePath, norm: impl Fn(Site) -> f64) -> Result<()> {
        let s = path.sites();
        let centers: Vec<Site> = self.u_idx.iter().map(|&i| s[i]).collect();
        let in_ball = |j: usize, y: Site| norm(y - centers[j]) < self.k;
        let fail = |msg: String| Err(Error::IdentityViolation(msg));
        for (i, (a, b)) in self.piece_ranges().into_iter().enumerate() {
            let last = i == self.m();
            if last && i > 0 && a == self.len {
                // the path ended inside an earlier ball; the last hair carries it to x
                continue;
            }
            let stop = if last { b + 1 } else { b };
            for &y in &s[a..stop] {
                if !in_ball(i, y) || (0..i).any(|j| in_ball(j, y)) {
                    return fail(format!("piece {} leaves its region at {y:?}", i + 1));
                }
            }
            if !last && in_ball(i, s[b]) {
                return fail(format!("piece {} does not end on an exit", i + 1));
            }
        }
        for (i, (a, b)) in self.hair_ranges().into_iter().enumerate() {
            for &y in &s[a..=b] {
                if (0..i).any(|j| in_ball(j, y)) {
                    return fail(format!("hair {} enters an earlier ball at {y:?}", i + 1));
                }
            }
        }
        Ok(())
    }
}

/// Builds the `K`-skeleton of `path` for the norm `norm`. `K` must be at
/// least twice the smallest norm of a unit step.
pub fn build_skeleton(path: &LatticePath, k: f64, norm: impl Fn(Site) -> f64) -> Result<SkeletonDecomposition> {
    let unit = unit_steps(path.dim()).into_iter().map(&norm).fold(f64::INFINITY, f64::min);
    if !(k >= 2.0 * unit) || !k.is_finite() {
        return Err(Error::InvalidParameter(format!("skeleton scale {k} is below two unit steps ({})", 2.0 * unit)));
    }
    let s = path.sites();
    let n = path.len();
    let mut u_idx = vec![0usize];
    let mut v_idx = Vec::new();
    let mut vertices = vec![s[0]];
    loop {
        let cur = *u_idx.last().unwrap();
        let center = s[cur];
        let Some(t) = (cur + 1..=n).find(|&t| norm(s[t] - center) >= k) else {
            break;
        };
        v_idx.push(t);
        vertices.push(s[t]);
        let covered = |y: Site| {
            u_idx.iter().any(|&c| norm(y - s[c]) < k) || v_idx.iter().any(|&v| s[v] == y)
        };
        let ball_only = |y: Site| u_idx.iter().any(|&c| norm(y - s[c]) < k);
        let last_ball = (t..=n).rev().find(|&j| ball_only(s[j]));
        let last_exit = (t..=n).rev().find(|&j| v_idx.iter().any(|&v| s[v] == s[j])).unwrap_or(t);
        let u = match last_ball {
            Some(lb) if lb == n => n,
            Some(lb) => (lb + 1).max(last_exit),
            None => last_exit,
        };
        debug_assert!((u + 1..=n).all(|j| !covered(s[j])));
        u_idx.push(u);
        vertices.push(s[u]);
        if u == n {
            break;
        }
    }
    Ok(SkeletonDecomposition { k, u_idx, v_idx, vertices, end: path.end(), len: n })
}

fn check_dual(norm: &dyn LyapunovNorm, h: &[f64]) -> Result<()> {
    let star = norm.dual(h);
    if (star - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidParameter(format!("h must lie on the dual unit sphere (a*(h) = {star})")));
    }
    Ok(())
}

/// `s(y) = a(y) - h.y` for `h` on the dual unit sphere.
pub fn surcharge(y: &[f64], h: &[f64], norm: &dyn LyapunovNorm) -> Result<f64> {
    check_dual(norm, h)?;
    Ok(norm.value(y) - y.iter().zip(h).map(|(a, b)| a * b).sum::<f64>())
}

/// Sum of the surcharges of consecutive trunk increments.
pub fn skeleton_surcharge(sk: &SkeletonDecomposition, h: &[f64], norm: &dyn LyapunovNorm) -> Result<f64> {
    check_dual(norm, h)?;
    Ok(sk.trunk().windows(2).map(|w| norm.at_site(w[1] - w[0]) - (w[1] - w[0]).dot(h)).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lyapunov::FreeWalkNorm;

    #[test]
    fn short_path_has_trivial_skeleton() {
        let n = FreeWalkNorm::new(2, 0.5).unwrap();
        let path = LatticePath::from_steps(2, Site::ORIGIN, &[0, 2, 1]).unwrap();
        let sk = build_skeleton(&path, 20.0, |y| n.at_site(y)).unwrap();
        assert_eq!(sk.m(), 0);
        assert_eq!(sk.trunk(), vec![Site::ORIGIN, path.end()]);
        assert!(build_skeleton(&path, 0.1, |y| n.at_site(y)).is_err());
    }

    #[test]
    fn straight_path_skeleton_has_zero_surcharge() {
        let n = FreeWalkNorm::new(2, 0.5).unwrap();
        let h = n.dual_point(&[1.0, 0.0]);
        let path = LatticePath::from_steps(2, Site::ORIGIN, &[0; 12]).unwrap();
        let sk = build_skeleton(&path, 3.0 * n.at_site(Site::new(&[1, 0])), |y| n.at_site(y)).unwrap();
        assert!(sk.m() >= 2);
        sk.check_properties(&path, |y| n.at_site(y)).unwrap();
        let back = SkeletonDecomposition::reassemble(&sk.pieces(&path), &sk.hairs(&path)).unwrap();
        assert_eq!(back, path);
        assert!(skeleton_surcharge(&sk, &h, &n).unwrap().abs() < 1e-9);
    }
}
