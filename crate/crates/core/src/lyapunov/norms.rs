//! Lyapunov norms at a fixed mass `lambda`.

use crate::error::{Error, Result};
use crate::lattice::Site;

/// A norm `a_lambda` on R^d together with its polar norm.
pub trait LyapunovNorm: Send + Sync + std::fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    /// `a*(h) = sup_x h.x / a(x)`.
    fn dual(&self, h: &[f64]) -> f64;

    fn at_site(&self, s: Site) -> f64 {
        self.value(&s.to_f64(self.dim()))
    }
}

/// Exact norm of the killed simple random walk (no potential):
/// `a_lambda(x) = max { h.x : (1/d) sum_i cosh h_i <= e^lambda }`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FreeWalkNorm {
    pub dim: usize,
    pub lambda: f64,
}

impl FreeWalkNorm {
    pub fn new(dim: usize, lambda: f64) -> Result<FreeWalkNorm> {
        crate::lattice::check_dim(dim)?;
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda = {lambda} must be finite and >= 0")));
        }
        Ok(FreeWalkNorm { dim, lambda })
    }

    /// The free-walk mass `Lambda_0(h) = log((1/d) sum cosh h_i)`, i.e. the
    /// unique lambda with `h` on the boundary of the dual ball.
    pub fn lambda_of(h: &[f64]) -> f64 {
        (h.iter().map(|x| x.cosh()).sum::<f64>() / h.len() as f64).ln()
    }

    /// The maximising drift for `x`: `h_i = asinh(x_i t)` (on the dual sphere).
    pub fn dual_point(&self, x: &[f64]) -> Vec<f64> {
        match self.solve_t(x) {
            Some(t) => x.iter().map(|xi| (xi * t).asinh()).collect(),
            None => vec![0.0; x.len()],
        }
    }

    /// Root `t > 0` of `sum_i sqrt(1 + x_i^2 t^2) = d e^lambda`.
    fn solve_t(&self, x: &[f64]) -> Option<f64> {
        let m = x.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if m == 0.0 || self.lambda == 0.0 {
            return None;
        }
        let target = self.dim as f64 * self.lambda.exp();
        let g = |t: f64| x.iter().map(|xi| (1.0 + xi * xi * t * t).sqrt()).sum::<f64>() - target;
        let dg = |t: f64| x.iter().map(|xi| xi * xi * t / (1.0 + xi * xi * t * t).sqrt()).sum::<f64>();
        // g is increasing and convex; Newton from the right is monotone.
        let mut t = target / m;
        for _ in 0..200 {
            let step = g(t) / dg(t);
            let nt = t - step;
            if !(nt > 0.0) {
                t *= 0.5;
                continue;
            }
            if (t - nt).abs() <= 1e-16 * t {
                t = nt;
                break;
            }
            t = nt;
        }
        Some(t)
    }
}

impl LyapunovNorm for FreeWalkNorm {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        match self.solve_t(x) {
            Some(t) => x.iter().map(|xi| xi * (xi * t).asinh()).sum(),
            None => 0.0,
        }
    }

    fn dual(&self, h: &[f64]) -> f64 {
        if h.iter().all(|&x| x == 0.0) {
            return 0.0;
        }
        if self.lambda == 0.0 {
            return f64::INFINITY;
        }
        let target = self.lambda.exp() * self.dim as f64;
        let f = |s: f64| h.iter().map(|x| (s * x).cosh()).sum::<f64>() - target;
        let m = h.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let hi = (target.ln() + 1.0) / m + 1.0;
        let s = crate::numerics::bisect(f, 0.0, hi, 1e-15).unwrap_or(hi);
        1.0 / s
    }
}

/// Gauge of a convex polygon (d = 2) or segment (d = 1) spanned by the
/// points `dir / a(dir)`; the convex interpolation of fan values.
#[derive(Clone, Debug, PartialEq)]
pub struct PolygonalNorm {
    dim: usize,
    /// Unit-ball vertices.
    vertices: Vec<[f64; 2]>,
    /// Facet normals `n` with `n . p = 1` on the facet.
    normals: Vec<[f64; 2]>,
}

impl PolygonalNorm {
    /// Builds the norm from `(direction, a(direction))` pairs. The origin
    /// must lie strictly inside the hull of the rescaled points.
    pub fn from_fan(dim: usize, values: &[(Site, f64)]) -> Result<PolygonalNorm> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("empty direction fan".into()));
        }
        if let Some(v) = values.iter().find(|v| !(v.1 > 0.0 && v.1.is_finite())) {
            return Err(Error::InvalidParameter(format!("norm value {} at {:?} is not positive", v.1, v.0)));
        }
        let pts: Vec<[f64; 2]> = values
            .iter()
            .map(|(d, a)| [d.0[0] as f64 / a, if dim > 1 { d.0[1] as f64 / a } else { 0.0 }])
            .collect();
        match dim {
            1 => {
                let right = pts.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
                let left = pts.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
                if !(right > 0.0 && left < 0.0) {
                    return Err(Error::InvalidParameter("fan must contain both directions".into()));
                }
                Ok(PolygonalNorm {
                    dim,
                    vertices: vec![[right, 0.0], [left, 0.0]],
                    normals: vec![[1.0 / right, 0.0], [1.0 / left, 0.0]],
                })
            }
            2 => {
                let hull = convex_hull(pts);
                let mut normals = Vec::with_capacity(hull.len());
                for i in 0..hull.len() {
                    let p = hull[i];
                    let q = hull[(i + 1) % hull.len()];
                    let det = p[0] * q[1] - p[1] * q[0];
                    if !(det > 0.0) {
                        return Err(Error::InvalidParameter("origin not strictly inside the fan hull".into()));
                    }
                    normals.push([(q[1] - p[1]) / det, (p[0] - q[0]) / det]);
                }
                Ok(PolygonalNorm { dim, vertices: hull, normals })
            }
            _ => Err(Error::InvalidParameter("polygonal norms are implemented for d <= 2".into())),
        }
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }
}

/// Counter-clockwise convex hull (monotone chain), collinear points dropped.
fn convex_hull(mut pts: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 1e-15 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 1e-15 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

impl LyapunovNorm for PolygonalNorm {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        let y = if self.dim > 1 { x[1] } else { 0.0 };
        self.normals.iter().map(|n| n[0] * x[0] + n[1] * y).fold(0.0f64, f64::max)
    }

    fn dual(&self, h: &[f64]) -> f64 {
        let hy = if self.dim > 1 { h[1] } else { 0.0 };
        self.vertices.iter().map(|v| v[0] * h[0] + v[1] * hy).fold(0.0f64, f64::max)
    }
}
