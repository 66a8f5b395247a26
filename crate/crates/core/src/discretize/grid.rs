use crate::kernels::Point;
use crate::{PnmolError, Result};

/// Ordered spatial grid with a boundary mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    points: Vec<Point>,
    boundary_mask: Vec<bool>,
}

impl Grid {
    pub fn new(points: Vec<Point>, boundary_mask: Vec<bool>) -> Result<Self> {
        if points.len() != boundary_mask.len() {
            return Err(PnmolError::DimensionMismatch(format!(
                "{} points but {} boundary flags",
                points.len(),
                boundary_mask.len()
            )));
        }
        let dim = points.first().map_or(0, Vec::len);
        if points.iter().any(|p| p.len() != dim || p.iter().any(|v| !v.is_finite())) {
            return Err(PnmolError::InvalidArgument("grid points must be finite and of equal dimension".into()));
        }
        if !points.is_empty() && dim == 0 {
            return Err(PnmolError::InvalidArgument("grid points must have positive dimension".into()));
        }
        let mut sorted: Vec<&Point> = points.iter().collect();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(PnmolError::InvalidArgument("grid points must be pairwise distinct".into()));
        }
        Ok(Self { points, boundary_mask })
    }

    /// `count` equispaced points on `[a, b]`; the two endpoints are boundary points.
    pub fn uniform_1d(a: f64, b: f64, count: usize) -> Result<Self> {
        Self::uniform_box(&[a], &[b], &[count])
    }

    /// Equispaced points on `[a, b]` with spacing as close to `dx` as the
    /// interval allows.
    pub fn with_spacing_1d(a: f64, b: f64, dx: f64) -> Result<Self> {
        if !(dx > 0.0 && dx.is_finite()) || b <= a {
            return Err(PnmolError::InvalidArgument(format!("invalid spacing {dx} on [{a}, {b}]")));
        }
        let intervals = ((b - a) / dx).round().max(1.0) as usize;
        Self::uniform_1d(a, b, intervals + 1)
    }

    /// Tensor grid on the box `[lo, hi]` with `counts[c]` points along axis
    /// `c`. The last axis varies fastest. Points on a face are boundary points.
    pub fn uniform_box(lo: &[f64], hi: &[f64], counts: &[usize]) -> Result<Self> {
        if lo.len() != hi.len() || lo.len() != counts.len() || lo.is_empty() {
            return Err(PnmolError::DimensionMismatch("box bounds and counts must share a dimension".into()));
        }
        if counts.iter().any(|&c| c < 2) || lo.iter().zip(hi).any(|(a, b)| b <= a || a.is_nan() || b.is_nan()) {
            return Err(PnmolError::InvalidArgument("each axis needs two or more points on a proper interval".into()));
        }
        let total: usize = counts.iter().product();
        let mut points = Vec::with_capacity(total);
        let mut mask = Vec::with_capacity(total);
        for flat in 0..total {
            let mut rem = flat;
            let mut p = vec![0.0; counts.len()];
            let mut on_face = false;
            for c in (0..counts.len()).rev() {
                let i = rem % counts[c];
                rem /= counts[c];
                p[c] = lo[c] + (hi[c] - lo[c]) * i as f64 / (counts[c] - 1) as f64;
                on_face |= i == 0 || i == counts[c] - 1;
            }
            points.push(p);
            mask.push(on_face);
        }
        Self::new(points, mask)
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary_mask
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    pub fn boundary_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.boundary_mask[i]).collect()
    }

    pub fn interior_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.boundary_mask[i]).collect()
    }

    /// Smallest distance between two grid points.
    pub fn min_spacing(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.len() {
            for j in (i + 1)..self.len() {
                let d: f64 = self.points[i].iter().zip(&self.points[j]).map(|(a, b)| (a - b) * (a - b)).sum();
                best = best.min(d.sqrt());
            }
        }
        best
    }

    /// Unit outward normal of boundary point `i`, taken from the faces of the
    /// bounding box it lies on (normalized sum at corners).
    pub fn outward_normal(&self, i: usize) -> Result<Vec<f64>> {
        let p = self
            .points
            .get(i)
            .ok_or_else(|| PnmolError::InvalidArgument(format!("point {i} outside the grid")))?;
        let mut n = vec![0.0; p.len()];
        for c in 0..p.len() {
            let lo = self.points.iter().map(|q| q[c]).fold(f64::INFINITY, f64::min);
            let hi = self.points.iter().map(|q| q[c]).fold(f64::NEG_INFINITY, f64::max);
            let tol = 1e-12 * (hi - lo).abs().max(1.0);
            if (p[c] - lo).abs() <= tol {
                n[c] -= 1.0;
            }
            if (p[c] - hi).abs() <= tol {
                n[c] += 1.0;
            }
        }
        let norm = n.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(PnmolError::InvalidArgument(format!(
                "point {i} is not on the bounding box, no outward normal"
            )));
        }
        Ok(n.into_iter().map(|v| v / norm).collect())
    }
}
