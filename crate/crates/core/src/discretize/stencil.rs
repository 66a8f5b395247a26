//! Nearest-neighbour stencil selection.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::kernels::Point;
use crate::{PnmolError, Result};

use super::Grid;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stencil {
    pub center_index: usize,
    /// Ordered by distance to the center, ties by ascending index; the
    /// center comes first.
    pub neighbor_indices: Vec<usize>,
}

/// Distance key with ties broken by index. Distances are quantized relative
/// to the grid extent so that equispaced grids tie exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Key(u64, usize);

fn key(dist_sq: f64, index: usize, scale: f64) -> Key {
    Key((dist_sq.sqrt() / scale * 1e12).round() as u64, index)
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

fn extent(points: &[Point]) -> f64 {
    let dim = points.first().map_or(0, Vec::len);
    let mut sq = 0.0;
    for c in 0..dim {
        let lo = points.iter().map(|p| p[c]).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(|p| p[c]).fold(f64::NEG_INFINITY, f64::max);
        sq += (hi - lo) * (hi - lo);
    }
    if sq > 0.0 { sq.sqrt() } else { 1.0 }
}

/// The `2k+1` grid points nearest to point `n`, including `n` itself.
pub fn select_stencil(grid: &Grid, n: usize, radius: usize) -> Result<Stencil> {
    StencilFinder::new(grid).select(n, radius)
}

/// Reusable stencil search over a fixed grid.
#[derive(Debug, Clone)]
pub struct StencilFinder<'a> {
    points: &'a [Point],
    scale: f64,
    tree: Option<KdTree>,
}

impl<'a> StencilFinder<'a> {
    pub fn new(grid: &'a Grid) -> Self {
        let points = grid.points();
        let tree = (grid.dim() >= 2).then(|| KdTree::build(points));
        Self { points, scale: extent(points), tree }
    }

    pub fn select(&self, n: usize, radius: usize) -> Result<Stencil> {
        let size = 2 * radius + 1;
        if n >= self.points.len() {
            return Err(PnmolError::InvalidArgument(format!(
                "stencil center {n} outside a grid of {} points",
                self.points.len()
            )));
        }
        if size > self.points.len() {
            return Err(PnmolError::InvalidArgument(format!(
                "stencil radius {radius} needs {size} points, grid has {}",
                self.points.len()
            )));
        }
        let center = &self.points[n];
        let neighbor_indices = match &self.tree {
            Some(tree) => tree.nearest(self.points, center, size, self.scale),
            None => {
                let mut keyed: Vec<Key> = self
                    .points
                    .iter()
                    .enumerate()
                    .map(|(i, p)| key(dist_sq(p, center), i, self.scale))
                    .collect();
                keyed.sort_unstable();
                keyed.truncate(size);
                keyed.into_iter().map(|k| k.1).collect()
            }
        };
        Ok(Stencil { center_index: n, neighbor_indices })
    }
}

#[derive(Debug, Clone)]
struct Node {
    index: usize,
    axis: usize,
    left: Option<Box<Node>>,
    right: Option<Box<Node>>,
}

#[derive(Debug, Clone)]
struct KdTree {
    root: Option<Box<Node>>,
}

impl KdTree {
    fn build(points: &[Point]) -> Self {
        let dim = points.first().map_or(1, Vec::len);
        let mut idx: Vec<usize> = (0..points.len()).collect();
        Self { root: Self::build_rec(points, &mut idx, 0, dim) }
    }

    fn build_rec(points: &[Point], idx: &mut [usize], depth: usize, dim: usize) -> Option<Box<Node>> {
        if idx.is_empty() {
            return None;
        }
        let axis = depth % dim;
        idx.sort_unstable_by(|&a, &b| {
            points[a][axis].partial_cmp(&points[b][axis]).unwrap_or(Ordering::Equal).then(a.cmp(&b))
        });
        let mid = idx.len() / 2;
        let index = idx[mid];
        let (lo, rest) = idx.split_at_mut(mid);
        let hi = &mut rest[1..];
        Some(Box::new(Node {
            index,
            axis,
            left: Self::build_rec(points, lo, depth + 1, dim),
            right: Self::build_rec(points, hi, depth + 1, dim),
        }))
    }

    fn nearest(&self, points: &[Point], query: &[f64], count: usize, scale: f64) -> Vec<usize> {
        let mut heap = BinaryHeap::with_capacity(count + 1);
        if let Some(root) = &self.root {
            Self::search(root, points, query, count, scale, &mut heap);
        }
        let mut keys = heap.into_vec();
        keys.sort_unstable();
        keys.into_iter().map(|k| k.1).collect()
    }

    fn search(
        node: &Node,
        points: &[Point],
        query: &[f64],
        count: usize,
        scale: f64,
        heap: &mut BinaryHeap<Key>,
    ) {
        let p = &points[node.index];
        heap.push(key(dist_sq(p, query), node.index, scale));
        if heap.len() > count {
            heap.pop();
        }
        let diff = query[node.axis] - p[node.axis];
        let (near, far) = if diff < 0.0 { (&node.left, &node.right) } else { (&node.right, &node.left) };
        if let Some(n) = near {
            Self::search(n, points, query, count, scale, heap);
        }
        if let Some(f) = far {
            // Visit the far side unless every point there is strictly farther than
            // the current worst candidate; equal distances must be seen for ties.
            let worst = heap.peek().map(|k| k.0 as f64 * scale / 1e12);
            let visit = heap.len() < count || worst.is_none_or(|w| diff.abs() <= w + scale * 1e-11);
            if visit {
                Self::search(f, points, query, count, scale, heap);
            }
        }
    }
}
