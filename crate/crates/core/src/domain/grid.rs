use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reproducible description of a box grid: enough to rebuild it exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dimension: usize,
    pub bounds: Vec<[f64; 2]>,
    pub cells_per_axis: usize,
}

/// Midpoint-rule discretization of a box Λ ⊂ R^D.
///
/// Nodes sit at cell centres and every weight equals the cell volume, so a
/// histogram of particle positions binned by cell lines up exactly with the
/// density values. Nodes are stored flat (`D` coordinates per node) with the
/// last axis varying fastest.
#[derive(Clone, Debug)]
pub struct Grid {
    spec: GridSpec,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    spacing: Vec<f64>,
    total_volume: f64,
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
    }
}

#[derive(Serialize)]
struct GridManifest<'a> {
    dimension: usize,
    bounds: &'a [[f64; 2]],
    cells_per_axis: usize,
    total_volume: f64,
    weights: &'a [f64],
}

impl Serialize for Grid {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GridManifest {
            dimension: self.spec.dimension,
            bounds: &self.spec.bounds,
            cells_per_axis: self.spec.cells_per_axis,
            total_volume: self.total_volume,
            weights: &self.weights,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Grid {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let spec = GridSpec::deserialize(d)?;
        Grid::from_spec(&spec).map_err(serde::de::Error::custom)
    }
}

/// Build a midpoint grid with `cells_per_axis` cells along each of the `dimension` axes.
pub fn build_grid(dimension: usize, bounds: &[[f64; 2]], cells_per_axis: usize) -> Result<Grid> {
    Grid::from_spec(&GridSpec {
        dimension,
        bounds: bounds.to_vec(),
        cells_per_axis,
    })
}

impl Grid {
    pub fn from_spec(spec: &GridSpec) -> Result<Self> {
        let d = spec.dimension;
        if !(1..=3).contains(&d) {
            return Err(Error::config(format!("dimension must be 1, 2 or 3, got {d}")));
        }
        if spec.bounds.len() != d {
            return Err(Error::config(format!(
                "expected {d} axis extents, got {}",
                spec.bounds.len()
            )));
        }
        if spec.cells_per_axis < 2 {
            return Err(Error::config("cells_per_axis must be at least 2"));
        }
        for (axis, [lo, hi]) in spec.bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(Error::config(format!(
                    "axis {axis}: extent [{lo}, {hi}] is not a positive finite interval"
                )));
            }
        }

        let c = spec.cells_per_axis;
        let spacing: Vec<f64> = spec.bounds.iter().map(|[lo, hi]| (hi - lo) / c as f64).collect();
        let cell_volume: f64 = spacing.iter().product();
        let n = c.pow(d as u32);
        let mut nodes = Vec::with_capacity(n * d);
        for flat in 0..n {
            let mut rem = flat;
            let mut idx = [0usize; 3];
            for axis in (0..d).rev() {
                idx[axis] = rem % c;
                rem /= c;
            }
            for axis in 0..d {
                nodes.push(spec.bounds[axis][0] + (idx[axis] as f64 + 0.5) * spacing[axis]);
            }
        }
        let total_volume = spec.bounds.iter().map(|[lo, hi]| hi - lo).product();
        Ok(Grid {
            spec: spec.clone(),
            nodes,
            weights: vec![cell_volume; n],
            spacing,
            total_volume,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn dimension(&self) -> usize {
        self.spec.dimension
    }

    pub fn bounds(&self) -> &[[f64; 2]] {
        &self.spec.bounds
    }

    pub fn cells_per_axis(&self) -> usize {
        self.spec.cells_per_axis
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        let d = self.spec.dimension;
        &self.nodes[i * d..(i + 1) * d]
    }

    pub fn nodes(&self) -> impl Iterator<Item = &[f64]> {
        self.nodes.chunks_exact(self.spec.dimension)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Cell edge length along each axis.
    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    /// |Λ|.
    pub fn total_volume(&self) -> f64 {
        self.total_volume
    }

    pub fn diameter(&self) -> f64 {
        self.spec
            .bounds
            .iter()
            .map(|[lo, hi]| (hi - lo) * (hi - lo))
            .sum::<f64>()
            .sqrt()
    }

    /// True when `q` lies in the closed box Λ̄.
    pub fn contains(&self, q: &[f64]) -> bool {
        q.iter()
            .zip(&self.spec.bounds)
            .all(|(&x, [lo, hi])| x >= *lo && x <= *hi)
    }

    /// Index of the cell containing `q`; points on the upper face belong to the last cell.
    pub fn cell_of(&self, q: &[f64]) -> Option<usize> {
        if !self.contains(q) {
            return None;
        }
        let c = self.spec.cells_per_axis;
        let mut flat = 0usize;
        for (axis, &x) in q.iter().enumerate() {
            let lo = self.spec.bounds[axis][0];
            let k = (((x - lo) / self.spacing[axis]).floor() as usize).min(c - 1);
            flat = flat * c + k;
        }
        Some(flat)
    }

    /// Centre of the box.
    pub fn centroid(&self) -> Vec<f64> {
        self.spec.bounds.iter().map(|[lo, hi]| 0.5 * (lo + hi)).collect()
    }

    pub fn into_shared(self) -> Arc<Grid> {
        Arc::new(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_midpoints() {
        let g = build_grid(1, &[[0.0, 1.0]], 4).unwrap();
        let nodes: Vec<f64> = g.nodes().map(|q| q[0]).collect();
        assert_eq!(nodes, vec![0.125, 0.375, 0.625, 0.875]);
        assert!(g.weights().iter().all(|&w| w == 0.25));
        assert_eq!(g.total_volume(), 1.0);
    }

    #[test]
    fn two_dimensional_unit_square() {
        let g = build_grid(2, &[[0.0, 1.0], [0.0, 1.0]], 2).unwrap();
        assert_eq!(g.len(), 4);
        assert!(g.weights().iter().all(|&w| w == 0.25));
        assert_eq!(g.total_volume(), 1.0);
        assert_eq!(g.node(1), &[0.25, 0.75]);
    }

    #[test]
    fn weights_sum_to_volume() {
        let g = build_grid(1, &[[0.0, 2.0]], 8).unwrap();
        let s: f64 = g.weights().iter().sum();
        assert!((s - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(build_grid(4, &[[0.0, 1.0]; 4], 4), Err(Error::Config(_))));
        assert!(matches!(build_grid(1, &[[1.0, 1.0]], 4), Err(Error::Config(_))));
        assert!(matches!(build_grid(1, &[[0.0, 1.0]], 1), Err(Error::Config(_))));
        assert!(matches!(build_grid(2, &[[0.0, 1.0]], 4), Err(Error::Config(_))));
    }

    #[test]
    fn cell_lookup_matches_nodes() {
        let g = build_grid(3, &[[0.0, 1.0], [-1.0, 1.0], [0.0, 2.0]], 3).unwrap();
        for i in 0..g.len() {
            assert_eq!(g.cell_of(g.node(i)), Some(i));
        }
        assert_eq!(g.cell_of(&[1.0, 1.0, 2.0]), Some(g.len() - 1));
        assert_eq!(g.cell_of(&[1.1, 0.0, 0.0]), None);
    }

    #[test]
    fn json_round_trip() {
        let g = build_grid(2, &[[0.0, 1.0], [0.0, 3.0]], 5).unwrap();
        let text = serde_json::to_string(&g).unwrap();
        assert!(text.contains("\"weights\""));
        let back: Grid = serde_json::from_str(&text).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.weights(), g.weights());
    }
}
