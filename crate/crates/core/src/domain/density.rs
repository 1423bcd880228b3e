use std::sync::Arc;

use serde::Serialize;

use super::Grid;
use crate::error::{Error, Result};

const NORMALIZATION_TOL: f64 = 1e-10;

/// Nonnegative probability density on a grid, with respect to Lebesgue measure.
///
/// Σ_i values_i · weights_i = 1 is enforced at construction.
#[derive(Clone, Debug, Serialize)]
pub struct DensityField {
    #[serde(skip)]
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl DensityField {
    /// Wrap already-normalized values. Fails if any value is negative or
    /// non-finite, or if the total mass differs from 1 by more than 1e-10.
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        check_len(&grid, values.len())?;
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::contract("density values must be finite and nonnegative"));
        }
        let mass: f64 = values.iter().zip(grid.weights()).map(|(v, w)| v * w).sum();
        if (mass - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::contract(format!("density mass is {mass}, expected 1")));
        }
        Ok(DensityField { grid, values })
    }

    /// Normalize arbitrary nonnegative values into a density.
    pub fn normalized(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        check_len(&grid, values.len())?;
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::contract("density values must be finite and nonnegative"));
        }
        let mass: f64 = values.iter().zip(grid.weights()).map(|(v, w)| v * w).sum();
        if mass <= 0.0 {
            return Err(Error::contract("cannot normalize a density with zero mass"));
        }
        let values = values.into_iter().map(|v| v / mass).collect();
        Ok(DensityField { grid, values })
    }

    /// Density whose cell masses are `masses` (must sum to 1).
    pub fn from_masses(grid: Arc<Grid>, masses: &[f64]) -> Result<Self> {
        check_len(&grid, masses.len())?;
        let values = masses.iter().zip(grid.weights()).map(|(m, w)| m / w).collect();
        Self::normalized(grid, values)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Probability mass per cell, values_i · weights_i.
    pub fn masses(&self) -> Vec<f64> {
        self.values.iter().zip(self.grid.weights()).map(|(v, w)| v * w).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.values.iter().zip(self.grid.weights()).map(|(v, w)| v * w).sum()
    }

    pub fn renormalized(&self) -> Self {
        let m = self.total_mass();
        DensityField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v / m).collect(),
        }
    }

    pub fn same_grid(&self, other: &Grid) -> bool {
        *self.grid == *other
    }
}

/// The normalized Lebesgue measure λ as a density: 1/|Λ| everywhere.
pub fn uniform_density(grid: Arc<Grid>) -> DensityField {
    let v = 1.0 / grid.total_volume();
    let n = grid.len();
    DensityField { grid, values: vec![v; n] }
}

fn check_len(grid: &Grid, len: usize) -> Result<()> {
    if len != grid.len() {
        return Err(Error::contract(format!(
            "density has {len} values but the grid has {} cells",
            grid.len()
        )));
    }
    Ok(())
}
