//! Bounded box domains, densities on them and transport distances.

mod density;
mod grid;
mod transport;

pub use density::{uniform_density, DensityField};
pub use grid::{build_grid, Grid, GridSpec};
pub use transport::{w1_atoms_1d, w1_distance, w1_samples, WeightedSamples, W1, SINKHORN_REG_FRACTION};
