//! Mean-field (Vlasov limit) solvers: the self-consistent Boltzmann factor at
//! fixed energy or temperature, the entropy and free-energy curves, and the
//! cross-checks between their variational characterizations.

mod checks;
mod fixed_point;
mod oracle;
mod scan;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::domain::DensityField;
use crate::error::{Error, Result};
use crate::functionals::{continuum_ground_energy, GroundEnergy};
use crate::potentials::KernelMatrix;

pub use checks::{
    legendre_check, VP_GRID, theorem2_identity_check, verify_vp_decompositions, LegendreReport, Theorem2Report, VpReport,
};
pub use scan::{entropy_scan, ScanPoint, ScanResult, MONOTONE_TOL};

#[derive(Clone, Debug, Serialize)]
pub struct SolverOptions {
    /// Initial damping γ in ρ ← (1−γ)ρ + γT(ρ).
    pub damping: f64,
    pub max_halvings: usize,
    pub max_iters: usize,
    /// Sup-norm bound on ρ − T(ρ), density units.
    pub residual_tol: f64,
    /// Relative change of the objective between sweeps.
    pub objective_tol: f64,
    /// Total number of starts, the uniform density included.
    pub multistarts: usize,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            damping: 0.5,
            max_halvings: 30,
            max_iters: 200_000,
            residual_tol: 1e-10,
            objective_tol: 1e-12,
            multistarts: 8,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum SolveMode {
    Microcanonical { epsilon: f64 },
    Canonical { theta: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BranchStatus {
    Converged,
    MaxIterations,
    Stalled,
}

#[derive(Clone, Debug, Serialize)]
pub struct BranchReport {
    pub index: usize,
    pub status: BranchStatus,
    pub objective: f64,
    pub residual: f64,
    pub iterations: usize,
    pub final_damping: f64,
}

/// One solved energy (or temperature).
///
/// In canonical mode `s_k`, `s_i` and `s` hold φ_K, φ_I and φ.
#[derive(Clone, Debug, Serialize)]
pub struct MeanFieldSolution {
    pub mode: SolveMode,
    pub rho: DensityField,
    pub theta: f64,
    /// Total energy per pair-scaling unit; derived in canonical mode.
    pub epsilon: f64,
    /// ⟨ρ,ρ⟩.
    pub interaction_energy: f64,
    pub s_k: f64,
    pub s_i: f64,
    pub s: f64,
    /// S_{I/ε}(ρ) in microcanonical mode, R(ρ) − ⟨ρ,ρ⟩/θ in canonical mode.
    pub objective: f64,
    pub residual: f64,
    pub iterations: usize,
    pub branch: usize,
    pub branches: Vec<BranchReport>,
    /// Amount by which the nonnegativity shift raised every energy; subtract
    /// it from `epsilon` to recover the unshifted value.
    pub energy_shift: f64,
}

/// A kernel together with its continuum ground state, shared by every solve
/// on that kernel.
#[derive(Clone, Debug)]
pub struct MeanField<'a> {
    k: &'a KernelMatrix,
    ground: GroundEnergy,
}

impl<'a> MeanField<'a> {
    pub fn new(k: &'a KernelMatrix) -> Result<Self> {
        if k.min_entry() < 0.0 {
            return Err(Error::contract(
                "mean-field solvers need U >= 0 on the grid; apply shift_nonnegative first",
            ));
        }
        let ground = continuum_ground_energy(k)?;
        Ok(MeanField { k, ground })
    }

    pub fn kernel(&self) -> &KernelMatrix {
        self.k
    }

    pub fn ground(&self) -> &GroundEnergy {
        &self.ground
    }

    pub fn epsilon_g(&self) -> f64 {
        self.ground.epsilon_g
    }

    /// ε must clear ε_g by 1e-9·max(1, |ε_g|).
    pub fn check_feasible(&self, epsilon: f64) -> Result<()> {
        let eg = self.ground.epsilon_g;
        let margin = 1e-9 * eg.abs().max(1.0);
        if !(epsilon.is_finite() && epsilon >= eg + margin && epsilon > 0.0) {
            return Err(Error::Infeasible(format!(
                "ε = {epsilon} does not exceed the ground-state energy ε_g = {eg}"
            )));
        }
        Ok(())
    }

    /// Uniform masses first, then log-normal perturbations of it.
    pub(crate) fn starts(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let grid = self.k.grid();
        let vol = grid.total_volume();
        let uniform: Vec<f64> = grid.weights().iter().map(|w| w / vol).collect();
        let mut out = vec![uniform.clone()];
        for s in 1..count.max(1) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64);
            let v: Vec<f64> = uniform
                .iter()
                .map(|u| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    u * (0.5 * z).exp()
                })
                .collect();
            let t: f64 = v.iter().sum();
            out.push(v.into_iter().map(|x| x / t).collect());
        }
        out
    }

    /// Blend `x` toward the ground-state minimizer until ⟨ρ,ρ⟩ < ε.
    pub(crate) fn make_feasible(&self, x: &[f64], epsilon: f64) -> Vec<f64> {
        let xg = self.ground.rho.masses();
        let mut t = 0.0;
        loop {
            let y: Vec<f64> = x.iter().zip(&xg).map(|(a, b)| (1.0 - t) * a + t * b).collect();
            if self.k.quadratic(&y) < epsilon || t >= 1.0 {
                return y;
            }
            t = if t == 0.0 { 0.5 } else { (1.0 + t) / 2.0 };
            if t > 1.0 - 1e-6 {
                t = 1.0;
            }
        }
    }
}

pub use fixed_point::{solve_canonical, solve_microcanonical};
pub use oracle::{auxiliary_interaction_entropy, maximize_interaction_entropy, AuxiliaryEntropy, EntropyMaximizer};

#[cfg(test)]
mod tests;
