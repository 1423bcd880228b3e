//! Finite-N counterparts of the mean-field objects: the interaction
//! Hamiltonian, ground-state sequences, Metropolis sampling of the
//! configurational measure and Monte Carlo entropy estimates.
//!
//! Positions are stored flat, particle-major: `positions[i * D + d]`.

mod entropy;
mod ground;
mod lln;
mod sampler;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::domain::{DensityField, Grid};
use crate::error::{Error, Result};
use crate::potentials::PairPotential;

pub use entropy::{
    estimate_interaction_entropy, finite_n_entropy, structure_prefactor, FiniteNEntropy, InteractionEntropyEstimate,
    LadderPoint, TiOptions,
};
pub use ground::{ground_state, monotonicity_report, GroundStateOptions, GroundStateRecord, MonotonicityReport, PairCheck, MONOTONICITY_TOL};
pub use lln::{default_test_functions, lln_test, LlnReport, TestFunction, TestFunctionReport};
pub use sampler::{
    feasible_start, sample_configurations, ChainDiagnostics, ChainOptions, ChainState, SampleRun, Target,
};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParticleConfiguration {
    pub dimension: usize,
    pub positions: Vec<f64>,
    pub momenta: Option<Vec<f64>>,
}

impl ParticleConfiguration {
    pub fn new(dimension: usize, positions: Vec<f64>) -> Result<Self> {
        if dimension == 0 || positions.len() % dimension != 0 {
            return Err(Error::contract(format!(
                "{} coordinates do not split into points of dimension {dimension}",
                positions.len()
            )));
        }
        Ok(ParticleConfiguration {
            dimension,
            positions,
            momenta: None,
        })
    }

    /// N points drawn uniformly from the box of `domain`.
    pub fn uniform<R: Rng + ?Sized>(n: usize, domain: &Grid, rng: &mut R) -> Self {
        let d = domain.dimension();
        let b = domain.bounds();
        let positions = (0..n * d)
            .map(|k| {
                let [lo, hi] = b[k % d];
                lo + (hi - lo) * rng.random::<f64>()
            })
            .collect();
        ParticleConfiguration {
            dimension: d,
            positions,
            momenta: None,
        }
    }

    pub fn n(&self) -> usize {
        self.positions.len() / self.dimension
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dimension..(i + 1) * self.dimension]
    }

    pub fn momentum(&self, i: usize) -> Option<&[f64]> {
        self.momenta
            .as_ref()
            .map(|p| &p[i * self.dimension..(i + 1) * self.dimension])
    }

    pub fn inside(&self, domain: &Grid) -> bool {
        self.positions.chunks(self.dimension).all(|q| domain.contains(q))
    }
}

/// I^(N) = Σ_{i<j} U(q_i, q_j). The diagonal is never evaluated; +∞ when a
/// singular kernel meets coincident points.
pub fn interaction_hamiltonian(config: &ParticleConfiguration, pot: &PairPotential) -> f64 {
    let n = config.n();
    let mut total = 0.0;
    for i in 0..n {
        let qi = config.position(i);
        for j in i + 1..n {
            total += pot.pair(qi, config.position(j));
        }
    }
    total
}

/// Σ_{j≠i} U(q_i, q_j): the energy particle `i` shares with the rest.
pub(crate) fn particle_energy(positions: &[f64], dim: usize, i: usize, qi: &[f64], pot: &PairPotential) -> f64 {
    positions
        .chunks(dim)
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(_, q)| pot.pair(qi, q))
        .sum()
}

/// ⟨Δ,Δ⟩ for the empirical measure of the points, diagonal included:
/// (1/2M²) Σ_{i,j} U(q_i, q_j).
pub fn empirical_bilinear(points: &[f64], dim: usize, pot: &PairPotential) -> f64 {
    let m = points.len() / dim;
    let mut total = 0.0;
    for (i, a) in points.chunks(dim).enumerate() {
        total += 0.5 * pot.pair(a, a);
        for b in points.chunks(dim).skip(i + 1) {
            total += pot.pair(a, b);
        }
    }
    total / (m * m) as f64
}

/// Momenta uniform on the sphere {NΣ½|p_i|² = εN² − I}, so the sampled
/// phase point sits exactly on the energy shell.
pub fn resample_momenta<R: Rng + ?Sized>(
    config: &ParticleConfiguration,
    epsilon: f64,
    pot: &PairPotential,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let n = config.n() as f64;
    let i = interaction_hamiltonian(config, pot);
    let kinetic = epsilon * n * n - i;
    if !(kinetic > 0.0) {
        return Err(Error::contract(format!(
            "momentum resampling needs I < εN², got I = {i} against εN² = {}",
            epsilon * n * n
        )));
    }
    let radius = (2.0 * kinetic / n).sqrt();
    let mut g: Vec<f64> = (0..config.positions.len()).map(|_| StandardNormal.sample(rng)).collect();
    let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in &mut g {
        *x *= radius / norm;
    }
    Ok(g)
}

/// Pooled empirical measures over a run of configurations.
#[derive(Clone, Debug, Serialize)]
pub struct EmpiricalMeasures {
    /// Cell counts of all positions.
    pub counts: Vec<f64>,
    /// Cell-pair counts of all ordered pairs i ≠ j; symmetric.
    pub pair_counts: Vec<f64>,
    pub samples: usize,
    cells: usize,
}

impl EmpiricalMeasures {
    pub fn new(grid: &Grid) -> Self {
        let c = grid.len();
        EmpiricalMeasures {
            counts: vec![0.0; c],
            pair_counts: vec![0.0; c * c],
            samples: 0,
            cells: c,
        }
    }

    pub fn add(&mut self, config: &ParticleConfiguration, grid: &Grid) -> Result<()> {
        let cells: Vec<usize> = config
            .positions
            .chunks(config.dimension)
            .map(|q| grid.cell_of(q).ok_or_else(|| Error::contract("particle outside the domain")))
            .collect::<Result<_>>()?;
        for (i, &a) in cells.iter().enumerate() {
            self.counts[a] += 1.0;
            for &b in &cells[i + 1..] {
                self.pair_counts[a * self.cells + b] += 1.0;
                self.pair_counts[b * self.cells + a] += 1.0;
            }
        }
        self.samples += 1;
        Ok(())
    }

    /// Normalized one-point histogram as a density on `grid`.
    pub fn one_point(&self, grid: &std::sync::Arc<Grid>) -> Result<DensityField> {
        let total: f64 = self.counts.iter().sum();
        if total == 0.0 {
            return Err(Error::contract("no samples accumulated"));
        }
        let masses: Vec<f64> = self.counts.iter().map(|c| c / total).collect();
        DensityField::from_masses(grid.clone(), &masses)
    }

    /// Two-point cell probabilities, summing to 1.
    pub fn two_point(&self) -> Vec<f64> {
        let total: f64 = self.pair_counts.iter().sum();
        self.pair_counts.iter().map(|c| c / total.max(1.0)).collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct JensenReport {
    pub n_total: usize,
    pub n_split: usize,
    pub trials: usize,
    /// The bilinear Jensen bound needs a PSD kernel.
    pub jensen_applicable: bool,
    pub jensen_violations: usize,
    pub amgm_violations: usize,
    /// max |Δ_N − (n/N)Δ_n − (1−n/N)Δ_Y| over grid cells.
    pub convex_split_error: f64,
    /// Smallest slack seen in each inequality (negative means violated).
    pub min_jensen_slack: f64,
    pub min_amgm_slack: f64,
    pub note: Option<String>,
}

/// Random-configuration trials of the split X^(N) = (X^(n), Y^(N−n)):
/// the convex decomposition of Δ^(1), the bilinear Jensen bound and the
/// AM–GM bound on the positive parts.
pub fn jensen_superadditivity_check<R: Rng + ?Sized>(
    n_total: usize,
    n_split: usize,
    epsilon: f64,
    pot: &PairPotential,
    domain: &Grid,
    trials: usize,
    rng: &mut R,
) -> Result<JensenReport> {
    if !(1 <= n_split && n_split < n_total) {
        return Err(Error::contract(format!("need 1 <= n < N, got n = {n_split}, N = {n_total}")));
    }
    if !(epsilon > 0.0) {
        return Err(Error::contract("ε must be positive"));
    }
    let psd = pot.is_psd() == Some(true);
    let dim = domain.dimension();
    let alpha = n_split as f64 / n_total as f64;
    let cut = n_split * dim;
    let mut rep = JensenReport {
        n_total,
        n_split,
        trials,
        jensen_applicable: psd,
        jensen_violations: 0,
        amgm_violations: 0,
        convex_split_error: 0.0,
        min_jensen_slack: f64::INFINITY,
        min_amgm_slack: f64::INFINITY,
        note: (!psd).then(|| "kernel not known to be PSD; Jensen bound not applicable".to_string()),
    };
    let cells = domain.len();
    for _ in 0..trials {
        let x = ParticleConfiguration::uniform(n_total, domain, rng);
        let (xs, ys) = x.positions.split_at(cut);

        let hist = |pts: &[f64]| -> Vec<f64> {
            let mut h = vec![0.0; cells];
            let m = (pts.len() / dim) as f64;
            for q in pts.chunks(dim) {
                if let Some(c) = domain.cell_of(q) {
                    h[c] += 1.0 / m;
                }
            }
            h
        };
        let (hn, hx, hy) = (hist(&x.positions), hist(xs), hist(ys));
        for c in 0..cells {
            let e = (hn[c] - alpha * hx[c] - (1.0 - alpha) * hy[c]).abs();
            rep.convex_split_error = rep.convex_split_error.max(e);
        }

        let a_n = empirical_bilinear(&x.positions, dim, pot);
        let a_x = empirical_bilinear(xs, dim, pot);
        let a_y = empirical_bilinear(ys, dim, pot);
        let tol = 1e-12 * a_n.abs().max(a_x.abs()).max(a_y.abs()).max(1.0);

        if psd {
            let slack = alpha * a_x + (1.0 - alpha) * a_y - a_n;
            rep.min_jensen_slack = rep.min_jensen_slack.min(slack);
            if slack < -tol {
                rep.jensen_violations += 1;
            }
        }
        // (α u + (1−α) v)₊ ≥ u₊^α v₊^(1−α) with u, v the two bracketed terms.
        let u = 1.0 - a_x / epsilon;
        let v = 1.0 - a_y / epsilon;
        let lhs = (alpha * u + (1.0 - alpha) * v).max(0.0);
        let rhs = u.max(0.0).powf(alpha) * v.max(0.0).powf(1.0 - alpha);
        let slack = lhs - rhs;
        rep.min_amgm_slack = rep.min_amgm_slack.min(slack);
        if slack < -1e-12 {
            rep.amgm_violations += 1;
        }
        // With the Jensen bound the chain reaches the full positive part.
        if psd {
            let full = (1.0 - a_n / epsilon).max(0.0);
            if full - rhs < -1e-12 {
                rep.amgm_violations += 1;
            }
        }
    }
    Ok(rep)
}
