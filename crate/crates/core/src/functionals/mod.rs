//! Continuum (N = ∞) functionals of one-body densities.
//!
//! Densities enter through [`DensityField`]; the solvers work with cell
//! masses x_i = ρ_i w_i, and the `*_masses` helpers are the same functionals in
//! those coordinates.

mod ground;

use std::f64::consts::PI;
use std::fmt;

use serde::{Serialize, Serializer};

use crate::domain::{DensityField, Grid};
use crate::error::{Error, Result};
use crate::potentials::KernelMatrix;

pub use ground::{continuum_ground_energy, GroundEnergy};

/// A real number or −∞, kept as a tag so that −∞ never enters arithmetic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExtReal {
    Finite(f64),
    NegInfinity,
}

impl ExtReal {
    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(v) => Some(v),
            ExtReal::NegInfinity => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn plus(self, v: f64) -> ExtReal {
        match self {
            ExtReal::Finite(a) => ExtReal::Finite(a + v),
            ExtReal::NegInfinity => ExtReal::NegInfinity,
        }
    }

    /// Total order with −∞ below every finite value.
    pub fn gt(self, other: ExtReal) -> bool {
        match (self, other) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => a > b,
            (ExtReal::Finite(_), ExtReal::NegInfinity) => true,
            _ => false,
        }
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(v) => write!(f, "{v}"),
            ExtReal::NegInfinity => f.write_str("-inf"),
        }
    }
}

// JSON has no infinities; −∞ is written as the string "-inf".
impl Serialize for ExtReal {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ExtReal::Finite(v) => s.serialize_f64(*v),
            ExtReal::NegInfinity => s.serialize_str("-inf"),
        }
    }
}

/// f(p, q) = σ_θ(p) ρ(q). The Maxwellian factor is kept analytic.
#[derive(Clone, Debug)]
pub struct PhaseDensity {
    pub rho: DensityField,
    pub theta: f64,
}

impl PhaseDensity {
    pub fn new(rho: DensityField, theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::contract(format!("phase density needs θ > 0, got {theta}")));
        }
        Ok(PhaseDensity { rho, theta })
    }
}

/// ε = ε_kin + ε_int with ε_kin = (D/2)θ and ε_int = ⟨ρ,ρ⟩.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnergyBudget {
    pub epsilon: f64,
    pub kinetic: f64,
    pub interaction: f64,
}

fn same_grid(rho: &DensityField, k: &KernelMatrix) -> Result<()> {
    if rho.same_grid(k.grid()) {
        Ok(())
    } else {
        Err(Error::contract("density and kernel live on different grids"))
    }
}

/// ⟨ρ,ρ⟩ = ½ Σ_ij U_ij ρ_i ρ_j w_i w_j.
pub fn bilinear_form(rho: &DensityField, k: &KernelMatrix) -> Result<f64> {
    same_grid(rho, k)?;
    Ok(k.quadratic(&rho.masses()))
}

/// R(ρ|λ) = −Σ w_i ρ_i ln(|Λ| ρ_i), with 0 ln 0 = 0.
pub fn relative_entropy(rho: &DensityField) -> f64 {
    relative_entropy_masses(&rho.masses(), rho.grid())
}

pub fn relative_entropy_masses(x: &[f64], grid: &Grid) -> f64 {
    let vol = grid.total_volume();
    -x.iter()
        .zip(grid.weights())
        .filter(|(m, _)| **m > 0.0)
        .map(|(m, w)| m * (vol * m / w).ln())
        .sum::<f64>()
}

/// θ_ε(ρ) = (2/D)(ε − ⟨ρ,ρ⟩). The sign is the caller's business.
pub fn theta_of_rho(rho: &DensityField, epsilon: f64, k: &KernelMatrix) -> Result<f64> {
    let d = rho.grid().dimension() as f64;
    Ok(2.0 / d * (epsilon - bilinear_form(rho, k)?))
}

/// Q_{I/ε}(ρ) = (D/2) ln(1 − ⟨ρ,ρ⟩/ε), or −∞ once ⟨ρ,ρ⟩ ≥ ε.
pub fn quasi_interaction_energy(rho: &DensityField, epsilon: f64, k: &KernelMatrix) -> Result<ExtReal> {
    positive_epsilon(epsilon)?;
    Ok(quasi_from_form(bilinear_form(rho, k)?, epsilon, rho.grid().dimension()))
}

pub fn quasi_from_form(form: f64, epsilon: f64, dimension: usize) -> ExtReal {
    if form < epsilon {
        ExtReal::Finite(0.5 * dimension as f64 * (1.0 - form / epsilon).ln())
    } else {
        ExtReal::NegInfinity
    }
}

/// S_{I/ε}(ρ) = R(ρ|λ) + Q_{I/ε}(ρ).
pub fn interaction_entropy_density(rho: &DensityField, epsilon: f64, k: &KernelMatrix) -> Result<ExtReal> {
    Ok(quasi_interaction_energy(rho, epsilon, k)?.plus(relative_entropy(rho)))
}

/// S_{I/ε} in mass coordinates.
pub fn interaction_entropy_masses(x: &[f64], epsilon: f64, k: &KernelMatrix) -> ExtReal {
    let grid = k.grid();
    quasi_from_form(k.quadratic(x), epsilon, grid.dimension()).plus(relative_entropy_masses(x, grid))
}

fn positive_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon.is_finite() {
        Ok(())
    } else {
        Err(Error::contract(format!("ε must be positive and finite, got {epsilon}")))
    }
}

/// σ_θ(p) = (2πθ)^{−D/2} exp(−|p|²/2θ), D = p.len().
pub fn maxwellian_value(theta: f64, p: &[f64]) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(Error::contract(format!("Maxwellian needs θ > 0, got {theta}")));
    }
    let d = p.len() as f64;
    let p2: f64 = p.iter().map(|x| x * x).sum();
    Ok((2.0 * PI * theta).powf(-0.5 * d) * (-p2 / (2.0 * theta)).exp())
}

/// H_B(f) = ∬ f ln(f/e) = ∫ρ ln ρ − (D/2) ln(2πθ) − D/2 − 1 for f = σ_θ ρ.
pub fn h_function(f: &PhaseDensity) -> f64 {
    let grid = f.rho.grid();
    let d = grid.dimension() as f64;
    let rho_ln_rho = -relative_entropy(&f.rho) - grid.total_volume().ln();
    rho_ln_rho - 0.5 * d * (2.0 * PI * f.theta).ln() - 0.5 * d - 1.0
}

pub fn energy_of_f(f: &PhaseDensity, k: &KernelMatrix) -> Result<EnergyBudget> {
    let d = f.rho.grid().dimension() as f64;
    let kinetic = 0.5 * d * f.theta;
    let interaction = bilinear_form(&f.rho, k)?;
    Ok(EnergyBudget {
        epsilon: kinetic + interaction,
        kinetic,
        interaction,
    })
}

/// s_K(ε) = 1 + ln|Λ| + (D/2) ln(4πeε/D), the convention for which s = −H_B
/// holds at the maximizer.
pub fn perfect_gas_entropy(epsilon: f64, grid: &Grid) -> f64 {
    perfect_gas_entropy_d(epsilon, grid.total_volume(), grid.dimension())
}

pub fn perfect_gas_entropy_d(epsilon: f64, volume: f64, dimension: usize) -> f64 {
    let d = dimension as f64;
    1.0 + volume.ln() + 0.5 * d * (4.0 * PI * std::f64::consts::E * epsilon / d).ln()
}

/// The perfect-gas entropy without the additive 1, i.e. ln(|Λ|(4πeε/D)^{D/2}).
/// Reported alongside [`perfect_gas_entropy`] so the two conventions can be compared.
pub fn perfect_gas_entropy_printed(epsilon: f64, grid: &Grid) -> f64 {
    perfect_gas_entropy(epsilon, grid) - 1.0
}

/// φ_K(θ) = ln(e|Λ|(2πθ)^{D/2}), canonical counterpart of s_K.
pub fn canonical_perfect_gas(theta: f64, grid: &Grid) -> f64 {
    let d = grid.dimension() as f64;
    1.0 + grid.total_volume().ln() + 0.5 * d * (2.0 * PI * theta).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_grid, uniform_density};
    use crate::potentials::{assemble_kernel, PairPotential};
    use crate::quadrature::gauss_hermite;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn line(cells: usize, hi: f64) -> Arc<Grid> {
        Arc::new(build_grid(1, &[[0.0, hi]], cells).unwrap())
    }

    fn cube(cells: usize) -> Arc<Grid> {
        Arc::new(build_grid(3, &[[0.0, 1.0]; 3], cells).unwrap())
    }

    fn constant(c: f64, g: &Arc<Grid>) -> KernelMatrix {
        assemble_kernel(&PairPotential::constant(c).unwrap(), g).unwrap()
    }

    #[test]
    fn bilinear_examples() {
        let g = line(6, 1.0);
        let u = uniform_density(g.clone());
        assert_eq!(bilinear_form(&u, &constant(0.0, &g)).unwrap(), 0.0);
        assert!((bilinear_form(&u, &constant(3.0, &g)).unwrap() - 1.5).abs() < 1e-14);
        let g2 = line(2, 1.0);
        let k = KernelMatrix::from_entries(g2.clone(), vec![0.0, 4.0, 4.0, 0.0]).unwrap();
        assert!((bilinear_form(&uniform_density(g2), &k).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn relative_entropy_examples() {
        let g = line(8, 1.0);
        assert_eq!(relative_entropy(&uniform_density(g.clone())), 0.0);
        let half = DensityField::new(g.clone(), vec![2.0, 2.0, 2.0, 2.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((relative_entropy(&half) + 2f64.ln()).abs() < 1e-15);
        let g = line(8, 3.0);
        let half = DensityField::normalized(g, vec![1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((relative_entropy(&half) + 2f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn theta_and_quasi_examples() {
        let g = cube(3);
        let u = uniform_density(g.clone());
        assert!((theta_of_rho(&u, 1.5, &constant(0.0, &g)).unwrap() - 1.0).abs() < 1e-15);
        assert!((theta_of_rho(&u, 3.0, &constant(4.0, &g)).unwrap() - 2.0 / 3.0).abs() < 1e-14);
        assert!(theta_of_rho(&u, 2.0, &constant(4.0, &g)).unwrap().abs() < 1e-14);
        assert_eq!(quasi_interaction_energy(&u, 1.0, &constant(0.0, &g)).unwrap(), ExtReal::Finite(0.0));
        let q = quasi_interaction_energy(&u, 4.0, &constant(4.0, &g)).unwrap().finite().unwrap();
        assert!((q - 1.5 * 0.5f64.ln()).abs() < 1e-12);
        assert!((q + 1.039721).abs() < 1e-6);
        assert_eq!(quasi_interaction_energy(&u, 1.9, &constant(4.0, &g)).unwrap(), ExtReal::NegInfinity);
        let s = interaction_entropy_density(&u, 4.0, &constant(4.0, &g)).unwrap().finite().unwrap();
        assert!((s - q).abs() < 1e-12);
        assert!(quasi_interaction_energy(&u, 0.0, &constant(4.0, &g)).is_err());
    }

    #[test]
    fn maxwellian_normalization_and_moments() {
        assert!((maxwellian_value(1.0 / (2.0 * PI), &[0.0; 3]).unwrap() - 1.0).abs() < 1e-14);
        assert!(maxwellian_value(0.0, &[0.0]).is_err());
        // ∫ σ_θ dp via Gauss–Hermite after p = √(2θ) x.
        let (x, w) = gauss_hermite(40);
        for theta in [0.3f64, 1.0, 2.7] {
            let s = (2.0 * theta).sqrt();
            let mut m0 = 0.0;
            let mut m2 = 0.0;
            for (xi, wi) in x.iter().zip(&w) {
                let p = s * xi;
                let val = maxwellian_value(theta, &[p]).unwrap();
                m0 += wi * (xi * xi).exp() * val * s;
                m2 += wi * (xi * xi).exp() * val * s * p * p;
            }
            assert!((m0 - 1.0).abs() < 1e-8);
            assert!((m2 - theta).abs() < 1e-8);
        }
    }

    #[test]
    fn h_function_examples() {
        let g = cube(2);
        let f = PhaseDensity::new(uniform_density(g.clone()), 1.0 / (2.0 * PI)).unwrap();
        assert!((h_function(&f) + 2.5).abs() < 1e-14);
        let f4 = PhaseDensity::new(uniform_density(g), 4.0 / (2.0 * PI)).unwrap();
        assert!((h_function(&f) - h_function(&f4) - 1.5 * 4f64.ln()).abs() < 1e-13);
    }

    #[test]
    fn h_function_matches_momentum_quadrature() {
        // ∫σ ln σ dp for D = 1 by Gauss–Hermite, then H_B = ∫ρ ln ρ + D·∫σ ln σ − 1.
        let g = line(4, 1.0);
        let rho = DensityField::normalized(g, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let theta: f64 = 0.7;
        let (x, w) = gauss_hermite(60);
        let s = (2.0 * theta).sqrt();
        let sls: f64 = x
            .iter()
            .zip(&w)
            .map(|(xi, wi)| {
                let v = maxwellian_value(theta, &[s * xi]).unwrap();
                wi * (xi * xi).exp() * v * v.ln() * s
            })
            .sum();
        let rlr = -relative_entropy(&rho) - rho.grid().total_volume().ln();
        let f = PhaseDensity::new(rho, theta).unwrap();
        assert!((h_function(&f) - (rlr + sls - 1.0)).abs() < 1e-9);
    }

    #[test]
    fn energy_examples() {
        let g = cube(2);
        let u = uniform_density(g.clone());
        let f = PhaseDensity::new(u.clone(), 1.0).unwrap();
        assert!((energy_of_f(&f, &constant(0.0, &g)).unwrap().epsilon - 1.5).abs() < 1e-15);
        let f = PhaseDensity::new(u.clone(), 2.0 / 3.0).unwrap();
        let e = energy_of_f(&f, &constant(4.0, &g)).unwrap();
        assert!((e.epsilon - 3.0).abs() < 1e-14);
        let k = constant(4.0, &g);
        let theta = theta_of_rho(&u, e.epsilon, &k).unwrap();
        assert!((theta - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn perfect_gas_examples() {
        let g = cube(2);
        let eps = 3.0 / (4.0 * PI * std::f64::consts::E);
        assert!((perfect_gas_entropy(eps, &g) - 1.0).abs() < 1e-14);
        assert!((perfect_gas_entropy(4.0 * eps, &g) - perfect_gas_entropy(eps, &g) - 3.0 * 2f64.ln()).abs() < 1e-13);
        let g2 = Arc::new(build_grid(3, &[[0.0, 2.0], [0.0, 1.0], [0.0, 1.0]], 2).unwrap());
        assert!((perfect_gas_entropy(eps, &g2) - perfect_gas_entropy(eps, &g) - 2f64.ln()).abs() < 1e-14);
        assert!((canonical_perfect_gas(1.0 / (2.0 * PI), &g) - 1.0).abs() < 1e-14);
    }

    fn density(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, n).prop_map(|v| v.into_iter().map(|x| x * x).collect())
    }

    proptest! {
        #[test]
        fn relative_entropy_matches_direct_sum(v in density(10)) {
            prop_assume!(v.iter().sum::<f64>() > 1e-6);
            let g = line(10, 2.5);
            let rho = DensityField::normalized(g.clone(), v).unwrap();
            let mut direct = 0.0;
            for i in 0..10 {
                let r = rho.values()[i];
                if r > 0.0 {
                    direct -= g.weights()[i] * r * (2.5 * r).ln();
                }
            }
            prop_assert!((relative_entropy(&rho) - direct).abs() <= 1e-12);
            prop_assert!(relative_entropy(&rho) <= 1e-15);
        }

        #[test]
        fn budget_is_conserved(theta in 0.01f64..10.0, v in density(6)) {
            prop_assume!(v.iter().sum::<f64>() > 1e-6);
            let g = line(6, 1.0);
            let k = assemble_kernel(&PairPotential::softened_coulomb(0.1).unwrap(), &g).unwrap();
            let f = PhaseDensity::new(DensityField::normalized(g, v).unwrap(), theta).unwrap();
            let e = energy_of_f(&f, &k).unwrap();
            prop_assert_eq!(e.kinetic + e.interaction, e.epsilon);
            let back = theta_of_rho(&f.rho, e.epsilon, &k).unwrap();
            prop_assert!((back - theta).abs() <= 1e-12 * (1.0 + theta + e.epsilon));
        }
    }
}
