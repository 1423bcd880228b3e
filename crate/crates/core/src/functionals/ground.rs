use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::Serialize;

use crate::domain::DensityField;
use crate::error::Result;
use crate::potentials::KernelMatrix;
use crate::simplex::{spg_minimize, SpgOptions};

const RANDOM_STARTS: usize = 8;
const DIRICHLET_ALPHA: f64 = 0.3;
const STARTS_SEED: u64 = 0x9e37_79b9;
const SUPPORT_TOL: f64 = 1e-10;
// Dense KKT solves above this support size are skipped.
const POLISH_LIMIT: usize = 1500;

/// Minimum of ⟨ρ,ρ⟩ over normalized densities, and a minimizer.
#[derive(Clone, Debug, Serialize)]
pub struct GroundEnergy {
    pub epsilon_g: f64,
    #[serde(skip)]
    pub rho: DensityField,
    /// Every start reached a stationary point to tolerance.
    pub converged: bool,
    pub start_values: Vec<f64>,
    pub best_start: usize,
}

/// ε_g = min ⟨ρ,ρ⟩ by projected gradient from the uniform density and eight
/// vertex-biased Dirichlet starts, each finished with an active-set KKT solve.
///
/// Never fails for lack of convergence; `converged` carries that instead.
pub fn continuum_ground_energy(k: &KernelMatrix) -> Result<GroundEnergy> {
    let grid = k.grid();
    let n = grid.len();
    let mut rng = ChaCha8Rng::seed_from_u64(STARTS_SEED);
    let gamma = Gamma::new(DIRICHLET_ALPHA, 1.0).expect("valid gamma shape");
    let mut starts = vec![vec![1.0 / n as f64; n]];
    for _ in 0..RANDOM_STARTS {
        let v: Vec<f64> = (0..n).map(|_| gamma.sample(&mut rng) + 1e-300).collect();
        let s: f64 = v.iter().sum();
        starts.push(v.into_iter().map(|x| x / s).collect());
    }

    let opts = SpgOptions {
        tol: 1e-13,
        max_iters: 50_000,
        ..SpgOptions::default()
    };
    let mut converged = true;
    let mut best: Option<(f64, Vec<f64>, usize)> = None;
    let mut values = Vec::with_capacity(starts.len());
    for (idx, x0) in starts.iter().enumerate() {
        let r = spg_minimize(
            |x, g| {
                let ux = k.apply(x);
                g.copy_from_slice(&ux);
                0.5 * ux.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            },
            x0,
            &opts,
        );
        let (mut x, mut v) = (r.x, r.value);
        let polished = kkt_polish(k, &x);
        if let Some((xp, vp)) = polished {
            if vp <= v + 1e-14 * v.abs().max(1.0) {
                x = xp;
                v = vp;
            }
        } else {
            converged &= r.converged;
        }
        values.push(v);
        // Strictly better by more than round-off replaces; ties keep the earlier start.
        let better = best.as_ref().is_none_or(|(bv, _, _)| v < bv - 1e-14 * bv.abs().max(1.0));
        if better {
            best = Some((v, x, idx));
        }
    }
    let (epsilon_g, x, best_start) = best.expect("at least one start");
    Ok(GroundEnergy {
        epsilon_g,
        rho: DensityField::from_masses(grid.clone(), &x)?,
        converged,
        start_values: values,
        best_start,
    })
}

// Solve U_SS x_S = λ1, Σ x_S = 1 on the support S of `x`; accept only if the
// KKT conditions hold (x_S ≥ 0 and (Ux)_j ≥ λ off the support).
fn kkt_polish(k: &KernelMatrix, x: &[f64]) -> Option<(Vec<f64>, f64)> {
    let n = x.len();
    let support: Vec<usize> = (0..n).filter(|&i| x[i] > SUPPORT_TOL).collect();
    let m = support.len();
    if m == 0 || m > POLISH_LIMIT {
        return None;
    }
    let mut a = DMatrix::<f64>::zeros(m + 1, m + 1);
    let mut b = DVector::<f64>::zeros(m + 1);
    for (r, &i) in support.iter().enumerate() {
        for (c, &j) in support.iter().enumerate() {
            a[(r, c)] = k.get(i, j);
        }
        a[(r, m)] = -1.0;
        a[(m, r)] = 1.0;
    }
    b[m] = 1.0;
    let sol = a.lu().solve(&b)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let lambda = sol[m];
    let mut xs = vec![0.0; n];
    for (r, &i) in support.iter().enumerate() {
        if sol[r] < 0.0 {
            return None;
        }
        xs[i] = sol[r];
    }
    let ux = k.apply(&xs);
    let scale = lambda.abs().max(1.0);
    for j in 0..n {
        if xs[j] == 0.0 && ux[j] < lambda - 1e-9 * scale {
            return None;
        }
    }
    let v = 0.5 * ux.iter().zip(&xs).map(|(a, b)| a * b).sum::<f64>();
    Some((xs, v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::build_grid;
    use crate::potentials::{assemble_kernel, PairPotential};
    use std::sync::Arc;

    #[test]
    fn zero_and_constant_kernels() {
        let g = Arc::new(build_grid(1, &[[0.0, 1.0]], 8).unwrap());
        let k = assemble_kernel(&PairPotential::zero(), &g).unwrap();
        let r = continuum_ground_energy(&k).unwrap();
        assert_eq!(r.epsilon_g, 0.0);
        assert!(r.rho.values().iter().all(|&v| (v - 1.0).abs() < 1e-15));
        let k = assemble_kernel(&PairPotential::constant(3.0).unwrap(), &g).unwrap();
        assert!((continuum_ground_energy(&k).unwrap().epsilon_g - 1.5).abs() < 1e-14);
    }

    // Enumerate every support set, solve its KKT system and keep the best
    // feasible point.
    fn active_set_oracle(k: &KernelMatrix) -> f64 {
        let n = k.len();
        let mut best = f64::INFINITY;
        for mask in 1u32..(1 << n) {
            let s: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
            let m = s.len();
            let mut a = DMatrix::<f64>::zeros(m + 1, m + 1);
            let mut b = DVector::<f64>::zeros(m + 1);
            for (r, &i) in s.iter().enumerate() {
                for (c, &j) in s.iter().enumerate() {
                    a[(r, c)] = k.get(i, j);
                }
                a[(r, m)] = -1.0;
                a[(m, r)] = 1.0;
            }
            b[m] = 1.0;
            let Some(sol) = a.lu().solve(&b) else { continue };
            if (0..m).any(|r| sol[r] < -1e-14) {
                continue;
            }
            let mut x = vec![0.0; n];
            for (r, &i) in s.iter().enumerate() {
                x[i] = sol[r].max(0.0);
            }
            best = best.min(k.quadratic(&x));
        }
        best
    }

    #[test]
    fn softened_coulomb_matches_active_set_oracle() {
        let g = Arc::new(build_grid(1, &[[0.0, 1.0]], 8).unwrap());
        let k = assemble_kernel(&PairPotential::softened_coulomb(0.1).unwrap(), &g).unwrap();
        let r = continuum_ground_energy(&k).unwrap();
        let o = active_set_oracle(&k);
        assert!((r.epsilon_g - o).abs() < 1e-8, "{} vs {}", r.epsilon_g, o);
        assert!(r.converged);
    }
}
