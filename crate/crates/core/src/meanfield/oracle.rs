//! Direct simplex maximization, independent of the fixed-point iteration.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::fixed_point::{boltzmann, density_residual};
use super::{MeanField, SolverOptions};
use crate::domain::DensityField;
use crate::error::{Error, Result};
use crate::functionals::relative_entropy_masses;
use crate::potentials::KernelMatrix;
use crate::simplex::{spg_minimize, SpgOptions, SpgResult};

// Keeps ln x finite in the gradient; far below anything that matters.
const FLOOR: f64 = 1e-300;

fn spg_opts() -> SpgOptions {
    SpgOptions {
        max_iters: 100_000,
        tol: 1e-13,
        floor: FLOOR,
        memory: 10,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EntropyMaximizer {
    pub rho: DensityField,
    /// max S_{I/ε}.
    pub value: f64,
    pub theta: f64,
    /// Fixed-point residual of the maximizer, density units.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub start: usize,
}

/// Aux result: s̄_I(ε) and the multiplier μ = 1/θ of the active constraint
/// (0 when the constraint is slack, +∞ at the ground state).
#[derive(Clone, Debug, Serialize)]
pub struct AuxiliaryEntropy {
    pub value: f64,
    pub multiplier: f64,
    pub form: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn penalized_value(k: &KernelMatrix, mu: f64, x: &[f64]) -> f64 {
    -relative_entropy_masses(x, k.grid()) + mu * k.quadratic(x)
}

// Minimize −R(x) + μ⟨x,x⟩ from `x0`: a loose projected-gradient pass, then
// Newton on the KKT system, which converges where the gradient method
// crawls (nearly empty cells make the problem badly conditioned).
fn penalized(k: &KernelMatrix, mu: f64, x0: &[f64]) -> Vec<f64> {
    let grid = k.grid();
    let vol = grid.total_volume();
    let w = grid.weights();
    let loose = SpgOptions {
        max_iters: 5_000,
        tol: 1e-9,
        ..spg_opts()
    };
    let r = spg_minimize(
        |x, g| {
            let ux = k.apply(x);
            for i in 0..x.len() {
                g[i] = (vol * x[i] / w[i]).ln() + 1.0 + mu * ux[i];
            }
            -relative_entropy_masses(x, grid) + 0.5 * mu * dot(&ux, x)
        },
        x0,
        &loose,
    );
    newton_polish(k, mu, r.x)
}

fn newton_polish(k: &KernelMatrix, mu: f64, mut x: Vec<f64>) -> Vec<f64> {
    let n = x.len();
    if n > 2000 {
        return x;
    }
    let grid = k.grid();
    let vol = grid.total_volume();
    let w = grid.weights();
    let mut fx = penalized_value(k, mu, &x);
    for _ in 0..100 {
        let ux = k.apply(&x);
        let g: Vec<f64> = (0..n).map(|i| (vol * x[i] / w[i]).ln() + 1.0 + mu * ux[i]).collect();
        // KKT residual: spread of the gradient, weighted by mass.
        let lambda: f64 = g.iter().zip(&x).map(|(a, b)| a * b).sum();
        let kkt = g.iter().zip(&x).map(|(a, b)| (b * (a - lambda)).abs()).fold(0.0, f64::max);
        if kkt <= 1e-15 {
            break;
        }
        let mut a = DMatrix::<f64>::zeros(n + 1, n + 1);
        let mut rhs = DVector::<f64>::zeros(n + 1);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = mu * k.get(i, j);
            }
            a[(i, i)] += 1.0 / x[i];
            a[(i, n)] = 1.0;
            a[(n, i)] = 1.0;
            rhs[i] = -g[i];
        }
        let Some(sol) = a.lu().solve(&rhs) else { break };
        let dx: Vec<f64> = (0..n).map(|i| sol[i]).collect();
        // Fraction-to-boundary, then backtrack on the objective.
        let mut t: f64 = 1.0;
        for i in 0..n {
            if dx[i] < 0.0 {
                t = t.min(0.99 * x[i] / -dx[i]);
            }
        }
        let mut accepted = false;
        for _ in 0..40 {
            let y: Vec<f64> = (0..n).map(|i| (x[i] + t * dx[i]).max(FLOOR)).collect();
            let fy = penalized_value(k, mu, &y);
            if fy <= fx + 1e-15 * fx.abs().max(1.0) {
                let s: f64 = y.iter().sum();
                x = y.into_iter().map(|v| v / s).collect();
                fx = penalized_value(k, mu, &x);
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    x
}

impl MeanField<'_> {
    /// max S_{I/ε} over the simplex by spectral projected gradient, from the
    /// same starts as the fixed-point solver.
    pub fn maximize_interaction_entropy(&self, epsilon: f64, opts: &SolverOptions) -> Result<EntropyMaximizer> {
        self.check_feasible(epsilon)?;
        let grid = self.k.grid();
        let vol = grid.total_volume();
        let w = grid.weights();
        let dim = grid.dimension() as f64;
        let mut best: Option<(SpgResult, usize)> = None;
        for (idx, x0) in self.starts(opts.multistarts, opts.seed).into_iter().enumerate() {
            let x0 = self.make_feasible(&x0, epsilon);
            let r = spg_minimize(
                |x, g| {
                    let ux = self.k.apply(x);
                    let form = 0.5 * dot(&ux, x);
                    if form >= epsilon {
                        return f64::INFINITY;
                    }
                    let theta = 2.0 / dim * (epsilon - form);
                    for i in 0..x.len() {
                        g[i] = (vol * x[i] / w[i]).ln() + 1.0 + ux[i] / theta;
                    }
                    -relative_entropy_masses(x, grid) - 0.5 * dim * (1.0 - form / epsilon).ln()
                },
                &x0,
                &spg_opts(),
            );
            let better = best.as_ref().is_none_or(|(b, _)| r.value < b.value - 1e-9);
            if better {
                best = Some((r, idx));
            }
        }
        let (r, start) = best.expect("at least one start");
        let ux = self.k.apply(&r.x);
        let theta = 2.0 / dim * (epsilon - 0.5 * dot(&ux, &r.x));
        let mut t = vec![0.0; r.x.len()];
        boltzmann(&ux, w, theta, &mut t);
        Ok(EntropyMaximizer {
            residual: density_residual(&r.x, &t, w),
            rho: DensityField::from_masses(grid.clone(), &r.x)?,
            value: -r.value,
            theta,
            iterations: r.iterations,
            converged: r.converged,
            start,
        })
    }

    /// s̄_I(ε) = max{R(ρ|λ) : ⟨ρ,ρ⟩ ≤ ε}.
    ///
    /// When the constraint binds the maximizer is x(μ) = argmax R − μ⟨ρ,ρ⟩
    /// for the μ with ⟨x(μ),x(μ)⟩ = ε; μ is found by bisection.
    pub fn auxiliary_interaction_entropy(&self, epsilon: f64) -> Result<AuxiliaryEntropy> {
        let eg = self.ground.epsilon_g;
        let margin = 1e-9 * eg.abs().max(1.0);
        if !(epsilon >= eg - margin) {
            return Err(Error::Infeasible(format!(
                "s̄_I undefined below the ground-state energy: ε = {epsilon} < ε_g = {eg}"
            )));
        }
        let grid = self.k.grid();
        let vol = grid.total_volume();
        let uniform: Vec<f64> = grid.weights().iter().map(|w| w / vol).collect();
        let u_form = self.k.quadratic(&uniform);
        if u_form <= epsilon + 1e-12 * epsilon.abs().max(1.0) {
            return Ok(AuxiliaryEntropy {
                value: 0.0,
                multiplier: 0.0,
                form: u_form,
            });
        }
        let xg = self.ground.rho.masses();
        let at_ground = || AuxiliaryEntropy {
            value: relative_entropy_masses(&xg, grid),
            multiplier: f64::INFINITY,
            form: eg,
        };
        if epsilon <= eg + margin {
            return Ok(at_ground());
        }

        // Bracket: form(x(lo)) > ε ≥ form(x(hi)).
        let mut lo = 0.0;
        let mut hi = 1.0;
        let mut x_hi = penalized(self.k, hi, &uniform);
        let mut warm = uniform.clone();
        let mut expansions = 0;
        while self.k.quadratic(&x_hi) > epsilon {
            expansions += 1;
            if expansions > 60 {
                return Ok(at_ground());
            }
            lo = hi;
            warm = x_hi.clone();
            hi *= 4.0;
            x_hi = penalized(self.k, hi, &x_hi);
        }
        for _ in 0..200 {
            if hi - lo <= 1e-14 * hi {
                break;
            }
            let mid = if lo > 0.0 { (lo * hi).sqrt() } else { 0.5 * hi };
            let x = penalized(self.k, mid, &warm);
            let f = self.k.quadratic(&x);
            if f > epsilon {
                lo = mid;
                warm = x;
            } else {
                hi = mid;
                x_hi = x;
                if epsilon - f <= 1e-15 * epsilon.abs().max(1.0) {
                    break;
                }
            }
        }
        // First-order correction for the leftover slack; dR/dε = μ.
        let form = self.k.quadratic(&x_hi);
        Ok(AuxiliaryEntropy {
            value: relative_entropy_masses(&x_hi, grid) + hi * (epsilon - form),
            multiplier: hi,
            form,
        })
    }
}

pub fn maximize_interaction_entropy(
    epsilon: f64,
    k: &KernelMatrix,
    opts: &SolverOptions,
) -> Result<EntropyMaximizer> {
    MeanField::new(k)?.maximize_interaction_entropy(epsilon, opts)
}

pub fn auxiliary_interaction_entropy(epsilon: f64, k: &KernelMatrix) -> Result<AuxiliaryEntropy> {
    MeanField::new(k)?.auxiliary_interaction_entropy(epsilon)
}
