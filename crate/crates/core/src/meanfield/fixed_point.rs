use rayon::prelude::*;

use super::{BranchReport, BranchStatus, MeanField, MeanFieldSolution, SolveMode, SolverOptions};
use crate::domain::DensityField;
use crate::error::{Error, Result};
use crate::functionals::{canonical_perfect_gas, perfect_gas_entropy, relative_entropy_masses};
use crate::potentials::KernelMatrix;

// Residual checkpoints for detecting oscillation; a rise over one window
// halves the damping.
const WINDOW: usize = 200;
const MIN_DAMPING: f64 = 1e-4;
// Two branches within this of each other count as tied.
const TIE_TOL: f64 = 1e-9;

/// Boltzmann map in mass coordinates: t_i ∝ w_i exp(−(Ux)_i/θ).
pub(crate) fn boltzmann(ux: &[f64], weights: &[f64], theta: f64, out: &mut [f64]) {
    let mut top = f64::NEG_INFINITY;
    for (o, (u, w)) in out.iter_mut().zip(ux.iter().zip(weights)) {
        *o = w.ln() - u / theta;
        top = top.max(*o);
    }
    let mut total = 0.0;
    for o in out.iter_mut() {
        *o = (*o - top).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// sup_i |x_i − t_i| / w_i.
pub(crate) fn density_residual(x: &[f64], t: &[f64], weights: &[f64]) -> f64 {
    x.iter()
        .zip(t)
        .zip(weights)
        .map(|((a, b), w)| (a - b).abs() / w)
        .fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Copy)]
enum Target {
    Energy(f64),
    Temperature(f64),
}

impl Target {
    fn theta(self, form: f64, dim: f64) -> f64 {
        match self {
            Target::Energy(eps) => 2.0 / dim * (eps - form),
            Target::Temperature(t) => t,
        }
    }

    // S_{I/ε} or R − ⟨ρ,ρ⟩/θ.
    fn objective(self, r: f64, form: f64, dim: f64) -> f64 {
        match self {
            Target::Energy(eps) => r + 0.5 * dim * (1.0 - form / eps).ln(),
            Target::Temperature(t) => r - form / t,
        }
    }
}

pub(crate) struct Branch {
    pub x: Vec<f64>,
    pub report: BranchReport,
    pub history: Vec<f64>,
}

fn iterate(k: &KernelMatrix, target: Target, x0: Vec<f64>, index: usize, opts: &SolverOptions) -> Branch {
    let grid = k.grid();
    let w = grid.weights();
    let dim = grid.dimension() as f64;
    let n = w.len();
    let mut x = x0;
    let mut t = vec![0.0; n];
    let mut cand = vec![0.0; n];
    let mut gamma = opts.damping;
    let mut halvings = 0;
    let mut history = Vec::new();
    let mut prev_obj = f64::NAN;
    let mut checkpoint = f64::INFINITY;
    let mut residual = f64::INFINITY;
    let mut objective = f64::NAN;

    let mut ux = k.apply(&x);
    let mut form = 0.5 * dot(&ux, &x);
    let mut status = BranchStatus::MaxIterations;
    let mut it = 0;
    while it < opts.max_iters {
        let theta = target.theta(form, dim);
        boltzmann(&ux, w, theta, &mut t);
        residual = density_residual(&x, &t, w);
        objective = target.objective(relative_entropy_masses(&x, grid), form, dim);
        let obj_ok = (objective - prev_obj).abs() <= opts.objective_tol * objective.abs().max(1.0);
        if residual <= opts.residual_tol && obj_ok {
            status = BranchStatus::Converged;
            break;
        }
        prev_obj = objective;
        if it % WINDOW == 0 {
            history.push(residual);
            if it > 0 && residual > checkpoint && gamma > MIN_DAMPING {
                gamma *= 0.5;
            }
            checkpoint = residual;
        }
        // Damped step; a step that would push θ to zero or below is halved.
        loop {
            for i in 0..n {
                cand[i] = (1.0 - gamma) * x[i] + gamma * t[i];
            }
            let cux = k.apply(&cand);
            let cform = 0.5 * dot(&cux, &cand);
            if target.theta(cform, dim) > 0.0 {
                std::mem::swap(&mut x, &mut cand);
                ux = cux;
                form = cform;
                break;
            }
            halvings += 1;
            gamma *= 0.5;
            if halvings > opts.max_halvings {
                status = BranchStatus::Stalled;
                break;
            }
        }
        if status == BranchStatus::Stalled {
            break;
        }
        it += 1;
    }
    history.push(residual);
    Branch {
        x,
        report: BranchReport {
            index,
            status,
            objective,
            residual,
            iterations: it,
            final_damping: gamma,
        },
        history,
    }
}

/// Best converged branch: larger objective wins, ties go to the smaller index.
pub(crate) fn select(branches: &[Branch]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, b) in branches.iter().enumerate() {
        if b.report.status != BranchStatus::Converged {
            continue;
        }
        match best {
            None => best = Some(i),
            Some(j) if b.report.objective > branches[j].report.objective + TIE_TOL => best = Some(i),
            _ => {}
        }
    }
    best
}

fn failure(branches: &[Branch], what: &str) -> Error {
    if branches.iter().all(|b| b.report.status == BranchStatus::Stalled) {
        return Error::Stall(format!(
            "{what}: every start exhausted its damping halvings keeping θ > 0"
        ));
    }
    let residual_history = branches
        .iter()
        .min_by(|a, b| a.report.residual.total_cmp(&b.report.residual))
        .map(|b| b.history.clone())
        .unwrap_or_default();
    let best = residual_history.last().copied().unwrap_or(f64::NAN);
    Error::NonConvergence {
        message: format!("{what}: no start converged (best residual {best:e})"),
        residual_history,
    }
}

impl MeanField<'_> {
    /// Microcanonical solve from the standard multistarts.
    pub fn solve_microcanonical(&self, epsilon: f64, opts: &SolverOptions) -> Result<MeanFieldSolution> {
        self.check_feasible(epsilon)?;
        let starts = self.starts(opts.multistarts, opts.seed);
        self.solve_microcanonical_from(epsilon, starts, opts)
    }

    /// Microcanonical solve from explicit starting masses. Infeasible starts
    /// are pulled toward the ground state first.
    pub fn solve_microcanonical_from(
        &self,
        epsilon: f64,
        starts: Vec<Vec<f64>>,
        opts: &SolverOptions,
    ) -> Result<MeanFieldSolution> {
        self.check_feasible(epsilon)?;
        let target = Target::Energy(epsilon);
        let branches: Vec<Branch> = starts
            .into_iter()
            .enumerate()
            .map(|(i, x0)| {
                let x0 = self.make_feasible(&x0, epsilon);
                iterate(self.k, target, x0, i, opts)
            })
            .collect();
        let Some(best) = select(&branches) else {
            return Err(failure(&branches, &format!("microcanonical ε = {epsilon}")));
        };
        self.assemble(SolveMode::Microcanonical { epsilon }, &branches, best)
    }

    pub fn solve_canonical(&self, theta: f64, opts: &SolverOptions) -> Result<MeanFieldSolution> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::contract(format!("canonical solve needs θ > 0, got {theta}")));
        }
        let target = Target::Temperature(theta);
        let branches: Vec<Branch> = self
            .starts(opts.multistarts, opts.seed)
            .into_iter()
            .enumerate()
            .map(|(i, x0)| iterate(self.k, target, x0, i, opts))
            .collect();
        let Some(best) = select(&branches) else {
            return Err(failure(&branches, &format!("canonical θ = {theta}")));
        };
        self.assemble(SolveMode::Canonical { theta }, &branches, best)
    }

    fn assemble(&self, mode: SolveMode, branches: &[Branch], best: usize) -> Result<MeanFieldSolution> {
        let grid = self.k.grid();
        let dim = grid.dimension() as f64;
        let b = &branches[best];
        let form = self.k.quadratic(&b.x);
        let r = relative_entropy_masses(&b.x, grid);
        let (theta, epsilon, s_k, s_i) = match mode {
            SolveMode::Microcanonical { epsilon } => {
                let theta = 2.0 / dim * (epsilon - form);
                let s_i = r + 0.5 * dim * (1.0 - form / epsilon).ln();
                (theta, epsilon, perfect_gas_entropy(epsilon, grid), s_i)
            }
            SolveMode::Canonical { theta } => {
                let eps = 0.5 * dim * theta + form;
                (theta, eps, canonical_perfect_gas(theta, grid), r - form / theta)
            }
        };
        Ok(MeanFieldSolution {
            mode,
            rho: DensityField::from_masses(grid.clone(), &b.x)?,
            theta,
            epsilon,
            interaction_energy: form,
            s_k,
            s_i,
            s: s_k + s_i,
            objective: b.report.objective,
            residual: b.report.residual,
            iterations: b.report.iterations,
            branch: best,
            branches: branches.iter().map(|b| b.report.clone()).collect(),
            energy_shift: 0.5 * self.k.shift(),
        })
    }
}

pub fn solve_microcanonical(epsilon: f64, k: &KernelMatrix, opts: &SolverOptions) -> Result<MeanFieldSolution> {
    MeanField::new(k)?.solve_microcanonical(epsilon, opts)
}

pub fn solve_canonical(theta: f64, k: &KernelMatrix, opts: &SolverOptions) -> Result<MeanFieldSolution> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::contract(format!("canonical solve needs θ > 0, got {theta}")));
    }
    MeanField::new(k)?.solve_canonical(theta, opts)
}

/// Solve many energies in parallel, one result per input.
pub(crate) fn solve_many(
    mf: &MeanField<'_>,
    energies: &[f64],
    opts: &SolverOptions,
) -> Vec<Result<MeanFieldSolution>> {
    energies
        .par_iter()
        .map(|&e| mf.solve_microcanonical(e, opts))
        .collect()
}
