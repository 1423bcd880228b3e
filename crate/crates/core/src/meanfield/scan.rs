use serde::Serialize;

use super::fixed_point::solve_many;
use super::{MeanField, MeanFieldSolution, SolverOptions};
use crate::error::{Error, Result};
use crate::potentials::KernelMatrix;

/// Slack allowed on s_{k+1} − s_k > 0 and on the three-point concavity test.
pub const MONOTONE_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Serialize)]
pub struct ScanPoint {
    pub epsilon: f64,
    pub theta: f64,
    pub s_k: f64,
    pub s_i: f64,
    pub s: f64,
    pub residual: f64,
    pub branch: usize,
    /// s did not decrease relative to the previous row.
    pub monotone_ok: bool,
    /// |s_warm − s_cold| when both passes succeeded.
    pub warm_cold_gap: Option<f64>,
    pub error: Option<String>,
}

impl ScanPoint {
    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanResult {
    pub epsilon_g: f64,
    pub points: Vec<ScanPoint>,
    pub monotone: bool,
    pub concave: bool,
    pub max_warm_cold_gap: f64,
    pub failed_points: usize,
}

impl ScanResult {
    pub fn ok_points(&self) -> impl Iterator<Item = &ScanPoint> {
        self.points.iter().filter(|p| p.is_ok())
    }
}

fn point(eps: f64, sol: &Result<MeanFieldSolution>) -> ScanPoint {
    match sol {
        Ok(s) => ScanPoint {
            epsilon: eps,
            theta: s.theta,
            s_k: s.s_k,
            s_i: s.s_i,
            s: s.s,
            residual: s.residual,
            branch: s.branch,
            monotone_ok: true,
            warm_cold_gap: None,
            error: None,
        },
        Err(e) => ScanPoint {
            epsilon: eps,
            theta: f64::NAN,
            s_k: f64::NAN,
            s_i: f64::NAN,
            s: f64::NAN,
            residual: f64::NAN,
            branch: 0,
            monotone_ok: false,
            warm_cold_gap: None,
            error: Some(e.to_string()),
        },
    }
}

impl MeanField<'_> {
    /// `steps` equally spaced energies on [ε_min, ε_max].
    ///
    /// A serial pass warm-starts each energy from the previous solution; a
    /// parallel pass then solves every energy cold from the full multistart
    /// set. The better of the two is kept and their difference reported.
    /// Energies that fail (below ε_g, say) carry their error and are left
    /// out of the monotone and concave flags.
    pub fn entropy_scan(&self, eps_min: f64, eps_max: f64, steps: usize, opts: &SolverOptions) -> Result<ScanResult> {
        if steps < 2 || !(eps_min < eps_max) {
            return Err(Error::config(format!(
                "scan needs at least 2 steps and ε_min < ε_max, got {steps} on [{eps_min}, {eps_max}]"
            )));
        }
        let energies: Vec<f64> = (0..steps)
            .map(|k| eps_min + (eps_max - eps_min) * k as f64 / (steps - 1) as f64)
            .collect();

        let mut warm = Vec::with_capacity(steps);
        let mut seed = self.starts(1, opts.seed);
        for &e in &energies {
            let r = self.solve_microcanonical_from(e, seed.clone(), opts);
            if let Ok(s) = &r {
                seed = vec![s.rho.masses()];
            }
            warm.push(r);
        }
        let cold = solve_many(self, &energies, opts);

        let mut points = Vec::with_capacity(steps);
        let mut max_gap: f64 = 0.0;
        for ((&e, w), c) in energies.iter().zip(&warm).zip(&cold) {
            let mut p = match (w, c) {
                (Ok(ws), Ok(cs)) => {
                    let gap = (ws.s - cs.s).abs();
                    max_gap = max_gap.max(gap);
                    let mut p = if ws.s > cs.s + 1e-9 { point(e, w) } else { point(e, c) };
                    p.warm_cold_gap = Some(gap);
                    p
                }
                (Ok(_), Err(_)) => point(e, w),
                _ => point(e, c),
            };
            // Compared with the previous solved row; failed rows are skipped.
            if let Some(prev) = points.iter().rev().find(|q: &&ScanPoint| q.is_ok()) {
                p.monotone_ok = p.is_ok() && p.s - prev.s > -MONOTONE_TOL;
            }
            points.push(p);
        }

        let failed_points = points.iter().filter(|p| !p.is_ok()).count();
        let solved: Vec<&ScanPoint> = points.iter().filter(|p| p.is_ok()).collect();
        let monotone = solved.len() >= 2 && solved.iter().all(|p| p.monotone_ok);
        let concave = solved.windows(3).all(|w| {
            let (a, b, c) = (w[0], w[1], w[2]);
            let t = (b.epsilon - a.epsilon) / (c.epsilon - a.epsilon);
            b.s >= a.s + t * (c.s - a.s) - MONOTONE_TOL
        });
        Ok(ScanResult {
            epsilon_g: self.epsilon_g(),
            points,
            monotone,
            concave,
            max_warm_cold_gap: max_gap,
            failed_points,
        })
    }
}

pub fn entropy_scan(
    eps_min: f64,
    eps_max: f64,
    steps: usize,
    k: &KernelMatrix,
    opts: &SolverOptions,
) -> Result<ScanResult> {
    MeanField::new(k)?.entropy_scan(eps_min, eps_max, steps, opts)
}
