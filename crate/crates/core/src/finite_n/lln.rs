use serde::Serialize;

use super::ParticleConfiguration;
use crate::domain::Grid;
use crate::error::{Error, Result};
use crate::functionals::PhaseDensity;
use crate::stats::mean_sd;

/// One-particle observables θ(p, q).
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    One,
    Coordinate { axis: usize },
    CoordinateProduct { a: usize, b: usize },
    /// |p|²/2
    KineticEnergy,
    /// Indicator of a box in q.
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl TestFunction {
    pub fn label(&self) -> String {
        match self {
            TestFunction::One => "one".into(),
            TestFunction::Coordinate { axis } => format!("q{axis}"),
            TestFunction::CoordinateProduct { a, b } => format!("q{a}*q{b}"),
            TestFunction::KineticEnergy => "p2/2".into(),
            TestFunction::Box { lo, hi } => format!("box{lo:?}-{hi:?}"),
        }
    }

    fn eval(&self, p: Option<&[f64]>, q: &[f64]) -> Result<f64> {
        Ok(match self {
            TestFunction::One => 1.0,
            TestFunction::Coordinate { axis } => q[*axis],
            TestFunction::CoordinateProduct { a, b } => q[*a] * q[*b],
            TestFunction::KineticEnergy => {
                let p = p.ok_or_else(|| Error::contract("|p|² test function needs momenta"))?;
                0.5 * p.iter().map(|v| v * v).sum::<f64>()
            }
            TestFunction::Box { lo, hi } => {
                let inside = q.iter().enumerate().all(|(k, v)| *v >= lo[k] && *v < hi[k]);
                if inside {
                    1.0
                } else {
                    0.0
                }
            }
        })
    }

    /// ∫θ f_ε with ρ taken piecewise constant on its cells.
    fn prediction(&self, f: &PhaseDensity) -> f64 {
        let grid = f.rho.grid();
        let h = grid.spacing();
        let x = f.rho.masses();
        let cell_mean = |node: &[f64]| -> f64 {
            match self {
                TestFunction::One => 1.0,
                TestFunction::Coordinate { axis } => node[*axis],
                TestFunction::CoordinateProduct { a, b } if a == b => node[*a] * node[*a] + h[*a] * h[*a] / 12.0,
                TestFunction::CoordinateProduct { a, b } => node[*a] * node[*b],
                TestFunction::KineticEnergy => unreachable!(),
                TestFunction::Box { lo, hi } => (0..node.len())
                    .map(|k| {
                        let (a, b) = (node[k] - 0.5 * h[k], node[k] + 0.5 * h[k]);
                        ((b.min(hi[k]) - a.max(lo[k])).max(0.0)) / h[k]
                    })
                    .product(),
            }
        };
        if *self == TestFunction::KineticEnergy {
            return 0.5 * grid.dimension() as f64 * f.theta;
        }
        grid.nodes().zip(&x).map(|(node, m)| m * cell_mean(node)).sum()
    }
}

/// Coordinate monomials up to degree 2, |p|²/2, and two boxes along the
/// first axis (the lower half and the middle half).
pub fn default_test_functions(domain: &Grid) -> Vec<TestFunction> {
    let d = domain.dimension();
    let b = domain.bounds();
    let mut out = vec![TestFunction::One];
    out.extend((0..d).map(|axis| TestFunction::Coordinate { axis }));
    for a in 0..d {
        for bb in a..d {
            out.push(TestFunction::CoordinateProduct { a, b: bb });
        }
    }
    out.push(TestFunction::KineticEnergy);
    let lo: Vec<f64> = b.iter().map(|x| x[0]).collect();
    let mut hi: Vec<f64> = b.iter().map(|x| x[1] + 1.0).collect();
    let len = b[0][1] - b[0][0];
    hi[0] = b[0][0] + 0.5 * len;
    out.push(TestFunction::Box { lo: lo.clone(), hi: hi.clone() });
    let mut lo2 = lo;
    lo2[0] = b[0][0] + 0.25 * len;
    hi[0] = b[0][0] + 0.75 * len;
    out.push(TestFunction::Box { lo: lo2, hi });
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct TestFunctionReport {
    pub label: String,
    pub function: TestFunction,
    /// Mean of ⟨Θ⟩_N over samples.
    pub mean: f64,
    /// Standard deviation of ⟨Θ⟩_N over samples.
    pub spread: f64,
    pub prediction: f64,
    /// Pooled one-particle standard deviation σ̂ of θ.
    pub particle_sd: f64,
    /// 4σ̂/√N.
    pub band: f64,
    /// Fraction of samples with |⟨Θ⟩_N − prediction| ≤ band.
    pub within_band: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LlnReport {
    pub n: usize,
    pub samples: usize,
    pub functions: Vec<TestFunctionReport>,
}

/// Per-sample empirical averages ⟨Θ⟩_N = (1/N) Σ θ(p_i, q_i) against the
/// mean-field value ∫θ f_ε.
pub fn lln_test(samples: &[ParticleConfiguration], f: &PhaseDensity, functions: &[TestFunction]) -> Result<LlnReport> {
    let first = samples.first().ok_or_else(|| Error::contract("no samples"))?;
    let n = first.n();
    if first.dimension != f.rho.grid().dimension() {
        return Err(Error::contract("samples and density differ in dimension"));
    }
    let mut reports = Vec::with_capacity(functions.len());
    for func in functions {
        let mut averages = Vec::with_capacity(samples.len());
        let mut pooled = Vec::with_capacity(samples.len() * n);
        for s in samples {
            let mut acc = 0.0;
            for i in 0..s.n() {
                let v = func.eval(s.momentum(i), s.position(i))?;
                pooled.push(v);
                acc += v;
            }
            averages.push(acc / s.n() as f64);
        }
        let (mean, spread) = mean_sd(&averages);
        let (_, particle_sd) = mean_sd(&pooled);
        let prediction = func.prediction(f);
        let band = 4.0 * particle_sd / (n as f64).sqrt();
        let within = averages.iter().filter(|a| (*a - prediction).abs() <= band).count();
        reports.push(TestFunctionReport {
            label: func.label(),
            function: func.clone(),
            mean,
            spread: if samples.len() > 1 { spread } else { 0.0 },
            prediction,
            particle_sd,
            band,
            within_band: within as f64 / samples.len() as f64,
        });
    }
    Ok(LlnReport {
        n,
        samples: samples.len(),
        functions: reports,
    })
}
