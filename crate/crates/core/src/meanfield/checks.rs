//! Cross-checks between the variational characterizations of s and φ.

use std::cell::RefCell;
use std::collections::HashMap;

use serde::Serialize;

use super::{MeanField, MeanFieldSolution, ScanResult, SolveMode, SolverOptions};
use crate::error::{Error, Result};
use crate::functionals::{h_function, perfect_gas_entropy, PhaseDensity};
use crate::potentials::KernelMatrix;

/// Points of the coarse s̄_I grid used to bracket the sup over x.
pub const VP_GRID: usize = 64;
const GOLDEN_BRACKET: f64 = 1e-6;

#[derive(Clone, Debug, Serialize)]
pub struct VpReport {
    pub epsilon: f64,
    pub s: f64,
    pub s_i: f64,
    /// Upper end of the x range, 1 − ε_g/ε.
    pub x_max: f64,
    pub x_total: f64,
    pub x_interaction: f64,
    pub sup_total: f64,
    pub sup_interaction: f64,
    /// |s − sup_x (s_K(xε) + s̄_I((1−x)ε))|
    pub gap_total: f64,
    /// |s_I − sup_x ((D/2) ln x + s̄_I((1−x)ε))|
    pub gap_interaction: f64,
    pub aux_evaluations: usize,
}

// sup of f over (0, x_max]: best of a uniform grid, then golden section on
// the neighbouring cells.
fn grid_golden<F: FnMut(f64) -> f64>(mut f: F, x_max: f64) -> (f64, f64) {
    let xs: Vec<f64> = (1..=VP_GRID).map(|j| x_max * j as f64 / VP_GRID as f64).collect();
    let vals: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let (mut bj, mut bv) = (0, f64::NEG_INFINITY);
    for (j, &v) in vals.iter().enumerate() {
        if v > bv {
            bj = j;
            bv = v;
        }
    }
    let mut best = (xs[bj], bv);
    let mut a = if bj == 0 { x_max * 1e-12 } else { xs[bj - 1] };
    let mut b = if bj + 1 == VP_GRID { x_max } else { xs[bj + 1] };
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > GOLDEN_BRACKET {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    for (x, v) in [(c, fc), (d, fd), (a, f(a)), (b, f(b))] {
        if v > best.1 {
            best = (x, v);
        }
    }
    best
}

impl MeanField<'_> {
    pub fn verify_vp_decompositions(&self, epsilon: f64, opts: &SolverOptions) -> Result<VpReport> {
        let sol = self.solve_microcanonical(epsilon, opts)?;
        let grid = self.k.grid();
        let half_d = 0.5 * grid.dimension() as f64;
        let x_max = (1.0 - self.epsilon_g() / epsilon).min(1.0);

        let cache: RefCell<HashMap<u64, f64>> = RefCell::new(HashMap::new());
        let mut failure: Option<Error> = None;
        let mut aux = |x: f64| -> f64 {
            // (1 − x)ε at the top end is ε_g up to round-off.
            let arg = if x >= x_max { self.epsilon_g() } else { (1.0 - x) * epsilon };
            if let Some(v) = cache.borrow().get(&arg.to_bits()) {
                return *v;
            }
            let v = match self.auxiliary_interaction_entropy(arg) {
                Ok(a) => a.value,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NEG_INFINITY
                }
            };
            cache.borrow_mut().insert(arg.to_bits(), v);
            v
        };
        let (x_interaction, sup_interaction) = grid_golden(|x| half_d * x.ln() + aux(x), x_max);
        let (x_total, sup_total) = grid_golden(|x| perfect_gas_entropy(x * epsilon, grid) + aux(x), x_max);
        if let Some(e) = failure {
            return Err(e);
        }
        let aux_evaluations = cache.borrow().len();
        Ok(VpReport {
            epsilon,
            s: sol.s,
            s_i: sol.s_i,
            x_max,
            x_total,
            x_interaction,
            sup_total,
            sup_interaction,
            gap_total: (sol.s - sup_total).abs(),
            gap_interaction: (sol.s_i - sup_interaction).abs(),
            aux_evaluations,
        })
    }
}

pub fn verify_vp_decompositions(epsilon: f64, k: &KernelMatrix, opts: &SolverOptions) -> Result<VpReport> {
    MeanField::new(k)?.verify_vp_decompositions(epsilon, opts)
}

#[derive(Clone, Debug, Serialize)]
pub struct LegendreReport {
    pub theta: f64,
    pub phi_fixed_point: f64,
    /// Best scan value after a three-point quadratic fit.
    pub phi_scan: f64,
    pub epsilon_scan: f64,
    /// −ε*/θ + s(ε*) at the energy where θ_ε = θ.
    pub phi_legendre: f64,
    pub epsilon_star: f64,
    pub canonical_energy: f64,
    pub gap: f64,
    pub energy_gap: f64,
    pub at_boundary: bool,
    pub advisory: Option<String>,
}

/// Vertex of the parabola through three points, clamped to [x0, x2].
fn parabola_max(p: [(f64, f64); 3]) -> (f64, f64) {
    let [(x0, y0), (x1, y1), (x2, y2)] = p;
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let a = (d12 - d01) / (x2 - x0);
    if !(a < 0.0) {
        return if y0 >= y1 && y0 >= y2 {
            (x0, y0)
        } else if y2 >= y1 {
            (x2, y2)
        } else {
            (x1, y1)
        };
    }
    let b = d01 - a * (x0 + x1);
    let xv = (-b / (2.0 * a)).clamp(x0, x2);
    (xv, y0 + (xv - x0) * (d01 + a * (xv - x1)))
}

impl MeanField<'_> {
    /// φ(θ) from the canonical fixed point against sup_ε (−ε/θ + s(ε)).
    ///
    /// The scan locates the maximizer; it is then refined by solving
    /// θ_ε(ρ_ε) = θ, the stationarity condition ds/dε = 1/θ.
    pub fn legendre_check(&self, theta: f64, scan: &ScanResult, opts: &SolverOptions) -> Result<LegendreReport> {
        let canonical = self.solve_canonical(theta, opts)?;
        let pts: Vec<_> = scan.ok_points().collect();
        if pts.len() < 3 {
            return Err(Error::contract("Legendre check needs at least three solved scan points"));
        }
        let vals: Vec<f64> = pts.iter().map(|p| -p.epsilon / theta + p.s).collect();
        let k = (0..vals.len()).fold(0, |b, i| if vals[i] > vals[b] { i } else { b });
        let at_boundary = k == 0 || k + 1 == pts.len();
        let advisory = at_boundary.then(|| {
            format!(
                "maximizer of −ε/θ + s(ε) sits at the scan edge ε = {}; widen the scan",
                pts[k].epsilon
            )
        });
        let c = k.clamp(1, pts.len() - 2);
        let (epsilon_scan, phi_scan) = parabola_max([
            (pts[c - 1].epsilon, vals[c - 1]),
            (pts[c].epsilon, vals[c]),
            (pts[c + 1].epsilon, vals[c + 1]),
        ]);

        let (mut epsilon_star, mut phi_legendre) = (epsilon_scan, phi_scan);
        if !at_boundary {
            let (mut a, mut b) = (pts[k - 1].epsilon, pts[k + 1].epsilon);
            let (mut fa, mut fb) = (pts[k - 1].theta - theta, pts[k + 1].theta - theta);
            if fa <= 0.0 && fb >= 0.0 {
                let mut best: Option<MeanFieldSolution> = None;
                // Illinois false position on θ_ε − θ.
                let mut side = 0;
                for _ in 0..200 {
                    let m = if fb != fa { b - fb * (b - a) / (fb - fa) } else { 0.5 * (a + b) };
                    let m = if m > a && m < b { m } else { 0.5 * (a + b) };
                    let sol = self.solve_microcanonical(m, opts)?;
                    let fm = sol.theta - theta;
                    let done = fm.abs() <= 1e-13 * theta.max(1.0) || (b - a) <= 1e-14 * b.abs().max(1.0);
                    best = Some(sol);
                    if done {
                        break;
                    }
                    if fm < 0.0 {
                        a = m;
                        fa = fm;
                        if side == -1 {
                            fb *= 0.5;
                        }
                        side = -1;
                    } else {
                        b = m;
                        fb = fm;
                        if side == 1 {
                            fa *= 0.5;
                        }
                        side = 1;
                    }
                }
                if let Some(sol) = best {
                    epsilon_star = sol.epsilon;
                    phi_legendre = -sol.epsilon / theta + sol.s;
                }
            }
        }
        Ok(LegendreReport {
            theta,
            phi_fixed_point: canonical.s,
            phi_scan,
            epsilon_scan,
            phi_legendre,
            epsilon_star,
            canonical_energy: canonical.epsilon,
            gap: (canonical.s - phi_legendre).abs(),
            energy_gap: (canonical.epsilon - epsilon_star).abs(),
            at_boundary,
            advisory,
        })
    }
}

pub fn legendre_check(theta: f64, k: &KernelMatrix, scan: &ScanResult, opts: &SolverOptions) -> Result<LegendreReport> {
    MeanField::new(k)?.legendre_check(theta, scan, opts)
}

#[derive(Clone, Debug, Serialize)]
pub struct Theorem2Report {
    pub s: f64,
    pub h_b: f64,
    /// |s + H_B(σ_θ ρ_ε)|
    pub gap: f64,
}

pub fn theorem2_identity_check(solution: &MeanFieldSolution) -> Result<Theorem2Report> {
    if !matches!(solution.mode, SolveMode::Microcanonical { .. }) {
        return Err(Error::contract("the entropy identity applies to microcanonical solutions"));
    }
    let h_b = h_function(&PhaseDensity::new(solution.rho.clone(), solution.theta)?);
    Ok(Theorem2Report {
        s: solution.s,
        h_b,
        gap: (solution.s + h_b).abs(),
    })
}
