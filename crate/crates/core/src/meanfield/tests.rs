use std::sync::Arc;

use super::*;
use crate::domain::{build_grid, Grid};
use crate::functionals::{canonical_perfect_gas, energy_of_f, PhaseDensity};
use crate::potentials::{assemble_kernel, PairPotential};

fn line(cells: usize) -> Arc<Grid> {
    Arc::new(build_grid(1, &[[0.0, 1.0]], cells).unwrap())
}

fn coulomb(cells: usize) -> KernelMatrix {
    assemble_kernel(&PairPotential::softened_coulomb(0.1).unwrap(), &line(cells)).unwrap()
}

fn constant(c: f64, grid: &Arc<Grid>) -> KernelMatrix {
    assemble_kernel(&PairPotential::constant(c).unwrap(), grid).unwrap()
}

fn opts() -> SolverOptions {
    SolverOptions::default()
}

#[test]
fn zero_kernel_is_the_perfect_gas() {
    let g = line(16);
    let k = assemble_kernel(&PairPotential::zero(), &g).unwrap();
    let s = solve_microcanonical(2.0, &k, &opts()).unwrap();
    assert!(s.rho.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
    assert!((s.theta - 4.0).abs() < 1e-12);
    assert_eq!(s.s_i, 0.0);
    assert_eq!(s.s, crate::functionals::perfect_gas_entropy(2.0, &g));
}

#[test]
fn constant_kernel_closed_form() {
    let g = line(16);
    let k = constant(1.0, &g);
    let s = solve_microcanonical(2.0, &k, &opts()).unwrap();
    assert!((s.theta - 3.0).abs() < 1e-12);
    assert!((s.s_i - 0.5 * 0.75f64.ln()).abs() < 1e-12);
    assert!(s.residual <= 1e-10);
}

#[test]
fn below_ground_energy_is_infeasible() {
    let k = constant(3.0, &line(8));
    assert!(matches!(solve_microcanonical(1.0, &k, &opts()), Err(Error::Infeasible(_))));
    assert!(matches!(auxiliary_interaction_entropy(1.0, &k), Err(Error::Infeasible(_))));
    assert_eq!(auxiliary_interaction_entropy(1.5, &k).unwrap().value, 0.0);
    assert_eq!(auxiliary_interaction_entropy(4.0, &k).unwrap().value, 0.0);
}

#[test]
fn negative_kernel_is_rejected() {
    let k = constant(-1.0, &line(4));
    assert!(matches!(MeanField::new(&k), Err(Error::Contract(_))));
}

#[test]
fn fixed_point_agrees_with_simplex_maximization() {
    let k = coulomb(16);
    let s = solve_microcanonical(2.0, &k, &opts()).unwrap();
    let m = maximize_interaction_entropy(2.0, &k, &opts()).unwrap();
    assert!((s.s_i - m.value).abs() <= 1e-6, "{} vs {}", s.s_i, m.value);
    assert!(m.residual <= 1e-6, "oracle residual {}", m.residual);
    assert!(s.residual <= 1e-10);
    assert!(s.interaction_energy < 2.0 && s.theta > 0.0);
    // energy recovery
    let b = energy_of_f(&PhaseDensity::new(s.rho.clone(), s.theta).unwrap(), &k).unwrap();
    assert!((b.epsilon - 2.0).abs() <= 1e-8 * 2.0);
    let t2 = theorem2_identity_check(&s).unwrap();
    assert!(t2.gap <= 1e-6, "theorem 2 gap {}", t2.gap);
}

// Dense search over the 3-simplex with step h.
fn brute_force<F: Fn(&[f64]) -> Option<f64>>(f: F, h: f64) -> f64 {
    let steps = (1.0 / h).round() as usize;
    let mut best = f64::NEG_INFINITY;
    for a in 0..=steps {
        for b in 0..=steps - a {
            for c in 0..=steps - a - b {
                let d = steps - a - b - c;
                let x = [a, b, c, d].map(|v| v as f64 / steps as f64);
                if let Some(v) = f(&x) {
                    best = best.max(v);
                }
            }
        }
    }
    best
}

#[test]
fn four_cells_match_brute_force() {
    let g = line(4);
    let k = assemble_kernel(&PairPotential::new(crate::potentials::PotentialKind::BoundedSmooth { amplitude: 2.0, length: 0.3 }).unwrap(), &g).unwrap();
    let eps = 1.0;
    let m = maximize_interaction_entropy(eps, &k, &opts()).unwrap();
    let bf = brute_force(
        |x| crate::functionals::interaction_entropy_masses(x, eps, &k).finite(),
        0.01,
    );
    // The grid search is a lower bound that gets within its resolution.
    assert!(m.value >= bf - 1e-12 && m.value - bf < 5e-3, "{} vs {}", m.value, bf);

    let kc = coulomb(4);
    let eg = MeanField::new(&kc).unwrap().epsilon_g();
    let eps = 0.5 * (eg + kc.quadratic(&[0.25; 4]));
    let a = auxiliary_interaction_entropy(eps, &kc).unwrap();
    let bf = brute_force(
        |x| (kc.quadratic(x) <= eps).then(|| crate::functionals::relative_entropy_masses(x, &kc.grid())),
        0.01,
    );
    assert!(a.value >= bf - 1e-12 && a.value - bf < 5e-3, "{} vs {}", a.value, bf);
}

#[test]
fn canonical_closed_forms() {
    let g3 = Arc::new(build_grid(3, &[[0.0, 1.0]; 3], 2).unwrap());
    let k = assemble_kernel(&PairPotential::zero(), &g3).unwrap();
    let s = solve_canonical(1.0 / (2.0 * std::f64::consts::PI), &k, &opts()).unwrap();
    assert!((s.s - 1.0).abs() < 1e-12);

    let g = line(16);
    let k = constant(1.0, &g);
    let s = solve_canonical(0.7, &k, &opts()).unwrap();
    assert!((s.s - (canonical_perfect_gas(0.7, &g) - 1.0 / 1.4)).abs() < 1e-12);

    let s = solve_canonical(1.0, &coulomb(16), &opts()).unwrap();
    assert!(s.residual <= 1e-10);
}

#[test]
fn scans() {
    let g = line(16);
    let k = constant(1.0, &g);
    let r = entropy_scan(1.0, 4.0, 16, &k, &opts()).unwrap();
    assert!(r.monotone);
    for p in &r.points {
        let want = crate::functionals::perfect_gas_entropy(p.epsilon, &g) + 0.5 * (1.0 - 0.5 / p.epsilon).ln();
        assert!((p.s - want).abs() < 1e-10);
    }
    let k = coulomb(16);
    let r = entropy_scan(1.0, 4.0, 16, &k, &opts()).unwrap();
    // ε_g ≈ 1.61 here, so the bottom of the range is infeasible.
    for p in &r.points {
        assert_eq!(p.is_ok(), p.epsilon > r.epsilon_g, "{p:?}");
    }
    assert!(r.failed_points > 0);
    assert!(r.monotone && r.concave);
    assert!(r.max_warm_cold_gap <= 1e-8, "gap {}", r.max_warm_cold_gap);
}

#[test]
fn vp_decompositions() {
    let g = line(8);
    let k = assemble_kernel(&PairPotential::zero(), &g).unwrap();
    let r = verify_vp_decompositions(2.0, &k, &opts()).unwrap();
    assert_eq!(r.gap_total, 0.0);
    assert_eq!(r.gap_interaction, 0.0);
    assert_eq!(r.x_interaction, 1.0);

    let k = constant(1.0, &g);
    let r = verify_vp_decompositions(2.0, &k, &opts()).unwrap();
    assert!((r.x_interaction - 0.75).abs() < 1e-6);
    assert!(r.gap_total <= 1e-6 && r.gap_interaction <= 1e-6);

    let r = verify_vp_decompositions(2.0, &coulomb(16), &opts()).unwrap();
    assert!(r.gap_total <= 1e-4 && r.gap_interaction <= 1e-4, "{r:?}");
}

#[test]
fn legendre_duality() {
    let g = line(8);
    let k = assemble_kernel(&PairPotential::zero(), &g).unwrap();
    let scan = entropy_scan(0.1, 2.0, 32, &k, &opts()).unwrap();
    let r = legendre_check(1.0, &k, &scan, &opts()).unwrap();
    assert!((r.epsilon_star - 0.5).abs() < 1e-10 && r.gap < 1e-10, "{r:?}");

    let k = constant(1.0, &g);
    let scan = entropy_scan(0.6, 3.0, 32, &k, &opts()).unwrap();
    let r = legendre_check(1.0, &k, &scan, &opts()).unwrap();
    assert!((r.epsilon_star - 1.0).abs() < 1e-8 && r.gap <= 1e-8, "{r:?}");

    let k = coulomb(16);
    let scan = entropy_scan(1.0, 4.0, 64, &k, &opts()).unwrap();
    let r = legendre_check(1.0, &k, &scan, &opts()).unwrap();
    assert!(!r.at_boundary);
    assert!(r.gap <= 1e-4 && r.energy_gap <= 1e-4, "{r:?}");
}

#[test]
fn theorem2_closed_forms() {
    let g = line(8);
    for k in [assemble_kernel(&PairPotential::zero(), &g).unwrap(), constant(1.0, &g)] {
        let s = solve_microcanonical(2.0, &k, &opts()).unwrap();
        assert!(theorem2_identity_check(&s).unwrap().gap <= 1e-10);
    }
}
