//! Acceptance criteria 1–9. Each prints one PASS/FAIL line with the measured
//! quantities; the test fails if any criterion fails.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mfentropy::domain::{build_grid, w1_distance, DensityField, Grid};
use mfentropy::finite_n::{
    default_test_functions, estimate_interaction_entropy, ground_state, interaction_hamiltonian,
    jensen_superadditivity_check, lln_test, monotonicity_report, sample_configurations, ChainOptions, EmpiricalMeasures,
    GroundStateOptions, ParticleConfiguration, SampleRun, TiOptions,
};
use mfentropy::functionals::{
    canonical_perfect_gas, interaction_entropy_density, perfect_gas_entropy, relative_entropy, PhaseDensity,
};
use mfentropy::meanfield::{
    entropy_scan, legendre_check, maximize_interaction_entropy, solve_canonical, solve_microcanonical,
    theorem2_identity_check, verify_vp_decompositions, MeanField, SolverOptions,
};
use mfentropy::potentials::{assemble_kernel, KernelMatrix, PairPotential, PotentialKind};
use mfentropy::stats::ks_normal;

struct Outcome {
    pass: bool,
    detail: String,
}

fn line(cells: usize) -> Arc<Grid> {
    Arc::new(build_grid(1, &[[0.0, 1.0]], cells).unwrap())
}

fn coulomb() -> PairPotential {
    PairPotential::softened_coulomb(0.1).unwrap()
}

fn kernel(pot: &PairPotential, g: &Arc<Grid>) -> KernelMatrix {
    assemble_kernel(pot, g).unwrap()
}

fn opts() -> SolverOptions {
    SolverOptions::default()
}

fn run(id: usize, budget: Duration, f: fn() -> Outcome) -> bool {
    let t = Instant::now();
    let out = std::panic::catch_unwind(f).unwrap_or_else(|e| Outcome {
        pass: false,
        detail: format!(
            "panicked: {}",
            e.downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default()
        ),
    });
    let took = t.elapsed();
    let pass = out.pass && took < budget;
    println!(
        "{} criterion {id}: {} [{:.1}s of {}s]",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        took.as_secs_f64(),
        budget.as_secs()
    );
    pass
}

fn perfect_gas() -> Outcome {
    let g = line(16);
    let k = kernel(&PairPotential::zero(), &g);
    let mut worst: f64 = 0.0;
    for eps in [0.5, 2.0, 7.0] {
        let s = solve_microcanonical(eps, &k, &opts()).unwrap();
        let rho = s.rho.values().iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
        worst = worst
            .max(rho)
            .max((s.theta - 2.0 * eps).abs())
            .max(s.s_i.abs())
            .max((s.s - perfect_gas_entropy(eps, &g)).abs());
    }
    Outcome {
        pass: worst <= 1e-10,
        detail: format!("perfect gas, max gap {worst:.3e} (tol 1e-10)"),
    }
}

fn constant_kernel() -> Outcome {
    let g = line(16);
    let c = 1.0;
    let k = kernel(&PairPotential::constant(c).unwrap(), &g);
    let mut worst: f64 = 0.0;
    for eps in [1.0, 2.0, 5.0] {
        let s = solve_microcanonical(eps, &k, &opts()).unwrap();
        let rho = s.rho.values().iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
        worst = worst
            .max(rho)
            .max((s.theta - 2.0 * (eps - c / 2.0)).abs())
            .max((s.s_i - 0.5 * (1.0 - c / (2.0 * eps)).ln()).abs());
    }
    let scan = entropy_scan(0.55, 4.0, 64, &k, &opts()).unwrap();
    for theta in [0.5, 1.0, 2.0] {
        let s = solve_canonical(theta, &k, &opts()).unwrap();
        worst = worst.max((s.s - (canonical_perfect_gas(theta, &g) - c / (2.0 * theta))).abs());
        let r = legendre_check(theta, &k, &scan, &opts()).unwrap();
        worst = worst.max((r.epsilon_star - (0.5 * theta + c / 2.0)).abs()).max(r.gap);
    }
    Outcome {
        pass: worst <= 1e-8,
        detail: format!("constant kernel, max gap {worst:.3e} (tol 1e-8)"),
    }
}

fn oracle_equivalence() -> Outcome {
    let k = kernel(&coulomb(), &line(16));
    let s = solve_microcanonical(2.0, &k, &opts()).unwrap();
    let m = maximize_interaction_entropy(2.0, &k, &opts()).unwrap();
    let gap = (s.s_i - m.value).abs();
    let t2 = theorem2_identity_check(&s).unwrap().gap;
    Outcome {
        pass: gap <= 1e-6 && t2 <= 1e-6,
        detail: format!("|s_I(fp) − s_I(oracle)| = {gap:.3e}, |s + H_B| = {t2:.3e} (tol 1e-6)"),
    }
}

fn variational() -> Outcome {
    let g = line(16);
    let r = verify_vp_decompositions(2.0, &kernel(&coulomb(), &g), &opts()).unwrap();
    let coul = r.gap_total.max(r.gap_interaction);
    let mut closed: f64 = 0.0;
    for pot in [PairPotential::zero(), PairPotential::constant(1.0).unwrap()] {
        let r = verify_vp_decompositions(2.0, &kernel(&pot, &g), &opts()).unwrap();
        closed = closed.max(r.gap_total).max(r.gap_interaction);
    }
    Outcome {
        pass: coul <= 1e-4 && closed <= 1e-6,
        detail: format!("softened Coulomb gap {coul:.3e} (tol 1e-4), closed forms {closed:.3e} (tol 1e-6)"),
    }
}

fn legendre() -> Outcome {
    let k = kernel(&coulomb(), &line(16));
    let eg = MeanField::new(&k).unwrap().epsilon_g();
    let scan = entropy_scan(eg + 0.01, 6.0, 64, &k, &opts()).unwrap();
    let mut parts = Vec::new();
    let mut worst: f64 = 0.0;
    let mut interior = true;
    for theta in [0.5, 1.0, 2.0] {
        let r = legendre_check(theta, &k, &scan, &opts()).unwrap();
        interior &= !r.at_boundary;
        worst = worst.max(r.gap);
        parts.push(format!("θ={theta}: {:.3e}", r.gap));
    }
    Outcome {
        pass: worst <= 1e-4 && interior,
        detail: format!("Legendre gaps {} (tol 1e-4)", parts.join(", ")),
    }
}

// Best value of I over a tensor grid of particle positions in [0, 1].
fn brute_force(n: usize, points: usize, pot: &PairPotential) -> f64 {
    let xs: Vec<f64> = (0..points).map(|i| i as f64 / (points - 1) as f64).collect();
    let mut idx = vec![0usize; n];
    let mut best = f64::INFINITY;
    loop {
        // Particles are interchangeable: only nondecreasing index tuples.
        if idx.windows(2).all(|w| w[0] <= w[1]) {
            let cfg = ParticleConfiguration::new(1, idx.iter().map(|&i| xs[i]).collect()).unwrap();
            best = best.min(interaction_hamiltonian(&cfg, pot));
        }
        let mut k = 0;
        loop {
            if k == n {
                return best / (n * (n - 1)) as f64;
            }
            idx[k] += 1;
            if idx[k] < points {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

fn monotonicity() -> Outcome {
    let gopts = GroundStateOptions::default();
    let mut lines = Vec::new();
    let mut pass = true;

    let g1 = line(64);
    let pot = coulomb();
    let recs: Vec<_> = (2..=8).map(|n| ground_state(n, &pot, &g1, &gopts).unwrap()).collect();
    let eg = MeanField::new(&kernel(&pot, &g1)).unwrap().epsilon_g();
    let rep = monotonicity_report(&recs, eg).unwrap();
    let chain_ok = rep.pairs.iter().all(|p| p.pair_ok && p.quasi_ok);
    let top = recs.last().unwrap().epsilon_g <= eg + 1e-6;
    let bf2 = brute_force(2, 1001, &pot);
    let bf3 = brute_force(3, 201, &pot);
    let a2 = (recs[0].epsilon_g - bf2).abs();
    let a3 = (recs[1].epsilon_g - bf3).abs();
    pass &= chain_ok && top && a2 <= 1e-4 && a3 <= 1e-4;
    lines.push(format!(
        "1D Coulomb ε_g(2..8) = [{}], ε_g(8) {:.6} ≤ ε_g {:.6}, anchors {:.6}/{:.6} vs brute force {:.6}/{:.6}",
        recs.iter().map(|r| format!("{:.6}", r.epsilon_g)).collect::<Vec<_>>().join(", "),
        recs.last().unwrap().epsilon_g,
        eg,
        recs[0].epsilon_g,
        recs[1].epsilon_g,
        bf2,
        bf3
    ));

    let radius = 0.1;
    let g3 = Arc::new(build_grid(3, &[[0.0, 1.0]; 3], 4).unwrap());
    // Shifted so that U ≥ 0 everywhere; the profile peaks at 1.2/r.
    let newton = PairPotential::new(PotentialKind::MollifiedNewton { radius })
        .unwrap()
        .with_shift(1.2 / radius);
    let recs: Vec<_> = (2..=8).map(|n| ground_state(n, &newton, &g3, &gopts).unwrap()).collect();
    let eg = MeanField::new(&kernel(&newton, &g3)).unwrap().epsilon_g();
    let rep = monotonicity_report(&recs, eg).unwrap();
    let chain_ok = rep.pairs.iter().all(|p| p.pair_ok && p.quasi_ok);
    let top = recs.last().unwrap().epsilon_g <= eg + 1e-6;
    pass &= chain_ok && top;
    lines.push(format!(
        "3D mollified Newton ε_g(2..8) max {:.3e}, ε_g continuum {:.6}, chain {}",
        recs.iter().map(|r| r.epsilon_g).fold(0.0, f64::max),
        eg,
        if chain_ok { "ok" } else { "violated" }
    ));
    Outcome {
        pass,
        detail: lines.join("; "),
    }
}

// ln P(U(q1, q2) < E) for two uniform points by a midpoint tensor rule.
fn two_body_oracle(m: usize, e: f64, pot: &PairPotential) -> f64 {
    let h = 1.0 / m as f64;
    let mut inside = 0usize;
    for a in 0..m {
        for b in 0..m {
            if pot.pair(&[(a as f64 + 0.5) * h], &[(b as f64 + 0.5) * h]) < e {
                inside += 1;
            }
        }
    }
    (inside as f64 * h * h).ln()
}

fn finite_n_convergence() -> Outcome {
    let pot = coulomb();
    let eps = 2.0;
    let fine = line(256);
    let s_i = solve_microcanonical(eps, &kernel(&pot, &fine), &opts()).unwrap().s_i;
    let domain = line(16);
    let ti = TiOptions {
        seed: 17,
        ..TiOptions::default()
    };

    let two = estimate_interaction_entropy(2, eps, &pot, &domain, &ti).unwrap();
    let fine_q = two_body_oracle(200, 4.0 * eps, &pot) / 2.0;
    let coarse_q = two_body_oracle(100, 4.0 * eps, &pot) / 2.0;
    let quad_err = (fine_q - coarse_q).abs();
    let two_tol = 2.0 * (two.error.powi(2) + quad_err.powi(2)).sqrt();
    let two_ok = (two.per_particle - fine_q).abs() <= two_tol;

    let mut dist = Vec::new();
    let mut errs = Vec::new();
    let mut parts = Vec::new();
    for n in [8, 16, 32, 64] {
        let e = estimate_interaction_entropy(n, eps, &pot, &domain, &ti).unwrap();
        dist.push((e.per_particle - s_i).abs());
        errs.push(e.error);
        parts.push(format!("N={n}: {:.4}±{:.4}", e.per_particle, e.error));
    }
    // Decreasing within two error bars between neighbours.
    let decreasing = dist
        .windows(2)
        .zip(errs.windows(2))
        .all(|(d, e)| d[1] <= d[0] + 2.0 * (e[0].powi(2) + e[1].powi(2)).sqrt());
    let last = dist[3] <= 0.05 + 2.0 * errs[3];
    Outcome {
        pass: two_ok && decreasing && last,
        detail: format!(
            "s_I(2) = {s_i:.4}; {}; |Δ| = [{}]; N=2 {:.5}±{:.5} vs quadrature {:.5} (±{:.1e})",
            parts.join(", "),
            dist.iter().map(|d| format!("{d:.4}")).collect::<Vec<_>>().join(", "),
            two.per_particle,
            two.error,
            fine_q,
            quad_err
        ),
    }
}

fn sample(n: usize, eps: f64, pot: &PairPotential, domain: &Grid) -> SampleRun {
    let opts = ChainOptions {
        seed: 23,
        ..ChainOptions::default()
    };
    sample_configurations(n, eps, pot, domain, &opts).unwrap()
}

fn histogram(run: &SampleRun, g: &Arc<Grid>) -> DensityField {
    let mut m = EmpiricalMeasures::new(g);
    for s in &run.samples {
        m.add(s, g).unwrap();
    }
    m.one_point(g).unwrap()
}

fn marginals() -> Outcome {
    let pot = coulomb();
    let eps = 2.0;
    let g = line(16);
    let sol = solve_microcanonical(eps, &kernel(&pot, &g), &opts()).unwrap();
    let f = PhaseDensity::new(sol.rho.clone(), sol.theta).unwrap();
    let small = sample(16, eps, &pot, &g);
    let big = sample(64, eps, &pot, &g);

    let w_small = w1_distance(&histogram(&small, &g), &sol.rho).unwrap().value;
    let w_big = w1_distance(&histogram(&big, &g), &sol.rho).unwrap().value;
    let a = w_big < w_small;

    let p0: Vec<f64> = big.samples.iter().map(|s| s.momentum(0).unwrap()[0]).collect();
    let ks = ks_normal(&p0, 0.0, sol.theta);
    let b = ks.p_value > 0.01;

    let funcs = default_test_functions(&g);
    let ls = lln_test(&small.samples, &f, &funcs).unwrap();
    let lb = lln_test(&big.samples, &f, &funcs).unwrap();
    let mut ratios = Vec::new();
    let mut c = true;
    for (x, y) in ls.functions.iter().zip(&lb.functions) {
        if x.spread == 0.0 && y.spread == 0.0 {
            continue;
        }
        let r = y.spread / x.spread;
        // 1/√4 = 0.5 expected.
        c &= (1.0 / 3.0..=0.75).contains(&r);
        ratios.push(format!("{}: {r:.2}", x.label));
    }
    Outcome {
        pass: a && b && c,
        detail: format!(
            "(a) W1 N=64 {w_big:.4} < N=16 {w_small:.4}: {a}; (b) KS p = {:.3} against θ = {:.4}: {b}; (c) spread ratios [{}]: {c}",
            ks.p_value,
            sol.theta,
            ratios.join(", ")
        ),
    }
}

fn random_masses<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    // Exponential weights, with a random subset zeroed now and then.
    let mut x: Vec<f64> = (0..n)
        .map(|_| {
            if rng.random::<f64>() < 0.1 {
                0.0
            } else {
                -rng.random::<f64>().max(1e-300).ln()
            }
        })
        .collect();
    if x.iter().all(|v| *v == 0.0) {
        x[0] = 1.0;
    }
    let t: f64 = x.iter().sum();
    x.iter_mut().for_each(|v| *v /= t);
    x
}

fn inequalities() -> Outcome {
    let g = line(16);
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let mut jensen = 0;
    let mut amgm = 0;
    for pot in [
        coulomb(),
        PairPotential::constant(1.0).unwrap(),
        PairPotential::new(PotentialKind::BoundedSmooth {
            amplitude: 2.0,
            length: 0.3,
        })
        .unwrap(),
    ] {
        let n_total = rng.random_range(4..40);
        let n_split = rng.random_range(1..n_total);
        let r = jensen_superadditivity_check(n_total, n_split, 3.0, &pot, &g, 1000, &mut rng).unwrap();
        assert!(r.jensen_applicable);
        jensen += r.jensen_violations;
        amgm += r.amgm_violations;
    }
    let k = kernel(&coulomb(), &g);
    let mut rel = 0;
    let mut sie = 0;
    for _ in 0..1000 {
        let x = random_masses(16, &mut rng);
        let rho = DensityField::from_masses(g.clone(), &x).unwrap();
        if relative_entropy(&rho) > 1e-14 {
            rel += 1;
        }
        let eps = 0.1 + 5.0 * rng.random::<f64>();
        if let Some(v) = interaction_entropy_density(&rho, eps, &k).unwrap().finite() {
            if v > 1e-14 {
                sie += 1;
            }
        }
    }
    Outcome {
        pass: jensen + amgm + rel + sie == 0,
        detail: format!(
            "violations: Jensen {jensen}/3000, AM–GM {amgm}/3000, R ≤ 0 {rel}/1000, S_I/ε ≤ 0 {sie}/1000"
        ),
    }
}

#[test]
fn acceptance() {
    let results = [
        run(1, Duration::from_secs(1), perfect_gas),
        run(2, Duration::from_secs(1), constant_kernel),
        run(3, Duration::from_secs(10), oracle_equivalence),
        run(4, Duration::from_secs(60), variational),
        run(5, Duration::from_secs(120), legendre),
        run(6, Duration::from_secs(300), monotonicity),
        run(7, Duration::from_secs(1800), finite_n_convergence),
        run(8, Duration::from_secs(900), marginals),
        run(9, Duration::from_secs(60), inequalities),
    ];
    let failed: Vec<usize> = results
        .iter()
        .enumerate()
        .filter(|(_, ok)| !**ok)
        .map(|(i, _)| i + 1)
        .collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
