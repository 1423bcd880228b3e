use anyhow::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use mfentropy::finite_n::{
    default_test_functions, finite_n_entropy, ground_state, jensen_superadditivity_check, lln_test,
    monotonicity_report, sample_configurations, EmpiricalMeasures, GroundStateRecord,
};
use mfentropy::functionals::{canonical_perfect_gas, perfect_gas_entropy_printed, PhaseDensity};
use mfentropy::meanfield::{theorem2_identity_check, MeanField, MeanFieldSolution, ScanResult};
use mfentropy::potentials::{assemble_kernel, check_hypotheses, KernelMatrix};

use crate::config::{JobConfig, Mode};
use crate::output::{Cell, Csv, Writer};

fn kernel(cfg: &JobConfig) -> Result<KernelMatrix> {
    Ok(assemble_kernel(&cfg.potential, &cfg.grid)?)
}

fn axes(d: usize, prefix: &str) -> Vec<String> {
    (0..d).map(|k| format!("{prefix}{k}")).collect()
}

fn density_csv(w: &Writer<'_>, sol: &MeanFieldSolution) -> Csv {
    let g = sol.rho.grid();
    let mut cols = axes(g.dimension(), "q");
    cols.push("rho".into());
    let header: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut csv = Csv::new(&w.cfg.hash, &header);
    for (node, v) in g.nodes().zip(sol.rho.values()) {
        let mut row: Vec<Cell> = node.iter().map(|x| Cell::F(*x)).collect();
        row.push(Cell::F(*v));
        csv.row(&row);
    }
    csv
}

fn solution_scalars(sol: &MeanFieldSolution, eg: f64) -> Value {
    json!({
        "epsilon": sol.epsilon,
        "theta": sol.theta,
        "interaction_energy": sol.interaction_energy,
        "objective": sol.objective,
        "residual": sol.residual,
        "iterations": sol.iterations,
        "branch": sol.branch,
        "epsilon_g": eg,
        "energy_shift": sol.energy_shift,
    })
}

pub fn run(cfg: &JobConfig, w: &mut Writer<'_>) -> Result<()> {
    match cfg.mode {
        Mode::SolveMc => solve_mc(cfg, w),
        Mode::SolveCan => solve_can(cfg, w),
        Mode::Scan => scan(cfg, w),
        Mode::Legendre => legendre(cfg, w),
        Mode::GroundState => ground(cfg, w),
        Mode::Sample => sample(cfg, w),
        Mode::EntropyN => entropy_n(cfg, w),
        Mode::Verify => crate::verify::verify(cfg, w),
    }
}

fn solve_mc(cfg: &JobConfig, w: &mut Writer<'_>) -> Result<()> {
    let eps = cfg.params.epsilon.expect("validated");
    let k = kernel(cfg)?;
    let mf = MeanField::new(&k)?;
    let sol = mf.solve_microcanonical(eps, &cfg.solver)?;
    let t2 = theorem2_identity_check(&sol)?;
    let mut scalars = solution_scalars(&sol, mf.epsilon_g());
    let extra = json!({
        "s_K": sol.s_k,
        "s_K_printed": perfect_gas_entropy_printed(eps, &cfg.grid),
        "s_I": sol.s_i,
        "s": sol.s,
        "h_b": t2.h_b,
        "theorem2_gap": t2.gap,
    });
    merge(&mut scalars, extra);
    let csv = density_csv(w, &sol);
    w.save_csv("density.csv", &csv)?;
    w.save_json(
        "results.json",
        "results",
        &json!({
            "scalars": scalars,
            "branches": sol.branches,
            "hypotheses": check_hypotheses(&cfg.potential, &cfg.grid),
            "files": ["density.csv"],
        }),
    )
}

fn solve_can(cfg: &JobConfig, w: &mut Writer<'_>) -> Result<()> {
    let theta = cfg.params.theta.expect("validated");
    let k = kernel(cfg)?;
    let mf = MeanField::new(&k)?;
    let sol = mf.solve_canonical(theta, &cfg.solver)?;
    let mut scalars = solution_scalars(&sol, mf.epsilon_g());
    merge(
        &mut scalars,
        json!({
            "phi_K": canonical_perfect_gas(theta, &cfg.grid),
            "phi": sol.s,
        }),
    );
    let csv = density_csv(w, &sol);
    w.save_csv("density.csv", &csv)?;
    w.save_json(
        "results.json",
        "results",
        &json!({ "scalars": scalars, "branches": sol.branches, "files": ["density.csv"] }),
    )
}

pub fn scan_csv(w: &Writer<'_>, scan: &ScanResult) -> Csv {
    let mut csv = Csv::new(&w.cfg.hash, &["epsilon", "theta", "s_K", "s_I", "s", "residual", "monotone_ok"]);
    for p in &scan.points {
        let f = |v: f64| Cell::F(if p.is_ok() { v } else { f64::NAN });
        csv.row(&[
            Cell::F(p.epsilon),
            f(p.theta),
            f(p.s_k),
            f(p.s_i),
            f(p.s),
            f(p.residual),
            Cell::B(p.monotone_ok),
        ]);
    }
    csv
}

fn scan_summary(scan: &ScanResult) -> Value {
    let failed: Vec<Value> = scan
        .points
        .iter()
        .filter_map(|p| p.error.as_ref().map(|e| json!({ "epsilon": p.epsilon, "error": e })))
        .collect();
    json!({
        "epsilon_g": scan.epsilon_g,
        "points": scan.points.len(),
        "monotone": scan.monotone,
        "concave": scan.concave,
        "max_warm_cold_gap": scan.max_warm_cold_gap,
        "failed_points": failed,
    })
}

fn run_scan(cfg: &JobConfig, mf: &MeanField<'_>) -> Result<ScanResult> {
    let p = &cfg.params;
    Ok(mf.entropy_scan(
        p.eps_min.expect("validated"),
        p.eps_max.expect("validated"),
        p.steps,
        &cfg.solver,
    )?)
}

fn scan(cfg: &JobConfig, w: &mut Writer<'_>) -> Result<()> {
    let k = kernel(cfg)?;
    let mf = MeanField::new(&k)?;
    let scan = run_scan(cfg, &mf)?;
    let csv = scan_csv(w, &scan);
    w.save_csv("scan.csv", &csv)?;
    w.save_json(
        "results.json",
        "results",
        &json!({ "scalars": scan_summary(&scan), "files": ["scan.csv"] }),
    )
}

pub fn thetas(cfg: &JobConfig) -> Vec<f64> {
    let mut t = cfg.params.thetas.clone();
    if let Some(x) = cfg.params.theta {
        if !t.contains(&x) {
            t.insert(0, x);
        }
    }
    t
}

fn legendre(cfg: &JobConfig, w: &mut Writer<'_>) -> Result<()> {
    let k = kernel(cfg)?;
    let mf = MeanField::new(&k)?;
    let scan = run_scan(cfg, &mf)?;
    let mut csv = Csv::new(
        &cfg.hash,
        &["theta", "phi_fixed_point", "phi_scan", "phi_legendre", "epsilon_star", "gap", "at_boundary"],
    );
    let mut reports = Vec::new();
    let mut advisories = Vec::new();
    for theta in thetas(cfg) {
        let r = mf.legendre_check(theta, &scan, &cfg.solver)?;
        csv.row(&[
            Cell::F(r.theta),
            Cell::F(r.phi_fixed_point),
            Cell::F(r.phi_scan),
            Cell::F(r.phi_legendre),
            Cell::F(r.epsilon_star),
            Cell::F(r.gap),
            Cell::B(r.at_boundary),
        ]);
        if let Some(a) = &r.advisory {
            advisories.push(json!({ "theta": theta, "advisory": a }));
        }
        reports.push(r);
    }
    let scan_table = scan_csv(w, &scan);
    w.save_csv("scan.csv", &scan_table)?;
    w.save_csv("legendre.csv", &csv)?;
    w.save_json(
        "results.json",
        "results",
        &json!({
            "scalars": { "max_gap": reports.iter().map(|r| r.gap).fold(0.0, f64::max) },
            "legendre": reports,
            "scan": scan_summary(&scan),
            "advisories": advisories,
            "files": ["scan.csv", "legendre.csv"],
        }),
    )
}

pub fn ground_records(cfg: &JobConfig, n_max: usize) -> Result<Vec<GroundStateRecord>> {
    (cfg.params.n_min..=n_max)
        .map(|n| Ok(ground_state(n, &cfg.potential, &cfg.grid, &cfg.ground)?))
        .collect()
}

fn ground(cfg: &JobConfig, w: &mut Writer<'_>) -> Result<()> {
    let recs = ground_records(cfg, cfg.params.n_max.expect("validated"))?;
    let k = kernel(cfg)?;
    let eg = MeanField::new(&k)?.epsilon_g();
    let report = monotonicity_report(&recs, eg)?;
    let mut csv = Csv::new(
        &cfg.hash,
        &["n", "energy", "epsilon_g", "epsilon_tilde", "restarts", "dispersion"],
    );
    let d = cfg.grid.dimension();
    let mut cols = vec!["n".to_string(), "particle".to_string()];
    cols.extend(axes(d, "q"));
    let header: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut pos = Csv::new(&cfg.hash, &header);
    for r in &recs {
        csv.row(&[
            Cell::I(r.n as u64),
            Cell::F(r.energy),
            Cell::F(r.epsilon_g),
            Cell::F(r.epsilon_tilde),
            Cell::I(r.restarts as u64),
            Cell::F(r.dispersion()),
        ]);
        for (i, q) in r.positions.chunks(d).enumerate() {
            let mut row = vec![Cell::I(r.n as u64), Cell::I(i as u64)];
            row.extend(q.iter().map(|x| Cell::F(*x)));
            pos.row(&row);
        }
    }
    w.save_csv("ground_state.csv", &csv)?;
    w.save_csv("ground_positions.csv", &pos)?;
    let history: Vec<Value> = recs
        .iter()
        .map(|r| json!({ "n": r.n, "restart_values": r.restart_values, "best_history": r.best_history }))
        .collect();
    w.save_json(
        "results.json",
        "results",
        &json!({
            "scalars": { "epsilon_g_continuum": eg, "all_ok": report.all_ok },
            "monotonicity": report,
            "restarts": history,
            "upper_bound": true,
            "files": ["ground_state.csv", "ground_positions.csv"],
        }),
    )
}

fn sample(cfg: &JobConfig, w: &mut Writer<'_>) -> Result<()> {
    let n = cfg.params.n.expect("validated");
    let eps = cfg.params.epsilon.expect("validated");
    let run = sample_configurations(n, eps, &cfg.potential, &cfg.grid, &cfg.chain)?;
    let d = cfg.grid.dimension();
    let mut cols = vec!["sample".to_string(), "chain".to_string(), "particle".to_string()];
    cols.extend(axes(d, "q"));
    cols.extend(axes(d, "p"));
    let header: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut csv = Csv::new(&cfg.hash, &header);
    let mut hist = EmpiricalMeasures::new(&cfg.grid);
    for (s, (cfg_s, chain)) in run.samples.iter().zip(&run.chain_of).enumerate() {
        hist.add(cfg_s, &cfg.grid)?;
        for i in 0..cfg_s.n() {
            let mut row = vec![Cell::I(s as u64), Cell::I(*chain as u64), Cell::I(i as u64)];
            row.extend(cfg_s.position(i).iter().map(|x| Cell::F(*x)));
            row.extend(cfg_s.momentum(i).unwrap_or(&[]).iter().map(|x| Cell::F(*x)));
            csv.row(&row);
        }
    }
    w.save_csv("samples.csv", &csv)?;

    // Comparison with the mean-field prediction, when one exists.
    let k = kernel(cfg)?;
    let pooled = hist.one_point(&cfg.grid)?;
    let meanfield = match MeanField::new(&k).and_then(|mf| mf.solve_microcanonical(eps, &cfg.solver)) {
        Ok(sol) => {
            let f = PhaseDensity::new(sol.rho.clone(), sol.theta)?;
            let lln = lln_test(&run.samples, &f, &default_test_functions(&cfg.grid))?;
            let w1 = mfentropy::domain::w1_distance(&pooled, &sol.rho)?;
            json!({ "theta": sol.theta, "s_I": sol.s_i, "w1_distance": w1.value, "lln": lln })
        }
        Err(e) => json!({ "error": e.to_string() }),
    };
    w.save_json(
        "diagnostics.json",
        "diagnostics",
        &json!({ "chains": run.diagnostics, "energies_per_chain": run.energies.len() / run.diagnostics.len().max(1) }),
    )?;
    let mean_energy = run.energies.iter().sum::<f64>() / run.energies.len().max(1) as f64;
    w.save_json(
        "results.json",
        "results",
        &json!({
            "scalars": {
                "n": n,
                "epsilon": eps,
                "samples": run.samples.len(),
                "mean_interaction_per_n2": mean_energy / (n * n) as f64,
            },
            "pooled_histogram": pooled.values(),
            "meanfield": meanfield,
            "files": ["samples.csv", "diagnostics.json"],
        }),
    )
}

fn entropy_n(cfg: &JobConfig, w: &mut Writer<'_>) -> Result<()> {
    let n = cfg.params.n.expect("validated");
    let eps = cfg.params.epsilon.expect("validated");
    let est = finite_n_entropy(n, eps, &cfg.potential, &cfg.grid, &cfg.ti)?;
    let mut csv = Csv::new(
        &cfg.hash,
        &["k", "weight", "mean", "stderr", "acceptance", "autocorrelation_time"],
    );
    for p in &est.interaction.ladder {
        csv.row(&[
            Cell::F(p.k),
            Cell::F(p.weight),
            Cell::F(p.mean),
            Cell::F(p.stderr),
            Cell::F(p.acceptance),
            Cell::F(p.autocorrelation_time),
        ]);
    }
    w.save_csv("ladder.csv", &csv)?;
    let k = kernel(cfg)?;
    let continuum = match MeanField::new(&k).and_then(|mf| mf.solve_microcanonical(eps, &cfg.solver)) {
        Ok(sol) => json!({ "s_I": sol.s_i, "s": sol.s }),
        Err(e) => json!({ "error": e.to_string() }),
    };
    w.save_json(
        "diagnostics.json",
        "diagnostics",
        &json!({
            "ladder": est.interaction.ladder,
            "splitting_levels": est.interaction.splitting_levels,
            "log_xi": est.interaction.log_xi,
            "log_xi_stderr": est.interaction.log_xi_stderr,
            "ti_integral": est.interaction.ti_integral,
            "ti_stderr": est.interaction.ti_stderr,
            "options": cfg.ti,
        }),
    )?;
    w.save_json(
        "results.json",
        "results",
        &json!({
            "scalars": {
                "n": n,
                "epsilon": eps,
                "kappa": est.interaction.kappa,
                "s_I_per_particle": est.interaction.per_particle,
                "s_I_error": est.interaction.error,
                "entropy": est.value,
                "entropy_error": est.error,
                "prefactor": est.prefactor,
            },
            "continuum": continuum,
            "files": ["ladder.csv", "diagnostics.json"],
        }),
    )
}

fn merge(into: &mut Value, from: Value) {
    if let (Value::Object(a), Value::Object(b)) = (into, from) {
        a.extend(b);
    }
}

/// Jensen trials for verify, seeded from the job seed.
pub fn jensen(cfg: &JobConfig, n_total: usize) -> Result<Value> {
    let split = cfg.params.jensen_split.unwrap_or(n_total / 2).clamp(1, n_total - 1);
    let eps = cfg.params.epsilon.expect("validated");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let r = jensen_superadditivity_check(
        n_total,
        split,
        eps,
        &cfg.potential,
        &cfg.grid,
        cfg.params.jensen_trials,
        &mut rng,
    )?;
    let pass = r.jensen_violations == 0 && r.amgm_violations == 0 && r.convex_split_error < 1e-12;
    let violations = r.jensen_violations + r.amgm_violations;
    Ok(json!({
        "status": if pass { "pass" } else { "fail" },
        "pass": pass,
        "gap": r.convex_split_error,
        "violations": violations,
        "report": r,
    }))
}
