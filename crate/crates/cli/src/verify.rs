use anyhow::Result;
use serde_json::{json, Value};

use mfentropy::finite_n::{monotonicity_report, MONOTONICITY_TOL};
use mfentropy::functionals::canonical_perfect_gas;
use mfentropy::meanfield::{theorem2_identity_check, MeanField};
use mfentropy::potentials::{assemble_kernel, PotentialKind};
use mfentropy::Error;

use crate::config::JobConfig;
use crate::jobs;
use crate::output::Writer;

pub const CLOSED_FORM_TOL: f64 = 1e-8;
pub const THEOREM2_TOL: f64 = 1e-6;
pub const VP_TOL: f64 = 1e-4;
pub const LEGENDRE_TOL: f64 = 1e-4;

/// Outcome of one cross-check. Checks that cannot run on this kernel are
/// recorded as skipped rather than failed.
fn section(pass: bool, gap: f64, tol: f64, report: Value) -> Value {
    json!({ "status": if pass { "pass" } else { "fail" }, "pass": pass, "gap": gap, "tolerance": tol, "report": report })
}

fn skipped(reason: impl Into<String>) -> Value {
    json!({ "status": "skipped", "pass": true, "reason": reason.into() })
}

fn failed(err: &Error) -> Value {
    json!({ "status": "error", "pass": false, "error": err.to_string() })
}

fn constant_of(kind: &PotentialKind) -> Option<f64> {
    match kind {
        PotentialKind::Zero => Some(0.0),
        PotentialKind::Constant { c } => Some(*c),
        _ => None,
    }
}

pub fn verify(cfg: &JobConfig, w: &mut Writer<'_>) -> Result<()> {
    let eps = cfg.params.epsilon.expect("validated");
    let d = cfg.grid.dimension() as f64;
    let k = assemble_kernel(&cfg.potential, &cfg.grid)?;
    let mf = MeanField::new(&k)?;
    let eg = mf.epsilon_g();
    let closed = constant_of(cfg.potential.kind()).filter(|_| k.shift() == 0.0);
    let tol = |t: f64| if closed.is_some() { CLOSED_FORM_TOL } else { t };

    // The solve at ε anchors everything else; its failure is the job's failure.
    let sol = mf.solve_microcanonical(eps, &cfg.solver)?;
    let mut checks = serde_json::Map::new();

    let t2 = theorem2_identity_check(&sol)?;
    let t = tol(THEOREM2_TOL);
    checks.insert("theorem2".into(), section(t2.gap <= t, t2.gap, t, json!(t2)));

    checks.insert(
        "vp".into(),
        match mf.verify_vp_decompositions(eps, &cfg.solver) {
            Ok(r) => {
                let gap = r.gap_total.max(r.gap_interaction);
                let t = tol(VP_TOL);
                section(gap <= t, gap, t, json!(r))
            }
            Err(e) => failed(&e),
        },
    );

    let mut thetas = jobs::thetas(cfg);
    if thetas.is_empty() {
        thetas = vec![0.5, 1.0, 2.0];
    }
    let theta_max = thetas.iter().cloned().fold(0.0, f64::max);
    let lo = cfg.params.eps_min.unwrap_or(eg + 0.01);
    let hi = cfg.params.eps_max.unwrap_or(eg + 6.0_f64.max(d * theta_max));
    checks.insert(
        "legendre".into(),
        match mf.entropy_scan(lo, hi, cfg.params.steps, &cfg.solver) {
            Ok(scan) => {
                let mut reports = Vec::new();
                let mut worst: f64 = 0.0;
                let mut pass = true;
                for &theta in &thetas {
                    match mf.legendre_check(theta, &scan, &cfg.solver) {
                        Ok(r) => {
                            worst = worst.max(r.gap);
                            pass &= !r.at_boundary;
                            reports.push(json!(r));
                        }
                        Err(e) => {
                            pass = false;
                            reports.push(json!({ "theta": theta, "error": e.to_string() }));
                        }
                    }
                }
                let t = tol(LEGENDRE_TOL);
                section(pass && worst <= t, worst, t, json!({ "range": [lo, hi], "thetas": reports }))
            }
            Err(e) => failed(&e),
        },
    );

    checks.insert(
        "closed_form".into(),
        match closed {
            Some(c) => {
                let rho = sol.rho.values().iter().map(|v| (v - 1.0 / cfg.grid.total_volume()).abs()).fold(0.0, f64::max);
                let theta = (sol.theta - 2.0 * (eps - c / 2.0) / d).abs();
                let s_i = (sol.s_i - 0.5 * d * (1.0 - c / (2.0 * eps)).ln()).abs();
                let mut worst = rho.max(theta).max(s_i);
                let mut phi = Vec::new();
                for &th in &thetas {
                    match mf.solve_canonical(th, &cfg.solver) {
                        Ok(s) => {
                            let gap = (s.s - (canonical_perfect_gas(th, &cfg.grid) - c / (2.0 * th))).abs();
                            worst = worst.max(gap);
                            phi.push(json!({ "theta": th, "gap": gap }));
                        }
                        Err(e) => {
                            worst = f64::INFINITY;
                            phi.push(json!({ "theta": th, "error": e.to_string() }));
                        }
                    }
                }
                let report = json!({ "c": c, "rho_gap": rho, "theta_gap": theta, "s_I_gap": s_i, "phi": phi });
                section(worst <= CLOSED_FORM_TOL, worst, CLOSED_FORM_TOL, report)
            }
            None => skipped("no closed form for this kernel"),
        },
    );

    let n_max = cfg.params.n_max.unwrap_or(6);
    checks.insert(
        "monotonicity".into(),
        match jobs::ground_records(cfg, n_max).and_then(|r| Ok(monotonicity_report(&r, eg)?)) {
            Ok(r) => {
                let worst = r
                    .pairs
                    .iter()
                    .map(|p| (p.epsilon_g - p.epsilon_g_next).max(p.quasi_bound - p.epsilon_tilde_next).max(0.0))
                    .fold(0.0, f64::max);
                section(r.all_ok, worst, MONOTONICITY_TOL, json!(r))
            }
            Err(e) => json!({ "status": "error", "pass": false, "error": e.to_string() }),
        },
    );

    let n_total = cfg.params.n.unwrap_or(8).max(2);
    checks.insert(
        "jensen".into(),
        match jobs::jensen(cfg, n_total) {
            Ok(v) => v,
            Err(e) => json!({ "status": "error", "pass": false, "error": e.to_string() }),
        },
    );

    let all_pass = checks.values().all(|c| c["pass"].as_bool() == Some(true));
    w.save_json(
        "verify.json",
        "verify",
        &json!({ "all_pass": all_pass, "epsilon": eps, "epsilon_g": eg, "checks": checks }),
    )?;
    w.save_json(
        "results.json",
        "results",
        &json!({
            "scalars": { "all_pass": all_pass, "epsilon": eps, "theta": sol.theta, "s_I": sol.s_i, "s": sol.s },
            "files": ["verify.json"],
        }),
    )?;
    if !all_pass {
        return Err(ChecksFailed.into());
    }
    Ok(())
}

/// Every check ran but at least one missed its tolerance.
#[derive(Debug)]
pub struct ChecksFailed;

impl std::fmt::Display for ChecksFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("one or more checks failed; see verify.json")
    }
}

impl std::error::Error for ChecksFailed {}
