use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{interaction_hamiltonian, ParticleConfiguration};
use crate::domain::Grid;
use crate::error::{Error, Result};
use crate::potentials::PairPotential;

#[derive(Clone, Debug, Serialize)]
pub struct GroundStateOptions {
    pub restarts: usize,
    /// Ceiling for the automatic doubling of `restarts`.
    pub max_restarts: usize,
    pub max_iters: usize,
    /// Stop when a projected step moves no coordinate by more than this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for GroundStateOptions {
    fn default() -> Self {
        GroundStateOptions {
            restarts: 32,
            max_restarts: 256,
            max_iters: 20_000,
            tol: 1e-12,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GroundStateRecord {
    pub n: usize,
    pub positions: Vec<f64>,
    /// I at `positions`.
    pub energy: f64,
    /// I / (N(N−1)).
    pub epsilon_g: f64,
    /// I / N².
    pub epsilon_tilde: f64,
    pub restarts: usize,
    /// Local minimum reached by each restart.
    pub restart_values: Vec<f64>,
    /// Best value after each restart.
    pub best_history: Vec<f64>,
    /// A local search only ever gives an upper bound on the minimum.
    pub upper_bound: bool,
}

impl GroundStateRecord {
    /// Spread of the restart minima above the best one.
    pub fn dispersion(&self) -> f64 {
        self.restart_values.iter().fold(0.0, |m: f64, v| m.max(v - self.energy))
    }
}

struct Box_ {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Box_ {
    fn project(&self, x: &mut [f64]) {
        let d = self.lo.len();
        for (k, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lo[k % d], self.hi[k % d]);
        }
    }
}

fn energy(x: &[f64], dim: usize, pot: &PairPotential) -> f64 {
    let mut e = 0.0;
    let pts: Vec<&[f64]> = x.chunks(dim).collect();
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            e += pot.pair(pts[i], pts[j]);
        }
    }
    e
}

fn gradient(x: &[f64], dim: usize, pot: &PairPotential, g: &mut [f64]) {
    g.iter_mut().for_each(|v| *v = 0.0);
    let n = x.len() / dim;
    let mut buf = vec![0.0; dim];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            pot.grad_first(&x[i * dim..(i + 1) * dim], &x[j * dim..(j + 1) * dim], &mut buf);
            for k in 0..dim {
                g[i * dim + k] += buf[k];
            }
        }
    }
}

// Projected gradient with Barzilai–Borwein steps and Armijo backtracking.
fn descend(x: &mut Vec<f64>, dim: usize, pot: &PairPotential, bx: &Box_, opts: &GroundStateOptions, scale: f64) {
    let m = x.len();
    let mut g = vec![0.0; m];
    gradient(x, dim, pot, &mut g);
    let mut fx = energy(x, dim, pot);
    let mut alpha = 0.01 * scale;
    let mut y = vec![0.0; m];
    let mut gy = vec![0.0; m];
    for _ in 0..opts.max_iters {
        let mut accepted = false;
        let mut t = alpha;
        for _ in 0..60 {
            for k in 0..m {
                y[k] = x[k] - t * g[k];
            }
            bx.project(&mut y);
            let decrease: f64 = (0..m).map(|k| g[k] * (x[k] - y[k])).sum();
            let fy = energy(&y, dim, pot);
            if fy <= fx - 1e-4 * decrease {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return;
        }
        let moved = (0..m).map(|k| (y[k] - x[k]).abs()).fold(0.0, f64::max);
        gradient(&y, dim, pot, &mut gy);
        let (mut ss, mut sy) = (0.0, 0.0);
        for k in 0..m {
            let s = y[k] - x[k];
            ss += s * s;
            sy += s * (gy[k] - g[k]);
        }
        alpha = if sy > 0.0 { (ss / sy).clamp(1e-12 * scale, 1e3 * scale) } else { 2.0 * t };
        std::mem::swap(x, &mut y);
        std::mem::swap(&mut g, &mut gy);
        fx = energy(x, dim, pot);
        if moved <= opts.tol * scale {
            return;
        }
    }
}

// Coordinate pattern search for kernels without a gradient.
fn pattern_search(x: &mut [f64], dim: usize, pot: &PairPotential, bx: &Box_, opts: &GroundStateOptions, scale: f64) {
    let mut h = 0.1 * scale;
    let mut fx = energy(x, dim, pot);
    let mut iters = 0;
    while h > opts.tol * scale && iters < opts.max_iters {
        iters += 1;
        let mut improved = false;
        for k in 0..x.len() {
            for sgn in [1.0, -1.0] {
                let old = x[k];
                x[k] = old + sgn * h;
                bx.project(x);
                let f = energy(x, dim, pot);
                if f < fx {
                    fx = f;
                    improved = true;
                    break;
                }
                x[k] = old;
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
}

/// Multistart local minimization of I^(N) over the closed box Λ̄^N.
///
/// Restarts double (up to `max_restarts`) whenever the best value moved
/// during the last quarter of them.
pub fn ground_state(n: usize, pot: &PairPotential, domain: &Grid, opts: &GroundStateOptions) -> Result<GroundStateRecord> {
    if n < 2 {
        return Err(Error::contract(format!("ground state needs N >= 2, got {n}")));
    }
    let dim = domain.dimension();
    let bx = Box_ {
        lo: domain.bounds().iter().map(|b| b[0]).collect(),
        hi: domain.bounds().iter().map(|b| b[1]).collect(),
    };
    let scale = domain.diameter();
    let mut planned = opts.restarts.max(1);
    let mut values = Vec::new();
    let mut history = Vec::new();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut last_improvement = 0;
    let mut r = 0;
    while r < planned {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(r as u64);
        let mut x = ParticleConfiguration::uniform(n, domain, &mut rng).positions;
        if pot.is_differentiable() {
            descend(&mut x, dim, pot, &bx, opts, scale);
        } else {
            pattern_search(&mut x, dim, pot, &bx, opts, scale);
        }
        let v = energy(&x, dim, pot);
        values.push(v);
        let better = best
            .as_ref()
            .is_none_or(|(b, _)| v < b - 1e-12 * b.abs().max(1.0));
        if better {
            best = Some((v, x));
            last_improvement = r;
        }
        history.push(best.as_ref().expect("set above").0);
        r += 1;
        if r == planned && last_improvement * 4 >= planned * 3 && planned < opts.max_restarts {
            planned = (planned * 2).min(opts.max_restarts);
        }
    }
    let (_, positions) = best.expect("at least one restart");
    let cfg = ParticleConfiguration::new(dim, positions)?;
    let energy = interaction_hamiltonian(&cfg, pot);
    let nf = n as f64;
    Ok(GroundStateRecord {
        n,
        positions: cfg.positions,
        energy,
        epsilon_g: energy / (nf * (nf - 1.0)),
        epsilon_tilde: energy / (nf * nf),
        restarts: r,
        restart_values: values,
        best_history: history,
        upper_bound: true,
    })
}

/// Slack granted to every inequality of the report.
pub const MONOTONICITY_TOL: f64 = 1e-8;

#[derive(Clone, Debug, Serialize)]
pub struct PairCheck {
    pub n: usize,
    pub epsilon_g: f64,
    pub epsilon_g_next: f64,
    /// ε_g(N+1) ≥ ε_g(N)
    pub pair_ok: bool,
    pub epsilon_tilde: f64,
    pub epsilon_tilde_next: f64,
    /// N²/((N+1)(N−1)) · ε̃_g(N)
    pub quasi_bound: f64,
    pub quasi_ok: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct MonotonicityReport {
    pub pairs: Vec<PairCheck>,
    pub epsilon_g_continuum: f64,
    /// ε_g(N) ≤ ε_g(continuum) for every record.
    pub below_continuum: bool,
    /// ε̃_g(N) ≤ ε_g(N) for every record with ε_g(N) ≥ 0.
    pub quasi_below_pair: bool,
    pub all_ok: bool,
    /// Records for which a violation points at an unfinished optimization.
    pub suspect: Vec<usize>,
}

pub fn monotonicity_report(records: &[GroundStateRecord], epsilon_g_continuum: f64) -> Result<MonotonicityReport> {
    for w in records.windows(2) {
        if w[1].n != w[0].n + 1 {
            return Err(Error::contract("monotonicity report needs records for consecutive N"));
        }
    }
    let tol = |v: f64| MONOTONICITY_TOL * v.abs().max(1.0);
    let mut suspect = Vec::new();
    let pairs: Vec<PairCheck> = records
        .windows(2)
        .map(|w| {
            let (a, b) = (&w[0], &w[1]);
            let nf = a.n as f64;
            let quasi_bound = nf * nf / ((nf + 1.0) * (nf - 1.0)) * a.epsilon_tilde;
            let pair_ok = b.epsilon_g >= a.epsilon_g - tol(a.epsilon_g);
            let quasi_ok = b.epsilon_tilde >= quasi_bound - tol(quasi_bound);
            if !(pair_ok && quasi_ok) {
                suspect.push(b.n);
            }
            PairCheck {
                n: a.n,
                epsilon_g: a.epsilon_g,
                epsilon_g_next: b.epsilon_g,
                pair_ok,
                epsilon_tilde: a.epsilon_tilde,
                epsilon_tilde_next: b.epsilon_tilde,
                quasi_bound,
                quasi_ok,
            }
        })
        .collect();
    let below_continuum = records
        .iter()
        .all(|r| r.epsilon_g <= epsilon_g_continuum + tol(epsilon_g_continuum));
    let quasi_below_pair = records
        .iter()
        .filter(|r| r.epsilon_g >= 0.0)
        .all(|r| r.epsilon_tilde <= r.epsilon_g + tol(r.epsilon_g));
    let all_ok = below_continuum && quasi_below_pair && pairs.iter().all(|p| p.pair_ok && p.quasi_ok);
    Ok(MonotonicityReport {
        pairs,
        epsilon_g_continuum,
        below_continuum,
        quasi_below_pair,
        all_ok,
        suspect,
    })
}
