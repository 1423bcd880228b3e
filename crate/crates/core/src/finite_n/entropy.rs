use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use super::sampler::check_exponent;
use super::{feasible_start, interaction_hamiltonian, ChainOptions, ChainState, ParticleConfiguration, Target};
use crate::domain::Grid;
use crate::error::{Error, Result};
use crate::potentials::PairPotential;
use crate::stats::{autocorrelation_time, batch_means};

#[derive(Clone, Debug, Serialize)]
pub struct TiOptions {
    /// Number of ladder intervals; even, since Simpson pairs them up.
    pub ladder_intervals: usize,
    /// Intervals given to the geometric stretch near k = 0.
    pub geometric_intervals: usize,
    /// Per ladder point: `burn_in` adaptive sweeps, then `samples` sweeps,
    /// each recorded. `chains` and `thin` are not used here.
    pub chain: ChainOptions,
    pub batches: usize,
    pub splitting_particles: usize,
    /// Fraction kept at each splitting level.
    pub splitting_fraction: f64,
    /// Metropolis sweeps applied to every clone after a split.
    pub splitting_sweeps: usize,
    pub max_levels: usize,
    pub seed: u64,
}

impl Default for TiOptions {
    fn default() -> Self {
        TiOptions {
            ladder_intervals: 32,
            geometric_intervals: 12,
            chain: ChainOptions {
                burn_in: 500,
                samples: 4000,
                ..ChainOptions::default()
            },
            batches: 20,
            splitting_particles: 2000,
            splitting_fraction: 0.1,
            splitting_sweeps: 10,
            max_levels: 200,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LadderPoint {
    pub k: f64,
    /// ⟨ln(1 − I/E)⟩_k
    pub mean: f64,
    pub stderr: f64,
    pub weight: f64,
    pub acceptance: f64,
    pub autocorrelation_time: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct InteractionEntropyEstimate {
    pub n: usize,
    pub epsilon: f64,
    /// DN/2 − 1.
    pub kappa: f64,
    /// ln λ^⊗N{I < E}.
    pub log_xi: f64,
    pub log_xi_stderr: f64,
    pub splitting_levels: Vec<f64>,
    pub ti_integral: f64,
    pub ti_stderr: f64,
    pub ladder: Vec<LadderPoint>,
    /// S_{I^(N)}(N²ε).
    pub total: f64,
    /// total / N, comparable to the continuum s_I(ε).
    pub per_particle: f64,
    pub error: f64,
}

/// Ladder nodes on [0, κ]: geometric up to κ/10, linear above.
pub(crate) fn ladder(kappa: f64, intervals: usize, geometric: usize) -> Vec<f64> {
    if kappa == 0.0 {
        return vec![0.0];
    }
    let geometric = geometric.min(intervals - 2).max(2);
    let linear = intervals - geometric;
    let k_sw = 0.1 * kappa;
    let r = 1e3f64.powf(1.0 / (geometric - 1) as f64);
    let mut nodes = vec![0.0];
    for j in 1..=geometric {
        nodes.push(k_sw * r.powi(j as i32 - geometric as i32));
    }
    *nodes.last_mut().expect("nonempty") = k_sw;
    for j in 1..=linear {
        nodes.push(k_sw + (kappa - k_sw) * j as f64 / linear as f64);
    }
    *nodes.last_mut().expect("nonempty") = kappa;
    nodes
}

/// Composite Simpson weights on nonuniform nodes (even number of intervals).
pub(crate) fn simpson_weights(x: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; x.len()];
    for p in (0..x.len() - 1).step_by(2) {
        let h0 = x[p + 1] - x[p];
        let h1 = x[p + 2] - x[p + 1];
        let c = (h0 + h1) / 6.0;
        w[p] += c * (2.0 - h1 / h0);
        w[p + 1] += c * (h0 + h1) * (h0 + h1) / (h0 * h1);
        w[p + 2] += c * (2.0 - h0 / h1);
    }
    w
}

struct Splitting {
    log_p: f64,
    var: f64,
    levels: Vec<f64>,
}

// ln of the uniform probability of {I < E} by adaptive multilevel splitting.
fn splitting(n: usize, e: f64, pot: &PairPotential, domain: &Grid, opts: &TiOptions) -> Result<Splitting> {
    let m = opts.splitting_particles.max(10);
    let keep = ((opts.splitting_fraction * m as f64).ceil() as usize).clamp(1, m - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(u64::MAX);
    let mut pop: Vec<(ParticleConfiguration, f64)> = (0..m)
        .map(|_| {
            let c = ParticleConfiguration::uniform(n, domain, &mut rng);
            let i = interaction_hamiltonian(&c, pot);
            (c, i)
        })
        .collect();
    let mut out = Splitting {
        log_p: 0.0,
        var: 0.0,
        levels: Vec::new(),
    };
    for level in 0..opts.max_levels {
        let below = pop.iter().filter(|(_, i)| *i < e).count();
        if below >= keep {
            let p = below as f64 / m as f64;
            out.log_p += p.ln();
            out.var += (1.0 - p) / (m as f64 * p);
            return Ok(out);
        }
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| pop[a].1.total_cmp(&pop[b].1).then(a.cmp(&b)));
        let cap = pop[order[keep]].1;
        let survivors: Vec<usize> = order.iter().copied().filter(|&j| pop[j].1 < cap).collect();
        if survivors.is_empty() {
            return Err(Error::Partial {
                message: format!("splitting stalled at level {level}: no configuration below {cap}"),
                completed: level,
                total: opts.max_levels,
            });
        }
        let p = survivors.len() as f64 / m as f64;
        out.log_p += p.ln();
        out.var += (1.0 - p) / (m as f64 * p);
        out.levels.push(cap);
        let target = Target {
            exponent: 0.0,
            energy: e,
            cap,
        };
        let parents: Vec<ParticleConfiguration> = survivors.iter().map(|&j| pop[j].0.clone()).collect();
        pop = (0..m)
            .into_par_iter()
            .map(|j| {
                let mut r = ChaCha8Rng::seed_from_u64(opts.seed ^ ((level as u64 + 1) << 32));
                r.set_stream(j as u64);
                let mut chain = ChainState::new(parents[j % parents.len()].clone(), pot, domain, opts.chain.initial_step, r);
                for _ in 0..opts.splitting_sweeps {
                    chain.sweep(&target, pot);
                }
                let i = interaction_hamiltonian(&chain.config, pot);
                (chain.config, i)
            })
            .collect();
    }
    Err(Error::Partial {
        message: format!("splitting did not reach I < {e} within {} levels", opts.max_levels),
        completed: opts.max_levels,
        total: opts.max_levels,
    })
}

/// (1/N) S_{I^(N)}(N²ε) with S_I(E) = ln ∫ (1 − I/E)₊^{DN/2−1} dλ^⊗N, λ the
/// uniform probability on Λ.
///
/// S_I(κ) = S_I(0) + ∫₀^κ ⟨ln(1 − I/E)⟩_k dk: the integral by Simpson over
/// Metropolis chains on the k-ladder, S_I(0) by multilevel splitting.
pub fn estimate_interaction_entropy(
    n: usize,
    epsilon: f64,
    pot: &PairPotential,
    domain: &Grid,
    opts: &TiOptions,
) -> Result<InteractionEntropyEstimate> {
    check_exponent(n, domain.dimension())?;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::contract(format!("ε must be positive, got {epsilon}")));
    }
    if opts.ladder_intervals < 4 || opts.ladder_intervals % 2 == 1 {
        return Err(Error::config("ladder_intervals must be even and at least 4"));
    }
    let micro = Target::microcanonical(n, domain.dimension(), epsilon);
    let (e, kappa) = (micro.energy, micro.exponent);
    let split = splitting(n, e, pot, domain, opts)?;

    let nodes = ladder(kappa, opts.ladder_intervals, opts.geometric_intervals);
    let weights = if nodes.len() > 1 { simpson_weights(&nodes) } else { vec![0.0] };
    let points: Vec<Result<LadderPoint>> = if kappa == 0.0 {
        Vec::new()
    } else {
        nodes
            .par_iter()
            .enumerate()
            .map(|(idx, &k)| {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
                rng.set_stream(idx as u64);
                let start = feasible_start(n, e, pot, domain, opts.chain.probe_draws, &mut rng)?;
                let target = Target {
                    exponent: k,
                    energy: e,
                    cap: e,
                };
                let mut chain = ChainState::new(start, pot, domain, opts.chain.initial_step, rng);
                chain.burn_in(&target, pot, opts.chain.burn_in, opts.chain.audit_every);
                let mut trace = Vec::with_capacity(opts.chain.samples);
                for s in 1..=opts.chain.samples {
                    chain.sweep(&target, pot);
                    if opts.chain.audit_every > 0 && s % opts.chain.audit_every == 0 {
                        chain.audit(pot);
                    }
                    trace.push((1.0 - chain.energy / e).ln());
                }
                let (mean, stderr) = batch_means(&trace, opts.batches);
                Ok(LadderPoint {
                    k,
                    mean,
                    stderr: if stderr.is_finite() { stderr } else { 0.0 },
                    weight: weights[idx],
                    acceptance: chain.acceptance(),
                    autocorrelation_time: autocorrelation_time(&trace),
                })
            })
            .collect()
    };
    let total_points = points.len();
    let mut ladder_pts = Vec::with_capacity(total_points);
    for r in points {
        match r {
            Ok(p) => ladder_pts.push(p),
            Err(err) => {
                return Err(Error::Partial {
                    message: format!("ladder chain failed: {err}"),
                    completed: ladder_pts.len(),
                    total: total_points,
                })
            }
        }
    }
    let ti_integral: f64 = ladder_pts.iter().map(|p| p.weight * p.mean).sum();
    let ti_var: f64 = ladder_pts.iter().map(|p| (p.weight * p.stderr).powi(2)).sum();
    let total = split.log_p + ti_integral;
    let nf = n as f64;
    Ok(InteractionEntropyEstimate {
        n,
        epsilon,
        kappa,
        log_xi: split.log_p,
        log_xi_stderr: split.var.sqrt(),
        splitting_levels: split.levels,
        ti_integral,
        ti_stderr: ti_var.sqrt(),
        ladder: ladder_pts,
        total,
        per_particle: total / nf,
        error: (split.var + ti_var).sqrt() / nf,
    })
}

/// (1/N)(ln(Ω′/N!) + N ln N) minus the interaction part: the closed-form
/// momentum and Stirling terms of the p-integrated structure function.
///
/// Ω′(E) = |Λ|^N π^{DN/2}/Γ(DN/2) (2/N)^{DN/2} E^{DN/2−1} e^{S_I(E)}.
pub fn structure_prefactor(n: usize, epsilon: f64, volume: f64, dimension: usize) -> f64 {
    let nf = n as f64;
    let half = 0.5 * (dimension * n) as f64;
    let e = epsilon * nf * nf;
    let s = -ln_gamma(nf + 1.0) + nf * volume.ln() + half * (2.0 * std::f64::consts::PI / nf).ln() - ln_gamma(half)
        + (half - 1.0) * e.ln()
        + nf * nf.ln();
    s / nf
}

#[derive(Clone, Debug, Serialize)]
pub struct FiniteNEntropy {
    pub n: usize,
    pub epsilon: f64,
    /// (1/N)(S_{H^(N)}(N²ε) + N ln N), comparable to s(ε).
    pub value: f64,
    pub error: f64,
    pub prefactor: f64,
    pub interaction: InteractionEntropyEstimate,
}

pub fn finite_n_entropy(
    n: usize,
    epsilon: f64,
    pot: &PairPotential,
    domain: &Grid,
    opts: &TiOptions,
) -> Result<FiniteNEntropy> {
    let interaction = estimate_interaction_entropy(n, epsilon, pot, domain, opts)?;
    let prefactor = structure_prefactor(n, epsilon, domain.total_volume(), domain.dimension());
    Ok(FiniteNEntropy {
        n,
        epsilon,
        value: prefactor + interaction.per_particle,
        error: interaction.error,
        prefactor,
        interaction,
    })
}
