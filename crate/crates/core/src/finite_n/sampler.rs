use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{ground_state, interaction_hamiltonian, particle_energy, resample_momenta, GroundStateOptions, ParticleConfiguration};
use crate::domain::Grid;
use crate::error::{Error, Result};
use crate::potentials::PairPotential;
use crate::stats::autocorrelation_time;

/// Stationary density ∝ (1 − I/E)₊^k restricted to I < cap.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Target {
    pub exponent: f64,
    pub energy: f64,
    pub cap: f64,
}

impl Target {
    /// The configurational marginal at total energy E = εN².
    pub fn microcanonical(n: usize, dimension: usize, epsilon: f64) -> Self {
        let e = epsilon * (n * n) as f64;
        Target {
            exponent: 0.5 * (dimension * n) as f64 - 1.0,
            energy: e,
            cap: e,
        }
    }

    pub fn log_weight(&self, i: f64) -> f64 {
        if !(i < self.cap) {
            return f64::NEG_INFINITY;
        }
        if self.exponent == 0.0 {
            0.0
        } else {
            self.exponent * (1.0 - i / self.energy).ln()
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ChainOptions {
    pub chains: usize,
    /// Sweeps (N single-site proposals each) of adaptive burn-in.
    pub burn_in: usize,
    /// Retained samples per chain.
    pub samples: usize,
    /// Sweeps between retained samples.
    pub thin: usize,
    /// Initial proposal half-width as a fraction of each box side.
    pub initial_step: f64,
    /// Sweeps between full recomputations of the cached I.
    pub audit_every: usize,
    /// Uniform draws tried before falling back to a ground-state search.
    pub probe_draws: usize,
    pub seed: u64,
}

impl Default for ChainOptions {
    fn default() -> Self {
        ChainOptions {
            chains: 4,
            burn_in: 500,
            samples: 500,
            thin: 4,
            initial_step: 0.1,
            audit_every: 50,
            probe_draws: 10_000,
            seed: 0,
        }
    }
}

const ACCEPT_LO: f64 = 0.25;
const ACCEPT_HI: f64 = 0.40;
const ADAPT_WINDOW: usize = 10;
const AUDIT_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct ChainState {
    pub config: ParticleConfiguration,
    pub energy: f64,
    pub step: f64,
    pub accepted: u64,
    pub proposed: u64,
    pub audits: usize,
    /// Audits whose recomputation disagreed with the cache beyond 1e-9 relative.
    pub audit_failures: usize,
    rng: ChaCha8Rng,
    extent: Vec<f64>,
    lows: Vec<f64>,
    highs: Vec<f64>,
}

impl ChainState {
    pub fn new(config: ParticleConfiguration, pot: &PairPotential, domain: &Grid, step: f64, rng: ChaCha8Rng) -> Self {
        let energy = interaction_hamiltonian(&config, pot);
        let b = domain.bounds();
        ChainState {
            config,
            energy,
            step,
            accepted: 0,
            proposed: 0,
            audits: 0,
            audit_failures: 0,
            rng,
            extent: b.iter().map(|[lo, hi]| hi - lo).collect(),
            lows: b.iter().map(|b| b[0]).collect(),
            highs: b.iter().map(|b| b[1]).collect(),
        }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn acceptance(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    /// One proposal per particle, in index order.
    pub fn sweep(&mut self, target: &Target, pot: &PairPotential) {
        let d = self.config.dimension;
        let n = self.config.n();
        let mut trial = vec![0.0; d];
        let mut current_w = target.log_weight(self.energy);
        for i in 0..n {
            self.proposed += 1;
            let mut inside = true;
            for k in 0..d {
                let u: f64 = self.rng.random::<f64>() * 2.0 - 1.0;
                trial[k] = self.config.positions[i * d + k] + self.step * self.extent[k] * u;
                inside &= trial[k] >= self.lows[k] && trial[k] <= self.highs[k];
            }
            // The uniform draw is consumed either way so the stream does not
            // depend on the rejection path.
            let log_u = self.rng.random::<f64>().ln();
            if !inside {
                continue;
            }
            let old = particle_energy(&self.config.positions, d, i, self.config.position(i), pot);
            let new = particle_energy(&self.config.positions, d, i, &trial, pot);
            let e_new = self.energy - old + new;
            let w_new = target.log_weight(e_new);
            if w_new == f64::NEG_INFINITY {
                continue;
            }
            if log_u < w_new - current_w {
                self.config.positions[i * d..(i + 1) * d].copy_from_slice(&trial);
                self.energy = e_new;
                current_w = w_new;
                self.accepted += 1;
            }
        }
    }

    /// Recompute I from scratch and replace the cached value.
    pub fn audit(&mut self, pot: &PairPotential) {
        let fresh = interaction_hamiltonian(&self.config, pot);
        self.audits += 1;
        if (fresh - self.energy).abs() > AUDIT_TOL * fresh.abs().max(1.0) {
            self.audit_failures += 1;
        }
        self.energy = fresh;
    }

    /// Burn-in with step adaptation toward 25–40% acceptance. Counters are
    /// reset afterwards so that `acceptance` describes the frozen chain.
    pub fn burn_in(&mut self, target: &Target, pot: &PairPotential, sweeps: usize, audit_every: usize) {
        let (mut acc0, mut prop0) = (self.accepted, self.proposed);
        for s in 1..=sweeps {
            self.sweep(target, pot);
            if s % ADAPT_WINDOW == 0 {
                let rate = (self.accepted - acc0) as f64 / (self.proposed - prop0).max(1) as f64;
                if rate < ACCEPT_LO {
                    self.step *= 0.8;
                } else if rate > ACCEPT_HI {
                    self.step = (self.step * 1.25).min(1.0);
                }
                acc0 = self.accepted;
                prop0 = self.proposed;
            }
            if audit_every > 0 && s % audit_every == 0 {
                self.audit(pot);
            }
        }
        self.accepted = 0;
        self.proposed = 0;
    }
}

/// A configuration with I < cap: uniform probing first, then one
/// ground-state search.
pub fn feasible_start<R: Rng + ?Sized>(
    n: usize,
    cap: f64,
    pot: &PairPotential,
    domain: &Grid,
    draws: usize,
    rng: &mut R,
) -> Result<ParticleConfiguration> {
    for _ in 0..draws {
        let c = ParticleConfiguration::uniform(n, domain, rng);
        if interaction_hamiltonian(&c, pot) < cap {
            return Ok(c);
        }
    }
    let g = ground_state(
        n,
        pot,
        domain,
        &GroundStateOptions {
            seed: rng.random(),
            ..GroundStateOptions::default()
        },
    )?;
    if g.energy < cap {
        return ParticleConfiguration::new(domain.dimension(), g.positions);
    }
    Err(Error::Infeasible(format!(
        "no configuration of {n} particles with I < {cap} (best found I = {})",
        g.energy
    )))
}

pub(crate) fn check_exponent(n: usize, dimension: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::contract("need at least two particles"));
    }
    // DN/2 − 1 = 0 gives the indicator of {I < E}, which is integrable;
    // only negative exponents are refused.
    if dimension * n < 2 {
        return Err(Error::contract(format!(
            "exponent DN/2 − 1 is negative for N = {n}, D = {dimension}"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct ChainDiagnostics {
    pub chain: usize,
    pub acceptance: f64,
    pub step: f64,
    /// Integrated autocorrelation time of I along retained samples.
    pub autocorrelation_time: f64,
    pub audits: usize,
    pub audit_failures: usize,
    pub warning: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SampleRun {
    pub n: usize,
    pub epsilon: f64,
    /// Retained configurations, chain by chain, with resampled momenta.
    #[serde(skip)]
    pub samples: Vec<ParticleConfiguration>,
    pub chain_of: Vec<usize>,
    pub energies: Vec<f64>,
    pub diagnostics: Vec<ChainDiagnostics>,
}

/// Metropolis sampling of the configurational measure ∝ (1 − I/(εN²))₊^{DN/2−1}
/// on Λ^N, with momenta drawn exactly on the energy shell for every retained
/// sample. Chains run in parallel on independent streams of `opts.seed`.
pub fn sample_configurations(
    n: usize,
    epsilon: f64,
    pot: &PairPotential,
    domain: &Grid,
    opts: &ChainOptions,
) -> Result<SampleRun> {
    check_exponent(n, domain.dimension())?;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::contract(format!("ε must be positive, got {epsilon}")));
    }
    let target = Target::microcanonical(n, domain.dimension(), epsilon);
    let per_chain: Vec<Result<(Vec<ParticleConfiguration>, Vec<f64>, ChainDiagnostics)>> = (0..opts.chains.max(1))
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(c as u64);
            let start = feasible_start(n, target.cap, pot, domain, opts.probe_draws, &mut rng)?;
            let mut chain = ChainState::new(start, pot, domain, opts.initial_step, rng);
            chain.burn_in(&target, pot, opts.burn_in, opts.audit_every);
            let mut samples = Vec::with_capacity(opts.samples);
            let mut energies = Vec::with_capacity(opts.samples);
            let mut sweeps = 0;
            for _ in 0..opts.samples {
                for _ in 0..opts.thin.max(1) {
                    chain.sweep(&target, pot);
                    sweeps += 1;
                    if opts.audit_every > 0 && sweeps % opts.audit_every == 0 {
                        chain.audit(pot);
                    }
                }
                let mut cfg = chain.config.clone();
                cfg.momenta = Some(resample_momenta(&cfg, epsilon, pot, chain.rng())?);
                energies.push(chain.energy);
                samples.push(cfg);
            }
            let acceptance = chain.acceptance();
            let warning = (acceptance == 0.0).then(|| "no proposal accepted after burn-in".to_string());
            let diag = ChainDiagnostics {
                chain: c,
                acceptance,
                step: chain.step,
                autocorrelation_time: autocorrelation_time(&energies),
                audits: chain.audits,
                audit_failures: chain.audit_failures,
                warning,
            };
            Ok((samples, energies, diag))
        })
        .collect();

    let mut run = SampleRun {
        n,
        epsilon,
        samples: Vec::new(),
        chain_of: Vec::new(),
        energies: Vec::new(),
        diagnostics: Vec::new(),
    };
    for (c, r) in per_chain.into_iter().enumerate() {
        let (s, e, d) = r?;
        run.chain_of.extend(std::iter::repeat_n(c, s.len()));
        run.samples.extend(s);
        run.energies.extend(e);
        run.diagnostics.push(d);
    }
    Ok(run)
}
