//! Job configuration: a TOML file with flat sections.
//!
//! Every error points at a line of the file. Syntax and type errors come
//! straight from the TOML parser's span; semantic errors are anchored to the
//! offending key, or to its section header when the key is missing.

use std::fmt;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use sha2::{Digest, Sha256};
use toml::Spanned;

use mfentropy::domain::{build_grid, Grid};
use mfentropy::finite_n::{ChainOptions, GroundStateOptions, TiOptions};
use mfentropy::meanfield::SolverOptions;
use mfentropy::potentials::{parse_kernel_csv, shift_nonnegative, DiagonalRule, PairPotential, PotentialKind};

/// A configuration error with a 1-based line number.
#[derive(Debug)]
pub struct ConfigError {
    pub path: PathBuf,
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.path.display(), self.line, self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    SolveMc,
    SolveCan,
    Scan,
    Legendre,
    GroundState,
    Sample,
    EntropyN,
    Verify,
}

impl Mode {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "solve-mc" => Mode::SolveMc,
            "solve-can" => Mode::SolveCan,
            "scan" => Mode::Scan,
            "legendre" => Mode::Legendre,
            "ground-state" => Mode::GroundState,
            "sample" => Mode::Sample,
            "entropy-n" => Mode::EntropyN,
            "verify" => Mode::Verify,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::SolveMc => "solve-mc",
            Mode::SolveCan => "solve-can",
            Mode::Scan => "scan",
            Mode::Legendre => "legendre",
            Mode::GroundState => "ground-state",
            Mode::Sample => "sample",
            Mode::EntropyN => "entropy-n",
            Mode::Verify => "verify",
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    mode: Spanned<String>,
    seed: Option<u64>,
    out: Option<String>,
    domain: Spanned<RawDomain>,
    potential: Spanned<RawPotential>,
    params: Option<Spanned<RawParams>>,
    solver: Option<RawSolver>,
    chain: Option<RawChain>,
    ti: Option<RawTi>,
    ground: Option<RawGround>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDomain {
    dimension: Spanned<usize>,
    bounds: Spanned<Vec<[f64; 2]>>,
    cells: Spanned<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPotential {
    kind: Spanned<String>,
    c: Option<Spanned<f64>>,
    amplitude: Option<Spanned<f64>>,
    length: Option<Spanned<f64>>,
    delta: Option<Spanned<f64>>,
    radius: Option<Spanned<f64>>,
    /// U(q, q) for the amended Coulomb kernel.
    coincident: Option<Spanned<f64>>,
    /// CSV of i,j,value for the tabulated kind, relative to the config file.
    table: Option<Spanned<String>>,
    diagonal: Option<Spanned<String>>,
    /// "auto" (default), "none", or a number added to U.
    shift: Option<Spanned<toml::Value>>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    epsilon: Option<Spanned<f64>>,
    theta: Option<Spanned<f64>>,
    thetas: Option<Spanned<Vec<f64>>>,
    n: Option<Spanned<usize>>,
    n_min: Option<Spanned<usize>>,
    n_max: Option<Spanned<usize>>,
    eps_min: Option<Spanned<f64>>,
    eps_max: Option<Spanned<f64>>,
    steps: Option<Spanned<usize>>,
    jensen_split: Option<Spanned<usize>>,
    jensen_trials: Option<Spanned<usize>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    damping: Option<f64>,
    max_halvings: Option<usize>,
    max_iters: Option<usize>,
    residual_tol: Option<f64>,
    objective_tol: Option<f64>,
    multistarts: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChain {
    chains: Option<usize>,
    burn_in: Option<usize>,
    samples: Option<usize>,
    thin: Option<usize>,
    initial_step: Option<f64>,
    audit_every: Option<usize>,
    probe_draws: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTi {
    ladder_intervals: Option<usize>,
    geometric_intervals: Option<usize>,
    burn_in: Option<usize>,
    sweeps: Option<usize>,
    batches: Option<usize>,
    splitting_particles: Option<usize>,
    splitting_fraction: Option<f64>,
    splitting_sweeps: Option<usize>,
    max_levels: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGround {
    restarts: Option<usize>,
    max_restarts: Option<usize>,
    max_iters: Option<usize>,
    tol: Option<f64>,
}

/// Mode parameters after validation; absent ones stay `None`.
#[derive(Clone, Debug, Default)]
pub struct Params {
    pub epsilon: Option<f64>,
    pub theta: Option<f64>,
    pub thetas: Vec<f64>,
    pub n: Option<usize>,
    pub n_min: usize,
    pub n_max: Option<usize>,
    pub eps_min: Option<f64>,
    pub eps_max: Option<f64>,
    pub steps: usize,
    pub jensen_split: Option<usize>,
    pub jensen_trials: usize,
}

pub struct JobConfig {
    pub path: PathBuf,
    pub text: String,
    pub hash: String,
    pub mode: Mode,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub grid: Arc<Grid>,
    pub potential: PairPotential,
    pub params: Params,
    pub solver: SolverOptions,
    pub chain: ChainOptions,
    pub ti: TiOptions,
    pub ground: GroundStateOptions,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

struct Ctx<'a> {
    path: &'a Path,
    text: &'a str,
}

impl Ctx<'_> {
    fn at(&self, span: Range<usize>, message: impl Into<String>) -> ConfigError {
        ConfigError {
            path: self.path.to_path_buf(),
            line: line_of(self.text, span.start),
            message: message.into(),
        }
    }

    // Line of a `[section]` header, or 1 when the section is absent.
    fn section(&self, name: &str, message: impl Into<String>) -> ConfigError {
        let header = format!("[{name}]");
        let line = self
            .text
            .lines()
            .position(|l| l.trim() == header)
            .map_or(1, |i| i + 1);
        ConfigError {
            path: self.path.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    fn positive(&self, v: &Option<Spanned<f64>>, name: &str) -> Result<Option<f64>, ConfigError> {
        match v {
            Some(s) if !(*s.get_ref() > 0.0 && s.get_ref().is_finite()) => {
                Err(self.at(s.span(), format!("{name} must be a positive finite number, got {}", s.get_ref())))
            }
            Some(s) => Ok(Some(*s.get_ref())),
            None => Ok(None),
        }
    }
}

pub fn load(path: &Path) -> Result<JobConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        path: path.to_path_buf(),
        line: 1,
        message: format!("cannot read config: {e}"),
    })?;
    parse(path, text)
}

pub fn parse(path: &Path, text: String) -> Result<JobConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(&text).map_err(|e| ConfigError {
        path: path.to_path_buf(),
        line: e.span().map_or(1, |s| line_of(&text, s.start)),
        message: e.message().trim().to_string(),
    })?;
    let cx = Ctx { path, text: &text };

    let mode = Mode::parse(raw.mode.get_ref()).ok_or_else(|| {
        cx.at(
            raw.mode.span(),
            format!(
                "unknown mode '{}'; expected one of solve-mc, solve-can, scan, legendre, ground-state, sample, entropy-n, verify",
                raw.mode.get_ref()
            ),
        )
    })?;

    let d = raw.domain.get_ref();
    let dim = *d.dimension.get_ref();
    if !(1..=3).contains(&dim) {
        return Err(cx.at(d.dimension.span(), format!("dimension must be 1, 2 or 3, got {dim}")));
    }
    if d.bounds.get_ref().len() != dim {
        return Err(cx.at(
            d.bounds.span(),
            format!("bounds needs one [lo, hi] pair per axis: {} given for dimension {dim}", d.bounds.get_ref().len()),
        ));
    }
    let grid = build_grid(dim, d.bounds.get_ref(), *d.cells.get_ref())
        .map_err(|e| cx.at(d.bounds.span().start..d.cells.span().end, e.to_string()))?
        .into_shared();

    let potential = build_potential(&cx, raw.potential.get_ref(), raw.potential.span(), &grid)?;

    let p = raw.params.as_ref().map(|p| p.get_ref());
    let empty = RawParams::default();
    let p = p.unwrap_or(&empty);
    let mut params = Params {
        epsilon: cx.positive(&p.epsilon, "epsilon")?,
        theta: cx.positive(&p.theta, "theta")?,
        thetas: Vec::new(),
        n: p.n.as_ref().map(|v| *v.get_ref()),
        n_min: p.n_min.as_ref().map_or(2, |v| *v.get_ref()),
        n_max: p.n_max.as_ref().map(|v| *v.get_ref()),
        eps_min: cx.positive(&p.eps_min, "eps_min")?,
        eps_max: cx.positive(&p.eps_max, "eps_max")?,
        steps: p.steps.as_ref().map_or(64, |v| *v.get_ref()),
        jensen_split: p.jensen_split.as_ref().map(|v| *v.get_ref()),
        jensen_trials: p.jensen_trials.as_ref().map_or(1000, |v| *v.get_ref()),
    };
    if let Some(t) = &p.thetas {
        if t.get_ref().is_empty() || t.get_ref().iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(cx.at(t.span(), "thetas must be a nonempty list of positive numbers"));
        }
        params.thetas = t.get_ref().clone();
    }
    if let Some(n) = &p.n {
        if *n.get_ref() < 2 {
            return Err(cx.at(n.span(), format!("n must be at least 2, got {}", n.get_ref())));
        }
    }
    if let Some(s) = &p.steps {
        if *s.get_ref() < 2 {
            return Err(cx.at(s.span(), "steps must be at least 2"));
        }
    }
    if let (Some(lo), Some(hi)) = (params.eps_min, params.eps_max) {
        if lo >= hi {
            return Err(cx.at(p.eps_max.as_ref().expect("set").span(), "eps_max must exceed eps_min"));
        }
    }
    if let Some(nm) = &p.n_min {
        if *nm.get_ref() < 2 {
            return Err(cx.at(nm.span(), "n_min must be at least 2"));
        }
    }
    if let (Some(hi), Some(s)) = (params.n_max, &p.n_max) {
        if hi < params.n_min + 1 {
            return Err(cx.at(s.span(), format!("n_max must exceed n_min = {}", params.n_min)));
        }
    }
    require_params(&cx, mode, &params, dim)?;

    let seed = raw.seed.unwrap_or(0);
    let mut solver = SolverOptions::default();
    if let Some(s) = &raw.solver {
        set(&mut solver.damping, s.damping);
        set(&mut solver.max_halvings, s.max_halvings);
        set(&mut solver.max_iters, s.max_iters);
        set(&mut solver.residual_tol, s.residual_tol);
        set(&mut solver.objective_tol, s.objective_tol);
        set(&mut solver.multistarts, s.multistarts);
        if !(solver.damping > 0.0 && solver.damping <= 1.0) {
            return Err(cx.section("solver", "damping must lie in (0, 1]"));
        }
        if solver.multistarts == 0 {
            return Err(cx.section("solver", "multistarts must be at least 1"));
        }
    }
    let mut chain = ChainOptions::default();
    if let Some(c) = &raw.chain {
        set(&mut chain.chains, c.chains);
        set(&mut chain.burn_in, c.burn_in);
        set(&mut chain.samples, c.samples);
        set(&mut chain.thin, c.thin);
        set(&mut chain.initial_step, c.initial_step);
        set(&mut chain.audit_every, c.audit_every);
        set(&mut chain.probe_draws, c.probe_draws);
        if chain.chains == 0 || chain.samples == 0 || chain.thin == 0 {
            return Err(cx.section("chain", "chains, samples and thin must be at least 1"));
        }
        if !(chain.initial_step > 0.0 && chain.initial_step <= 1.0) {
            return Err(cx.section("chain", "initial_step must lie in (0, 1]"));
        }
    }
    let mut ti = TiOptions::default();
    if let Some(t) = &raw.ti {
        set(&mut ti.ladder_intervals, t.ladder_intervals);
        set(&mut ti.geometric_intervals, t.geometric_intervals);
        set(&mut ti.chain.burn_in, t.burn_in);
        set(&mut ti.chain.samples, t.sweeps);
        set(&mut ti.batches, t.batches);
        set(&mut ti.splitting_particles, t.splitting_particles);
        set(&mut ti.splitting_fraction, t.splitting_fraction);
        set(&mut ti.splitting_sweeps, t.splitting_sweeps);
        set(&mut ti.max_levels, t.max_levels);
        if ti.ladder_intervals < 4 || ti.ladder_intervals % 2 == 1 {
            return Err(cx.section("ti", "ladder_intervals must be even and at least 4"));
        }
        if !(ti.splitting_fraction > 0.0 && ti.splitting_fraction < 1.0) {
            return Err(cx.section("ti", "splitting_fraction must lie in (0, 1)"));
        }
        if ti.chain.samples < ti.batches.max(2) {
            return Err(cx.section("ti", "sweeps must be at least the number of batches"));
        }
    }
    let mut ground = GroundStateOptions::default();
    if let Some(g) = &raw.ground {
        set(&mut ground.restarts, g.restarts);
        set(&mut ground.max_restarts, g.max_restarts);
        set(&mut ground.max_iters, g.max_iters);
        set(&mut ground.tol, g.tol);
        if ground.restarts == 0 {
            return Err(cx.section("ground", "restarts must be at least 1"));
        }
    }

    let hash = hex::encode(Sha256::digest(text.as_bytes()));
    let out = raw.out.map(|o| resolve(path, &o));
    let mut cfg = JobConfig {
        path: path.to_path_buf(),
        text: String::new(),
        hash,
        mode,
        seed,
        out,
        grid,
        potential,
        params,
        solver,
        chain,
        ti,
        ground,
    };
    cfg.set_seed(seed);
    cfg.text = text;
    Ok(cfg)
}

impl JobConfig {
    /// Seed every stochastic component from one master seed.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.solver.seed = seed;
        self.chain.seed = seed;
        self.ti.seed = seed;
        self.ground.seed = seed;
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn resolve(config: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        config.parent().unwrap_or(Path::new(".")).join(p)
    }
}

fn require_params(cx: &Ctx<'_>, mode: Mode, p: &Params, dim: usize) -> Result<(), ConfigError> {
    let need = |ok: bool, what: &str| -> Result<(), ConfigError> {
        if ok {
            Ok(())
        } else {
            Err(cx.section("params", format!("mode {} needs {what} in [params]", mode.name())))
        }
    };
    match mode {
        Mode::SolveMc => need(p.epsilon.is_some(), "epsilon"),
        Mode::SolveCan => need(p.theta.is_some(), "theta"),
        Mode::Scan => need(p.eps_min.is_some() && p.eps_max.is_some(), "eps_min and eps_max"),
        Mode::Legendre => {
            need(p.eps_min.is_some() && p.eps_max.is_some(), "eps_min and eps_max")?;
            need(p.theta.is_some() || !p.thetas.is_empty(), "theta or thetas")
        }
        Mode::GroundState => need(p.n_max.is_some(), "n_max"),
        Mode::Sample | Mode::EntropyN => {
            need(p.epsilon.is_some() && p.n.is_some(), "epsilon and n")?;
            if dim * p.n.unwrap_or(0) < 2 {
                return Err(cx.section("params", "n is too small: DN/2 − 1 would be negative"));
            }
            Ok(())
        }
        Mode::Verify => need(p.epsilon.is_some(), "epsilon"),
    }
}

fn build_potential(
    cx: &Ctx<'_>,
    p: &RawPotential,
    section: Range<usize>,
    grid: &Arc<Grid>,
) -> Result<PairPotential, ConfigError> {
    let need = |v: &Option<Spanned<f64>>, name: &str| -> Result<f64, ConfigError> {
        v.as_ref()
            .map(|s| *s.get_ref())
            .ok_or_else(|| cx.section("potential", format!("potential kind '{}' needs {name}", p.kind.get_ref())))
    };
    let kind = match p.kind.get_ref().as_str() {
        "zero" => PotentialKind::Zero,
        "constant" => PotentialKind::Constant { c: need(&p.c, "c")? },
        "bounded-smooth" => PotentialKind::BoundedSmooth {
            amplitude: need(&p.amplitude, "amplitude")?,
            length: need(&p.length, "length")?,
        },
        "softened-coulomb" => PotentialKind::SoftenedCoulomb {
            delta: need(&p.delta, "delta")?,
        },
        "amended-coulomb" => PotentialKind::AmendedCoulomb {
            diagonal: p.coincident.as_ref().map(|s| *s.get_ref()),
        },
        "mollified-newton" => PotentialKind::MollifiedNewton {
            radius: need(&p.radius, "radius")?,
        },
        "tabulated" => PotentialKind::Tabulated,
        other => {
            return Err(cx.at(
                p.kind.span(),
                format!(
                    "unknown potential kind '{other}'; expected zero, constant, bounded-smooth, softened-coulomb, amended-coulomb, mollified-newton or tabulated"
                ),
            ))
        }
    };
    let kind_span = p.kind.span();
    let mut pot = if kind == PotentialKind::Tabulated {
        let t = p
            .table
            .as_ref()
            .ok_or_else(|| cx.section("potential", "tabulated potential needs table = \"path.csv\""))?;
        let file = resolve(cx.path, t.get_ref());
        let csv = std::fs::read_to_string(&file)
            .map_err(|e| cx.at(t.span(), format!("cannot read kernel table {}: {e}", file.display())))?;
        let table = parse_kernel_csv(&csv, grid.clone()).map_err(|e| cx.at(t.span(), e.to_string()))?;
        PairPotential::tabulated(table)
    } else {
        PairPotential::new(kind).map_err(|e| cx.at(kind_span.clone(), e.to_string()))?
    };
    if let Some(d) = &p.diagonal {
        let rule = match d.get_ref().as_str() {
            "auto" => DiagonalRule::Auto,
            "point" => DiagonalRule::Point,
            "subcell-average" => DiagonalRule::SubcellAverage,
            other => {
                return Err(cx.at(
                    d.span(),
                    format!("unknown diagonal rule '{other}'; expected auto, point or subcell-average"),
                ))
            }
        };
        pot = pot.with_diagonal(rule);
    }
    pot.validate_for(grid).map_err(|e| cx.at(kind_span.clone(), e.to_string()))?;
    match p.shift.as_ref().map(|s| (s.get_ref(), s.span())) {
        None => shift_nonnegative(&pot, grid).map_err(|e| cx.at(section.clone(), e.to_string())),
        Some((toml::Value::String(s), _)) if s == "auto" => {
            shift_nonnegative(&pot, grid).map_err(|e| cx.at(section.clone(), e.to_string()))
        }
        Some((toml::Value::String(s), _)) if s == "none" => Ok(pot),
        Some((toml::Value::Float(v), _)) => Ok(pot.with_shift(*v)),
        Some((toml::Value::Integer(v), _)) => Ok(pot.with_shift(*v as f64)),
        Some((_, span)) => Err(cx.at(span, "shift must be \"auto\", \"none\" or a number")),
    }
}
