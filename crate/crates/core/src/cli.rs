//! Command-line experiments.
//!
//! Each subcommand resolves a JSON config (built-in defaults, then the
//! `--config` file, then `--seed` and `--override key=value`), runs, and
//! writes its CSV/JSON artifacts plus `report.json` into `--out-dir`.
//!
//! Exit codes: 0 success, 1 internal or numerical failure (a `status.json`
//! names the failing step), 2 invalid config (nothing is written).

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::{Display, Write as _};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::activation::ActivationFunction;
use crate::dynamics::{integrate, IntegratorConfig, NeuronState};
use crate::error::Error;
use crate::feedforward::{
    predict, train, unroll, unroll_input, BatchMode, LayerActivation, LayeredNetwork,
    TrainingBatch, TrainingConfig,
};
use crate::hebbian::{corrupt, learn, recall, HebbConfig, PatternSet};
use crate::mean_field::{fixed_point_iterate, mft_energy, Activation, FixedPointConfig};
use crate::spin::{
    brute_force_partition, ConnectionMatrix, FieldVector, InverseTemperature,
    MAX_ENUMERATION_SPINS,
};
use crate::tsp::{brute_force_tour, solve_tsp, AnnealSchedule, TspInstance, TspOptions};

#[derive(Debug, Parser)]
#[command(name = "hopnet", version, about = "Reproducible Hopfield-network experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Mean-field free energy against exact enumeration on random systems.
    BoundCheck(CommonArgs),
    /// Integrate the analog dynamics and record the energy.
    Relax(CommonArgs),
    /// Travelling salesman by annealed soft-assign.
    Tsp(CommonArgs),
    /// Store patterns and measure recall against corruption.
    Memory(CommonArgs),
    /// Train a layered network by backpropagation.
    Train(CommonArgs),
    /// Fit an unrolled shared-weight network to a teacher system.
    UnrollTrain(CommonArgs),
    /// Print the version.
    Version,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Replace one config value; dotted keys reach nested fields.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Converged,
    NonConverged,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub config_echo: Value,
    pub metrics: BTreeMap<String, f64>,
    pub artifacts: Vec<PathBuf>,
    pub status: Status,
    pub wall_time_seconds: f64,
}

/// Result of one experiment before anything touches the disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub metrics: BTreeMap<String, f64>,
    /// File name and contents.
    pub artifacts: Vec<(String, Vec<u8>)>,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Config(String),
    Failure { step: String, message: String },
}

impl Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Config(m) => write!(f, "config error: {m}"),
            Self::Failure { step, message } => write!(f, "failed during {step}: {message}"),
        }
    }
}

fn config_err(e: impl Display) -> CliError {
    CliError::Config(e.to_string())
}

fn failed(step: &str) -> impl Fn(Error) -> CliError + '_ {
    move |e| CliError::Failure {
        step: step.to_string(),
        message: e.to_string(),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let (name, common) = match cli.command {
        Command::Version => {
            println!("hopnet {}", env!("CARGO_PKG_VERSION"));
            return 0;
        }
        Command::BoundCheck(a) => ("bound-check", a),
        Command::Relax(a) => ("relax", a),
        Command::Tsp(a) => ("tsp", a),
        Command::Memory(a) => ("memory", a),
        Command::Train(a) => ("train", a),
        Command::UnrollTrain(a) => ("unroll-train", a),
    };
    let start = Instant::now();
    let result = match name {
        "bound-check" => execute::<BoundCheckConfig>(&common, run_bound_check),
        "relax" => execute::<RelaxConfig>(&common, run_relax),
        "tsp" => execute::<TspConfig>(&common, run_tsp),
        "memory" => execute::<MemoryConfig>(&common, run_memory),
        "train" => execute::<TrainConfig>(&common, run_train),
        _ => execute::<UnrollTrainConfig>(&common, run_unroll_train),
    };
    let (echo, outcome) = match result {
        Ok(r) => r,
        Err(CliError::Config(m)) => {
            eprintln!("hopnet {name}: config error: {m}");
            return 2;
        }
        Err(e @ CliError::Failure { .. }) => {
            eprintln!("hopnet {name}: {e}");
            let _ = write_status(&common.out_dir, &e);
            return 1;
        }
    };
    match write_outputs(name, echo, outcome, &common.out_dir, start) {
        Ok(report) => {
            println!(
                "{name}: {:?}, {} artifacts in {}",
                report.status,
                report.artifacts.len(),
                common.out_dir.display()
            );
            if report.status == Status::Error {
                1
            } else {
                0
            }
        }
        Err(e) => {
            eprintln!("hopnet {name}: {e}");
            let _ = write_status(&common.out_dir, &e);
            1
        }
    }
}

fn execute<C>(
    common: &CommonArgs,
    body: fn(&C) -> Result<Outcome, CliError>,
) -> Result<(Value, Outcome), CliError>
where
    C: Serialize + DeserializeOwned + Default,
{
    let (cfg, echo) = resolve_config::<C>(common.config.as_deref(), common.seed, &common.overrides)?;
    Ok((echo, body(&cfg)?))
}

/// Defaults, then the config file, then `seed`, then overrides. Returns the
/// typed config and its full JSON form.
pub fn resolve_config<C>(
    file: Option<&Path>,
    seed: Option<u64>,
    overrides: &[String],
) -> Result<(C, Value), CliError>
where
    C: Serialize + DeserializeOwned + Default,
{
    let mut value = serde_json::to_value(C::default()).map_err(config_err)?;
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let patch: Value = serde_json::from_str(&text)
            .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        if !patch.is_object() {
            return Err(config_err("config file must hold a JSON object"));
        }
        merge(&mut value, patch);
    }
    if let Some(s) = seed {
        value["seed"] = Value::from(s);
    }
    for ov in overrides {
        let (key, raw) = ov
            .split_once('=')
            .ok_or_else(|| config_err(format!("override {ov:?} is not key=value")))?;
        let v = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        set_path(&mut value, key, v)?;
    }
    if value.get("seed").map_or(true, Value::is_null) {
        return Err(config_err("a seed is required (config \"seed\" or --seed)"));
    }
    let cfg: C = serde_json::from_value(value).map_err(config_err)?;
    let echo = serde_json::to_value(&cfg).map_err(config_err)?;
    Ok((cfg, echo))
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

fn set_path(root: &mut Value, key: &str, v: Value) -> Result<(), CliError> {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| config_err(format!("override {key:?}: {part:?} is not inside an object")))?;
        if i + 1 == parts.len() {
            obj.insert((*part).to_string(), v);
            return Ok(());
        }
        cur = obj.entry(*part).or_insert_with(|| Value::Object(Default::default()));
    }
    Err(config_err("empty override key"))
}

fn write_outputs(
    command: &str,
    echo: Value,
    outcome: Outcome,
    dir: &Path,
    start: Instant,
) -> Result<RunReport, CliError> {
    let io = |e: std::io::Error| CliError::Failure {
        step: "writing artifacts".into(),
        message: e.to_string(),
    };
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut artifacts = Vec::new();
    for (name, bytes) in &outcome.artifacts {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(io)?;
        artifacts.push(path);
    }
    let report = RunReport {
        command: command.to_string(),
        config_echo: echo,
        metrics: outcome.metrics,
        artifacts,
        status: outcome.status,
        wall_time_seconds: start.elapsed().as_secs_f64(),
    };
    let text = serde_json::to_string_pretty(&report).map_err(|e| io(e.into()))?;
    std::fs::write(dir.join("report.json"), text + "\n").map_err(io)?;
    if report.status == Status::Error {
        write_status(
            dir,
            &CliError::Failure {
                step: "result check".into(),
                message: "run finished with status error; see report.json".into(),
            },
        )?;
    }
    Ok(report)
}

fn write_status(dir: &Path, e: &CliError) -> Result<(), CliError> {
    let (step, message) = match e {
        CliError::Failure { step, message } => (step.as_str(), message.as_str()),
        CliError::Config(m) => ("config", m.as_str()),
    };
    let body = serde_json::json!({ "status": "error", "step": step, "message": message });
    std::fs::create_dir_all(dir)
        .and_then(|_| std::fs::write(dir.join("status.json"), body.to_string() + "\n"))
        .map_err(|err| CliError::Failure {
            step: "writing status".into(),
            message: err.to_string(),
        })
}

fn seed_of(seed: Option<u64>) -> u64 {
    seed.expect("seed checked during config resolution")
}

fn metric(m: &mut BTreeMap<String, f64>, key: &str, value: impl Into<f64>) {
    m.insert(key.to_string(), value.into());
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(msg()))
    }
}

fn positive(name: &str, x: f64) -> Result<(), CliError> {
    check(x > 0.0 && x.is_finite(), || format!("{name} must be positive, got {x}"))
}

fn nonnegative(name: &str, x: f64) -> Result<(), CliError> {
    check(x >= 0.0 && x.is_finite(), || format!("{name} must be nonnegative, got {x}"))
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundCheckConfig {
    pub seed: Option<u64>,
    pub n: usize,
    pub instances: usize,
    pub betas: Vec<f64>,
    /// Couplings uniform in `[-t_scale, t_scale]`.
    pub t_scale: f64,
    /// Fields uniform in `[-h_scale, h_scale]`.
    pub h_scale: f64,
    /// Random interior states tested per instance and temperature.
    pub interior_samples: usize,
    pub fixed_point: FixedPointConfig,
    /// Allowed negative gap before the bound counts as violated.
    pub slack: f64,
}

impl Default for BoundCheckConfig {
    fn default() -> Self {
        Self {
            seed: None,
            n: 8,
            instances: 100,
            betas: vec![0.5, 1.0, 2.0],
            t_scale: 1.0,
            h_scale: 0.5,
            interior_samples: 100,
            fixed_point: FixedPointConfig::default(),
            slack: 1e-9,
        }
    }
}

pub fn run_bound_check(cfg: &BoundCheckConfig) -> Result<Outcome, CliError> {
    check((1..=MAX_ENUMERATION_SPINS).contains(&cfg.n), || {
        format!("n must be in 1..={MAX_ENUMERATION_SPINS}, got {}", cfg.n)
    })?;
    check(cfg.instances > 0, || "instances must be at least 1".into())?;
    check(!cfg.betas.is_empty(), || "betas must not be empty".into())?;
    let betas = cfg
        .betas
        .iter()
        .map(|&b| InverseTemperature::new(b))
        .collect::<Result<Vec<_>, _>>()
        .map_err(config_err)?;
    nonnegative("t_scale", cfg.t_scale)?;
    nonnegative("h_scale", cfg.h_scale)?;
    nonnegative("slack", cfg.slack)?;
    cfg.fixed_point.validate().map_err(config_err)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed_of(cfg.seed));
    let n = cfg.n;
    let mut csv = String::from(
        "instance,beta,f_exact,e_mft,gap,min_interior_gap,sweeps,residual,converged\n",
    );
    let mut gaps = Vec::new();
    let mut min_interior = f64::INFINITY;
    let mut max_residual: f64 = 0.0;
    let mut nonconverged = 0usize;
    for inst in 0..cfg.instances {
        let t = ConnectionMatrix::random(n, cfg.t_scale, &mut rng);
        let h = FieldVector::random(n, cfg.h_scale, &mut rng);
        for &beta in &betas {
            let exact = brute_force_partition(&t, &h, beta).map_err(failed("enumeration"))?;
            let v0 = Activation::bipolar((0..n).map(|_| rng.gen_range(-0.5..0.5)).collect())
                .map_err(failed("initial state"))?;
            let fp = fixed_point_iterate(&t, &h, beta, &v0, &cfg.fixed_point)
                .map_err(failed("fixed-point iteration"))?;
            let e = mft_energy(&t, &h, beta, &fp.activation).map_err(failed("mean-field energy"))?;
            let gap = e - exact.f;
            let mut inner = f64::INFINITY;
            for _ in 0..cfg.interior_samples {
                let v = Activation::bipolar((0..n).map(|_| rng.gen_range(-0.999..0.999)).collect())
                    .map_err(failed("interior sample"))?;
                let e = mft_energy(&t, &h, beta, &v).map_err(failed("mean-field energy"))?;
                inner = inner.min(e - exact.f);
            }
            min_interior = min_interior.min(inner);
            max_residual = max_residual.max(fp.residual);
            nonconverged += usize::from(!fp.converged);
            gaps.push(gap);
            let _ = writeln!(
                csv,
                "{inst},{},{},{e},{gap},{inner},{},{},{}",
                beta.value(),
                exact.f,
                fp.sweeps,
                fp.residual,
                u8::from(fp.converged)
            );
        }
    }
    let min_gap = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    let mut metrics = BTreeMap::new();
    metric(&mut metrics, "min_gap", min_gap);
    metric(&mut metrics, "median_gap", median(&mut gaps));
    metric(&mut metrics, "min_interior_gap", min_interior);
    metric(&mut metrics, "max_residual", max_residual);
    metric(&mut metrics, "nonconverged", nonconverged as f64);
    metric(&mut metrics, "checks", gaps.len() as f64);
    let violated = min_gap < -cfg.slack || min_interior < -cfg.slack;
    let status = if violated {
        Status::Error
    } else if nonconverged > 0 {
        Status::NonConverged
    } else {
        Status::Converged
    };
    Ok(Outcome {
        metrics,
        artifacts: vec![("bound_check.csv".into(), csv.into_bytes())],
        status,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelaxConfig {
    pub seed: Option<u64>,
    pub n: usize,
    /// Explicit couplings; drawn at random when absent.
    pub connections: Option<Vec<Vec<f64>>>,
    /// Explicit fields; drawn at random when absent.
    pub field: Option<Vec<f64>>,
    pub t_scale: f64,
    pub h_scale: f64,
    pub activation: ActivationFunction,
    pub dt: f64,
    pub tau: f64,
    pub steps: usize,
    pub record_every: usize,
    /// Initial potentials uniform in `[-u0_scale, u0_scale]`.
    pub u0_scale: f64,
    /// Fixed-point residual that counts as converged.
    pub tol: f64,
}

impl Default for RelaxConfig {
    fn default() -> Self {
        Self {
            seed: None,
            n: 5,
            connections: None,
            field: None,
            t_scale: 1.0,
            h_scale: 0.5,
            activation: ActivationFunction::tanh(1.0),
            dt: 0.01,
            tau: 1.0,
            steps: 5000,
            record_every: 10,
            u0_scale: 0.1,
            tol: 1e-6,
        }
    }
}

pub fn run_relax(cfg: &RelaxConfig) -> Result<Outcome, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed_of(cfg.seed));
    let t = match &cfg.connections {
        Some(rows) => ConnectionMatrix::from_rows(rows.clone()).map_err(config_err)?,
        None => {
            check(cfg.n > 0, || "n must be at least 1".into())?;
            nonnegative("t_scale", cfg.t_scale)?;
            ConnectionMatrix::random(cfg.n, cfg.t_scale, &mut rng)
        }
    };
    let n = t.n();
    let h = match &cfg.field {
        Some(h) => FieldVector::new(h.clone()).map_err(config_err)?,
        None => {
            nonnegative("h_scale", cfg.h_scale)?;
            FieldVector::random(n, cfg.h_scale, &mut rng)
        }
    };
    check(h.len() == n, || format!("field has {} entries for {n} units", h.len()))?;
    if let ActivationFunction::Tanh { gain } | ActivationFunction::Logistic { gain } = cfg.activation {
        positive("activation gain", gain)?;
    }
    nonnegative("u0_scale", cfg.u0_scale)?;
    positive("tol", cfg.tol)?;
    let icfg = IntegratorConfig {
        dt: cfg.dt,
        tau: vec![cfg.tau; n],
        steps: cfg.steps,
        record_every: cfg.record_every,
    };
    icfg.validate(n).map_err(config_err)?;

    let g = cfg.activation;
    let u0 = (0..n).map(|_| rng.gen_range(-1.0..=1.0) * cfg.u0_scale).collect();
    let s0 = NeuronState::from_potentials(u0, &g);
    let traj = integrate(&s0, &t, &h, &g, &icfg).map_err(failed("integration"))?;
    let mut csv = Vec::new();
    traj.write_csv(&mut csv).map_err(failed("trajectory csv"))?;

    let v = traj.last().v();
    let residual = (0..n)
        .map(|i| (v[i] - g.g(t.row_dot(i, v) + h[i])).abs())
        .fold(0.0, f64::max);
    let max_rise = traj
        .energies
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let mut metrics = BTreeMap::new();
    metric(&mut metrics, "initial_energy", traj.energies[0]);
    metric(&mut metrics, "final_energy", *traj.energies.last().expect("initial energy"));
    metric(&mut metrics, "max_energy_increase", max_rise);
    metric(&mut metrics, "fixed_point_residual", residual);
    let status = if residual <= cfg.tol {
        Status::Converged
    } else {
        Status::NonConverged
    };
    Ok(Outcome {
        metrics,
        artifacts: vec![("trajectory.csv".into(), csv)],
        status,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TspConfig {
    pub seed: Option<u64>,
    /// CSV of city coordinates.
    pub cities: Option<PathBuf>,
    /// Inline coordinates, used when `cities` is absent.
    pub coords: Option<Vec<(f64, f64)>>,
    /// Random cities in the unit square when neither is given.
    pub n: usize,
    pub beta0: f64,
    pub rate: f64,
    pub stages: usize,
    pub noise: f64,
    pub self_amplification: f64,
    pub inner_iterations: usize,
    pub inner_tol: f64,
    pub softassign_tol: f64,
    pub softassign_max_sweeps: usize,
    /// Also find the optimum by enumeration.
    pub exact: bool,
}

impl Default for TspConfig {
    fn default() -> Self {
        let opts = TspOptions::default();
        Self {
            seed: None,
            cities: None,
            coords: None,
            n: 8,
            beta0: 1.0,
            rate: 1.05,
            stages: 200,
            noise: opts.noise,
            self_amplification: opts.self_amplification,
            inner_iterations: opts.inner_iterations,
            inner_tol: opts.inner_tol,
            softassign_tol: opts.softassign.tol,
            softassign_max_sweeps: opts.softassign.max_sweeps,
            exact: true,
        }
    }
}

pub fn run_tsp(cfg: &TspConfig) -> Result<Outcome, CliError> {
    let seed = seed_of(cfg.seed);
    let inst = match (&cfg.cities, &cfg.coords) {
        (Some(path), _) => {
            let f = std::fs::File::open(path)
                .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            TspInstance::from_csv(f).map_err(config_err)?
        }
        (None, Some(c)) => TspInstance::from_coords(c.clone()).map_err(config_err)?,
        (None, None) => TspInstance::random(cfg.n, &mut ChaCha8Rng::seed_from_u64(seed)),
    };
    let schedule = AnnealSchedule::geometric(cfg.beta0, cfg.rate, cfg.stages).map_err(config_err)?;
    let opts = TspOptions {
        schedule,
        softassign: FixedPointConfig {
            tol: cfg.softassign_tol,
            max_sweeps: cfg.softassign_max_sweeps,
            ..Default::default()
        },
        inner_iterations: cfg.inner_iterations,
        inner_tol: cfg.inner_tol,
        self_amplification: cfg.self_amplification,
        noise: cfg.noise,
        seed,
    };
    opts.softassign.validate().map_err(config_err)?;
    nonnegative("noise", cfg.noise)?;
    nonnegative("self_amplification", cfg.self_amplification)?;
    nonnegative("inner_tol", cfg.inner_tol)?;
    check(cfg.inner_iterations > 0, || "inner_iterations must be at least 1".into())?;
    check((3..=crate::tsp::MAX_CITIES).contains(&inst.n()), || {
        format!("need 3..={} cities, got {}", crate::tsp::MAX_CITIES, inst.n())
    })?;

    let sol = solve_tsp(&inst, &opts).map_err(failed("annealing"))?;
    let mut stages = String::from("stage,beta,entropy,tour_length,constraint_residual\n");
    for s in &sol.stages {
        let _ = writeln!(
            stages,
            "{},{},{},{},{}",
            s.stage, s.beta, s.entropy, s.tour_length, s.constraint_residual
        );
    }
    let mut tour = String::from("position,city,x,y\n");
    for (pos, &c) in sol.tour.iter().enumerate() {
        let (x, y) = inst.coords()[c];
        let _ = writeln!(tour, "{pos},{c},{x},{y}");
    }
    let mut metrics = BTreeMap::new();
    metric(&mut metrics, "cities", inst.n() as f64);
    metric(&mut metrics, "tour_length", sol.tour_length);
    metric(&mut metrics, "fallback_used", u8::from(sol.fallback_used));
    if cfg.exact {
        let (_, best) = brute_force_tour(&inst).map_err(failed("enumeration"))?;
        metric(&mut metrics, "optimal_length", best);
        metric(&mut metrics, "ratio", sol.tour_length / best);
    }
    let status = if sol.fallback_used {
        Status::NonConverged
    } else {
        Status::Converged
    };
    Ok(Outcome {
        metrics,
        artifacts: vec![
            ("stages.csv".into(), stages.into_bytes()),
            ("tour.csv".into(), tour.into_bytes()),
        ],
        status,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemoryConfig {
    pub seed: Option<u64>,
    /// Pattern file; random patterns when absent.
    pub pattern_file: Option<PathBuf>,
    pub n: usize,
    pub patterns: usize,
    pub c_scale: f64,
    pub tau_t: f64,
    pub dt: f64,
    pub sweeps: usize,
    pub h_weight: f64,
    pub max_sweeps: usize,
    /// Fractions of flipped bits in the probes.
    pub corruption: Vec<f64>,
    /// Probes per stored pattern and corruption level.
    pub trials: usize,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        Self {
            seed: None,
            pattern_file: None,
            n: 100,
            patterns: 5,
            c_scale: 1.0,
            tau_t: 1.0,
            dt: 0.01,
            sweeps: 1000,
            h_weight: 0.0,
            max_sweeps: 100,
            corruption: vec![0.0, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5],
            trials: 4,
        }
    }
}

pub fn run_memory(cfg: &MemoryConfig) -> Result<Outcome, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed_of(cfg.seed));
    let set = match &cfg.pattern_file {
        Some(p) => PatternSet::load(p).map_err(config_err)?,
        None => {
            check(cfg.n > 0 && cfg.patterns > 0, || {
                "n and patterns must be at least 1".into()
            })?;
            PatternSet::random(cfg.patterns, cfg.n, &mut rng).map_err(config_err)?
        }
    };
    let hebb = HebbConfig::learning(cfg.c_scale, cfg.tau_t).map_err(config_err)?;
    nonnegative("dt", cfg.dt)?;
    check(cfg.dt <= cfg.tau_t, || format!("dt/tau_t = {} exceeds 1", cfg.dt / cfg.tau_t))?;
    nonnegative("h_weight", cfg.h_weight)?;
    check(cfg.trials > 0, || "trials must be at least 1".into())?;
    check(cfg.corruption.iter().all(|f| (0.0..=1.0).contains(f)), || {
        "corruption fractions must lie in [0, 1]".into()
    })?;
    if set.len() > 1 {
        check(
            set.weights().iter().all(|w| cfg.dt * set.len() as f64 * w <= cfg.tau_t),
            || "dt too large for round-robin presentation".into(),
        )?;
    }

    let t = learn(&set, &hebb, cfg.dt, cfg.sweeps).map_err(failed("learning"))?;
    let n = set.width();
    let mut csv = String::from("corruption,flips,mean_accuracy,min_accuracy,perfect_fraction\n");
    let mut metrics = BTreeMap::new();
    let mut all_converged = true;
    for &f in &cfg.corruption {
        let flips = (f * n as f64).round() as usize;
        let mut accs = Vec::new();
        for p in set.patterns() {
            for _ in 0..cfg.trials {
                let probe = corrupt(p, flips, &mut rng).map_err(failed("corruption"))?;
                let r = recall(&t, &probe, cfg.h_weight, cfg.max_sweeps).map_err(failed("recall"))?;
                all_converged &= r.converged;
                accs.push(r.state.overlap_count(p) as f64 / n as f64);
            }
        }
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        let min = accs.iter().copied().fold(f64::INFINITY, f64::min);
        let perfect = accs.iter().filter(|&&a| a == 1.0).count() as f64 / accs.len() as f64;
        let _ = writeln!(csv, "{f},{flips},{mean},{min},{perfect}");
        metric(&mut metrics, &format!("accuracy_at_{f}"), mean);
    }
    metric(&mut metrics, "patterns", set.len() as f64);
    metric(&mut metrics, "units", n as f64);
    let status = if all_converged {
        Status::Converged
    } else {
        Status::NonConverged
    };
    Ok(Outcome {
        metrics,
        artifacts: vec![
            ("recall_accuracy.csv".into(), csv.into_bytes()),
            ("patterns.txt".into(), set.to_text().into_bytes()),
        ],
        status,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: Option<u64>,
    /// Training CSV; the four XOR patterns when absent.
    pub data: Option<PathBuf>,
    /// Layer widths, input first.
    pub widths: Vec<usize>,
    pub hidden: LayerActivation,
    pub output: LayerActivation,
    pub eta: f64,
    pub lambda: f64,
    pub batch_mode: BatchMode,
    pub epochs: usize,
    /// Attempts with seeds `seed, seed + 1, ...` until `target_loss` is met.
    pub restarts: usize,
    pub target_loss: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: None,
            data: None,
            widths: vec![2, 2, 1],
            hidden: LayerActivation::Tanh { gain: 1.0 },
            output: LayerActivation::Tanh { gain: 1.0 },
            eta: 0.1,
            lambda: 0.0,
            batch_mode: BatchMode::FullBatch,
            epochs: 5000,
            restarts: 5,
            target_loss: 0.01,
        }
    }
}

fn loss_csv(losses: &[f64]) -> Vec<u8> {
    let mut s = String::from("epoch,loss\n");
    for (e, l) in losses.iter().enumerate() {
        let _ = writeln!(s, "{e},{l}");
    }
    s.into_bytes()
}

pub fn run_train(cfg: &TrainConfig) -> Result<Outcome, CliError> {
    let seed = seed_of(cfg.seed);
    let batch = match &cfg.data {
        Some(p) => TrainingBatch::load(p).map_err(config_err)?,
        None => TrainingBatch::xor(),
    };
    check(cfg.widths.len() >= 2, || "widths needs input and output".into())?;
    check(cfg.widths.iter().all(|&w| w > 0), || "widths must be positive".into())?;
    let (w_in, w_out) = (cfg.widths[0], *cfg.widths.last().expect("checked"));
    check(w_in == batch.inputs()[0].len() && w_out == batch.targets()[0].len(), || {
        format!(
            "widths {:?} do not fit data with {} inputs and {} targets",
            cfg.widths,
            batch.inputs()[0].len(),
            batch.targets()[0].len()
        )
    })?;
    check(cfg.restarts > 0, || "restarts must be at least 1".into())?;
    nonnegative("target_loss", cfg.target_loss)?;
    let mut tcfg = TrainingConfig {
        eta: cfg.eta,
        lambda: cfg.lambda,
        batch_mode: cfg.batch_mode,
        epochs: cfg.epochs,
        seed,
    };
    tcfg.validate().map_err(config_err)?;
    // validates the activations before any training
    LayeredNetwork::random(&cfg.widths, cfg.hidden, cfg.output, &mut ChaCha8Rng::seed_from_u64(0))
        .map_err(config_err)?;

    let mut best = None;
    let mut attempts = 0;
    for r in 0..cfg.restarts as u64 {
        attempts += 1;
        let s = seed.wrapping_add(r);
        tcfg.seed = s;
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let net = LayeredNetwork::random(&cfg.widths, cfg.hidden, cfg.output, &mut rng)
            .map_err(failed("initialisation"))?;
        let run = train(&net, &batch, &tcfg).map_err(failed("training"))?;
        let last = *run.losses.last().expect("loss history");
        let better = best
            .as_ref()
            .map_or(true, |(_, b): &(crate::feedforward::TrainingRun, f64)| last < *b);
        if better {
            best = Some((run, last));
        }
        if last < cfg.target_loss {
            break;
        }
    }
    let (run, last) = best.expect("at least one attempt");
    let mut metrics = BTreeMap::new();
    metric(&mut metrics, "initial_loss", run.losses[0]);
    metric(&mut metrics, "final_loss", last);
    metric(&mut metrics, "attempts", attempts as f64);
    metric(&mut metrics, "epochs", cfg.epochs as f64);
    let status = if last < cfg.target_loss {
        Status::Converged
    } else {
        Status::NonConverged
    };
    Ok(Outcome {
        metrics,
        artifacts: vec![
            ("loss.csv".into(), loss_csv(&run.losses)),
            ("network.json".into(), (run.network.to_json() + "\n").into_bytes()),
        ],
        status,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnrollTrainConfig {
    pub seed: Option<u64>,
    pub n: usize,
    /// Unrolled steps.
    pub k: usize,
    pub dt: f64,
    pub tau: f64,
    pub activation: ActivationFunction,
    /// Teacher couplings uniform in `[-teacher_scale, teacher_scale]`.
    pub teacher_scale: f64,
    pub field_scale: f64,
    /// Student couplings start uniform in `[-init_scale, init_scale]`.
    pub init_scale: f64,
    /// Training trajectories.
    pub samples: usize,
    pub eta: f64,
    pub lambda: f64,
    pub batch_mode: BatchMode,
    pub epochs: usize,
    pub target_loss: f64,
}

impl Default for UnrollTrainConfig {
    fn default() -> Self {
        Self {
            seed: None,
            n: 4,
            k: 3,
            dt: 0.5,
            tau: 1.0,
            activation: ActivationFunction::tanh(1.0),
            teacher_scale: 1.0,
            field_scale: 0.5,
            init_scale: 0.1,
            samples: 16,
            eta: 0.01,
            lambda: 0.0,
            batch_mode: BatchMode::FullBatch,
            epochs: 5000,
            target_loss: 1e-3,
        }
    }
}

pub fn run_unroll_train(cfg: &UnrollTrainConfig) -> Result<Outcome, CliError> {
    let seed = seed_of(cfg.seed);
    check(cfg.n > 0 && cfg.k > 0 && cfg.samples > 0, || {
        "n, k and samples must be at least 1".into()
    })?;
    if let ActivationFunction::Tanh { gain } | ActivationFunction::Logistic { gain } = cfg.activation {
        positive("activation gain", gain)?;
    }
    nonnegative("teacher_scale", cfg.teacher_scale)?;
    nonnegative("field_scale", cfg.field_scale)?;
    nonnegative("init_scale", cfg.init_scale)?;
    nonnegative("target_loss", cfg.target_loss)?;
    let icfg = IntegratorConfig::uniform(cfg.n, cfg.dt, cfg.tau, 1);
    icfg.validate(cfg.n).map_err(config_err)?;
    let tcfg = TrainingConfig {
        eta: cfg.eta,
        lambda: cfg.lambda,
        batch_mode: cfg.batch_mode,
        epochs: cfg.epochs,
        seed,
    };
    tcfg.validate().map_err(config_err)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = cfg.activation;
    let t_teacher = ConnectionMatrix::random(cfg.n, cfg.teacher_scale, &mut rng);
    let h_teacher = FieldVector::random(cfg.n, cfg.field_scale, &mut rng);
    let teacher = unroll(&t_teacher, &h_teacher, &g, &icfg, cfg.k).map_err(failed("teacher unroll"))?;
    let mut inputs = Vec::with_capacity(cfg.samples);
    let mut targets = Vec::with_capacity(cfg.samples);
    for _ in 0..cfg.samples {
        let u0 = (0..cfg.n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let x = unroll_input(&NeuronState::from_potentials(u0, &g), &icfg);
        targets.push(predict(&teacher, &x).map_err(failed("teacher forward"))?);
        inputs.push(x);
    }
    let batch = TrainingBatch::new(inputs, targets).map_err(failed("dataset"))?;
    let t0 = ConnectionMatrix::random(cfg.n, cfg.init_scale, &mut rng);
    let student = unroll(&t0, &FieldVector::zeros(cfg.n), &g, &icfg, cfg.k)
        .map_err(failed("student unroll"))?;
    let run = train(&student, &batch, &tcfg).map_err(failed("training"))?;
    let last = *run.losses.last().expect("loss history");

    let teacher_params = teacher.params();
    let param_err = run
        .network
        .params()
        .iter()
        .zip(&teacher_params)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let mut metrics = BTreeMap::new();
    metric(&mut metrics, "initial_loss", run.losses[0]);
    metric(&mut metrics, "final_loss", last);
    metric(&mut metrics, "max_param_error", param_err);
    metric(&mut metrics, "shared_params", run.network.num_params() as f64);
    let status = if last < cfg.target_loss {
        Status::Converged
    } else {
        Status::NonConverged
    };
    Ok(Outcome {
        metrics,
        artifacts: vec![
            ("loss.csv".into(), loss_csv(&run.losses)),
            ("network.json".into(), (run.network.to_json() + "\n").into_bytes()),
        ],
        status,
    })
}
