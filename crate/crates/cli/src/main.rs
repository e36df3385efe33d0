//! `bas`: command-line front end for the BAS model library.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use bas_core::benchmarks::{build_benchmark, load_trace_csv, Benchmark, BenchmarkId, MeasuredTrace};
use bas_core::hybrid::{self, build_hybrid_cs3, HybridParams, Interval, Mode};
use bas_core::io::{fmt17, write_atomic};
use bas_core::reach::{appendix_polytope, compare_facets, octagon_directions, reach_tube, BoxSet};
use bas_core::simulate::{simulate_schedule, InputSchedule, Trace};
use bas_core::stochastic::{
    action_grid, build_kernel_cs1_2d, grid_abstraction, safety_value_iteration, synthesize_cs2, Cs2Config, SafetySpec,
};
use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

#[derive(Parser, Debug)]
#[command(
    name = "bas",
    version,
    about = "Building automation system models: simulation and verification"
)]
struct Cli {
    /// JSON file with option values; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for artifacts (default: bas-out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the benchmark registry.
    ListBenchmarks,
    /// Simulate a benchmark and export the trace.
    Simulate(SimulateArgs),
    /// Reach tube of a deterministic benchmark over octagonal templates.
    Reach(ReachArgs),
    /// Grid-based safety probabilities for the two-zone stochastic model.
    Psafe(PsafeArgs),
    /// Policy synthesis on the reduced model, refined onto the full model.
    Synth(SynthArgs),
    /// Box flowpipe and simulation of the switched single-zone model.
    HybridReach(HybridArgs),
}

#[derive(Args, Debug, Default)]
struct SimulateArgs {
    #[arg(long)]
    benchmark: Option<String>,
    /// Number of steps.
    #[arg(long)]
    k: Option<usize>,
    /// Random seed (default: $BAS_SEED, else 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Initial state, comma separated.
    #[arg(long)]
    x0: Option<String>,
    /// `cs1-weekday` or a constant input value.
    #[arg(long)]
    schedule: Option<String>,
    /// Measured trace CSV to export alongside the simulation.
    #[arg(long)]
    overlay: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct ReachArgs {
    #[arg(long)]
    benchmark: Option<String>,
    /// Horizon in steps.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    x0: Option<String>,
    #[arg(long)]
    u_lo: Option<f64>,
    #[arg(long)]
    u_hi: Option<f64>,
    /// Disturbance bounds (every channel).
    #[arg(long)]
    d_lo: Option<f64>,
    #[arg(long)]
    d_hi: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct PsafeArgs {
    /// Cells per axis.
    #[arg(long)]
    cells: Option<usize>,
    #[arg(long)]
    actions: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct SynthArgs {
    #[arg(long)]
    cells: Option<usize>,
    #[arg(long)]
    actions: Option<usize>,
    /// Monte-Carlo runs on the full model.
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug, Default)]
struct HybridArgs {
    /// Initial (T_z1, T_sa).
    #[arg(long)]
    x0: Option<String>,
    /// Half-width of the initial box around x0.
    #[arg(long)]
    width: Option<f64>,
    /// Horizon in minutes.
    #[arg(long)]
    horizon: Option<f64>,
    /// Flowpipe step in minutes.
    #[arg(long)]
    step: Option<f64>,
    /// Enable the recirculation (closed mixer) transitions.
    #[arg(long)]
    recirculation: bool,
}

/// Values from `--config`, consulted when a flag is absent.
struct FileConfig(Map<String, Value>);

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig(Map::new()));
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        match serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))? {
            Value::Object(map) => Ok(FileConfig(map)),
            _ => bail!("config {} must be a JSON object", path.display()),
        }
    }

    fn pick<T: DeserializeOwned>(&self, flag: Option<T>, key: &str) -> Result<Option<T>> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.0.get(key).or_else(|| self.0.get(&key.replace('_', "-"))) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => Ok(Some(
                serde_json::from_value(v.clone()).with_context(|| format!("config key `{key}`"))?,
            )),
        }
    }

    fn seed(&self, flag: Option<u64>) -> Result<u64> {
        if let Some(s) = self.pick(flag, "seed")? {
            return Ok(s);
        }
        match std::env::var("BAS_SEED") {
            Ok(v) => v
                .trim()
                .parse()
                .with_context(|| format!("BAS_SEED=`{v}` is not an unsigned integer")),
            Err(_) => Ok(0),
        }
    }
}

fn parse_vector(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| anyhow!("`{s}` is not a number in `{text}`"))
        })
        .collect()
}

fn parse_benchmark(name: Option<String>) -> Result<BenchmarkId> {
    let name = name.ok_or_else(|| anyhow!("--benchmark is required"))?;
    Ok(name.parse::<BenchmarkId>()?)
}

fn default_x0(id: BenchmarkId, nx: usize) -> Vec<f64> {
    match id {
        BenchmarkId::Cs1Det | BenchmarkId::Cs1Dist | BenchmarkId::Cs1Stoch => vec![18.0, 18.0, 35.0, 35.0],
        _ => vec![20.0; nx],
    }
}

fn check_len(what: &str, v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        bail!("{what} has {} entries, expected {n}", v.len());
    }
    Ok(())
}

/// Artifacts are collected in memory and only written once every
/// computation has succeeded.
#[derive(Default)]
struct Artifacts {
    files: Vec<(String, String)>,
}

impl Artifacts {
    fn add(&mut self, name: impl Into<String>, text: String) {
        self.files.push((name.into(), text));
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.add(name, serde_json::to_string_pretty(value)? + "\n");
        Ok(())
    }

    fn write(self, dir: &Path, command: &str, config: Value) -> Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut listing = Vec::new();
        for (name, text) in &self.files {
            write_atomic(dir.join(name), text)?;
            let digest = Sha256::digest(text.as_bytes());
            let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
            listing.push(json!({ "path": name, "sha256": hex, "bytes": text.len() }));
        }
        let manifest = json!({
            "tool": "bas",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "config": config,
            "files": listing,
        });
        write_atomic(
            dir.join("manifest.json"),
            &(serde_json::to_string_pretty(&manifest)? + "\n"),
        )?;
        println!(
            "wrote {} files and manifest.json to {}",
            self.files.len(),
            dir.display()
        );
        Ok(())
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = FileConfig::load(cli.config.as_deref())?;
    let out: PathBuf = cfg.pick(cli.out, "out")?.unwrap_or_else(|| PathBuf::from("bas-out"));
    let (name, config, artifacts) = match cli.command {
        Command::ListBenchmarks => {
            for id in BenchmarkId::ALL {
                println!("{:<12} {}", id.as_str(), id.description());
            }
            return Ok(());
        }
        Command::Simulate(a) => ("simulate", simulate(a, &cfg)?),
        Command::Reach(a) => ("reach", reach(a, &cfg)?),
        Command::Psafe(a) => ("psafe", psafe(a, &cfg)?),
        Command::Synth(a) => ("synth", synth(a, &cfg)?),
        Command::HybridReach(a) => ("hybrid-reach", hybrid_reach(a, &cfg)?),
    }
    .flatten_run();
    artifacts.write(&out, name, config)
}

trait IntoRun {
    fn flatten_run(self) -> (&'static str, Value, Artifacts);
}

impl IntoRun for (&'static str, (Value, Artifacts)) {
    fn flatten_run(self) -> (&'static str, Value, Artifacts) {
        (self.0, self.1 .0, self.1 .1)
    }
}

fn simulate(a: SimulateArgs, cfg: &FileConfig) -> Result<(Value, Artifacts)> {
    let id = parse_benchmark(cfg.pick(a.benchmark, "benchmark")?)?;
    let k: usize = cfg.pick(a.k, "k")?.unwrap_or(192);
    let seed = cfg.seed(a.seed)?;
    let x0: Option<String> = cfg.pick(a.x0, "x0")?;
    let schedule: String = cfg
        .pick(a.schedule, "schedule")?
        .unwrap_or_else(|| "cs1-weekday".into());
    let overlay: Option<PathBuf> = cfg.pick(a.overlay, "overlay")?;
    let measured = overlay.as_deref().map(load_trace_csv).transpose()?;
    let mut art = Artifacts::default();

    match build_benchmark(id)? {
        Benchmark::Hybrid { automaton, .. } => {
            let x = x0
                .as_deref()
                .map(parse_vector)
                .transpose()?
                .unwrap_or_else(|| vec![15.0, 15.0]);
            check_len("--x0", &x, 2)?;
            let horizon = k as f64 * bas_core::discretize::DEFAULT_DELTA_MINUTES;
            let trace = hybrid::integrate(&automaton, [x[0], x[1]], Mode::Off, horizon, 0.01)?;
            art.add("trace.csv", hybrid::trace_csv(&trace, 100)?);
            art.json(
                "events.json",
                &json!({ "events": trace.events, "warnings": trace.warnings }),
            )?;
            let config = json!({ "benchmark": id.as_str(), "k": k, "x0": x, "horizon_minutes": horizon });
            Ok((config, art))
        }
        Benchmark::Discrete { model, law, .. } => {
            let x = match &x0 {
                Some(s) => parse_vector(s)?,
                None => default_x0(id, model.nx()),
            };
            check_len("--x0", &x, model.nx())?;
            let sched = match InputSchedule::named(&schedule) {
                Some(s) => s,
                None => {
                    let v: f64 = schedule
                        .parse()
                        .map_err(|_| anyhow!("--schedule must be `cs1-weekday` or a number, got `{schedule}`"))?;
                    InputSchedule::Constant {
                        value: vec![v; model.nu()],
                    }
                }
            };
            let mut trace = simulate_schedule(&model, &DVector::from_vec(x.clone()), &sched, &law, seed, k)?;
            trace.model_id = Some(id.as_str().to_string());
            art.add("trace.csv", trace.to_csv());
            art.add("trace.json", trace.sidecar_json()? + "\n");
            if let Some(m) = &measured {
                art.add("overlay.csv", overlay_csv(&trace, m));
            }
            let config = json!({
                "benchmark": id.as_str(), "k": k, "seed": seed, "x0": x,
                "schedule": schedule, "overlay": overlay,
            });
            Ok((config, art))
        }
    }
}

/// Simulated states next to the measured channels, interpolated at the
/// simulation times; cells outside the measured span stay empty.
fn overlay_csv(trace: &Trace, m: &MeasuredTrace) -> String {
    let names: Vec<&str> = m.channels.iter().map(|c| c.name.as_str()).collect();
    let mut header = vec!["t_min".to_string()];
    header.extend(trace.state_names.iter().map(|n| format!("sim_{n}")));
    header.extend(names.iter().map(|n| format!("meas_{n}")));
    let mut out = header.join(",") + "\n";
    for (k, x) in trace.states.iter().enumerate() {
        let t = k as f64 * trace.delta_minutes;
        let mut row = vec![fmt17(t)];
        row.extend(x.iter().map(|v| fmt17(*v)));
        let inside = matches!((m.t_min.first(), m.t_min.last()), (Some(&a), Some(&b)) if t >= a && t <= b);
        row.extend(names.iter().map(|n| match inside {
            true => m.sample(n, t).map(fmt17).unwrap_or_default(),
            false => String::new(),
        }));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn reach(a: ReachArgs, cfg: &FileConfig) -> Result<(Value, Artifacts)> {
    let id = parse_benchmark(cfg.pick(a.benchmark, "benchmark")?)?;
    let n: usize = cfg.pick(a.n, "n")?.unwrap_or(6);
    let x0: Option<String> = cfg.pick(a.x0, "x0")?;
    let u_lo: f64 = cfg.pick(a.u_lo, "u_lo")?.unwrap_or(15.0);
    let u_hi: f64 = cfg.pick(a.u_hi, "u_hi")?.unwrap_or(22.0);
    let d_lo: f64 = cfg.pick(a.d_lo, "d_lo")?.unwrap_or(0.0);
    let d_hi: f64 = cfg.pick(a.d_hi, "d_hi")?.unwrap_or(1000.0);
    let Benchmark::Discrete { model, .. } = build_benchmark(id)? else {
        bail!("reach needs a discrete-time benchmark; use hybrid-reach for {id}");
    };
    let x = match &x0 {
        Some(s) => parse_vector(s)?,
        None => default_x0(id, model.nx()),
    };
    check_len("--x0", &x, model.nx())?;
    let u = BoxSet::new(vec![u_lo; model.nu()], vec![u_hi; model.nu()])?;
    let d = BoxSet::new(vec![d_lo; model.nd()], vec![d_hi; model.nd()])?;
    let dirs = octagon_directions(model.nx());
    let tube = reach_tube(&model, &BoxSet::point(&x), &u, &d, n, &dirs)?;
    let names = model.states.names();
    let mut art = Artifacts::default();
    for (k, p) in tube.steps.iter().enumerate() {
        art.add(format!("tube_step_{k}.csv"), p.to_csv(&names));
    }
    art.add("tube_union.csv", tube.union.to_csv(&names));
    if let Some(reference) = appendix_polytope(id) {
        let cmp = compare_facets(&tube.union, &reference);
        art.json(
            "comparison.json",
            &json!({
                "note": "reference bounds were computed with input steering towards the safe set; ours is the open-loop tube, so the comparison is indicative",
                "facets": cmp,
            }),
        )?;
    }
    let config = json!({
        "benchmark": id.as_str(), "n": n, "x0": x, "u": [u_lo, u_hi], "d": [d_lo, d_hi], "template": "octagon",
    });
    Ok((config, art))
}

fn psafe(a: PsafeArgs, cfg: &FileConfig) -> Result<(Value, Artifacts)> {
    let cells: usize = cfg.pick(a.cells, "cells")?.unwrap_or(40);
    let actions: usize = cfg.pick(a.actions, "actions")?.unwrap_or(15);
    let horizon: usize = cfg.pick(a.horizon, "horizon")?.unwrap_or(6);
    if actions == 0 {
        bail!("--actions must be at least 1");
    }
    let kernel = build_kernel_cs1_2d()?;
    let spec = SafetySpec::new(vec![19.5, 19.5], vec![20.5, 20.5], horizon)?;
    let mdp = grid_abstraction(&kernel, &spec, &[cells, cells], &action_grid(15.0, 22.0, actions))?;
    let res = safety_value_iteration(&mdp, horizon);
    let (best, v_max) = res.best_cell();
    let mut art = Artifacts::default();
    art.add("values.csv", res.value_csv(&mdp, &kernel.state_names));
    art.add("policy.json", res.policy.to_json()? + "\n");
    art.json(
        "psafe.json",
        &json!({
            "formula": spec.formula,
            "max_value": v_max,
            "max_cell_center": mdp.grid.center(best),
            "eta_per_step": mdp.eta,
            "eta_total": mdp.eta * horizon as f64,
        }),
    )?;
    Ok((json!({ "cells": cells, "actions": actions, "horizon": horizon }), art))
}

fn synth(a: SynthArgs, cfg: &FileConfig) -> Result<(Value, Artifacts)> {
    let d = Cs2Config::default();
    let c = Cs2Config {
        cells: cfg.pick(a.cells, "cells")?.unwrap_or(d.cells),
        actions: cfg.pick(a.actions, "actions")?.unwrap_or(d.actions),
        horizon: d.horizon,
        mc_runs: cfg.pick(a.runs, "runs")?.unwrap_or(d.mc_runs),
        seed: cfg.seed(a.seed)?,
    };
    if c.actions == 0 || c.mc_runs == 0 {
        bail!("--actions and --runs must be at least 1");
    }
    let syn = synthesize_cs2(&c)?;
    let mut art = Artifacts::default();
    art.json("report.json", &syn.report)?;
    art.add("values.csv", syn.result.value_csv(&syn.mdp, &syn.kernel.state_names));
    art.add("policy.json", syn.result.policy.to_json()? + "\n");
    Ok((serde_json::to_value(&c)?, art))
}

fn hybrid_reach(a: HybridArgs, cfg: &FileConfig) -> Result<(Value, Artifacts)> {
    let x0: String = cfg.pick(a.x0, "x0")?.unwrap_or_else(|| "15,15".into());
    let width: f64 = cfg.pick(a.width, "width")?.unwrap_or(0.0);
    let horizon: f64 = cfg.pick(a.horizon, "horizon")?.unwrap_or(120.0);
    let step: f64 = cfg.pick(a.step, "step")?.unwrap_or(0.5);
    let recirculation = a.recirculation || cfg.pick(None, "recirculation")?.unwrap_or(false);
    let x = parse_vector(&x0)?;
    check_len("--x0", &x, 2)?;
    if !(width >= 0.0) || !(horizon >= 0.0) || !(step > 0.0) {
        bail!("--width and --horizon must be non-negative and --step positive");
    }
    let ha = build_hybrid_cs3(&HybridParams {
        recirculation,
        ..HybridParams::default()
    })?;
    let b = [
        Interval::new(x[0] - width, x[0] + width),
        Interval::new(x[1] - width, x[1] + width),
    ];
    let fp = hybrid::box_flowpipe(&ha, b, Mode::Off, horizon, step)?;
    let trace = hybrid::integrate(&ha, [x[0], x[1]], Mode::Off, horizon, 0.01)?;
    let mut art = Artifacts::default();
    art.add("flowpipe.csv", hybrid::flowpipe_csv(&fp)?);
    art.add("trace.csv", hybrid::trace_csv(&trace, 100)?);
    art.json(
        "summary.json",
        &json!({
            "modes_visited": fp.modes_visited().iter().map(|m| m.label()).collect::<Vec<_>>(),
            "trajectory_modes": trace.mode_sequence().iter().map(|m| m.label()).collect::<Vec<_>>(),
            "events": trace.events,
            "warnings": fp.warnings.iter().chain(&trace.warnings).collect::<Vec<_>>(),
        }),
    )?;
    let config = json!({
        "x0": x, "width": width, "horizon_minutes": horizon, "step_minutes": step, "recirculation": recirculation,
    });
    Ok((config, art))
}
