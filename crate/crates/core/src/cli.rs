//! Command-line runner: argument parsing, config files, CSV artifacts.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::analytic::{
    merit_auto, merit_closed_form_for_shape, merit_quadrature_delay, QuadratureConfig,
};
use crate::error::{Error, Result};
use crate::feedback::{GainLaw, LoSpec, StrategySpec};
use crate::merit::table1;
use crate::modeshape::{ModeShape, ShapeKind};
use crate::optimizer::{
    delay_sweep, optimize_constant_gain, optimize_piecewise_gain, GainFamily, Objective,
    OptimizationResult, OptimizerConfig,
};
use crate::trajectory::{
    estimate_merit, simulate_protocol, steps_for_delay, SimulationConfig, DEFAULT_SEED,
};
use crate::validation::{run_all, ValidationConfig};

pub const SEED_ENV: &str = "DYNELAB_SEED";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "dynelab", version, about = "Adaptive dyne phase measurement laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// key=value file; flags override its entries
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// CSV output path (stdout when absent); the config echo goes to <out>.config.json
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    dt: Option<f64>,
    #[arg(long = "n-traj", global = true)]
    n_traj: Option<usize>,
    #[arg(long, global = true)]
    nodes: Option<usize>,
    #[arg(long = "panels-per-width", global = true)]
    panels_per_width: Option<usize>,
    #[arg(long, global = true)]
    tolerance: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exact and approximate merits of homodyne, heterodyne and ideal adaptive detection
    Table1(Common0),
    /// F̃ for one shape, gain strategy and delay
    Merit(MeritArgs),
    /// Monte Carlo ensemble: merit estimates and the heralded qubit state
    Simulate(SimulateArgs),
    /// Optimal gain for one shape and delay
    Optimize(OptimizeArgs),
    /// Optimal gains over a delay grid
    Sweep(SweepArgs),
    /// Cross-check suite; exits 1 on any failure
    Validate(ValidateArgs),
}

#[derive(Args, Debug)]
struct Common0 {
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct MeritArgs {
    #[arg(long)]
    shape: Option<String>,
    /// opt | const:<l> | pw:<l1>,<l2>,<t_l>
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    tau: Option<f64>,
    /// quad | closed | mc | auto
    #[arg(long)]
    method: Option<String>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    shape: Option<String>,
    /// homodyne[:phi0] | heterodyne[:delta] | adaptive:<strategy>[:tau=<t>]
    #[arg(long)]
    lo: Option<String>,
    /// overrides the delay of an adaptive LO
    #[arg(long)]
    tau: Option<f64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct OptimizeArgs {
    #[arg(long)]
    shape: Option<String>,
    #[arg(long)]
    tau: Option<f64>,
    /// const | pw
    #[arg(long)]
    family: Option<String>,
    /// closed | quad | auto (constant family only)
    #[arg(long)]
    objective: Option<String>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// all, or a comma list of shapes
    #[arg(long)]
    shapes: Option<String>,
    #[arg(long)]
    family: Option<String>,
    /// start:stop:step
    #[arg(long)]
    tau: Option<String>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    /// small ensembles and coarse sweep grids
    #[arg(long)]
    quick: bool,
    #[command(flatten)]
    common: Common,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RunConfig {
    pub subcommand: String,
    pub shapes: Vec<String>,
    pub strategy: Option<String>,
    pub lo: Option<String>,
    pub taus: Vec<f64>,
    pub method: Option<String>,
    pub family: Option<String>,
    pub simulation: SimulationConfig,
    pub quadrature: QuadratureConfig,
    pub seed: u64,
    pub quick: bool,
}

impl RunConfig {
    /// First 16 hex digits of SHA-256 over the JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

const CONFIG_KEYS: &[&str] = &[
    "shape", "shapes", "strategy", "lo", "tau", "method", "family", "objective", "seed", "dt",
    "n_traj", "nodes", "panels_per_width", "tolerance",
];

/// Parses flat `key = value` lines; `#` starts a comment.
pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("line {}: expected key=value, got '{raw}'", i + 1)))?;
        let k = k.trim().replace('-', "_");
        if !CONFIG_KEYS.contains(&k.as_str()) {
            return Err(Error::Parse(format!("line {}: unknown key '{k}'", i + 1)));
        }
        map.insert(k, v.trim().to_string());
    }
    Ok(map)
}

/// Parses `start:stop:step` into an inclusive grid.
pub fn parse_tau_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |x: &str| {
        x.trim()
            .parse::<f64>()
            .map_err(|_| Error::Parse(format!("bad number '{x}' in delay grid '{s}'")))
    };
    match parts.as_slice() {
        [one] => Ok(vec![num(one)?]),
        [a, b, step] => {
            let (a, b, step) = (num(a)?, num(b)?, num(step)?);
            if !(step > 0.0) || b < a || a < 0.0 {
                return Err(Error::Parse(format!("delay grid '{s}' needs 0 <= start <= stop and step > 0")));
            }
            let n = ((b - a) / step + 1e-9).floor() as usize;
            Ok((0..=n).map(|i| tidy(a + i as f64 * step)).collect())
        }
        _ => Err(Error::Parse(format!("delay grid must be start:stop:step, got '{s}'"))),
    }
}

/// Rounds grid arithmetic noise away (`0.1 * 3` becomes `0.3`).
pub fn tidy(x: f64) -> f64 {
    (x * 1e12).round() / 1e12
}

fn parse_shapes(s: &str) -> Result<Vec<ModeShape>> {
    if s.trim() == "all" {
        return Ok(ShapeKind::ALL.iter().map(|&k| ModeShape::normalized(k)).collect());
    }
    s.split(',').map(|x| x.parse()).collect()
}

struct Resolver {
    file: BTreeMap<String, String>,
}

impl Resolver {
    fn new(common: &Common) -> Result<Self> {
        let file = match &common.config {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
                parse_config_file(&text)?
            }
            None => BTreeMap::new(),
        };
        Ok(Resolver { file })
    }

    fn string(&self, flag: &Option<String>, key: &str) -> Option<String> {
        flag.clone().or_else(|| self.file.get(key).cloned())
    }

    fn parsed<T: std::str::FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.file.get(key) {
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Parse(format!("bad value '{v}' for '{key}'"))),
            None => Ok(None),
        }
    }

    /// Flag, then the environment, then the config file.
    fn seed(&self, flag: Option<u64>) -> Result<u64> {
        if let Some(s) = flag {
            return Ok(s);
        }
        if let Ok(v) = std::env::var(SEED_ENV) {
            return v
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("{SEED_ENV} must be an unsigned integer, got '{v}'")));
        }
        Ok(self.parsed(None, "seed")?.unwrap_or(DEFAULT_SEED))
    }

    fn simulation(&self, c: &Common) -> Result<SimulationConfig> {
        let mut sim = SimulationConfig::default();
        if let Some(dt) = self.parsed(c.dt, "dt")? {
            sim.dt = dt;
        }
        if let Some(n) = self.parsed(c.n_traj, "n_traj")? {
            sim.n_traj = n;
        }
        sim.base_seed = self.seed(c.seed)?;
        sim.validate()?;
        Ok(sim)
    }

    fn quadrature(&self, c: &Common) -> Result<QuadratureConfig> {
        let mut q = QuadratureConfig::default();
        if let Some(n) = self.parsed(c.nodes, "nodes")? {
            q.nodes = n;
        }
        if let Some(p) = self.parsed(c.panels_per_width, "panels_per_width")? {
            q.panels_per_width = p;
        }
        if let Some(t) = self.parsed(c.tolerance, "tolerance")? {
            q.tolerance = t;
        }
        q.validate()?;
        Ok(q)
    }
}

/// Rounds `τ` to the nearest multiple of `dt`.
pub fn round_delay(tau: f64, dt: f64) -> f64 {
    (tau / dt).round() * dt
}

struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
    failed: bool,
}

impl Table {
    fn new(header: &[&'static str]) -> Self {
        let mut header = header.to_vec();
        header.push("config_hash");
        header.push("error");
        Table {
            header,
            rows: Vec::new(),
            failed: false,
        }
    }

    fn push(&mut self, hash: &str, mut cells: Vec<String>, err: Option<&Error>) {
        cells.resize(self.header.len() - 2, String::new());
        cells.push(hash.to_string());
        cells.push(err.map(|e| e.to_string()).unwrap_or_default());
        self.failed |= err.is_some();
        self.rows.push(cells);
    }

    fn write(&self, out: &mut dyn Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Config(format!("cannot write CSV: {e}"));
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Config(format!("cannot write CSV: {e}")))?;
        Ok(())
    }
}

// NaN marks "not applicable" and is written as an empty cell
fn num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x}")
    }
}

fn echo_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".config.json");
    PathBuf::from(s)
}

fn emit(table: &Table, cfg: &RunConfig, out: &Option<PathBuf>) -> Result<()> {
    match out {
        Some(p) => {
            let mut f = std::fs::File::create(p)
                .map_err(|e| Error::Config(format!("cannot create {}: {e}", p.display())))?;
            table.write(&mut f)?;
            let echo = serde_json::json!({ "config_hash": cfg.hash(), "config": cfg });
            let text = serde_json::to_string_pretty(&echo).expect("config serializes");
            std::fs::write(echo_path(p), text + "\n")
                .map_err(|e| Error::Config(format!("cannot write config echo: {e}")))?;
        }
        None => {
            let stdout = std::io::stdout();
            table.write(&mut stdout.lock())?;
        }
    }
    Ok(())
}

fn base_config(name: &str, r: &Resolver, c: &Common) -> Result<RunConfig> {
    let simulation = r.simulation(c)?;
    Ok(RunConfig {
        subcommand: name.into(),
        shapes: Vec::new(),
        strategy: None,
        lo: None,
        taus: Vec::new(),
        method: None,
        family: None,
        seed: simulation.base_seed,
        simulation,
        quadrature: r.quadrature(c)?,
        quick: false,
    })
}

fn optimization_cells(r: &OptimizationResult) -> Vec<String> {
    vec![
        r.shape.name().into(),
        r.family.name().into(),
        num(r.tau),
        num(r.lambda1),
        num(r.lambda2),
        r.t_l.map(num).unwrap_or_default(),
        num(r.f_tilde_star),
        r.evaluations.to_string(),
        r.converged.to_string(),
        r.note.clone().unwrap_or_default(),
    ]
}

const OPT_HEADER: &[&str] = &[
    "shape", "family", "tau", "lambda1", "lambda2", "t_l", "f_tilde_star", "evals", "converged", "note",
];

fn parse_objective(s: &str) -> Result<Objective> {
    match s {
        "closed" => Ok(Objective::ClosedForm),
        "quad" => Ok(Objective::Quadrature),
        "auto" => Ok(Objective::Auto),
        _ => Err(Error::Parse(format!("unknown objective '{s}' (closed|quad|auto)"))),
    }
}

/// A usage problem; exit 2.
enum Outcome {
    Usage(Error),
}

fn usage<T>(r: Result<T>) -> std::result::Result<T, Outcome> {
    r.map_err(Outcome::Usage)
}

fn cmd_table1(a: Common0) -> std::result::Result<bool, Outcome> {
    let r = usage(Resolver::new(&a.common))?;
    let cfg = usage(base_config("table1", &r, &a.common))?;
    let hash = cfg.hash();
    let mut t = Table::new(&["measurement", "exact", "approx"]);
    for row in table1() {
        t.push(&hash, vec![row.measurement.into(), num(row.exact), num(row.approx)], None);
    }
    usage(emit(&t, &cfg, &a.common.out))?;
    Ok(t.failed)
}

fn cmd_merit(a: MeritArgs) -> std::result::Result<bool, Outcome> {
    let r = usage(Resolver::new(&a.common))?;
    let mut cfg = usage(base_config("merit", &r, &a.common))?;
    let shape: ModeShape = usage(r.string(&a.shape, "shape").unwrap_or_else(|| "rect".into()).parse())?;
    let strategy_text = r.string(&a.strategy, "strategy").unwrap_or_else(|| "opt".into());
    let spec: StrategySpec = usage(strategy_text.parse())?;
    let method = r.string(&a.method, "method").unwrap_or_else(|| "auto".into());
    if !["quad", "closed", "mc", "auto"].contains(&method.as_str()) {
        return Err(Outcome::Usage(Error::Parse(format!("unknown method '{method}' (quad|closed|mc|auto)"))));
    }
    let mut tau = usage(r.parsed(a.tau, "tau"))?.unwrap_or(0.0);
    if method == "mc" {
        tau = round_delay(tau, cfg.simulation.dt);
        cfg.simulation.delay_steps = usage(steps_for_delay(tau, cfg.simulation.dt))?;
    }
    cfg.shapes = vec![shape.to_string()];
    cfg.strategy = Some(spec.to_string());
    cfg.taus = vec![tau];
    cfg.method = Some(method.clone());
    let hash = cfg.hash();

    let mut t = Table::new(&["shape", "strategy", "tau", "method", "f_tilde", "error_estimate", "f_tilde_se"]);
    let g = usage(spec.bind(shape))?;
    let res: Result<(String, f64, f64, f64)> = match method.as_str() {
        "closed" => match g.law() {
            GainLaw::Constant(l) => merit_closed_form_for_shape(&shape, *l, tau)
                .map(|m| (m.method.name().to_string(), m.f_tilde, m.error_estimate, f64::NAN)),
            _ => Err(Error::ClosedFormOutOfRange("closed forms exist for constant gain only".into())),
        },
        "quad" => merit_quadrature_delay(&shape, &g, tau, &cfg.quadrature)
            .map(|m| (m.method.name().to_string(), m.f_tilde, m.error_estimate, f64::NAN)),
        "auto" => merit_auto(&shape, &g, tau, &cfg.quadrature)
            .map(|m| (m.method.name().to_string(), m.f_tilde, m.error_estimate, f64::NAN)),
        _ => crate::feedback::LoPhaseModel::adaptive(g, tau)
            .and_then(|lo| estimate_merit(&shape, &lo, &cfg.simulation))
            .map(|m| ("mc".to_string(), m.f_tilde_hat, f64::NAN, m.f_tilde_se)),
    };
    let lead = vec![shape.to_string(), spec.to_string(), num(tau)];
    match res {
        Ok((m, f, e, se)) => {
            let mut cells = lead;
            cells.extend([m, num(f), num(e), num(se)]);
            t.push(&hash, cells, None);
        }
        Err(e) => {
            let mut cells = lead;
            cells.push(method);
            t.push(&hash, cells, Some(&e));
        }
    }
    usage(emit(&t, &cfg, &a.common.out))?;
    Ok(t.failed)
}

fn cmd_simulate(a: SimulateArgs) -> std::result::Result<bool, Outcome> {
    let r = usage(Resolver::new(&a.common))?;
    let mut cfg = usage(base_config("simulate", &r, &a.common))?;
    let shape: ModeShape = usage(r.string(&a.shape, "shape").unwrap_or_else(|| "rect".into()).parse())?;
    let mut spec: LoSpec = usage(r.string(&a.lo, "lo").unwrap_or_else(|| "homodyne".into()).parse())?;
    if let Some(tau) = usage(r.parsed(a.tau, "tau"))? {
        spec = spec.with_delay(tau);
    }
    if let LoSpec::Adaptive { delay, .. } = spec {
        spec = spec.with_delay(round_delay(delay, cfg.simulation.dt));
    }
    let lo = usage(spec.bind(shape))?;
    cfg.simulation.delay_steps = usage(steps_for_delay(lo.delay(), cfg.simulation.dt))?;
    cfg.shapes = vec![shape.to_string()];
    cfg.lo = Some(lo.label());
    cfg.taus = vec![lo.delay()];
    let hash = cfg.hash();
    let mut t = Table::new(&[
        "shape", "lo", "tau", "n_traj", "f_hat", "f_se", "m2_hat", "m2_se", "m4_hat", "m4_se",
        "f_tilde_hat", "f_tilde_se", "rho00", "rho01_re", "rho01_im", "rho11",
    ]);
    let lead = vec![shape.to_string(), lo.label(), num(lo.delay()), cfg.simulation.n_traj.to_string()];
    match simulate_protocol(&shape, &lo, &cfg.simulation) {
        Ok(p) => {
            let m = p.merit;
            let mut cells = lead;
            cells.extend(
                [
                    m.f_hat, m.f_se, m.m2_hat, m.m2_se, m.m4_hat, m.m4_se, m.f_tilde_hat, m.f_tilde_se,
                    p.rho[0][0].re, p.rho[0][1].re, p.rho[0][1].im, p.rho[1][1].re,
                ]
                .map(num),
            );
            t.push(&hash, cells, None);
        }
        Err(e) => t.push(&hash, lead, Some(&e)),
    }
    usage(emit(&t, &cfg, &a.common.out))?;
    Ok(t.failed)
}

fn cmd_optimize(a: OptimizeArgs) -> std::result::Result<bool, Outcome> {
    let r = usage(Resolver::new(&a.common))?;
    let mut cfg = usage(base_config("optimize", &r, &a.common))?;
    let shape: ModeShape = usage(r.string(&a.shape, "shape").unwrap_or_else(|| "rect".into()).parse())?;
    let family: GainFamily = usage(r.string(&a.family, "family").unwrap_or_else(|| "const".into()).parse())?;
    let objective_text = r.string(&a.objective, "objective").unwrap_or_else(|| "auto".into());
    let objective = usage(parse_objective(&objective_text))?;
    let tau = usage(r.parsed(a.tau, "tau"))?.unwrap_or(0.0);
    cfg.shapes = vec![shape.to_string()];
    cfg.family = Some(family.name().into());
    cfg.method = Some(objective_text);
    cfg.taus = vec![tau];
    let hash = cfg.hash();
    let o = OptimizerConfig {
        quadrature: cfg.quadrature,
        ..Default::default()
    };
    let res = match family {
        GainFamily::Constant => optimize_constant_gain(&shape, tau, objective, &o),
        GainFamily::Piecewise => optimize_piecewise_gain(&shape, tau, &o, None),
    };
    let mut t = Table::new(OPT_HEADER);
    match res {
        Ok(x) => t.push(&hash, optimization_cells(&x), None),
        Err(e) => t.push(&hash, vec![shape.kind().name().into(), family.name().into(), num(tau)], Some(&e)),
    }
    usage(emit(&t, &cfg, &a.common.out))?;
    Ok(t.failed)
}

fn cmd_sweep(a: SweepArgs) -> std::result::Result<bool, Outcome> {
    let r = usage(Resolver::new(&a.common))?;
    let mut cfg = usage(base_config("sweep", &r, &a.common))?;
    let shapes = usage(parse_shapes(&r.string(&a.shapes, "shapes").unwrap_or_else(|| "all".into())))?;
    let family: GainFamily = usage(r.string(&a.family, "family").unwrap_or_else(|| "const".into()).parse())?;
    let taus = usage(parse_tau_grid(&r.string(&a.tau, "tau").unwrap_or_else(|| "0:0.5:0.025".into())))?;
    cfg.shapes = shapes.iter().map(|s| s.to_string()).collect();
    cfg.family = Some(family.name().into());
    cfg.taus = taus.clone();
    let hash = cfg.hash();
    let o = OptimizerConfig {
        quadrature: cfg.quadrature,
        ..Default::default()
    };
    // shapes are independent; rows keep input order
    let per_shape: Vec<Result<Vec<_>>> = shapes
        .par_iter()
        .map(|s| delay_sweep(s, family, &taus, &o))
        .collect();
    let mut t = Table::new(OPT_HEADER);
    for (s, pts) in shapes.iter().zip(per_shape) {
        let pts = usage(pts)?;
        for p in pts {
            match p.result {
                Ok(x) => t.push(&hash, optimization_cells(&x), None),
                Err(e) => t.push(&hash, vec![s.kind().name().into(), family.name().into(), num(p.tau)], Some(&e)),
            }
        }
    }
    usage(emit(&t, &cfg, &a.common.out))?;
    Ok(t.failed)
}

fn cmd_validate(a: ValidateArgs) -> std::result::Result<bool, Outcome> {
    let r = usage(Resolver::new(&a.common))?;
    let mut cfg = usage(base_config("validate", &r, &a.common))?;
    cfg.quick = a.quick;
    let mut v = if a.quick { ValidationConfig::quick() } else { ValidationConfig::full() };
    v.seed = cfg.seed;
    let hash = cfg.hash();
    let o = OptimizerConfig {
        quadrature: cfg.quadrature,
        ..Default::default()
    };
    let checks = run_all(&v, &cfg.quadrature, &o);
    let mut t = Table::new(&["group", "check", "status", "value", "bound", "detail"]);
    for c in &checks {
        eprintln!("{} [{}] {}", if c.passed { "PASS" } else { "FAIL" }, c.group, c.name);
        t.push(
            &hash,
            vec![
                c.group.clone(),
                c.name.clone(),
                if c.passed { "PASS" } else { "FAIL" }.into(),
                num(c.value),
                num(c.bound),
                c.detail.clone(),
            ],
            None,
        );
    }
    usage(emit(&t, &cfg, &a.common.out))?;
    Ok(checks.iter().any(|c| !c.passed))
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let res = match cli.command {
        Command::Table1(a) => cmd_table1(a),
        Command::Merit(a) => cmd_merit(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Optimize(a) => cmd_optimize(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match res {
        Ok(false) => EXIT_OK,
        Ok(true) => EXIT_FAILURE,
        Err(Outcome::Usage(e)) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_parsing() {
        let m = parse_config_file("# run\nshape = bilat\n n-traj=100 # small\n\n").unwrap();
        assert_eq!(m["shape"], "bilat");
        assert_eq!(m["n_traj"], "100");
        assert!(parse_config_file("bogus = 1").is_err());
        assert!(parse_config_file("shape").is_err());
    }

    #[test]
    fn tau_grid() {
        let g = parse_tau_grid("0:0.5:0.025").unwrap();
        assert_eq!(g.len(), 21);
        assert!((g[20] - 0.5).abs() < 1e-12);
        assert_eq!(parse_tau_grid("0.1").unwrap(), vec![0.1]);
        assert!(parse_tau_grid("0.5:0:0.1").is_err());
        assert!(parse_tau_grid("0:1:0").is_err());
        assert!(parse_tau_grid("0:1").is_err());
    }

    #[test]
    fn delay_rounding() {
        assert_eq!(round_delay(0.10004, 1e-3), 100.0 * 1e-3);
        assert!(steps_for_delay(round_delay(0.0123456, 1e-3), 1e-3).is_ok());
    }

    #[test]
    fn hash_tracks_config() {
        let base = RunConfig {
            subcommand: "merit".into(),
            shapes: vec!["rect".into()],
            strategy: None,
            lo: None,
            taus: vec![0.0],
            method: None,
            family: None,
            simulation: SimulationConfig::default(),
            quadrature: QuadratureConfig::default(),
            seed: 1,
            quick: false,
        };
        let h = base.hash();
        assert_eq!(h.len(), 16);
        assert_eq!(h, base.clone().hash());
        let other = RunConfig { seed: 2, ..base };
        assert_ne!(h, other.hash());
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["dynelab", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["dynelab", "merit", "--shape", "triangle"]), EXIT_USAGE);
        assert_eq!(run(["dynelab", "merit", "--method", "guess"]), EXIT_USAGE);
    }
}
