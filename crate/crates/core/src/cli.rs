//! Command-line front end: plan, solve, simulate, experiment, sensitivity.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::bellman::{ode_residual, solve_bellman, verify_via_linear_ode, BellmanParams, SolverOptions};
use crate::diffusion::EwfParams;
use crate::error::{Error, Result};
use crate::model::{Config, Discipline, DispatchKind, PricingKind, MANHATTAN_CONFIG};
use crate::sim::{full_grid, run_experiment, ExperimentSummary, RunSpec, Scenario};
use crate::static_plan::{check_crp, nominal_plan, plan_residuals, StaticPlan};

#[derive(Debug, Parser)]
#[command(name = "heavyhail", version, about = "Dynamic pricing and dispatch for closed ride-hailing networks")]
pub struct Cli {
    /// Network config (JSON). Defaults to the built-in Manhattan instance.
    /// A run manifest is accepted too.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads for replications (default: all logical cores).
    #[arg(long, global = true, env = "HEAVYHAIL_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum Command {
    /// Solve the static planning problem and check resource pooling.
    Plan,
    /// Solve the Bellman equation and write the value function.
    Solve,
    /// Replications of one (pricing, dispatch) cell.
    Simulate(#[command(flatten)] SimArgs),
    /// Replications over the pricing × dispatch grid.
    Experiment(#[command(flatten)] SimArgs),
    /// Re-solve and re-run the grid for each value of a cost parameter.
    Sensitivity {
        #[command(flatten)]
        sim: SimArgs,
        /// `h=v1,v2,...` (buffer holding cost) or `c=v1,v2,...` (idleness cost).
        #[arg(long)]
        sweep: String,
    },
    /// Re-run the command recorded in a manifest.
    #[serde(skip)]
    Replay {
        manifest: PathBuf,
    },
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct SimArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub warmup: Option<f64>,
    /// Pricing policy; restricts the grid for `experiment`.
    #[arg(long)]
    pub pricing: Option<PricingKind>,
    /// Dispatch policy; restricts the grid for `experiment`.
    #[arg(long)]
    pub dispatch: Option<DispatchKind>,
    #[arg(long)]
    pub safety_stock: Option<u32>,
    #[arg(long)]
    pub discipline: Option<Discipline>,
    /// Fleet size; the travel rate is rescaled so the system stays in the
    /// same heavy-traffic regime.
    #[arg(long)]
    pub n: Option<u64>,
}

impl SimArgs {
    fn apply(&self, config: &mut Config) -> Result<()> {
        if let Some(s) = self.seed {
            config.sim.seed = s;
        }
        if let Some(r) = self.reps {
            config.sim.replications = r;
        }
        if let Some(h) = self.horizon {
            config.sim.horizon_hours = h;
        }
        if let Some(w) = self.warmup {
            config.sim.warmup_hours = w;
        }
        if let Some(p) = self.pricing {
            config.pricing = p;
        }
        if let Some(d) = self.dispatch {
            config.dispatch.policy = d;
        }
        if let Some(s) = self.safety_stock {
            config.dispatch.safety_stock = s;
        }
        if let Some(d) = self.discipline {
            config.dispatch.discipline = d;
        }
        if let Some(n) = self.n {
            config.rescale_fleet(n)?;
        }
        Ok(())
    }

    fn grid(&self) -> Vec<(PricingKind, DispatchKind)> {
        full_grid()
            .into_iter()
            .filter(|&(p, d)| {
                self.pricing.map_or(true, |x| x == p) && self.dispatch.map_or(true, |x| x == d)
            })
            .collect()
    }
}

/// Everything needed to reproduce an output directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_path: Option<PathBuf>,
    pub command: Command,
    /// Effective config after command-line overrides.
    pub config: Config,
    pub out_dir: PathBuf,
    pub version: String,
    pub wall_clock_seconds: f64,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// Process exit code for a failed run.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Parse(_) | Error::Io(_) | Error::Csv(_) | Error::Argument(_) => 1,
        Error::Invariant { .. } | Error::Dimension { .. } | Error::Domain { .. } | Error::Assumption(_) => 2,
        Error::Numerical(_) => 3,
    }
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    let Some(path) = path else {
        return Config::from_json(MANHATTAN_CONFIG);
    };
    let text = fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    if value.get("command").is_some() && value.get("config").is_some() {
        return Ok(serde_json::from_value(value["config"].clone())?);
    }
    Ok(serde_json::from_value(value)?)
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::Argument("--threads must be positive".into()));
        }
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let (config, command, config_path) = match &cli.command {
        Command::Replay { manifest } => {
            let m = RunManifest::load(manifest)?;
            (m.config, m.command, m.config_path)
        }
        other => {
            let mut config = load_config(cli.config.as_deref())?;
            match other {
                Command::Simulate(a) | Command::Experiment(a) | Command::Sensitivity { sim: a, .. } => {
                    let mut a = a.clone();
                    if matches!(other, Command::Experiment(_) | Command::Sensitivity { .. }) {
                        // Filters, not overrides of the configured cell.
                        a.pricing = None;
                        a.dispatch = None;
                    }
                    a.apply(&mut config)?;
                }
                _ => {}
            }
            (config, other.clone(), cli.config.clone())
        }
    };
    fs::create_dir_all(&cli.out)?;
    let start = Instant::now();
    match &command {
        Command::Plan => cmd_plan(&config, &cli.out)?,
        Command::Solve => cmd_solve(&config, &cli.out)?,
        Command::Simulate(_) => cmd_simulate(&config, &cli.out)?,
        Command::Experiment(a) => cmd_experiment(&config, &a.grid(), &cli.out)?,
        Command::Sensitivity { sim, sweep } => cmd_sensitivity(&config, &sim.grid(), sweep, &cli.out)?,
        Command::Replay { .. } => unreachable!("resolved above"),
    }
    let manifest = RunManifest {
        config_path,
        command,
        config,
        out_dir: cli.out.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    fs::write(
        cli.out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

#[derive(Serialize)]
struct PlanOutput<'a> {
    plan: &'a StaticPlan,
    crp: bool,
    crp_diagnostics: &'a [String],
    capacity_residual: f64,
    flow_residual: f64,
}

pub fn cmd_plan(config: &Config, out: &Path) -> Result<()> {
    let (model, econ, _) = config.resolve()?;
    let plan = nominal_plan(&model, &econ)?;
    let crp = check_crp(&plan.pools);
    let (cap, flow) = plan_residuals(&model, &plan.r, &plan.nu, &plan.x_star);
    fs::write(
        out.join("plan.json"),
        serde_json::to_string_pretty(&PlanOutput {
            plan: &plan,
            crp: crp.holds,
            crp_diagnostics: &crp.diagnostics,
            capacity_residual: cap,
            flow_residual: flow,
        })?,
    )?;
    println!("{:>4} {:>7} {:>7} {:>9} {:>6}", "j", "server", "buffer", "x*", "basic");
    for (j, act) in model.activities.iter().enumerate() {
        println!(
            "{:>4} {:>7} {:>7} {:>9.4} {:>6}",
            j + 1,
            act.server + 1,
            act.buffer + 1,
            plan.x_star[j],
            if plan.is_basic(j) { "yes" } else { "no" }
        );
    }
    println!("|Ax-e| = {cap:.2e}, |Rx-nu| = {flow:.2e}");
    if !crp.holds {
        for d in &crp.diagnostics {
            eprintln!("{d}");
        }
        return Err(Error::Assumption(format!(
            "complete resource pooling fails: {} buffer pools",
            plan.pools.buffers.len()
        )));
    }
    println!("single buffer pool");
    Ok(())
}

pub fn cmd_solve(config: &Config, out: &Path) -> Result<()> {
    let (model, econ, _) = config.resolve()?;
    let plan = nominal_plan(&model, &econ)?;
    let ewf = EwfParams::derive(&model, &econ, &plan)?;
    let params = BellmanParams::from(&ewf);
    let vf = solve_bellman(&params, &SolverOptions::default())?;
    let mut w = csv::Writer::from_path(out.join("value_function.csv"))?;
    w.write_record(["y", "v"])?;
    for (y, v) in vf.grid.iter().zip(&vf.v) {
        w.write_record([y.to_string(), v.to_string()])?;
    }
    w.flush()?;
    let check = verify_via_linear_ode(vf.beta_star, &vf.grid, &vf.v, &params);
    println!("beta*      = {:.10}", vf.beta_star);
    println!("h/eta      = {:.6}", vf.limit);
    println!("v(0)       = {:.6}", vf.v[0]);
    println!("iterations = {}", vf.iterations);
    println!("grid       = {} points up to y = {:.4e}", vf.grid.len(), vf.y_max);
    println!("residuals  = ode {:.2e}, linear {:.2e}", ode_residual(&vf, &params), check.max_residual);
    Ok(())
}

fn run_spec(config: &Config) -> RunSpec {
    RunSpec {
        horizon: config.sim.horizon_hours,
        warmup: config.sim.warmup_hours,
        reps: config.sim.replications,
        base_seed: config.sim.seed,
        safety_stock: config.dispatch.safety_stock,
        discipline: config.dispatch.discipline,
    }
}

fn scenario(config: &Config) -> Result<Scenario> {
    let (model, econ, _) = config.resolve()?;
    Scenario::build(model, econ, &SolverOptions::default())
}

fn write_replications(summary: &ExperimentSummary, path: &Path) -> Result<()> {
    let regions = summary
        .cells
        .first()
        .and_then(|c| c.reports.first())
        .map_or(0, |r| r.idle_fraction.len());
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = [
        "pricing",
        "dispatch",
        "rep",
        "seed",
        "avg_cost",
        "avg_cost_with_idleness",
        "revenue",
        "holding",
        "mean_workload",
    ]
    .map(String::from)
    .to_vec();
    header.extend((1..=regions).map(|i| format!("idle_{i}")));
    w.write_record(&header)?;
    for cell in &summary.cells {
        for (k, r) in cell.reports.iter().enumerate() {
            let mut row = vec![
                cell.pricing.name().to_string(),
                cell.dispatch.name().to_string(),
                k.to_string(),
                r.seed.to_string(),
                r.avg_cost.to_string(),
                r.avg_cost_with_idleness.to_string(),
                r.revenue.to_string(),
                r.holding.to_string(),
                r.mean_workload.to_string(),
            ];
            row.extend(r.idle_fraction.iter().map(|x| x.to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn print_summary(summary: &ExperimentSummary) {
    println!("{:<8} {:<8} {:>11} {:>9}", "pricing", "dispatch", "mean", "ci95");
    for c in &summary.cells {
        println!(
            "{:<8} {:<8} {:>11.2} {:>9.2}",
            c.pricing.name(),
            c.dispatch.name(),
            c.mean,
            c.half_width
        );
    }
}

pub fn cmd_simulate(config: &Config, out: &Path) -> Result<()> {
    let s = scenario(config)?;
    let summary = run_experiment(&s, &[(config.pricing, config.dispatch.policy)], &run_spec(config))?;
    write_replications(&summary, &out.join("replications.csv"))?;
    print_summary(&summary);
    Ok(())
}

#[derive(Serialize)]
struct TableRow {
    pricing: &'static str,
    dispatch: &'static str,
    mean: f64,
    ci_half: f64,
}

pub fn cmd_experiment(config: &Config, grid: &[(PricingKind, DispatchKind)], out: &Path) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Argument("empty policy grid".into()));
    }
    let s = scenario(config)?;
    let summary = run_experiment(&s, grid, &run_spec(config))?;
    let mut w = csv::Writer::from_path(out.join("table1.csv"))?;
    for c in &summary.cells {
        w.serialize(TableRow {
            pricing: c.pricing.name(),
            dispatch: c.dispatch.name(),
            mean: c.mean,
            ci_half: c.half_width,
        })?;
    }
    w.flush()?;
    write_replications(&summary, &out.join("replications.csv"))?;
    print_summary(&summary);
    Ok(())
}

/// Parse `name=v1,v2,...`.
pub fn parse_sweep(text: &str) -> Result<(String, Vec<f64>)> {
    let (name, values) = text
        .split_once('=')
        .ok_or_else(|| Error::Argument(format!("sweep `{text}` is not name=v1,v2,...")))?;
    let name = name.trim().to_string();
    if name != "h" && name != "c" {
        return Err(Error::Argument(format!("unknown sweep parameter `{name}` (use h or c)")));
    }
    let values = values
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| {
            v.parse::<f64>()
                .map_err(|_| Error::Argument(format!("bad sweep value `{v}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    if values.is_empty() {
        return Err(Error::Argument("empty sweep".into()));
    }
    Ok((name, values))
}

#[derive(Serialize)]
struct SensitivityRow<'a> {
    parameter: &'a str,
    value: f64,
    pricing: &'static str,
    dispatch: &'static str,
    mean: f64,
    ci_half: f64,
}

pub fn cmd_sensitivity(
    config: &Config,
    grid: &[(PricingKind, DispatchKind)],
    sweep: &str,
    out: &Path,
) -> Result<()> {
    let (name, values) = parse_sweep(sweep)?;
    if grid.is_empty() {
        return Err(Error::Argument("empty policy grid".into()));
    }
    for &v in &values {
        if name == "h" && !(v > config.costs.h0) {
            return Err(Error::Argument(format!(
                "holding cost {v} must exceed the travel cost {}",
                config.costs.h0
            )));
        }
        if name == "c" && !(v >= 0.0) {
            return Err(Error::Argument(format!("idleness cost {v} must be nonnegative")));
        }
    }
    let mut w = csv::Writer::from_path(out.join("sensitivity.csv"))?;
    println!("{:<4} {:>8} {:<8} {:<8} {:>11} {:>9}", "par", "value", "pricing", "dispatch", "mean", "ci95");
    for &v in &values {
        let mut cfg = config.clone();
        let costs = if name == "h" { &mut cfg.costs.h } else { &mut cfg.costs.c };
        costs.iter_mut().for_each(|x| *x = v);
        let s = scenario(&cfg)?;
        let summary = run_experiment(&s, grid, &run_spec(&cfg))?;
        for c in &summary.cells {
            w.serialize(SensitivityRow {
                parameter: &name,
                value: v,
                pricing: c.pricing.name(),
                dispatch: c.dispatch.name(),
                mean: c.mean,
                ci_half: c.half_width,
            })?;
            println!(
                "{:<4} {:>8} {:<8} {:<8} {:>11.2} {:>9.2}",
                name,
                v,
                c.pricing.name(),
                c.dispatch.name(),
                c.mean,
                c.half_width
            );
        }
    }
    w.flush()?;
    Ok(())
}
