//! Command-line driver. Exit status: 0 success, 1 failed check or run
//! error, 2 usage or configuration error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::{validate_config, Profile, RunConfig};
use crate::error::{Error, Result};
use crate::io::{self, Manifest};
use crate::lattice::StateVector;
use crate::mcstats;
use crate::rate::{self, QuasipotentialOptions};
use crate::skeleton;
use crate::simulate::simulate_path;
use crate::verify::{self, CheckId, CheckInstance};

#[derive(Debug, Parser)]
#[command(name = "lattice-ldp", version, about = "Stochastic lattice reaction-diffusion: simulation, rate functions, bound checks")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long, env = "LATTICE_LDP_OUT_DIR", default_value = "out")]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Ensemble of stochastic paths: first trajectory and moment summary.
    Simulate(Common),
    /// Noise-free solution and the equilibrium.
    Skeleton(Common),
    /// Minimum action from u0 to the target ball.
    Rate {
        #[command(flatten)]
        common: Common,
        /// Number (constant field) or profile expression.
        #[arg(long)]
        target: Option<String>,
    },
    /// Quasipotential of the target relative to the equilibrium.
    Quasipotential {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        target: Option<String>,
    },
    /// Long-run samples of the invariant measure.
    Invariant(Common),
    /// Check bounds against simulation; exits 1 if any check fails.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Check id; repeatable. All checks when absent.
        #[arg(long = "check")]
        checks: Vec<String>,
    },
    /// Parse and validate the configuration, print derived constants.
    Validate(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Simulate(c) | Command::Skeleton(c) | Command::Invariant(c) | Command::Validate(c) => c,
            Command::Rate { common, .. } | Command::Quasipotential { common, .. } | Command::Verify { common, .. } => common,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Skeleton(_) => "skeleton",
            Command::Rate { .. } => "rate",
            Command::Quasipotential { .. } => "quasipotential",
            Command::Invariant(_) => "invariant",
            Command::Verify { .. } => "verify",
            Command::Validate(_) => "validate",
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidConfig(_) | Error::Parse { .. } | Error::Hypothesis(_) | Error::UnknownCheck(_) => 2,
        _ => 1,
    }
}

/// Parses `argv` (program name first) and runs the subcommand.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let command_line = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let run = || execute(&cli, command_line);
    let outcome = match cli.workers {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(run),
            Err(e) => {
                eprintln!("error: cannot start {n} workers: {e}");
                return 2;
            }
        },
        None => run(),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

struct Outputs<'a> {
    dir: &'a Path,
    written: Vec<String>,
}

impl Outputs<'_> {
    fn path(&mut self, name: &str) -> PathBuf {
        self.written.push(name.to_string());
        self.dir.join(name)
    }
}

fn load(common: &Common) -> Result<RunConfig> {
    let mut cfg = validate_config(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.sim.base_seed = seed;
        cfg.action.seed = seed;
    }
    if let Some(paths) = common.paths {
        cfg.sim.n_paths = paths;
    }
    Ok(cfg)
}

fn target_state(cfg: &RunConfig, flag: Option<&String>) -> Result<StateVector> {
    let shape = cfg.params.shape();
    match flag {
        Some(text) => Profile::parse(text)
            .and_then(|p| p.build(shape))
            .map_err(|e| Error::InvalidConfig(vec![format!("--target: {e}")])),
        None => cfg
            .target
            .clone()
            .ok_or_else(|| Error::InvalidConfig(vec!["no target: pass --target or set rate.target_profile".into()])),
    }
}

#[derive(Serialize)]
struct ActionReport<'a> {
    action: f64,
    horizon: f64,
    delta: f64,
    terminal_gap: f64,
    converged: bool,
    iterations: usize,
    penalty: f64,
    target: &'a [f64],
}

impl<'a> ActionReport<'a> {
    fn new(r: &rate::ActionResult, target: &'a StateVector) -> Self {
        Self {
            action: r.action,
            horizon: r.horizon,
            delta: r.delta,
            terminal_gap: r.terminal_gap,
            converged: r.converged,
            iterations: r.iterations,
            penalty: r.penalty,
            target: target.values(),
        }
    }
}

fn execute(cli: &Cli, command_line: Vec<String>) -> Result<i32> {
    let start = Instant::now();
    let common = cli.command.common();
    let cfg = load(common)?;
    std::fs::create_dir_all(&common.out_dir)?;
    let mut out = Outputs {
        dir: &common.out_dir,
        written: Vec::new(),
    };
    let p = &cfg.params;
    let json = matches!(common.format, Format::Json);
    let mut code = 0;

    match &cli.command {
        Command::Validate(_) => {
            println!("configuration ok: {}", common.config.display());
            for c in &cfg.validation.conditions {
                println!("  [{}] {}: {}", if c.passed { "ok" } else { "FAIL" }, c.name, c.detail);
            }
            println!("L_sigma = {:.10}", p.l_sigma());
            println!("dt_max = {:.10}", p.dt_max());
            println!("dt = {}", cfg.sim.dt);
            println!("lambda > gamma: {}", p.strong_dissipativity());
            if p.epsilon > 0.0 {
                println!("delta = {}", mcstats::choose_delta(p));
            }
            io::write_json(&cfg.validation, &out.path("validation.json"))?;
        }
        Command::Simulate(_) => {
            let traj = simulate_path(p, &cfg.u0, &cfg.sim, None, 0)?;
            let m = p.shape().radius();
            let ks: Vec<usize> = [m / 4, m / 2, (3 * m).div_ceil(4)].into_iter().collect();
            let summary = mcstats::estimate_moments(p, &cfg.u0, &cfg.sim, &ks)?;
            if json {
                io::write_json(&traj, &out.path("trajectory.json"))?;
                io::write_json(&summary, &out.path("summary.json"))?;
            } else {
                io::write_trajectory_csv(&traj, std::fs::File::create(out.path("trajectory.csv"))?)?;
                io::write_summary_csv(&summary, std::fs::File::create(out.path("summary.csv"))?)?;
            }
            let last = summary.times.len() - 1;
            println!(
                "{} paths to t = {}: E|u|^2 = {:.6} +- {:.2e}",
                cfg.sim.n_paths, cfg.sim.t_end, summary.mean_norm_sq[last], summary.se_norm_sq[last]
            );
        }
        Command::Skeleton(_) => {
            let traj = skeleton::solve_limit_with(p, &cfg.u0, cfg.sim.t_end, cfg.sim.dt, skeleton::Integrator::Rk4, cfg.sim.save_stride)?;
            if json {
                io::write_json(&traj, &out.path("skeleton.json"))?;
            } else {
                io::write_trajectory_csv(&traj, std::fs::File::create(out.path("skeleton.csv"))?)?;
            }
            if p.strong_dissipativity() {
                let u_star = skeleton::find_equilibrium(p)?;
                io::write_sites_csv(&[("equilibrium", &u_star)], std::fs::File::create(out.path("equilibrium.csv"))?)?;
                println!("equilibrium |u*| = {:.10}", u_star.norm());
            }
            println!("|u(T)| = {:.10}", traj.final_state().norm());
        }
        Command::Rate { target, .. } => {
            let v = target_state(&cfg, target.as_ref())?;
            let r = rate::minimize_action(p, &cfg.u0, &v, cfg.rate_horizon, cfg.rate_delta, &cfg.action)?;
            io::write_json(&ActionReport::new(&r, &v), &out.path("action.json"))?;
            io::write_control_csv(&r.control, std::fs::File::create(out.path("control.csv"))?)?;
            io::write_trajectory_csv(&r.trajectory, std::fs::File::create(out.path("controlled_path.csv"))?)?;
            println!(
                "action = {:.10} (gap {:.3e}, converged {})",
                r.action, r.terminal_gap, r.converged
            );
            if !r.converged {
                code = 1;
            }
        }
        Command::Quasipotential { target, .. } => {
            let v = target_state(&cfg, target.as_ref())?;
            let opts = QuasipotentialOptions {
                action: cfg.action,
                horizons: cfg.horizons.clone(),
                ..QuasipotentialOptions::default()
            };
            let q = rate::quasipotential(p, &v, &opts)?;
            #[derive(Serialize)]
            struct Report<'a> {
                quasipotential: f64,
                equilibrium: &'a [f64],
                best: Option<ActionReport<'a>>,
                per_horizon: Vec<ActionReport<'a>>,
            }
            let report = Report {
                quasipotential: q.value,
                equilibrium: q.equilibrium.values(),
                best: q.best.as_ref().map(|r| ActionReport::new(r, &v)),
                per_horizon: q.per_horizon.iter().map(|r| ActionReport::new(r, &v)).collect(),
            };
            io::write_json(&report, &out.path("quasipotential.json"))?;
            if let Some(best) = &q.best {
                io::write_control_csv(&best.control, std::fs::File::create(out.path("control.csv"))?)?;
                io::write_trajectory_csv(&best.trajectory, std::fs::File::create(out.path("controlled_path.csv"))?)?;
            }
            println!("quasipotential = {:.10}", q.value);
            if q.best.as_ref().is_some_and(|b| !b.converged) {
                code = 1;
            }
        }
        Command::Invariant(_) => {
            let s = mcstats::sample_invariant(p, &cfg.sim, &cfg.invariant)?;
            io::write_sites_csv(
                &[("mean", &s.mean), ("mean_se", &s.mean_std_error), ("variance", &s.variance)],
                std::fs::File::create(out.path("invariant_sites.csv"))?,
            )?;
            io::write_json(&s, &out.path("invariant.json"))?;
            println!("{} samples after burn-in {}, thinning {}", s.n_samples, s.burn_in, s.thin);
        }
        Command::Verify { checks, .. } => {
            let explicit = !checks.is_empty();
            let ids: Vec<CheckId> = if explicit {
                checks.iter().map(|c| c.parse()).collect::<Result<_>>()?
            } else {
                CheckId::ALL.to_vec()
            };
            let inst = CheckInstance {
                params: cfg.params.clone(),
                u0: cfg.u0.clone(),
                sim: cfg.sim.clone(),
                options: cfg.check.clone(),
            };
            for id in ids {
                match verify::run_check(id, &inst) {
                    Ok(report) => {
                        println!("{}", report.summary_line());
                        io::write_json(&report, &out.path(&format!("verify_{id}.json")))?;
                        io::write_text(&report.to_text(), &out.path(&format!("verify_{id}.txt")))?;
                        if !report.passed {
                            code = 1;
                        }
                    }
                    Err(e @ (Error::Hypothesis(_) | Error::Oracle(_))) if !explicit => {
                        println!("SKIP {id:<12} {e}");
                    }
                    Err(e) => return Err(e),
                }
            }
        }
    }

    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command_line,
        subcommand: cli.command.name().into(),
        config_path: common.config.display().to_string(),
        config: cfg.entries.clone(),
        base_seed: cfg.sim.base_seed,
        n_paths: cfg.sim.n_paths,
        workers: cli.workers,
        outputs: out.written.clone(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
    };
    io::write_json(&manifest, &common.out_dir.join("manifest.json"))?;
    Ok(code)
}
