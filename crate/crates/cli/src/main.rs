use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use spectra_dd::approx::build_approx;
use spectra_dd::dual::Tolerance;
use spectra_dd::harness::{
    preset, random_convex_instance, run_experiment, verify_theorem2, ExperimentSpec, SolverEntry, SolverKind, StepKind,
};
use spectra_dd::io::{load_scenario, save_spectra, save_trace, ScenarioFile};
use spectra_dd::model::{user_rate, Scenario};
use spectra_dd::oracle::{brute_force_cwrs, DEFAULT_ORACLE_CAP};
use spectra_dd::pertone::GridSpec;

#[derive(Parser)]
#[command(name = "spectra-dd", version, about = "Dual decomposition spectrum balancing for DSL")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a scenario and print a JSON summary.
    Solve(SolveArgs),
    /// Brute-force grid optimum of a small scenario.
    Oracle(OracleArgs),
    /// Print a preset scenario as JSON.
    Preset {
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every solver of an experiment file.
    Experiment {
        spec: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Check the duality-gap and violation bounds on random convex instances.
    VerifyTheorem2(Theorem2Args),
}

#[derive(Args)]
struct ScenarioArgs {
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    scenario: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
}

impl ScenarioArgs {
    fn load(&self) -> Result<Scenario> {
        match (&self.scenario, &self.preset) {
            (Some(path), _) => load_scenario(path).with_context(|| format!("loading {}", path.display())),
            (None, Some(name)) => Ok(preset(name)?),
            (None, None) => bail!("either --scenario or --preset is required"),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum Primal {
    Last,
    Averaged,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    input: ScenarioArgs,
    #[arg(long, value_enum, default_value = "improved-direct")]
    solver: SolverArg,
    /// exhaustive | isb | fixedpoint | msdsb | newton
    #[arg(long)]
    pertone: Option<String>,
    /// Dual accuracy ε, relative to the objective scale unless --absolute.
    #[arg(long, default_value_t = 5e-4)]
    epsilon: f64,
    /// Complementarity tolerance ε_a, relative unless --absolute.
    #[arg(long, default_value_t = 5e-4)]
    epsilon_a: f64,
    /// Read --epsilon and --epsilon-a in objective units.
    #[arg(long)]
    absolute: bool,
    #[arg(long)]
    i_max: Option<usize>,
    /// Subgradient stepsize in units of objective scale / (Σ P^tot)².
    #[arg(long, default_value_t = 1e-2)]
    q_rel: f64,
    #[arg(long, value_enum, default_value = "decreasing")]
    step: StepArg,
    #[arg(long, value_enum, default_value = "off")]
    interleave: Switch,
    #[arg(long, value_enum)]
    primal: Option<Primal>,
    #[arg(long, default_value_t = 1.0)]
    grid_step_db: f64,
    #[arg(long, default_value_t = 60.0)]
    grid_floor_db: f64,
    #[arg(long, default_value_t = spectra_dd::pertone::TIE_REL_TOL)]
    tie_rel_tol: f64,
    #[arg(long)]
    outer_max: Option<usize>,
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    spectra: Option<PathBuf>,
    /// Write the concave surrogate expanded at the returned spectra.
    #[arg(long)]
    dump_approx: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Subgradient,
    ImprovedDirect,
    IcaDsb,
}

#[derive(Clone, Copy, ValueEnum)]
enum StepArg {
    Decreasing,
    Adaptive,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    input: ScenarioArgs,
    /// Evenly spaced power levels per user including 0; geometric grid when unset.
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    grid_step_db: f64,
    #[arg(long, default_value_t = 60.0)]
    grid_floor_db: f64,
    #[arg(long, default_value_t = DEFAULT_ORACLE_CAP)]
    cap: f64,
    #[arg(long)]
    spectra: Option<PathBuf>,
}

#[derive(Args)]
struct Theorem2Args {
    #[arg(long, default_value_t = 2)]
    users: usize,
    #[arg(long, default_value_t = 8)]
    tones: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    seeds: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.01")]
    epsilon: Vec<f64>,
}

fn solve(args: &SolveArgs) -> Result<bool> {
    let scenario = args.input.load()?;
    let mut entry = SolverEntry::new(
        "cli",
        match args.solver {
            SolverArg::Subgradient => SolverKind::Subgradient,
            SolverArg::ImprovedDirect => SolverKind::ImprovedDirect,
            SolverArg::IcaDsb => SolverKind::IcaDsb,
        },
    );
    entry.pertone = args.pertone.clone();
    entry.epsilon_rel = args.epsilon;
    entry.epsilon_a_rel = args.epsilon_a;
    entry.i_max = args.i_max;
    entry.q_rel = args.q_rel;
    entry.step = match args.step {
        StepArg::Decreasing => StepKind::Decreasing,
        StepArg::Adaptive => StepKind::Adaptive,
    };
    entry.interleave = matches!(args.interleave, Switch::On);
    entry.primal = args.primal.map(|p| match p {
        Primal::Last => "last".to_string(),
        Primal::Averaged => "averaged".to_string(),
    });
    entry.grid_step_db = args.grid_step_db;
    entry.grid_floor_db = args.grid_floor_db;
    entry.tie_rel_tol = args.tie_rel_tol;
    entry.outer_max = args.outer_max;

    let mut config = entry.config(&scenario)?;
    if args.absolute {
        config.epsilon = Tolerance::Absolute(args.epsilon);
        config.epsilon_a = Tolerance::Absolute(args.epsilon_a);
        config.validate()?;
    }
    let report = match entry.solver {
        SolverKind::Subgradient => {
            spectra_dd::dual::solve_subgradient(&scenario, &config, spectra_dd::dual::Objective::Direct)?
        }
        SolverKind::ImprovedDirect => {
            spectra_dd::dual::solve_improved(&scenario, &config, spectra_dd::dual::Objective::Direct)?
        }
        SolverKind::IcaDsb => spectra_dd::dual::solve_ica_dsb(&scenario, &config)?,
    };

    if let Some(path) = &args.trace {
        save_trace(path, scenario.n_users(), &report.trace)?;
    }
    if let Some(path) = &args.spectra {
        save_spectra(path, &scenario, &report.spectra)?;
    }
    if let Some(path) = &args.dump_approx {
        let approx = build_approx(&scenario, &report.spectra);
        write_json(path, &serde_json::to_value(&approx)?)?;
    }
    let rates: Vec<f64> = (0..scenario.n_users()).map(|n| user_rate(&scenario, &report.spectra, n)).collect();
    let summary = json!({
        "algorithm": report.algorithm,
        "converged": report.converged,
        "iterations": report.iterations,
        "i_max": report.i_max,
        "epsilon": report.epsilon,
        "epsilon_a": report.epsilon_a,
        "smoothness_c": report.smoothness_c,
        "lipschitz": report.lipschitz,
        "weighted_rate": report.weighted_rate,
        "user_rates": rates,
        "user_totals": report.spectra.totals(),
        "budgets": scenario.budgets(),
        "violation_norm": report.violation_norm,
        "lambda": report.lambda,
        "outer_iterations": report.outer.len(),
        "wall_time_s": report.wall_time.as_secs_f64(),
    });
    emit(&serde_json::to_string_pretty(&summary)?);
    Ok(true)
}

fn oracle(args: &OracleArgs) -> Result<bool> {
    let scenario = args.input.load()?;
    let grid = match args.levels {
        Some(levels) => GridSpec::Linear { levels },
        None => GridSpec::Geometric { floor_db: args.grid_floor_db, step_db: args.grid_step_db },
    };
    let result = brute_force_cwrs(&scenario, &grid, args.cap)?;
    if let Some(path) = &args.spectra {
        save_spectra(path, &scenario, &result.best_alloc)?;
    }
    let summary = json!({
        "best_value": result.best_value,
        "enumerated": result.enumerated,
        "user_totals": result.best_alloc.totals(),
        "budgets": scenario.budgets(),
    });
    emit(&serde_json::to_string_pretty(&summary)?);
    Ok(true)
}

fn experiment(spec_path: &Path, jobs: Option<usize>) -> Result<bool> {
    let text = fs::read_to_string(spec_path).with_context(|| format!("reading {}", spec_path.display()))?;
    let mut spec: ExperimentSpec = serde_json::from_str(&text).context("parsing experiment spec")?;
    if let Some(j) = jobs {
        spec.jobs = j;
    }
    let base = spec_path.parent().unwrap_or(Path::new("."));
    let summaries = run_experiment(&spec, base)?;
    for s in &summaries {
        match &s.error {
            Some(e) => eprintln!("{}: error: {e}", s.name),
            None => eprintln!(
                "{}: {} iterations, converged {}, weighted rate {:.6e}",
                s.name,
                s.iterations,
                s.converged,
                s.weighted_rate.unwrap_or(f64::NAN)
            ),
        }
    }
    Ok(summaries.iter().all(|s| s.error.is_none()))
}

fn theorem2(args: &Theorem2Args) -> Result<bool> {
    let mut all = true;
    let mut records = Vec::new();
    for &seed in &args.seeds {
        let scenario = random_convex_instance(args.users, args.tones, seed)?;
        for &eps in &args.epsilon {
            let r = verify_theorem2(&scenario, eps)?;
            eprintln!(
                "{} seed {seed} eps {eps}: gap {:.3e} violation {:.3e} (bound {:.3e}) i_max {}",
                if r.passed { "PASS" } else { "FAIL" },
                r.gap,
                r.violation,
                r.violation_bound,
                r.i_max
            );
            all &= r.passed;
            records.push(json!({ "seed": seed, "record": r }));
        }
    }
    emit(&serde_json::to_string_pretty(&records)?);
    Ok(all)
}

/// Prints to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let _ = writeln!(std::io::stdout(), "{text}");
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Solve(args) => solve(&args),
        Command::Oracle(args) => oracle(&args),
        Command::Preset { name, out } => {
            let file = ScenarioFile::from_scenario(&preset(&name)?);
            let text = file.to_json()?;
            match out {
                Some(path) => fs::write(&path, text + "\n")?,
                None => emit(&text),
            }
            Ok(true)
        }
        Command::Experiment { spec, jobs } => experiment(&spec, jobs),
        Command::VerifyTheorem2(args) => theorem2(&args),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
