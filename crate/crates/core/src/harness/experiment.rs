use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dual::{
    solve_ica_dsb, solve_improved, solve_subgradient, IterationBudget, Objective, PrimalChoice, SolverConfig,
    SolverReport, StepRule, Tolerance,
};
use crate::error::{Error, Result};
use crate::io::{load_scenario, save_spectra, save_trace};
use crate::model::{user_rate, Scenario};
use crate::pertone::{GridSpec, PerToneMethod, TIE_REL_TOL};

use super::{preset, random_convex_instance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioSource {
    Preset(String),
    /// Path to a scenario JSON, relative to the experiment file.
    File(PathBuf),
    Random { users: usize, tones: usize, seed: u64 },
}

impl ScenarioSource {
    pub fn load(&self, base: &Path) -> Result<Scenario> {
        match self {
            ScenarioSource::Preset(name) => preset(name),
            ScenarioSource::File(p) => load_scenario(&base.join(p)),
            ScenarioSource::Random { users, tones, seed } => random_convex_instance(*users, *tones, *seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    Subgradient,
    ImprovedDirect,
    IcaDsb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepKind {
    #[default]
    Decreasing,
    Adaptive,
}

fn default_rel() -> f64 {
    5e-4
}
fn default_floor() -> f64 {
    60.0
}
fn default_step_db() -> f64 {
    1.0
}
fn default_q_rel() -> f64 {
    1e-2
}
fn default_tie() -> f64 {
    TIE_REL_TOL
}
fn default_feas() -> f64 {
    1e-3
}

/// One solver run of an experiment. Unset fields take the library defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverEntry {
    pub name: String,
    pub solver: SolverKind,
    /// exhaustive | isb | fixedpoint | msdsb | newton; defaults to msdsb (newton for ica-dsb).
    #[serde(default)]
    pub pertone: Option<String>,
    #[serde(default = "default_rel")]
    pub epsilon_rel: f64,
    #[serde(default = "default_rel")]
    pub epsilon_a_rel: f64,
    #[serde(default)]
    pub i_max: Option<usize>,
    #[serde(default)]
    pub step: StepKind,
    /// Initial stepsize as a multiple of objective scale / (Σ_n P^{n,tot})².
    #[serde(default = "default_q_rel")]
    pub q_rel: f64,
    #[serde(default)]
    pub interleave: bool,
    #[serde(default)]
    pub primal: Option<String>,
    #[serde(default = "default_floor")]
    pub grid_floor_db: f64,
    #[serde(default = "default_step_db")]
    pub grid_step_db: f64,
    #[serde(default = "default_tie")]
    pub tie_rel_tol: f64,
    #[serde(default = "default_feas")]
    pub feas_tol: f64,
    #[serde(default)]
    pub outer_max: Option<usize>,
}

impl SolverEntry {
    pub fn new(name: &str, solver: SolverKind) -> Self {
        Self {
            name: name.to_string(),
            solver,
            pertone: None,
            epsilon_rel: default_rel(),
            epsilon_a_rel: default_rel(),
            i_max: None,
            step: StepKind::Decreasing,
            q_rel: default_q_rel(),
            interleave: false,
            primal: None,
            grid_floor_db: default_floor(),
            grid_step_db: default_step_db(),
            tie_rel_tol: default_tie(),
            feas_tol: default_feas(),
            outer_max: None,
        }
    }

    pub fn config(&self, scenario: &Scenario) -> Result<SolverConfig> {
        let grid = GridSpec::Geometric { floor_db: self.grid_floor_db, step_db: self.grid_step_db };
        let default_pertone = if self.solver == SolverKind::IcaDsb { "newton" } else { "msdsb" };
        let pertone = parse_pertone(self.pertone.as_deref().unwrap_or(default_pertone), grid)?;
        let q_unit = scenario.objective_scale() / scenario.budgets().iter().sum::<f64>().powi(2);
        let q = self.q_rel * q_unit;
        let primal = match self.primal.as_deref() {
            None => None,
            Some("last") => Some(PrimalChoice::Last),
            Some("averaged") => Some(PrimalChoice::Averaged),
            Some(other) => return Err(Error::Config(format!("unknown primal choice {other:?}"))),
        };
        let defaults = SolverConfig::default();
        let config = SolverConfig {
            epsilon: Tolerance::Relative(self.epsilon_rel),
            epsilon_a: Tolerance::Relative(self.epsilon_a_rel),
            i_max: self.i_max.map_or(IterationBudget::Auto, IterationBudget::Fixed),
            step: match self.step {
                StepKind::Decreasing => StepRule::Decreasing { q },
                StepKind::Adaptive => StepRule::Adaptive { q },
            },
            interleaving: self.interleave,
            pertone,
            primal,
            feas_tol: self.feas_tol,
            tie_rel_tol: self.tie_rel_tol,
            outer_max: self.outer_max.unwrap_or(defaults.outer_max),
            ..defaults
        };
        config.validate()?;
        Ok(config)
    }

    pub fn run(&self, scenario: &Scenario) -> Result<SolverReport> {
        let config = self.config(scenario)?;
        match self.solver {
            SolverKind::Subgradient => solve_subgradient(scenario, &config, Objective::Direct),
            SolverKind::ImprovedDirect => solve_improved(scenario, &config, Objective::Direct),
            SolverKind::IcaDsb => solve_ica_dsb(scenario, &config),
        }
    }
}

/// Per-tone solver from its CLI name.
pub fn parse_pertone(name: &str, grid: GridSpec) -> Result<PerToneMethod> {
    Ok(match name {
        "exhaustive" => PerToneMethod::Exhaustive { grid, cap: 1e7 },
        "isb" => PerToneMethod::CoordinateDescent { grid, max_passes: 100 },
        "fixedpoint" => PerToneMethod::fixed_point(),
        "msdsb" => PerToneMethod::multistart(),
        "newton" => PerToneMethod::Newton,
        other => return Err(Error::Config(format!("unknown per-tone solver {other:?}"))),
    })
}

fn default_jobs() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub scenario: ScenarioSource,
    pub solvers: Vec<SolverEntry>,
    pub output_dir: PathBuf,
    /// Solver runs executed concurrently.
    #[serde(default = "default_jobs")]
    pub jobs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverSummary {
    pub name: String,
    pub algorithm: Option<String>,
    pub converged: bool,
    pub iterations: usize,
    /// First iteration whose complementarity residuals were all below ε_a.
    pub iterations_to_eps_a: Option<usize>,
    pub weighted_rate: Option<f64>,
    pub user_rates: Vec<f64>,
    pub user_totals: Vec<f64>,
    pub violation_norm: Option<f64>,
    pub lambda: Vec<f64>,
    pub trace_csv: Option<String>,
    pub spectra_csv: Option<String>,
    pub wall_time_s: f64,
    pub error: Option<String>,
}

fn summarize(entry: &SolverEntry, scenario: &Scenario, out: &Path) -> SolverSummary {
    let mut summary = SolverSummary {
        name: entry.name.clone(),
        algorithm: None,
        converged: false,
        iterations: 0,
        iterations_to_eps_a: None,
        weighted_rate: None,
        user_rates: Vec::new(),
        user_totals: Vec::new(),
        violation_norm: None,
        lambda: Vec::new(),
        trace_csv: None,
        spectra_csv: None,
        wall_time_s: 0.0,
        error: None,
    };
    let result = entry.run(scenario).and_then(|report| {
        let trace_name = format!("{}.trace.csv", entry.name);
        let spectra_name = format!("{}.spectra.csv", entry.name);
        save_trace(&out.join(&trace_name), scenario.n_users(), &report.trace)?;
        save_spectra(&out.join(&spectra_name), scenario, &report.spectra)?;
        Ok((report, trace_name, spectra_name))
    });
    match result {
        Ok((report, trace_name, spectra_name)) => {
            summary.algorithm = Some(report.algorithm.to_string());
            summary.converged = report.converged;
            summary.iterations = report.iterations;
            summary.iterations_to_eps_a =
                report.trace.iter().position(|r| r.max_complementarity() < report.epsilon_a).map(|i| i + 1);
            summary.weighted_rate = Some(report.weighted_rate);
            summary.user_rates = (0..scenario.n_users()).map(|n| user_rate(scenario, &report.spectra, n)).collect();
            summary.user_totals = report.spectra.totals();
            summary.violation_norm = Some(report.violation_norm);
            summary.lambda = report.lambda.clone();
            summary.trace_csv = Some(trace_name);
            summary.spectra_csv = Some(spectra_name);
            summary.wall_time_s = report.wall_time.as_secs_f64();
        }
        Err(e) => summary.error = Some(e.to_string()),
    }
    summary
}

/// Runs every solver, writing `<name>.trace.csv`, `<name>.spectra.csv` and
/// `summary.json` into the output directory. A failing solver is recorded in
/// the summary and does not stop the others.
pub fn run_experiment(spec: &ExperimentSpec, base: &Path) -> Result<Vec<SolverSummary>> {
    if spec.solvers.is_empty() {
        return Err(Error::Config("an experiment needs at least one solver".into()));
    }
    let mut names: Vec<&str> = spec.solvers.iter().map(|s| s.name.as_str()).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config("solver names must be unique".into()));
    }
    let scenario = spec.scenario.load(base)?;
    let out = base.join(&spec.output_dir);
    fs::create_dir_all(&out)?;
    let summaries: Vec<SolverSummary> = if spec.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(spec.jobs)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        pool.install(|| spec.solvers.par_iter().map(|e| summarize(e, &scenario, &out)).collect())
    } else {
        spec.solvers.iter().map(|e| summarize(e, &scenario, &out)).collect()
    };
    fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summaries)? + "\n")?;
    Ok(summaries)
}
