use serde::Serialize;

use crate::approx::build_approx;
use crate::dual::{
    dual_value, solve_improved, solve_subgradient, IterationBudget, Objective, SolverConfig, StepRule, Tolerance,
};
use crate::error::Result;
use crate::model::Scenario;
use crate::pertone::{PerToneMethod, ProxConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RaceReport {
    /// Best (lowest) unsmoothed dual value seen by any run, the reference optimum.
    pub g_star: f64,
    pub accuracy: f64,
    /// Stepsize unit: objective scale / (Σ_n P^{n,tot})².
    pub q_unit: f64,
    pub improved_cap: usize,
    /// Multiplier evaluations until |g(λ^i) − g*| ≤ accuracy·|g*|.
    pub improved_iterations: Option<usize>,
    pub subgradient_cap: usize,
    /// (q, evaluations to accuracy) for each stepsize.
    pub subgradient: Vec<(f64, Option<usize>)>,
    pub improved_dual: Vec<f64>,
    pub subgradient_dual: Vec<Vec<f64>>,
}

fn first_within(values: &[f64], g_star: f64, accuracy: f64) -> Option<usize> {
    values.iter().position(|g| (g - g_star).abs() <= accuracy * g_star.abs()).map(|i| i + 1)
}

/// Dual accuracy race on the surrogate expanded at the flat spectra: the
/// smoothed scheme against δ = q/i subgradient runs for `q_multipliers` × unit.
pub fn convergence_race(
    scenario: &Scenario,
    q_multipliers: &[f64],
    accuracy: f64,
    improved_cap: usize,
    subgradient_cap: usize,
) -> Result<RaceReport> {
    let approx = build_approx(scenario, &scenario.flat_allocation());
    let objective = Objective::Convex(&approx);
    let g_of = |lambda: &[f64]| dual_value(scenario, objective, lambda, &ProxConfig::off(), &PerToneMethod::Newton);

    let base = SolverConfig { pertone: PerToneMethod::Newton, ..SolverConfig::default() };
    let improved = solve_improved(
        scenario,
        &SolverConfig {
            epsilon: Tolerance::Relative(accuracy),
            i_max: IterationBudget::Fixed(improved_cap.saturating_sub(1)),
            ..base.clone()
        },
        objective,
    )?;
    let improved_dual = improved.trace.iter().map(|r| g_of(&r.lambda)).collect::<Result<Vec<_>>>()?;

    let reference = solve_improved(
        scenario,
        &SolverConfig {
            epsilon: Tolerance::Relative(accuracy / 20.0),
            i_max: IterationBudget::Fixed(10 * improved_cap),
            ..base.clone()
        },
        objective,
    )?;
    let g_ref = g_of(&reference.lambda)?;

    let q_unit = scenario.objective_scale() / scenario.budgets().iter().sum::<f64>().powi(2);
    let mut subgradient_dual = Vec::new();
    for &m in q_multipliers {
        let report = solve_subgradient(
            scenario,
            &SolverConfig {
                step: StepRule::Decreasing { q: m * q_unit },
                i_max: IterationBudget::Fixed(subgradient_cap.saturating_sub(1)),
                ..base.clone()
            },
            objective,
        )?;
        subgradient_dual.push(report.trace.iter().map(|r| r.dual_value).collect::<Vec<_>>());
    }

    let g_star = improved_dual
        .iter()
        .chain(subgradient_dual.iter().flatten())
        .copied()
        .fold(g_ref, f64::min);
    Ok(RaceReport {
        g_star,
        accuracy,
        q_unit,
        improved_cap,
        improved_iterations: first_within(&improved_dual, g_star, accuracy),
        subgradient_cap,
        subgradient: q_multipliers
            .iter()
            .zip(&subgradient_dual)
            .map(|(&m, d)| (m * q_unit, first_within(d, g_star, accuracy)))
            .collect(),
        improved_dual,
        subgradient_dual,
    })
}
