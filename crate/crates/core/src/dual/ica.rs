use std::time::Instant;

use super::{improved, power_residual, violation_norm, Objective, SolverConfig, SolverReport};
use crate::approx::build_approx;
use crate::error::Result;
use crate::model::{weighted_rate_sum, Scenario};

/// One pass of the successive convex approximation loop.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterRow {
    pub outer: usize,
    pub inner_iterations: usize,
    /// True weighted rate sum of the inner solution.
    pub true_rate: f64,
    /// Surrogate objective Σ_k b_{k,cvx} of the inner solution.
    pub surrogate_value: f64,
    pub violation_norm: f64,
}

/// Successive convex approximation around the smoothed scheme: linearize at the
/// current point, solve the surrogate, move the expansion point to the result,
/// until the true objective settles.
pub fn solve_ica_dsb(scenario: &Scenario, config: &SolverConfig) -> Result<SolverReport> {
    config.validate()?;
    let started = Instant::now();
    let mut expansion = scenario.flat_allocation();
    let mut outer = Vec::new();
    let mut trace = Vec::new();
    let mut prev_rate: Option<f64> = None;
    let mut lambda: Option<Vec<f64>> = None;
    let mut converged = false;
    let mut report = None;

    for o in 0..config.outer_max.max(1) {
        let approx = build_approx(scenario, &expansion);
        let warm = if config.warm_start_lambda { lambda.as_deref() } else { None };
        let inner = improved::run(scenario, config, Objective::Convex(&approx), warm)?;
        let rate = weighted_rate_sum(scenario, &inner.spectra);
        outer.push(OuterRow {
            outer: o,
            inner_iterations: inner.iterations,
            true_rate: rate,
            surrogate_value: approx.total_objective(scenario, &inner.spectra),
            violation_norm: violation_norm(&power_residual(scenario, &inner.spectra)),
        });
        let offset = trace.len();
        trace.extend(inner.trace.iter().cloned().map(|mut r| {
            r.iter += offset;
            r
        }));
        expansion = inner.spectra.clone();
        lambda = Some(inner.lambda.clone());
        let settled = prev_rate.is_some_and(|p| (rate - p).abs() <= config.outer_rel_tol * p.abs());
        prev_rate = Some(rate);
        report = Some(inner);
        if settled {
            converged = true;
            break;
        }
    }

    let mut report = report.expect("at least one outer iteration runs");
    report.algorithm = "ica-dsb";
    report.iterations = trace.len();
    report.trace = trace;
    report.outer = outer;
    report.converged = converged;
    report.wall_time = started.elapsed();
    Ok(report)
}
