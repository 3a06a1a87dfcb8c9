use std::time::Instant;

use super::{
    dual_from_solutions, power_residual, recover, recover_best, solve_tones, stop_test, trace_row, violation_norm,
    IterationBudget, Objective, SolverConfig, SolverReport, StepRule,
};
use crate::error::{Error, Result};
use crate::model::{weighted_rate_sum, Scenario};
use crate::pertone::ProxConfig;

/// Projected subgradient iteration λ ← [λ + δ (Σ_k s_k − P^tot)]^+ on the unsmoothed dual.
pub fn solve_subgradient(scenario: &Scenario, config: &SolverConfig, objective: Objective) -> Result<SolverReport> {
    config.validate()?;
    let started = Instant::now();
    let scale = scenario.objective_scale();
    let eps = config.epsilon.resolve(scale);
    let eps_a = config.epsilon_a.resolve(scale);
    let i_max = match config.i_max {
        IterationBudget::Fixed(n) => n,
        IterationBudget::Auto => 1000,
        IterationBudget::Formula => {
            return Err(Error::Config("the formula budget applies to the smoothed scheme only".into()));
        }
    };
    let n = scenario.n_users();
    let prox = ProxConfig::off();
    let interleave = config.interleaving && config.pertone.reports_ties();

    let mut lambda = vec![0.0; n];
    let (mut steps, adaptive) = match config.step {
        StepRule::Decreasing { q } => (vec![q; n], false),
        StepRule::Adaptive { q } => (vec![q; n], true),
    };
    let q0 = steps[0];
    let mut prev_dg: Option<Vec<f64>> = None;
    let mut warm = scenario.flat_allocation();
    let mut last = warm.clone();
    let mut trace = Vec::new();
    let mut converged = false;

    for i in 0..=i_max {
        let sols = solve_tones(scenario, objective, &lambda, &prox, &config.pertone, &warm, config.tie_rel_tol)?;
        let s = recover(&sols, interleave);
        let dg = power_residual(scenario, &s);
        let row = trace_row(i, dual_from_solutions(scenario, &lambda, &sols), &lambda, &dg);
        let done = stop_test(scenario, &row, &dg, eps_a, config.feas_tol);
        trace.push(row);
        warm = recover_best(&sols);
        last = s;
        if done {
            converged = true;
            break;
        }
        for u in 0..n {
            let delta = if adaptive {
                if let Some(p) = &prev_dg {
                    if (p[u] > 0.0) != (dg[u] > 0.0) {
                        steps[u] *= 0.5;
                    } else {
                        steps[u] *= 1.1;
                    }
                }
                steps[u]
            } else {
                q0 / (i + 1) as f64
            };
            lambda[u] = (lambda[u] + delta * dg[u]).max(0.0);
        }
        prev_dg = Some(dg);
    }

    let violation = violation_norm(&power_residual(scenario, &last));
    Ok(SolverReport {
        algorithm: if adaptive { "subgradient-adaptive" } else { "subgradient" },
        iterations: trace.len(),
        trace,
        lambda,
        converged,
        epsilon: eps,
        epsilon_a: eps_a,
        smoothness_c: 0.0,
        lipschitz: 0.0,
        i_max,
        weighted_rate: weighted_rate_sum(scenario, &last),
        violation_norm: violation,
        spectra: last,
        outer: Vec::new(),
        wall_time: started.elapsed(),
    })
}
