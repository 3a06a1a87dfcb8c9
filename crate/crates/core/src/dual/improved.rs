use std::time::Instant;

use super::{
    dual_from_solutions, power_residual, recover, recover_best, solve_tones, stop_test, trace_row, violation_norm,
    IterationBudget, Objective, PrimalAverage, PrimalChoice, SolverConfig, SolverReport,
};
use crate::error::{Error, Result};
use crate::model::{weighted_rate_sum, Scenario};
use crate::pertone::ProxConfig;

/// Multipliers and the auxiliary sequences of the optimal-gradient update.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub lambda: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// tmp = Σ_j (j+1)/2 · dḡ^{j+1}.
    pub grad_accum: Vec<f64>,
    /// Prox center of the v-sequence; zero unless warm-started.
    pub anchor: Vec<f64>,
    pub iter: usize,
    pub lipschitz: f64,
}

#[inline]
fn pos(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

impl DualState {
    pub fn new(n: usize, lipschitz: f64) -> Self {
        Self::warm(vec![0.0; n], lipschitz)
    }

    pub fn warm(lambda: Vec<f64>, lipschitz: f64) -> Self {
        let n = lambda.len();
        Self {
            anchor: lambda.clone(),
            lambda,
            u: vec![0.0; n],
            v: vec![0.0; n],
            grad_accum: vec![0.0; n],
            iter: 0,
            lipschitz,
        }
    }

    /// One multiplier update from the gradient dḡ = Σ_k s_k − P^tot at the current λ.
    pub fn step(&mut self, dg: &[f64]) {
        let i = self.iter as f64;
        let l = self.lipschitz;
        for n in 0..self.lambda.len() {
            self.u[n] = pos(dg[n] / l + self.lambda[n]);
            self.grad_accum[n] += (i + 1.0) / 2.0 * dg[n];
            self.v[n] = pos(self.anchor[n] + self.grad_accum[n] / l);
            self.lambda[n] = (i + 1.0) / (i + 3.0) * self.u[n] + 2.0 / (i + 3.0) * self.v[n];
        }
        self.iter += 1;
    }
}

/// Weight 2(i+1)/((I+1)(I+2)) of iterate i in the averaged primal.
pub fn averaging_weight(i: usize, i_max: usize) -> f64 {
    2.0 * (i + 1) as f64 / ((i_max + 1) as f64 * (i_max + 2) as f64)
}

/// i_max with i_max + 1 = 2 √(K Σ_k D_k) / ε (σ = 1 for every tone).
pub fn formula_i_max(n_tones: usize, diameter_sum: f64, epsilon: f64) -> usize {
    let total = 2.0 * (n_tones as f64 * diameter_sum).sqrt() / epsilon;
    (total.ceil() as usize).saturating_sub(1)
}

/// Smoothed-dual optimal-gradient scheme. With a convex surrogate this runs the
/// fixed-budget variant and returns the averaged primal; on the true objective
/// it stops on the complementarity test and returns the last iterate.
pub fn solve_improved(scenario: &Scenario, config: &SolverConfig, objective: Objective) -> Result<SolverReport> {
    run(scenario, config, objective, None)
}

pub(super) fn run(
    scenario: &Scenario,
    config: &SolverConfig,
    objective: Objective,
    lambda0: Option<&[f64]>,
) -> Result<SolverReport> {
    config.validate()?;
    let started = Instant::now();
    let convex = matches!(objective, Objective::Convex(_));
    let scale = scenario.objective_scale();
    let eps = config.epsilon.resolve(scale);
    let eps_a = config.epsilon_a.resolve(scale);
    let k = scenario.n_tones();
    let diam = scenario.prox_diameter_sum();
    let c = eps / diam;
    let prox = ProxConfig::new(c)?;
    let lipschitz = k as f64 / c;
    let formula = formula_i_max(k, diam, eps);
    let i_max = match config.i_max {
        IterationBudget::Fixed(n) => n,
        IterationBudget::Formula => formula,
        IterationBudget::Auto if convex => formula.max(200),
        IterationBudget::Auto => (10 * (formula + 1)).max(2000),
    };
    if i_max > 100_000_000 {
        return Err(Error::Config(format!("iteration budget {i_max} is unreasonably large")));
    }
    let primal = config.primal.unwrap_or(if convex { PrimalChoice::Averaged } else { PrimalChoice::Last });
    let interleave = config.interleaving && config.pertone.reports_ties();
    let early_stop = !convex || config.convex_early_stop;

    let mut state = match lambda0 {
        Some(l) => DualState::warm(l.to_vec(), lipschitz),
        None => DualState::new(scenario.n_users(), lipschitz),
    };
    let mut warm = scenario.flat_allocation();
    let mut avg = PrimalAverage::new(k, scenario.n_users());
    let mut trace = Vec::with_capacity(i_max.min(100_000) + 1);
    let mut last = warm.clone();
    let mut converged = false;
    let mut final_lambda = None;

    for i in 0..=i_max {
        let sols = solve_tones(scenario, objective, &state.lambda, &prox, &config.pertone, &warm, config.tie_rel_tol)?;
        let s = recover(&sols, interleave);
        let dg = power_residual(scenario, &s);
        let row = trace_row(i, dual_from_solutions(scenario, &state.lambda, &sols), &state.lambda, &dg);
        let done = stop_test(scenario, &row, &dg, eps_a, config.feas_tol);
        trace.push(row);
        avg.add(i, &s);
        warm = recover_best(&sols);
        last = s;
        if done && (early_stop || i == i_max) {
            converged = true;
            if early_stop {
                final_lambda = Some(state.lambda.clone());
                break;
            }
        }
        state.step(&dg);
    }

    let spectra = match primal {
        PrimalChoice::Last => last,
        PrimalChoice::Averaged => avg.mean(scenario),
    };
    let violation = violation_norm(&power_residual(scenario, &spectra));
    Ok(SolverReport {
        algorithm: if convex { "improved-convex" } else { "improved-direct" },
        iterations: trace.len(),
        trace,
        lambda: final_lambda.unwrap_or(state.lambda),
        converged,
        epsilon: eps,
        epsilon_a: eps_a,
        smoothness_c: c,
        lipschitz,
        i_max,
        weighted_rate: weighted_rate_sum(scenario, &spectra),
        violation_norm: violation,
        spectra,
        outer: Vec::new(),
        wall_time: started.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_update_is_one_third_two_thirds() {
        let mut st = DualState::new(3, 4.0);
        let dg = [2.0, -8.0, 0.5];
        st.step(&dg);
        // u = [dg/L]^+, tmp = dg/2, v = [dg/(2L)]^+
        assert_eq!(st.u, vec![0.5, 0.0, 0.125]);
        assert_eq!(st.v, vec![0.25, 0.0, 0.0625]);
        for n in 0..3 {
            assert_eq!(st.lambda[n], 1.0 / 3.0 * st.u[n] + 2.0 / 3.0 * st.v[n]);
        }
    }

    #[test]
    fn iterate_identity_holds_exactly() {
        let mut st = DualState::new(2, 1.5);
        let grads = [[1.0, -0.3], [0.4, 0.2], [-2.0, 0.7], [0.1, -0.1]];
        for dg in grads {
            st.step(&dg);
            let i = (st.iter - 1) as f64;
            for n in 0..2 {
                let again = (i + 1.0) / (i + 3.0) * st.u[n] + 2.0 / (i + 3.0) * st.v[n];
                assert_eq!(st.lambda[n], again);
                assert!(st.lambda[n] >= 0.0 && st.u[n] >= 0.0 && st.v[n] >= 0.0);
            }
        }
    }

    #[test]
    fn averaging_weights_sum_to_one() {
        for i_max in [0usize, 1, 7, 100, 1234] {
            let s: f64 = (0..=i_max).map(|i| averaging_weight(i, i_max)).sum();
            assert!((s - 1.0).abs() < 1e-12, "{i_max}: {s}");
        }
    }

    #[test]
    fn halving_epsilon_doubles_iterations() {
        let a = formula_i_max(8, 0.32, 1e-2) + 1;
        let b = formula_i_max(8, 0.32, 5e-3) + 1;
        assert!(b == 2 * a || b + 1 == 2 * a || b == 2 * a + 1, "{a} {b}");
        assert_eq!(formula_i_max(8, 0.32, 0.1), 31);
    }
}
