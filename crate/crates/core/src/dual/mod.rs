//! Master problem over the multipliers λ: dual evaluation, the subgradient
//! baseline, the smoothed optimal-gradient scheme, the successive convex
//! approximation loop and interleaved primal recovery.

mod ica;
mod improved;
mod subgradient;

use std::time::Duration;

use rayon::prelude::*;

pub use ica::{solve_ica_dsb, OuterRow};
pub use improved::{averaging_weight, formula_i_max, solve_improved, DualState};
pub use subgradient::solve_subgradient;

use crate::approx::ConvexApprox;
use crate::error::{Error, Result};
use crate::model::{Scenario, SpectrumAllocation, ToneAllocation};
use crate::pertone::{check_multipliers, PerToneMethod, PerToneSolution, ProxConfig, ToneProblem, TIE_REL_TOL};

/// Which per-tone objective the master problem decomposes.
#[derive(Debug, Clone, Copy)]
pub enum Objective<'a> {
    /// The true nonconvex weighted rate (direct DSM).
    Direct,
    /// A concave surrogate.
    Convex(&'a ConvexApprox),
}

impl Objective<'_> {
    fn approx(&self) -> Option<&ConvexApprox> {
        match self {
            Objective::Direct => None,
            Objective::Convex(a) => Some(a),
        }
    }
}

/// A tolerance given either in objective units or relative to the scenario's objective scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tolerance {
    Absolute(f64),
    Relative(f64),
}

impl Tolerance {
    pub fn resolve(&self, scale: f64) -> f64 {
        match *self {
            Tolerance::Absolute(v) => v,
            Tolerance::Relative(r) => r * scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IterationBudget {
    /// Algorithm-dependent default (see [`SolverConfig::i_max`]).
    Auto,
    /// i_max from the iteration-complexity formula of the smoothed scheme.
    Formula,
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// δ_i = q / i.
    Decreasing { q: f64 },
    /// Per-user steps starting at q, halved when that user's residual changes sign and grown by 10% otherwise.
    Adaptive { q: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrimalChoice {
    Last,
    Averaged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Target dual accuracy ε; also sets c = ε / Σ D.
    pub epsilon: Tolerance,
    /// Complementarity stop tolerance ε_a.
    pub epsilon_a: Tolerance,
    pub i_max: IterationBudget,
    pub step: StepRule,
    pub interleaving: bool,
    pub pertone: PerToneMethod,
    /// `None` follows the algorithm listing: averaged for the convex scheme, last otherwise.
    pub primal: Option<PrimalChoice>,
    /// The stop test also requires Σ_k s_k^n − P^n ≤ feas_tol · P^n.
    pub feas_tol: f64,
    pub tie_rel_tol: f64,
    /// Stop the convex scheme early on the complementarity test.
    pub convex_early_stop: bool,
    pub outer_max: usize,
    pub outer_rel_tol: f64,
    /// Start each outer iteration from the previous multipliers.
    pub warm_start_lambda: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon: Tolerance::Relative(5e-4),
            epsilon_a: Tolerance::Relative(5e-4),
            i_max: IterationBudget::Auto,
            step: StepRule::Decreasing { q: 1.0 },
            interleaving: false,
            pertone: PerToneMethod::fixed_point(),
            primal: None,
            feas_tol: 1e-3,
            tie_rel_tol: TIE_REL_TOL,
            convex_early_stop: false,
            outer_max: 50,
            outer_rel_tol: 1e-4,
            warm_start_lambda: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, t: Tolerance| match t {
            Tolerance::Absolute(v) | Tolerance::Relative(v) if v > 0.0 && v.is_finite() => Ok(()),
            _ => Err(Error::Config(format!("{name} must be positive"))),
        };
        pos("epsilon", self.epsilon)?;
        pos("epsilon_a", self.epsilon_a)?;
        if let IterationBudget::Fixed(0) = self.i_max {
            return Err(Error::Config("i_max must be at least 1".into()));
        }
        match self.step {
            StepRule::Decreasing { q } | StepRule::Adaptive { q } if !(q > 0.0 && q.is_finite()) => {
                return Err(Error::Config(format!("initial stepsize must be positive, got {q}")));
            }
            _ => {}
        }
        if !(self.feas_tol >= 0.0) || !(self.tie_rel_tol >= 0.0) {
            return Err(Error::Config("tolerances must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    /// g(λ) for the subgradient scheme, ḡ(λ) for the smoothed one.
    pub dual_value: f64,
    /// ‖[Σ_k s_k − P^tot]^+‖ of the primal picked at this λ.
    pub violation_norm: f64,
    /// λ_n (Σ_k s_k^n − P^{n,tot}).
    pub complementarity: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl TraceRow {
    pub fn max_complementarity(&self) -> f64 {
        self.complementarity.iter().fold(0.0, |m, c| m.max(c.abs()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport {
    pub algorithm: &'static str,
    pub trace: Vec<TraceRow>,
    pub spectra: SpectrumAllocation,
    pub lambda: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Resolved ε and ε_a.
    pub epsilon: f64,
    pub epsilon_a: f64,
    pub smoothness_c: f64,
    pub lipschitz: f64,
    pub i_max: usize,
    /// True weighted rate sum of `spectra`.
    pub weighted_rate: f64,
    pub violation_norm: f64,
    pub outer: Vec<OuterRow>,
    pub wall_time: Duration,
}

/// Solves every tone at `lambda`, in parallel, returning results in tone order.
pub fn solve_tones(
    scenario: &Scenario,
    objective: Objective,
    lambda: &[f64],
    prox: &ProxConfig,
    method: &PerToneMethod,
    warm: &SpectrumAllocation,
    tie_tol: f64,
) -> Result<Vec<PerToneSolution>> {
    check_multipliers(lambda)?;
    if lambda.len() != scenario.n_users() {
        return Err(Error::Dimension(format!("{} multipliers for {} users", lambda.len(), scenario.n_users())));
    }
    let approx = objective.approx();
    (0..scenario.n_tones())
        .into_par_iter()
        .map(|k| {
            let problem = ToneProblem::new(scenario, k, approx);
            method.solve(&problem, lambda, prox, &warm.tones[k].power, tie_tol)
        })
        .collect()
}

/// Picks tone t's (0-based) optimum `(t + 1) mod |C_t|`, i.e. index rem(k, |C_k|) + 1 for 1-based k.
pub fn recover_interleaved(ties: &[PerToneSolution]) -> SpectrumAllocation {
    SpectrumAllocation::new(
        ties.iter()
            .enumerate()
            .map(|(t, sol)| ToneAllocation::new(sol.optima[(t + 1) % sol.len()].clone()))
            .collect(),
    )
}

/// The best optimum of every tone.
pub fn recover_best(ties: &[PerToneSolution]) -> SpectrumAllocation {
    SpectrumAllocation::new(ties.iter().map(|s| ToneAllocation::new(s.best_power().to_vec())).collect())
}

pub fn recover(ties: &[PerToneSolution], interleave: bool) -> SpectrumAllocation {
    if interleave {
        recover_interleaved(ties)
    } else {
        recover_best(ties)
    }
}

/// Σ_k max-value + Σ_n λ_n P^{n,tot}.
pub fn dual_from_solutions(scenario: &Scenario, lambda: &[f64], sols: &[PerToneSolution]) -> f64 {
    let tones: f64 = sols.iter().map(PerToneSolution::value).sum();
    tones + lambda.iter().zip(scenario.budgets()).map(|(l, p)| l * p).sum::<f64>()
}

/// g(λ), or ḡ(λ) when the prox term is enabled.
pub fn dual_value(
    scenario: &Scenario,
    objective: Objective,
    lambda: &[f64],
    prox: &ProxConfig,
    method: &PerToneMethod,
) -> Result<f64> {
    let sols = solve_tones(scenario, objective, lambda, prox, method, &scenario.flat_allocation(), TIE_REL_TOL)?;
    Ok(dual_from_solutions(scenario, lambda, &sols))
}

/// Σ_k s_k(λ) − P^tot using each tone's best maximizer.
pub fn dual_subgradient(
    scenario: &Scenario,
    objective: Objective,
    lambda: &[f64],
    prox: &ProxConfig,
    method: &PerToneMethod,
) -> Result<Vec<f64>> {
    let sols = solve_tones(scenario, objective, lambda, prox, method, &scenario.flat_allocation(), TIE_REL_TOL)?;
    Ok(power_residual(scenario, &recover_best(&sols)))
}

/// Σ_k s_k^n − P^{n,tot}, summed in tone order.
pub fn power_residual(scenario: &Scenario, alloc: &SpectrumAllocation) -> Vec<f64> {
    alloc.totals().iter().zip(scenario.budgets()).map(|(t, p)| t - p).collect()
}

/// ‖[r]^+‖.
pub fn violation_norm(residual: &[f64]) -> f64 {
    residual.iter().map(|r| r.max(0.0).powi(2)).sum::<f64>().sqrt()
}

pub(crate) fn trace_row(iter: usize, dual_value: f64, lambda: &[f64], residual: &[f64]) -> TraceRow {
    TraceRow {
        iter,
        dual_value,
        violation_norm: violation_norm(residual),
        complementarity: lambda.iter().zip(residual).map(|(l, r)| l * r).collect(),
        lambda: lambda.to_vec(),
    }
}

/// Complementarity below ε_a for every user and every budget met within `feas_tol`.
pub(crate) fn stop_test(scenario: &Scenario, row: &TraceRow, residual: &[f64], eps_a: f64, feas_tol: f64) -> bool {
    row.max_complementarity() < eps_a
        && residual.iter().zip(scenario.budgets()).all(|(r, p)| *r <= feas_tol * p)
}

/// Weighted primal averaging accumulator.
#[derive(Debug, Clone)]
pub(crate) struct PrimalAverage {
    sum: SpectrumAllocation,
    weight: f64,
}

impl PrimalAverage {
    pub fn new(k: usize, n: usize) -> Self {
        Self { sum: SpectrumAllocation::zeros(k, n), weight: 0.0 }
    }

    /// Adds s^{i+1} with weight (i + 1).
    pub fn add(&mut self, i: usize, alloc: &SpectrumAllocation) {
        let w = (i + 1) as f64;
        for (acc, t) in self.sum.tones.iter_mut().zip(&alloc.tones) {
            for (a, s) in acc.power.iter_mut().zip(&t.power) {
                *a += w * s;
            }
        }
        self.weight += w;
    }

    /// Σ_i 2(i+1)/((I+1)(I+2)) s^{i+1}, clipped to the box against rounding.
    pub fn mean(&self, scenario: &Scenario) -> SpectrumAllocation {
        let mut out = self.sum.clone();
        for (k, t) in out.tones.iter_mut().enumerate() {
            for (s, &u) in t.power.iter_mut().zip(scenario.upper(k)) {
                *s = (*s / self.weight).clamp(0.0, u);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{PhysicalConstants, ToneChannel};

    fn ties(n: usize, m: usize) -> PerToneSolution {
        PerToneSolution {
            optima: (0..m).map(|i| vec![i as f64; n]).collect(),
            values: vec![1.0; m],
            best: 0,
        }
    }

    #[test]
    fn interleaving_index_arithmetic() {
        // 1-based tones 970..975 with three ties pick 2,3,1,2,3,1
        let sols: Vec<_> = (0..975).map(|_| ties(1, 3)).collect();
        let alloc = recover_interleaved(&sols);
        let picks: Vec<f64> = (969..975).map(|t| alloc.tones[t].power[0] + 1.0).collect();
        assert_eq!(picks, vec![2.0, 3.0, 1.0, 2.0, 3.0, 1.0]);
        let single: Vec<_> = (0..5).map(|_| ties(2, 1)).collect();
        assert_eq!(recover_interleaved(&single), recover_best(&single));
    }

    #[test]
    fn residual_helpers() {
        assert_eq!(violation_norm(&[-1.0, 3.0, 4.0]), 5.0);
        let ch = ToneChannel::new(vec![vec![1.0]], vec![1.0]).unwrap();
        let sc = Scenario::new(vec![ch; 2], vec![1.0], vec![3.0], None, PhysicalConstants::dsl()).unwrap();
        let a = SpectrumAllocation::new(vec![ToneAllocation::new(vec![1.0]), ToneAllocation::new(vec![1.5])]);
        assert_eq!(power_residual(&sc, &a), vec![-0.5]);
    }

    #[test]
    fn negative_multiplier_rejected() {
        let ch = ToneChannel::new(vec![vec![1.0]], vec![1.0]).unwrap();
        let sc = Scenario::new(vec![ch], vec![1.0], vec![3.0], None, PhysicalConstants::dsl()).unwrap();
        let r = dual_value(&sc, Objective::Direct, &[-1.0], &ProxConfig::off(), &PerToneMethod::fixed_point());
        assert!(matches!(r, Err(Error::NegativeMultiplier { .. })));
    }
}
