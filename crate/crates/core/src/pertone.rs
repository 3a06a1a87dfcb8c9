//! Per-tone subproblems: objective, Lagrangian with an optional prox term,
//! and the maximizers used inside the dual solvers.

use std::f64::consts::LN_2;

use crate::approx::{maximize_surrogate, ConvexApprox, ToneApprox};
use crate::error::{Error, Result};
use crate::model::{bit_loading, PhysicalConstants, Scenario, ToneChannel};

/// Relative tolerance for collecting tied optima (values within 99.9% of the best).
pub const TIE_REL_TOL: f64 = 1e-3;

/// Prox term c·d(s) with d(s) = ½‖s‖², convexity parameter 1 and diameter ½‖s^max‖².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxConfig {
    pub smoothness_c: f64,
    pub enabled: bool,
}

impl ProxConfig {
    pub fn off() -> Self {
        Self { smoothness_c: 0.0, enabled: false }
    }

    pub fn new(c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Config(format!("smoothness parameter must be positive, got {c}")));
        }
        Ok(Self { smoothness_c: c, enabled: true })
    }

    /// The effective c (zero when disabled).
    #[inline]
    pub fn c(&self) -> f64 {
        if self.enabled {
            self.smoothness_c
        } else {
            0.0
        }
    }

    #[inline]
    pub fn penalty(&self, power: &[f64]) -> f64 {
        let c = self.c();
        if c == 0.0 {
            0.0
        } else {
            0.5 * c * power.iter().map(|s| s * s).sum::<f64>()
        }
    }
}

/// How to quantize each user's power on a tone.
#[derive(Debug, Clone, PartialEq)]
pub enum GridSpec {
    /// {0} ∪ {s^max · 10^(−j·step/10) : j = 0..=floor/step}.
    Geometric { floor_db: f64, step_db: f64 },
    /// `levels` equally spaced points from 0 to s^max inclusive.
    Linear { levels: usize },
    /// Absolute levels per user, shared by every tone.
    Fixed(Vec<Vec<f64>>),
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::Geometric { floor_db: 60.0, step_db: 1.0 }
    }
}

impl GridSpec {
    pub fn build(&self, upper: &[f64]) -> Result<PowerGrid> {
        let levels = match self {
            GridSpec::Geometric { floor_db, step_db } => {
                if !(*step_db > 0.0 && *floor_db >= 0.0) {
                    return Err(Error::Config(format!("bad geometric grid ({floor_db} dB, {step_db} dB)")));
                }
                let steps = (floor_db / step_db + 1e-9).floor() as i32;
                upper
                    .iter()
                    .map(|&u| {
                        let mut v: Vec<f64> =
                            (0..=steps).rev().map(|j| u * 10f64.powf(-(j as f64) * step_db / 10.0)).collect();
                        v.insert(0, 0.0);
                        v.dedup();
                        v
                    })
                    .collect()
            }
            GridSpec::Linear { levels } => {
                if *levels < 2 {
                    return Err(Error::Config("a linear grid needs at least 2 levels".into()));
                }
                upper
                    .iter()
                    .map(|&u| {
                        let mut v: Vec<f64> =
                            (0..*levels).map(|j| u * j as f64 / (*levels - 1) as f64).collect();
                        v.dedup();
                        v
                    })
                    .collect()
            }
            GridSpec::Fixed(levels) => {
                if levels.len() != upper.len() {
                    return Err(Error::Dimension(format!("{} grid rows for {} users", levels.len(), upper.len())));
                }
                levels.clone()
            }
        };
        PowerGrid::new(levels, upper)
    }
}

/// Materialized per-user power levels on one tone.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerGrid {
    levels: Vec<Vec<f64>>,
}

impl PowerGrid {
    pub fn new(levels: Vec<Vec<f64>>, upper: &[f64]) -> Result<Self> {
        for (n, (row, &u)) in levels.iter().zip(upper).enumerate() {
            if row.first() != Some(&0.0) {
                return Err(Error::Config(format!("grid for user {n} must start at 0")));
            }
            if row.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::Config(format!("grid for user {n} must be strictly ascending")));
            }
            if row.last().is_some_and(|&top| top > u * (1.0 + 1e-12)) {
                return Err(Error::Config(format!("grid for user {n} exceeds the box bound {u}")));
            }
        }
        Ok(Self { levels })
    }

    pub fn levels(&self, user: usize) -> &[f64] {
        &self.levels[user]
    }

    pub fn n_points(&self) -> f64 {
        self.levels.iter().map(|l| l.len() as f64).product()
    }
}

/// All (near-)tied maximizers of one per-tone problem, in the solver's fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct PerToneSolution {
    pub optima: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    /// Index of the maximizer used when no interleaving is applied.
    pub best: usize,
}

impl PerToneSolution {
    pub fn single(power: Vec<f64>, value: f64) -> Self {
        Self { optima: vec![power], values: vec![value], best: 0 }
    }

    pub fn value(&self) -> f64 {
        self.values[self.best]
    }

    pub fn best_power(&self) -> &[f64] {
        &self.optima[self.best]
    }

    pub fn len(&self) -> usize {
        self.optima.len()
    }

    pub fn is_empty(&self) -> bool {
        self.optima.is_empty()
    }
}

#[inline]
fn within_tie(value: f64, best: f64, tol: f64) -> bool {
    value >= best - tol * best.abs()
}

/// f_s Σ_n w_n b_k^n.
pub fn pertone_objective(tone: &ToneChannel, power: &[f64], weights: &[f64], constants: &PhysicalConstants) -> f64 {
    let bits: f64 = weights
        .iter()
        .enumerate()
        .filter(|(_, &w)| w != 0.0)
        .map(|(n, &w)| w * bit_loading(tone, power, n, constants))
        .sum();
    constants.symbol_rate_hz * bits
}

pub fn check_multipliers(lambda: &[f64]) -> Result<()> {
    match lambda.iter().position(|l| !(*l >= 0.0)) {
        Some(index) => Err(Error::NegativeMultiplier { index, value: lambda[index] }),
        None => Ok(()),
    }
}

/// f_s b_k(s) − λ·s − c·d(s). The constant Σ λ_n P^{n,tot}/K is left out.
pub fn pertone_lagrangian(
    tone: &ToneChannel,
    power: &[f64],
    lambda: &[f64],
    prox: &ProxConfig,
    weights: &[f64],
    constants: &PhysicalConstants,
) -> Result<f64> {
    check_multipliers(lambda)?;
    Ok(pertone_objective(tone, power, weights, constants) - dot(lambda, power) - prox.penalty(power))
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One tone of a scenario, optionally with a concave surrogate replacing the true objective.
#[derive(Debug, Clone, Copy)]
pub struct ToneProblem<'a> {
    pub channel: &'a ToneChannel,
    pub upper: &'a [f64],
    pub weights: &'a [f64],
    pub constants: &'a PhysicalConstants,
    pub approx: Option<&'a ToneApprox>,
}

impl<'a> ToneProblem<'a> {
    pub fn new(scenario: &'a Scenario, k: usize, approx: Option<&'a ConvexApprox>) -> Self {
        Self {
            channel: scenario.tone(k),
            upper: scenario.upper(k),
            weights: scenario.weights(),
            constants: scenario.constants(),
            approx: approx.map(|a| a.tone(k)),
        }
    }

    pub fn n_users(&self) -> usize {
        self.upper.len()
    }

    /// True per-tone objective, or the surrogate when one is attached.
    pub fn objective(&self, power: &[f64]) -> f64 {
        match self.approx {
            Some(a) => a.objective(power, self.weights, self.constants),
            None => pertone_objective(self.channel, power, self.weights, self.constants),
        }
    }

    #[inline]
    pub fn lagrangian(&self, power: &[f64], lambda: &[f64], prox: &ProxConfig) -> f64 {
        self.objective(power) - dot(lambda, power) - prox.penalty(power)
    }
}

/// Full enumeration of the grid, collecting every point within `tie_tol` of the best
/// in lexicographic order (user 1 most significant, ascending levels).
pub fn solve_exhaustive(
    problem: &ToneProblem,
    lambda: &[f64],
    prox: &ProxConfig,
    grid: &PowerGrid,
    cap: f64,
    tie_tol: f64,
) -> Result<PerToneSolution> {
    check_multipliers(lambda)?;
    let n = problem.n_users();
    let points = grid.n_points();
    if points > cap {
        return Err(Error::EnumerationCap { points, cap });
    }
    let mut idx = vec![0usize; n];
    let mut power: Vec<f64> = (0..n).map(|u| grid.levels(u)[0]).collect();
    let mut best = f64::NEG_INFINITY;
    let mut ties: Vec<(Vec<f64>, f64)> = Vec::new();
    loop {
        let v = problem.lagrangian(&power, lambda, prox);
        if v > best {
            best = v;
            ties.retain(|(_, tv)| within_tie(*tv, best, tie_tol));
        }
        if within_tie(v, best, tie_tol) {
            ties.push((power.clone(), v));
        }
        // odometer, last user fastest
        let mut u = n;
        loop {
            if u == 0 {
                return Ok(collect_ties(ties));
            }
            u -= 1;
            idx[u] += 1;
            if idx[u] < grid.levels(u).len() {
                power[u] = grid.levels(u)[idx[u]];
                break;
            }
            idx[u] = 0;
            power[u] = grid.levels(u)[0];
        }
    }
}

fn collect_ties(ties: Vec<(Vec<f64>, f64)>) -> PerToneSolution {
    let best = ties
        .iter()
        .enumerate()
        .fold(0, |b, (i, (_, v))| if *v > ties[b].1 { i } else { b });
    let (optima, values) = ties.into_iter().unzip();
    PerToneSolution { optima, values, best }
}

/// Cyclic coordinate ascent over the grid, starting from `start`. Only strict
/// improvements are accepted, so the result is never worse than the start.
pub fn solve_coordinate_descent(
    problem: &ToneProblem,
    lambda: &[f64],
    prox: &ProxConfig,
    grid: &PowerGrid,
    start: &[f64],
    max_passes: usize,
) -> Result<PerToneSolution> {
    check_multipliers(lambda)?;
    let mut power = start.to_vec();
    let mut value = problem.lagrangian(&power, lambda, prox);
    for _ in 0..max_passes {
        let mut improved = false;
        for u in 0..problem.n_users() {
            let keep = power[u];
            let mut best_level = keep;
            for &level in grid.levels(u) {
                power[u] = level;
                let v = problem.lagrangian(&power, lambda, prox);
                if v > value {
                    value = v;
                    best_level = level;
                    improved = true;
                }
            }
            power[u] = best_level;
        }
        if !improved {
            break;
        }
    }
    Ok(PerToneSolution::single(power, value))
}

/// Closed-form KKT update of user `n`'s power, all other quantities taken from `power`.
///
/// Without a surrogate the linearization coefficients are evaluated at `power`
/// (direct mode). A nonpositive denominator means the Lagrangian is increasing in
/// s^n on the whole box, so the update returns the box bound.
pub fn fixed_point_update(problem: &ToneProblem, power: &[f64], lambda: &[f64], prox: &ProxConfig, n: usize) -> f64 {
    let interference: Vec<f64> = (0..power.len()).map(|m| problem.channel.interference(power, m)).collect();
    update_with_interference(problem, power, &interference, lambda, prox, n)
}

/// [`fixed_point_update`] with `interference[m] = Σ_{p≠m} |h^{m,p}|² s^p + σ^m` precomputed.
fn update_with_interference(
    problem: &ToneProblem,
    power: &[f64],
    interference: &[f64],
    lambda: &[f64],
    prox: &ProxConfig,
    n: usize,
) -> f64 {
    let ch = problem.channel;
    let gamma = problem.constants.snr_gap;
    let fs = problem.constants.symbol_rate_hz;
    let w = problem.weights;

    let mut denom = lambda[n] + prox.c() * power[n];
    for m in (0..power.len()).filter(|&m| m != n) {
        if w[m] == 0.0 {
            continue;
        }
        let a_nm = match problem.approx {
            Some(a) => a.a(n, m),
            None => ch.gain(m, n) / (LN_2 * interference[m]),
        };
        // Σ_p |h̃^{m,p}|² s^p + Γσ^m = |h^{m,m}|² s^m + Γ·(interference + noise)
        let total_m = ch.gain(m, m) * power[m] + gamma * interference[m];
        denom += w[m] * fs * (a_nm - gamma * ch.gain(m, n) / (LN_2 * total_m));
    }
    let upper = problem.upper[n];
    if denom <= 0.0 {
        return upper;
    }
    let s = (w[n] * fs / LN_2) / denom - gamma * interference[n] / ch.gain(n, n);
    s.clamp(0.0, upper)
}

/// Gauss-Seidel sweeps of [`fixed_point_update`] over the users, in place.
/// Stops early once a sweep moves no power by more than 1e-12 of the box.
pub fn fixed_point_sweeps(problem: &ToneProblem, power: &mut [f64], lambda: &[f64], prox: &ProxConfig, sweeps: usize) {
    let ch = problem.channel;
    let nu = power.len();
    let mut interference = vec![0.0; nu];
    for _ in 0..sweeps {
        for (m, i) in interference.iter_mut().enumerate() {
            *i = ch.interference(power, m);
        }
        let mut moved = false;
        for n in 0..nu {
            let s = update_with_interference(problem, power, &interference, lambda, prox, n);
            let delta = s - power[n];
            if delta == 0.0 {
                continue;
            }
            moved |= delta.abs() > 1e-12 * problem.upper[n];
            power[n] = s;
            for m in (0..nu).filter(|&m| m != n) {
                interference[m] += ch.gain(m, n) * delta;
            }
        }
        if !moved {
            break;
        }
    }
}

pub fn solve_fixed_point(
    problem: &ToneProblem,
    lambda: &[f64],
    prox: &ProxConfig,
    start: &[f64],
    sweeps: usize,
) -> Result<PerToneSolution> {
    check_multipliers(lambda)?;
    let mut power = start.to_vec();
    fixed_point_sweeps(problem, &mut power, lambda, prox, sweeps);
    let v = problem.lagrangian(&power, lambda, prox);
    Ok(PerToneSolution::single(power, v))
}

/// Fixed-point iterations from N one-hot starts (user n at its bound, others silent)
/// followed by `start`. Distinct results within `tie_tol` of the best are kept,
/// in start order.
pub fn solve_multistart(
    problem: &ToneProblem,
    lambda: &[f64],
    prox: &ProxConfig,
    start: &[f64],
    sweeps: usize,
    tie_tol: f64,
) -> Result<PerToneSolution> {
    check_multipliers(lambda)?;
    let n = problem.n_users();
    let scale = problem.upper.iter().cloned().fold(0.0, f64::max);
    let mut results: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let starts = (0..n)
        .map(|u| {
            let mut s = vec![0.0; n];
            s[u] = problem.upper[u];
            s
        })
        .chain(std::iter::once(start.to_vec()));
    for mut power in starts {
        fixed_point_sweeps(problem, &mut power, lambda, prox, sweeps);
        let v = problem.lagrangian(&power, lambda, prox);
        let dup = results
            .iter()
            .any(|(p, _)| p.iter().zip(&power).all(|(a, b)| (a - b).abs() <= 1e-6 * scale));
        if !dup {
            results.push((power, v));
        }
    }
    let best = results.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    results.retain(|(_, v)| within_tie(*v, best, tie_tol));
    Ok(collect_ties(results))
}

/// Per-tone maximizer selection.
#[derive(Debug, Clone, PartialEq)]
pub enum PerToneMethod {
    Exhaustive { grid: GridSpec, cap: f64 },
    CoordinateDescent { grid: GridSpec, max_passes: usize },
    /// Warm-started Gauss-Seidel fixed-point sweeps.
    FixedPoint { sweeps: usize },
    /// One-hot starts plus the warm start, with tie collection.
    MultiStart { sweeps: usize },
    /// Projected Newton on the concave surrogate (surrogate only).
    Newton,
}

impl PerToneMethod {
    pub fn exhaustive() -> Self {
        Self::Exhaustive { grid: GridSpec::default(), cap: 1e7 }
    }

    pub fn isb() -> Self {
        Self::CoordinateDescent { grid: GridSpec::default(), max_passes: 100 }
    }

    pub fn fixed_point() -> Self {
        Self::FixedPoint { sweeps: 3 }
    }

    pub fn multistart() -> Self {
        Self::MultiStart { sweeps: 30 }
    }

    pub fn reports_ties(&self) -> bool {
        matches!(self, Self::Exhaustive { .. } | Self::MultiStart { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Exhaustive { .. } => "exhaustive",
            Self::CoordinateDescent { .. } => "isb",
            Self::FixedPoint { .. } => "fixedpoint",
            Self::MultiStart { .. } => "msdsb",
            Self::Newton => "newton",
        }
    }

    pub fn solve(
        &self,
        problem: &ToneProblem,
        lambda: &[f64],
        prox: &ProxConfig,
        warm: &[f64],
        tie_tol: f64,
    ) -> Result<PerToneSolution> {
        match self {
            Self::Exhaustive { grid, cap } => {
                solve_exhaustive(problem, lambda, prox, &grid.build(problem.upper)?, *cap, tie_tol)
            }
            Self::CoordinateDescent { grid, max_passes } => {
                solve_coordinate_descent(problem, lambda, prox, &grid.build(problem.upper)?, warm, *max_passes)
            }
            Self::FixedPoint { sweeps } => solve_fixed_point(problem, lambda, prox, warm, *sweeps),
            Self::MultiStart { sweeps } => solve_multistart(problem, lambda, prox, warm, *sweeps, tie_tol),
            Self::Newton => {
                let approx = problem
                    .approx
                    .ok_or_else(|| Error::Unsupported("the newton solver needs a convex surrogate".into()))?;
                check_multipliers(lambda)?;
                let s = maximize_surrogate(approx, problem, lambda, prox.c(), warm);
                let v = problem.lagrangian(&s, lambda, prox);
                Ok(PerToneSolution::single(s, v))
            }
        }
    }
}
