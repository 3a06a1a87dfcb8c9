//! Independent references for testing: joint grid enumeration, single-user
//! waterfilling and central finite differences.

use std::f64::consts::LN_2;

use crate::error::{Error, Result};
use crate::model::{weighted_rate_sum, Scenario, SpectrumAllocation, ToneAllocation};
use crate::pertone::{check_multipliers, pertone_objective, GridSpec, ProxConfig};

pub const DEFAULT_ORACLE_CAP: f64 = 1e7;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub best_value: f64,
    pub best_alloc: SpectrumAllocation,
    /// Complete joint allocations evaluated (after pruning).
    pub enumerated: u64,
}

/// Every grid point of every tone, in lexicographic order.
fn tone_points(scenario: &Scenario, grid: &GridSpec, k: usize) -> Result<Vec<Vec<f64>>> {
    let g = grid.build(scenario.upper(k))?;
    let n = scenario.n_users();
    let mut out = vec![Vec::with_capacity(n)];
    for u in 0..n {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                g.levels(u).iter().map(move |&l| {
                    let mut p = prefix.clone();
                    p.push(l);
                    p
                })
            })
            .collect();
    }
    Ok(out)
}

fn joint_points(scenario: &Scenario, grid: &GridSpec, cap: f64) -> Result<Vec<Vec<Vec<f64>>>> {
    let mut total = 1.0f64;
    for k in 0..scenario.n_tones() {
        total *= grid.build(scenario.upper(k))?.n_points();
    }
    if total > cap {
        return Err(Error::EnumerationCap { points: total, cap });
    }
    (0..scenario.n_tones()).map(|k| tone_points(scenario, grid, k)).collect()
}

struct Search<'a> {
    options: &'a [Vec<Vec<f64>>],
    values: Vec<Vec<f64>>,
    /// Σ of the best per-tone values from tone k onward.
    tail_bound: Vec<f64>,
    budgets: &'a [f64],
    choice: Vec<usize>,
    best: Option<(f64, Vec<usize>)>,
    enumerated: u64,
}

impl Search<'_> {
    fn run(&mut self, k: usize, acc: f64, used: &mut [f64]) {
        if k == self.options.len() {
            self.enumerated += 1;
            // strict improvement keeps the lexicographically first maximizer
            if self.best.as_ref().is_none_or(|(v, _)| acc > *v) {
                self.best = Some((acc, self.choice.clone()));
            }
            return;
        }
        if let Some((v, _)) = &self.best {
            if acc + self.tail_bound[k] < *v {
                return;
            }
        }
        for (i, p) in self.options[k].iter().enumerate() {
            let fits = used.iter().zip(p).zip(self.budgets).all(|((u, s), b)| u + s <= b * (1.0 + 1e-12));
            if !fits {
                continue;
            }
            for (u, s) in used.iter_mut().zip(p) {
                *u += s;
            }
            self.choice[k] = i;
            self.run(k + 1, acc + self.values[k][i], used);
            for (u, s) in used.iter_mut().zip(p) {
                *u -= s;
            }
        }
    }
}

/// Global grid optimum of the constrained weighted rate sum.
pub fn brute_force_cwrs(scenario: &Scenario, grid: &GridSpec, cap: f64) -> Result<OracleResult> {
    let options = joint_points(scenario, grid, cap)?;
    let values: Vec<Vec<f64>> = options
        .iter()
        .enumerate()
        .map(|(k, pts)| {
            pts.iter()
                .map(|p| pertone_objective(scenario.tone(k), p, scenario.weights(), scenario.constants()))
                .collect()
        })
        .collect();
    let mut tail_bound = vec![0.0; options.len() + 1];
    for k in (0..options.len()).rev() {
        let m = values[k].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        tail_bound[k] = tail_bound[k + 1] + m;
    }
    let mut search = Search {
        options: &options,
        values,
        tail_bound,
        budgets: scenario.budgets(),
        choice: vec![0; options.len()],
        best: None,
        enumerated: 0,
    };
    search.run(0, 0.0, &mut vec![0.0; scenario.n_users()]);
    let (_, choice) = search.best.expect("the all-zero allocation is always feasible");
    let best_alloc = SpectrumAllocation::new(
        choice.iter().enumerate().map(|(k, &i)| ToneAllocation::new(options[k][i].clone())).collect(),
    );
    Ok(OracleResult { best_value: weighted_rate_sum(scenario, &best_alloc), best_alloc, enumerated: search.enumerated })
}

/// The dual function evaluated without decomposition: the Lagrangian maximized
/// jointly over all tones of the grid.
pub fn joint_dual_value(scenario: &Scenario, lambda: &[f64], prox: &ProxConfig, grid: &GridSpec, cap: f64) -> Result<f64> {
    check_multipliers(lambda)?;
    let options = joint_points(scenario, grid, cap)?;
    let n = scenario.n_users();
    let k_count = options.len();
    let mut idx = vec![0usize; k_count];
    let mut best = f64::NEG_INFINITY;
    loop {
        let mut total = 0.0;
        let mut power_sum = vec![0.0; n];
        let mut prox_sum = 0.0;
        for (k, &i) in idx.iter().enumerate() {
            let p = &options[k][i];
            total += pertone_objective(scenario.tone(k), p, scenario.weights(), scenario.constants());
            prox_sum += prox.penalty(p);
            for (acc, s) in power_sum.iter_mut().zip(p) {
                *acc += s;
            }
        }
        let lag = total - prox_sum
            - lambda.iter().zip(&power_sum).zip(scenario.budgets()).map(|((l, s), b)| l * (s - b)).sum::<f64>();
        best = best.max(lag);
        let mut k = k_count;
        loop {
            if k == 0 {
                return Ok(best);
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < options[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

fn waterfill_at(scenario: &Scenario, lambda: f64) -> Vec<f64> {
    let c = scenario.constants();
    let level = scenario.weights()[0] * c.symbol_rate_hz / (lambda * LN_2);
    (0..scenario.n_tones())
        .map(|k| {
            let t = scenario.tone(k);
            (level - c.snr_gap * t.noise(0) / t.gain(0, 0)).clamp(0.0, scenario.upper(k)[0])
        })
        .collect()
}

/// Optimal multiplier and spectrum of a single-user scenario, by bisection on λ.
/// Returns `(λ, allocation)`; λ is 0 when every tone sits at its bound within budget.
pub fn waterfilling_1user(scenario: &Scenario) -> Result<(f64, SpectrumAllocation)> {
    if scenario.n_users() != 1 {
        return Err(Error::Unsupported("waterfilling needs exactly one user".into()));
    }
    let budget = scenario.budgets()[0];
    let wrap = |p: Vec<f64>| SpectrumAllocation::new(p.into_iter().map(|s| ToneAllocation::new(vec![s])).collect());
    let saturated: f64 = (0..scenario.n_tones()).map(|k| scenario.upper(k)[0]).sum();
    if saturated <= budget || scenario.weights()[0] == 0.0 {
        let lambda = 0.0;
        let p = if scenario.weights()[0] == 0.0 { vec![0.0; scenario.n_tones()] } else { waterfill_at(scenario, f64::MIN_POSITIVE) };
        return Ok((lambda, wrap(p)));
    }
    let total = |l: f64| waterfill_at(scenario, l).iter().sum::<f64>();
    let (mut lo, mut hi) = (f64::MIN_POSITIVE, 1.0f64);
    while total(hi) > budget {
        hi *= 2.0;
    }
    // geometric bisection: λ spans many decades
    loop {
        let mid = (lo.sqrt() * hi.sqrt()).clamp(lo, hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if total(mid) > budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((hi, wrap(waterfill_at(scenario, hi))))
}

/// Central differences, one coordinate at a time.
pub fn finite_diff_gradient<F: FnMut(&[f64]) -> f64>(mut f: F, point: &[f64], step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {step}")));
    }
    let mut x = point.to_vec();
    (0..point.len())
        .map(|i| {
            x[i] = point[i] + step;
            let up = f(&x);
            x[i] = point[i] - step;
            let down = f(&x);
            x[i] = point[i];
            Ok((up - down) / (2.0 * step))
        })
        .collect()
}
