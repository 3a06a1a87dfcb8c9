//! Concave surrogate of the per-tone objective.
//!
//! Per victim `n` the true bit loading splits as
//! `log2(|h^{n,n}|² s^n + Γ I_n(s)) − log2(Γ I_n(s))`. The first term is
//! concave; the second, convex one is replaced by its tangent plane at an
//! expansion point `s0`, giving
//!
//! ```text
//! b_cvx(s) = Σ_n w_n f_s [ log2(Σ_m |h̃^{n,m}|² s^m + Γσ^n) − (Σ_{m≠n} a^{m,n} s^m + c^n) ]
//! ```
//!
//! with `|h̃^{n,m}|² = Γ|h^{n,m}|²` off the diagonal. Because a convex function
//! lies above its tangents, the surrogate is a global lower bound on the true
//! objective and touches it at `s0`.

use std::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::model::{PhysicalConstants, Scenario, SpectrumAllocation, ToneChannel};
use crate::pertone::ToneProblem;

/// Surrogate parameters for one tone.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToneApprox {
    n: usize,
    /// Row-major, `a[n * N + m]` is a^{n,m}: the price (bits per mW) user n pays for disturbing victim m.
    a: Vec<f64>,
    /// c^n in bits.
    c_off: Vec<f64>,
    /// Row-major |h̃^{n,m}|².
    gains_mod: Vec<f64>,
    /// Γσ^n.
    gamma_noise: Vec<f64>,
}

impl ToneApprox {
    /// Linearizes `tone` at `s0`.
    pub fn build(tone: &ToneChannel, s0: &[f64], constants: &PhysicalConstants) -> Self {
        let n = tone.n_users();
        let gamma = constants.snr_gap;
        let interference: Vec<f64> = (0..n).map(|m| tone.interference(s0, m)).collect();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for m in (0..n).filter(|&m| m != i) {
                // Γ|h^{m,i}|²/ln2 / (Σ_{p≠m} Γ|h^{m,p}|² s0^p + Γσ^m); Γ cancels
                a[i * n + m] = tone.gain(m, i) / (LN_2 * interference[m]);
            }
        }
        let c_off = (0..n)
            .map(|v| {
                let lin: f64 = (0..n).filter(|&m| m != v).map(|m| a[m * n + v] * s0[m]).sum();
                (gamma * interference[v]).log2() - lin
            })
            .collect();
        let mut gains_mod = tone.gains_flat().to_vec();
        for r in 0..n {
            for c in (0..n).filter(|&c| c != r) {
                gains_mod[r * n + c] *= gamma;
            }
        }
        let gamma_noise = tone.noise_vec().iter().map(|s| gamma * s).collect();
        Self { n, a, c_off, gains_mod, gamma_noise }
    }

    pub fn n_users(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn a(&self, n: usize, m: usize) -> f64 {
        self.a[n * self.n + m]
    }

    pub fn c_off(&self, n: usize) -> f64 {
        self.c_off[n]
    }

    #[inline]
    pub fn gain_mod(&self, n: usize, m: usize) -> f64 {
        self.gains_mod[n * self.n + m]
    }

    #[inline]
    fn log_arg(&self, power: &[f64], n: usize) -> f64 {
        let row = &self.gains_mod[n * self.n..(n + 1) * self.n];
        self.gamma_noise[n] + row.iter().zip(power).map(|(g, s)| g * s).sum::<f64>()
    }

    /// b_cvx(s), in bits/s.
    pub fn objective(&self, power: &[f64], weights: &[f64], constants: &PhysicalConstants) -> f64 {
        let mut acc = 0.0;
        for (v, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let lin: f64 = (0..self.n).filter(|&m| m != v).map(|m| self.a(m, v) * power[m]).sum();
            acc += w * (self.log_arg(power, v).log2() - lin - self.c_off[v]);
        }
        constants.symbol_rate_hz * acc
    }

    /// ∇b_cvx(s).
    pub fn gradient(&self, power: &[f64], weights: &[f64], constants: &PhysicalConstants) -> Vec<f64> {
        let n = self.n;
        let fs = constants.symbol_rate_hz;
        let inv: Vec<f64> = (0..n).map(|m| weights[m] / (LN_2 * self.log_arg(power, m))).collect();
        (0..n)
            .map(|j| {
                let conc: f64 = (0..n).map(|m| inv[m] * self.gain_mod(m, j)).sum();
                let lin: f64 = (0..n).filter(|&m| m != j).map(|m| weights[m] * self.a(j, m)).sum();
                fs * (conc - lin)
            })
            .collect()
    }

    /// ∇²b_cvx(s), row-major.
    fn hessian(&self, power: &[f64], weights: &[f64], constants: &PhysicalConstants) -> Vec<f64> {
        let n = self.n;
        let fs = constants.symbol_rate_hz;
        let mut h = vec![0.0; n * n];
        for m in 0..n {
            if weights[m] == 0.0 {
                continue;
            }
            let t = self.log_arg(power, m);
            let scale = fs * weights[m] / (LN_2 * t * t);
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] -= scale * self.gain_mod(m, i) * self.gain_mod(m, j);
                }
            }
        }
        h
    }
}

/// Surrogate for every tone, together with the point it was expanded at.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexApprox {
    tones: Vec<ToneApprox>,
    #[serde(serialize_with = "serialize_alloc")]
    expansion_point: SpectrumAllocation,
}

fn serialize_alloc<S: serde::Serializer>(a: &SpectrumAllocation, s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(a.tones.len()))?;
    for t in &a.tones {
        seq.serialize_element(&t.power)?;
    }
    seq.end()
}

impl ConvexApprox {
    pub fn tone(&self, k: usize) -> &ToneApprox {
        &self.tones[k]
    }

    pub fn n_tones(&self) -> usize {
        self.tones.len()
    }

    pub fn expansion_point(&self) -> &SpectrumAllocation {
        &self.expansion_point
    }

    /// Σ_k b_{k,cvx}(s_k).
    pub fn total_objective(&self, scenario: &Scenario, alloc: &SpectrumAllocation) -> f64 {
        self.tones
            .iter()
            .zip(&alloc.tones)
            .map(|(t, a)| t.objective(&a.power, scenario.weights(), scenario.constants()))
            .sum()
    }
}

pub fn build_approx(scenario: &Scenario, expansion_point: &SpectrumAllocation) -> ConvexApprox {
    use rayon::prelude::*;
    let tones = (0..scenario.n_tones())
        .into_par_iter()
        .map(|k| ToneApprox::build(scenario.tone(k), &expansion_point.tones[k].power, scenario.constants()))
        .collect();
    ConvexApprox { tones, expansion_point: expansion_point.clone() }
}

pub fn surrogate_objective(scenario: &Scenario, approx: &ConvexApprox, k: usize, power: &[f64]) -> f64 {
    approx.tone(k).objective(power, scenario.weights(), scenario.constants())
}

pub fn surrogate_gradient(scenario: &Scenario, approx: &ConvexApprox, k: usize, power: &[f64]) -> Vec<f64> {
    approx.tone(k).gradient(power, scenario.weights(), scenario.constants())
}

/// Maximizes b_cvx(s) − λ·s − (c/2)‖s‖² over the tone's box with a projected
/// Newton method (free variables take a Newton step, bound-pinned ones a
/// scaled gradient step, Armijo search along the projection arc).
pub fn maximize_surrogate(approx: &ToneApprox, problem: &ToneProblem, lambda: &[f64], c: f64, warm: &[f64]) -> Vec<f64> {
    let n = approx.n_users();
    let upper = problem.upper;
    let w = problem.weights;
    let k = problem.constants;
    let scale = upper.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let f = |s: &[f64]| approx.objective(s, w, k) - crate::pertone::dot(lambda, s) - 0.5 * c * s.iter().map(|x| x * x).sum::<f64>();
    let project = |s: &mut [f64]| {
        for (x, &u) in s.iter_mut().zip(upper) {
            *x = x.clamp(0.0, u);
        }
    };

    let mut s = warm.to_vec();
    project(&mut s);
    let mut fs = f(&s);
    for _ in 0..100 {
        let mut g = approx.gradient(&s, w, k);
        for j in 0..n {
            g[j] -= lambda[j] + c * s[j];
        }
        let mut hess = approx.hessian(&s, w, k);
        for j in 0..n {
            hess[j * n + j] -= c;
        }
        // projected-gradient residual decides convergence
        let resid = (0..n).map(|j| ((s[j] + g[j]).clamp(0.0, upper[j]) - s[j]).abs()).fold(0.0, f64::max);
        let eps = resid.min(1e-9 * scale);
        let active: Vec<bool> =
            (0..n).map(|j| (s[j] <= eps && g[j] < 0.0) || (s[j] >= upper[j] - eps && g[j] > 0.0)).collect();
        let free: Vec<usize> = (0..n).filter(|&j| !active[j]).collect();

        let mut d = vec![0.0; n];
        for j in (0..n).filter(|&j| active[j]) {
            d[j] = g[j] / (-hess[j * n + j]).max(f64::MIN_POSITIVE);
        }
        if !free.is_empty() {
            let m = DMatrix::from_fn(free.len(), free.len(), |a, b| -hess[free[a] * n + free[b]]);
            let rhs = DVector::from_fn(free.len(), |a, _| g[free[a]]);
            let step = match m.clone().cholesky() {
                Some(ch) => ch.solve(&rhs),
                None => {
                    let bump = 1e-12 * m.diagonal().amax().max(1.0);
                    let reg = m + DMatrix::identity(free.len(), free.len()) * bump;
                    match reg.cholesky() {
                        Some(ch) => ch.solve(&rhs),
                        None => rhs.clone(),
                    }
                }
            };
            for (a, &j) in free.iter().enumerate() {
                d[j] = step[a];
            }
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut trial: Vec<f64> = s.iter().zip(&d).map(|(x, dx)| x + t * dx).collect();
            project(&mut trial);
            let ft = f(&trial);
            let lin: f64 = g.iter().zip(trial.iter().zip(&s)).map(|(gj, (a, b))| gj * (a - b)).sum();
            if ft >= fs + 1e-4 * lin {
                accepted = Some((trial, ft));
                break;
            }
            t *= 0.5;
        }
        let Some((trial, ft)) = accepted else { break };
        let moved = trial.iter().zip(&s).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        s = trial;
        fs = ft;
        if moved <= 1e-14 * scale || resid <= 1e-13 * scale {
            break;
        }
    }
    s
}
