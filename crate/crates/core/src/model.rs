//! Problem instances: physical constants, per-tone channels, budgets and
//! masks, plus bit-loading and rate evaluation.
//!
//! Every power inside the crate is a linear quantity in mW per tone. dB and
//! dBm/Hz values only appear at the file boundary (see [`crate::io`]).

use std::f64::consts::LN_2;

use crate::error::{Error, Result};

/// SNR gap used by the DSL presets, in dB.
pub const DSL_SNR_GAP_DB: f64 = 12.9;
/// DMT tone spacing, in Hz.
pub const DSL_TONE_SPACING_HZ: f64 = 4312.5;
/// DMT symbol rate, in Hz.
pub const DSL_SYMBOL_RATE_HZ: f64 = 4000.0;
/// Per-user total power for the VDSL presets, in dBm.
pub const VDSL_BUDGET_DBM: f64 = 11.5;
/// Per-user total power for the ADSL presets, in dBm.
pub const ADSL_BUDGET_DBM: f64 = 20.4;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    /// SNR gap Γ as a linear ratio.
    pub snr_gap: f64,
    pub tone_spacing_hz: f64,
    pub symbol_rate_hz: f64,
}

impl PhysicalConstants {
    pub fn new(snr_gap: f64, tone_spacing_hz: f64, symbol_rate_hz: f64) -> Result<Self> {
        if !(snr_gap >= 1.0 && snr_gap.is_finite()) {
            return Err(Error::InvalidScenario(format!(
                "SNR gap must be a finite ratio >= 1, got {snr_gap}"
            )));
        }
        for (name, v) in [("tone spacing", tone_spacing_hz), ("symbol rate", symbol_rate_hz)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidScenario(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self { snr_gap, tone_spacing_hz, symbol_rate_hz })
    }

    pub fn from_db(gamma_db: f64, tone_spacing_hz: f64, symbol_rate_hz: f64) -> Result<Self> {
        Self::new(db_to_linear(gamma_db), tone_spacing_hz, symbol_rate_hz)
    }

    /// Γ = 12.9 dB, Δf = 4.3125 kHz, f_s = 4 kHz.
    pub fn dsl() -> Self {
        Self::from_db(DSL_SNR_GAP_DB, DSL_TONE_SPACING_HZ, DSL_SYMBOL_RATE_HZ)
            .expect("DSL constants are valid")
    }

    pub fn gamma_db(&self) -> f64 {
        linear_to_db(self.snr_gap)
    }
}

/// Squared channel magnitudes and received noise on one tone.
#[derive(Debug, Clone, PartialEq)]
pub struct ToneChannel {
    n: usize,
    /// Row-major N×N, entry `[n * N + m]` is |h^{n,m}|², transmitter m into receiver n.
    gains_sq: Vec<f64>,
    noise: Vec<f64>,
}

impl ToneChannel {
    pub fn new(gains_sq: Vec<Vec<f64>>, noise: Vec<f64>) -> Result<Self> {
        let n = noise.len();
        if n == 0 {
            return Err(Error::Dimension("a tone needs at least one user".into()));
        }
        if gains_sq.len() != n || gains_sq.iter().any(|row| row.len() != n) {
            return Err(Error::Dimension(format!(
                "gain matrix must be {n}x{n} to match the noise vector"
            )));
        }
        let flat: Vec<f64> = gains_sq.into_iter().flatten().collect();
        Self::from_flat(n, flat, noise)
    }

    pub fn from_flat(n: usize, gains_sq: Vec<f64>, noise: Vec<f64>) -> Result<Self> {
        if gains_sq.len() != n * n || noise.len() != n {
            return Err(Error::Dimension(format!("expected {n}x{n} gains and {n} noise values")));
        }
        for (i, &g) in gains_sq.iter().enumerate() {
            let (r, c) = (i / n, i % n);
            if !(g >= 0.0 && g.is_finite()) || (r == c && g <= 0.0) {
                return Err(Error::InvalidScenario(format!("gain |h^({r},{c})|^2 = {g} is not allowed")));
            }
        }
        if let Some(bad) = noise.iter().find(|&&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidScenario(format!("noise must be positive, got {bad}")));
        }
        Ok(Self { n, gains_sq, noise })
    }

    pub fn n_users(&self) -> usize {
        self.n
    }

    /// |h^{rx,tx}|².
    #[inline]
    pub fn gain(&self, rx: usize, tx: usize) -> f64 {
        self.gains_sq[rx * self.n + tx]
    }

    #[inline]
    pub fn noise(&self, user: usize) -> f64 {
        self.noise[user]
    }

    pub fn noise_vec(&self) -> &[f64] {
        &self.noise
    }

    pub fn gains_flat(&self) -> &[f64] {
        &self.gains_sq
    }

    pub fn gain_rows(&self) -> Vec<Vec<f64>> {
        self.gains_sq.chunks(self.n).map(<[f64]>::to_vec).collect()
    }

    /// Crosstalk plus noise seen by `user`, Σ_{m≠n} |h^{n,m}|² s^m + σ^n.
    #[inline]
    pub fn interference(&self, power: &[f64], user: usize) -> f64 {
        let row = &self.gains_sq[user * self.n..(user + 1) * self.n];
        let mut acc = self.noise[user];
        for (m, (&g, &s)) in row.iter().zip(power).enumerate() {
            if m != user {
                acc += g * s;
            }
        }
        acc
    }
}

/// Transmit powers of all users on a single tone, in mW.
#[derive(Debug, Clone, PartialEq)]
pub struct ToneAllocation {
    pub power: Vec<f64>,
}

impl ToneAllocation {
    pub fn new(power: Vec<f64>) -> Self {
        Self { power }
    }

    pub fn zeros(n: usize) -> Self {
        Self { power: vec![0.0; n] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumAllocation {
    pub tones: Vec<ToneAllocation>,
}

impl SpectrumAllocation {
    pub fn new(tones: Vec<ToneAllocation>) -> Self {
        Self { tones }
    }

    pub fn zeros(n_tones: usize, n_users: usize) -> Self {
        Self { tones: vec![ToneAllocation::zeros(n_users); n_tones] }
    }

    pub fn n_tones(&self) -> usize {
        self.tones.len()
    }

    /// P^n = Σ_k s_k^n.
    pub fn user_total(&self, user: usize) -> f64 {
        self.tones.iter().map(|t| t.power[user]).sum()
    }

    pub fn totals(&self) -> Vec<f64> {
        let n = self.tones.first().map_or(0, |t| t.power.len());
        (0..n).map(|u| self.user_total(u)).collect()
    }
}

/// A complete problem instance. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    tones: Vec<ToneChannel>,
    weights: Vec<f64>,
    budgets: Vec<f64>,
    mask: Vec<Vec<f64>>,
    /// Box upper bound min(mask, budget) per tone and user.
    upper: Vec<Vec<f64>>,
    constants: PhysicalConstants,
}

impl Scenario {
    /// `mask` may be `None`, in which case every tone is capped at the user's budget.
    pub fn new(
        tones: Vec<ToneChannel>,
        weights: Vec<f64>,
        budgets: Vec<f64>,
        mask: Option<Vec<Vec<f64>>>,
        constants: PhysicalConstants,
    ) -> Result<Self> {
        let n = weights.len();
        if n == 0 || tones.is_empty() {
            return Err(Error::Dimension("a scenario needs at least one user and one tone".into()));
        }
        if budgets.len() != n {
            return Err(Error::Dimension(format!("{} budgets for {n} users", budgets.len())));
        }
        if let Some(k) = tones.iter().position(|t| t.n_users() != n) {
            return Err(Error::Dimension(format!("tone {k} has {} users, expected {n}", tones[k].n_users())));
        }
        if let Some(w) = weights.iter().find(|&&w| !(w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidScenario(format!("weights must be nonnegative, got {w}")));
        }
        if let Some(p) = budgets.iter().find(|&&p| !(p > 0.0 && p.is_finite())) {
            return Err(Error::InvalidScenario(format!("budgets must be positive, got {p}")));
        }
        let mask = match mask {
            Some(m) => {
                if m.len() != tones.len() || m.iter().any(|row| row.len() != n) {
                    return Err(Error::Dimension("mask must be K x N".into()));
                }
                if m.iter().flatten().any(|&v| !(v >= 0.0) || v.is_nan()) {
                    return Err(Error::InvalidScenario("mask entries must be nonnegative".into()));
                }
                m
            }
            None => vec![budgets.clone(); tones.len()],
        };
        let upper = mask
            .iter()
            .map(|row| row.iter().zip(&budgets).map(|(&m, &p)| m.min(p)).collect())
            .collect();
        Ok(Self { tones, weights, budgets, mask, upper, constants })
    }

    pub fn n_users(&self) -> usize {
        self.weights.len()
    }

    pub fn n_tones(&self) -> usize {
        self.tones.len()
    }

    pub fn tone(&self, k: usize) -> &ToneChannel {
        &self.tones[k]
    }

    pub fn tones(&self) -> &[ToneChannel] {
        &self.tones
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn budgets(&self) -> &[f64] {
        &self.budgets
    }

    pub fn mask(&self, k: usize) -> &[f64] {
        &self.mask[k]
    }

    /// s_k^{n,max} = min(s_k^{n,mask}, P^{n,tot}) for every user on tone `k`.
    pub fn upper(&self, k: usize) -> &[f64] {
        &self.upper[k]
    }

    pub fn constants(&self) -> &PhysicalConstants {
        &self.constants
    }

    /// Same instance with different weights.
    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        Self::new(self.tones.clone(), weights, self.budgets.clone(), Some(self.mask.clone()), self.constants)
    }

    /// Same instance with different constants.
    pub fn with_constants(&self, constants: PhysicalConstants) -> Result<Self> {
        Self::new(self.tones.clone(), self.weights.clone(), self.budgets.clone(), Some(self.mask.clone()), constants)
    }

    /// Flat spectra s_k^n = min(s_k^{n,max}, P^{n,tot}/K).
    pub fn flat_allocation(&self) -> SpectrumAllocation {
        let k_count = self.n_tones() as f64;
        let tones = (0..self.n_tones())
            .map(|k| {
                let power = self.upper(k).iter().zip(&self.budgets).map(|(&u, &p)| u.min(p / k_count)).collect();
                ToneAllocation::new(power)
            })
            .collect();
        SpectrumAllocation::new(tones)
    }

    /// Checks dimensions and the per-tone box 0 ≤ s ≤ s^max (with a relative slack).
    pub fn check_allocation(&self, alloc: &SpectrumAllocation) -> Result<()> {
        if alloc.n_tones() != self.n_tones() {
            return Err(Error::Dimension(format!("{} tones in allocation, {} in scenario", alloc.n_tones(), self.n_tones())));
        }
        for (k, t) in alloc.tones.iter().enumerate() {
            if t.power.len() != self.n_users() {
                return Err(Error::Dimension(format!("tone {k} has {} powers", t.power.len())));
            }
            for (n, (&s, &u)) in t.power.iter().zip(self.upper(k)).enumerate() {
                if !(s >= 0.0) || s > u * (1.0 + 1e-12) {
                    return Err(Error::InvalidScenario(format!("tone {k} user {n}: power {s} outside [0, {u}]")));
                }
            }
        }
        Ok(())
    }

    /// Σ_k ½‖s_k^max‖², the prox diameter bound for d_k = ½‖s_k‖².
    pub fn prox_diameter_sum(&self) -> f64 {
        (0..self.n_tones()).map(|k| prox_diameter(self.upper(k))).sum()
    }

    /// Positive reference magnitude of the objective: weighted rate sum of the flat spectra.
    pub fn objective_scale(&self) -> f64 {
        let v = weighted_rate_sum(self, &self.flat_allocation());
        if v > 0.0 {
            v
        } else {
            self.constants.symbol_rate_hz * self.n_tones() as f64
        }
    }
}

/// D_{S_k} = ½‖s_k^max‖².
pub fn prox_diameter(upper: &[f64]) -> f64 {
    0.5 * upper.iter().map(|u| u * u).sum::<f64>()
}

/// b_k^n in bits/Hz: log2(1 + |h^{n,n}|² s^n / (Γ (Σ_{m≠n} |h^{n,m}|² s^m + σ^n))).
#[inline]
pub fn bit_loading(tone: &ToneChannel, power: &[f64], user: usize, constants: &PhysicalConstants) -> f64 {
    let sinr = tone.gain(user, user) * power[user] / (constants.snr_gap * tone.interference(power, user));
    sinr.ln_1p() / LN_2
}

/// R^n = f_s Σ_k b_k^n in bits/s.
pub fn user_rate(scenario: &Scenario, alloc: &SpectrumAllocation, user: usize) -> f64 {
    let c = scenario.constants();
    let bits: f64 = alloc
        .tones
        .iter()
        .zip(scenario.tones())
        .map(|(t, ch)| bit_loading(ch, &t.power, user, c))
        .sum();
    c.symbol_rate_hz * bits
}

/// Σ_n w_n R^n.
pub fn weighted_rate_sum(scenario: &Scenario, alloc: &SpectrumAllocation) -> f64 {
    scenario
        .weights()
        .iter()
        .enumerate()
        .map(|(n, &w)| w * user_rate(scenario, alloc, n))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_constants() -> PhysicalConstants {
        PhysicalConstants::new(1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn zero_own_power_loads_no_bits() {
        let tone = ToneChannel::new(vec![vec![1.0, 0.5], vec![0.5, 1.0]], vec![1.0, 1.0]).unwrap();
        assert_eq!(bit_loading(&tone, &[0.0, 3.0], 0, &unit_constants()), 0.0);
    }

    #[test]
    fn single_user_unit_snr_is_one_bit() {
        let c = PhysicalConstants::new(2.0, 1.0, 1.0).unwrap();
        // |h|² s / (Γ σ) = 4 * 1 / (2 * 2) = 1
        let tone = ToneChannel::new(vec![vec![4.0]], vec![2.0]).unwrap();
        assert_eq!(bit_loading(&tone, &[1.0], 0, &c), 1.0);
    }

    #[test]
    fn two_user_hand_evaluation() {
        let tone = ToneChannel::new(vec![vec![1.0, 1.0], vec![1.0, 1.0]], vec![2.0, 2.0]).unwrap();
        let b = bit_loading(&tone, &[3.0, 1.0], 0, &unit_constants());
        assert!((b - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gamma_divides_whole_sinr() {
        let c = PhysicalConstants::new(4.0, 1.0, 1.0).unwrap();
        let tone = ToneChannel::new(vec![vec![1.0, 1.0], vec![1.0, 1.0]], vec![1.0, 1.0]).unwrap();
        // SINR = 12 / (4 * (3 + 1)) = 0.75
        let b = bit_loading(&tone, &[12.0, 3.0], 0, &c);
        assert!((b - 1.75f64.log2()).abs() < 1e-15);
    }

    #[test]
    fn identical_tones_rate_is_linear() {
        // each tone loads exactly 1 bit
        let tone = ToneChannel::new(vec![vec![1.0]], vec![1.0]).unwrap();
        let c = PhysicalConstants::new(1.0, 4312.5, 4000.0).unwrap();
        let k = 7;
        let sc = Scenario::new(vec![tone; k], vec![1.0], vec![100.0], None, c).unwrap();
        let alloc = SpectrumAllocation::new(vec![ToneAllocation::new(vec![1.0]); k]);
        assert_eq!(user_rate(&sc, &alloc, 0), 4000.0 * k as f64);
        assert_eq!(user_rate(&sc, &SpectrumAllocation::zeros(k, 1), 0), 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(ToneChannel::new(vec![vec![0.0]], vec![1.0]).is_err());
        assert!(ToneChannel::new(vec![vec![1.0, -1.0], vec![0.0, 1.0]], vec![1.0, 1.0]).is_err());
        assert!(ToneChannel::new(vec![vec![1.0]], vec![0.0]).is_err());
        assert!(ToneChannel::new(vec![vec![1.0, 0.0]], vec![1.0]).is_err());
        assert!(PhysicalConstants::new(0.5, 1.0, 1.0).is_err());
        let tone = ToneChannel::new(vec![vec![1.0]], vec![1.0]).unwrap();
        let c = unit_constants();
        assert!(Scenario::new(vec![tone.clone()], vec![-1.0], vec![1.0], None, c).is_err());
        assert!(Scenario::new(vec![tone.clone()], vec![1.0], vec![0.0], None, c).is_err());
        assert!(Scenario::new(vec![tone], vec![1.0, 1.0], vec![1.0, 1.0], None, c).is_err());
    }

    #[test]
    fn default_mask_is_budget_and_upper_is_clipped() {
        let tone = ToneChannel::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![1.0, 1.0]).unwrap();
        let c = unit_constants();
        let sc = Scenario::new(vec![tone.clone(); 2], vec![0.5, 0.5], vec![2.0, 3.0], None, c).unwrap();
        assert_eq!(sc.mask(1), &[2.0, 3.0]);
        let sc = Scenario::new(vec![tone; 2], vec![0.5, 0.5], vec![2.0, 3.0], Some(vec![vec![5.0, 1.0]; 2]), c).unwrap();
        assert_eq!(sc.upper(0), &[2.0, 1.0]);
        assert_eq!(sc.flat_allocation().tones[0].power, vec![1.0, 1.0]);
    }
}
