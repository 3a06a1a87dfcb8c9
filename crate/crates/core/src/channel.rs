//! Parametric synthetic channel model.
//!
//! Lines sit on a one-dimensional bundle. Each line has a transmitter and a
//! receiver position in metres. The direct path of line `n` attenuates as
//!
//! ```text
//! |h^{n,n}(f)|² = 10^(−k_a · L_n · √(f / 1 MHz) / 10)
//! ```
//!
//! and the far-end crosstalk from transmitter `m` into receiver `n` is
//!
//! ```text
//! |h^{n,m}(f)|² = k_x · L_coup · (f / 1 MHz)² · 10^(−k_a · |rx_n − tx_m| · √(f / 1 MHz) / 10)
//! ```
//!
//! where `L_coup` is the length of the bundle section shared by both lines.
//! When the two lines are co-located this is exactly `k_x L_coup f² |h^{n,n}|²`;
//! separating the terminals lets the same formula describe near-far topologies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{db_to_linear, PhysicalConstants, Scenario, ToneChannel};

/// Direct-path power gain of a line of `length_m` metres at `freq_hz`.
pub fn insertion_gain(attenuation_db_per_m: f64, length_m: f64, freq_hz: f64) -> f64 {
    let att_db = attenuation_db_per_m * length_m * (freq_hz / 1e6).sqrt();
    db_to_linear(-att_db)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Line {
    pub tx_m: f64,
    pub rx_m: f64,
}

impl Line {
    pub fn length(&self) -> f64 {
        (self.rx_m - self.tx_m).abs()
    }

    fn span(&self) -> (f64, f64) {
        (self.tx_m.min(self.rx_m), self.tx_m.max(self.rx_m))
    }

    /// Length of the bundle section shared with `other`.
    pub fn overlap(&self, other: &Line) -> f64 {
        let (a0, a1) = self.span();
        let (b0, b1) = other.span();
        (a1.min(b1) - a0.max(b0)).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelModel {
    /// k_a in dB per metre at 1 MHz, scaling with √f.
    pub attenuation_db_per_m: f64,
    /// k_x per metre of coupling length at 1 MHz, scaling with f².
    pub fext_per_m: f64,
    /// Flat background noise at every receiver.
    pub noise_dbm_hz: f64,
}

impl ChannelModel {
    /// Roughly 0.5 mm cable with a strong single-disturber FEXT coupling.
    pub const DEFAULT: ChannelModel = ChannelModel {
        attenuation_db_per_m: 0.017,
        fext_per_m: 8.2e-8,
        noise_dbm_hz: -140.0,
    };
}

impl Default for ChannelModel {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// Used tones, as inclusive index ranges on the DMT grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandPlan {
    pub bands: Vec<(usize, usize)>,
}

impl BandPlan {
    /// ADSL downstream, tones 32..=255 of the 256-tone grid.
    pub fn adsl_downstream() -> Self {
        Self { bands: vec![(32, 255)] }
    }

    /// VDSL upstream bands US1 and US2 of a 4096-tone grid (1147 used tones).
    pub fn vdsl_upstream() -> Self {
        Self { bands: vec![(870, 1205), (1972, 2782)] }
    }

    pub fn tone_indices(&self) -> Vec<usize> {
        self.bands.iter().flat_map(|&(lo, hi)| lo..=hi).collect()
    }
}

fn default_gamma_db() -> f64 {
    crate::model::DSL_SNR_GAP_DB
}
fn default_tone_spacing() -> f64 {
    crate::model::DSL_TONE_SPACING_HZ
}
fn default_symbol_rate() -> f64 {
    crate::model::DSL_SYMBOL_RATE_HZ
}

/// Everything needed to build a synthetic [`Scenario`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub lines: Vec<Line>,
    #[serde(default)]
    pub model: ChannelModel,
    pub band_plan: BandPlan,
    pub budgets_dbm: Vec<f64>,
    /// Flat mask for every user; `None` caps each tone at the budget.
    #[serde(default)]
    pub mask_dbm_hz: Option<f64>,
    /// Defaults to 1/N.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    #[serde(default = "default_gamma_db")]
    pub gamma_db: f64,
    #[serde(default = "default_tone_spacing")]
    pub tone_spacing_hz: f64,
    #[serde(default = "default_symbol_rate")]
    pub symbol_rate_hz: f64,
}

/// Builds the scenario described by `spec`. Deterministic.
pub fn synth_scenario(spec: &ScenarioSpec) -> Result<Scenario> {
    let n = spec.lines.len();
    if n == 0 {
        return Err(Error::InvalidScenario("no lines".into()));
    }
    if let Some(l) = spec.lines.iter().find(|l| !(l.length() > 0.0 && l.length().is_finite())) {
        return Err(Error::InvalidScenario(format!("line length must be positive, got {}", l.length())));
    }
    let tone_idx = spec.band_plan.tone_indices();
    if tone_idx.is_empty() || spec.band_plan.bands.iter().any(|&(lo, hi)| lo > hi) {
        return Err(Error::InvalidScenario("empty band plan".into()));
    }
    if spec.budgets_dbm.len() != n {
        return Err(Error::Dimension(format!("{} budgets for {n} lines", spec.budgets_dbm.len())));
    }
    let constants = PhysicalConstants::from_db(spec.gamma_db, spec.tone_spacing_hz, spec.symbol_rate_hz)?;
    let m = &spec.model;
    let noise = db_to_linear(m.noise_dbm_hz) * spec.tone_spacing_hz;

    let tones = tone_idx
        .iter()
        .map(|&k| {
            let f = k as f64 * spec.tone_spacing_hz;
            let f_mhz = f / 1e6;
            let mut gains = vec![0.0; n * n];
            for (rx, victim) in spec.lines.iter().enumerate() {
                for (tx, disturber) in spec.lines.iter().enumerate() {
                    gains[rx * n + tx] = if rx == tx {
                        insertion_gain(m.attenuation_db_per_m, victim.length(), f)
                    } else {
                        let path = (victim.rx_m - disturber.tx_m).abs();
                        m.fext_per_m
                            * victim.overlap(disturber)
                            * f_mhz
                            * f_mhz
                            * insertion_gain(m.attenuation_db_per_m, path, f)
                    };
                }
            }
            ToneChannel::from_flat(n, gains, vec![noise; n])
        })
        .collect::<Result<Vec<_>>>()?;

    let budgets: Vec<f64> = spec.budgets_dbm.iter().map(|&p| db_to_linear(p)).collect();
    let weights = spec.weights.clone().unwrap_or_else(|| vec![1.0 / n as f64; n]);
    let mask = spec
        .mask_dbm_hz
        .map(|db| vec![vec![db_to_linear(db) * spec.tone_spacing_hz; n]; tones.len()]);
    Scenario::new(tones, weights, budgets, mask, constants)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::linear_to_db;

    fn vdsl_spec(lengths: &[f64]) -> ScenarioSpec {
        ScenarioSpec {
            lines: lengths.iter().map(|&l| Line { tx_m: l, rx_m: 0.0 }).collect(),
            model: ChannelModel::DEFAULT,
            band_plan: BandPlan::vdsl_upstream(),
            budgets_dbm: vec![11.5; lengths.len()],
            mask_dbm_hz: None,
            weights: None,
            gamma_db: 12.9,
            tone_spacing_hz: 4312.5,
            symbol_rate_hz: 4000.0,
        }
    }

    #[test]
    fn zero_length_is_lossless() {
        assert_eq!(insertion_gain(0.017, 0.0, 5e6), 1.0);
    }

    #[test]
    fn attenuation_db_is_linear_in_ka() {
        for f in [1e5, 1e6, 7.3e6] {
            let a1 = linear_to_db(insertion_gain(0.01, 800.0, f));
            let a2 = linear_to_db(insertion_gain(0.02, 800.0, f));
            assert!((a2 - 2.0 * a1).abs() < 1e-9 * a1.abs());
        }
    }

    #[test]
    fn colocated_fext_matches_plain_formula() {
        let mut spec = vdsl_spec(&[500.0, 500.0]);
        spec.band_plan = BandPlan { bands: vec![(1000, 1000)] };
        let sc = synth_scenario(&spec).unwrap();
        let t = sc.tone(0);
        let f_mhz = 1000.0 * 4312.5 / 1e6;
        let expect = 8.2e-8 * 500.0 * f_mhz * f_mhz * t.gain(0, 0);
        assert!((t.gain(0, 1) - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn near_far_gap_in_top_band() {
        let sc = synth_scenario(&vdsl_spec(&[1200.0, 300.0])).unwrap();
        let top = sc.tone(sc.n_tones() - 1);
        let gap = linear_to_db(top.gain(1, 1)) - linear_to_db(top.gain(0, 0));
        assert!(gap >= 30.0, "gap {gap} dB");
        // the short line's crosstalk dominates the long line's own signal
        assert!(top.gain(0, 1) > top.gain(0, 0));
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(synth_scenario(&vdsl_spec(&[0.0, 300.0])).is_err());
        let mut spec = vdsl_spec(&[300.0]);
        spec.band_plan.bands.clear();
        assert!(synth_scenario(&spec).is_err());
    }

    #[test]
    fn tone_count_and_weights() {
        let sc = synth_scenario(&vdsl_spec(&[1200.0, 900.0, 300.0])).unwrap();
        assert_eq!(sc.n_tones(), 1147);
        assert!(sc.weights().iter().all(|&w| (w - 1.0 / 3.0).abs() < 1e-15));
    }
}
