//! Scenario presets, experiment runner and built-in verifications.
//!
//! Presets are qualitative reconstructions of classic DSL topologies built
//! with the synthetic channel model:
//!
//! | name             | lines (m)                          | band                |
//! |------------------|------------------------------------|---------------------|
//! | `adsl-nearfar-2` | 4500 from the CO, 1500 from an RT  | ADSL downstream     |
//! | `vdsl-up-4`      | 1200, 1200, 300, 300               | VDSL upstream       |
//! | `vdsl-up-6`      | 1200, 1000, 800, 600, 450, 300     | VDSL upstream       |
//! | `vdsl-up-6sym`   | 1200, 900, 600, 300, 300, 300      | VDSL upstream       |
//!
//! In the downstream preset the remote terminal sits 3000 m down the bundle,
//! so its line overlaps the last 1500 m of the CO line and injects strong
//! crosstalk into a heavily attenuated signal. VDSL upstream lines all end at
//! the cabinet (position 0) and transmit from their own length.

mod experiment;
mod race;
mod theorem2;

pub use experiment::{
    run_experiment, ExperimentSpec, ScenarioSource, SolverEntry, SolverKind, SolverSummary, StepKind,
};
pub use race::{convergence_race, RaceReport};
pub use theorem2::{random_convex_instance, verify_theorem2, Theorem2Record};

use crate::channel::{synth_scenario, BandPlan, ChannelModel, Line, ScenarioSpec};
use crate::error::{Error, Result};
use crate::model::{Scenario, ADSL_BUDGET_DBM, DSL_SNR_GAP_DB, DSL_SYMBOL_RATE_HZ, DSL_TONE_SPACING_HZ, VDSL_BUDGET_DBM};

pub const PRESET_NAMES: [&str; 4] = ["adsl-nearfar-2", "vdsl-up-4", "vdsl-up-6", "vdsl-up-6sym"];

/// Flat ADSL downstream mask, dBm/Hz.
pub const ADSL_MASK_DBM_HZ: f64 = -36.5;
/// Flat VDSL upstream mask, dBm/Hz.
pub const VDSL_MASK_DBM_HZ: f64 = -46.0;

fn vdsl_spec(lengths: &[f64]) -> ScenarioSpec {
    ScenarioSpec {
        lines: lengths.iter().map(|&l| Line { tx_m: l, rx_m: 0.0 }).collect(),
        model: ChannelModel::DEFAULT,
        band_plan: BandPlan::vdsl_upstream(),
        budgets_dbm: vec![VDSL_BUDGET_DBM; lengths.len()],
        mask_dbm_hz: Some(VDSL_MASK_DBM_HZ),
        weights: None,
        gamma_db: DSL_SNR_GAP_DB,
        tone_spacing_hz: DSL_TONE_SPACING_HZ,
        symbol_rate_hz: DSL_SYMBOL_RATE_HZ,
    }
}

/// The synthetic description behind a preset.
pub fn preset_spec(name: &str) -> Result<ScenarioSpec> {
    Ok(match name {
        "adsl-nearfar-2" => ScenarioSpec {
            lines: vec![Line { tx_m: 0.0, rx_m: 4500.0 }, Line { tx_m: 3000.0, rx_m: 4500.0 }],
            model: ChannelModel::DEFAULT,
            band_plan: BandPlan::adsl_downstream(),
            budgets_dbm: vec![ADSL_BUDGET_DBM; 2],
            mask_dbm_hz: Some(ADSL_MASK_DBM_HZ),
            weights: None,
            gamma_db: DSL_SNR_GAP_DB,
            tone_spacing_hz: DSL_TONE_SPACING_HZ,
            symbol_rate_hz: DSL_SYMBOL_RATE_HZ,
        },
        "vdsl-up-4" => vdsl_spec(&[1200.0, 1200.0, 300.0, 300.0]),
        "vdsl-up-6" => vdsl_spec(&[1200.0, 1000.0, 800.0, 600.0, 450.0, 300.0]),
        "vdsl-up-6sym" => vdsl_spec(&[1200.0, 900.0, 600.0, 300.0, 300.0, 300.0]),
        other => return Err(Error::UnknownPreset(other.to_string())),
    })
}

pub fn preset(name: &str) -> Result<Scenario> {
    synth_scenario(&preset_spec(name)?)
}
