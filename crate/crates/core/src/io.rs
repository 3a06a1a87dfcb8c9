//! File formats: JSON scenarios, CSV spectra and CSV solver traces.
//!
//! Scenario JSON comes in two shapes. The explicit form lists every tone:
//!
//! ```json
//! {
//!   "constants": {"gamma_db": 12.9, "tone_spacing_hz": 4312.5, "symbol_rate_hz": 4000.0},
//!   "users": [{"budget_dbm": 20.4, "weight": 0.5}, {"budget_dbm": 20.4, "weight": 0.5}],
//!   "tones": [{"gains_sq_db": [[-10.0, -60.0], [null, -12.0]],
//!              "noise_dbm_hz": [-140.0, -140.0],
//!              "mask_dbm_hz": [-40.0, -40.0]}]
//! }
//! ```
//!
//! A `null` gain stands for an exactly zero coupling. `mask_dbm_hz` may be
//! omitted, in which case the budget caps the tone. The synthetic form is
//! `{"synthetic": {...}}` holding a [`ScenarioSpec`].

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{synth_scenario, ScenarioSpec};
use crate::dual::TraceRow;
use crate::error::{Error, Result};
use crate::model::{
    db_to_linear, linear_to_db, PhysicalConstants, Scenario, SpectrumAllocation, ToneAllocation, ToneChannel,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsFile {
    pub gamma_db: f64,
    pub tone_spacing_hz: f64,
    pub symbol_rate_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserFile {
    pub budget_dbm: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToneFile {
    pub gains_sq_db: Vec<Vec<Option<f64>>>,
    pub noise_dbm_hz: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_dbm_hz: Option<Vec<f64>>,
}

/// On-disk scenario. Exactly one of the explicit fields set or `synthetic` must be present.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<ConstantsFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub users: Option<Vec<UserFile>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tones: Option<Vec<ToneFile>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<ScenarioSpec>,
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Schema { path: path.into(), message: message.into() }
}

/// Parses scenario JSON, reporting type errors with the path of the offending field.
pub fn parse_scenario_file(text: &str) -> Result<ScenarioFile> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        schema(path, e.into_inner().to_string())
    })
}

impl ScenarioFile {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn into_scenario(&self) -> Result<Scenario> {
        match (&self.synthetic, &self.constants, &self.users, &self.tones) {
            (Some(spec), None, None, None) => synth_scenario(spec),
            (None, Some(c), Some(users), Some(tones)) => explicit_scenario(c, users, tones),
            (Some(_), ..) => Err(schema(".", "`synthetic` cannot be combined with explicit fields")),
            (None, c, u, t) => {
                let missing = [("constants", c.is_none()), ("users", u.is_none()), ("tones", t.is_none())]
                    .into_iter()
                    .find(|(_, m)| *m)
                    .map_or("constants", |(name, _)| name);
                Err(schema(missing, "missing field"))
            }
        }
    }

    /// Explicit-form description of `scenario`. Values pass through dB, so the
    /// conversion back is exact only to rounding.
    pub fn from_scenario(scenario: &Scenario) -> Self {
        let c = scenario.constants();
        let df = c.tone_spacing_hz;
        let users = scenario
            .budgets()
            .iter()
            .zip(scenario.weights())
            .map(|(&p, &w)| UserFile { budget_dbm: linear_to_db(p), weight: w })
            .collect();
        let tones = scenario
            .tones()
            .iter()
            .enumerate()
            .map(|(k, t)| ToneFile {
                gains_sq_db: t
                    .gain_rows()
                    .into_iter()
                    .map(|row| row.into_iter().map(|g| (g > 0.0).then(|| linear_to_db(g))).collect())
                    .collect(),
                noise_dbm_hz: t.noise_vec().iter().map(|&s| linear_to_db(s / df)).collect(),
                mask_dbm_hz: Some(scenario.mask(k).iter().map(|&m| linear_to_db(m / df)).collect()),
            })
            .collect();
        Self {
            constants: Some(ConstantsFile {
                gamma_db: c.gamma_db(),
                tone_spacing_hz: c.tone_spacing_hz,
                symbol_rate_hz: c.symbol_rate_hz,
            }),
            users: Some(users),
            tones: Some(tones),
            synthetic: None,
        }
    }
}

fn explicit_scenario(c: &ConstantsFile, users: &[UserFile], tones: &[ToneFile]) -> Result<Scenario> {
    let constants = PhysicalConstants::from_db(c.gamma_db, c.tone_spacing_hz, c.symbol_rate_hz)
        .map_err(|e| schema("constants", e.to_string()))?;
    let df = constants.tone_spacing_hz;
    let n = users.len();
    if n == 0 {
        return Err(schema("users", "at least one user is required"));
    }
    if tones.is_empty() {
        return Err(schema("tones", "at least one tone is required"));
    }
    let mut channels = Vec::with_capacity(tones.len());
    let mut mask = Vec::with_capacity(tones.len());
    let mut any_mask = false;
    for (k, t) in tones.iter().enumerate() {
        if t.gains_sq_db.len() != n {
            return Err(schema(format!("tones[{k}].gains_sq_db"), format!("expected {n} rows")));
        }
        if let Some(r) = t.gains_sq_db.iter().position(|row| row.len() != n) {
            return Err(schema(format!("tones[{k}].gains_sq_db[{r}]"), format!("expected {n} entries")));
        }
        if t.noise_dbm_hz.len() != n {
            return Err(schema(format!("tones[{k}].noise_dbm_hz"), format!("expected {n} entries")));
        }
        let gains = t
            .gains_sq_db
            .iter()
            .map(|row| row.iter().map(|g| g.map_or(0.0, db_to_linear)).collect())
            .collect();
        let noise = t.noise_dbm_hz.iter().map(|&s| db_to_linear(s) * df).collect();
        channels.push(ToneChannel::new(gains, noise).map_err(|e| schema(format!("tones[{k}]"), e.to_string()))?);
        match &t.mask_dbm_hz {
            Some(m) if m.len() != n => {
                return Err(schema(format!("tones[{k}].mask_dbm_hz"), format!("expected {n} entries")));
            }
            Some(m) => {
                any_mask = true;
                mask.push(Some(m.iter().map(|&v| db_to_linear(v) * df).collect::<Vec<_>>()));
            }
            None => mask.push(None),
        }
    }
    let budgets: Vec<f64> = users.iter().map(|u| db_to_linear(u.budget_dbm)).collect();
    let weights = users.iter().map(|u| u.weight).collect();
    let mask = any_mask.then(|| mask.into_iter().map(|m| m.unwrap_or_else(|| budgets.clone())).collect());
    Scenario::new(channels, weights, budgets, mask, constants)
}

fn read_to_string(path: &Path) -> Result<String> {
    let mut s = String::new();
    BufReader::new(File::open(path)?).read_to_string(&mut s)?;
    Ok(s)
}

pub fn load_scenario_file(path: &Path) -> Result<ScenarioFile> {
    parse_scenario_file(&read_to_string(path)?)
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    load_scenario_file(path)?.into_scenario()
}

pub fn save_scenario_file(path: &Path, file: &ScenarioFile) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(file.to_json()?.as_bytes())?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Spectra as CSV: one row per tone, powers in dBm/Hz (`-inf` for silence).
pub fn write_spectra_csv<W: Write>(out: W, scenario: &Scenario, alloc: &SpectrumAllocation) -> Result<()> {
    scenario.check_allocation(alloc)?;
    let df = scenario.constants().tone_spacing_hz;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["tone_index".to_string()];
    header.extend((1..=scenario.n_users()).map(|n| format!("user_{n}_dbm_hz")));
    w.write_record(&header)?;
    for (k, t) in alloc.tones.iter().enumerate() {
        let mut rec = vec![k.to_string()];
        rec.extend(t.power.iter().map(|&s| linear_to_db(s / df).to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_spectra(path: &Path, scenario: &Scenario, alloc: &SpectrumAllocation) -> Result<()> {
    write_spectra_csv(BufWriter::new(File::create(path)?), scenario, alloc)
}

/// Reads spectra written by [`write_spectra_csv`], clipping rounding excursions to the box.
pub fn read_spectra_csv<R: Read>(input: R, scenario: &Scenario) -> Result<SpectrumAllocation> {
    let df = scenario.constants().tone_spacing_hz;
    let n = scenario.n_users();
    let mut r = csv::Reader::from_reader(input);
    let mut tones = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != n + 1 {
            return Err(schema(format!("row {}", row + 1), format!("expected {} columns", n + 1)));
        }
        let k: usize = rec[0].parse().map_err(|_| schema(format!("row {}", row + 1), "bad tone index"))?;
        if k != tones.len() || k >= scenario.n_tones() {
            return Err(schema(format!("row {}", row + 1), format!("unexpected tone index {k}")));
        }
        let power = (0..n)
            .map(|u| {
                let db: f64 = rec[u + 1]
                    .parse()
                    .map_err(|_| schema(format!("row {}, column {}", row + 1, u + 2), "not a number"))?;
                Ok((db_to_linear(db) * df).clamp(0.0, scenario.upper(k)[u]))
            })
            .collect::<Result<Vec<_>>>()?;
        tones.push(ToneAllocation::new(power));
    }
    if tones.len() != scenario.n_tones() {
        return Err(Error::Dimension(format!("{} tones in file, {} in scenario", tones.len(), scenario.n_tones())));
    }
    Ok(SpectrumAllocation::new(tones))
}

pub fn load_spectra(path: &Path, scenario: &Scenario) -> Result<SpectrumAllocation> {
    read_spectra_csv(BufReader::new(File::open(path)?), scenario)
}

/// Trace CSV: iter, dual_value, violation_norm, max_complementarity, lambda_1..N.
pub fn write_trace_csv<W: Write>(out: W, n_users: usize, trace: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> =
        ["iter", "dual_value", "violation_norm", "max_complementarity"].iter().map(|s| s.to_string()).collect();
    header.extend((1..=n_users).map(|n| format!("lambda_{n}")));
    w.write_record(&header)?;
    for row in trace {
        let mut rec = vec![
            row.iter.to_string(),
            row.dual_value.to_string(),
            row.violation_norm.to_string(),
            row.max_complementarity().to_string(),
        ];
        rec.extend(row.lambda.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_trace(path: &Path, n_users: usize, trace: &[TraceRow]) -> Result<()> {
    write_trace_csv(BufWriter::new(File::create(path)?), n_users, trace)
}
