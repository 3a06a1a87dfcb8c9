use std::fs;

use spectra_dd::harness::{preset, run_experiment, ExperimentSpec, ScenarioSource, SolverEntry, SolverKind, PRESET_NAMES};
use spectra_dd::io::{load_scenario, load_spectra, parse_scenario_file, save_scenario_file, ScenarioFile};
use spectra_dd::model::{user_rate, weighted_rate_sum};

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs())
}

#[test]
fn preset_json_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for name in PRESET_NAMES {
        let original = preset(name).unwrap();
        let path = dir.path().join(format!("{name}.json"));
        save_scenario_file(&path, &ScenarioFile::from_scenario(&original)).unwrap();
        let back = load_scenario(&path).unwrap();
        assert_eq!(back.n_users(), original.n_users());
        assert_eq!(back.n_tones(), original.n_tones());
        for k in 0..original.n_tones() {
            let (a, b) = (original.tone(k), back.tone(k));
            for (x, y) in a.gains_flat().iter().zip(b.gains_flat()) {
                assert!(close(*x, *y, 1e-12), "{name} tone {k}: {x} vs {y}");
            }
            for (x, y) in original.upper(k).iter().zip(back.upper(k)) {
                assert!(close(*x, *y, 1e-12));
            }
        }
        for (x, y) in original.budgets().iter().zip(back.budgets()) {
            assert!(close(*x, *y, 1e-12));
        }
    }
}

#[test]
fn synthetic_form_matches_preset() {
    let text = r#"{"synthetic": {
        "lines": [{"tx_m": 1200.0, "rx_m": 0.0}, {"tx_m": 1200.0, "rx_m": 0.0},
                  {"tx_m": 300.0, "rx_m": 0.0}, {"tx_m": 300.0, "rx_m": 0.0}],
        "model": {"attenuation_db_per_m": 0.017, "fext_per_m": 8.2e-8, "noise_dbm_hz": -140.0},
        "band_plan": {"bands": [[870, 1205], [1972, 2782]]},
        "budgets_dbm": [11.5, 11.5, 11.5, 11.5],
        "mask_dbm_hz": -46.0,
        "gamma_db": 12.9, "tone_spacing_hz": 4312.5, "symbol_rate_hz": 4000.0}}"#;
    let from_file = parse_scenario_file(text).unwrap().into_scenario().unwrap();
    let p = preset("vdsl-up-4").unwrap();
    assert_eq!(from_file.n_tones(), p.n_tones());
    for k in [0, 100, p.n_tones() - 1] {
        assert_eq!(from_file.tone(k).gains_flat(), p.tone(k).gains_flat());
    }
}

#[test]
fn experiment_spectra_reload_matches_summary() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ExperimentSpec {
        scenario: ScenarioSource::Random { users: 2, tones: 8, seed: 4 },
        solvers: vec![
            SolverEntry::new("improved", SolverKind::ImprovedDirect),
            SolverEntry { outer_max: Some(3), ..SolverEntry::new("ica", SolverKind::IcaDsb) },
        ],
        output_dir: "out".into(),
        jobs: 1,
    };
    let summaries = run_experiment(&spec, dir.path()).unwrap();
    let scenario = spec.scenario.load(dir.path()).unwrap();
    for s in &summaries {
        assert!(s.error.is_none(), "{:?}", s.error);
        let alloc = load_spectra(&dir.path().join("out").join(s.spectra_csv.as_ref().unwrap()), &scenario).unwrap();
        let rate = weighted_rate_sum(&scenario, &alloc);
        assert!(close(rate, s.weighted_rate.unwrap(), 1e-9), "{}: {rate} vs {:?}", s.name, s.weighted_rate);
        for (n, r) in s.user_rates.iter().enumerate() {
            assert!(close(user_rate(&scenario, &alloc, n), *r, 1e-9));
        }
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/summary.json")).unwrap()).unwrap();
    assert_eq!(summary.as_array().unwrap().len(), 2);
    let trace = fs::read_to_string(dir.path().join("out/improved.trace.csv")).unwrap();
    assert_eq!(trace.lines().next().unwrap(), "iter,dual_value,violation_norm,max_complementarity,lambda_1,lambda_2");
}

#[test]
fn duplicate_solver_names_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ExperimentSpec {
        scenario: ScenarioSource::Random { users: 2, tones: 2, seed: 0 },
        solvers: vec![SolverEntry::new("a", SolverKind::Subgradient), SolverEntry::new("a", SolverKind::ImprovedDirect)],
        output_dir: "out".into(),
        jobs: 1,
    };
    assert!(run_experiment(&spec, dir.path()).is_err());
}
