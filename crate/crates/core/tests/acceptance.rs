//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero
//! when a criterion fails that is not listed in `KNOWN_FAILURES`.
//!
//! Run with `cargo test --release -p spectra-dd --test acceptance`.

use std::collections::BTreeMap;
use std::fs;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spectra_dd::approx::{build_approx, surrogate_gradient, surrogate_objective};
use spectra_dd::dual::{
    averaging_weight, dual_subgradient, dual_value, recover_best, recover_interleaved, solve_improved, solve_tones,
    DualState, IterationBudget, Objective, SolverConfig, SolverReport, Tolerance,
};
use spectra_dd::harness::{
    convergence_race, preset, random_convex_instance, run_experiment, verify_theorem2, ExperimentSpec,
    ScenarioSource, SolverEntry, SolverKind,
};
use spectra_dd::oracle::{brute_force_cwrs, finite_diff_gradient, DEFAULT_ORACLE_CAP};
use spectra_dd::pertone::{GridSpec, PerToneMethod, ProxConfig, TIE_REL_TOL};
use spectra_dd::{PhysicalConstants, Scenario, ToneChannel};

/// Criteria expected to fail; see the decision ledger for the analysis.
const KNOWN_FAILURES: &[u32] = &[4, 6];

// Pinned tolerances and budgets.
const C1_EPSILONS: [f64; 2] = [1e-1, 1e-2];
const C1_INSTANCES: [(usize, usize, u64); 3] = [(2, 8, 1), (3, 8, 2), (2, 32, 3)];
const C1_RUNTIME: Duration = Duration::from_secs(30);
const C2_DUAL_REL: f64 = 1e-4;
const C2_SURROGATE_REL: f64 = 1e-5;
const C2_POINTS: usize = 10;
const C2_RUNTIME: Duration = Duration::from_secs(10);
const C3_REL: f64 = 1e-9;
const C3_POINTS: usize = 50;
const C4_RATE_REL: f64 = 0.02;
const C4_LEVELS: usize = 5;
const C4_SEEDS: u64 = 6;
const C4_CROSS: [f64; 3] = [0.1, 0.5, 1.0];
const C4_BUDGET_FRACTIONS: [f64; 3] = [0.25, 0.5, 0.75];
const C4_RUNTIME: Duration = Duration::from_secs(60);
const C6_ACCURACY: f64 = 5e-4;
const C6_Q_MULTIPLIERS: [f64; 4] = [1e-4, 1e-3, 1e-2, 1e-1];
const C6_SPEEDUP: usize = 5;
const C6_IMPROVED_CAP: usize = 200;
const C6_SUBGRADIENT_CAP: usize = 1000;
const C6_RUNTIME: Duration = Duration::from_secs(300);
const C7_HEAVY_MIN: f64 = 2.5;
const C7_HEAVY_MAX: f64 = 3.05;
const C7_LIGHT_MAX: f64 = 0.5;
const C7_ITER_FACTOR: usize = 10;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let norm = b.iter().fold(0.0f64, |m, y| m.max(y.abs()));
    diff / norm
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn c1_gap_and_violation_bounds() -> Outcome {
    let started = Instant::now();
    let mut passed = true;
    let mut worst = String::new();
    let mut worst_ratio = f64::NEG_INFINITY;
    for &(n, k, seed) in &C1_INSTANCES {
        let scenario = random_convex_instance(n, k, seed).unwrap();
        for &eps in &C1_EPSILONS {
            let r = verify_theorem2(&scenario, eps).unwrap();
            passed &= r.passed;
            let ratio = r.violation / r.violation_bound;
            if ratio > worst_ratio {
                worst_ratio = ratio;
                worst = format!("N={n} K={k} eps={eps}: gap {:.3e}, violation/bound {ratio:.3}", r.gap);
            }
        }
    }
    let elapsed = started.elapsed();
    outcome(
        passed && elapsed < C1_RUNTIME,
        format!("{} instances x {:?}; worst {worst}; {:.1}s", C1_INSTANCES.len(), C1_EPSILONS, elapsed.as_secs_f64()),
    )
}

fn c2_gradients() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_dual = 0.0f64;
    let mut worst_surrogate = 0.0f64;
    for p in 0..C2_POINTS {
        let scenario = random_convex_instance(2 + p % 2, 8, 100 + p as u64).unwrap();
        let approx = build_approx(&scenario, &scenario.flat_allocation());
        let objective = Objective::Convex(&approx);
        let prox = ProxConfig::new(0.1 / scenario.prox_diameter_sum()).unwrap();
        let lambda: Vec<f64> = (0..scenario.n_users()).map(|_| rng.random_range(0.5..8.0)).collect();

        // ḡ decreases along Σ_k s̄_k − P^tot: its gradient is the negated residual
        let residual = dual_subgradient(&scenario, objective, &lambda, &prox, &PerToneMethod::Newton).unwrap();
        let analytic: Vec<f64> = residual.iter().map(|r| -r).collect();
        let fd = finite_diff_gradient(
            |l| dual_value(&scenario, objective, l, &prox, &PerToneMethod::Newton).unwrap(),
            &lambda,
            1e-4,
        )
        .unwrap();
        worst_dual = worst_dual.max(rel_err(&fd, &analytic));

        let k = p % scenario.n_tones();
        let upper = scenario.upper(k);
        let s: Vec<f64> = upper.iter().map(|u| u * rng.random_range(0.1..0.9)).collect();
        let g = surrogate_gradient(&scenario, &approx, k, &s);
        let fd = finite_diff_gradient(|x| surrogate_objective(&scenario, &approx, k, x), &s, 1e-6).unwrap();
        worst_surrogate = worst_surrogate.max(rel_err(&fd, &g));
    }
    let elapsed = started.elapsed();
    outcome(
        worst_dual <= C2_DUAL_REL && worst_surrogate <= C2_SURROGATE_REL && elapsed < C2_RUNTIME,
        format!(
            "dual grad rel err {worst_dual:.2e} (<= {C2_DUAL_REL:.0e}), surrogate grad rel err {worst_surrogate:.2e} \
             (<= {C2_SURROGATE_REL:.0e}); {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn c3_sandwich() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let method = PerToneMethod::Exhaustive { grid: GridSpec::Linear { levels: C4_LEVELS }, cap: DEFAULT_ORACLE_CAP };
    let mut violations = 0;
    let mut min_margin = f64::INFINITY;
    for p in 0..C3_POINTS {
        let scenario = random_convex_instance(2 + p % 2, 4, 300 + p as u64).unwrap();
        let diam = scenario.prox_diameter_sum();
        let c = Tolerance::Relative(5e-4).resolve(scenario.objective_scale()) / diam;
        let lambda: Vec<f64> = (0..scenario.n_users()).map(|_| rng.random_range(0.0..10.0)).collect();
        let g = dual_value(&scenario, Objective::Direct, &lambda, &ProxConfig::off(), &method).unwrap();
        let gs = dual_value(&scenario, Objective::Direct, &lambda, &ProxConfig::new(c).unwrap(), &method).unwrap();
        let tol = C3_REL * g.abs();
        let lower = g - gs;
        let upper = gs + c * diam - g;
        min_margin = min_margin.min(lower.min(upper));
        if lower < -tol || upper < -tol {
            violations += 1;
        }
    }
    outcome(violations == 0, format!("{C3_POINTS} points, {violations} violations, min margin {min_margin:.3e}"))
}

/// Two users, four tones, unit mask; budgets are multiples of the grid spacing.
fn grid_instance(seed: u64, budget_fraction: f64, cross_max: f64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tones = (0..4)
        .map(|_| {
            let gains = vec![
                vec![rng.random_range(0.5..1.5), rng.random_range(0.0..cross_max)],
                vec![rng.random_range(0.0..cross_max), rng.random_range(0.5..1.5)],
            ];
            let noise = vec![rng.random_range(0.005..0.05), rng.random_range(0.005..0.05)];
            ToneChannel::new(gains, noise).unwrap()
        })
        .collect();
    let constants = PhysicalConstants::new(2.0, 1.0, 1.0).unwrap();
    Scenario::new(tones, vec![0.5, 0.5], vec![4.0 * budget_fraction; 2], Some(vec![vec![1.0; 2]; 4]), constants)
        .unwrap()
}

fn c4_oracle() -> Outcome {
    let started = Instant::now();
    let grid = GridSpec::Linear { levels: C4_LEVELS };
    let mut failures = Vec::new();
    let mut total = 0;
    for &cross in &C4_CROSS {
        for &fraction in &C4_BUDGET_FRACTIONS {
            for seed in 0..C4_SEEDS {
                total += 1;
                let scenario = grid_instance(seed, fraction, cross);
                let oracle = brute_force_cwrs(&scenario, &grid, DEFAULT_ORACLE_CAP).unwrap();
                let config = SolverConfig {
                    pertone: PerToneMethod::Exhaustive { grid: grid.clone(), cap: DEFAULT_ORACLE_CAP },
                    interleaving: true,
                    ..SolverConfig::default()
                };
                let report = solve_improved(&scenario, &config, Objective::Direct).unwrap();
                // λ* estimated by the returned multipliers
                let ls = norm(&report.lambda);
                let bound = report.epsilon * (ls + (ls * ls + 2.0).sqrt());
                let rel = (oracle.best_value - report.weighted_rate) / oracle.best_value;
                if rel.abs() > C4_RATE_REL || report.violation_norm > bound {
                    failures.push(format!(
                        "cross {cross} budget {fraction} seed {seed}: gap {:.2}%, violation {:.2e} > {:.2e}",
                        100.0 * rel,
                        report.violation_norm,
                        bound
                    ));
                }
            }
        }
    }
    let elapsed = started.elapsed();
    outcome(
        failures.is_empty() && elapsed < C4_RUNTIME,
        format!(
            "{}/{total} instances within {}% and feasible [{}]; {:.1}s",
            total - failures.len(),
            100.0 * C4_RATE_REL,
            failures.join("; "),
            elapsed.as_secs_f64()
        ),
    )
}

/// Two users, two identical tones, crosstalk as strong as the direct path.
fn symmetric_pair() -> Scenario {
    let tone = ToneChannel::new(vec![vec![1.0, 1.0], vec![1.0, 1.0]], vec![0.01, 0.01]).unwrap();
    let constants = PhysicalConstants::new(1.0, 1.0, 1.0).unwrap();
    Scenario::new(vec![tone.clone(), tone], vec![0.5, 0.5], vec![1.0, 1.0], Some(vec![vec![1.0, 1.0]; 2]), constants)
        .unwrap()
}

fn c5_symmetric_pair() -> Outcome {
    const ON: f64 = 1.0;
    let scenario = symmetric_pair();
    let method = PerToneMethod::Exhaustive { grid: GridSpec::Fixed(vec![vec![0.0, ON]; 2]), cap: DEFAULT_ORACLE_CAP };
    let config = SolverConfig { pertone: method.clone(), interleaving: true, ..SolverConfig::default() };
    let report = solve_improved(&scenario, &config, Objective::Direct).unwrap();
    let sols = solve_tones(
        &scenario,
        Objective::Direct,
        &report.lambda,
        &ProxConfig::off(),
        &method,
        &scenario.flat_allocation(),
        TIE_REL_TOL,
    )
    .unwrap();
    let one_hot = [vec![0.0, ON], vec![ON, 0.0]];
    let ties_ok = sols.iter().all(|s| s.len() == 2 && s.optima.iter().all(|o| one_hot.contains(o)));
    let combos: usize = sols.iter().map(|s| s.len()).product();
    let best = recover_best(&sols).totals();
    let inter = recover_interleaved(&sols).totals();
    let best_ok = best == [2.0 * ON, 0.0] || best == [0.0, 2.0 * ON];
    let inter_ok = inter == [ON, ON] && report.spectra.totals() == [ON, ON];
    outcome(
        ties_ok && combos == 4 && best_ok && inter_ok && report.converged,
        format!("lambda* {:?}, {combos} joint combinations, fixed order {best:?}, interleaved {inter:?}", report.lambda),
    )
}

fn c6_race() -> Outcome {
    let started = Instant::now();
    let scenario = preset("adsl-nearfar-2").unwrap();
    let race =
        convergence_race(&scenario, &C6_Q_MULTIPLIERS, C6_ACCURACY, C6_IMPROVED_CAP, C6_SUBGRADIENT_CAP).unwrap();
    let elapsed = started.elapsed();
    let improved = race.improved_iterations;
    let passed = match improved {
        Some(i) => {
            // a subgradient run that never gets there counts as the cap + 1
            C6_SUBGRADIENT_CAP + 1 >= C6_SPEEDUP * i
                && race.subgradient.iter().all(|(_, s)| s.unwrap_or(C6_SUBGRADIENT_CAP + 1) >= C6_SPEEDUP * i)
        }
        None => false,
    };
    let sub: Vec<String> = race
        .subgradient
        .iter()
        .map(|(q, s)| format!("q={q:.3e}: {}", s.map_or(format!(">{C6_SUBGRADIENT_CAP}"), |v| v.to_string())))
        .collect();
    outcome(
        passed && elapsed < C6_RUNTIME,
        format!(
            "improved {} iterations, subgradient [{}]; reference anecdote: 40 vs 500; {:.1}s",
            improved.map_or("-".into(), |v| v.to_string()),
            sub.join(", "),
            elapsed.as_secs_f64()
        ),
    )
}

fn direct_run(scenario: &Scenario, interleaving: bool, i_max: IterationBudget) -> SolverReport {
    let config =
        SolverConfig { pertone: PerToneMethod::multistart(), interleaving, i_max, ..SolverConfig::default() };
    solve_improved(scenario, &config, Objective::Direct).unwrap()
}

fn c7_symmetric_subset() -> Outcome {
    let started = Instant::now();
    let asym = direct_run(&preset("vdsl-up-6").unwrap(), true, IterationBudget::Auto);
    let sym = preset("vdsl-up-6sym").unwrap();
    let off = direct_run(&sym, false, IterationBudget::Auto);
    let on_budget = C7_ITER_FACTOR * asym.iterations;
    let on = direct_run(&sym, true, IterationBudget::Fixed(on_budget));

    let p = sym.budgets()[3];
    let totals = off.spectra.totals();
    let mut near: Vec<f64> = totals[3..6].iter().map(|t| t / p).collect();
    near.sort_by(f64::total_cmp);
    let pattern = near[2] >= C7_HEAVY_MIN && near[2] <= C7_HEAVY_MAX && near[..2].iter().all(|&x| x <= C7_LIGHT_MAX);
    let residuals_ok = on
        .trace
        .last()
        .is_some_and(|r| r.complementarity.iter().all(|c| c.abs() < on.epsilon_a));
    let on_totals: Vec<String> = on.spectra.totals()[3..6].iter().map(|t| format!("{:.2}", t / p)).collect();
    outcome(
        asym.converged && pattern && on.converged && residuals_ok,
        format!(
            "vdsl-up-6 {} iterations (converged {}); 300 m totals / P without interleaving [{:.3}, {:.3}, {:.3}], \
             with [{}] after {} of {on_budget} iterations (converged {}); {:.1}s",
            asym.iterations,
            asym.converged,
            near[0],
            near[1],
            near[2],
            on_totals.join(", "),
            on.iterations,
            on.converged,
            started.elapsed().as_secs_f64()
        ),
    )
}

fn c8_unit_algebra() -> Outcome {
    let l = 4.0;
    let dg = [2.0, -8.0, 0.5];
    let mut state = DualState::new(3, l);
    state.step(&dg);
    let mut ok = true;
    for n in 0..3 {
        let u = (dg[n] / l).max(0.0);
        let v = (0.5 * dg[n] / l).max(0.0);
        ok &= state.u[n] == u && state.v[n] == v;
        ok &= state.lambda[n] == 1.0 / 3.0 * u + 2.0 / 3.0 * v;
    }
    // the negative component is clamped by both projections
    ok &= state.u[1] == 0.0 && state.v[1] == 0.0 && state.lambda[1] == 0.0;
    // second step from a nonzero λ
    let lambda1 = state.lambda.clone();
    let dg2 = [-1.0, 3.0, 0.25];
    state.step(&dg2);
    for n in 0..3 {
        let u = (dg2[n] / l + lambda1[n]).max(0.0);
        let v = ((0.5 * dg[n] + dg2[n]) / l).max(0.0);
        ok &= state.u[n] == u && state.v[n] == v;
        ok &= state.lambda[n] == 2.0 / 4.0 * u + 2.0 / 4.0 * v;
    }
    let mut max_dev = 0.0f64;
    for i_max in [0, 1, 7, 99, 1000] {
        let sum: f64 = (0..=i_max).map(|i| averaging_weight(i, i_max)).sum();
        max_dev = max_dev.max((sum - 1.0).abs());
    }
    // summation rounding only: a handful of ulps
    ok &= max_dev <= 8.0 * f64::EPSILON;
    outcome(ok, format!("two update steps checked exactly; averaging weight sums off by at most {max_dev:.1e}"))
}

fn c9_determinism() -> Outcome {
    let spec = |dir: &str| ExperimentSpec {
        scenario: ScenarioSource::Preset("adsl-nearfar-2".into()),
        solvers: vec![
            SolverEntry { i_max: Some(200), ..SolverEntry::new("subgradient", SolverKind::Subgradient) },
            SolverEntry { interleave: true, ..SolverEntry::new("improved", SolverKind::ImprovedDirect) },
            SolverEntry { outer_max: Some(3), ..SolverEntry::new("ica", SolverKind::IcaDsb) },
        ],
        output_dir: dir.into(),
        jobs: 2,
    };
    let tmp = tempfile::tempdir().unwrap();
    let read_csvs = |dir: &str| -> BTreeMap<String, Vec<u8>> {
        fs::read_dir(tmp.path().join(dir))
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
            .collect()
    };
    run_experiment(&spec("a"), tmp.path()).unwrap();
    run_experiment(&spec("b"), tmp.path()).unwrap();
    let a = read_csvs("a");
    let b = read_csvs("b");
    outcome(a.len() == 6 && a == b, format!("{} CSV files compared byte for byte", a.len()))
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, fn() -> Outcome); 9] = [
        (1, "duality-gap and violation bounds", c1_gap_and_violation_bounds),
        (2, "gradient correctness", c2_gradients),
        (3, "sandwich property", c3_sandwich),
        (4, "oracle equivalence", c4_oracle),
        (5, "symmetric pair pathology", c5_symmetric_pair),
        (6, "convergence speed against subgradient", c6_race),
        (7, "symmetric subset pathology", c7_symmetric_subset),
        (8, "unit algebra", c8_unit_algebra),
        (9, "determinism", c9_determinism),
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut unexpected = 0;
    for (id, name, check) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let o = check();
        let known = KNOWN_FAILURES.contains(&id);
        let tag = match (o.passed, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!("{tag} [{id}] {name}: {}", o.detail);
        if !o.passed && !known {
            unexpected += 1;
        }
    }
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
