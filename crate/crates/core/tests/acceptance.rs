//! Acceptance suite: one test per criterion, each printing a pass/fail line.
//!
//! The reference experiment appears in two forms. The short run uses the
//! preset defaults, whose step count satisfies the scheme's sufficient
//! step-size conditions (checked with the effective floor saturation); the
//! long run uses the coarse step count that develops the full consolidation
//! profile. Invariants are checked on every step of both.

use limecon::diagnostics::{oracle_suite, ORACLE_DEVIATION_TOL};
use limecon::scenario::{
    build_fill_dry_scenario, build_stationary_scenario, run_scenario, RunOutput, ScenarioConfig,
    FILL_DRY_DEFAULT_T,
};
use limecon::PhysParams;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

struct TimedRun {
    cfg: ScenarioConfig,
    output: RunOutput,
    runtime: Duration,
}

fn admissible_run() -> &'static TimedRun {
    static RUN: OnceLock<TimedRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let cfg = build_fill_dry_scenario(FILL_DRY_DEFAULT_T);
        let start = Instant::now();
        let output = run_scenario(&cfg).expect("admissible fill-dry run");
        TimedRun {
            cfg,
            output,
            runtime: start.elapsed(),
        }
    })
}

fn profile_run() -> &'static TimedRun {
    static RUN: OnceLock<TimedRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let mut cfg = build_fill_dry_scenario(400.0);
        cfg.solver.steps = Some(4000);
        let start = Instant::now();
        let output = run_scenario(&cfg).expect("profile fill-dry run");
        TimedRun {
            cfg,
            output,
            runtime: start.elapsed(),
        }
    })
}

fn pass(name: &str, detail: String) {
    println!("PASS {name}: {detail}");
}

#[test]
fn criterion_1_invariant_suite() {
    let run = admissible_run();
    assert_eq!(run.cfg.grid.cells, 64);
    let report = &run.output.report;
    // The preset's default step count satisfies the admissibility check.
    assert!(
        report.restriction.satisfied,
        "preset step count must satisfy the step restriction: {:?}",
        report.restriction
    );
    assert_eq!(report.steps_completed, report.invariants.steps_checked);
    assert!(
        report.invariants.saturation_bounds.passed,
        "saturation bounds: {:?}",
        report.invariants.saturation_bounds
    );
    assert!(
        report.invariants.hydroxide_nonnegative.passed,
        "hydroxide positivity: {:?}",
        report.invariants.hydroxide_nonnegative
    );
    assert!(
        report.invariants.precipitate_monotone.passed,
        "precipitate monotonicity: {:?}",
        report.invariants.precipitate_monotone
    );
    assert!(
        run.runtime < Duration::from_secs(30),
        "runtime {:?} exceeds 30 s",
        run.runtime
    );
    pass(
        "criterion 1 (invariant suite)",
        format!(
            "{} steps checked in {:?}; bounds margin {:.2e}, positivity margin {:.2e}",
            report.steps_completed,
            run.runtime,
            report.invariants.saturation_bounds.worst_margin,
            report.invariants.hydroxide_nonnegative.worst_margin
        ),
    );
}

#[test]
fn criterion_2_ledger_exactness() {
    let run = admissible_run();
    let nodes = (run.cfg.grid.cells + 1) as f64;
    let tol = 1e-8 * nodes;
    let report = &run.output.report;
    assert!(
        report.invariants.saturation_ledger.passed,
        "water ledger: {:?}",
        report.invariants.saturation_ledger
    );
    assert!(
        report.invariants.hydroxide_ledger.passed,
        "hydroxide ledger: {:?}",
        report.invariants.hydroxide_ledger
    );
    // The margins are tolerance minus the worst residual; recover the latter.
    let worst_s = tol - report.invariants.saturation_ledger.worst_margin;
    let worst_h = tol - report.invariants.hydroxide_ledger.worst_margin;
    assert!(worst_s <= tol && worst_h <= tol);
    pass(
        "criterion 2 (ledger exactness)",
        format!(
            "worst ledger residuals: water {worst_s:.2e}, hydroxide {worst_h:.2e} (tol {tol:.2e})"
        ),
    );
}

#[test]
fn criterion_3_stoichiometry() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let params = PhysParams {
            rho_w: 1.0,
            rho_h: 1.0,
            molar_w: rng.gen_range(1e-3..1e3),
            molar_h: rng.gen_range(1e-3..1e3),
            molar_p: rng.gen_range(1e-3..1e3),
            molar_g: rng.gen_range(1e-3..1e3),
            gamma: 1.0,
            kappa: 1.0,
            alpha: 1.0,
            beta: 1.0,
            s_floor: 0.1,
            h_ceiling: 1.0,
            truncation_level: 1.0,
        };
        let rate = rng.gen_range(-1e3..1e3);
        let rates = limecon::constitutive::stoichiometric_rates(rate, &params);
        let molar = rate / params.molar_p;
        let scale = molar.abs().max(1e-300);
        let errs = [
            (rates.water / params.molar_w - molar).abs(),
            (-rates.hydroxide / params.molar_h - molar).abs(),
            (-rates.carbon_dioxide / params.molar_g - molar).abs(),
        ];
        for e in errs {
            worst = worst.max(e / scale);
        }
    }
    assert!(worst <= 1e-14, "worst relative error {worst:.3e}");
    pass(
        "criterion 3 (stoichiometry)",
        format!("10000 random inputs, worst relative error {worst:.2e} (tol 1e-14)"),
    );
}

#[test]
fn criterion_4_oracle_equivalence() {
    let report = oracle_suite(130, 7).expect("oracle suite");
    assert!(
        report.conclusive >= 100,
        "need at least 100 conclusive cases, got {}",
        report.conclusive
    );
    assert!(
        report.failed_seeds.is_empty(),
        "seeds beyond tolerance: {:?}",
        report.failed_seeds
    );
    assert!(report.max_deviation <= ORACLE_DEVIATION_TOL);
    pass(
        "criterion 4 (oracle equivalence)",
        format!(
            "{} conclusive cases, max deviation {:.2e} (tol {ORACLE_DEVIATION_TOL:.1e})",
            report.conclusive, report.max_deviation
        ),
    );
}

#[test]
fn criterion_5_self_convergence() {
    let t_final = 0.5;
    let base_steps = 500u64;
    let mut finals: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for level in 0..3 {
        let mut cfg = build_fill_dry_scenario(t_final);
        cfg.solver.steps = Some(base_steps << level);
        cfg.snapshot_times = vec![t_final];
        let output = run_scenario(&cfg).expect("convergence run");
        let snap = output.snapshots.last().unwrap();
        finals.push((snap.saturation.clone(), snap.hydroxide.clone()));
    }
    let diff = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f64, f64::max)
    };
    let ratio_s = diff(&finals[0].0, &finals[1].0) / diff(&finals[1].0, &finals[2].0);
    let ratio_h = diff(&finals[0].1, &finals[1].1) / diff(&finals[1].1, &finals[2].1);
    let order_s = ratio_s.log2();
    let order_h = ratio_h.log2();
    assert!(
        (0.7..=1.3).contains(&order_s),
        "saturation temporal order {order_s:.3} outside [0.7, 1.3]"
    );
    assert!(
        (0.7..=1.3).contains(&order_h),
        "hydroxide temporal order {order_h:.3} outside [0.7, 1.3]"
    );
    assert!(
        (1.7..=2.5).contains(&ratio_s),
        "saturation refinement ratio {ratio_s:.3} outside [1.7, 2.5]"
    );
    assert!(
        (1.7..=2.5).contains(&ratio_h),
        "hydroxide refinement ratio {ratio_h:.3} outside [1.7, 2.5]"
    );
    pass(
        "criterion 5 (self-convergence)",
        format!("orders: saturation {order_s:.3}, hydroxide {order_h:.3} (ratios {ratio_s:.3}, {ratio_h:.3})"),
    );
}

#[test]
fn criterion_6_consolidation_profile_shape() {
    let run = profile_run();
    let snap = run.output.snapshots.last().expect("final snapshot");
    let length = run.cfg.grid.length;
    let mut argmax = 0;
    let mut cmax = f64::NEG_INFINITY;
    for (i, &c) in snap.precipitate.iter().enumerate() {
        if c > cmax {
            cmax = c;
            argmax = i;
        }
    }
    let near = snap
        .x
        .iter()
        .zip(&snap.precipitate)
        .filter(|(x, _)| **x <= 0.2 * length)
        .map(|(_, c)| *c)
        .fold(f64::NEG_INFINITY, f64::max);
    let far = snap
        .x
        .iter()
        .zip(&snap.precipitate)
        .filter(|(x, _)| **x >= 0.5 * length)
        .map(|(_, c)| *c)
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(
        near > far,
        "near-boundary max {near:.3e} must exceed far-field max {far:.3e}"
    );
    assert!(
        snap.x[argmax] <= 0.2 * length,
        "deposit peak sits at x = {} beyond 0.2 L",
        snap.x[argmax]
    );
    // The deposit also grows monotonically across the captured snapshots.
    for pair in run.output.snapshots.windows(2) {
        for (a, b) in pair[0].precipitate.iter().zip(&pair[1].precipitate) {
            assert!(b >= a, "precipitate decreased between snapshots");
        }
    }
    pass(
        "criterion 6 (consolidation profile shape)",
        format!(
            "peak {cmax:.3e} at x = {:.3}; near/far max {near:.3e}/{far:.3e}",
            snap.x[argmax]
        ),
    );
}

#[test]
fn criterion_7_truncation_inactivity_and_velocity_bound() {
    for (name, run) in [("admissible", admissible_run()), ("profile", profile_run())] {
        let inv = &run.output.report.invariants;
        assert!(
            inv.truncation_inactive.passed,
            "{name} run: a truncation fired: {:?}",
            inv.truncation_inactive
        );
        assert!(
            inv.velocity_bound.passed,
            "{name} run: velocity bound violated: {:?}",
            inv.velocity_bound
        );
    }
    let margin = profile_run()
        .output
        .report
        .invariants
        .velocity_bound
        .worst_margin;
    pass(
        "criterion 7 (truncation inactivity)",
        format!("no clamp fired on either run; worst velocity-bound margin {margin:.2e}"),
    );
}

#[test]
fn criterion_8_stationarity() {
    let cfg = build_stationary_scenario(1.0, 256);
    let output = run_scenario(&cfg).expect("stationary run");
    assert_eq!(output.snapshots.len(), 4);
    let mut worst = 0.0f64;
    for snap in &output.snapshots {
        for &s in &snap.saturation {
            worst = worst.max((s - cfg.initial_saturation).abs());
        }
        for &h in &snap.hydroxide {
            worst = worst.max(h.abs());
        }
        for &c in &snap.precipitate {
            worst = worst.max(c.abs());
        }
    }
    assert!(worst <= 1e-12, "stationary drift {worst:.3e} exceeds 1e-12");
    pass(
        "criterion 8 (stationarity)",
        format!("4 snapshots, worst drift {worst:.2e} (tol 1e-12)"),
    );
}
