//! Command-line interface.
//!
//! Exit codes: 0 success, 2 configuration error, 3 solver failure,
//! 4 invariant violation.

use crate::diagnostics::{self, ORACLE_DEVIATION_TOL};
use crate::io::{self, ConfigError};
use crate::scenario::{
    build_fill_dry_scenario, build_stationary_scenario, run_scenario, RunOutput, ScenarioConfig,
    ScenarioError, FILL_DRY_DEFAULT_T, MAX_RUN_STEPS,
};
use clap::{Parser, Subcommand};
use std::fs;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_INVARIANT: i32 = 4;

#[derive(Parser)]
#[command(
    name = "limecon",
    about = "Simulator for carbonation-driven consolidation of porous solids",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario from a config file and write snapshots plus reports.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a built-in preset (fill-dry or stationary).
    Preset {
        /// Preset name: fill-dry | stationary.
        name: String,
        /// Final time.
        #[arg(long = "T")]
        t_final: Option<f64>,
        /// Number of grid cells.
        #[arg(long)]
        cells: Option<usize>,
        /// Number of time steps (defaults to the admissible minimum).
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate a config file and report the step-count admissibility.
    Check { config: PathBuf },
    /// Step-refinement study: run at n, 2n, 4n, ... steps and report the
    /// observed temporal order.
    Converge {
        config: PathBuf,
        #[arg(long, default_value_t = 3)]
        levels: u32,
    },
    /// Compare the production step against brute-force solvers on seeded
    /// tiny meshes.
    Oracle {
        #[arg(long, default_value_t = 120)]
        cases: u64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

/// Entry point; returns the process exit code.
pub fn run(args: &[String]) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version print to stdout and are not errors.
            let is_usage_error = e.use_stderr();
            let _ = e.print();
            return if is_usage_error { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match cli.command {
        Command::Run { config, out } => cmd_run(&config, &out),
        Command::Preset {
            name,
            t_final,
            cells,
            steps,
            out,
        } => cmd_preset(&name, t_final, cells, steps, &out),
        Command::Check { config } => cmd_check(&config),
        Command::Converge { config, levels } => cmd_converge(&config, levels),
        Command::Oracle { cases, seed } => cmd_oracle(cases, seed),
    }
}

fn load_config(path: &Path) -> Result<ScenarioConfig, i32> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error(config): cannot read {}: {e}", path.display());
            return Err(EXIT_CONFIG);
        }
    };
    match io::parse_config(&text) {
        Ok(cfg) => Ok(cfg),
        Err(e @ ConfigError::Parse { .. }) => {
            eprintln!("error(config): {e}");
            Err(EXIT_CONFIG)
        }
        Err(e @ ConfigError::Validation(_)) => {
            eprintln!("error(config): {e}");
            Err(EXIT_CONFIG)
        }
    }
}

fn execute_and_write(cfg: &ScenarioConfig, out: &Path) -> i32 {
    match run_scenario(cfg) {
        Ok(output) => {
            if let Err(e) = io::write_run_outputs(out, cfg, &output) {
                eprintln!(
                    "error(config): cannot write outputs to {}: {e}",
                    out.display()
                );
                return EXIT_CONFIG;
            }
            print_summary(&output);
            if output.report.invariants.all_passed() {
                EXIT_OK
            } else {
                eprintln!(
                    "error(invariant): at least one invariant check failed; see invariants.toml"
                );
                EXIT_INVARIANT
            }
        }
        Err(ScenarioError::StepFailed {
            step,
            source,
            partial,
        }) => {
            eprintln!("error(solver): step {step} failed: {source}");
            if let Err(e) = io::write_run_outputs(out, cfg, &partial) {
                eprintln!("error(solver): additionally failed to write partial outputs: {e}");
            } else {
                eprintln!("partial trajectory written to {}", out.display());
            }
            EXIT_SOLVER
        }
        Err(e) => {
            eprintln!("error(config): {e}");
            EXIT_CONFIG
        }
    }
}

fn print_summary(output: &RunOutput) {
    let report = &output.report;
    println!("steps: {} (tau = {})", report.steps_completed, report.tau);
    println!("snapshots: {}", output.snapshots.len());
    println!(
        "worst residuals: saturation {:.3e}, hydroxide {:.3e}",
        report.worst_s_residual, report.worst_h_residual
    );
    println!(
        "invariants: {}",
        if report.invariants.all_passed() {
            "all passed"
        } else {
            "FAILED"
        }
    );
    for w in &report.warnings {
        println!("note: {w}");
    }
}

fn cmd_run(config: &Path, out: &Path) -> i32 {
    match load_config(config) {
        Ok(cfg) => execute_and_write(&cfg, out),
        Err(code) => code,
    }
}

fn cmd_preset(
    name: &str,
    t_final: Option<f64>,
    cells: Option<usize>,
    steps: Option<u64>,
    out: &Path,
) -> i32 {
    let mut cfg = match name {
        "fill-dry" | "fill_dry" => build_fill_dry_scenario(t_final.unwrap_or(FILL_DRY_DEFAULT_T)),
        "stationary" => build_stationary_scenario(t_final.unwrap_or(1.0), 256),
        other => {
            eprintln!("error(config): unknown preset '{other}'; expected fill-dry or stationary");
            return EXIT_CONFIG;
        }
    };
    if let Some(c) = cells {
        cfg.grid.cells = c;
    }
    if let Some(n) = steps {
        cfg.solver.steps = Some(n);
        cfg.solver.tau = None;
    }
    match cfg.solver.steps {
        Some(n) if n > MAX_RUN_STEPS => {
            eprintln!(
                "error(config): the admissible step count for T = {} is {n}, beyond the run cap {MAX_RUN_STEPS}; pass --steps explicitly",
                cfg.final_time
            );
            return EXIT_CONFIG;
        }
        None => {
            eprintln!(
                "error(config): no admissible default step count for T = {}; pass --steps explicitly",
                cfg.final_time
            );
            return EXIT_CONFIG;
        }
        _ => {}
    }
    execute_and_write(&cfg, out)
}

fn cmd_check(config: &Path) -> i32 {
    let cfg = match load_config(config) {
        Ok(cfg) => cfg,
        Err(code) => return code,
    };
    let outcome = cfg.validate();
    for w in &outcome.warnings {
        println!("warning: {w}");
    }
    let restriction = match cfg.restriction() {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error(config): {e}");
            return EXIT_CONFIG;
        }
    };
    let steps = cfg
        .solver
        .resolve_steps(cfg.final_time)
        .expect("validated above");
    println!(
        "step restriction: {} steps given; monotonicity bound {:.3}, contraction bound {:.3}",
        steps, restriction.bound_monotone, restriction.bound_contraction
    );
    match restriction.required_steps {
        Some(req) => println!("required steps: > {}", req - 1),
        None => println!("required steps: unbounded (degenerate floor saturation)"),
    }
    if restriction.satisfied {
        println!("restriction satisfied: yes");
        EXIT_OK
    } else {
        println!("restriction satisfied: no");
        EXIT_CONFIG
    }
}

fn cmd_converge(config: &Path, levels: u32) -> i32 {
    if levels < 2 {
        eprintln!("error(config): need at least 2 levels, got {levels}");
        return EXIT_CONFIG;
    }
    let cfg = match load_config(config) {
        Ok(cfg) => cfg,
        Err(code) => return code,
    };
    let base_steps = match cfg.solver.resolve_steps(cfg.final_time) {
        Ok(n) => n,
        Err(e) => {
            eprintln!("error(config): {e}");
            return EXIT_CONFIG;
        }
    };
    if base_steps << (levels - 1) > MAX_RUN_STEPS {
        eprintln!("error(config): finest level would exceed the run cap");
        return EXIT_CONFIG;
    }
    let mut finals: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for level in 0..levels {
        let mut level_cfg = cfg.clone();
        level_cfg.solver.steps = Some(base_steps << level);
        level_cfg.solver.tau = None;
        level_cfg.snapshot_times = vec![cfg.final_time];
        match run_scenario(&level_cfg) {
            Ok(output) => {
                let snap = output.snapshots.last().expect("final snapshot");
                println!(
                    "level {level}: steps = {}, tau = {}",
                    base_steps << level,
                    output.report.tau
                );
                finals.push((snap.saturation.clone(), snap.hydroxide.clone()));
            }
            Err(e) => {
                eprintln!("error(solver): level {level} failed: {e}");
                return EXIT_SOLVER;
            }
        }
    }
    let diff = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f64, f64::max)
    };
    let mut s_errors = Vec::new();
    let mut h_errors = Vec::new();
    for pair in finals.windows(2) {
        s_errors.push(diff(&pair[0].0, &pair[1].0));
        h_errors.push(diff(&pair[0].1, &pair[1].1));
    }
    for (i, (es, eh)) in s_errors.iter().zip(&h_errors).enumerate() {
        println!(
            "diff level {i}->{}: saturation {es:.6e}, hydroxide {eh:.6e}",
            i + 1
        );
    }
    for (name, errors) in [("saturation", &s_errors), ("hydroxide", &h_errors)] {
        for pair in errors.windows(2) {
            if pair[1] > 0.0 {
                let order = (pair[0] / pair[1]).log2();
                println!("{name} order: {order:.3}");
            }
        }
    }
    EXIT_OK
}

fn cmd_oracle(cases: u64, seed: u64) -> i32 {
    match diagnostics::oracle_suite(cases, seed) {
        Ok(report) => {
            println!(
                "oracle cases: {} ({} conclusive, {} inconclusive)",
                report.cases, report.conclusive, report.inconclusive
            );
            println!(
                "max deviation: {:.3e} (tolerance {ORACLE_DEVIATION_TOL:.1e})",
                report.max_deviation
            );
            if report.failed_seeds.is_empty() {
                EXIT_OK
            } else {
                eprintln!(
                    "error(invariant): {} case(s) deviated beyond tolerance: seeds {:?}",
                    report.failed_seeds.len(),
                    report.failed_seeds
                );
                EXIT_INVARIANT
            }
        }
        Err(e) => {
            eprintln!("error(solver): oracle suite failed: {e}");
            EXIT_SOLVER
        }
    }
}
