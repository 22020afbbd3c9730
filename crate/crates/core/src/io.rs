//! Configuration parsing and output serialization.
//!
//! Configurations are TOML documents (sections of key/value pairs; see the
//! README for the full schema). A document either spells out every section or
//! names a built-in preset and overrides selected sections. Unknown keys are
//! rejected; schema violations are collected and reported all at once with
//! their field paths.
//!
//! Outputs are CSV snapshots (one file per snapshot, 17 significant digits,
//! newline-normalized), a TOML manifest, and the serialized run report. All
//! writes go through a temp-file-then-rename so partially written files never
//! appear under the final name.

use crate::constitutive::{
    PermeabilityForm, PermeabilityLaw, PhysParams, WettingCurve, WettingForm,
};
use crate::scenario::{
    build_fill_dry_scenario, build_stationary_scenario, BoundaryPoint, BoundarySchedule, GridSpec,
    PiecewiseConstant, RunOutput, ScenarioConfig, Snapshot, Violation, FILL_DRY_DEFAULT_T,
};
use crate::timestep::SolverConfig;
use crate::transport::{KernelProfile, Mollifier};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{}", format_violations(.0))]
    Validation(Vec<Violation>),
}

fn format_violations(violations: &[Violation]) -> String {
    let mut out = String::from("invalid configuration:");
    for v in violations {
        let _ = write!(out, "\n  {}: {}", v.path, v.message);
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    final_time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    snapshot_times: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    equilibrium_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    grid: Option<RawGrid>,
    #[serde(skip_serializing_if = "Option::is_none")]
    physics: Option<RawPhysics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    wetting: Option<RawWetting>,
    #[serde(skip_serializing_if = "Option::is_none")]
    permeability: Option<RawPermeability>,
    #[serde(skip_serializing_if = "Option::is_none")]
    kernel: Option<RawKernel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    solver: Option<RawSolver>,
    #[serde(skip_serializing_if = "Option::is_none")]
    boundary: Option<RawBoundary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    initial: Option<RawInitial>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    cells: usize,
    length: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPhysics {
    rho_w: f64,
    rho_h: f64,
    molar_w: f64,
    molar_h: f64,
    molar_p: f64,
    molar_g: f64,
    gamma: f64,
    kappa: f64,
    alpha: f64,
    beta: f64,
    s_floor: f64,
    h_ceiling: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    truncation_level: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWetting {
    form: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    offset: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    slope: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    breakpoints: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPermeability {
    form: String,
    k0: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    k_floor: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKernel {
    profile: String,
    radius: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    #[serde(skip_serializing_if = "Option::is_none")]
    tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    steps: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    newton_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    newton_max_iter: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    picard_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    picard_max_iter: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    enforce_step_restriction: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eps_degenerate: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBoundary {
    left: RawBoundaryPoint,
    right: RawBoundaryPoint,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBoundaryPoint {
    alpha: f64,
    beta: f64,
    s_exterior: RawPiecewise,
    h_exterior: RawPiecewise,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPiecewise {
    #[serde(skip_serializing_if = "Option::is_none")]
    switch_times: Option<Vec<f64>>,
    values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    saturation: f64,
    hydroxide: f64,
}

/// Parses and fully validates a configuration document.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = position_of(text, e.span().map(|s| s.start).unwrap_or(0));
        ConfigError::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    build_config(raw)
}

fn position_of(text: &str, byte: usize) -> (usize, usize) {
    let byte = byte.min(text.len());
    let mut line = 1;
    let mut column = 1;
    for (i, ch) in text.char_indices() {
        if i >= byte {
            break;
        }
        if ch == '\n' {
            line += 1;
            column = 1;
        } else {
            column += 1;
        }
    }
    (line, column)
}

fn build_config(raw: RawConfig) -> Result<ScenarioConfig, ConfigError> {
    let mut violations: Vec<Violation> = Vec::new();
    let mut bad = |path: &str, message: String| {
        violations.push(Violation {
            path: path.into(),
            message,
        });
    };

    let base = match raw.preset.as_deref() {
        None => None,
        Some("fill_dry_default") => Some(build_fill_dry_scenario(
            raw.final_time.unwrap_or(FILL_DRY_DEFAULT_T),
        )),
        Some("stationary_default") => Some(build_stationary_scenario(
            raw.final_time.unwrap_or(1.0),
            256,
        )),
        Some(other) => {
            bad(
                "preset",
                format!(
                    "unknown preset '{other}'; expected fill_dry_default or stationary_default"
                ),
            );
            None
        }
    };

    let final_time = match (raw.final_time, &base) {
        (Some(t), _) => t,
        (None, Some(b)) => b.final_time,
        (None, None) => {
            bad("final_time", "required".into());
            0.0
        }
    };

    let grid = match (raw.grid, &base) {
        (Some(g), _) => GridSpec {
            cells: g.cells,
            length: g.length,
            ratio: g.ratio.unwrap_or(1.0),
        },
        (None, Some(b)) => b.grid,
        (None, None) => {
            bad("grid", "required section".into());
            GridSpec {
                cells: 1,
                length: 1.0,
                ratio: 1.0,
            }
        }
    };

    let physics = match (raw.physics, &base) {
        (Some(p), _) => PhysParams {
            rho_w: p.rho_w,
            rho_h: p.rho_h,
            molar_w: p.molar_w,
            molar_h: p.molar_h,
            molar_p: p.molar_p,
            molar_g: p.molar_g,
            gamma: p.gamma,
            kappa: p.kappa,
            alpha: p.alpha,
            beta: p.beta,
            s_floor: p.s_floor,
            h_ceiling: p.h_ceiling,
            truncation_level: p
                .truncation_level
                .unwrap_or_else(|| crate::scenario::default_truncation_level(p.h_ceiling)),
        },
        (None, Some(b)) => b.physics.clone(),
        (None, None) => {
            bad("physics", "required section".into());
            build_stationary_scenario(1.0, 1).physics
        }
    };

    let wetting = match (raw.wetting, &base) {
        (Some(w), _) => match w.form.as_str() {
            "linear" => {
                match WettingCurve::linear(w.offset.unwrap_or(0.0), w.slope.unwrap_or(1.0)) {
                    Ok(c) => c,
                    Err(e) => {
                        bad("wetting", e.to_string());
                        WettingCurve::linear(0.0, 1.0).unwrap()
                    }
                }
            }
            "tabulated" => match w.breakpoints {
                Some(points) => match WettingCurve::tabulated(points) {
                    Ok(c) => c,
                    Err(e) => {
                        bad("wetting.breakpoints", e.to_string());
                        WettingCurve::linear(0.0, 1.0).unwrap()
                    }
                },
                None => {
                    bad(
                        "wetting.breakpoints",
                        "required for the tabulated form".into(),
                    );
                    WettingCurve::linear(0.0, 1.0).unwrap()
                }
            },
            other => {
                bad(
                    "wetting.form",
                    format!("unknown form '{other}'; expected linear or tabulated"),
                );
                WettingCurve::linear(0.0, 1.0).unwrap()
            }
        },
        (None, Some(b)) => b.wetting.clone(),
        (None, None) => {
            bad("wetting", "required section".into());
            WettingCurve::linear(0.0, 1.0).unwrap()
        }
    };

    let permeability = match (raw.permeability, &base) {
        (Some(p), _) => match p.form.as_str() {
            "constant" => match PermeabilityLaw::constant(p.k0) {
                Ok(l) => l,
                Err(e) => {
                    bad("permeability", e.to_string());
                    PermeabilityLaw::constant(1.0).unwrap()
                }
            },
            "exp_decay" => {
                let rate = p.rate.unwrap_or(0.0);
                let floor = p.k_floor.unwrap_or(p.k0);
                match PermeabilityLaw::exp_decay(p.k0, rate, floor) {
                    Ok(l) => l,
                    Err(e) => {
                        bad("permeability", e.to_string());
                        PermeabilityLaw::constant(1.0).unwrap()
                    }
                }
            }
            other => {
                bad(
                    "permeability.form",
                    format!("unknown form '{other}'; expected constant or exp_decay"),
                );
                PermeabilityLaw::constant(1.0).unwrap()
            }
        },
        (None, Some(b)) => b.permeability.clone(),
        (None, None) => {
            bad("permeability", "required section".into());
            PermeabilityLaw::constant(1.0).unwrap()
        }
    };

    let kernel = match (raw.kernel, &base) {
        (Some(k), _) => {
            let profile = match k.profile.as_str() {
                "triangular" => KernelProfile::Triangular,
                "bump" => KernelProfile::Bump,
                other => {
                    bad(
                        "kernel.profile",
                        format!("unknown profile '{other}'; expected triangular or bump"),
                    );
                    KernelProfile::Triangular
                }
            };
            match Mollifier::new(k.radius, profile) {
                Ok(m) => m,
                Err(e) => {
                    bad("kernel.radius", e.to_string());
                    Mollifier::new(0.05, KernelProfile::Triangular).unwrap()
                }
            }
        }
        (None, Some(b)) => b.kernel.clone(),
        (None, None) => {
            bad("kernel", "required section".into());
            Mollifier::new(0.05, KernelProfile::Triangular).unwrap()
        }
    };

    let defaults = SolverConfig::default();
    let solver = match (raw.solver, &base) {
        (Some(s), _) => SolverConfig {
            tau: s.tau,
            steps: s.steps,
            newton_tol: s.newton_tol.unwrap_or(defaults.newton_tol),
            newton_max_iter: s.newton_max_iter.unwrap_or(defaults.newton_max_iter),
            picard_tol: s.picard_tol.unwrap_or(defaults.picard_tol),
            picard_max_iter: s.picard_max_iter.unwrap_or(defaults.picard_max_iter),
            enforce_step_restriction: s
                .enforce_step_restriction
                .unwrap_or(defaults.enforce_step_restriction),
            eps_degenerate: s.eps_degenerate.unwrap_or(defaults.eps_degenerate),
        },
        (None, Some(b)) => b.solver.clone(),
        (None, None) => {
            bad("solver", "required section (set tau or steps)".into());
            defaults
        }
    };

    let boundary = match (raw.boundary, &base) {
        (Some(b), _) => {
            let mut build_point = |side: &str, p: RawBoundaryPoint| -> BoundaryPoint {
                let mut piecewise = |name: &str, raw: RawPiecewise| -> PiecewiseConstant {
                    match PiecewiseConstant::with_switches(
                        raw.switch_times.unwrap_or_default(),
                        raw.values,
                    ) {
                        Ok(p) => p,
                        Err(e) => {
                            violations.push(Violation {
                                path: format!("boundary.{side}.{name}"),
                                message: e,
                            });
                            PiecewiseConstant::constant(0.0)
                        }
                    }
                };
                BoundaryPoint {
                    alpha: p.alpha,
                    beta: p.beta,
                    s_exterior: piecewise("s_exterior", p.s_exterior),
                    h_exterior: piecewise("h_exterior", p.h_exterior),
                }
            };
            BoundarySchedule {
                left: build_point("left", b.left),
                right: build_point("right", b.right),
            }
        }
        (None, Some(b)) => b.boundary.clone(),
        (None, None) => {
            violations.push(Violation {
                path: "boundary".into(),
                message: "required section".into(),
            });
            BoundarySchedule {
                left: BoundaryPoint {
                    alpha: 0.0,
                    beta: 0.0,
                    s_exterior: PiecewiseConstant::constant(0.5),
                    h_exterior: PiecewiseConstant::constant(0.0),
                },
                right: BoundaryPoint {
                    alpha: 0.0,
                    beta: 0.0,
                    s_exterior: PiecewiseConstant::constant(0.5),
                    h_exterior: PiecewiseConstant::constant(0.0),
                },
            }
        }
    };

    let (initial_saturation, initial_hydroxide) = match (raw.initial, &base) {
        (Some(i), _) => (i.saturation, i.hydroxide),
        (None, Some(b)) => (b.initial_saturation, b.initial_hydroxide),
        (None, None) => {
            violations.push(Violation {
                path: "initial".into(),
                message: "required section".into(),
            });
            (0.0, 0.0)
        }
    };

    let snapshot_times = match (raw.snapshot_times, &base) {
        (Some(t), _) => t,
        (None, Some(b)) => b.snapshot_times.clone(),
        (None, None) => vec![final_time],
    };
    let equilibrium_threshold = match (&raw.equilibrium_threshold, &base) {
        (Some(t), _) => Some(*t),
        (None, Some(b)) => b.equilibrium_threshold,
        (None, None) => None,
    };

    let cfg = ScenarioConfig {
        grid,
        physics,
        wetting,
        permeability,
        kernel,
        solver,
        boundary,
        final_time,
        snapshot_times,
        initial_saturation,
        initial_hydroxide,
        equilibrium_threshold,
    };
    let outcome = cfg.validate();
    violations.extend(outcome.errors);
    if violations.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError::Validation(violations))
    }
}

/// Serializes a configuration to the same document format `parse_config`
/// reads; the round trip is the identity.
pub fn serialize_config(cfg: &ScenarioConfig) -> String {
    let wetting = match cfg.wetting.form() {
        WettingForm::Linear { offset, slope } => RawWetting {
            form: "linear".into(),
            offset: Some(*offset),
            slope: Some(*slope),
            breakpoints: None,
        },
        WettingForm::TabulatedMonotone { breakpoints } => RawWetting {
            form: "tabulated".into(),
            offset: None,
            slope: None,
            breakpoints: Some(breakpoints.clone()),
        },
    };
    let permeability = match cfg.permeability.form() {
        PermeabilityForm::Constant { k0 } => RawPermeability {
            form: "constant".into(),
            k0: *k0,
            rate: None,
            k_floor: None,
        },
        PermeabilityForm::ExpDecay { k0, rate, k_floor } => RawPermeability {
            form: "exp_decay".into(),
            k0: *k0,
            rate: Some(*rate),
            k_floor: Some(*k_floor),
        },
    };
    let point = |p: &BoundaryPoint| RawBoundaryPoint {
        alpha: p.alpha,
        beta: p.beta,
        s_exterior: RawPiecewise {
            switch_times: if p.s_exterior.switch_times().is_empty() {
                None
            } else {
                Some(p.s_exterior.switch_times().to_vec())
            },
            values: p.s_exterior.values().to_vec(),
        },
        h_exterior: RawPiecewise {
            switch_times: if p.h_exterior.switch_times().is_empty() {
                None
            } else {
                Some(p.h_exterior.switch_times().to_vec())
            },
            values: p.h_exterior.values().to_vec(),
        },
    };
    let raw = RawConfig {
        preset: None,
        final_time: Some(cfg.final_time),
        snapshot_times: Some(cfg.snapshot_times.clone()),
        equilibrium_threshold: cfg.equilibrium_threshold,
        grid: Some(RawGrid {
            cells: cfg.grid.cells,
            length: cfg.grid.length,
            ratio: Some(cfg.grid.ratio),
        }),
        physics: Some(RawPhysics {
            rho_w: cfg.physics.rho_w,
            rho_h: cfg.physics.rho_h,
            molar_w: cfg.physics.molar_w,
            molar_h: cfg.physics.molar_h,
            molar_p: cfg.physics.molar_p,
            molar_g: cfg.physics.molar_g,
            gamma: cfg.physics.gamma,
            kappa: cfg.physics.kappa,
            alpha: cfg.physics.alpha,
            beta: cfg.physics.beta,
            s_floor: cfg.physics.s_floor,
            h_ceiling: cfg.physics.h_ceiling,
            truncation_level: Some(cfg.physics.truncation_level),
        }),
        wetting: Some(wetting),
        permeability: Some(permeability),
        kernel: Some(RawKernel {
            profile: match cfg.kernel.profile() {
                KernelProfile::Triangular => "triangular".into(),
                KernelProfile::Bump => "bump".into(),
            },
            radius: cfg.kernel.radius(),
        }),
        solver: Some(RawSolver {
            tau: cfg.solver.tau,
            steps: cfg.solver.steps,
            newton_tol: Some(cfg.solver.newton_tol),
            newton_max_iter: Some(cfg.solver.newton_max_iter),
            picard_tol: Some(cfg.solver.picard_tol),
            picard_max_iter: Some(cfg.solver.picard_max_iter),
            enforce_step_restriction: Some(cfg.solver.enforce_step_restriction),
            eps_degenerate: Some(cfg.solver.eps_degenerate),
        }),
        boundary: Some(RawBoundary {
            left: point(&cfg.boundary.left),
            right: point(&cfg.boundary.right),
        }),
        initial: Some(RawInitial {
            saturation: cfg.initial_saturation,
            hydroxide: cfg.initial_hydroxide,
        }),
    };
    toml::to_string_pretty(&raw).expect("config serialization cannot fail")
}

fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes one snapshot as CSV: header `x,s,h,cP,v`, one row per node, 17
/// significant digits, `\n` line endings, atomic replace.
pub fn write_snapshot_csv(snapshot: &Snapshot, path: &Path) -> io::Result<()> {
    let mut text = String::from("x,s,h,cP,v\n");
    for i in 0..snapshot.x.len() {
        let _ = writeln!(
            text,
            "{},{},{},{},{}",
            format_value(snapshot.x[i]),
            format_value(snapshot.saturation[i]),
            format_value(snapshot.hydroxide[i]),
            format_value(snapshot.precipitate[i]),
            format_value(snapshot.velocity[i]),
        );
    }
    atomic_write(path, text.as_bytes())
}

/// Deterministic snapshot file name carrying the step index and time.
pub fn snapshot_file_name(snapshot: &Snapshot) -> String {
    format!("snapshot_{:08}_t{}.csv", snapshot.step, snapshot.time)
}

fn atomic_write(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    steps_completed: u64,
    tau: f64,
    invariants_passed: bool,
    worst_s_residual: f64,
    worst_h_residual: f64,
    snapshots: Vec<ManifestEntry>,
    warnings: &'a [String],
}

#[derive(Debug, Serialize)]
struct ManifestEntry {
    file: String,
    step: u64,
    time: f64,
}

/// Writes the full output set of a run: resolved config echo, one CSV per
/// snapshot, the manifest, and the run report. Returns the file names.
pub fn write_run_outputs(
    out_dir: &Path,
    cfg: &ScenarioConfig,
    output: &RunOutput,
) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();

    let config_path = out_dir.join("config.toml");
    atomic_write(&config_path, serialize_config(cfg).as_bytes())?;
    files.push(config_path);

    let mut entries = Vec::new();
    for snapshot in &output.snapshots {
        let name = snapshot_file_name(snapshot);
        let path = out_dir.join(&name);
        write_snapshot_csv(snapshot, &path)?;
        entries.push(ManifestEntry {
            file: name,
            step: snapshot.step,
            time: snapshot.time,
        });
        files.push(path);
    }

    let manifest = Manifest {
        steps_completed: output.report.steps_completed,
        tau: output.report.tau,
        invariants_passed: output.report.invariants.all_passed(),
        worst_s_residual: output.report.worst_s_residual,
        worst_h_residual: output.report.worst_h_residual,
        snapshots: entries,
        warnings: &output.report.warnings,
    };
    let manifest_path = out_dir.join("manifest.toml");
    atomic_write(
        &manifest_path,
        toml::to_string_pretty(&manifest)
            .expect("manifest serialization cannot fail")
            .as_bytes(),
    )?;
    files.push(manifest_path);

    let report_path = out_dir.join("invariants.toml");
    atomic_write(
        &report_path,
        toml::to_string_pretty(&output.report)
            .expect("report serialization cannot fail")
            .as_bytes(),
    )?;
    files.push(report_path);

    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn preset_reference_equals_the_builder_output() {
        let cfg = parse_config("preset = \"fill_dry_default\"\n").unwrap();
        assert_eq!(cfg, build_fill_dry_scenario(FILL_DRY_DEFAULT_T));
        let cfg = parse_config("preset = \"fill_dry_default\"\nfinal_time = 0.02\n").unwrap();
        assert_eq!(cfg, build_fill_dry_scenario(0.02));
    }

    #[test]
    fn unknown_keys_are_rejected_with_position() {
        let err = parse_config("preset = \"fill_dry_default\"\nbogus_key = 1\n").unwrap_err();
        match err {
            ConfigError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn empty_document_lists_all_required_sections() {
        let err = parse_config("").unwrap_err();
        match err {
            ConfigError::Validation(violations) => {
                let paths: Vec<&str> = violations.iter().map(|v| v.path.as_str()).collect();
                for required in [
                    "final_time",
                    "grid",
                    "physics",
                    "wetting",
                    "permeability",
                    "kernel",
                    "solver",
                    "boundary",
                    "initial",
                ] {
                    assert!(paths.contains(&required), "missing {required} in {paths:?}");
                }
            }
            other => panic!("expected validation error, got {other}"),
        }
    }

    #[test]
    fn negative_boundary_permeability_is_reported_with_its_path() {
        let mut text = serialize_config(&build_stationary_scenario(1.0, 16));
        text = text.replace(
            "[boundary.left]\nalpha = 1.0",
            "[boundary.left]\nalpha = -1.0",
        );
        let err = parse_config(&text).unwrap_err();
        match err {
            ConfigError::Validation(violations) => {
                assert!(violations.iter().any(|v| v.path == "boundary.left.alpha"));
            }
            other => panic!("expected validation error, got {other}"),
        }
    }

    #[test]
    fn config_round_trip_is_the_identity() {
        for cfg in [
            build_fill_dry_scenario(0.02),
            build_stationary_scenario(2.0, 64),
        ] {
            let text = serialize_config(&cfg);
            let back = parse_config(&text).unwrap();
            assert_eq!(cfg, back);
            // And the re-serialization is byte-identical.
            assert_eq!(text, serialize_config(&back));
        }
    }

    #[test]
    fn snapshot_csv_has_one_row_per_node() {
        let snap = Snapshot {
            step: 3,
            time: 0.75,
            x: vec![0.0, 1.0],
            saturation: vec![0.25, 0.5],
            hydroxide: vec![0.0, 0.125],
            precipitate: vec![0.0, 0.0],
            velocity: vec![1.0, -1.0],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snap.csv");
        write_snapshot_csv(&snap, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        // Exact golden bytes: 17 significant digits, \n endings.
        assert_eq!(
            text,
            "x,s,h,cP,v\n\
             0.0000000000000000e0,2.5000000000000000e-1,0.0000000000000000e0,0.0000000000000000e0,1.0000000000000000e0\n\
             1.0000000000000000e0,5.0000000000000000e-1,1.2500000000000000e-1,0.0000000000000000e0,-1.0000000000000000e0\n"
        );
        assert_eq!(snapshot_file_name(&snap), "snapshot_00000003_t0.75.csv");
        // Writing the same snapshot again produces identical bytes.
        let path2 = dir.path().join("snap2.csv");
        write_snapshot_csv(&snap, &path2).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
    }

    #[test]
    fn tau_may_replace_the_step_count_in_configs() {
        let text = "preset = \"stationary_default\"\nfinal_time = 1.0\n\n\
                    [solver]\ntau = 0.25\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.solver.tau, Some(0.25));
        assert_eq!(cfg.solver.steps, None);
        assert_eq!(cfg.solver.resolve_steps(cfg.final_time).unwrap(), 4);
        // Giving both is rejected.
        let both = "preset = \"stationary_default\"\n\n[solver]\ntau = 0.25\nsteps = 4\n";
        assert!(matches!(
            parse_config(both),
            Err(ConfigError::Validation(_))
        ));
    }

    fn arbitrary_config() -> impl Strategy<Value = ScenarioConfig> {
        (
            2usize..40,
            0.5f64..4.0,
            0.7f64..1.4,
            1e-4f64..1e-2,
            0.1f64..1.0,
            1u64..500,
            prop::bool::ANY,
        )
            .prop_map(|(cells, length, ratio, kappa, s0, steps, tabulated)| {
                let mut cfg = build_fill_dry_scenario(1.0);
                cfg.grid = GridSpec {
                    cells,
                    length,
                    ratio,
                };
                cfg.physics.kappa = kappa;
                cfg.physics.s_floor = 0.05;
                cfg.initial_saturation = s0.max(0.05);
                cfg.solver.steps = Some(steps);
                cfg.kernel = Mollifier::new(0.1 * length, KernelProfile::Bump).unwrap();
                if tabulated {
                    cfg.wetting =
                        WettingCurve::tabulated(vec![(0.0, 0.0), (0.5, 0.3), (1.0, 1.2)]).unwrap();
                    cfg.permeability = PermeabilityLaw::exp_decay(1e-3, 0.5, 1e-4).unwrap();
                }
                cfg.boundary.left.s_exterior =
                    PiecewiseConstant::with_switches(vec![0.25], vec![1.0, 0.3]).unwrap();
                cfg.boundary.right.s_exterior = PiecewiseConstant::constant(0.4);
                cfg
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn parse_of_serialize_is_identity(cfg in arbitrary_config()) {
            let text = serialize_config(&cfg);
            let back = parse_config(&text).unwrap();
            prop_assert_eq!(cfg, back);
        }
    }
}
