//! Full simulation runs: time-dependent boundary schedules, built-in presets,
//! the step loop with invariant monitoring, and snapshot capture.

use crate::constitutive::{PermeabilityLaw, PhysParams, WettingCurve};
use crate::diagnostics::{InvariantReport, RunMonitor};
use crate::mesh::{Grid1D, MeshError};
use crate::timestep::{
    advance_one_step, check_step_restrictions, BoundarySample, SolverConfig, State, StepBoundary,
    StepError, StepRestriction,
};
use crate::transport::{self, KernelProfile, Mollifier, MollifierWeights};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Hard cap on the number of steps a single run will attempt; configurations
/// beyond it must choose an explicit coarser step count.
pub const MAX_RUN_STEPS: u64 = 100_000_000;

/// Default final time of the fill-dry preset; short enough that the
/// restriction-satisfying default step count stays affordable.
pub const FILL_DRY_DEFAULT_T: f64 = 0.01;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("configuration invalid: {0}")]
    InvalidConfig(ValidationOutcome),
    #[error("configuration: {0}")]
    Config(String),
    #[error("step {step} failed: {source}")]
    StepFailed {
        step: u64,
        source: StepError,
        /// Snapshots and diagnostics gathered before the failure.
        partial: Box<RunOutput>,
    },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Transport(#[from] transport::TransportError),
}

/// A schema violation with the path of the offending field.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationOutcome {
    pub errors: Vec<Violation>,
    pub warnings: Vec<String>,
}

impl std::fmt::Display for ValidationOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut first = true;
        for v in &self.errors {
            if !first {
                write!(f, "; ")?;
            }
            write!(f, "{}: {}", v.path, v.message)?;
            first = false;
        }
        Ok(())
    }
}

/// Piecewise-constant function of time, right-continuous at its switches.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseConstant {
    switch_times: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewiseConstant {
    pub fn constant(value: f64) -> Self {
        Self {
            switch_times: Vec::new(),
            values: vec![value],
        }
    }

    /// `values` has one more entry than `switch_times`; value k applies on
    /// [t_{k-1}, t_k).
    pub fn with_switches(switch_times: Vec<f64>, values: Vec<f64>) -> Result<Self, String> {
        if values.len() != switch_times.len() + 1 {
            return Err(format!(
                "need {} values for {} switch times, got {}",
                switch_times.len() + 1,
                switch_times.len(),
                values.len()
            ));
        }
        if switch_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err("switch times must be strictly increasing".into());
        }
        if switch_times
            .iter()
            .chain(values.iter())
            .any(|v| !v.is_finite())
        {
            return Err("switch times and values must be finite".into());
        }
        Ok(Self {
            switch_times,
            values,
        })
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let k = self.switch_times.partition_point(|&st| st <= t);
        self.values[k]
    }

    /// Exact interval average over [a, b].
    pub fn average(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return self.value_at(a);
        }
        let mut acc = 0.0;
        let mut lo = f64::NEG_INFINITY;
        for (k, &value) in self.values.iter().enumerate() {
            let hi = self.switch_times.get(k).copied().unwrap_or(f64::INFINITY);
            let overlap = (b.min(hi) - a.max(lo)).max(0.0);
            acc += overlap * value;
            lo = hi;
        }
        acc / (b - a)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn switch_times(&self) -> &[f64] {
        &self.switch_times
    }
}

/// Exterior data and permeabilities at one boundary point.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPoint {
    pub alpha: f64,
    pub beta: f64,
    pub s_exterior: PiecewiseConstant,
    pub h_exterior: PiecewiseConstant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySchedule {
    pub left: BoundaryPoint,
    pub right: BoundaryPoint,
}

impl BoundarySchedule {
    /// Time-averaged exterior data for step j (the interval
    /// [(j-1) tau, j tau]), as the scheme requires.
    pub fn sample(&self, step: u64, tau: f64) -> StepBoundary {
        let a = (step - 1) as f64 * tau;
        let b = step as f64 * tau;
        StepBoundary {
            left: BoundarySample {
                s_exterior: self.left.s_exterior.average(a, b),
                h_exterior: self.left.h_exterior.average(a, b),
                alpha: self.left.alpha,
                beta: self.left.beta,
            },
            right: BoundarySample {
                s_exterior: self.right.s_exterior.average(a, b),
                h_exterior: self.right.h_exterior.average(a, b),
                alpha: self.right.alpha,
                beta: self.right.beta,
            },
        }
    }
}

/// Free-function alias for the step-averaged boundary data.
pub fn time_averaged_boundary(schedule: &BoundarySchedule, step: u64, tau: f64) -> StepBoundary {
    schedule.sample(step, tau)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub cells: usize,
    pub length: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub grid: GridSpec,
    pub physics: PhysParams,
    pub wetting: WettingCurve,
    pub permeability: PermeabilityLaw,
    pub kernel: Mollifier,
    pub solver: SolverConfig,
    pub boundary: BoundarySchedule,
    pub final_time: f64,
    pub snapshot_times: Vec<f64>,
    pub initial_saturation: f64,
    pub initial_hydroxide: f64,
    /// Stop early once the saturation rate max|s_j - s_{j-1}|/tau falls below
    /// this threshold.
    pub equilibrium_threshold: Option<f64>,
}

impl ScenarioConfig {
    /// Checks the parameter schema. Strict sign violations are errors;
    /// the known data degeneracies (zero floor saturation, zero reaction,
    /// sealed boundaries, drainage against a dry exterior) are flagged as
    /// warnings so the reference experiments stay runnable.
    pub fn validate(&self) -> ValidationOutcome {
        let mut errors: Vec<Violation> = Vec::new();
        let mut err = |path: &str, message: String| {
            errors.push(Violation {
                path: path.to_string(),
                message,
            });
        };

        if self.grid.cells == 0 {
            err("grid.cells", "need at least one cell".into());
        }
        if !self.grid.length.is_finite() || self.grid.length <= 0.0 {
            err(
                "grid.length",
                format!("must be positive, got {}", self.grid.length),
            );
        }
        if !self.grid.ratio.is_finite() || self.grid.ratio <= 0.0 {
            err(
                "grid.ratio",
                format!("must be positive, got {}", self.grid.ratio),
            );
        }

        let check = self.physics.validate();
        for e in check.errors {
            err("physics", e);
        }
        let mut warnings = check.warnings;

        if !self.final_time.is_finite() || self.final_time < 0.0 {
            err(
                "final_time",
                format!("must be nonnegative, got {}", self.final_time),
            );
        } else if self.final_time == 0.0 {
            warnings.push("final_time = 0: only the initial state is emitted".into());
        }

        match (self.solver.steps, self.solver.tau) {
            (Some(_), Some(_)) => err("solver", "specify either tau or steps, not both".into()),
            (None, None) => err("solver", "one of tau or steps is required".into()),
            (Some(0), None) => err("solver.steps", "must be at least 1".into()),
            (None, Some(t)) if !(t.is_finite() && t > 0.0) => {
                err("solver.tau", format!("must be positive, got {t}"))
            }
            _ => {}
        }
        for (path, v) in [
            ("solver.newton_tol", self.solver.newton_tol),
            ("solver.picard_tol", self.solver.picard_tol),
            ("solver.eps_degenerate", self.solver.eps_degenerate),
        ] {
            if !v.is_finite() || v <= 0.0 {
                err(path, format!("must be positive, got {v}"));
            }
        }
        if self.solver.newton_max_iter == 0 {
            err("solver.newton_max_iter", "must be at least 1".into());
        }
        if self.solver.picard_max_iter == 0 {
            err("solver.picard_max_iter", "must be at least 1".into());
        }

        for (side, point) in [
            ("left", &self.boundary.left),
            ("right", &self.boundary.right),
        ] {
            for (name, v) in [("alpha", point.alpha), ("beta", point.beta)] {
                if !v.is_finite() || v < 0.0 {
                    err(
                        &format!("boundary.{side}.{name}"),
                        format!("boundary permeabilities must be nonnegative, got {v}"),
                    );
                }
            }
            for (k, &v) in point.s_exterior.values().iter().enumerate() {
                if !(0.0..=1.0).contains(&v) {
                    err(
                        &format!("boundary.{side}.s_exterior.values[{k}]"),
                        format!("exterior saturation must lie in [0, 1], got {v}"),
                    );
                } else if v == 0.0 {
                    warnings.push(format!(
                        "boundary.{side}.s_exterior.values[{k}] = 0: drainage against a dry exterior (degenerate data)"
                    ));
                } else if v < self.physics.s_floor {
                    warnings.push(format!(
                        "boundary.{side}.s_exterior.values[{k}] = {v} lies below s_floor = {}",
                        self.physics.s_floor
                    ));
                }
            }
            for (k, &v) in point.h_exterior.values().iter().enumerate() {
                if !(0.0..=self.physics.h_ceiling).contains(&v) {
                    err(
                        &format!("boundary.{side}.h_exterior.values[{k}]"),
                        format!(
                            "exterior concentration must lie in [0, {}], got {v}",
                            self.physics.h_ceiling
                        ),
                    );
                }
            }
        }
        if self.boundary.left.alpha + self.boundary.right.alpha == 0.0 {
            warnings.push("both boundary alphas are zero: the water boundary is sealed".into());
        }
        if self.boundary.left.beta + self.boundary.right.beta == 0.0 {
            warnings.push("both boundary betas are zero: no hydroxide can enter".into());
        }

        if !(0.0..=1.0).contains(&self.initial_saturation) {
            err(
                "initial.saturation",
                format!("must lie in [0, 1], got {}", self.initial_saturation),
            );
        } else if self.initial_saturation < self.physics.s_floor {
            warnings.push(format!(
                "initial.saturation = {} lies below s_floor = {}",
                self.initial_saturation, self.physics.s_floor
            ));
        }
        if !(0.0..=self.physics.h_ceiling).contains(&self.initial_hydroxide) {
            err(
                "initial.hydroxide",
                format!(
                    "must lie in [0, {}], got {}",
                    self.physics.h_ceiling, self.initial_hydroxide
                ),
            );
        }
        if let Some(thr) = self.equilibrium_threshold {
            if !thr.is_finite() || thr <= 0.0 {
                err(
                    "equilibrium_threshold",
                    format!("must be positive, got {thr}"),
                );
            }
        }
        for (k, &t) in self.snapshot_times.iter().enumerate() {
            if !t.is_finite() || t < 0.0 || t > self.final_time {
                warnings.push(format!(
                    "snapshot_times[{k}] = {t} lies outside [0, {}]; it will be clamped",
                    self.final_time
                ));
            }
        }
        ValidationOutcome { errors, warnings }
    }

    /// Step restriction with the effective floor saturation (the epsilon
    /// floor stands in when the configured floor degenerates to zero).
    pub fn restriction(&self) -> Result<StepRestriction, StepError> {
        let n = self.solver.resolve_steps(self.final_time)?;
        let eff = self.physics.s_floor.max(self.solver.eps_degenerate);
        Ok(check_step_restrictions(
            self.final_time,
            n,
            self.physics.truncation_level,
            eff,
        ))
    }
}

/// Default truncation level: far above every value the trajectory reaches,
/// so no clamp fires on admissible runs.
pub fn default_truncation_level(h_ceiling: f64) -> f64 {
    (10.0 * h_ceiling.max(1.0)).max(1.0)
}

/// Smallest step count satisfying the scheme's sufficient conditions.
pub fn restriction_steps(t_final: f64, truncation_level: f64, s_floor: f64) -> Option<u64> {
    check_step_restrictions(t_final, 0, truncation_level, s_floor).required_steps
}

/// The fill-then-dry reference experiment on the unit interval: the left
/// boundary is flooded with lime water until t = T/4, then switched to
/// drying; the right boundary drains against a dry exterior and passes no
/// hydroxide. Parameters are the simple unit set with k = 2e-4, kappa = 1e-3,
/// gamma = 1e-2.
pub fn build_fill_dry_scenario(t_final: f64) -> ScenarioConfig {
    let s_floor: f64 = 0.0;
    let h_ceiling = 1.0;
    let truncation_level = default_truncation_level(h_ceiling);
    let physics = PhysParams {
        rho_w: 1.0,
        rho_h: 1.0,
        molar_w: 1.0,
        molar_h: 1.0,
        molar_p: 1.0,
        molar_g: 1.0,
        gamma: 1e-2,
        kappa: 1e-3,
        alpha: 1.0,
        beta: 1.0,
        s_floor,
        h_ceiling,
        truncation_level,
    };
    let solver = SolverConfig {
        steps: restriction_steps(
            t_final,
            truncation_level,
            s_floor.max(SolverConfig::default().eps_degenerate),
        ),
        ..SolverConfig::default()
    };
    let switch = t_final / 4.0;
    // The drying exterior keeps a small positive saturation so the exterior
    // pressure stays inside the wetting curve's tabulated domain.
    let dry_s = s_floor.max(0.01);
    let left = BoundaryPoint {
        alpha: physics.alpha,
        beta: physics.beta,
        s_exterior: PiecewiseConstant::with_switches(vec![switch], vec![1.0, dry_s]).unwrap(),
        h_exterior: PiecewiseConstant::with_switches(vec![switch], vec![1.0, 0.0]).unwrap(),
    };
    let right = BoundaryPoint {
        alpha: physics.alpha,
        beta: 0.0,
        s_exterior: PiecewiseConstant::constant(0.0),
        h_exterior: PiecewiseConstant::constant(0.0),
    };
    ScenarioConfig {
        grid: GridSpec {
            cells: 64,
            length: 1.0,
            ratio: 1.05,
        },
        physics,
        wetting: WettingCurve::linear(0.0, 1.0).unwrap(),
        permeability: PermeabilityLaw::constant(2e-4).unwrap(),
        kernel: Mollifier::new(0.05, KernelProfile::Triangular).unwrap(),
        solver,
        boundary: BoundarySchedule { left, right },
        final_time: t_final,
        snapshot_times: vec![switch, t_final / 2.0, 3.0 * t_final / 4.0, t_final],
        initial_saturation: s_floor,
        initial_hydroxide: 0.0,
        equilibrium_threshold: None,
    }
}

/// A constant state with the reaction disabled: the exact fixed point of the
/// scheme, used to verify stationarity.
pub fn build_stationary_scenario(t_final: f64, steps: u64) -> ScenarioConfig {
    let physics = PhysParams {
        rho_w: 1.0,
        rho_h: 1.0,
        molar_w: 1.0,
        molar_h: 1.0,
        molar_p: 1.0,
        molar_g: 1.0,
        gamma: 0.0,
        kappa: 1e-3,
        alpha: 1.0,
        beta: 1.0,
        s_floor: 0.3,
        h_ceiling: 1.0,
        truncation_level: 10.0,
    };
    let point = BoundaryPoint {
        alpha: 1.0,
        beta: 1.0,
        s_exterior: PiecewiseConstant::constant(0.5),
        h_exterior: PiecewiseConstant::constant(0.0),
    };
    ScenarioConfig {
        grid: GridSpec {
            cells: 16,
            length: 1.0,
            ratio: 1.0,
        },
        physics,
        wetting: WettingCurve::linear(0.0, 1.0).unwrap(),
        permeability: PermeabilityLaw::constant(2e-4).unwrap(),
        kernel: Mollifier::new(0.05, KernelProfile::Triangular).unwrap(),
        solver: SolverConfig {
            steps: Some(steps),
            ..SolverConfig::default()
        },
        boundary: BoundarySchedule {
            left: point.clone(),
            right: point,
        },
        final_time: t_final,
        snapshot_times: vec![t_final / 4.0, t_final / 2.0, 3.0 * t_final / 4.0, t_final],
        initial_saturation: 0.5,
        initial_hydroxide: 0.0,
        equilibrium_threshold: None,
    }
}

/// Nodal fields captured at one completed step.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: u64,
    pub time: f64,
    pub x: Vec<f64>,
    pub saturation: Vec<f64>,
    pub hydroxide: Vec<f64>,
    pub precipitate: Vec<f64>,
    pub velocity: Vec<f64>,
}

/// Aggregated run diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub steps_completed: u64,
    pub tau: f64,
    pub invariants: InvariantReport,
    pub max_newton_iters: u32,
    pub max_picard_iters: u32,
    pub max_active_set_iters: u32,
    pub worst_s_residual: f64,
    pub worst_h_residual: f64,
    /// Largest lumped hydroxide mass over the run.
    pub hydroxide_mass_max: f64,
    /// A-priori ceiling on that mass: initial mass plus T times the maximal
    /// boundary inflow rate.
    pub hydroxide_mass_ceiling: f64,
    /// Accumulated tau * |grad s_j|^2 over the run.
    pub gradient_energy_total: f64,
    pub restriction: StepRestriction,
    pub equilibrium_stop_step: Option<u64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub snapshots: Vec<Snapshot>,
    pub report: RunReport,
}

fn capture(
    state: &State,
    step: u64,
    grid: &Grid1D,
    weights: &MollifierWeights,
    cfg: &ScenarioConfig,
) -> Result<Snapshot, transport::TransportError> {
    let flux = transport::water_flux(
        &state.saturation,
        &state.precipitate,
        &cfg.wetting,
        &cfg.permeability,
        grid,
    )?;
    let velocity = transport::mollified_velocity(&flux, weights, cfg.physics.rho_h)?;
    Ok(Snapshot {
        step,
        time: state.time,
        x: grid.nodes().to_vec(),
        saturation: state.saturation.clone(),
        hydroxide: state.hydroxide.clone(),
        precipitate: state.precipitate.clone(),
        velocity,
    })
}

/// Runs a scenario to its final time, capturing snapshots at the step nearest
/// each requested time and checking the scheme's invariants every step. A
/// step failure aborts the run and returns the partial output.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutput, ScenarioError> {
    let check = cfg.validate();
    if !check.errors.is_empty() {
        return Err(ScenarioError::InvalidConfig(check));
    }
    let mut warnings = check.warnings;

    let grid = Grid1D::graded(cfg.grid.cells, cfg.grid.length, cfg.grid.ratio)?;
    let weights = cfg.kernel.discretize(&grid);
    let mut state = State::uniform(&grid, cfg.initial_saturation, cfg.initial_hydroxide);
    let masses = grid.lumped_masses().to_vec();
    let initial_h_mass: f64 = masses
        .iter()
        .zip(&state.hydroxide)
        .map(|(m, h)| m * h)
        .sum();
    let beta_sum = cfg.boundary.left.beta + cfg.boundary.right.beta;
    let mass_ceiling =
        initial_h_mass + cfg.final_time * beta_sum * cfg.physics.h_ceiling / cfg.physics.rho_h;

    if cfg.final_time == 0.0 {
        let snap = capture(&state, 0, &grid, &weights, cfg)?;
        let count = cfg.snapshot_times.len().max(1);
        let restriction = check_step_restrictions(
            0.0,
            0,
            cfg.physics.truncation_level,
            cfg.physics.s_floor.max(cfg.solver.eps_degenerate),
        );
        let report = RunReport {
            steps_completed: 0,
            tau: 0.0,
            invariants: InvariantReport::empty(),
            max_newton_iters: 0,
            max_picard_iters: 0,
            max_active_set_iters: 0,
            worst_s_residual: 0.0,
            worst_h_residual: 0.0,
            hydroxide_mass_max: initial_h_mass,
            hydroxide_mass_ceiling: mass_ceiling,
            gradient_energy_total: 0.0,
            restriction,
            equilibrium_stop_step: None,
            warnings,
        };
        return Ok(RunOutput {
            snapshots: vec![snap; count],
            report,
        });
    }

    let n = cfg
        .solver
        .resolve_steps(cfg.final_time)
        .map_err(|e| ScenarioError::Config(e.to_string()))?;
    if n > MAX_RUN_STEPS {
        return Err(ScenarioError::Config(format!(
            "step count {n} exceeds the run cap {MAX_RUN_STEPS}; set solver.steps explicitly"
        )));
    }
    let tau = cfg.final_time / n as f64;

    let eff_floor = cfg.physics.s_floor.max(cfg.solver.eps_degenerate);
    let restriction =
        check_step_restrictions(cfg.final_time, n, cfg.physics.truncation_level, eff_floor);
    if cfg.physics.s_floor <= 0.0 {
        warnings.push(format!(
            "step restriction checked with the effective floor {eff_floor} (configured s_floor is degenerate)"
        ));
    }
    if !restriction.satisfied {
        let msg = match restriction.required_steps {
            Some(req) => format!(
                "step restriction not satisfied: {n} steps given, {req} required for T = {}, R = {}",
                cfg.final_time, cfg.physics.truncation_level
            ),
            None => "step restriction not satisfiable (degenerate floor saturation)".into(),
        };
        if cfg.solver.enforce_step_restriction {
            return Err(ScenarioError::Config(msg));
        }
        warnings.push(msg);
    }

    // Map each requested snapshot time to its nearest completed step.
    let targets: Vec<u64> = cfg
        .snapshot_times
        .iter()
        .map(|&t| {
            let j = (t / tau).round();
            if j.is_finite() {
                (j.max(0.0) as u64).min(n)
            } else {
                n
            }
        })
        .collect();
    let mut slots: Vec<Option<Snapshot>> = vec![None; targets.len()];
    for (slot, &target) in slots.iter_mut().zip(&targets) {
        if target == 0 {
            *slot = Some(capture(&state, 0, &grid, &weights, cfg)?);
        }
    }

    let mut monitor = RunMonitor::new(&grid, cfg);
    let mut max_newton = 0u32;
    let mut max_picard = 0u32;
    let mut max_active = 0u32;
    let mut worst_s = 0.0f64;
    let mut worst_h = 0.0f64;
    let mut equilibrium_stop_step = None;

    let mut j = 0u64;
    while j < n {
        j += 1;
        let bc = cfg.boundary.sample(j, tau);
        let step = advance_one_step(
            &state,
            &bc,
            tau,
            &cfg.solver,
            &cfg.physics,
            &grid,
            &cfg.wetting,
            &cfg.permeability,
            &weights,
        );
        let (mut next, report) = match step {
            Ok(ok) => ok,
            Err(source) => {
                let report = finish_report(
                    monitor,
                    j - 1,
                    tau,
                    max_newton,
                    max_picard,
                    max_active,
                    worst_s,
                    worst_h,
                    mass_ceiling,
                    restriction,
                    None,
                    warnings,
                );
                let partial = RunOutput {
                    snapshots: slots.into_iter().flatten().collect(),
                    report,
                };
                return Err(ScenarioError::StepFailed {
                    step: j,
                    source,
                    partial: Box::new(partial),
                });
            }
        };
        // Pin the clock to j * tau; additive accumulation would drift.
        next.time = j as f64 * tau;
        let rate = state
            .saturation
            .iter()
            .zip(&next.saturation)
            .map(|(a, b)| (b - a).abs())
            .fold(0.0f64, f64::max)
            / tau;
        monitor.observe(j, &state, &next, &report, tau);
        max_newton = max_newton.max(report.newton_iters);
        max_picard = max_picard.max(report.picard_iters);
        max_active = max_active.max(report.active_set_iters);
        worst_s = worst_s.max(report.s_residual.abs());
        worst_h = worst_h.max(report.h_residual.abs());
        state = next;

        for (slot, &target) in slots.iter_mut().zip(&targets) {
            if target == j && slot.is_none() {
                *slot = Some(capture(&state, j, &grid, &weights, cfg)?);
            }
        }
        if let Some(thr) = cfg.equilibrium_threshold {
            if rate < thr {
                equilibrium_stop_step = Some(j);
                break;
            }
        }
    }

    if equilibrium_stop_step.is_some() {
        warnings.push(format!(
            "equilibrium reached at step {j}; later snapshot times use that state"
        ));
    }
    // Fill any snapshots not reached (equilibrium stop) with the final state.
    for slot in slots.iter_mut() {
        if slot.is_none() {
            *slot = Some(capture(&state, j, &grid, &weights, cfg)?);
        }
    }

    let report = finish_report(
        monitor,
        j,
        tau,
        max_newton,
        max_picard,
        max_active,
        worst_s,
        worst_h,
        mass_ceiling,
        restriction,
        equilibrium_stop_step,
        warnings,
    );
    Ok(RunOutput {
        snapshots: slots.into_iter().flatten().collect(),
        report,
    })
}

#[allow(clippy::too_many_arguments)]
fn finish_report(
    monitor: RunMonitor,
    steps_completed: u64,
    tau: f64,
    max_newton_iters: u32,
    max_picard_iters: u32,
    max_active_set_iters: u32,
    worst_s_residual: f64,
    worst_h_residual: f64,
    hydroxide_mass_ceiling: f64,
    restriction: StepRestriction,
    equilibrium_stop_step: Option<u64>,
    warnings: Vec<String>,
) -> RunReport {
    let hydroxide_mass_max = monitor.hydroxide_mass_max();
    let gradient_energy_total = monitor.gradient_energy_total();
    RunReport {
        steps_completed,
        tau,
        invariants: monitor.finish(),
        max_newton_iters,
        max_picard_iters,
        max_active_set_iters,
        worst_s_residual,
        worst_h_residual,
        hydroxide_mass_max,
        hydroxide_mass_ceiling,
        gradient_energy_total,
        restriction,
        equilibrium_stop_step,
        warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_schedule_average_is_the_constant() {
        let p = PiecewiseConstant::constant(0.7);
        assert_eq!(p.average(0.0, 10.0), 0.7);
        assert_eq!(p.value_at(3.0), 0.7);
    }

    #[test]
    fn straddling_step_gets_the_width_weighted_average() {
        let p = PiecewiseConstant::with_switches(vec![2.5], vec![1.0, 0.0]).unwrap();
        // Interval [2, 3] straddles the switch: half weight each.
        assert!((p.average(2.0, 3.0) - 0.5).abs() < 1e-15);
        // Interval [2, 2.75]: 0.5 of it before, 0.25 after.
        assert!((p.average(2.0, 2.75) - (0.5 / 0.75)).abs() < 1e-15);
    }

    #[test]
    fn step_fully_after_the_switch_gets_the_late_value() {
        let p = PiecewiseConstant::with_switches(vec![2.5], vec![1.0, 0.25]).unwrap();
        assert_eq!(p.average(4.0, 5.0), 0.25);
    }

    #[test]
    fn fill_dry_preset_matches_the_reference_parameters() {
        let cfg = build_fill_dry_scenario(8.0);
        assert_eq!(cfg.physics.rho_w, 1.0);
        assert_eq!(cfg.physics.rho_h, 1.0);
        assert_eq!(cfg.physics.molar_w, 1.0);
        assert_eq!(cfg.physics.molar_h, 1.0);
        assert_eq!(cfg.physics.gamma, 1e-2);
        assert_eq!(cfg.physics.kappa, 1e-3);
        assert_eq!(cfg.boundary.left.alpha, 1.0);
        assert_eq!(cfg.boundary.left.beta, 1.0);
        match cfg.permeability.form() {
            crate::constitutive::PermeabilityForm::Constant { k0 } => assert_eq!(*k0, 2e-4),
            _ => panic!("expected constant permeability"),
        }
        assert_eq!(cfg.initial_saturation, 0.0);
        assert_eq!(cfg.initial_hydroxide, 0.0);
        // Fill phase at t = 0.1 T, drying phase at t = 0.9 T.
        let bc = cfg.boundary.left.s_exterior.value_at(0.1 * 8.0);
        assert_eq!(bc, 1.0);
        assert_eq!(cfg.boundary.left.h_exterior.value_at(0.1 * 8.0), 1.0);
        assert_eq!(cfg.boundary.left.s_exterior.value_at(0.9 * 8.0), 0.01);
        assert_eq!(cfg.boundary.left.h_exterior.value_at(0.9 * 8.0), 0.0);
        assert_eq!(cfg.snapshot_times, vec![2.0, 4.0, 6.0, 8.0]);
    }

    #[test]
    fn zero_final_time_returns_the_initial_state() {
        let mut cfg = build_stationary_scenario(0.0, 1);
        cfg.snapshot_times = vec![0.0];
        let out = run_scenario(&cfg).unwrap();
        assert_eq!(out.snapshots.len(), 1);
        assert_eq!(out.report.steps_completed, 0);
        assert!(out.snapshots[0].saturation.iter().all(|&s| s == 0.5));
    }

    #[test]
    fn stationary_scenario_reproduces_its_initial_state() {
        let cfg = build_stationary_scenario(1.0, 256);
        let out = run_scenario(&cfg).unwrap();
        assert_eq!(out.snapshots.len(), 4);
        for snap in &out.snapshots {
            assert!(snap.saturation.iter().all(|&s| (s - 0.5).abs() <= 1e-12));
            assert!(snap.hydroxide.iter().all(|&h| h.abs() <= 1e-12));
            assert!(snap.precipitate.iter().all(|&c| c.abs() <= 1e-12));
            assert!(snap.velocity.iter().all(|&v| v.abs() <= 1e-12));
        }
        assert!(out.report.invariants.all_passed());
        assert!(out.report.restriction.satisfied);
    }

    #[test]
    fn sealed_inflow_without_reaction_conserves_hydroxide_mass() {
        let mut cfg = build_stationary_scenario(0.5, 100);
        cfg.boundary.left.beta = 0.0;
        cfg.boundary.right.beta = 0.0;
        cfg.initial_hydroxide = 0.4;
        // Make the interior move: the left exterior pushes water in.
        cfg.boundary.left.s_exterior = PiecewiseConstant::constant(0.9);
        let out = run_scenario(&cfg).unwrap();
        let grid = Grid1D::graded(cfg.grid.cells, cfg.grid.length, cfg.grid.ratio).unwrap();
        let masses = grid.lumped_masses();
        let initial: f64 = masses.iter().map(|m| m * 0.4).sum();
        for snap in &out.snapshots {
            let mass: f64 = masses.iter().zip(&snap.hydroxide).map(|(m, h)| m * h).sum();
            assert!(
                (mass - initial).abs() < 1e-9,
                "mass {mass} vs initial {initial}"
            );
        }
    }

    #[test]
    fn equilibrium_detection_stops_early() {
        let mut cfg = build_stationary_scenario(100.0, 1000);
        cfg.equilibrium_threshold = Some(1e-14);
        let out = run_scenario(&cfg).unwrap();
        assert_eq!(out.report.equilibrium_stop_step, Some(1));
        assert_eq!(out.snapshots.len(), 4);
    }

    #[test]
    fn enforced_step_restriction_rejects_coarse_runs() {
        let mut cfg = build_fill_dry_scenario(1.0);
        cfg.solver.steps = Some(50);
        cfg.solver.enforce_step_restriction = true;
        match run_scenario(&cfg) {
            Err(ScenarioError::Config(msg)) => assert!(msg.contains("restriction")),
            other => panic!("expected a configuration error, got {other:?}"),
        }
        // The same count runs fine without enforcement; the report records
        // the shortfall.
        cfg.solver.enforce_step_restriction = false;
        let out = run_scenario(&cfg).unwrap();
        assert!(!out.report.restriction.satisfied);
        assert!(out
            .report
            .warnings
            .iter()
            .any(|w| w.contains("restriction")));
    }

    #[test]
    fn tau_and_steps_are_interchangeable() {
        let mut cfg = build_stationary_scenario(1.0, 1);
        cfg.solver.steps = None;
        cfg.solver.tau = Some(0.125);
        let out = run_scenario(&cfg).unwrap();
        assert_eq!(out.report.steps_completed, 8);
        assert_eq!(out.report.tau, 0.125);
    }

    #[test]
    fn step_failure_returns_the_partial_trajectory() {
        let mut cfg = build_fill_dry_scenario(2.0);
        cfg.solver.steps = Some(8);
        cfg.snapshot_times = vec![0.0, 0.25, 2.0];
        // An unreachable tolerance forces the saturation solve to fail.
        cfg.solver.newton_tol = 1e-300;
        cfg.solver.picard_tol = 1e-300;
        cfg.solver.newton_max_iter = 3;
        cfg.solver.picard_max_iter = 3;
        match run_scenario(&cfg) {
            Err(ScenarioError::StepFailed { step, partial, .. }) => {
                assert_eq!(step, 1);
                // The t = 0 snapshot was already captured.
                assert_eq!(partial.snapshots.len(), 1);
                assert_eq!(partial.report.steps_completed, 0);
            }
            other => panic!("expected a step failure, got {other:?}"),
        }
    }

    #[test]
    fn invalid_config_lists_all_violations() {
        let mut cfg = build_stationary_scenario(1.0, 10);
        cfg.boundary.left.alpha = -2.0;
        cfg.initial_hydroxide = 5.0;
        cfg.grid.length = -1.0;
        let err = run_scenario(&cfg).unwrap_err();
        match err {
            ScenarioError::InvalidConfig(out) => {
                assert!(out.errors.len() >= 3);
                assert!(out.errors.iter().any(|v| v.path == "boundary.left.alpha"));
                assert!(out.errors.iter().any(|v| v.path == "initial.hydroxide"));
                assert!(out.errors.iter().any(|v| v.path == "grid.length"));
            }
            other => panic!("expected InvalidConfig, got {other:?}"),
        }
    }
}
