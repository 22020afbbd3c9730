//! One step of the lagged implicit scheme.
//!
//! Within a step the equations decouple: the saturation solve uses the
//! previous step's hydroxide and precipitate, the hydroxide solve uses the
//! previous step's saturation and transport velocity, and the precipitate
//! update uses the freshly computed pair. All step equations are assembled in
//! tau-scaled form (the equation multiplied through by the time step), which
//! keeps residual magnitudes meaningful for arbitrarily small steps; the
//! constant-test-function sums of these residuals are exactly the mass
//! ledgers reported per step.

use crate::constitutive::{self, PermeabilityLaw, PhysParams, WettingCurve};
use crate::mesh::Grid1D;
use crate::transport::{self, MollifierWeights};
use crate::tridiag::Tridiagonal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Clips smaller than this do not count as an active truncation: they are at
/// the same rounding level the state bounds are checked with.
pub const TRUNCATION_FLAG_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum StepError {
    #[error("saturation solve did not converge: residual {residual:.3e} after {newton_iters} Newton and {picard_iters} fallback iterations")]
    SaturationNonConvergence {
        residual: f64,
        newton_iters: u32,
        picard_iters: u32,
    },
    #[error("hydroxide solve did not converge: residual {residual:.3e}")]
    HydroxideNonConvergence { residual: f64 },
    #[error("hydroxide solve requires nonnegative lagged saturation; node {node} has {value}")]
    NegativeSaturationCoefficient { node: usize, value: f64 },
    #[error("linear solve failed: {0}")]
    LinearSolve(String),
    #[error("invalid step input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Constitutive(#[from] constitutive::ConstitutiveError),
    #[error(transparent)]
    Transport(#[from] transport::TransportError),
}

/// Nodal unknowns at one time level. On every accepted step the saturation
/// stays within [s_floor, 1] and the hydroxide stays nonnegative up to
/// rounding, and the precipitate never decreases.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub saturation: Vec<f64>,
    pub hydroxide: Vec<f64>,
    pub precipitate: Vec<f64>,
    pub time: f64,
}

impl State {
    pub fn new(
        saturation: Vec<f64>,
        hydroxide: Vec<f64>,
        precipitate: Vec<f64>,
        time: f64,
    ) -> Result<Self, StepError> {
        let n = saturation.len();
        if n == 0 || hydroxide.len() != n || precipitate.len() != n {
            return Err(StepError::InvalidInput(format!(
                "field lengths must match and be nonzero, got s={}, h={}, cP={}",
                n,
                hydroxide.len(),
                precipitate.len()
            )));
        }
        Ok(Self {
            saturation,
            hydroxide,
            precipitate,
            time,
        })
    }

    /// Constant initial state on a grid, with zero precipitate.
    pub fn uniform(grid: &Grid1D, saturation: f64, hydroxide: f64) -> Self {
        let n = grid.num_nodes();
        Self {
            saturation: vec![saturation; n],
            hydroxide: vec![hydroxide; n],
            precipitate: vec![0.0; n],
            time: 0.0,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.saturation.len()
    }
}

/// Exterior data and boundary permeabilities at one boundary point for one
/// step (time-averaged over the step interval).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundarySample {
    pub s_exterior: f64,
    pub h_exterior: f64,
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepBoundary {
    pub left: BoundarySample,
    pub right: BoundarySample,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Time step; exactly one of `tau` and `steps` should be set.
    pub tau: Option<f64>,
    /// Number of steps over the scenario's final time.
    pub steps: Option<u64>,
    pub newton_tol: f64,
    pub newton_max_iter: u32,
    pub picard_tol: f64,
    pub picard_max_iter: u32,
    pub enforce_step_restriction: bool,
    /// Floor for the hydroxide diffusion coefficient when the lagged
    /// saturation degenerates to zero.
    pub eps_degenerate: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tau: None,
            steps: None,
            newton_tol: 1e-12,
            newton_max_iter: 50,
            picard_tol: 1e-12,
            picard_max_iter: 400,
            enforce_step_restriction: false,
            eps_degenerate: 1e-6,
        }
    }
}

impl SolverConfig {
    /// Resolves the step count for a run of the given duration.
    pub fn resolve_steps(&self, t_final: f64) -> Result<u64, StepError> {
        match (self.steps, self.tau) {
            (Some(_), Some(_)) => Err(StepError::InvalidInput(
                "specify either solver.tau or solver.steps, not both".into(),
            )),
            (Some(0), None) => Err(StepError::InvalidInput(
                "solver.steps must be at least 1".into(),
            )),
            (Some(n), None) => Ok(n),
            (None, Some(tau)) => {
                if !(tau.is_finite() && tau > 0.0) {
                    return Err(StepError::InvalidInput(format!(
                        "solver.tau must be positive, got {tau}"
                    )));
                }
                Ok(((t_final / tau - 1e-12).ceil().max(1.0)) as u64)
            }
            (None, None) => Err(StepError::InvalidInput(
                "one of solver.tau or solver.steps is required".into(),
            )),
        }
    }
}

/// Which clamps actually fired during a step (beyond rounding level).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TruncationFlags {
    /// The lagged hydroxide entered the reaction clamped.
    pub hydroxide_capped: bool,
    /// The air fraction 1 - s entered the reaction clamped.
    pub air_capped: bool,
    /// The transport velocity was clamped.
    pub velocity_capped: bool,
}

impl TruncationFlags {
    pub fn any(&self) -> bool {
        self.hydroxide_capped || self.air_capped || self.velocity_capped
    }
}

/// Per-step solver telemetry and mass-ledger residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub newton_iters: u32,
    pub picard_iters: u32,
    pub active_set_iters: u32,
    /// Max-norm residual of the tau-scaled saturation equation at the
    /// accepted iterate.
    pub s_residual: f64,
    /// Max-norm residual of the tau-scaled hydroxide equation.
    pub h_residual: f64,
    /// Constant-test-function water mass identity for the step.
    pub s_mass_ledger_residual: f64,
    /// Constant-test-function hydroxide mass identity for the step.
    pub h_mass_ledger_residual: f64,
    pub truncation: TruncationFlags,
    /// Sup norm of the (unclamped) transport velocity used this step.
    pub sup_velocity: f64,
    /// Discrete H1 seminorm of the lagged saturation the velocity came from.
    pub saturation_gradient_norm: f64,
}

/// Admissibility of a step count against the scheme's sufficient conditions:
/// n > 2 T R^2 (monotone saturation operator) and n > T R^2 / (2 s_floor)
/// (contractive hydroxide fixed point).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRestriction {
    pub satisfied: bool,
    /// Smallest admissible step count, if one exists.
    pub required_steps: Option<u64>,
    /// Set when s_floor <= 0 makes the contraction bound diverge.
    pub degenerate: bool,
    pub bound_monotone: f64,
    pub bound_contraction: f64,
}

pub fn check_step_restrictions(
    t_final: f64,
    steps: u64,
    truncation_level: f64,
    s_floor: f64,
) -> StepRestriction {
    let r2t = t_final * truncation_level * truncation_level;
    let bound_monotone = 2.0 * r2t;
    if !s_floor.is_finite() || s_floor <= 0.0 {
        return StepRestriction {
            satisfied: false,
            required_steps: None,
            degenerate: true,
            bound_monotone,
            bound_contraction: f64::INFINITY,
        };
    }
    let bound_contraction = r2t / (2.0 * s_floor);
    let need = bound_monotone.max(bound_contraction);
    let required_steps = if need < u64::MAX as f64 {
        Some(need.floor() as u64 + 1)
    } else {
        None
    };
    StepRestriction {
        satisfied: (steps as f64) > need,
        required_steps,
        degenerate: false,
        bound_monotone,
        bound_contraction,
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
}

fn cell_mid(field: &[f64], c: usize) -> f64 {
    0.5 * (field[c] + field[c + 1])
}

/// Derivative of s * Q_R(1 - s) with respect to s (one-sided at the kinks).
fn reaction_slope(s: f64, cap: f64) -> f64 {
    if s >= 1.0 {
        0.0
    } else if 1.0 - s >= cap {
        cap
    } else {
        1.0 - 2.0 * s
    }
}

#[derive(Debug, Clone)]
pub struct SaturationStats {
    pub newton_iters: u32,
    pub picard_iters: u32,
    pub residual: f64,
    pub hydroxide_capped: bool,
    pub air_capped: bool,
}

/// Solves the implicit saturation equation for one step: lumped mass plus
/// nonlinear diffusion with lagged permeability, pressure-relaxation boundary
/// terms, and the clamped reaction source with lagged hydroxide. Damped
/// Newton with a frozen-coefficient fallback.
#[allow(clippy::too_many_arguments)]
pub fn solve_saturation_step(
    prev: &State,
    bc: &StepBoundary,
    tau: f64,
    cfg: &SolverConfig,
    params: &PhysParams,
    grid: &Grid1D,
    curve: &WettingCurve,
    law: &PermeabilityLaw,
) -> Result<(Vec<f64>, SaturationStats), StepError> {
    let n = grid.num_nodes();
    if prev.num_nodes() != n {
        return Err(StepError::InvalidInput(format!(
            "state has {} nodes, grid has {n}",
            prev.num_nodes()
        )));
    }
    let cells = grid.num_cells();
    let widths = grid.widths();
    let masses = grid.lumped_masses();
    let cap = params.truncation_level;

    // Lagged data for this step.
    let mut k_cell = Vec::with_capacity(cells);
    for c in 0..cells {
        k_cell.push(law.value(cell_mid(&prev.precipitate, c))?);
    }
    let react_coef: Vec<f64> = (0..n)
        .map(|i| {
            tau * params.gamma
                * params.molar_w
                * masses[i]
                * constitutive::truncate(prev.hydroxide[i], cap)
        })
        .collect();

    let p_ext_left = curve.value(bc.left.s_exterior);
    let p_ext_right = curve.value(bc.right.s_exterior);

    let residual = |s: &[f64], f: &mut [f64]| {
        for i in 0..n {
            f[i] = params.rho_w * masses[i] * (s[i] - prev.saturation[i])
                - react_coef[i] * s[i] * constitutive::truncate(1.0 - s[i], cap);
        }
        for c in 0..cells {
            let a = k_cell[c] * curve.derivative(cell_mid(s, c));
            let flux = a * (s[c + 1] - s[c]) / widths[c];
            f[c] -= tau * flux;
            f[c + 1] += tau * flux;
        }
        f[0] += tau * bc.left.alpha * (curve.value(s[0]) - p_ext_left);
        f[n - 1] += tau * bc.right.alpha * (curve.value(s[n - 1]) - p_ext_right);
    };

    // Generalized Jacobian; the coefficient a(s) is frozen per cell, which is
    // exact for linear curves and one-sided for tabulated ones.
    let jacobian = |s: &[f64], jac: &mut Tridiagonal| {
        jac.reset();
        for i in 0..n {
            jac.diag[i] = params.rho_w * masses[i] - react_coef[i] * reaction_slope(s[i], cap);
        }
        for c in 0..cells {
            let a = k_cell[c] * curve.derivative(cell_mid(s, c));
            let w = tau * a / widths[c];
            jac.diag[c] += w;
            jac.sup[c] -= w;
            jac.sub[c] -= w;
            jac.diag[c + 1] += w;
        }
        jac.diag[0] += tau * bc.left.alpha * curve.derivative(s[0]);
        jac.diag[n - 1] += tau * bc.right.alpha * curve.derivative(s[n - 1]);
    };

    let mut s = prev.saturation.clone();
    let mut f = vec![0.0; n];
    let mut f_trial = vec![0.0; n];
    let mut s_trial = vec![0.0; n];
    let mut jac = Tridiagonal::zeros(n);

    residual(&s, &mut f);
    let mut norm = inf_norm(&f);
    let mut newton_iters = 0u32;
    while norm > cfg.newton_tol && newton_iters < cfg.newton_max_iter {
        jacobian(&s, &mut jac);
        let neg_f: Vec<f64> = f.iter().map(|v| -v).collect();
        let delta = jac.solve(&neg_f).map_err(StepError::LinearSolve)?;
        let mut lambda = 1.0;
        let mut improved = false;
        for _ in 0..12 {
            for i in 0..n {
                s_trial[i] = s[i] + lambda * delta[i];
            }
            residual(&s_trial, &mut f_trial);
            let trial_norm = inf_norm(&f_trial);
            if trial_norm < norm {
                s.copy_from_slice(&s_trial);
                f.copy_from_slice(&f_trial);
                norm = trial_norm;
                improved = true;
                break;
            }
            lambda *= 0.5;
        }
        newton_iters += 1;
        if !improved {
            break;
        }
    }

    // Frozen-coefficient fallback for the rare case Newton stalls on a
    // tabulated-curve kink.
    let mut picard_iters = 0u32;
    while norm > cfg.picard_tol.max(cfg.newton_tol) && picard_iters < cfg.picard_max_iter {
        jac.reset();
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            jac.diag[i] =
                params.rho_w * masses[i] - react_coef[i] * constitutive::truncate(1.0 - s[i], cap);
            rhs[i] = params.rho_w * masses[i] * prev.saturation[i];
        }
        for c in 0..cells {
            let a = k_cell[c] * curve.derivative(cell_mid(&s, c));
            let w = tau * a / widths[c];
            jac.diag[c] += w;
            jac.sup[c] -= w;
            jac.sub[c] -= w;
            jac.diag[c + 1] += w;
        }
        let d0 = curve.derivative(s[0]);
        jac.diag[0] += tau * bc.left.alpha * d0;
        rhs[0] += tau * bc.left.alpha * (d0 * s[0] - curve.value(s[0]) + p_ext_left);
        let d1 = curve.derivative(s[n - 1]);
        jac.diag[n - 1] += tau * bc.right.alpha * d1;
        rhs[n - 1] += tau * bc.right.alpha * (d1 * s[n - 1] - curve.value(s[n - 1]) + p_ext_right);
        s = jac.solve(&rhs).map_err(StepError::LinearSolve)?;
        residual(&s, &mut f);
        norm = inf_norm(&f);
        picard_iters += 1;
    }

    if norm > cfg.picard_tol.max(cfg.newton_tol) {
        return Err(StepError::SaturationNonConvergence {
            residual: norm,
            newton_iters,
            picard_iters,
        });
    }

    let hydroxide_capped = prev
        .hydroxide
        .iter()
        .any(|&h| h < -TRUNCATION_FLAG_TOL || h > cap + TRUNCATION_FLAG_TOL);
    let air_capped = s
        .iter()
        .any(|&v| 1.0 - v < -TRUNCATION_FLAG_TOL || 1.0 - v > cap + TRUNCATION_FLAG_TOL);

    Ok((
        s,
        SaturationStats {
            newton_iters,
            picard_iters,
            residual: norm,
            hydroxide_capped,
            air_capped,
        },
    ))
}

#[derive(Debug, Clone)]
pub struct HydroxideStats {
    pub active_set_iters: u32,
    pub residual: f64,
    pub used_exhaustive: bool,
}

/// Solves the implicit hydroxide equation for one step. The diffusion,
/// convection, reaction, and boundary-inflow coefficients are all lagged; the
/// convected concentration is upwinded per cell, which together with mass
/// lumping makes the system an M-matrix, so the computed concentrations stay
/// nonnegative. The one-sided boundary inflow is resolved exactly by
/// active-set iteration over the (at most two) boundary kinks.
#[allow(clippy::too_many_arguments)]
pub fn solve_hydroxide_step(
    s_prev: &[f64],
    velocity_truncated: &[f64],
    h_prev: &[f64],
    bc: &StepBoundary,
    tau: f64,
    cfg: &SolverConfig,
    params: &PhysParams,
    grid: &Grid1D,
) -> Result<(Vec<f64>, HydroxideStats), StepError> {
    let n = grid.num_nodes();
    if s_prev.len() != n || velocity_truncated.len() != n || h_prev.len() != n {
        return Err(StepError::InvalidInput(format!(
            "field lengths {} / {} / {} do not match grid ({n})",
            s_prev.len(),
            velocity_truncated.len(),
            h_prev.len()
        )));
    }
    for (i, &s) in s_prev.iter().enumerate() {
        if s < -1e-10 {
            return Err(StepError::NegativeSaturationCoefficient { node: i, value: s });
        }
    }
    let cells = grid.num_cells();
    let widths = grid.widths();
    let masses = grid.lumped_masses();

    let mut base = Tridiagonal::zeros(n);
    let mut rhs_base = vec![0.0; n];
    #[allow(clippy::needless_range_loop)]
    for i in 0..n {
        base.diag[i] = params.rho_h * masses[i]
            + tau * params.gamma * params.molar_h * masses[i] * s_prev[i] * (1.0 - s_prev[i]);
        rhs_base[i] = params.rho_h * masses[i] * h_prev[i];
    }
    #[allow(clippy::needless_range_loop)]
    for c in 0..cells {
        let diffusion = params.kappa * cell_mid(s_prev, c).max(cfg.eps_degenerate);
        let g = tau * diffusion / widths[c];
        base.diag[c] += g;
        base.sup[c] -= g;
        base.sub[c] -= g;
        base.diag[c + 1] += g;
        // Upwinded convection keeps the off-diagonals nonpositive.
        let coef = tau * params.rho_h * cell_mid(velocity_truncated, c);
        if coef >= 0.0 {
            base.diag[c] += coef;
            base.sub[c] -= coef;
        } else {
            base.sup[c] += coef;
            base.diag[c + 1] -= coef;
        }
    }

    // Boundary nodes where the inflow term can act at all.
    let candidates: Vec<(usize, f64, f64)> = [(0usize, bc.left), (n - 1, bc.right)]
        .into_iter()
        .filter_map(|(i, sample)| {
            let coef = sample.beta * s_prev[i].max(0.0);
            (coef > 0.0).then_some((i, coef, sample.h_exterior))
        })
        .collect();

    let solve_mask = |mask: usize| -> Result<Vec<f64>, StepError> {
        let mut m = base.clone();
        let mut rhs = rhs_base.clone();
        for (k, &(i, coef, h_ext)) in candidates.iter().enumerate() {
            if mask & (1 << k) != 0 {
                m.diag[i] += tau * coef;
                rhs[i] += tau * coef * h_ext;
            }
        }
        m.solve(&rhs).map_err(StepError::LinearSolve)
    };

    let consistent = |mask: usize, h: &[f64]| -> bool {
        candidates.iter().enumerate().all(|(k, &(i, _, h_ext))| {
            let gap = h_ext - h[i];
            if mask & (1 << k) != 0 {
                gap >= 0.0
            } else {
                gap <= 0.0
            }
        })
    };

    // Initial guess: inflow wherever the exterior exceeds the previous value.
    let mut mask = 0usize;
    for (k, &(i, _, h_ext)) in candidates.iter().enumerate() {
        if h_ext > h_prev[i] {
            mask |= 1 << k;
        }
    }

    let mut visited = Vec::new();
    let mut h = Vec::new();
    let mut iters = 0u32;
    let mut used_exhaustive = false;
    let mut solved = false;
    while !visited.contains(&mask) {
        visited.push(mask);
        iters += 1;
        h = solve_mask(mask)?;
        if consistent(mask, &h) {
            solved = true;
            break;
        }
        let mut next = mask;
        for (k, &(i, _, h_ext)) in candidates.iter().enumerate() {
            let gap = h_ext - h[i];
            let active = mask & (1 << k) != 0;
            if active && gap < 0.0 {
                next &= !(1 << k);
            } else if !active && gap > 0.0 {
                next |= 1 << k;
            }
        }
        mask = next;
    }
    if !solved {
        used_exhaustive = true;
        for m in 0..(1usize << candidates.len()) {
            iters += 1;
            h = solve_mask(m)?;
            if consistent(m, &h) {
                solved = true;
                break;
            }
        }
    }
    if !solved {
        return Err(StepError::HydroxideNonConvergence {
            residual: f64::INFINITY,
        });
    }

    // Residual of the tau-scaled equation with the literal one-sided inflow.
    let mut g = base.mul(&h);
    for i in 0..n {
        g[i] -= rhs_base[i];
    }
    for &(i, coef, h_ext) in &candidates {
        g[i] -= tau * coef * (h_ext - h[i]).max(0.0);
    }
    let residual = inf_norm(&g);
    if residual > cfg.picard_tol {
        return Err(StepError::HydroxideNonConvergence { residual });
    }

    Ok((
        h,
        HydroxideStats {
            active_set_iters: iters,
            residual,
            used_exhaustive,
        },
    ))
}

/// Irreversible precipitate update: cP += tau * gamma * m_p * h * s * (1-s).
/// With h >= 0 and s in [0, 1] the increment is nonnegative, so the deposit
/// never decreases.
pub fn update_precipitate(
    precipitate_prev: &[f64],
    h: &[f64],
    s: &[f64],
    tau: f64,
    gamma: f64,
    molar_p: f64,
) -> Vec<f64> {
    debug_assert!(h.iter().all(|&v| v >= 0.0));
    debug_assert!(s.iter().all(|&v| (0.0..=1.0).contains(&v)));
    precipitate_prev
        .iter()
        .zip(h.iter().zip(s))
        .map(|(&c, (&hv, &sv))| {
            c + tau * constitutive::reaction_rate_precipitate(hv, sv, gamma, molar_p)
        })
        .collect()
}

/// Water mass identity for one step (the constant-test-function sum of the
/// saturation equation): storage change plus boundary exchange minus the
/// reaction source.
#[allow(clippy::too_many_arguments)]
pub fn saturation_mass_ledger(
    s_prev: &[f64],
    s_new: &[f64],
    h_prev: &[f64],
    bc: &StepBoundary,
    tau: f64,
    params: &PhysParams,
    grid: &Grid1D,
    curve: &WettingCurve,
) -> f64 {
    let masses = grid.lumped_masses();
    let n = s_new.len();
    let cap = params.truncation_level;
    let mut acc = 0.0;
    for i in 0..n {
        acc += params.rho_w * masses[i] * (s_new[i] - s_prev[i]);
        acc -= tau
            * params.gamma
            * params.molar_w
            * masses[i]
            * constitutive::truncate(h_prev[i], cap)
            * s_new[i]
            * constitutive::truncate(1.0 - s_new[i], cap);
    }
    acc += tau * bc.left.alpha * (curve.value(s_new[0]) - curve.value(bc.left.s_exterior));
    acc += tau * bc.right.alpha * (curve.value(s_new[n - 1]) - curve.value(bc.right.s_exterior));
    acc
}

/// Hydroxide mass identity for one step: storage change minus boundary inflow
/// plus the reaction sink.
pub fn hydroxide_mass_ledger(
    h_prev: &[f64],
    h_new: &[f64],
    s_prev: &[f64],
    bc: &StepBoundary,
    tau: f64,
    params: &PhysParams,
    grid: &Grid1D,
) -> f64 {
    let masses = grid.lumped_masses();
    let n = h_new.len();
    let mut acc = 0.0;
    for i in 0..n {
        acc += params.rho_h * masses[i] * (h_new[i] - h_prev[i]);
        acc += tau
            * params.gamma
            * params.molar_h
            * masses[i]
            * h_new[i]
            * s_prev[i]
            * (1.0 - s_prev[i]);
    }
    acc -= tau * bc.left.beta * s_prev[0] * (bc.left.h_exterior - h_new[0]).max(0.0);
    acc -= tau * bc.right.beta * s_prev[n - 1] * (bc.right.h_exterior - h_new[n - 1]).max(0.0);
    acc
}

/// Advances the state by one step: transport velocity from the incoming
/// state, saturation solve, hydroxide solve (both against lagged data),
/// precipitate update.
#[allow(clippy::too_many_arguments)]
pub fn advance_one_step(
    state: &State,
    bc: &StepBoundary,
    tau: f64,
    cfg: &SolverConfig,
    params: &PhysParams,
    grid: &Grid1D,
    curve: &WettingCurve,
    law: &PermeabilityLaw,
    kernel_weights: &MollifierWeights,
) -> Result<(State, StepReport), StepError> {
    let flux = transport::water_flux(&state.saturation, &state.precipitate, curve, law, grid)?;
    let velocity = transport::mollified_velocity(&flux, kernel_weights, params.rho_h)?;
    let sup_velocity = inf_norm(&velocity);
    let velocity_capped = sup_velocity > params.truncation_level + TRUNCATION_FLAG_TOL;
    let v_r = transport::truncated_velocity(&velocity, params.truncation_level);

    let (s_new, s_stats) = solve_saturation_step(state, bc, tau, cfg, params, grid, curve, law)?;
    let (h_new, h_stats) = solve_hydroxide_step(
        &state.saturation,
        &v_r,
        &state.hydroxide,
        bc,
        tau,
        cfg,
        params,
        grid,
    )?;

    // The solves leave at most rounding-level excursions outside the
    // admissible box; clamp so the precipitate update sees admissible inputs
    // and stays exactly monotone.
    let h_box: Vec<f64> = h_new.iter().map(|&v| v.max(0.0)).collect();
    let s_box: Vec<f64> = s_new.iter().map(|&v| v.clamp(0.0, 1.0)).collect();
    let c_new = update_precipitate(
        &state.precipitate,
        &h_box,
        &s_box,
        tau,
        params.gamma,
        params.molar_p,
    );

    let report = StepReport {
        newton_iters: s_stats.newton_iters,
        picard_iters: s_stats.picard_iters,
        active_set_iters: h_stats.active_set_iters,
        s_residual: s_stats.residual,
        h_residual: h_stats.residual,
        s_mass_ledger_residual: saturation_mass_ledger(
            &state.saturation,
            &s_new,
            &state.hydroxide,
            bc,
            tau,
            params,
            grid,
            curve,
        ),
        h_mass_ledger_residual: hydroxide_mass_ledger(
            &state.hydroxide,
            &h_new,
            &state.saturation,
            bc,
            tau,
            params,
            grid,
        ),
        truncation: TruncationFlags {
            hydroxide_capped: s_stats.hydroxide_capped,
            air_capped: s_stats.air_capped,
            velocity_capped,
        },
        sup_velocity,
        saturation_gradient_norm: grid.h1_seminorm(&state.saturation),
    };

    let next = State {
        saturation: s_new,
        hydroxide: h_new,
        precipitate: c_new,
        time: state.time + tau,
    };
    Ok((next, report))
}
