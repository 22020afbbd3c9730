//! Pointwise material laws: the wetting curve and its linear extension, the
//! permeability law, mass-action reaction kinetics, stoichiometric source
//! splitting, and the truncation clamp used to bound nonlinear terms.
//!
//! Everything here is a pure function of its inputs and safe to share across
//! threads.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConstitutiveError {
    #[error("invalid wetting curve: {0}")]
    InvalidWettingCurve(String),
    #[error("invalid permeability law: {0}")]
    InvalidPermeabilityLaw(String),
    #[error("permeability evaluated at negative precipitate amount {0}")]
    NegativePrecipitate(f64),
}

/// Capillary pressure as a monotone function of saturation, p = f(s), defined
/// on [0, 1] and extended linearly outside the interval with the one-sided
/// end slopes. The extension makes the curve a total function so that the
/// saturation solve never leaves its domain.
#[derive(Debug, Clone, PartialEq)]
pub struct WettingCurve {
    form: WettingForm,
    slope_min: f64,
    slope_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum WettingForm {
    Linear {
        offset: f64,
        slope: f64,
    },
    /// Piecewise-linear interpolation of strictly increasing (s, p) pairs
    /// spanning s = 0 to s = 1.
    TabulatedMonotone {
        breakpoints: Vec<(f64, f64)>,
    },
}

impl WettingCurve {
    pub fn linear(offset: f64, slope: f64) -> Result<Self, ConstitutiveError> {
        if !offset.is_finite() || !slope.is_finite() || slope <= 0.0 {
            return Err(ConstitutiveError::InvalidWettingCurve(format!(
                "linear form needs a finite offset and a positive slope, got offset={offset}, slope={slope}"
            )));
        }
        Ok(Self {
            form: WettingForm::Linear { offset, slope },
            slope_min: slope,
            slope_max: slope,
        })
    }

    /// Builds a tabulated curve. Breakpoints are (saturation, pressure) pairs
    /// with saturations running from exactly 0 to exactly 1; both coordinates
    /// must be strictly increasing so every segment slope is positive.
    pub fn tabulated(breakpoints: Vec<(f64, f64)>) -> Result<Self, ConstitutiveError> {
        let bad = |msg: String| Err(ConstitutiveError::InvalidWettingCurve(msg));
        if breakpoints.len() < 2 {
            return bad("tabulated form needs at least two breakpoints".into());
        }
        if breakpoints
            .iter()
            .any(|(s, p)| !s.is_finite() || !p.is_finite())
        {
            return bad("tabulated breakpoints must be finite".into());
        }
        if breakpoints[0].0 != 0.0 || breakpoints[breakpoints.len() - 1].0 != 1.0 {
            return bad("tabulated saturations must span exactly [0, 1]".into());
        }
        let mut slope_min = f64::INFINITY;
        let mut slope_max = 0.0f64;
        for pair in breakpoints.windows(2) {
            let (s0, p0) = pair[0];
            let (s1, p1) = pair[1];
            if s1 <= s0 || p1 <= p0 {
                return bad(format!(
                    "breakpoints must be strictly increasing in both coordinates, got ({s0},{p0}) then ({s1},{p1})"
                ));
            }
            let slope = (p1 - p0) / (s1 - s0);
            slope_min = slope_min.min(slope);
            slope_max = slope_max.max(slope);
        }
        Ok(Self {
            form: WettingForm::TabulatedMonotone { breakpoints },
            slope_min,
            slope_max,
        })
    }

    /// The extended curve value. Agrees with f on [0, 1]; continues with slope
    /// f'(0) below 0 and f'(1) above 1.
    pub fn value(&self, s: f64) -> f64 {
        match &self.form {
            WettingForm::Linear { offset, slope } => offset + slope * s,
            WettingForm::TabulatedMonotone { breakpoints } => {
                let first = breakpoints[0];
                let last = breakpoints[breakpoints.len() - 1];
                if s < 0.0 {
                    let (s1, p1) = breakpoints[1];
                    let d0 = (p1 - first.1) / (s1 - first.0);
                    first.1 + d0 * s
                } else if s > 1.0 {
                    let (s0, p0) = breakpoints[breakpoints.len() - 2];
                    let d1 = (last.1 - p0) / (last.0 - s0);
                    last.1 + d1 * (s - 1.0)
                } else {
                    let seg = self.segment_index(s);
                    let (s0, p0) = breakpoints[seg];
                    let (s1, p1) = breakpoints[seg + 1];
                    p0 + (p1 - p0) / (s1 - s0) * (s - s0)
                }
            }
        }
    }

    /// Slope of the extended curve. Piecewise constant for tabulated curves;
    /// at a breakpoint the right-hand segment is used.
    pub fn derivative(&self, s: f64) -> f64 {
        match &self.form {
            WettingForm::Linear { slope, .. } => *slope,
            WettingForm::TabulatedMonotone { breakpoints } => {
                let seg = if s < 0.0 {
                    0
                } else if s > 1.0 {
                    breakpoints.len() - 2
                } else {
                    self.segment_index(s)
                };
                let (s0, p0) = breakpoints[seg];
                let (s1, p1) = breakpoints[seg + 1];
                (p1 - p0) / (s1 - s0)
            }
        }
    }

    fn segment_index(&self, s: f64) -> usize {
        match &self.form {
            WettingForm::TabulatedMonotone { breakpoints } => {
                let k = breakpoints.partition_point(|(bs, _)| *bs <= s);
                k.saturating_sub(1).min(breakpoints.len() - 2)
            }
            WettingForm::Linear { .. } => 0,
        }
    }

    pub fn form(&self) -> &WettingForm {
        &self.form
    }

    /// Lower bound on f' over [0, 1].
    pub fn slope_min(&self) -> f64 {
        self.slope_min
    }

    /// Upper bound on f' over [0, 1].
    pub fn slope_max(&self) -> f64 {
        self.slope_max
    }
}

/// Permeability as a nonincreasing function of the deposited precipitate
/// amount, bounded between positive floor and cap values.
#[derive(Debug, Clone, PartialEq)]
pub struct PermeabilityLaw {
    form: PermeabilityForm,
    k_min: f64,
    k_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PermeabilityForm {
    Constant {
        k0: f64,
    },
    /// k_floor + (k0 - k_floor) * exp(-rate * c): smooth, nonincreasing, and
    /// bounded below by the floor as the pores fill.
    ExpDecay {
        k0: f64,
        rate: f64,
        k_floor: f64,
    },
}

impl PermeabilityLaw {
    pub fn constant(k0: f64) -> Result<Self, ConstitutiveError> {
        if !k0.is_finite() || k0 <= 0.0 {
            return Err(ConstitutiveError::InvalidPermeabilityLaw(format!(
                "constant form needs k0 > 0, got {k0}"
            )));
        }
        Ok(Self {
            form: PermeabilityForm::Constant { k0 },
            k_min: k0,
            k_max: k0,
        })
    }

    pub fn exp_decay(k0: f64, rate: f64, k_floor: f64) -> Result<Self, ConstitutiveError> {
        if !(k0.is_finite() && rate.is_finite() && k_floor.is_finite())
            || k0 <= 0.0
            || rate < 0.0
            || k_floor <= 0.0
            || k_floor > k0
        {
            return Err(ConstitutiveError::InvalidPermeabilityLaw(format!(
                "exp-decay form needs 0 < k_floor <= k0 and rate >= 0, got k0={k0}, rate={rate}, k_floor={k_floor}"
            )));
        }
        Ok(Self {
            form: PermeabilityForm::ExpDecay { k0, rate, k_floor },
            k_min: k_floor,
            k_max: k0,
        })
    }

    /// Evaluates the law at a precipitate amount. Negative amounts are a
    /// domain error: the precipitate balance is irreversible.
    pub fn value(&self, c_precipitate: f64) -> Result<f64, ConstitutiveError> {
        if c_precipitate < 0.0 {
            return Err(ConstitutiveError::NegativePrecipitate(c_precipitate));
        }
        Ok(match &self.form {
            PermeabilityForm::Constant { k0 } => *k0,
            PermeabilityForm::ExpDecay { k0, rate, k_floor } => {
                k_floor + (k0 - k_floor) * (-rate * c_precipitate).exp()
            }
        })
    }

    pub fn form(&self) -> &PermeabilityForm {
        &self.form
    }

    pub fn k_min(&self) -> f64 {
        self.k_min
    }

    pub fn k_max(&self) -> f64 {
        self.k_max
    }
}

/// Physical constants of the model. Densities and molar masses refer to
/// water (w), calcium hydroxide (h), calcium carbonate (p) and carbon
/// dioxide (g).
#[derive(Debug, Clone, PartialEq)]
pub struct PhysParams {
    /// Mass density of water.
    pub rho_w: f64,
    /// Mass density of calcium hydroxide.
    pub rho_h: f64,
    pub molar_w: f64,
    pub molar_h: f64,
    pub molar_p: f64,
    pub molar_g: f64,
    /// Reaction speed coefficient.
    pub gamma: f64,
    /// Diffusivity of dissolved hydroxide.
    pub kappa: f64,
    /// Default boundary permeability for water (per boundary point).
    pub alpha: f64,
    /// Default boundary permeability for hydroxide inflow (per boundary point).
    pub beta: f64,
    /// Lower admissible saturation of the boundary/initial data.
    pub s_floor: f64,
    /// Upper admissible exterior hydroxide concentration.
    pub h_ceiling: f64,
    /// Truncation level R for the clamped nonlinear terms; must be >= 1 so
    /// that the air-fraction clamp is inactive on admissible states.
    pub truncation_level: f64,
}

/// Outcome of a parameter-schema check: hard violations plus degeneracy
/// flags that are reported but do not reject the data.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamCheck {
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

impl PhysParams {
    pub fn validate(&self) -> ParamCheck {
        let mut check = ParamCheck::default();
        let mut positive = |name: &str, v: f64| {
            if !v.is_finite() || v <= 0.0 {
                check.errors.push(format!(
                    "{name} must be finite and strictly positive, got {v}"
                ));
            }
        };
        positive("rho_w", self.rho_w);
        positive("rho_h", self.rho_h);
        positive("molar_w", self.molar_w);
        positive("molar_h", self.molar_h);
        positive("molar_p", self.molar_p);
        positive("molar_g", self.molar_g);
        positive("kappa", self.kappa);
        positive("h_ceiling", self.h_ceiling);
        if !self.gamma.is_finite() || self.gamma < 0.0 {
            check.errors.push(format!(
                "gamma must be finite and nonnegative, got {}",
                self.gamma
            ));
        } else if self.gamma == 0.0 {
            check.warnings.push("gamma = 0: reaction disabled".into());
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !v.is_finite() || v < 0.0 {
                check
                    .errors
                    .push(format!("{name} must be finite and nonnegative, got {v}"));
            }
        }
        if !self.s_floor.is_finite() || self.s_floor < 0.0 || self.s_floor > 1.0 {
            check
                .errors
                .push(format!("s_floor must lie in [0, 1], got {}", self.s_floor));
        } else if self.s_floor == 0.0 {
            check.warnings.push(
                "s_floor = 0: degenerate data; the hydroxide solve uses its epsilon floor".into(),
            );
        }
        if !self.truncation_level.is_finite() || self.truncation_level < 1.0 {
            check.errors.push(format!(
                "truncation_level must be >= 1, got {}",
                self.truncation_level
            ));
        }
        check
    }
}

/// Reaction source rates split by species, all derived from one precipitate
/// production rate through the molar balance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceRates {
    pub water: f64,
    pub hydroxide: f64,
    pub carbon_dioxide: f64,
}

/// Mass-action precipitate production rate: gamma * m_p * h * s * (1 - s).
/// Zero whenever the hydroxide, the water, or the air phase is exhausted.
pub fn reaction_rate_precipitate(h: f64, s: f64, gamma: f64, molar_p: f64) -> f64 {
    gamma * molar_p * h * s * (1.0 - s)
}

/// Splits a precipitate mass production rate into the companion source rates
/// of the other species: water is produced, hydroxide and carbon dioxide are
/// consumed, all in molar proportion.
pub fn stoichiometric_rates(rate_precipitate: f64, params: &PhysParams) -> SourceRates {
    let molar_rate = rate_precipitate / params.molar_p;
    SourceRates {
        water: params.molar_w * molar_rate,
        hydroxide: -params.molar_h * molar_rate,
        carbon_dioxide: -params.molar_g * molar_rate,
    }
}

/// Truncation clamp: min(max(v, 0), cap). Keeps nonlinear terms bounded; with
/// the default cap it is inactive on physically admissible values.
pub fn truncate(v: f64, cap: f64) -> f64 {
    debug_assert!(cap > 0.0);
    v.clamp(0.0, cap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_params() -> PhysParams {
        PhysParams {
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
            s_floor: 0.0,
            h_ceiling: 1.0,
            truncation_level: 10.0,
        }
    }

    #[test]
    fn identity_curve_values_and_extension() {
        let f = WettingCurve::linear(0.0, 1.0).unwrap();
        assert_eq!(f.value(0.5), 0.5);
        // Extension below 0: f(0) + f'(0) * s.
        assert!((f.value(-0.2) - (-0.2)).abs() < 1e-15);
        // Extension above 1: f(1) + f'(1) * (s - 1).
        assert!((f.value(1.3) - 1.3).abs() < 1e-15);
        assert_eq!(f.derivative(-3.0), 1.0);
        assert_eq!(f.slope_min(), 1.0);
        assert_eq!(f.slope_max(), 1.0);
    }

    #[test]
    fn tabulated_curve_interpolates_and_extends() {
        let f = WettingCurve::tabulated(vec![(0.0, 0.0), (0.4, 0.2), (1.0, 1.4)]).unwrap();
        // Interior interpolation on each segment.
        assert!((f.value(0.2) - 0.1).abs() < 1e-15);
        assert!((f.value(0.7) - (0.2 + 0.3 * 2.0)).abs() < 1e-14);
        // Slopes: 0.5 on the first segment, 2.0 on the second.
        assert!((f.derivative(0.1) - 0.5).abs() < 1e-15);
        assert!((f.derivative(0.9) - 2.0).abs() < 1e-15);
        assert!((f.slope_min() - 0.5).abs() < 1e-15);
        assert!((f.slope_max() - 2.0).abs() < 1e-15);
        // Linear continuation with the end slopes.
        assert!((f.value(-0.2) - (-0.1)).abs() < 1e-15);
        assert!((f.value(1.25) - (1.4 + 0.5)).abs() < 1e-14);
    }

    #[test]
    fn tabulated_curve_rejects_non_monotone_tables() {
        assert!(WettingCurve::tabulated(vec![(0.0, 0.0), (0.5, 0.5)]).is_err());
        assert!(WettingCurve::tabulated(vec![(0.0, 0.0), (0.5, 0.5), (1.0, 0.4)]).is_err());
        assert!(WettingCurve::tabulated(vec![(0.0, 0.0), (0.0, 0.1), (1.0, 1.0)]).is_err());
    }

    #[test]
    fn permeability_examples() {
        let k = PermeabilityLaw::constant(2e-4).unwrap();
        assert_eq!(k.value(0.7).unwrap(), 2e-4);
        let k = PermeabilityLaw::exp_decay(1.0, 1.0, 0.1).unwrap();
        assert_eq!(k.value(0.0).unwrap(), 1.0);
        assert!(k.value(-0.1).is_err());
    }

    #[test]
    fn reaction_rate_zero_set_and_value() {
        assert_eq!(reaction_rate_precipitate(0.0, 0.3, 1e-2, 1.0), 0.0);
        assert_eq!(reaction_rate_precipitate(0.8, 1.0, 1e-2, 1.0), 0.0);
        assert_eq!(reaction_rate_precipitate(0.8, 0.0, 1e-2, 1.0), 0.0);
        let r = reaction_rate_precipitate(1.0, 0.5, 1e-2, 1.0);
        assert!((r - 2.5e-3).abs() < 1e-18);
    }

    #[test]
    fn stoichiometric_examples() {
        let p = unit_params();
        let z = stoichiometric_rates(0.0, &p);
        assert_eq!((z.water, z.hydroxide, z.carbon_dioxide), (0.0, 0.0, 0.0));
        let r = stoichiometric_rates(0.37, &p);
        assert_eq!(r.water, 0.37);
        assert_eq!(r.hydroxide, -0.37);
        assert_eq!(r.carbon_dioxide, -0.37);
        let mut p2 = unit_params();
        p2.molar_p = 100.0;
        p2.molar_w = 18.0;
        let r = stoichiometric_rates(1.0, &p2);
        assert!((r.water - 0.18).abs() < 1e-15);
    }

    #[test]
    fn truncate_examples() {
        assert_eq!(truncate(-3.0, 5.0), 0.0);
        assert_eq!(truncate(2.0, 5.0), 2.0);
        assert_eq!(truncate(7.0, 5.0), 5.0);
    }

    #[test]
    fn params_schema_flags_degeneracies() {
        let mut p = unit_params();
        let check = p.validate();
        assert!(check.errors.is_empty());
        // s_floor = 0 is flagged, not rejected.
        assert!(check.warnings.iter().any(|w| w.contains("s_floor")));
        p.truncation_level = 0.5;
        assert!(!p.validate().errors.is_empty());
        p = unit_params();
        p.alpha = -1.0;
        assert!(!p.validate().errors.is_empty());
    }

    proptest! {
        #[test]
        fn extended_curve_is_strictly_increasing(
            lo in -2.0f64..3.0,
            gap in 1e-6f64..2.0,
            tab in prop::bool::ANY,
        ) {
            let curve = if tab {
                WettingCurve::tabulated(vec![(0.0, 0.0), (0.3, 0.12), (0.6, 0.5), (1.0, 1.5)]).unwrap()
            } else {
                WettingCurve::linear(0.2, 0.8).unwrap()
            };
            let hi = lo + gap;
            prop_assert!(curve.value(lo) < curve.value(hi));
        }

        #[test]
        fn permeability_is_nonincreasing_and_bounded(
            c1 in 0.0f64..50.0,
            c2 in 0.0f64..50.0,
        ) {
            let law = PermeabilityLaw::exp_decay(1.0, 0.7, 0.1).unwrap();
            let (lo, hi) = if c1 <= c2 { (c1, c2) } else { (c2, c1) };
            let k_lo = law.value(lo).unwrap();
            let k_hi = law.value(hi).unwrap();
            prop_assert!(k_lo >= k_hi);
            prop_assert!(k_hi >= law.k_min() - 1e-15 && k_lo <= law.k_max() + 1e-15);
        }

        #[test]
        fn stoichiometric_balance_holds_to_machine_precision(
            rate in -1e3f64..1e3,
            mw in 0.1f64..200.0,
            mh in 0.1f64..200.0,
            mp in 0.1f64..200.0,
            mg in 0.1f64..200.0,
        ) {
            let mut p = unit_params();
            p.molar_w = mw;
            p.molar_h = mh;
            p.molar_p = mp;
            p.molar_g = mg;
            let r = stoichiometric_rates(rate, &p);
            let molar = rate / mp;
            let scale = molar.abs().max(1e-300);
            prop_assert!(((r.water / mw) - molar).abs() <= 1e-14 * scale);
            prop_assert!(((-r.hydroxide / mh) - molar).abs() <= 1e-14 * scale);
            prop_assert!(((-r.carbon_dioxide / mg) - molar).abs() <= 1e-14 * scale);
        }

        #[test]
        fn truncate_is_idempotent_and_one_lipschitz(
            a in -20.0f64..20.0,
            b in -20.0f64..20.0,
            cap in 0.1f64..15.0,
        ) {
            let ta = truncate(a, cap);
            prop_assert_eq!(truncate(ta, cap), ta);
            let tb = truncate(b, cap);
            prop_assert!((ta - tb).abs() <= (a - b).abs() + 1e-300);
        }
    }
}
