//! Darcy water flux, the mollified transport velocity, and its clamp.
//!
//! The hydroxide is carried by the water flux averaged over a small
//! neighborhood: the nodal velocity is the convolution of the per-cell flux
//! with a compactly supported unit-mass kernel, integrated over the domain
//! only (no renormalization near the boundary).

use crate::constitutive::{PermeabilityLaw, WettingCurve};
use crate::mesh::Grid1D;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("field length {got} does not match grid ({expect})")]
    SizeMismatch { got: usize, expect: usize },
    #[error("invalid mollifier: {0}")]
    InvalidKernel(String),
    #[error(transparent)]
    Constitutive(#[from] crate::constitutive::ConstitutiveError),
}

/// Piecewise-constant water mass flux, one value per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct WaterFlux {
    pub per_cell: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelProfile {
    /// sigma(u) = (1/eps) * max(0, 1 - |u|/eps); cheapest continuous choice.
    Triangular,
    /// Smooth bump exp(-1/(1 - (u/eps)^2)) normalized to unit mass.
    Bump,
}

/// Compactly supported, nonnegative, unit-mass averaging kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct Mollifier {
    radius: f64,
    profile: KernelProfile,
}

/// Kernel discretized against a grid: for each node, the exact integrals of
/// the shifted kernel over every cell that intersects its support. Building
/// the table once removes quadrature error from the hot loop.
#[derive(Debug, Clone)]
pub struct MollifierWeights {
    rows: Vec<WeightRow>,
    num_cells: usize,
    sup_value: f64,
}

#[derive(Debug, Clone)]
struct WeightRow {
    first_cell: usize,
    weights: Vec<f64>,
}

impl Mollifier {
    pub fn new(radius: f64, profile: KernelProfile) -> Result<Self, TransportError> {
        if !radius.is_finite() || radius <= 0.0 {
            return Err(TransportError::InvalidKernel(format!(
                "support radius must be positive, got {radius}"
            )));
        }
        Ok(Self { radius, profile })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn profile(&self) -> KernelProfile {
        self.profile
    }

    /// Kernel density at offset u.
    pub fn density(&self, u: f64) -> f64 {
        let t = u / self.radius;
        if t.abs() >= 1.0 {
            return 0.0;
        }
        match self.profile {
            KernelProfile::Triangular => (1.0 - t.abs()) / self.radius,
            KernelProfile::Bump => {
                let g = (-1.0 / (1.0 - t * t)).exp();
                g / (self.radius * bump_mass())
            }
        }
    }

    /// Maximum kernel value, used in the derived velocity bound.
    pub fn sup_value(&self) -> f64 {
        match self.profile {
            KernelProfile::Triangular => 1.0 / self.radius,
            KernelProfile::Bump => (-1.0f64).exp() / (self.radius * bump_mass()),
        }
    }

    /// Integral of the kernel over (-inf, u].
    pub fn cumulative(&self, u: f64) -> f64 {
        let eps = self.radius;
        if u <= -eps {
            return 0.0;
        }
        if u >= eps {
            return 1.0;
        }
        match self.profile {
            KernelProfile::Triangular => {
                if u <= 0.0 {
                    let t = u + eps;
                    t * t / (2.0 * eps * eps)
                } else {
                    1.0 - (eps - u) * (eps - u) / (2.0 * eps * eps)
                }
            }
            KernelProfile::Bump => {
                // Smooth integrand; composite Simpson converges fast and the
                // table is built once per run.
                simpson(|y| self.density(y), -eps, u, 512)
            }
        }
    }

    /// Builds the per-grid weight table.
    pub fn discretize(&self, grid: &Grid1D) -> MollifierWeights {
        let nodes = grid.nodes();
        let n_cells = grid.num_cells();
        let mut rows = Vec::with_capacity(nodes.len());
        for &x in nodes {
            let lo = x - self.radius;
            let hi = x + self.radius;
            let first_cell = nodes[..n_cells].iter().rposition(|&a| a <= lo).unwrap_or(0);
            let mut weights = Vec::new();
            for c in first_cell..n_cells {
                let (a, b) = (nodes[c], nodes[c + 1]);
                if a >= hi {
                    break;
                }
                let seg_lo = a.max(lo);
                let seg_hi = b.min(hi);
                let w = if seg_hi > seg_lo {
                    self.cumulative(seg_hi - x) - self.cumulative(seg_lo - x)
                } else {
                    0.0
                };
                weights.push(w);
            }
            rows.push(WeightRow {
                first_cell,
                weights,
            });
        }
        MollifierWeights {
            rows,
            num_cells: n_cells,
            sup_value: self.sup_value(),
        }
    }
}

impl MollifierWeights {
    pub fn num_nodes(&self) -> usize {
        self.rows.len()
    }

    pub fn num_cells(&self) -> usize {
        self.num_cells
    }

    pub fn sup_value(&self) -> f64 {
        self.sup_value
    }

    /// Sum of the weights of one node row; equals the kernel mass inside the
    /// domain (1 for interior nodes, less near the boundary).
    pub fn row_mass(&self, node: usize) -> f64 {
        self.rows[node].weights.iter().sum()
    }
}

fn bump_mass() -> f64 {
    // Integral of exp(-1/(1-t^2)) over [-1, 1]; fixed so every call agrees.
    const MASS: f64 = 0.443_993_816_168_079_4;
    MASS
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let n = panels * 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let x = a + i as f64 * h;
        acc += f(x) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

/// Darcy flux per cell: q = -k(cP) * d/dx f~(s), with the permeability
/// evaluated at the cell-midpoint precipitate state and the pressure gradient
/// taken from the nodal values.
pub fn water_flux(
    saturation: &[f64],
    precipitate: &[f64],
    curve: &WettingCurve,
    law: &PermeabilityLaw,
    grid: &Grid1D,
) -> Result<WaterFlux, TransportError> {
    let n = grid.num_nodes();
    if saturation.len() != n {
        return Err(TransportError::SizeMismatch {
            got: saturation.len(),
            expect: n,
        });
    }
    if precipitate.len() != n {
        return Err(TransportError::SizeMismatch {
            got: precipitate.len(),
            expect: n,
        });
    }
    let widths = grid.widths();
    let mut per_cell = Vec::with_capacity(grid.num_cells());
    for c in 0..grid.num_cells() {
        let k = law.value(0.5 * (precipitate[c] + precipitate[c + 1]))?;
        let grad = (curve.value(saturation[c + 1]) - curve.value(saturation[c])) / widths[c];
        per_cell.push(-k * grad);
    }
    Ok(WaterFlux { per_cell })
}

/// Nodal transport velocity: v(x_i) = (1/rho_h) * sum over cells of the exact
/// kernel integral times the cell flux. Integration runs over the domain
/// only, so near the boundary part of the kernel mass is lost.
pub fn mollified_velocity(
    flux: &WaterFlux,
    weights: &MollifierWeights,
    rho_h: f64,
) -> Result<Vec<f64>, TransportError> {
    if flux.per_cell.len() != weights.num_cells() {
        return Err(TransportError::SizeMismatch {
            got: flux.per_cell.len(),
            expect: weights.num_cells(),
        });
    }
    let mut v = Vec::with_capacity(weights.rows.len());
    for row in &weights.rows {
        let mut acc = 0.0;
        for (k, w) in row.weights.iter().enumerate() {
            acc += w * flux.per_cell[row.first_cell + k];
        }
        v.push(acc / rho_h);
    }
    Ok(v)
}

/// Clamps each component to magnitude <= cap, preserving the sign; zero maps
/// to zero.
pub fn truncated_velocity(velocity: &[f64], cap: f64) -> Vec<f64> {
    debug_assert!(cap > 0.0);
    velocity.iter().map(|&v| v.clamp(-cap, cap)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn identity_curve() -> WettingCurve {
        WettingCurve::linear(0.0, 1.0).unwrap()
    }

    #[test]
    fn constant_saturation_gives_zero_flux() {
        let grid = Grid1D::graded(6, 1.0, 1.2).unwrap();
        let s = vec![0.4; 7];
        let cp = vec![0.0; 7];
        let law = PermeabilityLaw::constant(2e-4).unwrap();
        let q = water_flux(&s, &cp, &identity_curve(), &law, &grid).unwrap();
        assert!(q.per_cell.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_profile_gives_constant_flux() {
        let grid = Grid1D::graded(5, 1.0, 1.0).unwrap();
        let s: Vec<f64> = grid.nodes().to_vec();
        let cp = vec![0.3; 6];
        let law = PermeabilityLaw::constant(2e-4).unwrap();
        let q = water_flux(&s, &cp, &identity_curve(), &law, &grid).unwrap();
        for v in q.per_cell {
            assert!((v + 2e-4).abs() < 1e-18);
        }
    }

    #[test]
    fn three_node_nonuniform_flux_against_hand_evaluation() {
        // Nodes 0, 0.4, 1.0; tabulated curve with slopes 0.5 then 2.0 in s.
        let grid = Grid1D::from_nodes(vec![0.0, 0.4, 1.0]).unwrap();
        let curve = WettingCurve::tabulated(vec![(0.0, 0.0), (0.4, 0.2), (1.0, 1.4)]).unwrap();
        let law = PermeabilityLaw::exp_decay(1.0, 1.0, 0.5).unwrap();
        let s = vec![0.1, 0.5, 0.9];
        let cp = vec![0.0, 0.2, 0.6];
        let q = water_flux(&s, &cp, &curve, &law, &grid).unwrap();
        // Cell 0: k(0.1) = 0.5 + 0.5 e^{-0.1}; f(0.5) = 0.4, f(0.1) = 0.05.
        let k0 = 0.5 + 0.5 * (-0.1f64).exp();
        let q0 = -k0 * (0.4 - 0.05) / 0.4;
        // Cell 1: k(0.4) = 0.5 + 0.5 e^{-0.4}; f(0.9) = 1.2.
        let k1 = 0.5 + 0.5 * (-0.4f64).exp();
        let q1 = -k1 * (1.2 - 0.4) / 0.6;
        assert!((q.per_cell[0] - q0).abs() < 1e-15);
        assert!((q.per_cell[1] - q1).abs() < 1e-15);
    }

    #[test]
    fn flux_size_mismatch_is_an_error() {
        let grid = Grid1D::graded(4, 1.0, 1.0).unwrap();
        let law = PermeabilityLaw::constant(1.0).unwrap();
        let err = water_flux(&[0.0; 3], &[0.0; 5], &identity_curve(), &law, &grid);
        assert!(matches!(err, Err(TransportError::SizeMismatch { .. })));
    }

    #[test]
    fn interior_node_of_constant_flux_sees_the_full_mass() {
        let grid = Grid1D::graded(20, 1.0, 1.0).unwrap();
        let kernel = Mollifier::new(0.05, KernelProfile::Triangular).unwrap();
        let weights = kernel.discretize(&grid);
        let q = WaterFlux {
            per_cell: vec![0.7; 20],
        };
        let v = mollified_velocity(&q, &weights, 1.0).unwrap();
        // Node 10 sits at 0.5 with the kernel support fully inside the domain.
        assert!((v[10] - 0.7).abs() < 1e-14);
    }

    #[test]
    fn boundary_node_sees_half_the_mass() {
        let grid = Grid1D::graded(20, 1.0, 1.0).unwrap();
        for profile in [KernelProfile::Triangular, KernelProfile::Bump] {
            let kernel = Mollifier::new(0.08, profile).unwrap();
            let weights = kernel.discretize(&grid);
            let q = WaterFlux {
                per_cell: vec![1.0; 20],
            };
            let v = mollified_velocity(&q, &weights, 1.0).unwrap();
            assert!(
                (v[0] - 0.5).abs() < 1e-10,
                "profile {profile:?}: v[0] = {}",
                v[0]
            );
        }
    }

    #[test]
    fn zero_flux_gives_zero_velocity() {
        let grid = Grid1D::graded(8, 1.0, 1.1).unwrap();
        let kernel = Mollifier::new(0.05, KernelProfile::Triangular).unwrap();
        let weights = kernel.discretize(&grid);
        let q = WaterFlux {
            per_cell: vec![0.0; 8],
        };
        let v = mollified_velocity(&q, &weights, 2.0).unwrap();
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn interior_row_masses_sum_to_one() {
        let grid = Grid1D::graded(32, 1.0, 1.05).unwrap();
        for profile in [KernelProfile::Triangular, KernelProfile::Bump] {
            let kernel = Mollifier::new(0.04, profile).unwrap();
            let weights = kernel.discretize(&grid);
            // Any node at least a radius away from both ends.
            for i in 0..grid.num_nodes() {
                let x = grid.nodes()[i];
                if (0.04..=1.0 - 0.04).contains(&x) {
                    assert!(
                        (weights.row_mass(i) - 1.0).abs() < 1e-12,
                        "profile {profile:?} node {i}: mass {}",
                        weights.row_mass(i)
                    );
                }
            }
        }
    }

    #[test]
    fn velocity_clamp_examples() {
        assert_eq!(truncated_velocity(&[0.3], 1.0), vec![0.3]);
        assert_eq!(truncated_velocity(&[-4.0], 1.0), vec![-1.0]);
        assert_eq!(
            truncated_velocity(&[2.0, -0.5, 0.0], 1.5),
            vec![1.5, -0.5, 0.0]
        );
    }

    proptest! {
        #[test]
        fn clamped_velocity_never_exceeds_the_cap(
            vals in prop::collection::vec(-50.0f64..50.0, 1..40),
            cap in 0.1f64..20.0,
        ) {
            let out = truncated_velocity(&vals, cap);
            prop_assert!(out.iter().all(|v| v.abs() <= cap));
            // Sign is preserved.
            prop_assert!(out.iter().zip(&vals).all(|(o, i)| o.signum() == i.signum() || *i == 0.0));
        }

        #[test]
        fn mollified_velocity_is_linear_in_the_flux(
            q1 in prop::collection::vec(-5.0f64..5.0, 12),
            q2 in prop::collection::vec(-5.0f64..5.0, 12),
            a in -3.0f64..3.0,
        ) {
            let grid = Grid1D::graded(12, 1.0, 1.1).unwrap();
            let kernel = Mollifier::new(0.07, KernelProfile::Triangular).unwrap();
            let weights = kernel.discretize(&grid);
            let f1 = WaterFlux { per_cell: q1.clone() };
            let f2 = WaterFlux { per_cell: q2.clone() };
            let combo = WaterFlux {
                per_cell: q1.iter().zip(&q2).map(|(x, y)| a * x + y).collect(),
            };
            let v1 = mollified_velocity(&f1, &weights, 1.3).unwrap();
            let v2 = mollified_velocity(&f2, &weights, 1.3).unwrap();
            let vc = mollified_velocity(&combo, &weights, 1.3).unwrap();
            for i in 0..vc.len() {
                prop_assert!((vc[i] - (a * v1[i] + v2[i])).abs() < 1e-10);
            }
        }

        #[test]
        fn velocity_respects_the_derived_bound(
            svals in prop::collection::vec(0.0f64..1.0, 17),
            radius in 0.02f64..0.3,
        ) {
            let grid = Grid1D::graded(16, 1.0, 1.08).unwrap();
            let curve = WettingCurve::tabulated(vec![(0.0, 0.0), (0.5, 0.3), (1.0, 1.1)]).unwrap();
            let law = PermeabilityLaw::exp_decay(0.8, 1.0, 0.2).unwrap();
            let kernel = Mollifier::new(radius, KernelProfile::Triangular).unwrap();
            let weights = kernel.discretize(&grid);
            let cp = vec![0.1; 17];
            let q = water_flux(&svals, &cp, &curve, &law, &grid).unwrap();
            let v = mollified_velocity(&q, &weights, 1.0).unwrap();
            let grad = grid.h1_seminorm(&svals);
            let c = law.k_max() * curve.slope_max() * kernel.sup_value() * grid.length().sqrt();
            let bound = c * (1.0 + grad) * (1.0 + 1e-9);
            prop_assert!(v.iter().all(|x| x.abs() <= bound));
            // The clamp is a contraction of the raw velocity.
            let vr = truncated_velocity(&v, 2.0);
            prop_assert!(vr.iter().zip(&v).all(|(r, raw)| r.abs() <= raw.abs() + 1e-300));
        }
    }
}
