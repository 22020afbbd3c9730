//! Graded 1D grid on [0, L] with trapezoidal mass lumping.
//!
//! The cell widths follow a geometric progression so the mesh can be refined
//! near the active boundary x = 0 where the solution has steep gradients.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("grid needs at least one cell")]
    Empty,
    #[error("invalid grid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    nodes: Vec<f64>,
    widths: Vec<f64>,
    masses: Vec<f64>,
}

impl Grid1D {
    /// Builds a grid whose cell widths form a geometric progression with the
    /// given common ratio (ratio = 1 gives a uniform grid; ratio > 1 puts the
    /// smallest cell at x = 0). The last node is pinned to L so that the
    /// widths telescope to L exactly.
    pub fn graded(n_cells: usize, length: f64, ratio: f64) -> Result<Self, MeshError> {
        if n_cells == 0 {
            return Err(MeshError::Empty);
        }
        if !length.is_finite() || length <= 0.0 {
            return Err(MeshError::InvalidParameter(format!(
                "length must be positive, got {length}"
            )));
        }
        if !ratio.is_finite() || ratio <= 0.0 {
            return Err(MeshError::InvalidParameter(format!(
                "ratio must be positive, got {ratio}"
            )));
        }
        let n = n_cells as f64;
        let first_width = if (ratio - 1.0).abs() < 1e-12 {
            length / n
        } else {
            length * (ratio - 1.0) / (ratio.powf(n) - 1.0)
        };
        let mut nodes = Vec::with_capacity(n_cells + 1);
        nodes.push(0.0);
        let mut w = first_width;
        for _ in 0..n_cells - 1 {
            let prev = *nodes.last().unwrap();
            nodes.push(prev + w);
            w *= ratio;
        }
        nodes.push(length);
        Self::from_nodes(nodes)
    }

    /// Builds a grid from explicit node positions, which must start at 0 and
    /// be strictly increasing.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self, MeshError> {
        if nodes.len() < 2 {
            return Err(MeshError::Empty);
        }
        if nodes[0] != 0.0 {
            return Err(MeshError::InvalidParameter(format!(
                "first node must be 0, got {}",
                nodes[0]
            )));
        }
        let mut widths = Vec::with_capacity(nodes.len() - 1);
        for pair in nodes.windows(2) {
            let w = pair[1] - pair[0];
            if !w.is_finite() || w <= 0.0 {
                return Err(MeshError::InvalidParameter(format!(
                    "nodes must be strictly increasing, got {} then {}",
                    pair[0], pair[1]
                )));
            }
            widths.push(w);
        }
        let masses = lumped(&widths);
        Ok(Self {
            nodes,
            widths,
            masses,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_cells(&self) -> usize {
        self.widths.len()
    }

    pub fn length(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    /// Trapezoidal lumped masses: half of each adjacent cell per node. They
    /// make the constant-test-function mass ledgers exact.
    pub fn lumped_masses(&self) -> &[f64] {
        &self.masses
    }

    /// Discrete H1 seminorm sqrt(sum over cells of (du/dx)^2 * width).
    pub fn h1_seminorm(&self, field: &[f64]) -> f64 {
        debug_assert_eq!(field.len(), self.num_nodes());
        let mut acc = 0.0;
        for (c, w) in self.widths.iter().enumerate() {
            let g = (field[c + 1] - field[c]) / w;
            acc += g * g * w;
        }
        acc.sqrt()
    }
}

fn lumped(widths: &[f64]) -> Vec<f64> {
    let n = widths.len();
    let mut m = vec![0.0; n + 1];
    m[0] = widths[0] / 2.0;
    for i in 1..n {
        m[i] = (widths[i - 1] + widths[i]) / 2.0;
    }
    m[n] = widths[n - 1] / 2.0;
    m
}
