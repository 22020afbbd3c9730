//! Thomas elimination for tridiagonal systems.

/// Tridiagonal matrix: `sub[i]` couples row i+1 to column i, `sup[i]` couples
/// row i to column i+1.
#[derive(Debug, Clone)]
pub(crate) struct Tridiagonal {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
}

impl Tridiagonal {
    pub fn zeros(n: usize) -> Self {
        Self {
            sub: vec![0.0; n.saturating_sub(1)],
            diag: vec![0.0; n],
            sup: vec![0.0; n.saturating_sub(1)],
        }
    }

    pub fn reset(&mut self) {
        self.sub.iter_mut().for_each(|v| *v = 0.0);
        self.diag.iter_mut().for_each(|v| *v = 0.0);
        self.sup.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Direct elimination without pivoting. The step matrices assembled here
    /// are diagonally dominant M-matrices, for which the pivots stay positive.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, String> {
        let n = self.diag.len();
        assert_eq!(rhs.len(), n);
        if n == 0 {
            return Err("empty system".into());
        }
        let mut c = vec![0.0; n.saturating_sub(1)];
        let mut d = vec![0.0; n];
        let mut denom = self.diag[0];
        if !denom.is_finite() || denom == 0.0 {
            return Err("zero or invalid pivot at row 0".into());
        }
        if n > 1 {
            c[0] = self.sup[0] / denom;
        }
        d[0] = rhs[0] / denom;
        for i in 1..n {
            denom = self.diag[i] - self.sub[i - 1] * c.get(i - 1).copied().unwrap_or(0.0);
            if !denom.is_finite() || denom == 0.0 {
                return Err(format!("zero or invalid pivot at row {i}"));
            }
            if i < n - 1 {
                c[i] = self.sup[i] / denom;
            }
            d[i] = (rhs[i] - self.sub[i - 1] * d[i - 1]) / denom;
        }
        let mut x = vec![0.0; n];
        x[n - 1] = d[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = d[i] - c[i] * x[i + 1];
        }
        Ok(x)
    }

    /// Matrix-vector product, used for residual checks.
    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let n = self.diag.len();
        assert_eq!(x.len(), n);
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.sub[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.sup[i] * x[i + 1];
            }
            y[i] = acc;
        }
        y
    }
}
