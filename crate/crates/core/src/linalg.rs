//! Small dense linear algebra for symmetric positive-definite systems.
//!
//! Newton steps and covariance estimates only ever need SPD solves of size
//! p×p with p in the hundreds, so a plain Cholesky is enough.

use ndarray::{Array1, Array2};

/// Lower-triangular Cholesky factor of an SPD matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    lower: Array2<f64>,
}

/// Reasons a factorization was refused.
#[derive(Debug, Clone, PartialEq)]
pub enum FactorError {
    NotSquare,
    /// The pivot for `index` fell below the relative tolerance.
    Singular { index: usize },
}

/// Relative pivot tolerance: a pivot must keep at least this fraction of its
/// original diagonal entry, otherwise the column is numerically dependent on
/// the preceding ones.
pub const PIVOT_TOLERANCE: f64 = 1e-10;

impl Cholesky {
    pub fn factor(matrix: &Array2<f64>) -> Result<Self, FactorError> {
        let n = matrix.nrows();
        if matrix.ncols() != n {
            return Err(FactorError::NotSquare);
        }
        let mut lower = Array2::<f64>::zeros((n, n));
        for j in 0..n {
            let diag = matrix[[j, j]];
            let mut pivot = diag;
            for k in 0..j {
                pivot -= lower[[j, k]] * lower[[j, k]];
            }
            if !pivot.is_finite() || diag <= 0.0 || pivot <= PIVOT_TOLERANCE * diag {
                return Err(FactorError::Singular { index: j });
            }
            let root = pivot.sqrt();
            lower[[j, j]] = root;
            for i in (j + 1)..n {
                let mut acc = matrix[[i, j]];
                for k in 0..j {
                    acc -= lower[[i, k]] * lower[[j, k]];
                }
                lower[[i, j]] = acc / root;
            }
        }
        Ok(Self { lower })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn solve(&self, rhs: &Array1<f64>) -> Array1<f64> {
        let n = self.dim();
        let mut y = Array1::<f64>::zeros(n);
        for i in 0..n {
            let mut acc = rhs[i];
            for k in 0..i {
                acc -= self.lower[[i, k]] * y[k];
            }
            y[i] = acc / self.lower[[i, i]];
        }
        let mut x = Array1::<f64>::zeros(n);
        for i in (0..n).rev() {
            let mut acc = y[i];
            for k in (i + 1)..n {
                acc -= self.lower[[k, i]] * x[k];
            }
            x[i] = acc / self.lower[[i, i]];
        }
        x
    }

    pub fn inverse(&self) -> Array2<f64> {
        let n = self.dim();
        let mut inv = Array2::<f64>::zeros((n, n));
        let mut unit = Array1::<f64>::zeros(n);
        for j in 0..n {
            unit.fill(0.0);
            unit[j] = 1.0;
            let col = self.solve(&unit);
            inv.column_mut(j).assign(&col);
        }
        // symmetrize away rounding asymmetry
        for i in 0..n {
            for j in (i + 1)..n {
                let m = 0.5 * (inv[[i, j]] + inv[[j, i]]);
                inv[[i, j]] = m;
                inv[[j, i]] = m;
            }
        }
        inv
    }
}

/// Lower Cholesky factor of a correlation matrix, used by the synthetic
/// generator to draw correlated covariates.
pub fn cholesky_lower(matrix: &Array2<f64>) -> Result<Array2<f64>, FactorError> {
    Cholesky::factor(matrix).map(|c| c.lower)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn solves_spd_system() {
        let a = array![[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        let b = array![1.0, 2.0, 3.0];
        let chol = Cholesky::factor(&a).unwrap();
        let x = chol.solve(&b);
        let back = a.dot(&x);
        for i in 0..3 {
            assert!((back[i] - b[i]).abs() < 1e-12);
        }
        let inv = chol.inverse();
        let eye = a.dot(&inv);
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((eye[[i, j]] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_dependent_columns() {
        let a = array![[1.0, 1.0], [1.0, 1.0]];
        assert_eq!(
            Cholesky::factor(&a).unwrap_err(),
            FactorError::Singular { index: 1 }
        );
        let z = array![[0.0, 0.0], [0.0, 1.0]];
        assert_eq!(
            Cholesky::factor(&z).unwrap_err(),
            FactorError::Singular { index: 0 }
        );
    }
}
