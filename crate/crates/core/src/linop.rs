//! Linear maps between matrix spaces, with adjoints and operator-norm
//! estimation by power iteration.
//!
//! All inner products are Frobenius. Matrix-variable maps act columnwise:
//! `DenseLeftMultiply` sends `X in R^{n x p}` to `M X in R^{m x p}`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::manifold::gaussian_matrix;

pub const DEFAULT_OP_NORM_TOL: f64 = 1e-8;
pub const DEFAULT_OP_NORM_MAX_ITER: usize = 1000;

#[derive(Clone, Debug, PartialEq)]
pub enum LinearMapKind {
    Identity,
    /// `X -> M X` for a dense `m x n` matrix `M`.
    DenseLeftMultiply { matrix: DMatrix<f64> },
    /// A dense matrix acting on the column-major vectorization of the input.
    GeneralDense { matrix: DMatrix<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearMap {
    kind: LinearMapKind,
    input_shape: (usize, usize),
    output_shape: (usize, usize),
}

/// Largest-singular-value estimate from power iteration on `A* A`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OperatorNormEstimate {
    pub value: f64,
    pub iterations: usize,
    /// False when the iteration hit `max_iter` before the relative change
    /// dropped below tolerance; `value` is then the best estimate so far.
    pub converged: bool,
}

impl LinearMap {
    pub fn identity(shape: (usize, usize)) -> Self {
        LinearMap {
            kind: LinearMapKind::Identity,
            input_shape: shape,
            output_shape: shape,
        }
    }

    /// Builds `X -> M X` acting on `n x cols` inputs, where `M` is `m x n`.
    pub fn dense_left_multiply(matrix: DMatrix<f64>, cols: usize) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 || cols == 0 {
            return Err(Error::param("dense_left_multiply requires nonempty shapes"));
        }
        let input_shape = (matrix.ncols(), cols);
        let output_shape = (matrix.nrows(), cols);
        Ok(LinearMap {
            kind: LinearMapKind::DenseLeftMultiply { matrix },
            input_shape,
            output_shape,
        })
    }

    /// Builds a map from a dense matrix acting on vectorized inputs; the
    /// matrix must be `(out_rows * out_cols) x (in_rows * in_cols)`.
    pub fn general_dense(
        matrix: DMatrix<f64>,
        input_shape: (usize, usize),
        output_shape: (usize, usize),
    ) -> Result<Self> {
        let want = (output_shape.0 * output_shape.1, input_shape.0 * input_shape.1);
        if (matrix.nrows(), matrix.ncols()) != want {
            return Err(Error::dims(format!(
                "general_dense matrix is {:?}, expected {:?}",
                (matrix.nrows(), matrix.ncols()),
                want
            )));
        }
        Ok(LinearMap {
            kind: LinearMapKind::GeneralDense { matrix },
            input_shape,
            output_shape,
        })
    }

    pub fn kind(&self) -> &LinearMapKind {
        &self.kind
    }

    pub fn input_shape(&self) -> (usize, usize) {
        self.input_shape
    }

    pub fn output_shape(&self) -> (usize, usize) {
        self.output_shape
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.kind, LinearMapKind::Identity)
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.shape() != self.input_shape {
            return Err(Error::dims(format!(
                "apply: input shape {:?}, expected {:?}",
                x.shape(),
                self.input_shape
            )));
        }
        Ok(match &self.kind {
            LinearMapKind::Identity => x.clone(),
            LinearMapKind::DenseLeftMultiply { matrix } => matrix * x,
            LinearMapKind::GeneralDense { matrix } => {
                let v = DVector::from_column_slice(x.as_slice());
                let w = matrix * v;
                DMatrix::from_column_slice(self.output_shape.0, self.output_shape.1, w.as_slice())
            }
        })
    }

    pub fn adjoint_apply(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if y.shape() != self.output_shape {
            return Err(Error::dims(format!(
                "adjoint_apply: input shape {:?}, expected {:?}",
                y.shape(),
                self.output_shape
            )));
        }
        Ok(match &self.kind {
            LinearMapKind::Identity => y.clone(),
            LinearMapKind::DenseLeftMultiply { matrix } => matrix.tr_mul(y),
            LinearMapKind::GeneralDense { matrix } => {
                let v = DVector::from_column_slice(y.as_slice());
                let w = matrix.tr_mul(&v);
                DMatrix::from_column_slice(self.input_shape.0, self.input_shape.1, w.as_slice())
            }
        })
    }

    /// Estimates the operator norm by power iteration on `A* A` from a
    /// fixed-seed random start.
    pub fn operator_norm(&self, tol: f64, max_iter: usize) -> Result<OperatorNormEstimate> {
        if !(tol > 0.0) {
            return Err(Error::param("operator_norm tolerance must be > 0"));
        }
        if max_iter == 0 {
            return Err(Error::param("operator_norm max_iter must be >= 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0xA11CE);
        let (r, c) = self.input_shape;
        let mut v = gaussian_matrix(&mut rng, r, c);
        let n = v.norm();
        if n == 0.0 {
            return Ok(OperatorNormEstimate {
                value: 0.0,
                iterations: 0,
                converged: true,
            });
        }
        v /= n;
        let mut sigma = 0.0_f64;
        for it in 1..=max_iter {
            let av = self.apply(&v)?;
            let new_sigma = av.norm();
            if new_sigma == 0.0 {
                return Ok(OperatorNormEstimate {
                    value: 0.0,
                    iterations: it,
                    converged: true,
                });
            }
            let z = self.adjoint_apply(&av)?;
            v = &z / z.norm();
            if it > 1 && (new_sigma - sigma).abs() <= tol * new_sigma {
                return Ok(OperatorNormEstimate {
                    value: new_sigma,
                    iterations: it,
                    converged: true,
                });
            }
            sigma = new_sigma;
        }
        Ok(OperatorNormEstimate {
            value: sigma,
            iterations: max_iter,
            converged: false,
        })
    }

    pub fn operator_norm_default(&self) -> OperatorNormEstimate {
        self.operator_norm(DEFAULT_OP_NORM_TOL, DEFAULT_OP_NORM_MAX_ITER)
            .expect("default tolerances are valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn random_maps(rng: &mut impl Rng) -> Vec<LinearMap> {
        vec![
            LinearMap::identity((4, 2)),
            LinearMap::dense_left_multiply(gaussian_matrix(rng, 6, 4), 2).unwrap(),
            LinearMap::general_dense(gaussian_matrix(rng, 6, 8), (4, 2), (3, 2)).unwrap(),
        ]
    }

    #[test]
    fn apply_examples() {
        let id = LinearMap::identity((2, 1));
        let x = DMatrix::from_column_slice(2, 1, &[3.0, -1.0]);
        assert_eq!(id.apply(&x).unwrap(), x);

        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        let a = LinearMap::dense_left_multiply(m, 1).unwrap();
        let x = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        let y = a.apply(&x).unwrap();
        assert_eq!(y.as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn apply_rejects_shape_mismatch() {
        let id = LinearMap::identity((2, 1));
        let bad = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        assert!(matches!(id.apply(&bad), Err(Error::DimensionMismatch(_))));
        assert!(matches!(
            id.adjoint_apply(&bad),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn apply_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for map in random_maps(&mut rng) {
            let (r, c) = map.input_shape();
            for _ in 0..20 {
                let x = gaussian_matrix(&mut rng, r, c);
                let z = gaussian_matrix(&mut rng, r, c);
                let (a, b): (f64, f64) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
                let lhs = map.apply(&(x.scale(a) + z.scale(b))).unwrap();
                let rhs = map.apply(&x).unwrap().scale(a) + map.apply(&z).unwrap().scale(b);
                assert!((lhs - &rhs).norm() <= 1e-12 * rhs.norm().max(1.0));
            }
        }
    }

    #[test]
    fn adjoint_identity_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for map in random_maps(&mut rng) {
            let (ri, ci) = map.input_shape();
            let (ro, co) = map.output_shape();
            for _ in 0..100 {
                let x = gaussian_matrix(&mut rng, ri, ci);
                let y = gaussian_matrix(&mut rng, ro, co);
                let lhs = map.apply(&x).unwrap().dot(&y);
                let rhs = x.dot(&map.adjoint_apply(&y).unwrap());
                let scale = lhs.abs().max(rhs.abs()).max(1.0);
                assert!((lhs - rhs).abs() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn dense_left_multiply_adjoint_is_transpose_multiply() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = gaussian_matrix(&mut rng, 5, 3);
        let map = LinearMap::dense_left_multiply(m.clone(), 2).unwrap();
        let y = gaussian_matrix(&mut rng, 5, 2);
        let adj = map.adjoint_apply(&y).unwrap();
        assert_relative_eq!(adj, m.transpose() * y, epsilon = 1e-14);
    }

    #[test]
    fn operator_norm_examples() {
        let id = LinearMap::identity((3, 2));
        let est = id.operator_norm_default();
        assert!(est.converged);
        assert_relative_eq!(est.value, 1.0, epsilon = 1e-12);

        let diag = LinearMap::dense_left_multiply(
            DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0]),
            1,
        )
        .unwrap();
        let est = diag.operator_norm_default();
        assert!(est.converged);
        assert_relative_eq!(est.value, 3.0, max_relative = 1e-8);
    }

    #[test]
    fn operator_norm_matches_svd() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = gaussian_matrix(&mut rng, 10, 6);
        let top = m.clone().svd(false, false).singular_values[0];

        let left = LinearMap::dense_left_multiply(m.clone(), 3).unwrap();
        let est = left.operator_norm_default();
        assert_relative_eq!(est.value, top, max_relative = 1e-6);

        let vectorized = LinearMap::general_dense(m, (6, 1), (10, 1)).unwrap();
        let est = vectorized.operator_norm_default();
        assert_relative_eq!(est.value, top, max_relative = 1e-6);
    }

    #[test]
    fn operator_norm_dominates_probes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for map in random_maps(&mut rng) {
            let est = map.operator_norm(1e-10, 5000).unwrap();
            let (r, c) = map.input_shape();
            for _ in 0..50 {
                let x = gaussian_matrix(&mut rng, r, c);
                let ratio = map.apply(&x).unwrap().norm() / x.norm();
                assert!(
                    est.value >= ratio - 1e-8 * est.value.max(1.0),
                    "estimate {} vs probe ratio {}",
                    est.value,
                    ratio
                );
            }
        }
    }

    #[test]
    fn operator_norm_validates_parameters() {
        let id = LinearMap::identity((2, 2));
        assert!(id.operator_norm(0.0, 10).is_err());
        assert!(id.operator_norm(1e-8, 0).is_err());
    }

    #[test]
    fn zero_map_norm_is_zero() {
        let z = LinearMap::dense_left_multiply(DMatrix::zeros(3, 3), 1).unwrap();
        let est = z.operator_norm_default();
        assert!(est.converged);
        assert_eq!(est.value, 0.0);
    }
}
