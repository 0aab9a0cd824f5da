//! KKT residuals, certified multipliers, and solution-quality metrics.
//!
//! A triple `(x, y, lambda)` is an eps-KKT point of `min f(x) + h(Ax)` when
//! all three residuals computed here are at most eps:
//!
//! - stationarity: `||P_{T_x M}(grad f(x) - A* lambda)||`
//! - dual feasibility: `dist(-lambda, dh(y))`
//! - primal feasibility: `||A x - y||`

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::ManifoldPoint;
use crate::problems::ProblemInstance;

/// Feasibility gate for diagnostic inputs; residuals are only meaningful for
/// (numerically) feasible points.
pub const FEASIBILITY_GATE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub dual: f64,
    pub primal: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.dual).max(self.primal)
    }

    pub fn is_finite(&self) -> bool {
        self.stationarity.is_finite() && self.dual.is_finite() && self.primal.is_finite()
    }
}

/// The three KKT residuals of `(x, y, lambda)`.
///
/// Evaluates the Euclidean gradient of the smooth term once; use
/// [`kkt_residuals_precomputed`] when the gradient and `A x` are already at
/// hand.
pub fn kkt_residuals(
    problem: &ProblemInstance,
    x: &ManifoldPoint,
    y: &DMatrix<f64>,
    lambda: &DMatrix<f64>,
) -> Result<KktResiduals> {
    let grad = problem.smooth.euclid_grad(x.data());
    let ax = problem.linear_map.apply(x.data())?;
    kkt_residuals_precomputed(problem, x, &grad, &ax, y, lambda)
}

/// Same as [`kkt_residuals`], reusing a cached Euclidean gradient and `A x`.
///
/// The stationarity term projects the fused vector `grad f(x) - A* lambda`
/// once; by linearity of the projection this equals projecting the two parts
/// separately.
pub fn kkt_residuals_precomputed(
    problem: &ProblemInstance,
    x: &ManifoldPoint,
    euclid_grad: &DMatrix<f64>,
    ax: &DMatrix<f64>,
    y: &DMatrix<f64>,
    lambda: &DMatrix<f64>,
) -> Result<KktResiduals> {
    let feas = x.feasibility_residual();
    if feas > FEASIBILITY_GATE {
        return Err(Error::Infeasible(format!(
            "cannot evaluate KKT residuals at an infeasible point (residual {feas:.3e})"
        )));
    }
    if y.shape() != problem.linear_map.output_shape() || lambda.shape() != y.shape() {
        return Err(Error::dims(format!(
            "kkt_residuals: y {:?} / lambda {:?} vs map output {:?}",
            y.shape(),
            lambda.shape(),
            problem.linear_map.output_shape()
        )));
    }
    let astar = problem.linear_map.adjoint_apply(lambda)?;
    let stationarity = x.project_tangent(&(euclid_grad - astar))?.norm();
    let dual = problem.regularizer.subdiff_distance(y, &(-lambda))?;
    let primal = (ax - y).norm();
    Ok(KktResiduals {
        stationarity,
        dual,
        primal,
    })
}

/// Certified multiplier `lambda_prev - rho_prev (A x - y)`, the dual variable
/// for which the per-iteration residual bounds hold along an adaptive ADMM
/// trace.
pub fn bar_lambda(
    lambda_prev: &DMatrix<f64>,
    rho_prev: f64,
    ax_cur: &DMatrix<f64>,
    y_cur: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if !(rho_prev > 0.0) {
        return Err(Error::param("bar_lambda requires rho_prev > 0"));
    }
    if lambda_prev.shape() != ax_cur.shape() || ax_cur.shape() != y_cur.shape() {
        return Err(Error::dims(format!(
            "bar_lambda: lambda {:?}, Ax {:?}, y {:?}",
            lambda_prev.shape(),
            ax_cur.shape(),
            y_cur.shape()
        )));
    }
    Ok(lambda_prev - (ax_cur - y_cur).scale(rho_prev))
}

/// Percentage of entries with magnitude below `threshold`.
pub fn sparsity(x: &DMatrix<f64>, threshold: f64) -> f64 {
    let total = x.len();
    if total == 0 {
        return 0.0;
    }
    let small = x.iter().filter(|v| v.abs() < threshold).count();
    100.0 * small as f64 / total as f64
}

/// Default magnitude threshold for [`sparsity`].
pub const SPARSITY_THRESHOLD: f64 = 1e-4;

/// Spectral norm of `B^T X` for an orthonormal inlier basis `B`: the cosine
/// of the smallest principal angle between span(X) and the inlier subspace.
/// Zero means `X` is exactly orthogonal to the subspace.
pub fn subspace_alignment(x: &DMatrix<f64>, basis: &DMatrix<f64>) -> Result<f64> {
    if basis.nrows() != x.nrows() {
        return Err(Error::dims(format!(
            "subspace_alignment: basis has {} rows, x has {}",
            basis.nrows(),
            x.nrows()
        )));
    }
    let btx = basis.tr_mul(x);
    let svals = btx.svd(false, false).singular_values;
    Ok(svals.iter().cloned().fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linop::LinearMap;
    use crate::manifold::{gaussian_matrix, qr_orthonormal, Manifold};
    use crate::problems::{ProblemFamily, ProblemInstance, SmoothTerm};
    use crate::prox::Regularizer;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn linear_problem(coeffs: DMatrix<f64>, reg: Regularizer, dim: usize) -> ProblemInstance {
        ProblemInstance {
            name: "constructed".into(),
            family: ProblemFamily::Custom,
            data_seed: 0,
            manifold: Manifold::sphere(dim).unwrap(),
            smooth: SmoothTerm::Linear { coeffs },
            regularizer: reg,
            linear_map: LinearMap::identity((dim, 1)),
            ground_truth: None,
        }
    }

    #[test]
    fn exact_kkt_triple_has_tiny_residuals() {
        // Reverse-engineer an instance around a chosen solution: x* = e1 on
        // the sphere, y* = x*, -lambda a valid subgradient at y*, and the
        // smooth gradient lambda plus a radial component.
        let w = 0.4;
        let lambda = DMatrix::from_column_slice(3, 1, &[-w, 0.3 * w, -0.2 * w]);
        let radial = 1.7;
        let mut coeffs = lambda.clone();
        coeffs[(0, 0)] += radial;
        let problem = linear_problem(coeffs, Regularizer::scaled_l1(w, (3, 1)).unwrap(), 3);
        let x = problem
            .manifold
            .point_from(DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]))
            .unwrap();
        let y = x.data().clone();
        let res = kkt_residuals(&problem, &x, &y, &lambda).unwrap();
        assert!(res.stationarity <= 1e-10);
        assert!(res.dual <= 1e-10);
        assert!(res.primal <= 1e-10);
    }

    #[test]
    fn primal_residual_vanishes_when_y_equals_ax() {
        let problem = linear_problem(
            DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]),
            Regularizer::scaled_l1(0.5, (3, 1)).unwrap(),
            3,
        );
        let x = problem.manifold.random_point(3);
        let y = x.data().clone();
        let lambda = DMatrix::from_column_slice(3, 1, &[0.1, -0.2, 0.3]);
        let res = kkt_residuals(&problem, &x, &y, &lambda).unwrap();
        assert_eq!(res.primal, 0.0);
    }

    #[test]
    fn zero_regularizer_collapses_to_gradient_norm() {
        let coeffs = DMatrix::from_column_slice(3, 1, &[1.0, -2.0, 0.5]);
        let problem = linear_problem(coeffs.clone(), Regularizer::zero((3, 1)), 3);
        let x = problem.manifold.random_point(5);
        let y = x.data().clone();
        let lambda = DMatrix::zeros(3, 1);
        let res = kkt_residuals(&problem, &x, &y, &lambda).unwrap();
        let grad_norm = x.riemannian_gradient(&coeffs).unwrap().norm();
        assert_relative_eq!(res.stationarity, grad_norm, epsilon = 1e-14);
        assert_eq!(res.dual, 0.0);
    }

    #[test]
    fn infeasible_point_is_rejected() {
        let problem = linear_problem(
            DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
            Regularizer::zero((2, 1)),
            2,
        );
        let bad = ManifoldPoint::new_unchecked(
            DMatrix::from_column_slice(2, 1, &[2.0, 0.0]),
            Manifold::sphere(2).unwrap(),
        );
        let y = DMatrix::zeros(2, 1);
        assert!(matches!(
            kkt_residuals(&problem, &bad, &y, &y),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn bar_lambda_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let lambda = gaussian_matrix(&mut rng, 4, 2);
        let ax = gaussian_matrix(&mut rng, 4, 2);
        let rho = 3.7;

        // Feasible pair: unchanged.
        let same = bar_lambda(&lambda, rho, &ax, &ax).unwrap();
        assert_eq!(same, lambda);

        // Algebraic reconstruction: bar + rho (Ax - y) = lambda.
        let y = gaussian_matrix(&mut rng, 4, 2);
        let bar = bar_lambda(&lambda, rho, &ax, &y).unwrap();
        let back = &bar + (&ax - &y).scale(rho);
        assert_relative_eq!(back, lambda, epsilon = 1e-12);

        assert!(bar_lambda(&lambda, 0.0, &ax, &y).is_err());
    }

    #[test]
    fn sparsity_examples() {
        assert_eq!(sparsity(&DMatrix::zeros(3, 3), SPARSITY_THRESHOLD), 100.0);
        let ones = DMatrix::from_element(2, 4, 1.0);
        assert_eq!(sparsity(&ones, SPARSITY_THRESHOLD), 0.0);
        let half = DMatrix::from_column_slice(2, 2, &[0.0, 1.0, 0.0, 1.0]);
        assert_eq!(sparsity(&half, SPARSITY_THRESHOLD), 50.0);
    }

    #[test]
    fn subspace_alignment_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let frame = qr_orthonormal(&gaussian_matrix(&mut rng, 8, 8));
        let basis = frame.view((0, 0), (8, 5)).into_owned();
        let ortho = frame.view((0, 5), (8, 3)).into_owned();
        assert!(subspace_alignment(&ortho, &basis).unwrap() <= 1e-12);

        let inside = basis.view((0, 0), (8, 2)).into_owned();
        assert_relative_eq!(
            subspace_alignment(&inside, &basis).unwrap(),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn subspace_alignment_matches_symmetric_eigen_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let basis = qr_orthonormal(&gaussian_matrix(&mut rng, 10, 4));
        let x = qr_orthonormal(&gaussian_matrix(&mut rng, 10, 3));
        let via_svd = subspace_alignment(&x, &basis).unwrap();
        // Independent route: the top eigenvalue of X^T B B^T X.
        let btx = basis.tr_mul(&x);
        let gram = btx.tr_mul(&btx);
        let top = gram
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(0.0, f64::max);
        assert_relative_eq!(via_svd, top.sqrt(), epsilon = 1e-10);
    }

    #[test]
    fn residuals_scale_linearly_in_lambda_for_zero_f() {
        // With f = 0 and h = 0: stationarity = ||P(A* lambda)|| and dual =
        // ||lambda||, both homogeneous of degree one.
        let dim = 4;
        let problem = ProblemInstance {
            name: "scaling".into(),
            family: ProblemFamily::Custom,
            data_seed: 0,
            manifold: Manifold::sphere(dim).unwrap(),
            smooth: SmoothTerm::Zero,
            regularizer: Regularizer::zero((dim, 1)),
            linear_map: LinearMap::identity((dim, 1)),
            ground_truth: None,
        };
        let x = problem.manifold.random_point(13);
        let y = x.data().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let lambda = gaussian_matrix(&mut rng, dim, 1);
        let base = kkt_residuals(&problem, &x, &y, &lambda).unwrap();
        for &c in &[2.0, 10.0, 0.5] {
            let scaled = kkt_residuals(&problem, &x, &y, &lambda.scale(c)).unwrap();
            assert_relative_eq!(scaled.stationarity, c * base.stationarity, max_relative = 1e-12);
            assert_relative_eq!(scaled.dual, c * base.dual, max_relative = 1e-12);
        }
    }
}
