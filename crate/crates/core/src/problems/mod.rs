//! Synthetic problem instances: sparse PCA on the Stiefel manifold, an
//! l1-regularized classifier on the sphere, and dual principal component
//! pursuit (DPCP) for robust subspace recovery.
//!
//! Instance builders are pure functions of their dimensions and seed;
//! instances are immutable after construction and shareable across threads.

pub mod io;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linop::LinearMap;
use crate::manifold::{gaussian_matrix, Manifold, ManifoldPoint};
use crate::prox::Regularizer;

/// Smooth term `f` of the objective, with closed-form Euclidean gradient.
#[derive(Clone, Debug, PartialEq)]
pub enum SmoothTerm {
    /// `f(X) = -||D X||_F^2 / 2` for a data matrix `D`.
    NegHalfQuadratic { data: DMatrix<f64> },
    /// `f(x) = sum_i (1 - sigmoid(b_i a_i^T x))^2` for features `a_i` (rows)
    /// and labels `b_i` in `{-1, 1}`.
    LogisticSquare {
        features: DMatrix<f64>,
        labels: DVector<f64>,
    },
    /// `f(x) = <coeffs, x>`.
    Linear { coeffs: DMatrix<f64> },
    /// `f = 0`.
    Zero,
}

impl SmoothTerm {
    pub fn eval(&self, x: &DMatrix<f64>) -> f64 {
        match self {
            SmoothTerm::NegHalfQuadratic { data } => {
                let dx = data * x;
                -0.5 * dx.norm_squared()
            }
            SmoothTerm::LogisticSquare { features, labels } => {
                let u = features * x;
                let mut total = 0.0;
                for i in 0..labels.len() {
                    let s = sigmoid(labels[i] * u[(i, 0)]);
                    total += (1.0 - s) * (1.0 - s);
                }
                total
            }
            SmoothTerm::Linear { coeffs } => coeffs.dot(x),
            SmoothTerm::Zero => 0.0,
        }
    }

    pub fn euclid_grad(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            SmoothTerm::NegHalfQuadratic { data } => {
                let dx = data * x;
                -data.tr_mul(&dx)
            }
            SmoothTerm::LogisticSquare { features, labels } => {
                let u = features * x;
                let mut coeff = DVector::zeros(labels.len());
                for i in 0..labels.len() {
                    let s = sigmoid(labels[i] * u[(i, 0)]);
                    coeff[i] = -2.0 * s * (1.0 - s) * (1.0 - s) * labels[i];
                }
                features.tr_mul(&DMatrix::from_column_slice(
                    coeff.len(),
                    1,
                    coeff.as_slice(),
                ))
            }
            SmoothTerm::Linear { coeffs } => coeffs.clone(),
            SmoothTerm::Zero => DMatrix::zeros(x.nrows(), x.ncols()),
        }
    }
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Generation recipe of an instance, kept for provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemFamily {
    Spca {
        n: usize,
        m: usize,
        p: usize,
        mu: f64,
    },
    Classifier {
        dim: usize,
        samples: usize,
        sigma2: f64,
        mu: f64,
    },
    Dpcp {
        n: usize,
        p: usize,
        inliers: usize,
        outliers: usize,
        normalize_columns: bool,
    },
    Custom,
}

#[derive(Clone, Debug, PartialEq)]
pub enum GroundTruth {
    /// Orthonormal basis of the inlier subspace (DPCP).
    InlierBasis(DMatrix<f64>),
    /// Generating classifier direction on the sphere.
    Classifier(DMatrix<f64>),
}

/// A composite problem `min f(x) + h(A x)` over a manifold.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemInstance {
    pub name: String,
    pub family: ProblemFamily,
    pub data_seed: u64,
    pub manifold: Manifold,
    pub smooth: SmoothTerm,
    pub regularizer: Regularizer,
    pub linear_map: LinearMap,
    pub ground_truth: Option<GroundTruth>,
}

impl ProblemInstance {
    /// Full objective `f(x) + h(A x)`; the value reported in traces and used
    /// by stop rules.
    pub fn objective(&self, x: &ManifoldPoint) -> Result<f64> {
        let ax = self.linear_map.apply(x.data())?;
        Ok(self.smooth.eval(x.data()) + self.regularizer.eval(&ax)?)
    }

    /// Consistency of the declared shapes; instance builders guarantee this,
    /// hand-assembled instances should call it once.
    pub fn validate(&self) -> Result<()> {
        if self.manifold.ambient_shape() != self.linear_map.input_shape() {
            return Err(Error::Misconfigured(format!(
                "manifold shape {:?} vs linear map input {:?}",
                self.manifold.ambient_shape(),
                self.linear_map.input_shape()
            )));
        }
        if self.regularizer.shape() != self.linear_map.output_shape() {
            return Err(Error::Misconfigured(format!(
                "regularizer shape {:?} vs linear map output {:?}",
                self.regularizer.shape(),
                self.linear_map.output_shape()
            )));
        }
        Ok(())
    }
}

/// Sparse PCA: `min -Tr(X^T D^T D X)/2 + mu ||X||_1` over `St(n,p)`, with a
/// dense `m x n` standard Gaussian data matrix `D`.
pub fn spca_instance(n: usize, m: usize, p: usize, mu: f64, seed: u64) -> Result<ProblemInstance> {
    if p >= m.min(n) || p == 0 {
        return Err(Error::param(format!(
            "spca requires 1 <= p < min(m, n), got n={n}, m={m}, p={p}"
        )));
    }
    if !(mu >= 0.0) {
        return Err(Error::param("spca requires mu >= 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = gaussian_matrix(&mut rng, m, n);
    Ok(ProblemInstance {
        name: format!("spca_n{n}_m{m}_p{p}_mu{mu}_seed{seed}"),
        family: ProblemFamily::Spca { n, m, p, mu },
        data_seed: seed,
        manifold: Manifold::stiefel(n, p)?,
        smooth: SmoothTerm::NegHalfQuadratic { data },
        regularizer: Regularizer::scaled_l1(mu, (n, p))?,
        linear_map: LinearMap::identity((n, p)),
        ground_truth: None,
    })
}

/// l1-regularized classifier on the sphere: squared-sigmoid loss over
/// labeled pairs with Gaussian features. The generating direction is sampled
/// from `N(0, I)` and normalized; labels are `sign(x^T a_i + eps_i)` with
/// `eps_i ~ N(0, sigma2)` and ties assigned to `-1`.
pub fn classifier_instance(
    dim: usize,
    samples: usize,
    sigma2: f64,
    mu: f64,
    seed: u64,
) -> Result<ProblemInstance> {
    if dim < 1 || samples < 1 {
        return Err(Error::param("classifier requires dim >= 1 and samples >= 1"));
    }
    if !(sigma2 >= 0.0) || !(mu >= 0.0) {
        return Err(Error::param("classifier requires sigma2 >= 0 and mu >= 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = gaussian_matrix(&mut rng, dim, 1);
    let x_true = &raw / raw.norm();
    let features = gaussian_matrix(&mut rng, samples, dim);
    let noise_std = sigma2.sqrt();
    let mut labels = DVector::zeros(samples);
    let margins = &features * &x_true;
    for i in 0..samples {
        let eps: f64 = rng.sample::<f64, _>(StandardNormal) * noise_std;
        labels[i] = if margins[(i, 0)] + eps > 0.0 { 1.0 } else { -1.0 };
    }
    Ok(ProblemInstance {
        name: format!("classifier_m{dim}_N{samples}_s{sigma2}_mu{mu}_seed{seed}"),
        family: ProblemFamily::Classifier {
            dim,
            samples,
            sigma2,
            mu,
        },
        data_seed: seed,
        manifold: Manifold::sphere(dim)?,
        smooth: SmoothTerm::LogisticSquare { features, labels },
        regularizer: Regularizer::scaled_l1(mu, (dim, 1))?,
        linear_map: LinearMap::identity((dim, 1)),
        ground_truth: Some(GroundTruth::Classifier(x_true)),
    })
}

/// DPCP: `min ||Y^T X||_1` over `St(n,p)`, where `Y` stacks `p1` inliers
/// spanning a `(n-p)`-dimensional subspace and `p2` Gaussian outliers, with
/// unit-normalized and randomly permuted columns.
pub fn dpcp_instance(n: usize, p: usize, p1: usize, p2: usize, seed: u64) -> Result<ProblemInstance> {
    dpcp_instance_with_options(n, p, p1, p2, true, seed)
}

/// DPCP builder with explicit control over column normalization.
pub fn dpcp_instance_with_options(
    n: usize,
    p: usize,
    p1: usize,
    p2: usize,
    normalize_columns: bool,
    seed: u64,
) -> Result<ProblemInstance> {
    if p == 0 || p >= n {
        return Err(Error::param(format!(
            "dpcp requires 1 <= p < n, got n={n}, p={p}"
        )));
    }
    if p1 < 1 {
        return Err(Error::param("dpcp requires at least one inlier"));
    }
    let d = n - p;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let basis = Manifold::stiefel(n, d)?
        .random_point_with_rng(&mut rng)
        .into_inner();
    let coeffs = gaussian_matrix(&mut rng, d, p1);
    let inliers = &basis * coeffs;
    let outliers = gaussian_matrix(&mut rng, n, p2);

    let total = p1 + p2;
    let mut y = DMatrix::zeros(n, total);
    y.view_mut((0, 0), (n, p1)).copy_from(&inliers);
    if p2 > 0 {
        y.view_mut((0, p1), (n, p2)).copy_from(&outliers);
    }
    if normalize_columns {
        for j in 0..total {
            let norm = y.column(j).norm();
            if norm > 0.0 {
                let scaled = y.column(j) / norm;
                y.set_column(j, &scaled);
            }
        }
    }
    // Unknown permutation of the columns; the shuffle stands in for it.
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut rng);
    let mut permuted = DMatrix::zeros(n, total);
    for (dst, &src) in order.iter().enumerate() {
        permuted.set_column(dst, &y.column(src));
    }

    Ok(ProblemInstance {
        name: format!("dpcp_n{n}_p{p}_p1{p1}_p2{p2}_seed{seed}"),
        family: ProblemFamily::Dpcp {
            n,
            p,
            inliers: p1,
            outliers: p2,
            normalize_columns,
        },
        data_seed: seed,
        manifold: Manifold::stiefel(n, p)?,
        smooth: SmoothTerm::Zero,
        regularizer: Regularizer::scaled_l1(1.0, (total, p))?,
        linear_map: LinearMap::dense_left_multiply(permuted.transpose(), p)?,
        ground_truth: Some(GroundTruth::InlierBasis(basis)),
    })
}

/// Relative error of the analytic directional derivative against a central
/// finite difference of `f` along `dir` at `x`.
pub fn gradient_fd_error(smooth: &SmoothTerm, x: &DMatrix<f64>, dir: &DMatrix<f64>, eps: f64) -> f64 {
    let plus = smooth.eval(&(x + dir.scale(eps)));
    let minus = smooth.eval(&(x - dir.scale(eps)));
    let fd = (plus - minus) / (2.0 * eps);
    let analytic = smooth.euclid_grad(x).dot(dir);
    (fd - analytic).abs() / analytic.abs().max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fd_check(instance: &ProblemInstance, points: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (r, c) = instance.manifold.ambient_shape();
        let mut worst = 0.0_f64;
        for _ in 0..points {
            let x = instance.manifold.random_point_with_rng(&mut rng);
            let dir = gaussian_matrix(&mut rng, r, c);
            let dir = &dir / dir.norm();
            worst = worst.max(gradient_fd_error(&instance.smooth, x.data(), &dir, 1e-6));
        }
        worst
    }

    #[test]
    fn spca_gradient_passes_fd_check() {
        let inst = spca_instance(12, 9, 3, 0.05, 0).unwrap();
        assert!(fd_check(&inst, 20, 1) <= 1e-5);
    }

    #[test]
    fn classifier_gradient_passes_fd_check() {
        let inst = classifier_instance(10, 40, 1.0, 0.2, 0).unwrap();
        assert!(fd_check(&inst, 20, 2) <= 1e-5);
    }

    #[test]
    fn dpcp_gradient_passes_fd_check() {
        let inst = dpcp_instance(8, 2, 10, 15, 0).unwrap();
        assert!(fd_check(&inst, 20, 3) <= 1e-5);
    }

    #[test]
    fn spca_objective_is_nonpositive_for_mu_zero() {
        let inst = spca_instance(10, 8, 2, 0.0, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let x = inst.manifold.random_point_with_rng(&mut rng);
            assert!(inst.objective(&x).unwrap() <= 0.0);
            assert_relative_eq!(
                inst.objective(&x).unwrap(),
                inst.smooth.eval(x.data()),
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn classifier_loss_term_limits() {
        // Saturated margin: the loss term vanishes; zero margin: 1/4.
        let features = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let labels = DVector::from_column_slice(&[1.0]);
        let f = SmoothTerm::LogisticSquare { features, labels };
        let saturated = DMatrix::from_column_slice(2, 1, &[60.0, 0.0]);
        assert!(f.eval(&saturated) < 1e-20);
        let orthogonal = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        assert_relative_eq!(f.eval(&orthogonal), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn classifier_label_rule_assigns_ties_to_negative() {
        // sigma2 = 0 removes noise; the rule is sign(x^T a) with ties -> -1.
        let inst = classifier_instance(6, 50, 0.0, 0.1, 9).unwrap();
        let (x_true, (features, labels)) = match (&inst.ground_truth, &inst.smooth) {
            (Some(GroundTruth::Classifier(x)), SmoothTerm::LogisticSquare { features, labels }) => {
                (x.clone(), (features.clone(), labels.clone()))
            }
            _ => unreachable!(),
        };
        let margins = &features * &x_true;
        for i in 0..labels.len() {
            let expect = if margins[(i, 0)] > 0.0 { 1.0 } else { -1.0 };
            assert_eq!(labels[i], expect);
        }
    }

    #[test]
    fn dpcp_orthogonal_directions_have_zero_objective() {
        // With no outliers, any X spanning the orthocomplement of the inlier
        // basis zeroes the objective.
        let inst = dpcp_instance(8, 3, 12, 0, 7).unwrap();
        let basis = match &inst.ground_truth {
            Some(GroundTruth::InlierBasis(b)) => b.clone(),
            _ => unreachable!(),
        };
        // Complete the basis to an orthonormal frame and take the last p
        // columns, which are orthogonal to the inlier subspace.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut frame = DMatrix::zeros(8, 8);
        frame.view_mut((0, 0), (8, 5)).copy_from(&basis);
        frame
            .view_mut((0, 5), (8, 3))
            .copy_from(&gaussian_matrix(&mut rng, 8, 3));
        let q = crate::manifold::qr_orthonormal(&frame);
        let x_data = q.view((0, 5), (8, 3)).into_owned();
        let x = inst.manifold.point_from(x_data).unwrap();
        assert!(inst.objective(&x).unwrap() <= 1e-10);
    }

    #[test]
    fn dpcp_inlier_block_has_expected_rank() {
        let inst = dpcp_instance(10, 3, 20, 30, 13).unwrap();
        let basis = match &inst.ground_truth {
            Some(GroundTruth::InlierBasis(b)) => b,
            _ => unreachable!(),
        };
        let yt = match inst.linear_map.kind() {
            crate::linop::LinearMapKind::DenseLeftMultiply { matrix } => matrix.clone(),
            _ => unreachable!(),
        };
        let y = yt.transpose();
        // Identify inlier columns as those lying in span(basis), then check
        // that they span exactly d = n - p dimensions.
        let mut inlier_cols = Vec::new();
        for j in 0..y.ncols() {
            let col = y.column(j).into_owned();
            let residual = &col - basis * basis.tr_mul(&col);
            if residual.norm() <= 1e-10 {
                inlier_cols.push(col);
            }
        }
        assert_eq!(inlier_cols.len(), 20);
        let mut block = DMatrix::zeros(10, inlier_cols.len());
        for (j, col) in inlier_cols.iter().enumerate() {
            block.set_column(j, col);
        }
        let svals = block.svd(false, false).singular_values;
        let rank = svals.iter().filter(|s| **s > 1e-10).count();
        assert_eq!(rank, 7);
    }

    #[test]
    fn dpcp_objective_equals_l1_of_projections() {
        let inst = dpcp_instance(9, 2, 15, 10, 3).unwrap();
        let x = inst.manifold.random_point(21);
        let ax = inst.linear_map.apply(x.data()).unwrap();
        let direct: f64 = ax.iter().map(|v| v.abs()).sum();
        assert_relative_eq!(inst.objective(&x).unwrap(), direct, epsilon = 1e-12);
    }

    #[test]
    fn dpcp_operator_norm_matches_data_svd() {
        let inst = dpcp_instance(12, 3, 25, 40, 17).unwrap();
        let yt = match inst.linear_map.kind() {
            crate::linop::LinearMapKind::DenseLeftMultiply { matrix } => matrix.clone(),
            _ => unreachable!(),
        };
        let top = yt.svd(false, false).singular_values[0];
        let est = inst.linear_map.operator_norm_default();
        assert_relative_eq!(est.value, top, max_relative = 1e-6);
    }

    #[test]
    fn objective_matches_termwise_evaluation() {
        let inst = spca_instance(8, 6, 2, 0.3, 19).unwrap();
        let x = inst.manifold.random_point(23);
        // Independent evaluation with separately coded inner products.
        let data = match &inst.smooth {
            SmoothTerm::NegHalfQuadratic { data } => data,
            _ => unreachable!(),
        };
        let mut quad = 0.0;
        let dx = data * x.data();
        for v in dx.iter() {
            quad += v * v;
        }
        let mut l1 = 0.0;
        for v in x.data().iter() {
            l1 += v.abs();
        }
        let expected = -0.5 * quad + 0.3 * l1;
        assert_relative_eq!(inst.objective(&x).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn generation_is_deterministic_in_the_seed() {
        let a = spca_instance(10, 8, 2, 0.1, 99).unwrap();
        let b = spca_instance(10, 8, 2, 0.1, 99).unwrap();
        assert_eq!(a, b);
        let c = dpcp_instance(8, 2, 10, 12, 99).unwrap();
        let d = dpcp_instance(8, 2, 10, 12, 99).unwrap();
        assert_eq!(c, d);
        let e = classifier_instance(7, 30, 0.5, 0.2, 99).unwrap();
        let f = classifier_instance(7, 30, 0.5, 0.2, 99).unwrap();
        assert_eq!(e, f);
    }

    #[test]
    fn builders_reject_invalid_dims() {
        assert!(spca_instance(4, 4, 4, 0.1, 0).is_err());
        assert!(spca_instance(4, 4, 0, 0.1, 0).is_err());
        assert!(spca_instance(4, 4, 2, -1.0, 0).is_err());
        assert!(classifier_instance(0, 5, 1.0, 0.1, 0).is_err());
        assert!(classifier_instance(5, 0, 1.0, 0.1, 0).is_err());
        assert!(dpcp_instance(5, 5, 10, 10, 0).is_err());
        assert!(dpcp_instance(5, 0, 10, 10, 0).is_err());
        assert!(dpcp_instance(5, 2, 0, 10, 0).is_err());
    }
}
