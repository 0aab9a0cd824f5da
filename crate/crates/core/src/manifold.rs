//! Compact embedded submanifolds: the unit sphere `S^{m-1}` and the Stiefel
//! manifold `St(n,p)` of matrices with orthonormal columns.
//!
//! Points and tangent vectors are dense column-major `f64` matrices (sphere
//! points are `m x 1`). All operations are pure functions of their inputs and
//! safe to call concurrently.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Feasibility tolerance guaranteed by point construction (random sampling,
/// retraction, or validated wrapping of raw data).
pub const FEASIBILITY_TOL: f64 = 1e-10;

/// Retraction used on the Stiefel manifold. The sphere always retracts by
/// metric normalization.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StiefelRetraction {
    /// Q factor of the thin QR decomposition, with the sign of each column
    /// fixed so that the corresponding diagonal entry of R is positive.
    #[default]
    Qr,
    /// Polar factor `(x + u)(I + u^T u)^{-1/2}`.
    Polar,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Manifold {
    /// Unit sphere `{x in R^m : ||x||_2 = 1}`, points stored as `m x 1`.
    Sphere { dim: usize },
    /// Stiefel manifold `{X in R^{n x p} : X^T X = I_p}`.
    Stiefel {
        rows: usize,
        cols: usize,
        retraction: StiefelRetraction,
    },
}

/// Empirical retraction constants: `alpha` bounds `||R_x(u) - x|| / ||u||`,
/// `beta` bounds `||R_x(u) - x - u|| / ||u||^2` over the sampled pairs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RetractionConstants {
    pub alpha: f64,
    pub beta: f64,
}

impl Manifold {
    pub fn sphere(dim: usize) -> Result<Self> {
        if dim < 1 {
            return Err(Error::param("sphere requires dimension >= 1"));
        }
        Ok(Manifold::Sphere { dim })
    }

    pub fn stiefel(rows: usize, cols: usize) -> Result<Self> {
        Self::stiefel_with_retraction(rows, cols, StiefelRetraction::default())
    }

    pub fn stiefel_with_retraction(
        rows: usize,
        cols: usize,
        retraction: StiefelRetraction,
    ) -> Result<Self> {
        if cols < 1 || cols > rows {
            return Err(Error::param(format!(
                "Stiefel requires 1 <= p <= n, got n={rows}, p={cols}"
            )));
        }
        Ok(Manifold::Stiefel {
            rows,
            cols,
            retraction,
        })
    }

    /// Shape of the ambient matrix representation of a point.
    pub fn ambient_shape(&self) -> (usize, usize) {
        match *self {
            Manifold::Sphere { dim } => (dim, 1),
            Manifold::Stiefel { rows, cols, .. } => (rows, cols),
        }
    }

    /// Wraps raw data as a point, validating feasibility up to
    /// [`FEASIBILITY_TOL`].
    pub fn point_from(&self, data: DMatrix<f64>) -> Result<ManifoldPoint> {
        let shape = self.ambient_shape();
        if (data.nrows(), data.ncols()) != shape {
            return Err(Error::dims(format!(
                "point shape {:?} does not match manifold shape {:?}",
                (data.nrows(), data.ncols()),
                shape
            )));
        }
        let point = ManifoldPoint {
            data,
            manifold: *self,
        };
        let res = point.feasibility_residual();
        if res > FEASIBILITY_TOL {
            return Err(Error::Infeasible(format!(
                "feasibility residual {res:.3e} exceeds {FEASIBILITY_TOL:.0e}"
            )));
        }
        Ok(point)
    }

    /// Draws a feasible point: a standard Gaussian matrix, orthonormalized by
    /// QR (Stiefel) or normalized (sphere). Deterministic in the seed.
    pub fn random_point(&self, seed: u64) -> ManifoldPoint {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.random_point_with_rng(&mut rng)
    }

    pub fn random_point_with_rng(&self, rng: &mut impl Rng) -> ManifoldPoint {
        let (r, c) = self.ambient_shape();
        let data = loop {
            let g = gaussian_matrix(rng, r, c);
            match *self {
                Manifold::Sphere { .. } => {
                    let n = g.norm();
                    if n > 0.0 {
                        break g / n;
                    }
                }
                Manifold::Stiefel { .. } => break qr_orthonormal(&g),
            }
        };
        ManifoldPoint {
            data,
            manifold: *self,
        }
    }

    /// Samples retraction ratios over random points and tangent directions
    /// with magnitudes log-spaced in `(0, radius]`, and returns the largest
    /// first-order ratio `alpha` and second-order ratio `beta` observed.
    pub fn estimate_retraction_constants(
        &self,
        n_samples: usize,
        radius: f64,
        seed: u64,
    ) -> Result<RetractionConstants> {
        if n_samples < 1 {
            return Err(Error::param("n_samples must be >= 1"));
        }
        if !(radius > 0.0) {
            return Err(Error::param("radius must be > 0"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut alpha = 0.0_f64;
        let mut beta = 0.0_f64;
        for _ in 0..n_samples {
            let x = self.random_point_with_rng(&mut rng);
            let dir = x.random_tangent(&mut rng);
            let dn = dir.norm();
            if dn == 0.0 {
                continue; // degenerate direction, ratio undefined
            }
            // Log-spaced magnitudes, floored at radius*1e-5: below that the
            // measured second-order remainder drowns in rounding noise.
            let exponent: f64 = rng.random_range(-5.0..=0.0);
            let t = radius * 10f64.powf(exponent);
            let u = dir.scale(t / dn);
            let retracted = x.retract(&u);
            let moved = retracted.data() - x.data();
            alpha = alpha.max(moved.norm() / t);
            beta = beta.max((moved - u.data()).norm() / (t * t));
        }
        Ok(RetractionConstants { alpha, beta })
    }
}

/// A feasible point on a manifold.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifoldPoint {
    data: DMatrix<f64>,
    manifold: Manifold,
}

impl ManifoldPoint {
    /// Wraps data without a feasibility check; crate tests use this to
    /// exercise infeasible-input handling.
    #[cfg(test)]
    pub(crate) fn new_unchecked(data: DMatrix<f64>, manifold: Manifold) -> ManifoldPoint {
        ManifoldPoint { data, manifold }
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn manifold(&self) -> Manifold {
        self.manifold
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.data
    }

    /// Distance to the constraint set: `||x^T x - I||_F` on Stiefel,
    /// `| ||x|| - 1 |` on the sphere.
    pub fn feasibility_residual(&self) -> f64 {
        match self.manifold {
            Manifold::Sphere { .. } => (self.data.norm() - 1.0).abs(),
            Manifold::Stiefel { cols, .. } => {
                let gram = self.data.tr_mul(&self.data);
                (gram - DMatrix::identity(cols, cols)).norm()
            }
        }
    }

    /// Orthogonal projection of an ambient matrix onto the tangent space:
    /// `v - (x^T v) x` on the sphere, `v - x sym(x^T v)` on Stiefel.
    pub fn project_tangent(&self, v: &DMatrix<f64>) -> Result<TangentVector> {
        if v.shape() != self.data.shape() {
            return Err(Error::dims(format!(
                "ambient vector shape {:?} does not match point shape {:?}",
                v.shape(),
                self.data.shape()
            )));
        }
        let data = match self.manifold {
            Manifold::Sphere { .. } => {
                let radial = self.data.dot(v);
                v - self.data.scale(radial)
            }
            Manifold::Stiefel { .. } => {
                let xtv = self.data.tr_mul(v);
                let sym = (&xtv + xtv.transpose()).scale(0.5);
                v - &self.data * sym
            }
        };
        Ok(TangentVector {
            data,
            base: self.clone(),
        })
    }

    /// Riemannian gradient of a function with Euclidean gradient
    /// `euclid_grad`: the tangent projection of `euclid_grad`.
    pub fn riemannian_gradient(&self, euclid_grad: &DMatrix<f64>) -> Result<TangentVector> {
        self.project_tangent(euclid_grad)
    }

    /// Moves along a tangent vector and returns a feasible point.
    pub fn retract(&self, u: &TangentVector) -> ManifoldPoint {
        debug_assert_eq!(u.base.data.shape(), self.data.shape());
        let moved = &self.data + &u.data;
        let data = match self.manifold {
            Manifold::Sphere { .. } => {
                let n = moved.norm();
                moved / n
            }
            Manifold::Stiefel {
                retraction: StiefelRetraction::Qr,
                ..
            } => qr_orthonormal(&moved),
            Manifold::Stiefel {
                retraction: StiefelRetraction::Polar,
                cols,
                ..
            } => {
                // (x+u)^T (x+u) = I + u^T u for tangent u.
                let gram = DMatrix::identity(cols, cols) + u.data.tr_mul(&u.data);
                moved * inv_sqrt_spd(&gram)
            }
        };
        ManifoldPoint {
            data,
            manifold: self.manifold,
        }
    }

    /// Gaussian ambient matrix projected onto the tangent space.
    pub fn random_tangent(&self, rng: &mut impl Rng) -> TangentVector {
        let (r, c) = self.data.shape();
        let g = gaussian_matrix(rng, r, c);
        self.project_tangent(&g).expect("shape matches by construction")
    }
}

/// A tangent vector attached to its base point.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector {
    data: DMatrix<f64>,
    base: ManifoldPoint,
}

impl TangentVector {
    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn base(&self) -> &ManifoldPoint {
        &self.base
    }

    pub fn norm(&self) -> f64 {
        self.data.norm()
    }

    /// Scales the vector; tangent spaces are closed under scaling.
    pub fn scale(&self, factor: f64) -> TangentVector {
        TangentVector {
            data: self.data.scale(factor),
            base: self.base.clone(),
        }
    }
}

pub(crate) fn gaussian_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_iterator(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)),
    )
}

/// Thin QR orthonormalization with the sign of each column fixed so the
/// corresponding diagonal entry of R is nonnegative. Deterministic.
pub(crate) fn qr_orthonormal(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (mut q, r) = m.clone().qr().unpack();
    for j in 0..q.ncols() {
        if r[(j, j)] < 0.0 {
            for i in 0..q.nrows() {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

/// Inverse square root of a symmetric positive-definite matrix.
fn inv_sqrt_spd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let mut scaled = eig.eigenvectors.clone();
    for j in 0..scaled.ncols() {
        let s = 1.0 / eig.eigenvalues[j].sqrt();
        for i in 0..scaled.nrows() {
            scaled[(i, j)] *= s;
        }
    }
    scaled * eig.eigenvectors.transpose()
}
