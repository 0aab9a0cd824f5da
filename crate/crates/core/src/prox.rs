//! Convex regularizers with proximal operators and subdifferential
//! distances.
//!
//! The proximal operator of `h` with parameter `mu > 0` is
//! `prox_{mu h}(z) = argmin_u h(u) + ||u - z||^2 / (2 mu)`; for a weighted
//! l1 norm this is entrywise soft-thresholding.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegularizerKind {
    /// `h(z) = weight * sum_ij |z_ij|`.
    ScaledL1 { weight: f64 },
    /// `h = 0`.
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Regularizer {
    kind: RegularizerKind,
    shape: (usize, usize),
}

impl Regularizer {
    pub fn scaled_l1(weight: f64, shape: (usize, usize)) -> Result<Self> {
        if !(weight >= 0.0) {
            return Err(Error::param("l1 weight must be nonnegative"));
        }
        Ok(Regularizer {
            kind: RegularizerKind::ScaledL1 { weight },
            shape,
        })
    }

    pub fn zero(shape: (usize, usize)) -> Self {
        Regularizer {
            kind: RegularizerKind::Zero,
            shape,
        }
    }

    pub fn kind(&self) -> RegularizerKind {
        self.kind
    }

    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }

    fn check_shape(&self, z: &DMatrix<f64>, what: &str) -> Result<()> {
        if z.shape() != self.shape {
            return Err(Error::dims(format!(
                "{what}: argument shape {:?}, expected {:?}",
                z.shape(),
                self.shape
            )));
        }
        Ok(())
    }

    pub fn eval(&self, z: &DMatrix<f64>) -> Result<f64> {
        self.check_shape(z, "eval")?;
        Ok(match self.kind {
            RegularizerKind::ScaledL1 { weight } => weight * z.iter().map(|v| v.abs()).sum::<f64>(),
            RegularizerKind::Zero => 0.0,
        })
    }

    /// `prox_{mu h}(z)`; requires `mu > 0`.
    pub fn prox(&self, mu: f64, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if !(mu > 0.0) {
            return Err(Error::param("prox parameter mu must be > 0"));
        }
        self.check_shape(z, "prox")?;
        Ok(match self.kind {
            RegularizerKind::ScaledL1 { weight } => {
                let t = mu * weight;
                z.map(|v| v.signum() * (v.abs() - t).max(0.0))
            }
            RegularizerKind::Zero => z.clone(),
        })
    }

    /// `||z - prox_{mu h}(z)||`; bounded by `mu * lipschitz_constant()`.
    pub fn moreau_gap(&self, mu: f64, z: &DMatrix<f64>) -> Result<f64> {
        let p = self.prox(mu, z)?;
        Ok((z - p).norm())
    }

    /// Euclidean distance from `v` to the subdifferential of `h` at `y`.
    ///
    /// For the weighted l1 norm the subdifferential is entrywise
    /// `{w sign(y_i)}` when `y_i != 0` and the interval `[-w, w]` at zero.
    pub fn subdiff_distance(&self, y: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<f64> {
        self.check_shape(y, "subdiff_distance")?;
        self.check_shape(v, "subdiff_distance")?;
        Ok(match self.kind {
            RegularizerKind::ScaledL1 { weight } => {
                let mut sq = 0.0;
                for (yi, vi) in y.iter().zip(v.iter()) {
                    let d = if *yi > 0.0 {
                        vi - weight
                    } else if *yi < 0.0 {
                        vi + weight
                    } else {
                        (vi.abs() - weight).max(0.0)
                    };
                    sq += d * d;
                }
                sq.sqrt()
            }
            RegularizerKind::Zero => v.norm(),
        })
    }

    /// A subgradient of `h` at `y` under the `sign(0) = 0` selection.
    pub fn subgradient(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_shape(y, "subgradient")?;
        Ok(match self.kind {
            RegularizerKind::ScaledL1 { weight } => y.map(|v| {
                if v > 0.0 {
                    weight
                } else if v < 0.0 {
                    -weight
                } else {
                    0.0
                }
            }),
            RegularizerKind::Zero => DMatrix::zeros(self.shape.0, self.shape.1),
        })
    }

    /// Lipschitz constant in the Frobenius norm: `w sqrt(d)` for the weighted
    /// l1 norm on `d` entries, `0` for the zero regularizer.
    pub fn lipschitz_constant(&self) -> f64 {
        match self.kind {
            RegularizerKind::ScaledL1 { weight } => {
                weight * ((self.shape.0 * self.shape.1) as f64).sqrt()
            }
            RegularizerKind::Zero => 0.0,
        }
    }
}
