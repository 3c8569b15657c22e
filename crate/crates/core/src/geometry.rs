//! Compact convex decision sets with closed-form projections.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Absolute tolerance used for membership tests throughout the crate.
pub const CONTAINMENT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SetShape {
    /// `[-half_width, half_width]^dim`
    Box { half_width: f64 },
    /// `radius * B^dim`
    Ball { radius: f64 },
}

/// A symmetric box or Euclidean ball, possibly shrunk towards the origin.
///
/// The shrink factor is kept separately from the base extent so repeated
/// shrinking composes exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvexSet {
    shape: SetShape,
    dim: usize,
    scale: f64,
}

impl ConvexSet {
    pub fn cube(half_width: f64, dim: usize) -> Result<Self> {
        Self::new(SetShape::Box { half_width }, dim)
    }

    pub fn ball(radius: f64, dim: usize) -> Result<Self> {
        Self::new(SetShape::Ball { radius }, dim)
    }

    pub fn new(shape: SetShape, dim: usize) -> Result<Self> {
        let extent = match shape {
            SetShape::Box { half_width } => half_width,
            SetShape::Ball { radius } => radius,
        };
        if !(extent.is_finite() && extent > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "set extent must be positive and finite, got {extent}"
            )));
        }
        if dim == 0 {
            return Err(Error::InvalidParameter(
                "set dimension must be positive".into(),
            ));
        }
        Ok(Self {
            shape,
            dim,
            scale: 1.0,
        })
    }

    pub fn shape(&self) -> SetShape {
        self.shape
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Accumulated shrink factor in `(0, 1]`.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    fn extent(&self) -> f64 {
        match self.shape {
            SetShape::Box { half_width } => self.scale * half_width,
            SetShape::Ball { radius } => self.scale * radius,
        }
    }

    /// Radius `r` of the largest origin-centred ball inside the set.
    pub fn inner_radius(&self) -> f64 {
        self.extent()
    }

    /// Radius `R` of the smallest origin-centred ball containing the set.
    pub fn outer_radius(&self) -> f64 {
        match self.shape {
            SetShape::Box { .. } => self.extent() * (self.dim as f64).sqrt(),
            SetShape::Ball { .. } => self.extent(),
        }
    }

    /// Euclidean projection: per-coordinate clamp for boxes, radial rescale
    /// for balls.
    pub fn project(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim, x.len())?;
        let e = self.extent();
        Ok(match self.shape {
            SetShape::Box { .. } => x.map(|v| v.clamp(-e, e)),
            SetShape::Ball { .. } => {
                let norm = x.norm();
                if norm <= e {
                    x.clone()
                } else {
                    x * (e / norm)
                }
            }
        })
    }

    /// In-place [`project`](Self::project) on a slice of length `dim`.
    pub fn project_slice(&self, x: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        let e = self.extent();
        match self.shape {
            SetShape::Box { .. } => x.iter_mut().for_each(|v| *v = v.clamp(-e, e)),
            SetShape::Ball { .. } => {
                let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > e {
                    x.iter_mut().for_each(|v| *v *= e / norm);
                }
            }
        }
    }

    /// Returns `(1 - xi)` times this set.
    pub fn shrink(&self, xi: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&xi) {
            return Err(Error::InvalidParameter(format!(
                "shrink coefficient must lie in [0, 1), got {xi}"
            )));
        }
        Ok(Self {
            scale: self.scale * (1.0 - xi),
            ..*self
        })
    }

    /// Amount by which `x` sticks out of the set (0 when inside).
    pub fn excess(&self, x: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        let e = self.extent();
        Ok(match self.shape {
            SetShape::Box { .. } => x.amax() - e,
            SetShape::Ball { .. } => x.norm() - e,
        }
        .max(0.0))
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        matches!(self.excess(x), Ok(e) if e <= tol)
    }
}

/// Componentwise `max(x, 0)`.
pub fn clip_nonnegative(x: &DVector<f64>) -> DVector<f64> {
    x.map(|v| v.max(0.0))
}
