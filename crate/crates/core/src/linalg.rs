//! 2×2 symmetric matrices, enough for Fisher information in `(lambda, mu)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetric 2×2 matrix stored as its upper triangle.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FisherMatrix {
    pub i11: f64,
    pub i12: f64,
    pub i22: f64,
}

impl FisherMatrix {
    pub const ZERO: Self = Self {
        i11: 0.0,
        i12: 0.0,
        i22: 0.0,
    };

    pub fn new(i11: f64, i12: f64, i22: f64) -> Self {
        Self { i11, i12, i22 }
    }

    /// Adds `w · v vᵀ`.
    #[inline]
    pub fn add_outer(&mut self, v: [f64; 2], w: f64) {
        self.i11 += w * v[0] * v[0];
        self.i12 += w * v[0] * v[1];
        self.i22 += w * v[1] * v[1];
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::new(self.i11 * s, self.i12 * s, self.i22 * s)
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::new(self.i11 + other.i11, self.i12 + other.i12, self.i22 + other.i22)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self::new(self.i11 - other.i11, self.i12 - other.i12, self.i22 - other.i22)
    }

    pub fn trace(&self) -> f64 {
        self.i11 + self.i22
    }

    pub fn det(&self) -> f64 {
        self.i11 * self.i22 - self.i12 * self.i12
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let half_tr = 0.5 * self.trace();
        let half_diff = 0.5 * (self.i11 - self.i22);
        let r = half_diff.hypot(self.i12);
        [half_tr - r, half_tr + r]
    }

    pub fn is_psd(&self, tol: f64) -> bool {
        self.eigenvalues()[0] >= -tol * self.trace().abs().max(1.0)
    }

    pub fn mul_vec(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.i11 * v[0] + self.i12 * v[1],
            self.i12 * v[0] + self.i22 * v[1],
        ]
    }

    /// `vᵀ A v`.
    pub fn quad_form(&self, v: [f64; 2]) -> f64 {
        let av = self.mul_vec(v);
        v[0] * av[0] + v[1] * av[1]
    }

    /// Solves `A x = b`; fails when `det <= rel_tol · trace²`.
    pub fn solve(&self, b: [f64; 2], rel_tol: f64) -> Option<[f64; 2]> {
        let det = self.det();
        let tr = self.trace();
        if !(det > rel_tol * tr * tr) || !det.is_finite() {
            return None;
        }
        Some([
            (self.i22 * b[0] - self.i12 * b[1]) / det,
            (self.i11 * b[1] - self.i12 * b[0]) / det,
        ])
    }

    /// Symmetric square root `A^{1/2}` of a positive definite matrix.
    pub fn sqrt(&self) -> Result<Self> {
        self.spectral_map(f64::sqrt)
    }

    /// `A^{-1/2}`.
    pub fn inv_sqrt(&self) -> Result<Self> {
        self.spectral_map(|l| 1.0 / l.sqrt())
    }

    fn spectral_map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let [l1, l2] = self.eigenvalues();
        if !(l1 > 0.0) || !l2.is_finite() {
            return Err(Error::NotPositiveDefinite);
        }
        // Unit eigenvector for l2; the other one is its rotation.
        let (c, s) = if self.i12 == 0.0 {
            if self.i11 >= self.i22 {
                (1.0, 0.0)
            } else {
                (0.0, 1.0)
            }
        } else {
            let (x, y) = (l2 - self.i22, self.i12);
            let n = x.hypot(y);
            (x / n, y / n)
        };
        let (f1, f2) = (f(l1), f(l2));
        Ok(Self::new(
            f2 * c * c + f1 * s * s,
            (f2 - f1) * c * s,
            f2 * s * s + f1 * c * c,
        ))
    }
}
