//! Diagonal positive-definite gain matrices.
//!
//! Every gain in both control architectures is diagonal, so gains are stored
//! as their diagonal only. Matrix inequalities between diagonal matrices
//! reduce to entrywise scalar comparisons, which keeps certification exact.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

/// A diagonal matrix stored as its diagonal entries. Serializes as a plain
/// array of diagonal values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<f64>", into = "Vec<f64>")]
pub struct Diag(pub DVector<f64>);

impl From<Vec<f64>> for Diag {
    fn from(v: Vec<f64>) -> Self {
        Diag(DVector::from_vec(v))
    }
}

impl From<Diag> for Vec<f64> {
    fn from(d: Diag) -> Self {
        d.0.as_slice().to_vec()
    }
}

impl Diag {
    /// Uniform diagonal `value * I` of dimension `dim`.
    pub fn uniform(dim: usize, value: f64) -> Self {
        Diag(DVector::from_element(dim, value))
    }

    pub fn from_slice(entries: &[f64]) -> Self {
        Diag(DVector::from_column_slice(entries))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Fails unless every diagonal entry is strictly positive.
    pub fn require_positive(&self, name: &str) -> Result<()> {
        if self.0.iter().all(|&v| v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::input(format!(
                "{name} must be diagonal positive definite, got {:?}",
                self.0.as_slice()
            )))
        }
    }

    /// Matrix-vector product `D * v`.
    pub fn mul_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        self.0.component_mul(v)
    }

    pub fn min_entry(&self) -> f64 {
        self.0.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_entry(&self) -> f64 {
        self.0.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Entrywise `self + rhs`.
    pub fn add(&self, rhs: &Diag) -> Diag {
        Diag(&self.0 + &rhs.0)
    }

    /// Entrywise `self - rhs`.
    pub fn sub(&self, rhs: &Diag) -> Diag {
        Diag(&self.0 - &rhs.0)
    }

    /// Entrywise product (composition of diagonal matrices).
    pub fn mul(&self, rhs: &Diag) -> Diag {
        Diag(self.0.component_mul(&rhs.0))
    }

    pub fn scale(&self, s: f64) -> Diag {
        Diag(&self.0 * s)
    }

    /// `self - s * I`.
    pub fn shift(&self, s: f64) -> Diag {
        Diag(self.0.map(|v| v - s))
    }

    /// `self + s * I`.
    pub fn add_scalar(&self, s: f64) -> Diag {
        Diag(self.0.map(|v| v + s))
    }

    /// Entrywise reciprocal; entries must be nonzero.
    pub fn inverse(&self) -> Diag {
        Diag(self.0.map(|v| 1.0 / v))
    }

    /// Entrywise maximum of two diagonals.
    pub fn entrywise_max(&self, rhs: &Diag) -> Diag {
        Diag(self.0.zip_map(&rhs.0, f64::max))
    }

    /// Dense `n x n` realization.
    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.0)
    }
}

impl std::fmt::Display for Diag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let entries: Vec<String> = self.0.iter().map(|v| format!("{v}")).collect();
        write!(f, "diag({})", entries.join(", "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entrywise_algebra() {
        let a = Diag::from_slice(&[1.0, 2.0]);
        let b = Diag::from_slice(&[3.0, 5.0]);
        assert_eq!(a.add(&b).0.as_slice(), &[4.0, 7.0]);
        assert_eq!(a.mul(&b).0.as_slice(), &[3.0, 10.0]);
        assert_eq!(b.sub(&a).min_entry(), 2.0);
        assert_eq!(a.entrywise_max(&b).0.as_slice(), &[3.0, 5.0]);
    }

    #[test]
    fn positivity_check() {
        assert!(Diag::from_slice(&[1.0, 0.5]).require_positive("K").is_ok());
        assert!(Diag::from_slice(&[1.0, 0.0]).require_positive("K").is_err());
        assert!(Diag::from_slice(&[1.0, -2.0])
            .require_positive("K")
            .is_err());
    }

    #[test]
    fn dense_roundtrip() {
        let d = Diag::from_slice(&[2.0, 7.0]);
        let m = d.to_dense();
        assert_eq!(m[(0, 0)], 2.0);
        assert_eq!(m[(1, 1)], 7.0);
        assert_eq!(m[(0, 1)], 0.0);
    }
}
