// Copyright 2026 The mosco Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Truncated representation of a real separable Hilbert space.
//!
//! Elements are coefficient vectors in a fixed orthonormal basis and
//! operators are dense symmetric matrices in the same basis. Every quantity
//! used by the estimators is basis-representable, so all routines are
//! parametric in the truncation level.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Default truncation level for experiments.
pub const DEFAULT_DIM: usize = 8;

/// Eigenvalues above this (negated) bound still count as nonnegative.
pub const PSD_TOL: f64 = 1e-10;

/// Relative smallest-eigenvalue threshold below which a solve is refused.
pub const SINGULAR_TOL: f64 = 1e-8;

/// Eigenvalues of a covariance below this are clipped to zero before
/// taking the square root.
pub const FACTOR_CLIP: f64 = 1e-12;

/// Coefficient vector of an element of the space in the truncated basis.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct HVec(DVector<f64>);

impl HVec {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::EmptyVector);
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("vector coefficients"));
        }
        Ok(HVec(DVector::from_vec(coeffs)))
    }

    /// The zero element. Panics if `dim == 0`.
    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        HVec(DVector::zeros(dim))
    }

    /// The `k`-th basis vector (zero-based). Panics if `k >= dim`.
    pub fn basis(dim: usize, k: usize) -> Self {
        assert!(k < dim, "basis index {k} out of range for dimension {dim}");
        let mut v = Self::zeros(dim);
        v.0[k] = 1.0;
        v
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize) -> f64) -> Self {
        assert!(dim > 0, "dimension must be positive");
        let mut f = f;
        HVec(DVector::from_fn(dim, |i, _| f(i)))
    }

    pub(crate) fn from_slice(v: &[f64]) -> Self {
        debug_assert!(!v.is_empty());
        HVec(DVector::from_column_slice(v))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.as_slice().to_vec()
    }

    pub(crate) fn as_dvector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn norm_squared(&self) -> f64 {
        self.0.norm_squared()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0.0)
    }

    /// Unchecked inner product; callers guarantee equal dimensions.
    pub(crate) fn dot(&self, other: &HVec) -> f64 {
        dot(self.as_slice(), other.as_slice())
    }

    pub fn scale(&self, c: f64) -> HVec {
        HVec(&self.0 * c)
    }

    pub fn distance(&self, other: &HVec) -> f64 {
        (&self.0 - &other.0).norm()
    }
}

impl fmt::Debug for HVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("HVec").field(&self.0.as_slice()).finish()
    }
}

impl TryFrom<Vec<f64>> for HVec {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        HVec::new(v)
    }
}

impl From<HVec> for Vec<f64> {
    fn from(v: HVec) -> Vec<f64> {
        v.to_vec()
    }
}

macro_rules! binop {
    ($tr:ident, $m:ident, $op:tt) => {
        impl $tr<&HVec> for &HVec {
            type Output = HVec;
            fn $m(self, rhs: &HVec) -> HVec {
                assert_eq!(self.dim(), rhs.dim(), "dimension mismatch");
                HVec(&self.0 $op &rhs.0)
            }
        }
        impl $tr<HVec> for HVec {
            type Output = HVec;
            fn $m(self, rhs: HVec) -> HVec {
                &self $op &rhs
            }
        }
    };
}
binop!(Add, add, +);
binop!(Sub, sub, -);

impl Mul<f64> for &HVec {
    type Output = HVec;
    fn mul(self, c: f64) -> HVec {
        self.scale(c)
    }
}

impl Neg for &HVec {
    type Output = HVec;
    fn neg(self) -> HVec {
        HVec(-&self.0)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `⟨u, v⟩ = Σ u_i v_i`.
pub fn inner(u: &HVec, v: &HVec) -> Result<f64> {
    check_dim(u.dim(), v.dim())?;
    Ok(u.dot(v))
}

/// Symmetric positive semidefinite operator in the truncated basis.
#[derive(Clone, PartialEq)]
pub struct SymOp {
    entries: DMatrix<f64>,
}

impl fmt::Debug for SymOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SymOp{}", self.entries)
    }
}

impl SymOp {
    /// Validates symmetry and positive semidefiniteness.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        let dim = entries.nrows();
        if dim == 0 {
            return Err(Error::EmptyVector);
        }
        check_dim(dim, entries.ncols())?;
        if entries.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("operator entries"));
        }
        for i in 0..dim {
            for j in (i + 1)..dim {
                let gap = (entries[(i, j)] - entries[(j, i)]).abs();
                if gap > 1e-12 * entries[(i, j)].abs().max(1.0) {
                    return Err(Error::NotSymmetric { i, j, gap });
                }
            }
        }
        let op = SymOp { entries };
        let min_eigenvalue = op.min_eigenvalue();
        if min_eigenvalue < -PSD_TOL {
            return Err(Error::NotPositiveSemidefinite { min_eigenvalue });
        }
        Ok(op)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        for r in rows {
            check_dim(dim, r.len())?;
        }
        Self::new(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
    }

    /// Symmetrizes `(M + Mᵀ)/2` before validating.
    pub fn symmetrized(m: &DMatrix<f64>) -> Result<Self> {
        Self::new((m + m.transpose()) * 0.5)
    }

    pub fn identity(dim: usize) -> Self {
        assert!(dim > 0);
        SymOp { entries: DMatrix::identity(dim, dim) }
    }

    pub fn zero(dim: usize) -> Self {
        assert!(dim > 0);
        SymOp { entries: DMatrix::zeros(dim, dim) }
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    /// Coordinate projection `π_n` onto the span of the first `n` basis
    /// vectors.
    pub fn projection(dim: usize, n: usize) -> Self {
        assert!(dim > 0);
        let mut entries = DMatrix::zeros(dim, dim);
        for i in 0..n.min(dim) {
            entries[(i, i)] = 1.0;
        }
        SymOp { entries }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        if c < 0.0 {
            return Err(Error::InvalidArgument(format!("negative scale {c}")));
        }
        Ok(SymOp { entries: &self.entries * c })
    }

    pub fn eigen(&self) -> SymmetricEigen<f64, nalgebra::Dyn> {
        SymmetricEigen::new(self.entries.clone())
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigen().eigenvalues.min()
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigen().eigenvalues.max()
    }

    /// Spectral norm; equals the largest eigenvalue for PSD operators.
    pub fn operator_norm(&self) -> f64 {
        self.eigen().eigenvalues.amax()
    }

    /// Applies `f` to the spectrum: `Q f(Λ) Qᵀ`.
    pub(crate) fn spectral_map(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let eig = self.eigen();
        let mapped = eig.eigenvalues.map(f);
        &eig.eigenvectors * DMatrix::from_diagonal(&mapped) * eig.eigenvectors.transpose()
    }

    /// `T^{1/2}`, clipping tiny negative eigenvalues to zero.
    pub fn sqrt(&self) -> SymOp {
        let m = self.spectral_map(|l| l.max(0.0).sqrt());
        SymOp { entries: (&m + m.transpose()) * 0.5 }
    }

    /// `T^{-1/2}`; requires positive definiteness.
    pub fn inv_sqrt(&self) -> Result<SymOp> {
        self.check_nonsingular(0.0)?;
        let m = self.spectral_map(|l| 1.0 / l.sqrt());
        Ok(SymOp { entries: (&m + m.transpose()) * 0.5 })
    }

    /// `T^{-1}`; requires positive definiteness.
    pub fn inverse(&self) -> Result<SymOp> {
        self.check_nonsingular(0.0)?;
        let m = self.spectral_map(|l| 1.0 / l);
        Ok(SymOp { entries: (&m + m.transpose()) * 0.5 })
    }

    fn check_nonsingular(&self, ridge: f64) -> Result<f64> {
        let eig = self.eigen().eigenvalues;
        let min = eig.min() + ridge;
        let max = eig.max() + ridge;
        if min <= SINGULAR_TOL * max.max(1.0) {
            return Err(Error::Singular { min_eigenvalue: min });
        }
        Ok(min)
    }
}

/// `T v`.
pub fn apply_op(t: &SymOp, v: &HVec) -> Result<HVec> {
    check_dim(t.dim(), v.dim())?;
    Ok(HVec(&t.entries * &v.0))
}

/// Solves `(T + ridge·I) z = b`.
pub fn solve_op(t: &SymOp, b: &HVec, ridge: f64) -> Result<HVec> {
    check_dim(t.dim(), b.dim())?;
    if !(ridge >= 0.0) {
        return Err(Error::InvalidArgument(format!("ridge must be nonnegative, got {ridge}")));
    }
    t.check_nonsingular(ridge)?;
    let mut m = t.entries.clone();
    for i in 0..m.nrows() {
        m[(i, i)] += ridge;
    }
    let chol = m
        .clone()
        .cholesky()
        .ok_or(Error::Singular { min_eigenvalue: t.min_eigenvalue() + ridge })?;
    let mut z = chol.solve(&b.0);
    // One step of iterative refinement keeps the residual tight for
    // moderately conditioned operators.
    let r = &b.0 - &m * &z;
    z += chol.solve(&r);
    Ok(HVec(z))
}

/// Gaussian measure `N(mean, covariance)` on the truncated space.
///
/// The covariance is factored once, spectrally, as `L = Q Λ^{1/2}` with
/// eigenvalues below [`FACTOR_CLIP`] set to zero; samples are `mean + L z`
/// with `z` standard normal.
#[derive(Clone, Debug)]
pub struct GaussianMeasure {
    covariance: SymOp,
    mean: HVec,
    factor: DMatrix<f64>,
}

impl GaussianMeasure {
    pub fn new(covariance: SymOp, mean: HVec) -> Result<Self> {
        check_dim(covariance.dim(), mean.dim())?;
        let eig = covariance.eigen();
        let roots = eig
            .eigenvalues
            .map(|l| if l < FACTOR_CLIP { 0.0 } else { l.sqrt() });
        let factor = &eig.eigenvectors * DMatrix::from_diagonal(&roots);
        Ok(GaussianMeasure { covariance, mean, factor })
    }

    pub fn centered(covariance: SymOp) -> Self {
        let dim = covariance.dim();
        Self::new(covariance, HVec::zeros(dim)).expect("dimensions agree")
    }

    pub fn dim(&self) -> usize {
        self.covariance.dim()
    }

    pub fn covariance(&self) -> &SymOp {
        &self.covariance
    }

    pub fn mean(&self) -> &HVec {
        &self.mean
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    /// Measure with covariance `c·A`, reusing the existing factorization
    /// scaled by `√c`.
    pub fn scale_covariance(&self, c: f64) -> Result<Self> {
        let covariance = self.covariance.scaled(c)?;
        Ok(GaussianMeasure {
            covariance,
            mean: self.mean.clone(),
            factor: &self.factor * c.sqrt(),
        })
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> HVec {
        let dim = self.dim();
        let z = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        HVec(&self.mean.0 + &self.factor * z)
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<HVec>> {
        if n == 0 {
            return Err(Error::InvalidArgument("sample count must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..n).map(|_| self.sample_one(&mut rng)).collect())
    }
}

/// Draws `n` vectors from `m`; deterministic in `seed`.
pub fn sample_gaussian(m: &GaussianMeasure, n: usize, seed: u64) -> Result<Vec<HVec>> {
    m.sample(n, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(c: &[f64]) -> HVec {
        HVec::new(c.to_vec()).unwrap()
    }

    #[test]
    fn inner_examples() {
        assert_eq!(inner(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        assert_eq!(inner(&v(&[1.0, 2.0]), &v(&[3.0, 4.0])).unwrap(), 11.0);
        let u = v(&[3.0, 4.0]);
        assert_eq!(inner(&u, &u).unwrap(), 25.0);
        assert_eq!(u.norm(), 5.0);
    }

    #[test]
    fn inner_rejects_mismatched_truncations() {
        let err = inner(&v(&[1.0]), &v(&[1.0, 2.0])).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 1, found: 2 }));
    }

    #[test]
    fn hvec_invariants() {
        assert!(matches!(HVec::new(vec![]), Err(Error::EmptyVector)));
        assert!(HVec::new(vec![1.0, f64::NAN]).is_err());
        assert!(HVec::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn apply_examples() {
        assert_eq!(apply_op(&SymOp::identity(2), &v(&[1.0, 2.0])).unwrap(), v(&[1.0, 2.0]));
        assert_eq!(
            apply_op(&SymOp::projection(2, 1), &v(&[3.0, 4.0])).unwrap(),
            v(&[3.0, 0.0])
        );
        let d = SymOp::diagonal(&[2.0, 3.0]).unwrap();
        assert_eq!(apply_op(&d, &v(&[1.0, 1.0])).unwrap(), v(&[2.0, 3.0]));
        assert!(apply_op(&d, &v(&[1.0])).is_err());
    }

    #[test]
    fn solve_examples() {
        let d = SymOp::diagonal(&[2.0, 4.0]).unwrap();
        let z = solve_op(&d, &v(&[2.0, 4.0]), 0.0).unwrap();
        assert!((z.as_slice()[0] - 1.0).abs() < 1e-15 && (z.as_slice()[1] - 1.0).abs() < 1e-15);

        let b = v(&[0.3, -7.0, 2.5]);
        assert_eq!(solve_op(&SymOp::identity(3), &b, 0.0).unwrap(), b);

        let sing = SymOp::diagonal(&[1.0, 1e-14]).unwrap();
        match solve_op(&sing, &v(&[1.0, 1.0]), 0.0) {
            Err(Error::Singular { min_eigenvalue }) => assert!(min_eigenvalue < 1e-13),
            other => panic!("expected singularity error, got {other:?}"),
        }
        // A ridge restores solvability.
        assert!(solve_op(&sing, &v(&[1.0, 1.0]), 1e-3).is_ok());
    }

    #[test]
    fn symop_validation() {
        assert!(matches!(
            SymOp::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]),
            Err(Error::NotSymmetric { .. })
        ));
        assert!(matches!(
            SymOp::diagonal(&[1.0, -1.0]),
            Err(Error::NotPositiveSemidefinite { .. })
        ));
        // Within the PSD tolerance.
        assert!(SymOp::diagonal(&[1.0, -1e-11]).is_ok());
    }

    #[test]
    fn degenerate_gaussian_returns_mean() {
        let mean = v(&[1.5, -2.0]);
        let m = GaussianMeasure::new(SymOp::zero(2), mean.clone()).unwrap();
        for s in m.sample(20, 3).unwrap() {
            assert_eq!(s, mean);
        }
    }

    #[test]
    fn gaussian_sampling_is_seed_deterministic() {
        let m = GaussianMeasure::centered(SymOp::diagonal(&[1.0, 0.25, 4.0]).unwrap());
        assert_eq!(m.sample(50, 11).unwrap(), m.sample(50, 11).unwrap());
        assert_ne!(m.sample(50, 11).unwrap(), m.sample(50, 12).unwrap());
        assert!(m.sample(0, 1).is_err());
    }

    #[test]
    fn identity_covariance_law_of_large_numbers() {
        let m = GaussianMeasure::centered(SymOp::identity(2));
        let draws = m.sample(100_000, 2024).unwrap();
        let n = draws.len() as f64;
        let mut cov = [[0.0; 2]; 2];
        let mut mean = [0.0; 2];
        for d in &draws {
            for i in 0..2 {
                mean[i] += d.as_slice()[i] / n;
            }
        }
        for d in &draws {
            for i in 0..2 {
                for j in 0..2 {
                    cov[i][j] += (d.as_slice()[i] - mean[i]) * (d.as_slice()[j] - mean[j]) / n;
                }
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((cov[i][j] - target).abs() < 0.05, "cov[{i}][{j}] = {}", cov[i][j]);
            }
        }
    }

    #[test]
    fn covariance_scaling_scales_samples() {
        let a = SymOp::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let m = GaussianMeasure::centered(a);
        let scaled = m.scale_covariance(9.0).unwrap();
        let f1 = m.factor();
        let f9 = scaled.factor();
        assert!((f9 - f1 * 3.0).amax() == 0.0);
        for (x, y) in m.sample(10, 5).unwrap().iter().zip(scaled.sample(10, 5).unwrap()) {
            for (a, b) in x.as_slice().iter().zip(y.as_slice()) {
                assert!((3.0 * a - b).abs() <= 1e-14 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn inverse_and_roots() {
        let a = SymOp::from_rows(&[vec![4.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let r = a.sqrt();
        assert!((r.entries() * r.entries() - a.entries()).amax() < 1e-12);
        let ir = a.inv_sqrt().unwrap();
        let prod = ir.entries() * a.entries() * ir.entries();
        assert!((prod - DMatrix::<f64>::identity(2, 2)).amax() < 1e-12);
        let inv = a.inverse().unwrap();
        assert!((inv.entries() * a.entries() - DMatrix::<f64>::identity(2, 2)).amax() < 1e-12);
    }
}
