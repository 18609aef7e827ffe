//! Per-matrix incoherence parameters and principal angles.
//!
//! All parameters are functions of a pair of factors `U` (`n1 x r`) and `V`
//! (`n2 x r`) with orthonormal columns. [`IncoherenceReport::from_matrix`]
//! takes them from the top-`r` SVD; when `sigma_r` is (numerically) tied with
//! `sigma_{r+1}` those factors are not unique and the report says so.

use alloc::vec::Vec;

#[allow(unused_imports)]
use nalgebra::ComplexField as _;

use crate::linalg::{self, require_orthonormal, row_norms_sq, Field, Mat};
use crate::{Error, Result};

/// Orthonormality tolerance for factor inputs.
pub const FACTOR_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncoherenceReport {
    pub mu0: f64,
    pub mu1: f64,
    pub mu1_alt: f64,
    pub mu1_joint: f64,
    pub mu2: f64,
    pub r: usize,
    /// `sigma_r - sigma_{r+1} <= 1e-10 sigma_1`: the factors, hence `mu1` and
    /// `mu1_joint`, depend on an arbitrary rotation.
    pub degenerate: bool,
}

fn fourth_power_row_sums<T: Field>(x: &Mat<T>) -> Vec<f64> {
    (0..x.nrows())
        .map(|i| x.row(i).iter().map(|v| v.modulus_squared().powi(2)).sum())
        .collect()
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

/// `(n / r) max_k ||Q_{k*}||^2`, the coherence of one factor.
pub fn factor_coherence<T: Field>(q: &Mat<T>) -> f64 {
    let r = q.ncols().max(1) as f64;
    q.nrows() as f64 / r * max_of(&row_norms_sq(q))
}

/// `(n / r) min_k ||Q_{k*}||^2`.
pub fn factor_floor<T: Field>(q: &Mat<T>) -> f64 {
    let r = q.ncols().max(1) as f64;
    q.nrows() as f64 / r * min_of(&row_norms_sq(q))
}

impl IncoherenceReport {
    pub fn from_factors<T: Field>(u: &Mat<T>, v: &Mat<T>) -> Result<Self> {
        if u.ncols() != v.ncols() {
            return Err(Error::dims((u.nrows(), v.ncols()), u.shape()));
        }
        let r = u.ncols();
        if r == 0 || r > u.nrows() || r > v.nrows() {
            return Err(Error::RankOutOfRange {
                rank: r,
                max: u.nrows().min(v.nrows()),
            });
        }
        require_orthonormal(u, FACTOR_TOL)?;
        require_orthonormal(v, FACTOR_TOL)?;

        let (n1, n2) = (u.nrows() as f64, v.nrows() as f64);
        let scale = n1 * n2 / r as f64;

        let mu0 = factor_coherence(u).max(factor_coherence(v));
        let mu2 = factor_floor(u).min(factor_floor(v));

        let u_sq = u.map(|x| x.modulus_squared());
        let v_sq = v.map(|x| x.modulus_squared());
        let mu1 = scale * (u_sq * v_sq.transpose()).max();

        let alt_u = max_of(&fourth_power_row_sums(u)).sqrt();
        let alt_v = max_of(&fourth_power_row_sums(v)).sqrt();
        let mu1_alt = scale * alt_u * alt_v;

        let joint = u * v.adjoint();
        let mu1_joint = scale * joint.iter().map(|x| x.modulus_squared()).fold(0.0, f64::max);

        Ok(IncoherenceReport {
            mu0,
            mu1,
            mu1_alt,
            mu1_joint,
            mu2,
            r,
            degenerate: false,
        })
    }

    pub fn from_matrix<T: Field>(d: &Mat<T>, r: usize) -> Result<Self> {
        let full = d.nrows().min(d.ncols());
        if r == 0 || r > full {
            return Err(Error::RankOutOfRange { rank: r, max: full });
        }
        let s = linalg::svd(d, None)?;
        let sigma = &s.sigma;
        let tail = if r < full { sigma[r] } else { 0.0 };
        let degenerate = sigma[r - 1] - tail <= 1e-10 * sigma[0];
        let s = s.truncate(r);
        let mut report = Self::from_factors(&s.u, &s.v)?;
        report.degenerate = degenerate;
        Ok(report)
    }
}

pub fn mu0<T: Field>(d: &Mat<T>, r: usize) -> Result<f64> {
    Ok(IncoherenceReport::from_matrix(d, r)?.mu0)
}

pub fn mu1<T: Field>(d: &Mat<T>, r: usize) -> Result<f64> {
    Ok(IncoherenceReport::from_matrix(d, r)?.mu1)
}

pub fn mu1_alt<T: Field>(d: &Mat<T>, r: usize) -> Result<f64> {
    Ok(IncoherenceReport::from_matrix(d, r)?.mu1_alt)
}

pub fn mu1_joint<T: Field>(d: &Mat<T>, r: usize) -> Result<f64> {
    Ok(IncoherenceReport::from_matrix(d, r)?.mu1_joint)
}

pub fn mu2<T: Field>(d: &Mat<T>, r: usize) -> Result<f64> {
    Ok(IncoherenceReport::from_matrix(d, r)?.mu2)
}

/// Largest canonical correlation `||A^H B||` between two orthonormal factors.
///
/// With `B` an orthonormal basis of the complement of the true column space
/// this is the sine of the largest principal angle.
pub fn pabs<T: Field>(a: &Mat<T>, b: &Mat<T>) -> Result<f64> {
    if a.nrows() != b.nrows() {
        return Err(Error::dims((a.nrows(), b.ncols()), b.shape()));
    }
    require_orthonormal(a, FACTOR_TOL)?;
    require_orthonormal(b, FACTOR_TOL)?;
    if a.ncols() == 0 || b.ncols() == 0 {
        return Ok(0.0);
    }
    Ok(linalg::operator_norm(&(a.adjoint() * b))?.min(1.0))
}

/// `||(I - Q Q^H) P||` for orthonormal `P`, `Q`: the sine of the largest angle
/// between `range(P)` and `range(Q)`, without forming a complement basis.
pub fn sin_theta<T: Field>(estimate: &Mat<T>, truth: &Mat<T>) -> Result<f64> {
    if estimate.nrows() != truth.nrows() {
        return Err(Error::dims(truth.shape(), estimate.shape()));
    }
    require_orthonormal(estimate, FACTOR_TOL)?;
    require_orthonormal(truth, FACTOR_TOL)?;
    let resid = estimate - truth * (truth.adjoint() * estimate);
    Ok(linalg::operator_norm(&resid)?.min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{orthonormal_factor, seeded_rng};

    #[test]
    fn flat_rank_one() {
        let d = Mat::<f64>::from_element(4, 4, 0.25);
        let rep = IncoherenceReport::from_matrix(&d, 1).unwrap();
        for v in [rep.mu0, rep.mu1, rep.mu1_alt, rep.mu1_joint, rep.mu2] {
            assert!((v - 1.0).abs() < 1e-12, "{rep:?}");
        }
        assert!(!rep.degenerate);
    }

    #[test]
    fn spike() {
        let d = linalg::canonical_basis::<f64>(4, 4, 0, 0);
        let rep = IncoherenceReport::from_matrix(&d, 1).unwrap();
        assert!((rep.mu0 - 4.0).abs() < 1e-12);
        assert_eq!(rep.mu2, 0.0);
    }

    #[test]
    fn identity_is_degenerate_but_flat() {
        let d = Mat::<f64>::identity(4, 4);
        let rep = IncoherenceReport::from_matrix(&d, 4).unwrap();
        assert!((rep.mu0 - 1.0).abs() < 1e-12);
        let rep2 = IncoherenceReport::from_matrix(&d, 2).unwrap();
        assert!(rep2.degenerate);
    }

    #[test]
    fn pabs_rotation() {
        let a = (core::f64::consts::PI / 6.0).sin_cos();
        let x = Mat::<f64>::from_column_slice(2, 1, &[a.1, a.0]);
        let e2 = Mat::<f64>::from_column_slice(2, 1, &[0.0, 1.0]);
        assert!((pabs(&x, &e2).unwrap() - 0.5).abs() < 1e-12);
        let e1 = Mat::<f64>::from_column_slice(2, 1, &[1.0, 0.0]);
        assert!((sin_theta(&x, &e1).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn pabs_rejects_non_orthonormal() {
        let x = Mat::<f64>::from_column_slice(2, 1, &[1.0, 1.0]);
        assert!(matches!(pabs(&x, &x), Err(Error::NotOrthonormal { .. })));
    }

    #[test]
    fn bound_chain_on_random_factors() {
        let mut rng = seeded_rng(8);
        for _ in 0..20 {
            let u: Mat<f64> = orthonormal_factor(30, 4, &mut rng).unwrap();
            let v: Mat<f64> = orthonormal_factor(20, 4, &mut rng).unwrap();
            let rep = IncoherenceReport::from_factors(&u, &v).unwrap();
            assert!(rep.mu0 >= 1.0 - 1e-12);
            assert!(rep.mu1 <= rep.mu0 * rep.mu0 * 4.0 + 1e-9);
            assert!(rep.mu1 <= rep.mu1_alt + 1e-9);
            assert!(rep.mu2 >= 0.0 && rep.mu2 <= 1.0 + 1e-12);
        }
    }
}
