//! Scalar abstraction, deterministic SVD, and the matrix norms used throughout.
//!
//! Matrices are plain `nalgebra::DMatrix` values. Every routine is generic over
//! [`Field`], implemented for `f64` and complex doubles, so the experiment path
//! runs in real arithmetic while Fourier-type examples stay exact.

use alloc::vec::Vec;

use nalgebra::{ComplexField, DMatrix, DVector, SymmetricEigen, QR, SVD};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Error, Result, C64};

pub type Mat<T> = DMatrix<T>;

/// Scalar field of the toolkit: `f64` or complex `f64`.
pub trait Field: ComplexField<RealField = f64> + Copy {
    /// Standard (circularly symmetric, unit variance) Gaussian draw.
    fn sample_standard<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Unit-modulus scalar `x / |x|`, or one for zero.
    fn phase(self) -> Self {
        let m = self.modulus();
        if m == 0.0 {
            Self::one()
        } else {
            self.unscale(m)
        }
    }
}

impl Field for f64 {
    fn sample_standard<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

impl Field for C64 {
    fn sample_standard<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        C64::new(re, im) * core::f64::consts::FRAC_1_SQRT_2
    }
}

/// Thin singular value decomposition `X = U diag(sigma) V^H`.
///
/// Singular values are non-increasing. In every pair `(U[:, j], V[:, j])` the
/// entry of largest modulus of `U[:, j]` (first one on ties) is real positive,
/// which makes the factors a deterministic function of `X`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdResult<T: Field> {
    pub u: Mat<T>,
    pub sigma: DVector<f64>,
    pub v: Mat<T>,
}

impl<T: Field> SvdResult<T> {
    pub fn rank_budget(&self) -> usize {
        self.sigma.len()
    }

    pub fn reconstruct(&self) -> Mat<T> {
        let mut us = self.u.clone();
        for (j, s) in self.sigma.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.v.adjoint()
    }

    /// Keep the leading `k` triplets.
    pub fn truncate(mut self, k: usize) -> Self {
        let k = k.min(self.sigma.len());
        self.u = self.u.columns(0, k).into_owned();
        self.v = self.v.columns(0, k).into_owned();
        self.sigma = self.sigma.rows(0, k).into_owned();
        self
    }
}

pub fn check_finite<T: Field>(x: &Mat<T>, context: &'static str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { context })
    }
}

/// Raw decomposition `(u, sigma, v^H)` with a reconstruction check.
///
/// nalgebra's bidiagonal QR occasionally deflates early on inputs with
/// clustered singular values and returns factors that do not multiply back
/// to `x`. Each attempt is checked; a failed one is retried with another
/// tolerance, then on the adjoint.
pub fn checked_svd<T: Field>(x: &Mat<T>) -> Result<(Mat<T>, DVector<f64>, Mat<T>)> {
    let scale = x.norm();
    let dims = (x.nrows() + x.ncols()) as f64;
    let limit = 1e-12 * dims * scale.max(f64::MIN_POSITIVE);
    for eps in [5.0 * f64::EPSILON, f64::EPSILON, 1e-13, 1e-12, 1e-10] {
        for adjoint in [false, true] {
            let input = if adjoint { x.adjoint() } else { x.clone() };
            let Some(dec) = SVD::try_new(input, true, true, eps, 0) else {
                continue;
            };
            let (Some(u), Some(v_t)) = (dec.u, dec.v_t) else {
                continue;
            };
            let sigma = dec.singular_values;
            let (u, v_t) = if adjoint {
                (v_t.adjoint(), u.adjoint())
            } else {
                (u, v_t)
            };
            let mut us = u.clone();
            for (j, s) in sigma.iter().enumerate() {
                us.column_mut(j).iter_mut().for_each(|v| *v *= T::from_real(*s));
            }
            if (us * &v_t - x).norm() <= limit {
                return Ok((u, sigma, v_t));
            }
        }
    }
    if x.nrows() >= x.ncols() {
        gram_svd(x)
    } else {
        let (u, sigma, v_t) = gram_svd(&x.adjoint())?;
        Ok((v_t.adjoint(), sigma, u.adjoint()))
    }
}

// Last resort for a tall `x`: right vectors from the Hermitian eigenproblem
// of `x^H x`, left vectors re-orthonormalized and completed to a full basis.
fn gram_svd<T: Field>(x: &Mat<T>) -> Result<(Mat<T>, DVector<f64>, Mat<T>)> {
    let n = x.ncols();
    let gram = x.adjoint() * x;
    let gram = (&gram + gram.adjoint()).unscale(2.0);
    let eig = SymmetricEigen::try_new(gram, f64::EPSILON, 0).ok_or(Error::SvdFailed)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let v = eig.eigenvectors.select_columns(order.iter());
    let xv = x * &v;
    let sigma = DVector::from_iterator(n, xv.column_iter().map(|c| c.norm()));
    let cutoff = 1e-8 * sigma.max();
    let rank = sigma.iter().take_while(|&&s| s > cutoff && s > 0.0).count();
    let head = QR::new(xv.columns(0, rank).into_owned()).q();
    // QR may flip signs; restore alignment with x v
    let mut u = Mat::<T>::zeros(x.nrows(), n);
    for j in 0..rank {
        let c = head.column(j);
        let dir = c.dotc(&xv.column(j));
        let fix = if dir.modulus() > 0.0 {
            dir.unscale(dir.modulus())
        } else {
            T::one()
        };
        u.set_column(j, &(c * fix));
    }
    let rest = orthonormal_complement(&u.columns(0, rank).into_owned())?;
    for j in rank..n {
        u.set_column(j, &rest.column(j - rank));
    }
    let mut sigma = sigma;
    let mut us = u.clone();
    for j in 0..n {
        sigma[j] = if j < rank {
            u.column(j).dotc(&xv.column(j)).real()
        } else {
            0.0
        };
        us.column_mut(j).iter_mut().for_each(|v| *v *= T::from_real(sigma[j]));
    }
    let v_t = v.adjoint();
    if (us * &v_t - x).norm() > 1e-7 * x.norm().max(f64::MIN_POSITIVE) {
        return Err(Error::SvdFailed);
    }
    Ok((u, sigma, v_t))
}

/// SVD of `x` keeping the `k` largest singular values (all when `k` is `None`).
pub fn svd<T: Field>(x: &Mat<T>, k: Option<usize>) -> Result<SvdResult<T>> {
    check_finite(x, "svd input")?;
    let full = x.nrows().min(x.ncols());
    let k = k.unwrap_or(full);
    if k == 0 || k > full {
        return Err(Error::RankOutOfRange { rank: k, max: full });
    }
    let (u, sigma, v_t) = checked_svd(x)?;

    let mut order: Vec<usize> = (0..full).collect();
    // nalgebra sorts already; the stable re-sort only pins tie order.
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]));
    let order = &order[..k];

    let mut out_u = Mat::<T>::zeros(x.nrows(), k);
    let mut out_v = Mat::<T>::zeros(x.ncols(), k);
    let mut out_s = DVector::<f64>::zeros(k);
    for (dst, &src) in order.iter().enumerate() {
        out_s[dst] = sigma[src];
        out_u.set_column(dst, &u.column(src));
        let v_col = v_t.row(src).adjoint();
        out_v.set_column(dst, &v_col);
    }
    apply_sign_convention(&mut out_u, &mut out_v);
    Ok(SvdResult {
        u: out_u,
        sigma: out_s,
        v: out_v,
    })
}

fn apply_sign_convention<T: Field>(u: &mut Mat<T>, v: &mut Mat<T>) {
    for j in 0..u.ncols() {
        let mut best = 0;
        let mut best_mod = -1.0;
        for (i, x) in u.column(j).iter().enumerate() {
            let m = x.modulus();
            if m > best_mod {
                best_mod = m;
                best = i;
            }
        }
        let fix = u[(best, j)].phase().conjugate();
        u.column_mut(j).iter_mut().for_each(|x| *x *= fix);
        v.column_mut(j).iter_mut().for_each(|x| *x *= fix);
        // exact zero imaginary part on the pivot
        u[(best, j)] = T::from_real(u[(best, j)].modulus());
    }
}

/// Best rank-`r` approximation `U^r Sigma^r V^{rH}`.
pub fn best_rank_r<T: Field>(x: &Mat<T>, r: usize) -> Result<Mat<T>> {
    let full = x.nrows().min(x.ncols());
    if r == 0 || r > full {
        return Err(Error::RankOutOfRange { rank: r, max: full });
    }
    Ok(svd(x, Some(r))?.reconstruct())
}

pub fn singular_values<T: Field>(x: &Mat<T>) -> Result<DVector<f64>> {
    check_finite(x, "singular values")?;
    if x.is_empty() {
        return Ok(DVector::zeros(0));
    }
    let mut s: Vec<f64> = checked_svd(x)?.1.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(DVector::from_vec(s))
}

/// Trace inner product `<A, B> = tr(A^H B)`.
pub fn inner<T: Field>(a: &Mat<T>, b: &Mat<T>) -> T {
    a.dotc(b)
}

pub fn frobenius<T: Field>(x: &Mat<T>) -> f64 {
    x.norm()
}

pub fn nuclear_norm<T: Field>(x: &Mat<T>) -> Result<f64> {
    Ok(singular_values(x)?.iter().sum())
}

pub fn operator_norm<T: Field>(x: &Mat<T>) -> Result<f64> {
    if x.is_empty() {
        return Ok(0.0);
    }
    Ok(singular_values(x)?.iter().copied().fold(0.0, f64::max))
}

/// Largest entry modulus.
pub fn max_abs<T: Field>(x: &Mat<T>) -> f64 {
    x.iter().map(|v| v.modulus()).fold(0.0, f64::max)
}

/// Squared Euclidean norms of the rows.
pub fn row_norms_sq<T: Field>(x: &Mat<T>) -> Vec<f64> {
    (0..x.nrows())
        .map(|i| x.row(i).iter().map(|v| v.modulus_squared()).sum())
        .collect()
}

/// Largest row or column Euclidean norm (`||X||_{inf,2}`).
pub fn max_row_col_norm<T: Field>(x: &Mat<T>) -> f64 {
    let rows = row_norms_sq(x).into_iter().fold(0.0, f64::max);
    let cols = (0..x.ncols()).map(|j| x.column(j).norm_squared()).fold(0.0, f64::max);
    rows.max(cols).sqrt()
}

/// Largest deviation of `Q^H Q` from the identity.
pub fn gram_deviation<T: Field>(q: &Mat<T>) -> f64 {
    let g = q.adjoint() * q;
    let mut dev: f64 = 0.0;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { T::one() } else { T::zero() };
            dev = dev.max((g[(i, j)] - target).modulus());
        }
    }
    dev
}

pub fn require_orthonormal<T: Field>(q: &Mat<T>, tol: f64) -> Result<()> {
    let dev = gram_deviation(q);
    if dev > tol {
        Err(Error::NotOrthonormal { deviation: dev })
    } else {
        Ok(())
    }
}

/// Orthonormal basis of the column space of a full column rank `a` (thin QR
/// with the diagonal of R made real positive).
pub fn orthonormalize_columns<T: Field>(a: &Mat<T>) -> Result<Mat<T>> {
    check_finite(a, "orthonormalize")?;
    if a.ncols() > a.nrows() {
        return Err(Error::dims((a.nrows(), a.nrows()), (a.nrows(), a.ncols())));
    }
    let qr = QR::new(a.clone());
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..q.ncols() {
        if r[(j, j)].modulus() <= 1e-13 * a.column(j).norm().max(f64::MIN_POSITIVE) {
            return Err(Error::RankDeficientSpan { index: j });
        }
        let ph = r[(j, j)].phase();
        q.column_mut(j).iter_mut().for_each(|x| *x *= ph);
    }
    Ok(q)
}

/// Orthonormal basis of `range(q)^perp` for `q` with orthonormal columns.
pub fn orthonormal_complement<T: Field>(q: &Mat<T>) -> Result<Mat<T>> {
    let n = q.nrows();
    let k = q.ncols();
    if k >= n {
        return Ok(Mat::zeros(n, 0));
    }
    let proj = Mat::<T>::identity(n, n) - q * q.adjoint();
    let proj = (&proj + proj.adjoint()).unscale(2.0);
    // eigenvalues are 0 (k times) and 1 (n - k times)
    let eig = SymmetricEigen::try_new(proj, f64::EPSILON, 0).ok_or(Error::SvdFailed)?;
    let keep: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
    if keep.len() != n - k {
        return Err(Error::NotOrthonormal {
            deviation: gram_deviation(q),
        });
    }
    Ok(eig.eigenvectors.select_columns(keep.iter()))
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues<T: Field>(h: &Mat<T>) -> Result<Vec<f64>> {
    if h.nrows() != h.ncols() {
        return Err(Error::dims((h.nrows(), h.nrows()), (h.nrows(), h.ncols())));
    }
    if h.nrows() == 0 {
        return Ok(Vec::new());
    }
    check_finite(h, "hermitian eigenvalues")?;
    // symmetrize against round-off before the eigensolver
    let sym = (h + h.adjoint()).unscale(2.0);
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 0).ok_or(Error::SvdFailed)?;
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    Ok(vals)
}

/// Unit vector `e_k e_l^T` of the canonical basis of `n1 x n2` matrices.
pub fn canonical_basis<T: Field>(n1: usize, n2: usize, k: usize, l: usize) -> Mat<T> {
    let mut m = Mat::zeros(n1, n2);
    m[(k, l)] = T::one();
    m
}
