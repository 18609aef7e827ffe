//! Dual certificate diagnostics.
//!
//! With a with-replacement sample `S` of size `m`, `Ã*Ã` multiplies entry
//! `(k, l)` by `(n1 n2 / m) mult(k, l)`, and `A = sqrt(n1 n2 / m) P_Omega` acts on
//! the distinct cells. For a sign matrix `G` in `T` the certificate is
//!
//! ```text
//! Z = L^{-1}(mult o G),   Y = L((n1 n2 / m) mult o G),   L = P_T + w P_{T^perp},
//! ```
//!
//! and the quality numbers are
//!
//! | name | value |
//! |------|-------|
//! | beta1 | smallest singular value of `A` on `T` |
//! | beta2 | `w ||A P_{T^perp}||` |
//! | beta3 | `||P_T(Y) - G||_F` |
//! | beta4 | `||P_{T^perp}(Y)||` |
//! | beta5 | `||A L (Z)||_2` |
//!
//! The certificate argument needs `beta2 beta3 / beta1 + beta4 < 1`.

use alloc::vec::Vec;

#[allow(unused_imports)]
use nalgebra::ComplexField as _;
use nalgebra::DMatrix;
use rand::Rng;

use crate::linalg::{self, inner, Field, Mat};
use crate::random::gaussian_matrix;
use crate::sampling::SampleSet;
use crate::subspace::Subspace;
use crate::{Error, Result};

/// Default cap on `dim(T)` for routines that materialize a basis.
pub const DEFAULT_DIMENSION_CAP: usize = 4096;

/// Sign matrix `G` in `T` with `||G|| <= 1` and `<D, G> = ||P_T(D)||_*`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignMatrix<T: Field> {
    pub g: Mat<T>,
    /// Produced by the ascent fallback rather than the polar factor.
    pub approximate: bool,
    /// `Re <D, G>`.
    pub value: f64,
    /// `||P_T(D)||_*`, the value an exact sign matrix attains.
    pub target: f64,
}

/// Polar factor of `P_T(D)`, accepted only if it lies in `T`.
pub fn sign_matrix_in_t<T: Field>(t: &Subspace<T>, d: &Mat<T>) -> Result<Mat<T>> {
    let p = t.project(d)?;
    let svd = linalg::svd(&p, None)?;
    let top = svd.sigma[0];
    if top == 0.0 {
        return Err(Error::param("D", "P_T(D) vanishes"));
    }
    let dims = p.nrows().max(p.ncols()) as f64;
    let rank = svd.sigma.iter().filter(|&&s| s > dims * f64::EPSILON * top).count();
    let svd = svd.truncate(rank);
    let g = &svd.u * svd.v.adjoint();

    let g_norm = g.norm();
    let residual = t.project_complement(&g)?.norm();
    if residual > 1e-8 * g_norm {
        return Err(Error::SignNotInSubspace { residual });
    }
    let op = linalg::operator_norm(&g)?;
    if op > 1.0 + 1e-10 {
        return Err(Error::SignNotInSubspace { residual: op - 1.0 });
    }
    let target: f64 = svd.sigma.iter().sum();
    let value = inner(d, &g).real();
    if (value - target).abs() > 1e-8 * target {
        return Err(Error::SignNotInSubspace {
            residual: (value - target).abs(),
        });
    }
    Ok(g)
}

/// Restarts and iterations of the ascent fallback.
pub const FALLBACK_RESTARTS: usize = 50;
pub const FALLBACK_ITERATIONS: usize = 500;

/// Projected-gradient ascent of `Re <D, G>` over `T` intersected with the
/// operator-norm ball. Each step moves along `P_T(D)`, clips singular values at
/// one, projects back onto `T` and rescales into the ball, so every iterate is
/// feasible. The best of `restarts` random starts is returned.
pub fn sign_matrix_ascent<T: Field, R: Rng + ?Sized>(
    t: &Subspace<T>,
    d: &Mat<T>,
    restarts: usize,
    iterations: usize,
    rng: &mut R,
) -> Result<SignMatrix<T>> {
    let grad = t.project(d)?;
    let target = linalg::nuclear_norm(&grad)?;
    if target == 0.0 {
        return Err(Error::param("D", "P_T(D) vanishes"));
    }
    let (n1, n2) = t.dims();
    let step = 1.0 / linalg::operator_norm(&grad)?;
    let feasible = |x: &Mat<T>| -> Result<Mat<T>> {
        let clipped = clip_singular_values(x)?;
        let inside = t.project(&clipped)?;
        let op = linalg::operator_norm(&inside)?;
        Ok(if op > 1.0 { inside.unscale(op) } else { inside })
    };

    let mut best: Option<(f64, Mat<T>)> = None;
    for restart in 0..restarts.max(1) {
        let start = if restart == 0 {
            grad.clone()
        } else {
            t.project(&gaussian_matrix(n1, n2, rng))?
        };
        let mut g = feasible(&start)?;
        let mut value = inner(d, &g).real();
        for _ in 0..iterations {
            let next = feasible(&(&g + &grad * T::from_real(step)))?;
            let v = inner(d, &next).real();
            if v <= value * (1.0 + 1e-14) {
                break;
            }
            g = next;
            value = v;
        }
        if best.as_ref().is_none_or(|(b, _)| value > *b) {
            best = Some((value, g));
        }
    }
    let (value, g) = best.expect("at least one restart");
    Ok(SignMatrix {
        g,
        approximate: true,
        value,
        target,
    })
}

/// Exact sign matrix when the polar factor lies in `T`, otherwise the ascent
/// fallback.
pub fn sign_matrix<T: Field, R: Rng + ?Sized>(t: &Subspace<T>, d: &Mat<T>, rng: &mut R) -> Result<SignMatrix<T>> {
    match sign_matrix_in_t(t, d) {
        Ok(g) => {
            let value = inner(d, &g).real();
            Ok(SignMatrix {
                g,
                approximate: false,
                value,
                target: value,
            })
        }
        Err(Error::SignNotInSubspace { .. }) => sign_matrix_ascent(t, d, FALLBACK_RESTARTS, FALLBACK_ITERATIONS, rng),
        Err(e) => Err(e),
    }
}

fn clip_singular_values<T: Field>(x: &Mat<T>) -> Result<Mat<T>> {
    let svd = linalg::svd(x, None)?;
    let mut us = svd.u.clone();
    for (j, s) in svd.sigma.iter().enumerate() {
        us.column_mut(j).scale_mut(s.min(1.0));
    }
    Ok(us * svd.v.adjoint())
}

/// `P_T x + c P_{T^perp} x` with `c = omega` or `1 / omega`.
fn weight<T: Field>(t: &Subspace<T>, omega: f64, x: &Mat<T>, inverse: bool) -> Mat<T> {
    let p = t.project_unchecked(x);
    let c = if inverse { 1.0 / omega } else { omega };
    &p + (x - &p) * T::from_real(c)
}

/// `(n1 n2 / m) mult o X`, i.e. `Ã*Ã(X)`.
pub fn normalized_gram_apply<T: Field>(s: &SampleSet, x: &Mat<T>) -> Result<Mat<T>> {
    if x.shape() != s.dims() {
        return Err(Error::dims(s.dims(), x.shape()));
    }
    let scale = (s.n1() * s.n2()) as f64 / s.len().max(1) as f64;
    let mult = s.multiplicities();
    Ok(Mat::from_fn(x.nrows(), x.ncols(), |k, l| {
        x[(k, l)].scale(scale * mult[(k, l)])
    }))
}

/// Certificate pair `(Y, Z)` for sign matrix `g`.
pub fn build_certificate<T: Field>(t: &Subspace<T>, omega: f64, s: &SampleSet, g: &Mat<T>) -> Result<(Mat<T>, Mat<T>)> {
    check_setup(t, omega, s)?;
    if g.shape() != s.dims() {
        return Err(Error::dims(s.dims(), g.shape()));
    }
    let mult = s.multiplicities();
    let sampled = Mat::from_fn(g.nrows(), g.ncols(), |k, l| g[(k, l)].scale(mult[(k, l)]));
    let z = weight(t, omega, &sampled, true);
    let scale = (s.n1() * s.n2()) as f64 / s.len() as f64;
    let y = weight(t, omega, &sampled, false) * T::from_real(scale);
    Ok((y, z))
}

fn check_setup<T: Field>(t: &Subspace<T>, omega: f64, s: &SampleSet) -> Result<()> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::param("omega", "must be positive"));
    }
    if t.dims() != s.dims() {
        return Err(Error::dims(t.dims(), s.dims()));
    }
    if s.is_empty() {
        return Err(Error::param("samples", "no samples"));
    }
    Ok(())
}

/// Lemma constants `(C1, C2)`, defined when `beta1 > 0` and
/// `beta2 beta3 / beta1 + beta4 < 1`.
pub fn certificate_constants(b1: f64, b2: f64, b3: f64, b4: f64, b5: f64) -> Option<(f64, f64)> {
    if !(b1 > 0.0) {
        return None;
    }
    let slack = 1.0 - b2 * b3 / b1 - b4;
    if !(slack > 0.0) {
        return None;
    }
    let c1 = 2.0 * (b2 / b1 + 1.0) / slack;
    let c2 = 1.0 / b1 + (b2 / b1 + 1.0) * (b3 / b1 + b5) / slack;
    Some((c1, c2))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateReport<T: Field> {
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub beta4: f64,
    pub beta5: f64,
    /// `beta2 beta3 / beta1 + beta4`; infinite when `beta1 = 0`.
    pub condition: f64,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub g: Mat<T>,
    pub g_approximate: bool,
    pub y: Mat<T>,
    pub z: Mat<T>,
    /// Power iterations spent on `beta2`.
    pub power_iterations: usize,
}

impl<T: Field> CertificateReport<T> {
    /// Certificate condition holds and the constants exist.
    pub fn certified(&self) -> bool {
        self.condition < 1.0 && self.c1.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertifyOptions {
    pub dimension_cap: usize,
    pub power_tol: f64,
    pub power_max_iter: usize,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            dimension_cap: DEFAULT_DIMENSION_CAP,
            power_tol: 1e-8,
            power_max_iter: 10_000,
        }
    }
}

/// Basis of `T` as the columns of an `(n1 n2) x dim` matrix (column-major
/// vectorization).
fn basis_matrix<T: Field>(t: &Subspace<T>, cap: usize) -> Result<Mat<T>> {
    let dim = t.dim();
    if dim > cap {
        return Err(Error::DimensionCap { dim, cap });
    }
    let basis = t.basis()?;
    let (n1, n2) = t.dims();
    let mut out = Mat::<T>::zeros(n1 * n2, basis.len());
    for (j, b) in basis.iter().enumerate() {
        out.column_mut(j).copy_from_slice(b.as_slice());
    }
    Ok(out)
}

/// `B^H diag(w) B` for a weight per cell.
fn weighted_gram<T: Field>(b: &Mat<T>, w: &DMatrix<f64>) -> Mat<T> {
    let weighted = Mat::from_fn(b.nrows(), b.ncols(), |i, j| b[(i, j)].scale(w.as_slice()[i]));
    b.adjoint() * weighted
}

/// `beta1`: smallest singular value of `A` restricted to `T`.
pub fn beta1<T: Field>(t: &Subspace<T>, s: &SampleSet, cap: usize) -> Result<f64> {
    let b = basis_matrix(t, cap)?;
    let scale = (s.n1() * s.n2()) as f64 / s.len() as f64;
    let gram = weighted_gram(&b, &(s.mask() * scale));
    let low = linalg::hermitian_eigenvalues(&gram)?.first().copied().unwrap_or(0.0);
    Ok(low.max(0.0).sqrt())
}

/// `||A P_{T^perp}||` by power iteration on `P_{T^perp} A* A P_{T^perp}`.
/// Returns the estimate and the iterations used.
pub fn sampled_complement_norm<T: Field, R: Rng + ?Sized>(
    t: &Subspace<T>,
    s: &SampleSet,
    tol: f64,
    max_iter: usize,
    rng: &mut R,
) -> Result<(f64, usize)> {
    let (n1, n2) = s.dims();
    let scale = (n1 * n2) as f64 / s.len() as f64;
    let mask = s.mask();
    let apply = |x: &Mat<T>| -> Mat<T> {
        let px = t.project_complement_unchecked(x);
        let sampled = Mat::from_fn(n1, n2, |k, l| px[(k, l)].scale(scale * mask[(k, l)]));
        t.project_complement_unchecked(&sampled)
    };
    let mut x = t.project_complement_unchecked(&gaussian_matrix(n1, n2, rng));
    let norm = x.norm();
    if norm == 0.0 {
        return Ok((0.0, 0));
    }
    x.unscale_mut(norm);
    let mut lambda = 0.0;
    for it in 1..=max_iter {
        let y = apply(&x);
        let next = inner(&x, &y).real();
        let ny = y.norm();
        if ny == 0.0 {
            return Ok((0.0, it));
        }
        x = y.unscale(ny);
        if it > 1 && (next - lambda).abs() <= tol * next {
            return Ok((next.max(0.0).sqrt(), it));
        }
        lambda = next;
    }
    Ok((lambda.max(0.0).sqrt(), max_iter))
}

/// All five certificate parameters for data `d`.
pub fn beta_report<T: Field, R: Rng + ?Sized>(
    t: &Subspace<T>,
    omega: f64,
    s: &SampleSet,
    d: &Mat<T>,
    opts: &CertifyOptions,
    rng: &mut R,
) -> Result<CertificateReport<T>> {
    check_setup(t, omega, s)?;
    let sign = sign_matrix(t, d, rng)?;
    let (y, z) = build_certificate(t, omega, s, &sign.g)?;

    let b1 = beta1(t, s, opts.dimension_cap)?;
    let (complement, power_iterations) = sampled_complement_norm(t, s, opts.power_tol, opts.power_max_iter, rng)?;
    let b2 = omega * complement;
    let b3 = (t.project_unchecked(&y) - &sign.g).norm();
    let b4 = linalg::operator_norm(&t.project_complement_unchecked(&y))?;
    let az = weight(t, omega, &z, false);
    let distinct = s.distinct();
    let b5 = distinct.normalized_apply(&az)?.norm() * (distinct.len() as f64 / s.len() as f64).sqrt();

    let condition = if b1 > 0.0 { b2 * b3 / b1 + b4 } else { f64::INFINITY };
    let consts = certificate_constants(b1, b2, b3, b4, b5);
    Ok(CertificateReport {
        beta1: b1,
        beta2: b2,
        beta3: b3,
        beta4: b4,
        beta5: b5,
        condition,
        c1: consts.map(|c| c.0),
        c2: consts.map(|c| c.1),
        g: sign.g,
        g_approximate: sign.approximate,
        y,
        z,
        power_iterations,
    })
}

/// `sup |<(Ã*Ã - I) X, X>|` over unit `X` in `T`, as the spectral norm of the
/// basis matrix of `Ã*Ã - I`.
pub fn concentration_stat<T: Field>(t: &Subspace<T>, s: &SampleSet, cap: usize) -> Result<f64> {
    if t.dims() != s.dims() {
        return Err(Error::dims(t.dims(), s.dims()));
    }
    let b = basis_matrix(t, cap)?;
    let scale = (s.n1() * s.n2()) as f64 / s.len() as f64;
    let mut h = weighted_gram(&b, &(s.multiplicities() * scale));
    for i in 0..h.nrows() {
        h[(i, i)] -= T::one();
    }
    let eig = linalg::hermitian_eigenvalues(&h)?;
    Ok(eig.iter().map(|v| v.abs()).fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BernsteinCheck {
    pub deviation: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Compare `||Ã*Ã(Z) - Z||` against the matrix Bernstein bound for a fixed `Z`.
pub fn bernstein_check<T: Field>(z: &Mat<T>, s: &SampleSet) -> Result<BernsteinCheck> {
    let applied = normalized_gram_apply(s, z)?;
    let deviation = linalg::operator_norm(&(applied - z))?;
    let (n1, n2) = (s.n1() as f64, s.n2() as f64);
    let m = s.len() as f64;
    let log = (n1 + n2).ln();
    let bound = 4.0 * n1 * n2 * log / (3.0 * m) * linalg::max_abs(z)
        + 2.0 * (2.0 * n1 * n2 * log / m).sqrt() * linalg::max_row_col_norm(z);
    Ok(BernsteinCheck {
        deviation,
        bound,
        holds: deviation <= bound,
    })
}

/// Inputs of the error bound; constants default to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorBoundInputs {
    pub omega: f64,
    pub m: usize,
    pub n1: usize,
    pub n2: usize,
    pub rho: usize,
    pub eta: f64,
    /// `sum_{k > rho} sigma_k(D)`.
    pub tail_nuclear: f64,
    /// `||P_{T^perp}(D_rho)||_*` for the best rank-`rho` part `D_rho`.
    pub pt_perp_nuclear: f64,
    pub constants: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorBound {
    pub f_omega: f64,
    pub tail_term: f64,
    pub noise_term: f64,
    pub mismatch_term: f64,
    pub total: f64,
}

fn bound_scales(inp: &ErrorBoundInputs) -> (f64, f64) {
    let (n1, n2, m) = (inp.n1 as f64, inp.n2 as f64, inp.m as f64);
    let root = (n1 * n2 * n1.ln() / m).sqrt();
    let f = (inp.omega * root).min(1.0);
    (root, f)
}

/// Right-hand side of the recovery error bound, term by term.
pub fn error_bound_rhs(inp: &ErrorBoundInputs) -> Result<ErrorBound> {
    validate_bound(inp)?;
    let (root, f) = bound_scales(inp);
    let [c1, c2, c3] = inp.constants;
    let w = inp.omega;
    let rho_root = (inp.n1 as f64 * inp.n2 as f64 * inp.rho as f64 * (inp.n1 as f64).ln() / inp.m as f64).sqrt();
    let tail_term = c1 * f * (root + 1.0 / w) * inp.tail_nuclear;
    let noise_term = c2 * f * (1.0 / w + root * (w * rho_root + 1.0)) * inp.eta;
    let mismatch_term = c3 * f * (1.0 / w + root) * inp.pt_perp_nuclear;
    Ok(ErrorBound {
        f_omega: f,
        tail_term,
        noise_term,
        mismatch_term,
        total: tail_term + noise_term + mismatch_term,
    })
}

/// Variant with the mismatch term `c3 f sin(theta_T) (1/w + root)
/// (n2 sum_{k <= rho} sigma_k^2)^{1/2}`.
pub fn error_bound_rhs_angle(inp: &ErrorBoundInputs, sin_theta_t: f64, head_sq_sum: f64) -> Result<ErrorBound> {
    let mut out = error_bound_rhs(inp)?;
    if !(0.0..=1.0).contains(&sin_theta_t) || !(head_sq_sum >= 0.0) {
        return Err(Error::param(
            "sin_theta_t",
            "expected a sine in [0, 1] and a non-negative energy",
        ));
    }
    let (root, f) = bound_scales(inp);
    out.mismatch_term =
        inp.constants[2] * f * sin_theta_t * (1.0 / inp.omega + root) * (inp.n2 as f64 * head_sq_sum).sqrt();
    out.total = out.tail_term + out.noise_term + out.mismatch_term;
    Ok(out)
}

fn validate_bound(inp: &ErrorBoundInputs) -> Result<()> {
    if !(inp.omega > 0.0 && inp.omega <= 1.0) {
        return Err(Error::param("omega", "must lie in (0, 1]"));
    }
    if inp.m == 0 || inp.n1 == 0 || inp.n2 == 0 || inp.rho == 0 {
        return Err(Error::param("m", "dimensions, m and rho must be positive"));
    }
    let nonneg = [inp.eta, inp.tail_nuclear, inp.pt_perp_nuclear];
    if nonneg.iter().chain(inp.constants.iter()).any(|v| !(*v >= 0.0)) {
        return Err(Error::param(
            "constants",
            "norms, eta and constants must be non-negative",
        ));
    }
    Ok(())
}

/// Euclidean norm of `Ã(X)` against `A(X)` on the distinct cells:
/// `(||Ã(X)||_2, ||A(X)||_2)`.
pub fn replacement_norms<T: Field>(s: &SampleSet, x: &Mat<T>) -> Result<(f64, f64)> {
    let scale = s.normalization();
    let with = s.apply(x)?.norm() * scale;
    let without = s.distinct().apply(x)?.norm() * scale;
    Ok((with, without))
}

/// Basis images used by tests and reports: `P_T(E_kl)` Frobenius norms.
pub fn projector_diagonal<T: Field>(t: &Subspace<T>) -> Vec<f64> {
    t.projector_diagonal().as_slice().to_vec()
}
