//! Nuclear norm and weighted nuclear norm minimization.
//!
//! The weighted program
//!
//! ```text
//! minimize ||w P_T(X) + P_{T^perp}(X)||_*   subject to ||b - P_Omega(X)||_2 <= eta
//! ```
//!
//! is solved through the substitution `Y = w P_T(X) + P_{T^perp}(X)`, which
//! turns it into
//!
//! ```text
//! minimize ||Y||_*   subject to ||w b - P_Omega(L Y)||_2 <= w eta,
//! L = P_T + w P_{T^perp},
//! ```
//!
//! with the estimate recovered as `L(Y) / w`. With `w = 1`, `L` is the identity
//! and this is plain nuclear norm minimization.
//!
//! Two algorithms are provided. [`Algorithm::AdmmSvt`] splits
//! `Y = w L^{-1}(E)`, `X = E` and alternates singular value thresholding on `Y`
//! with a projection of `X` onto the data ball; the `E` step inverts a
//! combination of `P_T` and the identity in closed form. Its estimate always
//! satisfies the constraint exactly. [`Algorithm::RegularizedContinuation`]
//! solves `lambda ||Y||_* + 1/2 ||c - P_Omega L Y||^2` by accelerated proximal
//! gradient along a decreasing `lambda` path and root-finds the `lambda` at
//! which the residual equals the noise level.

use alloc::vec::Vec;

#[allow(unused_imports)]
use nalgebra::ComplexField as _;
use nalgebra::DVector;

use crate::linalg::{self, Field, Mat};
use crate::sampling::SampleSet;
use crate::subspace::Subspace;
use crate::{Error, Result};

/// Smallest admissible weight; the recovery step divides by it.
pub const OMEGA_MIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    AdmmSvt,
    RegularizedContinuation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveConfig {
    pub omega: f64,
    pub eta: f64,
    pub algorithm: Algorithm,
    pub tol_primal: f64,
    pub tol_dual: f64,
    pub max_iter: usize,
    /// Initial ADMM penalty, relative to the data scale.
    pub rho_admm: f64,
    pub seed: u64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            omega: 1.0,
            eta: 0.0,
            algorithm: Algorithm::AdmmSvt,
            tol_primal: 1e-6,
            tol_dual: 1e-6,
            max_iter: 2000,
            rho_admm: 1.0,
            seed: 0,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega >= OMEGA_MIN && self.omega <= 1.0) {
            return Err(Error::param(
                "omega",
                alloc::format!("{} outside [{OMEGA_MIN}, 1]", self.omega),
            ));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::param("eta", "must be finite and non-negative"));
        }
        if !(self.tol_primal > 0.0 && self.tol_dual > 0.0) {
            return Err(Error::param("tol", "tolerances must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::param("max_iter", "must be at least 1"));
        }
        if !(self.rho_admm > 0.0 && self.rho_admm.is_finite()) {
            return Err(Error::param("rho_admm", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult<T: Field> {
    pub estimate: Mat<T>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Weighted nuclear norm of the estimate (plain nuclear norm when unweighted).
    pub objective: f64,
    /// `||P_Omega(estimate) - b||_2 - eta`.
    pub feasibility_gap: f64,
    pub converged: bool,
    /// Final regularization weight (continuation only).
    pub lambda: Option<f64>,
}

/// Singular value soft-thresholding, the proximal map of `tau ||.||_*`.
pub fn svt<T: Field>(x: &Mat<T>, tau: f64) -> Result<Mat<T>> {
    if !(tau >= 0.0) {
        return Err(Error::param("tau", "must be non-negative"));
    }
    Ok(svt_with_rank(x, tau)?.0)
}

fn svt_with_rank<T: Field>(x: &Mat<T>, tau: f64) -> Result<(Mat<T>, usize)> {
    let (n1, n2) = x.shape();
    if x.is_empty() {
        return Ok((x.clone(), 0));
    }
    let (u, singular_values, v_t) = crate::linalg::checked_svd(x)?;
    let keep: Vec<usize> = (0..singular_values.len())
        .filter(|&i| singular_values[i] > tau)
        .collect();
    if keep.is_empty() {
        return Ok((Mat::zeros(n1, n2), 0));
    }
    let mut us = Mat::<T>::zeros(n1, keep.len());
    let mut vt = Mat::<T>::zeros(keep.len(), n2);
    for (j, &i) in keep.iter().enumerate() {
        let s = singular_values[i] - tau;
        us.set_column(j, &(u.column(i) * T::from_real(s)));
        vt.set_row(j, &v_t.row(i));
    }
    Ok((us * vt, keep.len()))
}

/// The operator `L = P_T + w P_{T^perp}`, written as `w I + (1 - w) P_T` so
/// that `w = 1` is the identity exactly.
#[derive(Debug, Clone, Copy)]
struct Weighting<'a, T: Field> {
    subspace: Option<&'a Subspace<T>>,
    omega: f64,
}

impl<T: Field> Weighting<'_, T> {
    fn apply(&self, x: &Mat<T>) -> Mat<T> {
        self.combine(x, self.omega, 1.0 - self.omega)
    }

    fn apply_inverse(&self, x: &Mat<T>) -> Mat<T> {
        let inv = 1.0 / self.omega;
        self.combine(x, inv, 1.0 - inv)
    }

    /// `(I + W^2)^{-1}` for the penalty map `W`.
    fn normal_inverse(&self, x: &Mat<T>) -> Mat<T> {
        let on = 1.0 / (1.0 + self.omega * self.omega);
        self.combine(x, 0.5, on - 0.5)
    }

    /// `a x + c P_T(x)`.
    fn combine(&self, x: &Mat<T>, a: f64, c: f64) -> Mat<T> {
        let mut out = x * T::from_real(a);
        if let Some(t) = self.subspace {
            if c != 0.0 {
                out += t.project_unchecked(x) * T::from_real(c);
            }
        }
        out
    }

    /// `w P_T(x) + P_{T^perp}(x) = w L^{-1}(x)`.
    fn penalty_map(&self, x: &Mat<T>) -> Mat<T> {
        self.combine(x, 1.0, self.omega - 1.0)
    }
}

/// `P_T(X) + w P_{T^perp}(X)`.
pub fn weight_map<T: Field>(t: &Subspace<T>, omega: f64, x: &Mat<T>) -> Result<Mat<T>> {
    check_omega(omega)?;
    t.project(x)?;
    Ok(Weighting {
        subspace: Some(t),
        omega,
    }
    .apply(x))
}

/// `P_T(X) + w^{-1} P_{T^perp}(X)`.
pub fn weight_map_inverse<T: Field>(t: &Subspace<T>, omega: f64, x: &Mat<T>) -> Result<Mat<T>> {
    check_omega(omega)?;
    t.project(x)?;
    Ok(Weighting {
        subspace: Some(t),
        omega,
    }
    .apply_inverse(x))
}

/// Weighted nuclear norm `||w P_T(X) + P_{T^perp}(X)||_*`.
pub fn weighted_nuclear_norm<T: Field>(t: &Subspace<T>, omega: f64, x: &Mat<T>) -> Result<f64> {
    check_omega(omega)?;
    t.project(x)?;
    linalg::nuclear_norm(
        &Weighting {
            subspace: Some(t),
            omega,
        }
        .penalty_map(x),
    )
}

fn check_omega(omega: f64) -> Result<()> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::param("omega", "must be positive"));
    }
    Ok(())
}

fn check_problem<T: Field>(s: &SampleSet, b: &DVector<T>, cfg: &SolveConfig) -> Result<()> {
    cfg.validate()?;
    if s.with_replacement() {
        return Err(Error::param(
            "samples",
            "the solvers take a set without replacement; use SampleSet::distinct",
        ));
    }
    if b.len() != s.len() {
        return Err(Error::dims((s.len(), 1), (b.len(), 1)));
    }
    if s.is_empty() {
        return Err(Error::param("samples", "no observations"));
    }
    if !b.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite {
            context: "observations",
        });
    }
    Ok(())
}

/// Minimize `||X||_*` subject to `||b - P_Omega(X)||_2 <= eta`.
pub fn solve_nnm<T: Field>(s: &SampleSet, b: &DVector<T>, cfg: &SolveConfig) -> Result<SolveResult<T>> {
    let cfg = SolveConfig { omega: 1.0, ..*cfg };
    check_problem(s, b, &cfg)?;
    solve_reformulated(
        Weighting {
            subspace: None,
            omega: 1.0,
        },
        s,
        b,
        &cfg,
    )
}

/// Weighted program with prior subspace `t` and weight `cfg.omega`.
pub fn solve_weighted<T: Field>(
    t: &Subspace<T>,
    s: &SampleSet,
    b: &DVector<T>,
    cfg: &SolveConfig,
) -> Result<SolveResult<T>> {
    check_problem(s, b, cfg)?;
    if t.dims() != s.dims() {
        return Err(Error::dims(s.dims(), t.dims()));
    }
    solve_reformulated(
        Weighting {
            subspace: Some(t),
            omega: cfg.omega,
        },
        s,
        b,
        cfg,
    )
}

fn solve_reformulated<T: Field>(
    w: Weighting<'_, T>,
    s: &SampleSet,
    b: &DVector<T>,
    cfg: &SolveConfig,
) -> Result<SolveResult<T>> {
    let (estimate, iterations, primal, dual, converged, lambda) = match cfg.algorithm {
        Algorithm::AdmmSvt => {
            let out = admm(&w, s, b, cfg.eta, cfg)?;
            (out.x, out.iterations, out.primal, out.dual, out.converged, None)
        }
        Algorithm::RegularizedContinuation => {
            let omega = w.omega;
            let c = b.map(|v| v.scale(omega));
            let out = continuation(&w, s, &c, omega * cfg.eta, cfg)?;
            let estimate = w.apply(&out.y).unscale(omega);
            (
                estimate,
                out.iterations,
                out.residual,
                0.0,
                out.converged,
                Some(out.lambda),
            )
        }
    };
    finish(w, s, b, cfg.eta, estimate, iterations, primal, dual, converged, lambda)
}

#[allow(clippy::too_many_arguments)]
fn finish<T: Field>(
    w: Weighting<'_, T>,
    s: &SampleSet,
    b: &DVector<T>,
    eta: f64,
    estimate: Mat<T>,
    iterations: usize,
    primal_residual: f64,
    dual_residual: f64,
    converged: bool,
    lambda: Option<f64>,
) -> Result<SolveResult<T>> {
    linalg::check_finite(&estimate, "solver estimate")?;
    let objective = linalg::nuclear_norm(&w.penalty_map(&estimate))?;
    let resid = (s.apply(&estimate)? - b).norm();
    Ok(SolveResult {
        estimate,
        iterations,
        primal_residual,
        dual_residual,
        objective,
        feasibility_gap: resid - eta,
        converged,
        lambda,
    })
}

/// Project `x` onto `{X : ||c - P_Omega X||_2 <= eps}` in place.
fn project_data_ball<T: Field>(x: &mut Mat<T>, idx: &[(usize, usize)], c: &DVector<T>, eps: f64) {
    if eps == 0.0 {
        for (&(k, l), v) in idx.iter().zip(c.iter()) {
            x[(k, l)] = *v;
        }
        return;
    }
    let dist: f64 = idx
        .iter()
        .zip(c.iter())
        .map(|(&(k, l), v)| (x[(k, l)] - *v).modulus_squared())
        .sum::<f64>()
        .sqrt();
    if dist <= eps {
        return;
    }
    let shrink = eps / dist;
    for (&(k, l), v) in idx.iter().zip(c.iter()) {
        x[(k, l)] = *v + (x[(k, l)] - *v).scale(shrink);
    }
}

struct AdmmOutput<T: Field> {
    x: Mat<T>,
    iterations: usize,
    primal: f64,
    dual: f64,
    converged: bool,
}

const RELAX: f64 = 1.6;
const BALANCE_RATIO: f64 = 10.0;
const BALANCE_STEP: f64 = 2.0;

/// ADMM for `min ||Y||_* s.t. Y = W(E), E in C` with `W = w P_T + P_{T^perp}`
/// and `C` the data ball of radius `eta` around `b`. `Y` is the substituted
/// variable; the penalty on `X = E` is measured in the original coordinates,
/// which keeps the iteration well scaled for small weights.
fn admm<T: Field>(
    w: &Weighting<'_, T>,
    s: &SampleSet,
    b: &DVector<T>,
    eta: f64,
    cfg: &SolveConfig,
) -> Result<AdmmOutput<T>> {
    let (n1, n2) = s.dims();
    let idx = s.indices();
    let b_norm = b.norm();

    // Zero is feasible and optimal.
    if b_norm <= eta {
        return Ok(AdmmOutput {
            x: Mat::zeros(n1, n2),
            iterations: 0,
            primal: 0.0,
            dual: 0.0,
            converged: true,
        });
    }

    let zero = Mat::<T>::zeros(n1, n2);
    let mut data = zero.clone();
    for (&(k, l), v) in idx.iter().zip(b.iter()) {
        data[(k, l)] = *v;
    }
    // Start with thresholds of the order of the data spectrum.
    let scale = linalg::operator_norm(&data)?.max(f64::MIN_POSITIVE);
    let mut beta = cfg.rho_admm / scale;

    let mut e = zero.clone();
    let mut we = zero.clone();
    let mut u1 = zero.clone();
    let mut u2 = zero;
    let mut x = data;
    let abs_tol = 1e-14 * b_norm * ((n1 * n2) as f64).sqrt();

    let mut primal = f64::INFINITY;
    let mut dual = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=cfg.max_iter {
        iterations = it;
        let y = svt_with_rank(&(&we - &u1), 1.0 / beta)?.0;
        x = &e - &u2;
        project_data_ball(&mut x, idx, b, eta);

        let y_hat = &y * T::from_real(RELAX) + &we * T::from_real(1.0 - RELAX);
        let x_hat = &x * T::from_real(RELAX) + &e * T::from_real(1.0 - RELAX);

        let rhs = w.penalty_map(&(&y_hat + &u1)) + &x_hat + &u2;
        let e_new = w.normal_inverse(&rhs);
        let we_new = w.penalty_map(&e_new);

        u1 += &y_hat - &we_new;
        u2 += &x_hat - &e_new;

        primal = ((&y - &we_new).norm_squared() + (&x - &e_new).norm_squared()).sqrt();
        dual = beta * ((&we_new - &we).norm_squared() + (&e_new - &e).norm_squared()).sqrt();

        e = e_new;
        we = we_new;

        let primal_scale = (y.norm_squared() + x.norm_squared())
            .sqrt()
            .max((we.norm_squared() + e.norm_squared()).sqrt());
        let dual_scale = beta * (u1.norm_squared() + u2.norm_squared()).sqrt();
        if it > 1 && primal <= abs_tol + cfg.tol_primal * primal_scale && dual <= abs_tol + cfg.tol_dual * dual_scale {
            converged = true;
            break;
        }

        if primal > BALANCE_RATIO * dual {
            beta *= BALANCE_STEP;
            u1.unscale_mut(BALANCE_STEP);
            u2.unscale_mut(BALANCE_STEP);
        } else if dual > BALANCE_RATIO * primal {
            beta /= BALANCE_STEP;
            u1 *= T::from_real(BALANCE_STEP);
            u2 *= T::from_real(BALANCE_STEP);
        }
    }

    Ok(AdmmOutput {
        x,
        iterations,
        primal,
        dual,
        converged,
    })
}

struct PathOutput<T: Field> {
    y: Mat<T>,
    iterations: usize,
    residual: f64,
    lambda: f64,
    converged: bool,
}

/// Accelerated proximal gradient on `lambda ||Y||_* + 1/2 ||c - P_Omega L Y||^2`
/// from `start`. `||P_Omega L|| <= 1`, so unit steps are admissible.
fn fista<T: Field>(
    w: &Weighting<'_, T>,
    idx: &[(usize, usize)],
    data: &Mat<T>,
    lambda: f64,
    start: Mat<T>,
    tol: f64,
    max_iter: usize,
) -> Result<(Mat<T>, usize, bool)> {
    let mut y = start;
    let mut z = y.clone();
    let mut t_k = 1.0_f64;
    for it in 1..=max_iter {
        let lz = w.apply(&z);
        let mut resid = Mat::<T>::zeros(data.nrows(), data.ncols());
        for &(k, l) in idx {
            resid[(k, l)] = data[(k, l)] - lz[(k, l)];
        }
        let step = &z + w.apply(&resid);
        let y_new = svt_with_rank(&step, lambda)?.0;

        let change = (&y_new - &y).norm();
        let size = y_new.norm().max(y.norm()).max(f64::MIN_POSITIVE);

        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t_k * t_k).sqrt());
        // adaptive restart when momentum points uphill
        let uphill = linalg::inner(&(&z - &y_new), &(&y_new - &y)).real() > 0.0;
        if uphill {
            t_k = 1.0;
            z = y_new.clone();
        } else {
            let mom = (t_k - 1.0) / t_next;
            z = &y_new + (&y_new - &y) * T::from_real(mom);
            t_k = t_next;
        }
        y = y_new;
        if change <= tol * size {
            return Ok((y, it, true));
        }
    }
    Ok((y, max_iter, false))
}

fn data_residual<T: Field>(w: &Weighting<'_, T>, idx: &[(usize, usize)], data: &Mat<T>, y: &Mat<T>) -> f64 {
    let ly = w.apply(y);
    idx.iter()
        .map(|&(k, l)| (data[(k, l)] - ly[(k, l)]).modulus_squared())
        .sum::<f64>()
        .sqrt()
}

const MAX_STAGES: usize = 80;
const ROOT_STEPS: usize = 40;

fn continuation<T: Field>(
    w: &Weighting<'_, T>,
    s: &SampleSet,
    c: &DVector<T>,
    eps: f64,
    cfg: &SolveConfig,
) -> Result<PathOutput<T>> {
    let (n1, n2) = s.dims();
    let idx = s.indices();
    let mut data = Mat::<T>::zeros(n1, n2);
    for (&(k, l), v) in idx.iter().zip(c.iter()) {
        data[(k, l)] = *v;
    }
    let c_norm = c.norm();
    let lambda0 = linalg::operator_norm(&w.apply(&data))?;
    if c_norm <= eps || lambda0 == 0.0 {
        return Ok(PathOutput {
            y: Mat::zeros(n1, n2),
            iterations: 0,
            residual: c_norm,
            lambda: lambda0,
            converged: true,
        });
    }
    let inner_tol = cfg.tol_primal.min(cfg.tol_dual) * 1e-2;
    let target_tol = cfg.tol_primal * c_norm;
    let mut total = 0;
    let mut all_converged = true;

    let mut hi = (lambda0, Mat::<T>::zeros(n1, n2), c_norm);
    let mut lambda = lambda0;
    let mut y = hi.1.clone();
    let mut bracket = None;
    for _ in 0..MAX_STAGES {
        lambda *= 0.5;
        let (y_new, its, ok) = fista(w, idx, &data, lambda, y.clone(), inner_tol, cfg.max_iter)?;
        total += its;
        all_converged &= ok;
        y = y_new;
        let res = data_residual(w, idx, &data, &y);
        if eps == 0.0 {
            if res <= target_tol {
                return Ok(PathOutput {
                    y,
                    iterations: total,
                    residual: res,
                    lambda,
                    converged: all_converged,
                });
            }
        } else if res <= eps {
            bracket = Some(((lambda, y.clone(), res), hi.clone()));
            break;
        }
        hi = (lambda, y.clone(), res);
    }

    let Some((mut lo, mut hi)) = bracket else {
        let residual = data_residual(w, idx, &data, &y);
        return Ok(PathOutput {
            y,
            iterations: total,
            residual,
            lambda,
            converged: false,
        });
    };

    // residual(lambda) is non-decreasing: lo has res <= eps, hi has res > eps.
    for _ in 0..ROOT_STEPS {
        if (lo.2 - eps).abs() <= target_tol {
            break;
        }
        let (l_lo, l_hi) = (lo.0.ln(), hi.0.ln());
        let secant = l_lo + (eps - lo.2) * (l_hi - l_lo) / (hi.2 - lo.2);
        let mid = 0.5 * (l_lo + l_hi);
        // keep secant steps away from the bracket ends
        let guess = if secant.is_finite() {
            secant.clamp(l_lo + 0.1 * (l_hi - l_lo), l_hi - 0.1 * (l_hi - l_lo))
        } else {
            mid
        };
        let lam = guess.exp();
        let (y_new, its, ok) = fista(w, idx, &data, lam, lo.1.clone(), inner_tol, cfg.max_iter)?;
        total += its;
        all_converged &= ok;
        let res = data_residual(w, idx, &data, &y_new);
        if res <= eps {
            lo = (lam, y_new, res);
        } else {
            hi = (lam, y_new, res);
        }
    }
    let converged = all_converged && (lo.2 - eps).abs() <= target_tol;
    Ok(PathOutput {
        residual: lo.2,
        y: lo.1,
        iterations: total,
        lambda: lo.0,
        converged,
    })
}

/// Minimize `lambda ||w P_T(X) + P_{T^perp}(X)||_* + 1/2 ||b - P_Omega(X)||^2`
/// through the substituted variable; the reformulated weight is `w^2 lambda`.
pub fn solve_penalized<T: Field>(
    t: Option<&Subspace<T>>,
    s: &SampleSet,
    b: &DVector<T>,
    lambda: f64,
    cfg: &SolveConfig,
) -> Result<SolveResult<T>> {
    check_problem(s, b, cfg)?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::param("lambda", "must be positive"));
    }
    let omega = if t.is_some() { cfg.omega } else { 1.0 };
    let w = Weighting { subspace: t, omega };
    let (n1, n2) = s.dims();
    let mut data = Mat::<T>::zeros(n1, n2);
    for (&(k, l), v) in s.indices().iter().zip(b.iter()) {
        data[(k, l)] = v.scale(omega);
    }
    let (y, its, ok) = fista(
        &w,
        s.indices(),
        &data,
        omega * omega * lambda,
        Mat::zeros(n1, n2),
        cfg.tol_primal,
        cfg.max_iter,
    )?;
    let residual = data_residual(&w, s.indices(), &data, &y);
    let estimate = w.apply(&y).unscale(omega);
    finish(w, s, b, 0.0, estimate, its, residual, 0.0, ok, Some(lambda))
}

/// Observed entries of `d` in the order of `s`.
pub fn observe<T: Field>(s: &SampleSet, d: &Mat<T>) -> Result<DVector<T>> {
    s.apply(d)
}
