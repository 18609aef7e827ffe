//! Prior subspaces `T` of `n1 x n2` matrices.
//!
//! Four structured families are built from factor estimates `U` (`n1 x r`) and
//! `V` (`n2 x r`):
//!
//! | kind | elements | projection |
//! |------|----------|------------|
//! | T1 | `sum_k c_k U_k V_k^H` | `U diag(U^H X V) V^H` |
//! | T2 | `U C V^H` | `U U^H X V V^H` |
//! | T3 | `U W^H` | `U U^H X` |
//! | T4 | `U A^H + B V^H` | `X - (I - UU^H) X (I - VV^H)` |
//!
//! plus an arbitrary span, orthonormalized in the trace inner product.

use alloc::vec::Vec;

#[allow(unused_imports)]
use nalgebra::ComplexField as _;
use nalgebra::DMatrix;
use rand::Rng;

use crate::incoherence::{factor_coherence, IncoherenceReport};
use crate::linalg::{self, inner, orthonormal_complement, require_orthonormal, row_norms_sq, Field, Mat};
use crate::random::gaussian_matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SubspaceKind {
    T1,
    T2,
    T3,
    T4,
    Generic,
}

impl SubspaceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SubspaceKind::T1 => "T1",
            SubspaceKind::T2 => "T2",
            SubspaceKind::T3 => "T3",
            SubspaceKind::T4 => "T4",
            SubspaceKind::Generic => "generic",
        }
    }
}

impl core::fmt::Display for SubspaceKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Repr<T: Field> {
    PairedDyads { u: Mat<T>, v: Mat<T> },
    OuterGrid { u: Mat<T>, v: Mat<T> },
    ColumnSpace { u: Mat<T> },
    Complement4 { u: Mat<T>, v: Mat<T> },
    GenericSpan { basis: Vec<Mat<T>> },
}

/// A subspace `T` with its declared maximal rank `rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace<T: Field> {
    repr: Repr<T>,
    n1: usize,
    n2: usize,
    rho: usize,
}

/// Subspace incoherence summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubspaceIncoherence {
    pub m0_lower: f64,
    pub m0_upper: f64,
    pub m1_exact: f64,
    /// `None` for generic spans.
    pub m1_paper: Option<(f64, f64)>,
}

fn check_pair<T: Field>(u: &Mat<T>, v: &Mat<T>) -> Result<()> {
    if u.ncols() != v.ncols() {
        return Err(Error::dims((v.nrows(), u.ncols()), v.shape()));
    }
    let r = u.ncols();
    let max = u.nrows().min(v.nrows());
    if r == 0 || r > max {
        return Err(Error::RankOutOfRange { rank: r, max });
    }
    require_orthonormal(u, 1e-10)?;
    require_orthonormal(v, 1e-10)
}

impl<T: Field> Subspace<T> {
    /// T1: span of the `r` dyads `U_k V_k^H`.
    pub fn paired_dyads(u: Mat<T>, v: Mat<T>) -> Result<Self> {
        check_pair(&u, &v)?;
        let (n1, n2, rho) = (u.nrows(), v.nrows(), u.ncols());
        Ok(Subspace {
            repr: Repr::PairedDyads { u, v },
            n1,
            n2,
            rho,
        })
    }

    /// T2: matrices `U C V^H`.
    pub fn outer_grid(u: Mat<T>, v: Mat<T>) -> Result<Self> {
        check_pair(&u, &v)?;
        let (n1, n2, rho) = (u.nrows(), v.nrows(), u.ncols());
        Ok(Subspace {
            repr: Repr::OuterGrid { u, v },
            n1,
            n2,
            rho,
        })
    }

    /// T3: matrices `U W^H` with `W` any `n2 x r`.
    pub fn column_space(u: Mat<T>, n2: usize) -> Result<Self> {
        let r = u.ncols();
        if r == 0 || r > u.nrows().min(n2) {
            return Err(Error::RankOutOfRange {
                rank: r,
                max: u.nrows().min(n2),
            });
        }
        require_orthonormal(&u, 1e-10)?;
        let n1 = u.nrows();
        Ok(Subspace {
            repr: Repr::ColumnSpace { u },
            n1,
            n2,
            rho: r,
        })
    }

    /// T4: matrices `U A^H + B V^H`. Declared `rho` is `r` although elements
    /// reach rank `min(2r, n1, n2)`; see [`Subspace::measured_max_rank`].
    pub fn complement4(u: Mat<T>, v: Mat<T>) -> Result<Self> {
        check_pair(&u, &v)?;
        let (n1, n2, rho) = (u.nrows(), v.nrows(), u.ncols());
        Ok(Subspace {
            repr: Repr::Complement4 { u, v },
            n1,
            n2,
            rho,
        })
    }

    /// Span of arbitrary `n1 x n2` matrices with declared maximal rank `rho`.
    ///
    /// The elements are orthonormalized by two-pass Gram-Schmidt; an element
    /// whose residual is below `1e-10` of its norm is reported as dependent.
    pub fn generic_span(n1: usize, n2: usize, elements: Vec<Mat<T>>, rho: usize) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::param("elements", "empty spanning set"));
        }
        if rho == 0 || rho > n1.min(n2) {
            return Err(Error::RankOutOfRange {
                rank: rho,
                max: n1.min(n2),
            });
        }
        let mut basis: Vec<Mat<T>> = Vec::with_capacity(elements.len());
        for (index, mut x) in elements.into_iter().enumerate() {
            if x.shape() != (n1, n2) {
                return Err(Error::dims((n1, n2), x.shape()));
            }
            linalg::check_finite(&x, "spanning element")?;
            let norm0 = x.norm();
            for _ in 0..2 {
                for b in &basis {
                    let c = inner(b, &x);
                    x -= b * c;
                }
            }
            let norm = x.norm();
            if norm0 == 0.0 || norm <= 1e-10 * norm0 {
                return Err(Error::RankDeficientSpan { index });
            }
            basis.push(x.unscale(norm));
        }
        Ok(Subspace {
            repr: Repr::GenericSpan { basis },
            n1,
            n2,
            rho,
        })
    }

    pub fn kind(&self) -> SubspaceKind {
        match self.repr {
            Repr::PairedDyads { .. } => SubspaceKind::T1,
            Repr::OuterGrid { .. } => SubspaceKind::T2,
            Repr::ColumnSpace { .. } => SubspaceKind::T3,
            Repr::Complement4 { .. } => SubspaceKind::T4,
            Repr::GenericSpan { .. } => SubspaceKind::Generic,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n1, self.n2)
    }

    pub fn rho(&self) -> usize {
        self.rho
    }

    pub fn left_factor(&self) -> Option<&Mat<T>> {
        match &self.repr {
            Repr::PairedDyads { u, .. }
            | Repr::OuterGrid { u, .. }
            | Repr::ColumnSpace { u }
            | Repr::Complement4 { u, .. } => Some(u),
            Repr::GenericSpan { .. } => None,
        }
    }

    pub fn right_factor(&self) -> Option<&Mat<T>> {
        match &self.repr {
            Repr::PairedDyads { v, .. } | Repr::OuterGrid { v, .. } | Repr::Complement4 { v, .. } => Some(v),
            _ => None,
        }
    }

    /// Generic-span basis, if this is one.
    pub fn span_basis(&self) -> Option<&[Mat<T>]> {
        match &self.repr {
            Repr::GenericSpan { basis } => Some(basis),
            _ => None,
        }
    }

    /// Dimension of `T` as a vector space.
    pub fn dim(&self) -> usize {
        let (n1, n2) = (self.n1, self.n2);
        match &self.repr {
            Repr::PairedDyads { u, .. } => u.ncols(),
            Repr::OuterGrid { u, .. } => u.ncols() * u.ncols(),
            Repr::ColumnSpace { u } => u.ncols() * n2,
            Repr::Complement4 { u, .. } => {
                let r = u.ncols();
                n1 * r + n2 * r - r * r
            }
            Repr::GenericSpan { basis } => basis.len(),
        }
    }

    fn check<S: Field>(&self, x: &Mat<S>) -> Result<()> {
        if x.shape() != (self.n1, self.n2) {
            return Err(Error::dims((self.n1, self.n2), x.shape()));
        }
        Ok(())
    }

    /// `P_T(X)`.
    pub fn project(&self, x: &Mat<T>) -> Result<Mat<T>> {
        self.check(x)?;
        Ok(self.project_unchecked(x))
    }

    pub(crate) fn project_unchecked(&self, x: &Mat<T>) -> Mat<T> {
        match &self.repr {
            Repr::PairedDyads { u, v } => {
                let xv = x * v;
                let mut uc = u.clone();
                for k in 0..u.ncols() {
                    let c = u.column(k).dotc(&xv.column(k));
                    uc.column_mut(k).iter_mut().for_each(|e| *e *= c);
                }
                uc * v.adjoint()
            }
            Repr::OuterGrid { u, v } => {
                let core = u.adjoint() * x * v;
                u * core * v.adjoint()
            }
            Repr::ColumnSpace { u } => u * (u.adjoint() * x),
            Repr::Complement4 { u, v } => x - perp_both(u, v, x),
            Repr::GenericSpan { basis } => {
                let mut out = Mat::zeros(self.n1, self.n2);
                for b in basis {
                    out += b * inner(b, x);
                }
                out
            }
        }
    }

    /// `P_{T^perp}(X) = X - P_T(X)`.
    pub fn project_complement(&self, x: &Mat<T>) -> Result<Mat<T>> {
        self.check(x)?;
        Ok(self.project_complement_unchecked(x))
    }

    pub(crate) fn project_complement_unchecked(&self, x: &Mat<T>) -> Mat<T> {
        match &self.repr {
            Repr::Complement4 { u, v } => perp_both(u, v, x),
            _ => x - self.project_unchecked(x),
        }
    }

    /// Orthonormal basis of `T` in the trace inner product. T4 needs a basis of
    /// the orthogonal complement of `range(U)`, so this allocates
    /// `dim(T)` full matrices.
    pub fn basis(&self) -> Result<Vec<Mat<T>>> {
        let (n1, n2) = (self.n1, self.n2);
        let dyad = |a: nalgebra::DVectorView<'_, T>, b: nalgebra::DVectorView<'_, T>| -> Mat<T> { a * b.adjoint() };
        let unit = |n: usize, i: usize| -> nalgebra::DVector<T> {
            let mut e = nalgebra::DVector::zeros(n);
            e[i] = T::one();
            e
        };
        Ok(match &self.repr {
            Repr::PairedDyads { u, v } => (0..u.ncols()).map(|k| dyad(u.column(k), v.column(k))).collect(),
            Repr::OuterGrid { u, v } => {
                let mut out = Vec::with_capacity(u.ncols() * v.ncols());
                for i in 0..u.ncols() {
                    for j in 0..v.ncols() {
                        out.push(dyad(u.column(i), v.column(j)));
                    }
                }
                out
            }
            Repr::ColumnSpace { u } => {
                let mut out = Vec::with_capacity(u.ncols() * n2);
                for i in 0..u.ncols() {
                    for l in 0..n2 {
                        let e = unit(n2, l);
                        out.push(dyad(u.column(i), e.column(0)));
                    }
                }
                out
            }
            Repr::Complement4 { u, v } => {
                let r = u.ncols();
                let u_perp = orthonormal_complement(u)?;
                let mut out = Vec::with_capacity(self.dim());
                for i in 0..r {
                    for l in 0..n2 {
                        let e = unit(n2, l);
                        out.push(dyad(u.column(i), e.column(0)));
                    }
                }
                for a in 0..u_perp.ncols() {
                    for j in 0..r {
                        out.push(dyad(u_perp.column(a), v.column(j)));
                    }
                }
                debug_assert_eq!(out.len(), n1 * r + n2 * r - r * r);
                out
            }
            Repr::GenericSpan { basis } => basis.clone(),
        })
    }

    /// `||P_T(E_kl)||_F^2` for every cell, i.e. the diagonal of `P_T` in the
    /// canonical basis.
    pub fn projector_diagonal(&self) -> DMatrix<f64> {
        let (n1, n2) = (self.n1, self.n2);
        let rows = |q: &Mat<T>| row_norms_sq(q);
        match &self.repr {
            Repr::PairedDyads { u, v } => {
                let u_sq = u.map(|x| x.modulus_squared());
                let v_sq = v.map(|x| x.modulus_squared());
                u_sq * v_sq.transpose()
            }
            Repr::OuterGrid { u, v } => {
                let a = rows(u);
                let b = rows(v);
                DMatrix::from_fn(n1, n2, |k, l| a[k] * b[l])
            }
            Repr::ColumnSpace { u } => {
                let a = rows(u);
                DMatrix::from_fn(n1, n2, |k, _| a[k])
            }
            Repr::Complement4 { u, v } => {
                let a = rows(u);
                let b = rows(v);
                DMatrix::from_fn(n1, n2, |k, l| 1.0 - (1.0 - a[k]) * (1.0 - b[l]))
            }
            Repr::GenericSpan { basis } => {
                let mut d = DMatrix::zeros(n1, n2);
                for b in basis {
                    d += b.map(|x| x.modulus_squared());
                }
                d
            }
        }
    }

    /// `M1 = (n1 n2 / rho) max_{kl} ||P_T(E_kl)||_F^2`.
    ///
    /// The largest `|X_kl|` over unit-Frobenius `X` in `T` is
    /// `||P_T(E_kl)||_F`, so this is exact.
    pub fn m1_exact(&self) -> f64 {
        let scale = (self.n1 * self.n2) as f64 / self.rho as f64;
        scale * self.projector_diagonal().max()
    }

    /// Closed-form bracket on `M1` in terms of the incoherence of the factors.
    pub fn m1_paper_bounds(&self) -> Result<(f64, f64)> {
        let (n1, n2) = (self.n1 as f64, self.n2 as f64);
        match &self.repr {
            Repr::PairedDyads { u, v } => {
                let rep = IncoherenceReport::from_factors(u, v)?;
                Ok((rep.mu1, rep.mu1))
            }
            Repr::OuterGrid { u, v } => {
                let r = u.ncols() as f64;
                let p = factor_coherence(u) * factor_coherence(v) * r;
                Ok((p, p))
            }
            Repr::ColumnSpace { u } => {
                let mu_l = factor_coherence(u);
                Ok((mu_l * n2 / n1, mu_l * n2))
            }
            Repr::Complement4 { u, v } => {
                let rep = IncoherenceReport::from_factors(u, v)?;
                let r = u.ncols() as f64;
                let (mu0, mu2) = (rep.mu0, rep.mu2);
                let lower = n1 - mu2 * r;
                let upper = mu0 * mu0 * r + mu0 * (n1 - mu2 * r) + mu0 * (n2 - mu2 * r);
                Ok((lower, upper))
            }
            Repr::GenericSpan { .. } => Err(Error::Unsupported(
                "no closed-form M1 bracket for a generic span; use m1_exact",
            )),
        }
    }

    /// Certified bracket on `M0 = (n2 / rho) max ||X||_{inf,2}^2` over
    /// `X` in `T` with `||X|| <= 1`.
    ///
    /// The lower end is the exact maximum over the Frobenius ball (contained in
    /// the operator ball). Elements of rank at most `k` satisfy
    /// `||X||_F <= sqrt(k) ||X||`, giving `k` times the lower end as an upper
    /// bound; `||X||_{inf,2} <= ||X||` caps it at `n2 / rho`. For T1 and T2,
    /// elements are `U C V^H` with `||C|| <= 1`, so rows and columns are bounded
    /// by those of `U` and `V`.
    pub fn m0_bracket(&self) -> Result<(f64, f64)> {
        let (n1, n2) = (self.n1, self.n2);
        let scale = n2 as f64 / self.rho as f64;
        let max_sq = |v: &Mat<T>| -> f64 { v.iter().map(|x| x.modulus_squared()).fold(0.0, f64::max) };
        let max_row = |q: &Mat<T>| row_norms_sq(q).into_iter().fold(0.0, f64::max);
        let (lower, max_rank) = match &self.repr {
            Repr::PairedDyads { u, v } => (scale * max_sq(u).max(max_sq(v)), u.ncols()),
            Repr::OuterGrid { u, v } => (scale * max_row(u).max(max_row(v)), u.ncols()),
            Repr::ColumnSpace { u } => (scale, u.ncols()),
            Repr::Complement4 { u, .. } => (scale, (2 * u.ncols()).min(n1).min(n2)),
            Repr::GenericSpan { basis } => {
                let d = basis.len();
                let mut best: f64 = 0.0;
                for k in 0..n1 {
                    let m = Mat::<T>::from_fn(n2, d, |l, i| basis[i][(k, l)]);
                    best = best.max(linalg::operator_norm(&m)?.powi(2));
                }
                for l in 0..n2 {
                    let m = Mat::<T>::from_fn(n1, d, |k, i| basis[i][(k, l)]);
                    best = best.max(linalg::operator_norm(&m)?.powi(2));
                }
                (scale * best, self.rho)
            }
        };
        let mut upper = (lower * max_rank as f64).min(scale);
        if let Repr::PairedDyads { u, v } | Repr::OuterGrid { u, v } = &self.repr {
            upper = upper.min(scale * max_row(u).max(max_row(v)));
        }
        Ok((lower, upper.max(lower)))
    }

    pub fn incoherence(&self) -> Result<SubspaceIncoherence> {
        let (m0_lower, m0_upper) = self.m0_bracket()?;
        let m1_paper = match self.kind() {
            SubspaceKind::Generic => None,
            _ => Some(self.m1_paper_bounds()?),
        };
        Ok(SubspaceIncoherence {
            m0_lower,
            m0_upper,
            m1_exact: self.m1_exact(),
            m1_paper,
        })
    }

    /// Largest numerical rank seen over `samples` random elements of `T`.
    pub fn measured_max_rank<R: Rng + ?Sized>(&self, samples: usize, rng: &mut R) -> Result<usize> {
        let mut best = 0;
        for _ in 0..samples.max(1) {
            let g: Mat<T> = gaussian_matrix(self.n1, self.n2, rng);
            let x = self.project_unchecked(&g);
            let s = linalg::singular_values(&x)?;
            let tol = 1e-10 * s.get(0).copied().unwrap_or(0.0);
            best = best.max(s.iter().filter(|&&v| v > tol).count());
        }
        Ok(best)
    }

    /// `||P_{T^perp} P_{T_rho}||` from the Gram matrix of the projected basis of
    /// `t_rho`.
    pub fn sin_theta_t(&self, t_rho: &Subspace<T>) -> Result<f64> {
        if t_rho.dims() != self.dims() {
            return Err(Error::dims(self.dims(), t_rho.dims()));
        }
        let basis = t_rho.basis()?;
        let perp: Vec<Mat<T>> = basis.iter().map(|b| self.project_complement_unchecked(b)).collect();
        let d = perp.len();
        let gram = Mat::<T>::from_fn(d, d, |i, j| inner(&perp[i], &perp[j]));
        let top = linalg::hermitian_eigenvalues(&gram)?.last().copied().unwrap_or(0.0);
        Ok(top.max(0.0).sqrt().min(1.0))
    }
}

/// `(I - UU^H) X (I - VV^H)`.
fn perp_both<T: Field>(u: &Mat<T>, v: &Mat<T>, x: &Mat<T>) -> Mat<T> {
    let left = x - u * (u.adjoint() * x);
    let right = &left * v;
    left - right * v.adjoint()
}
