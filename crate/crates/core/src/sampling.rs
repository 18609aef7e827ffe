//! Entry sampling operators.
//!
//! A [`SampleSet`] is an ordered list of `(row, col)` cells. Without
//! replacement the cells are distinct; with replacement they are i.i.d.
//! uniform and may repeat. Cells are linearized row-major (`k * n2 + l`).

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

#[allow(unused_imports)]
use nalgebra::ComplexField as _;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::linalg::{Field, Mat};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSet {
    n1: usize,
    n2: usize,
    indices: Vec<(usize, usize)>,
    with_replacement: bool,
}

impl SampleSet {
    /// Validate and wrap an index list. Without replacement, repeats are rejected.
    pub fn new(n1: usize, n2: usize, indices: Vec<(usize, usize)>, with_replacement: bool) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return Err(Error::param("dims", "n1 and n2 must be positive"));
        }
        if let Some(&(k, l)) = indices.iter().find(|&&(k, l)| k >= n1 || l >= n2) {
            return Err(Error::param(
                "indices",
                alloc::format!("cell ({k}, {l}) outside {n1}x{n2}"),
            ));
        }
        if !with_replacement {
            let mut seen = alloc::vec![false; n1 * n2];
            for &(k, l) in &indices {
                let lin = k * n2 + l;
                if seen[lin] {
                    return Err(Error::param(
                        "indices",
                        alloc::format!("cell ({k}, {l}) repeated in a without-replacement set"),
                    ));
                }
                seen[lin] = true;
            }
        }
        Ok(SampleSet {
            n1,
            n2,
            indices,
            with_replacement,
        })
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n1, self.n2)
    }

    /// Number of samples `m`, repeats included.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[(usize, usize)] {
        &self.indices
    }

    pub fn with_replacement(&self) -> bool {
        self.with_replacement
    }

    /// Drop repeats, keeping first occurrences in order.
    pub fn distinct(&self) -> SampleSet {
        let mut seen = alloc::vec![false; self.n1 * self.n2];
        let indices = self
            .indices
            .iter()
            .copied()
            .filter(|&(k, l)| !core::mem::replace(&mut seen[k * self.n2 + l], true))
            .collect();
        SampleSet {
            n1: self.n1,
            n2: self.n2,
            indices,
            with_replacement: false,
        }
    }

    /// Largest multiplicity `tau` (0 for an empty set).
    pub fn multiplicity_max(&self) -> usize {
        let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for &cell in &self.indices {
            *counts.entry(cell).or_insert(0) += 1;
        }
        counts.values().copied().max().unwrap_or(0)
    }

    /// Multiplicity of every cell as an `n1 x n2` real matrix.
    pub fn multiplicities(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n1, self.n2);
        for &(k, l) in &self.indices {
            m[(k, l)] += 1.0;
        }
        m
    }

    /// 0/1 indicator of the distinct cells.
    pub fn mask(&self) -> DMatrix<f64> {
        self.multiplicities().map(|c| if c > 0.0 { 1.0 } else { 0.0 })
    }

    fn check<T: Field>(&self, x: &Mat<T>) -> Result<()> {
        if x.shape() != (self.n1, self.n2) {
            return Err(Error::dims((self.n1, self.n2), x.shape()));
        }
        Ok(())
    }

    /// Sampled entries in index order.
    pub fn apply<T: Field>(&self, x: &Mat<T>) -> Result<DVector<T>> {
        self.check(x)?;
        Ok(DVector::from_iterator(
            self.indices.len(),
            self.indices.iter().map(|&(k, l)| x[(k, l)]),
        ))
    }

    /// Adjoint of [`apply`](Self::apply): scatter-add `y` back into a matrix.
    pub fn adjoint<T: Field>(&self, y: &DVector<T>) -> Result<Mat<T>> {
        if y.len() != self.indices.len() {
            return Err(Error::dims((self.indices.len(), 1), (y.len(), 1)));
        }
        let mut out = Mat::zeros(self.n1, self.n2);
        for (&(k, l), v) in self.indices.iter().zip(y.iter()) {
            out[(k, l)] += *v;
        }
        Ok(out)
    }

    /// `sqrt(n1 n2 / m)` times [`apply`](Self::apply).
    pub fn normalized_apply<T: Field>(&self, x: &Mat<T>) -> Result<DVector<T>> {
        let scale = self.normalization();
        Ok(self.apply(x)?.map(|v| v.scale(scale)))
    }

    /// `sqrt(n1 n2 / m)`.
    pub fn normalization(&self) -> f64 {
        ((self.n1 * self.n2) as f64 / self.indices.len().max(1) as f64).sqrt()
    }
}

/// `m` distinct cells drawn uniformly among all size-`m` subsets.
pub fn draw_without_replacement<R: Rng + ?Sized>(n1: usize, n2: usize, m: usize, rng: &mut R) -> Result<SampleSet> {
    let total = n1 * n2;
    if m == 0 || m > total {
        return Err(Error::param(
            "m",
            alloc::format!("sample count {m} outside 1..={total}"),
        ));
    }
    let indices = rand::seq::index::sample(rng, total, m)
        .into_iter()
        .map(|lin| (lin / n2, lin % n2))
        .collect();
    Ok(SampleSet {
        n1,
        n2,
        indices,
        with_replacement: false,
    })
}

/// `m` i.i.d. uniform cells.
pub fn draw_with_replacement<R: Rng + ?Sized>(n1: usize, n2: usize, m: usize, rng: &mut R) -> Result<SampleSet> {
    if m == 0 || n1 == 0 || n2 == 0 {
        return Err(Error::param("m", "need m >= 1 and non-empty dims"));
    }
    let total = n1 * n2;
    let indices = (0..m)
        .map(|_| {
            let lin = rng.random_range(0..total);
            (lin / n2, lin % n2)
        })
        .collect();
    Ok(SampleSet {
        n1,
        n2,
        indices,
        with_replacement: true,
    })
}
