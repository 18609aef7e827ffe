//! Monte-Carlo harness: synthetic low-rank data, perturbed priors, sweeps over
//! sampling fractions, weights and prior subspaces, and aggregation.
//!
//! Each trial draws `D` and the prior perturbation from its own stream. The
//! sample set for a `(trial, lambda)` cell is drawn from a further stream and is
//! shared by every `(kind, omega)` solved in that cell, so the comparisons
//! between kinds are paired. Output order never depends on scheduling.

use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, ensure, Context, Result};
use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use wmc_core::incoherence::sin_theta;
use wmc_core::linalg;
use wmc_core::random::{gaussian_matrix, orthonormal_factor, substream, RandomSource};
use wmc_core::sampling::draw_without_replacement;
use wmc_core::solver::{self, Algorithm, SolveConfig};
use wmc_core::{Mat, SampleSet, Subspace};

/// Prior subspace used by a solve; `Unweighted` is plain nuclear norm
/// minimization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PriorKind {
    T1,
    T2,
    T3,
    T4,
    #[serde(alias = "none")]
    #[value(name = "none", alias = "unweighted")]
    Unweighted,
}

impl PriorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PriorKind::T1 => "t1",
            PriorKind::T2 => "t2",
            PriorKind::T3 => "t3",
            PriorKind::T4 => "t4",
            PriorKind::Unweighted => "unweighted",
        }
    }

    /// Subspace of this kind built from factors `u` (`n1 x r`) and `v` (`n2 x r`).
    pub fn subspace(self, u: &Mat<f64>, v: &Mat<f64>) -> Result<Option<Subspace<f64>>> {
        let (u, v) = (u.clone(), v.clone());
        Ok(match self {
            PriorKind::T1 => Some(Subspace::paired_dyads(u, v)?),
            PriorKind::T2 => Some(Subspace::outer_grid(u, v)?),
            PriorKind::T3 => {
                let n2 = v.nrows();
                Some(Subspace::column_space(u, n2)?)
            }
            PriorKind::T4 => Some(Subspace::complement4(u, v)?),
            PriorKind::Unweighted => None,
        })
    }
}

impl std::fmt::Display for PriorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SolverChoice {
    Admm,
    Continuation,
}

impl From<SolverChoice> for Algorithm {
    fn from(c: SolverChoice) -> Self {
        match c {
            SolverChoice::Admm => Algorithm::AdmmSvt,
            SolverChoice::Continuation => Algorithm::RegularizedContinuation,
        }
    }
}

fn default_n() -> usize {
    100
}
fn default_r() -> usize {
    10
}
fn default_trials() -> usize {
    25
}
fn default_lambdas() -> Vec<f64> {
    vec![0.05, 0.15]
}
fn default_omegas() -> Vec<f64> {
    vec![0.01, 0.02, 0.06, 0.2, 0.3]
}
fn default_kinds() -> Vec<PriorKind> {
    vec![PriorKind::T1, PriorKind::T2, PriorKind::T4, PriorKind::Unweighted]
}
fn default_pabs() -> f64 {
    0.1
}
fn default_tol() -> f64 {
    1e-4
}
fn default_max_iter() -> usize {
    3000
}
fn default_solver() -> SolverChoice {
    SolverChoice::Admm
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_n")]
    pub n1: usize,
    #[serde(default = "default_n")]
    pub n2: usize,
    #[serde(default = "default_r")]
    pub r: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_lambdas")]
    pub lambda_list: Vec<f64>,
    #[serde(default = "default_omegas")]
    pub omega_list: Vec<f64>,
    #[serde(default = "default_kinds")]
    pub subspace_kinds: Vec<PriorKind>,
    #[serde(default = "default_pabs")]
    pub target_pabs: f64,
    #[serde(default)]
    pub eta: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Relative ADMM stopping tolerance.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_solver")]
    pub solver: SolverChoice,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n1: default_n(),
            n2: default_n(),
            r: default_r(),
            trials: default_trials(),
            lambda_list: default_lambdas(),
            omega_list: default_omegas(),
            subspace_kinds: default_kinds(),
            target_pabs: default_pabs(),
            eta: 0.0,
            seed: 0,
            output: None,
            tol: default_tol(),
            max_iter: default_max_iter(),
            solver: default_solver(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.n1 > 0 && self.n2 > 0, "n1 and n2 must be positive");
        ensure!(
            self.r >= 1 && self.r <= self.n1.min(self.n2),
            "r = {} outside 1..={}",
            self.r,
            self.n1.min(self.n2)
        );
        ensure!(self.trials >= 1, "trials must be at least 1");
        ensure!(!self.lambda_list.is_empty(), "lambda_list is empty");
        ensure!(!self.omega_list.is_empty(), "omega_list is empty");
        ensure!(!self.subspace_kinds.is_empty(), "subspace_kinds is empty");
        for &l in &self.lambda_list {
            ensure!(l > 0.0 && l <= 1.0, "lambda {l} outside (0, 1]");
        }
        for &w in &self.omega_list {
            ensure!(
                (solver::OMEGA_MIN..=1.0).contains(&w),
                "omega {w} outside [{}, 1]",
                solver::OMEGA_MIN
            );
        }
        ensure!(
            (0.0..=MAX_TARGET_PABS).contains(&self.target_pabs),
            "target_pabs {} outside [0, {MAX_TARGET_PABS}]",
            self.target_pabs
        );
        ensure!(self.eta >= 0.0 && self.eta.is_finite(), "eta must be non-negative");
        ensure!(self.tol > 0.0 && self.max_iter > 0, "tol and max_iter must be positive");
        Ok(())
    }

    /// Number of `(kind, omega)` solves recorded per `(trial, lambda)`.
    pub fn cells(&self) -> usize {
        self.lambda_list.len() * self.omega_list.len() * self.subspace_kinds.len()
    }

    pub fn solve_config(&self, omega: f64) -> SolveConfig {
        SolveConfig {
            omega,
            eta: self.eta,
            algorithm: self.solver.into(),
            tol_primal: self.tol,
            tol_dual: self.tol,
            max_iter: self.max_iter,
            seed: self.seed,
            ..SolveConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub kind: PriorKind,
    pub n1: usize,
    pub n2: usize,
    pub r: usize,
    pub lambda: f64,
    pub omega: f64,
    pub trial: usize,
    pub sin_theta_u: f64,
    pub sin_theta_v: f64,
    pub rel_error: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub kind: PriorKind,
    pub lambda: f64,
    pub omega: f64,
    pub mean_rel_error: f64,
    pub stderr: f64,
    pub convergence_rate: f64,
}

/// `D = U V^T / sqrt(r)` with `U`, `V` orthonormalized Gaussian factors, so
/// `||D||_F = 1` and all `r` singular values equal `1 / sqrt(r)`.
pub fn gen_lowrank<R: Rng + ?Sized>(
    n1: usize,
    n2: usize,
    r: usize,
    rng: &mut R,
) -> Result<(Mat<f64>, Mat<f64>, Mat<f64>)> {
    ensure!(r >= 1 && r <= n1.min(n2), "rank {r} outside 1..={}", n1.min(n2));
    let u: Mat<f64> = orthonormal_factor(n1, r, rng)?;
    let v: Mat<f64> = orthonormal_factor(n2, r, rng)?;
    let mut d = &u * v.transpose();
    let norm = d.norm();
    d /= norm;
    Ok((d, u, v))
}

pub const MAX_TARGET_PABS: f64 = 0.9;
/// Accepted distance between the mean achieved angle and the target.
pub const PABS_TOLERANCE: f64 = 0.02;
const SIGMA_MAX: f64 = 10.0;
const BISECTION_STEPS: usize = 40;

#[derive(Debug, Clone, PartialEq)]
pub struct Prior {
    pub u: Mat<f64>,
    pub v: Mat<f64>,
    pub sin_theta_u: f64,
    pub sin_theta_v: f64,
    pub sigma: f64,
}

impl Prior {
    pub fn mean_angle(&self) -> f64 {
        0.5 * (self.sin_theta_u + self.sin_theta_v)
    }
}

fn prior_at(d: &Mat<f64>, noise: &Mat<f64>, u: &Mat<f64>, v: &Mat<f64>, sigma: f64) -> Result<Prior> {
    let r = u.ncols();
    let svd = linalg::svd(&(d + noise * sigma), Some(r))?;
    Ok(Prior {
        sin_theta_u: sin_theta(&svd.u, u)?,
        sin_theta_v: sin_theta(&svd.v, v)?,
        u: svd.u,
        v: svd.v,
        sigma,
    })
}

/// Perturb `D` by `sigma N` with one Gaussian `N` and bisect `sigma` on
/// `[0, 10]` until the mean of the two achieved angles is within
/// [`PABS_TOLERANCE`] of `target`. `u`, `v` are the true factors.
pub fn perturb_to_pabs<R: Rng + ?Sized>(
    d: &Mat<f64>,
    u: &Mat<f64>,
    v: &Mat<f64>,
    target: f64,
    rng: &mut R,
) -> Result<Prior> {
    ensure!(
        (0.0..=MAX_TARGET_PABS).contains(&target),
        "target {target} outside [0, {MAX_TARGET_PABS}]"
    );
    let noise: Mat<f64> = gaussian_matrix(d.nrows(), d.ncols(), rng);
    if target == 0.0 {
        return prior_at(d, &noise, u, v, 0.0);
    }
    let low = prior_at(d, &noise, u, v, 0.0)?;
    let high = prior_at(d, &noise, u, v, SIGMA_MAX)?;
    if high.mean_angle() < target - PABS_TOLERANCE || low.mean_angle() > target + PABS_TOLERANCE {
        bail!(
            "cannot bracket target {target}: achieved range [{:.4}, {:.4}] for sigma in [0, {SIGMA_MAX}]",
            low.mean_angle(),
            high.mean_angle()
        );
    }
    let (mut lo, mut hi) = (0.0, SIGMA_MAX);
    let mut best = if (low.mean_angle() - target).abs() <= (high.mean_angle() - target).abs() {
        low
    } else {
        high
    };
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        let p = prior_at(d, &noise, u, v, mid)?;
        let angle = p.mean_angle();
        if (angle - target).abs() < (best.mean_angle() - target).abs() {
            best = p;
        }
        if angle < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    ensure!(
        (best.mean_angle() - target).abs() <= PABS_TOLERANCE,
        "bisection ended at angle {:.4} for target {target}",
        best.mean_angle()
    );
    Ok(best)
}

/// Sampled data `P_Omega(D)`, plus Gaussian noise scaled to norm `eta`.
pub fn observations<R: Rng + ?Sized>(s: &SampleSet, d: &Mat<f64>, eta: f64, rng: &mut R) -> Result<DVector<f64>> {
    let mut b = s.apply(d)?;
    if eta > 0.0 {
        let g: Mat<f64> = gaussian_matrix(b.len(), 1, rng);
        let norm = g.norm();
        if norm > 0.0 {
            b += g.column(0) * (eta / norm);
        }
    }
    Ok(b)
}

/// Upper end of the small-weight interval, `sqrt(M1) ln(n1 + n2) / sqrt(n1 n2)`,
/// clamped to 1.
pub fn omega_cap(m1: f64, n1: usize, n2: usize) -> f64 {
    (m1.sqrt() * ((n1 + n2) as f64).ln() / ((n1 * n2) as f64).sqrt()).min(1.0)
}

/// Number of observed entries for fraction `lambda`.
pub fn sample_count(n1: usize, n2: usize, lambda: f64) -> usize {
    ((lambda * (n1 * n2) as f64).round() as usize).clamp(1, n1 * n2)
}

const LAMBDA_STREAM_BITS: u32 = 20;

fn trial_stream(seed: u64, trial: usize) -> RandomSource {
    substream(seed, (trial as u64) << LAMBDA_STREAM_BITS)
}

fn cell_stream(seed: u64, trial: usize, lambda_index: usize) -> RandomSource {
    substream(seed, ((trial as u64) << LAMBDA_STREAM_BITS) | (lambda_index as u64 + 1))
}

/// All records for one trial, in `(lambda, kind, omega)` order.
fn run_trial(cfg: &ExperimentConfig, trial: usize) -> Result<Vec<TrialRecord>> {
    let mut rng = trial_stream(cfg.seed, trial);
    let (d, u, v) = gen_lowrank(cfg.n1, cfg.n2, cfg.r, &mut rng)?;
    let prior = perturb_to_pabs(&d, &u, &v, cfg.target_pabs, &mut rng)?;
    let d_norm = d.norm();
    let mut out = Vec::with_capacity(cfg.cells());

    for (j, &lambda) in cfg.lambda_list.iter().enumerate() {
        let mut cell_rng = cell_stream(cfg.seed, trial, j);
        let m = sample_count(cfg.n1, cfg.n2, lambda);
        let s = draw_without_replacement(cfg.n1, cfg.n2, m, &mut cell_rng)?;
        let b = observations(&s, &d, cfg.eta, &mut cell_rng)?;
        for &kind in &cfg.subspace_kinds {
            let record = |omega: f64, res: &solver::SolveResult<f64>| TrialRecord {
                kind,
                n1: cfg.n1,
                n2: cfg.n2,
                r: cfg.r,
                lambda,
                omega,
                trial,
                sin_theta_u: prior.sin_theta_u,
                sin_theta_v: prior.sin_theta_v,
                rel_error: (&res.estimate - &d).norm() / d_norm,
                iterations: res.iterations,
                converged: res.converged,
            };
            match kind.subspace(&prior.u, &prior.v)? {
                None => {
                    // The unweighted program ignores omega: solve once, record per omega.
                    let res = solver::solve_nnm(&s, &b, &cfg.solve_config(1.0))?;
                    out.extend(cfg.omega_list.iter().map(|&w| record(w, &res)));
                }
                Some(t) => {
                    for &omega in &cfg.omega_list {
                        let res = solver::solve_weighted(&t, &s, &b, &cfg.solve_config(omega))?;
                        out.push(record(omega, &res));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Run every trial, in parallel when `threads` allows, and return records in
/// `(trial, lambda, kind, omega)` order.
pub fn run_sweep(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<Vec<TrialRecord>> {
    cfg.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().context("building thread pool")?;
    let per_trial: Vec<Vec<TrialRecord>> = pool.install(|| {
        (0..cfg.trials)
            .into_par_iter()
            .map(|t| run_trial(cfg, t).with_context(|| format!("trial {t}")))
            .collect::<Result<_>>()
    })?;
    Ok(per_trial.into_iter().flatten().collect())
}

/// Mean and standard error of the mean. The mean is accumulated as offsets from
/// the first value so a constant column reproduces the constant exactly.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let base = values[0];
    let mean = base + values.iter().map(|x| x - base).sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|x| (x - mean).powi(2)).sum();
    (mean, (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt())
}

/// Group records by `(kind, lambda, omega)` in order of first appearance.
pub fn aggregate(records: &[TrialRecord]) -> Vec<SummaryRow> {
    let mut keys: Vec<(PriorKind, f64, f64)> = Vec::new();
    for rec in records {
        let key = (rec.kind, rec.lambda, rec.omega);
        if !keys
            .iter()
            .any(|k| k.0 == key.0 && k.1.to_bits() == key.1.to_bits() && k.2.to_bits() == key.2.to_bits())
        {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(kind, lambda, omega)| {
            let group: Vec<&TrialRecord> = records
                .iter()
                .filter(|r| {
                    r.kind == kind && r.lambda.to_bits() == lambda.to_bits() && r.omega.to_bits() == omega.to_bits()
                })
                .collect();
            let errors: Vec<f64> = group.iter().map(|r| r.rel_error).collect();
            let (mean, se) = mean_stderr(&errors);
            let converged = group.iter().filter(|r| r.converged).count();
            SummaryRow {
                kind,
                lambda,
                omega,
                mean_rel_error: mean,
                stderr: se,
                convergence_rate: converged as f64 / group.len() as f64,
            }
        })
        .collect()
}

/// The summary row with the smallest mean error for `kind` at `lambda`.
pub fn best_omega(summary: &[SummaryRow], kind: PriorKind, lambda: f64) -> Option<&SummaryRow> {
    summary
        .iter()
        .filter(|r| r.kind == kind && r.lambda == lambda)
        .min_by(|a, b| a.mean_rel_error.total_cmp(&b.mean_rel_error))
}

pub fn write_records_csv<W: Write>(out: W, records: &[TrialRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    if records.is_empty() {
        w.write_record([
            "kind",
            "n1",
            "n2",
            "r",
            "lambda",
            "omega",
            "trial",
            "sin_theta_u",
            "sin_theta_v",
            "rel_error",
            "iterations",
            "converged",
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(out: W, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records_csv<R: std::io::Read>(input: R) -> Result<Vec<TrialRecord>> {
    let mut rd = csv::Reader::from_reader(input);
    rd.deserialize().map(|r| r.map_err(Into::into)).collect()
}

pub fn read_summary_csv<R: std::io::Read>(input: R) -> Result<Vec<SummaryRow>> {
    let mut rd = csv::Reader::from_reader(input);
    rd.deserialize().map(|r| r.map_err(Into::into)).collect()
}

/// Summary file written next to a records file: `runs.csv` gives
/// `runs.summary.csv`.
pub fn summary_path(records: &std::path::Path) -> PathBuf {
    let stem = records
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    records.with_file_name(format!("{stem}.summary.csv"))
}
