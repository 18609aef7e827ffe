//! `wmc` command line.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 a solve that did
//! not reach its tolerance (the result is still written).

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use wmc_core::certify::{self, CertifyOptions};
use wmc_core::incoherence::IncoherenceReport;
use wmc_core::random::substream;
use wmc_core::sampling::{draw_with_replacement, draw_without_replacement};
use wmc_core::{linalg, solver, Mat, C64};

use crate::experiments::{self, PriorKind, SolverChoice};
use crate::io::{self, AnyMatrix};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Debug, Parser, Serialize)]
#[command(name = "wmc", version, about = "Subspace-weighted matrix completion toolkit")]
pub struct Cli {
    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true, env = "WMC_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum Command {
    /// Generate a normalized rank-r matrix, its factors and a perturbed prior.
    Gen(GenArgs),
    /// Incoherence parameters of a matrix or of a built-in example family.
    Incoherence(IncoherenceArgs),
    /// Rank, incoherence and angle report for a prior subspace.
    SubspaceReport(SubspaceArgs),
    /// Solve the (weighted) nuclear norm program.
    Solve(SolveArgs),
    /// Dual certificate parameters for a with-replacement sample.
    Certify(CertifyArgs),
    /// Run a Monte-Carlo sweep from a JSON config.
    Sweep(SweepArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct Shape {
    #[arg(long, default_value_t = 100)]
    pub n1: usize,
    #[arg(long, default_value_t = 100)]
    pub n2: usize,
    #[arg(long, default_value_t = 10)]
    pub rank: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Where `D` and the prior factors come from: files, or generated from the seed.
#[derive(Debug, Args, Serialize)]
pub struct DataArgs {
    #[command(flatten)]
    pub shape: Shape,
    /// Data matrix CSV; generated when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Prior left factor CSV (needs --v).
    #[arg(long, requires = "v")]
    pub u: Option<PathBuf>,
    /// Prior right factor CSV (needs --u).
    #[arg(long, requires = "u")]
    pub v: Option<PathBuf>,
    /// Principal angle targeted when perturbing `D` to build a prior.
    #[arg(long, default_value_t = 0.1)]
    pub target_pabs: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct GenArgs {
    #[command(flatten)]
    pub shape: Shape,
    #[arg(long, default_value_t = 0.1)]
    pub target_pabs: f64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// All-equal rank-1 matrix.
    Flat,
    /// Identity columns on the left, Fourier columns on the right.
    IdentityFourier,
    /// Identity columns on both sides.
    IdentityIdentity,
}

#[derive(Debug, Args, Serialize)]
pub struct IncoherenceArgs {
    /// Matrix file: `.json` (real/imag pairs) or CSV.
    #[arg(long, conflicts_with = "family")]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub family: Option<Family>,
    /// Side length for --family.
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub rank: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SubspaceArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value_t = PriorKind::T1)]
    pub kind: PriorKind,
    /// Random elements used to measure the maximal rank.
    #[arg(long, default_value_t = 20)]
    pub rank_samples: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SolveArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Sample set JSON; otherwise `lambda n1 n2` cells are drawn.
    #[arg(long)]
    pub samples: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    pub omega: f64,
    #[arg(long, default_value_t = 0.0)]
    pub eta: f64,
    #[arg(long, value_enum, default_value_t = PriorKind::Unweighted)]
    pub kind: PriorKind,
    #[arg(long, value_enum, default_value_t = SolverChoice::Admm)]
    pub solver: SolverChoice,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 5000)]
    pub max_iter: usize,
    /// Result JSON (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Estimate CSV.
    #[arg(long)]
    pub estimate: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Number of with-replacement samples; defaults to `lambda n1 n2`.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, default_value_t = 0.2)]
    pub lambda: f64,
    /// Weight; defaults to the small-weight cap `sqrt(M1) ln(n1 + n2) / sqrt(n1 n2)`.
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long, value_enum, default_value_t = PriorKind::T1)]
    pub kind: PriorKind,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    /// ExperimentConfig JSON.
    #[arg(long)]
    pub config: PathBuf,
    /// Records CSV; overrides `output` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides `seed` in the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Parse `argv` and run; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_INVALID
        }
    }
}

fn echo(cli: &Cli) {
    match serde_json::to_string(cli) {
        Ok(text) => eprintln!("resolved: {text}"),
        Err(e) => eprintln!("resolved: <unserializable: {e}>"),
    }
}

fn dispatch(cli: &Cli) -> Result<i32> {
    echo(cli);
    match &cli.command {
        Command::Gen(a) => gen(a),
        Command::Incoherence(a) => incoherence(a),
        Command::SubspaceReport(a) => subspace_report(a),
        Command::Solve(a) => solve(a),
        Command::Certify(a) => certify_cmd(a),
        Command::Sweep(a) => sweep(a, cli.threads),
    }
}

fn emit<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    match out {
        Some(p) => io::save_json(p, value),
        None => {
            println!("{}", serde_json::to_string_pretty(value)?);
            Ok(())
        }
    }
}

fn gen(a: &GenArgs) -> Result<i32> {
    let Shape { n1, n2, rank, seed } = a.shape;
    let mut rng = substream(seed, 0);
    let (d, u, v) = experiments::gen_lowrank(n1, n2, rank, &mut rng)?;
    let prior = experiments::perturb_to_pabs(&d, &u, &v, a.target_pabs, &mut rng)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    io::save_matrix_csv(&a.out.join("D.csv"), &d)?;
    io::save_matrix_csv(&a.out.join("U.csv"), &u)?;
    io::save_matrix_csv(&a.out.join("V.csv"), &v)?;
    io::save_matrix_csv(&a.out.join("prior_U.csv"), &prior.u)?;
    io::save_matrix_csv(&a.out.join("prior_V.csv"), &prior.v)?;
    #[derive(Serialize)]
    struct GenReport {
        n1: usize,
        n2: usize,
        rank: usize,
        seed: u64,
        sigma: f64,
        sin_theta_u: f64,
        sin_theta_v: f64,
    }
    emit(
        None,
        &GenReport {
            n1,
            n2,
            rank,
            seed,
            sigma: prior.sigma,
            sin_theta_u: prior.sin_theta_u,
            sin_theta_v: prior.sin_theta_v,
        },
    )?;
    Ok(EXIT_OK)
}

#[derive(Debug, Clone, Serialize)]
pub struct IncoherenceOutput {
    pub mu0: f64,
    pub mu1: f64,
    pub sqrt_mu1: f64,
    pub mu1_alt: f64,
    pub mu1_joint: f64,
    pub mu2: f64,
    pub r: usize,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

impl From<IncoherenceReport> for IncoherenceOutput {
    fn from(r: IncoherenceReport) -> Self {
        IncoherenceOutput {
            mu0: r.mu0,
            mu1: r.mu1,
            sqrt_mu1: r.mu1.sqrt(),
            mu1_alt: r.mu1_alt,
            mu1_joint: r.mu1_joint,
            mu2: r.mu2,
            r: r.r,
            degenerate: r.degenerate,
        }
    }
}

/// Factors of the example families with `n x r` orthonormal columns.
pub fn family_factors(family: Family, n: usize, r: usize) -> Result<(Mat<C64>, Mat<C64>)> {
    ensure!(r >= 1 && r <= n, "rank {r} outside 1..={n}");
    let identity = Mat::<C64>::from_fn(
        n,
        r,
        |k, j| if k == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) },
    );
    Ok(match family {
        Family::Flat => {
            ensure!(r == 1, "the flat family has rank 1");
            let c = C64::new(1.0 / (n as f64).sqrt(), 0.0);
            (Mat::from_element(n, 1, c), Mat::from_element(n, 1, c))
        }
        Family::IdentityFourier => {
            let scale = 1.0 / (n as f64).sqrt();
            let fourier = Mat::<C64>::from_fn(n, r, |k, j| {
                let angle = -2.0 * std::f64::consts::PI * (k * j) as f64 / n as f64;
                C64::new(scale * angle.cos(), scale * angle.sin())
            });
            (identity, fourier)
        }
        Family::IdentityIdentity => (identity.clone(), identity),
    })
}

fn incoherence(a: &IncoherenceArgs) -> Result<i32> {
    let report = match (&a.input, a.family) {
        (Some(path), _) => match io::load_any_matrix(path)? {
            AnyMatrix::Real(d) => IncoherenceReport::from_matrix(&d, a.rank)?,
            AnyMatrix::Complex(d) => IncoherenceReport::from_matrix(&d, a.rank)?,
        },
        (None, Some(f)) => {
            let (u, v) = family_factors(f, a.n, a.rank)?;
            IncoherenceReport::from_factors(&u, &v)?
        }
        (None, None) => bail!("give --input or --family"),
    };
    emit(a.out.as_deref(), &IncoherenceOutput::from(report))?;
    Ok(EXIT_OK)
}

/// `D`, its true factors and the prior factors.
struct Problem {
    d: Mat<f64>,
    u: Mat<f64>,
    v: Mat<f64>,
    prior_u: Mat<f64>,
    prior_v: Mat<f64>,
}

fn load_problem(a: &DataArgs) -> Result<(Problem, wmc_core::random::RandomSource)> {
    let Shape { n1, n2, rank, seed } = a.shape;
    let mut rng = substream(seed, 0);
    let (d, u, v) = match &a.data {
        Some(path) => {
            let d = io::load_matrix_csv(path)?;
            ensure!(
                rank >= 1 && rank <= d.nrows().min(d.ncols()),
                "rank {rank} too large for the data"
            );
            let s = linalg::svd(&d, Some(rank))?;
            (d, s.u, s.v)
        }
        None => experiments::gen_lowrank(n1, n2, rank, &mut rng)?,
    };
    let (prior_u, prior_v) = match (&a.u, &a.v) {
        (Some(pu), Some(pv)) => {
            let (pu, pv) = (io::load_matrix_csv(pu)?, io::load_matrix_csv(pv)?);
            ensure!(
                pu.nrows() == d.nrows() && pv.nrows() == d.ncols(),
                "prior factors are {}x{} and {}x{} for a {}x{} matrix",
                pu.nrows(),
                pu.ncols(),
                pv.nrows(),
                pv.ncols(),
                d.nrows(),
                d.ncols()
            );
            (pu, pv)
        }
        _ => {
            let p = experiments::perturb_to_pabs(&d, &u, &v, a.target_pabs, &mut rng)?;
            (p.u, p.v)
        }
    };
    Ok((
        Problem {
            d,
            u,
            v,
            prior_u,
            prior_v,
        },
        rng,
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct SubspaceReportOutput {
    pub kind: PriorKind,
    pub n1: usize,
    pub n2: usize,
    pub dim: usize,
    pub rho: usize,
    pub measured_max_rank: usize,
    pub m0_lower: f64,
    pub m0_upper: f64,
    pub m1_exact: f64,
    pub m1_paper_lower: f64,
    pub m1_paper_upper: f64,
    /// `||P_{T^perp} P_{T_rho}||` against the same kind built from the true factors.
    pub sin_theta_t: f64,
}

fn subspace_report(a: &SubspaceArgs) -> Result<i32> {
    ensure!(a.kind != PriorKind::Unweighted, "subspace-report needs a prior kind");
    let (p, mut rng) = load_problem(&a.data)?;
    let t = a.kind.subspace(&p.prior_u, &p.prior_v)?.expect("weighted kind");
    let truth = a.kind.subspace(&p.u, &p.v)?.expect("weighted kind");
    let inc = t.incoherence()?;
    let (lo, hi) = inc.m1_paper.unwrap_or((f64::NAN, f64::NAN));
    let (n1, n2) = t.dims();
    let out = SubspaceReportOutput {
        kind: a.kind,
        n1,
        n2,
        dim: t.dim(),
        rho: t.rho(),
        measured_max_rank: t.measured_max_rank(a.rank_samples, &mut rng)?,
        m0_lower: inc.m0_lower,
        m0_upper: inc.m0_upper,
        m1_exact: inc.m1_exact,
        m1_paper_lower: lo,
        m1_paper_upper: hi,
        sin_theta_t: t.sin_theta_t(&truth)?,
    };
    emit(a.out.as_deref(), &out)?;
    Ok(EXIT_OK)
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveOutput {
    pub kind: PriorKind,
    pub n1: usize,
    pub n2: usize,
    pub m: usize,
    pub omega: f64,
    pub eta: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub objective: f64,
    pub feasibility_gap: f64,
    pub converged: bool,
    pub lambda_reg: Option<f64>,
    /// `||D - estimate||_F / ||D||_F`.
    pub rel_error: f64,
}

fn solve(a: &SolveArgs) -> Result<i32> {
    let (p, _) = load_problem(&a.data)?;
    let (n1, n2) = p.d.shape();
    let mut rng = substream(a.data.shape.seed, 1);
    let s = match &a.samples {
        Some(path) => io::load_sample_set(path)?,
        None => {
            ensure!(a.lambda > 0.0 && a.lambda <= 1.0, "lambda {} outside (0, 1]", a.lambda);
            draw_without_replacement(n1, n2, experiments::sample_count(n1, n2, a.lambda), &mut rng)?
        }
    };
    ensure!(
        s.dims() == (n1, n2),
        "sample set is {:?} for a {n1}x{n2} matrix",
        s.dims()
    );
    let b = experiments::observations(&s, &p.d, a.eta, &mut rng)?;
    let cfg = solver::SolveConfig {
        omega: a.omega,
        eta: a.eta,
        algorithm: a.solver.into(),
        tol_primal: a.tol,
        tol_dual: a.tol,
        max_iter: a.max_iter,
        seed: a.data.shape.seed,
        ..solver::SolveConfig::default()
    };
    cfg.validate()?;
    let res = match a.kind.subspace(&p.prior_u, &p.prior_v)? {
        None => solver::solve_nnm(&s, &b, &cfg)?,
        Some(t) => solver::solve_weighted(&t, &s, &b, &cfg)?,
    };
    if let Some(path) = &a.estimate {
        io::save_matrix_csv(path, &res.estimate)?;
    }
    let out = SolveOutput {
        kind: a.kind,
        n1,
        n2,
        m: s.len(),
        omega: if a.kind == PriorKind::Unweighted { 1.0 } else { a.omega },
        eta: a.eta,
        iterations: res.iterations,
        primal_residual: res.primal_residual,
        dual_residual: res.dual_residual,
        objective: res.objective,
        feasibility_gap: res.feasibility_gap,
        converged: res.converged,
        lambda_reg: res.lambda,
        rel_error: (&res.estimate - &p.d).norm() / p.d.norm(),
    };
    emit(a.out.as_deref(), &out)?;
    Ok(if res.converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificateOutput {
    pub kind: PriorKind,
    pub n1: usize,
    pub n2: usize,
    pub m: usize,
    pub omega: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub beta4: f64,
    pub beta5: f64,
    pub condition: f64,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub certified: bool,
    pub g_approximate: bool,
    pub multiplicity_max: usize,
    pub concentration_stat: f64,
}

fn certify_cmd(a: &CertifyArgs) -> Result<i32> {
    ensure!(a.kind != PriorKind::Unweighted, "certify needs a prior kind");
    let (p, _) = load_problem(&a.data)?;
    let (n1, n2) = p.d.shape();
    let t = a.kind.subspace(&p.prior_u, &p.prior_v)?.expect("weighted kind");
    let m = match a.m {
        Some(m) => m,
        None => {
            ensure!(a.lambda > 0.0 && a.lambda <= 1.0, "lambda {} outside (0, 1]", a.lambda);
            experiments::sample_count(n1, n2, a.lambda)
        }
    };
    let omega = match a.omega {
        Some(w) => w,
        None => experiments::omega_cap(t.m1_exact(), n1, n2),
    };
    ensure!(omega > 0.0 && omega <= 1.0, "omega {omega} outside (0, 1]");
    let mut rng = substream(a.data.shape.seed, 2);
    let s = draw_with_replacement(n1, n2, m, &mut rng)?;
    let rep = certify::beta_report(&t, omega, &s, &p.d, &CertifyOptions::default(), &mut rng)?;
    let out = CertificateOutput {
        kind: a.kind,
        n1,
        n2,
        m,
        omega,
        beta1: rep.beta1,
        beta2: rep.beta2,
        beta3: rep.beta3,
        beta4: rep.beta4,
        beta5: rep.beta5,
        condition: rep.condition,
        c1: rep.c1,
        c2: rep.c2,
        certified: rep.certified(),
        g_approximate: rep.g_approximate,
        multiplicity_max: s.multiplicity_max(),
        concentration_stat: certify::concentration_stat(&t, &s, certify::DEFAULT_DIMENSION_CAP)?,
    };
    emit(a.out.as_deref(), &out)?;
    Ok(EXIT_OK)
}

fn sweep(a: &SweepArgs, threads: Option<usize>) -> Result<i32> {
    let text = fs::read_to_string(&a.config).with_context(|| format!("opening {}", a.config.display()))?;
    let mut cfg: experiments::ExperimentConfig =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", a.config.display()))?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &a.out {
        cfg.output = Some(out.clone());
    }
    cfg.validate()?;
    eprintln!("config: {} seed={}", serde_json::to_string(&cfg)?, cfg.seed);
    let records = experiments::run_sweep(&cfg, threads)?;
    let summary = experiments::aggregate(&records);
    match &cfg.output {
        Some(path) => {
            let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
            experiments::write_records_csv(f, &records)?;
            let sp = experiments::summary_path(path);
            let f = fs::File::create(&sp).with_context(|| format!("creating {}", sp.display()))?;
            experiments::write_summary_csv(f, &summary)?;
        }
        None => experiments::write_records_csv(std::io::stdout().lock(), &records)?,
    }
    Ok(EXIT_OK)
}
