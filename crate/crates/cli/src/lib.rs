//! Batch commands: gradient sweeps, full solves and spectral reports.
//!
//! Exit codes: 0 success, 1 configuration error, 2 solver non-convergence,
//! 3 eigensolver failure.

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use heisfowler::functional::{energy, grad_dual_norm};
use heisfowler::lorentz::sobolev_ratio;
use heisfowler::periodize::PeriodizedBubble;
use heisfowler::quadrature::sample_w;
use heisfowler::reduction::{
    ansatz_on_grid, ansatz_spectrum, bifurcation_scan, verify_solution, whole_space_kernel_check, NewtonOptions,
    SpectrumOptions,
};
use heisfowler::{build_grid, Error, GroupParams};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_EIGEN: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    #[default]
    Ansatz,
    Bubble,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub n: usize,
    #[serde(rename = "T")]
    pub t: Vec<f64>,
    pub lambda: Vec<f64>,
    pub ns: usize,
    pub nphi: usize,
    /// Tail tolerance for the truncation of the periodized bubble.
    pub k_tol: f64,
    /// Newton tolerance on the dual norm.
    pub tol: f64,
    /// Number of eigenpairs.
    pub k: usize,
    pub seed: u64,
    /// λ samples per period for the bifurcation scan.
    pub samples: usize,
    pub at: Target,
    pub r_outer: f64,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n: 1,
            t: vec![16.0],
            lambda: vec![1.0],
            ns: 128,
            nphi: 64,
            k_tol: 1e-14,
            tol: 1e-8,
            k: 6,
            seed: 7,
            samples: 4,
            at: Target::Ansatz,
            r_outer: 32.0,
            out: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> anyhow::Result<GroupParams> {
        let params = GroupParams::new(self.n).map_err(|e| anyhow!("--n: {e}"))?;
        if self.t.is_empty() || self.t.iter().any(|t| !(*t > 1.0) || !t.is_finite()) {
            bail!("--T: every period must be a finite number > 1");
        }
        if self.lambda.is_empty() || self.lambda.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
            bail!("--lambda: every value must be positive");
        }
        if self.ns < heisfowler::quadrature::MIN_POINTS || self.nphi < heisfowler::quadrature::MIN_POINTS {
            bail!("--grid: need at least {0}x{0}", heisfowler::quadrature::MIN_POINTS);
        }
        for (name, v) in [("tol", self.tol), ("k_tol", self.k_tol)] {
            if !(v > 0.0) || !v.is_finite() {
                bail!("{name} must be positive");
            }
        }
        if self.k < 3 {
            bail!("--k: at least 3 eigenpairs are required, got {}", self.k);
        }
        if self.samples == 0 {
            bail!("samples must be positive");
        }
        if !(self.r_outer > 1.0) {
            bail!("--router must exceed 1");
        }
        Ok(params)
    }
}

#[derive(Debug, Parser)]
#[command(name = "heisfowler", version, about = "Dilation-periodic solutions of the CR Yamabe equation on the Heisenberg group")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Energy, gradient dual norm and Sobolev ratio of the ansatz per (T, λ).
    GradSweep(Common),
    /// Lyapunov–Schmidt solve with verification.
    Solve(Common),
    /// Smallest generalized eigenvalues of the second variation.
    Spectrum(Common),
}

#[derive(Debug, Args, Default)]
pub struct Common {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long = "T", value_delimiter = ',')]
    pub t: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub lambda: Option<Vec<f64>>,
    /// Grid size as NsxNphi.
    #[arg(long, value_parser = parse_grid)]
    pub grid: Option<(usize, usize)>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON file with a RunConfig; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub at: Option<Target>,
    #[arg(long)]
    pub router: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected NsxNphi, got {s:?}"))?;
    let ns = a.trim().parse().map_err(|_| format!("bad Ns in {s:?}"))?;
    let nphi = b.trim().parse().map_err(|_| format!("bad Nphi in {s:?}"))?;
    Ok((ns, nphi))
}

impl Common {
    pub fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => RunConfig::default(),
        };
        if let Some(v) = self.n {
            cfg.n = v;
        }
        if let Some(v) = &self.t {
            cfg.t = v.clone();
        }
        if let Some(v) = &self.lambda {
            cfg.lambda = v.clone();
        }
        if let Some((a, b)) = self.grid {
            cfg.ns = a;
            cfg.nphi = b;
        }
        if let Some(v) = self.tol {
            cfg.tol = v;
        }
        if let Some(v) = self.k {
            cfg.k = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.out {
            cfg.out = Some(v.clone());
        }
        if let Some(v) = self.at {
            cfg.at = v;
        }
        if let Some(v) = self.router {
            cfg.r_outer = v;
        }
        if let Some(v) = self.samples {
            cfg.samples = v;
        }
        Ok(cfg)
    }
}

/// Failure with its exit code and, for solver failures, a JSON payload.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: anyhow::Error,
}

impl Failure {
    fn config(error: anyhow::Error) -> Self {
        Failure { code: EXIT_CONFIG, error }
    }
}

fn classify(e: Error) -> Failure {
    let code = match e {
        Error::NewtonFailed { .. } => EXIT_SOLVER,
        Error::EigenFailed { .. } => EXIT_EIGEN,
        _ => EXIT_CONFIG,
    };
    Failure { code, error: e.into() }
}

/// 17 significant digits.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Write via a temporary file in the target directory, then rename.
pub fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).with_context(|| format!("creating a file in {}", dir.display()))?;
    {
        let mut w = std::io::BufWriter::new(tmp.as_file_mut());
        body(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    write_atomic(path, |w| writeln!(w, "{text}"))
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    #[serde(rename = "T")]
    pub t: f64,
    pub lambda: f64,
    pub energy: f64,
    pub grad_dual_norm: f64,
    pub sobolev_ratio: f64,
}

pub fn sweep_row(params: GroupParams, cfg: &RunConfig, t: f64, lambda: f64) -> Result<SweepRow, Error> {
    let grid = build_grid(params, t, cfg.ns, cfg.nphi)?;
    let pb = PeriodizedBubble::new(params, lambda, t, cfg.k_tol)?;
    let u = sample_w(&grid, |s, phi| pb.w_rep(s, phi))?;
    Ok(SweepRow { t, lambda, energy: energy(&u), grad_dual_norm: grad_dual_norm(&u), sobolev_ratio: sobolev_ratio(&u)? })
}

pub fn cmd_grad_sweep(cfg: &RunConfig) -> Result<(), Failure> {
    let params = cfg.validate().map_err(Failure::config)?;
    let out = cfg.out.clone().ok_or_else(|| Failure::config(anyhow!("--out is required")))?;
    let jobs: Vec<(f64, f64)> = cfg.t.iter().flat_map(|&t| cfg.lambda.iter().map(move |&l| (t, l))).collect();
    let rows: Vec<SweepRow> = jobs
        .par_iter()
        .map(|&(t, l)| sweep_row(params, cfg, t, l))
        .collect::<Result<_, _>>()
        .map_err(classify)?;
    write_atomic(&out, |w| {
        writeln!(w, "T,lambda,energy,grad_dual_norm,sobolev_ratio")?;
        for r in &rows {
            writeln!(w, "{},{},{},{},{}", num(r.t), num(r.lambda), num(r.energy), num(r.grad_dual_norm), num(r.sobolev_ratio))?;
        }
        Ok(())
    })
    .map_err(Failure::config)
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub config: RunConfig,
    /// "ok", "newton_failed" or "trivial_period".
    pub status: String,
    pub lambda0: Option<f64>,
    pub residual: Option<f64>,
    pub residual_history: Vec<f64>,
    pub newton_iters: Option<usize>,
    pub w_norm_ratio: Option<f64>,
    pub flat_bifurcation: Option<bool>,
    pub periodicity_gap: Option<f64>,
    pub min_u: Option<f64>,
    pub positive: Option<bool>,
    pub morse_index: Option<usize>,
    pub eigenvalues: Vec<f64>,
    pub minimal_period: Option<bool>,
    pub period_distances: Vec<(usize, f64)>,
    pub message: Option<String>,
}

impl SolveReport {
    fn empty(config: RunConfig, status: &str) -> Self {
        SolveReport {
            config,
            status: status.into(),
            lambda0: None,
            residual: None,
            residual_history: Vec::new(),
            newton_iters: None,
            w_norm_ratio: None,
            flat_bifurcation: None,
            periodicity_gap: None,
            min_u: None,
            positive: None,
            morse_index: None,
            eigenvalues: Vec::new(),
            minimal_period: None,
            period_distances: Vec::new(),
            message: None,
        }
    }
}

fn lambda_samples(cfg: &RunConfig, t: f64) -> Vec<f64> {
    if cfg.lambda.len() > 1 {
        return cfg.lambda.clone();
    }
    let l0 = cfg.lambda[0];
    (0..cfg.samples).map(|i| l0 * t.powf(i as f64 / cfg.samples as f64)).collect()
}

/// Runs the solve and writes `report.json` (always) and `solution.csv`
/// (when a field was produced) into the output directory.
pub fn cmd_solve(cfg: &RunConfig) -> Result<SolveReport, Failure> {
    let params = cfg.validate().map_err(Failure::config)?;
    let out = cfg.out.clone().ok_or_else(|| Failure::config(anyhow!("--out is required")))?;
    if cfg.t.len() != 1 {
        return Err(Failure::config(anyhow!("solve takes a single --T")));
    }
    let t = cfg.t[0];
    std::fs::create_dir_all(&out).map_err(|e| Failure::config(anyhow!("creating {}: {e}", out.display())))?;
    let grid = build_grid(params, t, cfg.ns, cfg.nphi).map_err(classify)?;
    let newton = NewtonOptions { tol: cfg.tol, ..Default::default() };
    let eig = SpectrumOptions { seed: cfg.seed, ..Default::default() };
    let report_path = out.join("report.json");

    let (u, scan) = match bifurcation_scan(&grid, &lambda_samples(cfg, t), &newton) {
        Ok(v) => v,
        Err(e) => {
            let mut rep = SolveReport::empty(cfg.clone(), "newton_failed");
            rep.message = Some(e.to_string());
            if let Error::NewtonFailed { history, .. } = &e {
                rep.residual_history = history.clone();
            }
            write_json(&report_path, &rep).map_err(Failure::config)?;
            return Err(classify(e));
        }
    };
    let verify = verify_solution(&u, &eig).map_err(classify)?;
    let mut rep = SolveReport::empty(cfg.clone(), "ok");
    rep.lambda0 = Some(scan.lambda0);
    rep.residual = Some(verify.grad_dual_norm);
    rep.residual_history = scan.state.history.clone();
    rep.newton_iters = Some(scan.state.newton_iters);
    rep.w_norm_ratio = Some(scan.state.w_norm / scan.state.psi_norm);
    rep.flat_bifurcation = Some(scan.flat);
    rep.periodicity_gap = Some(scan.periodicity_gap);
    rep.min_u = Some(verify.min_u);
    rep.positive = Some(verify.positive);
    rep.morse_index = Some(verify.morse_index);
    rep.eigenvalues = verify.eigenvalues.clone();
    rep.minimal_period = Some(verify.minimal_period);
    rep.period_distances = verify.period_distances.clone();
    write_atomic(&out.join("solution.csv"), |w| u.write_csv(w)).map_err(Failure::config)?;
    if !verify.minimal_period {
        rep.status = "trivial_period".into();
        rep.message = Some("Newton converged onto a solution without minimal period T".into());
        write_json(&report_path, &rep).map_err(Failure::config)?;
        return Err(Failure { code: EXIT_SOLVER, error: anyhow!("construction collapsed onto a solution of smaller period") });
    }
    write_json(&report_path, &rep).map_err(Failure::config)?;
    Ok(rep)
}

pub fn cmd_spectrum(cfg: &RunConfig) -> Result<serde_json::Value, Failure> {
    let params = cfg.validate().map_err(Failure::config)?;
    let eig = SpectrumOptions { seed: cfg.seed, ..Default::default() };
    let mut value = match cfg.at {
        Target::Bubble => {
            let rep = whole_space_kernel_check(params, cfg.lambda[0], cfg.r_outer, cfg.ns, cfg.nphi, cfg.k, &eig).map_err(classify)?;
            serde_json::to_value(rep).map_err(|e| Failure::config(e.into()))?
        }
        Target::Ansatz => {
            let mut reports = Vec::new();
            for &t in &cfg.t {
                for &l in &cfg.lambda {
                    let grid = build_grid(params, t, cfg.ns, cfg.nphi).map_err(classify)?;
                    let (_pb, psi, tau) = ansatz_on_grid(&grid, l, cfg.k_tol).map_err(classify)?;
                    let mut rep = ansatz_spectrum(&psi, &psi, &tau, cfg.k, &eig).map_err(classify)?;
                    rep.lambda = l;
                    reports.push(rep);
                }
            }
            serde_json::to_value(reports).map_err(|e| Failure::config(e.into()))?
        }
    };
    let out = serde_json::json!({ "config": cfg, "result": value.take() });
    match &cfg.out {
        Some(path) => write_json(path, &out).map_err(Failure::config)?,
        None => println!("{}", serde_json::to_string_pretty(&out).map_err(|e| Failure::config(e.into()))?),
    }
    Ok(out)
}

/// Parse arguments, run the command, report errors on stderr; returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::GradSweep(c) => c.resolve().map_err(Failure::config).and_then(|cfg| cmd_grad_sweep(&cfg)),
        Command::Solve(c) => c.resolve().map_err(Failure::config).and_then(|cfg| cmd_solve(&cfg).map(|_| ())),
        Command::Spectrum(c) => c.resolve().map_err(Failure::config).and_then(|cfg| cmd_spectrum(&cfg).map(|_| ())),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            f.code
        }
    }
}
