//! Command surfaces: `restore`, `certify`, `verify` and `bench`.
//!
//! Exit codes: 0 success, 1 config error, 2 assumption violated,
//! 3 capability error, 4 divergence.

pub mod config;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::denoisers::{BlackBox, DenoiserHandle, DenoiserSpec, SpcBase};
use crate::error::{Error, Result};
use crate::fidelity::{self, FidelityHandle};
use crate::image::{Image, Kernel};
use crate::io;
use crate::linop::{self, LinearOperator, PairRotation, ScaledIdentity};
use crate::metrics;
use crate::oracle::{self, LemmaReport, LemmaSuite};
use crate::phantoms;
use crate::solvers::{
    self, check_hypotheses, HypothesisReport, IterTrace, LoopOptions, Schedule, SolverKind, Stepper,
};
use crate::spectral::{self, Assumption, ProbeConfig, SpectralCertificate};

pub use config::{config_hash, ImageFormat, Meta, RunConfig, Task, TaskSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_VIOLATED: i32 = 2;
pub const EXIT_CAPABILITY: i32 = 3;
pub const EXIT_DIVERGENCE: i32 = 4;

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Capability(_) => EXIT_CAPABILITY,
        Error::Divergence { .. } => EXIT_DIVERGENCE,
        _ => EXIT_CONFIG,
    }
}

#[derive(Debug, Parser)]
#[command(name = "pnpi", version, about = "Plug-and-play Ishikawa restoration and denoiser certification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Restore an observed (or synthesized) image.
    Restore(RestoreArgs),
    /// Measure Jacobian norms of a denoiser and issue region verdicts.
    Certify(CertifyArgs),
    /// Check the operator lemmas on random instances.
    Verify(VerifyArgs),
    /// Residual trajectories of Picard and Ishikawa iterations on test operators.
    Bench(BenchArgs),
}

#[derive(Debug, Args, Default)]
pub struct RestoreArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub task: Option<Task>,
    #[arg(long)]
    pub kernel: Option<PathBuf>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub scale: Option<usize>,
    #[arg(long)]
    pub peak: Option<f64>,
    /// Noise level (out of 255) for synthesized observations.
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    #[arg(long)]
    pub denoiser: Option<String>,
    #[arg(long)]
    pub solver: Option<SolverKind>,
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub beta_growth: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub project_box: bool,
    /// Observed image (PGM or PFM-txt).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Clean image to degrade.
    #[arg(long)]
    pub clean: Option<PathBuf>,
    /// Built-in clean image: gradient, checkerboard or disk.
    #[arg(long)]
    pub phantom: Option<String>,
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, value_parser = parse_format)]
    pub format: Option<ImageFormat>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Skip denoiser certification; the hypothesis report is then inconclusive.
    #[arg(long)]
    pub no_certify: bool,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[arg(long)]
    pub denoiser: String,
    /// Comma-separated noise levels.
    #[arg(long, value_delimiter = ',')]
    pub sigmas: Option<Vec<f64>>,
    #[arg(long)]
    pub size: Option<usize>,
    /// Comma-separated list of fne, ne, cr:<r>, spc:<k>, pc.
    #[arg(long, default_value = "pc")]
    pub assumption: String,
    #[arg(long)]
    pub power_iters: Option<usize>,
    #[arg(long)]
    pub inner_steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// A lemma name (lemma1, lemma1_5, lemma3..lemma6) or `all`.
    #[arg(long, default_value = "all")]
    pub suite: String,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Print the report as JSON.
    #[arg(long)]
    pub json: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Comma-separated subset of rotation, contraction, spc.
    #[arg(long, default_value = "rotation,contraction")]
    pub operators: String,
    /// Comma-separated subset of picard, ishikawa.
    #[arg(long, default_value = "picard,ishikawa")]
    pub solvers: String,
    /// Comma-separated `a:b` pairs; empty for no runs.
    #[arg(long, default_value = "0.3:0.15")]
    pub schedules: String,
    #[arg(long, default_value_t = 1000)]
    pub iters: usize,
    #[arg(long, default_value_t = 8)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "bench")]
    pub out_dir: PathBuf,
}

fn parse_format(s: &str) -> std::result::Result<ImageFormat, String> {
    match s {
        "pgm" => Ok(ImageFormat::Pgm),
        "pfm-txt" | "pfm" => Ok(ImageFormat::PfmTxt),
        _ => Err(format!("unknown image format {s:?} (expected pgm or pfm-txt)")),
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
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
    let result = match cli.command {
        Command::Restore(a) => cmd_restore(&a),
        Command::Certify(a) => cmd_certify(&a),
        Command::Verify(a) => cmd_verify(&a),
        Command::Bench(a) => cmd_bench(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Artifact body with the provenance block alongside it.
#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    meta: &'a Meta,
    #[serde(flatten)]
    body: &'a T,
}

fn write_json<T: Serialize>(path: &Path, meta: &Meta, body: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(&Stamped { meta, body })?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn write_trace(path: &Path, meta: &Meta, trace: &IterTrace) -> Result<()> {
    let mut buf = Vec::new();
    writeln!(buf, "# {}", meta.comment())?;
    trace.write_csv(&mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

/// Builds a denoiser from its spec string. A `blackbox:` prefix hides the
/// transpose and exact Jacobian products, leaving only `apply`.
pub fn build_denoiser(spec: &str) -> Result<DenoiserHandle> {
    match spec.strip_prefix("blackbox:") {
        Some(inner) => Ok(Arc::new(BlackBox(inner.parse::<DenoiserSpec>()?.build()?))),
        None => spec.parse::<DenoiserSpec>()?.build(),
    }
}

// ---------------------------------------------------------------- restore

impl RestoreArgs {
    /// Resolves the file config (if any) with the flag overrides applied.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($field:expr, $flag:expr) => {
                if let Some(v) = $flag.clone() {
                    $field = v;
                }
            };
        }
        set!(cfg.task.kind, self.task);
        if self.kernel.is_some() {
            cfg.task.kernel = self.kernel.clone();
        }
        set!(cfg.task.mu, self.mu);
        set!(cfg.task.scale, self.scale);
        set!(cfg.task.peak, self.peak);
        set!(cfg.task.noise_sigma, self.noise_sigma);
        set!(cfg.denoiser, self.denoiser);
        if let Some(kind) = self.solver {
            if self.config.is_none() {
                cfg.solver = solvers::SolverConfig { beta: cfg.solver.beta, ..solvers::SolverConfig::for_kind(kind) };
            }
            cfg.solver.kind = kind;
        }
        set!(cfg.solver.schedule.a, self.a);
        set!(cfg.solver.schedule.b, self.b);
        set!(cfg.solver.max_iters, self.iters);
        set!(cfg.solver.beta, self.beta);
        set!(cfg.solver.beta_growth, self.beta_growth);
        set!(cfg.solver.lambda, self.lambda);
        set!(cfg.solver.tol, self.tol);
        if self.project_box {
            cfg.solver.project_box = true;
        }
        for (field, flag) in [(&mut cfg.input, &self.input), (&mut cfg.clean, &self.clean), (&mut cfg.truth, &self.truth)] {
            if flag.is_some() {
                *field = flag.clone();
            }
        }
        if self.phantom.is_some() {
            cfg.phantom = self.phantom.clone();
        }
        set!(cfg.phantom_size, self.size);
        set!(cfg.out_dir, self.out_dir);
        set!(cfg.output_format, self.format);
        if let Some(seed) = self.seed {
            cfg.seed = seed;
            cfg.solver.seed = seed;
        }
        if self.no_certify {
            cfg.certify = false;
        }
        Ok(cfg)
    }
}

/// Observation, ground truth (when known) and fidelity for a run.
pub struct Problem {
    pub observation: Image,
    pub truth: Option<Image>,
    pub fidelity: FidelityHandle,
}

fn task_kernel(task: &TaskSpec) -> Result<Kernel> {
    match &task.kernel {
        Some(p) => io::load_kernel(p),
        None => Ok(Kernel::binomial3()),
    }
}

/// Degrades `clean` as the task prescribes, seeded by `seed`.
pub fn synthesize_observation(task: &TaskSpec, clean: &Image, seed: u64) -> Result<Image> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noisy = |img: Image| {
        let noise = Image::random_normal(img.height(), img.width(), &mut rng).scale(task.noise_sigma / 255.0);
        &img + &noise
    };
    match task.kind {
        Task::Deblur => Ok(noisy(linop::conv_circular(clean, &task_kernel(task)?)?)),
        Task::Sisr => {
            let blurred = linop::conv_circular(clean, &task_kernel(task)?)?;
            Ok(noisy(linop::downsample(&blurred, task.scale)?))
        }
        Task::Poisson => fidelity::sample_poisson_observation(clean, task.peak, seed),
    }
}

pub fn build_fidelity(task: &TaskSpec, observation: Image) -> Result<FidelityHandle> {
    Ok(match task.kind {
        Task::Deblur => Arc::new(fidelity::make_deblur_fidelity(observation, task_kernel(task)?, task.mu)?),
        Task::Sisr => Arc::new(fidelity::make_sisr_fidelity(observation, task_kernel(task)?, task.scale, task.mu)?),
        Task::Poisson => Arc::new(fidelity::make_poisson_fidelity(observation, task.mu, task.peak)?),
    })
}

/// Loads or synthesizes the observation named by `cfg`.
pub fn build_problem(cfg: &RunConfig) -> Result<Problem> {
    let (observation, truth) = if let Some(input) = &cfg.input {
        let truth = cfg.truth.as_deref().map(io::load_image).transpose()?;
        (io::load_image(input)?, truth)
    } else {
        let clean = match (&cfg.clean, &cfg.phantom) {
            (Some(p), _) => io::load_image(p)?,
            (None, Some(name)) => phantoms::by_name(name, cfg.phantom_size, cfg.phantom_size)
                .ok_or_else(|| Error::InvalidParameter(format!("unknown phantom {name:?}")))?,
            (None, None) => return Err(Error::param("one of input, clean or phantom is required")),
        };
        (synthesize_observation(&cfg.task, &clean, cfg.seed)?, Some(clean))
    };
    let fidelity = build_fidelity(&cfg.task, observation.clone())?;
    if let Some(t) = &truth {
        if t.shape() != fidelity.solution_shape() {
            return Err(Error::dim("ground truth does not match the restored image shape"));
        }
    }
    Ok(Problem { observation, truth, fidelity })
}

/// Assumptions certified before a restoration run.
fn restore_assumptions(spec: &DenoiserSpec) -> Vec<Assumption> {
    let mut out = vec![Assumption::Nonexpansive, Assumption::PseudoContractive];
    if let Some(k) = spec.claims().k {
        if k > 0.0 && k < 1.0 {
            out.push(Assumption::StrictPc(k));
        }
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RestoreReport {
    pub task: Task,
    pub denoiser: String,
    pub solver: String,
    pub iterations: usize,
    pub stop: Option<solvers::StopReason>,
    pub diverged_at: Option<usize>,
    pub final_fp_residual: Option<f64>,
    pub final_relative_fp_residual: Option<f64>,
    pub psnr_observation: Option<f64>,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub hypotheses: HypothesisReport,
    /// Why certification was skipped or failed.
    pub certification_note: Option<String>,
    pub config: RunConfig,
}

pub fn cmd_restore(args: &RestoreArgs) -> Result<i32> {
    let cfg = args.resolve()?;
    cfg.validate()?;
    let denoiser = build_denoiser(&cfg.denoiser)?;
    let spec = denoiser.spec();
    let problem = build_problem(&cfg)?;
    let meta = Meta::with_hash(cfg.hash(), cfg.seed);
    fs::create_dir_all(&cfg.out_dir)?;
    let ext = cfg.output_format.extension();
    let comment = meta.comment();

    io::save_image_with_comment(
        &problem.observation,
        &cfg.out_dir.join(format!("observation.{ext}")),
        Some(&comment),
    )?;

    let (cert, certification_note) = if cfg.certify {
        match spectral::certify(denoiser.as_ref(), &cfg.probe, &restore_assumptions(&spec)) {
            Ok(c) => {
                write_json(&cfg.out_dir.join("certificate.json"), &meta, &c)?;
                (Some(c), None)
            }
            Err(e @ Error::Capability(_)) => (None, Some(e.to_string())),
            Err(e) => return Err(e),
        }
    } else {
        (None, Some("certification disabled".to_string()))
    };
    let hypotheses = check_hypotheses(cert.as_ref(), problem.fidelity.as_ref(), &cfg.solver);

    let outcome = solvers::run_solver(denoiser.as_ref(), problem.fidelity.as_ref(), &cfg.solver, problem.truth.as_ref());
    let (trace, diverged_at) = match outcome {
        Ok(t) => (t, None),
        Err(Error::Divergence { iteration, trace }) => (*trace, Some(iteration)),
        Err(e) => return Err(e),
    };
    write_trace(&cfg.out_dir.join("trace.csv"), &meta, &trace)?;
    io::save_image_with_comment(&trace.final_image, &cfg.out_dir.join(format!("restored.{ext}")), Some(&comment))?;

    let (mut psnr_observation, mut psnr, mut ssim) = (None, None, None);
    if let Some(truth) = &problem.truth {
        if problem.observation.shape() == truth.shape() {
            psnr_observation = Some(metrics::psnr(&problem.observation, truth)?);
        }
        psnr = Some(metrics::psnr(&trace.final_image, truth)?);
        ssim = Some(metrics::ssim(&trace.final_image, truth)?);
    }
    let report = RestoreReport {
        task: cfg.task.kind,
        denoiser: cfg.denoiser.clone(),
        solver: cfg.solver.kind.to_string(),
        iterations: trace.records.len(),
        stop: diverged_at.is_none().then_some(trace.stop),
        diverged_at,
        final_fp_residual: trace.final_fp_residual(),
        final_relative_fp_residual: trace.final_relative_fp_residual(),
        psnr_observation,
        psnr,
        ssim,
        hypotheses,
        certification_note,
        config: cfg.clone(),
    };
    write_json(&cfg.out_dir.join("report.json"), &meta, &report)?;

    eprintln!(
        "{} {} with {}: {} iterations, fp residual {}",
        report.solver,
        report.task,
        report.denoiser,
        report.iterations,
        report.final_fp_residual.map_or("n/a".into(), |r| format!("{r:.3e}")),
    );
    if let (Some(p), Some(s)) = (psnr, ssim) {
        let obs = psnr_observation.map_or(String::new(), |o| format!(" (observation {o:.2} dB)"));
        eprintln!("PSNR {p:.2} dB{obs}, SSIM {s:.4}");
    }
    if let Some(n) = diverged_at {
        eprintln!("error: divergence at iteration {n}; partial trace written");
        return Ok(EXIT_DIVERGENCE);
    }
    Ok(EXIT_OK)
}

// ---------------------------------------------------------------- certify

pub fn cmd_certify(args: &CertifyArgs) -> Result<i32> {
    let d = build_denoiser(&args.denoiser)?;
    let assumptions = spectral::parse_assumptions(&args.assumption)?;
    let mut probe = ProbeConfig::default();
    if let Some(s) = &args.sigmas {
        probe.sigmas = s.clone();
    }
    if let Some(n) = args.size {
        probe.image_size = n;
    }
    if let Some(n) = args.power_iters {
        probe.power_iters = n;
    }
    if let Some(n) = args.inner_steps {
        probe.inner_steps = n;
    }
    if let Some(s) = args.seed {
        probe.seed = s;
    }
    probe.validate()?;
    let cert = spectral::certify(d.as_ref(), &probe, &assumptions)?;

    #[derive(Serialize)]
    struct Hashed<'a> {
        denoiser: String,
        assumptions: &'a [Assumption],
        probe: &'a ProbeConfig,
    }
    let meta = Meta::new(&Hashed { denoiser: args.denoiser.clone(), assumptions: &assumptions, probe: &probe }, probe.seed);
    if let Some(out) = &args.out {
        if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        write_json(out, &meta, &cert)?;
    }
    print_certificate(&cert);
    Ok(match cert.all_hold() {
        Some(true) => EXIT_OK,
        Some(false) => EXIT_VIOLATED,
        None => {
            eprintln!("error: some requested norms could not be measured: {}", cert.unavailable.join("; "));
            EXIT_CAPABILITY
        }
    })
}

fn print_certificate(cert: &SpectralCertificate) {
    let m = &cert.maxima;
    let show = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.6}"));
    println!("denoiser {} ({} samples)", cert.denoiser, cert.sample_count);
    println!("  norm_J        {}", show(m.norm_j));
    println!("  norm_2J-I     {}", show(m.norm_firm));
    println!("  norm_I-J      {}", show(m.norm_residual));
    for (k, v) in &m.norm_spc {
        println!("  norm_spc({k})  {v:.6}");
    }
    println!("  pc_norm       {}", show(m.pc_norm));
    println!("  lambda_max(S) {}", show(m.smax));
    for (a, v) in &cert.requested {
        let verdict = match v {
            Some(true) => "holds",
            Some(false) => "VIOLATED",
            None => "unavailable",
        };
        println!("  {a}: {verdict}");
    }
}

// ---------------------------------------------------------------- verify

#[derive(Debug, Serialize)]
pub struct VerifySummary {
    pub passed: bool,
    pub reports: Vec<LemmaReport>,
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<i32> {
    let suites: Vec<LemmaSuite> = if args.suite == "all" {
        LemmaSuite::ALL.to_vec()
    } else {
        args.suite.split(',').map(|s| s.trim().parse()).collect::<Result<_>>()?
    };
    let reports = suites
        .into_iter()
        .map(|s| oracle::verify_lemma(s, args.trials, args.seed))
        .collect::<Result<Vec<_>>>()?;
    let summary = VerifySummary { passed: reports.iter().all(|r| r.passed), reports };

    #[derive(Serialize)]
    struct Hashed<'a> {
        suite: &'a str,
        trials: usize,
        seed: u64,
    }
    let meta = Meta::new(&Hashed { suite: &args.suite, trials: args.trials, seed: args.seed }, args.seed);
    if let Some(out) = &args.out {
        write_json(out, &meta, &summary)?;
    }
    if args.json {
        println!("{}", serde_json::to_string_pretty(&Stamped { meta: &meta, body: &summary })?);
    } else {
        for r in &summary.reports {
            println!(
                "{:<9} {} max violation {:.3e} over {} trials",
                r.suite.name(),
                if r.passed { "PASS" } else { "FAIL" },
                r.max_violation,
                r.trials
            );
            if let Some(c) = r.tight_composite_constant {
                println!("          tight composite constant {c:.9}");
            }
        }
    }
    Ok(if summary.passed { EXIT_OK } else { EXIT_VIOLATED })
}

// ---------------------------------------------------------------- bench

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchOperator {
    /// 90° rotation of pixel pairs: non-expansive, fixed point 0, Picard cycles.
    Rotation,
    /// `u / 2`.
    Contraction,
    /// `2R - I` for the rotation `R`: ½-strictly pseudo-contractive, Lipschitz √5.
    Spc,
}

impl BenchOperator {
    fn name(self) -> &'static str {
        match self {
            BenchOperator::Rotation => "rotation",
            BenchOperator::Contraction => "contraction",
            BenchOperator::Spc => "spc",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "rotation" => Ok(BenchOperator::Rotation),
            "contraction" => Ok(BenchOperator::Contraction),
            "spc" => Ok(BenchOperator::Spc),
            _ => Err(Error::Parse(format!("unknown bench operator {s:?}"))),
        }
    }

    fn map(self) -> Box<dyn Fn(&Image) -> Image> {
        match self {
            BenchOperator::Rotation => Box::new(|u| PairRotation.apply(u)),
            BenchOperator::Contraction => Box::new(|u| ScaledIdentity(0.5).apply(u)),
            BenchOperator::Spc => {
                let d = DenoiserSpec::Spc { base: SpcBase::Rot90, k: 0.5 }.build().expect("valid spec");
                Box::new(move |u| d.apply(u, 0.0))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchSolver {
    Picard,
    Ishikawa,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchConfig {
    pub operators: Vec<BenchOperator>,
    pub solvers: Vec<BenchSolver>,
    pub schedules: Vec<Schedule>,
    pub iters: usize,
    pub size: usize,
    pub seed: u64,
}

impl BenchArgs {
    pub fn resolve(&self) -> Result<BenchConfig> {
        let list = |s: &str| -> Vec<String> {
            s.split(',').map(|p| p.trim().to_string()).filter(|p| !p.is_empty()).collect()
        };
        let operators = list(&self.operators).iter().map(|s| BenchOperator::parse(s)).collect::<Result<_>>()?;
        let solvers = list(&self.solvers)
            .iter()
            .map(|s| match s.as_str() {
                "picard" => Ok(BenchSolver::Picard),
                "ishikawa" => Ok(BenchSolver::Ishikawa),
                _ => Err(Error::Parse(format!("unknown bench solver {s:?}"))),
            })
            .collect::<Result<_>>()?;
        let schedules = list(&self.schedules)
            .iter()
            .map(|s| {
                let (a, b) = s.split_once(':').ok_or_else(|| Error::Parse(format!("schedule {s:?} is not a:b")))?;
                let num = |v: &str| v.parse::<f64>().map_err(|_| Error::Parse(format!("bad number in schedule {s:?}")));
                Schedule::new(num(a)?, num(b)?)
            })
            .collect::<Result<_>>()?;
        if self.size < 2 || !self.size.is_multiple_of(2) {
            return Err(Error::param("bench image size must be even and at least 2"));
        }
        Ok(BenchConfig { operators, solvers, schedules, iters: self.iters, size: self.size, seed: self.seed })
    }
}

pub const BENCH_SUMMARY_HEADER: &str =
    "operator,solver,a,b,iterations,initial_norm,final_norm,final_fp_residual,status,file";

/// One (operator, solver, schedule) run per grid point; Picard ignores the
/// schedule. An empty schedule grid yields a summary with only its header.
pub fn cmd_bench(args: &BenchArgs) -> Result<i32> {
    let cfg = args.resolve()?;
    let meta = Meta::new(&cfg, cfg.seed);
    fs::create_dir_all(&args.out_dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let u0 = Image::random_normal(cfg.size, cfg.size, &mut rng);

    let mut summary = Vec::new();
    writeln!(summary, "# {}", meta.comment())?;
    writeln!(summary, "{BENCH_SUMMARY_HEADER}")?;
    for &op in &cfg.operators {
        let t = op.map();
        for schedule in &cfg.schedules {
            for &solver in &cfg.solvers {
                let stepper = match solver {
                    BenchSolver::Picard => Stepper::Relaxed(1.0),
                    BenchSolver::Ishikawa => Stepper::Ishikawa(*schedule),
                };
                let opts = LoopOptions { max_iters: cfg.iters, ..LoopOptions::default() };
                let (trace, status) = match solvers::fixed_point_iterate(|u, _| Ok(t(u)), &u0, stepper, opts) {
                    Ok(tr) => (tr, "ok".to_string()),
                    Err(Error::Divergence { iteration, trace }) => (*trace, format!("diverged@{iteration}")),
                    Err(e) => return Err(e),
                };
                let solver_name = match solver {
                    BenchSolver::Picard => "picard",
                    BenchSolver::Ishikawa => "ishikawa",
                };
                let file = format!("{}_{}_a{}_b{}.csv", op.name(), solver_name, schedule.a, schedule.b);
                write_trace(&args.out_dir.join(&file), &meta, &trace)?;
                writeln!(
                    summary,
                    "{},{},{},{},{},{:e},{:e},{},{},{}",
                    op.name(),
                    solver_name,
                    schedule.a,
                    schedule.b,
                    trace.records.len(),
                    u0.norm(),
                    trace.final_image.norm(),
                    trace.final_fp_residual().map_or(String::new(), |r| format!("{r:e}")),
                    status,
                    file
                )?;
            }
        }
    }
    fs::write(args.out_dir.join("summary.csv"), &summary)?;
    print!("{}", String::from_utf8_lossy(&summary));
    Ok(EXIT_OK)
}
