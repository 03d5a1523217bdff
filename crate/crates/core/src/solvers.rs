//! Ishikawa fixed-point iteration and the plug-and-play solvers built on it.
//!
//! Every solver iterates a map `T` assembled from a denoiser `D_β` and a
//! fidelity `G`:
//!
//! | solver | `T(u)` |
//! |---|---|
//! | gd  | `D_β(u) - ∇G(u)` |
//! | hqs | `D_β(Prox_{G/β}(u))` |
//! | fbs | `D_β(u - λ∇G(u))` |
//!
//! The `pnpi-*` kinds run the two-step Ishikawa process with decaying steps;
//! the `pnp-*` baselines run the relaxed Picard step `u ← (1-α)u + αT(u)`.
//! The denoiser strength is `σ = 1/√β` gray levels.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::denoisers::Denoiser;
use crate::error::{Error, Result};
use crate::fidelity::Fidelity;
use crate::image::Image;
use crate::metrics;
use crate::spectral::SpectralCertificate;

/// Iterates with a norm beyond this are treated as divergent.
pub const DIVERGENCE_NORM: f64 = 1e150;

/// `α(n) = (n + shift)^-a`, `β(n) = (n + shift)^-b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub a: f64,
    pub b: f64,
    #[serde(default = "default_shift")]
    pub index_shift: u32,
}

fn default_shift() -> u32 {
    2
}

impl Schedule {
    /// Requires `0 < b < a < 1` and `a + b < 1`.
    pub fn new(a: f64, b: f64) -> Result<Self> {
        Self::with_shift(a, b, 2)
    }

    pub fn with_shift(a: f64, b: f64, index_shift: u32) -> Result<Self> {
        let s = Schedule { a, b, index_shift };
        s.validate()?;
        Ok(s)
    }

    /// `a = 0.3, b = 0.15`
    pub fn gd_default() -> Self {
        Schedule { a: 0.3, b: 0.15, index_shift: 2 }
    }

    /// `a = 0.8, b = 0.15`
    pub fn hqs_default() -> Self {
        Schedule { a: 0.8, b: 0.15, index_shift: 2 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.b && self.b < self.a && self.a < 1.0) {
            return Err(Error::param(format!("schedule needs 0 < b < a < 1, got a = {}, b = {}", self.a, self.b)));
        }
        if !(self.a + self.b < 1.0) {
            return Err(Error::param(format!("schedule needs a + b < 1, got {}", self.a + self.b)));
        }
        if self.index_shift < 2 {
            return Err(Error::param("index shift below 2 gives a first step of 1"));
        }
        Ok(())
    }

    pub fn alpha(&self, n: usize) -> f64 {
        (n as f64 + self.index_shift as f64).powf(-self.a)
    }

    pub fn beta(&self, n: usize) -> f64 {
        (n as f64 + self.index_shift as f64).powf(-self.b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    PnpiGd,
    PnpiHqs,
    PnpiFbs,
    PnpGd,
    PnpHqs,
    PnpFbs,
}

impl SolverKind {
    pub const ALL: [SolverKind; 6] = [
        SolverKind::PnpiGd,
        SolverKind::PnpiHqs,
        SolverKind::PnpiFbs,
        SolverKind::PnpGd,
        SolverKind::PnpHqs,
        SolverKind::PnpFbs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::PnpiGd => "pnpi-gd",
            SolverKind::PnpiHqs => "pnpi-hqs",
            SolverKind::PnpiFbs => "pnpi-fbs",
            SolverKind::PnpGd => "pnp-gd",
            SolverKind::PnpHqs => "pnp-hqs",
            SolverKind::PnpFbs => "pnp-fbs",
        }
    }

    pub fn is_ishikawa(self) -> bool {
        matches!(self, SolverKind::PnpiGd | SolverKind::PnpiHqs | SolverKind::PnpiFbs)
    }

    pub fn splitting(self) -> Splitting {
        match self {
            SolverKind::PnpiGd | SolverKind::PnpGd => Splitting::Gd,
            SolverKind::PnpiHqs | SolverKind::PnpHqs => Splitting::Hqs,
            SolverKind::PnpiFbs | SolverKind::PnpFbs => Splitting::Fbs,
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SolverKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown solver {s:?}")))
    }
}

/// How `T` is assembled from the denoiser and the fidelity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Splitting {
    Gd,
    Hqs,
    Fbs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub kind: SolverKind,
    pub schedule: Schedule,
    pub max_iters: usize,
    /// Stop once `‖T(u) - u‖ / ‖u‖ <= tol`; zero runs all `max_iters`.
    pub tol: f64,
    /// Denoiser strength parameter.
    pub beta: f64,
    /// Forward step of FBS.
    pub lambda: f64,
    /// `β` is multiplied by this after every iteration.
    pub beta_growth: f64,
    /// Project every iterate onto `[0, 1]`.
    pub project_box: bool,
    /// Relaxation `α` of the Picard baselines.
    pub relaxation: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            kind: SolverKind::PnpiHqs,
            schedule: Schedule::hqs_default(),
            max_iters: 300,
            tol: 1e-6,
            beta: 1.0 / (15.0 * 15.0),
            lambda: 1.0,
            beta_growth: 1.0,
            project_box: false,
            relaxation: 1.0,
            seed: 0,
        }
    }
}

impl SolverConfig {
    /// Defaults for `kind` with the matching schedule.
    pub fn for_kind(kind: SolverKind) -> Self {
        let schedule = match kind.splitting() {
            Splitting::Gd => Schedule::gd_default(),
            _ => Schedule::hqs_default(),
        };
        SolverConfig { kind, schedule, ..SolverConfig::default() }
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::param(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::param(format!("lambda must be nonnegative, got {}", self.lambda)));
        }
        if !(self.beta_growth >= 1.0 && self.beta_growth.is_finite()) {
            return Err(Error::param(format!("beta growth must be at least 1, got {}", self.beta_growth)));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::param("tolerance must be nonnegative"));
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            return Err(Error::param(format!("relaxation must lie in (0, 1], got {}", self.relaxation)));
        }
        Ok(())
    }

    /// `β` in effect at iteration `n`.
    pub fn beta_at(&self, n: usize) -> f64 {
        self.beta * self.beta_growth.powi(n as i32)
    }
}

/// Denoiser noise level (out of 255) matching strength `β`.
pub fn sigma_of_beta(beta: f64) -> f64 {
    (1.0 / beta).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub n: usize,
    /// `‖T(uⁿ) - uⁿ‖` for the map in effect at step `n`.
    pub fp_residual: f64,
    /// `‖uⁿ⁺¹ - uⁿ‖`
    pub step_residual: f64,
    /// PSNR of `uⁿ⁺¹` against the ground truth, when given.
    pub psnr: Option<f64>,
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Tolerance,
    MaxIters,
}

#[derive(Debug, Clone)]
pub struct IterTrace {
    pub records: Vec<IterRecord>,
    pub final_image: Image,
    pub stop: StopReason,
    pub hypotheses: Option<HypothesisReport>,
}

pub const TRACE_CSV_HEADER: &str = "n,fp_residual,step_residual,psnr,alpha,beta";

impl IterTrace {
    /// Fixed-point residual of the last recorded step.
    pub fn final_fp_residual(&self) -> Option<f64> {
        self.records.last().map(|r| r.fp_residual)
    }

    /// The last fixed-point residual divided by the norm of the final image.
    pub fn final_relative_fp_residual(&self) -> Option<f64> {
        let n = self.final_image.norm();
        self.final_fp_residual().map(|r| if n > 0.0 { r / n } else { r })
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{TRACE_CSV_HEADER}")?;
        for r in &self.records {
            let psnr = r.psnr.map(|p| format!("{p:e}")).unwrap_or_default();
            writeln!(
                out,
                "{},{:e},{:e},{},{:e},{:e}",
                r.n, r.fp_residual, r.step_residual, psnr, r.alpha, r.beta
            )?;
        }
        Ok(())
    }
}

/// Step rule of a fixed-point loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stepper {
    /// `y = (1-βₙ)u + βₙT(u)`, `u⁺ = (1-αₙ)u + αₙT(y)`
    Ishikawa(Schedule),
    /// `u⁺ = (1-α)u + αT(u)`
    Relaxed(f64),
}

/// Loop controls shared by every fixed-point driver.
#[derive(Debug, Clone, Copy, Default)]
pub struct LoopOptions<'a> {
    pub max_iters: usize,
    /// Relative fixed-point tolerance; zero disables early stopping.
    pub tol: f64,
    pub project_box: bool,
    pub truth: Option<&'a Image>,
}

/// Runs `u ← step(T, u)` where `t(u, n)` evaluates the map in effect at step `n`.
pub fn fixed_point_iterate(
    mut t: impl FnMut(&Image, usize) -> Result<Image>,
    u0: &Image,
    stepper: Stepper,
    opts: LoopOptions<'_>,
) -> Result<IterTrace> {
    if let Stepper::Ishikawa(s) = stepper {
        s.validate()?;
    }
    if let Some(truth) = opts.truth {
        u0.check_same_shape(truth)?;
    }
    let mut u = u0.clone();
    let mut records = Vec::with_capacity(opts.max_iters);
    let mut stop = StopReason::MaxIters;
    let diverged = |n: usize, records: &Vec<IterRecord>, last: &Image| Error::Divergence {
        iteration: n,
        trace: Box::new(IterTrace {
            records: records.clone(),
            final_image: last.clone(),
            stop: StopReason::MaxIters,
            hypotheses: None,
        }),
    };
    for n in 0..opts.max_iters {
        let tu = t(&u, n)?;
        if !tu.data().iter().all(|v| v.is_finite()) {
            return Err(diverged(n, &records, &u));
        }
        let fp = (&tu - &u).norm();
        let un = u.norm();
        if opts.tol > 0.0 && fp <= opts.tol * un.max(f64::MIN_POSITIVE) {
            stop = StopReason::Tolerance;
            break;
        }
        let (alpha, beta, next) = match stepper {
            Stepper::Ishikawa(s) => {
                let (a, b) = (s.alpha(n), s.beta(n));
                let y = u.lincomb(1.0 - b, &tu, b);
                let ty = t(&y, n)?;
                (a, b, u.lincomb(1.0 - a, &ty, a))
            }
            Stepper::Relaxed(a) => (a, 0.0, u.lincomb(1.0 - a, &tu, a)),
        };
        let next = if opts.project_box { next.clamp(0.0, 1.0) } else { next };
        if !next.data().iter().all(|v| v.is_finite()) || next.norm() > DIVERGENCE_NORM {
            return Err(diverged(n, &records, &u));
        }
        let psnr = match opts.truth {
            Some(truth) => Some(metrics::psnr(&next, truth)?),
            None => None,
        };
        records.push(IterRecord { n, fp_residual: fp, step_residual: (&next - &u).norm(), psnr, alpha, beta });
        u = next;
    }
    Ok(IterTrace { records, final_image: u, stop, hypotheses: None })
}

/// Ishikawa process for a fixed map `T`.
pub fn ishikawa_iterate(
    t: impl Fn(&Image) -> Image,
    u0: &Image,
    schedule: Schedule,
    max_iters: usize,
    tol: f64,
) -> Result<IterTrace> {
    fixed_point_iterate(
        |u, _| Ok(t(u)),
        u0,
        Stepper::Ishikawa(schedule),
        LoopOptions { max_iters, tol, ..LoopOptions::default() },
    )
}

/// Plain iteration `u ← T(u)`.
pub fn picard_iterate(t: impl Fn(&Image) -> Image, u0: &Image, max_iters: usize, tol: f64) -> Result<IterTrace> {
    fixed_point_iterate(
        |u, _| Ok(t(u)),
        u0,
        Stepper::Relaxed(1.0),
        LoopOptions { max_iters, tol, ..LoopOptions::default() },
    )
}

/// Evaluates the splitting map `T` at `u` for strength `beta`.
pub fn splitting_map(
    splitting: Splitting,
    d: &dyn Denoiser,
    g: &dyn Fidelity,
    beta: f64,
    lambda: f64,
    u: &Image,
) -> Result<Image> {
    let sigma = sigma_of_beta(beta);
    match splitting {
        Splitting::Gd => Ok(&d.apply(u, sigma) - &g.solver_grad(u)?),
        Splitting::Hqs => Ok(d.apply(&g.prox(u, 1.0 / beta)?, sigma)),
        Splitting::Fbs => Ok(d.apply(&u.lincomb(1.0, &g.solver_grad(u)?, -lambda), sigma)),
    }
}

/// Runs the solver selected by `cfg.kind`, starting from the fidelity's initial estimate.
pub fn run_solver(d: &dyn Denoiser, g: &dyn Fidelity, cfg: &SolverConfig, truth: Option<&Image>) -> Result<IterTrace> {
    run_solver_from(d, g, cfg, &g.initial_estimate(), truth)
}

pub fn run_solver_from(
    d: &dyn Denoiser,
    g: &dyn Fidelity,
    cfg: &SolverConfig,
    u0: &Image,
    truth: Option<&Image>,
) -> Result<IterTrace> {
    cfg.validate()?;
    if u0.shape() != g.solution_shape() {
        return Err(Error::dim("initial estimate does not match the fidelity's solution space"));
    }
    let stepper = if cfg.kind.is_ishikawa() {
        Stepper::Ishikawa(cfg.schedule)
    } else {
        Stepper::Relaxed(cfg.relaxation)
    };
    let splitting = cfg.kind.splitting();
    let t = |u: &Image, n: usize| splitting_map(splitting, d, g, cfg.beta_at(n), cfg.lambda, u);
    let opts = LoopOptions { max_iters: cfg.max_iters, tol: cfg.tol, project_box: cfg.project_box, truth };
    fixed_point_iterate(t, u0, stepper, opts)
}

fn run_kind(
    kind: SolverKind,
    d: &dyn Denoiser,
    g: &dyn Fidelity,
    cfg: &SolverConfig,
    truth: Option<&Image>,
) -> Result<IterTrace> {
    run_solver(d, g, &SolverConfig { kind, ..cfg.clone() }, truth)
}

/// Ishikawa iteration of `T = D_β - ∇G`.
pub fn pnpi_gd(d: &dyn Denoiser, g: &dyn Fidelity, cfg: &SolverConfig, truth: Option<&Image>) -> Result<IterTrace> {
    run_kind(SolverKind::PnpiGd, d, g, cfg, truth)
}

/// Ishikawa iteration of `T = D_β ∘ Prox_{G/β}`.
pub fn pnpi_hqs(d: &dyn Denoiser, g: &dyn Fidelity, cfg: &SolverConfig, truth: Option<&Image>) -> Result<IterTrace> {
    run_kind(SolverKind::PnpiHqs, d, g, cfg, truth)
}

/// Ishikawa iteration of `T = D_β ∘ (I - λ∇G)`.
pub fn pnpi_fbs(d: &dyn Denoiser, g: &dyn Fidelity, cfg: &SolverConfig, truth: Option<&Image>) -> Result<IterTrace> {
    run_kind(SolverKind::PnpiFbs, d, g, cfg, truth)
}

/// Relaxed Picard iteration with the same map as the matching Ishikawa solver.
pub fn pnp_baseline(
    splitting: Splitting,
    d: &dyn Denoiser,
    g: &dyn Fidelity,
    cfg: &SolverConfig,
    truth: Option<&Image>,
) -> Result<IterTrace> {
    let kind = match splitting {
        Splitting::Gd => SolverKind::PnpGd,
        Splitting::Hqs => SolverKind::PnpHqs,
        Splitting::Fbs => SolverKind::PnpFbs,
    };
    run_kind(kind, d, g, cfg, truth)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckStatus {
    Satisfied,
    Violated,
    Unknown,
}

impl From<bool> for CheckStatus {
    fn from(b: bool) -> Self {
        if b {
            CheckStatus::Satisfied
        } else {
            CheckStatus::Violated
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremCheck {
    pub status: CheckStatus,
    pub note: String,
}

impl TheoremCheck {
    fn new(status: CheckStatus, note: impl Into<String>) -> Self {
        TheoremCheck { status, note: note.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    /// GD: `D` pseudo-contractive and `G` convex with Lipschitz gradient.
    pub theorem1: TheoremCheck,
    /// HQS: `k <= (2γ+1)/(2γ+2)`.
    pub theorem2: TheoremCheck,
    /// FBS: `λ <= 2γ` and `k <= 1 - λ/(2γ)`.
    pub theorem3: TheoremCheck,
    pub k: Option<f64>,
    pub gamma: Option<f64>,
    pub lambda: f64,
    /// `θ = 1/(2γ+2)`, the averagedness of the prox.
    pub prox_theta: Option<f64>,
    /// Strict pseudo-contractivity constant of `D ∘ Prox`.
    pub composite_constant: Option<f64>,
    /// `λ/(2γ)`, the averagedness of `I - λ∇G`.
    pub forward_theta: Option<f64>,
}

/// `k <= (2γ+1)/(2γ+2)`; an infinite `γ` gives the bound 1.
pub fn theorem2_holds(k: f64, gamma: f64) -> bool {
    let bound = if gamma.is_infinite() { 1.0 } else { (2.0 * gamma + 1.0) / (2.0 * gamma + 2.0) };
    k <= bound
}

/// `0 <= λ <= 2γ` and `k <= 1 - λ/(2γ)`.
pub fn theorem3_holds(k: f64, gamma: f64, lambda: f64) -> bool {
    if lambda < 0.0 || lambda > 2.0 * gamma {
        return false;
    }
    let ratio = if lambda == 0.0 { 0.0 } else { lambda / (2.0 * gamma) };
    k <= 1.0 - ratio
}

/// `l = k(1-θ)/((1-θ) - kθ)`: the composite of a `k`-strictly
/// pseudo-contractive map with a `θ`-averaged one, defined when the
/// denominator is positive.
pub fn composite_constant(k: f64, theta: f64) -> Option<f64> {
    let denom = (1.0 - theta) - k * theta;
    (denom > 0.0).then(|| k * (1.0 - theta) / denom)
}

/// Evaluates the convergence hypotheses from a certificate (source of `k`
/// and of the pseudo-contractivity verdict) and a fidelity (source of `γ`).
/// Missing inputs yield `unknown`, never an error.
pub fn check_hypotheses(cert: Option<&SpectralCertificate>, g: &dyn Fidelity, cfg: &SolverConfig) -> HypothesisReport {
    let gamma = g.cocoercivity();
    let k = cert.and_then(|c| c.certified_k());
    let pc = cert.and_then(|c| c.verdicts.pseudo_contractive);
    let smooth = g.grad_lipschitz().is_some();

    let theorem1 = match (pc, smooth) {
        (_, false) => TheoremCheck::new(
            CheckStatus::Unknown,
            "the fidelity gradient is not globally Lipschitz; behaviour near the domain boundary is governed by the clamp",
        ),
        (None, true) => TheoremCheck::new(CheckStatus::Unknown, "no pseudo-contractivity verdict for the denoiser"),
        (Some(p), true) => TheoremCheck::new(
            p.into(),
            if p { "denoiser pseudo-contractive, fidelity convex and smooth" } else { "denoiser not pseudo-contractive" },
        ),
    };

    const NOT_COCOERCIVE: &str = "fidelity gradient is not cocoercive; no gamma available";
    let theorem2 = match (k, gamma) {
        (_, None) => TheoremCheck::new(CheckStatus::Unknown, NOT_COCOERCIVE),
        (None, Some(_)) => TheoremCheck::new(CheckStatus::Unknown, "no strict pseudo-contractivity constant certified"),
        (Some(k), Some(gm)) => {
            let ok = theorem2_holds(k, gm);
            TheoremCheck::new(ok.into(), format!("k = {k}, gamma = {gm}"))
        }
    };
    let theorem3 = match (k, gamma) {
        (_, None) => TheoremCheck::new(CheckStatus::Unknown, NOT_COCOERCIVE),
        (None, Some(_)) => TheoremCheck::new(CheckStatus::Unknown, "no strict pseudo-contractivity constant certified"),
        (Some(k), Some(gm)) => {
            let ok = theorem3_holds(k, gm, cfg.lambda);
            TheoremCheck::new(ok.into(), format!("k = {k}, gamma = {gm}, lambda = {}", cfg.lambda))
        }
    };

    let prox_theta = gamma.map(|gm| if gm.is_infinite() { 0.0 } else { 1.0 / (2.0 * gm + 2.0) });
    HypothesisReport {
        theorem1,
        theorem2,
        theorem3,
        k,
        gamma,
        lambda: cfg.lambda,
        prox_theta,
        composite_constant: k.zip(prox_theta).and_then(|(k, t)| composite_constant(k, t)),
        forward_theta: gamma.map(|gm| cfg.lambda / (2.0 * gm)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoisers::IdentityDenoiser;
    use crate::fidelity::make_deblur_fidelity;
    use crate::image::Kernel;
    use crate::linop::{LinearOperator, PairRotation};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn schedule_contract() {
        assert!(Schedule::new(0.15, 0.3).is_err());
        assert!(Schedule::new(0.6, 0.5).is_err());
        assert!(Schedule::with_shift(0.3, 0.15, 1).is_err());
        for s in [Schedule::gd_default(), Schedule::hqs_default()] {
            for n in (0..1_000_000).step_by(997) {
                assert!(s.alpha(n) <= s.beta(n) && s.beta(n) < 1.0);
            }
            assert!(s.beta(1_000_000) < 0.2);
        }
    }

    #[test]
    fn identity_map_stops_immediately() {
        let u0 = Image::constant(2, 2, 0.3);
        let t = ishikawa_iterate(|u| u.clone(), &u0, Schedule::gd_default(), 100, 1e-6).unwrap();
        assert!(t.records.is_empty());
        assert_eq!(t.stop, StopReason::Tolerance);
        assert_eq!(t.final_image, u0);
    }

    #[test]
    fn contraction_converges() {
        let u0 = Image::constant(2, 2, 1.0);
        let t = ishikawa_iterate(|u| u.scale(0.5), &u0, Schedule::gd_default(), 200, 0.0).unwrap();
        assert!(t.final_image.norm() < 1e-6);
        for w in t.records.windows(2) {
            assert!(w[1].fp_residual < w[0].fp_residual);
        }
    }

    #[test]
    fn rotation_picard_vs_ishikawa() {
        let u0 = Image::new(1, 2, vec![1.0, 0.0]).unwrap();
        let rot = |u: &Image| PairRotation.apply(u);
        let p = picard_iterate(rot, &u0, 100, 0.0).unwrap();
        assert!((p.final_image.norm() - 1.0).abs() < 1e-12);
        let i = ishikawa_iterate(rot, &u0, Schedule::gd_default(), 2000, 0.0).unwrap();
        assert!(i.final_image.norm() < 0.5);
    }

    #[test]
    fn divergence_is_reported_with_trace() {
        let u0 = Image::constant(1, 1, 1.0);
        let err = picard_iterate(|u| u.scale(1e30), &u0, 100, 0.0).unwrap_err();
        match err {
            Error::Divergence { iteration, trace } => {
                assert_eq!(trace.records.len(), iteration);
                assert!(iteration > 0);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn gd_with_identity_denoiser_recovers_observation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = Image::random_uniform(4, 4, &mut rng);
        let g = make_deblur_fidelity(f.clone(), Kernel::delta(), 0.5).unwrap();
        let cfg = SolverConfig { max_iters: 20000, tol: 1e-12, ..SolverConfig::for_kind(SolverKind::PnpiGd) };
        let t = pnpi_gd(&IdentityDenoiser, &g, &cfg, None).unwrap();
        assert!(t.final_image.max_abs_diff(&f) < 1e-6);
    }

    #[test]
    fn zero_iterations_return_initial_estimate() {
        let f = Image::constant(4, 4, 0.25);
        let g = make_deblur_fidelity(f.clone(), Kernel::binomial3(), 1.0).unwrap();
        let cfg = SolverConfig { max_iters: 0, ..SolverConfig::default() };
        assert_eq!(pnpi_hqs(&IdentityDenoiser, &g, &cfg, None).unwrap().final_image, f);
    }

    #[test]
    fn theorem_boundaries() {
        for gamma in [0.0, 0.1, 1.0, 10.0, f64::INFINITY] {
            assert!(theorem2_holds(0.5, gamma));
        }
        assert!(!theorem2_holds(0.9, 0.0));
        assert!(theorem3_holds(0.5, 1.0, 1.0));
        assert!(!theorem3_holds(0.51, 1.0, 1.0));
        assert!(!theorem3_holds(0.0, 1.0, 2.5));
        assert!((composite_constant(0.25, 0.5).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn csv_header_and_rows() {
        let u0 = Image::constant(1, 2, 1.0);
        let t = ishikawa_iterate(|u| u.scale(0.5), &u0, Schedule::gd_default(), 3, 0.0).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), TRACE_CSV_HEADER);
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn kind_strings() {
        for k in SolverKind::ALL {
            assert_eq!(k.name().parse::<SolverKind>().unwrap(), k);
        }
        assert!("admm".parse::<SolverKind>().is_err());
    }
}
