//! Spectral quantities of denoiser Jacobians.
//!
//! Norms are estimated by power iteration on `MᵀM` (so non-normal Jacobians
//! are handled), and `‖(S - 2I)⁻¹ S‖` for the symmetric part `S` by a
//! modified power iteration whose inner linear solve is plain gradient descent
//! on a least-squares problem. [`certify`] evaluates all of them over a probe
//! set and classifies the denoiser into the regularity regions.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::denoisers::{Claims, Denoiser};
use crate::error::{Error, Result};
use crate::image::{dot, norm, Image};
use crate::oracle::{self, assemble_jacobian, DenseMatrix, JacobianProbe};
use crate::phantoms;

/// A square linear map on `R^dim` with its transpose.
pub trait LinearMap {
    fn dim(&self) -> usize;
    fn matvec(&self, v: &[f64]) -> Vec<f64>;
    fn rmatvec(&self, v: &[f64]) -> Vec<f64>;
}

/// Largest image (in pixels) for which a Jacobian without `vjp` is assembled densely.
pub const DENSE_FALLBACK_PIXELS: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    /// Outer power iterations.
    pub power_iters: usize,
    /// Gradient steps per inner solve of the modified power iteration.
    pub inner_steps: usize,
    /// Inner gradient step.
    pub dt: f64,
    /// Constraint margin of the penalty `max{‖·‖, 1 - eps}`.
    pub eps: f64,
    /// Noise levels (out of 255) at which the probe images are perturbed.
    pub sigmas: Vec<f64>,
    /// Side of the square probe images.
    pub image_size: usize,
    /// Slack on every `<= 1` comparison.
    pub tolerance: f64,
    /// Relative inner residual above which a solve is flagged.
    pub inner_tolerance: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            power_iters: 10,
            inner_steps: 10,
            dt: 0.1,
            eps: 0.1,
            sigmas: vec![15.0, 25.0, 40.0],
            image_size: 16,
            tolerance: 1e-6,
            inner_tolerance: 1e-2,
            seed: 0,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.power_iters < 1 {
            return Err(Error::param("power_iters must be at least 1"));
        }
        if self.inner_steps < 1 {
            return Err(Error::param("inner_steps must be at least 1"));
        }
        if !(self.dt > 0.0) {
            return Err(Error::param("dt must be positive"));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::param("eps must lie in (0, 1)"));
        }
        if self.image_size == 0 {
            return Err(Error::param("image_size must be positive"));
        }
        Ok(())
    }

    fn start_vector(&self, dim: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut q: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&q);
        q.iter_mut().for_each(|v| *v /= n);
        q
    }
}

/// Power-iteration estimate with the full history of estimates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PowerEstimate {
    pub value: f64,
    pub history: Vec<f64>,
}

/// Estimates `‖M‖` by power iteration on `MᵀM`, returning the square root of
/// the final Rayleigh quotient `‖M q‖`. A zero operator yields 0.
pub fn power_norm(m: &dyn LinearMap, cfg: &ProbeConfig) -> f64 {
    power_norm_trace(m, cfg).value
}

pub fn power_norm_trace(m: &dyn LinearMap, cfg: &ProbeConfig) -> PowerEstimate {
    let mut q = cfg.start_vector(m.dim());
    let mut history = Vec::with_capacity(cfg.power_iters);
    let mut mq = m.matvec(&q);
    for _ in 0..cfg.power_iters {
        let z = m.rmatvec(&mq);
        let nz = norm(&z);
        if nz == 0.0 {
            history.push(0.0);
            return PowerEstimate { value: 0.0, history };
        }
        q = z.into_iter().map(|v| v / nz).collect();
        mq = m.matvec(&q);
        history.push(norm(&mq));
    }
    PowerEstimate { value: history.last().copied().unwrap_or_else(|| norm(&mq)), history }
}

/// `a v + b M v`
pub struct AffineMap<'a> {
    pub inner: &'a dyn LinearMap,
    pub a: f64,
    pub b: f64,
}

impl LinearMap for AffineMap<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn matvec(&self, v: &[f64]) -> Vec<f64> {
        self.inner.matvec(v).iter().zip(v).map(|(m, x)| self.a * x + self.b * m).collect()
    }

    fn rmatvec(&self, v: &[f64]) -> Vec<f64> {
        self.inner.rmatvec(v).iter().zip(v).map(|(m, x)| self.a * x + self.b * m).collect()
    }
}

/// `(M + Mᵀ) / 2`
pub struct SymmetricPartMap<'a>(pub &'a dyn LinearMap);

impl LinearMap for SymmetricPartMap<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn matvec(&self, v: &[f64]) -> Vec<f64> {
        self.0.matvec(v).iter().zip(self.0.rmatvec(v)).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    fn rmatvec(&self, v: &[f64]) -> Vec<f64> {
        self.matvec(v)
    }
}

/// `J(x)` of a denoiser through its exact `jvp`/`vjp` probes.
pub struct JacobianMap<'a> {
    denoiser: &'a dyn Denoiser,
    x: &'a Image,
    sigma: f64,
}

impl JacobianMap<'_> {
    fn image(&self, v: &[f64]) -> Image {
        self.x.with_data(v.to_vec())
    }
}

impl LinearMap for JacobianMap<'_> {
    fn dim(&self) -> usize {
        self.x.len()
    }

    fn matvec(&self, v: &[f64]) -> Vec<f64> {
        self.denoiser.jvp(self.x, self.sigma, &self.image(v)).into_data()
    }

    fn rmatvec(&self, v: &[f64]) -> Vec<f64> {
        self.denoiser
            .vjp(self.x, self.sigma, &self.image(v))
            .expect("JacobianMap is only built for denoisers with vjp")
            .into_data()
    }
}

/// The Jacobian as a [`LinearMap`]: probe-based when `vjp` exists, otherwise
/// assembled densely from `jvp` columns on images of at most
/// [`DENSE_FALLBACK_PIXELS`] pixels.
pub fn jacobian_map<'a>(d: &'a dyn Denoiser, x: &'a Image, sigma: f64) -> Result<Box<dyn LinearMap + 'a>> {
    if d.capabilities().has_vjp {
        return Ok(Box::new(JacobianMap { denoiser: d, x, sigma }));
    }
    if x.len() <= DENSE_FALLBACK_PIXELS {
        return Ok(Box::new(assemble_jacobian(d, x, sigma, JacobianProbe::Jvp)?));
    }
    Err(Error::Capability(format!(
        "denoiser has no vjp and the image has {} pixels (> {DENSE_FALLBACK_PIXELS}); Jᵀv is unavailable",
        x.len()
    )))
}

/// `‖k I + (1 - k) J(x)‖`.
pub fn spc_penalty(d: &dyn Denoiser, x: &Image, sigma: f64, k: f64, cfg: &ProbeConfig) -> Result<f64> {
    let j = jacobian_map(d, x, sigma)?;
    Ok(power_norm(&AffineMap { inner: j.as_ref(), a: k, b: 1.0 - k }, cfg))
}

/// `S v = (J v + Jᵀ v) / 2`.
pub fn symmetric_part_matvec(d: &dyn Denoiser, x: &Image, sigma: f64, v: &Image) -> Result<Image> {
    x.check_same_shape(v)?;
    let j = jacobian_map(d, x, sigma)?;
    Ok(v.with_data(SymmetricPartMap(j.as_ref()).matvec(v.data())))
}

/// Outcome of the modified power iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MpimResult {
    /// `|<q^N, z^{N+1}>|`, the estimate of `‖(S - 2I)⁻¹ S‖`.
    pub value: f64,
    /// Final inner residual `‖(S - 2I) z - S q‖ / ‖S q‖` of each outer step.
    pub inner_residuals: Vec<f64>,
    /// Smallest inner step after halvings.
    pub final_dt: f64,
    /// Some inner solve ended above the configured relative tolerance.
    pub flagged: bool,
}

/// Cap on inner-step halvings per outer iteration.
const MAX_DT_HALVINGS: usize = 30;

/// Modified power iteration for `‖(S - 2I)⁻¹ S‖` with a symmetric `S`.
///
/// Each outer step approximately solves `(S - 2I) z = S q` with `inner_steps`
/// gradient-descent steps on `½‖(S - 2I) z - S q‖²`, warm-started from the
/// previous Rayleigh estimate along the new direction. The step halves (and the step is retried) whenever the
/// residual would grow.
pub fn mpim(s: &dyn LinearMap, cfg: &ProbeConfig) -> MpimResult {
    let dim = s.dim();
    let mut q = cfg.start_vector(dim);
    let mut z = vec![0.0; dim];
    let mut dt = cfg.dt;
    let mut inner_residuals = Vec::with_capacity(cfg.power_iters + 1);
    let mut flagged = false;

    // outer steps 1..=N update q; step N+1 only produces z^{N+1}
    for outer in 0..=cfg.power_iters {
        let sq = s.matvec(&q);
        let sq_norm = norm(&sq);
        if sq_norm == 0.0 {
            return MpimResult { value: 0.0, inner_residuals, final_dt: dt, flagged };
        }
        // r = (S - 2I) z - S q
        let residual_of = |z: &[f64]| -> Vec<f64> {
            let sz = s.matvec(z);
            sz.iter().zip(z).zip(&sq).map(|((a, b), c)| a - 2.0 * b - c).collect()
        };
        let mut r = residual_of(&z);
        let mut r_norm = norm(&r);
        for _ in 0..cfg.inner_steps {
            let sr = s.matvec(&r);
            let grad: Vec<f64> = sr.iter().zip(&r).map(|(a, b)| a - 2.0 * b).collect();
            let mut accepted = false;
            for _ in 0..=MAX_DT_HALVINGS {
                let trial: Vec<f64> = z.iter().zip(&grad).map(|(a, g)| a - dt * g).collect();
                let tr = residual_of(&trial);
                let tn = norm(&tr);
                if tn <= r_norm {
                    z = trial;
                    r = tr;
                    r_norm = tn;
                    accepted = true;
                    break;
                }
                dt *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        let rel = r_norm / sq_norm;
        flagged |= rel > cfg.inner_tolerance;
        inner_residuals.push(rel);
        if outer == cfg.power_iters {
            break;
        }
        let nz = norm(&z);
        if nz == 0.0 {
            return MpimResult { value: 0.0, inner_residuals, final_dt: dt, flagged };
        }
        // warm start: (S - 2I)⁻¹ S q ≈ ρ q with the current Rayleigh estimate ρ
        let rho = dot(&q, &z);
        q = z.iter().map(|v| v / nz).collect();
        z = q.iter().map(|v| rho * v).collect();
    }
    MpimResult { value: dot(&q, &z).abs(), inner_residuals, final_dt: dt, flagged }
}

/// `‖(S - 2I)⁻¹ S‖` for the symmetric part of `J(x)`.
pub fn pc_penalty(d: &dyn Denoiser, x: &Image, sigma: f64, cfg: &ProbeConfig) -> Result<MpimResult> {
    let j = jacobian_map(d, x, sigma)?;
    Ok(mpim(&SymmetricPartMap(j.as_ref()), cfg))
}

/// `λmax(S)` of a symmetric map, by power iteration on `S + ‖S‖ I`.
pub fn lambda_max(s: &dyn LinearMap, cfg: &ProbeConfig) -> f64 {
    let shift = power_norm(s, cfg);
    if shift == 0.0 {
        return 0.0;
    }
    let shifted = AffineMap { inner: s, a: shift, b: 1.0 };
    let mut q = cfg.start_vector(s.dim());
    let mut rayleigh = dot(&q, &shifted.matvec(&q));
    for _ in 0..cfg.power_iters {
        let z = shifted.matvec(&q);
        let nz = norm(&z);
        if nz == 0.0 {
            break;
        }
        q = z.into_iter().map(|v| v / nz).collect();
        rayleigh = dot(&q, &shifted.matvec(&q));
    }
    rayleigh - shift
}

/// `f(z) = z / (z - 2)`, which maps `{Re z <= 1}` onto the closed unit disk.
pub fn holomorphic_map(z: Complex64) -> Result<Complex64> {
    if z == Complex64::new(2.0, 0.0) {
        return Err(Error::Pole);
    }
    Ok(z / (z - 2.0))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralMappingReport {
    /// Largest `|f(λᵢ(S)) - λᵢ((S - 2I)⁻¹ S)|` after sorting both.
    pub max_eig_error: f64,
    /// Every sampled point with `Re z <= 1` landed in the closed unit disk.
    pub half_plane_to_disk: bool,
    pub passed: bool,
}

/// Checks `σ(f(S)) = f(σ(S))` densely and samples the half-plane-to-disk property.
pub fn spectral_mapping_check(s: &DenseMatrix) -> Result<SpectralMappingReport> {
    if s.rows() != s.cols() || s.rows() > 32 {
        return Err(Error::dim("spectral mapping check needs a square matrix of size <= 32"));
    }
    let asym = s.max_asymmetry();
    if asym > 1e-10 {
        return Err(Error::NotSymmetric(asym));
    }
    let eigs = oracle::dense_sym_eigs(s)?;
    let mut mapped = eigs
        .iter()
        .map(|&l| holomorphic_map(Complex64::new(l, 0.0)).map(|c| c.re))
        .collect::<Result<Vec<_>>>()?;
    mapped.sort_by(f64::total_cmp);
    let fs = s.shift(-2.0).solve(s)?.symmetric_part();
    let direct = oracle::dense_sym_eigs(&fs)?;
    let max_eig_error = mapped.iter().zip(&direct).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let mut half_plane_to_disk = true;
    for i in 0..=40 {
        for j in 0..=40 {
            let re = 1.0 - 10f64.powf(-3.0 + 6.0 * i as f64 / 40.0) + 1e-3;
            let im = -50.0 + 100.0 * j as f64 / 40.0;
            let z = Complex64::new(re.min(1.0), im);
            if z == Complex64::new(2.0, 0.0) {
                continue;
            }
            half_plane_to_disk &= holomorphic_map(z)?.norm() <= 1.0 + 1e-12;
        }
    }
    Ok(SpectralMappingReport { max_eig_error, half_plane_to_disk, passed: max_eig_error <= 1e-8 && half_plane_to_disk })
}

/// A regularity assumption to certify.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Assumption {
    /// `‖2J - I‖ <= 1`
    FirmlyNonexpansive,
    /// `‖J‖ <= 1`
    Nonexpansive,
    /// `‖I - J‖ <= r`
    ContractiveResidual(f64),
    /// `‖k I + (1 - k) J‖ <= 1`
    StrictPc(f64),
    /// `‖(S - 2I)⁻¹ S‖ <= 1`, equivalently `λmax(S) <= 1`
    PseudoContractive,
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Assumption::FirmlyNonexpansive => write!(f, "fne"),
            Assumption::Nonexpansive => write!(f, "ne"),
            Assumption::ContractiveResidual(r) => write!(f, "cr:{r}"),
            Assumption::StrictPc(k) => write!(f, "spc:{k}"),
            Assumption::PseudoContractive => write!(f, "pc"),
        }
    }
}

impl FromStr for Assumption {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let num = |v: &str| v.parse::<f64>().map_err(|_| Error::Parse(format!("bad assumption parameter in {s:?}")));
        match s.trim().split_once(':') {
            None => match s.trim() {
                "fne" => Ok(Assumption::FirmlyNonexpansive),
                "ne" => Ok(Assumption::Nonexpansive),
                "pc" => Ok(Assumption::PseudoContractive),
                _ => Err(Error::Parse(format!("unknown assumption {s:?}"))),
            },
            Some(("spc", k)) => {
                let k = num(k)?;
                if !(0.0..1.0).contains(&k) {
                    return Err(Error::param(format!("spc constant must lie in [0, 1), got {k}")));
                }
                Ok(Assumption::StrictPc(k))
            }
            Some(("cr", r)) => Ok(Assumption::ContractiveResidual(num(r)?)),
            _ => Err(Error::Parse(format!("unknown assumption {s:?}"))),
        }
    }
}

impl Serialize for Assumption {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Assumption {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

pub fn parse_assumptions(list: &str) -> Result<Vec<Assumption>> {
    list.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect()
}

/// Norms measured at one probe point.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct NormSet {
    pub norm_j: Option<f64>,
    pub norm_firm: Option<f64>,
    pub norm_residual: Option<f64>,
    /// `(k, ‖kI + (1-k)J‖)`
    pub norm_spc: Vec<(f64, f64)>,
    pub pc_norm: Option<f64>,
    pub smax: Option<f64>,
}

impl NormSet {
    fn absorb(&mut self, other: &NormSet) {
        fn max_opt(a: &mut Option<f64>, b: Option<f64>) {
            if let Some(b) = b {
                *a = Some(a.map_or(b, |a| a.max(b)));
            }
        }
        max_opt(&mut self.norm_j, other.norm_j);
        max_opt(&mut self.norm_firm, other.norm_firm);
        max_opt(&mut self.norm_residual, other.norm_residual);
        max_opt(&mut self.pc_norm, other.pc_norm);
        max_opt(&mut self.smax, other.smax);
        for &(k, v) in &other.norm_spc {
            match self.norm_spc.iter_mut().find(|(kk, _)| *kk == k) {
                Some(slot) => slot.1 = slot.1.max(v),
                None => self.norm_spc.push((k, v)),
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleNorms {
    pub image: String,
    pub sigma: f64,
    pub noise_seed: u64,
    pub norms: NormSet,
    pub mpim_inner_residual: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Verdicts {
    pub firmly_ne: Option<bool>,
    pub nonexpansive: Option<bool>,
    /// `(r, holds)`
    pub contractive_residual: Vec<(f64, bool)>,
    /// `(k, holds)`
    pub k_spc: Vec<(f64, bool)>,
    /// From `pc_norm`.
    pub pseudo_contractive: Option<bool>,
    /// From `λmax(S)`, the independent route.
    pub pseudo_contractive_via_smax: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeMetadata {
    pub image_size: usize,
    pub sigmas: Vec<f64>,
    pub seed: u64,
    pub power_iters: usize,
    pub inner_steps: usize,
    pub dt: f64,
    pub eps: f64,
    pub tolerance: f64,
    /// Largest final relative inner residual of the modified power iteration.
    pub max_inner_residual: Option<f64>,
    /// Smallest inner step after halvings.
    pub min_final_dt: Option<f64>,
    /// Number of samples whose inner solve was flagged.
    pub flagged_inner_solves: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralCertificate {
    pub denoiser: String,
    pub claims: Claims,
    pub assumptions: Vec<Assumption>,
    pub sample_count: usize,
    pub samples: Vec<SampleNorms>,
    pub maxima: NormSet,
    pub verdicts: Verdicts,
    /// Verdict per requested assumption; `None` when its norm was unavailable.
    pub requested: Vec<(Assumption, Option<bool>)>,
    /// Norms that could not be measured, with the reason.
    pub unavailable: Vec<String>,
    /// Broken implications of the region hierarchy; empty on a sound certificate.
    pub nesting_violations: Vec<String>,
    /// `pc_norm` and `λmax(S)` disagree on pseudo-contractivity.
    pub route_disagreement: bool,
    pub metadata: ProbeMetadata,
}

impl SpectralCertificate {
    /// `Some(true)` when every requested assumption holds, `Some(false)` when any
    /// fails, `None` when one could not be evaluated and none failed.
    pub fn all_hold(&self) -> Option<bool> {
        if self.requested.iter().any(|(_, v)| *v == Some(false)) {
            return Some(false);
        }
        if self.requested.iter().any(|(_, v)| v.is_none()) {
            return None;
        }
        Some(true)
    }

    /// Smallest certified strict pseudo-contractivity constant, if any.
    pub fn certified_k(&self) -> Option<f64> {
        let mut best = self.verdicts.k_spc.iter().filter(|(_, ok)| *ok).map(|(k, _)| *k).fold(None, |acc: Option<f64>, k| {
            Some(acc.map_or(k, |a| a.min(k)))
        });
        if self.verdicts.nonexpansive == Some(true) {
            best = Some(0.0);
        }
        best
    }
}

fn measure(d: &dyn Denoiser, x: &Image, sigma: f64, ks: &[f64], cfg: &ProbeConfig) -> Result<(NormSet, MpimResult)> {
    let j = jacobian_map(d, x, sigma)?;
    let j = j.as_ref();
    let norm_j = power_norm(j, cfg);
    let norm_firm = power_norm(&AffineMap { inner: j, a: -1.0, b: 2.0 }, cfg);
    let norm_residual = power_norm(&AffineMap { inner: j, a: 1.0, b: -1.0 }, cfg);
    let norm_spc = ks.iter().map(|&k| (k, power_norm(&AffineMap { inner: j, a: k, b: 1.0 - k }, cfg))).collect();
    let s = SymmetricPartMap(j);
    let pc = mpim(&s, cfg);
    let smax = lambda_max(&s, cfg);
    Ok((
        NormSet {
            norm_j: Some(norm_j),
            norm_firm: Some(norm_firm),
            norm_residual: Some(norm_residual),
            norm_spc,
            pc_norm: Some(pc.value),
            smax: Some(smax),
        },
        pc,
    ))
}

/// Probe points: each probe image plus seeded Gaussian noise at each sigma.
pub fn probe_samples(cfg: &ProbeConfig) -> Vec<(String, f64, u64, Image)> {
    let mut out = Vec::new();
    for (idx, (name, clean)) in phantoms::probe_set(cfg.image_size).into_iter().enumerate() {
        for (si, &sigma) in cfg.sigmas.iter().enumerate() {
            let noise_seed = cfg.seed.wrapping_mul(1_000_003).wrapping_add((idx * 1000 + si) as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
            let noise = Image::random_normal(clean.height(), clean.width(), &mut rng).scale(sigma / 255.0);
            out.push((name.to_string(), sigma, noise_seed, &clean + &noise));
        }
    }
    out
}

/// Measures every norm at every probe sample, keeps the maxima and issues
/// region verdicts with slack `cfg.tolerance`.
pub fn certify(d: &dyn Denoiser, cfg: &ProbeConfig, assumptions: &[Assumption]) -> Result<SpectralCertificate> {
    cfg.validate()?;
    let ks: Vec<f64> = assumptions
        .iter()
        .filter_map(|a| if let Assumption::StrictPc(k) = a { Some(*k) } else { None })
        .collect();
    let mut samples = Vec::new();
    let mut maxima = NormSet::default();
    let mut unavailable = Vec::new();
    let mut max_inner: Option<f64> = None;
    let mut min_dt: Option<f64> = None;
    let mut flagged = 0;

    let mut probes = probe_samples(cfg);
    if probes.is_empty() {
        // no sigmas configured: probe the clean images
        probes = phantoms::probe_set(cfg.image_size)
            .into_iter()
            .map(|(n, img)| (n.to_string(), 0.0, 0, img))
            .collect();
    }
    for (image, sigma, noise_seed, x) in probes {
        match measure(d, &x, sigma, &ks, cfg) {
            Ok((norms, pc)) => {
                maxima.absorb(&norms);
                let inner = pc.inner_residuals.last().copied();
                if let Some(r) = inner {
                    max_inner = Some(max_inner.map_or(r, |m| m.max(r)));
                }
                min_dt = Some(min_dt.map_or(pc.final_dt, |m: f64| m.min(pc.final_dt)));
                flagged += usize::from(pc.flagged);
                samples.push(SampleNorms { image, sigma, noise_seed, norms, mpim_inner_residual: inner });
            }
            Err(Error::Capability(msg)) => {
                if !unavailable.contains(&msg) {
                    unavailable.push(msg);
                }
            }
            Err(e) => return Err(e),
        }
    }

    let tol = cfg.tolerance;
    let le1 = |v: Option<f64>| v.map(|v| v <= 1.0 + tol);
    let verdicts = Verdicts {
        firmly_ne: le1(maxima.norm_firm),
        nonexpansive: le1(maxima.norm_j),
        contractive_residual: assumptions
            .iter()
            .filter_map(|a| match a {
                Assumption::ContractiveResidual(r) => maxima.norm_residual.map(|v| (*r, v <= r + tol)),
                _ => None,
            })
            .collect(),
        k_spc: maxima.norm_spc.iter().map(|&(k, v)| (k, v <= 1.0 + tol)).collect(),
        pseudo_contractive: le1(maxima.pc_norm),
        pseudo_contractive_via_smax: le1(maxima.smax),
    };

    let mut nesting = Vec::new();
    let implies = |a: Option<bool>, b: Option<bool>| !(a == Some(true) && b == Some(false));
    if !implies(verdicts.firmly_ne, verdicts.nonexpansive) {
        nesting.push("firmly non-expansive but not non-expansive".to_string());
    }
    for &(k, ok) in &verdicts.k_spc {
        if !implies(verdicts.nonexpansive, Some(ok)) {
            nesting.push(format!("non-expansive but not {k}-strictly pseudo-contractive"));
        }
        if !implies(Some(ok), verdicts.pseudo_contractive) {
            nesting.push(format!("{k}-strictly pseudo-contractive but not pseudo-contractive"));
        }
    }
    if !implies(verdicts.nonexpansive, verdicts.pseudo_contractive) {
        nesting.push("non-expansive but not pseudo-contractive".to_string());
    }
    let route_disagreement = matches!(
        (verdicts.pseudo_contractive, verdicts.pseudo_contractive_via_smax),
        (Some(a), Some(b)) if a != b
    );

    let requested = assumptions
        .iter()
        .map(|a| {
            let v = match a {
                Assumption::FirmlyNonexpansive => verdicts.firmly_ne,
                Assumption::Nonexpansive => verdicts.nonexpansive,
                Assumption::ContractiveResidual(r) => {
                    verdicts.contractive_residual.iter().find(|(rr, _)| rr == r).map(|(_, ok)| *ok)
                }
                Assumption::StrictPc(k) => verdicts.k_spc.iter().find(|(kk, _)| kk == k).map(|(_, ok)| *ok),
                Assumption::PseudoContractive => verdicts.pseudo_contractive,
            };
            (*a, v)
        })
        .collect();

    let spec = d.spec();
    Ok(SpectralCertificate {
        denoiser: spec.to_string(),
        claims: spec.claims(),
        assumptions: assumptions.to_vec(),
        sample_count: samples.len(),
        samples,
        maxima,
        verdicts,
        requested,
        unavailable,
        nesting_violations: nesting,
        route_disagreement,
        metadata: ProbeMetadata {
            image_size: cfg.image_size,
            sigmas: cfg.sigmas.clone(),
            seed: cfg.seed,
            power_iters: cfg.power_iters,
            inner_steps: cfg.inner_steps,
            dt: cfg.dt,
            eps: cfg.eps,
            tolerance: cfg.tolerance,
            max_inner_residual: max_inner,
            min_final_dt: min_dt,
            flagged_inner_solves: flagged,
        },
    })
}

/// Which regularity penalty a linear denoiser is trained against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintMode {
    /// `‖k I + (1 - k) W‖`
    Spc(f64),
    /// `‖(S - 2I)⁻¹ S‖` with `S = (W + Wᵀ) / 2`
    Pc,
}

/// Data-fit term of the constrained training objective.
#[derive(Debug, Clone)]
pub enum DataTerm {
    /// `½‖W - W₀‖²_F`
    Anchor,
    /// Mean denoising loss `(1/2m) Σ ‖W yᵢ - xᵢ‖²` over noisy/clean pairs.
    Denoising { noisy: Vec<Vec<f64>>, clean: Vec<Vec<f64>> },
}

impl DataTerm {
    /// `m` mean-removed clean vectors with i.i.d. entries uniform on
    /// `[-½, ½]`, corrupted by Gaussian noise of standard deviation `noise_std`.
    pub fn synthetic_denoising(dim: usize, m: usize, noise_std: f64, seed: u64) -> DataTerm {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let clean: Vec<Vec<f64>> = (0..m).map(|_| (0..dim).map(|_| rng.random::<f64>() - 0.5).collect()).collect();
        let noisy = clean
            .iter()
            .map(|x| x.iter().map(|v| v + noise_std * rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        DataTerm::Denoising { noisy, clean }
    }
}

#[derive(Debug, Clone)]
pub struct ConstraintConfig {
    pub mode: ConstraintMode,
    /// Penalty weight.
    pub r: f64,
    /// Margin: the penalty is `r · max{p(W), 1 - eps}`.
    pub eps: f64,
    pub steps: usize,
    /// Gradient step; `None` picks the inverse curvature of the data term.
    pub learning_rate: Option<f64>,
    pub data: DataTerm,
}

#[derive(Debug, Clone)]
pub struct ConstraintResult {
    pub matrix: DenseMatrix,
    pub initial_penalty: f64,
    /// Penalty of the returned matrix.
    pub final_penalty: f64,
    pub steps_taken: usize,
    /// `p(W) <= 1` was reached.
    pub converged: bool,
    pub penalty_history: Vec<f64>,
}

/// Penalty value `p(W)` of the requested mode, computed densely.
pub fn dense_penalty(w: &DenseMatrix, mode: ConstraintMode) -> f64 {
    penalty_and_grad(w, mode).0
}

fn penalty_and_grad(w: &DenseMatrix, mode: ConstraintMode) -> (f64, DenseMatrix) {
    let n = w.rows();
    match mode {
        ConstraintMode::Spc(k) => {
            let m = w.scale(1.0 - k).shift(k);
            let (sigma, u, v) = oracle::dense_top_singular(&m);
            let grad = DenseMatrix::from_fn(n, n, |i, j| (1.0 - k) * u[i] * v[j]);
            (sigma, grad)
        }
        ConstraintMode::Pc => {
            let eig = oracle::jacobi_eigen(&w.symmetric_part()).expect("symmetric part");
            let (mut best, mut idx) = (f64::NEG_INFINITY, 0);
            for (i, &l) in eig.values.iter().enumerate() {
                if l == 2.0 {
                    return (f64::INFINITY, DenseMatrix::zeros(n, n));
                }
                let f = (l / (l - 2.0)).abs();
                if f > best {
                    best = f;
                    idx = i;
                }
            }
            let l = eig.values[idx];
            let sign = (l / (l - 2.0)).signum();
            let deriv = -2.0 / ((l - 2.0) * (l - 2.0));
            let u = eig.vectors.column(idx);
            (best, DenseMatrix::from_fn(n, n, |i, j| sign * deriv * u[i] * u[j]))
        }
    }
}

fn data_value_grad(w: &DenseMatrix, w0: &DenseMatrix, data: &DataTerm) -> (f64, DenseMatrix) {
    match data {
        DataTerm::Anchor => {
            let diff = w.lincomb(1.0, w0, -1.0);
            (0.5 * diff.frobenius().powi(2), diff)
        }
        DataTerm::Denoising { noisy, clean } => {
            let n = w.rows();
            let m = noisy.len().max(1) as f64;
            let mut grad = DenseMatrix::zeros(n, n);
            let mut value = 0.0;
            for (y, x) in noisy.iter().zip(clean) {
                let res: Vec<f64> = w.matvec(y).iter().zip(x).map(|(a, b)| a - b).collect();
                value += 0.5 * dot(&res, &res) / m;
                for (i, r) in res.iter().enumerate() {
                    for (j, yj) in y.iter().enumerate() {
                        let g = grad.get(i, j) + r * yj / m;
                        grad.set(i, j, g);
                    }
                }
            }
            (value, grad)
        }
    }
}

/// Objective `data(W) + r · max{p(W), 1 - eps}` of the constrained training.
pub fn penalty_objective(w: &DenseMatrix, w0: &DenseMatrix, cfg: &ConstraintConfig) -> f64 {
    let (data, _) = data_value_grad(w, w0, &cfg.data);
    let (p, _) = penalty_and_grad(w, cfg.mode);
    data + cfg.r * p.max(1.0 - cfg.eps)
}

/// Gradient of [`penalty_objective`] (a subgradient where the top eigen- or
/// singular value is repeated).
pub fn penalty_objective_grad(w: &DenseMatrix, w0: &DenseMatrix, cfg: &ConstraintConfig) -> DenseMatrix {
    let (_, dg) = data_value_grad(w, w0, &cfg.data);
    let (p, pg) = penalty_and_grad(w, cfg.mode);
    if p > 1.0 - cfg.eps {
        dg.lincomb(1.0, &pg, cfg.r)
    } else {
        dg
    }
}

/// Gradient descent on the penalized training objective of a linear denoiser
/// `W` until its penalty drops to 1 or the step budget runs out.
pub fn constrain_linear_denoiser(w0: &DenseMatrix, cfg: &ConstraintConfig) -> Result<ConstraintResult> {
    if w0.rows() != w0.cols() || w0.rows() > 32 {
        return Err(Error::dim("constrained matrix must be square with side <= 32"));
    }
    if !(cfg.r > 0.0) {
        return Err(Error::param("penalty weight r must be positive"));
    }
    if !(cfg.eps > 0.0 && cfg.eps < 1.0) {
        return Err(Error::param("eps must lie in (0, 1)"));
    }
    let lr = match cfg.learning_rate {
        Some(lr) if lr > 0.0 => lr,
        Some(lr) => return Err(Error::param(format!("learning rate must be positive, got {lr}"))),
        None => match &cfg.data {
            DataTerm::Anchor => 1.0,
            DataTerm::Denoising { noisy, .. } => {
                let n = w0.rows();
                let m = noisy.len().max(1) as f64;
                let cov = DenseMatrix::from_fn(n, n, |i, j| noisy.iter().map(|y| y[i] * y[j]).sum::<f64>() / m);
                1.0 / oracle::dense_svd_norm(&cov).max(1e-12)
            }
        },
    };

    let mut w = w0.clone();
    let initial_penalty = dense_penalty(&w, cfg.mode);
    let mut history = vec![initial_penalty];
    let mut steps_taken = 0;
    let mut p = initial_penalty;
    let mut best = (p, w.clone());
    while p > 1.0 && steps_taken < cfg.steps {
        let g = penalty_objective_grad(&w, w0, cfg);
        w = w.lincomb(1.0, &g, -lr);
        steps_taken += 1;
        p = dense_penalty(&w, cfg.mode);
        history.push(p);
        if p < best.0 {
            best = (p, w.clone());
        }
    }
    // on exhaustion the lowest-penalty iterate is returned
    let (final_penalty, matrix) = best;
    Ok(ConstraintResult {
        matrix,
        initial_penalty,
        final_penalty,
        steps_taken,
        converged: final_penalty <= 1.0,
        penalty_history: history,
    })
}
