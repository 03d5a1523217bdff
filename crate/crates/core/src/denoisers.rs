//! Denoisers `D_σ` with Jacobian probes, and a set of analytic denoisers whose
//! regularity constants are known in closed form.
//!
//! The noise level `sigma` is expressed in gray levels out of 255. Only the
//! DCT shrinkage denoiser depends on it; every other built-in ignores it.

use std::fmt::Debug;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dct::{dct2, idct2};
use crate::error::{Error, Result};
use crate::image::{Image, Kernel};
use crate::linop::{CircularConvolution, LinearOperator, OperatorHandle, PairRotation, ScaledIdentity};
use crate::spectral::{self, LinearMap, ProbeConfig};

/// Central-difference step for black-box Jacobian probes on `[0, 1]` images.
pub const FD_STEP: f64 = 1e-4;

/// Noise level at which a DCT shrinkage threshold `t` is applied verbatim.
pub const DCT_REFERENCE_SIGMA: f64 = 25.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Capabilities {
    pub linear: bool,
    pub symmetric_jacobian: bool,
    /// `jvp` is exact rather than a finite-difference estimate.
    pub exact_probe: bool,
    pub has_vjp: bool,
}

pub trait Denoiser: Send + Sync + Debug {
    fn apply(&self, x: &Image, sigma: f64) -> Image;

    /// Jacobian-vector product `J(x) v`. Defaults to central differences.
    fn jvp(&self, x: &Image, sigma: f64, v: &Image) -> Image {
        fd_jvp(self, x, sigma, v, FD_STEP)
    }

    /// Transposed product `J(x)^T w`, when the denoiser can provide it.
    fn vjp(&self, _x: &Image, _sigma: f64, _w: &Image) -> Option<Image> {
        None
    }

    fn capabilities(&self) -> Capabilities;

    fn spec(&self) -> DenoiserSpec;
}

pub type DenoiserHandle = Arc<dyn Denoiser>;

fn fd_jvp<D: Denoiser + ?Sized>(d: &D, x: &Image, sigma: f64, v: &Image, h: f64) -> Image {
    let plus = d.apply(&x.lincomb(1.0, v, h), sigma);
    let minus = d.apply(&x.lincomb(1.0, v, -h), sigma);
    plus.lincomb(0.5 / h, &minus, -0.5 / h)
}

/// `(D(x + h v) - D(x - h v)) / 2h`.
pub fn finite_difference_jvp(d: &dyn Denoiser, x: &Image, sigma: f64, v: &Image, h: f64) -> Result<Image> {
    if !(h > 0.0) {
        return Err(Error::param(format!("finite-difference step must be positive, got {h}")));
    }
    x.check_same_shape(v)?;
    Ok(fd_jvp(d, x, sigma, v, h))
}

/// Regions of the regularity hierarchy, from most to least restrictive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Region {
    FirmlyNonexpansive,
    Nonexpansive,
    StrictlyPseudoContractive,
    PseudoContractive,
}

/// Constants a construction guarantees by formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Claims {
    pub region: Region,
    /// Strict pseudo-contractivity constant.
    pub k: Option<f64>,
    pub lipschitz: Option<f64>,
}

/// The non-expansive map `N` inside a strictly pseudo-contractive denoiser.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "op")]
pub enum SpcBase {
    /// 90° rotation of consecutive pixel pairs.
    Rot90,
    /// `c * I` with `|c| <= 1`.
    Scale { c: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum DenoiserSpec {
    Identity,
    /// Binomial blur of the given odd size, or a sampled Gaussian when `std_dev` is set.
    Gauss { size: usize, std_dev: Option<f64> },
    Spc { base: SpcBase, k: f64 },
    Antisym { c: f64 },
    DctShrink { t: f64 },
    /// A denoiser built in code (not reconstructible from a spec string).
    Custom { name: String },
}

impl DenoiserSpec {
    pub fn claims(&self) -> Claims {
        match *self {
            DenoiserSpec::Identity | DenoiserSpec::Gauss { .. } | DenoiserSpec::DctShrink { .. } => Claims {
                region: Region::FirmlyNonexpansive,
                k: Some(0.0),
                lipschitz: Some(1.0),
            },
            DenoiserSpec::Spc { k, .. } => Claims {
                region: if k == 0.0 { Region::Nonexpansive } else { Region::StrictlyPseudoContractive },
                k: Some(k),
                lipschitz: Some((1.0 + k) / (1.0 - k)),
            },
            DenoiserSpec::Antisym { c } => Claims {
                region: if c == 0.0 { Region::FirmlyNonexpansive } else { Region::PseudoContractive },
                k: if c == 0.0 { Some(0.0) } else { None },
                lipschitz: Some((1.0 + c * c).sqrt()),
            },
            DenoiserSpec::Custom { .. } => Claims { region: Region::PseudoContractive, k: None, lipschitz: None },
        }
    }

    pub fn build(&self) -> Result<DenoiserHandle> {
        Ok(match self {
            DenoiserSpec::Identity => Arc::new(IdentityDenoiser),
            DenoiserSpec::Gauss { size, std_dev } => {
                let kernel = match std_dev {
                    Some(s) => Kernel::gaussian(*size, *s)?,
                    None => binomial_kernel(*size)?,
                };
                Arc::new(make_gaussian_blur_denoiser(kernel)?)
            }
            DenoiserSpec::Spc { base, k } => {
                let n: OperatorHandle = match *base {
                    SpcBase::Rot90 => Arc::new(PairRotation),
                    SpcBase::Scale { c } => Arc::new(ScaledIdentity(c)),
                };
                let mut d = make_spc_denoiser(n, *k, (8, 8))?;
                d.base = Some(*base);
                Arc::new(d)
            }
            DenoiserSpec::Antisym { c } => Arc::new(make_antisymmetric_denoiser(*c)?),
            DenoiserSpec::DctShrink { t } => Arc::new(make_dct_shrink_denoiser(*t)?),
            DenoiserSpec::Custom { name } => {
                return Err(Error::param(format!("custom denoiser {name:?} cannot be rebuilt from its spec")))
            }
        })
    }
}

impl std::fmt::Display for DenoiserSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DenoiserSpec::Identity => write!(f, "identity"),
            DenoiserSpec::Gauss { size, std_dev: None } => write!(f, "gauss:{size}x{size}"),
            DenoiserSpec::Gauss { size, std_dev: Some(s) } => write!(f, "gauss:{size}x{size}:s={s}"),
            DenoiserSpec::Spc { base: SpcBase::Rot90, k } => write!(f, "spc:rot90:k={k}"),
            DenoiserSpec::Spc { base: SpcBase::Scale { c }, k } => write!(f, "spc:scale={c}:k={k}"),
            DenoiserSpec::Antisym { c } => write!(f, "antisym:c={c}"),
            DenoiserSpec::DctShrink { t } => write!(f, "dct-shrink:t={t}"),
            DenoiserSpec::Custom { name } => write!(f, "custom:{name}"),
        }
    }
}

fn parse_assignment(part: &str, key: &str) -> Result<f64> {
    let value = part
        .strip_prefix(key)
        .and_then(|rest| rest.strip_prefix('='))
        .ok_or_else(|| Error::Parse(format!("expected `{key}=<value>`, found {part:?}")))?;
    value.parse().map_err(|_| Error::Parse(format!("bad number in {part:?}")))
}

impl FromStr for DenoiserSpec {
    type Err = Error;

    /// Parses `identity`, `gauss:3x3`, `gauss:5x5:s=1.2`, `spc:rot90:k=0.5`,
    /// `spc:scale=0.8:k=0.25`, `antisym:c=1.0` or `dct-shrink:t=0.05`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let bad = || Error::Parse(format!("unrecognised denoiser spec {s:?}"));
        match parts.as_slice() {
            ["identity"] => Ok(DenoiserSpec::Identity),
            ["gauss", size, rest @ ..] => {
                let (a, b) = size.split_once('x').ok_or_else(bad)?;
                let (a, b): (usize, usize) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
                if a != b {
                    return Err(Error::Parse(format!("gauss kernel must be square, got {size}")));
                }
                let std_dev = match rest {
                    [] => None,
                    [s] => Some(parse_assignment(s, "s")?),
                    _ => return Err(bad()),
                };
                Ok(DenoiserSpec::Gauss { size: a, std_dev })
            }
            ["spc", base, k] => {
                let base = if *base == "rot90" {
                    SpcBase::Rot90
                } else if *base == "identity" {
                    SpcBase::Scale { c: 1.0 }
                } else {
                    SpcBase::Scale { c: parse_assignment(base, "scale")? }
                };
                Ok(DenoiserSpec::Spc { base, k: parse_assignment(k, "k")? })
            }
            ["antisym", c] => Ok(DenoiserSpec::Antisym { c: parse_assignment(c, "c")? }),
            ["dct-shrink", t] => Ok(DenoiserSpec::DctShrink { t: parse_assignment(t, "t")? }),
            _ => Err(bad()),
        }
    }
}

/// Row `size - 1` of Pascal's triangle as a separable, normalized kernel.
/// Its transfer function is a power of `cos²`, so it is non-negative on every grid.
pub fn binomial_kernel(size: usize) -> Result<Kernel> {
    if size == 0 || size.is_multiple_of(2) {
        return Err(Error::param(format!("binomial kernel size must be odd, got {size}")));
    }
    let mut row = vec![1.0];
    for _ in 1..size {
        let mut next = vec![1.0; row.len() + 1];
        for i in 1..row.len() {
            next[i] = row[i - 1] + row[i];
        }
        row = next;
    }
    let sum: f64 = row.iter().sum();
    let row: Vec<f64> = row.iter().map(|v| v / sum).collect();
    Kernel::separable(&row, &row)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityDenoiser;

impl Denoiser for IdentityDenoiser {
    fn apply(&self, x: &Image, _sigma: f64) -> Image {
        x.clone()
    }

    fn jvp(&self, _x: &Image, _sigma: f64, v: &Image) -> Image {
        v.clone()
    }

    fn vjp(&self, _x: &Image, _sigma: f64, w: &Image) -> Option<Image> {
        Some(w.clone())
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { linear: true, symmetric_jacobian: true, exact_probe: true, has_vjp: true }
    }

    fn spec(&self) -> DenoiserSpec {
        DenoiserSpec::Identity
    }
}

/// Linear blur denoiser `D(x) = k * x` (circular convolution).
#[derive(Debug, Clone)]
pub struct GaussianBlurDenoiser {
    kernel: Kernel,
    spec: DenoiserSpec,
}

impl GaussianBlurDenoiser {
    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    fn conv(&self, x: &Image) -> CircularConvolution {
        CircularConvolution::new(&self.kernel, x.height(), x.width())
            .expect("blur kernel larger than image")
    }
}

impl Denoiser for GaussianBlurDenoiser {
    fn apply(&self, x: &Image, _sigma: f64) -> Image {
        self.conv(x).apply(x)
    }

    fn jvp(&self, x: &Image, _sigma: f64, v: &Image) -> Image {
        self.conv(x).apply(v)
    }

    fn vjp(&self, x: &Image, _sigma: f64, w: &Image) -> Option<Image> {
        Some(self.conv(x).adjoint(w))
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { linear: true, symmetric_jacobian: true, exact_probe: true, has_vjp: true }
    }

    fn spec(&self) -> DenoiserSpec {
        self.spec.clone()
    }
}

/// Transfer function of a point-symmetric kernel at angular frequency `(u, v)`.
fn symmetric_response(k: &Kernel, u: f64, v: f64) -> f64 {
    let (cr, cc) = k.center();
    let mut acc = 0.0;
    for r in 0..k.rows() {
        for c in 0..k.cols() {
            let (dr, dc) = (r as f64 - cr as f64, c as f64 - cc as f64);
            acc += k.tap(r, c) * (u * dr + v * dc).cos();
        }
    }
    acc
}

/// Wraps a symmetric, non-negative, sum-to-one kernel as a linear denoiser.
///
/// The transfer function must also be non-negative (checked on a 128x128
/// frequency grid); otherwise the Jacobian has negative eigenvalues and the
/// denoiser is not firmly non-expansive.
pub fn make_gaussian_blur_denoiser(kernel: Kernel) -> Result<GaussianBlurDenoiser> {
    if !kernel.is_symmetric() {
        return Err(Error::param("blur kernel must be point-symmetric with odd dimensions"));
    }
    if kernel.taps().iter().any(|&t| t < 0.0) {
        return Err(Error::param("blur kernel must be non-negative"));
    }
    if (kernel.taps().iter().sum::<f64>() - 1.0).abs() > 1e-12 {
        return Err(Error::param("blur kernel must sum to one"));
    }
    let grid = 128;
    let step = 2.0 * std::f64::consts::PI / grid as f64;
    for p in 0..grid {
        for q in 0..grid {
            if symmetric_response(&kernel, p as f64 * step, q as f64 * step) < -1e-12 {
                return Err(Error::param("blur kernel has a negative frequency response"));
            }
        }
    }
    let size = kernel.rows();
    let spec = if kernel.rows() == kernel.cols() && binomial_kernel(size).is_ok_and(|b| b == kernel) {
        DenoiserSpec::Gauss { size, std_dev: None }
    } else {
        DenoiserSpec::Custom { name: format!("blur {}x{}", kernel.rows(), kernel.cols()) }
    };
    Ok(GaussianBlurDenoiser { kernel, spec })
}

/// `D = N / (1 - k) - k / (1 - k) I` for a non-expansive linear `N`.
#[derive(Debug, Clone)]
pub struct SpcDenoiser {
    n: OperatorHandle,
    k: f64,
    base: Option<SpcBase>,
}

impl SpcDenoiser {
    pub fn k(&self) -> f64 {
        self.k
    }

    /// The non-expansive factor `N = (1 - k) D + k I`.
    pub fn base_operator(&self) -> &OperatorHandle {
        &self.n
    }

    fn combine(&self, nv: &Image, v: &Image) -> Image {
        let s = 1.0 / (1.0 - self.k);
        nv.lincomb(s, v, -self.k * s)
    }
}

impl Denoiser for SpcDenoiser {
    fn apply(&self, x: &Image, _sigma: f64) -> Image {
        self.combine(&self.n.apply(x), x)
    }

    fn jvp(&self, _x: &Image, _sigma: f64, v: &Image) -> Image {
        self.combine(&self.n.apply(v), v)
    }

    fn vjp(&self, _x: &Image, _sigma: f64, w: &Image) -> Option<Image> {
        Some(self.combine(&self.n.adjoint(w), w))
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { linear: true, symmetric_jacobian: false, exact_probe: true, has_vjp: true }
    }

    fn spec(&self) -> DenoiserSpec {
        match self.base {
            Some(base) => DenoiserSpec::Spc { base, k: self.k },
            None => DenoiserSpec::Custom { name: format!("spc(k={})", self.k) },
        }
    }
}

struct OperatorMap<'a> {
    op: &'a dyn LinearOperator,
    shape: (usize, usize),
}

impl LinearMap for OperatorMap<'_> {
    fn dim(&self) -> usize {
        self.shape.0 * self.shape.1
    }

    fn matvec(&self, v: &[f64]) -> Vec<f64> {
        let x = Image::new(self.shape.0, self.shape.1, v.to_vec()).expect("probe vector");
        self.op.apply(&x).into_data()
    }

    fn rmatvec(&self, v: &[f64]) -> Vec<f64> {
        let x = Image::new(self.shape.0, self.shape.1, v.to_vec()).expect("probe vector");
        self.op.adjoint(&x).into_data()
    }
}

/// Builds an exactly `k`-strictly pseudo-contractive linear denoiser from a
/// non-expansive `n`. `‖n‖ <= 1` is verified by 200 power iterations on images
/// of shape `probe_shape`.
pub fn make_spc_denoiser(n: OperatorHandle, k: f64, probe_shape: (usize, usize)) -> Result<SpcDenoiser> {
    if !(0.0..1.0).contains(&k) {
        return Err(Error::param(format!("k must lie in [0, 1), got {k}")));
    }
    let cfg = ProbeConfig { power_iters: 200, ..ProbeConfig::default() };
    let norm = spectral::power_norm(&OperatorMap { op: n.as_ref(), shape: probe_shape }, &cfg);
    if norm > 1.0 + 1e-8 {
        return Err(Error::param(format!("base operator is expansive: ‖N‖ ≈ {norm}")));
    }
    Ok(SpcDenoiser { n, k, base: None })
}

/// `D(x) = x + c A x` with `A` the pair-rotation generator (`Aᵀ = -A`).
///
/// The symmetric part of the Jacobian is exactly `I`, so `D` sits on the
/// pseudo-contractive boundary while `‖J‖ = sqrt(1 + c²)`. An odd trailing
/// pixel is paired with zero and passes through unchanged.
#[derive(Debug, Clone, Copy)]
pub struct AntisymmetricDenoiser {
    c: f64,
}

impl AntisymmetricDenoiser {
    pub fn c(&self) -> f64 {
        self.c
    }
}

impl Denoiser for AntisymmetricDenoiser {
    fn apply(&self, x: &Image, _sigma: f64) -> Image {
        x.lincomb(1.0, &PairRotation.apply(x), self.c)
    }

    fn jvp(&self, _x: &Image, _sigma: f64, v: &Image) -> Image {
        v.lincomb(1.0, &PairRotation.apply(v), self.c)
    }

    fn vjp(&self, _x: &Image, _sigma: f64, w: &Image) -> Option<Image> {
        Some(w.lincomb(1.0, &PairRotation.adjoint(w), self.c))
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { linear: true, symmetric_jacobian: self.c == 0.0, exact_probe: true, has_vjp: true }
    }

    fn spec(&self) -> DenoiserSpec {
        DenoiserSpec::Antisym { c: self.c }
    }
}

pub fn make_antisymmetric_denoiser(c: f64) -> Result<AntisymmetricDenoiser> {
    if !(c >= 0.0) || !c.is_finite() {
        return Err(Error::param(format!("antisymmetric scale must be non-negative, got {c}")));
    }
    Ok(AntisymmetricDenoiser { c })
}

/// Soft-thresholding of orthonormal DCT coefficients: the proximal operator of
/// `τ‖DCT x‖₁`, hence firmly non-expansive.
///
/// The threshold is `τ = t · σ / 25`, i.e. `t` applies verbatim at σ = 25.
#[derive(Debug, Clone, Copy)]
pub struct DctShrinkDenoiser {
    t: f64,
}

impl DctShrinkDenoiser {
    pub fn threshold(&self, sigma: f64) -> f64 {
        self.t * sigma / DCT_REFERENCE_SIGMA
    }

    fn mask(&self, x: &Image, sigma: f64) -> Image {
        let tau = self.threshold(sigma);
        dct2(x).map(|c| if c.abs() > tau { 1.0 } else { 0.0 })
    }
}

impl Denoiser for DctShrinkDenoiser {
    fn apply(&self, x: &Image, sigma: f64) -> Image {
        let tau = self.threshold(sigma);
        let coeffs = dct2(x).map(|c| c.signum() * (c.abs() - tau).max(0.0));
        idct2(&coeffs)
    }

    fn jvp(&self, x: &Image, sigma: f64, v: &Image) -> Image {
        idct2(&dct2(v).zip_map(&self.mask(x, sigma), |c, m| c * m))
    }

    fn vjp(&self, x: &Image, sigma: f64, w: &Image) -> Option<Image> {
        Some(self.jvp(x, sigma, w))
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { linear: self.t == 0.0, symmetric_jacobian: true, exact_probe: true, has_vjp: true }
    }

    fn spec(&self) -> DenoiserSpec {
        DenoiserSpec::DctShrink { t: self.t }
    }
}

pub fn make_dct_shrink_denoiser(t: f64) -> Result<DctShrinkDenoiser> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::param(format!("shrinkage threshold must be non-negative, got {t}")));
    }
    Ok(DctShrinkDenoiser { t })
}

/// A linear denoiser given by an arbitrary operator; the Jacobian is the
/// operator itself and the transposed probe is its adjoint.
#[derive(Debug, Clone)]
pub struct LinearDenoiser {
    op: OperatorHandle,
    name: String,
    symmetric: bool,
}

impl Denoiser for LinearDenoiser {
    fn apply(&self, x: &Image, _sigma: f64) -> Image {
        self.op.apply(x)
    }

    fn jvp(&self, _x: &Image, _sigma: f64, v: &Image) -> Image {
        self.op.apply(v)
    }

    fn vjp(&self, _x: &Image, _sigma: f64, w: &Image) -> Option<Image> {
        Some(self.op.adjoint(w))
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { linear: true, symmetric_jacobian: self.symmetric, exact_probe: true, has_vjp: true }
    }

    fn spec(&self) -> DenoiserSpec {
        DenoiserSpec::Custom { name: self.name.clone() }
    }
}

pub fn make_linear_denoiser(op: OperatorHandle, name: impl Into<String>, symmetric: bool) -> LinearDenoiser {
    LinearDenoiser { op, name: name.into(), symmetric }
}

/// Hides the exact probes of another denoiser, leaving only `apply` and the
/// finite-difference `jvp`.
#[derive(Debug, Clone)]
pub struct BlackBox(pub DenoiserHandle);

impl Denoiser for BlackBox {
    fn apply(&self, x: &Image, sigma: f64) -> Image {
        self.0.apply(x, sigma)
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { linear: self.0.capabilities().linear, ..Capabilities::default() }
    }

    fn spec(&self) -> DenoiserSpec {
        DenoiserSpec::Custom { name: format!("black-box {}", self.0.spec()) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn spec_strings_round_trip() {
        for s in ["identity", "gauss:3x3", "gauss:5x5:s=1.5", "spc:rot90:k=0.5", "spc:scale=0.8:k=0.25", "antisym:c=1", "dct-shrink:t=0.05"] {
            let spec: DenoiserSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
            let json = serde_json::to_string(&spec).unwrap();
            assert_eq!(serde_json::from_str::<DenoiserSpec>(&json).unwrap(), spec);
        }
        assert!("gauss:3x5".parse::<DenoiserSpec>().is_err());
        assert!("spc:rot90".parse::<DenoiserSpec>().is_err());
        assert!("bm3d".parse::<DenoiserSpec>().is_err());
    }

    #[test]
    fn blur_rejects_bad_kernels() {
        let asym = Kernel::new(1, 3, vec![0.5, 0.5, 0.0]).unwrap();
        assert!(make_gaussian_blur_denoiser(asym).is_err());
        let neg = Kernel::normalized(1, 3, vec![-0.1, 1.2, -0.1]).unwrap();
        assert!(make_gaussian_blur_denoiser(neg).is_err());
        // symmetric and positive but with a negative transfer function
        let wide = Kernel::normalized(1, 3, vec![0.45, 0.1, 0.45]).unwrap();
        assert!(make_gaussian_blur_denoiser(wide).is_err());
    }

    #[test]
    fn delta_blur_is_identity_and_dc_is_preserved() {
        let d = make_gaussian_blur_denoiser(Kernel::delta()).unwrap();
        let x = Image::random_uniform(6, 6, &mut rng());
        assert!(d.apply(&x, 15.0).max_abs_diff(&x) < 1e-14);
        let g = make_gaussian_blur_denoiser(Kernel::binomial3()).unwrap();
        let c = Image::constant(8, 8, 0.3);
        assert!(g.apply(&c, 15.0).max_abs_diff(&c) < 1e-14);
        assert_eq!(g.spec(), DenoiserSpec::Gauss { size: 3, std_dev: None });
    }

    #[test]
    fn spc_rejects_expansive_base_and_bad_k() {
        assert!(make_spc_denoiser(Arc::new(ScaledIdentity(1.1)), 0.5, (4, 4)).is_err());
        assert!(make_spc_denoiser(Arc::new(PairRotation), 1.0, (4, 4)).is_err());
        assert!(make_spc_denoiser(Arc::new(PairRotation), -0.1, (4, 4)).is_err());
    }

    #[test]
    fn spc_with_zero_k_is_the_base_operator() {
        let d = make_spc_denoiser(Arc::new(PairRotation), 0.0, (4, 4)).unwrap();
        let x = Image::random_normal(4, 4, &mut rng());
        assert!(d.apply(&x, 0.0).max_abs_diff(&PairRotation.apply(&x)) < 1e-15);
    }

    #[test]
    fn spc_scaled_identity_matches_closed_form() {
        let d = make_spc_denoiser(Arc::new(ScaledIdentity(0.8)), 0.25, (4, 4)).unwrap();
        let x = Image::random_normal(4, 4, &mut rng());
        assert!(d.apply(&x, 0.0).max_abs_diff(&x.scale(11.0 / 15.0)) < 1e-14);
    }

    #[test]
    fn antisymmetric_quadratic_form_vanishes() {
        let d = make_antisymmetric_denoiser(1.0).unwrap();
        let mut r = rng();
        for _ in 0..20 {
            let x = Image::random_normal(5, 5, &mut r);
            let v = Image::random_normal(5, 5, &mut r);
            let residual = &v - &d.jvp(&x, 0.0, &v);
            assert!(residual.dot(&v).abs() < 1e-12);
        }
        assert!(make_antisymmetric_denoiser(-1.0).is_err());
        let odd = Image::new(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(d.apply(&odd, 0.0).data(), &[-1.0, 3.0, 3.0]);
    }

    #[test]
    fn dct_shrink_zero_threshold_is_identity() {
        let d = make_dct_shrink_denoiser(0.0).unwrap();
        let x = Image::random_uniform(8, 8, &mut rng());
        assert!(d.apply(&x, 25.0).max_abs_diff(&x) < 1e-12);
        assert!(make_dct_shrink_denoiser(-1.0).is_err());
    }

    #[test]
    fn dct_shrink_subtracts_signed_threshold_on_large_coefficients() {
        let mut r = rng();
        // coefficients all at least 1 in magnitude
        let coeffs = Image::random_normal(6, 6, &mut r).map(|c| c.signum() * (1.0 + c.abs()));
        let x = idct2(&coeffs);
        let d = make_dct_shrink_denoiser(0.2).unwrap();
        let expected = idct2(&coeffs.map(|c| c - 0.2 * c.signum()));
        let got = d.apply(&x, DCT_REFERENCE_SIGMA);
        assert!(got.max_abs_diff(&expected) < 1e-12);
        assert!(got.norm() < x.norm());
    }

    #[test]
    fn dct_shrink_threshold_scales_with_sigma() {
        let d = make_dct_shrink_denoiser(0.1).unwrap();
        assert!((d.threshold(50.0) - 0.2).abs() < 1e-15);
        assert_eq!(d.threshold(0.0), 0.0);
    }

    #[test]
    fn finite_difference_probe() {
        let mut r = rng();
        let x = Image::random_uniform(6, 6, &mut r);
        let v = Image::random_normal(6, 6, &mut r);
        let id = IdentityDenoiser;
        // exact up to rounding of x ± hv
        let fd = finite_difference_jvp(&id, &x, 0.0, &v, 1e-4).unwrap();
        assert!(fd.max_abs_diff(&v) < 1e-10);
        assert!(finite_difference_jvp(&id, &x, 0.0, &v, 0.0).is_err());

        let g = make_gaussian_blur_denoiser(Kernel::binomial3()).unwrap();
        let fd = finite_difference_jvp(&g, &x, 0.0, &v, FD_STEP).unwrap();
        assert!(fd.max_abs_diff(&g.jvp(&x, 0.0, &v)) < 1e-6);

        let s = make_dct_shrink_denoiser(0.1).unwrap();
        let fd = finite_difference_jvp(&s, &x, 25.0, &v, 1e-7).unwrap();
        assert!(fd.max_abs_diff(&s.jvp(&x, 25.0, &v)) < 1e-6);
    }

    #[test]
    fn black_box_hides_probes() {
        let bb = BlackBox(Arc::new(IdentityDenoiser));
        let x = Image::zeros(2, 2);
        assert!(bb.vjp(&x, 0.0, &x).is_none());
        assert!(!bb.capabilities().exact_probe);
    }
}
