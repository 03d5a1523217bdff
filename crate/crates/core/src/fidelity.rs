//! Data-fidelity terms `G(u; f)` with gradient, proximal map and
//! cocoercivity constant.
//!
//! `prox(x, w)` returns `argmin_u w·G(u) + ½‖u - x‖²`; solvers pass `w = 1/β`.

use std::fmt::Debug;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::image::{dot, norm, Image, Kernel};
use crate::linop::{CircularConvolution, Downsample, LinearOperator};

/// Pixels are clamped to at least this value before Poisson value/gradient
/// evaluation inside solvers.
pub const POISSON_FLOOR: f64 = 1e-8;

/// Relative residual at which the super-resolution prox stops.
pub const SISR_CG_TOL: f64 = 1e-10;

pub trait Fidelity: Send + Sync + Debug {
    fn value(&self, u: &Image) -> Result<f64>;
    fn grad(&self, u: &Image) -> Result<Image>;
    /// `argmin_u weight·G(u) + ½‖u - x‖²`
    fn prox(&self, x: &Image, weight: f64) -> Result<Image>;
    /// `γ` with `<∇G(x) - ∇G(y), x - y> >= γ‖∇G(x) - ∇G(y)‖²`; `None` when `∇G` is not cocoercive.
    fn cocoercivity(&self) -> Option<f64>;
    fn grad_lipschitz(&self) -> Option<f64>;
    fn observation(&self) -> &Image;
    fn describe(&self) -> String;
    /// Starting point of a restoration run, in the solution space.
    fn initial_estimate(&self) -> Image;
    /// Gradient as used inside solvers; may regularize the domain.
    fn solver_grad(&self, u: &Image) -> Result<Image> {
        self.grad(u)
    }
    /// Shape of the solution space.
    fn solution_shape(&self) -> (usize, usize) {
        self.observation().shape()
    }
}

pub type FidelityHandle = Arc<dyn Fidelity>;

fn check_mu(mu: f64) -> Result<()> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::param(format!("mu must be positive, got {mu}")));
    }
    Ok(())
}

fn check_weight(weight: f64) -> Result<()> {
    if !(weight >= 0.0 && weight.is_finite()) {
        return Err(Error::param(format!("prox weight must be nonnegative, got {weight}")));
    }
    Ok(())
}

fn check_shape(u: &Image, shape: (usize, usize)) -> Result<()> {
    if u.shape() != shape {
        return Err(Error::dim(format!("expected a {}x{} image, got {}x{}", shape.0, shape.1, u.height(), u.width())));
    }
    Ok(())
}

/// `(μ/2)‖K u - f‖²` with circular convolution `K`.
#[derive(Debug, Clone)]
pub struct DeblurFidelity {
    f: Image,
    kernel: Kernel,
    op: CircularConvolution,
    mu: f64,
    /// `conj(K̂) f̂`
    kf_hat: Vec<Complex64>,
}

pub fn make_deblur_fidelity(f: Image, kernel: Kernel, mu: f64) -> Result<DeblurFidelity> {
    check_mu(mu)?;
    let op = CircularConvolution::new(&kernel, f.height(), f.width())?;
    let kf_hat = op
        .plan()
        .forward_real(f.data())
        .iter()
        .zip(op.spectrum())
        .map(|(fh, kh)| kh.conj() * fh)
        .collect();
    Ok(DeblurFidelity { f, kernel, op, mu, kf_hat })
}

impl DeblurFidelity {
    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn operator(&self) -> &CircularConvolution {
        &self.op
    }

    fn residual(&self, u: &Image) -> Result<Image> {
        check_shape(u, self.f.shape())?;
        Ok(&self.op.apply(u) - &self.f)
    }
}

impl Fidelity for DeblurFidelity {
    fn value(&self, u: &Image) -> Result<f64> {
        Ok(0.5 * self.mu * self.residual(u)?.norm_sq())
    }

    fn grad(&self, u: &Image) -> Result<Image> {
        Ok(self.op.adjoint(&self.residual(u)?).scale(self.mu))
    }

    fn prox(&self, x: &Image, weight: f64) -> Result<Image> {
        check_shape(x, self.f.shape())?;
        check_weight(weight)?;
        let wm = weight * self.mu;
        let mut buf = self.op.plan().forward_real(x.data());
        for ((b, kf), k) in buf.iter_mut().zip(&self.kf_hat).zip(self.op.spectrum()) {
            *b = (*kf * wm + *b) / (wm * k.norm_sqr() + 1.0);
        }
        x.try_with_data(self.op.plan().inverse_real(buf))
    }

    fn cocoercivity(&self) -> Option<f64> {
        let l = self.mu * self.op.norm_bound().powi(2);
        Some(if l > 0.0 { 1.0 / l } else { f64::INFINITY })
    }

    fn grad_lipschitz(&self) -> Option<f64> {
        Some(self.mu * self.op.norm_bound().powi(2))
    }

    fn observation(&self) -> &Image {
        &self.f
    }

    fn describe(&self) -> String {
        format!("deblur: (mu/2)|Ku - f|^2, kernel {}x{}, mu = {}", self.kernel.rows(), self.kernel.cols(), self.mu)
    }

    fn initial_estimate(&self) -> Image {
        self.f.clone()
    }
}

/// Conjugate gradient for a symmetric positive definite `A`.
#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// `‖b - A x‖ / ‖b‖`
    pub relative_residual: f64,
}

pub fn conjugate_gradient(
    a: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    x0: &[f64],
    rel_tol: f64,
    max_iters: usize,
) -> CgOutcome {
    let b_norm = norm(b);
    let mut x = x0.to_vec();
    if b_norm == 0.0 {
        return CgOutcome { x: vec![0.0; b.len()], iterations: 0, relative_residual: 0.0 };
    }
    let ax = a(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let mut iterations = 0;
    while rr.sqrt() > rel_tol * b_norm && iterations < max_iters {
        let ap = a(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let step = rr / pap;
        x.iter_mut().zip(&p).for_each(|(x, p)| *x += step * p);
        r.iter_mut().zip(&ap).for_each(|(r, ap)| *r -= step * ap);
        let rr_new = dot(&r, &r);
        let ratio = rr_new / rr;
        p.iter_mut().zip(&r).for_each(|(p, r)| *p = r + ratio * *p);
        rr = rr_new;
        iterations += 1;
    }
    CgOutcome { x, iterations, relative_residual: rr.sqrt() / b_norm }
}

/// `(μ/2)‖S K u - f‖²` with `s`-fold decimation `S`; `f` is the low-resolution image.
#[derive(Debug, Clone)]
pub struct SisrFidelity {
    f: Image,
    kernel: Kernel,
    conv: CircularConvolution,
    down: Downsample,
    mu: f64,
    high: (usize, usize),
    /// `Kᵀ Sᵀ f`
    atf: Image,
}

pub fn make_sisr_fidelity(f: Image, kernel: Kernel, s: usize, mu: f64) -> Result<SisrFidelity> {
    check_mu(mu)?;
    let down = Downsample::new(s)?;
    let high = (f.height() * s, f.width() * s);
    let conv = CircularConvolution::new(&kernel, high.0, high.1)?;
    let atf = conv.adjoint(&down.adjoint(&f));
    Ok(SisrFidelity { f, kernel, conv, down, mu, high, atf })
}

impl SisrFidelity {
    pub fn scale_factor(&self) -> usize {
        self.down.factor()
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// `S K u`
    pub fn forward(&self, u: &Image) -> Result<Image> {
        check_shape(u, self.high)?;
        Ok(self.down.apply(&self.conv.apply(u)))
    }

    fn normal(&self, u: &Image) -> Image {
        self.conv.adjoint(&self.down.adjoint(&self.down.apply(&self.conv.apply(u))))
    }
}

impl Fidelity for SisrFidelity {
    fn value(&self, u: &Image) -> Result<f64> {
        Ok(0.5 * self.mu * (&self.forward(u)? - &self.f).norm_sq())
    }

    fn grad(&self, u: &Image) -> Result<Image> {
        let r = &self.forward(u)? - &self.f;
        Ok(self.conv.adjoint(&self.down.adjoint(&r)).scale(self.mu))
    }

    fn prox(&self, x: &Image, weight: f64) -> Result<Image> {
        check_shape(x, self.high)?;
        check_weight(weight)?;
        let wm = weight * self.mu;
        let rhs = self.atf.lincomb(wm, x, 1.0);
        let apply = |v: &[f64]| {
            let img = x.with_data(v.to_vec());
            self.normal(&img).lincomb(wm, &img, 1.0).into_data()
        };
        let out = conjugate_gradient(apply, rhs.data(), x.data(), SISR_CG_TOL, 10 * x.len() + 100);
        x.try_with_data(out.x)
    }

    fn cocoercivity(&self) -> Option<f64> {
        let l = self.mu * self.conv.norm_bound().powi(2);
        Some(if l > 0.0 { 1.0 / l } else { f64::INFINITY })
    }

    fn grad_lipschitz(&self) -> Option<f64> {
        Some(self.mu * self.conv.norm_bound().powi(2))
    }

    fn observation(&self) -> &Image {
        &self.f
    }

    fn describe(&self) -> String {
        format!(
            "sisr: (mu/2)|SKu - f|^2, scale {}, kernel {}x{}, mu = {}",
            self.down.factor(),
            self.kernel.rows(),
            self.kernel.cols(),
            self.mu
        )
    }

    fn initial_estimate(&self) -> Image {
        bicubic_upsample(&self.f, self.down.factor())
    }

    fn solution_shape(&self) -> (usize, usize) {
        self.high
    }
}

fn cubic_weight(t: f64) -> f64 {
    // Keys kernel, a = -0.5
    let a = -0.5;
    let t = t.abs();
    if t <= 1.0 {
        (a + 2.0) * t.powi(3) - (a + 3.0) * t * t + 1.0
    } else if t < 2.0 {
        a * t.powi(3) - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a
    } else {
        0.0
    }
}

/// Bicubic interpolation onto an `s`-times larger grid, aligned so that
/// decimating the result returns `f`. Borders are replicated.
pub fn bicubic_upsample(f: &Image, s: usize) -> Image {
    let (h, w) = f.shape();
    let at = |i: isize, j: isize| f.get(i.clamp(0, h as isize - 1) as usize, j.clamp(0, w as isize - 1) as usize);
    Image::from_fn(h * s, w * s, |i, j| {
        let (y, x) = (i as f64 / s as f64, j as f64 / s as f64);
        let (y0, x0) = (y.floor() as isize, x.floor() as isize);
        let (fy, fx) = (y - y0 as f64, x - x0 as f64);
        let mut acc = 0.0;
        for di in -1..=2isize {
            let wy = cubic_weight(fy - di as f64);
            for dj in -1..=2isize {
                acc += wy * cubic_weight(fx - dj as f64) * at(y0 + di, x0 + dj);
            }
        }
        acc
    })
}

/// `μ Σ (u - f log u)` over `u > 0`.
#[derive(Debug, Clone)]
pub struct PoissonFidelity {
    f: Image,
    mu: f64,
    peak: f64,
}

pub fn make_poisson_fidelity(f: Image, mu: f64, peak: f64) -> Result<PoissonFidelity> {
    check_mu(mu)?;
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(Error::param(format!("peak must be positive, got {peak}")));
    }
    if f.data().iter().any(|&v| v < 0.0) {
        return Err(Error::Domain("Poisson observation must be nonnegative".into()));
    }
    Ok(PoissonFidelity { f, mu, peak })
}

/// Positive root of `u² - (x - c) u - c f = 0`, the stationarity condition
/// of `c (u - f log u) + ½ (u - x)²`.
pub fn poisson_prox_pixel(x: f64, f: f64, c: f64) -> f64 {
    let b = x - c;
    let disc = (b * b + 4.0 * c * f).max(0.0).sqrt();
    if b >= 0.0 {
        0.5 * (b + disc)
    } else if disc == -b {
        0.0
    } else {
        // avoids cancellation in b + disc when b < 0
        2.0 * c * f / (disc - b)
    }
}

impl PoissonFidelity {
    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn peak(&self) -> f64 {
        self.peak
    }

    fn check_domain(&self, u: &Image) -> Result<()> {
        check_shape(u, self.f.shape())?;
        if let Some(v) = u.data().iter().find(|&&v| v <= 0.0) {
            return Err(Error::Domain(format!("Poisson fidelity needs u > 0, found {v}")));
        }
        Ok(())
    }
}

impl Fidelity for PoissonFidelity {
    fn value(&self, u: &Image) -> Result<f64> {
        self.check_domain(u)?;
        let s: f64 = u
            .data()
            .iter()
            .zip(self.f.data())
            .map(|(&u, &f)| if f == 0.0 { u } else { u - f * u.ln() })
            .sum();
        Ok(self.mu * s)
    }

    fn grad(&self, u: &Image) -> Result<Image> {
        self.check_domain(u)?;
        Ok(u.zip_map(&self.f, |u, f| self.mu * (1.0 - f / u)))
    }

    fn prox(&self, x: &Image, weight: f64) -> Result<Image> {
        check_shape(x, self.f.shape())?;
        check_weight(weight)?;
        let c = weight * self.mu;
        Ok(x.zip_map(&self.f, |x, f| poisson_prox_pixel(x, f, c)))
    }

    fn cocoercivity(&self) -> Option<f64> {
        None
    }

    fn grad_lipschitz(&self) -> Option<f64> {
        None
    }

    fn observation(&self) -> &Image {
        &self.f
    }

    fn describe(&self) -> String {
        format!("poisson: mu * sum(u - f log u), mu = {}, peak = {}", self.mu, self.peak)
    }

    fn initial_estimate(&self) -> Image {
        self.f.clone()
    }

    fn solver_grad(&self, u: &Image) -> Result<Image> {
        self.grad(&u.map(|v| v.max(POISSON_FLOOR)))
    }
}

/// `Poisson(u · peak) / peak`, elementwise and seeded.
pub fn sample_poisson_observation(u: &Image, peak: f64, seed: u64) -> Result<Image> {
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(Error::param(format!("peak must be positive, got {peak}")));
    }
    if let Some(v) = u.data().iter().find(|&&v| v < 0.0) {
        return Err(Error::Domain(format!("Poisson rate must be nonnegative, found {v}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = u
        .data()
        .iter()
        .map(|&v| {
            let rate = v * peak;
            if rate == 0.0 {
                0.0
            } else {
                let d = Poisson::new(rate).expect("positive finite rate");
                d.sample(&mut rng) / peak
            }
        })
        .collect();
    u.try_with_data(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn delta_kernel_prox_is_scalar_average() {
        let g = make_deblur_fidelity(Image::zeros(4, 4), Kernel::delta(), 1.0).unwrap();
        let p = g.prox(&Image::constant(4, 4, 2.0), 1.0).unwrap();
        assert!(p.max_abs_diff(&Image::constant(4, 4, 1.0)) < 1e-14);
    }

    #[test]
    fn deblur_grad_vanishes_on_consistent_data() {
        let mut r = rng(1);
        let u = Image::random_uniform(8, 8, &mut r);
        let f = crate::linop::conv_circular(&u, &Kernel::binomial3()).unwrap();
        let g = make_deblur_fidelity(f, Kernel::binomial3(), 0.7).unwrap();
        assert!(g.grad(&u).unwrap().norm() < 1e-13);
        assert!(g.value(&u).unwrap() < 1e-25);
    }

    #[test]
    fn deblur_prox_matches_cg() {
        let mut r = rng(2);
        let f = Image::random_uniform(16, 16, &mut r);
        let x = Image::random_normal(16, 16, &mut r);
        let g = make_deblur_fidelity(f.clone(), Kernel::gaussian(5, 1.2).unwrap(), 0.4).unwrap();
        let w = 2.5;
        let op = CircularConvolution::new(g.kernel(), 16, 16).unwrap();
        let rhs = op.adjoint(&f).lincomb(w * 0.4, &x, 1.0);
        let apply = |v: &[f64]| {
            let img = x.with_data(v.to_vec());
            op.adjoint(&op.apply(&img)).lincomb(w * 0.4, &img, 1.0).into_data()
        };
        let cg = conjugate_gradient(apply, rhs.data(), &vec![0.0; 256], 0.0, 200);
        assert!(g.prox(&x, w).unwrap().max_abs_diff(&x.with_data(cg.x)) < 1e-8);
    }

    #[test]
    fn sisr_scale_one_matches_deblur() {
        let mut r = rng(3);
        let f = Image::random_uniform(8, 8, &mut r);
        let x = Image::random_normal(8, 8, &mut r);
        let k = Kernel::binomial3();
        let d = make_deblur_fidelity(f.clone(), k.clone(), 0.3).unwrap();
        let s = make_sisr_fidelity(f, k, 1, 0.3).unwrap();
        assert!(d.prox(&x, 1.5).unwrap().max_abs_diff(&s.prox(&x, 1.5).unwrap()) < 1e-7);
        assert!(d.grad(&x).unwrap().max_abs_diff(&s.grad(&x).unwrap()) < 1e-14);
    }

    #[test]
    fn sisr_prox_reduces_data_misfit() {
        let mut r = rng(4);
        let truth = Image::random_uniform(8, 8, &mut r);
        let probe = make_sisr_fidelity(Image::zeros(4, 4), Kernel::binomial3(), 2, 1.0).unwrap();
        let f = probe.forward(&truth).unwrap();
        let g = make_sisr_fidelity(f.clone(), Kernel::binomial3(), 2, 1e4).unwrap();
        let x = Image::random_uniform(8, 8, &mut r);
        let before = (&g.forward(&x).unwrap() - &f).norm();
        let after = (&g.forward(&g.prox(&x, 1.0).unwrap()).unwrap() - &f).norm();
        assert!(after <= before);
        assert!(after < 1e-2 * before);
    }

    #[test]
    fn sisr_rejects_bad_shapes() {
        let g = make_sisr_fidelity(Image::zeros(4, 4), Kernel::binomial3(), 2, 1.0).unwrap();
        assert!(g.grad(&Image::zeros(4, 4)).is_err());
        assert_eq!(g.initial_estimate().shape(), (8, 8));
    }

    #[test]
    fn bicubic_keeps_samples_and_constants() {
        let mut r = rng(5);
        let f = Image::random_uniform(5, 6, &mut r);
        let up = bicubic_upsample(&f, 3);
        assert!(crate::linop::downsample(&up, 3).unwrap().max_abs_diff(&f) < 1e-14);
        let c = bicubic_upsample(&Image::constant(3, 3, 0.4), 2);
        assert!(c.max_abs_diff(&Image::constant(6, 6, 0.4)) < 1e-14);
    }

    #[test]
    fn poisson_prox_scalar_cases() {
        assert!((poisson_prox_pixel(1.0, 1.0, 1.0) - 1.0).abs() < 1e-15);
        assert!((poisson_prox_pixel(2.0, 0.0, 1.0) - 1.0).abs() < 1e-15);
        assert!((poisson_prox_pixel(0.0, 4.0, 1.0) - (17f64.sqrt() - 1.0) / 2.0).abs() < 1e-15);
        assert_eq!(poisson_prox_pixel(-1.0, 0.0, 1.0), 0.0);
    }

    #[test]
    fn poisson_prox_stationarity() {
        let mut r = rng(6);
        for _ in 0..1000 {
            let (x, f, c) = (r.random_range(-3.0..3.0), r.random_range(0.0..3.0), r.random_range(0.01..5.0));
            let u: f64 = poisson_prox_pixel(x, f, c);
            assert!(u > 0.0);
            let g = c * (1.0 - f / u) + (u - x);
            assert!(g.abs() <= 1e-8 * (1.0 + x.abs()), "x={x} f={f} c={c} u={u} g={g}");
        }
    }

    #[test]
    fn poisson_domain_errors_and_clamp() {
        let g = make_poisson_fidelity(Image::constant(2, 2, 0.5), 1.0, 10.0).unwrap();
        assert!(matches!(g.value(&Image::zeros(2, 2)), Err(Error::Domain(_))));
        assert!(matches!(g.grad(&Image::constant(2, 2, -1.0)), Err(Error::Domain(_))));
        assert!(g.solver_grad(&Image::zeros(2, 2)).is_ok());
        assert!(g.cocoercivity().is_none());
        assert!(make_poisson_fidelity(Image::constant(2, 2, -0.1), 1.0, 10.0).is_err());
        assert!(make_poisson_fidelity(Image::zeros(2, 2), 0.0, 10.0).is_err());
    }

    #[test]
    fn poisson_sampling() {
        assert_eq!(sample_poisson_observation(&Image::zeros(3, 3), 10.0, 1).unwrap(), Image::zeros(3, 3));
        assert!(sample_poisson_observation(&Image::constant(2, 2, -0.5), 10.0, 1).is_err());
        let u = Image::constant(4, 4, 0.3);
        assert_eq!(sample_poisson_observation(&u, 10.0, 9).unwrap(), sample_poisson_observation(&u, 10.0, 9).unwrap());
    }

    #[test]
    fn cocoercivity_of_quadratic_fidelity() {
        let mut r = rng(7);
        let g = make_deblur_fidelity(Image::random_uniform(8, 8, &mut r), Kernel::binomial3(), 0.6).unwrap();
        let gamma = g.cocoercivity().unwrap();
        assert!((gamma - 1.0 / 0.6).abs() < 1e-12);
        for _ in 0..50 {
            let (x, y) = (Image::random_normal(8, 8, &mut r), Image::random_normal(8, 8, &mut r));
            let d = &g.grad(&x).unwrap() - &g.grad(&y).unwrap();
            assert!(d.dot(&(&x - &y)) >= gamma * d.norm_sq() - 1e-8);
        }
    }
}
