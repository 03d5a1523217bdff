//! Linear operators on images: circular convolution, s-fold downsampling and
//! a few analytic maps used to build test denoisers.

use std::fmt::Debug;
use std::sync::Arc;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::image::{Image, Kernel};

/// A linear map between image spaces with its adjoint.
///
/// Operators built for a fixed shape panic when applied to a different one;
/// the fallible constructors and free functions validate shapes up front.
pub trait LinearOperator: Send + Sync + Debug {
    fn apply(&self, x: &Image) -> Image;
    fn adjoint(&self, y: &Image) -> Image;
    /// Upper bound on the spectral norm.
    fn norm_bound(&self) -> f64;
    /// Shape of `apply(x)` for an input of shape `input`.
    fn output_shape(&self, input: (usize, usize)) -> (usize, usize) {
        input
    }
}

pub type OperatorHandle = Arc<dyn LinearOperator>;

/// Relative adjoint mismatch `|<Ax, y> - <x, A^T y>| / (|x| |y|)`.
pub fn adjoint_mismatch(op: &dyn LinearOperator, x: &Image, y: &Image) -> f64 {
    let lhs = op.apply(x).dot(y);
    let rhs = x.dot(&op.adjoint(y));
    let scale = x.norm() * y.norm();
    if scale == 0.0 {
        (lhs - rhs).abs()
    } else {
        (lhs - rhs).abs() / scale
    }
}

/// Circular convolution with a fixed kernel on a fixed image shape, computed
/// as a pointwise product in the frequency domain.
#[derive(Debug, Clone)]
pub struct CircularConvolution {
    height: usize,
    width: usize,
    plan: Fft2,
    spectrum: Vec<Complex64>,
    norm: f64,
}

impl CircularConvolution {
    pub fn new(kernel: &Kernel, height: usize, width: usize) -> Result<Self> {
        if kernel.rows() > height || kernel.cols() > width {
            return Err(Error::dim(format!(
                "kernel {}x{} larger than image {height}x{width}",
                kernel.rows(),
                kernel.cols()
            )));
        }
        // Centre tap goes to (0, 0); the rest wraps around.
        let (cr, cc) = kernel.center();
        let mut padded = vec![0.0; height * width];
        for r in 0..kernel.rows() {
            for c in 0..kernel.cols() {
                let i = (r + height - cr) % height;
                let j = (c + width - cc) % width;
                padded[i * width + j] += kernel.tap(r, c);
            }
        }
        let plan = Fft2::new(height, width);
        let spectrum = plan.forward_real(&padded);
        let norm = spectrum.iter().map(|z| z.norm()).fold(0.0, f64::max);
        Ok(Self { height, width, plan, spectrum, norm })
    }

    /// Transfer function `K̂` on the `height x width` frequency grid.
    pub fn spectrum(&self) -> &[Complex64] {
        &self.spectrum
    }

    pub fn plan(&self) -> &Fft2 {
        &self.plan
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    fn filter(&self, x: &Image, conjugate: bool) -> Image {
        assert_eq!(x.shape(), (self.height, self.width), "convolution shape mismatch");
        let mut buf = self.plan.forward_real(x.data());
        for (v, k) in buf.iter_mut().zip(&self.spectrum) {
            *v *= if conjugate { k.conj() } else { *k };
        }
        x.with_data(self.plan.inverse_real(buf))
    }
}

impl LinearOperator for CircularConvolution {
    fn apply(&self, x: &Image) -> Image {
        self.filter(x, false)
    }

    fn adjoint(&self, y: &Image) -> Image {
        self.filter(y, true)
    }

    fn norm_bound(&self) -> f64 {
        self.norm
    }
}

/// Circular convolution of `x` with `k`.
pub fn conv_circular(x: &Image, k: &Kernel) -> Result<Image> {
    Ok(CircularConvolution::new(k, x.height(), x.width())?.apply(x))
}

/// Keeps every `s`-th pixel starting at `(0, 0)`.
#[derive(Debug, Clone, Copy)]
pub struct Downsample {
    factor: usize,
}

impl Downsample {
    pub fn new(factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::param("downsampling factor must be positive"));
        }
        Ok(Self { factor })
    }

    pub fn factor(&self) -> usize {
        self.factor
    }

    pub fn check(&self, height: usize, width: usize) -> Result<()> {
        if !height.is_multiple_of(self.factor) || !width.is_multiple_of(self.factor) {
            return Err(Error::dim(format!(
                "factor {} does not divide {height}x{width}",
                self.factor
            )));
        }
        Ok(())
    }
}

impl LinearOperator for Downsample {
    fn apply(&self, x: &Image) -> Image {
        let s = self.factor;
        assert!(x.height().is_multiple_of(s) && x.width().is_multiple_of(s), "factor does not divide image");
        Image::from_fn(x.height() / s, x.width() / s, |i, j| x.get(i * s, j * s))
    }

    fn adjoint(&self, y: &Image) -> Image {
        let s = self.factor;
        Image::from_fn(y.height() * s, y.width() * s, |i, j| {
            if i % s == 0 && j % s == 0 {
                y.get(i / s, j / s)
            } else {
                0.0
            }
        })
    }

    fn norm_bound(&self) -> f64 {
        1.0
    }

    fn output_shape(&self, input: (usize, usize)) -> (usize, usize) {
        (input.0 / self.factor, input.1 / self.factor)
    }
}

pub fn downsample(x: &Image, s: usize) -> Result<Image> {
    let op = Downsample::new(s)?;
    op.check(x.height(), x.width())?;
    Ok(op.apply(x))
}

/// Adjoint of [`downsample`]: zero-filled upsampling.
pub fn upsample_adjoint(y: &Image, s: usize) -> Result<Image> {
    Ok(Downsample::new(s)?.adjoint(y))
}

/// `outer ∘ inner`.
#[derive(Debug, Clone)]
pub struct Composition {
    outer: OperatorHandle,
    inner: OperatorHandle,
}

impl Composition {
    pub fn new(outer: OperatorHandle, inner: OperatorHandle) -> Self {
        Self { outer, inner }
    }
}

impl LinearOperator for Composition {
    fn apply(&self, x: &Image) -> Image {
        self.outer.apply(&self.inner.apply(x))
    }

    fn adjoint(&self, y: &Image) -> Image {
        self.inner.adjoint(&self.outer.adjoint(y))
    }

    fn norm_bound(&self) -> f64 {
        self.outer.norm_bound() * self.inner.norm_bound()
    }

    fn output_shape(&self, input: (usize, usize)) -> (usize, usize) {
        self.outer.output_shape(self.inner.output_shape(input))
    }
}

/// `c * I` on any shape.
#[derive(Debug, Clone, Copy)]
pub struct ScaledIdentity(pub f64);

impl LinearOperator for ScaledIdentity {
    fn apply(&self, x: &Image) -> Image {
        x.scale(self.0)
    }

    fn adjoint(&self, y: &Image) -> Image {
        y.scale(self.0)
    }

    fn norm_bound(&self) -> f64 {
        self.0.abs()
    }
}

/// Rotation by 90° applied to consecutive pixel pairs `(x[2i], x[2i+1])` in
/// row-major order: `(a, b) -> (-b, a)`.
///
/// An odd trailing pixel is paired with an implicit zero, so it maps to zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct PairRotation;

impl PairRotation {
    pub(crate) fn rotate(data: &[f64], sign: f64) -> Vec<f64> {
        let mut out = vec![0.0; data.len()];
        for (o, d) in out.chunks_exact_mut(2).zip(data.chunks_exact(2)) {
            o[0] = -sign * d[1];
            o[1] = sign * d[0];
        }
        out
    }
}

impl LinearOperator for PairRotation {
    fn apply(&self, x: &Image) -> Image {
        x.with_data(Self::rotate(x.data(), 1.0))
    }

    fn adjoint(&self, y: &Image) -> Image {
        y.with_data(Self::rotate(y.data(), -1.0))
    }

    fn norm_bound(&self) -> f64 {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn delta_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Image::random_uniform(6, 9, &mut rng);
        let y = conv_circular(&x, &Kernel::delta()).unwrap();
        assert!(y.max_abs_diff(&x) < 1e-14);
    }

    #[test]
    fn normalized_kernel_preserves_constants() {
        let x = Image::constant(8, 8, 0.37);
        let y = conv_circular(&x, &Kernel::gaussian(5, 1.2).unwrap()).unwrap();
        assert!(y.max_abs_diff(&x) < 1e-14);
    }

    #[test]
    fn impulse_response_of_horizontal_binomial() {
        let mut x = vec![0.0; 64];
        x[0] = 1.0;
        let x = Image::new(8, 8, x).unwrap();
        let k = Kernel::new(1, 3, vec![0.25, 0.5, 0.25]).unwrap();
        let y = conv_circular(&x, &k).unwrap();
        let expected = [0.5, 0.25, 0.0, 0.0, 0.0, 0.0, 0.0, 0.25];
        for (j, e) in expected.iter().enumerate() {
            assert!((y.get(0, j) - e).abs() < 1e-14);
        }
        for i in 1..8 {
            for j in 0..8 {
                assert!(y.get(i, j).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn oversized_kernel_is_rejected() {
        let x = Image::zeros(2, 8);
        assert!(matches!(
            conv_circular(&x, &Kernel::binomial3()),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn downsample_selects_every_other_pixel() {
        let x = Image::from_fn(4, 4, |i, j| (4 * i + j) as f64);
        let y = downsample(&x, 2).unwrap();
        assert_eq!(y.data(), &[0.0, 2.0, 8.0, 10.0]);
        assert_eq!(downsample(&x, 1).unwrap(), x);
        assert_eq!(upsample_adjoint(&x, 1).unwrap(), x);
    }

    #[test]
    fn downsample_rejects_non_divisible_shapes() {
        let x = Image::zeros(6, 5);
        assert!(matches!(downsample(&x, 2), Err(Error::Dimension(_))));
    }

    #[test]
    fn downsample_adjoint_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let op = Downsample::new(2).unwrap();
        for _ in 0..20 {
            let x = Image::random_normal(8, 8, &mut rng);
            let y = Image::random_normal(4, 4, &mut rng);
            let lhs = op.apply(&x).dot(&y);
            let rhs = x.dot(&op.adjoint(&y));
            assert!((lhs - rhs).abs() <= 1e-12);
        }
    }

    #[test]
    fn pair_rotation_is_an_isometry() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Image::random_normal(4, 4, &mut rng);
        let y = PairRotation.apply(&x);
        assert!((y.norm() - x.norm()).abs() < 1e-12);
        assert!(PairRotation.apply(&y).lincomb(1.0, &x, 1.0).norm() < 1e-12);
        let odd = Image::new(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(PairRotation.apply(&odd).data(), &[-2.0, 1.0, 0.0]);
    }
}
