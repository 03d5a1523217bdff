//! Grayscale images and small convolution kernels.

use std::ops::{Add, Mul, Neg, Sub};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// A 2-D grayscale field stored row-major in double precision.
///
/// Nominal range is `[0, 1]`, but solver iterates are allowed to leave it.
/// Every constructor rejects non-finite data.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::dim(format!("image must be non-empty, got {height}x{width}")));
        }
        if data.len() != height * width {
            return Err(Error::dim(format!(
                "data length {} does not match {height}x{width}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite pixel at index {i}")));
        }
        Ok(Self { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::constant(height, width, 0.0)
    }

    pub fn constant(height: usize, width: usize, value: f64) -> Self {
        assert!(height > 0 && width > 0, "image must be non-empty");
        assert!(value.is_finite());
        Self { height, width, data: vec![value; height * width] }
    }

    /// Builds an image from `f(row, col)`.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(height > 0 && width > 0, "image must be non-empty");
        let mut data = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                data.push(f(i, j));
            }
        }
        assert!(data.iter().all(|v| v.is_finite()), "from_fn produced a non-finite pixel");
        Self { height, width, data }
    }

    /// Standard normal entries.
    pub fn random_normal<R: Rng + ?Sized>(height: usize, width: usize, rng: &mut R) -> Self {
        Self::from_fn(height, width, |_, _| rng.sample(StandardNormal))
    }

    pub fn random_uniform<R: Rng + ?Sized>(height: usize, width: usize, rng: &mut R) -> Self {
        Self::from_fn(height, width, |_, _| rng.random::<f64>())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    /// Reuses this image's shape for a new buffer of the same length.
    ///
    /// Panics when the length differs or an entry is non-finite.
    pub fn with_data(&self, data: Vec<f64>) -> Image {
        assert_eq!(data.len(), self.data.len(), "buffer length mismatch");
        assert!(data.iter().all(|v| v.is_finite()), "non-finite pixel");
        Image { height: self.height, width: self.width, data }
    }

    /// Like [`Image::with_data`] but reports non-finite entries instead of panicking.
    pub fn try_with_data(&self, data: Vec<f64>) -> Result<Image> {
        Image::new(self.height, self.width, data)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        self.with_data(self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Image, f: impl Fn(f64, f64) -> f64) -> Image {
        self.assert_same_shape(other);
        self.with_data(self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect())
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.shape() == other.shape()
    }

    pub fn check_same_shape(&self, other: &Image) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::dim(format!(
                "shape mismatch: {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )))
        }
    }

    fn assert_same_shape(&self, other: &Image) {
        assert!(
            self.same_shape(other),
            "shape mismatch: {:?} vs {:?}",
            self.shape(),
            other.shape()
        );
    }

    pub fn dot(&self, other: &Image) -> f64 {
        self.assert_same_shape(other);
        dot(&self.data, &other.data)
    }

    pub fn norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn norm_sq(&self) -> f64 {
        dot(&self.data, &self.data)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn max_abs_diff(&self, other: &Image) -> f64 {
        self.assert_same_shape(other);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn scale(&self, s: f64) -> Image {
        self.map(|v| v * s)
    }

    /// `a * self + b * other`
    pub fn lincomb(&self, a: f64, other: &Image, b: f64) -> Image {
        self.zip_map(other, |x, y| a * x + b * y)
    }

    pub fn clamp(&self, lo: f64, hi: f64) -> Image {
        self.map(|v| v.clamp(lo, hi))
    }

    pub fn transpose(&self) -> Image {
        Image::from_fn(self.width, self.height, |i, j| self.get(j, i))
    }
}

impl Add for &Image {
    type Output = Image;
    fn add(self, rhs: &Image) -> Image {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub for &Image {
    type Output = Image;
    fn sub(self, rhs: &Image) -> Image {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl Mul<f64> for &Image {
    type Output = Image;
    fn mul(self, rhs: f64) -> Image {
        self.scale(rhs)
    }
}

impl Neg for &Image {
    type Output = Image;
    fn neg(self) -> Image {
        self.scale(-1.0)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Small 2-D convolution kernel, anchored at its centre tap `(rows/2, cols/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    rows: usize,
    cols: usize,
    taps: Vec<f64>,
    normalized: bool,
}

impl Kernel {
    pub fn new(rows: usize, cols: usize, taps: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::dim("kernel must be non-empty"));
        }
        if taps.len() != rows * cols {
            return Err(Error::dim(format!(
                "kernel has {} taps, expected {rows}x{cols}",
                taps.len()
            )));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::Domain("non-finite kernel tap".into()));
        }
        let normalized = (taps.iter().sum::<f64>() - 1.0).abs() <= 1e-12;
        Ok(Self { rows, cols, taps, normalized })
    }

    /// Scales the taps to sum to one.
    pub fn normalized(rows: usize, cols: usize, taps: Vec<f64>) -> Result<Self> {
        let sum: f64 = taps.iter().sum();
        if sum.abs() < f64::EPSILON {
            return Err(Error::param("kernel taps sum to zero, cannot normalize"));
        }
        let mut k = Self::new(rows, cols, taps.into_iter().map(|t| t / sum).collect())?;
        k.normalized = true;
        Ok(k)
    }

    pub fn delta() -> Self {
        Self { rows: 1, cols: 1, taps: vec![1.0], normalized: true }
    }

    /// Outer product `col ⊗ row`.
    pub fn separable(col: &[f64], row: &[f64]) -> Result<Self> {
        let taps = col.iter().flat_map(|c| row.iter().map(move |r| c * r)).collect();
        Self::new(col.len(), row.len(), taps)
    }

    /// The binomial `[1 2 1]/4 ⊗ [1 2 1]/4` kernel.
    pub fn binomial3() -> Self {
        let b = [0.25, 0.5, 0.25];
        Self::separable(&b, &b).expect("static kernel")
    }

    /// Sampled Gaussian of the given size and standard deviation, normalized.
    pub fn gaussian(size: usize, std_dev: f64) -> Result<Self> {
        if size.is_multiple_of(2) {
            return Err(Error::param("gaussian kernel size must be odd"));
        }
        if std_dev <= 0.0 {
            return Err(Error::param("gaussian std_dev must be positive"));
        }
        let c = (size / 2) as f64;
        let taps = (0..size * size)
            .map(|i| {
                let (r, q) = ((i / size) as f64 - c, (i % size) as f64 - c);
                (-(r * r + q * q) / (2.0 * std_dev * std_dev)).exp()
            })
            .collect();
        Self::normalized(size, size, taps)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn tap(&self, r: usize, c: usize) -> f64 {
        self.taps[r * self.cols + c]
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn center(&self) -> (usize, usize) {
        (self.rows / 2, self.cols / 2)
    }

    /// Point symmetry about the centre tap, `k(i, j) = k(-i, -j)`.
    pub fn is_symmetric(&self) -> bool {
        if self.rows.is_multiple_of(2) || self.cols.is_multiple_of(2) {
            return false;
        }
        (0..self.rows).all(|r| {
            (0..self.cols).all(|c| {
                let (rr, cc) = (self.rows - 1 - r, self.cols - 1 - c);
                (self.tap(r, c) - self.tap(rr, cc)).abs() <= 1e-14
            })
        })
    }

    /// Flipped kernel, i.e. the adjoint of convolution with `self`.
    pub fn flipped(&self) -> Kernel {
        let taps = (0..self.rows * self.cols).rev().map(|i| self.taps[i]).collect();
        Kernel { rows: self.rows, cols: self.cols, taps, normalized: self.normalized }
    }
}
