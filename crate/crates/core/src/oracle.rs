//! Brute-force ground truth for small instances: dense assembly, cyclic Jacobi
//! eigendecomposition, direct convolution and randomized lemma checks.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::denoisers::{
    make_antisymmetric_denoiser, make_dct_shrink_denoiser, make_gaussian_blur_denoiser, make_spc_denoiser, Denoiser,
    DenoiserHandle,
};
use crate::error::{Error, Result};
use crate::fidelity::{make_deblur_fidelity, Fidelity};
use crate::image::{Image, Kernel};
use crate::linop::{LinearOperator, OperatorHandle};
use crate::spectral::LinearMap;

/// Largest dimension [`assemble_dense`] accepts.
pub const MAX_DENSE_DIM: usize = 1024;

/// Relative off-diagonal mass at which the Jacobi sweeps stop.
pub const JACOBI_TOL: f64 = 1e-12;

const JACOBI_MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim(format!("{} entries for a {rows}x{cols} matrix", data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite matrix entry".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        Self::from_fn(n, n, |i, j| if i == j { values[i] } else { 0.0 })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn random_normal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        Self::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    /// Haar-like random orthogonal matrix from Gram-Schmidt on Gaussian columns.
    pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
        while cols.len() < n {
            let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            // two passes for numerical orthogonality
            for _ in 0..2 {
                for c in &cols {
                    let p: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
                    v.iter_mut().zip(c).for_each(|(a, b)| *a -= p * b);
                }
            }
            let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if nv > 1e-8 {
                cols.push(v.into_iter().map(|a| a / nv).collect());
            }
        }
        Self::from_fn(n, n, |i, j| cols[j][i])
    }

    /// `Q diag(values) Qᵀ` for a random orthogonal `Q`.
    pub fn random_symmetric_with_eigs<R: Rng + ?Sized>(values: &[f64], rng: &mut R) -> Self {
        let q = Self::random_orthogonal(values.len(), rng);
        q.matmul(&Self::diag(values)).matmul(&q.transpose()).symmetric_part()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols);
        self.data.chunks_exact(self.cols).map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn tmatvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (row, &vi) in self.data.chunks_exact(self.cols).zip(v) {
            out.iter_mut().zip(row).for_each(|(o, a)| *o += a * vi);
        }
        out
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.rows);
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                let src = &other.data[k * other.cols..(k + 1) * other.cols];
                dst.iter_mut().zip(src).for_each(|(d, s)| *d += a * s);
            }
        }
        out
    }

    /// `a * self + b * other`
    pub fn lincomb(&self, a: f64, other: &DenseMatrix, b: f64) -> DenseMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(x, y)| a * x + b * y).collect();
        DenseMatrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn scale(&self, s: f64) -> DenseMatrix {
        DenseMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * s).collect() }
    }

    /// `self + c I`
    pub fn shift(&self, c: f64) -> DenseMatrix {
        assert_eq!(self.rows, self.cols);
        let mut out = self.clone();
        for i in 0..self.rows {
            out.data[i * self.cols + i] += c;
        }
        out
    }

    pub fn symmetric_part(&self) -> DenseMatrix {
        self.lincomb(0.5, &self.transpose(), 0.5)
    }

    pub fn max_asymmetry(&self) -> f64 {
        if self.rows != self.cols {
            return f64::INFINITY;
        }
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in i + 1..self.cols {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    /// Solves `self * X = rhs` by Gaussian elimination with partial pivoting.
    pub fn solve(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != self.cols || rhs.rows != self.rows {
            return Err(Error::dim("solve needs a square system with matching right-hand side"));
        }
        let n = self.rows;
        let m = rhs.cols;
        let mut a = self.clone();
        let mut b = rhs.clone();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&i, &j| a.get(i, col).abs().total_cmp(&a.get(j, col).abs()))
                .unwrap_or(col);
            if a.get(pivot, col).abs() < 1e-300 {
                return Err(Error::Domain("singular matrix".into()));
            }
            if pivot != col {
                for j in 0..n {
                    a.data.swap(col * n + j, pivot * n + j);
                }
                for j in 0..m {
                    b.data.swap(col * m + j, pivot * m + j);
                }
            }
            let p = a.get(col, col);
            for i in col + 1..n {
                let f = a.get(i, col) / p;
                if f == 0.0 {
                    continue;
                }
                for j in col..n {
                    let v = a.get(i, j) - f * a.get(col, j);
                    a.set(i, j, v);
                }
                for j in 0..m {
                    let v = b.get(i, j) - f * b.get(col, j);
                    b.set(i, j, v);
                }
            }
        }
        let mut x = DenseMatrix::zeros(n, m);
        for j in 0..m {
            for i in (0..n).rev() {
                let s: f64 = (i + 1..n).map(|k| a.get(i, k) * x.get(k, j)).sum();
                x.set(i, j, (b.get(i, j) - s) / a.get(i, i));
            }
        }
        Ok(x)
    }
}

impl LinearMap for DenseMatrix {
    fn dim(&self) -> usize {
        assert_eq!(self.rows, self.cols, "LinearMap needs a square matrix");
        self.rows
    }

    fn matvec(&self, v: &[f64]) -> Vec<f64> {
        DenseMatrix::matvec(self, v)
    }

    fn rmatvec(&self, v: &[f64]) -> Vec<f64> {
        self.tmatvec(v)
    }
}

/// A dense matrix acting on images of a fixed shape through their row-major
/// pixel vectors.
#[derive(Debug, Clone)]
pub struct MatrixOperator {
    matrix: DenseMatrix,
    shape: (usize, usize),
    norm: f64,
}

impl MatrixOperator {
    pub fn new(matrix: DenseMatrix, shape: (usize, usize)) -> Result<Self> {
        let d = shape.0 * shape.1;
        if matrix.rows != d || matrix.cols != d {
            return Err(Error::dim(format!(
                "{}x{} matrix cannot act on {}x{} images",
                matrix.rows, matrix.cols, shape.0, shape.1
            )));
        }
        let norm = dense_svd_norm(&matrix);
        Ok(Self { matrix, shape, norm })
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn into_handle(self) -> OperatorHandle {
        Arc::new(self)
    }
}

impl LinearOperator for MatrixOperator {
    fn apply(&self, x: &Image) -> Image {
        assert_eq!(x.shape(), self.shape, "matrix operator shape mismatch");
        x.with_data(self.matrix.matvec(x.data()))
    }

    fn adjoint(&self, y: &Image) -> Image {
        assert_eq!(y.shape(), self.shape, "matrix operator shape mismatch");
        y.with_data(self.matrix.tmatvec(y.data()))
    }

    fn norm_bound(&self) -> f64 {
        self.norm
    }
}

/// Column `j` is `op(e_j)`.
pub fn assemble_dense(op: impl Fn(&[f64]) -> Vec<f64>, d: usize) -> Result<DenseMatrix> {
    if d > MAX_DENSE_DIM {
        return Err(Error::SizeCap(format!("dimension {d} exceeds {MAX_DENSE_DIM}")));
    }
    let mut m = DenseMatrix::zeros(d, d);
    let mut e = vec![0.0; d];
    for j in 0..d {
        e[j] = 1.0;
        let col = op(&e);
        if col.len() != d {
            return Err(Error::dim(format!("operator returned {} entries, expected {d}", col.len())));
        }
        for (i, v) in col.into_iter().enumerate() {
            m.set(i, j, v);
        }
        e[j] = 0.0;
    }
    Ok(m)
}

/// Dense matrix of a linear image operator acting on `shape`.
pub fn assemble_operator(op: &dyn LinearOperator, shape: (usize, usize)) -> Result<DenseMatrix> {
    assemble_dense(
        |v| op.apply(&Image::new(shape.0, shape.1, v.to_vec()).expect("basis vector")).into_data(),
        shape.0 * shape.1,
    )
}

/// How to probe a denoiser's Jacobian column by column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JacobianProbe {
    /// The denoiser's own `jvp`.
    Jvp,
    /// Central differences of `apply` with step `h`.
    FiniteDifference(f64),
}

/// Dense Jacobian `J(x)` of a denoiser.
pub fn assemble_jacobian(d: &dyn Denoiser, x: &Image, sigma: f64, probe: JacobianProbe) -> Result<DenseMatrix> {
    let (h, w) = x.shape();
    assemble_dense(
        |v| {
            let v = Image::new(h, w, v.to_vec()).expect("basis vector");
            match probe {
                JacobianProbe::Jvp => d.jvp(x, sigma, &v),
                JacobianProbe::FiniteDifference(step) => {
                    crate::denoisers::finite_difference_jvp(d, x, sigma, &v, step).expect("positive step")
                }
            }
            .into_data()
        },
        h * w,
    )
}

/// Eigenpairs of a symmetric matrix. `values` ascend; column `i` of `vectors`
/// belongs to `values[i]`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
    pub sweeps: usize,
    /// Off-diagonal Frobenius mass before and after the sweeps.
    pub initial_off_diagonal: f64,
    pub final_off_diagonal: f64,
}

fn off_diagonal(a: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[i * n + j] * a[i * n + j];
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi eigendecomposition.
pub fn jacobi_eigen(m: &DenseMatrix) -> Result<SymmetricEigen> {
    let asym = m.max_asymmetry();
    if asym > 1e-10 {
        return Err(Error::NotSymmetric(asym));
    }
    let n = m.rows;
    let mut a = m.symmetric_part().data;
    // rows of `vt` are the eigenvectors
    let mut vt = DenseMatrix::identity(n).data;
    let initial = off_diagonal(&a, n);
    let target = JACOBI_TOL * initial;
    let mut sweeps = 0;
    let mut off = initial;
    while off > target && off > 0.0 && sweeps < JACOBI_MAX_SWEEPS {
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let (app, aqq) = (a[p * n + p], a[q * n + q]);
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta == 0.0 { 1.0 } else { theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt()) };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let (akp, akq) = (a[k * n + p], a[k * n + q]);
                    let (np, nq) = (c * akp - s * akq, s * akp + c * akq);
                    a[k * n + p] = np;
                    a[p * n + k] = np;
                    a[k * n + q] = nq;
                    a[q * n + k] = nq;
                }
                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                let (rp, rq) = vt.split_at_mut(q * n);
                for (vp, vq) in rp[p * n..(p + 1) * n].iter_mut().zip(&mut rq[..n]) {
                    let (x, y) = (*vp, *vq);
                    *vp = c * x - s * y;
                    *vq = s * x + c * y;
                }
            }
        }
        off = off_diagonal(&a, n);
    }
    let a = DenseMatrix { rows: n, cols: n, data: a };
    let v = DenseMatrix { rows: n, cols: n, data: vt }.transpose();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(i, i).total_cmp(&a.get(j, j)));
    let values = order.iter().map(|&i| a.get(i, i)).collect();
    let vectors = DenseMatrix::from_fn(n, n, |r, c| v.get(r, order[c]));
    Ok(SymmetricEigen { values, vectors, sweeps, initial_off_diagonal: initial, final_off_diagonal: off })
}

/// Ascending eigenvalues of a symmetric matrix.
pub fn dense_sym_eigs(m: &DenseMatrix) -> Result<Vec<f64>> {
    Ok(jacobi_eigen(m)?.values)
}

/// Singular values, descending, by one-sided cyclic Jacobi: the rotations
/// that would diagonalize `MᵀM` are applied to the columns of `M` directly.
pub fn dense_singular_values(m: &DenseMatrix) -> Vec<f64> {
    let mut cols: Vec<Vec<f64>> = (0..m.cols).map(|j| m.column(j)).collect();
    let n = cols.len();
    // pairs whose coupling is negligible against the whole matrix are skipped
    let floor = 1e-30 * m.frobenius().powi(2);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (head, tail) = cols.split_at_mut(q);
                let (cp, cq) = (&mut head[p], &mut tail[0]);
                let alpha: f64 = cp.iter().map(|v| v * v).sum();
                let beta: f64 = cq.iter().map(|v| v * v).sum();
                let gamma: f64 = cp.iter().zip(cq.iter()).map(|(a, b)| a * b).sum();
                if gamma.abs() <= floor || gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = if zeta == 0.0 { 1.0 } else { zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt()) };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
                    let (a, b) = (*x, *y);
                    *x = c * a - s * b;
                    *y = s * a + c * b;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = cols.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Spectral norm, the largest singular value.
pub fn dense_svd_norm(m: &DenseMatrix) -> f64 {
    dense_singular_values(m).first().copied().unwrap_or(0.0)
}

/// Top singular triple `(σ, u, v)` with `M v = σ u`.
pub fn dense_top_singular(m: &DenseMatrix) -> (f64, Vec<f64>, Vec<f64>) {
    let gram = m.transpose().matmul(m).symmetric_part();
    let eig = jacobi_eigen(&gram).expect("Gram matrix is symmetric");
    let last = m.cols - 1;
    let sigma = eig.values[last].max(0.0).sqrt();
    let v = eig.vectors.column(last);
    let mv = m.matvec(&v);
    let u = if sigma > 0.0 { mv.iter().map(|x| x / sigma).collect() } else { vec![0.0; m.rows] };
    (sigma, u, v)
}

/// `‖(S - 2I)⁻¹ S‖` by a dense solve and an SVD.
pub fn dense_pc_norm(s: &DenseMatrix) -> Result<f64> {
    let shifted = s.shift(-2.0);
    Ok(dense_svd_norm(&shifted.solve(s)?))
}

/// Smallest `k` with `‖Lv‖² <= ‖v‖² + k ‖(I - L)v‖²` for every `v`, for a
/// square linear map `L`. Found by bisection on the largest eigenvalue of
/// `LᵀL - I - k (I - L)ᵀ(I - L)`; may be negative for contractions.
/// Returns `f64::INFINITY` when no `k <= 1e6` works.
pub fn strict_pc_constant(l: &DenseMatrix) -> f64 {
    let n = l.rows;
    let excess = l.transpose().matmul(l).shift(-1.0);
    let r = DenseMatrix::identity(n).lincomb(1.0, l, -1.0);
    let rr = r.transpose().matmul(&r);
    let scale = 1.0 + excess.frobenius() + rr.frobenius();
    let feasible = |k: f64| {
        let m = excess.lincomb(1.0, &rr, -k).symmetric_part();
        dense_sym_eigs(&m).expect("symmetric").last().copied().unwrap_or(0.0) <= 1e-13 * scale
    };
    let mut hi = 1.0;
    while !feasible(hi) {
        hi *= 2.0;
        if hi > 1e6 {
            return f64::INFINITY;
        }
    }
    let mut lo = -1.0;
    while feasible(lo) {
        lo *= 2.0;
        if lo < -1e6 {
            return lo;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-14 * (1.0 + hi.abs()) {
            break;
        }
    }
    hi
}

/// Spatial-domain circular convolution, straight from the definition.
pub fn conv_circular_direct(x: &Image, k: &Kernel) -> Result<Image> {
    let (h, w) = x.shape();
    if k.rows() > h || k.cols() > w {
        return Err(Error::dim("kernel larger than image"));
    }
    let (cr, cc) = k.center();
    Ok(Image::from_fn(h, w, |i, j| {
        let mut acc = 0.0;
        for r in 0..k.rows() {
            for c in 0..k.cols() {
                let si = (i + h + cr - r) % h;
                let sj = (j + w + cc - c) % w;
                acc += k.tap(r, c) * x.get(si, sj);
            }
        }
        acc
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LemmaSuite {
    Lemma1,
    Lemma1_5,
    Lemma3,
    Lemma4,
    Lemma5,
    Lemma6,
}

impl LemmaSuite {
    pub const ALL: [LemmaSuite; 6] = [
        LemmaSuite::Lemma1,
        LemmaSuite::Lemma1_5,
        LemmaSuite::Lemma3,
        LemmaSuite::Lemma4,
        LemmaSuite::Lemma5,
        LemmaSuite::Lemma6,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LemmaSuite::Lemma1 => "lemma1",
            LemmaSuite::Lemma1_5 => "lemma1_5",
            LemmaSuite::Lemma3 => "lemma3",
            LemmaSuite::Lemma4 => "lemma4",
            LemmaSuite::Lemma5 => "lemma5",
            LemmaSuite::Lemma6 => "lemma6",
        }
    }
}

impl std::str::FromStr for LemmaSuite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LemmaSuite::ALL
            .into_iter()
            .find(|l| l.name() == s || l.name().replace('_', ".") == s)
            .ok_or_else(|| Error::Parse(format!("unknown lemma suite {s:?}")))
    }
}

/// Violation tolerance every lemma suite is held to.
pub const LEMMA_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LemmaCheck {
    pub name: String,
    pub max_violation: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LemmaReport {
    pub suite: LemmaSuite,
    pub trials: usize,
    pub seed: u64,
    /// Largest normalized violation across every check (<= 0 means none).
    pub max_violation: f64,
    pub passed: bool,
    pub checks: Vec<LemmaCheck>,
    /// Lemma 4 only: measured strict constant of the tight (k = 1/4, θ = 1/2) composite.
    pub tight_composite_constant: Option<f64>,
}

const PROBE_SHAPE: (usize, usize) = (4, 4);

fn random_pair(rng: &mut ChaCha8Rng) -> (Image, Image) {
    let scale = 10f64.powf(rng.random_range(-2.0..1.0));
    let x = Image::random_normal(PROBE_SHAPE.0, PROBE_SHAPE.1, rng).scale(scale);
    let y = Image::random_normal(PROBE_SHAPE.0, PROBE_SHAPE.1, rng).scale(scale);
    (x, y)
}

/// Random contraction with spectral norm `rho` in (0, 1].
fn random_nonexpansive(rng: &mut ChaCha8Rng, rho: f64) -> DenseMatrix {
    let d = PROBE_SHAPE.0 * PROBE_SHAPE.1;
    let m = DenseMatrix::random_normal(d, d, rng);
    let n = dense_svd_norm(&m);
    m.scale(rho / n)
}

/// 2x2 rotation blocks with independent random angles.
fn block_rotation(angles: &[f64]) -> DenseMatrix {
    let d = 2 * angles.len();
    let mut m = DenseMatrix::zeros(d, d);
    for (b, &a) in angles.iter().enumerate() {
        let (s, c) = a.sin_cos();
        let i = 2 * b;
        m.set(i, i, c);
        m.set(i, i + 1, -s);
        m.set(i + 1, i, s);
        m.set(i + 1, i + 1, c);
    }
    m
}

fn operator(m: DenseMatrix) -> OperatorHandle {
    MatrixOperator::new(m, PROBE_SHAPE).expect("probe shape").into_handle()
}

/// `(‖Δ D‖² - ‖Δ‖² - k ‖Δ(I - D)‖²) / ‖Δ‖²`
fn spc_violation(dx: &Image, dy: &Image, x: &Image, y: &Image, k: f64) -> f64 {
    let d = dx - dy;
    let b = x - y;
    let r = &b - &d;
    (d.norm_sq() - b.norm_sq() - k * r.norm_sq()) / b.norm_sq()
}

/// `-<Δ(I - T), Δ> / ‖Δ‖²`, positive when `I - T` fails to be monotone.
fn monotone_violation(tx: &Image, ty: &Image, x: &Image, y: &Image) -> f64 {
    let b = x - y;
    let r = &b - &(tx - ty);
    -r.dot(&b) / b.norm_sq()
}

struct Tracker(Vec<LemmaCheck>);

impl Tracker {
    fn record(&mut self, name: &str, v: f64) {
        match self.0.iter_mut().find(|c| c.name == name) {
            Some(c) => c.max_violation = c.max_violation.max(v),
            None => self.0.push(LemmaCheck { name: name.into(), max_violation: v }),
        }
    }
}

fn pc_denoiser_zoo(rng: &mut ChaCha8Rng) -> Vec<DenoiserHandle> {
    let k = rng.random_range(0.0..0.95);
    let scale = rng.random_range(0.3..1.0);
    let n = random_nonexpansive(rng, scale);
    vec![
        Arc::new(make_gaussian_blur_denoiser(Kernel::binomial3()).expect("binomial")),
        Arc::new(make_spc_denoiser(operator(n), k, PROBE_SHAPE).expect("contraction")),
        Arc::new(make_antisymmetric_denoiser(rng.random_range(0.0..3.0)).expect("c >= 0")),
        Arc::new(make_dct_shrink_denoiser(rng.random_range(0.0..0.5)).expect("t >= 0")),
    ]
}

/// Runs one lemma's inequality or identity on randomized instances of the
/// built-in constructions. Violations are reported, never raised.
pub fn verify_lemma(suite: LemmaSuite, trials: usize, seed: u64) -> Result<LemmaReport> {
    if trials == 0 {
        return Err(Error::param("trials must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tracker(Vec::new());
    let mut tight = None;
    let sigma = 25.0;

    match suite {
        LemmaSuite::Lemma1 => {
            for _ in 0..trials {
                let k = rng.random_range(0.0..0.95);
                let scale = rng.random_range(0.2..1.0);
                let n = random_nonexpansive(&mut rng, scale);
                let d = make_spc_denoiser(operator(n), k, PROBE_SHAPE)?;
                let (x, y) = random_pair(&mut rng);
                let (dx, dy) = (d.apply(&x, sigma), d.apply(&y, sigma));
                t.record("strict pseudo-contraction with claimed k", spc_violation(&dx, &dy, &x, &y, k));
                let nx = dx.lincomb(1.0 - k, &x, k);
                let ny = dy.lincomb(1.0 - k, &y, k);
                let b = &x - &y;
                t.record("reconstructed N is non-expansive", ((&nx - &ny).norm_sq() - b.norm_sq()) / b.norm_sq());
                let lip = (&dx - &dy).norm() / b.norm();
                t.record("Lipschitz bound (1+k)/(1-k)", lip - (1.0 + k) / (1.0 - k));
            }
        }
        LemmaSuite::Lemma1_5 => {
            for _ in 0..trials {
                for d in pc_denoiser_zoo(&mut rng) {
                    let (x, y) = random_pair(&mut rng);
                    let (dx, dy) = (d.apply(&x, sigma), d.apply(&y, sigma));
                    let mono = monotone_violation(&dx, &dy, &x, &y);
                    t.record("I - D is monotone", mono);
                    // the k = 1 inequality and monotonicity are the same statement
                    let pc = spc_violation(&dx, &dy, &x, &y, 1.0);
                    t.record("pseudo-contraction (k = 1) equals twice the monotonicity gap", (pc - 2.0 * mono).abs());
                }
            }
        }
        LemmaSuite::Lemma3 => {
            for _ in 0..trials {
                let a: f64 = rng.random_range(-5.0..5.0);
                let b: f64 = rng.random_range(-5.0..5.0);
                let (x, y) = random_pair(&mut rng);
                let scale = (a.abs() + b.abs()).powi(2) * (x.norm_sq() + y.norm_sq()) + 1e-300;
                let lhs = x.lincomb(a, &y, b).norm_sq();
                let rhs = a * (a + b) * x.norm_sq() + b * (a + b) * y.norm_sq() - a * b * (&x - &y).norm_sq();
                t.record("first identity", (lhs - rhs).abs() / scale);
                let lhs2 = a * b * (&x + &y).norm_sq();
                let rhs2 = a * (a + b) * x.norm_sq() + b * (a + b) * y.norm_sq() - x.lincomb(a, &y, -b).norm_sq();
                t.record("second identity", (lhs2 - rhs2).abs() / scale);
            }
        }
        LemmaSuite::Lemma4 => {
            let blocks = PROBE_SHAPE.0 * PROBE_SHAPE.1 / 2;
            for trial in 0..trials {
                let theta = rng.random_range(0.05..0.95);
                let k = rng.random_range(0.0..(1.0 - theta));
                let n = if trial % 2 == 0 {
                    block_rotation(&(0..blocks).map(|_| rng.random_range(-3.2..3.2)).collect::<Vec<_>>())
                } else {
                    let scale = rng.random_range(0.2..1.0);
                    random_nonexpansive(&mut rng, scale)
                };
                let np = random_nonexpansive(&mut rng, 1.0);
                let d_mat = n.scale(1.0 / (1.0 - k)).shift(-k / (1.0 - k));
                let p_mat = np.scale(theta).shift(1.0 - theta);
                let composite = d_mat.matmul(&p_mat);
                let l = k * (1.0 - theta) / ((1.0 - theta) - k * theta);
                if trial < 50 {
                    t.record("dense composite constant <= l", strict_pc_constant(&composite) - l);
                }
                let (x, y) = random_pair(&mut rng);
                let cx = x.with_data(composite.matvec(x.data()));
                let cy = y.with_data(composite.matvec(y.data()));
                t.record("sampled composite inequality with l", spc_violation(&cx, &cy, &x, &y, l));
                let lip = (&cx - &cy).norm() / (&x - &y).norm();
                t.record("composite Lipschitz bound (1+k)/(1-k)", lip - (1.0 + k) / (1.0 - k));
            }
            let measured = strict_pc_constant(&lemma4_tight_composite());
            t.record("tight composite constant <= 1/3", measured - 1.0 / 3.0);
            tight = Some(measured);
        }
        LemmaSuite::Lemma5 => {
            for _ in 0..trials {
                let mu = 10f64.powf(rng.random_range(-1.0..1.0));
                let f = Image::random_uniform(PROBE_SHAPE.0, PROBE_SHAPE.1, &mut rng);
                let g = make_deblur_fidelity(f, Kernel::binomial3(), mu)?;
                let gamma = g.cocoercivity().expect("quadratic fidelity is cocoercive");
                let theta = 1.0 / (2.0 * gamma + 2.0);
                let (x, y) = random_pair(&mut rng);
                let (gx, gy) = (g.grad(&x)?, g.grad(&y)?);
                let dg = &gx - &gy;
                let b = &x - &y;
                t.record("gradient is γ-cocoercive", (gamma * dg.norm_sq() - b.dot(&dg)) / b.norm_sq());
                let (px, py) = (g.prox(&x, 1.0)?, g.prox(&y, 1.0)?);
                let nx = x.lincomb(1.0 - 1.0 / theta, &px, 1.0 / theta);
                let ny = y.lincomb(1.0 - 1.0 / theta, &py, 1.0 / theta);
                t.record("prox is 1/(2γ+2)-averaged", ((&nx - &ny).norm_sq() - b.norm_sq()) / b.norm_sq());
            }
        }
        LemmaSuite::Lemma6 => {
            for _ in 0..trials {
                let mu = 10f64.powf(rng.random_range(-1.0..1.0));
                let f = Image::random_uniform(PROBE_SHAPE.0, PROBE_SHAPE.1, &mut rng);
                let g = make_deblur_fidelity(f, Kernel::binomial3(), mu)?;
                for d in pc_denoiser_zoo(&mut rng) {
                    let (x, y) = random_pair(&mut rng);
                    let tx = &d.apply(&x, sigma) - &g.grad(&x)?;
                    let ty = &d.apply(&y, sigma) - &g.grad(&y)?;
                    t.record("I - (D - ∇G) is monotone", monotone_violation(&tx, &ty, &x, &y));
                }
            }
        }
    }

    let max_violation = t.0.iter().map(|c| c.max_violation).fold(f64::NEG_INFINITY, f64::max);
    Ok(LemmaReport {
        suite,
        trials,
        seed,
        max_violation,
        passed: max_violation <= LEMMA_TOL,
        checks: t.0,
        tight_composite_constant: tight,
    })
}

/// `D ∘ P` with `D = (4/3) R(ψ) - (1/3) I` exactly 1/4-strictly
/// pseudo-contractive and `P = (I + R(φ)) / 2` exactly 1/2-averaged, on a
/// single 2-D block. At `(ψ, φ) = (-0.03, 0.02)` the composite constant is
/// within 1e-4 of the bound `l = 1/3`.
pub fn lemma4_tight_composite() -> DenseMatrix {
    let k = 0.25;
    let theta = 0.5;
    let d = block_rotation(&[-0.03]).scale(1.0 / (1.0 - k)).shift(-k / (1.0 - k));
    let p = block_rotation(&[0.02]).scale(theta).shift(1.0 - theta);
    d.matmul(&p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_on_diagonal_and_nilpotent() {
        let d = DenseMatrix::diag(&[3.0, 1.0]);
        assert_eq!(dense_sym_eigs(&d).unwrap(), vec![1.0, 3.0]);
        assert!((dense_svd_norm(&d) - 3.0).abs() < 1e-14);
        let nil = DenseMatrix::new(2, 2, vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        assert!((dense_svd_norm(&nil) - 1.0).abs() < 1e-14);
        assert!(matches!(dense_sym_eigs(&nil), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn identity_assembles_to_identity() {
        let m = assemble_dense(|v| v.to_vec(), 4).unwrap();
        assert_eq!(m, DenseMatrix::identity(4));
        assert!(matches!(assemble_dense(|v| v.to_vec(), MAX_DENSE_DIM + 1), Err(Error::SizeCap(_))));
    }

    #[test]
    fn solve_recovers_known_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = DenseMatrix::random_normal(6, 6, &mut rng).shift(4.0);
        let x = DenseMatrix::random_normal(6, 2, &mut rng);
        let b = a.matmul(&x);
        let got = a.solve(&b).unwrap();
        assert!(got.lincomb(1.0, &x, -1.0).frobenius() < 1e-12);
    }

    #[test]
    fn strict_pc_constant_of_scaled_identity() {
        // L = 11/15 I: (121/225 - 1) = k (16/225)  =>  k = -6.5
        let l = DenseMatrix::identity(3).scale(11.0 / 15.0);
        assert!((strict_pc_constant(&l) + 6.5).abs() < 1e-9);
        // L = 2N - I for a rotation N is exactly 1/2-strict
        let n = block_rotation(&[0.7, 2.0]);
        let l = n.scale(2.0).shift(-1.0);
        assert!((strict_pc_constant(&l) - 0.5).abs() < 1e-9);
        // 1.5 I: 1.25 = k * 0.25, so k = 5 > 1 (not pseudo-contractive)
        assert!((strict_pc_constant(&DenseMatrix::identity(2).scale(1.5)) - 5.0).abs() < 1e-9);
    }

    #[test]
    fn suite_names_parse() {
        for s in LemmaSuite::ALL {
            assert_eq!(s.name().parse::<LemmaSuite>().unwrap(), s);
        }
        assert!("lemma1.5".parse::<LemmaSuite>().is_ok());
        assert!("lemma2".parse::<LemmaSuite>().is_err());
        assert!(verify_lemma(LemmaSuite::Lemma3, 0, 1).is_err());
    }
}
