//! Orthonormal 2-D DCT-II by dense separable products. Images here are small,
//! so an `O(n^3)` transform is fine.

use crate::image::Image;

fn basis(n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    let nf = n as f64;
    for k in 0..n {
        let scale = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
        for i in 0..n {
            c[k * n + i] = scale * (std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2.0 * nf)).cos();
        }
    }
    c
}

/// `out = A * X` where `A` is `n x n` and `X` is `n x m`.
fn left(a: &[f64], x: &[f64], n: usize, m: usize, transpose_a: bool) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for r in 0..n {
        let row = &mut out[r * m..(r + 1) * m];
        for k in 0..n {
            let coeff = if transpose_a { a[k * n + r] } else { a[r * n + k] };
            if coeff == 0.0 {
                continue;
            }
            for (o, v) in row.iter_mut().zip(&x[k * m..(k + 1) * m]) {
                *o += coeff * v;
            }
        }
    }
    out
}

/// `out = X * B^T` (or `X * B` when `transpose_b` is false), `B` is `m x m`.
fn right(x: &[f64], b: &[f64], n: usize, m: usize, transpose_b: bool) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for r in 0..n {
        let xr = &x[r * m..(r + 1) * m];
        for c in 0..m {
            out[r * m + c] = (0..m)
                .map(|k| xr[k] * if transpose_b { b[c * m + k] } else { b[k * m + c] })
                .sum();
        }
    }
    out
}

pub fn dct2(x: &Image) -> Image {
    let (h, w) = x.shape();
    let (ch, cw) = (basis(h), basis(w));
    let t = left(&ch, x.data(), h, w, false);
    x.with_data(right(&t, &cw, h, w, true))
}

pub fn idct2(coeffs: &Image) -> Image {
    let (h, w) = coeffs.shape();
    let (ch, cw) = (basis(h), basis(w));
    let t = left(&ch, coeffs.data(), h, w, true);
    coeffs.with_data(right(&t, &cw, h, w, false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn orthonormal_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Image::random_normal(7, 12, &mut rng);
        let c = dct2(&x);
        assert!((c.norm() - x.norm()).abs() < 1e-12);
        assert!(idct2(&c).max_abs_diff(&x) < 1e-12);
    }

    #[test]
    fn constant_image_has_only_dc() {
        let c = dct2(&Image::constant(4, 4, 0.5));
        assert!((c.get(0, 0) - 2.0).abs() < 1e-12);
        assert!(c.data()[1..].iter().all(|v| v.abs() < 1e-12));
    }
}
