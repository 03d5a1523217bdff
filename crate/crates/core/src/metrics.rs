//! Image quality metrics on `[0, 1]`-scaled images.

use crate::error::Result;
use crate::image::Image;

/// Returned by [`psnr`] when the two images are identical.
pub const PSNR_CAP_DB: f64 = 99.0;

/// SSIM stabilizers for a unit dynamic range.
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;
/// Side of the uniform SSIM window (shrunk to the image side for tiny images).
pub const SSIM_WINDOW: usize = 8;

pub fn mse(x: &Image, reference: &Image) -> Result<f64> {
    x.check_same_shape(reference)?;
    let sum: f64 = x.data().iter().zip(reference.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / x.len() as f64)
}

/// Peak signal-to-noise ratio with peak 1, capped at [`PSNR_CAP_DB`].
pub fn psnr(x: &Image, reference: &Image) -> Result<f64> {
    let mse = mse(x, reference)?;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB))
}

/// Mean structural similarity over every fully-contained uniform window.
pub fn ssim(x: &Image, reference: &Image) -> Result<f64> {
    x.check_same_shape(reference)?;
    let wh = SSIM_WINDOW.min(x.height());
    let ww = SSIM_WINDOW.min(x.width());
    let n = (wh * ww) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for top in 0..=x.height() - wh {
        for left in 0..=x.width() - ww {
            let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in top..top + wh {
                for j in left..left + ww {
                    let a = x.get(i, j);
                    let b = reference.get(i, j);
                    sx += a;
                    sy += b;
                    sxx += a * a;
                    syy += b * b;
                    sxy += a * b;
                }
            }
            let (mx, my) = (sx / n, sy / n);
            let vx = (sxx / n - mx * mx).max(0.0);
            let vy = (syy / n - my * my).max(0.0);
            let cov = sxy / n - mx * my;
            let num = (2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2);
            let den = (mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2);
            total += num / den;
            count += 1;
        }
    }
    Ok((total / count as f64).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_images() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Image::random_uniform(12, 10, &mut rng);
        assert_eq!(psnr(&x, &x).unwrap(), PSNR_CAP_DB);
        assert!((ssim(&x, &x).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_offset_gives_twenty_db() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = Image::random_uniform(16, 16, &mut rng).scale(0.8);
        let x = r.map(|v| v + 0.1);
        assert!((psnr(&x, &r).unwrap() - 20.0).abs() <= 1e-9);
    }

    #[test]
    fn psnr_matches_direct_mse() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r = Image::random_uniform(9, 11, &mut rng);
        let x = Image::random_uniform(9, 11, &mut rng);
        let mut acc = 0.0;
        for i in 0..9 {
            for j in 0..11 {
                acc += (x.get(i, j) - r.get(i, j)).powi(2);
            }
        }
        let direct = -10.0 * (acc / 99.0).log10();
        assert!((psnr(&x, &r).unwrap() - direct).abs() <= 1e-9);
    }

    #[test]
    fn mismatched_shapes_error() {
        assert!(psnr(&Image::zeros(2, 2), &Image::zeros(2, 3)).is_err());
        assert!(ssim(&Image::zeros(2, 2), &Image::zeros(3, 2)).is_err());
    }

    #[test]
    fn ssim_stays_in_range_and_drops_with_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = Image::from_fn(16, 16, |i, j| ((i / 4 + j / 4) % 2) as f64);
        let noise = Image::random_normal(16, 16, &mut rng).scale(0.2);
        let s = ssim(&(&r + &noise), &r).unwrap();
        assert!((-1.0..1.0).contains(&s));
        let inverted = r.map(|v| 1.0 - v);
        assert!(ssim(&inverted, &r).unwrap() < 0.0);
    }
}
