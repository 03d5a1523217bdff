//! Deterministic synthetic test images in `[0, 1]`.

use crate::image::Image;

/// Diagonal ramp from 0 at the top-left to 1 at the bottom-right.
pub fn gradient(height: usize, width: usize) -> Image {
    let denom = (height + width).saturating_sub(2).max(1) as f64;
    Image::from_fn(height, width, |i, j| (i + j) as f64 / denom)
}

/// Alternating 0.2 / 0.8 squares of side `cell`.
pub fn checkerboard(height: usize, width: usize, cell: usize) -> Image {
    let cell = cell.max(1);
    Image::from_fn(height, width, |i, j| if (i / cell + j / cell).is_multiple_of(2) { 0.2 } else { 0.8 })
}

/// Bright disk with a darker inner disk on a 0.1 background.
pub fn disk_phantom(height: usize, width: usize) -> Image {
    let (ci, cj) = ((height as f64 - 1.0) / 2.0, (width as f64 - 1.0) / 2.0);
    let r = 0.4 * height.min(width) as f64;
    Image::from_fn(height, width, |i, j| {
        let d = ((i as f64 - ci).powi(2) + (j as f64 - cj).powi(2)).sqrt();
        if d <= 0.45 * r {
            0.5
        } else if d <= r {
            0.9
        } else {
            0.1
        }
    })
}

/// The three probe images used for certification and benchmarks.
pub fn probe_set(size: usize) -> Vec<(&'static str, Image)> {
    vec![
        ("gradient", gradient(size, size)),
        ("checkerboard", checkerboard(size, size, (size / 4).max(1))),
        ("disk", disk_phantom(size, size)),
    ]
}

pub fn by_name(name: &str, height: usize, width: usize) -> Option<Image> {
    match name {
        "gradient" => Some(gradient(height, width)),
        "checkerboard" => Some(checkerboard(height, width, (height.min(width) / 8).max(1))),
        "disk" => Some(disk_phantom(height, width)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phantoms_stay_in_unit_range() {
        for (_, img) in probe_set(16) {
            assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
        assert_eq!(gradient(3, 3).get(2, 2), 1.0);
        assert_eq!(checkerboard(4, 4, 2).get(0, 2), 0.8);
        assert!(by_name("lena", 4, 4).is_none());
    }
}
