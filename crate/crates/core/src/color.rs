//! sRGB → CIELAB under D65.

use crate::error::{Error, Result};
use crate::image::ImageRgb;

const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

/// Per-pixel `[L, a, b]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct LabImage {
    width: usize,
    height: usize,
    data: Vec<[f64; 3]>,
}

impl LabImage {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.data[y * self.width + x]
    }
}

fn linearize(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

fn xyz(lin: [f64; 3]) -> [f64; 3] {
    SRGB_TO_XYZ.map(|row| row[0] * lin[0] + row[1] * lin[1] + row[2] * lin[2])
}

/// Converts one sRGB triple in `[0, 1]`.
///
/// The reference white is the matrix image of sRGB white, so `(1, 1, 1)`
/// lands exactly on `L = 100, a = b = 0`.
pub fn srgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let white = xyz([1.0; 3]);
    let v = xyz(rgb.map(linearize));
    let [fx, fy, fz] = [0, 1, 2].map(|i| lab_f(v[i] / white[i]));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

pub fn rgb_to_lab(image: &ImageRgb) -> Result<LabImage> {
    if !image.in_unit_range() {
        return Err(Error::InvalidInput("RGB values must lie in [0, 1]".into()));
    }
    let data = image
        .data()
        .chunks_exact(3)
        .map(|p| srgb_to_lab([p[0], p[1], p[2]]))
        .collect();
    Ok(LabImage {
        width: image.width(),
        height: image.height(),
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn black_and_white() {
        assert_eq!(srgb_to_lab([0.0; 3]), [0.0, 0.0, 0.0]);
        let w = srgb_to_lab([1.0; 3]);
        assert_eq!(w[0], 100.0);
        assert!(w[1].abs() < 0.01 && w[2].abs() < 0.01);
    }

    #[test]
    fn neutral_axis_has_no_chroma() {
        for g in [0.02, 0.25, 0.5, 0.75] {
            let [l, a, b] = srgb_to_lab([g; 3]);
            assert!(a.abs() < 0.01 && b.abs() < 0.01, "gray {g}: {a} {b}");
            assert!(l > 0.0 && l < 100.0);
        }
    }

    // Published D65 CIELAB coordinates of the sRGB primaries and mid gray.
    #[test]
    fn matches_reference_colorimetry() {
        let cases = [
            ([1.0, 0.0, 0.0], [53.2408, 80.0925, 67.2032]),
            ([0.0, 1.0, 0.0], [87.7347, -86.1827, 83.1793]),
            ([0.0, 0.0, 1.0], [32.2970, 79.1875, -107.8602]),
            ([0.5, 0.5, 0.5], [53.3890, 0.0, 0.0]),
        ];
        for (rgb, lab) in cases {
            let got = srgb_to_lab(rgb);
            for i in 0..3 {
                assert!((got[i] - lab[i]).abs() < 0.02, "{rgb:?}: {got:?} vs {lab:?}");
            }
        }
    }

    #[test]
    fn out_of_range_rejected() {
        let img = ImageRgb::new(1, 1, vec![0.5, 1.2, 0.0]).unwrap();
        assert!(matches!(rgb_to_lab(&img), Err(Error::InvalidInput(_))));
    }
}
