//! Procedural stand-in dataset: flat-colored geometric objects of one class
//! on smooth value-noise backgrounds, with exact foreground masks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::image::{ImageRgb, Mask};
use crate::nn::LabeledImage;

pub const MIN_SIZE: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Circle,
    Triangle,
    Rectangle,
    Cross,
}

impl Shape {
    pub const ALL: [Shape; 4] = [Shape::Circle, Shape::Triangle, Shape::Rectangle, Shape::Cross];

    pub fn name(self) -> &'static str {
        match self {
            Shape::Circle => "circle",
            Shape::Triangle => "triangle",
            Shape::Rectangle => "rectangle",
            Shape::Cross => "cross",
        }
    }
}

pub fn class_names(classes: usize) -> Vec<String> {
    Shape::ALL[..classes.min(Shape::ALL.len())].iter().map(|s| s.name().to_string()).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSample {
    pub image: ImageRgb,
    pub label: usize,
    pub mask: Mask,
}

impl SyntheticSample {
    pub fn labeled(&self) -> LabeledImage {
        LabeledImage {
            image: self.image.clone(),
            label: self.label,
        }
    }
}

/// `n` square `size`×`size` samples over the first `classes` shapes.
///
/// Labels are dealt round-robin then shuffled, so class counts differ by at
/// most one. Sample `i` draws from its own ChaCha stream, making the output
/// a pure function of `(n, classes, size, seed)`.
pub fn generate_dataset(n: usize, classes: usize, size: usize, seed: u64, exec: Execution) -> Result<Vec<SyntheticSample>> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if classes == 0 || classes > Shape::ALL.len() {
        return Err(Error::InvalidInput(format!(
            "classes must be in 1..={}, got {classes}",
            Shape::ALL.len()
        )));
    }
    if size < MIN_SIZE {
        return Err(Error::InvalidInput(format!(
            "image size {size} is too small to place objects (minimum {MIN_SIZE})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    labels.shuffle(&mut rng);
    Ok(exec.map_range(n, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64 + 1);
        render(Shape::ALL[labels[i]], labels[i], size, &mut rng)
    }))
}

fn hsv(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let c = v * s;
    let x = c * (1.0 - (h6 % 2.0 - 1.0).abs());
    let (r, g, b) = match h6 as usize {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

/// Smoothstep-interpolated lattice noise in `[0, 1]`.
struct ValueNoise {
    cell: f64,
    cols: usize,
    lattice: Vec<f64>,
}

impl ValueNoise {
    fn new(size: usize, cell: f64, rng: &mut impl Rng) -> Self {
        let cols = (size as f64 / cell).ceil() as usize + 2;
        Self {
            cell,
            cols,
            lattice: (0..cols * cols).map(|_| rng.random()).collect(),
        }
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        let (gx, gy) = (x / self.cell, y / self.cell);
        let (ix, iy) = (gx as usize, gy as usize);
        let s = |t: f64| t * t * (3.0 - 2.0 * t);
        let (tx, ty) = (s(gx - ix as f64), s(gy - iy as f64));
        let v = |i: usize, j: usize| self.lattice[j * self.cols + i];
        let top = v(ix, iy) * (1.0 - tx) + v(ix + 1, iy) * tx;
        let bottom = v(ix, iy + 1) * (1.0 - tx) + v(ix + 1, iy + 1) * tx;
        top * (1.0 - ty) + bottom * ty
    }
}

#[derive(Clone, Copy, Debug)]
struct Placement {
    cx: f64,
    cy: f64,
    r: f64,
    /// Rectangle aspect, or the triangle's orientation in quarter turns.
    variant: f64,
}

fn inside(shape: Shape, p: &Placement, x: f64, y: f64) -> bool {
    let (dx, dy) = (x - p.cx, y - p.cy);
    let r = p.r;
    match shape {
        Shape::Circle => dx * dx + dy * dy <= r * r,
        Shape::Rectangle => {
            let (hw, hh) = if p.variant >= 0.0 { (r, r * p.variant) } else { (-r * p.variant, r) };
            dx.abs() <= hw && dy.abs() <= hh
        }
        Shape::Cross => {
            let t = 0.34 * r;
            (dx.abs() <= r && dy.abs() <= t) || (dy.abs() <= r && dx.abs() <= t)
        }
        Shape::Triangle => {
            let (u, v) = match p.variant as i32 {
                0 => (dx, dy),
                1 => (dy, -dx),
                2 => (-dx, -dy),
                _ => (-dy, dx),
            };
            // Apex at v = -r, base on v = +r spanning u in [-r, r].
            v <= r && u.abs() <= (v + r) * 0.5
        }
    }
}

fn render(shape: Shape, label: usize, size: usize, rng: &mut ChaCha8Rng) -> SyntheticSample {
    let sz = size as f64;
    let coarse = ValueNoise::new(size, sz / 4.0, rng);
    let fine = ValueNoise::new(size, sz / 10.0, rng);
    let tint = ValueNoise::new(size, sz / 3.0, rng);
    let base_hue: f64 = rng.random();
    let base_sat = rng.random_range(0.05..0.3);
    let base_val = rng.random_range(0.25..0.5);

    let count = rng.random_range(1..=3usize);
    let (lo, hi) = if count == 1 { (0.16, 0.26) } else { (0.11, 0.18) };
    let mut placed: Vec<Placement> = Vec::new();
    for _ in 0..count {
        for _attempt in 0..50 {
            let r = (rng.random_range(lo..hi) * sz).max(5.0);
            let margin = r + 1.0;
            let cx = rng.random_range(margin..sz - margin);
            let cy = rng.random_range(margin..sz - margin);
            let variant = match shape {
                Shape::Rectangle => {
                    let a = rng.random_range(0.45..0.85);
                    if rng.random_bool(0.5) { a } else { -a }
                }
                Shape::Triangle => f64::from(rng.random_range(0..4u8)),
                _ => 0.0,
            };
            let clear = placed
                .iter()
                .all(|q| (q.cx - cx).abs() > q.r + r + 2.0 || (q.cy - cy).abs() > q.r + r + 2.0);
            if clear {
                placed.push(Placement { cx, cy, r, variant });
                break;
            }
        }
    }
    let colors: Vec<[f64; 3]> = placed
        .iter()
        .map(|_| hsv(rng.random(), rng.random_range(0.55..1.0), rng.random_range(0.75..1.0)))
        .collect();

    let mut image = ImageRgb::filled(size, size, [0.0; 3]);
    let mut mask = vec![false; size * size];
    for y in 0..size {
        for x in 0..size {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let hit = placed.iter().position(|p| inside(shape, p, px, py));
            let rgb = match hit {
                Some(i) => {
                    mask[y * size + x] = true;
                    colors[i]
                }
                None => {
                    let v = base_val + 0.35 * (coarse.at(px, py) - 0.5) + 0.15 * (fine.at(px, py) - 0.5);
                    let h = base_hue + 0.15 * (tint.at(px, py) - 0.5);
                    hsv(h, base_sat, v.clamp(0.02, 0.98))
                }
            };
            image.set_pixel(x, y, rgb.map(|c| c.clamp(0.0, 1.0)));
        }
    }
    SyntheticSample {
        image,
        label,
        mask: Mask::new(size, size, mask).expect("square mask"),
    }
}
