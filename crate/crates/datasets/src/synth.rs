//! Procedural glyph corpus: a self-contained 28x28 ten-class digit-like
//! dataset for runs where no external image files are available.
//!
//! Each class is a fixed set of strokes (polylines and elliptical arcs in a
//! normalized box). Every example renders those strokes under a random
//! rotation, isotropic scale, translation, and stroke thickness, with an
//! antialiased edge, giving grayscale images in [0, 1] that go through the
//! same binarization pipeline as file-loaded data. Generation is a pure
//! function of (split seed, example index).

use rdprobe_core::{derive_seed, Result, Rng, Tensor};

use crate::binarize::{binarize, BinarizeMode};
use crate::split::{DatasetSplit, SplitName};

pub const SYNTH_SIDE: usize = 28;
pub const SYNTH_DIM: usize = SYNTH_SIDE * SYNTH_SIDE;
pub const SYNTH_CLASSES: usize = 10;

// Pose jitter ranges. Translation dominates raw pixel covariance, which keeps
// principal components busy with nuisance structure the labels do not need.
const ROT_MAX: f64 = 0.26; // radians, about 15 degrees
const SCALE_LO: f64 = 0.85;
const SCALE_HI: f64 = 1.15;
const TRANSLATE: f64 = 2.0; // pixels, each axis
const THICK_LO: f64 = 0.8;
const THICK_HI: f64 = 1.3;
const DESIGN_RADIUS: f64 = 11.0; // pixel extent of the unit design box

type Stroke = Vec<(f64, f64)>;

fn arc(cx: f64, cy: f64, rx: f64, ry: f64, deg0: f64, deg1: f64, segments: usize) -> Stroke {
    (0..=segments)
        .map(|i| {
            let t = (deg0 + (deg1 - deg0) * i as f64 / segments as f64).to_radians();
            (cx + rx * t.cos(), cy + ry * t.sin())
        })
        .collect()
}

/// Strokes for one class, coordinates in [-1, 1] with y pointing up.
fn glyph_strokes(class: usize) -> Vec<Stroke> {
    match class {
        0 => vec![arc(0.0, 0.0, 0.55, 0.8, 0.0, 360.0, 24)],
        1 => vec![vec![(0.05, 0.85), (0.05, -0.85)], vec![(-0.3, 0.5), (0.05, 0.85)]],
        2 => {
            let mut top = arc(0.0, 0.45, 0.45, 0.4, 180.0, 0.0, 12);
            top.push((-0.5, -0.85));
            top.push((0.5, -0.85));
            vec![top]
        }
        3 => vec![
            arc(0.0, 0.42, 0.42, 0.42, 150.0, -90.0, 12),
            arc(0.0, -0.42, 0.45, 0.45, 90.0, -150.0, 12),
        ],
        4 => vec![
            vec![(-0.4, 0.85), (-0.55, -0.1), (0.5, -0.1)],
            vec![(0.25, 0.4), (0.25, -0.85)],
        ],
        5 => {
            let mut s = vec![(0.45, 0.85), (-0.45, 0.85), (-0.45, 0.1)];
            s.extend(arc(0.0, -0.35, 0.45, 0.45, 120.0, -120.0, 12));
            vec![s]
        }
        6 => vec![
            vec![(0.35, 0.85), (-0.05, 0.35), (-0.32, -0.1)],
            arc(0.0, -0.42, 0.42, 0.42, 0.0, 360.0, 20),
        ],
        7 => vec![vec![(-0.5, 0.85), (0.5, 0.85), (-0.1, -0.85)]],
        8 => vec![
            arc(0.0, 0.44, 0.38, 0.4, 0.0, 360.0, 20),
            arc(0.0, -0.42, 0.46, 0.44, 0.0, 360.0, 20),
        ],
        9 => vec![
            arc(0.0, 0.4, 0.4, 0.42, 0.0, 360.0, 20),
            vec![(0.4, 0.4), (0.3, -0.3), (0.05, -0.85)],
        ],
        _ => unreachable!("classes are 0..10"),
    }
}

fn dist_to_segment(px: f64, py: f64, a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 { (((px - a.0) * dx + (py - a.1) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    ((px - cx).powi(2) + (py - cy).powi(2)).sqrt()
}

/// Render one example into a SYNTH_DIM grayscale buffer.
fn render(class: usize, rng: &mut Rng, out: &mut [f32]) {
    out.fill(0.0);
    let theta = rng.uniform(-ROT_MAX, ROT_MAX);
    let scale = rng.uniform(SCALE_LO, SCALE_HI);
    let tx = rng.uniform(-TRANSLATE, TRANSLATE);
    let ty = rng.uniform(-TRANSLATE, TRANSLATE);
    let thick = rng.uniform(THICK_LO, THICK_HI);
    let (sin, cos) = theta.sin_cos();
    let s = DESIGN_RADIUS * scale;
    let c = (SYNTH_SIDE as f64 - 1.0) / 2.0;

    let to_px = |(x, y): (f64, f64)| -> (f64, f64) {
        let rx = x * cos - y * sin;
        let ry = x * sin + y * cos;
        // Image rows grow downward, so the y axis flips.
        (c + tx + s * rx, c + ty - s * ry)
    };

    let reach = thick + 1.0;
    for stroke in glyph_strokes(class) {
        let pts: Vec<(f64, f64)> = stroke.into_iter().map(to_px).collect();
        for seg in pts.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            let x_lo = ((a.0.min(b.0) - reach).floor().max(0.0)) as usize;
            let x_hi = ((a.0.max(b.0) + reach).ceil().min(SYNTH_SIDE as f64 - 1.0)) as usize;
            let y_lo = ((a.1.min(b.1) - reach).floor().max(0.0)) as usize;
            let y_hi = ((a.1.max(b.1) + reach).ceil().min(SYNTH_SIDE as f64 - 1.0)) as usize;
            for y in y_lo..=y_hi {
                for x in x_lo..=x_hi {
                    let d = dist_to_segment(x as f64, y as f64, a, b);
                    let v = ((thick + 0.6 - d) / 0.9).clamp(0.0, 1.0) as f32;
                    let cell = &mut out[y * SYNTH_SIDE + x];
                    if v > *cell {
                        *cell = v;
                    }
                }
            }
        }
    }
}

/// Grayscale corpus with ground-truth labels; classes cycle 0..10 so any
/// prefix subset stays balanced.
pub fn synth_grayscale(name: SplitName, n: usize, seed: u64) -> Result<DatasetSplit> {
    let mut data = vec![0.0f32; n * SYNTH_DIM];
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % SYNTH_CLASSES;
        let mut rng = Rng::new(derive_seed(seed, &format!("example{i}")));
        render(class, &mut rng, &mut data[i * SYNTH_DIM..(i + 1) * SYNTH_DIM]);
        labels.push(class);
    }
    DatasetSplit::new(name, Tensor::new(vec![n, SYNTH_DIM], data)?, Some(labels), SYNTH_CLASSES)
}

/// The binary corpus: grayscale rendering followed by the standard stochastic
/// binarization, all derived from one seed.
pub fn synth_binary(name: SplitName, n: usize, seed: u64) -> Result<DatasetSplit> {
    let gray = synth_grayscale(name, n, seed)?;
    binarize(&gray, BinarizeMode::Stochastic { seed: derive_seed(seed, "binarize") })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_in_seed() {
        let a = synth_binary(SplitName::Train, 30, 7).unwrap();
        let b = synth_binary(SplitName::Train, 30, 7).unwrap();
        assert_eq!(a.images().data(), b.images().data());
        let c = synth_binary(SplitName::Train, 30, 8).unwrap();
        assert_ne!(a.images().data(), c.images().data());
    }

    #[test]
    fn prefix_is_stable_and_balanced() {
        // Example i depends only on (seed, i), so a shorter split is a prefix.
        let long = synth_grayscale(SplitName::Train, 40, 5).unwrap();
        let short = synth_grayscale(SplitName::Train, 20, 5).unwrap();
        assert_eq!(
            &long.images().data()[..20 * SYNTH_DIM],
            short.images().data()
        );
        let labels = short.labels().unwrap();
        for k in 0..SYNTH_CLASSES {
            assert_eq!(labels.iter().filter(|&&l| l == k).count(), 2);
        }
    }

    #[test]
    fn images_have_ink_and_background() {
        let split = synth_grayscale(SplitName::Train, 20, 1).unwrap();
        let d = split.dim();
        for i in 0..20 {
            let row = &split.images().data()[i * d..(i + 1) * d];
            let ink = row.iter().filter(|&&v| v > 0.5).count();
            assert!(ink > 20, "example {i} has almost no ink ({ink} px)");
            assert!(ink < d / 2, "example {i} is mostly ink ({ink} px)");
        }
    }

    #[test]
    fn binary_split_is_binary() {
        let split = synth_binary(SplitName::Valid, 15, 2).unwrap();
        assert!(split.is_binary());
        assert_eq!(split.dim(), SYNTH_DIM);
    }
}
