//! Procedural stand-in for a photo-score dataset. Class signal lives in
//! three rendered attributes that a 1x1-convolution network can read from
//! per-pixel colour: a brightness band, a saturation level and the presence
//! of high-contrast stripes. A hue and a bright "subject" disc vary freely.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset, Provenance, RgbImage, Sample, INPUT_SIZE};
use crate::score::{ScoreClass, NUM_CLASSES};

/// Class proportions for scores 2..=9: class 4 carries 45% and classes 3–5
/// together 87%.
pub const DEFAULT_PROPORTIONS: [f64; NUM_CLASSES] = [0.02, 0.20, 0.45, 0.22, 0.05, 0.03, 0.02, 0.01];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub count: usize,
    /// Proportions for scores 2..=9.
    pub proportions: [f64; NUM_CLASSES],
    pub seed: u64,
    pub image_size: usize,
    /// Brightness band centre of class index 0 and the spacing between bands.
    pub brightness_base: f64,
    pub brightness_step: f64,
    /// Half-width of the uniform jitter on brightness.
    pub brightness_noise: f64,
    pub saturation_noise: f64,
    pub stripe_contrast: f64,
    /// Per-pixel luma noise half-width.
    pub pixel_noise: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            count: 2000,
            proportions: DEFAULT_PROPORTIONS,
            seed: 0,
            image_size: INPUT_SIZE,
            brightness_base: 50.0,
            brightness_step: 22.0,
            brightness_noise: 16.0,
            saturation_noise: 0.1,
            stripe_contrast: 0.3,
            pixel_noise: 6.0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::BadSpec(m));
        if self.proportions.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return bad("proportions must be finite and non-negative".into());
        }
        let sum: f64 = self.proportions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return bad(format!("proportions sum to {sum}, expected 1"));
        }
        if self.image_size == 0 {
            return bad("image_size must be positive".into());
        }
        Ok(())
    }

    /// Exact per-class counts: every class other than the remainder class
    /// gets `round(p * count)`, the remainder class (class 4 when it has
    /// positive mass, otherwise the largest class) gets the rest.
    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let four = ScoreClass::new(4).expect("valid").index();
        let remainder_class = if self.proportions[four] > 0.0 {
            four
        } else {
            crate::measures::argmax(&self.proportions).unwrap_or(four)
        };
        let mut counts = [0usize; NUM_CLASSES];
        for (c, &p) in self.proportions.iter().enumerate() {
            if c != remainder_class {
                counts[c] = (p * self.count as f64).round() as usize;
            }
        }
        // Tiny totals can over-allocate; trim the largest other classes.
        while counts.iter().sum::<usize>() > self.count {
            let big = (0..NUM_CLASSES).filter(|&c| c != remainder_class).max_by_key(|&c| counts[c]).expect("classes");
            counts[big] -= 1;
        }
        counts[remainder_class] = self.count - counts.iter().sum::<usize>();
        counts
    }
}

/// Class-dependent attribute centres, before jitter.
fn class_attributes(spec: &SynthSpec, class_index: usize) -> (f64, f64, f64) {
    let brightness = spec.brightness_base + spec.brightness_step * class_index as f64;
    let saturation = 0.15 + 0.2 * (class_index / 2) as f64;
    let stripes = if class_index % 2 == 1 { spec.stripe_contrast } else { 0.0 };
    (brightness, saturation, stripes)
}

fn hsv_ratios(hue: f64, saturation: f64) -> [f64; 3] {
    let h = (hue.rem_euclid(360.0)) / 60.0;
    let c = saturation;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = 1.0 - c;
    [r + m, g + m, b + m]
}

fn render(spec: &SynthSpec, class_index: usize, rng: &mut ChaCha8Rng) -> RgbImage {
    let (b0, s0, stripe0) = class_attributes(spec, class_index);
    let brightness = b0 + rng.random_range(-1.0..=1.0) * spec.brightness_noise;
    let saturation = (s0 + rng.random_range(-1.0..=1.0) * spec.saturation_noise).clamp(0.0, 1.0);
    let stripes = if stripe0 > 0.0 { (stripe0 + rng.random_range(-0.05..=0.05)).max(0.0) } else { 0.0 };
    let hue = rng.random_range(0.0..360.0);
    let ratios = hsv_ratios(hue, saturation);

    let size = spec.image_size;
    let cx = rng.random_range(0.0..size as f64);
    let cy = rng.random_range(0.0..size as f64);
    let radius = rng.random_range(0.1..0.25) * size as f64;
    let boost = rng.random_range(15.0..35.0);

    let mut img = RgbImage::new(size, size);
    for y in 0..size {
        for x in 0..size {
            let mut v = brightness;
            if stripes > 0.0 {
                // Period-64 vertical stripes.
                v *= if (x / 32) % 2 == 0 { 1.0 + stripes } else { 1.0 - stripes };
            }
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            if dx * dx + dy * dy < radius * radius {
                v += boost;
            }
            if spec.pixel_noise > 0.0 {
                v += rng.random_range(-1.0..=1.0) * spec.pixel_noise;
            }
            let px = ratios.map(|r| (v * r).round().clamp(0.0, 255.0) as u8);
            img.set(x, y, px);
        }
    }
    img
}

/// Deterministic synthetic dataset. Sample ids are `syn00000`, ... in a
/// seeded random class order.
pub fn synth_dataset(spec: &SynthSpec) -> Result<Dataset, DataError> {
    spec.validate()?;
    let counts = spec.class_counts();
    let mut labels: Vec<usize> = counts.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(c, n)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    use rand::seq::SliceRandom;
    labels.shuffle(&mut rng);

    let samples = labels
        .into_iter()
        .enumerate()
        .map(|(i, c)| Sample {
            id: format!("syn{i:05}"),
            label: ScoreClass::from_index(c).expect("class index"),
            image: Arc::new(render(spec, c, &mut rng)),
            path: None,
        })
        .collect();
    Ok(Dataset::new(samples, Provenance::Synthetic))
}
