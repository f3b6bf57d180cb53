//! First-fixation-perspective (FFP) and assessment-interest-region (AIR)
//! images: the source image masked by, respectively, the most activated
//! final-convolution feature map and the sum of all of them.

use thiserror::Error;

use crate::data::RgbImage;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SaliencyError {
    #[error("feature map stack is empty")]
    EmptyStack,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("feature maps must be finite and non-negative")]
    NegativeActivation,
}

/// A single-channel `height x width` map, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Map {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl Map {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self, SaliencyError> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(SaliencyError::DimensionMismatch(format!(
                "{} values for a {width}x{height} map",
                values.len()
            )));
        }
        Ok(Self { width, height, values })
    }

    pub fn filled(width: usize, height: usize, v: f64) -> Self {
        Self { width, height, values: vec![v; width * height] }
    }

    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// `P` post-ReLU feature maps of equal size.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMapStack {
    maps: Vec<Map>,
}

impl FeatureMapStack {
    pub fn new(maps: Vec<Map>) -> Result<Self, SaliencyError> {
        let first = maps.first().ok_or(SaliencyError::EmptyStack)?;
        let (w, h) = (first.width, first.height);
        if maps.iter().any(|m| m.width != w || m.height != h) {
            return Err(SaliencyError::DimensionMismatch("feature maps differ in size".into()));
        }
        if maps.iter().flat_map(|m| &m.values).any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(SaliencyError::NegativeActivation);
        }
        Ok(Self { maps })
    }

    /// Splits an interleaved `(y, x, channel)` activation tensor into one map
    /// per channel.
    pub fn from_interleaved(width: usize, height: usize, channels: usize, data: &[f64]) -> Result<Self, SaliencyError> {
        if data.len() != width * height * channels {
            return Err(SaliencyError::DimensionMismatch(format!(
                "{} activations for {width}x{height}x{channels}",
                data.len()
            )));
        }
        let maps = (0..channels)
            .map(|p| Map::new(width, height, data.iter().skip(p).step_by(channels).copied().collect()))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(maps)
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn maps(&self) -> &[Map] {
        &self.maps
    }
}

/// Index (0-based) and map with the largest total activation; ties go to the
/// lowest index.
pub fn most_activated_map(stack: &FeatureMapStack) -> Result<(usize, &Map), SaliencyError> {
    let totals: Vec<f64> = stack.maps.iter().map(Map::total).collect();
    let p = crate::measures::argmax(&totals).ok_or(SaliencyError::EmptyStack)?;
    Ok((p, &stack.maps[p]))
}

pub fn sum_maps(stack: &FeatureMapStack) -> Result<Map, SaliencyError> {
    let first = stack.maps.first().ok_or(SaliencyError::EmptyStack)?;
    let mut out = Map::filled(first.width, first.height, 0.0);
    for m in &stack.maps {
        for (o, v) in out.values.iter_mut().zip(&m.values) {
            *o += v;
        }
    }
    Ok(out)
}

/// Min-max scales to `[0, 1]` (a constant map becomes all zeros), then
/// resizes bilinearly with corners aligned.
pub fn normalize_resize(map: &Map, width: usize, height: usize) -> Map {
    let min = map.values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = map.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    let normalized: Vec<f64> =
        if range > 0.0 { map.values.iter().map(|v| (v - min) / range).collect() } else { vec![0.0; map.values.len()] };
    let src = Map { width: map.width, height: map.height, values: normalized };

    let scale = |dst: usize, src: usize| if dst > 1 { (src - 1) as f64 / (dst - 1) as f64 } else { 0.0 };
    let (sx, sy) = (scale(width, src.width), scale(height, src.height));
    let mut values = Vec::with_capacity(width * height);
    for y in 0..height {
        let fy = y as f64 * sy;
        let y0 = (fy.floor() as usize).min(src.height - 1);
        let y1 = (y0 + 1).min(src.height - 1);
        let ty = fy - y0 as f64;
        for x in 0..width {
            let fx = x as f64 * sx;
            let x0 = (fx.floor() as usize).min(src.width - 1);
            let x1 = (x0 + 1).min(src.width - 1);
            let tx = fx - x0 as f64;
            let top = src.at(x0, y0) * (1.0 - tx) + src.at(x1, y0) * tx;
            let bottom = src.at(x0, y1) * (1.0 - tx) + src.at(x1, y1) * tx;
            values.push((top * (1.0 - ty) + bottom * ty).clamp(0.0, 1.0));
        }
    }
    Map { width, height, values }
}

/// Multiplies every channel of `image` by a mask of the same size, rounding
/// to the nearest integer.
pub fn apply_mask(image: &RgbImage, mask: &Map) -> Result<RgbImage, SaliencyError> {
    if mask.width != image.width() || mask.height != image.height() {
        return Err(SaliencyError::DimensionMismatch(format!(
            "mask {}x{} vs image {}x{}",
            mask.width,
            mask.height,
            image.width(),
            image.height()
        )));
    }
    let mut out = image.clone();
    for (px, &m) in out.pixels_mut().chunks_exact_mut(3).zip(&mask.values) {
        for c in px {
            *c = (*c as f64 * m).round().clamp(0.0, 255.0) as u8;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyOutput {
    pub p_max: usize,
    pub ffp: RgbImage,
    pub air: RgbImage,
}

pub fn extract_ffp(image: &RgbImage, stack: &FeatureMapStack) -> Result<RgbImage, SaliencyError> {
    let (_, map) = most_activated_map(stack)?;
    apply_mask(image, &normalize_resize(map, image.width(), image.height()))
}

pub fn extract_air(image: &RgbImage, stack: &FeatureMapStack) -> Result<RgbImage, SaliencyError> {
    let sum = sum_maps(stack)?;
    apply_mask(image, &normalize_resize(&sum, image.width(), image.height()))
}

pub fn extract(image: &RgbImage, stack: &FeatureMapStack) -> Result<SaliencyOutput, SaliencyError> {
    let (p_max, _) = most_activated_map(stack)?;
    Ok(SaliencyOutput { p_max, ffp: extract_ffp(image, stack)?, air: extract_air(image, stack)? })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(w: usize, h: usize, v: &[f64]) -> Map {
        Map::new(w, h, v.to_vec()).unwrap()
    }

    #[test]
    fn most_activated_uses_total_energy() {
        let stack = FeatureMapStack::new(vec![map(1, 1, &[5.0]), map(1, 1, &[7.0]), map(1, 1, &[1.0])]).unwrap();
        assert_eq!(most_activated_map(&stack).unwrap().0, 1);

        let tie = FeatureMapStack::new(vec![map(2, 1, &[1.0, 2.0]), map(2, 1, &[2.0, 1.0])]).unwrap();
        assert_eq!(most_activated_map(&tie).unwrap().0, 0);

        let single = FeatureMapStack::new(vec![map(2, 1, &[3.0, 4.0])]).unwrap();
        let (p, m) = most_activated_map(&single).unwrap();
        assert_eq!((p, m), (0, &single.maps()[0]));
    }

    #[test]
    fn stack_validation() {
        assert_eq!(FeatureMapStack::new(vec![]), Err(SaliencyError::EmptyStack));
        assert_eq!(FeatureMapStack::new(vec![map(1, 1, &[-1.0])]), Err(SaliencyError::NegativeActivation));
        assert!(FeatureMapStack::new(vec![map(1, 1, &[1.0]), map(2, 1, &[1.0, 1.0])]).is_err());
    }

    #[test]
    fn interleaved_split() {
        let stack = FeatureMapStack::from_interleaved(2, 1, 2, &[1.0, 10.0, 2.0, 20.0]).unwrap();
        assert_eq!(stack.maps()[0].values, vec![1.0, 2.0]);
        assert_eq!(stack.maps()[1].values, vec![10.0, 20.0]);
    }

    #[test]
    fn sums() {
        let a = map(2, 1, &[1.0, 2.0]);
        let b = map(2, 1, &[0.5, 0.0]);
        let s = sum_maps(&FeatureMapStack::new(vec![a.clone(), b]).unwrap()).unwrap();
        assert_eq!(s.values, vec![1.5, 2.0]);
        let one = sum_maps(&FeatureMapStack::new(vec![a.clone()]).unwrap()).unwrap();
        assert_eq!(one, a);
        let zero = sum_maps(&FeatureMapStack::new(vec![Map::filled(3, 3, 0.0); 4]).unwrap()).unwrap();
        assert!(zero.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn normalize_resize_cases() {
        let flat = normalize_resize(&Map::filled(3, 3, 4.0), 5, 5);
        assert!(flat.values.iter().all(|&v| v == 0.0));

        let m = map(2, 2, &[0.0, 0.25, 1.0, 0.5]);
        let same = normalize_resize(&m, 2, 2);
        for (a, b) in same.values.iter().zip(&m.values) {
            assert!((a - b).abs() < 1e-12);
        }

        let up = normalize_resize(&m, 4, 4);
        assert_eq!(up.at(0, 0), 0.0);
        assert_eq!(up.at(3, 0), 0.25);
        assert_eq!(up.at(0, 3), 1.0);
        assert_eq!(up.at(3, 3), 0.5);
    }

    #[test]
    fn masks() {
        let img = RgbImage::filled(3, 2, [255, 128, 7]);
        assert_eq!(apply_mask(&img, &Map::filled(3, 2, 1.0)).unwrap(), img);
        let black = apply_mask(&img, &Map::filled(3, 2, 0.0)).unwrap();
        assert!(black.pixels().iter().all(|&v| v == 0));
        let white = RgbImage::filled(1, 1, [255, 255, 255]);
        let out = apply_mask(&white, &map(1, 1, &[0.3])).unwrap();
        assert_eq!(out.pixels(), &[77, 77, 77]);
        assert!(apply_mask(&img, &Map::filled(2, 2, 1.0)).is_err());
    }
}
