//! Images, labeled datasets, the CSV index format, stratified splitting and
//! the synthetic imbalanced dataset.

pub mod ppm;
mod synth;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::score::{ScoreClass, NUM_CLASSES};

pub use ppm::{read_image, write_image, PpmError};
pub use synth::{synth_dataset, SynthSpec, DEFAULT_PROPORTIONS};

/// Edge length of the network's square input.
pub const INPUT_SIZE: usize = 227;

/// 8-bit RGB image, row-major, interleaved channels.
#[derive(Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self { width, height, pixels: vec![0; width * height * 3] }
    }

    pub fn from_raw(width: usize, height: usize, pixels: Vec<u8>) -> Option<Self> {
        (width > 0 && height > 0 && pixels.len() == width * height * 3).then_some(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let mut img = Self::new(width, height);
        for px in img.pixels.chunks_exact_mut(3) {
            px.copy_from_slice(&rgb);
        }
        img
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.pixels[(y * self.width + x) * 3 + c]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// Crops larger dimensions around the center and pads smaller ones with
    /// black, producing exactly `width x height`.
    pub fn center_fit(&self, width: usize, height: usize) -> RgbImage {
        let mut out = RgbImage::new(width, height);
        let (sx, dx) = offsets(self.width, width);
        let (sy, dy) = offsets(self.height, height);
        let w = self.width.min(width);
        let h = self.height.min(height);
        for y in 0..h {
            let src = ((sy + y) * self.width + sx) * 3;
            let dst = ((dy + y) * width + dx) * 3;
            out.pixels[dst..dst + w * 3].copy_from_slice(&self.pixels[src..src + w * 3]);
        }
        out
    }

    /// Nearest-neighbour scale of the longer side to fit, centered on black.
    pub fn letterbox(&self, width: usize, height: usize) -> RgbImage {
        let scale = (width as f64 / self.width as f64).min(height as f64 / self.height as f64);
        let sw = ((self.width as f64 * scale).round() as usize).clamp(1, width);
        let sh = ((self.height as f64 * scale).round() as usize).clamp(1, height);
        let mut scaled = RgbImage::new(sw, sh);
        for y in 0..sh {
            let yy = ((y as f64 + 0.5) / scale).floor().min((self.height - 1) as f64) as usize;
            for x in 0..sw {
                let xx = ((x as f64 + 0.5) / scale).floor().min((self.width - 1) as f64) as usize;
                let i = (yy * self.width + xx) * 3;
                scaled.set(x, y, [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]);
            }
        }
        scaled.center_fit(width, height)
    }

    /// Per-channel mean over all pixels.
    pub fn channel_means(&self) -> [f64; 3] {
        let mut sums = [0u64; 3];
        for px in self.pixels.chunks_exact(3) {
            for c in 0..3 {
                sums[c] += px[c] as u64;
            }
        }
        let n = (self.width * self.height) as f64;
        sums.map(|s| s as f64 / n)
    }
}

fn offsets(src: usize, dst: usize) -> (usize, usize) {
    if src >= dst {
        ((src - dst) / 2, 0)
    } else {
        (0, (dst - src) / 2)
    }
}

impl std::fmt::Debug for RgbImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "RgbImage({}x{})", self.width, self.height)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub label: ScoreClass,
    pub image: Arc<RgbImage>,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Real,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, provenance: Provenance) -> Self {
        Self { samples, provenance }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sample counts indexed by class index (score − 2).
    pub fn histogram(&self) -> [usize; NUM_CLASSES] {
        let mut h = [0; NUM_CLASSES];
        for s in &self.samples {
            h[s.label.index()] += 1;
        }
        h
    }

    pub fn subset(&self, keep: impl Fn(&Sample) -> bool) -> Dataset {
        Dataset { samples: self.samples.iter().filter(|s| keep(s)).cloned().collect(), provenance: self.provenance }
    }

    /// Per-channel pixel mean over every image.
    pub fn channel_means(&self) -> [f64; 3] {
        if self.samples.is_empty() {
            return [0.0; 3];
        }
        let mut acc = [0.0; 3];
        for s in &self.samples {
            let m = s.image.channel_means();
            for c in 0..3 {
                acc[c] += m[c];
            }
        }
        acc.map(|a| a / self.samples.len() as f64)
    }
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("line {line}: missing image {path}")]
    MissingImage { line: usize, path: PathBuf },
    #[error("line {line}: image {path}: {source}")]
    BadImage { line: usize, path: PathBuf, source: PpmError },
    #[error("line {line}: label {label:?} is not a score in 2..=9")]
    BadLabel { line: usize, label: String },
    #[error("line {line}: {msg}")]
    MalformedRow { line: usize, msg: String },
    #[error("line {line}: image is {width}x{height}, expected {expected}x{expected}")]
    WrongSize { line: usize, width: usize, height: usize, expected: usize },
    #[error("class {class} has {count} sample(s); stratified split needs at least 2")]
    ClassTooSmall { class: ScoreClass, count: usize },
    #[error("split ratio {0} must lie strictly between 0 and 1")]
    BadRatio(f64),
    #[error("invalid synthetic dataset spec: {0}")]
    BadSpec(String),
}

/// How `load_dataset` treats images that are not `227 x 227`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SizePolicy {
    #[default]
    Reject,
    CenterCrop,
    Letterbox,
}

pub const INDEX_HEADER: &str = "id,relative_path,score";

/// Reads a CSV index (`id,relative_path,score` with a header line) and the
/// images it names, relative to `root`.
pub fn load_dataset(index_path: &Path, root: &Path, policy: SizePolicy) -> Result<Dataset, DataError> {
    let text = fs::read_to_string(index_path).map_err(|source| DataError::Io { path: index_path.into(), source })?;
    let mut samples = Vec::new();
    let mut ids = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let row = raw.trim();
        if row.is_empty() || (idx == 0 && row == INDEX_HEADER) {
            continue;
        }
        let cols: Vec<&str> = row.split(',').map(str::trim).collect();
        if cols.len() != 3 {
            return Err(DataError::MalformedRow { line, msg: format!("expected 3 fields, found {}", cols.len()) });
        }
        let (id, rel, score) = (cols[0], cols[1], cols[2]);
        if id.is_empty() {
            return Err(DataError::MalformedRow { line, msg: "empty sample id".into() });
        }
        if !ids.insert(id.to_string()) {
            return Err(DataError::MalformedRow { line, msg: format!("duplicate sample id {id:?}") });
        }
        let label = score
            .parse::<u8>()
            .ok()
            .and_then(ScoreClass::new)
            .ok_or_else(|| DataError::BadLabel { line, label: score.to_string() })?;
        let path = root.join(rel);
        if !path.is_file() {
            return Err(DataError::MissingImage { line, path });
        }
        let image = read_image(&path).map_err(|source| DataError::BadImage { line, path: path.clone(), source })?;
        let image = if image.width() == INPUT_SIZE && image.height() == INPUT_SIZE {
            image
        } else {
            match policy {
                SizePolicy::Reject => {
                    return Err(DataError::WrongSize {
                        line,
                        width: image.width(),
                        height: image.height(),
                        expected: INPUT_SIZE,
                    })
                }
                SizePolicy::CenterCrop => image.center_fit(INPUT_SIZE, INPUT_SIZE),
                SizePolicy::Letterbox => image.letterbox(INPUT_SIZE, INPUT_SIZE),
            }
        };
        samples.push(Sample { id: id.to_string(), label, image: Arc::new(image), path: Some(path) });
    }
    Ok(Dataset::new(samples, Provenance::Real))
}

/// Writes every sample as `<dir>/images/<id>.ppm` plus `<dir>/index.csv`.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<PathBuf, DataError> {
    let images = dir.join("images");
    fs::create_dir_all(&images).map_err(|source| DataError::Io { path: images.clone(), source })?;
    let mut index = String::from(INDEX_HEADER);
    index.push('\n');
    for s in &dataset.samples {
        let rel = format!("images/{}.ppm", s.id);
        let path = dir.join(&rel);
        write_image(&s.image, &path).map_err(|e| match e {
            PpmError::Io(source) => DataError::Io { path: path.clone(), source },
            other => DataError::BadImage { line: 0, path: path.clone(), source: other },
        })?;
        index.push_str(&format!("{},{},{}\n", s.id, rel, s.label));
    }
    let index_path = dir.join("index.csv");
    fs::write(&index_path, index).map_err(|source| DataError::Io { path: index_path.clone(), source })?;
    Ok(index_path)
}

/// Stratified split: within each class a seeded shuffle puts
/// `round(ratio * n)` samples (clamped to `1..n-1`) into the training side.
/// Both halves keep the original sample order.
pub fn split(dataset: &Dataset, ratio: f64, seed: u64) -> Result<(Dataset, Dataset), DataError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DataError::BadRatio(ratio));
    }
    let mut by_class: BTreeMap<ScoreClass, Vec<usize>> = BTreeMap::new();
    for (i, s) in dataset.samples.iter().enumerate() {
        by_class.entry(s.label).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; dataset.len()];
    for (&class, members) in &mut by_class {
        let n = members.len();
        if n < 2 {
            return Err(DataError::ClassTooSmall { class, count: n });
        }
        members.shuffle(&mut rng);
        let n_train = ((ratio * n as f64).round() as usize).clamp(1, n - 1);
        for &i in &members[..n_train] {
            in_train[i] = true;
        }
    }
    let pick = |want: bool| Dataset {
        samples: dataset.samples.iter().zip(&in_train).filter(|(_, &t)| t == want).map(|(s, _)| s.clone()).collect(),
        provenance: dataset.provenance,
    };
    Ok((pick(true), pick(false)))
}
