//! Labeled grayscale image collections: loading, resizing, splitting.
//!
//! A dataset root contains one subdirectory per class; every `.pgm` file
//! inside a class directory is one sample. Classes are sorted
//! lexicographically by directory name and indexed from 0; samples within
//! a class are sorted by file name, so sample order is reproducible
//! across filesystems.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pgm;

/// One grayscale image: an `h x w` intensity grid, stored row-major.
///
/// Loaded images always hold intensities in [0, 1]; the type itself only
/// requires finite values so that unnormalized toy matrices can be built
/// in tests and examples.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageMatrix {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImageMatrix {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dimensions must be at least 1x1, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                found: data.len(),
            });
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite intensity {bad}"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds an image from rows of equal length. Test/example convenience.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::InvalidArgument("ragged rows".to_string()));
        }
        Self::new(width, height, rows.concat())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    /// Row-major intensities.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

/// Supported ingest formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Pgm,
}

impl ImageFormat {
    fn extension(self) -> &'static str {
        match self {
            ImageFormat::Pgm => "pgm",
        }
    }
}

/// A collection of same-sized images with per-sample class labels.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    samples: Vec<ImageMatrix>,
    labels: Vec<usize>,
    class_names: Vec<String>,
    width: usize,
    height: usize,
}

impl LabeledDataset {
    /// Assembles a dataset from in-memory parts, validating the shared
    /// dimensions and that every class has at least one sample.
    pub fn new(
        samples: Vec<ImageMatrix>,
        labels: Vec<usize>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("dataset has no samples".to_string()));
        }
        if samples.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: samples.len(),
                found: labels.len(),
            });
        }
        let (width, height) = (samples[0].width(), samples[0].height());
        if samples
            .iter()
            .any(|s| s.width() != width || s.height() != height)
        {
            return Err(Error::InvalidArgument(
                "samples do not share dimensions".to_string(),
            ));
        }
        let mut seen = vec![false; class_names.len()];
        for &label in &labels {
            if label >= class_names.len() {
                return Err(Error::InvalidArgument(format!(
                    "label {label} out of range for {} classes",
                    class_names.len()
                )));
            }
            seen[label] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidArgument(
                "every class must have at least one sample".to_string(),
            ));
        }
        Ok(Self {
            samples,
            labels,
            class_names,
            width,
            height,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn samples(&self) -> &[ImageMatrix] {
        &self.samples
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_name(&self, label: usize) -> &str {
        &self.class_names[label]
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn class_indices(&self, label: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == label).collect()
    }
}

/// Loads a dataset, requiring all images to share one size.
pub fn load_dataset(root: &Path, format: ImageFormat) -> Result<LabeledDataset> {
    load_dataset_impl(root, format, None)
}

/// Loads a dataset, resizing every image to `target_w x target_h`.
pub fn load_dataset_resized(
    root: &Path,
    format: ImageFormat,
    target_w: usize,
    target_h: usize,
) -> Result<LabeledDataset> {
    load_dataset_impl(root, format, Some((target_w, target_h)))
}

fn load_dataset_impl(
    root: &Path,
    format: ImageFormat,
    resize_to: Option<(usize, usize)>,
) -> Result<LabeledDataset> {
    let class_dirs = sorted_class_dirs(root)?;
    if class_dirs.is_empty() {
        return Err(Error::DatasetLayout {
            path: root.to_path_buf(),
            reason: "no class subdirectories".to_string(),
        });
    }

    let mut samples = Vec::new();
    let mut labels = Vec::new();
    let mut class_names = Vec::new();
    let mut shared: Option<(usize, usize)> = resize_to;

    for (class_id, dir) in class_dirs.iter().enumerate() {
        let files = sorted_image_files(dir, format)?;
        if files.is_empty() {
            return Err(Error::DatasetLayout {
                path: dir.clone(),
                reason: format!("class directory has no .{} files", format.extension()),
            });
        }
        class_names.push(
            dir.file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
        );
        for file in files {
            let mut img = pgm::read_pgm(&file)?;
            if let Some((tw, th)) = resize_to {
                img = resize_image(&img, tw, th)?;
            }
            match shared {
                None => shared = Some((img.width(), img.height())),
                Some((w, h)) => {
                    if img.width() != w || img.height() != h {
                        return Err(Error::MixedDimensions {
                            path: file,
                            expected_w: w,
                            expected_h: h,
                            found_w: img.width(),
                            found_h: img.height(),
                        });
                    }
                }
            }
            samples.push(img);
            labels.push(class_id);
        }
    }

    LabeledDataset::new(samples, labels, class_names)
}

fn sorted_class_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    let entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let path = entry.path();
        if path.is_dir() {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}

fn sorted_image_files(dir: &Path, format: ImageFormat) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        let matches = path.is_file()
            && path
                .extension()
                .is_some_and(|e| e.eq_ignore_ascii_case(format.extension()));
        if matches {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Bilinear resize with edge clamping. Output pixel centers are mapped
/// back into the source grid (align-centers convention), so resizing to
/// the identical size copies the input bit-for-bit and constant images
/// stay constant.
pub fn resize_image(img: &ImageMatrix, target_w: usize, target_h: usize) -> Result<ImageMatrix> {
    if target_w == 0 || target_h == 0 {
        return Err(Error::InvalidArgument(format!(
            "resize target must be at least 1x1, got {target_w}x{target_h}"
        )));
    }

    let (sw, sh) = (img.width(), img.height());
    let scale_x = sw as f64 / target_w as f64;
    let scale_y = sh as f64 / target_h as f64;

    let mut data = Vec::with_capacity(target_w * target_h);
    for row in 0..target_h {
        let sy = ((row as f64 + 0.5) * scale_y - 0.5).clamp(0.0, (sh - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(sh - 1);
        let fy = sy - y0 as f64;
        for col in 0..target_w {
            let sx = ((col as f64 + 0.5) * scale_x - 0.5).clamp(0.0, (sw - 1) as f64);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(sw - 1);
            let fx = sx - x0 as f64;

            let top = lerp(img.get(y0, x0), img.get(y0, x1), fx);
            let bottom = lerp(img.get(y1, x0), img.get(y1, x1), fx);
            data.push(lerp(top, bottom, fy));
        }
    }
    ImageMatrix::new(target_w, target_h, data)
}

/// Linear interpolation clamped to the span of its endpoints, so the
/// result is exact for equal endpoints and never overshoots by rounding.
fn lerp(a: f64, b: f64, f: f64) -> f64 {
    (a + f * (b - a)).clamp(a.min(b), a.max(b))
}

/// A stratified train/test split of sample indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HoldoutSplit {
    train_indices: Vec<usize>,
    test_indices: Vec<usize>,
    seed: u64,
}

impl HoldoutSplit {
    pub fn train_indices(&self) -> &[usize] {
        &self.train_indices
    }

    pub fn test_indices(&self) -> &[usize] {
        &self.test_indices
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Splits per class: `round_half_up(train_fraction * n_c)` samples of
/// each class go to train, chosen uniformly at random under `seed`. The
/// count is clamped so every class keeps at least one sample on each
/// side, which is why classes of fewer than two samples are rejected.
pub fn stratified_holdout(
    ds: &LabeledDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<HoldoutSplit> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();

    for class in 0..ds.class_count() {
        let mut members = ds.class_indices(class);
        if members.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "class `{}` has {} sample(s); stratified holdout needs at least 2",
                ds.class_name(class),
                members.len()
            )));
        }
        let take = round_half_up(train_fraction * members.len() as f64).clamp(1, members.len() - 1);
        members.shuffle(&mut rng);
        train.extend_from_slice(&members[..take]);
        test.extend_from_slice(&members[take..]);
    }

    train.sort_unstable();
    test.sort_unstable();
    Ok(HoldoutSplit {
        train_indices: train,
        test_indices: test,
        seed,
    })
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// SHA-256 over every image file of a dataset root, in sorted relative
/// path order, hashing path then contents. Identifies the exact dataset
/// bytes an experiment ran against.
pub fn dataset_checksum(root: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    for dir in sorted_class_dirs(root)? {
        for file in sorted_image_files(&dir, ImageFormat::Pgm)? {
            let rel = file.strip_prefix(root).unwrap_or(&file);
            hasher.update(rel.to_string_lossy().as_bytes());
            hasher.update([0u8]);
            let bytes = fs::read(&file).map_err(|e| Error::io(&file, e))?;
            hasher.update((bytes.len() as u64).to_le_bytes());
            hasher.update(&bytes);
        }
    }
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    Ok(hex)
}
