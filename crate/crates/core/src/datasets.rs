//! Synthetic shape datasets and dataset file I/O.
//!
//! A dataset root holds `manifest.json` plus per-sample files:
//!
//! ```text
//! images/<id>.png       8-bit RGB (PPM also accepted)
//! masks/<id>.png        8-bit gray label map, 255 = IGNORE (PGM also accepted)
//! boxes/<id>.jsonl      one {"label":..,"x0":..,"y0":..,"x1":..,"y1":..} per line
//! instances/<id>.json   optional list of {"label":..,"mask":<RLE>} visible masks
//! ```

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{ColorType, ImageFormat};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::BoxAnnotation;
use crate::error::{Error, Result};
use crate::geometry::{tight_bbox, BinaryMask, LabelMap, BACKGROUND, IGNORE};
use crate::imaging::RgbImage;
use crate::rng;

pub const MANIFEST_FILE: &str = "manifest.json";
const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnnotationKind {
    Mask,
    Box,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instance {
    pub label: u8,
    pub mask: BinaryMask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image_id: String,
    pub image: RgbImage,
    pub gt_mask: Option<LabelMap>,
    pub gt_instances: Option<Vec<Instance>>,
    pub boxes: Vec<BoxAnnotation>,
    /// Supervision this sample offers in semi-supervised training.
    pub annotation: AnnotationKind,
}

impl Sample {
    /// Checks boxes against the image and, when instances are present, box ↔
    /// instance ↔ mask consistency.
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        let (w, h) = self.image.dims();
        for b in &self.boxes {
            if !b.rect.fits_in(w, h) {
                return Err(Error::BoxOutOfBounds {
                    x0: b.rect.x0.into(),
                    y0: b.rect.y0.into(),
                    x1: b.rect.x1.into(),
                    y1: b.rect.y1.into(),
                    width: w,
                    height: h,
                });
            }
            if usize::from(b.label) >= num_classes {
                return Err(Error::LabelOutOfRange {
                    label: b.label,
                    num_classes,
                });
            }
        }
        if let Some(mask) = &self.gt_mask {
            if mask.dims() != (w, h) {
                return Err(Error::DimensionMismatch {
                    expected: (w, h),
                    actual: mask.dims(),
                });
            }
            check_labels(mask, num_classes)?;
        }
        if self.annotation == AnnotationKind::Mask && self.gt_mask.is_none() {
            return Err(Error::Dataset(format!(
                "mask-annotated sample {} has no mask",
                self.image_id
            )));
        }
        let Some(instances) = &self.gt_instances else {
            return Ok(());
        };
        let id = &self.image_id;
        if instances.len() != self.boxes.len() {
            return Err(Error::Dataset(format!(
                "{id}: {} instances but {} boxes",
                instances.len(),
                self.boxes.len()
            )));
        }
        let mut covered = vec![false; w * h];
        for (i, (inst, b)) in instances.iter().zip(&self.boxes).enumerate() {
            if inst.mask.dims() != (w, h) {
                return Err(Error::DimensionMismatch {
                    expected: (w, h),
                    actual: inst.mask.dims(),
                });
            }
            if inst.label != b.label || tight_bbox(&inst.mask)? != b.rect {
                return Err(Error::Dataset(format!(
                    "{id}: box {i} is not the tight box of its instance"
                )));
            }
            for p in inst.mask.indices() {
                if std::mem::replace(&mut covered[p], true) {
                    return Err(Error::Dataset(format!("{id}: instance masks overlap")));
                }
                if let Some(mask) = &self.gt_mask {
                    if mask.labels()[p] != inst.label {
                        return Err(Error::Dataset(format!(
                            "{id}: instance {i} disagrees with the label map"
                        )));
                    }
                }
            }
        }
        if let Some(mask) = &self.gt_mask {
            let foreground = mask
                .labels()
                .iter()
                .filter(|&&l| l != BACKGROUND && l != IGNORE)
                .count();
            if foreground != covered.iter().filter(|&&c| c).count() {
                return Err(Error::Dataset(format!(
                    "{id}: label map foreground is not the union of instances"
                )));
            }
        }
        Ok(())
    }
}

fn check_labels(map: &LabelMap, num_classes: usize) -> Result<()> {
    match map
        .labels()
        .iter()
        .find(|&&l| l != IGNORE && usize::from(l) >= num_classes)
    {
        Some(&label) => Err(Error::LabelOutOfRange { label, num_classes }),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub image_size: usize,
    /// Training images.
    pub num_images: usize,
    pub num_test_images: usize,
    pub min_instances: usize,
    pub max_instances: usize,
    /// Shape half-extent range in pixels.
    pub min_size: usize,
    pub max_size: usize,
    pub color_jitter: f64,
    pub pixel_noise: f64,
    pub allow_occlusion: bool,
    /// Fraction of training samples recorded as mask-annotated; the rest
    /// are box-annotated. Test samples are always mask-annotated.
    pub mask_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            image_size: 64,
            num_images: 200,
            num_test_images: 50,
            min_instances: 1,
            max_instances: 3,
            min_size: 7,
            max_size: 14,
            color_jitter: 0.06,
            pixel_noise: 0.03,
            allow_occlusion: true,
            mask_fraction: 0.1,
            seed: 0,
        }
    }
}

/// Foreground shapes; the class id is the discriminant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Disk = 1,
    Rectangle = 2,
    Triangle = 3,
}

pub const SYNTH_NUM_CLASSES: usize = 4;

impl Shape {
    const ALL: [Shape; 3] = [Shape::Disk, Shape::Rectangle, Shape::Triangle];

    fn base_color(self) -> [f64; 3] {
        match self {
            Shape::Disk => [0.85, 0.30, 0.25],
            Shape::Rectangle => [0.25, 0.75, 0.30],
            Shape::Triangle => [0.30, 0.35, 0.85],
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.image_size < 32 {
            return Err(Error::Config("image_size must be at least 32".into()));
        }
        if self.num_images < 1 {
            return Err(Error::Config("num_images must be at least 1".into()));
        }
        if self.min_instances > self.max_instances || self.min_size > self.max_size {
            return Err(Error::Config("instance/size ranges are inverted".into()));
        }
        if self.min_size < 2 || 2 * self.max_size + 2 > self.image_size {
            return Err(Error::Config(
                "shape sizes must be at least 2 and fit in the image".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.mask_fraction) {
            return Err(Error::Config("mask_fraction must lie in [0, 1]".into()));
        }
        if !(self.color_jitter >= 0.0 && self.pixel_noise >= 0.0) {
            return Err(Error::Config("noise levels must be non-negative".into()));
        }
        Ok(())
    }
}

/// Integer-grid rasterisation; pixel centres sit at `(x + ½, y + ½)` and all
/// shape parameters are integers, so tests use doubled coordinates.
#[derive(Debug, Clone, Copy)]
struct Placed {
    shape: Shape,
    cx: i64,
    cy: i64,
    size: i64,
    aspect: i64,
    orientation: u8,
}

impl Placed {
    fn contains(&self, x: usize, y: usize) -> bool {
        let (px, py) = (2 * x as i64 + 1, 2 * y as i64 + 1);
        let (cx, cy, s) = (2 * self.cx, 2 * self.cy, 2 * self.size);
        match self.shape {
            Shape::Disk => (px - cx).pow(2) + (py - cy).pow(2) <= s * s,
            Shape::Rectangle => {
                let (hw, hh) = if self.orientation.is_multiple_of(2) {
                    (s, 2 * self.aspect)
                } else {
                    (2 * self.aspect, s)
                };
                px >= cx - hw && px < cx + hw && py >= cy - hh && py < cy + hh
            }
            Shape::Triangle => {
                // apex pointing up, right, down or left
                let (apex, b1, b2) = match self.orientation {
                    0 => ((cx, cy - s), (cx - s, cy + s), (cx + s, cy + s)),
                    1 => ((cx + s, cy), (cx - s, cy - s), (cx - s, cy + s)),
                    2 => ((cx, cy + s), (cx + s, cy - s), (cx - s, cy - s)),
                    _ => ((cx - s, cy), (cx + s, cy + s), (cx + s, cy - s)),
                };
                let edge = |a: (i64, i64), b: (i64, i64)| {
                    (b.0 - a.0) * (py - a.1) - (b.1 - a.1) * (px - a.0)
                };
                let (e0, e1, e2) = (edge(apex, b1), edge(b1, b2), edge(b2, apex));
                (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0)
            }
        }
    }

    fn mask(&self, size: usize) -> BinaryMask {
        BinaryMask::from_predicate(size, size, |x, y| self.contains(x, y))
    }
}

const PLACEMENT_RETRIES: usize = 200;
const MIN_VISIBLE_FRACTION: f64 = 0.5;

fn synth_one(config: &SynthConfig, split: Split, index: usize) -> Result<Sample> {
    let n = config.image_size;
    let split_tag = match split {
        Split::Train => 0,
        Split::Test => 1,
    };
    let mut rng = rng::stream(config.seed, &[rng::STREAM_SYNTH, split_tag, index as u64]);
    let jitter = Normal::new(0.0, config.color_jitter).map_err(|e| Error::Config(e.to_string()))?;
    let noise = Normal::new(0.0, config.pixel_noise).map_err(|e| Error::Config(e.to_string()))?;

    let gray: f64 = rng.random_range(0.35..0.65);
    let tint: [f64; 3] = std::array::from_fn(|_| rng.random_range(-0.05..0.05));
    let slope: [f64; 2] = [rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)];

    let count = rng.random_range(config.min_instances..=config.max_instances);
    let mut placed: Vec<(Placed, BinaryMask, [f64; 3])> = Vec::new();
    // owner[p] = 1 + index of the topmost instance covering p
    let mut owner = vec![0usize; n * n];
    for _ in 0..count {
        let mut accepted = false;
        for _ in 0..PLACEMENT_RETRIES {
            let shape = Shape::ALL[rng.random_range(0..3)];
            let size = rng.random_range(config.min_size..=config.max_size) as i64;
            let aspect = rng.random_range((size * 3 / 5).max(2)..=size);
            let orientation = rng.random_range(0..4u8);
            let lo = size + 1;
            let hi = n as i64 - size - 1;
            let cx = rng.random_range(lo..=hi);
            let cy = rng.random_range(lo..=hi);
            let p = Placed {
                shape,
                cx,
                cy,
                size,
                aspect,
                orientation,
            };
            let mask = p.mask(n);
            if mask.area() < 4 {
                continue;
            }
            let overlaps = mask.indices().any(|i| owner[i] != 0);
            if overlaps && !config.allow_occlusion {
                continue;
            }
            let mut trial = owner.clone();
            for i in mask.indices() {
                trial[i] = placed.len() + 1;
            }
            let keeps_visible = placed.iter().enumerate().all(|(k, (_, m, _))| {
                let visible = trial.iter().filter(|&&o| o == k + 1).count() as f64;
                visible >= MIN_VISIBLE_FRACTION * m.area() as f64
            });
            if !keeps_visible {
                continue;
            }
            let base = shape.base_color();
            let color =
                std::array::from_fn(|c| (base[c] + jitter.sample(&mut rng)).clamp(0.0, 1.0));
            owner = trial;
            placed.push((p, mask, color));
            accepted = true;
            break;
        }
        if !accepted {
            return Err(Error::Dataset(format!(
                "could not place instance {} in image {index} after {PLACEMENT_RETRIES} tries",
                placed.len()
            )));
        }
    }

    let mut data = Vec::with_capacity(n * n * 3);
    for y in 0..n {
        for x in 0..n {
            let base = match owner[y * n + x] {
                0 => {
                    let ramp = slope[0] * (x as f64 / n as f64 - 0.5)
                        + slope[1] * (y as f64 / n as f64 - 0.5);
                    std::array::from_fn(|c| gray + tint[c] + ramp)
                }
                o => placed[o - 1].2,
            };
            for v in base {
                data.push((v + noise.sample(&mut rng)).clamp(0.0, 1.0) as f32);
            }
        }
    }
    let image = RgbImage::new(n, n, data)?.quantized();

    let mut labels = vec![BACKGROUND; n * n];
    let mut instances = Vec::with_capacity(placed.len());
    let mut boxes = Vec::with_capacity(placed.len());
    for (k, (p, _, _)) in placed.iter().enumerate() {
        let visible: Vec<bool> = owner.iter().map(|&o| o == k + 1).collect();
        let mask = BinaryMask::from_bits(n, n, &visible)?;
        let label = p.shape as u8;
        for i in mask.indices() {
            labels[i] = label;
        }
        boxes.push(BoxAnnotation::new(tight_bbox(&mask)?, label)?);
        instances.push(Instance { label, mask });
    }

    Ok(Sample {
        image_id: format!(
            "{}_{index:05}",
            if split == Split::Train {
                "train"
            } else {
                "test"
            }
        ),
        image,
        gt_mask: Some(LabelMap::from_vec(n, n, labels)?),
        gt_instances: Some(instances),
        boxes,
        annotation: AnnotationKind::Box,
    })
}

/// The synthetic dataset in memory: training samples followed by test samples.
pub fn synth_samples(config: &SynthConfig) -> Result<Vec<(Split, Sample)>> {
    config.validate()?;
    let jobs: Vec<(Split, usize)> = (0..config.num_images)
        .map(|i| (Split::Train, i))
        .chain((0..config.num_test_images).map(|i| (Split::Test, i)))
        .collect();
    let mut samples: Vec<(Split, Sample)> = jobs
        .par_iter()
        .map(|&(split, i)| synth_one(config, split, i).map(|s| (split, s)))
        .collect::<Result<_>>()?;

    // mask-annotated training subset: a seeded choice of round(f·n) samples
    let n_mask = (config.mask_fraction * config.num_images as f64).round() as usize;
    let mut order: Vec<usize> = (0..config.num_images).collect();
    {
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng::stream(config.seed, &[rng::STREAM_SPLIT]));
    }
    for &i in &order[..n_mask] {
        samples[i].1.annotation = AnnotationKind::Mask;
    }
    for (split, s) in &mut samples {
        if *split == Split::Test {
            s.annotation = AnnotationKind::Mask;
        }
    }
    Ok(samples)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub split: Split,
    pub annotation: AnnotationKind,
    pub image: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<PathBuf>,
    pub boxes: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instances: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposals: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: u32,
    pub num_classes: usize,
    pub samples: Vec<ManifestEntry>,
}

/// Loaded dataset; `splits[i]` and `proposal_files[i]` belong to `samples[i]`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub num_classes: usize,
    pub samples: Vec<Sample>,
    pub splits: Vec<Split>,
    pub proposal_files: Vec<Option<PathBuf>>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> Vec<Sample> {
        self.samples
            .iter()
            .zip(&self.splits)
            .filter(|(_, s)| **s == split)
            .map(|(x, _)| x.clone())
            .collect()
    }

    /// Proposal files of the samples in `split`, in the same order as
    /// [`Dataset::split`].
    pub fn split_proposals(&self, split: Split) -> Vec<Option<PathBuf>> {
        self.proposal_files
            .iter()
            .zip(&self.splits)
            .filter(|(_, s)| **s == split)
            .map(|(p, _)| p.clone())
            .collect()
    }
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn format_for(path: &Path) -> Result<ImageFormat> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("png") => Ok(ImageFormat::Png),
        Some("ppm" | "pgm" | "pnm") => Ok(ImageFormat::Pnm),
        other => Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: format!("extension {other:?} is not png/ppm/pgm"),
        }),
    }
}

fn encode(path: &Path, bytes: &[u8], w: usize, h: usize, color: ColorType) -> Result<()> {
    let format = format_for(path)?;
    let mut out = Cursor::new(Vec::new());
    image::write_buffer_with_format(&mut out, bytes, w as u32, h as u32, color, format).map_err(
        |e| Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: e.to_string(),
        },
    )?;
    write_atomic(path, &out.into_inner())
}

fn decode(path: &Path) -> Result<image::DynamicImage> {
    let format = format_for(path)?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    image::load_from_memory_with_format(&bytes, format).map_err(|e| Error::UnsupportedFormat {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

pub fn write_image(path: &Path, image: &RgbImage) -> Result<()> {
    encode(
        path,
        &image.to_rgb8(),
        image.width(),
        image.height(),
        ColorType::Rgb8,
    )
}

pub fn read_image(path: &Path) -> Result<RgbImage> {
    match decode(path)? {
        image::DynamicImage::ImageRgb8(buf) => {
            RgbImage::from_rgb8(buf.width() as usize, buf.height() as usize, buf.as_raw())
        }
        other => Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: format!("expected 8-bit RGB, found {:?}", other.color()),
        }),
    }
}

/// Label maps are stored verbatim as 8-bit gray; 255 is IGNORE.
pub fn write_label_map(path: &Path, map: &LabelMap) -> Result<()> {
    encode(path, map.labels(), map.width(), map.height(), ColorType::L8)
}

pub fn read_label_map(path: &Path, num_classes: usize) -> Result<LabelMap> {
    match decode(path)? {
        image::DynamicImage::ImageLuma8(buf) => {
            let map =
                LabelMap::from_vec(buf.width() as usize, buf.height() as usize, buf.into_raw())?;
            check_labels(&map, num_classes)?;
            Ok(map)
        }
        other => Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: format!("expected 8-bit gray, found {:?}", other.color()),
        }),
    }
}

pub fn write_boxes(path: &Path, boxes: &[BoxAnnotation]) -> Result<()> {
    let mut text = String::new();
    for b in boxes {
        text.push_str(&serde_json::to_string(b).expect("plain struct"));
        text.push('\n');
    }
    write_atomic(path, text.as_bytes())
}

pub fn read_boxes(path: &Path) -> Result<Vec<BoxAnnotation>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::parse(path, format!("line {}: {e}", i + 1)))
        })
        .collect()
}

/// Writes samples and `manifest.json` under `root`.
pub fn write_dataset(
    root: &Path,
    samples: &[(Split, Sample)],
    num_classes: usize,
) -> Result<DatasetManifest> {
    let entries = samples
        .par_iter()
        .map(|(split, s)| {
            let id = &s.image_id;
            let entry = ManifestEntry {
                id: id.clone(),
                split: *split,
                annotation: s.annotation,
                image: PathBuf::from(format!("images/{id}.png")),
                mask: s
                    .gt_mask
                    .as_ref()
                    .map(|_| PathBuf::from(format!("masks/{id}.png"))),
                boxes: PathBuf::from(format!("boxes/{id}.jsonl")),
                instances: s
                    .gt_instances
                    .as_ref()
                    .map(|_| PathBuf::from(format!("instances/{id}.json"))),
                proposals: None,
            };
            write_image(&root.join(&entry.image), &s.image)?;
            if let (Some(m), Some(p)) = (&s.gt_mask, &entry.mask) {
                write_label_map(&root.join(p), m)?;
            }
            write_boxes(&root.join(&entry.boxes), &s.boxes)?;
            if let (Some(inst), Some(p)) = (&s.gt_instances, &entry.instances) {
                let json = serde_json::to_vec(inst).expect("plain struct");
                write_atomic(&root.join(p), &json)?;
            }
            Ok(entry)
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        num_classes,
        samples: entries,
    };
    write_manifest(root, &manifest)?;
    Ok(manifest)
}

pub fn write_manifest(root: &Path, manifest: &DatasetManifest) -> Result<()> {
    let json = serde_json::to_vec_pretty(manifest).expect("plain struct");
    write_atomic(&root.join(MANIFEST_FILE), &json)
}

/// Generates the synthetic dataset under `root` and returns its manifest.
pub fn synth_generate(config: &SynthConfig, root: &Path) -> Result<DatasetManifest> {
    let samples = synth_samples(config)?;
    write_dataset(root, &samples, SYNTH_NUM_CLASSES)
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let manifest: DatasetManifest =
        serde_json::from_slice(&bytes).map_err(|e| Error::parse(path, e))?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::parse(
            path,
            format!("unsupported manifest version {}", manifest.version),
        ));
    }
    Ok(manifest)
}

/// Loads every sample listed in a manifest, verifying sample invariants.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let manifest = read_manifest(manifest_path)?;
    let root = manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let num_classes = manifest.num_classes;
    if !(2..usize::from(IGNORE)).contains(&num_classes) {
        return Err(Error::parse(
            manifest_path,
            format!("num_classes {num_classes} outside 2..255"),
        ));
    }
    let samples = manifest
        .samples
        .par_iter()
        .map(|e| {
            let image = read_image(&root.join(&e.image))?;
            let gt_mask = e
                .mask
                .as_ref()
                .map(|p| read_label_map(&root.join(p), num_classes))
                .transpose()?;
            if e.annotation == AnnotationKind::Mask && gt_mask.is_none() {
                return Err(Error::Dataset(format!(
                    "sample {} is mask-annotated but lists no mask file",
                    e.id
                )));
            }
            let boxes = read_boxes(&root.join(&e.boxes))?;
            let gt_instances = e
                .instances
                .as_ref()
                .map(|p| {
                    let path = root.join(p);
                    let bytes = fs::read(&path).map_err(|err| Error::io(&path, err))?;
                    serde_json::from_slice::<Vec<Instance>>(&bytes)
                        .map_err(|err| Error::parse(&path, err))
                })
                .transpose()?;
            let sample = Sample {
                image_id: e.id.clone(),
                image,
                gt_mask,
                gt_instances,
                boxes,
                annotation: e.annotation,
            };
            sample.validate(num_classes)?;
            Ok(sample)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        root: root.clone(),
        num_classes,
        splits: manifest.samples.iter().map(|e| e.split).collect(),
        proposal_files: manifest
            .samples
            .iter()
            .map(|e| e.proposals.as_ref().map(|p| root.join(p)))
            .collect(),
        samples,
    })
}
