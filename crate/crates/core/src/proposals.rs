//! Candidate segment pools.
//!
//! The built-in proposer over-segments an image with the graph-based
//! algorithm of Felzenszwalb and Huttenlocher, then groups adjacent regions
//! by mean colour over several levels so that whole objects appear as single
//! candidates. External pools can be imported from RLE JSON files instead.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{mask_iou, tight_bbox, BinaryMask, PixelRect};
use crate::imaging::RgbImage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProposerConfig {
    /// Felzenszwalb scale `k`; larger values favour larger regions. Colour
    /// distances are measured on `[0, 1]` channels.
    pub graph_scale: f64,
    /// The image is over-segmented once per multiplier of `graph_scale`;
    /// every level's groupings join the pool before deduplication.
    pub scale_multipliers: Vec<f64>,
    /// Image pyramid: each level is segmented at its own resolution and its
    /// partition upsampled, which perturbs region boundaries.
    pub pyramid: Vec<f64>,
    /// Gaussian pre-smoothing sigma in pixels (0 disables).
    pub smoothing: f64,
    pub min_region_size: usize,
    pub merge_levels: usize,
    pub max_proposals: usize,
    pub dedup_iou: f64,
    /// The built-in proposer is deterministic; the seed is carried so that
    /// configs for stochastic external proposers keep the same shape.
    pub seed: u64,
}

impl Default for ProposerConfig {
    fn default() -> Self {
        Self {
            graph_scale: 0.05,
            scale_multipliers: vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0],
            pyramid: vec![1.0, 0.75, 0.5],
            smoothing: 0.5,
            min_region_size: 5,
            merge_levels: 6,
            max_proposals: 1000,
            dedup_iou: 0.95,
            seed: 0,
        }
    }
}

impl ProposerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_proposals < 1 {
            return Err(Error::Config("max_proposals must be at least 1".into()));
        }
        if !(self.dedup_iou > 0.0 && self.dedup_iou <= 1.0) {
            return Err(Error::Config("dedup_iou must lie in (0, 1]".into()));
        }
        if self.scale_multipliers.is_empty() || self.scale_multipliers.iter().any(|m| !(*m > 0.0)) {
            return Err(Error::Config(
                "scale_multipliers must be non-empty and positive".into(),
            ));
        }
        if self.pyramid.is_empty() || self.pyramid.iter().any(|s| !(*s > 0.0 && *s <= 1.0)) {
            return Err(Error::Config("pyramid levels must lie in (0, 1]".into()));
        }
        if !(self.graph_scale >= 0.0) || !(self.smoothing >= 0.0) {
            return Err(Error::Config(
                "graph_scale and smoothing must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSegment {
    id: usize,
    mask: BinaryMask,
    tight_box: PixelRect,
    area: u64,
}

impl CandidateSegment {
    pub fn new(id: usize, mask: BinaryMask) -> Result<Self> {
        let tight_box = tight_bbox(&mask)?;
        let area = mask.area();
        Ok(Self {
            id,
            mask,
            tight_box,
            area,
        })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn mask(&self) -> &BinaryMask {
        &self.mask
    }

    pub fn tight_box(&self) -> &PixelRect {
        &self.tight_box
    }

    pub fn area(&self) -> u64 {
        self.area
    }
}

/// Fixed candidate set for one image. Nothing mutates a pool once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProposalPool {
    image_id: String,
    width: usize,
    height: usize,
    segments: Vec<CandidateSegment>,
}

impl ProposalPool {
    pub fn new(image_id: impl Into<String>, masks: Vec<BinaryMask>) -> Result<Self> {
        let first = masks.first().ok_or(Error::EmptyPool)?;
        let (width, height) = first.dims();
        let segments = masks
            .into_iter()
            .enumerate()
            .map(|(id, m)| {
                if m.dims() != (width, height) {
                    return Err(Error::DimensionMismatch {
                        expected: (width, height),
                        actual: m.dims(),
                    });
                }
                CandidateSegment::new(id, m)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            image_id: image_id.into(),
            width,
            height,
            segments,
        })
    }

    pub fn image_id(&self) -> &str {
        &self.image_id
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn segments(&self) -> &[CandidateSegment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<&CandidateSegment> {
        self.segments.get(id)
    }
}

/// Superpixel labeling: `labels[i]` is the region of pixel `i`, regions are
/// numbered densely in row-major order of first appearance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
    pub num_regions: usize,
}

impl Partition {
    pub fn region_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_regions];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }

    pub fn region_mask(&self, region: u32) -> BinaryMask {
        let bits: Vec<bool> = self.labels.iter().map(|&l| l == region).collect();
        BinaryMask::from_bits(self.width, self.height, &bits).expect("grid sized")
    }
}

struct DisjointSet {
    parent: Vec<u32>,
    rank: Vec<u8>,
    size: Vec<u32>,
    threshold: Vec<f64>,
}

impl DisjointSet {
    fn new(n: usize, initial_threshold: f64) -> Self {
        Self {
            parent: (0..n as u32).collect(),
            rank: vec![0; n],
            size: vec![1; n],
            threshold: vec![initial_threshold; n],
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) -> u32 {
        let (a, b) = (a as usize, b as usize);
        let (root, child) = if self.rank[a] >= self.rank[b] {
            (a, b)
        } else {
            (b, a)
        };
        self.parent[child] = root as u32;
        self.size[root] += self.size[child];
        if self.rank[a] == self.rank[b] {
            self.rank[root] += 1;
        }
        root as u32
    }
}

fn gaussian_smooth(image: &RgbImage, sigma: f64) -> Vec<f32> {
    let planar = image.to_planar();
    if sigma <= 0.0 {
        return planar;
    }
    let (w, h) = image.dims();
    let radius = (4.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / norm).collect();
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut out = vec![0.0f32; planar.len()];
    let mut tmp = vec![0.0f64; w * h];
    for c in 0..3 {
        let plane = &planar[c * w * h..(c + 1) * w * h];
        for y in 0..h {
            for x in 0..w {
                tmp[y * w + x] = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, &kv)| {
                        kv * f64::from(plane[y * w + clamp(x as isize + k as isize - radius, w)])
                    })
                    .sum();
            }
        }
        for y in 0..h {
            for x in 0..w {
                let v: f64 = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, &kv)| kv * tmp[clamp(y as isize + k as isize - radius, h) * w + x])
                    .sum();
                out[c * w * h + y * w + x] = v as f32;
            }
        }
    }
    out
}

/// Graph-based over-segmentation on the 8-connected pixel grid.
pub fn felzenszwalb_segment(image: &RgbImage, config: &ProposerConfig) -> Partition {
    let (w, h) = image.dims();
    let n = w * h;
    let planar = gaussian_smooth(image, config.smoothing);
    let dist = |a: usize, b: usize| -> f64 {
        (0..3)
            .map(|c| {
                let d = f64::from(planar[c * n + a]) - f64::from(planar[c * n + b]);
                d * d
            })
            .sum::<f64>()
            .sqrt()
    };

    let mut edges: Vec<(f64, u32, u32)> = Vec::with_capacity(4 * n);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w {
                edges.push((dist(i, i + 1), i as u32, (i + 1) as u32));
            }
            if y + 1 < h {
                edges.push((dist(i, i + w), i as u32, (i + w) as u32));
                if x + 1 < w {
                    edges.push((dist(i, i + w + 1), i as u32, (i + w + 1) as u32));
                }
                if x > 0 {
                    edges.push((dist(i, i + w - 1), i as u32, (i + w - 1) as u32));
                }
            }
        }
    }
    // stable sort keeps construction order among equal weights
    edges.sort_by(|a, b| a.0.total_cmp(&b.0));

    let k = config.graph_scale;
    let mut sets = DisjointSet::new(n, k);
    for &(weight, a, b) in &edges {
        let (ra, rb) = (sets.find(a), sets.find(b));
        if ra != rb
            && weight <= sets.threshold[ra as usize]
            && weight <= sets.threshold[rb as usize]
        {
            let root = sets.union(ra, rb);
            sets.threshold[root as usize] = weight + k / f64::from(sets.size[root as usize]);
        }
    }
    let min_size = config.min_region_size as u32;
    for &(_, a, b) in &edges {
        let (ra, rb) = (sets.find(a), sets.find(b));
        if ra != rb && (sets.size[ra as usize] < min_size || sets.size[rb as usize] < min_size) {
            sets.union(ra, rb);
        }
    }

    let mut dense = vec![u32::MAX; n];
    let mut labels = vec![0u32; n];
    let mut next = 0u32;
    for (i, label) in labels.iter_mut().enumerate() {
        let root = sets.find(i as u32) as usize;
        if dense[root] == u32::MAX {
            dense[root] = next;
            next += 1;
        }
        *label = dense[root];
    }
    Partition {
        width: w,
        height: h,
        labels,
        num_regions: next as usize,
    }
}

struct Group {
    members: Vec<u32>,
    size: usize,
    color_sum: [f64; 3],
}

impl Group {
    fn mean(&self) -> [f64; 3] {
        let n = self.size as f64;
        [
            self.color_sum[0] / n,
            self.color_sum[1] / n,
            self.color_sum[2] / n,
        ]
    }
}

/// Base regions plus `merge_levels` rounds of greedy pairing of adjacent
/// regions with the closest mean colours, ranked by size (largest first) and
/// truncated to `max_proposals`.
pub fn hierarchical_merge(
    partition: &Partition,
    image: &RgbImage,
    config: &ProposerConfig,
) -> Vec<BinaryMask> {
    let (w, h) = (partition.width, partition.height);
    let r = partition.num_regions;

    let mut groups: Vec<Group> = (0..r)
        .map(|i| Group {
            members: vec![i as u32],
            size: 0,
            color_sum: [0.0; 3],
        })
        .collect();
    for (i, &l) in partition.labels.iter().enumerate() {
        let g = &mut groups[l as usize];
        g.size += 1;
        let px = image.pixel_at(i);
        for c in 0..3 {
            g.color_sum[c] += f64::from(px[c]);
        }
    }

    let mut base_adjacent = std::collections::BTreeSet::new();
    for y in 0..h {
        for x in 0..w {
            let a = partition.labels[y * w + x];
            if x + 1 < w {
                let b = partition.labels[y * w + x + 1];
                if a != b {
                    base_adjacent.insert((a.min(b), a.max(b)));
                }
            }
            if y + 1 < h {
                let b = partition.labels[(y + 1) * w + x];
                if a != b {
                    base_adjacent.insert((a.min(b), a.max(b)));
                }
            }
        }
    }

    // owner[base] = index of the active group holding that base region
    let mut owner: Vec<usize> = (0..r).collect();
    let mut active: Vec<usize> = (0..r).collect();
    for _ in 0..config.merge_levels {
        if active.len() < 2 {
            break;
        }
        let mut pairs: Vec<(f64, usize, usize)> = base_adjacent
            .iter()
            .map(|&(a, b)| (owner[a as usize], owner[b as usize]))
            .filter(|(a, b)| a != b)
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .map(|(a, b)| {
                let (ma, mb) = (groups[a].mean(), groups[b].mean());
                let d = (0..3).map(|c| (ma[c] - mb[c]).powi(2)).sum::<f64>().sqrt();
                (d, a, b)
            })
            .collect();
        if pairs.is_empty() {
            break;
        }
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));

        let mut taken = std::collections::HashSet::new();
        let mut next_active = Vec::new();
        for &(_, a, b) in &pairs {
            if taken.contains(&a) || taken.contains(&b) {
                continue;
            }
            taken.insert(a);
            taken.insert(b);
            let mut members = groups[a].members.clone();
            members.extend_from_slice(&groups[b].members);
            members.sort_unstable();
            let mut color_sum = groups[a].color_sum;
            for c in 0..3 {
                color_sum[c] += groups[b].color_sum[c];
            }
            let merged = groups.len();
            for &m in &members {
                owner[m as usize] = merged;
            }
            groups.push(Group {
                size: groups[a].size + groups[b].size,
                members,
                color_sum,
            });
            next_active.push(merged);
        }
        next_active.extend(active.iter().copied().filter(|g| !taken.contains(g)));
        next_active.sort_unstable();
        active = next_active;
    }

    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.sort_by(|&a, &b| groups[b].size.cmp(&groups[a].size).then(a.cmp(&b)));
    order.truncate(config.max_proposals);

    order
        .into_iter()
        .map(|g| {
            let mut in_group = vec![false; r];
            for &m in &groups[g].members {
                in_group[m as usize] = true;
            }
            let bits: Vec<bool> = partition
                .labels
                .iter()
                .map(|&l| in_group[l as usize])
                .collect();
            BinaryMask::from_bits(w, h, &bits).expect("grid sized")
        })
        .collect()
}

/// Drops every mask whose IoU with an earlier kept mask exceeds `threshold`.
pub fn dedup_masks(masks: Vec<BinaryMask>, threshold: f64) -> Vec<BinaryMask> {
    let mut kept: Vec<BinaryMask> = Vec::with_capacity(masks.len());
    for m in masks {
        let duplicate = kept
            .iter()
            .any(|k| mask_iou(k, &m).expect("same grid") > threshold);
        if !duplicate {
            kept.push(m);
        }
    }
    kept
}

/// Nearest-neighbour upsampling, renumbered densely in row-major order.
fn upsample_partition(p: &Partition, width: usize, height: usize) -> Partition {
    if (p.width, p.height) == (width, height) {
        return p.clone();
    }
    let mut dense = vec![u32::MAX; p.num_regions];
    let mut next = 0u32;
    let mut labels = Vec::with_capacity(width * height);
    for y in 0..height {
        let sy = ((y as f64 + 0.5) * p.height as f64 / height as f64) as usize;
        for x in 0..width {
            let sx = ((x as f64 + 0.5) * p.width as f64 / width as f64) as usize;
            let l = p.labels[sy.min(p.height - 1) * p.width + sx.min(p.width - 1)] as usize;
            if dense[l] == u32::MAX {
                dense[l] = next;
                next += 1;
            }
            labels.push(dense[l]);
        }
    }
    Partition {
        width,
        height,
        labels,
        num_regions: next as usize,
    }
}

pub fn generate_proposals(
    image_id: &str,
    image: &RgbImage,
    config: &ProposerConfig,
) -> Result<ProposalPool> {
    config.validate()?;
    let (w, h) = image.dims();
    let mut masks = Vec::new();
    for &level in &config.pyramid {
        let lw = ((w as f64 * level).round() as usize).max(1);
        let lh = ((h as f64 * level).round() as usize).max(1);
        let small = if (lw, lh) == (w, h) {
            image.clone()
        } else {
            image.resized(lw, lh)?
        };
        let min_region_size = ((config.min_region_size as f64) * level * level).round() as usize;
        for &m in &config.scale_multipliers {
            let cfg = ProposerConfig {
                graph_scale: config.graph_scale * m,
                min_region_size,
                ..config.clone()
            };
            let partition = upsample_partition(&felzenszwalb_segment(&small, &cfg), w, h);
            masks.extend(hierarchical_merge(&partition, image, &cfg));
        }
    }
    let mut masks = dedup_masks(masks, config.dedup_iou);
    masks.truncate(config.max_proposals);
    ProposalPool::new(image_id, masks)
}

/// Pools for many images, computed in parallel and returned in input order.
pub fn generate_pools(
    images: &[(&str, &RgbImage)],
    config: &ProposerConfig,
) -> Result<Vec<ProposalPool>> {
    images
        .par_iter()
        .map(|(id, img)| generate_proposals(id, img, config))
        .collect()
}

pub fn proposals_file_name(image_id: &str) -> String {
    format!("{image_id}.proposals.json")
}

pub fn export_proposals(pool: &ProposalPool, path: &Path) -> Result<()> {
    let masks: Vec<&BinaryMask> = pool.segments.iter().map(|s| &s.mask).collect();
    let json = serde_json::to_string(&masks).map_err(|e| Error::parse(path, e))?;
    crate::datasets::write_atomic(path, json.as_bytes())
}

/// Reads a pool as-is (no deduplication). `expected_dims` checks every mask
/// against the owning image.
pub fn import_proposals(
    path: &Path,
    expected_dims: Option<(usize, usize)>,
) -> Result<ProposalPool> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let raw: Vec<serde_json::Value> =
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
    if raw.is_empty() {
        return Err(Error::EmptyPool);
    }
    let mut masks = Vec::with_capacity(raw.len());
    for (i, value) in raw.into_iter().enumerate() {
        let mask: BinaryMask = serde_json::from_value(value).map_err(|e| {
            let msg = e.to_string();
            if msg.starts_with("BadRLE") {
                Error::BadRle(format!("{}: mask {i}: {msg}", path.display()))
            } else {
                Error::parse(path, format!("mask {i}: {msg}"))
            }
        })?;
        if mask.is_empty() {
            return Err(Error::parse(path, format!("mask {i} is empty")));
        }
        if let Some(dims) = expected_dims {
            if mask.dims() != dims {
                return Err(Error::parse(
                    path,
                    format!(
                        "mask {i} is {}x{}, image is {}x{}",
                        mask.width(),
                        mask.height(),
                        dims.0,
                        dims.1
                    ),
                ));
            }
        }
        masks.push(mask);
    }
    let image_id = path
        .file_name()
        .and_then(|n| n.to_str())
        .map(|n| n.trim_end_matches(".proposals.json").to_string())
        .unwrap_or_default();
    ProposalPool::new(image_id, masks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_halves() -> RgbImage {
        RgbImage::from_fn(20, 12, |x, _| {
            if x < 10 {
                [0.9, 0.1, 0.1]
            } else {
                [0.1, 0.2, 0.8]
            }
        })
    }

    fn low_k() -> ProposerConfig {
        ProposerConfig {
            graph_scale: 0.05,
            smoothing: 0.0,
            min_region_size: 5,
            ..ProposerConfig::default()
        }
    }

    #[test]
    fn constant_image_is_one_region() {
        let img = RgbImage::filled(16, 9, [0.4, 0.4, 0.4]);
        let p = felzenszwalb_segment(&img, &ProposerConfig::default());
        assert_eq!(p.num_regions, 1);
        let pool = generate_proposals("c", &img, &ProposerConfig::default()).unwrap();
        assert_eq!(pool.len(), 1);
    }

    #[test]
    fn two_halves_split_exactly() {
        let img = two_halves();
        let p = felzenszwalb_segment(&img, &low_k());
        assert_eq!(p.num_regions, 2);
        for y in 0..12 {
            for x in 0..20 {
                let expect = u32::from(x >= 10);
                assert_eq!(p.labels[y * 20 + x], expect);
            }
        }
        assert_eq!(p.region_sizes().iter().sum::<usize>(), 240);
    }

    #[test]
    fn merge_levels_zero_returns_base_regions() {
        let img = two_halves();
        let cfg = ProposerConfig {
            merge_levels: 0,
            ..low_k()
        };
        let p = felzenszwalb_segment(&img, &cfg);
        let masks = hierarchical_merge(&p, &img, &cfg);
        assert_eq!(masks.len(), 2);
        assert!(masks.contains(&p.region_mask(0)));
        assert!(masks.contains(&p.region_mask(1)));
    }

    #[test]
    fn one_merge_level_on_halves_adds_full_image() {
        let img = two_halves();
        let cfg = ProposerConfig {
            merge_levels: 1,
            ..low_k()
        };
        let p = felzenszwalb_segment(&img, &cfg);
        let masks = hierarchical_merge(&p, &img, &cfg);
        assert_eq!(masks.len(), 3);
        assert_eq!(masks[0], BinaryMask::full(20, 12));
        assert!(masks.contains(&BinaryMask::from_predicate(20, 12, |x, _| x < 10)));
        assert!(masks.contains(&BinaryMask::from_predicate(20, 12, |x, _| x >= 10)));
    }

    #[test]
    fn max_proposals_caps_output() {
        let img = RgbImage::from_fn(32, 32, |x, y| {
            let v = ((x / 4 + y / 4) % 5) as f32 / 5.0;
            [v, 1.0 - v, (x % 7) as f32 / 7.0]
        });
        for max in [1, 3, 10] {
            let cfg = ProposerConfig {
                max_proposals: max,
                ..low_k()
            };
            let p = felzenszwalb_segment(&img, &cfg);
            assert!(hierarchical_merge(&p, &img, &cfg).len() <= max);
            assert!(generate_proposals("x", &img, &cfg).unwrap().len() <= max);
        }
    }

    #[test]
    fn pool_is_deduplicated_and_consistent() {
        let img = RgbImage::from_fn(32, 24, |x, y| {
            if (x as i32 - 12).pow(2) + (y as i32 - 12).pow(2) < 40 {
                [0.8, 0.2, 0.2]
            } else if x > 22 {
                [0.2, 0.7, 0.3]
            } else {
                [0.5, 0.5, 0.5]
            }
        });
        let cfg = ProposerConfig::default();
        let pool = generate_proposals("blob", &img, &cfg).unwrap();
        for (i, a) in pool.segments().iter().enumerate() {
            assert_eq!(a.id(), i);
            assert_eq!(*a.tight_box(), tight_bbox(a.mask()).unwrap());
            for b in &pool.segments()[i + 1..] {
                assert!(mask_iou(a.mask(), b.mask()).unwrap() <= cfg.dedup_iou);
            }
        }
        assert_eq!(pool, generate_proposals("blob", &img, &cfg).unwrap());
    }

    #[test]
    fn upsampled_partition_keeps_halves() {
        let img = two_halves();
        let small = img.resized(10, 6).unwrap();
        let p = felzenszwalb_segment(&small, &low_k());
        let up = upsample_partition(&p, 20, 12);
        assert_eq!(up.num_regions, 2);
        for y in 0..12 {
            for x in 0..20 {
                assert_eq!(up.labels[y * 20 + x], u32::from(x >= 10));
            }
        }
        // coarser levels only add boundary-shifted variants
        let single = ProposerConfig {
            pyramid: vec![1.0],
            ..low_k()
        };
        let multi = generate_proposals("h", &img, &low_k()).unwrap();
        let masks: Vec<&BinaryMask> = multi.segments().iter().map(|s| s.mask()).collect();
        let base = generate_proposals("h", &img, &single).unwrap();
        assert!(base.len() < multi.len());
        for s in base.segments() {
            assert!(masks.contains(&s.mask()));
        }
    }

    #[test]
    fn import_errors() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("a.proposals.json");
        fs::write(&empty, "[]").unwrap();
        assert!(matches!(
            import_proposals(&empty, None),
            Err(Error::EmptyPool)
        ));

        let bad = dir.path().join("b.proposals.json");
        fs::write(&bad, r#"[{"w":4,"h":4,"runs":[10,9]}]"#).unwrap();
        assert!(matches!(
            import_proposals(&bad, None),
            Err(Error::BadRle(_))
        ));

        let malformed = dir.path().join("c.proposals.json");
        fs::write(&malformed, "[\n{\"w\":4,\n\"h\":}]").unwrap();
        let err = import_proposals(&malformed, None).unwrap_err().to_string();
        assert!(
            err.contains("c.proposals.json") && err.contains("line 3"),
            "{err}"
        );

        let ok = dir.path().join("d.proposals.json");
        fs::write(&ok, r#"[{"w":4,"h":4,"runs":[0,3]}]"#).unwrap();
        assert!(import_proposals(&ok, Some((5, 4))).is_err());
        let pool = import_proposals(&ok, Some((4, 4))).unwrap();
        assert_eq!(pool.image_id(), "d");
    }

    #[test]
    fn export_import_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = two_halves();
        let pool = generate_proposals("halves", &img, &low_k()).unwrap();
        let path = dir.path().join(proposals_file_name("halves"));
        export_proposals(&pool, &path).unwrap();
        assert_eq!(import_proposals(&path, Some((20, 12))).unwrap(), pool);
    }
}
