//! Label update: pick one candidate segment per ground-truth box and paint
//! the selected segments into a per-pixel supervision map.
//!
//! A candidate `S` for box `B` costs `e_o + λ·e_r` where
//! `e_o = 1 − IoU(B, tight_box(S))` when the hypothesised label matches the
//! box label (zero otherwise), and `e_r` is the network's mean cross-entropy
//! against the labeling "box class on `S`, background on `B ∖ S`".

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::{AnnotationKind, Sample};
use crate::error::{Error, Result};
use crate::geometry::{box_iou, LabelMap, PixelRect, BACKGROUND, IGNORE};
use crate::pixelnet::ScoreMap;
use crate::proposals::{CandidateSegment, ProposalPool};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "BoxLine", into = "BoxLine")]
pub struct BoxAnnotation {
    pub rect: PixelRect,
    pub label: u8,
}

/// One line of a boxes file: `{"label":1,"x0":..,"y0":..,"x1":..,"y1":..}`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxLine {
    label: u8,
    x0: u32,
    y0: u32,
    x1: u32,
    y1: u32,
}

impl TryFrom<BoxLine> for BoxAnnotation {
    type Error = Error;

    fn try_from(l: BoxLine) -> Result<Self> {
        BoxAnnotation::new(PixelRect::new(l.x0, l.y0, l.x1, l.y1)?, l.label)
    }
}

impl From<BoxAnnotation> for BoxLine {
    fn from(b: BoxAnnotation) -> Self {
        BoxLine {
            label: b.label,
            x0: b.rect.x0,
            y0: b.rect.y0,
            x1: b.rect.x1,
            y1: b.rect.y1,
        }
    }
}

impl BoxAnnotation {
    pub fn new(rect: PixelRect, label: u8) -> Result<Self> {
        if label == BACKGROUND || label == IGNORE {
            return Err(Error::Dataset(format!(
                "box label {label} must be a foreground class"
            )));
        }
        Ok(Self { rect, label })
    }
}

/// Which pixels enter a candidate's regression cost.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressionRegion {
    SegmentOnly,
    #[default]
    BoxUnionSegment,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateCost {
    pub segment_id: usize,
    pub e_o: f64,
    pub e_r: f64,
    pub combined: f64,
}

/// Selected segment id per box (indexed like the image's box list).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SegmentLabeling {
    pub selected: Vec<usize>,
}

impl SegmentLabeling {
    /// `{"0": 12, "1": 3, ...}`, box index to segment id.
    pub fn to_json(&self) -> serde_json::Value {
        let map: BTreeMap<String, usize> = self
            .selected
            .iter()
            .enumerate()
            .map(|(i, &s)| (i.to_string(), s))
            .collect();
        serde_json::to_value(map).expect("plain map")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let bytes = serde_json::to_vec(&self.to_json()).expect("plain map");
        crate::datasets::write_atomic(path, &bytes)
    }
}

/// `(1 − IoU(box, tight_box(seg))) · δ(box.label, hypothesized_label)`.
pub fn overlap_cost(bx: &BoxAnnotation, seg: &CandidateSegment, hypothesized_label: u8) -> f64 {
    if bx.label != hypothesized_label {
        return 0.0;
    }
    1.0 - box_iou(&bx.rect, seg.tight_box())
}

/// Overlap objective of one box against a whole labelled pool, normalised by
/// the pool size.
pub fn pool_overlap_cost(bx: &BoxAnnotation, pool: &ProposalPool, labels: &[u8]) -> Result<f64> {
    if labels.len() != pool.len() {
        return Err(Error::Shape(format!(
            "{} labels for a pool of {}",
            labels.len(),
            pool.len()
        )));
    }
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let sum: f64 = pool
        .segments()
        .iter()
        .zip(labels)
        .map(|(s, &l)| overlap_cost(bx, s, l))
        .sum();
    Ok(sum / pool.len() as f64)
}

/// Per-pixel negative log-probabilities for background and each requested
/// class, plus a summed-area table of the background term.
pub struct LossTables {
    width: usize,
    background: Vec<f64>,
    background_integral: Vec<f64>,
    classes: BTreeMap<u8, Vec<f64>>,
}

impl LossTables {
    pub fn new(scores: &ScoreMap<f32>, labels: impl IntoIterator<Item = u8>) -> Self {
        let (w, h) = scores.dims();
        let background = scores.neg_log_prob(usize::from(BACKGROUND));
        let mut integral = vec![0.0; (w + 1) * (h + 1)];
        for y in 0..h {
            let mut row = 0.0;
            for x in 0..w {
                row += background[y * w + x];
                integral[(y + 1) * (w + 1) + x + 1] = integral[y * (w + 1) + x + 1] + row;
            }
        }
        let classes = labels
            .into_iter()
            .map(|l| (l, scores.neg_log_prob(usize::from(l))))
            .collect();
        Self {
            width: w,
            background,
            background_integral: integral,
            classes,
        }
    }

    fn background_sum(&self, r: &PixelRect) -> f64 {
        let s = self.width + 1;
        let (x0, y0, x1, y1) = (r.x0 as usize, r.y0 as usize, r.x1 as usize, r.y1 as usize);
        let t = &self.background_integral;
        t[y1 * s + x1] - t[y0 * s + x1] - t[y1 * s + x0] + t[y0 * s + x0]
    }

    /// Mean loss under "box label on `seg`, background on `box ∖ seg`".
    pub fn regression_cost(
        &self,
        bx: &BoxAnnotation,
        seg: &CandidateSegment,
        region: RegressionRegion,
    ) -> f64 {
        let fg = &self.classes[&bx.label];
        let mut seg_sum = 0.0;
        let mut overlap_bg = 0.0;
        let mut overlap = 0u64;
        for idx in seg.mask().indices() {
            seg_sum += fg[idx];
            let (x, y) = ((idx % self.width) as u32, (idx / self.width) as u32);
            if bx.rect.contains(x, y) {
                overlap_bg += self.background[idx];
                overlap += 1;
            }
        }
        match region {
            RegressionRegion::SegmentOnly => seg_sum / seg.area() as f64,
            RegressionRegion::BoxUnionSegment => {
                let union = bx.rect.area() + seg.area() - overlap;
                (seg_sum + self.background_sum(&bx.rect) - overlap_bg) / union as f64
            }
        }
    }
}

pub fn regression_cost(
    scores: &ScoreMap<f32>,
    bx: &BoxAnnotation,
    seg: &CandidateSegment,
    region: RegressionRegion,
) -> f64 {
    LossTables::new(scores, [bx.label]).regression_cost(bx, seg, region)
}

/// Costs of every candidate for one box, sorted ascending by combined cost
/// with ties going to the smaller segment id.
pub fn rank_candidates(
    bx: &BoxAnnotation,
    pool: &ProposalPool,
    tables: Option<&LossTables>,
    lambda: f64,
    region: RegressionRegion,
) -> Vec<CandidateCost> {
    let mut costs: Vec<CandidateCost> = pool
        .segments()
        .iter()
        .map(|seg| {
            let e_o = overlap_cost(bx, seg, bx.label);
            let e_r = match tables {
                Some(t) if lambda != 0.0 => t.regression_cost(bx, seg, region),
                _ => 0.0,
            };
            CandidateCost {
                segment_id: seg.id(),
                e_o,
                e_r,
                combined: e_o + lambda * e_r,
            }
        })
        .collect();
    costs.sort_by(|a, b| {
        a.combined
            .total_cmp(&b.combined)
            .then(a.segment_id.cmp(&b.segment_id))
    });
    costs
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionParams {
    pub lambda: f64,
    /// Sample uniformly among the `k` cheapest candidates; `k = 1` is
    /// winner-takes-all.
    pub k: usize,
    pub region: RegressionRegion,
}

/// Chooses one segment per box. `scores` may be omitted when `lambda` is 0.
pub fn select_candidates<R: Rng>(
    boxes: &[BoxAnnotation],
    pool: &ProposalPool,
    scores: Option<&ScoreMap<f32>>,
    params: SelectionParams,
    rng: &mut R,
) -> Result<SegmentLabeling> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    if params.k < 1 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let tables = match scores {
        Some(s) if params.lambda != 0.0 => {
            if s.dims() != pool.dims() {
                return Err(Error::DimensionMismatch {
                    expected: pool.dims(),
                    actual: s.dims(),
                });
            }
            Some(LossTables::new(s, boxes.iter().map(|b| b.label)))
        }
        None if params.lambda != 0.0 => {
            return Err(Error::Config(
                "regression cost needs a score map when lambda > 0".into(),
            ))
        }
        _ => None,
    };
    let selected = boxes
        .iter()
        .map(|bx| {
            let ranked = rank_candidates(bx, pool, tables.as_ref(), params.lambda, params.region);
            let top = params.k.min(ranked.len());
            let pick = if top == 1 {
                0
            } else {
                rng.random_range(0..top)
            };
            ranked[pick].segment_id
        })
        .collect();
    Ok(SegmentLabeling { selected })
}

/// Indices of `boxes` in painting order: larger area first, so smaller boxes
/// overwrite; equal areas keep list order.
pub fn painting_order(boxes: &[BoxAnnotation]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| {
        boxes[b]
            .rect
            .area()
            .cmp(&boxes[a].rect.area())
            .then(a.cmp(&b))
    });
    order
}

/// Background canvas with every selected segment painted in its box's label.
pub fn compose_supervision(
    labeling: &SegmentLabeling,
    boxes: &[BoxAnnotation],
    pool: &ProposalPool,
    width: usize,
    height: usize,
) -> Result<LabelMap> {
    if labeling.selected.len() != boxes.len() {
        return Err(Error::Shape(format!(
            "labeling covers {} of {} boxes",
            labeling.selected.len(),
            boxes.len()
        )));
    }
    let mut map = LabelMap::filled(width, height, BACKGROUND);
    for i in painting_order(boxes) {
        let seg = pool
            .get(labeling.selected[i])
            .ok_or_else(|| Error::Shape(format!("segment {} not in pool", labeling.selected[i])))?;
        map.paint(seg.mask(), boxes[i].label)?;
    }
    Ok(map)
}

/// Target for one sample: its ground-truth mask when it is mask-annotated,
/// otherwise the composition of the selected candidates.
pub fn training_target(
    sample: &Sample,
    kind: AnnotationKind,
    pool: Option<&ProposalPool>,
    labeling: Option<&SegmentLabeling>,
) -> Result<LabelMap> {
    let (w, h) = sample.image.dims();
    match kind {
        AnnotationKind::Mask => sample
            .gt_mask
            .clone()
            .ok_or_else(|| Error::Unsupervised(sample.image_id.clone())),
        AnnotationKind::Box if sample.boxes.is_empty() => Ok(LabelMap::filled(w, h, BACKGROUND)),
        AnnotationKind::Box => match (pool, labeling) {
            (Some(pool), Some(labeling)) => {
                compose_supervision(labeling, &sample.boxes, pool, w, h)
            }
            _ => Err(Error::Dataset(format!(
                "box-annotated sample {} has no candidate selection",
                sample.image_id
            ))),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BinaryMask;
    use crate::rng;

    fn rect(x0: u32, y0: u32, x1: u32, y1: u32) -> PixelRect {
        PixelRect::new(x0, y0, x1, y1).unwrap()
    }

    fn pool_of(rects: &[PixelRect], w: usize, h: usize) -> ProposalPool {
        ProposalPool::new(
            "t",
            rects
                .iter()
                .map(|r| BinaryMask::from_rect(w, h, r))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn overlap_cost_cases() {
        // box 10x10, segment box 7x10 inside it: IoU 0.7
        let bx = BoxAnnotation::new(rect(0, 0, 10, 10), 2).unwrap();
        let seg =
            CandidateSegment::new(0, BinaryMask::from_rect(16, 16, &rect(0, 0, 7, 10))).unwrap();
        assert!((overlap_cost(&bx, &seg, 2) - 0.3).abs() < 1e-12);
        assert_eq!(overlap_cost(&bx, &seg, 1), 0.0);
        let exact = CandidateSegment::new(1, BinaryMask::from_rect(16, 16, &bx.rect)).unwrap();
        assert_eq!(overlap_cost(&bx, &exact, 2), 0.0);
    }

    #[test]
    fn pool_overlap_is_mean() {
        let pool = pool_of(&[rect(0, 0, 10, 10), rect(0, 0, 7, 10)], 16, 16);
        let bx = BoxAnnotation::new(rect(0, 0, 10, 10), 1).unwrap();
        let e = pool_overlap_cost(&bx, &pool, &[1, 1]).unwrap();
        assert!((e - 0.15).abs() < 1e-12);
        assert_eq!(pool_overlap_cost(&bx, &pool, &[0, 3]).unwrap(), 0.0);
    }

    #[test]
    fn uniform_scores_cost_ln_c() {
        let scores = ScoreMap::<f32>::constant(16, 16, 4, 0.0);
        let bx = BoxAnnotation::new(rect(2, 2, 9, 9), 3).unwrap();
        for r in [rect(0, 0, 4, 4), rect(3, 3, 12, 14), rect(10, 10, 16, 16)] {
            let seg = CandidateSegment::new(0, BinaryMask::from_rect(16, 16, &r)).unwrap();
            for region in [
                RegressionRegion::SegmentOnly,
                RegressionRegion::BoxUnionSegment,
            ] {
                assert!((regression_cost(&scores, &bx, &seg, region) - 4f64.ln()).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn matching_one_hot_scores_drive_cost_to_zero() {
        let (w, h) = (12, 12);
        let seg_rect = rect(3, 3, 8, 8);
        let bx = BoxAnnotation::new(rect(2, 2, 9, 10), 1).unwrap();
        let seg = CandidateSegment::new(0, BinaryMask::from_rect(w, h, &seg_rect)).unwrap();
        let mut last = f64::INFINITY;
        for m in [1.0f32, 4.0, 16.0, 40.0] {
            let mut data = vec![0.0f32; 2 * w * h];
            for i in 0..w * h {
                let on = seg.mask().contains_index(i);
                data[usize::from(on) * w * h + i] = m;
            }
            let s = ScoreMap::new(w, h, 2, data).unwrap();
            let c = regression_cost(&s, &bx, &seg, RegressionRegion::BoxUnionSegment);
            assert!(c < last);
            last = c;
        }
        assert!(last < 1e-12);
    }

    #[test]
    fn select_with_single_candidate() {
        let pool = pool_of(&[rect(1, 1, 5, 5)], 8, 8);
        let bx = BoxAnnotation::new(rect(0, 0, 8, 8), 1).unwrap();
        let mut r = rng::stream(0, &[]);
        for k in [1, 5, 50] {
            let l = select_candidates(
                &[bx],
                &pool,
                None,
                SelectionParams {
                    lambda: 0.0,
                    k,
                    region: RegressionRegion::default(),
                },
                &mut r,
            )
            .unwrap();
            assert_eq!(l.selected, vec![0]);
        }
    }

    #[test]
    fn topk_samples_only_cheapest() {
        let rects: Vec<PixelRect> = (0..10).map(|i| rect(0, 0, 10 + i, 10)).collect();
        let pool = pool_of(&rects, 24, 24);
        let bx = BoxAnnotation::new(rect(0, 0, 10, 10), 1).unwrap();
        let mut r = rng::stream(5, &[]);
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..200 {
            let l = select_candidates(
                &[bx],
                &pool,
                None,
                SelectionParams {
                    lambda: 0.0,
                    k: 5,
                    region: RegressionRegion::default(),
                },
                &mut r,
            )
            .unwrap();
            seen.insert(l.selected[0]);
        }
        assert_eq!(seen, (0..5).collect());
    }

    #[test]
    fn compose_cases() {
        let (w, h) = (16, 16);
        let pool = pool_of(&[rect(0, 0, 10, 10), rect(6, 6, 14, 11)], w, h);
        assert_eq!(
            compose_supervision(&SegmentLabeling::default(), &[], &pool, w, h).unwrap(),
            LabelMap::filled(w, h, 0)
        );
        let big = BoxAnnotation::new(rect(0, 0, 10, 10), 1).unwrap(); // area 100
        let small = BoxAnnotation::new(rect(6, 6, 14, 11), 2).unwrap(); // area 40
                                                                        // list the small box first to show order comes from area, not position
        let boxes = [small, big];
        let map = compose_supervision(
            &SegmentLabeling {
                selected: vec![1, 0],
            },
            &boxes,
            &pool,
            w,
            h,
        )
        .unwrap();
        let mut oracle = LabelMap::filled(w, h, 0);
        oracle.paint_rect(&rect(0, 0, 10, 10), 1);
        oracle.paint_rect(&rect(6, 6, 14, 11), 2);
        assert_eq!(map, oracle);
        assert_eq!(map.get(7, 7), 2);
    }

    #[test]
    fn box_line_format() {
        let b = BoxAnnotation::new(rect(1, 2, 3, 4), 2).unwrap();
        let s = serde_json::to_string(&b).unwrap();
        assert_eq!(s, r#"{"label":2,"x0":1,"y0":2,"x1":3,"y1":4}"#);
        assert_eq!(serde_json::from_str::<BoxAnnotation>(&s).unwrap(), b);
        assert!(serde_json::from_str::<BoxAnnotation>(
            r#"{"label":0,"x0":1,"y0":2,"x1":3,"y1":4}"#
        )
        .is_err());
        assert!(serde_json::from_str::<BoxAnnotation>(
            r#"{"label":1,"x0":3,"y0":2,"x1":3,"y1":4}"#
        )
        .is_err());
    }

    #[test]
    fn labeling_json() {
        let l = SegmentLabeling {
            selected: vec![12, 3],
        };
        assert_eq!(l.to_json().to_string(), r#"{"0":12,"1":3}"#);
    }
}
