use boxsup::assignment::{
    compose_supervision, painting_order, rank_candidates, select_candidates, BoxAnnotation,
    LossTables, RegressionRegion, SegmentLabeling, SelectionParams,
};
use boxsup::eval::{confusion, mean_iou, ConfusionMatrix};
use boxsup::geometry::{trimap_partition, BACKGROUND};
use boxsup::pixelnet::{lr_schedule, pixel_loss, ScoreMap};
use boxsup::proposals::ProposalPool;
use boxsup::{box_iou, mask_iou, tight_bbox, BinaryMask, LabelMap, PixelRect, IGNORE};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_pcg::Pcg32;

const W: usize = 12;
const H: usize = 10;

fn rect_in(w: u32, h: u32) -> impl Strategy<Value = PixelRect> {
    (0..w, 0..h, 1..=w, 1..=h).prop_map(move |(x, y, dw, dh)| {
        let x1 = (x + dw).min(w).max(x + 1);
        let y1 = (y + dh).min(h).max(y + 1);
        PixelRect::new(x, y, x1, y1).unwrap()
    })
}

fn bits(n: usize) -> impl Strategy<Value = Vec<bool>> {
    prop::collection::vec(any::<bool>(), n)
}

fn nonempty_mask(w: usize, h: usize) -> impl Strategy<Value = BinaryMask> {
    (bits(w * h), 0..w * h).prop_map(move |(mut b, i)| {
        b[i] = true;
        BinaryMask::from_bits(w, h, &b).unwrap()
    })
}

fn label_map(w: usize, h: usize, classes: u8) -> impl Strategy<Value = LabelMap> {
    prop::collection::vec(prop_oneof![9 => 0..classes, 1 => Just(IGNORE)], w * h)
        .prop_map(move |v| LabelMap::from_vec(w, h, v).unwrap())
}

fn box_ann(w: u32, h: u32) -> impl Strategy<Value = BoxAnnotation> {
    (rect_in(w, h), 1u8..4).prop_map(|(r, l)| BoxAnnotation::new(r, l).unwrap())
}

fn rect_pixels(r: &PixelRect) -> Vec<(u32, u32)> {
    (r.y0..r.y1)
        .flat_map(|y| (r.x0..r.x1).map(move |x| (x, y)))
        .collect()
}

/// Chebyshev distance from the centre of `(x, y)` to the nearest crack
/// between differing non-IGNORE 4-neighbours.
fn crack_distance(gt: &LabelMap, x: usize, y: usize) -> f64 {
    let (w, h) = gt.dims();
    let differs = |a: u8, b: u8| a != IGNORE && b != IGNORE && a != b;
    let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
    let mut best = f64::INFINITY;
    for cy in 0..h {
        for cx in 0..w {
            if cx + 1 < w && differs(gt.get(cx, cy), gt.get(cx + 1, cy)) {
                let dx = (px - (cx + 1) as f64).abs();
                let dy = (py - (cy as f64 + 0.5)).abs() - 0.5;
                best = best.min(dx.max(dy.max(0.0)));
            }
            if cy + 1 < h && differs(gt.get(cx, cy), gt.get(cx, cy + 1)) {
                let dy = (py - (cy + 1) as f64).abs();
                let dx = (px - (cx as f64 + 0.5)).abs() - 0.5;
                best = best.min(dy.max(dx.max(0.0)));
            }
        }
    }
    best
}

fn softmax_nll(scores: &ScoreMap<f32>, class: usize, idx: usize) -> f64 {
    let z: Vec<f64> = (0..scores.num_classes())
        .map(|c| f64::from(scores.score(c, idx)))
        .collect();
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    lse - z[class]
}

fn score_map(w: usize, h: usize, c: usize) -> impl Strategy<Value = ScoreMap<f32>> {
    prop::collection::vec(-4.0f32..4.0, w * h * c)
        .prop_map(move |d| ScoreMap::new(w, h, c, d).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn box_iou_counts_pixels(a in rect_in(20, 16), b in rect_in(20, 16)) {
        let pa = rect_pixels(&a);
        let pb = rect_pixels(&b);
        let inter = pa.iter().filter(|p| pb.contains(p)).count();
        let union = pa.len() + pb.len() - inter;
        prop_assert_eq!(box_iou(&a, &b), inter as f64 / union as f64);
        prop_assert_eq!(box_iou(&a, &b), box_iou(&b, &a));
        prop_assert_eq!(box_iou(&a, &a), 1.0);
    }

    #[test]
    fn mask_iou_counts_pixels(a in bits(W * H), b in bits(W * H)) {
        let ma = BinaryMask::from_bits(W, H, &a).unwrap();
        let mb = BinaryMask::from_bits(W, H, &b).unwrap();
        let inter = a.iter().zip(&b).filter(|(x, y)| **x && **y).count();
        let union = a.iter().zip(&b).filter(|(x, y)| **x || **y).count();
        let expected = if union == 0 { 0.0 } else { inter as f64 / union as f64 };
        prop_assert_eq!(mask_iou(&ma, &mb).unwrap(), expected);
        prop_assert_eq!(ma.intersection_area(&mb).unwrap(), inter as u64);
    }

    #[test]
    fn rle_round_trips(b in bits(W * H)) {
        let m = BinaryMask::from_bits(W, H, &b).unwrap();
        prop_assert_eq!(m.to_bits(), b.clone());
        prop_assert_eq!(m.area(), b.iter().filter(|v| **v).count() as u64);
        let runs = m.runs();
        prop_assert!(runs.iter().all(|&(_, l)| l > 0));
        prop_assert!(runs.windows(2).all(|p| p[0].0 + p[0].1 < p[1].0));
        let json = serde_json::to_string(&m).unwrap();
        prop_assert_eq!(serde_json::from_str::<BinaryMask>(&json).unwrap(), m);
    }

    #[test]
    fn tight_bbox_is_minimal(m in nonempty_mask(W, H)) {
        let r = tight_bbox(&m).unwrap();
        let on: Vec<(usize, usize)> = (0..H)
            .flat_map(|y| (0..W).map(move |x| (x, y)))
            .filter(|&(x, y)| m.contains(x, y))
            .collect();
        prop_assert_eq!(r.x0 as usize, on.iter().map(|p| p.0).min().unwrap());
        prop_assert_eq!(r.x1 as usize, on.iter().map(|p| p.0).max().unwrap() + 1);
        prop_assert_eq!(r.y0 as usize, on.iter().map(|p| p.1).min().unwrap());
        prop_assert_eq!(r.y1 as usize, on.iter().map(|p| p.1).max().unwrap() + 1);
    }

    #[test]
    fn trimap_matches_crack_distance(gt in label_map(W, H, 3), width in 0usize..5) {
        let t = trimap_partition(&gt, width);
        for y in 0..H {
            for x in 0..W {
                let valid = gt.get(x, y) != IGNORE;
                let in_band = valid && crack_distance(&gt, x, y) <= width as f64;
                prop_assert_eq!(t.boundary.contains(x, y), in_band, "({}, {})", x, y);
                prop_assert_eq!(t.interior.contains(x, y), valid && !in_band);
            }
        }
        let wider = trimap_partition(&gt, width + 1);
        prop_assert_eq!(
            t.boundary.intersection_area(&wider.boundary).unwrap(),
            t.boundary.area()
        );
    }

    #[test]
    fn trimap_regions_split_the_confusion(
        gt in label_map(W, H, 3),
        pred in label_map(W, H, 3),
        width in 1usize..4,
    ) {
        let pred = LabelMap::from_vec(
            W,
            H,
            pred.labels().iter().map(|&l| if l == IGNORE { 0 } else { l }).collect(),
        )
        .unwrap();
        let t = trimap_partition(&gt, width);
        let mut split = ConfusionMatrix::new(3);
        split.accumulate(&pred, &gt, Some(&t.boundary)).unwrap();
        let mut interior = ConfusionMatrix::new(3);
        interior.accumulate(&pred, &gt, Some(&t.interior)).unwrap();
        split.merge(&interior).unwrap();
        prop_assert_eq!(split, confusion(&[pred], &[gt], 3).unwrap());
    }

    #[test]
    fn mean_iou_bounds(gt in label_map(W, H, 4), pred in label_map(W, H, 4)) {
        let pred = LabelMap::from_vec(
            W,
            H,
            pred.labels().iter().map(|&l| if l == IGNORE { 1 } else { l }).collect(),
        )
        .unwrap();
        let conf = confusion(&[pred], &[gt.clone()], 4).unwrap();
        if conf.total() > 0 {
            let m = mean_iou(&conf).unwrap().mean;
            prop_assert!((0.0..=1.0).contains(&m));
        }
        let self_conf = confusion(&[gt.clone()], &[gt], 4).unwrap();
        if self_conf.total() > 0 {
            prop_assert_eq!(mean_iou(&self_conf).unwrap().mean, 1.0);
        }
    }

    #[test]
    fn regression_cost_matches_naive_sum(
        scores in score_map(W, H, 4),
        bx in box_ann(W as u32, H as u32),
        seg in nonempty_mask(W, H),
    ) {
        let pool = ProposalPool::new("p", vec![seg.clone()]).unwrap();
        let cand = &pool.segments()[0];
        let tables = LossTables::new(&scores, [bx.label]);
        let mut union = Vec::new();
        for idx in 0..W * H {
            let (x, y) = ((idx % W) as u32, (idx / W) as u32);
            if seg.contains_index(idx) {
                union.push(softmax_nll(&scores, bx.label as usize, idx));
            } else if bx.rect.contains(x, y) {
                union.push(softmax_nll(&scores, BACKGROUND as usize, idx));
            }
        }
        let naive_union = union.iter().sum::<f64>() / union.len() as f64;
        let naive_seg = seg.indices().map(|i| softmax_nll(&scores, bx.label as usize, i)).sum::<f64>()
            / seg.area() as f64;
        let got_union = tables.regression_cost(&bx, cand, RegressionRegion::BoxUnionSegment);
        let got_seg = tables.regression_cost(&bx, cand, RegressionRegion::SegmentOnly);
        prop_assert!((got_union - naive_union).abs() < 1e-5, "{} vs {}", got_union, naive_union);
        prop_assert!((got_seg - naive_seg).abs() < 1e-5, "{} vs {}", got_seg, naive_seg);
    }

    #[test]
    fn topk_selection_stays_in_top_k(
        scores in score_map(W, H, 4),
        bx in box_ann(W as u32, H as u32),
        masks in prop::collection::vec(nonempty_mask(W, H), 1..8),
        k in 1usize..4,
        lambda in 0.0f64..5.0,
        seed in any::<u64>(),
    ) {
        let pool = ProposalPool::new("p", masks).unwrap();
        let tables = LossTables::new(&scores, [bx.label]);
        let ranked = rank_candidates(&bx, &pool, Some(&tables), lambda, RegressionRegion::BoxUnionSegment);
        prop_assert_eq!(ranked.len(), pool.len());
        for c in &ranked {
            prop_assert!((0.0..=1.0).contains(&c.e_o));
            prop_assert!(c.e_r >= 0.0);
            prop_assert_eq!(c.combined, c.e_o + lambda * c.e_r);
        }
        let ordered = ranked.windows(2).all(|p| {
            p[0].combined < p[1].combined
                || (p[0].combined == p[1].combined && p[0].segment_id < p[1].segment_id)
        });
        prop_assert!(ordered);
        let params = SelectionParams { lambda, k, region: RegressionRegion::BoxUnionSegment };
        let mut rng = Pcg32::seed_from_u64(seed);
        let sel = select_candidates(&[bx], &pool, Some(&scores), params, &mut rng).unwrap();
        let top: Vec<usize> = ranked.iter().take(k).map(|c| c.segment_id).collect();
        prop_assert!(top.contains(&sel.selected[0]));
    }

    #[test]
    fn smaller_boxes_paint_last(
        boxes in prop::collection::vec(box_ann(W as u32, H as u32), 0..5),
        masks in prop::collection::vec(nonempty_mask(W, H), 5),
    ) {
        let pool = ProposalPool::new("p", masks).unwrap();
        let labeling = SegmentLabeling {
            selected: (0..boxes.len()).map(|i| pool.segments()[i].id()).collect(),
        };
        let map = compose_supervision(&labeling, &boxes, &pool, W, H).unwrap();
        let order = painting_order(&boxes);
        let mut sorted = order.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (0..boxes.len()).collect::<Vec<_>>());
        for idx in 0..W * H {
            // winner: smallest area, later list position on ties
            let winner = (0..boxes.len())
                .filter(|&i| pool.get(labeling.selected[i]).unwrap().mask().contains_index(idx))
                .min_by(|&a, &b| boxes[a].rect.area().cmp(&boxes[b].rect.area()).then(b.cmp(&a)));
            let expected = winner.map_or(BACKGROUND, |i| boxes[i].label);
            prop_assert_eq!(map.labels()[idx], expected);
        }
    }

    #[test]
    fn lr_schedule_steps(epoch in 0usize..100, every in 1usize..30, base in 1e-4f64..1.0) {
        let lr = lr_schedule(epoch, base, every, 0.1);
        let expected = base * 0.1f64.powi((epoch / every) as i32);
        prop_assert!((lr - expected).abs() <= 1e-15 * base);
        prop_assert!(lr_schedule(epoch + 1, base, every, 0.1) <= lr);
    }

    #[test]
    fn uniform_scores_cost_ln_c(gt in label_map(W, H, 4), c in 2usize..6) {
        let scores = ScoreMap::<f64>::constant(W, H, c.max(4), 0.0);
        let loss = pixel_loss(&scores, &gt).unwrap();
        if loss.counted > 0 {
            prop_assert!((loss.mean - (c.max(4) as f64).ln()).abs() < 1e-12);
        }
        let valid = gt.labels().iter().filter(|&&l| l != IGNORE).count();
        prop_assert_eq!(loss.counted, valid);
    }

    #[test]
    fn label_map_png_round_trip(gt in label_map(W, H, 4)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        boxsup::datasets::write_label_map(&path, &gt).unwrap();
        prop_assert_eq!(boxsup::datasets::read_label_map(&path, 4).unwrap(), gt);
    }
}
