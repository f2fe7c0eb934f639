//! Pixel-grid primitives: half-open rectangles, run-length binary masks,
//! label maps and the trimap band partition used by boundary evaluation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Label value excluded from every loss and metric.
pub const IGNORE: u8 = 255;

/// Label reserved for background.
pub const BACKGROUND: u8 = 0;

/// Axis-aligned box covering `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelRect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl PixelRect {
    pub fn new(x0: u32, y0: u32, x1: u32, y1: u32) -> Result<Self> {
        if x0 >= x1 || y0 >= y1 {
            return Err(Error::InvalidRect {
                x0: x0.into(),
                y0: y0.into(),
                x1: x1.into(),
                y1: y1.into(),
            });
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    pub fn width(&self) -> u32 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> u32 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> u64 {
        u64::from(self.width()) * u64::from(self.height())
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    pub fn intersection(&self, other: &PixelRect) -> Option<PixelRect> {
        let x0 = self.x0.max(other.x0);
        let y0 = self.y0.max(other.y0);
        let x1 = self.x1.min(other.x1);
        let y1 = self.y1.min(other.y1);
        (x0 < x1 && y0 < y1).then_some(PixelRect { x0, y0, x1, y1 })
    }

    pub fn fits_in(&self, width: usize, height: usize) -> bool {
        self.x0 < self.x1
            && self.y0 < self.y1
            && (self.x1 as usize) <= width
            && (self.y1 as usize) <= height
    }
}

/// Intersection-over-union of two rectangles in exact pixel counts.
pub fn box_iou(a: &PixelRect, b: &PixelRect) -> f64 {
    let inter = a.intersection(b).map_or(0, |r| r.area());
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}

/// Binary mask stored as row-major runs of foreground pixels.
///
/// Runs are kept canonical: sorted, non-empty, and separated by at least one
/// background pixel, so two masks with the same pixels compare equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RleJson", into = "RleJson")]
pub struct BinaryMask {
    width: usize,
    height: usize,
    runs: Vec<(u32, u32)>,
}

/// Wire form `{"w":int,"h":int,"runs":[start,len,...]}`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RleJson {
    w: usize,
    h: usize,
    runs: Vec<u64>,
}

impl TryFrom<RleJson> for BinaryMask {
    type Error = Error;

    fn try_from(json: RleJson) -> Result<Self> {
        if !json.runs.len().is_multiple_of(2) {
            return Err(Error::BadRle("odd number of run entries".into()));
        }
        let runs = json
            .runs
            .chunks_exact(2)
            .map(|pair| (pair[0], pair[1]))
            .collect::<Vec<_>>();
        BinaryMask::from_runs(json.w, json.h, &runs)
    }
}

impl From<BinaryMask> for RleJson {
    fn from(mask: BinaryMask) -> Self {
        RleJson {
            w: mask.width,
            h: mask.height,
            runs: mask
                .runs
                .iter()
                .flat_map(|&(s, l)| [u64::from(s), u64::from(l)])
                .collect(),
        }
    }
}

impl BinaryMask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            runs: Vec::new(),
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        let n = width * height;
        let runs = if n == 0 { vec![] } else { vec![(0, n as u32)] };
        Self {
            width,
            height,
            runs,
        }
    }

    /// Builds a mask from validated `(start, len)` runs. Runs must be sorted and
    /// non-overlapping; touching runs are coalesced.
    pub fn from_runs(width: usize, height: usize, runs: &[(u64, u64)]) -> Result<Self> {
        let total = (width as u64) * (height as u64);
        if total > u64::from(u32::MAX) {
            return Err(Error::BadRle(format!("{width}x{height} grid too large")));
        }
        let mut out: Vec<(u32, u32)> = Vec::with_capacity(runs.len());
        let mut cursor = 0u64;
        for (i, &(start, len)) in runs.iter().enumerate() {
            if len == 0 {
                return Err(Error::BadRle(format!("run {i} has zero length")));
            }
            if start < cursor {
                return Err(Error::BadRle(format!(
                    "run {i} starts at {start}, overlapping or out of order"
                )));
            }
            let end = start.saturating_add(len);
            if end > total {
                return Err(Error::BadRle(format!(
                    "run {i} ends at {end}, past the {total} pixels of a {width}x{height} mask"
                )));
            }
            match out.last_mut() {
                Some(last) if u64::from(last.0 + last.1) == start => last.1 += len as u32,
                _ => out.push((start as u32, len as u32)),
            }
            cursor = end;
        }
        Ok(Self {
            width,
            height,
            runs: out,
        })
    }

    pub fn from_bits(width: usize, height: usize, bits: &[bool]) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::Shape(format!(
                "{} bits for a {width}x{height} mask",
                bits.len()
            )));
        }
        let mut runs = Vec::new();
        let mut i = 0;
        while i < bits.len() {
            if bits[i] {
                let start = i;
                while i < bits.len() && bits[i] {
                    i += 1;
                }
                runs.push((start as u32, (i - start) as u32));
            } else {
                i += 1;
            }
        }
        Ok(Self {
            width,
            height,
            runs,
        })
    }

    pub fn from_predicate(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let bits: Vec<bool> = (0..width * height)
            .map(|i| f(i % width, i / width))
            .collect();
        Self::from_bits(width, height, &bits).expect("bit count matches grid")
    }

    pub fn from_rect(width: usize, height: usize, rect: &PixelRect) -> Self {
        Self::from_predicate(width, height, |x, y| rect.contains(x as u32, y as u32))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn runs(&self) -> &[(u32, u32)] {
        &self.runs
    }

    pub fn area(&self) -> u64 {
        self.runs.iter().map(|&(_, l)| u64::from(l)).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    pub fn contains_index(&self, idx: usize) -> bool {
        let idx = idx as u32;
        match self.runs.binary_search_by(|&(s, _)| s.cmp(&idx)) {
            Ok(_) => true,
            Err(0) => false,
            Err(pos) => {
                let (s, l) = self.runs[pos - 1];
                idx < s + l
            }
        }
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x < self.width && y < self.height && self.contains_index(y * self.width + x)
    }

    /// Row-major indices of foreground pixels.
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.runs
            .iter()
            .flat_map(|&(s, l)| (s as usize)..(s as usize + l as usize))
    }

    pub fn to_bits(&self) -> Vec<bool> {
        let mut bits = vec![false; self.width * self.height];
        for i in self.indices() {
            bits[i] = true;
        }
        bits
    }

    /// Number of pixels set in both masks, by merging the two run lists.
    pub fn intersection_area(&self, other: &BinaryMask) -> Result<u64> {
        self.check_dims(other)?;
        let (mut i, mut j) = (0, 0);
        let mut total = 0u64;
        while i < self.runs.len() && j < other.runs.len() {
            let (a0, al) = self.runs[i];
            let (b0, bl) = other.runs[j];
            let (a1, b1) = (a0 + al, b0 + bl);
            let lo = a0.max(b0);
            let hi = a1.min(b1);
            if lo < hi {
                total += u64::from(hi - lo);
            }
            if a1 <= b1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        Ok(total)
    }

    fn check_dims(&self, other: &BinaryMask) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                actual: other.dims(),
            });
        }
        Ok(())
    }
}

/// Smallest rectangle covering every foreground pixel.
pub fn tight_bbox(mask: &BinaryMask) -> Result<PixelRect> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let w = mask.width;
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for &(s, l) in &mask.runs {
        let (s, e) = (s as usize, (s + l) as usize - 1);
        let (ys, ye) = (s / w, e / w);
        y0 = y0.min(ys);
        y1 = y1.max(ye + 1);
        if ys == ye {
            x0 = x0.min(s % w);
            x1 = x1.max(e % w + 1);
        } else {
            // a run spanning rows touches both the last and first column
            x0 = 0;
            x1 = w;
        }
    }
    Ok(PixelRect {
        x0: x0 as u32,
        y0: y0 as u32,
        x1: x1 as u32,
        y1: y1 as u32,
    })
}

/// Pixelwise intersection over union; two empty masks score 1.0.
pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    let inter = a.intersection_area(b)?;
    let union = a.area() + b.area() - inter;
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Per-pixel class labels with [`IGNORE`] as a sentinel.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<u8>,
}

impl LabelMap {
    pub fn filled(width: usize, height: usize, label: u8) -> Self {
        Self {
            width,
            height,
            labels: vec![label; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::Shape(format!(
                "{} labels for a {width}x{height} map",
                labels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn labels_mut(&mut self) -> &mut [u8] {
        &mut self.labels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, label: u8) {
        self.labels[y * self.width + x] = label;
    }

    /// Paints every foreground pixel of `mask` with `label`.
    pub fn paint(&mut self, mask: &BinaryMask, label: u8) -> Result<()> {
        if mask.dims() != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                actual: mask.dims(),
            });
        }
        for &(s, l) in mask.runs() {
            self.labels[s as usize..(s + l) as usize].fill(label);
        }
        Ok(())
    }

    pub fn paint_rect(&mut self, rect: &PixelRect, label: u8) {
        let x1 = (rect.x1 as usize).min(self.width);
        let y1 = (rect.y1 as usize).min(self.height);
        for y in rect.y0 as usize..y1 {
            let row = y * self.width;
            self.labels[row + rect.x0 as usize..row + x1].fill(label);
        }
    }

    /// Mask of pixels carrying exactly `label`.
    pub fn mask_of(&self, label: u8) -> BinaryMask {
        let bits: Vec<bool> = self.labels.iter().map(|&l| l == label).collect();
        BinaryMask::from_bits(self.width, self.height, &bits).expect("bit count matches grid")
    }
}

/// Boundary band and interior of a ground-truth map at one band width.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrimapPartition {
    pub boundary: BinaryMask,
    pub interior: BinaryMask,
    pub band_width: usize,
}

/// Splits the non-IGNORE pixels of `gt` into a band around label transitions
/// and the remaining interior.
///
/// A transition is the edge (crack) shared by two 4-adjacent non-IGNORE
/// pixels with different labels. A pixel belongs to the band of width `w`
/// when the Chebyshev distance from its centre to some transition is at most
/// `w`. Width 0 yields an empty band.
pub fn trimap_partition(gt: &LabelMap, band_width: usize) -> TrimapPartition {
    let (w, h) = gt.dims();
    let labels = gt.labels();
    let differs =
        |a: usize, b: usize| labels[a] != IGNORE && labels[b] != IGNORE && labels[a] != labels[b];
    let mut band = vec![false; w * h];
    if band_width > 0 {
        // crack right of (x, y) and crack below (x, y)
        let mut right = vec![false; w * h];
        let mut below = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                right[i] = x + 1 < w && differs(i, i + 1);
                below[i] = y + 1 < h && differs(i, i + w);
            }
        }
        let r = band_width;
        // A crack right of column x lies within r of centres in columns
        // x+1-r ..= x+r and rows y-r ..= y+r; cracks below are the transpose.
        let a = dilate_window(&right, w, h, (r, r - 1), (r, r));
        let b = dilate_window(&below, w, h, (r, r), (r, r - 1));
        for i in 0..w * h {
            band[i] = a[i] || b[i];
        }
    }
    let valid = |i: usize| labels[i] != IGNORE;
    let boundary: Vec<bool> = (0..w * h).map(|i| valid(i) && band[i]).collect();
    let interior: Vec<bool> = (0..w * h).map(|i| valid(i) && !band[i]).collect();
    TrimapPartition {
        boundary: BinaryMask::from_bits(w, h, &boundary).expect("grid sized"),
        interior: BinaryMask::from_bits(w, h, &interior).expect("grid sized"),
        band_width,
    }
}

/// `out[x, y]` is set when some seed lies at `(x + dx, y + dy)` with
/// `-before <= d <= after` per axis, given as `(before, after)`.
fn dilate_window(
    bits: &[bool],
    w: usize,
    h: usize,
    (xb, xa): (usize, usize),
    (yb, ya): (usize, usize),
) -> Vec<bool> {
    let mut horiz = vec![false; w * h];
    for y in 0..h {
        let row = &bits[y * w..(y + 1) * w];
        for x in 0..w {
            let lo = x.saturating_sub(xb);
            let hi = (x + xa).min(w - 1);
            horiz[y * w + x] = row[lo..=hi].iter().any(|&b| b);
        }
    }
    let mut out = vec![false; w * h];
    for y in 0..h {
        let lo = y.saturating_sub(yb);
        let hi = (y + ya).min(h - 1);
        for x in 0..w {
            out[y * w + x] = (lo..=hi).any(|yy| horiz[yy * w + x]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_box_iou(a: &PixelRect, b: &PixelRect) -> f64 {
        let (mut inter, mut union) = (0u64, 0u64);
        for y in 0..64 {
            for x in 0..64 {
                let (ia, ib) = (a.contains(x, y), b.contains(x, y));
                inter += u64::from(ia && ib);
                union += u64::from(ia || ib);
            }
        }
        inter as f64 / union as f64
    }

    #[test]
    fn box_iou_cases() {
        let a = PixelRect::new(0, 0, 10, 10).unwrap();
        assert_eq!(box_iou(&a, &a), 1.0);
        let far = PixelRect::new(20, 20, 30, 30).unwrap();
        assert_eq!(box_iou(&a, &far), 0.0);
        let b = PixelRect::new(5, 0, 15, 10).unwrap();
        assert_eq!(box_iou(&a, &b), brute_box_iou(&a, &b));
        assert!((box_iou(&a, &b) - 50.0 / 150.0).abs() < 1e-15);
    }

    #[test]
    fn rect_rejects_degenerate() {
        assert!(PixelRect::new(3, 0, 3, 5).is_err());
        assert!(PixelRect::new(0, 4, 2, 1).is_err());
    }

    #[test]
    fn tight_bbox_cases() {
        let full = BinaryMask::full(7, 5);
        assert_eq!(
            tight_bbox(&full).unwrap(),
            PixelRect::new(0, 0, 7, 5).unwrap()
        );

        let single = BinaryMask::from_predicate(10, 10, |x, y| x == 3 && y == 4);
        assert_eq!(
            tight_bbox(&single).unwrap(),
            PixelRect::new(3, 4, 4, 5).unwrap()
        );

        assert!(matches!(
            tight_bbox(&BinaryMask::empty(4, 4)),
            Err(Error::EmptyMask)
        ));
    }

    #[test]
    fn tight_bbox_l_shape_matches_scan() {
        let l = BinaryMask::from_predicate(12, 9, |x, y| {
            (x == 2 && (1..7).contains(&y)) || (y == 6 && (2..9).contains(&x))
        });
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for y in 0..9 {
            for x in 0..12 {
                if l.contains(x, y) {
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x + 1);
                    y1 = y1.max(y + 1);
                }
            }
        }
        let expect = PixelRect::new(x0 as u32, y0 as u32, x1 as u32, y1 as u32).unwrap();
        assert_eq!(tight_bbox(&l).unwrap(), expect);
        assert_eq!(expect, PixelRect::new(2, 1, 9, 7).unwrap());
    }

    #[test]
    fn tight_bbox_of_row_wrapping_run() {
        // pixels (6,0),(7,0),(0,1),(1,1) form one run on an 8-wide grid
        let m = BinaryMask::from_runs(8, 3, &[(6, 4)]).unwrap();
        assert_eq!(tight_bbox(&m).unwrap(), PixelRect::new(0, 0, 8, 2).unwrap());
        let m = BinaryMask::from_runs(8, 3, &[(5, 2)]).unwrap();
        assert_eq!(tight_bbox(&m).unwrap(), PixelRect::new(5, 0, 7, 1).unwrap());
    }

    #[test]
    fn mask_iou_cases() {
        let a = BinaryMask::from_predicate(8, 8, |x, _| x < 4);
        let b = BinaryMask::from_predicate(8, 8, |x, _| x >= 4);
        assert_eq!(mask_iou(&a, &a).unwrap(), 1.0);
        assert_eq!(mask_iou(&a, &b).unwrap(), 0.0);
        let e = BinaryMask::empty(8, 8);
        assert_eq!(mask_iou(&e, &e).unwrap(), 1.0);
        assert!(matches!(
            mask_iou(&a, &BinaryMask::empty(8, 7)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rle_validation() {
        assert!(matches!(
            BinaryMask::from_runs(4, 4, &[(10, 7)]),
            Err(Error::BadRle(_))
        ));
        assert!(matches!(
            BinaryMask::from_runs(4, 4, &[(5, 3), (6, 1)]),
            Err(Error::BadRle(_))
        ));
        assert!(BinaryMask::from_runs(4, 4, &[(2, 0)]).is_err());
        let m = BinaryMask::from_runs(4, 4, &[(1, 2), (3, 2)]).unwrap();
        assert_eq!(m.runs(), &[(1, 4)]);
    }

    #[test]
    fn rle_json_wire_format() {
        let m = BinaryMask::from_runs(4, 3, &[(1, 2), (7, 3)]).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, r#"{"w":4,"h":3,"runs":[1,2,7,3]}"#);
        let back: BinaryMask = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<BinaryMask>(r#"{"w":2,"h":2,"runs":[0,5]}"#).is_err());
        assert!(serde_json::from_str::<BinaryMask>(r#"{"w":2,"h":2,"runs":[0]}"#).is_err());
    }

    #[test]
    fn trimap_degenerate_widths() {
        let uniform = LabelMap::filled(6, 6, 2);
        let t = trimap_partition(&uniform, 3);
        assert!(t.boundary.is_empty());
        assert_eq!(t.interior.area(), 36);

        let split =
            LabelMap::from_vec(8, 8, (0..64).map(|i| u8::from(i % 8 >= 4)).collect()).unwrap();
        let t0 = trimap_partition(&split, 0);
        assert!(t0.boundary.is_empty());
        assert_eq!(t0.interior.area(), 64);
    }

    /// Distance from a pixel centre to the nearest label edge (crack between
    /// 4-adjacent pixels of different labels), Chebyshev metric, by exhaustive
    /// search over every crack.
    fn crack_distance(gt: &LabelMap, px: usize, py: usize) -> f64 {
        let (w, h) = gt.dims();
        let mut best = f64::INFINITY;
        let cx = px as f64 + 0.5;
        let cy = py as f64 + 0.5;
        for y in 0..h {
            for x in 0..w {
                let l = gt.get(x, y);
                if l == IGNORE {
                    continue;
                }
                if x + 1 < w && gt.get(x + 1, y) != l && gt.get(x + 1, y) != IGNORE {
                    // vertical crack segment at x+1, spanning [y, y+1]
                    let dx = (cx - (x + 1) as f64).abs();
                    let dy = (cy - (y as f64 + 0.5)).abs() - 0.5;
                    best = best.min(dx.max(dy.max(0.0)));
                }
                if y + 1 < h && gt.get(x, y + 1) != l && gt.get(x, y + 1) != IGNORE {
                    let dy = (cy - (y + 1) as f64).abs();
                    let dx = (cx - (x as f64 + 0.5)).abs() - 0.5;
                    best = best.min(dy.max(dx.max(0.0)));
                }
            }
        }
        best
    }

    #[test]
    fn trimap_split_map_band_is_columns_three_and_four() {
        let split =
            LabelMap::from_vec(8, 8, (0..64).map(|i| u8::from(i % 8 >= 4)).collect()).unwrap();
        let t = trimap_partition(&split, 1);
        for y in 0..8 {
            for x in 0..8 {
                let oracle = crack_distance(&split, x, y) <= 1.0;
                assert_eq!(t.boundary.contains(x, y), oracle, "({x},{y})");
                assert_eq!(t.boundary.contains(x, y), x == 3 || x == 4);
            }
        }
    }

    #[test]
    fn trimap_matches_crack_distance_on_blobs() {
        // two overlapping blobs plus an IGNORE stripe
        let gt = LabelMap::from_vec(
            14,
            11,
            (0..14 * 11)
                .map(|i| {
                    let (x, y) = (i % 14, i / 14);
                    if y == 9 {
                        IGNORE
                    } else if (x as i32 - 4).pow(2) + (y as i32 - 4).pow(2) <= 9 {
                        1
                    } else if (7..12).contains(&x) && (2..8).contains(&y) {
                        2
                    } else {
                        0
                    }
                })
                .collect(),
        )
        .unwrap();
        for width in 1..6 {
            let t = trimap_partition(&gt, width);
            for y in 0..11 {
                for x in 0..14 {
                    if gt.get(x, y) == IGNORE {
                        assert!(!t.boundary.contains(x, y) && !t.interior.contains(x, y));
                        continue;
                    }
                    let oracle = crack_distance(&gt, x, y) <= width as f64;
                    assert_eq!(t.boundary.contains(x, y), oracle, "w={width} ({x},{y})");
                    assert_eq!(t.interior.contains(x, y), !oracle);
                }
            }
        }
    }
}
