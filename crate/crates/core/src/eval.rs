//! Segmentation metrics: confusion matrices, mean IoU, trimap boundary /
//! interior analysis, and report writers.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datasets::write_atomic;
use crate::error::{Error, Result};
use crate::geometry::{trimap_partition, BinaryMask, LabelMap, IGNORE};

pub const DEFAULT_TRIMAP_WIDTHS: [usize; 6] = [1, 2, 3, 5, 8, 12];

/// Pixel counts, rows = ground truth, columns = prediction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        Self {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.num_classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.num_classes != self.num_classes {
            return Err(Error::Shape(
                "confusion matrices differ in class count".into(),
            ));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// Counts non-IGNORE ground-truth pixels, restricted to `region` if given.
    /// Predictions outside the class range (including IGNORE) are errors.
    pub fn accumulate(
        &mut self,
        pred: &LabelMap,
        gt: &LabelMap,
        region: Option<&BinaryMask>,
    ) -> Result<()> {
        if pred.dims() != gt.dims() {
            return Err(Error::DimensionMismatch {
                expected: gt.dims(),
                actual: pred.dims(),
            });
        }
        if let Some(r) = region {
            if r.dims() != gt.dims() {
                return Err(Error::DimensionMismatch {
                    expected: gt.dims(),
                    actual: r.dims(),
                });
            }
        }
        let c = self.num_classes;
        let mut count = |i: usize| -> Result<()> {
            let g = gt.labels()[i];
            if g == IGNORE {
                return Ok(());
            }
            let p = pred.labels()[i];
            for label in [g, p] {
                if usize::from(label) >= c {
                    return Err(Error::LabelOutOfRange {
                        label,
                        num_classes: c,
                    });
                }
            }
            self.counts[usize::from(g) * c + usize::from(p)] += 1;
            Ok(())
        };
        match region {
            Some(r) => r.indices().try_for_each(&mut count),
            None => (0..gt.labels().len()).try_for_each(&mut count),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IouReport {
    /// `None` for classes absent from both ground truth and prediction.
    pub per_class: Vec<Option<f64>>,
    pub mean: f64,
    pub pixels: u64,
}

/// Per-class `TP / (TP + FP + FN)` and their unweighted mean over classes with
/// non-zero union.
pub fn mean_iou(conf: &ConfusionMatrix) -> Result<IouReport> {
    if conf.total() == 0 {
        return Err(Error::Shape("confusion matrix is empty".into()));
    }
    let c = conf.num_classes;
    let per_class: Vec<Option<f64>> = (0..c)
        .map(|k| {
            let tp = conf.get(k, k);
            let gt: u64 = (0..c).map(|j| conf.get(k, j)).sum();
            let pred: u64 = (0..c).map(|j| conf.get(j, k)).sum();
            let union = gt + pred - tp;
            (union > 0).then(|| tp as f64 / union as f64)
        })
        .collect();
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    Ok(IouReport {
        mean: present.iter().sum::<f64>() / present.len() as f64,
        per_class,
        pixels: conf.total(),
    })
}

pub fn evaluate(preds: &[LabelMap], gts: &[LabelMap], num_classes: usize) -> Result<IouReport> {
    mean_iou(&confusion(preds, gts, num_classes)?)
}

pub fn confusion(
    preds: &[LabelMap],
    gts: &[LabelMap],
    num_classes: usize,
) -> Result<ConfusionMatrix> {
    if preds.len() != gts.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} ground-truth maps",
            preds.len(),
            gts.len()
        )));
    }
    let mut conf = ConfusionMatrix::new(num_classes);
    for (p, g) in preds.iter().zip(gts) {
        conf.accumulate(p, g, None)?;
    }
    Ok(conf)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrimapEntry {
    pub band_width: usize,
    /// `None` when the band holds no evaluated pixels.
    pub boundary_miou: Option<f64>,
    pub interior_miou: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrimapReport {
    pub entries: Vec<TrimapEntry>,
}

pub fn trimap_eval(
    preds: &[LabelMap],
    gts: &[LabelMap],
    widths: &[usize],
    num_classes: usize,
) -> Result<TrimapReport> {
    if widths.is_empty() {
        return Err(Error::Config("trimap needs at least one band width".into()));
    }
    if widths.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(
            "trimap widths must be strictly increasing".into(),
        ));
    }
    if preds.len() != gts.len() {
        return Err(Error::Shape(
            "prediction and ground-truth counts differ".into(),
        ));
    }
    let entries = widths
        .iter()
        .map(|&width| {
            let mut boundary = ConfusionMatrix::new(num_classes);
            let mut interior = ConfusionMatrix::new(num_classes);
            for (p, g) in preds.iter().zip(gts) {
                let t = trimap_partition(g, width);
                boundary.accumulate(p, g, Some(&t.boundary))?;
                interior.accumulate(p, g, Some(&t.interior))?;
            }
            let miou = |c: &ConfusionMatrix| (c.total() > 0).then(|| mean_iou(c).map(|r| r.mean));
            Ok(TrimapEntry {
                band_width: width,
                boundary_miou: miou(&boundary).transpose()?,
                interior_miou: miou(&interior).transpose()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrimapReport { entries })
}

/// Mean IoU of supervision maps against ground truth.
pub fn supervision_quality(
    supervision: &[LabelMap],
    gt: &[LabelMap],
    num_classes: usize,
) -> Result<f64> {
    evaluate(supervision, gt, num_classes).map(|r| r.mean)
}

pub fn write_iou_report(dir: &Path, report: &IouReport) -> Result<()> {
    let json = serde_json::to_vec_pretty(report).expect("plain struct");
    write_atomic(&dir.join("report.json"), &json)?;
    let mut csv = String::from("class,iou\n");
    for (c, iou) in report.per_class.iter().enumerate() {
        let v = iou.map(|v| format!("{v:.6}")).unwrap_or_default();
        let _ = writeln!(csv, "{c},{v}");
    }
    let _ = writeln!(csv, "mean,{:.6}", report.mean);
    write_atomic(&dir.join("report.csv"), csv.as_bytes())
}

pub fn write_trimap_report(dir: &Path, report: &TrimapReport) -> Result<()> {
    let json = serde_json::to_vec_pretty(report).expect("plain struct");
    write_atomic(&dir.join("trimap.json"), &json)?;
    let cell = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
    let mut csv = String::from("band_width,boundary_miou,interior_miou\n");
    for e in &report.entries {
        let _ = writeln!(
            csv,
            "{},{},{}",
            e.band_width,
            cell(e.boundary_miou),
            cell(e.interior_miou)
        );
    }
    write_atomic(&dir.join("trimap.csv"), csv.as_bytes())?;
    write_atomic(&dir.join("trimap.svg"), trimap_svg(report).as_bytes())
}

/// Two-series line chart of boundary and interior mean IoU against band width.
pub fn trimap_svg(report: &TrimapReport) -> String {
    let (w, h, pad) = (480.0, 320.0, 40.0);
    let max_width = report
        .entries
        .iter()
        .map(|e| e.band_width)
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    let sx = |b: usize| pad + (w - 2.0 * pad) * b as f64 / max_width;
    let sy = |v: f64| h - pad - (h - 2.0 * pad) * v;
    let series = |pick: fn(&TrimapEntry) -> Option<f64>| -> String {
        report
            .entries
            .iter()
            .filter_map(|e| pick(e).map(|v| format!("{:.1},{:.1}", sx(e.band_width), sy(v))))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <line x1=\"{pad}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{b}\" stroke=\"black\"/>\n",
        b = h - pad,
        r = w - pad
    );
    let _ = writeln!(
        svg,
        "<polyline fill=\"none\" stroke=\"#d62728\" stroke-width=\"2\" points=\"{}\"/>",
        series(|e| e.boundary_miou)
    );
    let _ = writeln!(
        svg,
        "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"{}\"/>",
        series(|e| e.interior_miou)
    );
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"20\" font-size=\"12\">boundary (red) / interior (blue) mean IoU vs band width</text>",
        pad
    );
    for e in &report.entries {
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{}\" font-size=\"10\" text-anchor=\"middle\">{}</text>",
            sx(e.band_width),
            h - pad + 14.0,
            e.band_width
        );
    }
    svg.push_str("</svg>\n");
    svg
}
