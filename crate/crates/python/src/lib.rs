//! Python bindings. Configs cross the boundary as plain dicts using the same
//! field names as the TOML run config; rectangles are `(x0, y0, x1, y1)`
//! tuples with exclusive upper bounds.

use std::path::PathBuf;

use boxsup::assignment::{self, BoxAnnotation, RegressionRegion, SegmentLabeling, SelectionParams};
use boxsup::datasets::{self, AnnotationKind, Split, SynthConfig};
use boxsup::imaging::RgbImage;
use boxsup::pixelnet::{self, Checkpoint, ModelParams, NetConfig, ScoreMap};
use boxsup::proposals::{self, ProposalPool, ProposerConfig};
use boxsup::trainer::{self, EpochRecord, TrainConfig, TrainingSet};
use boxsup::{eval, geometry, rng, BinaryMask, LabelMap, PixelRect};
use pyo3::exceptions::{PyIOError, PyIndexError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;
use serde::de::DeserializeOwned;
use serde::Serialize;

type Rect = (u32, u32, u32, u32);

fn err(e: boxsup::Error) -> PyErr {
    match e {
        boxsup::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn rect(r: Rect) -> PyResult<PixelRect> {
    PixelRect::new(r.0, r.1, r.2, r.3).map_err(err)
}

fn tuple(r: &PixelRect) -> Rect {
    (r.x0, r.y0, r.x1, r.y1)
}

/// Deserializes a dict (or `None` for defaults) through its JSON form.
fn from_dict<T: DeserializeOwned + Default>(
    py: Python<'_>,
    obj: Option<&Bound<'_, PyAny>>,
) -> PyResult<T> {
    let Some(obj) = obj else {
        return Ok(T::default());
    };
    let text: String = py
        .import("json")?
        .call_method1("dumps", (obj,))?
        .extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Run-length encoded binary mask.
#[pyclass(name = "Mask", module = "boxsup", eq, frozen, skip_from_py_object)]
#[derive(Clone, PartialEq)]
struct PyMask(BinaryMask);

#[pymethods]
impl PyMask {
    /// `bits` is row-major, `width * height` truthy values.
    #[new]
    fn new(width: usize, height: usize, bits: Vec<bool>) -> PyResult<Self> {
        BinaryMask::from_bits(width, height, &bits)
            .map(Self)
            .map_err(err)
    }

    #[staticmethod]
    fn from_rect(width: usize, height: usize, rect: Rect) -> PyResult<Self> {
        Ok(Self(BinaryMask::from_rect(
            width,
            height,
            &self::rect(rect)?,
        )))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        serde_json::from_str(text)
            .map(Self)
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.0).expect("plain mask")
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    #[getter]
    fn area(&self) -> u64 {
        self.0.area()
    }

    fn contains(&self, x: usize, y: usize) -> bool {
        x < self.0.width() && y < self.0.height() && self.0.contains(x, y)
    }

    fn to_list(&self) -> Vec<bool> {
        self.0.to_bits()
    }

    /// `(start, length)` pairs over the row-major pixel index.
    fn runs(&self) -> Vec<(u32, u32)> {
        self.0.runs().to_vec()
    }

    fn __repr__(&self) -> String {
        format!(
            "Mask({}x{}, area={})",
            self.0.width(),
            self.0.height(),
            self.0.area()
        )
    }
}

/// Per-pixel class labels; 255 marks ignored pixels.
#[pyclass(name = "LabelMap", module = "boxsup", eq, frozen, skip_from_py_object)]
#[derive(Clone, PartialEq)]
struct PyLabelMap(LabelMap);

#[pymethods]
impl PyLabelMap {
    #[new]
    fn new(width: usize, height: usize, labels: Vec<u8>) -> PyResult<Self> {
        LabelMap::from_vec(width, height, labels)
            .map(Self)
            .map_err(err)
    }

    #[staticmethod]
    fn read_png(path: PathBuf, num_classes: usize) -> PyResult<Self> {
        datasets::read_label_map(&path, num_classes)
            .map(Self)
            .map_err(err)
    }

    fn write_png(&self, path: PathBuf) -> PyResult<()> {
        datasets::write_label_map(&path, &self.0).map_err(err)
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    fn get(&self, x: usize, y: usize) -> PyResult<u8> {
        if x >= self.0.width() || y >= self.0.height() {
            return Err(PyIndexError::new_err(format!("({x}, {y}) outside the map")));
        }
        Ok(self.0.get(x, y))
    }

    fn labels<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, self.0.labels())
    }

    fn mask_of(&self, label: u8) -> PyMask {
        PyMask(self.0.mask_of(label))
    }
}

/// RGB image with channel values in [0, 1], stored interleaved.
#[pyclass(name = "Image", module = "boxsup", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyImage(RgbImage);

#[pymethods]
impl PyImage {
    #[new]
    fn new(width: usize, height: usize, data: Vec<f32>) -> PyResult<Self> {
        RgbImage::new(width, height, data).map(Self).map_err(err)
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        datasets::read_image(&path).map(Self).map_err(err)
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    fn pixel(&self, x: usize, y: usize) -> PyResult<[f32; 3]> {
        if x >= self.0.width() || y >= self.0.height() {
            return Err(PyIndexError::new_err(format!(
                "({x}, {y}) outside the image"
            )));
        }
        Ok(self.0.pixel(x, y))
    }

    fn data(&self) -> Vec<f32> {
        self.0.data().to_vec()
    }
}

/// Candidate segments for one image; segment ids are list positions.
#[pyclass(name = "Pool", module = "boxsup", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyPool(ProposalPool);

#[pymethods]
impl PyPool {
    #[new]
    fn new(image_id: String, masks: Vec<PyRef<'_, PyMask>>) -> PyResult<Self> {
        let masks = masks.iter().map(|m| m.0.clone()).collect();
        ProposalPool::new(image_id, masks).map(Self).map_err(err)
    }

    /// Runs the built-in proposer; `config` overrides proposer defaults.
    #[staticmethod]
    #[pyo3(signature = (image_id, image, config=None))]
    fn generate(
        py: Python<'_>,
        image_id: &str,
        image: &PyImage,
        config: Option<&Bound<'_, PyAny>>,
    ) -> PyResult<Self> {
        let config: ProposerConfig = from_dict(py, config)?;
        let image = image.0.clone();
        let id = image_id.to_string();
        py.detach(move || proposals::generate_proposals(&id, &image, &config))
            .map(Self)
            .map_err(err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        proposals::import_proposals(&path, None)
            .map(Self)
            .map_err(err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        proposals::export_proposals(&self.0, &path).map_err(err)
    }

    #[getter]
    fn image_id(&self) -> &str {
        self.0.image_id()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn segment(&self, id: usize) -> PyResult<PyMask> {
        self.0
            .get(id)
            .map(|s| PyMask(s.mask().clone()))
            .ok_or_else(|| PyIndexError::new_err(format!("no segment {id}")))
    }

    fn tight_box(&self, id: usize) -> PyResult<Rect> {
        self.0
            .get(id)
            .map(|s| tuple(s.tight_box()))
            .ok_or_else(|| PyIndexError::new_err(format!("no segment {id}")))
    }
}

/// One annotated image.
#[pyclass(name = "Sample", module = "boxsup", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PySample(datasets::Sample);

#[pymethods]
impl PySample {
    #[getter]
    fn image_id(&self) -> &str {
        &self.0.image_id
    }

    #[getter]
    fn image(&self) -> PyImage {
        PyImage(self.0.image.clone())
    }

    #[getter]
    fn gt_mask(&self) -> Option<PyLabelMap> {
        self.0.gt_mask.clone().map(PyLabelMap)
    }

    /// `[(label, (x0, y0, x1, y1)), ...]`
    #[getter]
    fn boxes(&self) -> Vec<(u8, Rect)> {
        self.0
            .boxes
            .iter()
            .map(|b| (b.label, tuple(&b.rect)))
            .collect()
    }

    #[getter]
    fn instances(&self) -> Vec<(u8, PyMask)> {
        self.0
            .gt_instances
            .iter()
            .flatten()
            .map(|i| (i.label, PyMask(i.mask.clone())))
            .collect()
    }

    /// `"mask"` or `"box"`.
    #[getter]
    fn annotation(&self) -> &'static str {
        match self.0.annotation {
            AnnotationKind::Mask => "mask",
            AnnotationKind::Box => "box",
        }
    }
}

/// Class score map of a trained network, channel-major.
#[pyclass(name = "ScoreMap", module = "boxsup", frozen, skip_from_py_object)]
struct PyScoreMap(ScoreMap<f32>);

#[pymethods]
impl PyScoreMap {
    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.0.num_classes()
    }

    fn data(&self) -> Vec<f32> {
        self.0.data().to_vec()
    }

    fn argmax(&self) -> PyLabelMap {
        PyLabelMap(self.0.argmax())
    }
}

/// Trained network parameters with the config they belong to.
#[pyclass(name = "Model", module = "boxsup")]
struct PyModel {
    net: NetConfig,
    params: ModelParams<f32>,
    history: Vec<EpochRecord>,
}

#[pymethods]
impl PyModel {
    /// Trains on `samples`; `pools[i]` is required for box-annotated samples
    /// unless a static baseline is configured.
    #[staticmethod]
    #[pyo3(signature = (samples, pools=None, config=None, workers=1))]
    fn train(
        py: Python<'_>,
        samples: Vec<PyRef<'_, PySample>>,
        pools: Option<Vec<Option<PyRef<'_, PyPool>>>>,
        config: Option<&Bound<'_, PyAny>>,
        workers: usize,
    ) -> PyResult<Self> {
        let config: TrainConfig = from_dict(py, config)?;
        let samples: Vec<_> = samples.iter().map(|s| s.0.clone()).collect();
        let pools = match pools {
            Some(p) if p.len() != samples.len() => {
                return Err(PyValueError::new_err("one pool entry per sample required"))
            }
            Some(p) => p.iter().map(|p| p.as_ref().map(|p| p.0.clone())).collect(),
            None => vec![None; samples.len()],
        };
        let data = TrainingSet {
            samples,
            pools,
            num_classes: config.net.num_classes,
        };
        let (params, state) = py
            .detach(|| trainer::train_with(&data, &config, workers, |_| Ok(())))
            .map_err(err)?;
        Ok(Self {
            net: config.net,
            params,
            history: state.history,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let ckpt = pixelnet::load_checkpoint(&path).map_err(err)?;
        let history = ckpt
            .extra
            .as_ref()
            .and_then(|e| e.get("history"))
            .and_then(|h| serde_json::from_value(h.clone()).ok())
            .unwrap_or_default();
        Ok(Self {
            net: ckpt.config,
            params: ckpt.params,
            history,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        let ckpt = Checkpoint {
            config: self.net.clone(),
            epoch: self.history.len(),
            params: self.params.clone(),
            velocity: None,
            extra: Some(serde_json::json!({ "history": self.history })),
        };
        pixelnet::save_checkpoint(&path, &ckpt).map_err(err)
    }

    /// One dict per epoch: `epoch`, `lr`, `mean_loss`, `supervision_miou`.
    #[getter]
    fn history<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.history)
    }

    fn scores(&self, image: &PyImage) -> PyResult<PyScoreMap> {
        pixelnet::forward(&self.net, &self.params, &image.0)
            .map(PyScoreMap)
            .map_err(err)
    }

    #[pyo3(signature = (image, scales=vec![1.0]))]
    fn infer(&self, image: &PyImage, scales: Vec<f64>) -> PyResult<PyLabelMap> {
        trainer::infer(&self.net, &self.params, &image.0, &scales)
            .map(PyLabelMap)
            .map_err(err)
    }
}

/// Synthetic dataset as `(train, test)` sample lists.
#[pyfunction]
#[pyo3(signature = (config=None))]
fn synth(
    py: Python<'_>,
    config: Option<&Bound<'_, PyAny>>,
) -> PyResult<(Vec<PySample>, Vec<PySample>)> {
    let config: SynthConfig = from_dict(py, config)?;
    let all = datasets::synth_samples(&config).map_err(err)?;
    let (train, test): (Vec<_>, Vec<_>) = all.into_iter().partition(|(s, _)| *s == Split::Train);
    let wrap =
        |v: Vec<(Split, datasets::Sample)>| v.into_iter().map(|(_, s)| PySample(s)).collect();
    Ok((wrap(train), wrap(test)))
}

/// Samples of one split (`"train"` or `"test"`) from a manifest file.
#[pyfunction]
fn load_split(manifest: PathBuf, split: &str) -> PyResult<Vec<PySample>> {
    let split = match split {
        "train" => Split::Train,
        "test" => Split::Test,
        other => return Err(PyValueError::new_err(format!("unknown split {other:?}"))),
    };
    let dataset = datasets::load_dataset(&manifest).map_err(err)?;
    Ok(dataset.split(split).into_iter().map(PySample).collect())
}

#[pyfunction]
fn box_iou(a: Rect, b: Rect) -> PyResult<f64> {
    Ok(boxsup::box_iou(&rect(a)?, &rect(b)?))
}

#[pyfunction]
fn mask_iou(a: &PyMask, b: &PyMask) -> PyResult<f64> {
    boxsup::mask_iou(&a.0, &b.0).map_err(err)
}

#[pyfunction]
fn tight_bbox(mask: &PyMask) -> PyResult<Rect> {
    boxsup::tight_bbox(&mask.0).map(|r| tuple(&r)).map_err(err)
}

fn annotations(boxes: Vec<(u8, Rect)>) -> PyResult<Vec<BoxAnnotation>> {
    boxes
        .into_iter()
        .map(|(label, r)| BoxAnnotation::new(rect(r)?, label).map_err(err))
        .collect()
}

fn region(name: &str) -> PyResult<RegressionRegion> {
    match name {
        "box_union_segment" => Ok(RegressionRegion::BoxUnionSegment),
        "segment_only" => Ok(RegressionRegion::SegmentOnly),
        other => Err(PyValueError::new_err(format!("unknown region {other:?}"))),
    }
}

/// Selected segment id per box. `scores` is needed when `lam > 0`.
#[pyfunction]
#[pyo3(signature = (boxes, pool, lam=0.0, k=1, seed=0, scores=None, region="box_union_segment"))]
fn select_candidates(
    boxes: Vec<(u8, Rect)>,
    pool: &PyPool,
    lam: f64,
    k: usize,
    seed: u64,
    scores: Option<&PyScoreMap>,
    region: &str,
) -> PyResult<Vec<usize>> {
    let boxes = annotations(boxes)?;
    let params = SelectionParams {
        lambda: lam,
        k,
        region: self::region(region)?,
    };
    let mut r = rng::stream(seed, &[rng::STREAM_SELECT]);
    assignment::select_candidates(&boxes, &pool.0, scores.map(|s| &s.0), params, &mut r)
        .map(|l| l.selected)
        .map_err(err)
}

/// `(segment_id, e_o, e_r, combined)` for every candidate, cheapest first.
#[pyfunction]
#[pyo3(signature = (box_, pool, lam=0.0, scores=None, region="box_union_segment"))]
fn rank_candidates(
    box_: (u8, Rect),
    pool: &PyPool,
    lam: f64,
    scores: Option<&PyScoreMap>,
    region: &str,
) -> PyResult<Vec<(usize, f64, f64, f64)>> {
    let bx = annotations(vec![box_])?.remove(0);
    if lam != 0.0 && scores.is_none() {
        return Err(PyValueError::new_err(
            "regression cost needs scores when lam > 0",
        ));
    }
    let tables = scores.map(|s| assignment::LossTables::new(&s.0, [bx.label]));
    Ok(
        assignment::rank_candidates(&bx, &pool.0, tables.as_ref(), lam, self::region(region)?)
            .into_iter()
            .map(|c| (c.segment_id, c.e_o, c.e_r, c.combined))
            .collect(),
    )
}

/// Background canvas with each box's selected segment painted in its label.
#[pyfunction]
fn compose_supervision(
    selected: Vec<usize>,
    boxes: Vec<(u8, Rect)>,
    pool: &PyPool,
    width: usize,
    height: usize,
) -> PyResult<PyLabelMap> {
    let labeling = SegmentLabeling { selected };
    assignment::compose_supervision(&labeling, &annotations(boxes)?, &pool.0, width, height)
        .map(PyLabelMap)
        .map_err(err)
}

/// `(boundary, interior)` masks of the trimap band of width `band_width`.
#[pyfunction]
fn trimap_partition(gt: &PyLabelMap, band_width: usize) -> (PyMask, PyMask) {
    let t = geometry::trimap_partition(&gt.0, band_width);
    (PyMask(t.boundary), PyMask(t.interior))
}

fn maps(v: &[PyRef<'_, PyLabelMap>]) -> Vec<LabelMap> {
    v.iter().map(|m| m.0.clone()).collect()
}

/// `{"mean": .., "per_class": [..], "pixels": ..}`
#[pyfunction]
fn evaluate<'py>(
    py: Python<'py>,
    preds: Vec<PyRef<'py, PyLabelMap>>,
    gts: Vec<PyRef<'py, PyLabelMap>>,
    num_classes: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let report = eval::evaluate(&maps(&preds), &maps(&gts), num_classes).map_err(err)?;
    to_py(py, &report)
}

/// One `{"band_width", "boundary_miou", "interior_miou"}` dict per width.
#[pyfunction]
fn trimap_eval<'py>(
    py: Python<'py>,
    preds: Vec<PyRef<'py, PyLabelMap>>,
    gts: Vec<PyRef<'py, PyLabelMap>>,
    widths: Vec<usize>,
    num_classes: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let report =
        eval::trimap_eval(&maps(&preds), &maps(&gts), &widths, num_classes).map_err(err)?;
    to_py(py, &report.entries)
}

/// Finite-difference check of the network gradient; returns
/// `(max_rel_error, partials_checked)`.
#[pyfunction]
#[pyo3(signature = (trials=10, seed=0, net=None))]
fn gradcheck(
    py: Python<'_>,
    trials: usize,
    seed: u64,
    net: Option<&Bound<'_, PyAny>>,
) -> PyResult<(f64, usize)> {
    let net: NetConfig = from_dict(py, net)?;
    let g = py
        .detach(|| pixelnet::gradcheck_trials(&net, trials, seed))
        .map_err(err)?;
    Ok((g.max_rel_error, g.checked))
}

/// Runs the command-line interface with `argv` (without the program name)
/// and returns its exit code.
#[pyfunction]
fn run_cli(py: Python<'_>, argv: Vec<String>) -> i32 {
    let full = std::iter::once("boxsup".to_string()).chain(argv);
    py.detach(|| boxsup::cli::run(full))
}

#[pymodule]
fn _native(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("IGNORE", boxsup::IGNORE)?;
    m.add_class::<PyMask>()?;
    m.add_class::<PyLabelMap>()?;
    m.add_class::<PyImage>()?;
    m.add_class::<PyPool>()?;
    m.add_class::<PySample>()?;
    m.add_class::<PyScoreMap>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(load_split, m)?)?;
    m.add_function(wrap_pyfunction!(box_iou, m)?)?;
    m.add_function(wrap_pyfunction!(mask_iou, m)?)?;
    m.add_function(wrap_pyfunction!(tight_bbox, m)?)?;
    m.add_function(wrap_pyfunction!(select_candidates, m)?)?;
    m.add_function(wrap_pyfunction!(rank_candidates, m)?)?;
    m.add_function(wrap_pyfunction!(compose_supervision, m)?)?;
    m.add_function(wrap_pyfunction!(trimap_partition, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(trimap_eval, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
