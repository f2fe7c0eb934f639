//! Alternating training: every epoch first re-estimates the supervision of
//! box-annotated samples from their candidate pools and the current network,
//! then runs one SGD pass over the whole training set.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::{
    compose_supervision, painting_order, select_candidates, training_target, RegressionRegion,
    SegmentLabeling, SelectionParams,
};
use crate::datasets::{AnnotationKind, Sample};
use crate::error::{Error, Result};
use crate::eval::supervision_quality;
use crate::geometry::{BinaryMask, LabelMap, PixelRect, BACKGROUND};
use crate::imaging::RgbImage;
use crate::pixelnet::{
    backward, forward, lr_schedule, sgd_step, GradientSet, ModelParams, NetConfig, ScoreMap,
};
use crate::proposals::ProposalPool;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupervisionMode {
    Mask,
    Box,
    Semi,
}

/// Fixed supervision for box-annotated samples instead of candidate selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    None,
    Rectangles,
    Colormodel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    TopkRandom,
    WinnerTakesAll,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight of the regression cost in candidate selection.
    pub lambda: f64,
    /// Candidates sampled from in top-k mode.
    pub k: usize,
    pub batch_size: usize,
    /// 45 at full scale; 20 is enough for the synthetic set.
    pub epochs: usize,
    pub base_lr: f64,
    pub lr_drop_every: usize,
    pub lr_drop_factor: f64,
    pub momentum: f64,
    pub supervision_mode: SupervisionMode,
    pub baseline: Baseline,
    pub sampling: Sampling,
    pub regression_region: RegressionRegion,
    pub colormodel_iterations: usize,
    /// Leading epochs that select by overlap alone, while the network is
    /// still too weak for its loss to rank candidates.
    pub overlap_only_epochs: usize,
    pub seed: u64,
    pub net: NetConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 3.0,
            k: 5,
            batch_size: 20,
            epochs: 20,
            base_lr: 0.001,
            lr_drop_every: 15,
            lr_drop_factor: 0.1,
            momentum: 0.9,
            supervision_mode: SupervisionMode::Box,
            baseline: Baseline::None,
            sampling: Sampling::TopkRandom,
            regression_region: RegressionRegion::BoxUnionSegment,
            colormodel_iterations: 5,
            overlap_only_epochs: 1,
            seed: 0,
            net: NetConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::Config("lambda must be non-negative".into()));
        }
        if self.k < 1 || self.batch_size < 1 {
            return Err(Error::Config("k and batch_size must be at least 1".into()));
        }
        if !(self.base_lr >= 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(
                "base_lr must be non-negative and momentum in [0, 1)".into(),
            ));
        }
        self.net.validate()
    }

    fn selection(&self, epoch: usize) -> SelectionParams {
        let lambda = if epoch < self.overlap_only_epochs {
            0.0
        } else {
            self.lambda
        };
        let k = match self.sampling {
            Sampling::TopkRandom => self.k,
            Sampling::WinnerTakesAll => 1,
        };
        SelectionParams {
            lambda,
            k,
            region: self.regression_region,
        }
    }
}

/// Training samples with the candidate pool of each (required for
/// box-annotated samples under candidate selection).
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub samples: Vec<Sample>,
    pub pools: Vec<Option<ProposalPool>>,
    pub num_classes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub mean_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub supervision_miou: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub params: ModelParams<f32>,
    pub velocity: ModelParams<f32>,
    /// Completed epochs.
    pub epoch: usize,
    pub supervision: Vec<LabelMap>,
    /// Latest selection per sample (`None` for mask-supervised or static).
    pub labelings: Vec<Option<SegmentLabeling>>,
    pub history: Vec<EpochRecord>,
}

fn effective_kind(mode: SupervisionMode, sample: &Sample) -> AnnotationKind {
    match mode {
        SupervisionMode::Mask => AnnotationKind::Mask,
        SupervisionMode::Box => AnnotationKind::Box,
        SupervisionMode::Semi => sample.annotation,
    }
}

pub struct Trainer<'a> {
    data: &'a TrainingSet,
    config: TrainConfig,
    kinds: Vec<AnnotationKind>,
    fixed: Vec<Option<LabelMap>>,
    pool: rayon::ThreadPool,
    state: TrainState,
}

impl<'a> Trainer<'a> {
    pub fn new(data: &'a TrainingSet, config: TrainConfig, workers: usize) -> Result<Self> {
        config.validate()?;
        if data.samples.is_empty() {
            return Err(Error::Dataset("training set is empty".into()));
        }
        if data.pools.len() != data.samples.len() {
            return Err(Error::Dataset("one pool slot per sample required".into()));
        }
        if config.net.num_classes != data.num_classes {
            return Err(Error::Config(format!(
                "network has {} classes, dataset {}",
                config.net.num_classes, data.num_classes
            )));
        }
        let kinds: Vec<AnnotationKind> = data
            .samples
            .iter()
            .map(|s| effective_kind(config.supervision_mode, s))
            .collect();
        if config.supervision_mode == SupervisionMode::Semi
            && !(kinds.contains(&AnnotationKind::Mask) && kinds.contains(&AnnotationKind::Box))
        {
            return Err(Error::Dataset(
                "semi-supervised mode needs both mask- and box-annotated samples".into(),
            ));
        }
        for ((s, kind), pool) in data.samples.iter().zip(&kinds).zip(&data.pools) {
            match kind {
                AnnotationKind::Mask if s.gt_mask.is_none() => {
                    return Err(Error::Unsupervised(s.image_id.clone()))
                }
                AnnotationKind::Box
                    if config.baseline == Baseline::None
                        && !s.boxes.is_empty()
                        && pool.is_none() =>
                {
                    return Err(Error::Dataset(format!(
                        "box-annotated sample {} has no proposal pool",
                        s.image_id
                    )))
                }
                _ => {}
            }
        }

        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;

        // supervision that never changes: ground-truth masks and static baselines
        let fixed = pool.install(|| {
            data.samples
                .par_iter()
                .zip(&kinds)
                .map(|(s, kind)| match (kind, config.baseline) {
                    (AnnotationKind::Mask, _) => training_target(s, *kind, None, None).map(Some),
                    (AnnotationKind::Box, Baseline::Rectangles) => Ok(Some(rectangles_target(s))),
                    (AnnotationKind::Box, Baseline::Colormodel) => {
                        colormodel_target(s, config.colormodel_iterations).map(Some)
                    }
                    (AnnotationKind::Box, Baseline::None) => Ok(None),
                })
                .collect::<Result<Vec<_>>>()
        })?;

        let params = ModelParams::init(&config.net)?;
        let velocity = ModelParams::zeros(&config.net);
        let n = data.samples.len();
        let state = TrainState {
            params,
            velocity,
            epoch: 0,
            supervision: data
                .samples
                .iter()
                .map(|s| LabelMap::filled(s.image.width(), s.image.height(), BACKGROUND))
                .collect(),
            labelings: vec![None; n],
            history: Vec::new(),
        };
        Ok(Self {
            data,
            config,
            kinds,
            fixed,
            pool,
            state,
        })
    }

    /// Continues from saved parameters, momentum and history. Later epochs
    /// match an uninterrupted run because every random stream is keyed by
    /// `(seed, epoch, sample)`.
    pub fn resume(
        mut self,
        params: ModelParams<f32>,
        velocity: ModelParams<f32>,
        history: Vec<EpochRecord>,
    ) -> Result<Self> {
        if !params.same_shape(&self.state.params) || !velocity.same_shape(&self.state.params) {
            return Err(Error::Shape(
                "checkpoint does not match network config".into(),
            ));
        }
        self.state.epoch = history.len();
        self.state.params = params;
        self.state.velocity = velocity;
        self.state.history = history;
        Ok(self)
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn into_state(self) -> TrainState {
        self.state
    }

    pub fn is_done(&self) -> bool {
        self.state.epoch >= self.config.epochs
    }

    /// Label update for the current epoch.
    pub fn update_labels(&mut self) -> Result<()> {
        let epoch = self.state.epoch;
        let selection = self.config.selection(epoch);
        let (data, config, kinds, fixed, params) = (
            self.data,
            &self.config,
            &self.kinds,
            &self.fixed,
            &self.state.params,
        );
        let updated = self.pool.install(|| {
            (0..data.samples.len())
                .into_par_iter()
                .map(|i| {
                    if let Some(map) = &fixed[i] {
                        return Ok((map.clone(), None));
                    }
                    let s = &data.samples[i];
                    let Some(pool) = data.pools[i].as_ref().filter(|_| !s.boxes.is_empty()) else {
                        return training_target(s, kinds[i], None, None).map(|m| (m, None));
                    };
                    let scores = if selection.lambda != 0.0 {
                        Some(forward(&config.net, params, &s.image)?)
                    } else {
                        None
                    };
                    let mut r =
                        rng::stream(config.seed, &[rng::STREAM_SELECT, epoch as u64, i as u64]);
                    let labeling =
                        select_candidates(&s.boxes, pool, scores.as_ref(), selection, &mut r)?;
                    let (w, h) = s.image.dims();
                    let map = compose_supervision(&labeling, &s.boxes, pool, w, h)?;
                    Ok((map, Some(labeling)))
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let (maps, labelings): (Vec<_>, Vec<_>) = updated.into_iter().unzip();
        self.state.supervision = maps;
        self.state.labelings = labelings;
        Ok(())
    }

    /// One shuffled mini-batch SGD pass; returns the mean per-sample loss.
    pub fn update_network(&mut self) -> Result<(f64, f64)> {
        let epoch = self.state.epoch;
        let c = &self.config;
        let lr = lr_schedule(epoch, c.base_lr, c.lr_drop_every, c.lr_drop_factor);
        let mut order: Vec<usize> = (0..self.data.samples.len()).collect();
        order.shuffle(&mut rng::stream(
            c.seed,
            &[rng::STREAM_SHUFFLE, epoch as u64],
        ));

        let mut loss_sum = 0.0f64;
        for batch in order.chunks(c.batch_size) {
            let (data, net, params, targets) = (
                self.data,
                &c.net,
                &self.state.params,
                &self.state.supervision,
            );
            let results = self.pool.install(|| {
                batch
                    .par_iter()
                    .map(|&i| backward(net, params, &data.samples[i].image, &targets[i]))
                    .collect::<Result<Vec<_>>>()
            })?;
            let mut total: GradientSet<f32> = ModelParams::zeros(net);
            for (loss, g) in &results {
                if !loss.is_finite() {
                    return Err(Error::DivergedGradient);
                }
                loss_sum += f64::from(*loss);
                total.add_assign(g);
            }
            total.scale(1.0 / batch.len() as f32);
            sgd_step(
                &mut self.state.params,
                &total,
                lr,
                &mut self.state.velocity,
                c.momentum,
            )?;
        }
        Ok((lr, loss_sum / self.data.samples.len() as f64))
    }

    /// Quality of the current supervision against ground truth, over samples
    /// that carry a ground-truth mask.
    pub fn supervision_quality(&self) -> Result<Option<f64>> {
        let (sup, gt): (Vec<LabelMap>, Vec<LabelMap>) = self
            .data
            .samples
            .iter()
            .zip(&self.state.supervision)
            .filter_map(|(s, m)| s.gt_mask.clone().map(|g| (m.clone(), g)))
            .unzip();
        if gt.is_empty() {
            return Ok(None);
        }
        supervision_quality(&sup, &gt, self.data.num_classes).map(Some)
    }

    /// Label update followed by one network epoch.
    pub fn step_epoch(&mut self) -> Result<&EpochRecord> {
        self.update_labels()?;
        let quality = self.supervision_quality()?;
        let (lr, mean_loss) = self.update_network()?;
        if !mean_loss.is_finite() || !self.state.params.is_finite() {
            return Err(Error::DivergedGradient);
        }
        self.state.history.push(EpochRecord {
            epoch: self.state.epoch,
            lr,
            mean_loss,
            supervision_miou: quality,
        });
        self.state.epoch += 1;
        Ok(self.state.history.last().expect("just pushed"))
    }
}

/// Runs all epochs; `on_epoch` sees the state after each one.
pub fn train_with(
    data: &TrainingSet,
    config: &TrainConfig,
    workers: usize,
    mut on_epoch: impl FnMut(&TrainState) -> Result<()>,
) -> Result<(ModelParams<f32>, TrainState)> {
    let mut trainer = Trainer::new(data, config.clone(), workers)?;
    while !trainer.is_done() {
        trainer.step_epoch()?;
        on_epoch(trainer.state())?;
    }
    let state = trainer.into_state();
    Ok((state.params.clone(), state))
}

pub fn train(data: &TrainingSet, config: &TrainConfig) -> Result<(ModelParams<f32>, TrainState)> {
    train_with(data, config, 1, |_| Ok(()))
}

fn rectangles_target(sample: &Sample) -> LabelMap {
    let (w, h) = sample.image.dims();
    let mut map = LabelMap::filled(w, h, BACKGROUND);
    for i in painting_order(&sample.boxes) {
        map.paint_rect(&sample.boxes[i].rect, sample.boxes[i].label);
    }
    map
}

/// Every box filled with its label, smaller boxes painted over larger ones.
pub fn static_rectangles(samples: &[Sample]) -> Vec<LabelMap> {
    samples.iter().map(rectangles_target).collect()
}

fn mean_color(image: &RgbImage, pixels: impl Iterator<Item = usize>) -> Option<[f64; 3]> {
    let mut sum = [0.0f64; 3];
    let mut n = 0usize;
    for i in pixels {
        let p = image.pixel_at(i);
        for c in 0..3 {
            sum[c] += f64::from(p[c]);
        }
        n += 1;
    }
    (n > 0).then(|| sum.map(|s| s / n as f64))
}

fn dist2(p: [f32; 3], m: [f64; 3]) -> f64 {
    (0..3).map(|c| (f64::from(p[c]) - m[c]).powi(2)).sum()
}

/// Two-model colour segmentation inside one box: start with the whole box as
/// foreground, then alternate fitting mean colours and reassigning box pixels
/// to the nearer model. The result never leaves the box.
pub fn colormodel_mask(image: &RgbImage, rect: &PixelRect, iterations: usize) -> BinaryMask {
    let (w, h) = image.dims();
    let in_box: Vec<usize> = (rect.y0 as usize..rect.y1 as usize)
        .flat_map(|y| (rect.x0 as usize..rect.x1 as usize).map(move |x| y * w + x))
        .collect();
    let mut fg = vec![false; w * h];
    for &i in &in_box {
        fg[i] = true;
    }
    for _ in 0..iterations {
        let fg_mean = mean_color(image, (0..w * h).filter(|&i| fg[i]));
        let bg_mean = mean_color(image, (0..w * h).filter(|&i| !fg[i]));
        let (Some(fg_mean), Some(bg_mean)) = (fg_mean, bg_mean) else {
            break;
        };
        let next: Vec<bool> = in_box
            .iter()
            .map(|&i| {
                let p = image.pixel_at(i);
                dist2(p, fg_mean) < dist2(p, bg_mean)
            })
            .collect();
        if !next.iter().any(|&b| b) {
            break;
        }
        let mut changed = false;
        for (&i, &b) in in_box.iter().zip(&next) {
            changed |= fg[i] != b;
            fg[i] = b;
        }
        if !changed {
            break;
        }
    }
    BinaryMask::from_bits(w, h, &fg).expect("grid sized")
}

fn colormodel_target(sample: &Sample, iterations: usize) -> Result<LabelMap> {
    let (w, h) = sample.image.dims();
    let mut map = LabelMap::filled(w, h, BACKGROUND);
    for i in painting_order(&sample.boxes) {
        let b = &sample.boxes[i];
        map.paint(
            &colormodel_mask(&sample.image, &b.rect, iterations),
            b.label,
        )?;
    }
    Ok(map)
}

pub fn static_colormodel(samples: &[Sample], iterations: usize) -> Result<Vec<LabelMap>> {
    samples
        .par_iter()
        .map(|s| colormodel_target(s, iterations))
        .collect()
}

/// Scores averaged over rescaled copies of the image, each mapped back to the
/// original resolution.
pub fn infer_scores(
    net: &NetConfig,
    params: &ModelParams<f32>,
    image: &RgbImage,
    scales: &[f64],
) -> Result<ScoreMap<f32>> {
    if scales.is_empty() {
        return Err(Error::Config("inference needs at least one scale".into()));
    }
    let (w, h) = image.dims();
    let mut acc: Option<Vec<f32>> = None;
    for &s in scales {
        if !(s > 0.0) {
            return Err(Error::Config(format!("scale {s} must be positive")));
        }
        let sw = ((s * w as f64).round() as usize).max(1);
        let sh = ((s * h as f64).round() as usize).max(1);
        let scores = if (sw, sh) == (w, h) {
            forward(net, params, image)?
        } else {
            forward(net, params, &image.resized(sw, sh)?)?.resized(w, h)?
        };
        match acc.as_mut() {
            None => acc = Some(scores.data().to_vec()),
            Some(a) => a.iter_mut().zip(scores.data()).for_each(|(x, y)| *x += y),
        }
    }
    let inv = 1.0 / scales.len() as f32;
    let data = acc
        .expect("non-empty")
        .into_iter()
        .map(|v| v * inv)
        .collect();
    ScoreMap::new(w, h, net.num_classes, data)
}

/// Per-pixel argmax of the multi-scale average (ties to the lower class).
pub fn infer(
    net: &NetConfig,
    params: &ModelParams<f32>,
    image: &RgbImage,
    scales: &[f64],
) -> Result<LabelMap> {
    infer_scores(net, params, image, scales).map(|s| s.argmax())
}

pub fn predict_all(
    net: &NetConfig,
    params: &ModelParams<f32>,
    samples: &[Sample],
    scales: &[f64],
) -> Result<Vec<LabelMap>> {
    samples
        .par_iter()
        .map(|s| infer(net, params, &s.image, scales))
        .collect()
}
