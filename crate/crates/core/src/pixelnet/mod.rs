//! Small fully convolutional pixel classifier trained from scratch.
//!
//! The network is a configurable stack of same-padded convolutions, ReLUs,
//! average-pool downsampling and bilinear upsampling. Every layer has a
//! hand-written adjoint, so [`backward`] returns the exact gradient of the mean
//! softmax cross-entropy. Storage is generic over the float type: training
//! runs in `f32`, gradient checking in `f64`.

mod checkpoint;
mod gradcheck;
pub mod layers;
mod optim;

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_FORMAT};
pub use gradcheck::{check_gradient, gradcheck_trials, random_problem, GradCheck};
pub use layers::{ConvParams, Tensor};
pub use optim::{lr_schedule, sgd_step};

use crate::error::{Error, Result};
use crate::geometry::{LabelMap, IGNORE};
use crate::imaging::{resize_planar, RgbImage};
use crate::rng;

pub trait Scalar: Float + FromPrimitive + Sum + Send + Sync + Debug + Default + 'static {}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Conv { out_channels: usize, kernel: usize },
    Relu,
    AvgPool { factor: usize },
    Upsample { factor: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    pub input_channels: usize,
    /// Background plus foreground classes.
    pub num_classes: usize,
    pub layers: Vec<LayerSpec>,
    /// Multiplier on the He-normal standard deviation.
    pub weight_init_scale: f64,
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self::standard(4, 16, 32)
    }
}

impl NetConfig {
    /// conv3×3 → ReLU → conv3×3 → ReLU → 2× downsample → conv3×3 → ReLU →
    /// conv1×1(C) → 2× bilinear upsample.
    pub fn standard(num_classes: usize, width: usize, deep_width: usize) -> Self {
        Self {
            input_channels: 3,
            num_classes,
            layers: vec![
                LayerSpec::Conv {
                    out_channels: width,
                    kernel: 3,
                },
                LayerSpec::Relu,
                LayerSpec::Conv {
                    out_channels: width,
                    kernel: 3,
                },
                LayerSpec::Relu,
                LayerSpec::AvgPool { factor: 2 },
                LayerSpec::Conv {
                    out_channels: deep_width,
                    kernel: 3,
                },
                LayerSpec::Relu,
                LayerSpec::Conv {
                    out_channels: num_classes,
                    kernel: 1,
                },
                LayerSpec::Upsample { factor: 2 },
            ],
            weight_init_scale: 1.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config("num_classes must be at least 2".into()));
        }
        if self.num_classes > usize::from(IGNORE) {
            return Err(Error::Config("num_classes must be below 255".into()));
        }
        let mut channels = self.input_channels;
        let (mut down, mut up) = (1usize, 1usize);
        let mut convs = 0;
        for layer in &self.layers {
            match *layer {
                LayerSpec::Conv {
                    out_channels,
                    kernel,
                } => {
                    if out_channels == 0 || kernel % 2 == 0 {
                        return Err(Error::Config(
                            "convolutions need positive width and odd kernel".into(),
                        ));
                    }
                    channels = out_channels;
                    convs += 1;
                }
                LayerSpec::Relu => {}
                LayerSpec::AvgPool { factor } | LayerSpec::Upsample { factor } if factor == 0 => {
                    return Err(Error::Config("resampling factor must be positive".into()));
                }
                LayerSpec::AvgPool { factor } => down *= factor,
                LayerSpec::Upsample { factor } => up *= factor,
            }
        }
        if convs == 0 {
            return Err(Error::Config(
                "network needs at least one convolution".into(),
            ));
        }
        if channels != self.num_classes {
            return Err(Error::Config(format!(
                "network emits {channels} channels but num_classes is {}",
                self.num_classes
            )));
        }
        if down != up {
            return Err(Error::Config(format!(
                "downsampling {down}x does not match upsampling {up}x"
            )));
        }
        Ok(())
    }

    /// Product of downsampling factors; inputs are padded to a multiple of it.
    pub fn stride(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                LayerSpec::AvgPool { factor } => *factor,
                _ => 1,
            })
            .product()
    }
}

/// Network parameters: one [`ConvParams`] per convolution in declared order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T = f32> {
    pub convs: Vec<ConvParams<T>>,
}

/// Gradients share the parameter layout.
pub type GradientSet<T = f32> = ModelParams<T>;

impl<T: Scalar> ModelParams<T> {
    pub fn zeros(config: &NetConfig) -> Self {
        let mut convs = Vec::new();
        let mut channels = config.input_channels;
        for layer in &config.layers {
            if let LayerSpec::Conv {
                out_channels,
                kernel,
            } = *layer
            {
                convs.push(ConvParams::zeros(channels, out_channels, kernel));
                channels = out_channels;
            }
        }
        Self { convs }
    }

    /// He-normal weights, zero biases and a zero classifier, so the initial
    /// scores are uniform and the initial loss is exactly `ln C`.
    pub fn init(config: &NetConfig) -> Result<Self> {
        config.validate()?;
        let mut params = Self::zeros(config);
        let mut rng = rng::stream(config.seed, &[rng::STREAM_INIT]);
        let last = params.convs.len() - 1;
        for conv in &mut params.convs[..last] {
            let fan_in = (conv.in_channels * conv.kernel * conv.kernel) as f64;
            let std = config.weight_init_scale * (2.0 / fan_in).sqrt();
            let normal = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
            for w in &mut conv.weights {
                *w = T::from_f64(normal.sample(&mut rng)).expect("finite");
            }
        }
        Ok(params)
    }

    pub fn tensors(&self) -> impl Iterator<Item = &[T]> {
        self.convs
            .iter()
            .flat_map(|c| [c.weights.as_slice(), c.bias.as_slice()])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Vec<T>> {
        self.convs
            .iter_mut()
            .flat_map(|c| [&mut c.weights, &mut c.bias])
    }

    pub fn num_values(&self) -> usize {
        self.tensors().map(<[T]>::len).sum()
    }

    pub fn same_shape(&self, other: &ModelParams<T>) -> bool {
        self.convs.len() == other.convs.len()
            && self.convs.iter().zip(&other.convs).all(|(a, b)| {
                (a.in_channels, a.out_channels, a.kernel)
                    == (b.in_channels, b.out_channels, b.kernel)
            })
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let conv = |v: &[T]| -> Vec<U> {
            v.iter()
                .map(|x| U::from(*x).expect("representable"))
                .collect()
        };
        ModelParams {
            convs: self
                .convs
                .iter()
                .map(|c| ConvParams {
                    in_channels: c.in_channels,
                    out_channels: c.out_channels,
                    kernel: c.kernel,
                    weights: conv(&c.weights),
                    bias: conv(&c.bias),
                })
                .collect(),
        }
    }

    /// `self += other`, element by element.
    pub fn add_assign(&mut self, other: &ModelParams<T>) {
        for (a, b) in self.tensors_mut().zip(other.tensors()) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x = *x + y;
            }
        }
    }

    pub fn scale(&mut self, factor: T) {
        for t in self.tensors_mut() {
            for x in t.iter_mut() {
                *x = *x * factor;
            }
        }
    }
}

/// Per-pixel class scores before softmax, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap<T = f32> {
    width: usize,
    height: usize,
    num_classes: usize,
    data: Vec<T>,
}

impl<T: Scalar> ScoreMap<T> {
    pub fn new(width: usize, height: usize, num_classes: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height * num_classes {
            return Err(Error::Shape("score buffer size mismatch".into()));
        }
        Ok(Self {
            width,
            height,
            num_classes,
            data,
        })
    }

    pub fn constant(width: usize, height: usize, num_classes: usize, value: T) -> Self {
        Self {
            width,
            height,
            num_classes,
            data: vec![value; width * height * num_classes],
        }
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

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn score(&self, class: usize, idx: usize) -> T {
        self.data[class * self.width * self.height + idx]
    }

    pub fn class_plane(&self, class: usize) -> &[T] {
        let n = self.width * self.height;
        &self.data[class * n..(class + 1) * n]
    }

    /// `-log softmax(class)` at every pixel, in `f64`.
    pub fn neg_log_prob(&self, class: usize) -> Vec<f64> {
        let n = self.width * self.height;
        (0..n)
            .map(|i| {
                let scores: Vec<f64> = (0..self.num_classes)
                    .map(|c| self.score(c, i).to_f64().expect("finite"))
                    .collect();
                let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + scores.iter().map(|s| (s - m).exp()).sum::<f64>().ln();
                lse - scores[class]
            })
            .collect()
    }

    /// Per-pixel argmax; ties resolve to the lower class index.
    pub fn argmax(&self) -> LabelMap {
        let n = self.width * self.height;
        let labels = (0..n)
            .map(|i| {
                let mut best = 0;
                for c in 1..self.num_classes {
                    if self.score(c, i) > self.score(best, i) {
                        best = c;
                    }
                }
                best as u8
            })
            .collect();
        LabelMap::from_vec(self.width, self.height, labels).expect("sized")
    }
}

impl ScoreMap<f32> {
    pub fn resized(&self, width: usize, height: usize) -> Result<ScoreMap<f32>> {
        let data = resize_planar(
            &self.data,
            self.num_classes,
            self.width,
            self.height,
            width,
            height,
        )?;
        ScoreMap::new(width, height, self.num_classes, data)
    }
}

/// Bilinear rescale of every class plane to `round(factor · dim)`.
pub fn rescale_scores(scores: &ScoreMap<f32>, factor: f64) -> Result<ScoreMap<f32>> {
    if !(factor > 0.0) || !factor.is_finite() {
        return Err(Error::Shape(format!(
            "rescale factor {factor} must be positive"
        )));
    }
    let w = (factor * scores.width as f64).round() as usize;
    let h = (factor * scores.height as f64).round() as usize;
    if w < 1 || h < 1 {
        return Err(Error::Shape(format!(
            "rescaling {}x{} by {factor} leaves no pixels",
            scores.width, scores.height
        )));
    }
    scores.resized(w, h)
}

/// Input tensor padded at the bottom/right by edge replication so each
/// dimension is a multiple of `stride`.
fn padded_input<T: Scalar>(image: &RgbImage, stride: usize) -> Tensor<T> {
    let (w, h) = image.dims();
    let pw = w.div_ceil(stride) * stride;
    let ph = h.div_ceil(stride) * stride;
    let mut t = Tensor::zeros(3, ph, pw);
    for y in 0..ph {
        for x in 0..pw {
            let px = image.pixel(x.min(w - 1), y.min(h - 1));
            for (c, &v) in px.iter().enumerate() {
                t.data[c * ph * pw + y * pw + x] = T::from_f32(v).expect("finite");
            }
        }
    }
    t
}

/// Every intermediate tensor: `trace[0]` is the (padded) input and
/// `trace[i + 1]` the output of layer `i`.
pub fn forward_trace<T: Scalar>(
    config: &NetConfig,
    params: &ModelParams<T>,
    image: &RgbImage,
) -> Result<Vec<Tensor<T>>> {
    if config.input_channels != 3 {
        return Err(Error::Shape(format!(
            "network expects {} input channels, image has 3",
            config.input_channels
        )));
    }
    if params.convs.len() != ModelParams::<T>::zeros(config).convs.len()
        || !params.same_shape(&ModelParams::zeros(config))
    {
        return Err(Error::Shape(
            "parameters do not match network config".into(),
        ));
    }
    let mut trace = vec![padded_input::<T>(image, config.stride())];
    let mut conv_idx = 0;
    for layer in &config.layers {
        let x = trace.last().expect("non-empty");
        let y = match *layer {
            LayerSpec::Conv { .. } => {
                let y = layers::conv_forward(&params.convs[conv_idx], x);
                conv_idx += 1;
                y
            }
            LayerSpec::Relu => layers::relu_forward(x),
            LayerSpec::AvgPool { factor } => layers::avgpool_forward(x, factor),
            LayerSpec::Upsample { factor } => layers::upsample_forward(x, factor),
        };
        trace.push(y);
    }
    Ok(trace)
}

fn crop_scores<T: Scalar>(out: &Tensor<T>, width: usize, height: usize) -> ScoreMap<T> {
    let mut data = Vec::with_capacity(out.channels * width * height);
    for c in 0..out.channels {
        let plane = out.plane(c);
        for y in 0..height {
            data.extend_from_slice(&plane[y * out.width..y * out.width + width]);
        }
    }
    ScoreMap {
        width,
        height,
        num_classes: out.channels,
        data,
    }
}

pub fn forward<T: Scalar>(
    config: &NetConfig,
    params: &ModelParams<T>,
    image: &RgbImage,
) -> Result<ScoreMap<T>> {
    let trace = forward_trace(config, params, image)?;
    let (w, h) = image.dims();
    Ok(crop_scores(trace.last().expect("non-empty"), w, h))
}

/// Per-pixel loss field and its gradient with respect to the scores.
pub struct PixelLoss<T> {
    pub mean: T,
    /// Cross-entropy per pixel, zero at IGNORE pixels.
    pub per_pixel: Vec<T>,
    /// d(mean)/d(scores), channel-major.
    pub grad: Vec<T>,
    pub counted: usize,
}

/// Mean softmax cross-entropy over non-IGNORE pixels.
pub fn pixel_loss<T: Scalar>(scores: &ScoreMap<T>, target: &LabelMap) -> Result<PixelLoss<T>> {
    if scores.dims() != target.dims() {
        return Err(Error::DimensionMismatch {
            expected: scores.dims(),
            actual: target.dims(),
        });
    }
    let n = scores.width * scores.height;
    let c = scores.num_classes;
    let counted = target.labels().iter().filter(|&&l| l != IGNORE).count();
    if counted == 0 {
        return Err(Error::NoSupervisedPixels);
    }
    let inv = T::one() / T::from_usize(counted).expect("count");
    let mut per_pixel = vec![T::zero(); n];
    let mut grad = vec![T::zero(); n * c];
    let mut total = T::zero();
    let mut probs = vec![T::zero(); c];
    for (i, &label) in target.labels().iter().enumerate() {
        if label == IGNORE {
            continue;
        }
        let label = usize::from(label);
        if label >= c {
            return Err(Error::LabelOutOfRange {
                label: label as u8,
                num_classes: c,
            });
        }
        let m = (0..c)
            .map(|k| scores.data[k * n + i])
            .fold(T::neg_infinity(), T::max);
        let mut z = T::zero();
        for (k, p) in probs.iter_mut().enumerate() {
            *p = (scores.data[k * n + i] - m).exp();
            z = z + *p;
        }
        let loss = z.ln() + m - scores.data[label * n + i];
        per_pixel[i] = loss;
        total = total + loss;
        for (k, p) in probs.iter().enumerate() {
            let indicator = if k == label { T::one() } else { T::zero() };
            grad[k * n + i] = (*p / z - indicator) * inv;
        }
    }
    Ok(PixelLoss {
        mean: total * inv,
        per_pixel,
        grad,
        counted,
    })
}

/// Loss and exact gradient of `pixel_loss ∘ forward` for one image.
pub fn backward<T: Scalar>(
    config: &NetConfig,
    params: &ModelParams<T>,
    image: &RgbImage,
    target: &LabelMap,
) -> Result<(T, GradientSet<T>)> {
    let trace = forward_trace(config, params, image)?;
    let (w, h) = image.dims();
    let out = trace.last().expect("non-empty");
    let scores = crop_scores(out, w, h);
    let loss = pixel_loss(&scores, target)?;

    // un-crop: scatter the score gradient into the padded output
    let mut g = Tensor::zeros(out.channels, out.height, out.width);
    for c in 0..out.channels {
        let plane = g.plane_mut(c);
        for y in 0..h {
            plane[y * out.width..y * out.width + w]
                .copy_from_slice(&loss.grad[c * w * h + y * w..c * w * h + (y + 1) * w]);
        }
    }

    let mut grads = ModelParams::zeros(config);
    let mut conv_idx = params.convs.len();
    let first_conv = config
        .layers
        .iter()
        .position(|l| matches!(l, LayerSpec::Conv { .. }))
        .expect("validated");
    for (li, layer) in config.layers.iter().enumerate().rev() {
        let input = &trace[li];
        g = match *layer {
            LayerSpec::Conv { .. } => {
                conv_idx -= 1;
                let need = li > first_conv;
                match layers::conv_backward(
                    &params.convs[conv_idx],
                    input,
                    &g,
                    &mut grads.convs[conv_idx],
                    need,
                ) {
                    Some(gi) => gi,
                    None => break,
                }
            }
            LayerSpec::Relu => layers::relu_backward(input, &g),
            LayerSpec::AvgPool { factor } => {
                layers::avgpool_backward(input.height, input.width, &g, factor)
            }
            LayerSpec::Upsample { .. } => layers::upsample_backward(input.height, input.width, &g),
        };
    }
    Ok((loss.mean, grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_image() -> RgbImage {
        RgbImage::from_fn(8, 8, |x, y| {
            [
                (x as f32) / 8.0,
                (y as f32) / 8.0,
                ((x * y) % 5) as f32 / 5.0,
            ]
        })
    }

    #[test]
    fn zero_params_give_zero_scores() {
        let cfg = NetConfig::default();
        let p = ModelParams::<f32>::zeros(&cfg);
        let s = forward(&cfg, &p, &tiny_image()).unwrap();
        assert!(s.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_is_deterministic() {
        let cfg = NetConfig {
            seed: 9,
            ..NetConfig::default()
        };
        let mut p = ModelParams::<f32>::init(&cfg).unwrap();
        p.convs
            .last_mut()
            .unwrap()
            .weights
            .iter_mut()
            .enumerate()
            .for_each(|(i, w)| {
                *w = (i % 7) as f32 * 0.1 - 0.3;
            });
        let a = forward(&cfg, &p, &tiny_image()).unwrap();
        let b = forward(&cfg, &p, &tiny_image()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn one_by_one_conv_is_affine_map() {
        let cfg = NetConfig {
            input_channels: 3,
            num_classes: 2,
            layers: vec![LayerSpec::Conv {
                out_channels: 2,
                kernel: 1,
            }],
            weight_init_scale: 1.0,
            seed: 0,
        };
        let mut p = ModelParams::<f64>::zeros(&cfg);
        p.convs[0].weights = vec![1.0, 2.0, 3.0, -1.0, 0.5, 0.0];
        p.convs[0].bias = vec![0.25, -0.5];
        let img = RgbImage::new(
            2,
            2,
            vec![
                0.0, 0.5, 1.0, 1.0, 0.0, 0.5, 0.25, 0.25, 0.25, 0.5, 1.0, 0.0,
            ],
        )
        .unwrap();
        let s = forward(&cfg, &p, &img).unwrap();
        // class 0: 0.25 + r + 2g + 3b ; class 1: -0.5 - r + 0.5g
        let expect0 = [
            0.25 + 0.0 + 1.0 + 3.0,
            0.25 + 1.0 + 0.0 + 1.5,
            0.25 + 0.25 + 0.5 + 0.75,
            0.25 + 0.5 + 2.0,
        ];
        let expect1 = [
            -0.5 - 0.0 + 0.25,
            -0.5 - 1.0,
            -0.5 - 0.25 + 0.125,
            -0.5 - 0.5 + 0.5,
        ];
        for i in 0..4 {
            assert!((s.score(0, i) - expect0[i]).abs() < 1e-12);
            assert!((s.score(1, i) - expect1[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn loss_at_uniform_scores_is_ln_c() {
        let s = ScoreMap::<f64>::constant(8, 8, 4, 0.7);
        let t = LabelMap::from_vec(8, 8, (0..64).map(|i| (i % 4) as u8).collect()).unwrap();
        let l = pixel_loss(&s, &t).unwrap();
        assert!((l.mean - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn loss_vanishes_with_margin() {
        let t = LabelMap::from_vec(4, 4, (0..16).map(|i| (i % 3) as u8).collect()).unwrap();
        let mut last = f64::INFINITY;
        for m in [1.0, 5.0, 20.0, 60.0] {
            let mut data = vec![0.0; 3 * 16];
            for i in 0..16 {
                data[usize::from(t.labels()[i]) * 16 + i] = m;
            }
            let l = pixel_loss(&ScoreMap::new(4, 4, 3, data).unwrap(), &t)
                .unwrap()
                .mean;
            assert!(l < last);
            last = l;
        }
        assert!(last < 1e-20);
    }

    #[test]
    fn loss_matches_pixel_loop_with_ignore() {
        let mut r = rng::stream(3, &[]);
        use rand::Rng;
        let data: Vec<f64> = (0..3 * 64).map(|_| r.random_range(-3.0..3.0)).collect();
        let labels: Vec<u8> = (0..64)
            .map(|_| {
                let v: u8 = r.random_range(0..4);
                if v == 3 {
                    IGNORE
                } else {
                    v
                }
            })
            .collect();
        let s = ScoreMap::new(8, 8, 3, data.clone()).unwrap();
        let t = LabelMap::from_vec(8, 8, labels.clone()).unwrap();
        let mut sum = 0.0;
        let mut n = 0;
        for i in 0..64 {
            if labels[i] == IGNORE {
                continue;
            }
            let z: f64 = (0..3).map(|c| data[c * 64 + i].exp()).sum();
            sum += -(data[usize::from(labels[i]) * 64 + i].exp() / z).ln();
            n += 1;
        }
        let l = pixel_loss(&s, &t).unwrap();
        assert!((l.mean - sum / n as f64).abs() < 1e-12);
        assert!(l.per_pixel.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn all_ignore_is_an_error() {
        let s = ScoreMap::<f32>::constant(2, 2, 2, 0.0);
        let t = LabelMap::filled(2, 2, IGNORE);
        assert!(matches!(pixel_loss(&s, &t), Err(Error::NoSupervisedPixels)));
    }

    #[test]
    fn uniform_optimum_is_stationary() {
        // zero classifier with a target holding each class equally often at
        // every receptive-field position: the loss is at its minimum over the
        // classifier bias and the bias gradient vanishes
        let cfg = NetConfig::standard(2, 4, 4);
        let p = ModelParams::<f64>::zeros(&cfg);
        let img = RgbImage::filled(8, 8, [0.3, 0.3, 0.3]);
        let t = LabelMap::from_vec(8, 8, (0..64).map(|i| (i % 2) as u8).collect()).unwrap();
        let (loss, g) = backward(&cfg, &p, &img, &t).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-12);
        assert!(g.tensors().all(|t| t.iter().all(|v| v.abs() < 1e-12)));
    }

    #[test]
    fn odd_sizes_are_padded_and_cropped() {
        let cfg = NetConfig::default();
        let p = ModelParams::<f32>::init(&cfg).unwrap();
        let img = RgbImage::filled(7, 5, [0.2, 0.4, 0.6]);
        let s = forward(&cfg, &p, &img).unwrap();
        assert_eq!(s.dims(), (7, 5));
    }

    #[test]
    fn config_validation() {
        let mut cfg = NetConfig::default();
        cfg.num_classes = 1;
        assert!(cfg.validate().is_err());
        let mut cfg = NetConfig::default();
        cfg.layers.pop();
        assert!(cfg.validate().is_err());
        assert_eq!(NetConfig::default().stride(), 2);
    }

    #[test]
    fn rescale_identity_and_errors() {
        let s = ScoreMap::new(3, 2, 2, (0..12).map(|v| v as f32).collect()).unwrap();
        assert_eq!(rescale_scores(&s, 1.0).unwrap(), s);
        assert!(rescale_scores(&s, 0.1).is_err());
        assert!(rescale_scores(&s, -1.0).is_err());
        let c = ScoreMap::<f32>::constant(4, 4, 3, 1.5);
        let r = rescale_scores(&c, 1.7).unwrap();
        assert_eq!(r.dims(), (7, 7));
        assert!(r.data().iter().all(|&v| (v - 1.5).abs() < 1e-6));
    }
}
