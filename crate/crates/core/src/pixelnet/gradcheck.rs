//! Central finite-difference check of [`backward`] in double precision.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{backward, forward, pixel_loss, ModelParams, NetConfig};
use crate::error::Result;
use crate::geometry::{LabelMap, IGNORE};
use crate::imaging::RgbImage;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub checked: usize,
}

/// Denominator floor: below it the difference is judged in absolute terms.
const REL_FLOOR: f64 = 1e-6;

fn loss_at(
    config: &NetConfig,
    params: &ModelParams<f64>,
    image: &RgbImage,
    target: &LabelMap,
) -> Result<f64> {
    let scores = forward(config, params, image)?;
    Ok(pixel_loss(&scores, target)?.mean)
}

/// Compares every analytic partial with `(L(θ+ε) − L(θ−ε)) / 2ε`.
pub fn check_gradient(
    config: &NetConfig,
    params: &ModelParams<f64>,
    image: &RgbImage,
    target: &LabelMap,
    eps: f64,
) -> Result<GradCheck> {
    let (_, analytic) = backward(config, params, image, target)?;
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    let mut checked = 0;
    let sizes: Vec<usize> = params.tensors().map(<[f64]>::len).collect();
    let grads: Vec<Vec<f64>> = analytic.tensors().map(<[f64]>::to_vec).collect();
    for (t, &len) in sizes.iter().enumerate() {
        for i in 0..len {
            let orig = params.tensors().nth(t).expect("tensor")[i];
            probe.tensors_mut().nth(t).expect("tensor")[i] = orig + eps;
            let plus = loss_at(config, &probe, image, target)?;
            probe.tensors_mut().nth(t).expect("tensor")[i] = orig - eps;
            let minus = loss_at(config, &probe, image, target)?;
            probe.tensors_mut().nth(t).expect("tensor")[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = grads[t][i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    Ok(GradCheck {
        max_rel_error: worst,
        checked,
    })
}

/// A random (parameters, image, target) triple. Every layer, including the
/// classifier, gets non-zero weights and biases so all partials are
/// exercised; weights are scaled by `1/sqrt(fan_in)` so scores stay moderate
/// on wide layers. About a tenth of the target pixels are `IGNORE`.
pub fn random_problem(
    config: &NetConfig,
    width: usize,
    height: usize,
    seed: u64,
) -> Result<(ModelParams<f64>, RgbImage, LabelMap)> {
    let mut r = rng::stream(seed, &[rng::STREAM_INIT, 0x6772_6164]);
    let mut params = ModelParams::<f64>::zeros(config);
    for conv in &mut params.convs {
        let fan_in = (conv.in_channels * conv.kernel * conv.kernel) as f64;
        let weight = Normal::new(0.0, fan_in.sqrt().recip()).expect("valid sigma");
        let bias = Normal::new(0.0, 0.1).expect("valid sigma");
        conv.weights
            .iter_mut()
            .for_each(|w| *w = weight.sample(&mut r));
        conv.bias.iter_mut().for_each(|b| *b = bias.sample(&mut r));
    }
    let image = RgbImage::new(
        width,
        height,
        (0..width * height * 3).map(|_| r.random()).collect(),
    )?;
    let mut r = rng::stream(seed, &[rng::STREAM_INIT, 0x7467_7400]);
    let labels = (0..width * height)
        .map(|_| {
            if r.random_bool(0.1) {
                IGNORE
            } else {
                r.random_range(0..config.num_classes) as u8
            }
        })
        .collect();
    let target = LabelMap::from_vec(width, height, labels)?;
    Ok((params, image, target))
}

/// Worst relative error over `trials` random 8×8 problems on `config`.
pub fn gradcheck_trials(config: &NetConfig, trials: usize, seed: u64) -> Result<GradCheck> {
    let mut total = GradCheck {
        max_rel_error: 0.0,
        checked: 0,
    };
    for trial in 0..trials {
        let (params, image, target) =
            random_problem(config, 8, 8, rng::stream_seed(seed, &[trial as u64]))?;
        let g = check_gradient(config, &params, &image, &target, 1e-5)?;
        total.max_rel_error = total.max_rel_error.max(g.max_rel_error);
        total.checked += g.checked;
    }
    Ok(total)
}
