use super::{GradientSet, ModelParams};
use crate::error::{Error, Result};

/// Step-decay learning rate: `base_lr · factor^⌊epoch / drop_every⌋`.
pub fn lr_schedule(epoch: usize, base_lr: f64, drop_every: usize, factor: f64) -> f64 {
    if drop_every == 0 {
        return base_lr;
    }
    base_lr * factor.powi((epoch / drop_every) as i32)
}

/// Heavy-ball momentum: `v ← μ·v + g`, `θ ← θ − lr·v`.
///
/// Nothing is modified when `grads` holds a non-finite value.
pub fn sgd_step(
    params: &mut ModelParams<f32>,
    grads: &GradientSet<f32>,
    lr: f64,
    velocity: &mut ModelParams<f32>,
    momentum: f64,
) -> Result<()> {
    if !params.same_shape(grads) || !params.same_shape(velocity) {
        return Err(Error::Shape(
            "gradient/velocity layout differs from parameters".into(),
        ));
    }
    if !grads.is_finite() {
        return Err(Error::DivergedGradient);
    }
    let (lr, mu) = (lr as f32, momentum as f32);
    for ((p, g), v) in params
        .tensors_mut()
        .zip(grads.tensors())
        .zip(velocity.tensors_mut())
    {
        for ((pi, &gi), vi) in p.iter_mut().zip(g).zip(v.iter_mut()) {
            *vi = mu * *vi + gi;
            *pi -= lr * *vi;
        }
    }
    Ok(())
}
