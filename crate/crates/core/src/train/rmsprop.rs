use crate::error::{Error, Result};
use crate::model::PhiParams;
use crate::neural::ParamSet;

use super::config::TrainConfig;

/// Running mean of squared gradients, one entry per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct OptState {
    pub cache: PhiParams,
}

impl OptState {
    pub fn new(params: &PhiParams) -> Self {
        Self {
            cache: params.zeroed(),
        }
    }
}

/// `cache ← d·cache + (1−d)·g²; θ ← θ − lr·g/(√cache + ε)`. A non-finite
/// gradient aborts the step before anything is modified.
pub fn rmsprop_step(
    params: &mut PhiParams,
    grads: &PhiParams,
    opt: &mut OptState,
    cfg: &TrainConfig,
) -> Result<()> {
    if params.dims() != grads.dims() || params.dims() != opt.cache.dims() {
        return Err(Error::Contract("optimizer shapes differ from parameters".into()));
    }
    if let Some((name, _)) = grads
        .tensors()
        .into_iter()
        .find(|(_, t)| t.iter().any(|x| !x.is_finite()))
    {
        return Err(Error::NonFinite(format!("gradient of {name}")));
    }
    let (lr, d, eps) = (cfg.learning_rate, cfg.rmsprop_decay, cfg.rmsprop_epsilon);
    let gs = grads.tensors();
    for (((_, p), (_, c)), (_, g)) in params
        .tensors_mut()
        .into_iter()
        .zip(opt.cache.tensors_mut())
        .zip(gs)
    {
        for ((p, c), g) in p.iter_mut().zip(c.iter_mut()).zip(g) {
            *c = d * *c + (1.0 - d) * g * g;
            *p -= lr * g / (c.sqrt() + eps);
        }
    }
    Ok(())
}

/// Rescales `grads` so its global L2 norm is at most `max_norm` (0 disables).
/// Returns the norm before clipping.
pub fn clip_gradients(grads: &mut PhiParams, max_norm: f64) -> f64 {
    let norm = grads.squared_norm().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

/// Zeroes every tensor not selected by `mask` (in `tensors()` order).
pub fn apply_mask(grads: &mut PhiParams, mask: &[bool]) {
    for ((_, t), &keep) in grads.tensors_mut().into_iter().zip(mask) {
        if !keep {
            t.iter_mut().for_each(|x| *x = 0.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Dims;

    const DIMS: Dims = Dims {
        hidden: 2,
        feature: 2,
        vocab: 5,
    };

    fn setup(g: f64) -> (PhiParams, PhiParams, OptState, TrainConfig) {
        let p = PhiParams::init(DIMS, 0.1, 1);
        let mut grads = p.zeroed();
        grads.fill(g);
        let opt = OptState::new(&p);
        (p, grads, opt, TrainConfig::default())
    }

    #[test]
    fn zero_gradient_leaves_params_and_decays_cache() {
        let (mut p, g, mut opt, cfg) = setup(0.0);
        opt.cache.fill(1.0);
        let before = p.clone();
        rmsprop_step(&mut p, &g, &mut opt, &cfg).unwrap();
        assert_eq!(p, before);
        assert!(opt.cache.flatten().iter().all(|&c| (c - 0.9).abs() < 1e-15));
    }

    #[test]
    fn first_step_closed_form() {
        let (mut p, g, mut opt, cfg) = setup(0.3);
        let before = p.flatten();
        rmsprop_step(&mut p, &g, &mut opt, &cfg).unwrap();
        let want = 0.001 * 0.3 / ((0.1f64 * 0.09).sqrt() + 1e-8);
        for (a, b) in before.iter().zip(p.flatten()) {
            assert!(((a - b) - want).abs() < 1e-15);
        }
    }

    #[test]
    fn repeated_gradient_shrinks_steps() {
        let (mut p, g, mut opt, cfg) = setup(0.3);
        let x0 = p.flatten()[0];
        rmsprop_step(&mut p, &g, &mut opt, &cfg).unwrap();
        let x1 = p.flatten()[0];
        rmsprop_step(&mut p, &g, &mut opt, &cfg).unwrap();
        let x2 = p.flatten()[0];
        assert!((x1 - x2).abs() < (x0 - x1).abs());
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let (mut p, g, mut opt, mut cfg) = setup(0.7);
        cfg.learning_rate = 0.0;
        let before = p.clone();
        rmsprop_step(&mut p, &g, &mut opt, &cfg).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn non_finite_gradient_aborts_untouched() {
        let (mut p, mut g, mut opt, cfg) = setup(0.1);
        g.w_indicator[1] = f64::NAN;
        let before = (p.clone(), opt.clone());
        assert!(matches!(rmsprop_step(&mut p, &g, &mut opt, &cfg), Err(Error::NonFinite(_))));
        assert_eq!((p, opt), before);
    }

    #[test]
    fn clipping_caps_norm() {
        let (_, mut g, _, _) = setup(1.0);
        let n = clip_gradients(&mut g, 5.0);
        assert!(n > 5.0);
        assert!((g.squared_norm().sqrt() - 5.0).abs() < 1e-12);
        let (_, mut small, _, _) = setup(0.001);
        let before = small.clone();
        clip_gradients(&mut small, 5.0);
        assert_eq!(small, before);
    }
}
