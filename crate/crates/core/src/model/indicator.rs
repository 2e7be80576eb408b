//! Scalar surrogate applied to the phrase-indication margin `a = 1 − y·s`.

use crate::neural::sigmoid;
use crate::registry::Registry;

pub trait IndicatorLoss: Send + Sync {
    fn name(&self) -> &'static str;
    fn value(&self, a: f64) -> f64;
    fn derivative(&self, a: f64) -> f64;
}

/// σ(a): smooth everywhere, the default.
pub struct SigmoidIndicator;

impl IndicatorLoss for SigmoidIndicator {
    fn name(&self) -> &'static str {
        "sigmoid"
    }

    fn value(&self, a: f64) -> f64 {
        sigmoid(a)
    }

    fn derivative(&self, a: f64) -> f64 {
        let s = sigmoid(a);
        s * (1.0 - s)
    }
}

/// max(0, a). Subgradient 0 at the kink.
pub struct HingeIndicator;

impl IndicatorLoss for HingeIndicator {
    fn name(&self) -> &'static str {
        "hinge"
    }

    fn value(&self, a: f64) -> f64 {
        a.max(0.0)
    }

    fn derivative(&self, a: f64) -> f64 {
        if a > 0.0 {
            1.0
        } else {
            0.0
        }
    }
}

pub const DEFAULT_INDICATOR: &str = "sigmoid";

pub fn indicator_registry() -> Registry<dyn IndicatorLoss> {
    let mut r: Registry<dyn IndicatorLoss> = Registry::new("indicator loss");
    r.register("sigmoid", || Box::new(SigmoidIndicator) as Box<dyn IndicatorLoss>)
        .register("hinge", || Box::new(HingeIndicator) as Box<dyn IndicatorLoss>);
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_resolves_both() {
        let r = indicator_registry();
        assert_eq!(r.create("sigmoid").unwrap().name(), "sigmoid");
        assert_eq!(r.create("hinge").unwrap().name(), "hinge");
        assert!(r.create("square").is_err());
    }

    #[test]
    fn derivatives_match_differences() {
        for loss in [&SigmoidIndicator as &dyn IndicatorLoss, &HingeIndicator] {
            for a in [-2.0, -0.3, 0.4, 1.7] {
                let h = 1e-6;
                let num = (loss.value(a + h) - loss.value(a - h)) / (2.0 * h);
                assert!((num - loss.derivative(a)).abs() < 1e-8, "{} at {a}", loss.name());
            }
        }
    }

    #[test]
    fn hinge_is_zero_past_margin() {
        assert_eq!(HingeIndicator.value(-0.5), 0.0);
        assert_eq!(HingeIndicator.value(1.5), 1.5);
    }
}
