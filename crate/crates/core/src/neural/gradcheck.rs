use super::params::ParamSet;
use crate::error::{Error, Result};

/// Denominators below this are treated as exact zeros. Central differences at
/// `eps = 1e-5` carry roughly `1e-11` of round-off, so entries this small
/// carry no signal.
pub const ZERO_FLOOR: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_tensor: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
    pub max_abs_error: f64,
    pub base_loss: f64,
    pub epsilon: f64,
    /// (analytic, numeric) per coordinate, in tensor order.
    pub pairs: Vec<(f64, f64)>,
}

/// Multiple of `ulp(loss) / eps` taken as the resolution of a central
/// difference.
pub const ROUND_OFF_FACTOR: f64 = 8.0;

impl GradCheckReport {
    /// Absolute error a central difference can carry from round-off alone.
    pub fn round_off_bound(&self) -> f64 {
        ROUND_OFF_FACTOR * f64::EPSILON * self.base_loss.abs().max(1.0) / self.epsilon
    }

    /// Coordinates whose relative error exceeds `rel_tol` by more than
    /// round-off can explain.
    pub fn resolved_failures(&self, rel_tol: f64) -> usize {
        let floor = self.round_off_bound();
        self.pairs
            .iter()
            .filter(|&&(a, n)| relative_error(a, n) > rel_tol && (a - n).abs() > floor)
            .count()
    }
}

/// `|a - n| / (|a| + |n|)`, defined as 0 when both are (numerically) zero.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs() + numeric.abs();
    if denom < ZERO_FLOOR {
        0.0
    } else {
        (analytic - numeric).abs() / denom
    }
}

/// Compares `analytic` against central differences of `loss` at `params`,
/// perturbing every coordinate by ±`epsilon`.
pub fn gradient_check<P: ParamSet>(
    loss: &dyn Fn(&P) -> f64,
    params: &P,
    analytic: &P,
    epsilon: f64,
) -> Result<GradCheckReport> {
    let base = loss(params);
    if !base.is_finite() {
        return Err(Error::NonFinite(format!("loss at base point is {base}")));
    }
    let grads: Vec<(String, Vec<f64>)> = analytic
        .tensors()
        .into_iter()
        .map(|(n, t)| (n, t.to_vec()))
        .collect();
    let shapes: Vec<usize> = params.tensors().iter().map(|(_, t)| t.len()).collect();
    if shapes != grads.iter().map(|(_, g)| g.len()).collect::<Vec<_>>() {
        return Err(Error::Contract(
            "analytic gradient layout differs from parameters".into(),
        ));
    }

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_tensor: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
        max_abs_error: 0.0,
        base_loss: base,
        epsilon,
        pairs: Vec::new(),
    };
    let mut probe = params.clone();
    for (t, (name, grad)) in grads.iter().enumerate() {
        for (idx, &a) in grad.iter().enumerate() {
            let original = probe.tensors()[t].1[idx];
            set_coord(&mut probe, t, idx, original + epsilon);
            let plus = loss(&probe);
            set_coord(&mut probe, t, idx, original - epsilon);
            let minus = loss(&probe);
            set_coord(&mut probe, t, idx, original);
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(format!("loss while perturbing {name}[{idx}]")));
            }
            let numeric = (plus - minus) / (2.0 * epsilon);
            let err = relative_error(a, numeric);
            report.checked += 1;
            report.max_abs_error = report.max_abs_error.max((a - numeric).abs());
            report.pairs.push((a, numeric));
            if err > report.max_relative_error || report.worst_tensor.is_empty() {
                report.max_relative_error = err;
                report.worst_tensor = name.clone();
                report.worst_index = idx;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

fn set_coord<P: ParamSet>(p: &mut P, tensor: usize, idx: usize, value: f64) {
    let mut ts = p.tensors_mut();
    ts[tensor].1[idx] = value;
}
