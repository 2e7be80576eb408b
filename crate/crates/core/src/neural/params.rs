/// A bundle of named trainable tensors.
///
/// The tensor order returned by `tensors` and `tensors_mut` is fixed and
/// identical between the two; checkpoints, optimizers and the gradient
/// checker all rely on it.
pub trait ParamSet: Clone {
    fn tensors(&self) -> Vec<(String, &[f64])>;
    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])>;

    fn zeroed(&self) -> Self {
        let mut out = self.clone();
        out.fill(0.0);
        out
    }

    fn fill(&mut self, value: f64) {
        for (_, t) in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x = value);
        }
    }

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    fn squared_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.iter())
            .map(|x| x * x)
            .sum()
    }

    /// `self += scale * other`, tensor by tensor.
    fn add_scaled(&mut self, other: &Self, scale: f64) {
        let src = other.tensors();
        for ((_, dst), (_, s)) in self.tensors_mut().into_iter().zip(src) {
            for (d, x) in dst.iter_mut().zip(s) {
                *d += scale * x;
            }
        }
    }

    fn scale(&mut self, factor: f64) {
        for (_, t) in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= factor);
        }
    }

    fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|x| x.is_finite()))
    }

    /// Flat copy of every parameter in tensor order.
    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (_, t) in self.tensors() {
            out.extend_from_slice(t);
        }
        out
    }
}
