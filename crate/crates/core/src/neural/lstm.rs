//! Single-layer LSTM cell without peepholes.
//!
//! ```text
//! i = σ(W_i x + U_i h' + b_i)      f = σ(W_f x + U_f h' + b_f)
//! o = σ(W_o x + U_o h' + b_o)      u = tanh(W_u x + U_u h' + b_u)
//! c = i ⊙ u + f ⊙ c'               h = o ⊙ tanh(c)
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{sigmoid, Matrix};
use super::params::ParamSet;
use crate::error::{check_dim, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub w_i: Matrix,
    pub w_f: Matrix,
    pub w_o: Matrix,
    pub w_u: Matrix,
    pub u_i: Matrix,
    pub u_f: Matrix,
    pub u_o: Matrix,
    pub u_u: Matrix,
    pub b_i: Vec<f64>,
    pub b_f: Vec<f64>,
    pub b_o: Vec<f64>,
    pub b_u: Vec<f64>,
}

impl LstmParams {
    pub fn zeros(k: usize) -> Self {
        let m = || Matrix::zeros(k, k);
        Self {
            w_i: m(),
            w_f: m(),
            w_o: m(),
            w_u: m(),
            u_i: m(),
            u_f: m(),
            u_o: m(),
            u_u: m(),
            b_i: vec![0.0; k],
            b_f: vec![0.0; k],
            b_o: vec![0.0; k],
            b_u: vec![0.0; k],
        }
    }

    /// Weights uniform in `[-scale, scale]`, biases zero.
    pub fn uniform<R: Rng>(k: usize, scale: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(k);
        for m in p.matrices_mut() {
            for x in m.as_mut_slice() {
                *x = rng.gen_range(-scale..=scale);
            }
        }
        p
    }

    pub fn hidden_size(&self) -> usize {
        self.b_i.len()
    }

    /// Checks that all eight matrices are K×K and all four biases have length K.
    pub fn validate(&self) -> Result<()> {
        let k = self.hidden_size();
        for m in self.matrices() {
            check_dim("lstm weight rows", k, m.rows())?;
            check_dim("lstm weight cols", k, m.cols())?;
        }
        for b in [&self.b_f, &self.b_o, &self.b_u] {
            check_dim("lstm bias", k, b.len())?;
        }
        Ok(())
    }

    fn matrices(&self) -> [&Matrix; 8] {
        [
            &self.w_i, &self.w_f, &self.w_o, &self.w_u, &self.u_i, &self.u_f, &self.u_o, &self.u_u,
        ]
    }

    fn matrices_mut(&mut self) -> [&mut Matrix; 8] {
        [
            &mut self.w_i,
            &mut self.w_f,
            &mut self.w_o,
            &mut self.w_u,
            &mut self.u_i,
            &mut self.u_f,
            &mut self.u_o,
            &mut self.u_u,
        ]
    }
}

impl ParamSet for LstmParams {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        vec![
            ("w_i".into(), self.w_i.as_slice()),
            ("w_f".into(), self.w_f.as_slice()),
            ("w_o".into(), self.w_o.as_slice()),
            ("w_u".into(), self.w_u.as_slice()),
            ("u_i".into(), self.u_i.as_slice()),
            ("u_f".into(), self.u_f.as_slice()),
            ("u_o".into(), self.u_o.as_slice()),
            ("u_u".into(), self.u_u.as_slice()),
            ("b_i".into(), self.b_i.as_slice()),
            ("b_f".into(), self.b_f.as_slice()),
            ("b_o".into(), self.b_o.as_slice()),
            ("b_u".into(), self.b_u.as_slice()),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        vec![
            ("w_i".into(), self.w_i.as_mut_slice()),
            ("w_f".into(), self.w_f.as_mut_slice()),
            ("w_o".into(), self.w_o.as_mut_slice()),
            ("w_u".into(), self.w_u.as_mut_slice()),
            ("u_i".into(), self.u_i.as_mut_slice()),
            ("u_f".into(), self.u_f.as_mut_slice()),
            ("u_o".into(), self.u_o.as_mut_slice()),
            ("u_u".into(), self.u_u.as_mut_slice()),
            ("b_i".into(), self.b_i.as_mut_slice()),
            ("b_f".into(), self.b_f.as_mut_slice()),
            ("b_o".into(), self.b_o.as_mut_slice()),
            ("b_u".into(), self.b_u.as_mut_slice()),
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub c: Vec<f64>,
    pub h: Vec<f64>,
}

impl LstmState {
    pub fn zeros(k: usize) -> Self {
        Self {
            c: vec![0.0; k],
            h: vec![0.0; k],
        }
    }
}

/// Everything the backward pass needs from one forward step.
#[derive(Clone, Debug)]
pub struct StepCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub o: Vec<f64>,
    pub u: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

/// Checked single step. Use [`step_cached`] on hot paths.
pub fn lstm_step(params: &LstmParams, x: &[f64], prev: &LstmState) -> Result<LstmState> {
    params.validate()?;
    let k = params.hidden_size();
    check_dim("lstm input", k, x.len())?;
    check_dim("lstm previous h", k, prev.h.len())?;
    check_dim("lstm previous c", k, prev.c.len())?;
    Ok(step_cached(params, x, prev).0)
}

pub fn step_cached(params: &LstmParams, x: &[f64], prev: &LstmState) -> (LstmState, StepCache) {
    let gate = |w: &Matrix, u: &Matrix, b: &[f64]| {
        let mut a = b.to_vec();
        w.matvec_acc(x, &mut a);
        u.matvec_acc(&prev.h, &mut a);
        a
    };
    let mut i = gate(&params.w_i, &params.u_i, &params.b_i);
    let mut f = gate(&params.w_f, &params.u_f, &params.b_f);
    let mut o = gate(&params.w_o, &params.u_o, &params.b_o);
    let mut u = gate(&params.w_u, &params.u_u, &params.b_u);
    i.iter_mut().for_each(|v| *v = sigmoid(*v));
    f.iter_mut().for_each(|v| *v = sigmoid(*v));
    o.iter_mut().for_each(|v| *v = sigmoid(*v));
    u.iter_mut().for_each(|v| *v = v.tanh());

    let c: Vec<f64> = (0..i.len())
        .map(|j| i[j] * u[j] + f[j] * prev.c[j])
        .collect();
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h: Vec<f64> = o.iter().zip(&tanh_c).map(|(a, b)| a * b).collect();

    let cache = StepCache {
        x: x.to_vec(),
        h_prev: prev.h.clone(),
        c_prev: prev.c.clone(),
        i,
        f,
        o,
        u,
        tanh_c,
    };
    (LstmState { c, h }, cache)
}

/// Gradients flowing out of one step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepGrads {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
}

/// Reverse pass of one step. Parameter gradients are accumulated into `grads`.
pub fn lstm_backward(
    params: &LstmParams,
    cache: &StepCache,
    grad_h: &[f64],
    grad_c: &[f64],
    grads: &mut LstmParams,
) -> Result<StepGrads> {
    let k = params.hidden_size();
    check_dim("cached step", k, cache.i.len())?;
    check_dim("upstream grad_h", k, grad_h.len())?;
    check_dim("upstream grad_c", k, grad_c.len())?;
    if grads.hidden_size() != k {
        return Err(Error::Contract(
            "gradient buffer has a different hidden size".into(),
        ));
    }
    Ok(backward_unchecked(params, cache, grad_h, grad_c, grads))
}

pub(crate) fn backward_unchecked(
    params: &LstmParams,
    cache: &StepCache,
    grad_h: &[f64],
    grad_c: &[f64],
    grads: &mut LstmParams,
) -> StepGrads {
    let k = params.hidden_size();
    let mut da_i = vec![0.0; k];
    let mut da_f = vec![0.0; k];
    let mut da_o = vec![0.0; k];
    let mut da_u = vec![0.0; k];
    let mut dc_prev = vec![0.0; k];
    for j in 0..k {
        let (i, f, o, u, tc) = (cache.i[j], cache.f[j], cache.o[j], cache.u[j], cache.tanh_c[j]);
        let d_o = grad_h[j] * tc;
        let dc = grad_c[j] + grad_h[j] * o * (1.0 - tc * tc);
        da_i[j] = dc * u * i * (1.0 - i);
        da_f[j] = dc * cache.c_prev[j] * f * (1.0 - f);
        da_o[j] = d_o * o * (1.0 - o);
        da_u[j] = dc * i * (1.0 - u * u);
        dc_prev[j] = dc * f;
    }

    let mut dx = vec![0.0; k];
    let mut dh_prev = vec![0.0; k];
    let gates = [
        (&da_i, &params.w_i, &params.u_i),
        (&da_f, &params.w_f, &params.u_f),
        (&da_o, &params.w_o, &params.u_o),
        (&da_u, &params.w_u, &params.u_u),
    ];
    for (da, w, u) in gates {
        w.matvec_t_acc(da, &mut dx);
        u.matvec_t_acc(da, &mut dh_prev);
    }

    grads.w_i.add_outer(&da_i, &cache.x);
    grads.w_f.add_outer(&da_f, &cache.x);
    grads.w_o.add_outer(&da_o, &cache.x);
    grads.w_u.add_outer(&da_u, &cache.x);
    grads.u_i.add_outer(&da_i, &cache.h_prev);
    grads.u_f.add_outer(&da_f, &cache.h_prev);
    grads.u_o.add_outer(&da_o, &cache.h_prev);
    grads.u_u.add_outer(&da_u, &cache.h_prev);
    for j in 0..k {
        grads.b_i[j] += da_i[j];
        grads.b_f[j] += da_f[j];
        grads.b_o[j] += da_o[j];
        grads.b_u[j] += da_u[j];
    }

    StepGrads {
        x: dx,
        h_prev: dh_prev,
        c_prev: dc_prev,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::gradcheck::{gradient_check, relative_error};
    use crate::neural::rng::seeded;

    #[test]
    fn zero_params_give_half_gates_and_zero_state() {
        let p = LstmParams::zeros(3);
        let (s, cache) = step_cached(&p, &[0.4, -1.0, 2.0], &LstmState::zeros(3));
        assert!(cache.i.iter().all(|&v| v == 0.5));
        assert!(cache.f.iter().all(|&v| v == 0.5));
        assert!(cache.o.iter().all(|&v| v == 0.5));
        assert!(cache.u.iter().all(|&v| v == 0.0));
        assert_eq!(s, LstmState::zeros(3));
    }

    #[test]
    fn saturated_forget_gate_retains_memory() {
        let mut p = LstmParams::zeros(2);
        p.b_f = vec![20.0; 2];
        p.b_i = vec![-20.0; 2];
        let prev = LstmState {
            c: vec![0.7, -1.3],
            h: vec![0.0, 0.0],
        };
        let s = lstm_step(&p, &[0.5, 0.5], &prev).unwrap();
        assert!((s.c[0] - 0.7).abs() < 1e-8);
        assert!((s.c[1] + 1.3).abs() < 1e-8);
    }

    fn scalar_sigmoid(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    // Hand-picked K=2 weights, recomputed with plain scalar arithmetic.
    #[test]
    fn k2_step_matches_scalar_recomputation() {
        let mut p = LstmParams::zeros(2);
        let w = |a: f64, b: f64, c: f64, d: f64| Matrix::from_vec(2, 2, vec![a, b, c, d]).unwrap();
        p.w_i = w(0.1, -0.2, 0.3, 0.05);
        p.w_f = w(-0.3, 0.2, 0.1, 0.4);
        p.w_o = w(0.25, 0.15, -0.1, 0.2);
        p.w_u = w(0.5, -0.4, 0.3, -0.2);
        p.u_i = w(0.05, 0.1, -0.15, 0.2);
        p.u_f = w(0.3, -0.1, 0.2, 0.1);
        p.u_o = w(-0.2, 0.3, 0.05, -0.05);
        p.u_u = w(0.1, 0.1, -0.3, 0.4);
        p.b_i = vec![0.01, -0.02];
        p.b_f = vec![0.5, 0.4];
        p.b_o = vec![-0.1, 0.1];
        p.b_u = vec![0.0, 0.2];
        let x = [0.6, -0.8];
        let prev = LstmState {
            c: vec![0.3, -0.5],
            h: vec![0.2, -0.1],
        };

        let (x0, x1) = (x[0], x[1]);
        let (h0, h1) = (prev.h[0], prev.h[1]);
        let i0 = scalar_sigmoid(0.1 * x0 - 0.2 * x1 + 0.05 * h0 + 0.1 * h1 + 0.01);
        let i1 = scalar_sigmoid(0.3 * x0 + 0.05 * x1 - 0.15 * h0 + 0.2 * h1 - 0.02);
        let f0 = scalar_sigmoid(-0.3 * x0 + 0.2 * x1 + 0.3 * h0 - 0.1 * h1 + 0.5);
        let f1 = scalar_sigmoid(0.1 * x0 + 0.4 * x1 + 0.2 * h0 + 0.1 * h1 + 0.4);
        let o0 = scalar_sigmoid(0.25 * x0 + 0.15 * x1 - 0.2 * h0 + 0.3 * h1 - 0.1);
        let o1 = scalar_sigmoid(-0.1 * x0 + 0.2 * x1 + 0.05 * h0 - 0.05 * h1 + 0.1);
        let u0 = (0.5 * x0 - 0.4 * x1 + 0.1 * h0 + 0.1 * h1 + 0.0).tanh();
        let u1 = (0.3 * x0 - 0.2 * x1 - 0.3 * h0 + 0.4 * h1 + 0.2).tanh();
        let c0 = i0 * u0 + f0 * 0.3;
        let c1 = i1 * u1 + f1 * -0.5;
        let expect_h = [o0 * c0.tanh(), o1 * c1.tanh()];

        let s = lstm_step(&p, &x, &prev).unwrap();
        assert!((s.c[0] - c0).abs() < 1e-12);
        assert!((s.c[1] - c1).abs() < 1e-12);
        assert!((s.h[0] - expect_h[0]).abs() < 1e-12);
        assert!((s.h[1] - expect_h[1]).abs() < 1e-12);
    }

    #[test]
    fn step_rejects_mismatched_input() {
        let p = LstmParams::zeros(3);
        assert!(lstm_step(&p, &[1.0, 2.0], &LstmState::zeros(3)).is_err());
        let mut bad = LstmParams::zeros(3);
        bad.u_o = Matrix::zeros(3, 2);
        assert!(lstm_step(&bad, &[1.0, 2.0, 3.0], &LstmState::zeros(3)).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = seeded(3);
        let p = LstmParams::uniform(4, 0.5, &mut rng);
        let prev = LstmState {
            c: vec![0.1, 0.2, -0.3, 0.4],
            h: vec![0.0, 0.1, 0.2, -0.1],
        };
        let (_, cache) = step_cached(&p, &[0.3, 0.1, -0.2, 0.5], &prev);
        let mut g = p.zeroed();
        let out = lstm_backward(&p, &cache, &[0.0; 4], &[0.0; 4], &mut g).unwrap();
        assert!(g.flatten().iter().all(|&v| v == 0.0));
        assert!(out.x.iter().chain(&out.h_prev).chain(&out.c_prev).all(|&v| v == 0.0));
    }

    // K=1: every quantity is a scalar, so the chain rule can be written out directly.
    #[test]
    fn k1_backward_matches_hand_chain_rule() {
        let mut p = LstmParams::zeros(1);
        let set = |m: &mut Matrix, v: f64| m.set(0, 0, v);
        set(&mut p.w_i, 0.3);
        set(&mut p.w_f, -0.2);
        set(&mut p.w_o, 0.5);
        set(&mut p.w_u, 0.7);
        set(&mut p.u_i, 0.1);
        set(&mut p.u_f, 0.4);
        set(&mut p.u_o, -0.3);
        set(&mut p.u_u, 0.2);
        p.b_i = vec![0.05];
        p.b_f = vec![0.1];
        p.b_o = vec![-0.05];
        p.b_u = vec![0.02];
        let (x, h, c) = (0.8, -0.4, 0.6);
        let prev = LstmState { c: vec![c], h: vec![h] };
        let (_, cache) = step_cached(&p, &[x], &prev);
        let mut g = p.zeroed();
        // loss = h_t, so grad_h = 1, grad_c = 0
        let out = lstm_backward(&p, &cache, &[1.0], &[0.0], &mut g).unwrap();

        let i = scalar_sigmoid(0.3 * x + 0.1 * h + 0.05);
        let f = scalar_sigmoid(-0.2 * x + 0.4 * h + 0.1);
        let o = scalar_sigmoid(0.5 * x - 0.3 * h - 0.05);
        let u = (0.7 * x + 0.2 * h + 0.02).tanh();
        let ct = i * u + f * c;
        let tc = ct.tanh();
        let dct = o * (1.0 - tc * tc);
        let dao = tc * o * (1.0 - o);
        let dai = dct * u * i * (1.0 - i);
        let daf = dct * c * f * (1.0 - f);
        let dau = dct * i * (1.0 - u * u);
        let dx = 0.3 * dai - 0.2 * daf + 0.5 * dao + 0.7 * dau;
        let dh = 0.1 * dai + 0.4 * daf - 0.3 * dao + 0.2 * dau;

        assert!((out.x[0] - dx).abs() < 1e-12);
        assert!((out.h_prev[0] - dh).abs() < 1e-12);
        assert!((out.c_prev[0] - dct * f).abs() < 1e-12);
        assert!((g.w_o.get(0, 0) - dao * x).abs() < 1e-12);
        assert!((g.u_f.get(0, 0) - daf * h).abs() < 1e-12);
        assert!((g.b_u[0] - dau).abs() < 1e-12);
        assert!((g.w_i.get(0, 0) - dai * x).abs() < 1e-12);
    }

    /// Three-step unroll with a quadratic readout, checked against central differences.
    #[test]
    fn unrolled_backward_matches_finite_differences() {
        let mut rng = seeded(11);
        let k = 5;
        let p = LstmParams::uniform(k, 0.6, &mut rng);
        let xs: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let target: Vec<f64> = (0..k).map(|j| 0.1 * j as f64 - 0.2).collect();

        let loss = |p: &LstmParams| {
            let mut s = LstmState::zeros(k);
            let mut total = 0.0;
            for x in &xs {
                s = step_cached(p, x, &s).0;
                total += s.h.iter().zip(&target).map(|(a, b)| 0.5 * (a - b).powi(2)).sum::<f64>();
                total += 0.3 * s.c.iter().sum::<f64>();
            }
            total
        };

        let mut g = p.zeroed();
        let mut s = LstmState::zeros(k);
        let mut caches = Vec::new();
        let mut hs = Vec::new();
        for x in &xs {
            let (ns, c) = step_cached(&p, x, &s);
            hs.push(ns.h.clone());
            caches.push(c);
            s = ns;
        }
        let mut dh_next = vec![0.0; k];
        let mut dc_next = vec![0.0; k];
        for (cache, h) in caches.iter().zip(&hs).rev() {
            let dh: Vec<f64> = (0..k).map(|j| dh_next[j] + (h[j] - target[j])).collect();
            let dc: Vec<f64> = dc_next.iter().map(|v| v + 0.3).collect();
            let out = lstm_backward(&p, cache, &dh, &dc, &mut g).unwrap();
            dh_next = out.h_prev;
            dc_next = out.c_prev;
        }

        let report = gradient_check(&loss, &p, &g, 1e-5).unwrap();
        assert!(report.max_relative_error < 1e-5, "{report:?}");
        assert_eq!(relative_error(0.0, 0.0), 0.0);
    }
}
