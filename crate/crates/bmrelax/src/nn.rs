//! Minimal dense networks with hand-written reverse-mode gradients, plus
//! the Adam optimizer that updates them.
//!
//! Two architectures cover every conditional in the model: a single affine
//! map, and a two-hidden-layer tanh MLP. Forward passes return an explicit
//! cache; backward passes consume it, accumulate parameter gradients in
//! place (so minibatches sum naturally), and return the input gradient for
//! the chain upstream. No framework, no graph — the call sites are the
//! graph, which keeps every gradient independently checkable by finite
//! differences.

use ndarray::{Array1, Array2};
use rand::Rng;

/// One affine layer y = Wx + b with gradient accumulators.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub gw: Array2<f64>,
    pub gb: Array1<f64>,
}

impl Linear {
    /// Weights uniform in ±1/√fan_in, biases zero.
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let scale = if in_dim > 0 {
            (in_dim as f64).sqrt().recip()
        } else {
            1.0
        };
        let w = Array2::from_shape_fn((out_dim, in_dim), |_| rng.gen_range(-scale..=scale));
        Linear {
            w,
            b: Array1::zeros(out_dim),
            gw: Array2::zeros((out_dim, in_dim)),
            gb: Array1::zeros(out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn forward(&self, x: &Array1<f64>) -> Array1<f64> {
        self.w.dot(x) + &self.b
    }

    /// Accumulate ∂L/∂W += dy xᵀ, ∂L/∂b += dy; return ∂L/∂x = Wᵀ dy.
    pub fn backward(&mut self, x: &Array1<f64>, dy: &Array1<f64>) -> Array1<f64> {
        for (i, &d) in dy.iter().enumerate() {
            self.gb[i] += d;
            if d != 0.0 {
                for (j, &xj) in x.iter().enumerate() {
                    self.gw[[i, j]] += d * xj;
                }
            }
        }
        self.w.t().dot(dy)
    }

    pub fn zero_grad(&mut self) {
        self.gw.fill(0.0);
        self.gb.fill(0.0);
    }
}

/// Forward-pass intermediates needed by the corresponding backward pass.
#[derive(Debug, Clone)]
pub enum NetCache {
    Linear {
        x: Array1<f64>,
    },
    Mlp {
        x: Array1<f64>,
        h1: Array1<f64>,
        h2: Array1<f64>,
    },
}

/// A conditional network: affine, or tanh MLP with two hidden layers.
#[derive(Debug, Clone)]
pub enum Net {
    Linear(Linear),
    Mlp {
        l1: Linear,
        l2: Linear,
        l3: Linear,
    },
}

impl Net {
    pub fn linear(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        Net::Linear(Linear::new(in_dim, out_dim, rng))
    }

    /// Two hidden layers of `hidden` tanh units.
    pub fn mlp(in_dim: usize, hidden: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        Net::Mlp {
            l1: Linear::new(in_dim, hidden, rng),
            l2: Linear::new(hidden, hidden, rng),
            l3: Linear::new(hidden, out_dim, rng),
        }
    }

    pub fn in_dim(&self) -> usize {
        match self {
            Net::Linear(l) => l.in_dim(),
            Net::Mlp { l1, .. } => l1.in_dim(),
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            Net::Linear(l) => l.out_dim(),
            Net::Mlp { l3, .. } => l3.out_dim(),
        }
    }

    pub fn forward(&self, x: &Array1<f64>) -> (Array1<f64>, NetCache) {
        match self {
            Net::Linear(l) => (l.forward(x), NetCache::Linear { x: x.clone() }),
            Net::Mlp { l1, l2, l3 } => {
                let h1 = l1.forward(x).mapv(f64::tanh);
                let h2 = l2.forward(&h1).mapv(f64::tanh);
                let y = l3.forward(&h2);
                (
                    y,
                    NetCache::Mlp {
                        x: x.clone(),
                        h1,
                        h2,
                    },
                )
            }
        }
    }

    /// Accumulate parameter gradients for this (cache, dy) pair and return
    /// the gradient with respect to the input.
    pub fn backward(&mut self, cache: &NetCache, dy: &Array1<f64>) -> Array1<f64> {
        match (self, cache) {
            (Net::Linear(l), NetCache::Linear { x }) => l.backward(x, dy),
            (Net::Mlp { l1, l2, l3 }, NetCache::Mlp { x, h1, h2 }) => {
                let dh2 = l3.backward(h2, dy);
                // tanh'(u) = 1 − tanh²(u), and hᵢ stores tanh(u).
                let dpre2 = &dh2 * &h2.mapv(|t| 1.0 - t * t);
                let dh1 = l2.backward(h1, &dpre2);
                let dpre1 = &dh1 * &h1.mapv(|t| 1.0 - t * t);
                l1.backward(x, &dpre1)
            }
            _ => panic!("network/cache architecture mismatch"),
        }
    }

    pub fn zero_grad(&mut self) {
        match self {
            Net::Linear(l) => l.zero_grad(),
            Net::Mlp { l1, l2, l3 } => {
                l1.zero_grad();
                l2.zero_grad();
                l3.zero_grad();
            }
        }
    }

    pub fn param_count(&self) -> usize {
        let count = |l: &Linear| l.w.len() + l.b.len();
        match self {
            Net::Linear(l) => count(l),
            Net::Mlp { l1, l2, l3 } => count(l1) + count(l2) + count(l3),
        }
    }

    /// Visit (parameter, gradient) pairs in a fixed deterministic order.
    pub fn for_each_param_grad(&mut self, f: &mut impl FnMut(&mut f64, f64)) {
        let mut layer = |l: &mut Linear| {
            for (p, g) in l.w.iter_mut().zip(l.gw.iter()) {
                f(p, *g);
            }
            for (p, g) in l.b.iter_mut().zip(l.gb.iter()) {
                f(p, *g);
            }
        };
        match self {
            Net::Linear(l) => layer(l),
            Net::Mlp { l1, l2, l3 } => {
                layer(l1);
                layer(l2);
                layer(l3);
            }
        }
    }

    /// Visit parameters immutably (checkpoint serialization).
    pub fn for_each_param(&self, f: &mut impl FnMut(f64)) {
        let layer = |l: &Linear, f: &mut dyn FnMut(f64)| {
            for p in l.w.iter() {
                f(*p);
            }
            for p in l.b.iter() {
                f(*p);
            }
        };
        match self {
            Net::Linear(l) => layer(l, f),
            Net::Mlp { l1, l2, l3 } => {
                layer(l1, f);
                layer(l2, f);
                layer(l3, f);
            }
        }
    }

    /// Overwrite parameters from a values iterator (checkpoint restore).
    pub fn load_params(&mut self, values: &mut impl Iterator<Item = f64>) {
        self.for_each_param_grad(&mut |p, _| {
            *p = values.next().expect("checkpoint parameter stream too short");
        });
    }

    /// True if any parameter gradient is non-finite.
    pub fn has_nonfinite_grad(&mut self) -> bool {
        let mut bad = false;
        self.for_each_param_grad(&mut |_, g| {
            if !g.is_finite() {
                bad = true;
            }
        });
        bad
    }
}

/// Adam with a per-step visiting cursor: every step walks all tensors in
/// the same fixed order, so moment slot i always belongs to the same
/// scalar parameter. Checkpoints persist (m, v, t) to resume bit-identically.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    cursor: usize,
}

impl Adam {
    pub fn new(param_count: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
            cursor: 0,
        }
    }

    /// Start one optimizer step (advances the bias-correction clock).
    pub fn begin_step(&mut self) {
        self.t += 1;
        self.cursor = 0;
    }

    /// Update one scalar parameter with its gradient of the *loss to
    /// minimize*; consumes the next moment slot.
    pub fn update(&mut self, param: &mut f64, grad: f64) {
        let i = self.cursor;
        self.cursor += 1;
        let m = &mut self.m[i];
        let v = &mut self.v[i];
        *m = self.beta1 * *m + (1.0 - self.beta1) * grad;
        *v = self.beta2 * *v + (1.0 - self.beta2) * grad * grad;
        let m_hat = *m / (1.0 - self.beta1.powi(self.t as i32));
        let v_hat = *v / (1.0 - self.beta2.powi(self.t as i32));
        *param -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
    }

    /// All moment slots must have been visited exactly once per step.
    pub fn end_step(&self) {
        assert_eq!(
            self.cursor,
            self.m.len(),
            "Adam visited {} of {} parameter slots",
            self.cursor,
            self.m.len()
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use ndarray::arr1;

    /// Scalar loss used by the finite-difference checks: L = Σ sin(yᵢ)·wᵢ
    /// with fixed weights, nonlinear enough to exercise every path.
    fn loss_and_dy(y: &Array1<f64>) -> (f64, Array1<f64>) {
        let mut loss = 0.0;
        let mut dy = Array1::zeros(y.len());
        for (i, &v) in y.iter().enumerate() {
            let wi = 0.5 + 0.13 * i as f64;
            loss += v.sin() * wi;
            dy[i] = v.cos() * wi;
        }
        (loss, dy)
    }

    fn fd_check(net: &mut Net, x: &Array1<f64>, tol: f64) {
        let (y, cache) = net.forward(x);
        let (_, dy) = loss_and_dy(&y);
        net.zero_grad();
        let dx = net.backward(&cache, &dy);

        // Input gradients.
        let h = 1e-6;
        for j in 0..x.len() {
            let mut xp = x.clone();
            xp[j] += h;
            let mut xm = x.clone();
            xm[j] -= h;
            let lp = loss_and_dy(&net.forward(&xp).0).0;
            let lm = loss_and_dy(&net.forward(&xm).0).0;
            let fd = (lp - lm) / (2.0 * h);
            assert!(
                (dx[j] - fd).abs() <= tol * fd.abs().max(1.0),
                "input {j}: analytic {} vs fd {fd}",
                dx[j]
            );
        }

        // Parameter gradients: perturb through the visitor.
        let mut analytic = Vec::new();
        net.for_each_param_grad(&mut |_, g| analytic.push(g));
        for k in 0..analytic.len() {
            let mut idx = 0;
            net.for_each_param_grad(&mut |p, _| {
                if idx == k {
                    *p += h;
                }
                idx += 1;
            });
            let lp = loss_and_dy(&net.forward(x).0).0;
            let mut idx = 0;
            net.for_each_param_grad(&mut |p, _| {
                if idx == k {
                    *p -= 2.0 * h;
                }
                idx += 1;
            });
            let lm = loss_and_dy(&net.forward(x).0).0;
            let mut idx = 0;
            net.for_each_param_grad(&mut |p, _| {
                if idx == k {
                    *p += h;
                }
                idx += 1;
            });
            let fd = (lp - lm) / (2.0 * h);
            assert!(
                (analytic[k] - fd).abs() <= tol * fd.abs().max(1.0),
                "param {k}: analytic {} vs fd {fd}",
                analytic[k]
            );
        }
    }

    #[test]
    fn linear_gradients_match_finite_differences() {
        let mut r = rng::stream(1, rng::purpose::INIT, 0);
        let mut net = Net::linear(4, 3, &mut r);
        fd_check(&mut net, &arr1(&[0.3, -0.8, 1.2, 0.05]), 1e-7);
    }

    #[test]
    fn mlp_gradients_match_finite_differences() {
        let mut r = rng::stream(2, rng::purpose::INIT, 0);
        let mut net = Net::mlp(3, 8, 2, &mut r);
        fd_check(&mut net, &arr1(&[0.4, -0.2, 0.9]), 1e-5);
    }

    #[test]
    fn backward_accumulates_across_calls() {
        let mut r = rng::stream(3, rng::purpose::INIT, 0);
        let mut net = Net::linear(2, 2, &mut r);
        let x = arr1(&[1.0, -1.0]);
        let dy = arr1(&[0.5, 0.25]);
        let (_, cache) = net.forward(&x);
        net.zero_grad();
        net.backward(&cache, &dy);
        let mut once = Vec::new();
        net.for_each_param_grad(&mut |_, g| once.push(g));
        net.backward(&cache, &dy);
        let mut twice = Vec::new();
        net.for_each_param_grad(&mut |_, g| twice.push(g));
        for (a, b) in once.iter().zip(twice.iter()) {
            assert!((2.0 * a - b).abs() < 1e-14, "grads must accumulate");
        }
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let mut r = rng::stream(4, rng::purpose::INIT, 0);
        let net = Net::mlp(16, 200, 8, &mut r);
        if let Net::Mlp { l1, l2, .. } = &net {
            let bound1 = (16.0_f64).sqrt().recip() + 1e-12;
            assert!(l1.w.iter().all(|v| v.abs() <= bound1));
            assert!(l1.b.iter().all(|&v| v == 0.0));
            let bound2 = (200.0_f64).sqrt().recip() + 1e-12;
            assert!(l2.w.iter().all(|v| v.abs() <= bound2));
        } else {
            panic!("expected MLP");
        }
    }

    #[test]
    fn adam_matches_hand_computed_steps() {
        let mut opt = Adam::new(1, 0.1);
        let mut p = 1.0_f64;
        let g = 2.0;
        // Step 1: m=0.2, v=0.004, m̂=2, v̂=4 (wait: v̂=0.004/0.001=4), so
        // Δ = 0.1·2/(2+1e-8).
        opt.begin_step();
        opt.update(&mut p, g);
        opt.end_step();
        let expect1 = 1.0 - 0.1 * 2.0 / (4.0_f64.sqrt() + 1e-8);
        assert!((p - expect1).abs() < 1e-12, "{p} vs {expect1}");
        // Step 2 with gradient −1.
        opt.begin_step();
        opt.update(&mut p, -1.0);
        opt.end_step();
        let m2 = 0.9 * 0.2 + 0.1 * (-1.0);
        let v2 = 0.999 * 0.004 + 0.001 * 1.0;
        let m_hat = m2 / (1.0 - 0.9_f64.powi(2));
        let v_hat = v2 / (1.0 - 0.999_f64.powi(2));
        let expect2 = expect1 - 0.1 * m_hat / (v_hat.sqrt() + 1e-8);
        assert!((p - expect2).abs() < 1e-12, "{p} vs {expect2}");
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let mut r = rng::stream(5, rng::purpose::INIT, 0);
        let mut net = Net::mlp(3, 5, 2, &mut r);
        let before: Vec<f64> = {
            let mut v = Vec::new();
            net.for_each_param(&mut |p| v.push(p));
            v
        };
        let (_, cache) = net.forward(&arr1(&[0.1, 0.2, 0.3]));
        net.zero_grad();
        net.backward(&cache, &arr1(&[1.0, -1.0]));
        let mut opt = Adam::new(net.param_count(), 0.0);
        opt.begin_step();
        net.for_each_param_grad(&mut |p, g| opt.update(p, g));
        opt.end_step();
        let mut after = Vec::new();
        net.for_each_param(&mut |p| after.push(p));
        assert_eq!(before, after);
    }

    #[test]
    fn load_params_round_trips() {
        let mut r = rng::stream(6, rng::purpose::INIT, 0);
        let src = Net::mlp(4, 6, 3, &mut r);
        let mut dump = Vec::new();
        src.for_each_param(&mut |p| dump.push(p));
        let mut r2 = rng::stream(7, rng::purpose::INIT, 0);
        let mut dst = Net::mlp(4, 6, 3, &mut r2);
        dst.load_params(&mut dump.clone().into_iter());
        let mut out = Vec::new();
        dst.for_each_param(&mut |p| out.push(p));
        assert_eq!(dump, out);
    }
}
