//! Dense ReLU networks, Adam and a fixed-variance Gaussian policy head.
//!
//! Parameters live in one flat vector, layer by layer: the weight matrix
//! (row-major, `out x in`) followed by the bias vector.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::NnError;

pub const HIDDEN_WIDTH: usize = 100;
pub const HIDDEN_LAYERS: usize = 3;
const FORMAT_TAG: &str = "mlp v1";

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Activations recorded by [`Mlp::forward_cached`] for a later backward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    /// Input to each layer; `inputs[0]` is the network input.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each layer.
    pre: Vec<Vec<f64>>,
}

impl Cache {
    pub fn output(&self) -> &[f64] {
        self.pre.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

fn check_len(expected: usize, got: usize) -> Result<(), NnError> {
    if expected == got {
        Ok(())
    } else {
        Err(NnError::Shape { expected, got })
    }
}

impl Mlp {
    /// Network with the given layer widths and all parameters zero.
    pub fn zeros(sizes: &[usize]) -> Result<Self, NnError> {
        if sizes.len() < 2 {
            return Err(NnError::Invalid("need at least an input and an output layer".into()));
        }
        if sizes.contains(&0) {
            return Err(NnError::Invalid(format!("zero-width layer in {sizes:?}")));
        }
        let count = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Ok(Mlp {
            sizes: sizes.to_vec(),
            params: vec![0.0; count],
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self, NnError> {
        let mut net = Mlp::zeros(sizes)?;
        let mut offset = 0;
        for w in net.sizes.clone().windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut net.params[offset..offset + fan_in * fan_out] {
                *p = rng.gen_range(-limit..=limit);
            }
            offset += fan_in * fan_out + fan_out;
        }
        Ok(net)
    }

    /// `input → 100 → 100 → 100 → output`, Glorot initialized.
    pub fn standard<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Result<Self, NnError> {
        let mut sizes = vec![input];
        sizes.extend([HIDDEN_WIDTH; HIDDEN_LAYERS]);
        sizes.push(output);
        Mlp::glorot(&sizes, rng)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.sizes.last().expect("at least two layers")
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<(), NnError> {
        check_len(self.params.len(), params.len())?;
        self.params = params;
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        check_len(self.input_size(), x.len())?;
        let layers = self.sizes.len() - 1;
        let mut a = x.to_vec();
        let mut offset = 0;
        for l in 0..layers {
            let z = self.affine(l, offset, &a);
            offset += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
            a = if l + 1 < layers { relu(z) } else { z };
        }
        Ok(a)
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<Cache, NnError> {
        check_len(self.input_size(), x.len())?;
        let layers = self.sizes.len() - 1;
        let mut inputs = Vec::with_capacity(layers);
        let mut pre = Vec::with_capacity(layers);
        let mut a = x.to_vec();
        let mut offset = 0;
        for l in 0..layers {
            let z = self.affine(l, offset, &a);
            offset += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
            inputs.push(a);
            a = relu(z.clone());
            pre.push(z);
        }
        Ok(Cache { inputs, pre })
    }

    /// Gradient of `output · upstream` with respect to every parameter, in the
    /// flat parameter layout.
    pub fn backward(&self, cache: &Cache, upstream: &[f64]) -> Result<Vec<f64>, NnError> {
        check_len(self.output_size(), upstream.len())?;
        let layers = self.sizes.len() - 1;
        check_len(layers, cache.pre.len())?;
        let mut grads = vec![0.0; self.params.len()];
        let mut offsets = Vec::with_capacity(layers);
        let mut offset = 0;
        for l in 0..layers {
            offsets.push(offset);
            offset += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        let mut delta = upstream.to_vec();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            if l + 1 < layers {
                for (d, z) in delta.iter_mut().zip(&cache.pre[l]) {
                    if *z <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let base = offsets[l];
            let input = &cache.inputs[l];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &mut grads[base + o * n_in..base + (o + 1) * n_in];
                for (g, a) in row.iter_mut().zip(input) {
                    *g = d * a;
                }
                grads[base + n_in * n_out + o] = d;
            }
            if l > 0 {
                let w = &self.params[base..base + n_in * n_out];
                let mut next = vec![0.0; n_in];
                for o in 0..n_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    for (n, wv) in next.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                        *n += d * wv;
                    }
                }
                delta = next;
            }
        }
        Ok(grads)
    }

    fn affine(&self, l: usize, offset: usize, a: &[f64]) -> Vec<f64> {
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let w = &self.params[offset..offset + n_in * n_out];
        let b = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
        (0..n_out).map(|o| dot(&w[o * n_in..(o + 1) * n_in], a) + b[o]).collect()
    }

    /// Plain-text form: a tag line, the layer sizes, then one parameter per line.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.params.len() * 24);
        let sizes: Vec<String> = self.sizes.iter().map(ToString::to_string).collect();
        let _ = writeln!(out, "{FORMAT_TAG}");
        let _ = writeln!(out, "{}", sizes.join(" "));
        for p in &self.params {
            let _ = writeln!(out, "{p:e}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, NnError> {
        let mut lines = text.lines();
        match lines.next() {
            Some(tag) if tag.trim() == FORMAT_TAG => {}
            other => return Err(NnError::Invalid(format!("bad header {other:?}"))),
        }
        let sizes = lines
            .next()
            .ok_or_else(|| NnError::Invalid("missing layer sizes".into()))?
            .split_whitespace()
            .map(|s| s.parse::<usize>().map_err(|e| NnError::Invalid(format!("layer size {s:?}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let mut net = Mlp::zeros(&sizes)?;
        let params = lines
            .filter(|l| !l.trim().is_empty())
            .map(|s| s.trim().parse::<f64>().map_err(|e| NnError::Invalid(format!("parameter {s:?}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        net.set_params(params)?;
        Ok(net)
    }
}

/// Dot product over four independent partial sums.
fn dot(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let xs = x.chunks_exact(4);
    let ys = y.chunks_exact(4);
    let tail: f64 = xs.remainder().iter().zip(ys.remainder()).map(|(a, b)| a * b).sum();
    for (cx, cy) in xs.zip(ys) {
        for k in 0..4 {
            acc[k] += cx[k] * cy[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn relu(mut z: Vec<f64>) -> Vec<f64> {
    for v in &mut z {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    z
}

/// Bias-corrected Adam state for one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Adam::with_rate(n, 0.001)
    }

    pub fn with_rate(n: usize, alpha: f64) -> Self {
        Adam {
            alpha,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-7,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One descent step: `params -= alpha * m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), NnError> {
        check_len(self.m.len(), params.len())?;
        check_len(self.m.len(), grads.len())?;
        self.t += 1;
        let c1 = 1.0 - self.beta1.powf(self.t as f64);
        let c2 = 1.0 - self.beta2.powf(self.t as f64);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let rate = self.alpha / c1;
        let inv_c2 = 1.0 / c2;
        let n = params.len();
        let (m, v, g) = (&mut self.m[..n], &mut self.v[..n], &grads[..n]);
        for i in 0..n {
            let mi = flush(b1 * m[i] + (1.0 - b1) * g[i]);
            let vi = flush(b2 * v[i] + (1.0 - b2) * g[i] * g[i]);
            m[i] = mi;
            v[i] = vi;
            params[i] -= rate * mi / ((vi * inv_c2).sqrt() + eps);
        }
        Ok(())
    }
}

/// Moments of parameters that stop receiving gradient decay geometrically;
/// left alone they sink into the subnormal range, where arithmetic is slow.
#[inline]
fn flush(x: f64) -> f64 {
    if x.abs() < f64::MIN_POSITIVE {
        0.0
    } else {
        x
    }
}

/// Log-density of `a` under independent normals with means `mu` and common
/// standard deviation `std`, and its gradient with respect to `mu`.
pub fn gaussian_logprob_grad(mu: &[f64], std: f64, a: &[f64]) -> (f64, Vec<f64>) {
    let norm = (std * (2.0 * PI).sqrt()).ln();
    let var = std * std;
    let mut logprob = 0.0;
    let mut grad = Vec::with_capacity(mu.len());
    for (m, x) in mu.iter().zip(a) {
        let d = x - m;
        logprob += -d * d / (2.0 * var) - norm;
        grad.push(d / var);
    }
    (logprob, grad)
}

/// Maps raw mean-net outputs to action-space means.
#[derive(Debug, Clone, PartialEq)]
pub enum MeanHead {
    /// `mu = scale * out`.
    Linear(f64),
    /// `mu_i = lo_i + (hi_i - lo_i) * sigmoid(out_i)`, one range per output.
    Bounded(Vec<(f64, f64)>),
}

impl MeanHead {
    fn check(&self, outputs: usize) -> Result<(), NnError> {
        match self {
            MeanHead::Linear(k) if !k.is_finite() => Err(NnError::Invalid(format!("mean scale {k} is not finite"))),
            MeanHead::Bounded(r) if r.len() != outputs => Err(NnError::Shape {
                expected: outputs,
                got: r.len(),
            }),
            MeanHead::Bounded(r) if r.iter().any(|(lo, hi)| lo.partial_cmp(hi).is_none_or(|o| o.is_gt())) => {
                Err(NnError::Invalid("mean range needs lo <= hi".into()))
            }
            _ => Ok(()),
        }
    }

    /// Means and their derivatives with respect to the raw outputs.
    fn apply(&self, out: &[f64]) -> (Vec<f64>, Vec<f64>) {
        match self {
            MeanHead::Linear(k) => (out.iter().map(|o| o * k).collect(), vec![*k; out.len()]),
            MeanHead::Bounded(r) => out
                .iter()
                .zip(r)
                .map(|(o, (lo, hi))| {
                    let s = 1.0 / (1.0 + (-o).exp());
                    (lo + (hi - lo) * s, (hi - lo) * s * (1.0 - s))
                })
                .unzip(),
        }
    }
}

/// Gaussian policy over a mean network with a fixed standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub mean_net: Mlp,
    pub std: f64,
    pub head: MeanHead,
}

impl GaussianPolicy {
    pub fn new(mean_net: Mlp, std: f64, head: MeanHead) -> Result<Self, NnError> {
        if !(std > 0.0 && std.is_finite()) {
            return Err(NnError::Invalid(format!("policy std must be > 0, got {std}")));
        }
        head.check(mean_net.output_size())?;
        Ok(GaussianPolicy { mean_net, std, head })
    }

    pub fn mean(&self, s: &[f64]) -> Result<Vec<f64>, NnError> {
        self.mean_in(s, &self.head)
    }

    /// Mean under an explicit head, e.g. ranges that depend on the state.
    pub fn mean_in(&self, s: &[f64], head: &MeanHead) -> Result<Vec<f64>, NnError> {
        head.check(self.mean_net.output_size())?;
        Ok(head.apply(&self.mean_net.forward(s)?).0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, s: &[f64], rng: &mut R) -> Result<Vec<f64>, NnError> {
        self.sample_in(s, &self.head, rng)
    }

    pub fn sample_in<R: Rng + ?Sized>(&self, s: &[f64], head: &MeanHead, rng: &mut R) -> Result<Vec<f64>, NnError> {
        let mut mu = self.mean_in(s, head)?;
        for m in &mut mu {
            let z: f64 = StandardNormal.sample(rng);
            *m += self.std * z;
        }
        Ok(mu)
    }

    pub fn logprob(&self, s: &[f64], a: &[f64]) -> Result<f64, NnError> {
        let mu = self.mean(s)?;
        check_len(mu.len(), a.len())?;
        Ok(gaussian_logprob_grad(&mu, self.std, a).0)
    }

    /// `ln pi(a|s)` and its gradient with respect to the mean-net parameters.
    pub fn logprob_param_grad(&self, s: &[f64], a: &[f64]) -> Result<(f64, Vec<f64>), NnError> {
        self.logprob_param_grad_in(s, a, &self.head)
    }

    pub fn logprob_param_grad_in(&self, s: &[f64], a: &[f64], head: &MeanHead) -> Result<(f64, Vec<f64>), NnError> {
        head.check(self.mean_net.output_size())?;
        let cache = self.mean_net.forward_cached(s)?;
        let (mu, dmu) = head.apply(cache.output());
        check_len(mu.len(), a.len())?;
        let (lp, mut g) = gaussian_logprob_grad(&mu, self.std, a);
        for (v, d) in g.iter_mut().zip(&dmu) {
            *v *= d;
        }
        Ok((lp, self.mean_net.backward(&cache, &g)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn zero_net_maps_to_zero() {
        let net = Mlp::zeros(&[3, 5, 2]).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer() {
        let mut net = Mlp::zeros(&[2, 2]).unwrap();
        net.set_params(vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(net.forward(&[0.5, -4.0]).unwrap(), vec![0.5, -4.0]);
    }

    #[test]
    fn shape_errors() {
        let net = Mlp::zeros(&[3, 4, 1]).unwrap();
        assert_eq!(net.forward(&[1.0]), Err(NnError::Shape { expected: 3, got: 1 }));
        let cache = net.forward_cached(&[0.0; 3]).unwrap();
        assert!(net.backward(&cache, &[1.0, 2.0]).is_err());
        let mut adam = Adam::new(2);
        assert!(adam.step(&mut [0.0; 3], &[0.0; 3]).is_err());
        assert!(Mlp::zeros(&[3]).is_err());
    }

    #[test]
    fn glorot_bounds_and_reproducibility() {
        let a = Mlp::standard(3, 1, &mut rng(1)).unwrap();
        let b = Mlp::standard(3, 1, &mut rng(1)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.sizes(), &[3, 100, 100, 100, 1]);
        let limit = (6.0f64 / 103.0).sqrt();
        assert!(a.params()[..300].iter().all(|p| p.abs() <= limit));
        assert!(a.params()[300..400].iter().all(|&p| p == 0.0));
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let net = Mlp::standard(3, 2, &mut rng(4)).unwrap();
        let cache = net.forward_cached(&[0.3, 0.1, 0.9]).unwrap();
        let g = net.backward(&cache, &[0.0, 0.0]).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dead_relu_blocks_gradient() {
        // One hidden unit with a negative pre-activation.
        let mut net = Mlp::zeros(&[1, 1, 1]).unwrap();
        net.set_params(vec![-1.0, 0.0, 2.0, 0.5]).unwrap();
        let cache = net.forward_cached(&[3.0]).unwrap();
        let g = net.backward(&cache, &[1.0]).unwrap();
        assert_eq!(g, vec![0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn adam_first_step_moves_by_alpha() {
        let mut p = vec![0.5, -1.0, 2.0];
        let mut adam = Adam::new(3);
        adam.step(&mut p, &[3.0, -0.2, 7.0]).unwrap();
        let moved = [0.5 - p[0], -1.0 - p[1], 2.0 - p[2]];
        assert!((moved[0] - 0.001).abs() < 1e-9);
        assert!((moved[1] + 0.001).abs() < 1e-9);
        assert!((moved[2] - 0.001).abs() < 1e-9);
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut p = vec![1.0, 2.0];
        let mut adam = Adam::new(2);
        for _ in 0..50 {
            adam.step(&mut p, &[0.0, 0.0]).unwrap();
        }
        assert_eq!(p, vec![1.0, 2.0]);
    }

    #[test]
    fn adam_two_steps_hand_recursion() {
        let (a, b1, b2, eps) = (0.001f64, 0.9f64, 0.999f64, 1e-7f64);
        let mut x = 0.0;
        let (mut m, mut v) = (0.0, 0.0);
        for t in 1..=2 {
            m = b1 * m + (1.0 - b1);
            v = b2 * v + (1.0 - b2);
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            x -= a * mh / (vh.sqrt() + eps);
        }
        let mut p = vec![0.0];
        let mut adam = Adam::new(1);
        adam.step(&mut p, &[1.0]).unwrap();
        adam.step(&mut p, &[1.0]).unwrap();
        assert!((p[0] - x).abs() < 1e-15);
        assert_eq!(adam.steps(), 2);
    }

    #[test]
    fn logprob_at_mode() {
        let (lp, g) = gaussian_logprob_grad(&[1.0, 2.0, 3.0], 2.0, &[1.0, 2.0, 3.0]);
        assert_eq!(g, vec![0.0; 3]);
        assert!((lp + 3.0 * (2.0 * (2.0 * PI).sqrt()).ln()).abs() < 1e-12);
    }

    #[test]
    fn logprob_unit_offset() {
        let (lp, g) = gaussian_logprob_grad(&[0.0], 1.0, &[1.0]);
        assert_eq!(g, vec![1.0]);
        assert!((lp - (-0.5 - (2.0 * PI).sqrt().ln())).abs() < 1e-12);
    }

    #[test]
    fn text_round_trip() {
        let net = Mlp::standard(2, 1, &mut rng(9)).unwrap();
        let back = Mlp::from_text(&net.to_text()).unwrap();
        assert_eq!(net, back);
        assert!(Mlp::from_text("nonsense").is_err());
        assert!(Mlp::from_text("mlp v1\n2 1\n0.5\n").is_err());
    }

    #[test]
    fn policy_rejects_nonpositive_std() {
        let net = Mlp::zeros(&[2, 1]).unwrap();
        assert!(GaussianPolicy::new(net.clone(), 0.0, MeanHead::Linear(1.0)).is_err());
        assert!(GaussianPolicy::new(net, -1.0, MeanHead::Linear(1.0)).is_err());
    }
}
