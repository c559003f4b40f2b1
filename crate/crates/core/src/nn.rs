//! Dense feed-forward networks with hand-written reverse-mode gradients and
//! an Adam optimizer.
//!
//! Hidden layers apply an affine map followed by the activation; the output
//! layer is linear. Batched calls take one sample per row.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};

const MLP_MAGIC: &[u8; 8] = b"PSMLP\0\0\0";
const ADAM_MAGIC: &[u8; 8] = b"PSADAM\0\0";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "relu" => Some(Activation::Relu),
            "tanh" => Some(Activation::Tanh),
            _ => None,
        }
    }

    fn tag(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
        }
    }

    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

/// One affine layer; `weight` is `outputs × inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    activation: Activation,
    layers: Vec<Layer>,
}

/// Intermediate values of a batched forward pass, kept for backward.
#[derive(Debug, Clone)]
pub struct Tape {
    /// Input of every layer (the network input first).
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl Tape {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

/// Gradients of a scalar with respect to every parameter, shaped like the
/// network's layers, plus the gradient with respect to the input rows.
#[derive(Debug, Clone, PartialEq)]
pub struct GradBundle {
    pub layers: Vec<Layer>,
    pub input: Array2<f64>,
}

impl GradBundle {
    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// Parameters flattened layer by layer: weights row-major, then biases.
    pub fn to_flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }
}

fn flatten(layers: &[Layer]) -> Vec<f64> {
    let mut out = Vec::new();
    for l in layers {
        out.extend(l.weight.iter());
        out.extend(l.bias.iter());
    }
    out
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], activation: Activation, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(sizes, activation)?;
        for layer in &mut net.layers {
            let (fan_out, fan_in) = layer.weight.dim();
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            layer.weight.iter_mut().for_each(|w| *w = rng.random_range(-limit..=limit));
        }
        Ok(net)
    }

    pub fn zeros(sizes: &[usize], activation: Activation) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config(format!("network sizes {sizes:?} need at least two non-zero layers")));
        }
        let layers = sizes
            .windows(2)
            .map(|w| Layer { weight: Array2::zeros((w[1], w[0])), bias: Array1::zeros(w[1]) })
            .collect();
        Ok(Self { sizes: sizes.to_vec(), activation, layers })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    /// Overwrites all parameters from the layout produced by [`Mlp::to_flat`].
    pub fn set_flat(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Dimension { expected: self.param_count(), got: params.len() });
        }
        let mut it = params.iter();
        for l in &mut self.layers {
            l.weight.iter_mut().chain(l.bias.iter_mut()).for_each(|p| *p = *it.next().unwrap());
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let x = ArrayView2::from_shape((1, input.len()), input).expect("contiguous slice");
        Ok(self.forward_batch(x)?.output.into_raw_vec_and_offset().0)
    }

    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Tape> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Dimension { expected: self.input_dim(), got: x.ncols() });
        }
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(last);
        let mut current = x.to_owned();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = current.dot(&layer.weight.t());
            z += &layer.bias;
            inputs.push(current);
            if k == last {
                return Ok(Tape { inputs, pre, output: z });
            }
            let act = self.activation;
            current = z.mapv(|v| act.apply(v));
            pre.push(z);
        }
        unreachable!("network has at least one layer")
    }

    /// Reverse-mode gradients of `output · upstream` for a single input.
    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> Result<GradBundle> {
        let x = ArrayView2::from_shape((1, input.len()), input).expect("contiguous slice");
        let tape = self.forward_batch(x)?;
        let up = ArrayView2::from_shape((1, upstream.len()), upstream).expect("contiguous slice");
        self.backward_batch(&tape, up)
    }

    /// Gradients of `Σ_rows output_row · upstream_row`, summed over the batch.
    pub fn backward_batch(&self, tape: &Tape, upstream: ArrayView2<f64>) -> Result<GradBundle> {
        let (layers, input) = self.reverse(tape, upstream, true)?;
        Ok(GradBundle { layers, input })
    }

    /// Only the gradient with respect to the input rows.
    pub fn input_gradient(&self, tape: &Tape, upstream: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.reverse(tape, upstream, false)?.1)
    }

    fn reverse(&self, tape: &Tape, upstream: ArrayView2<f64>, params: bool) -> Result<(Vec<Layer>, Array2<f64>)> {
        if upstream.dim() != tape.output.dim() {
            return Err(Error::Dimension { expected: tape.output.ncols(), got: upstream.ncols() });
        }
        let mut grads = Vec::with_capacity(if params { self.layers.len() } else { 0 });
        let mut delta = upstream.to_owned();
        for k in (0..self.layers.len()).rev() {
            if params {
                grads.push(Layer { weight: delta.t().dot(&tape.inputs[k]), bias: delta.sum_axis(Axis(0)) });
            }
            let mut dx = delta.dot(&self.layers[k].weight);
            if k == 0 {
                grads.reverse();
                return Ok((grads, dx));
            }
            let act = self.activation;
            Zip::from(&mut dx)
                .and(&tape.pre[k - 1])
                .and(&tape.inputs[k])
                .for_each(|d, &z, &a| *d *= act.derivative(z, a));
            delta = dx;
        }
        unreachable!("network has at least one layer")
    }

    /// `self ← tau·source + (1 − tau)·self`, elementwise.
    pub fn soft_update_from(&mut self, source: &Mlp, tau: f64) {
        for (t, s) in self.layers.iter_mut().zip(&source.layers) {
            Zip::from(&mut t.weight).and(&s.weight).for_each(|t, &s| *t = tau * s + (1.0 - tau) * *t);
            Zip::from(&mut t.bias).and(&s.bias).for_each(|t, &s| *t = tau * s + (1.0 - tau) * *t);
        }
    }

    /// Versioned binary checkpoint: sizes, activation tag and parameters in
    /// layer order (weights row-major, then biases) as little-endian `f64`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(MLP_MAGIC, FORMAT_VERSION);
        w.u8(self.activation.tag());
        w.u32(self.sizes.len() as u32);
        for &s in &self.sizes {
            w.u64(s as u64);
        }
        for l in &self.layers {
            w.f64s(l.weight.iter());
            w.f64s(l.bias.iter());
        }
        w.finish()
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader::new(buf, MLP_MAGIC, FORMAT_VERSION)?;
        let activation = match r.u8()? {
            0 => Activation::Relu,
            1 => Activation::Tanh,
            t => return Err(Error::Checkpoint(format!("unknown activation tag {t}"))),
        };
        let n = r.u32()? as usize;
        let sizes = (0..n).map(|_| r.u64().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        let mut net = Self::zeros(&sizes, activation).map_err(|e| Error::Checkpoint(e.to_string()))?;
        for l in &mut net.layers {
            for p in l.weight.iter_mut().chain(l.bias.iter_mut()) {
                *p = r.f64()?;
            }
        }
        r.expect_end()?;
        Ok(net)
    }
}

/// Adam moments and hyper-parameters for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Layer>,
    v: Vec<Layer>,
}

impl AdamState {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        let zeros = || net.layers.iter().map(|l| Layer { weight: Array2::zeros(l.weight.dim()), bias: Array1::zeros(l.bias.len()) }).collect();
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: zeros(), v: zeros() }
    }

    pub fn first_moment(&self) -> &[Layer] {
        &self.m
    }

    pub fn second_moment(&self) -> &[Layer] {
        &self.v
    }

    /// One bias-corrected Adam step (descending the gradient).
    pub fn step(&mut self, net: &mut Mlp, grads: &GradBundle) -> Result<()> {
        let congruent = grads.layers.len() == net.layers.len()
            && grads.layers.iter().zip(&net.layers).all(|(g, l)| g.weight.dim() == l.weight.dim() && g.bias.len() == l.bias.len())
            && self.m.len() == net.layers.len()
            && self.m.iter().zip(&net.layers).all(|(m, l)| m.weight.dim() == l.weight.dim());
        if !congruent {
            return Err(Error::Dimension { expected: net.param_count(), got: grads.to_flat().len() });
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradient"));
        }
        self.step += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let lr = self.lr;
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for (((layer, g), m), v) in net.layers.iter_mut().zip(&grads.layers).zip(&mut self.m).zip(&mut self.v) {
            Zip::from(&mut layer.weight).and(&mut m.weight).and(&mut v.weight).and(&g.weight).for_each(|p, m, v, &g| update(p, m, v, g));
            Zip::from(&mut layer.bias).and(&mut m.bias).and(&mut v.bias).and(&g.bias).for_each(|p, m, v, &g| update(p, m, v, g));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(ADAM_MAGIC, FORMAT_VERSION);
        w.f64(self.lr);
        w.f64(self.beta1);
        w.f64(self.beta2);
        w.f64(self.eps);
        w.u64(self.step);
        w.u32(self.m.len() as u32);
        for l in &self.m {
            w.u64(l.weight.nrows() as u64);
            w.u64(l.weight.ncols() as u64);
        }
        for moments in [&self.m, &self.v] {
            w.f64s(flatten(moments).iter());
        }
        w.finish()
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader::new(buf, ADAM_MAGIC, FORMAT_VERSION)?;
        let (lr, beta1, beta2, eps) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
        let step = r.u64()?;
        let n = r.u32()? as usize;
        let shapes = (0..n).map(|_| Ok((r.u64()? as usize, r.u64()? as usize))).collect::<Result<Vec<_>>>()?;
        let read_moments = |r: &mut Reader| -> Result<Vec<Layer>> {
            shapes
                .iter()
                .map(|&(rows, cols)| {
                    let weight = Array2::from_shape_vec((rows, cols), r.f64s(rows * cols)?).expect("shape matches length");
                    let bias = Array1::from(r.f64s(rows)?);
                    Ok(Layer { weight, bias })
                })
                .collect()
        };
        let m = read_moments(&mut r)?;
        let v = read_moments(&mut r)?;
        r.expect_end()?;
        Ok(Self { lr, beta1, beta2, eps, step, m, v })
    }
}
