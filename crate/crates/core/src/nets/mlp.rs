use rand::Rng;
use rand_distr::{Distribution, Uniform};

use super::NetError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
}

impl Activation {
    fn apply(self, x: &mut [f64]) {
        if self == Activation::Tanh {
            x.iter_mut().for_each(|v| *v = v.tanh());
        }
    }

    /// Multiplies `grad` by the derivative, given the activation's outputs.
    fn backprop(self, y: &[f64], grad: &mut [f64]) {
        if self == Activation::Tanh {
            for (g, y) in grad.iter_mut().zip(y) {
                *g *= 1.0 - y * y;
            }
        }
    }

    pub fn code(self) -> f64 {
        match self {
            Activation::Identity => 0.0,
            Activation::Tanh => 1.0,
        }
    }

    pub fn from_code(c: f64) -> Option<Self> {
        match c as i64 {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Tanh),
            _ => None,
        }
    }
}

/// Fully connected layer, weights row-major `outputs x inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

/// Feed-forward network: tanh hidden layers, configurable output activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub output: Activation,
}

/// Parameter-shaped tensors in `[w0, b0, w1, b1, ...]` order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Vec<f64>>);

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self(net.tensors().iter().map(|t| vec![0.0; t.len()]).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|x| x.is_finite())
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Activations recorded by a batched forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    pub batch: usize,
    /// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`.
    pub acts: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("tape has an input")
    }
}

/// `c = a * b (+ c when accumulate)` with arbitrary strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    c: &mut [f64],
    accumulate: bool,
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(a.len() >= (m - 1) * rsa + (k.max(1) - 1) * csa + usize::from(k > 0));
    debug_assert!(c.len() >= m * n);
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: dimensions and strides describe regions inside the given slices
    // (checked by callers through the layer shapes), and `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl Mlp {
    /// Fan-in scaled uniform initialisation: entries in `±1/sqrt(fan_in)`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], output: Activation, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let layers = sizes
            .windows(2)
            .map(|s| {
                let bound = 1.0 / (s[0] as f64).sqrt();
                let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
                Dense {
                    inputs: s[0],
                    outputs: s[1],
                    w: (0..s[0] * s[1]).map(|_| dist.sample(rng)).collect(),
                    b: (0..s[1]).map(|_| dist.sample(rng)).collect(),
                }
            })
            .collect();
        Self { layers, output }
    }

    pub fn zeros(sizes: &[usize], output: Activation) -> Self {
        let layers = sizes
            .windows(2)
            .map(|s| Dense {
                inputs: s[0],
                outputs: s[1],
                w: vec![0.0; s[0] * s[1]],
                b: vec![0.0; s[1]],
            })
            .collect();
        Self { layers, output }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(|l| l.outputs));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn scale_last_layer(&mut self, factor: f64) {
        if let Some(l) = self.layers.last_mut() {
            l.w.iter_mut().chain(l.b.iter_mut()).for_each(|x| *x *= factor);
        }
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.w.as_slice(), l.b.as_slice()])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.w.as_mut_slice(), l.b.as_mut_slice()])
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.sizes() == other.sizes() && self.output == other.output
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output
        } else {
            Activation::Tanh
        }
    }

    fn check_input(&self, len: usize, batch: usize) -> Result<(), NetError> {
        if len != batch * self.input_dim() {
            return Err(NetError::Dimension {
                expected: batch * self.input_dim(),
                got: len,
            });
        }
        Ok(())
    }

    /// Batched forward pass recording every activation. `x` is `batch x input_dim`, row-major.
    pub fn forward_tape(&self, x: &[f64], batch: usize) -> Result<Tape, NetError> {
        self.check_input(x.len(), batch)?;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for (li, layer) in self.layers.iter().enumerate() {
            let prev = &acts[li];
            let mut y = Vec::with_capacity(batch * layer.outputs);
            for _ in 0..batch {
                y.extend_from_slice(&layer.b);
            }
            gemm(
                batch,
                layer.inputs,
                layer.outputs,
                prev,
                (layer.inputs, 1),
                &layer.w,
                (1, layer.inputs),
                &mut y,
                true,
            );
            self.activation(li).apply(&mut y);
            acts.push(y);
        }
        Ok(Tape { batch, acts })
    }

    pub fn forward_batch(&self, x: &[f64], batch: usize) -> Result<Vec<f64>, NetError> {
        Ok(self.forward_tape(x, batch)?.acts.pop().expect("output layer"))
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NetError> {
        self.forward_batch(x, 1)
    }

    /// Reverse pass for a recorded tape. `upstream` is the cotangent of the
    /// output (`batch x output_dim`). Returns parameter gradients and the input gradient.
    pub fn backward(&self, tape: &Tape, upstream: &[f64]) -> Result<(Gradients, Vec<f64>), NetError> {
        let batch = tape.batch;
        if upstream.len() != batch * self.output_dim() {
            return Err(NetError::Dimension {
                expected: batch * self.output_dim(),
                got: upstream.len(),
            });
        }
        let mut grads = vec![Vec::new(); 2 * self.layers.len()];
        let mut delta = upstream.to_vec();
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            self.activation(li).backprop(&tape.acts[li + 1], &mut delta);
            let x = &tape.acts[li];
            let mut dw = vec![0.0; layer.w.len()];
            gemm(
                layer.outputs,
                batch,
                layer.inputs,
                &delta,
                (1, layer.outputs),
                x,
                (layer.inputs, 1),
                &mut dw,
                false,
            );
            let mut db = vec![0.0; layer.outputs];
            for row in delta.chunks_exact(layer.outputs) {
                for (d, r) in db.iter_mut().zip(row) {
                    *d += r;
                }
            }
            let mut dx = vec![0.0; batch * layer.inputs];
            gemm(
                batch,
                layer.outputs,
                layer.inputs,
                &delta,
                (layer.outputs, 1),
                &layer.w,
                (layer.inputs, 1),
                &mut dx,
                false,
            );
            grads[2 * li] = dw;
            grads[2 * li + 1] = db;
            delta = dx;
        }
        Ok((Gradients(grads), delta))
    }

    /// Single-input convenience over [`backward`](Self::backward).
    pub fn gradients(&self, x: &[f64], upstream: &[f64]) -> Result<(Gradients, Vec<f64>), NetError> {
        let tape = self.forward_tape(x, 1)?;
        self.backward(&tape, upstream)
    }
}
