//! Dense feed-forward networks with a fixed-topology reverse-mode tape.
//!
//! Parameters live in one flat vector laid out layer by layer as
//! `[W_0 (in x out, row-major), b_0, W_1, b_1, ...]`, so the optimizer,
//! gradient clipping and checkpointing all work on plain slices.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Tensor2;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
            Activation::Identity => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Tanh),
            2 => Some(Activation::Identity),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    #[inline]
    fn apply(self, x: &mut [f64]) {
        match self {
            Activation::Relu => x.iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Tanh => x.iter_mut().for_each(|v| *v = v.tanh()),
            Activation::Identity => {}
        }
    }

    /// Multiplies `grad` by the derivative, expressed through the activation's output `y`.
    #[inline]
    fn backprop(self, y: &[f64], grad: &mut [f64]) {
        match self {
            Activation::Relu => {
                for (g, &y) in grad.iter_mut().zip(y) {
                    if y <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            Activation::Tanh => {
                for (g, &y) in grad.iter_mut().zip(y) {
                    *g *= 1.0 - y * y;
                }
            }
            Activation::Identity => {}
        }
    }
}

#[derive(Debug, Clone)]
struct Tape {
    // activations[0] is the input; activations[l + 1] is layer l's output.
    activations: Vec<Tensor2>,
}

/// Multi-layer perceptron. `hidden` is applied after every layer but the
/// last, which uses `output`.
#[derive(Debug, Clone)]
pub struct MlpNet {
    sizes: Vec<usize>,
    hidden: Activation,
    output: Activation,
    params: Vec<f64>,
    tape: Option<Tape>,
}

impl MlpNet {
    /// Builds a network with He/Glorot-uniform weights and zero biases.
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(sizes, hidden, output)?;
        for layer in 0..net.num_layers() {
            let (fan_in, fan_out) = (sizes[layer], sizes[layer + 1]);
            let act = if layer + 1 == net.num_layers() {
                output
            } else {
                hidden
            };
            let limit = match act {
                Activation::Relu => (6.0 / fan_in as f64).sqrt(),
                _ => (6.0 / (fan_in + fan_out) as f64).sqrt(),
            };
            let (w, _) = net.layer_range(layer);
            for v in &mut net.params[w] {
                *v = rng.random_range(-limit..limit);
            }
        }
        Ok(net)
    }

    /// All-zero parameters; mostly useful for tests and checkpoint loading.
    pub fn zeros(sizes: &[usize], hidden: Activation, output: Activation) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Shape(format!("invalid layer sizes {sizes:?}")));
        }
        let n = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Ok(Self {
            sizes: sizes.to_vec(),
            hidden,
            output,
            params: vec![0.0; n],
            tape: None,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        self.sizes[self.sizes.len() - 1]
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Flat ranges of the weight matrix and bias vector of `layer`.
    pub fn layer_range(&self, layer: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let mut off = 0;
        for w in self.sizes.windows(2).take(layer) {
            off += w[0] * w[1] + w[1];
        }
        let (i, o) = (self.sizes[layer], self.sizes[layer + 1]);
        (off..off + i * o, off + i * o..off + i * o + o)
    }

    /// Multiplies the last layer's weights by `factor` (small-output initialization).
    pub fn scale_output_layer(&mut self, factor: f64) {
        let (w, _) = self.layer_range(self.num_layers() - 1);
        self.params[w].iter_mut().for_each(|v| *v *= factor);
    }

    fn check_input(&self, input: &Tensor2) -> Result<()> {
        if input.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} columns, network expects {}",
                input.cols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn layer_forward(&self, layer: usize, x: &Tensor2) -> Tensor2 {
        let (wr, br) = self.layer_range(layer);
        let (w, b) = (&self.params[wr], &self.params[br]);
        let out_dim = self.sizes[layer + 1];
        let act = if layer + 1 == self.num_layers() {
            self.output
        } else {
            self.hidden
        };
        let mut out = Tensor2::zeros(x.rows(), out_dim);
        for r in 0..x.rows() {
            let y = out.row_mut(r);
            y.copy_from_slice(b);
            for (i, &xi) in x.row(r).iter().enumerate() {
                // Inputs are mostly one-hot features, so skipping zeros is a large win.
                if xi == 0.0 {
                    continue;
                }
                let wrow = &w[i * out_dim..(i + 1) * out_dim];
                for (yo, &wv) in y.iter_mut().zip(wrow) {
                    *yo += xi * wv;
                }
            }
            act.apply(y);
        }
        out
    }

    /// Forward pass without recording a tape.
    pub fn infer(&self, input: &Tensor2) -> Result<Tensor2> {
        self.check_input(input)?;
        let mut x = self.layer_forward(0, input);
        for layer in 1..self.num_layers() {
            x = self.layer_forward(layer, &x);
        }
        Ok(x)
    }

    /// Forward pass that records the activations `backward` needs.
    pub fn forward(&mut self, input: &Tensor2) -> Result<Tensor2> {
        self.check_input(input)?;
        let mut activations = Vec::with_capacity(self.sizes.len());
        activations.push(input.clone());
        for layer in 0..self.num_layers() {
            let next = self.layer_forward(layer, &activations[layer]);
            activations.push(next);
        }
        let out = activations.last().cloned().expect("at least one layer");
        self.tape = Some(Tape { activations });
        Ok(out)
    }

    /// Consumes the tape of the last `forward` and returns `d loss / d params`
    /// given `d loss / d output`.
    pub fn backward(&mut self, loss_grad: &Tensor2) -> Result<Vec<f64>> {
        let tape = self.tape.take().ok_or(Error::NoTape)?;
        let out = tape.activations.last().expect("non-empty tape");
        if loss_grad.rows() != out.rows() || loss_grad.cols() != out.cols() {
            return Err(Error::Shape(format!(
                "loss gradient is {}x{}, output is {}x{}",
                loss_grad.rows(),
                loss_grad.cols(),
                out.rows(),
                out.cols()
            )));
        }
        let mut grads = vec![0.0; self.params.len()];
        let mut delta = loss_grad.clone();
        for layer in (0..self.num_layers()).rev() {
            let act = if layer + 1 == self.num_layers() {
                self.output
            } else {
                self.hidden
            };
            let x = &tape.activations[layer];
            let y = &tape.activations[layer + 1];
            let (in_dim, out_dim) = (self.sizes[layer], self.sizes[layer + 1]);
            for r in 0..delta.rows() {
                act.backprop(y.row(r), delta.row_mut(r));
            }
            let (wr, br) = self.layer_range(layer);
            let (gw, gb) = grads[wr.start..br.end].split_at_mut(in_dim * out_dim);
            for r in 0..delta.rows() {
                let d = delta.row(r);
                for (g, &dv) in gb.iter_mut().zip(d) {
                    *g += dv;
                }
                for (i, &xi) in x.row(r).iter().enumerate() {
                    if xi == 0.0 {
                        continue;
                    }
                    let grow = &mut gw[i * out_dim..(i + 1) * out_dim];
                    for (g, &dv) in grow.iter_mut().zip(d) {
                        *g += xi * dv;
                    }
                }
            }
            if layer > 0 {
                let w = &self.params[wr];
                let mut prev = Tensor2::zeros(delta.rows(), in_dim);
                for r in 0..delta.rows() {
                    let d = delta.row(r);
                    for (i, p) in prev.row_mut(r).iter_mut().enumerate() {
                        let wrow = &w[i * out_dim..(i + 1) * out_dim];
                        *p = wrow.iter().zip(d).map(|(a, b)| a * b).sum();
                    }
                }
                delta = prev;
            }
        }
        Ok(grads)
    }

    /// Drops any recorded tape.
    pub fn clear_tape(&mut self) {
        self.tape = None;
    }
}
