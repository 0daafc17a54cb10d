//! Fully connected network with a fixed topology and hand-written backprop.

use std::fmt;
use std::str::FromStr;

use crate::error::{check_dim, invalid, Error, Result};
use crate::nn::Matrix;
use crate::rng::SeededRng;
use crate::scalar::{axpy, Scalar};

/// Hidden-layer nonlinearity. The output layer is always linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    /// `x · sigmoid(x)`
    #[default]
    Silu,
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    fn apply<S: Scalar>(self, z: S) -> S {
        match self {
            Activation::Silu => z * sigmoid(z),
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(S::zero()),
        }
    }

    #[inline]
    fn derivative<S: Scalar>(self, z: S) -> S {
        match self {
            Activation::Silu => {
                let s = sigmoid(z);
                s * (S::one() + z * (S::one() - s))
            }
            Activation::Tanh => {
                let t = z.tanh();
                S::one() - t * t
            }
            Activation::Relu => {
                if z > S::zero() {
                    S::one()
                } else {
                    S::zero()
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Silu => "silu",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "silu" => Ok(Activation::Silu),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(invalid("activation", format!("unknown activation `{other}`"))),
        }
    }
}

#[inline]
fn sigmoid<S: Scalar>(z: S) -> S {
    // Branch keeps exp() from overflowing for large |z|.
    if z >= S::zero() {
        S::one() / (S::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (S::one() + e)
    }
}

/// One dense layer: `out = W · in + b` with `W` of shape `fan_out × fan_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<S> {
    pub weight: Matrix<S>,
    pub bias: Vec<S>,
}

impl<S: Scalar> Layer<S> {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Matrix::zeros(fan_out, fan_in),
            bias: vec![S::zero(); fan_out],
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.cols()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.rows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<S> {
    widths: Vec<usize>,
    layers: Vec<Layer<S>>,
    activation: Activation,
}

/// Per-parameter gradients, laid out exactly like [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads<S> {
    pub layers: Vec<Layer<S>>,
}

/// Activations saved by [`MlpParams::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<S> {
    widths: Vec<usize>,
    /// `inputs[k]` is the input to layer `k`; `inputs[0]` is the network input.
    inputs: Vec<Matrix<S>>,
    /// Pre-activations of every hidden layer.
    pre_activations: Vec<Matrix<S>>,
}

fn validate_widths(widths: &[usize]) -> Result<()> {
    if widths.len() < 2 {
        return Err(invalid("widths", "need at least an input and an output width"));
    }
    if let Some(i) = widths.iter().position(|&w| w == 0) {
        return Err(invalid("widths", format!("layer {i} has zero width")));
    }
    Ok(())
}

impl<S: Scalar> MlpParams<S> {
    /// He-style init: weights `N(0, 2 / fan_in)`, biases zero.
    pub fn init(widths: &[usize], activation: Activation, rng: &mut SeededRng) -> Result<Self> {
        validate_widths(widths)?;
        let layers = widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let scale = (2.0 / fan_in as f64).sqrt();
                let mut layer = Layer::zeros(fan_in, fan_out);
                for v in layer.weight.as_mut_slice() {
                    *v = S::lit(rng.normal() * scale);
                }
                layer
            })
            .collect();
        Ok(Self {
            widths: widths.to_vec(),
            layers,
            activation,
        })
    }

    pub fn zeros(widths: &[usize], activation: Activation) -> Result<Self> {
        validate_widths(widths)?;
        Ok(Self {
            widths: widths.to_vec(),
            layers: widths.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
            activation,
        })
    }

    /// Builds parameters from explicit layers, checking that consecutive shapes chain.
    pub fn from_layers(layers: Vec<Layer<S>>, activation: Activation) -> Result<Self> {
        let first = layers.first().ok_or(Error::Empty("layers"))?;
        let mut widths = vec![first.fan_in()];
        for layer in &layers {
            check_dim("layer fan_in", *widths.last().unwrap(), layer.fan_in())?;
            check_dim("layer bias", layer.fan_out(), layer.bias.len())?;
            widths.push(layer.fan_out());
        }
        validate_widths(&widths)?;
        Ok(Self {
            widths,
            layers,
            activation,
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layers(&self) -> &[Layer<S>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<S>] {
        &mut self.layers
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.as_slice().len() + l.bias.len())
            .sum()
    }

    /// Parameter storage as flat slices: weight then bias, layer by layer.
    pub fn slices(&self) -> Vec<&[S]> {
        layer_slices(&self.layers)
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [S]> {
        layer_slices_mut(&mut self.layers)
    }

    /// Copies all parameters into one vector in [`slices`](Self::slices) order.
    pub fn to_flat(&self) -> Vec<S> {
        self.slices().concat()
    }

    pub fn set_flat(&mut self, flat: &[S]) -> Result<()> {
        check_dim("flat parameters", self.num_params(), flat.len())?;
        let mut offset = 0;
        for s in self.slices_mut() {
            let n = s.len();
            s.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    pub fn predict(&self, input: &Matrix<S>) -> Result<Matrix<S>> {
        check_dim("network input width", self.input_width(), input.cols())?;
        let last = self.layers.len() - 1;
        let mut act = input.clone();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = dense(layer, &act)?;
            if k != last {
                for v in z.as_mut_slice() {
                    *v = self.activation.apply(*v);
                }
            }
            act = z;
        }
        Ok(act)
    }

    pub fn forward(&self, input: &Matrix<S>) -> Result<(Matrix<S>, ForwardCache<S>)> {
        check_dim("network input width", self.input_width(), input.cols())?;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(last);
        let mut act = input.clone();
        for (k, layer) in self.layers.iter().enumerate() {
            let z = dense(layer, &act)?;
            inputs.push(act);
            if k == last {
                act = z;
            } else {
                act = z.map(|v| self.activation.apply(v));
                pre_activations.push(z);
            }
        }
        let cache = ForwardCache {
            widths: self.widths.clone(),
            inputs,
            pre_activations,
        };
        Ok((act, cache))
    }

    /// Gradients of the scalar whose derivative w.r.t. the network output is
    /// `output_grad`, with respect to every parameter and to the input.
    pub fn backward(
        &self,
        cache: &ForwardCache<S>,
        output_grad: &Matrix<S>,
    ) -> Result<(MlpGrads<S>, Matrix<S>)> {
        if cache.widths != self.widths {
            return Err(Error::StaleCache(format!(
                "cache widths {:?} vs network widths {:?}",
                cache.widths, self.widths
            )));
        }
        let batch = cache.inputs[0].rows();
        if output_grad.shape() != (batch, self.output_width()) {
            return Err(Error::StaleCache(format!(
                "output gradient shape {:?} vs forward output {:?}",
                output_grad.shape(),
                (batch, self.output_width())
            )));
        }

        let n = self.layers.len();
        let mut grads: Vec<Layer<S>> = Vec::with_capacity(n);
        let mut delta = output_grad.clone();
        for k in (0..n).rev() {
            let layer = &self.layers[k];
            if k != n - 1 {
                let z = &cache.pre_activations[k];
                for (d, &zv) in delta.as_mut_slice().iter_mut().zip(z.as_slice()) {
                    *d *= self.activation.derivative(zv);
                }
            }
            let input = &cache.inputs[k];
            let mut g = Layer::zeros(layer.fan_in(), layer.fan_out());
            let mut prev = Matrix::zeros(batch, layer.fan_in());
            for r in 0..batch {
                let d_row = delta.row(r);
                let in_row = input.row(r);
                for (o, &d) in d_row.iter().enumerate() {
                    if d == S::zero() {
                        continue;
                    }
                    g.bias[o] += d;
                    axpy(d, in_row, g.weight.row_mut(o));
                    axpy(d, layer.weight.row(o), prev.row_mut(r));
                }
            }
            grads.push(g);
            delta = prev;
        }
        grads.reverse();
        Ok((MlpGrads { layers: grads }, delta))
    }
}

impl<S: Scalar> MlpGrads<S> {
    pub fn zeros_like(params: &MlpParams<S>) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| Layer::zeros(l.fan_in(), l.fan_out()))
                .collect(),
        }
    }

    pub fn slices(&self) -> Vec<&[S]> {
        layer_slices(&self.layers)
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [S]> {
        layer_slices_mut(&mut self.layers)
    }

    pub fn to_flat(&self) -> Vec<S> {
        self.slices().concat()
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

fn layer_slices<S: Scalar>(layers: &[Layer<S>]) -> Vec<&[S]> {
    layers
        .iter()
        .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
        .collect()
}

fn layer_slices_mut<S: Scalar>(layers: &mut [Layer<S>]) -> Vec<&mut [S]> {
    layers
        .iter_mut()
        .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
        .collect()
}

fn dense<S: Scalar>(layer: &Layer<S>, input: &Matrix<S>) -> Result<Matrix<S>> {
    let mut z = input.matmul_transposed(&layer.weight)?;
    for r in 0..z.rows() {
        for (v, &b) in z.row_mut(r).iter_mut().zip(&layer.bias) {
            *v += b;
        }
    }
    Ok(z)
}
