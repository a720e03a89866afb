//! Feed-forward networks over backend values.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::backend::Backend;
use super::params::{Lifted, ParameterStore, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    None,
}

/// Layer widths including the input width, plus one activation per layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub activations: Vec<Activation>,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, activations: Vec<Activation>) -> Result<Self> {
        let spec = Self {
            widths,
            activations,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `hidden` layers with `hidden_act`, then a final layer with `last_act`.
    pub fn feed_forward(
        input: usize,
        hidden: &[usize],
        output: usize,
        hidden_act: Activation,
        last_act: Activation,
    ) -> Self {
        let mut widths = vec![input];
        widths.extend_from_slice(hidden);
        widths.push(output);
        let mut activations = vec![hidden_act; hidden.len()];
        activations.push(last_act);
        Self {
            widths,
            activations,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 {
            return Err(Error::Shape("an MLP needs at least one layer".into()));
        }
        if self.activations.len() != self.widths.len() - 1 {
            return Err(Error::Shape(format!(
                "{} layers but {} activations",
                self.widths.len() - 1,
                self.activations.len()
            )));
        }
        if self.widths.iter().any(|&w| w == 0) {
            return Err(Error::Shape("layer widths must be positive".into()));
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Adds `w{l}` (out×in) and `b{l}` for each layer under `module`,
    /// drawn from U(−1/√fan_in, 1/√fan_in).
    pub fn init_params<T: Scalar, R: Rng + ?Sized>(
        &self,
        store: &mut ParameterStore<T>,
        module: &str,
        rng: &mut R,
    ) {
        for (l, w) in self.widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let weights = (0..fan_in * fan_out)
                .map(|_| T::lit(rng.gen_range(-bound..bound)))
                .collect();
            let bias = (0..fan_out)
                .map(|_| T::lit(rng.gen_range(-bound..bound)))
                .collect();
            store.insert(
                module,
                &weight_name(l),
                Tensor {
                    shape: vec![fan_out, fan_in],
                    data: weights,
                },
            );
            store.insert(
                module,
                &bias_name(l),
                Tensor {
                    shape: vec![fan_out],
                    data: bias,
                },
            );
        }
    }

    /// Checks the store holds correctly shaped tensors for this spec.
    pub fn check_params<T: Scalar>(&self, store: &ParameterStore<T>, module: &str) -> Result<()> {
        for (l, w) in self.widths.windows(2).enumerate() {
            let wt = store
                .get(module, &weight_name(l))
                .ok_or_else(|| Error::Shape(format!("{module} is missing {}", weight_name(l))))?;
            let bt = store
                .get(module, &bias_name(l))
                .ok_or_else(|| Error::Shape(format!("{module} is missing {}", bias_name(l))))?;
            if wt.shape != [w[1], w[0]] || bt.shape != [w[1]] {
                return Err(Error::Shape(format!(
                    "{module} layer {l}: expected {}x{} weights",
                    w[1], w[0]
                )));
            }
        }
        Ok(())
    }
}

pub fn weight_name(layer: usize) -> String {
    format!("w{layer}")
}

pub fn bias_name(layer: usize) -> String {
    format!("b{layer}")
}

/// Borrowed weights and bias of one layer.
pub struct LayerView<'a, V> {
    pub weights: &'a [V],
    pub bias: &'a [V],
    pub fan_in: usize,
    pub fan_out: usize,
    pub activation: Activation,
}

impl<'a, V> LayerView<'a, V> {
    pub fn row(&self, j: usize) -> &'a [V] {
        &self.weights[j * self.fan_in..(j + 1) * self.fan_in]
    }
}

pub fn layer_views<'a, V: Copy>(
    spec: &MlpSpec,
    params: &'a Lifted<V>,
    module: &str,
) -> Result<Vec<LayerView<'a, V>>> {
    let mut out = Vec::with_capacity(spec.layers());
    for (l, w) in spec.widths.windows(2).enumerate() {
        let weights = params
            .tensor(module, &weight_name(l))
            .ok_or_else(|| Error::Shape(format!("no parameters for {module}.{}", weight_name(l))))?;
        let bias = params
            .tensor(module, &bias_name(l))
            .ok_or_else(|| Error::Shape(format!("no parameters for {module}.{}", bias_name(l))))?;
        if weights.len() != w[0] * w[1] || bias.len() != w[1] {
            return Err(Error::Shape(format!("{module} layer {l} has wrong size")));
        }
        out.push(LayerView {
            weights,
            bias,
            fan_in: w[0],
            fan_out: w[1],
            activation: spec.activations[l],
        });
    }
    Ok(out)
}

pub fn activate<T: Scalar, B: Backend<T>>(b: &mut B, act: Activation, x: B::V) -> B::V {
    match act {
        Activation::Relu => b.relu(x),
        Activation::Sigmoid => b.sigmoid(x),
        Activation::None => x,
    }
}

/// Point forward pass: affine layers interleaved with their activations.
pub fn mlp_forward<T: Scalar, B: Backend<T>>(
    b: &mut B,
    spec: &MlpSpec,
    params: &Lifted<B::V>,
    module: &str,
    input: &[B::V],
) -> Result<Vec<B::V>> {
    if input.len() != spec.input_width() {
        return Err(Error::Shape(format!(
            "{module} expects {} inputs, got {}",
            spec.input_width(),
            input.len()
        )));
    }
    let layers = layer_views(spec, params, module)?;
    let mut h: Vec<B::V> = input.to_vec();
    for layer in &layers {
        let mut next = Vec::with_capacity(layer.fan_out);
        for j in 0..layer.fan_out {
            let z = b.dot(layer.row(j), &h);
            let z = b.add(z, layer.bias[j]);
            next.push(activate(b, layer.activation, z));
        }
        h = next;
    }
    Ok(h)
}
