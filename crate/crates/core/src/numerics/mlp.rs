//! Multilayer perceptron with analytic backpropagation.
//!
//! Layout: `z_k = W_k a_{k-1} + b_k`, `a_k = act(z_k)` on hidden layers and
//! identity on the output layer. The forward pass is deterministic; identical
//! parameters and input produce bit-identical output.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use super::{Matrix, NumericsError, Vector};

/// Nonlinearity applied to all hidden layers (identity on the output layer).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative as a function of the pre-activation. The rectifier uses the
    /// zero subgradient at the kink.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }
}

/// Weight initialization scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitScheme {
    /// Uniform on `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, zero biases.
    FanInUniform,
    /// All weights and biases zero.
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Layer {
    weight: Matrix,
    bias: Vector,
}

/// A dense feed-forward network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Layer>,
    activation: Activation,
}

/// Per-layer parameter gradients, shaped exactly like the network.
#[derive(Debug, Clone)]
pub struct MlpGradients {
    pub layers: Vec<LayerGradients>,
}

#[derive(Debug, Clone)]
pub struct LayerGradients {
    pub weight: Matrix,
    pub bias: Vector,
}

impl MlpGradients {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            layers: mlp
                .layers
                .iter()
                .map(|l| LayerGradients {
                    weight: Matrix::zeros(l.weight.rows(), l.weight.cols()),
                    bias: Vector::zeros(l.bias.dim()),
                })
                .collect(),
        }
    }

    /// `self += other`, layer by layer.
    pub fn accumulate(&mut self, other: &MlpGradients) {
        debug_assert_eq!(self.layers.len(), other.layers.len());
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weight.data_mut().iter_mut().zip(b.weight.data()) {
                *x += y;
            }
            a.bias.axpy(1.0, b.bias.as_slice());
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            for x in l.weight.data_mut() {
                *x *= s;
            }
            for i in 0..l.bias.dim() {
                l.bias[i] *= s;
            }
        }
    }

    /// Flattened view in the same order as [`Mlp::flatten_params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.weight.data());
            out.extend_from_slice(l.bias.as_slice());
        }
        out
    }
}

/// Cached intermediates from a forward pass, for reuse in backprop.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `activations[0]` is the input; `activations[k]` the output of layer k.
    activations: Vec<Vector>,
    /// Pre-activations per layer.
    pre_activations: Vec<Vector>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Vector {
        self.activations.last().expect("trace has layers")
    }

    /// Minimum absolute pre-activation across hidden layers. Useful for
    /// rejecting configurations near rectifier kinks in gradient checks.
    pub fn min_abs_hidden_preactivation(&self) -> f64 {
        let n = self.pre_activations.len();
        self.pre_activations
            .iter()
            .take(n.saturating_sub(1))
            .flat_map(|z| z.as_slice().iter().map(|v| v.abs()))
            .fold(f64::INFINITY, f64::min)
    }
}

impl Mlp {
    /// Builds a network with the given layer dimensions
    /// (input, hidden..., output), at least one layer.
    pub fn new(
        layer_dims: &[usize],
        activation: Activation,
        init: InitScheme,
        rng: &mut ChaCha12Rng,
    ) -> Result<Self, NumericsError> {
        if layer_dims.len() < 2 {
            return Err(NumericsError::EmptyShape {
                context: "mlp layer dims",
            });
        }
        if layer_dims.iter().any(|&d| d == 0) {
            return Err(NumericsError::EmptyShape {
                context: "mlp layer width",
            });
        }
        let mut layers = Vec::with_capacity(layer_dims.len() - 1);
        for w in layer_dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let mut weight = Matrix::zeros(fan_out, fan_in);
            if let InitScheme::FanInUniform = init {
                let bound = 1.0 / (fan_in as f64).sqrt();
                for v in weight.data_mut() {
                    *v = rng.random_range(-bound..bound);
                }
            }
            layers.push(Layer {
                weight,
                bias: Vector::zeros(fan_out),
            });
        }
        Ok(Self { layers, activation })
    }

    /// Single square identity layer: forward is the identity map.
    pub fn identity(dim: usize) -> Self {
        Self {
            layers: vec![Layer {
                weight: Matrix::identity(dim),
                bias: Vector::zeros(dim),
            }],
            activation: Activation::Identity,
        }
    }

    /// Builds from explicit per-layer weights and biases.
    pub fn from_layers(
        weights: Vec<Matrix>,
        biases: Vec<Vector>,
        activation: Activation,
    ) -> Result<Self, NumericsError> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(NumericsError::EmptyShape { context: "mlp layers" });
        }
        for (i, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.rows() != b.dim() {
                return Err(NumericsError::DimensionMismatch {
                    context: "layer bias",
                    expected: w.rows(),
                    found: b.dim(),
                });
            }
            if i > 0 && w.cols() != weights[i - 1].rows() {
                return Err(NumericsError::DimensionMismatch {
                    context: "adjacent layers",
                    expected: weights[i - 1].rows(),
                    found: w.cols(),
                });
            }
        }
        Ok(Self {
            layers: weights
                .into_iter()
                .zip(biases)
                .map(|(weight, bias)| Layer { weight, bias })
                .collect(),
            activation,
        })
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").weight.rows()
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(|l| l.weight.rows()));
        dims
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.rows() * l.weight.cols() + l.bias.dim())
            .sum()
    }

    fn check_input(&self, input: &[f64]) -> Result<(), NumericsError> {
        if input.len() != self.input_dim() {
            return Err(NumericsError::DimensionMismatch {
                context: "mlp input",
                expected: self.input_dim(),
                found: input.len(),
            });
        }
        Ok(())
    }

    /// Forward pass; hidden layers are activated, the output layer is linear.
    pub fn forward(&self, input: &[f64]) -> Result<Vector, NumericsError> {
        Ok(self.forward_traced(input)?.output().clone())
    }

    /// Forward pass retaining intermediates for backprop.
    pub fn forward_traced(&self, input: &[f64]) -> Result<ForwardTrace, NumericsError> {
        self.check_input(input)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        activations.push(Vector::new(input.to_vec())?);
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = vec![0.0; layer.weight.rows()];
            layer.weight.matvec(activations[k].as_slice(), &mut z);
            for (zi, bi) in z.iter_mut().zip(layer.bias.as_slice()) {
                *zi += bi;
            }
            let last = k + 1 == self.layers.len();
            let a: Vec<f64> = if last {
                z.clone()
            } else {
                z.iter().map(|&v| self.activation.apply(v)).collect()
            };
            pre_activations.push(Vector(z));
            activations.push(Vector(a));
        }
        Ok(ForwardTrace {
            activations,
            pre_activations,
        })
    }

    /// Backpropagates `output_gradient` (dL/d output) through the network,
    /// returning parameter gradients and the gradient w.r.t. the input.
    pub fn backward(
        &self,
        input: &[f64],
        output_gradient: &[f64],
    ) -> Result<(MlpGradients, Vector), NumericsError> {
        let trace = self.forward_traced(input)?;
        self.backward_from_trace(&trace, output_gradient)
    }

    /// Same as [`Mlp::backward`] but reusing a cached forward trace.
    pub fn backward_from_trace(
        &self,
        trace: &ForwardTrace,
        output_gradient: &[f64],
    ) -> Result<(MlpGradients, Vector), NumericsError> {
        if output_gradient.len() != self.output_dim() {
            return Err(NumericsError::DimensionMismatch {
                context: "mlp output gradient",
                expected: self.output_dim(),
                found: output_gradient.len(),
            });
        }
        let mut grads = MlpGradients::zeros_like(self);
        // Output layer is linear, so delta starts as the output gradient.
        let mut delta = output_gradient.to_vec();
        for k in (0..self.layers.len()).rev() {
            if k + 1 != self.layers.len() {
                // Hidden layer: fold in the activation derivative.
                for (d, &z) in delta.iter_mut().zip(trace.pre_activations[k].as_slice()) {
                    *d *= self.activation.derivative(z);
                }
            }
            let layer = &self.layers[k];
            grads.layers[k]
                .weight
                .add_outer(1.0, &delta, trace.activations[k].as_slice());
            grads.layers[k].bias.axpy(1.0, &delta);
            let mut prev = vec![0.0; layer.weight.cols()];
            layer.weight.matvec_transpose(&delta, &mut prev);
            delta = prev;
        }
        Ok((grads, Vector::new(delta)?))
    }

    /// Parameters flattened layer by layer (weights row-major, then bias).
    pub fn flatten_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(l.weight.data());
            out.extend_from_slice(l.bias.as_slice());
        }
        out
    }

    /// Writes back a flattened parameter vector.
    pub fn set_params(&mut self, params: &[f64]) -> Result<(), NumericsError> {
        if params.len() != self.param_count() {
            return Err(NumericsError::DimensionMismatch {
                context: "mlp flattened params",
                expected: self.param_count(),
                found: params.len(),
            });
        }
        let mut offset = 0;
        for l in &mut self.layers {
            let wlen = l.weight.rows() * l.weight.cols();
            l.weight
                .data_mut()
                .copy_from_slice(&params[offset..offset + wlen]);
            offset += wlen;
            let blen = l.bias.dim();
            l.bias
                .as_mut_slice()
                .copy_from_slice(&params[offset..offset + blen]);
            offset += blen;
        }
        Ok(())
    }

    /// Shape and finiteness check, used when loading persisted networks.
    pub fn validate(&self) -> Result<(), NumericsError> {
        for (i, l) in self.layers.iter().enumerate() {
            if l.weight.rows() != l.bias.dim() {
                return Err(NumericsError::DimensionMismatch {
                    context: "layer bias",
                    expected: l.weight.rows(),
                    found: l.bias.dim(),
                });
            }
            if i > 0 && l.weight.cols() != self.layers[i - 1].weight.rows() {
                return Err(NumericsError::DimensionMismatch {
                    context: "adjacent layers",
                    expected: self.layers[i - 1].weight.rows(),
                    found: l.weight.cols(),
                });
            }
            for (index, &value) in l.weight.data().iter().enumerate() {
                if !value.is_finite() {
                    return Err(NumericsError::NonFinite { index, value });
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    /// Second, independently coded forward pass used as an oracle: plain
    /// index loops, no shared code with the implementation above.
    fn reference_forward(mlp: &Mlp, input: &[f64]) -> Vec<f64> {
        let mut a: Vec<f64> = input.to_vec();
        for (k, layer) in mlp.layers.iter().enumerate() {
            let rows = layer.weight.rows();
            let cols = layer.weight.cols();
            let mut z = vec![0.0; rows];
            for r in 0..rows {
                let mut acc = layer.bias[r];
                for c in 0..cols {
                    acc += layer.weight.get(r, c) * a[c];
                }
                z[r] = acc;
            }
            if k + 1 < mlp.layers.len() {
                for v in z.iter_mut() {
                    *v = mlp.activation.apply(*v);
                }
            }
            a = z;
        }
        a
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mlp = Mlp::identity(3);
        let out = mlp.forward(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(out.as_slice(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn zero_weights_return_bias() {
        let w = Matrix::zeros(2, 3);
        let b = Vector::from(vec![0.5, -1.5]);
        let mlp = Mlp::from_layers(vec![w], vec![b], Activation::Relu).unwrap();
        for input in [[1.0, 2.0, 3.0], [-4.0, 0.0, 9.0]] {
            let out = mlp.forward(&input).unwrap();
            assert_eq!(out.as_slice(), &[0.5, -1.5]);
        }
    }

    #[test]
    fn forward_matches_independent_implementation() {
        let mut rng = stream_rng(42, "mlp-forward-oracle");
        let mlp = Mlp::new(
            &[4, 7, 5, 3],
            Activation::Relu,
            InitScheme::FanInUniform,
            &mut rng,
        )
        .unwrap();
        let input = [0.3, -1.2, 0.8, 2.0];
        let ours = mlp.forward(&input).unwrap();
        let reference = reference_forward(&mlp, &input);
        assert_eq!(ours.as_slice(), reference.as_slice());
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = stream_rng(3, "mlp-determinism");
        let mlp = Mlp::new(
            &[5, 8, 2],
            Activation::Tanh,
            InitScheme::FanInUniform,
            &mut rng,
        )
        .unwrap();
        let input = [0.1, 0.2, 0.3, 0.4, 0.5];
        let a = mlp.forward(&input).unwrap();
        let b = mlp.forward(&input).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_linear_layer_backward_closed_form() {
        // y = Wx + b with output gradient g: dW = g xᵀ, db = g, dx = Wᵀ g.
        let w = Matrix::from_rows(vec![vec![1.0, -2.0], vec![0.5, 3.0]]).unwrap();
        let b = Vector::zeros(2);
        let mlp = Mlp::from_layers(vec![w.clone()], vec![b], Activation::Identity).unwrap();
        let x = [2.0, -1.0];
        let g = [1.0, -3.0];
        let (grads, dx) = mlp.backward(&x, &g).unwrap();
        // dW = g xᵀ
        assert_eq!(grads.layers[0].weight.get(0, 0), 1.0 * 2.0);
        assert_eq!(grads.layers[0].weight.get(0, 1), 1.0 * -1.0);
        assert_eq!(grads.layers[0].weight.get(1, 0), -3.0 * 2.0);
        assert_eq!(grads.layers[0].weight.get(1, 1), -3.0 * -1.0);
        // db = g
        assert_eq!(grads.layers[0].bias.as_slice(), &g);
        // dx = Wᵀ g
        assert_eq!(dx[0], 1.0 * 1.0 + 0.5 * -3.0);
        assert_eq!(dx[1], -2.0 * 1.0 + 3.0 * -3.0);
    }

    #[test]
    fn zero_output_gradient_gives_zero_gradients() {
        let mut rng = stream_rng(9, "mlp-zero-grad");
        let mlp = Mlp::new(
            &[3, 4, 2],
            Activation::Relu,
            InitScheme::FanInUniform,
            &mut rng,
        )
        .unwrap();
        let (grads, dx) = mlp.backward(&[1.0, 2.0, 3.0], &[0.0, 0.0]).unwrap();
        assert!(grads.flatten().iter().all(|&g| g == 0.0));
        assert!(dx.as_slice().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn backward_matches_finite_differences() {
        // Loss L = 0.5 ‖y‖²  =>  dL/dy = y. Check all parameter gradients.
        let mut rng = stream_rng(11, "mlp-fd");
        let mut mlp = Mlp::new(
            &[3, 6, 4, 2],
            Activation::Tanh,
            InitScheme::FanInUniform,
            &mut rng,
        )
        .unwrap();
        let x = [0.7, -0.3, 1.1];
        let y = mlp.forward(&x).unwrap();
        let (grads, _) = mlp.backward(&x, y.as_slice()).unwrap();
        let analytic = grads.flatten();

        let params = mlp.flatten_params();
        let h = 1e-5;
        let mut max_rel = 0.0f64;
        for i in 0..params.len() {
            let mut plus = params.clone();
            plus[i] += h;
            mlp.set_params(&plus).unwrap();
            let yp = mlp.forward(&x).unwrap();
            let lp = 0.5 * yp.dot(&yp);

            let mut minus = params.clone();
            minus[i] -= h;
            mlp.set_params(&minus).unwrap();
            let ym = mlp.forward(&x).unwrap();
            let lm = 0.5 * ym.dot(&ym);

            let fd = (lp - lm) / (2.0 * h);
            let rel = (analytic[i] - fd).abs() / fd.abs().max(1.0);
            max_rel = max_rel.max(rel);
        }
        mlp.set_params(&params).unwrap();
        assert!(max_rel <= 1e-4, "max relative error {max_rel}");
    }

    #[test]
    fn input_gradient_composes_across_chained_networks() {
        // Backward through g∘f equals backward through the concatenated net.
        let mut rng = stream_rng(13, "mlp-compose");
        let f = Mlp::new(
            &[3, 5, 4],
            Activation::Tanh,
            InitScheme::FanInUniform,
            &mut rng,
        )
        .unwrap();
        let g = Mlp::new(
            &[4, 6, 2],
            Activation::Tanh,
            InitScheme::FanInUniform,
            &mut rng,
        )
        .unwrap();

        // Concatenated network with the same layers. Note that f's output
        // layer becomes a hidden layer of the concatenation, so it must be
        // activated there; chaining manually applies the same activation.
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in f.layers.iter().chain(g.layers.iter()) {
            weights.push(l.weight.clone());
            biases.push(l.bias.clone());
        }
        let chained = Mlp::from_layers(weights, biases, Activation::Tanh).unwrap();

        let x = [0.2, -0.8, 0.5];
        let out_grad = [1.0, -2.0];

        let (_, dx_whole) = chained.backward(&x, &out_grad).unwrap();

        // Manual chain: activate f's output before feeding g.
        let fx = f.forward(&x).unwrap();
        let fx_act: Vec<f64> = fx.as_slice().iter().map(|&v| v.tanh()).collect();
        let (_, dmid) = g.backward(&fx_act, &out_grad).unwrap();
        // Pull dmid back through the activation at f's output.
        let dmid_pre: Vec<f64> = dmid
            .as_slice()
            .iter()
            .zip(fx.as_slice())
            .map(|(&d, &z)| d * (1.0 - z.tanh() * z.tanh()))
            .collect();
        // And through f's linear output layer by treating it as the output
        // gradient of f itself.
        let (_, dx_chain) = f.backward(&x, &dmid_pre).unwrap();

        for (a, b) in dx_whole.as_slice().iter().zip(dx_chain.as_slice()) {
            assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn dimension_mismatch_reports_dims() {
        let mlp = Mlp::identity(3);
        let err = mlp.forward(&[1.0]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("expected 3") && msg.contains("got 1"), "{msg}");
    }
}
