//! Sine-activated coordinate network with a softplus output.
//!
//! `x -> encode -> sin(ω₁(W₀e + b₀)) -> sin(ω₀(W₁h + b₁)) -> ... -> softplus(w·h + b)`
//!
//! The scalar path (`evaluate`/`backward`) is a straight loop implementation;
//! the batched path (`forward_batch`/`backward_batch`) runs the same
//! arithmetic as matrix products and is what training uses.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::encoding::EncodingConfig;
use crate::error::{Error, Result};

/// Frequency multiplier of the hidden sine layers after the first.
pub const DEFAULT_OMEGA0: f64 = 30.0;
/// Frequency multiplier of the first sine layer.
pub const FIRST_LAYER_OMEGA: f64 = 1.0;

#[inline]
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`softplus`] for positive `y`.
pub fn softplus_inverse(y: f64) -> f64 {
    if y > 30.0 {
        y + (-(-y).exp_m1()).ln()
    } else {
        y.exp_m1().ln()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `out x in`, row-major.
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

impl DenseLayer {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self { weights: Array2::zeros((out_dim, in_dim)), biases: Array1::zeros(out_dim) }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }
}

/// One continuous non-negative function of a scalar coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct InrFunction {
    encoding: EncodingConfig,
    layers: Vec<DenseLayer>,
    omega0: f64,
    first_omega: f64,
}

/// Gradient accumulator shaped like an [`InrFunction`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBuffer {
    pub layers: Vec<DenseLayer>,
    /// Number of samples accumulated since the last reset.
    pub count: usize,
}

impl GradientBuffer {
    pub fn for_function(func: &InrFunction) -> Self {
        Self { layers: func.layers.iter().map(|l| DenseLayer::zeros(l.in_dim(), l.out_dim())).collect(), count: 0 }
    }

    pub fn reset(&mut self) {
        for l in &mut self.layers {
            l.weights.fill(0.0);
            l.biases.fill(0.0);
        }
        self.count = 0;
    }

    /// All entries in parameter order (per layer: weights row-major, then biases).
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.biases.iter());
        }
        out
    }

    pub fn is_congruent(&self, func: &InrFunction) -> bool {
        self.layers.len() == func.layers.len()
            && self
                .layers
                .iter()
                .zip(&func.layers)
                .all(|(g, l)| g.weights.dim() == l.weights.dim() && g.biases.len() == l.biases.len())
    }
}

/// Intermediate values of a batched forward pass, kept for backprop.
#[derive(Debug, Clone, Default)]
pub struct BatchTrace {
    /// Inputs to each layer, `rows x in_dim`.
    acts: Vec<Array2<f64>>,
    /// Derivative of each hidden activation w.r.t. its pre-activation.
    derivs: Vec<Array2<f64>>,
    /// Output pre-activations.
    out_pre: Vec<f64>,
    /// Softplus outputs.
    pub values: Vec<f64>,
}

impl InrFunction {
    /// Sine-network initialization: first layer `U[-1/J, 1/J]`, later layers
    /// `U[-√(6/fan_in)/ω₀, √(6/fan_in)/ω₀]`, biases `U[-1/√fan_in, 1/√fan_in]`.
    pub fn init(seed: u64, encoding: EncodingConfig, hidden_sizes: &[usize]) -> Result<Self> {
        Self::init_with_omega(seed, encoding, hidden_sizes, DEFAULT_OMEGA0)
    }

    pub fn init_with_omega(seed: u64, encoding: EncodingConfig, hidden_sizes: &[usize], omega0: f64) -> Result<Self> {
        let mut func = Self::zeros(encoding, hidden_sizes, omega0)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (l, layer) in func.layers.iter_mut().enumerate() {
            let fan_in = layer.in_dim() as f64;
            let w_bound = if l == 0 { 1.0 / fan_in } else { (6.0 / fan_in).sqrt() / omega0 };
            let b_bound = 1.0 / fan_in.sqrt();
            let w_dist = Uniform::new_inclusive(-w_bound, w_bound).expect("finite bound");
            let b_dist = Uniform::new_inclusive(-b_bound, b_bound).expect("finite bound");
            layer.weights.mapv_inplace(|_| w_dist.sample(&mut rng));
            layer.biases.mapv_inplace(|_| b_dist.sample(&mut rng));
        }
        Ok(func)
    }

    /// All-zero parameters; evaluates to `ln 2` everywhere.
    pub fn zeros(encoding: EncodingConfig, hidden_sizes: &[usize], omega0: f64) -> Result<Self> {
        if hidden_sizes.is_empty() || hidden_sizes.contains(&0) {
            return Err(Error::InvalidArgument("need at least one hidden layer, each with at least one unit".into()));
        }
        let mut dims = vec![encoding.output_dim()];
        dims.extend_from_slice(hidden_sizes);
        dims.push(1);
        let layers = dims.windows(2).map(|w| DenseLayer::zeros(w[0], w[1])).collect();
        Self::from_parts(encoding, layers, omega0, FIRST_LAYER_OMEGA)
    }

    pub fn from_parts(
        encoding: EncodingConfig,
        layers: Vec<DenseLayer>,
        omega0: f64,
        first_omega: f64,
    ) -> Result<Self> {
        if layers.len() < 2 {
            return Err(Error::InvalidArgument("need at least one hidden layer".into()));
        }
        if layers[0].in_dim() != encoding.output_dim() {
            return Err(Error::Shape(format!(
                "first layer takes {} inputs but the encoding has {}",
                layers[0].in_dim(),
                encoding.output_dim()
            )));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::Shape(format!("layer {i} output does not feed layer {}", i + 1)));
            }
        }
        for (i, l) in layers.iter().enumerate() {
            if l.biases.len() != l.out_dim() {
                return Err(Error::Shape(format!("layer {i} bias length mismatch")));
            }
        }
        if layers.last().map(DenseLayer::out_dim) != Some(1) {
            return Err(Error::Shape("last layer must have one output".into()));
        }
        if !(omega0.is_finite() && first_omega.is_finite()) {
            return Err(Error::InvalidArgument("frequency multipliers must be finite".into()));
        }
        Ok(Self { encoding, layers, omega0, first_omega })
    }

    pub fn encoding(&self) -> &EncodingConfig {
        &self.encoding
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn first_omega(&self) -> f64 {
        self.first_omega
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1].iter().map(DenseLayer::out_dim).collect()
    }

    /// Layer sizes from the encoding to the scalar output.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.encoding.output_dim()];
        sizes.extend(self.layers.iter().map(DenseLayer::out_dim));
        sizes
    }

    fn hidden_omega(&self, layer: usize) -> f64 {
        if layer == 0 {
            self.first_omega
        } else {
            self.omega0
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Parameter `i` in [`GradientBuffer::flat`] order.
    pub fn param(&self, mut i: usize) -> f64 {
        for l in &self.layers {
            let nw = l.weights.len();
            if i < nw {
                return l.weights.as_slice().expect("standard layout")[i];
            }
            i -= nw;
            if i < l.biases.len() {
                return l.biases[i];
            }
            i -= l.biases.len();
        }
        panic!("parameter index out of range")
    }

    pub fn set_param(&mut self, mut i: usize, value: f64) {
        for l in &mut self.layers {
            let nw = l.weights.len();
            if i < nw {
                l.weights.as_slice_mut().expect("standard layout")[i] = value;
                return;
            }
            i -= nw;
            if i < l.biases.len() {
                l.biases[i] = value;
                return;
            }
            i -= l.biases.len();
        }
        panic!("parameter index out of range")
    }

    /// Visits matching parameter and gradient slices in a fixed order.
    pub fn visit_params(&mut self, grads: &GradientBuffer, mut f: impl FnMut(&mut [f64], &[f64])) {
        for (l, g) in self.layers.iter_mut().zip(&grads.layers) {
            f(l.weights.as_slice_mut().expect("standard layout"), g.weights.as_slice().expect("standard layout"));
            f(l.biases.as_slice_mut().expect("standard layout"), g.biases.as_slice().expect("standard layout"));
        }
    }

    /// Evaluates at one already-encoded input without validation.
    pub fn evaluate_encoded(&self, enc: &[f64]) -> f64 {
        let mut act = enc.to_vec();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers[..last].iter().enumerate() {
            let omega = self.hidden_omega(l);
            act = layer
                .weights
                .rows()
                .into_iter()
                .zip(layer.biases.iter())
                .map(|(row, b)| {
                    let z = row.iter().zip(&act).map(|(w, a)| w * a).sum::<f64>() + b;
                    (omega * z).sin()
                })
                .collect();
        }
        let out = &self.layers[last];
        let z = out.weights.row(0).iter().zip(&act).map(|(w, a)| w * a).sum::<f64>() + out.biases[0];
        softplus(z)
    }

    pub fn evaluate(&self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::Numeric(format!("non-finite input {x}")));
        }
        let mut enc = vec![0.0; self.encoding.output_dim()];
        self.encoding.encode_into(x, &mut enc);
        let y = self.evaluate_encoded(&enc);
        if !y.is_finite() {
            return Err(Error::Numeric(format!("non-finite output at x={x}")));
        }
        Ok(y)
    }

    pub fn evaluate_batch(&self, xs: &[f64]) -> Result<Vec<f64>> {
        if let Some(x) = xs.iter().find(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!("non-finite input {x}")));
        }
        let trace = self.forward_batch(self.encode_batch(xs).view());
        if let Some(i) = trace.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite output at x={}", xs[i])));
        }
        Ok(trace.values)
    }

    pub fn encode_batch(&self, xs: &[f64]) -> Array2<f64> {
        encode_rows(&self.encoding, xs)
    }

    /// Accumulates `upstream * d(output)/dθ` into `out`.
    pub fn backward(&self, x: f64, upstream: f64, out: &mut GradientBuffer) {
        debug_assert!(out.is_congruent(self));
        if upstream == 0.0 {
            return;
        }
        let mut enc = vec![0.0; self.encoding.output_dim()];
        self.encoding.encode_into(x, &mut enc);

        let last = self.layers.len() - 1;
        let mut acts: Vec<Vec<f64>> = vec![enc];
        let mut derivs: Vec<Vec<f64>> = Vec::with_capacity(last);
        for (l, layer) in self.layers[..last].iter().enumerate() {
            let omega = self.hidden_omega(l);
            let input = &acts[l];
            let mut a = Vec::with_capacity(layer.out_dim());
            let mut d = Vec::with_capacity(layer.out_dim());
            for (row, b) in layer.weights.rows().into_iter().zip(layer.biases.iter()) {
                let z = row.iter().zip(input).map(|(w, v)| w * v).sum::<f64>() + b;
                let (s, c) = (omega * z).sin_cos();
                a.push(s);
                d.push(omega * c);
            }
            acts.push(a);
            derivs.push(d);
        }
        let out_layer = &self.layers[last];
        let z = out_layer.weights.row(0).iter().zip(&acts[last]).map(|(w, v)| w * v).sum::<f64>() + out_layer.biases[0];

        let mut delta = vec![upstream * sigmoid(z)];
        for l in (0..=last).rev() {
            let layer = &self.layers[l];
            let g = &mut out.layers[l];
            for (o, &d) in delta.iter().enumerate() {
                for (i, &a) in acts[l].iter().enumerate() {
                    g.weights[(o, i)] += d * a;
                }
                g.biases[o] += d;
            }
            if l > 0 {
                let mut next = vec![0.0; layer.in_dim()];
                for (o, &d) in delta.iter().enumerate() {
                    for (i, w) in layer.weights.row(o).iter().enumerate() {
                        next[i] += w * d;
                    }
                }
                for (n, dv) in next.iter_mut().zip(&derivs[l - 1]) {
                    *n *= dv;
                }
                delta = next;
            }
        }
        out.count += 1;
    }

    /// Batched forward pass over encoded rows.
    pub fn forward_batch(&self, enc: ArrayView2<'_, f64>) -> BatchTrace {
        let mut trace = BatchTrace::default();
        self.forward_batch_into(enc, &mut trace);
        trace
    }

    pub fn forward_batch_into(&self, enc: ArrayView2<'_, f64>, trace: &mut BatchTrace) {
        let rows = enc.nrows();
        let last = self.layers.len() - 1;
        trace.acts.clear();
        trace.derivs.clear();
        trace.acts.push(enc.to_owned());
        for (l, layer) in self.layers[..last].iter().enumerate() {
            let omega = self.hidden_omega(l);
            let mut z = Array2::<f64>::zeros((rows, layer.out_dim()));
            z.rows_mut().into_iter().for_each(|mut r| r.assign(&layer.biases));
            general_mat_mul(1.0, &trace.acts[l], &layer.weights.t(), 1.0, &mut z);
            let mut d = Array2::<f64>::zeros(z.dim());
            Zip::from(&mut z).and(&mut d).for_each(|a, dv| {
                let (s, c) = (omega * *a).sin_cos();
                *a = s;
                *dv = omega * c;
            });
            trace.acts.push(z);
            trace.derivs.push(d);
        }
        let out = &self.layers[last];
        let z = trace.acts[last].dot(&out.weights.row(0)) + out.biases[0];
        trace.values = z.iter().map(|&v| softplus(v)).collect();
        trace.out_pre = z.to_vec();
    }

    /// Accumulates `Σ_r upstream[r] * d(output_r)/dθ` for a traced batch.
    pub fn backward_batch(&self, trace: &BatchTrace, upstream: &[f64], out: &mut GradientBuffer) {
        debug_assert!(out.is_congruent(self));
        assert_eq!(upstream.len(), trace.out_pre.len(), "upstream length");
        let rows = upstream.len();
        let last = self.layers.len() - 1;
        let mut delta = Array2::from_shape_fn((rows, 1), |(r, _)| upstream[r] * sigmoid(trace.out_pre[r]));
        for l in (0..=last).rev() {
            let layer = &self.layers[l];
            let g = &mut out.layers[l];
            general_mat_mul(1.0, &delta.t(), &trace.acts[l], 1.0, &mut g.weights);
            g.biases += &delta.sum_axis(Axis(0));
            if l > 0 {
                let mut next = delta.dot(&layer.weights);
                next *= &trace.derivs[l - 1];
                delta = next;
            }
        }
        out.count += rows;
    }
}

/// Encodes each coordinate as one row.
pub fn encode_rows(encoding: &EncodingConfig, xs: &[f64]) -> Array2<f64> {
    let j = encoding.output_dim();
    let mut out = Array2::zeros((xs.len(), j));
    for (mut row, &x) in out.rows_mut().into_iter().zip(xs) {
        encoding.encode_into(x, row.as_slice_mut().expect("standard layout"));
    }
    out
}
