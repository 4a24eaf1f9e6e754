//! Feed-forward regressor with an element-wise gated first layer and manual
//! backpropagation.
//!
//! Activations are stored feature-major (`features x batch`) so every layer is
//! a single matrix product against contiguous columns.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::distr::{Distribution, Uniform};

use crate::error::{check_len, Error, Result};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => libm::tanh(z),
            Activation::Identity => z,
        }
    }

    /// First derivative expressed through the activation value `h = phi(z)`.
    fn slope(self, h: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - h * h,
            Activation::Identity => 1.0,
        }
    }

    /// Second derivative expressed through `h = phi(z)`.
    fn curvature(self, h: f64) -> f64 {
        match self {
            Activation::Tanh => -2.0 * h * (1.0 - h * h),
            Activation::Identity => 0.0,
        }
    }
}

/// One dense layer `phi(W a + b)` with `W` of shape `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn new(weights: DMatrix<f64>, bias: DVector<f64>, activation: Activation) -> Result<Self> {
        check_len("layer bias", weights.nrows(), bias.len())?;
        if weights.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("layer parameters"));
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }
}

/// Scalar-output MLP whose first layer sees the gated input `x * alpha`.
#[derive(Debug, Clone)]
pub struct Network {
    layers: Vec<Layer>,
    revision: u64,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

impl Network {
    /// Tanh hidden layers of the given widths and a linear scalar head, with
    /// weights and biases drawn from `U[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn new(input_dim: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        if input_dim == 0 || hidden.iter().any(|&h| h == 0) {
            return Err(Error::InvalidConfig("layer widths must be positive".into()));
        }
        let mut rng = rng::stream(seed, Stream::Init);
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut fan_in = input_dim;
        for (i, &out) in hidden.iter().chain(core::iter::once(&1)).enumerate() {
            let bound = 1.0 / libm::sqrt(fan_in as f64);
            let dist = Uniform::new_inclusive(-bound, bound)
                .map_err(|_| Error::InvalidConfig("init bound".into()))?;
            let weights = DMatrix::from_fn(out, fan_in, |_, _| dist.sample(&mut rng));
            let bias = DVector::from_fn(out, |_, _| dist.sample(&mut rng));
            let activation = if i == hidden.len() {
                Activation::Identity
            } else {
                Activation::Tanh
            };
            layers.push(Layer {
                weights,
                bias,
                activation,
            });
            fan_in = out;
        }
        Ok(Self {
            layers,
            revision: 0,
        })
    }

    /// Assembles a network from explicit layers, checking that dimensions
    /// chain and that the head is a linear scalar output.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        let last = layers
            .last()
            .ok_or_else(|| Error::InvalidConfig("network needs at least one layer".into()))?;
        check_len("network output", 1, last.output_dim())?;
        if last.activation != Activation::Identity {
            return Err(Error::InvalidConfig("output layer must be linear".into()));
        }
        for pair in layers.windows(2) {
            check_len("layer input", pair[0].output_dim(), pair[1].input_dim())?;
        }
        for l in &layers {
            check_len("layer bias", l.output_dim(), l.bias.len())?;
            if l.weights.iter().chain(l.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("layer parameters"));
            }
        }
        Ok(Self {
            layers,
            revision: 0,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Mutable access to the parameters. Invalidates outstanding traces.
    pub fn layers_mut(&mut self) -> &mut [Layer] {
        self.revision += 1;
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn first_layer_width(&self) -> usize {
        self.layers[0].output_dim()
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    fn check_alpha(&self, alpha: &[f64]) -> Result<()> {
        check_len("score vector", self.input_dim(), alpha.len())
    }
}

/// Everything backpropagation needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    revision: u64,
    /// Raw input, `in x batch`.
    pub(crate) input: DMatrix<f64>,
    /// `x * alpha`, `in x batch`.
    pub gated_input: DMatrix<f64>,
    /// Activations of every layer, `out_l x batch`.
    pub activations: Vec<DMatrix<f64>>,
    pub alpha: Vec<f64>,
}

impl ForwardTrace {
    pub fn batch_size(&self) -> usize {
        self.input.ncols()
    }

    fn check(&self, net: &Network) -> Result<()> {
        if self.revision != net.revision
            || self.activations.len() != net.layers.len()
            || self.input.nrows() != net.input_dim()
        {
            return Err(Error::StaleTrace);
        }
        Ok(())
    }
}

/// Gradients of one dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

/// Gradients of a scalar objective with respect to every network parameter
/// and to the score vector that gated the input.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub layers: Vec<LayerGrads>,
    pub alpha: Vec<f64>,
}

impl ParamGrads {
    pub fn zeros(net: &Network) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrads {
                    weights: DMatrix::zeros(l.output_dim(), l.input_dim()),
                    bias: DVector::zeros(l.output_dim()),
                })
                .collect(),
            alpha: alloc::vec![0.0; net.input_dim()],
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &ParamGrads, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.zip_apply(&b.weights, |x, y| *x += scale * y);
            a.bias.axpy(scale, &b.bias, 1.0);
        }
        for (a, b) in self.alpha.iter_mut().zip(&other.alpha) {
            *a += scale * b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
            && self.alpha.iter().all(|v| v.is_finite())
    }
}

fn gate_batch(net: &Network, x: &DMatrix<f64>, alpha: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    net.check_alpha(alpha)?;
    check_len("input columns", net.input_dim(), x.ncols())?;
    let input = x.transpose();
    let mut gated = input.clone();
    for (j, mut row) in gated.row_iter_mut().enumerate() {
        row *= alpha[j];
    }
    Ok((input, gated))
}

fn layer_forward(layer: &Layer, prev: &DMatrix<f64>) -> DMatrix<f64> {
    let mut z = &layer.weights * prev;
    for mut col in z.column_iter_mut() {
        col += &layer.bias;
    }
    if layer.activation != Activation::Identity {
        z.apply(|v| *v = layer.activation.apply(*v));
    }
    z
}

/// Predictions for a batch (`rows = samples`) under score vector `alpha`,
/// together with the trace needed by [`backward`].
pub fn forward(net: &Network, x: &DMatrix<f64>, alpha: &[f64]) -> Result<(Vec<f64>, ForwardTrace)> {
    let (input, gated) = gate_batch(net, x, alpha)?;
    let mut activations: Vec<DMatrix<f64>> = Vec::with_capacity(net.layers.len());
    for (l, layer) in net.layers.iter().enumerate() {
        let prev = if l == 0 { &gated } else { &activations[l - 1] };
        let a = layer_forward(layer, prev);
        activations.push(a);
    }
    let preds = activations
        .last()
        .map(|a| a.row(0).iter().copied().collect())
        .unwrap_or_default();
    Ok((
        preds,
        ForwardTrace {
            revision: net.revision,
            input,
            gated_input: gated,
            activations,
            alpha: alpha.to_vec(),
        },
    ))
}

/// Predictions without keeping a trace.
pub fn predict(net: &Network, x: &DMatrix<f64>, alpha: &[f64]) -> Result<Vec<f64>> {
    let (_, gated) = gate_batch(net, x, alpha)?;
    let mut a = gated;
    for layer in &net.layers {
        a = layer_forward(layer, &a);
    }
    Ok(a.row(0).iter().copied().collect())
}

/// Backpropagates `d_out` (objective gradient w.r.t. each prediction) through
/// the trace. Returns parameter gradients and the back-propagated signal at
/// the gated input.
fn backprop(net: &Network, trace: &ForwardTrace, d_out: &[f64]) -> (Vec<LayerGrads>, DMatrix<f64>) {
    let n_layers = net.layers.len();
    let mut grads: Vec<LayerGrads> = Vec::with_capacity(n_layers);
    let mut delta = DMatrix::from_row_slice(1, d_out.len(), d_out);
    for l in (0..n_layers).rev() {
        let layer = &net.layers[l];
        let act = &trace.activations[l];
        if layer.activation != Activation::Identity {
            delta.zip_apply(act, |d, h| *d *= layer.activation.slope(h));
        }
        let prev = if l == 0 {
            &trace.gated_input
        } else {
            &trace.activations[l - 1]
        };
        let weights = &delta * prev.transpose();
        let bias = delta.column_sum();
        grads.push(LayerGrads { weights, bias });
        delta = layer.weights.tr_mul(&delta);
    }
    grads.reverse();
    (grads, delta)
}

/// Gradients of `(1/N) sum_i residual_i^2` where `residual = y - prediction`,
/// including the chain through the input mask (`ParamGrads::alpha`).
pub fn backward(net: &Network, trace: &ForwardTrace, residuals: &[f64]) -> Result<ParamGrads> {
    trace.check(net)?;
    let n = trace.batch_size();
    check_len("residuals", n, residuals.len())?;
    let scale = -2.0 / n as f64;
    let d_out: Vec<f64> = residuals.iter().map(|r| scale * r).collect();
    let (layers, d_in) = backprop(net, trace, &d_out);
    Ok(ParamGrads {
        layers,
        alpha: mask_gradient(&d_in, &trace.input),
    })
}

/// Per-sample gradient of the prediction w.r.t. the first-layer
/// pre-activation (`h x batch`).
pub(crate) fn first_layer_sensitivity(net: &Network, trace: &ForwardTrace) -> Result<DMatrix<f64>> {
    trace.check(net)?;
    let n_layers = net.layers.len();
    let mut delta = DMatrix::from_element(1, trace.batch_size(), 1.0);
    for l in (0..n_layers).rev() {
        let layer = &net.layers[l];
        if layer.activation != Activation::Identity {
            delta.zip_apply(&trace.activations[l], |d, h| *d *= layer.activation.slope(h));
        }
        if l == 0 {
            break;
        }
        delta = layer.weights.tr_mul(&delta);
    }
    Ok(delta)
}

fn mask_gradient(d_gated: &DMatrix<f64>, input: &DMatrix<f64>) -> Vec<f64> {
    d_gated
        .row_iter()
        .zip(input.row_iter())
        .map(|(d, x)| d.dot(&x))
        .collect()
}

/// Gradient `g = d f(x * alpha) / d x` at `x0`; `g_j` carries the factor
/// `alpha_j` from the mask.
pub fn input_gradient(net: &Network, x0: &[f64], alpha: &[f64]) -> Result<Vec<f64>> {
    check_len("expansion point", net.input_dim(), x0.len())?;
    let x = DMatrix::from_row_slice(1, x0.len(), x0);
    let (_, trace) = forward(net, &x, alpha)?;
    let (_, d_in) = backprop(net, &trace, &[1.0]);
    Ok(d_in.iter().zip(alpha).map(|(d, a)| d * a).collect())
}

/// Value and gradients of the directional input derivative `s = v . g`,
/// where `g` is [`input_gradient`] at `x0`.
///
/// Computed by pushing the tangent `v * alpha` forward alongside the primal
/// pass and reverse-differentiating the resulting scalar. The returned
/// `ParamGrads::alpha` holds `ds/dalpha`.
pub fn input_gradient_vjp(
    net: &Network,
    x0: &[f64],
    alpha: &[f64],
    v: &[f64],
) -> Result<(f64, ParamGrads)> {
    let dim = net.input_dim();
    check_len("expansion point", dim, x0.len())?;
    check_len("direction", dim, v.len())?;
    net.check_alpha(alpha)?;

    let gated = DVector::from_iterator(dim, x0.iter().zip(alpha).map(|(x, a)| x * a));
    let tangent_in = DVector::from_iterator(dim, v.iter().zip(alpha).map(|(x, a)| x * a));

    // Primal activations h_l, pre-activation tangents zdot_l and activation
    // tangents hdot_l.
    let mut hs: Vec<DVector<f64>> = Vec::with_capacity(net.layers.len());
    let mut zdots: Vec<DVector<f64>> = Vec::with_capacity(net.layers.len());
    let mut hdots: Vec<DVector<f64>> = Vec::with_capacity(net.layers.len());
    for (l, layer) in net.layers.iter().enumerate() {
        let (prev, prev_dot) = if l == 0 {
            (&gated, &tangent_in)
        } else {
            (&hs[l - 1], &hdots[l - 1])
        };
        let mut h = &layer.weights * prev + &layer.bias;
        let zdot = &layer.weights * prev_dot;
        h.apply(|z| *z = layer.activation.apply(*z));
        let mut hdot = zdot.clone();
        hdot.zip_apply(&h, |d, hv| *d *= layer.activation.slope(hv));
        hs.push(h);
        zdots.push(zdot);
        hdots.push(hdot);
    }
    let value = hdots.last().map(|h| h[0]).unwrap_or(0.0);

    // Reverse sweep over both streams. `bar_*` are adjoints of the
    // pre-activations z_l and their tangents zdot_l.
    let n_layers = net.layers.len();
    let mut layers: Vec<LayerGrads> = Vec::with_capacity(n_layers);
    let mut bar_h = DVector::zeros(1);
    let mut bar_hdot = DVector::from_element(1, 1.0);
    for l in (0..n_layers).rev() {
        let layer = &net.layers[l];
        let h = &hs[l];
        let mut bar_z = bar_h.clone();
        let mut bar_zdot = bar_hdot.clone();
        for k in 0..h.len() {
            let slope = layer.activation.slope(h[k]);
            bar_z[k] =
                slope * bar_h[k] + layer.activation.curvature(h[k]) * zdots[l][k] * bar_hdot[k];
            bar_zdot[k] = slope * bar_hdot[k];
        }
        let (prev, prev_dot) = if l == 0 {
            (&gated, &tangent_in)
        } else {
            (&hs[l - 1], &hdots[l - 1])
        };
        let weights = &bar_z * prev.transpose() + &bar_zdot * prev_dot.transpose();
        layers.push(LayerGrads {
            weights,
            bias: bar_z.clone(),
        });
        bar_h = layer.weights.tr_mul(&bar_z);
        bar_hdot = layer.weights.tr_mul(&bar_zdot);
    }
    layers.reverse();
    let d_alpha = (0..dim)
        .map(|j| x0[j] * bar_h[j] + v[j] * bar_hdot[j])
        .collect();
    Ok((
        value,
        ParamGrads {
            layers,
            alpha: d_alpha,
        },
    ))
}

/// Update rule applied by [`optimizer_step`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::adam(1e-3)
    }
}

impl OptimizerConfig {
    pub fn adam(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn sgd(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            ..Self::adam(lr)
        }
    }

    pub fn with_lr(mut self, lr: f64) -> Self {
        self.lr = lr;
        self
    }
}

/// First/second moment estimates for one flat parameter block.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MomentState {
    m: Vec<f64>,
    v: Vec<f64>,
    steps: u64,
}

impl MomentState {
    pub fn new(len: usize) -> Self {
        Self {
            m: alloc::vec![0.0; len],
            v: alloc::vec![0.0; len],
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }
}

/// One update of `params` from `grads`. Non-finite gradients are rejected
/// before anything is modified.
pub fn optimizer_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut MomentState,
    config: &OptimizerConfig,
) -> Result<()> {
    check_len("gradient", params.len(), grads.len())?;
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient"));
    }
    match config.kind {
        OptimizerKind::Sgd => {
            for (p, g) in params.iter_mut().zip(grads) {
                *p -= config.lr * g;
            }
            state.steps += 1;
        }
        OptimizerKind::Adam => {
            if state.m.len() != params.len() {
                *state = MomentState::new(params.len());
            }
            state.steps += 1;
            let t = state.steps as i32;
            let c1 = 1.0 - libm::pow(config.beta1, t as f64);
            let c2 = 1.0 - libm::pow(config.beta2, t as f64);
            for i in 0..params.len() {
                let g = grads[i];
                state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * g;
                state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * g * g;
                let m_hat = state.m[i] / c1;
                let v_hat = state.v[i] / c2;
                params[i] -= config.lr * m_hat / (libm::sqrt(v_hat) + config.eps);
            }
        }
    }
    Ok(())
}

/// Optimizer state for every tensor of a [`Network`].
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkOptimizer {
    states: Vec<(MomentState, MomentState)>,
}

impl NetworkOptimizer {
    pub fn new(net: &Network) -> Self {
        Self {
            states: net
                .layers
                .iter()
                .map(|l| (MomentState::new(l.weights.len()), MomentState::new(l.bias.len())))
                .collect(),
        }
    }

    pub fn step(&mut self, net: &mut Network, grads: &ParamGrads, config: &OptimizerConfig) -> Result<()> {
        check_len("layer gradients", net.layers.len(), grads.layers.len())?;
        if !grads.layers.iter().all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite())) {
            return Err(Error::NonFinite("gradient"));
        }
        for ((layer, g), (sw, sb)) in net
            .layers_mut()
            .iter_mut()
            .zip(&grads.layers)
            .zip(self.states.iter_mut())
        {
            optimizer_step(layer.weights.as_mut_slice(), g.weights.as_slice(), sw, config)?;
            optimizer_step(layer.bias.as_mut_slice(), g.bias.as_slice(), sb, config)?;
        }
        Ok(())
    }
}
