//! Training objective (prediction error plus variance-alignment penalty) and
//! the minibatch training loop for all three gating mechanisms.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use crate::datagen::{LaggedDataset, StandardizeStats};
use crate::error::{check_len, Error, Result};
use crate::fim::{correlation_matrix, Centering, CorrelationMatrix};
use crate::gating::{
    decision_backward, decision_forward, dropin_scores, stochastic_forward, stochastic_mu_gradient,
    CorrelationLayout, DecisionUnit, DropInGate, GateState, ScoreVector, StochasticGate,
};
use crate::nnet::{
    self, optimizer_step, MomentState, Network, NetworkOptimizer, OptimizerConfig, ParamGrads,
};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Method {
    DecisionUnit,
    DropIn,
    Stochastic,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::DropIn, Method::Stochastic, Method::DecisionUnit];

    pub fn name(self) -> &'static str {
        match self {
            Method::DecisionUnit => "decision_unit",
            Method::DropIn => "drop_in",
            Method::Stochastic => "stochastic",
        }
    }
}

impl core::fmt::Display for Method {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

impl core::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "decision_unit" | "decision" | "proposed" => Ok(Method::DecisionUnit),
            "drop_in" | "dropin" => Ok(Method::DropIn),
            "stochastic" | "stg" => Ok(Method::Stochastic),
            _ => Err(Error::InvalidConfig(alloc::format!("unknown method `{s}`"))),
        }
    }
}

/// Expansion point of the first-order variance approximation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum X0Mode {
    #[default]
    TrainMean,
    Zero,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum LrSchedule {
    Constant,
    /// Half-cosine decay from the base rate to zero over the whole run.
    #[default]
    Cosine,
}

impl LrSchedule {
    fn factor(self, step: usize, total: usize) -> f64 {
        match self {
            LrSchedule::Constant => 1.0,
            LrSchedule::Cosine => {
                let frac = step as f64 / total.max(1) as f64;
                0.5 * (1.0 + libm::cos(core::f64::consts::PI * frac))
            }
        }
    }
}

/// When the decision unit's correlation matrix is computed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CorrelationRefresh {
    /// Once, from the whole training set.
    #[default]
    Fixed,
    /// From every minibatch.
    PerBatch,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TrainConfig {
    pub method: Method,
    /// Weight of the variance-alignment penalty (decision unit only).
    pub lambda_v: f64,
    /// Base learning rate of the regressor.
    pub lr: f64,
    /// Base learning rate of the decision-unit and drop-in gate parameters.
    pub gate_lr: f64,
    /// Base learning rate of the stochastic gate means.
    pub stochastic_gate_lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub x0_mode: X0Mode,
    pub hidden: Vec<usize>,
    pub schedule: LrSchedule,
    pub refresh: CorrelationRefresh,
    pub centering: Centering,
    pub layout: CorrelationLayout,
    /// Let the penalty's gradient reach the regressor through `g`.
    pub penalty_through_network: bool,
    /// Optional L1 weight on drop-in gate weights.
    pub dropin_l1: f64,
    pub stochastic_sigma: f64,
    pub stochastic_mu_init: f64,
    /// Hold every score at 1 and never update the gate.
    pub frozen_scores: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::DecisionUnit,
            lambda_v: 0.1,
            lr: 1e-2,
            gate_lr: 1e-3,
            stochastic_gate_lr: 5e-3,
            epochs: 1000,
            batch_size: 128,
            seed: 0,
            x0_mode: X0Mode::TrainMean,
            hidden: vec![64],
            schedule: LrSchedule::Cosine,
            refresh: CorrelationRefresh::Fixed,
            centering: Centering::Centered,
            layout: CorrelationLayout::UpperTriangle,
            penalty_through_network: false,
            dropin_l1: 0.0,
            stochastic_sigma: 1.0,
            stochastic_mu_init: 0.5,
            frozen_scores: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.lambda_v >= 0.0) || !self.lambda_v.is_finite() {
            return bad("lambda_v must be >= 0");
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if !(self.lr > 0.0) || !(self.gate_lr >= 0.0) || !(self.stochastic_gate_lr >= 0.0) {
            return bad("learning rates must be positive");
        }
        if !(self.dropin_l1 >= 0.0) {
            return bad("dropin_l1 must be >= 0");
        }
        if !(self.stochastic_sigma > 0.0) {
            return bad("stochastic_sigma must be > 0");
        }
        Ok(())
    }

    fn effective_lambda(&self) -> f64 {
        if self.method == Method::DecisionUnit {
            self.lambda_v
        } else {
            0.0
        }
    }
}

/// Epoch-level losses. `total = mse + lambda_v * var_penalty`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossBreakdown {
    pub mse: f64,
    pub var_penalty: f64,
    pub total: f64,
}

/// `(var_y - g^T diag(alpha) C diag(alpha) g)^2`.
pub fn variance_penalty(alpha: &[f64], c: &CorrelationMatrix, g: &[f64], var_y: f64) -> Result<f64> {
    let (residual, _) = penalty_core(alpha, c, g, var_y)?;
    Ok(residual * residual)
}

fn penalty_core(
    alpha: &[f64],
    c: &CorrelationMatrix,
    g: &[f64],
    var_y: f64,
) -> Result<(f64, DVector<f64>)> {
    let d = c.dim();
    check_len("score vector", d, alpha.len())?;
    check_len("input gradient", d, g.len())?;
    let w = DVector::from_iterator(d, alpha.iter().zip(g).map(|(a, gj)| a * gj));
    let cw = c.matrix() * &w;
    let q = w.dot(&cw);
    Ok((var_y - q, cw))
}

/// Gradients of [`variance_penalty`] with respect to `alpha` and `g`.
pub fn penalty_gradients(
    alpha: &[f64],
    c: &CorrelationMatrix,
    g: &[f64],
    var_y: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (residual, cw) = penalty_core(alpha, c, g, var_y)?;
    // d/dw = -4 (var_y - Q) C w, with w = alpha * g.
    let dw: Vec<f64> = cw.iter().map(|v| -4.0 * residual * v).collect();
    let d_alpha = dw.iter().zip(g).map(|(d, gj)| d * gj).collect();
    let d_g = dw.iter().zip(alpha).map(|(d, a)| d * a).collect();
    Ok((d_alpha, d_g))
}

/// Penalty context for [`loss_and_gradients`].
#[derive(Debug, Clone, Copy)]
pub struct VariancePenalty<'a> {
    pub correlation: &'a CorrelationMatrix,
    pub x0: &'a [f64],
    pub var_y: f64,
    pub lambda_v: f64,
    pub through_network: bool,
}

/// Loss of one batch under scores `alpha` and its gradients with respect to
/// the regressor parameters and to `alpha`.
pub fn loss_and_gradients(
    net: &Network,
    alpha: &[f64],
    x: &DMatrix<f64>,
    y: &[f64],
    penalty: Option<&VariancePenalty<'_>>,
) -> Result<(LossBreakdown, ParamGrads)> {
    check_len("targets", x.nrows(), y.len())?;
    let (preds, trace) = nnet::forward(net, x, alpha)?;
    let residuals: Vec<f64> = y.iter().zip(&preds).map(|(t, p)| t - p).collect();
    let mse = residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64;
    let mut grads = nnet::backward(net, &trace, &residuals)?;

    let (var_penalty, lambda) = match penalty {
        Some(p) if p.lambda_v > 0.0 => {
            let g = nnet::input_gradient(net, p.x0, alpha)?;
            let value = variance_penalty(alpha, p.correlation, &g, p.var_y)?;
            let (d_alpha, d_g) = penalty_gradients(alpha, p.correlation, &g, p.var_y)?;
            for (a, d) in grads.alpha.iter_mut().zip(&d_alpha) {
                *a += p.lambda_v * d;
            }
            if p.through_network {
                let (_, through_g) = nnet::input_gradient_vjp(net, p.x0, alpha, &d_g)?;
                grads.add_scaled(&through_g, p.lambda_v);
            }
            (value, p.lambda_v)
        }
        Some(p) => (0.0, p.lambda_v),
        None => (0.0, 0.0),
    };
    Ok((
        LossBreakdown {
            mse,
            var_penalty,
            total: mse + lambda * var_penalty,
        },
        grads,
    ))
}

/// A trained regressor with its gate and preprocessing.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub network: Network,
    pub gate: GateState,
    pub stats: StandardizeStats,
    /// Final relevance scores as reported (clamped to `[0, 1]`).
    pub alpha: ScoreVector,
    pub history: Vec<LossBreakdown>,
    pub correlation: CorrelationMatrix,
    pub config: TrainConfig,
}

impl FittedModel {
    /// Scores used by the forward pass at inference time. For the drop-in
    /// gate these are the raw, unclamped weights.
    pub fn inference_alpha(&self) -> Result<Vec<f64>> {
        if self.config.frozen_scores {
            return Ok(vec![1.0; self.network.input_dim()]);
        }
        gate_inference_alpha(&self.gate, &self.correlation)
    }

    /// Predictions in the original output units for standardized rows `x`.
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        let alpha = self.inference_alpha()?;
        let preds = nnet::predict(&self.network, x, &alpha)?;
        Ok(preds
            .into_iter()
            .map(|p| self.stats.destandardize_target(p))
            .collect())
    }
}

fn gate_inference_alpha(gate: &GateState, c: &CorrelationMatrix) -> Result<Vec<f64>> {
    Ok(match gate {
        GateState::DecisionUnit(unit) => decision_forward(unit, c)?.into(),
        GateState::DropIn(g) => g.alpha_raw.clone(),
        GateState::Stochastic(g) => stochastic_forward(g, &[], false)?.into(),
    })
}

fn reported_scores(gate: &GateState, c: &CorrelationMatrix) -> Result<ScoreVector> {
    Ok(match gate {
        GateState::DecisionUnit(unit) => decision_forward(unit, c)?,
        GateState::DropIn(g) => dropin_scores(g),
        GateState::Stochastic(g) => stochastic_forward(g, &[], false)?,
    })
}

/// Test-set mean squared error in original output units.
pub fn evaluate(model: &FittedModel, test: &LaggedDataset) -> Result<f64> {
    match &test.scaling {
        Some(s) if *s == model.stats => {}
        _ => return Err(Error::StatsMismatch),
    }
    let preds = model.predict(&test.x)?;
    let n = preds.len();
    if n == 0 {
        return Err(Error::EmptyRequest);
    }
    let sse: f64 = preds
        .iter()
        .zip(&test.targets)
        .map(|(p, t)| {
            let e = p - model.stats.destandardize_target(*t);
            e * e
        })
        .sum();
    Ok(sse / n as f64)
}

/// Parameters and moment estimates of a gate.
enum GateTrainer {
    Decision {
        unit: DecisionUnit,
        w_state: MomentState,
        b_state: MomentState,
    },
    DropIn {
        gate: DropInGate,
        state: MomentState,
    },
    Stochastic {
        gate: StochasticGate,
        state: MomentState,
    },
}

impl GateTrainer {
    fn new(config: &TrainConfig, dim: usize) -> Result<Self> {
        Ok(match config.method {
            Method::DecisionUnit => {
                let unit = DecisionUnit::zeros(dim, config.layout);
                GateTrainer::Decision {
                    w_state: MomentState::new(unit.weights.len()),
                    b_state: MomentState::new(dim),
                    unit,
                }
            }
            Method::DropIn => GateTrainer::DropIn {
                gate: DropInGate::ones(dim),
                state: MomentState::new(dim),
            },
            Method::Stochastic => GateTrainer::Stochastic {
                gate: StochasticGate::new(vec![config.stochastic_mu_init; dim], config.stochastic_sigma)?,
                state: MomentState::new(dim),
            },
        })
    }

    fn into_state(self) -> GateState {
        match self {
            GateTrainer::Decision { unit, .. } => GateState::DecisionUnit(unit),
            GateTrainer::DropIn { gate, .. } => GateState::DropIn(gate),
            GateTrainer::Stochastic { gate, .. } => GateState::Stochastic(gate),
        }
    }
}

fn select_rows(x: &DMatrix<f64>, y: &[f64], idx: &[usize]) -> (DMatrix<f64>, Vec<f64>) {
    let xb = DMatrix::from_fn(idx.len(), x.ncols(), |i, j| x[(idx[i], j)]);
    let yb = idx.iter().map(|&i| y[i]).collect();
    (xb, yb)
}

fn check_training_set(dataset: &LaggedDataset) -> Result<StandardizeStats> {
    let stats = dataset
        .scaling
        .clone()
        .ok_or_else(|| Error::InvalidConfig("training set must be standardized".into()))?;
    if dataset.n_rows() < 2 {
        return Err(Error::InsufficientData {
            len: dataset.n_rows(),
            lag: dataset.lag,
        });
    }
    check_len("targets", dataset.n_rows(), dataset.targets.len())?;
    Ok(stats)
}

fn expansion_point(x: &DMatrix<f64>, mode: X0Mode) -> Vec<f64> {
    match mode {
        X0Mode::Zero => vec![0.0; x.ncols()],
        X0Mode::TrainMean => x
            .column_iter()
            .map(|c| c.sum() / x.nrows() as f64)
            .collect(),
    }
}

fn shuffled(n: usize, rng: &mut impl rand::Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
}

/// Minibatch training of the gated regressor on a standardized dataset.
pub fn train(dataset: &LaggedDataset, config: &TrainConfig) -> Result<FittedModel> {
    config.validate()?;
    let stats = check_training_set(dataset)?;
    let (n, dim) = (dataset.n_rows(), dataset.n_features());
    let batch = config.batch_size.min(n);
    let steps_per_epoch = n.div_ceil(batch);
    let total_steps = steps_per_epoch * config.epochs;

    let mut net = Network::new(dim, &config.hidden, config.seed)?;
    let mut net_opt = NetworkOptimizer::new(&net);
    let mut gate = GateTrainer::new(config, dim)?;
    let correlation = correlation_matrix(&dataset.x, config.centering)?;
    let x0 = expansion_point(&dataset.x, config.x0_mode);
    let var_y = dataset.target_variance();
    let lambda = config.effective_lambda();

    let mut shuffle_rng = rng::stream(config.seed, Stream::Shuffle);
    let mut noise_rng = rng::stream(config.seed, Stream::GateNoise);
    let base = OptimizerConfig::adam(config.lr);
    let mut history = Vec::with_capacity(config.epochs);
    let mut step = 0usize;

    for epoch in 0..config.epochs {
        let order = shuffled(n, &mut shuffle_rng);
        let (mut mse_sum, mut pen_sum) = (0.0, 0.0);
        for idx in order.chunks(batch) {
            let factor = config.schedule.factor(step, total_steps);
            let (xb, yb) = select_rows(&dataset.x, &dataset.targets, idx);
            let batch_corr;
            let corr = match (config.refresh, &gate) {
                (CorrelationRefresh::PerBatch, GateTrainer::Decision { .. }) if xb.nrows() >= 2 => {
                    batch_corr = correlation_matrix(&xb, config.centering)?;
                    &batch_corr
                }
                _ => &correlation,
            };

            let mut eps = Vec::new();
            let alpha: Vec<f64> = if config.frozen_scores {
                vec![1.0; dim]
            } else {
                match &gate {
                    GateTrainer::Decision { unit, .. } => decision_forward(unit, corr)?.into(),
                    GateTrainer::DropIn { gate, .. } => gate.alpha_raw.clone(),
                    GateTrainer::Stochastic { gate, .. } => {
                        eps = (0..dim).map(|_| StandardNormal.sample(&mut noise_rng)).collect();
                        stochastic_forward(gate, &eps, true)?.into()
                    }
                }
            };

            let penalty = VariancePenalty {
                correlation: corr,
                x0: &x0,
                var_y,
                lambda_v: lambda,
                through_network: config.penalty_through_network,
            };
            let (loss, grads) = loss_and_gradients(&net, &alpha, &xb, &yb, Some(&penalty))?;
            let fail = Error::TrainingFailure { epoch, step };
            if !loss.total.is_finite() || !grads.is_finite() {
                return Err(fail);
            }
            mse_sum += loss.mse;
            pen_sum += loss.var_penalty;

            if !config.frozen_scores {
                let gate_lr = match config.method {
                    Method::Stochastic => config.stochastic_gate_lr,
                    _ => config.gate_lr,
                };
                let gate_cfg = base.with_lr(gate_lr * factor);
                let res = match &mut gate {
                    GateTrainer::Decision {
                        unit,
                        w_state,
                        b_state,
                    } => {
                        let g = decision_backward(unit, corr, &grads.alpha)?;
                        optimizer_step(unit.weights.as_mut_slice(), g.weights.as_slice(), w_state, &gate_cfg)
                            .and_then(|_| optimizer_step(&mut unit.bias, &g.bias, b_state, &gate_cfg))
                    }
                    GateTrainer::DropIn { gate, state } => {
                        let g: Vec<f64> = grads
                            .alpha
                            .iter()
                            .zip(&gate.alpha_raw)
                            .map(|(g, a)| g + config.dropin_l1 * a.signum() * (*a != 0.0) as u8 as f64)
                            .collect();
                        optimizer_step(&mut gate.alpha_raw, &g, state, &gate_cfg)
                    }
                    GateTrainer::Stochastic { gate, state } => {
                        let g = stochastic_mu_gradient(gate, &eps, &grads.alpha)?;
                        optimizer_step(&mut gate.mu, &g, state, &gate_cfg)
                    }
                };
                res.map_err(|_| fail.clone())?;
            }
            net_opt
                .step(&mut net, &grads, &base.with_lr(config.lr * factor))
                .map_err(|_| fail)?;
            step += 1;
        }
        let mse = mse_sum / steps_per_epoch as f64;
        let var_penalty = pen_sum / steps_per_epoch as f64;
        history.push(LossBreakdown {
            mse,
            var_penalty,
            total: mse + lambda * var_penalty,
        });
    }

    let gate = gate.into_state();
    let alpha = if config.frozen_scores {
        ScoreVector::clamped(&vec![1.0; dim])
    } else {
        reported_scores(&gate, &correlation)?
    };
    Ok(FittedModel {
        network: net,
        gate,
        stats,
        alpha,
        history,
        correlation,
        config: config.clone(),
    })
}

/// Ungated least-squares regression with the same initialization, batch
/// order and optimizer as [`train`]. Returns the network and per-epoch losses.
pub fn train_plain(dataset: &LaggedDataset, config: &TrainConfig) -> Result<(Network, Vec<LossBreakdown>)> {
    config.validate()?;
    check_training_set(dataset)?;
    let n = dataset.n_rows();
    let batch = config.batch_size.min(n);
    let steps_per_epoch = n.div_ceil(batch);
    let total_steps = steps_per_epoch * config.epochs;
    let mut net = Network::new(dataset.n_features(), &config.hidden, config.seed)?;
    let mut opt = NetworkOptimizer::new(&net);
    let mut rng = rng::stream(config.seed, Stream::Shuffle);
    let ones = vec![1.0; dataset.n_features()];
    let mut history = Vec::with_capacity(config.epochs);
    let mut step = 0;
    for epoch in 0..config.epochs {
        let mut mse_sum = 0.0;
        for idx in shuffled(n, &mut rng).chunks(batch) {
            let (xb, yb) = select_rows(&dataset.x, &dataset.targets, idx);
            let (preds, trace) = nnet::forward(&net, &xb, &ones)?;
            let resid: Vec<f64> = yb.iter().zip(&preds).map(|(t, p)| t - p).collect();
            let mse = resid.iter().map(|r| r * r).sum::<f64>() / resid.len() as f64;
            if !mse.is_finite() {
                return Err(Error::TrainingFailure { epoch, step });
            }
            mse_sum += mse;
            let grads = nnet::backward(&net, &trace, &resid)?;
            let lr = config.lr * config.schedule.factor(step, total_steps);
            opt.step(&mut net, &grads, &OptimizerConfig::adam(lr))
                .map_err(|_| Error::TrainingFailure { epoch, step })?;
            step += 1;
        }
        let mse = mse_sum / steps_per_epoch as f64;
        history.push(LossBreakdown {
            mse,
            var_penalty: 0.0,
            total: mse,
        });
    }
    Ok((net, history))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eye(d: usize) -> CorrelationMatrix {
        CorrelationMatrix::from_matrix(DMatrix::identity(d, d)).unwrap()
    }

    #[test]
    fn penalty_hand_cases() {
        let c = eye(2);
        assert_eq!(variance_penalty(&[1.0, 1.0], &c, &[1.0, 2.0], 5.0).unwrap(), 0.0);
        assert_eq!(variance_penalty(&[0.0, 0.0], &c, &[1.0, 2.0], 5.0).unwrap(), 25.0);
        assert_eq!(variance_penalty(&[0.3, 0.9], &c, &[0.0, 0.0], 5.0).unwrap(), 25.0);
    }

    #[test]
    fn penalty_gradients_vanish_at_zero_penalty() {
        let (da, dg) = penalty_gradients(&[1.0, 1.0], &eye(2), &[1.0, 2.0], 5.0).unwrap();
        assert_eq!(da, vec![0.0, 0.0]);
        assert_eq!(dg, vec![0.0, 0.0]);
    }

    #[test]
    fn diagonal_penalty_gradient() {
        let c = CorrelationMatrix::from_matrix(DMatrix::from_diagonal(&DVector::from_row_slice(&[
            2.0, 0.5, 1.5,
        ])))
        .unwrap();
        let (alpha, g, v) = ([0.4, 0.7, 0.2], [1.5, -2.0, 0.3], 3.0);
        let q: f64 = (0..3).map(|j| alpha[j] * alpha[j] * g[j] * g[j] * c.matrix()[(j, j)]).sum();
        let (da, _) = penalty_gradients(&alpha, &c, &g, v).unwrap();
        for j in 0..3 {
            let expected = -4.0 * (v - q) * alpha[j] * g[j] * g[j] * c.matrix()[(j, j)];
            assert!((da[j] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn method_names_parse() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("lasso".parse::<Method>().is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::default();
        assert!(c.validate().is_ok());
        c.lambda_v = -1.0;
        assert!(c.validate().is_err());
        c = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn cosine_schedule_endpoints() {
        assert_eq!(LrSchedule::Cosine.factor(0, 10), 1.0);
        assert!((LrSchedule::Cosine.factor(5, 10) - 0.5).abs() < 1e-15);
        assert_eq!(LrSchedule::Constant.factor(7, 10), 1.0);
    }
}
