//! Relevance-score mechanisms and score post-processing.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{check_len, Error, Result};
use crate::fim::CorrelationMatrix;

/// Per-column relevance scores, every entry in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "Vec<f64>", into = "Vec<f64>"))]
pub struct ScoreVector(Vec<f64>);

impl ScoreVector {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::InvalidConfig("scores must lie in [0, 1]".into()));
        }
        Ok(Self(alpha))
    }

    /// Clamps each entry into `[0, 1]`. NaN maps to 0.
    pub fn clamped(raw: &[f64]) -> Self {
        Self(
            raw.iter()
                .map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) })
                .collect(),
        )
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for ScoreVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ScoreVector> for Vec<f64> {
    fn from(s: ScoreVector) -> Self {
        s.0
    }
}

/// Which part of the correlation matrix feeds the decision unit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CorrelationLayout {
    /// Upper triangle with diagonal, `tau(2tau + 1)` features.
    #[default]
    UpperTriangle,
    /// Every entry, `(2tau)^2` features.
    Full,
}

impl CorrelationLayout {
    pub fn features(self, c: &CorrelationMatrix) -> Vec<f64> {
        match self {
            CorrelationLayout::UpperTriangle => c.upper_triangle(),
            CorrelationLayout::Full => c.full(),
        }
    }

    pub fn n_features(self, dim: usize) -> usize {
        match self {
            CorrelationLayout::UpperTriangle => dim * (dim + 1) / 2,
            CorrelationLayout::Full => dim * dim,
        }
    }
}

/// Logistic decision unit: `alpha = sigmoid(W vec(C) + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionUnit {
    /// `2tau x n_features`.
    pub weights: DMatrix<f64>,
    pub bias: Vec<f64>,
    pub layout: CorrelationLayout,
}

/// Gradients of a decision unit's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionGrads {
    pub weights: DMatrix<f64>,
    pub bias: Vec<f64>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

impl DecisionUnit {
    /// Zero weights and bias: every score starts at 0.5.
    pub fn zeros(dim: usize, layout: CorrelationLayout) -> Self {
        Self {
            weights: DMatrix::zeros(dim, layout.n_features(dim)),
            bias: alloc::vec![0.0; dim],
            layout,
        }
    }

    pub fn dim(&self) -> usize {
        self.bias.len()
    }

    fn features(&self, c: &CorrelationMatrix) -> Result<Vec<f64>> {
        check_len("correlation matrix", self.dim(), c.dim())?;
        let f = self.layout.features(c);
        check_len("decision unit inputs", self.weights.ncols(), f.len())?;
        Ok(f)
    }

    fn logits(&self, features: &[f64]) -> Vec<f64> {
        self.weights
            .row_iter()
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(features).map(|(w, f)| w * f).sum::<f64>() + b)
            .collect()
    }
}

pub fn decision_forward(unit: &DecisionUnit, c: &CorrelationMatrix) -> Result<ScoreVector> {
    let f = unit.features(c)?;
    Ok(ScoreVector(unit.logits(&f).into_iter().map(sigmoid).collect()))
}

/// Chain rule through the sigmoid: `upstream` holds `dL/dalpha`.
pub fn decision_backward(
    unit: &DecisionUnit,
    c: &CorrelationMatrix,
    upstream: &[f64],
) -> Result<DecisionGrads> {
    check_len("upstream gradient", unit.dim(), upstream.len())?;
    let f = unit.features(c)?;
    let d_logit: Vec<f64> = unit
        .logits(&f)
        .into_iter()
        .zip(upstream)
        .map(|(z, u)| {
            let a = sigmoid(z);
            u * a * (1.0 - a)
        })
        .collect();
    let weights = DMatrix::from_fn(unit.dim(), f.len(), |j, k| d_logit[j] * f[k]);
    Ok(DecisionGrads {
        weights,
        bias: d_logit,
    })
}

/// Drop-in layer: a free, unconstrained weight per column.
#[derive(Debug, Clone, PartialEq)]
pub struct DropInGate {
    pub alpha_raw: Vec<f64>,
}

impl DropInGate {
    pub fn ones(dim: usize) -> Self {
        Self {
            alpha_raw: alloc::vec![1.0; dim],
        }
    }
}

/// Scores reported for a drop-in gate: raw weights clamped to `[0, 1]`.
/// The forward pass itself uses `alpha_raw` unclamped.
pub fn dropin_scores(gate: &DropInGate) -> ScoreVector {
    ScoreVector::clamped(&gate.alpha_raw)
}

/// Stochastic gate `clamp(mu + sigma * eps, 0, 1)` with a fixed `sigma`.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticGate {
    pub mu: Vec<f64>,
    sigma: f64,
}

impl StochasticGate {
    pub fn new(mu: Vec<f64>, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidConfig("stochastic gate sigma must be > 0".into()));
        }
        Ok(Self { mu, sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Training mode perturbs `mu` with `sigma * eps`; inference uses `mu`.
pub fn stochastic_forward(gate: &StochasticGate, eps: &[f64], training: bool) -> Result<ScoreVector> {
    if !training {
        return Ok(ScoreVector::clamped(&gate.mu));
    }
    check_len("gate noise", gate.dim(), eps.len())?;
    let raw: Vec<f64> = gate
        .mu
        .iter()
        .zip(eps)
        .map(|(m, e)| m + gate.sigma * e)
        .collect();
    Ok(ScoreVector::clamped(&raw))
}

/// Passes `upstream` through where the gate is strictly inside `(0, 1)` and
/// blocks it where the clamp is active.
pub fn stochastic_mu_gradient(gate: &StochasticGate, eps: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
    check_len("gate noise", gate.dim(), eps.len())?;
    check_len("upstream gradient", gate.dim(), upstream.len())?;
    Ok(gate
        .mu
        .iter()
        .zip(eps)
        .zip(upstream)
        .map(|((m, e), u)| {
            let z = m + gate.sigma * e;
            if z > 0.0 && z < 1.0 {
                *u
            } else {
                0.0
            }
        })
        .collect())
}

/// Unthresholded L1 norm of the scores.
pub fn sparsity_l1(scores: &ScoreVector) -> f64 {
    scores.0.iter().map(|a| a.abs()).sum()
}

/// Columns whose score is strictly above `threshold`.
pub fn threshold_support(scores: &ScoreVector, threshold: f64) -> Result<BTreeSet<usize>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidConfig("threshold must lie in (0, 1)".into()));
    }
    Ok(scores
        .0
        .iter()
        .enumerate()
        .filter(|(_, a)| **a > threshold)
        .map(|(j, _)| j)
        .collect())
}

/// One of the three relevance mechanisms with its current parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum GateState {
    DecisionUnit(DecisionUnit),
    DropIn(DropInGate),
    Stochastic(StochasticGate),
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn corr(v: &[f64]) -> CorrelationMatrix {
        let d = (v.len() as f64).sqrt() as usize;
        CorrelationMatrix::from_matrix(DMatrix::from_row_slice(d, d, v)).unwrap()
    }

    #[test]
    fn zero_unit_scores_half() {
        let c = corr(&[1.0, 0.3, 0.3, 1.0]);
        let a = decision_forward(&DecisionUnit::zeros(2, CorrelationLayout::UpperTriangle), &c).unwrap();
        assert_eq!(a.as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn large_bias_saturates() {
        let mut unit = DecisionUnit::zeros(2, CorrelationLayout::Full);
        unit.bias[1] = 20.0;
        let a = decision_forward(&unit, &corr(&[1.0, 0.0, 0.0, 1.0])).unwrap();
        assert!(a.as_slice()[1] > 1.0 - 1e-8);
        assert!(a.as_slice()[1] <= 1.0);
    }

    #[test]
    fn hand_evaluated_unit() {
        let mut unit = DecisionUnit::zeros(2, CorrelationLayout::Full);
        unit.weights[(0, 0)] = 1.0;
        let a = decision_forward(&unit, &corr(&[0.5, 0.2, 0.2, 1.0])).unwrap();
        let expected = 1.0 / (1.0 + (-0.5f64).exp());
        assert!((a.as_slice()[0] - expected).abs() < 1e-15);
        assert!((expected - 0.6225).abs() < 1e-4);
    }

    #[test]
    fn decision_rejects_wrong_dimension() {
        let unit = DecisionUnit::zeros(3, CorrelationLayout::UpperTriangle);
        assert!(decision_forward(&unit, &corr(&[1.0, 0.0, 0.0, 1.0])).is_err());
    }

    #[test]
    fn sigmoid_factor_is_quarter_at_half() {
        let unit = DecisionUnit::zeros(1, CorrelationLayout::Full);
        let g = decision_backward(&unit, &corr(&[2.0]), &[1.0]).unwrap();
        assert_eq!(g.bias, vec![0.25]);
        assert_eq!(g.weights[(0, 0)], 0.5);
        let g = decision_backward(&unit, &corr(&[2.0]), &[0.0]).unwrap();
        assert_eq!(g.bias, vec![0.0]);
    }

    #[test]
    fn dropin_reports_clamped() {
        let gate = DropInGate {
            alpha_raw: vec![1.7, -0.2],
        };
        assert_eq!(dropin_scores(&gate).as_slice(), &[1.0, 0.0]);
        assert_eq!(gate.alpha_raw, vec![1.7, -0.2]);
        let zero = DropInGate {
            alpha_raw: vec![0.0; 3],
        };
        assert_eq!(sparsity_l1(&dropin_scores(&zero)), 0.0);
    }

    #[test]
    fn stochastic_clamps() {
        let hi = StochasticGate::new(vec![5.0], 1.0).unwrap();
        assert_eq!(stochastic_forward(&hi, &[3.9], true).unwrap().as_slice(), &[1.0]);
        assert_eq!(stochastic_forward(&hi, &[-3.9], true).unwrap().as_slice(), &[1.0]);
        let lo = StochasticGate::new(vec![-5.0], 1.0).unwrap();
        assert_eq!(stochastic_forward(&lo, &[0.5], true).unwrap().as_slice(), &[0.0]);
        let mid = StochasticGate::new(vec![0.3], 1.0).unwrap();
        let z = stochastic_forward(&mid, &[0.2], true).unwrap().as_slice()[0];
        assert!((z - 0.5).abs() < 1e-15);
        assert!(StochasticGate::new(vec![0.0], 0.0).is_err());
    }

    #[test]
    fn stochastic_inference_is_deterministic() {
        let g = StochasticGate::new(vec![0.3, 1.4, -0.1], 1.0).unwrap();
        let a = stochastic_forward(&g, &[], false).unwrap();
        assert_eq!(a, stochastic_forward(&g, &[], false).unwrap());
        assert_eq!(a.as_slice(), &[0.3, 1.0, 0.0]);
    }

    #[test]
    fn straight_through_gradient() {
        let g = StochasticGate::new(vec![0.3, 5.0, -5.0], 1.0).unwrap();
        let grad = stochastic_mu_gradient(&g, &[0.1, 0.0, 0.0], &[0.7, 0.7, 0.7]).unwrap();
        assert_eq!(grad, vec![0.7, 0.0, 0.0]);
    }

    #[test]
    fn l1_values() {
        let mut four = vec![0.0; 20];
        four[..4].fill(1.0);
        assert_eq!(sparsity_l1(&ScoreVector::new(four).unwrap()), 4.0);
        assert_eq!(sparsity_l1(&ScoreVector::new(vec![0.5; 20]).unwrap()), 10.0);
    }

    #[test]
    fn threshold_is_strict() {
        let half = ScoreVector::new(vec![0.5; 4]).unwrap();
        assert!(threshold_support(&half, 0.5).unwrap().is_empty());
        let s = ScoreVector::new(vec![0.9, 0.1, 0.7]).unwrap();
        assert_eq!(
            threshold_support(&s, 0.5).unwrap().into_iter().collect::<Vec<_>>(),
            vec![0, 2]
        );
        assert!(threshold_support(&s, 1.0).is_err());
    }

    #[test]
    fn score_vector_bounds() {
        assert!(ScoreVector::new(vec![1.1]).is_err());
        assert!(ScoreVector::new(vec![f64::NAN]).is_err());
    }
}
