//! JSON checkpoints of a fitted model. Matrices are stored row-major with
//! explicit shapes; loading a checkpoint reproduces every parameter exactly.

use std::fs;
use std::path::Path;

use fimgate_core::datagen::StandardizeStats;
use fimgate_core::fim::CorrelationMatrix;
use fimgate_core::gating::{CorrelationLayout, DecisionUnit, DropInGate, GateState, ScoreVector, StochasticGate};
use fimgate_core::nnet::{Activation, Layer, Network};
use fimgate_core::trainer::{FittedModel, LossBreakdown, TrainConfig};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::ensure_parent;

const FORMAT: &str = "fimgate-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Matrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl Matrix {
    fn from_dmatrix(m: &DMatrix<f64>) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            values: m.transpose().as_slice().to_vec(),
        }
    }

    fn to_dmatrix(&self, what: &str) -> Result<DMatrix<f64>> {
        if self.rows * self.cols != self.values.len() {
            return Err(Error::Checkpoint(format!(
                "{what}: {}x{} matrix with {} values",
                self.rows,
                self.cols,
                self.values.len()
            )));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.values))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LayerRecord {
    activation: Activation,
    weights: Matrix,
    bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum GateRecord {
    DecisionUnit {
        layout: CorrelationLayout,
        weights: Matrix,
        bias: Vec<f64>,
    },
    DropIn {
        alpha_raw: Vec<f64>,
    },
    Stochastic {
        mu: Vec<f64>,
        sigma: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    config: TrainConfig,
    layers: Vec<LayerRecord>,
    gate: GateRecord,
    stats: StandardizeStats,
    alpha: ScoreVector,
    correlation: Matrix,
    history: Vec<LossBreakdown>,
}

impl Checkpoint {
    fn from_model(model: &FittedModel) -> Self {
        let layers = model
            .network
            .layers()
            .iter()
            .map(|l| LayerRecord {
                activation: l.activation,
                weights: Matrix::from_dmatrix(&l.weights),
                bias: l.bias.as_slice().to_vec(),
            })
            .collect();
        let gate = match &model.gate {
            GateState::DecisionUnit(u) => GateRecord::DecisionUnit {
                layout: u.layout,
                weights: Matrix::from_dmatrix(&u.weights),
                bias: u.bias.clone(),
            },
            GateState::DropIn(g) => GateRecord::DropIn {
                alpha_raw: g.alpha_raw.clone(),
            },
            GateState::Stochastic(g) => GateRecord::Stochastic {
                mu: g.mu.clone(),
                sigma: g.sigma(),
            },
        };
        Self {
            format: FORMAT.into(),
            version: VERSION,
            config: model.config.clone(),
            layers,
            gate,
            stats: model.stats.clone(),
            alpha: model.alpha.clone(),
            correlation: Matrix::from_dmatrix(model.correlation.matrix()),
            history: model.history.clone(),
        }
    }

    fn into_model(self) -> Result<FittedModel> {
        if self.format != FORMAT || self.version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format `{}` version {}",
                self.format, self.version
            )));
        }
        let layers = self
            .layers
            .iter()
            .map(|l| {
                Ok(Layer::new(
                    l.weights.to_dmatrix("layer weights")?,
                    DVector::from_vec(l.bias.clone()),
                    l.activation,
                )?)
            })
            .collect::<Result<Vec<_>>>()?;
        let network = Network::from_layers(layers)?;
        let gate = match self.gate {
            GateRecord::DecisionUnit {
                layout,
                weights,
                bias,
            } => GateState::DecisionUnit(DecisionUnit {
                weights: weights.to_dmatrix("decision weights")?,
                bias,
                layout,
            }),
            GateRecord::DropIn { alpha_raw } => GateState::DropIn(DropInGate { alpha_raw }),
            GateRecord::Stochastic { mu, sigma } => GateState::Stochastic(StochasticGate::new(mu, sigma)?),
        };
        let correlation = CorrelationMatrix::from_matrix(self.correlation.to_dmatrix("correlation")?)?;
        let d = network.input_dim();
        if self.alpha.len() != d || correlation.dim() != d || self.stats.x_mean.len() != d {
            return Err(Error::Checkpoint(format!("inconsistent input dimension {d}")));
        }
        Ok(FittedModel {
            network,
            gate,
            stats: self.stats,
            alpha: self.alpha,
            history: self.history,
            correlation,
            config: self.config,
        })
    }
}

pub fn to_json(model: &FittedModel) -> Result<String> {
    serde_json::to_string_pretty(&Checkpoint::from_model(model)).map_err(Error::json("<checkpoint>"))
}

pub fn from_json(text: &str) -> Result<FittedModel> {
    let ck: Checkpoint = serde_json::from_str(text).map_err(Error::json("<checkpoint>"))?;
    ck.into_model()
}

pub fn save(path: &Path, model: &FittedModel) -> Result<()> {
    ensure_parent(path)?;
    let text = serde_json::to_string_pretty(&Checkpoint::from_model(model)).map_err(Error::json(path))?;
    fs::write(path, text).map_err(Error::io(path))
}

pub fn load(path: &Path) -> Result<FittedModel> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    let ck: Checkpoint = serde_json::from_str(&text).map_err(Error::json(path))?;
    ck.into_model()
}

#[cfg(test)]
mod tests {
    use super::*;
    use fimgate_core::datagen::{build_lagged, standardize, SimConfig, SystemId};
    use fimgate_core::trainer::{train, Method};

    fn fitted(method: Method) -> FittedModel {
        let pair = SimConfig::new(SystemId::F3, 300, 1).run().unwrap();
        let (ds, _) = standardize(&build_lagged(&pair, 4).unwrap()).unwrap();
        let cfg = TrainConfig {
            method,
            epochs: 3,
            hidden: vec![6],
            ..TrainConfig::default()
        };
        train(&ds, &cfg).unwrap()
    }

    #[test]
    fn round_trip_is_exact_for_every_gate() {
        for method in Method::ALL {
            let model = fitted(method);
            let back = from_json(&to_json(&model).unwrap()).unwrap();
            assert_eq!(back, model);
        }
    }

    #[test]
    fn rejects_foreign_documents() {
        let model = fitted(Method::DropIn);
        let text = to_json(&model).unwrap().replace(FORMAT, "something-else");
        assert!(matches!(from_json(&text), Err(Error::Checkpoint(_))));
        assert!(from_json("{}").is_err());
    }
}
