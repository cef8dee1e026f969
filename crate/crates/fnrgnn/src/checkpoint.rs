//! Trained parameters plus everything needed to rebuild the model inputs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use fnrgnn_core::graph::{AdjacencySpec, Standardizer};
use fnrgnn_core::model::{ModelParams, PARAM_NAMES};
use fnrgnn_core::trainer::{Prepared, Splits, TrainResult};
use fnrgnn_core::{Graph, Tensor};

use crate::error::{Error, Result};
use crate::json;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub tensors: Vec<NamedTensor>,
    pub adjacency: AdjacencySpec,
    pub standardizer: Standardizer,
    pub splits: Splits,
}

impl Checkpoint {
    pub fn from_result(result: &TrainResult) -> Self {
        let tensors = PARAM_NAMES
            .iter()
            .zip(result.params.tensors())
            .map(|(name, t)| NamedTensor {
                name: (*name).into(),
                shape: [t.rows(), t.cols()],
                data: t.data().to_vec(),
            })
            .collect();
        Checkpoint {
            tensors,
            adjacency: result.adjacency_spec,
            standardizer: result.standardizer.clone(),
            splits: result.splits.clone(),
        }
    }

    pub fn params(&self) -> Result<ModelParams> {
        let names: Vec<&str> = self.tensors.iter().map(|t| t.name.as_str()).collect();
        if names != PARAM_NAMES {
            return Err(fnrgnn_core::Error::InvalidConfig(format!(
                "checkpoint tensors must be {PARAM_NAMES:?}, got {names:?}"
            ))
            .into());
        }
        let mut tensors = self
            .tensors
            .iter()
            .map(|t| Tensor::from_vec(t.shape[0], t.shape[1], t.data.clone()))
            .collect::<fnrgnn_core::Result<Vec<_>>>()?
            .into_iter();
        let mut next = || tensors.next().expect("six tensors");
        Ok(ModelParams::from_tensors([next(), next(), next(), next(), next(), next()])?)
    }

    /// Model parameters and prepared inputs for `g`, checked for shape
    /// compatibility.
    pub fn restore(&self, g: &Graph) -> Result<(ModelParams, Prepared)> {
        let params = self.params()?;
        if params.feature_dim() != g.feature_dim() {
            return Err(fnrgnn_core::Error::InvalidConfig(format!(
                "checkpoint expects {} features, graph has {}",
                params.feature_dim(),
                g.feature_dim()
            ))
            .into());
        }
        let prepared = Prepared::from_parts(g, self.splits.clone(), self.standardizer.clone(), self.adjacency)?;
        Ok((params, prepared))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        json::write(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        json::read(path, true).map_err(|e| match e {
            Error::Format { path, message } => Error::Format {
                path,
                message: format!("invalid checkpoint: {message}"),
            },
            other => other,
        })
    }
}
