use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Activation, AdamState, BranchModel, BranchNet, EpochRecord, GruModel, MlpModel, TrainConfig};
use crate::bspline::BasisDescriptor;
use crate::error::{Error, Result};

pub const CHECKPOINT_SCHEMA: &str = "splineop.checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Architecture description sufficient to rebuild a model with zero weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    Mlp {
        widths: Vec<usize>,
        activation: Activation,
        dims: usize,
        input_scale: Vec<f64>,
        output_scale: Vec<f64>,
    },
    Gru {
        dims: usize,
        hidden: usize,
        head_hidden: Vec<usize>,
        steps: usize,
        activation: Activation,
        state_scale: Vec<f64>,
    },
}

impl Architecture {
    pub fn zeros(&self) -> Result<BranchModel> {
        Ok(match self {
            Architecture::Mlp {
                widths,
                activation,
                dims,
                input_scale,
                output_scale,
            } => BranchModel::Mlp(
                MlpModel::zeros(widths, *activation, *dims)?.with_scaling(input_scale.clone(), output_scale.clone())?,
            ),
            Architecture::Gru {
                dims,
                hidden,
                head_hidden,
                steps,
                activation,
                state_scale,
            } => BranchModel::Gru(
                GruModel::zeros(*dims, *hidden, head_hidden, *steps, *activation)?.with_scaling(state_scale.clone())?,
            ),
        })
    }
}

/// Versioned JSON model file: architecture, basis, training provenance and weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema: String,
    pub schema_version: u32,
    pub architecture: Architecture,
    pub basis: BasisDescriptor,
    pub param_count: usize,
    pub init_seed: u64,
    pub train_config: Option<TrainConfig>,
    pub history: Vec<EpochRecord>,
    pub optimizer: Option<AdamState>,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn new(model: &BranchModel, basis: BasisDescriptor, init_seed: u64) -> Self {
        Self {
            schema: CHECKPOINT_SCHEMA.into(),
            schema_version: CHECKPOINT_VERSION,
            architecture: model.architecture(),
            basis,
            param_count: model.param_count(),
            init_seed,
            train_config: None,
            history: Vec::new(),
            optimizer: None,
            params: model.params().to_vec(),
        }
    }

    pub fn model(&self) -> Result<BranchModel> {
        let mut model = self.architecture.zeros()?;
        if self.params.len() != model.param_count() {
            return Err(Error::Shape {
                expected: format!("{} parameters for {:?}", model.param_count(), self.architecture),
                found: self.params.len().to_string(),
            });
        }
        model.params_mut().copy_from_slice(&self.params);
        Ok(model)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        check_schema(&value, CHECKPOINT_SCHEMA, CHECKPOINT_VERSION)?;
        Ok(serde_json::from_value(value)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// Rejects documents whose `schema`/`schema_version` fields do not match.
pub(crate) fn check_schema(value: &serde_json::Value, schema: &str, version: u32) -> Result<()> {
    let found = value.get("schema").and_then(|s| s.as_str());
    if found != Some(schema) {
        return Err(Error::Schema(format!("expected a {schema} document, found {found:?}")));
    }
    let found_version = value.get("schema_version").and_then(|v| v.as_u64());
    if found_version != Some(u64::from(version)) {
        return Err(Error::Schema(format!(
            "{schema} version {found_version:?} is not supported (expected {version})"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_weights() {
        let m = BranchModel::Mlp(MlpModel::init(&[12, 7, 24], Activation::Relu, 12, 5).unwrap());
        let basis = BasisDescriptor {
            num_basis: 2,
            degree: 1,
            start: 0.0,
            end: 1.0,
        };
        let ck = Checkpoint::new(&m, basis, 5);
        let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.model().unwrap(), m);

        let g = BranchModel::Gru(GruModel::init(3, 4, &[5], 6, Activation::Tanh, 1).unwrap());
        let ck = Checkpoint::new(&g, basis, 1);
        assert_eq!(Checkpoint::from_json(&ck.to_json().unwrap()).unwrap().model().unwrap(), g);
    }

    #[test]
    fn rejects_wrong_version() {
        let m = BranchModel::Mlp(MlpModel::zeros(&[2, 2], Activation::Relu, 1).unwrap());
        let basis = BasisDescriptor {
            num_basis: 2,
            degree: 1,
            start: 0.0,
            end: 1.0,
        };
        let mut ck = Checkpoint::new(&m, basis, 0);
        ck.schema_version = 99;
        assert!(matches!(
            Checkpoint::from_json(&ck.to_json().unwrap()),
            Err(Error::Schema(_))
        ));
        assert!(matches!(Checkpoint::from_json("{\"schema\": \"other\"}"), Err(Error::Schema(_))));
    }
}
