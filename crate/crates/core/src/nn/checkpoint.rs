//! Versioned, checksummed weights container.
//!
//! Same framing as the dataset container; the JSON header carries the model
//! kind, an architecture descriptor, the scaler hash and the hyperparameters,
//! and the body holds every parameter tensor in `Params::tensors` order.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::bilstm::BilstmWeights;
use super::fcnn::FcnnWeights;
use super::lstm::LstmCell;
use super::params::Params;
use super::train::Hyperparams;
use super::{ModelKind, ModelWeights};
use crate::dataset::{f64s_from_le, Container};
use crate::error::{Error, LoadError, Result};

const WEIGHTS_MAGIC: &[u8; 4] = b"BNWT";
pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Architecture {
    Fcnn { sizes: Vec<usize> },
    Bilstm { inputs: usize, hidden: usize, outputs: usize, k: usize },
}

impl Architecture {
    pub fn of(w: &ModelWeights) -> Self {
        match w {
            ModelWeights::Fcnn(w) => Architecture::Fcnn { sizes: w.sizes() },
            ModelWeights::Bilstm(w) => Architecture::Bilstm {
                inputs: w.inputs(),
                hidden: w.hidden(),
                outputs: w.head_b.len(),
                k: w.k,
            },
        }
    }

    fn zeros(&self) -> Result<ModelWeights, LoadError> {
        match self {
            Architecture::Fcnn { sizes } if sizes.len() >= 2 && sizes.iter().all(|&s| s > 0) => {
                Ok(ModelWeights::Fcnn(FcnnWeights::zeros(sizes)))
            }
            &Architecture::Bilstm {
                inputs,
                hidden,
                outputs,
                k,
            } if inputs > 0 && hidden > 0 && outputs > 0 => Ok(ModelWeights::Bilstm(BilstmWeights {
                forward: LstmCell::zeros(inputs, hidden),
                backward: LstmCell::zeros(inputs, hidden),
                head_w: Array2::zeros((2 * hidden, outputs)),
                head_b: Array1::zeros(outputs),
                k,
            })),
            other => Err(LoadError::Malformed(format!("invalid architecture {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub hyperparams: Hyperparams,
    pub scaler_hash: String,
    pub weights: ModelWeights,
}

#[derive(Serialize, Deserialize)]
struct Header {
    kind: ModelKind,
    architecture: Architecture,
    scaler_hash: String,
    hyperparams: Hyperparams,
    n_params: usize,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            kind: self.kind,
            architecture: Architecture::of(&self.weights),
            scaler_hash: self.scaler_hash.clone(),
            hyperparams: self.hyperparams.clone(),
            n_params: self.weights.n_params(),
        };
        let header = serde_json::to_vec(&header).expect("weights header serializes");
        let mut body = Vec::with_capacity(self.weights.n_params() * 8);
        for t in self.weights.tensors() {
            for v in t {
                body.extend_from_slice(&v.to_le_bytes());
            }
        }
        Container::seal(WEIGHTS_MAGIC, WEIGHTS_VERSION, &header, &body)
    }

    /// Parses and integrity-checks a container without checking what it holds.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, LoadError> {
        let (header, body) = Container::open(bytes, WEIGHTS_MAGIC, "weights", WEIGHTS_VERSION)?;
        let header: Header =
            serde_json::from_slice(header).map_err(|e| LoadError::Malformed(format!("weights header: {e}")))?;
        let mut weights = header.architecture.zeros()?;
        let family_ok = matches!(
            (&weights, header.kind.is_recurrent()),
            (ModelWeights::Fcnn(_), false) | (ModelWeights::Bilstm(_), true)
        );
        if !family_ok {
            return Err(LoadError::Malformed(format!(
                "kind {} does not match architecture {:?}",
                header.kind, header.architecture
            )));
        }
        if weights.n_params() != header.n_params || body.len() != header.n_params * 8 {
            return Err(LoadError::Malformed("parameter block size disagrees with architecture".into()));
        }
        let mut values = f64s_from_le(body);
        for t in weights.tensors_mut() {
            for v in t.iter_mut() {
                *v = values.next().expect("length checked above");
            }
        }
        Ok(Checkpoint {
            kind: header.kind,
            hyperparams: header.hyperparams,
            scaler_hash: header.scaler_hash,
            weights,
        })
    }

    /// Checks the container against the model kind and normalization the caller intends to use.
    pub fn expect(self, kind: ModelKind, scaler_hash: Option<&str>) -> Result<Self, LoadError> {
        if self.kind != kind {
            return Err(LoadError::Architecture {
                found: format!("{} {}", self.kind, self.weights.architecture()),
                expected: kind.to_string(),
            });
        }
        if scaler_hash.is_some_and(|h| h != self.scaler_hash) {
            return Err(LoadError::ScalerMismatch);
        }
        Ok(self)
    }
}

pub fn save_weights(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    std::fs::write(path, checkpoint.to_bytes()).map_err(|e| Error::io(path, e))
}

/// Loads a checkpoint and checks it holds `kind`, trained against `scaler_hash` when given.
pub fn load_weights(path: &Path, kind: ModelKind, scaler_hash: Option<&str>) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(Checkpoint::from_bytes(&bytes)?.expect(kind, scaler_hash)?)
}
