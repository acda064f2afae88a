//! From-scratch surrogate networks, the composite loss, Adam and the
//! training loop.

pub mod adam;
pub mod bilstm;
pub mod checkpoint;
pub mod fcnn;
pub mod loss;
pub mod lstm;
pub mod params;
pub mod search;
pub mod train;

use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamState};
pub use bilstm::{bilstm_forward, BilstmWeights};
pub use checkpoint::{load_weights, save_weights, Checkpoint};
pub use fcnn::{fcnn_forward, FcnnWeights};
pub use loss::{compute_loss, LossBreakdown};
pub use lstm::{lstm_cell_step, LstmCell};
pub use params::Params;
pub use search::{random_search, SearchSpace, Trial};
pub use train::{train, EpochRecord, Hyperparams, PreparedData, Sample, TrainedModel};

/// Number of hidden layers in the FCNN.
pub const FCNN_HIDDEN_LAYERS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Fcnn,
    Bilstm,
    BilstmPinn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Fcnn, ModelKind::Bilstm, ModelKind::BilstmPinn];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Fcnn => "fcnn",
            ModelKind::Bilstm => "bilstm",
            ModelKind::BilstmPinn => "bilstm-pinn",
        }
    }

    pub fn is_recurrent(self) -> bool {
        !matches!(self, ModelKind::Fcnn)
    }

    /// Tuned reference values.
    pub fn default_hyperparams(self) -> Hyperparams {
        match self {
            ModelKind::Fcnn => Hyperparams {
                batch_size: 294,
                epochs: 35,
                learning_rate: 6e-4,
                hidden_size: 304,
                sequence_length: 0,
                weight_decay: 9e-3,
                lambda: 0.2,
                seed: 0,
                window_stride: 1,
                samples_per_curve: None,
            },
            ModelKind::Bilstm => Hyperparams {
                batch_size: 207,
                epochs: 35,
                learning_rate: 1e-3,
                hidden_size: 165,
                sequence_length: 25,
                weight_decay: 7e-4,
                lambda: 0.0,
                seed: 0,
                window_stride: 1,
                samples_per_curve: None,
            },
            ModelKind::BilstmPinn => Hyperparams {
                lambda: 0.2,
                ..ModelKind::Bilstm.default_hyperparams()
            },
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| crate::Error::Config(format!("unknown model kind `{s}` (expected fcnn, bilstm or bilstm-pinn)")))
    }
}

/// Weights of either architecture.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum ModelWeights {
    Fcnn(FcnnWeights),
    Bilstm(BilstmWeights),
}

impl ModelWeights {
    pub fn architecture(&self) -> String {
        match self {
            ModelWeights::Fcnn(w) => format!("fcnn{:?}", w.sizes()),
            ModelWeights::Bilstm(w) => format!("bilstm[in={}, h={}, k={}]", w.inputs(), w.hidden(), w.k),
        }
    }
}

impl Params for ModelWeights {
    fn tensors(&self) -> Vec<&[f64]> {
        match self {
            ModelWeights::Fcnn(w) => w.tensors(),
            ModelWeights::Bilstm(w) => w.tensors(),
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            ModelWeights::Fcnn(w) => w.tensors_mut(),
            ModelWeights::Bilstm(w) => w.tensors_mut(),
        }
    }
}
