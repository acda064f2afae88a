//! Surrogate modelling of a current-regulated dc-dc boost converter.
//!
//! The crate covers the whole pipeline: the averaged converter physics and its
//! PI current loop ([`converter`], [`control`], [`simulate`]), dataset
//! generation over parameter grids ([`dataset`]), from-scratch FCNN / BiLSTM
//! surrogates with an optional power-balance penalty ([`nn`]), and
//! step-response evaluation ([`eval`]).

// `!(x > 0.0)` style checks are used so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod control;
pub mod converter;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod nn;
pub mod ode;
pub mod simulate;

pub use control::{design_pi, verify_loop, PiDesignRecord, PiGains};
pub use converter::{dc_steady_state, ConverterParams, FrequencyPoint, SteadyState};
pub use error::{Error, LoadError, Result};
pub use simulate::{simulate_closed_loop, validate_trajectory, RejectReason, Scenario, Trajectory, Validation};
pub use eval::{box_stats, curve_rmse, metric_error_report, step_metrics, BoxStats, MetricReport, StepMetrics};
pub use nn::{LossBreakdown, ModelKind, ModelWeights};
pub use config::RunConfig;
