//! Mini-batch training of the three surrogate kinds.

use std::io::Write;

use log::{debug, info};
use ndarray::Array2;
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::bilstm::{self, window_indices, BilstmWeights};
use super::fcnn::{self, FcnnWeights};
use super::loss::{loss_and_grad, LossBreakdown};
use super::params::Params;
use super::{ModelKind, ModelWeights, FCNN_HIDDEN_LAYERS};
use crate::dataset::{Dataset, Scaler, Split, N_FEATURES, N_TARGETS};
use crate::error::{Error, Result};

/// Rows per forward pass outside training.
const PREDICT_CHUNK: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub hidden_size: usize,
    /// Window half-width `k`; unused by the FCNN.
    pub sequence_length: usize,
    pub weight_decay: f64,
    pub lambda: f64,
    pub seed: u64,
    /// Row spacing inside a recurrent window.
    #[serde(default = "one")]
    pub window_stride: usize,
    /// Rows drawn per training curve each epoch; all rows when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples_per_curve: Option<usize>,
}

fn one() -> usize {
    1
}

impl Hyperparams {
    pub fn validate(&self, kind: ModelKind) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
            ("hidden_size", self.hidden_size),
            ("window_stride", self.window_stride),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if kind.is_recurrent() && self.sequence_length == 0 {
            return Err(Error::Config("sequence_length must be positive for recurrent models".into()));
        }
        if self.samples_per_curve == Some(0) {
            return Err(Error::Config("samples_per_curve must be positive when set".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.weight_decay >= 0.0 && self.learning_rate * self.weight_decay < 1.0) {
            return Err(Error::Config(format!(
                "weight_decay must be >= 0 with learning_rate * weight_decay < 1, got {}",
                self.weight_decay
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurveSpan {
    pub id: u64,
    pub start: usize,
    pub len: usize,
}

/// One prediction target: row `offset` of the curve starting at `start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sample {
    pub start: usize,
    pub len: usize,
    pub offset: usize,
}

impl Sample {
    pub fn row(&self) -> usize {
        self.start + self.offset
    }
}

impl CurveSpan {
    pub fn samples(&self) -> impl Iterator<Item = Sample> + '_ {
        (0..self.len).map(|offset| Sample {
            start: self.start,
            len: self.len,
            offset,
        })
    }
}

/// Normalized inputs with physical targets, as consumed by the networks.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub x: Vec<[f64; N_FEATURES]>,
    pub y: Vec<[f64; N_TARGETS]>,
    pub aux: Vec<[f64; 2]>,
    pub y_mean: [f64; N_TARGETS],
    pub y_std: [f64; N_TARGETS],
    pub train: Vec<CurveSpan>,
    pub test: Vec<CurveSpan>,
    pub scaler_hash: String,
}

impl PreparedData {
    pub fn new(ds: &Dataset) -> Result<Self> {
        let scaler = ds
            .scaler
            .as_ref()
            .ok_or_else(|| Error::Domain("dataset has no fitted scaler".into()))?;
        let spans = |split| {
            ds.curves_in(split)
                .map(|c| CurveSpan {
                    id: c.id,
                    start: c.start,
                    len: c.len,
                })
                .collect()
        };
        Ok(Self::from_parts(
            &ds.features,
            ds.targets.clone(),
            ds.aux.clone(),
            spans(Split::Train),
            spans(Split::Test),
            scaler,
        ))
    }

    pub fn from_parts(
        features: &[[f64; N_FEATURES]],
        y: Vec<[f64; N_TARGETS]>,
        aux: Vec<[f64; 2]>,
        train: Vec<CurveSpan>,
        test: Vec<CurveSpan>,
        scaler: &Scaler,
    ) -> Self {
        PreparedData {
            x: features.iter().map(|r| scaler.transform_x(r)).collect(),
            y,
            aux,
            y_mean: scaler.y_mean,
            y_std: scaler.y_std,
            train,
            test,
            scaler_hash: scaler.hash_hex(),
        }
    }

    fn targets(&self, samples: &[Sample]) -> (Array2<f64>, Array2<f64>) {
        let mut y = Array2::zeros((samples.len(), 2));
        let mut aux = Array2::zeros((samples.len(), 2));
        for (r, s) in samples.iter().enumerate() {
            let n = s.row();
            y[[r, 0]] = self.y[n][0];
            y[[r, 1]] = self.y[n][1];
            aux[[r, 0]] = self.aux[n][0];
            aux[[r, 1]] = self.aux[n][1];
        }
        (y, aux)
    }

    fn denormalize(&self, z: &mut Array2<f64>) {
        for mut row in z.rows_mut() {
            for c in 0..2 {
                row[c] = self.y_mean[c] + self.y_std[c] * row[c];
            }
        }
    }
}

enum Cache {
    Fcnn(fcnn::FcnnCache),
    Bilstm(Vec<Array2<f64>>, bilstm::BilstmCache),
}

fn gather_rows(data: &PreparedData, samples: &[Sample]) -> Array2<f64> {
    let mut x = Array2::zeros((samples.len(), N_FEATURES));
    for (r, s) in samples.iter().enumerate() {
        x.row_mut(r).as_slice_mut().unwrap().copy_from_slice(&data.x[s.row()]);
    }
    x
}

fn gather_windows(data: &PreparedData, samples: &[Sample], k: usize, stride: usize) -> Vec<Array2<f64>> {
    let mut xs = vec![Array2::zeros((samples.len(), N_FEATURES)); 2 * k + 1];
    for (r, s) in samples.iter().enumerate() {
        for (p, n) in window_indices(s.offset, s.len, k, stride).enumerate() {
            xs[p].row_mut(r).as_slice_mut().unwrap().copy_from_slice(&data.x[s.start + n]);
        }
    }
    xs
}

/// Normalized network output for `samples`.
fn forward(model: &ModelWeights, data: &PreparedData, samples: &[Sample], stride: usize) -> Result<(Array2<f64>, Cache)> {
    match model {
        ModelWeights::Fcnn(w) => {
            let (out, c) = fcnn::forward_batch(w, gather_rows(data, samples).view())?;
            Ok((out, Cache::Fcnn(c)))
        }
        ModelWeights::Bilstm(w) => {
            let xs = gather_windows(data, samples, w.k, stride);
            let (out, c) = bilstm::forward_batch(w, &xs)?;
            Ok((out, Cache::Bilstm(xs, c)))
        }
    }
}

/// Predictions in physical units, `(samples, 2)`.
pub fn predict(model: &ModelWeights, data: &PreparedData, samples: &[Sample], stride: usize) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((samples.len(), 2));
    for (chunk_no, chunk) in samples.chunks(PREDICT_CHUNK).enumerate() {
        let mut z = match model {
            ModelWeights::Fcnn(w) => fcnn::forward_batch(w, gather_rows(data, chunk).view())?.0,
            ModelWeights::Bilstm(w) => bilstm::predict_batch(w, &gather_windows(data, chunk, w.k, stride))?,
        };
        data.denormalize(&mut z);
        let base = chunk_no * PREDICT_CHUNK;
        out.slice_mut(ndarray::s![base..base + chunk.len(), ..]).assign(&z);
    }
    Ok(out)
}

/// Full composite loss on one batch and its gradient with respect to every weight.
pub fn loss_and_gradient(
    model: &ModelWeights,
    data: &PreparedData,
    samples: &[Sample],
    lambda: f64,
    stride: usize,
) -> Result<(LossBreakdown, ModelWeights)> {
    let (mut pred, cache) = forward(model, data, samples, stride)?;
    data.denormalize(&mut pred);
    let (y, aux) = data.targets(samples);
    let (loss, grad) = loss_and_grad(pred.view(), y.view(), aux.view(), lambda, true)?;
    let mut d_out = grad.expect("gradient requested");
    for mut row in d_out.rows_mut() {
        for c in 0..2 {
            row[c] *= data.y_std[c];
        }
    }
    let grads = match (model, cache) {
        (ModelWeights::Fcnn(w), Cache::Fcnn(c)) => ModelWeights::Fcnn(fcnn::backward_batch(w, &c, d_out.view())),
        (ModelWeights::Bilstm(w), Cache::Bilstm(xs, c)) => {
            ModelWeights::Bilstm(bilstm::backward_batch(w, &xs, &c, d_out.view()))
        }
        _ => unreachable!("cache variant follows the model variant"),
    };
    Ok((loss, grads))
}

/// Loss of the model on `samples`, with `L_RMSE` pooled over all of them.
pub fn evaluate_loss(
    model: &ModelWeights,
    data: &PreparedData,
    samples: &[Sample],
    lambda: f64,
    stride: usize,
) -> Result<LossBreakdown> {
    let pred = predict(model, data, samples, stride)?;
    let (y, aux) = data.targets(samples);
    super::loss::compute_loss(pred.view(), y.view(), aux.view(), lambda)
}

pub fn init_weights(kind: ModelKind, hp: &Hyperparams, rng: &mut ChaCha8Rng) -> ModelWeights {
    let h = hp.hidden_size;
    match kind {
        ModelKind::Fcnn => {
            let mut sizes = vec![N_FEATURES];
            sizes.extend([h; FCNN_HIDDEN_LAYERS]);
            sizes.push(N_TARGETS);
            ModelWeights::Fcnn(FcnnWeights::init(&sizes, rng))
        }
        ModelKind::Bilstm | ModelKind::BilstmPinn => {
            ModelWeights::Bilstm(BilstmWeights::init(rng, N_FEATURES, h, N_TARGETS, hp.sequence_length))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Batch-size-weighted means over the epoch.
    pub train: LossBreakdown,
    pub validation: Option<LossBreakdown>,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub kind: ModelKind,
    pub hyperparams: Hyperparams,
    pub weights: ModelWeights,
    pub history: Vec<EpochRecord>,
}

/// Draws the epoch's rows: `samples_per_curve` per curve without replacement, or all of them.
fn draw_samples(curves: &[CurveSpan], per_curve: Option<usize>, rng: &mut ChaCha8Rng) -> Vec<Sample> {
    let mut out = Vec::new();
    for c in curves {
        match per_curve {
            Some(m) if m < c.len => {
                let mut picks = index::sample(rng, c.len, m).into_vec();
                picks.sort_unstable();
                out.extend(picks.into_iter().map(|offset| Sample {
                    start: c.start,
                    len: c.len,
                    offset,
                }));
            }
            _ => out.extend(c.samples()),
        }
    }
    out
}

/// Stream offset for the validation draw, kept apart from the shuffling stream.
const VALIDATION_STREAM: u64 = 0x005E_ED0F_7E57;

pub fn train(dataset: &Dataset, kind: ModelKind, hp: &Hyperparams) -> Result<TrainedModel> {
    train_prepared(&PreparedData::new(dataset)?, kind, hp)
}

pub fn train_prepared(data: &PreparedData, kind: ModelKind, hp: &Hyperparams) -> Result<TrainedModel> {
    hp.validate(kind)?;
    if data.train.is_empty() {
        return Err(Error::Empty("training split has no curves".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut weights = init_weights(kind, hp, &mut rng);
    let mut state = AdamState::new(&weights);
    let mut val_rng = ChaCha8Rng::seed_from_u64(hp.seed);
    val_rng.set_stream(VALIDATION_STREAM);
    let validation = draw_samples(&data.test, hp.samples_per_curve, &mut val_rng);
    info!(
        "training {kind}: {} parameters, {} train curves, {} validation rows",
        weights.n_params(),
        data.train.len(),
        validation.len()
    );

    let mut history = Vec::with_capacity(hp.epochs);
    for epoch in 0..hp.epochs {
        let mut samples = draw_samples(&data.train, hp.samples_per_curve, &mut rng);
        samples.shuffle(&mut rng);
        let (mut total, mut rmse, mut pbe) = (0.0, 0.0, 0.0);
        for (batch_no, batch) in samples.chunks(hp.batch_size).enumerate() {
            let (loss, grads) = loss_and_gradient(&weights, data, batch, hp.lambda, hp.window_stride)
                .map_err(|e| match e {
                    Error::Domain(_) => Error::NonFiniteLoss {
                        epoch,
                        batch: batch_no,
                    },
                    e => e,
                })?;
            if !grads.all_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_no,
                });
            }
            adam_step(&mut weights, &grads, &mut state, hp.learning_rate, hp.weight_decay);
            let n = batch.len() as f64;
            total += loss.total * n;
            rmse += loss.rmse_part * n;
            pbe += loss.pbe_part * n;
        }
        let n = samples.len() as f64;
        let train = LossBreakdown {
            total: total / n,
            rmse_part: rmse / n,
            pbe_part: pbe / n,
            lambda: hp.lambda,
        };
        let validation = if validation.is_empty() {
            None
        } else {
            Some(evaluate_loss(&weights, data, &validation, hp.lambda, hp.window_stride)?)
        };
        debug!(
            "{kind} epoch {epoch}: train {:.6e} validation {:?}",
            train.total,
            validation.map(|v| v.total)
        );
        history.push(EpochRecord {
            epoch,
            train,
            validation,
        });
    }
    Ok(TrainedModel {
        kind,
        hyperparams: hp.clone(),
        weights,
        history,
    })
}

/// Per-curve physical predictions for each span, in order.
pub fn predict_curves(
    model: &ModelWeights,
    data: &PreparedData,
    curves: &[CurveSpan],
    stride: usize,
) -> Result<Vec<Vec<[f64; 2]>>> {
    curves
        .iter()
        .map(|c| {
            let samples: Vec<Sample> = c.samples().collect();
            let p = predict(model, data, &samples, stride)?;
            Ok(p.rows().into_iter().map(|r| [r[0], r[1]]).collect())
        })
        .collect()
}

/// Mean over test curves of the per-curve RMSE.
pub fn mean_test_rmse(model: &TrainedModel, data: &PreparedData) -> Result<f64> {
    if data.test.is_empty() {
        return Err(Error::Empty("test split has no curves".into()));
    }
    let preds = predict_curves(&model.weights, data, &data.test, model.hyperparams.window_stride)?;
    let mut sum = 0.0;
    for (c, p) in data.test.iter().zip(&preds) {
        sum += crate::eval::curve_rmse(p, &data.y[c.start..c.start + c.len])?;
    }
    Ok(sum / data.test.len() as f64)
}

/// Trains once per seed and keeps the model with the lowest mean test RMSE.
pub fn train_best_of_seeds(
    data: &PreparedData,
    kind: ModelKind,
    hp: &Hyperparams,
    seeds: &[u64],
) -> Result<(TrainedModel, Vec<f64>)> {
    let mut best: Option<(TrainedModel, f64)> = None;
    let mut scores = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let model = train_prepared(data, kind, &Hyperparams { seed, ..hp.clone() })?;
        let score = mean_test_rmse(&model, data)?;
        info!("{kind} seed {seed}: mean test RMSE {score:.6}");
        scores.push(score);
        if best.as_ref().is_none_or(|(_, s)| score < *s) {
            best = Some((model, score));
        }
    }
    let (model, _) = best.ok_or_else(|| Error::Empty("no seeds given".into()))?;
    Ok((model, scores))
}

/// Plain-text history: one line per epoch.
pub fn write_history<W: Write>(history: &[EpochRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "epoch train_loss validation_loss rmse_part pbe_part")?;
    for r in history {
        let val = r.validation.map_or("-".to_string(), |v| format!("{:e}", v.total));
        writeln!(
            out,
            "{} {:e} {} {:e} {:e}",
            r.epoch, r.train.total, val, r.train.rmse_part, r.train.pbe_part
        )?;
    }
    Ok(())
}
