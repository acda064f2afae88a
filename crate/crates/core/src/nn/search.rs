//! Uniform random hyperparameter search over the default tuning intervals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::train::Hyperparams;
use super::ModelKind;
use crate::error::{Error, Result};

/// Closed intervals; learning rate and weight decay are sampled log-uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub batch_size: [usize; 2],
    pub learning_rate: [f64; 2],
    pub hidden_size: [usize; 2],
    pub sequence_length: [usize; 2],
    pub weight_decay: [f64; 2],
    pub lambda: [f64; 2],
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            batch_size: [128, 300],
            learning_rate: [1e-4, 1e-2],
            hidden_size: [100, 500],
            sequence_length: [10, 25],
            weight_decay: [1e-5, 1e-2],
            lambda: [0.0, 1.0],
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        let int_ok = |[lo, hi]: [usize; 2]| 0 < lo && lo <= hi;
        let log_ok = |[lo, hi]: [f64; 2]| 0.0 < lo && lo <= hi && hi.is_finite();
        let [l0, l1] = self.lambda;
        if !(int_ok(self.batch_size) && int_ok(self.hidden_size) && int_ok(self.sequence_length))
            || !(log_ok(self.learning_rate) && log_ok(self.weight_decay))
            || !(0.0 <= l0 && l0 <= l1 && l1.is_finite())
        {
            return Err(Error::Config(format!("invalid search space {self:?}")));
        }
        Ok(())
    }

    /// One point. Fields the kind does not use keep their `base` value:
    /// `k` for the FCNN and `λ` for the plain BiLSTM.
    pub fn sample<R: Rng>(&self, kind: ModelKind, base: &Hyperparams, rng: &mut R) -> Hyperparams {
        let log_uniform = |rng: &mut R, [lo, hi]: [f64; 2]| (rng.random_range(lo.ln()..=hi.ln())).exp().clamp(lo, hi);
        let mut hp = base.clone();
        hp.batch_size = rng.random_range(self.batch_size[0]..=self.batch_size[1]);
        hp.learning_rate = log_uniform(rng, self.learning_rate);
        hp.hidden_size = rng.random_range(self.hidden_size[0]..=self.hidden_size[1]);
        let k = rng.random_range(self.sequence_length[0]..=self.sequence_length[1]);
        hp.weight_decay = log_uniform(rng, self.weight_decay);
        let lambda = rng.random_range(self.lambda[0]..=self.lambda[1]);
        if kind.is_recurrent() {
            hp.sequence_length = k;
        }
        if kind != ModelKind::Bilstm {
            hp.lambda = lambda;
        }
        hp
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub hyperparams: Hyperparams,
    pub objective: f64,
}

/// Evaluates `trials` sampled points and returns the best one with the full log.
/// Trials whose objective is not finite are logged but never selected.
pub fn random_search<F>(
    space: &SearchSpace,
    kind: ModelKind,
    base: &Hyperparams,
    trials: usize,
    seed: u64,
    mut objective: F,
) -> Result<(Trial, Vec<Trial>)>
where
    F: FnMut(&Hyperparams) -> Result<f64>,
{
    space.validate()?;
    if trials == 0 {
        return Err(Error::Config("random search needs at least one trial".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut log = Vec::with_capacity(trials);
    for index in 0..trials {
        let hp = space.sample(kind, base, &mut rng);
        let value = objective(&hp)?;
        log::info!("search trial {index}: objective {value:.6e}");
        log.push(Trial {
            index,
            hyperparams: hp,
            objective: value,
        });
    }
    let best = log
        .iter()
        .filter(|t| t.objective.is_finite())
        .min_by(|a, b| a.objective.total_cmp(&b.objective))
        .cloned()
        .ok_or_else(|| Error::Domain("no trial produced a finite objective".into()))?;
    Ok((best, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn best_is_argmin_and_sequence_is_seeded() {
        let space = SearchSpace::default();
        let base = ModelKind::BilstmPinn.default_hyperparams();
        let obj = |hp: &Hyperparams| Ok((hp.learning_rate.ln() + 6.0).powi(2) + hp.lambda);
        let (best, log) = random_search(&space, ModelKind::BilstmPinn, &base, 20, 9, obj).unwrap();
        assert_eq!(log.len(), 20);
        assert!(log.iter().all(|t| best.objective <= t.objective));
        let (_, again) = random_search(&space, ModelKind::BilstmPinn, &base, 20, 9, obj).unwrap();
        assert_eq!(log, again);
    }

    #[test]
    fn plain_bilstm_keeps_zero_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let base = ModelKind::Bilstm.default_hyperparams();
        for _ in 0..50 {
            assert_eq!(SearchSpace::default().sample(ModelKind::Bilstm, &base, &mut rng).lambda, 0.0);
        }
    }

    #[test]
    fn zero_trials_is_an_error() {
        let base = ModelKind::Fcnn.default_hyperparams();
        assert!(random_search(&SearchSpace::default(), ModelKind::Fcnn, &base, 0, 1, |_| Ok(0.0)).is_err());
    }
}
