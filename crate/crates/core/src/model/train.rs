//! Minibatch training with Adam and validation-based early stopping.
//!
//! Determinism contract: given identical config (including seed), table,
//! and data, two runs produce bit-identical parameters. Batch gradients
//! may be computed in parallel but are reduced in example order.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{backward, forward, loss, Example, ModelConfig, ModelParameters};
use crate::annotation::Attribute;
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::exec;
use crate::features::FeatureKind;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParameters,
    /// Mean train/validation loss per completed epoch.
    pub curve: Vec<EpochStats>,
    pub stopped_early: bool,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    fn update(&mut self, theta: &mut [f64], grad: &[f64], lr: f64) {
        self.step += 1;
        let b1c = 1.0 - ADAM_BETA1.powi(self.step as i32);
        let b2c = 1.0 - ADAM_BETA2.powi(self.step as i32);
        for i in 0..theta.len() {
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * grad[i];
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * grad[i] * grad[i];
            let m_hat = self.m[i] / b1c;
            let v_hat = self.v[i] / b2c;
            theta[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
}

fn mean_loss(
    params: &ModelParameters,
    table: &EmbeddingTable,
    examples: &[&Example],
    attrs: &[Attribute],
) -> Result<f64> {
    if examples.is_empty() {
        return Ok(f64::NAN);
    }
    let losses = exec::map(examples, |e| loss(params, table, e, attrs));
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / examples.len() as f64)
}

/// Train a model from scratch on `train_set`, early-stopping on `val_set`
/// loss, and return the best parameters seen.
///
/// With `epochs == 0` the freshly initialized parameters are returned
/// untouched. A non-finite loss aborts with a diagnostic.
pub fn train(
    config: ModelConfig,
    table: &EmbeddingTable,
    feature_dims: &std::collections::BTreeMap<FeatureKind, usize>,
    train_set: &[Example],
    val_set: &[Example],
) -> Result<TrainOutcome> {
    let attrs = config.decoders.attributes();
    let lr = config.learning_rate;
    let epochs = config.epochs;
    let batch_size = config.batch_size;
    let patience = config.patience;
    let seed = config.seed;

    let mut params = ModelParameters::init(config, feature_dims, table)?;
    if epochs == 0 || train_set.is_empty() {
        return Ok(TrainOutcome {
            params,
            curve: Vec::new(),
            stopped_early: false,
        });
    }

    let mut theta = params.flatten();
    let mut adam = Adam::new(theta.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x7261696e)); // train stream
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut curve = Vec::new();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut bad_epochs = 0usize;
    let mut stopped_early = false;

    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(batch_size) {
            let examples: Vec<&Example> = batch.iter().map(|&i| &train_set[i]).collect();
            let results = exec::map(&examples, |e| -> Result<(f64, Vec<f64>)> {
                let trace = forward(&params, table, e, &attrs)?;
                let grads = backward(&params, e, &trace, &attrs);
                Ok((trace.loss, grads))
            });
            let mut batch_grads = vec![0.0; theta.len()];
            let mut batch_loss = 0.0;
            for r in results {
                let (l, g) = r?;
                batch_loss += l;
                for (acc, v) in batch_grads.iter_mut().zip(&g) {
                    *acc += v;
                }
            }
            let scale = 1.0 / examples.len() as f64;
            for g in &mut batch_grads {
                *g *= scale;
            }
            batch_loss *= scale;
            if !batch_loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "non-finite batch loss at epoch {epoch}"
                )));
            }
            epoch_loss += batch_loss * examples.len() as f64;
            adam.update(&mut theta, &batch_grads, lr);
            params.assign_flat(&theta);
        }
        let train_loss = epoch_loss / train_set.len() as f64;
        let val_refs: Vec<&Example> = val_set.iter().collect();
        let val_loss = if val_refs.is_empty() {
            train_loss
        } else {
            mean_loss(&params, table, &val_refs, &attrs)?
        };
        if !val_loss.is_finite() {
            return Err(Error::Diverged(format!(
                "non-finite validation loss at epoch {epoch}"
            )));
        }
        curve.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
        });

        let improved = best.as_ref().is_none_or(|(b, _)| val_loss < *b);
        if improved {
            best = Some((val_loss, theta.clone()));
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if bad_epochs >= patience {
                stopped_early = true;
                break;
            }
        }
    }

    if let Some((_, best_theta)) = best {
        params.assign_flat(&best_theta);
    }
    Ok(TrainOutcome {
        params,
        curve,
        stopped_early,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::Attribute;
    use crate::embeddings::TokenRef;
    use crate::model::test_support::{example_with, tiny_table};
    use crate::model::DecoderSet;
    use rand::Rng;

    fn separable_examples(n: usize, seed: u64) -> Vec<Example> {
        // class 0: feature near (+1, +1); class 1: near (-1, -1)
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let class = i % 2;
                let sign = if class == 0 { 1.0 } else { -1.0 };
                let f = vec![
                    sign + rng.random_range(-0.2..0.2),
                    sign + rng.random_range(-0.2..0.2),
                ];
                example_with(
                    vec![TokenRef::AuthorMarker],
                    &[(FeatureKind::Frequency, f)],
                    &[(Attribute::Work, class)],
                )
            })
            .collect()
    }

    fn tiny_config() -> ModelConfig {
        let mut c = ModelConfig::new(DecoderSet::Single(Attribute::Work));
        c.embedding_dim = 4;
        c.lstm_hidden = 3;
        c.hidden_size = 4;
        c.feature_kinds = vec![FeatureKind::Frequency];
        c.seed = 123;
        c.epochs = 30;
        c.batch_size = 8;
        c.patience = 5;
        c.learning_rate = 0.01;
        c
    }

    fn dims() -> std::collections::BTreeMap<FeatureKind, usize> {
        [(FeatureKind::Frequency, 2)].into_iter().collect()
    }

    #[test]
    fn learns_linearly_separable_task() {
        let table = tiny_table(4, 1);
        let train_set = separable_examples(120, 7);
        let val_set = separable_examples(40, 8);
        let outcome = train(tiny_config(), &table, &dims(), &train_set, &val_set).unwrap();
        let correct = val_set
            .iter()
            .filter(|e| {
                let pred = crate::model::predict(&outcome.params, &table, e).unwrap();
                pred.argmax(Attribute::Work) == e.labels[&Attribute::Work]
            })
            .count();
        let accuracy = correct as f64 / val_set.len() as f64;
        assert!(accuracy > 0.95, "validation accuracy {accuracy}");
        assert!(!outcome.curve.is_empty());
    }

    #[test]
    fn zero_epochs_returns_initialized_parameters() {
        let table = tiny_table(4, 1);
        let mut config = tiny_config();
        config.epochs = 0;
        let outcome = train(config.clone(), &table, &dims(), &separable_examples(10, 1), &[])
            .unwrap();
        let fresh = ModelParameters::init(config, &dims(), &table).unwrap();
        assert_eq!(outcome.params, fresh);
        assert!(outcome.curve.is_empty());
    }

    #[test]
    fn same_seed_trains_bit_identical_parameters() {
        let table = tiny_table(4, 1);
        let train_set = separable_examples(40, 3);
        let val_set = separable_examples(10, 4);
        let mut config = tiny_config();
        config.epochs = 4;
        let a = train(config.clone(), &table, &dims(), &train_set, &val_set).unwrap();
        let b = train(config, &table, &dims(), &train_set, &val_set).unwrap();
        let ja = serde_json::to_vec(&a.params).unwrap();
        let jb = serde_json::to_vec(&b.params).unwrap();
        assert_eq!(ja, jb);
    }

    #[test]
    fn absurd_learning_rate_reports_divergence() {
        let table = tiny_table(4, 1);
        let mut config = tiny_config();
        config.learning_rate = 1e14;
        config.epochs = 20;
        config.patience = 20;
        let result = train(config, &table, &dims(), &separable_examples(40, 5), &[]);
        match result {
            Err(Error::Diverged(_)) => {}
            Err(other) => panic!("expected divergence, got {other}"),
            Ok(outcome) => {
                // if it survived, every parameter must still be finite
                assert!(outcome.params.all_finite());
            }
        }
    }

    #[test]
    fn early_stopping_restores_best_parameters() {
        let table = tiny_table(4, 1);
        let train_set = separable_examples(60, 9);
        let val_set = separable_examples(20, 10);
        let mut config = tiny_config();
        config.epochs = 25;
        config.patience = 2;
        let outcome = train(config, &table, &dims(), &train_set, &val_set).unwrap();
        if outcome.stopped_early {
            let best = outcome
                .curve
                .iter()
                .map(|e| e.val_loss)
                .fold(f64::INFINITY, f64::min);
            let val_refs: Vec<&Example> = val_set.iter().collect();
            let final_loss = mean_loss(
                &outcome.params,
                &table,
                &val_refs,
                &[Attribute::Work],
            )
            .unwrap();
            assert!((final_loss - best).abs() < 1e-9);
        }
    }
}
