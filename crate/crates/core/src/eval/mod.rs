//! Leave-one-speaker-out evaluation: window sampling, fold construction,
//! accuracy metrics, and the majority baseline.
//!
//! Every fold holds out all context windows of one speaker as the test
//! set; the remaining speakers' windows are split 90/10 into train and
//! validation at the window level. Per-fold state (mention graph, distance
//! matrix, normalizers, embedding vocabulary) is rebuilt from that fold's
//! training messages only.

mod grid;

pub use grid::{
    run_fold, run_grid, write_report_csv, write_report_json, EvalContext, EvalReport,
    ExperimentSpec, FoldModel, FoldRun,
    GridRow, ModelSettings, RowReport, SpeakerOutcome,
};

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotation::{AnnotationSet, Attribute};
use crate::corpus::{build_windows, ContextWindow, Conversation, SpeakerId};
use crate::error::{Error, Result};

/// A corpus with its context windows and annotations, ready to evaluate.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub corpus: Vec<Conversation>,
    /// (conversation index, window) pairs, grouped by conversation in
    /// corpus order.
    pub windows: Vec<(usize, ContextWindow)>,
    pub annotations: AnnotationSet,
    pub window_size: usize,
}

impl Dataset {
    /// Build windows over every conversation. Speakers without a single
    /// window contribute nothing (and are logged); speakers must all be
    /// annotated.
    pub fn build(
        corpus: Vec<Conversation>,
        annotations: AnnotationSet,
        window_size: usize,
        stride: usize,
    ) -> Result<Self> {
        let mut windows = Vec::new();
        for (idx, conv) in corpus.iter().enumerate() {
            annotations.require(&conv.partner_id)?;
            let ws = build_windows(conv, window_size, stride)?;
            if ws.is_empty() {
                log::warn!(
                    "speaker {} has {} messages, fewer than one window; skipped",
                    conv.partner_id,
                    conv.len()
                );
            }
            windows.extend(ws.into_iter().map(|w| (idx, w)));
        }
        Ok(Dataset {
            corpus,
            windows,
            annotations,
            window_size,
        })
    }

    /// Speakers that contribute at least one window, sorted.
    pub fn speakers_with_windows(&self) -> Vec<SpeakerId> {
        let mut ids: Vec<SpeakerId> = self
            .windows
            .iter()
            .map(|(idx, _)| self.corpus[*idx].partner_id.clone())
            .collect();
        ids.sort();
        ids.dedup();
        ids
    }

    /// Restrict the dataset to the given window indices.
    pub fn restrict(&self, keep: &[usize]) -> Dataset {
        Dataset {
            corpus: self.corpus.clone(),
            windows: keep.iter().map(|&i| self.windows[i].clone()).collect(),
            annotations: self.annotations.clone(),
            window_size: self.window_size,
        }
    }
}

/// Pick at most `budget` windows, spread as evenly as possible over
/// speakers: every speaker gets the same base quota, speakers with fewer
/// windows contribute everything they have, and the remainder is handed
/// out one window per speaker until the budget is met. Returns sorted
/// indices into `dataset.windows`. Deterministic given `seed`.
pub fn sample_windows(dataset: &Dataset, budget: usize, seed: u64) -> Vec<usize> {
    let mut by_speaker: BTreeMap<&SpeakerId, Vec<usize>> = BTreeMap::new();
    for (i, (conv_idx, _)) in dataset.windows.iter().enumerate() {
        by_speaker
            .entry(&dataset.corpus[*conv_idx].partner_id)
            .or_default()
            .push(i);
    }
    let total: usize = by_speaker.values().map(Vec::len).sum();
    if budget >= total {
        if budget > total {
            log::warn!("sample budget {budget} exceeds {total} available windows; keeping all");
        }
        return (0..total).collect();
    }
    let speakers = by_speaker.len();
    let base = budget / speakers;

    // per-speaker shuffle from a speaker-derived stream, so the selection
    // does not depend on which other speakers are present
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut quotas: BTreeMap<&SpeakerId, usize> = BTreeMap::new();
    for (speaker, indices) in by_speaker.iter_mut() {
        indices.shuffle(&mut rng);
        quotas.insert(speaker, base.min(indices.len()));
    }
    let mut assigned: usize = quotas.values().sum();
    while assigned < budget {
        let mut grew = false;
        for (speaker, indices) in &by_speaker {
            if assigned == budget {
                break;
            }
            let quota = quotas.get_mut(speaker).unwrap();
            if *quota < indices.len() {
                *quota += 1;
                assigned += 1;
                grew = true;
            }
        }
        if !grew {
            break;
        }
    }
    let mut selected: Vec<usize> = Vec::with_capacity(assigned);
    for (speaker, indices) in &by_speaker {
        selected.extend(&indices[..quotas[speaker]]);
    }
    selected.sort_unstable();
    selected
}

/// One leave-one-speaker-out fold. All index vectors point into
/// `dataset.windows`.
#[derive(Debug, Clone, PartialEq)]
pub struct Fold {
    pub held_out: SpeakerId,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// One fold per speaker with windows. The remaining windows are shuffled
/// (stream derived from `seed` and the held-out speaker) and split 90/10
/// into train and validation.
pub fn loso_folds(dataset: &Dataset, seed: u64) -> Result<Vec<Fold>> {
    let speakers = dataset.speakers_with_windows();
    if speakers.len() < 2 {
        return Err(Error::invalid(format!(
            "leave-one-speaker-out needs at least 2 speakers with windows, got {}",
            speakers.len()
        )));
    }
    let mut folds = Vec::with_capacity(speakers.len());
    for held_out in speakers {
        let mut test = Vec::new();
        let mut rest = Vec::new();
        for (i, (conv_idx, _)) in dataset.windows.iter().enumerate() {
            if dataset.corpus[*conv_idx].partner_id == held_out {
                test.push(i);
            } else {
                rest.push(i);
            }
        }
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed ^ fxhash(held_out.as_str().as_bytes()));
        rest.shuffle(&mut rng);
        let val_len = (rest.len() / 10).max(1).min(rest.len().saturating_sub(1));
        let val = rest.split_off(rest.len() - val_len);
        folds.push(Fold {
            held_out,
            train: rest,
            val,
            test,
        });
    }
    Ok(folds)
}

/// A pseudo-fold over the whole dataset: nothing held out, all windows
/// shuffled and split 90/10 into train and validation. Used when training
/// one final model rather than cross-validating.
pub fn train_val_fold(dataset: &Dataset, seed: u64) -> Fold {
    let mut indices: Vec<usize> = (0..dataset.windows.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let val_len = (indices.len() / 10)
        .max(1)
        .min(indices.len().saturating_sub(1));
    let val = indices.split_off(indices.len() - val_len);
    Fold {
        held_out: SpeakerId::new("\u{0}none"),
        train: indices,
        val,
        test: Vec::new(),
    }
}

fn fxhash(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}

/// Test-set outcome of one fold for one attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerPredictions {
    pub speaker: SpeakerId,
    pub gold: usize,
    /// Predicted value index per test window.
    pub predicted: Vec<usize>,
    /// The attribute's majority value in this fold's training windows,
    /// used to break voting ties.
    pub train_majority: usize,
}

impl SpeakerPredictions {
    pub fn correct_windows(&self) -> usize {
        self.predicted.iter().filter(|&&p| p == self.gold).count()
    }

    /// Majority-voted value; ties break toward the training majority when
    /// it is among the tied values, otherwise toward the smallest value
    /// index.
    pub fn voted(&self) -> usize {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for &p in &self.predicted {
            *counts.entry(p).or_insert(0) += 1;
        }
        let best = counts.values().copied().max().unwrap_or(0);
        let tied: Vec<usize> = counts
            .iter()
            .filter(|(_, &c)| c == best)
            .map(|(&v, _)| v)
            .collect();
        if tied.contains(&self.train_majority) {
            self.train_majority
        } else {
            tied.into_iter().next().unwrap_or(self.train_majority)
        }
    }
}

/// Context-window accuracy macro-averaged over speakers, as a percentage:
/// the mean over speakers of their per-window accuracy.
pub fn context_accuracy(folds: &[SpeakerPredictions]) -> f64 {
    let with_preds: Vec<&SpeakerPredictions> =
        folds.iter().filter(|f| !f.predicted.is_empty()).collect();
    if with_preds.is_empty() {
        return 0.0;
    }
    let sum: f64 = with_preds
        .iter()
        .map(|f| f.correct_windows() as f64 / f.predicted.len() as f64)
        .sum();
    100.0 * sum / with_preds.len() as f64
}

/// Fraction of speakers whose majority-voted prediction matches gold, as
/// a percentage.
pub fn speaker_accuracy(folds: &[SpeakerPredictions]) -> f64 {
    if folds.is_empty() {
        return 0.0;
    }
    let correct = folds.iter().filter(|f| f.voted() == f.gold).count();
    100.0 * correct as f64 / folds.len() as f64
}

/// Accuracy of always predicting each attribute's most frequent value,
/// over the annotated speakers in `speakers`.
pub fn majority_baseline(
    annotations: &AnnotationSet,
    speakers: &[SpeakerId],
) -> Result<BTreeMap<Attribute, f64>> {
    if speakers.is_empty() {
        return Err(Error::invalid("majority baseline needs at least one speaker"));
    }
    let mut out = BTreeMap::new();
    for attr in crate::annotation::ATTRIBUTES {
        let mut counts = vec![0usize; attr.cardinality()];
        for speaker in speakers {
            let profile = annotations.require(speaker)?;
            counts[profile.value_index(attr)] += 1;
        }
        let majority = counts.iter().copied().max().unwrap_or(0);
        out.insert(attr, 100.0 * majority as f64 / speakers.len() as f64);
    }
    Ok(out)
}

/// The majority value index per attribute over a set of window labels.
pub fn majority_value(labels: &[usize], cardinality: usize) -> usize {
    let mut counts = vec![0usize; cardinality];
    for &l in labels {
        if l < cardinality {
            counts[l] += 1;
        }
    }
    counts
        .iter()
        .enumerate()
        .max_by_key(|(i, &c)| (c, std::cmp::Reverse(*i)))
        .map(|(i, _)| i)
        .unwrap_or(0)
}
