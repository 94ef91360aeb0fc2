//! The experiment grid: ablation rows, the per-fold train/predict engine,
//! and report assembly.
//!
//! Grid rows mirror the ablation table: embeddings only, embeddings plus
//! one feature family at a time, all families, the two joint-decoder
//! variants, the two attribute-feature variants, and the majority-class
//! baseline. Joint rows train one model whose seven decoders share the
//! encoders; attribute features are never combined with joint decoding
//! (the attribute being predicted would appear among the inputs).

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    context_accuracy, loso_folds, majority_baseline, majority_value, sample_windows, speaker_accuracy,
    Dataset, Fold, SpeakerPredictions,
};
use crate::annotation::{Attribute, ATTRIBUTES};
use crate::corpus::Conversation;
use crate::embeddings::{encode_window_refs, EmbeddingTable, TokenRef};
use crate::error::{Error, Result};
use crate::exec;
use crate::features::{FeatureExtractor, FeatureKind, NormalizerSet};
use crate::graph::{build_mention_graph, edge_weights, shortest_paths, AliasTable, WeightMode};
use crate::lexicon::CategoryLexicon;
use crate::model::{predict, train, DecoderSet, Example, ModelConfig};

/// The five auxiliary families usable in every mode (attributes excluded).
const CORE_KINDS: [FeatureKind; 5] = [
    FeatureKind::Liwc,
    FeatureKind::Time,
    FeatureKind::Frequency,
    FeatureKind::Style,
    FeatureKind::Graph,
];

/// One row of the experiment grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridRow {
    Majority,
    Emb,
    EmbPlus(FeatureKind),
    AllFeatures,
    JointEmb,
    JointAll,
    EmbAttributes,
    AllAttributes,
}

impl GridRow {
    /// All rows, in report order.
    pub fn full_grid() -> Vec<GridRow> {
        let mut rows = vec![GridRow::Majority, GridRow::Emb];
        rows.extend(CORE_KINDS.iter().map(|k| GridRow::EmbPlus(*k)));
        rows.extend([
            GridRow::AllFeatures,
            GridRow::JointEmb,
            GridRow::JointAll,
            GridRow::EmbAttributes,
            GridRow::AllAttributes,
        ]);
        rows
    }

    pub fn label(&self) -> String {
        match self {
            GridRow::Majority => "Majority Class".to_string(),
            GridRow::Emb => "Emb".to_string(),
            GridRow::EmbPlus(k) => format!("Emb + {}", kind_label(*k)),
            GridRow::AllFeatures => "All Features".to_string(),
            GridRow::JointEmb => "Joint + Emb".to_string(),
            GridRow::JointAll => "Joint + All".to_string(),
            GridRow::EmbAttributes => "Emb + Attributes".to_string(),
            GridRow::AllAttributes => "All + Attributes".to_string(),
        }
    }

    pub fn parse(s: &str) -> Option<GridRow> {
        let lowered = s.trim().to_lowercase();
        Some(match lowered.as_str() {
            "majority" => GridRow::Majority,
            "emb" => GridRow::Emb,
            "all" => GridRow::AllFeatures,
            "joint+emb" => GridRow::JointEmb,
            "joint+all" => GridRow::JointAll,
            "emb+attributes" => GridRow::EmbAttributes,
            "all+attributes" => GridRow::AllAttributes,
            other => {
                let kind = other.strip_prefix("emb+")?;
                GridRow::EmbPlus(FeatureKind::parse(kind)?)
            }
        })
    }

    fn key(&self) -> String {
        match self {
            GridRow::Majority => "majority".into(),
            GridRow::Emb => "emb".into(),
            GridRow::EmbPlus(k) => format!("emb+{k}"),
            GridRow::AllFeatures => "all".into(),
            GridRow::JointEmb => "joint+emb".into(),
            GridRow::JointAll => "joint+all".into(),
            GridRow::EmbAttributes => "emb+attributes".into(),
            GridRow::AllAttributes => "all+attributes".into(),
        }
    }

    /// Enabled feature families for this row.
    fn kinds(&self) -> Vec<FeatureKind> {
        match self {
            GridRow::Majority | GridRow::Emb | GridRow::JointEmb => Vec::new(),
            GridRow::EmbPlus(k) => vec![*k],
            GridRow::AllFeatures | GridRow::JointAll => CORE_KINDS.to_vec(),
            GridRow::EmbAttributes => vec![FeatureKind::Attributes],
            GridRow::AllAttributes => {
                let mut kinds = CORE_KINDS.to_vec();
                kinds.push(FeatureKind::Attributes);
                kinds
            }
        }
    }

    fn joint(&self) -> bool {
        matches!(self, GridRow::JointEmb | GridRow::JointAll)
    }
}

impl fmt::Display for GridRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

impl Serialize for GridRow {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.key())
    }
}

impl<'de> Deserialize<'de> for GridRow {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        GridRow::parse(&s).ok_or_else(|| serde::de::Error::custom(format!("unknown grid row {s:?}")))
    }
}

fn kind_label(kind: FeatureKind) -> &'static str {
    match kind {
        FeatureKind::Liwc => "LIWC",
        FeatureKind::Time => "Time",
        FeatureKind::Frequency => "Frequency",
        FeatureKind::Style => "Style",
        FeatureKind::Graph => "Graph",
        FeatureKind::Attributes => "Attributes",
    }
}

/// Model hyperparameters shared by every row of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSettings {
    pub lstm_hidden: usize,
    pub hidden_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub sequence_cap: usize,
    pub train_markers: bool,
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings {
            lstm_hidden: 64,
            hidden_size: 64,
            learning_rate: 1e-3,
            epochs: 10,
            batch_size: 32,
            patience: 2,
            sequence_cap: crate::embeddings::DEFAULT_SEQUENCE_CAP,
            train_markers: false,
        }
    }
}

/// A full experiment: which rows, which targets, sampling, and model
/// hyperparameters. Serialized as a TOML document for the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub rows: Vec<GridRow>,
    pub targets: Vec<Attribute>,
    pub seed: u64,
    /// Window sample budget; omit to use every window.
    pub budget: Option<usize>,
    #[serde(default = "WeightMode::default")]
    pub weight_mode: WeightMode,
    pub settings: ModelSettings,
}

impl ExperimentSpec {
    /// Every grid row over all seven attributes.
    pub fn full(seed: u64) -> Self {
        ExperimentSpec {
            rows: GridRow::full_grid(),
            targets: ATTRIBUTES.to_vec(),
            seed,
            budget: None,
            weight_mode: WeightMode::default(),
            settings: ModelSettings::default(),
        }
    }

    /// A small smoke-test grid: baseline, embeddings only, all features.
    pub fn quick(seed: u64) -> Self {
        let mut spec = Self::full(seed);
        spec.rows = vec![GridRow::Majority, GridRow::Emb, GridRow::AllFeatures];
        spec.settings = ModelSettings {
            lstm_hidden: 16,
            hidden_size: 16,
            epochs: 3,
            patience: 2,
            ..ModelSettings::default()
        };
        spec
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::invalid(format!("experiment spec: {e}")))
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::invalid(format!("experiment spec encode: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.is_empty() || self.targets.is_empty() {
            return Err(Error::invalid("experiment spec needs rows and targets"));
        }
        Ok(())
    }
}

/// Immutable inputs shared by every row of a run.
pub struct EvalContext<'a> {
    pub dataset: &'a Dataset,
    pub lexicon: &'a CategoryLexicon,
    pub table: &'a EmbeddingTable,
    pub aliases: &'a AliasTable,
}

/// Per-speaker outcome of one (row, attribute) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerOutcome {
    pub speaker: crate::corpus::SpeakerId,
    pub gold: String,
    pub voted: String,
    pub windows: usize,
    pub correct_windows: usize,
}

/// One (row, attribute) cell of the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowReport {
    pub row: String,
    pub attribute: Attribute,
    pub context_accuracy: f64,
    pub speaker_accuracy: f64,
    pub per_speaker: Vec<SpeakerOutcome>,
    /// Hash of everything that determines this cell's numbers.
    pub fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    pub rows: Vec<RowReport>,
}

fn fingerprint(spec: &ExperimentSpec, row: GridRow, shared_across_targets: bool, target: Option<Attribute>) -> String {
    let payload = serde_json::json!({
        "row": row.key(),
        "target": target.map(|a| a.name()),
        "shared": shared_across_targets,
        "seed": spec.seed,
        "budget": spec.budget,
        "weight_mode": spec.weight_mode,
        "settings": spec.settings,
    });
    let digest = Sha256::digest(payload.to_string().as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn fxhash(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}

/// Everything a trained fold needs to make reproducible predictions.
#[derive(Debug, Clone)]
pub struct FoldModel {
    pub params: crate::model::ModelParameters,
    pub normalizers: NormalizerSet,
    /// Node ordering of the graph-feature distance matrix (empty when
    /// graph features are disabled).
    pub node_order: Vec<crate::corpus::SpeakerId>,
    pub feature_dims: BTreeMap<FeatureKind, usize>,
    pub curve: Vec<crate::model::EpochStats>,
}

/// Outcome of training and testing one fold.
#[derive(Debug, Clone)]
pub struct FoldRun {
    pub model: FoldModel,
    pub predictions: BTreeMap<Attribute, SpeakerPredictions>,
}

/// Train one fold and predict its test windows. Used fold by fold inside
/// [`run_grid`] and directly by the CLI's `train` subcommand.
pub fn run_fold(
    ctx: &EvalContext,
    spec: &ExperimentSpec,
    dataset: &Dataset,
    fold: &Fold,
    kinds: &[FeatureKind],
    decoders: DecoderSet,
) -> Result<FoldRun> {
    let attrs = decoders.attributes();
    let profiles = &dataset.annotations.profiles;

    // per-fold state from training messages only
    let training_convs: Vec<&Conversation> = dataset
        .corpus
        .iter()
        .filter(|c| c.partner_id != fold.held_out)
        .collect();
    let distances = if kinds.contains(&FeatureKind::Graph) {
        let graph = build_mention_graph_over(&training_convs, ctx.aliases);
        Some(shortest_paths(&edge_weights(&graph, spec.weight_mode))?)
    } else {
        None
    };
    // embedding vocabulary restricted to training-fold tokens
    let mut allowed: HashSet<usize> = HashSet::new();
    for conv in &training_convs {
        for m in &conv.messages {
            for token in m.tokens() {
                if let Some(i) = ctx.table.lookup(&token) {
                    allowed.insert(i);
                }
            }
        }
    }

    let target = match decoders {
        DecoderSet::Single(attr) => Some(attr),
        DecoderSet::Joint => None,
    };
    let extractor = FeatureExtractor {
        lexicon: ctx.lexicon,
        distances: distances.as_ref(),
        profiles: Some(profiles),
        target,
        kinds: kinds.to_vec(),
    };

    let build_raw = |indices: &[usize]| -> Result<Vec<(usize, Vec<crate::features::FeatureVector>)>> {
        let out = exec::map(indices, |&i| {
            let (conv_idx, window) = &dataset.windows[i];
            extractor
                .extract(&dataset.corpus[*conv_idx], window)
                .map(|v| (i, v))
        });
        out.into_iter().collect()
    };
    let train_raw = build_raw(&fold.train)?;
    let val_raw = build_raw(&fold.val)?;
    let test_raw = build_raw(&fold.test)?;

    let normalizers = if kinds.is_empty() {
        NormalizerSet::default()
    } else {
        NormalizerSet::fit(
            &train_raw
                .iter()
                .map(|(_, v)| v.clone())
                .collect::<Vec<_>>(),
        )?
    };

    let build_examples = |raw: &[(usize, Vec<crate::features::FeatureVector>)]| -> Result<Vec<Example>> {
        raw.iter()
            .map(|(i, vectors)| {
                let (conv_idx, window) = &dataset.windows[*i];
                let refs: Vec<TokenRef> =
                    encode_window_refs(window, ctx.table, spec.settings.sequence_cap)?
                        .into_iter()
                        .map(|r| match r {
                            TokenRef::Word(w) if !allowed.contains(&w) => TokenRef::Unknown,
                            other => other,
                        })
                        .collect();
                let normalized = normalizers.apply(vectors)?;
                let profile = profiles[&dataset.corpus[*conv_idx].partner_id];
                let labels = attrs
                    .iter()
                    .map(|a| (*a, profile.value_index(*a)))
                    .collect();
                Ok(Example {
                    refs,
                    features: normalized.into_iter().map(|fv| (fv.kind, fv.values)).collect(),
                    labels,
                })
            })
            .collect()
    };
    let train_examples = build_examples(&train_raw)?;
    let val_examples = build_examples(&val_raw)?;
    let test_examples = build_examples(&test_raw)?;

    let feature_dims: BTreeMap<FeatureKind, usize> = train_examples
        .first()
        .map(|e| e.features.iter().map(|(k, v)| (*k, v.len())).collect())
        .unwrap_or_default();

    let mut config = ModelConfig::new(decoders.clone());
    config.embedding_dim = ctx.table.dim();
    config.lstm_hidden = spec.settings.lstm_hidden;
    config.hidden_size = spec.settings.hidden_size;
    config.feature_kinds = kinds.to_vec();
    config.learning_rate = spec.settings.learning_rate;
    config.epochs = spec.settings.epochs;
    config.batch_size = spec.settings.batch_size;
    config.patience = spec.settings.patience;
    config.sequence_cap = spec.settings.sequence_cap;
    config.train_markers = spec.settings.train_markers;
    config.seed = spec.seed ^ fxhash(fold.held_out.as_str().as_bytes());

    let outcome = train(config, ctx.table, &feature_dims, &train_examples, &val_examples)?;

    let held_profile = profiles[&fold.held_out];
    let predictions = exec::map(&test_examples, |e| predict(&outcome.params, ctx.table, e));
    let mut per_attr: BTreeMap<Attribute, SpeakerPredictions> = BTreeMap::new();
    for &attr in &attrs {
        let train_labels: Vec<usize> = train_examples
            .iter()
            .map(|e| e.labels[&attr])
            .collect();
        per_attr.insert(
            attr,
            SpeakerPredictions {
                speaker: fold.held_out.clone(),
                gold: held_profile.value_index(attr),
                predicted: Vec::with_capacity(test_examples.len()),
                train_majority: majority_value(&train_labels, attr.cardinality()),
            },
        );
    }
    for prediction in predictions {
        let prediction = prediction?;
        for &attr in &attrs {
            per_attr
                .get_mut(&attr)
                .unwrap()
                .predicted
                .push(prediction.argmax(attr));
        }
    }
    Ok(FoldRun {
        model: FoldModel {
            params: outcome.params,
            normalizers,
            node_order: distances.map(|d| d.nodes).unwrap_or_default(),
            feature_dims,
            curve: outcome.curve,
        },
        predictions: per_attr,
    })
}

fn build_mention_graph_over(convs: &[&Conversation], aliases: &AliasTable) -> crate::graph::MentionGraph {
    let owned: Vec<Conversation> = convs.iter().map(|c| (*c).clone()).collect();
    build_mention_graph(&owned, aliases)
}

fn outcomes_from(
    folds: &[SpeakerPredictions],
    attr: Attribute,
) -> Vec<SpeakerOutcome> {
    folds
        .iter()
        .map(|f| SpeakerOutcome {
            speaker: f.speaker.clone(),
            gold: attr.value_names()[f.gold].to_string(),
            voted: attr.value_names()[f.voted()].to_string(),
            windows: f.predicted.len(),
            correct_windows: f.correct_windows(),
        })
        .collect()
}

/// Evaluate one trained-model row over the requested targets.
fn evaluate_model_row(
    ctx: &EvalContext,
    spec: &ExperimentSpec,
    dataset: &Dataset,
    folds: &[Fold],
    row: GridRow,
) -> Result<Vec<RowReport>> {
    let kinds = row.kinds();
    let mut reports = Vec::new();
    if row.joint() {
        // one model, all seven decoders, reported per requested target
        let fold_results: Vec<Result<FoldRun>> = exec::map(folds, |fold| {
            run_fold(ctx, spec, dataset, fold, &kinds, DecoderSet::Joint)
        });
        let mut per_attr: BTreeMap<Attribute, Vec<SpeakerPredictions>> = BTreeMap::new();
        for result in fold_results {
            for (attr, preds) in result?.predictions {
                per_attr.entry(attr).or_default().push(preds);
            }
        }
        for &target in &spec.targets {
            let preds = per_attr.remove(&target).unwrap_or_default();
            reports.push(RowReport {
                row: row.label(),
                attribute: target,
                context_accuracy: context_accuracy(&preds),
                speaker_accuracy: speaker_accuracy(&preds),
                per_speaker: outcomes_from(&preds, target),
                fingerprint: fingerprint(spec, row, true, None),
            });
        }
    } else {
        for &target in &spec.targets {
            let fold_results: Vec<Result<FoldRun>> = exec::map(folds, |fold| {
                run_fold(ctx, spec, dataset, fold, &kinds, DecoderSet::Single(target))
            });
            let mut preds = Vec::new();
            for result in fold_results {
                preds.extend(result?.predictions.remove(&target));
            }
            reports.push(RowReport {
                row: row.label(),
                attribute: target,
                context_accuracy: context_accuracy(&preds),
                speaker_accuracy: speaker_accuracy(&preds),
                per_speaker: outcomes_from(&preds, target),
                fingerprint: fingerprint(spec, row, false, Some(target)),
            });
        }
    }
    Ok(reports)
}

fn majority_row(
    spec: &ExperimentSpec,
    dataset: &Dataset,
) -> Result<Vec<RowReport>> {
    let speakers = dataset.speakers_with_windows();
    let baseline = majority_baseline(&dataset.annotations, &speakers)?;
    let mut reports = Vec::new();
    for &target in &spec.targets {
        let mut counts = vec![0usize; target.cardinality()];
        for s in &speakers {
            counts[dataset.annotations.profiles[s].value_index(target)] += 1;
        }
        let majority_idx = counts
            .iter()
            .enumerate()
            .max_by_key(|(i, &c)| (c, std::cmp::Reverse(*i)))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let per_speaker: Vec<SpeakerOutcome> = speakers
            .iter()
            .map(|s| {
                let gold = dataset.annotations.profiles[s].value_index(target);
                let windows = dataset
                    .windows
                    .iter()
                    .filter(|(c, _)| dataset.corpus[*c].partner_id == *s)
                    .count();
                SpeakerOutcome {
                    speaker: s.clone(),
                    gold: target.value_names()[gold].to_string(),
                    voted: target.value_names()[majority_idx].to_string(),
                    windows,
                    correct_windows: if gold == majority_idx { windows } else { 0 },
                }
            })
            .collect();
        reports.push(RowReport {
            row: GridRow::Majority.label(),
            attribute: target,
            context_accuracy: baseline[&target],
            speaker_accuracy: baseline[&target],
            per_speaker,
            fingerprint: fingerprint(spec, GridRow::Majority, false, Some(target)),
        });
    }
    Ok(reports)
}

/// Run the whole experiment grid. Windows are sampled once, globally, when
/// a budget is set; folds are rebuilt per run but derive from the same
/// seed, so the report is reproducible end to end.
pub fn run_grid(ctx: &EvalContext, spec: &ExperimentSpec) -> Result<EvalReport> {
    spec.validate()?;
    let sampled;
    let dataset: &Dataset = match spec.budget {
        Some(budget) => {
            let keep = sample_windows(ctx.dataset, budget, spec.seed);
            sampled = ctx.dataset.restrict(&keep);
            &sampled
        }
        None => ctx.dataset,
    };
    let folds = loso_folds(dataset, spec.seed)?;

    let mut rows = Vec::new();
    for &row in &spec.rows {
        log::info!("grid row {}", row.label());
        match row {
            GridRow::Majority => rows.extend(majority_row(spec, dataset)?),
            _ => rows.extend(evaluate_model_row(ctx, spec, dataset, &folds, row)?),
        }
    }
    Ok(EvalReport {
        seed: spec.seed,
        rows,
    })
}

/// CSV report: one line per (row, attribute) cell.
pub fn write_report_csv<W: Write>(report: &EvalReport, mut w: W) -> Result<()> {
    writeln!(w, "row,attribute,context_accuracy,speaker_accuracy,fingerprint")?;
    for r in &report.rows {
        writeln!(
            w,
            "{},{},{:.4},{:.4},{}",
            r.row, r.attribute, r.context_accuracy, r.speaker_accuracy, r.fingerprint
        )?;
    }
    Ok(())
}

/// Full JSON report including per-speaker outcomes.
pub fn write_report_json<W: Write>(report: &EvalReport, mut w: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, report)
        .map_err(|e| Error::invalid(format!("report encode: {e}")))?;
    writeln!(w)?;
    Ok(())
}
