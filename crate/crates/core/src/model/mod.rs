//! The classifier: a BiLSTM context encoder over marker-prefixed token
//! sequences, one feed-forward encoder per auxiliary feature family, and
//! one decoder per target attribute.
//!
//! The context encoding is the concatenation of the forward LSTM's final
//! state and the backward LSTM's final state (the state after reading the
//! first token). Each enabled feature family is encoded by a two-layer
//! tanh network of hidden width `s` into an `s`-wide vector; the context
//! encoding and all feature encodings are concatenated (context first,
//! then families in canonical kind order) and fed to each decoder, which
//! is a tanh hidden layer of width `s` followed by a softmax over the
//! attribute's k values.
//!
//! Training minimizes cross-entropy: the one decoder's loss in single
//! mode, the sum over all seven decoders in joint mode. All gradients are
//! computed analytically in this module and are finite-difference checked
//! in the test suites.

pub mod lstm;

mod checkpoint;
mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use train::{train, EpochStats, TrainOutcome};

use std::collections::BTreeMap;

use ndarray::{s, Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotation::{Attribute, ATTRIBUTES};
use crate::embeddings::{EmbeddingTable, TokenRef};
use crate::error::{Error, Result};
use crate::features::FeatureKind;
use lstm::{lstm_backward, lstm_forward, LstmParams};

/// Which attribute decoders the model carries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderSet {
    /// One decoder for a single target attribute.
    Single(Attribute),
    /// All seven decoders, trained jointly on the summed loss.
    Joint,
}

impl DecoderSet {
    pub fn attributes(&self) -> Vec<Attribute> {
        match self {
            DecoderSet::Single(attr) => vec![*attr],
            DecoderSet::Joint => ATTRIBUTES.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Word-embedding dimension d.
    pub embedding_dim: usize,
    /// LSTM hidden size per direction H.
    pub lstm_hidden: usize,
    /// Hidden width s of feature encoders and decoders.
    pub hidden_size: usize,
    /// Enabled auxiliary feature families (may be empty).
    pub feature_kinds: Vec<FeatureKind>,
    pub decoders: DecoderSet,
    pub seed: u64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Early-stopping patience in epochs without validation improvement.
    pub patience: usize,
    /// Train the utterance marker vectors along with the model.
    pub train_markers: bool,
    pub sequence_cap: usize,
}

impl ModelConfig {
    pub fn new(decoders: DecoderSet) -> Self {
        ModelConfig {
            embedding_dim: 300,
            lstm_hidden: 64,
            hidden_size: 64,
            feature_kinds: Vec::new(),
            decoders,
            seed: 0,
            learning_rate: 1e-3,
            epochs: 10,
            batch_size: 32,
            patience: 2,
            train_markers: false,
            sequence_cap: crate::embeddings::DEFAULT_SEQUENCE_CAP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lstm_hidden == 0 || self.hidden_size == 0 {
            return Err(Error::invalid("hidden sizes must be positive"));
        }
        if self.decoders.attributes().is_empty() {
            return Err(Error::invalid("model needs at least one decoder"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        Ok(())
    }
}

/// Two affine layers. The hidden layer is always tanh; whether the output
/// is tanh'd depends on the role (encoder yes, decoder no: its output goes
/// through softmax).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedForward {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

fn xavier(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    use rand::Rng;
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-limit..limit))
}

impl FeedForward {
    fn init(in_dim: usize, hidden: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        FeedForward {
            w1: xavier(hidden, in_dim, rng),
            b1: Array1::zeros(hidden),
            w2: xavier(out_dim, hidden, rng),
            b2: Array1::zeros(out_dim),
        }
    }

    fn zeros_like(&self) -> Self {
        FeedForward {
            w1: Array2::zeros(self.w1.raw_dim()),
            b1: Array1::zeros(self.b1.raw_dim()),
            w2: Array2::zeros(self.w2.raw_dim()),
            b2: Array1::zeros(self.b2.raw_dim()),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w1.ncols()
    }
}

/// All weights of one model instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParameters {
    pub config: ModelConfig,
    pub forward_lstm: LstmParams,
    pub backward_lstm: LstmParams,
    /// One encoder per enabled feature kind.
    pub encoders: BTreeMap<FeatureKind, FeedForward>,
    /// One decoder per attribute in the decoder set.
    pub decoders: BTreeMap<Attribute, FeedForward>,
    pub author_marker: Array1<f64>,
    pub other_marker: Array1<f64>,
}

impl ModelParameters {
    /// Seeded initialization. `feature_dims` gives the input width per
    /// enabled kind; marker vectors are copied from the table.
    pub fn init(
        config: ModelConfig,
        feature_dims: &BTreeMap<FeatureKind, usize>,
        table: &EmbeddingTable,
    ) -> Result<Self> {
        config.validate()?;
        if table.dim() != config.embedding_dim {
            return Err(Error::invalid(format!(
                "embedding table dimension {} does not match config {}",
                table.dim(),
                config.embedding_dim
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let forward_lstm = LstmParams::init(config.embedding_dim, config.lstm_hidden, &mut rng);
        let backward_lstm = LstmParams::init(config.embedding_dim, config.lstm_hidden, &mut rng);
        let mut encoders = BTreeMap::new();
        for kind in &config.feature_kinds {
            let dim = *feature_dims.get(kind).ok_or_else(|| {
                Error::invalid(format!("no feature dimension known for kind {kind}"))
            })?;
            encoders.insert(
                *kind,
                FeedForward::init(dim, config.hidden_size, config.hidden_size, &mut rng),
            );
        }
        let rho_dim = 2 * config.lstm_hidden + config.hidden_size * encoders.len();
        let mut decoders = BTreeMap::new();
        for attr in config.decoders.attributes() {
            decoders.insert(
                attr,
                FeedForward::init(rho_dim, config.hidden_size, attr.cardinality(), &mut rng),
            );
        }
        Ok(ModelParameters {
            author_marker: Array1::from_vec(table.author_marker().to_vec()),
            other_marker: Array1::from_vec(table.other_marker().to_vec()),
            config,
            forward_lstm,
            backward_lstm,
            encoders,
            decoders,
        })
    }

    /// Width of the concatenated encoding fed to the decoders.
    pub fn rho_dim(&self) -> usize {
        2 * self.config.lstm_hidden + self.config.hidden_size * self.encoders.len()
    }

    fn marker_vector(&self, token: TokenRef) -> Option<&Array1<f64>> {
        match token {
            TokenRef::AuthorMarker => Some(&self.author_marker),
            TokenRef::OtherMarker => Some(&self.other_marker),
            _ => None,
        }
    }

    /// Trainable parameters in canonical order, flattened. Marker vectors
    /// are included only when `train_markers` is set.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        let push_lstm = |p: &LstmParams, out: &mut Vec<f64>| {
            out.extend(p.w.iter());
            out.extend(p.u.iter());
            out.extend(p.b.iter());
        };
        push_lstm(&self.forward_lstm, &mut out);
        push_lstm(&self.backward_lstm, &mut out);
        for ff in self.encoders.values().chain(self.decoders.values()) {
            out.extend(ff.w1.iter());
            out.extend(ff.b1.iter());
            out.extend(ff.w2.iter());
            out.extend(ff.b2.iter());
        }
        if self.config.train_markers {
            out.extend(self.author_marker.iter());
            out.extend(self.other_marker.iter());
        }
        out
    }

    /// Inverse of [`Self::flatten`].
    pub fn assign_flat(&mut self, flat: &[f64]) {
        let mut cursor = 0usize;
        let take = |dst: &mut [f64], cursor: &mut usize| {
            dst.copy_from_slice(&flat[*cursor..*cursor + dst.len()]);
            *cursor += dst.len();
        };
        for lstm in [&mut self.forward_lstm, &mut self.backward_lstm] {
            take(lstm.w.as_slice_mut().unwrap(), &mut cursor);
            take(lstm.u.as_slice_mut().unwrap(), &mut cursor);
            take(lstm.b.as_slice_mut().unwrap(), &mut cursor);
        }
        for ff in self.encoders.values_mut().chain(self.decoders.values_mut()) {
            take(ff.w1.as_slice_mut().unwrap(), &mut cursor);
            take(ff.b1.as_slice_mut().unwrap(), &mut cursor);
            take(ff.w2.as_slice_mut().unwrap(), &mut cursor);
            take(ff.b2.as_slice_mut().unwrap(), &mut cursor);
        }
        if self.config.train_markers {
            take(self.author_marker.as_slice_mut().unwrap(), &mut cursor);
            take(self.other_marker.as_slice_mut().unwrap(), &mut cursor);
        }
        assert_eq!(cursor, flat.len(), "flat parameter length mismatch");
    }

    pub fn param_count(&self) -> usize {
        let lstm = |p: &LstmParams| p.w.len() + p.u.len() + p.b.len();
        let ff = |f: &FeedForward| f.w1.len() + f.b1.len() + f.w2.len() + f.b2.len();
        let mut n = lstm(&self.forward_lstm) + lstm(&self.backward_lstm);
        n += self.encoders.values().map(ff).sum::<usize>();
        n += self.decoders.values().map(ff).sum::<usize>();
        if self.config.train_markers {
            n += self.author_marker.len() + self.other_marker.len();
        }
        n
    }

    pub fn all_finite(&self) -> bool {
        self.flatten().iter().all(|v| v.is_finite())
    }
}

/// One classification instance: the encoded token sequence, normalized
/// feature vectors per enabled kind, and gold labels per decoded attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub refs: Vec<TokenRef>,
    pub features: BTreeMap<FeatureKind, Vec<f64>>,
    pub labels: BTreeMap<Attribute, usize>,
}

/// Per-attribute probability vectors over the attribute's k values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub probs: BTreeMap<Attribute, Vec<f64>>,
}

impl Prediction {
    pub fn argmax(&self, attr: Attribute) -> usize {
        let p = &self.probs[&attr];
        p.iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0)
    }
}

fn softmax(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps = logits.mapv(|v| (v - max).exp());
    let sum = exps.sum();
    exps / sum
}

struct EncoderCache {
    input: Array1<f64>,
    hidden: Array1<f64>,
    output: Array1<f64>,
}

struct DecoderCache {
    hidden: Array1<f64>,
    probs: Array1<f64>,
}

/// Everything the backward pass needs from one forward evaluation.
pub struct ForwardTrace {
    x: Array2<f64>,
    x_rev: Array2<f64>,
    fwd: lstm::LstmTrace,
    bwd: lstm::LstmTrace,
    rho: Array1<f64>,
    encoder_caches: BTreeMap<FeatureKind, EncoderCache>,
    decoder_caches: BTreeMap<Attribute, DecoderCache>,
    pub loss: f64,
}

impl ForwardTrace {
    /// The concatenated encoding (context encoding first).
    pub fn rho(&self) -> &Array1<f64> {
        &self.rho
    }

    pub fn probs(&self, attr: Attribute) -> Option<&Array1<f64>> {
        self.decoder_caches.get(&attr).map(|c| &c.probs)
    }
}

fn input_matrix(params: &ModelParameters, table: &EmbeddingTable, refs: &[TokenRef]) -> Array2<f64> {
    let d = params.config.embedding_dim;
    let mut x = Array2::zeros((d, refs.len()));
    for (t, &r) in refs.iter().enumerate() {
        match params.marker_vector(r) {
            Some(marker) => x.column_mut(t).assign(marker),
            None => {
                let v = table.vector(r);
                for (row, value) in v.iter().enumerate() {
                    x[(row, t)] = *value;
                }
            }
        }
    }
    x
}

fn reverse_columns(x: &Array2<f64>) -> Array2<f64> {
    let n = x.ncols();
    let mut rev = Array2::zeros(x.raw_dim());
    for t in 0..n {
        rev.column_mut(t).assign(&x.column(n - 1 - t));
    }
    rev
}

/// Forward pass computing the summed cross-entropy over `attrs`.
///
/// `attrs` selects which decoders contribute: the model's single attribute
/// in single mode, all seven in joint mode, or any subset (used by the
/// loss-additivity checks).
pub fn forward(
    params: &ModelParameters,
    table: &EmbeddingTable,
    example: &Example,
    attrs: &[Attribute],
) -> Result<ForwardTrace> {
    if example.refs.is_empty() {
        return Err(Error::invalid("example has an empty token sequence"));
    }
    let x = input_matrix(params, table, &example.refs);
    let x_rev = reverse_columns(&x);
    let fwd = lstm_forward(&params.forward_lstm, &x);
    let bwd = lstm_forward(&params.backward_lstm, &x_rev);

    let mut rho = Vec::with_capacity(params.rho_dim());
    rho.extend(fwd.final_hidden().iter());
    rho.extend(bwd.final_hidden().iter());

    let mut encoder_caches = BTreeMap::new();
    for (kind, ff) in &params.encoders {
        let raw = example.features.get(kind).ok_or_else(|| {
            Error::invalid(format!("example is missing features of kind {kind}"))
        })?;
        if raw.len() != ff.in_dim() {
            return Err(Error::invalid(format!(
                "{kind} feature vector has dimension {}, encoder expects {}",
                raw.len(),
                ff.in_dim()
            )));
        }
        let input = Array1::from_vec(raw.clone());
        let hidden = (ff.w1.dot(&input) + &ff.b1).mapv(f64::tanh);
        let output = (ff.w2.dot(&hidden) + &ff.b2).mapv(f64::tanh);
        rho.extend(output.iter());
        encoder_caches.insert(
            *kind,
            EncoderCache {
                input,
                hidden,
                output,
            },
        );
    }
    let rho = Array1::from_vec(rho);

    let mut decoder_caches = BTreeMap::new();
    let mut loss = 0.0;
    for &attr in attrs {
        let ff = params
            .decoders
            .get(&attr)
            .ok_or_else(|| Error::invalid(format!("model has no decoder for {attr}")))?;
        let hidden = (ff.w1.dot(&rho) + &ff.b1).mapv(f64::tanh);
        let probs = softmax(&(ff.w2.dot(&hidden) + &ff.b2));
        if let Some(&gold) = example.labels.get(&attr) {
            if gold >= probs.len() {
                return Err(Error::invalid(format!(
                    "gold label {gold} out of range for {attr}"
                )));
            }
            loss -= probs[gold].ln();
        } else {
            return Err(Error::invalid(format!("example has no gold label for {attr}")));
        }
        decoder_caches.insert(attr, DecoderCache { hidden, probs });
    }

    Ok(ForwardTrace {
        x,
        x_rev,
        fwd,
        bwd,
        rho,
        encoder_caches,
        decoder_caches,
        loss,
    })
}

/// The summed cross-entropy of `attrs` on one example.
pub fn loss(
    params: &ModelParameters,
    table: &EmbeddingTable,
    example: &Example,
    attrs: &[Attribute],
) -> Result<f64> {
    Ok(forward(params, table, example, attrs)?.loss)
}

/// Probabilities from every decoder the model carries. Gold labels in the
/// example are not required.
pub fn predict(
    params: &ModelParameters,
    table: &EmbeddingTable,
    example: &Example,
) -> Result<Prediction> {
    let mut with_labels = example.clone();
    for attr in params.decoders.keys() {
        with_labels.labels.entry(*attr).or_insert(0);
    }
    let attrs: Vec<Attribute> = params.decoders.keys().copied().collect();
    let trace = forward(params, table, &with_labels, &attrs)?;
    Ok(Prediction {
        probs: trace
            .decoder_caches
            .iter()
            .map(|(attr, c)| (*attr, c.probs.to_vec()))
            .collect(),
    })
}

/// Analytic gradients for the loss computed by [`forward`] over the same
/// `attrs`, flattened in the canonical parameter order.
pub fn backward(
    params: &ModelParameters,
    example: &Example,
    trace: &ForwardTrace,
    attrs: &[Attribute],
) -> Vec<f64> {
    let hidden = params.config.lstm_hidden;
    let mut d_rho: Array1<f64> = Array1::zeros(trace.rho.len());
    let mut decoder_grads: BTreeMap<Attribute, FeedForward> = params
        .decoders
        .iter()
        .map(|(a, ff)| (*a, ff.zeros_like()))
        .collect();

    for &attr in attrs {
        let cache = &trace.decoder_caches[&attr];
        let ff = &params.decoders[&attr];
        let gold = example.labels[&attr];
        let mut d_logits = cache.probs.clone();
        d_logits[gold] -= 1.0;

        let g = decoder_grads.get_mut(&attr).unwrap();
        g.w2 = g.w2.clone()
            + d_logits
                .view()
                .insert_axis(ndarray::Axis(1))
                .dot(&cache.hidden.view().insert_axis(ndarray::Axis(0)));
        g.b2 = g.b2.clone() + &d_logits;
        let d_hidden =
            ff.w2.t().dot(&d_logits) * cache.hidden.mapv(|v| 1.0 - v * v);
        g.w1 = g.w1.clone()
            + d_hidden
                .view()
                .insert_axis(ndarray::Axis(1))
                .dot(&trace.rho.view().insert_axis(ndarray::Axis(0)));
        g.b1 = g.b1.clone() + &d_hidden;
        d_rho = d_rho + ff.w1.t().dot(&d_hidden);
    }

    // split d_rho: context encoding, then feature encodings in kind order
    let dh_fwd = d_rho.slice(s![0..hidden]).to_owned();
    let dh_bwd = d_rho.slice(s![hidden..2 * hidden]).to_owned();
    let mut offset = 2 * hidden;
    let mut encoder_grads: BTreeMap<FeatureKind, FeedForward> = BTreeMap::new();
    for (kind, ff) in &params.encoders {
        let cache = &trace.encoder_caches[kind];
        let width = cache.output.len();
        let d_out = d_rho.slice(s![offset..offset + width]).to_owned();
        offset += width;

        let d_pre2 = &d_out * &cache.output.mapv(|v| 1.0 - v * v);
        let mut g = ff.zeros_like();
        g.w2 = d_pre2
            .view()
            .insert_axis(ndarray::Axis(1))
            .dot(&cache.hidden.view().insert_axis(ndarray::Axis(0)));
        g.b2 = d_pre2.clone();
        let d_hidden = ff.w2.t().dot(&d_pre2) * cache.hidden.mapv(|v| 1.0 - v * v);
        g.w1 = d_hidden
            .view()
            .insert_axis(ndarray::Axis(1))
            .dot(&cache.input.view().insert_axis(ndarray::Axis(0)));
        g.b1 = d_hidden;
        encoder_grads.insert(*kind, g);
    }

    let fwd_back = lstm_backward(&params.forward_lstm, &trace.x, &trace.fwd, &dh_fwd);
    let bwd_back = lstm_backward(&params.backward_lstm, &trace.x_rev, &trace.bwd, &dh_bwd);

    let mut flat = Vec::with_capacity(params.param_count());
    for grads in [&fwd_back.grads, &bwd_back.grads] {
        flat.extend(grads.w.iter());
        flat.extend(grads.u.iter());
        flat.extend(grads.b.iter());
    }
    for (kind, ff) in &params.encoders {
        let g = encoder_grads
            .remove(kind)
            .unwrap_or_else(|| ff.zeros_like());
        flat.extend(g.w1.iter());
        flat.extend(g.b1.iter());
        flat.extend(g.w2.iter());
        flat.extend(g.b2.iter());
    }
    for (attr, ff) in &params.decoders {
        let g = decoder_grads.remove(attr).unwrap_or_else(|| ff.zeros_like());
        flat.extend(g.w1.iter());
        flat.extend(g.b1.iter());
        flat.extend(g.w2.iter());
        flat.extend(g.b2.iter());
    }

    if params.config.train_markers {
        // marker gradients: dx at marker positions, both directions
        let n = trace.x.ncols();
        let mut d_author: Array1<f64> = Array1::zeros(params.config.embedding_dim);
        let mut d_other: Array1<f64> = Array1::zeros(params.config.embedding_dim);
        for (t, &r) in example.refs.iter().enumerate() {
            let dx_total =
                fwd_back.dx.column(t).to_owned() + bwd_back.dx.column(n - 1 - t).to_owned();
            match r {
                TokenRef::AuthorMarker => d_author = d_author + dx_total,
                TokenRef::OtherMarker => d_other = d_other + dx_total,
                _ => {}
            }
        }
        flat.extend(d_author.iter());
        flat.extend(d_other.iter());
    }
    flat
}


#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;

    fn small_config(kinds: Vec<FeatureKind>, decoders: DecoderSet) -> ModelConfig {
        let mut c = ModelConfig::new(decoders);
        c.embedding_dim = 4;
        c.lstm_hidden = 3;
        c.hidden_size = 3;
        c.feature_kinds = kinds;
        c.seed = 17;
        c
    }

    fn dims(pairs: &[(FeatureKind, usize)]) -> BTreeMap<FeatureKind, usize> {
        pairs.iter().copied().collect()
    }

    #[test]
    fn uniform_probabilities_from_zero_decoder_weights() {
        let table = tiny_table(4, 1);
        let config = small_config(vec![], DecoderSet::Joint);
        let mut params = ModelParameters::init(config, &dims(&[]), &table).unwrap();
        for ff in params.decoders.values_mut() {
            ff.w1.fill(0.0);
            ff.b1.fill(0.0);
            ff.w2.fill(0.0);
            ff.b2.fill(0.0);
        }
        let example = example_with(
            vec![TokenRef::AuthorMarker, TokenRef::Word(0)],
            &[],
            &ATTRIBUTES.map(|a| (a, 0)),
        );
        let pred = predict(&params, &table, &example).unwrap();
        for (attr, probs) in &pred.probs {
            assert_eq!(probs.len(), attr.cardinality());
            let uniform = 1.0 / attr.cardinality() as f64;
            for p in probs {
                assert!((p - uniform).abs() < 1e-12);
            }
        }
        // relative age decodes into exactly three values
        assert_eq!(pred.probs[&Attribute::RelativeAge].len(), 3);
    }

    #[test]
    fn decoder_matches_hand_softmax() {
        let table = tiny_table(2, 1);
        let mut config = small_config(vec![], DecoderSet::Single(Attribute::Work));
        config.embedding_dim = 2;
        config.lstm_hidden = 1;
        config.hidden_size = 1;
        let mut params = ModelParameters::init(config, &dims(&[]), &table).unwrap();
        // zero the LSTM so rho = [h_fwd, h_bwd] = [0, 0] after tanh dance?
        // LSTM of zero weights with bias: forget bias 1 -> i = 0.5, g = 0,
        // o = 0.5, c = 0, h = 0. So rho = [0, 0].
        for lstm in [&mut params.forward_lstm, &mut params.backward_lstm] {
            lstm.w.fill(0.0);
            lstm.u.fill(0.0);
            lstm.b.fill(0.0);
            lstm.b[1] = 1.0;
        }
        let ff = params.decoders.get_mut(&Attribute::Work).unwrap();
        ff.w1.fill(0.0);
        ff.b1.fill(0.3); // hidden = tanh(0.3)
        ff.w2.fill(0.0);
        ff.w2[(0, 0)] = 2.0;
        ff.b2[0] = 0.1;
        ff.b2[1] = -0.2;
        let example = example_with(vec![TokenRef::Word(0)], &[], &[(Attribute::Work, 0)]);
        let pred = predict(&params, &table, &example).unwrap();
        let h = 0.3f64.tanh();
        let l0 = 2.0 * h + 0.1;
        let l1: f64 = -0.2;
        let z = l0.exp() + l1.exp();
        assert!((pred.probs[&Attribute::Work][0] - l0.exp() / z).abs() < 1e-12);
        assert!((pred.probs[&Attribute::Work][1] - l1.exp() / z).abs() < 1e-12);
    }

    #[test]
    fn encoder_with_zero_weights_outputs_activated_bias() {
        let table = tiny_table(4, 1);
        let config = small_config(vec![FeatureKind::Style], DecoderSet::Single(Attribute::Family));
        let mut params =
            ModelParameters::init(config, &dims(&[(FeatureKind::Style, 2)]), &table).unwrap();
        let enc = params.encoders.get_mut(&FeatureKind::Style).unwrap();
        enc.w1.fill(0.0);
        enc.b1.fill(0.0);
        enc.w2.fill(0.0);
        enc.b2.assign(&Array1::from_vec(vec![0.5, -0.25, 0.0]));
        let example = example_with(
            vec![TokenRef::Word(1)],
            &[(FeatureKind::Style, vec![9.0, -3.0])],
            &[(Attribute::Family, 1)],
        );
        let trace = forward(&params, &table, &example, &[Attribute::Family]).unwrap();
        let rho = trace.rho();
        let tail = &rho.as_slice().unwrap()[rho.len() - 3..];
        assert!((tail[0] - 0.5f64.tanh()).abs() < 1e-12);
        assert!((tail[1] - (-0.25f64).tanh()).abs() < 1e-12);
        assert_eq!(tail[2], 0.0);
    }

    #[test]
    fn feature_dimension_mismatch_is_an_error() {
        let table = tiny_table(4, 1);
        let config = small_config(vec![FeatureKind::Time], DecoderSet::Single(Attribute::Work));
        let params =
            ModelParameters::init(config, &dims(&[(FeatureKind::Time, 3)]), &table).unwrap();
        let example = example_with(
            vec![TokenRef::Word(0)],
            &[(FeatureKind::Time, vec![1.0])],
            &[(Attribute::Work, 0)],
        );
        let err = match forward(&params, &table, &example, &[Attribute::Work]) {
            Err(e) => e,
            Ok(_) => panic!("dimension mismatch accepted"),
        };
        assert!(err.to_string().contains("dimension"));
    }

    #[test]
    fn disabled_kind_contributes_no_parameters() {
        let table = tiny_table(4, 1);
        let all = small_config(
            vec![FeatureKind::Style, FeatureKind::Time],
            DecoderSet::Single(Attribute::Work),
        );
        let some = small_config(vec![FeatureKind::Style], DecoderSet::Single(Attribute::Work));
        let d = dims(&[(FeatureKind::Style, 2), (FeatureKind::Time, 3)]);
        let p_all = ModelParameters::init(all, &d, &table).unwrap();
        let p_some = ModelParameters::init(some, &d, &table).unwrap();
        assert!(p_all.param_count() > p_some.param_count());
        assert!(!p_some.encoders.contains_key(&FeatureKind::Time));
        assert_eq!(p_some.rho_dim(), 2 * 3 + 3);
    }

    #[test]
    fn perfect_and_uniform_losses() {
        let table = tiny_table(4, 1);
        let config = small_config(vec![], DecoderSet::Single(Attribute::Work));
        let mut params = ModelParameters::init(config, &dims(&[]), &table).unwrap();
        let example = example_with(vec![TokenRef::Word(0)], &[], &[(Attribute::Work, 0)]);

        // uniform: zero decoder -> loss ln 2
        for ff in params.decoders.values_mut() {
            ff.w1.fill(0.0);
            ff.b1.fill(0.0);
            ff.w2.fill(0.0);
            ff.b2.fill(0.0);
        }
        let l = loss(&params, &table, &example, &[Attribute::Work]).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-12);

        // near-perfect: a huge bias on the gold logit
        params.decoders.get_mut(&Attribute::Work).unwrap().b2[0] = 50.0;
        let l = loss(&params, &table, &example, &[Attribute::Work]).unwrap();
        assert!(l < 1e-12);
    }

    #[test]
    fn joint_loss_is_sum_of_single_losses() {
        let table = tiny_table(4, 2);
        let mut config = small_config(
            vec![FeatureKind::Style],
            DecoderSet::Joint,
        );
        config.seed = 5;
        let params =
            ModelParameters::init(config, &dims(&[(FeatureKind::Style, 2)]), &table).unwrap();
        let example = example_with(
            vec![TokenRef::AuthorMarker, TokenRef::Word(2), TokenRef::OtherMarker],
            &[(FeatureKind::Style, vec![0.4, -1.2])],
            &ATTRIBUTES.map(|a| (a, a.cardinality() - 1)),
        );
        let joint = loss(&params, &table, &example, &ATTRIBUTES).unwrap();
        let sum: f64 = ATTRIBUTES
            .iter()
            .map(|a| loss(&params, &table, &example, &[*a]).unwrap())
            .sum();
        assert!((joint - sum).abs() < 1e-12);
    }

    #[test]
    fn joint_gradients_add_over_decoders() {
        let table = tiny_table(4, 2);
        let config = small_config(vec![FeatureKind::Style], DecoderSet::Joint);
        let params =
            ModelParameters::init(config, &dims(&[(FeatureKind::Style, 2)]), &table).unwrap();
        let example = example_with(
            vec![TokenRef::Word(0), TokenRef::Word(1)],
            &[(FeatureKind::Style, vec![1.0, 0.5])],
            &ATTRIBUTES.map(|a| (a, 0)),
        );
        let joint_trace = forward(&params, &table, &example, &ATTRIBUTES).unwrap();
        let joint_grads = backward(&params, &example, &joint_trace, &ATTRIBUTES);
        let mut summed = vec![0.0; joint_grads.len()];
        for attr in ATTRIBUTES {
            let tr = forward(&params, &table, &example, &[attr]).unwrap();
            let g = backward(&params, &example, &tr, &[attr]);
            for (s, v) in summed.iter_mut().zip(&g) {
                *s += v;
            }
        }
        for (a, b) in joint_grads.iter().zip(&summed) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn reversed_input_changes_context_encoding() {
        let table = tiny_table(4, 3);
        let config = small_config(vec![], DecoderSet::Single(Attribute::Family));
        let params = ModelParameters::init(config, &dims(&[]), &table).unwrap();
        let fwd_example = example_with(
            vec![TokenRef::Word(0), TokenRef::Word(1), TokenRef::Word(2)],
            &[],
            &[(Attribute::Family, 0)],
        );
        let rev_example = example_with(
            vec![TokenRef::Word(2), TokenRef::Word(1), TokenRef::Word(0)],
            &[],
            &[(Attribute::Family, 0)],
        );
        let a = forward(&params, &table, &fwd_example, &[Attribute::Family]).unwrap();
        let b = forward(&params, &table, &rev_example, &[Attribute::Family]).unwrap();
        let diff: f64 = a
            .rho()
            .iter()
            .zip(b.rho().iter())
            .map(|(x, y)| (x - y).abs())
            .sum();
        assert!(diff > 1e-6);
    }

    #[test]
    fn single_token_sequences_encode() {
        let table = tiny_table(4, 3);
        let config = small_config(vec![], DecoderSet::Single(Attribute::Family));
        let params = ModelParameters::init(config, &dims(&[]), &table).unwrap();
        let example = example_with(vec![TokenRef::OtherMarker], &[], &[(Attribute::Family, 1)]);
        let trace = forward(&params, &table, &example, &[Attribute::Family]).unwrap();
        assert!(trace.loss.is_finite());
    }

    #[test]
    fn analytic_gradients_match_finite_differences_small_model() {
        let table = tiny_table(4, 9);
        let mut config = small_config(
            vec![FeatureKind::Style, FeatureKind::Time],
            DecoderSet::Single(Attribute::RelativeAge),
        );
        config.train_markers = true;
        let mut params = ModelParameters::init(
            config,
            &dims(&[(FeatureKind::Style, 2), (FeatureKind::Time, 3)]),
            &table,
        )
        .unwrap();
        let example = example_with(
            vec![
                TokenRef::AuthorMarker,
                TokenRef::Word(0),
                TokenRef::OtherMarker,
                TokenRef::Word(3),
                TokenRef::Unknown,
            ],
            &[
                (FeatureKind::Style, vec![0.7, -0.3]),
                (FeatureKind::Time, vec![1.1, 0.0, -2.0]),
            ],
            &[(Attribute::RelativeAge, 2)],
        );
        let attrs = [Attribute::RelativeAge];
        let trace = forward(&params, &table, &example, &attrs).unwrap();
        let analytic = backward(&params, &example, &trace, &attrs);
        let fd = finite_difference_grads(&mut params, &table, &example, &attrs, 1e-4);
        assert_eq!(analytic.len(), fd.len());
        let err = max_gradient_error(&analytic, &fd);
        assert!(err <= 1e-4, "max scaled gradient error {err}");
    }

    #[test]
    fn flatten_assign_round_trip() {
        let table = tiny_table(4, 4);
        let config = small_config(vec![FeatureKind::Graph], DecoderSet::Joint);
        let mut params =
            ModelParameters::init(config, &dims(&[(FeatureKind::Graph, 5)]), &table).unwrap();
        let flat = params.flatten();
        assert_eq!(flat.len(), params.param_count());
        let mut doubled = flat.clone();
        for v in &mut doubled {
            *v *= 2.0;
        }
        params.assign_flat(&doubled);
        let back = params.flatten();
        for (a, b) in back.iter().zip(&flat) {
            assert!((a - 2.0 * b).abs() < 1e-15);
        }
    }
}
