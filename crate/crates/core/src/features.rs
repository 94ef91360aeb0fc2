//! The six auxiliary feature families extracted per (context window,
//! partner), plus training-fold z-score normalization and the per-fold
//! feature cache format.
//!
//! History-dependent features (frequency, style) only see messages that
//! strictly precede the window's first message, so nothing sent at or
//! after the window start can leak into a vector. Graph features read a
//! distance matrix built from training messages only; the extractor never
//! touches messages past the window's last index.
//!
//! # Cache format
//!
//! Text, one record per line:
//!
//! ```text
//! #dialogscope-features v1
//! dims<TAB>kind=dim<TAB>...
//! window<TAB>partner<TAB>index<TAB>kind<TAB>v,v,...
//! ```
//!
//! Floats are written in Rust's shortest round-trip form, so a cache
//! reload reproduces vectors bit for bit.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::{Datelike, TimeZone, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::annotation::{Attribute, AttributeProfile, RelativeAge, ATTRIBUTES};
use crate::corpus::{ContextWindow, Conversation, Message, SpeakerId};
use crate::error::{Error, Result};
use crate::graph::DistanceMatrix;
use crate::lexicon::{category_counts, lsm, CategoryLexicon, FunctionWordProfile};

/// Style features look back over at most this many history messages.
pub const STYLE_BUFFER: usize = 100;

/// The auxiliary feature families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Liwc,
    Time,
    Frequency,
    Style,
    Graph,
    Attributes,
}

/// All kinds, in canonical order.
pub const FEATURE_KINDS: [FeatureKind; 6] = [
    FeatureKind::Liwc,
    FeatureKind::Time,
    FeatureKind::Frequency,
    FeatureKind::Style,
    FeatureKind::Graph,
    FeatureKind::Attributes,
];

impl FeatureKind {
    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Liwc => "liwc",
            FeatureKind::Time => "time",
            FeatureKind::Frequency => "frequency",
            FeatureKind::Style => "style",
            FeatureKind::Graph => "graph",
            FeatureKind::Attributes => "attributes",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        FEATURE_KINDS.iter().copied().find(|k| k.name() == s)
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A fixed-length numeric feature vector of one kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub kind: FeatureKind,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn assert_finite(&self) -> Result<()> {
        if self.values.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "{} feature vector contains a non-finite value",
                self.kind
            )))
        }
    }
}

fn side_tokens(messages: &[Message], author_side: bool) -> Vec<String> {
    messages
        .iter()
        .filter(|m| m.is_author == author_side)
        .flat_map(|m| m.tokens())
        .collect()
}

/// LIWC-style features over the window: author category vector, partner
/// category vector, their cosine similarity, and their elementwise sum
/// (dimension `3C + 1`). A side with no messages contributes the zero
/// vector and cosine 0.
pub fn liwc_features(window: &ContextWindow, lexicon: &CategoryLexicon) -> FeatureVector {
    let author = category_counts(&side_tokens(&window.messages, true), lexicon);
    let partner = category_counts(&side_tokens(&window.messages, false), lexicon);
    let cosine = author.cosine(&partner);
    let sum = author.elementwise_sum(&partner);
    let mut values = Vec::with_capacity(3 * lexicon.len() + 1);
    values.extend_from_slice(&author.values);
    values.extend_from_slice(&partner.values);
    values.push(cosine);
    values.extend_from_slice(&sum.values);
    FeatureVector {
        kind: FeatureKind::Liwc,
        values,
    }
}

fn season_slot(month0: u32) -> usize {
    match month0 {
        11 | 0 | 1 => 0, // Dec-Feb winter
        2..=4 => 1,      // Mar-May spring
        5..=7 => 2,      // Jun-Aug summer
        _ => 3,          // Sep-Nov fall
    }
}

/// Temporal features: window elapsed seconds, the inter-message gaps, and
/// the last message's day-of-month, month, year, season, and hour. For a
/// window of W messages the dimension is `W + 19`:
/// `[elapsed, gap x(W-1), day/31, month one-hot x12, (year-1970)/100,
/// season one-hot x4, hour/23]`.
pub fn time_features(window: &ContextWindow) -> Result<FeatureVector> {
    let ts: Vec<i64> = window.messages.iter().map(|m| m.timestamp).collect();
    if ts.windows(2).any(|p| p[1] < p[0]) {
        return Err(Error::invalid("window timestamps are not monotone"));
    }
    let mut values = Vec::with_capacity(window.size() + 19);
    values.push((ts[ts.len() - 1] - ts[0]) as f64);
    for pair in ts.windows(2) {
        values.push((pair[1] - pair[0]) as f64);
    }
    let last = Utc
        .timestamp_opt(ts[ts.len() - 1], 0)
        .single()
        .ok_or_else(|| Error::invalid("timestamp out of range"))?;
    values.push(last.day() as f64 / 31.0);
    let mut month = [0.0; 12];
    month[last.month0() as usize] = 1.0;
    values.extend_from_slice(&month);
    values.push((last.year() - 1970) as f64 / 100.0);
    let mut season = [0.0; 4];
    season[season_slot(last.month0())] = 1.0;
    values.extend_from_slice(&season);
    values.push(last.hour() as f64 / 23.0);
    Ok(FeatureVector {
        kind: FeatureKind::Time,
        values,
    })
}

/// Messaging-frequency features: log1p counts of history messages in the
/// 24 hours, 7 days, and 30 days before the window start plus all time,
/// followed by the window's turn sequence as author-indicator bits.
/// Dimension `4 + W`. `history` must strictly precede the window.
pub fn frequency_features(window: &ContextWindow, history: &[Message]) -> FeatureVector {
    let start = window.first_timestamp();
    let count_within = |seconds: i64| -> f64 {
        history
            .iter()
            .filter(|m| m.timestamp >= start - seconds)
            .count() as f64
    };
    let mut values = vec![
        count_within(86_400).ln_1p(),
        count_within(7 * 86_400).ln_1p(),
        count_within(30 * 86_400).ln_1p(),
        (history.len() as f64).ln_1p(),
    ];
    values.extend(
        window
            .messages
            .iter()
            .map(|m| if m.is_author { 1.0 } else { 0.0 }),
    );
    FeatureVector {
        kind: FeatureKind::Frequency,
        values,
    }
}

fn lsm_over(messages: &[Message]) -> f64 {
    let author = FunctionWordProfile::from_tokens(&side_tokens(messages, true));
    let partner = FunctionWordProfile::from_tokens(&side_tokens(messages, false));
    lsm(&author, &partner)
}

/// Style-matching features (dimension 2): the LSM score over the last
/// [`STYLE_BUFFER`] history messages, and the change in that score across
/// the window (buffer after the last window message minus buffer before
/// the first).
pub fn style_features(window: &ContextWindow, history: &[Message]) -> FeatureVector {
    let before_start = history.len().saturating_sub(STYLE_BUFFER);
    let lsm_initial = lsm_over(&history[before_start..]);

    let mut after: Vec<Message> = history.to_vec();
    after.extend_from_slice(&window.messages);
    let after_start = after.len().saturating_sub(STYLE_BUFFER);
    let lsm_final = lsm_over(&after[after_start..]);

    FeatureVector {
        kind: FeatureKind::Style,
        values: vec![lsm_initial, lsm_final - lsm_initial],
    }
}

/// Graph features: the partner's row of the shortest-path distance matrix
/// (all-sentinel for speakers absent from the training graph). Dimension =
/// node count; node ordering is the matrix's and must be persisted with
/// the model.
pub fn graph_features(partner_id: &SpeakerId, distances: &DistanceMatrix) -> FeatureVector {
    FeatureVector {
        kind: FeatureKind::Graph,
        values: distances.row_or_sentinel(partner_id),
    }
}

/// Attribute features: the values of the six attributes other than
/// `target`, in schema order — one bit per binary attribute and a 3-wide
/// one-hot for relative age. Dimension 8 for binary targets, 6 when the
/// target is relative age.
pub fn attribute_features(profile: &AttributeProfile, target: Attribute) -> FeatureVector {
    let mut values = Vec::with_capacity(8);
    for attr in ATTRIBUTES {
        if attr == target {
            continue;
        }
        match attr {
            Attribute::RelativeAge => {
                let mut one_hot = [0.0; 3];
                let slot = match profile.relative_age {
                    RelativeAge::Younger => 0,
                    RelativeAge::Older => 1,
                    RelativeAge::Same => 2,
                };
                one_hot[slot] = 1.0;
                values.extend_from_slice(&one_hot);
            }
            Attribute::Family => values.push(profile.family.into()),
            Attribute::Romantic => values.push(profile.romantic.into()),
            Attribute::ChildhoodCountry => values.push(profile.childhood_same_country.into()),
            Attribute::GenderSame => values.push(profile.gender_same.into()),
            Attribute::School => values.push(profile.school.into()),
            Attribute::Work => values.push(profile.work.into()),
        }
    }
    FeatureVector {
        kind: FeatureKind::Attributes,
        values,
    }
}

/// Per-dimension z-score normalizer fitted on training-fold vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Normalized values are clamped to this many standard deviations.
pub const NORMALIZER_CLAMP: f64 = 6.0;

/// Floor for per-dimension standard deviations.
pub const SIGMA_FLOOR: f64 = 1e-8;

impl Normalizer {
    /// Fit per-dimension mean and (population) standard deviation.
    /// Requires at least two vectors of equal dimension.
    pub fn fit<V: AsRef<[f64]>>(vectors: &[V]) -> Result<Self> {
        if vectors.len() < 2 {
            return Err(Error::invalid(format!(
                "normalizer needs at least 2 training vectors, got {}",
                vectors.len()
            )));
        }
        let dim = vectors[0].as_ref().len();
        let n = vectors.len() as f64;
        let mut mean = vec![0.0; dim];
        for v in vectors {
            let v = v.as_ref();
            if v.len() != dim {
                return Err(Error::invalid(
                    "normalizer training vectors differ in dimension",
                ));
            }
            for (m, x) in mean.iter_mut().zip(v) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; dim];
        for v in vectors {
            for ((s, x), m) in var.iter_mut().zip(v.as_ref()).zip(&mean) {
                *s += (x - m) * (x - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| (s / n).sqrt().max(SIGMA_FLOOR))
            .collect();
        Ok(Normalizer { mean, std })
    }

    /// Z-score `v`, clamping each component to +-[`NORMALIZER_CLAMP`].
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((x, m), s)| ((x - m) / s).clamp(-NORMALIZER_CLAMP, NORMALIZER_CLAMP))
            .collect()
    }
}

/// One normalizer per feature kind, fitted jointly on training windows.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NormalizerSet {
    pub normalizers: BTreeMap<FeatureKind, Normalizer>,
}

impl NormalizerSet {
    pub fn fit(training: &[Vec<FeatureVector>]) -> Result<Self> {
        let mut by_kind: BTreeMap<FeatureKind, Vec<&[f64]>> = BTreeMap::new();
        for vectors in training {
            for fv in vectors {
                by_kind.entry(fv.kind).or_default().push(&fv.values);
            }
        }
        let mut normalizers = BTreeMap::new();
        for (kind, vectors) in by_kind {
            normalizers.insert(kind, Normalizer::fit(&vectors)?);
        }
        Ok(NormalizerSet { normalizers })
    }

    pub fn apply(&self, vectors: &[FeatureVector]) -> Result<Vec<FeatureVector>> {
        vectors
            .iter()
            .map(|fv| {
                let norm = self.normalizers.get(&fv.kind).ok_or_else(|| {
                    Error::invalid(format!("no normalizer fitted for kind {}", fv.kind))
                })?;
                if norm.mean.len() != fv.dim() {
                    return Err(Error::invalid(format!(
                        "{} vector has dimension {}, normalizer was fitted on {}",
                        fv.kind,
                        fv.dim(),
                        norm.mean.len()
                    )));
                }
                Ok(FeatureVector {
                    kind: fv.kind,
                    values: norm.apply(&fv.values),
                })
            })
            .collect()
    }
}

/// Everything needed to extract features for windows of one fold.
pub struct FeatureExtractor<'a> {
    pub lexicon: &'a CategoryLexicon,
    /// Required when `kinds` includes [`FeatureKind::Graph`].
    pub distances: Option<&'a DistanceMatrix>,
    /// Required when `kinds` includes [`FeatureKind::Attributes`].
    pub profiles: Option<&'a BTreeMap<SpeakerId, AttributeProfile>>,
    pub target: Option<Attribute>,
    pub kinds: Vec<FeatureKind>,
}

impl FeatureExtractor<'_> {
    /// Raw (unnormalized) vectors for one window. `conv` must be the
    /// window's conversation; only `messages[..window.start]` and the
    /// window's own messages are read.
    pub fn extract(
        &self,
        conv: &Conversation,
        window: &ContextWindow,
    ) -> Result<Vec<FeatureVector>> {
        let history = &conv.messages[..window.start];
        let mut out = Vec::with_capacity(self.kinds.len());
        for &kind in &self.kinds {
            let fv = match kind {
                FeatureKind::Liwc => liwc_features(window, self.lexicon),
                FeatureKind::Time => time_features(window)?,
                FeatureKind::Frequency => frequency_features(window, history),
                FeatureKind::Style => style_features(window, history),
                FeatureKind::Graph => {
                    let distances = self.distances.ok_or_else(|| {
                        Error::invalid("graph features requested without a distance matrix")
                    })?;
                    graph_features(&window.partner_id, distances)
                }
                FeatureKind::Attributes => {
                    let profiles = self.profiles.ok_or_else(|| {
                        Error::invalid("attribute features requested without profiles")
                    })?;
                    let target = self.target.ok_or_else(|| {
                        Error::invalid("attribute features requested without a target attribute")
                    })?;
                    let profile = profiles
                        .get(&window.partner_id)
                        .ok_or_else(|| Error::Unannotated(window.partner_id.to_string()))?;
                    attribute_features(profile, target)
                }
            };
            fv.assert_finite()?;
            out.push(fv);
        }
        Ok(out)
    }
}

/// Features of one window, as stored in the per-fold cache.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowFeatures {
    pub partner_id: SpeakerId,
    pub window_index: usize,
    pub vectors: Vec<FeatureVector>,
}

const CACHE_HEADER: &str = "#dialogscope-features v1";

/// Write a feature cache (see module docs for the layout).
pub fn write_feature_cache<W: Write>(entries: &[WindowFeatures], mut w: W) -> Result<()> {
    writeln!(w, "{CACHE_HEADER}")?;
    let mut dims: BTreeMap<FeatureKind, usize> = BTreeMap::new();
    for e in entries {
        for fv in &e.vectors {
            dims.entry(fv.kind).or_insert(fv.dim());
        }
    }
    let dim_fields: Vec<String> = dims.iter().map(|(k, d)| format!("{k}={d}")).collect();
    writeln!(w, "dims\t{}", dim_fields.join("\t"))?;
    for e in entries {
        for fv in &e.vectors {
            let joined = fv
                .values
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",");
            writeln!(
                w,
                "window\t{}\t{}\t{}\t{joined}",
                e.partner_id, e.window_index, fv.kind
            )?;
        }
    }
    Ok(())
}

pub fn write_feature_cache_file(entries: &[WindowFeatures], path: impl AsRef<Path>) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_feature_cache(entries, std::io::BufWriter::new(f))
}

/// Read a feature cache, validating declared dimensions.
pub fn read_feature_cache<R: BufRead>(reader: R, path: &str) -> Result<Vec<WindowFeatures>> {
    let mut lines = reader.lines().enumerate();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty cache file"))?
        .1?;
    if header.trim_end() != CACHE_HEADER {
        return Err(Error::parse(path, 1, format!("expected {CACHE_HEADER:?}")));
    }
    let mut dims: BTreeMap<FeatureKind, usize> = BTreeMap::new();
    let mut out: Vec<WindowFeatures> = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        match fields[0] {
            "dims" => {
                for field in &fields[1..] {
                    let (kind, dim) = field
                        .split_once('=')
                        .ok_or_else(|| Error::parse(path, lineno, "bad dims field"))?;
                    let kind = FeatureKind::parse(kind)
                        .ok_or_else(|| Error::parse(path, lineno, "unknown feature kind"))?;
                    let dim: usize = dim
                        .parse()
                        .map_err(|_| Error::parse(path, lineno, "bad dimension"))?;
                    dims.insert(kind, dim);
                }
            }
            "window" => {
                if fields.len() != 5 {
                    return Err(Error::parse(path, lineno, "expected 5 fields"));
                }
                let partner = SpeakerId::new(fields[1]);
                let window_index: usize = fields[2]
                    .parse()
                    .map_err(|_| Error::parse(path, lineno, "bad window index"))?;
                let kind = FeatureKind::parse(fields[3])
                    .ok_or_else(|| Error::parse(path, lineno, "unknown feature kind"))?;
                let values: Vec<f64> = if fields[4].is_empty() {
                    Vec::new()
                } else {
                    fields[4]
                        .split(',')
                        .map(|v| {
                            v.parse::<f64>().map_err(|_| {
                                Error::parse(path, lineno, format!("bad float {v:?}"))
                            })
                        })
                        .collect::<Result<_>>()?
                };
                if let Some(&d) = dims.get(&kind) {
                    if values.len() != d {
                        return Err(Error::parse(
                            path,
                            lineno,
                            format!("{kind} vector has {} values, header says {d}", values.len()),
                        ));
                    }
                }
                let fv = FeatureVector { kind, values };
                match out.last_mut() {
                    Some(last)
                        if last.partner_id == partner && last.window_index == window_index =>
                    {
                        last.vectors.push(fv)
                    }
                    _ => out.push(WindowFeatures {
                        partner_id: partner,
                        window_index,
                        vectors: vec![fv],
                    }),
                }
            }
            other => {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("unknown record {other:?}"),
                ));
            }
        }
    }
    Ok(out)
}

pub fn read_feature_cache_file(path: impl AsRef<Path>) -> Result<Vec<WindowFeatures>> {
    let f = std::fs::File::open(path.as_ref())?;
    read_feature_cache(BufReader::new(f), &path.as_ref().display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_windows, Message, Platform, AUTHOR_ID};
    use crate::graph::{build_mention_graph, edge_weights, shortest_paths, AliasTable, WeightMode};

    fn msg(sender: &str, ts: i64, text: &str) -> Message {
        Message {
            speaker_id: SpeakerId::new(sender),
            is_author: sender == AUTHOR_ID,
            timestamp: ts,
            text: text.into(),
            platform: Platform::Other,
        }
    }

    fn window_at(messages: Vec<Message>, start: usize) -> ContextWindow {
        ContextWindow {
            partner_id: SpeakerId::new("pat"),
            messages,
            window_index: 0,
            start,
        }
    }

    fn tiny_lexicon() -> CategoryLexicon {
        CategoryLexicon::parse("%\n1\tposemo\n2\tnegemo\n%\nhapp*\t1\nsad\t2\n", "t.dic").unwrap()
    }

    #[test]
    fn liwc_identical_sides_cosine_one_sum_double() {
        let lex = tiny_lexicon();
        let w = window_at(
            vec![msg(AUTHOR_ID, 10, "happy sad"), msg("pat", 20, "happy sad")],
            0,
        );
        let fv = liwc_features(&w, &lex);
        assert_eq!(fv.dim(), 3 * 2 + 1);
        let (author, rest) = fv.values.split_at(2);
        let (partner, rest) = rest.split_at(2);
        let (cosine, sum) = (rest[0], &rest[1..]);
        assert_eq!(author, partner);
        assert!((cosine - 1.0).abs() < 1e-12);
        for (s, a) in sum.iter().zip(author) {
            assert!((s - 2.0 * a).abs() < 1e-12);
        }
    }

    #[test]
    fn liwc_silent_partner_gives_zero_vector_and_zero_cosine() {
        let lex = tiny_lexicon();
        let w = window_at(
            vec![msg(AUTHOR_ID, 10, "happy"), msg(AUTHOR_ID, 20, "sad")],
            0,
        );
        let fv = liwc_features(&w, &lex);
        let partner = &fv.values[2..4];
        assert_eq!(partner, &[0.0, 0.0]);
        assert_eq!(fv.values[4], 0.0); // cosine against the zero vector
    }

    #[test]
    fn liwc_dim_is_3c_plus_1_for_73_categories() {
        let mut text = String::from("%\n");
        for i in 1..=73 {
            text.push_str(&format!("{i}\tcat{i}\n"));
        }
        text.push_str("%\nword\t1\n");
        let lex = CategoryLexicon::parse(&text, "g.dic").unwrap();
        let w = window_at(vec![msg(AUTHOR_ID, 10, "word")], 0);
        assert_eq!(liwc_features(&w, &lex).dim(), 220);
    }

    #[test]
    fn time_features_match_sample_window_timestamps() {
        // 15:45:06 .. 15:45:52 on 2019-07-04 UTC
        let base = Utc
            .with_ymd_and_hms(2019, 7, 4, 15, 45, 6)
            .unwrap()
            .timestamp();
        let offsets = [0, 14, 19, 23, 46];
        let messages: Vec<Message> = offsets
            .iter()
            .enumerate()
            .map(|(i, o)| msg(if i % 2 == 1 { AUTHOR_ID } else { "pat" }, base + o, "x"))
            .collect();
        let w = window_at(messages, 0);
        let fv = time_features(&w).unwrap();
        assert_eq!(fv.dim(), 5 + 19);
        assert_eq!(fv.values[0], 46.0);
        assert_eq!(&fv.values[1..5], &[14.0, 5.0, 4.0, 23.0]);
        // day 4/31
        assert!((fv.values[5] - 4.0 / 31.0).abs() < 1e-12);
        // July one-hot
        let month = &fv.values[6..18];
        assert_eq!(month[6], 1.0);
        assert_eq!(month.iter().sum::<f64>(), 1.0);
        // year scaled
        assert!((fv.values[18] - 49.0 / 100.0).abs() < 1e-12);
        // summer slot
        let season = &fv.values[19..23];
        assert_eq!(season, &[0.0, 0.0, 1.0, 0.0]);
        // hour 15/23
        assert!((fv.values[23] - 15.0 / 23.0).abs() < 1e-12);
    }

    #[test]
    fn time_features_degenerate_same_second() {
        let messages: Vec<Message> = (0..5).map(|i| msg("pat", 1000, &format!("m{i}"))).collect();
        let w = window_at(messages, 0);
        let fv = time_features(&w).unwrap();
        assert_eq!(fv.values[0], 0.0);
        assert_eq!(&fv.values[1..5], &[0.0; 4]);
    }

    #[test]
    fn time_features_reject_non_monotone() {
        let mut messages: Vec<Message> = (0..5).map(|i| msg("pat", 100 + i, "x")).collect();
        messages[2].timestamp = 50;
        let w = window_at(messages, 0);
        assert!(time_features(&w).is_err());
    }

    #[test]
    fn season_mapping_covers_all_months() {
        let expected = [0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3, 0];
        for (month0, want) in expected.iter().enumerate() {
            assert_eq!(season_slot(month0 as u32), *want, "month0={month0}");
        }
    }

    #[test]
    fn frequency_features_count_history_buckets() {
        let start = 100 * 86_400;
        let history = vec![
            msg("pat", start - 40 * 86_400, "old"),       // all-time only
            msg(AUTHOR_ID, start - 10 * 86_400, "month"), // 30d
            msg("pat", start - 3 * 86_400, "week"),       // 7d + 30d
            msg(AUTHOR_ID, start - 3_600, "today"),       // 24h + 7d + 30d
        ];
        let messages = vec![
            msg("pat", start, "a"),
            msg(AUTHOR_ID, start + 10, "b"),
            msg("pat", start + 20, "c"),
            msg("pat", start + 30, "d"),
            msg(AUTHOR_ID, start + 40, "e"),
        ];
        let w = window_at(messages, 4);
        let fv = frequency_features(&w, &history);
        assert_eq!(fv.dim(), 4 + 5);
        assert!((fv.values[0] - 1f64.ln_1p()).abs() < 1e-12);
        assert!((fv.values[1] - 2f64.ln_1p()).abs() < 1e-12);
        assert!((fv.values[2] - 3f64.ln_1p()).abs() < 1e-12);
        assert!((fv.values[3] - 4f64.ln_1p()).abs() < 1e-12);
        // turn sequence P,A,P,P,A -> indicators 0,1,0,0,1
        assert_eq!(&fv.values[4..], &[0.0, 1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn frequency_features_first_window_all_zero_counts() {
        let messages: Vec<Message> = (0..5).map(|i| msg("pat", 100 + i, "x")).collect();
        let w = window_at(messages, 0);
        let fv = frequency_features(&w, &[]);
        assert_eq!(&fv.values[..4], &[0.0; 4]);
    }

    #[test]
    fn frequency_count_matches_hand_count_log1p() {
        let start = 10 * 86_400;
        let history: Vec<Message> = (0..10)
            .map(|i| msg("pat", start - 3600 * (i + 1), "hi"))
            .collect();
        let messages: Vec<Message> = (0..5).map(|i| msg("pat", start + i, "x")).collect();
        let w = window_at(messages, 10);
        let fv = frequency_features(&w, &history);
        assert!((fv.values[0] - 10f64.ln_1p()).abs() < 1e-12);
    }

    #[test]
    fn style_features_no_history_identical_language() {
        let w = window_at(
            vec![
                msg(AUTHOR_ID, 10, "i am the happy one"),
                msg("pat", 20, "i am the happy one"),
            ],
            0,
        );
        let fv = style_features(&w, &[]);
        assert!(fv.values[0] > 1.0 - 9.0 * crate::lexicon::LSM_EPSILON);
        // empty history scores 1.0, identical window language keeps it there
        assert!(fv.values[1].abs() < 1e-9);
    }

    #[test]
    fn style_features_identical_history_profiles_score_one() {
        let history = vec![
            msg(AUTHOR_ID, 1, "i like the sea"),
            msg("pat", 2, "i like the sky"),
        ];
        let messages: Vec<Message> = (0..5).map(|i| msg("pat", 100 + i, "zzz")).collect();
        let w = window_at(messages, 2);
        let fv = style_features(&w, &history);
        assert!(fv.values[0] > 0.99);
    }

    #[test]
    fn style_uses_only_last_hundred_messages() {
        // 120 history messages; the first 20 are wildly different in style
        let mut history = Vec::new();
        for i in 0..20 {
            history.push(msg(AUTHOR_ID, i, "the the the the the"));
        }
        for i in 20..120 {
            let sender = if i % 2 == 0 { AUTHOR_ID } else { "pat" };
            history.push(msg(sender, i, "i will not go there soon"));
        }
        let messages: Vec<Message> = (0..5).map(|i| msg("pat", 200 + i, "ok then")).collect();
        let w = window_at(messages, 120);
        let fv = style_features(&w, &history);
        // brute-force recomputation over exactly the last 100
        let tail = &history[20..];
        let expect = lsm_over(tail);
        assert!((fv.values[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn graph_features_pass_through_distance_rows() {
        let corpus = vec![Conversation::new(
            SpeakerId::new("alice"),
            vec![
                msg("alice", 10, "talked to bob"),
                msg(AUTHOR_ID, 20, "bob again"),
            ],
        )
        .unwrap()];
        let ids = vec![
            SpeakerId::new("alice"),
            SpeakerId::new("bob"),
            SpeakerId::author(),
        ];
        let aliases = AliasTable::from_speakers(&ids);
        let g = build_mention_graph(&corpus, &aliases);
        let d = shortest_paths(&edge_weights(&g, WeightMode::Inverted)).unwrap();
        let fv = graph_features(&SpeakerId::new("alice"), &d);
        assert_eq!(fv.dim(), d.nodes.len());
        let row_idx = d.node_index(&SpeakerId::new("alice")).unwrap();
        assert_eq!(fv.values, d.dist[row_idx]);

        let absent = graph_features(&SpeakerId::new("nobody"), &d);
        assert!(absent.values.iter().all(|&v| v == d.sentinel));
    }

    fn full_profile() -> AttributeProfile {
        AttributeProfile {
            family: true,
            romantic: false,
            relative_age: RelativeAge::Younger,
            childhood_same_country: true,
            gender_same: false,
            school: true,
            work: false,
        }
    }

    #[test]
    fn attribute_features_exclude_target_and_one_hot_age() {
        let fv = attribute_features(&full_profile(), Attribute::Family);
        // [romantic, age x3, childhood, gender, school, work]
        assert_eq!(fv.values, vec![0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        assert_eq!(fv.dim(), 8);
    }

    #[test]
    fn attribute_features_age_target_gives_six_bits() {
        let fv = attribute_features(&full_profile(), Attribute::RelativeAge);
        assert_eq!(fv.values, vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        assert_eq!(fv.dim(), 6);
    }

    #[test]
    fn normalizer_z_scores_and_floors_sigma() {
        let n = Normalizer::fit(&[vec![0.0, 5.0], vec![2.0, 5.0]]).unwrap();
        assert_eq!(n.apply(&[0.0, 5.0]), vec![-1.0, 0.0]);
        assert_eq!(n.apply(&[2.0, 5.0]), vec![1.0, 0.0]);
        // constant dimension: sigma floored, huge inputs clamp at +-6
        assert_eq!(n.apply(&[1.0, 9.0])[1], NORMALIZER_CLAMP);
        assert!(Normalizer::fit(&[vec![1.0]]).is_err());
    }

    #[test]
    fn normalizer_matches_hand_computed_z_scores() {
        // dimension 0: values 1,3,5 -> mean 3, population sigma sqrt(8/3)
        let n = Normalizer::fit(&[vec![1.0], vec![3.0], vec![5.0]]).unwrap();
        let sigma = (8.0f64 / 3.0).sqrt();
        let z = n.apply(&[5.0]);
        assert!((z[0] - 2.0 / sigma).abs() < 1e-12);
    }

    fn simple_conv(n: usize) -> Conversation {
        let messages: Vec<Message> = (0..n)
            .map(|i| {
                let sender = if i % 2 == 0 { "pat" } else { AUTHOR_ID };
                msg(sender, 1000 + (i as i64) * 60, "we are happy here")
            })
            .collect();
        Conversation::new(SpeakerId::new("pat"), messages).unwrap()
    }

    #[test]
    fn extractor_covers_enabled_kinds_and_stays_finite() {
        let conv = simple_conv(12);
        let windows = build_windows(&conv, 5, 1).unwrap();
        let lex = tiny_lexicon();
        let mut profiles = BTreeMap::new();
        profiles.insert(SpeakerId::new("pat"), full_profile());
        let aliases = AliasTable::from_speakers(&[SpeakerId::new("pat"), SpeakerId::author()]);
        let g = build_mention_graph(std::slice::from_ref(&conv), &aliases);
        let d = shortest_paths(&edge_weights(&g, WeightMode::Inverted)).unwrap();
        let extractor = FeatureExtractor {
            lexicon: &lex,
            distances: Some(&d),
            profiles: Some(&profiles),
            target: Some(Attribute::Work),
            kinds: FEATURE_KINDS.to_vec(),
        };
        let vectors = extractor.extract(&conv, &windows[3]).unwrap();
        assert_eq!(vectors.len(), 6);
        for fv in &vectors {
            assert!(fv.values.iter().all(|v| v.is_finite()));
        }
        // dims constant across windows
        let again = extractor.extract(&conv, &windows[5]).unwrap();
        for (a, b) in vectors.iter().zip(&again) {
            assert_eq!(a.dim(), b.dim());
        }
    }

    #[test]
    fn future_messages_never_change_a_window_vector() {
        let lex = tiny_lexicon();
        let extractor = FeatureExtractor {
            lexicon: &lex,
            distances: None,
            profiles: None,
            target: None,
            kinds: vec![
                FeatureKind::Liwc,
                FeatureKind::Time,
                FeatureKind::Frequency,
                FeatureKind::Style,
            ],
        };
        let conv = simple_conv(20);
        let windows = build_windows(&conv, 5, 1).unwrap();
        let w = &windows[4]; // start 4, covers 4..9
        let baseline = extractor.extract(&conv, w).unwrap();

        let mut perturbed = conv.clone();
        for m in &mut perturbed.messages[9..] {
            m.text = "completely different future text !!".into();
            m.timestamp += 7;
        }
        let after = extractor.extract(&perturbed, w).unwrap();
        assert_eq!(baseline, after);
    }

    #[test]
    fn cache_round_trips_bit_for_bit() {
        let entries = vec![
            WindowFeatures {
                partner_id: SpeakerId::new("pat"),
                window_index: 0,
                vectors: vec![
                    FeatureVector {
                        kind: FeatureKind::Style,
                        values: vec![0.123456789012345, -6.0],
                    },
                    FeatureVector {
                        kind: FeatureKind::Time,
                        values: vec![46.0, 1.0 / 3.0],
                    },
                ],
            },
            WindowFeatures {
                partner_id: SpeakerId::new("pat"),
                window_index: 1,
                vectors: vec![FeatureVector {
                    kind: FeatureKind::Style,
                    values: vec![f64::MIN_POSITIVE, 1e300],
                }],
            },
        ];
        let mut buf = Vec::new();
        write_feature_cache(&entries, &mut buf).unwrap();
        let back = read_feature_cache(std::io::Cursor::new(&buf), "mem").unwrap();
        assert_eq!(back, entries);
    }

    #[test]
    fn cache_rejects_dimension_mismatch() {
        let text = "#dialogscope-features v1\ndims\tstyle=2\nwindow\tpat\t0\tstyle\t1.0\n";
        let err = read_feature_cache(std::io::Cursor::new(text), "mem").unwrap_err();
        assert!(err.to_string().contains("header says 2"));
    }

    #[test]
    fn normalizer_set_fits_per_kind_and_rejects_unknown() {
        let training = vec![
            vec![FeatureVector {
                kind: FeatureKind::Style,
                values: vec![0.0, 1.0],
            }],
            vec![FeatureVector {
                kind: FeatureKind::Style,
                values: vec![2.0, 3.0],
            }],
        ];
        let set = NormalizerSet::fit(&training).unwrap();
        let normalized = set
            .apply(&[FeatureVector {
                kind: FeatureKind::Style,
                values: vec![0.0, 1.0],
            }])
            .unwrap();
        assert_eq!(normalized[0].values, vec![-1.0, -1.0]);
        assert!(set
            .apply(&[FeatureVector {
                kind: FeatureKind::Time,
                values: vec![0.0],
            }])
            .is_err());
    }
}
