//! Pre-trained word-vector tables and context-window token encoding.
//!
//! Embedding files are whitespace-separated text: one token followed by its
//! vector components per line (the common GloVe layout); the dimension is
//! auto-detected from the first line. Only tokens in the vocabulary filter
//! are kept, bounding memory on large tables.
//!
//! A window is encoded as the concatenation of its messages' tokens, with
//! one marker entry opening each author utterance and a different marker
//! opening any other speaker's utterance. Marker vectors are small
//! deterministic random vectors derived from the run seed; the
//! out-of-vocabulary vector is all zeros.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::ContextWindow;
use crate::error::{Error, Result};

/// Hard cap on encoded sequence length; longer windows are tail-truncated.
pub const DEFAULT_SEQUENCE_CAP: usize = 256;

/// One entry of an encoded token sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TokenRef {
    /// Marker opening an author utterance.
    AuthorMarker,
    /// Marker opening any other speaker's utterance.
    OtherMarker,
    /// In-vocabulary token (index into the table).
    Word(usize),
    Unknown,
}

/// Token-to-vector table with marker and unknown vectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingTable {
    dim: usize,
    tokens: Vec<String>,
    vectors: Vec<Vec<f64>>,
    index: HashMap<String, usize>,
    author_marker: Vec<f64>,
    other_marker: Vec<f64>,
    unknown: Vec<f64>,
}

/// Result of loading a table against a corpus vocabulary.
#[derive(Debug, Clone, Serialize)]
pub struct CoverageReport {
    /// Covered corpus token occurrences over all corpus token occurrences.
    pub coverage_rate: f64,
    pub covered_tokens: u64,
    pub total_tokens: u64,
    pub table_entries: usize,
}

fn marker_vectors(dim: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d61726b); // marker stream
    let mut draw = |_: usize| -> Vec<f64> { (0..dim).map(|_| rng.random_range(-0.1..0.1)).collect() };
    (draw(0), draw(1))
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn author_marker(&self) -> &[f64] {
        &self.author_marker
    }

    pub fn other_marker(&self) -> &[f64] {
        &self.other_marker
    }

    /// Build a table from in-memory (token, vector) pairs.
    pub fn from_entries(entries: Vec<(String, Vec<f64>)>, seed: u64) -> Result<Self> {
        let dim = entries
            .first()
            .map(|(_, v)| v.len())
            .ok_or_else(|| Error::invalid("embedding table has no entries"))?;
        let mut tokens = Vec::with_capacity(entries.len());
        let mut vectors = Vec::with_capacity(entries.len());
        let mut index = HashMap::with_capacity(entries.len());
        for (token, vector) in entries {
            if vector.len() != dim {
                return Err(Error::invalid(format!(
                    "embedding for {token:?} has dimension {}, expected {dim}",
                    vector.len()
                )));
            }
            if index.contains_key(&token) {
                continue;
            }
            index.insert(token.clone(), vectors.len());
            tokens.push(token);
            vectors.push(vector);
        }
        let (author_marker, other_marker) = marker_vectors(dim, seed);
        Ok(EmbeddingTable {
            dim,
            tokens,
            vectors,
            index,
            author_marker,
            other_marker,
            unknown: vec![0.0; dim],
        })
    }

    /// Load the table from a text file, keeping only tokens in `vocab`, and
    /// report the corpus coverage rate of the kept entries.
    ///
    /// `vocab` maps corpus tokens to their occurrence counts.
    pub fn load(
        path: impl AsRef<Path>,
        vocab: &HashMap<String, u64>,
        seed: u64,
    ) -> Result<(Self, CoverageReport)> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)?;
        let reader = BufReader::new(file);
        let display = path.display().to_string();

        let mut dim: Option<usize> = None;
        let mut entries: Vec<(String, Vec<f64>)> = Vec::new();
        let mut seen: HashSet<String> = HashSet::new();
        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let token = parts
                .next()
                .ok_or_else(|| Error::parse(&display, lineno, "empty line"))?;
            let values: Vec<f64> = parts
                .map(|p| {
                    p.parse::<f64>().map_err(|_| {
                        Error::parse(&display, lineno, format!("bad float {p:?}"))
                    })
                })
                .collect::<Result<_>>()?;
            match dim {
                None => {
                    if values.is_empty() {
                        return Err(Error::parse(&display, lineno, "no vector components"));
                    }
                    dim = Some(values.len());
                }
                Some(d) if values.len() != d => {
                    return Err(Error::parse(
                        &display,
                        lineno,
                        format!("dimension {} differs from detected {d}", values.len()),
                    ));
                }
                _ => {}
            }
            if vocab.contains_key(token) && seen.insert(token.to_string()) {
                entries.push((token.to_string(), values));
            }
        }
        let dim = dim.ok_or_else(|| Error::invalid(format!("{display}: empty embedding file")))?;
        if entries.is_empty() {
            // keep the detected dimension even when nothing matched
            entries.push((String::from("\u{0}never-matches"), vec![0.0; dim]));
            let mut table = Self::from_entries(entries, seed)?;
            table.tokens.clear();
            table.vectors.clear();
            table.index.clear();
            let report = coverage(&table, vocab);
            return Ok((table, report));
        }
        let table = Self::from_entries(entries, seed)?;
        let report = coverage(&table, vocab);
        Ok((table, report))
    }

    /// Index of a token, if covered.
    pub fn lookup(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// The vector behind a [`TokenRef`].
    pub fn vector(&self, token: TokenRef) -> &[f64] {
        match token {
            TokenRef::AuthorMarker => &self.author_marker,
            TokenRef::OtherMarker => &self.other_marker,
            TokenRef::Word(i) => &self.vectors[i],
            TokenRef::Unknown => &self.unknown,
        }
    }

    /// Overwrite a marker vector (used when markers are trained).
    pub fn set_marker(&mut self, author: bool, vector: Vec<f64>) {
        assert_eq!(vector.len(), self.dim);
        if author {
            self.author_marker = vector;
        } else {
            self.other_marker = vector;
        }
    }
}

/// A table of deterministic random vectors over a fixed vocabulary, for
/// desk-scale experiments on synthetic corpora where no pre-trained
/// vectors exist. Tokens are sorted first, so the table depends only on
/// the vocabulary set, the dimension, and the seed.
pub fn synthetic_table(
    vocab: impl IntoIterator<Item = String>,
    dim: usize,
    seed: u64,
) -> Result<EmbeddingTable> {
    let mut tokens: Vec<String> = vocab.into_iter().collect();
    tokens.sort();
    tokens.dedup();
    if tokens.is_empty() {
        return Err(Error::invalid("synthetic table needs a non-empty vocabulary"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x73796e74); // synth stream
    let entries = tokens
        .into_iter()
        .map(|t| {
            let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-0.5..0.5)).collect();
            (t, v)
        })
        .collect();
    EmbeddingTable::from_entries(entries, seed)
}

/// Write a table in the text format [`EmbeddingTable::load`] reads.
pub fn write_table_text<W: std::io::Write>(table: &EmbeddingTable, mut w: W) -> Result<()> {
    for (token, vector) in table.tokens.iter().zip(&table.vectors) {
        write!(w, "{token}")?;
        for v in vector {
            write!(w, " {v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

fn coverage(table: &EmbeddingTable, vocab: &HashMap<String, u64>) -> CoverageReport {
    let total: u64 = vocab.values().sum();
    let covered: u64 = vocab
        .iter()
        .filter(|(t, _)| table.lookup(t).is_some())
        .map(|(_, c)| *c)
        .sum();
    CoverageReport {
        coverage_rate: if total == 0 {
            0.0
        } else {
            covered as f64 / total as f64
        },
        covered_tokens: covered,
        total_tokens: total,
        table_entries: table.len(),
    }
}

/// Encode a window as a marker-prefixed token sequence:
/// `[marker, tokens...]` per message, concatenated in time order, truncated
/// at `cap` entries.
pub fn encode_window_refs(
    window: &ContextWindow,
    table: &EmbeddingTable,
    cap: usize,
) -> Result<Vec<TokenRef>> {
    if window.messages.is_empty() {
        return Err(Error::invalid("cannot encode an empty window"));
    }
    let mut refs = Vec::new();
    for message in &window.messages {
        refs.push(if message.is_author {
            TokenRef::AuthorMarker
        } else {
            TokenRef::OtherMarker
        });
        for token in message.tokens() {
            refs.push(match table.lookup(&token) {
                Some(i) => TokenRef::Word(i),
                None => TokenRef::Unknown,
            });
        }
    }
    if refs.len() > cap {
        log::debug!(
            "window {}:{} truncated from {} to {cap} tokens",
            window.partner_id,
            window.window_index,
            refs.len()
        );
        refs.truncate(cap);
    }
    Ok(refs)
}

/// Encode a window as an n-by-d matrix of embedding vectors.
pub fn encode_window_tokens(
    window: &ContextWindow,
    table: &EmbeddingTable,
    cap: usize,
) -> Result<Vec<Vec<f64>>> {
    let refs = encode_window_refs(window, table, cap)?;
    Ok(refs.iter().map(|r| table.vector(*r).to_vec()).collect())
}
