//! Category lexicon engine: LIWC-style matching, normalized counts,
//! dominance ranking, and linguistic style matching (LSM).
//!
//! # Lexicon file format
//!
//! A `%`-delimited header lists category ids and names; body lines map a
//! pattern to one or more category ids:
//!
//! ```text
//! %
//! 1<TAB>posemo
//! 2<TAB>negemo
//! %
//! happ*<TAB>1
//! sad<TAB>2
//! grim<TAB>2,1
//! ```
//!
//! Patterns are literal tokens or prefix patterns ending in exactly one
//! `*` ("happ*" matches "happy" and "happier"). A token may hit several
//! categories but counts at most once per category. Duplicate
//! pattern+category pairs collapse.
//!
//! The crate ships a small open stand-in dictionary
//! ([`CategoryLexicon::standin`]) with conventional psycholinguistic
//! category names; a real 73-category dictionary file in the same layout
//! can be dropped in instead.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;

use once_cell::sync::Lazy;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smoothing for per-category LSM terms.
pub const LSM_EPSILON: f64 = 1e-4;

/// Default smoothing for dominance scores.
pub const DOMINANCE_EPSILON: f64 = 1e-6;

/// A named word category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub id: String,
    pub name: String,
}

/// Pattern-to-category lexicon with literal and prefix entries.
#[derive(Debug, Clone, Default)]
pub struct CategoryLexicon {
    categories: Vec<Category>,
    literals: HashMap<String, Vec<usize>>,
    prefixes: HashMap<String, Vec<usize>>,
    max_prefix_len: usize,
}

impl CategoryLexicon {
    /// Number of categories.
    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    pub fn category_index(&self, name: &str) -> Option<usize> {
        self.categories.iter().position(|c| c.name == name)
    }

    /// All literal and prefix patterns, for inspection and tests.
    pub fn pattern_count(&self) -> usize {
        self.literals.len() + self.prefixes.len()
    }

    /// Words of one category (literals plus prefix stems), mainly for
    /// generating category-biased synthetic text.
    pub fn category_words(&self, index: usize) -> Vec<String> {
        let mut words = BTreeSet::new();
        for (token, cats) in &self.literals {
            if cats.contains(&index) {
                words.insert(token.clone());
            }
        }
        for (stem, cats) in &self.prefixes {
            if cats.contains(&index) {
                words.insert(stem.clone());
            }
        }
        words.into_iter().collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::parse(&text, &path.as_ref().display().to_string())
    }

    pub fn parse(text: &str, path: &str) -> Result<Self> {
        let mut categories: Vec<Category> = Vec::new();
        let mut id_to_index: HashMap<String, usize> = HashMap::new();
        let mut literals: HashMap<String, Vec<usize>> = HashMap::new();
        let mut prefixes: HashMap<String, Vec<usize>> = HashMap::new();

        let mut delim_seen = 0u8;
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.trim_end();
            if line.is_empty() {
                continue;
            }
            if line == "%" {
                delim_seen += 1;
                if delim_seen > 2 {
                    return Err(Error::parse(path, lineno, "unexpected third '%' delimiter"));
                }
                continue;
            }
            match delim_seen {
                0 => {
                    return Err(Error::parse(
                        path,
                        lineno,
                        "expected '%' to open the category header",
                    ))
                }
                1 => {
                    let (id, name) = line.split_once('\t').ok_or_else(|| {
                        Error::parse(path, lineno, "header line must be id<TAB>name")
                    })?;
                    let id = id.trim();
                    let name = name.trim();
                    if id.is_empty() || name.is_empty() {
                        return Err(Error::parse(path, lineno, "empty category id or name"));
                    }
                    if id_to_index.contains_key(id) {
                        return Err(Error::parse(
                            path,
                            lineno,
                            format!("duplicate category id {id:?}"),
                        ));
                    }
                    id_to_index.insert(id.to_string(), categories.len());
                    categories.push(Category {
                        id: id.to_string(),
                        name: name.to_string(),
                    });
                }
                _ => {
                    let (pattern, ids) = line.split_once('\t').ok_or_else(|| {
                        Error::parse(
                            path,
                            lineno,
                            "body line must be pattern<TAB>cat_id[,cat_id...]",
                        )
                    })?;
                    let pattern = pattern.trim();
                    if pattern.is_empty() {
                        return Err(Error::parse(path, lineno, "empty pattern"));
                    }
                    let star_count = pattern.matches('*').count();
                    let is_prefix = pattern.ends_with('*');
                    if star_count > 1 || (star_count == 1 && !is_prefix) {
                        return Err(Error::parse(
                            path,
                            lineno,
                            format!("pattern {pattern:?}: '*' is only allowed once, at the end"),
                        ));
                    }
                    if is_prefix && pattern.len() == 1 {
                        return Err(Error::parse(path, lineno, "bare '*' pattern is not allowed"));
                    }
                    let mut cat_indices = Vec::new();
                    for id in ids.split(',') {
                        let id = id.trim();
                        let index = *id_to_index.get(id).ok_or_else(|| {
                            Error::parse(path, lineno, format!("unknown category id {id:?}"))
                        })?;
                        cat_indices.push(index);
                    }
                    let key = if is_prefix {
                        pattern[..pattern.len() - 1].to_string()
                    } else {
                        pattern.to_string()
                    };
                    let slot = if is_prefix {
                        prefixes.entry(key).or_default()
                    } else {
                        literals.entry(key).or_default()
                    };
                    for index in cat_indices {
                        if !slot.contains(&index) {
                            slot.push(index);
                        }
                    }
                }
            }
        }
        if categories.is_empty() {
            return Err(Error::invalid(format!(
                "{path}: lexicon defines no categories"
            )));
        }
        let max_prefix_len = prefixes.keys().map(|s| s.chars().count()).max().unwrap_or(0);
        Ok(CategoryLexicon {
            categories,
            literals,
            prefixes,
            max_prefix_len,
        })
    }

    /// The bundled open stand-in dictionary.
    pub fn standin() -> &'static CategoryLexicon {
        static STANDIN: Lazy<CategoryLexicon> = Lazy::new(|| {
            CategoryLexicon::parse(include_str!("../assets/standin.dic"), "standin.dic")
                .expect("bundled lexicon parses")
        });
        &STANDIN
    }

    /// Category indices the token hits, deduplicated, in ascending order.
    pub fn matches(&self, token: &str) -> Vec<usize> {
        let mut hits: Vec<usize> = Vec::new();
        if let Some(cats) = self.literals.get(token) {
            hits.extend_from_slice(cats);
        }
        // prefix stems checked per char boundary up to the longest stem
        let mut checked = 0usize;
        for (byte_idx, _) in token.char_indices().skip(1) {
            checked += 1;
            if checked > self.max_prefix_len {
                break;
            }
            if let Some(cats) = self.prefixes.get(&token[..byte_idx]) {
                hits.extend_from_slice(cats);
            }
        }
        if token.chars().count() <= self.max_prefix_len {
            if let Some(cats) = self.prefixes.get(token) {
                hits.extend_from_slice(cats);
            }
        }
        hits.sort_unstable();
        hits.dedup();
        hits
    }
}

/// Per-category normalized counts: hits divided by total tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryVector {
    pub values: Vec<f64>,
}

impl CategoryVector {
    pub fn zeros(dim: usize) -> Self {
        CategoryVector {
            values: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    /// Cosine similarity; zero vectors compare as 0.
    pub fn cosine(&self, other: &CategoryVector) -> f64 {
        let dot: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum();
        let na: f64 = self.values.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nb: f64 = other.values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na * nb)
        }
    }

    pub fn elementwise_sum(&self, other: &CategoryVector) -> CategoryVector {
        CategoryVector {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

/// Count category hits over `tokens`, normalized by the token count.
/// An empty token list yields the zero vector.
pub fn category_counts<S: AsRef<str>>(tokens: &[S], lexicon: &CategoryLexicon) -> CategoryVector {
    let mut counts = vec![0u64; lexicon.len()];
    for token in tokens {
        for cat in lexicon.matches(token.as_ref()) {
            counts[cat] += 1;
        }
    }
    let total = tokens.len();
    CategoryVector {
        values: counts
            .iter()
            .map(|&c| {
                if total == 0 {
                    0.0
                } else {
                    c as f64 / total as f64
                }
            })
            .collect(),
    }
}

/// One category's dominance of a group over its complement.
#[derive(Debug, Clone, Serialize)]
pub struct DominanceEntry {
    pub category: String,
    pub score: f64,
    pub group_coverage: f64,
    pub complement_coverage: f64,
}

/// Rank categories by how much more a group uses them than its complement:
/// `score(c) = (coverage_group(c) + eps) / (coverage_complement(c) + eps)`,
/// sorted descending. Ties keep lexicon category order.
pub fn dominance<S: AsRef<str>>(
    group_tokens: &[S],
    complement_tokens: &[S],
    lexicon: &CategoryLexicon,
    epsilon: f64,
) -> Result<Vec<DominanceEntry>> {
    if group_tokens.is_empty() || complement_tokens.is_empty() {
        return Err(Error::invalid(
            "dominance requires non-empty token collections on both sides",
        ));
    }
    let group = category_counts(group_tokens, lexicon);
    let complement = category_counts(complement_tokens, lexicon);
    let mut entries: Vec<DominanceEntry> = lexicon
        .categories()
        .iter()
        .enumerate()
        .map(|(i, cat)| DominanceEntry {
            category: cat.name.clone(),
            score: (group.values[i] + epsilon) / (complement.values[i] + epsilon),
            group_coverage: group.values[i],
            complement_coverage: complement.values[i],
        })
        .collect();
    entries.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(entries)
}

/// The nine LSM function-word categories, in profile order.
pub const FUNCTION_WORD_CATEGORIES: [&str; 9] = [
    "personal_pronouns",
    "impersonal_pronouns",
    "articles",
    "conjunctions",
    "prepositions",
    "auxiliary_verbs",
    "adverbs",
    "negations",
    "quantifiers",
];

static FUNCTION_WORDS: Lazy<[HashSet<&'static str>; 9]> = Lazy::new(|| {
    const PERSONAL: &[&str] = &[
        "i", "me", "my", "mine", "myself", "we", "us", "our", "ours", "ourselves", "you", "your",
        "yours", "yourself", "yourselves", "he", "him", "his", "himself", "she", "her", "hers",
        "herself", "they", "them", "their", "theirs", "themselves", "i'm", "i've", "i'll", "i'd",
        "you're", "you've", "you'll", "you'd", "he's", "she's", "we're", "we've", "we'll",
        "they're", "they've", "they'll", "u", "ur", "ya",
    ];
    const IMPERSONAL: &[&str] = &[
        "it", "its", "itself", "that", "this", "these", "those", "what", "which", "who", "whom",
        "whose", "something", "anything", "nothing", "everything", "somebody", "anybody",
        "nobody", "everybody", "someone", "anyone", "everyone", "one", "it's", "that's",
        "whatever", "stuff",
    ];
    const ARTICLES: &[&str] = &["a", "an", "the"];
    const CONJUNCTIONS: &[&str] = &[
        "and", "but", "or", "nor", "so", "yet", "because", "although", "though", "while",
        "whereas", "if", "unless", "until", "since", "when", "whenever", "whether", "also",
        "plus", "however", "than", "as",
    ];
    const PREPOSITIONS: &[&str] = &[
        "about", "above", "across", "after", "against", "along", "among", "around", "at",
        "before", "behind", "below", "beneath", "beside", "between", "beyond", "by", "despite",
        "down", "during", "except", "from", "in", "inside", "into", "near", "of", "off", "on",
        "onto", "out", "outside", "over", "past", "through", "throughout", "to", "toward",
        "towards", "under", "up", "upon", "with", "within", "without",
    ];
    const AUXILIARY: &[&str] = &[
        "am", "is", "are", "was", "were", "be", "been", "being", "have", "has", "had", "having",
        "do", "does", "did", "doing", "will", "would", "shall", "should", "can", "could", "may",
        "might", "must", "ought", "don't", "doesn't", "didn't", "won't", "wouldn't", "can't",
        "couldn't", "shouldn't", "isn't", "aren't", "wasn't", "weren't", "haven't", "hasn't",
        "ain't", "gonna", "gotta", "wanna",
    ];
    const ADVERBS: &[&str] = &[
        "very", "really", "just", "now", "then", "there", "here", "too", "also", "only", "even",
        "still", "again", "always", "never", "often", "sometimes", "soon", "already", "almost",
        "quite", "rather", "pretty", "maybe", "probably", "perhaps", "back", "well", "actually",
        "basically", "totally",
    ];
    const NEGATIONS: &[&str] = &[
        "no", "not", "never", "none", "nothing", "neither", "nor", "nobody", "can't", "don't",
        "won't", "isn't", "aren't", "wasn't", "weren't", "didn't", "doesn't", "couldn't",
        "shouldn't", "wouldn't", "cannot", "without", "nope", "nah",
    ];
    const QUANTIFIERS: &[&str] = &[
        "all", "any", "both", "each", "every", "few", "fewer", "less", "little", "lot", "lots",
        "many", "more", "most", "much", "several", "some", "plenty", "half", "couple", "bunch",
        "entire", "whole", "bit", "enough",
    ];
    [
        PERSONAL.iter().copied().collect(),
        IMPERSONAL.iter().copied().collect(),
        ARTICLES.iter().copied().collect(),
        CONJUNCTIONS.iter().copied().collect(),
        PREPOSITIONS.iter().copied().collect(),
        AUXILIARY.iter().copied().collect(),
        ADVERBS.iter().copied().collect(),
        NEGATIONS.iter().copied().collect(),
        QUANTIFIERS.iter().copied().collect(),
    ]
});

/// Usage rates of the nine LSM function-word categories over a token list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionWordProfile {
    pub rates: [f64; 9],
}

impl FunctionWordProfile {
    pub fn zeros() -> Self {
        FunctionWordProfile { rates: [0.0; 9] }
    }

    pub fn from_tokens<S: AsRef<str>>(tokens: &[S]) -> Self {
        let mut counts = [0u64; 9];
        for token in tokens {
            let t = token.as_ref();
            for (i, set) in FUNCTION_WORDS.iter().enumerate() {
                if set.contains(t) {
                    counts[i] += 1;
                }
            }
        }
        let total = tokens.len() as f64;
        let mut rates = [0.0; 9];
        if total > 0.0 {
            for i in 0..9 {
                rates[i] = counts[i] as f64 / total;
            }
        }
        FunctionWordProfile { rates }
    }
}

/// Linguistic style matching between two function-word profiles: the mean
/// over the nine categories of `1 - |a - b| / (a + b + eps)`. Symmetric,
/// in [0, 1]; two all-zero profiles match perfectly (nothing to mismatch).
pub fn lsm(a: &FunctionWordProfile, b: &FunctionWordProfile) -> f64 {
    let mut total = 0.0;
    for i in 0..9 {
        let (pa, pb) = (a.rates[i], b.rates[i]);
        total += 1.0 - (pa - pb).abs() / (pa + pb + LSM_EPSILON);
    }
    total / 9.0
}
