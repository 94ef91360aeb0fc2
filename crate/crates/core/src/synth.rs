//! Synthetic annotated corpora with planted, measurable signals.
//!
//! Four signal families can be planted, each with a strength in [0, 1]:
//!
//! - vocabulary bias: each (attribute, value) pair has a planted word
//!   category from the stand-in lexicon; message tokens mix planted words
//!   in proportion to the strength
//! - hour-of-day bias: message hours mix a profile-conditioned
//!   distribution with a uniform base
//! - mention-community bias: partners mention other partners, mostly
//!   within communities defined by the (school, work) value pair
//! - style convergence: the partner's function-word rate drifts toward
//!   the author's over the conversation, faster at higher strength
//!
//! Every random decision consumes the same draws regardless of strength,
//! so corpora generated from one seed at different strengths are coupled:
//! raising a strength converts base draws into signal draws and never
//! reshuffles the rest. The monotonicity property tests rely on this.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotation::{AnnotationSet, Attribute, AttributeProfile, RelativeAge, ATTRIBUTES};
use crate::corpus::{Conversation, Message, Platform, SpeakerId};
use crate::error::{Error, Result};
use crate::graph::AliasTable;
use crate::lexicon::{category_counts, lsm, CategoryLexicon, FunctionWordProfile};

/// Generator parameters. `attribute_probs` gives per-value probabilities
/// in value-index order; values are allocated to speakers by largest
/// remainder, so probabilities derived from integer counts reproduce those
/// counts exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub speakers: usize,
    pub seed: u64,
    pub messages_min: usize,
    pub messages_max: usize,
    pub vocabulary_bias: f64,
    pub hour_bias: f64,
    pub mention_bias: f64,
    pub style_convergence: f64,
    pub attribute_probs: BTreeMap<Attribute, Vec<f64>>,
}

impl SynthSpec {
    /// Uniform value probabilities for every attribute.
    pub fn balanced(speakers: usize, seed: u64) -> Self {
        let attribute_probs = ATTRIBUTES
            .iter()
            .map(|a| {
                let k = a.cardinality();
                (*a, vec![1.0 / k as f64; k])
            })
            .collect();
        SynthSpec {
            speakers,
            seed,
            messages_min: 30,
            messages_max: 60,
            vocabulary_bias: 0.0,
            hour_bias: 0.0,
            mention_bias: 0.0,
            style_convergence: 0.0,
            attribute_probs,
        }
    }

    /// The published 104-speaker distribution, as integer counts per value:
    /// family 6/98, romantic 9/95, relative age 27/31/46, childhood country
    /// 81/23, gender 53/51, school 64/40, work 34/70.
    pub fn default_table2(seed: u64) -> Self {
        let counts: &[(Attribute, &[f64])] = &[
            (Attribute::Family, &[6.0, 98.0]),
            (Attribute::Romantic, &[9.0, 95.0]),
            (Attribute::RelativeAge, &[27.0, 31.0, 46.0]),
            (Attribute::ChildhoodCountry, &[81.0, 23.0]),
            (Attribute::GenderSame, &[53.0, 51.0]),
            (Attribute::School, &[64.0, 40.0]),
            (Attribute::Work, &[34.0, 70.0]),
        ];
        let mut spec = Self::balanced(104, seed);
        spec.attribute_probs = counts
            .iter()
            .map(|(a, c)| {
                let total: f64 = c.iter().sum();
                (*a, c.iter().map(|v| v / total).collect())
            })
            .collect();
        spec
    }

    pub fn validate(&self) -> Result<()> {
        if self.speakers == 0 {
            return Err(Error::invalid("synth spec needs at least one speaker"));
        }
        if self.messages_min < 2 || self.messages_max < self.messages_min {
            return Err(Error::invalid("bad messages_min/messages_max range"));
        }
        for strength in [
            self.vocabulary_bias,
            self.hour_bias,
            self.mention_bias,
            self.style_convergence,
        ] {
            if !(0.0..=1.0).contains(&strength) {
                return Err(Error::invalid("signal strengths must lie in [0, 1]"));
            }
        }
        for attr in ATTRIBUTES {
            let probs = self
                .attribute_probs
                .get(&attr)
                .ok_or_else(|| Error::invalid(format!("missing probabilities for {attr}")))?;
            if probs.len() != attr.cardinality() {
                return Err(Error::invalid(format!(
                    "{attr} needs {} probabilities",
                    attr.cardinality()
                )));
            }
            if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::invalid(format!("{attr} probabilities out of range")));
            }
            let sum: f64 = probs.iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::invalid(format!("{attr} probabilities sum to {sum}")));
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let spec: SynthSpec =
            toml::from_str(&text).map_err(|e| Error::invalid(format!("synth spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::invalid(format!("synth spec encode: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

const NAMES: [&str; 63] = [
    "avery", "blake", "casey", "devon", "ellis", "finley", "harper", "imani", "jordan",
    "kendall", "logan", "micah", "noor", "oakley", "parker", "quinn", "reese", "sage", "tatum",
    "umair", "vesper", "wren", "xiomara", "yael", "zephyr", "arden", "bellamy", "cyrus",
    "darian", "esme", "farid", "gemma", "hollis", "ingrid", "jaya", "kofi", "lennox",
    "marisol", "nadia", "orion", "priya", "rohan", "selene", "tobias", "uma", "violet",
    "wilder", "xander", "yuki", "zara", "ansel", "briar", "caspian", "delphine", "emrys",
    "freya", "gideon", "halima", "idris", "juniper", "keats", "lior", "mira",
];

/// Neutral content words, none of which hit a planted category.
const CONTENT_POOL: [&str; 36] = [
    "tablecloth", "river", "cloudbank", "stone", "shutter", "street", "mountain", "papyrus",
    "chair", "bottle", "roadway", "treeline", "meadow", "bridge", "lantern", "crate", "cupboard",
    "floorboard", "wallpaper", "stairwell", "rooftop", "pebble", "penbox", "deskside", "shelf",
    "satchel", "kettle", "hatstand", "ribbon", "keychain", "atlas", "boulder", "hillside",
    "lagoon", "fern", "driftwood",
];

/// Function words drawn by both sides; word identity is shared so only the
/// overall function-word rate separates the two style profiles.
const FUNCTION_POOL: [&str; 30] = [
    "the", "a", "an", "it", "this", "that", "and", "but", "or", "of", "in", "on", "at", "with",
    "is", "are", "not", "never", "all", "some", "many", "i", "you", "they", "me", "my", "really",
    "just", "very", "too",
];

/// Planted lexicon category per (attribute, value index).
pub fn planted_category(attr: Attribute, value_index: usize) -> &'static str {
    match (attr, value_index) {
        (Attribute::Family, 0) => "family",
        (Attribute::Family, _) => "insight",
        (Attribute::Romantic, 0) => "feel",
        (Attribute::Romantic, _) => "swear",
        (Attribute::RelativeAge, 0) => "netspeak",
        (Attribute::RelativeAge, 1) => "number",
        (Attribute::RelativeAge, _) => "leisure",
        (Attribute::ChildhoodCountry, 0) => "home",
        (Attribute::ChildhoodCountry, _) => "focusfuture",
        (Attribute::GenderSame, 0) => "money",
        (Attribute::GenderSame, _) => "sad",
        (Attribute::School, 0) => "achieve",
        (Attribute::School, _) => "health",
        (Attribute::Work, 0) => "work",
        (Attribute::Work, _) => "ingest",
    }
}

/// Preferred mean hour per (attribute, value index) for the hour signal.
fn planted_hour(attr: Attribute, value_index: usize) -> f64 {
    match (attr, value_index) {
        (Attribute::Family, 0) => 14.0,
        (Attribute::Family, _) => 20.0,
        (Attribute::Romantic, 0) => 23.0,
        (Attribute::Romantic, _) => 13.0,
        (Attribute::RelativeAge, 0) => 21.0,
        (Attribute::RelativeAge, 1) => 10.0,
        (Attribute::RelativeAge, _) => 16.0,
        (Attribute::ChildhoodCountry, 0) => 15.0,
        (Attribute::ChildhoodCountry, _) => 11.0,
        (Attribute::GenderSame, 0) => 17.0,
        (Attribute::GenderSame, _) => 19.0,
        (Attribute::School, 0) => 9.0,
        (Attribute::School, _) => 22.0,
        (Attribute::Work, 0) => 10.0,
        (Attribute::Work, _) => 18.0,
    }
}

/// Measured effect sizes on a generated corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SignalMeasurements {
    /// Per attribute: mean over values of planted-category coverage in the
    /// value group minus coverage in its complement.
    pub vocab_coverage_gap: BTreeMap<Attribute, f64>,
    /// Mean over attributes of the L1 distance between value-group
    /// hour-of-day histograms.
    pub hour_histogram_l1: f64,
    /// Mention messages whose source and target share a community.
    pub intra_community_mentions: u64,
    pub total_mentions: u64,
    /// Mean over partners of the LSM score across their final quarter of
    /// messages.
    pub final_style_match: f64,
}

/// What was planted, at which strengths, and what it measurably did.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SignalManifest {
    pub spec: SynthSpec,
    pub planted_categories: BTreeMap<String, String>,
    pub measurements: SignalMeasurements,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub corpus: Vec<Conversation>,
    pub annotations: AnnotationSet,
    pub aliases: AliasTable,
    pub manifest: SignalManifest,
}

fn speaker_name(i: usize) -> String {
    if i < NAMES.len() {
        NAMES[i].to_string()
    } else {
        format!("{}{}", NAMES[i % NAMES.len()], i / NAMES.len())
    }
}

/// Largest-remainder allocation of `n` items over `probs`.
fn allocate_counts(probs: &[f64], n: usize) -> Vec<usize> {
    let raw: Vec<f64> = probs.iter().map(|p| p * n as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| (r + 1e-9).floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for i in 0..n.saturating_sub(assigned) {
        counts[order[i % probs.len()]] += 1;
    }
    counts
}

fn assign_profiles(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<AttributeProfile> {
    use rand::seq::SliceRandom;
    let n = spec.speakers;
    let mut per_attr: BTreeMap<Attribute, Vec<usize>> = BTreeMap::new();
    for attr in ATTRIBUTES {
        let counts = allocate_counts(&spec.attribute_probs[&attr], n);
        let mut values = Vec::with_capacity(n);
        for (value, count) in counts.iter().enumerate() {
            values.extend(std::iter::repeat_n(value, *count));
        }
        values.shuffle(rng);
        per_attr.insert(attr, values);
    }
    (0..n)
        .map(|i| AttributeProfile {
            family: per_attr[&Attribute::Family][i] == 0,
            romantic: per_attr[&Attribute::Romantic][i] == 0,
            relative_age: match per_attr[&Attribute::RelativeAge][i] {
                0 => RelativeAge::Younger,
                1 => RelativeAge::Older,
                _ => RelativeAge::Same,
            },
            childhood_same_country: per_attr[&Attribute::ChildhoodCountry][i] == 0,
            gender_same: per_attr[&Attribute::GenderSame][i] == 0,
            school: per_attr[&Attribute::School][i] == 0,
            work: per_attr[&Attribute::Work][i] == 0,
        })
        .collect()
}

fn community_key(profile: &AttributeProfile) -> (bool, bool) {
    (profile.school, profile.work)
}

struct PlantedWords {
    /// Per (attribute, value index): the planted category's word list.
    words: BTreeMap<(Attribute, usize), Vec<String>>,
}

impl PlantedWords {
    fn build(lexicon: &CategoryLexicon) -> Result<Self> {
        let mut words = BTreeMap::new();
        for attr in ATTRIBUTES {
            for value in 0..attr.cardinality() {
                let name = planted_category(attr, value);
                let index = lexicon.category_index(name).ok_or_else(|| {
                    Error::invalid(format!("stand-in lexicon has no category {name:?}"))
                })?;
                let list = lexicon.category_words(index);
                if list.is_empty() {
                    return Err(Error::invalid(format!("category {name} has no words")));
                }
                words.insert((attr, value), list);
            }
        }
        Ok(PlantedWords { words })
    }

    fn pick(&self, attr: Attribute, value: usize, u: f64) -> &str {
        let list = &self.words[&(attr, value)];
        &list[(u * list.len() as f64) as usize % list.len()]
    }
}

const BASE_EPOCH: i64 = 1_483_315_200; // 2017-01-02 00:00:00 UTC
const AUTHOR_FUNC_RATE: f64 = 0.5;
const PARTNER_FUNC_RATE_INIT: f64 = 0.2;
const MENTION_RATE: f64 = 0.15;
const INTRA_COMMUNITY_RATE: f64 = 0.8;

struct SpeakerPlan {
    name: String,
    profile: AttributeProfile,
    message_count: usize,
    start_offset_days: i64,
}

fn generate_conversation(
    spec: &SynthSpec,
    plan: &SpeakerPlan,
    all_names: &[String],
    communities: &BTreeMap<String, (bool, bool)>,
    planted: &PlantedWords,
    rng: &mut ChaCha8Rng,
) -> Conversation {
    let profile = &plan.profile;
    let my_community = community_key(profile);
    let intra_pool: Vec<&String> = all_names
        .iter()
        .filter(|n| **n != plan.name && communities[*n] == my_community)
        .collect();
    let global_pool: Vec<&String> = all_names.iter().filter(|n| **n != plan.name).collect();

    let mut messages = Vec::with_capacity(plan.message_count);
    let mut day = BASE_EPOCH + plan.start_offset_days * 86_400;
    let mut prev_ts = 0i64;
    let mut is_author = rng.random_bool(0.5);

    for k in 0..plan.message_count {
        // sender turn-taking
        let u_sender: f64 = rng.random();
        if u_sender < 0.4 {
            is_author = !is_author;
        }
        // day cursor
        let u_adv: f64 = rng.random();
        let gap_days = rng.random_range(1..=3i64);
        if u_adv < 0.3 {
            day += gap_days * 86_400;
        }
        // hour: coupled mix of planted and base draws
        let u_hour: f64 = rng.random();
        let attr_idx = rng.random_range(0..ATTRIBUTES.len());
        let noise = rng.random_range(-2.0..=2.0);
        let base_hour = rng.random_range(0..24) as f64;
        let attr = ATTRIBUTES[attr_idx];
        let value = profile.value_index(attr);
        let hour = if u_hour < spec.hour_bias {
            (planted_hour(attr, value) + noise).rem_euclid(24.0)
        } else {
            base_hour
        };
        let minute = rng.random_range(0..60i64);
        let second = rng.random_range(0..60i64);
        let mut ts = day + (hour as i64) * 3600 + minute * 60 + second;
        if ts <= prev_ts {
            ts = prev_ts + 1 + (second % 60);
        }
        prev_ts = ts;

        // tokens: coupled mix of planted vocabulary and base words
        let n_tokens = rng.random_range(3..=12usize);
        let alpha = spec.style_convergence * (k as f64 / (k as f64 + 200.0));
        let func_rate = if is_author {
            AUTHOR_FUNC_RATE
        } else {
            PARTNER_FUNC_RATE_INIT + (AUTHOR_FUNC_RATE - PARTNER_FUNC_RATE_INIT) * alpha
        };
        let mut tokens: Vec<String> = Vec::with_capacity(n_tokens + 1);
        for _ in 0..n_tokens {
            let u_mix: f64 = rng.random();
            let attr_idx2 = rng.random_range(0..ATTRIBUTES.len());
            let u_signal: f64 = rng.random();
            let u_func: f64 = rng.random();
            let func_idx = rng.random_range(0..FUNCTION_POOL.len());
            let content_idx = rng.random_range(0..CONTENT_POOL.len());
            let token = if u_mix < spec.vocabulary_bias * 0.5 {
                let attr2 = ATTRIBUTES[attr_idx2];
                planted.pick(attr2, profile.value_index(attr2), u_signal).to_string()
            } else if u_func < func_rate {
                FUNCTION_POOL[func_idx].to_string()
            } else {
                CONTENT_POOL[content_idx].to_string()
            };
            tokens.push(token);
        }

        // mention: coupled; target drawn from community or global pool
        let u_mention: f64 = rng.random();
        let u_scope: f64 = rng.random();
        let u_intra: f64 = rng.random();
        let u_global: f64 = rng.random();
        let insert_pos = rng.random_range(0..=tokens.len());
        if u_mention < spec.mention_bias * MENTION_RATE {
            let target = if u_scope < INTRA_COMMUNITY_RATE && !intra_pool.is_empty() {
                intra_pool[(u_intra * intra_pool.len() as f64) as usize % intra_pool.len()]
            } else {
                global_pool[(u_global * global_pool.len() as f64) as usize % global_pool.len()]
            };
            tokens.insert(insert_pos, target.clone());
        }

        messages.push(Message {
            speaker_id: if is_author {
                SpeakerId::author()
            } else {
                SpeakerId::new(plan.name.clone())
            },
            is_author,
            timestamp: ts,
            text: tokens.join(" "),
            platform: Platform::Synthetic,
        });
    }
    Conversation::new(SpeakerId::new(plan.name.clone()), messages)
        .expect("generated conversation is valid")
}

/// Generate a corpus, its annotations, the alias table, and a manifest of
/// planted signals with measured effect sizes. Deterministic in the spec.
pub fn generate(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let lexicon = CategoryLexicon::standin();
    let planted = PlantedWords::build(lexicon)?;

    let mut master = ChaCha8Rng::seed_from_u64(spec.seed);
    let profiles = assign_profiles(spec, &mut master);
    let plans: Vec<SpeakerPlan> = (0..spec.speakers)
        .map(|i| SpeakerPlan {
            name: speaker_name(i),
            profile: profiles[i],
            message_count: master.random_range(spec.messages_min..=spec.messages_max),
            start_offset_days: (i % 17) as i64,
        })
        .collect();
    let all_names: Vec<String> = plans.iter().map(|p| p.name.clone()).collect();
    let communities: BTreeMap<String, (bool, bool)> = plans
        .iter()
        .map(|p| (p.name.clone(), community_key(&p.profile)))
        .collect();

    let corpus: Vec<Conversation> = crate::exec::map(&plans, |plan| {
        let mut rng = ChaCha8Rng::seed_from_u64(
            spec.seed ^ fxhash(plan.name.as_bytes()),
        );
        generate_conversation(spec, plan, &all_names, &communities, &planted, &mut rng)
    });

    let mut annotations = AnnotationSet {
        note: format!("synthetic corpus, seed {}", spec.seed),
        ..Default::default()
    };
    for plan in &plans {
        annotations.insert(SpeakerId::new(plan.name.clone()), plan.profile);
    }
    let mut aliases = AliasTable::default();
    for plan in &plans {
        aliases.insert(SpeakerId::new(plan.name.clone()), plan.name.clone());
    }
    aliases.insert(SpeakerId::author(), crate::corpus::AUTHOR_ID);

    let measurements = measure(&corpus, &annotations, lexicon, &communities);
    let planted_categories = ATTRIBUTES
        .iter()
        .flat_map(|a| {
            (0..a.cardinality()).map(move |v| {
                (
                    format!("{a}:{}", a.value_names()[v]),
                    planted_category(*a, v).to_string(),
                )
            })
        })
        .collect();
    Ok(SynthOutput {
        corpus,
        annotations,
        aliases,
        manifest: SignalManifest {
            spec: spec.clone(),
            planted_categories,
            measurements,
        },
    })
}

fn fxhash(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}

/// Measure group effect sizes on a corpus; used for the manifest and the
/// monotonicity property tests.
pub fn measure(
    corpus: &[Conversation],
    annotations: &AnnotationSet,
    lexicon: &CategoryLexicon,
    communities: &BTreeMap<String, (bool, bool)>,
) -> SignalMeasurements {
    // token lists per partner
    let tokens_by_partner: BTreeMap<&SpeakerId, Vec<String>> = corpus
        .iter()
        .map(|c| {
            let toks: Vec<String> = c.messages.iter().flat_map(|m| m.tokens()).collect();
            (&c.partner_id, toks)
        })
        .collect();

    let mut vocab_coverage_gap = BTreeMap::new();
    for attr in ATTRIBUTES {
        let mut gap_sum = 0.0;
        for value in 0..attr.cardinality() {
            let cat = lexicon
                .category_index(planted_category(attr, value))
                .expect("planted category exists");
            let mut group: Vec<String> = Vec::new();
            let mut complement: Vec<String> = Vec::new();
            for conv in corpus {
                let Some(profile) = annotations.get(&conv.partner_id) else {
                    continue;
                };
                let side = if profile.value_index(attr) == value {
                    &mut group
                } else {
                    &mut complement
                };
                side.extend(tokens_by_partner[&conv.partner_id].iter().cloned());
            }
            let cov = |toks: &[String]| -> f64 {
                if toks.is_empty() {
                    0.0
                } else {
                    category_counts(toks, lexicon).values[cat]
                }
            };
            gap_sum += cov(&group) - cov(&complement);
        }
        vocab_coverage_gap.insert(attr, gap_sum / attr.cardinality() as f64);
    }

    // hour histograms per attribute value group
    let mut hour_l1_sum = 0.0;
    let mut hour_l1_terms = 0usize;
    for attr in ATTRIBUTES {
        let k = attr.cardinality();
        let mut hists = vec![[0.0f64; 24]; k];
        let mut totals = vec![0.0f64; k];
        for conv in corpus {
            let Some(profile) = annotations.get(&conv.partner_id) else {
                continue;
            };
            let value = profile.value_index(attr);
            for m in &conv.messages {
                let hour = ((m.timestamp % 86_400) / 3_600) as usize;
                hists[value][hour] += 1.0;
                totals[value] += 1.0;
            }
        }
        for value in 0..k {
            if totals[value] == 0.0 {
                continue;
            }
            for h in 0..24 {
                hists[value][h] /= totals[value];
            }
        }
        for a in 0..k {
            for b in (a + 1)..k {
                if totals[a] > 0.0 && totals[b] > 0.0 {
                    let l1: f64 = (0..24).map(|h| (hists[a][h] - hists[b][h]).abs()).sum();
                    hour_l1_sum += l1;
                    hour_l1_terms += 1;
                }
            }
        }
    }

    // mentions: token equality against partner names
    let name_set: BTreeMap<&str, &(bool, bool)> =
        communities.iter().map(|(n, c)| (n.as_str(), c)).collect();
    let mut intra = 0u64;
    let mut total = 0u64;
    for conv in corpus {
        let sender_community = communities.get(conv.partner_id.as_str());
        for m in &conv.messages {
            for token in m.tokens() {
                if token == conv.partner_id.as_str() {
                    continue;
                }
                if let Some(target_comm) = name_set.get(token.as_str()) {
                    total += 1;
                    if let Some(sc) = sender_community {
                        if *target_comm == sc {
                            intra += 1;
                        }
                    }
                }
            }
        }
    }

    // style: LSM over each partner's final quarter of messages
    let mut style_sum = 0.0;
    let mut style_terms = 0usize;
    for conv in corpus {
        let n = conv.messages.len();
        if n < 8 {
            continue;
        }
        let tail = &conv.messages[n - n / 4..];
        let author_tokens: Vec<String> = tail
            .iter()
            .filter(|m| m.is_author)
            .flat_map(|m| m.tokens())
            .collect();
        let partner_tokens: Vec<String> = tail
            .iter()
            .filter(|m| !m.is_author)
            .flat_map(|m| m.tokens())
            .collect();
        if author_tokens.is_empty() || partner_tokens.is_empty() {
            continue;
        }
        style_sum += lsm(
            &FunctionWordProfile::from_tokens(&author_tokens),
            &FunctionWordProfile::from_tokens(&partner_tokens),
        );
        style_terms += 1;
    }

    SignalMeasurements {
        vocab_coverage_gap,
        hour_histogram_l1: if hour_l1_terms == 0 {
            0.0
        } else {
            hour_l1_sum / hour_l1_terms as f64
        },
        intra_community_mentions: intra,
        total_mentions: total,
        final_style_match: if style_terms == 0 {
            0.0
        } else {
            style_sum / style_terms as f64
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::write_canonical;

    #[test]
    fn default_table2_counts_are_exact() {
        let spec = SynthSpec::default_table2(1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let profiles = assign_profiles(&spec, &mut rng);
        assert_eq!(profiles.len(), 104);
        let count = |f: &dyn Fn(&AttributeProfile) -> bool| profiles.iter().filter(|p| f(p)).count();
        assert_eq!(count(&|p| p.family), 6);
        assert_eq!(count(&|p| p.romantic), 9);
        assert_eq!(count(&|p| p.relative_age == RelativeAge::Younger), 27);
        assert_eq!(count(&|p| p.relative_age == RelativeAge::Older), 31);
        assert_eq!(count(&|p| p.relative_age == RelativeAge::Same), 46);
        assert_eq!(count(&|p| p.childhood_same_country), 81);
        assert_eq!(count(&|p| p.gender_same), 53);
        assert_eq!(count(&|p| p.school), 64);
        assert_eq!(count(&|p| p.work), 34);
    }

    #[test]
    fn generation_is_deterministic() {
        let mut spec = SynthSpec::balanced(6, 42);
        spec.vocabulary_bias = 0.7;
        spec.hour_bias = 0.5;
        spec.mention_bias = 0.6;
        spec.style_convergence = 0.4;
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        let mut buf_a = Vec::new();
        let mut buf_b = Vec::new();
        write_canonical(&a.corpus, &mut buf_a).unwrap();
        write_canonical(&b.corpus, &mut buf_b).unwrap();
        assert_eq!(buf_a, buf_b);
        assert_eq!(a.annotations, b.annotations);
    }

    #[test]
    fn generated_corpus_satisfies_corpus_invariants() {
        let mut spec = SynthSpec::balanced(8, 3);
        spec.mention_bias = 1.0;
        let out = generate(&spec).unwrap();
        assert_eq!(out.corpus.len(), 8);
        for conv in &out.corpus {
            assert!(conv.messages.windows(2).all(|p| p[0].timestamp <= p[1].timestamp));
            for m in &conv.messages {
                m.validate().unwrap();
            }
        }
        // round-trip through the canonical format
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("synth.corpus");
        crate::corpus::write_canonical_file(&out.corpus, &path).unwrap();
        let reread = crate::corpus::read_canonical(&path).unwrap();
        assert_eq!(reread, out.corpus);
    }

    #[test]
    fn zero_speakers_is_an_error() {
        assert!(generate(&SynthSpec::balanced(0, 1)).is_err());
    }

    #[test]
    fn work_vocabulary_coverage_strictly_higher_with_bias() {
        let mut spec = SynthSpec::balanced(12, 9);
        spec.vocabulary_bias = 1.0;
        spec.messages_min = 60;
        spec.messages_max = 80;
        let out = generate(&spec).unwrap();
        let lexicon = CategoryLexicon::standin();
        let work_cat = lexicon.category_index("work").unwrap();
        let mut yes_tokens = Vec::new();
        let mut no_tokens = Vec::new();
        for conv in &out.corpus {
            let profile = out.annotations.get(&conv.partner_id).unwrap();
            let toks: Vec<String> = conv.messages.iter().flat_map(|m| m.tokens()).collect();
            if profile.work {
                yes_tokens.extend(toks);
            } else {
                no_tokens.extend(toks);
            }
        }
        let yes_cov = category_counts(&yes_tokens, lexicon).values[work_cat];
        let no_cov = category_counts(&no_tokens, lexicon).values[work_cat];
        assert!(
            yes_cov > no_cov,
            "work coverage {yes_cov} should exceed {no_cov}"
        );
    }

    #[test]
    fn zero_strength_measurements_are_flat() {
        let spec = SynthSpec::balanced(12, 5);
        let out = generate(&spec).unwrap();
        assert_eq!(out.manifest.measurements.total_mentions, 0);
        for (attr, gap) in &out.manifest.measurements.vocab_coverage_gap {
            assert!(
                gap.abs() < 0.02,
                "{attr} coverage gap {gap} should be near zero"
            );
        }
    }

    /// Each strength is varied in isolation: the coupled draws guarantee
    /// that raising one signal never weakens the group difference that
    /// signal controls.
    #[test]
    fn signal_strength_monotonicity() {
        let strengths = [0.0, 0.5, 1.0];
        let run = |set: &dyn Fn(&mut SynthSpec, f64), s: f64| -> SignalMeasurements {
            let mut spec = SynthSpec::balanced(10, 77);
            spec.messages_min = 60;
            spec.messages_max = 80;
            set(&mut spec, s);
            generate(&spec).unwrap().manifest.measurements
        };

        let vocab_gaps: Vec<f64> = strengths
            .iter()
            .map(|&s| run(&|spec, v| spec.vocabulary_bias = v, s).vocab_coverage_gap[&Attribute::Work])
            .collect();
        for w in vocab_gaps.windows(2) {
            assert!(w[1] >= w[0], "vocab gaps {vocab_gaps:?}");
        }

        let hour_l1s: Vec<f64> = strengths
            .iter()
            .map(|&s| run(&|spec, v| spec.hour_bias = v, s).hour_histogram_l1)
            .collect();
        for w in hour_l1s.windows(2) {
            assert!(w[1] >= w[0], "hour l1 {hour_l1s:?}");
        }

        let intra_counts: Vec<u64> = strengths
            .iter()
            .map(|&s| run(&|spec, v| spec.mention_bias = v, s).intra_community_mentions)
            .collect();
        for w in intra_counts.windows(2) {
            assert!(w[1] >= w[0], "intra mentions {intra_counts:?}");
        }

        let style_scores: Vec<f64> = strengths
            .iter()
            .map(|&s| run(&|spec, v| spec.style_convergence = v, s).final_style_match)
            .collect();
        for w in style_scores.windows(2) {
            assert!(w[1] >= w[0], "style {style_scores:?}");
        }
    }

    #[test]
    fn pools_and_names_avoid_planted_categories() {
        let lexicon = CategoryLexicon::standin();
        let planted_names: Vec<&str> = ATTRIBUTES
            .iter()
            .flat_map(|a| (0..a.cardinality()).map(move |v| planted_category(*a, v)))
            .collect();
        let planted_indices: Vec<usize> = planted_names
            .iter()
            .map(|n| lexicon.category_index(n).unwrap())
            .collect();
        for word in CONTENT_POOL.iter().chain(FUNCTION_POOL.iter()) {
            for hit in lexicon.matches(word) {
                assert!(
                    !planted_indices.contains(&hit),
                    "pool word {word:?} hits planted category {}",
                    lexicon.categories()[hit].name
                );
            }
        }
        // names must not collide with any generated vocabulary
        let mut planted_words: Vec<String> = Vec::new();
        let planted = PlantedWords::build(lexicon).unwrap();
        for list in planted.words.values() {
            planted_words.extend(list.iter().cloned());
        }
        for name in NAMES {
            assert!(!CONTENT_POOL.contains(&name));
            assert!(!FUNCTION_POOL.contains(&name));
            assert!(!planted_words.iter().any(|w| w == name), "name {name} is a vocab word");
        }
    }

    #[test]
    fn spec_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("spec.toml");
        let mut spec = SynthSpec::balanced(20, 11);
        spec.vocabulary_bias = 0.25;
        spec.save(&path).unwrap();
        let loaded = SynthSpec::load(&path).unwrap();
        assert_eq!(loaded, spec);
    }

    #[test]
    fn validate_rejects_bad_probabilities() {
        let mut spec = SynthSpec::balanced(5, 1);
        spec.attribute_probs
            .insert(Attribute::Family, vec![0.9, 0.4]);
        assert!(spec.validate().is_err());
        let mut spec = SynthSpec::balanced(5, 1);
        spec.vocabulary_bias = 1.5;
        assert!(spec.validate().is_err());
    }
}
