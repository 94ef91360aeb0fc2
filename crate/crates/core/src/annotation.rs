//! The seven-attribute relationship schema and its persistent store.
//!
//! Each conversation partner is annotated with six binary attributes
//! (family, romantic, childhood country, same gender, school, work) and one
//! ternary attribute (relative age: younger / older / same). Annotations
//! live in a human-editable, versioned TOML document so the data owner can
//! audit every label:
//!
//! ```toml
//! version = 1
//! note = "optional free text"
//!
//! [speakers.alice]
//! family = "no"
//! romantic = "no"
//! relative_age = "same"
//! childhood_country = "same"
//! gender_same = "yes"
//! school = "yes"
//! work = "no"
//! ```
//!
//! The store is single-writer: a `<path>.lock` file guards mutation.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{message_volumes, Conversation, SpeakerId};
use crate::error::{Error, Result};

/// The seven relationship attributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Family,
    Romantic,
    RelativeAge,
    ChildhoodCountry,
    GenderSame,
    School,
    Work,
}

/// All attributes, in schema order.
pub const ATTRIBUTES: [Attribute; 7] = [
    Attribute::Family,
    Attribute::Romantic,
    Attribute::RelativeAge,
    Attribute::ChildhoodCountry,
    Attribute::GenderSame,
    Attribute::School,
    Attribute::Work,
];

impl Attribute {
    pub fn name(self) -> &'static str {
        match self {
            Attribute::Family => "family",
            Attribute::Romantic => "romantic",
            Attribute::RelativeAge => "relative_age",
            Attribute::ChildhoodCountry => "childhood_country",
            Attribute::GenderSame => "gender_same",
            Attribute::School => "school",
            Attribute::Work => "work",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        ATTRIBUTES.iter().copied().find(|a| a.name() == s)
    }

    /// Number of values this attribute can take (3 for relative age, else 2).
    pub fn cardinality(self) -> usize {
        match self {
            Attribute::RelativeAge => 3,
            _ => 2,
        }
    }

    /// Value names in class-index order.
    pub fn value_names(self) -> &'static [&'static str] {
        match self {
            Attribute::RelativeAge => &["younger", "older", "same"],
            Attribute::ChildhoodCountry => &["same", "other"],
            _ => &["yes", "no"],
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Relative age of a partner with respect to the author.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelativeAge {
    Younger,
    Older,
    Same,
}

/// One partner's seven attribute values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttributeProfile {
    pub family: bool,
    pub romantic: bool,
    pub relative_age: RelativeAge,
    /// True when the partner grew up in the same country as the author.
    pub childhood_same_country: bool,
    pub gender_same: bool,
    pub school: bool,
    pub work: bool,
}

impl AttributeProfile {
    /// Class index of this profile's value for `attr`, consistent with
    /// [`Attribute::value_names`].
    pub fn value_index(&self, attr: Attribute) -> usize {
        fn yes_no(b: bool) -> usize {
            usize::from(!b) // yes = 0, no = 1
        }
        match attr {
            Attribute::Family => yes_no(self.family),
            Attribute::Romantic => yes_no(self.romantic),
            Attribute::RelativeAge => match self.relative_age {
                RelativeAge::Younger => 0,
                RelativeAge::Older => 1,
                RelativeAge::Same => 2,
            },
            Attribute::ChildhoodCountry => yes_no(self.childhood_same_country),
            Attribute::GenderSame => yes_no(self.gender_same),
            Attribute::School => yes_no(self.school),
            Attribute::Work => yes_no(self.work),
        }
    }

    pub fn value_name(&self, attr: Attribute) -> &'static str {
        attr.value_names()[self.value_index(attr)]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ProfileDoc {
    family: String,
    romantic: String,
    relative_age: String,
    childhood_country: String,
    gender_same: String,
    school: String,
    work: String,
}

impl ProfileDoc {
    fn from_profile(p: &AttributeProfile) -> Self {
        ProfileDoc {
            family: p.value_name(Attribute::Family).into(),
            romantic: p.value_name(Attribute::Romantic).into(),
            relative_age: p.value_name(Attribute::RelativeAge).into(),
            childhood_country: p.value_name(Attribute::ChildhoodCountry).into(),
            gender_same: p.value_name(Attribute::GenderSame).into(),
            school: p.value_name(Attribute::School).into(),
            work: p.value_name(Attribute::Work).into(),
        }
    }

    fn to_profile(&self) -> std::result::Result<AttributeProfile, String> {
        fn yes_no(field: &str, v: &str) -> std::result::Result<bool, String> {
            match v {
                "yes" => Ok(true),
                "no" => Ok(false),
                _ => Err(format!("{field}: expected yes/no, got {v:?}")),
            }
        }
        Ok(AttributeProfile {
            family: yes_no("family", &self.family)?,
            romantic: yes_no("romantic", &self.romantic)?,
            relative_age: match self.relative_age.as_str() {
                "younger" => RelativeAge::Younger,
                "older" => RelativeAge::Older,
                "same" => RelativeAge::Same,
                v => return Err(format!("relative_age: expected younger/older/same, got {v:?}")),
            },
            childhood_same_country: match self.childhood_country.as_str() {
                "same" => true,
                "other" => false,
                v => return Err(format!("childhood_country: expected same/other, got {v:?}")),
            },
            gender_same: yes_no("gender_same", &self.gender_same)?,
            school: yes_no("school", &self.school)?,
            work: yes_no("work", &self.work)?,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct AnnotationDoc {
    version: u32,
    #[serde(default)]
    note: String,
    #[serde(default)]
    speakers: BTreeMap<String, ProfileDoc>,
}

/// Mapping from partner id to attribute profile, plus a free-text note.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnnotationSet {
    pub profiles: BTreeMap<SpeakerId, AttributeProfile>,
    pub note: String,
}

impl AnnotationSet {
    pub fn get(&self, id: &SpeakerId) -> Option<&AttributeProfile> {
        self.profiles.get(id)
    }

    pub fn insert(&mut self, id: SpeakerId, profile: AttributeProfile) {
        self.profiles.insert(id, profile);
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    /// The profile for `id`, or an error naming the missing speaker.
    pub fn require(&self, id: &SpeakerId) -> Result<&AttributeProfile> {
        self.get(id)
            .ok_or_else(|| Error::Unannotated(id.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let doc: AnnotationDoc = toml::from_str(text)
            .map_err(|e| Error::invalid(format!("annotation document: {e}")))?;
        if doc.version != 1 {
            return Err(Error::invalid(format!(
                "unsupported annotation document version {}",
                doc.version
            )));
        }
        let mut set = AnnotationSet {
            note: doc.note,
            ..Default::default()
        };
        for (id, profile) in doc.speakers {
            let profile = profile
                .to_profile()
                .map_err(|e| Error::invalid(format!("speaker {id}: {e}")))?;
            set.profiles.insert(SpeakerId::new(id), profile);
        }
        Ok(set)
    }

    pub fn to_toml(&self) -> String {
        let doc = AnnotationDoc {
            version: 1,
            note: self.note.clone(),
            speakers: self
                .profiles
                .iter()
                .map(|(id, p)| (id.to_string(), ProfileDoc::from_profile(p)))
                .collect(),
        };
        toml::to_string_pretty(&doc).expect("annotation document serializes")
    }

    /// Atomic save: write a temp file, then rename over the target.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_toml())?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }
}

/// Exclusive-writer guard for an annotation file. The lock file is removed
/// on drop.
pub struct StoreLock {
    lock_path: PathBuf,
}

impl StoreLock {
    pub fn acquire(store_path: impl AsRef<Path>) -> Result<Self> {
        let mut os = store_path.as_ref().as_os_str().to_owned();
        os.push(".lock");
        let lock_path = PathBuf::from(os);
        match std::fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&lock_path)
        {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(StoreLock { lock_path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(Error::Locked(lock_path.display().to_string()))
            }
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for StoreLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.lock_path);
    }
}

/// Per-attribute distribution of speakers and messages over values, as
/// percentages in value-index order.
#[derive(Debug, Clone, Serialize)]
pub struct AttributeDistribution {
    pub attribute: Attribute,
    pub values: Vec<String>,
    pub speaker_pct: Vec<f64>,
    pub message_pct: Vec<f64>,
    pub speaker_counts: Vec<u64>,
    pub message_counts: Vec<u64>,
}

/// Percentage of speakers and of messages holding each attribute value.
/// Every corpus partner must be annotated.
pub fn distribution(
    annotations: &AnnotationSet,
    corpus: &[Conversation],
) -> Result<Vec<AttributeDistribution>> {
    let volumes = message_volumes(corpus);
    for partner in volumes.keys() {
        annotations.require(partner)?;
    }
    let total_speakers: u64 = volumes.len() as u64;
    let total_messages: u64 = volumes.values().map(|v| *v as u64).sum();
    if total_speakers == 0 {
        return Err(Error::invalid("corpus has no conversations"));
    }

    let mut out = Vec::new();
    for attr in ATTRIBUTES {
        let k = attr.cardinality();
        let mut speaker_counts = vec![0u64; k];
        let mut message_counts = vec![0u64; k];
        for (partner, volume) in &volumes {
            let idx = annotations.profiles[partner].value_index(attr);
            speaker_counts[idx] += 1;
            message_counts[idx] += *volume as u64;
        }
        let pct = |counts: &[u64], total: u64| -> Vec<f64> {
            counts
                .iter()
                .map(|&c| 100.0 * c as f64 / total.max(1) as f64)
                .collect()
        };
        out.push(AttributeDistribution {
            attribute: attr,
            values: attr.value_names().iter().map(|s| s.to_string()).collect(),
            speaker_pct: pct(&speaker_counts, total_speakers),
            message_pct: pct(&message_counts, total_messages),
            speaker_counts,
            message_counts,
        });
    }
    Ok(out)
}

/// Prompt for each unannotated partner in descending message-count order,
/// reading answers from `input` and echoing prompts to `output`. The store
/// is re-saved after every completed profile, so an interrupt loses at most
/// the profile in progress. Already-annotated partners are skipped.
pub fn annotate_interactive<R: BufRead, W: Write>(
    corpus: &[Conversation],
    existing: AnnotationSet,
    store_path: impl AsRef<Path>,
    input: &mut R,
    output: &mut W,
) -> Result<AnnotationSet> {
    let store_path = store_path.as_ref();
    let _lock = StoreLock::acquire(store_path)?;

    let volumes = message_volumes(corpus);
    let mut pending: Vec<(&SpeakerId, usize)> = volumes
        .iter()
        .filter(|(id, _)| existing.get(id).is_none())
        .map(|(id, v)| (id, *v))
        .collect();
    // most messages first; ties by id for a stable order
    pending.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let mut set = existing;
    for (partner, volume) in pending {
        writeln!(output, "annotating {partner} ({volume} messages)")?;
        let profile = match prompt_profile(input, output)? {
            Some(p) => p,
            None => break, // end of input: stop, partial set already saved
        };
        set.insert(partner.clone(), profile);
        set.save(store_path)?;
    }
    set.save(store_path)?;
    Ok(set)
}

fn prompt_profile<R: BufRead, W: Write>(
    input: &mut R,
    output: &mut W,
) -> Result<Option<AttributeProfile>> {
    let mut answers: Vec<usize> = Vec::with_capacity(ATTRIBUTES.len());
    for attr in ATTRIBUTES {
        let names = attr.value_names();
        loop {
            write!(output, "  {} [{}]: ", attr.name(), names.join("/"))?;
            output.flush()?;
            let mut line = String::new();
            if input.read_line(&mut line)? == 0 {
                return Ok(None);
            }
            let answer = line.trim().to_lowercase();
            // accept full names and unambiguous single-letter shorthand
            let idx = names.iter().position(|n| {
                *n == answer || (answer.len() == 1 && n.starts_with(answer.as_str()))
            });
            match idx {
                Some(i) => {
                    answers.push(i);
                    break;
                }
                None => writeln!(output, "  expected one of: {}", names.join(", "))?,
            }
        }
    }
    Ok(Some(profile_from_indices(&answers)))
}

fn profile_from_indices(idx: &[usize]) -> AttributeProfile {
    AttributeProfile {
        family: idx[0] == 0,
        romantic: idx[1] == 0,
        relative_age: [RelativeAge::Younger, RelativeAge::Older, RelativeAge::Same][idx[2]],
        childhood_same_country: idx[3] == 0,
        gender_same: idx[4] == 0,
        school: idx[5] == 0,
        work: idx[6] == 0,
    }
}
