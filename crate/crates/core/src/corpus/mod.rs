//! Canonical corpus model: messages, conversations, context windows, stats.
//!
//! A corpus is the author's chat history with a set of conversation
//! partners. Each [`Conversation`] holds the time-ordered messages between
//! the author and one partner; [`ContextWindow`]s are fixed-length slices of
//! a conversation and are the unit of classification downstream.

mod formats;
mod tokenize;

pub use formats::{
    parse_offset, read_canonical, write_canonical, write_canonical_file, IngestOptions,
    CANONICAL_HEADER,
};
pub use tokenize::tokenize;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identifier the corpus owner goes by in [`Message::speaker_id`].
pub const AUTHOR_ID: &str = "author";

/// Default context-window length.
pub const DEFAULT_WINDOW_SIZE: usize = 5;

/// Opaque speaker identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpeakerId(pub String);

impl SpeakerId {
    pub fn new(id: impl Into<String>) -> Self {
        SpeakerId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn author() -> Self {
        SpeakerId(AUTHOR_ID.to_string())
    }
}

impl fmt::Display for SpeakerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Source platform of a message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Platform {
    Hangouts,
    Messenger,
    Sms,
    Synthetic,
    Other,
}

impl Platform {
    pub fn as_str(self) -> &'static str {
        match self {
            Platform::Hangouts => "hangouts",
            Platform::Messenger => "messenger",
            Platform::Sms => "sms",
            Platform::Synthetic => "synthetic",
            Platform::Other => "other",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "hangouts" => Platform::Hangouts,
            "messenger" => Platform::Messenger,
            "sms" => Platform::Sms,
            "synthetic" => Platform::Synthetic,
            "other" => Platform::Other,
            _ => return None,
        })
    }
}

/// One utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    /// Sender: [`AUTHOR_ID`] for the corpus owner, otherwise the partner id.
    pub speaker_id: SpeakerId,
    pub is_author: bool,
    /// Seconds since the Unix epoch, UTC.
    pub timestamp: i64,
    pub text: String,
    pub platform: Platform,
}

impl Message {
    pub fn validate(&self) -> Result<()> {
        if self.timestamp <= 0 {
            return Err(Error::invalid(format!(
                "message timestamp must be positive, got {}",
                self.timestamp
            )));
        }
        if self.text.trim().is_empty() {
            return Err(Error::invalid("message text is empty"));
        }
        if self.speaker_id.as_str().is_empty() {
            return Err(Error::invalid("message speaker id is empty"));
        }
        Ok(())
    }

    pub fn tokens(&self) -> Vec<String> {
        tokenize(&self.text)
    }
}

/// All messages exchanged between the author and one partner, time-ordered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conversation {
    pub partner_id: SpeakerId,
    pub messages: Vec<Message>,
}

impl Conversation {
    /// Build a conversation from unordered messages, validating each one.
    /// Sorting is stable, so equal timestamps keep their input order.
    pub fn new(partner_id: SpeakerId, mut messages: Vec<Message>) -> Result<Self> {
        for m in &messages {
            m.validate()?;
            let sender_ok = m.speaker_id.as_str() == AUTHOR_ID || m.speaker_id == partner_id;
            if !sender_ok {
                return Err(Error::invalid(format!(
                    "message sender {} is neither the author nor partner {}",
                    m.speaker_id, partner_id
                )));
            }
            if m.is_author != (m.speaker_id.as_str() == AUTHOR_ID) {
                return Err(Error::invalid(format!(
                    "is_author flag disagrees with sender {}",
                    m.speaker_id
                )));
            }
        }
        messages.sort_by_key(|m| m.timestamp);
        Ok(Conversation {
            partner_id,
            messages,
        })
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }
}

/// A fixed-length run of consecutive messages from one conversation.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextWindow {
    pub partner_id: SpeakerId,
    /// Exactly the configured window size, time-ordered.
    pub messages: Vec<Message>,
    /// Ordinal of this window within its conversation.
    pub window_index: usize,
    /// Index of `messages[0]` within the conversation's message list.
    pub start: usize,
}

impl ContextWindow {
    pub fn size(&self) -> usize {
        self.messages.len()
    }

    pub fn first_timestamp(&self) -> i64 {
        self.messages[0].timestamp
    }

    pub fn last_timestamp(&self) -> i64 {
        self.messages[self.messages.len() - 1].timestamp
    }
}

/// Number of sliding windows over `len` messages.
pub fn window_count(len: usize, size: usize, stride: usize) -> usize {
    if len < size {
        0
    } else {
        (len - size) / stride + 1
    }
}

/// Slide a window of `size` messages over the conversation with `stride`.
pub fn build_windows(
    conv: &Conversation,
    size: usize,
    stride: usize,
) -> Result<Vec<ContextWindow>> {
    if size < 2 {
        return Err(Error::invalid(format!("window size must be >= 2, got {size}")));
    }
    if stride < 1 {
        return Err(Error::invalid("window stride must be >= 1"));
    }
    let count = window_count(conv.len(), size, stride);
    let mut windows = Vec::with_capacity(count);
    for w in 0..count {
        let start = w * stride;
        windows.push(ContextWindow {
            partner_id: conv.partner_id.clone(),
            messages: conv.messages[start..start + size].to_vec(),
            window_index: w,
            start,
        });
    }
    Ok(windows)
}

/// Message/token tallies for one side of the corpus.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SideStats {
    pub total_messages: u64,
    pub unique_messages: u64,
    pub total_tokens: u64,
    pub unique_tokens: u64,
    pub avg_tokens_per_message: f64,
}

/// Corpus statistics reported for the author, the other speakers, and both.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub author: SideStats,
    pub others: SideStats,
    pub all: SideStats,
}

#[derive(Default)]
struct SideAcc<'a> {
    messages: u64,
    tokens: u64,
    unique_messages: HashSet<&'a str>,
    unique_tokens: HashSet<String>,
}

impl<'a> SideAcc<'a> {
    fn add(&mut self, m: &'a Message) {
        self.messages += 1;
        self.unique_messages.insert(m.text.as_str());
        for t in m.tokens() {
            self.tokens += 1;
            self.unique_tokens.insert(t);
        }
    }

    fn finish(self) -> SideStats {
        SideStats {
            total_messages: self.messages,
            unique_messages: self.unique_messages.len() as u64,
            total_tokens: self.tokens,
            unique_tokens: self.unique_tokens.len() as u64,
            avg_tokens_per_message: if self.messages == 0 {
                0.0
            } else {
                self.tokens as f64 / self.messages as f64
            },
        }
    }
}

/// Exact message/token counts over the corpus. Messages are deduplicated by
/// exact text, tokens by exact token string.
pub fn stats(corpus: &[Conversation]) -> Result<CorpusStats> {
    if corpus.iter().all(|c| c.is_empty()) {
        return Err(Error::invalid("corpus has no messages"));
    }
    let mut author = SideAcc::default();
    let mut others = SideAcc::default();
    let mut all = SideAcc::default();
    for conv in corpus {
        for m in &conv.messages {
            all.add(m);
            if m.is_author {
                author.add(m);
            } else {
                others.add(m);
            }
        }
    }
    Ok(CorpusStats {
        author: author.finish(),
        others: others.finish(),
        all: all.finish(),
    })
}

/// Total message count per partner, used for prompt ordering and display
/// filtering.
pub fn message_volumes(corpus: &[Conversation]) -> BTreeMap<SpeakerId, usize> {
    corpus
        .iter()
        .map(|c| (c.partner_id.clone(), c.len()))
        .collect()
}

/// Supported ingest formats. `Canonical` is the format this crate writes;
/// the others are adapters over platform export files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IngestFormat {
    Canonical,
    HangoutsJson,
    MessengerJson,
}

impl IngestFormat {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "canonical" => IngestFormat::Canonical,
            "hangouts" => IngestFormat::HangoutsJson,
            "messenger" => IngestFormat::MessengerJson,
            _ => return None,
        })
    }
}

/// Parse a chat export into conversations grouped by partner, messages
/// sorted by timestamp. Reading the same file twice yields the same corpus.
pub fn ingest(path: impl AsRef<Path>, format: IngestFormat) -> Result<Vec<Conversation>> {
    ingest_with(path, format, &IngestOptions::default())
}

pub fn ingest_with(
    path: impl AsRef<Path>,
    format: IngestFormat,
    options: &IngestOptions,
) -> Result<Vec<Conversation>> {
    let raw = match format {
        IngestFormat::Canonical => formats::parse_canonical_file(path.as_ref(), options)?,
        IngestFormat::HangoutsJson => formats::parse_hangouts(path.as_ref())?,
        IngestFormat::MessengerJson => formats::parse_messenger(path.as_ref(), options)?,
    };
    group_messages(raw)
}

/// Group (partner, message) pairs into sorted, validated conversations.
pub fn group_messages(raw: Vec<(SpeakerId, Message)>) -> Result<Vec<Conversation>> {
    let mut by_partner: BTreeMap<SpeakerId, Vec<Message>> = BTreeMap::new();
    for (partner, msg) in raw {
        by_partner.entry(partner).or_default().push(msg);
    }
    by_partner
        .into_iter()
        .map(|(partner, messages)| Conversation::new(partner, messages))
        .collect()
}
