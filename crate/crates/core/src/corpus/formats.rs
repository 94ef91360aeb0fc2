//! Corpus file formats: the canonical line format plus export adapters.
//!
//! # Canonical format
//!
//! UTF-8, one message per line, tab-separated fields, with a versioned
//! header line:
//!
//! ```text
//! #dialogscope-corpus v1
//! <partner_id>\t<is_author 0|1>\t<timestamp>\t<platform>\t<text>
//! ```
//!
//! - `partner_id` names the conversation partner; `is_author` marks
//!   messages sent by the corpus owner.
//! - `timestamp` is written as epoch seconds (UTC). On read, either epoch
//!   seconds or an ISO-8601 datetime is accepted; a datetime without an
//!   offset is interpreted in the source timezone recorded in the sidecar
//!   file `<corpus>.tz` (a fixed offset such as `-05:00`), defaulting to
//!   UTC.
//! - `partner_id` and `text` are escaped: `\\` backslash, `\t` tab,
//!   `\n` newline, `\r` carriage return. No other escapes are defined.
//!
//! Platform export adapters (Google Hangouts Takeout JSON, Facebook
//! Messenger JSON) translate export files into the same (partner, message)
//! records; the canonical format is what the rest of the crate consumes.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use chrono::{DateTime, FixedOffset, NaiveDateTime, TimeZone};
use serde_json::Value;

use super::{Conversation, Message, Platform, SpeakerId};
use crate::error::{Error, Result};

pub const CANONICAL_HEADER: &str = "#dialogscope-corpus v1";

/// Knobs for the export adapters and timestamp interpretation.
#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    /// The corpus owner's display name in platform exports. Required for
    /// Messenger exports; used to break ties in Hangouts exports.
    pub author_name: Option<String>,
    /// Fixed offset for ISO timestamps that carry no offset of their own.
    /// When unset, the sidecar `<corpus>.tz` file is consulted, then UTC.
    pub timezone: Option<FixedOffset>,
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            _ => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> std::result::Result<String, String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(other) => return Err(format!("unknown escape \\{other}")),
            None => return Err("dangling backslash".to_string()),
        }
    }
    Ok(out)
}

/// Parse a fixed UTC offset like `-05:00` or `+0530`.
pub fn parse_offset(s: &str) -> Option<FixedOffset> {
    let s = s.trim();
    let (sign, rest) = match s.as_bytes().first()? {
        b'+' => (1, &s[1..]),
        b'-' => (-1, &s[1..]),
        _ => return None,
    };
    let digits: String = rest.chars().filter(|c| *c != ':').collect();
    if digits.len() != 4 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let hours: i32 = digits[..2].parse().ok()?;
    let minutes: i32 = digits[2..].parse().ok()?;
    FixedOffset::east_opt(sign * (hours * 3600 + minutes * 60))
}

fn sidecar_offset(path: &Path) -> Option<FixedOffset> {
    let mut sidecar = path.as_os_str().to_owned();
    sidecar.push(".tz");
    let content = std::fs::read_to_string(Path::new(&sidecar)).ok()?;
    parse_offset(&content)
}

fn parse_timestamp(field: &str, tz: FixedOffset) -> std::result::Result<i64, String> {
    if let Ok(epoch) = field.parse::<i64>() {
        return Ok(epoch);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(field) {
        return Ok(dt.timestamp());
    }
    if let Ok(naive) = NaiveDateTime::parse_from_str(field, "%Y-%m-%dT%H:%M:%S") {
        let local = tz
            .from_local_datetime(&naive)
            .single()
            .ok_or_else(|| format!("ambiguous local time {field}"))?;
        return Ok(local.timestamp());
    }
    Err(format!("bad timestamp {field:?} (epoch seconds or ISO-8601)"))
}

pub(super) fn parse_canonical_file(
    path: &Path,
    options: &IngestOptions,
) -> Result<Vec<(SpeakerId, Message)>> {
    let file = File::open(path)?;
    let tz = options
        .timezone
        .or_else(|| sidecar_offset(path))
        .unwrap_or_else(|| FixedOffset::east_opt(0).unwrap());
    parse_canonical(BufReader::new(file), &path.display().to_string(), tz)
}

pub fn parse_canonical<R: BufRead>(
    reader: R,
    path: &str,
    tz: FixedOffset,
) -> Result<Vec<(SpeakerId, Message)>> {
    let mut records = Vec::new();
    let mut lines = reader.lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty file, expected header line"))?;
    let header = header?;
    if header.trim_end() != CANONICAL_HEADER {
        return Err(Error::parse(
            path,
            1,
            format!("expected header {CANONICAL_HEADER:?}, got {header:?}"),
        ));
    }

    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected 5 tab-separated fields, got {}", fields.len()),
            ));
        }
        let err = |msg: String| Error::parse(path, lineno, msg);
        let partner = unescape(fields[0]).map_err(|e| err(format!("speaker_id: {e}")))?;
        let is_author = match fields[1] {
            "0" => false,
            "1" => true,
            other => return Err(err(format!("is_author must be 0 or 1, got {other:?}"))),
        };
        let timestamp = parse_timestamp(fields[2], tz).map_err(err)?;
        let platform = Platform::parse(fields[3])
            .ok_or_else(|| err(format!("unknown platform {:?}", fields[3])))?;
        let text = unescape(fields[4]).map_err(|e| err(format!("text: {e}")))?;

        let partner = SpeakerId::new(partner);
        let message = Message {
            speaker_id: if is_author {
                SpeakerId::author()
            } else {
                partner.clone()
            },
            is_author,
            timestamp,
            text,
            platform,
        };
        message
            .validate()
            .map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        records.push((partner, message));
    }
    Ok(records)
}

/// Write conversations in the canonical format. Messages are emitted in the
/// stored (time) order, conversations in the given order.
pub fn write_canonical<W: Write>(corpus: &[Conversation], mut writer: W) -> Result<()> {
    writeln!(writer, "{CANONICAL_HEADER}")?;
    for conv in corpus {
        for m in &conv.messages {
            writeln!(
                writer,
                "{}\t{}\t{}\t{}\t{}",
                escape(conv.partner_id.as_str()),
                u8::from(m.is_author),
                m.timestamp,
                m.platform.as_str(),
                escape(&m.text),
            )?;
        }
    }
    Ok(())
}

/// Read a canonical corpus file into grouped conversations.
pub fn read_canonical(path: impl AsRef<Path>) -> Result<Vec<Conversation>> {
    super::group_messages(parse_canonical_file(
        path.as_ref(),
        &IngestOptions::default(),
    )?)
}

fn read_json(path: &Path) -> Result<Value> {
    let mut buf = String::new();
    File::open(path)?.read_to_string(&mut buf)?;
    serde_json::from_str(&buf).map_err(|e| Error::parse(path.display().to_string(), e.line(), e.to_string()))
}

/// Google Hangouts Takeout adapter. The author is detected as the
/// participant present in every conversation; `author_name` breaks ties.
pub(super) fn parse_hangouts(path: &Path) -> Result<Vec<(SpeakerId, Message)>> {
    let root = read_json(path)?;
    let conversations = root
        .get("conversations")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::invalid("hangouts export: missing \"conversations\" array"))?;

    // participant lists per conversation: (gaia_id, name)
    let mut participant_sets: Vec<Vec<(String, String)>> = Vec::new();
    for conv in conversations {
        let meta = conv
            .get("conversation")
            .map(|c| c.get("conversation").unwrap_or(c))
            .unwrap_or(conv);
        let mut participants = Vec::new();
        if let Some(list) = meta.get("participant_data").and_then(Value::as_array) {
            for p in list {
                let gaia = p
                    .pointer("/id/gaia_id")
                    .and_then(Value::as_str)
                    .unwrap_or_default()
                    .to_string();
                let name = p
                    .get("fallback_name")
                    .and_then(Value::as_str)
                    .unwrap_or(&gaia)
                    .to_string();
                participants.push((gaia, name));
            }
        }
        participant_sets.push(participants);
    }

    // the author's gaia id appears in every conversation
    let mut candidates: Vec<&(String, String)> = participant_sets
        .first()
        .map(|s| s.iter().collect())
        .unwrap_or_default();
    for set in &participant_sets[1..] {
        candidates.retain(|(gaia, _)| set.iter().any(|(g, _)| g == gaia));
    }
    let author_gaia = match candidates.len() {
        1 => candidates[0].0.clone(),
        _ => {
            // fall back to matching the configured display name
            return Err(Error::invalid(format!(
                "hangouts export: cannot identify the author ({} candidates); \
                 re-run with the author's profile name configured",
                candidates.len()
            )));
        }
    };

    let mut records = Vec::new();
    for (conv, participants) in conversations.iter().zip(&participant_sets) {
        let others: Vec<&(String, String)> = participants
            .iter()
            .filter(|(g, _)| *g != author_gaia)
            .collect();
        if others.len() != 1 {
            log::warn!(
                "skipping hangouts conversation with {} non-author participants",
                others.len()
            );
            continue;
        }
        let (partner_gaia, partner_name) = others[0];
        let partner = SpeakerId::new(partner_name.clone());
        let events = conv.get("events").and_then(Value::as_array);
        for event in events.into_iter().flatten() {
            let sender = event
                .pointer("/sender_id/gaia_id")
                .and_then(Value::as_str)
                .unwrap_or_default();
            let micros: i64 = event
                .get("timestamp")
                .and_then(Value::as_str)
                .and_then(|s| s.parse().ok())
                .or_else(|| event.get("timestamp").and_then(Value::as_i64))
                .unwrap_or(0);
            let segments = event
                .pointer("/chat_message/message_content/segment")
                .and_then(Value::as_array);
            let text: String = segments
                .into_iter()
                .flatten()
                .filter(|s| s.get("type").and_then(Value::as_str) == Some("TEXT"))
                .filter_map(|s| s.get("text").and_then(Value::as_str))
                .collect::<Vec<_>>()
                .join(" ");
            if text.trim().is_empty() {
                continue;
            }
            let is_author = sender == author_gaia;
            records.push((
                partner.clone(),
                Message {
                    speaker_id: if is_author {
                        SpeakerId::author()
                    } else {
                        SpeakerId::new(if sender == *partner_gaia {
                            partner_name.clone()
                        } else {
                            sender.to_string()
                        })
                    },
                    is_author,
                    timestamp: micros / 1_000_000,
                    text,
                    platform: Platform::Hangouts,
                },
            ));
        }
    }
    Ok(records)
}

/// Facebook Messenger export adapter (one JSON file per conversation).
/// Requires the author's display name to tell the two participants apart.
pub(super) fn parse_messenger(
    path: &Path,
    options: &IngestOptions,
) -> Result<Vec<(SpeakerId, Message)>> {
    let author_name = options.author_name.as_deref().ok_or_else(|| {
        Error::invalid("messenger export: the author's display name is required")
    })?;
    let root = read_json(path)?;
    let participants: Vec<String> = root
        .get("participants")
        .and_then(Value::as_array)
        .map(|list| {
            list.iter()
                .filter_map(|p| p.get("name").and_then(Value::as_str))
                .map(str::to_string)
                .collect()
        })
        .unwrap_or_default();
    let partner_name = participants
        .iter()
        .find(|n| n.as_str() != author_name)
        .ok_or_else(|| Error::invalid("messenger export: no non-author participant"))?
        .clone();
    let partner = SpeakerId::new(partner_name);

    let mut records = Vec::new();
    let messages = root
        .get("messages")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::invalid("messenger export: missing \"messages\" array"))?;
    for m in messages {
        let Some(content) = m.get("content").and_then(Value::as_str) else {
            continue; // photos, stickers, unsent messages
        };
        if content.trim().is_empty() {
            continue;
        }
        let sender = m.get("sender_name").and_then(Value::as_str).unwrap_or("");
        let ts_ms = m.get("timestamp_ms").and_then(Value::as_i64).unwrap_or(0);
        let is_author = sender == author_name;
        records.push((
            partner.clone(),
            Message {
                speaker_id: if is_author {
                    SpeakerId::author()
                } else {
                    partner.clone()
                },
                is_author,
                timestamp: ts_ms / 1000,
                text: content.to_string(),
                platform: Platform::Messenger,
            },
        ));
    }
    Ok(records)
}

/// Convenience: write the corpus to a file path.
pub fn write_canonical_file(corpus: &[Conversation], path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path)?;
    write_canonical(corpus, std::io::BufWriter::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn utc() -> FixedOffset {
        FixedOffset::east_opt(0).unwrap()
    }

    #[test]
    fn parses_three_line_fixture() {
        let data = "#dialogscope-corpus v1\n\
                    bob\t0\t100\tsms\they\n\
                    bob\t1\t140\tsms\tyo\n\
                    bob\t0\t200\tsms\tcoffee?\n";
        let records = parse_canonical(Cursor::new(data), "fixture", utc()).unwrap();
        let corpus = crate::corpus::group_messages(records).unwrap();
        assert_eq!(corpus.len(), 1);
        assert_eq!(corpus[0].partner_id.as_str(), "bob");
        assert_eq!(corpus[0].messages.len(), 3);
        assert!(corpus[0].messages[1].is_author);
    }

    #[test]
    fn sorts_out_of_order_timestamps() {
        let data = "#dialogscope-corpus v1\n\
                    bob\t0\t500\tsms\tsecond\n\
                    bob\t0\t100\tsms\tfirst\n";
        let corpus =
            crate::corpus::group_messages(parse_canonical(Cursor::new(data), "f", utc()).unwrap())
                .unwrap();
        assert_eq!(corpus[0].messages[0].text, "first");
        assert_eq!(corpus[0].messages[1].text, "second");
    }

    #[test]
    fn error_names_offending_line() {
        let data = "#dialogscope-corpus v1\n\
                    bob\t0\tnot-a-time\tsms\they\n";
        let err = parse_canonical(Cursor::new(data), "fixture.dsc", utc()).unwrap_err();
        assert_eq!(err.to_string().split(':').take(2).collect::<Vec<_>>(), ["fixture.dsc", "2"]);
    }

    #[test]
    fn missing_field_is_an_error() {
        let data = "#dialogscope-corpus v1\nbob\t0\t100\tsms\n";
        let err = parse_canonical(Cursor::new(data), "f", utc()).unwrap_err();
        assert!(err.to_string().contains("5 tab-separated fields"));
    }

    #[test]
    fn rejects_missing_or_wrong_header() {
        let err = parse_canonical(Cursor::new("bob\t0\t1\tsms\thi\n"), "f", utc()).unwrap_err();
        assert!(err.to_string().contains("header"));
    }

    #[test]
    fn iso_timestamps_accepted() {
        let data = "#dialogscope-corpus v1\n\
                    bob\t0\t2019-07-04T15:45:06Z\tother\thello\n\
                    bob\t0\t2019-07-04T15:45:06\tother\thello again\n";
        let tz = parse_offset("-02:00").unwrap();
        let records = parse_canonical(Cursor::new(data), "f", tz).unwrap();
        assert_eq!(records[0].1.timestamp, 1562255106);
        // naive timestamp shifted by the source offset
        assert_eq!(records[1].1.timestamp, 1562255106 + 7200);
    }

    #[test]
    fn escape_round_trip() {
        for s in ["plain", "tab\there", "line\nbreak", "back\\slash", "\\t literal"] {
            assert_eq!(unescape(&escape(s)).unwrap(), s);
        }
        assert!(unescape("bad\\x").is_err());
        assert!(unescape("dangling\\").is_err());
    }

    #[test]
    fn canonical_round_trip_identity() {
        let data = "#dialogscope-corpus v1\n\
                    al\t1\t100\thangouts\tmulti\\nline :)\n\
                    al\t0\t160\thangouts\ttab\\tseparated\n\
                    zoe\t0\t90\tmessenger\they!!\n";
        let once = crate::corpus::group_messages(
            parse_canonical(Cursor::new(data), "f", utc()).unwrap(),
        )
        .unwrap();
        let mut serialized = Vec::new();
        write_canonical(&once, &mut serialized).unwrap();
        let twice = crate::corpus::group_messages(
            parse_canonical(Cursor::new(&serialized[..]), "f", utc()).unwrap(),
        )
        .unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn messenger_adapter_parses_export() {
        let json = r#"{
            "participants": [{"name": "Casey Author"}, {"name": "Sam Friend"}],
            "messages": [
                {"sender_name": "Sam Friend", "timestamp_ms": 1500000000000, "content": "hi"},
                {"sender_name": "Casey Author", "timestamp_ms": 1500000060000, "content": "hey"},
                {"sender_name": "Sam Friend", "timestamp_ms": 1500000120000, "photos": []}
            ]
        }"#;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("message_1.json");
        std::fs::write(&path, json).unwrap();
        let options = IngestOptions {
            author_name: Some("Casey Author".to_string()),
            timezone: None,
        };
        let records = parse_messenger(&path, &options).unwrap();
        assert_eq!(records.len(), 2); // photo-only message skipped
        assert_eq!(records[0].0.as_str(), "Sam Friend");
        assert!(!records[0].1.is_author);
        assert!(records[1].1.is_author);
        assert_eq!(records[0].1.timestamp, 1500000000);

        assert!(parse_messenger(&path, &IngestOptions::default()).is_err());
    }

    #[test]
    fn hangouts_adapter_parses_export() {
        let json = r#"{
          "conversations": [
            {
              "conversation": {"conversation": {"participant_data": [
                  {"id": {"gaia_id": "g1"}, "fallback_name": "Me"},
                  {"id": {"gaia_id": "g2"}, "fallback_name": "Pat"}
              ]}},
              "events": [
                {"sender_id": {"gaia_id": "g2"}, "timestamp": "1500000000000000",
                 "chat_message": {"message_content": {"segment": [{"type": "TEXT", "text": "hello"}]}}},
                {"sender_id": {"gaia_id": "g1"}, "timestamp": "1500000007000000",
                 "chat_message": {"message_content": {"segment": [{"type": "TEXT", "text": "hi"}]}}}
              ]
            },
            {
              "conversation": {"conversation": {"participant_data": [
                  {"id": {"gaia_id": "g1"}, "fallback_name": "Me"},
                  {"id": {"gaia_id": "g3"}, "fallback_name": "Riley"}
              ]}},
              "events": [
                {"sender_id": {"gaia_id": "g3"}, "timestamp": "1500000100000000",
                 "chat_message": {"message_content": {"segment": [{"type": "TEXT", "text": "yo"}]}}}
              ]
            }
          ]
        }"#;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("Hangouts.json");
        std::fs::write(&path, json).unwrap();
        let records = parse_hangouts(&path).unwrap();
        assert_eq!(records.len(), 3);
        assert_eq!(records[0].0.as_str(), "Pat");
        assert_eq!(records[0].1.timestamp, 1500000000);
        assert!(records[1].1.is_author);
        assert_eq!(records[2].0.as_str(), "Riley");
    }
}
