//! Analysis reports emitted as plot-ready data: dominance tables, temporal
//! message distributions, linguistic-mirroring curves, and the mention
//! cluster summary. Each report serializes to JSON and to a flat CSV;
//! rendering is left to external tools.

use std::collections::BTreeMap;
use std::io::Write;

use chrono::{Datelike, TimeZone, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::annotation::{AnnotationSet, Attribute, ATTRIBUTES};
use crate::corpus::{message_volumes, Conversation, SpeakerId};
use crate::error::{Error, Result};
use crate::graph::{
    build_mention_graph, display_subgraph, edge_weights, louvain, AliasTable, DisplayContext,
    GraphExport, WeightMode,
};
use crate::lexicon::{dominance, lsm, CategoryLexicon, DominanceEntry, FunctionWordProfile};

/// Mirroring checkpoints used by the curve report when none are given.
pub const DEFAULT_CHECKPOINTS: [usize; 6] = [100, 500, 1000, 2000, 3000, 5000];

/// The five groups the mirroring figure tracks.
pub const DEFAULT_MIRRORING_GROUPS: [(Attribute, usize); 5] = [
    (Attribute::RelativeAge, 2),
    (Attribute::School, 0),
    (Attribute::ChildhoodCountry, 0),
    (Attribute::Family, 0),
    (Attribute::Romantic, 0),
];

fn group_label(attr: Attribute, value: usize) -> String {
    format!("{}={}", attr.name(), attr.value_names()[value])
}

/// Token lists for a value group and its complement: every message in
/// conversations whose partner holds the value, both sides included.
fn group_tokens(
    corpus: &[Conversation],
    annotations: &AnnotationSet,
    attr: Attribute,
    value: usize,
) -> Result<(Vec<String>, Vec<String>)> {
    let mut group = Vec::new();
    let mut complement = Vec::new();
    for conv in corpus {
        let profile = annotations.require(&conv.partner_id)?;
        let side = if profile.value_index(attr) == value {
            &mut group
        } else {
            &mut complement
        };
        for m in &conv.messages {
            side.extend(m.tokens());
        }
    }
    Ok((group, complement))
}

#[derive(Debug, Clone, Serialize)]
pub struct DominanceRow {
    pub attribute: Attribute,
    pub value: String,
    /// Top classes, descending by dominance score.
    pub classes: Vec<DominanceEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DominanceReport {
    pub top_k: usize,
    pub rows: Vec<DominanceRow>,
}

/// Rank each attribute value's dominant word classes against the value's
/// complement group. Values whose group or complement has no tokens are
/// skipped with a warning.
pub fn dominance_report(
    corpus: &[Conversation],
    annotations: &AnnotationSet,
    lexicon: &CategoryLexicon,
    top_k: usize,
) -> Result<DominanceReport> {
    let mut rows = Vec::new();
    for attr in ATTRIBUTES {
        for value in 0..attr.cardinality() {
            let (group, complement) = group_tokens(corpus, annotations, attr, value)?;
            if group.is_empty() || complement.is_empty() {
                log::warn!("{}: empty side, skipped", group_label(attr, value));
                continue;
            }
            let mut classes =
                dominance(&group, &complement, lexicon, crate::lexicon::DOMINANCE_EPSILON)?;
            classes.truncate(top_k);
            rows.push(DominanceRow {
                attribute: attr,
                value: attr.value_names()[value].to_string(),
                classes,
            });
        }
    }
    Ok(DominanceReport { top_k, rows })
}

pub fn write_dominance_csv<W: Write>(report: &DominanceReport, mut w: W) -> Result<()> {
    writeln!(
        w,
        "attribute,value,rank,category,score,group_coverage,complement_coverage"
    )?;
    for row in &report.rows {
        for (rank, entry) in row.classes.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                row.attribute,
                row.value,
                rank + 1,
                entry.category,
                entry.score,
                entry.group_coverage,
                entry.complement_coverage
            )?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupSeries {
    pub group: String,
    /// Monday-first day-of-week message fractions; sums to 1.
    pub day: [f64; 7],
    /// Hour-of-day message fractions; sums to 1.
    pub hour: [f64; 24],
    /// Sum of |group - all| over the 7 day bins.
    pub day_divergence: f64,
    /// Sum of |group - all| over the 24 hour bins.
    pub hour_divergence: f64,
    pub messages: u64,
}

impl GroupSeries {
    pub fn total_divergence(&self) -> f64 {
        self.day_divergence + self.hour_divergence
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TimeDistribution {
    pub all: GroupSeries,
    /// Per attribute-value group, ranked by total divergence, descending.
    pub groups: Vec<GroupSeries>,
}

fn accumulate_series(messages: impl Iterator<Item = i64>) -> ([f64; 7], [f64; 24], u64) {
    let mut day = [0.0; 7];
    let mut hour = [0.0; 24];
    let mut count = 0u64;
    for ts in messages {
        if let Some(dt) = Utc.timestamp_opt(ts, 0).single() {
            day[dt.weekday().num_days_from_monday() as usize] += 1.0;
            hour[dt.hour() as usize] += 1.0;
            count += 1;
        }
    }
    if count > 0 {
        for d in &mut day {
            *d /= count as f64;
        }
        for h in &mut hour {
            *h /= count as f64;
        }
    }
    (day, hour, count)
}

/// Per-group day-of-week and hour-of-day message fractions plus each
/// group's divergence from the all-speakers trend.
pub fn time_distribution(
    corpus: &[Conversation],
    annotations: &AnnotationSet,
) -> Result<TimeDistribution> {
    let (all_day, all_hour, all_count) =
        accumulate_series(corpus.iter().flat_map(|c| c.messages.iter().map(|m| m.timestamp)));
    if all_count == 0 {
        return Err(Error::invalid("corpus has no messages"));
    }
    let all = GroupSeries {
        group: "all".to_string(),
        day: all_day,
        hour: all_hour,
        day_divergence: 0.0,
        hour_divergence: 0.0,
        messages: all_count,
    };

    let mut groups = Vec::new();
    for attr in ATTRIBUTES {
        for value in 0..attr.cardinality() {
            let mut member_ts = Vec::new();
            for conv in corpus {
                let profile = annotations.require(&conv.partner_id)?;
                if profile.value_index(attr) == value {
                    member_ts.extend(conv.messages.iter().map(|m| m.timestamp));
                }
            }
            if member_ts.is_empty() {
                continue;
            }
            let (day, hour, messages) = accumulate_series(member_ts.into_iter());
            let day_divergence: f64 = day.iter().zip(&all.day).map(|(g, a)| (g - a).abs()).sum();
            let hour_divergence: f64 =
                hour.iter().zip(&all.hour).map(|(g, a)| (g - a).abs()).sum();
            groups.push(GroupSeries {
                group: group_label(attr, value),
                day,
                hour,
                day_divergence,
                hour_divergence,
                messages,
            });
        }
    }
    groups.sort_by(|a, b| {
        b.total_divergence()
            .partial_cmp(&a.total_divergence())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.group.cmp(&b.group))
    });
    Ok(TimeDistribution { all, groups })
}

pub fn write_time_csv<W: Write>(report: &TimeDistribution, mut w: W) -> Result<()> {
    writeln!(w, "group,series,bin,fraction,day_divergence,hour_divergence")?;
    let write_group = |series: &GroupSeries, w: &mut W| -> Result<()> {
        for (bin, v) in series.day.iter().enumerate() {
            writeln!(
                w,
                "{},day,{},{},{},{}",
                series.group, bin, v, series.day_divergence, series.hour_divergence
            )?;
        }
        for (bin, v) in series.hour.iter().enumerate() {
            writeln!(
                w,
                "{},hour,{},{},{},{}",
                series.group, bin, v, series.day_divergence, series.hour_divergence
            )?;
        }
        Ok(())
    };
    write_group(&report.all, &mut w)?;
    for g in &report.groups {
        write_group(g, &mut w)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct MirroringPoint {
    pub checkpoint: usize,
    /// Mean LSM over contributing members; absent when nobody has enough
    /// messages.
    pub lsm: Option<f64>,
    pub contributors: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct MirroringGroupCurve {
    pub group: String,
    pub points: Vec<MirroringPoint>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MirroringReport {
    pub checkpoints: Vec<usize>,
    pub groups: Vec<MirroringGroupCurve>,
}

/// LSM over a person's first `m` messages, both sides pooled into two
/// function-word profiles.
pub fn lsm_at_prefix(conv: &Conversation, m: usize) -> Option<f64> {
    if conv.messages.len() < m {
        return None;
    }
    let prefix = &conv.messages[..m];
    let author: Vec<String> = prefix
        .iter()
        .filter(|msg| msg.is_author)
        .flat_map(|msg| msg.tokens())
        .collect();
    let partner: Vec<String> = prefix
        .iter()
        .filter(|msg| !msg.is_author)
        .flat_map(|msg| msg.tokens())
        .collect();
    Some(lsm(
        &FunctionWordProfile::from_tokens(&author),
        &FunctionWordProfile::from_tokens(&partner),
    ))
}

/// Mirroring as a function of messages exchanged: for each group, the mean
/// over members of the LSM over their first `m` messages, at each
/// checkpoint `m`. A person contributes to a checkpoint iff they have at
/// least `m` messages.
pub fn mirroring_curve(
    corpus: &[Conversation],
    annotations: &AnnotationSet,
    groups: &[(Attribute, usize)],
    checkpoints: &[usize],
) -> Result<MirroringReport> {
    let mut out = Vec::new();
    for &(attr, value) in groups {
        let members: Vec<&Conversation> = corpus
            .iter()
            .filter(|c| {
                annotations
                    .get(&c.partner_id)
                    .is_some_and(|p| p.value_index(attr) == value)
            })
            .collect();
        let points = checkpoints
            .iter()
            .map(|&m| {
                let values: Vec<f64> =
                    members.iter().filter_map(|c| lsm_at_prefix(c, m)).collect();
                MirroringPoint {
                    checkpoint: m,
                    lsm: if values.is_empty() {
                        None
                    } else {
                        Some(values.iter().sum::<f64>() / values.len() as f64)
                    },
                    contributors: values.len(),
                }
            })
            .collect();
        out.push(MirroringGroupCurve {
            group: group_label(attr, value),
            points,
        });
    }
    Ok(MirroringReport {
        checkpoints: checkpoints.to_vec(),
        groups: out,
    })
}

pub fn write_mirroring_csv<W: Write>(report: &MirroringReport, mut w: W) -> Result<()> {
    writeln!(w, "group,checkpoint,lsm,contributors")?;
    for g in &report.groups {
        for p in &g.points {
            let lsm = p.lsm.map(|v| v.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{},{}", g.group, p.checkpoint, lsm, p.contributors)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct ClusterReport {
    /// Community sizes, largest first.
    pub sizes: Vec<usize>,
    pub modularity: f64,
    pub export: GraphExport,
}

/// Louvain partition summary over the full mention graph plus the filtered
/// display export (clustering always runs before display filtering).
pub fn cluster_report(
    corpus: &[Conversation],
    annotations: &AnnotationSet,
    aliases: &AliasTable,
    top_n: usize,
    edge_threshold: u32,
    seed: u64,
) -> Result<ClusterReport> {
    let graph = build_mention_graph(corpus, aliases);
    let partition = louvain(&graph, 1.0, seed)?;
    let weights = edge_weights(&graph, WeightMode::default());

    let volumes = message_volumes(corpus);
    let first_contact: BTreeMap<SpeakerId, i64> = corpus
        .iter()
        .filter(|c| !c.messages.is_empty())
        .map(|c| (c.partner_id.clone(), c.messages[0].timestamp))
        .collect();
    let ctx = DisplayContext {
        volumes: &volumes,
        first_contact: &first_contact,
        annotations: Some(annotations),
    };
    let export = display_subgraph(&graph, &weights, &partition, &ctx, top_n, edge_threshold);

    let mut sizes: Vec<usize> = partition
        .communities()
        .into_iter()
        .map(|c| c.len())
        .collect();
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    Ok(ClusterReport {
        sizes,
        modularity: partition.modularity,
        export,
    })
}

pub fn write_cluster_csv<W: Write>(report: &ClusterReport, mut w: W) -> Result<()> {
    writeln!(w, "cluster_rank,size,modularity")?;
    for (i, size) in report.sizes.iter().enumerate() {
        writeln!(w, "{},{},{}", i + 1, size, report.modularity)?;
    }
    Ok(())
}

/// Serialize any report as pretty JSON.
pub fn write_json<W: Write, T: Serialize>(report: &T, mut w: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, report)
        .map_err(|e| Error::invalid(format!("report encode: {e}")))?;
    writeln!(w)?;
    Ok(())
}

/// The report kinds the CLI exposes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    Dominance,
    Time,
    Mirroring,
    Clusters,
}

impl ReportKind {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "dominance" => ReportKind::Dominance,
            "time" => ReportKind::Time,
            "mirroring" => ReportKind::Mirroring,
            "clusters" => ReportKind::Clusters,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            ReportKind::Dominance => "dominance",
            ReportKind::Time => "time",
            ReportKind::Mirroring => "mirroring",
            ReportKind::Clusters => "clusters",
        }
    }
}
