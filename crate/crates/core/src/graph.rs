//! Mention graph over speakers: construction, edge weighting, all-pairs
//! shortest paths, and Louvain community detection.
//!
//! Nodes are the author plus every partner. A directed edge (i, j) counts
//! the messages in which speaker i names speaker j — at most once per
//! message, and never the message's recipient (naming the person you are
//! talking to is address, not mention).
//!
//! Two edge-weight modes exist because more mentions should make two
//! speakers *closer* for shortest-path features: `Inverted` maps the
//! highest mention count to weight 0 and the lowest to 1, and is the
//! default; `PaperFormula` is the opposite normalization, retained behind
//! the flag for comparison. See [`WeightMode`].
//!
//! The graph export format is line-oriented text, one record per line:
//!
//! ```text
//! node<TAB>id<TAB>cluster<TAB>shape<TAB>shade<TAB>messages
//! edge<TAB>src<TAB>dst<TAB>count<TAB>weight
//! ```

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotation::AnnotationSet;
use crate::corpus::{tokenize, Conversation, SpeakerId};
use crate::error::{Error, Result};
use crate::exec;

/// Lowercased name/nickname tokens per speaker, used to detect mentions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AliasTable {
    pub aliases: BTreeMap<SpeakerId, BTreeSet<String>>,
}

impl AliasTable {
    /// Default table: each speaker is known by their own id, lowercased.
    pub fn from_speakers<'a>(speakers: impl IntoIterator<Item = &'a SpeakerId>) -> Self {
        let aliases = speakers
            .into_iter()
            .map(|s| {
                let mut set = BTreeSet::new();
                set.insert(s.as_str().to_lowercase());
                (s.clone(), set)
            })
            .collect();
        AliasTable { aliases }
    }

    pub fn insert(&mut self, speaker: SpeakerId, alias: impl Into<String>) {
        self.aliases
            .entry(speaker)
            .or_default()
            .insert(alias.into().to_lowercase());
    }
}

/// Directed mention counts over the author and all partners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MentionGraph {
    /// Sorted: determines node indices everywhere downstream.
    pub nodes: Vec<SpeakerId>,
    /// (from, to) node indices -> number of mentioning messages (>= 1).
    pub counts: BTreeMap<(usize, usize), u32>,
}

impl MentionGraph {
    pub fn node_index(&self, id: &SpeakerId) -> Option<usize> {
        self.nodes.binary_search(id).ok()
    }

    pub fn count(&self, from: usize, to: usize) -> u32 {
        self.counts.get(&(from, to)).copied().unwrap_or(0)
    }

    /// Largest positive mention count.
    pub fn w_max(&self) -> u32 {
        self.counts.values().copied().max().unwrap_or(0)
    }

    /// Smallest positive mention count.
    pub fn w_min(&self) -> u32 {
        self.counts.values().copied().min().unwrap_or(0)
    }

    pub fn edge_count(&self) -> usize {
        self.counts.len()
    }
}

/// Build the mention graph from a set of conversations. Nodes are the
/// author, every corpus partner, and every alias-table speaker, so a
/// speaker stays a node (and mentionable) even when their own messages are
/// excluded, as for the held-out speaker of a fold. Every speaker with an
/// empty alias set is unmentionable (logged as a warning).
pub fn build_mention_graph(corpus: &[Conversation], aliases: &AliasTable) -> MentionGraph {
    let author = SpeakerId::author();
    let mut nodes: BTreeSet<SpeakerId> = corpus.iter().map(|c| c.partner_id.clone()).collect();
    nodes.extend(aliases.aliases.keys().cloned());
    nodes.insert(author.clone());
    let nodes: Vec<SpeakerId> = nodes.into_iter().collect();
    let index: BTreeMap<&SpeakerId, usize> =
        nodes.iter().enumerate().map(|(i, s)| (s, i)).collect();

    // alias token -> node indices it names
    let mut alias_index: HashMap<&str, Vec<usize>> = HashMap::new();
    for (speaker, set) in &aliases.aliases {
        let Some(&node) = index.get(speaker) else {
            continue;
        };
        if set.is_empty() {
            log::warn!("speaker {speaker} has no aliases and cannot be mentioned");
            continue;
        }
        for alias in set {
            alias_index.entry(alias.as_str()).or_default().push(node);
        }
    }
    for speaker in &nodes {
        if !aliases.aliases.contains_key(speaker) {
            log::warn!("speaker {speaker} has no alias entry and cannot be mentioned");
        }
    }

    let mut counts: BTreeMap<(usize, usize), u32> = BTreeMap::new();
    for conv in corpus {
        let Some(&partner_node) = index.get(&conv.partner_id) else {
            continue;
        };
        let author_node = index[&author];
        for message in &conv.messages {
            let (sender, recipient) = if message.is_author {
                (author_node, partner_node)
            } else {
                (partner_node, author_node)
            };
            let mut mentioned: BTreeSet<usize> = BTreeSet::new();
            for token in tokenize(&message.text) {
                if let Some(nodes_named) = alias_index.get(token.as_str()) {
                    mentioned.extend(nodes_named.iter().copied());
                }
            }
            for target in mentioned {
                if target != sender && target != recipient {
                    *counts.entry((sender, target)).or_insert(0) += 1;
                }
            }
        }
    }
    MentionGraph { nodes, counts }
}

/// How mention counts map to shortest-path edge weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// `W = 1 - (w_max - M) / (w_max - w_min)`: weight grows with mentions.
    PaperFormula,
    /// `W = (w_max - M) / (w_max - w_min)`: more mentions, smaller weight,
    /// so frequently-mentioned pairs are closer. Default.
    #[default]
    Inverted,
}

/// Directed graph with per-edge weights derived from mention counts.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedMentionGraph {
    pub nodes: Vec<SpeakerId>,
    /// Outgoing (target, weight) lists per node, target-sorted.
    pub adj: Vec<Vec<(usize, f64)>>,
}

impl WeightedMentionGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
}

/// Apply `mode` to every stored edge. Absent edges stay absent. When all
/// counts are equal, `PaperFormula` gives every edge weight 1 and
/// `Inverted` gives 0.
pub fn edge_weights(g: &MentionGraph, mode: WeightMode) -> WeightedMentionGraph {
    let w_max = g.w_max() as f64;
    let w_min = g.w_min() as f64;
    let span = w_max - w_min;
    let mut adj = vec![Vec::new(); g.nodes.len()];
    for (&(from, to), &count) in &g.counts {
        let normalized = if span == 0.0 {
            0.0
        } else {
            (w_max - count as f64) / span
        };
        let weight = match mode {
            WeightMode::PaperFormula => 1.0 - normalized,
            WeightMode::Inverted => normalized,
        };
        adj[from].push((to, weight));
    }
    WeightedMentionGraph {
        nodes: g.nodes.clone(),
        adj,
    }
}

/// All-pairs shortest-path costs. Unreachable pairs hold [`Self::sentinel`],
/// defined as 1 + the largest finite distance so feature magnitudes stay
/// bounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub nodes: Vec<SpeakerId>,
    pub dist: Vec<Vec<f64>>,
    pub sentinel: f64,
}

impl DistanceMatrix {
    pub fn node_index(&self, id: &SpeakerId) -> Option<usize> {
        self.nodes.binary_search(id).ok()
    }

    /// The row for one speaker, or the all-sentinel row for speakers
    /// missing from the graph (e.g. the held-out speaker of a fold).
    pub fn row_or_sentinel(&self, id: &SpeakerId) -> Vec<f64> {
        match self.node_index(id) {
            Some(i) => self.dist[i].clone(),
            None => vec![self.sentinel; self.nodes.len()],
        }
    }
}

#[derive(PartialEq)]
struct HeapEntry(f64, usize);

impl Eq for HeapEntry {}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

fn dijkstra_from(g: &WeightedMentionGraph, source: usize) -> Vec<f64> {
    let n = g.node_count();
    let mut dist = vec![f64::INFINITY; n];
    dist[source] = 0.0;
    let mut heap: BinaryHeap<Reverse<HeapEntry>> = BinaryHeap::new();
    heap.push(Reverse(HeapEntry(0.0, source)));
    while let Some(Reverse(HeapEntry(d, u))) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &(v, w) in &g.adj[u] {
            let candidate = d + w;
            if candidate < dist[v] {
                dist[v] = candidate;
                heap.push(Reverse(HeapEntry(candidate, v)));
            }
        }
    }
    dist
}

fn finish_distance_matrix(g: &WeightedMentionGraph, mut rows: Vec<Vec<f64>>) -> DistanceMatrix {
    let mut max_finite = 0.0f64;
    for row in &rows {
        for &d in row {
            if d.is_finite() && d > max_finite {
                max_finite = d;
            }
        }
    }
    let sentinel = 1.0 + max_finite;
    for row in &mut rows {
        for d in row {
            if !d.is_finite() {
                *d = sentinel;
            }
        }
    }
    DistanceMatrix {
        nodes: g.nodes.clone(),
        dist: rows,
        sentinel,
    }
}

fn check_weights(g: &WeightedMentionGraph) -> Result<()> {
    for (u, edges) in g.adj.iter().enumerate() {
        for &(v, w) in edges {
            if w < 0.0 || !w.is_finite() {
                return Err(Error::invalid(format!(
                    "edge {} -> {} has invalid weight {w}",
                    g.nodes[u], g.nodes[v]
                )));
            }
        }
    }
    Ok(())
}

/// Dijkstra from every node; sources run in parallel when enabled.
pub fn shortest_paths(g: &WeightedMentionGraph) -> Result<DistanceMatrix> {
    check_weights(g)?;
    let rows = exec::map_range(g.node_count(), |src| dijkstra_from(g, src));
    Ok(finish_distance_matrix(g, rows))
}

/// Always-sequential variant of [`shortest_paths`], for benchmarks.
pub fn shortest_paths_seq(g: &WeightedMentionGraph) -> Result<DistanceMatrix> {
    check_weights(g)?;
    let rows = exec::map_range_seq(g.node_count(), |src| dijkstra_from(g, src));
    Ok(finish_distance_matrix(g, rows))
}

/// A node-to-community assignment with its modularity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    /// Community id per node index; ids are dense, 0-based, ordered by
    /// smallest member node.
    pub assignment: Vec<usize>,
    pub modularity: f64,
}

impl Partition {
    pub fn community_count(&self) -> usize {
        self.assignment.iter().copied().max().map_or(0, |m| m + 1)
    }

    pub fn communities(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.community_count()];
        for (node, &c) in self.assignment.iter().enumerate() {
            out[c].push(node);
        }
        out
    }
}

/// Symmetric adjacency used for clustering: `w(i,j) = M(i,j) + M(j,i)`.
pub fn symmetrized_adjacency(g: &MentionGraph) -> Vec<Vec<f64>> {
    let n = g.nodes.len();
    let mut adj = vec![vec![0.0; n]; n];
    for (&(i, j), &c) in &g.counts {
        adj[i][j] += c as f64;
        adj[j][i] += c as f64;
    }
    adj
}

/// Modularity of `assignment` over a symmetric adjacency matrix (no self
/// loops), at the given resolution.
pub fn modularity(adj: &[Vec<f64>], assignment: &[usize], resolution: f64) -> f64 {
    let n = adj.len();
    let degrees: Vec<f64> = adj.iter().map(|row| row.iter().sum()).collect();
    let two_m: f64 = degrees.iter().sum();
    if two_m == 0.0 {
        return 0.0;
    }
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if assignment[i] == assignment[j] {
                q += adj[i][j] - resolution * degrees[i] * degrees[j] / two_m;
            }
        }
    }
    q / two_m
}

struct LevelGraph {
    /// neighbor lists excluding self loops
    adj: Vec<Vec<(usize, f64)>>,
    self_loops: Vec<f64>,
    /// weighted degree incl. 2x self loop
    degrees: Vec<f64>,
    two_m: f64,
}

impl LevelGraph {
    fn node_count(&self) -> usize {
        self.adj.len()
    }
}

fn local_move(
    graph: &LevelGraph,
    rng: &mut ChaCha8Rng,
    resolution: f64,
) -> (Vec<usize>, bool) {
    let n = graph.node_count();
    let mut node_comm: Vec<usize> = (0..n).collect();
    let mut comm_tot: Vec<f64> = graph.degrees.clone();
    let mut order: Vec<usize> = (0..n).collect();
    let mut improved = false;

    loop {
        let mut moves = 0usize;
        order.shuffle(rng);
        for &u in &order {
            let current = node_comm[u];
            // weight from u to each adjacent community
            let mut to_comm: HashMap<usize, f64> = HashMap::new();
            for &(v, w) in &graph.adj[u] {
                *to_comm.entry(node_comm[v]).or_insert(0.0) += w;
            }
            comm_tot[current] -= graph.degrees[u];
            let own_link = to_comm.get(&current).copied().unwrap_or(0.0);
            let gain = |links: f64, tot: f64| {
                links - resolution * graph.degrees[u] * tot / graph.two_m
            };
            let mut best_comm = current;
            let mut best_gain = gain(own_link, comm_tot[current]);
            // deterministic candidate order
            let mut candidates: Vec<(usize, f64)> = to_comm.into_iter().collect();
            candidates.sort_unstable_by_key(|(c, _)| *c);
            for (comm, links) in candidates {
                if comm == current {
                    continue;
                }
                let g = gain(links, comm_tot[comm]);
                if g > best_gain + 1e-12 {
                    best_gain = g;
                    best_comm = comm;
                }
            }
            comm_tot[best_comm] += graph.degrees[u];
            if best_comm != current {
                node_comm[u] = best_comm;
                moves += 1;
                improved = true;
            }
        }
        if moves == 0 {
            break;
        }
    }
    (node_comm, improved)
}

fn renumber(assignment: &mut [usize]) -> usize {
    let mut mapping: HashMap<usize, usize> = HashMap::new();
    for comm in assignment.iter_mut() {
        let next = mapping.len();
        let id = *mapping.entry(*comm).or_insert(next);
        *comm = id;
    }
    mapping.len()
}

fn aggregate(graph: &LevelGraph, assignment: &[usize], communities: usize) -> LevelGraph {
    let mut adj_maps: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); communities];
    let mut self_loops = vec![0.0; communities];
    for (u, edges) in graph.adj.iter().enumerate() {
        let cu = assignment[u];
        self_loops[cu] += graph.self_loops[u];
        for &(v, w) in edges {
            let cv = assignment[v];
            if cu == cv {
                // each undirected edge is stored twice in adj
                self_loops[cu] += w / 2.0;
            } else {
                *adj_maps[cu].entry(cv).or_insert(0.0) += w;
            }
        }
    }
    let adj: Vec<Vec<(usize, f64)>> = adj_maps
        .into_iter()
        .map(|m| m.into_iter().collect())
        .collect();
    let degrees: Vec<f64> = adj
        .iter()
        .zip(&self_loops)
        .map(|(edges, &s)| edges.iter().map(|(_, w)| w).sum::<f64>() + 2.0 * s)
        .collect();
    let two_m = graph.two_m;
    LevelGraph {
        adj,
        self_loops,
        degrees,
        two_m,
    }
}

/// Louvain clustering of the symmetrized mention graph. Node visit order
/// is seeded, so results are deterministic given `seed`. Requires at least
/// one edge.
pub fn louvain(g: &MentionGraph, resolution: f64, seed: u64) -> Result<Partition> {
    if g.counts.is_empty() {
        return Err(Error::invalid("louvain requires a graph with at least one edge"));
    }
    let full_adj = symmetrized_adjacency(g);
    let n = g.nodes.len();
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if i != j && full_adj[i][j] > 0.0 {
                adj[i].push((j, full_adj[i][j]));
            }
        }
    }
    let degrees: Vec<f64> = adj
        .iter()
        .map(|edges| edges.iter().map(|(_, w)| w).sum())
        .collect();
    let two_m: f64 = degrees.iter().sum();
    let mut level = LevelGraph {
        adj,
        self_loops: vec![0.0; n],
        degrees,
        two_m,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // node -> community through all levels so far
    let mut membership: Vec<usize> = (0..n).collect();
    loop {
        let (mut assignment, improved) = local_move(&level, &mut rng, resolution);
        if !improved {
            break;
        }
        let communities = renumber(&mut assignment);
        for m in membership.iter_mut() {
            *m = assignment[*m];
        }
        if communities == level.node_count() {
            break;
        }
        level = aggregate(&level, &assignment, communities);
    }

    // dense ids ordered by smallest member node, stable across runs
    let mut first_member: BTreeMap<usize, usize> = BTreeMap::new();
    for (node, &comm) in membership.iter().enumerate() {
        first_member.entry(comm).or_insert(node);
    }
    let mut ordered: Vec<(usize, usize)> = first_member.into_iter().collect();
    ordered.sort_by_key(|&(_, first)| first);
    let relabel: HashMap<usize, usize> = ordered
        .iter()
        .enumerate()
        .map(|(new, &(old, _))| (old, new))
        .collect();
    let assignment: Vec<usize> = membership.iter().map(|c| relabel[c]).collect();
    let q = modularity(&full_adj, &assignment, resolution);
    Ok(Partition {
        assignment,
        modularity: q,
    })
}

/// Node metadata for the plot export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeMeta {
    pub id: SpeakerId,
    pub cluster: usize,
    /// Group tag derived from annotations: family -> circle, school ->
    /// triangle, work -> rectangle, otherwise ellipse.
    pub shape: String,
    /// First-contact recency in [0, 1]; 0 is the earliest first contact.
    pub shade: f64,
    pub messages: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub src: SpeakerId,
    pub dst: SpeakerId,
    pub count: u32,
    pub weight: f64,
}

/// Plot-ready subgraph: filtered nodes and edges plus node metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphExport {
    pub nodes: Vec<NodeMeta>,
    pub edges: Vec<EdgeRecord>,
}

impl GraphExport {
    /// Line-oriented text form (`node` and `edge` records, tab-separated).
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# node\tid\tcluster\tshape\tshade\tmessages")?;
        for n in &self.nodes {
            writeln!(
                w,
                "node\t{}\t{}\t{}\t{:.4}\t{}",
                n.id, n.cluster, n.shape, n.shade, n.messages
            )?;
        }
        writeln!(w, "# edge\tsrc\tdst\tcount\tweight")?;
        for e in &self.edges {
            writeln!(w, "edge\t{}\t{}\t{}\t{}", e.src, e.dst, e.count, e.weight)?;
        }
        Ok(())
    }
}

/// Context needed to fill in node metadata for the display export.
pub struct DisplayContext<'a> {
    /// Message volume per partner, for the top-N cut.
    pub volumes: &'a BTreeMap<SpeakerId, usize>,
    /// Earliest message timestamp per partner, for the recency shade.
    pub first_contact: &'a BTreeMap<SpeakerId, i64>,
    pub annotations: Option<&'a AnnotationSet>,
}

fn shape_for(annotations: Option<&AnnotationSet>, id: &SpeakerId) -> String {
    let Some(profile) = annotations.and_then(|a| a.get(id)) else {
        return "ellipse".to_string();
    };
    if profile.family {
        "circle"
    } else if profile.school {
        "triangle"
    } else if profile.work {
        "rectangle"
    } else {
        "ellipse"
    }
    .to_string()
}

/// Keep the `top_n` partners by message volume and the directed edges with
/// at least `edge_threshold` mentions between kept partners. Cluster ids
/// come from `partition`, which must be computed on the full graph before
/// any filtering.
pub fn display_subgraph(
    g: &MentionGraph,
    weights: &WeightedMentionGraph,
    partition: &Partition,
    ctx: &DisplayContext,
    top_n: usize,
    edge_threshold: u32,
) -> GraphExport {
    let mut partners: Vec<(&SpeakerId, usize)> = ctx
        .volumes
        .iter()
        .map(|(id, v)| (id, *v))
        .collect();
    partners.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    partners.truncate(top_n);

    let ts_range = {
        let kept: Vec<i64> = partners
            .iter()
            .filter_map(|(id, _)| ctx.first_contact.get(*id).copied())
            .collect();
        let min = kept.iter().copied().min().unwrap_or(0);
        let max = kept.iter().copied().max().unwrap_or(0);
        (min, max)
    };
    let shade = |id: &SpeakerId| -> f64 {
        let Some(&t) = ctx.first_contact.get(id) else {
            return 0.0;
        };
        let (min, max) = ts_range;
        if max == min {
            0.0
        } else {
            (t - min) as f64 / (max - min) as f64
        }
    };

    let nodes: Vec<NodeMeta> = partners
        .iter()
        .map(|(id, volume)| NodeMeta {
            id: (*id).clone(),
            cluster: g
                .node_index(id)
                .map(|i| partition.assignment[i])
                .unwrap_or(0),
            shape: shape_for(ctx.annotations, id),
            shade: shade(id),
            messages: *volume,
        })
        .collect();
    let kept: BTreeSet<&SpeakerId> = partners.iter().map(|(id, _)| *id).collect();

    let weight_of = |from: usize, to: usize| -> f64 {
        weights.adj[from]
            .iter()
            .find(|(v, _)| *v == to)
            .map(|(_, w)| *w)
            .unwrap_or(f64::NAN)
    };
    let mut edges = Vec::new();
    for (&(from, to), &count) in &g.counts {
        if count < edge_threshold {
            continue;
        }
        let (src, dst) = (&g.nodes[from], &g.nodes[to]);
        if kept.contains(src) && kept.contains(dst) {
            edges.push(EdgeRecord {
                src: src.clone(),
                dst: dst.clone(),
                count,
                weight: weight_of(from, to),
            });
        }
    }
    GraphExport { nodes, edges }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Message, Platform, AUTHOR_ID};
    use rand::Rng;

    fn msg(sender: &str, ts: i64, text: &str) -> Message {
        Message {
            speaker_id: SpeakerId::new(sender),
            is_author: sender == AUTHOR_ID,
            timestamp: ts,
            text: text.to_string(),
            platform: Platform::Other,
        }
    }

    fn conv(partner: &str, messages: Vec<Message>) -> Conversation {
        Conversation::new(SpeakerId::new(partner), messages).unwrap()
    }

    fn speakers(ids: &[&str]) -> Vec<SpeakerId> {
        let mut all: Vec<SpeakerId> = ids.iter().map(|s| SpeakerId::new(*s)).collect();
        all.push(SpeakerId::author());
        all
    }

    #[test]
    fn single_mention_counts_once() {
        let corpus = vec![conv("alice", vec![msg("alice", 10, "saw bob today")])];
        let ids = speakers(&["alice", "bob"]);
        let aliases = AliasTable::from_speakers(&ids);
        let g = build_mention_graph(&corpus, &aliases);
        let alice = g.node_index(&SpeakerId::new("alice")).unwrap();
        let bob = g.node_index(&SpeakerId::new("bob")).unwrap();
        assert_eq!(g.count(alice, bob), 1);
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn repeated_alias_still_counts_once_per_message() {
        let corpus = vec![conv(
            "alice",
            vec![msg("alice", 10, "bob bob bob was there")],
        )];
        let ids = speakers(&["alice", "bob"]);
        let g = build_mention_graph(&corpus, &AliasTable::from_speakers(&ids));
        let alice = g.node_index(&SpeakerId::new("alice")).unwrap();
        let bob = g.node_index(&SpeakerId::new("bob")).unwrap();
        assert_eq!(g.count(alice, bob), 1);
    }

    #[test]
    fn recipient_and_self_are_not_mentions() {
        let corpus = vec![conv(
            "alice",
            vec![
                // author addressing alice: not a mention of alice
                msg(AUTHOR_ID, 10, "alice are you there"),
                // alice naming herself: not a mention either
                msg("alice", 20, "alice here, sorry"),
            ],
        )];
        let ids = speakers(&["alice"]);
        let g = build_mention_graph(&corpus, &AliasTable::from_speakers(&ids));
        assert_eq!(g.edge_count(), 0);
    }

    /// Independent oracle: double loop over speakers and messages.
    fn naive_mention_counts(
        corpus: &[Conversation],
        aliases: &AliasTable,
        nodes: &[SpeakerId],
    ) -> BTreeMap<(usize, usize), u32> {
        let mut counts = BTreeMap::new();
        for conv in corpus {
            for m in &conv.messages {
                let sender = if m.is_author {
                    SpeakerId::author()
                } else {
                    conv.partner_id.clone()
                };
                let recipient = if m.is_author {
                    conv.partner_id.clone()
                } else {
                    SpeakerId::author()
                };
                let tokens = tokenize(&m.text);
                for (j, target) in nodes.iter().enumerate() {
                    if *target == sender || *target == recipient {
                        continue;
                    }
                    let Some(set) = aliases.aliases.get(target) else {
                        continue;
                    };
                    if tokens.iter().any(|t| set.contains(t)) {
                        let i = nodes.iter().position(|n| *n == sender).unwrap();
                        *counts.entry((i, j)).or_insert(0) += 1;
                    }
                }
            }
        }
        counts
    }

    #[test]
    fn mention_graph_matches_naive_oracle_on_fixture() {
        let texts_alice = [
            "did you see bob",
            "bob and carol came by",
            "nothing to report",
            "carol again",
            "lunch with dave was fun",
            "bob bob bob",
            "talked to carol about dave",
            "quiet day",
            "dave says hi",
            "carol :)",
        ];
        let texts_author = [
            "bob told me",
            "say hi to carol",
            "dave is late",
            "nothing",
            "bob and dave and carol",
            "ok",
            "carol knows",
            "dave!",
            "hmm",
            "bob?",
        ];
        let mut messages = Vec::new();
        for (i, t) in texts_alice.iter().enumerate() {
            messages.push(msg("alice", (i as i64 + 1) * 10, t));
        }
        for (i, t) in texts_author.iter().enumerate() {
            messages.push(msg(AUTHOR_ID, (i as i64 + 1) * 10 + 5, t));
        }
        assert_eq!(messages.len(), 20);
        let corpus = vec![conv("alice", messages)];
        let ids = speakers(&["alice", "bob", "carol", "dave"]);
        let aliases = AliasTable::from_speakers(&ids);
        let g = build_mention_graph(&corpus, &aliases);
        let expected = naive_mention_counts(&corpus, &aliases, &g.nodes);
        assert_eq!(g.counts, expected);
    }

    fn graph_with_counts(counts: &[(usize, usize, u32)], n: usize) -> MentionGraph {
        MentionGraph {
            nodes: (0..n).map(|i| SpeakerId::new(format!("s{i:02}"))).collect(),
            counts: counts.iter().map(|&(i, j, c)| ((i, j), c)).collect(),
        }
    }

    #[test]
    fn edge_weight_endpoints_and_midpoint() {
        let g = graph_with_counts(&[(0, 1, 2), (1, 2, 6), (2, 0, 10)], 3);
        assert_eq!(g.w_min(), 2);
        assert_eq!(g.w_max(), 10);
        let paper = edge_weights(&g, WeightMode::PaperFormula);
        let inverted = edge_weights(&g, WeightMode::Inverted);
        let weight = |wg: &WeightedMentionGraph, from: usize, to: usize| {
            wg.adj[from].iter().find(|(v, _)| *v == to).unwrap().1
        };
        // M = w_max -> paper 1.0; M = w_min -> paper 0.0; M = 6 -> both 0.5
        assert_eq!(weight(&paper, 2, 0), 1.0);
        assert_eq!(weight(&paper, 0, 1), 0.0);
        assert_eq!(weight(&paper, 1, 2), 0.5);
        assert_eq!(weight(&inverted, 1, 2), 0.5);
        assert_eq!(weight(&inverted, 2, 0), 0.0);
        assert_eq!(weight(&inverted, 0, 1), 1.0);
    }

    #[test]
    fn degenerate_span_gives_constant_weights() {
        let g = graph_with_counts(&[(0, 1, 5), (1, 0, 5)], 2);
        let paper = edge_weights(&g, WeightMode::PaperFormula);
        assert_eq!(paper.adj[0][0].1, 1.0);
        let inverted = edge_weights(&g, WeightMode::Inverted);
        assert_eq!(inverted.adj[0][0].1, 0.0);
    }

    #[test]
    fn weight_modes_are_monotone_in_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let c1 = rng.random_range(1..50u32);
            let c2 = rng.random_range(1..50u32);
            let (lo, hi) = (c1.min(c2), c1.max(c2).max(c1.min(c2) + 1));
            let g = graph_with_counts(&[(0, 1, lo), (1, 2, hi), (2, 3, lo + (hi - lo) / 2)], 4);
            let paper = edge_weights(&g, WeightMode::PaperFormula);
            let inv = edge_weights(&g, WeightMode::Inverted);
            let pw: Vec<f64> = vec![paper.adj[0][0].1, paper.adj[2][0].1, paper.adj[1][0].1];
            let iw: Vec<f64> = vec![inv.adj[0][0].1, inv.adj[2][0].1, inv.adj[1][0].1];
            // counts ordered lo <= mid <= hi
            assert!(pw[0] <= pw[1] + 1e-12 && pw[1] <= pw[2] + 1e-12);
            assert!(iw[0] + 1e-12 >= iw[1] && iw[1] + 1e-12 >= iw[2]);
        }
    }

    fn weighted(nodes: usize, edges: &[(usize, usize, f64)]) -> WeightedMentionGraph {
        let mut adj = vec![Vec::new(); nodes];
        for &(u, v, w) in edges {
            adj[u].push((v, w));
        }
        WeightedMentionGraph {
            nodes: (0..nodes).map(|i| SpeakerId::new(format!("s{i:02}"))).collect(),
            adj,
        }
    }

    #[test]
    fn dijkstra_prefers_two_hop_path() {
        let g = weighted(3, &[(0, 1, 0.2), (1, 2, 0.3), (0, 2, 0.6)]);
        let d = shortest_paths(&g).unwrap();
        assert!((d.dist[0][2] - 0.5).abs() < 1e-12);
        assert_eq!(d.dist[0][0], 0.0);
    }

    #[test]
    fn disconnected_nodes_get_sentinel() {
        let g = weighted(3, &[(0, 1, 0.4)]);
        let d = shortest_paths(&g).unwrap();
        assert_eq!(d.sentinel, 1.4);
        assert_eq!(d.dist[0][2], d.sentinel);
        assert_eq!(d.dist[2][0], d.sentinel);
        assert_eq!(d.dist[1][0], d.sentinel); // directed: no back edge
    }

    #[test]
    fn negative_weight_is_rejected() {
        let g = weighted(2, &[(0, 1, -0.1)]);
        assert!(shortest_paths(&g).is_err());
    }

    /// Floyd-Warshall oracle over the same adjacency.
    fn floyd_warshall(g: &WeightedMentionGraph) -> Vec<Vec<f64>> {
        let n = g.node_count();
        let mut dist = vec![vec![f64::INFINITY; n]; n];
        for i in 0..n {
            dist[i][i] = 0.0;
        }
        for (u, edges) in g.adj.iter().enumerate() {
            for &(v, w) in edges {
                if w < dist[u][v] {
                    dist[u][v] = w;
                }
            }
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let via = dist[i][k] + dist[k][j];
                    if via < dist[i][j] {
                        dist[i][j] = via;
                    }
                }
            }
        }
        dist
    }

    /// Random graph with dyadic-rational weights (k/64) so path sums are
    /// exact in f64 and the two algorithms must agree bit for bit.
    fn random_graph(seed: u64) -> WeightedMentionGraph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..=12);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in 0..n {
                if u != v && rng.random_bool(0.35) {
                    let w = rng.random_range(0..=64u32) as f64 / 64.0;
                    edges.push((u, v, w));
                }
            }
        }
        weighted(n, &edges)
    }

    #[test]
    fn dijkstra_equals_floyd_warshall_on_random_graphs() {
        for seed in 0..100u64 {
            let g = random_graph(seed);
            let d = shortest_paths(&g).unwrap();
            let fw = floyd_warshall(&g);
            for i in 0..g.node_count() {
                for j in 0..g.node_count() {
                    let expected = if fw[i][j].is_finite() {
                        fw[i][j]
                    } else {
                        d.sentinel
                    };
                    assert_eq!(d.dist[i][j], expected, "seed={seed} i={i} j={j}");
                }
            }
        }
    }

    #[test]
    fn parallel_and_sequential_shortest_paths_agree() {
        let g = random_graph(424242);
        assert_eq!(shortest_paths(&g).unwrap(), shortest_paths_seq(&g).unwrap());
    }

    #[test]
    fn triangle_inequality_holds_for_finite_triples() {
        for seed in 0..20u64 {
            let g = random_graph(seed + 1000);
            let d = shortest_paths(&g).unwrap();
            let n = g.node_count();
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        if d.dist[i][j] < d.sentinel
                            && d.dist[i][k] < d.sentinel
                            && d.dist[k][j] < d.sentinel
                        {
                            assert!(d.dist[i][j] <= d.dist[i][k] + d.dist[k][j] + 1e-12);
                        }
                    }
                }
            }
        }
    }

    /// All set partitions of n nodes, for the exhaustive modularity oracle.
    fn all_partitions(n: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        fn recurse(assignment: &mut Vec<usize>, used: usize, n: usize, out: &mut Vec<Vec<usize>>) {
            if assignment.len() == n {
                out.push(assignment.clone());
                return;
            }
            for c in 0..=used {
                assignment.push(c);
                recurse(assignment, used.max(c + 1), n, out);
                assignment.pop();
            }
        }
        recurse(&mut Vec::new(), 0, n, &mut out);
        out
    }

    fn best_partition_by_search(adj: &[Vec<f64>]) -> (Vec<usize>, f64) {
        let mut best = (Vec::new(), f64::NEG_INFINITY);
        for p in all_partitions(adj.len()) {
            let q = modularity(adj, &p, 1.0);
            if q > best.1 {
                best = (p, q);
            }
        }
        best
    }

    fn communities_as_sets(assignment: &[usize]) -> BTreeSet<BTreeSet<usize>> {
        let mut map: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        for (node, &c) in assignment.iter().enumerate() {
            map.entry(c).or_default().insert(node);
        }
        map.into_values().collect()
    }

    #[test]
    fn louvain_matches_exhaustive_search_on_two_triangles() {
        let g = graph_with_counts(
            &[(0, 1, 3), (1, 2, 3), (2, 0, 3), (3, 4, 3), (4, 5, 3), (5, 3, 3)],
            6,
        );
        let adj = symmetrized_adjacency(&g);
        let (best, best_q) = best_partition_by_search(&adj);
        let got = louvain(&g, 1.0, 42).unwrap();
        assert_eq!(got.community_count(), 2);
        assert_eq!(
            communities_as_sets(&got.assignment),
            communities_as_sets(&best)
        );
        assert!((got.modularity - best_q).abs() < 1e-12);
    }

    #[test]
    fn louvain_matches_exhaustive_search_on_k4() {
        let mut edges = Vec::new();
        for i in 0..4 {
            for j in (i + 1)..4 {
                edges.push((i, j, 1));
            }
        }
        let g = graph_with_counts(&edges, 4);
        let adj = symmetrized_adjacency(&g);
        let (best, best_q) = best_partition_by_search(&adj);
        let got = louvain(&g, 1.0, 7).unwrap();
        assert_eq!(got.community_count(), 1);
        assert_eq!(
            communities_as_sets(&got.assignment),
            communities_as_sets(&best)
        );
        assert!((got.modularity - best_q).abs() < 1e-12);
    }

    #[test]
    fn single_edge_modularity_matches_hand_values() {
        let g = graph_with_counts(&[(0, 1, 1)], 2);
        let adj = symmetrized_adjacency(&g);
        // both in one community: Q = 1 - 1 = 0; split: Q = -1/2
        assert!((modularity(&adj, &[0, 0], 1.0) - 0.0).abs() < 1e-12);
        assert!((modularity(&adj, &[0, 1], 1.0) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn louvain_beats_trivial_partitions() {
        let g = graph_with_counts(
            &[(0, 1, 5), (1, 2, 1), (2, 3, 5), (3, 0, 1), (0, 2, 1), (4, 0, 2)],
            5,
        );
        let adj = symmetrized_adjacency(&g);
        let got = louvain(&g, 1.0, 3).unwrap();
        let singletons: Vec<usize> = (0..5).collect();
        let one_cluster = vec![0usize; 5];
        assert!(got.modularity >= modularity(&adj, &singletons, 1.0) - 1e-12);
        assert!(got.modularity >= modularity(&adj, &one_cluster, 1.0) - 1e-12);
    }

    #[test]
    fn louvain_is_deterministic_given_seed() {
        let g = graph_with_counts(
            &[(0, 1, 3), (1, 2, 2), (2, 0, 4), (3, 4, 5), (4, 5, 2), (5, 3, 3), (0, 3, 1)],
            6,
        );
        let a = louvain(&g, 1.0, 99).unwrap();
        let b = louvain(&g, 1.0, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn louvain_rejects_edgeless_graph() {
        let g = graph_with_counts(&[], 3);
        assert!(louvain(&g, 1.0, 1).is_err());
    }

    #[test]
    fn display_filters_edges_below_threshold_and_keeps_top_n() {
        let g = graph_with_counts(&[(0, 1, 24), (1, 2, 25), (2, 0, 40)], 3);
        let weights = edge_weights(&g, WeightMode::Inverted);
        let partition = louvain(&g, 1.0, 5).unwrap();
        let volumes: BTreeMap<SpeakerId, usize> = g
            .nodes
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), 100 - i))
            .collect();
        let first_contact: BTreeMap<SpeakerId, i64> = g
            .nodes
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), 1000 + i as i64 * 50))
            .collect();
        let ctx = DisplayContext {
            volumes: &volumes,
            first_contact: &first_contact,
            annotations: None,
        };
        let export = display_subgraph(&g, &weights, &partition, &ctx, 20, 25);
        // top_n larger than node count keeps all nodes
        assert_eq!(export.nodes.len(), 3);
        // the 24-count edge is gone, the others survive
        assert_eq!(export.edges.len(), 2);
        assert!(export.edges.iter().all(|e| e.count >= 25));
        // hand filter: exactly (s01 -> s02, 25) and (s02 -> s00, 40)
        let pairs: Vec<(&str, &str, u32)> = export
            .edges
            .iter()
            .map(|e| (e.src.as_str(), e.dst.as_str(), e.count))
            .collect();
        assert_eq!(pairs, vec![("s01", "s02", 25), ("s02", "s00", 40)]);
        // cluster ids come straight from the full-graph partition
        for node in &export.nodes {
            let idx = g.node_index(&node.id).unwrap();
            assert_eq!(node.cluster, partition.assignment[idx]);
        }
        // shades span [0, 1]
        assert!(export.nodes.iter().any(|n| n.shade == 0.0));
        assert!(export.nodes.iter().any(|n| n.shade == 1.0));

        let top2 = display_subgraph(&g, &weights, &partition, &ctx, 2, 1);
        assert_eq!(top2.nodes.len(), 2);
    }

    #[test]
    fn export_text_is_line_oriented() {
        let export = GraphExport {
            nodes: vec![NodeMeta {
                id: SpeakerId::new("ann"),
                cluster: 0,
                shape: "circle".into(),
                shade: 0.5,
                messages: 12,
            }],
            edges: vec![EdgeRecord {
                src: SpeakerId::new("ann"),
                dst: SpeakerId::new("joe"),
                count: 30,
                weight: 0.25,
            }],
        };
        let mut buf = Vec::new();
        export.write_text(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("node\tann\t0\tcircle\t0.5000\t12"));
        assert!(text.contains("edge\tann\tjoe\t30\t0.25"));
    }
}
