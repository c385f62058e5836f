//! Deep/shallow dependency graphs, gold realizations and corpus IO.
//!
//! A deep graph is an unordered multi-parent graph of content lemmas
//! connected by semantic labels. Function words (to, that, commas) and
//! inflections are absent from it; a gold realization pairs the graph
//! with an ordered, inflected token sequence and a projective tree over
//! token positions.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use thiserror::Error;

pub type NodeId = usize;

/// PID of the virtual root; never a node itself.
pub const VIRTUAL_ROOT: NodeId = 0;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{0}")]
    Semantic(String),
    #[error("instance {index}: {source}")]
    Instance {
        index: usize,
        #[source]
        source: Box<CorpusError>,
    },
}

fn parse_err(line: usize, msg: impl Into<String>) -> CorpusError {
    CorpusError::Parse { line, msg: msg.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Number {
    Sg,
    Pl,
}

impl Number {
    pub fn as_str(self) -> &'static str {
        match self {
            Number::Sg => "sg",
            Number::Pl => "pl",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tense {
    Pres,
    Past,
}

impl Tense {
    pub fn as_str(self) -> &'static str {
        match self {
            Tense::Pres => "pres",
            Tense::Past => "past",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Partic {
    Pres,
    Past,
}

impl Partic {
    pub fn as_str(self) -> &'static str {
        match self {
            Partic::Pres => "pres",
            Partic::Past => "past",
        }
    }
}

/// Morphological attributes of a node. The key set is closed: `num`,
/// `tense`, `partic` plus the two punctuation flags `bracket` and `quote`.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Attrs {
    pub num: Option<Number>,
    pub tense: Option<Tense>,
    pub partic: Option<Partic>,
    pub bracket: bool,
    pub quote: bool,
}

impl Attrs {
    pub fn is_empty(&self) -> bool {
        self.num.is_none()
            && self.tense.is_none()
            && self.partic.is_none()
            && !self.bracket
            && !self.quote
    }

    /// Parses the `k1=v1|k2=v2` ATTR column; `_` denotes no attributes.
    pub fn parse(text: &str) -> Result<Attrs, String> {
        let mut attrs = Attrs::default();
        if text == "_" || text.is_empty() {
            return Ok(attrs);
        }
        for part in text.split('|') {
            let (key, value) = match part.split_once('=') {
                Some((k, v)) => (k, Some(v)),
                None => (part, None),
            };
            match (key, value) {
                ("num", Some("sg")) => attrs.num = Some(Number::Sg),
                ("num", Some("pl")) => attrs.num = Some(Number::Pl),
                ("tense", Some("pres")) => attrs.tense = Some(Tense::Pres),
                ("tense", Some("past")) => attrs.tense = Some(Tense::Past),
                ("partic", Some("pres")) => attrs.partic = Some(Partic::Pres),
                ("partic", Some("past")) => attrs.partic = Some(Partic::Past),
                ("bracket", _) => attrs.bracket = true,
                ("quote", _) => attrs.quote = true,
                _ => return Err(format!("unknown attribute `{part}`")),
            }
        }
        Ok(attrs)
    }

    pub fn serialize(&self) -> String {
        let mut parts = Vec::new();
        if let Some(n) = self.num {
            parts.push(format!("num={}", n.as_str()));
        }
        if let Some(t) = self.tense {
            parts.push(format!("tense={}", t.as_str()));
        }
        if let Some(p) = self.partic {
            parts.push(format!("partic={}", p.as_str()));
        }
        if self.bracket {
            parts.push("bracket".to_string());
        }
        if self.quote {
            parts.push("quote".to_string());
        }
        if parts.is_empty() {
            "_".to_string()
        } else {
            parts.join("|")
        }
    }
}

/// One lemma node of a deep graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub id: NodeId,
    pub lemma: String,
    pub attrs: Attrs,
    /// Gold inflection, present in training data only.
    pub lexeme: Option<String>,
}

/// Labeled arc; `head` may be [`VIRTUAL_ROOT`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Arc {
    pub head: NodeId,
    pub child: NodeId,
    pub label: String,
}

impl Arc {
    pub fn new(head: NodeId, child: NodeId, label: impl Into<String>) -> Arc {
        Arc { head, child, label: label.into() }
    }
}

/// Unordered multi-parent graph of lemma nodes (the input structure).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DeepGraph {
    pub nodes: BTreeMap<NodeId, Node>,
    pub arcs: Vec<Arc>,
}

impl DeepGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(&id)
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.keys().copied()
    }

    /// The child of the single virtual-root arc.
    pub fn root(&self) -> Option<NodeId> {
        self.arcs.iter().find(|a| a.head == VIRTUAL_ROOT).map(|a| a.child)
    }

    pub fn add_node(&mut self, node: Node) {
        self.nodes.insert(node.id, node);
    }

    /// Arcs are kept sorted so graph equality is set equality.
    pub fn add_arc(&mut self, head: NodeId, child: NodeId, label: impl Into<String>) {
        let arc = Arc::new(head, child, label);
        if let Err(idx) = self.arcs.binary_search(&arc) {
            self.arcs.insert(idx, arc);
        }
    }

    pub fn has_arc(&self, head: NodeId, child: NodeId) -> bool {
        self.arcs.iter().any(|a| a.head == head && a.child == child)
    }

    /// Label of the first arc between the pair, in sorted label order.
    pub fn arc_label(&self, head: NodeId, child: NodeId) -> Option<&str> {
        self.arcs
            .iter()
            .filter(|a| a.head == head && a.child == child)
            .map(|a| a.label.as_str())
            .min()
    }

    pub fn children_of(&self, id: NodeId) -> Vec<NodeId> {
        let set: BTreeSet<NodeId> = self
            .arcs
            .iter()
            .filter(|a| a.head == id)
            .map(|a| a.child)
            .collect();
        set.into_iter().collect()
    }

    /// Parents of `id`, virtual root excluded.
    pub fn parents_of(&self, id: NodeId) -> Vec<NodeId> {
        let set: BTreeSet<NodeId> = self
            .arcs
            .iter()
            .filter(|a| a.child == id && a.head != VIRTUAL_ROOT)
            .map(|a| a.head)
            .collect();
        set.into_iter().collect()
    }

    /// Checks the structural invariants: ids positive, one root arc,
    /// endpoints defined, no self loops, connected when undirected.
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.nodes.is_empty() {
            return Err(CorpusError::Semantic("empty graph".into()));
        }
        if self.nodes.contains_key(&VIRTUAL_ROOT) {
            return Err(CorpusError::Semantic("node id 0 is reserved".into()));
        }
        let roots = self.arcs.iter().filter(|a| a.head == VIRTUAL_ROOT).count();
        if roots != 1 {
            return Err(CorpusError::Semantic(format!(
                "expected exactly one root arc, found {roots}"
            )));
        }
        for arc in &self.arcs {
            if arc.head == arc.child {
                return Err(CorpusError::Semantic(format!("self loop on node {}", arc.head)));
            }
            if arc.head != VIRTUAL_ROOT && !self.nodes.contains_key(&arc.head) {
                return Err(CorpusError::Semantic(format!("dangling head id {}", arc.head)));
            }
            if !self.nodes.contains_key(&arc.child) {
                return Err(CorpusError::Semantic(format!("dangling child id {}", arc.child)));
            }
        }
        // Undirected connectivity over real nodes.
        let mut seen = BTreeSet::new();
        let start = *self.nodes.keys().next().unwrap();
        let mut queue = VecDeque::from([start]);
        seen.insert(start);
        while let Some(n) = queue.pop_front() {
            for arc in &self.arcs {
                if arc.head == VIRTUAL_ROOT {
                    continue;
                }
                let other = if arc.head == n {
                    arc.child
                } else if arc.child == n {
                    arc.head
                } else {
                    continue;
                };
                if seen.insert(other) {
                    queue.push_back(other);
                }
            }
        }
        if seen.len() != self.nodes.len() {
            return Err(CorpusError::Semantic("graph is not connected".into()));
        }
        Ok(())
    }
}

/// Precomputed adjacency and reachability for one graph; decoding reads
/// this instead of rescanning the arc list.
#[derive(Debug, Clone)]
pub struct Closure {
    pub children: BTreeMap<NodeId, Vec<NodeId>>,
    pub parents: BTreeMap<NodeId, Vec<NodeId>>,
    descendants: BTreeMap<NodeId, BTreeSet<NodeId>>,
}

impl Closure {
    pub fn build(g: &DeepGraph) -> Closure {
        let mut children = BTreeMap::new();
        let mut parents = BTreeMap::new();
        for id in g.ids() {
            children.insert(id, g.children_of(id));
            parents.insert(id, g.parents_of(id));
        }
        let mut descendants = BTreeMap::new();
        for id in g.ids() {
            let mut seen: BTreeSet<NodeId> = BTreeSet::new();
            let mut queue: VecDeque<NodeId> = children[&id].iter().copied().collect();
            while let Some(n) = queue.pop_front() {
                if seen.insert(n) {
                    queue.extend(children[&n].iter().copied());
                }
            }
            seen.remove(&id); // cycles via reentrancy must not make a node its own descendant
            descendants.insert(id, seen);
        }
        Closure { children, parents, descendants }
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        self.children.get(&id).map(|v| v.as_slice()).unwrap_or(&[])
    }

    pub fn parents(&self, id: NodeId) -> &[NodeId] {
        self.parents.get(&id).map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// Strict descendant test.
    pub fn is_descendant(&self, node: NodeId, of: NodeId) -> bool {
        self.descendants.get(&of).map(|s| s.contains(&node)).unwrap_or(false)
    }

    pub fn descendants(&self, of: NodeId) -> &BTreeSet<NodeId> {
        static EMPTY: std::sync::OnceLock<BTreeSet<NodeId>> = std::sync::OnceLock::new();
        self.descendants
            .get(&of)
            .unwrap_or_else(|| EMPTY.get_or_init(BTreeSet::new))
    }

    /// Shared parents of two distinct nodes.
    pub fn common_parents(&self, a: NodeId, b: NodeId) -> Vec<NodeId> {
        if a == b {
            return Vec::new();
        }
        let pb: BTreeSet<NodeId> = self.parents(b).iter().copied().collect();
        self.parents(a).iter().copied().filter(|p| pb.contains(p)).collect()
    }

    pub fn are_siblings(&self, a: NodeId, b: NodeId) -> bool {
        !self.common_parents(a, b).is_empty()
    }
}

/// The three function-word classes absent from deep input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FwKind {
    To,
    That,
    Comma,
}

impl FwKind {
    pub fn surface(self) -> &'static str {
        match self {
            FwKind::To => "to",
            FwKind::That => "that",
            FwKind::Comma => ",",
        }
    }

    pub fn src_tag(self) -> &'static str {
        match self {
            FwKind::To => "TO",
            FwKind::That => "THAT",
            FwKind::Comma => "COMMA",
        }
    }

    pub fn from_src_tag(tag: &str) -> Option<FwKind> {
        match tag {
            "TO" => Some(FwKind::To),
            "THAT" => Some(FwKind::That),
            "COMMA" => Some(FwKind::Comma),
            _ => None,
        }
    }
}

impl fmt::Display for FwKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.src_tag())
    }
}

/// Where a surface token came from: a graph node or an inserted function word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TokenSource {
    Node(NodeId),
    Fw(FwKind),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldToken {
    pub form: String,
    pub source: TokenSource,
    /// Head as a 1-based surface position; 0 for the tree root.
    pub head: usize,
    pub label: String,
}

/// Ordered gold tokens with a projective tree over 1-based positions.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GoldRealization {
    pub tokens: Vec<GoldToken>,
}

impl GoldRealization {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn forms(&self) -> Vec<String> {
        self.tokens.iter().map(|t| t.form.clone()).collect()
    }

    /// Tree arcs as (head-position, child-position, label); root arc excluded.
    pub fn tree_arcs(&self) -> Vec<(usize, usize, &str)> {
        self.tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| t.head != 0)
            .map(|(i, t)| (t.head, i + 1, t.label.as_str()))
            .collect()
    }

    pub fn token_at(&self, position: usize) -> Option<&GoldToken> {
        if position == 0 {
            return None;
        }
        self.tokens.get(position - 1)
    }

    /// Children positions of a position, in surface order.
    pub fn children_positions(&self, position: usize) -> Vec<usize> {
        self.tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| t.head == position)
            .map(|(i, _)| i + 1)
            .collect()
    }

    /// Parses one `.gold` line of space-separated `pos|form|src|head|label` tokens.
    pub fn parse_line(line: &str) -> Result<GoldRealization, CorpusError> {
        let mut tokens = Vec::new();
        for (i, piece) in line.split_whitespace().enumerate() {
            let fields: Vec<&str> = piece.split('|').collect();
            if fields.len() != 5 {
                return Err(CorpusError::Semantic(format!(
                    "gold token {} has {} fields, expected 5: `{piece}`",
                    i + 1,
                    fields.len()
                )));
            }
            let pos: usize = fields[0]
                .parse()
                .map_err(|_| CorpusError::Semantic(format!("bad position `{}`", fields[0])))?;
            if pos != i + 1 {
                return Err(CorpusError::Semantic(format!(
                    "gold positions out of order at token {}",
                    i + 1
                )));
            }
            let source = match FwKind::from_src_tag(fields[2]) {
                Some(k) => TokenSource::Fw(k),
                None => TokenSource::Node(fields[2].parse().map_err(|_| {
                    CorpusError::Semantic(format!("bad source `{}`", fields[2]))
                })?),
            };
            let head: usize = fields[3]
                .parse()
                .map_err(|_| CorpusError::Semantic(format!("bad head `{}`", fields[3])))?;
            tokens.push(GoldToken {
                form: fields[1].to_string(),
                source,
                head,
                label: fields[4].to_string(),
            });
        }
        Ok(GoldRealization { tokens })
    }

    pub fn serialize_line(&self) -> String {
        self.tokens
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let src = match t.source {
                    TokenSource::Node(id) => id.to_string(),
                    TokenSource::Fw(k) => k.src_tag().to_string(),
                };
                format!("{}|{}|{}|{}|{}", i + 1, t.form, src, t.head, t.label)
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Checks gold invariants against its graph: every node appears exactly
    /// once among sources, heads in range, and the arcs form a single tree.
    pub fn validate(&self, g: &DeepGraph) -> Result<(), CorpusError> {
        let n = self.tokens.len();
        let mut seen: BTreeSet<NodeId> = BTreeSet::new();
        for t in &self.tokens {
            if t.head > n {
                return Err(CorpusError::Semantic(format!("head {} out of range", t.head)));
            }
            if let TokenSource::Node(id) = t.source {
                if !g.nodes.contains_key(&id) {
                    return Err(CorpusError::Semantic(format!("unknown source node {id}")));
                }
                if !seen.insert(id) {
                    return Err(CorpusError::Semantic(format!("node {id} appears twice")));
                }
            }
        }
        if seen.len() != g.len() {
            return Err(CorpusError::Semantic(format!(
                "gold covers {} of {} graph nodes",
                seen.len(),
                g.len()
            )));
        }
        let roots = self.tokens.iter().filter(|t| t.head == 0).count();
        if roots != 1 {
            return Err(CorpusError::Semantic(format!("{roots} root tokens, expected 1")));
        }
        // Single tree: every position reachable from the root.
        let root = self.tokens.iter().position(|t| t.head == 0).unwrap() + 1;
        let mut reach = BTreeSet::from([root]);
        let mut queue = VecDeque::from([root]);
        while let Some(p) = queue.pop_front() {
            for c in self.children_positions(p) {
                if reach.insert(c) {
                    queue.push_back(c);
                }
            }
        }
        if reach.len() != n {
            return Err(CorpusError::Semantic("gold arcs do not form a single tree".into()));
        }
        Ok(())
    }
}

/// Standard arc-crossing test over the gold tree.
pub fn is_projective(gold: &GoldRealization) -> bool {
    let arcs: Vec<(usize, usize)> = gold
        .tree_arcs()
        .iter()
        .map(|&(h, c, _)| (h.min(c), h.max(c)))
        .collect();
    for (i, &(a1, b1)) in arcs.iter().enumerate() {
        for &(a2, b2) in &arcs[i + 1..] {
            let (lo1, hi1, lo2, hi2) = if a1 <= a2 { (a1, b1, a2, b2) } else { (a2, b2, a1, b1) };
            if lo1 < lo2 && lo2 < hi1 && hi1 < hi2 {
                return false;
            }
        }
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiscardReason {
    NonProjective,
    EdgeMismatch,
    MultiChildFw,
    DetachedFw,
}

impl fmt::Display for DiscardReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DiscardReason::NonProjective => "NonProjective",
            DiscardReason::EdgeMismatch => "EdgeMismatch",
            DiscardReason::MultiChildFw => "MultiChildFW",
            DiscardReason::DetachedFw => "DetachedFW",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterDecision {
    Keep,
    Discard(DiscardReason),
}

/// Training-instance filter. Instances that fail any check are not
/// derivable by the projective transition system and are dropped.
pub fn filter_instance(g: &DeepGraph, gold: &GoldRealization) -> FilterDecision {
    if !is_projective(gold) {
        return FilterDecision::Discard(DiscardReason::NonProjective);
    }
    // Every gold arc between two graph-sourced tokens needs a graph arc.
    for (h, c, _) in gold.tree_arcs() {
        let (hs, cs) = (gold.token_at(h).unwrap().source, gold.token_at(c).unwrap().source);
        if let (TokenSource::Node(hn), TokenSource::Node(cn)) = (hs, cs) {
            if !g.has_arc(hn, cn) {
                return FilterDecision::Discard(DiscardReason::EdgeMismatch);
            }
        }
    }
    for (i, t) in gold.tokens.iter().enumerate() {
        if matches!(t.source, TokenSource::Fw(FwKind::To) | TokenSource::Fw(FwKind::That)) {
            let children = gold.children_positions(i + 1);
            if children.len() > 1 {
                return FilterDecision::Discard(DiscardReason::MultiChildFw);
            }
            let head_node = match gold.token_at(t.head).map(|t| t.source) {
                Some(TokenSource::Node(id)) => Some(id),
                _ => None,
            };
            let child_node = children
                .first()
                .and_then(|&c| match gold.token_at(c).unwrap().source {
                    TokenSource::Node(id) => Some(id),
                    _ => None,
                });
            match (head_node, child_node) {
                (Some(h), Some(c)) if g.has_arc(h, c) => {}
                _ => return FilterDecision::Discard(DiscardReason::DetachedFw),
            }
        }
    }
    FilterDecision::Keep
}

/// Parses one blank-line-free instance block of tab-separated
/// `SEM ID PID LEMMA ATTR LEXEME` rows. Rows that repeat an already
/// defined ID with `_` placeholders only add a reentrancy arc.
pub fn parse_instance(text: &str) -> Result<DeepGraph, CorpusError> {
    parse_instance_at(text, 1)
}

fn parse_instance_at(text: &str, first_line: usize) -> Result<DeepGraph, CorpusError> {
    let mut rows = Vec::new();
    for (offset, raw) in text.lines().enumerate() {
        let line_no = first_line + offset;
        if raw.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = raw.split('\t').collect();
        if cols.len() != 6 {
            return Err(parse_err(line_no, format!("expected 6 columns, found {}", cols.len())));
        }
        let id: NodeId = cols[1]
            .trim()
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad ID `{}`", cols[1])))?;
        if id == VIRTUAL_ROOT {
            return Err(parse_err(line_no, "node ID must be positive"));
        }
        let pid: NodeId = cols[2]
            .trim()
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad PID `{}`", cols[2])))?;
        rows.push((line_no, cols[0].trim().to_string(), id, pid, cols[3].trim().to_string(),
                   cols[4].trim().to_string(), cols[5].trim().to_string()));
    }
    if rows.is_empty() {
        return Err(CorpusError::Semantic("empty instance block".into()));
    }

    let mut g = DeepGraph::default();
    // First pass: node definitions (rows carrying a lemma).
    for (line_no, _, id, _, lemma, attr, lexeme) in &rows {
        if lemma == "_" || lemma.is_empty() {
            continue;
        }
        let attrs = Attrs::parse(attr).map_err(|e| parse_err(*line_no, e))?;
        let lexeme = if lexeme == "_" || lexeme.is_empty() {
            None
        } else {
            Some(lexeme.clone())
        };
        if let Some(existing) = g.node(*id) {
            if existing.lemma != *lemma {
                return Err(CorpusError::Semantic(format!(
                    "node {id} defined twice with conflicting lemmas `{}` and `{lemma}`",
                    existing.lemma
                )));
            }
        }
        g.add_node(Node { id: *id, lemma: lemma.clone(), attrs, lexeme });
    }
    // Second pass: arcs, including reentrancy rows.
    for (_, sem, id, pid, lemma, _, _) in &rows {
        if (lemma == "_" || lemma.is_empty()) && !g.nodes.contains_key(id) {
            return Err(CorpusError::Semantic(format!(
                "reentrancy row references undefined node {id}"
            )));
        }
        if *pid != VIRTUAL_ROOT && !g.nodes.contains_key(pid) {
            return Err(CorpusError::Semantic(format!("dangling PID {pid} for node {id}")));
        }
        g.add_arc(*pid, *id, sem.clone());
    }
    g.validate()?;
    Ok(g)
}

/// Serializes a graph back into an instance block. Primary rows are sorted
/// by id; extra-parent rows follow the primary row of their child with `_`
/// placeholders.
pub fn serialize_instance(g: &DeepGraph) -> String {
    // Primary arc per child: the minimum (head, label) pair.
    let mut primary: BTreeMap<NodeId, &Arc> = BTreeMap::new();
    for arc in &g.arcs {
        let slot = primary.entry(arc.child).or_insert(arc);
        if (arc.head, &arc.label) < (slot.head, &slot.label) {
            *slot = arc;
        }
    }
    let mut lines = Vec::new();
    for (id, node) in &g.nodes {
        let arc = primary[id];
        lines.push(format!(
            "{}\t{}\t{}\t{}\t{}\t{}",
            arc.label,
            id,
            arc.head,
            node.lemma,
            node.attrs.serialize(),
            node.lexeme.as_deref().unwrap_or("_")
        ));
        let mut extra: Vec<&Arc> = g
            .arcs
            .iter()
            .filter(|a| a.child == *id && (a.head, &a.label) != (arc.head, &arc.label))
            .collect();
        extra.sort();
        for a in extra {
            lines.push(format!("{}\t{}\t{}\t_\t_\t_", a.label, id, a.head));
        }
    }
    lines.join("\n")
}

/// Reads a `.deep` corpus: instance blocks separated by blank lines.
pub fn read_corpus(text: &str) -> Result<Vec<DeepGraph>, CorpusError> {
    let mut graphs = Vec::new();
    let mut block = String::new();
    let mut block_start = 1usize;
    let flush = |block: &mut String, start: usize, out: &mut Vec<DeepGraph>| -> Result<(), CorpusError> {
        if !block.trim().is_empty() {
            let g = parse_instance_at(block, start).map_err(|e| CorpusError::Instance {
                index: out.len() + 1,
                source: Box::new(e),
            })?;
            out.push(g);
        }
        block.clear();
        Ok(())
    };
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            flush(&mut block, block_start, &mut graphs)?;
            block_start = i + 2;
        } else {
            block.push_str(line);
            block.push('\n');
        }
    }
    flush(&mut block, block_start, &mut graphs)?;
    Ok(graphs)
}

pub fn write_corpus(graphs: &[DeepGraph]) -> String {
    graphs
        .iter()
        .map(serialize_instance)
        .collect::<Vec<_>>()
        .join("\n\n")
        + "\n"
}

/// Reads a `.gold` file: one realization line per instance.
pub fn read_gold(text: &str) -> Result<Vec<GoldRealization>, CorpusError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            GoldRealization::parse_line(l).map_err(|e| CorpusError::Instance {
                index: i + 1,
                source: Box::new(e),
            })
        })
        .collect()
}

pub fn write_gold(golds: &[GoldRealization]) -> String {
    golds
        .iter()
        .map(GoldRealization::serialize_line)
        .collect::<Vec<_>>()
        .join("\n")
        + "\n"
}

/// A deep graph augmented with explicit function-word nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShallowGraph {
    pub graph: DeepGraph,
    /// Synthesized nodes and what they stand for.
    pub inserted: BTreeMap<NodeId, FwKind>,
}

impl ShallowGraph {
    pub fn validate(&self) -> Result<(), CorpusError> {
        self.graph.validate()?;
        for (&id, &kind) in &self.inserted {
            let children = self.graph.children_of(id);
            match kind {
                FwKind::To | FwKind::That => {
                    if children.len() != 1 {
                        return Err(CorpusError::Semantic(format!(
                            "inserted {kind} node {id} has {} children, expected 1",
                            children.len()
                        )));
                    }
                }
                FwKind::Comma => {
                    if !children.is_empty() {
                        return Err(CorpusError::Semantic(format!(
                            "inserted comma node {id} must be a leaf"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The sample training instance block, verbatim rows.
    pub const SAMPLE_BLOCK: &str = "SROOT\t1\t0\tbe\ttense=pres\tare\n\
ADV\t2\t1\tmeanwhile\t_\tmeanwhile\n\
P\t3\t1\t.\t_\t.\n\
SBJ\t4\t1\tstart.02\tnum=pl\tstarts\n\
A1\t5\t4\thousing\tnum=sg\thousing\n\
AM-TMP\t6\t4\tseptember\tnum=sg\tseptember\n\
VC\t9\t1\tthink.01\tpartic=past\tthought\n\
A1\t4\t9\t_\t_\t_\n\
C-A1\t10\t9\thave\t_\thave\n\
VC\t11\t10\tinch.01\tpartic=past\tinched\n\
A1\t4\t11\t_\t_\t_\n\
A5\t12\t11\tupward\t_\tupward";

    #[test]
    fn parses_sample_block_with_reentrancy() {
        let g = parse_instance(SAMPLE_BLOCK).unwrap();
        assert_eq!(g.len(), 10);
        assert_eq!(g.parents_of(4), vec![1, 9, 11]);
        assert_eq!(g.root(), Some(1));
        assert_eq!(g.node(4).unwrap().attrs.num, Some(Number::Pl));
        assert_eq!(g.node(4).unwrap().lexeme.as_deref(), Some("starts"));
    }

    #[test]
    fn parses_minimal_instance() {
        let g = parse_instance("SROOT\t1\t0\tbe\ttense=pres\tis").unwrap();
        assert_eq!(g.len(), 1);
        assert!(g.has_arc(0, 1));
        assert_eq!(g.arc_label(0, 1), Some("SROOT"));
    }

    #[test]
    fn wrong_column_count_names_line() {
        let block = "SROOT\t1\t0\tbe\ttense=pres\tis\n\
ADV\t2\t1\tnow\t_\tnow\n\
P\t3\t1\t.\t_";
        let err = parse_instance(block).unwrap_err();
        match err {
            CorpusError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn conflicting_lemma_is_semantic_error() {
        let block = "SROOT\t1\t0\tbe\t_\t_\nSBJ\t1\t0\tgo\t_\t_";
        assert!(matches!(parse_instance(block), Err(CorpusError::Semantic(_))));
    }

    #[test]
    fn dangling_pid_is_semantic_error() {
        let block = "SROOT\t1\t0\tbe\t_\t_\nSBJ\t2\t7\tprice\t_\t_";
        assert!(matches!(parse_instance(block), Err(CorpusError::Semantic(_))));
    }

    #[test]
    fn roundtrips_sample_block() {
        let g = parse_instance(SAMPLE_BLOCK).unwrap();
        let text = serialize_instance(&g);
        let g2 = parse_instance(&text).unwrap();
        assert_eq!(g, g2);
        // Reentrancy rows carry placeholders.
        assert!(text.lines().any(|l| l.ends_with("_\t_\t_")));
        assert_eq!(text.lines().count(), 12);
    }

    fn chain_gold() -> GoldRealization {
        // a b c with arcs (b->a), (b->c)
        GoldRealization::parse_line("1|a|1|2|X 2|b|2|0|SROOT 3|c|3|2|Y").unwrap()
    }

    #[test]
    fn projectivity_chain() {
        assert!(is_projective(&chain_gold()));
    }

    #[test]
    fn projectivity_crossing() {
        // a b c d with arcs (a->c), (b->d), (a->b): (1,3) and (2,4) cross.
        let gold =
            GoldRealization::parse_line("1|a|1|0|SROOT 2|b|2|1|X 3|c|3|1|Y 4|d|4|2|Z").unwrap();
        assert!(!is_projective(&gold));
    }

    /// Brute-force crossing check used as an oracle on small cases.
    fn crosses_brute(arcs: &[(usize, usize)]) -> bool {
        for &(h1, c1) in arcs {
            for &(h2, c2) in arcs {
                let (a, b) = (h1.min(c1), h1.max(c1));
                let (c, d) = (h2.min(c2), h2.max(c2));
                if a < c && c < b && b < d {
                    return true;
                }
            }
        }
        false
    }

    #[test]
    fn projectivity_matches_bruteforce_on_four_tokens() {
        // All trees over 4 tokens rooted anywhere.
        for root in 1..=4usize {
            for h1 in 0..=4usize {
                for h2 in 0..=4usize {
                    for h3 in 0..=4usize {
                        for h4 in 0..=4usize {
                            let heads = [h1, h2, h3, h4];
                            if heads.iter().filter(|&&h| h == 0).count() != 1 {
                                continue;
                            }
                            if heads[root - 1] != 0 {
                                continue;
                            }
                            if heads.iter().enumerate().any(|(i, &h)| h == i + 1) {
                                continue;
                            }
                            let line: String = heads
                                .iter()
                                .enumerate()
                                .map(|(i, h)| format!("{}|w{}|{}|{}|L", i + 1, i, i + 1, h))
                                .collect::<Vec<_>>()
                                .join(" ");
                            let gold = GoldRealization::parse_line(&line).unwrap();
                            let arcs: Vec<(usize, usize)> = gold
                                .tree_arcs()
                                .iter()
                                .map(|&(h, c, _)| (h, c))
                                .collect();
                            assert_eq!(is_projective(&gold), !crosses_brute(&arcs));
                        }
                    }
                }
            }
        }
    }

    fn tiny_graph() -> DeepGraph {
        parse_instance("SROOT\t1\t0\trun\ttense=pres\truns\nSBJ\t2\t1\tdog\tnum=sg\tdog").unwrap()
    }

    #[test]
    fn filter_keeps_consistent_instance() {
        let g = tiny_graph();
        let gold = GoldRealization::parse_line("1|dog|2|2|SBJ 2|runs|1|0|SROOT").unwrap();
        gold.validate(&g).unwrap();
        assert_eq!(filter_instance(&g, &gold), FilterDecision::Keep);
    }

    #[test]
    fn filter_discards_edge_mismatch() {
        let g = tiny_graph();
        // Gold hangs the verb under the noun; no such graph arc.
        let gold = GoldRealization::parse_line("1|dog|2|0|SROOT 2|runs|1|1|X").unwrap();
        assert_eq!(
            filter_instance(&g, &gold),
            FilterDecision::Discard(DiscardReason::EdgeMismatch)
        );
    }

    #[test]
    fn filter_discards_multichild_fw() {
        let g = parse_instance(
            "SROOT\t1\t0\twant\ttense=pres\twants\nSBJ\t2\t1\the\t_\the\nVC\t3\t1\tgo\t_\tgo",
        )
        .unwrap();
        // TO token with two dependents.
        let gold = GoldRealization::parse_line(
            "1|he|2|4|SBJ 2|wants|1|0|SROOT 3|to|TO|2|VC 4|go|3|3|VC",
        )
        .unwrap();
        // position 3 (TO) gets children 1 and 4
        let mut tokens = gold.tokens.clone();
        tokens[0].head = 3;
        let gold = GoldRealization { tokens };
        assert_eq!(
            filter_instance(&g, &gold),
            FilterDecision::Discard(DiscardReason::MultiChildFw)
        );
    }

    #[test]
    fn filter_discards_detached_fw() {
        let g = parse_instance(
            "SROOT\t1\t0\twant\ttense=pres\twants\nSBJ\t2\t1\the\t_\the\nVC\t3\t1\tgo\t_\tgo",
        )
        .unwrap();
        // TO headed by the subject, which has no arc to `go`.
        let gold = GoldRealization::parse_line(
            "1|he|2|2|SBJ 2|wants|1|0|SROOT 3|to|TO|1|VC 4|go|3|3|VC",
        )
        .unwrap();
        assert_eq!(
            filter_instance(&g, &gold),
            FilterDecision::Discard(DiscardReason::DetachedFw)
        );
    }

    #[test]
    fn filter_discards_nonprojective() {
        let g = parse_instance(
            "SROOT\t1\t0\ta\t_\t_\nX\t2\t1\tb\t_\t_\nY\t3\t1\tc\t_\t_\nZ\t4\t2\td\t_\t_",
        )
        .unwrap();
        let gold =
            GoldRealization::parse_line("1|a|1|0|SROOT 2|b|2|1|X 3|c|3|1|Y 4|d|4|2|Z").unwrap();
        assert_eq!(
            filter_instance(&g, &gold),
            FilterDecision::Discard(DiscardReason::NonProjective)
        );
    }

    #[test]
    fn closure_descendants_and_siblings() {
        let g = parse_instance(SAMPLE_BLOCK).unwrap();
        let c = Closure::build(&g);
        assert!(c.is_descendant(4, 1));
        assert!(c.is_descendant(12, 1));
        assert!(!c.is_descendant(1, 4));
        // node 5 and 6 share parent 4
        assert!(c.are_siblings(5, 6));
        assert_eq!(c.common_parents(5, 6), vec![4]);
        // reentrant node 4 is a sibling of 10 through parent 9
        assert!(c.are_siblings(4, 10));
    }

    #[test]
    fn gold_file_roundtrip() {
        let line = "1|meanwhile|7|4|ADV 2|,|COMMA|4|P 3|prices|2|4|SBJ 4|are|5|0|SROOT";
        let gold = GoldRealization::parse_line(line).unwrap();
        assert_eq!(gold.serialize_line(), line);
    }
}
