//! Feature extraction for linearization states and action scoring.
//!
//! Three template families: configuration features over the stack, built
//! arcs and emitted surface; lookahead features over the graph neighborhood
//! of the candidate word to shift (and, identically, of the stack top); and
//! graph features relating the top two stack items and the candidate.
//! Features are raw strings conjoined with the action identity at scoring
//! time.

use std::collections::BTreeMap;

use crate::constraints::DecodeContext;
use crate::graph::{DeepGraph, GoldRealization, NodeId, TokenSource};
use crate::learner::Model;
use crate::morphology::{InflTag, Lexicon};
use crate::transition::{Action, RealizerState};

/// Reserved filler for missing positions.
pub const NONE: &str = "<none>";

pub type FeatureVector = Vec<String>;

/// Active template ids, in extraction order.
pub const TEMPLATES: &[&str] = &[
    // configuration unigrams
    "S0w", "S0p", "S0lw", "S0lp", "S0ll", "S0rw", "S0rp", "S0rl",
    // configuration bigrams
    "S0wS0lw", "S0wS0lp", "S0wS0ll", "S0pS0lw",
    // surface n-grams
    "w0", "p0", "w-1w0", "p-1p0", "w-2w-1w0", "p-2p-1p0",
    // deferred-split marker
    "pending",
    // lookahead, anchored on the candidate L
    "Lcls", "Lclns", "Lcps", "Lcpns", "S0wLcls", "S0pLcls", "S1wLcls", "S1pLcls",
    "Lsls", "Lslns", "Lsps", "Lspns", "S0wLsls", "S0pLsls", "S1wLsls", "S1pLsls",
    "Lpls", "Lplns", "Lpps", "Lppns", "S0wLpls", "S0pLpls", "S1wLpls", "S1pLpls",
    // lookahead, anchored on S0
    "S0cls", "S0clns", "S0cps", "S0cpns", "S0wS0cls", "S0pS0cls", "S1wS0cls", "S1pS0cls",
    "S0sls", "S0slns", "S0sps", "S0spns", "S0wS0sls", "S0pS0sls", "S1wS0sls", "S1pS0sls",
    "S0pls", "S0plns", "S0pps", "S0ppns", "S0wS0pls", "S0pS0pls", "S1wS0pls", "S1pS0pls",
    // graph features
    "arcL", "arcR", "Ldesc", "Lparsib", "S0ds",
    "S0ds_arcL", "S0ds_arcR", "S0ds_Ldesc", "S0ds_Lparsib",
];

fn sanitize(s: &str) -> String {
    if s.contains(['\t', '\n', '\r']) {
        s.replace(['\t', '\n', '\r'], "_")
    } else {
        s.to_string()
    }
}

/// Lemma to most-frequent POS tag, total via a global-majority fallback.
#[derive(Debug, Clone)]
pub struct PosMap {
    map: BTreeMap<String, String>,
    fallback: String,
}

impl Default for PosMap {
    fn default() -> Self {
        PosMap { map: BTreeMap::new(), fallback: "NN".to_string() }
    }
}

/// Tag of a (lemma, form) pair as evidenced by the lexicon; the training
/// data carries no POS column, so tags are reconstructed from inflections.
pub fn tag_of(lemma: &str, form: &str, lex: &Lexicon) -> &'static str {
    match lemma {
        "be" => {
            return match form {
                "is" => "VBZ",
                "am" | "are" => "VBP",
                "was" | "were" => "VBD",
                "being" => "VBG",
                "been" => "VBN",
                _ => "VB",
            }
        }
        "," => return ",",
        "." => return ".",
        "to" => return "TO",
        "that" => return "IN",
        "a" => return "DT",
        "not" => return "RB",
        _ => {}
    }
    for tag in InflTag::ALL {
        if lex.lookup(lemma, tag) == Some(form) {
            return tag.as_str();
        }
    }
    let verbish = [InflTag::Vbz, InflTag::Vbd, InflTag::Vbg, InflTag::Vbn]
        .iter()
        .any(|&t| lex.lookup(lemma, t).is_some());
    if verbish {
        "VB"
    } else if lex.lookup(lemma, InflTag::Nn).is_some() || lex.lookup(lemma, InflTag::Nns).is_some()
    {
        "NN"
    } else {
        "RB"
    }
}

impl PosMap {
    pub fn pos_of(&self, lemma: &str) -> &str {
        self.map.get(lemma).map(|s| s.as_str()).unwrap_or(&self.fallback)
    }

    /// Tallies tags over the gold tokens of a training corpus.
    pub fn learn(instances: &[(DeepGraph, GoldRealization)], lex: &Lexicon) -> PosMap {
        let mut counts: BTreeMap<String, BTreeMap<&'static str, usize>> = BTreeMap::new();
        for (g, gold) in instances {
            for t in &gold.tokens {
                let lemma = match t.source {
                    TokenSource::Node(id) => match g.node(id) {
                        Some(n) => n.lemma.clone(),
                        None => continue,
                    },
                    TokenSource::Fw(k) => k.surface().to_string(),
                };
                let tag = tag_of(&lemma, &t.form, lex);
                *counts.entry(lemma).or_default().entry(tag).or_insert(0) += 1;
            }
        }
        let mut map = BTreeMap::new();
        let mut global: BTreeMap<&'static str, usize> = BTreeMap::new();
        for (lemma, tags) in &counts {
            for (tag, c) in tags {
                *global.entry(tag).or_insert(0) += c;
            }
            let best = tags.iter().max_by_key(|(tag, c)| (**c, std::cmp::Reverse(**tag)));
            map.insert(lemma.clone(), best.unwrap().0.to_string());
        }
        let fallback = global
            .iter()
            .max_by_key(|(tag, c)| (**c, std::cmp::Reverse(**tag)))
            .map(|(t, _)| t.to_string())
            .unwrap_or_else(|| "NN".to_string());
        PosMap { map, fallback }
    }

    pub fn parse(text: &str) -> Result<PosMap, String> {
        let mut map = BTreeMap::new();
        let mut fallback = "NN".to_string();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (lemma, tag) = line
                .split_once('\t')
                .ok_or_else(|| format!("posmap line {}: expected 2 columns", i + 1))?;
            if lemma == "<fallback>" {
                fallback = tag.to_string();
            } else {
                map.insert(lemma.to_string(), tag.to_string());
            }
        }
        Ok(PosMap { map, fallback })
    }

    pub fn serialize(&self) -> String {
        let mut out = format!("<fallback>\t{}\n", self.fallback);
        for (lemma, tag) in &self.map {
            out.push_str(&format!("{lemma}\t{tag}\n"));
        }
        out
    }
}

fn set_value(mut items: Vec<String>) -> String {
    items.sort();
    items.dedup();
    format!("{{{}}}", items.join(","))
}

struct StackView<'a> {
    s0w: &'a str,
    s0p: &'a str,
    s1w: &'a str,
    s1p: &'a str,
}

fn stack_view<'a>(state: &'a RealizerState) -> StackView<'a> {
    let (s0w, s0p) = match state.top() {
        Some(item) => {
            let t = &state.emitted[item.emit];
            (t.form.as_str(), t.pos.as_str())
        }
        None => (NONE, NONE),
    };
    let (s1w, s1p) = match state.second() {
        Some(item) => {
            let t = &state.emitted[item.emit];
            (t.form.as_str(), t.pos.as_str())
        }
        None => (NONE, NONE),
    };
    StackView { s0w, s0p, s1w, s1p }
}

/// Configuration features: stack-top unigrams/bigrams over built children
/// plus surface n-grams over the emitted tokens.
pub fn config_features(state: &RealizerState, ctx: &DecodeContext) -> FeatureVector {
    let _ = ctx;
    let v = stack_view(state);
    let mut out = Vec::with_capacity(18);

    // Leftmost and rightmost built children of S0.
    let (mut lw, mut lp, mut ll) = (NONE.to_string(), NONE.to_string(), NONE.to_string());
    let (mut rw, mut rp, mut rl) = (NONE.to_string(), NONE.to_string(), NONE.to_string());
    if let Some(top) = state.top() {
        let children = state.built_children(top.node);
        if let Some(first) = children.first() {
            if let Some(pos) = state.emit_of(first.child) {
                lw = state.emitted[pos].form.clone();
                lp = state.emitted[pos].pos.clone();
                ll = first.label.clone();
            }
        }
        if children.len() > 1 {
            let last = children.last().unwrap();
            if let Some(pos) = state.emit_of(last.child) {
                rw = state.emitted[pos].form.clone();
                rp = state.emitted[pos].pos.clone();
                rl = last.label.clone();
            }
        }
    }
    out.push(format!("S0w:{}", sanitize(v.s0w)));
    out.push(format!("S0p:{}", v.s0p));
    out.push(format!("S0lw:{}", sanitize(&lw)));
    out.push(format!("S0lp:{lp}"));
    out.push(format!("S0ll:{ll}"));
    out.push(format!("S0rw:{}", sanitize(&rw)));
    out.push(format!("S0rp:{rp}"));
    out.push(format!("S0rl:{rl}"));
    out.push(format!("S0wS0lw:{}_{}", sanitize(v.s0w), sanitize(&lw)));
    out.push(format!("S0wS0lp:{}_{lp}", sanitize(v.s0w)));
    out.push(format!("S0wS0ll:{}_{ll}", sanitize(v.s0w)));
    out.push(format!("S0pS0lw:{}_{}", v.s0p, sanitize(&lw)));

    // Surface n-grams over emitted tokens.
    let word = |back: usize| -> &str {
        let n = state.emitted.len();
        if back < n {
            state.emitted[n - 1 - back].form.as_str()
        } else {
            NONE
        }
    };
    let pos = |back: usize| -> &str {
        let n = state.emitted.len();
        if back < n {
            state.emitted[n - 1 - back].pos.as_str()
        } else {
            NONE
        }
    };
    out.push(format!("w0:{}", sanitize(word(0))));
    out.push(format!("p0:{}", pos(0)));
    out.push(format!("w-1w0:{}_{}", sanitize(word(1)), sanitize(word(0))));
    out.push(format!("p-1p0:{}_{}", pos(1), pos(0)));
    out.push(format!(
        "w-2w-1w0:{}_{}_{}",
        sanitize(word(2)),
        sanitize(word(1)),
        sanitize(word(0))
    ));
    out.push(format!("p-2p-1p0:{}_{}_{}", pos(2), pos(1), pos(0)));
    out.push(format!(
        "pending:{}",
        state.pending_split.map(|w| w.surface()).unwrap_or(NONE)
    ));
    out
}

/// The four set values (labels/POS, shifted/unshifted) of one relation
/// family around an anchor node.
fn relation_sets(
    state: &RealizerState,
    ctx: &DecodeContext,
    anchor: NodeId,
    relation: Relation,
) -> [String; 4] {
    let mut ls = Vec::new(); // labels, shifted
    let mut lns = Vec::new(); // labels, not shifted
    let mut ps = Vec::new(); // POS, shifted
    let mut pns = Vec::new();
    let mut push = |other: NodeId, label: String| {
        let pos = ctx.pos_of(other).to_string();
        if state.is_shifted(other) {
            ls.push(label);
            ps.push(pos);
        } else {
            lns.push(label);
            pns.push(pos);
        }
    };
    match relation {
        Relation::Children => {
            for &c in ctx.closure.children(anchor) {
                let label = ctx.graph.arc_label(anchor, c).unwrap_or(NONE).to_string();
                push(c, label);
            }
        }
        Relation::Siblings => {
            for &p in ctx.closure.parents(anchor) {
                for &t in ctx.closure.children(p) {
                    if t == anchor {
                        continue;
                    }
                    let label = ctx.graph.arc_label(p, t).unwrap_or(NONE).to_string();
                    push(t, label);
                }
            }
        }
        Relation::Parents => {
            for &p in ctx.closure.parents(anchor) {
                let label = ctx.graph.arc_label(p, anchor).unwrap_or(NONE).to_string();
                push(p, label);
            }
        }
    }
    [set_value(ls), set_value(lns), set_value(ps), set_value(pns)]
}

#[derive(Clone, Copy)]
enum Relation {
    Children,
    Siblings,
    Parents,
}

fn family(
    out: &mut FeatureVector,
    state: &RealizerState,
    ctx: &DecodeContext,
    anchor: Option<NodeId>,
    prefix: &str,
) {
    let v = stack_view(state);
    for (rel, tag) in [
        (Relation::Children, 'c'),
        (Relation::Siblings, 's'),
        (Relation::Parents, 'p'),
    ] {
        let [ls, lns, ps, pns] = match anchor {
            Some(a) => relation_sets(state, ctx, a, rel),
            None => [NONE.to_string(), NONE.to_string(), NONE.to_string(), NONE.to_string()],
        };
        out.push(format!("{prefix}{tag}ls:{ls}"));
        out.push(format!("{prefix}{tag}lns:{lns}"));
        out.push(format!("{prefix}{tag}ps:{ps}"));
        out.push(format!("{prefix}{tag}pns:{pns}"));
        out.push(format!("S0w{prefix}{tag}ls:{}_{ls}", sanitize(v.s0w)));
        out.push(format!("S0p{prefix}{tag}ls:{}_{ls}", v.s0p));
        out.push(format!("S1w{prefix}{tag}ls:{}_{ls}", sanitize(v.s1w)));
        out.push(format!("S1p{prefix}{tag}ls:{}_{ls}", v.s1p));
    }
}

/// Lookahead features for the candidate shift node `L`, plus the identical
/// family anchored on the stack top.
pub fn lookahead_features(
    state: &RealizerState,
    ctx: &DecodeContext,
    candidate: Option<NodeId>,
) -> FeatureVector {
    let mut out = Vec::with_capacity(48);
    family(&mut out, state, ctx, candidate, "L");
    family(&mut out, state, ctx, state.top().map(|s| s.node), "S0");
    out
}

/// Graph features: arcs between the top two stack items, the relation of
/// the candidate to the stack top, and subtree completion of the stack top.
pub fn graph_features(
    state: &RealizerState,
    ctx: &DecodeContext,
    candidate: Option<NodeId>,
) -> FeatureVector {
    let flag = |b: bool| if b { "1" } else { "0" };
    let (arc_l, arc_r) = match (state.top(), state.second()) {
        (Some(top), Some(second)) => (
            flag(ctx.graph.has_arc(top.node, second.node)),
            flag(ctx.graph.has_arc(second.node, top.node)),
        ),
        _ => (NONE, NONE),
    };
    let (l_desc, l_parsib) = match (candidate, state.top()) {
        (Some(l), Some(top)) => (
            flag(ctx.closure.is_descendant(l, top.node)),
            flag(
                ctx.closure.parents(top.node).contains(&l)
                    || ctx.closure.are_siblings(l, top.node),
            ),
        ),
        _ => (NONE, NONE),
    };
    let s0ds = match state.top() {
        Some(top) => flag(
            ctx.closure
                .descendants(top.node)
                .iter()
                .all(|d| state.is_shifted(*d)),
        ),
        None => NONE,
    };
    vec![
        format!("arcL:{arc_l}"),
        format!("arcR:{arc_r}"),
        format!("Ldesc:{l_desc}"),
        format!("Lparsib:{l_parsib}"),
        format!("S0ds:{s0ds}"),
        format!("S0ds_arcL:{s0ds}_{arc_l}"),
        format!("S0ds_arcR:{s0ds}_{arc_r}"),
        format!("S0ds_Ldesc:{s0ds}_{l_desc}"),
        format!("S0ds_Lparsib:{s0ds}_{l_parsib}"),
    ]
}

/// Full feature vector for one candidate action at a state.
pub fn phi(state: &RealizerState, ctx: &DecodeContext, action: &Action) -> FeatureVector {
    let candidate = match action {
        Action::Shift { node, .. } => Some(*node),
        _ => None,
    };
    let mut out = config_features(state, ctx);
    out.extend(lookahead_features(state, ctx, candidate));
    out.extend(graph_features(state, ctx, candidate));
    out
}

/// Joins a feature with the action identity into a model key.
pub fn key(feature: &str, action_id: &str) -> String {
    format!("{feature}=>{action_id}")
}

/// Linear score of an action: the sum of weights of its conjoined features.
pub fn score_action(
    model: &Model,
    state: &RealizerState,
    ctx: &DecodeContext,
    action: &Action,
) -> f64 {
    let id = action.id_string();
    phi(state, ctx, action)
        .iter()
        .map(|f| model.weight(&key(f, &id)))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::DecodeContext;
    use crate::graph::parse_instance;
    use crate::morphology::Lexicon;
    use crate::transition::{apply, initial_state, Mode};

    fn setup() -> (DeepGraph, Lexicon, PosMap) {
        let g = parse_instance(crate::fixtures::FIG2_DEEP).unwrap();
        let lex = Lexicon::parse(crate::fixtures::TOY_LEXICON).unwrap();
        let gold = GoldRealization::parse_line(crate::fixtures::FIG2_GOLD.trim()).unwrap();
        let posmap = PosMap::learn(&[(g.clone(), gold)], &lex);
        (g, lex, posmap)
    }

    #[test]
    fn posmap_is_total_and_learned() {
        let (_, _, posmap) = setup();
        assert_eq!(posmap.pos_of("price"), "NNS");
        assert_eq!(posmap.pos_of("increase"), "VBN");
        assert_eq!(posmap.pos_of(","), ",");
        // unseen lemma falls back
        assert!(!posmap.pos_of("zorp").is_empty());
    }

    #[test]
    fn posmap_roundtrip() {
        let (_, _, posmap) = setup();
        let parsed = PosMap::parse(&posmap.serialize()).unwrap();
        assert_eq!(parsed.serialize(), posmap.serialize());
    }

    #[test]
    fn empty_state_features_are_none_filled() {
        let (g, lex, posmap) = setup();
        let ctx = DecodeContext::new(&g, Mode::Joint, &lex, &posmap);
        let s = initial_state(&g);
        let feats = config_features(&s, &ctx);
        assert!(feats.contains(&format!("S0w:{NONE}")));
        assert!(feats.contains(&format!("w-1w0:{NONE}_{NONE}")));
        assert!(feats.contains(&format!("pending:{NONE}")));
        assert_eq!(feats.len(), 19);
    }

    #[test]
    fn surface_bigram_reads_emitted_suffix() {
        let (g, lex, posmap) = setup();
        let ctx = DecodeContext::new(&g, Mode::Joint, &lex, &posmap);
        let mut s = initial_state(&g);
        for (node, form) in [(7, "meanwhile"), (2, "prices"), (5, "are")] {
            let a = Action::Shift {
                node,
                pos: posmap.pos_of(&g.node(node).unwrap().lemma).to_string(),
                form: form.to_string(),
            };
            s = apply(&g, &s, &a).unwrap();
        }
        // emitted "meanwhile prices are"
        let feats = config_features(&s, &ctx);
        assert!(feats.contains(&"w-1w0:prices_are".to_string()));
    }

    #[test]
    fn lookahead_parent_labels_for_candidate() {
        let (g, lex, posmap) = setup();
        let ctx = DecodeContext::new(&g, Mode::Joint, &lex, &posmap);
        let s = initial_state(&g);
        // L = node 1 (think); its only parent 5 is unshifted with label VC.
        let feats = lookahead_features(&s, &ctx, Some(1));
        assert!(feats.contains(&"Lplns:{VC}".to_string()));
        assert!(feats.contains(&"Lpls:{}".to_string()));
    }

    #[test]
    fn set_values_are_order_independent() {
        let a = set_value(vec!["SBJ".to_string(), "P".to_string()]);
        let b = set_value(vec!["P".to_string(), "SBJ".to_string()]);
        assert_eq!(a, b);
        assert_eq!(a, "{P,SBJ}");
    }

    #[test]
    fn arc_right_flag_for_stack_pair() {
        let (g, lex, posmap) = setup();
        let ctx = DecodeContext::new(&g, Mode::Joint, &lex, &posmap);
        let mut s = initial_state(&g);
        for (node, form) in [(5, "are"), (1, "thought")] {
            let a = Action::Shift { node, pos: "V".to_string(), form: form.to_string() };
            s = apply(&g, &s, &a).unwrap();
        }
        // stack [5, 1]: arc 5 -> 1 exists, so arcR fires.
        let feats = graph_features(&s, &ctx, None);
        assert!(feats.contains(&"arcR:1".to_string()));
        assert!(feats.contains(&"arcL:0".to_string()));
    }

    #[test]
    fn short_stack_arc_flags_are_none() {
        let (g, lex, posmap) = setup();
        let ctx = DecodeContext::new(&g, Mode::Joint, &lex, &posmap);
        let s = initial_state(&g);
        let feats = graph_features(&s, &ctx, None);
        assert!(feats.contains(&format!("arcL:{NONE}")));
        assert!(feats.contains(&format!("S0ds:{NONE}")));
    }

    #[test]
    fn determinism() {
        let (g, lex, posmap) = setup();
        let ctx = DecodeContext::new(&g, Mode::Joint, &lex, &posmap);
        let s = initial_state(&g);
        let a = Action::Shift { node: 7, pos: "RB".to_string(), form: "meanwhile".to_string() };
        assert_eq!(phi(&s, &ctx, &a), phi(&s, &ctx, &a));
    }
}
