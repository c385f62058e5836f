//! Synthetic corpus generation. A small template grammar over the toy
//! lexicon produces deep graphs with gold realizations: subject/verb/object
//! cores with number agreement, infinitival complements introducing TO,
//! subject relative clauses introducing THAT, adverbials introducing
//! commas, participle and raising constructions, and control-style
//! reentrancy giving nodes multiple parents. Every generated instance
//! passes the training filter by construction.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::features::PosMap;
use crate::graph::{
    filter_instance, Attrs, DeepGraph, FilterDecision, FwKind, GoldRealization, GoldToken, Node,
    NodeId, Number, Partic, Tense, TokenSource,
};
use crate::learner::{oracle_derivation, verify_replay, LearnError};
use crate::morphology::{InflTag, Lexicon};
use crate::transition::Mode;

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub sentences: usize,
    /// Cap on the noun and verb pools drawn from the lexicon.
    pub vocab: usize,
    /// Cap on nodes per sentence, optional parts are dropped beyond it.
    pub max_nodes: usize,
    pub p_reentrancy: f64,
    pub p_to: f64,
    pub p_that: f64,
    pub p_comma: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> SynthSpec {
        SynthSpec {
            sentences: 100,
            vocab: 60,
            max_nodes: 12,
            p_reentrancy: 0.3,
            p_to: 0.3,
            p_that: 0.2,
            p_comma: 0.5,
            seed: 1,
        }
    }
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("generator produced an invalid instance: {0}")]
    Invalid(String),
    #[error(transparent)]
    Oracle(#[from] LearnError),
}

const ADVERBS: &[&str] = &[
    "meanwhile", "however", "yesterday", "today", "recently", "moreover", "nevertheless",
    "eventually", "earlier", "separately",
];

/// One content word of a draft sentence, before ids are assigned.
struct Slot {
    lemma: String,
    attrs: Attrs,
    form: String,
    /// Index of the structural parent slot; usize::MAX for the root.
    parent: usize,
    label: &'static str,
    /// Extra reentrant parents as (parent slot, label).
    extra_parents: Vec<(usize, &'static str)>,
}

enum DraftTok {
    /// Content slot index.
    Slot(usize),
    Comma,
    /// Function word splitting the arc into the next slot.
    Split(FwKind),
}

struct Draft {
    slots: Vec<Slot>,
    order: Vec<DraftTok>,
}

#[derive(Clone, Copy, PartialEq)]
enum Extension {
    None,
    ToControl { reentrant: bool },
    ThatRel { reentrant: bool },
    BeParticiple,
    BeRaising { reentrant: bool },
}

struct Pools {
    nouns: Vec<String>,
    verbs: Vec<String>,
}

fn pools(lex: &Lexicon, vocab: usize) -> Pools {
    let mut nouns = Vec::new();
    let mut verbs = Vec::new();
    let mut seen_n = std::collections::BTreeSet::new();
    let mut seen_v = std::collections::BTreeSet::new();
    for line in crate::fixtures::TOY_LEXICON.lines() {
        let mut cols = line.split('\t');
        let (lemma, tag) = match (cols.next(), cols.next()) {
            (Some(l), Some(t)) => (l, t),
            _ => continue,
        };
        if tag == "NN" && lex.lookup(lemma, InflTag::Nns).is_some() && seen_n.insert(lemma) {
            nouns.push(lemma.to_string());
        }
        if tag == "VBZ" && lemma != "have" && seen_v.insert(lemma) {
            verbs.push(lemma.to_string());
        }
    }
    nouns.truncate(vocab.max(8));
    verbs.truncate(vocab.max(8));
    Pools { nouns, verbs }
}

struct Picker<'a> {
    rng: &'a mut ChaCha8Rng,
    used: std::collections::BTreeSet<String>,
}

impl<'a> Picker<'a> {
    fn pick(&mut self, pool: &[String]) -> String {
        for _ in 0..64 {
            let lemma = pool[self.rng.gen_range(0..pool.len())].clone();
            if self.used.insert(lemma.clone()) {
                return lemma;
            }
        }
        // Tiny pools may exhaust; fall back to reuse.
        pool[self.rng.gen_range(0..pool.len())].clone()
    }

    fn pick_adverb(&mut self) -> String {
        for _ in 0..64 {
            let lemma = ADVERBS[self.rng.gen_range(0..ADVERBS.len())].to_string();
            if self.used.insert(lemma.clone()) {
                return lemma;
            }
        }
        ADVERBS[0].to_string()
    }
}

fn noun_attrs(rng: &mut ChaCha8Rng) -> (Attrs, Number) {
    let num = if rng.gen_bool(0.5) { Number::Sg } else { Number::Pl };
    let mut attrs = Attrs::default();
    attrs.num = Some(num);
    (attrs, num)
}

fn noun_form(lex: &Lexicon, lemma: &str, num: Number) -> String {
    let tag = match num {
        Number::Sg => InflTag::Nn,
        Number::Pl => InflTag::Nns,
    };
    lex.get(lemma, tag).0
}

fn finite_verb(
    rng: &mut ChaCha8Rng,
    lex: &Lexicon,
    lemma: &str,
    subj_num: Number,
) -> (Attrs, String) {
    let mut attrs = Attrs::default();
    if rng.gen_bool(0.5) {
        attrs.tense = Some(Tense::Pres);
        let form = match subj_num {
            Number::Sg => lex.get(lemma, InflTag::Vbz).0,
            Number::Pl => lemma.to_string(),
        };
        (attrs, form)
    } else {
        attrs.tense = Some(Tense::Past);
        let form = lex.get(lemma, InflTag::Vbd).0;
        (attrs, form)
    }
}

fn be_form(tense: Tense, subj_num: Number) -> &'static str {
    match (tense, subj_num) {
        (Tense::Pres, Number::Sg) => "is",
        (Tense::Pres, Number::Pl) => "are",
        (Tense::Past, Number::Sg) => "was",
        (Tense::Past, Number::Pl) => "were",
    }
}

fn build_draft(rng: &mut ChaCha8Rng, lex: &Lexicon, pools: &Pools, spec: &SynthSpec) -> Draft {
    let mut picker = Picker { rng, used: Default::default() };

    let extension = {
        let rng = &mut *picker.rng;
        if rng.gen_bool(spec.p_reentrancy.clamp(0.0, 1.0)) {
            if rng.gen_bool(0.5) {
                Extension::ToControl { reentrant: true }
            } else {
                Extension::ThatRel { reentrant: true }
            }
        } else {
            let r: f64 = rng.gen();
            if r < spec.p_to {
                Extension::ToControl { reentrant: false }
            } else if r < spec.p_to + spec.p_that {
                Extension::ThatRel { reentrant: false }
            } else if r < spec.p_to + spec.p_that + 0.15 {
                Extension::BeParticiple
            } else if r < spec.p_to + spec.p_that + 0.25 {
                Extension::BeRaising { reentrant: false }
            } else {
                Extension::None
            }
        }
    };

    // Count fixed nodes per extension to budget the optional parts.
    let core_nodes = match extension {
        Extension::None => 3,              // s v .
        Extension::ToControl { .. } => 4,  // s v v2 .
        Extension::ThatRel { .. } => 5,    // s vr o3 v .
        Extension::BeParticiple => 4,      // s be vp .
        Extension::BeRaising { .. } => 6,  // s be vn have vn2 .
    };
    let mut budget = spec.max_nodes.max(core_nodes + 1) - core_nodes;

    let mut adv1 = None;
    let mut adv2 = None;
    let mut want_object = false;
    {
        let roll_adv1 = picker.rng.gen_bool(0.35);
        let roll_adv2 = picker.rng.gen_bool(0.25);
        let roll_obj = picker.rng.gen_bool(0.6);
        if roll_adv1 && budget > 0 {
            adv1 = Some(picker.pick_adverb());
            budget -= 1;
        }
        if matches!(extension, Extension::None | Extension::ThatRel { .. }) && roll_obj && budget > 0
        {
            want_object = true;
            budget -= 1;
        }
        let adv2_allowed = matches!(
            extension,
            Extension::None | Extension::ToControl { .. } | Extension::ThatRel { .. }
        );
        if adv2_allowed && roll_adv2 && budget > 0 {
            adv2 = Some(picker.pick_adverb());
            budget -= 1;
        }
    }
    let want_o2 = matches!(extension, Extension::ToControl { .. })
        && budget > 0
        && picker.rng.gen_bool(0.5);

    let comma1 = adv1.is_some() && picker.rng.gen_bool(spec.p_comma);
    let comma2 = adv2.is_some() && picker.rng.gen_bool(spec.p_comma);

    let subj_lemma = picker.pick(&pools.nouns);
    let (subj_attrs, subj_num) = noun_attrs(picker.rng);
    let subj_form = noun_form(lex, &subj_lemma, subj_num);

    let mut slots: Vec<Slot> = Vec::new();
    let mut order: Vec<DraftTok> = Vec::new();
    let add_slot = |slots: &mut Vec<Slot>, lemma: String, attrs: Attrs, form: String| {
        slots.push(Slot { lemma, attrs, form, parent: usize::MAX, label: "", extra_parents: Vec::new() });
        slots.len() - 1
    };

    // Root verb or copula.
    let uses_be = matches!(extension, Extension::BeParticiple | Extension::BeRaising { .. });
    let root = if uses_be {
        let mut attrs = Attrs::default();
        let tense = if picker.rng.gen_bool(0.7) { Tense::Pres } else { Tense::Past };
        attrs.tense = Some(tense);
        add_slot(&mut slots, "be".into(), attrs, be_form(tense, subj_num).into())
    } else {
        let lemma = picker.pick(&pools.verbs);
        let (attrs, form) = finite_verb(picker.rng, lex, &lemma, subj_num);
        add_slot(&mut slots, lemma, attrs, form)
    };

    let subj = add_slot(&mut slots, subj_lemma, subj_attrs, subj_form);
    slots[subj].parent = root;
    slots[subj].label = "SBJ";

    // Surface prefix.
    if let Some(lemma) = adv1.clone() {
        let a = add_slot(&mut slots, lemma.clone(), Attrs::default(), lemma);
        slots[a].parent = root;
        slots[a].label = "ADV";
        order.push(DraftTok::Slot(a));
        if comma1 {
            order.push(DraftTok::Comma);
        }
    }
    order.push(DraftTok::Slot(subj));

    match extension {
        Extension::ThatRel { reentrant } => {
            // s that vr o3 [root] ...
            let vr_lemma = picker.pick(&pools.verbs);
            let mut vr_attrs = Attrs::default();
            vr_attrs.tense = Some(Tense::Past);
            let vr_form = lex.get(&vr_lemma, InflTag::Vbd).0;
            let vr = add_slot(&mut slots, vr_lemma, vr_attrs, vr_form);
            slots[vr].parent = subj;
            slots[vr].label = "NMOD";
            let o3_lemma = picker.pick(&pools.nouns);
            let (o3_attrs, o3_num) = noun_attrs(picker.rng);
            let o3_form = noun_form(lex, &o3_lemma, o3_num);
            let o3 = add_slot(&mut slots, o3_lemma, o3_attrs, o3_form);
            slots[o3].parent = vr;
            slots[o3].label = "A1";
            if reentrant {
                slots[subj].extra_parents.push((vr, "A0"));
            }
            order.push(DraftTok::Split(FwKind::That));
            order.push(DraftTok::Slot(vr));
            order.push(DraftTok::Slot(o3));
            order.push(DraftTok::Slot(root));
        }
        _ => {
            order.push(DraftTok::Slot(root));
        }
    }

    if want_object {
        let lemma = picker.pick(&pools.nouns);
        let (attrs, num) = noun_attrs(picker.rng);
        let form = noun_form(lex, &lemma, num);
        let o = add_slot(&mut slots, lemma, attrs, form);
        slots[o].parent = root;
        slots[o].label = "A1";
        order.push(DraftTok::Slot(o));
    }

    match extension {
        Extension::ToControl { reentrant } => {
            let v2_lemma = picker.pick(&pools.verbs);
            let v2 = add_slot(&mut slots, v2_lemma.clone(), Attrs::default(), v2_lemma);
            slots[v2].parent = root;
            slots[v2].label = "VC";
            if reentrant {
                slots[subj].extra_parents.push((v2, "A1"));
            }
            order.push(DraftTok::Split(FwKind::To));
            order.push(DraftTok::Slot(v2));
            if want_o2 {
                let lemma = picker.pick(&pools.nouns);
                let (attrs, num) = noun_attrs(picker.rng);
                let form = noun_form(lex, &lemma, num);
                let o2 = add_slot(&mut slots, lemma, attrs, form);
                slots[o2].parent = v2;
                slots[o2].label = "A1";
                order.push(DraftTok::Slot(o2));
            }
        }
        Extension::BeParticiple => {
            let lemma = picker.pick(&pools.verbs);
            let mut attrs = Attrs::default();
            let (partic, tag) = if picker.rng.gen_bool(0.5) {
                (Partic::Pres, InflTag::Vbg)
            } else {
                (Partic::Past, InflTag::Vbn)
            };
            attrs.partic = Some(partic);
            let form = lex.get(&lemma, tag).0;
            let vp = add_slot(&mut slots, lemma, attrs, form);
            slots[vp].parent = root;
            slots[vp].label = "VC";
            order.push(DraftTok::Slot(vp));
        }
        Extension::BeRaising { reentrant } => {
            let vn_lemma = picker.pick(&pools.verbs);
            let mut vn_attrs = Attrs::default();
            vn_attrs.partic = Some(Partic::Past);
            let vn_form = lex.get(&vn_lemma, InflTag::Vbn).0;
            let vn = add_slot(&mut slots, vn_lemma, vn_attrs, vn_form);
            slots[vn].parent = root;
            slots[vn].label = "VC";
            let have = add_slot(&mut slots, "have".into(), Attrs::default(), "have".into());
            slots[have].parent = vn;
            slots[have].label = "C-A1";
            let vn2_lemma = picker.pick(&pools.verbs);
            let mut vn2_attrs = Attrs::default();
            vn2_attrs.partic = Some(Partic::Past);
            let vn2_form = lex.get(&vn2_lemma, InflTag::Vbn).0;
            let vn2 = add_slot(&mut slots, vn2_lemma, vn2_attrs, vn2_form);
            slots[vn2].parent = have;
            slots[vn2].label = "VC";
            if reentrant {
                slots[subj].extra_parents.push((vn2, "A1"));
            }
            order.push(DraftTok::Slot(vn));
            order.push(DraftTok::Split(FwKind::To));
            order.push(DraftTok::Slot(have));
            order.push(DraftTok::Slot(vn2));
        }
        _ => {}
    }

    if let Some(lemma) = adv2.clone() {
        if comma2 {
            order.push(DraftTok::Comma);
        }
        let a = add_slot(&mut slots, lemma.clone(), Attrs::default(), lemma);
        slots[a].parent = root;
        slots[a].label = "AM-TMP";
        order.push(DraftTok::Slot(a));
    }

    let period = add_slot(&mut slots, ".".into(), Attrs::default(), ".".into());
    slots[period].parent = root;
    slots[period].label = "P";
    order.push(DraftTok::Slot(period));

    Draft { slots, order }
}

/// Materializes a draft: assigns shuffled node ids, builds the graph and
/// the gold realization, and resolves comma attachments by simulating the
/// oracle derivation.
fn materialize(
    draft: &Draft,
    rng: &mut ChaCha8Rng,
    lex: &Lexicon,
) -> Result<(DeepGraph, GoldRealization), SynthError> {
    let n = draft.slots.len();
    let mut ids: Vec<NodeId> = (1..=n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        ids.swap(i, j);
    }
    let mut g = DeepGraph::default();
    for (slot, &id) in draft.slots.iter().zip(&ids) {
        g.add_node(Node {
            id,
            lemma: slot.lemma.clone(),
            attrs: slot.attrs.clone(),
            lexeme: Some(slot.form.clone()),
        });
    }
    for (idx, slot) in draft.slots.iter().enumerate() {
        if slot.parent == usize::MAX {
            g.add_arc(0, ids[idx], "SROOT");
        } else {
            g.add_arc(ids[slot.parent], ids[idx], slot.label);
        }
        for &(p, label) in &slot.extra_parents {
            g.add_arc(ids[p], ids[idx], label);
        }
    }
    g.validate().map_err(|e| SynthError::Invalid(e.to_string()))?;

    // Token positions per slot, for head resolution.
    let mut pos_of_slot = vec![0usize; n];
    for (i, tok) in draft.order.iter().enumerate() {
        if let DraftTok::Slot(s) = tok {
            pos_of_slot[*s] = i + 1;
        }
    }
    let mut tokens = Vec::with_capacity(draft.order.len());
    for (i, tok) in draft.order.iter().enumerate() {
        match tok {
            DraftTok::Slot(s) => {
                let slot = &draft.slots[*s];
                let (head, label) = if slot.parent == usize::MAX {
                    (0usize, "SROOT")
                } else {
                    // A split function word right before this token
                    // intervenes in the head chain.
                    let direct = pos_of_slot[slot.parent];
                    match draft.order.get(i.wrapping_sub(1)) {
                        Some(DraftTok::Split(_)) if i > 0 => (i, slot.label),
                        _ => (direct, slot.label),
                    }
                };
                tokens.push(GoldToken {
                    form: slot.form.clone(),
                    source: TokenSource::Node(ids[*s]),
                    head,
                    label: label.to_string(),
                });
            }
            DraftTok::Comma => {
                tokens.push(GoldToken {
                    form: ",".into(),
                    source: TokenSource::Fw(FwKind::Comma),
                    head: 1, // provisional; resolved below
                    label: "P".into(),
                });
            }
            DraftTok::Split(kind) => {
                // Head is the split child's structural parent; the child is
                // the next token.
                let child_slot = match draft.order.get(i + 1) {
                    Some(DraftTok::Slot(s)) => *s,
                    _ => return Err(SynthError::Invalid("split not followed by child".into())),
                };
                let parent = draft.slots[child_slot].parent;
                tokens.push(GoldToken {
                    form: kind.surface().into(),
                    source: TokenSource::Fw(*kind),
                    head: pos_of_slot[parent],
                    label: draft.slots[child_slot].label.to_string(),
                });
            }
        }
    }
    let mut gold = GoldRealization { tokens };

    // Resolve comma heads from the derivation the oracle actually takes.
    let posmap = PosMap::default();
    let deriv = oracle_derivation(&g, &gold, Mode::Joint, lex, &posmap)?;
    let comma_heads: Vec<NodeId> = deriv
        .final_state
        .fw
        .iter()
        .filter(|f| f.kind == FwKind::Comma)
        .map(|f| f.head)
        .collect();
    let mut next_comma = 0usize;
    for t in gold.tokens.iter_mut() {
        if t.source == TokenSource::Fw(FwKind::Comma) {
            let head_node = comma_heads.get(next_comma).copied().ok_or_else(|| {
                SynthError::Invalid("comma count mismatch in oracle".into())
            })?;
            next_comma += 1;
            let head_pos = gold_position_of(&deriv.final_state, head_node)
                .ok_or_else(|| SynthError::Invalid("comma head not emitted".into()))?;
            t.head = head_pos;
        }
    }

    gold.validate(&g).map_err(|e| SynthError::Invalid(e.to_string()))?;
    if filter_instance(&g, &gold) != FilterDecision::Keep {
        return Err(SynthError::Invalid(format!(
            "generated instance failed filtering: {:?}",
            filter_instance(&g, &gold)
        )));
    }
    let deriv = oracle_derivation(&g, &gold, Mode::Joint, lex, &posmap)?;
    let report = verify_replay(&deriv.final_state, &g, &gold);
    if !report.all_ok() {
        return Err(SynthError::Invalid(format!("replay mismatch: {report:?}")));
    }
    Ok((g, gold))
}

fn gold_position_of(state: &crate::transition::RealizerState, node: NodeId) -> Option<usize> {
    state
        .emitted
        .iter()
        .position(|t| t.source == TokenSource::Node(node))
        .map(|p| p + 1)
}

/// Generates a corpus; deterministic in the spec.
pub fn generate(spec: &SynthSpec, lex: &Lexicon) -> Result<Vec<(DeepGraph, GoldRealization)>, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let pools = pools(lex, spec.vocab);
    let mut out = Vec::with_capacity(spec.sentences);
    for _ in 0..spec.sentences {
        let draft = build_draft(&mut rng, lex, &pools, spec);
        out.push(materialize(&draft, &mut rng, lex)?);
    }
    Ok(out)
}

/// Random small multi-parent graphs for brute-force constraint checking:
/// a random tree plus an occasional reentrant arc, single-form lemmas.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> DeepGraph {
    let mut g = DeepGraph::default();
    for id in 1..=n {
        g.add_node(Node {
            id,
            lemma: format!("w{id}"),
            attrs: Attrs::default(),
            lexeme: Some(format!("w{id}")),
        });
    }
    g.add_arc(0, 1, "SROOT");
    for id in 2..=n {
        let parent = rng.gen_range(1..id);
        g.add_arc(parent, id, format!("L{}", rng.gen_range(0..3)));
    }
    if n >= 3 && rng.gen_bool(0.4) {
        let child = rng.gen_range(2..=n);
        let head = rng.gen_range(1..=n);
        if head != child && !g.has_arc(head, child) {
            g.add_arc(head, child, "R0");
        }
    }
    g
}
