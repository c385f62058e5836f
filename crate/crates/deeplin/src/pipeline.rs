//! The three-stage pipelined baseline: function-word classifiers over the
//! deep graph, shallow-graph linearization, and per-lemma morphological
//! classification over the linearized string.
//!
//! Later stages never see earlier stages' alternatives, so errors
//! propagate; the joint realizer exists to beat this.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::constraints::DecodeContext;
use crate::features::{PosMap, NONE};
use crate::graph::{
    CorpusError, DeepGraph, FwKind, GoldRealization, GoldToken, Node, NodeId, ShallowGraph,
    TokenSource,
};
use crate::learner::{
    beam_decode, oracle_derivation, Classifier, LearnError, Model, TrainConfig,
};
use crate::morphology::{candidate_inflections, subject_of, Lexicon};
use crate::transition::{Mode, RealizerState};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("function word predicted on missing arc {head}->{child}")]
    MissingArc { head: NodeId, child: NodeId },
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("model bundle: {0}")]
    Bundle(String),
}

/// Per-arc to/that flags and per-node comma counts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FwPrediction {
    pub to_arcs: Vec<(NodeId, NodeId)>,
    pub that_arcs: Vec<(NodeId, NodeId)>,
    pub comma_counts: BTreeMap<NodeId, usize>,
}

/// Comma counts are capped; gold data never needs more.
pub const COMMA_CAP: usize = 3;

/// Features for predicting a to/that function word on the arc `n -> c`.
pub fn fw_features_tothat(g: &DeepGraph, n: NodeId, c: NodeId, posmap: &PosMap) -> Vec<String> {
    let word = |id: NodeId| -> &str {
        if id == 0 {
            "<root>"
        } else {
            g.node(id).map(|x| x.lemma.as_str()).unwrap_or(NONE)
        }
    };
    let pos_n = if n == 0 { "<root>" } else { posmap.pos_of(word(n)) };
    vec![
        format!("Wn:{}", word(n)),
        format!("Pn:{pos_n}"),
        format!("Wc:{}", word(c)),
    ]
}

/// Features for predicting the comma count under node `n`: its word and POS
/// plus bags of modifier words and labels.
pub fn fw_features_comma(g: &DeepGraph, n: NodeId, posmap: &PosMap) -> Vec<String> {
    let lemma = g.node(n).map(|x| x.lemma.as_str()).unwrap_or(NONE);
    let mut words: Vec<&str> = Vec::new();
    let mut labels: Vec<&str> = Vec::new();
    for arc in &g.arcs {
        if arc.head == n {
            if let Some(child) = g.node(arc.child) {
                words.push(child.lemma.as_str());
            }
            labels.push(arc.label.as_str());
        }
    }
    words.sort();
    words.dedup();
    labels.sort();
    labels.dedup();
    vec![
        format!("Wn:{lemma}"),
        format!("Pn:{}", posmap.pos_of(lemma)),
        format!("WMOD:{{{}}}", words.join(",")),
        format!("LMOD:{{{}}}", labels.join(",")),
    ]
}

/// Extracts the gold function-word prediction of a realization: which arcs
/// carry a to/that and how many commas hang under each node.
pub fn gold_fw_prediction(gold: &GoldRealization) -> FwPrediction {
    let mut pred = FwPrediction::default();
    let node_at = |mut pos: usize| -> Option<NodeId> {
        loop {
            match gold.token_at(pos).map(|t| (t.source, t.head)) {
                Some((TokenSource::Node(id), _)) => return Some(id),
                Some((TokenSource::Fw(_), head)) => pos = head,
                None => return None,
            }
        }
    };
    for (idx, t) in gold.tokens.iter().enumerate() {
        let pos = idx + 1;
        match t.source {
            TokenSource::Fw(kind @ (FwKind::To | FwKind::That)) => {
                let head = node_at(t.head);
                let child = gold
                    .children_positions(pos)
                    .first()
                    .and_then(|&c| node_at(c));
                if let (Some(h), Some(c)) = (head, child) {
                    match kind {
                        FwKind::To => pred.to_arcs.push((h, c)),
                        FwKind::That => pred.that_arcs.push((h, c)),
                        FwKind::Comma => unreachable!(),
                    }
                }
            }
            TokenSource::Fw(FwKind::Comma) => {
                if let Some(h) = node_at(t.head) {
                    *pred.comma_counts.entry(h).or_insert(0) += 1;
                }
            }
            TokenSource::Node(_) => {}
        }
    }
    pred.to_arcs.sort_unstable();
    pred.that_arcs.sort_unstable();
    pred
}

/// Builds the shallow graph: every to/that-flagged arc `n -> c` is replaced
/// by `n -> fw` and `fw -> c`, and each node with comma count k gets k comma
/// leaf children labeled P. Comma nodes take the first fresh ids, then the
/// to/that nodes, matching the numbering of the worked example.
pub fn build_shallow_graph(
    g: &DeepGraph,
    preds: &FwPrediction,
) -> Result<ShallowGraph, PipelineError> {
    let mut out = g.clone();
    let mut inserted = BTreeMap::new();
    let mut next_id = g.ids().max().unwrap_or(0) + 1;
    for (&node, &count) in &preds.comma_counts {
        if g.node(node).is_none() {
            return Err(PipelineError::MissingArc { head: node, child: node });
        }
        for _ in 0..count.min(COMMA_CAP) {
            out.add_node(Node {
                id: next_id,
                lemma: ",".to_string(),
                attrs: Default::default(),
                lexeme: Some(",".to_string()),
            });
            out.add_arc(node, next_id, "P");
            inserted.insert(next_id, FwKind::Comma);
            next_id += 1;
        }
    }
    for (kind, arcs) in [(FwKind::To, &preds.to_arcs), (FwKind::That, &preds.that_arcs)] {
        for &(head, child) in arcs {
            let label = g
                .arc_label(head, child)
                .ok_or(PipelineError::MissingArc { head, child })?
                .to_string();
            out.arcs.retain(|a| !(a.head == head && a.child == child));
            out.add_node(Node {
                id: next_id,
                lemma: kind.surface().to_string(),
                attrs: Default::default(),
                lexeme: Some(kind.surface().to_string()),
            });
            out.add_arc(head, next_id, label.clone());
            out.add_arc(next_id, child, label);
            inserted.insert(next_id, kind);
            next_id += 1;
        }
    }
    let shallow = ShallowGraph { graph: out, inserted };
    shallow.validate()?;
    Ok(shallow)
}

/// Rewrites a gold realization against its shallow graph: function-word
/// tokens take the ids of the inserted nodes, and forms drop to lemmas
/// since inflection happens after linearization.
pub fn shallow_gold(
    gold: &GoldRealization,
    shallow: &ShallowGraph,
) -> Result<GoldRealization, PipelineError> {
    let node_at = |mut pos: usize| -> Option<NodeId> {
        loop {
            match gold.token_at(pos).map(|t| (t.source, t.head)) {
                Some((TokenSource::Node(id), _)) => return Some(id),
                Some((TokenSource::Fw(_), head)) => pos = head,
                None => return None,
            }
        }
    };
    // Unconsumed inserted nodes, keyed for matching.
    let mut comma_pool: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    let mut split_pool: BTreeMap<(NodeId, NodeId), Vec<NodeId>> = BTreeMap::new();
    for (&id, &kind) in &shallow.inserted {
        match kind {
            FwKind::Comma => {
                let parent = shallow.graph.parents_of(id).first().copied().unwrap_or(0);
                comma_pool.entry(parent).or_default().push(id);
            }
            FwKind::To | FwKind::That => {
                let parent = shallow.graph.parents_of(id).first().copied().unwrap_or(0);
                let child = shallow.graph.children_of(id).first().copied().unwrap_or(0);
                split_pool.entry((parent, child)).or_default().push(id);
            }
        }
    }
    let mut tokens = Vec::with_capacity(gold.len());
    for (idx, t) in gold.tokens.iter().enumerate() {
        let pos = idx + 1;
        let source = match t.source {
            TokenSource::Node(id) => TokenSource::Node(id),
            TokenSource::Fw(FwKind::Comma) => {
                let head = node_at(t.head).ok_or_else(|| {
                    PipelineError::Bundle(format!("comma at {pos} has no content head"))
                })?;
                let id = comma_pool
                    .get_mut(&head)
                    .and_then(|v| v.pop())
                    .ok_or(PipelineError::MissingArc { head, child: head })?;
                TokenSource::Node(id)
            }
            TokenSource::Fw(_) => {
                let head = node_at(t.head).unwrap_or(0);
                let child = gold
                    .children_positions(pos)
                    .first()
                    .and_then(|&c| node_at(c))
                    .unwrap_or(0);
                let id = split_pool
                    .get_mut(&(head, child))
                    .and_then(|v| v.pop())
                    .ok_or(PipelineError::MissingArc { head, child })?;
                TokenSource::Node(id)
            }
        };
        let form = match source {
            TokenSource::Node(id) => shallow
                .graph
                .node(id)
                .map(|n| n.lemma.clone())
                .unwrap_or_else(|| t.form.clone()),
            TokenSource::Fw(_) => t.form.clone(),
        };
        tokens.push(GoldToken { form, source, head: t.head, label: t.label.clone() });
    }
    Ok(GoldRealization { tokens })
}

/// Turns a finished shallow-mode decode back into a realization over the
/// original node ids, with inserted nodes reported as function words.
pub fn realization_from_shallow(
    state: &RealizerState,
    shallow: &ShallowGraph,
) -> GoldRealization {
    let pos_of_node = |id: NodeId| -> usize {
        state
            .emitted
            .iter()
            .position(|t| t.source == TokenSource::Node(id))
            .map(|p| p + 1)
            .unwrap_or(0)
    };
    let mut tokens = Vec::with_capacity(state.emitted.len());
    for t in &state.emitted {
        let id = match t.source {
            TokenSource::Node(id) => id,
            TokenSource::Fw(_) => unreachable!("shallow decode emits nodes only"),
        };
        let (head, label) = match state.arcs.iter().find(|a| a.child == id) {
            Some(arc) => (pos_of_node(arc.head), arc.label.clone()),
            None => (0, shallow.graph.arc_label(0, id).unwrap_or("SROOT").to_string()),
        };
        let source = match shallow.inserted.get(&id) {
            Some(&kind) => TokenSource::Fw(kind),
            None => TokenSource::Node(id),
        };
        tokens.push(GoldToken { form: t.form.clone(), source, head, label });
    }
    GoldRealization { tokens }
}

/// Same for a joint-mode decode: split and comma attachments become
/// function-word tokens spliced into the tree.
pub fn realization_from_joint(state: &RealizerState, g: &DeepGraph) -> GoldRealization {
    let pos_of_emit = |e: usize| e + 1;
    let pos_of_node = |id: NodeId| -> usize {
        state
            .emitted
            .iter()
            .position(|t| t.source == TokenSource::Node(id))
            .map(|p| p + 1)
            .unwrap_or(0)
    };
    let mut tokens = Vec::with_capacity(state.emitted.len());
    for (e, t) in state.emitted.iter().enumerate() {
        match t.source {
            TokenSource::Node(id) => {
                // Head is the built arc head, unless a function word was
                // spliced into that arc, in which case it intervenes.
                let mut head = 0usize;
                let mut label = g.arc_label(0, id).unwrap_or("SROOT").to_string();
                if let Some(arc) = state.arcs.iter().find(|a| a.child == id) {
                    head = pos_of_node(arc.head);
                    label = arc.label.clone();
                }
                if let Some(split) = state
                    .fw
                    .iter()
                    .find(|f| f.child == Some(id) && f.kind != FwKind::Comma)
                {
                    head = pos_of_emit(split.emit);
                    label = split.label.clone();
                }
                tokens.push(GoldToken { form: t.form.clone(), source: t.source, head, label });
            }
            TokenSource::Fw(kind) => {
                let attach = state
                    .fw
                    .iter()
                    .find(|f| f.emit == e)
                    .expect("every emitted function word has an attachment");
                tokens.push(GoldToken {
                    form: t.form.clone(),
                    source: TokenSource::Fw(kind),
                    head: pos_of_node(attach.head),
                    label: attach.label.clone(),
                });
            }
        }
    }
    GoldRealization { tokens }
}

/// The trained three-stage bundle.
pub struct PipelineModel {
    pub to: Classifier,
    pub that: Classifier,
    pub comma: Classifier,
    pub linear: Model,
    pub morph: BTreeMap<String, Classifier>,
    pub posmap: PosMap,
}

const NONE_CLASS: &str = "NONE";

fn comma_classes() -> Vec<String> {
    (0..=COMMA_CAP).map(|c| c.to_string()).collect()
}

/// Trains the full pipeline on kept instances. The linearizer trains on
/// gold shallow graphs; the classifiers train on gold deep graphs; the
/// per-lemma morphology classifiers train on gold strings.
pub fn train_pipeline(
    instances: &[(DeepGraph, GoldRealization)],
    lex: &Lexicon,
    cfg: &TrainConfig,
    mut per_iteration: impl FnMut(usize, &Model),
) -> Result<PipelineModel, PipelineError> {
    let posmap = PosMap::learn(instances, lex);

    // Stage 1: function-word classifiers, one pass per training iteration.
    let mut to = Classifier::new(vec![NONE_CLASS.to_string(), "TO".to_string()]);
    let mut that = Classifier::new(vec![NONE_CLASS.to_string(), "THAT".to_string()]);
    let mut comma = Classifier::new(comma_classes());
    for _ in 0..cfg.iterations {
        for (g, gold) in instances {
            let pred = gold_fw_prediction(gold);
            for arc in &g.arcs {
                if arc.head == 0 {
                    continue;
                }
                let feats = fw_features_tothat(g, arc.head, arc.child, &posmap);
                let pair = (arc.head, arc.child);
                let to_label = if pred.to_arcs.contains(&pair) { "TO" } else { NONE_CLASS };
                let that_label =
                    if pred.that_arcs.contains(&pair) { "THAT" } else { NONE_CLASS };
                to.learn(&feats, to_label);
                that.learn(&feats, that_label);
            }
            for id in g.ids() {
                if g.children_of(id).is_empty() {
                    continue; // comma counts are predicted for non-leaf nodes
                }
                let feats = fw_features_comma(g, id, &posmap);
                let count = pred.comma_counts.get(&id).copied().unwrap_or(0).min(COMMA_CAP);
                comma.learn(&feats, &count.to_string());
            }
        }
    }
    to.finalize();
    that.finalize();
    comma.finalize();

    // Stage 2: shallow linearizer over gold shallow graphs.
    let mut shallow_instances = Vec::new();
    for (g, gold) in instances {
        let shallow = build_shallow_graph(g, &gold_fw_prediction(gold))?;
        let sgold = shallow_gold(gold, &shallow)?;
        let oracle = oracle_derivation(&shallow.graph, &sgold, Mode::Shallow, lex, &posmap)?;
        shallow_instances.push((shallow.graph.clone(), oracle));
    }
    let linear = crate::learner::train_linearizer(
        &shallow_instances,
        Mode::Shallow,
        lex,
        &posmap,
        cfg,
        |i, m| per_iteration(i, m),
    )?;

    // Stage 3: per-lemma morphology classifiers over gold strings.
    let mut morph: BTreeMap<String, Classifier> = BTreeMap::new();
    for _ in 0..cfg.iterations {
        for (g, gold) in instances {
            let forms = gold.forms();
            for (idx, t) in gold.tokens.iter().enumerate() {
                let id = match t.source {
                    TokenSource::Node(id) => id,
                    TokenSource::Fw(_) => continue,
                };
                let node = g.node(id).unwrap();
                let candidates = candidate_inflections(node, g, lex);
                if candidates.forms.len() < 2 {
                    continue;
                }
                let subj_form = subject_of(id, g).and_then(|s| {
                    gold.tokens
                        .iter()
                        .find(|t| t.source == TokenSource::Node(s))
                        .map(|t| t.form.clone())
                });
                let feats =
                    crate::morphology::sg_pl_features(idx, &forms, subj_form.as_deref(), lex);
                let clf = morph
                    .entry(node.lemma.clone())
                    .or_insert_with(|| Classifier::new(candidates.forms.clone()));
                for form in &candidates.forms {
                    if !clf.classes.contains(form) {
                        clf.classes.push(form.clone());
                    }
                }
                clf.learn(&feats, &t.form);
            }
        }
    }
    for clf in morph.values_mut() {
        clf.finalize();
    }

    Ok(PipelineModel { to, that, comma, linear, morph, posmap })
}

impl PipelineModel {
    /// Stage 1 on a new graph.
    pub fn predict_fw(&self, g: &DeepGraph) -> FwPrediction {
        let mut pred = FwPrediction::default();
        for arc in &g.arcs {
            if arc.head == 0 {
                continue;
            }
            let feats = fw_features_tothat(g, arc.head, arc.child, &self.posmap);
            let to_margin =
                self.to.score(&feats, "TO") - self.to.score(&feats, NONE_CLASS);
            let that_margin =
                self.that.score(&feats, "THAT") - self.that.score(&feats, NONE_CLASS);
            if to_margin > 0.0 && to_margin >= that_margin {
                pred.to_arcs.push((arc.head, arc.child));
            } else if that_margin > 0.0 {
                pred.that_arcs.push((arc.head, arc.child));
            }
        }
        for id in g.ids() {
            if g.children_of(id).is_empty() {
                continue;
            }
            let feats = fw_features_comma(g, id, &self.posmap);
            let count: usize = self.comma.predict(&feats).parse().unwrap_or(0);
            if count > 0 {
                pred.comma_counts.insert(id, count.min(COMMA_CAP));
            }
        }
        pred.to_arcs.sort_unstable();
        pred.that_arcs.sort_unstable();
        pred.to_arcs.dedup();
        pred.that_arcs.dedup();
        pred
    }

    /// Full pipeline run: function words, linearization, morphology.
    pub fn run(
        &self,
        g: &DeepGraph,
        lex: &Lexicon,
        beam: usize,
    ) -> Result<GoldRealization, PipelineError> {
        let shallow = build_shallow_graph(g, &self.predict_fw(g))?;
        let ctx = DecodeContext::new(&shallow.graph, Mode::Shallow, lex, &self.posmap);
        let deriv = beam_decode(&ctx, &self.linear, beam)?;
        let mut realization = realization_from_shallow(&deriv.final_state, &shallow);

        // Morphological generation, left to right over the string.
        let mut forms: Vec<String> = realization.tokens.iter().map(|t| t.form.clone()).collect();
        for idx in 0..realization.tokens.len() {
            let id = match realization.tokens[idx].source {
                TokenSource::Node(id) => id,
                TokenSource::Fw(_) => continue,
            };
            let node = match g.node(id) {
                Some(n) => n,
                None => continue,
            };
            let candidates = candidate_inflections(node, g, lex);
            let chosen = if candidates.forms.len() == 1 {
                candidates.forms[0].clone()
            } else {
                let subj_form = subject_of(id, g).and_then(|s| {
                    realization
                        .tokens
                        .iter()
                        .position(|t| t.source == TokenSource::Node(s))
                        .map(|p| forms[p].clone())
                });
                let feats = crate::morphology::sg_pl_features(
                    idx,
                    &forms,
                    subj_form.as_deref(),
                    lex,
                );
                match self.morph.get(&node.lemma) {
                    Some(clf) => {
                        // Restrict prediction to this instance's candidates.
                        let mut best = candidates.forms[0].clone();
                        let mut best_score = f64::NEG_INFINITY;
                        for form in &candidates.forms {
                            let s = clf.score(&feats, form);
                            if s > best_score {
                                best_score = s;
                                best = form.clone();
                            }
                        }
                        best
                    }
                    None => candidates.forms[0].clone(),
                }
            };
            forms[idx] = chosen.clone();
            realization.tokens[idx].form = chosen;
        }
        Ok(realization)
    }

    /// Writes the model bundle directory.
    pub fn save_dir(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir.join("morph"))?;
        fs::write(dir.join("fw_to.model"), self.to.save())?;
        fs::write(dir.join("fw_that.model"), self.that.save())?;
        fs::write(dir.join("fw_comma.model"), self.comma.save())?;
        fs::write(dir.join("linear.model"), self.linear.save("shallow"))?;
        fs::write(dir.join("posmap.tsv"), self.posmap.serialize())?;
        for (lemma, clf) in &self.morph {
            fs::write(dir.join("morph").join(format!("{lemma}.model")), clf.save())?;
        }
        Ok(())
    }

    pub fn load_dir(dir: &Path) -> Result<PipelineModel, PipelineError> {
        let read = |name: &str| -> Result<String, PipelineError> {
            fs::read_to_string(dir.join(name))
                .map_err(|e| PipelineError::Bundle(format!("{name}: {e}")))
        };
        let to = Classifier::load(&read("fw_to.model")?)?;
        let that = Classifier::load(&read("fw_that.model")?)?;
        let comma = Classifier::load(&read("fw_comma.model")?)?;
        let (linear, mode) = Model::load(&read("linear.model")?)?;
        if mode != "shallow" {
            return Err(PipelineError::Bundle(format!(
                "linear.model has mode `{mode}`, expected shallow"
            )));
        }
        let posmap = PosMap::parse(&read("posmap.tsv")?)
            .map_err(PipelineError::Bundle)?;
        let mut morph = BTreeMap::new();
        let morph_dir = dir.join("morph");
        if morph_dir.is_dir() {
            let mut entries: Vec<_> = fs::read_dir(&morph_dir)
                .map_err(|e| PipelineError::Bundle(e.to_string()))?
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .collect();
            entries.sort();
            for path in entries {
                if path.extension().map(|e| e == "model").unwrap_or(false) {
                    let lemma = path.file_stem().unwrap().to_string_lossy().to_string();
                    let text = fs::read_to_string(&path)
                        .map_err(|e| PipelineError::Bundle(e.to_string()))?;
                    morph.insert(lemma, Classifier::load(&text)?);
                }
            }
        }
        Ok(PipelineModel { to, that, comma, linear, morph, posmap })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::parse_instance;

    fn fixture() -> (DeepGraph, GoldRealization, Lexicon) {
        let g = parse_instance(crate::fixtures::FIG2_DEEP).unwrap();
        let gold = GoldRealization::parse_line(crate::fixtures::FIG2_GOLD.trim()).unwrap();
        let lex = Lexicon::parse(crate::fixtures::TOY_LEXICON).unwrap();
        (g, gold, lex)
    }

    #[test]
    fn gold_prediction_reads_fixture() {
        let (_, gold, _) = fixture();
        let pred = gold_fw_prediction(&gold);
        assert_eq!(pred.to_arcs, vec![(1, 6)]);
        assert!(pred.that_arcs.is_empty());
        assert_eq!(pred.comma_counts.get(&5), Some(&1));
    }

    #[test]
    fn shallow_graph_matches_worked_example() {
        let (g, gold, _) = fixture();
        let shallow = build_shallow_graph(&g, &gold_fw_prediction(&gold)).unwrap();
        // 7 content nodes + comma(8) + to(9)
        assert_eq!(shallow.graph.len(), 9);
        assert_eq!(shallow.inserted.get(&8), Some(&FwKind::Comma));
        assert_eq!(shallow.inserted.get(&9), Some(&FwKind::To));
        assert!(shallow.graph.has_arc(5, 8));
        assert!(shallow.graph.has_arc(1, 9));
        assert!(shallow.graph.has_arc(9, 6));
        assert!(!shallow.graph.has_arc(1, 6)); // split away
        assert_eq!(shallow.graph.arc_label(9, 6), Some("C-A1"));
    }

    #[test]
    fn all_zero_prediction_leaves_graph_unchanged() {
        let (g, _, _) = fixture();
        let shallow = build_shallow_graph(&g, &FwPrediction::default()).unwrap();
        assert_eq!(shallow.graph, g);
        assert!(shallow.inserted.is_empty());
    }

    #[test]
    fn two_commas_make_two_leaves() {
        let (g, _, _) = fixture();
        let mut pred = FwPrediction::default();
        pred.comma_counts.insert(5, 2);
        let shallow = build_shallow_graph(&g, &pred).unwrap();
        assert_eq!(shallow.graph.len(), 9);
        let comma_children: Vec<NodeId> = shallow
            .graph
            .children_of(5)
            .into_iter()
            .filter(|c| shallow.inserted.contains_key(c))
            .collect();
        assert_eq!(comma_children.len(), 2);
    }

    #[test]
    fn prediction_on_missing_arc_errors() {
        let (g, _, _) = fixture();
        let mut pred = FwPrediction::default();
        pred.to_arcs.push((2, 3)); // no such arc
        assert!(matches!(
            build_shallow_graph(&g, &pred),
            Err(PipelineError::MissingArc { head: 2, child: 3 })
        ));
    }

    #[test]
    fn comma_bags_are_order_independent() {
        let (g, _, _) = fixture();
        let posmap = PosMap::default();
        let a = fw_features_comma(&g, 5, &posmap);
        let mut g2 = g.clone();
        g2.arcs.reverse();
        let b = fw_features_comma(&g2, 5, &posmap);
        assert_eq!(a, b);
        assert!(a.iter().any(|f| f.starts_with("WMOD:{")));
    }

    #[test]
    fn tothat_features_exact() {
        let (g, gold, lex) = fixture();
        let posmap = PosMap::learn(&[(g.clone(), gold)], &lex);
        let feats = fw_features_tothat(&g, 1, 6, &posmap);
        assert_eq!(feats, vec!["Wn:think", "Pn:VBN", "Wc:have"]);
        let root_feats = fw_features_tothat(&g, 0, 5, &posmap);
        assert_eq!(root_feats[0], "Wn:<root>");
    }

    #[test]
    fn shallow_gold_maps_fw_tokens_to_inserted_nodes() {
        let (g, gold, _) = fixture();
        let shallow = build_shallow_graph(&g, &gold_fw_prediction(&gold)).unwrap();
        let sgold = shallow_gold(&gold, &shallow).unwrap();
        assert_eq!(sgold.tokens[1].source, TokenSource::Node(8)); // comma
        assert_eq!(sgold.tokens[5].source, TokenSource::Node(9)); // to
        sgold.validate(&shallow.graph).unwrap();
    }
}
