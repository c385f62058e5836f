//! Beam-search decoding, static oracle extraction and averaged perceptron
//! training with early update.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::constraints::{legal_actions, DecodeContext};
use crate::features::{key, phi, score_action, PosMap};
use crate::graph::{DeepGraph, FwKind, GoldRealization, NodeId, TokenSource};
use crate::morphology::Lexicon;
use crate::transition::{
    apply, initial_state, is_completed, Action, Derivation, Mode, RealizerState, SplitWord,
};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("oracle failure at step {step}: {msg}")]
    OracleFailure { step: usize, msg: String },
    #[error("deadlock: empty legal mask at non-terminal state (step {step})")]
    Deadlock { step: usize },
    #[error("gold action {action} not in legal mask at step {step}")]
    GoldNotInMask { action: String, step: usize },
    #[error("model file: {0}")]
    ModelFormat(String),
    #[error(transparent)]
    Transition(#[from] crate::transition::TransitionError),
}

#[derive(Debug, Clone, Copy, Default)]
struct Cell {
    weight: f64,
    /// Sum of per-sentence weight snapshots up to `stamp`.
    accumulated: f64,
    /// Sentence counter value at the last roll.
    stamp: u64,
}

/// Feature-string to weight map with lazily maintained averaging columns.
#[derive(Debug, Clone, Default)]
pub struct Model {
    cells: HashMap<String, Cell>,
    /// Number of sentence snapshots taken so far.
    now: u64,
    averaged: bool,
}

impl Model {
    pub fn new() -> Model {
        Model::default()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn weight(&self, feature: &str) -> f64 {
        self.cells.get(feature).map(|c| c.weight).unwrap_or(0.0)
    }

    /// Starts a new sentence snapshot interval.
    pub fn tick(&mut self) {
        self.now += 1;
    }

    fn bump(&mut self, feature: &str, delta: f64) {
        let cell = self.cells.entry(feature.to_string()).or_default();
        // Roll the accumulator: the old weight held for every snapshot
        // since the last update.
        let held = self.now.saturating_sub(1).saturating_sub(cell.stamp);
        cell.accumulated += cell.weight * held as f64;
        cell.stamp = self.now.saturating_sub(1);
        cell.weight += delta;
    }

    /// Perceptron update: promote the gold features, demote the predicted.
    pub fn update(&mut self, gold: &[String], predicted: &[String]) {
        for f in gold {
            self.bump(f, 1.0);
        }
        for f in predicted {
            self.bump(f, -1.0);
        }
    }

    /// Replaces weights with their per-snapshot averages; idempotent.
    pub fn finalize_average(&mut self) {
        if self.averaged || self.now == 0 {
            self.averaged = true;
            return;
        }
        let now = self.now;
        for cell in self.cells.values_mut() {
            cell.accumulated += cell.weight * (now - cell.stamp) as f64;
            cell.weight = cell.accumulated / now as f64;
            cell.stamp = now;
            cell.accumulated = cell.weight * now as f64;
        }
        self.averaged = true;
    }

    /// Serializes as a versioned header plus sorted feature lines.
    pub fn save(&self, mode: &str) -> String {
        let mut lines: Vec<String> = self
            .cells
            .iter()
            .filter(|(_, c)| c.weight != 0.0)
            .map(|(f, c)| format!("{f}\t{}", c.weight))
            .collect();
        lines.sort();
        format!("DEEPLIN-MODEL v1 {mode}\n{}\n", lines.join("\n"))
    }

    /// Loads a model file, checking the version header.
    pub fn load(text: &str) -> Result<(Model, String), LearnError> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        let mut parts = header.split_whitespace();
        if parts.next() != Some("DEEPLIN-MODEL") {
            return Err(LearnError::ModelFormat("missing DEEPLIN-MODEL header".into()));
        }
        let version = parts.next().unwrap_or_default();
        if version != "v1" {
            return Err(LearnError::ModelFormat(format!("unknown version `{version}`")));
        }
        let mode = parts.collect::<Vec<_>>().join(" ");
        let mut model = Model::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (feature, weight) = line
                .rsplit_once('\t')
                .ok_or_else(|| LearnError::ModelFormat(format!("line {}: no weight", i + 2)))?;
            let weight: f64 = weight
                .parse()
                .map_err(|_| LearnError::ModelFormat(format!("line {}: bad weight", i + 2)))?;
            model.cells.insert(feature.to_string(), Cell { weight, accumulated: 0.0, stamp: 0 });
        }
        model.averaged = true;
        Ok((model, mode))
    }
}

/// Beam agenda: keeps the top-k states by score with stable insertion-order
/// tie-breaking.
#[derive(Debug)]
pub struct Agenda {
    capacity: usize,
    items: Vec<RealizerState>,
}

impl Agenda {
    pub fn new(capacity: usize) -> Agenda {
        Agenda { capacity: capacity.max(1), items: Vec::new() }
    }

    pub fn push(&mut self, state: RealizerState) {
        self.items.push(state);
    }

    /// Top-k by (score desc, insertion order asc).
    pub fn top_k(&mut self) -> Vec<RealizerState> {
        let mut order: Vec<usize> = (0..self.items.len()).collect();
        order.sort_by(|&a, &b| {
            self.items[b]
                .score
                .partial_cmp(&self.items[a].score)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        order.truncate(self.capacity);
        let mut picked: Vec<Option<RealizerState>> =
            self.items.drain(..).map(Some).collect();
        order.iter().map(|&i| picked[i].take().unwrap()).collect()
    }
}

/// Beam-search decode: expands every agenda state by every legal action for
/// the fixed number of steps and returns the highest-scoring final state.
pub fn beam_decode(ctx: &DecodeContext, model: &Model, k: usize) -> Result<Derivation, LearnError> {
    let total = ctx.total_steps();
    let mut candidates = vec![initial_state(ctx.graph)];
    for step in 0..total {
        let mut agenda = Agenda::new(k);
        for state in &candidates {
            let actions = legal_actions(state, ctx);
            if actions.is_empty() {
                return Err(LearnError::Deadlock { step });
            }
            for action in actions {
                let mut next = apply(ctx.graph, state, &action)?;
                next.score = state.score + score_action(model, state, ctx, &action);
                agenda.push(next);
            }
        }
        candidates = agenda.top_k();
    }
    let best = candidates
        .into_iter()
        .next()
        .ok_or(LearnError::Deadlock { step: total })?;
    debug_assert!(is_completed(&best));
    Ok(Derivation { actions: best.history.clone(), final_state: best })
}

/// Content-level view of a gold realization used by the oracle: for every
/// position, what to do, and the contracted tree over positions with
/// to/that tokens spliced out of head chains.
struct GoldPlan {
    /// Per position (1-based): the action kind at that token.
    steps: Vec<PlanStep>,
    /// Contracted head position per position (0 for root). Function-word
    /// positions keep their file heads; content positions skip over fw.
    heads: Vec<usize>,
}

enum PlanStep {
    Shift { node: NodeId, form: String },
    Comma,
    Split(SplitWord),
}

fn build_plan(gold: &GoldRealization) -> Result<GoldPlan, LearnError> {
    let mut steps = Vec::new();
    let mut heads = vec![0usize; gold.len() + 1];
    for (idx, t) in gold.tokens.iter().enumerate() {
        let pos = idx + 1;
        let step = match t.source {
            TokenSource::Node(id) => PlanStep::Shift { node: id, form: t.form.clone() },
            TokenSource::Fw(FwKind::Comma) => PlanStep::Comma,
            TokenSource::Fw(FwKind::To) => PlanStep::Split(SplitWord::To),
            TokenSource::Fw(FwKind::That) => PlanStep::Split(SplitWord::That),
        };
        steps.push(step);
        // Contract to/that out of the head chain.
        let mut head = t.head;
        loop {
            match gold.token_at(head).map(|h| h.source) {
                Some(TokenSource::Fw(FwKind::To)) | Some(TokenSource::Fw(FwKind::That)) => {
                    head = gold.token_at(head).unwrap().head;
                }
                _ => break,
            }
        }
        heads[pos] = head;
    }
    Ok(GoldPlan { steps, heads })
}

/// Deterministic static oracle: processes gold tokens left to right,
/// shifting with the gold inflection, emitting Insert at comma tokens and
/// SplitArc right before the split child's shift, and reducing eagerly in
/// the canonical order (a head takes all right dependents before any left
/// dependent). Joint derivations are padded with Idle to 5n-1 steps.
pub fn oracle_derivation(
    g: &DeepGraph,
    gold: &GoldRealization,
    mode: Mode,
    lex: &Lexicon,
    posmap: &PosMap,
) -> Result<Derivation, LearnError> {
    let ctx = DecodeContext::new(g, mode, lex, posmap);
    oracle_with_ctx(&ctx, gold, posmap)
}

fn oracle_with_ctx(
    ctx: &DecodeContext,
    gold: &GoldRealization,
    posmap: &PosMap,
) -> Result<Derivation, LearnError> {
    let g = ctx.graph;
    let plan = build_plan(gold)?;
    let n_tokens = gold.len();

    // Gold children (contracted) per position, and attachment bookkeeping.
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n_tokens + 1];
    for pos in 1..=n_tokens {
        let h = plan.heads[pos];
        if h != 0 {
            children[h].push(pos);
        }
    }
    let mut attached = vec![false; n_tokens + 1];
    let subtree_complete = |pos: usize, attached: &[bool]| -> bool {
        fn rec(pos: usize, children: &[Vec<usize>], attached: &[bool]) -> bool {
            children[pos]
                .iter()
                .all(|&c| attached[c] && rec(c, children, attached))
        }
        rec(pos, &children, attached)
    };

    let mut state = initial_state(g);
    let mut actions = Vec::new();
    let mut pos_of_node: BTreeMap<NodeId, usize> = BTreeMap::new();
    for (idx, t) in gold.tokens.iter().enumerate() {
        if let TokenSource::Node(id) = t.source {
            pos_of_node.insert(id, idx + 1);
        }
    }

    let do_apply = |state: &mut RealizerState,
                        actions: &mut Vec<Action>,
                        action: Action|
     -> Result<(), LearnError> {
        *state = apply(g, state, &action).map_err(|e| LearnError::OracleFailure {
            step: actions.len(),
            msg: e.to_string(),
        })?;
        actions.push(action);
        Ok(())
    };

    for (idx, step) in plan.steps.iter().enumerate() {
        let pos = idx + 1;
        match step {
            PlanStep::Comma => {
                do_apply(&mut state, &mut actions, Action::Insert)?;
                attached[pos] = true;
            }
            PlanStep::Split(word) => {
                do_apply(&mut state, &mut actions, Action::Split(*word))?;
                attached[pos] = true;
            }
            PlanStep::Shift { node, form } => {
                let lemma = &g
                    .node(*node)
                    .ok_or_else(|| LearnError::OracleFailure {
                        step: actions.len(),
                        msg: format!("gold references unknown node {node}"),
                    })?
                    .lemma;
                // Shallow linearization orders lemmas; inflection is a
                // later stage. Joint derivations shift the gold form.
                let form = match ctx.mode {
                    Mode::Shallow => lemma.clone(),
                    Mode::Joint => form.clone(),
                };
                let action = Action::Shift {
                    node: *node,
                    pos: posmap.pos_of(lemma).to_string(),
                    form,
                };
                do_apply(&mut state, &mut actions, action)?;
                // Eager canonical reductions.
                loop {
                    let (second, top) = match (state.second(), state.top()) {
                        (Some(s), Some(t)) => (s.node, t.node),
                        _ => break,
                    };
                    let (jp, ip) = (pos_of_node[&second], pos_of_node[&top]);
                    if plan.heads[ip] == jp && subtree_complete(ip, &attached) {
                        do_apply(&mut state, &mut actions, Action::RightArc)?;
                        attached[ip] = true;
                    } else if plan.heads[jp] == ip
                        && subtree_complete(jp, &attached)
                        && children[ip]
                            .iter()
                            .all(|&c| c < ip || attached[c])
                    {
                        do_apply(&mut state, &mut actions, Action::LeftArc)?;
                        attached[jp] = true;
                    } else {
                        break;
                    }
                }
            }
        }
    }

    if !is_completed(&state) {
        return Err(LearnError::OracleFailure {
            step: actions.len(),
            msg: format!(
                "derivation did not complete: stack {}, unshifted {}",
                state.stack.len(),
                state.rho.len()
            ),
        });
    }
    if ctx.mode == Mode::Joint {
        while state.step < ctx.total_steps() {
            do_apply(&mut state, &mut actions, Action::Idle)?;
        }
    }
    Ok(Derivation { actions, final_state: state })
}

/// What a replayed derivation agrees on with the gold annotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplayReport {
    pub surface_ok: bool,
    /// Content arcs plus to/that attachments match.
    pub tree_ok: bool,
    /// Comma attachments also match (the strictest check).
    pub commas_ok: bool,
}

impl ReplayReport {
    pub fn all_ok(&self) -> bool {
        self.surface_ok && self.tree_ok && self.commas_ok
    }
}

/// Compares a final state against gold: surface forms, the tree over
/// content nodes with to/that splices, and comma attachments.
pub fn verify_replay(state: &RealizerState, _g: &DeepGraph, gold: &GoldRealization) -> ReplayReport {
    let surface_ok = state.surface_forms() == gold.forms();

    // Gold side: content arcs (with to/that contracted away), split
    // attachments and comma attachments, all in node-id space.
    let plan = match build_plan(gold) {
        Ok(p) => p,
        Err(_) => return ReplayReport { surface_ok, tree_ok: false, commas_ok: false },
    };
    let node_at = |pos: usize| -> Option<NodeId> {
        match gold.token_at(pos).map(|t| t.source) {
            Some(TokenSource::Node(id)) => Some(id),
            _ => None,
        }
    };
    let mut gold_arcs: Vec<(NodeId, NodeId)> = Vec::new();
    let mut gold_splits: Vec<(FwKind, NodeId, NodeId)> = Vec::new();
    let mut gold_commas: Vec<(FwKind, NodeId)> = Vec::new();
    for (idx, t) in gold.tokens.iter().enumerate() {
        let pos = idx + 1;
        match t.source {
            TokenSource::Node(id) => {
                if plan.heads[pos] != 0 {
                    if let Some(h) = node_at(plan.heads[pos]) {
                        gold_arcs.push((h, id));
                    }
                }
            }
            TokenSource::Fw(kind @ (FwKind::To | FwKind::That)) => {
                let head = node_at(plan.heads[pos]);
                let child = gold
                    .children_positions(pos)
                    .first()
                    .and_then(|&c| node_at(c));
                if let (Some(h), Some(c)) = (head, child) {
                    gold_splits.push((kind, h, c));
                }
            }
            TokenSource::Fw(FwKind::Comma) => {
                if let Some(h) = node_at(plan.heads[pos]) {
                    gold_commas.push((FwKind::Comma, h));
                }
            }
        }
    }

    let mut built_arcs: Vec<(NodeId, NodeId)> =
        state.arcs.iter().map(|a| (a.head, a.child)).collect();
    let mut built_splits: Vec<(FwKind, NodeId, NodeId)> = state
        .fw
        .iter()
        .filter(|f| f.kind != FwKind::Comma)
        .map(|f| (f.kind, f.head, f.child.unwrap_or(0)))
        .collect();
    let mut built_commas: Vec<(FwKind, NodeId)> = state
        .fw
        .iter()
        .filter(|f| f.kind == FwKind::Comma)
        .map(|f| (f.kind, f.head))
        .collect();

    gold_arcs.sort_unstable();
    built_arcs.sort_unstable();
    gold_splits.sort_unstable();
    built_splits.sort_unstable();
    gold_commas.sort_unstable();
    built_commas.sort_unstable();

    let tree_ok = gold_arcs == built_arcs && gold_splits == built_splits;
    let commas_ok = gold_commas == built_commas;
    ReplayReport { surface_ok, tree_ok, commas_ok }
}

/// Checks that every action of a derivation is inside the legal mask at its
/// state; returns the offending step otherwise.
pub fn check_mask_completeness(ctx: &DecodeContext, deriv: &Derivation) -> Result<(), LearnError> {
    let mut state = initial_state(ctx.graph);
    for (step, action) in deriv.actions.iter().enumerate() {
        let mask = legal_actions(&state, ctx);
        if !mask.contains(action) {
            return Err(LearnError::GoldNotInMask { action: action.display(), step });
        }
        state = apply(ctx.graph, &state, action)?;
    }
    Ok(())
}

/// Training configuration for the structured learner.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub beam: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig { beam: 64, iterations: 30, seed: 1 }
    }
}

/// One preprocessed training sentence: graph plus its oracle derivation.
pub struct TrainInstance<'a> {
    pub graph: &'a DeepGraph,
    pub oracle: Derivation,
}

/// Replays a history prefix, collecting the conjoined feature strings of
/// every action taken.
fn collect_features(ctx: &DecodeContext, actions: &[Action]) -> Vec<String> {
    let mut state = initial_state(ctx.graph);
    let mut feats = Vec::new();
    for action in actions {
        let id = action.id_string();
        for f in phi(&state, ctx, action) {
            feats.push(key(&f, &id));
        }
        state = apply(ctx.graph, &state, action).expect("replaying a validated history");
    }
    feats
}

/// Beam-search averaged perceptron with early update. Runs beam search per
/// sentence tracking the gold prefix; the moment the gold state falls out
/// of the agenda the weights are updated from the divergent prefixes and
/// the sentence is abandoned. A full update fires when gold survives but
/// does not win.
pub fn train_linearizer(
    instances: &[(DeepGraph, Derivation)],
    mode: Mode,
    lex: &Lexicon,
    posmap: &PosMap,
    cfg: &TrainConfig,
    mut per_iteration: impl FnMut(usize, &Model),
) -> Result<Model, LearnError> {
    let mut model = Model::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let contexts: Vec<DecodeContext> = instances
        .iter()
        .map(|(g, _)| DecodeContext::new(g, mode, lex, posmap))
        .collect();
    let mut order: Vec<usize> = (0..instances.len()).collect();
    for iteration in 0..cfg.iterations {
        order.shuffle(&mut rng);
        for &idx in &order {
            let (_, oracle) = &instances[idx];
            let ctx = &contexts[idx];
            model.tick();
            train_one(&mut model, ctx, oracle, cfg.beam)?;
        }
        per_iteration(iteration, &model);
    }
    model.finalize_average();
    Ok(model)
}

fn train_one(
    model: &mut Model,
    ctx: &DecodeContext,
    oracle: &Derivation,
    beam: usize,
) -> Result<(), LearnError> {
    let total = ctx.total_steps();
    debug_assert_eq!(oracle.actions.len(), total);
    let mut candidates = vec![initial_state(ctx.graph)];
    for step in 0..total {
        let mut agenda = Agenda::new(beam);
        for state in &candidates {
            let actions = legal_actions(state, ctx);
            if actions.is_empty() {
                return Err(LearnError::Deadlock { step });
            }
            if state.history == oracle.actions[..step] {
                let gold_action = &oracle.actions[step];
                if !actions.contains(gold_action) {
                    return Err(LearnError::GoldNotInMask {
                        action: gold_action.display(),
                        step,
                    });
                }
            }
            for action in actions {
                let mut next = apply(ctx.graph, state, &action)?;
                next.score = state.score + score_action(model, state, ctx, &action);
                agenda.push(next);
            }
        }
        candidates = agenda.top_k();
        let gold_prefix = &oracle.actions[..step + 1];
        let gold_in_beam = candidates.iter().any(|s| s.history == gold_prefix);
        if !gold_in_beam {
            // Early update against the current best prefix.
            let best = &candidates[0];
            let gold_feats = collect_features(ctx, gold_prefix);
            let pred_feats = collect_features(ctx, &best.history);
            model.update(&gold_feats, &pred_feats);
            return Ok(());
        }
    }
    let best = &candidates[0];
    if best.history != oracle.actions {
        let gold_feats = collect_features(ctx, &oracle.actions);
        let pred_feats = collect_features(ctx, &best.history);
        model.update(&gold_feats, &pred_feats);
    }
    Ok(())
}

/// Multiclass averaged perceptron over string features, shared by the
/// pipeline's classifiers.
#[derive(Debug, Clone, Default)]
pub struct Classifier {
    pub model: Model,
    pub classes: Vec<String>,
}

impl Classifier {
    pub fn new(classes: Vec<String>) -> Classifier {
        Classifier { model: Model::new(), classes }
    }

    pub fn score(&self, features: &[String], class: &str) -> f64 {
        features.iter().map(|f| self.model.weight(&key(f, class))).sum()
    }

    /// Highest-scoring class; earlier classes win ties.
    pub fn predict(&self, features: &[String]) -> &str {
        let mut best = 0usize;
        let mut best_score = f64::NEG_INFINITY;
        for (i, class) in self.classes.iter().enumerate() {
            let s = self.score(features, class);
            if s > best_score {
                best_score = s;
                best = i;
            }
        }
        &self.classes[best]
    }

    pub fn learn(&mut self, features: &[String], gold: &str) {
        self.model.tick();
        let guess = self.predict(features).to_string();
        if guess != gold {
            let gold_feats: Vec<String> = features.iter().map(|f| key(f, gold)).collect();
            let guess_feats: Vec<String> = features.iter().map(|f| key(f, &guess)).collect();
            self.model.update(&gold_feats, &guess_feats);
        }
    }

    pub fn finalize(&mut self) {
        self.model.finalize_average();
    }

    pub fn save(&self) -> String {
        let classes = self.classes.join(" ");
        let body = self.model.save(&format!("classifier {classes}"));
        body
    }

    pub fn load(text: &str) -> Result<Classifier, LearnError> {
        let (model, mode) = Model::load(text)?;
        let mut parts = mode.split_whitespace();
        if parts.next() != Some("classifier") {
            return Err(LearnError::ModelFormat("not a classifier model".into()));
        }
        let classes: Vec<String> = parts.map(|s| s.to_string()).collect();
        Ok(Classifier { model, classes })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::parse_instance;

    fn setup() -> (DeepGraph, GoldRealization, Lexicon, PosMap) {
        let g = parse_instance(crate::fixtures::FIG2_DEEP).unwrap();
        let gold = GoldRealization::parse_line(crate::fixtures::FIG2_GOLD.trim()).unwrap();
        let lex = Lexicon::parse(crate::fixtures::TOY_LEXICON).unwrap();
        let posmap = PosMap::learn(&[(g.clone(), gold.clone())], &lex);
        (g, gold, lex, posmap)
    }

    #[test]
    fn oracle_reproduces_joint_worked_example() {
        let (g, gold, lex, posmap) = setup();
        let deriv = oracle_derivation(&g, &gold, Mode::Joint, &lex, &posmap).unwrap();
        let shorthand: Vec<String> =
            deriv.real_actions().iter().map(|a| a.display()).collect();
        assert_eq!(
            shorthand,
            vec![
                "SH-meanwhile", "IN", "SH-prices", "SH-are", "SH-thought", "SP-to", "SH-have",
                "SH-increased", "RA", "RA", "RA", "SH-.", "RA", "LA", "LA",
            ]
        );
        assert_eq!(deriv.actions.len(), 5 * 7 - 1);
        assert_eq!(
            deriv.surface().join(" "),
            "meanwhile , prices are thought to have increased ."
        );
        let report = verify_replay(&deriv.final_state, &g, &gold);
        assert!(report.surface_ok && report.tree_ok);
    }

    #[test]
    fn oracle_actions_all_legal_in_joint_mask() {
        let (g, gold, lex, posmap) = setup();
        let deriv = oracle_derivation(&g, &gold, Mode::Joint, &lex, &posmap).unwrap();
        let ctx = DecodeContext::new(&g, Mode::Joint, &lex, &posmap);
        check_mask_completeness(&ctx, &deriv).unwrap();
    }

    #[test]
    fn averaging_halves_a_retracted_weight() {
        let mut m = Model::new();
        m.tick(); // sentence 1
        m.update(&["f=>A".to_string()], &[]);
        m.tick(); // sentence 2
        m.update(&[], &["f=>A".to_string()]);
        m.finalize_average();
        assert!((m.weight("f=>A") - 0.5).abs() < 1e-12);
    }

    #[test]
    fn averaging_is_idempotent_and_constant_weight_stays() {
        let mut m = Model::new();
        m.tick();
        m.update(&["f=>A".to_string()], &[]);
        for _ in 0..9 {
            m.tick();
        }
        m.finalize_average();
        assert!((m.weight("f=>A") - 1.0).abs() < 1e-12);
        m.finalize_average();
        assert!((m.weight("f=>A") - 1.0).abs() < 1e-12);
    }

    #[test]
    fn averaging_matches_snapshot_oracle() {
        // Randomized update sequence, compared against explicit snapshots.
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let feats = ["a=>X".to_string(), "b=>X".to_string(), "c=>Y".to_string()];
        let mut model = Model::new();
        let mut snapshots: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut current: BTreeMap<String, f64> = BTreeMap::new();
        for _ in 0..50 {
            model.tick();
            if rng.gen_bool(0.6) {
                let up = &feats[rng.gen_range(0..feats.len())];
                let down = &feats[rng.gen_range(0..feats.len())];
                model.update(std::slice::from_ref(up), std::slice::from_ref(down));
                *current.entry(up.clone()).or_default() += 1.0;
                *current.entry(down.clone()).or_default() -= 1.0;
            }
            for f in &feats {
                snapshots
                    .entry(f.clone())
                    .or_default()
                    .push(current.get(f).copied().unwrap_or(0.0));
            }
        }
        model.finalize_average();
        for f in &feats {
            let snaps = &snapshots[f];
            let mean: f64 = snaps.iter().sum::<f64>() / snaps.len() as f64;
            assert!(
                (model.weight(f) - mean).abs() < 1e-9,
                "{f}: {} vs {}",
                model.weight(f),
                mean
            );
        }
    }

    #[test]
    fn model_file_roundtrip_and_version_check() {
        let mut m = Model::new();
        m.tick();
        m.update(&["f=>A".to_string(), "g=>B".to_string()], &[]);
        m.finalize_average();
        let text = m.save("joint");
        let (loaded, mode) = Model::load(&text).unwrap();
        assert_eq!(mode, "joint");
        assert_eq!(loaded.weight("f=>A"), m.weight("f=>A"));
        assert!(Model::load("DEEPLIN-MODEL v2 joint\n").is_err());
        assert!(Model::load("garbage\n").is_err());
    }

    #[test]
    fn beam_decode_single_node() {
        let (_, _, lex, posmap) = setup();
        let g = parse_instance("SROOT\t1\t0\tmeanwhile\t_\tmeanwhile").unwrap();
        let ctx = DecodeContext::new(&g, Mode::Joint, &lex, &posmap);
        let deriv = beam_decode(&ctx, &Model::new(), 4).unwrap();
        assert_eq!(deriv.surface(), vec!["meanwhile"]);
        assert_eq!(deriv.actions.len(), 4); // shift + 3 idle
    }

    #[test]
    fn gold_rewarding_model_decodes_worked_example_greedily() {
        let (g, gold, lex, posmap) = setup();
        let oracle = oracle_derivation(&g, &gold, Mode::Joint, &lex, &posmap).unwrap();
        let ctx = DecodeContext::new(&g, Mode::Joint, &lex, &posmap);
        // Reward exactly the gold action at each gold prefix state.
        let mut model = Model::new();
        model.tick();
        let gold_feats = collect_features(&ctx, &oracle.actions);
        model.update(&gold_feats, &[]);
        let deriv = beam_decode(&ctx, &model, 1).unwrap();
        assert_eq!(deriv.actions, oracle.actions);
    }

    #[test]
    fn perceptron_update_raises_gold_score() {
        let (g, gold, lex, posmap) = setup();
        let ctx = DecodeContext::new(&g, Mode::Joint, &lex, &posmap);
        let oracle = oracle_derivation(&g, &gold, Mode::Joint, &lex, &posmap).unwrap();
        let gold_action = &oracle.actions[0];
        let other = Action::Shift { node: 2, pos: "NNS".to_string(), form: "prices".to_string() };
        let state = initial_state(&g);
        let mut model = Model::new();
        model.tick();
        let before_gold = score_action(&model, &state, &ctx, gold_action);
        let gf: Vec<String> = phi(&state, &ctx, gold_action)
            .iter()
            .map(|f| key(f, &gold_action.id_string()))
            .collect();
        let of: Vec<String> =
            phi(&state, &ctx, &other).iter().map(|f| key(f, &other.id_string())).collect();
        model.update(&gf, &of);
        let after_gold = score_action(&model, &state, &ctx, gold_action);
        let after_other = score_action(&model, &state, &ctx, &other);
        assert!(after_gold > before_gold);
        assert!(after_gold > after_other);
    }

    #[test]
    fn one_sentence_overfit() {
        let (g, gold, lex, posmap) = setup();
        let oracle = oracle_derivation(&g, &gold, Mode::Joint, &lex, &posmap).unwrap();
        let cfg = TrainConfig { beam: 4, iterations: 10, seed: 1 };
        let model = train_linearizer(
            &[(g.clone(), oracle.clone())],
            Mode::Joint,
            &lex,
            &posmap,
            &cfg,
            |_, _| {},
        )
        .unwrap();
        let ctx = DecodeContext::new(&g, Mode::Joint, &lex, &posmap);
        let deriv = beam_decode(&ctx, &model, 4).unwrap();
        assert_eq!(
            deriv.surface().join(" "),
            "meanwhile , prices are thought to have increased ."
        );
    }

    #[test]
    fn classifier_learns_simple_mapping() {
        let mut c = Classifier::new(vec!["0".into(), "1".into()]);
        let pos = vec!["w:yes".to_string()];
        let neg = vec!["w:no".to_string()];
        for _ in 0..5 {
            c.learn(&pos, "1");
            c.learn(&neg, "0");
        }
        c.finalize();
        assert_eq!(c.predict(&pos), "1");
        assert_eq!(c.predict(&neg), "0");
        let reloaded = Classifier::load(&c.save()).unwrap();
        assert_eq!(reloaded.predict(&pos), "1");
        assert_eq!(reloaded.classes, c.classes);
    }
}
