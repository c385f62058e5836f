//! Legal-action computation for shallow and joint linearization.
//!
//! Not every action sequence corresponds to a well-formed output, so the
//! decoder only expands actions that can still lead to a valid tree over
//! the input graph. The computation extracts a syntactic tree from the
//! graph on the fly: arcs are only offered where the graph has them, and
//! shifts are restricted to nodes that cannot strand material elsewhere.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::features::PosMap;
use crate::graph::{Closure, DeepGraph, NodeId};
use crate::morphology::{candidate_inflections, Lexicon};
use crate::transition::{is_completed, Action, Mode, RealizerState, SplitWord};

/// Everything decoding needs about one input graph: adjacency closure and
/// the precomputed Shift options (POS and candidate forms) per node.
#[derive(Debug, Clone)]
pub struct DecodeContext<'a> {
    pub graph: &'a DeepGraph,
    pub mode: Mode,
    pub closure: Closure,
    /// Per node: (pos-tag, surface-form) candidates for Shift.
    pub shift_options: BTreeMap<NodeId, Vec<(String, String)>>,
    poses: BTreeMap<NodeId, String>,
    pub n: usize,
}

impl<'a> DecodeContext<'a> {
    pub fn new(graph: &'a DeepGraph, mode: Mode, lex: &Lexicon, posmap: &PosMap) -> DecodeContext<'a> {
        let closure = Closure::build(graph);
        let mut shift_options = BTreeMap::new();
        let mut poses = BTreeMap::new();
        for (&id, node) in &graph.nodes {
            let pos = posmap.pos_of(&node.lemma).to_string();
            let forms = match mode {
                Mode::Shallow => vec![node.lemma.clone()],
                Mode::Joint => candidate_inflections(node, graph, lex).forms,
            };
            shift_options.insert(id, forms.into_iter().map(|f| (pos.clone(), f)).collect());
            poses.insert(id, pos);
        }
        let n = graph.len();
        DecodeContext { graph, mode, closure, shift_options, poses, n }
    }

    pub fn pos_of(&self, id: NodeId) -> &str {
        self.poses.get(&id).map(|s| s.as_str()).unwrap_or("<none>")
    }

    pub fn total_steps(&self) -> usize {
        self.mode.total_steps(self.n)
    }
}

/// Children of `i` that no other node can claim anymore: either `i` is the
/// only parent, or every other parent is already shifted past the point of
/// taking the child (it holds a left arc, or it is neither unshifted nor on
/// the stack).
pub fn direct_children(state: &RealizerState, ctx: &DecodeContext, i: NodeId) -> BTreeSet<NodeId> {
    let mut dc = BTreeSet::new();
    'children: for &k in ctx.closure.children(i) {
        let parents = ctx.closure.parents(k);
        if parents.len() > 1 {
            for &m in parents {
                if m == i || state.has_left_child(m) {
                    continue;
                }
                if state.rho.contains(&m) || state.on_stack(m) {
                    continue 'children;
                }
            }
        }
        dc.insert(k);
    }
    dc
}

/// Breadth-first collection of `head` (when unshifted) and its unshifted
/// descendants, expanding only through unshifted nodes.
pub fn shift_subtree(state: &RealizerState, ctx: &DecodeContext, head: NodeId) -> BTreeSet<NodeId> {
    let mut out = BTreeSet::new();
    if state.rho.contains(&head) {
        out.insert(head);
    }
    let mut seen = BTreeSet::from([head]);
    let mut queue = VecDeque::from([head]);
    while let Some(front) = queue.pop_front() {
        for &m in ctx.closure.children(front) {
            if state.rho.contains(&m) && seen.insert(m) {
                queue.push_back(m);
                out.insert(m);
            }
        }
    }
    out
}

/// For stack top `i` a descendant of `j`: shifts the unshifted parents of
/// `i` that are themselves descendants of `j`, with their subtrees.
pub fn process_descendant(
    state: &RealizerState,
    ctx: &DecodeContext,
    i: NodeId,
    j: NodeId,
) -> BTreeSet<NodeId> {
    let mut out = BTreeSet::new();
    for &p in ctx.closure.parents(i) {
        if state.rho.contains(&p) && ctx.closure.is_descendant(p, j) {
            out.extend(shift_subtree(state, ctx, p));
        }
    }
    out
}

/// With a single stack element: shifts every unshifted parent of `i` and
/// the parents' unshifted descendants.
pub fn shift_parent_and_siblings(
    state: &RealizerState,
    ctx: &DecodeContext,
    i: NodeId,
) -> BTreeSet<NodeId> {
    let mut out = BTreeSet::new();
    for &p in ctx.closure.parents(i) {
        if state.rho.contains(&p) {
            out.extend(shift_subtree(state, ctx, p));
        }
    }
    out
}

/// Whether an unshifted node `p` has a path to the stack bottom through
/// descendant/ancestor/sibling relations, checked from stack level `lvl`
/// downwards (1-based; level 0 means the bottom was walked past).
fn reaches_bottom(
    state: &RealizerState,
    ctx: &DecodeContext,
    stack: &[NodeId],
    p: NodeId,
    lvl: usize,
) -> bool {
    if lvl == 0 {
        return true;
    }
    let anchor = stack[lvl - 1];
    if ctx.closure.is_descendant(p, anchor) {
        return true;
    }
    // An ancestor of the stack bottom will dominate everything left on the
    // stack; an ancestor of an intermediate element guarantees nothing
    // about what lies beneath it.
    if lvl == 1 && ctx.closure.is_descendant(anchor, p) {
        return true;
    }
    for q in ctx.closure.common_parents(p, anchor) {
        if state.rho.contains(&q) && reaches_bottom(state, ctx, stack, q, lvl - 1) {
            return true;
        }
    }
    false
}

/// For stack top `i` a sibling of `j`: identifies valid inflection points
/// (unshifted common parents of `i` and `j`, or unshifted ancestors of `i`,
/// that reach the stack bottom through sibling/descendant paths) and shifts
/// the relevant parents with their subtrees.
pub fn process_sibling(
    state: &RealizerState,
    ctx: &DecodeContext,
    i: NodeId,
    j: NodeId,
) -> BTreeSet<NodeId> {
    let stack: Vec<NodeId> = state.stack.iter().map(|s| s.node).collect();
    let lvl = stack.len().saturating_sub(2);
    let mut out = BTreeSet::new();
    let common: BTreeSet<NodeId> = ctx.closure.common_parents(i, j).into_iter().collect();
    for &p in &common {
        if state.rho.contains(&p) && reaches_bottom(state, ctx, &stack, p, lvl) {
            out.extend(shift_subtree(state, ctx, p));
        }
    }
    // Ancestor-only inflection points contribute the parents of `i` that
    // descend from them, plus those parents' descendants.
    for a in ctx.graph.ids() {
        if common.contains(&a) || !state.rho.contains(&a) {
            continue;
        }
        if !ctx.closure.is_descendant(i, a) {
            continue;
        }
        if !reaches_bottom(state, ctx, &stack, a, lvl) {
            continue;
        }
        for &p0 in ctx.closure.parents(i) {
            if state.rho.contains(&p0) && ctx.closure.is_descendant(p0, a) {
                out.extend(shift_subtree(state, ctx, p0));
            }
        }
    }
    out
}

struct BaseMask {
    shifts: BTreeSet<NodeId>,
    left_arc: bool,
    right_arc: bool,
}

/// The shared core of the shallow and joint masks.
fn base_mask(state: &RealizerState, ctx: &DecodeContext) -> BaseMask {
    let mut mask = BaseMask { shifts: BTreeSet::new(), left_arc: false, right_arc: false };
    let top = match state.top() {
        Some(item) => item.node,
        None => {
            mask.shifts = state.rho.clone();
            return mask;
        }
    };
    let i = top;
    let dc = direct_children(state, ctx, i);
    if dc.iter().any(|k| state.rho.contains(k)) {
        mask.shifts = shift_subtree(state, ctx, i);
        return mask;
    }
    if !state.has_left_child(i) {
        mask.shifts.extend(shift_subtree(state, ctx, i));
    }
    match state.second() {
        Some(second) => {
            let j = second.node;
            if ctx.graph.has_arc(j, i) && !state.has_left_child(j) {
                mask.right_arc = true;
                if ctx.closure.is_descendant(i, j) {
                    mask.shifts.extend(process_descendant(state, ctx, i, j));
                }
                if ctx.closure.are_siblings(i, j) {
                    mask.shifts.extend(process_sibling(state, ctx, i, j));
                }
            } else if ctx.graph.has_arc(i, j) {
                mask.left_arc = true;
                if ctx.closure.are_siblings(i, j) {
                    mask.shifts.extend(process_sibling(state, ctx, i, j));
                }
            } else {
                if ctx.closure.is_descendant(i, j) {
                    mask.shifts.extend(process_descendant(state, ctx, i, j));
                }
                if ctx.closure.are_siblings(i, j) {
                    mask.shifts.extend(process_sibling(state, ctx, i, j));
                }
            }
        }
        None => {
            mask.shifts.extend(shift_parent_and_siblings(state, ctx, i));
        }
    }
    mask
}

fn expand_shifts(ctx: &DecodeContext, nodes: &BTreeSet<NodeId>, out: &mut Vec<Action>) {
    for &node in nodes {
        if let Some(options) = ctx.shift_options.get(&node) {
            for (pos, form) in options {
                out.push(Action::Shift { node, pos: pos.clone(), form: form.clone() });
            }
        }
    }
}

/// Insert and SplitArc consume a step without shifting or reducing, so they
/// are only legal while the derivation can still finish within 5n-1 steps.
fn fits_step_budget(state: &RealizerState, ctx: &DecodeContext) -> bool {
    let min_remaining = 2 * state.rho.len() + state.stack.len();
    state.step + 1 + min_remaining <= ctx.total_steps() + 1
}

/// Legal actions for shallow linearization: Shift, LeftArc and RightArc
/// only, following the tree-extraction constraints.
pub fn legal_actions_shallow(state: &RealizerState, ctx: &DecodeContext) -> Vec<Action> {
    if is_completed(state) {
        return Vec::new();
    }
    let mask = base_mask(state, ctx);
    let mut out = Vec::new();
    expand_shifts(ctx, &mask.shifts, &mut out);
    if mask.left_arc {
        out.push(Action::LeftArc);
    }
    if mask.right_arc {
        out.push(Action::RightArc);
    }
    out
}

/// Legal actions for joint realization: the shallow mask with Shift
/// expanded per candidate inflection, plus SplitArc, Insert and Idle.
pub fn legal_actions_joint(state: &RealizerState, ctx: &DecodeContext) -> Vec<Action> {
    // A pending split restricts the mask to shifts of the stack top's
    // unshifted children.
    if let Some(_) = state.pending_split {
        let top = state.top().expect("pending split implies non-empty stack");
        let nodes: BTreeSet<NodeId> = ctx
            .closure
            .children(top.node)
            .iter()
            .copied()
            .filter(|c| state.rho.contains(c))
            .collect();
        let mut out = Vec::new();
        expand_shifts(ctx, &nodes, &mut out);
        return out;
    }
    if is_completed(state) {
        return if state.step < ctx.total_steps() { vec![Action::Idle] } else { Vec::new() };
    }
    let mask = base_mask(state, ctx);
    let mut out = Vec::new();
    expand_shifts(ctx, &mask.shifts, &mut out);
    if mask.left_arc {
        out.push(Action::LeftArc);
    }
    if mask.right_arc {
        out.push(Action::RightArc);
    }
    if let Some(top) = state.top() {
        let i = top.node;
        let budget = fits_step_budget(state, ctx);
        let child_unshifted =
            ctx.closure.children(i).iter().any(|c| state.rho.contains(c));
        if budget && child_unshifted {
            out.push(Action::Split(SplitWord::To));
            out.push(Action::Split(SplitWord::That));
        }
        let sibling_of_second = state
            .second()
            .map(|s| ctx.closure.are_siblings(i, s.node))
            .unwrap_or(false);
        if budget
            && (!state.rho.is_empty() || sibling_of_second)
            && state.trailing_inserts() < 3
        {
            out.push(Action::Insert);
        }
    }
    out
}

/// Mode dispatch.
pub fn legal_actions(state: &RealizerState, ctx: &DecodeContext) -> Vec<Action> {
    match ctx.mode {
        Mode::Shallow => legal_actions_shallow(state, ctx),
        Mode::Joint => legal_actions_joint(state, ctx),
    }
}
