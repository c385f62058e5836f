//! The transition system: states, actions, deterministic application
//! semantics, terminal detection and surface extraction.
//!
//! A state is the tuple (stack, unshifted set, built arcs) plus the emitted
//! surface and bookkeeping. Shallow derivations take exactly 2n-1 actions;
//! joint derivations insert function words and pad with Idle to 5n-1.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::graph::{DeepGraph, FwKind, NodeId, TokenSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Shallow,
    Joint,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Shallow => "shallow",
            Mode::Joint => "joint",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        match s {
            "shallow" => Some(Mode::Shallow),
            "joint" => Some(Mode::Joint),
            _ => None,
        }
    }

    /// Total number of steps a derivation over `n` nodes runs for.
    pub fn total_steps(self, n: usize) -> usize {
        match self {
            Mode::Shallow => 2 * n - 1,
            Mode::Joint => 5 * n - 1,
        }
    }
}

/// Function words a SplitArc action can introduce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SplitWord {
    To,
    That,
}

impl SplitWord {
    pub fn surface(self) -> &'static str {
        match self {
            SplitWord::To => "to",
            SplitWord::That => "that",
        }
    }

    pub fn fw_kind(self) -> FwKind {
        match self {
            SplitWord::To => FwKind::To,
            SplitWord::That => FwKind::That,
        }
    }

    pub fn pos_tag(self) -> &'static str {
        match self {
            SplitWord::To => "TO",
            SplitWord::That => "IN",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Action {
    Shift { node: NodeId, pos: String, form: String },
    LeftArc,
    RightArc,
    Insert,
    Split(SplitWord),
    Idle,
}

impl Action {
    /// Identity string conjoined with features when scoring.
    pub fn id_string(&self) -> String {
        match self {
            Action::Shift { pos, form, .. } => format!("SH|{form}|{pos}"),
            Action::LeftArc => "LA".to_string(),
            Action::RightArc => "RA".to_string(),
            Action::Insert => "IN".to_string(),
            Action::Split(w) => format!("SP|{}", w.surface()),
            Action::Idle => "IDLE".to_string(),
        }
    }

    /// Short display form matching the derivation tables.
    pub fn display(&self) -> String {
        match self {
            Action::Shift { form, .. } => format!("SH-{form}"),
            Action::LeftArc => "LA".to_string(),
            Action::RightArc => "RA".to_string(),
            Action::Insert => "IN".to_string(),
            Action::Split(w) => format!("SP-{}", w.surface()),
            Action::Idle => "IDLE".to_string(),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.display())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TransitionError {
    #[error("illegal action {action} at step {step}: {reason}")]
    Illegal { action: String, step: usize, reason: String },
    #[error("state is not terminal")]
    NotTerminal,
}

/// One emitted surface token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmittedToken {
    pub form: String,
    pub pos: String,
    pub source: TokenSource,
}

/// Arc built over graph nodes during a derivation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BuiltArc {
    pub head: NodeId,
    pub child: NodeId,
    pub label: String,
}

/// Attachment record for a function word emitted in joint mode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FwAttach {
    pub kind: FwKind,
    /// Index of the token in `emitted`.
    pub emit: usize,
    pub head: NodeId,
    /// The shifted child, for to/that splits.
    pub child: Option<NodeId>,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StackItem {
    pub node: NodeId,
    /// Index into `emitted` for this node's token.
    pub emit: usize,
}

/// Immutable transition state; `apply` returns a fresh successor.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizerState {
    pub stack: Vec<StackItem>,
    pub rho: BTreeSet<NodeId>,
    pub arcs: Vec<BuiltArc>,
    pub emitted: Vec<EmittedToken>,
    pub fw: Vec<FwAttach>,
    pub pending_split: Option<SplitWord>,
    pub history: Vec<Action>,
    pub score: f64,
    pub step: usize,
}

impl RealizerState {
    pub fn top(&self) -> Option<StackItem> {
        self.stack.last().copied()
    }

    pub fn second(&self) -> Option<StackItem> {
        if self.stack.len() >= 2 {
            Some(self.stack[self.stack.len() - 2])
        } else {
            None
        }
    }

    pub fn is_shifted(&self, id: NodeId) -> bool {
        !self.rho.contains(&id)
    }

    pub fn on_stack(&self, id: NodeId) -> bool {
        self.stack.iter().any(|s| s.node == id)
    }

    /// Emitted position of a shifted node.
    pub fn emit_of(&self, id: NodeId) -> Option<usize> {
        self.emitted.iter().position(|t| t.source == TokenSource::Node(id))
    }

    /// Whether `m` has already taken a left child, i.e. an arc to a
    /// dependent emitted before `m`. Function-word attachments do not count.
    pub fn has_left_child(&self, m: NodeId) -> bool {
        let m_pos = match self.emit_of(m) {
            Some(p) => p,
            None => return false,
        };
        self.arcs.iter().any(|a| {
            a.head == m && self.emit_of(a.child).map(|p| p < m_pos).unwrap_or(false)
        })
    }

    /// Dependents of `head` among built arcs, in emission order.
    pub fn built_children(&self, head: NodeId) -> Vec<&BuiltArc> {
        let mut out: Vec<&BuiltArc> = self.arcs.iter().filter(|a| a.head == head).collect();
        out.sort_by_key(|a| self.emit_of(a.child));
        out
    }

    /// Number of trailing Insert actions in the history.
    pub fn trailing_inserts(&self) -> usize {
        self.history
            .iter()
            .rev()
            .take_while(|a| matches!(a, Action::Insert))
            .count()
    }

    pub fn surface_forms(&self) -> Vec<String> {
        self.emitted.iter().map(|t| t.form.clone()).collect()
    }
}

/// Empty stack, all nodes unshifted, nothing built.
pub fn initial_state(g: &DeepGraph) -> RealizerState {
    RealizerState {
        stack: Vec::new(),
        rho: g.ids().collect(),
        arcs: Vec::new(),
        emitted: Vec::new(),
        fw: Vec::new(),
        pending_split: None,
        history: Vec::new(),
        score: 0.0,
        step: 0,
    }
}

fn illegal(action: &Action, state: &RealizerState, reason: impl Into<String>) -> TransitionError {
    TransitionError::Illegal {
        action: action.display(),
        step: state.step,
        reason: reason.into(),
    }
}

/// Applies one action. Legality with respect to the constraint system is
/// the caller's duty; this only rejects structurally infeasible actions.
pub fn apply(g: &DeepGraph, state: &RealizerState, action: &Action) -> Result<RealizerState, TransitionError> {
    let mut next = state.clone();
    match action {
        Action::Shift { node, pos, form } => {
            if !next.rho.remove(node) {
                return Err(illegal(action, state, format!("node {node} is not unshifted")));
            }
            if let Some(word) = next.pending_split.take() {
                let head = match state.top() {
                    Some(item) => item.node,
                    None => {
                        return Err(illegal(action, state, "pending split with empty stack"));
                    }
                };
                let label = g
                    .arc_label(head, *node)
                    .ok_or_else(|| {
                        illegal(action, state, format!("no arc {head}->{node} to split"))
                    })?
                    .to_string();
                next.emitted.push(EmittedToken {
                    form: word.surface().to_string(),
                    pos: word.pos_tag().to_string(),
                    source: TokenSource::Fw(word.fw_kind()),
                });
                next.fw.push(FwAttach {
                    kind: word.fw_kind(),
                    emit: next.emitted.len() - 1,
                    head,
                    child: Some(*node),
                    label,
                });
            }
            next.emitted.push(EmittedToken {
                form: form.clone(),
                pos: pos.clone(),
                source: TokenSource::Node(*node),
            });
            next.stack.push(StackItem { node: *node, emit: next.emitted.len() - 1 });
        }
        Action::LeftArc => {
            if next.stack.len() < 2 {
                return Err(illegal(action, state, "needs two stack items"));
            }
            let top = next.stack.pop().unwrap();
            let second = next.stack.pop().unwrap();
            let label = g
                .arc_label(top.node, second.node)
                .ok_or_else(|| {
                    illegal(action, state, format!("no arc {}->{}", top.node, second.node))
                })?
                .to_string();
            next.arcs.push(BuiltArc { head: top.node, child: second.node, label });
            next.stack.push(top);
        }
        Action::RightArc => {
            if next.stack.len() < 2 {
                return Err(illegal(action, state, "needs two stack items"));
            }
            let top = next.stack.pop().unwrap();
            let second = *next.stack.last().unwrap();
            let label = g
                .arc_label(second.node, top.node)
                .ok_or_else(|| {
                    illegal(action, state, format!("no arc {}->{}", second.node, top.node))
                })?
                .to_string();
            next.arcs.push(BuiltArc { head: second.node, child: top.node, label });
        }
        Action::Insert => {
            let top = state
                .top()
                .ok_or_else(|| illegal(action, state, "insert on empty stack"))?;
            next.emitted.push(EmittedToken {
                form: ",".to_string(),
                pos: ",".to_string(),
                source: TokenSource::Fw(FwKind::Comma),
            });
            next.fw.push(FwAttach {
                kind: FwKind::Comma,
                emit: next.emitted.len() - 1,
                head: top.node,
                child: None,
                label: "P".to_string(),
            });
        }
        Action::Split(word) => {
            if state.pending_split.is_some() {
                return Err(illegal(action, state, "split already pending"));
            }
            if state.stack.is_empty() {
                return Err(illegal(action, state, "split on empty stack"));
            }
            next.pending_split = Some(*word);
        }
        Action::Idle => {}
    }
    next.step += 1;
    next.history.push(action.clone());
    Ok(next)
}

/// Terminal test. Shallow: all shifted and one stack item. Joint: the same
/// plus Idle padding up to exactly 5n-1 steps.
pub fn is_terminal(state: &RealizerState, mode: Mode, n: usize) -> bool {
    let completed = state.rho.is_empty() && state.stack.len() == 1;
    match mode {
        Mode::Shallow => completed,
        Mode::Joint => completed && state.step == mode.total_steps(n),
    }
}

/// Completed but possibly still padding with Idle.
pub fn is_completed(state: &RealizerState) -> bool {
    state.rho.is_empty() && state.stack.len() == 1
}

/// Emitted token sequence of a terminal state.
pub fn surface(state: &RealizerState, mode: Mode, n: usize) -> Result<Vec<String>, TransitionError> {
    if !is_terminal(state, mode, n) {
        return Err(TransitionError::NotTerminal);
    }
    Ok(state.surface_forms())
}

/// A finished derivation: the action sequence plus the state it produces.
#[derive(Debug, Clone)]
pub struct Derivation {
    pub actions: Vec<Action>,
    pub final_state: RealizerState,
}

impl Derivation {
    /// Non-Idle actions, the content of the derivation tables.
    pub fn real_actions(&self) -> Vec<&Action> {
        self.actions.iter().filter(|a| !matches!(a, Action::Idle)).collect()
    }

    pub fn surface(&self) -> Vec<String> {
        self.final_state.surface_forms()
    }
}

/// Replays actions from the initial state.
pub fn replay(g: &DeepGraph, actions: &[Action]) -> Result<RealizerState, TransitionError> {
    let mut state = initial_state(g);
    for action in actions {
        state = apply(g, &state, action)?;
    }
    Ok(state)
}

fn fmt_stack(state: &RealizerState) -> String {
    let items: Vec<String> = state.stack.iter().map(|s| s.node.to_string()).collect();
    format!("[{}]", items.join(" "))
}

fn fmt_rho(state: &RealizerState) -> String {
    let items: Vec<String> = state.rho.iter().map(|n| n.to_string()).collect();
    format!("{{{}}}", items.join(","))
}

/// Human-readable trace in the style of the derivation tables: one action
/// per line with index, stack, unshifted set and any new arc.
pub fn trace(g: &DeepGraph, actions: &[Action]) -> Result<String, TransitionError> {
    let mut state = initial_state(g);
    let mut out = String::new();
    out.push_str(&format!("{:>3}  {:<16} {:<24} {:<20} {}\n", 0, "", fmt_stack(&state), fmt_rho(&state), ""));
    for (i, action) in actions.iter().enumerate() {
        let prev_arcs = state.arcs.len();
        let prev_fw = state.fw.len();
        state = apply(g, &state, action)?;
        let mut arc_note = String::new();
        if state.arcs.len() > prev_arcs {
            let a = state.arcs.last().unwrap();
            arc_note = format!("A+={{{}->{}}}", a.head, a.child);
        } else if state.fw.len() > prev_fw {
            let f = state.fw.last().unwrap();
            arc_note = match f.child {
                Some(c) => format!("fw {} {}->{}", f.kind.surface(), f.head, c),
                None => format!("fw , under {}", f.head),
            };
        }
        out.push_str(&format!(
            "{:>3}  {:<16} {:<24} {:<20} {}\n",
            i + 1,
            action.display(),
            fmt_stack(&state),
            fmt_rho(&state),
            arc_note
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::parse_instance;

    fn fig2() -> DeepGraph {
        parse_instance(crate::fixtures::FIG2_DEEP).unwrap()
    }

    fn sh(node: NodeId, form: &str) -> Action {
        Action::Shift { node, pos: "X".to_string(), form: form.to_string() }
    }

    #[test]
    fn initial_state_covers_all_nodes() {
        let g = fig2();
        let s = initial_state(&g);
        assert_eq!(s.rho.len(), 7);
        assert!(s.stack.is_empty());
        assert!(s.emitted.is_empty());
        assert_eq!(s.step, 0);
    }

    #[test]
    fn split_is_deferred_and_consumed_by_next_shift() {
        let g = fig2();
        let mut s = initial_state(&g);
        for a in [sh(7, "meanwhile"), sh(2, "prices"), sh(5, "are"), sh(1, "thought")] {
            s = apply(&g, &s, &a).unwrap();
        }
        let s = apply(&g, &s, &Action::Split(SplitWord::To)).unwrap();
        assert_eq!(s.pending_split, Some(SplitWord::To));
        assert_eq!(s.stack.len(), 4); // unchanged
        let s = apply(&g, &s, &sh(6, "have")).unwrap();
        assert_eq!(s.pending_split, None);
        let forms = s.surface_forms();
        assert_eq!(forms, vec!["meanwhile", "prices", "are", "thought", "to", "have"]);
        let split = s.fw.last().unwrap();
        assert_eq!(split.head, 1);
        assert_eq!(split.child, Some(6));
        assert_eq!(split.label, "C-A1");
    }

    #[test]
    fn left_arc_on_short_stack_is_illegal() {
        let g = fig2();
        let s = apply(&g, &initial_state(&g), &sh(7, "meanwhile")).unwrap();
        let err = apply(&g, &s, &Action::LeftArc).unwrap_err();
        assert!(matches!(err, TransitionError::Illegal { .. }));
    }

    #[test]
    fn shift_of_shifted_node_is_illegal() {
        let g = fig2();
        let s = apply(&g, &initial_state(&g), &sh(7, "meanwhile")).unwrap();
        assert!(apply(&g, &s, &sh(7, "meanwhile")).is_err());
    }

    #[test]
    fn double_split_is_illegal() {
        let g = fig2();
        let s = apply(&g, &initial_state(&g), &sh(1, "thought")).unwrap();
        let s = apply(&g, &s, &Action::Split(SplitWord::To)).unwrap();
        assert!(apply(&g, &s, &Action::Split(SplitWord::That)).is_err());
    }

    #[test]
    fn insert_attaches_comma_under_stack_top() {
        let g = fig2();
        let s = apply(&g, &initial_state(&g), &sh(7, "meanwhile")).unwrap();
        let s = apply(&g, &s, &Action::Insert).unwrap();
        assert_eq!(s.surface_forms(), vec!["meanwhile", ","]);
        let f = s.fw.last().unwrap();
        assert_eq!(f.head, 7);
        assert_eq!(f.label, "P");
        assert_eq!(f.child, None);
    }

    #[test]
    fn terminal_requires_idle_padding_in_joint_mode() {
        let g = parse_instance("SROOT\t1\t0\tbe\t_\tbe").unwrap();
        let s = apply(&g, &initial_state(&g), &sh(1, "be")).unwrap();
        assert!(is_terminal(&s, Mode::Shallow, 1));
        assert!(!is_terminal(&s, Mode::Joint, 1)); // needs 5*1-1 = 4 steps
        let mut s = s;
        for _ in 0..3 {
            s = apply(&g, &s, &Action::Idle).unwrap();
        }
        assert!(is_terminal(&s, Mode::Joint, 1));
        assert_eq!(surface(&s, Mode::Joint, 1).unwrap(), vec!["be"]);
    }

    #[test]
    fn surface_on_nonterminal_errors() {
        let g = fig2();
        let s = initial_state(&g);
        assert_eq!(surface(&s, Mode::Shallow, 7), Err(TransitionError::NotTerminal));
    }

    #[test]
    fn replay_reproduces_state() {
        let g = fig2();
        let mut s = initial_state(&g);
        for a in [sh(7, "meanwhile"), Action::Insert, sh(2, "prices"), sh(5, "are")] {
            s = apply(&g, &s, &a).unwrap();
        }
        let replayed = replay(&g, &s.history).unwrap();
        assert_eq!(replayed, s);
    }

    #[test]
    fn left_child_bookkeeping() {
        let g = fig2();
        let mut s = initial_state(&g);
        for a in [sh(2, "prices"), sh(5, "are"), Action::LeftArc] {
            s = apply(&g, &s, &a).unwrap();
        }
        assert!(s.has_left_child(5));
        assert!(!s.has_left_child(2));
        assert_eq!(s.stack.len(), 1);
        assert_eq!(s.arcs[0], BuiltArc { head: 5, child: 2, label: "SBJ".to_string() });
    }
}
