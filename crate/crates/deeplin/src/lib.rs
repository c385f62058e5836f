//! deeplin: joint transition-based surface realization.
//!
//! Linearizes unordered deep dependency graphs of lemmas into ordered,
//! inflected sentences with function words inserted. One transition system
//! does everything jointly; a three-stage pipelined baseline (function-word
//! classifiers, shallow-graph linearization, per-lemma morphology) is
//! included for comparison. Both are trained with a beam-search averaged
//! perceptron with early update.

pub mod constraints;
pub mod eval;
pub mod features;
pub mod fixtures;
pub mod graph;
pub mod learner;
pub mod morphology;
pub mod pipeline;
pub mod synth;
pub mod transition;

pub use graph::{DeepGraph, GoldRealization, ShallowGraph};
pub use transition::{Action, Derivation, Mode, RealizerState};
