//! STRIPS plan verification and instruction-data tooling.
//!
//! The crate bundles the pieces needed to teach and test symbolic-planning
//! skills around an external language model:
//!
//! - [`pddl`] — the core formalism: states, grounded actions, transitions;
//! - [`text`] — a PDDL reader/printer for the STRIPS+typing subset;
//! - [`validator`] — step- and plan-level validation with binary or detailed
//!   feedback and a four-way error classification;
//! - [`planner`] — a breadth-first satisficing planner used as ground truth;
//! - [`trace`] — the chain-of-thought trace format and coherence checking;
//! - [`datagen`] — canned domains, instance generators, plan corruption, and
//!   JSONL dataset assembly with deterministic splitting;
//! - [`losses`] — the reasoning/final loss metrics over emitted datasets;
//! - [`orchestrator`] — the bounded generate→validate→re-prompt loop over a
//!   pluggable model backend;
//! - [`report`] — plan-accuracy evaluation and error-breakdown tables;
//! - [`config`] — one config file for loss weights, loop and backend knobs.

pub mod config;
pub mod datagen;
pub mod losses;
pub mod orchestrator;
pub mod pddl;
pub mod planner;
pub mod report;
pub mod text;
pub mod trace;
pub mod validator;
