//! Memory-budgeted reinforcement-learning testbed.
//!
//! An agent gets `N` abstract units of memory and must divide them between
//! its internal structures. Two experiments probe the trade-off:
//!
//! * **Budgeted planning** — a tabular MLE world model (one unit per stored
//!   transition) feeds an MCTS planner (one unit per tree node) on a
//!   corridor gridworld; the split between model and plan is swept.
//! * **Permanent/transient value learning** — a DQN whose Q-network is split
//!   into a permanent and a transient part (one unit per hidden neuron, one
//!   per replay-buffer slot) learns a continually reward-swapping infinite
//!   gridworld; the split fraction is swept.
//!
//! The `harness` module ties everything into a CLI with seeded, byte-stable
//! experiment sweeps, CSV output and SVG plots.

pub mod budget;
pub mod core;
pub mod corridor;
pub mod datasets;
pub mod harness;
pub mod jellybean;
pub mod mcts;
pub mod ptdqn;
pub mod rng;
pub mod world_model;
