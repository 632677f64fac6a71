//! Seed-parallel experiment execution.
//!
//! Work is enumerated as (cell, seed) tasks up front; per-task seeds are
//! derived by hashing, never by draw order, so the emitted rows are
//! byte-identical no matter how many worker threads run.

use rayon::prelude::*;

use crate::corridor::CorridorEnv;
use crate::datasets::DatasetKind;
use crate::jellybean::JellyBeanWorld;
use crate::mcts::{cell_seed, evaluate_cell, execute_plan, Plan};
use crate::ptdqn::{random_baseline_trace, run_continual, RewardTrace};
use crate::rng::{derive_seed, SeededRng};

use super::aggregate::{RawMctsRow, TraceRow};
use super::config::ExperimentConfig;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Runtime(e.to_string())
    }
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool, HarnessError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| HarnessError::Runtime(e.to_string()))
}

/// Run the full MCTS allocation sweep: every dataset family crossed with
/// every grid value, `seeds` repetitions each.
pub fn run_mcts_sweep(
    config: &ExperimentConfig,
    jobs: usize,
) -> Result<Vec<RawMctsRow>, HarnessError> {
    let mut tasks: Vec<(DatasetKind, u32, u32)> = Vec::new();
    for &dataset in &config.datasets {
        for &n_pi in &config.plan_grid {
            for seed in 0..config.seeds {
                tasks.push((dataset, n_pi, seed));
            }
        }
    }
    let pool = thread_pool(jobs)?;
    let rows: Result<Vec<RawMctsRow>, HarnessError> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(dataset, n_pi, seed)| {
                let task_seed = cell_seed(config.master_seed, dataset, n_pi, seed);
                let result = evaluate_cell(
                    &config.corridor,
                    dataset,
                    config.total_memory,
                    n_pi,
                    &config.mcts,
                    task_seed,
                )
                .map_err(|e| HarnessError::Validation(e.to_string()))?;
                Ok(RawMctsRow {
                    dataset: dataset.to_string(),
                    n_pi,
                    seed,
                    ret: result.undiscounted_return,
                    steps: result.steps,
                    goal: result.reached_goal,
                })
            })
            .collect()
    });
    rows
}

/// Random-walk baseline rows on the corridor (the empty-plan agent).
pub fn run_corridor_baseline(
    config: &ExperimentConfig,
    jobs: usize,
) -> Result<Vec<RawMctsRow>, HarnessError> {
    let tasks: Vec<u32> = (0..config.seeds).collect();
    let pool = thread_pool(jobs)?;
    let rows: Vec<RawMctsRow> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&seed| {
                let task_seed = derive_seed(config.master_seed, &[0xBA5E, seed as u64]);
                let mut env = CorridorEnv::new(config.corridor.clone());
                let mut rng = SeededRng::new(task_seed);
                let result =
                    execute_plan(&mut env, &Plan::default(), config.mcts.horizon, &mut rng);
                RawMctsRow {
                    dataset: "baseline".to_string(),
                    n_pi: 0,
                    seed,
                    ret: result.undiscounted_return,
                    steps: result.steps,
                    goal: result.reached_goal,
                }
            })
            .collect()
    });
    Ok(rows)
}

/// Fraction used in trace rows to mark the random-policy baseline.
pub const BASELINE_FRACTION: f64 = -1.0;

fn trace_rows(trace: &RewardTrace, seed: u32, fraction: f64, stride: u64) -> Vec<TraceRow> {
    trace
        .smoothed
        .iter()
        .enumerate()
        .filter(|(t, _)| (*t as u64).is_multiple_of(stride))
        .map(|(t, &reward_smoothed)| TraceRow {
            step: t as u64,
            seed,
            permanent_fraction: fraction,
            reward_smoothed,
        })
        .collect()
}

/// Per-task seed for a PT-DQN run. The fraction enters through its bit
/// pattern so each swept split gets an independent stream.
pub fn ptdqn_task_seed(master_seed: u64, fraction: f64, seed_index: u32) -> u64 {
    derive_seed(master_seed, &[fraction.to_bits(), seed_index as u64])
}

/// Run PT-DQN for every (fraction, seed) pair and emit smoothed trace rows.
pub fn run_ptdqn_sweep(
    config: &ExperimentConfig,
    jobs: usize,
) -> Result<Vec<TraceRow>, HarnessError> {
    let mut tasks: Vec<(f64, u32)> = Vec::new();
    for &fraction in &config.ptdqn.fractions {
        for seed in 0..config.seeds {
            tasks.push((fraction, seed));
        }
    }
    let pool = thread_pool(jobs)?;
    let per_task: Result<Vec<Vec<TraceRow>>, HarnessError> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(fraction, seed)| {
                let task_seed = ptdqn_task_seed(config.master_seed, fraction, seed);
                let world_seed = derive_seed(task_seed, &[1]);
                let agent_seed = derive_seed(task_seed, &[2]);
                let split = crate::budget::PtSplit::new(
                    config.ptdqn.hidden_widths.clone(),
                    config.ptdqn.buffer_capacity,
                    fraction,
                );
                let world = JellyBeanWorld::new(config.jellybean.clone(), world_seed);
                let run = run_continual(
                    world,
                    &split,
                    &config.ptdqn.agent,
                    config.ptdqn.total_steps,
                    agent_seed,
                )
                .map_err(|e| HarnessError::Runtime(e.to_string()))?;
                Ok(trace_rows(
                    &run.trace,
                    seed,
                    fraction,
                    config.ptdqn.trace_stride,
                ))
            })
            .collect()
    });
    Ok(per_task?.into_iter().flatten().collect())
}

/// Random-policy traces on the jelly bean world, marked with fraction -1.
pub fn run_jellybean_baseline(
    config: &ExperimentConfig,
    jobs: usize,
) -> Result<Vec<TraceRow>, HarnessError> {
    let tasks: Vec<u32> = (0..config.seeds).collect();
    let pool = thread_pool(jobs)?;
    let per_task: Vec<Vec<TraceRow>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&seed| {
                let task_seed = ptdqn_task_seed(config.master_seed, BASELINE_FRACTION, seed);
                let world_seed = derive_seed(task_seed, &[1]);
                let policy_seed = derive_seed(task_seed, &[2]);
                let world = JellyBeanWorld::new(config.jellybean.clone(), world_seed);
                let trace = random_baseline_trace(
                    world,
                    config.ptdqn.total_steps,
                    policy_seed,
                    config.ptdqn.agent.smoothing_window,
                );
                trace_rows(&trace, seed, BASELINE_FRACTION, config.ptdqn.trace_stride)
            })
            .collect()
    });
    Ok(per_task.into_iter().flatten().collect())
}
