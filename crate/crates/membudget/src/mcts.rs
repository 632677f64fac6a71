//! Budgeted Monte Carlo tree search over a learned tabular model.
//!
//! The tree may hold at most `N_pi` nodes — each materialized node costs one
//! plan unit. Iterations keep running after the budget is exhausted, but
//! they only refine edge statistics instead of expanding. The search yields
//! a single open-loop plan, extracted once and executed without replanning;
//! when the plan runs out mid-episode the agent falls back to uniform-random
//! actions.

use std::collections::BTreeMap;

use crate::budget::{BudgetError, MemoryBudget};
use crate::core::{run_episode, Action, EpisodeResult, ScriptedPolicy, StateId, SteppableEnv};
use crate::corridor::{CorridorEnv, CorridorLayout, LayoutError};
use crate::datasets::{generate, reservoir_select, DatasetKind};
use crate::rng::{derive_seed, hash_label, SeededRng};
use crate::world_model::TabularModel;

/// Per-action statistics on a node's outgoing edge.
#[derive(Clone, Debug, Default)]
pub struct EdgeStats {
    pub visits: u32,
    pub value_sum: f64,
    /// Child node per sampled successor state. A deterministic model yields
    /// at most one entry.
    pub children: BTreeMap<StateId, usize>,
    /// True once a terminal transition was drawn through this edge.
    pub terminal: bool,
}

impl EdgeStats {
    pub fn mean_value(&self) -> f64 {
        if self.visits == 0 {
            0.0
        } else {
            self.value_sum / self.visits as f64
        }
    }
}

/// One state in the tree. Costs one unit of the plan budget.
#[derive(Clone, Debug)]
pub struct SearchNode {
    pub state: StateId,
    pub visit_count: u32,
    pub value_sum: f64,
    /// Only actions known to the model ever get an edge.
    pub edges: BTreeMap<Action, EdgeStats>,
}

impl SearchNode {
    fn new(state: StateId) -> Self {
        SearchNode {
            state,
            visit_count: 0,
            value_sum: 0.0,
            edges: BTreeMap::new(),
        }
    }
}

/// Arena-allocated search tree with a hard node budget.
#[derive(Clone, Debug)]
pub struct SearchTree {
    nodes: Vec<SearchNode>,
    node_budget: usize,
    iterations_run: u64,
}

impl SearchTree {
    fn empty(node_budget: usize) -> Self {
        SearchTree {
            nodes: Vec::new(),
            node_budget,
            iterations_run: 0,
        }
    }

    pub fn nodes_used(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_budget(&self) -> usize {
        self.node_budget
    }

    pub fn iterations_run(&self) -> u64 {
        self.iterations_run
    }

    pub fn root(&self) -> Option<&SearchNode> {
        self.nodes.first()
    }

    pub fn node(&self, id: usize) -> &SearchNode {
        &self.nodes[id]
    }
}

/// Search parameters. `uct_c` weighs exploration; the iteration budget is
/// `iteration_factor * max(1, N_pi)` so that compute scales with the only
/// resource the experiment varies.
#[derive(Clone, Copy, Debug)]
pub struct MctsParams {
    pub uct_c: f64,
    pub iteration_factor: u32,
    pub horizon: u32,
}

impl Default for MctsParams {
    fn default() -> Self {
        MctsParams {
            uct_c: std::f64::consts::SQRT_2,
            iteration_factor: 4,
            horizon: 100,
        }
    }
}

/// Build a search tree from `start` under the plan budget.
///
/// Each iteration selects by UCT down the existing tree, expands at most one
/// new node while the budget lasts, runs a uniform-random rollout through
/// the model, and backs the undiscounted return up the path. Rollouts end at
/// terminal draws, at unknown (state, action) pairs, or at the horizon.
pub fn build_tree(
    model: &TabularModel,
    start: StateId,
    budget: &MemoryBudget,
    params: &MctsParams,
    rng: &mut SeededRng,
) -> SearchTree {
    let node_budget = budget.plan_units() as usize;
    let mut tree = SearchTree::empty(node_budget);
    if node_budget == 0 {
        return tree;
    }
    tree.nodes.push(SearchNode::new(start));
    if model.known_actions(start).is_empty() {
        // Nothing the model can simulate from the root; keep the bare root.
        return tree;
    }
    let iterations = params.iteration_factor as u64 * node_budget.max(1) as u64;
    for _ in 0..iterations {
        run_iteration(&mut tree, model, params, rng);
        tree.iterations_run += 1;
        debug_assert!(tree.nodes.len() <= node_budget);
    }
    tree
}

fn run_iteration(
    tree: &mut SearchTree,
    model: &TabularModel,
    params: &MctsParams,
    rng: &mut SeededRng,
) {
    // (node id, action, reward observed on that edge)
    let mut path: Vec<(usize, Action, f64)> = Vec::new();
    let mut node_id = 0usize;
    let mut depth = 0u32;
    let mut tail_value = 0.0;

    loop {
        if depth >= params.horizon {
            break;
        }
        let state = tree.nodes[node_id].state;
        let actions = model.known_actions(state);
        if actions.is_empty() {
            break; // dead end: the model cannot simulate onward
        }
        let action = select_uct_action(&tree.nodes[node_id], &actions, params.uct_c);
        let step = model
            .sample_next(state, action, rng)
            .expect("known action must sample");
        path.push((node_id, action, step.reward));
        if step.terminal {
            tree.nodes[node_id]
                .edges
                .entry(action)
                .or_default()
                .terminal = true;
            break;
        }
        let existing = tree.nodes[node_id]
            .edges
            .get(&action)
            .and_then(|e| e.children.get(&step.next).copied());
        if let Some(child) = existing {
            node_id = child;
            depth += 1;
            continue;
        }
        // Frontier: expand if the budget allows, then roll out.
        if tree.nodes.len() < tree.node_budget {
            let child_id = tree.nodes.len();
            tree.nodes.push(SearchNode::new(step.next));
            tree.nodes[node_id]
                .edges
                .entry(action)
                .or_default()
                .children
                .insert(step.next, child_id);
        }
        tail_value = rollout(model, step.next, params.horizon - depth - 1, rng);
        break;
    }

    // Back up suffix returns. Nodes are only credited when an edge was
    // traversed out of them, which keeps visit_count equal to the sum of
    // edge visits at every node.
    let mut suffix = tail_value;
    for &(node_id, action, reward) in path.iter().rev() {
        suffix += reward;
        let node = &mut tree.nodes[node_id];
        node.visit_count += 1;
        node.value_sum += suffix;
        let edge = node.edges.entry(action).or_default();
        edge.visits += 1;
        edge.value_sum += suffix;
    }
}

/// UCT selection: unvisited actions first, then argmax of
/// `mean + c * sqrt(ln(N) / n_a)`. Ties break toward the lowest action
/// index (the iteration order of `actions`).
fn select_uct_action(node: &SearchNode, actions: &[Action], uct_c: f64) -> Action {
    for &a in actions {
        if node.edges.get(&a).map_or(0, |e| e.visits) == 0 {
            return a;
        }
    }
    let ln_total = (node.visit_count.max(1) as f64).ln();
    let mut best = actions[0];
    let mut best_score = f64::NEG_INFINITY;
    for &a in actions {
        let edge = &node.edges[&a];
        let score = edge.mean_value() + uct_c * (ln_total / edge.visits as f64).sqrt();
        if score > best_score {
            best_score = score;
            best = a;
        }
    }
    best
}

/// Uniform-random rollout through the model, over all four actions. Unknown
/// draws end the rollout with the reward banked so far.
fn rollout(model: &TabularModel, mut state: StateId, max_steps: u32, rng: &mut SeededRng) -> f64 {
    let mut total = 0.0;
    for _ in 0..max_steps {
        let action = Action::ALL[rng.next_index(Action::COUNT)];
        match model.sample_next(state, action, rng) {
            None => break,
            Some(step) => {
                total += step.reward;
                if step.terminal {
                    break;
                }
                state = step.next;
            }
        }
    }
    total
}

/// Open-loop action sequence extracted from a finished tree.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Plan {
    actions: Vec<Action>,
}

impl Plan {
    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Greedy most-visited descent from the root: follow the most-visited action
/// at each node (ties to the lowest index), stopping at the horizon, at a
/// node without visited edges, at an edge with no child, or after including
/// a terminal-labeled edge.
pub fn extract_plan(tree: &SearchTree, horizon: u32) -> Plan {
    let mut actions = Vec::new();
    let Some(mut node) = tree.root() else {
        return Plan::default();
    };
    while actions.len() < horizon as usize {
        let mut best: Option<(Action, &EdgeStats)> = None;
        for (a, edge) in &node.edges {
            if edge.visits == 0 {
                continue;
            }
            // Strict comparison keeps the lowest action index on ties.
            if best.is_none_or(|(_, b)| edge.visits > b.visits) {
                best = Some((*a, edge));
            }
        }
        let Some((action, edge)) = best else { break };
        actions.push(action);
        if edge.terminal {
            break;
        }
        // Follow the most-visited child; the lowest state id wins ties.
        let next = edge
            .children
            .iter()
            .max_by(|(sa, a_id), (sb, b_id)| {
                let va = tree.node(**a_id).visit_count;
                let vb = tree.node(**b_id).visit_count;
                va.cmp(&vb).then(sb.cmp(sa))
            })
            .map(|(_, id)| *id);
        match next {
            Some(id) => node = tree.node(id),
            None => break,
        }
    }
    Plan { actions }
}

/// Execute a plan in the real environment, padding with uniform-random
/// actions once the plan is exhausted.
pub fn execute_plan<E: SteppableEnv>(
    env: &mut E,
    plan: &Plan,
    horizon: u32,
    rng: &mut SeededRng,
) -> EpisodeResult {
    let mut policy = ScriptedPolicy::new(plan.actions.clone());
    run_episode(env, &mut policy, horizon, rng).expect("scripted policy yields valid actions")
}

/// One raw observation from an allocation sweep.
#[derive(Clone, Debug)]
pub struct SweepRow {
    pub dataset: String,
    pub n_pi: u32,
    pub seed_index: u32,
    pub result: EpisodeResult,
}

/// Aggregated cell of a sweep table.
#[derive(Clone, Debug)]
pub struct SweepCell {
    pub dataset: String,
    pub n_pi: u32,
    pub mean_return: f64,
    pub se_return: Option<f64>,
    pub seeds: u32,
}

/// Raw rows plus per-cell aggregates.
#[derive(Clone, Debug, Default)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub cells: Vec<SweepCell>,
}

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error(transparent)]
    Budget(#[from] BudgetError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
}

/// Per-task seed for a sweep cell and repetition. Hashing the dataset label
/// and the plan size (rather than grid positions) makes results independent
/// of grid ordering and of how work is scheduled.
pub fn cell_seed(master_seed: u64, dataset: DatasetKind, n_pi: u32, seed_index: u32) -> u64 {
    derive_seed(
        master_seed,
        &[
            hash_label(&dataset.to_string()),
            n_pi as u64,
            seed_index as u64,
        ],
    )
}

/// Run one (dataset, N_pi, seed) cell end to end:
/// generate -> select -> fit -> plan -> execute.
pub fn evaluate_cell(
    layout: &CorridorLayout,
    dataset: DatasetKind,
    total_memory: u32,
    n_pi: u32,
    params: &MctsParams,
    task_seed: u64,
) -> Result<EpisodeResult, SweepError> {
    let mut rng = SeededRng::new(task_seed);
    let mut data_rng = rng.fork();
    let mut select_rng = rng.fork();
    let mut tree_rng = rng.fork();
    let mut exec_rng = rng.fork();

    let budget = MemoryBudget::split(total_memory, n_pi)?;
    let stream = generate(dataset, layout, &mut data_rng)?;
    let kept = reservoir_select(stream, budget.model_units() as usize, &mut select_rng);
    let model = TabularModel::fit(&kept, &budget)?;
    let start = layout.state_id(layout.start.0, layout.start.1);
    let tree = build_tree(&model, start, &budget, params, &mut tree_rng);
    let plan = extract_plan(&tree, params.horizon);
    let mut env = CorridorEnv::new(layout.clone());
    Ok(execute_plan(&mut env, &plan, params.horizon, &mut exec_rng))
}

/// Sweep plan allocations for one dataset family over a grid of `N_pi`
/// values, averaging over seeds.
pub fn sweep_allocation(
    layout: &CorridorLayout,
    dataset: DatasetKind,
    total_memory: u32,
    plan_grid: &[u32],
    seeds: u32,
    params: &MctsParams,
    master_seed: u64,
) -> Result<SweepTable, SweepError> {
    let mut table = SweepTable::default();
    for &n_pi in plan_grid {
        let mut returns = Vec::with_capacity(seeds as usize);
        for seed_index in 0..seeds {
            let task_seed = cell_seed(master_seed, dataset, n_pi, seed_index);
            let result = evaluate_cell(layout, dataset, total_memory, n_pi, params, task_seed)?;
            returns.push(result.undiscounted_return);
            table.rows.push(SweepRow {
                dataset: dataset.to_string(),
                n_pi,
                seed_index,
                result,
            });
        }
        let (mean, se) = crate::harness::aggregate::mean_and_se(&returns);
        table.cells.push(SweepCell {
            dataset: dataset.to_string(),
            n_pi,
            mean_return: mean,
            se_return: se,
            seeds,
        });
    }
    Ok(table)
}
