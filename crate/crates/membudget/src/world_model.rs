//! Count-based maximum-likelihood world model over stored transitions.
//!
//! `p_hat(s'|s,a)` is the observed frequency among the transitions the agent
//! kept; rewards are per-(s,a,s') means. Unobserved pairs stay unknown — no
//! smoothing and no optimistic prior — so a planner can only move through
//! experience the agent actually paid memory for.

use std::collections::BTreeMap;
use std::io::{self, Write};

use crate::budget::{BudgetError, MemoryBudget};
use crate::core::{Action, StateId, Transition};
use crate::rng::SeededRng;

#[derive(Clone, Debug, Default)]
struct SuccessorStats {
    count: u32,
    reward_sum: f64,
    terminal: bool,
}

#[derive(Clone, Debug, Default)]
struct ActionModel {
    total: u32,
    successors: BTreeMap<StateId, SuccessorStats>,
}

/// Result of sampling a known (state, action) pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KnownStep {
    pub next: StateId,
    pub reward: f64,
    pub terminal: bool,
}

/// Tabular MLE of dynamics and rewards.
///
/// All maps are ordered so that iteration (and therefore sampling, given a
/// seed) is deterministic.
#[derive(Clone, Debug, Default)]
pub struct TabularModel {
    table: BTreeMap<StateId, BTreeMap<Action, ActionModel>>,
    stored_transitions: usize,
}

impl TabularModel {
    /// Build the model from stored transitions, enforcing the model budget.
    pub fn fit(transitions: &[Transition], budget: &MemoryBudget) -> Result<Self, BudgetError> {
        if transitions.len() > budget.model_units() as usize {
            return Err(BudgetError::ModelOverCapacity {
                stored: transitions.len(),
                budget: budget.model_units(),
            });
        }
        let mut model = TabularModel {
            table: BTreeMap::new(),
            stored_transitions: transitions.len(),
        };
        for t in transitions {
            let am = model
                .table
                .entry(t.state)
                .or_default()
                .entry(t.action)
                .or_default();
            am.total += 1;
            let succ = am.successors.entry(t.next_state).or_default();
            succ.count += 1;
            succ.reward_sum += t.reward;
            succ.terminal |= t.terminal;
        }
        Ok(model)
    }

    pub fn stored_transitions(&self) -> usize {
        self.stored_transitions
    }

    pub fn is_known(&self, state: StateId, action: Action) -> bool {
        self.table
            .get(&state)
            .is_some_and(|actions| actions.contains_key(&action))
    }

    /// Actions with at least one observation at `state`, in index order.
    pub fn known_actions(&self, state: StateId) -> Vec<Action> {
        self.table
            .get(&state)
            .map(|actions| actions.keys().copied().collect())
            .unwrap_or_default()
    }

    /// `p_hat(next | state, action)`: observed frequency, 0 if unobserved.
    pub fn probability(&self, state: StateId, action: Action, next: StateId) -> f64 {
        let Some(am) = self.table.get(&state).and_then(|a| a.get(&action)) else {
            return 0.0;
        };
        match am.successors.get(&next) {
            Some(s) => s.count as f64 / am.total as f64,
            None => 0.0,
        }
    }

    /// Raw observation count for a (state, action, next) triple.
    pub fn count(&self, state: StateId, action: Action, next: StateId) -> u32 {
        self.table
            .get(&state)
            .and_then(|a| a.get(&action))
            .and_then(|am| am.successors.get(&next))
            .map_or(0, |s| s.count)
    }

    /// Mean observed reward for a triple, if it was ever observed.
    pub fn mean_reward(&self, state: StateId, action: Action, next: StateId) -> Option<f64> {
        self.table
            .get(&state)
            .and_then(|a| a.get(&action))
            .and_then(|am| am.successors.get(&next))
            .map(|s| s.reward_sum / s.count as f64)
    }

    /// Draw a successor of (state, action) proportionally to `p_hat`,
    /// returning `None` when the pair was never observed.
    pub fn sample_next(
        &self,
        state: StateId,
        action: Action,
        rng: &mut SeededRng,
    ) -> Option<KnownStep> {
        let am = self.table.get(&state)?.get(&action)?;
        let mut draw = rng.next_below(am.total as u64) as u32;
        for (next, stats) in &am.successors {
            if draw < stats.count {
                return Some(KnownStep {
                    next: *next,
                    reward: stats.reward_sum / stats.count as f64,
                    terminal: stats.terminal,
                });
            }
            draw -= stats.count;
        }
        unreachable!("successor counts sum to the pair total")
    }

    /// Dump as CSV: `state,action,next_state,count,mean_reward,terminal`.
    pub fn dump_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "state,action,next_state,count,mean_reward,terminal")?;
        for (state, actions) in &self.table {
            for (action, am) in actions {
                for (next, stats) in &am.successors {
                    writeln!(
                        w,
                        "{},{},{},{},{},{}",
                        state.0,
                        action.index(),
                        next.0,
                        stats.count,
                        stats.reward_sum / stats.count as f64,
                        stats.terminal
                    )?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corridor::CorridorLayout;
    use crate::datasets::{generate, DatasetKind};

    fn budget(model_units: u32) -> MemoryBudget {
        MemoryBudget::split(model_units, 0).unwrap()
    }

    fn t(s: u32, a: Action, r: f64, n: u32, terminal: bool) -> Transition {
        Transition {
            state: StateId(s),
            action: a,
            reward: r,
            next_state: StateId(n),
            terminal,
        }
    }

    #[test]
    fn single_observation_is_certain() {
        let model =
            TabularModel::fit(&[t(0, Action::Right, -0.01, 1, false)], &budget(10)).unwrap();
        assert_eq!(
            model.probability(StateId(0), Action::Right, StateId(1)),
            1.0
        );
        assert_eq!(
            model.mean_reward(StateId(0), Action::Right, StateId(1)),
            Some(-0.01)
        );
    }

    #[test]
    fn split_observations_split_probability() {
        let data = [
            t(0, Action::Right, 0.0, 1, false),
            t(0, Action::Right, 0.0, 2, false),
        ];
        let model = TabularModel::fit(&data, &budget(10)).unwrap();
        assert_eq!(
            model.probability(StateId(0), Action::Right, StateId(1)),
            0.5
        );
        assert_eq!(
            model.probability(StateId(0), Action::Right, StateId(2)),
            0.5
        );
    }

    #[test]
    fn empty_input_knows_nothing() {
        let model = TabularModel::fit(&[], &budget(10)).unwrap();
        assert!(model.known_actions(StateId(0)).is_empty());
        assert_eq!(model.stored_transitions(), 0);
        let mut rng = SeededRng::new(0);
        assert_eq!(model.sample_next(StateId(0), Action::Up, &mut rng), None);
    }

    #[test]
    fn over_budget_fit_is_rejected() {
        let data = vec![t(0, Action::Right, 0.0, 1, false); 3];
        let err = TabularModel::fit(&data, &budget(2)).unwrap_err();
        assert_eq!(
            err,
            BudgetError::ModelOverCapacity {
                stored: 3,
                budget: 2
            }
        );
    }

    #[test]
    fn deterministic_pair_always_yields_its_successor() {
        let model = TabularModel::fit(&[t(4, Action::Down, 0.19, 5, true)], &budget(10)).unwrap();
        let mut rng = SeededRng::new(9);
        for _ in 0..100 {
            let step = model
                .sample_next(StateId(4), Action::Down, &mut rng)
                .unwrap();
            assert_eq!(step.next, StateId(5));
            assert_eq!(step.reward, 0.19);
            assert!(step.terminal);
        }
    }

    #[test]
    fn sampling_matches_mle_frequencies() {
        let data = [
            t(0, Action::Right, 0.0, 1, false),
            t(0, Action::Right, 0.0, 2, false),
        ];
        let model = TabularModel::fit(&data, &budget(10)).unwrap();
        let mut rng = SeededRng::new(77);
        let mut hits = 0u32;
        let draws = 10_000;
        for _ in 0..draws {
            if model
                .sample_next(StateId(0), Action::Right, &mut rng)
                .unwrap()
                .next
                == StateId(1)
            {
                hits += 1;
            }
        }
        let freq = hits as f64 / draws as f64;
        assert!((freq - 0.5).abs() < 0.02, "empirical split {freq}");
    }

    #[test]
    fn known_actions_on_a_single_trajectory() {
        let layout = CorridorLayout::default();
        let mut rng = SeededRng::new(1);
        let stream = generate(DatasetKind::OptimalRank(0), &layout, &mut rng).unwrap();
        let model = TabularModel::fit(&stream, &budget(500)).unwrap();
        // Each state on the single pink path has exactly the one recorded action.
        for t in &stream {
            assert_eq!(model.known_actions(t.state), vec![t.action]);
        }
        assert!(model.known_actions(StateId(31)).is_empty());
    }

    #[test]
    fn known_actions_union_over_crossing_trajectories() {
        let layout = CorridorLayout::default();
        let mut rng = SeededRng::new(1);
        let stream = generate(DatasetKind::AllOptimal, &layout, &mut rng).unwrap();
        let model = TabularModel::fit(&stream, &budget(500)).unwrap();
        // Brute-force scan: recorded actions per state must match the model.
        let mut expected: BTreeMap<StateId, Vec<Action>> = BTreeMap::new();
        for t in &stream {
            let entry = expected.entry(t.state).or_default();
            if !entry.contains(&t.action) {
                entry.push(t.action);
            }
        }
        for (state, mut actions) in expected {
            actions.sort();
            assert_eq!(model.known_actions(state), actions);
        }
    }

    #[test]
    fn dump_csv_has_one_row_per_triple() {
        let data = [
            t(0, Action::Right, 0.0, 1, false),
            t(0, Action::Right, 0.0, 2, false),
            t(1, Action::Down, 0.5, 3, true),
        ];
        let model = TabularModel::fit(&data, &budget(10)).unwrap();
        let mut buf = Vec::new();
        model.dump_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.contains("1,1,3,1,0.5,true"));
    }
}
