//! Deterministic corridor gridworld with four goals of increasing value at
//! increasing distance from the start.
//!
//! The default layout is a 16x2 grid. Row 0 is the corridor; the goals sit
//! in row 1 at x = 2, 6, 10, 14, giving shortest-path distances 3, 7, 11
//! and 15 from the top-left start cell. Rewards are 0.2, 0.4, 0.6 and 0.8,
//! each step costs 0.01, and episodes end on a goal or after 100 steps, so
//! the best achievable return is 0.65 (pink) and the worst is -1.0.
//!
//! State ids use the documented row-major encoding `x + y * width`.

use std::collections::VecDeque;

use crate::core::{Action, CoreError, EnvStep, StateId, SteppableEnv};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum LayoutError {
    #[error("grid must be at least 1x1")]
    EmptyGrid,
    #[error("cell ({x}, {y}) lies outside the {width}x{height} grid")]
    CellOutOfBounds {
        x: u32,
        y: u32,
        width: u32,
        height: u32,
    },
    #[error("two goals share the cell ({x}, {y})")]
    DuplicateGoalCell { x: u32, y: u32 },
    #[error("the start cell may not be a goal")]
    StartOnGoal,
    #[error("no goal named '{0}'")]
    UnknownGoal(String),
    #[error("goal '{0}' is unreachable from ({1}, {2})")]
    UnreachableGoal(String, u32, u32),
    #[error("goal distances must be strictly increasing in listed order")]
    NonIncreasingDistances,
    #[error("horizon must be at least 1")]
    ZeroHorizon,
}

/// A labeled goal cell and its reward.
#[derive(Clone, Debug, PartialEq)]
pub struct GoalSpec {
    pub label: String,
    pub x: u32,
    pub y: u32,
    pub reward: f64,
}

/// Static description of a corridor map.
#[derive(Clone, Debug, PartialEq)]
pub struct CorridorLayout {
    pub width: u32,
    pub height: u32,
    pub start: (u32, u32),
    pub goals: Vec<GoalSpec>,
    pub step_penalty: f64,
    pub horizon: u32,
}

impl Default for CorridorLayout {
    fn default() -> Self {
        let goal = |label: &str, x: u32, reward: f64| GoalSpec {
            label: label.to_string(),
            x,
            y: 1,
            reward,
        };
        CorridorLayout {
            width: 16,
            height: 2,
            start: (0, 0),
            goals: vec![
                goal("orange", 2, 0.2),
                goal("green", 6, 0.4),
                goal("blue", 10, 0.6),
                goal("pink", 14, 0.8),
            ],
            step_penalty: -0.01,
            horizon: 100,
        }
    }
}

impl CorridorLayout {
    pub fn state_count(&self) -> u32 {
        self.width * self.height
    }

    /// Row-major encoding `x + y * width`.
    pub fn state_id(&self, x: u32, y: u32) -> StateId {
        StateId(x + y * self.width)
    }

    pub fn cell_of(&self, id: StateId) -> (u32, u32) {
        (id.0 % self.width, id.0 / self.width)
    }

    pub fn goal_at(&self, x: u32, y: u32) -> Option<&GoalSpec> {
        self.goals.iter().find(|g| g.x == x && g.y == y)
    }

    pub fn goal_named(&self, label: &str) -> Option<&GoalSpec> {
        self.goals.iter().find(|g| g.label == label)
    }

    /// Goals ordered best-first by reward. Rank 0 is the highest-reward goal.
    pub fn goals_by_reward_desc(&self) -> Vec<&GoalSpec> {
        let mut gs: Vec<&GoalSpec> = self.goals.iter().collect();
        gs.sort_by(|a, b| b.reward.partial_cmp(&a.reward).unwrap());
        gs
    }

    fn in_bounds(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as u32) < self.width && (y as u32) < self.height
    }

    /// Apply an action with wall bounce: off-grid moves leave the cell
    /// unchanged (the step penalty still applies).
    pub fn move_from(&self, x: u32, y: u32, action: Action) -> (u32, u32) {
        let (dx, dy) = action.delta();
        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
        if self.in_bounds(nx, ny) {
            (nx as u32, ny as u32)
        } else {
            (x, y)
        }
    }

    pub fn validate(&self) -> Result<(), LayoutError> {
        if self.width == 0 || self.height == 0 {
            return Err(LayoutError::EmptyGrid);
        }
        if self.horizon == 0 {
            return Err(LayoutError::ZeroHorizon);
        }
        let check = |x: u32, y: u32| {
            if x < self.width && y < self.height {
                Ok(())
            } else {
                Err(LayoutError::CellOutOfBounds {
                    x,
                    y,
                    width: self.width,
                    height: self.height,
                })
            }
        };
        check(self.start.0, self.start.1)?;
        for (i, g) in self.goals.iter().enumerate() {
            check(g.x, g.y)?;
            if self.goals[..i].iter().any(|o| o.x == g.x && o.y == g.y) {
                return Err(LayoutError::DuplicateGoalCell { x: g.x, y: g.y });
            }
            if (g.x, g.y) == self.start {
                return Err(LayoutError::StartOnGoal);
            }
        }
        let mut last = 0usize;
        for (i, g) in self.goals.iter().enumerate() {
            let d = self.shortest_path(self.start, &g.label)?.len();
            if i > 0 && d <= last {
                return Err(LayoutError::NonIncreasingDistances);
            }
            last = d;
        }
        Ok(())
    }

    /// Shortest action sequence from `from` to the named goal, by
    /// breadth-first search. Other goal cells are treated as blocked since
    /// entering one would end the episode early. Ties break by action index
    /// order (up < down < right < left).
    pub fn shortest_path(
        &self,
        from: (u32, u32),
        goal_label: &str,
    ) -> Result<Vec<Action>, LayoutError> {
        let target = self
            .goal_named(goal_label)
            .ok_or_else(|| LayoutError::UnknownGoal(goal_label.to_string()))?;
        let target_cell = (target.x, target.y);
        if from == target_cell {
            return Ok(Vec::new());
        }
        let idx = |(x, y): (u32, u32)| (x + y * self.width) as usize;
        let mut parent: Vec<Option<(u32, u32, Action)>> =
            vec![None; (self.width * self.height) as usize];
        let mut visited = vec![false; (self.width * self.height) as usize];
        visited[idx(from)] = true;
        let mut queue = VecDeque::new();
        queue.push_back(from);
        while let Some((x, y)) = queue.pop_front() {
            for action in Action::ALL {
                let next = self.move_from(x, y, action);
                if next == (x, y) || visited[idx(next)] {
                    continue;
                }
                if next != target_cell && self.goal_at(next.0, next.1).is_some() {
                    continue; // entering another goal would terminate the episode
                }
                visited[idx(next)] = true;
                parent[idx(next)] = Some((x, y, action));
                if next == target_cell {
                    let mut path = Vec::new();
                    let mut cur = next;
                    while cur != from {
                        let (px, py, a) = parent[idx(cur)].unwrap();
                        path.push(a);
                        cur = (px, py);
                    }
                    path.reverse();
                    return Ok(path);
                }
                queue.push_back(next);
            }
        }
        Err(LayoutError::UnreachableGoal(
            goal_label.to_string(),
            from.0,
            from.1,
        ))
    }
}

/// Mutable episode state over a [`CorridorLayout`].
#[derive(Clone, Debug)]
pub struct CorridorEnv {
    layout: CorridorLayout,
    agent: (u32, u32),
    steps_elapsed: u32,
    done: bool,
}

impl CorridorEnv {
    pub fn new(layout: CorridorLayout) -> Self {
        let start = layout.start;
        CorridorEnv {
            layout,
            agent: start,
            steps_elapsed: 0,
            done: false,
        }
    }

    pub fn layout(&self) -> &CorridorLayout {
        &self.layout
    }

    pub fn agent_cell(&self) -> (u32, u32) {
        self.agent
    }

    pub fn steps_elapsed(&self) -> u32 {
        self.steps_elapsed
    }
}

impl SteppableEnv for CorridorEnv {
    fn reset(&mut self) -> StateId {
        self.agent = self.layout.start;
        self.steps_elapsed = 0;
        self.done = false;
        self.layout.state_id(self.agent.0, self.agent.1)
    }

    fn step(&mut self, action: Action) -> Result<EnvStep, CoreError> {
        if self.done {
            return Err(CoreError::EpisodeAlreadyDone);
        }
        let next = self.layout.move_from(self.agent.0, self.agent.1, action);
        self.agent = next;
        self.steps_elapsed += 1;
        let mut reward = self.layout.step_penalty;
        let mut terminal = false;
        let mut goal = None;
        if let Some(g) = self.layout.goal_at(next.0, next.1) {
            reward += g.reward;
            terminal = true;
            goal = Some(g.label.clone());
            self.done = true;
        } else if self.steps_elapsed >= self.layout.horizon {
            self.done = true;
        }
        Ok(EnvStep {
            next_state: self.layout.state_id(next.0, next.1),
            reward,
            terminal,
            goal,
        })
    }

    fn is_done(&self) -> bool {
        self.done
    }

    fn current_state(&self) -> StateId {
        self.layout.state_id(self.agent.0, self.agent.1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::{run_episode, RandomPolicy, ScriptedPolicy};
    use crate::rng::SeededRng;

    #[test]
    fn default_layout_validates() {
        CorridorLayout::default().validate().unwrap();
    }

    #[test]
    fn reset_puts_agent_at_top_left() {
        let mut env = CorridorEnv::new(CorridorLayout::default());
        assert_eq!(env.reset(), StateId(0));
        assert_eq!(env.agent_cell(), (0, 0));
        let again = env.reset();
        assert_eq!(again, StateId(0));
    }

    #[test]
    fn single_step_costs_a_penalty() {
        let mut env = CorridorEnv::new(CorridorLayout::default());
        env.reset();
        let out = env.step(Action::Right).unwrap();
        assert_eq!(out.reward, -0.01);
        assert_eq!(out.next_state, StateId(1));
        assert!(!out.terminal);
    }

    #[test]
    fn wall_bounce_keeps_position_and_charges() {
        let mut env = CorridorEnv::new(CorridorLayout::default());
        env.reset();
        let out = env.step(Action::Up).unwrap();
        assert_eq!(out.next_state, StateId(0));
        assert_eq!(out.reward, -0.01);
    }

    #[test]
    fn landing_on_orange_terminates_with_combined_reward() {
        let layout = CorridorLayout::default();
        let mut env = CorridorEnv::new(layout.clone());
        env.reset();
        // Walk to (1,1), one step left of orange at (2,1).
        env.step(Action::Down).unwrap();
        env.step(Action::Right).unwrap();
        let out = env.step(Action::Right).unwrap();
        assert!(out.terminal);
        assert_eq!(out.reward, 0.19);
        assert_eq!(out.goal.as_deref(), Some("orange"));
        assert!(env.is_done());
        assert_eq!(env.step(Action::Right), Err(CoreError::EpisodeAlreadyDone));
    }

    #[test]
    fn shortest_path_lengths_match_the_geometry() {
        let layout = CorridorLayout::default();
        assert_eq!(layout.shortest_path((0, 0), "orange").unwrap().len(), 3);
        assert_eq!(layout.shortest_path((0, 0), "green").unwrap().len(), 7);
        assert_eq!(layout.shortest_path((0, 0), "blue").unwrap().len(), 11);
        assert_eq!(layout.shortest_path((0, 0), "pink").unwrap().len(), 15);
        assert_eq!(layout.shortest_path((2, 1), "orange").unwrap().len(), 0);
    }

    #[test]
    fn shortest_path_avoids_other_goals() {
        let layout = CorridorLayout::default();
        let mut env = CorridorEnv::new(layout.clone());
        for goal in ["orange", "green", "blue", "pink"] {
            let path = layout.shortest_path((0, 0), goal).unwrap();
            env.reset();
            let mut reached = None;
            for a in &path {
                let out = env.step(*a).unwrap();
                if out.terminal {
                    reached = out.goal;
                }
            }
            assert_eq!(reached.as_deref(), Some(goal));
        }
    }

    #[test]
    fn oracle_returns_are_exact() {
        let layout = CorridorLayout::default();
        let expected = [
            ("orange", 0.17, 3),
            ("green", 0.33, 7),
            ("blue", 0.49, 11),
            ("pink", 0.65, 15),
        ];
        for (goal, ret, steps) in expected {
            let path = layout.shortest_path((0, 0), goal).unwrap();
            let mut env = CorridorEnv::new(layout.clone());
            let mut policy = ScriptedPolicy::new(path);
            let mut rng = SeededRng::new(0);
            let result = run_episode(&mut env, &mut policy, 100, &mut rng).unwrap();
            assert_eq!(result.undiscounted_return, ret);
            assert_eq!(result.steps, steps);
            assert_eq!(result.reached_goal.as_deref(), Some(goal));
        }
    }

    #[test]
    fn goalless_full_episode_scores_exactly_minus_one() {
        // A policy that only bumps the top wall never reaches a goal.
        let layout = CorridorLayout::default();
        let mut env = CorridorEnv::new(layout);
        let mut policy = ScriptedPolicy::new(vec![Action::Up; 100]);
        let mut rng = SeededRng::new(0);
        let result = run_episode(&mut env, &mut policy, 100, &mut rng).unwrap();
        assert_eq!(result.undiscounted_return, -1.0);
        assert_eq!(result.steps, 100);
        assert_eq!(result.reached_goal, None);
    }

    #[test]
    fn one_step_horizon_yields_single_penalty() {
        let layout = CorridorLayout::default();
        let mut env = CorridorEnv::new(layout);
        let mut policy = ScriptedPolicy::new(vec![Action::Right]);
        let mut rng = SeededRng::new(0);
        let result = run_episode(&mut env, &mut policy, 1, &mut rng).unwrap();
        assert_eq!(result.undiscounted_return, -0.01);
        assert_eq!(result.steps, 1);
    }

    #[test]
    fn random_episode_returns_stay_in_bounds() {
        let layout = CorridorLayout::default();
        for seed in 0..50 {
            let mut env = CorridorEnv::new(layout.clone());
            let mut rng = SeededRng::new(seed);
            let result = run_episode(&mut env, &mut RandomPolicy, 100, &mut rng).unwrap();
            assert!(result.undiscounted_return >= -1.0);
            assert!(result.undiscounted_return <= 0.65);
            assert!(result.steps >= 1 && result.steps <= 100);
        }
    }

    #[test]
    fn farther_goals_pay_more() {
        let layout = CorridorLayout::default();
        let mut prev = f64::NEG_INFINITY;
        for g in ["orange", "green", "blue", "pink"] {
            let path = layout.shortest_path((0, 0), g).unwrap();
            let mut env = CorridorEnv::new(layout.clone());
            let mut policy = ScriptedPolicy::new(path);
            let mut rng = SeededRng::new(0);
            let r = run_episode(&mut env, &mut policy, 100, &mut rng)
                .unwrap()
                .undiscounted_return;
            assert!(r > prev);
            prev = r;
        }
    }

    #[test]
    fn invalid_layouts_are_rejected() {
        let mut layout = CorridorLayout::default();
        layout.goals[0].x = 99;
        assert!(matches!(
            layout.validate(),
            Err(LayoutError::CellOutOfBounds { .. })
        ));

        let mut layout = CorridorLayout::default();
        layout.goals[1].x = layout.goals[0].x;
        layout.goals[1].y = layout.goals[0].y;
        assert_eq!(
            layout.validate(),
            Err(LayoutError::DuplicateGoalCell { x: 2, y: 1 })
        );

        let layout = CorridorLayout {
            start: (2, 1),
            ..CorridorLayout::default()
        };
        assert_eq!(layout.validate(), Err(LayoutError::StartOnGoal));

        let mut layout = CorridorLayout::default();
        layout.goals.swap(0, 3);
        assert_eq!(layout.validate(), Err(LayoutError::NonIncreasingDistances));
    }
}
