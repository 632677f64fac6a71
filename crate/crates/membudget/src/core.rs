//! Shared MDP vocabulary and episode execution.
//!
//! Discrete states, the fixed four-action move set, experience transitions,
//! and the episode runner used by every evaluation path in the crate.

use crate::rng::SeededRng;

/// Identifier of a discrete environment state.
///
/// Finite environments document their own encoding (the corridor uses
/// row-major `x + y * width`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateId(pub u32);

/// One of the four grid moves. The numeric order (up < down < right < left)
/// is the tie-break order used everywhere a deterministic choice is needed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Up = 0,
    Down = 1,
    Right = 2,
    Left = 3,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Up, Action::Down, Action::Right, Action::Left];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Action> {
        Action::ALL.get(index).copied()
    }

    /// Grid displacement with y growing downward (row 0 is the top row).
    pub fn delta(self) -> (i64, i64) {
        match self {
            Action::Up => (0, -1),
            Action::Down => (0, 1),
            Action::Right => (1, 0),
            Action::Left => (-1, 0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Up => "up",
            Action::Down => "down",
            Action::Right => "right",
            Action::Left => "left",
        }
    }
}

/// One experience tuple. The unit of model memory: storing one of these
/// costs one unit of the model budget.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub state: StateId,
    pub action: Action,
    pub reward: f64,
    pub next_state: StateId,
    pub terminal: bool,
}

/// Outcome of a finished episode.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeResult {
    pub undiscounted_return: f64,
    pub steps: u32,
    pub reached_goal: Option<String>,
}

/// Result of one environment step.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvStep {
    pub next_state: StateId,
    pub reward: f64,
    pub terminal: bool,
    /// Label of the goal reached by this step, if any.
    pub goal: Option<String>,
}

/// A finite episodic environment that can be driven step by step.
pub trait SteppableEnv {
    /// Reset to the initial state and return its id.
    fn reset(&mut self) -> StateId;
    /// Apply one action. Fails if the episode is already over.
    fn step(&mut self, action: Action) -> Result<EnvStep, CoreError>;
    fn is_done(&self) -> bool;
    fn current_state(&self) -> StateId;
}

/// Something that emits action choices, one per step.
///
/// The action is returned as a raw index so that a misbehaving policy can be
/// detected: `run_episode` rejects indices outside `[0, 4)`.
pub trait ActionSource {
    fn next_action(&mut self, state: StateId, rng: &mut SeededRng) -> usize;
}

/// Uniform-random policy over the four actions.
pub struct RandomPolicy;

impl ActionSource for RandomPolicy {
    fn next_action(&mut self, _state: StateId, rng: &mut SeededRng) -> usize {
        rng.next_index(Action::COUNT)
    }
}

/// Fixed action script, falling back to uniform-random draws once exhausted.
pub struct ScriptedPolicy {
    script: Vec<Action>,
    cursor: usize,
}

impl ScriptedPolicy {
    pub fn new(script: Vec<Action>) -> Self {
        ScriptedPolicy { script, cursor: 0 }
    }
}

impl ActionSource for ScriptedPolicy {
    fn next_action(&mut self, _state: StateId, rng: &mut SeededRng) -> usize {
        match self.script.get(self.cursor) {
            Some(a) => {
                self.cursor += 1;
                a.index()
            }
            None => rng.next_index(Action::COUNT),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CoreError {
    #[error("policy produced out-of-range action index {index}")]
    InvalidActionIndex { index: usize },
    #[error("step called on a finished episode")]
    EpisodeAlreadyDone,
    #[error("horizon must be at least 1")]
    ZeroHorizon,
}

/// Neumaier compensated accumulator.
///
/// Step penalties are repeated many times per episode; compensated summation
/// keeps century-long penalty chains at their exact decimal totals (a naive
/// f64 sum of one hundred -0.01 terms drifts off -1.0).
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Run one episode: step `env` under `policy` until a terminal transition or
/// `horizon` steps, summing rewards undiscounted.
pub fn run_episode<E: SteppableEnv, P: ActionSource>(
    env: &mut E,
    policy: &mut P,
    horizon: u32,
    rng: &mut SeededRng,
) -> Result<EpisodeResult, CoreError> {
    if horizon == 0 {
        return Err(CoreError::ZeroHorizon);
    }
    let mut state = env.reset();
    let mut total = KahanSum::default();
    let mut steps = 0u32;
    let mut reached_goal = None;
    while steps < horizon && !env.is_done() {
        let index = policy.next_action(state, rng);
        let action = Action::from_index(index).ok_or(CoreError::InvalidActionIndex { index })?;
        let outcome = env.step(action)?;
        total.add(outcome.reward);
        steps += 1;
        state = outcome.next_state;
        if outcome.terminal {
            reached_goal = outcome.goal;
            break;
        }
    }
    Ok(EpisodeResult {
        undiscounted_return: total.total(),
        steps,
        reached_goal,
    })
}

/// Discounted return of a reward sequence: sum of `gamma^t * r_t`.
/// An empty sequence yields 0.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&gamma), "gamma must lie in [0, 1]");
    let mut total = KahanSum::default();
    let mut weight = 1.0;
    for &r in rewards {
        total.add(weight * r);
        weight *= gamma;
    }
    total.total()
}
