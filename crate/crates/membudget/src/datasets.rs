//! Dataset families for the corridor experiment and the once-through
//! selection of transitions under a model budget.
//!
//! Seven families mirror the experiment's sweep lines: `o0`..`o3` hold the
//! single optimal trajectory to the best..worst goal, `oa` holds all four,
//! `ra<X>` appends `X` random-agent transitions to `oa`, and `ronly<X>` is
//! the `X` random-agent transitions alone. Random transitions come from
//! repeated horizon-100 episodes under the uniform-random policy, goal hits
//! included.

use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use crate::core::{Action, StateId, SteppableEnv, Transition};
use crate::corridor::{CorridorEnv, CorridorLayout, LayoutError};
use crate::rng::SeededRng;

/// Which family of transitions to produce.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetKind {
    /// Optimal trajectory to the goal of the given quality rank
    /// (0 = highest reward).
    OptimalRank(usize),
    /// Optimal trajectories to every goal, nearest goal first.
    AllOptimal,
    /// `AllOptimal` followed by this many random-agent transitions.
    AllOptimalPlusRandom(u32),
    /// Only random-agent transitions, this many.
    RandomOnly(u32),
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetKind::OptimalRank(r) => write!(f, "o{r}"),
            DatasetKind::AllOptimal => write!(f, "oa"),
            DatasetKind::AllOptimalPlusRandom(x) => write!(f, "ra{x}"),
            DatasetKind::RandomOnly(x) => write!(f, "ronly{x}"),
        }
    }
}

impl FromStr for DatasetKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "oa" {
            return Ok(DatasetKind::AllOptimal);
        }
        if let Some(rank) = s.strip_prefix('o').and_then(|r| r.parse::<usize>().ok()) {
            return Ok(DatasetKind::OptimalRank(rank));
        }
        if let Some(x) = s.strip_prefix("ronly") {
            let x = x.parse::<u32>().map_err(|_| bad_kind(s))?;
            return Ok(DatasetKind::RandomOnly(x));
        }
        if let Some(x) = s.strip_prefix("ra") {
            let x = x.parse::<u32>().map_err(|_| bad_kind(s))?;
            return Ok(DatasetKind::AllOptimalPlusRandom(x));
        }
        Err(bad_kind(s))
    }
}

fn bad_kind(s: &str) -> String {
    format!("unknown dataset kind '{s}' (expected o0..o3, oa, ra<X> or ronly<X>)")
}

/// A dataset family plus the seed that reproduces its random portion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn generate(&self, layout: &CorridorLayout) -> Result<Vec<Transition>, LayoutError> {
        generate(self.kind, layout, &mut SeededRng::new(self.seed))
    }
}

/// Produce the transition stream for a dataset family.
///
/// The stream is returned in generation order; the budget-constrained agent
/// consumes it once through [`reservoir_select`].
pub fn generate(
    kind: DatasetKind,
    layout: &CorridorLayout,
    rng: &mut SeededRng,
) -> Result<Vec<Transition>, LayoutError> {
    match kind {
        DatasetKind::OptimalRank(rank) => {
            let ranked = layout.goals_by_reward_desc();
            let goal = ranked
                .get(rank)
                .ok_or_else(|| LayoutError::UnknownGoal(format!("rank {rank}")))?;
            optimal_trajectory(layout, &goal.label.clone())
        }
        DatasetKind::AllOptimal => all_optimal(layout),
        DatasetKind::AllOptimalPlusRandom(x) => {
            let mut stream = all_optimal(layout)?;
            stream.extend(random_transitions(layout, x as usize, rng));
            Ok(stream)
        }
        DatasetKind::RandomOnly(x) => Ok(random_transitions(layout, x as usize, rng)),
    }
}

fn optimal_trajectory(
    layout: &CorridorLayout,
    goal_label: &str,
) -> Result<Vec<Transition>, LayoutError> {
    let path = layout.shortest_path(layout.start, goal_label)?;
    let mut env = CorridorEnv::new(layout.clone());
    let mut state = env.reset();
    let mut out = Vec::with_capacity(path.len());
    for action in path {
        let step = env
            .step(action)
            .expect("oracle path stepped a done episode");
        out.push(Transition {
            state,
            action,
            reward: step.reward,
            next_state: step.next_state,
            terminal: step.terminal,
        });
        state = step.next_state;
    }
    Ok(out)
}

fn all_optimal(layout: &CorridorLayout) -> Result<Vec<Transition>, LayoutError> {
    let mut out = Vec::new();
    for goal in &layout.goals {
        out.extend(optimal_trajectory(layout, &goal.label)?);
    }
    Ok(out)
}

/// Collect exactly `count` transitions from uniform-random episodes.
fn random_transitions(
    layout: &CorridorLayout,
    count: usize,
    rng: &mut SeededRng,
) -> Vec<Transition> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut env = CorridorEnv::new(layout.clone());
        let mut state = env.reset();
        while !env.is_done() && out.len() < count {
            let action = Action::ALL[rng.next_index(Action::COUNT)];
            let step = env.step(action).expect("stepped a done episode");
            out.push(Transition {
                state,
                action,
                reward: step.reward,
                next_state: step.next_state,
                terminal: step.terminal,
            });
            state = step.next_state;
        }
    }
    out
}

/// Single-pass uniform selection of at most `capacity` items (Algorithm R).
///
/// Each element of the stream is examined exactly once; the result is a
/// uniform random subset of size `min(n, capacity)`. Retention order is
/// unspecified.
pub fn reservoir_select<I>(stream: I, capacity: usize, rng: &mut SeededRng) -> Vec<Transition>
where
    I: IntoIterator<Item = Transition>,
{
    let mut kept: Vec<Transition> = Vec::with_capacity(capacity.min(4096));
    let mut seen: u64 = 0;
    for item in stream {
        seen += 1;
        if kept.len() < capacity {
            kept.push(item);
        } else if capacity > 0 {
            let j = rng.next_below(seen);
            if (j as usize) < capacity {
                kept[j as usize] = item;
            }
        }
    }
    kept
}

pub const TRANSITION_CSV_HEADER: &str = "state,action,reward,next_state,terminal";

/// Write transitions as CSV: `state,action,reward,next_state,terminal`.
pub fn write_transitions_csv<W: Write>(w: &mut W, transitions: &[Transition]) -> io::Result<()> {
    writeln!(w, "{TRANSITION_CSV_HEADER}")?;
    for t in transitions {
        writeln!(
            w,
            "{},{},{},{},{}",
            t.state.0,
            t.action.index(),
            t.reward,
            t.next_state.0,
            t.terminal
        )?;
    }
    Ok(())
}

/// Read transitions from the CSV format written by [`write_transitions_csv`].
pub fn read_transitions_csv<R: BufRead>(r: R) -> io::Result<Vec<Transition>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if i == 0 {
            if line != TRANSITION_CSV_HEADER {
                return Err(io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("unexpected header '{line}'"),
                ));
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("line {}: expected 5 fields, got {}", i + 1, fields.len()),
            ));
        }
        let parse_err = |what: &str| {
            io::Error::new(
                io::ErrorKind::InvalidData,
                format!("line {}: bad {what}", i + 1),
            )
        };
        let action_index: usize = fields[1].parse().map_err(|_| parse_err("action"))?;
        out.push(Transition {
            state: StateId(fields[0].parse().map_err(|_| parse_err("state"))?),
            action: Action::from_index(action_index).ok_or_else(|| parse_err("action"))?,
            reward: fields[2].parse().map_err(|_| parse_err("reward"))?,
            next_state: StateId(fields[3].parse().map_err(|_| parse_err("next_state"))?),
            terminal: fields[4].parse().map_err(|_| parse_err("terminal"))?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn layout() -> CorridorLayout {
        CorridorLayout::default()
    }

    #[test]
    fn kind_strings_round_trip() {
        for s in ["o0", "o3", "oa", "ra1000", "ronly500"] {
            let k: DatasetKind = s.parse().unwrap();
            assert_eq!(k.to_string(), s);
        }
        assert!("r4ndom".parse::<DatasetKind>().is_err());
    }

    #[test]
    fn o0_is_the_pink_trajectory() {
        let mut rng = SeededRng::new(1);
        let stream = generate(DatasetKind::OptimalRank(0), &layout(), &mut rng).unwrap();
        assert_eq!(stream.len(), 15);
        let last = stream.last().unwrap();
        assert!(last.terminal);
        let pink = layout().goal_named("pink").cloned().unwrap();
        assert_eq!(last.next_state, layout().state_id(pink.x, pink.y));
    }

    #[test]
    fn oa_concatenates_all_four_paths() {
        let mut rng = SeededRng::new(1);
        let stream = generate(DatasetKind::AllOptimal, &layout(), &mut rng).unwrap();
        assert_eq!(stream.len(), 3 + 7 + 11 + 15);
        assert_eq!(stream.iter().filter(|t| t.terminal).count(), 4);
    }

    #[test]
    fn ronly_zero_is_empty_and_counts_are_exact() {
        let mut rng = SeededRng::new(1);
        assert!(generate(DatasetKind::RandomOnly(0), &layout(), &mut rng)
            .unwrap()
            .is_empty());
        let stream = generate(DatasetKind::RandomOnly(137), &layout(), &mut rng).unwrap();
        assert_eq!(stream.len(), 137);
        let ra = generate(DatasetKind::AllOptimalPlusRandom(50), &layout(), &mut rng).unwrap();
        assert_eq!(ra.len(), 36 + 50);
    }

    #[test]
    fn optimal_streams_replay_to_their_returns() {
        // Replaying the recorded actions in a fresh environment must
        // reproduce the recorded rewards transition by transition.
        let mut rng = SeededRng::new(1);
        for (rank, expected) in [(0, 0.65), (1, 0.49), (2, 0.33), (3, 0.17)] {
            let stream = generate(DatasetKind::OptimalRank(rank), &layout(), &mut rng).unwrap();
            let mut env = CorridorEnv::new(layout());
            env.reset();
            let mut total = crate::core::KahanSum::default();
            for t in &stream {
                let step = env.step(t.action).unwrap();
                assert_eq!(step.reward, t.reward);
                assert_eq!(step.next_state, t.next_state);
                total.add(step.reward);
            }
            assert_eq!(total.total(), expected);
        }
    }

    #[test]
    fn reservoir_keeps_everything_when_it_fits() {
        let mut rng = SeededRng::new(2);
        let stream = generate(DatasetKind::RandomOnly(10), &layout(), &mut rng).unwrap();
        let kept = reservoir_select(stream.clone(), 10, &mut rng);
        assert_eq!(kept, stream);
        assert!(reservoir_select(stream, 0, &mut rng).is_empty());
    }

    #[test]
    fn reservoir_is_single_pass() {
        let mut rng = SeededRng::new(3);
        let stream = generate(DatasetKind::RandomOnly(200), &layout(), &mut rng).unwrap();
        let mut touched = 0usize;
        let counted = stream.iter().copied().inspect(|_| touched += 1);
        let kept = reservoir_select(counted, 50, &mut rng);
        assert_eq!(touched, 200);
        assert_eq!(kept.len(), 50);
    }

    #[test]
    fn csv_round_trips() {
        let mut rng = SeededRng::new(4);
        let stream = generate(DatasetKind::AllOptimalPlusRandom(25), &layout(), &mut rng).unwrap();
        let mut buf = Vec::new();
        write_transitions_csv(&mut buf, &stream).unwrap();
        let back = read_transitions_csv(io::BufReader::new(&buf[..])).unwrap();
        assert_eq!(back, stream);
    }

    proptest! {
        #[test]
        fn reservoir_size_is_min_of_stream_and_capacity(
            n in 0usize..400,
            capacity in 0usize..400,
            seed in any::<u64>(),
        ) {
            let mut gen_rng = SeededRng::new(seed);
            let stream = generate(DatasetKind::RandomOnly(n as u32), &layout(), &mut gen_rng).unwrap();
            let mut rng = SeededRng::new(seed ^ 0xABCD);
            let kept = reservoir_select(stream, capacity, &mut rng);
            prop_assert_eq!(kept.len(), n.min(capacity));
        }
    }
}
