//! Experiment configuration: a flat `key = value` text format with
//! `[section]` headers and `#` comments.
//!
//! Sections and keys (all optional; defaults in parentheses):
//!
//! ```text
//! [experiment]
//! kind = mcts-sweep | ptdqn-sweep | baseline   (inferred from the subcommand)
//! datasets = oa,o0,ra1000        # dataset families for MCTS sweeps (oa)
//! seeds = 20                     # repetitions per cell (20)
//! master_seed = 42               # overridden by MEMBUDGET_SEED (42)
//! out = out                      # output directory (out)
//!
//! [budget]
//! total = 500                    # total memory units N (500)
//! plan_grid = 0,10,...,500       # swept N_pi values
//!
//! [mcts]
//! uct_c = 1.414...               # exploration constant (sqrt 2)
//! iteration_factor = 4           # iterations per plan unit (4)
//! horizon = 100                  # plan/episode horizon (100)
//!
//! [corridor]
//! width = 16
//! height = 2
//! start = 0,0
//! penalty = -0.01
//! horizon = 100
//! goals = orange:2,1:0.2; green:6,1:0.4; blue:10,1:0.6; pink:14,1:0.8
//!
//! [jellybean]
//! green_density / cluster_center_density / cluster_radius /
//! cluster_item_count / chunk_size / swap_period / green_reward /
//! red_reward / blue_reward
//!
//! [ptdqn]
//! hidden = 128,256,64
//! buffer_capacity = 52
//! fractions = 0,0.1,0.5
//! total_steps = 20000
//! trace_stride = 1
//! gamma / lr_transient / lr_permanent / epsilon_start / epsilon_end /
//! epsilon_decay_steps / batch_size / consolidation_period /
//! consolidation_steps / transient_decay / smoothing_window
//! ```

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::corridor::{CorridorLayout, GoalSpec};
use crate::datasets::DatasetKind;
use crate::jellybean::WorldConfig;
use crate::mcts::MctsParams;
use crate::ptdqn::AgentConfig;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("[{section}] {key}: {message}")]
    BadValue {
        section: String,
        key: String,
        message: String,
    },
    #[error("unknown key [{section}] {key}")]
    UnknownKey { section: String, key: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    MctsSweep,
    PtdqnSweep,
    Baseline,
}

impl ExperimentKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mcts-sweep" => Some(ExperimentKind::MctsSweep),
            "ptdqn-sweep" => Some(ExperimentKind::PtdqnSweep),
            "baseline" => Some(ExperimentKind::Baseline),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::MctsSweep => "mcts-sweep",
            ExperimentKind::PtdqnSweep => "ptdqn-sweep",
            ExperimentKind::Baseline => "baseline",
        }
    }
}

/// PT-DQN experiment block.
#[derive(Clone, Debug)]
pub struct PtdqnExperiment {
    pub hidden_widths: Vec<u32>,
    pub buffer_capacity: u32,
    pub fractions: Vec<f64>,
    pub total_steps: u64,
    /// Keep every n-th step in the trace CSV.
    pub trace_stride: u64,
    pub agent: AgentConfig,
}

impl Default for PtdqnExperiment {
    fn default() -> Self {
        PtdqnExperiment {
            hidden_widths: vec![128, 256, 64],
            buffer_capacity: 52,
            fractions: vec![0.0, 0.1, 0.5],
            total_steps: 20_000,
            trace_stride: 1,
            agent: AgentConfig::default(),
        }
    }
}

/// Everything a run needs, resolved from defaults, file and CLI overrides.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub kind: Option<ExperimentKind>,
    pub datasets: Vec<DatasetKind>,
    pub seeds: u32,
    pub master_seed: u64,
    pub out_dir: PathBuf,
    pub total_memory: u32,
    pub plan_grid: Vec<u32>,
    pub mcts: MctsParams,
    pub corridor: CorridorLayout,
    pub jellybean: WorldConfig,
    pub ptdqn: PtdqnExperiment,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            kind: None,
            datasets: vec![DatasetKind::AllOptimal],
            seeds: 20,
            master_seed: 42,
            out_dir: PathBuf::from("out"),
            total_memory: 500,
            plan_grid: vec![0, 10, 50, 100, 150, 250, 350, 450, 480, 500],
            mcts: MctsParams::default(),
            corridor: CorridorLayout::default(),
            jellybean: WorldConfig::default(),
            ptdqn: PtdqnExperiment::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let raw = parse_raw(text)?;
        let mut config = ExperimentConfig::default();
        for ((section, key), value) in &raw {
            apply_key(&mut config, section, key, value)?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.seeds == 0 {
            return Err(ConfigError::Invalid("seeds must be at least 1".into()));
        }
        for &n_pi in &self.plan_grid {
            if n_pi > self.total_memory {
                return Err(ConfigError::Invalid(format!(
                    "plan grid value {n_pi} exceeds the total budget {}",
                    self.total_memory
                )));
            }
        }
        for &f in &self.ptdqn.fractions {
            if !(0.0..=1.0).contains(&f) {
                return Err(ConfigError::Invalid(format!(
                    "permanent fraction {f} outside [0, 1]"
                )));
            }
        }
        if self.ptdqn.trace_stride == 0 {
            return Err(ConfigError::Invalid(
                "trace_stride must be at least 1".into(),
            ));
        }
        self.corridor
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }
}

type RawConfig = BTreeMap<(String, String), String>;

fn parse_raw(text: &str) -> Result<RawConfig, ConfigError> {
    let mut raw = RawConfig::new();
    let mut section = String::new();
    for (i, line) in text.lines().enumerate() {
        let line = match line.find('#') {
            Some(pos) => &line[..pos],
            None => line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or(ConfigError::Syntax {
                line: i + 1,
                message: "unterminated section header".into(),
            })?;
            section = name.trim().to_string();
            continue;
        }
        let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax {
            line: i + 1,
            message: "expected `key = value`".into(),
        })?;
        raw.insert(
            (section.clone(), key.trim().to_string()),
            value.trim().to_string(),
        );
    }
    Ok(raw)
}

fn apply_key(
    config: &mut ExperimentConfig,
    section: &str,
    key: &str,
    value: &str,
) -> Result<(), ConfigError> {
    let bad = |message: String| ConfigError::BadValue {
        section: section.to_string(),
        key: key.to_string(),
        message,
    };
    macro_rules! parse {
        ($ty:ty) => {
            value.parse::<$ty>().map_err(|e| bad(e.to_string()))?
        };
    }
    match (section, key) {
        ("experiment", "kind") => {
            config.kind = Some(
                ExperimentKind::parse(value)
                    .ok_or_else(|| bad(format!("unknown kind '{value}'")))?,
            );
        }
        ("experiment", "datasets") => {
            config.datasets = split_list(value)
                .map(|s| s.parse::<DatasetKind>())
                .collect::<Result<_, _>>()
                .map_err(bad)?;
        }
        ("experiment", "seeds") => config.seeds = parse!(u32),
        ("experiment", "master_seed") => config.master_seed = parse!(u64),
        ("experiment", "out") => config.out_dir = PathBuf::from(value),
        ("budget", "total") => config.total_memory = parse!(u32),
        ("budget", "plan_grid") => {
            config.plan_grid = split_list(value)
                .map(|s| s.parse::<u32>())
                .collect::<Result<_, _>>()
                .map_err(|e| bad(e.to_string()))?;
        }
        ("mcts", "uct_c") => config.mcts.uct_c = parse!(f64),
        ("mcts", "iteration_factor") => config.mcts.iteration_factor = parse!(u32),
        ("mcts", "horizon") => config.mcts.horizon = parse!(u32),
        ("corridor", "width") => config.corridor.width = parse!(u32),
        ("corridor", "height") => config.corridor.height = parse!(u32),
        ("corridor", "start") => {
            config.corridor.start = parse_cell(value).map_err(bad)?;
        }
        ("corridor", "penalty") => config.corridor.step_penalty = parse!(f64),
        ("corridor", "horizon") => config.corridor.horizon = parse!(u32),
        ("corridor", "goals") => {
            config.corridor.goals = parse_goals(value).map_err(bad)?;
        }
        ("jellybean", "green_density") => config.jellybean.green_density = parse!(f64),
        ("jellybean", "cluster_center_density") => {
            config.jellybean.cluster_center_density = parse!(f64)
        }
        ("jellybean", "cluster_radius") => config.jellybean.cluster_radius = parse!(i64),
        ("jellybean", "cluster_item_count") => config.jellybean.cluster_item_count = parse!(u32),
        ("jellybean", "chunk_size") => config.jellybean.chunk_size = parse!(i64),
        ("jellybean", "swap_period") => config.jellybean.swap_period = parse!(u64),
        ("jellybean", "green_reward") => config.jellybean.green_reward = parse!(f64),
        ("jellybean", "red_reward") => config.jellybean.red_reward = parse!(f64),
        ("jellybean", "blue_reward") => config.jellybean.blue_reward = parse!(f64),
        ("ptdqn", "hidden") => {
            config.ptdqn.hidden_widths = split_list(value)
                .map(|s| s.parse::<u32>())
                .collect::<Result<_, _>>()
                .map_err(|e| bad(e.to_string()))?;
        }
        ("ptdqn", "buffer_capacity") => config.ptdqn.buffer_capacity = parse!(u32),
        ("ptdqn", "fractions") => {
            config.ptdqn.fractions = split_list(value)
                .map(|s| s.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| bad(e.to_string()))?;
        }
        ("ptdqn", "total_steps") => config.ptdqn.total_steps = parse!(u64),
        ("ptdqn", "trace_stride") => config.ptdqn.trace_stride = parse!(u64),
        ("ptdqn", "gamma") => config.ptdqn.agent.gamma = parse!(f64),
        ("ptdqn", "lr_transient") => config.ptdqn.agent.lr_transient = parse!(f64),
        ("ptdqn", "lr_permanent") => config.ptdqn.agent.lr_permanent = parse!(f64),
        ("ptdqn", "epsilon_start") => config.ptdqn.agent.epsilon_start = parse!(f64),
        ("ptdqn", "epsilon_end") => config.ptdqn.agent.epsilon_end = parse!(f64),
        ("ptdqn", "epsilon_decay_steps") => config.ptdqn.agent.epsilon_decay_steps = parse!(u64),
        ("ptdqn", "batch_size") => config.ptdqn.agent.batch_size = parse!(usize),
        ("ptdqn", "consolidation_period") => config.ptdqn.agent.consolidation_period = parse!(u64),
        ("ptdqn", "consolidation_steps") => config.ptdqn.agent.consolidation_steps = parse!(u32),
        ("ptdqn", "transient_decay") => config.ptdqn.agent.transient_decay = parse!(f64),
        ("ptdqn", "smoothing_window") => config.ptdqn.agent.smoothing_window = parse!(usize),
        _ => {
            return Err(ConfigError::UnknownKey {
                section: section.to_string(),
                key: key.to_string(),
            })
        }
    }
    Ok(())
}

fn split_list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn parse_cell(value: &str) -> Result<(u32, u32), String> {
    let (x, y) = value
        .split_once(',')
        .ok_or_else(|| format!("expected `x,y`, got '{value}'"))?;
    Ok((
        x.trim().parse().map_err(|_| format!("bad x '{x}'"))?,
        y.trim().parse().map_err(|_| format!("bad y '{y}'"))?,
    ))
}

/// Goals: semicolon-separated `label:x,y:reward` entries.
fn parse_goals(value: &str) -> Result<Vec<GoalSpec>, String> {
    let mut goals = Vec::new();
    for entry in value.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        let parts: Vec<&str> = entry.split(':').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(format!("expected `label:x,y:reward`, got '{entry}'"));
        }
        let (x, y) = parse_cell(parts[1])?;
        goals.push(GoalSpec {
            label: parts[0].to_string(),
            x,
            y,
            reward: parts[2]
                .parse()
                .map_err(|_| format!("bad reward '{}'", parts[2]))?,
        });
    }
    if goals.is_empty() {
        return Err("at least one goal is required".into());
    }
    Ok(goals)
}
