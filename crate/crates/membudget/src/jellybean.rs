//! Procedurally generated infinite 2D gridworld for the continual task.
//!
//! Green items are scattered uniformly per cell; red and blue items appear
//! in single-color clusters. Red and blue rewards start at (-1, 2) and swap
//! every `swap_period` steps. The agent sees an egocentric 11x11 window with
//! one presence channel per color.
//!
//! The world is generated lazily in chunks. A chunk's contents are a pure
//! function of (world seed, chunk coordinates): revisiting a far-away region
//! reproduces exactly the items that were never collected. Cluster centers
//! scatter items up to `cluster_radius` cells away, so assembling a chunk
//! also consults the centers of its eight neighbors.

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::core::Action;
use crate::rng::{derive_seed, SeededRng};

pub const VIEW_SIZE: usize = 11;
pub const CHANNELS: usize = 3;
pub const OBSERVATION_LEN: usize = VIEW_SIZE * VIEW_SIZE * CHANNELS;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum ItemColor {
    Red,
    Green,
    Blue,
}

impl ItemColor {
    pub fn channel(self) -> usize {
        match self {
            ItemColor::Red => 0,
            ItemColor::Green => 1,
            ItemColor::Blue => 2,
        }
    }

    pub fn glyph(self) -> char {
        match self {
            ItemColor::Red => 'r',
            ItemColor::Green => 'g',
            ItemColor::Blue => 'b',
        }
    }
}

/// Generation and reward parameters of the world.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldConfig {
    /// Per-cell probability of a green item.
    pub green_density: f64,
    /// Per-cell probability of hosting a cluster center.
    pub cluster_center_density: f64,
    /// Chebyshev radius items scatter around their center.
    pub cluster_radius: i64,
    /// Items scattered per cluster center.
    pub cluster_item_count: u32,
    pub chunk_size: i64,
    /// Steps between red/blue reward swaps.
    pub swap_period: u64,
    pub green_reward: f64,
    /// Red reward in the initial phase.
    pub red_reward: f64,
    /// Blue reward in the initial phase.
    pub blue_reward: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            green_density: 0.02,
            cluster_center_density: 0.001,
            cluster_radius: 3,
            cluster_item_count: 12,
            chunk_size: 32,
            swap_period: 150_000,
            green_reward: 0.1,
            red_reward: -1.0,
            blue_reward: 2.0,
        }
    }
}

/// Current (red, blue) rewards at global step `t`: the initial values on
/// even swap phases, exchanged on odd ones.
pub fn phase(t: u64, swap_period: u64, red: f64, blue: f64) -> (f64, f64) {
    if (t / swap_period).is_multiple_of(2) {
        (red, blue)
    } else {
        (blue, red)
    }
}

/// Egocentric 11x11x3 presence image, flattened row-major with channels
/// innermost: `index = (row * 11 + col) * 3 + channel`. Row 5, column 5 is
/// the agent's own cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub values: Vec<f64>,
}

impl Observation {
    pub fn zeros() -> Self {
        Observation {
            values: vec![0.0; OBSERVATION_LEN],
        }
    }

    pub fn at(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.values[(row * VIEW_SIZE + col) * CHANNELS + channel]
    }
}

type Cell = (i64, i64);

/// Materialized items of one chunk, keyed by absolute cell.
#[derive(Clone, Debug)]
struct Chunk {
    items: BTreeMap<Cell, ItemColor>,
}

/// The live world: agent position, consumed items, lazily generated chunks
/// and the global step counter.
#[derive(Clone, Debug)]
pub struct JellyBeanWorld {
    config: WorldConfig,
    seed: u64,
    agent: Cell,
    consumed: HashSet<Cell>,
    chunks: HashMap<Cell, Chunk>,
    steps: u64,
}

impl JellyBeanWorld {
    pub fn new(config: WorldConfig, seed: u64) -> Self {
        JellyBeanWorld {
            config,
            seed,
            agent: (0, 0),
            consumed: HashSet::new(),
            chunks: HashMap::new(),
            steps: 0,
        }
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn agent_position(&self) -> Cell {
        self.agent
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Current (red, blue) rewards for this step.
    pub fn current_phase(&self) -> (f64, f64) {
        phase(
            self.steps,
            self.config.swap_period,
            self.config.red_reward,
            self.config.blue_reward,
        )
    }

    fn chunk_of(&self, cell: Cell) -> Cell {
        (
            cell.0.div_euclid(self.config.chunk_size),
            cell.1.div_euclid(self.config.chunk_size),
        )
    }

    /// Raw generated item at a cell, ignoring consumption.
    fn generated_item_at(&mut self, cell: Cell) -> Option<ItemColor> {
        let key = self.chunk_of(cell);
        if !self.chunks.contains_key(&key) {
            let chunk = generate_chunk(&self.config, self.seed, key.0, key.1);
            self.chunks.insert(key, chunk);
        }
        self.chunks[&key].items.get(&cell).copied()
    }

    /// Unconsumed item currently occupying a cell.
    pub fn item_at(&mut self, cell: Cell) -> Option<ItemColor> {
        if self.consumed.contains(&cell) {
            return None;
        }
        self.generated_item_at(cell)
    }

    /// Move one cell; collect whatever occupies the destination. The reward
    /// uses the phase of the step being taken, then the counter advances.
    pub fn step(&mut self, action: Action) -> (Observation, f64) {
        let (dx, dy) = action.delta();
        self.agent = (self.agent.0 + dx, self.agent.1 + dy);
        let (red_reward, blue_reward) = self.current_phase();
        let reward = match self.item_at(self.agent) {
            Some(ItemColor::Green) => {
                self.consumed.insert(self.agent);
                self.config.green_reward
            }
            Some(ItemColor::Red) => {
                self.consumed.insert(self.agent);
                red_reward
            }
            Some(ItemColor::Blue) => {
                self.consumed.insert(self.agent);
                blue_reward
            }
            None => 0.0,
        };
        self.steps += 1;
        (self.observe(), reward)
    }

    /// Egocentric 11x11 window of unconsumed items.
    pub fn observe(&mut self) -> Observation {
        let mut obs = Observation::zeros();
        let half = (VIEW_SIZE / 2) as i64;
        for row in 0..VIEW_SIZE {
            for col in 0..VIEW_SIZE {
                let cell = (
                    self.agent.0 + col as i64 - half,
                    self.agent.1 + row as i64 - half,
                );
                if let Some(color) = self.item_at(cell) {
                    obs.values[(row * VIEW_SIZE + col) * CHANNELS + color.channel()] = 1.0;
                }
            }
        }
        obs
    }

    /// Text rendering of the current window: `r`/`g`/`b` items, `.` empty,
    /// `A` the agent (shown uppercase over an item it is standing on).
    pub fn render_ascii(&mut self) -> String {
        let half = (VIEW_SIZE / 2) as i64;
        let mut out = String::new();
        for row in 0..VIEW_SIZE {
            for col in 0..VIEW_SIZE {
                let cell = (
                    self.agent.0 + col as i64 - half,
                    self.agent.1 + row as i64 - half,
                );
                let item = self.item_at(cell);
                let ch = if cell == self.agent {
                    match item {
                        Some(c) => c.glyph().to_ascii_uppercase(),
                        None => 'A',
                    }
                } else {
                    item.map_or('.', |c| c.glyph())
                };
                out.push(ch);
            }
            out.push('\n');
        }
        out
    }
}

/// Deterministically generate one chunk's items.
///
/// Greens are drawn per cell from the chunk's own stream. Cluster items can
/// spill across chunk borders, so the 3x3 chunk neighborhood's centers are
/// replayed and any of their items that land inside this chunk are kept.
/// The first item to claim a cell wins; replay order is fixed, so assembly
/// is deterministic.
fn generate_chunk(config: &WorldConfig, seed: u64, cx: i64, cy: i64) -> Chunk {
    let size = config.chunk_size;
    let mut items: BTreeMap<Cell, ItemColor> = BTreeMap::new();

    // Uniform greens from this chunk's stream.
    let mut green_rng = SeededRng::new(derive_seed(seed, &[0x6EE7, cx as u64, cy as u64]));
    for y in 0..size {
        for x in 0..size {
            if green_rng.next_bool(config.green_density) {
                items.insert((cx * size + x, cy * size + y), ItemColor::Green);
            }
        }
    }

    // Cluster spills from this chunk and its neighbors.
    for ny in (cy - 1)..=(cy + 1) {
        for nx in (cx - 1)..=(cx + 1) {
            let mut cluster_rng =
                SeededRng::new(derive_seed(seed, &[0xC105, nx as u64, ny as u64]));
            for y in 0..size {
                for x in 0..size {
                    if !cluster_rng.next_bool(config.cluster_center_density) {
                        continue;
                    }
                    let center = (nx * size + x, ny * size + y);
                    // Alternate cluster colors by a stable center hash.
                    let color = if derive_seed(seed, &[0xC0108, center.0 as u64, center.1 as u64])
                        .is_multiple_of(2)
                    {
                        ItemColor::Red
                    } else {
                        ItemColor::Blue
                    };
                    let mut scatter = SeededRng::new(derive_seed(
                        seed,
                        &[0x5CA7, center.0 as u64, center.1 as u64],
                    ));
                    let span = 2 * config.cluster_radius + 1;
                    for _ in 0..config.cluster_item_count {
                        let dx = scatter.next_below(span as u64) as i64 - config.cluster_radius;
                        let dy = scatter.next_below(span as u64) as i64 - config.cluster_radius;
                        let cell = (center.0 + dx, center.1 + dy);
                        let in_chunk =
                            cell.0.div_euclid(size) == cx && cell.1.div_euclid(size) == cy;
                        if in_chunk {
                            items.entry(cell).or_insert(color);
                        }
                    }
                }
            }
        }
    }

    Chunk { items }
}
