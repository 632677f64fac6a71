//! DQN with a permanent/transient value decomposition, built from scratch.
//!
//! The action-value function is the sum of two multilayer perceptrons,
//! `Q(s, a) = Q_P(s, a) + Q_T(s, a)`. The transient network learns the TD
//! residual of the combined value every step; the permanent network only
//! changes during periodic consolidation, when it regresses toward a
//! snapshot of the combined values and the transient weights are then scaled
//! down by a decay factor. Hidden neurons of both networks plus the replay
//! buffer's slots draw from the same fixed memory budget.
//!
//! Plain stochastic gradient descent, no target network, no adaptive
//! optimizer state: every unit of memory the agent uses is on the ledger.

use std::io::{self, Read, Write};

use crate::budget::PtSplit;
use crate::core::Action;
use crate::jellybean::JellyBeanWorld;
use crate::rng::SeededRng;

#[derive(Debug, thiserror::Error)]
pub enum PtError {
    #[error("input length {got} does not match network input width {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Fully connected layer, weights row-major `[out][in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl DenseLayer {
    /// Uniform init in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`; zero-fan-in
    /// layers get all-zero parameters so degenerate widths stay silent.
    fn init(in_dim: usize, out_dim: usize, rng: &mut SeededRng) -> Self {
        let scale = if in_dim > 0 {
            1.0 / (in_dim as f64).sqrt()
        } else {
            0.0
        };
        let weights = (0..in_dim * out_dim)
            .map(|_| rng.next_range_f64(-scale, scale))
            .collect();
        let biases = (0..out_dim)
            .map(|_| rng.next_range_f64(-scale, scale))
            .collect();
        DenseLayer {
            in_dim,
            out_dim,
            weights,
            biases,
        }
    }

    /// Affine map. Sparse inputs (common for the one-hot item windows) take
    /// a gather path that skips zero entries.
    fn forward(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(&self.biases);
        if self.in_dim == 0 || self.out_dim == 0 {
            return;
        }
        let nonzero: Vec<usize> = input
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, _)| i)
            .collect();
        if nonzero.len() * 4 <= self.in_dim {
            for (o, acc) in out.iter_mut().enumerate() {
                let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
                for &j in &nonzero {
                    *acc += row[j] * input[j];
                }
            }
        } else {
            for (o, acc) in out.iter_mut().enumerate() {
                let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
                *acc += row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>();
            }
        }
    }

    /// Accumulate parameter gradients for this layer and, if requested, the
    /// gradient with respect to its input.
    fn backward(
        &self,
        input: &[f64],
        out_grad: &[f64],
        grad_w: &mut [f64],
        grad_b: &mut [f64],
        mut in_grad: Option<&mut [f64]>,
    ) {
        if let Some(ig) = in_grad.as_deref_mut() {
            ig.fill(0.0);
        }
        for (o, &g) in out_grad.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad_b[o] += g;
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let grow = &mut grad_w[o * self.in_dim..(o + 1) * self.in_dim];
            for j in 0..self.in_dim {
                if input[j] != 0.0 {
                    grow[j] += g * input[j];
                }
            }
            if let Some(ig) = in_grad.as_deref_mut() {
                for j in 0..self.in_dim {
                    ig[j] += row[j] * g;
                }
            }
        }
    }
}

/// Multilayer perceptron with rectified-linear hidden layers and a linear
/// output layer. Zero-width hidden layers contribute a zero-dimensional map:
/// a network whose hidden widths are all zero outputs constant zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<DenseLayer>,
}

impl Mlp {
    pub fn new(
        input_dim: usize,
        hidden_widths: &[u32],
        output_dim: usize,
        rng: &mut SeededRng,
    ) -> Self {
        let mut dims = vec![input_dim];
        dims.extend(hidden_widths.iter().map(|&w| w as usize));
        dims.push(output_dim);
        let layers = dims
            .windows(2)
            .map(|pair| DenseLayer::init(pair[0], pair[1], rng))
            .collect();
        Mlp { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.in_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    /// Hidden units only; the output layer is off the ledger.
    pub fn hidden_unit_count(&self) -> u32 {
        self.layers[..self.layers.len().saturating_sub(1)]
            .iter()
            .map(|l| l.out_dim as u32)
            .sum()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// Deterministic forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, PtError> {
        if input.len() != self.input_dim() {
            return Err(PtError::ShapeMismatch {
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        let mut current = input.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.forward(&current, &mut next);
            if i < last {
                for v in next.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            std::mem::swap(&mut current, &mut next);
        }
        Ok(current)
    }

    /// Forward pass keeping every layer's post-activation output
    /// (`activations[0]` is the input itself).
    fn forward_cached(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.to_vec());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::new();
            layer.forward(activations.last().unwrap(), &mut out);
            if i < last {
                for v in out.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            activations.push(out);
        }
        activations
    }

    /// Backpropagate `output_grad` through cached activations, accumulating
    /// into `grads`.
    fn backward(&self, activations: &[Vec<f64>], output_grad: &[f64], grads: &mut MlpGrads) {
        let mut grad = output_grad.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &activations[i];
            let mut in_grad = if i > 0 {
                vec![0.0; layer.in_dim]
            } else {
                Vec::new()
            };
            layer.backward(
                input,
                &grad,
                &mut grads.weights[i],
                &mut grads.biases[i],
                if i > 0 { Some(&mut in_grad) } else { None },
            );
            if i > 0 {
                // Rectifier derivative: the incoming activation is already
                // post-ReLU, so zero entries gate the gradient.
                for (g, &a) in in_grad.iter_mut().zip(input.iter()) {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                }
                grad = in_grad;
            }
        }
    }

    fn apply_gradients(&mut self, grads: &MlpGrads, lr: f64) {
        for (layer, (gw, gb)) in self
            .layers
            .iter_mut()
            .zip(grads.weights.iter().zip(grads.biases.iter()))
        {
            for (w, g) in layer.weights.iter_mut().zip(gw) {
                *w -= lr * g;
            }
            for (b, g) in layer.biases.iter_mut().zip(gb) {
                *b -= lr * g;
            }
        }
    }

    /// Scale every weight and bias by `factor`.
    fn scale_parameters(&mut self, factor: f64) {
        for layer in &mut self.layers {
            for w in &mut layer.weights {
                *w *= factor;
            }
            for b in &mut layer.biases {
                *b *= factor;
            }
        }
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }
}

/// Parameter gradients with the same shapes as an [`Mlp`].
#[derive(Clone, Debug)]
pub struct MlpGrads {
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl MlpGrads {
    fn zeros_like(net: &Mlp) -> Self {
        MlpGrads {
            weights: net
                .layers
                .iter()
                .map(|l| vec![0.0; l.weights.len()])
                .collect(),
            biases: net
                .layers
                .iter()
                .map(|l| vec![0.0; l.biases.len()])
                .collect(),
        }
    }

    /// Flatten in parameter order (per layer: weights then biases), matching
    /// [`flatten_parameters`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }
}

/// All parameters of a network in a flat vector (per layer: weights then
/// biases). Mirrors [`MlpGrads::flatten`] for gradient checking.
pub fn flatten_parameters(net: &Mlp) -> Vec<f64> {
    let mut out = Vec::new();
    for layer in &net.layers {
        out.extend_from_slice(&layer.weights);
        out.extend_from_slice(&layer.biases);
    }
    out
}

/// Overwrite a network's parameters from a flat vector produced by
/// [`flatten_parameters`].
pub fn set_parameters(net: &mut Mlp, flat: &[f64]) {
    let mut cursor = 0;
    for layer in &mut net.layers {
        let nw = layer.weights.len();
        layer.weights.copy_from_slice(&flat[cursor..cursor + nw]);
        cursor += nw;
        let nb = layer.biases.len();
        layer.biases.copy_from_slice(&flat[cursor..cursor + nb]);
        cursor += nb;
    }
    assert_eq!(cursor, flat.len());
}

/// The permanent/transient pair. The combined value is always the entrywise
/// sum of the two forward passes.
#[derive(Clone, Debug)]
pub struct QPair {
    pub permanent: Mlp,
    pub transient: Mlp,
}

impl QPair {
    /// Build both networks for a split. Input width is the flattened
    /// observation; both networks keep the full input and the fixed
    /// 4-action output layer.
    pub fn new(input_dim: usize, split: &PtSplit, rng: &mut SeededRng) -> Self {
        let permanent = Mlp::new(input_dim, &split.permanent_widths, Action::COUNT, rng);
        let transient = Mlp::new(input_dim, &split.transient_widths, Action::COUNT, rng);
        QPair {
            permanent,
            transient,
        }
    }

    /// `Q(s, .) = Q_P(s, .) + Q_T(s, .)`.
    pub fn combined(&self, obs: &[f64]) -> Result<Vec<f64>, PtError> {
        let p = self.permanent.forward(obs)?;
        let t = self.transient.forward(obs)?;
        Ok(p.iter().zip(&t).map(|(a, b)| a + b).collect())
    }
}

/// Epsilon-greedy action over the combined value. Greedy ties break toward
/// the lowest action index.
pub fn act(
    pair: &QPair,
    obs: &[f64],
    epsilon: f64,
    rng: &mut SeededRng,
) -> Result<Action, PtError> {
    if rng.next_bool(epsilon) {
        return Ok(Action::ALL[rng.next_index(Action::COUNT)]);
    }
    let q = pair.combined(obs)?;
    Ok(argmax_action(&q))
}

fn argmax_action(q: &[f64]) -> Action {
    let mut best = 0;
    for i in 1..q.len() {
        if q[i] > q[best] {
            best = i;
        }
    }
    Action::from_index(best).expect("q has four entries")
}

/// One stored experience. The continual world never terminates, so there is
/// no terminal flag.
#[derive(Clone, Debug)]
pub struct Experience {
    pub obs: Vec<f64>,
    pub action: Action,
    pub reward: f64,
    pub next_obs: Vec<f64>,
}

/// FIFO ring of experiences; each slot costs one memory unit.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    ring: std::collections::VecDeque<Experience>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            capacity,
            ring: std::collections::VecDeque::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.ring.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ring.is_empty()
    }

    pub fn push(&mut self, experience: Experience) {
        if self.capacity == 0 {
            return;
        }
        if self.ring.len() == self.capacity {
            self.ring.pop_front();
        }
        self.ring.push_back(experience);
    }

    pub fn get(&self, index: usize) -> &Experience {
        &self.ring[index]
    }

    /// Uniform sample with replacement.
    pub fn sample<'a>(&'a self, batch: usize, rng: &mut SeededRng) -> Vec<&'a Experience> {
        (0..batch)
            .map(|_| &self.ring[rng.next_index(self.ring.len())])
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        self.ring.iter()
    }
}

/// One TD step on the transient network only.
///
/// Per experience the target is `r + gamma * max_a Q(s', a)` over the
/// combined value (semi-gradient: the target is treated as a constant). The
/// squared-error gradient, averaged over the batch, is applied to the
/// transient parameters; the permanent network is untouched. Returns the
/// per-experience squared TD errors.
pub fn transient_update(
    pair: &mut QPair,
    batch: &[&Experience],
    gamma: f64,
    lr: f64,
) -> Result<Vec<f64>, PtError> {
    assert!(!batch.is_empty(), "transient_update needs a nonempty batch");
    let mut grads = MlpGrads::zeros_like(&pair.transient);
    let mut losses = Vec::with_capacity(batch.len());
    let scale = 1.0 / batch.len() as f64;
    for exp in batch {
        let q_next = pair.combined(&exp.next_obs)?;
        let max_next = q_next.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let target = exp.reward + gamma * max_next;

        let acts = pair.transient.forward_cached(&exp.obs);
        let q_perm = pair.permanent.forward(&exp.obs)?;
        let q_trans = acts.last().unwrap();
        let predicted = q_perm[exp.action.index()] + q_trans[exp.action.index()];
        let err = predicted - target;
        losses.push(err * err);

        let mut out_grad = vec![0.0; Action::COUNT];
        out_grad[exp.action.index()] = 2.0 * err * scale;
        pair.transient.backward(&acts, &out_grad, &mut grads);
    }
    pair.transient.apply_gradients(&grads, lr);
    Ok(losses)
}

/// Consolidation: absorb the current combined values into the permanent
/// network, then decay the transient.
///
/// Targets are the combined values under a snapshot of the permanent network
/// taken at the start, so with enough steps the permanent output converges
/// to the pre-consolidation combined output instead of chasing itself.
/// Afterwards every transient weight and bias is scaled by `lambda`
/// (`lambda = 0` resets the transient exactly).
pub fn consolidate(
    pair: &mut QPair,
    buffer: &ReplayBuffer,
    lr_permanent: f64,
    lambda: f64,
    steps: u32,
    batch_size: usize,
    rng: &mut SeededRng,
) -> Result<(), PtError> {
    assert!(!buffer.is_empty(), "consolidate needs a nonempty buffer");
    let snapshot = pair.permanent.clone();
    let batch_size = batch_size.max(1).min(buffer.len());
    for _ in 0..steps {
        let batch = buffer.sample(batch_size, rng);
        let mut grads = MlpGrads::zeros_like(&pair.permanent);
        let scale = 1.0 / batch.len() as f64;
        for exp in &batch {
            let frozen_perm = snapshot.forward(&exp.obs)?;
            let trans = pair.transient.forward(&exp.obs)?;
            let acts = pair.permanent.forward_cached(&exp.obs);
            let current = acts.last().unwrap();
            let out_grad: Vec<f64> = (0..Action::COUNT)
                .map(|a| 2.0 * (current[a] - (frozen_perm[a] + trans[a])) * scale)
                .collect();
            pair.permanent.backward(&acts, &out_grad, &mut grads);
        }
        pair.permanent.apply_gradients(&grads, lr_permanent);
    }
    pair.transient.scale_parameters(lambda);
    Ok(())
}

/// Hyperparameters of the continual-learning agent.
#[derive(Clone, Debug)]
pub struct AgentConfig {
    pub gamma: f64,
    pub lr_transient: f64,
    pub lr_permanent: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_steps: u64,
    pub batch_size: usize,
    /// Consolidate every this many steps.
    pub consolidation_period: u64,
    /// Minibatches per consolidation.
    pub consolidation_steps: u32,
    /// Transient decay factor lambda applied after consolidation.
    pub transient_decay: f64,
    /// Window (in steps) of the trailing-mean reward trace.
    pub smoothing_window: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            gamma: 0.9,
            lr_transient: 0.01,
            lr_permanent: 0.01,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_steps: 2_500,
            batch_size: 4,
            consolidation_period: 500,
            consolidation_steps: 25,
            transient_decay: 0.0,
            smoothing_window: 500,
        }
    }
}

impl AgentConfig {
    pub fn epsilon_at(&self, step: u64) -> f64 {
        if self.epsilon_decay_steps == 0 || step >= self.epsilon_decay_steps {
            return self.epsilon_end;
        }
        let progress = step as f64 / self.epsilon_decay_steps as f64;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * progress
    }
}

/// Per-step rewards of one run plus their trailing-window smoothing.
#[derive(Clone, Debug)]
pub struct RewardTrace {
    pub rewards: Vec<f64>,
    pub smoothed: Vec<f64>,
}

impl RewardTrace {
    fn from_rewards(rewards: Vec<f64>, window: usize) -> Self {
        let window = window.max(1);
        let mut smoothed = Vec::with_capacity(rewards.len());
        let mut running = 0.0;
        for (t, &r) in rewards.iter().enumerate() {
            running += r;
            if t >= window {
                running -= rewards[t - window];
            }
            let n = (t + 1).min(window);
            smoothed.push(running / n as f64);
        }
        RewardTrace { rewards, smoothed }
    }

    /// Mean smoothed reward over a step range (clamped to the trace).
    pub fn mean_smoothed(&self, from: usize, to: usize) -> f64 {
        let to = to.min(self.smoothed.len());
        let from = from.min(to);
        if from == to {
            return 0.0;
        }
        self.smoothed[from..to].iter().sum::<f64>() / (to - from) as f64
    }
}

/// Everything a continual run leaves behind: the reward trace and the
/// trained network pair (for checkpointing or inspection).
#[derive(Clone, Debug)]
pub struct ContinualRun {
    pub trace: RewardTrace,
    pub pair: QPair,
}

/// Run the continual loop: epsilon-greedy interaction, a transient TD step
/// per environment step once a full batch is buffered, and consolidation
/// every `consolidation_period` steps (skipped entirely when the permanent
/// fraction is zero).
pub fn run_continual(
    mut world: JellyBeanWorld,
    split: &PtSplit,
    config: &AgentConfig,
    total_steps: u64,
    seed: u64,
) -> Result<ContinualRun, PtError> {
    let mut rng = SeededRng::new(seed);
    let mut init_rng = rng.fork();
    let mut act_rng = rng.fork();
    let mut train_rng = rng.fork();

    let mut pair = QPair::new(crate::jellybean::OBSERVATION_LEN, split, &mut init_rng);
    let mut buffer = ReplayBuffer::new(split.buffer_capacity as usize);
    let mut rewards = Vec::with_capacity(total_steps as usize);
    let mut obs = world.observe().values;

    for t in 0..total_steps {
        let epsilon = config.epsilon_at(t);
        let action = act(&pair, &obs, epsilon, &mut act_rng)?;
        let (next_observation, reward) = world.step(action);
        let next_obs = next_observation.values;
        buffer.push(Experience {
            obs: std::mem::replace(&mut obs, next_obs.clone()),
            action,
            reward,
            next_obs,
        });
        rewards.push(reward);

        if buffer.len() >= config.batch_size {
            let batch = buffer.sample(config.batch_size, &mut train_rng);
            transient_update(&mut pair, &batch, config.gamma, config.lr_transient)?;
        }
        if split.permanent_fraction > 0.0
            && config.consolidation_period > 0
            && (t + 1) % config.consolidation_period == 0
            && !buffer.is_empty()
        {
            consolidate(
                &mut pair,
                &buffer,
                config.lr_permanent,
                config.transient_decay,
                config.consolidation_steps,
                config.batch_size,
                &mut train_rng,
            )?;
        }
    }
    Ok(ContinualRun {
        trace: RewardTrace::from_rewards(rewards, config.smoothing_window),
        pair,
    })
}

/// Reward trace of a uniform-random policy: the no-learning baseline.
pub fn random_baseline_trace(
    mut world: JellyBeanWorld,
    total_steps: u64,
    seed: u64,
    smoothing_window: usize,
) -> RewardTrace {
    let mut rng = SeededRng::new(seed);
    let mut rewards = Vec::with_capacity(total_steps as usize);
    for _ in 0..total_steps {
        let action = Action::ALL[rng.next_index(Action::COUNT)];
        let (_, reward) = world.step(action);
        rewards.push(reward);
    }
    RewardTrace::from_rewards(rewards, smoothing_window)
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"PTDQ";
const CHECKPOINT_VERSION: u32 = 1;

/// Dump both networks' raw weights: magic `PTDQ`, a little-endian `u32`
/// version, then the permanent and transient networks. Each network is a
/// `u32` layer count followed by, per layer, `u32` input width, `u32`
/// output width, the weights row-major and then the biases, all as
/// little-endian `f64`.
pub fn save_checkpoint<W: Write>(pair: &QPair, w: &mut W) -> Result<(), PtError> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    for net in [&pair.permanent, &pair.transient] {
        w.write_all(&(net.layers.len() as u32).to_le_bytes())?;
        for layer in &net.layers {
            w.write_all(&(layer.in_dim as u32).to_le_bytes())?;
            w.write_all(&(layer.out_dim as u32).to_le_bytes())?;
            for v in &layer.weights {
                w.write_all(&v.to_le_bytes())?;
            }
            for v in &layer.biases {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

/// Load a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint<R: Read>(r: &mut R) -> Result<QPair, PtError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(PtError::BadCheckpoint("wrong magic".into()));
    }
    let version = read_u32(r)?;
    if version != CHECKPOINT_VERSION {
        return Err(PtError::BadCheckpoint(format!(
            "unsupported version {version}"
        )));
    }
    let mut nets = Vec::with_capacity(2);
    for _ in 0..2 {
        let layer_count = read_u32(r)? as usize;
        if layer_count > 64 {
            return Err(PtError::BadCheckpoint("implausible layer count".into()));
        }
        let mut layers = Vec::with_capacity(layer_count);
        for _ in 0..layer_count {
            let in_dim = read_u32(r)? as usize;
            let out_dim = read_u32(r)? as usize;
            let mut weights = vec![0.0; in_dim * out_dim];
            for v in weights.iter_mut() {
                *v = read_f64(r)?;
            }
            let mut biases = vec![0.0; out_dim];
            for v in biases.iter_mut() {
                *v = read_f64(r)?;
            }
            layers.push(DenseLayer {
                in_dim,
                out_dim,
                weights,
                biases,
            });
        }
        nets.push(Mlp { layers });
    }
    let transient = nets.pop().unwrap();
    let permanent = nets.pop().unwrap();
    Ok(QPair {
        permanent,
        transient,
    })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, PtError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64, PtError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::budget::{verify_budget, PtSplit};

    fn tiny_split(fraction: f64) -> PtSplit {
        PtSplit::new(vec![6, 4], 8, fraction)
    }

    fn random_obs(dim: usize, rng: &mut SeededRng) -> Vec<f64> {
        (0..dim)
            .map(|_| if rng.next_bool(0.3) { 1.0 } else { 0.0 })
            .collect()
    }

    #[test]
    fn zero_weight_network_outputs_zeros() {
        let mut rng = SeededRng::new(1);
        let mut net = Mlp::new(5, &[3], 4, &mut rng);
        let flat = vec![0.0; flatten_parameters(&net).len()];
        set_parameters(&mut net, &flat);
        assert_eq!(
            net.forward(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(),
            vec![0.0; 4]
        );
    }

    #[test]
    fn hand_built_single_hidden_unit_forward() {
        let mut net = Mlp {
            layers: vec![
                DenseLayer {
                    in_dim: 2,
                    out_dim: 1,
                    weights: vec![1.0, -1.0],
                    biases: vec![0.5],
                },
                DenseLayer {
                    in_dim: 1,
                    out_dim: 4,
                    weights: vec![1.0, -2.0, 0.5, 0.0],
                    biases: vec![0.0, 1.0, 0.0, -1.0],
                },
            ],
        };
        // hidden = relu(2.0 - 0.5 + 0.5) = 2.0
        let out = net.forward(&[2.0, 0.5]).unwrap();
        assert_eq!(out, vec![2.0, -3.0, 1.0, -1.0]);
        // Negative preactivation rectifies to zero: output is just biases.
        net.layers[0].weights = vec![-1.0, 0.0];
        net.layers[0].biases = vec![0.0];
        let out = net.forward(&[2.0, 0.5]).unwrap();
        assert_eq!(out, vec![0.0, 1.0, 0.0, -1.0]);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut rng = SeededRng::new(2);
        let net = Mlp::new(5, &[3], 4, &mut rng);
        assert!(matches!(
            net.forward(&[1.0, 2.0]),
            Err(PtError::ShapeMismatch {
                expected: 5,
                got: 2
            })
        ));
    }

    #[test]
    fn zero_width_permanent_contributes_nothing() {
        let mut rng = SeededRng::new(3);
        let split = tiny_split(0.0);
        let pair = QPair::new(10, &split, &mut rng);
        let obs = random_obs(10, &mut rng);
        assert_eq!(pair.permanent.forward(&obs).unwrap(), vec![0.0; 4]);
        let combined = pair.combined(&obs).unwrap();
        let transient = pair.transient.forward(&obs).unwrap();
        assert_eq!(combined, transient);
    }

    #[test]
    fn combined_is_the_exact_sum() {
        let mut rng = SeededRng::new(4);
        let split = tiny_split(0.5);
        let pair = QPair::new(12, &split, &mut rng);
        for _ in 0..20 {
            let obs = random_obs(12, &mut rng);
            let p = pair.permanent.forward(&obs).unwrap();
            let t = pair.transient.forward(&obs).unwrap();
            let c = pair.combined(&obs).unwrap();
            for a in 0..4 {
                assert_eq!(c[a], p[a] + t[a]);
            }
        }
    }

    #[test]
    fn greedy_act_takes_the_argmax_with_low_index_ties() {
        // Hand-build a pair whose combined output is a constant vector.
        let constant_pair = |q: [f64; 4]| {
            let mut rng = SeededRng::new(5);
            let mut pair = QPair::new(3, &tiny_split(0.5), &mut rng);
            let zero_p = vec![0.0; flatten_parameters(&pair.permanent).len()];
            set_parameters(&mut pair.permanent, &zero_p);
            let mut zero_t = vec![0.0; flatten_parameters(&pair.transient).len()];
            // Set only the output-layer biases (the last four parameters).
            let n = zero_t.len();
            zero_t[n - 4..].copy_from_slice(&q);
            set_parameters(&mut pair.transient, &zero_t);
            pair
        };
        let mut rng = SeededRng::new(6);
        let pair = constant_pair([1.0, 3.0, 2.0, 0.0]);
        assert_eq!(act(&pair, &[0.0; 3], 0.0, &mut rng).unwrap(), Action::Down);
        let pair = constant_pair([2.0, 2.0, 0.0, 0.0]);
        assert_eq!(act(&pair, &[0.0; 3], 0.0, &mut rng).unwrap(), Action::Up);
    }

    #[test]
    fn full_epsilon_explores_uniformly() {
        let mut rng = SeededRng::new(7);
        let pair = QPair::new(3, &tiny_split(0.5), &mut rng);
        let mut counts = [0u32; 4];
        let draws = 10_000;
        for _ in 0..draws {
            counts[act(&pair, &[0.0; 3], 1.0, &mut rng).unwrap().index()] += 1;
        }
        let expected = draws as f64 / 4.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // Chi-square critical value, 3 degrees of freedom, alpha = 0.001.
        assert!(chi2 < 16.266, "chi2 = {chi2}, counts = {counts:?}");
    }

    #[test]
    fn fixed_point_batch_leaves_weights_unchanged() {
        let mut rng = SeededRng::new(8);
        let mut pair = QPair::new(6, &tiny_split(0.5), &mut rng);
        let obs = random_obs(6, &mut rng);
        let next_obs = random_obs(6, &mut rng);
        // Choose the reward so that target == predicted for action Up.
        let gamma = 0.9;
        let q_next = pair.combined(&next_obs).unwrap();
        let max_next = q_next.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let predicted = pair.combined(&obs).unwrap()[0];
        let reward = predicted - gamma * max_next;
        let exp = Experience {
            obs,
            action: Action::Up,
            reward,
            next_obs,
        };
        let before = flatten_parameters(&pair.transient);
        let losses = transient_update(&mut pair, &[&exp], gamma, 0.05).unwrap();
        assert!(losses[0] < 1e-24);
        let after = flatten_parameters(&pair.transient);
        assert_eq!(before, after);
    }

    #[test]
    fn transient_update_never_touches_permanent_bits() {
        let mut rng = SeededRng::new(9);
        let mut pair = QPair::new(8, &tiny_split(0.3), &mut rng);
        let before: Vec<u64> = flatten_parameters(&pair.permanent)
            .iter()
            .map(|v| v.to_bits())
            .collect();
        for _ in 0..25 {
            let exp = Experience {
                obs: random_obs(8, &mut rng),
                action: Action::ALL[rng.next_index(4)],
                reward: rng.next_range_f64(-1.0, 2.0),
                next_obs: random_obs(8, &mut rng),
            };
            transient_update(&mut pair, &[&exp], 0.9, 0.05).unwrap();
        }
        let after: Vec<u64> = flatten_parameters(&pair.permanent)
            .iter()
            .map(|v| v.to_bits())
            .collect();
        assert_eq!(before, after);
    }

    #[test]
    fn transient_gradient_matches_finite_differences() {
        let mut rng = SeededRng::new(10);
        for _ in 0..10 {
            let split = PtSplit::new(vec![5, 4], 4, 0.4);
            let pair = QPair::new(6, &split, &mut rng);
            let exp = Experience {
                obs: (0..6).map(|_| rng.next_range_f64(-1.0, 1.0)).collect(),
                action: Action::ALL[rng.next_index(4)],
                reward: rng.next_range_f64(-1.0, 2.0),
                next_obs: (0..6).map(|_| rng.next_range_f64(-1.0, 1.0)).collect(),
            };
            let gamma = 0.9;

            // Frozen target, exactly as the update computes it.
            let q_next = pair.combined(&exp.next_obs).unwrap();
            let target =
                exp.reward + gamma * q_next.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let loss = |net: &Mlp| {
                let q = net.forward(&exp.obs).unwrap()[exp.action.index()]
                    + pair.permanent.forward(&exp.obs).unwrap()[exp.action.index()];
                (q - target).powi(2)
            };

            // Analytic gradient via the shared backward path.
            let mut grads = MlpGrads::zeros_like(&pair.transient);
            let acts = pair.transient.forward_cached(&exp.obs);
            let predicted = acts.last().unwrap()[exp.action.index()]
                + pair.permanent.forward(&exp.obs).unwrap()[exp.action.index()];
            let mut out_grad = vec![0.0; 4];
            out_grad[exp.action.index()] = 2.0 * (predicted - target);
            pair.transient.backward(&acts, &out_grad, &mut grads);
            let analytic = grads.flatten();

            let params = flatten_parameters(&pair.transient);
            let h = 1e-5;
            for i in (0..params.len()).step_by(7) {
                let mut plus = params.clone();
                plus[i] += h;
                let mut minus = params.clone();
                minus[i] -= h;
                let mut net = pair.transient.clone();
                set_parameters(&mut net, &plus);
                let lp = loss(&net);
                set_parameters(&mut net, &minus);
                let lm = loss(&net);
                let numeric = (lp - lm) / (2.0 * h);
                let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
                assert!(
                    (analytic[i] - numeric).abs() / denom < 1e-4,
                    "param {i}: analytic {} vs numeric {numeric}",
                    analytic[i]
                );
            }
        }
    }

    #[test]
    fn consolidation_with_zero_lambda_resets_the_transient() {
        let mut rng = SeededRng::new(11);
        let mut pair = QPair::new(6, &tiny_split(0.5), &mut rng);
        let mut buffer = ReplayBuffer::new(8);
        for _ in 0..8 {
            buffer.push(Experience {
                obs: random_obs(6, &mut rng),
                action: Action::Up,
                reward: 0.5,
                next_obs: random_obs(6, &mut rng),
            });
        }
        consolidate(&mut pair, &buffer, 0.01, 0.0, 5, 4, &mut rng).unwrap();
        for _ in 0..10 {
            let obs = random_obs(6, &mut rng);
            assert_eq!(pair.transient.forward(&obs).unwrap(), vec![0.0; 4]);
        }
    }

    #[test]
    fn consolidation_with_unit_lambda_and_zero_lr_is_a_noop() {
        let mut rng = SeededRng::new(12);
        let mut pair = QPair::new(6, &tiny_split(0.5), &mut rng);
        let mut buffer = ReplayBuffer::new(4);
        for _ in 0..4 {
            buffer.push(Experience {
                obs: random_obs(6, &mut rng),
                action: Action::Down,
                reward: 1.0,
                next_obs: random_obs(6, &mut rng),
            });
        }
        let perm_before = flatten_parameters(&pair.permanent);
        let trans_before = flatten_parameters(&pair.transient);
        consolidate(&mut pair, &buffer, 0.0, 1.0, 10, 4, &mut rng).unwrap();
        assert_eq!(flatten_parameters(&pair.permanent), perm_before);
        assert_eq!(flatten_parameters(&pair.transient), trans_before);
    }

    #[test]
    fn consolidation_absorbs_the_combined_value() {
        let mut rng = SeededRng::new(13);
        let mut pair = QPair::new(5, &tiny_split(0.5), &mut rng);
        let mut buffer = ReplayBuffer::new(4);
        let fixed: Vec<Vec<f64>> = (0..4).map(|_| random_obs(5, &mut rng)).collect();
        for obs in &fixed {
            buffer.push(Experience {
                obs: obs.clone(),
                action: Action::Up,
                reward: 0.0,
                next_obs: obs.clone(),
            });
        }
        let targets: Vec<Vec<f64>> = fixed.iter().map(|o| pair.combined(o).unwrap()).collect();
        let gap = |pair: &QPair| -> f64 {
            fixed
                .iter()
                .zip(&targets)
                .map(|(o, t)| {
                    let p = pair.permanent.forward(o).unwrap();
                    (0..4).map(|a| (p[a] - t[a]).powi(2)).sum::<f64>()
                })
                .sum()
        };
        let before = gap(&pair);
        consolidate(&mut pair, &buffer, 0.02, 1.0, 400, 4, &mut rng).unwrap();
        let after = gap(&pair);
        assert!(
            after < before * 0.05,
            "regression gap barely moved: {before} -> {after}"
        );
    }

    #[test]
    fn buffer_is_fifo() {
        let mut buffer = ReplayBuffer::new(3);
        for i in 0..5 {
            buffer.push(Experience {
                obs: vec![i as f64],
                action: Action::Up,
                reward: 0.0,
                next_obs: vec![0.0],
            });
        }
        assert_eq!(buffer.len(), 3);
        let first: Vec<f64> = buffer.iter().map(|e| e.obs[0]).collect();
        assert_eq!(first, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn swept_fractions_conserve_the_budget() {
        for fraction in [0.0, 0.1, 0.25, 0.5, 0.75, 1.0] {
            let split = PtSplit::new(vec![128, 256, 64], 52, fraction);
            assert!(verify_budget(&split, 500));
            let mut rng = SeededRng::new(14);
            let pair = QPair::new(16, &split, &mut rng);
            let hidden = pair.permanent.hidden_unit_count() + pair.transient.hidden_unit_count();
            assert_eq!(hidden + split.buffer_capacity, 500);
        }
    }

    #[test]
    fn checkpoint_round_trips_bit_exactly() {
        let mut rng = SeededRng::new(15);
        let pair = QPair::new(9, &tiny_split(0.3), &mut rng);
        let mut buf = Vec::new();
        save_checkpoint(&pair, &mut buf).unwrap();
        let loaded = load_checkpoint(&mut &buf[..]).unwrap();
        assert_eq!(loaded.permanent, pair.permanent);
        assert_eq!(loaded.transient, pair.transient);

        let mut corrupt = buf.clone();
        corrupt[0] = b'X';
        assert!(matches!(
            load_checkpoint(&mut &corrupt[..]),
            Err(PtError::BadCheckpoint(_))
        ));
    }

    #[test]
    fn zero_permanent_fraction_reduces_to_plain_dqn() {
        // With no permanent units the loop must never consolidate: the
        // all-zero permanent network comes out of the run bitwise frozen,
        // so the combined value was the transient alone throughout.
        use crate::jellybean::{JellyBeanWorld, WorldConfig};
        let world_cfg = WorldConfig {
            green_density: 0.05,
            cluster_center_density: 0.006,
            swap_period: 100,
            ..WorldConfig::default()
        };
        let split = PtSplit::new(vec![8, 8], 8, 0.0);
        let config = AgentConfig {
            batch_size: 2,
            consolidation_period: 25,
            consolidation_steps: 5,
            epsilon_decay_steps: 100,
            smoothing_window: 50,
            ..AgentConfig::default()
        };
        let world = JellyBeanWorld::new(world_cfg, 3);
        let run = run_continual(world, &split, &config, 300, 9).unwrap();
        assert_eq!(run.trace.rewards.len(), 300);
        assert!(flatten_parameters(&run.pair.permanent)
            .iter()
            .all(|&v| v == 0.0));
        let obs = vec![0.5; crate::jellybean::OBSERVATION_LEN];
        assert_eq!(run.pair.permanent.forward(&obs).unwrap(), vec![0.0; 4]);
        // And a nonzero fraction with the same schedule does consolidate.
        let split = PtSplit::new(vec![8, 8], 8, 0.5);
        let world = JellyBeanWorld::new(
            WorldConfig {
                green_density: 0.05,
                cluster_center_density: 0.006,
                swap_period: 100,
                ..WorldConfig::default()
            },
            3,
        );
        let run = run_continual(world, &split, &config, 300, 9).unwrap();
        assert!(flatten_parameters(&run.pair.permanent)
            .iter()
            .any(|&v| v != 0.0));
    }

    #[test]
    fn baseline_trace_is_the_bare_random_walk() {
        // Stepping the world directly with the same draw sequence must
        // reproduce the baseline trace reward for reward.
        use crate::jellybean::{JellyBeanWorld, WorldConfig};
        let cfg = WorldConfig {
            green_density: 0.05,
            cluster_center_density: 0.006,
            ..WorldConfig::default()
        };
        let trace = random_baseline_trace(JellyBeanWorld::new(cfg.clone(), 11), 500, 77, 100);
        let mut world = JellyBeanWorld::new(cfg, 11);
        let mut rng = SeededRng::new(77);
        let direct: Vec<f64> = (0..500)
            .map(|_| world.step(Action::ALL[rng.next_index(4)]).1)
            .collect();
        assert_eq!(trace.rewards, direct);
    }

    #[test]
    fn epsilon_schedule_interpolates_and_clamps() {
        let config = AgentConfig {
            epsilon_start: 1.0,
            epsilon_end: 0.1,
            epsilon_decay_steps: 100,
            ..AgentConfig::default()
        };
        assert_eq!(config.epsilon_at(0), 1.0);
        assert!((config.epsilon_at(50) - 0.55).abs() < 1e-12);
        assert_eq!(config.epsilon_at(100), 0.1);
        assert_eq!(config.epsilon_at(10_000), 0.1);
    }

    #[test]
    fn smoothing_window_is_a_trailing_mean() {
        let trace = RewardTrace::from_rewards(vec![1.0, 0.0, 1.0, 1.0], 2);
        assert_eq!(trace.smoothed, vec![1.0, 0.5, 0.5, 1.0]);
    }
}
