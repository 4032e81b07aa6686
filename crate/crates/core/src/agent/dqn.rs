//! Deep Q-learning over circuit architectures.

use std::fmt::Write as _;
use std::sync::Arc;

use log::{debug, info, warn};
use nalgebra::DMatrix;
use rand::Rng;

use super::env::{step_with, EnvState, TerminalCache};
use super::network::{Adam, QNetwork};
use super::replay::{ReplayBuffer, Transition};
use crate::circuit::{
    action_space_with, horizon, ArchitectureEncoding, Circuit, CircuitArchitecture, CnotPolicy, WindowSpec,
    WindowState,
};
use crate::models::ModelSpec;
use crate::optimizer::OptimizeConfig;
use crate::solver::{ground_state, DEFAULT_TOL};
use crate::textfmt::decimal17;
use crate::{rng, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub episodes: usize,
    pub minibatch: usize,
    pub learning_rate: f64,
    /// Learning steps between target-network syncs.
    pub target_update: usize,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of `episodes` over which ε decays linearly.
    pub epsilon_decay: f64,
    pub per_alpha: f64,
    pub per_beta_start: f64,
    pub per_beta_end: f64,
    pub per_eps: f64,
    pub replay_capacity: usize,
    pub hidden: Vec<usize>,
    /// Stop after this many episodes without a better reward (0 disables).
    pub patience: usize,
    /// Gates per layer; `None` means twice the window size.
    pub gates_per_layer: Option<usize>,
    pub cnot_policy: CnotPolicy,
    /// Terminal angle optimization.
    pub optimizer: OptimizeConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 2000,
            minibatch: 120,
            learning_rate: 1e-4,
            target_update: 100,
            gamma: 0.99,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay: 0.5,
            per_alpha: 0.6,
            per_beta_start: 0.4,
            per_beta_end: 1.0,
            per_eps: 1e-3,
            replay_capacity: 100_000,
            hidden: vec![512; 6],
            patience: 200,
            gates_per_layer: None,
            cnot_policy: CnotPolicy::Adjacent,
            optimizer: OptimizeConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.into()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if self.episodes == 0 || self.minibatch == 0 || self.target_update == 0 || self.replay_capacity == 0 {
            return bad("episodes, minibatch, target_update and replay_capacity must be positive");
        }
        if !(self.learning_rate > 0.0) || !(self.per_eps > 0.0) || !(self.per_alpha >= 0.0) {
            return bad("learning_rate, per_eps must be positive and per_alpha non-negative");
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) || !(0.0..=1.0).contains(&self.epsilon_end) {
            return bad("epsilon values must lie in [0, 1]");
        }
        if !(self.epsilon_decay > 0.0) || !(self.per_beta_start >= 0.0) || !(self.per_beta_end >= 0.0) {
            return bad("epsilon_decay must be positive and PER betas non-negative");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layers must be non-empty with positive widths");
        }
        if self.gates_per_layer == Some(0) {
            return bad("gates_per_layer must be positive");
        }
        self.optimizer.validate()
    }

    /// ε for a zero-based episode index.
    pub fn epsilon(&self, episode: usize) -> f64 {
        let span = self.epsilon_decay * self.episodes as f64;
        let x = (episode as f64 / span).min(1.0);
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * x
    }

    /// PER β, annealed linearly over the run.
    pub fn beta(&self, episode: usize) -> f64 {
        let x = if self.episodes > 1 { episode as f64 / (self.episodes - 1) as f64 } else { 1.0 };
        self.per_beta_start + (self.per_beta_end - self.per_beta_start) * x.min(1.0)
    }
}

/// Q-values for one encoded state.
pub fn q_forward(net: &QNetwork<f32>, s: &ArchitectureEncoding) -> Result<Vec<f32>> {
    net.forward(s.as_slice())
}

/// Lowest index among the maxima.
pub fn argmax(q: &[f32]) -> usize {
    let mut best = 0;
    for (i, v) in q.iter().enumerate() {
        if *v > q[best] {
            best = i;
        }
    }
    best
}

/// ε-greedy action.
pub fn select_action(net: &QNetwork<f32>, s: &ArchitectureEncoding, epsilon: f64, rng: &mut impl Rng) -> Result<usize> {
    if rng.random::<f64>() < epsilon {
        return Ok(rng.random_range(0..net.output_dim()));
    }
    Ok(argmax(&q_forward(net, s)?))
}

/// Minibatch in network layout (one column per transition).
#[derive(Clone, Debug)]
pub struct Batch {
    pub states: DMatrix<f32>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub next_states: DMatrix<f32>,
    pub done: Vec<bool>,
    pub weights: Vec<f64>,
}

/// One-hot columns for action prefixes, `horizon` slots of `n_actions + 1`.
pub fn encode_prefixes<'a>(
    prefixes: impl ExactSizeIterator<Item = &'a [u16]>,
    horizon: usize,
    n_actions: usize,
) -> DMatrix<f32> {
    let width = n_actions + 1;
    let mut m = DMatrix::zeros(horizon * width, prefixes.len());
    for (j, p) in prefixes.enumerate() {
        for slot in 0..horizon {
            let hot = p.get(slot).map_or(n_actions, |&a| a as usize);
            m[(slot * width + hot, j)] = 1.0;
        }
    }
    m
}

/// Importance-weighted TD step on `net`; returns `(loss, y − Q(s, a))`.
pub fn train_step(
    net: &mut QNetwork<f32>,
    target: &QNetwork<f32>,
    batch: &Batch,
    gamma: f64,
    adam: &mut Adam<f32>,
) -> Result<(f64, Vec<f64>)> {
    let n = batch.actions.len();
    if n == 0 {
        return Err(Error::Config("empty minibatch".into()));
    }
    let q_next = target.forward_batch(&batch.next_states)?;
    let targets: Vec<f32> = (0..n)
        .map(|j| {
            let boot = if batch.done[j] {
                0.0
            } else {
                gamma * q_next.column(j).max() as f64
            };
            (batch.rewards[j] + boot) as f32
        })
        .collect();
    let weights: Vec<f32> = batch.weights.iter().map(|&w| w as f32).collect();
    let (loss, grad, taken) = net.loss_gradient(&batch.states, &batch.actions, &targets, &weights)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("training loss {loss}")));
    }
    adam.step(net, &grad);
    let td = targets.iter().zip(&taken).map(|(y, q)| (*y - *q) as f64).collect();
    Ok((loss as f64, td))
}

/// Online and target networks with the optimizer state.
#[derive(Clone, Debug)]
pub struct Learner {
    online: QNetwork<f32>,
    target: QNetwork<f32>,
    adam: Adam<f32>,
    gamma: f64,
    sync_period: usize,
    steps: usize,
}

impl Learner {
    pub fn new(net: QNetwork<f32>, learning_rate: f64, gamma: f64, sync_period: usize) -> Self {
        Self {
            adam: Adam::new(&net, learning_rate),
            target: net.clone(),
            online: net,
            gamma,
            sync_period,
            steps: 0,
        }
    }

    pub fn online(&self) -> &QNetwork<f32> {
        &self.online
    }

    pub fn target(&self) -> &QNetwork<f32> {
        &self.target
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// One learning step; the target copies the online net every `sync_period` steps.
    pub fn learn(&mut self, batch: &Batch) -> Result<(f64, Vec<f64>)> {
        let out = train_step(&mut self.online, &self.target, batch, self.gamma, &mut self.adam)?;
        self.steps += 1;
        if self.steps.is_multiple_of(self.sync_period) {
            self.target = self.online.clone();
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub reward: f64,
    /// Optimized terminal entropy (NaN for a failed episode).
    pub s_rl: f64,
    pub epsilon: f64,
    /// Mean loss over the episode's learning steps (NaN when none ran).
    pub loss_mean: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Best circuit ever evaluated, with its optimized angles.
    pub best: Circuit,
    pub best_reward: f64,
    pub best_entropy: f64,
    /// Untouched target entropy at the training coupling.
    pub s0: f64,
    pub log: Vec<EpisodeRecord>,
    pub failed_episodes: usize,
    pub learn_steps: usize,
}

impl TrainOutcome {
    pub fn rewards(&self) -> Vec<f64> {
        self.log.iter().map(|r| r.reward).collect()
    }
}

/// CSV with header `episode,reward,S_RL,epsilon,loss_mean`.
pub fn training_log_csv(log: &[EpisodeRecord]) -> String {
    let mut out = String::from("episode,reward,S_RL,epsilon,loss_mean\n");
    for r in log {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.episode,
            decimal17(r.reward),
            decimal17(r.s_rl),
            decimal17(r.epsilon),
            decimal17(r.loss_mean)
        );
    }
    out
}

/// Trains one agent on the ground state of `model` and returns the best circuit.
pub fn train_agent(model: &ModelSpec, window: WindowSpec, layers: usize, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if layers == 0 {
        return Err(Error::Config("layers must be positive".into()));
    }
    if window.n_sites() != model.n_sites() {
        return Err(Error::DimensionMismatch {
            expected: model.n_sites(),
            got: window.n_sites(),
        });
    }
    let ground = ground_state(model, DEFAULT_TOL, rng::derive_seed(cfg.seed, "solver"))?;
    let ws = Arc::new(WindowState::from_state(&ground.state, &window)?);
    train_on_window(ws, layers, cfg)
}

/// As [`train_agent`], on a precomputed window state.
pub fn train_on_window(ws: Arc<WindowState>, layers: usize, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let window = *ws.window();
    let space = Arc::new(action_space_with(&window, cfg.cnot_policy));
    let t_max = horizon(&window, layers, cfg.gates_per_layer);
    let n_actions = space.len();
    let input = ArchitectureEncoding::len_for(t_max, n_actions);

    let mut init_rng = rng::stream(cfg.seed, "agent-init");
    let mut policy_rng = rng::stream(cfg.seed, "policy");
    let mut per_rng = rng::stream(cfg.seed, "per");
    let net = QNetwork::<f32>::new(input, &cfg.hidden, n_actions, &mut init_rng);
    let mut learner = Learner::new(net, cfg.learning_rate, cfg.gamma, cfg.target_update);
    let mut buffer = ReplayBuffer::new(cfg.replay_capacity, cfg.per_alpha, cfg.per_eps)?;
    let mut cache = TerminalCache::default();

    let start = EnvState::new(ws.clone(), space.clone(), t_max)?;
    let s0 = start.s0;
    let mut best: Option<(Circuit, f64, f64)> = None;
    let mut log = Vec::with_capacity(cfg.episodes);
    let mut failed = 0;
    let mut stagnant = 0;

    for episode in 0..cfg.episodes {
        let epsilon = cfg.epsilon(episode);
        let beta = cfg.beta(episode);
        let mut env = start.clone();
        let mut losses = Vec::new();
        let mut record = EpisodeRecord {
            episode,
            reward: 0.0,
            s_rl: f64::NAN,
            epsilon,
            loss_mean: f64::NAN,
        };
        let mut improved = false;
        while !env.is_done() {
            let s = env.encoding()?;
            let action = select_action(learner.online(), &s, epsilon, &mut policy_rng)?;
            let prefix = env.actions.clone();
            let step = step_with(&env, action, |arch: &CircuitArchitecture| {
                let mut key = prefix.clone();
                key.push(action as u16);
                cache.evaluate(&env, arch, &key, &cfg.optimizer)
            });
            let (next, reward, done) = match step {
                Ok(st) => {
                    if let Some(res) = &st.result {
                        record.reward = st.reward;
                        record.s_rl = res.entropy;
                        if best.as_ref().is_none_or(|b| st.reward > b.1 + 1e-9) {
                            let circuit = Circuit::new(st.state.arch.clone(), res.params.clone())?;
                            best = Some((circuit, st.reward, res.entropy));
                            improved = true;
                        }
                    }
                    (st.state, st.reward, st.done)
                }
                Err(e) => {
                    // a failed terminal evaluation scores zero and ends the episode
                    warn!("episode {episode}: terminal evaluation failed: {e}");
                    failed += 1;
                    let mut next = env.clone();
                    next.arch.push(*space.get(action).expect("action in range"))?;
                    next.actions.push(action as u16);
                    (next, 0.0, true)
                }
            };
            buffer.push(Transition {
                prefix,
                action,
                reward,
                done,
            });
            if buffer.len() >= cfg.minibatch {
                let sample = buffer.per_sample(cfg.minibatch, beta, &mut per_rng)?;
                let items: Vec<&Transition> = sample.indices.iter().map(|&i| buffer.get(i).expect("sampled slot")).collect();
                let next_prefixes: Vec<Vec<u16>> = items.iter().map(|t| t.next_prefix()).collect();
                let batch = Batch {
                    states: encode_prefixes(items.iter().map(|t| t.prefix.as_slice()), t_max, n_actions),
                    actions: items.iter().map(|t| t.action).collect(),
                    rewards: items.iter().map(|t| t.reward).collect(),
                    next_states: encode_prefixes(next_prefixes.iter().map(|p| p.as_slice()), t_max, n_actions),
                    done: items.iter().map(|t| t.done).collect(),
                    weights: sample.weights,
                };
                let (loss, td) = learner.learn(&batch)?;
                buffer.per_update(&sample.indices, &td);
                losses.push(loss);
            }
            env = next;
        }
        if !losses.is_empty() {
            record.loss_mean = losses.iter().sum::<f64>() / losses.len() as f64;
        }
        debug!(
            "episode {episode}: reward {:.4} S_RL {:.4} ε {:.3}",
            record.reward, record.s_rl, epsilon
        );
        log.push(record);
        stagnant = if improved { 0 } else { stagnant + 1 };
        if cfg.patience > 0 && stagnant >= cfg.patience {
            info!("stopping after {} episodes without improvement", cfg.patience);
            break;
        }
    }

    let (best, best_reward, best_entropy) = best.ok_or_else(|| Error::NonFinite("every episode failed".into()))?;
    info!(
        "trained {} episodes: best reward {best_reward:.4}, S_RL {best_entropy:.6} (S0 {s0:.6}), {} cached evaluations",
        log.len(),
        cache.len()
    );
    Ok(TrainOutcome {
        best,
        best_reward,
        best_entropy,
        s0,
        log,
        failed_episodes: failed,
        learn_steps: learner.steps(),
    })
}
