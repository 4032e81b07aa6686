//! Circuit-design agent: environment, Q-network, prioritized replay and the
//! training loop.

mod dqn;
mod env;
mod network;
mod replay;

pub use dqn::{
    argmax, encode_prefixes, q_forward, select_action, train_agent, train_on_window, train_step, training_log_csv,
    Batch, EpisodeRecord, Learner, TrainConfig, TrainOutcome,
};
pub use env::{env_step, terminal_reward, EnvState, Step, TerminalCache};
pub use network::{Adam, Gradient, NetScalar, QNetwork};
pub use replay::{ReplayBuffer, Sample, Transition};
