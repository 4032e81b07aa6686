//! Circuit-building episodes: one gate per step, delayed reward at the horizon.

use std::collections::HashMap;
use std::sync::Arc;

use crate::circuit::{encode, ActionSpace, ArchitectureEncoding, CircuitArchitecture, WindowState};
use crate::optimizer::{minimize_window_entropy, OptimizeConfig, OptimizeResult};
use crate::{Error, Result};

/// Terminal reward: `(S₀ − S_RL) / S₀` when the circuit improves on `S₀`, else 0.
pub fn terminal_reward(s0: f64, s_rl: f64) -> f64 {
    if !(s_rl < s0) || !s_rl.is_finite() {
        0.0
    } else {
        ((s0 - s_rl) / s0).clamp(0.0, 1.0)
    }
}

/// Episode state: the architecture so far plus the fixed ground-state data.
#[derive(Clone, Debug)]
pub struct EnvState {
    pub arch: CircuitArchitecture,
    /// Action indices in order (`arch` rebuilt from these).
    pub actions: Vec<u16>,
    pub ground: Arc<WindowState>,
    pub space: Arc<ActionSpace>,
    /// Untouched target entropy.
    pub s0: f64,
}

impl EnvState {
    pub fn new(ground: Arc<WindowState>, space: Arc<ActionSpace>, horizon: usize) -> Result<Self> {
        if ground.window() != space.window() {
            return Err(Error::InvalidWindow("ground state and action space disagree".into()));
        }
        if horizon == 0 {
            return Err(Error::Config("horizon must be positive".into()));
        }
        let s0 = ground.base_entropy();
        Ok(Self {
            arch: CircuitArchitecture::empty(*space.window(), horizon),
            actions: Vec::new(),
            ground,
            space,
            s0,
        })
    }

    pub fn t(&self) -> usize {
        self.actions.len()
    }

    pub fn horizon(&self) -> usize {
        self.arch.horizon()
    }

    pub fn is_done(&self) -> bool {
        self.t() >= self.horizon()
    }

    pub fn encoding(&self) -> Result<ArchitectureEncoding> {
        encode(&self.arch, &self.space)
    }

    fn appended(&self, action: usize) -> Result<Self> {
        if self.is_done() {
            return Err(Error::EpisodeDone);
        }
        let gate = *self.space.get(action).ok_or_else(|| {
            Error::InvalidGate(format!("action {action} outside 0..{}", self.space.len()))
        })?;
        let mut next = self.clone();
        next.arch.push(gate)?;
        next.actions.push(action as u16);
        Ok(next)
    }
}

/// Outcome of one step.
#[derive(Clone, Debug)]
pub struct Step {
    pub state: EnvState,
    pub reward: f64,
    pub done: bool,
    /// Optimized terminal result (terminal steps only).
    pub result: Option<OptimizeResult>,
}

/// Appends `action`; at the horizon, optimizes the angles and scores the circuit.
pub fn env_step(env: &EnvState, action: usize, opt: &OptimizeConfig) -> Result<(EnvState, f64, bool)> {
    let step = step_with(env, action, |arch| minimize_window_entropy(&env.ground, arch, opt))?;
    Ok((step.state, step.reward, step.done))
}

pub(crate) fn step_with(
    env: &EnvState,
    action: usize,
    evaluate: impl FnOnce(&CircuitArchitecture) -> Result<OptimizeResult>,
) -> Result<Step> {
    let state = env.appended(action)?;
    if !state.is_done() {
        return Ok(Step {
            state,
            reward: 0.0,
            done: false,
            result: None,
        });
    }
    let result = evaluate(&state.arch)?;
    let reward = terminal_reward(state.s0, result.entropy);
    Ok(Step {
        state,
        reward,
        done: true,
        result: Some(result),
    })
}

/// Memo of terminal optimizations keyed by action sequence.
#[derive(Debug, Default)]
pub struct TerminalCache {
    map: HashMap<Vec<u16>, OptimizeResult>,
    pub hits: usize,
}

impl TerminalCache {
    pub fn evaluate(
        &mut self,
        env: &EnvState,
        arch: &CircuitArchitecture,
        actions: &[u16],
        opt: &OptimizeConfig,
    ) -> Result<OptimizeResult> {
        if let Some(r) = self.map.get(actions) {
            self.hits += 1;
            return Ok(r.clone());
        }
        let r = minimize_window_entropy(&env.ground, arch, opt)?;
        self.map.insert(actions.to_vec(), r.clone());
        Ok(r)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{action_space, WindowSpec};
    use crate::models::ModelSpec;
    use crate::solver::ground_state;

    #[test]
    fn reward_boundaries() {
        assert_eq!(terminal_reward(0.8, 0.4), 0.5);
        assert_eq!(terminal_reward(0.8, 0.8), 0.0);
        assert_eq!(terminal_reward(0.8, 0.9), 0.0);
        assert_eq!(terminal_reward(0.8, 0.0), 1.0);
        assert_eq!(terminal_reward(0.0, 0.0), 0.0);
        assert_eq!(terminal_reward(0.5, f64::NAN), 0.0);
    }

    fn env(horizon: usize) -> EnvState {
        let g = ground_state(&ModelSpec::tfim(8, 1.5).unwrap(), 1e-10, 0).unwrap();
        let w = WindowSpec::new(8, 0, 1).unwrap();
        let ws = WindowState::from_state(&g.state, &w).unwrap();
        EnvState::new(Arc::new(ws), Arc::new(action_space(&w)), horizon).unwrap()
    }

    #[test]
    fn rewards_are_delayed_to_the_horizon() {
        let opt = OptimizeConfig::default();
        let mut e = env(3);
        assert!(e.s0 > 0.1);
        for (k, a) in [12usize, 4, 13].into_iter().enumerate() {
            let (next, r, done) = env_step(&e, a, &opt).unwrap();
            assert_eq!(done, k == 2);
            if !done {
                assert_eq!(r, 0.0);
            } else {
                assert!((0.0..=1.0).contains(&r));
            }
            e = next;
        }
        assert_eq!(e.t(), 3);
        assert!(matches!(env_step(&e, 0, &opt), Err(Error::EpisodeDone)));
        assert!(env_step(&env(3), 99, &opt).is_err());
    }

    #[test]
    fn terminal_reward_matches_its_definition() {
        let opt = OptimizeConfig::default();
        let e = env(2);
        let (e, _, _) = env_step(&e, 12, &opt).unwrap();
        let step = step_with(&e, 1, |arch| minimize_window_entropy(&e.ground, arch, &opt)).unwrap();
        let s = step.result.unwrap().entropy;
        assert_eq!(step.reward, terminal_reward(e.s0, s));
        // a fabricated evaluation at half the baseline entropy scores 0.5
        let half = step_with(&e, 1, |_| {
            Ok(OptimizeResult {
                params: vec![0.0],
                entropy: e.s0 / 2.0,
                initial_entropy: e.s0,
                iterations: 0,
                converged: true,
            })
        })
        .unwrap();
        assert!((half.reward - 0.5).abs() < 1e-15);
    }
}
