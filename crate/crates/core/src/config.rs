//! Flat `key = value` run configuration.

use std::collections::BTreeMap;

use crate::agent::TrainConfig;
use crate::circuit::{CnotPolicy, WindowSpec};
use crate::models::{ModelRegistry, ModelSpec};
use crate::optimizer::{InitScheme, OptimizeConfig};
use crate::scan::{parse_grid, Reopt};
use crate::{Error, Result, ARTIFACT_VERSION};

/// Every accepted key with its default.
const KEYS: &[(&str, &str)] = &[
    ("model", "tfim"),
    ("n", "8"),
    ("coupling", "1.0"),
    ("a", "0.5"),
    ("b", "1.5"),
    ("grid", "0.5:0.1:1.5"),
    ("sizes", "10,12,14"),
    ("target", "0"),
    ("radius", "1"),
    ("layers", "2"),
    ("gates_per_layer", "auto"),
    ("cnot_policy", "adjacent"),
    ("window", "all"),
    ("seed", "0"),
    ("seeds", ""),
    ("circuit_a", ""),
    ("circuit_b", ""),
    ("init_scheme", "pi"),
    ("half_width", "0.78539816339744828"),
    ("restarts", "auto"),
    ("gradient_step", "1e-5"),
    ("grad_tol", "1e-8"),
    ("max_iters", "200"),
    ("reopt", "warm"),
    ("episodes", "2000"),
    ("minibatch", "120"),
    ("learning_rate", "1e-4"),
    ("target_update", "100"),
    ("gamma", "0.99"),
    ("epsilon_start", "1.0"),
    ("epsilon_end", "0.05"),
    ("epsilon_decay", "0.5"),
    ("per_alpha", "0.6"),
    ("per_beta_start", "0.4"),
    ("per_beta_end", "1.0"),
    ("per_eps", "1e-3"),
    ("replay_capacity", "100000"),
    ("hidden", "512,512,512,512,512,512"),
    ("patience", "200"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

impl RunConfig {
    pub fn keys() -> impl Iterator<Item = &'static str> {
        KEYS.iter().map(|(k, _)| *k)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.trim().to_string();
                Ok(())
            }
            None => Err(Error::Unknown {
                kind: "config key",
                name: key.into(),
            }),
        }
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            self.set(k, v).map_err(|e| Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    /// Fully resolved configuration, led by the version line.
    pub fn to_text(&self) -> String {
        let mut out = format!("# {ARTIFACT_VERSION}\n");
        for (k, v) in &self.values {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("unregistered key {key}"))
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key);
        v.parse()
            .map_err(|_| Error::Config(format!("`{key} = {v}`: cannot parse value")))
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        let v: f64 = self.parsed(key)?;
        if !v.is_finite() {
            return Err(Error::Config(format!("`{key}` must be finite")));
        }
        Ok(v)
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        self.parsed(key)
    }

    pub fn u64(&self, key: &str) -> Result<u64> {
        self.parsed(key)
    }

    fn optional_usize(&self, key: &str) -> Result<Option<usize>> {
        match self.get(key) {
            "auto" | "" => Ok(None),
            _ => self.usize(key).map(Some),
        }
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Vec<T>> {
        self.get(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| Error::Config(format!("`{key}`: bad list entry `{s}`"))))
            .collect()
    }

    /// Optional path-like value (empty means unset).
    pub fn path(&self, key: &str) -> Option<&str> {
        Some(self.get(key)).filter(|s| !s.is_empty())
    }

    /// Model at `coupling`.
    pub fn model_spec(&self) -> Result<ModelSpec> {
        let model = ModelRegistry::default().get(self.get("model"))?;
        ModelSpec::new(model, self.usize("n")?, self.f64("coupling")?)
    }

    pub fn window(&self) -> Result<WindowSpec> {
        WindowSpec::new(self.usize("n")?, self.usize("target")?, self.usize("radius")?)
    }

    pub fn grid(&self) -> Result<Vec<f64>> {
        parse_grid(self.get("grid"))
    }

    pub fn sizes(&self) -> Result<Vec<usize>> {
        self.list("sizes")
    }

    /// Training seeds: `seeds` when set, else `seed`.
    pub fn seeds(&self) -> Result<Vec<u64>> {
        let s: Vec<u64> = self.list("seeds")?;
        if s.is_empty() {
            Ok(vec![self.u64("seed")?])
        } else {
            Ok(s)
        }
    }

    pub fn init_scheme(&self) -> Result<InitScheme> {
        let scheme: InitScheme = self.get("init_scheme").parse()?;
        Ok(match scheme {
            InitScheme::UniformAroundMean { mean, .. } => {
                let half_width = self.f64("half_width")?;
                if !(half_width > 0.0) {
                    return Err(Error::Config("half_width must be positive".into()));
                }
                InitScheme::UniformAroundMean { mean, half_width }
            }
            s => s,
        })
    }

    pub fn optimize_config(&self) -> Result<OptimizeConfig> {
        let scheme = self.init_scheme()?;
        let cfg = OptimizeConfig {
            init_scheme: scheme,
            gradient_step: self.f64("gradient_step")?,
            grad_tol: self.f64("grad_tol")?,
            max_iters: self.usize("max_iters")?,
            restarts: self.optional_usize("restarts")?.unwrap_or(scheme.default_restarts()),
            seed: crate::rng::derive_seed(self.u64("seed")?, "optimizer"),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Scan-time angle refresh.
    pub fn reopt(&self) -> Result<Reopt> {
        let opt = self.optimize_config()?;
        match self.get("reopt") {
            "off" => Ok(Reopt::Off),
            "warm" => Ok(Reopt::WarmStart(opt)),
            "fresh" => Ok(Reopt::Fresh(opt)),
            other => Err(Error::Unknown {
                kind: "reopt mode",
                name: other.into(),
            }),
        }
    }

    /// Training settings; the terminal optimizer always starts from π.
    pub fn train_config(&self) -> Result<TrainConfig> {
        let mut opt = self.optimize_config()?;
        opt.init_scheme = InitScheme::AllPi;
        opt.restarts = self.optional_usize("restarts")?.unwrap_or(1);
        let cfg = TrainConfig {
            episodes: self.usize("episodes")?,
            minibatch: self.usize("minibatch")?,
            learning_rate: self.f64("learning_rate")?,
            target_update: self.usize("target_update")?,
            gamma: self.f64("gamma")?,
            epsilon_start: self.f64("epsilon_start")?,
            epsilon_end: self.f64("epsilon_end")?,
            epsilon_decay: self.f64("epsilon_decay")?,
            per_alpha: self.f64("per_alpha")?,
            per_beta_start: self.f64("per_beta_start")?,
            per_beta_end: self.f64("per_beta_end")?,
            per_eps: self.f64("per_eps")?,
            replay_capacity: self.usize("replay_capacity")?,
            hidden: self.list("hidden")?,
            patience: self.usize("patience")?,
            gates_per_layer: self.optional_usize("gates_per_layer")?,
            cnot_policy: self.get("cnot_policy").parse::<CnotPolicy>()?,
            optimizer: opt,
            seed: self.u64("seed")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
