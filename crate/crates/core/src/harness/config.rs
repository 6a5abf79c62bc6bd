//! Experiment configuration and its flat `key = value` file format.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::agents::{DqnConfig, EpsilonSchedule, ResetDepth, SafeAcConfig, TargetUpdate};
use crate::ensemble::TemperatureMode;
use crate::envs::{default_cost_budget, EnvKind, EnvSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    /// Single DQN, never reset.
    Base,
    /// Single DQN with periodic full resets.
    Sr,
    /// DQN ensemble with staggered resets and adaptive composition.
    Rde,
    BaseSafe,
    SrSafe,
    RdeSafe,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Base,
        Algorithm::Sr,
        Algorithm::Rde,
        Algorithm::BaseSafe,
        Algorithm::SrSafe,
        Algorithm::RdeSafe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Base => "base",
            Algorithm::Sr => "sr",
            Algorithm::Rde => "rde",
            Algorithm::BaseSafe => "base_safe",
            Algorithm::SrSafe => "sr_safe",
            Algorithm::RdeSafe => "rde_safe",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "vanilla_reset" => Some(Algorithm::Sr),
            "vanilla_reset_safe" => Some(Algorithm::SrSafe),
            _ => Algorithm::ALL.into_iter().find(|a| a.name() == s),
        }
    }

    pub fn is_safe(self) -> bool {
        matches!(self, Algorithm::BaseSafe | Algorithm::SrSafe | Algorithm::RdeSafe)
    }

    pub fn resets(self) -> bool {
        !matches!(self, Algorithm::Base | Algorithm::BaseSafe)
    }

    pub fn is_ensemble(self) -> bool {
        matches!(self, Algorithm::Rde | Algorithm::RdeSafe)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Everything a run depends on. Two runs with equal configs produce
/// identical logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub env: EnvSpec,
    pub algorithm: Algorithm,
    /// Ensemble size; forced to 1 for the single-agent algorithms.
    pub n_agents: usize,
    pub replay_ratio: f64,
    /// Reset interval for `rr = 1, N = 1`, in gradient updates.
    pub base_reset_interval: u64,
    pub reset_depth: ResetDepth,
    pub beta: f64,
    pub kappa: f64,
    pub temperature_mode: TemperatureMode,
    pub alpha_risk: f64,
    /// CVaR budget `d`; `None` derives it from the episode length.
    pub cost_budget: Option<f64>,
    pub gamma: f64,
    pub lr: f64,
    pub hidden: Vec<usize>,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Transitions collected before the first update.
    pub learning_starts: u64,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_decay_steps: u64,
    /// Hard target-network period for DQN, in updates.
    pub target_period: u64,
    /// Polyak rate for the safe critics.
    pub tau: f64,
    pub lambda_lr: f64,
    /// Every ensemble member draws its own minibatch unless set.
    pub shared_minibatch: bool,
    pub total_env_steps: u64,
    pub eval_every: u64,
    pub eval_episodes: usize,
    /// Evaluation points inspected after each reset by the collapse metric.
    pub collapse_window: usize,
    /// Keep every training selection distribution in the log.
    pub trace_selection: bool,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            env: EnvSpec::four_rooms(9),
            algorithm: Algorithm::Rde,
            n_agents: 2,
            replay_ratio: 1.0,
            base_reset_interval: 40_000,
            reset_depth: ResetDepth::All,
            beta: 50.0,
            kappa: 0.8,
            temperature_mode: TemperatureMode::NormalizedLogits,
            alpha_risk: 0.5,
            cost_budget: None,
            gamma: 0.9,
            lr: 1e-3,
            hidden: vec![64, 64],
            batch_size: 32,
            buffer_capacity: 100_000,
            learning_starts: 0,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_decay_steps: 10_000,
            target_period: 500,
            tau: 0.005,
            lambda_lr: 0.01,
            shared_minibatch: false,
            total_env_steps: 200_000,
            eval_every: 2_000,
            eval_episodes: 20,
            collapse_window: 10,
            trace_selection: false,
            seed: 0,
        }
    }
}

/// Keys accepted in config files, in the order the resolved config lists them.
pub const CONFIG_KEYS: &[&str] = &[
    "env",
    "env_size",
    "max_steps",
    "layout_seed",
    "random_goal",
    "algorithm",
    "n_agents",
    "replay_ratio",
    "base_reset_interval",
    "reset_depth",
    "beta",
    "kappa",
    "temperature_mode",
    "alpha_risk",
    "cost_budget",
    "gamma",
    "lr",
    "hidden",
    "batch_size",
    "buffer_capacity",
    "learning_starts",
    "eps_start",
    "eps_end",
    "eps_decay_steps",
    "target_period",
    "tau",
    "lambda_lr",
    "shared_minibatch",
    "total_env_steps",
    "eval_every",
    "eval_episodes",
    "collapse_window",
    "trace_selection",
    "seed",
];

/// Keys whose value is itself a list, so a list does not make them a sweep axis.
const LIST_KEYS: &[&str] = &["hidden"];

fn parse_num<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{raw}` as a number")))
}

fn parse_bool(key: &str, raw: &str) -> Result<bool> {
    match raw {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::config(key, format!("expected true or false, got `{raw}`"))),
    }
}

impl ExperimentConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &ConfigValue) -> Result<()> {
        if LIST_KEYS.contains(&key) {
            let items = match value {
                ConfigValue::List(items) => items.clone(),
                ConfigValue::Scalar(s) => vec![s.clone()],
            };
            self.hidden = items
                .iter()
                .map(|s| parse_num(key, s))
                .collect::<Result<Vec<usize>>>()?;
            return Ok(());
        }
        let raw = match value {
            ConfigValue::Scalar(s) => s.as_str(),
            ConfigValue::List(_) => {
                if !CONFIG_KEYS.contains(&key) {
                    return Err(Error::config(key, "unknown key"));
                }
                return Err(Error::config(key, "lists are only allowed in sweeps"));
            }
        };
        match key {
            "env" => {
                let kind = EnvKind::parse(raw)
                    .ok_or_else(|| Error::config(key, format!("unknown environment `{raw}`")))?;
                let defaults = match kind {
                    EnvKind::Chain => EnvSpec::chain(self.env.size),
                    EnvKind::FourRooms => EnvSpec::four_rooms(self.env.size),
                    EnvKind::HazardGrid => EnvSpec::hazard_grid(self.env.size),
                };
                self.env.kind = kind;
                self.env.random_goal = defaults.random_goal;
            }
            "env_size" => self.env.size = parse_num(key, raw)?,
            "max_steps" => self.env.max_steps = parse_num(key, raw)?,
            "layout_seed" => self.env.layout_seed = parse_num(key, raw)?,
            "random_goal" => self.env.random_goal = parse_bool(key, raw)?,
            "algorithm" => {
                self.algorithm = Algorithm::parse(raw)
                    .ok_or_else(|| Error::config(key, format!("unknown algorithm `{raw}`")))?
            }
            "n_agents" => self.n_agents = parse_num(key, raw)?,
            "replay_ratio" => self.replay_ratio = parse_num(key, raw)?,
            "base_reset_interval" => self.base_reset_interval = parse_num(key, raw)?,
            "reset_depth" => {
                self.reset_depth = if raw == "all" {
                    ResetDepth::All
                } else {
                    ResetDepth::Layers(parse_num(key, raw)?)
                }
            }
            "beta" => self.beta = parse_num(key, raw)?,
            "kappa" => self.kappa = parse_num(key, raw)?,
            "temperature_mode" => {
                self.temperature_mode = TemperatureMode::parse(raw)
                    .ok_or_else(|| Error::config(key, format!("unknown mode `{raw}`")))?
            }
            "alpha_risk" => self.alpha_risk = parse_num(key, raw)?,
            "cost_budget" => {
                self.cost_budget = if raw == "auto" {
                    None
                } else {
                    Some(parse_num(key, raw)?)
                }
            }
            "gamma" => self.gamma = parse_num(key, raw)?,
            "lr" => self.lr = parse_num(key, raw)?,
            "batch_size" => self.batch_size = parse_num(key, raw)?,
            "buffer_capacity" => self.buffer_capacity = parse_num(key, raw)?,
            "learning_starts" => self.learning_starts = parse_num(key, raw)?,
            "eps_start" => self.eps_start = parse_num(key, raw)?,
            "eps_end" => self.eps_end = parse_num(key, raw)?,
            "eps_decay_steps" => self.eps_decay_steps = parse_num(key, raw)?,
            "target_period" => self.target_period = parse_num(key, raw)?,
            "tau" => self.tau = parse_num(key, raw)?,
            "lambda_lr" => self.lambda_lr = parse_num(key, raw)?,
            "shared_minibatch" => self.shared_minibatch = parse_bool(key, raw)?,
            "total_env_steps" => self.total_env_steps = parse_num(key, raw)?,
            "eval_every" => self.eval_every = parse_num(key, raw)?,
            "eval_episodes" => self.eval_episodes = parse_num(key, raw)?,
            "collapse_window" => self.collapse_window = parse_num(key, raw)?,
            "trace_selection" => self.trace_selection = parse_bool(key, raw)?,
            "seed" => self.seed = parse_num(key, raw)?,
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    /// Parses a config document with no sweep axes.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let doc = ConfigDoc::parse(text)?;
        let mut cfg = ExperimentConfig::default();
        for (key, value) in doc.entries() {
            cfg.set(key, value)?;
        }
        cfg.resolve()
    }

    /// Materializes derived values and checks every invariant.
    pub fn resolve(mut self) -> Result<Self> {
        if !self.algorithm.is_ensemble() {
            self.n_agents = 1;
        }
        self.env.discount = self.gamma;
        if self.cost_budget.is_none() {
            self.cost_budget = Some(default_cost_budget(self.env.max_steps));
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| Err(Error::config(key, msg));
        if let Err(e) = self.env.validate() {
            return bad("env", &e.to_string());
        }
        if self.algorithm.is_ensemble() && self.n_agents < 2 {
            return bad("n_agents", "the ensemble algorithms need at least 2 agents");
        }
        if !(self.replay_ratio > 0.0 && self.replay_ratio.is_finite()) {
            return bad("replay_ratio", "must be positive");
        }
        if self.algorithm.resets() {
            if self.base_reset_interval == 0 {
                return bad("base_reset_interval", "must be positive");
            }
            if let Err(e) = self.reset_interval() {
                return bad("base_reset_interval", &e.to_string());
            }
        }
        if !self.beta.is_finite() {
            return bad("beta", "must be finite");
        }
        if !(0.0..=1.0).contains(&self.kappa) {
            return bad("kappa", "must lie in [0, 1]");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be positive");
        }
        if self.buffer_capacity == 0 {
            return bad("buffer_capacity", "must be positive");
        }
        if self.hidden.contains(&0) {
            return bad("hidden", "layer widths must be positive");
        }
        if let ResetDepth::Layers(d) = self.reset_depth {
            if d == 0 || d > self.hidden.len() + 1 {
                return bad("reset_depth", "must be `all` or between 1 and the number of layers");
            }
        }
        if self.eval_every == 0 {
            return bad("eval_every", "must be positive");
        }
        if self.eval_episodes == 0 {
            return bad("eval_episodes", "must be positive");
        }
        if self.collapse_window == 0 {
            return bad("collapse_window", "must be positive");
        }
        if let Err(e) = self.epsilon_schedule() {
            return bad("eps_start", &e.to_string());
        }
        if self.algorithm.is_safe() {
            if let Err(e) = self.safe_config().validate() {
                return bad("alpha_risk", &e.to_string());
            }
        } else if let Err(e) = self.dqn_config().validate() {
            return bad("lr", &e.to_string());
        }
        Ok(())
    }

    /// Env-step gap between consecutive reset events, if the algorithm resets.
    pub fn reset_interval(&self) -> Result<Option<u64>> {
        if !self.algorithm.resets() {
            return Ok(None);
        }
        reset_interval_for(self.base_reset_interval, self.replay_ratio, self.n_agents).map(Some)
    }

    pub fn epsilon_schedule(&self) -> Result<EpsilonSchedule> {
        EpsilonSchedule::new(self.eps_start, self.eps_end, self.eps_decay_steps)
    }

    pub fn dqn_config(&self) -> DqnConfig {
        DqnConfig {
            hidden: self.hidden.clone(),
            gamma: self.gamma,
            lr: self.lr,
            target_update: TargetUpdate::Hard(self.target_period),
        }
    }

    pub fn safe_config(&self) -> SafeAcConfig {
        SafeAcConfig {
            hidden: self.hidden.clone(),
            gamma: self.gamma,
            lr: self.lr,
            tau: self.tau,
            alpha_risk: self.alpha_risk,
            cost_budget: self
                .cost_budget
                .unwrap_or_else(|| default_cost_budget(self.env.max_steps)),
            lambda_lr: self.lambda_lr,
            ..SafeAcConfig::default()
        }
    }

    /// The value of `key` as it would appear in a config file.
    pub fn get(&self, key: &str) -> Option<String> {
        let v = match key {
            "env" => self.env.kind.name().to_string(),
            "env_size" => self.env.size.to_string(),
            "max_steps" => self.env.max_steps.to_string(),
            "layout_seed" => self.env.layout_seed.to_string(),
            "random_goal" => self.env.random_goal.to_string(),
            "algorithm" => self.algorithm.name().to_string(),
            "n_agents" => self.n_agents.to_string(),
            "replay_ratio" => self.replay_ratio.to_string(),
            "base_reset_interval" => self.base_reset_interval.to_string(),
            "reset_depth" => self.reset_depth.to_string(),
            "beta" => self.beta.to_string(),
            "kappa" => self.kappa.to_string(),
            "temperature_mode" => self.temperature_mode.name().to_string(),
            "alpha_risk" => self.alpha_risk.to_string(),
            "cost_budget" => match self.cost_budget {
                Some(d) => d.to_string(),
                None => "auto".to_string(),
            },
            "gamma" => self.gamma.to_string(),
            "lr" => self.lr.to_string(),
            "hidden" => {
                let items: Vec<String> = self.hidden.iter().map(|h| h.to_string()).collect();
                format!("[{}]", items.join(", "))
            }
            "batch_size" => self.batch_size.to_string(),
            "buffer_capacity" => self.buffer_capacity.to_string(),
            "learning_starts" => self.learning_starts.to_string(),
            "eps_start" => self.eps_start.to_string(),
            "eps_end" => self.eps_end.to_string(),
            "eps_decay_steps" => self.eps_decay_steps.to_string(),
            "target_period" => self.target_period.to_string(),
            "tau" => self.tau.to_string(),
            "lambda_lr" => self.lambda_lr.to_string(),
            "shared_minibatch" => self.shared_minibatch.to_string(),
            "total_env_steps" => self.total_env_steps.to_string(),
            "eval_every" => self.eval_every.to_string(),
            "eval_episodes" => self.eval_episodes.to_string(),
            "collapse_window" => self.collapse_window.to_string(),
            "trace_selection" => self.trace_selection.to_string(),
            "seed" => self.seed.to_string(),
            _ => return None,
        };
        Some(v)
    }

    /// Every key with its value; parsing the result yields `self` again.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        for key in CONFIG_KEYS {
            let value = self.get(key).expect("every listed key has a value");
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }
}

/// Env-step gap between consecutive resets: `floor(T_base / (N · rr))`.
pub fn reset_interval_for(base_interval: u64, replay_ratio: f64, n_agents: usize) -> Result<u64> {
    if base_interval == 0 || n_agents == 0 || !(replay_ratio > 0.0 && replay_ratio.is_finite()) {
        return Err(Error::invalid(
            "reset interval needs a positive base interval, replay ratio and ensemble size",
        ));
    }
    let gap = (base_interval as f64 / (n_agents as f64 * replay_ratio) + 1e-9).floor();
    if gap < 1.0 {
        return Err(Error::invalid(format!(
            "reset interval {base_interval} / ({n_agents} x {replay_ratio}) rounds down to 0"
        )));
    }
    Ok(gap as u64)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConfigValue {
    Scalar(String),
    List(Vec<String>),
}

impl fmt::Display for ConfigValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigValue::Scalar(s) => f.write_str(s),
            ConfigValue::List(items) => write!(f, "[{}]", items.join(", ")),
        }
    }
}

/// A parsed config file: ordered `key = value` pairs.
///
/// ```
/// use rde::harness::{ConfigDoc, ConfigValue};
///
/// let doc = ConfigDoc::parse("beta = 50 # sharp\nseed = [0, 1]\n").unwrap();
/// assert_eq!(doc.get("beta"), Some(&ConfigValue::Scalar("50".into())));
/// assert_eq!(doc.get("seed"), Some(&ConfigValue::List(vec!["0".into(), "1".into()])));
/// ```
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigDoc {
    entries: Vec<(String, ConfigValue)>,
}

impl ConfigDoc {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: Vec<(String, ConfigValue)> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = match line.find('#') {
                Some(pos) => &line[..pos],
                None => line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::config(
                    format!("line {}", i + 1),
                    format!("expected `key = value`, got `{line}`"),
                ));
            };
            let key = key.trim();
            if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(Error::config(format!("line {}", i + 1), format!("bad key `{key}`")));
            }
            if !CONFIG_KEYS.contains(&key) {
                return Err(Error::config(key, "unknown key"));
            }
            if entries.iter().any(|(k, _)| k == key) {
                return Err(Error::config(key, "given twice"));
            }
            entries.push((key.to_string(), parse_value(key, value.trim())?));
        }
        Ok(ConfigDoc { entries })
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &ConfigValue)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn get(&self, key: &str) -> Option<&ConfigValue> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn set(&mut self, key: &str, value: ConfigValue) {
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    /// Keys given as lists that are not list-valued themselves.
    pub fn axes(&self) -> Vec<(String, Vec<String>)> {
        self.entries
            .iter()
            .filter_map(|(k, v)| match v {
                ConfigValue::List(items) if !LIST_KEYS.contains(&k.as_str()) => {
                    Some((k.clone(), items.clone()))
                }
                _ => None,
            })
            .collect()
    }
}

fn unquote(s: &str) -> &str {
    let s = s.trim();
    if s.len() >= 2 && s.starts_with('"') && s.ends_with('"') {
        &s[1..s.len() - 1]
    } else {
        s
    }
}

fn parse_value(key: &str, raw: &str) -> Result<ConfigValue> {
    if raw.is_empty() {
        return Err(Error::config(key, "missing value"));
    }
    if let Some(inner) = raw.strip_prefix('[') {
        let inner = inner
            .strip_suffix(']')
            .ok_or_else(|| Error::config(key, "unterminated list"))?;
        let items: Vec<String> = inner
            .split(',')
            .map(|s| unquote(s).to_string())
            .filter(|s| !s.is_empty())
            .collect();
        if items.is_empty() {
            return Err(Error::config(key, "empty list"));
        }
        return Ok(ConfigValue::List(items));
    }
    Ok(ConfigValue::Scalar(unquote(raw).to_string()))
}
