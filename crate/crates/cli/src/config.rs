//! Flat, dotted-key configuration with typed and range-checked entries.
//!
//! Values are merged as defaults < config file < `--set key=value` overrides.
//! The file may use dotted keys directly (`{"penalty.alpha": 1.2}`) or nest
//! them (`{"penalty": {"alpha": 1.2}}`); both flatten to the same key.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use pica_core::datagen::{BehaviorMix, DatagenConfig, EnvConfig};
use pica_core::policy_opt::{PolicyTrainConfig, PpoConfig};
use pica_core::reward_model::{FeatureConfig, LossConfig, RewardScaling, RmTrainConfig};
use pica_core::shaping::{OutcomeConfig, PenaltySchedule, ShapingConfig};
use pica_core::world::{PivotRule, RetrievalConfig, WorldConfig};
use pica_service::ServiceConfig;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading config {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("parsing config {path}: {source}")]
    Parse { path: String, source: serde_json::Error },
    #[error("config {path} must be a JSON object")]
    NotAnObject { path: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("override `{0}` must look like key=value")]
    Override(String),
    #[error("`{key}` must be {expected}, got {got}")]
    Type { key: String, expected: String, got: String },
    #[error("`{key}` = {value} is outside the permitted range {range}")]
    Range { key: String, value: String, range: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug)]
enum Bound {
    Open(f64),
    Closed(f64),
    None,
}

#[derive(Clone, Copy, Debug)]
struct Range {
    lo: Bound,
    hi: Bound,
}

impl Range {
    const ANY: Range = Range { lo: Bound::None, hi: Bound::None };

    fn contains(&self, x: f64) -> bool {
        let lo = match self.lo {
            Bound::Open(b) => x > b,
            Bound::Closed(b) => x >= b,
            Bound::None => true,
        };
        let hi = match self.hi {
            Bound::Open(b) => x < b,
            Bound::Closed(b) => x <= b,
            Bound::None => true,
        };
        x.is_finite() && lo && hi
    }
}

impl fmt::Display for Range {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.lo {
            Bound::Open(b) => write!(f, "({b}, ")?,
            Bound::Closed(b) => write!(f, "[{b}, ")?,
            Bound::None => write!(f, "(-inf, ")?,
        }
        match self.hi {
            Bound::Open(b) => write!(f, "{b})"),
            Bound::Closed(b) => write!(f, "{b}]"),
            Bound::None => write!(f, "inf)"),
        }
    }
}

const fn closed(lo: f64, hi: f64) -> Range {
    Range { lo: Bound::Closed(lo), hi: Bound::Closed(hi) }
}

const fn open(lo: f64, hi: f64) -> Range {
    Range { lo: Bound::Open(lo), hi: Bound::Open(hi) }
}

const fn at_least(lo: f64) -> Range {
    Range { lo: Bound::Closed(lo), hi: Bound::None }
}

const fn positive() -> Range {
    Range { lo: Bound::Open(0.0), hi: Bound::None }
}

#[derive(Clone, Copy, Debug)]
enum Kind {
    Float(Range),
    Int(Range),
    Bool,
    Choice(&'static [&'static str]),
    Text,
    IntList(Range),
}

struct KeySpec {
    key: &'static str,
    kind: Kind,
    default: fn() -> Value,
}

macro_rules! keys {
    ($($key:literal : $kind:expr => $default:expr),* $(,)?) => {
        &[$(KeySpec { key: $key, kind: $kind, default: || json!($default) }),*]
    };
}

const KEYS: &[KeySpec] = keys! {
    "seed": Kind::Int(at_least(0.0)) => 1,

    "world.entities": Kind::Int(at_least(2.0)) => 50,
    "world.relations": Kind::Int(at_least(1.0)) => 5,
    "world.branching": Kind::Int(at_least(1.0)) => 3,
    "world.max_hops": Kind::Int(closed(1.0, 16.0)) => 4,

    "retriever.topk": Kind::Int(at_least(1.0)) => 3,
    "retriever.p_hit": Kind::Float(closed(0.0, 1.0)) => 0.85,
    "max_turns": Kind::Int(closed(1.0, 64.0)) => 5,
    "max_think": Kind::Int(at_least(0.0)) => 4,
    "pivot.rule": Kind::Choice(&["strict", "lenient"]) => "strict",

    "datagen.hops": Kind::IntList(at_least(1.0)) => [2, 3, 4],
    "datagen.tasks": Kind::Int(at_least(1.0)) => 1000,
    "datagen.rollouts_per_task": Kind::Int(at_least(1.0)) => 5,
    "datagen.filter": Kind::Bool => true,
    "behavior.golden_next_hop": Kind::Float(closed(0.0, 1.0)) => 0.65,
    "behavior.random_relation": Kind::Float(closed(0.0, 1.0)) => 0.15,
    "behavior.repeat_last": Kind::Float(closed(0.0, 1.0)) => 0.1,
    "behavior.premature_answer": Kind::Float(closed(0.0, 1.0)) => 0.1,
    "behavior.correct_answer_when_complete": Kind::Float(closed(0.0, 1.0)) => 0.9,

    "reward_model.optim.lr": Kind::Float(positive()) => 0.05,
    "reward_model.batch_size": Kind::Int(at_least(1.0)) => 64,
    "reward_model.epochs": Kind::Int(at_least(0.0)) => 20,
    "reward_model.lambda_g": Kind::Float(at_least(0.0)) => 1.0,
    "reward_model.g_min": Kind::Float(open(0.0, 1.0)) => 1e-4,
    "reward_model.g_max": Kind::Float(Range { lo: Bound::Open(1.0), hi: Bound::None }) => 3.0,
    "reward_model.margin": Kind::Float(at_least(0.0)) => 0.1,
    "reward_model.temperature": Kind::Float(positive()) => 1.0,
    "reward_model.url": Kind::Text => "localhost:5000/get_reward",
    "reward_model.max_batch": Kind::Int(at_least(1.0)) => 256,
    "step_reward_scale": Kind::Float(at_least(0.0)) => 0.3,
    "baseline_step_reward": Kind::Float(closed(0.0, 1.0)) => 0.55,
    "outcome_reward_scale": Kind::Float(at_least(0.0)) => 1.5,
    "format_penalty": Kind::Float(Range::ANY) => -1.0,

    "penalty.lambda": Kind::Float(closed(0.0, 0.5)) => 0.1,
    "penalty.alpha": Kind::Float(closed(1.0, 1.5)) => 1.2,

    "algorithm.adv_estimator": Kind::Choice(&["gae"]) => "gae",
    "algorithm.gamma": Kind::Float(closed(0.0, 1.0)) => 1.0,
    "algorithm.lam": Kind::Float(closed(0.0, 1.0)) => 1.0,
    "algorithm.kl_ctrl.kl_coef": Kind::Float(at_least(0.0)) => 0.001,
    "actor_rollout_ref.actor.clip_ratio": Kind::Float(open(0.0, 1.0)) => 0.2,
    "actor_rollout_ref.actor.optim.lr": Kind::Float(positive()) => 3.0,
    "actor_rollout_ref.actor.ppo_epochs": Kind::Int(at_least(1.0)) => 2,
    "actor_rollout_ref.actor.ppo_mini_batch_size": Kind::Int(at_least(1.0)) => 40,
    "actor_rollout_ref.actor.grad_clip": Kind::Float(at_least(0.0)) => 0.0,
    "actor_rollout_ref.rollout.temperature": Kind::Float(positive()) => 1.0,
    "actor_rollout_ref.rollout.n_agent": Kind::Int(at_least(1.0)) => 5,
    "critic.optim.lr": Kind::Float(positive()) => 0.1,
    "critic.loss_coef": Kind::Float(at_least(0.0)) => 1.0,
    "data.train_batch_size": Kind::Int(at_least(1.0)) => 16,
    "trainer.total_training_steps": Kind::Int(at_least(0.0)) => 200,
    "trainer.test_freq": Kind::Int(at_least(1.0)) => 20,
    "trainer.divergence_bound": Kind::Float(positive()) => 50.0,
    "policy.hops": Kind::IntList(at_least(1.0)) => [2],
    "policy.train_tasks": Kind::Int(at_least(1.0)) => 200,
    "policy.eval_tasks": Kind::Int(at_least(1.0)) => 100,
    "policy.eval_rollouts": Kind::Int(at_least(1.0)) => 4,
};

fn spec(key: &str) -> Option<&'static KeySpec> {
    KEYS.iter().find(|s| s.key == key)
}

fn describe(v: &Value) -> String {
    match v {
        Value::String(s) => format!("\"{s}\""),
        other => other.to_string(),
    }
}

fn check(spec: &KeySpec, v: &Value) -> Result<Value, ConfigError> {
    let key = spec.key.to_string();
    let type_err = |expected: &str| ConfigError::Type { key: key.clone(), expected: expected.into(), got: describe(v) };
    let range_err = |range: &Range| ConfigError::Range { key: key.clone(), value: describe(v), range: range.to_string() };
    let int = |x: &Value, range: &Range| -> Result<Value, ConfigError> {
        let n = x.as_u64().ok_or_else(|| type_err("a non-negative integer"))?;
        if range.contains(n as f64) {
            Ok(json!(n))
        } else {
            Err(range_err(range))
        }
    };
    match spec.kind {
        Kind::Float(range) => {
            let x = v.as_f64().ok_or_else(|| type_err("a number"))?;
            if range.contains(x) {
                Ok(json!(x))
            } else {
                Err(range_err(&range))
            }
        }
        Kind::Int(range) => int(v, &range),
        Kind::Bool => v.as_bool().map(Value::Bool).ok_or_else(|| type_err("true or false")),
        Kind::Choice(choices) => match v.as_str() {
            Some(s) if choices.contains(&s) => Ok(json!(s)),
            _ => Err(type_err(&format!("one of {}", choices.join(", ")))),
        },
        Kind::Text => v.as_str().map(|s| json!(s)).ok_or_else(|| type_err("a string")),
        Kind::IntList(range) => {
            let items = v.as_array().filter(|a| !a.is_empty()).ok_or_else(|| type_err("a non-empty list of integers"))?;
            items.iter().map(|x| int(x, &range)).collect::<Result<Vec<_>, _>>().map(Value::Array)
        }
    }
}

fn flatten(prefix: &str, value: &Value, out: &mut Vec<(String, Value)>) {
    match value {
        Value::Object(map) if prefix.is_empty() || spec(prefix).is_none() => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        _ => out.push((prefix.to_string(), value.clone())),
    }
}

/// Validated effective configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    values: BTreeMap<&'static str, Value>,
}

impl Default for Config {
    fn default() -> Self {
        Self { values: KEYS.iter().map(|s| (s.key, (s.default)())).collect() }
    }
}

impl Config {
    /// Defaults, then the file (if any), then `key=value` overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut cfg = Config::default();
        if let Some(path) = path {
            let p = path.display().to_string();
            let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: p.clone(), source })?;
            let value: Value = serde_json::from_str(&text).map_err(|source| ConfigError::Parse { path: p.clone(), source })?;
            if !value.is_object() {
                return Err(ConfigError::NotAnObject { path: p });
            }
            let mut flat = Vec::new();
            flatten("", &value, &mut flat);
            for (k, v) in flat {
                cfg.set(&k, &v)?;
            }
        }
        for o in overrides {
            let (k, raw) = o.split_once('=').ok_or_else(|| ConfigError::Override(o.clone()))?;
            let v = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
            cfg.set(k.trim(), &v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &Value) -> Result<(), ConfigError> {
        let spec = spec(key).ok_or_else(|| ConfigError::UnknownKey(key.to_string()))?;
        self.values.insert(spec.key, check(spec, value)?);
        Ok(())
    }

    pub fn get(&self, key: &str) -> &Value {
        self.values.get(key).unwrap_or_else(|| panic!("unregistered config key {key}"))
    }

    pub fn f64(&self, key: &str) -> f64 {
        self.get(key).as_f64().expect("validated float")
    }

    pub fn usize(&self, key: &str) -> usize {
        self.get(key).as_u64().expect("validated integer") as usize
    }

    pub fn u64(&self, key: &str) -> u64 {
        self.get(key).as_u64().expect("validated integer")
    }

    pub fn bool(&self, key: &str) -> bool {
        self.get(key).as_bool().expect("validated bool")
    }

    pub fn str(&self, key: &str) -> &str {
        self.get(key).as_str().expect("validated string")
    }

    pub fn usizes(&self, key: &str) -> Vec<usize> {
        self.get(key).as_array().expect("validated list").iter().map(|v| v.as_u64().expect("validated integer") as usize).collect()
    }

    pub fn seed(&self) -> u64 {
        self.u64("seed")
    }

    /// Cross-key checks that single-key ranges cannot express.
    fn validate(&self) -> Result<(), ConfigError> {
        let max_hops = self.usize("world.max_hops");
        for key in ["datagen.hops", "policy.hops"] {
            if let Some(h) = self.usizes(key).into_iter().find(|&h| h > max_hops) {
                return Err(ConfigError::Range { key: key.into(), value: h.to_string(), range: format!("[1, {max_hops}] (world.max_hops)") });
            }
        }
        self.behavior_mix().validate().map_err(|e| ConfigError::Invalid(format!("behavior.*: {e}")))?;
        if self.usize("world.branching") > self.usize("world.relations") {
            return Err(ConfigError::Invalid("world.branching must not exceed world.relations".into()));
        }
        Ok(())
    }

    /// Pretty JSON of every key, sorted, with a trailing newline.
    pub fn to_json(&self) -> String {
        let map: Map<String, Value> = self.values.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
        serde_json::to_string_pretty(&Value::Object(map)).expect("config serializes") + "\n"
    }

    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }

    pub fn world(&self) -> WorldConfig {
        WorldConfig {
            entities: self.usize("world.entities"),
            relations: self.usize("world.relations"),
            branching: self.usize("world.branching"),
            max_hops: self.usize("world.max_hops"),
            seed: self.seed(),
        }
    }

    pub fn env(&self) -> EnvConfig {
        EnvConfig {
            retrieval: RetrievalConfig { p_hit: self.f64("retriever.p_hit"), topk: self.usize("retriever.topk") },
            max_turns: self.usize("max_turns"),
            max_think: self.usize("max_think"),
            pivot_rule: if self.str("pivot.rule") == "lenient" { PivotRule::Lenient } else { PivotRule::Strict },
        }
    }

    pub fn behavior_mix(&self) -> BehaviorMix {
        BehaviorMix {
            golden_next_hop: self.f64("behavior.golden_next_hop"),
            random_relation: self.f64("behavior.random_relation"),
            repeat_last: self.f64("behavior.repeat_last"),
            premature_answer: self.f64("behavior.premature_answer"),
            correct_answer_when_complete: self.f64("behavior.correct_answer_when_complete"),
        }
    }

    pub fn datagen(&self) -> DatagenConfig {
        DatagenConfig {
            world: self.world(),
            hops: self.usizes("datagen.hops"),
            tasks: self.usize("datagen.tasks"),
            rollouts_per_task: self.usize("datagen.rollouts_per_task"),
            mix: self.behavior_mix(),
            env: self.env(),
            filter: self.bool("datagen.filter"),
            seed: self.seed(),
        }
    }

    pub fn rm_train(&self) -> RmTrainConfig {
        RmTrainConfig {
            learning_rate: self.f64("reward_model.optim.lr"),
            batch_size: self.usize("reward_model.batch_size"),
            epochs: self.usize("reward_model.epochs"),
            seed: self.seed(),
            loss: LossConfig {
                lambda_g: self.f64("reward_model.lambda_g"),
                g_min: self.f64("reward_model.g_min"),
                margin: self.f64("reward_model.margin"),
                g_max: self.f64("reward_model.g_max"),
            },
            features: FeatureConfig { max_hops: self.usize("world.max_hops"), max_turns: self.usize("max_turns") },
        }
    }

    pub fn scaling(&self) -> RewardScaling {
        RewardScaling {
            temperature: self.f64("reward_model.temperature"),
            step_reward_scale: self.f64("step_reward_scale"),
            baseline_step_reward: self.f64("baseline_step_reward"),
        }
    }

    pub fn shaping(&self) -> ShapingConfig {
        ShapingConfig {
            scaling: self.scaling(),
            outcome: OutcomeConfig { outcome_reward_scale: self.f64("outcome_reward_scale"), format_penalty: self.f64("format_penalty") },
            limits: self.env().limits(),
        }
    }

    pub fn penalty(&self) -> PenaltySchedule {
        PenaltySchedule::new(self.f64("penalty.lambda"), self.f64("penalty.alpha")).expect("ranges checked on load")
    }

    pub fn ppo(&self) -> PpoConfig {
        PpoConfig {
            clip: self.f64("actor_rollout_ref.actor.clip_ratio"),
            kl_coef: self.f64("algorithm.kl_ctrl.kl_coef"),
            gamma: self.f64("algorithm.gamma"),
            lambda_gae: self.f64("algorithm.lam"),
            critic_coef: self.f64("critic.loss_coef"),
            policy_lr: self.f64("actor_rollout_ref.actor.optim.lr"),
            critic_lr: self.f64("critic.optim.lr"),
            ppo_epochs: self.usize("actor_rollout_ref.actor.ppo_epochs"),
            minibatch_size: self.usize("actor_rollout_ref.actor.ppo_mini_batch_size"),
            temperature: self.f64("actor_rollout_ref.rollout.temperature"),
            max_grad_norm: self.f64("actor_rollout_ref.actor.grad_clip"),
            max_mean_abs_advantage: self.f64("trainer.divergence_bound"),
        }
    }

    pub fn policy_train(&self) -> PolicyTrainConfig {
        PolicyTrainConfig {
            hops: self.usizes("policy.hops"),
            updates: self.usize("trainer.total_training_steps"),
            tasks_per_update: self.usize("data.train_batch_size"),
            n_agent: self.usize("actor_rollout_ref.rollout.n_agent"),
            train_tasks: self.usize("policy.train_tasks"),
            eval_tasks: self.usize("policy.eval_tasks"),
            eval_rollouts: self.usize("policy.eval_rollouts"),
            eval_every: self.usize("trainer.test_freq"),
            seed: self.seed(),
            ppo: self.ppo(),
            env: self.env(),
            shaping: self.shaping(),
            penalty: self.penalty(),
        }
    }

    pub fn service(&self) -> ServiceConfig {
        ServiceConfig { max_batch: self.usize("reward_model.max_batch"), scaling: self.scaling(), limits: self.env().limits() }
    }

    /// `host:port` part of `reward_model.url`.
    pub fn reward_bind(&self) -> String {
        let url = self.str("reward_model.url");
        let rest = url.split_once("://").map_or(url, |(_, r)| r);
        rest.split('/').next().unwrap_or(rest).to_string()
    }

    /// Registered keys with their defaults, for `--help`-style listings.
    pub fn describe_keys() -> Vec<(&'static str, String)> {
        let d = Config::default();
        KEYS.iter().map(|s| (s.key, d.get(s.key).to_string())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(overrides: &[&str]) -> Result<Config, ConfigError> {
        Config::load(None, &overrides.iter().map(|s| s.to_string()).collect::<Vec<_>>())
    }

    #[test]
    fn defaults_follow_the_hyperparameter_table() {
        let c = Config::default();
        assert_eq!(c.f64("algorithm.kl_ctrl.kl_coef"), 0.001);
        assert_eq!(c.f64("actor_rollout_ref.actor.clip_ratio"), 0.2);
        assert_eq!(c.f64("algorithm.gamma"), 1.0);
        assert_eq!(c.usize("max_turns"), 5);
        assert_eq!(c.usize("retriever.topk"), 3);
        assert_eq!(c.f64("step_reward_scale"), 0.3);
        assert_eq!(c.f64("baseline_step_reward"), 0.55);
        assert_eq!(c.f64("outcome_reward_scale"), 1.5);
        assert_eq!(c.usize("actor_rollout_ref.rollout.n_agent"), 5);
        assert_eq!(c.str("reward_model.url"), "localhost:5000/get_reward");
        c.validate().unwrap();
    }

    #[test]
    fn typed_views_match_library_defaults() {
        let c = Config::default();
        assert_eq!(c.ppo(), PpoConfig::default());
        assert_eq!(c.scaling(), RewardScaling::default());
        assert_eq!(c.penalty(), PenaltySchedule::default());
        assert_eq!(c.rm_train(), RmTrainConfig::default());
        assert_eq!(c.datagen(), DatagenConfig::default());
        assert_eq!(c.policy_train(), PolicyTrainConfig::default());
        assert_eq!(c.env(), EnvConfig::default());
        assert_eq!(c.service(), ServiceConfig::default());
    }

    #[test]
    fn alpha_out_of_range_names_key_and_range() {
        let msg = load(&["penalty.alpha=1.6"]).unwrap_err().to_string();
        assert!(msg.contains("penalty.alpha") && msg.contains("[1, 1.5]"), "{msg}");
        let msg = load(&["penalty.lambda=0.6"]).unwrap_err().to_string();
        assert!(msg.contains("[0, 0.5]"), "{msg}");
        let msg = load(&["actor_rollout_ref.actor.clip_ratio=1"]).unwrap_err().to_string();
        assert!(msg.contains("(0, 1)"), "{msg}");
    }

    #[test]
    fn seed_override_leaves_everything_else_alone() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"penalty": {"alpha": 1.4}, "datagen.tasks": 77, "seed": 3}"#).unwrap();
        let base = Config::load(Some(&path), &[]).unwrap();
        let over = Config::load(Some(&path), &["seed=9".to_string()]).unwrap();
        assert_eq!(base.f64("penalty.alpha"), 1.4);
        assert_eq!(base.seed(), 3);
        assert_eq!(over.seed(), 9);
        for s in KEYS.iter().filter(|s| s.key != "seed") {
            assert_eq!(base.get(s.key), over.get(s.key), "{}", s.key);
        }
    }

    #[test]
    fn echoed_config_reloads_identically() {
        let c = load(&["tasks=3"]).err().map(|e| e.to_string()).unwrap();
        assert!(c.contains("unknown config key `tasks`"));
        let c = load(&["datagen.hops=[2,3]", "pivot.rule=lenient", "seed=5"]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        std::fs::write(&path, c.to_json()).unwrap();
        let back = Config::load(Some(&path), &[]).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.content_hash(), c.content_hash());
    }

    #[test]
    fn type_and_cross_key_errors() {
        assert!(matches!(load(&["max_turns=five"]), Err(ConfigError::Type { .. })));
        assert!(matches!(load(&["datagen.hops=[]"]), Err(ConfigError::Type { .. })));
        assert!(matches!(load(&["policy.hops=[9]"]), Err(ConfigError::Range { .. })));
        assert!(matches!(
            load(&["behavior.golden_next_hop=0", "behavior.random_relation=0", "behavior.repeat_last=0", "behavior.premature_answer=0"]),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(load(&["pivot.rule=loose"]), Err(ConfigError::Type { .. })));
        assert!(matches!(load(&["no_equals"]), Err(ConfigError::Override(_))));
    }

    #[test]
    fn reward_bind_strips_scheme_and_path() {
        assert_eq!(Config::default().reward_bind(), "localhost:5000");
        let c = load(&["reward_model.url=http://127.0.0.1:7000/get_reward"]).unwrap();
        assert_eq!(c.reward_bind(), "127.0.0.1:7000");
    }
}
