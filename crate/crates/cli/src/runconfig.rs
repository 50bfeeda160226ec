//! `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Every key is checked against
//! the table in [`RunConfig::parse`]; unknown or repeated keys are errors.

use std::collections::BTreeMap;
use std::str::FromStr;

use dacs::model::{ModelConfig, UncertaintyKind};
use dacs::selection::Strategy;
use dacs::simulator::{DatasetSpec, SimConfig};
use dacs::{AcquisitionConfig, ReferenceSet, WindowMode};
use serde::Serialize;

use crate::{usage, CliResult};

pub const SEED_ENV: &str = "DACS_SEED";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    /// First trial seed; trials use `seed, seed + 1, ...`.
    pub seed: u64,
    pub trials: usize,
    pub strategies: Vec<Strategy>,
    pub dataset: DatasetSpec,
    pub sim: SimConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::parse("").expect("empty config is valid")
    }
}

struct Entry {
    line: usize,
    value: String,
    used: bool,
}

struct Keys(BTreeMap<String, Entry>);

impl Keys {
    fn take<T: FromStr>(&mut self, key: &str) -> CliResult<Option<T>> {
        let Some(e) = self.0.get_mut(key) else {
            return Ok(None);
        };
        e.used = true;
        e.value
            .parse()
            .map(Some)
            .map_err(|_| usage(format!("line {}: invalid value '{}' for {key}", e.line, e.value)))
    }

    fn set<T: FromStr>(&mut self, key: &str, slot: &mut T) -> CliResult<()> {
        if let Some(v) = self.take(key)? {
            *slot = v;
        }
        Ok(())
    }

    fn list<T: FromStr>(&mut self, key: &str) -> CliResult<Option<Vec<T>>> {
        let Some(raw) = self.take::<String>(key)? else {
            return Ok(None);
        };
        let line = self.0[key].line;
        raw.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| usage(format!("line {line}: invalid entry '{s}' in {key}"))))
            .collect::<CliResult<Vec<T>>>()
            .map(Some)
    }
}

fn parse_lines(text: &str) -> CliResult<Keys> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("line {}: expected 'key = value', got '{line}'", i + 1)))?;
        let k = k.trim().to_string();
        if let Some(prev) = map.get(&k).map(|e: &Entry| e.line) {
            return Err(usage(format!("line {}: duplicate key '{k}' (first set on line {prev})", i + 1)));
        }
        map.insert(
            k,
            Entry {
                line: i + 1,
                value: v.trim().to_string(),
                used: false,
            },
        );
    }
    Ok(Keys(map))
}

/// Accepts "none" for an absent hidden layer.
struct Hidden(Option<usize>);

impl FromStr for Hidden {
    type Err = std::num::ParseIntError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "none" {
            Ok(Hidden(None))
        } else {
            s.parse().map(|v| Hidden(Some(v)))
        }
    }
}

/// Kebab-case enum value, parsed through its serde name.
struct Named<T>(T);

impl<T: serde::de::DeserializeOwned> FromStr for Named<T> {
    type Err = serde_json::Error;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_string())).map(Named)
    }
}

impl RunConfig {
    /// Parse a config file body. Missing keys take desk-scale defaults;
    /// acquisition defaults are 100 buckets, 4 breaks, temperature 0.25 and
    /// a 16-dimensional auxiliary embedding.
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut k = parse_lines(text)?;

        let kind: String = k.take("dataset")?.unwrap_or_else(|| "mixture".to_string());
        let mut dataset = match kind.as_str() {
            "mixture" => DatasetSpec::default_mixture(),
            "near-duplicate" => DatasetSpec::default_near_duplicate(),
            other => {
                return Err(usage(format!(
                    "line {}: unknown dataset '{other}' (expected mixture or near-duplicate)",
                    k.0["dataset"].line
                )))
            }
        };
        match &mut dataset {
            DatasetSpec::Mixture {
                n_classes,
                per_class,
                dim,
                spread,
                separation,
            } => {
                k.set("n_classes", n_classes)?;
                k.set("per_class", per_class)?;
                k.set("dim", dim)?;
                k.set("spread", spread)?;
                k.set("separation", separation)?;
            }
            DatasetSpec::NearDuplicate {
                n_classes,
                base_per_class,
                dim,
                spread,
                separation,
                replication,
                noise_std,
            } => {
                k.set("n_classes", n_classes)?;
                k.set("base_per_class", base_per_class)?;
                k.set("dim", dim)?;
                k.set("spread", spread)?;
                k.set("separation", separation)?;
                k.set("replication", replication)?;
                k.set("noise_std", noise_std)?;
            }
        }

        let mut sim = SimConfig::desk_scale(dataset.n_samples(), dataset.n_classes());
        k.set("test_fraction", &mut sim.test_fraction)?;
        k.set("init_labeled", &mut sim.init_labeled)?;
        k.set("cycles", &mut sim.cycles)?;
        if let Some(Named::<UncertaintyKind>(u)) = k.take("uncertainty")? {
            sim.uncertainty = u;
        }

        let a: &mut AcquisitionConfig = &mut sim.acquisition;
        k.set("budget", &mut a.budget)?;
        k.set("n_buckets", &mut a.n_buckets)?;
        k.set("n_breaks", &mut a.n_breaks)?;
        k.set("temperature", &mut a.temperature)?;
        k.set("expand_factor", &mut a.expand_factor)?;
        if let Some(Named::<WindowMode>(w)) = k.take("window")? {
            a.window = w;
        }
        if let Some(Named::<ReferenceSet>(r)) = k.take("reference")? {
            a.reference = r;
        }
        k.set("reduced_dim", &mut a.reduced_dim)?;

        let m: &mut ModelConfig = &mut sim.model;
        m.reduced_dim = a.reduced_dim;
        if let Some(Hidden(h)) = k.take("hidden")? {
            m.hidden = h;
        }
        k.set("lambda", &mut m.lambda)?;
        k.set("epochs", &mut m.epochs)?;
        let stop: Option<usize> = k.take("stop_epoch")?;
        m.stop_epoch = stop.unwrap_or(m.epochs * 3 / 4);
        k.set("batch_size", &mut m.batch_size)?;
        k.set("learning_rate", &mut m.learning_rate)?;
        k.set("lr_decay", &mut m.lr_decay)?;
        k.set("aux_head", &mut m.aux_head)?;

        let mut seed = 0;
        k.set("seed", &mut seed)?;
        let mut trials = 3;
        k.set("trials", &mut trials)?;
        let strategies = k.list("strategies")?.unwrap_or_else(|| Strategy::ALL.to_vec());

        if let Some((key, e)) = k.0.iter().filter(|(_, e)| !e.used).min_by_key(|(_, e)| e.line) {
            return Err(usage(format!("line {}: unknown key '{key}'", e.line)));
        }
        if trials == 0 || strategies.is_empty() {
            return Err(usage("need at least one trial and one strategy"));
        }
        sim.acquisition.validate().map_err(|e| usage(e.to_string()))?;
        Ok(RunConfig {
            seed,
            trials,
            strategies,
            dataset,
            sim,
        })
    }

    /// Replace the base seed with `DACS_SEED` when it is set.
    pub fn apply_env(&mut self) -> CliResult<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| usage(format!("{SEED_ENV}='{v}' is not an unsigned integer")))?;
        }
        Ok(())
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.trials as u64).map(|t| self.seed + t).collect()
    }
}
