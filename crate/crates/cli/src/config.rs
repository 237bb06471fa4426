//! Flat `section.key = value` run configuration.
//!
//! Lines are `section.key = value`; `#` starts a comment. Unknown and
//! repeated keys are rejected. Every key except `output.dir` has a default,
//! listed in [`KEYS`].

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use data_agent_core::data::BENCHMARK_STD;
use data_agent_core::selection::SelectionMode;
use data_agent_core::{ChannelMode, Strategy, TrainingConfig};

use crate::error::{CliError, CliResult};

/// Every accepted key with its default (empty means "no default").
pub const KEYS: &[(&str, &str)] = &[
    ("dataset.path", ""),
    ("dataset.generator", "mixture"),
    ("dataset.seed", "0"),
    ("dataset.noise_rate", "0"),
    ("dataset.std", "0.15"),
    ("model.hidden_dims", "64,64"),
    ("model.lr", "0.0425"),
    ("model.batch", "64"),
    ("model.momentum", "0"),
    ("model.cosine_decay", "true"),
    ("loop.ratio", "0.5"),
    ("loop.epochs", "30"),
    ("loop.warmup_epochs", "1"),
    ("loop.score_period", "1"),
    ("loop.horizon_w", "4"),
    ("loop.agent_update_period", "loop.horizon_w"),
    ("loop.selection", "topk"),
    ("loop.seed", "0"),
    ("agent.gamma", "0.99"),
    ("agent.lambda", "0.95"),
    ("agent.clip_eps", "0.2"),
    ("agent.update_epochs", "4"),
    ("agent.minibatch", "256"),
    ("agent.lr", "0.01"),
    ("agent.hidden", "64"),
    ("agent.logstd_init", "-2"),
    ("agent.value_coeff", "0.5"),
    ("agent.enabled", "true"),
    ("agent.state_signals", "true"),
    ("reward.epsilon", "1e-8"),
    ("reward.use_consistency", "false"),
    ("reward.consistency_mode", "weighted"),
    ("train.strategy", "agent"),
    ("bench.strategies", "full,random_epoch,static_loss,agent"),
    ("bench.seeds", "0,1,2,3,4"),
    ("bench.ratios", "loop.ratio"),
    ("output.dir", ""),
    ("output.record_wallclock", "false"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    Mixture,
    Rings,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    File(PathBuf),
    Generated { generator: Generator, std: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub source: DatasetSource,
    pub dataset_seed: u64,
    pub noise_rate: f64,
    /// Strategy, ratio and seed here are those of `train`; `bench`
    /// overrides them per cell.
    pub training: TrainingConfig,
    pub strategies: Vec<Strategy>,
    pub seeds: Vec<u64>,
    pub ratios: Vec<f64>,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::parse("", "<defaults>").expect("defaults parse")
    }
}

struct Entries<'a> {
    origin: &'a str,
    values: BTreeMap<String, (usize, String)>,
}

impl Entries<'_> {
    fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|(_, v)| v.as_str())
    }

    fn text(&self, key: &str) -> String {
        match self.raw(key) {
            Some(v) => v.to_string(),
            None => KEYS
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, d)| d.to_string())
                .unwrap_or_default(),
        }
    }

    fn bad(&self, key: &str, message: String) -> CliError {
        match self.values.get(key) {
            Some((line, _)) => CliError::ConfigLine {
                path: self.origin.to_string(),
                line: *line,
                message: format!("{key}: {message}"),
            },
            None => CliError::Config(format!("{key}: {message}")),
        }
    }

    fn get<T: FromStr>(&self, key: &str) -> CliResult<T> {
        let v = self.text(key);
        v.parse().map_err(|_| self.bad(key, format!("cannot parse '{v}'")))
    }

    fn flag(&self, key: &str) -> CliResult<bool> {
        match self.text(key).as_str() {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            other => Err(self.bad(key, format!("expected true or false, got '{other}'"))),
        }
    }

    fn list<T: FromStr>(&self, key: &str) -> CliResult<Vec<T>> {
        self.text(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|_| self.bad(key, format!("cannot parse list item '{s}'")))
            })
            .collect()
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        RunConfig::parse(&text, &path.display().to_string())
    }

    /// Parses config text; `origin` labels error messages.
    pub fn parse(text: &str, origin: &str) -> CliResult<Self> {
        let mut values = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |message: String| CliError::ConfigLine {
                path: origin.to_string(),
                line,
                message,
            };
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(format!("expected 'section.key = value', got '{content}'")))?;
            let key = key.trim();
            if !KEYS.iter().any(|(k, _)| *k == key) {
                return Err(err(format!("unknown key '{key}'")));
            }
            if values
                .insert(key.to_string(), (line, value.trim().to_string()))
                .is_some()
            {
                return Err(err(format!("duplicate key '{key}'")));
            }
        }
        Entries { origin, values }.build()
    }

    /// The output directory: explicit flag, then `output.dir`, then the
    /// `DATA_AGENT_OUT` environment variable.
    pub fn resolve_output(&self, flag: Option<&Path>) -> CliResult<PathBuf> {
        if let Some(p) = flag {
            return Ok(p.to_path_buf());
        }
        if let Some(p) = &self.output_dir {
            return Ok(p.clone());
        }
        match std::env::var_os("DATA_AGENT_OUT") {
            Some(p) if !p.is_empty() => Ok(PathBuf::from(p)),
            _ => Err(CliError::Config(
                "missing key 'output.dir' (no default; pass --out or set DATA_AGENT_OUT)".into(),
            )),
        }
    }
}

impl Entries<'_> {
    fn build(self) -> CliResult<RunConfig> {
        let source = match (self.raw("dataset.path"), self.raw("dataset.generator")) {
            (Some(_), Some(_)) => {
                return Err(self.bad(
                    "dataset.path",
                    "set either dataset.path or dataset.generator, not both".into(),
                ))
            }
            (Some(p), None) => DatasetSource::File(PathBuf::from(p)),
            (None, _) => {
                let generator = match self.text("dataset.generator").as_str() {
                    "mixture" => Generator::Mixture,
                    "rings" => Generator::Rings,
                    other => return Err(self.bad("dataset.generator", format!("unknown generator '{other}'"))),
                };
                let std = if self.raw("dataset.std").is_some() {
                    self.get("dataset.std")?
                } else {
                    BENCHMARK_STD
                };
                DatasetSource::Generated { generator, std }
            }
        };

        let strategy = self.get("train.strategy").map_err(|_| {
            self.bad(
                "train.strategy",
                format!("unknown strategy '{}'", self.text("train.strategy")),
            )
        })?;
        let mut training = TrainingConfig {
            strategy,
            ..TrainingConfig::default()
        };

        let t = &mut training.trainee;
        t.hidden = self.list("model.hidden_dims")?;
        t.lr = self.get("model.lr")?;
        t.batch_size = self.get("model.batch")?;
        t.momentum = self.get("model.momentum")?;
        t.cosine_decay = self.flag("model.cosine_decay")?;
        if t.hidden.is_empty() || t.hidden.contains(&0) {
            return Err(self.bad("model.hidden_dims", "needs at least one positive width".into()));
        }

        let l = &mut training.loop_cfg;
        l.ratio = self.get("loop.ratio")?;
        l.epochs = self.get("loop.epochs")?;
        l.warmup_epochs = self.get("loop.warmup_epochs")?;
        l.score_period = self.get("loop.score_period")?;
        l.horizon_w = self.get("loop.horizon_w")?;
        l.agent_update_period = match self.raw("loop.agent_update_period") {
            Some(_) => self.get("loop.agent_update_period")?,
            None => l.horizon_w,
        };
        l.selection = match self.text("loop.selection").as_str() {
            "topk" => SelectionMode::TopK,
            "proportional" => SelectionMode::Proportional,
            other => {
                return Err(self.bad(
                    "loop.selection",
                    format!("expected topk or proportional, got '{other}'"),
                ))
            }
        };
        l.seed = self.get("loop.seed")?;
        l.record_wallclock = self.flag("output.record_wallclock")?;

        let a = &mut training.agent;
        a.ppo.gamma = self.get("agent.gamma")?;
        a.ppo.lambda = self.get("agent.lambda")?;
        a.ppo.clip_eps = self.get("agent.clip_eps")?;
        a.ppo.update_epochs = self.get("agent.update_epochs")?;
        a.ppo.minibatch = self.get("agent.minibatch")?;
        a.ppo.agent_lr = self.get("agent.lr")?;
        a.ppo.value_coeff = self.get("agent.value_coeff")?;
        a.hidden = self.get("agent.hidden")?;
        a.log_std_init = self.get("agent.logstd_init")?;
        a.enabled = self.flag("agent.enabled")?;
        a.state_signals = self.flag("agent.state_signals")?;

        let r = &mut training.reward;
        r.epsilon = self.get("reward.epsilon")?;
        r.use_consistency = self.flag("reward.use_consistency")?;
        r.consistency_mode = match self.text("reward.consistency_mode").as_str() {
            "weighted" => ChannelMode::Weighted,
            "gate" => ChannelMode::Gate,
            other => {
                return Err(self.bad(
                    "reward.consistency_mode",
                    format!("expected weighted or gate, got '{other}'"),
                ))
            }
        };

        training
            .loop_cfg
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        training
            .agent
            .ppo
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;

        let strategies: Vec<Strategy> = self
            .list::<String>("bench.strategies")?
            .iter()
            .map(|s| {
                s.parse()
                    .map_err(|_| self.bad("bench.strategies", format!("unknown strategy '{s}'")))
            })
            .collect::<CliResult<_>>()?;
        let seeds: Vec<u64> = self.list("bench.seeds")?;
        let ratios: Vec<f64> = match self.raw("bench.ratios") {
            Some(_) => self.list("bench.ratios")?,
            None => vec![training.loop_cfg.ratio],
        };
        if strategies.is_empty() {
            return Err(self.bad("bench.strategies", "list is empty".into()));
        }
        if seeds.is_empty() {
            return Err(self.bad("bench.seeds", "list is empty".into()));
        }
        if ratios.is_empty() || ratios.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
            return Err(self.bad("bench.ratios", "ratios must lie in (0, 1]".into()));
        }

        let noise_rate: f64 = self.get("dataset.noise_rate")?;
        if !(0.0..1.0).contains(&noise_rate) {
            return Err(self.bad("dataset.noise_rate", format!("must lie in [0, 1), got {noise_rate}")));
        }
        Ok(RunConfig {
            source,
            dataset_seed: self.get("dataset.seed")?,
            noise_rate,
            training,
            strategies,
            seeds,
            ratios,
            output_dir: self.raw("output.dir").filter(|s| !s.is_empty()).map(PathBuf::from),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_library() {
        let cfg = RunConfig::default();
        let lib = TrainingConfig::default();
        assert_eq!(cfg.training, lib);
        assert_eq!(cfg.seeds, vec![0, 1, 2, 3, 4]);
        assert_eq!(cfg.ratios, vec![0.5]);
        assert_eq!(cfg.strategies, Strategy::ALL.to_vec());
        assert_eq!(
            cfg.source,
            DatasetSource::Generated {
                generator: Generator::Mixture,
                std: BENCHMARK_STD
            }
        );
        assert!(cfg.output_dir.is_none());
    }

    #[test]
    fn values_comments_and_derived_defaults() {
        let text = "# header\nloop.ratio = 0.3  # trailing\nloop.horizon_w = 2\nmodel.hidden_dims = 16, 8\n\nagent.enabled = false\n";
        let cfg = RunConfig::parse(text, "t").unwrap();
        assert_eq!(cfg.training.loop_cfg.ratio, 0.3);
        assert_eq!(cfg.training.loop_cfg.agent_update_period, 2);
        assert_eq!(cfg.training.trainee.hidden, vec![16, 8]);
        assert!(!cfg.training.agent.enabled);
        assert_eq!(cfg.ratios, vec![0.3]);
    }

    #[test]
    fn strict_schema() {
        let err = RunConfig::parse("loop.ratoi = 0.3\n", "t").unwrap_err();
        assert!(err.to_string().contains("unknown key 'loop.ratoi'"));
        assert!(err.to_string().contains(":1:"));
        assert_eq!(err.exit_code(), 2);
        let err = RunConfig::parse("loop.ratio = 0.3\nloop.ratio = 0.4\n", "t").unwrap_err();
        assert!(err.to_string().contains("duplicate"));
        let err = RunConfig::parse("\n\nmodel.lr = fast\n", "t").unwrap_err();
        assert!(err.to_string().contains(":3:") && err.to_string().contains("model.lr"));
        assert!(RunConfig::parse("just text\n", "t").is_err());
        assert!(RunConfig::parse("loop.ratio = 0\n", "t").is_err());
        assert!(RunConfig::parse("bench.strategies = full,oracle\n", "t").is_err());
        assert!(RunConfig::parse("dataset.path = a\ndataset.generator = rings\n", "t").is_err());
    }

    #[test]
    fn output_dir_resolution_order() {
        let cfg = RunConfig::parse("output.dir = from_config\n", "t").unwrap();
        assert_eq!(
            cfg.resolve_output(Some(Path::new("flag"))).unwrap(),
            PathBuf::from("flag")
        );
        assert_eq!(cfg.resolve_output(None).unwrap(), PathBuf::from("from_config"));
    }

    #[test]
    fn every_key_parses_with_its_default() {
        for (key, default) in KEYS {
            if default.is_empty() || default.contains('.') {
                continue;
            }
            let text = format!("{key} = {default}\n");
            let cfg = RunConfig::parse(&text, "t").unwrap();
            if *key != "dataset.generator" && *key != "dataset.std" {
                assert_eq!(cfg, RunConfig::default(), "{key}");
            }
        }
    }
}
