use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use packing_core::env::EnvConfig;
use packing_core::instances::{DatasetSize, Mode, Subset};
use packing_core::oracle::{KValue, MctsConfig};
use packing_core::policy::{self, Architecture};
use packing_core::spatial::Heuristic;
use packing_core::training::{TrainConfig, TrainSchedule};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ArchName {
    Linear,
    Mlp,
}

/// Which agent `eval` runs when no checkpoint is given.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum AgentName {
    Policy,
    Random,
    Greedy,
}

/// Every setting a command can use. Files and flags fill the same struct;
/// the resolved value is written verbatim into each manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    pub subset: Subset,
    pub mode: Mode,
    pub seed: u64,
    /// Training seeds; one checkpoint each.
    pub seeds: Vec<u64>,
    pub profile: String,
    pub arch: ArchName,
    /// Proposal size; the mode's default when unset.
    pub k: Option<usize>,
    pub heuristics: Vec<Heuristic>,
    pub container: f64,
    /// Candidate cap; the mode's default when unset.
    pub cap: Option<usize>,
    pub rotation: bool,
    pub n_dists: usize,
    pub n_instances: usize,
    pub episode_len: usize,
    pub datasets: Vec<PathBuf>,
    pub checkpoints: Vec<PathBuf>,
    pub out: PathBuf,
    pub agent: AgentName,
    pub pre_epochs: Option<usize>,
    pub post_epochs: Option<usize>,
    pub batches_per_epoch: Option<usize>,
    pub batch_size: Option<usize>,
    pub adaptation_batches: Option<usize>,
    pub simulations: usize,
    pub futures: usize,
    pub ks: Vec<String>,
    pub max_steps: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: String::new(),
            subset: Subset::Default,
            mode: Mode::Discrete,
            seed: 0,
            seeds: vec![0],
            profile: "desk".into(),
            arch: ArchName::Mlp,
            k: None,
            heuristics: vec![Heuristic::EmsCorner],
            container: 20.0,
            cap: None,
            rotation: false,
            n_dists: 10,
            n_instances: 8,
            episode_len: DatasetSize::FULL.episode_len,
            datasets: Vec::new(),
            checkpoints: Vec::new(),
            out: PathBuf::from("out"),
            agent: AgentName::Policy,
            pre_epochs: None,
            post_epochs: None,
            batches_per_epoch: None,
            batch_size: None,
            adaptation_batches: None,
            simulations: 200,
            futures: 64,
            ks: vec!["1".into(), "2".into(), "3".into(), "5".into(), "10".into(), "all".into()],
            max_steps: None,
        }
    }
}

/// Flag overrides; any flag given replaces the config-file value.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Config file (TOML or JSON). A manifest written by a previous run is
    /// accepted too and re-runs it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub subset: Option<Subset>,
    #[arg(long)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Training schedule: `desk` or `paper-scale`.
    #[arg(long)]
    pub profile: Option<String>,
    #[arg(long, value_enum)]
    pub arch: Option<ArchName>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub heuristics: Option<Vec<Heuristic>>,
    /// Container edge length.
    #[arg(long)]
    pub container: Option<f64>,
    #[arg(long)]
    pub cap: Option<usize>,
    #[arg(long)]
    pub rotation: Option<bool>,
    #[arg(long)]
    pub n_dists: Option<usize>,
    #[arg(long)]
    pub n_instances: Option<usize>,
    #[arg(long)]
    pub episode_len: Option<usize>,
    #[arg(long = "dataset")]
    pub datasets: Vec<PathBuf>,
    #[arg(long = "checkpoint")]
    pub checkpoints: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub agent: Option<AgentName>,
    #[arg(long)]
    pub pre_epochs: Option<usize>,
    #[arg(long)]
    pub post_epochs: Option<usize>,
    #[arg(long)]
    pub batches_per_epoch: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Selection-policy updates in `adapt`.
    #[arg(long)]
    pub batches: Option<usize>,
    #[arg(long)]
    pub simulations: Option<usize>,
    #[arg(long)]
    pub futures: Option<usize>,
    /// Proposal sizes for `analyze`, e.g. `1,3,all`.
    #[arg(long, value_delimiter = ',')]
    pub ks: Option<Vec<String>>,
    #[arg(long)]
    pub max_steps: Option<usize>,
}

fn read_config_file(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let parse_err = |e: String| CliError::Usage(format!("{}: {e}", path.display()));
    let value: serde_json::Value = if path.extension().is_some_and(|x| x == "toml") {
        toml::from_str(&text).map_err(|e| parse_err(e.to_string()))?
    } else {
        serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))?
    };
    let value = match value.get("config") {
        Some(inner) if value.get("outputs").is_some() => inner.clone(),
        _ => value,
    };
    serde_json::from_value(value).map_err(|e| parse_err(e.to_string()))
}

impl RunConfig {
    pub fn resolve(command: &str, o: &Overrides) -> Result<Self, CliError> {
        let mut c = match &o.config {
            Some(p) => read_config_file(p)?,
            None => RunConfig::default(),
        };
        c.command = command.to_string();
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = &o.$field { c.$field = v.clone(); }
            )*};
        }
        set!(subset, mode, seed, seeds, profile, arch, heuristics, container, rotation, n_dists, n_instances);
        set!(episode_len, out, agent, simulations, futures, ks);
        macro_rules! set_opt {
            ($($field:ident),*) => {$(
                if o.$field.is_some() { c.$field = o.$field; }
            )*};
        }
        set_opt!(k, cap, pre_epochs, post_epochs, batches_per_epoch, batch_size, max_steps);
        if o.batches.is_some() {
            c.adaptation_batches = o.batches;
        }
        if !o.datasets.is_empty() {
            c.datasets = o.datasets.clone();
        }
        if !o.checkpoints.is_empty() {
            c.checkpoints = o.checkpoints.clone();
        }
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Usage(m.to_string()));
        if !(self.container.is_finite() && self.container > 0.0) {
            return bad("container must be positive");
        }
        if self.k == Some(0) || self.cap == Some(0) {
            return bad("k and cap must be at least 1");
        }
        if self.heuristics.is_empty() {
            return bad("at least one heuristic is required");
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required");
        }
        if self.simulations == 0 || self.futures == 0 {
            return bad("simulations and futures must be at least 1");
        }
        if TrainSchedule::profile(&self.profile).is_none() {
            return bad("profile must be `desk` or `paper-scale`");
        }
        self.k_values()?;
        Ok(())
    }

    pub fn env(&self) -> EnvConfig {
        let mut env = EnvConfig::for_mode(self.mode, self.container);
        env.candidates.heuristics = self.heuristics.clone();
        env.candidates.allow_rotation = self.rotation;
        if let Some(cap) = self.cap {
            env.candidates.cap = cap;
        }
        env
    }

    pub fn k(&self) -> usize {
        self.k.unwrap_or(match self.mode {
            Mode::Discrete => policy::DEFAULT_K_DISCRETE,
            Mode::Continuous => policy::DEFAULT_K_CONTINUOUS,
        })
    }

    pub fn architecture(&self) -> Architecture {
        match self.arch {
            ArchName::Linear => policy::linear(),
            ArchName::Mlp => policy::mlp(),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let mut cfg = TrainConfig::new(self.env(), self.k());
        let mut s = TrainSchedule::profile(&self.profile).expect("validated");
        s.pre_epochs = self.pre_epochs.unwrap_or(s.pre_epochs);
        s.post_epochs = self.post_epochs.unwrap_or(s.post_epochs);
        s.batches_per_epoch = self.batches_per_epoch.unwrap_or(s.batches_per_epoch);
        s.batch_size = self.batch_size.unwrap_or(s.batch_size);
        s.adaptation_batches = self.adaptation_batches.unwrap_or(s.adaptation_batches);
        cfg.schedule = s;
        cfg
    }

    pub fn dataset_size(&self) -> DatasetSize {
        DatasetSize { n_dists: self.n_dists, n_instances: self.n_instances, episode_len: self.episode_len }
    }

    pub fn mcts(&self) -> MctsConfig {
        MctsConfig { simulations: self.simulations, futures: self.futures, seed: self.seed, ..MctsConfig::default() }
    }

    pub fn k_values(&self) -> Result<Vec<KValue>, CliError> {
        self.ks.iter().map(|s| s.parse::<KValue>().map_err(CliError::Usage)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "seed = 7\ncontainer = 10.0\nsubset = \"OOD\"\n").unwrap();
        let o = Overrides { config: Some(path), seed: Some(9), ..Overrides::default() };
        let c = RunConfig::resolve("gen", &o).unwrap();
        assert_eq!((c.seed, c.container, c.subset), (9, 10.0, Subset::Ood));
        assert_eq!(c.command, "gen");
    }

    #[test]
    fn manifest_is_accepted_as_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        let cfg = RunConfig { seed: 3, ..RunConfig::default() };
        let m = serde_json::json!({ "config": cfg, "outputs": [] });
        std::fs::write(&path, m.to_string()).unwrap();
        let c = RunConfig::resolve("gen", &Overrides { config: Some(path), ..Overrides::default() }).unwrap();
        assert_eq!(c.seed, 3);
    }

    #[test]
    fn invalid_values_are_usage_errors() {
        for o in [
            Overrides { k: Some(0), ..Overrides::default() },
            Overrides { container: Some(-1.0), ..Overrides::default() },
            Overrides { profile: Some("huge".into()), ..Overrides::default() },
            Overrides { ks: Some(vec!["0".into()]), ..Overrides::default() },
        ] {
            assert!(matches!(RunConfig::resolve("eval", &o), Err(CliError::Usage(_))));
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"sead": 1}"#).unwrap();
        let o = Overrides { config: Some(path), ..Overrides::default() };
        assert!(matches!(RunConfig::resolve("gen", &o), Err(CliError::Usage(_))));
    }
}
