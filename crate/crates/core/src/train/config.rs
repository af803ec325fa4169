//! Line-based `key = value` run configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{run_training, EvalMode, Phase, RunResult, SchedulerConfig, TrainConfig};
use crate::error::{invalid_arg, Error, Result};
use crate::graph::{load_dataset, Graph, LoadOptions};
use crate::nn::{load_architecture, Model};
use crate::sampler::SamplerConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub name: String,
    /// Dataset directory.
    pub dataset: PathBuf,
    /// Replacement feature matrix.
    pub features: Option<PathBuf>,
    pub symmetrize: bool,
    /// Architecture file.
    pub model: PathBuf,
    /// Checkpoint loaded after initialization.
    pub init: Option<PathBuf>,
    pub seeds: Vec<u64>,
    pub sampler: SamplerConfig,
    pub phases: Vec<Phase>,
    pub scheduler: SchedulerConfig,
    pub eval: EvalMode,
}

fn parse_bool(v: &str) -> Option<bool> {
    match v {
        "true" | "1" | "yes" => Some(true),
        "false" | "0" | "no" => Some(false),
        _ => None,
    }
}

fn parse_list<T: std::str::FromStr>(v: &str) -> Option<Vec<T>> {
    v.split(',')
        .map(|s| s.trim().parse().ok())
        .collect::<Option<Vec<T>>>()
        .filter(|l| !l.is_empty())
}

impl RunConfig {
    /// Relative paths resolve against `path`'s directory.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |v: &str| base.join(v);
        let mut name = None;
        let mut dataset = None;
        let mut model = None;
        let mut features = None;
        let mut init = None;
        let mut symmetrize = false;
        let mut seeds = vec![42];
        let mut sampler = SamplerConfig::default();
        let mut phases = Vec::new();
        let mut scheduler = SchedulerConfig::default();
        let mut eval = EvalMode::Full;

        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let lno = i + 1;
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::parse(path, lno, "expected \"key = value\""))?;
            let bad = |what: &str| Error::parse(path, lno, format!("bad {what} {value:?} for {key}"));
            let wrap = |e: Error| Error::parse(path, lno, e.to_string());
            match key {
                "name" => name = Some(value.to_string()),
                "dataset" => dataset = Some(resolve(value)),
                "model" => model = Some(resolve(value)),
                "features" => features = Some(resolve(value)),
                "init" => init = Some(resolve(value)),
                "symmetrize" => symmetrize = parse_bool(value).ok_or_else(|| bad("flag"))?,
                "seed" => seeds = vec![value.parse().map_err(|_| bad("seed"))?],
                "seeds" => seeds = parse_list(value).ok_or_else(|| bad("seed list"))?,
                "phase" => phases.push(value.parse().map_err(wrap)?),
                "phases" => {
                    for p in value.split(';').filter(|p| !p.trim().is_empty()) {
                        phases.push(p.parse().map_err(wrap)?);
                    }
                }
                "eval" => {
                    eval = match value {
                        "full" => EvalMode::Full,
                        "sampled" => EvalMode::Sampled,
                        _ => return Err(bad("eval mode")),
                    }
                }
                "scheduler.factor" => scheduler.factor = value.parse().map_err(|_| bad("number"))?,
                "scheduler.patience" => scheduler.patience = value.parse().map_err(|_| bad("count"))?,
                "scheduler.threshold" => scheduler.threshold = value.parse().map_err(|_| bad("number"))?,
                "sampler.kind" => sampler.kind = value.parse().map_err(wrap)?,
                "sampler.roots" => sampler.roots = value.parse().map_err(|_| bad("count"))?,
                "sampler.walk_length" => sampler.walk_length = value.parse().map_err(|_| bad("count"))?,
                "sampler.walks_per_root" => {
                    sampler.walks_per_root = value.parse().map_err(|_| bad("count"))?
                }
                "sampler.steps" => sampler.steps = value.parse().map_err(|_| bad("count"))?,
                "sampler.partitions" => sampler.partitions = value.parse().map_err(|_| bad("count"))?,
                "sampler.fanouts" => sampler.fanouts = parse_list(value).ok_or_else(|| bad("fanout list"))?,
                "sampler.batch_size" => sampler.batch_size = value.parse().map_err(|_| bad("count"))?,
                "sampler.norm_samples_per_node" => {
                    sampler.norm_samples_per_node = value.parse().map_err(|_| bad("count"))?
                }
                _ => return Err(Error::parse(path, lno, format!("unknown key {key:?}"))),
            }
        }
        sampler.validate()?;
        if phases.is_empty() {
            return Err(invalid_arg!("{}: no phases given", path.display()));
        }
        let dataset = dataset.ok_or_else(|| invalid_arg!("{}: missing dataset", path.display()))?;
        let model = model.ok_or_else(|| invalid_arg!("{}: missing model", path.display()))?;
        Ok(Self {
            name: name.unwrap_or_else(|| {
                model
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "model".into())
            }),
            dataset,
            features,
            symmetrize,
            model,
            init,
            seeds,
            sampler,
            phases,
            scheduler,
            eval,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            sampler: self.sampler.clone(),
            phases: self.phases.clone(),
            seed,
            scheduler: self.scheduler,
            eval: self.eval.clone(),
        }
    }

    pub fn load_graph(&self) -> Result<Graph> {
        load_dataset(
            &self.dataset,
            &LoadOptions {
                symmetrize: self.symmetrize,
                features_override: self.features.clone(),
            },
        )
    }

    /// Fresh model for `seed`, with the init checkpoint applied.
    pub fn build_model(&self, seed: u64) -> Result<Model> {
        let specs = load_architecture(&self.model)?;
        let model = Model::from_specs(&self.name, &specs, seed)?;
        if let Some(init) = &self.init {
            model.load_checkpoint(init)?;
        }
        Ok(model)
    }

    /// The resolved settings as `key = value` lines.
    pub fn header(&self) -> String {
        let mut h = String::new();
        let s = &self.sampler;
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let fanouts: Vec<String> = s.fanouts.iter().map(usize::to_string).collect();
        let phases: Vec<String> = self.phases.iter().map(ToString::to_string).collect();
        let _ = writeln!(h, "name = {}", self.name);
        let _ = writeln!(h, "dataset = {}", self.dataset.display());
        if let Some(f) = &self.features {
            let _ = writeln!(h, "features = {}", f.display());
        }
        let _ = writeln!(h, "symmetrize = {}", self.symmetrize);
        let _ = writeln!(h, "model = {}", self.model.display());
        if let Some(i) = &self.init {
            let _ = writeln!(h, "init = {}", i.display());
        }
        let _ = writeln!(h, "seeds = {}", seeds.join(","));
        let _ = writeln!(h, "sampler.kind = {}", s.kind.as_str());
        let _ = writeln!(h, "sampler.roots = {}", s.roots);
        let _ = writeln!(h, "sampler.walk_length = {}", s.walk_length);
        let _ = writeln!(h, "sampler.walks_per_root = {}", s.walks_per_root);
        let _ = writeln!(h, "sampler.steps = {}", s.steps);
        let _ = writeln!(h, "sampler.partitions = {}", s.partitions);
        let _ = writeln!(h, "sampler.fanouts = {}", fanouts.join(","));
        let _ = writeln!(h, "sampler.batch_size = {}", s.batch_size);
        let _ = writeln!(h, "sampler.norm_samples_per_node = {}", s.norm_samples_per_node);
        let _ = writeln!(h, "phases = {}", phases.join("; "));
        let _ = writeln!(h, "scheduler.factor = {}", self.scheduler.factor);
        let _ = writeln!(h, "scheduler.patience = {}", self.scheduler.patience);
        let _ = writeln!(h, "scheduler.threshold = {}", self.scheduler.threshold);
        let _ = writeln!(
            h,
            "eval = {}",
            match self.eval {
                EvalMode::Full => "full",
                EvalMode::Sampled => "sampled",
            }
        );
        h
    }
}

/// Loads data and model for `seed` and trains. Returns the trained model.
pub fn execute_run(cfg: &RunConfig, seed: u64) -> Result<(RunResult, Model)> {
    let g = cfg.load_graph()?;
    let model = cfg.build_model(seed)?;
    let result = run_training(&model, &g, &cfg.train_config(seed))?;
    Ok((result, model))
}
