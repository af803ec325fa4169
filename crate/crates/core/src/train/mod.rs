//! Phased training with freeze schedules, plateau learning-rate decay,
//! evaluation and multi-seed aggregation.

mod config;
mod report;

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

pub use config::{execute_run, RunConfig};
pub use report::{
    compare_table, multi_seed, parse_compare_csv, read_metrics_csv, write_metrics_csv, CompareRow,
    CompareTable, SeedSummary, DEFAULT_SEEDS,
};

use crate::error::{invalid_arg, Error, Result};
use crate::graph::{Graph, Split};
use crate::nn::{GraphCtx, Model};
use crate::sampler::{Sampler, SamplerConfig, SamplerKind, SubgraphSample};
use crate::tensor::{Adam, Matrix, Tape};

/// What a phase freezes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FreezeTarget {
    /// Every parameter of one layer.
    Layer(usize),
    /// The inner layer of one graph-connected layer.
    Inner(usize),
    /// The inner layer of every graph-connected layer.
    AllInner,
}

impl fmt::Display for FreezeTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FreezeTarget::Layer(i) => write!(f, "{i}"),
            FreezeTarget::Inner(i) => write!(f, "{i}.inner"),
            FreezeTarget::AllInner => f.write_str("inner"),
        }
    }
}

impl FromStr for FreezeTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "inner" {
            return Ok(FreezeTarget::AllInner);
        }
        let index = |t: &str| {
            t.parse::<usize>()
                .map_err(|_| invalid_arg!("bad freeze target {s:?}; use N, N.inner or inner"))
        };
        match s.strip_suffix(".inner") {
            Some(i) => Ok(FreezeTarget::Inner(index(i)?)),
            None => Ok(FreezeTarget::Layer(index(s)?)),
        }
    }
}

/// A block of epochs sharing one learning rate and freeze set.
#[derive(Clone, Debug, PartialEq)]
pub struct Phase {
    pub epochs: usize,
    pub lr: f64,
    /// `None` keeps whatever is frozen when the phase starts; `Some` first
    /// unfreezes everything, then freezes the listed targets.
    pub frozen: Option<Vec<FreezeTarget>>,
    pub scheduler: bool,
    /// Floor for the plateau scheduler.
    pub min_lr: f64,
}

impl Phase {
    pub fn new(epochs: usize, lr: f64) -> Self {
        Self {
            epochs,
            lr,
            frozen: None,
            scheduler: false,
            min_lr: lr,
        }
    }

    pub fn freezing(mut self, targets: Vec<FreezeTarget>) -> Self {
        self.frozen = Some(targets);
        self
    }

    pub fn with_scheduler(mut self, min_lr: f64) -> Self {
        self.scheduler = true;
        self.min_lr = min_lr;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(invalid_arg!("a phase needs at least one epoch"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(invalid_arg!("phase learning rate must be positive, got {}", self.lr));
        }
        if self.scheduler && !(self.min_lr > 0.0 && self.min_lr <= self.lr) {
            return Err(invalid_arg!(
                "min_lr {} must lie in (0, lr = {}]",
                self.min_lr,
                self.lr
            ));
        }
        Ok(())
    }

    /// Two-phase fine-tuning: `frozen_epochs` with `targets` frozen and no
    /// scheduler, then everything trainable at `lr * 1e-2` with plateau
    /// decay down to `min_lr`.
    pub fn two_phase(
        frozen_epochs: usize,
        tuning_epochs: usize,
        lr: f64,
        min_lr: f64,
        targets: Vec<FreezeTarget>,
    ) -> Vec<Phase> {
        let tuned = lr * 1e-2;
        vec![
            Phase::new(frozen_epochs, lr).freezing(targets),
            Phase::new(tuning_epochs, tuned)
                .freezing(Vec::new())
                .with_scheduler(min_lr.min(tuned)),
        ]
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.epochs, self.lr)?;
        if let Some(t) = &self.frozen {
            let t: Vec<String> = t.iter().map(ToString::to_string).collect();
            write!(f, ":frozen={}", t.join(","))?;
        }
        if self.scheduler {
            write!(f, ":sched:min_lr={}", self.min_lr)?;
        }
        Ok(())
    }
}

impl FromStr for Phase {
    type Err = Error;

    /// `epochs:lr[:frozen=0,1.inner,...][:sched][:min_lr=x]`
    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.trim().split(':');
        let bad = || invalid_arg!("bad phase {s:?}; expected epochs:lr[:frozen=..][:sched][:min_lr=..]");
        let epochs = parts.next().and_then(|p| p.trim().parse().ok()).ok_or_else(bad)?;
        let lr: f64 = parts.next().and_then(|p| p.trim().parse().ok()).ok_or_else(bad)?;
        let mut phase = Phase::new(epochs, lr);
        let mut min_lr = None;
        for part in parts {
            let part = part.trim();
            if part == "sched" {
                phase.scheduler = true;
            } else if let Some(list) = part.strip_prefix("frozen=") {
                phase.frozen = Some(
                    list.split(',')
                        .filter(|t| !t.trim().is_empty())
                        .map(str::parse)
                        .collect::<Result<_>>()?,
                );
            } else if let Some(v) = part.strip_prefix("min_lr=") {
                min_lr = Some(v.trim().parse::<f64>().map_err(|_| bad())?);
            } else {
                return Err(bad());
            }
        }
        if let Some(m) = min_lr {
            phase.min_lr = m;
        }
        phase.validate()?;
        Ok(phase)
    }
}

fn apply_freeze(model: &Model, targets: &[FreezeTarget]) -> Result<()> {
    for t in targets {
        match *t {
            FreezeTarget::Layer(i) | FreezeTarget::Inner(i) if i >= model.len() => {
                return Err(invalid_arg!("freeze target {t} out of range for {} layers", model.len()));
            }
            FreezeTarget::Inner(i) if model.layers()[i].inner().is_none() => {
                return Err(invalid_arg!("layer {i} has no inner layer"));
            }
            _ => {}
        }
    }
    for layer in model.layers() {
        layer.set_frozen(false);
    }
    for t in targets {
        match *t {
            FreezeTarget::Layer(i) => model.layers()[i].set_frozen(true),
            FreezeTarget::Inner(i) => {
                if let Some(inner) = model.layers()[i].inner() {
                    inner.set_frozen(true);
                }
            }
            FreezeTarget::AllInner => {
                for layer in model.layers() {
                    if let Some(inner) = layer.inner() {
                        inner.set_frozen(true);
                    }
                }
            }
        }
    }
    Ok(())
}

/// Reduce-on-plateau constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchedulerConfig {
    pub factor: f64,
    pub patience: usize,
    pub threshold: f64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            factor: 0.5,
            patience: 10,
            threshold: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SchedulerState {
    pub best_val_acc: f64,
    pub epochs_since_improve: usize,
    pub current_lr: f64,
    pub factor: f64,
    pub patience: usize,
    pub threshold: f64,
    pub min_lr: f64,
}

impl SchedulerState {
    pub fn new(lr: f64, min_lr: f64, cfg: SchedulerConfig) -> Result<Self> {
        if !(cfg.factor > 0.0 && cfg.factor < 1.0) {
            return Err(invalid_arg!("scheduler factor must lie in (0, 1), got {}", cfg.factor));
        }
        if !(min_lr > 0.0 && min_lr <= lr) {
            return Err(invalid_arg!("min_lr {min_lr} must lie in (0, lr = {lr}]"));
        }
        Ok(Self {
            best_val_acc: f64::NEG_INFINITY,
            epochs_since_improve: 0,
            current_lr: lr,
            factor: cfg.factor,
            patience: cfg.patience,
            threshold: cfg.threshold,
            min_lr,
        })
    }
}

/// Records one validation accuracy and returns the learning rate to use
/// next. The rate is multiplied by `factor` once more than `patience`
/// epochs pass without an improvement above `threshold`.
pub fn plateau_step(state: &mut SchedulerState, val_acc: f64) -> f64 {
    if val_acc > state.best_val_acc + state.threshold {
        state.best_val_acc = val_acc;
        state.epochs_since_improve = 0;
    } else {
        state.epochs_since_improve += 1;
        if state.epochs_since_improve > state.patience {
            state.current_lr = (state.current_lr * state.factor).max(state.min_lr);
            state.epochs_since_improve = 0;
        }
    }
    state.current_lr
}

/// How validation and test metrics are computed each epoch.
#[derive(Clone, Debug, PartialEq)]
pub enum EvalMode {
    /// One forward pass over the whole graph.
    Full,
    /// Batches from a sampler of the training kind with per-split defaults.
    Sampled,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub sampler: SamplerConfig,
    pub phases: Vec<Phase>,
    pub seed: u64,
    pub scheduler: SchedulerConfig,
    pub eval: EvalMode,
}

impl TrainConfig {
    pub fn new(sampler: SamplerConfig, phases: Vec<Phase>, seed: u64) -> Self {
        Self {
            sampler,
            phases,
            seed,
            scheduler: SchedulerConfig::default(),
            eval: EvalMode::Full,
        }
    }
}

/// Loss and accuracy over one node set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitMetrics {
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub phase: usize,
    pub lr: f64,
    /// Mean over the epoch's batches, measured during training.
    pub batch: SplitMetrics,
    pub train: SplitMetrics,
    pub val: SplitMetrics,
    pub test: SplitMetrics,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    /// Test accuracy after the last epoch.
    pub final_test_acc: f64,
    /// First epoch with the highest validation accuracy.
    pub best_val_epoch: usize,
    /// Test accuracy at `best_val_epoch`.
    pub best_val_test_acc: f64,
    pub wall_time: Duration,
}

fn logits_and_targets(
    tape: &mut Tape,
    model: &Model,
    sample: &SubgraphSample,
) -> Result<(crate::tensor::Tensor, Vec<usize>, Vec<usize>)> {
    let ctx = GraphCtx::new(&sample.graph);
    let x = tape.constant(sample.graph.features().clone());
    let out = model.forward(tape, &ctx, x)?;
    let local = sample.seed_local();
    let logits = tape.gather_rows(out, local.clone().into())?;
    let targets = local.iter().map(|&v| sample.graph.labels()[v]).collect();
    Ok((logits, targets, local))
}

fn correct(logits: &Matrix, targets: &[usize]) -> usize {
    targets
        .iter()
        .enumerate()
        .filter(|&(i, &t)| logits.argmax_row(i) == t)
        .count()
}

/// Mean cross-entropy and accuracy of `logits` rows against `targets`.
fn metrics_of(logits: &Matrix, targets: &[usize]) -> SplitMetrics {
    let mut loss = 0.0;
    for (i, &t) in targets.iter().enumerate() {
        let row = logits.row(i);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        loss += lse - row[t];
    }
    let n = targets.len().max(1) as f64;
    SplitMetrics {
        loss: loss / n,
        accuracy: correct(logits, targets) as f64 / n,
    }
}

/// Full-graph forward; metrics for every split that has nodes.
pub fn evaluate_splits(model: &Model, g: &Graph) -> Result<[SplitMetrics; 3]> {
    let out = model.predict(g)?;
    Ok(Split::ALL.map(|split| {
        let nodes = g.split_nodes(split);
        let targets: Vec<usize> = nodes.iter().map(|&v| g.labels()[v]).collect();
        metrics_of(&out.select_rows(&nodes), &targets)
    }))
}

/// Fraction of `split` nodes whose largest output matches the label.
pub fn evaluate(model: &Model, g: &Graph, split: Split) -> Result<f64> {
    let nodes = g.split_nodes(split);
    if nodes.is_empty() {
        return Err(invalid_arg!("the {split} split has no nodes"));
    }
    let out = model.predict(g)?;
    let targets: Vec<usize> = nodes.iter().map(|&v| g.labels()[v]).collect();
    Ok(correct(&out.select_rows(&nodes), &targets) as f64 / nodes.len() as f64)
}

fn sampled_metrics(model: &Model, g: &Graph, kind: SamplerKind, split: Split, seed: u64) -> Result<SplitMetrics> {
    if g.split_nodes(split).is_empty() {
        return Ok(SplitMetrics { loss: 0.0, accuracy: 0.0 });
    }
    let mut cfg = SamplerConfig::for_split(kind, split);
    cfg.seed = seed;
    cfg.partitions = cfg.partitions.min(g.split_nodes(split).len());
    let sampler = Sampler::new(g, cfg, split)?;
    let (mut loss, mut hits, mut count) = (0.0, 0usize, 0usize);
    for sample in sampler.epoch(0)? {
        let mut tape = Tape::new();
        let (logits, targets, _) = logits_and_targets(&mut tape, model, &sample)?;
        let m = metrics_of(tape.value(logits), &targets);
        loss += m.loss * targets.len() as f64;
        hits += correct(tape.value(logits), &targets);
        count += targets.len();
    }
    let n = count.max(1) as f64;
    Ok(SplitMetrics {
        loss: loss / n,
        accuracy: hits as f64 / n,
    })
}

/// Trains `model` in place through every phase.
pub fn run_training(model: &Model, g: &Graph, cfg: &TrainConfig) -> Result<RunResult> {
    let start = Instant::now();
    if cfg.phases.is_empty() {
        return Err(invalid_arg!("training needs at least one phase"));
    }
    for p in &cfg.phases {
        p.validate()?;
    }
    if model.in_dim() != g.num_features() {
        return Err(crate::error::shape_err!(
            "model expects {} features, graph has {}",
            model.in_dim(),
            g.num_features()
        ));
    }
    if model.out_dim() != g.num_classes() {
        return Err(crate::error::shape_err!(
            "model outputs {} classes, graph has {}",
            model.out_dim(),
            g.num_classes()
        ));
    }
    let mut sampler_cfg = cfg.sampler.clone();
    sampler_cfg.seed = cfg.seed;
    let sampler = Sampler::new(g, sampler_cfg, Split::Train)?;
    let weighted = cfg.sampler.kind == SamplerKind::SaintRw;
    let mut opt = Adam::new(model.params());
    let mut records = Vec::new();
    let mut epoch = 0;

    for (pi, phase) in cfg.phases.iter().enumerate() {
        if let Some(targets) = &phase.frozen {
            apply_freeze(model, targets)?;
        }
        let mut sched = if phase.scheduler {
            Some(SchedulerState::new(phase.lr, phase.min_lr, cfg.scheduler)?)
        } else {
            None
        };
        let mut lr = phase.lr;
        for _ in 0..phase.epochs {
            let (mut loss_sum, mut hits, mut seen, mut batches) = (0.0, 0usize, 0usize, 0usize);
            for (bi, sample) in sampler.epoch(epoch)?.into_iter().enumerate() {
                if sample.seed_nodes.is_empty() {
                    continue;
                }
                opt.zero_grad();
                let mut tape = Tape::new();
                let (logits, targets, local) = logits_and_targets(&mut tape, model, &sample)?;
                let weights: Option<Vec<f64>> =
                    weighted.then(|| local.iter().map(|&v| sample.loss_weights[v]).collect());
                let loss = tape.weighted_cross_entropy(logits, &targets, weights.as_deref())?;
                let value = tape.value(loss)[(0, 0)];
                if !value.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        epoch,
                        batch: bi,
                        value,
                    });
                }
                tape.backward(loss)?;
                opt.step(lr)?;
                loss_sum += value;
                hits += correct(tape.value(logits), &targets);
                seen += targets.len();
                batches += 1;
            }
            let batch = SplitMetrics {
                loss: loss_sum / batches.max(1) as f64,
                accuracy: hits as f64 / seen.max(1) as f64,
            };
            let [train, mut val, mut test] = evaluate_splits(model, g)?;
            if cfg.eval == EvalMode::Sampled {
                val = sampled_metrics(model, g, cfg.sampler.kind, Split::Val, cfg.seed)?;
                test = sampled_metrics(model, g, cfg.sampler.kind, Split::Test, cfg.seed)?;
            }
            records.push(EpochRecord {
                epoch,
                phase: pi,
                lr,
                batch,
                train,
                val,
                test,
            });
            if let Some(s) = sched.as_mut() {
                lr = plateau_step(s, val.accuracy);
            }
            epoch += 1;
        }
    }

    let last = records.last().expect("at least one epoch ran");
    let best = records
        .iter()
        .fold(&records[0], |b, r| if r.val.accuracy > b.val.accuracy { r } else { b });
    Ok(RunResult {
        seed: cfg.seed,
        final_test_acc: last.test.accuracy,
        best_val_epoch: best.epoch,
        best_val_test_acc: best.test.accuracy,
        epochs: records,
        wall_time: start.elapsed(),
    })
}
