//! Multi-seed aggregation, comparison tables and metrics files.

use std::path::Path;

use super::{EpochRecord, RunResult, SplitMetrics};
use crate::error::{invalid_arg, Error, Result};
use crate::tensor::snapshot::format_f64;

pub const DEFAULT_SEEDS: [u64; 3] = [42, 9001, 27032002];

/// Test accuracy over seeds, with population standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedSummary {
    pub runs: Vec<RunResult>,
    pub mean: f64,
    pub std: f64,
    pub best_val_mean: f64,
    pub best_val_std: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl SeedSummary {
    pub fn from_runs(runs: Vec<RunResult>) -> Result<Self> {
        if runs.is_empty() {
            return Err(invalid_arg!("no runs to summarise"));
        }
        let finals: Vec<f64> = runs.iter().map(|r| r.final_test_acc).collect();
        let best: Vec<f64> = runs.iter().map(|r| r.best_val_test_acc).collect();
        let (mean, std) = mean_std(&finals);
        let (best_val_mean, best_val_std) = mean_std(&best);
        Ok(Self {
            runs,
            mean,
            std,
            best_val_mean,
            best_val_std,
        })
    }
}

/// Runs `run` once per seed on up to `threads` worker threads. Results
/// come back in seed order regardless of scheduling.
pub fn multi_seed<F>(seeds: &[u64], threads: usize, run: F) -> Result<SeedSummary>
where
    F: Fn(u64) -> Result<RunResult> + Sync,
{
    if seeds.is_empty() {
        return Err(invalid_arg!("at least one seed is required"));
    }
    let threads = threads.clamp(1, seeds.len());
    let mut results: Vec<Option<Result<RunResult>>> = (0..seeds.len()).map(|_| None).collect();
    if threads == 1 {
        for (slot, &s) in results.iter_mut().zip(seeds) {
            *slot = Some(run(s));
        }
    } else {
        let chunk = seeds.len().div_ceil(threads);
        std::thread::scope(|scope| {
            for (slots, seeds) in results.chunks_mut(chunk).zip(seeds.chunks(chunk)) {
                let run = &run;
                scope.spawn(move || {
                    for (slot, &s) in slots.iter_mut().zip(seeds) {
                        *slot = Some(run(s));
                    }
                });
            }
        });
    }
    let runs = results
        .into_iter()
        .map(|r| r.expect("every seed ran"))
        .collect::<Result<Vec<_>>>()?;
    SeedSummary::from_runs(runs)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareRow {
    pub name: String,
    /// Fractions in [0, 1].
    pub mean: f64,
    pub std: f64,
    /// `mean - baseline mean`.
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareTable {
    pub baseline: String,
    pub rows: Vec<CompareRow>,
}

fn pct(v: f64) -> String {
    format!("{:.1}", v * 100.0)
}

fn signed_pct(v: f64) -> String {
    let s = format!("{:+.1}", v * 100.0);
    if s == "-0.0" {
        "+0.0".into()
    } else {
        s
    }
}

impl CompareTable {
    /// `name,mean,std,delta` in percent with one decimal.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,mean,std,delta\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.name,
                pct(r.mean),
                pct(r.std),
                signed_pct(r.delta)
            ));
        }
        out
    }

    /// Aligned `name  mean±std  Δ` lines.
    pub fn to_text(&self) -> String {
        let cells: Vec<[String; 3]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.name.clone(),
                    format!("{}±{}", pct(r.mean), pct(r.std)),
                    signed_pct(r.delta),
                ]
            })
            .collect();
        let header = ["model".to_string(), "accuracy".to_string(), format!("Δ vs {}", self.baseline)];
        let width = |i: usize| {
            cells
                .iter()
                .map(|c| c[i].chars().count())
                .chain([header[i].chars().count()])
                .max()
                .unwrap_or(0)
        };
        let (w0, w1) = (width(0), width(1));
        let line = |c: &[String; 3]| {
            let pad = |s: &str, w: usize| format!("{s}{}", " ".repeat(w - s.chars().count()));
            format!("{}  {}  {}\n", pad(&c[0], w0), pad(&c[1], w1), c[2])
        };
        let mut out = line(&header);
        for c in &cells {
            out.push_str(&line(c));
        }
        out
    }
}

/// One row per entry, in input order. `entries` are (name, test accuracies).
pub fn compare_table(entries: &[(String, Vec<f64>)], baseline: &str) -> Result<CompareTable> {
    let stats: Vec<(String, f64, f64)> = entries
        .iter()
        .map(|(name, accs)| {
            if accs.is_empty() {
                return Err(invalid_arg!("{name} has no accuracies"));
            }
            if name.contains([',', '\n']) {
                return Err(invalid_arg!("model name {name:?} contains a comma or line break"));
            }
            let (m, s) = mean_std(accs);
            Ok((name.clone(), m, s))
        })
        .collect::<Result<_>>()?;
    let base = stats
        .iter()
        .find(|(n, _, _)| n == baseline)
        .map(|s| s.1)
        .ok_or_else(|| invalid_arg!("baseline {baseline:?} is not among the compared models"))?;
    Ok(CompareTable {
        baseline: baseline.to_string(),
        rows: stats
            .into_iter()
            .map(|(name, mean, std)| CompareRow {
                name,
                mean,
                std,
                delta: mean - base,
            })
            .collect(),
    })
}

/// Parses `to_csv` output back into percent-valued rows (mean, std, delta
/// as printed, divided by 100).
pub fn parse_compare_csv(text: &str) -> Result<Vec<CompareRow>> {
    let mut lines = text.lines();
    if lines.next() != Some("name,mean,std,delta") {
        return Err(invalid_arg!("missing name,mean,std,delta header"));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 4 {
                return Err(invalid_arg!("bad compare row {l:?}"));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map(|v| v / 100.0)
                    .map_err(|_| invalid_arg!("bad number {s:?} in {l:?}"))
            };
            Ok(CompareRow {
                name: f[0].to_string(),
                mean: num(f[1])?,
                std: num(f[2])?,
                delta: num(f[3])?,
            })
        })
        .collect()
}

/// `epoch,split,loss,accuracy` with splits batch, train, val, test.
/// Replaces any existing file.
pub fn write_metrics_csv(records: &[EpochRecord], path: &Path) -> Result<()> {
    let mut out = String::from("epoch,split,loss,accuracy\n");
    for r in records {
        for (name, m) in [("batch", r.batch), ("train", r.train), ("val", r.val), ("test", r.test)] {
            out.push_str(&format!(
                "{},{name},{},{}\n",
                r.epoch,
                format_f64(m.loss),
                format_f64(m.accuracy)
            ));
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Rows of a metrics file as (epoch, split, metrics).
pub fn read_metrics_csv(path: &Path) -> Result<Vec<(usize, String, SplitMetrics)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "epoch,split,loss,accuracy")) => {}
        _ => return Err(Error::parse(path, 1, "missing epoch,split,loss,accuracy header")),
    }
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let bad = || Error::parse(path, i + 1, format!("bad metrics row {l:?}"));
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 4 {
                return Err(bad());
            }
            Ok((
                f[0].parse().map_err(|_| bad())?,
                f[1].to_string(),
                SplitMetrics {
                    loss: f[2].parse().map_err(|_| bad())?,
                    accuracy: f[3].parse().map_err(|_| bad())?,
                },
            ))
        })
        .collect()
}
