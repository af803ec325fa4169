//! The `granet` command line.
//!
//! Exit codes: 0 on success, 1 for invalid input, 2 for runtime failures.
//! Every verb first prints its resolved settings as `key = value` lines.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::embed::{bow_fit, bow_transform, generate_corpus, load_corpus, save_corpus, save_vocabulary, token_filter, TextSpec};
use crate::error::{invalid_arg, Error, Result};
use crate::graph::{generate_synthetic, load_dataset, write_dataset, LoadOptions, Split, SyntheticSpec};
use crate::nn::{gradcheck, LayerKind};
use crate::sampler::{Sampler, SamplerConfig, SamplerKind};
use crate::tensor::snapshot::{format_f64, save_matrix};
use crate::train::{
    compare_table, evaluate, multi_seed, write_metrics_csv, RunConfig, RunResult, SeedSummary,
};

/// Gradient checks pass below this relative error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-5;

#[derive(Parser, Debug)]
#[command(name = "granet", version, about = "Graph representation learning engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a stochastic block model dataset.
    GenSynthetic(GenSynthetic),
    /// Fit a bag-of-words vocabulary and write the feature matrix.
    Bow(Bow),
    /// Train the model of a run config over one or more seeds.
    Train(Train),
    /// Accuracy of a saved checkpoint on one split.
    Eval(Eval),
    /// Train several run configs and tabulate them against a baseline.
    Compare(Compare),
    /// Finite-difference gradient check of a layer kind.
    Gradcheck(Gradcheck),
    /// Per-node inclusion frequencies of a sampler.
    SampleStats(SampleStats),
}

#[derive(Args, Debug)]
struct GenSynthetic {
    #[arg(long, default_value_t = 2000)]
    nodes: usize,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 0.9)]
    homophily: f64,
    /// Standard deviation of the Gaussian feature noise.
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long, default_value_t = 40.0)]
    intra_degree: f64,
    #[arg(long, default_value_t = 40.0)]
    inter_degree: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Also write `corpus.tsv` with class-indicative documents.
    #[arg(long)]
    corpus: bool,
    /// Fraction of class words in generated documents.
    #[arg(long, default_value_t = 0.1)]
    signal: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct Bow {
    /// `node_id<TAB>text` file.
    #[arg(long)]
    corpus: PathBuf,
    /// Rows of the output matrix; defaults to the largest id plus one.
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long, default_value_t = 500)]
    vocab_size: usize,
    /// One stopword per line.
    #[arg(long)]
    stopwords: Option<PathBuf>,
    /// Presence flags instead of counts.
    #[arg(long)]
    binary: bool,
    /// Documents longer than this many tokens get a zero row.
    #[arg(long)]
    max_tokens: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    vocab_out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct SeedArgs {
    /// Single seed; overrides the config. Default 42.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated seeds; overrides --seed and the config.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
}

impl SeedArgs {
    fn resolve(&self, cfg: &mut RunConfig) {
        if let Some(s) = &self.seeds {
            cfg.seeds = s.clone();
        } else if let Some(s) = self.seed {
            cfg.seeds = vec![s];
        }
    }
}

#[derive(Args, Debug)]
struct Train {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    seeds: SeedArgs,
}

#[derive(Args, Debug)]
struct Eval {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value = "test")]
    split: Split,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args, Debug)]
struct Compare {
    /// Run configs to train; repeatable.
    #[arg(long)]
    config: Vec<PathBuf>,
    /// Earlier `train` output directories as NAME=DIR; repeatable.
    #[arg(long)]
    results: Vec<String>,
    #[arg(long)]
    baseline: String,
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    seeds: SeedArgs,
}

#[derive(Args, Debug)]
struct Gradcheck {
    /// Layer kind, or `all`.
    #[arg(long)]
    layer: String,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args, Debug)]
struct SampleStats {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "saint_rw")]
    sampler: SamplerKind,
    #[arg(long, default_value = "train")]
    split: Split,
    /// Number of sampled subgraphs.
    #[arg(long, default_value_t = 10_000)]
    draws: usize,
    #[arg(long)]
    roots: Option<usize>,
    #[arg(long)]
    walk_length: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    fanouts: Option<Vec<usize>>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    partitions: Option<usize>,
    #[arg(long)]
    symmetrize: bool,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Parses `args` (program name first), runs the verb and returns the exit
/// code. Normal output goes to `out`, diagnostics to `err`.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}

/// Entry point for the binary.
pub fn main() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}

fn threads() -> usize {
    std::env::var("GRANET_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&t| t >= 1)
        .unwrap_or(1)
}

fn put(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<i32> {
    match cmd {
        Command::GenSynthetic(a) => gen_synthetic(a, out),
        Command::Bow(a) => bow(a, out),
        Command::Train(a) => train(a, out),
        Command::Eval(a) => eval(a, out),
        Command::Compare(a) => compare(a, out),
        Command::Gradcheck(a) => grad_check(a, out),
        Command::SampleStats(a) => sample_stats(a, out),
    }
}

fn gen_synthetic(a: GenSynthetic, out: &mut dyn Write) -> Result<i32> {
    let spec = SyntheticSpec {
        num_nodes: a.nodes,
        num_classes: a.classes,
        homophily: a.homophily,
        feature_noise: a.noise,
        intra_degree: a.intra_degree,
        inter_degree: a.inter_degree,
        seed: a.seed,
    };
    put(
        out,
        &format!(
            "command = gen-synthetic\nnodes = {}\nclasses = {}\nhomophily = {}\nnoise = {}\n\
             intra_degree = {}\ninter_degree = {}\nseed = {}\ncorpus = {}\nout = {}\n",
            a.nodes,
            a.classes,
            a.homophily,
            a.noise,
            a.intra_degree,
            a.inter_degree,
            a.seed,
            a.corpus,
            a.out.display()
        ),
    )?;
    let g = generate_synthetic(&spec)?;
    write_dataset(&g, &a.out)?;
    if a.corpus {
        let text = TextSpec {
            signal: a.signal,
            seed: a.seed,
            ..Default::default()
        };
        save_corpus(&generate_corpus(g.labels(), g.num_classes(), &text)?, &a.out.join("corpus.tsv"))?;
    }
    put(out, &format!("wrote {} nodes, {} edges\n", g.num_nodes(), g.num_edges()))?;
    Ok(0)
}

fn bow(a: Bow, out: &mut dyn Write) -> Result<i32> {
    put(
        out,
        &format!(
            "command = bow\ncorpus = {}\nvocab_size = {}\nbinary = {}\nmax_tokens = {}\nout = {}\n",
            a.corpus.display(),
            a.vocab_size,
            a.binary,
            a.max_tokens.map_or("none".into(), |m| m.to_string()),
            a.out.display()
        ),
    )?;
    let mut corpus = load_corpus(&a.corpus)?;
    let nodes = a
        .nodes
        .unwrap_or_else(|| corpus.keys().next_back().map_or(0, |m| m + 1));
    if let Some(m) = a.max_tokens {
        let (kept, removed) = token_filter(&corpus, m)?;
        put(out, &format!("removed {} documents over {m} tokens\n", removed.len()))?;
        corpus = kept;
    }
    let stop = match &a.stopwords {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            Some(text.lines().map(|l| l.trim().to_lowercase()).filter(|l| !l.is_empty()).collect::<BTreeSet<_>>())
        }
        None => None,
    };
    let vocab = bow_fit(&corpus, a.vocab_size, stop.as_ref())?;
    let x = bow_transform(&corpus, &vocab, nodes, a.binary)?;
    save_matrix(&x, &a.out)?;
    if let Some(p) = &a.vocab_out {
        save_vocabulary(&vocab, p)?;
    }
    put(out, &format!("wrote {}x{} features\n", x.rows(), x.cols()))?;
    Ok(0)
}

/// Trains every seed of `cfg`, writing per-seed metrics and checkpoints
/// into `dir`.
fn train_seeds(cfg: &RunConfig, dir: &Path) -> Result<SeedSummary> {
    create_dir(dir)?;
    let summary = multi_seed(&cfg.seeds, threads(), |seed| {
        let (result, model) = crate::train::execute_run(cfg, seed)?;
        write_metrics_csv(&result.epochs, &dir.join(format!("metrics_{seed}.csv")))?;
        model.save_checkpoint(&dir.join(format!("model_{seed}.ckpt")))?;
        Ok(result)
    })?;
    write_file(&dir.join("results.csv"), &results_csv(&cfg.name, &summary.runs))?;
    Ok(summary)
}

fn results_csv(name: &str, runs: &[RunResult]) -> String {
    let mut s = String::from("name,seed,final_test_acc,best_val_epoch,best_val_test_acc\n");
    for r in runs {
        s.push_str(&format!(
            "{name},{},{},{},{}\n",
            r.seed,
            format_f64(r.final_test_acc),
            r.best_val_epoch,
            format_f64(r.best_val_test_acc)
        ));
    }
    s
}

/// (name, final test accuracies) from a `results.csv`.
fn read_results(path: &Path) -> Result<(String, Vec<f64>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut name = None;
    let mut accs = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(Error::parse(path, i + 1, "expected 5 fields"));
        }
        name.get_or_insert_with(|| f[0].to_string());
        accs.push(
            f[2].parse()
                .map_err(|_| Error::parse(path, i + 1, format!("bad accuracy {:?}", f[2])))?,
        );
    }
    let name = name.ok_or_else(|| invalid_arg!("{} has no runs", path.display()))?;
    Ok((name, accs))
}

fn summary_line(name: &str, s: &SeedSummary) -> String {
    format!(
        "{name}: test {:.1}±{:.1} (final epoch), {:.1}±{:.1} (best val epoch) over {} seeds\n",
        s.mean * 100.0,
        s.std * 100.0,
        s.best_val_mean * 100.0,
        s.best_val_std * 100.0,
        s.runs.len()
    )
}

fn train(a: Train, out: &mut dyn Write) -> Result<i32> {
    let mut cfg = RunConfig::load(&a.config)?;
    a.seeds.resolve(&mut cfg);
    put(out, &format!("command = train\nout_dir = {}\n{}", a.out_dir.display(), cfg.header()))?;
    let summary = train_seeds(&cfg, &a.out_dir)?;
    let table = compare_table(
        &[(cfg.name.clone(), summary.runs.iter().map(|r| r.final_test_acc).collect())],
        &cfg.name,
    )?;
    write_file(&a.out_dir.join("summary.csv"), &table.to_csv())?;
    put(out, &summary_line(&cfg.name, &summary))?;
    Ok(0)
}

fn eval(a: Eval, out: &mut dyn Write) -> Result<i32> {
    let cfg = RunConfig::load(&a.config)?;
    put(
        out,
        &format!(
            "command = eval\ncheckpoint = {}\nsplit = {}\n{}",
            a.checkpoint.display(),
            a.split,
            cfg.header()
        ),
    )?;
    let g = cfg.load_graph()?;
    let model = cfg.build_model(a.seed)?;
    model.load_checkpoint(&a.checkpoint)?;
    let acc = evaluate(&model, &g, a.split)?;
    put(out, &format!("{} accuracy = {}\n", a.split, format_f64(acc)))?;
    Ok(0)
}

fn compare(a: Compare, out: &mut dyn Write) -> Result<i32> {
    if a.config.is_empty() && a.results.is_empty() {
        return Err(invalid_arg!("give at least one --config or --results"));
    }
    let mut configs = Vec::new();
    for p in &a.config {
        let mut c = RunConfig::load(p)?;
        a.seeds.resolve(&mut c);
        configs.push(c);
    }
    let mut header = format!("command = compare\nbaseline = {}\nout_dir = {}\n", a.baseline, a.out_dir.display());
    for r in &a.results {
        header.push_str(&format!("results = {r}\n"));
    }
    for c in &configs {
        header.push_str(&format!("[{}]\n{}", c.name, c.header()));
    }
    put(out, &header)?;
    create_dir(&a.out_dir)?;
    let mut entries = Vec::new();
    for r in &a.results {
        let (name, dir) = r
            .split_once('=')
            .ok_or_else(|| invalid_arg!("--results expects NAME=DIR, got {r:?}"))?;
        let (_, accs) = read_results(&Path::new(dir).join("results.csv"))?;
        entries.push((name.to_string(), accs));
    }
    for c in &configs {
        let s = train_seeds(c, &a.out_dir.join(&c.name))?;
        put(out, &summary_line(&c.name, &s))?;
        entries.push((c.name.clone(), s.runs.iter().map(|r| r.final_test_acc).collect()));
    }
    let table = compare_table(&entries, &a.baseline)?;
    write_file(&a.out_dir.join("compare.csv"), &table.to_csv())?;
    write_file(&a.out_dir.join("compare.txt"), &table.to_text())?;
    put(out, &table.to_text())?;
    Ok(0)
}

fn grad_check(a: Gradcheck, out: &mut dyn Write) -> Result<i32> {
    let kinds: Vec<LayerKind> = if a.layer == "all" {
        LayerKind::ALL.to_vec()
    } else {
        vec![a.layer.parse()?]
    };
    if a.trials == 0 {
        return Err(invalid_arg!("--trials must be at least 1"));
    }
    put(
        out,
        &format!("command = gradcheck\nlayer = {}\ntrials = {}\nseed = {}\n", a.layer, a.trials, a.seed),
    )?;
    let mut ok = true;
    for kind in kinds {
        let err = gradcheck(kind, a.trials, a.seed)?;
        let pass = err < GRADCHECK_TOLERANCE;
        ok &= pass;
        put(
            out,
            &format!(
                "{kind}: max relative error {err:.3e} ({})\n",
                if pass { "pass" } else { "FAIL" }
            ),
        )?;
    }
    Ok(if ok { 0 } else { 2 })
}

fn sample_stats(a: SampleStats, out: &mut dyn Write) -> Result<i32> {
    let g = load_dataset(
        &a.dataset,
        &LoadOptions {
            symmetrize: a.symmetrize,
            features_override: None,
        },
    )?;
    let mut cfg = SamplerConfig::for_split(a.sampler, a.split);
    cfg.seed = a.seed;
    if let Some(v) = a.roots {
        cfg.roots = v;
    }
    if let Some(v) = a.walk_length {
        cfg.walk_length = v;
    }
    if let Some(v) = &a.fanouts {
        cfg.fanouts = v.clone();
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.partitions {
        cfg.partitions = v;
    }
    if a.draws == 0 {
        return Err(invalid_arg!("--draws must be at least 1"));
    }
    put(
        out,
        &format!(
            "command = sample-stats\ndataset = {}\nsampler = {}\nsplit = {}\ndraws = {}\nroots = {}\n\
             walk_length = {}\nfanouts = {:?}\nbatch_size = {}\npartitions = {}\nseed = {}\nout = {}\n",
            a.dataset.display(),
            cfg.kind.as_str(),
            a.split,
            a.draws,
            cfg.roots,
            cfg.walk_length,
            cfg.fanouts,
            cfg.batch_size,
            cfg.partitions,
            cfg.seed,
            a.out.display()
        ),
    )?;
    let sampler = Sampler::new(&g, cfg, a.split)?;
    let mut counts = vec![0usize; g.num_nodes()];
    let mut drawn = 0;
    let mut epoch = 0;
    while drawn < a.draws {
        for s in sampler.epoch(epoch)? {
            if drawn == a.draws {
                break;
            }
            for &v in &s.nodes {
                counts[v] += 1;
            }
            drawn += 1;
        }
        epoch += 1;
    }
    let norm = match sampler.config().kind {
        SamplerKind::SaintRw => Some(sampler.norm()?),
        _ => None,
    };
    let mut csv = String::from("node,inclusions,frequency,loss_weight\n");
    for (v, &c) in counts.iter().enumerate() {
        csv.push_str(&format!(
            "{v},{c},{},{}\n",
            format_f64(c as f64 / drawn as f64),
            format_f64(norm.map_or(1.0, |n| n[v]))
        ));
    }
    write_file(&a.out, &csv)?;
    put(out, &format!("wrote {} node frequencies over {drawn} subgraphs\n", counts.len()))?;
    Ok(0)
}
