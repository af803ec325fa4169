use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use super::{build_graph, BuildOptions, Graph, Split};
use crate::error::{Error, Result};
use crate::tensor::snapshot::{load_matrix, write_matrix};

/// Parses `src<TAB>dst` lines. File order and duplicates are preserved.
pub fn load_edge_list(path: &Path) -> Result<Vec<(usize, usize)>> {
    let mut edges = Vec::new();
    for_each_pair(path, |line, a, b| {
        let src = parse_id(path, line, a)?;
        let dst = parse_id(path, line, b)?;
        edges.push((src, dst));
        Ok(())
    })?;
    Ok(edges)
}

/// Parses `node_id<TAB>class_id` lines into a dense label vector.
pub fn load_labels(path: &Path, num_nodes: usize) -> Result<Vec<usize>> {
    let mut labels = vec![None; num_nodes];
    for_each_pair(path, |line, a, b| {
        let v = parse_node(path, line, a, num_nodes)?;
        labels[v] = Some(parse_id(path, line, b)?);
        Ok(())
    })?;
    labels
        .into_iter()
        .enumerate()
        .map(|(v, l)| l.ok_or_else(|| Error::InvalidGraph(format!("{}: node {v} has no label", path.display()))))
        .collect()
}

/// Parses `node_id<TAB>train|val|test` lines.
pub fn load_splits(path: &Path, num_nodes: usize) -> Result<Vec<Split>> {
    let mut splits = vec![None; num_nodes];
    for_each_pair(path, |line, a, b| {
        let v = parse_node(path, line, a, num_nodes)?;
        let s = b
            .parse::<Split>()
            .map_err(|_| Error::parse(path, line, format!("unknown split {b:?}")))?;
        splits[v] = Some(s);
        Ok(())
    })?;
    splits
        .into_iter()
        .enumerate()
        .map(|(v, s)| s.ok_or_else(|| Error::InvalidGraph(format!("{}: node {v} has no split tag", path.display()))))
        .collect()
}

fn for_each_pair(path: &Path, mut f: impl FnMut(usize, &str, &str) -> Result<()>) -> Result<()> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.trim_end_matches('\r').split('\t');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) => f(lno, a.trim(), b.trim())?,
            _ => return Err(Error::parse(path, lno, "expected two tab-separated fields")),
        }
    }
    Ok(())
}

fn parse_id(path: &Path, line: usize, s: &str) -> Result<usize> {
    s.parse::<usize>().map_err(|_| {
        let msg = if s.starts_with('-') {
            format!("negative id {s:?}")
        } else {
            format!("non-integer id {s:?}")
        };
        Error::parse(path, line, msg)
    })
}

fn parse_node(path: &Path, line: usize, s: &str, n: usize) -> Result<usize> {
    let v = parse_id(path, line, s)?;
    if v >= n {
        return Err(Error::parse(path, line, format!("node {v} out of range [0, {n})")));
    }
    Ok(v)
}

/// File locations of a dataset directory.
#[derive(Clone, Debug)]
pub struct DatasetFiles {
    pub edges: PathBuf,
    pub features: PathBuf,
    pub labels: PathBuf,
    pub splits: PathBuf,
}

impl DatasetFiles {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            edges: dir.join("edges.tsv"),
            features: dir.join("features.txt"),
            labels: dir.join("labels.tsv"),
            splits: dir.join("splits.tsv"),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct LoadOptions {
    pub symmetrize: bool,
    /// Replaces the directory's `features.txt`.
    pub features_override: Option<PathBuf>,
}

pub fn load_dataset(dir: &Path, opts: &LoadOptions) -> Result<Graph> {
    let files = DatasetFiles::in_dir(dir);
    let features_path = opts.features_override.as_ref().unwrap_or(&files.features);
    let features = load_matrix(features_path)?;
    let n = features.rows();
    let edges = load_edge_list(&files.edges)?;
    let labels = load_labels(&files.labels, n)?;
    let splits = load_splits(&files.splits, n)?;
    let g = build_graph(&edges, features, labels, splits, n, BuildOptions::default())?;
    Ok(if opts.symmetrize { g.symmetrize() } else { g })
}

/// Writes the four dataset files into `dir`, replacing existing ones.
pub fn write_dataset(g: &Graph, dir: &Path) -> Result<DatasetFiles> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = DatasetFiles::in_dir(dir);

    let mut buf = Vec::new();
    for (s, d) in g.edges() {
        writeln!(buf, "{s}\t{d}").expect("write to Vec");
    }
    write_file(&files.edges, &buf)?;

    buf.clear();
    write_matrix(g.features(), &mut buf).expect("write to Vec");
    write_file(&files.features, &buf)?;

    buf.clear();
    for (v, l) in g.labels().iter().enumerate() {
        writeln!(buf, "{v}\t{l}").expect("write to Vec");
    }
    write_file(&files.labels, &buf)?;

    buf.clear();
    for (v, s) in g.splits().iter().enumerate() {
        writeln!(buf, "{v}\t{s}").expect("write to Vec");
    }
    write_file(&files.splits, &buf)?;
    Ok(files)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
