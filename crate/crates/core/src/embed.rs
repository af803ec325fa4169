//! Embedding functions over raw node text: bag-of-words, token-length
//! filtering, and loading of externally computed feature matrices.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rand::Rng as _;

use crate::error::{invalid_arg, Error, Result};
use crate::rng::{seeded, STREAM_CORPUS};
use crate::tensor::Matrix;

/// Node id to document text.
pub type Corpus = BTreeMap<usize, String>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
    /// Total occurrences in the fitted corpus, parallel to `words`.
    counts: Vec<usize>,
    /// Documents containing each word, parallel to `words`.
    doc_freq: Vec<usize>,
}

impl Vocabulary {
    /// Vocabulary in the given rank order, without fit statistics.
    pub fn from_words(words: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(invalid_arg!("duplicate vocabulary word {w:?}"));
            }
        }
        let k = words.len();
        Ok(Self {
            words,
            index,
            counts: vec![0; k],
            doc_freq: vec![0; k],
        })
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn doc_freq(&self) -> &[usize] {
        &self.doc_freq
    }
}

/// Lowercased runs of alphanumeric characters.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Keeps the `k` most frequent words, ties broken by ascending word.
pub fn bow_fit(corpus: &Corpus, k: usize, stopwords: Option<&BTreeSet<String>>) -> Result<Vocabulary> {
    if k == 0 {
        return Err(invalid_arg!("vocabulary size must be at least 1"));
    }
    if corpus.is_empty() {
        return Err(invalid_arg!("cannot fit a vocabulary on an empty corpus"));
    }
    let mut counts: HashMap<String, (usize, usize)> = HashMap::new();
    for text in corpus.values() {
        let mut in_doc = BTreeSet::new();
        for tok in tokenize(text) {
            if stopwords.is_some_and(|s| s.contains(&tok)) {
                continue;
            }
            let entry = counts.entry(tok.clone()).or_default();
            entry.0 += 1;
            if in_doc.insert(tok) {
                entry.1 += 1;
            }
        }
    }
    let mut ranked: Vec<(String, (usize, usize))> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1 .0.cmp(&a.1 .0).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(k);
    let mut vocab = Vocabulary::from_words(ranked.iter().map(|(w, _)| w.clone()).collect())?;
    vocab.counts = ranked.iter().map(|(_, c)| c.0).collect();
    vocab.doc_freq = ranked.iter().map(|(_, c)| c.1).collect();
    Ok(vocab)
}

/// `num_nodes × |vocab|` word counts (or presence flags when `binary`).
/// Nodes without a document get a zero row.
pub fn bow_transform(corpus: &Corpus, vocab: &Vocabulary, num_nodes: usize, binary: bool) -> Result<Matrix> {
    if let Some((&id, _)) = corpus.range(num_nodes..).next() {
        return Err(invalid_arg!("corpus id {id} out of range for {num_nodes} nodes"));
    }
    let mut x = Matrix::zeros(num_nodes, vocab.len());
    for (&id, text) in corpus {
        for tok in tokenize(text) {
            if let Some(j) = vocab.index_of(&tok) {
                x[(id, j)] = if binary { 1.0 } else { x[(id, j)] + 1.0 };
            }
        }
    }
    Ok(x)
}

/// Drops documents with more than `max_tokens` whitespace-separated tokens.
/// Returns the kept corpus and the removed ids, ascending.
pub fn token_filter(corpus: &Corpus, max_tokens: usize) -> Result<(Corpus, Vec<usize>)> {
    if max_tokens == 0 {
        return Err(invalid_arg!("max_tokens must be at least 1"));
    }
    let mut kept = Corpus::new();
    let mut removed = Vec::new();
    for (&id, text) in corpus {
        if text.split_whitespace().count() > max_tokens {
            removed.push(id);
        } else {
            kept.insert(id, text.clone());
        }
    }
    Ok((kept, removed))
}

/// Features in the matrix snapshot format.
pub fn load_feature_matrix(path: &Path) -> Result<Matrix> {
    crate::tensor::snapshot::load_matrix(path)
}

/// Reads `node_id<TAB>text` lines. Blank lines are skipped.
pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut corpus = Corpus::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, doc) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, i + 1, "expected \"node_id<TAB>text\""))?;
        let id: usize = id
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, i + 1, format!("bad node id {id:?}")))?;
        if corpus.insert(id, doc.to_string()).is_some() {
            return Err(Error::parse(path, i + 1, format!("duplicate node id {id}")));
        }
    }
    Ok(corpus)
}

pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    let mut out = String::new();
    for (id, text) in corpus {
        if text.contains(['\n', '\r']) {
            return Err(invalid_arg!("document {id} contains a line break"));
        }
        out.push_str(&format!("{id}\t{text}\n"));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_vocabulary(path: &Path) -> Result<Vocabulary> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Vocabulary::from_words(
        text.lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect(),
    )
}

pub fn save_vocabulary(vocab: &Vocabulary, path: &Path) -> Result<()> {
    let mut out = vocab.words.join("\n");
    out.push('\n');
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Generated documents whose words hint at the node's class.
#[derive(Clone, Debug, PartialEq)]
pub struct TextSpec {
    /// Words per document.
    pub doc_len: usize,
    /// Indicative words per class.
    pub class_words: usize,
    /// Shared background words.
    pub common_words: usize,
    /// Probability that a position holds a word of the node's class.
    pub signal: f64,
    pub seed: u64,
}

impl Default for TextSpec {
    fn default() -> Self {
        Self {
            doc_len: 40,
            class_words: 60,
            common_words: 600,
            signal: 0.1,
            seed: 42,
        }
    }
}

/// One document per node. Each word is drawn from the node's class words
/// with probability `signal`, otherwise from the common words.
pub fn generate_corpus(labels: &[usize], num_classes: usize, spec: &TextSpec) -> Result<Corpus> {
    if spec.doc_len == 0 || spec.class_words == 0 || spec.common_words == 0 {
        return Err(invalid_arg!("text spec sizes must be positive"));
    }
    if !(0.0..=1.0).contains(&spec.signal) {
        return Err(invalid_arg!("signal must lie in [0, 1], got {}", spec.signal));
    }
    if let Some(&bad) = labels.iter().find(|&&c| c >= num_classes) {
        return Err(invalid_arg!("label {bad} out of range for {num_classes} classes"));
    }
    let mut rng = seeded(spec.seed, STREAM_CORPUS);
    let mut corpus = Corpus::new();
    for (id, &class) in labels.iter().enumerate() {
        let words: Vec<String> = (0..spec.doc_len)
            .map(|_| {
                if rng.random::<f64>() < spec.signal {
                    format!("c{class}w{}", rng.random_range(0..spec.class_words))
                } else {
                    format!("w{}", rng.random_range(0..spec.common_words))
                }
            })
            .collect();
        corpus.insert(id, words.join(" "));
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(docs: &[&str]) -> Corpus {
        docs.iter().enumerate().map(|(i, d)| (i, d.to_string())).collect()
    }

    #[test]
    fn tie_breaks_lexicographically() {
        let v = bow_fit(&corpus(&["a b a", "b c"]), 2, None).unwrap();
        assert_eq!(v.words(), &["a", "b"]);
        assert_eq!(v.counts(), &[2, 2]);
        assert_eq!(v.doc_freq(), &[1, 2]);
    }

    #[test]
    fn small_corpus_keeps_everything() {
        let v = bow_fit(&corpus(&["Hello, WORLD!", "hello-there"]), 50, None).unwrap();
        assert_eq!(v.words(), &["hello", "there", "world"]);
        assert!(bow_fit(&Corpus::new(), 5, None).is_err());
        assert!(bow_fit(&corpus(&["a"]), 0, None).is_err());
    }

    #[test]
    fn stopwords_are_dropped() {
        let stop: BTreeSet<String> = ["the".to_string()].into();
        let v = bow_fit(&corpus(&["the cat the hat"]), 5, Some(&stop)).unwrap();
        assert_eq!(v.words(), &["cat", "hat"]);
    }

    #[test]
    fn transform_counts_and_flags() {
        let c = corpus(&["a b a", ""]);
        let v = Vocabulary::from_words(vec!["a".into(), "b".into()]).unwrap();
        let x = bow_transform(&c, &v, 3, false).unwrap();
        assert_eq!(x.row(0), &[2.0, 1.0]);
        assert_eq!(x.row(1), &[0.0, 0.0]);
        assert_eq!(x.row(2), &[0.0, 0.0]);
        let x = bow_transform(&c, &v, 2, true).unwrap();
        assert_eq!(x.row(0), &[1.0, 1.0]);
        assert!(bow_transform(&c, &v, 1, false).is_err());
    }

    #[test]
    fn token_filter_limits() {
        let long = vec!["x"; 513].join(" ");
        let c = corpus(&["one two three", &long]);
        let (kept, removed) = token_filter(&c, 512).unwrap();
        assert_eq!(removed, vec![1]);
        assert_eq!(kept.len(), 1);
        assert_eq!(token_filter(&c, usize::MAX).unwrap().0, c);
    }

    #[test]
    fn generated_corpus_is_deterministic() {
        let labels = [0, 1, 2, 1];
        let spec = TextSpec::default();
        let a = generate_corpus(&labels, 3, &spec).unwrap();
        assert_eq!(a, generate_corpus(&labels, 3, &spec).unwrap());
        assert_eq!(a[&0].split_whitespace().count(), spec.doc_len);
        assert!(generate_corpus(&[3], 3, &spec).is_err());
    }
}
