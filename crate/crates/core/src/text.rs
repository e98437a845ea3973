//! Word and character n-gram count features over transcripts.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NgramUnit {
    Word,
    /// Characters over the whole text; n-grams may span a word boundary.
    CharAcross,
    /// Characters inside each token only.
    CharWithin,
}

impl NgramUnit {
    pub fn as_str(self) -> &'static str {
        match self {
            NgramUnit::Word => "word",
            NgramUnit::CharAcross => "char_across",
            NgramUnit::CharWithin => "char_within",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Count,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NgramConfig {
    pub unit: NgramUnit,
    pub n_min: usize,
    pub n_max: usize,
    pub min_doc_freq: usize,
    pub max_vocab: usize,
    pub lowercase: bool,
    pub weighting: Weighting,
}

impl Default for NgramConfig {
    fn default() -> Self {
        NgramConfig::word()
    }
}

impl NgramConfig {
    pub fn word() -> Self {
        NgramConfig {
            unit: NgramUnit::Word,
            n_min: 1,
            n_max: 3,
            min_doc_freq: 2,
            max_vocab: 200_000,
            lowercase: true,
            weighting: Weighting::Count,
        }
    }

    pub fn char_across() -> Self {
        NgramConfig {
            unit: NgramUnit::CharAcross,
            n_max: 10,
            ..NgramConfig::word()
        }
    }

    pub fn char_within() -> Self {
        NgramConfig {
            unit: NgramUnit::CharWithin,
            n_max: 10,
            ..NgramConfig::word()
        }
    }

    pub fn with_n(mut self, n_min: usize, n_max: usize) -> Self {
        self.n_min = n_min;
        self.n_max = n_max;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_min < 1 || self.n_min > self.n_max {
            return Err(Error::Config(format!(
                "n-gram orders must satisfy 1 <= n_min <= n_max, got {}..{}",
                self.n_min, self.n_max
            )));
        }
        if self.max_vocab == 0 {
            return Err(Error::Config("max_vocab must be positive".into()));
        }
        Ok(())
    }
}

/// Splits on Unicode whitespace; punctuation stays attached.
pub fn tokenize(text: &str, lowercase: bool) -> Vec<String> {
    text.split_whitespace()
        .map(|t| if lowercase { t.to_lowercase() } else { t.to_string() })
        .collect()
}

/// Multiset of n-grams of every order in `n_min..=n_max`.
pub fn extract_ngrams(text: &str, config: &NgramConfig) -> HashMap<String, usize> {
    let mut out: HashMap<String, usize> = HashMap::new();
    let tokens = tokenize(text, config.lowercase);
    let (lo, hi) = (config.n_min, config.n_max);
    match config.unit {
        NgramUnit::Word => {
            for n in lo..=hi.min(tokens.len()) {
                for w in tokens.windows(n) {
                    *out.entry(w.join(" ")).or_default() += 1;
                }
            }
        }
        NgramUnit::CharAcross => {
            let joined: Vec<char> = tokens.join(" ").chars().collect();
            char_grams(&joined, lo, hi, &mut out);
        }
        NgramUnit::CharWithin => {
            for t in &tokens {
                let chars: Vec<char> = t.chars().collect();
                char_grams(&chars, lo, hi, &mut out);
            }
        }
    }
    out
}

fn char_grams(chars: &[char], lo: usize, hi: usize, out: &mut HashMap<String, usize>) {
    for n in lo..=hi.min(chars.len()) {
        for w in chars.windows(n) {
            *out.entry(w.iter().collect()).or_default() += 1;
        }
    }
}

/// N-gram to column mapping. Columns follow sorted n-gram order.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    pub config: NgramConfig,
    pub ngrams: Vec<String>,
    pub doc_freqs: Vec<usize>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    fn from_parts(config: NgramConfig, ngrams: Vec<String>, doc_freqs: Vec<usize>) -> Self {
        let index = ngrams
            .iter()
            .enumerate()
            .map(|(i, g)| (g.clone(), i))
            .collect();
        Vocabulary {
            config,
            ngrams,
            doc_freqs,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.ngrams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ngrams.is_empty()
    }

    pub fn get(&self, ngram: &str) -> Option<usize> {
        self.index.get(ngram).copied()
    }

    /// Writes `index<TAB>ngram<TAB>docfreq` lines. Tabs and newlines inside
    /// n-grams cannot occur because tokens never contain whitespace.
    pub fn write_tsv(&self, mut w: impl Write) -> Result<()> {
        for (i, (g, df)) in self.ngrams.iter().zip(&self.doc_freqs).enumerate() {
            writeln!(w, "{i}\t{g}\t{df}").map_err(|e| Error::Serde(e.to_string()))?;
        }
        Ok(())
    }

    pub fn read_tsv(r: impl BufRead, config: NgramConfig) -> Result<Vocabulary> {
        let mut ngrams = Vec::new();
        let mut dfs = Vec::new();
        for (k, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::Serde(e.to_string()))?;
            let parts: Vec<&str> = line.split('\t').collect();
            let bad = || Error::Data(format!("malformed vocabulary line {}", k + 1));
            if parts.len() != 3 || parts[0].parse::<usize>().ok() != Some(k) {
                return Err(bad());
            }
            ngrams.push(parts[1].to_string());
            dfs.push(parts[2].parse().map_err(|_| bad())?);
        }
        Ok(Vocabulary::from_parts(config, ngrams, dfs))
    }
}

/// Keeps n-grams with document frequency `>= min_doc_freq`, then the
/// `max_vocab` most frequent (ties to the lexicographically smaller).
pub fn fit_vocabulary<S: AsRef<str> + Sync>(texts: &[S], config: &NgramConfig) -> Result<Vocabulary> {
    config.validate()?;
    if texts.is_empty() {
        return Err(Error::Data("cannot fit a vocabulary on an empty corpus".into()));
    }
    let df: HashMap<String, usize> = texts
        .par_iter()
        .map(|t| {
            extract_ngrams(t.as_ref(), config)
                .into_keys()
                .collect::<HashSet<String>>()
        })
        .fold(HashMap::new, |mut acc: HashMap<String, usize>, set| {
            for g in set {
                *acc.entry(g).or_default() += 1;
            }
            acc
        })
        .reduce(HashMap::new, |mut a, b| {
            for (g, c) in b {
                *a.entry(g).or_default() += c;
            }
            a
        });

    let mut kept: Vec<(String, usize)> = df
        .into_iter()
        .filter(|(_, c)| *c >= config.min_doc_freq)
        .collect();
    if kept.len() > config.max_vocab {
        kept.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        kept.truncate(config.max_vocab);
    }
    kept.sort_unstable_by(|a, b| a.0.cmp(&b.0));
    let (ngrams, dfs) = kept.into_iter().unzip();
    Ok(Vocabulary::from_parts(config.clone(), ngrams, dfs))
}

/// Index-sorted sparse vector of positive values.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector {
    pub dim: usize,
    pub entries: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, index: usize) -> f64 {
        self.entries
            .binary_search_by_key(&index, |e| e.0)
            .map_or(0.0, |k| self.entries[k].1)
    }
}

pub fn vectorize(text: &str, vocab: &Vocabulary) -> SparseVector {
    let mut entries: Vec<(usize, f64)> = extract_ngrams(text, &vocab.config)
        .into_iter()
        .filter_map(|(g, c)| {
            vocab.get(&g).map(|i| {
                let v = match vocab.config.weighting {
                    Weighting::Count => c as f64,
                    Weighting::Binary => 1.0,
                };
                (i, v)
            })
        })
        .collect();
    entries.sort_unstable_by_key(|e| e.0);
    SparseVector {
        dim: vocab.len(),
        entries,
    }
}

/// Horizontal concatenation; `b`'s indices are offset by `a.dim`.
pub fn concat_feature_spaces(a: &SparseVector, b: &SparseVector) -> SparseVector {
    let mut entries = a.entries.clone();
    entries.extend(b.entries.iter().map(|&(i, v)| (i + a.dim, v)));
    SparseVector {
        dim: a.dim + b.dim,
        entries,
    }
}

/// One or more vocabularies laid side by side as a single column space.
#[derive(Debug, Clone, PartialEq)]
pub struct TextSpace {
    pub vocabs: Vec<Vocabulary>,
}

impl TextSpace {
    pub fn fit<S: AsRef<str> + Sync>(texts: &[S], configs: &[NgramConfig]) -> Result<TextSpace> {
        let vocabs = configs
            .iter()
            .map(|c| fit_vocabulary(texts, c))
            .collect::<Result<_>>()?;
        Ok(TextSpace { vocabs })
    }

    pub fn dim(&self) -> usize {
        self.vocabs.iter().map(Vocabulary::len).sum()
    }

    pub fn vectorize(&self, text: &str) -> SparseVector {
        let mut parts = self.vocabs.iter().map(|v| vectorize(text, v));
        let first = parts.next().unwrap_or(SparseVector {
            dim: 0,
            entries: Vec::new(),
        });
        parts.fold(first, |acc, p| concat_feature_spaces(&acc, &p))
    }

    pub fn transform<S: AsRef<str> + Sync>(&self, texts: &[S]) -> CsrMatrix {
        let rows: Vec<SparseVector> = texts.par_iter().map(|t| self.vectorize(t.as_ref())).collect();
        CsrMatrix::from_rows(self.dim(), rows.into_iter().map(|r| r.entries))
    }

    /// Column names prefixed by unit, e.g. `char_across:ab `.
    pub fn column_names(&self) -> Vec<String> {
        self.vocabs
            .iter()
            .flat_map(|v| v.ngrams.iter().map(move |g| format!("{}:{g}", v.config.unit.as_str())))
            .collect()
    }
}

/// Writes the sparse matrix format: `V=<dim>` then `id<TAB>idx:count ...`.
pub fn write_sparse(ids: &[String], m: &CsrMatrix, mut w: impl Write) -> Result<()> {
    let err = |e: std::io::Error| Error::Serde(e.to_string());
    writeln!(w, "V={}", m.n_cols).map_err(err)?;
    for (i, id) in ids.iter().enumerate() {
        write!(w, "{id}\t").map_err(err)?;
        let cells: Vec<String> = m.row(i).map(|(c, v)| format!("{c}:{v}")).collect();
        writeln!(w, "{}", cells.join(" ")).map_err(err)?;
    }
    Ok(())
}

pub fn read_sparse(r: impl BufRead) -> Result<(Vec<String>, CsrMatrix)> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| Error::Serde(e.to_string()))?
        .ok_or_else(|| Error::Data("empty sparse matrix file".into()))?;
    let dim: usize = header
        .strip_prefix("V=")
        .and_then(|d| d.trim().parse().ok())
        .ok_or_else(|| Error::Data(format!("bad sparse header `{header}`")))?;
    let mut ids = Vec::new();
    let mut m = CsrMatrix::empty(dim);
    for (k, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::Serde(e.to_string()))?;
        let bad = || Error::Data(format!("malformed sparse row at line {}", k + 2));
        let (id, rest) = line.split_once('\t').ok_or_else(bad)?;
        let mut row = Vec::new();
        for cell in rest.split_whitespace() {
            let (c, v) = cell.split_once(':').ok_or_else(bad)?;
            let c: usize = c.parse().map_err(|_| bad())?;
            let v: f64 = v.parse().map_err(|_| bad())?;
            if c >= dim {
                return Err(bad());
            }
            row.push((c, v));
        }
        ids.push(id.to_string());
        m.push_row(row);
    }
    Ok((ids, m))
}

/// Sorted multiset view, convenient for comparisons.
pub fn ngram_counts(text: &str, config: &NgramConfig) -> BTreeMap<String, usize> {
    extract_ngrams(text, config).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(items: &[&str]) -> BTreeMap<String, usize> {
        items.iter().map(|s| (s.to_string(), 1)).collect()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("So I think", true), ["so", "i", "think"]);
        assert!(tokenize("", true).is_empty());
        assert_eq!(tokenize("it's  good.\n", true), ["it's", "good."]);
        assert_eq!(tokenize("So", false), ["So"]);
    }

    #[test]
    fn ngram_examples() {
        let across = NgramConfig::char_across().with_n(3, 3);
        assert_eq!(ngram_counts("ab cd", &across), set(&["ab ", "b c", " cd"]));
        let within = NgramConfig::char_within().with_n(3, 3);
        assert!(ngram_counts("ab cd", &within).is_empty());
        let word = NgramConfig::word().with_n(2, 2);
        assert_eq!(ngram_counts("a b c", &word), set(&["a b", "b c"]));
    }

    #[test]
    fn whitespace_runs_collapse_for_char_across() {
        let cfg = NgramConfig::char_across().with_n(2, 2);
        assert_eq!(ngram_counts("  a \t\n b ", &cfg), set(&["a ", " b"]));
    }

    #[test]
    fn vocabulary_thresholds_and_order() {
        let cfg = NgramConfig::word().with_n(1, 1);
        let v = fit_vocabulary(&["b a", "a b"], &cfg).unwrap();
        assert_eq!(v.ngrams, ["a", "b"]);
        assert_eq!(v.doc_freqs, [2, 2]);

        let mut docs = vec!["common"; 9];
        docs.push("common rare");
        let v = fit_vocabulary(&docs, &cfg).unwrap();
        assert_eq!(v.ngrams, ["common"]);

        assert!(fit_vocabulary::<&str>(&[], &cfg).is_err());
    }

    #[test]
    fn max_vocab_keeps_most_frequent_then_lexicographic() {
        let cfg = NgramConfig {
            max_vocab: 2,
            min_doc_freq: 1,
            ..NgramConfig::word().with_n(1, 1)
        };
        let v = fit_vocabulary(&["z y x", "z y", "z w"], &cfg).unwrap();
        assert_eq!(v.ngrams, ["y", "z"]);
        let cfg = NgramConfig { max_vocab: 3, ..cfg };
        let v = fit_vocabulary(&["d c b a", "d"], &cfg).unwrap();
        // d has df 2; a, b, c tie at 1 and a, b win lexicographically.
        assert_eq!(v.ngrams, ["a", "b", "d"]);
    }

    #[test]
    fn vectorize_and_concat() {
        let cfg = NgramConfig::word().with_n(1, 2);
        let docs = ["the cat sat", "the cat ran"];
        let v = fit_vocabulary(&docs, &cfg).unwrap();
        assert_eq!(v.ngrams, ["cat", "the", "the cat"]);
        let x = vectorize("the cat the cat dog", &v);
        assert_eq!(x.entries, [(0, 2.0), (1, 2.0), (2, 2.0)]);
        assert!(vectorize("dog bird", &v).entries.is_empty());

        let a = SparseVector { dim: 5, entries: vec![(4, 1.0)] };
        let b = SparseVector { dim: 7, entries: vec![(0, 2.0), (6, 3.0)] };
        let c = concat_feature_spaces(&a, &b);
        assert_eq!(c.dim, 12);
        assert_eq!(c.entries, [(4, 1.0), (5, 2.0), (11, 3.0)]);
        let e = SparseVector { dim: 3, entries: vec![] };
        assert_eq!(concat_feature_spaces(&e, &b).entries, [(3, 2.0), (9, 3.0)]);
    }

    #[test]
    fn combined_space_keeps_both_views() {
        let docs = ["so i think", "so i think that"];
        let space = TextSpace::fit(&docs, &[NgramConfig::word(), NgramConfig::char_across()]).unwrap();
        let names = space.column_names();
        assert_eq!(names.len(), space.dim());
        let x = space.vectorize("so i think");
        let word_dim = space.vocabs[0].len();
        assert!(x.entries.iter().any(|e| e.0 < word_dim));
        assert!(x.entries.iter().any(|e| e.0 >= word_dim));
        assert!(names[..word_dim].iter().all(|n| n.starts_with("word:")));
        assert!(names[word_dim..].iter().all(|n| n.starts_with("char_across:")));
    }

    #[test]
    fn sparse_and_vocab_files_round_trip() {
        let m = CsrMatrix::from_rows(6, vec![vec![(0, 1.0), (5, 3.0)], vec![]]);
        let ids = vec!["a".to_string(), "b".to_string()];
        let mut buf = Vec::new();
        write_sparse(&ids, &m, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "V=6\na\t0:1 5:3\nb\t\n");
        let (ids2, m2) = read_sparse(buf.as_slice()).unwrap();
        assert_eq!((ids2, m2), (ids, m));

        let v = fit_vocabulary(&["x y", "y x"], &NgramConfig::word()).unwrap();
        let mut buf = Vec::new();
        v.write_tsv(&mut buf).unwrap();
        let back = Vocabulary::read_tsv(buf.as_slice(), v.config.clone()).unwrap();
        assert_eq!(back.ngrams, v.ngrams);
        assert_eq!(back.get("x y"), v.get("x y"));
    }

    fn text_strategy() -> impl Strategy<Value = String> {
        prop::collection::vec(prop::sample::select(vec!["ab", "b", "cab", "a.", "Zz", " ", "\t"]), 0..12)
            .prop_map(|v| v.join(" "))
    }

    proptest! {
        #[test]
        fn word_ngram_totals(text in text_strategy(), n in 1usize..4) {
            let k = tokenize(&text, true).len();
            let cfg = NgramConfig::word().with_n(n, n);
            let total: usize = extract_ngrams(&text, &cfg).values().sum();
            prop_assert_eq!(total, (k + 1).saturating_sub(n));
        }

        #[test]
        fn char_ngram_space_rules(text in text_strategy()) {
            for g in extract_ngrams(&text, &NgramConfig::char_within()).keys() {
                prop_assert!(!g.contains(' '));
            }
            for g in extract_ngrams(&text, &NgramConfig::char_across()).keys() {
                prop_assert!(!g.contains("  "));
            }
        }

        #[test]
        fn vectorize_is_additive(a in text_strategy(), b in text_strategy()) {
            // Within-token n-grams cannot straddle the join, so counts add exactly.
            let cfg = NgramConfig { min_doc_freq: 1, ..NgramConfig::char_within() };
            let v = fit_vocabulary(&[a.as_str(), b.as_str()], &cfg).unwrap();
            let joined = vectorize(&format!("{a} {b}"), &v);
            let (va, vb) = (vectorize(&a, &v), vectorize(&b, &v));
            for i in 0..v.len() {
                prop_assert_eq!(joined.get(i), va.get(i) + vb.get(i));
            }
        }

        #[test]
        fn vocabulary_ignores_document_order(mut docs in prop::collection::vec(text_strategy(), 1..6)) {
            let cfg = NgramConfig::char_across().with_n(1, 4);
            let v1 = fit_vocabulary(&docs, &cfg).unwrap();
            docs.reverse();
            let v2 = fit_vocabulary(&docs, &cfg).unwrap();
            prop_assert_eq!(v1.ngrams, v2.ngrams);
            prop_assert_eq!(v1.doc_freqs, v2.doc_freqs);
        }
    }
}
