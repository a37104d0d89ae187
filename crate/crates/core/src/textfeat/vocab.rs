use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::tokenize::{tokenize, TokenSequence};
use crate::corpus::UserHistory;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NgramRange {
    Unigram,
    UnigramBigram,
}

impl NgramRange {
    fn max_n(self) -> usize {
        match self {
            NgramRange::Unigram => 1,
            NgramRange::UnigramBigram => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabEntry {
    pub ngram: String,
    pub frequency: u64,
}

/// N-gram vocabulary. Column `i` is `entries()[i]`; columns are ordered by
/// descending corpus frequency with ties broken lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    n_range: NgramRange,
    min_count: u64,
    entries: Vec<VocabEntry>,
    index: HashMap<String, u32>,
}

/// Calls `f` on every n-gram of one post. Bigrams are `"a b"`.
fn for_each_ngram(tokens: &[String], n_range: NgramRange, buf: &mut String, mut f: impl FnMut(&str)) {
    for t in tokens {
        f(t);
    }
    if n_range.max_n() >= 2 {
        for pair in tokens.windows(2) {
            buf.clear();
            buf.push_str(&pair[0]);
            buf.push(' ');
            buf.push_str(&pair[1]);
            f(buf);
        }
    }
}

/// Builds a vocabulary from per-user, per-post token sequences. N-grams never
/// span two posts.
pub fn build_vocab(corpus_tokens: &[Vec<TokenSequence>], n_range: NgramRange, min_count: u64) -> Result<Vocab> {
    if min_count == 0 {
        return Err(Error::Parameter("min_count must be at least 1".into()));
    }
    let mut counts: HashMap<String, u64> = HashMap::new();
    let mut buf = String::new();
    for user in corpus_tokens {
        for post in user {
            for_each_ngram(post.tokens(), n_range, &mut buf, |g| {
                if let Some(c) = counts.get_mut(g) {
                    *c += 1;
                } else {
                    counts.insert(g.to_string(), 1);
                }
            });
        }
    }
    let mut entries: Vec<VocabEntry> = counts
        .into_iter()
        .filter(|(_, c)| *c >= min_count)
        .map(|(ngram, frequency)| VocabEntry { ngram, frequency })
        .collect();
    entries.sort_by(|a, b| b.frequency.cmp(&a.frequency).then_with(|| a.ngram.cmp(&b.ngram)));
    Ok(Vocab::from_entries(n_range, min_count, entries))
}

impl Vocab {
    fn from_entries(n_range: NgramRange, min_count: u64, entries: Vec<VocabEntry>) -> Vocab {
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.ngram.clone(), i as u32))
            .collect();
        Vocab {
            n_range,
            min_count,
            entries,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn n_range(&self) -> NgramRange {
        self.n_range
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    pub fn entries(&self) -> &[VocabEntry] {
        &self.entries
    }

    pub fn index_of(&self, ngram: &str) -> Option<usize> {
        self.index.get(ngram).map(|&i| i as usize)
    }

    /// `ngram<TAB>index<TAB>frequency`, one line per column.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        for (i, e) in self.entries.iter().enumerate() {
            writeln!(w, "{}\t{}\t{}", e.ngram, i, e.frequency)?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(reader: R, n_range: NgramRange, min_count: u64) -> Result<Vocab> {
        let mut entries = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let bad = |m: &str| Error::Parse {
                path: "<vocab tsv>".into(),
                line: i + 1,
                message: m.to_string(),
            };
            let mut parts = line.split('\t');
            let (Some(ngram), Some(idx), Some(freq), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
                return Err(bad("expected three tab-separated fields"));
            };
            let idx: usize = idx.parse().map_err(|_| bad("bad index"))?;
            if idx != entries.len() {
                return Err(bad("indices must be contiguous from 0"));
            }
            let frequency = freq.parse().map_err(|_| bad("bad frequency"))?;
            entries.push(VocabEntry {
                ngram: ngram.to_string(),
                frequency,
            });
        }
        Ok(Vocab::from_entries(n_range, min_count, entries))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    Binary,
    Count,
    Topic,
}

/// How n-gram occurrences are encoded by [`vectorize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    Binary,
    Count,
}

/// Sparse non-negative feature vector of dimension `dim`, entries sorted by
/// column with no explicit zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub dim: usize,
    pub mode: FeatureMode,
    pub entries: Vec<(u32, f64)>,
}

impl FeatureVector {
    pub fn empty(dim: usize, mode: FeatureMode) -> Self {
        FeatureVector {
            dim,
            mode,
            entries: Vec::new(),
        }
    }

    pub fn get(&self, col: usize) -> f64 {
        self.entries
            .binary_search_by_key(&(col as u32), |e| e.0)
            .map(|i| self.entries[i].1)
            .unwrap_or(0.0)
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn sum(&self) -> f64 {
        self.entries.iter().map(|e| e.1).sum()
    }

    /// Coordinate-wise sum; the mode of `self` is kept.
    pub fn add(&self, other: &FeatureVector) -> FeatureVector {
        let mut acc: HashMap<u32, f64> = self.entries.iter().copied().collect();
        for &(c, v) in &other.entries {
            *acc.entry(c).or_insert(0.0) += v;
        }
        let mut entries: Vec<(u32, f64)> = acc.into_iter().filter(|e| e.1 != 0.0).collect();
        entries.sort_unstable_by_key(|e| e.0);
        FeatureVector {
            dim: self.dim.max(other.dim),
            mode: self.mode,
            entries,
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.dim];
        for &(c, v) in &self.entries {
            d[c as usize] = v;
        }
        d
    }
}

/// Vectorizes pre-tokenized posts; out-of-vocabulary n-grams are ignored.
pub fn vectorize_tokens(posts: &[TokenSequence], vocab: &Vocab, encoding: Encoding) -> FeatureVector {
    let mut acc: HashMap<u32, f64> = HashMap::new();
    let mut buf = String::new();
    for post in posts {
        for_each_ngram(post.tokens(), vocab.n_range, &mut buf, |g| {
            if let Some(&i) = vocab.index.get(g) {
                *acc.entry(i).or_insert(0.0) += 1.0;
            }
        });
    }
    let mut entries: Vec<(u32, f64)> = acc.into_iter().collect();
    entries.sort_unstable_by_key(|e| e.0);
    let mode = match encoding {
        Encoding::Binary => {
            for e in &mut entries {
                e.1 = 1.0;
            }
            FeatureMode::Binary
        }
        Encoding::Count => FeatureMode::Count,
    };
    FeatureVector {
        dim: vocab.len(),
        mode,
        entries,
    }
}

pub fn tokenize_history(history: &UserHistory) -> Vec<TokenSequence> {
    history.posts.iter().map(|p| tokenize(&p.text)).collect()
}

/// Binary or count encoding of a whole history.
pub fn vectorize(history: &UserHistory, vocab: &Vocab, encoding: Encoding) -> FeatureVector {
    vectorize_tokens(&tokenize_history(history), vocab, encoding)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Post;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn posts(texts: &[&str]) -> Vec<TokenSequence> {
        texts.iter().map(|t| tokenize(t)).collect()
    }

    fn history(texts: &[&str]) -> UserHistory {
        UserHistory {
            user_id: "h".into(),
            posts: texts.iter().map(|t| Post::real(*t).unwrap()).collect(),
        }
    }

    #[test]
    fn threshold_filters_rare_terms() {
        let mut user = Vec::new();
        for _ in 0..12 {
            user.push(tokenize("cancer"));
        }
        for _ in 0..4 {
            user.push(tokenize("leukemia"));
        }
        let v = build_vocab(&[user], NgramRange::Unigram, 10).unwrap();
        assert!(v.index_of("cancer").is_some());
        assert!(v.index_of("leukemia").is_none());
    }

    #[test]
    fn min_count_one_keeps_every_distinct_ngram() {
        let corpus = vec![posts(&["a b c", "b c d"]), posts(&["a a"])];
        let v = build_vocab(&corpus, NgramRange::UnigramBigram, 1).unwrap();
        // unigrams a b c d; bigrams "a b" "b c" "c d" "a a"
        assert_eq!(v.len(), 8);
        assert_eq!(v.entries()[0].ngram, "a");
        assert_eq!(v.entries()[0].frequency, 3);
    }

    #[test]
    fn bigrams_do_not_cross_posts() {
        let corpus = vec![posts(&["so i", "have it", "i have"])];
        let v = build_vocab(&corpus, NgramRange::UnigramBigram, 1).unwrap();
        assert_eq!(v.entries()[v.index_of("i have").unwrap()].frequency, 1);

        // brute force over each post separately
        let mut expected = HashSet::new();
        for p in &corpus[0] {
            for t in p.tokens() {
                expected.insert(t.clone());
            }
            for w in p.tokens().windows(2) {
                expected.insert(format!("{} {}", w[0], w[1]));
            }
        }
        let got: HashSet<String> = v.entries().iter().map(|e| e.ngram.clone()).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn count_and_binary_encodings() {
        let corpus = vec![posts(&["cancer cancer", "cancer now"])];
        let v = build_vocab(&corpus, NgramRange::Unigram, 1).unwrap();
        let h = history(&["cancer cancer", "cancer now"]);
        let idx = v.index_of("cancer").unwrap();
        assert_eq!(vectorize(&h, &v, Encoding::Count).get(idx), 3.0);
        assert_eq!(vectorize(&h, &v, Encoding::Binary).get(idx), 1.0);
        let oov = vectorize(&history(&["nothing here"]), &v, Encoding::Count);
        assert_eq!(oov.nnz(), 0);
        assert_eq!(oov.dim, v.len());
    }

    #[test]
    fn empty_corpus_is_empty_vocab() {
        let v = build_vocab(&[], NgramRange::Unigram, 10).unwrap();
        assert!(v.is_empty());
        assert!(matches!(build_vocab(&[], NgramRange::Unigram, 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn tsv_round_trip() {
        let corpus = vec![posts(&["x y z", "x y"])];
        let v = build_vocab(&corpus, NgramRange::UnigramBigram, 1).unwrap();
        let mut buf = Vec::new();
        v.write_tsv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("x\t0\t2\n"));
        let back = Vocab::read_tsv(&buf[..], NgramRange::UnigramBigram, 1).unwrap();
        assert_eq!(back, v);
    }

    fn word() -> impl Strategy<Value = String> {
        prop::sample::select(vec!["a", "b", "c", "d", "e", "cancer", "i", "have"]).prop_map(String::from)
    }

    fn post_text() -> impl Strategy<Value = String> {
        prop::collection::vec(word(), 1..8).prop_map(|w| w.join(" "))
    }

    proptest! {
        #[test]
        fn count_mode_is_additive(a in prop::collection::vec(post_text(), 1..5), b in prop::collection::vec(post_text(), 1..5)) {
            let all: Vec<&str> = a.iter().chain(&b).map(|s| s.as_str()).collect();
            let v = build_vocab(&[posts(&all)], NgramRange::UnigramBigram, 1).unwrap();
            let pa = posts(&a.iter().map(|s| s.as_str()).collect::<Vec<_>>());
            let pb = posts(&b.iter().map(|s| s.as_str()).collect::<Vec<_>>());
            let joint = vectorize_tokens(&posts(&all), &v, Encoding::Count);
            let split = vectorize_tokens(&pa, &v, Encoding::Count).add(&vectorize_tokens(&pb, &v, Encoding::Count));
            prop_assert_eq!(joint.entries, split.entries);
        }

        #[test]
        fn binary_is_indicator_of_count(a in prop::collection::vec(post_text(), 1..6), min_count in 1u64..3) {
            let p = posts(&a.iter().map(|s| s.as_str()).collect::<Vec<_>>());
            let v = build_vocab(std::slice::from_ref(&p), NgramRange::UnigramBigram, min_count).unwrap();
            let c = vectorize_tokens(&p, &v, Encoding::Count);
            let b = vectorize_tokens(&p, &v, Encoding::Binary);
            for col in 0..v.len() {
                prop_assert_eq!(b.get(col) == 1.0, c.get(col) >= 1.0);
            }
        }

        #[test]
        fn refitting_gives_same_indices(a in prop::collection::vec(post_text(), 1..6)) {
            let p = posts(&a.iter().map(|s| s.as_str()).collect::<Vec<_>>());
            let v1 = build_vocab(std::slice::from_ref(&p), NgramRange::UnigramBigram, 1).unwrap();
            let v2 = build_vocab(&[p], NgramRange::UnigramBigram, 1).unwrap();
            prop_assert_eq!(v1, v2);
        }
    }
}
