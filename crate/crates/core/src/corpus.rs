//! User-history corpora: JSONL loading, seeded synthetic base corpora and
//! random train/validation/test partitions.

use std::collections::{BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::Binomial;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, StreamRng};
use crate::taskgen::templates;

pub const DEFAULT_MAX_POSTS: usize = 60;
pub const DEFAULT_MIN_POSTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Real,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    Sickness,
    Isolation,
    Death,
}

impl SynthKind {
    pub const ALL: [SynthKind; 3] = [SynthKind::Sickness, SynthKind::Isolation, SynthKind::Death];
}

/// One post. `synth_kind` is set exactly when the post is synthetic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub text: String,
    pub origin: Origin,
    pub synth_kind: Option<SynthKind>,
}

impl Post {
    pub fn real(text: impl Into<String>) -> Result<Post> {
        let text = text.into();
        if text.is_empty() {
            return Err(Error::Parameter("post text must be non-empty".into()));
        }
        Ok(Post {
            text,
            origin: Origin::Real,
            synth_kind: None,
        })
    }

    pub fn synthetic(text: impl Into<String>, kind: SynthKind) -> Post {
        Post {
            text: text.into(),
            origin: Origin::Synthetic,
            synth_kind: Some(kind),
        }
    }

    pub fn is_valid(&self) -> bool {
        !self.text.is_empty() && (self.origin == Origin::Synthetic) == self.synth_kind.is_some()
    }
}

/// Ordered posts of a single user.
///
/// Base corpora keep at most `max_posts` posts per user; task transforms may
/// append synthetic posts beyond that.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserHistory {
    pub user_id: String,
    pub posts: Vec<Post>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Loaded,
    Synthesized,
}

/// Inclusive integer range with a target mean.
///
/// Values are drawn as `min + Binomial(max - min, (mean - min) / (max - min))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountRange {
    pub min: usize,
    pub max: usize,
    pub mean: f64,
}

impl CountRange {
    fn validate(&self, what: &str) -> Result<()> {
        let ok = self.min >= 1
            && self.min <= self.max
            && self.mean >= self.min as f64
            && self.mean <= self.max as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::Parameter(format!(
                "{what}: need 1 <= min <= mean <= max, got {self:?}"
            )))
        }
    }

    fn sample(&self, rng: &mut StreamRng) -> usize {
        if self.min == self.max {
            return self.min;
        }
        let span = (self.max - self.min) as u64;
        let q = ((self.mean - self.min as f64) / span as f64).clamp(0.0, 1.0);
        let extra = Binomial::new(span, q).expect("q clamped to [0, 1]").sample(rng);
        self.min + extra as usize
    }
}

/// Parameters of the synthetic base-corpus generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorParams {
    /// Number of distinct background word types.
    pub vocab_size: usize,
    /// Zipf exponent of background word frequencies.
    pub zipf_exponent: f64,
    pub posts_per_user: CountRange,
    /// Tokens per post, counted after tokenization (punctuation included).
    pub tokens_per_post: CountRange,
    /// Words per sentence frame, excluding the closing punctuation mark.
    pub sentence_words: CountRange,
    /// When false no background token coincides with a synthetic-post token.
    pub template_overlap: bool,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams {
            vocab_size: 5000,
            zipf_exponent: 1.07,
            posts_per_user: CountRange {
                min: DEFAULT_MIN_POSTS,
                max: DEFAULT_MAX_POSTS,
                mean: 41.0,
            },
            tokens_per_post: CountRange {
                min: 4,
                max: 120,
                mean: 37.37,
            },
            sentence_words: CountRange {
                min: 3,
                max: 14,
                mean: 8.0,
            },
            template_overlap: false,
        }
    }
}

/// Generator parameters together with the seed that produced a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorRecord {
    pub params: GeneratorParams,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub users: Vec<UserHistory>,
    pub provenance: Provenance,
    pub generator: Option<GeneratorRecord>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    fn check_unique_ids(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.users.len());
        for u in &self.users {
            if !seen.insert(u.user_id.as_str()) {
                return Err(Error::Parameter(format!("duplicate user_id {}", u.user_id)));
            }
        }
        Ok(())
    }

    /// Writes the corpus in the loader's JSONL schema.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for u in &self.users {
            let rec = RawUser {
                user_id: u.user_id.clone(),
                posts: u.posts.iter().map(|p| RawPost { text: p.text.clone() }).collect(),
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub train: Corpus,
    pub validation: Corpus,
    pub test: Corpus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        SplitSizes {
            train: 3200,
            validation: 800,
            test: 4000,
        }
    }
}

impl SplitSizes {
    pub fn total(&self) -> usize {
        self.train + self.validation + self.test
    }
}

#[derive(Deserialize, Serialize)]
struct RawPost {
    text: String,
}

#[derive(Deserialize, Serialize)]
struct RawUser {
    user_id: String,
    posts: Vec<RawPost>,
}

/// Loads a JSONL corpus, dropping users with fewer than `min_posts` posts and
/// keeping the first `max_posts` posts of everyone else.
pub fn load_corpus(path: impl AsRef<Path>, max_posts: usize, min_posts: usize) -> Result<Corpus> {
    let path = path.as_ref();
    if max_posts == 0 || min_posts == 0 {
        return Err(Error::Parameter("max_posts and min_posts must be positive".into()));
    }
    let reader = BufReader::new(File::open(path)?);
    let mut users = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let raw: RawUser = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        if raw.posts.len() < min_posts {
            continue;
        }
        let mut posts = Vec::with_capacity(raw.posts.len().min(max_posts));
        for p in raw.posts.into_iter().take(max_posts) {
            posts.push(Post::real(p.text).map_err(|e| parse_err(e.to_string()))?);
        }
        users.push(UserHistory {
            user_id: raw.user_id,
            posts,
        });
    }
    if users.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let corpus = Corpus {
        users,
        provenance: Provenance::Loaded,
        generator: None,
    };
    corpus.check_unique_ids()?;
    Ok(corpus)
}

const ONSETS: [&str; 18] = [
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "tr", "kl", "sh",
];
const NUCLEI: [&str; 7] = ["a", "e", "i", "o", "u", "ai", "ou"];

/// Deterministic pseudo-word for background rank `i`.
fn pseudo_word(mut i: usize) -> String {
    let base = ONSETS.len() * NUCLEI.len();
    let mut word = String::new();
    loop {
        let s = i % base;
        word.push_str(ONSETS[s / NUCLEI.len()]);
        word.push_str(NUCLEI[s % NUCLEI.len()]);
        i /= base;
        if i == 0 {
            break;
        }
        i -= 1;
    }
    word
}

/// Background vocabulary in frequency-rank order.
fn background_vocabulary(params: &GeneratorParams, template_tokens: &BTreeSet<String>) -> Vec<String> {
    let mut words = Vec::with_capacity(params.vocab_size);
    let mut i = 0;
    while words.len() < params.vocab_size {
        let w = pseudo_word(i);
        i += 1;
        if !template_tokens.contains(&w) {
            words.push(w);
        }
    }
    if params.template_overlap {
        // Template words become ordinary background words at mid-to-high
        // frequency ranks; punctuation is handled by the sentence frames.
        let shared: Vec<&String> = template_tokens
            .iter()
            .filter(|t| t.chars().all(char::is_alphanumeric))
            .collect();
        for (j, t) in shared.into_iter().enumerate() {
            let pos = 5 + 7 * j;
            if pos < words.len() {
                words[pos] = t.clone();
            }
        }
    }
    words
}

/// Generates `n_users` background histories from a Zipf vocabulary.
pub fn generate_base_corpus(n_users: usize, seed: u64, params: &GeneratorParams) -> Result<Corpus> {
    if n_users == 0 {
        return Err(Error::Parameter("n_users must be at least 1".into()));
    }
    if params.vocab_size < 2 {
        return Err(Error::Parameter(format!(
            "vocabulary must contain at least 2 tokens, got {}",
            params.vocab_size
        )));
    }
    if !(params.zipf_exponent.is_finite() && params.zipf_exponent >= 0.0) {
        return Err(Error::Parameter("zipf_exponent must be finite and >= 0".into()));
    }
    params.posts_per_user.validate("posts_per_user")?;
    params.tokens_per_post.validate("tokens_per_post")?;
    params.sentence_words.validate("sentence_words")?;

    let template_tokens = templates::template_token_set();
    let words = background_vocabulary(params, &template_tokens);
    let weights: Vec<f64> = (1..=words.len())
        .map(|r| (r as f64).powf(-params.zipf_exponent))
        .collect();
    let word_dist = WeightedIndex::new(&weights).expect("positive weights");
    let closers: &[&str] = if params.template_overlap {
        &["!", ";", ".", "?"]
    } else {
        &["!", ";"]
    };
    debug_assert!(params.template_overlap || closers.iter().all(|c| !template_tokens.contains(*c)));

    let width = (n_users - 1).to_string().len().max(4);
    let users = (0..n_users)
        .map(|i| {
            let user_id = format!("u{i:0width$}");
            let mut rng = substream(seed, &[b"base-corpus", user_id.as_bytes()]);
            let n_posts = params.posts_per_user.sample(&mut rng);
            let posts = (0..n_posts)
                .map(|_| {
                    let n_tokens = params.tokens_per_post.sample(&mut rng);
                    let text = sample_post_text(n_tokens, params, &words, &word_dist, closers, &mut rng);
                    Post::real(text).expect("n_tokens >= 1")
                })
                .collect();
            UserHistory { user_id, posts }
        })
        .collect();

    Ok(Corpus {
        users,
        provenance: Provenance::Synthesized,
        generator: Some(GeneratorRecord {
            params: params.clone(),
            seed,
        }),
    })
}

/// Fills sentence frames until the post holds exactly `n_tokens` tokens.
fn sample_post_text(
    n_tokens: usize,
    params: &GeneratorParams,
    words: &[String],
    word_dist: &WeightedIndex<f64>,
    closers: &[&str],
    rng: &mut StreamRng,
) -> String {
    let mut text = String::with_capacity(n_tokens * 6);
    let mut emitted = 0;
    while emitted < n_tokens {
        let remaining = n_tokens - emitted;
        let frame = params.sentence_words.sample(rng) + 1;
        let (n_words, close) = if frame <= remaining { (frame - 1, true) } else { (remaining, false) };
        for w in 0..n_words {
            if emitted > 0 || w > 0 {
                text.push(' ');
            }
            text.push_str(&words[word_dist.sample(rng)]);
        }
        emitted += n_words;
        if close {
            text.push_str(closers[rng.random_range(0..closers.len())]);
            emitted += 1;
        }
    }
    text
}

/// Uniform random partition into train/validation/test without replacement.
pub fn split_corpus(corpus: &Corpus, sizes: SplitSizes, seed: u64) -> Result<CorpusSplit> {
    if sizes.total() > corpus.len() {
        return Err(Error::Size {
            requested: sizes.total(),
            available: corpus.len(),
        });
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut substream(seed, &[b"split"]));
    let take = |range: std::ops::Range<usize>| Corpus {
        users: order[range].iter().map(|&i| corpus.users[i].clone()).collect(),
        provenance: corpus.provenance,
        generator: corpus.generator.clone(),
    };
    let a = sizes.train;
    let b = a + sizes.validation;
    let c = b + sizes.test;
    Ok(CorpusSplit {
        train: take(0..a),
        validation: take(a..b),
        test: take(b..c),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textfeat::tokenize;
    use proptest::prelude::*;

    fn write_users(counts: &[usize]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for (u, &n) in counts.iter().enumerate() {
            let posts: Vec<String> = (0..n).map(|i| format!("{{\"text\":\"post {i}\"}}")).collect();
            writeln!(f, "{{\"user_id\":\"user{u}\",\"posts\":[{}]}}", posts.join(",")).unwrap();
        }
        f
    }

    #[test]
    fn loader_filters_and_truncates() {
        let f = write_users(&[12, 9, 70]);
        let c = load_corpus(f.path(), 60, 10).unwrap();
        let lens: Vec<usize> = c.users.iter().map(|u| u.posts.len()).collect();
        assert_eq!(lens, vec![12, 60]);
        assert!(c.users.iter().flat_map(|u| &u.posts).all(|p| p.origin == Origin::Real));
        assert_eq!(c.provenance, Provenance::Loaded);
        // prefix kept in order
        let texts: Vec<&str> = c.users[1].posts.iter().map(|p| p.text.as_str()).collect();
        let expected: Vec<String> = (0..60).map(|i| format!("post {i}")).collect();
        assert_eq!(texts, expected);
    }

    #[test]
    fn loader_keeps_user_at_exact_minimum() {
        let f = write_users(&[10]);
        assert_eq!(load_corpus(f.path(), 60, 10).unwrap().len(), 1);
    }

    #[test]
    fn loader_empty_file_is_an_error() {
        let f = tempfile::NamedTempFile::new().unwrap();
        assert!(matches!(load_corpus(f.path(), 60, 10), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn loader_reports_line_of_malformed_record() {
        let mut f = write_users(&[10]);
        writeln!(f, "{{\"user_id\": 3}}").unwrap();
        match load_corpus(f.path(), 60, 10) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn loader_rejects_empty_post() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "{{\"user_id\":\"a\",\"posts\":[{{\"text\":\"\"}}]}}").unwrap();
        assert!(matches!(load_corpus(f.path(), 60, 1), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn generator_is_deterministic() {
        let p = GeneratorParams::default();
        let a = generate_base_corpus(50, 11, &p).unwrap();
        let b = generate_base_corpus(50, 11, &p).unwrap();
        assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
        let c = generate_base_corpus(50, 12, &p).unwrap();
        assert_ne!(a.users, c.users);
    }

    #[test]
    fn generator_hits_token_counts_exactly() {
        let p = GeneratorParams {
            tokens_per_post: CountRange { min: 7, max: 7, mean: 7.0 },
            ..GeneratorParams::default()
        };
        let c = generate_base_corpus(20, 3, &p).unwrap();
        for post in c.users.iter().flat_map(|u| &u.posts) {
            assert_eq!(tokenize(&post.text).len(), 7, "{}", post.text);
        }
    }

    #[test]
    fn generator_avoids_template_tokens_without_overlap() {
        let template = templates::template_token_set();
        let c = generate_base_corpus(300, 5, &GeneratorParams::default()).unwrap();
        let emitted: BTreeSet<String> = c
            .users
            .iter()
            .flat_map(|u| &u.posts)
            .flat_map(|p| tokenize(&p.text).into_tokens())
            .collect();
        assert!(emitted.intersection(&template).next().is_none());

        let p = GeneratorParams {
            template_overlap: true,
            ..GeneratorParams::default()
        };
        let c = generate_base_corpus(300, 5, &p).unwrap();
        let emitted: BTreeSet<String> = c
            .users
            .iter()
            .flat_map(|u| &u.posts)
            .flat_map(|p| tokenize(&p.text).into_tokens())
            .collect();
        assert!(emitted.intersection(&template).next().is_some());
    }

    #[test]
    fn generator_rejects_tiny_vocabulary() {
        let p = GeneratorParams {
            vocab_size: 1,
            ..GeneratorParams::default()
        };
        assert!(matches!(generate_base_corpus(5, 1, &p), Err(Error::Parameter(_))));
    }

    #[test]
    fn pseudo_words_are_distinct() {
        let words: HashSet<String> = (0..20_000).map(pseudo_word).collect();
        assert_eq!(words.len(), 20_000);
    }

    #[test]
    fn split_into_train_only() {
        let c = generate_base_corpus(30, 1, &GeneratorParams::default()).unwrap();
        let s = split_corpus(&c, SplitSizes { train: 30, validation: 0, test: 0 }, 9).unwrap();
        assert_eq!(s.train.len(), 30);
        assert!(s.validation.is_empty() && s.test.is_empty());
    }

    #[test]
    fn split_rejects_oversized_request() {
        let c = generate_base_corpus(10, 1, &GeneratorParams::default()).unwrap();
        let sizes = SplitSizes { train: 6, validation: 3, test: 2 };
        assert!(matches!(split_corpus(&c, sizes, 0), Err(Error::Size { requested: 11, available: 10 })));
    }

    #[test]
    fn split_depends_on_seed() {
        let c = generate_base_corpus(100, 1, &GeneratorParams::default()).unwrap();
        let sizes = SplitSizes { train: 50, validation: 20, test: 30 };
        let a = split_corpus(&c, sizes, 1).unwrap();
        let b = split_corpus(&c, sizes, 2).unwrap();
        assert_ne!(a.train.users, b.train.users);
        assert_eq!(a, split_corpus(&c, sizes, 1).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn split_is_disjoint_with_exact_sizes(train in 0usize..40, validation in 0usize..40, test in 0usize..40, seed: u64) {
            let c = generate_base_corpus(120, 4, &GeneratorParams {
                posts_per_user: CountRange { min: 1, max: 2, mean: 1.5 },
                tokens_per_post: CountRange { min: 2, max: 4, mean: 3.0 },
                ..GeneratorParams::default()
            }).unwrap();
            let s = split_corpus(&c, SplitSizes { train, validation, test }, seed).unwrap();
            prop_assert_eq!(s.train.len(), train);
            prop_assert_eq!(s.validation.len(), validation);
            prop_assert_eq!(s.test.len(), test);
            let mut ids = HashSet::new();
            for u in s.train.users.iter().chain(&s.validation.users).chain(&s.test.users) {
                prop_assert!(ids.insert(u.user_id.clone()));
            }
        }

        #[test]
        fn truncation_keeps_prefix(n in 1usize..90, max_posts in 1usize..70) {
            let f = write_users(&[n]);
            match load_corpus(f.path(), max_posts, 1) {
                Ok(c) => {
                    let kept: Vec<String> = c.users[0].posts.iter().map(|p| p.text.clone()).collect();
                    let expected: Vec<String> = (0..n.min(max_posts)).map(|i| format!("post {i}")).collect();
                    prop_assert_eq!(kept, expected);
                }
                Err(e) => prop_assert!(false, "unexpected error {}", e),
            }
        }
    }
}
