//! Tweet ingestion, text normalization, and near-duplicate removal.
//!
//! Raw corpora arrive as JSONL (`{"id": ..., "text": ...}` per line) or TSV
//! (`id <TAB> text`). Preprocessing lowercases, drops URLs / @-mentions /
//! stopwords, strips a leading `#` from hashtags, and stems. Near-duplicate
//! removal keeps the earliest tweet of any pair whose token-set Jaccard
//! similarity reaches the configured threshold.

use std::collections::{BTreeSet, HashMap};
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::stopwords::Stopwords;
use crate::{Error, Result};

/// A raw microblog post.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tweet {
    pub id: String,
    pub text: String,
    /// 0-based position in the input file.
    pub ingest_rank: usize,
}

/// Tweets in ingest order with unique ids.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub tweets: Vec<Tweet>,
}

/// A tweet after the normalization pipeline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcessedTweet {
    pub id: String,
    /// Normalized terms in their original order.
    pub tokens: Vec<String>,
    /// The distinct-term set of `tokens`.
    pub bag: BTreeSet<String>,
}

impl ProcessedTweet {
    pub fn new(id: impl Into<String>, tokens: Vec<String>) -> Self {
        let bag = tokens.iter().cloned().collect();
        ProcessedTweet {
            id: id.into(),
            tokens,
            bag,
        }
    }
}

/// Input format for [`ingest`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    Jsonl,
    Tsv,
}

/// Near-duplicate removal settings.
#[derive(Debug, Clone, Copy)]
pub struct DedupConfig {
    /// Pairs at or above this Jaccard similarity are duplicates.
    pub jaccard_threshold: f64,
    pub keep_policy: KeepPolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KeepPolicy {
    #[default]
    KeepEarliest,
}

impl Default for DedupConfig {
    fn default() -> Self {
        DedupConfig {
            jaccard_threshold: 0.7,
            keep_policy: KeepPolicy::KeepEarliest,
        }
    }
}

impl DedupConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.jaccard_threshold) {
            return Err(Error::InvalidConfig(format!(
                "jaccard_threshold {} outside [0,1]",
                self.jaccard_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    text: String,
}

#[derive(Serialize, Deserialize)]
struct ProcessedRecord {
    id: String,
    tokens: Vec<String>,
}

/// Read a raw corpus. Blank lines are skipped; ids must be unique and
/// non-empty.
pub fn ingest(path: &Path, format: InputFormat) -> Result<Corpus> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let reader = std::io::BufReader::new(file);
    let mut tweets = Vec::new();
    let mut seen = HashMap::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let (id, text) = parse_line(&line, format).map_err(|reason| Error::MalformedLine {
            path: path.to_path_buf(),
            line: lineno + 1,
            reason,
        })?;
        if id.is_empty() {
            return Err(Error::MalformedLine {
                path: path.to_path_buf(),
                line: lineno + 1,
                reason: "empty id".to_string(),
            });
        }
        if seen.insert(id.clone(), lineno).is_some() {
            return Err(Error::DuplicateId(id));
        }
        tweets.push(Tweet {
            id,
            text,
            ingest_rank: tweets.len(),
        });
    }
    Ok(Corpus { tweets })
}

fn parse_line(line: &str, format: InputFormat) -> std::result::Result<(String, String), String> {
    match format {
        InputFormat::Jsonl => {
            let rec: RawRecord =
                serde_json::from_str(line).map_err(|e| format!("invalid json: {e}"))?;
            Ok((rec.id, rec.text))
        }
        InputFormat::Tsv => {
            let (id, text) = line
                .split_once('\t')
                .ok_or_else(|| "expected id<TAB>text".to_string())?;
            Ok((id.to_string(), text.to_string()))
        }
    }
}

/// Normalize one tweet: whitespace tokens, minus URLs and @-mentions, with
/// leading `#` stripped, end punctuation trimmed, lowercased, stopworded, and
/// stemmed (in that order).
pub fn preprocess<F>(tweet: &Tweet, stopwords: &Stopwords, stemmer: F) -> ProcessedTweet
where
    F: Fn(&str) -> String,
{
    let mut tokens = Vec::new();
    for raw in tweet.text.split_whitespace() {
        // Peel leading punctuation that would mask a URL or mention
        // (quotes around links, the ".@user" idiom).
        let t = raw.trim_start_matches(|c: char| !c.is_alphanumeric() && c != '@' && c != '#');
        if t.starts_with('@') {
            continue;
        }
        let lower_probe = t.to_lowercase();
        if lower_probe.starts_with("http") || lower_probe.starts_with("www") {
            continue;
        }
        let t = t.trim_start_matches('#');
        let t = t.trim_matches(|c: char| !c.is_alphanumeric());
        if t.is_empty() {
            continue;
        }
        let t = t.to_lowercase();
        if stopwords.contains(&t) {
            continue;
        }
        tokens.push(stemmer(&t));
    }
    ProcessedTweet::new(tweet.id.clone(), tokens)
}

/// Preprocess a whole corpus with the crate's Porter stemmer.
pub fn preprocess_corpus(corpus: &Corpus, stopwords: &Stopwords) -> Vec<ProcessedTweet> {
    crate::exec::map(&corpus.tweets, |t| {
        preprocess(t, stopwords, crate::stem::stem)
    })
}

/// Set Jaccard similarity; 1.0 when both sets are empty.
pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

/// Greedy near-duplicate removal in ingest order: a tweet is retained iff its
/// bag stays below the threshold against every already-retained bag.
pub fn dedup(corpus: &[ProcessedTweet], cfg: &DedupConfig) -> Result<Vec<ProcessedTweet>> {
    cfg.validate()?;
    let threshold = cfg.jaccard_threshold;
    let KeepPolicy::KeepEarliest = cfg.keep_policy;

    if threshold == 0.0 {
        // Every pair has jaccard >= 0, so only the earliest tweet survives.
        return Ok(corpus.iter().take(1).cloned().collect());
    }

    let mut retained: Vec<ProcessedTweet> = Vec::new();
    // Term -> indices into `retained`; tweets sharing no term have jaccard 0.
    let mut postings: HashMap<String, Vec<usize>> = HashMap::new();
    let mut kept_empty_bag = false;

    for tweet in corpus {
        let duplicate = if tweet.bag.is_empty() {
            kept_empty_bag
        } else {
            let mut candidates: Vec<usize> = tweet
                .bag
                .iter()
                .filter_map(|term| postings.get(term.as_str()))
                .flatten()
                .copied()
                .collect();
            candidates.sort_unstable();
            candidates.dedup();
            let candidate_refs: Vec<&ProcessedTweet> =
                candidates.iter().map(|&i| &retained[i]).collect();
            let over = |kept: &&ProcessedTweet| jaccard(&tweet.bag, &kept.bag) >= threshold;
            // Candidate lists are usually a handful of tweets; forking the
            // pool for them costs more than the scan. Parallelism pays only
            // on degenerate corpora with very hot terms.
            if candidate_refs.len() >= 4096 {
                crate::exec::any(&candidate_refs, over)
            } else {
                crate::exec::any_seq(&candidate_refs, over)
            }
        };
        if duplicate {
            continue;
        }
        if tweet.bag.is_empty() {
            kept_empty_bag = true;
        }
        let idx = retained.len();
        retained.push(tweet.clone());
        for term in &retained[idx].bag {
            postings.entry(term.clone()).or_default().push(idx);
        }
    }
    Ok(retained)
}

/// Write a processed corpus as JSONL `{"id": ..., "tokens": [...]}` records.
pub fn save_processed(path: &Path, tweets: &[ProcessedTweet]) -> Result<()> {
    let mut out = String::new();
    for t in tweets {
        let rec = ProcessedRecord {
            id: t.id.clone(),
            tokens: t.tokens.clone(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Read a processed corpus written by [`save_processed`].
pub fn load_processed(path: &Path) -> Result<Vec<ProcessedTweet>> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let reader = std::io::BufReader::new(file);
    let mut tweets = Vec::new();
    let mut seen = HashMap::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ProcessedRecord =
            serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
                path: path.to_path_buf(),
                line: lineno + 1,
                reason: format!("invalid json: {e}"),
            })?;
        if rec.id.is_empty() || rec.tokens.iter().any(String::is_empty) {
            return Err(Error::MalformedLine {
                path: path.to_path_buf(),
                line: lineno + 1,
                reason: "empty id or empty token".to_string(),
            });
        }
        if seen.insert(rec.id.clone(), lineno).is_some() {
            return Err(Error::DuplicateId(rec.id));
        }
        tweets.push(ProcessedTweet::new(rec.id, rec.tokens));
    }
    Ok(tweets)
}

/// True if the first non-blank line looks like a processed-corpus record.
pub fn looks_processed(path: &Path) -> Result<bool> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let reader = std::io::BufReader::new(file);
    for line in reader.lines() {
        let line = line.map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        return Ok(serde_json::from_str::<ProcessedRecord>(&line).is_ok());
    }
    Ok(false)
}
