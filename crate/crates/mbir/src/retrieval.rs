//! Cosine ranking of tweets against seed queries, and embedding-based query
//! expansion.
//!
//! A query or tweet vector is the mean of its term vectors. Tweets whose
//! vector is absent (nothing embeddable, or a zero vector) sort after every
//! scored tweet, ordered by id, carrying a sentinel score below the cosine
//! range so a ranked list stays totally ordered.

use std::collections::{BTreeSet, HashMap};
use std::io::BufRead;
use std::path::Path;

use crate::corpus::ProcessedTweet;
use crate::models::EmbeddingModel;
use crate::{Error, Result};

/// Score assigned to tweets with no usable vector; below any cosine.
pub const ABSENT_SCORE: f64 = -2.0;

/// A retrieval topic: a label and its preprocessed terms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub label: String,
    pub terms: Vec<String>,
}

impl Query {
    pub fn new(label: impl Into<String>, terms: Vec<String>) -> Self {
        Query {
            label: label.into(),
            terms,
        }
    }

    /// The paper's seed queries, already stemmed.
    pub fn need() -> Self {
        Query::new("need", vec!["need".into(), "requir".into()])
    }

    pub fn avail() -> Self {
        Query::new(
            "avail",
            vec!["avail".into(), "distribut".into(), "send".into()],
        )
    }
}

/// Ordered (tweet id, score) pairs for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub label: String,
    pub entries: Vec<(String, f64)>,
}

impl RankedList {
    /// TREC run lines: `qid Q0 docid rank score tag`.
    pub fn to_trec(&self, tag: &str) -> String {
        let mut out = String::new();
        for (rank, (id, score)) in self.entries.iter().enumerate() {
            out.push_str(&format!(
                "{} Q0 {} {} {:.6} {}\n",
                self.label,
                id,
                rank + 1,
                score,
                tag
            ));
        }
        out
    }
}

/// Embedding-based expansion settings.
#[derive(Debug, Clone, Copy)]
pub struct ExpansionConfig {
    pub k_top_docs: usize,
    pub p_terms: usize,
    pub exclude_query_terms: bool,
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        ExpansionConfig {
            k_top_docs: 10,
            p_terms: 3,
            exclude_query_terms: true,
        }
    }
}

impl ExpansionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_top_docs == 0 || self.p_terms == 0 {
            return Err(Error::InvalidConfig(
                "expansion k and p must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Result of a query expansion.
#[derive(Debug, Clone)]
pub struct Expansion {
    pub query: Query,
    /// Terms appended, best first.
    pub added: Vec<String>,
    /// True when fewer than `p_terms` candidates were available.
    pub shortfall: bool,
}

/// Cosine similarity; `None` when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some(dot / (na.sqrt() * nb.sqrt()))
}

/// Per-distinct-token embedding cache for a corpus. Tokens that cannot be
/// embedded map to `None`.
pub fn embedding_cache(
    model: &EmbeddingModel,
    corpus: &[ProcessedTweet],
) -> HashMap<String, Option<Vec<f64>>> {
    let distinct: Vec<String> = corpus
        .iter()
        .flat_map(|t| t.bag.iter().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let vecs = crate::exec::map(&distinct, |tok| model.token_embedding(tok).unwrap_or(None));
    distinct.into_iter().zip(vecs).collect()
}

fn mean_from_cache(
    tokens: &[String],
    cache: &HashMap<String, Option<Vec<f64>>>,
    dim: usize,
) -> Option<Vec<f64>> {
    let mut sum = vec![0.0; dim];
    let mut n = 0usize;
    for t in tokens {
        if let Some(Some(v)) = cache.get(t) {
            for (s, x) in sum.iter_mut().zip(v) {
                *s += x;
            }
            n += 1;
        }
    }
    if n == 0 {
        return None;
    }
    for s in &mut sum {
        *s /= n as f64;
    }
    Some(sum)
}

/// Rank the whole corpus against a query by cosine similarity (descending,
/// ties by ascending id; vectorless tweets last, by id).
pub fn rank(
    model: &EmbeddingModel,
    corpus: &[ProcessedTweet],
    query: &Query,
) -> Result<RankedList> {
    let qvec = model
        .text_embedding(&query.terms)
        .ok_or_else(|| Error::QueryNotEmbeddable(query.label.clone()))?;
    if qvec.iter().all(|&x| x == 0.0) {
        return Err(Error::QueryNotEmbeddable(query.label.clone()));
    }
    let cache = embedding_cache(model, corpus);
    let dim = model.config.d_wrd;
    let scores: Vec<Option<f64>> = crate::exec::map(corpus, |tweet| {
        let tvec = mean_from_cache(&tweet.tokens, &cache, dim)?;
        cosine(&qvec, &tvec)
    });

    let mut scored: Vec<(String, f64)> = Vec::new();
    let mut absent: Vec<String> = Vec::new();
    for (tweet, score) in corpus.iter().zip(scores) {
        match score {
            Some(s) => scored.push((tweet.id.clone(), s)),
            None => absent.push(tweet.id.clone()),
        }
    }
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("cosine scores are finite")
            .then_with(|| a.0.cmp(&b.0))
    });
    absent.sort();
    let mut entries = scored;
    entries.extend(absent.into_iter().map(|id| (id, ABSENT_SCORE)));
    Ok(RankedList {
        label: query.label.clone(),
        entries,
    })
}

/// Expand a query with the terms from its top-ranked tweets whose vectors
/// best match the original query vector.
pub fn expand_query_embedding(
    model: &EmbeddingModel,
    corpus: &[ProcessedTweet],
    query: &Query,
    base: &RankedList,
    cfg: &ExpansionConfig,
) -> Result<Expansion> {
    cfg.validate()?;
    let qvec = model
        .text_embedding(&query.terms)
        .ok_or_else(|| Error::QueryNotEmbeddable(query.label.clone()))?;

    let by_id: HashMap<&str, &ProcessedTweet> = corpus.iter().map(|t| (t.id.as_str(), t)).collect();
    let mut candidates: BTreeSet<String> = BTreeSet::new();
    for (id, _) in base.entries.iter().take(cfg.k_top_docs) {
        if let Some(tweet) = by_id.get(id.as_str()) {
            candidates.extend(tweet.bag.iter().cloned());
        }
    }
    if cfg.exclude_query_terms {
        for t in &query.terms {
            candidates.remove(t);
        }
    }

    let candidates: Vec<String> = candidates.into_iter().collect();
    let mut scored: Vec<(String, f64)> = candidates
        .into_iter()
        .filter_map(|term| {
            let v = model.token_embedding(&term).unwrap_or(None)?;
            let s = cosine(&qvec, &v)?;
            Some((term, s))
        })
        .collect();
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("cosine scores are finite")
            .then_with(|| a.0.cmp(&b.0))
    });

    let added: Vec<String> = scored
        .into_iter()
        .take(cfg.p_terms)
        .map(|(t, _)| t)
        .collect();
    let shortfall = added.len() < cfg.p_terms;
    let mut terms = query.terms.clone();
    terms.extend(added.iter().cloned());
    Ok(Expansion {
        query: Query::new(query.label.clone(), terms),
        added,
        shortfall,
    })
}

/// Write a run file in TREC format.
pub fn write_trec_run(path: &Path, rl: &RankedList, tag: &str) -> Result<()> {
    std::fs::write(path, rl.to_trec(tag)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Read run files written by [`write_trec_run`] (or any TREC run), grouped
/// by query id in file order.
pub fn read_trec_run(path: &Path) -> Result<Vec<RankedList>> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let reader = std::io::BufReader::new(file);
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<(String, f64)>> = HashMap::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 6 {
            return Err(Error::MalformedLine {
                path: path.to_path_buf(),
                line: lineno + 1,
                reason: "expected `qid Q0 docid rank score tag`".to_string(),
            });
        }
        let score: f64 = fields[4].parse().map_err(|_| Error::MalformedLine {
            path: path.to_path_buf(),
            line: lineno + 1,
            reason: format!("bad score '{}'", fields[4]),
        })?;
        let qid = fields[0].to_string();
        if !groups.contains_key(&qid) {
            order.push(qid.clone());
        }
        groups
            .entry(qid)
            .or_default()
            .push((fields[2].to_string(), score));
    }
    Ok(order
        .into_iter()
        .map(|label| {
            let entries = groups.remove(&label).unwrap_or_default();
            RankedList { label, entries }
        })
        .collect())
}
