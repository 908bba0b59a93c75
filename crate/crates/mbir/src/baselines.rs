//! Non-neural comparison systems: pattern-file matching with capped random
//! sampling, and Dirichlet-smoothed query-likelihood retrieval with Rocchio
//! expansion.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::RegexBuilder;

use crate::corpus::{ProcessedTweet, Tweet};
use crate::retrieval::{Query, RankedList};
use crate::{Error, Result};

/// Compiled patterns from a pattern file.
///
/// File format: one regular expression per line, optional `<TAB>category`,
/// `#` comment lines. A `{Number}` placeholder becomes a digit run before
/// compilation. Matching is case-insensitive over raw tweet text.
#[derive(Debug)]
pub struct PatternSet {
    pub patterns: Vec<Pattern>,
    pub source: String,
}

#[derive(Debug)]
pub struct Pattern {
    pub regex: regex::Regex,
    pub category: Option<String>,
    pub raw: String,
}

impl PatternSet {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut patterns = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (expr, category) = match line.split_once('\t') {
                Some((e, c)) => (e.trim(), Some(c.trim().to_string())),
                None => (line, None),
            };
            let translated = expr.replace("{Number}", "[0-9]+");
            let regex = RegexBuilder::new(&translated)
                .case_insensitive(true)
                .build()
                .map_err(|e| Error::InvalidPattern {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    reason: e.to_string(),
                })?;
            patterns.push(Pattern {
                regex,
                category,
                raw: expr.to_string(),
            });
        }
        Ok(PatternSet {
            patterns,
            source: path.display().to_string(),
        })
    }
}

/// Ids of tweets matched by any pattern. When more than `cap` tweets match,
/// a uniform sample of `cap` ids is drawn without replacement with the
/// seeded generator.
pub fn pattern_match(ps: &PatternSet, corpus: &[Tweet], cap: usize, seed: u64) -> BTreeSet<String> {
    pattern_match_counted(ps, corpus, cap, seed).1
}

/// [`pattern_match`] plus the size of the uncapped match set.
pub fn pattern_match_counted(
    ps: &PatternSet,
    corpus: &[Tweet],
    cap: usize,
    seed: u64,
) -> (usize, BTreeSet<String>) {
    let hits: Vec<bool> = crate::exec::map(corpus, |t| {
        ps.patterns.iter().any(|p| p.regex.is_match(&t.text))
    });
    let matched: Vec<&Tweet> = corpus
        .iter()
        .zip(&hits)
        .filter_map(|(t, &hit)| hit.then_some(t))
        .collect();
    if matched.len() <= cap {
        return (
            matched.len(),
            matched.iter().map(|t| t.id.clone()).collect(),
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample = rand::seq::index::sample(&mut rng, matched.len(), cap)
        .into_iter()
        .map(|i| matched[i].id.clone())
        .collect();
    (matched.len(), sample)
}

/// A matched set as a pseudo-run with uniform score 1.0 (ids ascending), for
/// the unordered-set evaluation mode.
pub fn match_set_as_run(label: &str, ids: &BTreeSet<String>) -> RankedList {
    RankedList {
        label: label.to_string(),
        entries: ids.iter().map(|id| (id.clone(), 1.0)).collect(),
    }
}

/// Language-model retrieval settings.
#[derive(Debug, Clone, Copy)]
pub struct LmConfig {
    pub smoothing: Smoothing,
    pub mu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Smoothing {
    #[default]
    Dirichlet,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            smoothing: Smoothing::Dirichlet,
            mu: 2500.0,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() || self.mu <= 0.0 {
            return Err(Error::InvalidConfig(format!("mu {} must be > 0", self.mu)));
        }
        Ok(())
    }
}

/// Query-likelihood ranking with Dirichlet smoothing:
/// `score(d) = sum_w ln((tf(w,d) + mu * P(w|collection)) / (|d| + mu))`.
///
/// Query terms absent from the whole collection are skipped: their
/// contribution would be an identical `-inf` for every document, which
/// carries no ranking information and would drown the remaining terms.
pub fn lm_rank(corpus: &[ProcessedTweet], query: &Query, cfg: &LmConfig) -> Result<RankedList> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let Smoothing::Dirichlet = cfg.smoothing;

    let mut cf: HashMap<&str, u64> = HashMap::new();
    let mut total_tokens: u64 = 0;
    for t in corpus {
        for tok in &t.tokens {
            *cf.entry(tok.as_str()).or_insert(0) += 1;
            total_tokens += 1;
        }
    }
    let terms: Vec<(&str, f64)> = query
        .terms
        .iter()
        .filter_map(|w| {
            let c = *cf.get(w.as_str())?;
            Some((w.as_str(), c as f64 / total_tokens as f64))
        })
        .collect();

    let mu = cfg.mu;
    let scores: Vec<f64> = crate::exec::map(corpus, |doc| {
        let len = doc.tokens.len() as f64;
        terms
            .iter()
            .map(|&(w, p_bg)| {
                let tf = doc.tokens.iter().filter(|t| t.as_str() == w).count() as f64;
                ((tf + mu * p_bg) / (len + mu)).ln()
            })
            .sum()
    });

    let mut entries: Vec<(String, f64)> = corpus
        .iter()
        .zip(scores)
        .map(|(t, s)| (t.id.clone(), s))
        .collect();
    entries.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("lm scores are finite")
            .then_with(|| a.0.cmp(&b.0))
    });
    Ok(RankedList {
        label: query.label.clone(),
        entries,
    })
}

/// Rocchio settings.
#[derive(Debug, Clone, Copy)]
pub struct RocchioConfig {
    pub k_top_docs: usize,
    pub p_terms: usize,
}

impl Default for RocchioConfig {
    fn default() -> Self {
        RocchioConfig {
            k_top_docs: 10,
            p_terms: 3,
        }
    }
}

impl RocchioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_top_docs == 0 || self.p_terms == 0 {
            return Err(Error::InvalidConfig("rocchio k and p must be >= 1".into()));
        }
        Ok(())
    }
}

/// tf-idf Rocchio expansion: tf aggregated over the top-k tweets, idf =
/// `ln(N / df)` over the whole corpus; the top-p candidates (score
/// descending, ties by ascending term) are appended to the query. Query
/// terms are never candidates.
pub fn rocchio_expand(
    corpus: &[ProcessedTweet],
    query: &Query,
    base: &RankedList,
    cfg: &RocchioConfig,
) -> Result<(Query, Vec<String>)> {
    cfg.validate()?;
    let by_id: HashMap<&str, &ProcessedTweet> = corpus.iter().map(|t| (t.id.as_str(), t)).collect();

    let mut tf: HashMap<&str, u64> = HashMap::new();
    for (id, _) in base.entries.iter().take(cfg.k_top_docs) {
        if let Some(tweet) = by_id.get(id.as_str()) {
            for tok in &tweet.tokens {
                *tf.entry(tok.as_str()).or_insert(0) += 1;
            }
        }
    }

    let mut df: HashMap<&str, u64> = HashMap::new();
    for t in corpus {
        for term in &t.bag {
            *df.entry(term.as_str()).or_insert(0) += 1;
        }
    }
    let n = corpus.len() as f64;

    let mut scored: Vec<(String, f64)> = tf
        .into_iter()
        .filter(|(term, _)| !query.terms.iter().any(|q| q == term))
        .map(|(term, tf)| {
            let idf = (n / df[term] as f64).ln();
            (term.to_string(), tf as f64 * idf)
        })
        .collect();
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("rocchio scores are finite")
            .then_with(|| a.0.cmp(&b.0))
    });

    let added: Vec<String> = scored
        .into_iter()
        .take(cfg.p_terms)
        .map(|(t, _)| t)
        .collect();
    let mut terms = query.terms.clone();
    terms.extend(added.iter().cloned());
    Ok((Query::new(query.label.clone(), terms), added))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tweet(id: &str, text: &str) -> Tweet {
        Tweet {
            id: id.to_string(),
            text: text.to_string(),
            ingest_rank: 0,
        }
    }

    fn ptweet(id: &str, tokens: &[&str]) -> ProcessedTweet {
        ProcessedTweet::new(id, tokens.iter().map(|s| s.to_string()).collect())
    }

    fn pattern_set(lines: &str) -> PatternSet {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("patterns.txt");
        std::fs::write(&p, lines).unwrap();
        PatternSet::load(&p).unwrap()
    }

    #[test]
    fn substring_match_is_case_insensitive() {
        let ps = pattern_set("need\n");
        let corpus = vec![
            tweet("a", "water here"),
            tweet("b", "someone NEEDS blood"),
            tweet("c", "all fine"),
        ];
        let got = pattern_match(&ps, &corpus, 1000, 42);
        assert_eq!(got.into_iter().collect::<Vec<_>>(), vec!["b".to_string()]);
    }

    #[test]
    fn no_match_gives_empty_set() {
        let ps = pattern_set("zebra\n");
        let corpus = vec![tweet("a", "water"), tweet("b", "food")];
        assert!(pattern_match(&ps, &corpus, 1000, 42).is_empty());
    }

    #[test]
    fn number_placeholder_and_categories() {
        let ps = pattern_set("# comment\n{Number} bags\tT06\nrescue boats\tC04\n");
        assert_eq!(ps.patterns.len(), 2);
        assert_eq!(ps.patterns[0].category.as_deref(), Some("T06"));
        let corpus = vec![
            tweet("a", "sending 500 bags of rice"),
            tweet("b", "bags of rice"),
            tweet("c", "Rescue Boats on the way"),
        ];
        let got = pattern_match(&ps, &corpus, 1000, 42);
        assert_eq!(
            got.into_iter().collect::<Vec<_>>(),
            vec!["a".to_string(), "c".to_string()]
        );
    }

    #[test]
    fn invalid_pattern_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.txt");
        std::fs::write(&p, "fine\n[unclosed\n").unwrap();
        let err = PatternSet::load(&p).unwrap_err();
        assert!(matches!(err, Error::InvalidPattern { line: 2, .. }));
    }

    #[test]
    fn capped_sampling_is_seeded_and_within_matches() {
        let ps = pattern_set("need\n");
        let corpus: Vec<Tweet> = (0..1500)
            .map(|i| tweet(&format!("t{i:04}"), "need water"))
            .collect();
        let s1 = pattern_match(&ps, &corpus, 1000, 42);
        let s2 = pattern_match(&ps, &corpus, 1000, 42);
        assert_eq!(s1.len(), 1000);
        assert_eq!(s1, s2);
        let s3 = pattern_match(&ps, &corpus, 1000, 43);
        assert_ne!(s1, s3);
        // Subset of the full match set.
        let full = pattern_match(&ps, &corpus, usize::MAX, 42);
        assert_eq!(full.len(), 1500);
        assert!(s1.is_subset(&full));
    }

    #[test]
    fn lm_prefers_richer_document() {
        let corpus = vec![
            ptweet("a", &["water", "food"]),
            ptweet("b", &["water", "water"]),
        ];
        let q = Query::new("t", vec!["water".into()]);
        let rl = lm_rank(&corpus, &q, &LmConfig::default()).unwrap();
        assert_eq!(rl.entries[0].0, "b");
    }

    #[test]
    fn lm_huge_mu_washes_out_length_effects() {
        let corpus = vec![
            ptweet("a", &["water"]),
            ptweet("b", &["water", "food", "tent", "aid"]),
        ];
        let q = Query::new("t", vec!["water".into()]);
        let rl = lm_rank(
            &corpus,
            &q,
            &LmConfig {
                mu: 1e9,
                ..LmConfig::default()
            },
        )
        .unwrap();
        let spread = (rl.entries[0].1 - rl.entries[1].1).abs();
        assert!(spread < 1e-6, "spread {spread}");
    }

    #[test]
    fn lm_matches_hand_computed_scores() {
        // Collection: 9 tokens; cf(water)=3, cf(blood)=1.
        let corpus = vec![
            ptweet("a", &["water", "blood", "aid"]),
            ptweet("b", &["water", "water", "food"]),
            ptweet("c", &["tent", "camp", "food"]),
        ];
        let q = Query::new("t", vec!["water".into(), "blood".into()]);
        let mu = 2000.0;
        let rl = lm_rank(
            &corpus,
            &q,
            &LmConfig {
                mu,
                ..LmConfig::default()
            },
        )
        .unwrap();
        let score = |tf_w: f64, tf_b: f64| {
            ((tf_w + mu * 3.0 / 9.0) / (3.0 + mu)).ln()
                + ((tf_b + mu * 1.0 / 9.0) / (3.0 + mu)).ln()
        };
        let expected: HashMap<&str, f64> = HashMap::from([
            ("a", score(1.0, 1.0)),
            ("b", score(2.0, 0.0)),
            ("c", score(0.0, 0.0)),
        ]);
        for (id, s) in &rl.entries {
            assert!(
                (s - expected[id.as_str()]).abs() < 1e-9,
                "{id}: {s} vs {}",
                expected[id.as_str()]
            );
        }
        assert_eq!(rl.entries[0].0, "a");
    }

    #[test]
    fn lm_skips_unseen_terms_without_error() {
        let corpus = vec![ptweet("a", &["water"]), ptweet("b", &["food"])];
        let q = Query::new("t", vec!["water".into(), "unseen".into()]);
        let rl = lm_rank(&corpus, &q, &LmConfig::default()).unwrap();
        assert_eq!(rl.entries[0].0, "a");
        assert!(rl.entries.iter().all(|(_, s)| s.is_finite()));
    }

    #[test]
    fn lm_ordering_invariant_under_corpus_duplication() {
        let base = vec![
            ptweet("a", &["water", "food"]),
            ptweet("b", &["water", "water", "tent"]),
            ptweet("c", &["aid", "tent"]),
        ];
        let q = Query::new("t", vec!["water".into(), "tent".into()]);
        let rl1 = lm_rank(&base, &q, &LmConfig::default()).unwrap();
        let mut tripled = Vec::new();
        for copy in 0..3 {
            for t in &base {
                tripled.push(ProcessedTweet::new(
                    format!("{}#{copy}", t.id),
                    t.tokens.clone(),
                ));
            }
        }
        let rl3 = lm_rank(&tripled, &q, &LmConfig::default()).unwrap();
        // Scores are unchanged (collection model identical), so the relative
        // order of the original ids is preserved within the tripled run.
        let order1: Vec<&str> = rl1.entries.iter().map(|(id, _)| id.as_str()).collect();
        let order3: Vec<&str> = rl3
            .entries
            .iter()
            .filter(|(id, _)| id.ends_with("#0"))
            .map(|(id, _)| id.strip_suffix("#0").unwrap())
            .collect();
        assert_eq!(order1, order3);
    }

    #[test]
    fn rocchio_scores_and_ties() {
        // tf=3 for "shelter" in the top docs; N=100 docs, df(shelter)=10.
        let mut corpus: Vec<ProcessedTweet> = Vec::new();
        corpus.push(ptweet("top1", &["shelter", "shelter", "water"]));
        corpus.push(ptweet("top2", &["shelter", "water"]));
        for i in 0..8 {
            corpus.push(ptweet(&format!("sh{i}"), &["shelter", "camp"]));
        }
        for i in 0..90 {
            corpus.push(ptweet(&format!("bg{i}"), &["food", "aid"]));
        }
        assert_eq!(corpus.len(), 100);
        let q = Query::new("t", vec!["water".into()]);
        let base = RankedList {
            label: "t".into(),
            entries: vec![("top1".into(), 1.0), ("top2".into(), 0.9)],
        };
        let cfg = RocchioConfig {
            k_top_docs: 2,
            p_terms: 1,
        };
        let (expanded, added) = rocchio_expand(&corpus, &q, &base, &cfg).unwrap();
        // score(shelter) = 3 * ln(100/10) ~ 6.9078; water is excluded as a
        // query term.
        assert!((3.0 * (100.0f64 / 10.0).ln() - 6.907755).abs() < 1e-5);
        assert_eq!(added, vec!["shelter".to_string()]);
        assert_eq!(
            expanded.terms,
            vec!["water".to_string(), "shelter".to_string()]
        );
    }

    #[test]
    fn rocchio_everywhere_term_scores_zero() {
        let corpus = vec![
            ptweet("a", &["common", "rare"]),
            ptweet("b", &["common"]),
            ptweet("c", &["common"]),
        ];
        let q = Query::new("t", vec!["x".into()]);
        let base = RankedList {
            label: "t".into(),
            entries: vec![("a".into(), 1.0)],
        };
        let cfg = RocchioConfig {
            k_top_docs: 1,
            p_terms: 1,
        };
        let (_, added) = rocchio_expand(&corpus, &q, &base, &cfg).unwrap();
        // idf(common) = ln(1) = 0, so "rare" wins despite tf 1 vs 1.
        assert_eq!(added, vec!["rare".to_string()]);
    }

    #[test]
    fn rocchio_tie_breaks_lexicographically() {
        let corpus = vec![
            ptweet("a", &["zeta", "alpha"]),
            ptweet("b", &["other"]),
            ptweet("c", &["another"]),
        ];
        let q = Query::new("t", vec!["x".into()]);
        let base = RankedList {
            label: "t".into(),
            entries: vec![("a".into(), 1.0)],
        };
        let cfg = RocchioConfig {
            k_top_docs: 1,
            p_terms: 1,
        };
        let (_, added) = rocchio_expand(&corpus, &q, &base, &cfg).unwrap();
        // Same tf and df for both candidates; "alpha" < "zeta".
        assert_eq!(added, vec!["alpha".to_string()]);
    }
}
