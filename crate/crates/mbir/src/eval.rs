//! Evaluation against relevance judgments: Precision@100, Recall@1000,
//! their harmonic mean, and mean average precision over the full ranking.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::BufRead;
use std::path::Path;

use crate::retrieval::RankedList;
use crate::{Error, Result};

pub const PRECISION_CUTOFF: usize = 100;
pub const RECALL_CUTOFF: usize = 1000;

/// Relevance judgments: query label -> relevant tweet ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    pub by_query: BTreeMap<String, BTreeSet<String>>,
}

impl Qrels {
    /// TREC format: `qid 0 docid rel`, rel in {0,1}. Lines with rel 0 are
    /// judged non-relevant and contribute nothing to the binary metrics.
    pub fn from_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let reader = std::io::BufReader::new(file);
        let mut by_query: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|source| Error::Io {
                path: path.to_path_buf(),
                source,
            })?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(Error::MalformedLine {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    reason: "expected `qid 0 docid rel`".to_string(),
                });
            }
            let rel: i32 = fields[3].parse().map_err(|_| Error::MalformedLine {
                path: path.to_path_buf(),
                line: lineno + 1,
                reason: format!("bad relevance '{}'", fields[3]),
            })?;
            let entry = by_query.entry(fields[0].to_string()).or_default();
            if rel > 0 {
                entry.insert(fields[2].to_string());
            }
        }
        Ok(Qrels { by_query })
    }

    pub fn relevant(&self, label: &str) -> Option<&BTreeSet<String>> {
        self.by_query.get(label)
    }
}

/// The four-measure bundle plus raw counts.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub precision_at_100: f64,
    pub recall_at_1000: f64,
    pub f_score: f64,
    /// Average precision over the full ranking; absent for unordered sets.
    pub map: Option<f64>,
    pub retrieved: usize,
    pub relevant: usize,
    pub relevant_retrieved: usize,
}

impl EvalReport {
    /// Machine-readable lines: `measure<TAB>query<TAB>value`.
    pub fn to_tsv(&self, query: &str) -> String {
        let mut out = String::new();
        let mut push = |measure: &str, value: String| {
            out.push_str(&format!("{measure}\t{query}\t{value}\n"));
        };
        push("P@100", format!("{:.6}", self.precision_at_100));
        push("R@1000", format!("{:.6}", self.recall_at_1000));
        push("F", format!("{:.6}", self.f_score));
        push(
            "MAP",
            match self.map {
                Some(m) => format!("{m:.6}"),
                None => "--".to_string(),
            },
        );
        push("retrieved", self.retrieved.to_string());
        push("relevant", self.relevant.to_string());
        push("relevant_retrieved", self.relevant_retrieved.to_string());
        out
    }
}

/// Harmonic mean of precision and recall; 0 when either is 0.
pub fn f_score(p: f64, r: f64) -> f64 {
    if p <= 0.0 || r <= 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Score a ranked list: P@100 (cutoff denominator), R@1000, F over those
/// two, and average precision over the full list with unretrieved relevant
/// documents contributing zero.
pub fn evaluate_ranked(rl: &RankedList, relevant: &BTreeSet<String>) -> Result<EvalReport> {
    let mut seen = HashSet::with_capacity(rl.entries.len());
    for (id, _) in &rl.entries {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateRankedId(id.clone()));
        }
    }

    let mut hits_at_p = 0usize;
    let mut hits_at_r = 0usize;
    let mut hits = 0usize;
    let mut ap_sum = 0.0;
    for (rank0, (id, _)) in rl.entries.iter().enumerate() {
        if relevant.contains(id) {
            hits += 1;
            if rank0 < PRECISION_CUTOFF {
                hits_at_p += 1;
            }
            if rank0 < RECALL_CUTOFF {
                hits_at_r += 1;
            }
            ap_sum += hits as f64 / (rank0 + 1) as f64;
        }
    }

    let p = hits_at_p as f64 / PRECISION_CUTOFF as f64;
    let (r, ap) = if relevant.is_empty() {
        (0.0, 0.0)
    } else {
        (
            hits_at_r as f64 / relevant.len() as f64,
            ap_sum / relevant.len() as f64,
        )
    };
    Ok(EvalReport {
        precision_at_100: p,
        recall_at_1000: r,
        f_score: f_score(p, r),
        map: Some(ap),
        retrieved: rl.entries.len(),
        relevant: relevant.len(),
        relevant_retrieved: hits,
    })
}

/// Score an unordered id set: plain precision/recall/F, no MAP.
pub fn evaluate_set(ids: &BTreeSet<String>, relevant: &BTreeSet<String>) -> EvalReport {
    let hits = ids.intersection(relevant).count();
    let p = if ids.is_empty() {
        0.0
    } else {
        hits as f64 / ids.len() as f64
    };
    let r = if relevant.is_empty() {
        0.0
    } else {
        hits as f64 / relevant.len() as f64
    };
    EvalReport {
        precision_at_100: p,
        recall_at_1000: r,
        f_score: f_score(p, r),
        map: None,
        retrieved: ids.len(),
        relevant: relevant.len(),
        relevant_retrieved: hits,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rl(ids: &[&str]) -> RankedList {
        RankedList {
            label: "q".into(),
            entries: ids
                .iter()
                .enumerate()
                .map(|(i, id)| (id.to_string(), 1.0 - i as f64 * 1e-3))
                .collect(),
        }
    }

    fn rel(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn paper_row_f_score_arithmetic() {
        let f = f_score(0.56, 0.388);
        assert!((f - 0.458).abs() <= 0.001, "{f}");
    }

    #[test]
    fn single_relevant_doc_ranked_first() {
        let ids: Vec<String> = (0..150).map(|i| format!("d{i:03}")).collect();
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let report = evaluate_ranked(&rl(&refs), &rel(&["d000"])).unwrap();
        assert!((report.precision_at_100 - 0.01).abs() < 1e-12);
        assert_eq!(report.recall_at_1000, 1.0);
        assert_eq!(report.map, Some(1.0));
    }

    #[test]
    fn ap_hand_case() {
        // Relevant at ranks 1 and 4, two relevant total.
        let report =
            evaluate_ranked(&rl(&["r1", "x", "y", "r2", "z"]), &rel(&["r1", "r2"])).unwrap();
        assert_eq!(report.map, Some(0.75));
    }

    #[test]
    fn unretrieved_relevant_contribute_zero() {
        let report = evaluate_ranked(&rl(&["r1", "x"]), &rel(&["r1", "ghost"])).unwrap();
        assert_eq!(report.map, Some(0.5));
        assert_eq!(report.recall_at_1000, 0.5);
        assert_eq!(report.relevant_retrieved, 1);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = evaluate_ranked(&rl(&["a", "a"]), &rel(&["a"])).unwrap_err();
        assert!(matches!(err, Error::DuplicateRankedId(_)));
    }

    #[test]
    fn empty_relevant_set_zeroes_recall_and_map() {
        let report = evaluate_ranked(&rl(&["a", "b"]), &rel(&[])).unwrap();
        assert_eq!(report.recall_at_1000, 0.0);
        assert_eq!(report.map, Some(0.0));
        assert_eq!(report.f_score, 0.0);
    }

    #[test]
    fn set_evaluation_cases() {
        let ids = rel(&["a", "b"]);
        let report = evaluate_set(&ids, &ids);
        assert_eq!(
            (
                report.precision_at_100,
                report.recall_at_1000,
                report.f_score
            ),
            (1.0, 1.0, 1.0)
        );
        assert_eq!(report.map, None);

        let report = evaluate_set(&rel(&["a"]), &rel(&["b"]));
        assert_eq!(
            (
                report.precision_at_100,
                report.recall_at_1000,
                report.f_score
            ),
            (0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn set_evaluation_arithmetic() {
        // 200 retrieved, 30 hits, 60 relevant.
        let ids: BTreeSet<String> = (0..200).map(|i| format!("m{i:03}")).collect();
        let mut relevant: BTreeSet<String> = (0..30).map(|i| format!("m{i:03}")).collect();
        relevant.extend((0..30).map(|i| format!("r{i:03}")));
        let report = evaluate_set(&ids, &relevant);
        assert!((report.precision_at_100 - 0.15).abs() < 1e-12);
        assert!((report.recall_at_1000 - 0.5).abs() < 1e-12);
        assert!((report.f_score - 0.23076923076923078).abs() < 1e-9);
    }

    /// Brute-force AP oracle: precision re-derived from scratch at every
    /// relevant prefix.
    pub(super) fn ap_brute_force(order: &[String], relevant: &BTreeSet<String>) -> f64 {
        if relevant.is_empty() {
            return 0.0;
        }
        let mut sum = 0.0;
        for (i, id) in order.iter().enumerate() {
            if relevant.contains(id) {
                let prefix_hits = order[..=i].iter().filter(|x| relevant.contains(*x)).count();
                sum += prefix_hits as f64 / (i + 1) as f64;
            }
        }
        sum / relevant.len() as f64
    }

    #[test]
    fn ap_matches_brute_force_on_random_lists() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        for _ in 0..50 {
            let n = rng.random_range(1..=500);
            let ids: Vec<String> = (0..n).map(|i| format!("d{i:04}")).collect();
            let relevant: BTreeSet<String> = ids
                .iter()
                .filter(|_| rng.random_bool(0.2))
                .cloned()
                .collect();
            let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
            let report = evaluate_ranked(&rl(&refs), &relevant).unwrap();
            let oracle = ap_brute_force(&ids, &relevant);
            assert_eq!(report.map, Some(oracle));
        }
    }

    #[test]
    fn adjacent_demotion_never_raises_ap() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(29);
        let ids: Vec<String> = (0..40).map(|i| format!("d{i:02}")).collect();
        let relevant: BTreeSet<String> = ids
            .iter()
            .filter(|_| rng.random_bool(0.3))
            .cloned()
            .collect();
        let base = ap_brute_force(&ids, &relevant);
        for i in 0..ids.len() - 1 {
            if relevant.contains(&ids[i]) && !relevant.contains(&ids[i + 1]) {
                let mut swapped = ids.clone();
                swapped.swap(i, i + 1);
                assert!(ap_brute_force(&swapped, &relevant) <= base + 1e-15);
            }
        }
    }

    #[test]
    fn qrels_parse_and_tsv_format() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("qrels.txt");
        std::fs::write(&p, "need 0 t1 1\nneed 0 t2 0\navail 0 t3 1\n").unwrap();
        let q = Qrels::from_path(&p).unwrap();
        assert_eq!(q.relevant("need").unwrap().len(), 1);
        assert!(q.relevant("need").unwrap().contains("t1"));
        assert_eq!(q.relevant("avail").unwrap().len(), 1);

        let report = evaluate_set(&rel(&["t1"]), q.relevant("need").unwrap());
        let tsv = report.to_tsv("need");
        assert!(tsv.contains("F\tneed\t1.000000"));
        assert!(tsv.contains("MAP\tneed\t--"));
    }
}
