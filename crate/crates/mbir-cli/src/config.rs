//! Flat key=value run configuration.
//!
//! Every key is optional; training keys left unset fall back to the selected
//! model kind's published defaults at resolution time. The text form is
//! canonical (sorted keys, one `key = value` per line) and parses back to an
//! identical config, which is what makes the config hash embedded in output
//! metadata reproducible.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use mbir::models::ModelKind;
use mbir::optim::{OptimKind, TrainingConfig};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    // Paths.
    pub corpus: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub qrels: Option<PathBuf>,
    pub patterns: Option<PathBuf>,
    pub model_in: Option<PathBuf>,
    pub model_out: Option<PathBuf>,
    pub run_out: Option<PathBuf>,

    // Model.
    pub kind: Option<String>,
    pub d_wrd: Option<usize>,
    pub d_chr: Option<usize>,
    pub window: Option<usize>,
    pub lr_word: Option<f64>,
    pub lr_char: Option<f64>,
    pub optimizer: Option<String>,
    pub adam_beta1: Option<f64>,
    pub adam_beta2: Option<f64>,
    pub adam_eps: Option<f64>,
    pub epochs: Option<usize>,
    pub seed: Option<u64>,
    pub min_count: Option<u64>,

    // Pipeline stages.
    pub jaccard_threshold: Option<f64>,
    pub expand_k: Option<usize>,
    pub expand_p: Option<usize>,
    pub expand_exclude: Option<bool>,
    pub mu: Option<f64>,
    pub rocchio_k: Option<usize>,
    pub rocchio_p: Option<usize>,
    pub pattern_cap: Option<usize>,
    pub threads: Option<usize>,

    /// Query label -> whitespace-separated terms.
    pub queries: BTreeMap<String, Vec<String>>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .with_context(|| format!("line {}: expected key = value", lineno + 1))?;
            let (key, value) = (key.trim(), value.trim());
            cfg.set(key, value)
                .with_context(|| format!("line {}", lineno + 1))?;
        }
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn p<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            v.parse::<T>()
                .map_err(|e| anyhow::anyhow!("bad value '{v}' for {key}: {e}"))
        }
        if let Some(label) = key.strip_prefix("query.") {
            let terms: Vec<String> = value.split_whitespace().map(str::to_string).collect();
            if terms.is_empty() {
                bail!("query.{label} has no terms");
            }
            self.queries.insert(label.to_string(), terms);
            return Ok(());
        }
        match key {
            "corpus" => self.corpus = Some(PathBuf::from(value)),
            "stopwords" => self.stopwords = Some(PathBuf::from(value)),
            "qrels" => self.qrels = Some(PathBuf::from(value)),
            "patterns" => self.patterns = Some(PathBuf::from(value)),
            "model_in" => self.model_in = Some(PathBuf::from(value)),
            "model_out" => self.model_out = Some(PathBuf::from(value)),
            "run_out" => self.run_out = Some(PathBuf::from(value)),
            "kind" => self.kind = Some(value.to_string()),
            "d_wrd" => self.d_wrd = Some(p(key, value)?),
            "d_chr" => self.d_chr = Some(p(key, value)?),
            "window" => self.window = Some(p(key, value)?),
            "lr_word" => self.lr_word = Some(p(key, value)?),
            "lr_char" => self.lr_char = Some(p(key, value)?),
            "optimizer" => self.optimizer = Some(value.to_string()),
            "adam_beta1" => self.adam_beta1 = Some(p(key, value)?),
            "adam_beta2" => self.adam_beta2 = Some(p(key, value)?),
            "adam_eps" => self.adam_eps = Some(p(key, value)?),
            "epochs" => self.epochs = Some(p(key, value)?),
            "seed" => self.seed = Some(p(key, value)?),
            "min_count" => self.min_count = Some(p(key, value)?),
            "jaccard_threshold" => self.jaccard_threshold = Some(p(key, value)?),
            "expand_k" => self.expand_k = Some(p(key, value)?),
            "expand_p" => self.expand_p = Some(p(key, value)?),
            "expand_exclude" => self.expand_exclude = Some(p(key, value)?),
            "mu" => self.mu = Some(p(key, value)?),
            "rocchio_k" => self.rocchio_k = Some(p(key, value)?),
            "rocchio_p" => self.rocchio_p = Some(p(key, value)?),
            "pattern_cap" => self.pattern_cap = Some(p(key, value)?),
            "threads" => self.threads = Some(p(key, value)?),
            other => bail!("unknown config key '{other}'"),
        }
        Ok(())
    }

    /// Canonical text form: sorted keys, only set keys emitted.
    pub fn to_text(&self) -> String {
        let mut pairs: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                pairs.push((k.to_string(), v));
            }
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        put("adam_beta1", self.adam_beta1.map(|v| v.to_string()));
        put("adam_beta2", self.adam_beta2.map(|v| v.to_string()));
        put("adam_eps", self.adam_eps.map(|v| v.to_string()));
        put("corpus", path(&self.corpus));
        put("d_chr", self.d_chr.map(|v| v.to_string()));
        put("d_wrd", self.d_wrd.map(|v| v.to_string()));
        put("epochs", self.epochs.map(|v| v.to_string()));
        put("expand_exclude", self.expand_exclude.map(|v| v.to_string()));
        put("expand_k", self.expand_k.map(|v| v.to_string()));
        put("expand_p", self.expand_p.map(|v| v.to_string()));
        put(
            "jaccard_threshold",
            self.jaccard_threshold.map(|v| v.to_string()),
        );
        put("kind", self.kind.clone());
        put("lr_char", self.lr_char.map(|v| v.to_string()));
        put("lr_word", self.lr_word.map(|v| v.to_string()));
        put("min_count", self.min_count.map(|v| v.to_string()));
        put("model_in", path(&self.model_in));
        put("model_out", path(&self.model_out));
        put("mu", self.mu.map(|v| v.to_string()));
        put("optimizer", self.optimizer.clone());
        put("pattern_cap", self.pattern_cap.map(|v| v.to_string()));
        put("patterns", path(&self.patterns));
        put("qrels", path(&self.qrels));
        put("rocchio_k", self.rocchio_k.map(|v| v.to_string()));
        put("rocchio_p", self.rocchio_p.map(|v| v.to_string()));
        put("run_out", path(&self.run_out));
        put("seed", self.seed.map(|v| v.to_string()));
        put("stopwords", path(&self.stopwords));
        put("threads", self.threads.map(|v| v.to_string()));
        put("window", self.window.map(|v| v.to_string()));
        for (label, terms) in &self.queries {
            pairs.push((format!("query.{label}"), terms.join(" ")));
        }

        pairs.sort();
        let mut out = String::new();
        for (k, v) in pairs {
            writeln!(out, "{k} = {v}").expect("string write");
        }
        out
    }

    /// SHA-256 of the canonical text form.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn model_kind(&self) -> Result<ModelKind> {
        let name = self.kind.as_deref().unwrap_or("w2v");
        ModelKind::parse(name).map_err(|e| anyhow::anyhow!("{e}"))
    }

    /// Resolve the training config: the kind's published defaults overlaid
    /// with whatever keys were set.
    pub fn training_config(&self) -> Result<TrainingConfig> {
        let kind = self.model_kind()?;
        let mut cfg = kind.default_config();
        if let Some(v) = self.d_wrd {
            cfg.d_wrd = v;
        }
        if let Some(v) = self.d_chr {
            cfg.d_chr = v;
        }
        if let Some(v) = self.window {
            cfg.window = v;
        }
        if let Some(v) = self.lr_word {
            cfg.lr_word = v;
        }
        if let Some(v) = self.lr_char {
            cfg.lr_char = v;
        }
        if let Some(ref o) = self.optimizer {
            cfg.optimizer = match o.as_str() {
                "sgd" => OptimKind::Sgd,
                "adam" => OptimKind::Adam,
                other => bail!("unknown optimizer '{other}' (expected sgd or adam)"),
            };
        }
        if let Some(v) = self.adam_beta1 {
            cfg.adam_beta1 = v;
        }
        if let Some(v) = self.adam_beta2 {
            cfg.adam_beta2 = v;
        }
        if let Some(v) = self.adam_eps {
            cfg.adam_eps = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        Ok(cfg)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(42)
    }

    /// Configured queries, falling back to the built-in seed queries.
    pub fn query_terms(&self, label: &str) -> Option<Vec<String>> {
        if let Some(terms) = self.queries.get(label) {
            return Some(terms.clone());
        }
        match label {
            "need" => Some(vec!["need".into(), "requir".into()]),
            "avail" => Some(vec!["avail".into(), "distribut".into(), "send".into()]),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_lossless() {
        let mut cfg = RunConfig::default();
        cfg.set("kind", "wca").unwrap();
        cfg.set("seed", "7").unwrap();
        cfg.set("lr_char", "0.005").unwrap();
        cfg.set("corpus", "data/corpus.jsonl").unwrap();
        cfg.set("query.need", "need requir").unwrap();
        cfg.set("query.custom", "shelter camp").unwrap();
        cfg.set("expand_exclude", "true").unwrap();
        let text = cfg.to_text();
        let back = RunConfig::parse(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_text(), text);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn unknown_key_is_rejected() {
        assert!(RunConfig::parse("bogus = 1\n").is_err());
    }

    #[test]
    fn kind_defaults_are_overlaid() {
        let mut cfg = RunConfig::default();
        cfg.set("kind", "wcind").unwrap();
        let tc = cfg.training_config().unwrap();
        assert_eq!(tc.lr_word, 1.0);
        assert_eq!(tc.lr_char, 0.05);
        cfg.set("lr_word", "0.25").unwrap();
        let tc = cfg.training_config().unwrap();
        assert_eq!(tc.lr_word, 0.25);
    }

    #[test]
    fn default_queries_are_the_seed_queries() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.query_terms("need").unwrap(), vec!["need", "requir"]);
        assert_eq!(
            cfg.query_terms("avail").unwrap(),
            vec!["avail", "distribut", "send"]
        );
        assert!(cfg.query_terms("nope").is_none());
    }
}
