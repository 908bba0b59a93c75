//! Stopword lists.
//!
//! File format: one lowercase term per line, `#` lines are comments, blank
//! lines ignored. The default list shipped with the crate is SMART-derived;
//! see `data/stopwords_en.txt` for its derivation note.

use std::collections::HashSet;
use std::path::Path;

use crate::{Error, Result};

/// The list shipped with the crate.
const DEFAULT_LIST: &str = include_str!("../data/stopwords_en.txt");

/// A set of terms removed during preprocessing.
#[derive(Debug, Clone)]
pub struct Stopwords {
    terms: HashSet<String>,
}

impl Stopwords {
    /// The SMART-derived English list shipped in the repository.
    pub fn default_english() -> Self {
        Self::parse(DEFAULT_LIST)
    }

    /// Empty list (keep everything).
    pub fn none() -> Self {
        Stopwords {
            terms: HashSet::new(),
        }
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self::parse(&text))
    }

    fn parse(text: &str) -> Self {
        let terms = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect();
        Stopwords { terms }
    }

    pub fn contains(&self, term: &str) -> bool {
        self.terms.contains(term)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}
