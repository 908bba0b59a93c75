//! Word and character vocabularies, and the Huffman coding that defines the
//! hierarchical-softmax tree.

use std::collections::HashMap;

use crate::corpus::ProcessedTweet;
use crate::{Error, Result};

/// Indexed word and character inventories with frequencies.
///
/// Indices are dense `0..V-1`, assigned by descending frequency with ties
/// broken by ascending term, so construction is deterministic. The character
/// inventory covers every character of every retained word; a character's
/// frequency is its occurrence count weighted by word frequency.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    pub words: Vec<(String, u64)>,
    pub chars: Vec<(char, u64)>,
    pub min_count: u64,
    word_index: HashMap<String, u32>,
    char_index: HashMap<char, u32>,
    /// Char-index sequence of each retained word, cached for training.
    word_chars: Vec<Vec<u32>>,
}

impl Vocabulary {
    /// Count terms over a processed corpus and keep those with frequency at
    /// least `min_count`. Characters are collected from retained words only.
    pub fn build(corpus: &[ProcessedTweet], min_count: u64) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for tweet in corpus {
            for tok in &tweet.tokens {
                *counts.entry(tok.as_str()).or_insert(0) += 1;
            }
        }
        let mut words: Vec<(String, u64)> = counts
            .into_iter()
            .filter(|&(_, c)| c >= min_count)
            .map(|(w, c)| (w.to_string(), c))
            .collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

        let mut char_counts: HashMap<char, u64> = HashMap::new();
        for (w, c) in &words {
            for ch in w.chars() {
                *char_counts.entry(ch).or_insert(0) += c;
            }
        }
        let mut chars: Vec<(char, u64)> = char_counts.into_iter().collect();
        chars.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

        Ok(Self::from_tables(words, chars, min_count))
    }

    /// Rebuild the derived indices from explicit tables (used on restore).
    pub fn from_tables(words: Vec<(String, u64)>, chars: Vec<(char, u64)>, min_count: u64) -> Self {
        let word_index = words
            .iter()
            .enumerate()
            .map(|(i, (w, _))| (w.clone(), i as u32))
            .collect();
        let char_index: HashMap<char, u32> = chars
            .iter()
            .enumerate()
            .map(|(i, (c, _))| (*c, i as u32))
            .collect();
        let word_chars = words
            .iter()
            .map(|(w, _)| {
                w.chars()
                    .filter_map(|c| char_index.get(&c).copied())
                    .collect()
            })
            .collect();
        Vocabulary {
            words,
            chars,
            min_count,
            word_index,
            char_index,
            word_chars,
        }
    }

    pub fn n_words(&self) -> usize {
        self.words.len()
    }

    pub fn n_chars(&self) -> usize {
        self.chars.len()
    }

    pub fn word_id(&self, term: &str) -> Option<u32> {
        self.word_index.get(term).copied()
    }

    pub fn char_id(&self, c: char) -> Option<u32> {
        self.char_index.get(&c).copied()
    }

    /// Char-index sequence of a retained word.
    pub fn word_char_ids(&self, word_id: u32) -> &[u32] {
        &self.word_chars[word_id as usize]
    }

    /// Char indices of an arbitrary token, skipping unknown characters.
    pub fn char_ids_of(&self, token: &str) -> Vec<u32> {
        token.chars().filter_map(|c| self.char_id(c)).collect()
    }

    pub fn word_freqs(&self) -> Vec<u64> {
        self.words.iter().map(|&(_, c)| c).collect()
    }

    pub fn char_freqs(&self) -> Vec<u64> {
        self.chars.iter().map(|&(_, c)| c).collect()
    }
}

/// Prefix-free Huffman codes over a frequency table.
///
/// `code[i]` and `path[i]` have equal length: `path[i][d]` is the internal
/// node whose binary decision at depth `d` is `code[i][d]`. Internal nodes
/// number `V - 1`, with the root always at index `V - 2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HuffmanCode {
    pub codes: Vec<Vec<bool>>,
    pub paths: Vec<Vec<u32>>,
    pub node_count: usize,
}

impl HuffmanCode {
    /// Standard frequency-based construction over a table sorted by
    /// descending frequency. The two-pointer scheme below consumes leaves
    /// from the infrequent end and merges deterministically, preferring the
    /// most recently created internal node on frequency ties.
    pub fn build(freqs: &[u64]) -> Result<Self> {
        let v = freqs.len();
        if v < 2 {
            return Err(Error::VocabTooSmall { size: v });
        }
        debug_assert!(freqs.windows(2).all(|w| w[0] >= w[1]), "sorted descending");

        const UNSET: u64 = u64::MAX;
        let mut count = vec![UNSET; 2 * v];
        count[..v].copy_from_slice(freqs);
        let mut parent = vec![0usize; 2 * v];
        let mut branch = vec![false; 2 * v];

        let mut pos1 = v as isize - 1;
        let mut pos2 = v;
        for a in 0..v - 1 {
            let min1 = if pos1 >= 0 && count[pos1 as usize] < count[pos2] {
                pos1 -= 1;
                (pos1 + 1) as usize
            } else {
                pos2 += 1;
                pos2 - 1
            };
            let min2 = if pos1 >= 0 && count[pos1 as usize] < count[pos2] {
                pos1 -= 1;
                (pos1 + 1) as usize
            } else {
                pos2 += 1;
                pos2 - 1
            };
            count[v + a] = count[min1].saturating_add(count[min2]);
            parent[min1] = v + a;
            parent[min2] = v + a;
            branch[min2] = true;
        }

        let root = 2 * v - 2;
        let mut codes = Vec::with_capacity(v);
        let mut paths = Vec::with_capacity(v);
        for leaf in 0..v {
            let mut bits = Vec::new();
            let mut nodes = Vec::new();
            let mut x = leaf;
            while x != root {
                bits.push(branch[x]);
                nodes.push((parent[x] - v) as u32);
                x = parent[x];
            }
            bits.reverse();
            nodes.reverse();
            codes.push(bits);
            paths.push(nodes);
        }
        Ok(HuffmanCode {
            codes,
            paths,
            node_count: v - 1,
        })
    }

    pub fn code_len(&self, i: usize) -> usize {
        self.codes[i].len()
    }
}
