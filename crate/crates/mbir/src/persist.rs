//! Checksummed binary model files and the pre-train / warm-start workflow.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "MBIM" | version u32 | kind u8
//! config: d_wrd u32, d_chr u32, window u32, lr_word f64, lr_char f64,
//!         optimizer u8, beta1 f64, beta2 f64, eps f64, epochs u32, seed u64
//! vocab:  min_count u64,
//!         n_words u64, then per word: len u32 + utf8 + freq u64,
//!         n_chars u64, then per char: len u32 + utf8 + freq u64
//! tensors: count u32, then per tensor:
//!         name len u32 + utf8, rows u64, cols u64, values f32[rows*cols]
//! sha256 of all preceding bytes (32 bytes)
//! ```
//!
//! Values are stored exactly as held in memory (`f32`), so a restore
//! reproduces every tensor bit-for-bit. Huffman trees are rebuilt from the
//! stored frequencies, which is deterministic. Optimizer state is not
//! persisted; restored models start cold.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::corpus::ProcessedTweet;
use crate::models::{EmbeddingModel, ModelKind};
use crate::optim::{OptimKind, ParamTensor, TrainingConfig};
use crate::vocab::Vocabulary;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"MBIM";
const VERSION: u32 = 1;

/// How a warm start builds the target vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VocabPolicy {
    /// Vocabulary from the target corpus alone.
    #[default]
    TargetOnly,
    /// Target vocabulary plus source-only words (kept at their source
    /// frequencies so the Huffman build stays defined).
    Union,
}

impl VocabPolicy {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "target-only" => Ok(VocabPolicy::TargetOnly),
            "union" => Ok(VocabPolicy::Union),
            other => Err(Error::InvalidConfig(format!(
                "unknown vocab policy '{other}' (expected target-only or union)"
            ))),
        }
    }
}

/// A pre-train -> re-train transfer.
#[derive(Debug, Clone)]
pub struct TransferPlan {
    pub source_model: std::path::PathBuf,
    pub retrain_epochs: usize,
    pub vocab_policy: VocabPolicy,
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Writer { buf: Vec::new() }
    }
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn corrupt(&self, reason: impl Into<String>) -> Error {
        Error::CorruptModel {
            path: self.path.to_path_buf(),
            reason: reason.into(),
        }
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(self.corrupt("truncated file"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn str(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| self.corrupt("invalid utf-8 string"))
    }
}

fn kind_to_u8(kind: ModelKind) -> u8 {
    match kind {
        ModelKind::W2v => 0,
        ModelKind::Wc => 1,
        ModelKind::Wcal => 2,
        ModelKind::Wca => 3,
        ModelKind::WcInd => 4,
    }
}

fn kind_from_u8(v: u8) -> Option<ModelKind> {
    match v {
        0 => Some(ModelKind::W2v),
        1 => Some(ModelKind::Wc),
        2 => Some(ModelKind::Wcal),
        3 => Some(ModelKind::Wca),
        4 => Some(ModelKind::WcInd),
        _ => None,
    }
}

fn encode(model: &EmbeddingModel) -> Vec<u8> {
    let mut w = Writer::new();
    w.buf.extend_from_slice(MAGIC);
    w.u32(VERSION);
    w.u8(kind_to_u8(model.kind));

    let c = &model.config;
    w.u32(c.d_wrd as u32);
    w.u32(c.d_chr as u32);
    w.u32(c.window as u32);
    w.f64(c.lr_word);
    w.f64(c.lr_char);
    w.u8(match c.optimizer {
        OptimKind::Sgd => 0,
        OptimKind::Adam => 1,
    });
    w.f64(c.adam_beta1);
    w.f64(c.adam_beta2);
    w.f64(c.adam_eps);
    w.u32(c.epochs as u32);
    w.u64(c.seed);

    w.u64(model.vocab.min_count);
    w.u64(model.vocab.words.len() as u64);
    for (word, freq) in &model.vocab.words {
        w.str(word);
        w.u64(*freq);
    }
    w.u64(model.vocab.chars.len() as u64);
    for (ch, freq) in &model.vocab.chars {
        w.str(&ch.to_string());
        w.u64(*freq);
    }

    let mut tensors: Vec<&ParamTensor> = Vec::new();
    model.params.for_each(|t| tensors.push(t));
    w.u32(tensors.len() as u32);
    for t in tensors {
        w.str(&t.name);
        w.u64(t.rows as u64);
        w.u64(t.cols as u64);
        for v in &t.values {
            w.buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    let digest = Sha256::digest(&w.buf);
    w.buf.extend_from_slice(&digest);
    w.buf
}

/// Write the model; `restore` reproduces every tensor bit-exactly.
pub fn save(model: &EmbeddingModel, path: &Path) -> Result<()> {
    std::fs::write(path, encode(model)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Read a model file back, verifying version and checksum.
pub fn restore(path: &Path) -> Result<EmbeddingModel> {
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut r = Reader {
        buf: &bytes,
        pos: 0,
        path,
    };
    if r.take(4)? != MAGIC {
        return Err(r.corrupt("bad magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: VERSION,
        });
    }
    if bytes.len() < 32 {
        return Err(r.corrupt("truncated file"));
    }
    let (payload, stored_digest) = bytes.split_at(bytes.len() - 32);
    let digest = Sha256::digest(payload);
    if digest.as_slice() != stored_digest {
        return Err(r.corrupt("checksum mismatch"));
    }

    let kind = kind_from_u8(r.u8()?).ok_or_else(|| r.corrupt("unknown model kind"))?;
    let config = TrainingConfig {
        d_wrd: r.u32()? as usize,
        d_chr: r.u32()? as usize,
        window: r.u32()? as usize,
        lr_word: r.f64()?,
        lr_char: r.f64()?,
        optimizer: match r.u8()? {
            0 => OptimKind::Sgd,
            1 => OptimKind::Adam,
            _ => return Err(r.corrupt("unknown optimizer")),
        },
        adam_beta1: r.f64()?,
        adam_beta2: r.f64()?,
        adam_eps: r.f64()?,
        epochs: r.u32()? as usize,
        seed: r.u64()?,
    };

    let min_count = r.u64()?;
    let n_words = r.u64()? as usize;
    let mut words = Vec::with_capacity(n_words);
    for _ in 0..n_words {
        let word = r.str()?;
        let freq = r.u64()?;
        words.push((word, freq));
    }
    let n_chars = r.u64()? as usize;
    let mut chars = Vec::with_capacity(n_chars);
    for _ in 0..n_chars {
        let s = r.str()?;
        let mut it = s.chars();
        let (Some(ch), None) = (it.next(), it.next()) else {
            return Err(r.corrupt("char entry is not a single character"));
        };
        let freq = r.u64()?;
        chars.push((ch, freq));
    }
    let vocab = Vocabulary::from_tables(words, chars, min_count);

    let mut model = EmbeddingModel::new(kind, config, vocab)?;
    let n_tensors = r.u32()? as usize;
    let mut expected = 0usize;
    model.params.for_each(|_| expected += 1);
    if n_tensors != expected {
        return Err(r.corrupt(format!(
            "tensor count {n_tensors} does not match kind (expected {expected})"
        )));
    }
    for _ in 0..n_tensors {
        let name = r.str()?;
        let rows = r.u64()? as usize;
        let cols = r.u64()? as usize;
        // Validate the shape against the model before trusting the sizes.
        let (t_rows, t_cols) = {
            let t = model
                .params
                .tensor(&name)
                .ok_or_else(|| Error::CorruptModel {
                    path: path.to_path_buf(),
                    reason: format!("unexpected tensor '{name}'"),
                })?;
            (t.rows, t.cols)
        };
        if t_rows != rows || t_cols != cols {
            return Err(Error::CorruptModel {
                path: path.to_path_buf(),
                reason: format!(
                    "tensor '{name}' shape {rows}x{cols} does not match model {t_rows}x{t_cols}"
                ),
            });
        }
        let byte_len = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| r.corrupt(format!("tensor '{name}' shape overflows")))?;
        let raw = r.take(byte_len)?;
        let t = model.params.tensor_mut(&name).expect("validated above");
        for (i, chunk) in raw.chunks_exact(4).enumerate() {
            t.values[i] = f32::from_le_bytes(chunk.try_into().unwrap());
        }
        t.reset_optimizer_state();
    }
    Ok(model)
}

/// Header fields of a model file, for inspection without full loading.
#[derive(Debug, Clone)]
pub struct ModelInfo {
    pub version: u32,
    pub kind: ModelKind,
    pub config: TrainingConfig,
    pub n_words: usize,
    pub n_chars: usize,
    pub tensors: Vec<(String, usize, usize)>,
    pub checksum_hex: String,
    pub file_bytes: usize,
}

/// Parse header and tensor shapes (checksum verified).
pub fn inspect(path: &Path) -> Result<ModelInfo> {
    let model = restore(path)?;
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let checksum_hex = bytes[bytes.len() - 32..]
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();
    let mut tensors = Vec::new();
    model
        .params
        .for_each(|t| tensors.push((t.name.clone(), t.rows, t.cols)));
    Ok(ModelInfo {
        version: VERSION,
        kind: model.kind,
        config: model.config.clone(),
        n_words: model.vocab.n_words(),
        n_chars: model.vocab.n_chars(),
        tensors,
        checksum_hex,
        file_bytes: bytes.len(),
    })
}

/// Initialize a model for a new corpus from a pre-trained source: build the
/// target vocabulary per policy, copy rows for shared words and characters,
/// freshly initialize the rest, rebuild the Huffman trees from target
/// frequencies (output-node vectors start over: tree shapes differ across
/// corpora), reset optimizer state, and re-train for `plan.retrain_epochs`.
///
/// Returns the model and its per-epoch loss log (empty when
/// `retrain_epochs` is 0).
pub fn warm_start(
    plan: &TransferPlan,
    target_corpus: &[ProcessedTweet],
    requested_kind: Option<ModelKind>,
    seed_override: Option<u64>,
) -> Result<(EmbeddingModel, Vec<f64>)> {
    let source = restore(&plan.source_model)?;
    if let Some(req) = requested_kind {
        if req != source.kind {
            return Err(Error::KindMismatch {
                found: source.kind.to_string(),
                requested: req.to_string(),
            });
        }
    }

    let target_vocab = match plan.vocab_policy {
        VocabPolicy::TargetOnly => Vocabulary::build(target_corpus, source.vocab.min_count)?,
        VocabPolicy::Union => {
            let base = Vocabulary::build(target_corpus, source.vocab.min_count)?;
            let mut words = base.words.clone();
            for (w, freq) in &source.vocab.words {
                if base.word_id(w).is_none() {
                    words.push((w.clone(), *freq));
                }
            }
            words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            let mut char_counts: std::collections::HashMap<char, u64> = Default::default();
            for (w, c) in &words {
                for ch in w.chars() {
                    *char_counts.entry(ch).or_insert(0) += c;
                }
            }
            let mut chars: Vec<(char, u64)> = char_counts.into_iter().collect();
            chars.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            Vocabulary::from_tables(words, chars, source.vocab.min_count)
        }
    };

    let mut config = source.config.clone();
    config.epochs = plan.retrain_epochs;
    if let Some(seed) = seed_override {
        config.seed = seed;
    }
    let mut model = EmbeddingModel::new(source.kind, config, target_vocab)?;

    // Word rows present in the source transfer over.
    for (tid, (word, _)) in model.vocab.words.iter().enumerate() {
        if let Some(sid) = source.vocab.word_id(word) {
            let src_row = source.params.w.row(sid as usize).to_vec();
            model.params.w.row_mut(tid).copy_from_slice(&src_row);
        }
    }
    // Character rows likewise.
    if let (Some(dst_c), Some(src_c)) = (&mut model.params.c, &source.params.c) {
        for (tid, (ch, _)) in model.vocab.chars.iter().enumerate() {
            if let Some(sid) = source.vocab.char_id(*ch) {
                let src_row = src_c.row(sid as usize).to_vec();
                dst_c.row_mut(tid).copy_from_slice(&src_row);
            }
        }
    }
    // Vocabulary-independent tensors copy wholesale; hierarchical-softmax
    // node tensors stay at their fresh zero initialization.
    for name in [
        "att_v",
        "att_m",
        "rho",
        "lstm_fwd_wx",
        "lstm_fwd_wh",
        "lstm_fwd_b",
        "lstm_bwd_wx",
        "lstm_bwd_wh",
        "lstm_bwd_b",
    ] {
        if let (Some(src), Some(dst)) = (source.params.tensor(name), model.params.tensor_mut(name))
        {
            dst.values.copy_from_slice(&src.values);
        }
    }
    model.params.for_each_mut(|t| t.reset_optimizer_state());

    let log = if plan.retrain_epochs > 0 {
        model.train(target_corpus)?
    } else {
        Vec::new()
    };
    Ok((model, log))
}
