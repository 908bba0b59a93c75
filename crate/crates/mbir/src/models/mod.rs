//! The five skip-gram embedding models behind one shared interface.
//!
//! Every kind predicts context words from a composed center-token embedding
//! through a hierarchical-softmax output layer over the word vocabulary:
//!
//! - `W2V`: the embedding is a word-table lookup.
//! - `WC`: word vector mixed with the mean of the token's character vectors,
//!   `E = l*W[u] + (1-l)*mean(C)`, with the mixing weight learned.
//! - `WCAL`: characters run through a biLSTM; an attention layer pools the
//!   concatenated states; the pooled vector mixes with the word vector.
//! - `WCA`: attention pools the raw character vectors directly.
//! - `WCInd`: word table trained exactly like `W2V`, plus an independent
//!   character-level skip-gram over each token's character stream (its own
//!   Huffman tree over the character inventory); the two tables mix only at
//!   inference with a fixed weight of 0.7.
//!
//! Learned mixing weights are stored as a logit (`l = sigmoid(rho)`), which
//! keeps them in (0,1) for any parameter value. Backward passes are written
//! by hand and validated against central finite differences.

pub mod lstm;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::ProcessedTweet;
use crate::optim::{DifferentiableLoss, Optim, OptimKind, ParamTensor, RowGrads, TrainingConfig};
use crate::vocab::{HuffmanCode, Vocabulary};
use crate::{Error, Result};

/// Fixed mixing weight of the word branch for `WCInd`.
pub const WCIND_LAMBDA: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    W2v,
    Wc,
    Wcal,
    Wca,
    WcInd,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::W2v,
        ModelKind::Wc,
        ModelKind::Wcal,
        ModelKind::Wca,
        ModelKind::WcInd,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::W2v => "w2v",
            ModelKind::Wc => "wc",
            ModelKind::Wcal => "wcal",
            ModelKind::Wca => "wca",
            ModelKind::WcInd => "wcind",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "w2v" => Ok(ModelKind::W2v),
            "wc" => Ok(ModelKind::Wc),
            "wcal" => Ok(ModelKind::Wcal),
            "wca" => Ok(ModelKind::Wca),
            "wcind" => Ok(ModelKind::WcInd),
            other => Err(Error::InvalidConfig(format!(
                "unknown model kind '{other}'"
            ))),
        }
    }

    pub fn uses_chars(&self) -> bool {
        !matches!(self, ModelKind::W2v)
    }

    pub fn uses_attention(&self) -> bool {
        matches!(self, ModelKind::Wca | ModelKind::Wcal)
    }

    pub fn learns_lambda(&self) -> bool {
        matches!(self, ModelKind::Wc | ModelKind::Wca | ModelKind::Wcal)
    }

    /// Published per-kind hyperparameters: dimensions, context width 5,
    /// optimizer and learning rates, Adam beta1 = 0.001, and 8 epochs (12
    /// for the biLSTM model, which needs more training).
    pub fn default_config(&self) -> TrainingConfig {
        let base = TrainingConfig {
            d_wrd: 256,
            d_chr: 256,
            window: 5,
            lr_word: 0.5,
            lr_char: 0.5,
            optimizer: OptimKind::Adam,
            adam_beta1: 0.001,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            epochs: 8,
            seed: 42,
        };
        match self {
            ModelKind::W2v => TrainingConfig {
                optimizer: OptimKind::Sgd,
                ..base
            },
            ModelKind::Wc => base,
            ModelKind::Wcal => TrainingConfig {
                d_chr: 128,
                epochs: 12,
                ..base
            },
            ModelKind::Wca => TrainingConfig {
                lr_char: 0.005,
                ..base
            },
            ModelKind::WcInd => TrainingConfig {
                optimizer: OptimKind::Sgd,
                lr_word: 1.0,
                lr_char: 0.05,
                ..base
            },
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// All trainable tensors of one model. Absent tensors are kinds that do not
/// use them.
#[derive(Debug, Clone)]
pub struct ModelParams {
    /// Word table, `V x d_wrd`.
    pub w: ParamTensor,
    /// Hierarchical-softmax node vectors over words, `(V-1) x d_wrd`.
    pub nodes: ParamTensor,
    /// Character table, `Vc x d_chr`.
    pub c: Option<ParamTensor>,
    /// Hierarchical-softmax node vectors over characters (WCInd only).
    pub char_nodes: Option<ParamTensor>,
    /// Attention score vector, `1 x d_att`.
    pub att_v: Option<ParamTensor>,
    /// Attention projection, `d_att x (char-branch input dim)`.
    pub att_m: Option<ParamTensor>,
    pub lstm: Option<lstm::BiLstm>,
    /// Logit of the learned mixing weight.
    pub rho: Option<ParamTensor>,
}

impl ModelParams {
    /// Visit every present tensor in a stable order.
    pub fn for_each<'a>(&'a self, mut f: impl FnMut(&'a ParamTensor)) {
        f(&self.w);
        f(&self.nodes);
        if let Some(t) = &self.c {
            f(t);
        }
        if let Some(t) = &self.char_nodes {
            f(t);
        }
        if let Some(t) = &self.att_v {
            f(t);
        }
        if let Some(t) = &self.att_m {
            f(t);
        }
        if let Some(l) = &self.lstm {
            for d in [&l.fwd, &l.bwd] {
                f(&d.wx);
                f(&d.wh);
                f(&d.b);
            }
        }
        if let Some(t) = &self.rho {
            f(t);
        }
    }

    pub fn for_each_mut(&mut self, mut f: impl FnMut(&mut ParamTensor)) {
        f(&mut self.w);
        f(&mut self.nodes);
        if let Some(t) = &mut self.c {
            f(t);
        }
        if let Some(t) = &mut self.char_nodes {
            f(t);
        }
        if let Some(t) = &mut self.att_v {
            f(t);
        }
        if let Some(t) = &mut self.att_m {
            f(t);
        }
        if let Some(l) = &mut self.lstm {
            for d in [&mut l.fwd, &mut l.bwd] {
                f(&mut d.wx);
                f(&mut d.wh);
                f(&mut d.b);
            }
        }
        if let Some(t) = &mut self.rho {
            f(t);
        }
    }

    pub fn tensor(&self, name: &str) -> Option<&ParamTensor> {
        match name {
            "w" => Some(&self.w),
            "nodes" => Some(&self.nodes),
            "c" => self.c.as_ref(),
            "char_nodes" => self.char_nodes.as_ref(),
            "att_v" => self.att_v.as_ref(),
            "att_m" => self.att_m.as_ref(),
            "rho" => self.rho.as_ref(),
            "lstm_fwd_wx" => self.lstm.as_ref().map(|l| &l.fwd.wx),
            "lstm_fwd_wh" => self.lstm.as_ref().map(|l| &l.fwd.wh),
            "lstm_fwd_b" => self.lstm.as_ref().map(|l| &l.fwd.b),
            "lstm_bwd_wx" => self.lstm.as_ref().map(|l| &l.bwd.wx),
            "lstm_bwd_wh" => self.lstm.as_ref().map(|l| &l.bwd.wh),
            "lstm_bwd_b" => self.lstm.as_ref().map(|l| &l.bwd.b),
            _ => None,
        }
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut ParamTensor> {
        match name {
            "w" => Some(&mut self.w),
            "nodes" => Some(&mut self.nodes),
            "c" => self.c.as_mut(),
            "char_nodes" => self.char_nodes.as_mut(),
            "att_v" => self.att_v.as_mut(),
            "att_m" => self.att_m.as_mut(),
            "rho" => self.rho.as_mut(),
            "lstm_fwd_wx" => self.lstm.as_mut().map(|l| &mut l.fwd.wx),
            "lstm_fwd_wh" => self.lstm.as_mut().map(|l| &mut l.fwd.wh),
            "lstm_fwd_b" => self.lstm.as_mut().map(|l| &mut l.fwd.b),
            "lstm_bwd_wx" => self.lstm.as_mut().map(|l| &mut l.bwd.wx),
            "lstm_bwd_wh" => self.lstm.as_mut().map(|l| &mut l.bwd.wh),
            "lstm_bwd_b" => self.lstm.as_mut().map(|l| &mut l.bwd.b),
            _ => None,
        }
    }
}

/// One trained (or trainable) embedding model.
#[derive(Debug, Clone)]
pub struct EmbeddingModel {
    pub kind: ModelKind,
    pub config: TrainingConfig,
    pub vocab: Vocabulary,
    pub huffman: HuffmanCode,
    pub char_huffman: Option<HuffmanCode>,
    pub params: ModelParams,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Numerically stable `ln(1 + e^x)`.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn dot_f32_f64(a: &[f32], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y).sum()
}

fn row_f64(t: &ParamTensor, r: u32) -> Vec<f64> {
    t.row(r as usize).iter().map(|&v| v as f64).collect()
}

impl EmbeddingModel {
    /// Build a fresh model over `vocab`, with all tensors initialized from
    /// the config seed: tables uniform in `[-0.5/dim, 0.5/dim]`, output
    /// nodes zero, attention parameters uniform in `[-0.05, 0.05]`.
    pub fn new(kind: ModelKind, config: TrainingConfig, vocab: Vocabulary) -> Result<Self> {
        config.validate()?;
        let v = vocab.n_words();
        if v < 2 {
            return Err(Error::VocabTooSmall { size: v });
        }
        match kind {
            ModelKind::Wc | ModelKind::Wca | ModelKind::WcInd => {
                if config.d_chr != config.d_wrd {
                    return Err(Error::InvalidConfig(format!(
                        "{kind} requires d_chr == d_wrd (got {} and {})",
                        config.d_chr, config.d_wrd
                    )));
                }
            }
            ModelKind::Wcal => {
                if 2 * config.d_chr != config.d_wrd {
                    return Err(Error::InvalidConfig(format!(
                        "wcal requires d_wrd == 2*d_chr (got {} and {})",
                        config.d_wrd, config.d_chr
                    )));
                }
            }
            ModelKind::W2v => {}
        }
        if kind == ModelKind::WcInd && vocab.n_chars() < 2 {
            return Err(Error::VocabTooSmall {
                size: vocab.n_chars(),
            });
        }

        let huffman = HuffmanCode::build(&vocab.word_freqs())?;
        let char_huffman = if kind == ModelKind::WcInd {
            Some(HuffmanCode::build(&vocab.char_freqs())?)
        } else {
            None
        };

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let w = ParamTensor::uniform("w", v, config.d_wrd, 0.5 / config.d_wrd as f64, &mut rng);
        let c = if kind.uses_chars() {
            Some(ParamTensor::uniform(
                "c",
                vocab.n_chars(),
                config.d_chr,
                0.5 / config.d_chr as f64,
                &mut rng,
            ))
        } else {
            None
        };
        let nodes = ParamTensor::zeros("nodes", v - 1, config.d_wrd);
        let char_nodes = if kind == ModelKind::WcInd {
            Some(ParamTensor::zeros(
                "char_nodes",
                vocab.n_chars() - 1,
                config.d_chr,
            ))
        } else {
            None
        };
        let d_att = config.d_chr;
        let branch_dim = match kind {
            ModelKind::Wcal => 2 * config.d_chr,
            _ => config.d_chr,
        };
        let (att_v, att_m) = if kind.uses_attention() {
            (
                Some(ParamTensor::uniform("att_v", 1, d_att, 0.05, &mut rng)),
                Some(ParamTensor::uniform(
                    "att_m", d_att, branch_dim, 0.05, &mut rng,
                )),
            )
        } else {
            (None, None)
        };
        let lstm_params = if kind == ModelKind::Wcal {
            Some(lstm::BiLstm::new(
                config.d_chr,
                config.d_chr,
                0.05,
                &mut rng,
            ))
        } else {
            None
        };
        let rho = if kind.learns_lambda() {
            Some(ParamTensor::zeros("rho", 1, 1))
        } else {
            None
        };

        Ok(EmbeddingModel {
            kind,
            config,
            vocab,
            huffman,
            char_huffman,
            params: ModelParams {
                w,
                nodes,
                c,
                char_nodes,
                att_v,
                att_m,
                lstm: lstm_params,
                rho,
            },
        })
    }

    /// Current word-branch mixing weight.
    pub fn lambda2(&self) -> f64 {
        match self.kind {
            ModelKind::W2v => 1.0,
            ModelKind::WcInd => WCIND_LAMBDA,
            _ => sigmoid(self.params.rho.as_ref().expect("rho").values[0] as f64),
        }
    }

    fn word_optim(&self) -> Optim {
        let o = match self.config.optimizer {
            OptimKind::Sgd => Optim::sgd(self.config.lr_word),
            OptimKind::Adam => Optim::adam(
                self.config.lr_word,
                self.config.adam_beta1,
                self.config.adam_beta2,
                self.config.adam_eps,
            ),
        };
        if self.kind == ModelKind::Wcal {
            o.with_clip(5.0)
        } else {
            o
        }
    }

    fn char_optim(&self) -> Optim {
        let o = match self.config.optimizer {
            OptimKind::Sgd => Optim::sgd(self.config.lr_char),
            OptimKind::Adam => Optim::adam(
                self.config.lr_char,
                self.config.adam_beta1,
                self.config.adam_beta2,
                self.config.adam_eps,
            ),
        };
        if self.kind == ModelKind::Wcal {
            o.with_clip(5.0)
        } else {
            o
        }
    }

    // ------------------------------------------------------------------
    // Hierarchical softmax
    // ------------------------------------------------------------------

    /// Probability of `target` under the word-level hierarchical softmax for
    /// a given input vector: the product over the target's Huffman path of
    /// per-node logistic decisions.
    pub fn hs_probability(&self, input: &[f64], target: u32) -> f64 {
        hs_probability_for(&self.params.nodes, &self.huffman, input, target)
    }

    /// Negative log probability plus gradients: node-row gradients into
    /// `node_grads`, input-vector gradient into `input_grad`.
    fn hs_loss_grad(
        nodes: &ParamTensor,
        huffman: &HuffmanCode,
        target: u32,
        input: &[f64],
        node_grads: &mut RowGrads,
        input_grad: &mut [f64],
    ) -> f64 {
        let path = &huffman.paths[target as usize];
        let code = &huffman.codes[target as usize];
        let mut loss = 0.0;
        for (&node, &bit) in path.iter().zip(code.iter()) {
            let u = nodes.row(node as usize);
            let a = dot_f32_f64(u, input);
            // bit = false is the branch with probability sigmoid(a).
            let (sign, label) = if bit { (-1.0, 0.0) } else { (1.0, 1.0) };
            loss += softplus(-sign * a);
            let err = sigmoid(a) - label;
            let ng = node_grads.acc(node as usize);
            for (k, &inp) in input.iter().enumerate() {
                ng[k] += err * inp;
            }
            for (k, &uk) in u.iter().enumerate() {
                input_grad[k] += err * uk as f64;
            }
        }
        loss
    }

    // ------------------------------------------------------------------
    // Composition (token -> vector)
    // ------------------------------------------------------------------

    /// Embed a token. `Ok(None)` signals an absent embedding (out-of-vocab
    /// word for `W2V`); a char-bearing kind with an out-of-vocab word falls
    /// back to the character branch alone, and errors only when no
    /// character is known either.
    pub fn token_embedding(&self, token: &str) -> Result<Option<Vec<f64>>> {
        if self.kind == ModelKind::W2v {
            return Ok(self
                .vocab
                .word_id(token)
                .map(|wid| row_f64(&self.params.w, wid)));
        }
        let wid = self.vocab.word_id(token);
        let chars = match wid {
            Some(w) => self.vocab.word_char_ids(w).to_vec(),
            None => self.vocab.char_ids_of(token),
        };
        if wid.is_none() && chars.is_empty() {
            return Err(Error::UnembeddableToken(token.to_string()));
        }
        let (emb, _) = self.compose(wid, &chars);
        Ok(Some(emb))
    }

    /// Mean of the embeddable tokens' vectors; `None` when nothing embeds.
    pub fn text_embedding(&self, tokens: &[String]) -> Option<Vec<f64>> {
        let mut sum = vec![0.0; self.config.d_wrd];
        let mut n = 0usize;
        for tok in tokens {
            if let Ok(Some(v)) = self.token_embedding(tok) {
                for (s, x) in sum.iter_mut().zip(&v) {
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

    /// Attention weights over a token's characters (WCA / WCAL).
    pub fn attention_alphas(&self, token: &str) -> Option<Vec<f64>> {
        if !self.kind.uses_attention() {
            return None;
        }
        let wid = self.vocab.word_id(token);
        let chars = match wid {
            Some(w) => self.vocab.word_char_ids(w).to_vec(),
            None => self.vocab.char_ids_of(token),
        };
        if chars.is_empty() {
            return None;
        }
        let (_, cache) = self.compose(wid, &chars);
        cache.att.map(|a| a.alphas)
    }

    fn compose(&self, wid: Option<u32>, chars: &[u32]) -> (Vec<f64>, Cache) {
        debug_assert!(self.kind.uses_chars());
        // Vocabulary words are non-empty and their characters are covered by
        // construction; OOV tokens with no known characters error upstream.
        debug_assert!(wid.is_none() || !chars.is_empty());
        let lambda = self.lambda2();
        let (mix_word, mix_char) = match wid {
            Some(_) => (lambda, 1.0 - lambda),
            None => (0.0, 1.0),
        };

        let c = self.params.c.as_ref().expect("char table");
        let (branch, att, traces, h_concat) = match self.kind {
            ModelKind::Wc | ModelKind::WcInd => {
                let mut mean = vec![0.0; self.config.d_chr];
                for &ch in chars {
                    let row = c.row(ch as usize);
                    for (m, &x) in mean.iter_mut().zip(row) {
                        *m += x as f64;
                    }
                }
                for m in &mut mean {
                    *m /= chars.len().max(1) as f64;
                }
                (mean, None, None, Vec::new())
            }
            ModelKind::Wca => {
                let inputs: Vec<Vec<f64>> = chars.iter().map(|&ch| row_f64(c, ch)).collect();
                let (branch, att) = self.attention_forward(&inputs);
                (branch, Some(att), None, inputs)
            }
            ModelKind::Wcal => {
                let l = self.params.lstm.as_ref().expect("lstm");
                let xs_data: Vec<Vec<f64>> = chars.iter().map(|&ch| row_f64(c, ch)).collect();
                let xs: Vec<&[f64]> = xs_data.iter().map(Vec::as_slice).collect();
                let xs_rev: Vec<&[f64]> = xs.iter().rev().copied().collect();
                let tr_f = lstm::forward(&l.fwd, l.hidden, &xs);
                let tr_b = lstm::forward(&l.bwd, l.hidden, &xs_rev);
                let n = chars.len();
                let h_concat: Vec<Vec<f64>> = (0..n)
                    .map(|j| {
                        let mut h = tr_f.h[j].clone();
                        h.extend_from_slice(&tr_b.h[n - 1 - j]);
                        h
                    })
                    .collect();
                let (branch, att) = self.attention_forward(&h_concat);
                (branch, Some(att), Some((tr_f, tr_b)), h_concat)
            }
            ModelKind::W2v => unreachable!("compose is for char-bearing kinds"),
        };

        let mut emb = vec![0.0; self.config.d_wrd];
        for (e, &b) in emb.iter_mut().zip(&branch) {
            *e = mix_char * b;
        }
        if let Some(wid) = wid {
            let wrow = self.params.w.row(wid as usize);
            for (e, &wv) in emb.iter_mut().zip(wrow) {
                *e += mix_word * wv as f64;
            }
        }
        let cache = Cache {
            wid,
            chars: chars.to_vec(),
            mix_word,
            mix_char,
            branch,
            att,
            traces,
            inputs: h_concat,
        };
        (emb, cache)
    }

    /// Attention pooling: scores `v . tanh(M x_j)`, softmax weights, and the
    /// weighted sum of the inputs.
    fn attention_forward(&self, inputs: &[Vec<f64>]) -> (Vec<f64>, AttCache) {
        let v = self.params.att_v.as_ref().expect("att_v");
        let m = self.params.att_m.as_ref().expect("att_m");
        let d_att = v.cols;
        let mut tanhs = Vec::with_capacity(inputs.len());
        let mut scores = Vec::with_capacity(inputs.len());
        for x in inputs {
            let mut t = vec![0.0; d_att];
            for (a, ta) in t.iter_mut().enumerate() {
                *ta = dot_f32_f64(m.row(a), x).tanh();
            }
            let e = t
                .iter()
                .zip(v.row(0))
                .map(|(&ta, &va)| va as f64 * ta)
                .sum::<f64>();
            tanhs.push(t);
            scores.push(e);
        }
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|&e| (e - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        let alphas: Vec<f64> = exps.iter().map(|&e| e / z).collect();

        let dim = inputs[0].len();
        let mut branch = vec![0.0; dim];
        for (a, x) in alphas.iter().zip(inputs) {
            for (b, &xk) in branch.iter_mut().zip(x) {
                *b += a * xk;
            }
        }
        (branch, AttCache { tanhs, alphas })
    }

    /// Backpropagate `grad_e` (gradient at the composed embedding) through
    /// the composition recorded in `cache`.
    fn backward_compose(&self, cache: &Cache, grad_e: &[f64], g: &mut GradBundle) {
        let Cache {
            wid,
            chars,
            mix_word,
            mix_char,
            branch,
            att,
            traces,
            inputs,
        } = cache;
        // Word branch.
        if let Some(wid) = wid {
            let gw = g.w.acc(*wid as usize);
            for (k, &ge) in grad_e.iter().enumerate() {
                gw[k] += mix_word * ge;
            }
            // Mixing weight (learned kinds only, and only when the word
            // branch participates).
            if self.kind.learns_lambda() {
                let wrow = self.params.w.row(*wid as usize);
                let mut d_lambda = 0.0;
                for (k, &ge) in grad_e.iter().enumerate() {
                    d_lambda += ge * (wrow[k] as f64 - branch[k]);
                }
                let l = self.lambda2();
                g.rho += d_lambda * l * (1.0 - l);
            }
        }

        // Char branch: gradient flowing into the branch output.
        let gb: Vec<f64> = grad_e.iter().map(|&ge| mix_char * ge).collect();
        match self.kind {
            ModelKind::Wc | ModelKind::WcInd => {
                let n = chars.len().max(1) as f64;
                for &ch in chars {
                    let gc = g.c.acc(ch as usize);
                    for (k, &gbk) in gb.iter().enumerate() {
                        gc[k] += gbk / n;
                    }
                }
            }
            ModelKind::Wca => {
                let att = att.as_ref().expect("attention cache");
                let mut dx = self.backward_attention(att, inputs, &gb, g);
                for (j, &ch) in chars.iter().enumerate() {
                    let gc = g.c.acc(ch as usize);
                    for (k, v) in dx[j].iter().enumerate() {
                        gc[k] += v;
                    }
                    dx[j].clear();
                }
            }
            ModelKind::Wcal => {
                let att = att.as_ref().expect("attention cache");
                let dh = self.backward_attention(att, inputs, &gb, g);
                let l = self.params.lstm.as_ref().expect("lstm");
                let (tr_f, tr_b) = traces.as_ref().expect("lstm traces");
                let n = chars.len();
                let hid = l.hidden;
                let mut dh_f = vec![vec![0.0; hid]; n];
                let mut dh_b = vec![vec![0.0; hid]; n];
                for j in 0..n {
                    dh_f[j].copy_from_slice(&dh[j][..hid]);
                    dh_b[n - 1 - j].copy_from_slice(&dh[j][hid..]);
                }
                let c = self.params.c.as_ref().expect("char table");
                let xs_data: Vec<Vec<f64>> = chars.iter().map(|&ch| row_f64(c, ch)).collect();
                let xs: Vec<&[f64]> = xs_data.iter().map(Vec::as_slice).collect();
                let xs_rev: Vec<&[f64]> = xs.iter().rev().copied().collect();

                let (gf, dx_f) = lstm::backward(&l.fwd, hid, &xs, tr_f, &dh_f);
                let (gbk, dx_b) = lstm::backward(&l.bwd, hid, &xs_rev, tr_b, &dh_b);
                accumulate_dir(g.lstm_fwd.as_mut().expect("fwd grads"), &gf);
                accumulate_dir(g.lstm_bwd.as_mut().expect("bwd grads"), &gbk);
                for (j, &ch) in chars.iter().enumerate() {
                    let gc = g.c.acc(ch as usize);
                    for k in 0..gc.len() {
                        gc[k] += dx_f[j][k] + dx_b[n - 1 - j][k];
                    }
                }
            }
            ModelKind::W2v => unreachable!(),
        }
    }

    /// Gradient of the attention pooling. Returns d(loss)/d(input_j); the
    /// attention parameter gradients accumulate into the bundle.
    fn backward_attention(
        &self,
        att: &AttCache,
        inputs: &[Vec<f64>],
        gb: &[f64],
        g: &mut GradBundle,
    ) -> Vec<Vec<f64>> {
        let v = self.params.att_v.as_ref().expect("att_v");
        let m = self.params.att_m.as_ref().expect("att_m");
        let d_att = v.cols;
        let n = inputs.len();
        let dim = inputs[0].len();

        // Direct path: branch = sum_j alpha_j x_j.
        let mut dx: Vec<Vec<f64>> = (0..n)
            .map(|j| gb.iter().map(|&gk| att.alphas[j] * gk).collect())
            .collect();

        // Softmax backward on the scores.
        let d_j: Vec<f64> = inputs
            .iter()
            .map(|x| x.iter().zip(gb).map(|(&xk, &gk)| xk * gk).sum::<f64>())
            .collect();
        let s: f64 = att.alphas.iter().zip(&d_j).map(|(&a, &d)| a * d).sum();
        let de: Vec<f64> = att
            .alphas
            .iter()
            .zip(&d_j)
            .map(|(&a, &d)| a * (d - s))
            .collect();

        for j in 0..n {
            let t = &att.tanhs[j];
            // u = v .* (1 - t^2)
            let u: Vec<f64> = (0..d_att)
                .map(|a| v.row(0)[a] as f64 * (1.0 - t[a] * t[a]))
                .collect();
            for a in 0..d_att {
                g.att_v[a] += de[j] * t[a];
                let m_row = m.row(a);
                let gm = &mut g.att_m[a * dim..(a + 1) * dim];
                for k in 0..dim {
                    gm[k] += de[j] * u[a] * inputs[j][k];
                    dx[j][k] += de[j] * u[a] * m_row[k] as f64;
                }
            }
        }
        dx
    }

    // ------------------------------------------------------------------
    // Training
    // ------------------------------------------------------------------

    /// Fresh gradient buffers shaped for this model.
    pub fn new_bundle(&self) -> GradBundle {
        GradBundle {
            w: RowGrads::new(self.config.d_wrd),
            nodes: RowGrads::new(self.config.d_wrd),
            c: RowGrads::new(self.config.d_chr),
            char_nodes: RowGrads::new(self.config.d_chr),
            att_v: vec![0.0; self.params.att_v.as_ref().map_or(0, ParamTensor::len)],
            att_m: vec![0.0; self.params.att_m.as_ref().map_or(0, ParamTensor::len)],
            rho: 0.0,
            lstm_fwd: self
                .params
                .lstm
                .as_ref()
                .map(|l| lstm::DirGrads::zeros(&l.fwd)),
            lstm_bwd: self
                .params
                .lstm
                .as_ref()
                .map(|l| lstm::DirGrads::zeros(&l.bwd)),
        }
    }

    /// Loss and gradients for one word skip-gram pair (no update).
    pub fn word_pair_loss(&self, center: u32, context: u32, g: &mut GradBundle) -> f64 {
        let mut input_grad = vec![0.0; self.config.d_wrd];
        match self.kind {
            ModelKind::W2v | ModelKind::WcInd => {
                let emb = row_f64(&self.params.w, center);
                let loss = Self::hs_loss_grad(
                    &self.params.nodes,
                    &self.huffman,
                    context,
                    &emb,
                    &mut g.nodes,
                    &mut input_grad,
                );
                let gw = g.w.acc(center as usize);
                for (k, &ig) in input_grad.iter().enumerate() {
                    gw[k] += ig;
                }
                loss
            }
            _ => {
                let chars = self.vocab.word_char_ids(center).to_vec();
                let (emb, cache) = self.compose(Some(center), &chars);
                let loss = Self::hs_loss_grad(
                    &self.params.nodes,
                    &self.huffman,
                    context,
                    &emb,
                    &mut g.nodes,
                    &mut input_grad,
                );
                self.backward_compose(&cache, &input_grad, g);
                loss
            }
        }
    }

    /// Loss and gradients for one character skip-gram pair (WCInd only).
    pub fn char_pair_loss(&self, center: u32, context: u32, g: &mut GradBundle) -> f64 {
        let c = self.params.c.as_ref().expect("char table");
        let char_nodes = self.params.char_nodes.as_ref().expect("char nodes");
        let char_huffman = self.char_huffman.as_ref().expect("char huffman");
        let emb = row_f64(c, center);
        let mut input_grad = vec![0.0; self.config.d_chr];
        let loss = Self::hs_loss_grad(
            char_nodes,
            char_huffman,
            context,
            &emb,
            &mut g.char_nodes,
            &mut input_grad,
        );
        let gc = g.c.acc(center as usize);
        for (k, &ig) in input_grad.iter().enumerate() {
            gc[k] += ig;
        }
        loss
    }

    /// Apply one example's gradients and clear the bundle.
    fn apply_bundle(&mut self, g: &mut GradBundle) -> Result<()> {
        let wo = self.word_optim();
        let co = self.char_optim();
        wo.apply_rows(&mut self.params.w, &g.w)?;
        wo.apply_rows(&mut self.params.nodes, &g.nodes)?;
        if let Some(c) = &mut self.params.c {
            co.apply_rows(c, &g.c)?;
        }
        if let Some(cn) = &mut self.params.char_nodes {
            co.apply_rows(cn, &g.char_nodes)?;
        }
        if let Some(av) = &mut self.params.att_v {
            wo.apply_dense(av, &g.att_v)?;
        }
        if let Some(am) = &mut self.params.att_m {
            wo.apply_dense(am, &g.att_m)?;
        }
        if let Some(l) = &mut self.params.lstm {
            let gf = g.lstm_fwd.as_ref().expect("fwd grads");
            let gb = g.lstm_bwd.as_ref().expect("bwd grads");
            wo.apply_dense(&mut l.fwd.wx, &gf.wx)?;
            wo.apply_dense(&mut l.fwd.wh, &gf.wh)?;
            wo.apply_dense(&mut l.fwd.b, &gf.b)?;
            wo.apply_dense(&mut l.bwd.wx, &gb.wx)?;
            wo.apply_dense(&mut l.bwd.wh, &gb.wh)?;
            wo.apply_dense(&mut l.bwd.b, &gb.b)?;
        }
        if let Some(r) = &mut self.params.rho {
            wo.apply_dense(r, &[g.rho])?;
        }
        g.reset();
        Ok(())
    }

    /// Train over the corpus for `config.epochs` epochs (0 is legal and
    /// leaves the model at initialization), returning the mean per-pair loss
    /// of each epoch. Deterministic: tweets, centers, and context offsets
    /// are visited in order, single-threaded.
    #[allow(clippy::needless_range_loop)]
    pub fn train(&mut self, corpus: &[ProcessedTweet]) -> Result<Vec<f64>> {
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let window = self.config.window;
        let mut log = Vec::with_capacity(self.config.epochs);
        let mut bundle = self.new_bundle();
        for epoch in 0..self.config.epochs {
            let mut sum = 0.0;
            let mut pairs = 0u64;
            for tweet in corpus {
                let ids: Vec<Option<u32>> =
                    tweet.tokens.iter().map(|t| self.vocab.word_id(t)).collect();
                for (i, center) in ids.iter().enumerate() {
                    let Some(center) = *center else { continue };
                    let lo = i.saturating_sub(window);
                    let hi = (i + window).min(ids.len().saturating_sub(1));
                    for j in lo..=hi {
                        if j == i {
                            continue;
                        }
                        let Some(context) = ids[j] else { continue };
                        let loss = self.word_pair_loss(center, context, &mut bundle);
                        if !loss.is_finite() {
                            return Err(Error::NonFinite {
                                context: format!(
                                    "loss at epoch {epoch}, tweet {}, center {i}",
                                    tweet.id
                                ),
                            });
                        }
                        self.apply_bundle(&mut bundle)?;
                        sum += loss;
                        pairs += 1;
                    }
                }
                if self.kind == ModelKind::WcInd {
                    // Independent character skip-gram, context resetting at
                    // token boundaries.
                    for (i, wid) in ids.iter().enumerate() {
                        let Some(wid) = *wid else { continue };
                        let chars = self.vocab.word_char_ids(wid).to_vec();
                        for (a, &ca) in chars.iter().enumerate() {
                            let lo = a.saturating_sub(window);
                            let hi = (a + window).min(chars.len() - 1);
                            for b in lo..=hi {
                                if b == a {
                                    continue;
                                }
                                let loss = self.char_pair_loss(ca, chars[b], &mut bundle);
                                if !loss.is_finite() {
                                    return Err(Error::NonFinite {
                                        context: format!(
                                            "char loss at epoch {epoch}, tweet {}, token {i}",
                                            tweet.id
                                        ),
                                    });
                                }
                                self.apply_bundle(&mut bundle)?;
                                sum += loss;
                                pairs += 1;
                            }
                        }
                    }
                }
            }
            let mean = if pairs > 0 { sum / pairs as f64 } else { 0.0 };
            if !mean.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("mean loss at epoch {epoch}"),
                });
            }
            log.push(mean);
        }
        Ok(log)
    }
}

/// Probability of `target` via the Huffman path over arbitrary node tensors.
pub fn hs_probability_for(
    nodes: &ParamTensor,
    huffman: &HuffmanCode,
    input: &[f64],
    target: u32,
) -> f64 {
    let path = &huffman.paths[target as usize];
    let code = &huffman.codes[target as usize];
    let mut nll = 0.0;
    for (&node, &bit) in path.iter().zip(code.iter()) {
        let a = dot_f32_f64(nodes.row(node as usize), input);
        let sign = if bit { -1.0 } else { 1.0 };
        nll += softplus(-sign * a);
    }
    (-nll).exp()
}

fn accumulate_dir(into: &mut lstm::DirGrads, from: &lstm::DirGrads) {
    for (a, b) in into.wx.iter_mut().zip(&from.wx) {
        *a += b;
    }
    for (a, b) in into.wh.iter_mut().zip(&from.wh) {
        *a += b;
    }
    for (a, b) in into.b.iter_mut().zip(&from.b) {
        *a += b;
    }
}

/// Composition record for the backward pass.
struct Cache {
    wid: Option<u32>,
    chars: Vec<u32>,
    mix_word: f64,
    mix_char: f64,
    /// Char-branch output (before mixing).
    branch: Vec<f64>,
    att: Option<AttCache>,
    traces: Option<(lstm::Trace, lstm::Trace)>,
    /// Attention inputs: char vectors (WCA) or concatenated biLSTM states
    /// (WCAL).
    inputs: Vec<Vec<f64>>,
}

struct AttCache {
    tanhs: Vec<Vec<f64>>,
    alphas: Vec<f64>,
}

/// Per-example gradients for every tensor a model may own.
pub struct GradBundle {
    pub w: RowGrads,
    pub nodes: RowGrads,
    pub c: RowGrads,
    pub char_nodes: RowGrads,
    pub att_v: Vec<f64>,
    pub att_m: Vec<f64>,
    pub rho: f64,
    pub lstm_fwd: Option<lstm::DirGrads>,
    pub lstm_bwd: Option<lstm::DirGrads>,
}

impl GradBundle {
    pub fn reset(&mut self) {
        self.w.reset();
        self.nodes.reset();
        self.c.reset();
        self.char_nodes.reset();
        self.att_v.iter_mut().for_each(|x| *x = 0.0);
        self.att_m.iter_mut().for_each(|x| *x = 0.0);
        self.rho = 0.0;
        for d in [&mut self.lstm_fwd, &mut self.lstm_bwd]
            .into_iter()
            .flatten()
        {
            d.wx.iter_mut().for_each(|x| *x = 0.0);
            d.wh.iter_mut().for_each(|x| *x = 0.0);
            d.b.iter_mut().for_each(|x| *x = 0.0);
        }
    }
}

// ----------------------------------------------------------------------
// Gradient-check adapters
// ----------------------------------------------------------------------

/// The word skip-gram pair loss as a checkable differentiable function.
pub struct PairLoss<'a> {
    pub model: &'a mut EmbeddingModel,
    pub center: u32,
    pub context: u32,
}

impl PairLoss<'_> {
    fn names(&self) -> Vec<&'static str> {
        match self.model.kind {
            ModelKind::W2v | ModelKind::WcInd => vec!["w", "nodes"],
            ModelKind::Wc => vec!["w", "nodes", "c", "rho"],
            ModelKind::Wca => vec!["w", "nodes", "c", "rho", "att_v", "att_m"],
            ModelKind::Wcal => vec![
                "w",
                "nodes",
                "c",
                "rho",
                "att_v",
                "att_m",
                "lstm_fwd_wx",
                "lstm_fwd_wh",
                "lstm_fwd_b",
                "lstm_bwd_wx",
                "lstm_bwd_wh",
                "lstm_bwd_b",
            ],
        }
    }
}

impl DifferentiableLoss for PairLoss<'_> {
    fn tensor_names(&self) -> Vec<String> {
        self.names().into_iter().map(String::from).collect()
    }

    fn tensor_mut(&mut self, i: usize) -> &mut ParamTensor {
        let name = self.names()[i];
        self.model.params.tensor_mut(name).expect("tensor present")
    }

    fn loss(&mut self) -> f64 {
        let mut g = self.model.new_bundle();
        self.model.word_pair_loss(self.center, self.context, &mut g)
    }

    fn analytic_grad(&mut self) -> Vec<Vec<f64>> {
        let mut g = self.model.new_bundle();
        self.model.word_pair_loss(self.center, self.context, &mut g);
        let model = &self.model;
        self.names()
            .into_iter()
            .map(|name| dense_grad(model, &g, name))
            .collect()
    }
}

/// The WCInd character skip-gram pair loss.
pub struct CharPairLoss<'a> {
    pub model: &'a mut EmbeddingModel,
    pub center: u32,
    pub context: u32,
}

impl DifferentiableLoss for CharPairLoss<'_> {
    fn tensor_names(&self) -> Vec<String> {
        vec!["c".into(), "char_nodes".into()]
    }

    fn tensor_mut(&mut self, i: usize) -> &mut ParamTensor {
        let name = ["c", "char_nodes"][i];
        self.model.params.tensor_mut(name).expect("tensor present")
    }

    fn loss(&mut self) -> f64 {
        let mut g = self.model.new_bundle();
        self.model.char_pair_loss(self.center, self.context, &mut g)
    }

    fn analytic_grad(&mut self) -> Vec<Vec<f64>> {
        let mut g = self.model.new_bundle();
        self.model.char_pair_loss(self.center, self.context, &mut g);
        ["c", "char_nodes"]
            .into_iter()
            .map(|name| dense_grad(self.model, &g, name))
            .collect()
    }
}

fn dense_grad(model: &EmbeddingModel, g: &GradBundle, name: &str) -> Vec<f64> {
    let size = |t: &ParamTensor| t.len();
    match name {
        "w" => {
            let mut d = vec![0.0; size(&model.params.w)];
            g.w.scatter_into(&mut d);
            d
        }
        "nodes" => {
            let mut d = vec![0.0; size(&model.params.nodes)];
            g.nodes.scatter_into(&mut d);
            d
        }
        "c" => {
            let mut d = vec![0.0; size(model.params.c.as_ref().expect("c"))];
            g.c.scatter_into(&mut d);
            d
        }
        "char_nodes" => {
            let mut d = vec![0.0; size(model.params.char_nodes.as_ref().expect("char_nodes"))];
            g.char_nodes.scatter_into(&mut d);
            d
        }
        "att_v" => g.att_v.clone(),
        "att_m" => g.att_m.clone(),
        "rho" => vec![g.rho],
        "lstm_fwd_wx" => g.lstm_fwd.as_ref().expect("fwd").wx.clone(),
        "lstm_fwd_wh" => g.lstm_fwd.as_ref().expect("fwd").wh.clone(),
        "lstm_fwd_b" => g.lstm_fwd.as_ref().expect("fwd").b.clone(),
        "lstm_bwd_wx" => g.lstm_bwd.as_ref().expect("bwd").wx.clone(),
        "lstm_bwd_wh" => g.lstm_bwd.as_ref().expect("bwd").wh.clone(),
        "lstm_bwd_b" => g.lstm_bwd.as_ref().expect("bwd").b.clone(),
        other => panic!("unknown tensor {other}"),
    }
}
