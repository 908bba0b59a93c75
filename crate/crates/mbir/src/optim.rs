//! Parameter storage, the two optimizers used for training, and a
//! finite-difference gradient checker.
//!
//! Values are stored as `f32` (matching the on-disk model format exactly, so
//! persistence is bit-exact) while all arithmetic runs in `f64`. Training
//! touches only a handful of rows per example, so row-sparse update paths sit
//! next to the dense whole-tensor operations; the sparse Adam path updates
//! moments only for touched entries and shares one step counter per tensor.

use rand::Rng;

use crate::{Error, Result};

/// A named 2-d trainable tensor (vectors are `1 x n`).
#[derive(Debug, Clone)]
pub struct ParamTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f32>,
    /// Dense gradient used by the whole-tensor optimizer steps and the
    /// gradient checker. The training loop uses the row-sparse paths instead.
    pub grad: Vec<f64>,
    moment1: Vec<f64>,
    moment2: Vec<f64>,
    step: u64,
}

impl ParamTensor {
    pub fn zeros(name: impl Into<String>, rows: usize, cols: usize) -> Self {
        ParamTensor {
            name: name.into(),
            rows,
            cols,
            values: vec![0.0; rows * cols],
            grad: vec![0.0; rows * cols],
            moment1: Vec::new(),
            moment2: Vec::new(),
            step: 0,
        }
    }

    /// Uniform init in `[-half_width, half_width]`.
    pub fn uniform<R: Rng>(
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        half_width: f64,
        rng: &mut R,
    ) -> Self {
        let mut t = Self::zeros(name, rows, cols);
        for v in &mut t.values {
            *v = rng.random_range(-half_width..=half_width) as f32;
        }
        t
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f32] {
        &mut self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn assert_finite(&self) -> Result<()> {
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("tensor {}", self.name),
            });
        }
        Ok(())
    }

    fn ensure_moments(&mut self) {
        if self.moment1.is_empty() {
            self.moment1 = vec![0.0; self.len()];
            self.moment2 = vec![0.0; self.len()];
        }
    }

    /// Reset optimizer state (moments and step counter).
    pub fn reset_optimizer_state(&mut self) {
        self.moment1.clear();
        self.moment2.clear();
        self.step = 0;
    }

    /// `values -= lr * grad`, then zero the gradient.
    pub fn sgd_step(&mut self, lr: f64) -> Result<()> {
        if self.grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("gradient of {}", self.name),
            });
        }
        for (v, g) in self.values.iter_mut().zip(self.grad.iter_mut()) {
            *v = (*v as f64 - lr * *g) as f32;
            *g = 0.0;
        }
        Ok(())
    }

    /// Standard Adam update with bias correction at step `t`, then zero the
    /// gradient.
    pub fn adam_step(&mut self, lr: f64, beta1: f64, beta2: f64, eps: f64, t: u64) -> Result<()> {
        assert!(t >= 1, "adam step index starts at 1");
        self.ensure_moments();
        let bc1 = 1.0 - beta1.powi(t as i32);
        let bc2 = 1.0 - beta2.powi(t as i32);
        for i in 0..self.len() {
            let g = self.grad[i];
            if !g.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("gradient of {}", self.name),
                });
            }
            self.moment1[i] = beta1 * self.moment1[i] + (1.0 - beta1) * g;
            self.moment2[i] = beta2 * self.moment2[i] + (1.0 - beta2) * g * g;
            let m_hat = self.moment1[i] / bc1;
            let v_hat = self.moment2[i] / bc2;
            let delta = lr * m_hat / (v_hat.sqrt() + eps);
            if !delta.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("adam update of {}", self.name),
                });
            }
            self.values[i] = (self.values[i] as f64 - delta) as f32;
            self.grad[i] = 0.0;
        }
        Ok(())
    }
}

/// Accumulates per-row gradients for one training example.
///
/// Touched row counts are tiny (a Huffman path, a word, a handful of
/// characters), so linear scans beat hashing here.
#[derive(Debug, Default)]
pub struct RowGrads {
    rows: Vec<usize>,
    data: Vec<Vec<f64>>,
    cols: usize,
    free: Vec<Vec<f64>>,
}

impl RowGrads {
    pub fn new(cols: usize) -> Self {
        RowGrads {
            rows: Vec::new(),
            data: Vec::new(),
            cols,
            free: Vec::new(),
        }
    }

    /// Gradient buffer for `row`, creating a zeroed one on first touch.
    pub fn acc(&mut self, row: usize) -> &mut [f64] {
        if let Some(pos) = self.rows.iter().position(|&r| r == row) {
            return &mut self.data[pos];
        }
        let mut buf = self.free.pop().unwrap_or_default();
        buf.clear();
        buf.resize(self.cols, 0.0);
        self.rows.push(row);
        self.data.push(buf);
        let last = self.data.len() - 1;
        &mut self.data[last]
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.rows
            .iter()
            .copied()
            .zip(self.data.iter().map(Vec::as_slice))
    }

    /// Clear for the next example, recycling buffers.
    pub fn reset(&mut self) {
        self.rows.clear();
        self.free.append(&mut self.data);
    }

    /// Scatter into a dense gradient of the owning tensor (gradient checker
    /// support).
    pub fn scatter_into(&self, dense: &mut [f64]) {
        for (row, g) in self.iter() {
            let base = row * self.cols;
            for (i, gi) in g.iter().enumerate() {
                dense[base + i] += gi;
            }
        }
    }
}

/// Which optimizer drives a parameter group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimKind {
    Sgd,
    Adam,
}

/// One parameter group's update rule.
#[derive(Debug, Clone, Copy)]
pub struct Optim {
    pub kind: OptimKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Element-wise gradient clip, applied at update time.
    pub clip: Option<f64>,
}

impl Optim {
    pub fn sgd(lr: f64) -> Self {
        Optim {
            kind: OptimKind::Sgd,
            lr,
            beta1: 0.0,
            beta2: 0.0,
            eps: 0.0,
            clip: None,
        }
    }

    pub fn adam(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Optim {
            kind: OptimKind::Adam,
            lr,
            beta1,
            beta2,
            eps,
            clip: None,
        }
    }

    pub fn with_clip(mut self, clip: f64) -> Self {
        self.clip = Some(clip);
        self
    }

    fn clipped(&self, g: f64) -> f64 {
        match self.clip {
            Some(c) => g.clamp(-c, c),
            None => g,
        }
    }

    /// Apply one example's row gradients to `t`. Counts as one step for the
    /// tensor; Adam moments update only for touched entries.
    pub fn apply_rows(&self, t: &mut ParamTensor, grads: &RowGrads) -> Result<()> {
        if grads.is_empty() {
            return Ok(());
        }
        t.step += 1;
        match self.kind {
            OptimKind::Sgd => {
                for (row, g) in grads.iter() {
                    let base = row * t.cols;
                    for (i, &gi) in g.iter().enumerate() {
                        if !gi.is_finite() {
                            return Err(Error::NonFinite {
                                context: format!("gradient of {}", t.name),
                            });
                        }
                        let gi = self.clipped(gi);
                        t.values[base + i] = (t.values[base + i] as f64 - self.lr * gi) as f32;
                    }
                }
            }
            OptimKind::Adam => {
                t.ensure_moments();
                let bc1 = 1.0 - self.beta1.powi(t.step as i32);
                let bc2 = 1.0 - self.beta2.powi(t.step as i32);
                for (row, g) in grads.iter() {
                    let base = row * t.cols;
                    for (i, &gi) in g.iter().enumerate() {
                        if !gi.is_finite() {
                            return Err(Error::NonFinite {
                                context: format!("gradient of {}", t.name),
                            });
                        }
                        let gi = self.clipped(gi);
                        let k = base + i;
                        t.moment1[k] = self.beta1 * t.moment1[k] + (1.0 - self.beta1) * gi;
                        t.moment2[k] = self.beta2 * t.moment2[k] + (1.0 - self.beta2) * gi * gi;
                        let m_hat = t.moment1[k] / bc1;
                        let v_hat = t.moment2[k] / bc2;
                        let delta = self.lr * m_hat / (v_hat.sqrt() + self.eps);
                        t.values[k] = (t.values[k] as f64 - delta) as f32;
                    }
                }
            }
        }
        Ok(())
    }

    /// Apply a dense gradient buffer covering the whole tensor.
    pub fn apply_dense(&self, t: &mut ParamTensor, g: &[f64]) -> Result<()> {
        debug_assert_eq!(g.len(), t.len());
        t.step += 1;
        match self.kind {
            OptimKind::Sgd => {
                for (i, &gi) in g.iter().enumerate() {
                    if !gi.is_finite() {
                        return Err(Error::NonFinite {
                            context: format!("gradient of {}", t.name),
                        });
                    }
                    let gi = self.clipped(gi);
                    t.values[i] = (t.values[i] as f64 - self.lr * gi) as f32;
                }
            }
            OptimKind::Adam => {
                t.ensure_moments();
                let bc1 = 1.0 - self.beta1.powi(t.step as i32);
                let bc2 = 1.0 - self.beta2.powi(t.step as i32);
                for (i, &gi) in g.iter().enumerate() {
                    if !gi.is_finite() {
                        return Err(Error::NonFinite {
                            context: format!("gradient of {}", t.name),
                        });
                    }
                    let gi = self.clipped(gi);
                    t.moment1[i] = self.beta1 * t.moment1[i] + (1.0 - self.beta1) * gi;
                    t.moment2[i] = self.beta2 * t.moment2[i] + (1.0 - self.beta2) * gi * gi;
                    let m_hat = t.moment1[i] / bc1;
                    let v_hat = t.moment2[i] / bc2;
                    let delta = self.lr * m_hat / (v_hat.sqrt() + self.eps);
                    t.values[i] = (t.values[i] as f64 - delta) as f32;
                }
            }
        }
        Ok(())
    }
}

/// Shared training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub d_wrd: usize,
    pub d_chr: usize,
    /// Context half-width.
    pub window: usize,
    pub lr_word: f64,
    pub lr_char: f64,
    pub optimizer: OptimKind,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_wrd == 0 || self.d_chr == 0 {
            return Err(Error::InvalidConfig("embedding dims must be >= 1".into()));
        }
        if self.window == 0 {
            return Err(Error::InvalidConfig("window must be >= 1".into()));
        }
        if self.lr_word <= 0.0 || self.lr_char <= 0.0 {
            return Err(Error::InvalidConfig("learning rates must be > 0".into()));
        }
        Ok(())
    }
}

/// A scalar loss with hand-written gradients, checkable by finite
/// differences.
pub trait DifferentiableLoss {
    /// Stable list of parameter tensor names.
    fn tensor_names(&self) -> Vec<String>;
    /// Mutable access to the i-th tensor (same order as `tensor_names`).
    fn tensor_mut(&mut self, i: usize) -> &mut ParamTensor;
    /// Loss at the current parameter values.
    fn loss(&mut self) -> f64;
    /// Analytic gradient per tensor, dense, aligned with `tensor_names`.
    fn analytic_grad(&mut self) -> Vec<Vec<f64>>;
}

/// Result of a gradient check.
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub entries_checked: usize,
}

/// Compare analytic gradients against central finite differences on a seeded
/// sample of parameter entries, stratified so every tensor is covered.
///
/// Relative error per entry is `|analytic - numeric| / max(1e-8, |analytic| +
/// |numeric|)`. The perturbed values are re-read after rounding to `f32` and
/// the actual step enters the divided difference, so the check stays exact
/// despite `f32` storage.
pub fn grad_check<L: DifferentiableLoss + ?Sized>(
    model: &mut L,
    epsilon: f64,
    max_entries: usize,
    seed: u64,
) -> GradCheck {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);

    let analytic = model.analytic_grad();
    let n_tensors = analytic.len();
    let quota = max_entries.div_ceil(n_tensors.max(1));

    // Even per-tensor quota first (so small tensors are fully covered), then
    // redistribute the leftover budget over tensors that still have
    // unsampled entries.
    let mut picked: Vec<std::collections::BTreeSet<usize>> = analytic
        .iter()
        .map(|g| {
            let size = g.len();
            let mut set = std::collections::BTreeSet::new();
            if size <= quota {
                set.extend(0..size);
            } else {
                while set.len() < quota {
                    set.insert(rng.random_range(0..size));
                }
            }
            set
        })
        .collect();
    let total_params: usize = analytic.iter().map(Vec::len).sum();
    let target = max_entries.min(total_params);
    let mut total: usize = picked.iter().map(|s| s.len()).sum();
    while total < target {
        for (ti, g) in analytic.iter().enumerate() {
            if total >= target {
                break;
            }
            let size = g.len();
            if picked[ti].len() < size {
                loop {
                    if picked[ti].insert(rng.random_range(0..size)) {
                        total += 1;
                        break;
                    }
                }
            }
        }
    }
    let mut plan: Vec<(usize, usize)> = Vec::new();
    for (ti, set) in picked.into_iter().enumerate() {
        plan.extend(set.into_iter().map(|e| (ti, e)));
    }

    let mut max_rel = 0.0f64;
    for &(ti, ei) in &plan {
        let orig = model.tensor_mut(ti).values[ei];
        let plus = (orig as f64 + epsilon) as f32;
        let minus = (orig as f64 - epsilon) as f32;

        model.tensor_mut(ti).values[ei] = plus;
        let lp = model.loss();
        model.tensor_mut(ti).values[ei] = minus;
        let lm = model.loss();
        model.tensor_mut(ti).values[ei] = orig;

        let numeric = (lp - lm) / (plus as f64 - minus as f64);
        let a = analytic[ti][ei];
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
        if rel > max_rel {
            max_rel = rel;
        }
    }
    GradCheck {
        max_rel_err: max_rel,
        entries_checked: plan.len(),
    }
}
