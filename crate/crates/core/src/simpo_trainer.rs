//! SimPO on a toy autoregressive policy.
//!
//! The policy is a table of logits indexed by (prompt bucket, position,
//! token); a sequence's log-probability is the sum of per-position
//! log-softmax terms. For a record with winning sequence `y_w` and losing
//! sequence `y_l`:
//!
//! ```text
//! r     = log π(y | x) / |y|
//! z     = β·r_w − β·r_l − γ
//! loss  = −log σ(z) = softplus(−z)
//! ```
//!
//! Gradients are exact and accumulated in record order, so results do not
//! depend on thread count.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::perturbation::PerturbKind;
use crate::rng;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("batch is empty")]
    EmptyBatch,
    #[error("record {index} is invalid: {reason}")]
    InvalidRecord { index: usize, reason: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("loss is not finite{}", step.map(|s| format!(" at step {s}")).unwrap_or_default())]
    NonFiniteLoss { step: Option<usize> },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Logistic function, stable for large |x|.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyPolicy {
    vocab: usize,
    max_len: usize,
    buckets: usize,
    theta: Vec<f64>,
}

impl ToyPolicy {
    /// A uniform policy (all logits zero).
    pub fn new(vocab: usize, max_len: usize, buckets: usize) -> Self {
        assert!(vocab > 0 && max_len > 0 && buckets > 0, "policy dimensions must be positive");
        Self {
            vocab,
            max_len,
            buckets,
            theta: vec![0.0; vocab * max_len * buckets],
        }
    }

    /// Logits drawn uniformly from `[-scale, scale]`.
    pub fn random(vocab: usize, max_len: usize, buckets: usize, scale: f64, seed: u64) -> Self {
        let mut policy = Self::new(vocab, max_len, buckets);
        let mut rng = rng::substream(seed, &["toy_policy"]);
        for x in &mut policy.theta {
            *x = rng.random_range(-scale..=scale);
        }
        policy
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn buckets(&self) -> usize {
        self.buckets
    }

    pub fn params(&self) -> &[f64] {
        &self.theta
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn bucket_of(&self, prompt: &str) -> usize {
        (rng::fnv1a(prompt) % self.buckets as u64) as usize
    }

    fn row(&self, bucket: usize, t: usize) -> usize {
        bucket * self.max_len + t
    }

    fn log_softmax_row(&self, row: usize) -> Vec<f64> {
        let logits = &self.theta[row * self.vocab..(row + 1) * self.vocab];
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + logits.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
        logits.iter().map(|x| x - lse).collect()
    }

    /// `log π(tokens | bucket)`.
    pub fn log_prob(&self, bucket: usize, tokens: &[u32]) -> f64 {
        tokens
            .iter()
            .enumerate()
            .map(|(t, &y)| self.log_softmax_row(self.row(bucket, t))[y as usize])
            .sum()
    }

    pub fn check_sequence(&self, tokens: &[u32]) -> Result<(), String> {
        if tokens.is_empty() {
            return Err("empty sequence".into());
        }
        if tokens.len() > self.max_len {
            return Err(format!("length {} exceeds {}", tokens.len(), self.max_len));
        }
        if let Some(t) = tokens.iter().find(|t| **t as usize >= self.vocab) {
            return Err(format!("token {t} outside vocabulary of {}", self.vocab));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreferenceRecord {
    pub sample_id: String,
    pub prompt: String,
    pub bucket: usize,
    pub y_w: Vec<u32>,
    pub y_l: Vec<u32>,
    #[serde(default)]
    pub kind: Option<PerturbKind>,
    #[serde(default)]
    pub t_score: Option<f64>,
}

impl PreferenceRecord {
    pub fn new(policy: &ToyPolicy, sample_id: impl Into<String>, prompt: impl Into<String>, y_w: Vec<u32>, y_l: Vec<u32>) -> Self {
        let prompt = prompt.into();
        Self {
            sample_id: sample_id.into(),
            bucket: policy.bucket_of(&prompt),
            prompt,
            y_w,
            y_l,
            kind: None,
            t_score: None,
        }
    }

    pub fn validate(&self, policy: &ToyPolicy) -> Result<(), String> {
        if self.bucket >= policy.buckets() {
            return Err(format!("bucket {} outside {}", self.bucket, policy.buckets()));
        }
        policy.check_sequence(&self.y_w).map_err(|e| format!("y_w: {e}"))?;
        policy.check_sequence(&self.y_l).map_err(|e| format!("y_l: {e}"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimpoConfig {
    pub beta: f64,
    pub gamma: f64,
    pub learning_rate: f64,
    /// Number of passes over the dataset.
    pub epochs: usize,
    /// Records per update; `None` means full batch.
    pub batch_size: Option<usize>,
    pub vocab: usize,
    pub max_len: usize,
    pub buckets: usize,
}

impl SimpoConfig {
    /// Hyperparameters of the original 7B-scale setup.
    pub fn full_scale() -> Self {
        Self {
            beta: 10.0,
            gamma: 5.0,
            learning_rate: 4e-5,
            epochs: 1,
            batch_size: None,
            vocab: 512,
            max_len: 32,
            buckets: 64,
        }
    }

    /// Desk-scale preset for the toy policy.
    pub fn toy() -> Self {
        Self {
            learning_rate: 1e-2,
            epochs: 200,
            ..Self::full_scale()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad("beta must be positive");
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be non-negative");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be non-negative");
        }
        if self.batch_size == Some(0) {
            return bad("batch_size must be positive");
        }
        if self.vocab == 0 || self.max_len == 0 || self.buckets == 0 {
            return bad("policy dimensions must be positive");
        }
        Ok(())
    }

    pub fn policy(&self) -> ToyPolicy {
        ToyPolicy::new(self.vocab, self.max_len, self.buckets)
    }
}

impl Default for SimpoConfig {
    fn default() -> Self {
        Self::full_scale()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossEval {
    pub loss: f64,
    /// Mean of `β(r_w − r_l)` over the batch.
    pub mean_margin: f64,
    pub grad: Vec<f64>,
}

/// Mean SimPO loss over `batch` and its exact gradient with respect to
/// every logit.
pub fn simpo_loss(policy: &ToyPolicy, batch: &[PreferenceRecord], cfg: &SimpoConfig) -> Result<LossEval, TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    for (index, rec) in batch.iter().enumerate() {
        rec.validate(policy)
            .map_err(|reason| TrainError::InvalidRecord { index, reason })?;
    }
    let v = policy.vocab;
    let rows = policy.max_len * policy.buckets;
    let mut cache: Vec<Option<Vec<f64>>> = vec![None; rows];
    let mut row_lp = |row: usize| -> Vec<f64> {
        cache[row].get_or_insert_with(|| policy.log_softmax_row(row)).clone()
    };

    let n = batch.len() as f64;
    let mut loss = 0.0;
    let mut margin = 0.0;
    // d(loss)/d(log-softmax entry) is collected per row as (coefficient
    // total, one-hot contributions); the softmax part is applied at the end.
    let mut coef = vec![0.0; rows];
    let mut grad = vec![0.0; policy.theta.len()];
    for rec in batch {
        let r = |seq: &[u32], row_lp: &mut dyn FnMut(usize) -> Vec<f64>| -> f64 {
            let lp: f64 = seq
                .iter()
                .enumerate()
                .map(|(t, &y)| row_lp(policy.row(rec.bucket, t))[y as usize])
                .sum();
            lp / seq.len() as f64
        };
        let r_w = r(&rec.y_w, &mut row_lp);
        let r_l = r(&rec.y_l, &mut row_lp);
        let z = cfg.beta * (r_w - r_l) - cfg.gamma;
        loss += softplus(-z) / n;
        margin += cfg.beta * (r_w - r_l) / n;
        let dz = -sigmoid(-z) / n;
        for (seq, sign) in [(&rec.y_w, 1.0), (&rec.y_l, -1.0)] {
            let c = dz * sign * cfg.beta / seq.len() as f64;
            for (t, &y) in seq.iter().enumerate() {
                let row = policy.row(rec.bucket, t);
                coef[row] += c;
                grad[row * v + y as usize] += c;
            }
        }
    }
    for (row, &c) in coef.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let lp = row_lp(row);
        for (g, l) in grad[row * v..(row + 1) * v].iter_mut().zip(&lp) {
            *g -= c * l.exp();
        }
    }
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(TrainError::NonFiniteLoss { step: None });
    }
    Ok(LossEval {
        loss,
        mean_margin: margin,
        grad,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub step: usize,
    pub loss: f64,
    pub mean_margin: f64,
}

/// Plain gradient descent with a constant learning rate.
///
/// The trace has one point per update, measured before the update, plus a
/// final point after the last update.
pub fn train(
    mut policy: ToyPolicy,
    dataset: &[PreferenceRecord],
    cfg: &SimpoConfig,
) -> Result<(ToyPolicy, Vec<TracePoint>), TrainError> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let batch = cfg.batch_size.unwrap_or(dataset.len()).min(dataset.len());
    let mut trace = Vec::new();
    let mut step = 0;
    let stamp = |e: TrainError, step: usize| match e {
        TrainError::NonFiniteLoss { .. } => TrainError::NonFiniteLoss { step: Some(step) },
        other => other,
    };
    for _ in 0..cfg.epochs {
        for chunk in dataset.chunks(batch) {
            let eval = simpo_loss(&policy, chunk, cfg).map_err(|e| stamp(e, step))?;
            trace.push(TracePoint {
                step,
                loss: eval.loss,
                mean_margin: eval.mean_margin,
            });
            for (p, g) in policy.theta.iter_mut().zip(&eval.grad) {
                *p -= cfg.learning_rate * g;
            }
            step += 1;
        }
    }
    let last = simpo_loss(&policy, dataset, cfg).map_err(|e| stamp(e, step))?;
    trace.push(TracePoint {
        step,
        loss: last.loss,
        mean_margin: last.mean_margin,
    });
    Ok((policy, trace))
}

pub fn write_trace_csv(trace: &[TracePoint], path: &Path) -> io::Result<()> {
    let mut out = String::from("step,loss,mean_margin\n");
    for p in trace {
        out.push_str(&format!("{},{},{}\n", p.step, p.loss, p.mean_margin));
    }
    fs::write(path, out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    #[serde(rename = "V")]
    pub vocab: usize,
    #[serde(rename = "L")]
    pub max_len: usize,
    #[serde(rename = "B")]
    pub buckets: usize,
    pub step: usize,
}

fn header_path(bin: &Path) -> PathBuf {
    bin.with_extension("json")
}

/// Writes the logits as little-endian f64 to `bin` and the header next to it
/// with a `.json` extension.
pub fn save_checkpoint(policy: &ToyPolicy, step: usize, bin: &Path) -> Result<(), TrainError> {
    let header = CheckpointHeader {
        vocab: policy.vocab,
        max_len: policy.max_len,
        buckets: policy.buckets,
        step,
    };
    let mut bytes = Vec::with_capacity(policy.theta.len() * 8);
    for x in &policy.theta {
        bytes.write_all(&x.to_le_bytes())?;
    }
    fs::write(bin, bytes)?;
    let json = serde_json::to_string(&header).map_err(|e| TrainError::Checkpoint(e.to_string()))?;
    fs::write(header_path(bin), json)?;
    Ok(())
}

pub fn load_checkpoint(bin: &Path) -> Result<(ToyPolicy, CheckpointHeader), TrainError> {
    let header: CheckpointHeader = serde_json::from_slice(&fs::read(header_path(bin))?)
        .map_err(|e| TrainError::Checkpoint(e.to_string()))?;
    let bytes = fs::read(bin)?;
    let mut policy = ToyPolicy::new(header.vocab, header.max_len, header.buckets);
    if bytes.len() != policy.theta.len() * 8 {
        return Err(TrainError::Checkpoint(format!(
            "expected {} bytes, found {}",
            policy.theta.len() * 8,
            bytes.len()
        )));
    }
    for (x, chunk) in policy.theta.iter_mut().zip(bytes.chunks_exact(8)) {
        *x = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
    }
    Ok((policy, header))
}
