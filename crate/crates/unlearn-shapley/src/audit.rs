//! Unlearning-fidelity metrics and the rank statistics used throughout
//! evaluation.

use crate::data::Dataset;
use crate::error::{Result, ValuationError};
use crate::model::{
    cross_entropy_and_grad, evaluate_accuracy, forward_logits, kl_divergence_logits, Batch,
    ModelSpec, ParamVector,
};

/// Knowledge-retention ratio with both the raw and the clipped value.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct KnowledgeRetention {
    pub raw: f64,
    pub clipped: f64,
}

/// Summary of one unlearning audit.
#[derive(Debug, Clone, serde::Serialize)]
pub struct AuditReport {
    pub lkd: f64,
    pub lmse: f64,
    pub kr: KnowledgeRetention,
    pub spc: Option<f64>,
}

/// Mean logit KL divergence between two models over a dataset.
pub fn lkd(
    m_unlearn: &ParamVector,
    m_retrain: &ParamVector,
    spec: &ModelSpec,
    d_remain: &Dataset,
) -> Result<f64> {
    if d_remain.is_empty() {
        return Err(ValuationError::Invalid("empty evaluation set".into()));
    }
    let batch = Batch::full_dataset(d_remain)?;
    let p = forward_logits(m_unlearn, spec, &batch)?;
    let q = forward_logits(m_retrain, spec, &batch)?;
    kl_divergence_logits(&p, &q, spec.num_classes)
}

/// Mean squared difference of raw logits over all points and classes.
pub fn lmse(
    m_unlearn: &ParamVector,
    m_retrain: &ParamVector,
    spec: &ModelSpec,
    d_remain: &Dataset,
) -> Result<f64> {
    if d_remain.is_empty() {
        return Err(ValuationError::Invalid("empty evaluation set".into()));
    }
    let batch = Batch::full_dataset(d_remain)?;
    let p = forward_logits(m_unlearn, spec, &batch)?;
    let q = forward_logits(m_retrain, spec, &batch)?;
    let total: f64 = p.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(total / p.len() as f64)
}

/// Knowledge retention: where the unlearned model's accuracy sits between
/// the random-model floor and the full-model ceiling on `d_eval`.
pub fn kr(
    m_unlearn: &ParamVector,
    m_full: &ParamVector,
    m_random: &ParamVector,
    spec: &ModelSpec,
    d_eval: &Dataset,
) -> Result<KnowledgeRetention> {
    let acc_unlearn = evaluate_accuracy(m_unlearn, spec, d_eval)?;
    let acc_full = evaluate_accuracy(m_full, spec, d_eval)?;
    let acc_random = evaluate_accuracy(m_random, spec, d_eval)?;
    let denom = acc_full - acc_random;
    if denom.abs() < 1e-9 {
        return Err(ValuationError::Invalid(
            "degenerate audit: full and random models perform identically".into(),
        ));
    }
    let raw = (acc_unlearn - acc_random) / denom;
    Ok(KnowledgeRetention { raw, clipped: raw.clamp(0.0, 1.0) })
}

/// Average ranks with tied values receiving the mean of their rank span.
fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's rank correlation: Pearson correlation of average-ranked data.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(ValuationError::Invalid("need two equal-length samples of size >= 2".into()));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(ValuationError::NonFinite("correlation input".into()));
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for i in 0..xs.len() {
        let dx = rx[i] - mx;
        let dy = ry[i] - my;
        cov += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(ValuationError::Invalid("zero rank variance".into()));
    }
    Ok(cov / (vx * vy).sqrt())
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct LossHistogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Per-point cross-entropy losses binned into equal-width bins over
/// `[min, max]`.
pub fn loss_histogram(
    params: &ParamVector,
    spec: &ModelSpec,
    dataset: &Dataset,
    num_bins: usize,
) -> Result<LossHistogram> {
    if num_bins < 2 {
        return Err(ValuationError::Invalid("num_bins must be >= 2".into()));
    }
    if dataset.is_empty() {
        return Err(ValuationError::Invalid("empty dataset".into()));
    }
    let mut losses = Vec::with_capacity(dataset.len());
    for i in 0..dataset.len() {
        let batch = Batch::from_dataset(dataset, &[i])?;
        let (loss, _) = cross_entropy_and_grad(params, spec, &batch)?;
        losses.push(loss);
    }
    let min = losses.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = losses.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = if max > min { (max - min) / num_bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; num_bins];
    for &l in &losses {
        let mut bin = ((l - min) / width) as usize;
        if bin >= num_bins {
            bin = num_bins - 1;
        }
        counts[bin] += 1;
    }
    let bin_edges = (0..=num_bins).map(|b| min + b as f64 * width).collect();
    Ok(LossHistogram { bin_edges, counts })
}
