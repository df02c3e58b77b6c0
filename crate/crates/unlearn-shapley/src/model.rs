//! Small-model numerics: MLP forward pass, softmax cross-entropy with
//! analytic gradients, logit KL divergence, accuracy, and parameter
//! distances. Everything here is a pure function over immutable inputs in
//! 64-bit floats.

use rand::Rng;

use crate::data::Dataset;
use crate::error::{Result, ValuationError};
use crate::rng::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

/// Architecture descriptor for the MLP family (empty hidden = linear model).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub num_classes: usize,
    pub activation: Activation,
}

impl ModelSpec {
    pub fn new(
        input_dim: usize,
        hidden_dims: Vec<usize>,
        num_classes: usize,
        activation: Activation,
    ) -> Result<Self> {
        if input_dim == 0 || hidden_dims.iter().any(|&h| h == 0) {
            return Err(ValuationError::Invalid("all dims must be >= 1".into()));
        }
        if num_classes < 2 {
            return Err(ValuationError::Invalid("num_classes must be >= 2".into()));
        }
        Ok(Self { input_dim, hidden_dims, num_classes, activation })
    }

    /// (fan_in, fan_out) per layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input_dim];
        dims.extend_from_slice(&self.hidden_dims);
        dims.push(self.num_classes);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|&(m, o)| m * o + o).sum()
    }

    /// Stable digest of the architecture, used to bind parameter vectors.
    pub fn digest(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64; // FNV-1a
        let mut feed = |v: u64| {
            h ^= v;
            h = h.wrapping_mul(0x1000_0000_01b3);
        };
        feed(self.input_dim as u64);
        feed(self.hidden_dims.len() as u64);
        for &d in &self.hidden_dims {
            feed(d as u64);
        }
        feed(self.num_classes as u64);
        feed(match self.activation {
            Activation::Relu => 1,
            Activation::Tanh => 2,
        });
        h
    }
}

/// Flat parameter vector bound to a ModelSpec by digest.
///
/// Layout per layer: weights row-major `[out x in]`, then biases `[out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    spec_hash: u64,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, spec: &ModelSpec) -> Result<Self> {
        if values.len() != spec.param_count() {
            return Err(ValuationError::Contract(format!(
                "parameter vector length {} does not match spec ({} expected)",
                values.len(),
                spec.param_count()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(ValuationError::NonFinite("parameter vector".into()));
        }
        Ok(Self { values, spec_hash: spec.digest() })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_bound(&self, spec: &ModelSpec) -> Result<()> {
        if self.spec_hash != spec.digest() {
            return Err(ValuationError::Contract(
                "parameter vector is not bound to this spec".into(),
            ));
        }
        Ok(())
    }

    /// Same binding, new values. Length must be unchanged.
    pub(crate) fn with_values(&self, values: Vec<f64>) -> ParamVector {
        debug_assert_eq!(values.len(), self.values.len());
        ParamVector { values, spec_hash: self.spec_hash }
    }

    pub fn assert_finite(&self) -> Result<()> {
        if self.values.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(ValuationError::NonFinite("parameter vector".into()))
        }
    }
}

/// A mini-batch of rows matching a spec's input dimension.
#[derive(Debug, Clone)]
pub struct Batch {
    features: Vec<f64>,
    labels: Vec<usize>,
    num_features: usize,
}

impl Batch {
    pub fn new(features: Vec<f64>, labels: Vec<usize>, num_features: usize) -> Result<Self> {
        if labels.is_empty() || features.len() != labels.len() * num_features {
            return Err(ValuationError::Contract("malformed batch".into()));
        }
        Ok(Self { features, labels, num_features })
    }

    pub fn from_dataset(dataset: &Dataset, indices: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * dataset.num_features());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(dataset.row(i));
            labels.push(dataset.label(i));
        }
        Batch::new(features, labels, dataset.num_features())
    }

    pub fn full_dataset(dataset: &Dataset) -> Result<Self> {
        let all: Vec<usize> = (0..dataset.len()).collect();
        Batch::from_dataset(dataset, &all)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.num_features..(i + 1) * self.num_features]
    }

    fn check(&self, spec: &ModelSpec) -> Result<()> {
        if self.num_features != spec.input_dim {
            return Err(ValuationError::Contract(format!(
                "batch has {} features, spec expects {}",
                self.num_features, spec.input_dim
            )));
        }
        Ok(())
    }
}

/// Deterministic initialization: weights uniform in
/// `(-1/sqrt(fan_in), 1/sqrt(fan_in))`, biases zero.
pub fn init_params(spec: &ModelSpec, seed: u64) -> ParamVector {
    let mut rng = rng_for(seed, 0x696e_6974); // "init"
    let mut values = Vec::with_capacity(spec.param_count());
    for (fan_in, fan_out) in spec.layer_dims() {
        let bound = 1.0 / (fan_in as f64).sqrt();
        for _ in 0..fan_in * fan_out {
            values.push(rng.gen_range(-bound..bound));
        }
        values.extend(std::iter::repeat(0.0).take(fan_out));
    }
    ParamVector { values, spec_hash: spec.digest() }
}

fn activate(x: f64, a: Activation) -> f64 {
    match a {
        Activation::Relu => x.max(0.0),
        Activation::Tanh => x.tanh(),
    }
}

/// Derivative of the activation expressed through its output value.
fn activate_deriv(y: f64, a: Activation) -> f64 {
    match a {
        Activation::Relu => {
            if y > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Activation::Tanh => 1.0 - y * y,
    }
}

/// Per-layer activations kept for the backward pass. `layers[0]` is the
/// input batch; the last entry holds the logits.
struct ForwardCache {
    layers: Vec<Vec<f64>>,
    batch_size: usize,
}

fn forward_cached(params: &ParamVector, spec: &ModelSpec, batch: &Batch) -> Result<ForwardCache> {
    params.check_bound(spec)?;
    batch.check(spec)?;
    let b = batch.len();
    let dims = spec.layer_dims();
    let mut layers = Vec::with_capacity(dims.len() + 1);
    layers.push(batch.features.clone());
    let mut offset = 0;
    for (l, &(m, o)) in dims.iter().enumerate() {
        let weights = &params.values[offset..offset + m * o];
        let biases = &params.values[offset + m * o..offset + m * o + o];
        offset += m * o + o;
        let input = layers.last().unwrap();
        let mut out = vec![0.0; b * o];
        let last_layer = l == dims.len() - 1;
        for r in 0..b {
            let x = &input[r * m..(r + 1) * m];
            for j in 0..o {
                let w = &weights[j * m..(j + 1) * m];
                let mut z = biases[j];
                for i in 0..m {
                    z += w[i] * x[i];
                }
                out[r * o + j] = if last_layer { z } else { activate(z, spec.activation) };
            }
        }
        layers.push(out);
    }
    Ok(ForwardCache { layers, batch_size: b })
}

/// Logits for a batch, `[b x num_classes]` row-major.
pub fn forward_logits(params: &ParamVector, spec: &ModelSpec, batch: &Batch) -> Result<Vec<f64>> {
    let cache = forward_cached(params, spec, batch)?;
    Ok(cache.layers.into_iter().last().unwrap())
}

/// Backpropagate a gradient w.r.t. the logits into a parameter gradient.
fn backward(
    params: &ParamVector,
    spec: &ModelSpec,
    cache: &ForwardCache,
    dlogits: &[f64],
) -> Vec<f64> {
    let dims = spec.layer_dims();
    let b = cache.batch_size;
    let mut grad = vec![0.0; params.len()];
    // Offsets of each layer's parameter block.
    let mut offsets = Vec::with_capacity(dims.len());
    let mut acc = 0;
    for &(m, o) in &dims {
        offsets.push(acc);
        acc += m * o + o;
    }

    let mut delta = dlogits.to_vec(); // dL/d(pre-activation) of current layer
    for l in (0..dims.len()).rev() {
        let (m, o) = dims[l];
        let offset = offsets[l];
        let weights = &params.values[offset..offset + m * o];
        let input = &cache.layers[l];
        let (gw, gb) = grad[offset..offset + m * o + o].split_at_mut(m * o);
        for r in 0..b {
            let x = &input[r * m..(r + 1) * m];
            let dz = &delta[r * o..(r + 1) * o];
            for j in 0..o {
                let g = dz[j];
                if g == 0.0 {
                    continue;
                }
                let row = &mut gw[j * m..(j + 1) * m];
                for i in 0..m {
                    row[i] += g * x[i];
                }
                gb[j] += g;
            }
        }
        if l > 0 {
            // Propagate to layer l-1 through its activation; layers[l] holds
            // that layer's post-activation output.
            let mut next_delta = vec![0.0; b * m];
            for r in 0..b {
                let dz = &delta[r * o..(r + 1) * o];
                let y = &cache.layers[l][r * m..(r + 1) * m];
                let nd = &mut next_delta[r * m..(r + 1) * m];
                for j in 0..o {
                    let g = dz[j];
                    if g == 0.0 {
                        continue;
                    }
                    let w = &weights[j * m..(j + 1) * m];
                    for i in 0..m {
                        nd[i] += g * w[i];
                    }
                }
                for i in 0..m {
                    nd[i] *= activate_deriv(y[i], spec.activation);
                }
            }
            delta = next_delta;
        }
    }
    grad
}

/// Row-wise log-softmax, numerically stabilized.
fn log_softmax_row(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln() + max;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = z - lse;
    }
}

/// Mean softmax cross-entropy over the batch and its analytic gradient.
pub fn cross_entropy_and_grad(
    params: &ParamVector,
    spec: &ModelSpec,
    batch: &Batch,
) -> Result<(f64, ParamVector)> {
    let cache = forward_cached(params, spec, batch)?;
    let logits = cache.layers.last().unwrap();
    let b = batch.len();
    let c = spec.num_classes;
    let mut loss = 0.0;
    let mut dlogits = vec![0.0; b * c];
    let mut logp = vec![0.0; c];
    for r in 0..b {
        let row = &logits[r * c..(r + 1) * c];
        log_softmax_row(row, &mut logp);
        let label = batch.labels[r];
        loss -= logp[label];
        let d = &mut dlogits[r * c..(r + 1) * c];
        for j in 0..c {
            d[j] = (logp[j].exp() - f64::from(u8::from(j == label))) / b as f64;
        }
    }
    loss /= b as f64;
    let grad = backward(params, spec, &cache, &dlogits);
    Ok((loss, ParamVector { values: grad, spec_hash: params.spec_hash }))
}

/// Mean over rows of `KL(softmax(p_row) || softmax(q_row))`.
pub fn kl_divergence_logits(p_logits: &[f64], q_logits: &[f64], num_classes: usize) -> Result<f64> {
    if p_logits.len() != q_logits.len() || p_logits.len() % num_classes != 0 || p_logits.is_empty()
    {
        return Err(ValuationError::Contract("logit matrices must share shape".into()));
    }
    let rows = p_logits.len() / num_classes;
    let mut lp = vec![0.0; num_classes];
    let mut lq = vec![0.0; num_classes];
    let mut total = 0.0;
    for r in 0..rows {
        log_softmax_row(&p_logits[r * num_classes..(r + 1) * num_classes], &mut lp);
        log_softmax_row(&q_logits[r * num_classes..(r + 1) * num_classes], &mut lq);
        let mut row_kl = 0.0;
        for j in 0..num_classes {
            row_kl += lp[j].exp() * (lp[j] - lq[j]);
        }
        total += row_kl.max(0.0); // guard tiny negative rounding
    }
    Ok(total / rows as f64)
}

/// KL gradient w.r.t. the live model's parameters, with the reference
/// model's logits treated as constants.
pub fn kl_grad(
    params: &ParamVector,
    spec: &ModelSpec,
    batch: &Batch,
    ref_logits: &[f64],
) -> Result<(f64, ParamVector)> {
    let cache = forward_cached(params, spec, batch)?;
    let logits = cache.layers.last().unwrap();
    if ref_logits.len() != logits.len() {
        return Err(ValuationError::Contract("reference logits shape mismatch".into()));
    }
    let b = batch.len();
    let c = spec.num_classes;
    let mut lp = vec![0.0; c];
    let mut lq = vec![0.0; c];
    let mut dlogits = vec![0.0; b * c];
    let mut total = 0.0;
    for r in 0..b {
        log_softmax_row(&logits[r * c..(r + 1) * c], &mut lp);
        log_softmax_row(&ref_logits[r * c..(r + 1) * c], &mut lq);
        let mut row_kl = 0.0;
        for j in 0..c {
            row_kl += lp[j].exp() * (lp[j] - lq[j]);
        }
        total += row_kl;
        // d KL_row / d logit_j = p_j * ((lp_j - lq_j) - KL_row)
        let d = &mut dlogits[r * c..(r + 1) * c];
        for j in 0..c {
            d[j] = lp[j].exp() * ((lp[j] - lq[j]) - row_kl) / b as f64;
        }
    }
    let grad = backward(params, spec, &cache, &dlogits);
    Ok((total / b as f64, ParamVector { values: grad, spec_hash: params.spec_hash }))
}

/// Fraction of points whose argmax logit equals the label; argmax ties
/// break toward the lowest class index.
pub fn evaluate_accuracy(params: &ParamVector, spec: &ModelSpec, dataset: &Dataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(ValuationError::Contract("accuracy over empty dataset".into()));
    }
    let batch = Batch::full_dataset(dataset)?;
    let logits = forward_logits(params, spec, &batch)?;
    let c = spec.num_classes;
    let mut correct = 0usize;
    for r in 0..dataset.len() {
        let row = &logits[r * c..(r + 1) * c];
        let mut best = 0;
        for j in 1..c {
            if row[j] > row[best] {
                best = j;
            }
        }
        if best == dataset.label(r) {
            correct += 1;
        }
    }
    Ok(correct as f64 / dataset.len() as f64)
}

/// Sum of squared component differences.
pub fn param_l2_sq(a: &ParamVector, b: &ParamVector) -> Result<f64> {
    if a.len() != b.len() {
        return Err(ValuationError::Contract("parameter vectors differ in length".into()));
    }
    Ok(a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y) * (x - y))
        .sum())
}

/// Elementwise axpy: `out = a + scale * b`, rebinding checked.
pub fn param_axpy(a: &ParamVector, scale: f64, b: &ParamVector) -> Result<ParamVector> {
    if a.len() != b.len() {
        return Err(ValuationError::Contract("parameter vectors differ in length".into()));
    }
    let values = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| x + scale * y)
        .collect();
    Ok(ParamVector { values, spec_hash: a.spec_hash })
}

#[cfg(test)]
pub(crate) fn param_from_values(values: Vec<f64>, spec: &ModelSpec) -> ParamVector {
    ParamVector::new(values, spec).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn small_spec() -> ModelSpec {
        ModelSpec::new(3, vec![4], 2, Activation::Tanh).unwrap()
    }

    #[test]
    fn param_count_matches_hand_count() {
        // 3*4+4 + 4*2+2 = 26
        assert_eq!(small_spec().param_count(), 26);
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let spec = small_spec();
        let a = init_params(&spec, 7);
        let b = init_params(&spec, 7);
        assert_eq!(a, b);
        assert_ne!(a, init_params(&spec, 8));
        // output-layer bias block is the tail of the vector
        let tail = &a.values()[a.len() - 2..];
        assert!(tail.iter().all(|&v| v == 0.0));
        // hidden bias block
        let hidden_bias = &a.values()[12..16];
        assert!(hidden_bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_params_give_zero_logits_and_ln_c_loss() {
        let spec = small_spec();
        let params = param_from_values(vec![0.0; spec.param_count()], &spec);
        let batch = Batch::new(vec![1.0, -2.0, 0.5], vec![1], 3).unwrap();
        let logits = forward_logits(&params, &spec, &batch).unwrap();
        assert!(logits.iter().all(|&z| z == 0.0));
        let (loss, _) = cross_entropy_and_grad(&params, &spec, &batch).unwrap();
        assert_abs_diff_eq!(loss, (2.0f64).ln(), epsilon = 1e-12);
    }

    #[test]
    fn linear_model_selects_weight_column() {
        // no hidden layer; one-hot input picks out a weight column plus bias
        let spec = ModelSpec::new(3, vec![], 2, Activation::Relu).unwrap();
        #[rustfmt::skip]
        let values = vec![
            1.0, 2.0, 3.0, // class 0 weights
            4.0, 5.0, 6.0, // class 1 weights
            0.5, -0.5,     // biases
        ];
        let params = param_from_values(values, &spec);
        let batch = Batch::new(vec![0.0, 1.0, 0.0], vec![0], 3).unwrap();
        let logits = forward_logits(&params, &spec, &batch).unwrap();
        assert_abs_diff_eq!(logits[0], 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(logits[1], 4.5, epsilon = 1e-12);
    }

    /// Independent naive per-sample forward used as oracle.
    fn naive_forward(params: &ParamVector, spec: &ModelSpec, x: &[f64]) -> Vec<f64> {
        let mut current = x.to_vec();
        let mut offset = 0;
        let dims = spec.layer_dims();
        for (l, (m, o)) in dims.iter().copied().enumerate() {
            let mut next = vec![0.0; o];
            for j in 0..o {
                let mut z = params.values()[offset + m * o + j];
                for i in 0..m {
                    z += params.values()[offset + j * m + i] * current[i];
                }
                next[j] = if l == dims.len() - 1 { z } else { activate(z, spec.activation) };
            }
            offset += m * o + o;
            current = next;
        }
        current
    }

    #[test]
    fn forward_matches_naive_oracle() {
        let spec = ModelSpec::new(4, vec![5, 3], 3, Activation::Relu).unwrap();
        let mut rng = rng_for(42, 0);
        let params = param_from_values(
            (0..spec.param_count()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            &spec,
        );
        let features: Vec<f64> = (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let batch = Batch::new(features.clone(), vec![0, 2], 4).unwrap();
        let logits = forward_logits(&params, &spec, &batch).unwrap();
        for r in 0..2 {
            let oracle = naive_forward(&params, &spec, &features[r * 4..(r + 1) * 4]);
            for j in 0..3 {
                assert_abs_diff_eq!(logits[r * 3 + j], oracle[j], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn duplicated_rows_leave_loss_and_grad_unchanged() {
        let spec = small_spec();
        let params = init_params(&spec, 3);
        let batch = Batch::new(vec![0.3, -1.0, 2.0, 1.0, 0.1, -0.4], vec![0, 1], 3).unwrap();
        let doubled = Batch::new(
            vec![0.3, -1.0, 2.0, 1.0, 0.1, -0.4, 0.3, -1.0, 2.0, 1.0, 0.1, -0.4],
            vec![0, 1, 0, 1],
            3,
        )
        .unwrap();
        let (l1, g1) = cross_entropy_and_grad(&params, &spec, &batch).unwrap();
        let (l2, g2) = cross_entropy_and_grad(&params, &spec, &doubled).unwrap();
        assert_abs_diff_eq!(l1, l2, epsilon = 1e-12);
        for (a, b) in g1.values().iter().zip(g2.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    /// Central finite differences of the mean cross-entropy loss.
    fn finite_diff_grad(spec: &ModelSpec, params: &ParamVector, batch: &Batch) -> Vec<f64> {
        let step = 1e-5;
        let mut grad = vec![0.0; params.len()];
        for i in 0..params.len() {
            let mut plus = params.values().to_vec();
            plus[i] += step;
            let mut minus = params.values().to_vec();
            minus[i] -= step;
            let lp = cross_entropy_and_grad(&param_from_values(plus, spec), spec, batch)
                .unwrap()
                .0;
            let lm = cross_entropy_and_grad(&param_from_values(minus, spec), spec, batch)
                .unwrap()
                .0;
            grad[i] = (lp - lm) / (2.0 * step);
        }
        grad
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for (seed, act) in [(1u64, Activation::Tanh), (2, Activation::Relu)] {
            let spec = ModelSpec::new(2, vec![3], 2, act).unwrap();
            let mut rng = rng_for(seed, 99);
            let params = param_from_values(
                (0..spec.param_count()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                &spec,
            );
            let batch = Batch::new(
                (0..6).map(|_| rng.gen_range(-1.5..1.5)).collect(),
                vec![0, 1, 1],
                2,
            )
            .unwrap();
            let (_, analytic) = cross_entropy_and_grad(&params, &spec, &batch).unwrap();
            let numeric = finite_diff_grad(&spec, &params, &batch);
            let max_num = numeric.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
            let max_err = analytic
                .values()
                .iter()
                .zip(&numeric)
                .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            assert!(max_err / (max_num + 1e-12) < 1e-4, "rel err {}", max_err / max_num);
        }
    }

    #[test]
    fn kl_basics() {
        // identical logits
        let p = vec![1.0, -2.0, 0.5, 0.1, 3.0, -1.0];
        assert_abs_diff_eq!(kl_divergence_logits(&p, &p, 3).unwrap(), 0.0, epsilon = 1e-12);
        // near-degenerate vs uniform: KL -> ln 2
        let sharp = vec![20.0, -20.0];
        let uniform = vec![0.0, 0.0];
        assert_abs_diff_eq!(
            kl_divergence_logits(&sharp, &uniform, 2).unwrap(),
            (2.0f64).ln(),
            epsilon = 1e-4
        );
    }

    #[test]
    fn kl_matches_direct_summation() {
        let mut rng = rng_for(5, 5);
        let p: Vec<f64> = (0..12).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let q: Vec<f64> = (0..12).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let got = kl_divergence_logits(&p, &q, 4).unwrap();
        // direct summation oracle
        let mut expected = 0.0;
        for r in 0..3 {
            let pr = &p[r * 4..(r + 1) * 4];
            let qr = &q[r * 4..(r + 1) * 4];
            let ps: Vec<f64> = {
                let z: f64 = pr.iter().map(|v| v.exp()).sum();
                pr.iter().map(|v| v.exp() / z).collect()
            };
            let qs: Vec<f64> = {
                let z: f64 = qr.iter().map(|v| v.exp()).sum();
                qr.iter().map(|v| v.exp() / z).collect()
            };
            expected += ps
                .iter()
                .zip(&qs)
                .map(|(a, b)| a * (a.ln() - b.ln()))
                .sum::<f64>();
        }
        expected /= 3.0;
        assert_abs_diff_eq!(got, expected, epsilon = 1e-10);
        assert!(got >= 0.0);
    }

    #[test]
    fn softmax_shift_invariance() {
        let spec = small_spec();
        let params = init_params(&spec, 1);
        let batch = Batch::new(vec![1.0, 0.5, -0.5], vec![1], 3).unwrap();
        let (loss, _) = cross_entropy_and_grad(&params, &spec, &batch).unwrap();
        // shifting every logit by a constant: emulate by shifting output biases
        let mut shifted = params.values().to_vec();
        let tail = shifted.len() - 2;
        shifted[tail] += 17.0;
        shifted[tail + 1] += 17.0;
        let shifted = param_from_values(shifted, &spec);
        let (loss2, _) = cross_entropy_and_grad(&shifted, &spec, &batch).unwrap();
        assert_abs_diff_eq!(loss, loss2, epsilon = 1e-9);
        let a = forward_logits(&params, &spec, &batch).unwrap();
        let b = forward_logits(&shifted, &spec, &batch).unwrap();
        assert_abs_diff_eq!(kl_divergence_logits(&a, &b, 2).unwrap(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn accuracy_counts_match_hand_loop() {
        let spec = ModelSpec::new(2, vec![], 2, Activation::Relu).unwrap();
        // identity-ish weights: logit_c = x_c
        let params = param_from_values(vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0], &spec);
        let data = Dataset::new(
            vec![2.0, 0.0, 0.0, 2.0, 2.0, 0.0, 1.0, 1.0],
            vec![0, 1, 1, 0],
            vec![0, 1, 2, 3],
            2,
            2,
        )
        .unwrap();
        // point 0: argmax 0 == label ok; point 1: argmax 1 ok; point 2: argmax 0 != 1;
        // point 3: tie -> class 0 == label ok
        assert_abs_diff_eq!(evaluate_accuracy(&params, &spec, &data).unwrap(), 0.75);
    }

    #[test]
    fn l2_sq_arithmetic() {
        let spec = ModelSpec::new(1, vec![], 2, Activation::Relu).unwrap();
        let a = param_from_values(vec![1.0, 2.0, 0.0, 0.0], &spec);
        let b = param_from_values(vec![0.0, 0.0, 0.0, 0.0], &spec);
        assert_abs_diff_eq!(param_l2_sq(&a, &b).unwrap(), 5.0);
        assert_abs_diff_eq!(param_l2_sq(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch_is_contract_error() {
        let spec = small_spec();
        let params = init_params(&spec, 0);
        let batch = Batch::new(vec![1.0, 2.0], vec![0], 2).unwrap();
        assert!(matches!(
            forward_logits(&params, &spec, &batch),
            Err(ValuationError::Contract(_))
        ));
    }
}
