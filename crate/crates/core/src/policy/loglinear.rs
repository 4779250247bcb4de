use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use super::{check_temperature, FeatureVector, PolicyParameters};
use crate::{Error, Result};

pub fn dot(weights: &[f64], features: &FeatureVector) -> f64 {
    features.entries.iter().map(|&(i, v)| weights[i as usize] * v).sum()
}

/// Numerically stable log-softmax.
pub fn log_softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::Domain("softmax over an empty candidate set".into()));
    }
    if let Some(i) = logits.iter().position(|l| !l.is_finite()) {
        return Err(Error::Numeric(format!("logit {i} is not finite ({})", logits[i])));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + libm::log(logits.iter().map(|l| libm::exp(l - max)).sum::<f64>());
    Ok(logits.iter().map(|l| l - lse).collect())
}

fn logits(params: &PolicyParameters, features: &[FeatureVector], temperature: f64) -> Vec<f64> {
    features.iter().map(|f| dot(&params.weights, f) / temperature).collect()
}

/// `log softmax(theta . phi / temperature)` at `chosen`.
pub fn loglinear_logprob(
    params: &PolicyParameters,
    features: &[FeatureVector],
    temperature: f64,
    chosen: usize,
) -> Result<f64> {
    check_temperature(temperature)?;
    if chosen >= features.len() {
        return Err(Error::validation("chosen_index", format!("{chosen} out of {} candidates", features.len())));
    }
    Ok(log_softmax(&logits(params, features, temperature))?[chosen])
}

/// `sum_i p_i phi_i` as a sparse vector.
pub fn expected_features(features: &[FeatureVector], probs: &[f64]) -> BTreeMap<u32, f64> {
    let mut out = BTreeMap::new();
    for (f, &p) in features.iter().zip(probs) {
        for &(i, v) in &f.entries {
            *out.entry(i).or_insert(0.0) += p * v;
        }
    }
    out
}

/// Log-probability at `chosen` and its gradient with respect to the weights,
/// `(phi_chosen - E_pi[phi]) / temperature`.
pub fn loglinear_logprob_grad(
    params: &PolicyParameters,
    features: &[FeatureVector],
    temperature: f64,
    chosen: usize,
) -> Result<(f64, BTreeMap<u32, f64>)> {
    let lp = loglinear_logprob(params, features, temperature, chosen)?;
    let logp = log_softmax(&logits(params, features, temperature))?;
    let probs: Vec<f64> = logp.iter().map(|l| libm::exp(*l)).collect();
    let mut grad = expected_features(features, &probs);
    for v in grad.values_mut() {
        *v = -*v / temperature;
    }
    for &(i, v) in &features[chosen].entries {
        *grad.entry(i).or_insert(0.0) += v / temperature;
    }
    Ok((lp, grad))
}
