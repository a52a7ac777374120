//! Embedding fusion, cosine logits against the predicting concept set, and
//! per-category logit debiasing.
//!
//! Query embeddings carry the in-domain signal, pooled visual embeddings
//! carry the open-vocabulary signal; the fusion weight `alpha * (1 - s)`
//! grows as the predicting concept set drifts away from the training one.
//! Debiasing then divides each category's logit by its best training-set
//! similarity raised to `beta`, lifting categories far from the training
//! vocabulary.

use crate::error::{Error, Result};
use crate::tensor::{cosine_similarity_matrix, l2_normalize, tempered_softmax_slice, DenseTensor};

/// Tunable coefficients of the modulation stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulationParams {
    /// Fusion gain on the pooled visual embeddings.
    pub alpha: f64,
    /// Debiasing exponent on the per-category similarity divisor.
    pub beta: f64,
    /// Softmax temperature; cosine logits are small, so the default 0.01
    /// amplifies them a hundredfold.
    pub tau: f64,
    /// Clamp floor for the debiasing divisor.
    pub epsilon_sim: f64,
}

impl Default for ModulationParams {
    fn default() -> Self {
        Self {
            alpha: 10.0,
            beta: 0.5,
            tau: 0.01,
            epsilon_sim: 1e-3,
        }
    }
}

impl ModulationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::InvalidTemperature { tau: self.tau });
        }
        if self.alpha < 0.0 || !self.alpha.is_finite() {
            return Err(Error::InvalidSpec {
                reason: format!("alpha must be nonnegative, got {}", self.alpha),
            });
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::InvalidSpec {
                reason: format!("beta must be in [0, 1], got {}", self.beta),
            });
        }
        if !(self.epsilon_sim > 0.0) {
            return Err(Error::InvalidSpec {
                reason: format!("epsilon_sim must be positive, got {}", self.epsilon_sim),
            });
        }
        Ok(())
    }
}

/// Per-image embedding pipeline state: inputs, the fused embeddings and the
/// classification outputs, populated stage by stage.
#[derive(Debug, Clone)]
pub struct EmbeddingBundle {
    pub query: DenseTensor,
    pub clip: DenseTensor,
    pub modulated: DenseTensor,
    pub logits: DenseTensor,
    pub debiased_logits: DenseTensor,
    pub probs: DenseTensor,
    pub labels: Vec<usize>,
}

/// Fuse query and pooled visual embeddings: `query + alpha * (1 - s) * clip`,
/// each row l2-normalized afterward.
///
/// With identical concept sets (`s = 1`) or `alpha = 0` the coefficient
/// vanishes and the result is exactly the normalized query embeddings.
pub fn fuse_embeddings(
    query: &DenseTensor,
    clip: &DenseTensor,
    domain_similarity: f64,
    alpha: f64,
) -> Result<DenseTensor> {
    query.expect_rank(2, "fuse query")?;
    clip.expect_rank(2, "fuse clip")?;
    if query.shape() != clip.shape() {
        return Err(Error::ShapeMismatch {
            context: "fuse_embeddings".into(),
            expected: format!("{:?}", query.shape()),
            actual: format!("{:?}", clip.shape()),
        });
    }
    let coeff = alpha * (1.0 - domain_similarity);
    let fused: Vec<f64> = query
        .data()
        .iter()
        .zip(clip.data())
        .map(|(&q, &c)| q + coeff * c)
        .collect();
    l2_normalize(&DenseTensor::new(query.shape().to_vec(), fused)?)
}

/// Cosine logits of the modulated embeddings against the predicting text
/// embeddings. Raw cosines are stored; temperature enters only at softmax.
pub fn compute_logits(
    modulated: &DenseTensor,
    predicting_embeddings: &DenseTensor,
) -> Result<DenseTensor> {
    cosine_similarity_matrix(modulated, predicting_embeddings)
}

/// Divide each logit column by that category's best training-set similarity
/// raised to `beta`, clamped below by `epsilon_sim`.
pub fn debias_logits(
    logits: &DenseTensor,
    per_category_max: &[f64],
    beta: f64,
    epsilon_sim: f64,
) -> Result<DenseTensor> {
    logits.expect_rank(2, "debias_logits")?;
    let (k, m) = (logits.shape()[0], logits.shape()[1]);
    if per_category_max.len() != m {
        return Err(Error::ShapeMismatch {
            context: "debias_logits".into(),
            expected: format!("{m} per-category maxima"),
            actual: format!("{}", per_category_max.len()),
        });
    }
    let divisors: Vec<f64> = per_category_max
        .iter()
        .map(|&s| s.max(epsilon_sim).powf(beta))
        .collect();
    let mut out = Vec::with_capacity(k * m);
    for i in 0..k {
        for (j, &div) in divisors.iter().enumerate() {
            out.push(logits.at2(i, j) / div);
        }
    }
    DenseTensor::new(vec![k, m], out)
}

/// Row-wise tempered softmax plus argmax labels, ties broken by the lowest
/// category index.
pub fn classify(debiased: &DenseTensor, tau: f64) -> Result<(DenseTensor, Vec<usize>)> {
    debiased.expect_rank(2, "classify")?;
    let (k, m) = (debiased.shape()[0], debiased.shape()[1]);
    let mut probs = Vec::with_capacity(k * m);
    let mut labels = Vec::with_capacity(k);
    for i in 0..k {
        let row = tempered_softmax_slice(debiased.row(i), tau)?;
        let mut best = 0;
        for (j, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = j;
            }
        }
        labels.push(best);
        probs.extend(row);
    }
    Ok((DenseTensor::new(vec![k, m], probs)?, labels))
}

/// Run fusion, logits, debiasing and classification in one call.
pub fn modulate(
    query: &DenseTensor,
    clip: &DenseTensor,
    predicting_embeddings: &DenseTensor,
    per_category_max: &[f64],
    domain_similarity: f64,
    params: &ModulationParams,
) -> Result<EmbeddingBundle> {
    params.validate()?;
    let modulated = fuse_embeddings(query, clip, domain_similarity, params.alpha)?;
    let logits = compute_logits(&modulated, predicting_embeddings)?;
    let debiased_logits = debias_logits(&logits, per_category_max, params.beta, params.epsilon_sim)?;
    let (probs, labels) = classify(&debiased_logits, params.tau)?;
    Ok(EmbeddingBundle {
        query: query.clone(),
        clip: clip.clone(),
        modulated,
        logits,
        debiased_logits,
        probs,
        labels,
    })
}
