//! Training-side mathematics: bipartite target assignment costs, mask and
//! classification losses, IoU-head regression targets, and the decoupled
//! supervision losses trained from image-level labels.
//!
//! Analytic gradients are provided for every loss so they can be verified
//! against central finite differences; see [`gradcheck`].

mod hungarian;
pub mod gradcheck;

pub use hungarian::{hungarian, hungarian_raw, Assignment};

use crate::error::{Error, Result};
use crate::tensor::{cosine_similarity_matrix, sigmoid, tempered_softmax_slice, DenseTensor};

/// Dice smoothing constant.
pub const DICE_SMOOTHING: f64 = 1.0;
/// Probability clamp for the binary cross-entropy loss.
pub const BCE_CLAMP: f64 = 1e-7;
/// Probability floor inside the classification loss logarithm.
pub const CE_FLOOR: f64 = 1e-12;

/// Ground-truth masks with their category ids.
#[derive(Debug, Clone)]
pub struct GroundTruthSet {
    masks: DenseTensor,
    category_ids: Vec<usize>,
}

impl GroundTruthSet {
    /// Build a ground-truth set of binary masks (G x H x W, values in
    /// {0, 1}) and category ids below `num_categories`.
    pub fn new(masks: DenseTensor, category_ids: Vec<usize>, num_categories: usize) -> Result<Self> {
        masks.expect_rank(3, "ground-truth masks")?;
        if masks.shape()[0] != category_ids.len() {
            return Err(Error::LengthMismatch {
                context: "ground-truth masks vs category ids".into(),
                left: masks.shape()[0],
                right: category_ids.len(),
            });
        }
        if let Some(index) = masks.data().iter().position(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidShape {
                shape: masks.shape().to_vec(),
                reason: format!("mask value at flat index {index} is not binary"),
            });
        }
        for &id in &category_ids {
            if id >= num_categories {
                return Err(Error::IndexOutOfRange {
                    index: id,
                    len: num_categories,
                });
            }
        }
        Ok(Self {
            masks,
            category_ids,
        })
    }

    pub fn len(&self) -> usize {
        self.category_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.category_ids.is_empty()
    }

    pub fn masks(&self) -> &DenseTensor {
        &self.masks
    }

    pub fn mask(&self, g: usize) -> &[f64] {
        self.masks.plane(g)
    }

    pub fn category_ids(&self) -> &[usize] {
        &self.category_ids
    }
}

/// Weights for the assignment costs and the decoupled supervision losses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub w_ce: f64,
    pub w_dice: f64,
    pub w_bce: f64,
    pub w_match: f64,
    pub w_sum: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w_ce: 2.0,
            w_dice: 5.0,
            w_bce: 5.0,
            w_match: 1.0,
            w_sum: 0.4,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.w_ce, self.w_dice, self.w_bce, self.w_match, self.w_sum];
        if all.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::InvalidSpec {
                reason: format!("loss weights must be nonnegative and finite: {self:?}"),
            });
        }
        Ok(())
    }
}

fn expect_same_len(a: &[f64], b: &[f64], context: &str) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            context: context.into(),
            expected: format!("{}", a.len()),
            actual: format!("{}", b.len()),
        });
    }
    Ok(())
}

/// Dice loss between predicted mask probabilities and a binary target:
/// `1 - (2 * overlap + s) / (mass(pred) + mass(gt) + s)` with smoothing
/// `s = 1`.
pub fn dice_loss(pred_probs: &[f64], gt: &[f64]) -> Result<f64> {
    expect_same_len(pred_probs, gt, "dice_loss")?;
    let mut overlap = 0.0;
    let mut mass = 0.0;
    for (&p, &g) in pred_probs.iter().zip(gt) {
        overlap += p * g;
        mass += p + g;
    }
    Ok(1.0 - (2.0 * overlap + DICE_SMOOTHING) / (mass + DICE_SMOOTHING))
}

/// Gradient of [`dice_loss`] with respect to the predicted probabilities.
pub fn dice_loss_grad(pred_probs: &[f64], gt: &[f64]) -> Result<Vec<f64>> {
    expect_same_len(pred_probs, gt, "dice_loss_grad")?;
    let mut overlap = 0.0;
    let mut mass = 0.0;
    for (&p, &g) in pred_probs.iter().zip(gt) {
        overlap += p * g;
        mass += p + g;
    }
    let denom = mass + DICE_SMOOTHING;
    let numer = 2.0 * overlap + DICE_SMOOTHING;
    Ok(gt
        .iter()
        .map(|&g| -(2.0 * g * denom - numer) / (denom * denom))
        .collect())
}

/// Mean binary cross-entropy between predicted probabilities (clamped to
/// `[1e-7, 1 - 1e-7]`) and targets.
pub fn bce_loss(pred_probs: &[f64], gt: &[f64]) -> Result<f64> {
    expect_same_len(pred_probs, gt, "bce_loss")?;
    let n = pred_probs.len() as f64;
    let mut total = 0.0;
    for (&p, &g) in pred_probs.iter().zip(gt) {
        let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        total += -(g * p.ln() + (1.0 - g) * (1.0 - p).ln());
    }
    Ok(total / n)
}

/// Gradient of [`bce_loss`]; zero at clamped coordinates.
pub fn bce_loss_grad(pred_probs: &[f64], gt: &[f64]) -> Result<Vec<f64>> {
    expect_same_len(pred_probs, gt, "bce_loss_grad")?;
    let n = pred_probs.len() as f64;
    Ok(pred_probs
        .iter()
        .zip(gt)
        .map(|(&p, &g)| {
            if p < BCE_CLAMP || p > 1.0 - BCE_CLAMP {
                0.0
            } else {
                (-g / p + (1.0 - g) / (1.0 - p)) / n
            }
        })
        .collect())
}

/// Cross-entropy of a probability row against a target category index.
pub fn ce_classification_loss(probs_row: &[f64], target: usize) -> Result<f64> {
    if target >= probs_row.len() {
        return Err(Error::IndexOutOfRange {
            index: target,
            len: probs_row.len(),
        });
    }
    // the max with 0 turns -0.0 (and rounding excursions of probabilities
    // a hair above 1) into a clean zero
    Ok((-probs_row[target].max(CE_FLOOR).ln()).max(0.0))
}

/// Gradient of [`ce_classification_loss`] with respect to the probability
/// row; zero below the clamp floor.
pub fn ce_classification_loss_grad(probs_row: &[f64], target: usize) -> Result<Vec<f64>> {
    if target >= probs_row.len() {
        return Err(Error::IndexOutOfRange {
            index: target,
            len: probs_row.len(),
        });
    }
    let mut grad = vec![0.0; probs_row.len()];
    if probs_row[target] > CE_FLOOR {
        grad[target] = -1.0 / probs_row[target];
    }
    Ok(grad)
}

/// Pairwise assignment costs between K predictions and G ground truths:
/// `w_ce * (-prob of the gt category) + w_dice * dice + w_bce * bce`.
pub fn assignment_cost_matrix(
    pred_probs: &DenseTensor,
    pred_masks: &DenseTensor,
    gts: &GroundTruthSet,
    weights: &LossWeights,
) -> Result<DenseTensor> {
    pred_probs.expect_rank(2, "assignment probs")?;
    pred_masks.expect_rank(3, "assignment masks")?;
    let k = pred_probs.shape()[0];
    if pred_masks.shape()[0] != k {
        return Err(Error::ShapeMismatch {
            context: "assignment_cost_matrix".into(),
            expected: format!("{k} prediction masks"),
            actual: format!("{}", pred_masks.shape()[0]),
        });
    }
    if gts.masks().shape()[1..] != pred_masks.shape()[1..] {
        return Err(Error::ShapeMismatch {
            context: "assignment_cost_matrix".into(),
            expected: format!("gt masks {:?}", &pred_masks.shape()[1..]),
            actual: format!("{:?}", &gts.masks().shape()[1..]),
        });
    }
    let g = gts.len();
    let mut cost = Vec::with_capacity(k * g);
    for ki in 0..k {
        let mask_k = pred_masks.plane(ki);
        let probs_k = pred_probs.row(ki);
        for gi in 0..g {
            let cat = gts.category_ids()[gi];
            if cat >= probs_k.len() {
                return Err(Error::IndexOutOfRange {
                    index: cat,
                    len: probs_k.len(),
                });
            }
            let cls = -probs_k[cat];
            let dice = dice_loss(mask_k, gts.mask(gi))?;
            let bce = bce_loss(mask_k, gts.mask(gi))?;
            cost.push(weights.w_ce * cls + weights.w_dice * dice + weights.w_bce * bce);
        }
    }
    DenseTensor::new(vec![k, g], cost)
}

/// IoU regression targets: the binary-mask IoU with the matched ground
/// truth, and 0 for unmatched or duplicated proposals.
pub fn iou_targets(
    assignment: &Assignment,
    pred_masks_binary: &DenseTensor,
    gts: &GroundTruthSet,
) -> Result<Vec<f64>> {
    pred_masks_binary.expect_rank(3, "iou_targets masks")?;
    if pred_masks_binary.shape()[1..] != gts.masks().shape()[1..] {
        return Err(Error::ShapeMismatch {
            context: "iou_targets".into(),
            expected: format!("{:?}", &gts.masks().shape()[1..]),
            actual: format!("{:?}", &pred_masks_binary.shape()[1..]),
        });
    }
    let k = pred_masks_binary.shape()[0];
    let mut targets = vec![0.0; k];
    for &(pred, gt) in assignment.pairs() {
        targets[pred] = crate::metrics::mask_iou_slices(pred_masks_binary.plane(pred), gts.mask(gt));
    }
    Ok(targets)
}

/// Mean squared error between predicted IoU scores and their targets.
pub fn iou_l2_loss(pred_scores: &[f64], targets: &[f64]) -> Result<f64> {
    if pred_scores.len() != targets.len() {
        return Err(Error::LengthMismatch {
            context: "iou_l2_loss".into(),
            left: pred_scores.len(),
            right: targets.len(),
        });
    }
    let k = pred_scores.len() as f64;
    Ok(pred_scores
        .iter()
        .zip(targets)
        .map(|(&p, &t)| (p - t) * (p - t))
        .sum::<f64>()
        / k)
}

/// Gradient of [`iou_l2_loss`] with respect to the predicted scores.
pub fn iou_l2_loss_grad(pred_scores: &[f64], targets: &[f64]) -> Result<Vec<f64>> {
    if pred_scores.len() != targets.len() {
        return Err(Error::LengthMismatch {
            context: "iou_l2_loss_grad".into(),
            left: pred_scores.len(),
            right: targets.len(),
        });
    }
    let k = pred_scores.len() as f64;
    Ok(pred_scores
        .iter()
        .zip(targets)
        .map(|(&p, &t)| 2.0 * (p - t) / k)
        .collect())
}

/// Indices of predictions whose IoU score clears the validity threshold.
pub fn select_valid_predictions(iou_scores: &[f64], threshold: f64) -> Vec<usize> {
    iou_scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s >= threshold)
        .map(|(i, _)| i)
        .collect()
}

/// Image-level matching loss over J valid prediction embeddings and C
/// category text embeddings.
///
/// Each prediction's similarity row is softmax-normalized across categories
/// with temperature `tau`; for every annotated category the best prediction
/// is taken, and the loss is one minus their mean. A category covered by
/// several equally good predictions is not penalized, and unannotated
/// predictions are ignored.
pub fn match_loss(
    embeddings: &DenseTensor,
    text: &DenseTensor,
    annotated: &[usize],
    tau: f64,
) -> Result<f64> {
    let delta = match_delta(embeddings, text, annotated, tau)?;
    let c = text.shape()[1.min(text.rank() - 1)];
    let _ = c;
    let c_annotated = annotated.len() as f64;
    let mut total = 0.0;
    for &a in annotated {
        let mut best = f64::NEG_INFINITY;
        for j in 0..delta.shape()[0] {
            best = best.max(delta.at2(j, a));
        }
        total += best;
    }
    Ok(1.0 - total / c_annotated)
}

/// Row-softmaxed similarity matrix used by [`match_loss`], exposed for the
/// gradient path.
fn match_delta(
    embeddings: &DenseTensor,
    text: &DenseTensor,
    annotated: &[usize],
    tau: f64,
) -> Result<DenseTensor> {
    embeddings.expect_rank(2, "match_loss embeddings")?;
    text.expect_rank(2, "match_loss text")?;
    if annotated.is_empty() {
        return Err(Error::EmptyAnnotation);
    }
    let c = text.shape()[0];
    for &a in annotated {
        if a >= c {
            return Err(Error::IndexOutOfRange { index: a, len: c });
        }
    }
    let sims = cosine_similarity_matrix(embeddings, text)?;
    let (j, _) = (sims.shape()[0], sims.shape()[1]);
    let mut rows = Vec::with_capacity(sims.len());
    for ji in 0..j {
        rows.extend(tempered_softmax_slice(sims.row(ji), tau)?);
    }
    DenseTensor::new(vec![j, c], rows)
}

/// Gradient of [`match_loss`] with respect to the (unnormalized) prediction
/// embeddings, flowing through row normalization, cosine similarity, the
/// category softmax and the per-category max.
pub fn match_loss_grad(
    embeddings: &DenseTensor,
    text: &DenseTensor,
    annotated: &[usize],
    tau: f64,
) -> Result<Vec<f64>> {
    let delta = match_delta(embeddings, text, annotated, tau)?;
    let sims = cosine_similarity_matrix(embeddings, text)?;
    let (j, c) = (delta.shape()[0], delta.shape()[1]);
    let d = embeddings.shape()[1];
    let c_annotated = annotated.len() as f64;

    // dL/dS, nonzero only in the argmax rows of annotated columns
    let mut dl_ds = vec![0.0; j * c];
    for &a in annotated {
        let mut best_j = 0;
        for ji in 1..j {
            if delta.at2(ji, a) > delta.at2(best_j, a) {
                best_j = ji;
            }
        }
        let row = delta.row(best_j);
        for ci in 0..c {
            let indicator = if ci == a { 1.0 } else { 0.0 };
            dl_ds[best_j * c + ci] +=
                -(1.0 / c_annotated) * row[a] * (indicator - row[ci]) / tau;
        }
    }

    // chain through cosine similarity of the normalized rows
    let text_hat = crate::tensor::l2_normalize(text)?;
    let emb_hat = crate::tensor::l2_normalize(embeddings)?;
    let mut grad = vec![0.0; j * d];
    for ji in 0..j {
        let raw = embeddings.row(ji);
        let norm: f64 = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        let e_hat = emb_hat.row(ji);
        for ci in 0..c {
            let coeff = dl_ds[ji * c + ci];
            if coeff == 0.0 {
                continue;
            }
            let s = sims.at2(ji, ci);
            let t_hat = text_hat.row(ci);
            for di in 0..d {
                grad[ji * d + di] += coeff * (t_hat[di] - s * e_hat[di]) / norm;
            }
        }
    }
    Ok(grad)
}

/// Norm convention for [`sum_loss`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SumLossNorm {
    /// Mean of squared per-pixel residuals; resolution-independent, so a
    /// fixed loss weight means the same thing at any image size.
    #[default]
    MeanSquare,
    /// Euclidean norm of the residual image.
    Root,
}

/// Self-supervision on mask layout: the sigmoid masks should tile the image,
/// so each pixel's summed probability is pulled toward one.
pub fn sum_loss(mask_logits: &DenseTensor) -> Result<f64> {
    sum_loss_with_norm(mask_logits, SumLossNorm::MeanSquare)
}

/// [`sum_loss`] with an explicit norm convention.
pub fn sum_loss_with_norm(mask_logits: &DenseTensor, norm: SumLossNorm) -> Result<f64> {
    mask_logits.expect_rank(3, "sum_loss")?;
    let (k, h, w) = (
        mask_logits.shape()[0],
        mask_logits.shape()[1],
        mask_logits.shape()[2],
    );
    let pixels = h * w;
    let mut total = 0.0;
    for p in 0..pixels {
        let mut coverage = 0.0;
        for ki in 0..k {
            coverage += sigmoid(mask_logits.data()[ki * pixels + p]);
        }
        let residual = 1.0 - coverage;
        total += residual * residual;
    }
    Ok(match norm {
        SumLossNorm::MeanSquare => total / pixels as f64,
        SumLossNorm::Root => total.sqrt(),
    })
}

/// Gradient of [`sum_loss`] with respect to the mask logits.
pub fn sum_loss_grad(mask_logits: &DenseTensor) -> Result<Vec<f64>> {
    sum_loss_grad_with_norm(mask_logits, SumLossNorm::MeanSquare)
}

/// Gradient of [`sum_loss_with_norm`] with respect to the mask logits.
pub fn sum_loss_grad_with_norm(mask_logits: &DenseTensor, norm: SumLossNorm) -> Result<Vec<f64>> {
    mask_logits.expect_rank(3, "sum_loss_grad")?;
    let (k, h, w) = (
        mask_logits.shape()[0],
        mask_logits.shape()[1],
        mask_logits.shape()[2],
    );
    let pixels = h * w;
    let mut residuals = vec![0.0; pixels];
    for (p, r) in residuals.iter_mut().enumerate() {
        let mut coverage = 0.0;
        for ki in 0..k {
            coverage += sigmoid(mask_logits.data()[ki * pixels + p]);
        }
        *r = 1.0 - coverage;
    }
    let scale = match norm {
        SumLossNorm::MeanSquare => 2.0 / pixels as f64,
        SumLossNorm::Root => {
            let total: f64 = residuals.iter().map(|r| r * r).sum();
            let root = total.sqrt();
            if root == 0.0 {
                0.0
            } else {
                1.0 / root
            }
        }
    };
    let mut grad = vec![0.0; k * pixels];
    for ki in 0..k {
        for p in 0..pixels {
            let s = sigmoid(mask_logits.data()[ki * pixels + p]);
            grad[ki * pixels + p] = -scale * residuals[p] * s * (1.0 - s);
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::rng::SceneRng;

    fn mask3(k: usize, h: usize, w: usize, data: Vec<f64>) -> DenseTensor {
        DenseTensor::new(vec![k, h, w], data).unwrap()
    }

    #[test]
    fn dice_hand_values() {
        let ones = vec![1.0; 4];
        let zeros = vec![0.0; 4];
        assert!((dice_loss(&ones, &ones).unwrap() - 0.0).abs() < 1e-12);
        assert!((dice_loss(&ones, &zeros).unwrap() - 0.8).abs() < 1e-12);
        assert!((dice_loss(&[1.0, 1.0], &[1.0, 0.0]).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn bce_hand_values() {
        let half = vec![0.5; 4];
        let gt = vec![1.0, 0.0, 1.0, 0.0];
        assert!((bce_loss(&half, &gt).unwrap() - 2.0f64.ln()).abs() < 1e-12);
        assert!(bce_loss(&gt, &gt).unwrap() < 1e-5);
        assert!((bce_loss(&[0.75], &[1.0]).unwrap() + 0.75f64.ln()).abs() < 1e-12);
        assert!((bce_loss(&[0.75], &[1.0]).unwrap() - 0.2877).abs() < 1e-4);
    }

    #[test]
    fn losses_symmetric_under_complement() {
        let mut rng = SceneRng::seed_from(2);
        for _ in 0..20 {
            let pred: Vec<f64> = (0..16).map(|_| rng.uniform()).collect();
            let gt: Vec<f64> = (0..16).map(|_| if rng.uniform() > 0.5 { 1.0 } else { 0.0 }).collect();
            let pred_c: Vec<f64> = pred.iter().map(|p| 1.0 - p).collect();
            let gt_c: Vec<f64> = gt.iter().map(|g| 1.0 - g).collect();
            let b1 = bce_loss(&pred, &gt).unwrap();
            let b2 = bce_loss(&pred_c, &gt_c).unwrap();
            assert!((b1 - b2).abs() < 1e-12);

            // balanced construction: gt = 1 - pred keeps the dice population
            // complement-symmetric
            let d1 = dice_loss(&pred, &pred_c).unwrap();
            let d2 = dice_loss(&pred_c, &pred).unwrap();
            assert!((d1 - d2).abs() < 1e-6);
        }
    }

    #[test]
    fn ce_hand_values() {
        assert!(ce_classification_loss(&[1.0, 0.0, 0.0], 0).unwrap() < 1e-9);
        let quarter = vec![0.25; 4];
        assert!((ce_classification_loss(&quarter, 2).unwrap() - 4.0f64.ln()).abs() < 1e-12);
        assert!(matches!(
            ce_classification_loss(&[0.5, 0.5, 0.0], 5),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn cost_matrix_hand_values() {
        let probs = DenseTensor::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let mask = mask3(1, 2, 2, vec![1.0, 1.0, 0.0, 0.0]);
        let gts = GroundTruthSet::new(mask.clone(), vec![0], 2).unwrap();
        let weights = LossWeights {
            w_ce: 1.0,
            w_dice: 1.0,
            w_bce: 1.0,
            ..Default::default()
        };
        let cost = assignment_cost_matrix(&probs, &mask, &gts, &weights).unwrap();
        // perfect mask and perfect class: -1 + 0 + ~0, the bce clamp keeps it
        // a hair above -1
        assert!((cost.at2(0, 0) + 1.0).abs() < 1e-3);

        let zeroed = LossWeights {
            w_ce: 0.0,
            w_dice: 0.0,
            w_bce: 0.0,
            ..Default::default()
        };
        let cost = assignment_cost_matrix(&probs, &mask, &gts, &zeroed).unwrap();
        assert_eq!(cost.data(), &[0.0]);
    }

    #[test]
    fn cost_matrix_orders_complement_last() {
        // two candidate gts: one equals the prediction, one is its complement
        // with zero class probability; the complement must cost more
        let probs = DenseTensor::from_rows(&[vec![0.9, 0.0]]).unwrap();
        let pred = mask3(1, 2, 2, vec![1.0, 1.0, 0.0, 0.0]);
        let gt_masks = mask3(2, 2, 2, vec![1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
        let gts = GroundTruthSet::new(gt_masks, vec![0, 1], 2).unwrap();
        let cost = assignment_cost_matrix(&probs, &pred, &gts, &LossWeights::default()).unwrap();
        assert!(cost.at2(0, 1) > cost.at2(0, 0));
    }

    #[test]
    fn iou_targets_matched_and_unmatched() {
        let pred = mask3(2, 2, 2, vec![1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
        let gts = GroundTruthSet::new(
            mask3(1, 2, 2, vec![1.0, 1.0, 0.0, 0.0]),
            vec![0],
            1,
        )
        .unwrap();
        let assignment = Assignment::new(vec![(0, 0)], vec![1]);
        let targets = iou_targets(&assignment, &pred, &gts).unwrap();
        assert_eq!(targets[0], 1.0);
        assert_eq!(targets[1], 0.0);
    }

    #[test]
    fn iou_targets_partial_overlap() {
        // gt has 4 pixels; pred covers 2 of them plus 2 extra -> 2/6
        let pred = mask3(1, 2, 4, vec![0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0]);
        let gts = GroundTruthSet::new(
            mask3(1, 2, 4, vec![1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]),
            vec![0],
            1,
        )
        .unwrap();
        let assignment = Assignment::new(vec![(0, 0)], vec![]);
        let targets = iou_targets(&assignment, &pred, &gts).unwrap();
        assert!((targets[0] - 2.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn iou_l2_hand_values() {
        assert_eq!(iou_l2_loss(&[0.3, 0.8], &[0.3, 0.8]).unwrap(), 0.0);
        assert!((iou_l2_loss(&[0.5], &[1.0]).unwrap() - 0.25).abs() < 1e-12);
        assert!((iou_l2_loss(&[0.0, 1.0], &[1.0, 0.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(
            iou_l2_loss(&[0.1], &[0.1, 0.2]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    fn unit_rows(rows: &[Vec<f64>]) -> DenseTensor {
        crate::tensor::l2_normalize(&DenseTensor::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn match_loss_hand_values() {
        // single prediction, single category: softmax row is [1]
        let e = unit_rows(&[vec![1.0, 0.0]]);
        let t = unit_rows(&[vec![0.0, 1.0]]);
        assert!(match_loss(&e, &t, &[0], 0.01).unwrap().abs() < 1e-12);

        // equal similarities over two categories -> delta 0.5 each
        let e = unit_rows(&[vec![1.0, 1.0]]);
        let t = unit_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!((match_loss(&e, &t, &[0], 0.01).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn match_loss_takes_best_prediction() {
        // two predictions for one annotated category; tau = 1 keeps the
        // softmax values easy to steer
        let t = unit_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let strong = unit_rows(&[vec![1.0, 0.0]]);
        let weak = unit_rows(&[vec![0.0, 1.0]]);
        let both = unit_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let l_strong = match_loss(&strong, &t, &[0], 1.0).unwrap();
        let l_weak = match_loss(&weak, &t, &[0], 1.0).unwrap();
        let l_both = match_loss(&both, &t, &[0], 1.0).unwrap();
        assert!(l_strong < l_weak);
        assert!((l_both - l_strong).abs() < 1e-12);
    }

    #[test]
    fn match_loss_ignores_duplicates() {
        let mut rng = SceneRng::seed_from(9);
        for _ in 0..10 {
            let t = unit_rows(&[rng.unit_vector(4), rng.unit_vector(4), rng.unit_vector(4)]);
            let rows = vec![rng.unit_vector(4), rng.unit_vector(4)];
            let base = unit_rows(&rows);
            let mut dup_rows = rows.clone();
            dup_rows.push(rows[0].clone());
            let dup = unit_rows(&dup_rows);
            let annotated = [0usize, 2];
            let a = match_loss(&base, &t, &annotated, 0.01).unwrap();
            let b = match_loss(&dup, &t, &annotated, 0.01).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn match_loss_rejects_empty_annotation() {
        let e = unit_rows(&[vec![1.0, 0.0]]);
        let t = unit_rows(&[vec![0.0, 1.0]]);
        assert!(matches!(
            match_loss(&e, &t, &[], 0.01),
            Err(Error::EmptyAnnotation)
        ));
    }

    #[test]
    fn sum_loss_hand_values() {
        // two masks at logit 0 cover each pixel with probability 1 exactly
        let exact = mask3(2, 2, 2, vec![0.0; 8]);
        assert!(sum_loss(&exact).unwrap().abs() < 1e-12);

        let single = mask3(1, 2, 2, vec![0.0; 4]);
        assert!((sum_loss(&single).unwrap() - 0.25).abs() < 1e-12);

        let saturated = mask3(1, 2, 2, vec![20.0; 4]);
        assert!(sum_loss(&saturated).unwrap() < 1e-8);
    }

    #[test]
    fn sum_loss_root_variant() {
        let single = mask3(1, 2, 2, vec![0.0; 4]);
        // residual 0.5 at 4 pixels: sqrt(4 * 0.25) = 1
        assert!((sum_loss_with_norm(&single, SumLossNorm::Root).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn losses_are_nonnegative() {
        let mut rng = SceneRng::seed_from(31);
        for _ in 0..50 {
            let pred: Vec<f64> = (0..12).map(|_| rng.uniform()).collect();
            let gt: Vec<f64> = (0..12)
                .map(|_| if rng.uniform() > 0.5 { 1.0 } else { 0.0 })
                .collect();
            assert!(dice_loss(&pred, &gt).unwrap() >= 0.0);
            assert!(bce_loss(&pred, &gt).unwrap() >= 0.0);
            let logits = mask3(2, 2, 3, (0..12).map(|_| rng.normal() * 3.0).collect());
            assert!(sum_loss(&logits).unwrap() >= 0.0);
            let scores: Vec<f64> = (0..4).map(|_| rng.uniform()).collect();
            let targets: Vec<f64> = (0..4).map(|_| rng.uniform()).collect();
            assert!(iou_l2_loss(&scores, &targets).unwrap() >= 0.0);
        }
    }

    #[test]
    fn select_valid_predictions_thresholds() {
        assert_eq!(select_valid_predictions(&[0.9, 0.2, 0.5], 0.5), vec![0, 2]);
        assert!(select_valid_predictions(&[0.1], 0.5).is_empty());
    }
}
