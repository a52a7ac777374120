//! Central finite-difference verification of the analytic loss gradients.

use crate::error::{Error, Result};

/// Probe step for central differences.
pub const DEFAULT_STEP: f64 = 1e-5;
/// Relative-error budget; forward/backward asymmetry beyond ten times this
/// flags a non-differentiable probe point.
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

/// Compare an analytic gradient against central finite differences at
/// `point`, returning the maximum relative error
/// `|analytic - numeric| / max(1, |numeric|)` over all coordinates.
///
/// A coordinate whose forward and backward one-sided differences disagree by
/// more than `10 * tolerance` (relative) fails with
/// [`Error::NonDifferentiablePoint`].
pub fn finite_diff_check<F, G>(
    loss: F,
    analytic_grad: G,
    point: &[f64],
    step: f64,
    tolerance: f64,
) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let grad = analytic_grad(point);
    assert_eq!(
        grad.len(),
        point.len(),
        "analytic gradient length must match the probe point"
    );
    let base = loss(point);
    let mut probe = point.to_vec();
    let mut max_rel = 0.0f64;
    for i in 0..point.len() {
        probe[i] = point[i] + step;
        let plus = loss(&probe);
        probe[i] = point[i] - step;
        let minus = loss(&probe);
        probe[i] = point[i];

        let central = (plus - minus) / (2.0 * step);
        let forward = (plus - base) / step;
        let backward = (base - minus) / step;
        let scale = central.abs().max(1.0);
        let asymmetry = (forward - backward).abs() / scale;
        let limit = 10.0 * tolerance;
        if asymmetry > limit {
            return Err(Error::NonDifferentiablePoint {
                index: i,
                asymmetry,
                limit,
            });
        }
        let rel = (grad[i] - central).abs() / scale;
        max_rel = max_rel.max(rel);
    }
    Ok(max_rel)
}

/// Result of one loss gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub loss: &'static str,
    pub max_rel_err: f64,
}

/// Run the finite-difference check for every loss on seeded random probe
/// points; used by tests and the `--gradcheck` command flag.
pub fn check_all_losses(seed: u64, probes: usize) -> Result<Vec<GradCheckReport>> {
    use crate::fixtures::rng::SceneRng;
    use crate::matching as m;
    use crate::tensor::DenseTensor;

    let mut reports: Vec<GradCheckReport> = Vec::new();
    let mut worst = |loss: &'static str, err: f64| {
        match reports.iter_mut().find(|r| r.loss == loss) {
            Some(r) => r.max_rel_err = r.max_rel_err.max(err),
            None => reports.push(GradCheckReport {
                loss,
                max_rel_err: err,
            }),
        }
    };

    for probe in 0..probes {
        let mut rng = SceneRng::seed_from(seed.wrapping_add(probe as u64));

        // dice and bce share a probe layout: probabilities away from the
        // clamp edges against a binary target
        let n = 12;
        let pred: Vec<f64> = (0..n).map(|_| 0.05 + 0.9 * rng.uniform()).collect();
        let gt: Vec<f64> = (0..n)
            .map(|_| if rng.uniform() > 0.5 { 1.0 } else { 0.0 })
            .collect();
        let gt_d = gt.clone();
        let err = finite_diff_check(
            |p| m::dice_loss(p, &gt_d).expect("probe shapes agree"),
            |p| m::dice_loss_grad(p, &gt_d).expect("probe shapes agree"),
            &pred,
            DEFAULT_STEP,
            DEFAULT_TOLERANCE,
        )?;
        worst("dice", err);

        let gt_b = gt.clone();
        let err = finite_diff_check(
            |p| m::bce_loss(p, &gt_b).expect("probe shapes agree"),
            |p| m::bce_loss_grad(p, &gt_b).expect("probe shapes agree"),
            &pred,
            DEFAULT_STEP,
            DEFAULT_TOLERANCE,
        )?;
        worst("bce", err);

        // classification loss over a softmax row, target away from zero
        let row: Vec<f64> = (0..6).map(|_| 0.1 + rng.uniform()).collect();
        let total: f64 = row.iter().sum();
        let row: Vec<f64> = row.into_iter().map(|v| v / total).collect();
        let target = (rng.next_u64() % 6) as usize;
        let err = finite_diff_check(
            |p| m::ce_classification_loss(p, target).expect("target in range"),
            |p| m::ce_classification_loss_grad(p, target).expect("target in range"),
            &row,
            DEFAULT_STEP,
            DEFAULT_TOLERANCE,
        )?;
        worst("ce", err);

        // IoU regression scores
        let scores: Vec<f64> = (0..5).map(|_| rng.uniform()).collect();
        let targets: Vec<f64> = (0..5).map(|_| rng.uniform()).collect();
        let err = finite_diff_check(
            |p| m::iou_l2_loss(p, &targets).expect("probe shapes agree"),
            |p| m::iou_l2_loss_grad(p, &targets).expect("probe shapes agree"),
            &scores,
            DEFAULT_STEP,
            DEFAULT_TOLERANCE,
        )?;
        worst("iou_l2", err);

        // image-level matching loss on J x D embeddings
        let (j, c, d) = (3, 5, 4);
        let emb: Vec<f64> = (0..j * d).map(|_| rng.normal()).collect();
        let text_rows: Vec<Vec<f64>> = (0..c).map(|_| rng.unit_vector(d)).collect();
        let text = DenseTensor::from_rows(&text_rows).expect("text rows");
        let annotated = vec![0usize, 2, 4];
        let tau = 0.25;
        let text_m = text.clone();
        let ann = annotated.clone();
        let err = finite_diff_check(
            move |p| {
                let e = DenseTensor::new(vec![j, d], p.to_vec()).expect("probe tensor");
                m::match_loss(&e, &text_m, &ann, tau).expect("probe is valid")
            },
            {
                let text = text.clone();
                let ann = annotated.clone();
                move |p| {
                    let e = DenseTensor::new(vec![j, d], p.to_vec()).expect("probe tensor");
                    m::match_loss_grad(&e, &text, &ann, tau).expect("probe is valid")
                }
            },
            &emb,
            DEFAULT_STEP,
            DEFAULT_TOLERANCE,
        )?;
        worst("match", err);

        // mask tiling loss on K x H x W logits
        let (k, h, w) = (2, 4, 4);
        let logits: Vec<f64> = (0..k * h * w).map(|_| rng.normal() * 2.0).collect();
        let err = finite_diff_check(
            |p| {
                let t = DenseTensor::new(vec![k, h, w], p.to_vec()).expect("probe tensor");
                m::sum_loss(&t).expect("rank is valid")
            },
            |p| {
                let t = DenseTensor::new(vec![k, h, w], p.to_vec()).expect("probe tensor");
                m::sum_loss_grad(&t).expect("rank is valid")
            },
            &logits,
            DEFAULT_STEP,
            DEFAULT_TOLERANCE,
        )?;
        worst("sum", err);
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_oracle() {
        let err = finite_diff_check(
            |x| x[0] * x[0],
            |x| vec![2.0 * x[0]],
            &[3.0],
            DEFAULT_STEP,
            DEFAULT_TOLERANCE,
        )
        .unwrap();
        assert!(err < 1e-8);
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let err = finite_diff_check(
            |x| x[0] * x[0],
            |_| vec![5.0],
            &[3.0],
            DEFAULT_STEP,
            DEFAULT_TOLERANCE,
        )
        .unwrap();
        assert!(err > 0.1);
    }

    #[test]
    fn kink_is_flagged_non_differentiable() {
        let res = finite_diff_check(
            |x| x[0].abs(),
            |_| vec![0.0],
            &[0.0],
            DEFAULT_STEP,
            DEFAULT_TOLERANCE,
        );
        assert!(matches!(
            res,
            Err(crate::error::Error::NonDifferentiablePoint { .. })
        ));
    }

    #[test]
    fn all_losses_pass_on_seeded_probes() {
        let reports = check_all_losses(7, 10).unwrap();
        assert_eq!(reports.len(), 6);
        for report in reports {
            assert!(
                report.max_rel_err < DEFAULT_TOLERANCE,
                "{} gradient off by {}",
                report.loss,
                report.max_rel_err
            );
        }
    }
}
