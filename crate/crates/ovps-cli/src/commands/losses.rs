//! Training-side loss report: Hungarian target assignment, mask and
//! classification losses, IoU regression, and the decoupled supervision
//! terms, with optional finite-difference verification of every gradient.

use super::{write_json, SCHEMA_VERSION};
use crate::config::{LoadedConfig, LossConfig};
use crate::error::{CliError, CliResult};
use crate::pipeline::{
    list_scene_dirs, load_scene, load_scene_ground_truth, run_scene, PipelineContext,
};
use ovps_core::adapter::binarize_masks;
use ovps_core::matching::{
    self, gradcheck, hungarian, GroundTruthSet,
};
use ovps_core::tensor::{pairwise_sum, sigmoid_map};
use ovps_core::DenseTensor;
use serde::Serialize;
use std::path::Path;

pub struct LossesArgs<'a> {
    pub config: &'a Path,
    pub out: &'a Path,
    pub gradcheck: bool,
    pub seed: u64,
}

#[derive(Serialize, Clone, Copy, Default)]
struct LossRecord {
    dice: f64,
    bce: f64,
    ce: f64,
    iou_l2: f64,
    #[serde(rename = "match")]
    match_loss: f64,
    sum: f64,
    weighted_total: f64,
}

#[derive(Serialize)]
struct SceneLosses {
    id: String,
    matched: usize,
    valid: usize,
    losses: LossRecord,
}

#[derive(Serialize)]
struct GradCheckRecord {
    loss: String,
    max_rel_err: f64,
}

#[derive(Serialize)]
struct LossReport<'a> {
    schema: u32,
    config_hash: String,
    weights: &'a LossConfig,
    scenes: Vec<SceneLosses>,
    mean: LossRecord,
    gradcheck: Option<Vec<GradCheckRecord>>,
}

fn weighted_total(cfg: &LossConfig, r: &LossRecord) -> f64 {
    cfg.w_ce * r.ce
        + cfg.w_dice * r.dice
        + cfg.w_bce * r.bce
        + r.iou_l2
        + cfg.w_match * r.match_loss
        + cfg.w_sum * r.sum
}

pub fn run(args: &LossesArgs<'_>) -> CliResult<()> {
    let loaded = LoadedConfig::from_file(args.config)?;
    let ctx = PipelineContext::from_config(&loaded)?;
    // losses are computed against the training vocabulary
    let ctx = ctx.with_training_vocabulary()?;
    let loss_cfg = &loaded.config.losses;
    let weights = loss_cfg.weights();

    let scenes_dir = loaded
        .config
        .scenes_dir
        .as_ref()
        .ok_or_else(|| CliError::validation("config is missing `scenes_dir`".into()))?;
    let scene_dirs = list_scene_dirs(&loaded.resolve(scenes_dir))?;

    let mut records = Vec::with_capacity(scene_dirs.len());
    for (id, dir) in &scene_dirs {
        let inputs = load_scene(id, dir)?;
        let gt = load_scene_ground_truth(id, dir)?;
        let outputs = run_scene(&ctx, &inputs)?;
        let err = |stage: &str, e: ovps_core::Error| {
            CliError::data(format!("scene {id} at stage {stage}: {e}"))
        };

        let gts = GroundTruthSet::new(gt.masks.clone(), gt.labels.clone(), ctx.training.len())
            .map_err(|e| err("ground_truth", e))?;
        let soft_masks = sigmoid_map(&inputs.mask_logits);
        let cost = matching::assignment_cost_matrix(&outputs.bundle.probs, &soft_masks, &gts, &weights)
            .map_err(|e| err("assignment_cost", e))?;
        let assignment = hungarian(&cost).map_err(|e| err("hungarian", e))?;

        let mut dice_terms = Vec::new();
        let mut bce_terms = Vec::new();
        let mut ce_terms = Vec::new();
        for &(pred, gt_idx) in assignment.pairs() {
            let mask = soft_masks.plane(pred);
            let target = gts.mask(gt_idx);
            dice_terms.push(matching::dice_loss(mask, target).map_err(|e| err("dice", e))?);
            bce_terms.push(matching::bce_loss(mask, target).map_err(|e| err("bce", e))?);
            ce_terms.push(
                matching::ce_classification_loss(
                    outputs.bundle.probs.row(pred),
                    gts.category_ids()[gt_idx],
                )
                .map_err(|e| err("ce", e))?,
            );
        }
        let matched = assignment.pairs().len() as f64;
        let mean_of = |terms: &[f64]| {
            if terms.is_empty() {
                0.0
            } else {
                pairwise_sum(terms) / matched
            }
        };

        let binary = binarize_masks(&inputs.mask_logits, loaded.config.inference.mask_bin_threshold)
            .map_err(|e| err("binarize_masks", e))?;
        let iou_targets =
            matching::iou_targets(&assignment, &binary, &gts).map_err(|e| err("iou_targets", e))?;
        let iou_l2 = matching::iou_l2_loss(&inputs.iou_scores, &iou_targets)
            .map_err(|e| err("iou_l2", e))?;

        let valid = matching::select_valid_predictions(
            &inputs.iou_scores,
            loss_cfg.valid_iou_threshold,
        );
        if valid.is_empty() {
            return Err(CliError::data(format!(
                "scene {id}: no predictions clear the validity threshold {}",
                loss_cfg.valid_iou_threshold
            )));
        }
        let d = outputs.bundle.modulated.shape()[1];
        let mut rows = Vec::with_capacity(valid.len() * d);
        for &v in &valid {
            rows.extend_from_slice(outputs.bundle.modulated.row(v));
        }
        let valid_embeddings =
            DenseTensor::new(vec![valid.len(), d], rows).map_err(|e| err("valid_embeddings", e))?;
        let mut annotated: Vec<usize> = gts.category_ids().to_vec();
        annotated.sort_unstable();
        annotated.dedup();
        let match_loss = matching::match_loss(
            &valid_embeddings,
            ctx.training.embeddings(),
            &annotated,
            ctx.modulation.tau,
        )
        .map_err(|e| err("match_loss", e))?;

        let sum = matching::sum_loss_with_norm(&inputs.mask_logits, loss_cfg.sum_norm())
            .map_err(|e| err("sum_loss", e))?;

        let mut losses = LossRecord {
            dice: mean_of(&dice_terms),
            bce: mean_of(&bce_terms),
            ce: mean_of(&ce_terms),
            iou_l2,
            match_loss,
            sum,
            weighted_total: 0.0,
        };
        losses.weighted_total = weighted_total(loss_cfg, &losses);
        records.push(SceneLosses {
            id: id.clone(),
            matched: assignment.pairs().len(),
            valid: valid.len(),
            losses,
        });
    }

    let n = records.len() as f64;
    let collect = |f: fn(&LossRecord) -> f64| -> f64 {
        let terms: Vec<f64> = records.iter().map(|r| f(&r.losses)).collect();
        pairwise_sum(&terms) / n
    };
    let mut mean = LossRecord {
        dice: collect(|r| r.dice),
        bce: collect(|r| r.bce),
        ce: collect(|r| r.ce),
        iou_l2: collect(|r| r.iou_l2),
        match_loss: collect(|r| r.match_loss),
        sum: collect(|r| r.sum),
        weighted_total: 0.0,
    };
    mean.weighted_total = weighted_total(loss_cfg, &mean);

    let gradcheck_records = if args.gradcheck {
        let reports = gradcheck::check_all_losses(args.seed, 100)
            .map_err(|e| CliError::Numerical(e.to_string()))?;
        Some(
            reports
                .iter()
                .map(|r| GradCheckRecord {
                    loss: r.loss.to_string(),
                    max_rel_err: r.max_rel_err,
                })
                .collect::<Vec<_>>(),
        )
    } else {
        None
    };

    super::ensure_dir(args.out)?;
    let failed: Vec<String> = gradcheck_records
        .iter()
        .flatten()
        .filter(|r| r.max_rel_err >= gradcheck::DEFAULT_TOLERANCE)
        .map(|r| format!("{} ({:.3e})", r.loss, r.max_rel_err))
        .collect();
    let report = LossReport {
        schema: SCHEMA_VERSION,
        config_hash: loaded.config_hash(),
        weights: loss_cfg,
        scenes: records,
        mean,
        gradcheck: gradcheck_records,
    };
    write_json(&args.out.join("losses.json"), &report)?;
    if !failed.is_empty() {
        return Err(CliError::Numerical(format!(
            "gradient check exceeded tolerance for: {}",
            failed.join(", ")
        )));
    }
    log::info!("loss report written for {} scenes", report.scenes.len());
    Ok(())
}
