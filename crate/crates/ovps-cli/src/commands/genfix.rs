//! Generate a synthetic dataset: concept sets, per-scene tensors, ground
//! truth (both raw masks and panoptic files), and a ready-to-run config.

use super::{ensure_dir, write_json};
use crate::config::{EvalConfig, LoadedConfig, RunConfig};
use crate::error::{CliError, CliResult};
use crate::npy;
use ovps_core::fixtures::generate_dataset;
use ovps_core::DenseTensor;
use std::path::Path;

pub struct GenfixArgs<'a> {
    pub config: &'a Path,
    pub out: &'a Path,
    pub seed: Option<u64>,
}

pub fn run(args: &GenfixArgs<'_>) -> CliResult<()> {
    let loaded = LoadedConfig::from_file(args.config)?;
    let fixture = loaded.config.fixture.clone().ok_or_else(|| {
        CliError::validation("genfix needs a `fixture` section in the config".into())
    })?;
    let mut spec = fixture.spec;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let dataset = generate_dataset(&spec, fixture.scenes, fixture.holdout_fraction)
        .map_err(|e| match e {
            ovps_core::Error::InvalidSpec { .. } => CliError::validation(e.to_string()),
            other => CliError::data(other.to_string()),
        })?;

    let concepts_dir = args.out.join("concepts");
    let scenes_dir = args.out.join("scenes");
    let gt_dir = args.out.join("gt");
    ensure_dir(&concepts_dir)?;
    ensure_dir(&scenes_dir)?;
    ensure_dir(&gt_dir)?;

    crate::config::store_concept_set(&concepts_dir.join("training.json"), &dataset.training)?;
    crate::config::store_concept_set(&concepts_dir.join("predicting.json"), &dataset.predicting)?;

    for (i, scene) in dataset.scenes.iter().enumerate() {
        let id = format!("scene_{i:04}");
        let dir = scenes_dir.join(&id);
        ensure_dir(&dir)?;
        npy::store_tensor(&dir.join("features.npy"), &scene.features)?;
        npy::store_tensor(&dir.join("mask_logits.npy"), &scene.mask_logits)?;
        npy::store_tensor(&dir.join("query_embeds.npy"), &scene.query_embeddings)?;
        npy::store_tensor(
            &dir.join("iou_scores.npy"),
            &DenseTensor::from_vec(scene.iou_scores.clone())?,
        )?;
        npy::store_tensor(&dir.join("gt_masks.npy"), scene.gt.masks())?;
        let labels: Vec<i32> = scene.gt_labels.iter().map(|&l| l as i32).collect();
        npy::store_i32(&dir.join("gt_labels.npy"), &[labels.len()], &labels)?;

        let gt_pan = scene.gt_panoptic(loaded.config.inference.merge_stuff);
        crate::pipeline::store_panoptic(&gt_dir, &id, &gt_pan)?;
    }

    // a config that runs classify/eval/losses directly on this dataset
    let run_config = RunConfig {
        training_concepts: Some("concepts/training.json".into()),
        predicting_concepts: Some("concepts/predicting.json".into()),
        scenes_dir: Some("scenes".into()),
        eval: Some(EvalConfig {
            pred_dir: "pred".into(),
            gt_dir: "gt".into(),
        }),
        fixture: Some(crate::config::FixtureConfig {
            spec,
            scenes: fixture.scenes,
            holdout_fraction: fixture.holdout_fraction,
        }),
        modulation: loaded.config.modulation,
        inference: loaded.config.inference,
        losses: loaded.config.losses,
        tree: loaded.config.tree.clone(),
        positional: None,
        adapter: None,
        cross_attention: None,
    };
    write_json(&args.out.join("config.json"), &run_config)?;
    log::info!(
        "wrote {} scenes to {}",
        dataset.scenes.len(),
        args.out.display()
    );
    Ok(())
}
