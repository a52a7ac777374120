//! Per-scene decision pipeline and the on-disk layout of scenes and
//! panoptic results.
//!
//! A scene directory holds `features.npy` (H x W x D), `mask_logits.npy`
//! (K x H x W), `query_embeds.npy` (K x D) and `iou_scores.npy` (K), plus
//! `gt_masks.npy` and `gt_labels.npy` when ground truth is available. A
//! panoptic result is `<id>.npy` (i32 segment map) next to `<id>.json`
//! (segment table).

use crate::config::{InferenceConfig, LoadedConfig, PoolingConfig};
use crate::error::{CliError, CliResult};
use crate::json::to_canonical_file_bytes;
use crate::npy;
use ovps_core::adapter::{
    binarize_masks, cross_attend, mask_pool, spatial_project, AdapterWeights,
    CrossAttentionWeights, SpatialFeatureMap,
};
use ovps_core::concepts::{build_similarity_profile, ConceptRole, ConceptSet, SimilarityProfile};
use ovps_core::inference::{
    filter_proposal_indices, panoptic_merge, semantic_merge, PanopticResult, ScoredProposal,
    SegmentInfo,
};
use ovps_core::modulation::{modulate, EmbeddingBundle, ModulationParams};
use ovps_core::tensor::{l2_normalize, sigmoid_map};
use ovps_core::DenseTensor;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Tensors of one scene, as loaded from disk or synthesized.
#[derive(Debug, Clone)]
pub struct SceneInputs {
    pub id: String,
    pub features: DenseTensor,
    pub mask_logits: DenseTensor,
    pub query_embeddings: DenseTensor,
    pub iou_scores: Vec<f64>,
}

/// Ground-truth files of a scene, when present.
#[derive(Debug, Clone)]
pub struct SceneGroundTruth {
    pub masks: DenseTensor,
    pub labels: Vec<usize>,
}

/// Everything shared across scenes of one run.
pub struct PipelineContext {
    pub training: ConceptSet,
    pub predicting: ConceptSet,
    pub profile: SimilarityProfile,
    pub adapter: AdapterWeights,
    pub cross_attention: Option<CrossAttentionWeights>,
    pub positional: Option<DenseTensor>,
    pub modulation: ModulationParams,
    pub inference: InferenceConfig,
}

impl PipelineContext {
    /// Build the run context: load concept sets and optional weight files,
    /// and compute the cross-vocabulary similarity profile once.
    pub fn from_config(loaded: &LoadedConfig) -> CliResult<Self> {
        let config = &loaded.config;
        let training_path = config.training_concepts.as_ref().ok_or_else(|| {
            CliError::validation("config is missing `training_concepts`".into())
        })?;
        let predicting_path = config.predicting_concepts.as_ref().ok_or_else(|| {
            CliError::validation("config is missing `predicting_concepts`".into())
        })?;
        let training =
            crate::config::load_concept_set(&loaded.resolve(training_path), ConceptRole::Training)?;
        let predicting = crate::config::load_concept_set(
            &loaded.resolve(predicting_path),
            ConceptRole::Predicting,
        )?;
        let profile = build_similarity_profile(&predicting, &training)
            .map_err(|e| CliError::data(format!("similarity profile: {e}")))?;

        let adapter = match &config.adapter {
            None => AdapterWeights::identity(predicting.dim()),
            Some(paths) => {
                let v_proj = npy::load_tensor(&loaded.resolve(&paths.v_proj))?;
                let v_bias = npy::load_tensor(&loaded.resolve(&paths.v_bias))?;
                let c_proj = npy::load_tensor(&loaded.resolve(&paths.c_proj))?;
                let c_bias = npy::load_tensor(&loaded.resolve(&paths.c_bias))?;
                AdapterWeights::new(
                    v_proj,
                    v_bias.data().to_vec(),
                    c_proj,
                    c_bias.data().to_vec(),
                )?
            }
        };
        let cross_attention = match &config.cross_attention {
            None => None,
            Some(paths) => Some(CrossAttentionWeights::new(
                npy::load_tensor(&loaded.resolve(&paths.w_q))?,
                npy::load_tensor(&loaded.resolve(&paths.w_k))?,
                npy::load_tensor(&loaded.resolve(&paths.w_v))?,
                npy::load_tensor(&loaded.resolve(&paths.w_o))?,
            )?),
        };
        let positional = match &config.positional {
            None => None,
            Some(path) => Some(npy::load_tensor(&loaded.resolve(path))?),
        };
        Ok(Self {
            training,
            predicting,
            profile,
            adapter,
            cross_attention,
            positional,
            modulation: config.modulation.params(),
            inference: config.inference,
        })
    }

    /// Context against the training vocabulary itself (the loss-side view).
    pub fn with_training_vocabulary(&self) -> CliResult<Self> {
        let profile = build_similarity_profile(&self.training, &self.training)
            .map_err(|e| CliError::data(format!("similarity profile: {e}")))?;
        Ok(Self {
            training: self.training.clone(),
            predicting: self.training.clone(),
            profile,
            adapter: self.adapter.clone(),
            cross_attention: self.cross_attention.clone(),
            positional: self.positional.clone(),
            modulation: self.modulation,
            inference: self.inference,
        })
    }
}

/// Outputs of the pipeline on one scene.
pub struct SceneOutputs {
    pub id: String,
    pub bundle: EmbeddingBundle,
    pub proposals: Vec<ScoredProposal>,
    /// Indices into `proposals`, in kept order.
    pub kept: Vec<usize>,
    pub panoptic: PanopticResult,
    pub semantic: Vec<i32>,
}

fn stage<T>(id: &str, name: &str, r: ovps_core::Result<T>) -> CliResult<T> {
    r.map_err(|e| CliError::data(format!("scene {id} at stage {name}: {e}")))
}

/// Run the full decision pipeline on one scene.
pub fn run_scene(ctx: &PipelineContext, inputs: &SceneInputs) -> CliResult<SceneOutputs> {
    let id = &inputs.id;
    let map = stage(
        id,
        "feature_map",
        SpatialFeatureMap::new(inputs.features.clone(), ctx.positional.clone()),
    )?;
    let projected = stage(id, "spatial_project", spatial_project(&map, &ctx.adapter))?;

    let pool_weights = match ctx.inference.pooling {
        PoolingConfig::Soft => sigmoid_map(&inputs.mask_logits),
        PoolingConfig::Binary => stage(
            id,
            "binarize_masks",
            binarize_masks(&inputs.mask_logits, ctx.inference.mask_bin_threshold),
        )?,
    };
    let clip = stage(id, "mask_pool", mask_pool(&projected, &pool_weights))?;

    let queries = stage(id, "normalize_queries", l2_normalize(&inputs.query_embeddings))?;
    let queries = match &ctx.cross_attention {
        None => queries,
        Some(weights) => stage(
            id,
            "cross_attend",
            cross_attend(&queries, &projected, weights),
        )?,
    };

    let bundle = stage(
        id,
        "modulate",
        modulate(
            &queries,
            &clip,
            ctx.predicting.embeddings(),
            ctx.profile.per_category_max(),
            ctx.profile.domain_similarity(),
            &ctx.modulation,
        ),
    )?;

    let k = inputs.mask_logits.shape()[0];
    if inputs.iou_scores.len() != k {
        return Err(CliError::data(format!(
            "scene {id}: {} IoU scores for {k} masks",
            inputs.iou_scores.len()
        )));
    }
    let (h, w) = (inputs.mask_logits.shape()[1], inputs.mask_logits.shape()[2]);
    let mut proposals = Vec::with_capacity(k);
    for ki in 0..k {
        let mask = stage(
            id,
            "proposal_mask",
            DenseTensor::new(vec![h, w], inputs.mask_logits.plane(ki).to_vec()),
        )?;
        proposals.push(stage(
            id,
            "score_proposal",
            ScoredProposal::new(
                mask,
                bundle.probs.row(ki).to_vec(),
                inputs.iou_scores[ki],
                bundle.labels[ki],
                ctx.inference.scoring.mode(),
            ),
        )?);
    }
    let kept = filter_proposal_indices(&proposals, ctx.inference.score_threshold);
    let kept_proposals: Vec<ScoredProposal> =
        kept.iter().map(|&i| proposals[i].clone()).collect();
    let panoptic = stage(
        id,
        "panoptic_merge",
        panoptic_merge(
            &kept_proposals,
            ctx.predicting.thing_flags(),
            &ctx.inference.merge_params(),
        ),
    )?;
    // merging an empty kept set loses the image extent; restore it
    let panoptic = if kept_proposals.is_empty() {
        PanopticResult::empty(h, w)
    } else {
        panoptic
    };
    let semantic = semantic_merge(&panoptic);
    Ok(SceneOutputs {
        id: id.clone(),
        bundle,
        proposals,
        kept,
        panoptic,
        semantic,
    })
}

/// Scene ids in a scenes directory, sorted by name.
pub fn list_scene_dirs(scenes_dir: &Path) -> CliResult<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    let entries = std::fs::read_dir(scenes_dir).map_err(|e| {
        CliError::validation(format!(
            "cannot read scenes directory {}: {e}",
            scenes_dir.display()
        ))
    })?;
    for entry in entries {
        let entry = entry.map_err(|e| CliError::data(format!("scene listing: {e}")))?;
        let path = entry.path();
        if path.is_dir() {
            let id = entry.file_name().to_string_lossy().to_string();
            out.push((id, path));
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(CliError::validation(format!(
            "scenes directory {} holds no scene subdirectories",
            scenes_dir.display()
        )));
    }
    Ok(out)
}

/// Load the pipeline tensors of one scene directory.
pub fn load_scene(id: &str, dir: &Path) -> CliResult<SceneInputs> {
    let features = npy::load_tensor(&dir.join("features.npy"))?;
    let mask_logits = npy::load_tensor(&dir.join("mask_logits.npy"))?;
    let query_embeddings = npy::load_tensor(&dir.join("query_embeds.npy"))?;
    let iou = npy::load_tensor(&dir.join("iou_scores.npy"))?;
    if iou.rank() != 1 {
        return Err(CliError::data(format!(
            "scene {id}: iou_scores.npy must be rank-1, got {:?}",
            iou.shape()
        )));
    }
    Ok(SceneInputs {
        id: id.to_string(),
        features,
        mask_logits,
        query_embeddings,
        iou_scores: iou.data().to_vec(),
    })
}

/// Load a scene's ground truth (masks plus i32 labels).
pub fn load_scene_ground_truth(id: &str, dir: &Path) -> CliResult<SceneGroundTruth> {
    let masks = npy::load_tensor(&dir.join("gt_masks.npy"))?;
    let (shape, labels) = npy::load_i32(&dir.join("gt_labels.npy"))?;
    if shape.len() != 1 {
        return Err(CliError::data(format!(
            "scene {id}: gt_labels.npy must be rank-1, got {shape:?}"
        )));
    }
    let labels = labels
        .into_iter()
        .map(|v| {
            usize::try_from(v).map_err(|_| {
                CliError::data(format!("scene {id}: negative ground-truth label {v}"))
            })
        })
        .collect::<CliResult<Vec<usize>>>()?;
    Ok(SceneGroundTruth { masks, labels })
}

#[derive(Serialize, Deserialize)]
struct SegmentTableDoc {
    segments: Vec<SegmentInfo>,
}

/// Write a panoptic result as `<stem>.npy` + `<stem>.json` in `dir`.
pub fn store_panoptic(dir: &Path, stem: &str, result: &PanopticResult) -> CliResult<()> {
    let map: Vec<i32> = result.segment_map().iter().map(|&v| v as i32).collect();
    npy::store_i32(
        &dir.join(format!("{stem}.npy")),
        &[result.height(), result.width()],
        &map,
    )?;
    let doc = SegmentTableDoc {
        segments: result.segments().to_vec(),
    };
    std::fs::write(
        dir.join(format!("{stem}.json")),
        to_canonical_file_bytes(&doc)?,
    )
    .map_err(|e| CliError::data(format!("cannot write {stem}.json: {e}")))?;
    Ok(())
}

/// Load a panoptic result stored by [`store_panoptic`].
pub fn load_panoptic(dir: &Path, stem: &str) -> CliResult<PanopticResult> {
    let (shape, map) = npy::load_i32(&dir.join(format!("{stem}.npy")))?;
    if shape.len() != 2 {
        return Err(CliError::data(format!(
            "{stem}.npy: segment map must be rank-2, got {shape:?}"
        )));
    }
    let map_u32 = map
        .into_iter()
        .map(|v| {
            u32::try_from(v)
                .map_err(|_| CliError::data(format!("{stem}.npy: negative segment id {v}")))
        })
        .collect::<CliResult<Vec<u32>>>()?;
    let json_path = dir.join(format!("{stem}.json"));
    let text = std::fs::read_to_string(&json_path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", json_path.display())))?;
    let doc: SegmentTableDoc = serde_json::from_str(&text)
        .map_err(|e| CliError::data(format!("{}: {e}", json_path.display())))?;
    Ok(PanopticResult::new(shape[0], shape[1], map_u32, doc.segments)?)
}
