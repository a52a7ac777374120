//! Run configuration: one JSON document drives every command. Paths are
//! resolved relative to the config file, defaults are filled in on load,
//! and the resolved document is hashed for the run manifest.

use crate::error::{CliError, CliResult};
use crate::json::to_canonical_bytes;
use crate::npy;
use ovps_core::concepts::{CategoryTree, ConceptRole, ConceptSet};
use ovps_core::fixtures::FixtureSpec;
use ovps_core::inference::{MergeParams, ScoringMode};
use ovps_core::matching::{LossWeights, SumLossNorm};
use ovps_core::modulation::ModulationParams;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct ModulationConfig {
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
    pub epsilon_sim: f64,
}

impl Default for ModulationConfig {
    fn default() -> Self {
        let p = ModulationParams::default();
        Self {
            alpha: p.alpha,
            beta: p.beta,
            tau: p.tau,
            epsilon_sim: p.epsilon_sim,
        }
    }
}

impl ModulationConfig {
    pub fn params(&self) -> ModulationParams {
        ModulationParams {
            alpha: self.alpha,
            beta: self.beta,
            tau: self.tau,
            epsilon_sim: self.epsilon_sim,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ScoringConfig {
    Cls,
    Iou,
    ClsXIou,
}

impl ScoringConfig {
    pub fn mode(&self) -> ScoringMode {
        match self {
            Self::Cls => ScoringMode::Cls,
            Self::Iou => ScoringMode::Iou,
            Self::ClsXIou => ScoringMode::ClsTimesIou,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum PoolingConfig {
    /// Pool with sigmoid mask probabilities.
    Soft,
    /// Pool with binarized masks.
    Binary,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct InferenceConfig {
    pub score_threshold: f64,
    pub mask_bin_threshold: f64,
    pub min_area: usize,
    pub min_overlap_frac: f64,
    pub merge_stuff: bool,
    pub scoring: ScoringConfig,
    pub pooling: PoolingConfig,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        let m = MergeParams::default();
        Self {
            score_threshold: 0.3,
            mask_bin_threshold: m.mask_bin_threshold,
            min_area: m.min_area,
            min_overlap_frac: m.min_overlap_frac,
            merge_stuff: m.merge_stuff,
            scoring: ScoringConfig::ClsXIou,
            pooling: PoolingConfig::Soft,
        }
    }
}

impl InferenceConfig {
    pub fn merge_params(&self) -> MergeParams {
        MergeParams {
            mask_bin_threshold: self.mask_bin_threshold,
            min_area: self.min_area,
            min_overlap_frac: self.min_overlap_frac,
            merge_stuff: self.merge_stuff,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct LossConfig {
    pub w_ce: f64,
    pub w_dice: f64,
    pub w_bce: f64,
    pub w_match: f64,
    pub w_sum: f64,
    /// IoU-score threshold selecting valid predictions for the image-level
    /// matching loss.
    pub valid_iou_threshold: f64,
    pub sum_loss_norm: SumLossNormConfig,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum SumLossNormConfig {
    MeanSquare,
    Root,
}

impl Default for LossConfig {
    fn default() -> Self {
        let w = LossWeights::default();
        Self {
            w_ce: w.w_ce,
            w_dice: w.w_dice,
            w_bce: w.w_bce,
            w_match: w.w_match,
            w_sum: w.w_sum,
            valid_iou_threshold: 0.5,
            sum_loss_norm: SumLossNormConfig::MeanSquare,
        }
    }
}

impl LossConfig {
    pub fn weights(&self) -> LossWeights {
        LossWeights {
            w_ce: self.w_ce,
            w_dice: self.w_dice,
            w_bce: self.w_bce,
            w_match: self.w_match,
            w_sum: self.w_sum,
        }
    }

    pub fn sum_norm(&self) -> SumLossNorm {
        match self.sum_loss_norm {
            SumLossNormConfig::MeanSquare => SumLossNorm::MeanSquare,
            SumLossNormConfig::Root => SumLossNorm::Root,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvalConfig {
    pub pred_dir: String,
    pub gt_dir: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FixtureConfig {
    #[serde(flatten)]
    pub spec: FixtureSpec,
    /// Number of scenes; scene `i` uses `seed + i`.
    pub scenes: usize,
    /// When set, scenes come from the seen/unseen split generator.
    #[serde(default)]
    pub holdout_fraction: Option<f64>,
}

/// The run configuration document.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub training_concepts: Option<String>,
    #[serde(default)]
    pub predicting_concepts: Option<String>,
    #[serde(default)]
    pub scenes_dir: Option<String>,
    #[serde(default)]
    pub tree: Option<String>,
    #[serde(default)]
    pub positional: Option<String>,
    #[serde(default)]
    pub adapter: Option<AdapterPaths>,
    #[serde(default)]
    pub cross_attention: Option<CrossAttentionPaths>,
    #[serde(default)]
    pub modulation: ModulationConfig,
    #[serde(default)]
    pub inference: InferenceConfig,
    #[serde(default)]
    pub losses: LossConfig,
    #[serde(default)]
    pub eval: Option<EvalConfig>,
    #[serde(default)]
    pub fixture: Option<FixtureConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AdapterPaths {
    pub v_proj: String,
    pub v_bias: String,
    pub c_proj: String,
    pub c_bias: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CrossAttentionPaths {
    pub w_q: String,
    pub w_k: String,
    pub w_v: String,
    pub w_o: String,
}

/// A config together with the directory its relative paths resolve against.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::validation(format!("cannot read config {}: {e}", path.display()))
        })?;
        let config: RunConfig = serde_json::from_str(&text).map_err(|e| {
            CliError::validation(format!("config {} is not valid: {e}", path.display()))
        })?;
        config.validate_ranges()?;
        let base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(Self { config, base_dir })
    }

    /// In-memory config rooted at a directory (used by genfix and tests).
    pub fn rooted(config: RunConfig, base_dir: PathBuf) -> Self {
        Self { config, base_dir }
    }

    pub fn resolve(&self, relative: &str) -> PathBuf {
        let p = Path::new(relative);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// SHA-256 of the resolved config document in canonical JSON; execution
    /// details like thread count or output directory never enter the hash.
    pub fn config_hash(&self) -> String {
        let bytes = to_canonical_bytes(&self.config).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl RunConfig {
    fn validate_ranges(&self) -> CliResult<()> {
        self.modulation
            .params()
            .validate()
            .map_err(|e| CliError::validation(format!("modulation config: {e}")))?;
        self.losses
            .weights()
            .validate()
            .map_err(|e| CliError::validation(format!("loss config: {e}")))?;
        let inf = &self.inference;
        if !(0.0..=1.0).contains(&inf.score_threshold)
            || !(0.0..=1.0).contains(&inf.mask_bin_threshold)
            || !(0.0..=1.0).contains(&inf.min_overlap_frac)
        {
            return Err(CliError::validation(
                "inference thresholds must lie in [0, 1]".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.losses.valid_iou_threshold) {
            return Err(CliError::validation(
                "valid_iou_threshold must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// On-disk concept-set document.
#[derive(Debug, Serialize, Deserialize)]
pub struct ConceptSetDoc {
    pub dim: usize,
    pub categories: Vec<CategoryDoc>,
    pub embedding_file: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CategoryDoc {
    pub name: String,
    pub is_thing: bool,
}

/// Load a concept set: JSON document plus NPY embeddings, width-checked.
pub fn load_concept_set(path: &Path, role: ConceptRole) -> CliResult<ConceptSet> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::validation(format!("cannot read concept set {}: {e}", path.display()))
    })?;
    let doc: ConceptSetDoc = serde_json::from_str(&text).map_err(|e| {
        CliError::validation(format!("concept set {} is not valid: {e}", path.display()))
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let emb_path = base.join(&doc.embedding_file);
    if !emb_path.exists() {
        return Err(CliError::validation(format!(
            "embedding file {} referenced by {} does not exist",
            emb_path.display(),
            path.display()
        )));
    }
    let embeddings = npy::load_tensor(&emb_path)?;
    if embeddings.rank() != 2 || embeddings.shape()[1] != doc.dim {
        return Err(CliError::validation(format!(
            "embedding file {} has shape {:?}, expected (count, {})",
            emb_path.display(),
            embeddings.shape(),
            doc.dim
        )));
    }
    let names = doc.categories.iter().map(|c| c.name.clone()).collect();
    let flags = doc.categories.iter().map(|c| c.is_thing).collect();
    Ok(ConceptSet::new(names, embeddings, flags, role)?)
}

/// Write a concept set as a document + embeddings NPY next to it.
pub fn store_concept_set(doc_path: &Path, set: &ConceptSet) -> CliResult<()> {
    let stem = doc_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("concepts");
    let emb_name = format!("{stem}_embeddings.npy");
    let base = doc_path.parent().unwrap_or_else(|| Path::new("."));
    npy::store_tensor(&base.join(&emb_name), set.embeddings())?;
    let doc = ConceptSetDoc {
        dim: set.dim(),
        categories: set
            .names()
            .iter()
            .zip(set.thing_flags())
            .map(|(name, &is_thing)| CategoryDoc {
                name: name.clone(),
                is_thing,
            })
            .collect(),
        embedding_file: emb_name,
    };
    std::fs::write(doc_path, crate::json::to_canonical_file_bytes(&doc)?)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", doc_path.display())))?;
    Ok(())
}

/// On-disk category-tree document.
#[derive(Debug, Serialize, Deserialize)]
pub struct TreeDoc {
    pub dim: usize,
    pub nodes: Vec<TreeNodeDoc>,
    pub embedding_file: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TreeNodeDoc {
    pub id: u64,
    pub name: String,
    pub parent: Option<u64>,
}

/// Load and validate a category tree.
pub fn load_tree(path: &Path) -> CliResult<CategoryTree> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::validation(format!("cannot read tree {}: {e}", path.display()))
    })?;
    let doc: TreeDoc = serde_json::from_str(&text)
        .map_err(|e| CliError::validation(format!("tree {} is not valid: {e}", path.display())))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let emb_path = base.join(&doc.embedding_file);
    if !emb_path.exists() {
        return Err(CliError::validation(format!(
            "embedding file {} referenced by {} does not exist",
            emb_path.display(),
            path.display()
        )));
    }
    let embeddings = npy::load_tensor(&emb_path)?;
    if embeddings.rank() != 2 || embeddings.shape()[1] != doc.dim {
        return Err(CliError::validation(format!(
            "tree embedding file {} has shape {:?}, expected (count, {})",
            emb_path.display(),
            embeddings.shape(),
            doc.dim
        )));
    }
    let ids = doc.nodes.iter().map(|n| n.id).collect();
    let names = doc.nodes.iter().map(|n| n.name.clone()).collect();
    let parents = doc.nodes.iter().map(|n| n.parent).collect();
    Ok(CategoryTree::from_parent_links(
        ids, names, parents, &embeddings,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_echo_shipped_parameters() {
        let config = RunConfig::default();
        assert_eq!(config.modulation.alpha, 10.0);
        assert_eq!(config.modulation.beta, 0.5);
        assert_eq!(config.modulation.tau, 0.01);
        assert_eq!(config.losses.w_match, 1.0);
        assert_eq!(config.losses.w_sum, 0.4);
        assert_eq!(config.inference.scoring, ScoringConfig::ClsXIou);
    }

    #[test]
    fn hash_changes_with_semantic_fields_only() {
        let base = LoadedConfig::rooted(RunConfig::default(), PathBuf::from("/a"));
        let same = LoadedConfig::rooted(RunConfig::default(), PathBuf::from("/b"));
        // base_dir is execution detail, not semantics
        assert_eq!(base.config_hash(), same.config_hash());

        let mut changed = RunConfig::default();
        changed.modulation.beta = 0.75;
        let changed = LoadedConfig::rooted(changed, PathBuf::from("/a"));
        assert_ne!(base.config_hash(), changed.config_hash());
    }

    #[test]
    fn bad_ranges_are_validation_errors() {
        let mut config = RunConfig::default();
        config.modulation.tau = 0.0;
        assert!(config.validate_ranges().is_err());

        let mut config = RunConfig::default();
        config.inference.score_threshold = 1.5;
        assert!(config.validate_ranges().is_err());

        let mut config = RunConfig::default();
        config.losses.w_dice = -1.0;
        assert!(config.validate_ranges().is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = r#"{"modульation": {}}"#;
        assert!(serde_json::from_str::<RunConfig>(text).is_err());
        let text = r#"{"scenes_dir": "x", "typo_field": 1}"#;
        assert!(serde_json::from_str::<RunConfig>(text).is_err());
    }
}
