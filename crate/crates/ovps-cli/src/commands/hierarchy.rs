//! Coarse-to-fine category paths for every kept proposal, walked down a
//! concept tree with the proposal's modulated embedding.

use super::{ensure_dir, write_json, SCHEMA_VERSION};
use crate::config::LoadedConfig;
use crate::error::{CliError, CliResult};
use crate::pipeline::{list_scene_dirs, load_scene, run_scene, PipelineContext};
use ovps_core::inference::hierarchical_classify;
use serde::Serialize;
use std::path::Path;

pub struct HierarchyArgs<'a> {
    pub config: &'a Path,
    pub out: &'a Path,
}

#[derive(Serialize)]
struct ProposalPath {
    proposal: usize,
    label: usize,
    score: f64,
    path: Vec<String>,
}

#[derive(Serialize)]
struct ImagePaths {
    id: String,
    proposals: Vec<ProposalPath>,
}

#[derive(Serialize)]
struct HierarchyReport {
    schema: u32,
    config_hash: String,
    images: Vec<ImagePaths>,
}

pub fn run(args: &HierarchyArgs<'_>) -> CliResult<()> {
    let loaded = LoadedConfig::from_file(args.config)?;
    let tree_path = loaded
        .config
        .tree
        .as_ref()
        .ok_or_else(|| CliError::validation("hierarchy needs a `tree` path in the config".into()))?;
    let tree = crate::config::load_tree(&loaded.resolve(tree_path))?;
    let ctx = PipelineContext::from_config(&loaded)?;
    let scenes_dir = loaded
        .config
        .scenes_dir
        .as_ref()
        .ok_or_else(|| CliError::validation("config is missing `scenes_dir`".into()))?;
    let scene_dirs = list_scene_dirs(&loaded.resolve(scenes_dir))?;

    let mut images = Vec::with_capacity(scene_dirs.len());
    for (id, dir) in &scene_dirs {
        let inputs = load_scene(id, dir)?;
        let outputs = run_scene(&ctx, &inputs)?;
        let mut proposals = Vec::with_capacity(outputs.kept.len());
        for &k in &outputs.kept {
            let path = hierarchical_classify(outputs.bundle.modulated.row(k), &tree)
                .map_err(|e| CliError::data(format!("scene {id} proposal {k}: {e}")))?;
            proposals.push(ProposalPath {
                proposal: k,
                label: outputs.proposals[k].label,
                score: outputs.proposals[k].score,
                path,
            });
        }
        images.push(ImagePaths {
            id: id.clone(),
            proposals,
        });
    }

    ensure_dir(args.out)?;
    write_json(
        &args.out.join("hierarchy.json"),
        &HierarchyReport {
            schema: SCHEMA_VERSION,
            config_hash: loaded.config_hash(),
            images,
        },
    )?;
    Ok(())
}
