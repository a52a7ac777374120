//! Run the decision pipeline over a scenes directory and write panoptic
//! results plus a run manifest.

use super::{ensure_dir, write_json, SCHEMA_VERSION};
use crate::config::{LoadedConfig, RunConfig};
use crate::error::{CliError, CliResult};
use crate::npy;
use crate::pipeline::{list_scene_dirs, load_scene, run_scene, PipelineContext, SceneOutputs};
use serde::Serialize;
use std::path::Path;
use std::time::Instant;

pub struct ClassifyArgs<'a> {
    pub config: &'a Path,
    pub out: &'a Path,
    pub threads: usize,
    /// Also write wall-clock timings (a separate file, excluded from the
    /// byte-determinism contract).
    pub timings: bool,
}

#[derive(Serialize)]
struct ImageRecord {
    id: String,
    proposals: usize,
    kept: usize,
    segments: usize,
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema: u32,
    config_hash: String,
    domain_similarity: f64,
    params: &'a RunConfig,
    images: Vec<ImageRecord>,
}

#[derive(Serialize)]
struct Timings {
    per_image_ms: Vec<(String, f64)>,
}

pub fn run(args: &ClassifyArgs<'_>) -> CliResult<()> {
    let loaded = LoadedConfig::from_file(args.config)?;
    let ctx = PipelineContext::from_config(&loaded)?;
    let scenes_dir = loaded
        .config
        .scenes_dir
        .as_ref()
        .ok_or_else(|| CliError::validation("config is missing `scenes_dir`".into()))?;
    let scene_dirs = list_scene_dirs(&loaded.resolve(scenes_dir))?;

    // load everything before producing any output
    let mut inputs = Vec::with_capacity(scene_dirs.len());
    for (id, dir) in &scene_dirs {
        inputs.push(load_scene(id, dir)?);
    }

    let outputs = process_scenes(&ctx, &inputs, args.threads)?;

    ensure_dir(args.out)?;
    let mut images = Vec::with_capacity(outputs.len());
    let mut timings = Vec::with_capacity(outputs.len());
    for (scene, elapsed_ms) in &outputs {
        crate::pipeline::store_panoptic(args.out, &scene.id, &scene.panoptic)?;
        npy::store_i32(
            &args.out.join(format!("{}_semantic.npy", scene.id)),
            &[scene.panoptic.height(), scene.panoptic.width()],
            &scene.semantic,
        )?;
        images.push(ImageRecord {
            id: scene.id.clone(),
            proposals: scene.proposals.len(),
            kept: scene.kept.len(),
            segments: scene.panoptic.segments().len(),
        });
        timings.push((scene.id.clone(), *elapsed_ms));
    }
    let manifest = Manifest {
        schema: SCHEMA_VERSION,
        config_hash: loaded.config_hash(),
        domain_similarity: ctx.profile.domain_similarity(),
        params: &loaded.config,
        images,
    };
    write_json(&args.out.join("manifest.json"), &manifest)?;
    if args.timings {
        write_json(
            &args.out.join("timings.json"),
            &Timings {
                per_image_ms: timings,
            },
        )?;
    }
    log::info!(
        "classified {} scenes (s = {:.6})",
        outputs.len(),
        ctx.profile.domain_similarity()
    );
    Ok(())
}

/// Fan scenes out over worker threads; outputs return in scene order, so
/// file content does not depend on the thread count.
fn process_scenes(
    ctx: &PipelineContext,
    inputs: &[crate::pipeline::SceneInputs],
    threads: usize,
) -> CliResult<Vec<(SceneOutputs, f64)>> {
    let threads = threads.max(1).min(inputs.len().max(1));
    let mut indexed: Vec<(usize, SceneOutputs, f64)> = if threads <= 1 {
        let mut out = Vec::with_capacity(inputs.len());
        for (i, scene) in inputs.iter().enumerate() {
            let start = Instant::now();
            let result = run_scene(ctx, scene)?;
            out.push((i, result, start.elapsed().as_secs_f64() * 1e3));
        }
        out
    } else {
        std::thread::scope(|scope| {
            let mut handles = Vec::with_capacity(threads);
            for worker in 0..threads {
                let chunk: Vec<(usize, &crate::pipeline::SceneInputs)> = inputs
                    .iter()
                    .enumerate()
                    .skip(worker)
                    .step_by(threads)
                    .collect();
                handles.push(scope.spawn(move || {
                    let mut done = Vec::with_capacity(chunk.len());
                    for (i, scene) in chunk {
                        let start = Instant::now();
                        let result = run_scene(ctx, scene)?;
                        done.push((i, result, start.elapsed().as_secs_f64() * 1e3));
                    }
                    Ok::<_, CliError>(done)
                }));
            }
            let mut all = Vec::with_capacity(inputs.len());
            for handle in handles {
                all.extend(handle.join().expect("worker does not panic")?);
            }
            Ok::<_, CliError>(all)
        })?
    };
    indexed.sort_by_key(|(i, _, _)| *i);
    Ok(indexed
        .into_iter()
        .map(|(_, scene, ms)| (scene, ms))
        .collect())
}
