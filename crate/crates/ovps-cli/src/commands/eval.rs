//! Aggregate panoptic quality and semantic mIoU over matching prediction
//! and ground-truth directories.

use super::{ensure_dir, fmt_float, write_json, write_text, SCHEMA_VERSION};
use crate::config::LoadedConfig;
use crate::error::{CliError, CliResult};
use crate::pipeline::load_panoptic;
use ovps_core::concepts::ConceptRole;
use ovps_core::inference::semantic_merge;
use ovps_core::metrics::{MeanIouAccumulator, MeanIouReport, PQReport, PqAccumulator};
use serde::Serialize;
use std::collections::BTreeSet;
use std::path::Path;

pub struct EvalArgs<'a> {
    pub config: &'a Path,
    pub out: &'a Path,
    pub pred_dir: Option<&'a Path>,
    pub gt_dir: Option<&'a Path>,
}

#[derive(Serialize)]
struct EvalReport {
    schema: u32,
    config_hash: String,
    images: usize,
    panoptic: PQReport,
    semantic: MeanIouReport,
}

/// Result stems: names with both a `.json` segment table and a `.npy`
/// segment map (manifests and other sidecars have no `.npy` twin).
fn stems(dir: &Path) -> CliResult<BTreeSet<String>> {
    let mut out = BTreeSet::new();
    let entries = std::fs::read_dir(dir).map_err(|e| {
        CliError::validation(format!("cannot read directory {}: {e}", dir.display()))
    })?;
    for entry in entries {
        let entry = entry.map_err(|e| CliError::data(format!("listing {}: {e}", dir.display())))?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) == Some("json") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                if path.with_extension("npy").exists() {
                    out.insert(stem.to_string());
                }
            }
        }
    }
    Ok(out)
}

pub fn run(args: &EvalArgs<'_>) -> CliResult<()> {
    let loaded = LoadedConfig::from_file(args.config)?;
    let (pred_dir, gt_dir) = match (args.pred_dir, args.gt_dir) {
        (Some(p), Some(g)) => (p.to_path_buf(), g.to_path_buf()),
        _ => {
            let eval = loaded.config.eval.as_ref().ok_or_else(|| {
                CliError::validation(
                    "eval needs --pred-dir/--gt-dir or an `eval` config section".into(),
                )
            })?;
            (loaded.resolve(&eval.pred_dir), loaded.resolve(&eval.gt_dir))
        }
    };
    let predicting_path = loaded.config.predicting_concepts.as_ref().ok_or_else(|| {
        CliError::validation("config is missing `predicting_concepts`".into())
    })?;
    let concepts = crate::config::load_concept_set(
        &loaded.resolve(predicting_path),
        ConceptRole::Predicting,
    )?;

    let pred_stems = stems(&pred_dir)?;
    let gt_stems = stems(&gt_dir)?;
    let missing: Vec<String> = pred_stems
        .symmetric_difference(&gt_stems)
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(CliError::data(format!(
            "missing counterpart for: {}",
            missing.join(", ")
        )));
    }
    if pred_stems.is_empty() {
        return Err(CliError::data(format!(
            "no result files found under {}",
            pred_dir.display()
        )));
    }

    let mut pq = PqAccumulator::new(concepts.len());
    let mut sem = MeanIouAccumulator::new(concepts.len());
    for stem in &pred_stems {
        let pred = load_panoptic(&pred_dir, stem)?;
        let gt = load_panoptic(&gt_dir, stem)?;
        pq.accumulate(&pred, &gt)
            .map_err(|e| CliError::data(format!("{stem}: {e}")))?;
        sem.accumulate(&semantic_merge(&pred), &semantic_merge(&gt))
            .map_err(|e| CliError::data(format!("{stem}: {e}")))?;
    }
    let panoptic = pq.report(concepts.thing_flags());
    let semantic = sem.report();

    ensure_dir(args.out)?;
    let mut csv = String::from("category,name,tp,fp,fn,iou_sum,pq,sq,rq,sem_iou\n");
    for cat in &panoptic.per_category {
        let sem_iou = semantic
            .per_class
            .get(cat.category)
            .and_then(|v| *v)
            .map_or(String::from(""), fmt_float);
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            cat.category,
            concepts.names()[cat.category],
            cat.tp,
            cat.fp,
            cat.fn_count,
            fmt_float(cat.iou_sum),
            fmt_float(cat.pq),
            fmt_float(cat.sq),
            fmt_float(cat.rq),
            sem_iou,
        ));
    }
    write_text(&args.out.join("eval_per_category.csv"), &csv)?;
    let report = EvalReport {
        schema: SCHEMA_VERSION,
        config_hash: loaded.config_hash(),
        images: pred_stems.len(),
        panoptic,
        semantic,
    };
    write_json(&args.out.join("eval_report.json"), &report)?;
    log::info!("evaluated {} images", pred_stems.len());
    Ok(())
}
