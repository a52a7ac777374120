//! Pairwise cosine-similarity statistics of a concept set's embeddings.

use super::{ensure_dir, fmt_float, write_json, write_text, SCHEMA_VERSION};
use crate::config::LoadedConfig;
use crate::error::{CliError, CliResult};
use ovps_core::concepts::ConceptRole;
use ovps_core::metrics::{similarity_stats, SimilarityStats};
use serde::Serialize;
use std::path::Path;

pub struct SimstatsArgs<'a> {
    pub config: Option<&'a Path>,
    pub concepts: Option<&'a Path>,
    pub out: &'a Path,
}

#[derive(Serialize)]
struct SimstatsReport {
    schema: u32,
    categories: usize,
    stats: SimilarityStats,
}

pub fn run(args: &SimstatsArgs<'_>) -> CliResult<()> {
    let concepts_path = match (args.concepts, args.config) {
        (Some(path), _) => path.to_path_buf(),
        (None, Some(config)) => {
            let loaded = LoadedConfig::from_file(config)?;
            let rel = loaded.config.predicting_concepts.clone().ok_or_else(|| {
                CliError::validation("config has no `predicting_concepts` for simstats".into())
            })?;
            loaded.resolve(&rel)
        }
        (None, None) => {
            return Err(CliError::validation(
                "simstats needs --concepts or --config".into(),
            ))
        }
    };
    let set = crate::config::load_concept_set(&concepts_path, ConceptRole::Predicting)?;
    let stats = similarity_stats(set.embeddings())?;

    ensure_dir(args.out)?;
    let mut csv = String::from("bin_low,bin_high,count\n");
    for (i, &count) in stats.histogram.iter().enumerate() {
        csv.push_str(&format!(
            "{},{},{}\n",
            fmt_float(SimilarityStats::bin_low(i)),
            fmt_float(SimilarityStats::bin_low(i + 1)),
            count
        ));
    }
    write_text(&args.out.join("simstats.csv"), &csv)?;
    write_json(
        &args.out.join("simstats.json"),
        &SimstatsReport {
            schema: SCHEMA_VERSION,
            categories: set.len(),
            stats,
        },
    )?;
    Ok(())
}
