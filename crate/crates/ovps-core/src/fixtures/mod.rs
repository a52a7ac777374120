//! Deterministic synthetic scenes so the full pipeline and test suite run
//! without external datasets or model weights.
//!
//! A scene is built from a seeded [`rng::SceneRng`] in a fixed draw order:
//!
//! 1. orthonormal category prototypes (Gram-Schmidt over Gaussian rows);
//! 2. extra training embeddings when the training set is larger;
//! 3. one ground-truth rectangle per proposal inside a disjoint grid cell;
//! 4. border jitter offsets for the proposal masks;
//! 5. feature-map noise, then query-embedding noise (skipped at noise 0).
//!
//! Rectangles keep areas and IoU values exactly hand-computable, and the
//! disjoint cells make zero-noise scenes perfectly identifiable: pooling a
//! proposal mask recovers its prototype exactly because background pixels
//! carry the zero vector.

pub mod rng;

use crate::concepts::{ConceptRole, ConceptSet};
use crate::error::{Error, Result};
use crate::matching::GroundTruthSet;
use crate::metrics;
use crate::tensor::DenseTensor;
use rng::SceneRng;
use serde::{Deserialize, Serialize};

/// Logit painted inside (and, negated, outside) proposal masks.
pub const MASK_LOGIT: f64 = 20.0;

fn default_jitter() -> usize {
    1
}

/// Parameters of a synthetic scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    /// Number of proposals; also the number of ground-truth rectangles.
    pub proposals: usize,
    pub embed_dim: usize,
    /// Predicting concept-set size.
    pub predicting_categories: usize,
    /// Training concept-set size.
    pub training_categories: usize,
    /// Noise level in [0, 1] applied to features and query embeddings.
    #[serde(default)]
    pub noise: f64,
    /// Border jitter of proposal masks, in pixels.
    #[serde(default = "default_jitter")]
    pub jitter: usize,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            height: 64,
            width: 64,
            proposals: 4,
            embed_dim: 16,
            predicting_categories: 4,
            training_categories: 4,
            noise: 0.0,
            jitter: 1,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Rect {
    y0: usize,
    y1: usize,
    x0: usize,
    x1: usize,
}

impl Rect {
    fn paint(&self, width: usize, inside: f64, outside: f64, out: &mut Vec<f64>, pixels: usize) {
        let start = out.len();
        out.resize(start + pixels, outside);
        for y in self.y0..self.y1 {
            for x in self.x0..self.x1 {
                out[start + y * width + x] = inside;
            }
        }
    }
}

struct CellGrid {
    side: usize,
    cell_h: usize,
    cell_w: usize,
}

impl FixtureSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.height,
            self.width,
            self.proposals,
            self.embed_dim,
            self.predicting_categories,
            self.training_categories,
        ];
        if positive.iter().any(|&v| v == 0) {
            return Err(Error::InvalidSpec {
                reason: "all extents must be positive".into(),
            });
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::InvalidSpec {
                reason: format!("noise {} outside [0, 1]", self.noise),
            });
        }
        if self.embed_dim < self.predicting_categories {
            return Err(Error::InvalidSpec {
                reason: format!(
                    "embed_dim {} too small for {} orthonormal prototypes",
                    self.embed_dim, self.predicting_categories
                ),
            });
        }
        self.grid()?;
        Ok(())
    }

    fn grid(&self) -> Result<CellGrid> {
        let side = (self.proposals as f64).sqrt().ceil() as usize;
        let cell_h = self.height / side;
        let cell_w = self.width / side;
        let margin = self.jitter + 1;
        for (cell, name) in [(cell_h, "height"), (cell_w, "width")] {
            let span = cell.saturating_sub(2 * margin);
            let min_rect = span.saturating_sub(2 * (span / 4));
            if span < 2 || min_rect <= 2 * self.jitter {
                return Err(Error::InvalidSpec {
                    reason: format!(
                        "image {name} {cell} per cell cannot host a jitter-{} rectangle",
                        self.jitter
                    ),
                });
            }
        }
        Ok(CellGrid {
            side,
            cell_h,
            cell_w,
        })
    }
}

/// Everything the pipeline needs for one image, plus ground truth.
#[derive(Debug, Clone)]
pub struct SceneBundle {
    pub spec: FixtureSpec,
    /// Backbone feature map, H x W x D.
    pub features: DenseTensor,
    /// Proposal mask logits, K x H x W.
    pub mask_logits: DenseTensor,
    /// Unit-norm query embeddings, K x D.
    pub query_embeddings: DenseTensor,
    /// Predicted-IoU scores, the true IoU of each jittered mask.
    pub iou_scores: Vec<f64>,
    /// Ground-truth category per proposal, indexing the predicting set.
    pub gt_labels: Vec<usize>,
    pub gt: GroundTruthSet,
    pub training: ConceptSet,
    pub predicting: ConceptSet,
}

impl SceneBundle {
    /// Ground truth as a panoptic result: one segment per rectangle, with
    /// same-category stuff rectangles merged into a single segment when
    /// `merge_stuff` is set (the panoptic convention).
    pub fn gt_panoptic(&self, merge_stuff: bool) -> crate::inference::PanopticResult {
        use crate::inference::{PanopticResult, SegmentInfo};
        let (h, w) = (self.spec.height, self.spec.width);
        let mut map = vec![0u32; h * w];
        let mut segments: Vec<SegmentInfo> = Vec::new();
        let mut stuff_ids: std::collections::BTreeMap<usize, u32> = Default::default();
        let mut next_id = 1u32;
        for (g, &label) in self.gt_labels.iter().enumerate() {
            let is_thing = self.predicting.thing_flags()[label];
            let id = if !is_thing && merge_stuff {
                *stuff_ids.entry(label).or_insert_with(|| {
                    let id = next_id;
                    next_id += 1;
                    id
                })
            } else {
                let id = next_id;
                next_id += 1;
                id
            };
            let mut area = 0;
            for (pix, &v) in self.gt.mask(g).iter().enumerate() {
                if v != 0.0 {
                    map[pix] = id;
                    area += 1;
                }
            }
            match segments.iter_mut().find(|s| s.id == id) {
                Some(seg) => seg.area += area,
                None => segments.push(SegmentInfo {
                    id,
                    category: label,
                    is_thing,
                    score: 1.0,
                    area,
                }),
            }
        }
        PanopticResult::new(h, w, map, segments).expect("disjoint rectangles form a valid result")
    }
}

fn orthonormal_rows(rng: &mut SceneRng, count: usize, dim: usize) -> Result<Vec<Vec<f64>>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(count);
    let mut attempts = 0;
    while rows.len() < count {
        attempts += 1;
        if attempts > count * 32 {
            return Err(Error::InvalidSpec {
                reason: format!("failed to draw {count} orthonormal rows in dimension {dim}"),
            });
        }
        let mut v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        for r in &rows {
            let proj: f64 = v.iter().zip(r).map(|(a, b)| a * b).sum();
            for (vi, ri) in v.iter_mut().zip(r) {
                *vi -= proj * ri;
            }
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            rows.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    Ok(rows)
}

fn category_names(count: usize) -> Vec<String> {
    (0..count).map(|i| format!("cat{i:03}")).collect()
}

fn thing_flags(count: usize) -> Vec<bool> {
    (0..count).map(|i| i % 2 == 0).collect()
}

fn sample_rects(rng: &mut SceneRng, spec: &FixtureSpec, grid: &CellGrid) -> Vec<Rect> {
    let margin = spec.jitter + 1;
    (0..spec.proposals)
        .map(|k| {
            let row = k / grid.side;
            let col = k % grid.side;
            let y_lo = row * grid.cell_h + margin;
            let y_hi = (row + 1) * grid.cell_h - margin;
            let x_lo = col * grid.cell_w + margin;
            let x_hi = (col + 1) * grid.cell_w - margin;
            let shrink_y = (y_hi - y_lo) / 4;
            let shrink_x = (x_hi - x_lo) / 4;
            let y0 = y_lo + rng.below(shrink_y as u64 + 1) as usize;
            let y1 = y_hi - rng.below(shrink_y as u64 + 1) as usize;
            let x0 = x_lo + rng.below(shrink_x as u64 + 1) as usize;
            let x1 = x_hi - rng.below(shrink_x as u64 + 1) as usize;
            Rect { y0, y1, x0, x1 }
        })
        .collect()
}

fn jitter_rect(rng: &mut SceneRng, rect: &Rect, jitter: usize) -> Rect {
    let j = jitter as i64;
    let mut offset = |v: usize| -> usize {
        let delta = rng.below(2 * jitter as u64 + 1) as i64 - j;
        (v as i64 + delta) as usize
    };
    Rect {
        y0: offset(rect.y0),
        y1: offset(rect.y1),
        x0: offset(rect.x0),
        x1: offset(rect.x1),
    }
}

struct SceneParts {
    features: DenseTensor,
    mask_logits: DenseTensor,
    query_embeddings: DenseTensor,
    iou_scores: Vec<f64>,
    gt_labels: Vec<usize>,
    gt_masks: DenseTensor,
}

/// Paint rectangles, features, proposals and queries; prototypes index the
/// predicting concept set.
fn build_scene_parts(
    rng: &mut SceneRng,
    spec: &FixtureSpec,
    prototypes: &[Vec<f64>],
    query_prototypes: &[Vec<f64>],
) -> Result<SceneParts> {
    let grid = spec.grid()?;
    let (h, w, d, k) = (spec.height, spec.width, spec.embed_dim, spec.proposals);
    let m = prototypes.len();
    let pixels = h * w;

    let rects = sample_rects(rng, spec, &grid);
    let jittered: Vec<Rect> = rects
        .iter()
        .map(|r| jitter_rect(rng, r, spec.jitter))
        .collect();
    let gt_labels: Vec<usize> = (0..k).map(|i| i % m).collect();

    let mut gt_masks = Vec::with_capacity(k * pixels);
    let mut mask_logits = Vec::with_capacity(k * pixels);
    for ki in 0..k {
        rects[ki].paint(w, 1.0, 0.0, &mut gt_masks, pixels);
        jittered[ki].paint(w, MASK_LOGIT, -MASK_LOGIT, &mut mask_logits, pixels);
    }
    let gt_masks = DenseTensor::new(vec![k, h, w], gt_masks)?;
    let mask_logits = DenseTensor::new(vec![k, h, w], mask_logits)?;

    // pixel owner: rectangles are disjoint by the cell construction
    let mut features = vec![0.0; pixels * d];
    for (ki, rect) in rects.iter().enumerate() {
        let proto = &prototypes[gt_labels[ki]];
        for y in rect.y0..rect.y1 {
            for x in rect.x0..rect.x1 {
                let base = (y * w + x) * d;
                features[base..base + d].copy_from_slice(proto);
            }
        }
    }
    if spec.noise > 0.0 {
        for f in features.iter_mut() {
            *f += spec.noise * rng.normal();
        }
    }
    let features = DenseTensor::new(vec![h, w, d], features)?;

    let mut queries = Vec::with_capacity(k * d);
    for &label in &gt_labels {
        queries.extend_from_slice(&query_prototypes[label]);
    }
    if spec.noise > 0.0 {
        for q in queries.iter_mut() {
            *q += spec.noise * rng.normal();
        }
    }
    let query_embeddings =
        crate::tensor::l2_normalize(&DenseTensor::new(vec![k, d], queries)?)?;

    let iou_scores: Vec<f64> = (0..k)
        .map(|ki| {
            let pred: Vec<f64> = mask_logits
                .plane(ki)
                .iter()
                .map(|&v| if v > 0.0 { 1.0 } else { 0.0 })
                .collect();
            metrics::mask_iou_slices(&pred, gt_masks.plane(ki))
        })
        .collect();

    Ok(SceneParts {
        features,
        mask_logits,
        query_embeddings,
        iou_scores,
        gt_labels,
        gt_masks,
    })
}

/// Generate a deterministic scene whose training set contains every
/// predicting category (so the domain similarity is exactly 1 whenever
/// `training_categories >= predicting_categories`).
pub fn generate_scene(spec: &FixtureSpec) -> Result<SceneBundle> {
    spec.validate()?;
    let mut rng = SceneRng::seed_from(spec.seed);
    let (m, n, d) = (
        spec.predicting_categories,
        spec.training_categories,
        spec.embed_dim,
    );

    let prototypes = orthonormal_rows(&mut rng, m, d)?;
    let training_rows: Vec<Vec<f64>> = if n <= m {
        prototypes[..n].to_vec()
    } else {
        let mut rows = prototypes.clone();
        for _ in m..n {
            rows.push(rng.unit_vector(d));
        }
        rows
    };

    let predicting = ConceptSet::new(
        category_names(m),
        DenseTensor::from_rows(&prototypes)?,
        thing_flags(m),
        ConceptRole::Predicting,
    )?;
    let mut training_names = category_names(m.min(n));
    for i in m.min(n)..n {
        training_names.push(format!("train{i:03}"));
    }
    let training = ConceptSet::new(
        training_names,
        DenseTensor::from_rows(&training_rows)?,
        thing_flags(n),
        ConceptRole::Training,
    )?;

    let parts = build_scene_parts(&mut rng, spec, &prototypes, &prototypes)?;
    let gt = GroundTruthSet::new(parts.gt_masks, parts.gt_labels.clone(), m)?;
    Ok(SceneBundle {
        spec: *spec,
        features: parts.features,
        mask_logits: parts.mask_logits,
        query_embeddings: parts.query_embeddings,
        iou_scores: parts.iou_scores,
        gt_labels: parts.gt_labels,
        gt,
        training,
        predicting,
    })
}

/// Cosine placed between each held-out prototype and its nearest training
/// prototype.
pub const NOVEL_SIMILARITY: f64 = 0.6;

/// Split the vocabulary for seen/unseen experiments: the predicting set
/// keeps a shared prefix of the training categories and replaces the held
/// out fraction with novel prototypes whose best training similarity is
/// exactly [`NOVEL_SIMILARITY`].
pub fn generate_unseen_split(
    spec: &FixtureSpec,
    holdout_fraction: f64,
) -> Result<(ConceptSet, ConceptSet)> {
    let (training, predicting, _) = unseen_split_internal(
        &mut SceneRng::seed_from(spec.seed),
        spec,
        holdout_fraction,
    )?;
    Ok((training, predicting))
}

type SplitParts = (ConceptSet, ConceptSet, Vec<Vec<f64>>);

fn unseen_split_internal(
    rng: &mut SceneRng,
    spec: &FixtureSpec,
    holdout_fraction: f64,
) -> Result<SplitParts> {
    spec.validate()?;
    if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
        return Err(Error::InvalidSpec {
            reason: format!("holdout fraction {holdout_fraction} outside (0, 1)"),
        });
    }
    let (m, n, d) = (
        spec.predicting_categories,
        spec.training_categories,
        spec.embed_dim,
    );
    if m < 2 {
        return Err(Error::InvalidSpec {
            reason: "need at least 2 predicting categories to hold some out".into(),
        });
    }
    let novel = ((m as f64 * holdout_fraction).round() as usize).clamp(1, m - 1);
    let shared = m - novel;
    if shared > n {
        return Err(Error::InvalidSpec {
            reason: format!("shared prefix {shared} exceeds training size {n}"),
        });
    }
    if n + novel > d {
        return Err(Error::InvalidSpec {
            reason: format!(
                "embed_dim {d} too small for {n} training + {novel} novel orthonormal directions"
            ),
        });
    }

    let family = orthonormal_rows(rng, n + novel, d)?;
    let training_rows = family[..n].to_vec();
    let mut predicting_rows = family[..shared].to_vec();
    let sin = (1.0 - NOVEL_SIMILARITY * NOVEL_SIMILARITY).sqrt();
    for v in 0..novel {
        let base = &family[v % n];
        let fresh = &family[n + v];
        predicting_rows.push(
            base.iter()
                .zip(fresh)
                .map(|(&b, &f)| NOVEL_SIMILARITY * b + sin * f)
                .collect(),
        );
    }

    let training = ConceptSet::new(
        category_names(n),
        DenseTensor::from_rows(&training_rows)?,
        thing_flags(n),
        ConceptRole::Training,
    )?;
    let mut predicting_names = category_names(shared);
    for v in 0..novel {
        predicting_names.push(format!("novel{v:03}"));
    }
    let predicting = ConceptSet::new(
        predicting_names,
        DenseTensor::from_rows(&predicting_rows)?,
        thing_flags(m),
        ConceptRole::Predicting,
    )?;
    Ok((training, predicting, predicting_rows))
}

/// Blend of nearest-training direction and true prototype used for the
/// query embeddings of held-out categories: in-domain queries know the
/// training vocabulary well and novel concepts only faintly.
pub const NOVEL_QUERY_BLEND: f64 = 0.8;

/// Generate a scene over an unseen split: ground truth spans seen and novel
/// categories, query embeddings for novel categories lean toward their
/// nearest training concept, and pooled features carry the true prototypes.
pub fn generate_open_scene(spec: &FixtureSpec, holdout_fraction: f64) -> Result<SceneBundle> {
    let mut rng = SceneRng::seed_from(spec.seed);
    let (training, predicting, predicting_rows) =
        unseen_split_internal(&mut rng, spec, holdout_fraction)?;
    let m = spec.predicting_categories;
    let shared = predicting
        .names()
        .iter()
        .filter(|n| n.starts_with("cat"))
        .count();

    let query_prototypes: Vec<Vec<f64>> = (0..m)
        .map(|label| {
            if label < shared {
                predicting_rows[label].clone()
            } else {
                // nearest training prototype for novel category v is the one
                // it was blended from
                let v = label - shared;
                let base = training.embeddings().row(v % spec.training_categories);
                let own = &predicting_rows[label];
                let blended: Vec<f64> = base
                    .iter()
                    .zip(own)
                    .map(|(&b, &o)| NOVEL_QUERY_BLEND * b + (1.0 - NOVEL_QUERY_BLEND) * o)
                    .collect();
                let norm: f64 = blended.iter().map(|x| x * x).sum::<f64>().sqrt();
                blended.into_iter().map(|x| x / norm).collect()
            }
        })
        .collect();

    let parts = build_scene_parts(&mut rng, spec, &predicting_rows, &query_prototypes)?;
    let gt = GroundTruthSet::new(parts.gt_masks, parts.gt_labels.clone(), m)?;
    Ok(SceneBundle {
        spec: *spec,
        features: parts.features,
        mask_logits: parts.mask_logits,
        query_embeddings: parts.query_embeddings,
        iou_scores: parts.iou_scores,
        gt_labels: parts.gt_labels,
        gt,
        training,
        predicting,
    })
}

/// A multi-scene dataset sharing one vocabulary.
#[derive(Debug, Clone)]
pub struct DatasetBundle {
    pub training: ConceptSet,
    pub predicting: ConceptSet,
    pub scenes: Vec<SceneBundle>,
}

/// Generate `scenes` scenes over a single pair of concept sets. Prototypes
/// (and the unseen split, when `holdout_fraction` is set) come from
/// `spec.seed`; scene `i` draws its geometry and noise from the derived
/// seed `spec.seed + 1 + i`, so scenes can be produced independently.
pub fn generate_dataset(
    spec: &FixtureSpec,
    scenes: usize,
    holdout_fraction: Option<f64>,
) -> Result<DatasetBundle> {
    spec.validate()?;
    if scenes == 0 {
        return Err(Error::InvalidSpec {
            reason: "dataset needs at least one scene".into(),
        });
    }
    let mut rng = SceneRng::seed_from(spec.seed);
    let m = spec.predicting_categories;
    let (training, predicting, predicting_rows, query_prototypes) = match holdout_fraction {
        None => {
            let single = generate_scene(spec)?;
            let rows: Vec<Vec<f64>> = (0..m)
                .map(|i| single.predicting.embeddings().row(i).to_vec())
                .collect();
            (single.training, single.predicting, rows.clone(), rows)
        }
        Some(fraction) => {
            let (training, predicting, rows) = unseen_split_internal(&mut rng, spec, fraction)?;
            let shared = predicting
                .names()
                .iter()
                .filter(|n| n.starts_with("cat"))
                .count();
            let query_prototypes: Vec<Vec<f64>> = (0..m)
                .map(|label| {
                    if label < shared {
                        rows[label].clone()
                    } else {
                        let v = label - shared;
                        let base = training.embeddings().row(v % spec.training_categories);
                        let own = &rows[label];
                        let blended: Vec<f64> = base
                            .iter()
                            .zip(own)
                            .map(|(&b, &o)| {
                                NOVEL_QUERY_BLEND * b + (1.0 - NOVEL_QUERY_BLEND) * o
                            })
                            .collect();
                        let norm: f64 = blended.iter().map(|x| x * x).sum::<f64>().sqrt();
                        blended.into_iter().map(|x| x / norm).collect()
                    }
                })
                .collect();
            (training, predicting, rows, query_prototypes)
        }
    };

    let mut bundles = Vec::with_capacity(scenes);
    for i in 0..scenes {
        let scene_spec = FixtureSpec {
            seed: spec.seed + 1 + i as u64,
            ..*spec
        };
        let mut scene_rng = SceneRng::seed_from(scene_spec.seed);
        let parts =
            build_scene_parts(&mut scene_rng, &scene_spec, &predicting_rows, &query_prototypes)?;
        let gt = GroundTruthSet::new(parts.gt_masks, parts.gt_labels.clone(), m)?;
        bundles.push(SceneBundle {
            spec: scene_spec,
            features: parts.features,
            mask_logits: parts.mask_logits,
            query_embeddings: parts.query_embeddings,
            iou_scores: parts.iou_scores,
            gt_labels: parts.gt_labels,
            gt,
            training: training.clone(),
            predicting: predicting.clone(),
        });
    }
    Ok(DatasetBundle {
        training,
        predicting,
        scenes: bundles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapter::{mask_pool, spatial_project, AdapterWeights, SpatialFeatureMap};
    use crate::concepts::build_similarity_profile;
    use crate::tensor::sigmoid_map;

    fn base_spec() -> FixtureSpec {
        FixtureSpec {
            seed: 5,
            height: 48,
            width: 48,
            proposals: 4,
            embed_dim: 12,
            predicting_categories: 4,
            training_categories: 4,
            noise: 0.0,
            jitter: 0,
        }
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let a = generate_scene(&base_spec()).unwrap();
        let b = generate_scene(&base_spec()).unwrap();
        assert_eq!(a.features.data(), b.features.data());
        assert_eq!(a.mask_logits.data(), b.mask_logits.data());
        assert_eq!(a.query_embeddings.data(), b.query_embeddings.data());
        assert_eq!(a.iou_scores, b.iou_scores);
        assert_eq!(a.gt_labels, b.gt_labels);
    }

    #[test]
    fn zero_jitter_gives_unit_iou_scores() {
        let scene = generate_scene(&base_spec()).unwrap();
        for &iou in &scene.iou_scores {
            assert_eq!(iou, 1.0);
        }
    }

    #[test]
    fn jitter_lowers_iou_but_keeps_scores_true() {
        let spec = FixtureSpec {
            jitter: 2,
            ..base_spec()
        };
        let scene = generate_scene(&spec).unwrap();
        for (k, &iou) in scene.iou_scores.iter().enumerate() {
            assert!(iou > 0.0 && iou <= 1.0);
            // recompute from the masks
            let pred: Vec<f64> = scene
                .mask_logits
                .plane(k)
                .iter()
                .map(|&v| if v > 0.0 { 1.0 } else { 0.0 })
                .collect();
            let again = crate::metrics::mask_iou_slices(&pred, scene.gt.mask(k));
            assert_eq!(iou, again);
        }
    }

    #[test]
    fn zero_noise_pooling_recovers_prototypes() {
        let scene = generate_scene(&base_spec()).unwrap();
        let map = SpatialFeatureMap::new(scene.features.clone(), None).unwrap();
        let projected = spatial_project(&map, &AdapterWeights::identity(12)).unwrap();
        let pooled = mask_pool(&projected, &sigmoid_map(&scene.mask_logits)).unwrap();
        for (k, &label) in scene.gt_labels.iter().enumerate() {
            let proto = scene.predicting.embeddings().row(label);
            let cos: f64 = pooled.row(k).iter().zip(proto).map(|(a, b)| a * b).sum();
            assert!((cos - 1.0).abs() < 1e-6, "proposal {k} cosine {cos}");
        }
    }

    #[test]
    fn identical_sets_give_unit_domain_similarity() {
        let scene = generate_scene(&base_spec()).unwrap();
        let profile = build_similarity_profile(&scene.predicting, &scene.training).unwrap();
        assert!((profile.domain_similarity() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn bigger_training_set_keeps_predicting_covered() {
        let spec = FixtureSpec {
            training_categories: 7,
            ..base_spec()
        };
        let scene = generate_scene(&spec).unwrap();
        assert_eq!(scene.training.len(), 7);
        let profile = build_similarity_profile(&scene.predicting, &scene.training).unwrap();
        assert!((profile.domain_similarity() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut spec = base_spec();
        spec.noise = 1.5;
        assert!(matches!(
            generate_scene(&spec),
            Err(Error::InvalidSpec { .. })
        ));

        let mut spec = base_spec();
        spec.embed_dim = 2;
        assert!(matches!(
            generate_scene(&spec),
            Err(Error::InvalidSpec { .. })
        ));

        let mut spec = base_spec();
        spec.height = 6;
        spec.jitter = 3;
        assert!(matches!(
            generate_scene(&spec),
            Err(Error::InvalidSpec { .. })
        ));
    }

    #[test]
    fn unseen_split_counts_and_similarities() {
        let spec = FixtureSpec {
            predicting_categories: 8,
            training_categories: 8,
            embed_dim: 16,
            ..base_spec()
        };
        let (training, predicting) = generate_unseen_split(&spec, 0.25).unwrap();
        assert_eq!(training.len(), 8);
        assert_eq!(predicting.len(), 8);
        let shared = predicting
            .names()
            .iter()
            .filter(|n| n.starts_with("cat"))
            .count();
        assert_eq!(shared, 6);

        let profile = build_similarity_profile(&predicting, &training).unwrap();
        for (i, &pcm) in profile.per_category_max().iter().enumerate() {
            if i < shared {
                assert!((pcm - 1.0).abs() < 1e-9, "shared category {i}: {pcm}");
            } else {
                assert!(pcm < 1.0, "novel category {i} should sit below 1: {pcm}");
                assert!((pcm - NOVEL_SIMILARITY).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn unseen_split_rejects_boundary_fractions() {
        let spec = FixtureSpec {
            predicting_categories: 8,
            training_categories: 8,
            embed_dim: 16,
            ..base_spec()
        };
        assert!(matches!(
            generate_unseen_split(&spec, 0.0),
            Err(Error::InvalidSpec { .. })
        ));
        assert!(matches!(
            generate_unseen_split(&spec, 1.0),
            Err(Error::InvalidSpec { .. })
        ));
    }

    #[test]
    fn dataset_scenes_share_one_vocabulary_but_differ_in_geometry() {
        let spec = FixtureSpec {
            seed: 21,
            ..base_spec()
        };
        let dataset = generate_dataset(&spec, 3, None).unwrap();
        assert_eq!(dataset.scenes.len(), 3);
        for scene in &dataset.scenes {
            assert_eq!(
                scene.predicting.embeddings().data(),
                dataset.predicting.embeddings().data()
            );
        }
        // geometry differs between scenes
        assert_ne!(
            dataset.scenes[0].gt.masks().data(),
            dataset.scenes[1].gt.masks().data()
        );
        // scene generation is independent of the batch: scene 1 regenerates
        // alone from its derived seed
        let again = generate_dataset(&spec, 2, None).unwrap();
        assert_eq!(
            dataset.scenes[1].features.data(),
            again.scenes[1].features.data()
        );
    }

    #[test]
    fn open_scene_is_deterministic_and_labeled_across_the_split() {
        let spec = FixtureSpec {
            proposals: 8,
            predicting_categories: 8,
            training_categories: 8,
            embed_dim: 20,
            noise: 0.1,
            jitter: 1,
            height: 64,
            width: 64,
            seed: 9,
        };
        let a = generate_open_scene(&spec, 0.25).unwrap();
        let b = generate_open_scene(&spec, 0.25).unwrap();
        assert_eq!(a.features.data(), b.features.data());
        // every category appears once: 6 seen + 2 novel
        assert_eq!(a.gt_labels, (0..8).collect::<Vec<_>>());
        let novel: Vec<&String> = a
            .predicting
            .names()
            .iter()
            .filter(|n| n.starts_with("novel"))
            .collect();
        assert_eq!(novel.len(), 2);
    }
}
