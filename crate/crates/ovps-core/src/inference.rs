//! From scored proposals to final outputs: score-based filtering, argmax
//! merging into a non-overlapping segment map, semantic recoloring, and
//! coarse-to-fine category paths over a concept tree.

use crate::concepts::CategoryTree;
use crate::error::{Error, Result};
use crate::tensor::{sigmoid, DenseTensor};
use serde::{Deserialize, Serialize};

/// How a proposal's ranking score is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScoringMode {
    /// Classification probability only.
    Cls,
    /// Predicted mask IoU only.
    Iou,
    /// Product of the two.
    #[default]
    ClsTimesIou,
}

/// A classified proposal carrying its mask logits and ranking score.
#[derive(Debug, Clone)]
pub struct ScoredProposal {
    pub mask_logits: DenseTensor,
    pub class_probs: Vec<f64>,
    pub iou_score: f64,
    pub label: usize,
    pub score: f64,
}

impl ScoredProposal {
    /// Build a proposal, deriving `score` from the scoring mode; the default
    /// mode multiplies the label's class probability by the IoU estimate.
    pub fn new(
        mask_logits: DenseTensor,
        class_probs: Vec<f64>,
        iou_score: f64,
        label: usize,
        mode: ScoringMode,
    ) -> Result<Self> {
        mask_logits.expect_rank(2, "proposal mask")?;
        if label >= class_probs.len() {
            return Err(Error::IndexOutOfRange {
                index: label,
                len: class_probs.len(),
            });
        }
        let cls = class_probs[label];
        let score = match mode {
            ScoringMode::Cls => cls,
            ScoringMode::Iou => iou_score,
            ScoringMode::ClsTimesIou => cls * iou_score,
        };
        Ok(Self {
            mask_logits,
            class_probs,
            iou_score,
            label,
            score,
        })
    }
}

/// One row of the segment table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentInfo {
    pub id: u32,
    pub category: usize,
    pub is_thing: bool,
    pub score: f64,
    pub area: usize,
}

/// Pixel-wise segment-id map (0 = void) with its segment table. Segments
/// are disjoint by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct PanopticResult {
    height: usize,
    width: usize,
    segment_map: Vec<u32>,
    segments: Vec<SegmentInfo>,
}

impl PanopticResult {
    pub fn new(
        height: usize,
        width: usize,
        segment_map: Vec<u32>,
        segments: Vec<SegmentInfo>,
    ) -> Result<Self> {
        if segment_map.len() != height * width {
            return Err(Error::ShapeMismatch {
                context: "panoptic segment map".into(),
                expected: format!("{} pixels", height * width),
                actual: format!("{}", segment_map.len()),
            });
        }
        let ids: std::collections::BTreeSet<u32> = segments.iter().map(|s| s.id).collect();
        if ids.len() != segments.len() || ids.contains(&0) {
            return Err(Error::InvalidShape {
                shape: vec![segments.len()],
                reason: "segment ids must be unique and nonzero".into(),
            });
        }
        if let Some(&bad) = segment_map.iter().find(|&&v| v != 0 && !ids.contains(&v)) {
            return Err(Error::IndexOutOfRange {
                index: bad as usize,
                len: segments.len(),
            });
        }
        Ok(Self {
            height,
            width,
            segment_map,
            segments,
        })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            segment_map: vec![0; height * width],
            segments: Vec::new(),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Row-major segment ids, 0 for void.
    pub fn segment_map(&self) -> &[u32] {
        &self.segment_map
    }

    pub fn segments(&self) -> &[SegmentInfo] {
        &self.segments
    }

    pub fn segment(&self, id: u32) -> Option<&SegmentInfo> {
        self.segments.iter().find(|s| s.id == id)
    }
}

/// Parameters of the argmax merge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeParams {
    /// Sigmoid(mask logit) must reach this for a proposal to claim a pixel.
    pub mask_bin_threshold: f64,
    /// Segments below this surviving pixel count are dropped.
    pub min_area: usize,
    /// Segments keeping less than this fraction of their binarized mask are
    /// dropped.
    pub min_overlap_frac: f64,
    /// Collapse same-category stuff segments into one.
    pub merge_stuff: bool,
}

impl Default for MergeParams {
    fn default() -> Self {
        Self {
            mask_bin_threshold: 0.5,
            min_area: 16,
            min_overlap_frac: 0.8,
            merge_stuff: true,
        }
    }
}

/// Indices of the proposals kept by [`filter_proposals`], in output order:
/// descending score, ties by original index.
pub fn filter_proposal_indices(proposals: &[ScoredProposal], score_threshold: f64) -> Vec<usize> {
    let mut kept: Vec<usize> = (0..proposals.len())
        .filter(|&i| proposals[i].score >= score_threshold)
        .collect();
    kept.sort_by(|&a, &b| {
        proposals[b]
            .score
            .partial_cmp(&proposals[a].score)
            .expect("finite scores")
            .then(a.cmp(&b))
    });
    kept
}

/// Keep proposals whose score clears the threshold, sorted by descending
/// score with ties kept in input order.
pub fn filter_proposals(proposals: &[ScoredProposal], score_threshold: f64) -> Vec<ScoredProposal> {
    filter_proposal_indices(proposals, score_threshold)
        .into_iter()
        .map(|i| proposals[i].clone())
        .collect()
}

/// Merge kept proposals into a disjoint segment map.
///
/// Each pixel goes to the proposal maximizing `score * sigmoid(logit)`
/// among those whose sigmoid clears `mask_bin_threshold` (ties to the
/// earliest proposal), else void. Segments that end up smaller than
/// `min_area` pixels, or keep less than `min_overlap_frac` of their
/// binarized mask, are deleted. Same-category stuff segments merge into one
/// when `merge_stuff` is set.
pub fn panoptic_merge(
    kept: &[ScoredProposal],
    thing_flags: &[bool],
    params: &MergeParams,
) -> Result<PanopticResult> {
    let Some(first) = kept.first() else {
        return Ok(PanopticResult::empty(0, 0));
    };
    let (h, w) = (first.mask_logits.shape()[0], first.mask_logits.shape()[1]);
    for p in kept {
        if p.mask_logits.shape() != [h, w] {
            return Err(Error::ShapeMismatch {
                context: "panoptic_merge".into(),
                expected: format!("{h} x {w}"),
                actual: format!("{:?}", p.mask_logits.shape()),
            });
        }
        if p.label >= thing_flags.len() {
            return Err(Error::IndexOutOfRange {
                index: p.label,
                len: thing_flags.len(),
            });
        }
    }

    // per-pixel argmax of score-weighted mask confidence
    let mut owner: Vec<Option<usize>> = vec![None; h * w];
    let mut best_val = vec![f64::NEG_INFINITY; h * w];
    let mut bin_area = vec![0usize; kept.len()];
    for (pi, proposal) in kept.iter().enumerate() {
        for (pix, &logit) in proposal.mask_logits.data().iter().enumerate() {
            let prob = sigmoid(logit);
            if prob < params.mask_bin_threshold {
                continue;
            }
            bin_area[pi] += 1;
            let val = proposal.score * prob;
            if val > best_val[pix] {
                best_val[pix] = val;
                owner[pix] = Some(pi);
            }
        }
    }

    let mut survived = vec![0usize; kept.len()];
    for o in owner.iter().flatten() {
        survived[*o] += 1;
    }

    // overlap and area pruning
    let mut alive = vec![false; kept.len()];
    for pi in 0..kept.len() {
        let enough_area = survived[pi] >= params.min_area;
        let enough_overlap =
            bin_area[pi] > 0 && survived[pi] as f64 >= params.min_overlap_frac * bin_area[pi] as f64;
        alive[pi] = enough_area && enough_overlap;
    }

    // stuff segments of one category share a single output id
    let mut id_of = vec![0u32; kept.len()];
    let mut stuff_id: std::collections::BTreeMap<usize, u32> = std::collections::BTreeMap::new();
    let mut segments: Vec<SegmentInfo> = Vec::new();
    let mut next_id = 1u32;
    for (pi, proposal) in kept.iter().enumerate() {
        if !alive[pi] {
            continue;
        }
        let is_thing = thing_flags[proposal.label];
        if !is_thing && params.merge_stuff {
            if let Some(&existing) = stuff_id.get(&proposal.label) {
                id_of[pi] = existing;
                let seg = segments
                    .iter_mut()
                    .find(|s| s.id == existing)
                    .expect("stuff id registered");
                seg.area += survived[pi];
                seg.score = seg.score.max(proposal.score);
                continue;
            }
            stuff_id.insert(proposal.label, next_id);
        }
        id_of[pi] = next_id;
        segments.push(SegmentInfo {
            id: next_id,
            category: proposal.label,
            is_thing,
            score: proposal.score,
            area: survived[pi],
        });
        next_id += 1;
    }

    let segment_map: Vec<u32> = owner
        .iter()
        .map(|o| match o {
            Some(pi) if alive[*pi] => id_of[*pi],
            _ => 0,
        })
        .collect();

    // areas after pruning: dead proposals free their pixels to void, which
    // cannot resurrect anyone, but merged stuff areas were summed above
    let mut result = PanopticResult::new(h, w, segment_map, segments)?;
    let mut recount: std::collections::BTreeMap<u32, usize> = std::collections::BTreeMap::new();
    for &id in &result.segment_map {
        if id != 0 {
            *recount.entry(id).or_default() += 1;
        }
    }
    result.segments.retain(|s| recount.contains_key(&s.id));
    for seg in &mut result.segments {
        seg.area = recount[&seg.id];
    }
    Ok(result)
}

/// Void label in semantic maps.
pub const SEMANTIC_VOID: i32 = -1;

/// Recolor a panoptic result by category: each pixel takes its segment's
/// category index, void stays the sentinel.
pub fn semantic_merge(pan: &PanopticResult) -> Vec<i32> {
    let lookup: std::collections::BTreeMap<u32, i32> = pan
        .segments()
        .iter()
        .map(|s| (s.id, s.category as i32))
        .collect();
    pan.segment_map()
        .iter()
        .map(|&id| if id == 0 { SEMANTIC_VOID } else { lookup[&id] })
        .collect()
}

/// Walk a category tree from the root, descending to the child with maximal
/// cosine similarity to the embedding at every level (ties to the lowest
/// node id), and return the root-to-leaf name path. A synthetic root is
/// excluded from the path.
pub fn hierarchical_classify(embedding: &[f64], tree: &CategoryTree) -> Result<Vec<String>> {
    tree.validate()?;
    let mut path = Vec::new();
    let root = tree.node(tree.root()).ok_or(Error::EmptyTree)?;
    if !tree.root_is_synthetic() {
        path.push(root.name.clone());
    }
    let mut current = root;
    while !current.children.is_empty() {
        let mut best_id = None;
        let mut best_sim = f64::NEG_INFINITY;
        for &child_id in &current.children {
            let child = tree.node(child_id).ok_or(Error::IndexOutOfRange {
                index: child_id as usize,
                len: tree.nodes().len(),
            })?;
            let sim: f64 = child
                .embedding
                .iter()
                .zip(embedding)
                .map(|(a, b)| a * b)
                .sum();
            // strict improvement keeps the lowest id on ties because
            // children ids are sorted ascending
            if sim > best_sim {
                best_sim = sim;
                best_id = Some(child_id);
            }
        }
        let chosen = best_id.expect("non-empty children");
        current = tree.node(chosen).expect("validated child");
        path.push(current.name.clone());
    }
    Ok(path)
}
