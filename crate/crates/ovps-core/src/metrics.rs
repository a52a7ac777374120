//! Evaluation harness: mask IoU, the panoptic quality family, semantic
//! mIoU, and pairwise similarity statistics of concept embeddings.
//!
//! Per-image accumulation is a sum of integer counts and IoU totals, so
//! images can be reduced in any order; the final division happens once in
//! [`PqAccumulator::report`].

use crate::error::{Error, Result};
use crate::inference::{PanopticResult, SEMANTIC_VOID};
use crate::tensor::DenseTensor;
use serde::Serialize;
use std::collections::BTreeMap;

/// IoU of two binary masks given as slices; 0 when both are empty.
pub(crate) fn mask_iou_slices(a: &[f64], b: &[f64]) -> f64 {
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x != 0.0, y != 0.0);
        inter += usize::from(x && y);
        union += usize::from(x || y);
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// IoU of two binary H x W masks; defined as 0 when both masks are empty.
pub fn mask_iou(a: &DenseTensor, b: &DenseTensor) -> Result<f64> {
    a.expect_rank(2, "mask_iou lhs")?;
    b.expect_rank(2, "mask_iou rhs")?;
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            context: "mask_iou".into(),
            expected: format!("{:?}", a.shape()),
            actual: format!("{:?}", b.shape()),
        });
    }
    Ok(mask_iou_slices(a.data(), b.data()))
}

/// Per-category panoptic counts.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct CategoryPqStat {
    pub category: usize,
    pub iou_sum: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_count: usize,
    pub pq: f64,
    pub sq: f64,
    pub rq: f64,
}

/// Panoptic quality report.
///
/// The headline `pq`, `sq`, `rq` values pool true positives, false
/// positives, false negatives and matched IoU across categories, so
/// `pq == sq * rq` holds exactly whenever any true positive exists. The
/// class-averaged variants (means over categories present in ground truth
/// or predictions) are reported alongside, as is the full per-category
/// breakdown.
#[derive(Debug, Clone, Serialize)]
pub struct PQReport {
    pub pq: f64,
    pub sq: f64,
    pub rq: f64,
    pub pq_things: f64,
    pub pq_stuff: f64,
    pub pq_class_avg: f64,
    pub sq_class_avg: f64,
    pub rq_class_avg: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_count: usize,
    pub per_category: Vec<CategoryPqStat>,
}

#[derive(Debug, Clone, Copy, Default)]
struct RawStat {
    iou_sum: f64,
    tp: usize,
    fp: usize,
    fn_count: usize,
}

impl RawStat {
    fn present(&self) -> bool {
        self.tp + self.fp + self.fn_count > 0
    }

    fn denom(&self) -> f64 {
        self.tp as f64 + 0.5 * self.fp as f64 + 0.5 * self.fn_count as f64
    }
}

fn pq_of(iou_sum: f64, tp: usize, denom: f64) -> (f64, f64, f64) {
    let pq = if denom > 0.0 { iou_sum / denom } else { 0.0 };
    let sq = if tp > 0 { iou_sum / tp as f64 } else { 0.0 };
    let rq = if denom > 0.0 { tp as f64 / denom } else { 0.0 };
    (pq, sq, rq)
}

/// Order-independent accumulator of panoptic statistics across images.
#[derive(Debug, Clone)]
pub struct PqAccumulator {
    stats: Vec<RawStat>,
}

impl PqAccumulator {
    pub fn new(num_categories: usize) -> Self {
        Self {
            stats: vec![RawStat::default(); num_categories],
        }
    }

    pub fn num_categories(&self) -> usize {
        self.stats.len()
    }

    /// Fold another accumulator in; addition is associative and
    /// commutative, so parallel per-image reduction is safe.
    pub fn merge(&mut self, other: &PqAccumulator) {
        assert_eq!(self.stats.len(), other.stats.len());
        for (a, b) in self.stats.iter_mut().zip(&other.stats) {
            a.iou_sum += b.iou_sum;
            a.tp += b.tp;
            a.fp += b.fp;
            a.fn_count += b.fn_count;
        }
    }

    /// Match one image's predicted segments against ground truth and add
    /// the counts. Segments match iff they share a category and their IoU
    /// strictly exceeds 0.5; pixels void in ground truth are excluded from
    /// the IoU denominator.
    pub fn accumulate(&mut self, pred: &PanopticResult, gt: &PanopticResult) -> Result<()> {
        if pred.height() != gt.height() || pred.width() != gt.width() {
            return Err(Error::ShapeMismatch {
                context: "panoptic_quality".into(),
                expected: format!("{} x {}", gt.height(), gt.width()),
                actual: format!("{} x {}", pred.height(), pred.width()),
            });
        }
        for seg in pred.segments().iter().chain(gt.segments()) {
            if seg.category >= self.stats.len() {
                return Err(Error::CategoryOutOfRange {
                    category: seg.category as i64,
                    num_categories: self.stats.len(),
                });
            }
        }

        // pixel overlap counts over (pred id, gt id), void included
        let mut overlap: BTreeMap<(u32, u32), usize> = BTreeMap::new();
        for (&p, &g) in pred.segment_map().iter().zip(gt.segment_map()) {
            *overlap.entry((p, g)).or_default() += 1;
        }
        let mut pred_area: BTreeMap<u32, usize> = BTreeMap::new();
        let mut gt_area: BTreeMap<u32, usize> = BTreeMap::new();
        for (&(p, g), &n) in &overlap {
            *pred_area.entry(p).or_default() += n;
            *gt_area.entry(g).or_default() += n;
        }

        let pred_cat: BTreeMap<u32, usize> = pred
            .segments()
            .iter()
            .filter(|s| pred_area.get(&s.id).copied().unwrap_or(0) > 0)
            .map(|s| (s.id, s.category))
            .collect();
        let gt_cat: BTreeMap<u32, usize> = gt
            .segments()
            .iter()
            .filter(|s| gt_area.get(&s.id).copied().unwrap_or(0) > 0)
            .map(|s| (s.id, s.category))
            .collect();

        // candidate matches above the strict IoU threshold
        let mut candidates: Vec<(f64, u32, u32)> = Vec::new();
        for (&(p, g), &inter) in &overlap {
            if p == 0 || g == 0 {
                continue;
            }
            let (Some(&pc), Some(&gc)) = (pred_cat.get(&p), gt_cat.get(&g)) else {
                continue;
            };
            if pc != gc {
                continue;
            }
            let void_inter = overlap.get(&(p, 0)).copied().unwrap_or(0);
            let union = pred_area[&p] + gt_area[&g] - inter - void_inter;
            if union == 0 {
                continue;
            }
            let iou = inter as f64 / union as f64;
            if iou > 0.5 {
                candidates.push((iou, p, g));
            }
        }
        candidates.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .expect("finite IoU")
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });

        let mut pred_matched: BTreeMap<u32, bool> = BTreeMap::new();
        let mut gt_matched: BTreeMap<u32, bool> = BTreeMap::new();
        for (iou, p, g) in candidates {
            if pred_matched.contains_key(&p) || gt_matched.contains_key(&g) {
                continue;
            }
            pred_matched.insert(p, true);
            gt_matched.insert(g, true);
            let cat = pred_cat[&p];
            self.stats[cat].tp += 1;
            self.stats[cat].iou_sum += iou;
        }
        for (&id, &cat) in &pred_cat {
            if !pred_matched.contains_key(&id) {
                self.stats[cat].fp += 1;
            }
        }
        for (&id, &cat) in &gt_cat {
            if !gt_matched.contains_key(&id) {
                self.stats[cat].fn_count += 1;
            }
        }
        Ok(())
    }

    /// Final report; `thing_flags[c]` marks category `c` as a thing.
    pub fn report(&self, thing_flags: &[bool]) -> PQReport {
        let mut pooled = RawStat::default();
        let mut pooled_things = RawStat::default();
        let mut pooled_stuff = RawStat::default();
        let mut per_category = Vec::new();
        let mut macro_pq = 0.0;
        let mut macro_sq = 0.0;
        let mut macro_rq = 0.0;
        let mut present = 0usize;
        for (cat, stat) in self.stats.iter().enumerate() {
            if !stat.present() {
                continue;
            }
            present += 1;
            pooled.iou_sum += stat.iou_sum;
            pooled.tp += stat.tp;
            pooled.fp += stat.fp;
            pooled.fn_count += stat.fn_count;
            let bucket = if thing_flags.get(cat).copied().unwrap_or(true) {
                &mut pooled_things
            } else {
                &mut pooled_stuff
            };
            bucket.iou_sum += stat.iou_sum;
            bucket.tp += stat.tp;
            bucket.fp += stat.fp;
            bucket.fn_count += stat.fn_count;

            let (pq, sq, rq) = pq_of(stat.iou_sum, stat.tp, stat.denom());
            macro_pq += pq;
            macro_sq += sq;
            macro_rq += rq;
            per_category.push(CategoryPqStat {
                category: cat,
                iou_sum: stat.iou_sum,
                tp: stat.tp,
                fp: stat.fp,
                fn_count: stat.fn_count,
                pq,
                sq,
                rq,
            });
        }
        let (pq, sq, rq) = pq_of(pooled.iou_sum, pooled.tp, pooled.denom());
        let (pq_things, _, _) = pq_of(pooled_things.iou_sum, pooled_things.tp, pooled_things.denom());
        let (pq_stuff, _, _) = pq_of(pooled_stuff.iou_sum, pooled_stuff.tp, pooled_stuff.denom());
        let scale = if present > 0 { present as f64 } else { 1.0 };
        PQReport {
            pq,
            sq,
            rq,
            pq_things,
            pq_stuff,
            pq_class_avg: macro_pq / scale,
            sq_class_avg: macro_sq / scale,
            rq_class_avg: macro_rq / scale,
            tp: pooled.tp,
            fp: pooled.fp,
            fn_count: pooled.fn_count,
            per_category,
        }
    }
}

/// Panoptic quality of a single prediction/ground-truth pair.
pub fn panoptic_quality(
    pred: &PanopticResult,
    gt: &PanopticResult,
    num_categories: usize,
    thing_flags: &[bool],
) -> Result<PQReport> {
    let mut acc = PqAccumulator::new(num_categories);
    acc.accumulate(pred, gt)?;
    Ok(acc.report(thing_flags))
}

/// Semantic segmentation report.
#[derive(Debug, Clone, Serialize)]
pub struct MeanIouReport {
    pub miou: f64,
    /// IoU per class; `None` when the class appears in neither map.
    pub per_class: Vec<Option<f64>>,
}

/// Order-independent accumulator of semantic pixel counts across images.
#[derive(Debug, Clone)]
pub struct MeanIouAccumulator {
    inter: Vec<usize>,
    union: Vec<usize>,
    in_gt: Vec<bool>,
}

impl MeanIouAccumulator {
    pub fn new(num_categories: usize) -> Self {
        Self {
            inter: vec![0; num_categories],
            union: vec![0; num_categories],
            in_gt: vec![false; num_categories],
        }
    }

    pub fn merge(&mut self, other: &MeanIouAccumulator) {
        assert_eq!(self.inter.len(), other.inter.len());
        for c in 0..self.inter.len() {
            self.inter[c] += other.inter[c];
            self.union[c] += other.union[c];
            self.in_gt[c] |= other.in_gt[c];
        }
    }

    /// Add one image pair's pixel counts. Pixels void in ground truth are
    /// excluded entirely.
    pub fn accumulate(&mut self, pred_sem: &[i32], gt_sem: &[i32]) -> Result<()> {
        if pred_sem.len() != gt_sem.len() {
            return Err(Error::ShapeMismatch {
                context: "mean_iou".into(),
                expected: format!("{} pixels", gt_sem.len()),
                actual: format!("{}", pred_sem.len()),
            });
        }
        let num_categories = self.inter.len();
        let check = |v: i32| -> Result<()> {
            if v != SEMANTIC_VOID && (v < 0 || v as usize >= num_categories) {
                return Err(Error::CategoryOutOfRange {
                    category: v as i64,
                    num_categories,
                });
            }
            Ok(())
        };
        for (&p, &g) in pred_sem.iter().zip(gt_sem) {
            check(p)?;
            check(g)?;
            if g == SEMANTIC_VOID {
                continue;
            }
            let g = g as usize;
            self.in_gt[g] = true;
            self.union[g] += 1;
            if p == g as i32 {
                self.inter[g] += 1;
            } else if p != SEMANTIC_VOID {
                self.union[p as usize] += 1;
            }
        }
        Ok(())
    }

    pub fn report(&self) -> MeanIouReport {
        let num_categories = self.inter.len();
        let mut per_class = vec![None; num_categories];
        let mut total = 0.0;
        let mut counted = 0usize;
        for c in 0..num_categories {
            if self.union[c] > 0 {
                per_class[c] = Some(self.inter[c] as f64 / self.union[c] as f64);
            }
            if self.in_gt[c] {
                total += per_class[c].unwrap_or(0.0);
                counted += 1;
            }
        }
        let miou = if counted > 0 { total / counted as f64 } else { 0.0 };
        MeanIouReport { miou, per_class }
    }
}

/// Mean intersection-over-union between semantic label maps.
///
/// Pixels void in ground truth are excluded entirely; the mean runs over
/// classes present in ground truth.
pub fn mean_iou(pred_sem: &[i32], gt_sem: &[i32], num_categories: usize) -> Result<MeanIouReport> {
    let mut acc = MeanIouAccumulator::new(num_categories);
    acc.accumulate(pred_sem, gt_sem)?;
    Ok(acc.report())
}

/// Number of histogram bins over [-1, 1] at width 0.05.
pub const SIMILARITY_BINS: usize = 40;
/// Histogram bin width.
pub const SIMILARITY_BIN_WIDTH: f64 = 0.05;

/// Distribution summary of the pairwise cosine similarities among category
/// embeddings.
#[derive(Debug, Clone, Serialize)]
pub struct SimilarityStats {
    pub mu: f64,
    pub count: u64,
    pub histogram: Vec<u64>,
}

impl SimilarityStats {
    /// Lower edge of bin `i`.
    pub fn bin_low(i: usize) -> f64 {
        -1.0 + SIMILARITY_BIN_WIDTH * i as f64
    }
}

/// Mean and histogram of all unordered pairwise cosine similarities among
/// the rows of an embedding matrix.
pub fn similarity_stats(embeddings: &DenseTensor) -> Result<SimilarityStats> {
    embeddings.expect_rank(2, "similarity_stats")?;
    let m = embeddings.shape()[0];
    if m < 2 {
        return Err(Error::TooFewCategories { count: m });
    }
    let sims = crate::tensor::cosine_similarity_matrix(embeddings, embeddings)?;
    let mut histogram = vec![0u64; SIMILARITY_BINS];
    let mut total = 0.0;
    let mut count = 0u64;
    for i in 0..m {
        for j in i + 1..m {
            let v = sims.at2(i, j);
            total += v;
            count += 1;
            let bin = (((v + 1.0) / SIMILARITY_BIN_WIDTH) as usize).min(SIMILARITY_BINS - 1);
            histogram[bin] += 1;
        }
    }
    Ok(SimilarityStats {
        mu: total / count as f64,
        count,
        histogram,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::rng::SceneRng;
    use crate::inference::SegmentInfo;

    fn mask(h: usize, w: usize, pixels: &[usize]) -> DenseTensor {
        let mut data = vec![0.0; h * w];
        for &p in pixels {
            data[p] = 1.0;
        }
        DenseTensor::new(vec![h, w], data).unwrap()
    }

    #[test]
    fn mask_iou_hand_values() {
        let a = mask(2, 4, &[0, 1, 2, 3]);
        let b = mask(2, 4, &[4, 5, 6, 7]);
        assert_eq!(mask_iou(&a, &a).unwrap(), 1.0);
        assert_eq!(mask_iou(&a, &b).unwrap(), 0.0);
        let c = mask(2, 4, &[2, 3, 4, 5]);
        assert!((mask_iou(&a, &c).unwrap() - 2.0 / 6.0).abs() < 1e-12);
        // both empty: defined as zero
        let empty = mask(2, 4, &[]);
        assert_eq!(mask_iou(&empty, &empty).unwrap(), 0.0);
        // symmetry
        assert_eq!(mask_iou(&a, &c).unwrap(), mask_iou(&c, &a).unwrap());
    }

    fn single_segment_result(h: usize, w: usize, pixels: &[usize], cat: usize) -> PanopticResult {
        let mut map = vec![0u32; h * w];
        for &p in pixels {
            map[p] = 1;
        }
        PanopticResult::new(
            h,
            w,
            map,
            vec![SegmentInfo {
                id: 1,
                category: cat,
                is_thing: true,
                score: 1.0,
                area: pixels.len(),
            }],
        )
        .unwrap()
    }

    #[test]
    fn pq_identity_case() {
        let x = single_segment_result(4, 4, &[0, 1, 2, 3, 4], 2);
        let report = panoptic_quality(&x, &x, 5, &[true; 5]).unwrap();
        assert!((report.pq - 1.0).abs() < 1e-12);
        assert!((report.sq - 1.0).abs() < 1e-12);
        assert!((report.rq - 1.0).abs() < 1e-12);
        assert_eq!((report.tp, report.fp, report.fn_count), (1, 0, 0));
    }

    #[test]
    fn pq_tp_with_fn_hand_value() {
        // gt: two segments of category 0; pred: one segment with IoU 0.8
        let mut gt_map = vec![0u32; 40];
        for p in 0..10 {
            gt_map[p] = 1;
        }
        for p in 20..25 {
            gt_map[p] = 2;
        }
        let gt = PanopticResult::new(
            4,
            10,
            gt_map,
            vec![
                SegmentInfo { id: 1, category: 0, is_thing: true, score: 1.0, area: 10 },
                SegmentInfo { id: 2, category: 0, is_thing: true, score: 1.0, area: 5 },
            ],
        )
        .unwrap();
        let pred = single_segment_result(4, 10, &(0..8).collect::<Vec<_>>(), 0);
        let report = panoptic_quality(&pred, &gt, 1, &[true]).unwrap();
        assert!((report.pq - 0.5333).abs() < 1e-4);
        assert!((report.sq - 0.8).abs() < 1e-9);
        assert!((report.rq - 2.0 / 3.0).abs() < 1e-9);
        assert_eq!((report.tp, report.fp, report.fn_count), (1, 0, 1));
    }

    #[test]
    fn pq_boundary_iou_is_not_a_match() {
        // pred covers 5 of gt's 10 pixels: IoU exactly 0.5, strictly below
        // the match rule
        let gt = single_segment_result(4, 10, &(0..10).collect::<Vec<_>>(), 0);
        let pred = single_segment_result(4, 10, &(0..5).collect::<Vec<_>>(), 0);
        let report = panoptic_quality(&pred, &gt, 1, &[true]).unwrap();
        assert_eq!(report.pq, 0.0);
        assert_eq!((report.tp, report.fp, report.fn_count), (0, 1, 1));
    }

    #[test]
    fn pq_void_pixels_excluded_from_union() {
        // pred extends over gt void: 10 pred pixels, 6 overlap the gt
        // segment of area 6, the rest sit on void => IoU 6/6 = 1
        let gt = single_segment_result(4, 10, &(0..6).collect::<Vec<_>>(), 0);
        let pred = single_segment_result(4, 10, &(0..10).collect::<Vec<_>>(), 0);
        let report = panoptic_quality(&pred, &gt, 1, &[true]).unwrap();
        assert!((report.pq - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pq_equals_sq_times_rq_and_relabeling_invariance() {
        let mut rng = SceneRng::seed_from(99);
        for _ in 0..30 {
            let (h, w) = (12, 12);
            let cats = 4;
            let make = |rng: &mut SceneRng, id_base: u32| {
                let mut map = vec![0u32; h * w];
                let mut segs = Vec::new();
                let n = 1 + (rng.next_u64() % 4) as usize;
                for s in 0..n {
                    let id = id_base + s as u32;
                    let y0 = (rng.next_u64() % 8) as usize;
                    let x0 = (rng.next_u64() % 8) as usize;
                    let mut area = 0;
                    for y in y0..(y0 + 4).min(h) {
                        for x in x0..(x0 + 4).min(w) {
                            if map[y * w + x] == 0 {
                                map[y * w + x] = id;
                                area += 1;
                            }
                        }
                    }
                    if area > 0 {
                        segs.push(SegmentInfo {
                            id,
                            category: (rng.next_u64() % cats as u64) as usize,
                            is_thing: rng.uniform() > 0.4,
                            score: 1.0,
                            area,
                        });
                    }
                }
                PanopticResult::new(h, w, map, segs).unwrap()
            };
            let pred = make(&mut rng, 1);
            let gt = make(&mut rng, 1);
            let flags = [true, true, false, false];
            let report = panoptic_quality(&pred, &gt, cats, &flags).unwrap();
            if report.tp > 0 {
                assert!((report.pq - report.sq * report.rq).abs() < 1e-9);
            }
            for cat in &report.per_category {
                if cat.tp > 0 {
                    assert!((cat.pq - cat.sq * cat.rq).abs() < 1e-9);
                }
            }

            // bijective relabeling of prediction ids must not move anything
            let remap: Vec<u32> = pred.segment_map().iter().map(|&v| v * 7).collect();
            let resegs: Vec<SegmentInfo> = pred
                .segments()
                .iter()
                .map(|s| SegmentInfo {
                    id: s.id * 7,
                    ..s.clone()
                })
                .collect();
            let relabeled =
                PanopticResult::new(h, w, remap, resegs).unwrap();
            let report2 = panoptic_quality(&relabeled, &gt, cats, &flags).unwrap();
            assert_eq!(report.tp, report2.tp);
            assert!((report.pq - report2.pq).abs() < 1e-12);
        }
    }

    #[test]
    fn pq_splits_by_thing_flag() {
        let thing = single_segment_result(8, 8, &(0..20).collect::<Vec<_>>(), 0);
        let report = panoptic_quality(&thing, &thing, 2, &[true, false]).unwrap();
        assert!((report.pq_things - 1.0).abs() < 1e-12);
        assert_eq!(report.pq_stuff, 0.0);
    }

    #[test]
    fn miou_hand_values() {
        let gt = vec![0, 0, 1, 1];
        assert!((mean_iou(&gt, &gt, 2).unwrap().miou - 1.0).abs() < 1e-12);

        let flipped = vec![1, 1, 0, 0];
        assert_eq!(mean_iou(&flipped, &gt, 2).unwrap().miou, 0.0);

        // class 0: pred covers half of gt's 8 pixels and nothing else
        let gt = vec![0; 8];
        let pred = vec![0, 0, 0, 0, SEMANTIC_VOID, SEMANTIC_VOID, SEMANTIC_VOID, SEMANTIC_VOID];
        let report = mean_iou(&pred, &gt, 1).unwrap();
        assert!((report.miou - 0.5).abs() < 1e-12);
        assert_eq!(report.per_class[0], Some(0.5));
    }

    #[test]
    fn miou_ignores_gt_void_and_checks_range() {
        let gt = vec![SEMANTIC_VOID, 0, 0, SEMANTIC_VOID];
        let pred = vec![1, 0, 0, 1];
        // pred label 1 over void gt is not punished; class 1 absent from gt
        let report = mean_iou(&pred, &gt, 2).unwrap();
        assert!((report.miou - 1.0).abs() < 1e-12);

        assert!(matches!(
            mean_iou(&[5], &[0], 2),
            Err(Error::CategoryOutOfRange { .. })
        ));
        assert!(matches!(
            mean_iou(&[0, 0], &[0], 2),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    fn stats_of(rows: &[Vec<f64>]) -> SimilarityStats {
        similarity_stats(&DenseTensor::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn similarity_stats_hand_values() {
        let s = stats_of(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(s.count, 1);
        assert!(s.mu.abs() < 1e-12);

        let s = stats_of(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![1.0, 0.0]]);
        assert_eq!(s.count, 3);
        assert!((s.mu - 1.0).abs() < 1e-12);

        let s = stats_of(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.7071, 0.7071]]);
        assert_eq!(s.count, 3);
        assert!((s.mu - 0.4714).abs() < 1e-3);
    }

    #[test]
    fn similarity_stats_histogram_mass_and_mu_consistency() {
        let mut rng = SceneRng::seed_from(55);
        let rows: Vec<Vec<f64>> = (0..8).map(|_| rng.unit_vector(5)).collect();
        let s = stats_of(&rows);
        assert_eq!(s.count, 8 * 7 / 2);
        assert_eq!(s.histogram.iter().sum::<u64>(), s.count);
        // mu equals the histogram-weighted mean up to bin resolution
        let approx: f64 = s
            .histogram
            .iter()
            .enumerate()
            .map(|(i, &c)| (SimilarityStats::bin_low(i) + 0.025) * c as f64)
            .sum::<f64>()
            / s.count as f64;
        assert!((approx - s.mu).abs() < SIMILARITY_BIN_WIDTH);

        // permutation invariance
        let mut shuffled = rows.clone();
        shuffled.reverse();
        let s2 = stats_of(&shuffled);
        assert!((s.mu - s2.mu).abs() < 1e-12);
    }

    #[test]
    fn similarity_stats_rejects_single_row() {
        let err = similarity_stats(&DenseTensor::from_rows(&[vec![1.0, 0.0]]).unwrap());
        assert!(matches!(err, Err(Error::TooFewCategories { count: 1 })));
    }
}
