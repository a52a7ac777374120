//! End-to-end pipeline composition on synthetic scenes, without the CLI.

use ovps_core::adapter::{mask_pool, spatial_project, AdapterWeights, SpatialFeatureMap};
use ovps_core::concepts::build_similarity_profile;
use ovps_core::fixtures::{generate_open_scene, generate_scene, FixtureSpec, SceneBundle};
use ovps_core::inference::{
    filter_proposals, panoptic_merge, semantic_merge, MergeParams, ScoredProposal, ScoringMode,
};
use ovps_core::metrics::{mean_iou, panoptic_quality};
use ovps_core::modulation::{modulate, EmbeddingBundle, ModulationParams};
use ovps_core::tensor::sigmoid_map;
use ovps_core::DenseTensor;

fn classify_scene(scene: &SceneBundle, params: &ModulationParams) -> EmbeddingBundle {
    let dim = scene.spec.embed_dim;
    let map = SpatialFeatureMap::new(scene.features.clone(), None).unwrap();
    let projected = spatial_project(&map, &AdapterWeights::identity(dim)).unwrap();
    let clip = mask_pool(&projected, &sigmoid_map(&scene.mask_logits)).unwrap();
    let profile = build_similarity_profile(&scene.predicting, &scene.training).unwrap();
    modulate(
        &scene.query_embeddings,
        &clip,
        scene.predicting.embeddings(),
        profile.per_category_max(),
        profile.domain_similarity(),
        params,
    )
    .unwrap()
}

fn scene_proposals(scene: &SceneBundle, bundle: &EmbeddingBundle) -> Vec<ScoredProposal> {
    let (h, w) = (scene.spec.height, scene.spec.width);
    (0..scene.spec.proposals)
        .map(|k| {
            let mask =
                DenseTensor::new(vec![h, w], scene.mask_logits.plane(k).to_vec()).unwrap();
            ScoredProposal::new(
                mask,
                bundle.probs.row(k).to_vec(),
                scene.iou_scores[k],
                bundle.labels[k],
                ScoringMode::ClsTimesIou,
            )
            .unwrap()
        })
        .collect()
}

#[test]
fn zero_noise_scene_classifies_and_merges_perfectly() {
    let spec = FixtureSpec {
        seed: 3,
        height: 64,
        width: 64,
        proposals: 6,
        embed_dim: 16,
        predicting_categories: 6,
        training_categories: 6,
        noise: 0.0,
        jitter: 0,
    };
    let scene = generate_scene(&spec).unwrap();
    let bundle = classify_scene(&scene, &ModulationParams::default());
    assert_eq!(bundle.labels, scene.gt_labels);

    let proposals = scene_proposals(&scene, &bundle);
    let kept = filter_proposals(&proposals, 0.3);
    assert_eq!(kept.len(), 6);
    let merged =
        panoptic_merge(&kept, scene.predicting.thing_flags(), &MergeParams::default()).unwrap();
    let gt = scene.gt_panoptic(true);
    let report = panoptic_quality(&merged, &gt, 6, scene.predicting.thing_flags()).unwrap();
    assert!((report.pq - 1.0).abs() < 1e-9, "pq {}", report.pq);

    let sem_report = mean_iou(&semantic_merge(&merged), &semantic_merge(&gt), 6).unwrap();
    assert!((sem_report.miou - 1.0).abs() < 1e-9);
}

#[test]
fn noisy_scene_stays_reasonable() {
    let spec = FixtureSpec {
        seed: 17,
        height: 64,
        width: 64,
        proposals: 8,
        embed_dim: 16,
        predicting_categories: 8,
        training_categories: 8,
        noise: 0.2,
        jitter: 1,
    };
    let scene = generate_scene(&spec).unwrap();
    let bundle = classify_scene(&scene, &ModulationParams::default());
    let correct = bundle
        .labels
        .iter()
        .zip(&scene.gt_labels)
        .filter(|(a, b)| a == b)
        .count();
    assert!(correct >= 6, "only {correct}/8 proposals labeled correctly");

    let proposals = scene_proposals(&scene, &bundle);
    let kept = filter_proposals(&proposals, 0.3);
    assert!(!kept.is_empty());
    let merged =
        panoptic_merge(&kept, scene.predicting.thing_flags(), &MergeParams::default()).unwrap();
    let gt = scene.gt_panoptic(true);
    let report = panoptic_quality(&merged, &gt, 8, scene.predicting.thing_flags()).unwrap();
    assert!(report.pq > 0.5, "pq {}", report.pq);
}

#[test]
fn debiasing_lifts_novel_categories_on_open_scenes() {
    let spec = FixtureSpec {
        seed: 41,
        height: 64,
        width: 64,
        proposals: 8,
        embed_dim: 20,
        predicting_categories: 8,
        training_categories: 8,
        noise: 0.2,
        jitter: 1,
    };
    let scene = generate_open_scene(&spec, 0.25).unwrap();
    let shared = scene
        .predicting
        .names()
        .iter()
        .filter(|n| n.starts_with("cat"))
        .count();
    assert_eq!(shared, 6);

    let novel_recall = |beta: f64| {
        let params = ModulationParams {
            beta,
            ..Default::default()
        };
        let bundle = classify_scene(&scene, &params);
        let mut hit = 0usize;
        let mut total = 0usize;
        for (k, &truth) in scene.gt_labels.iter().enumerate() {
            if truth >= shared {
                total += 1;
                hit += usize::from(bundle.labels[k] == truth);
            }
        }
        (hit, total)
    };
    let (hit0, total) = novel_recall(0.0);
    let (hit5, total5) = novel_recall(0.5);
    assert_eq!(total, total5);
    assert!(total > 0);
    assert!(hit5 >= hit0);
}

#[test]
fn rerunning_merge_on_its_own_segments_is_stable() {
    let spec = FixtureSpec {
        seed: 29,
        height: 64,
        width: 64,
        proposals: 5,
        embed_dim: 12,
        predicting_categories: 5,
        training_categories: 5,
        noise: 0.1,
        jitter: 1,
    };
    let scene = generate_scene(&spec).unwrap();
    let bundle = classify_scene(&scene, &ModulationParams::default());
    let proposals = scene_proposals(&scene, &bundle);
    let kept = filter_proposals(&proposals, 0.3);
    let params = MergeParams::default();
    let first = panoptic_merge(&kept, scene.predicting.thing_flags(), &params).unwrap();

    let reproposals: Vec<ScoredProposal> = first
        .segments()
        .iter()
        .map(|seg| {
            let data: Vec<f64> = first
                .segment_map()
                .iter()
                .map(|&id| if id == seg.id { 20.0 } else { -20.0 })
                .collect();
            let mask = DenseTensor::new(vec![64, 64], data).unwrap();
            let mut probs = vec![0.0; scene.predicting.len()];
            probs[seg.category] = 1.0;
            ScoredProposal::new(mask, probs, 1.0, seg.category, ScoringMode::ClsTimesIou).unwrap()
        })
        .collect();
    let second = panoptic_merge(&reproposals, scene.predicting.thing_flags(), &params).unwrap();
    assert_eq!(semantic_merge(&first), semantic_merge(&second));
}
