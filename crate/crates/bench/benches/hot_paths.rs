use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

use groundkit_core::eval::parse_response;
use groundkit_core::geometry::{iou, point_in_box, BBox, Point};
use groundkit_core::grpo::{
    gen_scenes, normalize_advantages, policy_grad, sample_rollouts, AmbiguityProfile, GrpoItem,
    ObjectiveBatch, SceneConfig, ToyPolicy,
};
use groundkit_core::types::Perspective;

fn bench_geometry(c: &mut Criterion) {
    let a = BBox::new(0.0, 0.0, 100.0, 100.0);
    let b = BBox::new(50.0, 50.0, 150.0, 150.0);
    c.bench_function("iou", |bench| bench.iter(|| iou(black_box(a), black_box(b))));

    let p = Point::new(75.0, 60.0);
    c.bench_function("point_in_box", |bench| {
        bench.iter(|| point_in_box(black_box(p), black_box(a)))
    });
}

fn bench_normalize_advantages(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rewards: Vec<f64> =
        (0..8).map(|_| if rand::Rng::gen_bool(&mut rng, 0.4) { 1.0 } else { 0.0 }).collect();
    c.bench_function("normalize_advantages_g8", |bench| {
        bench.iter(|| normalize_advantages(black_box(&rewards)).unwrap())
    });
}

fn bench_policy_grad(c: &mut Criterion) {
    let scenes = gen_scenes(
        &SceneConfig {
            n_scenes: 16,
            grid_w: 4,
            grid_h: 4,
            profile: AmbiguityProfile::UniqueAppearanceOnly,
        },
        5,
    )
    .unwrap();
    let policy = ToyPolicy::uniform(16);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let items: Vec<GrpoItem> = scenes
        .iter()
        .map(|scene| {
            let group =
                sample_rollouts(&policy, scene, Perspective::Appearance, 8, &mut rng).unwrap();
            GrpoItem::from_scene(scene, Perspective::Appearance, group)
        })
        .collect();
    let batch = ObjectiveBatch::Grpo(items);
    c.bench_function("policy_grad_grpo_batch16_g8", |bench| {
        bench.iter(|| policy_grad(black_box(&policy), black_box(&batch)))
    });
}

fn bench_parse_response(c: &mut Criterion) {
    let raw = "The element is the red 'C' icon near the top right.\n\
        <tool_call>\n\
        {\"name\": \"computer_use\", \"arguments\": {\"action\": \"left_click\", \"coordinate\": [588, 67]}}\n\
        </tool_call>";
    c.bench_function("parse_response", |bench| bench.iter(|| parse_response(black_box(raw))));
}

criterion_group!(
    benches,
    bench_geometry,
    bench_normalize_advantages,
    bench_policy_grad,
    bench_parse_response
);
criterion_main!(benches);
