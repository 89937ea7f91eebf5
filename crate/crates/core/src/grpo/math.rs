//! Rewards, advantage normalization, the two training objectives, and their
//! exact analytic gradients.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{point_in_box, BBox, Point};
use crate::types::Perspective;

use super::policy::{ToyPolicy, N_PERSPECTIVES};
use super::scene::SyntheticScene;
use super::GrpoError;

/// Log-ratios are clamped to this magnitude before exponentiation; every
/// clamp is counted, silent clamping is not allowed.
pub const LOG_RATIO_CLAMP: f64 = 30.0;

/// Binary reward for the discrete environment: 1 iff the chosen cell is the
/// target cell.
pub fn reward_cell(chosen_cell: usize, target_cell: usize) -> f64 {
    (chosen_cell == target_cell) as u32 as f64
}

/// Binary reward for the continuous variant: 1 iff the point lies within
/// the target box (boundary inclusive).
pub fn reward_point(p: Point, gt: BBox) -> f64 {
    point_in_box(p, gt) as u32 as f64
}

/// One sampled (perspective, cell) action with its log-probabilities under
/// the sampling-time and current policies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub perspective_choice: usize,
    pub cell_choice: usize,
    pub logprob_old: f64,
    pub logprob_new: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutGroup {
    pub rollouts: Vec<Rollout>,
    pub advantages: Vec<f64>,
}

impl RolloutGroup {
    pub fn mean_reward(&self) -> f64 {
        self.rollouts.iter().map(|r| r.reward).sum::<f64>() / self.rollouts.len() as f64
    }

    /// True when every rollout earned the same reward.
    pub fn zero_variance(&self) -> bool {
        self.advantages.iter().all(|&a| a == 0.0)
    }
}

/// Z-score normalization with the population standard deviation. A group
/// with zero reward variance gets all-zero advantages.
pub fn normalize_advantages(rewards: &[f64]) -> Result<Vec<f64>, GrpoError> {
    let g = rewards.len();
    if g < 2 {
        return Err(GrpoError::GroupTooSmall(g));
    }
    let mean = rewards.iter().sum::<f64>() / g as f64;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / g as f64;
    if var == 0.0 {
        return Ok(vec![0.0; g]);
    }
    let std = var.sqrt();
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}

/// A loss value plus the number of log-ratio clamps it took to compute.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossStat {
    pub value: f64,
    pub clamp_count: usize,
}

fn clamped_ratio(logprob_new: f64, logprob_old: f64) -> (f64, bool) {
    let log_ratio = logprob_new - logprob_old;
    if log_ratio.abs() > LOG_RATIO_CLAMP {
        (log_ratio.clamp(-LOG_RATIO_CLAMP, LOG_RATIO_CLAMP).exp(), true)
    } else {
        (log_ratio.exp(), false)
    }
}

/// Ratio-weighted group loss: `L = -(1/G) sum_i exp(lp_new_i - lp_old_i) *
/// A_i`. No clipping, no KL term.
pub fn grpo_loss(group: &RolloutGroup) -> Result<LossStat, GrpoError> {
    let g = group.rollouts.len();
    if g < 2 {
        return Err(GrpoError::GroupTooSmall(g));
    }
    let mut sum = 0.0;
    let mut clamp_count = 0usize;
    for (r, &adv) in group.rollouts.iter().zip(&group.advantages) {
        let (ratio, clamped) = clamped_ratio(r.logprob_new, r.logprob_old);
        if clamped {
            clamp_count += 1;
        }
        sum += ratio * adv;
    }
    let value = -sum / g as f64;
    if !value.is_finite() {
        return Err(GrpoError::NonFiniteLoss);
    }
    Ok(LossStat { value, clamp_count })
}

/// One supervised example in the toy environment, detached from its scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SftItem {
    pub context: Vec<f64>,
    /// Features of the reasoning perspective.
    pub features: Vec<f64>,
    pub reasoning_perspective: usize,
    pub target_cell: usize,
}

impl SftItem {
    pub fn from_scene(
        scene: &SyntheticScene,
        instruction_perspective: Perspective,
        reasoning_perspective: Perspective,
    ) -> Self {
        let rp = reasoning_perspective.augmented_index().expect("augmented perspective");
        SftItem {
            context: scene.features(instruction_perspective).to_vec(),
            features: scene.features(reasoning_perspective).to_vec(),
            reasoning_perspective: rp,
            target_cell: scene.target_cell(),
        }
    }
}

/// A rollout group together with the context and per-perspective features
/// it was sampled under.
#[derive(Debug, Clone, PartialEq)]
pub struct GrpoItem {
    pub context: Vec<f64>,
    pub features: [Vec<f64>; N_PERSPECTIVES],
    pub group: RolloutGroup,
}

impl GrpoItem {
    pub fn from_scene(
        scene: &SyntheticScene,
        instruction_perspective: Perspective,
        group: RolloutGroup,
    ) -> Self {
        GrpoItem {
            context: scene.features(instruction_perspective).to_vec(),
            features: Perspective::AUGMENTED.map(|p| scene.features(p).to_vec()),
            group,
        }
    }
}

/// A batch for one of the two objectives.
#[derive(Debug, Clone)]
pub enum ObjectiveBatch {
    Sft(Vec<SftItem>),
    Grpo(Vec<GrpoItem>),
}

/// Negative log-likelihood of the (reasoning perspective, cell) target pair.
pub fn sft_loss(policy: &ToyPolicy, item: &SftItem) -> f64 {
    let p = policy.perspective_probs(&item.context)[item.reasoning_perspective];
    let q = policy.cell_probs(item.reasoning_perspective, &item.features)[item.target_cell];
    -(p.ln() + q.ln())
}

/// Mean objective value over a batch, recomputing GRPO log-probabilities
/// under the given policy. This is the scalar that `policy_grad`
/// differentiates, so finite differences of this function check it.
pub fn batch_loss(policy: &ToyPolicy, batch: &ObjectiveBatch) -> f64 {
    match batch {
        ObjectiveBatch::Sft(items) => {
            items.iter().map(|i| sft_loss(policy, i)).sum::<f64>() / items.len() as f64
        }
        ObjectiveBatch::Grpo(items) => {
            let mut total = 0.0;
            for item in items {
                let g = item.group.rollouts.len() as f64;
                let mut sum = 0.0;
                for (r, &adv) in item.group.rollouts.iter().zip(&item.group.advantages) {
                    let lp_new = policy.logprob(
                        &item.context,
                        &item.features[r.perspective_choice],
                        r.perspective_choice,
                        r.cell_choice,
                    );
                    let (ratio, _) = clamped_ratio(lp_new, r.logprob_old);
                    sum += ratio * adv;
                }
                total += -sum / g;
            }
            total / items.len() as f64
        }
    }
}

/// Gradient tensors with the same shapes as the policy parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GradTensors {
    pub theta_persp: Vec<Vec<f64>>,
    pub theta_cell: Vec<Vec<Vec<f64>>>,
    /// Log-ratio clamps hit while computing a GRPO gradient.
    pub clamp_count: usize,
}

impl GradTensors {
    fn zeros_like(policy: &ToyPolicy) -> Self {
        GradTensors {
            theta_persp: policy.theta_persp.iter().map(|r| vec![0.0; r.len()]).collect(),
            theta_cell: policy
                .theta_cell
                .iter()
                .map(|m| m.iter().map(|r| vec![0.0; r.len()]).collect())
                .collect(),
            clamp_count: 0,
        }
    }

    pub fn max_abs(&self) -> f64 {
        let a = self.theta_persp.iter().flatten().fold(0.0f64, |m, &v| m.max(v.abs()));
        let b = self.theta_cell.iter().flatten().flatten().fold(0.0f64, |m, &v| m.max(v.abs()));
        a.max(b)
    }
}

/// Exact analytic gradient of [`batch_loss`] with respect to both parameter
/// tensors. A clamped ratio is treated as a constant, so its rollout
/// contributes no gradient.
pub fn policy_grad(policy: &ToyPolicy, batch: &ObjectiveBatch) -> GradTensors {
    let mut grad = GradTensors::zeros_like(policy);
    match batch {
        ObjectiveBatch::Sft(items) => {
            let scale = 1.0 / items.len() as f64;
            for item in items {
                let p = policy.perspective_probs(&item.context);
                for (d, &x) in item.context.iter().enumerate() {
                    if x == 0.0 {
                        continue;
                    }
                    for k in 0..N_PERSPECTIVES {
                        let indicator = (k == item.reasoning_perspective) as u32 as f64;
                        grad.theta_persp[d][k] += scale * x * (p[k] - indicator);
                    }
                }
                let q = policy.cell_probs(item.reasoning_perspective, &item.features);
                let m = &mut grad.theta_cell[item.reasoning_perspective];
                for (d, &f) in item.features.iter().enumerate() {
                    if f == 0.0 {
                        continue;
                    }
                    for (c, &qc) in q.iter().enumerate() {
                        let indicator = (c == item.target_cell) as u32 as f64;
                        m[d][c] += scale * f * (qc - indicator);
                    }
                }
            }
        }
        ObjectiveBatch::Grpo(items) => {
            let scale = 1.0 / items.len() as f64;
            for item in items {
                let g = item.group.rollouts.len() as f64;
                let p = policy.perspective_probs(&item.context);
                for (r, &adv) in item.group.rollouts.iter().zip(&item.group.advantages) {
                    if adv == 0.0 {
                        continue;
                    }
                    let features = &item.features[r.perspective_choice];
                    let q = policy.cell_probs(r.perspective_choice, features);
                    let lp_new =
                        p[r.perspective_choice].ln() + q[r.cell_choice].ln();
                    let (ratio, clamped) = clamped_ratio(lp_new, r.logprob_old);
                    if clamped {
                        grad.clamp_count += 1;
                        continue;
                    }
                    // d(-ratio*adv)/dtheta = -ratio*adv * d lp_new/dtheta.
                    let w = -scale * ratio * adv / g;
                    for (d, &x) in item.context.iter().enumerate() {
                        if x == 0.0 {
                            continue;
                        }
                        for k in 0..N_PERSPECTIVES {
                            let indicator = (k == r.perspective_choice) as u32 as f64;
                            grad.theta_persp[d][k] += w * x * (indicator - p[k]);
                        }
                    }
                    let m = &mut grad.theta_cell[r.perspective_choice];
                    for (d, &f) in features.iter().enumerate() {
                        if f == 0.0 {
                            continue;
                        }
                        for (c, &qc) in q.iter().enumerate() {
                            let indicator = (c == r.cell_choice) as u32 as f64;
                            m[d][c] += w * f * (indicator - qc);
                        }
                    }
                }
            }
        }
    }
    grad
}

/// Central finite differences of an arbitrary scalar over the policy
/// parameters. Slow; for gradient checking only.
pub fn finite_difference_grad(
    f: impl Fn(&ToyPolicy) -> f64,
    policy: &ToyPolicy,
    h: f64,
) -> GradTensors {
    let mut grad = GradTensors::zeros_like(policy);
    let mut work = policy.clone();
    for d in 0..policy.theta_persp.len() {
        for k in 0..policy.theta_persp[d].len() {
            work.theta_persp[d][k] = policy.theta_persp[d][k] + h;
            let hi = f(&work);
            work.theta_persp[d][k] = policy.theta_persp[d][k] - h;
            let lo = f(&work);
            work.theta_persp[d][k] = policy.theta_persp[d][k];
            grad.theta_persp[d][k] = (hi - lo) / (2.0 * h);
        }
    }
    for r in 0..policy.theta_cell.len() {
        for d in 0..policy.theta_cell[r].len() {
            for c in 0..policy.theta_cell[r][d].len() {
                work.theta_cell[r][d][c] = policy.theta_cell[r][d][c] + h;
                let hi = f(&work);
                work.theta_cell[r][d][c] = policy.theta_cell[r][d][c] - h;
                let lo = f(&work);
                work.theta_cell[r][d][c] = policy.theta_cell[r][d][c];
                grad.theta_cell[r][d][c] = (hi - lo) / (2.0 * h);
            }
        }
    }
    grad
}

/// Samples `g` independent rollouts from the current policy for one scene
/// and instruction perspective, recording sampling-time log-probabilities
/// and normalized advantages.
pub fn sample_rollouts(
    policy: &ToyPolicy,
    scene: &SyntheticScene,
    instruction_perspective: Perspective,
    g: usize,
    rng: &mut impl Rng,
) -> Result<RolloutGroup, GrpoError> {
    if g < 2 {
        return Err(GrpoError::GroupTooSmall(g));
    }
    let ctx = scene.features(instruction_perspective);
    let target = scene.target_cell();
    let mut rollouts = Vec::with_capacity(g);
    for _ in 0..g {
        let (perspective, cell) =
            policy.sample(ctx, |k| scene.features(Perspective::AUGMENTED[k]), rng);
        let lp = policy.logprob(ctx, scene.features(Perspective::AUGMENTED[perspective]), perspective, cell);
        rollouts.push(Rollout {
            perspective_choice: perspective,
            cell_choice: cell,
            logprob_old: lp,
            logprob_new: lp,
            reward: reward_cell(cell, target),
        });
    }
    let advantages = normalize_advantages(&rollouts.iter().map(|r| r.reward).collect::<Vec<_>>())?;
    Ok(RolloutGroup { rollouts, advantages })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grpo::scene::{gen_scenes, AmbiguityProfile, SceneConfig};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn test_scene() -> SyntheticScene {
        gen_scenes(
            &SceneConfig {
                n_scenes: 1,
                grid_w: 4,
                grid_h: 4,
                profile: AmbiguityProfile::UniqueAppearanceOnly,
            },
            5,
        )
        .unwrap()
        .remove(0)
    }

    fn random_policy(n_cells: usize, seed: u64) -> ToyPolicy {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ToyPolicy::uniform(n_cells);
        for row in &mut p.theta_persp {
            for w in row {
                *w = rand::Rng::gen_range(&mut rng, -1.0..1.0);
            }
        }
        for m in &mut p.theta_cell {
            for row in m {
                for w in row {
                    *w = rand::Rng::gen_range(&mut rng, -1.0..1.0);
                }
            }
        }
        p
    }

    #[test]
    fn half_split_advantages() {
        let adv = normalize_advantages(&[1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(adv, vec![1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0]);
    }

    #[test]
    fn single_winner_advantages_match_oracle() {
        let adv = normalize_advantages(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        let expected = [1.732_050_8, -0.577_350_3, -0.577_350_3, -0.577_350_3];
        for (a, e) in adv.iter().zip(expected) {
            assert!((a - e).abs() < 1e-6);
        }
    }

    #[test]
    fn degenerate_group_is_all_zero() {
        assert_eq!(normalize_advantages(&[1.0; 4]).unwrap(), vec![0.0; 4]);
        assert_eq!(normalize_advantages(&[0.0; 4]).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn small_group_errors() {
        assert!(matches!(normalize_advantages(&[1.0]), Err(GrpoError::GroupTooSmall(1))));
    }

    proptest! {
        #[test]
        fn advantages_are_standardized_and_shift_scale_invariant(
            rewards in proptest::collection::vec(0.0..10.0f64, 2..20),
            a in 0.1..5.0f64,
            b in -3.0..3.0f64,
        ) {
            let adv = normalize_advantages(&rewards).unwrap();
            let g = adv.len() as f64;
            let mean: f64 = adv.iter().sum::<f64>() / g;
            prop_assert!(mean.abs() <= 1e-12);
            let transformed: Vec<f64> = rewards.iter().map(|r| a * r + b).collect();
            let adv2 = normalize_advantages(&transformed).unwrap();
            for (x, y) in adv.iter().zip(&adv2) {
                prop_assert!((x - y).abs() < 1e-9);
            }
            if adv.iter().any(|&v| v != 0.0) {
                let std = (adv.iter().map(|v| v * v).sum::<f64>() / g).sqrt();
                prop_assert!((std - 1.0).abs() <= 1e-9);
            }
        }
    }

    fn group(pairs: &[(f64, f64, f64)]) -> RolloutGroup {
        // (logprob_old, logprob_new, advantage); rewards unused by the loss.
        RolloutGroup {
            rollouts: pairs
                .iter()
                .map(|&(lp_old, lp_new, _)| Rollout {
                    perspective_choice: 0,
                    cell_choice: 0,
                    logprob_old: lp_old,
                    logprob_new: lp_new,
                    reward: 0.0,
                })
                .collect(),
            advantages: pairs.iter().map(|&(_, _, a)| a).collect(),
        }
    }

    #[test]
    fn zero_advantages_zero_loss() {
        let g = group(&[(-1.0, -0.5, 0.0), (-2.0, -2.5, 0.0)]);
        assert_eq!(grpo_loss(&g).unwrap().value, 0.0);
    }

    #[test]
    fn unit_ratio_loss_is_zero_for_mean_zero_advantages() {
        let adv = normalize_advantages(&[1.0, 1.0, 0.0, 0.0]).unwrap();
        let pairs: Vec<(f64, f64, f64)> = adv.iter().map(|&a| (-1.3, -1.3, a)).collect();
        let stat = grpo_loss(&group(&pairs)).unwrap();
        assert!(stat.value.abs() < 1e-12);
        assert_eq!(stat.clamp_count, 0);
    }

    #[test]
    fn hand_computed_two_rollout_loss() {
        // Ratios [2.0, 1.0], advantages [+1, -1]: L = -(2 - 1)/2 = -0.5.
        let g = group(&[(-1.0, -1.0 + 2.0f64.ln(), 1.0), (-1.0, -1.0, -1.0)]);
        let stat = grpo_loss(&g).unwrap();
        assert!((stat.value - (-0.5)).abs() < 1e-12);
    }

    #[test]
    fn runaway_log_ratio_is_clamped_and_counted() {
        let g = group(&[(-100.0, -1.0, 1.0), (-1.0, -1.0, -1.0)]);
        let stat = grpo_loss(&g).unwrap();
        assert_eq!(stat.clamp_count, 1);
        assert!(stat.value.is_finite());
        assert!((stat.value - -(LOG_RATIO_CLAMP.exp() - 1.0) / 2.0).abs() < 1e-3);
    }

    #[test]
    fn uniform_sft_loss_is_analytic() {
        let policy = ToyPolicy::uniform(16);
        let scene = test_scene();
        let item = SftItem::from_scene(&scene, Perspective::Appearance, Perspective::Goal);
        let loss = sft_loss(&policy, &item);
        assert!((loss - (4.0f64.ln() + 16.0f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn peaked_policy_sft_loss_tends_to_zero() {
        let scene = test_scene();
        let item = SftItem::from_scene(&scene, Perspective::Appearance, Perspective::Appearance);
        let mut policy = ToyPolicy::uniform(16);
        for d in 0..16 {
            if item.context[d] != 0.0 {
                policy.theta_persp[d][item.reasoning_perspective] = 50.0;
            }
            if item.features[d] != 0.0 {
                policy.theta_cell[item.reasoning_perspective][d][item.target_cell] = 50.0;
            }
        }
        assert!(sft_loss(&policy, &item) < 1e-9);
    }

    #[test]
    fn sft_loss_matches_independent_oracle() {
        // Literal sum of two categorical NLLs, computed from first
        // principles without the policy's own softmax helpers.
        let policy = random_policy(16, 7);
        let scene = test_scene();
        let item = SftItem::from_scene(&scene, Perspective::Spatial, Perspective::Function);
        let nll = |logits: &[f64], idx: usize| -> f64 {
            let z: f64 = logits.iter().map(|l| l.exp()).sum();
            -(logits[idx].exp() / z).ln()
        };
        let mut persp_logits = vec![0.0; 4];
        for d in 0..16 {
            for k in 0..4 {
                persp_logits[k] += item.context[d] * policy.theta_persp[d][k];
            }
        }
        let mut cell_logits = vec![0.0; 16];
        for d in 0..16 {
            for c in 0..16 {
                cell_logits[c] += item.features[d] * policy.theta_cell[item.reasoning_perspective][d][c];
            }
        }
        let oracle = nll(&persp_logits, item.reasoning_perspective) + nll(&cell_logits, item.target_cell);
        assert!((sft_loss(&policy, &item) - oracle).abs() < 1e-12);
    }

    #[test]
    fn uniform_sft_gradient_is_softmax_minus_onehot() {
        let policy = ToyPolicy::uniform(16);
        let scene = test_scene();
        let item = SftItem::from_scene(&scene, Perspective::Appearance, Perspective::Goal);
        let grad = policy_grad(&policy, &ObjectiveBatch::Sft(vec![item.clone()]));
        for d in 0..16 {
            for k in 0..4 {
                let indicator = (k == item.reasoning_perspective) as u32 as f64;
                let expected = item.context[d] * (0.25 - indicator);
                assert!((grad.theta_persp[d][k] - expected).abs() < 1e-12);
            }
        }
    }

    fn max_rel_error(analytic: &GradTensors, fd: &GradTensors) -> f64 {
        let mut worst = 0.0f64;
        let scale = analytic.max_abs().max(fd.max_abs()).max(1e-8);
        for (a, b) in analytic.theta_persp.iter().flatten().zip(fd.theta_persp.iter().flatten()) {
            worst = worst.max((a - b).abs() / scale);
        }
        for (a, b) in analytic
            .theta_cell
            .iter()
            .flatten()
            .flatten()
            .zip(fd.theta_cell.iter().flatten().flatten())
        {
            worst = worst.max((a - b).abs() / scale);
        }
        worst
    }

    #[test]
    fn gradients_match_finite_differences() {
        let scene = test_scene();
        for trial in 0..5u64 {
            let policy = random_policy(16, 100 + trial);
            let sft_batch = ObjectiveBatch::Sft(vec![
                SftItem::from_scene(&scene, Perspective::Appearance, Perspective::Goal),
                SftItem::from_scene(&scene, Perspective::Spatial, Perspective::Function),
            ]);
            let analytic = policy_grad(&policy, &sft_batch);
            let fd = finite_difference_grad(|p| batch_loss(p, &sft_batch), &policy, 1e-5);
            assert!(max_rel_error(&analytic, &fd) < 1e-5, "sft trial {trial}");

            let mut rng = ChaCha8Rng::seed_from_u64(200 + trial);
            let group = sample_rollouts(&policy, &scene, Perspective::Function, 8, &mut rng).unwrap();
            let grpo_batch =
                ObjectiveBatch::Grpo(vec![GrpoItem::from_scene(&scene, Perspective::Function, group)]);
            let analytic = policy_grad(&policy, &grpo_batch);
            let fd = finite_difference_grad(|p| batch_loss(p, &grpo_batch), &policy, 1e-5);
            assert!(max_rel_error(&analytic, &fd) < 1e-5, "grpo trial {trial}");
        }
    }

    #[test]
    fn zero_advantage_batch_has_zero_gradient() {
        let policy = random_policy(16, 3);
        let scene = test_scene();
        let rollouts: Vec<Rollout> = (0..4)
            .map(|i| Rollout {
                perspective_choice: i % 4,
                cell_choice: i,
                logprob_old: -2.0,
                logprob_new: -2.0,
                reward: 1.0,
            })
            .collect();
        let group = RolloutGroup { advantages: vec![0.0; 4], rollouts };
        let batch = ObjectiveBatch::Grpo(vec![GrpoItem::from_scene(&scene, Perspective::Goal, group)]);
        let grad = policy_grad(&policy, &batch);
        assert_eq!(grad.max_abs(), 0.0);
    }

    #[test]
    fn one_step_improvement_signs() {
        let policy = ToyPolicy::uniform(16);
        let scene = test_scene();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let group = loop {
            let g = sample_rollouts(&policy, &scene, Perspective::Appearance, 8, &mut rng).unwrap();
            if !g.zero_variance() {
                break g;
            }
        };
        let item = GrpoItem::from_scene(&scene, Perspective::Appearance, group.clone());
        let grad = policy_grad(&policy, &ObjectiveBatch::Grpo(vec![item.clone()]));
        let lr = 1e-3;
        let mut updated = policy.clone();
        for d in 0..16 {
            for k in 0..4 {
                updated.theta_persp[d][k] -= lr * grad.theta_persp[d][k];
            }
            for r in 0..4 {
                for c in 0..16 {
                    updated.theta_cell[r][d][c] -= lr * grad.theta_cell[r][d][c];
                }
            }
        }
        for (r, &adv) in group.rollouts.iter().zip(&group.advantages) {
            if adv == 0.0 {
                continue;
            }
            let before = policy.logprob(
                &item.context,
                &item.features[r.perspective_choice],
                r.perspective_choice,
                r.cell_choice,
            );
            let after = updated.logprob(
                &item.context,
                &item.features[r.perspective_choice],
                r.perspective_choice,
                r.cell_choice,
            );
            if adv > 0.0 {
                assert!(after > before, "positive-advantage rollout should gain probability");
            } else {
                assert!(after < before, "negative-advantage rollout should lose probability");
            }
        }
    }

    #[test]
    fn deterministic_policy_collapse_signature() {
        let scene = test_scene();
        let mut policy = ToyPolicy::uniform(16);
        // One-hot logits: always perspective 2, always cell 5.
        for d in 0..16 {
            policy.theta_persp[d][2] = 60.0;
            policy.theta_cell[2][d][5] = 60.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let group = sample_rollouts(&policy, &scene, Perspective::Spatial, 8, &mut rng).unwrap();
        let first = group.rollouts[0];
        assert!(group.rollouts.iter().all(|r| r.perspective_choice == first.perspective_choice
            && r.cell_choice == first.cell_choice));
        assert!(group.zero_variance());
    }

    #[test]
    fn seeded_rollouts_are_reproducible() {
        let scene = test_scene();
        let policy = random_policy(16, 9);
        let mut a = ChaCha8Rng::seed_from_u64(4);
        let mut b = ChaCha8Rng::seed_from_u64(4);
        let ga = sample_rollouts(&policy, &scene, Perspective::Goal, 8, &mut a).unwrap();
        let gb = sample_rollouts(&policy, &scene, Perspective::Goal, 8, &mut b).unwrap();
        assert_eq!(ga, gb);
    }

    #[test]
    fn rollout_perspective_frequencies_match_softmax() {
        let scene = test_scene();
        let policy = random_policy(16, 21);
        let ctx = scene.features(Perspective::Function);
        let probs = policy.perspective_probs(ctx);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut counts = [0usize; 4];
        let n_groups = 1250;
        for _ in 0..n_groups {
            let g = sample_rollouts(&policy, &scene, Perspective::Function, 8, &mut rng).unwrap();
            for r in &g.rollouts {
                counts[r.perspective_choice] += 1;
            }
        }
        let n = (n_groups * 8) as f64;
        for k in 0..4 {
            let sigma = (n * probs[k] * (1.0 - probs[k])).sqrt();
            let dev = (counts[k] as f64 - n * probs[k]).abs();
            assert!(dev <= 3.0 * sigma, "perspective {k}: dev {dev:.1} > 3 sigma");
        }
    }

    #[test]
    fn cell_reward_equals_point_in_box_on_cell_geometry() {
        // Cells as unit boxes: choosing cell c is choosing the center point
        // of box c; the discrete reward must agree with point_in_box.
        let scene = test_scene();
        let target = scene.target_cell();
        for chosen in 0..scene.n_cells() {
            let (col, row) = (chosen % 4, chosen / 4);
            let center = Point::new(col as f64 + 0.5, row as f64 + 0.5);
            let (t_col, t_row) = (target % 4, target / 4);
            let target_box =
                BBox::new(t_col as f64, t_row as f64, t_col as f64 + 1.0, t_row as f64 + 1.0);
            assert_eq!(reward_cell(chosen, target), reward_point(center, target_box));
        }
    }

    #[test]
    fn continuous_reward_fixture() {
        assert_eq!(reward_point(Point::new(588.0, 67.0), BBox::new(560.0, 50.0, 620.0, 85.0)), 1.0);
    }
}
