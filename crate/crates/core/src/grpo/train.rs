//! The two-stage toy training loop: supervised warm-up, then group-relative
//! policy optimization, with metrics logged along the way.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::types::Perspective;

use super::math::{
    policy_grad, sample_rollouts, GradTensors, GrpoItem, ObjectiveBatch, SftItem,
};
use super::policy::ToyPolicy;
use super::scene::SyntheticScene;
use super::GrpoError;

/// Training hyperparameters. `paper` records the published values for
/// reference; `toy` holds the defaults actually usable at this parameter
/// scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub g_rollouts: usize,
    pub lr_sft: f64,
    pub lr_rl: f64,
    pub batch_size: usize,
    /// Steps per enabled stage.
    pub steps: usize,
    pub seed: u64,
    pub entropy_logging: bool,
    /// Metrics are recorded every this many steps (and at stage ends).
    pub eval_interval: usize,
}

impl TrainConfig {
    /// Published full-scale hyperparameters, recorded for reference.
    pub fn paper() -> Self {
        TrainConfig {
            g_rollouts: 8,
            lr_sft: 5e-6,
            lr_rl: 1e-6,
            batch_size: 256,
            steps: 100,
            seed: 0,
            entropy_logging: true,
            eval_interval: 10,
        }
    }

    /// Desk-scale defaults sized for the toy policy's parameter magnitudes.
    pub fn toy() -> Self {
        TrainConfig {
            g_rollouts: 8,
            lr_sft: 5.0,
            lr_rl: 2.0,
            batch_size: 32,
            steps: 200,
            seed: 0,
            entropy_logging: true,
            eval_interval: 10,
        }
    }

    pub fn validate(&self) -> Result<(), GrpoError> {
        if self.g_rollouts < 2 {
            return Err(GrpoError::ConfigError("g_rollouts must be >= 2".into()));
        }
        if self.lr_sft <= 0.0 || self.lr_rl <= 0.0 {
            return Err(GrpoError::ConfigError("learning rates must be > 0".into()));
        }
        if self.batch_size == 0 || self.steps == 0 || self.eval_interval == 0 {
            return Err(GrpoError::ConfigError("batch_size, steps, eval_interval must be > 0".into()));
        }
        Ok(())
    }
}

/// Supervised warm-up variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SftRegime {
    /// Reasoning perspective drawn distinct from the instruction
    /// perspective, so the perspective head stays diverse.
    Diverse,
    /// Cells supervised under one fixed dummy perspective.
    CoordsOnly,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RlRegime {
    Rl,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Regime {
    pub sft: SftRegime,
    pub rl: RlRegime,
}

impl Regime {
    /// Parses forms like `sft_diverse+rl`, `sft_coords_only`, `rl`, `none`.
    pub fn parse(s: &str) -> Result<Regime, GrpoError> {
        let mut sft = SftRegime::None;
        let mut rl = RlRegime::None;
        for part in s.split('+') {
            match part.trim() {
                "sft_diverse" => sft = SftRegime::Diverse,
                "sft_coords_only" => sft = SftRegime::CoordsOnly,
                "rl" => rl = RlRegime::Rl,
                "none" | "" => {}
                other => {
                    return Err(GrpoError::ConfigError(format!("unknown regime part {other:?}")))
                }
            }
        }
        Ok(Regime { sft, rl })
    }
}

/// One metrics record. Accuracies are expected rewards under the current
/// policy, averaged over scenes and instruction perspectives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsPoint {
    pub step: usize,
    pub phase: String,
    pub train_accuracy: f64,
    pub eval_accuracy: f64,
    /// Mean perspective-head entropy (nats) over eval contexts; NaN-free,
    /// zero when entropy logging is disabled.
    pub rollout_entropy: f64,
    pub mean_reward: f64,
    /// Rollout groups this step whose rewards had zero variance.
    pub zero_variance_groups: usize,
    pub groups_total: usize,
    /// Log-ratio clamps hit this step (never silently swallowed).
    pub clamp_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTimeline {
    pub points: Vec<MetricsPoint>,
}

impl MetricsTimeline {
    pub fn last(&self) -> Option<&MetricsPoint> {
        self.points.last()
    }

    pub fn final_for_phase(&self, phase: &str) -> Option<&MetricsPoint> {
        self.points.iter().rev().find(|p| p.phase == phase)
    }
}

/// Expected reward of the policy on a scene set: the probability mass the
/// factorized policy puts on the target cell, averaged over scenes and
/// uniformly over instruction perspectives.
pub fn expected_accuracy(policy: &ToyPolicy, scenes: &[SyntheticScene]) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for scene in scenes {
        let target = scene.target_cell();
        for ip in Perspective::AUGMENTED {
            let ctx = scene.features(ip);
            let persp_probs = policy.perspective_probs(ctx);
            let mut p_correct = 0.0;
            for (k, &pk) in persp_probs.iter().enumerate() {
                let q = policy.cell_probs(k, scene.features(Perspective::AUGMENTED[k]));
                p_correct += pk * q[target];
            }
            total += p_correct;
            count += 1;
        }
    }
    total / count as f64
}

fn mean_entropy(policy: &ToyPolicy, scenes: &[SyntheticScene]) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for scene in scenes {
        for ip in Perspective::AUGMENTED {
            total += policy.perspective_entropy(scene.features(ip));
            count += 1;
        }
    }
    total / count as f64
}

fn apply_grad(policy: &mut ToyPolicy, grad: &GradTensors, lr: f64) {
    for (row, grow) in policy.theta_persp.iter_mut().zip(&grad.theta_persp) {
        for (w, g) in row.iter_mut().zip(grow) {
            *w -= lr * g;
        }
    }
    for (m, gm) in policy.theta_cell.iter_mut().zip(&grad.theta_cell) {
        for (row, grow) in m.iter_mut().zip(gm) {
            for (w, g) in row.iter_mut().zip(grow) {
                *w -= lr * g;
            }
        }
    }
}

struct StepOutcome {
    mean_reward: f64,
    zero_variance_groups: usize,
    groups_total: usize,
    clamp_count: usize,
}

fn sft_step(
    policy: &mut ToyPolicy,
    regime: SftRegime,
    config: &TrainConfig,
    scenes: &[SyntheticScene],
    rng: &mut ChaCha8Rng,
) {
    let mut items = Vec::with_capacity(config.batch_size);
    for _ in 0..config.batch_size {
        let scene = &scenes[rng.gen_range(0..scenes.len())];
        let ip = Perspective::AUGMENTED[rng.gen_range(0..4)];
        let rp = match regime {
            SftRegime::Diverse => {
                // Two distinct perspectives: instruction in one, reasoning
                // target in another.
                let mut j = rng.gen_range(0..3);
                if j >= ip.augmented_index().unwrap() {
                    j += 1;
                }
                Perspective::AUGMENTED[j]
            }
            SftRegime::CoordsOnly => Perspective::Spatial,
            SftRegime::None => unreachable!("sft_step not called for SftRegime::None"),
        };
        items.push(SftItem::from_scene(scene, ip, rp));
    }
    let grad = policy_grad(policy, &ObjectiveBatch::Sft(items));
    apply_grad(policy, &grad, config.lr_sft);
}

fn rl_step(
    policy: &mut ToyPolicy,
    config: &TrainConfig,
    scenes: &[SyntheticScene],
    rng: &mut ChaCha8Rng,
) -> Result<StepOutcome, GrpoError> {
    let mut items = Vec::with_capacity(config.batch_size);
    let mut reward_sum = 0.0;
    let mut reward_n = 0usize;
    let mut zero_variance_groups = 0usize;
    for _ in 0..config.batch_size {
        let scene = &scenes[rng.gen_range(0..scenes.len())];
        let ip = Perspective::AUGMENTED[rng.gen_range(0..4)];
        let group = sample_rollouts(policy, scene, ip, config.g_rollouts, rng)?;
        reward_sum += group.rollouts.iter().map(|r| r.reward).sum::<f64>();
        reward_n += group.rollouts.len();
        if group.zero_variance() {
            zero_variance_groups += 1;
        }
        items.push(GrpoItem::from_scene(scene, ip, group));
    }
    let grad = policy_grad(policy, &ObjectiveBatch::Grpo(items));
    apply_grad(policy, &grad, config.lr_rl);
    Ok(StepOutcome {
        mean_reward: reward_sum / reward_n as f64,
        zero_variance_groups,
        groups_total: config.batch_size,
        clamp_count: grad.clamp_count,
    })
}

/// Runs the selected stages with plain gradient descent, starting from the
/// uniform policy, and returns the metrics timeline. Fully deterministic
/// for a given (config, regime, scenes).
pub fn train_toy(
    config: &TrainConfig,
    regime: Regime,
    train_scenes: &[SyntheticScene],
    eval_scenes: &[SyntheticScene],
) -> Result<(ToyPolicy, MetricsTimeline), GrpoError> {
    config.validate()?;
    if train_scenes.is_empty() || eval_scenes.is_empty() {
        return Err(GrpoError::ConfigError("need non-empty train and eval scene sets".into()));
    }
    let n_cells = train_scenes[0].n_cells();
    let mut policy = ToyPolicy::uniform(n_cells);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut points = Vec::new();

    let record = |points: &mut Vec<MetricsPoint>,
                  policy: &ToyPolicy,
                  step: usize,
                  phase: &str,
                  outcome: Option<&StepOutcome>| {
        points.push(MetricsPoint {
            step,
            phase: phase.to_string(),
            train_accuracy: expected_accuracy(policy, train_scenes),
            eval_accuracy: expected_accuracy(policy, eval_scenes),
            rollout_entropy: if config.entropy_logging {
                mean_entropy(policy, eval_scenes)
            } else {
                0.0
            },
            mean_reward: outcome.map(|o| o.mean_reward).unwrap_or(0.0),
            zero_variance_groups: outcome.map(|o| o.zero_variance_groups).unwrap_or(0),
            groups_total: outcome.map(|o| o.groups_total).unwrap_or(0),
            clamp_count: outcome.map(|o| o.clamp_count).unwrap_or(0),
        });
    };

    if regime.sft != SftRegime::None {
        for step in 1..=config.steps {
            sft_step(&mut policy, regime.sft, config, train_scenes, &mut rng);
            if step % config.eval_interval == 0 || step == config.steps {
                record(&mut points, &policy, step, "sft", None);
            }
        }
    }
    if regime.rl == RlRegime::Rl {
        for step in 1..=config.steps {
            let outcome = rl_step(&mut policy, config, train_scenes, &mut rng)?;
            if step % config.eval_interval == 0 || step == config.steps {
                record(&mut points, &policy, step, "rl", Some(&outcome));
            }
        }
    }
    if points.is_empty() {
        record(&mut points, &policy, 0, "init", None);
    }
    if !policy.is_finite() {
        return Err(GrpoError::NonFiniteLoss);
    }
    Ok((policy, MetricsTimeline { points }))
}
