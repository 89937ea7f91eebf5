//! Training mathematics on a synthetic grounding environment: point-in-box
//! reward, Z-score advantages, the ratio-weighted policy objective, and SFT
//! log-likelihood, exercised end-to-end with a factorized toy policy.

mod math;
mod policy;
mod scene;
mod train;

pub use math::{
    batch_loss, finite_difference_grad, grpo_loss, normalize_advantages, policy_grad,
    reward_cell, reward_point, sample_rollouts, sft_loss, GradTensors, GrpoItem, LossStat,
    ObjectiveBatch, Rollout, RolloutGroup, SftItem, LOG_RATIO_CLAMP,
};
pub use policy::ToyPolicy;
pub use scene::{gen_scenes, AmbiguityProfile, SceneConfig, SceneElement, SyntheticScene};
pub use train::{
    expected_accuracy, train_toy, MetricsPoint, MetricsTimeline, Regime, RlRegime, SftRegime,
    TrainConfig,
};

#[derive(Debug, thiserror::Error)]
pub enum GrpoError {
    #[error("rollout group needs at least 2 members, got {0}")]
    GroupTooSmall(usize),
    #[error("non-finite loss")]
    NonFiniteLoss,
    #[error("config error: {0}")]
    ConfigError(String),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
}
