//! Trajectory learning: flight environment, networks and the actor-critic trainer.

pub mod ddpg;
pub mod env;
pub mod nn;
pub mod noise;
pub mod replay;

pub use ddpg::{random_episode, random_policy_mean, Agent, rollout, train, training_curve_csv, DdpgConfig, EpisodeRecord, Policy, Rollout, TrainOutcome};
pub use env::{apply_kinematics, reward_fn, slot_sum_rate, EnvSettings, StepOutcome, TrajectoryEnv, UavAction, ViolationReport};
pub use nn::{critic_target, soft_update, Activation, Adam, Mlp};
pub use noise::{ExplorationNoise, NoiseKind};
pub use replay::{ReplayBuffer, Transition};
