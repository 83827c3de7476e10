//! Actor-critic training of the flight policy.

use super::env::{slot_sum_rate, TrajectoryEnv};
use super::nn::{critic_target, soft_update, Activation, Adam, Mlp};
use super::noise::{ExplorationNoise, NoiseKind};
use super::replay::{ReplayBuffer, Transition};
use crate::error::{Error, Result};
use crate::scenario::TrajectorySet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DdpgConfig {
    /// Discount `γ`.
    pub gamma: f64,
    /// Soft target update rate `δ`.
    pub tau_soft: f64,
    /// Violation penalty `ξ`; `None` calibrates it to `penalty_factor` times the mean per-slot
    /// sum rate of the initial straight-line flight.
    pub penalty: Option<f64>,
    pub penalty_factor: f64,
    /// Weight per `a_max τ` of final distance to the destination; `None` uses `ξ`.
    pub terminal_weight: Option<f64>,
    pub noise: NoiseKind,
    /// Noise scale reached (linearly) on the last episode.
    pub final_noise_scale: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub episodes: usize,
    pub hidden: Vec<usize>,
    pub hidden_activation: String,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Transitions collected before the first update.
    pub warmup: usize,
    pub updates_per_step: usize,
    pub loss_cap: f64,
    pub divergence_patience: usize,
    pub adapt_sensing: bool,
}

impl Default for DdpgConfig {
    fn default() -> Self {
        DdpgConfig {
            gamma: 0.95,
            tau_soft: 0.01,
            penalty: None,
            penalty_factor: 10.0,
            terminal_weight: None,
            noise: NoiseKind::default(),
            final_noise_scale: 0.1,
            batch_size: 32,
            replay_capacity: ReplayBuffer::DEFAULT_CAPACITY,
            episodes: 300,
            hidden: vec![128, 128],
            hidden_activation: "relu".into(),
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            warmup: 64,
            updates_per_step: 2,
            loss_cap: 1e8,
            divergence_patience: 100,
            adapt_sensing: true,
        }
    }
}

impl DdpgConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Validation(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(self.tau_soft > 0.0 && self.tau_soft <= 1.0) {
            return bad("tau_soft must lie in (0, 1]");
        }
        if self.penalty.is_some_and(|p| !(p >= 0.0)) || self.terminal_weight.is_some_and(|p| !(p >= 0.0)) {
            return bad("penalty weights must be non-negative");
        }
        if self.batch_size == 0 || self.batch_size > self.replay_capacity {
            return bad("batch size must be positive and at most the replay capacity");
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer widths must be positive");
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        Activation::from_name(&self.hidden_activation)?;
        Ok(())
    }

    fn shapes(&self, inputs: usize, outputs: usize, out_act: Activation) -> Result<(Vec<usize>, Vec<Activation>)> {
        let hidden = Activation::from_name(&self.hidden_activation)?;
        let mut sizes = vec![inputs];
        sizes.extend(&self.hidden);
        sizes.push(outputs);
        let mut acts = vec![hidden; self.hidden.len()];
        acts.push(out_act);
        Ok((sizes, acts))
    }
}

/// Deterministic actor with the settings it was trained under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub schema: String,
    pub actor: Mlp,
    pub config: DdpgConfig,
    pub penalty: f64,
    pub terminal_weight: f64,
}

pub const POLICY_SCHEMA: &str = "uav-isac/policy/v1";

impl Policy {
    /// Policy whose pre-squash outputs are all zero: the mid-range action every slot.
    pub fn zero(state_dim: usize, action_dim: usize, config: &DdpgConfig) -> Result<Self> {
        let (sizes, acts) = config.shapes(state_dim, action_dim, Activation::Tanh)?;
        Ok(Policy { schema: POLICY_SCHEMA.into(), actor: Mlp::zeros(&sizes, &acts)?, config: config.clone(), penalty: 0.0, terminal_weight: 0.0 })
    }

    pub fn act(&self, state: &[f64]) -> Vec<f64> {
        self.actor.forward(state)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let p: Policy = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if p.schema != POLICY_SCHEMA {
            return Err(Error::schema("schema", format!("expected `{POLICY_SCHEMA}`, found `{}`", p.schema)));
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub total_reward: f64,
    pub mean_reward: f64,
    pub sum_rate: f64,
    pub violations: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: Policy,
    pub curve: Vec<EpisodeRecord>,
    pub reward_scale: f64,
}

/// Mean per-slot sum rate of the straight-line flight under the environment's beams.
pub fn reference_slot_rate(env: &mut TrajectoryEnv) -> Result<f64> {
    env.reset()?;
    let cfg = env.config().clone();
    let traj = TrajectorySet::straight_line(&cfg);
    let chans = crate::channel::ChannelRealization::sample(&cfg, &traj, env.settings().channel_seed)?;
    let ns = cfg.slot_count();
    let total: f64 = (0..ns).map(|n| slot_sum_rate(env.beams(), &chans, &cfg, n)).sum();
    Ok(total / ns as f64)
}

/// Networks, optimizers, replay memory and exploration state of one training run.
#[derive(Debug, Clone)]
pub struct Agent {
    pub config: DdpgConfig,
    actor: Mlp,
    critic: Mlp,
    actor_t: Mlp,
    critic_t: Mlp,
    actor_opt: Adam,
    critic_opt: Adam,
    buffer: ReplayBuffer,
    noise: ExplorationNoise,
    rng: ChaCha8Rng,
    over_cap: usize,
    pub reward_scale: f64,
    pub penalty: f64,
    pub terminal_weight: f64,
    pub curve: Vec<EpisodeRecord>,
}

impl Agent {
    /// Fresh networks for `env`; sets the environment's penalty from the configuration, or
    /// calibrates it on the straight-line flight.
    pub fn new(env: &mut TrajectoryEnv, config: &DdpgConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let reference = reference_slot_rate(env)?;
        let reward_scale = if reference > 1e-9 { reference } else { 1.0 };
        let penalty = config.penalty.unwrap_or(config.penalty_factor * reference);
        let terminal_weight = config.terminal_weight.unwrap_or(penalty);
        env.set_penalty(penalty);
        env.set_terminal_weight(terminal_weight);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sd = env.reset()?.len();
        let ad = env.action_dim();
        let (asz, aact) = config.shapes(sd, ad, Activation::Tanh)?;
        let (csz, cact) = config.shapes(sd + ad, 1, Activation::Identity)?;
        let actor = Mlp::new(&asz, &aact, 3e-3, &mut rng)?;
        let critic = Mlp::new(&csz, &cact, 3e-3, &mut rng)?;
        Ok(Agent {
            config: config.clone(),
            actor_t: actor.clone(),
            critic_t: critic.clone(),
            actor_opt: Adam::new(config.actor_lr, actor.param_count()),
            critic_opt: Adam::new(config.critic_lr, critic.param_count()),
            actor,
            critic,
            buffer: ReplayBuffer::new(config.replay_capacity),
            noise: ExplorationNoise::new(config.noise, ad),
            rng,
            over_cap: 0,
            reward_scale,
            penalty,
            terminal_weight,
            curve: Vec::new(),
        })
    }

    pub fn policy(&self) -> Policy {
        Policy {
            schema: POLICY_SCHEMA.into(),
            actor: self.actor.clone(),
            config: self.config.clone(),
            penalty: self.penalty,
            terminal_weight: self.terminal_weight,
        }
    }

    /// Continues training for `episodes` more episodes, with the noise decaying over this batch.
    pub fn train_episodes(&mut self, env: &mut TrajectoryEnv, episodes: usize) -> Result<()> {
        env.set_penalty(self.penalty);
        env.set_terminal_weight(self.terminal_weight);
        if env.state_dim() != self.actor.input_dim() || env.action_dim() != self.actor.output_dim() {
            return Err(Error::Structural("environment does not match the agent's network shapes".into()));
        }
        for local in 0..episodes {
            let frac = if episodes > 1 { local as f64 / (episodes - 1) as f64 } else { 1.0 };
            let scale = 1.0 + (self.config.final_noise_scale - 1.0) * frac;
            let record = self.episode(env, scale)?;
            log::debug!("episode {}: reward {:.4} violations {}", record.episode, record.total_reward, record.violations);
            self.curve.push(record);
        }
        Ok(())
    }

    fn episode(&mut self, env: &mut TrajectoryEnv, scale: f64) -> Result<EpisodeRecord> {
        let episode = self.curve.len();
        let mut state = env.reset()?;
        self.noise.reset();
        let mut record = EpisodeRecord { episode, total_reward: 0.0, mean_reward: 0.0, sum_rate: 0.0, violations: 0 };
        let mut steps = 0;
        loop {
            let mut action = self.actor.forward(&state);
            for (a, e) in action.iter_mut().zip(self.noise.sample(scale, &mut self.rng)) {
                *a = (*a + e).clamp(-1.0, 1.0);
            }
            let out = env.step(&action)?;
            record.total_reward += out.reward;
            record.sum_rate += out.sum_rate;
            record.violations += out.violations.count();
            steps += 1;
            self.buffer.push(Transition {
                state: std::mem::take(&mut state),
                action,
                reward: out.reward / self.reward_scale,
                next_state: out.state.clone(),
                terminal: out.done,
            });
            if self.buffer.len() >= self.config.warmup.max(self.config.batch_size) {
                for _ in 0..self.config.updates_per_step {
                    self.learn(episode)?;
                }
            }
            state = out.state;
            if out.done {
                break;
            }
        }
        record.mean_reward = record.total_reward / steps as f64;
        Ok(record)
    }

    fn learn(&mut self, episode: usize) -> Result<()> {
        let loss = update(
            &self.buffer,
            &self.config,
            &mut self.rng,
            &mut self.actor,
            &mut self.critic,
            &self.actor_t,
            &self.critic_t,
            &mut self.actor_opt,
            &mut self.critic_opt,
        );
        if !loss.is_finite() || loss > self.config.loss_cap {
            self.over_cap += 1;
            if self.over_cap >= self.config.divergence_patience {
                return Err(Error::Diverged(format!(
                    "critic loss above {:e} for {} consecutive updates (episode {episode})",
                    self.config.loss_cap, self.over_cap
                )));
            }
        } else {
            self.over_cap = 0;
        }
        soft_update(&mut self.actor_t, &self.actor, self.config.tau_soft)?;
        soft_update(&mut self.critic_t, &self.critic, self.config.tau_soft)
    }
}

/// Runs `config.episodes` episodes of exploration and minibatch actor-critic updates.
pub fn train(env: &mut TrajectoryEnv, config: &DdpgConfig, seed: u64) -> Result<TrainOutcome> {
    let mut agent = Agent::new(env, config, seed)?;
    agent.train_episodes(env, config.episodes)?;
    Ok(TrainOutcome { policy: agent.policy(), curve: agent.curve, reward_scale: agent.reward_scale })
}

/// One minibatch step on critic and actor; returns the critic loss.
#[allow(clippy::too_many_arguments)]
fn update(
    buffer: &ReplayBuffer,
    config: &DdpgConfig,
    rng: &mut ChaCha8Rng,
    actor: &mut Mlp,
    critic: &mut Mlp,
    actor_t: &Mlp,
    critic_t: &Mlp,
    actor_opt: &mut Adam,
    critic_opt: &mut Adam,
) -> f64 {
    let batch = buffer.sample(config.batch_size, rng);
    let b = batch.len() as f64;
    let mut cgrad = vec![0.0; critic.param_count()];
    let mut loss = 0.0;
    let joined = |s: &[f64], a: &[f64]| s.iter().chain(a).copied().collect::<Vec<f64>>();
    for t in &batch {
        let q_next = if t.terminal { 0.0 } else { critic_t.forward(&joined(&t.next_state, &actor_t.forward(&t.next_state)))[0] };
        let y = critic_target(t.reward, config.gamma, q_next, t.terminal);
        let trace = critic.forward_trace(&joined(&t.state, &t.action));
        let q = trace.last().expect("output")[0];
        loss += (q - y) * (q - y) / b;
        critic.backward(&trace, &[2.0 * (q - y) / b], &mut cgrad);
    }
    critic_opt.step(&mut critic.params, &cgrad);

    let mut agrad = vec![0.0; actor.param_count()];
    let mut scratch = vec![0.0; critic.param_count()];
    let sd = batch.first().map_or(0, |t| t.state.len());
    for t in &batch {
        let atrace = actor.forward_trace(&t.state);
        let a = atrace.last().expect("output");
        let ctrace = critic.forward_trace(&joined(&t.state, a));
        let gin = critic.backward(&ctrace, &[-1.0 / b], &mut scratch);
        actor.backward(&atrace, &gin[sd..], &mut agrad);
    }
    actor_opt.step(&mut actor.params, &agrad);
    loss
}

#[derive(Debug, Clone)]
pub struct Rollout {
    pub trajectory: TrajectorySet,
    pub total_reward: f64,
    pub sum_rate: f64,
    pub violations: usize,
    pub actions: Vec<Vec<f64>>,
}

/// Noise-free episode under `policy`.
pub fn rollout(policy: &Policy, env: &mut TrajectoryEnv) -> Result<Rollout> {
    run_episode(env, |s| policy.act(s))
}

/// Episode with actions drawn uniformly from the boxes.
pub fn random_episode(env: &mut TrajectoryEnv, rng: &mut impl Rng) -> Result<Rollout> {
    let ad = env.action_dim();
    run_episode(env, |_| (0..ad).map(|_| rng.random_range(-1.0..=1.0)).collect())
}

/// Mean episode reward of the uniform random policy.
pub fn random_policy_mean(env: &mut TrajectoryEnv, episodes: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..episodes {
        total += random_episode(env, &mut rng)?.total_reward;
    }
    Ok(total / episodes.max(1) as f64)
}

fn run_episode(env: &mut TrajectoryEnv, mut choose: impl FnMut(&[f64]) -> Vec<f64>) -> Result<Rollout> {
    let mut state = env.reset()?;
    let mut out = Rollout { trajectory: env.trajectory().clone(), total_reward: 0.0, sum_rate: 0.0, violations: 0, actions: Vec::new() };
    loop {
        let a = choose(&state);
        let step = env.step(&a)?;
        out.actions.push(a);
        out.total_reward += step.reward;
        out.sum_rate += step.sum_rate;
        out.violations += step.violations.count();
        state = step.state;
        if step.done {
            break;
        }
    }
    out.trajectory = env.trajectory().clone();
    Ok(out)
}

pub const CURVE_HEADER: &str = "# uav-isac training-curve v1";

pub fn training_curve_csv(curve: &[EpisodeRecord]) -> String {
    let mut s = format!("{CURVE_HEADER}\nepisode,total_reward,mean_reward,sum_rate,violations\n");
    for r in curve {
        let _ = writeln!(s, "{},{:.12e},{:.12e},{:.12e},{}", r.episode, r.total_reward, r.mean_reward, r.sum_rate, r.violations);
    }
    s
}
