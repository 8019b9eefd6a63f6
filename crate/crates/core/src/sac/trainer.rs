//! Two-stage curriculum training loop and deterministic deployment.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::agent::{policy_action, SacAgent, SacConfig, UpdateStats};
use super::networks::Actor;
use super::replay::{ReplayBuffer, Transition};
use crate::env::{AwbEnv, CurriculumSchedule, EnvConfig, EnvImage, EnvMode, PoolStats, TraceStep};
use crate::error::{AwbError, Result};
use crate::features::EnvState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerConfig {
    pub sac: SacConfig,
    pub n_envs: usize,
    pub total_timesteps: u64,
    /// Global environment steps before the first gradient update.
    pub learning_starts: u64,
    pub buffer_capacity: usize,
    pub gradient_steps: usize,
    /// Stage-1 step budget.
    pub stage1_steps: u64,
    /// Stage 1 also ends after this many consecutive episodes with
    /// `rho < 1` and mean length below the step cap.
    pub stage1_stable_episodes: usize,
    pub episodes_per_image: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            sac: SacConfig::default(),
            n_envs: 16,
            total_timesteps: 150_000,
            learning_starts: 100,
            buffer_capacity: 100_000,
            gradient_steps: 1,
            stage1_steps: 20_000,
            stage1_stable_episodes: 50,
            episodes_per_image: 5,
        }
    }
}

impl TrainerConfig {
    /// Single environment and a 20 000-step budget.
    pub fn desk_scale() -> Self {
        Self {
            n_envs: 1,
            total_timesteps: 20_000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sac.validate()?;
        if self.n_envs == 0 || self.buffer_capacity == 0 || self.episodes_per_image == 0 {
            return Err(AwbError::InvalidParameter(
                "n_envs, buffer_capacity and episodes_per_image must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One finished training episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    /// Global step count when the episode ended.
    pub step: u64,
    pub episode_return: f64,
    pub critic_loss: Option<f64>,
    pub actor_loss: Option<f64>,
    pub alpha: Option<f64>,
    pub entropy: Option<f64>,
    pub stage: u8,
    pub image: String,
    pub length: usize,
    pub initial_error: f64,
    pub final_error: f64,
    pub terminal_rho: f64,
}

#[derive(Debug, Default, Clone, Copy)]
struct LossAccumulator {
    n: usize,
    critic: f64,
    actor: f64,
    alpha: f64,
    entropy: f64,
}

impl LossAccumulator {
    fn add(&mut self, s: &UpdateStats) {
        self.n += 1;
        self.critic += s.critic_loss;
        self.actor += s.actor_loss;
        self.alpha += s.alpha;
        self.entropy += s.entropy;
    }

    fn mean(&self, v: f64) -> Option<f64> {
        (self.n > 0).then(|| v / self.n as f64)
    }
}

struct Worker {
    env: AwbEnv,
    state: Option<EnvState>,
    image: String,
    ret: f64,
    losses: LossAccumulator,
}

/// Stage-1 episode outcome used by the switch rule.
#[derive(Debug, Clone, Copy)]
struct Outcome {
    rho: f64,
    length: usize,
}

pub struct Trainer {
    pub cfg: TrainerConfig,
    pub env_cfg: EnvConfig,
    pub agent: SacAgent,
    buffer: ReplayBuffer<Transition>,
    rng: ChaCha8Rng,
    pub global_step: u64,
    pub episodes: Vec<EpisodeRecord>,
}

impl Trainer {
    pub fn new(cfg: TrainerConfig, env_cfg: EnvConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        env_cfg.validate()?;
        if cfg.sac.net.hist_dim != env_cfg.histogram.dim() {
            return Err(AwbError::InvalidParameter(format!(
                "network expects {} histogram entries but the environment produces {}",
                cfg.sac.net.hist_dim,
                env_cfg.histogram.dim()
            )));
        }
        Ok(Self {
            agent: SacAgent::new(cfg.sac, seed)?,
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            rng: ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9e37_79b9_7f4a_7c15)),
            cfg,
            env_cfg,
            global_step: 0,
            episodes: Vec::new(),
        })
    }

    pub fn actor(&self) -> &Actor {
        &self.agent.actor
    }

    /// Stage 1 on `pool[0]`, then stage 2 on the whole pool, within
    /// `total_timesteps`.
    pub fn train(&mut self, pool: &[Arc<EnvImage>]) -> Result<()> {
        if pool.is_empty() {
            return Err(AwbError::InvalidParameter("empty curriculum pool".into()));
        }
        let total = self.cfg.total_timesteps;
        let s1 = self.cfg.stage1_steps.min(total);
        self.run_stage(1, &pool[..1], s1, true)?;
        let left = total.saturating_sub(self.global_step);
        self.run_stage(2, pool, left, false)
    }

    /// Runs up to `max_steps` environment steps of one curriculum stage.
    pub fn run_stage(&mut self, stage: u8, pool: &[Arc<EnvImage>], max_steps: u64, stop_when_stable: bool) -> Result<()> {
        if max_steps == 0 {
            return Ok(());
        }
        let stats = PoolStats::for_pool(pool, &self.env_cfg)?;
        let mut schedule = CurriculumSchedule::new(stage, pool.len(), self.cfg.episodes_per_image)?;
        let mut workers = (0..self.cfg.n_envs)
            .map(|_| {
                Ok(Worker {
                    env: AwbEnv::new(self.env_cfg, EnvMode::Train)?,
                    state: None,
                    image: String::new(),
                    ret: 0.0,
                    losses: LossAccumulator::default(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut recent: Vec<Outcome> = Vec::new();
        let mut steps = 0u64;
        while steps < max_steps {
            for w in workers.iter_mut() {
                if steps >= max_steps {
                    break;
                }
                let state = match w.state.take() {
                    Some(s) => s,
                    None => {
                        let idx = schedule.next().expect("endless schedule");
                        let (s, _) = w.env.reset(Arc::clone(&pool[idx]), Some(stats))?;
                        w.image = pool[idx].id.clone();
                        w.ret = 0.0;
                        w.losses = LossAccumulator::default();
                        s
                    }
                };
                let action = if self.global_step < self.cfg.learning_starts {
                    self.agent.random_action()
                } else {
                    self.agent.act(&state, false).0
                };
                let out = w.env.step(action)?;
                w.ret += out.reward;
                self.buffer.push(Transition {
                    state,
                    action,
                    reward: out.reward,
                    next_state: out.state.clone(),
                    done: out.done,
                });
                self.global_step += 1;
                steps += 1;

                if self.global_step >= self.cfg.learning_starts && self.buffer.len() >= self.cfg.sac.batch_size {
                    for _ in 0..self.cfg.gradient_steps {
                        let batch = self.buffer.sample(self.cfg.sac.batch_size, &mut self.rng);
                        let s = self.agent.update(&batch).map_err(|e| match e {
                            AwbError::Divergence { message, .. } => AwbError::Divergence {
                                step: self.global_step,
                                message,
                            },
                            other => other,
                        })?;
                        w.losses.add(&s);
                    }
                }

                if out.done {
                    let (e0, et) = w.env.errors().expect("training episode has errors");
                    let rho = w.env.rho().expect("rho");
                    let l = &w.losses;
                    self.episodes.push(EpisodeRecord {
                        step: self.global_step,
                        episode_return: w.ret,
                        critic_loss: l.mean(l.critic),
                        actor_loss: l.mean(l.actor),
                        alpha: l.mean(l.alpha),
                        entropy: l.mean(l.entropy),
                        stage,
                        image: w.image.clone(),
                        length: w.env.steps_taken(),
                        initial_error: e0,
                        final_error: et,
                        terminal_rho: rho,
                    });
                    recent.push(Outcome {
                        rho,
                        length: w.env.steps_taken(),
                    });
                    if stop_when_stable && self.stage1_settled(&recent) {
                        return Ok(());
                    }
                } else {
                    w.state = Some(out.state);
                }
            }
        }
        Ok(())
    }

    fn stage1_settled(&self, recent: &[Outcome]) -> bool {
        let k = self.cfg.stage1_stable_episodes;
        if k == 0 || recent.len() < k {
            return false;
        }
        let window = &recent[recent.len() - k..];
        let mean_len = window.iter().map(|o| o.length as f64).sum::<f64>() / k as f64;
        window.iter().all(|o| o.rho < 1.0) && mean_len < self.env_cfg.t_max as f64
    }
}

/// Result of running the deterministic policy on one image.
#[derive(Debug, Clone, PartialEq)]
pub struct Deployment {
    pub trace: Vec<TraceStep>,
    pub n_percent: f64,
    pub minkowski_p: f64,
    pub steps: usize,
    pub estimate: crate::sgplrd::Estimate,
}

/// Tunes one image with the policy mean; never reads ground truth.
pub fn deploy(actor: &Actor, env_cfg: &EnvConfig, image: Arc<EnvImage>) -> Result<Deployment> {
    let mut env = AwbEnv::new(*env_cfg, EnvMode::Deploy)?;
    let (mut state, first) = env.reset(image, None)?;
    let mut trace = vec![first];
    while !env.is_done() {
        let (action, _) = policy_action(actor, &state, None);
        let out = env.step(action)?;
        trace.push(out.trace);
        state = out.state;
    }
    let (n, p) = env.params().expect("episode");
    Ok(Deployment {
        trace,
        n_percent: n,
        minkowski_p: p,
        steps: env.steps_taken(),
        estimate: *env.current_estimate().expect("episode"),
    })
}
