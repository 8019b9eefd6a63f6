//! Soft Actor-Critic with twin critics, target copies and an auto-tuned
//! entropy temperature.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::networks::{Actor, Critic, NetConfig, ObsBatch, ACTION_DIM};
use super::nn::{soft_update, zero_ranges, Adam};
use super::replay::Transition;
use crate::error::{AwbError, Result};
use crate::features::{EnvState, MAX_DELTA_N, MAX_DELTA_P};

pub const ACTION_SCALE: [f64; 2] = [MAX_DELTA_N, MAX_DELTA_P];
/// Added inside the log of the tanh correction.
pub const SQUASH_EPS: f64 = 1e-6;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SacConfig {
    pub batch_size: usize,
    pub gamma: f64,
    pub tau: f64,
    pub learning_rate: f64,
    pub target_entropy: f64,
    pub init_alpha: f64,
    pub net: NetConfig,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            batch_size: 256,
            gamma: 0.99,
            tau: 0.005,
            learning_rate: 3e-4,
            target_entropy: -(ACTION_DIM as f64),
            init_alpha: 1.0,
            net: NetConfig::default(),
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.batch_size > 0
            && (0.0..1.0).contains(&self.gamma)
            && (0.0..=1.0).contains(&self.tau)
            && self.learning_rate >= 0.0
            && self.init_alpha > 0.0
            && self.target_entropy.is_finite();
        if ok {
            Ok(())
        } else {
            Err(AwbError::InvalidParameter(format!("invalid SAC config {self:?}")))
        }
    }
}

/// `a = tanh(mu + sigma * eps)` with its log-density, including the tanh
/// change of variables.
pub fn squash(mu: f64, logvar: f64, eps: f64) -> (f64, f64) {
    let sigma = (0.5 * logvar).exp();
    let a = (mu + sigma * eps).tanh();
    let logp = -0.5 * eps * eps - HALF_LN_2PI - 0.5 * logvar - (1.0 - a * a + SQUASH_EPS).ln();
    (a, logp)
}

pub fn rescale(a: [f64; 2]) -> [f64; 2] {
    [a[0] * ACTION_SCALE[0], a[1] * ACTION_SCALE[1]]
}

pub fn unscale(a: [f64; 2]) -> [f64; 2] {
    [a[0] / ACTION_SCALE[0], a[1] / ACTION_SCALE[1]]
}

/// Samples (or takes the mean of) the policy for one state. Returns the
/// rescaled action and its log-probability.
pub fn policy_action(actor: &Actor, state: &EnvState, eps: Option<[f64; 2]>) -> ([f64; 2], f64) {
    let obs = ObsBatch::from_states([state]);
    let f = actor.forward(&obs);
    let e = eps.unwrap_or([0.0; 2]);
    let mut a = [0.0; 2];
    let mut logp = 0.0;
    for j in 0..ACTION_DIM {
        let (aj, lp) = squash(f.mu[[0, j]], f.logvar[[0, j]], e[j]);
        a[j] = aj;
        logp += lp;
    }
    (rescale(a), logp)
}

/// Squashed samples for a batch: `(a, logp)` with `a` in unit coordinates.
fn squash_batch(mu: &Array2<f64>, logvar: &Array2<f64>, eps: &Array2<f64>) -> (Array2<f64>, Vec<f64>) {
    let n = mu.nrows();
    let mut a = Array2::zeros((n, ACTION_DIM));
    let mut logp = vec![0.0; n];
    for i in 0..n {
        for j in 0..ACTION_DIM {
            let (aj, lp) = squash(mu[[i, j]], logvar[[i, j]], eps[[i, j]]);
            a[[i, j]] = aj;
            logp[i] += lp;
        }
    }
    (a, logp)
}

/// Half mean squared error of one critic against `y`, with its gradient.
pub fn critic_loss_and_grad(
    critic: &Critic,
    obs: &ObsBatch,
    actions: &Array2<f64>,
    y: &[f64],
    grads: &mut [f64],
) -> f64 {
    let b = obs.len() as f64;
    let f = critic.forward(obs, actions.view());
    let resid: Vec<f64> = f.q.iter().zip(y).map(|(q, y)| q - y).collect();
    let loss = 0.5 * resid.iter().map(|r| r * r).sum::<f64>() / b;
    let dq: Vec<f64> = resid.iter().map(|r| r / b).collect();
    critic.backward(Some(grads), obs, &f, &dq);
    loss
}

/// Actor objective `mean(alpha * logp - min(Q1, Q2))` with reparameterized
/// noise `eps`, and its gradient. Returns `(loss, logp per sample)`.
pub fn actor_loss_and_grad(
    actor: &Actor,
    critics: [&Critic; 2],
    obs: &ObsBatch,
    eps: &Array2<f64>,
    alpha: f64,
    grads: &mut [f64],
) -> (f64, Vec<f64>) {
    let n = obs.len();
    let b = n as f64;
    let fwd = actor.forward(obs);
    let (a, logp) = squash_batch(&fwd.mu, &fwd.logvar, eps);
    let q0 = critics[0].forward(obs, a.view());
    let q1 = critics[1].forward(obs, a.view());
    let mut loss = 0.0;
    let mut dq = [vec![0.0; n], vec![0.0; n]];
    for i in 0..n {
        let k = usize::from(q1.q[i] < q0.q[i]);
        let minq = if k == 0 { q0.q[i] } else { q1.q[i] };
        loss += alpha * logp[i] - minq;
        dq[k][i] = -1.0 / b;
    }
    loss /= b;
    let da = critics[0].backward(None, obs, &q0, &dq[0]) + critics[1].backward(None, obs, &q1, &dq[1]);

    let mut d_mu = Array2::zeros((n, ACTION_DIM));
    let mut d_logvar = Array2::zeros((n, ACTION_DIM));
    for i in 0..n {
        for j in 0..ACTION_DIM {
            let aij = a[[i, j]];
            let one_m = 1.0 - aij * aij;
            let g_a = alpha / b * 2.0 * aij / (one_m + SQUASH_EPS) + da[[i, j]];
            let g_z = g_a * one_m;
            let sigma = (0.5 * fwd.logvar[[i, j]]).exp();
            d_mu[[i, j]] = g_z;
            d_logvar[[i, j]] = g_z * eps[[i, j]] * 0.5 * sigma - 0.5 * alpha / b;
        }
    }
    actor.backward(grads, obs, &fwd, d_mu.view(), d_logvar.view());
    (loss, logp)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha_loss: f64,
    pub alpha: f64,
    /// Batch estimate of the policy entropy, `-mean(logp)`.
    pub entropy: f64,
}

#[derive(Debug, Clone)]
pub struct SacAgent {
    pub cfg: SacConfig,
    pub actor: Actor,
    pub critics: [Critic; 2],
    pub targets: [Critic; 2],
    pub log_alpha: f64,
    actor_opt: Adam,
    critic_opts: [Adam; 2],
    alpha_opt: Adam,
    active: Vec<bool>,
    active_list: Vec<u32>,
    actor_grads: Vec<f64>,
    critic_grads: [Vec<f64>; 2],
    rng: ChaCha8Rng,
    pub updates: u64,
}

impl SacAgent {
    pub fn new(cfg: SacConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actor = Actor::new(cfg.net, &mut rng);
        let critics = [Critic::new(cfg.net, &mut rng), Critic::new(cfg.net, &mut rng)];
        let targets = critics.clone();
        let lr = cfg.learning_rate;
        Ok(Self {
            actor_opt: Adam::new(actor.params.len(), lr),
            critic_opts: [Adam::new(critics[0].params.len(), lr), Adam::new(critics[1].params.len(), lr)],
            alpha_opt: Adam::new(1, lr),
            actor_grads: actor.params.zeros_like(),
            critic_grads: [critics[0].params.zeros_like(), critics[1].params.zeros_like()],
            active: vec![false; cfg.net.hist_dim],
            active_list: Vec::new(),
            log_alpha: cfg.init_alpha.ln(),
            actor,
            critics,
            targets,
            cfg,
            rng,
            updates: 0,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    fn normal_batch(&mut self, n: usize) -> Array2<f64> {
        Array2::from_shape_simple_fn((n, ACTION_DIM), || StandardNormal.sample(&mut self.rng))
    }

    /// Policy action for one state; sampled unless `deterministic`.
    pub fn act(&mut self, state: &EnvState, deterministic: bool) -> ([f64; 2], f64) {
        let eps = (!deterministic).then(|| {
            let e: [f64; 2] = [StandardNormal.sample(&mut self.rng), StandardNormal.sample(&mut self.rng)];
            e
        });
        policy_action(&self.actor, state, eps)
    }

    /// Uniform random action over the rescaled box.
    pub fn random_action(&mut self) -> [f64; 2] {
        use rand::Rng;
        rescale([self.rng.random_range(-1.0..1.0), self.rng.random_range(-1.0..1.0)])
    }

    /// Next-state values of both target critics and the policy log-prob.
    fn next_values(&self, next: &ObsBatch, eps: &Array2<f64>) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let nf = self.actor.forward(next);
        let (a, logp) = squash_batch(&nf.mu, &nf.logvar, eps);
        let q0 = self.targets[0].forward(next, a.view()).q;
        let q1 = self.targets[1].forward(next, a.view()).q;
        (q0, q1, logp)
    }

    fn bootstrap(&self, r: f64, done: bool, q: f64, alpha: f64, logp: f64) -> f64 {
        if done {
            r
        } else {
            r + self.cfg.gamma * (q - alpha * logp)
        }
    }

    /// Bootstrapped critic targets for next states with policy noise `eps`,
    /// using the smaller of the two target critics.
    pub fn critic_targets(
        &self,
        next: &ObsBatch,
        rewards: &[f64],
        dones: &[bool],
        eps: &Array2<f64>,
        alpha: f64,
    ) -> Vec<f64> {
        let (q0, q1, logp) = self.next_values(next, eps);
        (0..rewards.len())
            .map(|i| self.bootstrap(rewards[i], dones[i], q0[i].min(q1[i]), alpha, logp[i]))
            .collect()
    }

    /// The targets each target critic would produce on its own.
    pub fn critic_targets_each(
        &self,
        next: &ObsBatch,
        rewards: &[f64],
        dones: &[bool],
        eps: &Array2<f64>,
        alpha: f64,
    ) -> [Vec<f64>; 2] {
        let (q0, q1, logp) = self.next_values(next, eps);
        [&q0, &q1].map(|q| {
            (0..rewards.len())
                .map(|i| self.bootstrap(rewards[i], dones[i], q[i], alpha, logp[i]))
                .collect()
        })
    }

    fn mark_active(&mut self, obs: &ObsBatch) {
        for k in obs.active_rows() {
            if !self.active[k as usize] {
                self.active[k as usize] = true;
                self.active_list.push(k);
            }
        }
    }

    /// One gradient step on the temperature, both critics and the actor,
    /// then a soft target update.
    pub fn update(&mut self, batch: &[&Transition]) -> Result<UpdateStats> {
        let n = batch.len();
        let b = n as f64;
        let obs = ObsBatch::from_states(batch.iter().map(|t| &t.state));
        let next = ObsBatch::from_states(batch.iter().map(|t| &t.next_state));
        self.mark_active(&obs);
        let actor_ranges = self.actor.trainable_ranges(&self.active_list);
        let critic_ranges = self.critics[0].trainable_ranges(&self.active_list);

        // temperature, with the policy sampled once for this and the actor step
        let eps_pi = self.normal_batch(n);
        let fwd = self.actor.forward(&obs);
        let (_, logp_pi) = squash_batch(&fwd.mu, &fwd.logvar, &eps_pi);
        let alpha = self.alpha();
        let mean_term = logp_pi.iter().map(|lp| lp + self.cfg.target_entropy).sum::<f64>() / b;
        let alpha_loss = -self.log_alpha * mean_term;
        let mut la = [self.log_alpha];
        self.alpha_opt.step(&mut la, &[-mean_term], &[0..1]);
        self.log_alpha = la[0];

        // critics
        let eps_next = self.normal_batch(n);
        let rewards: Vec<f64> = batch.iter().map(|t| t.reward).collect();
        let dones: Vec<bool> = batch.iter().map(|t| t.done).collect();
        let y = self.critic_targets(&next, &rewards, &dones, &eps_next, alpha);
        let mut actions = Array2::zeros((n, ACTION_DIM));
        for (i, t) in batch.iter().enumerate() {
            let u = unscale(t.action);
            actions[[i, 0]] = u[0];
            actions[[i, 1]] = u[1];
        }
        let mut critic_loss = 0.0;
        for k in 0..2 {
            zero_ranges(&mut self.critic_grads[k], &critic_ranges);
            critic_loss += critic_loss_and_grad(&self.critics[k], &obs, &actions, &y, &mut self.critic_grads[k]);
            self.critic_opts[k].step(&mut self.critics[k].params.data, &self.critic_grads[k], &critic_ranges);
        }

        // actor, against the target critics
        zero_ranges(&mut self.actor_grads, &actor_ranges);
        let (actor_loss, _) = actor_loss_and_grad(
            &self.actor,
            [&self.targets[0], &self.targets[1]],
            &obs,
            &eps_pi,
            alpha,
            &mut self.actor_grads,
        );
        self.actor_opt.step(&mut self.actor.params.data, &self.actor_grads, &actor_ranges);

        for k in 0..2 {
            soft_update(&mut self.targets[k].params.data, &self.critics[k].params.data, self.cfg.tau, &critic_ranges);
        }
        self.updates += 1;

        let stats = UpdateStats {
            critic_loss,
            actor_loss,
            alpha_loss,
            alpha,
            entropy: -logp_pi.iter().sum::<f64>() / b,
        };
        let finite = [stats.critic_loss, stats.actor_loss, stats.alpha_loss, self.log_alpha]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(AwbError::Divergence {
                step: self.updates,
                message: format!("non-finite update statistics {stats:?}"),
            });
        }
        Ok(stats)
    }

    /// Soft update of both target critics over every parameter.
    pub fn soft_update_all(&mut self, tau: f64) {
        for k in 0..2 {
            let all = [0..self.critics[k].params.len()];
            soft_update(&mut self.targets[k].params.data, &self.critics[k].params.data, tau, &all);
        }
    }
}
