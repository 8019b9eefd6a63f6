//! Sequential tuning of the estimator's `(N, p)` as a decision process.
//!
//! Each step applies a clamped additive change to both parameters, re-runs
//! the estimator and rewards the change in angular error. Episodes end once
//! the estimate stops moving for a few steps, or at a hard step cap.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{AwbError, Result};
use crate::features::{
    encode_history, rgb_uv_histogram, EnvState, HistogramConfig, HistogramFeature, MAX_DELTA_N,
    MAX_DELTA_P,
};
use crate::illuminant::IlluminantEstimate;
use crate::image::LinearImage;
use crate::metrics::recovery_angular_error;
use crate::sgplrd::{Estimate, PreparedImage, SgpParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub eps: f64,
    pub alpha: f64,
    /// Weight of the action-magnitude penalty.
    pub lambda: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            eps: 1e-3,
            alpha: 0.6,
            lambda: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub t_max: usize,
    /// Largest angle (degrees) between consecutive estimates that still
    /// counts as stable.
    pub stability_tol: f64,
    pub stable_steps: usize,
    pub init_n: f64,
    pub init_p: f64,
    pub reward: RewardConfig,
    pub histogram: HistogramConfig,
    pub sgp: SgpParams,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            t_max: 15,
            stability_tol: 0.1,
            stable_steps: 3,
            init_n: 0.5,
            init_p: 2.0,
            reward: RewardConfig::default(),
            histogram: HistogramConfig::default(),
            sgp: SgpParams::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.sgp.validate()?;
        self.sgp.with_tunables(self.init_n, self.init_p).validate()?;
        if self.t_max == 0 || self.stable_steps == 0 {
            return Err(AwbError::InvalidParameter("t_max and stable_steps must be positive".into()));
        }
        if !(self.stability_tol >= 0.0) {
            return Err(AwbError::InvalidParameter("stability_tol must be >= 0".into()));
        }
        Ok(())
    }
}

/// `(E0 - Et) / (E0 + eps + (E0 / c1)^alpha)`.
pub fn reward_err(e0: f64, et: f64, c1: f64, cfg: &RewardConfig) -> f64 {
    (e0 - et) / (e0 + cfg.eps + (e0 / c1).powf(cfg.alpha))
}

/// `-lambda * |(a1 / 0.6, a2 / 4)|`.
pub fn reward_act(a1: f64, a2: f64, cfg: &RewardConfig) -> f64 {
    -cfg.lambda * ((a1 / MAX_DELTA_N).powi(2) + (a2 / MAX_DELTA_P).powi(2)).sqrt()
}

/// Bonus tier for the final-to-initial error ratio.
pub fn terminal_bonus(e0: f64, et: f64) -> f64 {
    let rho = et / e0.max(1e-12);
    if rho < 0.8 {
        50.0
    } else if rho < 0.9 {
        30.0
    } else if rho < 0.95 {
        20.0
    } else if rho < 1.0 {
        10.0
    } else {
        -10.0
    }
}

/// Mean and maximum initial error over a curriculum pool.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolStats {
    pub c1: f64,
    pub c2: f64,
}

impl PoolStats {
    pub fn from_initial_errors(errors: &[f64]) -> Result<Self> {
        if errors.is_empty() {
            return Err(AwbError::InvalidParameter("empty curriculum pool".into()));
        }
        let c1 = errors.iter().sum::<f64>() / errors.len() as f64;
        let c2 = errors.iter().copied().fold(0.0, f64::max);
        if !(c1 > 0.0 && c2.is_finite()) {
            return Err(AwbError::InvalidParameter(format!(
                "pool initial errors must be positive, got mean {c1}"
            )));
        }
        Ok(Self { c1, c2 })
    }

    pub fn for_pool(pool: &[Arc<EnvImage>], cfg: &EnvConfig) -> Result<Self> {
        let errors = pool
            .iter()
            .map(|img| img.initial_error(cfg))
            .collect::<Result<Vec<_>>>()?;
        Self::from_initial_errors(&errors)
    }
}

/// Everything an episode needs about one image, computed once.
#[derive(Debug)]
pub struct EnvImage {
    pub id: String,
    pub prepared: PreparedImage,
    pub hist: Arc<HistogramFeature>,
    pub ground_truth: Option<IlluminantEstimate>,
}

impl EnvImage {
    pub fn new(
        id: impl Into<String>,
        image: LinearImage,
        ground_truth: Option<IlluminantEstimate>,
        cfg: &EnvConfig,
    ) -> Result<Self> {
        let hist = Arc::new(rgb_uv_histogram(&image, &cfg.histogram));
        Ok(Self {
            id: id.into(),
            prepared: PreparedImage::new(Arc::new(image), &cfg.sgp)?,
            hist,
            ground_truth,
        })
    }

    fn gt(&self) -> Result<&IlluminantEstimate> {
        self.ground_truth
            .as_ref()
            .ok_or_else(|| AwbError::GroundTruth(format!("no ground truth for {}", self.id)))
    }

    pub fn error_of(&self, est: &Estimate) -> Result<f64> {
        recovery_angular_error(est.illuminant.rgb(), self.gt()?.rgb())
    }

    pub fn initial_error(&self, cfg: &EnvConfig) -> Result<f64> {
        let est = self.prepared.estimate(cfg.init_n, cfg.init_p)?;
        self.error_of(&est)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnvMode {
    /// Rewards from ground truth.
    Train,
    /// Ground truth is never read; rewards are zero.
    Deploy,
}

/// One row of an episode trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: usize,
    pub n_percent: f64,
    pub minkowski_p: f64,
    pub estimate: [f64; 3],
    pub fallback: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reward: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: EnvState,
    pub reward: f64,
    pub done: bool,
    pub trace: TraceStep,
}

#[derive(Debug)]
struct Episode {
    image: Arc<EnvImage>,
    stats: Option<PoolStats>,
    n: f64,
    p: f64,
    t: usize,
    e0: Option<f64>,
    et: Option<f64>,
    estimate: Estimate,
    stability: usize,
    actions: Vec<[f64; 2]>,
    done: bool,
}

#[derive(Debug)]
pub struct AwbEnv {
    cfg: EnvConfig,
    mode: EnvMode,
    episode: Option<Episode>,
}

impl AwbEnv {
    pub fn new(cfg: EnvConfig, mode: EnvMode) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            mode,
            episode: None,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn mode(&self) -> EnvMode {
        self.mode
    }

    /// Starts an episode at the initial parameters. Training mode needs pool
    /// statistics and ground truth.
    pub fn reset(&mut self, image: Arc<EnvImage>, stats: Option<PoolStats>) -> Result<(EnvState, TraceStep)> {
        let estimate = image.prepared.estimate(self.cfg.init_n, self.cfg.init_p)?;
        let e0 = match self.mode {
            EnvMode::Train => {
                let s = stats.ok_or_else(|| {
                    AwbError::InvalidParameter("training episodes need pool statistics".into())
                })?;
                if !(s.c1 > 0.0 && s.c2 > 0.0) {
                    return Err(AwbError::InvalidParameter(format!("invalid pool statistics {s:?}")));
                }
                Some(image.error_of(&estimate)?)
            }
            EnvMode::Deploy => None,
        };
        let ep = Episode {
            image,
            stats,
            n: self.cfg.init_n,
            p: self.cfg.init_p,
            t: 0,
            e0,
            et: e0,
            estimate,
            stability: 0,
            actions: Vec::new(),
            done: false,
        };
        let trace = TraceStep {
            step: 0,
            n_percent: ep.n,
            minkowski_p: ep.p,
            estimate: ep.estimate.illuminant.rgb(),
            fallback: ep.estimate.is_fallback(),
            error: e0,
            reward: None,
        };
        let state = self.state_of(&ep);
        self.episode = Some(ep);
        Ok((state, trace))
    }

    fn state_of(&self, ep: &Episode) -> EnvState {
        EnvState {
            hist: Arc::clone(&ep.image.hist),
            history: encode_history(&ep.actions, ep.t, self.cfg.t_max),
        }
    }

    /// Applies a rescaled action `(dN, dp)`.
    pub fn step(&mut self, action: [f64; 2]) -> Result<StepOutcome> {
        let cfg = self.cfg;
        let ep = self
            .episode
            .as_mut()
            .ok_or_else(|| AwbError::InvalidParameter("step before reset".into()))?;
        if ep.done {
            return Err(AwbError::EpisodeDone);
        }
        if action.iter().any(|a| !a.is_finite()) {
            return Err(AwbError::InvalidParameter(format!("non-finite action {action:?}")));
        }
        let a = [
            action[0].clamp(-MAX_DELTA_N, MAX_DELTA_N),
            action[1].clamp(-MAX_DELTA_P, MAX_DELTA_P),
        ];
        let bounds = &cfg.sgp.bounds;
        ep.n = bounds.clamp_n(ep.n + a[0]);
        ep.p = bounds.clamp_p(ep.p + a[1]);
        let estimate = ep.image.prepared.estimate(ep.n, ep.p)?;
        if estimate.illuminant.angle_to(&ep.estimate.illuminant) < cfg.stability_tol {
            ep.stability += 1;
        } else {
            ep.stability = 0;
        }
        ep.estimate = estimate;
        ep.t += 1;
        ep.actions.push(a);
        ep.done = ep.stability >= cfg.stable_steps || ep.t >= cfg.t_max;

        let (reward, error) = match (ep.e0, ep.stats) {
            (Some(e0), Some(stats)) => {
                let et = ep.image.error_of(&ep.estimate)?;
                ep.et = Some(et);
                let mut r = reward_err(e0, et, stats.c1, &cfg.reward)
                    + (1.0 - e0 / stats.c2) * reward_act(a[0], a[1], &cfg.reward);
                if ep.done {
                    r += terminal_bonus(e0, et);
                }
                (r, Some(et))
            }
            _ => (0.0, None),
        };
        let trace = TraceStep {
            step: ep.t,
            n_percent: ep.n,
            minkowski_p: ep.p,
            estimate: ep.estimate.illuminant.rgb(),
            fallback: ep.estimate.is_fallback(),
            error,
            reward: (self.mode == EnvMode::Train).then_some(reward),
        };
        let done = ep.done;
        let state = self.state_of(self.episode.as_ref().expect("episode"));
        Ok(StepOutcome {
            state,
            reward,
            done,
            trace,
        })
    }

    pub fn is_done(&self) -> bool {
        self.episode.as_ref().is_none_or(|e| e.done)
    }

    pub fn steps_taken(&self) -> usize {
        self.episode.as_ref().map_or(0, |e| e.t)
    }

    pub fn params(&self) -> Option<(f64, f64)> {
        self.episode.as_ref().map(|e| (e.n, e.p))
    }

    pub fn current_estimate(&self) -> Option<&Estimate> {
        self.episode.as_ref().map(|e| &e.estimate)
    }

    /// `(E0, Et)` in training mode.
    pub fn errors(&self) -> Option<(f64, f64)> {
        let e = self.episode.as_ref()?;
        Some((e.e0?, e.et?))
    }

    /// Final-to-initial error ratio of the current episode.
    pub fn rho(&self) -> Option<f64> {
        self.errors().map(|(e0, et)| et / e0.max(1e-12))
    }
}

/// Which pool image each episode uses.
#[derive(Debug, Clone)]
pub struct CurriculumSchedule {
    pool_len: usize,
    episodes_per_image: usize,
    episode: usize,
}

impl CurriculumSchedule {
    /// Stage 1 cycles a single image; stage 2 gives each pool image
    /// `episodes_per_image` consecutive episodes, wrapping around.
    pub fn new(stage: u8, pool_len: usize, episodes_per_image: usize) -> Result<Self> {
        if pool_len == 0 {
            return Err(AwbError::InvalidParameter("empty curriculum pool".into()));
        }
        match stage {
            1 if pool_len != 1 => Err(AwbError::InvalidParameter(
                "stage 1 uses exactly one image".into(),
            )),
            1 | 2 => Ok(Self {
                pool_len,
                episodes_per_image: episodes_per_image.max(1),
                episode: 0,
            }),
            _ => Err(AwbError::InvalidParameter(format!("unknown stage {stage}"))),
        }
    }
}

impl Iterator for CurriculumSchedule {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        let i = (self.episode / self.episodes_per_image) % self.pool_len;
        self.episode += 1;
        Some(i)
    }
}
