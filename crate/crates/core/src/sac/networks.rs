//! Dual-branch encoder, squashed-Gaussian actor and Q critic.

use std::collections::HashMap;
use std::ops::Range;
use std::sync::Arc;

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::nn::{relu_backward, relu_inplace, Dense, ParamSet};
use crate::features::{EnvState, HistogramFeature, HISTORY_DIM};

pub const ACTION_DIM: usize = 2;
pub const LOGVAR_MIN: f64 = -20.0;
pub const LOGVAR_MAX: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    pub hist_dim: usize,
    pub hist_hidden: usize,
    pub embed: usize,
    pub history_dim: usize,
    pub history_hidden: usize,
    pub head_hidden: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            hist_dim: 3 * 60 * 60,
            hist_hidden: 256,
            embed: 64,
            history_dim: HISTORY_DIM,
            history_hidden: 32,
            head_hidden: 64,
        }
    }
}

impl NetConfig {
    pub fn fused(&self) -> usize {
        2 * self.embed
    }
}

/// A batch of observations with histogram rows deduplicated.
#[derive(Debug, Clone)]
pub struct ObsBatch {
    /// Sparse `(index, value)` form of each distinct histogram.
    pub hist_rows: Vec<Vec<(u32, f64)>>,
    /// Distinct-histogram index of each sample.
    pub index: Vec<usize>,
    pub history: Array2<f64>,
}

impl ObsBatch {
    pub fn from_states<'a>(states: impl IntoIterator<Item = &'a EnvState>) -> Self {
        let mut seen: HashMap<*const HistogramFeature, usize> = HashMap::new();
        let mut hist_rows = Vec::new();
        let mut index = Vec::new();
        let mut history = Vec::new();
        for st in states {
            let key = Arc::as_ptr(&st.hist);
            let u = *seen.entry(key).or_insert_with(|| {
                hist_rows.push(st.hist.nonzero());
                hist_rows.len() - 1
            });
            index.push(u);
            history.extend_from_slice(&st.history);
        }
        let n = index.len();
        Self {
            hist_rows,
            index,
            history: Array2::from_shape_vec((n, HISTORY_DIM), history).expect("history shape"),
        }
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Histogram feature indices present in the batch.
    pub fn active_rows(&self) -> impl Iterator<Item = u32> + '_ {
        self.hist_rows.iter().flatten().map(|(k, _)| *k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Encoder {
    pub hist1: Dense,
    pub hist2: Dense,
    pub hst1: Dense,
    pub hst2: Dense,
}

#[derive(Debug, Clone)]
pub struct EncoderCache {
    a1: Array2<f64>,
    z_wb: Array2<f64>,
    b1: Array2<f64>,
    z_hist: Array2<f64>,
    pub fused: Array2<f64>,
}

impl Encoder {
    fn register(ps: &mut ParamSet, cfg: &NetConfig) -> Self {
        Self {
            hist1: Dense::register(ps, "hist.0", cfg.hist_dim, cfg.hist_hidden),
            hist2: Dense::register(ps, "hist.1", cfg.hist_hidden, cfg.embed),
            hst1: Dense::register(ps, "history.0", cfg.history_dim, cfg.history_hidden),
            hst2: Dense::register(ps, "history.1", cfg.history_hidden, cfg.embed),
        }
    }

    fn init(&self, p: &mut [f64], rng: &mut impl Rng) {
        for l in [self.hist1, self.hist2, self.hst1, self.hst2] {
            l.init(p, rng);
        }
    }

    fn forward(&self, p: &[f64], obs: &ObsBatch) -> EncoderCache {
        let mut a1 = self.hist1.forward_sparse(p, &obs.hist_rows);
        relu_inplace(&mut a1);
        let mut z_wb = self.hist2.forward(p, a1.view());
        relu_inplace(&mut z_wb);
        let mut b1 = self.hst1.forward(p, obs.history.view());
        relu_inplace(&mut b1);
        let mut z_hist = self.hst2.forward(p, b1.view());
        relu_inplace(&mut z_hist);
        let e = self.hist2.n_out;
        let mut fused = Array2::zeros((obs.len(), 2 * e));
        for (i, &u) in obs.index.iter().enumerate() {
            fused.slice_mut(s![i, ..e]).assign(&z_wb.row(u));
            fused.slice_mut(s![i, e..]).assign(&z_hist.row(i));
        }
        EncoderCache {
            a1,
            z_wb,
            b1,
            z_hist,
            fused,
        }
    }

    fn backward(&self, p: &[f64], g: &mut [f64], obs: &ObsBatch, c: &EncoderCache, d_fused: ArrayView2<f64>) {
        let e = self.hist2.n_out;
        let mut dz_wb = Array2::zeros(c.z_wb.raw_dim());
        for (i, &u) in obs.index.iter().enumerate() {
            let mut row = dz_wb.row_mut(u);
            row += &d_fused.slice(s![i, ..e]);
        }
        relu_backward(&mut dz_wb, &c.z_wb);
        let mut da1 = self
            .hist2
            .backward(p, Some(g), c.a1.view(), dz_wb.view(), true)
            .expect("dx");
        relu_backward(&mut da1, &c.a1);
        self.hist1.backward_sparse(g, &obs.hist_rows, da1.view());

        let mut dz_hist = d_fused.slice(s![.., e..]).to_owned();
        relu_backward(&mut dz_hist, &c.z_hist);
        let mut db1 = self
            .hst2
            .backward(p, Some(g), c.b1.view(), dz_hist.view(), true)
            .expect("dx");
        relu_backward(&mut db1, &c.b1);
        self.hst1.backward(p, Some(g), obs.history.view(), db1.view(), false);
    }
}

/// Parameter ranges that can change: every tensor except the sparse first
/// layer, plus that layer's rows listed in `active`.
fn trainable_ranges(ps: &ParamSet, first: &Dense, active: &[u32]) -> Vec<Range<usize>> {
    let skip = first.w..first.w + first.n_in * first.n_out;
    let mut out: Vec<Range<usize>> = ps
        .specs
        .iter()
        .map(|s| s.range())
        .filter(|r| *r != skip)
        .collect();
    out.extend(active.iter().map(|&k| first.row_range(k as usize)));
    out
}

#[derive(Debug, Clone)]
pub struct Actor {
    pub cfg: NetConfig,
    pub params: ParamSet,
    enc: Encoder,
    head1: Dense,
    head2: Dense,
}

#[derive(Debug, Clone)]
pub struct ActorForward {
    enc: EncoderCache,
    h: Array2<f64>,
    pub mu: Array2<f64>,
    /// Clamped log-variance.
    pub logvar: Array2<f64>,
    clamped: Array2<bool>,
}

impl Actor {
    pub fn new(cfg: NetConfig, rng: &mut impl Rng) -> Self {
        let mut a = Self::zeroed(cfg);
        a.enc.init(&mut a.params.data, rng);
        a.head1.init(&mut a.params.data, rng);
        a.head2.init(&mut a.params.data, rng);
        a
    }

    /// All parameters zero: the policy mean is zero everywhere.
    pub fn zeroed(cfg: NetConfig) -> Self {
        let mut params = ParamSet::default();
        let enc = Encoder::register(&mut params, &cfg);
        let head1 = Dense::register(&mut params, "head.0", cfg.fused(), cfg.head_hidden);
        let head2 = Dense::register(&mut params, "head.1", cfg.head_hidden, 2 * ACTION_DIM);
        Self {
            cfg,
            params,
            enc,
            head1,
            head2,
        }
    }

    pub fn forward(&self, obs: &ObsBatch) -> ActorForward {
        let p = &self.params.data;
        let enc = self.enc.forward(p, obs);
        let mut h = self.head1.forward(p, enc.fused.view());
        relu_inplace(&mut h);
        let out = self.head2.forward(p, h.view());
        let mu = out.slice(s![.., ..ACTION_DIM]).to_owned();
        let raw = out.slice(s![.., ACTION_DIM..]);
        let clamped = raw.mapv(|v| !(LOGVAR_MIN..=LOGVAR_MAX).contains(&v));
        let logvar = raw.mapv(|v| v.clamp(LOGVAR_MIN, LOGVAR_MAX));
        ActorForward {
            enc,
            h,
            mu,
            logvar,
            clamped,
        }
    }

    /// Accumulates gradients given `dL/dmu` and `dL/dlogvar` (post-clamp).
    pub fn backward(
        &self,
        g: &mut [f64],
        obs: &ObsBatch,
        fwd: &ActorForward,
        d_mu: ArrayView2<f64>,
        d_logvar: ArrayView2<f64>,
    ) {
        let p = &self.params.data;
        let mut d_out = Array2::zeros((obs.len(), 2 * ACTION_DIM));
        d_out.slice_mut(s![.., ..ACTION_DIM]).assign(&d_mu);
        d_out.slice_mut(s![.., ACTION_DIM..]).assign(&d_logvar);
        ndarray::Zip::from(d_out.slice_mut(s![.., ACTION_DIM..]))
            .and(&fwd.clamped)
            .for_each(|d, &c| {
                if c {
                    *d = 0.0;
                }
            });
        let mut dh = self
            .head2
            .backward(p, Some(g), fwd.h.view(), d_out.view(), true)
            .expect("dx");
        relu_backward(&mut dh, &fwd.h);
        let d_fused = self
            .head1
            .backward(p, Some(g), fwd.enc.fused.view(), dh.view(), true)
            .expect("dx");
        self.enc.backward(p, g, obs, &fwd.enc, d_fused.view());
    }

    pub fn trainable_ranges(&self, active: &[u32]) -> Vec<Range<usize>> {
        trainable_ranges(&self.params, &self.enc.hist1, active)
    }
}

#[derive(Debug, Clone)]
pub struct Critic {
    pub cfg: NetConfig,
    pub params: ParamSet,
    enc: Encoder,
    head1: Dense,
    head2: Dense,
}

#[derive(Debug, Clone)]
pub struct CriticForward {
    enc: EncoderCache,
    x: Array2<f64>,
    h: Array2<f64>,
    pub q: Vec<f64>,
}

impl Critic {
    pub fn new(cfg: NetConfig, rng: &mut impl Rng) -> Self {
        let mut params = ParamSet::default();
        let enc = Encoder::register(&mut params, &cfg);
        let head1 = Dense::register(&mut params, "head.0", cfg.fused() + ACTION_DIM, cfg.head_hidden);
        let head2 = Dense::register(&mut params, "head.1", cfg.head_hidden, 1);
        enc.init(&mut params.data, rng);
        head1.init(&mut params.data, rng);
        head2.init(&mut params.data, rng);
        Self {
            cfg,
            params,
            enc,
            head1,
            head2,
        }
    }

    /// `actions` are in unit (pre-rescale) coordinates, one row per sample.
    pub fn forward(&self, obs: &ObsBatch, actions: ArrayView2<f64>) -> CriticForward {
        let p = &self.params.data;
        let enc = self.enc.forward(p, obs);
        let f = self.cfg.fused();
        let mut x = Array2::zeros((obs.len(), f + ACTION_DIM));
        x.slice_mut(s![.., ..f]).assign(&enc.fused);
        x.slice_mut(s![.., f..]).assign(&actions);
        let mut h = self.head1.forward(p, x.view());
        relu_inplace(&mut h);
        let q = self.head2.forward(p, h.view()).index_axis(Axis(1), 0).to_vec();
        CriticForward { enc, x, h, q }
    }

    /// Backpropagates `dL/dq`. Parameter gradients go to `g` when given;
    /// returns `dL/daction`.
    pub fn backward(
        &self,
        g: Option<&mut [f64]>,
        obs: &ObsBatch,
        fwd: &CriticForward,
        dq: &[f64],
    ) -> Array2<f64> {
        let p = &self.params.data;
        let dq = Array2::from_shape_vec((dq.len(), 1), dq.to_vec()).expect("dq shape");
        let f = self.cfg.fused();
        match g {
            Some(g) => {
                let mut dh = self
                    .head2
                    .backward(p, Some(&mut *g), fwd.h.view(), dq.view(), true)
                    .expect("dx");
                relu_backward(&mut dh, &fwd.h);
                let dx = self
                    .head1
                    .backward(p, Some(&mut *g), fwd.x.view(), dh.view(), true)
                    .expect("dx");
                self.enc.backward(p, g, obs, &fwd.enc, dx.slice(s![.., ..f]));
                dx.slice(s![.., f..]).to_owned()
            }
            None => {
                let mut dh = self.head2.backward(p, None, fwd.h.view(), dq.view(), true).expect("dx");
                relu_backward(&mut dh, &fwd.h);
                self.head1.input_grad_columns(p, dh.view(), f..f + ACTION_DIM)
            }
        }
    }

    pub fn trainable_ranges(&self, active: &[u32]) -> Vec<Range<usize>> {
        trainable_ranges(&self.params, &self.enc.hist1, active)
    }
}
