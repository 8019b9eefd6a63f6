//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use nightawb_core::features::{encode_history, rgb_uv_histogram, EnvState, HistogramConfig};
use nightawb_core::sac::Transition;
use nightawb_core::synth::{render, SceneSpec};
use nightawb_core::LinearImage;

/// A noisy synthetic night scene of `size`x`size` pixels.
pub fn night_scene(size: usize, seed: u64) -> LinearImage {
    let mut spec = SceneSpec::random(size, size, seed);
    spec.noise_sigma = 0.006;
    spec.gray_fraction = 0.3;
    render(&spec).expect("valid scene").image
}

/// `n` transitions over histograms of a few distinct scenes, with varied
/// action histories.
pub fn transitions(n: usize, scenes: usize, size: usize) -> Vec<Transition> {
    let cfg = HistogramConfig::default();
    let hists: Vec<_> = (0..scenes as u64)
        .map(|s| Arc::new(rgb_uv_histogram(&night_scene(size, 100 + s), &cfg)))
        .collect();
    let state = |i: usize, t: usize| {
        let actions: Vec<[f64; 2]> = (0..t)
            .map(|k| {
                let x = ((i * 7 + k * 3) % 11) as f64 / 10.0;
                [x, 1.0 - x]
            })
            .collect();
        EnvState {
            hist: Arc::clone(&hists[i % scenes]),
            history: encode_history(&actions, t, 15),
        }
    };
    (0..n)
        .map(|i| {
            let t = i % 14;
            Transition {
                state: state(i, t),
                action: [0.2, -0.4],
                reward: 0.1,
                next_state: state(i, t + 1),
                done: false,
            }
        })
        .collect()
}
