//! Angular error metrics and the benchmark summary statistics.

use serde::{Deserialize, Serialize};

use crate::error::{AwbError, Result};

fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// `atan2(|a x b|, a . b)`; stays accurate for nearly parallel vectors,
/// where `acos` of the normalized dot product loses half its digits.
fn angle_deg(a: [f64; 3], b: [f64; 3]) -> f64 {
    let (a, b) = (unit(a), unit(b));
    let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let cross = [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ];
    norm(cross).atan2(dot).to_degrees()
}

fn unit(v: [f64; 3]) -> [f64; 3] {
    let n = norm(v);
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Angle in degrees between estimated and true illuminant.
pub fn recovery_angular_error(est: [f64; 3], gt: [f64; 3]) -> Result<f64> {
    for (name, v) in [("estimate", est), ("ground truth", gt)] {
        let n = norm(v);
        if !(n > 0.0) || !n.is_finite() {
            return Err(AwbError::ZeroVector(format!("{name} {v:?}")));
        }
    }
    Ok(angle_deg(est, gt))
}

/// Angle in degrees between `gt / est` and the ideal white.
pub fn reproduction_angular_error(est: [f64; 3], gt: [f64; 3]) -> Result<f64> {
    if est.iter().any(|c| !(*c > 0.0)) {
        return Err(AwbError::ZeroVector(format!("estimate {est:?}")));
    }
    let ll = [gt[0] / est[0], gt[1] / est[1], gt[2] / est[2]];
    if !(norm(ll) > 0.0) {
        return Err(AwbError::ZeroVector(format!("ground truth {gt:?}")));
    }
    Ok(angle_deg(ll, [1.0, 1.0, 1.0]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub median: f64,
    pub mean: f64,
    pub tri_mean: f64,
    pub best25: f64,
    pub worst25: f64,
    pub count: usize,
}

/// Linearly interpolated quantile of sorted data (the "type 7" rule).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(errors: &[f64]) -> Result<ErrorSummary> {
    if errors.is_empty() {
        return Err(AwbError::InvalidParameter("cannot summarize an empty error list".into()));
    }
    if errors.iter().any(|e| !e.is_finite()) {
        return Err(AwbError::InvalidParameter("non-finite angular error".into()));
    }
    let mut s = errors.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let q = n.div_ceil(4);
    let mean_of = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (q1, q2, q3) = (
        quantile_sorted(&s, 0.25),
        quantile_sorted(&s, 0.5),
        quantile_sorted(&s, 0.75),
    );
    Ok(ErrorSummary {
        median: q2,
        mean: mean_of(&s),
        tri_mean: (q1 + 2.0 * q2 + q3) / 4.0,
        best25: mean_of(&s[..q]),
        worst25: mean_of(&s[n - q..]),
        count: n,
    })
}
