use serde::{Deserialize, Serialize};

use crate::error::{AwbError, Result};

/// Unit-norm RGB direction of the scene illuminant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IlluminantEstimate {
    rgb: [f64; 3],
}

impl IlluminantEstimate {
    /// Normalizes `raw` to unit length. Components must be finite and
    /// non-negative with a non-zero norm.
    pub fn from_raw(raw: [f64; 3]) -> Result<Self> {
        if raw.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(AwbError::ZeroVector(format!(
                "illuminant components must be finite and non-negative, got {raw:?}"
            )));
        }
        let norm = raw.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm <= 0.0 {
            return Err(AwbError::ZeroVector("illuminant has zero norm".into()));
        }
        Ok(Self {
            rgb: [raw[0] / norm, raw[1] / norm, raw[2] / norm],
        })
    }

    pub fn neutral() -> Self {
        let c = 1.0 / 3f64.sqrt();
        Self { rgb: [c, c, c] }
    }

    pub fn rgb(&self) -> [f64; 3] {
        self.rgb
    }

    /// Angle in degrees to another estimate.
    pub fn angle_to(&self, other: &IlluminantEstimate) -> f64 {
        let dot: f64 = self.rgb.iter().zip(other.rgb.iter()).map(|(a, b)| a * b).sum();
        dot.clamp(-1.0, 1.0).acos().to_degrees()
    }
}

impl From<IlluminantEstimate> for [f64; 3] {
    fn from(e: IlluminantEstimate) -> Self {
        e.rgb
    }
}
