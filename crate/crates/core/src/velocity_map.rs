//! NSC to blending-coefficient mapping and the aggressive/safe velocity pair.

use serde::{Deserialize, Serialize};
use thiserror::Error;

const NSC_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MappingError {
    #[error("normalized curvature {0} outside [0, 1]")]
    Domain(f64),
    #[error("invalid mapping sensitivity alpha = {0} (must be > 0)")]
    InvalidAlpha(f64),
    #[error("invalid factor: {0}")]
    InvalidFactor(String),
    #[error("invalid velocity bounds: {0}")]
    InvalidBounds(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MappingParams {
    pub alpha: f64,
}

impl Default for MappingParams {
    fn default() -> Self {
        Self { alpha: 3.0 }
    }
}

impl MappingParams {
    pub fn new(alpha: f64) -> Result<Self, MappingError> {
        let p = Self { alpha };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), MappingError> {
        if self.alpha > 0.0 && self.alpha.is_finite() {
            Ok(())
        } else {
            Err(MappingError::InvalidAlpha(self.alpha))
        }
    }

    /// Value of the mapping at NSC = 1, the floor of the blending weight.
    pub fn lower_truncation(&self) -> f64 {
        (-self.alpha).exp()
    }
}

/// `beta = exp(-alpha * nsc^2)`. Inputs within 1e-9 outside `[0, 1]` are clamped.
pub fn map_nsc_to_beta(nsc: f64, params: &MappingParams) -> Result<f64, MappingError> {
    params.validate()?;
    if !(-NSC_TOLERANCE..=1.0 + NSC_TOLERANCE).contains(&nsc) {
        return Err(MappingError::Domain(nsc));
    }
    let nsc = nsc.clamp(0.0, 1.0);
    Ok((-params.alpha * nsc * nsc).exp())
}

/// Overall-velocity pair: body velocity `v_l` and progress velocity `v_p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverallVelocity {
    pub v_l: f64,
    pub v_p: f64,
}

impl From<[f64; 2]> for OverallVelocity {
    fn from([v_l, v_p]: [f64; 2]) -> Self {
        Self { v_l, v_p }
    }
}

/// Aggressive (`v_bar`) and safe (`v_under`) overall-velocity targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VelocityBounds {
    pub v_bar: [f64; 2],
    pub v_under: [f64; 2],
}

impl Default for VelocityBounds {
    /// Rounded table values: (4.18, 3.8) and (2.72, 2.47) m/s.
    fn default() -> Self {
        Self { v_bar: [4.18, 3.8], v_under: [2.72, 2.47] }
    }
}

impl VelocityBounds {
    pub fn validate(&self) -> Result<(), MappingError> {
        for i in 0..2 {
            if !(0.0 < self.v_under[i] && self.v_under[i] < self.v_bar[i]) {
                return Err(MappingError::InvalidBounds(format!(
                    "need 0 < v_under < v_bar componentwise, got v_under = {:?}, v_bar = {:?}",
                    self.v_under, self.v_bar
                )));
            }
        }
        Ok(())
    }

    pub fn aggressive(&self) -> OverallVelocity {
        self.v_bar.into()
    }

    pub fn safe(&self) -> OverallVelocity {
        self.v_under.into()
    }
}

/// Derives both velocity pairs from the expert's fastest progress velocity.
pub fn derive_velocity_bounds(expert_vp: f64, body_factor: f64, discount: f64) -> Result<VelocityBounds, MappingError> {
    if !(expert_vp > 0.0) {
        return Err(MappingError::InvalidFactor(format!("expert velocity {expert_vp} must be > 0")));
    }
    if !(discount > 0.0 && discount < 1.0) {
        return Err(MappingError::InvalidFactor(format!("discount {discount} must lie in (0, 1)")));
    }
    if !(body_factor >= 1.0) {
        return Err(MappingError::InvalidFactor(format!("body factor {body_factor} must be >= 1")));
    }
    let v_bar = [expert_vp * body_factor, expert_vp];
    Ok(VelocityBounds { v_bar, v_under: [v_bar[0] * discount, v_bar[1] * discount] })
}
