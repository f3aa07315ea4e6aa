//! Scalar monotone maps used inside generator blocks (droop gains, cost
//! gradients, output nonlinearities).

use serde::{Deserialize, Serialize};

/// Monotone nondecreasing scalar map `y = f(x)` with `f(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarMap {
    /// `gain * x`
    Linear { gain: f64 },
    /// Zero on `[-width, width]`, slope `gain` outside.
    Deadband { gain: f64, width: f64 },
    /// `clamp(gain * x, -limit, limit)`
    Saturation { gain: f64, limit: f64 },
    /// `limit * tanh(gain * x / limit)`
    Tanh { gain: f64, limit: f64 },
    /// `linear * x + cubic * x^3`; strongly monotone but with unbounded slope,
    /// so it is only meaningful as a cost gradient.
    Cubic { linear: f64, cubic: f64 },
}

impl ScalarMap {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            ScalarMap::Linear { gain } => gain * x,
            ScalarMap::Deadband { gain, width } => {
                if x > width {
                    gain * (x - width)
                } else if x < -width {
                    gain * (x + width)
                } else {
                    0.0
                }
            }
            ScalarMap::Saturation { gain, limit } => (gain * x).clamp(-limit, limit),
            ScalarMap::Tanh { gain, limit } => limit * (gain * x / limit).tanh(),
            ScalarMap::Cubic { linear, cubic } => linear * x + cubic * x * x * x,
        }
    }

    /// Incremental Lipschitz bound: `|f(x) - f(y)| <= max_slope * |x - y|`.
    pub fn max_slope(&self) -> f64 {
        match *self {
            ScalarMap::Linear { gain }
            | ScalarMap::Deadband { gain, .. }
            | ScalarMap::Saturation { gain, .. }
            | ScalarMap::Tanh { gain, .. } => gain,
            ScalarMap::Cubic { cubic, linear } => {
                if cubic == 0.0 {
                    linear
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// Strong monotonicity modulus: `(x - y)(f(x) - f(y)) >= min_slope * (x - y)^2`.
    pub fn min_slope(&self) -> f64 {
        match *self {
            ScalarMap::Linear { gain } => gain,
            ScalarMap::Cubic { linear, .. } => linear,
            ScalarMap::Deadband { .. } | ScalarMap::Saturation { .. } | ScalarMap::Tanh { .. } => 0.0,
        }
    }

    /// Gain of the map when it is exactly linear.
    pub fn linear_gain(&self) -> Option<f64> {
        match *self {
            ScalarMap::Linear { gain } => Some(gain),
            ScalarMap::Deadband { gain, width } if width == 0.0 => Some(gain),
            ScalarMap::Cubic { linear, cubic } if cubic == 0.0 => Some(linear),
            _ => None,
        }
    }

    /// Slope parameter that droop sweeps act on.
    pub fn gain(&self) -> f64 {
        match *self {
            ScalarMap::Linear { gain }
            | ScalarMap::Deadband { gain, .. }
            | ScalarMap::Saturation { gain, .. }
            | ScalarMap::Tanh { gain, .. } => gain,
            ScalarMap::Cubic { linear, .. } => linear,
        }
    }

    pub fn with_gain(&self, g: f64) -> ScalarMap {
        let mut out = self.clone();
        match &mut out {
            ScalarMap::Linear { gain }
            | ScalarMap::Deadband { gain, .. }
            | ScalarMap::Saturation { gain, .. }
            | ScalarMap::Tanh { gain, .. } => *gain = g,
            ScalarMap::Cubic { linear, .. } => *linear = g,
        }
        out
    }

    /// Checks parameter signs; returns a description of the first violation.
    pub fn validate(&self) -> Result<(), String> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(format!("{name} must be positive and finite, got {v}"))
            }
        };
        match *self {
            ScalarMap::Linear { gain } => positive("gain", gain),
            ScalarMap::Deadband { gain, width } => {
                positive("gain", gain)?;
                if width.is_finite() && width >= 0.0 {
                    Ok(())
                } else {
                    Err(format!("deadband width must be nonnegative, got {width}"))
                }
            }
            ScalarMap::Saturation { gain, limit } | ScalarMap::Tanh { gain, limit } => {
                positive("gain", gain)?;
                positive("limit", limit)
            }
            ScalarMap::Cubic { linear, cubic } => {
                positive("linear coefficient", linear)?;
                if cubic.is_finite() && cubic >= 0.0 {
                    Ok(())
                } else {
                    Err(format!("cubic coefficient must be nonnegative, got {cubic}"))
                }
            }
        }
    }

    /// Solves `f(x) = y` for strongly monotone maps (`min_slope > 0`).
    pub fn inverse(&self, y: f64) -> Option<f64> {
        let m = self.min_slope();
        if !(m > 0.0) {
            return None;
        }
        if let Some(g) = self.linear_gain() {
            return Some(y / g);
        }
        // |x*| <= |y| / m by strong monotonicity and f(0) = 0.
        let r = y.abs() / m;
        let (mut lo, mut hi) = (-r, r);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if self.eval(mid) < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(0.5 * (lo + hi))
    }
}
