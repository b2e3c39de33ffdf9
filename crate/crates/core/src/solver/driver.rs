use serde::{Deserialize, Serialize};

/// Driver `f(t, x, y, z)` of `dY = -f dt + Z dW`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DriverKind {
    Zero,
    /// `f = -r y`
    Discount {
        rate: f64,
    },
}

impl DriverKind {
    pub fn value(&self, _t: f64, _x: &[f64], y: f64, _z: &[f64]) -> f64 {
        match self {
            DriverKind::Zero => 0.0,
            DriverKind::Discount { rate } => -rate * y,
        }
    }

    /// `∂f/∂y`
    pub fn dy(&self, _t: f64, _x: &[f64], _y: f64, _z: &[f64]) -> f64 {
        match self {
            DriverKind::Zero => 0.0,
            DriverKind::Discount { rate } => -rate,
        }
    }

    /// `∂f/∂z` written into `out`.
    pub fn dz(&self, _t: f64, _x: &[f64], _y: f64, _z: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
    }
}
