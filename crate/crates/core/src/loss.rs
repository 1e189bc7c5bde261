//! Loss families with their convex conjugates and smoothness constants.
//!
//! Each family evaluates `l(a)` for a margin argument `a = w'x` and label `y`,
//! and the conjugate term `l*(-alpha)` that appears per-example in the dual
//! objective. Infeasible dual arguments yield `+inf` rather than an error, so
//! the dual objective is total.

use serde::{Deserialize, Serialize};

/// Loss family together with the smoothness constant `gamma`: each loss is
/// `(1/gamma)`-smooth, equivalently its conjugate is `gamma`-strongly convex.
/// Hinge has `gamma = 0` (non-smooth); logistic has `gamma = 4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum LossModel {
    Hinge,
    SmoothedHinge { gamma: f64 },
    Logistic,
}

impl LossModel {
    pub fn gamma(&self) -> f64 {
        match self {
            LossModel::Hinge => 0.0,
            LossModel::SmoothedHinge { gamma } => *gamma,
            LossModel::Logistic => 4.0,
        }
    }

    pub fn is_smooth(&self) -> bool {
        self.gamma() > 0.0
    }

    pub fn name(&self) -> &'static str {
        match self {
            LossModel::Hinge => "hinge",
            LossModel::SmoothedHinge { .. } => "smoothed_hinge",
            LossModel::Logistic => "logistic",
        }
    }

    /// Loss value at margin argument `a` with label `y`.
    pub fn eval(&self, a: f64, y: f64) -> f64 {
        let m = y * a;
        match self {
            LossModel::Hinge => (1.0 - m).max(0.0),
            LossModel::SmoothedHinge { gamma } => {
                if m >= 1.0 {
                    0.0
                } else if m <= 1.0 - gamma {
                    1.0 - m - gamma / 2.0
                } else {
                    (1.0 - m) * (1.0 - m) / (2.0 * gamma)
                }
            }
            LossModel::Logistic => {
                // log(1 + exp(-m)) without overflow for very negative m
                if m < -35.0 {
                    -m
                } else {
                    (-m).exp().ln_1p()
                }
            }
        }
    }

    /// Conjugate term `l*(-alpha)`; `+inf` outside the feasible domain.
    /// The domain is `alpha * y` in `[0, 1]` for all three families.
    pub fn conj(&self, alpha: f64, y: f64) -> f64 {
        let u = alpha * y;
        if !(0.0..=1.0).contains(&u) {
            return f64::INFINITY;
        }
        match self {
            LossModel::Hinge => -u,
            LossModel::SmoothedHinge { gamma } => -u + gamma / 2.0 * u * u,
            LossModel::Logistic => {
                let left = if u == 0.0 { 0.0 } else { u * u.ln() };
                let right = if u == 1.0 {
                    0.0
                } else {
                    (1.0 - u) * (1.0 - u).ln()
                };
                left + right
            }
        }
    }

    /// Derivative of the loss in its margin argument; defined for the smooth
    /// families (used by smoothness checks and subgradient baselines).
    pub fn deriv(&self, a: f64, y: f64) -> f64 {
        let m = y * a;
        match self {
            LossModel::Hinge => {
                if m < 1.0 {
                    -y
                } else {
                    0.0
                }
            }
            LossModel::SmoothedHinge { gamma } => {
                if m >= 1.0 {
                    0.0
                } else if m <= 1.0 - gamma {
                    -y
                } else {
                    -y * (1.0 - m) / gamma
                }
            }
            LossModel::Logistic => {
                let s = if m > 35.0 {
                    (-m).exp()
                } else {
                    1.0 / (1.0 + m.exp())
                };
                -y * s
            }
        }
    }
}
