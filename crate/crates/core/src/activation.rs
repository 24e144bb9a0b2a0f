//! Monotone activation functions `g` together with their inverse, derivative
//! and the entropy-like potential `phi` whose derivative is `g^-1`.

use serde::{Deserialize, Serialize};

/// A pointwise, strictly increasing activation function.
///
/// `gain` plays the role of the inverse temperature: `Tanh { gain }` is
/// `v = tanh(gain * u)` and `Logistic { gain }` is `v = 1/(1 + e^{-gain u})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum ActivationFunction {
    Identity,
    Tanh { gain: f64 },
    Logistic { gain: f64 },
}

impl ActivationFunction {
    pub fn tanh(gain: f64) -> Self {
        Self::Tanh { gain }
    }

    pub fn logistic(gain: f64) -> Self {
        Self::Logistic { gain }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::Tanh { .. } => "tanh",
            Self::Logistic { .. } => "logistic",
        }
    }

    #[inline]
    pub fn g(&self, u: f64) -> f64 {
        match *self {
            Self::Identity => u,
            Self::Tanh { gain } => (gain * u).tanh(),
            Self::Logistic { gain } => logistic(gain * u),
        }
    }

    #[inline]
    pub fn g_prime(&self, u: f64) -> f64 {
        match *self {
            Self::Identity => 1.0,
            Self::Tanh { gain } => {
                let y = (gain * u).tanh();
                gain * (1.0 - y * y)
            }
            Self::Logistic { gain } => {
                let y = logistic(gain * u);
                gain * y * (1.0 - y)
            }
        }
    }

    /// Inverse of `g`; infinite at the edges of the output range.
    pub fn g_inverse(&self, v: f64) -> f64 {
        match *self {
            Self::Identity => v,
            Self::Tanh { gain } => v.atanh() / gain,
            Self::Logistic { gain } => (v / (1.0 - v)).ln() / gain,
        }
    }

    /// Open output range of `g`.
    pub fn range(&self) -> (f64, f64) {
        match self {
            Self::Identity => (f64::NEG_INFINITY, f64::INFINITY),
            Self::Tanh { .. } => (-1.0, 1.0),
            Self::Logistic { .. } => (0.0, 1.0),
        }
    }

    /// Potential `phi(v)` with `phi'(v) = g^-1(v)`.
    ///
    /// For tanh this is `(1/gain)` times the negative binary entropy of the
    /// up/down probabilities `(1 +- v)/2`; for the logistic it is the same
    /// expression in `v` and `1 - v`; for the identity it is `v^2 / 2`.
    pub fn potential(&self, v: f64) -> f64 {
        match *self {
            Self::Identity => 0.5 * v * v,
            Self::Tanh { gain } => {
                let p = 0.5 * (1.0 + v);
                let q = 0.5 * (1.0 - v);
                (xlogx(p) + xlogx(q)) / gain
            }
            Self::Logistic { gain } => (xlogx(v) + xlogx(1.0 - v)) / gain,
        }
    }
}

#[inline]
pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}
