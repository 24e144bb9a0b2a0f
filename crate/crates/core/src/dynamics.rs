//! Continuous-time analog network `tau_i du_i/dt + u_i = sum_j T_ij v_j + h_i`,
//! `v_i = g(u_i)`, integrated with forward Euler.
//!
//! For symmetric `T` with zero diagonal and increasing `g` the energy
//! `E[v] = -1/2 sum T v v - sum h v + sum phi(v)` is a Lyapunov function of
//! the continuous flow.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::activation::ActivationFunction;
use crate::error::{Error, Result};
use crate::mean_field::quadratic_energy;
use crate::spin::{ConnectionMatrix, FieldVector};

/// Internal potentials `u` and outputs `v = g(u)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronState {
    u: Vec<f64>,
    v: Vec<f64>,
}

impl NeuronState {
    pub fn from_potentials(u: Vec<f64>, g: &ActivationFunction) -> Self {
        let v = u.iter().map(|&x| g.g(x)).collect();
        Self { u, v }
    }

    /// State whose output is `v`. Fails if `v` is outside the range of `g`.
    pub fn from_outputs(v: &[f64], g: &ActivationFunction) -> Result<Self> {
        let u: Vec<f64> = v.iter().map(|&x| g.g_inverse(x)).collect();
        if u.iter().any(|x| !x.is_finite()) {
            let (lo, hi) = g.range();
            let value = *v.iter().find(|x| !(**x > lo && **x < hi)).unwrap_or(&f64::NAN);
            return Err(Error::OutOfRange { value, lo, hi });
        }
        Ok(Self::from_potentials(u, g))
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub dt: f64,
    /// Time constant per unit.
    pub tau: Vec<f64>,
    pub steps: usize,
    /// Record every this many steps (the initial and final states are
    /// always recorded).
    pub record_every: usize,
}

impl IntegratorConfig {
    /// Same time constant for all `n` units.
    pub fn uniform(n: usize, dt: f64, tau: f64, steps: usize) -> Self {
        Self {
            dt,
            tau: vec![tau; n],
            steps,
            record_every: 1,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.tau.len() != n {
            return Err(Error::DimensionMismatch {
                context: "time constants",
                expected: n,
                actual: self.tau.len(),
            });
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        for &tau in &self.tau {
            if !(tau > 0.0 && tau.is_finite()) {
                return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
            }
            if self.dt / tau > 1.0 {
                return Err(Error::InvalidParameter(format!(
                    "dt/tau = {} exceeds 1",
                    self.dt / tau
                )));
            }
        }
        if self.record_every == 0 {
            return Err(Error::InvalidParameter("record_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Recorded states of an integration run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<NeuronState>,
    pub energies: Vec<f64>,
}

impl Trajectory {
    pub fn last(&self) -> &NeuronState {
        self.states.last().expect("trajectory always holds the initial state")
    }

    /// CSV with columns `time,energy,v_0,...,v_{n-1}`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let n = self.states.first().map_or(0, NeuronState::len);
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        let mut header = vec!["time".to_string(), "energy".to_string()];
        header.extend((0..n).map(|i| format!("v_{i}")));
        w.write_record(&header).map_err(csv_err)?;
        for ((t, e), s) in self.times.iter().zip(&self.energies).zip(&self.states) {
            let mut rec = vec![t.to_string(), e.to_string()];
            rec.extend(s.v().iter().map(f64::to_string));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Parse(e.to_string()))?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

fn check_dims(state: &NeuronState, t: &ConnectionMatrix, h: &FieldVector) -> Result<()> {
    for (context, len) in [("neuron state", state.len()), ("field vector", h.len())] {
        if len != t.n() {
            return Err(Error::DimensionMismatch {
                context,
                expected: t.n(),
                actual: len,
            });
        }
    }
    Ok(())
}

/// Lyapunov energy `-1/2 sum_{i != j} T_ij v_i v_j - sum_i h_i v_i + sum_i phi(v_i)`.
pub fn analog_energy(
    t: &ConnectionMatrix,
    h: &FieldVector,
    g: &ActivationFunction,
    v: &[f64],
) -> f64 {
    quadratic_energy(t, h.as_slice(), v) + v.iter().map(|&x| g.potential(x)).sum::<f64>()
}

/// One forward-Euler step
/// `u_i <- (1 - dt/tau_i) u_i + (dt/tau_i)(sum_j T_ij v_j + h_i)`, `v = g(u)`.
pub fn euler_step(
    state: &NeuronState,
    t: &ConnectionMatrix,
    h: &FieldVector,
    g: &ActivationFunction,
    cfg: &IntegratorConfig,
) -> Result<NeuronState> {
    check_dims(state, t, h)?;
    cfg.validate(t.n())?;
    Ok(step_unchecked(state, t, h.as_slice(), g, cfg))
}

fn step_unchecked(
    state: &NeuronState,
    t: &ConnectionMatrix,
    h: &[f64],
    g: &ActivationFunction,
    cfg: &IntegratorConfig,
) -> NeuronState {
    let u = (0..t.n())
        .map(|i| {
            let a = cfg.dt / cfg.tau[i];
            let drive = t.row_dot(i, &state.v) + h[i];
            (1.0 - a) * state.u[i] + a * drive
        })
        .collect();
    NeuronState::from_potentials(u, g)
}

/// Runs `cfg.steps` Euler steps from `state0`, recording time, state and
/// Lyapunov energy. Aborts with [`Error::Diverged`] at the first non-finite
/// state.
pub fn integrate(
    state0: &NeuronState,
    t: &ConnectionMatrix,
    h: &FieldVector,
    g: &ActivationFunction,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    check_dims(state0, t, h)?;
    cfg.validate(t.n())?;
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![state0.clone()],
        energies: vec![analog_energy(t, h, g, state0.v())],
    };
    let mut state = state0.clone();
    for k in 1..=cfg.steps {
        state = step_unchecked(&state, t, h.as_slice(), g, cfg);
        if state.u.iter().chain(&state.v).any(|x| !x.is_finite()) {
            return Err(Error::Diverged(k));
        }
        if k % cfg.record_every == 0 || k == cfg.steps {
            traj.times.push(k as f64 * cfg.dt);
            traj.energies.push(analog_energy(t, h, g, state.v()));
            traj.states.push(state.clone());
        }
    }
    Ok(traj)
}
