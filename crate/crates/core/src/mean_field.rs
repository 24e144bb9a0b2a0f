//! Mean-field variational approximation to the Ising free energy.
//!
//! A product trial distribution with fields `u_i` gives the upper bound
//! `F <= E_MFT[v]` on the exact free energy, with `v_i = tanh(beta u_i)`.
//! This module evaluates that bound, relaxes it with fixed-point sweeps and
//! provides the multi-state (Potts) generalisations: softmax and soft-assign.

use serde::{Deserialize, Serialize};

use crate::activation::ActivationFunction;
use crate::error::{Error, Result};
use crate::spin::{brute_force_partition, ConnectionMatrix, FieldVector, InverseTemperature};

/// Distance kept from the edges of the activation range before evaluating
/// the entropy potential.
pub const CLAMP_EPS: f64 = 1e-12;

/// Whether mean-field units relax `+-1` spins or `{0, 1}` units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    /// `v in (-1, 1)`, `g = tanh`.
    Bipolar,
    /// `v in (0, 1)`, `g = logistic`.
    Unipolar,
}

impl ActivationKind {
    pub fn function(self, beta: InverseTemperature) -> ActivationFunction {
        match self {
            Self::Bipolar => ActivationFunction::tanh(beta.value()),
            Self::Unipolar => ActivationFunction::logistic(beta.value()),
        }
    }

    pub fn bounds(self) -> (f64, f64) {
        match self {
            Self::Bipolar => (-1.0, 1.0),
            Self::Unipolar => (0.0, 1.0),
        }
    }

    fn contains(self, v: f64) -> bool {
        let (lo, hi) = self.bounds();
        v > lo && v < hi
    }

    /// Pulls `v` at least [`CLAMP_EPS`] inside the open range.
    pub fn clamp(self, v: f64) -> f64 {
        let (lo, hi) = self.bounds();
        v.clamp(lo + CLAMP_EPS, hi - CLAMP_EPS)
    }
}

/// Relaxed (mean-field) state of the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Activation {
    v: Vec<f64>,
    kind: ActivationKind,
}

impl Activation {
    pub fn new(v: Vec<f64>, kind: ActivationKind) -> Result<Self> {
        let (lo, hi) = kind.bounds();
        for &x in &v {
            if !kind.contains(x) {
                return Err(Error::OutOfRange { value: x, lo, hi });
            }
        }
        Ok(Self { v, kind })
    }

    pub fn bipolar(v: Vec<f64>) -> Result<Self> {
        Self::new(v, ActivationKind::Bipolar)
    }

    /// Centre of the range for every unit (`0` or `1/2`).
    pub fn neutral(n: usize, kind: ActivationKind) -> Self {
        let (lo, hi) = kind.bounds();
        Self {
            v: vec![0.5 * (lo + hi); n],
            kind,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.v
    }

    pub fn kind(&self) -> ActivationKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.v
    }
}

/// Fields `u_i` of the product trial Hamiltonian `H_0 = -sum_i u_i s_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldParams {
    pub u: Vec<f64>,
}

impl MeanFieldParams {
    pub fn new(u: Vec<f64>) -> Result<Self> {
        if u.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("mean-field parameters"));
        }
        Ok(Self { u })
    }

    /// `v_i = <s_i>_0 = tanh(beta u_i)`.
    pub fn to_activation(&self, beta: InverseTemperature) -> Result<Activation> {
        let g = ActivationKind::Bipolar.function(beta);
        Activation::bipolar(self.u.iter().map(|&u| g.g(u)).collect())
    }

    pub fn from_activation(v: &Activation, beta: InverseTemperature) -> Self {
        let g = v.kind().function(beta);
        Self {
            u: v.values().iter().map(|&x| g.g_inverse(x)).collect(),
        }
    }
}

/// Rows of soft choices over `A` alternatives. Each row is a probability
/// vector; in the hard limit it is one-hot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PottsActivation {
    rows: usize,
    states: usize,
    v: Vec<f64>,
}

impl PottsActivation {
    /// Applies [`softmax_activation`] to each row of the `rows x states`
    /// matrix of fields `u` (row-major).
    pub fn from_fields(u: &[f64], states: usize, beta: InverseTemperature) -> Result<Self> {
        if states == 0 || u.len() % states != 0 {
            return Err(Error::DimensionMismatch {
                context: "potts fields",
                expected: states,
                actual: u.len(),
            });
        }
        let v = u
            .chunks(states)
            .flat_map(|row| softmax_activation(row, beta))
            .collect();
        Ok(Self {
            rows: u.len() / states,
            states,
            v,
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.v[i * self.states..(i + 1) * self.states]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn states(&self) -> usize {
        self.states
    }

    /// `sum_a v_ia log v_ia / beta` summed over rows.
    pub fn potential(&self, beta: InverseTemperature) -> f64 {
        self.v.iter().map(|&x| crate::activation::xlogx(x)).sum::<f64>() / beta.value()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateOrder {
    /// All units from the previous sweep's values.
    Synchronous,
    /// In index order, each unit seeing the already-updated earlier ones.
    Sequential,
}

/// Stopping rule and update scheme for iterative relaxations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixedPointConfig {
    /// Sup-norm residual threshold.
    pub tol: f64,
    pub max_sweeps: usize,
    /// `new = (1 - damping) * update + damping * old`.
    pub damping: f64,
    pub order: UpdateOrder,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_sweeps: 10_000,
            damping: 0.0,
            order: UpdateOrder::Sequential,
        }
    }
}

impl FixedPointConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidParameter(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_sweeps == 0 {
            return Err(Error::InvalidParameter("max_sweeps must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::InvalidParameter(format!(
                "damping must lie in [0, 1), got {}",
                self.damping
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointResult {
    pub activation: Activation,
    pub sweeps: usize,
    /// `||v - g(beta (T v + h))||_inf` at the returned state.
    pub residual: f64,
    pub converged: bool,
}

/// Entropy potential `phi(v)` for one unit.
pub fn phi_potential(kind: ActivationKind, beta: InverseTemperature, v: f64) -> Result<f64> {
    if !kind.contains(v) {
        let (lo, hi) = kind.bounds();
        return Err(Error::OutOfRange { value: v, lo, hi });
    }
    Ok(kind.function(beta).potential(v))
}

fn check_dims(t: &ConnectionMatrix, h: &FieldVector, n: usize) -> Result<()> {
    if h.len() != t.n() {
        return Err(Error::DimensionMismatch {
            context: "field vector",
            expected: t.n(),
            actual: h.len(),
        });
    }
    if n != t.n() {
        return Err(Error::DimensionMismatch {
            context: "activation",
            expected: t.n(),
            actual: n,
        });
    }
    Ok(())
}

/// Interaction and field part `-1/2 sum_{i != j} T_ij v_i v_j - sum_i h_i v_i`.
pub(crate) fn quadratic_energy(t: &ConnectionMatrix, h: &[f64], v: &[f64]) -> f64 {
    let n = t.n();
    let mut pair = 0.0;
    for i in 0..n {
        let row = t.row(i);
        let mut acc = 0.0;
        for j in 0..n {
            if j != i {
                acc += row[j] * v[j];
            }
        }
        pair += v[i] * acc;
    }
    let field: f64 = h.iter().zip(v).map(|(h, v)| h * v).sum();
    -0.5 * pair - field
}

/// Mean-field free energy
/// `E_MFT[v] = -1/2 sum_{i != j} T_ij v_i v_j - sum_i h_i v_i + sum_i phi(v_i)`.
pub fn mft_energy(
    t: &ConnectionMatrix,
    h: &FieldVector,
    beta: InverseTemperature,
    v: &Activation,
) -> Result<f64> {
    check_dims(t, h, v.len())?;
    let kind = v.kind();
    let g = kind.function(beta);
    let entropy: f64 = v.values().iter().map(|&x| g.potential(kind.clamp(x))).sum();
    Ok(quadratic_energy(t, h.as_slice(), v.values()) + entropy)
}

/// The same bound written in terms of the trial fields before eliminating
/// them: `-1/2 sum T v v - sum (h - u) v - (1/beta) sum log(2 cosh(beta u))`
/// with `v = tanh(beta u)`.
pub fn trial_free_energy(
    t: &ConnectionMatrix,
    h: &FieldVector,
    beta: InverseTemperature,
    params: &MeanFieldParams,
) -> Result<f64> {
    check_dims(t, h, params.u.len())?;
    let b = beta.value();
    let v: Vec<f64> = params.u.iter().map(|&u| (b * u).tanh()).collect();
    let mut e = quadratic_energy(t, h.as_slice(), &v);
    for (&u, &vi) in params.u.iter().zip(&v) {
        let bu = (b * u).abs();
        // log(2 cosh x) = |x| + log(1 + e^{-2|x|})
        let log2cosh = bu + (-2.0 * bu).exp().ln_1p();
        e += u * vi - log2cosh / b;
    }
    Ok(e)
}

fn residual(t: &ConnectionMatrix, h: &[f64], g: &ActivationFunction, v: &[f64]) -> f64 {
    (0..v.len())
        .map(|i| (v[i] - g.g(t.row_dot(i, v) + h[i])).abs())
        .fold(0.0, f64::max)
}

/// Iterates `v_i <- g(beta (sum_j T_ij v_j + h_i))` until the sup-norm
/// residual drops below `cfg.tol`.
///
/// Exhausting `max_sweeps` is not an error: the iterate with the smallest
/// residual is returned with `converged = false`.
pub fn fixed_point_iterate(
    t: &ConnectionMatrix,
    h: &FieldVector,
    beta: InverseTemperature,
    v0: &Activation,
    cfg: &FixedPointConfig,
) -> Result<FixedPointResult> {
    cfg.validate()?;
    check_dims(t, h, v0.len())?;
    let kind = v0.kind();
    let g = kind.function(beta);
    let h = h.as_slice();
    let n = t.n();
    let d = cfg.damping;

    let mut v = v0.values().to_vec();
    let mut scratch = vec![0.0; n];
    let mut best = (residual(t, h, &g, &v), v.clone(), 0usize);
    if best.0 <= cfg.tol {
        return Ok(FixedPointResult {
            activation: v0.clone(),
            sweeps: 0,
            residual: best.0,
            converged: true,
        });
    }

    for sweep in 1..=cfg.max_sweeps {
        match cfg.order {
            UpdateOrder::Sequential => {
                for i in 0..n {
                    let target = g.g(t.row_dot(i, &v) + h[i]);
                    v[i] = kind.clamp((1.0 - d) * target + d * v[i]);
                }
            }
            UpdateOrder::Synchronous => {
                for (i, s) in scratch.iter_mut().enumerate() {
                    let target = g.g(t.row_dot(i, &v) + h[i]);
                    *s = kind.clamp((1.0 - d) * target + d * v[i]);
                }
                v.copy_from_slice(&scratch);
            }
        }
        let r = residual(t, h, &g, &v);
        if !r.is_finite() {
            return Err(Error::Diverged(sweep));
        }
        if r < best.0 {
            best = (r, v.clone(), sweep);
        }
        if r <= cfg.tol {
            return Ok(FixedPointResult {
                activation: Activation { v, kind },
                sweeps: sweep,
                residual: r,
                converged: true,
            });
        }
    }

    let (r, v, _) = best;
    Ok(FixedPointResult {
        activation: Activation { v, kind },
        sweeps: cfg.max_sweeps,
        residual: r,
        converged: false,
    })
}

/// `v_a = e^{beta u_a} / sum_b e^{beta u_b}`, shifted by `max(u)` first.
pub fn softmax_activation(u: &[f64], beta: InverseTemperature) -> Vec<f64> {
    let b = beta.value();
    let max = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = u.iter().map(|&x| (b * (x - max)).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|x| x / total).collect()
}

/// Output of [`softassign`].
#[derive(Debug, Clone, PartialEq)]
pub struct SoftassignResult {
    pub n: usize,
    /// Row-major `n x n` doubly stochastic matrix.
    pub matrix: Vec<f64>,
    pub sweeps: usize,
    /// Largest deviation of any row or column sum from one.
    pub residual: f64,
    pub converged: bool,
    /// Log row scalings `r_i` and column scalings `c_a` with
    /// `log matrix[i][a] = log m[i][a] + r_i + c_a`.
    pub row_log_scale: Vec<f64>,
    pub col_log_scale: Vec<f64>,
}

impl SoftassignResult {
    pub fn get(&self, i: usize, a: usize) -> f64 {
        self.matrix[i * self.n + a]
    }
}

/// Alternating row and column normalisation of a strictly positive square
/// matrix (row-major), converging to a doubly stochastic matrix.
pub fn softassign(m: &[f64], n: usize, cfg: &FixedPointConfig) -> Result<SoftassignResult> {
    if m.len() != n * n {
        return Err(Error::DimensionMismatch {
            context: "softassign matrix",
            expected: n * n,
            actual: m.len(),
        });
    }
    for (k, &x) in m.iter().enumerate() {
        if !(x > 0.0) || !x.is_finite() {
            return Err(Error::NonPositiveEntry(k / n, k % n, x));
        }
    }
    let log_m: Vec<f64> = m.iter().map(|x| x.ln()).collect();
    softassign_log(&log_m, n, cfg)
}

fn log_sum_exp<I: Iterator<Item = f64> + Clone>(xs: I) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// [`softassign`] on `log m`. The normalisations are carried out in the log
/// domain, so entries of `m` far below the smallest positive `f64` (as
/// produced by `exp(beta * q)` at large `beta`) are handled exactly.
pub fn softassign_log(log_m: &[f64], n: usize, cfg: &FixedPointConfig) -> Result<SoftassignResult> {
    cfg.validate()?;
    if n == 0 || log_m.len() != n * n {
        return Err(Error::DimensionMismatch {
            context: "softassign matrix",
            expected: n * n,
            actual: log_m.len(),
        });
    }
    if log_m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("softassign log-matrix"));
    }
    let mut l = log_m.to_vec();
    let mut row_log_scale = vec![0.0; n];
    let mut col_log_scale = vec![0.0; n];
    let mut residual = f64::INFINITY;
    let mut sweeps = 0;
    while sweeps < cfg.max_sweeps {
        sweeps += 1;
        for (i, r) in row_log_scale.iter_mut().enumerate() {
            let row = &mut l[i * n..(i + 1) * n];
            let lse = log_sum_exp(row.iter().copied());
            row.iter_mut().for_each(|x| *x -= lse);
            *r -= lse;
        }
        for (a, c) in col_log_scale.iter_mut().enumerate() {
            let lse = log_sum_exp((0..n).map(|i| l[i * n + a]));
            for i in 0..n {
                l[i * n + a] -= lse;
            }
            *c -= lse;
        }
        residual = row_col_residual(&l, n);
        if residual <= cfg.tol {
            break;
        }
    }
    Ok(SoftassignResult {
        n,
        matrix: l.iter().map(|x| x.exp()).collect(),
        sweeps,
        residual,
        converged: residual <= cfg.tol,
        row_log_scale,
        col_log_scale,
    })
}

fn row_col_residual(l: &[f64], n: usize) -> f64 {
    let mut r: f64 = 0.0;
    for i in 0..n {
        let s: f64 = l[i * n..(i + 1) * n].iter().map(|x| x.exp()).sum();
        r = r.max((s - 1.0).abs());
    }
    for a in 0..n {
        let s: f64 = (0..n).map(|i| l[i * n + a].exp()).sum();
        r = r.max((s - 1.0).abs());
    }
    r
}

/// Exact free energy, mean-field bound and their difference for one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCheck {
    pub f_exact: f64,
    pub e_mft: f64,
    /// `e_mft - f_exact`; non-negative up to rounding.
    pub gap: f64,
}

/// Compares `E_MFT[v]` against the enumerated free energy. Only the bipolar
/// (spin) form has an Ising partition function to compare with.
pub fn verify_bound(
    t: &ConnectionMatrix,
    h: &FieldVector,
    beta: InverseTemperature,
    v: &Activation,
) -> Result<BoundCheck> {
    if v.kind() != ActivationKind::Bipolar {
        return Err(Error::InvalidParameter(
            "bound check requires bipolar activations".into(),
        ));
    }
    let exact = brute_force_partition(t, h, beta)?;
    let e_mft = mft_energy(t, h, beta, v)?;
    Ok(BoundCheck {
        f_exact: exact.f,
        e_mft,
        gap: e_mft - exact.f,
    })
}
