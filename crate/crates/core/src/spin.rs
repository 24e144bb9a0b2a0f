//! Exact statistical mechanics of small Ising systems.
//!
//! Everything here works by full enumeration of the `2^n` spin
//! configurations, so it is only usable for `n <= MAX_ENUMERATION_SPINS`.
//! The results serve as the ground truth that the mean-field and dynamical
//! approximations elsewhere in the crate are checked against.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest system that [`brute_force_partition`] will enumerate.
pub const MAX_ENUMERATION_SPINS: usize = 24;

/// Symmetric coupling matrix with zero diagonal, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct ConnectionMatrix {
    n: usize,
    data: Vec<f64>,
}

impl ConnectionMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    /// Builds a matrix from row-major data, validating symmetry, a zero
    /// diagonal and finiteness.
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch {
                context: "connection matrix data",
                expected: n * n,
                actual: data.len(),
            });
        }
        let m = Self { n, data };
        m.validate()?;
        Ok(m)
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in &rows {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    context: "connection matrix row",
                    expected: n,
                    actual: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(n, data)
    }

    /// Symmetric matrix with off-diagonal entries drawn uniformly from
    /// `[-scale, scale]`.
    pub fn random<R: Rng + ?Sized>(n: usize, scale: f64, rng: &mut R) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in (i + 1)..n {
                let w = rng.gen_range(-scale..=scale);
                m.data[i * n + j] = w;
                m.data[j * n + i] = w;
            }
        }
        m
    }

    /// Two unconnected subnetworks side by side.
    pub fn block_diagonal(a: &Self, b: &Self) -> Self {
        let n = a.n + b.n;
        let mut m = Self::zeros(n);
        for i in 0..a.n {
            for j in 0..a.n {
                m.data[i * n + j] = a.get(i, j);
            }
        }
        for i in 0..b.n {
            for j in 0..b.n {
                m.data[(a.n + i) * n + a.n + j] = b.get(i, j);
            }
        }
        m
    }

    fn validate(&self) -> Result<()> {
        let n = self.n;
        if self.data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("connection matrix"));
        }
        for i in 0..n {
            let d = self.data[i * n + i];
            if d != 0.0 {
                return Err(Error::NonzeroDiagonal(i, d));
            }
            for j in (i + 1)..n {
                let (a, b) = (self.data[i * n + j], self.data[j * n + i]);
                if a != b {
                    return Err(Error::NotSymmetric { i, j, a, b });
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Sets `T[i][j]` and `T[j][i]` together. Diagonal writes are ignored.
    pub fn set_pair(&mut self, i: usize, j: usize, value: f64) {
        if i == j {
            return;
        }
        let n = self.n;
        self.data[i * n + j] = value;
        self.data[j * n + i] = value;
    }

    /// `sum_j T[i][j] x[j]`
    pub fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        self.row(i).iter().zip(x).map(|(t, x)| t * x).sum()
    }

    /// Maximum absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.n.max(1)).map(|r| r.to_vec()).collect()
    }
}

impl TryFrom<Vec<Vec<f64>>> for ConnectionMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(rows)
    }
}

impl From<ConnectionMatrix> for Vec<Vec<f64>> {
    fn from(m: ConnectionMatrix) -> Self {
        if m.n == 0 {
            return Vec::new();
        }
        m.to_rows()
    }
}

/// External field (bias) per unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldVector(Vec<f64>);

impl FieldVector {
    pub fn new(h: Vec<f64>) -> Result<Self> {
        if h.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("field vector"));
        }
        Ok(Self(h))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn random<R: Rng + ?Sized>(n: usize, scale: f64, rng: &mut R) -> Self {
        Self((0..n).map(|_| rng.gen_range(-scale..=scale)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::Index<usize> for FieldVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// A configuration of `+1`/`-1` spins.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpinConfig(Vec<i8>);

impl SpinConfig {
    pub fn new(s: Vec<i8>) -> Result<Self> {
        for (i, &x) in s.iter().enumerate() {
            if x != 1 && x != -1 {
                return Err(Error::InvalidSpin(f64::from(x), i));
            }
        }
        Ok(Self(s))
    }

    pub fn from_f64(s: &[f64]) -> Result<Self> {
        s.iter()
            .enumerate()
            .map(|(i, &x)| {
                if x == 1.0 {
                    Ok(1)
                } else if x == -1.0 {
                    Ok(-1)
                } else {
                    Err(Error::InvalidSpin(x, i))
                }
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }

    /// State number `index` of the binary counter over `n` spins: bit `i`
    /// set means spin `i` is up.
    pub fn from_index(index: u64, n: usize) -> Self {
        Self(
            (0..n)
                .map(|i| if (index >> i) & 1 == 1 { 1 } else { -1 })
                .collect(),
        )
    }

    /// Sign of each entry, with `sign(0) = +1`.
    pub fn binarize(x: &[f64]) -> Self {
        Self(x.iter().map(|&v| if v >= 0.0 { 1 } else { -1 }).collect())
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        Self(
            (0..n)
                .map(|_| if rng.gen_bool(0.5) { 1 } else { -1 })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn spins(&self) -> &[i8] {
        &self.0
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        f64::from(self.0[i])
    }

    pub fn flip(&mut self, i: usize) {
        self.0[i] = -self.0[i];
    }

    pub fn set(&mut self, i: usize, up: bool) {
        self.0[i] = if up { 1 } else { -1 };
    }

    pub fn negated(&self) -> Self {
        Self(self.0.iter().map(|s| -s).collect())
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&s| f64::from(s)).collect()
    }

    /// Number of positions where the two configurations agree.
    pub fn overlap_count(&self, other: &Self) -> usize {
        self.0.iter().zip(&other.0).filter(|(a, b)| a == b).count()
    }
}

/// `beta = 1/T` with Boltzmann's constant set to one.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct InverseTemperature(f64);

impl InverseTemperature {
    pub fn new(beta: f64) -> Result<Self> {
        if beta.is_finite() && beta > 0.0 {
            Ok(Self(beta))
        } else {
            Err(Error::InvalidBeta(beta))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    pub fn temperature(self) -> f64 {
        1.0 / self.0
    }
}

impl TryFrom<f64> for InverseTemperature {
    type Error = Error;

    fn try_from(beta: f64) -> Result<Self> {
        Self::new(beta)
    }
}

impl From<InverseTemperature> for f64 {
    fn from(b: InverseTemperature) -> f64 {
        b.0
    }
}

/// Exact thermodynamic quantities obtained by enumeration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionResult {
    pub beta: f64,
    /// Partition function. May overflow to infinity for very cold systems;
    /// `log_z` stays finite.
    pub z: f64,
    pub log_z: f64,
    /// Free energy `-log(Z)/beta`.
    pub f: f64,
    /// Thermal average of the energy.
    pub mean_energy: f64,
    /// `-<log p>` under the Boltzmann distribution.
    pub entropy: f64,
    pub mean_spins: Vec<f64>,
    /// Row-major `n x n` matrix of `<s_i s_j>`, unit diagonal.
    pub pair_moments: Vec<f64>,
}

impl PartitionResult {
    pub fn n(&self) -> usize {
        self.mean_spins.len()
    }

    pub fn pair_moment(&self, i: usize, j: usize) -> f64 {
        self.pair_moments[i * self.n() + j]
    }
}

fn check_dims(t: &ConnectionMatrix, h: &FieldVector) -> Result<()> {
    if t.n() != h.len() {
        return Err(Error::DimensionMismatch {
            context: "field vector",
            expected: t.n(),
            actual: h.len(),
        });
    }
    Ok(())
}

/// Ising energy `-1/2 sum_{i != j} T_ij s_i s_j - sum_i h_i s_i`.
pub fn ising_energy(t: &ConnectionMatrix, h: &FieldVector, s: &SpinConfig) -> Result<f64> {
    check_dims(t, h)?;
    if s.len() != t.n() {
        return Err(Error::DimensionMismatch {
            context: "spin configuration",
            expected: t.n(),
            actual: s.len(),
        });
    }
    Ok(energy_unchecked(t, h.as_slice(), s.spins()))
}

fn energy_unchecked(t: &ConnectionMatrix, h: &[f64], s: &[i8]) -> f64 {
    let n = t.n();
    let mut pair = 0.0;
    for i in 0..n {
        let si = f64::from(s[i]);
        let row = t.row(i);
        let mut acc = 0.0;
        for j in 0..n {
            if j != i {
                acc += row[j] * f64::from(s[j]);
            }
        }
        pair += si * acc;
    }
    let field: f64 = h.iter().zip(s).map(|(h, &s)| h * f64::from(s)).sum();
    -0.5 * pair - field
}

fn check_enumerable(n: usize) -> Result<()> {
    if n > MAX_ENUMERATION_SPINS {
        return Err(Error::TooManySpins {
            n,
            limit: MAX_ENUMERATION_SPINS,
        });
    }
    Ok(())
}

/// Partition function, free energy, entropy and first/second moments by
/// summing over all `2^n` states.
///
/// Weights are accumulated relative to the largest `-beta H` seen so far,
/// so cold systems do not overflow.
pub fn brute_force_partition(
    t: &ConnectionMatrix,
    h: &FieldVector,
    beta: InverseTemperature,
) -> Result<PartitionResult> {
    check_dims(t, h)?;
    let n = t.n();
    check_enumerable(n)?;
    let b = beta.value();

    let mut shift = f64::NEG_INFINITY;
    let mut sum_w = 0.0;
    let mut sum_wh = 0.0;
    let mut sum_ws = vec![0.0; n];
    let mut sum_wss = vec![0.0; n * n];

    for index in 0..(1u64 << n) {
        let s = SpinConfig::from_index(index, n);
        let energy = energy_unchecked(t, h.as_slice(), s.spins());
        let a = -b * energy;
        if a > shift {
            let rescale = (shift - a).exp();
            sum_w *= rescale;
            sum_wh *= rescale;
            sum_ws.iter_mut().for_each(|x| *x *= rescale);
            sum_wss.iter_mut().for_each(|x| *x *= rescale);
            shift = a;
        }
        let w = (a - shift).exp();
        sum_w += w;
        sum_wh += w * energy;
        let spins = s.spins();
        for i in 0..n {
            let wi = w * f64::from(spins[i]);
            sum_ws[i] += wi;
            for j in (i + 1)..n {
                sum_wss[i * n + j] += wi * f64::from(spins[j]);
            }
        }
    }

    let log_z = shift + sum_w.ln();
    let mean_energy = sum_wh / sum_w;
    let mean_spins: Vec<f64> = sum_ws.iter().map(|x| x / sum_w).collect();
    let mut pair_moments = vec![0.0; n * n];
    for i in 0..n {
        pair_moments[i * n + i] = 1.0;
        for j in (i + 1)..n {
            let m = sum_wss[i * n + j] / sum_w;
            pair_moments[i * n + j] = m;
            pair_moments[j * n + i] = m;
        }
    }
    // -<log p> with log p = -beta H - log Z
    let entropy = b * mean_energy + log_z;

    Ok(PartitionResult {
        beta: b,
        z: log_z.exp(),
        log_z,
        f: -log_z / b,
        mean_energy,
        entropy,
        mean_spins,
        pair_moments,
    })
}

/// `exp(-beta H[s]) / Z`.
pub fn boltzmann_prob(
    t: &ConnectionMatrix,
    h: &FieldVector,
    beta: InverseTemperature,
    s: &SpinConfig,
) -> Result<f64> {
    let energy = ising_energy(t, h, s)?;
    let part = brute_force_partition(t, h, beta)?;
    Ok((-beta.value() * energy - part.log_z).exp())
}

/// Boltzmann probabilities of every state, in binary-counter order. Shares a
/// single partition-function evaluation across all states.
pub fn boltzmann_distribution(
    t: &ConnectionMatrix,
    h: &FieldVector,
    beta: InverseTemperature,
) -> Result<Vec<f64>> {
    let part = brute_force_partition(t, h, beta)?;
    let n = t.n();
    Ok((0..(1u64 << n))
        .map(|index| {
            let s = SpinConfig::from_index(index, n);
            let e = energy_unchecked(t, h.as_slice(), s.spins());
            (-beta.value() * e - part.log_z).exp()
        })
        .collect())
}
