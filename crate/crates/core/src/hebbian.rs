//! Hebbian learning of a coupling matrix and content-addressable recall.
//!
//! In learning mode the spins are clamped to an imposed pattern and the
//! couplings relax towards `c s_i s_j`; presented repeatedly with a
//! population of patterns they settle on the population average. In recall
//! mode the couplings are frozen and the spins descend the energy from a
//! probe.

use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spin::{ConnectionMatrix, FieldVector, SpinConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HebbMode {
    Learning,
    Recall,
}

/// Weights of the combined spin/coupling energy and the coupling dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HebbConfig {
    /// Weight `A` of the external-field term.
    pub a_weight: f64,
    /// Weight `B` of the coupling terms.
    pub b_weight: f64,
    /// Target scale `c` of the learned couplings.
    pub c_scale: f64,
    /// Time constant of the coupling dynamics.
    pub tau_t: f64,
    pub mode: HebbMode,
}

impl HebbConfig {
    /// Learning mode with the field term dominant (`A = 1`, `B = 0`).
    pub fn learning(c_scale: f64, tau_t: f64) -> Result<Self> {
        let cfg = Self {
            a_weight: 1.0,
            b_weight: 0.0,
            c_scale,
            tau_t,
            mode: HebbMode::Learning,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Recall mode with the coupling term dominant (`A = 0`, `B = 1`).
    pub fn recall(c_scale: f64, tau_t: f64) -> Result<Self> {
        let cfg = Self {
            a_weight: 0.0,
            b_weight: 1.0,
            c_scale,
            tau_t,
            mode: HebbMode::Recall,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.a_weight, self.b_weight, self.c_scale, self.tau_t]
            .iter()
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::NonFinite("hebbian config"));
        }
        if self.a_weight < 0.0 || self.b_weight < 0.0 {
            return Err(Error::InvalidParameter(
                "mode weights A and B must be nonnegative".into(),
            ));
        }
        // c = 0 is allowed: it is the degenerate "learn nothing" case.
        if self.c_scale < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "c_scale must be nonnegative, got {}",
                self.c_scale
            )));
        }
        if self.tau_t <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "tau_t must be positive, got {}",
                self.tau_t
            )));
        }
        match self.mode {
            HebbMode::Learning if self.a_weight <= self.b_weight => Err(Error::InvalidParameter(
                "learning mode needs A > B".into(),
            )),
            HebbMode::Recall if self.b_weight <= self.a_weight => Err(Error::InvalidParameter(
                "recall mode needs B > A".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// Patterns to be stored, with presentation weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternSet {
    patterns: Vec<SpinConfig>,
    weights: Vec<f64>,
}

impl PatternSet {
    /// Uniformly weighted set.
    pub fn new(patterns: Vec<SpinConfig>) -> Result<Self> {
        let p = patterns.len();
        let weights = vec![1.0 / p.max(1) as f64; p];
        Self::with_weights(patterns, weights)
    }

    pub fn with_weights(patterns: Vec<SpinConfig>, weights: Vec<f64>) -> Result<Self> {
        let first = patterns.first().ok_or(Error::Empty("pattern set"))?;
        let n = first.len();
        for p in &patterns {
            if p.len() != n {
                return Err(Error::DimensionMismatch {
                    context: "pattern length",
                    expected: n,
                    actual: p.len(),
                });
            }
        }
        if weights.len() != patterns.len() {
            return Err(Error::DimensionMismatch {
                context: "presentation weights",
                expected: patterns.len(),
                actual: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidParameter(
                "presentation weights must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "presentation weights sum to {total}, not 1"
            )));
        }
        Ok(Self { patterns, weights })
    }

    /// `n` random patterns of length `len`.
    pub fn random<R: Rng + ?Sized>(count: usize, len: usize, rng: &mut R) -> Result<Self> {
        Self::new((0..count).map(|_| SpinConfig::random(len, rng)).collect())
    }

    pub fn patterns(&self) -> &[SpinConfig] {
        &self.patterns
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    /// Length of each pattern.
    pub fn width(&self) -> usize {
        self.patterns[0].len()
    }

    /// `c sum_p w_p s^p s^pT` with the diagonal zeroed: the matrix that
    /// learning converges to.
    pub fn hebbian_average(&self, c: f64) -> ConnectionMatrix {
        let n = self.width();
        let mut t = ConnectionMatrix::zeros(n);
        for i in 0..n {
            for j in (i + 1)..n {
                let avg: f64 = self
                    .patterns
                    .iter()
                    .zip(&self.weights)
                    .map(|(p, w)| w * p.get(i) * p.get(j))
                    .sum();
                t.set_pair(i, j, c * avg);
            }
        }
        t
    }

    /// Parses one pattern per line using `+`/`-` or `1`/`0`. Blank lines are
    /// skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut patterns = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let s = line
                .chars()
                .map(|c| match c {
                    '+' | '1' => Ok(1),
                    '-' | '0' => Ok(-1),
                    other => Err(Error::Parse(format!(
                        "line {}: unexpected character {other:?} in pattern",
                        lineno + 1
                    ))),
                })
                .collect::<Result<Vec<i8>>>()?;
            patterns.push(SpinConfig::new(s)?);
        }
        Self::new(patterns)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// `+`/`-` text, one pattern per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for p in &self.patterns {
            out.push_str(&pattern_string(p));
            out.push('\n');
        }
        out
    }
}

pub fn pattern_string(s: &SpinConfig) -> String {
    s.spins()
        .iter()
        .map(|&x| if x > 0 { '+' } else { '-' })
        .collect()
}

/// Learned couplings; symmetric with zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MemoryMatrix {
    t: ConnectionMatrix,
}

impl MemoryMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            t: ConnectionMatrix::zeros(n),
        }
    }

    pub fn n(&self) -> usize {
        self.t.n()
    }

    pub fn connections(&self) -> &ConnectionMatrix {
        &self.t
    }

    pub fn into_connections(self) -> ConnectionMatrix {
        self.t
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.t.get(i, j)
    }
}

impl From<ConnectionMatrix> for MemoryMatrix {
    fn from(t: ConnectionMatrix) -> Self {
        Self { t }
    }
}

fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        });
    }
    Ok(())
}

/// `-A sum_i h_i s_i - B sum_{i<j} T_ij s_i s_j + B sum_{i<j} T_ij^2 / 2c`
pub fn combined_energy(
    s: &SpinConfig,
    t: &MemoryMatrix,
    h: &FieldVector,
    cfg: &HebbConfig,
) -> Result<f64> {
    let n = t.n();
    check_len("spin configuration", n, s.len())?;
    check_len("field vector", n, h.len())?;
    let field: f64 = (0..n).map(|i| h[i] * s.get(i)).sum();
    let mut pair = 0.0;
    let mut phi = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let tij = t.get(i, j);
            pair += tij * s.get(i) * s.get(j);
            if tij != 0.0 {
                phi += tij * tij;
            }
        }
    }
    let phi = if phi == 0.0 {
        0.0
    } else {
        phi / (2.0 * cfg.c_scale)
    };
    Ok(-cfg.a_weight * field - cfg.b_weight * pair + cfg.b_weight * phi)
}

/// Derivative of [`combined_energy`] with respect to each unordered pair
/// coupling `T_ij`, returned as a symmetric `n x n` matrix (zero diagonal).
pub fn combined_energy_gradient(
    s: &SpinConfig,
    t: &MemoryMatrix,
    cfg: &HebbConfig,
) -> Result<Vec<f64>> {
    let n = t.n();
    check_len("spin configuration", n, s.len())?;
    let mut g = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                g[i * n + j] =
                    cfg.b_weight * (t.get(i, j) / cfg.c_scale - s.get(i) * s.get(j));
            }
        }
    }
    Ok(g)
}

/// One explicit Euler step of `tau dT/dt + T = c s s^T` off the diagonal.
pub fn hebb_step(t: &MemoryMatrix, s: &SpinConfig, cfg: &HebbConfig, dt: f64) -> Result<MemoryMatrix> {
    let mut next = t.clone();
    hebb_step_in_place(&mut next, s, cfg, dt)?;
    Ok(next)
}

fn hebb_step_in_place(t: &mut MemoryMatrix, s: &SpinConfig, cfg: &HebbConfig, dt: f64) -> Result<()> {
    if cfg.mode == HebbMode::Recall {
        return Err(Error::RecallModeUpdate);
    }
    check_len("spin configuration", t.n(), s.len())?;
    let a = dt / cfg.tau_t;
    if !(0.0..=1.0).contains(&a) {
        return Err(Error::OutOfRange {
            value: a,
            lo: 0.0,
            hi: 1.0,
        });
    }
    if a == 0.0 {
        return Ok(());
    }
    let n = t.n();
    let target = cfg.c_scale;
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (1.0 - a) * t.get(i, j) + a * target * s.get(i) * s.get(j);
            t.t.set_pair(i, j, v);
        }
    }
    Ok(())
}

/// Learning-mode step driven by an external input `h`: the spins track the
/// input by taking its sign (`sign(0) = +1`).
pub fn present_input(t: &MemoryMatrix, h: &FieldVector, cfg: &HebbConfig, dt: f64) -> Result<MemoryMatrix> {
    hebb_step(t, &SpinConfig::binarize(h.as_slice()), cfg, dt)
}

/// Learns from zero couplings by presenting every pattern once per sweep in
/// round-robin order. Pattern `p` is applied with step `dt * P * w_p`, so
/// uniform weights use `dt` itself.
pub fn learn(patterns: &PatternSet, cfg: &HebbConfig, dt: f64, sweeps: usize) -> Result<MemoryMatrix> {
    if patterns.is_empty() {
        return Err(Error::Empty("pattern set"));
    }
    cfg.validate()?;
    let count = patterns.len() as f64;
    let mut t = MemoryMatrix::zeros(patterns.width());
    for _ in 0..sweeps {
        for (p, &w) in patterns.patterns.iter().zip(&patterns.weights) {
            hebb_step_in_place(&mut t, p, cfg, dt * count * w)?;
        }
    }
    Ok(t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallResult {
    pub state: SpinConfig,
    pub converged: bool,
    /// Energy after the probe is loaded and after every accepted flip.
    pub energy_trace: Vec<f64>,
    pub sweeps: usize,
}

/// `-sum_{i<j} T_ij s_i s_j - h_weight sum_i probe_i s_i`
pub fn recall_energy(t: &MemoryMatrix, s: &SpinConfig, probe: &SpinConfig, h_weight: f64) -> f64 {
    let n = t.n();
    let mut e = 0.0;
    for i in 0..n {
        let si = s.get(i);
        for j in (i + 1)..n {
            e -= t.get(i, j) * si * s.get(j);
        }
        e -= h_weight * probe.get(i) * si;
    }
    e
}

/// Asynchronous sign dynamics from `probe`, visiting units in index order.
///
/// Stops after the first sweep with no flips (`converged`) or after
/// `max_sweeps`. The energy trace is updated by the exact change of each
/// flip, `-2|field|`, so it never increases.
pub fn recall(
    t: &MemoryMatrix,
    probe: &SpinConfig,
    h_weight: f64,
    max_sweeps: usize,
) -> Result<RecallResult> {
    let n = t.n();
    check_len("probe", n, probe.len())?;
    if !(h_weight >= 0.0 && h_weight.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "h_weight must be finite and nonnegative, got {h_weight}"
        )));
    }
    let mut s = probe.clone();
    let mut x = s.to_f64();
    let mut energy = recall_energy(t, &s, probe, h_weight);
    let mut trace = vec![energy];
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < max_sweeps {
        sweeps += 1;
        let mut changed = false;
        for i in 0..n {
            let field = t.t.row_dot(i, &x) + h_weight * probe.get(i);
            let up = field >= 0.0;
            if up != (x[i] > 0.0) {
                s.flip(i);
                x[i] = -x[i];
                energy -= 2.0 * field.abs();
                trace.push(energy);
                changed = true;
            }
        }
        if !changed {
            converged = true;
            break;
        }
    }
    Ok(RecallResult {
        state: s,
        converged,
        energy_trace: trace,
        sweeps,
    })
}

/// Copy of `s` with `flips` distinct randomly chosen entries negated.
pub fn corrupt<R: Rng + ?Sized>(s: &SpinConfig, flips: usize, rng: &mut R) -> Result<SpinConfig> {
    if flips > s.len() {
        return Err(Error::InvalidParameter(format!(
            "cannot flip {flips} of {} spins",
            s.len()
        )));
    }
    let mut out = s.clone();
    for i in sample(rng, s.len(), flips) {
        out.flip(i);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spins(s: &[i8]) -> SpinConfig {
        SpinConfig::new(s.to_vec()).unwrap()
    }

    fn stored(p: &SpinConfig, c: f64) -> MemoryMatrix {
        PatternSet::new(vec![p.clone()]).unwrap().hebbian_average(c).into()
    }

    fn learning() -> HebbConfig {
        HebbConfig::learning(1.0, 1.0).unwrap()
    }

    #[test]
    fn mode_weights_are_checked() {
        let mut cfg = learning();
        cfg.b_weight = 2.0;
        assert!(cfg.validate().is_err());
        let mut cfg = HebbConfig::recall(1.0, 1.0).unwrap();
        cfg.a_weight = 1.0;
        assert!(cfg.validate().is_err());
        assert!(HebbConfig::learning(1.0, 0.0).is_err());
        assert!(HebbConfig::learning(-1.0, 1.0).is_err());
    }

    #[test]
    fn field_only_energy() {
        let s = spins(&[1, -1, 1]);
        let h = FieldVector::new(vec![0.5, 0.25, -2.0]).unwrap();
        let e = combined_energy(&s, &MemoryMatrix::zeros(3), &h, &learning()).unwrap();
        assert_eq!(e, -(0.5 - 0.25 - 2.0));
    }

    #[test]
    fn single_pair_energy_includes_potential() {
        let c = 3.0;
        let mut t = MemoryMatrix::zeros(2);
        t.t.set_pair(0, 1, c);
        let cfg = HebbConfig {
            a_weight: 0.0,
            b_weight: 1.0,
            c_scale: c,
            tau_t: 1.0,
            mode: HebbMode::Recall,
        };
        let e = combined_energy(&spins(&[1, 1]), &t, &FieldVector::zeros(2), &cfg).unwrap();
        assert!((e + c / 2.0).abs() < 1e-15);
    }

    #[test]
    fn energy_rejects_mismatched_lengths() {
        let r = combined_energy(
            &spins(&[1, 1]),
            &MemoryMatrix::zeros(3),
            &FieldVector::zeros(3),
            &learning(),
        );
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn coupling_gradient_matches_central_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 5;
        let t: MemoryMatrix = ConnectionMatrix::random(n, 1.0, &mut rng).into();
        let s = SpinConfig::random(n, &mut rng);
        let h = FieldVector::random(n, 1.0, &mut rng);
        let cfg = HebbConfig {
            a_weight: 0.3,
            b_weight: 1.7,
            c_scale: 0.8,
            tau_t: 1.0,
            mode: HebbMode::Recall,
        };
        let grad = combined_energy_gradient(&s, &t, &cfg).unwrap();
        let step = 1e-5;
        for i in 0..n {
            for j in (i + 1)..n {
                let mut plus = t.clone();
                plus.t.set_pair(i, j, t.get(i, j) + step);
                let mut minus = t.clone();
                minus.t.set_pair(i, j, t.get(i, j) - step);
                let fd = (combined_energy(&s, &plus, &h, &cfg).unwrap()
                    - combined_energy(&s, &minus, &h, &cfg).unwrap())
                    / (2.0 * step);
                let expect = -cfg.b_weight * s.get(i) * s.get(j)
                    + cfg.b_weight * t.get(i, j) / cfg.c_scale;
                assert!((grad[i * n + j] - expect).abs() < 1e-14);
                assert!(
                    (fd - expect).abs() <= 1e-8 * expect.abs(),
                    "({i},{j}) fd {fd} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn repeated_presentation_halves_the_gap() {
        let s = spins(&[1, -1, -1, 1, 1]);
        let cfg = HebbConfig::learning(2.0, 1.0).unwrap();
        let mut t = MemoryMatrix::zeros(5);
        for k in 1..=30 {
            t = hebb_step(&t, &s, &cfg, 0.5).unwrap();
            let scale = 1.0 - 0.5f64.powi(k);
            for i in 0..5 {
                assert_eq!(t.get(i, i), 0.0);
                for j in 0..5 {
                    if i != j {
                        let expect = 2.0 * s.get(i) * s.get(j) * scale;
                        assert!((t.get(i, j) - expect).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn zero_step_leaves_couplings() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t: MemoryMatrix = ConnectionMatrix::random(6, 1.0, &mut rng).into();
        let s = SpinConfig::random(6, &mut rng);
        assert_eq!(hebb_step(&t, &s, &learning(), 0.0).unwrap(), t);
    }

    #[test]
    fn recall_mode_refuses_to_learn() {
        let cfg = HebbConfig::recall(1.0, 1.0).unwrap();
        let r = hebb_step(&MemoryMatrix::zeros(3), &spins(&[1, 1, 1]), &cfg, 0.1);
        assert_eq!(r, Err(Error::RecallModeUpdate));
    }

    #[test]
    fn oversized_step_is_rejected() {
        let r = hebb_step(&MemoryMatrix::zeros(2), &spins(&[1, 1]), &learning(), 1.5);
        assert!(matches!(r, Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn input_is_binarized() {
        let h = FieldVector::new(vec![0.3, -2.0, 0.0]).unwrap();
        let cfg = learning();
        let t = present_input(&MemoryMatrix::zeros(3), &h, &cfg, 1.0).unwrap();
        assert_eq!(t.get(0, 1), -1.0);
        assert_eq!(t.get(0, 2), 1.0);
        assert_eq!(t.get(1, 2), -1.0);
    }

    #[test]
    fn slow_alternation_reaches_population_average() {
        let a = spins(&[1, 1, -1, -1, 1, -1]);
        let b = spins(&[1, -1, 1, -1, -1, -1]);
        let c = 1.5;
        let cfg = HebbConfig::learning(c, 1.0).unwrap();
        let mut t = MemoryMatrix::zeros(6);
        for _ in 0..10_000 {
            t = hebb_step(&t, &a, &cfg, 1e-3).unwrap();
            t = hebb_step(&t, &b, &cfg, 1e-3).unwrap();
        }
        for i in 0..6 {
            for j in 0..6 {
                if i != j {
                    let avg = 0.5 * (a.get(i) * a.get(j) + b.get(i) * b.get(j));
                    assert!((t.get(i, j) - c * avg).abs() <= 0.02 * c);
                }
            }
        }
    }

    #[test]
    fn learn_single_pattern() {
        let s = spins(&[1, -1, 1, 1]);
        let cfg = HebbConfig::learning(0.7, 1.0).unwrap();
        let t = learn(&PatternSet::new(vec![s.clone()]).unwrap(), &cfg, 0.5, 60).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { 0.0 } else { 0.7 * s.get(i) * s.get(j) };
                assert!((t.get(i, j) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn learn_orthogonal_pair() {
        let p = PatternSet::new(vec![spins(&[1, 1, -1, -1]), spins(&[1, -1, 1, -1])]).unwrap();
        let c = 1.0;
        let t = learn(&p, &HebbConfig::learning(c, 1.0).unwrap(), 1e-3, 20_000).unwrap();
        // (c/2)(s1 s1^T + s2 s2^T), computed by hand
        let expect = [
            [0.0, 0.0, 0.0, -1.0],
            [0.0, 0.0, -1.0, 0.0],
            [0.0, -1.0, 0.0, 0.0],
            [-1.0, 0.0, 0.0, 0.0],
        ];
        for i in 0..4 {
            for j in 0..4 {
                assert!((t.get(i, j) - c * expect[i][j]).abs() < 1e-3, "{i} {j}");
            }
        }
    }

    #[test]
    fn weighted_learning_follows_weights() {
        let p = PatternSet::with_weights(
            vec![spins(&[1, 1, 1]), spins(&[1, -1, -1])],
            vec![0.75, 0.25],
        )
        .unwrap();
        let t = learn(&p, &learning(), 1e-3, 20_000).unwrap();
        let target = p.hebbian_average(1.0);
        assert!((target.get(0, 1) - 0.5).abs() < 1e-15);
        for i in 0..3 {
            for j in 0..3 {
                assert!((t.get(i, j) - target.get(i, j)).abs() < 2e-3);
            }
        }
    }

    #[test]
    fn zero_scale_learns_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = PatternSet::random(3, 8, &mut rng).unwrap();
        let t = learn(&p, &HebbConfig::learning(0.0, 1.0).unwrap(), 0.1, 50).unwrap();
        assert!(t.connections().as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn empty_pattern_set_is_rejected() {
        assert_eq!(PatternSet::new(vec![]), Err(Error::Empty("pattern set")));
        assert!(PatternSet::parse("\n\n").is_err());
    }

    #[test]
    fn stored_pattern_is_stable() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = SpinConfig::random(30, &mut rng);
        let t = stored(&s, 1.0);
        let r = recall(&t, &s, 0.0, 10).unwrap();
        assert!(r.converged);
        assert_eq!(r.sweeps, 1);
        assert_eq!(r.state, s);
        let neg = s.negated();
        assert_eq!(recall(&t, &neg, 0.0, 10).unwrap().state, neg);
    }

    #[test]
    fn corrupted_probe_recovers_stored_pattern() {
        let mut good = 0;
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let set = PatternSet::random(5, 100, &mut rng).unwrap();
            let t: MemoryMatrix = set.hebbian_average(1.0).into();
            let target = &set.patterns()[3];
            let probe = corrupt(target, 10, &mut rng).unwrap();
            assert_eq!(probe.overlap_count(target), 90);
            let r = recall(&t, &probe, 0.0, 100).unwrap();
            if r.state.overlap_count(target) >= 99 {
                good += 1;
            }
        }
        assert!(good >= 18, "{good}/20");
    }

    #[test]
    fn accuracy_falls_with_corruption() {
        let fractions = [0.0, 0.1, 0.2, 0.3, 0.4];
        let mut correct = vec![0usize; fractions.len()];
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let set = PatternSet::random(5, 100, &mut rng).unwrap();
            let t: MemoryMatrix = set.hebbian_average(1.0).into();
            let target = &set.patterns()[0];
            for (k, f) in fractions.iter().enumerate() {
                let probe = corrupt(target, (f * 100.0) as usize, &mut rng).unwrap();
                let r = recall(&t, &probe, 0.0, 100).unwrap();
                correct[k] += r.state.overlap_count(target);
            }
        }
        assert_eq!(correct[0], 20 * 100);
        for w in correct.windows(2) {
            assert!(w[1] <= w[0], "{correct:?}");
        }
    }

    #[test]
    fn recall_leaves_couplings_untouched() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let set = PatternSet::random(4, 40, &mut rng).unwrap();
        let t: MemoryMatrix = set.hebbian_average(1.0).into();
        let before: Vec<u64> = t.connections().as_slice().iter().map(|x| x.to_bits()).collect();
        let probe = corrupt(&set.patterns()[0], 12, &mut rng).unwrap();
        recall(&t, &probe, 0.5, 50).unwrap();
        let after: Vec<u64> = t.connections().as_slice().iter().map(|x| x.to_bits()).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn pattern_file_roundtrip() {
        let p = PatternSet::parse("+-+-\n1100\n\n  --++  \n").unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p.patterns()[1], spins(&[1, 1, -1, -1]));
        assert_eq!(p.to_text(), "+-+-\n++--\n--++\n");
        assert_eq!(PatternSet::parse(&p.to_text()).unwrap(), p);
        assert!(matches!(PatternSet::parse("+x-"), Err(Error::Parse(_))));
        assert!(matches!(
            PatternSet::parse("++\n+++"),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn bad_weights_are_rejected() {
        let p = vec![spins(&[1, 1]), spins(&[1, -1])];
        assert!(PatternSet::with_weights(p.clone(), vec![0.5, 0.6]).is_err());
        assert!(PatternSet::with_weights(p.clone(), vec![1.5, -0.5]).is_err());
        assert!(PatternSet::with_weights(p, vec![1.0]).is_err());
    }

    proptest! {
        #[test]
        fn recall_energy_never_rises(seed in 0u64..10_000, n in 2usize..40, hw in 0.0f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t: MemoryMatrix = ConnectionMatrix::random(n, 1.0, &mut rng).into();
            let probe = SpinConfig::random(n, &mut rng);
            let r = recall(&t, &probe, hw, 200).unwrap();
            for w in r.energy_trace.windows(2) {
                prop_assert!(w[1] <= w[0]);
            }
            let direct = recall_energy(&t, &r.state, &probe, hw);
            prop_assert!((direct - r.energy_trace.last().unwrap()).abs() < 1e-9 * (1.0 + direct.abs()));
        }

        #[test]
        fn learning_keeps_symmetry_and_zero_diagonal(
            seed in 0u64..10_000, n in 2usize..12, count in 1usize..5, dt in 0.0f64..1.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let set = PatternSet::random(count, n, &mut rng).unwrap();
            let t = learn(&set, &learning(), dt / count as f64, 7).unwrap();
            // the constructor re-validates symmetry and the diagonal exactly
            prop_assert!(ConnectionMatrix::new(n, t.connections().as_slice().to_vec()).is_ok());
        }

        #[test]
        fn single_pattern_gap_decays_geometrically(seed in 0u64..10_000, n in 2usize..10, a in 0.01f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = SpinConfig::random(n, &mut rng);
            let cfg = learning();
            let target = stored(&s, 1.0);
            let mut t: MemoryMatrix = ConnectionMatrix::random(n, 2.0, &mut rng).into();
            let gap = |t: &MemoryMatrix| {
                t.connections().as_slice().iter().zip(target.connections().as_slice())
                    .map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
            };
            let mut prev = gap(&t);
            for _ in 0..10 {
                t = hebb_step(&t, &s, &cfg, a).unwrap();
                let g = gap(&t);
                prop_assert!((g - (1.0 - a) * prev).abs() <= 1e-12 * (1.0 + prev));
                prev = g;
            }
        }
    }
}
