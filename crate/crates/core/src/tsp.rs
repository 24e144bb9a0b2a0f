//! Travelling salesman by deterministic annealing over a soft assignment
//! matrix `V[city][position]`.
//!
//! At each inverse temperature the tour energy
//! `E[V] = sum_{i,j,a} d_ij V_ia V_j,a+1` is descended by setting
//! `V = softassign(exp(beta * Q))` with `Q = -dE/dV` (plus a small
//! self-amplification term), so row and column constraints hold exactly at
//! every stage. As `beta` grows the matrix hardens into a permutation.

use std::io::Read;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mean_field::{softassign_log, FixedPointConfig};

/// Largest instance accepted by [`solve_tsp`] and [`brute_force_tour`].
pub const MAX_CITIES: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TspInstance {
    coords: Vec<(f64, f64)>,
    distance: Vec<f64>,
}

impl TspInstance {
    pub fn from_coords(coords: Vec<(f64, f64)>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Empty("city list"));
        }
        if coords.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::NonFinite("city coordinates"));
        }
        let n = coords.len();
        let mut distance = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = (coords[i].0 - coords[j].0).hypot(coords[i].1 - coords[j].1);
                distance[i * n + j] = d;
                distance[j * n + i] = d;
            }
        }
        Ok(Self { coords, distance })
    }

    /// Cities uniform in the unit square.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let coords = (0..n).map(|_| (rng.gen::<f64>(), rng.gen::<f64>())).collect();
        Self::from_coords(coords).expect("finite coordinates")
    }

    /// Reads `x,y` rows. A first row that does not parse as two numbers is
    /// taken to be a header.
    pub fn from_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(input);
        let mut coords = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(crate::dynamics::csv_err)?;
            if rec.len() != 2 {
                return Err(Error::Parse(format!(
                    "line {}: expected 2 columns, found {}",
                    line + 1,
                    rec.len()
                )));
            }
            let parsed = (rec[0].parse::<f64>(), rec[1].parse::<f64>());
            match parsed {
                (Ok(x), Ok(y)) => coords.push((x, y)),
                _ if line == 0 => continue,
                _ => {
                    return Err(Error::Parse(format!(
                        "line {}: cannot parse coordinates",
                        line + 1
                    )))
                }
            }
        }
        Self::from_coords(coords)
    }

    pub fn n(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[(f64, f64)] {
        &self.coords
    }

    #[inline]
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.distance[i * self.n() + j]
    }

    /// Length of the closed tour visiting `tour[0], tour[1], ...` in order.
    pub fn tour_length(&self, tour: &[usize]) -> f64 {
        let n = tour.len();
        (0..n)
            .map(|a| self.distance(tour[a], tour[(a + 1) % n]))
            .sum()
    }
}

/// Increasing sequence of inverse temperatures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    betas: Vec<f64>,
}

impl AnnealSchedule {
    pub fn new(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::Empty("annealing schedule"));
        }
        if betas.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(Error::InvalidParameter("schedule betas must be positive".into()));
        }
        if betas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "schedule betas must be strictly increasing".into(),
            ));
        }
        Ok(Self { betas })
    }

    /// `beta_k = beta0 * rate^k` for `k = 0..stages`.
    pub fn geometric(beta0: f64, rate: f64, stages: usize) -> Result<Self> {
        Self::new((0..stages).map(|k| beta0 * rate.powi(k as i32)).collect())
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        Self::geometric(1.0, 1.05, 200).expect("valid default schedule")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TspOptions {
    pub schedule: AnnealSchedule,
    /// Stopping rule for each soft-assign normalisation.
    pub softassign: FixedPointConfig,
    /// Relaxation updates per annealing stage.
    pub inner_iterations: usize,
    /// Largest change in `V` that ends a stage early.
    pub inner_tol: f64,
    /// Coefficient `gamma` of the `-gamma/2 sum V^2` term that pushes the
    /// assignment towards a vertex.
    pub self_amplification: f64,
    /// Amplitude of the seeded perturbation added to `log M` on every
    /// update; breaks the rotation/reflection symmetry of the tour.
    pub noise: f64,
    pub seed: u64,
}

impl Default for TspOptions {
    fn default() -> Self {
        Self {
            schedule: AnnealSchedule::default(),
            // Near-permutation matrices mix slowly under alternating
            // normalisation; 1e-5 is reached within the sweep budget at
            // every stage.
            softassign: FixedPointConfig {
                tol: 1e-5,
                max_sweeps: 10_000,
                ..Default::default()
            },
            inner_iterations: 20,
            inner_tol: 1e-6,
            self_amplification: 1.5,
            noise: 1e-3,
            seed: 0,
        }
    }
}

/// Summary of one annealing stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageRecord {
    pub stage: usize,
    pub beta: f64,
    /// `-sum V log V` of the assignment matrix.
    pub entropy: f64,
    /// Length of the tour extracted from the current assignment.
    pub tour_length: f64,
    /// Largest row/column-sum deviation after the last normalisation.
    pub constraint_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TspSolution {
    /// Cities in visiting order.
    pub tour: Vec<usize>,
    pub tour_length: f64,
    /// Final `V[city][position]`, row-major.
    pub assignment: Vec<f64>,
    /// True when row-wise argmax did not give a permutation and the greedy
    /// fallback was used.
    pub fallback_used: bool,
    pub stages: Vec<StageRecord>,
}

/// Converts `V[city][position]` into a visiting order.
///
/// Row argmax (lowest index on ties) is used when it is already a
/// permutation. Otherwise cells are taken greedily in descending weight,
/// skipping used cities and positions; the flag reports the fallback.
pub fn extract_tour(v: &[f64], n: usize) -> (Vec<usize>, bool) {
    let argmax: Vec<usize> = (0..n)
        .map(|i| {
            let row = &v[i * n..(i + 1) * n];
            (0..n).fold(0, |best, a| if row[a] > row[best] { a } else { best })
        })
        .collect();
    let mut seen = vec![false; n];
    let is_perm = argmax.iter().all(|&a| !std::mem::replace(&mut seen[a], true));
    let position_of_city = if is_perm {
        argmax
    } else {
        let mut cells: Vec<usize> = (0..n * n).collect();
        cells.sort_by(|&x, &y| v[y].total_cmp(&v[x]).then(x.cmp(&y)));
        let mut city_pos = vec![usize::MAX; n];
        let mut pos_used = vec![false; n];
        for k in cells {
            let (i, a) = (k / n, k % n);
            if city_pos[i] == usize::MAX && !pos_used[a] {
                city_pos[i] = a;
                pos_used[a] = true;
            }
        }
        city_pos
    };
    let mut tour = vec![0; n];
    for (city, &pos) in position_of_city.iter().enumerate() {
        tour[pos] = city;
    }
    (tour, !is_perm)
}

fn assignment_entropy(v: &[f64]) -> f64 {
    -v.iter().map(|&x| crate::activation::xlogx(x)).sum::<f64>()
}

/// Anneals a soft assignment matrix through `opts.schedule` and extracts a
/// tour from the final matrix.
pub fn solve_tsp(inst: &TspInstance, opts: &TspOptions) -> Result<TspSolution> {
    let n = inst.n();
    if !(3..=MAX_CITIES).contains(&n) {
        return Err(Error::InvalidParameter(format!(
            "solve_tsp needs 3..={MAX_CITIES} cities, got {n}"
        )));
    }
    opts.softassign.validate()?;
    if opts.inner_iterations == 0 {
        return Err(Error::InvalidParameter("inner_iterations must be at least 1".into()));
    }

    let scale = inst.distance.iter().copied().fold(0.0, f64::max);
    let d: Vec<f64> = if scale > 0.0 {
        inst.distance.iter().map(|x| x / scale).collect()
    } else {
        inst.distance.clone()
    };
    let gamma = opts.self_amplification;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut v = vec![1.0 / n as f64; n * n];
    let mut log_m = vec![0.0; n * n];
    // Scalings from the previous normalisation; the doubly stochastic limit
    // does not depend on them, they only shorten the next solve.
    let mut row_scale = vec![0.0; n];
    let mut col_scale = vec![0.0; n];
    let mut stages = Vec::with_capacity(opts.schedule.betas().len());
    let mut residual = 0.0;

    for (stage, &beta) in opts.schedule.betas().iter().enumerate() {
        for _ in 0..opts.inner_iterations {
            for i in 0..n {
                for a in 0..n {
                    let next = (a + 1) % n;
                    let prev = (a + n - 1) % n;
                    let mut grad = 0.0;
                    for j in 0..n {
                        grad += d[i * n + j] * (v[j * n + next] + v[j * n + prev]);
                    }
                    let q = -grad + gamma * v[i * n + a];
                    log_m[i * n + a] = beta * q + opts.noise * rng.gen_range(-1.0..1.0);
                }
            }
            let warm: Vec<f64> = (0..n * n)
                .map(|k| log_m[k] + row_scale[k / n] + col_scale[k % n])
                .collect();
            let r = softassign_log(&warm, n, &opts.softassign)?;
            residual = r.residual;
            for (s, d) in row_scale.iter_mut().zip(&r.row_log_scale) {
                *s += d;
            }
            for (s, d) in col_scale.iter_mut().zip(&r.col_log_scale) {
                *s += d;
            }
            let change = r
                .matrix
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            v = r.matrix;
            if change < opts.inner_tol {
                break;
            }
        }
        let (tour, _) = extract_tour(&v, n);
        stages.push(StageRecord {
            stage,
            beta,
            entropy: assignment_entropy(&v),
            tour_length: inst.tour_length(&tour),
            constraint_residual: residual,
        });
    }

    let (tour, fallback_used) = extract_tour(&v, n);
    Ok(TspSolution {
        tour_length: inst.tour_length(&tour),
        tour,
        assignment: v,
        fallback_used,
        stages,
    })
}

/// Exact optimum by enumerating every tour that starts at city 0.
pub fn brute_force_tour(inst: &TspInstance) -> Result<(Vec<usize>, f64)> {
    let n = inst.n();
    if n > MAX_CITIES {
        return Err(Error::InvalidParameter(format!(
            "exhaustive search limited to {MAX_CITIES} cities, got {n}"
        )));
    }
    if n <= 3 {
        let tour: Vec<usize> = (0..n).collect();
        let len = inst.tour_length(&tour);
        return Ok((tour, len));
    }
    let mut rest: Vec<usize> = (1..n).collect();
    let mut best = (Vec::new(), f64::INFINITY);
    let mut tour = vec![0; n];
    // Heap's algorithm over cities 1..n
    let k = rest.len();
    let mut c = vec![0usize; k];
    let mut visit = |rest: &[usize]| {
        tour[1..].copy_from_slice(rest);
        let len = inst.tour_length(&tour);
        if len < best.1 {
            best = (tour.clone(), len);
        }
    };
    visit(&rest);
    let mut i = 0;
    while i < k {
        if c[i] < i {
            if i % 2 == 0 {
                rest.swap(0, i);
            } else {
                rest.swap(c[i], i);
            }
            visit(&rest);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(best)
}
