//! Weight fitting: grid search, random search and sequential model-based
//! optimization against one reference rater.
//!
//! The objective for a weight vector is Krippendorff's alpha between the
//! metric's buckets (recomputed from cached factor scores) and the reference
//! ratings. Degenerate alphas evaluate to [`DEGENERATE_VALUE`].

use std::collections::{HashMap, HashSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_integer::Integer;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reliability::{alpha_from_units, MeasurementLevel, RatingMatrix};
use crate::scoring::{bucketize_scores, goodness, Bucket, BucketMode, FactorScores, Weights};

/// Objective value recorded for weights whose alpha is undefined; below
/// every attainable alpha.
pub const DEGENERATE_VALUE: f64 = -1.0;
/// Default tolerance for the near-optimal set.
pub const NEAR_OPTIMAL_EPSILON: f64 = 1e-9;
pub const DEFAULT_BUDGET: usize = 200;
pub const DEFAULT_INIT_POINTS: usize = 20;
pub const DEFAULT_GRID_STEP: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Grid,
    Random,
    Smbo,
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "grid" => Ok(Strategy::Grid),
            "random" => Ok(Strategy::Random),
            "smbo" | "bayes" => Ok(Strategy::Smbo),
            other => Err(Error::InvalidArgument(format!(
                "unknown strategy {other:?} (expected grid, random or smbo)"
            ))),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Grid => "grid",
            Strategy::Random => "random",
            Strategy::Smbo => "smbo",
        })
    }
}

/// Integer weights `0..=max` in increments of `step`, excluding all-zeros.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchSpace {
    max: u32,
    step: u32,
}

impl SearchSpace {
    pub fn new(step: u32) -> Result<Self> {
        if step == 0 || !Weights::MAX.is_multiple_of(step) {
            return Err(Error::InvalidArgument(format!(
                "grid step {step} must be positive and divide {}",
                Weights::MAX
            )));
        }
        Ok(SearchSpace {
            max: Weights::MAX,
            step,
        })
    }

    pub fn step(&self) -> u32 {
        self.step
    }

    pub fn levels(&self) -> u32 {
        self.max / self.step + 1
    }

    /// Number of grid points including all-zeros.
    pub fn cardinality(&self) -> u64 {
        u64::from(self.levels()).pow(4)
    }

    /// Every point except all-zeros, in lexicographic order.
    pub fn points(&self) -> impl Iterator<Item = Weights> + '_ {
        let n = self.levels();
        (0..n.pow(4)).filter_map(move |mut i| {
            let mut w = [0u32; 4];
            for slot in w.iter_mut().rev() {
                *slot = (i % n) * self.step;
                i /= n;
            }
            Weights::try_from(w).ok()
        })
    }
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            max: Weights::MAX,
            step: DEFAULT_GRID_STEP,
        }
    }
}

/// Cached factor table plus reference ratings; the objective only reruns
/// the weighted mean, bucketing and alpha.
#[derive(Debug, Clone)]
pub struct ObjectiveSpec {
    factors: Vec<[f64; 4]>,
    /// Reference buckets per factor row; empty when the row is unrated.
    reference: Vec<Vec<u32>>,
    mode: BucketMode,
    level: MeasurementLevel,
}

fn code(b: Bucket) -> u32 {
    match b {
        Bucket::Bad => 0,
        Bucket::Moderate => 1,
        Bucket::Good => 2,
    }
}

impl ObjectiveSpec {
    /// `factors` are the concepts that get bucketed together; `ratings` may
    /// hold one or more raters, all of whom are compared with the metric.
    pub fn new(
        factors: &[(String, FactorScores)],
        ratings: &RatingMatrix,
        mode: BucketMode,
        level: MeasurementLevel,
    ) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let reference: Vec<Vec<u32>> = factors
            .iter()
            .map(|(cui, _)| {
                ratings
                    .raters()
                    .iter()
                    .filter_map(|r| ratings.get(r, cui))
                    .map(code)
                    .collect()
            })
            .collect();
        if reference.iter().all(Vec::is_empty) {
            return Err(Error::NoOverlap);
        }
        Ok(ObjectiveSpec {
            factors: factors.iter().map(|(_, f)| f.as_array()).collect(),
            reference,
            mode,
            level,
        })
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn rated_items(&self) -> usize {
        self.reference.iter().filter(|r| !r.is_empty()).count()
    }

    /// Metric buckets under `w`, in factor-table order.
    pub fn buckets(&self, w: Weights) -> Result<Vec<Bucket>> {
        let scores: Vec<f64> = self
            .factors
            .iter()
            .map(|f| {
                let f = FactorScores {
                    br: f[0],
                    fo: f[1],
                    glm: f[2],
                    dp: f[3],
                };
                goodness(&f, w)
            })
            .collect();
        bucketize_scores(&scores, self.mode)
    }

    /// Alpha against the reference, or the error that made it undefined.
    pub fn alpha(&self, w: Weights) -> Result<f64> {
        let buckets = self.buckets(w)?;
        let units: Vec<Vec<u32>> = self
            .reference
            .iter()
            .zip(&buckets)
            .filter(|(r, _)| !r.is_empty())
            .map(|(r, &b)| {
                let mut unit = r.clone();
                unit.push(code(b));
                unit
            })
            .collect();
        alpha_from_units(&units, self.level).map(|(a, _)| a)
    }

    pub fn evaluate(&self, w: Weights) -> Evaluation {
        match self.alpha(w) {
            Ok(value) => Evaluation {
                weights: w,
                value,
                degenerate: false,
            },
            Err(_) => Evaluation {
                weights: w,
                value: DEGENERATE_VALUE,
                degenerate: true,
            },
        }
    }
}

/// Objective value of `w`; degenerate alphas map to [`DEGENERATE_VALUE`].
pub fn evaluate_objective(spec: &ObjectiveSpec, w: Weights) -> f64 {
    spec.evaluate(w).value
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub weights: Weights,
    pub value: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OptimizationTrace {
    pub strategy: Strategy,
    pub seed: Option<u64>,
    pub evaluations: Vec<Evaluation>,
    pub best_weights: Weights,
    pub best_value: f64,
}

impl OptimizationTrace {
    fn from_evaluations(strategy: Strategy, seed: Option<u64>, evaluations: Vec<Evaluation>) -> Result<Self> {
        // First occurrence wins ties.
        let best = evaluations
            .iter()
            .fold(None::<&Evaluation>, |best, e| match best {
                Some(b) if b.value >= e.value => Some(b),
                _ => Some(e),
            })
            .copied()
            .ok_or_else(|| Error::InvalidArgument("empty optimization trace".into()))?;
        Ok(OptimizationTrace {
            strategy,
            seed,
            best_weights: best.weights,
            best_value: best.value,
            evaluations,
        })
    }

    /// Distinct weights whose value is within `epsilon` of the best.
    pub fn near_optimal(&self, epsilon: f64) -> Vec<Weights> {
        let mut seen = HashSet::new();
        self.evaluations
            .iter()
            .filter(|e| self.best_value - e.value <= epsilon)
            .filter(|e| seen.insert(e.weights))
            .map(|e| e.weights)
            .collect()
    }

    pub fn degenerate_count(&self) -> usize {
        self.evaluations.iter().filter(|e| e.degenerate).count()
    }

    /// Best value after each evaluation.
    pub fn running_best(&self) -> Vec<f64> {
        self.evaluations
            .iter()
            .scan(f64::NEG_INFINITY, |best, e| {
                *best = best.max(e.value);
                Some(*best)
            })
            .collect()
    }

    /// One `W1,W2,W3,W4<TAB>VALUE` line per evaluation (degenerate ones carry
    /// a third `degenerate` field), a blank line, then the summary block.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.evaluations {
            let _ = write!(out, "{}\t{:?}", e.weights, e.value);
            if e.degenerate {
                out.push_str("\tdegenerate");
            }
            out.push('\n');
        }
        out.push('\n');
        let _ = writeln!(out, "best_weights\t{}", self.best_weights);
        let _ = writeln!(out, "best_value\t{:?}", self.best_value);
        match self.seed {
            Some(s) => {
                let _ = writeln!(out, "seed\t{s}");
            }
            None => out.push_str("seed\t-\n"),
        }
        let _ = writeln!(out, "strategy\t{}", self.strategy);
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut evaluations = Vec::new();
        let mut summary: HashMap<&str, &str> = HashMap::new();
        let mut in_summary = false;
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.is_empty() {
                in_summary = true;
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if in_summary {
                if fields.len() != 2 {
                    return Err(Error::record(line_no, "expected KEY<TAB>VALUE"));
                }
                summary.insert(fields[0], fields[1]);
                continue;
            }
            let (weights, value, degenerate) = match fields.as_slice() {
                [w, v] => (w, v, false),
                [w, v, "degenerate"] => (w, v, true),
                _ => return Err(Error::record(line_no, "expected W1,W2,W3,W4<TAB>VALUE")),
            };
            let weights: Weights = weights
                .parse()
                .map_err(|e: Error| Error::record(line_no, e.to_string()))?;
            let value: f64 = value
                .parse()
                .map_err(|_| Error::record(line_no, format!("bad value {value:?}")))?;
            evaluations.push(Evaluation {
                weights,
                value,
                degenerate,
            });
        }
        let get = |k: &str| {
            summary
                .get(k)
                .copied()
                .ok_or_else(|| Error::InvalidArgument(format!("trace summary lacks {k}")))
        };
        let strategy: Strategy = get("strategy")?.parse()?;
        let seed = match get("seed")? {
            "-" => None,
            s => Some(
                s.parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad seed {s:?}")))?,
            ),
        };
        let trace = OptimizationTrace::from_evaluations(strategy, seed, evaluations)?;
        let best_weights: Weights = get("best_weights")?.parse()?;
        if best_weights != trace.best_weights {
            return Err(Error::InvalidArgument(format!(
                "trace summary names {best_weights} as best but the evaluations give {}",
                trace.best_weights
            )));
        }
        Ok(trace)
    }
}

pub fn grid_search(spec: &ObjectiveSpec, step: u32) -> Result<OptimizationTrace> {
    let space = SearchSpace::new(step)?;
    let points: Vec<Weights> = space.points().collect();
    let evaluations = evaluate_parallel(spec, &points);
    OptimizationTrace::from_evaluations(Strategy::Grid, None, evaluations)
}

fn evaluate_parallel(spec: &ObjectiveSpec, points: &[Weights]) -> Vec<Evaluation> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(8);
    let chunk = points.len().div_ceil(threads).max(1);
    std::thread::scope(|s| {
        let handles: Vec<_> = points
            .chunks(chunk)
            .map(|c| s.spawn(move || c.iter().map(|&w| spec.evaluate(w)).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("objective evaluation panicked"))
            .collect()
    })
}

fn random_weights(rng: &mut ChaCha8Rng) -> Weights {
    loop {
        let w: [u32; 4] = std::array::from_fn(|_| rng.random_range(0..=Weights::MAX));
        if let Ok(w) = Weights::try_from(w) {
            return w;
        }
    }
}

pub fn random_search(spec: &ObjectiveSpec, budget: usize, seed: u64) -> Result<OptimizationTrace> {
    if budget == 0 {
        return Err(Error::InvalidArgument("budget must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let evaluations = (0..budget)
        .map(|_| spec.evaluate(random_weights(&mut rng)))
        .collect();
    OptimizationTrace::from_evaluations(Strategy::Random, Some(seed), evaluations)
}

/// Scale-free key: weights divided by their gcd.
fn reduced(w: Weights) -> [u32; 4] {
    let v = w.values();
    let g = v.iter().fold(0u32, |g, &x| g.gcd(&x));
    v.map(|x| x / g)
}

fn simplex(w: Weights) -> [f64; 4] {
    let sum = f64::from(w.sum());
    w.as_f64().map(|x| x / sum)
}

const CANDIDATES_RANDOM: usize = 150;
const CANDIDATES_LOCAL: usize = 150;
const LOCAL_PARENTS: usize = 5;
const PERTURBATION_RADII: [i64; 6] = [1, 2, 3, 5, 8, 13];
const LENGTH_SCALES: [f64; 4] = [0.03, 0.06, 0.12, 0.25];
const REFIT_EVERY: usize = 10;
const NOISE: f64 = 1e-6;
const EI_XI: f64 = 0.01;

/// Gaussian-process regression with a Matérn 5/2 kernel on simplex
/// coordinates and standardized targets.
struct Surrogate {
    points: Vec<[f64; 4]>,
    alpha: DVector<f64>,
    chol_l: DMatrix<f64>,
    length_scale: f64,
    mean: f64,
    sd: f64,
}

fn matern52(a: &[f64; 4], b: &[f64; 4], length_scale: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let r = 5f64.sqrt() * d2.sqrt() / length_scale;
    (1.0 + r + r * r / 3.0) * (-r).exp()
}

impl Surrogate {
    /// Fits at `length_scale`; returns the model and its log marginal
    /// likelihood.
    fn fit(points: &[[f64; 4]], values: &[f64], length_scale: f64) -> Option<(Self, f64)> {
        let n = points.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = if var > 1e-12 { var.sqrt() } else { 1.0 };
        let y = DVector::from_iterator(n, values.iter().map(|v| (v - mean) / sd));
        let k = DMatrix::from_fn(n, n, |i, j| {
            matern52(&points[i], &points[j], length_scale) + if i == j { NOISE } else { 0.0 }
        });
        let chol = k.cholesky()?;
        let alpha = chol.solve(&y);
        let l = chol.unpack();
        let log_det: f64 = (0..n).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0;
        let lml = -0.5 * y.dot(&alpha) - 0.5 * log_det;
        Some((
            Surrogate {
                points: points.to_vec(),
                alpha,
                chol_l: l,
                length_scale,
                mean,
                sd,
            },
            lml,
        ))
    }

    fn predict(&self, x: &[f64; 4]) -> (f64, f64) {
        let n = self.points.len();
        let k = DVector::from_iterator(n, self.points.iter().map(|p| matern52(p, x, self.length_scale)));
        let mu = k.dot(&self.alpha);
        let v = self
            .chol_l
            .solve_lower_triangular(&k)
            .unwrap_or_else(|| DVector::zeros(n));
        let var = (1.0 + NOISE - v.dot(&v)).max(0.0);
        (self.mean + self.sd * mu, self.sd * var.sqrt())
    }
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn expected_improvement(mu: f64, sigma: f64, best: f64) -> f64 {
    let gain = mu - best - EI_XI;
    if sigma <= 1e-12 {
        return gain.max(0.0);
    }
    let z = gain / sigma;
    gain * normal_cdf(z) + sigma * normal_pdf(z)
}

fn perturb(w: Weights, rng: &mut ChaCha8Rng) -> Option<Weights> {
    let radius = PERTURBATION_RADII[rng.random_range(0..PERTURBATION_RADII.len())];
    let v = w.values().map(|x| {
        let delta = rng.random_range(-radius..=radius);
        (i64::from(x) + delta).clamp(0, i64::from(Weights::MAX)) as u32
    });
    Weights::try_from(v).ok()
}

/// Sequential model-based optimization: `init_points` random draws (the
/// same stream as [`random_search`] with this seed), then one
/// expected-improvement proposal per remaining evaluation.
pub fn smbo_optimize(
    spec: &ObjectiveSpec,
    budget: usize,
    seed: u64,
    init_points: usize,
) -> Result<OptimizationTrace> {
    if init_points < 2 || budget <= init_points {
        return Err(Error::InvalidArgument(format!(
            "smbo needs budget > init_points >= 2, got budget {budget} and init_points {init_points}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut evaluations: Vec<Evaluation> = Vec::with_capacity(budget);
    let mut seen: HashSet<[u32; 4]> = HashSet::new();
    for _ in 0..init_points {
        let w = random_weights(&mut rng);
        seen.insert(reduced(w));
        evaluations.push(spec.evaluate(w));
    }

    let mut length_scale = LENGTH_SCALES[1];
    while evaluations.len() < budget {
        let points: Vec<[f64; 4]> = evaluations.iter().map(|e| simplex(e.weights)).collect();
        let values: Vec<f64> = evaluations.iter().map(|e| e.value).collect();
        let step = evaluations.len() - init_points;
        let model = if step.is_multiple_of(REFIT_EVERY) {
            LENGTH_SCALES
                .iter()
                .filter_map(|&l| Surrogate::fit(&points, &values, l))
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(m, _)| m)
        } else {
            Surrogate::fit(&points, &values, length_scale).map(|(m, _)| m)
        };
        let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);

        let mut parents: Vec<&Evaluation> = evaluations.iter().collect();
        parents.sort_by(|a, b| b.value.total_cmp(&a.value));
        parents.truncate(LOCAL_PARENTS);

        let mut candidates: Vec<Weights> = Vec::with_capacity(CANDIDATES_RANDOM + CANDIDATES_LOCAL);
        let mut batch: HashSet<[u32; 4]> = HashSet::new();
        for i in 0..CANDIDATES_RANDOM + CANDIDATES_LOCAL {
            let w = if i < CANDIDATES_RANDOM {
                Some(random_weights(&mut rng))
            } else {
                perturb(parents[i % parents.len()].weights, &mut rng)
            };
            if let Some(w) = w {
                let key = reduced(w);
                if !seen.contains(&key) && batch.insert(key) {
                    candidates.push(w);
                }
            }
        }

        let next = match &model {
            Some(model) => {
                length_scale = model.length_scale;
                candidates
                    .iter()
                    .map(|&w| {
                        let (mu, sigma) = model.predict(&simplex(w));
                        (w, expected_improvement(mu, sigma, best))
                    })
                    .fold(None::<(Weights, f64)>, |acc, (w, ei)| match acc {
                        Some((_, best_ei)) if best_ei >= ei => acc,
                        _ => Some((w, ei)),
                    })
                    .map(|(w, _)| w)
            }
            None => candidates.first().copied(),
        };
        let w = match next {
            Some(w) => w,
            // Every candidate was already evaluated; fall back to an unseen
            // random draw.
            None => loop {
                let w = random_weights(&mut rng);
                if !seen.contains(&reduced(w)) {
                    break w;
                }
            },
        };
        seen.insert(reduced(w));
        evaluations.push(spec.evaluate(w));
    }
    OptimizationTrace::from_evaluations(Strategy::Smbo, Some(seed), evaluations)
}

/// Runs `strategy`; `budget` is ignored by grid search.
pub fn optimize(
    spec: &ObjectiveSpec,
    strategy: Strategy,
    budget: usize,
    seed: u64,
    grid_step: u32,
    init_points: usize,
) -> Result<OptimizationTrace> {
    match strategy {
        Strategy::Grid => grid_search(spec, grid_step),
        Strategy::Random => random_search(spec, budget, seed),
        Strategy::Smbo => smbo_optimize(spec, budget, seed, init_points),
    }
}
