//! Scoring, lambda-grid cross-validation and data preparation helpers.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{generate, DataGenConfig};
use crate::error::{Error, Result};
use crate::model::{Dataset, Hierarchy, ModelParams, Norm, RegConfig, Role, SolverConfig};
use crate::objective::{estimate_beta, residuals};
use crate::solver::{default_steps, solve, SplittingSpec};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "HIERNET_THREADS";

/// Mean squared prediction error `(1/L) sum r_l^2`.
pub fn mse(params: &ModelParams, data: &Dataset) -> Result<f64> {
    let r = residuals(params, data)?;
    Ok(r.dot(&r) / data.n_samples() as f64)
}

/// The default grid `2, 4, ..., 20`.
pub fn default_lambda_grid() -> Vec<f64> {
    (1..=10).map(|k| 2.0 * k as f64).collect()
}

/// Mean and sample standard deviation over seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Stat {
    /// Summary of `values`; the standard deviation uses `n - 1` and is zero for a single value.
    pub fn from_values(values: &[f64]) -> Self {
        let count = values.len();
        if count == 0 {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
                count,
            };
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        let std = if count > 1 {
            let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
            (ss / (count - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std, count }
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        self.std / (self.count as f64).sqrt()
    }
}

/// Standard error of the difference of two independent means.
pub fn pooled_std_error(a: &Stat, b: &Stat) -> f64 {
    (a.std_error().powi(2) + b.std_error().powi(2)).sqrt()
}

/// Scores for one lambda across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRecord {
    pub lambda: f64,
    pub train_mse: Stat,
    pub val_mse: Stat,
    pub test_mse: Stat,
    /// Cells that diverged and were left out of the statistics.
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub norm: Norm,
    pub hierarchy: Hierarchy,
    pub lambda_grid: Vec<f64>,
    pub records: Vec<CvRecord>,
    pub best_lambda: f64,
    pub n_seeds: usize,
    pub warnings: Vec<String>,
}

impl CvResult {
    pub fn best(&self) -> &CvRecord {
        self.records
            .iter()
            .find(|r| r.lambda == self.best_lambda)
            .expect("best lambda comes from the grid")
    }

    pub fn label(&self) -> String {
        format!("{}-PD-{}", self.hierarchy, self.norm)
    }
}

/// Where the train/validation/test splits come from.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum CvSource {
    /// Fresh data per seed: seed `i` uses `config.seed + i`.
    Generated(DataGenConfig),
    /// One fixed triple; every seed would see the same data, so it is fitted once.
    Fixed {
        train: Dataset,
        validation: Dataset,
        test: Dataset,
    },
}

/// Solver budget shared by all cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub max_iters: usize,
    pub tol_objective: f64,
    pub tol_iterate: f64,
    /// Worker threads; `None` uses all cores. Always capped by `HIERNET_THREADS`.
    pub threads: Option<usize>,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            max_iters: 20_000,
            tol_objective: 1e-7,
            tol_iterate: 1e-5,
            threads: None,
        }
    }
}

/// Number of worker threads after applying the `HIERNET_THREADS` cap.
pub fn worker_threads(requested: Option<usize>) -> usize {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut n = requested.unwrap_or(available).max(1);
    if let Some(cap) = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&c| c > 0)
    {
        n = n.min(cap);
    }
    n
}

/// Runs `f` over `items` on a pool of `threads` workers, keeping input order.
pub fn par_map<T, R, F>(items: &[T], threads: usize, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Contract(format!("thread pool: {e}")))?;
    Ok(pool.install(|| items.par_iter().map(&f).collect()))
}

struct Split {
    train: Dataset,
    validation: Dataset,
    test: Dataset,
    beta: f64,
}

/// Sorted, deduplicated grid; rejects empty grids and non-positive or non-finite values.
pub fn normalize_grid(grid: &[f64]) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(Error::InvalidValue {
            field: "lambda_grid",
            reason: "empty grid".into(),
        });
    }
    if let Some(bad) = grid.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
        return Err(Error::InvalidValue {
            field: "lambda_grid",
            reason: format!("values must be positive and finite, got {bad}"),
        });
    }
    let mut g = grid.to_vec();
    g.sort_by(f64::total_cmp);
    g.dedup();
    Ok(g)
}

/// Fits every (seed, lambda) cell on the train split and scores all three splits.
///
/// The best lambda minimizes mean validation MSE; ties go to the smaller lambda.
pub fn cross_validate(
    source: &CvSource,
    norm: Norm,
    hierarchy: Hierarchy,
    lambda_grid: &[f64],
    n_seeds: usize,
    opts: &CvOptions,
) -> Result<CvResult> {
    let grid = normalize_grid(lambda_grid)?;
    if n_seeds == 0 {
        return Err(Error::InvalidValue {
            field: "n_seeds",
            reason: "need at least one seed".into(),
        });
    }
    let threads = worker_threads(opts.threads);

    let n_reps = match source {
        CvSource::Generated(_) => n_seeds,
        CvSource::Fixed { .. } => 1,
    };
    let seeds: Vec<usize> = (0..n_reps).collect();
    let splits: Vec<Split> = par_map(&seeds, threads, |&i| -> Result<Split> {
        let (train, validation, test) = match source {
            CvSource::Generated(cfg) => {
                let (_, d) = generate(&cfg.with_seed(cfg.seed.wrapping_add(i as u64)))?;
                (d.train, d.validation, d.test)
            }
            CvSource::Fixed {
                train,
                validation,
                test,
            } => (train.clone(), validation.clone(), test.clone()),
        };
        let beta = estimate_beta(&train);
        Ok(Split {
            train,
            validation,
            test,
            beta,
        })
    })?
    .into_iter()
    .collect::<Result<_>>()?;

    let cells: Vec<(usize, usize)> = (0..n_reps)
        .flat_map(|s| (0..grid.len()).map(move |g| (s, g)))
        .collect();
    let outcomes = par_map(&cells, threads, |&(s, g)| -> Result<Option<[f64; 3]>> {
        let split = &splits[s];
        let reg = RegConfig::new(grid[g], norm, hierarchy)?;
        let spec = SplittingSpec::for_reg(&reg);
        let (tau, sigma) = default_steps(split.beta, &spec);
        let cfg = SolverConfig::new(tau, sigma, split.beta, spec.op_norm)?
            .with_max_iters(opts.max_iters)
            .with_tolerances(opts.tol_objective, opts.tol_iterate)
            .with_record_every(opts.max_iters.max(1));
        match solve(&split.train, &reg, &cfg) {
            Ok(report) => Ok(Some([
                mse(&report.params, &split.train)?,
                mse(&report.params, &split.validation)?,
                mse(&report.params, &split.test)?,
            ])),
            Err(Error::Diverged { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    })?;

    let mut per_lambda: Vec<[Vec<f64>; 3]> = vec![Default::default(); grid.len()];
    let mut failures = vec![0usize; grid.len()];
    let mut warnings = Vec::new();
    for (&(s, g), outcome) in cells.iter().zip(outcomes) {
        match outcome? {
            Some(scores) => {
                for (acc, v) in per_lambda[g].iter_mut().zip(scores) {
                    acc.push(v);
                }
            }
            None => {
                failures[g] += 1;
                warnings.push(format!(
                    "seed {s}, lambda {}: solver diverged, cell excluded",
                    grid[g]
                ));
            }
        }
    }

    let records: Vec<CvRecord> = grid
        .iter()
        .zip(per_lambda)
        .zip(failures)
        .map(|((&lambda, [tr, va, te]), failures)| CvRecord {
            lambda,
            train_mse: Stat::from_values(&tr),
            val_mse: Stat::from_values(&va),
            test_mse: Stat::from_values(&te),
            failures,
        })
        .collect();

    let mut best: Option<&CvRecord> = None;
    for r in records.iter().filter(|r| r.val_mse.count > 0) {
        if best.is_none_or(|b| r.val_mse.mean < b.val_mse.mean) {
            best = Some(r);
        }
    }
    let best_lambda = best
        .map(|r| r.lambda)
        .ok_or_else(|| Error::Contract("every cross-validation cell diverged".into()))?;

    Ok(CvResult {
        norm,
        hierarchy,
        lambda_grid: grid,
        records,
        best_lambda,
        n_seeds: n_reps,
        warnings,
    })
}

/// ORs adjacent binary columns in groups of `bin_size`; the last bin may be shorter.
pub fn bin_features(raw: &Dataset, bin_size: usize) -> Result<Dataset> {
    if bin_size == 0 {
        return Err(Error::InvalidValue {
            field: "bin_size",
            reason: "must be at least 1".into(),
        });
    }
    let x = raw.features();
    if let Some(((r, c), v)) = x.indexed_iter().find(|(_, v)| **v != 0.0 && **v != 1.0) {
        return Err(Error::InvalidValue {
            field: "features",
            reason: format!("non-binary value {v} at row {r}, column {c}"),
        });
    }
    let n_bins = x.ncols().div_ceil(bin_size);
    let mut out = Array2::zeros((x.nrows(), n_bins));
    for (b, chunk) in x.axis_chunks_iter(Axis(1), bin_size).enumerate() {
        for (l, row) in chunk.rows().into_iter().enumerate() {
            if row.iter().any(|&v| v == 1.0) {
                out[[l, b]] = 1.0;
            }
        }
    }
    Dataset::new(out, raw.responses().clone(), raw.role())
}

/// Random halves: a seeded permutation with the first `ceil(L/2)` samples for training.
pub fn half_split(data: &Dataset, seed: u64) -> Result<(Dataset, Dataset)> {
    let l = data.n_samples();
    if l < 2 {
        return Err(Error::InvalidValue {
            field: "data",
            reason: format!("need at least 2 samples to split, got {l}"),
        });
    }
    let mut idx: Vec<usize> = (0..l).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = l.div_ceil(2);
    let train = data.select_rows(&idx[..n_train], Role::Train)?;
    let test = data.select_rows(&idx[n_train..], Role::Test)?;
    Ok((train, test))
}
