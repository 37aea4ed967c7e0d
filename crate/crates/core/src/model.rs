//! Domain types shared by the solvers, projections and evaluation code.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{mismatch, Error, Result};

/// Which part of an experiment a [`Dataset`] plays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Validation,
    Test,
}

/// Regression samples: row `l` of `features` is `x_l`, paired with `responses[l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    responses: Array1<f64>,
    role: Role,
}

impl Dataset {
    pub fn new(features: Array2<f64>, responses: Array1<f64>, role: Role) -> Result<Self> {
        let (l, n) = features.dim();
        if l == 0 || n == 0 {
            return Err(Error::InvalidValue {
                field: "features",
                reason: format!("need at least one sample and one feature, got {l}x{n}"),
            });
        }
        if responses.len() != l {
            return Err(mismatch("responses", l, responses.len()));
        }
        if let Some(((r, c), _)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite {
                field: "features",
                location: format!("row {r}, column {c}"),
            });
        }
        if let Some((r, _)) = responses.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite {
                field: "responses",
                location: format!("row {r}"),
            });
        }
        // Row-major storage lets the solver walk sample rows as slices.
        let features = if features.is_standard_layout() {
            features
        } else {
            features.as_standard_layout().into_owned()
        };
        Ok(Self {
            features,
            responses,
            role,
        })
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn responses(&self) -> &Array1<f64> {
        &self.responses
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    /// Number of samples `L`.
    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    /// Number of features `N`.
    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    /// Subset of rows, in the given order.
    pub fn select_rows(&self, rows: &[usize], role: Role) -> Result<Self> {
        let features = self.features.select(ndarray::Axis(0), rows);
        let responses = self.responses.select(ndarray::Axis(0), rows);
        Self::new(features, responses, role)
    }
}

/// Primal variable `w = (v+, v-, theta)`.
///
/// The main effects are split into nonnegative parts so that `v = v+ - v-`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub v_plus: Array1<f64>,
    pub v_minus: Array1<f64>,
    pub theta: Array2<f64>,
}

impl ModelParams {
    pub fn new(v_plus: Array1<f64>, v_minus: Array1<f64>, theta: Array2<f64>) -> Result<Self> {
        let n = v_plus.len();
        if v_minus.len() != n {
            return Err(mismatch("v_minus", n, v_minus.len()));
        }
        if theta.dim() != (n, n) {
            return Err(mismatch(
                "theta",
                format!("{n}x{n}"),
                format!("{}x{}", theta.nrows(), theta.ncols()),
            ));
        }
        for (field, ok) in [
            ("v_plus", v_plus.iter().all(|v| v.is_finite())),
            ("v_minus", v_minus.iter().all(|v| v.is_finite())),
            ("theta", theta.iter().all(|v| v.is_finite())),
        ] {
            if !ok {
                return Err(Error::NonFinite {
                    field,
                    location: "one or more entries".into(),
                });
            }
        }
        if v_plus.iter().chain(v_minus.iter()).any(|&v| v < 0.0) {
            return Err(Error::InvalidValue {
                field: "v_plus/v_minus",
                reason: "split main effects must be nonnegative".into(),
            });
        }
        Ok(Self {
            v_plus,
            v_minus,
            theta,
        })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            v_plus: Array1::zeros(n),
            v_minus: Array1::zeros(n),
            theta: Array2::zeros((n, n)),
        }
    }

    /// Builds the split from signed main effects using the tightest feasible
    /// decomposition for the given interaction rows:
    /// `v+_i = max(max(0, v_i), (|theta_i|_r + v_i) / 2)`, `v-_i = v+_i - v_i`.
    pub fn from_main_effects(v: ArrayView1<f64>, theta: Array2<f64>, norm: Norm) -> Result<Self> {
        let n = v.len();
        if theta.dim() != (n, n) {
            return Err(mismatch(
                "theta",
                format!("{n}x{n}"),
                format!("{}x{}", theta.nrows(), theta.ncols()),
            ));
        }
        let mut v_plus = Array1::zeros(n);
        let mut v_minus = Array1::zeros(n);
        for i in 0..n {
            let row_norm = norm.of(theta.row(i));
            let vp = v[i].max(0.0).max(0.5 * (row_norm + v[i]));
            v_plus[i] = vp;
            v_minus[i] = (vp - v[i]).max(0.0);
        }
        Self::new(v_plus, v_minus, theta)
    }

    pub fn n_features(&self) -> usize {
        self.v_plus.len()
    }

    /// Signed main effects `v = v+ - v-`.
    pub fn main_effects(&self) -> Array1<f64> {
        &self.v_plus - &self.v_minus
    }

    /// Euclidean distance between two parameter sets, treating all blocks as one vector.
    pub fn distance(&self, other: &ModelParams) -> f64 {
        let sq = |a: f64, b: f64| (a - b) * (a - b);
        let s: f64 = self
            .v_plus
            .iter()
            .zip(other.v_plus.iter())
            .chain(self.v_minus.iter().zip(other.v_minus.iter()))
            .chain(self.theta.iter().zip(other.theta.iter()))
            .map(|(&a, &b)| sq(a, b))
            .sum();
        s.sqrt()
    }

    pub fn norm(&self) -> f64 {
        self.v_plus
            .iter()
            .chain(self.v_minus.iter())
            .chain(self.theta.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// `|theta - theta^T|_F / 2`.
    pub fn dist_to_symmetry(&self) -> f64 {
        asymmetry(&self.theta)
    }
}

pub(crate) fn asymmetry(theta: &Array2<f64>) -> f64 {
    let n = theta.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            let d = theta[[i, j]] - theta[[j, i]];
            s += d * d;
        }
    }
    s.sqrt() / 2.0
}

/// Norm applied to the interaction rows in the hierarchy penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L1,
    Linf,
}

impl Norm {
    pub fn of(self, row: ArrayView1<f64>) -> f64 {
        match self {
            Norm::L1 => row.iter().map(|v| v.abs()).sum(),
            Norm::Linf => row.iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Norm::L1 => "l1",
            Norm::Linf => "linf",
        })
    }
}

impl FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Norm::L1),
            "linf" | "l-inf" | "inf" => Ok(Norm::Linf),
            other => Err(Error::InvalidValue {
                field: "norm",
                reason: format!("expected `l1` or `linf`, got `{other}`"),
            }),
        }
    }
}

/// Hierarchy mode: weak leaves theta unconstrained, strong forces it symmetric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hierarchy {
    Weak,
    Strong,
}

impl fmt::Display for Hierarchy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Hierarchy::Weak => "weak",
            Hierarchy::Strong => "strong",
        })
    }
}

impl FromStr for Hierarchy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "weak" => Ok(Hierarchy::Weak),
            "strong" => Ok(Hierarchy::Strong),
            other => Err(Error::InvalidValue {
                field: "hierarchy",
                reason: format!("expected `weak` or `strong`, got `{other}`"),
            }),
        }
    }
}

/// Regularization settings: penalty weight, row norm and hierarchy mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegConfig {
    pub lambda: f64,
    pub norm: Norm,
    pub hierarchy: Hierarchy,
}

impl RegConfig {
    pub fn new(lambda: f64, norm: Norm, hierarchy: Hierarchy) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidValue {
                field: "lambda",
                reason: format!("must be finite and nonnegative, got {lambda}"),
            });
        }
        Ok(Self {
            lambda,
            norm,
            hierarchy,
        })
    }

    /// Short label in the `Weak-PD-l1` style.
    pub fn label(&self) -> String {
        let h = match self.hierarchy {
            Hierarchy::Weak => "Weak",
            Hierarchy::Strong => "Strong",
        };
        let r = match self.norm {
            Norm::L1 => "l1",
            Norm::Linf => "linf",
        };
        format!("{h}-PD-{r}")
    }
}

/// Dual variables. `lambda_mat_2` exists only in strong mode, where
/// `lambda_mat_1` is the dual of the l1 term and `lambda_mat_2` the epigraph dual.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub s_plus: Array1<f64>,
    pub s_minus: Array1<f64>,
    pub lambda_mat_1: Array2<f64>,
    pub lambda_mat_2: Option<Array2<f64>>,
}

impl DualState {
    pub fn zeros(n: usize, hierarchy: Hierarchy) -> Self {
        Self {
            s_plus: Array1::zeros(n),
            s_minus: Array1::zeros(n),
            lambda_mat_1: Array2::zeros((n, n)),
            lambda_mat_2: match hierarchy {
                Hierarchy::Weak => None,
                Hierarchy::Strong => Some(Array2::zeros((n, n))),
            },
        }
    }

    pub fn hierarchy(&self) -> Hierarchy {
        if self.lambda_mat_2.is_some() {
            Hierarchy::Strong
        } else {
            Hierarchy::Weak
        }
    }

    pub(crate) fn check(&self, n: usize, hierarchy: Hierarchy) -> Result<()> {
        if self.s_plus.len() != n {
            return Err(mismatch("s_plus", n, self.s_plus.len()));
        }
        if self.s_minus.len() != n {
            return Err(mismatch("s_minus", n, self.s_minus.len()));
        }
        if self.lambda_mat_1.dim() != (n, n) {
            return Err(mismatch("lambda_mat_1", n, self.lambda_mat_1.nrows()));
        }
        if self.hierarchy() != hierarchy {
            return Err(Error::Contract(format!(
                "dual state carries {} blocks but the solve is {hierarchy}",
                self.hierarchy()
            )));
        }
        if let Some(m) = &self.lambda_mat_2 {
            if m.dim() != (n, n) {
                return Err(mismatch("lambda_mat_2", n, m.nrows()));
            }
        }
        Ok(())
    }
}

/// Step sizes and stopping rule for the primal-dual iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub tau: f64,
    pub sigma: f64,
    /// Lipschitz constant of the gradient of the smooth term.
    pub beta: f64,
    /// Operator norm of the linear map feeding the dual blocks.
    pub op_norm: f64,
    pub max_iters: usize,
    pub tol_objective: f64,
    pub tol_iterate: f64,
    pub seed: u64,
    /// Keep one trace record every `record_every` iterations (the last one is always kept).
    #[serde(default = "one")]
    pub record_every: usize,
}

fn one() -> usize {
    1
}

impl SolverConfig {
    pub const DEFAULT_MAX_ITERS: usize = 100_000;
    pub const DEFAULT_TOL: f64 = 1e-10;

    pub fn new(tau: f64, sigma: f64, beta: f64, op_norm: f64) -> Result<Self> {
        let cfg = Self {
            tau,
            sigma,
            beta,
            op_norm,
            max_iters: Self::DEFAULT_MAX_ITERS,
            tol_objective: Self::DEFAULT_TOL,
            tol_iterate: Self::DEFAULT_TOL,
            seed: 0,
            record_every: 1,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_tolerances(mut self, tol_objective: f64, tol_iterate: f64) -> Self {
        self.tol_objective = tol_objective;
        self.tol_iterate = tol_iterate;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_record_every(mut self, every: usize) -> Self {
        self.record_every = every;
        self
    }

    /// Checks positivity and the convergence condition `1/tau - sigma*|H|^2 >= beta/2`.
    pub fn validate(&self) -> Result<()> {
        let positive = |field: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidValue {
                    field,
                    reason: format!("must be positive and finite, got {v}"),
                })
            }
        };
        positive("tau", self.tau)?;
        positive("sigma", self.sigma)?;
        positive("op_norm", self.op_norm)?;
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidValue {
                field: "beta",
                reason: format!("must be finite and nonnegative, got {}", self.beta),
            });
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidValue {
                field: "max_iters",
                reason: "must be at least 1".into(),
            });
        }
        if self.record_every == 0 {
            return Err(Error::InvalidValue {
                field: "record_every",
                reason: "must be at least 1".into(),
            });
        }
        for (field, v) in [
            ("tol_objective", self.tol_objective),
            ("tol_iterate", self.tol_iterate),
        ] {
            if !(v >= 0.0) {
                return Err(Error::InvalidValue {
                    field,
                    reason: format!("must be nonnegative, got {v}"),
                });
            }
        }
        let slack = 1.0 / self.tau - self.sigma * self.op_norm * self.op_norm - self.beta / 2.0;
        // Relative slack absorbs rounding in 1/tau for exactly tight choices.
        if slack < -1e-12 * (1.0 / self.tau) {
            return Err(Error::StepSize {
                tau: self.tau,
                sigma: self.sigma,
                op_norm: self.op_norm,
                beta: self.beta,
            });
        }
        Ok(())
    }
}

/// One row of a solve trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub objective: f64,
    /// `|w[k] - w[k-1]|_2`.
    pub iterate_change: f64,
    pub dist_to_symmetry: f64,
    pub elapsed_seconds: f64,
}

/// Why a solve stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterations,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::Converged => "converged",
            Termination::MaxIterations => "max_iterations",
        })
    }
}

/// Output of a solve: the trace, the final primal/dual state and why it stopped.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub records: Vec<IterRecord>,
    pub params: ModelParams,
    pub dual: DualState,
    pub termination: Termination,
    pub iterations: usize,
}

impl SolveReport {
    pub fn final_objective(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.objective)
    }
}
