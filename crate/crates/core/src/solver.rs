//! Primal-dual forward-backward iteration specialized to the epigraphical
//! hierarchical interaction problem.
//!
//! The generic step is
//!
//! ```text
//! w[k+1] = prox_{tau g}(w[k] - tau grad f(w[k]) - tau H^* u[k])
//! u[k+1] = prox_{sigma h^*}(u[k] + sigma H (2 w[k+1] - w[k]))
//! ```
//!
//! with `w = (v+, v-, theta)`. In weak mode `g` holds the orthant constraints and
//! the l1 penalty on theta, and `h` the row epigraph constraints (`|H| = 1`).
//! In strong mode `g` holds the orthant and symmetry constraints, and the l1
//! penalty and the epigraph constraints are both dual blocks, so `H` copies
//! theta twice and `|H| = sqrt(2)`.

use std::time::Instant;

use ndarray::linalg::{general_mat_mul, general_mat_vec_mul};
use ndarray::{Array, Array1, Array2, Dimension, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{mismatch, Error, Result};
use crate::model::{
    asymmetry, Dataset, DualState, Hierarchy, IterRecord, ModelParams, Norm, RegConfig,
    SolveReport, SolverConfig, Termination,
};
use crate::objective::estimate_beta;
use crate::prox::{epi_in_place, soft_threshold, symmetrize_in_place, EpiScratch};

/// Safety factor applied to the step-size condition.
pub const STEP_MARGIN: f64 = 1.01;
/// Dual step as a fraction of `beta / (2 |H|^2)`.
pub const DEFAULT_SIGMA_SCALE: f64 = 0.05;
/// Consecutive iterations below both tolerances required to stop.
pub const STOP_PATIENCE: usize = 10;

/// Assignment of the objective terms to `f`, `g` and `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplittingSpec {
    pub mode: Hierarchy,
    pub norm: Norm,
    pub op_norm: f64,
}

impl SplittingSpec {
    pub fn new(mode: Hierarchy, norm: Norm) -> Self {
        let op_norm = match mode {
            Hierarchy::Weak => 1.0,
            Hierarchy::Strong => std::f64::consts::SQRT_2,
        };
        Self {
            mode,
            norm,
            op_norm,
        }
    }

    pub fn for_reg(reg: &RegConfig) -> Self {
        Self::new(reg.hierarchy, reg.norm)
    }
}

/// Default step sizes for a given Lipschitz constant.
///
/// With a smooth part (`beta > 0`) the dual step is a fixed fraction of
/// `beta / (2 |H|^2)` and the primal step follows from
/// `1/tau = 1.01 (beta/2 + sigma |H|^2)`. Without one both steps are `0.99 / |H|`.
pub fn default_steps(beta: f64, spec: &SplittingSpec) -> (f64, f64) {
    if beta <= 0.0 {
        let s = 0.99 / spec.op_norm;
        return (s, s);
    }
    let sigma = DEFAULT_SIGMA_SCALE * beta / (2.0 * spec.op_norm * spec.op_norm);
    steps_for_sigma(beta, spec, sigma)
}

/// Primal step matching a chosen dual step: `tau = 1 / (1.01 (beta/2 + sigma |H|^2))`.
pub fn steps_for_sigma(beta: f64, spec: &SplittingSpec, sigma: f64) -> (f64, f64) {
    let tau = 1.0 / (STEP_MARGIN * (beta / 2.0 + sigma * spec.op_norm * spec.op_norm));
    (tau, sigma)
}

impl SolverConfig {
    /// Estimates `beta` on `data` and picks default steps for the splitting of `reg`.
    pub fn for_problem(data: &Dataset, reg: &RegConfig) -> Result<Self> {
        let spec = SplittingSpec::for_reg(reg);
        let beta = estimate_beta(data);
        if !beta.is_finite() {
            return Err(Error::NonFinite {
                field: "beta",
                location: "Lipschitz estimate (feature products overflow)".into(),
            });
        }
        let (tau, sigma) = default_steps(beta, &spec);
        SolverConfig::new(tau, sigma, beta, spec.op_norm)
    }
}

/// `2 current - previous`.
pub fn extrapolate<D: Dimension>(
    current: &Array<f64, D>,
    previous: &Array<f64, D>,
) -> Result<Array<f64, D>> {
    if current.shape() != previous.shape() {
        return Err(mismatch(
            "previous",
            format!("{:?}", current.shape()),
            format!("{:?}", previous.shape()),
        ));
    }
    Ok(Zip::from(current)
        .and(previous)
        .map_collect(|&c, &p| 2.0 * c - p))
}

/// Weak hierarchy solve (theta unconstrained).
pub fn solve_weak(data: &Dataset, reg: &RegConfig, cfg: &SolverConfig) -> Result<SolveReport> {
    if reg.hierarchy != Hierarchy::Weak {
        return Err(Error::Contract(
            "solve_weak called with a strong hierarchy config".into(),
        ));
    }
    solve(data, reg, cfg)
}

/// Strong hierarchy solve (theta symmetric).
pub fn solve_strong(data: &Dataset, reg: &RegConfig, cfg: &SolverConfig) -> Result<SolveReport> {
    if reg.hierarchy != Hierarchy::Strong {
        return Err(Error::Contract(
            "solve_strong called with a weak hierarchy config".into(),
        ));
    }
    solve(data, reg, cfg)
}

/// Cold-started solve in the mode named by `reg.hierarchy`.
pub fn solve(data: &Dataset, reg: &RegConfig, cfg: &SolverConfig) -> Result<SolveReport> {
    let n = data.n_features();
    solve_from(
        data,
        reg,
        cfg,
        ModelParams::zeros(n),
        DualState::zeros(n, reg.hierarchy),
    )
}

/// Runs the iteration from a given primal/dual state.
pub fn solve_from(
    data: &Dataset,
    reg: &RegConfig,
    cfg: &SolverConfig,
    start: ModelParams,
    dual: DualState,
) -> Result<SolveReport> {
    cfg.validate()?;
    let spec = SplittingSpec::for_reg(reg);
    if (cfg.op_norm - spec.op_norm).abs() > 1e-12 {
        return Err(Error::InvalidValue {
            field: "op_norm",
            reason: format!(
                "{} mode needs |H| = {}, config has {}",
                reg.hierarchy, spec.op_norm, cfg.op_norm
            ),
        });
    }
    let n = data.n_features();
    if start.n_features() != n {
        return Err(mismatch("start", n, start.n_features()));
    }
    if start.theta.dim() != (n, n) {
        return Err(mismatch("start.theta", n, start.theta.nrows()));
    }
    dual.check(n, reg.hierarchy)?;

    let mut state = Iterate::new(data, *reg, *cfg, start, dual);
    state.run()
}

/// Scratch and state for one solve.
fn slice<D: Dimension>(a: &Array<f64, D>) -> &[f64] {
    a.as_slice().expect("standard layout")
}

fn slice_mut<D: Dimension>(a: &mut Array<f64, D>) -> &mut [f64] {
    a.as_slice_mut().expect("standard layout")
}

struct Iterate<'a> {
    data: &'a Dataset,
    reg: RegConfig,
    cfg: SolverConfig,
    w: ModelParams,
    prev: ModelParams,
    dual: DualState,
    residual: Array1<f64>,
    grad_v: Array1<f64>,
    grad_theta: Array2<f64>,
    weighted_x: Array2<f64>,
    x_theta: Array2<f64>,
    row: Vec<f64>,
    epi: EpiScratch,
}

impl<'a> Iterate<'a> {
    fn new(
        data: &'a Dataset,
        reg: RegConfig,
        cfg: SolverConfig,
        start: ModelParams,
        dual: DualState,
    ) -> Self {
        let (l, n) = data.features().dim();
        fn owned_std<D: Dimension>(a: Array<f64, D>) -> Array<f64, D> {
            if a.is_standard_layout() {
                a
            } else {
                a.as_standard_layout().into_owned()
            }
        }
        let start = ModelParams {
            v_plus: owned_std(start.v_plus),
            v_minus: owned_std(start.v_minus),
            theta: owned_std(start.theta),
        };
        let dual = DualState {
            s_plus: owned_std(dual.s_plus),
            s_minus: owned_std(dual.s_minus),
            lambda_mat_1: owned_std(dual.lambda_mat_1),
            lambda_mat_2: dual.lambda_mat_2.map(owned_std),
        };
        Self {
            data,
            reg,
            cfg,
            prev: start.clone(),
            w: start,
            dual,
            residual: Array1::zeros(l),
            grad_v: Array1::zeros(n),
            grad_theta: Array2::zeros((n, n)),
            weighted_x: Array2::zeros((l, n)),
            x_theta: Array2::zeros((l, n)),
            row: Vec::with_capacity(n),
            epi: EpiScratch::default(),
        }
    }

    /// Residuals of the current primal iterate.
    fn update_residual(&mut self) {
        let x = self.data.features();
        general_mat_mul(1.0, x, &self.w.theta, 0.0, &mut self.x_theta);
        let v = &self.w.v_plus - &self.w.v_minus;
        let v = v.as_slice().expect("contiguous");
        let y = self.data.responses();
        for (l, b) in self.residual.iter_mut().enumerate() {
            let xr = x.row(l);
            let xr = xr.as_slice().expect("row-major features");
            let xt = self.x_theta.row(l);
            let xt = xt.as_slice().expect("row-major buffer");
            let mut pred = 0.0;
            for j in 0..xr.len() {
                pred += xr[j] * (v[j] + xt[j]);
            }
            *b = y[l] - pred;
        }
    }

    /// Gradient of the quadratic loss part: `-X^T b` and `-sum_l b_l x_l x_l^T`,
    /// stored with flipped sign (ascent direction).
    fn update_gradient(&mut self) {
        let x = self.data.features();
        general_mat_vec_mul(1.0, &x.t(), &self.residual, 0.0, &mut self.grad_v);
        let src = x.as_slice().expect("row-major features");
        let dst = self.weighted_x.as_slice_mut().expect("row-major buffer");
        let n = x.ncols();
        for (l, &b) in self.residual.iter().enumerate() {
            for (d, s) in dst[l * n..(l + 1) * n]
                .iter_mut()
                .zip(&src[l * n..(l + 1) * n])
            {
                *d = s * b;
            }
        }
        general_mat_mul(1.0, &x.t(), &self.weighted_x, 0.0, &mut self.grad_theta);
    }

    fn objective(&self) -> f64 {
        let fit = 0.5 * self.residual.dot(&self.residual);
        let lambda = self.reg.lambda;
        if lambda == 0.0 {
            return fit;
        }
        let mut l1 = 0.0;
        let mut hier = 0.0;
        for (i, row) in self.w.theta.rows().into_iter().enumerate() {
            let row = row.to_slice().expect("row-major theta");
            let (sum, max) = row
                .iter()
                .fold((0.0f64, 0.0f64), |(s, m), t| (s + t.abs(), m.max(t.abs())));
            l1 += sum;
            let row_norm = match self.reg.norm {
                Norm::L1 => sum,
                Norm::Linf => max,
            };
            hier += (self.w.v_plus[i] - self.w.v_minus[i]).abs().max(row_norm);
        }
        fit + 0.5 * lambda * l1 + lambda * hier
    }

    /// Change from the previous iterate and the size of the current one.
    fn change_and_norm(&self) -> (f64, f64) {
        fn acc(cur: &[f64], prev: &[f64], d: &mut f64, n: &mut f64) {
            for (c, p) in cur.iter().zip(prev) {
                *d += (c - p) * (c - p);
                *n += c * c;
            }
        }
        let (mut d, mut n) = (0.0, 0.0);
        let (w, p) = (&self.w, &self.prev);
        acc(slice(&w.v_plus), slice(&p.v_plus), &mut d, &mut n);
        acc(slice(&w.v_minus), slice(&p.v_minus), &mut d, &mut n);
        acc(slice(&w.theta), slice(&p.theta), &mut d, &mut n);
        (d.sqrt(), n.sqrt())
    }

    fn primal_step(&mut self) {
        let tau = self.cfg.tau;
        let lambda = self.reg.lambda;

        let update = |cur: &mut [f64], prev: &mut [f64], g: &[f64], s: &[f64], sign: f64| {
            for k in 0..cur.len() {
                prev[k] = cur[k];
                cur[k] = (cur[k] + sign * tau * g[k] - tau * lambda - tau * s[k]).max(0.0);
            }
        };
        let grad_v = slice(&self.grad_v);
        update(
            slice_mut(&mut self.w.v_plus),
            slice_mut(&mut self.prev.v_plus),
            grad_v,
            slice(&self.dual.s_plus),
            1.0,
        );
        update(
            slice_mut(&mut self.w.v_minus),
            slice_mut(&mut self.prev.v_minus),
            grad_v,
            slice(&self.dual.s_minus),
            -1.0,
        );

        let theta = slice_mut(&mut self.w.theta);
        let prev = slice_mut(&mut self.prev.theta);
        let grad = slice(&self.grad_theta);
        let d1 = slice(&self.dual.lambda_mat_1);
        match &self.dual.lambda_mat_2 {
            None => {
                let gamma = tau * lambda / 2.0;
                for k in 0..theta.len() {
                    prev[k] = theta[k];
                    theta[k] = soft_threshold(theta[k] + tau * grad[k] - tau * d1[k], gamma);
                }
            }
            Some(l2) => {
                let d2 = slice(l2);
                prev.copy_from_slice(theta);
                for k in 0..theta.len() {
                    theta[k] += tau * grad[k] - tau * (d1[k] + d2[k]);
                }
                symmetrize_in_place(&mut self.w.theta);
            }
        }
    }

    fn dual_step(&mut self) {
        let sigma = self.cfg.sigma;
        let n = self.w.n_features();
        let theta = slice(&self.w.theta);
        let prev = slice(&self.prev.theta);

        let epigraph_dual = match &mut self.dual.lambda_mat_2 {
            None => slice_mut(&mut self.dual.lambda_mat_1),
            Some(l2) => {
                // Dual of the l1 term: projection onto the box of radius lambda/2.
                let radius = self.reg.lambda / 2.0;
                let d1 = slice_mut(&mut self.dual.lambda_mat_1);
                for k in 0..d1.len() {
                    d1[k] = (d1[k] + sigma * (2.0 * theta[k] - prev[k])).clamp(-radius, radius);
                }
                slice_mut(l2)
            }
        };

        // Per-row Moreau step: x - sigma P_E(x / sigma).
        self.row.resize(n, 0.0);
        for i in 0..n {
            let a = self.dual.s_plus[i] + sigma * (2.0 * self.w.v_plus[i] - self.prev.v_plus[i]);
            let b = self.dual.s_minus[i] + sigma * (2.0 * self.w.v_minus[i] - self.prev.v_minus[i]);
            let range = i * n..(i + 1) * n;
            let dual_row = &mut epigraph_dual[range.clone()];
            let (t, tp) = (&theta[range.clone()], &prev[range]);
            for j in 0..n {
                dual_row[j] += sigma * (2.0 * t[j] - tp[j]);
                self.row[j] = dual_row[j] / sigma;
            }
            let mut pa = a / sigma;
            let mut pb = b / sigma;
            epi_in_place(
                self.reg.norm,
                &mut pa,
                &mut pb,
                &mut self.row,
                &mut self.epi,
            );
            self.dual.s_plus[i] = a - sigma * pa;
            self.dual.s_minus[i] = b - sigma * pb;
            for (d, r) in dual_row.iter_mut().zip(&self.row) {
                *d -= sigma * r;
            }
        }
    }

    fn finite(&self) -> bool {
        fn all_finite<'b>(mut it: impl Iterator<Item = &'b f64>) -> bool {
            it.all(|v| v.is_finite())
        }
        all_finite(self.w.v_plus.iter())
            && all_finite(self.w.v_minus.iter())
            && all_finite(self.w.theta.iter())
            && all_finite(self.dual.s_plus.iter())
            && all_finite(self.dual.s_minus.iter())
            && all_finite(self.dual.lambda_mat_1.iter())
            && self
                .dual
                .lambda_mat_2
                .as_ref()
                .is_none_or(|m| all_finite(m.iter()))
    }

    fn run(&mut self) -> Result<SolveReport> {
        let start = Instant::now();
        let cfg = self.cfg;
        let mut records = Vec::with_capacity((cfg.max_iters / cfg.record_every).min(1 << 20) + 1);

        self.update_residual();
        let mut objective = self.objective();
        let mut calm = 0usize;
        let mut termination = Termination::MaxIterations;
        let mut iter = 0usize;

        while iter < cfg.max_iters {
            iter += 1;
            self.update_gradient();
            self.primal_step();
            self.dual_step();
            self.update_residual();
            let next = self.objective();
            let (change, size) = self.change_and_norm();
            // A non-finite dual value reaches the primal iterate one step later.
            if !next.is_finite() || !change.is_finite() {
                return Err(Error::Diverged { iter });
            }

            let rel_obj = (next - objective).abs() / next.abs().max(f64::MIN_POSITIVE);
            let rel_it = change / size.max(f64::MIN_POSITIVE);
            objective = next;
            if rel_obj <= cfg.tol_objective && rel_it <= cfg.tol_iterate {
                calm += 1;
            } else {
                calm = 0;
            }
            let done = calm >= STOP_PATIENCE;
            if done {
                termination = Termination::Converged;
            }
            if iter.is_multiple_of(cfg.record_every) || done || iter == cfg.max_iters {
                records.push(IterRecord {
                    iter,
                    objective,
                    iterate_change: change,
                    dist_to_symmetry: asymmetry(&self.w.theta),
                    elapsed_seconds: start.elapsed().as_secs_f64(),
                });
            }
            if done {
                break;
            }
        }
        if !self.finite() {
            return Err(Error::Diverged { iter });
        }

        Ok(SolveReport {
            records,
            params: self.w.clone(),
            dual: self.dual.clone(),
            termination,
            iterations: iter,
        })
    }
}
