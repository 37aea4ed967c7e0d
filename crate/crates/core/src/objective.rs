//! Objective bookkeeping for the hierarchical interaction model.
//!
//! All sums over samples run in ascending sample order so results are
//! reproducible bit for bit.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{mismatch, Result};
use crate::model::{asymmetry, Dataset, Hierarchy, ModelParams, RegConfig};

/// Relative Frobenius tolerance for treating theta as symmetric.
pub const SYMMETRY_REL_TOL: f64 = 1e-9;
/// Absolute tolerance on `|theta_i|_r <= v+_i + v-_i`.
pub const EPIGRAPH_ABS_TOL: f64 = 1e-9;

const POWER_MAX_ITERS: usize = 1000;
const POWER_REL_TOL: f64 = 1e-8;

fn check_dims(params: &ModelParams, data: &Dataset) -> Result<()> {
    let n = data.n_features();
    if params.v_plus.len() != n {
        return Err(mismatch("v_plus", n, params.v_plus.len()));
    }
    if params.v_minus.len() != n {
        return Err(mismatch("v_minus", n, params.v_minus.len()));
    }
    if params.theta.dim() != (n, n) {
        return Err(mismatch(
            "theta",
            format!("{n}x{n}"),
            format!("{}x{}", params.theta.nrows(), params.theta.ncols()),
        ));
    }
    Ok(())
}

/// Model predictions `x_l^T v + x_l^T theta x_l` for every sample.
pub fn predictions(params: &ModelParams, data: &Dataset) -> Result<Array1<f64>> {
    check_dims(params, data)?;
    let v = params.main_effects();
    let x = data.features();
    let n = data.n_features();
    let mut out = Array1::zeros(data.n_samples());
    for (l, row) in x.outer_iter().enumerate() {
        let mut lin = 0.0;
        let mut quad = 0.0;
        for i in 0..n {
            lin += row[i] * v[i];
            let mut inner = 0.0;
            for j in 0..n {
                inner += params.theta[[i, j]] * row[j];
            }
            quad += row[i] * inner;
        }
        out[l] = lin + quad;
    }
    Ok(out)
}

/// Residuals `b_l = y_l - x_l^T v - x_l^T theta x_l`.
pub fn residuals(params: &ModelParams, data: &Dataset) -> Result<Array1<f64>> {
    Ok(data.responses() - &predictions(params, data)?)
}

/// `1/2 sum_l b_l^2`.
pub fn data_fit(params: &ModelParams, data: &Dataset) -> Result<f64> {
    Ok(0.5 * residuals(params, data)?.iter().map(|b| b * b).sum::<f64>())
}

fn is_symmetric(theta: &Array2<f64>) -> bool {
    let scale = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
    2.0 * asymmetry(theta) <= SYMMETRY_REL_TOL * scale
}

/// Penalized objective in the original variables, with `v = v+ - v-`:
/// `1/2 sum b_l^2 + lambda/2 |theta|_1 + lambda sum_i max(|v_i|, |theta_i|_r)`.
///
/// Returns `+inf` in strong mode when theta is not symmetric.
pub fn evaluate_objective(params: &ModelParams, data: &Dataset, reg: &RegConfig) -> Result<f64> {
    let fit = data_fit(params, data)?;
    if reg.hierarchy == Hierarchy::Strong && !is_symmetric(&params.theta) {
        return Ok(f64::INFINITY);
    }
    let v = params.main_effects();
    let l1: f64 = params.theta.iter().map(|t| t.abs()).sum();
    let hier: f64 = params
        .theta
        .outer_iter()
        .zip(v.iter())
        .map(|(row, vi)| vi.abs().max(reg.norm.of(row)))
        .sum();
    Ok(fit + 0.5 * reg.lambda * l1 + reg.lambda * hier)
}

/// Epigraphical form of the objective:
/// `1/2 sum b_l^2 + lambda/2 |theta|_1 + lambda 1^T (v+ + v-)` plus the indicator of
/// every row constraint `|theta_i|_r <= v+_i + v-_i` (and of symmetry in strong mode).
pub fn evaluate_objective_epi(
    params: &ModelParams,
    data: &Dataset,
    reg: &RegConfig,
) -> Result<f64> {
    let fit = data_fit(params, data)?;
    if reg.hierarchy == Hierarchy::Strong && !is_symmetric(&params.theta) {
        return Ok(f64::INFINITY);
    }
    let n = params.n_features();
    for i in 0..n {
        let bound = params.v_plus[i] + params.v_minus[i];
        if reg.norm.of(params.theta.row(i)) > bound + EPIGRAPH_ABS_TOL {
            return Ok(f64::INFINITY);
        }
    }
    let l1: f64 = params.theta.iter().map(|t| t.abs()).sum();
    let lin: f64 = params.v_plus.sum() + params.v_minus.sum();
    Ok(fit + 0.5 * reg.lambda * l1 + reg.lambda * lin)
}

/// Gradient of the smooth part `f` (quadratic loss plus `lambda 1^T (v+ + v-)`).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub v_plus: Array1<f64>,
    pub v_minus: Array1<f64>,
    pub theta: Array2<f64>,
}

pub fn gradient_f(params: &ModelParams, data: &Dataset, reg: &RegConfig) -> Result<Gradient> {
    let b = residuals(params, data)?;
    let n = data.n_features();
    let mut xb = Array1::<f64>::zeros(n);
    let mut gt = Array2::<f64>::zeros((n, n));
    for (row, &bl) in data.features().outer_iter().zip(b.iter()) {
        for i in 0..n {
            xb[i] += row[i] * bl;
            let xib = row[i] * bl;
            for j in 0..n {
                gt[[i, j]] -= xib * row[j];
            }
        }
    }
    Ok(Gradient {
        v_plus: xb.mapv(|g| -g + reg.lambda),
        v_minus: xb.mapv(|g| g + reg.lambda),
        theta: gt,
    })
}

/// Lipschitz constant of the gradient of the quadratic loss.
///
/// This is the top eigenvalue of `Phi^T Phi`, where row `l` of `Phi` is
/// `[x_l, -x_l, vec(x_l x_l^T)]`. The nonzero spectrum equals that of the
/// `L x L` kernel `Phi Phi^T = 2G + G.*G` with `G = X X^T`, which is what the
/// power iteration runs on.
pub fn estimate_beta(data: &Dataset) -> f64 {
    let x = data.features();
    let l = data.n_samples();
    let gram = x.dot(&x.t());
    let kernel = gram.mapv(|g| 2.0 * g + g * g);

    let mut rng = ChaCha8Rng::seed_from_u64(0x6265_7461);
    let mut vec: Array1<f64> = (0..l).map(|_| rng.random_range(0.5..1.5)).collect();
    let norm = vec.dot(&vec).sqrt();
    vec /= norm;

    let mut eig = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        let next = kernel.dot(&vec);
        let rayleigh = vec.dot(&next);
        let nn = next.dot(&next).sqrt();
        if nn == 0.0 {
            return 0.0;
        }
        let done = (rayleigh - eig).abs() <= POWER_REL_TOL * rayleigh.abs();
        eig = rayleigh;
        vec = next / nn;
        if done {
            break;
        }
    }
    eig.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Norm, Role};
    use approx::assert_relative_eq;
    use ndarray::{array, Array};
    use rand_distr::{Distribution, Normal};

    fn random_problem(seed: u64, l: usize, n: usize) -> (Dataset, ModelParams) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let x = Array::from_shape_fn((l, n), |_| normal.sample(&mut rng));
        let y = Array::from_shape_fn(l, |_| normal.sample(&mut rng));
        let data = Dataset::new(x, y, Role::Train).unwrap();
        let params = ModelParams::new(
            Array::from_shape_fn(n, |_| rng.random_range(0.0..1.0)),
            Array::from_shape_fn(n, |_| rng.random_range(0.0..1.0)),
            Array::from_shape_fn((n, n), |_| rng.random_range(-1.0..1.0)),
        )
        .unwrap();
        (data, params)
    }

    #[test]
    fn zero_model_leaves_pure_residual() {
        let (data, _) = random_problem(1, 7, 3);
        let reg = RegConfig::new(2.0, Norm::L1, Hierarchy::Strong).unwrap();
        let expected = 0.5 * data.responses().iter().map(|y| y * y).sum::<f64>();
        let zero = ModelParams::zeros(3);
        assert_eq!(evaluate_objective(&zero, &data, &reg).unwrap(), expected);
        assert_eq!(
            evaluate_objective_epi(&zero, &data, &reg).unwrap(),
            expected
        );
    }

    #[test]
    fn single_sample_hand_arithmetic() {
        let data = Dataset::new(array![[1.0]], array![0.0], Role::Train).unwrap();
        let params = ModelParams::new(array![1.0], array![0.0], array![[2.0]]).unwrap();
        let reg = RegConfig::new(0.0, Norm::L1, Hierarchy::Weak).unwrap();
        assert_eq!(evaluate_objective(&params, &data, &reg).unwrap(), 4.5);
    }

    #[test]
    fn asymmetric_theta_is_infinite_in_strong_mode() {
        let data = Dataset::new(array![[1.0, 2.0]], array![1.0], Role::Train).unwrap();
        let params = ModelParams::new(
            array![1.0, 1.0],
            array![0.0, 0.0],
            array![[0.0, 1.0], [0.0, 0.0]],
        )
        .unwrap();
        let strong = RegConfig::new(1.0, Norm::L1, Hierarchy::Strong).unwrap();
        let weak = RegConfig::new(1.0, Norm::L1, Hierarchy::Weak).unwrap();
        assert_eq!(
            evaluate_objective(&params, &data, &strong).unwrap(),
            f64::INFINITY
        );
        assert!(evaluate_objective(&params, &data, &weak)
            .unwrap()
            .is_finite());
    }

    #[test]
    fn infeasible_row_is_infinite_in_epigraph_form() {
        let data = Dataset::new(array![[1.0, 2.0]], array![1.0], Role::Train).unwrap();
        let params = ModelParams::new(
            array![0.5, 3.0],
            array![0.0, 0.0],
            array![[0.0, 1.0], [1.0, 0.0]],
        )
        .unwrap();
        let reg = RegConfig::new(1.0, Norm::Linf, Hierarchy::Weak).unwrap();
        assert_eq!(
            evaluate_objective_epi(&params, &data, &reg).unwrap(),
            f64::INFINITY
        );
    }

    #[test]
    fn dimension_mismatch_names_field() {
        let (data, _) = random_problem(2, 4, 3);
        let reg = RegConfig::new(1.0, Norm::L1, Hierarchy::Weak).unwrap();
        let err = evaluate_objective(&ModelParams::zeros(2), &data, &reg).unwrap_err();
        assert!(err.to_string().contains("v_plus"), "{err}");
    }

    // Direct evaluation of the epigraph terms at the tight split, written out
    // independently of `evaluate_objective_epi`.
    fn epi_terms_at_tight_split(
        v: &Array1<f64>,
        theta: &Array2<f64>,
        data: &Dataset,
        reg: &RegConfig,
    ) -> f64 {
        let n = v.len();
        let mut total = 0.0;
        for (row, y) in data.features().outer_iter().zip(data.responses()) {
            let mut pred = 0.0;
            for i in 0..n {
                pred += row[i] * v[i];
                for j in 0..n {
                    pred += row[i] * theta[[i, j]] * row[j];
                }
            }
            total += 0.5 * (y - pred).powi(2);
        }
        total += 0.5 * reg.lambda * theta.iter().map(|t| t.abs()).sum::<f64>();
        for i in 0..n {
            let rn = reg.norm.of(theta.row(i));
            let vp = v[i].max(0.0).max(0.5 * (rn + v[i]));
            let vm = vp - v[i];
            total += reg.lambda * (vp + vm);
        }
        total
    }

    #[test]
    fn objective_matches_epigraph_terms_at_tight_split() {
        for seed in 0..20 {
            let (data, params) = random_problem(100 + seed, 12, 4);
            for norm in [Norm::L1, Norm::Linf] {
                let reg = RegConfig::new(1.7, norm, Hierarchy::Weak).unwrap();
                let v = params.main_effects();
                let oracle = epi_terms_at_tight_split(&v, &params.theta, &data, &reg);
                let direct = evaluate_objective(&params, &data, &reg).unwrap();
                assert_relative_eq!(direct, oracle, max_relative = 1e-12);

                let tight =
                    ModelParams::from_main_effects(v.view(), params.theta.clone(), norm).unwrap();
                let epi = evaluate_objective_epi(&tight, &data, &reg).unwrap();
                assert_relative_eq!(epi, direct, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn epigraph_form_dominates_on_loose_splits() {
        let (data, params) = random_problem(7, 10, 4);
        let reg = RegConfig::new(0.8, Norm::L1, Hierarchy::Weak).unwrap();
        let v = params.main_effects();
        let mut loose =
            ModelParams::from_main_effects(v.view(), params.theta.clone(), Norm::L1).unwrap();
        loose.v_plus += 0.3;
        loose.v_minus += 0.3;
        let epi = evaluate_objective_epi(&loose, &data, &reg).unwrap();
        let direct = evaluate_objective(&loose, &data, &reg).unwrap();
        assert!(epi >= direct);
        assert_relative_eq!(epi - direct, 0.8 * 0.6 * 4.0, max_relative = 1e-9);
    }

    #[test]
    fn gradient_with_zero_residual() {
        // y chosen to equal the model prediction, so b = 0.
        let (data, params) = random_problem(3, 5, 3);
        let y = predictions(&params, &data).unwrap();
        let data = Dataset::new(data.features().clone(), y, Role::Train).unwrap();
        let reg0 = RegConfig::new(0.0, Norm::L1, Hierarchy::Weak).unwrap();
        let g = gradient_f(&params, &data, &reg0).unwrap();
        assert!(g
            .v_plus
            .iter()
            .chain(g.v_minus.iter())
            .all(|v| v.abs() < 1e-12));
        assert!(g.theta.iter().all(|v| v.abs() < 1e-12));

        let reg2 = RegConfig::new(2.0, Norm::L1, Hierarchy::Weak).unwrap();
        let g = gradient_f(&params, &data, &reg2).unwrap();
        assert!(g
            .v_plus
            .iter()
            .chain(g.v_minus.iter())
            .all(|v| (v - 2.0).abs() < 1e-12));
        assert!(g.theta.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn beta_of_single_unit_sample_is_three() {
        let data = Dataset::new(array![[1.0]], array![0.0], Role::Train).unwrap();
        assert_relative_eq!(estimate_beta(&data), 3.0, max_relative = 1e-12);
    }

    #[test]
    fn beta_of_zero_features_is_zero() {
        let data = Dataset::new(Array2::zeros((4, 3)), Array1::ones(4), Role::Train).unwrap();
        assert_eq!(estimate_beta(&data), 0.0);
    }
}
