//! Reference implementations used only by tests.
//!
//! The epigraph oracles solve the same projections by routes that share no
//! code or case analysis with the library: a 1-D search over the bound for
//! l-inf, and exhaustive active-set enumeration for l1.

#![allow(dead_code)]

use hiernet_core::model::{Dataset, Hierarchy, ModelParams, Norm, RegConfig, Role};
use hiernet_core::objective::{data_fit, gradient_f};
use hiernet_core::prox::EpiPoint;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// For a fixed bound `t >= 0` the best point has `p = clamp(u, t)` and
/// `w+/w-` shifted equally by `(t - s)/2`; the squared distance is then a
/// convex function of `t`.
fn linf_cost(u: &[f64], s: f64, t: f64) -> f64 {
    0.5 * (t - s).powi(2)
        + u.iter()
            .map(|v| (v.abs() - t).max(0.0).powi(2))
            .sum::<f64>()
}

/// Projection onto `{|u|_inf <= w+ + w-}` by a dense grid on `t`, refined by bisection.
pub fn oracle_epi_linf(x: &EpiPoint) -> EpiPoint {
    let u = x.u.to_vec();
    let s = x.omega_plus + x.omega_minus;
    let hi = u.iter().fold(s.max(0.0), |m, v| m.max(v.abs())) + 1.0;
    let steps = 2000;
    let mut best = 0.0;
    let mut best_cost = f64::INFINITY;
    for k in 0..=steps {
        let t = hi * k as f64 / steps as f64;
        let c = linf_cost(&u, s, t);
        if c < best_cost {
            best_cost = c;
            best = t;
        }
    }
    // The cost is convex and piecewise quadratic, so its derivative is
    // monotone; bisecting on the derivative sign avoids the sqrt(eps) floor
    // of comparing function values near a flat minimum.
    let slope = |t: f64| (t - s) - 2.0 * u.iter().map(|v| (v.abs() - t).max(0.0)).sum::<f64>();
    let h = hi / steps as f64;
    let (mut a, mut b) = ((best - h).max(0.0), best + h);
    if slope(a) >= 0.0 {
        b = a;
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if slope(mid) < 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    let t = 0.5 * (a + b);
    let shift = (t - s) / 2.0;
    EpiPoint::new(
        x.omega_plus + shift,
        x.omega_minus + shift,
        x.u.mapv(|v| v.clamp(-t, t)),
    )
}

/// Projection onto `{|u|_1 <= w+ + w-}` by trying every support set.
///
/// On support `A` with `k` entries the KKT system gives a shift
/// `alpha = (sum_A |u| - s) / (k + 2)`; a candidate is kept when `alpha >= 0`
/// and `A` is exactly the set of coordinates with `|u_i| > alpha`.
pub fn oracle_epi_l1(x: &EpiPoint) -> EpiPoint {
    let m = x.u.len();
    let s = x.omega_plus + x.omega_minus;
    let mags: Vec<f64> = x.u.iter().map(|v| v.abs()).collect();
    if mags.iter().sum::<f64>() <= s {
        return x.clone();
    }
    let mut best: Option<(f64, EpiPoint)> = None;
    for mask in 0u32..(1 << m) {
        let k = mask.count_ones() as f64;
        let sum_a: f64 = (0..m).filter(|i| mask >> i & 1 == 1).map(|i| mags[i]).sum();
        let alpha = (sum_a - s) / (k + 2.0);
        if alpha < 0.0 {
            continue;
        }
        let consistent = (0..m).all(|i| (mask >> i & 1 == 1) == (mags[i] > alpha));
        if !consistent {
            continue;
        }
        let cand = EpiPoint::new(
            x.omega_plus + alpha,
            x.omega_minus + alpha,
            x.u.mapv(|v| v.signum() * (v.abs() - alpha).max(0.0)),
        );
        let d = cand.distance(x);
        if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
            best = Some((d, cand));
        }
    }
    best.expect("some support set satisfies the KKT conditions")
        .1
}

/// Random point whose coordinates mix scales, signs, zeros and exact ties.
pub fn random_point(rng: &mut ChaCha8Rng, m: usize) -> EpiPoint {
    let scale = 10f64.powf(rng.random_range(-2.0..2.0));
    let mut u: Vec<f64> = (0..m)
        .map(|_| scale * rng.random_range(-3.0..3.0))
        .collect();
    if m > 1 && rng.random_bool(0.15) {
        u[1] = if rng.random_bool(0.5) { u[0] } else { -u[0] };
    }
    if rng.random_bool(0.1) {
        u[0] = 0.0;
    }
    EpiPoint::new(
        scale * rng.random_range(-3.0..3.0),
        scale * rng.random_range(-3.0..3.0),
        Array1::from(u),
    )
}

pub fn gaussian_problem(seed: u64, l: usize, n: usize) -> Dataset {
    let mut r = rng(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let x = Array2::from_shape_fn((l, n), |_| normal.sample(&mut r));
    let y = Array1::from_shape_fn(l, |_| normal.sample(&mut r));
    Dataset::new(x, y, Role::Train).unwrap()
}

pub fn random_params(seed: u64, n: usize) -> ModelParams {
    let mut r = rng(seed);
    ModelParams::new(
        Array1::from_shape_fn(n, |_| r.random_range(0.0..1.0)),
        Array1::from_shape_fn(n, |_| r.random_range(0.0..1.0)),
        Array2::from_shape_fn((n, n), |_| r.random_range(-1.0..1.0)),
    )
    .unwrap()
}

/// `f(w) = 1/2 sum r^2 + lambda 1^T (v+ + v-)`, the smooth part of the split objective.
fn smooth_part(p: &ModelParams, data: &Dataset, lambda: f64) -> f64 {
    data_fit(p, data).unwrap() + lambda * (p.v_plus.sum() + p.v_minus.sum())
}

/// Central differences over every coordinate of `(v+, v-, theta)`.
pub fn gradient_fd_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let n = r.random_range(1..=8);
    let l = r.random_range(1..=20);
    let data = gaussian_problem(seed, l, n);
    let p = random_params(seed + 1000, n);
    let reg = RegConfig::new(r.random_range(0.0..5.0), Norm::L1, Hierarchy::Weak).unwrap();
    let g = gradient_f(&p, &data, &reg).unwrap();

    let h = 1e-5;
    let mut num = Vec::new();
    let mut ana = Vec::new();
    let f = |q: &ModelParams| smooth_part(q, &data, reg.lambda);
    for i in 0..n {
        for (which, analytic) in [(0, g.v_plus[i]), (1, g.v_minus[i])] {
            let mut a = p.clone();
            let mut b = p.clone();
            let (ca, cb) = if which == 0 {
                (&mut a.v_plus[i], &mut b.v_plus[i])
            } else {
                (&mut a.v_minus[i], &mut b.v_minus[i])
            };
            *ca += h;
            *cb -= h;
            num.push((f(&a) - f(&b)) / (2.0 * h));
            ana.push(analytic);
        }
        for j in 0..n {
            let mut a = p.clone();
            let mut b = p.clone();
            a.theta[[i, j]] += h;
            b.theta[[i, j]] -= h;
            num.push((f(&a) - f(&b)) / (2.0 * h));
            ana.push(g.theta[[i, j]]);
        }
    }
    let diff: f64 = num
        .iter()
        .zip(&ana)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let size: f64 = ana.iter().map(|a| a * a).sum::<f64>().sqrt();
    diff / size.max(1.0)
}
