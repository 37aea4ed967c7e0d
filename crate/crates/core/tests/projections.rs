mod common;

use common::{oracle_epi_l1, oracle_epi_linf, random_point, rng};
use hiernet_core::model::Norm;
use hiernet_core::prox::{
    project_epi, project_epi_l1, project_epi_l1_pos, project_epi_linf, project_orthant,
    project_symmetric, prox_conjugate, EpiPoint, MEMBERSHIP_TOL,
};
use hiernet_core::Error;
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::Rng;

const IDEMPOTENCE_TOL: f64 = 1e-10;
const NONEXPANSIVE_TOL: f64 = 1e-10;
const ORACLE_TOL: f64 = 1e-6;
const OPTIMALITY_TOL: f64 = 1e-6;

fn coord() -> impl Strategy<Value = f64> {
    prop_oneof![
        6 => -100.0..100.0f64,
        1 => -1.0..1.0f64,
        1 => Just(0.0),
        1 => Just(2.5),
        1 => Just(-2.5),
    ]
}

fn epi_point(max_m: usize) -> impl Strategy<Value = EpiPoint> {
    (1..=max_m).prop_flat_map(|m| {
        (coord(), coord(), prop::collection::vec(coord(), m))
            .prop_map(|(a, b, u)| EpiPoint::new(a, b, Array1::from(u)))
    })
}

fn epi_pair(max_m: usize) -> impl Strategy<Value = (EpiPoint, EpiPoint)> {
    (1..=max_m).prop_flat_map(|m| {
        let p = move || {
            (coord(), coord(), prop::collection::vec(coord(), m))
                .prop_map(|(a, b, u)| EpiPoint::new(a, b, Array1::from(u)))
        };
        (p(), p())
    })
}

fn norms() -> impl Strategy<Value = Norm> {
    prop_oneof![Just(Norm::L1), Just(Norm::Linf)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn epigraph_projection_is_idempotent(x in epi_point(10), norm in norms()) {
        let p = project_epi(&x, norm);
        let pp = project_epi(&p, norm);
        prop_assert!(p.distance(&pp) <= IDEMPOTENCE_TOL, "{:?}", p.distance(&pp));
    }

    #[test]
    fn positive_l1_projection_is_idempotent(x in epi_point(10)) {
        let x = EpiPoint::new(x.omega_plus, x.omega_minus, x.u.mapv(f64::abs));
        let p = project_epi_l1_pos(&x).unwrap();
        let pp = project_epi_l1_pos(&p).unwrap();
        prop_assert!(p.distance(&pp) <= IDEMPOTENCE_TOL);
        prop_assert!(p.u.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn orthant_and_symmetric_projections_are_idempotent(
        n in 1usize..10,
        vals in prop::collection::vec(-100.0..100.0f64, 100),
    ) {
        let m = Array2::from_shape_fn((n, n), |(i, j)| vals[i * 10 + j]);
        let o = project_orthant(&m);
        prop_assert_eq!(project_orthant(&o), o.clone());
        let s = project_symmetric(&m).unwrap();
        let ss = project_symmetric(&s).unwrap();
        let err = (&s - &ss).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        prop_assert!(err <= IDEMPOTENCE_TOL);
        prop_assert_eq!(s.clone(), s.t().to_owned());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn projection_lands_in_set(x in epi_point(50), norm in norms()) {
        let p = project_epi(&x, norm);
        prop_assert!(p.violation(norm) <= MEMBERSHIP_TOL, "violation {}", p.violation(norm));
    }

    #[test]
    fn projection_is_nonexpansive((x, y) in epi_pair(50), norm in norms()) {
        let px = project_epi(&x, norm);
        let py = project_epi(&y, norm);
        prop_assert!(px.distance(&py) <= x.distance(&y) + NONEXPANSIVE_TOL);
    }

    #[test]
    fn l1_projection_is_sign_equivariant(x in epi_point(50), flips in prop::collection::vec(any::<bool>(), 50)) {
        let signs: Array1<f64> = (0..x.u.len()).map(|i| if flips[i] { -1.0 } else { 1.0 }).collect();
        let flipped = EpiPoint::new(x.omega_plus, x.omega_minus, &x.u * &signs);
        let p = project_epi_l1(&x);
        let q = project_epi_l1(&flipped);
        prop_assert_eq!(q.omega_plus, p.omega_plus);
        prop_assert_eq!(q.omega_minus, p.omega_minus);
        prop_assert_eq!(q.u, &p.u * &signs);
    }

    #[test]
    fn projection_is_permutation_equivariant(x in epi_point(50), norm in norms(), seed in any::<u64>()) {
        let mut perm: Vec<usize> = (0..x.u.len()).collect();
        use rand::seq::SliceRandom;
        perm.shuffle(&mut rng(seed));
        let permuted = EpiPoint::new(x.omega_plus, x.omega_minus, perm.iter().map(|&i| x.u[i]).collect());
        let p = project_epi(&x, norm);
        let q = project_epi(&permuted, norm);
        prop_assert_eq!(q.omega_plus, p.omega_plus);
        prop_assert_eq!(q.omega_minus, p.omega_minus);
        let expected: Array1<f64> = perm.iter().map(|&i| p.u[i]).collect();
        prop_assert_eq!(q.u, expected);
    }

    #[test]
    fn projection_matches_oracles(x in epi_point(3)) {
        let d_inf = project_epi_linf(&x).distance(&oracle_epi_linf(&x));
        let d_one = project_epi_l1(&x).distance(&oracle_epi_l1(&x));
        prop_assert!(d_inf <= ORACLE_TOL, "linf off by {d_inf}");
        prop_assert!(d_one <= ORACLE_TOL, "l1 off by {d_one}");
    }

    #[test]
    fn moreau_decomposition_recovers_input(x in epi_point(20), norm in norms(), sigma in 0.01..10.0f64) {
        // x = sigma P(x / sigma) + prox_{sigma i*}(x)
        let conj = prox_conjugate(|p| project_epi(p, norm), &x, sigma).unwrap();
        let proj = project_epi(&x.scaled(1.0 / sigma), norm).scaled(sigma);
        let back = EpiPoint::new(
            conj.omega_plus + proj.omega_plus,
            conj.omega_minus + proj.omega_minus,
            &conj.u + &proj.u,
        );
        let scale = 1.0 + x.distance(&EpiPoint::new(0.0, 0.0, Array1::zeros(x.u.len())));
        prop_assert!(back.distance(&x) <= 1e-12 * scale);
    }
}

/// Random member of the epigraph: any `u`, then a split of a bound at least `|u|_r`.
fn feasible_point(r: &mut impl Rng, m: usize, scale: f64, norm: Norm) -> EpiPoint {
    let u: Array1<f64> = (0..m).map(|_| scale * r.random_range(-3.0..3.0)).collect();
    let bound = norm.of(u.view())
        + if r.random_bool(0.5) {
            0.0
        } else {
            scale * r.random_range(0.0..2.0)
        };
    let wp = scale * r.random_range(-3.0..3.0);
    EpiPoint::new(wp, bound - wp, u)
}

#[test]
fn projection_beats_random_feasible_points() {
    let mut r = rng(11);
    for case in 0..30 {
        let m = 1 + case % 3;
        let x = random_point(&mut r, m);
        let scale = 1.0 + x.u.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for norm in [Norm::L1, Norm::Linf] {
            let d = project_epi(&x, norm).distance(&x);
            for _ in 0..10_000 {
                let y = feasible_point(&mut r, m, scale, norm);
                assert!(d <= y.distance(&x) + OPTIMALITY_TOL, "{norm} case {case}");
            }
        }
    }
}

#[test]
fn negative_input_to_positive_l1_projection_is_rejected() {
    let x = EpiPoint::new(0.0, 0.0, Array1::from(vec![1.0, -0.5]));
    assert!(matches!(project_epi_l1_pos(&x), Err(Error::Contract(_))));
}

#[test]
fn duplicate_magnitudes_do_not_change_the_result() {
    let base = EpiPoint::new(0.3, -0.1, Array1::from(vec![2.0, 2.0, -2.0, 1.0, 2.0]));
    let reordered = EpiPoint::new(0.3, -0.1, Array1::from(vec![2.0, 1.0, 2.0, 2.0, -2.0]));
    for norm in [Norm::L1, Norm::Linf] {
        let p = project_epi(&base, norm);
        let q = project_epi(&reordered, norm);
        assert_eq!(p.omega_plus, q.omega_plus);
        assert_eq!(p.omega_minus, q.omega_minus);
        assert_eq!(p.u[3], q.u[1]);
    }
}
