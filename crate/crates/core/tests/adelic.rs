// SPDX-License-Identifier: Apache-2.0

use std::sync::Arc;

use berkz_core::adelic::{archimedean_boundary, boundary_interior, dynamical_divisors};
use berkz_core::arith::{q, qi};
use berkz_core::metric::same_metric;
use berkz_core::{
    analytic_boundary_green, boundary_norm, delta_membership, invariance_residual, invariant_metric_sequence,
    verify_cauchy, BoundaryDivisor, Error, ExtQ, FiberPoint, Form, GlobalTropFSMetric, ModelAdelicDivisor,
    NormConfig, NormRegime, Place, PolyMap, ProjQ, SpectrumPoint, Term, Q,
};
use num_complex::Complex64;
use num_traits::Signed;
use proptest::prelude::*;

fn form(s: &str) -> Form {
    Form::parse(s).unwrap()
}

fn metric(d: i64, m: u64, sections: &[&str]) -> GlobalTropFSMetric {
    GlobalTropFSMetric::new(qi(d), m, sections.iter().map(|s| Term::pure(form(s))).collect()).unwrap()
}

fn map(f0: &str, f1: &str) -> PolyMap {
    PolyMap::new(form(f0), form(f1)).unwrap()
}

/// `[X] + [Y] + [inf]` with the degree-2 standard metric.
fn xy_boundary() -> BoundaryDivisor {
    BoundaryDivisor::with_standard_metric(vec![(form("X"), qi(1)), (form("Y"), qi(1))], vec![(Place::Infinity, qi(1))])
        .unwrap()
}

fn norm(e: &ModelAdelicDivisor, d0: &BoundaryDivisor) -> ExtQ {
    boundary_norm(e, d0, &NormConfig::default()).unwrap().value
}

fn fin(a: i64, b: i64) -> ExtQ {
    ExtQ::Finite(q(a, b))
}

#[test]
fn norm_examples() {
    let d0 = xy_boundary();
    let half = d0.as_divisor().scale(&q(1, 2));
    let r = boundary_norm(&half, &d0, &NormConfig::default()).unwrap();
    assert_eq!((r.value, r.regime, r.exact), (fin(1, 2), NormRegime::Proportional, true));
    assert_eq!(norm(&half.sub(&half).unwrap(), &d0), fin(0, 1));
    assert_eq!(norm(&d0.as_divisor().scale(&q(-3, 7)), &d0), fin(3, 7));

    let u = d0.open_subscheme();
    // g_E = log|Y/X| against g_D0 = |log|X/Y|| + 1: the supremum of |u| / (|u| + 1) is 1.
    let ratio = ModelAdelicDivisor::new(vec![(form("X"), qi(1)), (form("Y"), qi(-1))], vec![], vec![], u.clone()).unwrap();
    assert_eq!(norm(&ratio, &d0), fin(1, 1));
    let vertical = ModelAdelicDivisor::new(vec![], vec![(Place::Infinity, q(-5, 3))], vec![], u.clone()).unwrap();
    assert_eq!(norm(&vertical, &d0), fin(5, 3));
}

#[test]
fn unbounded_norms() {
    let d0 = xy_boundary();
    let u = d0.open_subscheme();
    let std = Arc::new(GlobalTropFSMetric::standard());
    let integral = ModelAdelicDivisor::new(vec![(form("X-Y"), qi(1))], vec![], vec![(qi(1), std)], u.clone()).unwrap();
    let r = boundary_norm(&integral, &d0, &NormConfig::default()).unwrap();
    assert_eq!((r.value, r.regime), (ExtQ::Infinite, NormRegime::Unbounded));
    let fiber = ModelAdelicDivisor::new(vec![], vec![(Place::Prime(5), qi(-2))], vec![], u).unwrap();
    assert_eq!(norm(&fiber, &d0), ExtQ::Infinite);
}

#[test]
fn invalid_divisors() {
    let d0 = xy_boundary();
    let other = ModelAdelicDivisor::new(vec![], vec![(Place::Infinity, qi(1))], vec![], Default::default()).unwrap();
    assert!(matches!(boundary_norm(&other, &d0, &NormConfig::default()), Err(Error::Input(_))));
    let std = Arc::new(GlobalTropFSMetric::standard());
    let u = d0.open_subscheme();
    assert!(ModelAdelicDivisor::new(vec![(form("X"), qi(2))], vec![], vec![(qi(1), std.clone())], u.clone()).is_err());
    assert!(
        ModelAdelicDivisor::new(vec![(form("X+Y"), q(1, 2))], vec![], vec![(q(1, 2), std)], u).is_err(),
        "a fractional coefficient on a component meeting U"
    );
    assert!(BoundaryDivisor::with_standard_metric(vec![(form("X"), qi(-1))], vec![]).is_err());
    assert!(BoundaryDivisor::with_standard_metric(vec![], vec![(Place::Prime(6), qi(1))]).is_err());
}

#[test]
fn cauchy_on_scalings_of_the_boundary() {
    let d0 = xy_boundary();
    let n = 7;
    let seq: Vec<ModelAdelicDivisor> = (0..n).map(|i| d0.as_divisor().scale(&q(1, 1 << i))).collect();
    let w = verify_cauchy(&seq, &d0, 0.5, &NormConfig::default()).unwrap();
    // max over j > i of 2^-i - 2^-j, attained at the last index.
    for (i, e) in w.epsilons.iter().enumerate() {
        assert_eq!(e, &ExtQ::Finite(q(1, 1 << i) - q(1, 1 << (n - 1))));
    }
    assert!(w.ok() && w.verified_through == n - 2);

    let constant = vec![d0.as_divisor(); 4];
    let w = verify_cauchy(&constant, &d0, 0.5, &NormConfig::default()).unwrap();
    assert!(w.ok() && w.epsilons.iter().all(|e| *e == fin(0, 1)));

    let u = d0.open_subscheme();
    let bad = ModelAdelicDivisor::new(vec![(form("X-Y"), qi(1)), (form("X"), qi(-1))], vec![], vec![], u).unwrap();
    let w = verify_cauchy(&[d0.as_divisor(), bad], &d0, 0.5, &NormConfig::default()).unwrap();
    assert_eq!((w.epsilons[0].clone(), w.first_failure), (ExtQ::Infinite, Some(0)));
    assert!(verify_cauchy(&seq[..1], &d0, 0.5, &NormConfig::default()).is_err());
}

#[test]
fn invariant_sequences() {
    let flat = invariant_metric_sequence(&map("X^2", "Y^2"), 6, 512).unwrap();
    assert_eq!(flat.len(), 7);
    assert!(flat.iter().all(|phi| same_metric(phi, &GlobalTropFSMetric::standard())));
    let seq = invariant_metric_sequence(&map("X^2+Y^2", "Y^2"), 1, 512).unwrap();
    assert!(same_metric(&seq[1], &metric(1, 2, &["X^2+Y^2", "Y^2"])));
    assert!(matches!(invariant_metric_sequence(&map("X^2", "Y^2"), 10, 512), Err(Error::Unsupported(_))));
    assert!(invariant_metric_sequence(&map("X^2", "X*Y"), 2, 512).is_err());
    assert!(invariant_metric_sequence(&map("X^2+2*Y^2", "2*X^2"), 2, 512).is_err());
}

#[test]
fn dynamical_sequence_is_cauchy() {
    let f = map("X^2+Y^2", "Y^2");
    let seq = invariant_metric_sequence(&f, 7, 512).unwrap();
    let d0 = archimedean_boundary().unwrap();
    let w = verify_cauchy(&dynamical_divisors(&seq).unwrap(), &d0, 0.6, &NormConfig::default()).unwrap();
    assert!(w.ok(), "{w:?}");
    // eps_i <= C 2^-i with C read off the first step.
    let c = w.epsilons[0].to_f64();
    for (i, e) in w.epsilons.iter().enumerate() {
        assert!(e.to_f64() <= c * 0.5f64.powi(i as i32) * 1.2 + 1e-15, "eps_{i} = {e}");
    }
}

#[test]
fn invariance_residual_examples() {
    let cfg = NormConfig::default();
    assert_eq!(invariance_residual(&GlobalTropFSMetric::standard(), &map("X^2", "Y^2"), &cfg).unwrap(), 0.0);
    let f = map("X^2+Y^2", "Y^2");
    let seq = invariant_metric_sequence(&f, 7, 512).unwrap();
    let res: Vec<f64> = seq.iter().map(|phi| invariance_residual(phi, &f, &cfg).unwrap()).collect();
    // The residual of phi_i is the sampled sup of |phi_{i+1} - phi_i|.
    assert!(res[5] <= res[0] / 32.0 * 1.05, "{res:?}");
    for i in 0..res.len() - 1 {
        assert!(res[i + 1] <= res[i] / 2.0 + res[i], "{res:?}");
    }
    assert!(res.windows(2).all(|w| w[1] < w[0]), "{res:?}");
}

fn arch(eps: f64, re: f64, im: f64) -> FiberPoint {
    FiberPoint::arch(SpectrumPoint::archimedean(eps).unwrap(), Complex64::new(re, im)).unwrap()
}

#[test]
fn delta_set_examples() {
    let d0 = BoundaryDivisor::with_standard_metric(vec![(form("X"), qi(1))], vec![(Place::Infinity, qi(1))]).unwrap();
    let gauss = FiberPoint::gauss(SpectrumPoint::trivial()).unwrap();
    assert_eq!(analytic_boundary_green(&d0, &gauss).unwrap().to_f64(), 0.0);
    assert!(boundary_interior(&d0, &gauss));

    // Only the vertical part: g~ = c eps on the complex fibers.
    let three = BoundaryDivisor::new(vec![], vec![(Place::Infinity, qi(3))], GlobalTropFSMetric::trivial()).unwrap();
    assert!((analytic_boundary_green(&three, &arch(1.0, 0.3, 0.1)).unwrap().to_f64() - 3.0).abs() < 1e-15);
    assert!(delta_membership(&three, &arch(1.0 / 3.0, 0.3, 0.1)).unwrap());
    assert!(!delta_membership(&three, &arch(0.5, 0.3, 0.1)).unwrap());

    let half = BoundaryDivisor::new(vec![], vec![(Place::Infinity, q(1, 2))], GlobalTropFSMetric::trivial()).unwrap();
    assert!(delta_membership(&half, &arch(1.0, 2.0, 0.0)).unwrap());
    let one = BoundaryDivisor::new(vec![], vec![(Place::Infinity, qi(1))], GlobalTropFSMetric::trivial()).unwrap();
    assert!(!delta_membership(&one, &arch(0.5, 2.0, 0.0)).unwrap());
}

fn arb_q() -> impl Strategy<Value = Q> {
    (-12i64..=12, 1i64..=6).prop_map(|(n, d)| q(n, d))
}

/// `a[X] + b[Y] + c[inf]` with metric `(a + b - 2g) phi_std + g phi_alt`.
fn arb_divisor() -> impl Strategy<Value = ModelAdelicDivisor> {
    (arb_q(), arb_q(), arb_q(), arb_q()).prop_map(|(a, b, c, g)| {
        let std = Arc::new(GlobalTropFSMetric::standard());
        let alt = Arc::new(metric(2, 1, &["X^2", "Y^2", "(X+Y)^2"]));
        ModelAdelicDivisor::new(
            vec![(form("X"), a.clone()), (form("Y"), b.clone())],
            vec![(Place::Infinity, c)],
            vec![(&a + &b - &g * qi(2), std), (g, alt)],
            xy_boundary().open_subscheme(),
        )
        .unwrap()
    })
}

fn arb_point() -> impl Strategy<Value = FiberPoint> {
    let coords = vec![q(0, 1), q(1, 1), q(-1, 1), q(1, 2), q(2, 1), q(3, 5), q(9, 4)];
    (
        0usize..4,
        prop::sample::select(vec![2u64, 3, 5]),
        0.05f64..1.0,
        prop::sample::select(coords),
        -3i64..4,
        (-2.0f64..2.0, -2.0f64..2.0),
    )
        .prop_filter_map("not a point of this fiber", |(k, p, t, c, r, z)| {
            let base = match k {
                0 => SpectrumPoint::trivial(),
                1 => SpectrumPoint::p_adic(p, t).unwrap(),
                2 => SpectrumPoint::p_adic(p, 0.0).unwrap(),
                _ => return Some(arch(t, z.0, z.1)),
            };
            match r {
                -3 => FiberPoint::type1(base, ProjQ::Finite(c)).ok(),
                -2 => FiberPoint::type1(base, ProjQ::Infinity).ok(),
                r => FiberPoint::disc(base, c, qi(r)).ok(),
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn homogeneity_is_exact(e in arb_divisor(), c in arb_q()) {
        let d0 = xy_boundary();
        let expected = match norm(&e, &d0) {
            ExtQ::Finite(v) => ExtQ::Finite(v * c.abs()),
            ExtQ::Infinite if c == qi(0) => ExtQ::Finite(qi(0)),
            ExtQ::Infinite => ExtQ::Infinite,
        };
        prop_assert_eq!(norm(&e.scale(&c), &d0), expected);
    }

    #[test]
    fn triangle_inequality(e1 in arb_divisor(), e2 in arb_divisor()) {
        let d0 = xy_boundary();
        let (n1, n2, n12) = (norm(&e1, &d0), norm(&e2, &d0), norm(&e1.add(&e2).unwrap(), &d0));
        match (&n1, &n2, &n12) {
            (ExtQ::Finite(a), ExtQ::Finite(b), ExtQ::Finite(c)) => prop_assert!(c <= &(a + b)),
            (ExtQ::Finite(_), ExtQ::Finite(_), ExtQ::Infinite) => prop_assert!(false, "{} + {} < inf", n1, n2),
            _ => {}
        }
    }

    #[test]
    fn green_vanishes_exactly_on_the_interior(x in arb_point(), which in 0usize..3) {
        let d0 = [
            BoundaryDivisor::with_standard_metric(vec![(form("X"), qi(1))], vec![(Place::Infinity, qi(1))]).unwrap(),
            BoundaryDivisor::with_standard_metric(
                vec![(form("X"), qi(1)), (form("X-Y"), q(1, 2))],
                vec![(Place::Prime(2), qi(1)), (Place::Infinity, qi(1))],
            )
            .unwrap(),
            BoundaryDivisor::new(vec![(form("Y"), qi(1))], vec![(Place::Prime(3), qi(2)), (Place::Infinity, qi(1))], GlobalTropFSMetric::standard())
                .unwrap(),
        ][which].clone();
        let g = analytic_boundary_green(&d0, &x).unwrap().to_f64();
        prop_assert!(g >= 0.0, "{x}: {g}");
        prop_assert_eq!(g == 0.0, boundary_interior(&d0, &x), "{}: {}", x, g);
    }
}
