// SPDX-License-Identifier: Apache-2.0

use std::sync::Arc;

use berkz_core::arith::{q, qi};
use berkz_core::metric::{green_eval_in_chart, same_metric};
use berkz_core::{
    check_no_common_zero, green_eval, pullback, restrict_to_fiber, Chart, FiberPoint, Form, GlobalTropFSMetric,
    GreenFunction, GreenValue, PolyMap, ProjQ, SpectrumPoint, Term, Q,
};
use num_complex::Complex64;
use proptest::prelude::*;

fn form(s: &str) -> Form {
    Form::parse(s).unwrap()
}

fn metric(d: Q, m: u64, terms: &[(&str, Q)]) -> GlobalTropFSMetric {
    GlobalTropFSMetric::new(d, m, terms.iter().map(|(s, l)| Term { section: form(s), lambda: l.clone() }).collect())
        .unwrap()
}

fn pure(d: i64, m: u64, sections: &[&str]) -> GlobalTropFSMetric {
    let terms: Vec<(&str, Q)> = sections.iter().map(|s| (*s, qi(0))).collect();
    metric(q(d, 1), m, &terms)
}

fn green_y(phi: GlobalTropFSMetric) -> GreenFunction {
    let d = phi.d().clone();
    GreenFunction::new(Arc::new(phi), vec![(Form::y(), d)]).unwrap()
}

fn padic(p: u64, t: f64) -> SpectrumPoint {
    SpectrumPoint::p_adic(p, t).unwrap()
}

fn arch(eps: f64, re: f64, im: f64) -> FiberPoint {
    FiberPoint::arch(SpectrumPoint::archimedean(eps).unwrap(), Complex64::new(re, im)).unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a == b) || (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

#[test]
fn common_zero_examples() {
    assert!(check_no_common_zero(&pure(3, 1, &["X^3", "Y^3"])).unwrap().ok);
    let r = check_no_common_zero(&pure(1, 1, &["X", "X+2*Y"])).unwrap();
    assert!(!r.ok && !r.bad_generic);
    assert_eq!(r.bad_primes, vec![2.into()]);
    let r = check_no_common_zero(&pure(2, 1, &["X*Y", "X^2"])).unwrap();
    assert!(r.bad_generic && !r.ok);
    let r = check_no_common_zero(&pure(2, 1, &["X^2+Y^2", "X*Y", "X^2-Y^2+6*X*Y"])).unwrap();
    assert!(r.ok, "{r:?}");
    assert!(GlobalTropFSMetric::new(qi(1), 1, vec![]).is_err());
    assert!(GlobalTropFSMetric::new(qi(1), 1, vec![Term::pure(form("X^2")), Term::pure(form("Y"))]).is_err());
}

#[test]
fn green_examples() {
    let g = green_y(GlobalTropFSMetric::standard());
    for p in [2u64, 3, 7] {
        let x = FiberPoint::type1(padic(p, 1.0 / p as f64), ProjQ::Finite(q(1, p as i64))).unwrap();
        assert!(close(green_eval(&g, &x).unwrap().to_f64(), (p as f64).ln(), 1e-14));
        let gauss = FiberPoint::gauss(padic(p, 0.5)).unwrap();
        assert_eq!(green_eval(&g, &gauss).unwrap().to_f64(), 0.0);
    }
    assert!(close(green_eval(&g, &arch(1.0, 2.0, 0.0)).unwrap().to_f64(), 2f64.ln(), 1e-14));
    let inf = FiberPoint::type1(padic(3, 0.5), ProjQ::Infinity).unwrap();
    assert_eq!(green_eval(&g, &inf).unwrap(), GreenValue::PlusInfinity);
    let g0 = green_eval(&g, &FiberPoint::gauss(SpectrumPoint::trivial()).unwrap()).unwrap();
    assert_eq!(g0.to_f64(), 0.0);
}

#[test]
fn pullback_examples() {
    let std = GlobalTropFSMetric::standard();
    let sq = PolyMap::new(form("X^2"), form("Y^2")).unwrap();
    let once = pullback(&std, &sq).unwrap();
    assert!(same_metric(&once, &std));
    let twice = pullback(&once, &sq).unwrap();
    assert_eq!(twice.m(), 4);
    assert_eq!(twice.terms()[0].section.degree(), 4);
    let f = PolyMap::new(form("X^2+Y^2"), form("Y^2")).unwrap();
    let phi = pullback(&std, &f).unwrap();
    assert!(phi.is_pure());
    let v = green_eval(&green_y(phi), &arch(1.0, 0.0, 0.0)).unwrap().to_f64();
    assert!(v.abs() < 1e-15);
    assert!(PolyMap::new(form("X^2"), form("X*Y")).unwrap().check().is_err());
    assert!(pullback(&std, &PolyMap::new(form("X^2+2*Y^2"), form("2*X^2")).unwrap()).is_err());
}

#[test]
fn restriction_is_evaluation_over_the_trivial_point() {
    let phi = Arc::new(GlobalTropFSMetric::standard());
    let r = restrict_to_fiber(&phi, SpectrumPoint::trivial());
    let v = r.eval(&FiberPoint::gauss(SpectrumPoint::trivial()).unwrap()).unwrap();
    assert_eq!(v.to_f64(), 0.0);
    assert!(r.eval(&FiberPoint::gauss(padic(2, 0.5)).unwrap()).is_err());
}

#[test]
fn same_metric_detects_identities() {
    assert!(same_metric(&pure(2, 1, &["X^2", "Y^2"]), &GlobalTropFSMetric::standard_multiple(2)));
    assert!(!same_metric(&pure(2, 1, &["X^2", "Y^2"]), &GlobalTropFSMetric::standard()));
    assert!(same_metric(&pure(1, 2, &["X^2", "Y^2"]), &GlobalTropFSMetric::standard()));
    assert!(!same_metric(&pure(1, 1, &["X", "X+Y"]), &GlobalTropFSMetric::standard()));
}

fn arb_metric() -> impl Strategy<Value = GlobalTropFSMetric> {
    let pool = vec![
        ("X", "Y"),
        ("X+Y", "X-Y"),
        ("2*X+Y", "Y"),
        ("X", "3*X+Y"),
    ];
    (prop::sample::select(pool), -3i64..=3, any::<bool>()).prop_map(|((a, b), l, pure)| {
        let lambda = if pure { qi(0) } else { q(l, 4) };
        metric(qi(1), 1, &[(a, lambda), (b, qi(0))])
    })
}

fn arb_q() -> impl Strategy<Value = Q> {
    (-30i64..=30, prop::sample::select(vec![1i64, 2, 3, 5, 7])).prop_map(|(n, d)| q(n, d))
}

proptest! {
    #[test]
    fn max_structure_ignores_dominated_terms(
        p in prop::sample::select(vec![2u64, 3, 5]),
        t in 0.05f64..1.0,
        a in arb_q(),
        r in arb_q(),
        z in (-4.0f64..4.0, 0.0f64..4.0),
        eps in 0.05f64..=1.0,
    ) {
        let base = GlobalTropFSMetric::standard();
        // |X + Y| <= 2 max(|X|, |Y|) at every point.
        let extra = metric(qi(1), 1, &[("X", qi(0)), ("Y", qi(0)), ("X+Y", q(-7, 10))]);
        let (g0, g1) = (green_y(base), green_y(extra));
        let pts = [
            FiberPoint::disc(padic(p, t), a.clone(), r).ok(),
            FiberPoint::type1(padic(p, t), ProjQ::Finite(a)).ok(),
            Some(arch(eps, z.0, z.1)),
        ];
        for x in pts.into_iter().flatten() {
            let (v0, v1) = (green_eval(&g0, &x).unwrap().to_f64(), green_eval(&g1, &x).unwrap().to_f64());
            prop_assert!(close(v0, v1, 1e-12), "{x}: {v0} vs {v1}");
        }
    }

    #[test]
    fn equivariance_along_branches(
        phi in arb_metric(),
        p in prop::sample::select(vec![2u64, 3, 5]),
        t in 0.05f64..0.95,
        s in 0.2f64..3.0,
        a in arb_q(),
        r in arb_q(),
        z in (-4.0f64..4.0, 0.01f64..4.0),
        eps in 0.05f64..=1.0,
    ) {
        prop_assume!(phi.is_pure());
        let g = green_y(phi);
        let (x, y) = (FiberPoint::disc(padic(p, t), a.clone(), r.clone()), FiberPoint::disc(padic(p, t.powf(s)), a, r));
        if let (Ok(x), Ok(y)) = (x, y) {
            let (u, v) = (green_eval(&g, &x).unwrap(), green_eval(&g, &y).unwrap());
            match (&u, &v) {
                (GreenValue::Exact { units: a, constant: c, .. }, GreenValue::Exact { units: b, constant: d, .. }) => {
                    prop_assert_eq!(a, b);
                    prop_assert_eq!(c, d);
                }
                _ => prop_assert_eq!(u.is_finite(), v.is_finite()),
            }
            if u.is_finite() {
                prop_assert!(close(v.to_f64(), s * u.to_f64(), 1e-12));
            }
        }
        let one = green_eval(&g, &arch(1.0, z.0, z.1)).unwrap().to_f64();
        let at = green_eval(&g, &arch(eps, z.0, z.1)).unwrap().to_f64();
        prop_assert!(close(at, eps * one, 1e-12), "{at} vs {}", eps * one);
    }

    #[test]
    fn chart_independence(
        phi in arb_metric(),
        p in prop::sample::select(vec![2u64, 3, 5]),
        t in 0.05f64..1.0,
        a in arb_q(),
        r in arb_q(),
        z in (-4.0f64..4.0, 0.01f64..4.0),
        eps in 0.05f64..=1.0,
    ) {
        prop_assume!(a != qi(0));
        let g = green_y(phi);
        let pts = [
            FiberPoint::disc(padic(p, t), a.clone(), r).ok(),
            FiberPoint::type1(padic(p, t), ProjQ::Finite(a)).ok(),
            Some(arch(eps, z.0, z.1)),
        ];
        for x in pts.into_iter().flatten() {
            let (Ok(u), Ok(v)) = (green_eval_in_chart(&g, &x, Chart::A), green_eval_in_chart(&g, &x, Chart::B)) else {
                continue;
            };
            if x.is_archimedean() {
                prop_assert!(close(u.to_f64(), v.to_f64(), 1e-10));
            } else {
                prop_assert!(u == v || close(u.to_f64(), v.to_f64(), 1e-14), "{x}: {u:?} vs {v:?}");
            }
        }
    }

    #[test]
    fn continuity_at_the_trivial_point(phi in arb_metric(), a in arb_q(), p in prop::sample::select(vec![2u64, 3, 5])) {
        let g = green_y(phi);
        let x0 = green_eval(&g, &FiberPoint::type1(SpectrumPoint::trivial(), ProjQ::Finite(a.clone())).unwrap()).unwrap();
        let near_p = FiberPoint::type1(padic(p, 1.0 - 1e-9), ProjQ::Finite(a.clone())).unwrap();
        let re = berkz_core::arith::q_to_f64(&a);
        let near_inf = arch(1e-9, re, 0.0);
        for x in [near_p, near_inf] {
            let v = green_eval(&g, &x).unwrap();
            prop_assert_eq!(v.is_finite(), x0.is_finite());
            if x0.is_finite() {
                prop_assert!(close(v.to_f64(), x0.to_f64(), 1e-6), "{} vs {}", v.to_f64(), x0.to_f64());
            }
        }
    }

    #[test]
    fn pullback_bookkeeping(
        phi in arb_metric(),
        f in prop::sample::select(vec![("X^2", "Y^2"), ("X^2+Y^2", "Y^2"), ("X^2-X*Y", "Y^2"), ("X^3+Y^3", "Y^3")]),
    ) {
        let f = PolyMap::new(form(f.0), form(f.1)).unwrap();
        let q_ = f.degree() as u64;
        let out = pullback(&phi, &f).unwrap();
        prop_assert_eq!(out.d(), phi.d());
        prop_assert_eq!(out.m(), phi.m() * q_);
        prop_assert_eq!(out.is_pure(), phi.is_pure());
        for t in out.terms() {
            prop_assert_eq!(t.section.degree() as u64, phi.section_degree() as u64 * q_);
        }
    }
}
