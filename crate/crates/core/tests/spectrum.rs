// SPDX-License-Identifier: Apache-2.0

use berkz_core::arith::{q, qi};
use berkz_core::spectrum::{residue_class, Interval, ResidueClass};
use berkz_core::{integrate_mu, mu, mu_prime, mu_total, BranchSet, MuQuadratureConfig, Place, SpectrumPoint};
use num_bigint::BigInt;
use proptest::prelude::*;
use std::f64::consts::E;

fn seminorm(x: &SpectrumPoint, n: i64) -> f64 {
    x.seminorm(&BigInt::from(n))
}

fn w(p: u64) -> f64 {
    1.0 / ((p as f64) * (p as f64).ln())
}

#[test]
fn seminorm_examples() {
    assert_eq!(seminorm(&SpectrumPoint::p_adic(2, 0.5).unwrap(), 12), 0.25);
    assert_eq!(seminorm(&SpectrumPoint::p_adic(5, 0.0).unwrap(), 10), 0.0);
    assert_eq!(seminorm(&SpectrumPoint::p_adic(5, 0.0).unwrap(), 7), 1.0);
    assert_eq!(seminorm(&SpectrumPoint::trivial(), 7), 1.0);
    assert_eq!(seminorm(&SpectrumPoint::p_adic(3, 1.0).unwrap(), 9), 1.0);
    assert_eq!(seminorm(&SpectrumPoint::archimedean(1.0).unwrap(), -7), 7.0);
    assert_eq!(seminorm(&SpectrumPoint::archimedean(0.5).unwrap(), 0), 0.0);
}

#[test]
fn classification_examples() {
    assert_eq!(residue_class(&SpectrumPoint::archimedean(1.0).unwrap()), ResidueClass::ArchimedeanReal { eps: 1.0 });
    assert_eq!(residue_class(&SpectrumPoint::p_adic(3, 0.0).unwrap()), ResidueClass::TrivialFp { p: 3 });
    assert_eq!(residue_class(&SpectrumPoint::p_adic(3, 1.0).unwrap()), ResidueClass::TrivialQ);
    match residue_class(&SpectrumPoint::p_adic(2, 0.25).unwrap()) {
        ResidueClass::PAdic { p: 2, eps } => assert!((eps - 2.0).abs() < 1e-12),
        c => panic!("{c:?}"),
    }
}

#[test]
fn zariski_density() {
    assert!(!SpectrumPoint::p_adic(2, 0.0).unwrap().is_zariski_dense());
    assert!(SpectrumPoint::archimedean(0.3).unwrap().is_zariski_dense());
    assert!(SpectrumPoint::trivial().is_zariski_dense());
}

#[test]
fn trivial_ends_are_glued() {
    let ends = [
        SpectrumPoint::trivial(),
        SpectrumPoint::archimedean(0.0).unwrap(),
        SpectrumPoint::p_adic(2, 1.0).unwrap(),
        SpectrumPoint::p_adic(101, 1.0).unwrap(),
    ];
    for a in &ends {
        for b in &ends {
            assert_eq!(a, b);
            assert_eq!(a.is_zariski_dense(), b.is_zariski_dense());
        }
        assert_eq!(residue_class(a), ResidueClass::TrivialQ);
    }
}

#[test]
fn bad_points_are_rejected() {
    assert!(SpectrumPoint::p_adic(4, 0.5).is_err());
    assert!(SpectrumPoint::archimedean(1.5).is_err());
    assert!(SpectrumPoint::p_adic(3, -0.1).is_err());
    assert!(Interval::closed(q(1, 2), q(1, 4)).is_err());
    assert!(Interval::closed(qi(0), q(3, 2)).is_err());
}

#[test]
fn mu_prime_examples() {
    let inf = BranchSet::empty().with_branch(Place::Infinity, vec![Interval::closed(qi(0), qi(1)).unwrap()]);
    let v = mu_prime(&inf, 1000).unwrap().value;
    assert!(v.contains(1.0 / E) && v.radius < 1e-15);
    let two = BranchSet::empty().with_branch(Place::Prime(2), vec![Interval::closed(qi(0), qi(1)).unwrap()]);
    assert!((mu_prime(&two, 1000).unwrap().value.mid - w(2)).abs() < 1e-15);
    let point = BranchSet::empty().with_branch(Place::Prime(3), vec![Interval::closed(qi(0), qi(0)).unwrap()]);
    assert_eq!(mu_prime(&point, 1000).unwrap().value.mid, 0.0);
}

#[test]
fn mu_total_partial_sum_and_tail() {
    let m = mu_total(10).unwrap();
    let partial = 1.0 / E + w(2) + w(3) + w(5) + w(7);
    assert!((m.partial - partial).abs() < 1e-14);
    assert!(m.tail.lo() >= 0.0);
    let big = mu_total(1_000_000).unwrap();
    assert!(big.tail.radius <= m.tail.radius);
    assert!(mu_total(4_000_000).unwrap().tail.radius < big.tail.radius);
    assert!(mu_total(1000).unwrap().value.mid <= big.value.mid + big.value.radius);
    // The enclosures at different cutoffs must overlap.
    assert!(m.value.lo() <= big.value.hi() && big.value.lo() <= m.value.hi());
}

#[test]
fn mu_examples() {
    let cutoff = 10_000;
    let total = mu_total(cutoff).unwrap();
    let full = mu(&BranchSet::full(), cutoff).unwrap();
    assert!((full.mid - 1.0).abs() <= full.radius + total.tail_radius() + 1e-15);
    assert_eq!(mu(&BranchSet::empty(), cutoff).unwrap().mid, 0.0);
    let inf = BranchSet::empty().with_branch(Place::Infinity, vec![Interval::closed(qi(0), qi(1)).unwrap()]);
    let m = mu(&inf, cutoff).unwrap();
    assert!(m.lo() <= (1.0 / E) / total.value.lo() && (1.0 / E) / total.value.hi() <= m.hi());
}

#[test]
fn complement_is_exact() {
    let set = BranchSet::empty()
        .with_branch(Place::Prime(2), vec![Interval::closed(q(1, 4), q(1, 2)).unwrap()])
        .with_branch(Place::Infinity, vec![Interval::closed(qi(0), q(1, 3)).unwrap()]);
    let c = set.complement();
    for pl in [Place::Infinity, Place::Prime(2), Place::Prime(3)] {
        assert_eq!(set.branch_length(pl) + c.branch_length(pl), qi(1));
    }
}

#[test]
fn integration_examples() {
    let cfg = MuQuadratureConfig { cutoff: 1000, nodes: 16 };
    let one = integrate_mu(|_| 1.0, cfg).unwrap();
    assert!((one.value - 1.0).abs() <= one.total_err() + 1e-12);
    let total = mu_total(1000).unwrap().value.mid;
    let ind = integrate_mu(|x: &SpectrumPoint| if x.place() == Place::Infinity { 1.0 } else { 0.0 }, cfg).unwrap();
    assert!((ind.value - (1.0 / E) / total).abs() < 1e-12);
    let t2 = integrate_mu(|x: &SpectrumPoint| if x.place() == Place::Prime(2) { x.t() } else { 0.0 }, cfg).unwrap();
    assert!((t2.value - 0.5 * w(2) / total).abs() < 1e-12);
    assert!(integrate_mu(|_| f64::NAN, cfg).is_err());
}

fn arb_point() -> impl Strategy<Value = SpectrumPoint> {
    prop_oneof![
        (0.01f64..=1.0).prop_map(|e| SpectrumPoint::archimedean(e).unwrap()),
        (prop::sample::select(vec![2u64, 3, 5, 7, 11, 101]), 0.0f64..=1.0)
            .prop_map(|(p, t)| SpectrumPoint::p_adic(p, t).unwrap()),
        Just(SpectrumPoint::trivial()),
    ]
}

fn arb_interval() -> impl Strategy<Value = (i64, i64)> {
    (0i64..=12, 0i64..=12).prop_map(|(a, b)| (a.min(b), a.max(b)))
}

proptest! {
    #[test]
    fn multiplicativity(x in arb_point(), m in -1_000_000i64..=1_000_000, n in -1_000_000i64..=1_000_000) {
        let lhs = x.seminorm(&(BigInt::from(m) * BigInt::from(n)));
        let rhs = seminorm(&x, m) * seminorm(&x, n);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(lhs.abs()), "{lhs} vs {rhs}");
    }

    #[test]
    fn power_law_along_prime_branches(
        p in prop::sample::select(vec![2u64, 3, 5, 13]),
        t in 0.01f64..0.99,
        t2 in 0.01f64..0.99,
        n in 1i64..100_000,
    ) {
        let a = seminorm(&SpectrumPoint::p_adic(p, t).unwrap(), n);
        let b = seminorm(&SpectrumPoint::p_adic(p, t2).unwrap(), n);
        let expect = b.powf(t.ln() / t2.ln());
        prop_assert!((a - expect).abs() <= 1e-10 * a.max(expect));
    }

    #[test]
    fn additivity_on_disjoint_sets(
        (a, b) in arb_interval(),
        (c, d) in arb_interval(),
        p in prop::sample::select(vec![Place::Infinity, Place::Prime(2), Place::Prime(7)]),
    ) {
        // Disjoint halves [a, b]/24 and [12 + c, 12 + d]/24.
        let i1 = Interval::closed(q(a, 24), q(b, 24)).unwrap();
        let i2 = Interval::closed(q(12 + c, 24), q(12 + d, 24)).unwrap();
        prop_assume!(b < 12 || c > 0);
        let e1 = BranchSet::empty().with_branch(p, vec![i1.clone()]);
        let e2 = BranchSet::empty().with_branch(p, vec![i2.clone()]);
        let u = BranchSet::empty().with_branch(p, vec![i1, i2]);
        let (m1, m2, mu_u) = (mu_prime(&e1, 100).unwrap(), mu_prime(&e2, 100).unwrap(), mu_prime(&u, 100).unwrap());
        let lhs = &m1.symbolic.inf + &m2.symbolic.inf;
        prop_assert_eq!(lhs, mu_u.symbolic.inf.clone());
        for (pr, c) in &mu_u.symbolic.primes {
            let s = m1.symbolic.primes.get(pr).cloned().unwrap_or_default() + m2.symbolic.primes.get(pr).cloned().unwrap_or_default();
            prop_assert_eq!(&s, c);
        }
    }
}
