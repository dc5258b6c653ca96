use pcfnet::arith::rel_diff;
use pcfnet::fractal::builtin;
use pcfnet::par::Exec;
use pcfnet::trace_maps::*;
use pcfnet::{HpFloat, Rational, Scalar};
use proptest::prelude::*;

fn q(p: i64, r: i64) -> Rational {
    Rational::from((p, r))
}

fn oracle_exact(name: &str, map: &TraceMap, n: usize) {
    let sys = builtin(name).unwrap();
    let x = iterate::<Rational>(map, &map.unit_start(), n, IterGuard::default()).unwrap();
    let closed = delta_form(&x[n]).unwrap();
    let schur = level_resistances::<Rational>(&sys, n, Exec::default()).unwrap();
    assert_eq!(closed, schur, "{name} level {n}");
}

#[test]
fn eyebolt_matches_schur() {
    oracle_exact("eyebolt-vicsek", &TraceMap::Eyebolt, 1);
    oracle_exact("eyebolt-vicsek", &TraceMap::Eyebolt, 2);
    let m = TraceMap::Eyebolt;
    let x = iterate::<HpFloat>(&m, &m.unit_start(), 3, IterGuard::default()).unwrap();
    let closed = delta_form(&x[3]).unwrap();
    let sys = builtin("eyebolt-vicsek").unwrap();
    let schur = level_resistances::<HpFloat>(&sys, 3, Exec::default()).unwrap();
    for (k, v) in &closed {
        assert!(rel_diff(v, &schur[k]) < 1e-10);
    }
}

#[test]
fn sickle_family_matches_schur() {
    oracle_exact("sickle", &TraceMap::Sickle(SickleVariant::Sickle), 1);
    oracle_exact("sickle", &TraceMap::Sickle(SickleVariant::Sickle), 2);
    oracle_exact("sickle-k2", &TraceMap::Sickle(SickleVariant::K2), 2);
    oracle_exact("sickle-k3", &TraceMap::Sickle(SickleVariant::K3), 2);
    // The lattice realization of K1 gives the 4a+6b+5c map.
    oracle_exact("sickle-k1", &TraceMap::Sickle(SickleVariant::K1Lattice), 2);
}

#[test]
fn sickle_family_level3_float() {
    let cases = [
        ("sickle", SickleVariant::Sickle),
        ("sickle-k1", SickleVariant::K1Lattice),
        ("sickle-k2", SickleVariant::K2),
        ("sickle-k3", SickleVariant::K3),
    ];
    for (name, v) in cases {
        let m = TraceMap::Sickle(v);
        let x = iterate::<HpFloat>(&m, &m.unit_start(), 3, IterGuard::default()).unwrap();
        let closed = delta_form(&x[3]).unwrap();
        let schur = level_resistances::<HpFloat>(&builtin(name).unwrap(), 3, Exec::default()).unwrap();
        for (k, r) in &closed {
            assert!(rel_diff(r, &schur[k]) < 1e-10, "{name} {k:?}");
        }
    }
}

#[test]
fn published_k1_differs_from_lattice() {
    let sys = builtin("sickle-k1").unwrap();
    let m = TraceMap::Sickle(SickleVariant::K1);
    // Symmetric data agree after one step, so compare at level 2.
    let x = iterate::<Rational>(&m, &m.unit_start(), 2, IterGuard::default()).unwrap();
    let schur = level_resistances::<Rational>(&sys, 2, Exec::default()).unwrap();
    assert_ne!(delta_form(&x[2]).unwrap(), schur);
}

#[test]
fn eyebolt_first_coordinate_and_closed_recursion() {
    let seq = iterate::<Rational>(&TraceMap::Eyebolt, &vec![q(1, 1); 4], 12, IterGuard::default()).unwrap();
    let mut b = q(1, 1);
    for (n, x) in seq.iter().enumerate() {
        assert_eq!(x[0], Rational::from(9u64.pow(n as u32)));
        assert_eq!(x[1], b);
        let a = x[0].clone();
        b = Rational::from(9 * &b) - Rational::from(&b * &b) / (a + &b);
    }
}

#[test]
fn exact_guard_trips() {
    let e = iterate::<Rational>(&TraceMap::Eyebolt, &vec![q(1, 1); 4], 12, IterGuard { max_bits: 2000 });
    assert!(matches!(e, Err(pcfnet::Error::ExactOverflow { .. })));
}

#[test]
fn sickle_ratio_approaches_eleven() {
    let m = TraceMap::Sickle(SickleVariant::Sickle);
    let seq = iterate::<HpFloat>(&m, &vec![HpFloat::one(); 3], 30, IterGuard::default()).unwrap();
    let alpha: Vec<f64> = seq.iter().map(|x| (x[0].to_f64() / x[2].to_f64() - 11.0).abs()).collect();
    for n in 5..30 {
        assert!(alpha[n + 1] < alpha[n]);
    }
}

#[test]
fn k1_bounds() {
    let m = TraceMap::Sickle(SickleVariant::K1);
    let seq = iterate::<HpFloat>(&m, &vec![HpFloat::one(); 3], 30, IterGuard::default()).unwrap();
    for x in &seq {
        let (a, b, c) = (x[0].to_f64(), x[1].to_f64(), x[2].to_f64());
        assert!(a <= 34.0 * c && b <= 60.0 * a);
    }
}

#[test]
fn eyebolt_general_inverse() {
    let y0: Vec<HpFloat> = [1.0, 1.2, 1.1, 1.0].iter().map(|&v| HpFloat::new(v)).collect();
    let run = inverse_iterate(&TraceMap::Eyebolt, &y0, 1).unwrap();
    assert_eq!(run.methods, vec![InverseMethod::Newton]);
    assert!(run.residual < 1e-25);
    // a − c is preserved while a + c shrinks by 9 per step, so asymmetric
    // data leave the cone after two steps.
    let e = inverse_iterate(&TraceMap::Eyebolt, &y0, 4).unwrap_err();
    assert!(matches!(e, pcfnet::Error::InfeasibleInverse { step: 2, .. }), "{e:?}");
    let far: Vec<HpFloat> = [1.0, 2.0, 1.5, 0.5].iter().map(|&v| HpFloat::new(v)).collect();
    assert!(matches!(inverse_iterate(&TraceMap::Eyebolt, &far, 1), Err(pcfnet::Error::InfeasibleInverse { step: 1, .. })));
}

fn pos_rat() -> impl Strategy<Value = Rational> {
    (1i64..500, 1i64..500).prop_map(|(p, r)| q(p, r))
}

proptest! {
    #[test]
    fn homogeneous_and_monotone(
        x in prop::collection::vec(pos_rat(), 4),
        bump in prop::collection::vec(0i64..5, 4),
        lam in pos_rat(),
    ) {
        for m in [TraceMap::Eyebolt, TraceMap::Sickle(SickleVariant::Sickle), TraceMap::Sickle(SickleVariant::K1)] {
            let x = &x[..m.dim()];
            let fx = m.apply(x).unwrap();
            let scaled: Vec<Rational> = x.iter().map(|v| Rational::from(v * &lam)).collect();
            let fs = m.apply(&scaled).unwrap();
            for (a, b) in fx.iter().zip(&fs) {
                prop_assert_eq!(Rational::from(a * &lam), b.clone());
            }
            let y: Vec<Rational> = x.iter().zip(&bump).map(|(v, d)| Rational::from(v + *d)).collect();
            let fy = m.apply(&y).unwrap();
            prop_assert!(fx.iter().zip(&fy).all(|(a, b)| a <= b));
        }
    }

    #[test]
    fn unit_weights_reduce(x in prop::collection::vec(pos_rat(), 4)) {
        let w = TraceMap::WeightedEyebolt { diagonal: q(1, 1), branch: q(1, 1) };
        prop_assert_eq!(w.apply(&x).unwrap(), TraceMap::Eyebolt.apply(&x).unwrap());
        let w = TraceMap::WeightedSickle { left: q(1, 1), right: q(1, 1), top: q(1, 1) };
        let s = TraceMap::Sickle(SickleVariant::Sickle);
        prop_assert_eq!(w.apply(&x[..3]).unwrap(), s.apply(&x[..3]).unwrap());
    }

    #[test]
    fn eyebolt_symmetric_second_coordinate(a in pos_rat(), b in pos_rat()) {
        let y = TraceMap::Eyebolt.apply(&[a.clone(), b.clone(), a.clone(), b.clone()]).unwrap();
        let closed = (&b * (Rational::from(9 * &a) + Rational::from(8 * &b))) / Rational::from(&a + &b);
        prop_assert_eq!(&y[1], &closed);
        let alt = Rational::from(9 * &b) - Rational::from(&b * &b) / Rational::from(&a + &b);
        prop_assert_eq!(&y[1], &alt);
    }

    #[test]
    fn star_mesh_agrees_with_schur(x in prop::collection::vec(pos_rat(), 4)) {
        let d = delta_form(&x).unwrap();
        let t = pcfnet::transforms::star_network(&x).unwrap().trace_boundary().unwrap();
        for ((i, j), r) in t.branch_resistances() {
            prop_assert_eq!(&d[&(i, j)], &r.unwrap());
        }
    }
}

fn ordered_triple(c_factor: Rational) -> impl Strategy<Value = (Rational, Rational, Rational)> {
    (pos_rat(), 0i64..200, 1i64..50, 0i64..200, 1i64..50).prop_map(move |(c, p, q1, r, q2)| {
        let a = Rational::from(&c * &c_factor) + q(p, q1);
        let b = &a + q(r, q2) ;
        (a, b, c)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn sickle_ordering_preserved((a, b, c) in ordered_triple(q(1, 1))) {
        let y = TraceMap::Sickle(SickleVariant::Sickle).apply(&[a, b, c]).unwrap();
        prop_assert!((&y[2] * q(7, 2)) <= y[0] && y[0] <= y[1]);
    }

    #[test]
    fn sickle_ratio_contracts((a, b, c) in ordered_triple(q(7, 2))) {
        let y = TraceMap::Sickle(SickleVariant::Sickle).apply(&[a.clone(), b.clone(), c]).unwrap();
        let before = Rational::from(&b / &a);
        let after = Rational::from(&y[1] / &y[0]);
        prop_assert!(before <= (q(226, 231) * after));
    }
}
