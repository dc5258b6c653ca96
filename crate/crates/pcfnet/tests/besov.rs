use pcfnet::besov::*;
use pcfnet::fractal::builtin;
use pcfnet::par::Exec;
use pcfnet::trace_maps::{eyebolt_fixed_weights, sickle_fixed_weights};
use pcfnet::{Error, HpFloat, Rational, Scalar};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn q(p: i64, r: i64) -> Rational {
    Rational::from((p, r))
}

fn eyebolt_tau() -> Vec<Rational> {
    let (d, b) = eyebolt_fixed_weights().unwrap();
    let mut t = vec![d; 9];
    t.extend(vec![b; 12]);
    t
}

#[test]
fn u1_energy_is_one_half() {
    let sys = builtin("eyebolt-vicsek").unwrap();
    let u1 = eyebolt_u1(&sys).unwrap();
    u1.check_consistent(&sys, 3).unwrap();
    let form = spoke_form(&[q(1, 1), q(1, 1), q(1, 1), q(1, 1)]).unwrap();
    assert_eq!(form, unit_form::<Rational>(4).into_iter().map(|(a, b, _)| (a, b, q(1, 4))).collect::<Vec<_>>());
    let tau = eyebolt_tau();
    for n in 0..=8 {
        assert_eq!(self_similar_energy(&sys, &tau, &form, &u1, n).unwrap(), q(1, 2), "n = {n}");
    }
    // Each diagonal cell carries ½·(1/9)², each branch cell nothing.
    let cells = u1.cell_boundaries(&sys, 1).unwrap();
    for (i, b) in cells.iter().enumerate() {
        let e = form_energy(&form, b);
        assert_eq!(e, if i < 9 { q(1, 162) } else { q(0, 1) });
    }
    let rr = reverse_recursive(&sys, 8).unwrap();
    for n in 0..=8 {
        let e = reverse_energy_with(&sys, &u1, n, &rr).unwrap();
        assert!((e.to_f64() - 0.5).abs() < 1e-25, "{n}");
    }
}

#[test]
fn sickle_witness_properties() {
    let sys = builtin("sickle").unwrap();
    let u = sickle_witness(&sys).unwrap();
    assert_eq!(u.boundary_values(&sys).unwrap(), vec![q(0, 1), q(1, 1), q(0, 1)]);
    u.check_consistent(&sys, 3).unwrap();
    let level1 = u.cell_boundaries(&sys, 1).unwrap();
    let osc = |b: &Vec<Rational>| {
        let hi = b.iter().max().unwrap().clone();
        let lo = b.iter().min().unwrap().clone();
        hi - lo
    };
    let moving: Vec<usize> = (0..17).filter(|&i| osc(&level1[i]) != 0).collect();
    assert_eq!(moving.len(), 8);
    assert!(moving.iter().all(|&i| i >= 6 && i != 7 && osc(&level1[i]) <= q(1, 8)));
    for i in [0, 1, 2, 3, 4, 5, 7] {
        assert!(level1[i].iter().all(|v| *v == 0));
    }
    // Descendants of the constant-zero cells stay zero.
    let level3 = u.cell_boundaries(&sys, 3).unwrap();
    for (c, b) in level3.iter().enumerate() {
        if [0, 1, 2, 3, 4, 5, 7].contains(&(c / 289)) {
            assert!(b.iter().all(|v| *v == 0));
        }
    }
    for n in 0..=10 {
        let e = primal_energy(&sys, &u, n).unwrap();
        let weighted = Rational::from(7u64.pow(n as u32)) * &e;
        assert_eq!(weighted, Rational::from(2) * Rational::from((7u64.pow(n as u32), 8u64.pow(n as u32))));
        if n <= 3 {
            assert_eq!(e, direct_energy(&sys, &u, n, &unit_form(3), None, Exec::default()).unwrap());
        }
    }
}

#[test]
fn rule_energy_matches_cell_enumeration() {
    for name in ["sierpinski-gasket", "eyebolt-vicsek", "sickle-k2", "pentagasket"] {
        let sys = builtin(name).unwrap();
        let m = sys.label_count();
        let b: Vec<Rational> = (0..m).map(|p| q((p * p) as i64 + 1, (p + 2) as i64)).collect();
        let u = PiecewiseFunction::harmonic(&sys, b).unwrap();
        u.check_consistent(&sys, 2).unwrap();
        let w: Vec<Rational> = (0..sys.map_count).map(|i| q(i as i64 + 2, 3)).collect();
        for n in 0..=3 {
            let fast = weighted_energy(&sys, &u, n, &unit_form(m), Some(&w)).unwrap();
            let table = PiecewiseFunction::from_table(&sys, n, u.values(&sys, n).unwrap()).unwrap();
            assert_eq!(fast, weighted_energy(&sys, &table, n, &unit_form(m), Some(&w)).unwrap(), "{name} {n}");
            assert_eq!(fast, direct_energy(&sys, &u, n, &unit_form(m), Some(&w), Exec::Sequential).unwrap());
        }
    }
}

#[test]
fn besov_seminorms() {
    let interval = builtin("interval").unwrap();
    let x = PiecewiseFunction::<Rational>::harmonic(&interval, vec![q(0, 1), q(1, 1)]).unwrap();
    let zero = PiecewiseFunction::<Rational>::harmonic(&interval, vec![q(0, 1), q(0, 1)]).unwrap();
    let b = besov_2inf(&interval, &x, 1.0, 20, 1).unwrap();
    assert_eq!((b.verdict, b.sup), (Finiteness::Finite, 1.0));
    assert_eq!(besov_2inf(&interval, &zero, 1.0, 10, 1).unwrap().sup, 0.0);
    assert_eq!(besov_22(&interval, &zero, 1.0, 10).unwrap().verdict, Finiteness::Finite);
    assert_eq!(besov_22(&interval, &x, 0.8, 30).unwrap().verdict, Finiteness::Finite);
    assert_eq!(besov_22(&interval, &x, 1.0, 30).unwrap().verdict, Finiteness::Infinite);
    assert_eq!(besov_2inf(&interval, &x, 1.1, 30, 1).unwrap().verdict, Finiteness::Infinite);
    assert!(matches!(besov_2inf(&interval, &x, 0.5, 5, 1), Err(Error::Domain(_))));

    let sys = builtin("sickle").unwrap();
    let sigma_star = 0.5 * (1.0 + 17f64.ln() / 7f64.ln());
    let w = sickle_witness(&sys).unwrap();
    for stride in [1, 2, 3] {
        let b = besov_2inf(&sys, &w, sigma_star, 24, stride).unwrap();
        assert_eq!(b.verdict, Finiteness::Finite, "stride {stride}");
        assert!((b.sup - 2.0).abs() < 1e-9);
    }
    // u(p1) ≠ u(p3) on a cell: the (2,2) sums diverge at σ*.
    let h = PiecewiseFunction::<Rational>::harmonic(&sys, vec![q(1, 1), q(0, 1), q(0, 1)]).unwrap();
    let b = besov_22(&sys, &h, sigma_star, 40).unwrap();
    assert_eq!(b.verdict, Finiteness::Infinite, "{:?}", b.tail_ratio);
    assert!(b.partial_sums.windows(2).all(|p| p[1] > p[0]));
    assert_eq!(besov_22(&sys, &w, sigma_star, 40).unwrap().verdict, Finiteness::Finite);
}

#[test]
fn weight_dimensions() {
    let (d, b) = eyebolt_fixed_weights().unwrap();
    let mut tau = vec![d.to_f64(); 9];
    tau.extend(vec![b.to_f64(); 12]);
    let s = weight_dimension(&tau).unwrap();
    let f: f64 = tau.iter().map(|t| t.powf(s)).sum();
    assert!((f - 1.0).abs() < 1e-12);
    let k2 = sickle_fixed_weights(&q(2, 1)).unwrap().per_map();
    let s = weight_dimension(&k2.iter().map(|t| t.to_f64()).collect::<Vec<_>>()).unwrap();
    assert!(s > 0.0 && s.is_finite());
}

#[test]
fn reverse_recursive_construction() {
    let sys = builtin("eyebolt-vicsek").unwrap();
    let rr = reverse_recursive(&sys, 20).unwrap();
    assert!(rr.run.residual < 1e-12);
    for y in &rr.run.steps {
        assert!(y.iter().all(|v| v.is_positive()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let b: Vec<Rational> = (0..4).map(|_| q(rng.gen_range(-50..50), rng.gen_range(1..20))).collect();
        let quarter: Rational = (0..4)
            .flat_map(|p| (p + 1..4).map(move |r| (p, r)))
            .map(|(p, r)| Rational::from(&b[p] - &b[r]).square() / 4)
            .fold(Rational::new(), |s, v| s + v);
        let u = PiecewiseFunction::harmonic(&sys, b).unwrap();
        let e: Vec<f64> = (0..=10).map(|n| reverse_energy_with(&sys, &u, n, &rr).unwrap().to_f64()).collect();
        assert!((e[0] - quarter.to_f64()).abs() < 1e-12 * quarter.to_f64().max(1.0));
        assert!(e.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-20)), "{e:?}");
    }
    let sickle = builtin("sickle").unwrap();
    let u = sickle_witness(&sickle).unwrap();
    assert!(matches!(reverse_recursive_energy(&sickle, &u, 3), Err(Error::InfeasibleInverse { .. })));
}

#[test]
fn self_similar_energies_are_monotone() {
    let sys = builtin("sickle").unwrap();
    let k = q(2, 1);
    let tau = sickle_fixed_weights(&k).unwrap().per_map();
    let form = sickle_form(&k);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..5 {
        let b: Vec<Rational> = (0..3).map(|_| q(rng.gen_range(-20..20), rng.gen_range(1..9))).collect();
        let u = PiecewiseFunction::harmonic(&sys, b).unwrap();
        let e: Vec<Rational> = (0..=6).map(|n| self_similar_energy(&sys, &tau, &form, &u, n).unwrap()).collect();
        assert!(e.windows(2).all(|w| w[1] >= w[0]));
    }
    let eye = builtin("eyebolt-vicsek").unwrap();
    let form = spoke_form(&[q(1, 1), q(1, 1), q(1, 1), q(1, 1)]).unwrap();
    let u = PiecewiseFunction::harmonic(&eye, vec![q(3, 1), q(-1, 2), q(0, 1), q(2, 3)]).unwrap();
    let e: Vec<Rational> = (0..=6).map(|n| self_similar_energy(&eye, &eyebolt_tau(), &form, &u, n).unwrap()).collect();
    assert!(e.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn u2_evidence() {
    let ev = u2_divergence_check(20, 1e3).unwrap();
    assert!(ev.exact);
    assert_eq!(ev.ratio[0], 1.0);
    assert!(ev.increasing_from.is_some_and(|n| n <= 3));
    assert!(ev.tracking.0 > 0.0 && ev.tracking.1 / ev.tracking.0 < 2.0, "{:?}", ev.tracking);
    // The bound grows roughly like n/4.5, far from 10³ at level 20.
    assert_eq!(ev.crossing, None);
    let long = u2_divergence_check(2000, 1e3).unwrap();
    assert!(!long.exact);
    assert!(long.lower_bound.windows(2).all(|w| w[1] > w[0]));
    assert!(long.tracking.0 >= 0.5 - 1e-9 && long.tracking.1 <= 0.75 + 1e-9);
}

#[test]
fn export_import_round_trip() {
    let sys = builtin("sickle").unwrap();
    let u = sickle_witness(&sys).unwrap();
    let text = export_function(&sys, &u, 2).unwrap();
    assert!(text.starts_with("# fractal sickle\n# level 2\n"));
    let back = import_function(&sys, &text).unwrap();
    assert_eq!(back.values(&sys, 2).unwrap(), u.values(&sys, 2).unwrap());
    assert_eq!(primal_energy(&sys, &back, 2).unwrap(), primal_energy(&sys, &u, 2).unwrap());
    assert!(import_function(&builtin("interval").unwrap(), &text).is_err());
    let missing: String = text.lines().take(5).map(|l| format!("{l}\n")).collect();
    assert!(import_function(&sys, &missing).is_err());
}

fn random_table(rng: &mut ChaCha8Rng, len: usize) -> Vec<Rational> {
    (0..len).map(|_| q(rng.gen_range(-40..80), 40)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn markov_cut_never_raises_energy(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = builtin("eyebolt-vicsek").unwrap();
        let n = 1;
        let len = pcfnet::fractal::LevelGraph::build(&sys, n).vertex_count();
        let u = PiecewiseFunction::from_table(&sys, n, random_table(&mut rng, len)).unwrap();
        let cut = u.markov_cut(&sys, n).unwrap();
        prop_assert!(primal_energy(&sys, &cut, n).unwrap() <= primal_energy(&sys, &u, n).unwrap());
        let form = spoke_form(&[q(1, 1), q(1, 1), q(1, 1), q(1, 1)]).unwrap();
        let tau = eyebolt_tau();
        prop_assert!(self_similar_energy(&sys, &tau, &form, &cut, n).unwrap() <= self_similar_energy(&sys, &tau, &form, &u, n).unwrap());
        let a = reverse_recursive_energy(&sys, &cut, n).unwrap();
        let b = reverse_recursive_energy(&sys, &u, n).unwrap();
        prop_assert!(a <= b + HpFloat::new(1e-25));

        let sickle = builtin("sickle").unwrap();
        let len = pcfnet::fractal::LevelGraph::build(&sickle, 2).vertex_count();
        let u = PiecewiseFunction::from_table(&sickle, 2, random_table(&mut rng, len)).unwrap();
        let cut = u.markov_cut(&sickle, 2).unwrap();
        let k = q(2, 1);
        let tau = sickle_fixed_weights(&k).unwrap().per_map();
        for lvl in 0..=2 {
            prop_assert!(primal_energy(&sickle, &cut, lvl).unwrap() <= primal_energy(&sickle, &u, lvl).unwrap());
            let f = sickle_form(&k);
            prop_assert!(self_similar_energy(&sickle, &tau, &f, &cut, lvl).unwrap() <= self_similar_energy(&sickle, &tau, &f, &u, lvl).unwrap());
        }
    }
}
