use std::collections::BTreeMap;

use pcfnet::exponents::*;
use pcfnet::fractal::{builtin, CATALOG};
use pcfnet::quotient::BoundaryRelation;
use pcfnet::trace_maps::{iterate, IterGuard, TraceMap};
use pcfnet::{HpFloat, Scalar};
use proptest::prelude::*;

#[test]
fn catalog_exponents() {
    let e = critical_exponents(&builtin("eyebolt-vicsek").unwrap(), 25, DEFAULT_TOL).unwrap();
    let want = 0.5 * (1.0 + 21f64.ln() / 9f64.ln());
    assert!((e.sigma_star - want).abs() < 1e-9 && (e.sigma_sharp - want).abs() < 1e-9);
    let s = critical_exponents(&builtin("sickle").unwrap(), 25, DEFAULT_TOL).unwrap();
    assert!((s.sigma_star - 0.5 * (1.0 + 17f64.ln() / 7f64.ln())).abs() < 1e-9);
    assert!((s.sigma_sharp - (2.0 * 17f64.ln() - 2f64.ln()) / (2.0 * 7f64.ln())).abs() < 1e-9);
    assert!((s.sigma_star - 1.227992).abs() < 1e-6 && (s.sigma_sharp - 1.277880).abs() < 1e-6);
    let i = critical_exponents(&builtin("interval").unwrap(), 10, DEFAULT_TOL).unwrap();
    assert!((i.sigma_star - 1.0).abs() < 1e-12 && (i.sigma_sharp - 1.0).abs() < 1e-12);
    for name in CATALOG {
        let c = critical_exponents(&builtin(name).unwrap(), 12, DEFAULT_TOL).unwrap();
        assert!(c.sigma_star <= c.sigma_sharp + 1e-12, "{name}");
        if c.r_star > 1.0 {
            assert!(2.0 * c.sigma_star > c.alpha, "{name}");
        }
    }
}

#[test]
fn estimated_rates_near_closed_forms() {
    let e = critical_exponents(&builtin("eyebolt-vicsek").unwrap(), 25, DEFAULT_TOL).unwrap();
    for g in e.estimates.values() {
        let r = g.rate.expect("declared");
        assert!((r / 9.0 - 1.0).abs() < 0.02, "{r}");
    }
    let s = critical_exponents(&builtin("sickle").unwrap(), 25, DEFAULT_TOL).unwrap();
    assert!((s.estimates[&(0, 2)].rate.unwrap() / 7.0 - 1.0).abs() < 0.02);
    assert!((s.estimates[&(0, 1)].rate.unwrap() / 8.5 - 1.0).abs() < 0.02);
}

#[test]
fn sickle_b_rate() {
    let m = TraceMap::for_fractal("sickle").unwrap();
    let seq = iterate::<HpFloat>(&m, &m.unit_start(), 30, IterGuard::default()).unwrap();
    let b: Vec<HpFloat> = seq.iter().map(|x| x[1].clone()).collect();
    let g = growth_rate(&b, DEFAULT_TOL).unwrap();
    assert!((g.rate.unwrap() - 8.5).abs() < 1e-3);
    // b_n / (17/2)^n stays in a fixed bracket.
    let scaled: Vec<f64> = b.iter().enumerate().map(|(n, v)| (v.clone() / &HpFloat::from_ratio(17, 2).powi(n as i32)).to_f64()).collect();
    let (lo, hi) = scaled[5..].iter().fold((f64::MAX, 0.0f64), |a, &v| (a.0.min(v), a.1.max(v)));
    assert!(lo > 0.0 && hi / lo < 1.5, "{lo} {hi}");
}

#[test]
fn diagnostics_verdicts() {
    let opts = DensityOptions::default();
    let e = density_diagnostics(&builtin("eyebolt-vicsek").unwrap(), None, &opts).unwrap();
    assert_eq!(e.at_sigma_star, Density::NotDenseInC);
    assert!(e.checks[1].detail.starts_with("p2-p4"), "{}", e.checks[1].detail);
    let sys = builtin("sickle").unwrap();
    let rel = BoundaryRelation::parse(&sys, "p1~p3").unwrap();
    let s = density_diagnostics(&sys, Some(&rel), &opts).unwrap();
    for c in &s.checks {
        println!("{} {} {}", c.clause, c.fired, c.detail);
    }
    assert_eq!(s.at_sigma_star, Density::DenseInC);
    assert!(s.checks[2].fired);
    assert_eq!(s.sigma_sharp_formula_holds, Some(true));
    let i = density_diagnostics(&builtin("interval").unwrap(), None, &DensityOptions { n_max: 10, ..opts }).unwrap();
    assert!(i.checks[0].fired);
    assert_eq!(i.at_sigma_star, Density::DenseInC);
}

#[test]
fn eyebolt_quotient_decay() {
    let sys = builtin("eyebolt-vicsek").unwrap();
    let rel = BoundaryRelation::parse(&sys, "p2~p4").unwrap();
    let r = density_diagnostics(&sys, Some(&rel), &DensityOptions { n_max: 40, ..DensityOptions::default() }).unwrap();
    assert_eq!(r.sigma_sharp_formula_holds, Some(true));
    // Direct form of the same statement; the ratio peaks at n = 1.
    for n in 2..=40 {
        let v = 9f64.powf(0.9 * n as f64) * 4.0 / (1.0 + 9f64.powi(n));
        let w = 9f64.powf(0.9 * (n - 1) as f64) * 4.0 / (1.0 + 9f64.powi(n - 1));
        assert!(v < w);
    }
}

fn brute_bottleneck(m: usize, r: &BTreeMap<Pair, f64>) -> f64 {
    // max over pairs of min over simple paths of the max link.
    let w = |a: usize, b: usize| r[&(a.min(b), a.max(b))];
    let mut best = vec![vec![f64::INFINITY; m]; m];
    fn walk(path: &mut Vec<usize>, m: usize, cur: f64, w: &dyn Fn(usize, usize) -> f64, best: &mut Vec<Vec<f64>>) {
        let s = path[0];
        let t = *path.last().unwrap();
        if path.len() > 1 {
            best[s][t] = best[s][t].min(cur);
        }
        for n in 0..m {
            if !path.contains(&n) {
                path.push(n);
                walk(path, m, cur.max(w(t, n)), w, best);
                path.pop();
            }
        }
    }
    for s in 0..m {
        walk(&mut vec![s], m, f64::NEG_INFINITY, &w, &mut best);
    }
    let mut out = f64::NEG_INFINITY;
    for a in 0..m {
        for b in 0..m {
            if a != b {
                out = out.max(best[a][b]);
            }
        }
    }
    out
}

proptest! {
    #[test]
    fn mst_bottleneck_matches_brute_force(m in 2usize..=5, w in prop::collection::vec(1.0f64..20.0, 10)) {
        let mut r = BTreeMap::new();
        let mut k = 0;
        for i in 0..m {
            for j in i + 1..m {
                r.insert((i, j), w[k]);
                k += 1;
            }
        }
        prop_assert_eq!(r_sharp(m, &r).unwrap(), brute_bottleneck(m, &r));
        prop_assert!(r_star(&r).unwrap() <= r_sharp(m, &r).unwrap());
    }

    #[test]
    fn geometric_rate_exact(r in 1.5f64..20.0, c in 0.1f64..10.0) {
        let seq: Vec<HpFloat> = (0..12).map(|n| HpFloat::new(c) * &HpFloat::new(r).powi(n)).collect();
        let g = growth_rate(&seq, DEFAULT_TOL).unwrap();
        prop_assert!((g.rate.unwrap() - r).abs() < 1e-12 * r);
        prop_assert!(g.high - g.low < 1e-12 * r);
    }
}
