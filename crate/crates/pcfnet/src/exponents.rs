//! Growth rates of trace sequences, R* and R#, the critical exponents σ* and
//! σ#, and finite-horizon checks of the density criteria.

use std::collections::BTreeMap;

use rug::Rational;
use serde::Serialize;

use crate::arith::{HpFloat, Scalar};
use crate::error::{arg, Error, Result};
use crate::fractal::{Composite, FractalSystem, UnionFind};
use crate::quotient::{
    check_compatible, check_property_b, class_resistance, extract_gds, perron_dimension, quotient_trace_sequence,
    segment_energy_check, BoundaryRelation,
};
use crate::trace_maps::{brouwer_fixed_point, delta_form, iterate, DeltaResistances, IterGuard, TraceMap};

pub type Pair = (usize, usize);

pub fn pair_name(p: Pair) -> String {
    format!("p{}-p{}", p.0 + 1, p.1 + 1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum RateModel {
    /// Plain successive ratios.
    Ratio,
    /// Aitken Δ² on the ratios, for geometric convergence.
    Aitken,
    /// Richardson in 1/n, for ratios r + c/n + ….
    Richardson,
}

#[derive(Clone, Debug, Serialize)]
pub struct GrowthEstimate {
    /// Indices (k, n): ratios x_{j+1}/x_j for k ≤ j < n were used.
    pub window: (usize, usize),
    pub model: RateModel,
    /// Accelerated ratios over the window.
    pub extrapolated: Vec<f64>,
    pub low: f64,
    pub high: f64,
    pub rate: Option<f64>,
    pub closed_form: Option<String>,
}

pub const DEFAULT_TOL: f64 = 0.02;

fn aitken(r: &[f64]) -> Vec<f64> {
    r.windows(3)
        .map(|w| {
            let (d1, d2) = (w[1] - w[0], w[2] - w[1]);
            let q = d2 / d1;
            if d1 == 0.0 || !(q > 0.0 && q < 1.0) {
                w[2]
            } else {
                w[2] - d2 * q / (q - 1.0)
            }
        })
        .collect()
}

fn richardson(r: &[f64], first_index: usize) -> Vec<f64> {
    (1..r.len())
        .map(|j| {
            let n = (first_index + j + 1) as f64;
            n * r[j] - (n - 1.0) * r[j - 1]
        })
        .collect()
}

/// Successive ratios over the final half. Flat ratios are used as they are;
/// otherwise they carry a drift bias, and of the Aitken and 1/n-Richardson
/// accelerations the one with the narrower relative bracket is kept. A rate
/// is declared when that width is below `tol`.
pub fn growth_rate<S: Scalar>(seq: &[S], tol: f64) -> Result<GrowthEstimate> {
    if seq.len() < 4 {
        return arg("growth rate needs at least 4 terms");
    }
    if seq.iter().any(|v| !v.is_positive()) {
        return arg("growth rate needs a positive sequence");
    }
    let hp: Vec<HpFloat> = seq.iter().map(Scalar::to_hp).collect();
    let ratios: Vec<f64> = hp.windows(2).map(|w| (w[1].clone() / &w[0]).to_f64()).collect();
    let start = (ratios.len() / 2).min(ratios.len() - 3);
    let r = &ratios[start..];
    let bracket = |v: &[f64]| {
        let low = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let high = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (low, high, (high - low) / ((low + high) / 2.0))
    };
    let plain = bracket(r);
    let mut best: Option<(RateModel, Vec<f64>, (f64, f64, f64))> = None;
    if plain.2 <= 1e-9 {
        best = Some((RateModel::Ratio, r.to_vec(), plain));
    }
    for (model, v) in [(RateModel::Aitken, aitken(r)), (RateModel::Richardson, richardson(r, start))] {
        if best.as_ref().is_some_and(|b| b.0 == RateModel::Ratio) {
            break;
        }
        let b = bracket(&v);
        if b.2.is_finite() && best.as_ref().is_none_or(|x| b.2 < x.2 .2) {
            best = Some((model, v, b));
        }
    }
    let (model, extrapolated, (low, high, width)) = best.unwrap_or((RateModel::Ratio, r.to_vec(), plain));
    let rate = if width <= tol { extrapolated.last().copied() } else { None };
    Ok(GrowthEstimate { window: (start, ratios.len()), model, extrapolated, low, high, rate, closed_form: None })
}

/// Pairwise resistances R_n(p, q) for n = 0..=n. The closed-form map is used
/// when the fractal has one, repeated level-1 renormalization otherwise.
pub fn boundary_traces(sys: &FractalSystem, n: usize) -> Result<Vec<DeltaResistances<HpFloat>>> {
    if let Some(map) = TraceMap::for_fractal(&sys.name) {
        let seq = iterate::<HpFloat>(&map, &map.unit_start(), n, IterGuard::default())?;
        return seq.iter().map(|x| delta_form(x)).collect();
    }
    let start = sys.template_network::<HpFloat>();
    let nets = Composite::primal(sys).trace_sequence(start, n)?;
    Ok(nets
        .iter()
        .map(|t| t.branch_resistances().into_iter().filter_map(|(k, r)| r.map(|r| (k, r))).collect())
        .collect())
}

pub fn pair_sequences(traces: &[DeltaResistances<HpFloat>]) -> BTreeMap<Pair, Vec<HpFloat>> {
    let mut out: BTreeMap<Pair, Vec<HpFloat>> = BTreeMap::new();
    for t in traces {
        for (k, v) in t {
            out.entry(*k).or_default().push(v.clone());
        }
    }
    out
}

/// Declared rates, or `Indeterminate` naming the first pair without one.
pub fn declared_rates(est: &BTreeMap<Pair, GrowthEstimate>) -> Result<BTreeMap<Pair, f64>> {
    est.iter()
        .map(|(k, e)| match e.rate {
            Some(r) => Ok((*k, r)),
            None => Err(Error::Indeterminate(format!(
                "no rate for {}: bracket [{:.6}, {:.6}] over ratios {}..{}",
                pair_name(*k),
                e.low,
                e.high,
                e.window.0,
                e.window.1
            ))),
        })
        .collect()
}

pub fn r_star(rates: &BTreeMap<Pair, f64>) -> Result<f64> {
    rates.values().cloned().reduce(f64::min).ok_or_else(|| Error::Argument("no pair rates".into()))
}

/// Largest edge of a minimum spanning tree of the complete graph on V0
/// weighted by rates: the least s joining every pair by a chain of links ≤ s.
pub fn r_sharp(m: usize, rates: &BTreeMap<Pair, f64>) -> Result<f64> {
    if m < 2 {
        return arg("need at least two boundary points");
    }
    for i in 0..m {
        for j in i + 1..m {
            if !rates.contains_key(&(i, j)) {
                return Err(Error::Indeterminate(format!("no rate for {}", pair_name((i, j)))));
            }
        }
    }
    let mut edges: Vec<(f64, Pair)> = rates.iter().map(|(k, v)| (*v, *k)).collect();
    edges.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    let mut uf = UnionFind::new(m);
    let mut joined = 1;
    let mut worst = f64::NEG_INFINITY;
    for (w, (a, b)) in edges {
        if uf.union(a, b) {
            worst = worst.max(w);
            joined += 1;
            if joined == m {
                break;
            }
        }
    }
    Ok(worst)
}

/// ½(log R / (−log ρ) + α).
pub fn sigma(r: &HpFloat, rho: &HpFloat, alpha: &HpFloat) -> Result<HpFloat> {
    if *r < HpFloat::one() {
        return Err(Error::Domain(format!("rate {} is below 1", r.render())));
    }
    if !(rho.is_positive() && *rho < HpFloat::one()) {
        return Err(Error::Domain("contraction ratio must lie in (0, 1)".into()));
    }
    if !alpha.is_positive() {
        return Err(Error::Domain("dimension must be positive".into()));
    }
    let half = HpFloat::from_ratio(1, 2);
    Ok(half * &(r.ln() / &(-rho.ln()) + alpha))
}

/// Rates known in closed form for catalog fractals.
pub fn closed_form_rates(name: &str) -> Option<BTreeMap<Pair, Rational>> {
    let all = |m: usize, r: Rational| -> BTreeMap<Pair, Rational> {
        let mut out = BTreeMap::new();
        for i in 0..m {
            for j in i + 1..m {
                out.insert((i, j), r.clone());
            }
        }
        out
    };
    Some(match name {
        "interval" => all(2, Rational::from(2)),
        "sierpinski-gasket" => all(3, Rational::from((5, 3))),
        "eyebolt-vicsek" => all(4, Rational::from(9)),
        "sickle" => {
            let mut m = all(3, Rational::from((17, 2)));
            m.insert((0, 2), Rational::from(7));
            m
        }
        _ => return None,
    })
}

#[derive(Clone, Debug, Serialize)]
pub enum RateSource {
    ClosedForm,
    /// Eigen-factor of the fixed direction of the normalized trace map.
    FixedDirection,
    Estimated,
}

#[derive(Clone, Debug, Serialize)]
pub struct CriticalExponents {
    pub alpha: f64,
    pub rho: String,
    pub estimates: BTreeMap<Pair, GrowthEstimate>,
    pub rates: BTreeMap<Pair, f64>,
    pub source: RateSource,
    pub r_star: f64,
    pub r_sharp: f64,
    pub sigma_star: f64,
    pub sigma_sharp: f64,
    pub sigma_star_formula: String,
    pub sigma_sharp_formula: String,
}

fn log_ratio_formula(r: &str, rho: &str, n: usize) -> String {
    format!("1/2 (log({r}) / -log({rho}) + log({n}) / -log({rho}))")
}

/// Rates, R*, R#, σ*, σ# from traces up to level `n_max` (at least 3).
pub fn critical_exponents(sys: &FractalSystem, n_max: usize, tol: f64) -> Result<CriticalExponents> {
    if n_max < 3 {
        return arg("need traces to level 3 at least");
    }
    let traces = boundary_traces(sys, n_max)?;
    let mut estimates = BTreeMap::new();
    for (k, seq) in pair_sequences(&traces) {
        estimates.insert(k, growth_rate(&seq, tol)?);
    }
    let m = sys.label_count();
    let (rates, source, exact) = if let Some(cf) = closed_form_rates(&sys.name) {
        for (k, r) in &cf {
            if let Some(e) = estimates.get_mut(k) {
                e.closed_form = Some(r.render());
            }
        }
        let exact: BTreeMap<Pair, String> = cf.iter().map(|(k, r)| (*k, r.render())).collect();
        (cf.iter().map(|(k, r)| (*k, r.to_f64())).collect(), RateSource::ClosedForm, Some(exact))
    } else if let Some(map) = TraceMap::for_fractal(&sys.name).filter(|m| m.dim() == 3) {
        // Every pair of a map with an interior fixed direction grows like λⁿ.
        let fd = brouwer_fixed_point(&map, 1e-3)?;
        let lam = fd.lambda.to_f64();
        (estimates.keys().map(|k| (*k, lam)).collect(), RateSource::FixedDirection, None)
    } else {
        (declared_rates(&estimates)?, RateSource::Estimated, None)
    };
    let rs = r_star(&rates)?;
    let rh = r_sharp(m, &rates)?;
    let rho = sys.rho.to_hp();
    let alpha = HpFloat::from_i64(sys.map_count as i64).ln() / &(-rho.ln());
    let hp_rate = |v: f64, key: Option<String>| -> HpFloat {
        match key.and_then(|k| crate::arith::parse_rational(&k).ok()) {
            Some(q) => HpFloat::from_rational(&q),
            None => HpFloat::new(v),
        }
    };
    let pick = |target: f64| -> Option<String> {
        exact.as_ref().and_then(|e| e.iter().find(|(k, _)| rates[*k] == target).map(|(_, s)| s.clone()))
    };
    let (ks, kh) = (pick(rs), pick(rh));
    let ss = sigma(&hp_rate(rs, ks.clone()), &rho, &alpha)?;
    let sh = sigma(&hp_rate(rh, kh.clone()), &rho, &alpha)?;
    let rho_s = sys.rho.render();
    Ok(CriticalExponents {
        alpha: alpha.to_f64(),
        rho: rho_s.clone(),
        estimates,
        sigma_star_formula: log_ratio_formula(&ks.unwrap_or_else(|| format!("{rs:.12}")), &rho_s, sys.map_count),
        sigma_sharp_formula: log_ratio_formula(&kh.unwrap_or_else(|| format!("{rh:.12}")), &rho_s, sys.map_count),
        rates,
        source,
        r_star: rs,
        r_sharp: rh,
        sigma_star: ss.to_f64(),
        sigma_sharp: sh.to_f64(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Density {
    DenseInC,
    NotDenseInC,
    DenseInL2,
    Indeterminate,
}

impl Density {
    pub fn describe(self, exponent: &str) -> String {
        match self {
            Density::DenseInC => format!("B^{exponent} dense in C(K)"),
            Density::NotDenseInC => format!("B^{exponent} not dense in C(K)"),
            Density::DenseInL2 => format!("B^sigma dense in L2(K) for sigma < {exponent}"),
            Density::Indeterminate => "indeterminate".into(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ClauseCheck {
    pub clause: String,
    pub fired: bool,
    pub detail: String,
    /// Levels inspected.
    pub window: (usize, usize),
}

#[derive(Clone, Debug, Serialize)]
pub struct DensityReport {
    pub checks: Vec<ClauseCheck>,
    /// Density of B^{σ*} in C(K).
    pub at_sigma_star: Density,
    /// Density in L2 below σ#, when the class-dimension test fires.
    pub below_sigma_sharp: Density,
    /// Whether the σ# formula's quotient hypothesis held on the window.
    pub sigma_sharp_formula_holds: Option<bool>,
}

#[derive(Clone, Debug)]
pub struct DensityOptions {
    /// Levels for the pointwise and quotient checks.
    pub n_max: usize,
    /// Horizon for the divergence test, for fractals with a closed-form map.
    pub divergence_horizon: usize,
    pub divergence_threshold: f64,
    /// Levels for the boundary-class energy test.
    pub class_levels: usize,
    pub epsilon: f64,
}

impl Default for DensityOptions {
    fn default() -> Self {
        DensityOptions { n_max: 30, divergence_horizon: 20_000, divergence_threshold: 1e3, class_levels: 3, epsilon: 0.1 }
    }
}

/// First index ≥ `from` where `seq` is nondecreasing from there on and the
/// last value exceeds `threshold`; returns the crossing index.
fn diverges(seq: &[f64], threshold: f64) -> Option<usize> {
    let last = *seq.last()?;
    if last <= threshold {
        return None;
    }
    let half = seq.len() / 2;
    if !seq[half..].windows(2).all(|w| w[1] >= w[0]) {
        return None;
    }
    seq.iter().position(|&v| v > threshold)
}

/// Evaluates the density criteria on finite windows. Each check names the
/// condition, whether it held and the evidence.
pub fn density_diagnostics(
    sys: &FractalSystem,
    rel: Option<&BoundaryRelation>,
    opts: &DensityOptions,
) -> Result<DensityReport> {
    let ce = critical_exponents(sys, opts.n_max, DEFAULT_TOL)?;
    let traces = boundary_traces(sys, opts.n_max)?;
    let rs = HpFloat::new(ce.r_star);
    let rs = match closed_form_rates(&sys.name).and_then(|m| m.values().min().cloned()) {
        Some(q) => HpFloat::from_rational(&q),
        None => rs,
    };
    let mut checks = Vec::new();

    // (i) R*ⁿ ≤ R_n(p, q) for every pair.
    let mut worst: Option<(usize, Pair, f64)> = None;
    for (n, t) in traces.iter().enumerate() {
        let scale = rs.powi(n as i32);
        for (k, r) in t {
            let q = (scale.clone() / r).to_f64();
            if q > 1.0 + 1e-12 && worst.is_none_or(|w| q > w.2) {
                worst = Some((n, *k, q));
            }
        }
    }
    let clause_i = worst.is_none();
    checks.push(ClauseCheck {
        clause: "R*^n <= R_n(p,q) for all pairs".into(),
        fired: clause_i,
        detail: match worst {
            None => format!("holds for n <= {}", opts.n_max),
            Some((n, k, q)) => format!("fails: R*^n / R_n({}) = {q:.6} at n = {n}", pair_name(k)),
        },
        window: (0, opts.n_max),
    });

    // (ii) R*ⁿ / R_n(p, q) diverges for some pair.
    let horizon = if TraceMap::for_fractal(&sys.name).is_some() { opts.divergence_horizon } else { opts.n_max };
    let long = if horizon > opts.n_max { boundary_traces(sys, horizon)? } else { traces.clone() };
    let mut fired_ii = None;
    for k in long[0].keys() {
        let ratio: Vec<f64> = long
            .iter()
            .enumerate()
            .map(|(n, t)| (rs.powi(n as i32) / &t[k]).to_f64())
            .collect();
        if let Some(at) = diverges(&ratio, opts.divergence_threshold) {
            fired_ii = Some((*k, at, *ratio.last().expect("nonempty")));
            break;
        }
    }
    checks.push(ClauseCheck {
        clause: "R*^n / R_n(p,q) -> infinity for some pair".into(),
        fired: fired_ii.is_some(),
        detail: match fired_ii {
            Some((k, at, last)) => format!(
                "{}: ratio monotone on the second half, exceeds {} at n = {at}, reaches {last:.3} at n = {horizon}",
                pair_name(k),
                opts.divergence_threshold
            ),
            None => format!("no pair ratio exceeds {} monotonically by n = {horizon}", opts.divergence_threshold),
        },
        window: (0, horizon),
    });

    let mut at_sigma_star = if clause_i {
        Density::DenseInC
    } else if fired_ii.is_some() {
        Density::NotDenseInC
    } else {
        Density::Indeterminate
    };
    let mut below_sigma_sharp = Density::Indeterminate;
    let mut sigma_sharp_formula_holds = None;

    if let Some(rel) = rel {
        let name = rel.render(sys);
        let compatible = check_compatible(sys, rel, 2).iter().all(|v| v.compatible);
        let prop_b = check_property_b(sys, rel);
        let qseq = quotient_trace_sequence::<HpFloat>(sys, rel, opts.n_max)?;
        let s = rel.class_count();
        let mut quotient_ok = true;
        let mut rates_txt = Vec::new();
        let mut decay_ok = true;
        let eps = opts.epsilon;
        let rh = HpFloat::new(ce.r_sharp);
        for a in 0..s {
            for b in a + 1..s {
                let seq: Option<Vec<HpFloat>> = qseq.iter().map(|t| class_resistance(t, a, b)).collect();
                let Some(seq) = seq else {
                    quotient_ok = false;
                    rates_txt.push(format!("J{}-J{}: no direct branch", a + 1, b + 1));
                    continue;
                };
                let g = growth_rate(&seq, DEFAULT_TOL)?;
                match g.rate {
                    Some(r) if r > ce.r_star * (1.0 + DEFAULT_TOL) => {}
                    _ => quotient_ok = false,
                }
                rates_txt.push(format!(
                    "R~(J{},J{}) rate {}",
                    a + 1,
                    b + 1,
                    g.rate.map_or_else(|| format!("[{:.4}, {:.4}]", g.low, g.high), |r| format!("{r:.6}"))
                ));
                let decay: Vec<f64> = seq
                    .iter()
                    .enumerate()
                    .map(|(n, v)| (rh.powf(&HpFloat::new((1.0 - eps) * n as f64)) / v).to_f64())
                    .collect();
                let tail = &decay[decay.len() / 2..];
                let mono = tail.windows(2).all(|w| w[1] <= w[0]);
                let peak = decay.iter().cloned().fold(0.0, f64::max);
                if !(mono && *decay.last().expect("nonempty") < 1e-2 * peak) {
                    decay_ok = false;
                }
            }
        }
        // Boundary-class energies along segment classes, with R* renormalization.
        let mut class_ok = true;
        let mut class_txt = Vec::new();
        for (j, cls) in rel.classes.iter().enumerate() {
            if cls.len() < 2 {
                continue;
            }
            match segment_energy_check(sys, rel, j, ce.r_star, opts.class_levels, &|t| t) {
                Ok(rep) => {
                    class_ok &= rep.bounded;
                    class_txt.push(format!(
                        "J{} linear extension: R*^n E_J,n = {:?} ({})",
                        j + 1,
                        rep.weighted.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>(),
                        if rep.bounded { "bounded" } else { "growing" }
                    ));
                }
                Err(e) => {
                    class_ok = false;
                    class_txt.push(format!("J{}: {e}", j + 1));
                }
            }
        }
        let fired = compatible && prop_b && quotient_ok && class_ok;
        checks.push(ClauseCheck {
            clause: format!("quotient criterion with {name}"),
            fired,
            detail: format!(
                "compatible: {compatible}; property B: {prop_b}; {}; {}; R* = {:.6}",
                class_txt.join("; "),
                rates_txt.join(", "),
                ce.r_star
            ),
            window: (0, opts.n_max),
        });
        if fired && at_sigma_star == Density::Indeterminate {
            at_sigma_star = Density::DenseInC;
        }
        checks.push(ClauseCheck {
            clause: format!("(R#)^((1-eps)n) / R~_n -> 0 with {name}, eps = {eps}"),
            fired: decay_ok,
            detail: format!("R# = {:.6}; monotone tail, last value below 1% of the peak by n = {}", ce.r_sharp, opts.n_max),
            window: (0, opts.n_max),
        });
        sigma_sharp_formula_holds = Some(decay_ok);
        match extract_gds(sys, rel) {
            Ok(gds) => {
                let dims = perron_dimension(&gds);
                let max_dim = dims.iter().map(|d| d.dim).fold(0.0, f64::max);
                let fired = max_dim < ce.alpha;
                checks.push(ClauseCheck {
                    clause: "max boundary-class dimension < dim K".into(),
                    fired,
                    detail: format!(
                        "class dimensions {:?} against alpha = {:.6}",
                        dims.iter().map(|d| format!("{:.6}", d.dim)).collect::<Vec<_>>(),
                        ce.alpha
                    ),
                    window: (1, 2),
                });
                if fired && decay_ok {
                    below_sigma_sharp = Density::DenseInL2;
                }
            }
            Err(e) => checks.push(ClauseCheck {
                clause: "max boundary-class dimension < dim K".into(),
                fired: false,
                detail: e.to_string(),
                window: (1, 2),
            }),
        }
    }
    Ok(DensityReport { checks, at_sigma_star, below_sigma_sharp, sigma_sharp_formula_holds })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_sequence_has_zero_width() {
        let seq: Vec<Rational> = (0..10).map(|n| Rational::from(9u64.pow(n))).collect();
        let g = growth_rate(&seq, DEFAULT_TOL).unwrap();
        assert_eq!((g.low, g.high, g.rate, g.model), (9.0, 9.0, Some(9.0), RateModel::Ratio));
        assert!(growth_rate(&seq[..3], DEFAULT_TOL).is_err());
    }

    #[test]
    fn bottleneck_examples() {
        let mut r = BTreeMap::new();
        r.insert((0, 1), 8.5);
        r.insert((1, 2), 8.5);
        r.insert((0, 2), 7.0);
        assert_eq!(r_star(&r).unwrap(), 7.0);
        assert_eq!(r_sharp(3, &r).unwrap(), 8.5);
        let one: BTreeMap<Pair, f64> = [((0, 1), 2.0)].into_iter().collect();
        assert_eq!((r_star(&one).unwrap(), r_sharp(2, &one).unwrap()), (2.0, 2.0));
    }

    #[test]
    fn sigma_domain() {
        let (r, rho, a) = (HpFloat::from_i64(2), HpFloat::from_ratio(1, 2), HpFloat::one());
        assert!((sigma(&r, &rho, &a).unwrap().to_f64() - 1.0).abs() < 1e-15);
        assert!(sigma(&HpFloat::from_ratio(1, 2), &rho, &a).is_err());
        assert!(sigma(&r, &HpFloat::from_i64(2), &a).is_err());
    }
}
