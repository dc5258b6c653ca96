use std::fs;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use pcfnet::arith::{parse_rational, rel_diff};
use pcfnet::besov::*;
use pcfnet::exponents::{critical_exponents, density_diagnostics, pair_name, DensityOptions, RateSource};
use pcfnet::fractal::{builtin, load_fractal_spec, FractalSystem, LevelGraph};
use pcfnet::par::Exec;
use pcfnet::quotient::{class_resistance, quotient_trace_direct, quotient_trace_sequence, BoundaryRelation};
use pcfnet::trace_maps::*;
use pcfnet::{Error, HpFloat, Rational, Result, Scalar};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::report::{RunReport, Table};
use crate::{Global, Mode};

fn load(g: &Global, name: Option<&str>) -> Result<FractalSystem> {
    match (&g.config, name) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let sys = load_fractal_spec(&text)?;
            match name {
                Some(n) if n != sys.name => Err(Error::Config(format!("{} describes `{}`, not `{n}`", path.display(), sys.name))),
                _ => Ok(sys),
            }
        }
        (None, Some(n)) => builtin(n),
        (None, None) => Err(Error::Argument("name a fractal or pass --config".into())),
    }
}

fn exec(g: &Global) -> Exec {
    match g.jobs {
        Some(1) => Exec::Sequential,
        _ => Exec::default(),
    }
}

fn base_report(sys: &FractalSystem, mode: &str) -> RunReport {
    RunReport { fractal: sys.name.clone(), mode: mode.into(), ..Default::default() }
}

fn mode_name(m: Mode) -> &'static str {
    match m {
        Mode::Exact => "exact",
        Mode::Float => "float",
    }
}

/// Runs `exact`, or `float` when the mode asks for it or exact growth trips
/// the size guard.
fn with_fallback(
    g: &Global,
    report: &mut RunReport,
    exact: impl FnOnce(&mut RunReport) -> Result<()>,
    float: impl FnOnce(&mut RunReport) -> Result<()>,
) -> Result<()> {
    if g.mode() == Mode::Float {
        return float(report);
    }
    let saved = report.clone();
    match exact(report) {
        Err(e @ Error::ExactOverflow { .. }) => {
            eprintln!("pcfnet: {e}; continuing in float mode");
            *report = saved;
            report.mode = "float".into();
            report.notes.push(format!("exact run stopped: {e}; values below are 128-bit floats"));
            float(report)
        }
        r => r,
    }
}

fn agree<S: Scalar>(vals: &[&S]) -> String {
    if vals.len() < 2 {
        return "-".into();
    }
    let ok = vals.windows(2).all(|w| if S::EXACT { w[0] == w[1] } else { rel_diff(w[0], w[1]) < 1e-10 });
    if ok { "yes" } else { "NO" }.into()
}

fn cell<S: Scalar>(v: &Option<S>) -> String {
    v.as_ref().map_or_else(|| "-".into(), Scalar::render)
}

fn rpow(b: Rational, n: usize) -> Rational {
    (0..n).fold(Rational::from(1), |acc, _| acc * &b)
}

// ---------------------------------------------------------------- trace

#[derive(Args)]
pub struct TraceArgs {
    fractal: Option<String>,
    #[arg(long, default_value_t = 3)]
    level: usize,
    /// Boundary relation, e.g. `p1~p3`, for quotient resistances.
    #[arg(long)]
    quotient: Option<String>,
    /// Largest level-n cell count for which the full Schur trace is taken.
    #[arg(long, default_value_t = 2000)]
    schur_cells: usize,
    /// Size guard for exact iterates, in bits.
    #[arg(long, default_value_t = 1 << 25)]
    max_bits: u64,
}

/// Trace map realizing the catalog network. The lattice form is the one for
/// the K1 network.
fn network_map(name: &str) -> Option<TraceMap> {
    match name {
        "sickle-k1" => Some(TraceMap::Sickle(SickleVariant::K1Lattice)),
        n => TraceMap::for_fractal(n),
    }
}

fn resistance_closed_form(name: &str, n: usize) -> Option<Rational> {
    let base = match name {
        "interval" => Rational::from(2),
        "sierpinski-gasket" => Rational::from((5, 3)),
        "vicsek" => Rational::from(3),
        _ => return None,
    };
    Some(rpow(base, n))
}

fn quotient_closed_form(name: &str, rel: &BoundaryRelation, n: usize, a: usize, b: usize) -> Option<Rational> {
    match name {
        "eyebolt-vicsek" if rel.classes == [vec![0], vec![1, 3], vec![2]] => match (a, b) {
            (0, 2) => Some(Rational::from((1, 2)) * (rpow(Rational::from(9), n) + rpow(Rational::from(81), n))),
            (0, 1) | (1, 2) => Some(Rational::from((1, 4)) * (rpow(Rational::from(9), n) + 1)),
            _ => None,
        },
        "sickle" if rel.classes == [vec![0, 2], vec![1]] => Some(Rational::from((1, 2)) * rpow(Rational::from((17, 2)), n)),
        _ => None,
    }
}

fn class_name(sys: &FractalSystem, c: &[usize]) -> String {
    c.iter().map(|&p| sys.labels[p].as_str()).collect::<Vec<_>>().join("~")
}

fn trace_tables<S: Scalar>(sys: &FractalSystem, a: &TraceArgs, ex: Exec, rep: &mut RunReport) -> Result<()> {
    let m = sys.label_count();
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect();
    let map = network_map(&sys.name);
    let orbit = match &map {
        Some(mp) => Some(iterate::<S>(mp, &mp.unit_start(), a.level, IterGuard { max_bits: a.max_bits })?),
        None => None,
    };
    let schur_ok = |n: usize| sys.map_count.checked_pow(n as u32).is_some_and(|c| c <= a.schur_cells);
    let mut t = Table::new("resistances", &["n", "pair", "R_n", "schur", "trace map", "closed form", "agree"]);
    for n in 0..=a.level {
        let schur = if schur_ok(n) { Some(level_resistances::<S>(sys, n, ex)?) } else { None };
        let via_map = orbit.as_ref().map(|o| delta_form(&o[n])).transpose()?;
        let closed = resistance_closed_form(&sys.name, n).map(|q| S::from_rational(&q));
        if schur.is_none() && via_map.is_none() && closed.is_none() {
            rep.notes.push(format!(
                "stopped at level {}: {} cells exceed --schur-cells and no closed form is known",
                n,
                sys.map_count.saturating_pow(n as u32)
            ));
            break;
        }
        for &(i, j) in &pairs {
            let s = schur.as_ref().and_then(|r| r.get(&(i, j)).cloned());
            let mv = via_map.as_ref().and_then(|r| r.get(&(i, j)).cloned());
            let c = closed.clone();
            let present: Vec<&S> = [&s, &mv, &c].into_iter().flatten().collect();
            let value = present.first().map_or_else(|| "-".into(), |v| v.render());
            t.push(vec![
                n.to_string(),
                format!("{}-{}", sys.labels[i], sys.labels[j]),
                value,
                cell(&s),
                cell(&mv),
                cell(&c),
                agree(&present),
            ]);
        }
    }
    rep.tables.push(t);

    if let Some(text) = &a.quotient {
        let rel = BoundaryRelation::parse(sys, text)?;
        let seq = quotient_trace_sequence::<S>(sys, &rel, a.level)?;
        let mut q = Table::new("quotient resistances", &["n", "classes", "R~_n", "direct", "closed form", "agree"]);
        let s = rel.class_count();
        for (n, tr) in seq.iter().enumerate() {
            let direct = if schur_ok(n) { Some(quotient_trace_direct::<S>(sys, &rel, n)?) } else { None };
            for x in 0..s {
                for y in x + 1..s {
                    let r = class_resistance(tr, x, y);
                    let d = direct.as_ref().and_then(|t| class_resistance(t, x, y));
                    let c = quotient_closed_form(&sys.name, &rel, n, x, y).map(|v| S::from_rational(&v));
                    let present: Vec<&S> = [&r, &d, &c].into_iter().flatten().collect();
                    q.push(vec![
                        n.to_string(),
                        format!("{}|{}", class_name(sys, &rel.classes[x]), class_name(sys, &rel.classes[y])),
                        cell(&r),
                        cell(&d),
                        cell(&c),
                        agree(&present),
                    ]);
                }
            }
        }
        rep.relation = Some(rel.render(sys));
        rep.tables.push(q);
    }
    let bad = rep.tables.iter().flat_map(|t| t.rows.iter()).filter(|r| r.last().is_some_and(|v| v == "NO")).count();
    rep.evidence("cross-check disagreements", bad);
    if bad > 0 {
        return Err(Error::Constraint(format!("{bad} rows disagree with their cross-check")));
    }
    Ok(())
}

pub fn trace(g: &Global, a: &TraceArgs) -> Result<RunReport> {
    let sys = load(g, a.fractal.as_deref())?;
    let mut rep = base_report(&sys, mode_name(g.mode()));
    rep.param("level", a.level);
    rep.param("schur_cells", a.schur_cells);
    if let Some(q) = &a.quotient {
        rep.param("quotient", q);
    }
    let ex = exec(g);
    with_fallback(
        g,
        &mut rep,
        |r| trace_tables::<Rational>(&sys, a, ex, r),
        |r| trace_tables::<HpFloat>(&sys, a, ex, r),
    )?;
    Ok(rep)
}

// ------------------------------------------------------------ exponents

#[derive(Args)]
pub struct ExponentsArgs {
    fractal: Option<String>,
    /// Trace levels for rate estimation and the finite-window checks.
    #[arg(long, default_value_t = 25)]
    nmax: usize,
    /// Boundary relation for the quotient checks; defaults to the fractal's
    /// first listed relation, `none` skips them.
    #[arg(long)]
    relation: Option<String>,
    /// Largest relative bracket width for which a rate is declared.
    #[arg(long, default_value_t = pcfnet::exponents::DEFAULT_TOL)]
    tol: f64,
    /// Horizon for the divergence check when a closed-form map exists.
    #[arg(long, default_value_t = 20_000)]
    horizon: usize,
    #[arg(long, default_value_t = 1e3)]
    threshold: f64,
    #[arg(long, default_value_t = 3)]
    class_levels: usize,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
}

pub fn exponents(g: &Global, a: &ExponentsArgs) -> Result<RunReport> {
    let sys = load(g, a.fractal.as_deref())?;
    // Rates and exponents are transcendental, so this command is float-only.
    let mut rep = base_report(&sys, "float");
    if g.mode() == Mode::Exact {
        rep.notes.push("exponents are computed with 128-bit floats in either mode".into());
    }
    for (k, v) in [
        ("nmax", a.nmax.to_string()),
        ("tol", a.tol.to_string()),
        ("horizon", a.horizon.to_string()),
        ("threshold", a.threshold.to_string()),
        ("class_levels", a.class_levels.to_string()),
        ("epsilon", a.epsilon.to_string()),
    ] {
        rep.param(k, v);
    }
    let rel = match a.relation.as_deref() {
        Some("none") => None,
        Some(t) => Some(BoundaryRelation::parse(&sys, t)?),
        None => sys.relations.values().next().map(|t| BoundaryRelation::parse(&sys, t)).transpose()?,
    };
    rep.relation = rel.as_ref().map(|r| r.render(&sys));

    let ce = critical_exponents(&sys, a.nmax, a.tol)?;
    let mut rates = Table::new("rates", &["pair", "window", "model", "low", "high", "estimate", "closed form", "used"]);
    for (k, e) in &ce.estimates {
        rates.push(vec![
            pair_name(*k),
            format!("{}..{}", e.window.0, e.window.1),
            format!("{:?}", e.model),
            format!("{:.9}", e.low),
            format!("{:.9}", e.high),
            e.rate.map_or_else(|| "indeterminate".into(), |r| format!("{r:.9}")),
            e.closed_form.clone().unwrap_or_else(|| "-".into()),
            ce.rates.get(k).map_or_else(|| "-".into(), |r| format!("{r:.12}")),
        ]);
    }
    let mut summary = Table::new("exponents", &["quantity", "value"]);
    let source = match ce.source {
        RateSource::ClosedForm => "closed form",
        RateSource::FixedDirection => "fixed direction of the trace map",
        RateSource::Estimated => "estimated",
    };
    for (k, v) in [
        ("alpha", format!("{:.12}", ce.alpha)),
        ("rho", ce.rho.clone()),
        ("rate source", source.to_string()),
        ("R*", format!("{:.12}", ce.r_star)),
        ("R#", format!("{:.12}", ce.r_sharp)),
        ("sigma*", format!("{:.12}", ce.sigma_star)),
        ("sigma#", format!("{:.12}", ce.sigma_sharp)),
        ("sigma* formula", ce.sigma_star_formula.clone()),
        ("sigma# formula", ce.sigma_sharp_formula.clone()),
    ] {
        summary.push(vec![k.into(), v]);
    }

    let opts = DensityOptions {
        n_max: a.nmax,
        divergence_horizon: a.horizon,
        divergence_threshold: a.threshold,
        class_levels: a.class_levels,
        epsilon: a.epsilon,
    };
    let d = density_diagnostics(&sys, rel.as_ref(), &opts)?;
    let mut checks = Table::new("density checks", &["clause", "fired", "window", "detail"]);
    for c in &d.checks {
        checks.push(vec![
            c.clause.clone(),
            if c.fired { "yes" } else { "no" }.into(),
            format!("{}..{}", c.window.0, c.window.1),
            c.detail.clone(),
        ]);
    }
    let fired: Vec<&str> = d.checks.iter().filter(|c| c.fired).map(|c| c.clause.as_str()).collect();
    rep.tables.extend([summary, rates, checks]);
    rep.evidence("verdict at sigma*", d.at_sigma_star.describe("sigma*"));
    rep.evidence("verdict below sigma#", d.below_sigma_sharp.describe("sigma#"));
    rep.evidence(
        "sigma# formula hypothesis",
        d.sigma_sharp_formula_holds.map_or("not checked (no relation)".to_string(), |h| h.to_string()),
    );
    rep.evidence("triggering clauses", if fired.is_empty() { "none".into() } else { fired.join("; ") });
    Ok(rep)
}

// ------------------------------------------------------------ dirichlet

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DirichletMode {
    SelfSimilar,
    Reverse,
}

#[derive(Args)]
pub struct DirichletArgs {
    fractal: Option<String>,
    #[arg(long, value_enum, default_value = "self-similar")]
    mode: DirichletMode,
    /// Fixed ray (k, k, 1) for the weighted sickle map.
    #[arg(short = 'k', default_value = "2")]
    k: String,
    /// Levels of the reverse-recursive construction.
    #[arg(long, default_value_t = 10)]
    level: usize,
    /// Boundary data for the reverse-recursive energy table; the default is
    /// the indicator of the first boundary point.
    #[arg(long, value_delimiter = ',')]
    boundary: Option<Vec<String>>,
    /// Random starts for the attraction evidence when the inverse fails.
    #[arg(long, default_value_t = 100)]
    starts: usize,
    /// Forward levels for the attraction evidence.
    #[arg(long, default_value_t = 40)]
    orbit_level: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn render_vec<S: Scalar>(x: &[S]) -> String {
    format!("({})", x.iter().map(Scalar::render).collect::<Vec<_>>().join(", "))
}

fn residual_of(map: &TraceMap, x: &[Rational]) -> Result<Rational> {
    let y = map.apply(x)?;
    Ok(y.iter().zip(x).map(|(a, b)| Rational::from(a - b).abs()).fold(Rational::new(), |m, v| if v > m { v } else { m }))
}

fn flag(eq: bool) -> String {
    if eq { "match" } else { "MISMATCH" }.into()
}

pub fn dirichlet(g: &Global, a: &DirichletArgs) -> Result<RunReport> {
    let sys = load(g, a.fractal.as_deref())?;
    match a.mode {
        DirichletMode::SelfSimilar => self_similar(&sys, a),
        DirichletMode::Reverse => reverse(&sys, a, g),
    }
}

fn self_similar(sys: &FractalSystem, a: &DirichletArgs) -> Result<RunReport> {
    let mut rep = base_report(sys, "exact");
    rep.param("mode", "self-similar");
    let mut t = Table::new("weights", &["weight", "derived", "quoted", "flag"]);
    let (map, per_map, point) = match sys.name.as_str() {
        "eyebolt-vicsek" => {
            let (d, b) = eyebolt_fixed_weights()?;
            let quoted = [Rational::from((1, 9)), Rational::from((16, 135))];
            for (name, v, q) in [("tau' (diagonal)", &d, &quoted[0]), ("tau'' (branch)", &b, &quoted[1])] {
                t.push(vec![name.into(), v.render(), q.render(), flag(v == q)]);
            }
            let mut per = vec![d.clone(); 9];
            per.extend(vec![b.clone(); 12]);
            (TraceMap::WeightedEyebolt { diagonal: d, branch: b }, per, vec![Rational::from(1); 4])
        }
        "sickle" => {
            let k = parse_rational(&a.k)?;
            rep.param("k", k.render());
            let w = sickle_fixed_weights(&k)?;
            let q = quoted_sickle_weights(&k);
            for (name, v, qv) in [("tau_L", &w.left, &q.left), ("tau_T", &w.top, &q.top), ("tau_R", &w.right, &q.right)] {
                t.push(vec![name.into(), v.render(), qv.render(), flag(v == qv)]);
            }
            let mismatched: Vec<&str> =
                [("tau_L", w.left == q.left), ("tau_T", w.top == q.top), ("tau_R", w.right == q.right)]
                    .iter()
                    .filter(|p| !p.1)
                    .map(|p| p.0)
                    .collect();
            rep.evidence("quoted weights that differ from the solve", if mismatched.is_empty() { "none".into() } else { mismatched.join(", ") });
            if w.right != q.right {
                let ratio = Rational::from(&w.right / &q.right);
                rep.evidence("derived tau_R / quoted tau_R", ratio.render());
            }
            (w.map(), w.per_map(), vec![k.clone(), k, Rational::from(1)])
        }
        other => return Err(Error::Argument(format!("no weighted trace map for {other}; use eyebolt-vicsek or sickle"))),
    };
    rep.tables.push(t);
    let res = residual_of(&map, &point)?;
    rep.evidence("fixed point", render_vec(&point));
    rep.evidence("max |Phi_tau(x) - x|", res.render());
    let tau: Vec<f64> = per_map.iter().map(Scalar::to_f64).collect();
    rep.evidence("weight dimension (sum tau_i^d = 1)", format!("{:.12}", weight_dimension(&tau)?));
    Ok(rep)
}

fn reverse(sys: &FractalSystem, a: &DirichletArgs, g: &Global) -> Result<RunReport> {
    let mut rep = base_report(sys, "float");
    if g.mode() == Mode::Exact {
        rep.notes.push("inverse iterates solve quadratics and are computed with 128-bit floats".into());
    }
    rep.param("mode", "reverse");
    rep.param("level", a.level);
    let map = TraceMap::for_fractal(&sys.name)
        .ok_or_else(|| Error::Argument(format!("{} has no closed-form trace map", sys.name)))?;
    match reverse_recursive(sys, a.level) {
        Ok(rr) => {
            let mut it = Table::new("inverse iterates", &["n", "y_n", "method"]);
            for (n, y) in rr.run.steps.iter().enumerate() {
                let how = if n == 0 { "-".into() } else { format!("{:?}", rr.run.methods[n - 1]) };
                it.push(vec![n.to_string(), render_vec(y), how]);
            }
            let mut cond = Table::new("conductances", &["n", "pair", "conductance"]);
            for (n, f) in rr.forms.iter().enumerate() {
                for (i, j, c) in f {
                    cond.push(vec![n.to_string(), format!("{}-{}", sys.labels[*i], sys.labels[*j]), c.render()]);
                }
            }
            let m = sys.label_count();
            let b: Vec<Rational> = match &a.boundary {
                Some(v) => v.iter().map(|s| parse_rational(s)).collect::<Result<_>>()?,
                None => (0..m).map(|i| Rational::from(u8::from(i == 0))).collect(),
            };
            let u = PiecewiseFunction::harmonic(sys, b.clone())?;
            let mut en = Table::new("energies", &["n", "E_n"]);
            let mut es = Vec::new();
            for n in 0..=a.level {
                let e = reverse_energy_with(sys, &u, n, &rr)?;
                en.push(vec![n.to_string(), e.render()]);
                es.push(e.to_f64());
            }
            let monotone = es.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-20));
            rep.tables.extend([it, cond, en]);
            rep.evidence("result", "feasible");
            rep.evidence("forward residual |Phi^n(y_n) - y_0| / |y_0|", format!("{:e}", rr.run.residual));
            rep.evidence("boundary data", render_vec(&b));
            rep.evidence("energies nondecreasing", monotone);
            if !monotone {
                return Err(Error::Constraint("reverse-recursive energies decreased".into()));
            }
        }
        Err(Error::InfeasibleInverse { step, reason }) => {
            rep.evidence("result", "InfeasibleInverse");
            rep.evidence("failing step", step);
            rep.evidence("reason", reason);
            attraction(&map, a, &mut rep)?;
        }
        Err(e) => return Err(e),
    }
    Ok(rep)
}

/// The normalized forward orbit from random starts, measured against the
/// boundary direction (0, 1, 0).
fn attraction(map: &TraceMap, a: &DirichletArgs, rep: &mut RunReport) -> Result<()> {
    if map.dim() != 3 {
        return Ok(());
    }
    rep.param("starts", a.starts);
    rep.param("orbit_level", a.orbit_level);
    rep.param("seed", a.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let target = [0.0, 1.0, 0.0];
    let mut t = Table::new("attraction to (0,1,0)", &["start", "x0", "normalized x_n", "distance"]);
    let mut worst = 0.0f64;
    for s in 0..a.starts {
        let x0: Vec<HpFloat> = (0..3).map(|_| HpFloat::new(rng.gen_range(0.01..1.0))).collect();
        let (x, _) = normalized_orbit(map, &x0, a.orbit_level)?;
        let d = x.iter().zip(target).map(|(v, t)| (v.to_f64() - t).abs()).fold(0.0, f64::max);
        worst = worst.max(d);
        t.push(vec![
            s.to_string(),
            format!("({})", x0.iter().map(|v| format!("{:.6}", v.to_f64())).collect::<Vec<_>>().join(", ")),
            format!("({})", x.iter().map(|v| format!("{:.3e}", v.to_f64())).collect::<Vec<_>>().join(", ")),
            format!("{d:.3e}"),
        ]);
    }
    rep.tables.push(t);
    rep.evidence("largest sup distance from (0,1,0)", format!("{worst:.3e} at n = {}", a.orbit_level));
    Ok(())
}

// -------------------------------------------------------------- witness

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum WitnessName {
    /// Eyebolt function linear along the p1-p3 diagonal.
    U1,
    /// Sickle function vanishing at p1 and p3.
    Sickle,
    /// Lower-bound evidence for the eyebolt function with u(p2) = 1.
    U2,
}

#[derive(Args)]
pub struct WitnessArgs {
    #[arg(value_enum)]
    name: WitnessName,
    #[arg(long, default_value_t = 8)]
    level: usize,
    /// Besov exponent; defaults to σ* of the fractal.
    #[arg(long)]
    sigma: Option<f64>,
    /// Divergence threshold for u2.
    #[arg(long, default_value_t = 1e3)]
    threshold: f64,
}

fn besov_table(est: &BesovEstimate, rep: &mut RunReport, label: &str) {
    let mut t = Table::new(&format!("besov {label}"), &["j", "E_j", "weighted", "partial sum"]);
    for i in 0..est.levels.len() {
        t.push(vec![
            est.levels[i].to_string(),
            format!("{:.12e}", est.energies[i]),
            format!("{:.12e}", est.weighted[i]),
            format!("{:.12e}", est.partial_sums[i]),
        ]);
    }
    rep.tables.push(t);
    rep.evidence(&format!("{label} verdict"), format!("{:?}", est.verdict));
    rep.evidence(
        &format!("{label} tail ratio"),
        est.tail_ratio.map_or("-".into(), |q| format!("{q:.9} per level over {}..{}", est.window.1 / 2, est.window.1)),
    );
}

pub fn witness(g: &Global, a: &WitnessArgs) -> Result<RunReport> {
    let name = match a.name {
        WitnessName::U1 | WitnessName::U2 => "eyebolt-vicsek",
        WitnessName::Sickle => "sickle",
    };
    let sys = if g.config.is_some() { load(g, Some(name))? } else { builtin(name)? };
    let mut rep = base_report(&sys, "exact");
    rep.param("witness", format!("{:?}", a.name).to_lowercase());
    rep.param("level", a.level);
    let sigma = match a.sigma {
        Some(s) => s,
        None if a.name == WitnessName::U2 => 0.0,
        None => critical_exponents(&sys, 12, pcfnet::exponents::DEFAULT_TOL)?.sigma_star,
    };
    match a.name {
        WitnessName::U1 => {
            let u = eyebolt_u1(&sys)?;
            let (d, b) = eyebolt_fixed_weights()?;
            let mut tau = vec![d; 9];
            tau.extend(vec![b; 12]);
            let form = spoke_form(&[Rational::from(1), Rational::from(1), Rational::from(1), Rational::from(1)])?;
            let rr = reverse_recursive(&sys, a.level)?;
            let mut t = Table::new("energies", &["n", "self-similar E_n", "reverse-recursive E_n", "primal E_n"]);
            let mut all_half = true;
            for n in 0..=a.level {
                let e = self_similar_energy(&sys, &tau, &form, &u, n)?;
                all_half &= e == (1, 2);
                t.push(vec![
                    n.to_string(),
                    e.render(),
                    reverse_energy_with(&sys, &u, n, &rr)?.render(),
                    primal_energy(&sys, &u, n)?.render(),
                ]);
            }
            rep.tables.push(t);
            rep.evidence("self-similar E_n = 1/2 for every level", all_half);
        }
        WitnessName::Sickle => {
            let u = sickle_witness(&sys)?;
            let mut t = Table::new("energies", &["n", "E_n", "7^n E_n", "2 (7/8)^n", "within bound"]);
            let mut ok = true;
            for n in 0..=a.level {
                let e = primal_energy(&sys, &u, n)?;
                let w = rpow(Rational::from(7), n) * &e;
                let bound = Rational::from(2) * rpow(Rational::from((7, 8)), n);
                ok &= w <= bound;
                t.push(vec![n.to_string(), e.render(), w.render(), bound.render(), (w <= bound).to_string()]);
            }
            rep.tables.push(t);
            rep.evidence("7^n E_n <= 2 (7/8)^n throughout", ok);
        }
        WitnessName::U2 => {
            rep.mode = if a.level <= 20 { "exact" } else { "float" }.into();
            let ev = u2_divergence_check(a.level, a.threshold)?;
            let mut t = Table::new("u2 evidence", &["n", "a_n/b_n", "9^n min E_n"]);
            for n in 0..=a.level {
                t.push(vec![n.to_string(), format!("{:.9}", ev.ratio[n]), format!("{:.9}", ev.lower_bound[n])]);
            }
            rep.tables.push(t);
            rep.evidence("lower bound / ratio bracket", format!("[{:.6}, {:.6}]", ev.tracking.0, ev.tracking.1));
            rep.evidence("a_n/b_n strictly increasing from", ev.increasing_from.map_or("-".into(), |n| n.to_string()));
            rep.evidence(
                &format!("first n with lower bound > {}", ev.threshold),
                ev.crossing.map_or(format!("none up to n = {}", ev.n_max), |n| n.to_string()),
            );
            return Ok(rep);
        }
    }
    rep.param("sigma", format!("{sigma:.12}"));
    let u = match a.name {
        WitnessName::U1 => eyebolt_u1(&sys)?,
        _ => sickle_witness(&sys)?,
    };
    let inf = besov_2inf(&sys, &u, sigma, a.level, 1)?;
    besov_table(&inf, &mut rep, "(2,inf)");
    let two = besov_22(&sys, &u, sigma, a.level)?;
    rep.evidence("(2,2) verdict", format!("{:?}", two.verdict));
    Ok(rep)
}

// --------------------------------------------------------- export/energy

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FunctionName {
    U1,
    Sickle,
    /// Harmonic extension of --boundary.
    Harmonic,
}

#[derive(Args)]
pub struct ExportArgs {
    fractal: Option<String>,
    #[arg(long, value_enum)]
    function: FunctionName,
    #[arg(long, default_value_t = 2)]
    level: usize,
    #[arg(long, value_delimiter = ',')]
    boundary: Option<Vec<String>>,
}

pub fn export(g: &Global, a: &ExportArgs) -> Result<String> {
    let sys = load(g, a.fractal.as_deref())?;
    let u = match a.function {
        FunctionName::U1 => eyebolt_u1(&sys)?,
        FunctionName::Sickle => sickle_witness(&sys)?,
        FunctionName::Harmonic => {
            let b = a.boundary.as_ref().ok_or_else(|| Error::Argument("harmonic needs --boundary".into()))?;
            PiecewiseFunction::harmonic(&sys, b.iter().map(|s| parse_rational(s)).collect::<Result<_>>()?)?
        }
    };
    let cells = sys.map_count.checked_pow(a.level as u32).unwrap_or(usize::MAX);
    if cells > MAX_EXPLICIT_CELLS {
        return Err(Error::Argument(format!("level {} has {cells} cells; too many to list", a.level)));
    }
    export_function(&sys, &u, a.level)
}

#[derive(Args)]
pub struct EnergyArgs {
    fractal: Option<String>,
    /// File written by `export`.
    #[arg(long)]
    input: PathBuf,
}

pub fn energy(g: &Global, a: &EnergyArgs) -> Result<RunReport> {
    let sys = load(g, a.fractal.as_deref())?;
    let text = fs::read_to_string(&a.input).map_err(|e| Error::Argument(format!("{}: {e}", a.input.display())))?;
    let u = import_function(&sys, &text)?;
    let level = u.table_level().expect("imports are tables");
    let mut rep = base_report(&sys, "exact");
    rep.param("input", a.input.display());
    rep.param("level", level);
    let g = LevelGraph::build(&sys, level);
    let mut t = Table::new("energy", &["level", "vertices", "primal E_n"]);
    t.push(vec![level.to_string(), g.vertex_count().to_string(), primal_energy(&sys, &u, level)?.render()]);
    rep.tables.push(t);
    Ok(rep)
}
