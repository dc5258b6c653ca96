//! Level energies of piecewise-defined functions, discrete Besov semi-norms,
//! witness functions and the two Dirichlet-form constructions.
//!
//! A function is either an explicit table on some V_n or a boundary vector
//! with a linear level-1 refinement rule. For rules, u∘F_w is the function
//! with boundary values A_w b, so level-n energies reduce to the m×m
//! recursion P ← Σ_i w_i A_iᵀ P A_i and never touch the level-n graph.

use serde::Serialize;

use crate::arith::{HpFloat, Scalar};
use crate::error::{arg, Error, Result};
use crate::fractal::{CellAddress, FractalSystem, LevelGraph};
use crate::network::{FunctionOnVertices, VertexId};
use crate::par::{self, Exec};
use crate::trace_maps::{delta_form, inverse_iterate, iterate, InverseRun, IterGuard, TraceMap};

/// Pair conductances on V0; the form is Σ c (x_p − x_q)².
pub type Form<S> = Vec<(usize, usize, S)>;

type Matrix<S> = Vec<Vec<S>>;

/// Σ over all pairs with unit weight.
pub fn unit_form<S: Scalar>(m: usize) -> Form<S> {
    let mut f = Vec::new();
    for p in 0..m {
        for q in p + 1..m {
            f.push((p, q, S::one()));
        }
    }
    f
}

/// The complete-graph form equivalent to a star with spoke resistances `x`.
pub fn spoke_form<S: Scalar>(x: &[S]) -> Result<Form<S>> {
    Ok(delta_form(x)?.into_iter().map(|((p, q), r)| (p, q, S::one() / &r)).collect())
}

/// (u1−u2)² + k(u2−u3)² + k(u3−u1)².
pub fn sickle_form<S: Scalar>(k: &S) -> Form<S> {
    vec![(0, 1, S::one()), (1, 2, k.clone()), (0, 2, k.clone())]
}

pub fn form_energy<S: Scalar>(form: &Form<S>, b: &[S]) -> S {
    let mut e = S::zero();
    for (p, q, c) in form {
        e = e + &(c.clone() * &(b[*p].clone() - &b[*q]).square());
    }
    e
}

fn form_matrix<S: Scalar>(m: usize, form: &Form<S>) -> Matrix<S> {
    let mut a = vec![vec![S::zero(); m]; m];
    for (p, q, c) in form {
        let (p, q) = (*p, *q);
        a[p][p] = a[p][p].clone() + c;
        a[q][q] = a[q][q].clone() + c;
        a[p][q] = a[p][q].clone() - c;
        a[q][p] = a[q][p].clone() - c;
    }
    a
}

fn mat_vec<S: Scalar>(a: &Matrix<S>, x: &[S]) -> Vec<S> {
    a.iter()
        .map(|row| row.iter().zip(x).fold(S::zero(), |s, (r, v)| s + &(r.clone() * v)))
        .collect()
}

fn quad<S: Scalar>(a: &Matrix<S>, x: &[S]) -> S {
    x.iter().zip(mat_vec(a, x)).fold(S::zero(), |s, (v, w)| s + &(w * v))
}

/// Σ_i w_i A_iᵀ P A_i.
fn pull_back<S: Scalar>(p: &Matrix<S>, cells: &[Matrix<S>], weights: Option<&[S]>) -> Matrix<S> {
    let m = p.len();
    let mut out = vec![vec![S::zero(); m]; m];
    for (i, a) in cells.iter().enumerate() {
        let mut pa = vec![vec![S::zero(); m]; m];
        for r in 0..m {
            for c in 0..m {
                let mut s = S::zero();
                for k in 0..m {
                    s = s + &(p[r][k].clone() * &a[k][c]);
                }
                pa[r][c] = s;
            }
        }
        for r in 0..m {
            for c in 0..m {
                let mut s = S::zero();
                for k in 0..m {
                    s = s + &(a[k][r].clone() * &pa[k][c]);
                }
                if let Some(w) = weights {
                    s = s * &w[i];
                }
                out[r][c] = out[r][c].clone() + &s;
            }
        }
    }
    out
}

#[derive(Clone, Debug)]
enum Source<S> {
    Rule { boundary: Vec<S>, refine: Matrix<S>, cells: Vec<Matrix<S>> },
    Table { level: usize, values: Vec<S> },
}

/// u ∈ ℓ(V_*), given on one level or by a refinement rule.
#[derive(Clone, Debug)]
pub struct PiecewiseFunction<S> {
    labels: usize,
    maps: usize,
    source: Source<S>,
}

/// Largest level whose cells are enumerated explicitly.
pub const MAX_EXPLICIT_CELLS: usize = 1 << 23;

fn check_cells(sys: &FractalSystem, n: usize) -> Result<usize> {
    let mut c = 1usize;
    for _ in 0..n {
        c = c.checked_mul(sys.map_count).filter(|&c| c <= MAX_EXPLICIT_CELLS).ok_or_else(|| {
            Error::Argument(format!("level {n} of {} has too many cells to enumerate", sys.name))
        })?;
    }
    Ok(c)
}

impl<S: Scalar> PiecewiseFunction<S> {
    pub fn from_table(sys: &FractalSystem, level: usize, values: Vec<S>) -> Result<Self> {
        check_cells(sys, level)?;
        let g = LevelGraph::build(sys, level);
        if values.len() != g.vertex_count() {
            return arg(format!("V_{level} has {} vertices, table has {}", g.vertex_count(), values.len()));
        }
        Ok(PiecewiseFunction { labels: sys.label_count(), maps: sys.map_count, source: Source::Table { level, values } })
    }

    /// Level-1 values as linear functions of the boundary values: row x of
    /// `refine` gives u(x) on V_1. Boundary rows must be the identity.
    pub fn linear(sys: &FractalSystem, boundary: Vec<S>, refine: Matrix<S>) -> Result<Self> {
        let m = sys.label_count();
        if boundary.len() != m {
            return arg(format!("{} boundary values for {m} labels", boundary.len()));
        }
        let g = LevelGraph::build(sys, 1);
        if refine.len() != g.vertex_count() || refine.iter().any(|r| r.len() != m) {
            return arg("refinement matrix must be |V_1| × |V_0|");
        }
        for (p, v) in g.boundary().iter().enumerate() {
            for (q, x) in refine[v.idx()].iter().enumerate() {
                let want = if p == q { S::one() } else { S::zero() };
                if rel_ne(x, &want) {
                    return Err(Error::Constraint(format!("refinement changes the boundary value at {}", sys.labels[p])));
                }
            }
        }
        Ok(Self::rule(sys, boundary, refine))
    }

    fn rule(sys: &FractalSystem, boundary: Vec<S>, refine: Matrix<S>) -> Self {
        let m = sys.label_count();
        let g = LevelGraph::build(sys, 1);
        let cells = (0..sys.map_count)
            .map(|i| (0..m).map(|p| refine[g.vertex(i, p).idx()].clone()).collect())
            .collect();
        PiecewiseFunction { labels: m, maps: sys.map_count, source: Source::Rule { boundary, refine, cells } }
    }

    /// Piecewise harmonic: each cell refines by the level-1 harmonic extension
    /// of the template network.
    pub fn harmonic(sys: &FractalSystem, boundary: Vec<S>) -> Result<Self> {
        let g = LevelGraph::build(sys, 1);
        let net = g.network::<S>(sys, Exec::Sequential);
        let m = sys.label_count();
        let mut cols = Vec::with_capacity(m);
        for p in 0..m {
            let e: Vec<S> = (0..m).map(|q| if p == q { S::one() } else { S::zero() }).collect();
            let h = net.harmonic_extension(&FunctionOnVertices::new(&g.boundary(), e)?)?;
            cols.push(h.u.to_vec());
        }
        let refine = (0..g.vertex_count()).map(|x| (0..m).map(|p| cols[p][x].clone()).collect()).collect();
        PiecewiseFunction::linear(sys, boundary, refine)
    }

    /// Self-affine function with the given level-1 table: on each cell
    /// u∘F_i = α_i + β_i·u. Every cell's corner values must be an affine image
    /// of the boundary values.
    pub fn affine(sys: &FractalSystem, level1: Vec<S>) -> Result<Self> {
        let g = LevelGraph::build(sys, 1);
        if level1.len() != g.vertex_count() {
            return arg(format!("V_1 has {} vertices, table has {}", g.vertex_count(), level1.len()));
        }
        let m = sys.label_count();
        let b: Vec<S> = g.boundary().iter().map(|v| level1[v.idx()].clone()).collect();
        let pair = (0..m).flat_map(|p| (0..m).map(move |q| (p, q))).find(|&(p, q)| p < q && b[p] != b[q]);
        let Some((p, q)) = pair else {
            if level1.iter().any(|v| *v != b[0]) {
                return Err(Error::Constraint("constant boundary with a non-constant level-1 table".into()));
            }
            let refine = (0..g.vertex_count()).map(|_| unit_row(m, 0)).collect();
            return PiecewiseFunction::linear(sys, b, refine);
        };
        // β(x) = (x_q − x_p)/(b_q − b_p), α(x) = x_p − β(x) b_p, both linear in x.
        let d = b[q].clone() - &b[p];
        let beta: Vec<S> = (0..m)
            .map(|k| {
                if k == q {
                    S::one() / &d
                } else if k == p {
                    -(S::one() / &d)
                } else {
                    S::zero()
                }
            })
            .collect();
        let alpha: Vec<S> = (0..m).map(|k| unit_row::<S>(m, p)[k].clone() - &(beta[k].clone() * &b[p])).collect();
        for i in 0..sys.map_count {
            let corners: Vec<S> = (0..m).map(|r| level1[g.vertex(i, r).idx()].clone()).collect();
            let beta_i = (corners[q].clone() - &corners[p]) / &d;
            let alpha_i = corners[p].clone() - &(beta_i.clone() * &b[p]);
            for r in 0..m {
                if rel_ne(&corners[r], &(alpha_i.clone() + &(beta_i.clone() * &b[r]))) {
                    return Err(Error::Constraint(format!("cell {} is not an affine image of the boundary data", i + 1)));
                }
            }
        }
        // The refinement is linear on span{1, b}, which holds every cell's data.
        let refine = level1
            .iter()
            .map(|v| (0..m).map(|k| alpha[k].clone() + &(beta[k].clone() * v)).collect())
            .collect();
        Ok(Self::rule(sys, b, refine))
    }

    pub fn boundary_values(&self, sys: &FractalSystem) -> Result<Vec<S>> {
        match &self.source {
            Source::Rule { boundary, .. } => Ok(boundary.clone()),
            Source::Table { .. } => Ok(self.cell_boundaries(sys, 0)?.remove(0)),
        }
    }

    /// Finest level the function is defined on; `None` for rules.
    pub fn table_level(&self) -> Option<usize> {
        match &self.source {
            Source::Rule { .. } => None,
            Source::Table { level, .. } => Some(*level),
        }
    }

    fn check_sys(&self, sys: &FractalSystem) -> Result<()> {
        if sys.label_count() != self.labels || sys.map_count != self.maps {
            return arg(format!("function does not belong to {}", sys.name));
        }
        Ok(())
    }

    /// Corner values of every level-n cell, in cell order.
    pub fn cell_boundaries(&self, sys: &FractalSystem, n: usize) -> Result<Vec<Vec<S>>> {
        self.check_sys(sys)?;
        let count = check_cells(sys, n)?;
        match &self.source {
            Source::Rule { boundary, cells, .. } => {
                let mut cur = vec![boundary.clone()];
                for _ in 0..n {
                    cur = cur.iter().flat_map(|b| cells.iter().map(move |a| mat_vec(a, b))).collect();
                }
                debug_assert_eq!(cur.len(), count);
                Ok(cur)
            }
            Source::Table { level, values } => {
                if n > *level {
                    return arg(format!("table is defined on V_{level} only, not V_{n}"));
                }
                let tower = LevelGraph::tower(sys, *level);
                let mut vals = values.clone();
                for k in (n..*level).rev() {
                    let emb = tower[k].embedding_into(&tower[k + 1], sys);
                    vals = emb.iter().map(|&x| vals[x as usize].clone()).collect();
                }
                let g = &tower[n];
                Ok((0..g.cell_count()).map(|c| g.cell_vertices(c).iter().map(|&x| vals[x as usize].clone()).collect()).collect())
            }
        }
    }

    /// Values on V_n, checking that every incarnation of a vertex agrees.
    pub fn values(&self, sys: &FractalSystem, n: usize) -> Result<Vec<S>> {
        if let Source::Table { level, values } = &self.source {
            if n == *level {
                return Ok(values.clone());
            }
        }
        let cb = self.cell_boundaries(sys, n)?;
        let g = LevelGraph::build(sys, n);
        let mut out: Vec<Option<S>> = vec![None; g.vertex_count()];
        for (c, b) in cb.iter().enumerate() {
            for (p, &x) in g.cell_vertices(c).iter().enumerate() {
                match &out[x as usize] {
                    None => out[x as usize] = Some(b[p].clone()),
                    Some(v) if rel_ne(v, &b[p]) => {
                        return Err(Error::Constraint(format!(
                            "inconsistent values {} and {} at {}",
                            v.render(),
                            b[p].render(),
                            g.canonical_name(sys, VertexId(x))
                        )))
                    }
                    Some(_) => {}
                }
            }
        }
        Ok(out.into_iter().map(|v| v.expect("every vertex lies in a cell")).collect())
    }

    /// Materializes levels 0..=n and checks cross-level agreement.
    pub fn check_consistent(&self, sys: &FractalSystem, n: usize) -> Result<()> {
        let tower = LevelGraph::tower(sys, n);
        let mut prev = self.values(sys, 0)?;
        for k in 1..=n {
            let cur = self.values(sys, k)?;
            let emb = tower[k - 1].embedding_into(&tower[k], sys);
            for (x, &y) in emb.iter().enumerate() {
                if rel_ne(&prev[x], &cur[y as usize]) {
                    return Err(Error::Constraint(format!(
                        "value at {} changes between levels {} and {k}",
                        tower[k - 1].canonical_name(sys, VertexId(x as u32)),
                        k - 1
                    )));
                }
            }
            prev = cur;
        }
        Ok(())
    }

    /// (u ∨ 0) ∧ 1 on V_n.
    pub fn markov_cut(&self, sys: &FractalSystem, n: usize) -> Result<Self> {
        let vals = self.values(sys, n)?;
        let cut = vals.into_iter().map(|v| S::min_of(S::max_of(v, S::zero()), S::one())).collect();
        PiecewiseFunction::from_table(sys, n, cut)
    }
}

fn unit_row<S: Scalar>(m: usize, p: usize) -> Vec<S> {
    (0..m).map(|q| if p == q { S::one() } else { S::zero() }).collect()
}

/// Inequality for exact scalars, relative 1e-12 for floats.
fn rel_ne<S: Scalar>(a: &S, b: &S) -> bool {
    if S::EXACT {
        a != b
    } else {
        let (x, y) = (a.to_f64(), b.to_f64());
        (x - y).abs() > 1e-12 * x.abs().max(y.abs()).max(1.0)
    }
}

/// Σ_{|w|=n} (Π_k weights[w_k]) E0(u∘F_w), with E0 given by `form`.
pub fn weighted_energy<S: Scalar>(
    sys: &FractalSystem,
    u: &PiecewiseFunction<S>,
    n: usize,
    form: &Form<S>,
    weights: Option<&[S]>,
) -> Result<S> {
    u.check_sys(sys)?;
    if let Some(w) = weights {
        if w.len() != sys.map_count {
            return arg(format!("{} weights for {} maps", w.len(), sys.map_count));
        }
    }
    match &u.source {
        Source::Rule { boundary, cells, .. } => {
            let mut p = form_matrix(u.labels, form);
            for _ in 0..n {
                p = pull_back(&p, cells, weights);
            }
            Ok(quad(&p, boundary))
        }
        Source::Table { .. } => direct_energy(sys, u, n, form, weights, Exec::default()),
    }
}

/// The same sum by enumerating level-n cells.
pub fn direct_energy<S: Scalar>(
    sys: &FractalSystem,
    u: &PiecewiseFunction<S>,
    n: usize,
    form: &Form<S>,
    weights: Option<&[S]>,
    exec: Exec,
) -> Result<S> {
    let cb = u.cell_boundaries(sys, n)?;
    let chunk = 4096usize;
    let parts = par::map_range(exec, cb.len().div_ceil(chunk), |k| {
        let mut s = S::zero();
        for c in k * chunk..((k + 1) * chunk).min(cb.len()) {
            let mut e = form_energy(form, &cb[c]);
            if let Some(w) = weights {
                for &l in &CellAddress::from_index(c, sys.map_count, n).0 {
                    e = e * &w[l];
                }
            }
            s = s + &e;
        }
        s
    });
    Ok(parts.into_iter().fold(S::zero(), |a, b| a + &b))
}

/// Unit conductance on every in-cell vertex pair.
pub fn primal_energy<S: Scalar>(sys: &FractalSystem, u: &PiecewiseFunction<S>, n: usize) -> Result<S> {
    weighted_energy(sys, u, n, &unit_form(sys.label_count()), None)
}

/// Σ_{|w|=n} τ_w⁻¹ E0(u∘F_w).
pub fn self_similar_energy<S: Scalar>(
    sys: &FractalSystem,
    tau: &[S],
    form: &Form<S>,
    u: &PiecewiseFunction<S>,
    n: usize,
) -> Result<S> {
    if tau.iter().any(|t| !t.is_positive()) {
        return arg("weights must be positive");
    }
    let inv: Vec<S> = tau.iter().map(|t| S::one() / t).collect();
    weighted_energy(sys, u, n, form, Some(&inv))
}

/// Per-level cell forms of the reverse-recursive construction.
#[derive(Clone, Debug)]
pub struct ReverseRecursive {
    pub run: InverseRun,
    /// Cell form at each level, from the spoke values of the inverse iterate.
    pub forms: Vec<Form<HpFloat>>,
}

/// Solves Φ(y_n) = y_{n−1} from y_0 = (1, …, 1).
pub fn reverse_recursive(sys: &FractalSystem, n: usize) -> Result<ReverseRecursive> {
    let map = TraceMap::for_fractal(&sys.name)
        .ok_or_else(|| Error::Argument(format!("{} has no closed-form trace map", sys.name)))?;
    let y0 = vec![HpFloat::one(); map.dim()];
    let run = inverse_iterate(&map, &y0, n)?;
    let forms = run.steps.iter().map(|y| spoke_form(y)).collect::<Result<_>>()?;
    Ok(ReverseRecursive { run, forms })
}

/// Level-n energy under the reverse-recursive conductances.
pub fn reverse_recursive_energy<S: Scalar>(sys: &FractalSystem, u: &PiecewiseFunction<S>, n: usize) -> Result<HpFloat> {
    let rr = reverse_recursive(sys, n)?;
    reverse_energy_with(sys, u, n, &rr)
}

/// As `reverse_recursive_energy` with the construction computed once.
pub fn reverse_energy_with<S: Scalar>(
    sys: &FractalSystem,
    u: &PiecewiseFunction<S>,
    n: usize,
    rr: &ReverseRecursive,
) -> Result<HpFloat> {
    let form = rr.forms.get(n).ok_or_else(|| Error::Argument(format!("construction has no level {n}")))?;
    let hp = to_hp(u);
    weighted_energy(sys, &hp, n, form, None)
}

fn to_hp<S: Scalar>(u: &PiecewiseFunction<S>) -> PiecewiseFunction<HpFloat> {
    let conv = |v: &[S]| v.iter().map(Scalar::to_hp).collect::<Vec<_>>();
    let source = match &u.source {
        Source::Rule { boundary, refine, cells } => Source::Rule {
            boundary: conv(boundary),
            refine: refine.iter().map(|r| conv(r)).collect(),
            cells: cells.iter().map(|a| a.iter().map(|r| conv(r)).collect()).collect(),
        },
        Source::Table { level, values } => Source::Table { level: *level, values: conv(values) },
    };
    PiecewiseFunction { labels: u.labels, maps: u.maps, source }
}

/// u₁ on the eyebolt: linear along the p1p3 diagonal, constant on the branches.
pub fn eyebolt_u1(sys: &FractalSystem) -> Result<PiecewiseFunction<rug::Rational>> {
    if sys.name != "eyebolt-vicsek" {
        return arg("u1 is defined on the eyebolt");
    }
    let half = rug::Rational::from((1, 2));
    let b = vec![rug::Rational::new(), half.clone(), rug::Rational::from(1), half];
    let h = PiecewiseFunction::harmonic(sys, b)?;
    let level1 = h.values(sys, 1)?;
    PiecewiseFunction::affine(sys, level1)
}

/// Cell index, α and β of u∘F_i = α + β·u for the sickle witness. Cells not
/// listed are constant 0.
const SICKLE_WITNESS: [(usize, i64, i64); 10] = [
    (6, 0, 1),   // Y
    (8, 7, 1),   // D1, at p2
    (9, 6, 1),   // D2
    (10, 5, 1),  // D3
    (11, 4, 1),  // D4
    (12, 3, 1),  // D5
    (13, 3, -1), // D6
    (14, 2, 0),  // D7
    (15, 2, 0),  // D8
    (16, 1, 1),  // D9
];

/// u(p1) = u(p3) = 0, u(p2) = 1; constant 0 on the left cells and X, Z; the
/// chain D1..D6, D9, Y from p2 to the top each drops by 1/8; D7 and D8 are
/// constant. Defined at every level by u∘F_i = α_i + β_i u.
pub fn sickle_witness(sys: &FractalSystem) -> Result<PiecewiseFunction<rug::Rational>> {
    use rug::Rational;
    if sys.name != "sickle" {
        return arg("the witness is defined on the sickle");
    }
    let g = LevelGraph::build(sys, 1);
    let base = [Rational::new(), Rational::from(1), Rational::new()];
    let mut vals: Vec<Option<Rational>> = vec![None; g.vertex_count()];
    for i in 0..sys.map_count {
        let (a, b) = SICKLE_WITNESS.iter().find(|c| c.0 == i).map_or((0, 0), |c| (c.1, c.2));
        for (p, bp) in base.iter().enumerate() {
            let v = Rational::from((a, 8)) + Rational::from((b, 8)) * bp;
            let x = g.vertex(i, p).idx();
            match &vals[x] {
                None => vals[x] = Some(v),
                Some(w) if *w != v => {
                    return Err(Error::Constraint(format!("witness disagrees at {}", g.canonical_name(sys, VertexId(x as u32)))))
                }
                Some(_) => {}
            }
        }
    }
    let level1 = vals.into_iter().map(|v| v.expect("covered")).collect();
    PiecewiseFunction::affine(sys, level1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Finiteness {
    Finite,
    Infinite,
    Indeterminate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum BesovMode {
    /// sup over levels
    TwoInf,
    /// sum over levels
    TwoTwo,
}

#[derive(Clone, Debug, Serialize)]
pub struct BesovEstimate {
    pub sigma: f64,
    pub mode: BesovMode,
    pub stride: usize,
    pub levels: Vec<usize>,
    pub energies: Vec<f64>,
    /// ρ^{−(2σ−α)j} E_j[u].
    pub weighted: Vec<f64>,
    pub sup: f64,
    pub partial_sums: Vec<f64>,
    /// Geometric ratio fitted to the weighted terms over the second half.
    pub tail_ratio: Option<f64>,
    pub verdict: Finiteness,
    pub window: (usize, usize),
}

fn weighted_levels<S: Scalar>(
    sys: &FractalSystem,
    u: &PiecewiseFunction<S>,
    sigma: f64,
    j_max: usize,
    stride: usize,
) -> Result<(Vec<usize>, Vec<f64>, Vec<f64>)> {
    if stride == 0 {
        return arg("stride must be at least 1");
    }
    let alpha = sys.similarity_dimension();
    if 2.0 * sigma <= alpha {
        return Err(Error::Domain(format!("2σ = {} is not above α = {alpha:.6}", 2.0 * sigma)));
    }
    let rho = sys.rho.to_hp();
    let rate = HpFloat::new(2.0 * sigma - alpha) * &(-rho.ln());
    let levels: Vec<usize> = (0..=j_max).step_by(stride).collect();
    let mut energies = Vec::new();
    let mut weighted = Vec::new();
    for &j in &levels {
        let e = primal_energy(sys, u, j)?.to_hp();
        let w = (rate.clone() * &HpFloat::from_i64(j as i64)).exp() * &e;
        energies.push(e.to_f64());
        weighted.push(w.to_f64());
    }
    Ok((levels, energies, weighted))
}

fn tail_ratio(w: &[f64], stride: usize) -> Option<f64> {
    let tail = &w[w.len() / 2..];
    let (first, last) = (*tail.first()?, *tail.last()?);
    if tail.len() < 2 || first <= 0.0 || last <= 0.0 {
        return None;
    }
    // Per level, so stride ℓ and stride 1 report comparable ratios.
    Some((last / first).powf(1.0 / ((tail.len() - 1) * stride) as f64))
}

/// Discrete (2,∞) semi-norm over levels 0, ℓ, 2ℓ, … ≤ j_max.
pub fn besov_2inf<S: Scalar>(
    sys: &FractalSystem,
    u: &PiecewiseFunction<S>,
    sigma: f64,
    j_max: usize,
    stride: usize,
) -> Result<BesovEstimate> {
    let (levels, energies, weighted) = weighted_levels(sys, u, sigma, j_max, stride)?;
    let sup = weighted.iter().cloned().fold(0.0, f64::max);
    let q = tail_ratio(&weighted, stride);
    let verdict = if sup == 0.0 {
        Finiteness::Finite
    } else {
        match q {
            Some(q) if q <= 1.0 + 1e-9 => Finiteness::Finite,
            Some(q) if q > 1.0 + 1e-3 => Finiteness::Infinite,
            _ => Finiteness::Indeterminate,
        }
    };
    let mut acc = 0.0;
    let partial_sums = weighted.iter().map(|w| {
        acc += w;
        acc
    });
    Ok(BesovEstimate {
        sigma,
        mode: BesovMode::TwoInf,
        stride,
        window: (0, *levels.last().expect("level 0 is always sampled")),
        partial_sums: partial_sums.collect(),
        levels,
        energies,
        weighted,
        sup,
        tail_ratio: q,
        verdict,
    })
}

/// Discrete (2,2) semi-norm: partial sums over levels 0..=j_max. Terms that
/// stop decaying geometrically make the sums diverge.
pub fn besov_22<S: Scalar>(sys: &FractalSystem, u: &PiecewiseFunction<S>, sigma: f64, j_max: usize) -> Result<BesovEstimate> {
    let (levels, energies, weighted) = weighted_levels(sys, u, sigma, j_max, 1)?;
    let mut acc = 0.0;
    let partial_sums: Vec<f64> = weighted
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect();
    let q = tail_ratio(&weighted, 1);
    let nonzero = weighted.iter().any(|&w| w > 0.0);
    let verdict = if !nonzero {
        Finiteness::Finite
    } else {
        match q {
            Some(q) if q < 0.999 => Finiteness::Finite,
            Some(q) if q >= 1.0 - 1e-9 => Finiteness::Infinite,
            _ => Finiteness::Indeterminate,
        }
    };
    Ok(BesovEstimate {
        sigma,
        mode: BesovMode::TwoTwo,
        stride: 1,
        window: (0, j_max),
        sup: weighted.iter().cloned().fold(0.0, f64::max),
        levels,
        energies,
        weighted,
        partial_sums,
        tail_ratio: q,
        verdict,
    })
}

/// The s > 0 with Σ τ_i^s = 1, by bisection to 1e-14.
pub fn weight_dimension(tau: &[f64]) -> Result<f64> {
    if tau.is_empty() {
        return arg("no weights");
    }
    if tau.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
        return Err(Error::Domain("weights must lie in (0, 1)".into()));
    }
    let f = |s: f64| tau.iter().map(|t| t.powf(s)).sum::<f64>() - 1.0;
    if f(0.0) <= 0.0 {
        return Err(Error::Domain("a single weight has no positive root".into()));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while f(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > 1e-14 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Clone, Debug, Serialize)]
pub struct U2Evidence {
    pub exact: bool,
    /// a_n / b_n.
    pub ratio: Vec<f64>,
    /// 9ⁿ times the least level-n energy of boundary data (0,1,0,0).
    pub lower_bound: Vec<f64>,
    /// lower_bound / ratio, confined to a bracket when the bound tracks a_n/b_n.
    pub tracking: (f64, f64),
    /// First n from which a_n/b_n increases strictly through the window.
    pub increasing_from: Option<usize>,
    pub threshold: f64,
    /// First n with lower_bound > threshold.
    pub crossing: Option<usize>,
    pub n_max: usize,
}

/// Traces of the eyebolt to `n_max` (exact up to level 20) and the growth of
/// the renormalized energy lower bound for u₂ with u₂(p2) = 1.
pub fn u2_divergence_check(n_max: usize, threshold: f64) -> Result<U2Evidence> {
    if n_max < 3 {
        return arg("need at least three levels");
    }
    let map = TraceMap::Eyebolt;
    let exact = n_max <= 20;
    let seq: Vec<(HpFloat, HpFloat, HpFloat)> = if exact {
        let xs = iterate::<rug::Rational>(&map, &vec![rug::Rational::from(1); 4], n_max, IterGuard::default())?;
        xs.iter().map(|x| u2_terms(x).map(|(a, b, e)| (a.to_hp(), b.to_hp(), e.to_hp()))).collect::<Result<_>>()?
    } else {
        let xs = iterate::<HpFloat>(&map, &vec![HpFloat::one(); 4], n_max, IterGuard::default())?;
        xs.iter().map(|x| u2_terms(x)).collect::<Result<_>>()?
    };
    let mut ratio = Vec::new();
    let mut lower_bound = Vec::new();
    for (n, (a, b, e)) in seq.iter().enumerate() {
        ratio.push((a.clone() / b).to_f64());
        lower_bound.push((HpFloat::from_i64(9).powi(n as i32) * e).to_f64());
    }
    let track: Vec<f64> = lower_bound.iter().zip(&ratio).map(|(l, r)| l / r).collect();
    let tracking = (
        track.iter().cloned().fold(f64::INFINITY, f64::min),
        track.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );
    let increasing_from = (0..n_max).find(|&k| ratio[k..].windows(2).all(|w| w[1] > w[0]));
    let crossing = lower_bound.iter().position(|&l| l > threshold);
    Ok(U2Evidence { exact, ratio, lower_bound, tracking, increasing_from, threshold, crossing, n_max })
}

/// (a_n, b_n, min energy of (0,1,0,0)) from the spoke values at level n.
fn u2_terms<S: Scalar>(x: &[S]) -> Result<(S, S, S)> {
    let f = spoke_form(x)?;
    let e = form_energy(&f, &[S::zero(), S::one(), S::zero(), S::zero()]);
    Ok((x[0].clone(), x[1].clone(), e))
}

/// Canonical vertex id and exact value per line, after a two-line header.
pub fn export_function<S: Scalar>(sys: &FractalSystem, u: &PiecewiseFunction<S>, n: usize) -> Result<String> {
    let vals = u.values(sys, n)?;
    let g = LevelGraph::build(sys, n);
    let mut out = format!("# fractal {}\n# level {n}\n", sys.name);
    for (x, v) in vals.iter().enumerate() {
        out.push_str(&format!("{}\t{}\n", g.canonical_name(sys, VertexId(x as u32)), v.render()));
    }
    Ok(out)
}

/// Reads the format written by `export_function`. Values are `p/q`
/// rationals or decimals, read exactly.
pub fn import_function(sys: &FractalSystem, text: &str) -> Result<PiecewiseFunction<rug::Rational>> {
    let mut level = None;
    let mut entries = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(h) = line.strip_prefix('#') {
            let mut it = h.split_whitespace();
            match (it.next(), it.next()) {
                (Some("fractal"), Some(name)) if name != sys.name => {
                    return arg(format!("table is for {name}, not {}", sys.name))
                }
                (Some("level"), Some(l)) => {
                    level = Some(l.parse::<usize>().map_err(|_| Error::Argument(format!("bad level `{l}`")))?)
                }
                _ => {}
            }
            continue;
        }
        let (id, v) = line
            .split_once(char::is_whitespace)
            .ok_or_else(|| Error::Argument(format!("line {}: expected `<vertex> <value>`", ln + 1)))?;
        entries.push((id.to_string(), parse_value(v.trim()).map_err(|e| Error::Argument(format!("line {}: {e}", ln + 1)))?));
    }
    let level = level.ok_or_else(|| Error::Argument("missing `# level` header".into()))?;
    let g = LevelGraph::build(sys, level);
    let mut vals: Vec<Option<rug::Rational>> = vec![None; g.vertex_count()];
    for (id, v) in entries {
        let x = g.parse_name(sys, &id)?;
        if vals[x.idx()].replace(v).is_some() {
            return arg(format!("vertex {id} listed twice"));
        }
    }
    let vals = vals
        .into_iter()
        .enumerate()
        .map(|(x, v)| v.ok_or_else(|| Error::Argument(format!("no value for {}", g.canonical_name(sys, VertexId(x as u32))))))
        .collect::<Result<_>>()?;
    PiecewiseFunction::from_table(sys, level, vals)
}

fn parse_value(s: &str) -> Result<rug::Rational> {
    if let Ok(q) = crate::arith::parse_rational(s) {
        return Ok(q);
    }
    // Decimal literal: digits with an optional point and exponent.
    let (mant, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().map_err(|_| Error::Argument(format!("bad value `{s}`")))?),
        None => (s, 0),
    };
    let (int, frac) = mant.split_once('.').unwrap_or((mant, ""));
    let digits = format!("{int}{frac}");
    let num: rug::Integer = digits.parse().map_err(|_| Error::Argument(format!("bad value `{s}`")))?;
    let shift = exp - frac.len() as i32;
    let scale = rug::Integer::from(rug::Integer::u_pow_u(10, shift.unsigned_abs()));
    Ok(if shift >= 0 { rug::Rational::from(num * scale) } else { rug::Rational::from((num, scale)) })
}
