//! Compatible boundary relations, induced partitions, quotient networks and
//! graph-directed boundary-class systems.

use std::collections::{BTreeMap, BTreeSet};

use rug::Rational;

use crate::arith::Scalar;
use crate::error::{arg, Error, Result};
use crate::fractal::{CellAddress, Composite, FractalSystem, LevelGraph, UnionFind};
use crate::network::{ResistorNetwork, VertexId};
use crate::par::Exec;

/// A partition J_1..J_s of the boundary labels, classes ordered by smallest label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoundaryRelation {
    pub classes: Vec<Vec<usize>>,
}

impl BoundaryRelation {
    /// `p1~p3` or `p1~p2,p3~p4~p5`; unlisted labels are singletons.
    pub fn parse(sys: &FractalSystem, text: &str) -> Result<Self> {
        let m = sys.label_count();
        let mut uf = UnionFind::new(m);
        let mut seen = vec![false; m];
        for group in text.split(',').map(str::trim).filter(|g| !g.is_empty()) {
            let members: Vec<usize> =
                group.split('~').map(|l| sys.label_index(l.trim())).collect::<Result<_>>()?;
            for &p in &members {
                if std::mem::replace(&mut seen[p], true) {
                    return arg(format!("label {} appears in two groups", sys.labels[p]));
                }
            }
            for w in members.windows(2) {
                uf.union(w[0], w[1]);
            }
        }
        Self::from_union_find(m, &mut uf)
    }

    pub fn from_classes(m: usize, classes: Vec<Vec<usize>>) -> Result<Self> {
        let mut uf = UnionFind::new(m);
        let mut seen = vec![false; m];
        for c in &classes {
            if c.is_empty() {
                return arg("empty class in relation");
            }
            for &p in c {
                if p >= m || std::mem::replace(&mut seen[p], true) {
                    return arg("relation classes must be disjoint labels");
                }
            }
            for w in c.windows(2) {
                uf.union(w[0], w[1]);
            }
        }
        Self::from_union_find(m, &mut uf)
    }

    pub fn identity(m: usize) -> Self {
        BoundaryRelation { classes: (0..m).map(|p| vec![p]).collect() }
    }

    fn from_union_find(m: usize, uf: &mut UnionFind) -> Result<Self> {
        let mut by_root: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for p in 0..m {
            by_root.entry(uf.find(p)).or_default().push(p);
        }
        let mut classes: Vec<Vec<usize>> = by_root.into_values().collect();
        classes.sort();
        if classes.len() < 2 {
            return arg("relation must leave at least two classes");
        }
        Ok(BoundaryRelation { classes })
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn class_of(&self, p: usize) -> usize {
        self.classes.iter().position(|c| c.contains(&p)).expect("relation covers all labels")
    }

    pub fn render(&self, sys: &FractalSystem) -> String {
        self.classes
            .iter()
            .map(|c| format!("{{{}}}", c.iter().map(|&p| sys.labels[p].as_str()).collect::<Vec<_>>().join(",")))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Partition of V_n generated by the embedding and self-similarity rules.
#[derive(Clone, Debug)]
pub struct InducedPartition {
    pub level: usize,
    class_of: Vec<u32>,
    class_count: usize,
    /// Level-n class of each boundary class J_a.
    boundary_class: Vec<u32>,
}

impl InducedPartition {
    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn class_of(&self, v: VertexId) -> usize {
        self.class_of[v.idx()] as usize
    }

    pub fn boundary_class(&self, a: usize) -> usize {
        self.boundary_class[a] as usize
    }

    pub fn is_boundary_class(&self, c: usize) -> bool {
        self.boundary_class.iter().any(|&b| b as usize == c)
    }

    pub fn members(&self) -> Vec<Vec<VertexId>> {
        let mut out = vec![Vec::new(); self.class_count];
        for (v, &c) in self.class_of.iter().enumerate() {
            out[c as usize].push(VertexId::from(v));
        }
        out
    }

    fn from_union_find(level: usize, uf: &mut UnionFind, n: usize, boundary_reps: &[usize]) -> Self {
        let mut id = vec![u32::MAX; n];
        let mut class_of = Vec::with_capacity(n);
        let mut next = 0u32;
        for v in 0..n {
            let r = uf.find(v);
            if id[r] == u32::MAX {
                id[r] = next;
                next += 1;
            }
            class_of.push(id[r]);
        }
        let boundary_class = boundary_reps.iter().map(|&b| class_of[b]).collect();
        InducedPartition { level, class_of, class_count: next as usize, boundary_class }
    }
}

/// Level graphs and induced partitions for levels 0..=n.
pub struct PartitionTower {
    pub graphs: Vec<LevelGraph>,
    pub parts: Vec<InducedPartition>,
}

pub fn induce_partitions(sys: &FractalSystem, rel: &BoundaryRelation, n: usize) -> PartitionTower {
    let graphs = LevelGraph::tower(sys, n);
    let m = sys.label_count();
    let reps0: Vec<usize> = rel.classes.iter().map(|c| c[0]).collect();
    let mut uf = UnionFind::new(m);
    for c in &rel.classes {
        for w in c.windows(2) {
            uf.union(w[0], w[1]);
        }
    }
    let mut parts = vec![InducedPartition::from_union_find(0, &mut uf, m, &reps0)];
    for k in 1..=n {
        let (prev_g, g) = (&graphs[k - 1], &graphs[k]);
        let prev = &parts[k - 1];
        let mut uf = UnionFind::new(g.vertex_count());
        let mut images = vec![prev_g.embedding_into(g, sys)];
        for i in 0..sys.map_count {
            images.push(prev_g.shift_into(g, i));
        }
        let members = prev.members();
        for img in &images {
            for cls in &members {
                for w in cls.windows(2) {
                    uf.union(img[w[0].idx()] as usize, img[w[1].idx()] as usize);
                }
            }
        }
        let reps: Vec<usize> = rel.classes.iter().map(|c| g.boundary()[c[0]].idx()).collect();
        parts.push(InducedPartition::from_union_find(k, &mut uf, g.vertex_count(), &reps));
    }
    PartitionTower { graphs, parts }
}

pub fn induce_partition(sys: &FractalSystem, rel: &BoundaryRelation, n: usize) -> (LevelGraph, InducedPartition) {
    let mut t = induce_partitions(sys, rel, n);
    (t.graphs.pop().expect("level n"), t.parts.pop().expect("level n"))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelVerdict {
    pub level: usize,
    pub compatible: bool,
    /// Two level-n vertices in different classes that merge at level n+1.
    pub violation: Option<(String, String)>,
}

/// Checks x ~_n y iff x ~_{n+1} y on V_n, for n < levels.
pub fn check_compatible(sys: &FractalSystem, rel: &BoundaryRelation, levels: usize) -> Vec<LevelVerdict> {
    let t = induce_partitions(sys, rel, levels);
    let mut out = Vec::new();
    for n in 0..levels {
        let emb = t.graphs[n].embedding_into(&t.graphs[n + 1], sys);
        let mut first: BTreeMap<usize, (usize, VertexId)> = BTreeMap::new();
        let mut violation = None;
        for x in 0..t.graphs[n].vertex_count() {
            let vx = VertexId::from(x);
            let here = t.parts[n].class_of(vx);
            let there = t.parts[n + 1].class_of(VertexId(emb[x]));
            match first.get(&there) {
                Some(&(c, y)) if c != here => {
                    violation = Some((t.graphs[n].canonical_name(sys, y), t.graphs[n].canonical_name(sys, vx)));
                    break;
                }
                Some(_) => {}
                None => {
                    first.insert(there, (here, vx));
                }
            }
        }
        out.push(LevelVerdict { level: n, compatible: violation.is_none(), violation });
    }
    out
}

/// Every 1-cell meets at most one boundary class of V_1.
pub fn check_property_b(sys: &FractalSystem, rel: &BoundaryRelation) -> bool {
    let (g, part) = induce_partition(sys, rel, 1);
    (0..sys.map_count).all(|i| {
        let hit: BTreeSet<usize> = g
            .cell_vertices(i)
            .iter()
            .map(|&v| part.class_of(VertexId(v)))
            .filter(|&c| part.is_boundary_class(c))
            .collect();
        hit.len() <= 1
    })
}

/// Classes become vertices; edges inside a class vanish, parallel edges add.
/// The boundary is the list of boundary classes J_1..J_s.
pub fn quotient_network<S: Scalar>(part: &InducedPartition, net: &ResistorNetwork<S>) -> Result<ResistorNetwork<S>> {
    if net.vertex_count() != part.class_of.len() {
        return arg("partition and network have different vertex sets");
    }
    let mut edges = Vec::new();
    for (a, b, c) in net.edges() {
        let (x, y) = (part.class_of(a), part.class_of(b));
        if x != y {
            edges.push((x, y, c.clone()));
        }
    }
    let boundary = part.boundary_class.iter().map(|&b| b as usize).collect();
    ResistorNetwork::new(part.class_count, edges, boundary)
}

/// Direct quotient trace: full level-n network, quotient, Schur onto J_1..J_s.
pub fn quotient_trace_direct<S: Scalar>(sys: &FractalSystem, rel: &BoundaryRelation, n: usize) -> Result<ResistorNetwork<S>> {
    let (g, part) = induce_partition(sys, rel, n);
    let net = g.network::<S>(sys, Exec::default());
    let q = quotient_network(&part, &net)?;
    q.trace_boundary()
}

/// Level-1 quotient gluing pattern: each cell carries a copy of the level-(n-1)
/// quotient trace between the classes of its corners.
pub fn quotient_composite(sys: &FractalSystem, rel: &BoundaryRelation) -> Composite {
    let (g, part) = induce_partition(sys, rel, 1);
    Composite {
        node_count: part.class_count(),
        cell_nodes: (0..sys.map_count)
            .map(|i| rel.classes.iter().map(|c| part.class_of(g.vertex(i, c[0]))).collect())
            .collect(),
        boundary_nodes: (0..rel.class_count()).map(|a| part.boundary_class(a)).collect(),
    }
}

/// Quotient traces for levels 0..=n through the level-1 recursion.
pub fn quotient_trace_sequence<S: Scalar>(sys: &FractalSystem, rel: &BoundaryRelation, n: usize) -> Result<Vec<ResistorNetwork<S>>> {
    let (g0, p0) = induce_partition(sys, rel, 0);
    let base = quotient_network(&p0, &g0.network::<S>(sys, Exec::Sequential))?.trace_boundary()?;
    quotient_composite(sys, rel).trace_sequence(base, n)
}

/// Branch resistance R(J_a, J_b) of a trace on the classes.
pub fn class_resistance<S: Scalar>(t: &ResistorNetwork<S>, a: usize, b: usize) -> Option<S> {
    t.resistance(VertexId::from(a), VertexId::from(b))
}

#[derive(Clone, Debug, PartialEq)]
pub struct NonBoundaryGenerator {
    pub class: usize,
    pub members: Vec<String>,
    /// (map k, class j) with F_k(J_j) inside the class.
    pub images: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryClassSystem {
    pub classes: Vec<Vec<usize>>,
    /// gamma[i][j] = maps k with F_k(J_j*) inside J_i*.
    pub gamma: Vec<Vec<Vec<usize>>>,
    pub t: Vec<Vec<u64>>,
    pub rho: f64,
    pub rho_exact: Option<Rational>,
    pub generators: Vec<NonBoundaryGenerator>,
}

fn gamma_at(
    tower: &PartitionTower,
    sys: &FractalSystem,
    rel: &BoundaryRelation,
    level: usize,
) -> Result<Vec<Vec<Vec<usize>>>> {
    let s = rel.class_count();
    let (prev_g, g) = (&tower.graphs[level - 1], &tower.graphs[level]);
    let (prev, part) = (&tower.parts[level - 1], &tower.parts[level]);
    let members = prev.members();
    let mut gamma = vec![vec![Vec::new(); s]; s];
    for k in 0..sys.map_count {
        let img = prev_g.shift_into(g, k);
        for j in 0..s {
            let cls = &members[prev.boundary_class(j)];
            let targets: BTreeSet<usize> = cls.iter().map(|v| part.class_of(VertexId(img[v.idx()]))).collect();
            if targets.len() != 1 {
                return Err(Error::InstableGds(format!(
                    "F_{}(J_{}) meets {} classes at level {level}",
                    k + 1,
                    j + 1,
                    targets.len()
                )));
            }
            let c = *targets.iter().next().expect("one target");
            if let Some(i) = (0..s).find(|&i| part.boundary_class(i) == c) {
                gamma[i][j].push(k);
            }
        }
    }
    Ok(gamma)
}

pub fn extract_gds(sys: &FractalSystem, rel: &BoundaryRelation) -> Result<BoundaryClassSystem> {
    let tower = induce_partitions(sys, rel, 2);
    if let Some(bad) = check_compatible(sys, rel, 2).into_iter().find(|v| !v.compatible) {
        return Err(Error::InstableGds(format!("relation is not compatible at level {}: {:?}", bad.level, bad.violation)));
    }
    let g1 = gamma_at(&tower, sys, rel, 1)?;
    let g2 = gamma_at(&tower, sys, rel, 2)?;
    if g1 != g2 {
        return Err(Error::InstableGds("edge sets from levels 1 and 2 differ".into()));
    }
    let t = g1.iter().map(|row| row.iter().map(|ks| ks.len() as u64).collect()).collect();
    // Non-boundary classes of V_1 and the level-0 class images they contain.
    let (g, part) = (&tower.graphs[1], &tower.parts[1]);
    let mut generators: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
    for k in 0..sys.map_count {
        for (j, cls) in rel.classes.iter().enumerate() {
            let c = part.class_of(g.vertex(k, cls[0]));
            if !part.is_boundary_class(c) {
                generators.entry(c).or_default().push((k, j));
            }
        }
    }
    let members = part.members();
    let generators = generators
        .into_iter()
        .map(|(c, images)| NonBoundaryGenerator {
            class: c,
            members: members[c].iter().map(|&v| g.canonical_name(sys, v)).collect(),
            images,
        })
        .collect();
    Ok(BoundaryClassSystem {
        classes: rel.classes.clone(),
        gamma: g1,
        t,
        rho: sys.rho.to_f64(),
        rho_exact: sys.rho.as_rational().cloned(),
        generators,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassDimension {
    pub lambda: f64,
    /// Bracket certified by Collatz-Wielandt bounds or polynomial sign change.
    pub lambda_bracket: (f64, f64),
    pub dim: f64,
    /// Exact rational dimension when lambda and 1/rho are powers of one integer.
    pub dim_exact: Option<Rational>,
    pub measure_finite: bool,
}

fn components(t: &[Vec<u64>]) -> Vec<usize> {
    let s = t.len();
    let mut reach = vec![vec![false; s]; s];
    for i in 0..s {
        reach[i][i] = true;
        for j in 0..s {
            if t[i][j] > 0 {
                reach[i][j] = true;
            }
        }
    }
    for k in 0..s {
        for i in 0..s {
            for j in 0..s {
                if reach[i][k] && reach[k][j] {
                    reach[i][j] = true;
                }
            }
        }
    }
    let mut comp = vec![usize::MAX; s];
    let mut next = 0;
    for i in 0..s {
        if comp[i] == usize::MAX {
            for j in 0..s {
                if reach[i][j] && reach[j][i] {
                    comp[j] = next;
                }
            }
            next += 1;
        }
    }
    comp
}

/// Perron root of a nonnegative integer matrix (assumed irreducible) with a
/// certified bracket.
pub fn perron_root(a: &[Vec<u64>]) -> (f64, f64, f64) {
    let s = a.len();
    if s == 0 {
        return (0.0, 0.0, 0.0);
    }
    if s == 1 {
        let v = a[0][0] as f64;
        return (v, v, v);
    }
    // Power iteration on A + I, which is primitive when A is irreducible.
    let mut x = vec![1.0f64; s];
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    for _ in 0..100_000 {
        let y: Vec<f64> = (0..s).map(|i| x[i] + (0..s).map(|j| a[i][j] as f64 * x[j]).sum::<f64>()).collect();
        let ratios: Vec<f64> = (0..s).map(|i| y[i] / x[i]).collect();
        lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
        hi = ratios.iter().cloned().fold(0.0, f64::max) - 1.0;
        let norm = y.iter().cloned().fold(0.0, f64::max);
        x = y.into_iter().map(|v| v / norm).collect();
        if hi - lo <= 1e-13 * hi.max(1.0) {
            break;
        }
    }
    let mid = 0.5 * (lo + hi);
    if s <= 4 {
        if let Some(r) = refine_by_charpoly(a, lo - 1e-9, hi + 1e-9) {
            return r;
        }
    }
    (mid, lo, hi)
}

fn charpoly(a: &[Vec<u64>]) -> Vec<Rational> {
    // Faddeev-LeVerrier: coefficients c_0 = 1, ..., c_s of det(tI - A).
    let s = a.len();
    let am: Vec<Vec<Rational>> = a.iter().map(|r| r.iter().map(|&v| Rational::from(v)).collect()).collect();
    let mut m = vec![vec![Rational::new(); s]; s];
    let mut coeffs = vec![Rational::from(1)];
    for k in 1..=s {
        // M_k = A M_{k-1} + c_{k-1} I
        let mut next = vec![vec![Rational::new(); s]; s];
        for i in 0..s {
            for j in 0..s {
                let mut acc = Rational::new();
                for l in 0..s {
                    acc += Rational::from(&am[i][l] * &m[l][j]);
                }
                if i == j {
                    acc += &coeffs[k - 1];
                }
                next[i][j] = acc;
            }
        }
        m = next;
        let mut tr = Rational::new();
        for i in 0..s {
            for l in 0..s {
                tr += Rational::from(&am[i][l] * &m[l][i]);
            }
        }
        coeffs.push(-tr / Rational::from(k as i64));
    }
    coeffs
}

fn eval_poly(c: &[Rational], t: &Rational) -> Rational {
    let mut acc = Rational::new();
    for coef in c {
        acc = acc * t + coef;
    }
    acc
}

fn refine_by_charpoly(a: &[Vec<u64>], lo: f64, hi: f64) -> Option<(f64, f64, f64)> {
    let c = charpoly(a);
    let mut l = Rational::from_f64(lo.max(0.0))?;
    let mut h = Rational::from_f64(hi)?;
    let rounded = Rational::from(((lo + hi) / 2.0).round() as i64);
    if eval_poly(&c, &rounded) == 0 {
        let v = rounded.to_f64();
        return Some((v, v, v));
    }
    let (mut fl, fh) = (eval_poly(&c, &l), eval_poly(&c, &h));
    if fl.cmp0() == fh.cmp0() {
        return None;
    }
    for _ in 0..110 {
        let mid = Rational::from(&l + &h) / 2;
        let fm = eval_poly(&c, &mid);
        if fm.cmp0() == std::cmp::Ordering::Equal {
            let v = mid.to_f64();
            return Some((v, v, v));
        }
        if fm.cmp0() == fl.cmp0() {
            l = mid;
            fl = fm;
        } else {
            h = mid;
        }
    }
    Some((Rational::from(&l + &h).to_f64() / 2.0, l.to_f64(), h.to_f64()))
}

fn exact_dim(lambda: f64, rho: Option<&Rational>) -> Option<Rational> {
    let rho = rho?;
    if *rho.numer() != 1 {
        return None;
    }
    let m = rho.denom().to_u64()?;
    let l = lambda.round();
    if (l - lambda).abs() > 0.0 || l < 1.0 {
        return None;
    }
    let l = l as u64;
    if l == 1 {
        return Some(Rational::new());
    }
    // lambda^b = M^a for small a, b.
    for b in 1..=6u32 {
        for a in 1..=12u32 {
            if rug::Integer::from(rug::Integer::u_pow_u(l as u32, b)) == rug::Integer::from(rug::Integer::u_pow_u(m as u32, a)) {
                return Some(Rational::from((a, b)));
            }
        }
    }
    None
}

/// Per-class growth rate, dimension and Hausdorff-measure flag.
pub fn perron_dimension(gds: &BoundaryClassSystem) -> Vec<ClassDimension> {
    let s = gds.t.len();
    let comp = components(&gds.t);
    let ncomp = comp.iter().copied().max().map_or(0, |c| c + 1);
    let mut roots = Vec::with_capacity(ncomp);
    for c in 0..ncomp {
        let idx: Vec<usize> = (0..s).filter(|&i| comp[i] == c).collect();
        let sub: Vec<Vec<u64>> = idx.iter().map(|&i| idx.iter().map(|&j| gds.t[i][j]).collect()).collect();
        roots.push(perron_root(&sub));
    }
    // Component DAG: c -> d when some class of c has an edge into d.
    let mut edge = vec![vec![false; ncomp]; ncomp];
    for i in 0..s {
        for j in 0..s {
            if gds.t[i][j] > 0 && comp[i] != comp[j] {
                edge[comp[i]][comp[j]] = true;
            }
        }
    }
    let log_rho = -gds.rho.ln();
    (0..s)
        .map(|i| {
            // Longest chain of components carrying the maximal reachable root.
            let c0 = comp[i];
            let mut reach = vec![false; ncomp];
            let mut stack = vec![c0];
            while let Some(c) = stack.pop() {
                if !std::mem::replace(&mut reach[c], true) {
                    stack.extend((0..ncomp).filter(|&d| edge[c][d]));
                }
            }
            let lambda = (0..ncomp).filter(|&c| reach[c]).map(|c| roots[c].0).fold(0.0, f64::max);
            let tops: Vec<usize> =
                (0..ncomp).filter(|&c| reach[c] && (roots[c].0 - lambda).abs() <= 1e-12 * lambda.max(1.0)).collect();
            let chained = tops.iter().any(|&a| {
                let mut seen = vec![false; ncomp];
                let mut st: Vec<usize> = (0..ncomp).filter(|&d| edge[a][d]).collect();
                while let Some(c) = st.pop() {
                    if !std::mem::replace(&mut seen[c], true) {
                        st.extend((0..ncomp).filter(|&d| edge[c][d]));
                    }
                }
                tops.iter().any(|&b| b != a && seen[b])
            });
            let top = tops.first().copied().unwrap_or(c0);
            let dim = if lambda > 1.0 { lambda.ln() / log_rho } else { 0.0 };
            ClassDimension {
                lambda,
                lambda_bracket: (roots[top].1, roots[top].2),
                dim,
                dim_exact: exact_dim(lambda, gds.rho_exact.as_ref()),
                measure_finite: !chained,
            }
        })
        .collect()
}

/// Σ over n-cells of (u(x) - u(y))² for pairs x, y of the cell inside class `class`.
pub fn class_energy(graph: &LevelGraph, part: &InducedPartition, u: &[f64], class: usize) -> Result<f64> {
    if class >= part.class_count() {
        return arg(format!("class {class} does not exist at level {}", part.level));
    }
    if u.len() != graph.vertex_count() {
        return arg("function must be total on V_n");
    }
    let mut e = 0.0;
    for c in 0..graph.cell_count() {
        let vs: Vec<u32> = graph.cell_vertices(c).iter().copied().filter(|&v| part.class_of(VertexId(v)) == class).collect();
        for a in 0..vs.len() {
            for b in a + 1..vs.len() {
                let d = u[vs[a] as usize] - u[vs[b] as usize];
                e += d * d;
            }
        }
    }
    Ok(e)
}

/// Planar position of every vertex of a level graph.
pub fn vertex_positions(sys: &FractalSystem, graph: &LevelGraph) -> Result<Vec<[f64; 2]>> {
    let geo = sys.geometry.as_ref().ok_or_else(|| Error::Argument(format!("{} has no geometry", sys.name)))?;
    let rho = sys.rho.to_f64();
    Ok((0..graph.vertex_count())
        .map(|x| {
            let (CellAddress(word), p) = graph.canonical(VertexId::from(x));
            let mut pt = geo.points[p];
            for &l in word.iter().rev() {
                let b = geo.fixed[l];
                pt = [rho * (pt[0] - b[0]) + b[0], rho * (pt[1] - b[1]) + b[1]];
            }
            pt
        })
        .collect())
}

#[derive(Clone, Debug)]
pub struct SegmentEnergyReport {
    /// R^n E_{J,n}(u) for n = 0..=n_max.
    pub weighted: Vec<f64>,
    pub bounded: bool,
}

/// Boundedness of R^n E_{J,n}(u) for u = profile(t) along a segment-type
/// boundary class J = {p, q}, t the position from p to q.
pub fn segment_energy_check(
    sys: &FractalSystem,
    rel: &BoundaryRelation,
    j: usize,
    r: f64,
    n_max: usize,
    profile: &dyn Fn(f64) -> f64,
) -> Result<SegmentEnergyReport> {
    let cls = rel.classes.get(j).ok_or_else(|| Error::Argument(format!("no boundary class J_{}", j + 1)))?;
    if cls.len() != 2 {
        return arg("the linear extension needs a two-point class");
    }
    if !(r > 1.0) {
        return arg("renormalization factor must exceed 1");
    }
    let tower = induce_partitions(sys, rel, n_max);
    let geo = sys.geometry.as_ref().ok_or_else(|| Error::Argument("segment extension needs geometry".into()))?;
    let (pa, pb) = (geo.points[cls[0]], geo.points[cls[1]]);
    let dir = [pb[0] - pa[0], pb[1] - pa[1]];
    let len2 = dir[0] * dir[0] + dir[1] * dir[1];
    let mut weighted = Vec::new();
    for n in 0..=n_max {
        let g = &tower.graphs[n];
        let part = &tower.parts[n];
        let class = part.boundary_class(j);
        let pos = vertex_positions(sys, g)?;
        let mut u = vec![0.0; g.vertex_count()];
        for (x, p) in pos.iter().enumerate() {
            if part.class_of(VertexId::from(x)) != class {
                continue;
            }
            let off = [p[0] - pa[0], p[1] - pa[1]];
            let cross = off[0] * dir[1] - off[1] * dir[0];
            if cross.abs() > 1e-9 * len2.sqrt() {
                return Err(Error::Argument(format!("class J_{} is not contained in a segment", j + 1)));
            }
            u[x] = profile((off[0] * dir[0] + off[1] * dir[1]) / len2);
        }
        weighted.push(r.powi(n as i32) * class_energy(g, part, &u, class)?);
    }
    Ok(SegmentEnergyReport { bounded: tail_bounded(&weighted), weighted })
}

/// Finite-horizon boundedness: the last half is non-increasing, or its
/// increments shrink geometrically.
pub(crate) fn tail_bounded(w: &[f64]) -> bool {
    if w.len() < 3 {
        return true;
    }
    let tail = &w[w.len() / 2..];
    let scale = w.iter().cloned().fold(0.0, f64::max).max(1e-300);
    if tail.windows(2).all(|p| p[1] <= p[0] + 1e-9 * scale) {
        return true;
    }
    let d: Vec<f64> = w.windows(2).map(|p| (p[1] - p[0]).abs()).collect();
    let dt = &d[d.len() / 2..];
    dt.windows(2).all(|p| p[1] <= 0.9 * p[0] + 1e-12 * scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fractal::builtin;

    #[test]
    fn gasket_partitions() {
        let g = builtin("sierpinski-gasket").unwrap();
        let rel = BoundaryRelation::parse(&g, "p1~p3").unwrap();
        let (_, p0) = induce_partition(&g, &rel, 0);
        assert_eq!(p0.class_count(), 2);
        let (g1, p1) = induce_partition(&g, &rel, 1);
        assert_eq!(p1.class_count(), 3);
        let mut sizes: Vec<usize> = p1.members().iter().map(Vec::len).collect();
        sizes.sort();
        assert_eq!(sizes, vec![1, 2, 3]);
        let j1 = p1.boundary_class(0);
        let names: BTreeSet<String> = p1.members()[j1].iter().map(|&v| g1.canonical_name(&g, v)).collect();
        assert!(names.contains("1/p1") && names.contains("3/p3"));
    }

    #[test]
    fn relation_parsing() {
        let p = builtin("pentagasket").unwrap();
        let r = BoundaryRelation::parse(&p, "p1~p2,p3~p4~p5").unwrap();
        assert_eq!(r.classes, vec![vec![0, 1], vec![2, 3, 4]]);
        assert!(BoundaryRelation::parse(&p, "p1~p9").is_err());
        assert!(BoundaryRelation::parse(&p, "p1~p2,p2~p3").is_err());
    }

    #[test]
    fn perron_small() {
        assert_eq!(perron_root(&[vec![2]]).0, 2.0);
        let (l, lo, hi) = perron_root(&[vec![1, 1], vec![1, 0]]);
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((l - phi).abs() < 1e-13 && lo <= phi + 1e-15 && hi >= phi - 1e-15);
    }
}
