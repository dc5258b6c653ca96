//! Finite resistor networks, Schur-complement traces and harmonic extension.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::arith::Scalar;
use crate::error::{arg, Error, Result};

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub struct VertexId(pub u32);

impl VertexId {
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for VertexId {
    fn from(v: usize) -> Self {
        VertexId(v as u32)
    }
}

/// Values on a declared vertex set.
#[derive(Clone, Debug, PartialEq)]
pub struct FunctionOnVertices<S> {
    values: BTreeMap<VertexId, S>,
}

impl<S: Scalar> FunctionOnVertices<S> {
    pub fn new(domain: &[VertexId], values: Vec<S>) -> Result<Self> {
        if domain.len() != values.len() {
            return arg(format!(
                "function has {} values for {} vertices",
                values.len(),
                domain.len()
            ));
        }
        let values: BTreeMap<_, _> = domain.iter().copied().zip(values).collect();
        if values.len() != domain.len() {
            return arg("function domain lists a vertex twice");
        }
        Ok(FunctionOnVertices { values })
    }

    /// A function on the vertices `0..n`.
    pub fn dense(values: Vec<S>) -> Self {
        FunctionOnVertices {
            values: values.into_iter().enumerate().map(|(i, v)| (VertexId::from(i), v)).collect(),
        }
    }

    pub fn get(&self, v: VertexId) -> Option<&S> {
        self.values.get(&v)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn domain(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.values.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (VertexId, &S)> {
        self.values.iter().map(|(k, v)| (*k, v))
    }

    pub fn to_vec(&self) -> Vec<S> {
        self.values.values().cloned().collect()
    }
}

#[derive(Clone, Debug)]
pub enum Order {
    MinDegree,
    /// Vertices to eliminate first, in this order; whatever remains goes by minimum degree.
    Given(Vec<VertexId>),
}

/// Undirected network stored as conductances. Zero conductances are absent edges.
#[derive(Clone, Debug, PartialEq)]
pub struct ResistorNetwork<S> {
    adj: Vec<BTreeMap<u32, S>>,
    boundary: Vec<VertexId>,
    names: Vec<String>,
}

pub(crate) fn add_to<S: Scalar>(m: &mut BTreeMap<u32, S>, j: u32, x: S) {
    match m.get_mut(&j) {
        Some(c) => {
            let old = std::mem::replace(c, S::zero());
            *c = old + &x;
        }
        None => {
            m.insert(j, x);
        }
    }
}

impl<S: Scalar> ResistorNetwork<S> {
    /// Builds from conductance edges; parallel edges add.
    pub fn new(n: usize, edges: Vec<(usize, usize, S)>, boundary: Vec<usize>) -> Result<Self> {
        let net = Self::assemble(n, edges, boundary)?;
        net.check_connected()?;
        Ok(net)
    }

    /// Builds from resistance edges, `c = 1/r`.
    pub fn from_resistances(n: usize, edges: Vec<(usize, usize, S)>, boundary: Vec<usize>) -> Result<Self> {
        let mut conv = Vec::with_capacity(edges.len());
        for (a, b, r) in edges {
            if !r.is_positive() {
                return arg(format!("resistance between {a} and {b} is not positive"));
            }
            conv.push((a, b, S::one() / r));
        }
        Self::new(n, conv, boundary)
    }

    pub(crate) fn assemble(n: usize, edges: Vec<(usize, usize, S)>, boundary: Vec<usize>) -> Result<Self> {
        let mut adj: Vec<BTreeMap<u32, S>> = vec![BTreeMap::new(); n];
        for (a, b, c) in edges {
            if a >= n || b >= n {
                return arg(format!("edge ({a},{b}) outside {n} vertices"));
            }
            if a == b {
                return arg(format!("self-loop at vertex {a}"));
            }
            if !c.is_positive() {
                return arg(format!("conductance on ({a},{b}) is not positive"));
            }
            add_to(&mut adj[a], b as u32, c.clone());
            add_to(&mut adj[b], a as u32, c);
        }
        if boundary.is_empty() {
            return arg("boundary is empty");
        }
        let mut seen = vec![false; n];
        for &b in &boundary {
            if b >= n {
                return arg(format!("boundary vertex {b} outside {n} vertices"));
            }
            if std::mem::replace(&mut seen[b], true) {
                return arg(format!("boundary vertex {b} listed twice"));
            }
        }
        Ok(ResistorNetwork {
            adj,
            boundary: boundary.into_iter().map(VertexId::from).collect(),
            names: Vec::new(),
        })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Self {
        assert_eq!(names.len(), self.adj.len(), "one name per vertex");
        self.names = names;
        self
    }

    pub fn with_boundary(mut self, boundary: Vec<VertexId>) -> Result<Self> {
        if boundary.is_empty() || boundary.iter().any(|b| b.idx() >= self.adj.len()) {
            return arg("boundary must be a nonempty vertex subset");
        }
        self.boundary = boundary;
        Ok(self)
    }

    fn check_connected(&self) -> Result<()> {
        let n = self.adj.len();
        if n == 0 {
            return arg("network has no vertices");
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &w in self.adj[v].keys() {
                if !seen[w as usize] {
                    seen[w as usize] = true;
                    count += 1;
                    queue.push_back(w as usize);
                }
            }
        }
        if count != n {
            return Err(Error::Argument(format!(
                "network is disconnected ({count} of {n} vertices reachable)"
            )));
        }
        Ok(())
    }

    pub fn vertex_count(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(BTreeMap::len).sum::<usize>() / 2
    }

    pub fn boundary(&self) -> &[VertexId] {
        &self.boundary
    }

    pub fn vertices(&self) -> impl Iterator<Item = VertexId> {
        (0..self.adj.len()).map(VertexId::from)
    }

    pub fn name(&self, v: VertexId) -> String {
        self.names.get(v.idx()).cloned().unwrap_or_else(|| format!("v{}", v.0))
    }

    pub fn conductance(&self, a: VertexId, b: VertexId) -> Option<&S> {
        self.adj.get(a.idx())?.get(&b.0)
    }

    pub fn resistance(&self, a: VertexId, b: VertexId) -> Option<S> {
        self.conductance(a, b).map(|c| S::one() / c)
    }

    pub fn neighbors(&self, v: VertexId) -> impl Iterator<Item = (VertexId, &S)> {
        self.adj[v.idx()].iter().map(|(w, c)| (VertexId(*w), c))
    }

    /// Each undirected edge once, as (lower, higher, conductance).
    pub fn edges(&self) -> impl Iterator<Item = (VertexId, VertexId, &S)> {
        self.adj.iter().enumerate().flat_map(|(i, m)| {
            m.range((i as u32 + 1)..).map(move |(j, c)| (VertexId::from(i), VertexId(*j), c))
        })
    }

    fn check_subset(&self, keep: &[VertexId]) -> Result<Vec<bool>> {
        if keep.is_empty() {
            return arg("kept vertex set is empty");
        }
        let mut kept = vec![false; self.adj.len()];
        for k in keep {
            if k.idx() >= self.adj.len() {
                return arg(format!("kept vertex {} is not in the network", k.0));
            }
            if std::mem::replace(&mut kept[k.idx()], true) {
                return arg(format!("kept vertex {} listed twice", k.0));
            }
        }
        Ok(kept)
    }

    /// Schur complement onto `keep`, minimum-degree order. The result has vertices
    /// `0..keep.len()` in the order given, and boundary equal to all of them.
    pub fn schur_trace(&self, keep: &[VertexId]) -> Result<Self> {
        self.schur_trace_ordered(keep, &Order::MinDegree)
    }

    pub fn schur_trace_ordered(&self, keep: &[VertexId], order: &Order) -> Result<Self> {
        let kept = self.check_subset(keep)?;
        let mut el = Eliminator::new(self.adj.clone(), &kept);
        el.run(order, false);
        let mut pos = vec![u32::MAX; self.adj.len()];
        for (i, k) in keep.iter().enumerate() {
            pos[k.idx()] = i as u32;
        }
        let mut adj = vec![BTreeMap::new(); keep.len()];
        for (i, k) in keep.iter().enumerate() {
            for (j, c) in std::mem::take(&mut el.adj[k.idx()]) {
                adj[i].insert(pos[j as usize], c);
            }
        }
        let names = if self.names.is_empty() {
            Vec::new()
        } else {
            keep.iter().map(|k| self.names[k.idx()].clone()).collect()
        };
        Ok(ResistorNetwork {
            adj,
            boundary: (0..keep.len()).map(VertexId::from).collect(),
            names,
        })
    }

    /// Trace onto the declared boundary.
    pub fn trace_boundary(&self) -> Result<Self> {
        let b = self.boundary.clone();
        self.schur_trace(&b)
    }

    pub fn effective_resistance(&self, p: VertexId, q: VertexId) -> Result<S> {
        if p == q {
            return arg("effective resistance needs two distinct vertices");
        }
        let t = self.schur_trace(&[p, q])?;
        match t.conductance(VertexId(0), VertexId(1)) {
            Some(c) => Ok(S::one() / c),
            None => Err(Error::Argument("vertices are not connected".into())),
        }
    }

    /// Effective resistance for many pairs, evaluated independently.
    pub fn effective_resistances(&self, pairs: &[(VertexId, VertexId)], exec: crate::par::Exec) -> Result<Vec<S>> {
        crate::par::map(exec, pairs, |&(p, q)| self.effective_resistance(p, q))
            .into_iter()
            .collect()
    }

    /// Pairwise branch resistances `1/c` of this (small) network; `None` for absent edges.
    pub fn branch_resistances(&self) -> Vec<((usize, usize), Option<S>)> {
        let n = self.adj.len();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                out.push(((i, j), self.adj[i].get(&(j as u32)).map(|c| S::one() / c)));
            }
        }
        out
    }

    pub fn energy(&self, u: &FunctionOnVertices<S>) -> Result<S> {
        if u.len() != self.adj.len() || u.domain().any(|v| v.idx() >= self.adj.len()) {
            return arg("function is not total on the network vertices");
        }
        let vals = u.to_vec();
        Ok(self.energy_slice(&vals))
    }

    pub(crate) fn energy_slice(&self, vals: &[S]) -> S {
        let mut e = S::zero();
        for (a, b, c) in self.edges() {
            let d = vals[a.idx()].clone() - &vals[b.idx()];
            e = e + &(c.clone() * &d.square());
        }
        e
    }

    /// Minimum-energy extension of `g`, given in boundary order.
    pub fn harmonic_extension(&self, g: &FunctionOnVertices<S>) -> Result<Harmonic<S>> {
        let mut vals = Vec::with_capacity(self.boundary.len());
        for b in &self.boundary {
            match g.get(*b) {
                Some(v) => vals.push(v.clone()),
                None => return arg(format!("boundary value missing at vertex {}", b.0)),
            }
        }
        let b = self.boundary.clone();
        self.harmonic_on(&b, &vals)
    }

    pub(crate) fn harmonic_on(&self, fixed: &[VertexId], g: &[S]) -> Result<Harmonic<S>> {
        let kept = self.check_subset(fixed)?;
        let mut el = Eliminator::new(self.adj.clone(), &kept);
        el.run(&Order::MinDegree, true);
        let mut u: Vec<Option<S>> = vec![None; self.adj.len()];
        for (v, x) in fixed.iter().zip(g) {
            u[v.idx()] = Some(x.clone());
        }
        for (k, nb, d) in el.steps.iter().rev() {
            let mut s = S::zero();
            for (j, c) in nb {
                let uj = u[*j as usize].as_ref().expect("back substitution order");
                s = s + &(c.clone() * uj);
            }
            u[*k as usize] = Some(s / d);
        }
        let vals: Vec<S> = u.into_iter().map(|x| x.expect("every vertex solved")).collect();
        let residual = self.interior_residual(&kept, &vals);
        let energy = self.energy_slice(&vals);
        Ok(Harmonic { u: FunctionOnVertices::dense(vals), energy, residual })
    }

    /// Max over free vertices of |(L u)_v| relative to Σc·span(u).
    fn interior_residual(&self, fixed: &[bool], vals: &[S]) -> f64 {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in vals {
            let x = v.to_f64();
            lo = lo.min(x);
            hi = hi.max(x);
        }
        let span = (hi - lo).abs();
        let mut worst = 0.0f64;
        for (v, m) in self.adj.iter().enumerate() {
            if fixed[v] {
                continue;
            }
            let mut flux = S::zero();
            let mut total = S::zero();
            for (w, c) in m {
                flux = flux + &(c.clone() * &(vals[v].clone() - &vals[*w as usize]));
                total = total + c;
            }
            let scale = total.to_f64() * span;
            if scale > 0.0 {
                worst = worst.max((flux.abs().to_hp().to_f64()) / scale);
            }
        }
        worst
    }

    /// Relative disagreement between a computed trace and fluxes of harmonic
    /// extensions of unit data; the float-mode certificate for `schur_trace`.
    pub fn trace_residual(&self, keep: &[VertexId], traced: &Self) -> Result<f64> {
        let mut worst = 0.0f64;
        for (pi, _) in keep.iter().enumerate() {
            let g: Vec<S> = (0..keep.len()).map(|i| if i == pi { S::one() } else { S::zero() }).collect();
            let h = self.harmonic_on(keep, &g)?;
            worst = worst.max(h.residual);
            let vals = h.u.to_vec();
            for (qi, q) in keep.iter().enumerate() {
                if qi == pi {
                    continue;
                }
                let mut flux = S::zero();
                for (w, c) in &self.adj[q.idx()] {
                    flux = flux + &(c.clone() * &(vals[q.idx()].clone() - &vals[*w as usize]));
                }
                let want = match traced.conductance(VertexId::from(pi), VertexId::from(qi)) {
                    Some(c) => -c.clone(),
                    None => S::zero(),
                };
                let scale = traced.adj[pi].values().fold(S::zero(), |a, c| a + c).to_f64();
                let diff = (flux - &want).to_f64().abs();
                if scale > 0.0 {
                    worst = worst.max(diff / scale);
                }
            }
        }
        Ok(worst)
    }
}

#[derive(Clone, Debug)]
pub struct Harmonic<S> {
    pub u: FunctionOnVertices<S>,
    pub energy: S,
    /// Relative equilibrium residual at free vertices; exactly 0 in exact mode.
    pub residual: f64,
}

struct Eliminator<'a, S> {
    adj: Vec<BTreeMap<u32, S>>,
    kept: &'a [bool],
    gone: Vec<bool>,
    steps: Vec<(u32, Vec<(u32, S)>, S)>,
}

impl<'a, S: Scalar> Eliminator<'a, S> {
    fn new(adj: Vec<BTreeMap<u32, S>>, kept: &'a [bool]) -> Self {
        let n = adj.len();
        Eliminator { adj, kept, gone: vec![false; n], steps: Vec::new() }
    }

    fn run(&mut self, order: &Order, record: bool) {
        if let Order::Given(list) = order {
            for v in list {
                let k = v.0;
                if !self.kept[k as usize] && !self.gone[k as usize] {
                    self.eliminate(k, record);
                }
            }
        }
        let mut heap: BinaryHeap<Reverse<(usize, u32)>> = BinaryHeap::new();
        for v in 0..self.adj.len() {
            if !self.kept[v] && !self.gone[v] {
                heap.push(Reverse((self.adj[v].len(), v as u32)));
            }
        }
        while let Some(Reverse((deg, v))) = heap.pop() {
            if self.gone[v as usize] || self.adj[v as usize].len() != deg {
                continue;
            }
            let nbrs: Vec<u32> = self.adj[v as usize].keys().copied().collect();
            self.eliminate(v, record);
            for w in nbrs {
                if !self.kept[w as usize] && !self.gone[w as usize] {
                    heap.push(Reverse((self.adj[w as usize].len(), w)));
                }
            }
        }
    }

    fn eliminate(&mut self, k: u32, record: bool) {
        let row: Vec<(u32, S)> = std::mem::take(&mut self.adj[k as usize]).into_iter().collect();
        self.gone[k as usize] = true;
        let mut d = S::zero();
        for (j, c) in &row {
            d = d + c;
            self.adj[*j as usize].remove(&k);
        }
        assert!(d.is_positive(), "non-positive pivot at vertex {k}: network must be connected");
        let w: Vec<S> = row.iter().map(|(_, c)| c.clone() / &d).collect();
        for a in 0..row.len() {
            for b in a + 1..row.len() {
                let f = w[a].clone() * &row[b].1;
                let (i, j) = (row[a].0, row[b].0);
                add_to(&mut self.adj[i as usize], j, f.clone());
                add_to(&mut self.adj[j as usize], i, f);
            }
        }
        if record {
            self.steps.push((k, row, d));
        }
    }
}
