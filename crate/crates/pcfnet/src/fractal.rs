//! Combinatorial p.c.f. systems, the built-in catalog, and level-n graphs.

use std::collections::{BTreeMap, BTreeSet};

use rug::Rational;
use serde_json::{json, Value};

use crate::arith::{parse_rational, Ratio, Scalar};
use crate::error::{arg, Error, Result};
use crate::network::{ResistorNetwork, VertexId};
use crate::par::{self, Exec};

/// F_i(p) = F_j(q), with 0-based map and label indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Gluing {
    pub i: usize,
    pub p: usize,
    pub j: usize,
    pub q: usize,
}

/// Planar placement: label coordinates and the fixed point b_i of each map,
/// so that F_i(x) = rho (x - b_i) + b_i.
#[derive(Clone, Debug, PartialEq)]
pub struct Geometry {
    pub points: Vec<[f64; 2]>,
    pub fixed: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FractalSystem {
    pub name: String,
    pub map_count: usize,
    pub rho: Ratio,
    pub labels: Vec<String>,
    pub gluings: Vec<Gluing>,
    /// Per-cell edges (label, label, resistance).
    pub template: Vec<(usize, usize, Rational)>,
    /// For each label, the map that fixes it.
    pub fixed_points: Vec<usize>,
    pub geometry: Option<Geometry>,
    pub groups: BTreeMap<String, Vec<usize>>,
    pub relations: BTreeMap<String, String>,
}

pub const CATALOG: [&str; 9] = [
    "interval",
    "sierpinski-gasket",
    "vicsek",
    "eyebolt-vicsek",
    "sickle",
    "sickle-k1",
    "sickle-k2",
    "sickle-k3",
    "pentagasket",
];

/// Cell address: letters are 0-based internally and printed 1-based.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellAddress(pub Vec<usize>);

impl CellAddress {
    pub fn index(&self, n_maps: usize) -> usize {
        self.0.iter().fold(0, |acc, &l| acc * n_maps + l)
    }

    pub fn from_index(mut idx: usize, n_maps: usize, level: usize) -> Self {
        let mut w = vec![0; level];
        for k in (0..level).rev() {
            w[k] = idx % n_maps;
            idx /= n_maps;
        }
        CellAddress(w)
    }

    pub fn render(&self) -> String {
        self.0.iter().map(|l| (l + 1).to_string()).collect::<Vec<_>>().join(".")
    }
}

impl FractalSystem {
    pub fn label_count(&self) -> usize {
        self.labels.len()
    }

    pub fn label_index(&self, name: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == name)
            .ok_or_else(|| Error::Argument(format!("unknown boundary label `{name}` (labels: {})", self.labels.join(", "))))
    }

    /// log N / |log rho|.
    pub fn similarity_dimension(&self) -> f64 {
        (self.map_count as f64).ln() / -self.rho.to_f64().ln()
    }

    pub fn group(&self, name: &str) -> Result<&[usize]> {
        self.groups
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Argument(format!("{} has no cell group `{name}`", self.name)))
    }

    /// Full check of the structural invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.map_count;
        let m = self.labels.len();
        let bad = |s: String| Err(Error::Config(s));
        if n < 2 {
            return bad(format!("{}: need at least 2 maps", self.name));
        }
        if m < 2 {
            return bad(format!("{}: need at least 2 boundary labels", self.name));
        }
        let distinct: BTreeSet<_> = self.labels.iter().collect();
        if distinct.len() != m {
            return bad(format!("{}: duplicate boundary label", self.name));
        }
        let rho = self.rho.to_f64();
        if !(rho > 0.0 && rho < 1.0) {
            return bad(format!("{}: contraction ratio must lie in (0,1)", self.name));
        }
        if self.fixed_points.len() != m {
            return bad(format!("{}: need a fixing map for every boundary label", self.name));
        }
        for (p, &f) in self.fixed_points.iter().enumerate() {
            if f >= n {
                return bad(format!("{}: label {} fixed by map {} out of range", self.name, self.labels[p], f + 1));
            }
        }
        for g in &self.gluings {
            let rule = self.render_gluing(g);
            if g.i >= n || g.j >= n || g.p >= m || g.q >= m {
                return bad(format!("{}: gluing {rule} has an index out of range", self.name));
            }
            if g.i == g.j {
                return bad(format!("{}: gluing {rule} glues a cell to itself", self.name));
            }
        }
        // No cell may have two of its own corners identified.
        let mut uf = UnionFind::new(n * m);
        for g in &self.gluings {
            uf.union(g.i * m + g.p, g.j * m + g.q);
        }
        for g in &self.gluings {
            for side in [(g.i, g.p), (g.j, g.q)] {
                for other in 0..m {
                    if other != side.1 && uf.find(side.0 * m + other) == uf.find(side.0 * m + side.1) {
                        return bad(format!(
                            "{}: gluing {} is one-sided: its closure identifies ({},{}) with ({},{})",
                            self.name,
                            self.render_gluing(g),
                            side.0 + 1,
                            self.labels[side.1],
                            side.0 + 1,
                            self.labels[other]
                        ));
                    }
                }
            }
        }
        let mut class_size: BTreeMap<usize, usize> = BTreeMap::new();
        for e in 0..n * m {
            *class_size.entry(uf.find(e)).or_default() += 1;
        }
        let bound = n.max(8);
        if let Some((_, s)) = class_size.iter().find(|(_, s)| **s > bound) {
            return bad(format!("{}: a level-1 vertex lies in {s} cells, above the bound {bound}", self.name));
        }
        if self.template.is_empty() {
            return bad(format!("{}: empty cell template", self.name));
        }
        for (a, b, r) in &self.template {
            if *a >= m || *b >= m || a == b {
                return bad(format!("{}: template edge ({a},{b}) is not a pair of distinct labels", self.name));
            }
            if !r.is_positive() {
                return bad(format!("{}: template resistance must be positive", self.name));
            }
        }
        // Template must connect the labels, the cell graph must be connected.
        let mut t = UnionFind::new(m);
        for (a, b, _) in &self.template {
            t.union(*a, *b);
        }
        if (0..m).any(|p| t.find(p) != t.find(0)) {
            return bad(format!("{}: cell template does not connect all labels", self.name));
        }
        let mut c = UnionFind::new(n);
        for g in &self.gluings {
            c.union(g.i, g.j);
        }
        if (0..n).any(|i| c.find(i) != c.find(0)) {
            return bad(format!("{}: level-1 graph is disconnected", self.name));
        }
        if let Some(geo) = &self.geometry {
            self.check_geometry(geo)?;
        }
        for (name, rel) in &self.relations {
            crate::quotient::BoundaryRelation::parse(self, rel)
                .map_err(|e| Error::Config(format!("{}: relation `{name}`: {e}", self.name)))?;
        }
        for (name, cells) in &self.groups {
            if cells.iter().any(|&c| c >= n) {
                return bad(format!("{}: group `{name}` names a map out of range", self.name));
            }
        }
        Ok(())
    }

    pub fn render_gluing(&self, g: &Gluing) -> String {
        let lab = |p: usize| self.labels.get(p).cloned().unwrap_or_else(|| format!("#{}", p + 1));
        format!("[{}, {}, {}, {}]", g.i + 1, lab(g.p), g.j + 1, lab(g.q))
    }

    /// Level-1 positions F_i(p) for every (i, p).
    pub fn level1_points(&self, geo: &Geometry) -> Vec<[f64; 2]> {
        let rho = self.rho.to_f64();
        let m = self.labels.len();
        let mut out = Vec::with_capacity(self.map_count * m);
        for b in &geo.fixed {
            for p in &geo.points {
                out.push([rho * (p[0] - b[0]) + b[0], rho * (p[1] - b[1]) + b[1]]);
            }
        }
        out
    }

    fn check_geometry(&self, geo: &Geometry) -> Result<()> {
        let m = self.labels.len();
        if geo.points.len() != m || geo.fixed.len() != self.map_count {
            return Err(Error::Config(format!("{}: geometry needs {m} points and {} fixed points", self.name, self.map_count)));
        }
        let pts = self.level1_points(geo);
        let tol = 1e-9;
        let close = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).hypot(a[1] - b[1]) < tol;
        for g in &self.gluings {
            if !close(pts[g.i * m + g.p], pts[g.j * m + g.q]) {
                return Err(Error::Config(format!(
                    "{}: gluing {} is one-sided: the two points differ in the geometry",
                    self.name,
                    self.render_gluing(g)
                )));
            }
        }
        let mut uf = UnionFind::new(self.map_count * m);
        for g in &self.gluings {
            uf.union(g.i * m + g.p, g.j * m + g.q);
        }
        for a in 0..pts.len() {
            for b in a + 1..pts.len() {
                if close(pts[a], pts[b]) && uf.find(a) != uf.find(b) {
                    return Err(Error::Config(format!(
                        "{}: F_{}({}) and F_{}({}) coincide but no gluing identifies them",
                        self.name,
                        a / m + 1,
                        self.labels[a % m],
                        b / m + 1,
                        self.labels[b % m]
                    )));
                }
            }
        }
        for (p, &f) in self.fixed_points.iter().enumerate() {
            if !close(pts[f * m + p], geo.points[p]) {
                return Err(Error::Config(format!(
                    "{}: map {} does not fix label {} in the geometry",
                    self.name,
                    f + 1,
                    self.labels[p]
                )));
            }
        }
        Ok(())
    }

    /// Per-cell template as conductance edges.
    pub fn template_conductances<S: Scalar>(&self) -> Vec<(usize, usize, S)> {
        self.template.iter().map(|(a, b, r)| (*a, *b, S::from_rational(&(Rational::from(1) / r)))).collect()
    }

    /// The level-0 network: one cell carrying the template.
    pub fn template_network<S: Scalar>(&self) -> ResistorNetwork<S> {
        let m = self.labels.len();
        ResistorNetwork::new(m, self.template_conductances(), (0..m).collect())
            .expect("validated template")
            .with_names(self.labels.iter().map(|l| format!("/{l}")).collect())
    }

    pub fn to_json(&self) -> Value {
        let lab = |p: usize| Value::String(self.labels[p].clone());
        let mut doc = json!({
            "name": self.name,
            "map_count": self.map_count,
            "rho": self.rho.render(),
            "boundary": self.labels,
            "gluings": self.gluings.iter().map(|g| json!([g.i + 1, lab(g.p), g.j + 1, lab(g.q)])).collect::<Vec<_>>(),
            "template": self.template.iter().map(|(a, b, r)| json!([lab(*a), lab(*b), r.render()])).collect::<Vec<_>>(),
            "fixed_points": self.fixed_points.iter().enumerate().map(|(p, f)| json!([lab(p), f + 1])).collect::<Vec<_>>(),
        });
        if let Some(g) = &self.geometry {
            doc["geometry"] = json!({ "points": g.points, "fixed": g.fixed });
        }
        if !self.groups.is_empty() {
            let groups: BTreeMap<_, Vec<usize>> =
                self.groups.iter().map(|(k, v)| (k.clone(), v.iter().map(|c| c + 1).collect())).collect();
            doc["groups"] = json!(groups);
        }
        if !self.relations.is_empty() {
            doc["relations"] = json!(self.relations);
        }
        doc
    }
}

/// Parses a JSON fractal description and validates it.
pub fn load_fractal_spec(text: &str) -> Result<FractalSystem> {
    let doc: Value = serde_json::from_str(text).map_err(|e| Error::Config(format!("not valid JSON: {e}")))?;
    from_json(&doc)
}

fn exact_field(v: &Value, what: &str) -> Result<Rational> {
    match v {
        Value::String(s) => parse_rational(s),
        Value::Number(n) if n.is_i64() => Ok(Rational::from(n.as_i64().unwrap_or(0))),
        Value::Number(n) => Err(Error::Config(format!("{what}: {n} is a float; exact fields take \"p/q\" strings"))),
        other => Err(Error::Config(format!("{what}: expected a rational, got {other}"))),
    }
}

pub fn from_json(doc: &Value) -> Result<FractalSystem> {
    let cfg = |s: String| Error::Config(s);
    let obj = doc.as_object().ok_or_else(|| cfg("top level must be an object".into()))?;
    let known = ["name", "map_count", "rho", "boundary", "gluings", "template", "fixed_points", "geometry", "groups", "relations"];
    if let Some(k) = obj.keys().find(|k| !known.contains(&k.as_str())) {
        return Err(cfg(format!("unknown field `{k}`")));
    }
    let field = |k: &str| obj.get(k).ok_or_else(|| cfg(format!("missing field `{k}`")));
    let name = field("name")?.as_str().ok_or_else(|| cfg("`name` must be a string".into()))?.to_string();
    let map_count = field("map_count")?.as_u64().ok_or_else(|| cfg("`map_count` must be a positive integer".into()))? as usize;
    let rho = match field("rho")? {
        Value::String(s) => Ratio::parse(s)?,
        other => return Err(cfg(format!("`rho` must be a string like \"1/7\", got {other}"))),
    };
    let labels: Vec<String> = field("boundary")?
        .as_array()
        .ok_or_else(|| cfg("`boundary` must be a list of labels".into()))?
        .iter()
        .map(|v| v.as_str().map(str::to_string).ok_or_else(|| cfg("boundary labels must be strings".into())))
        .collect::<Result<_>>()?;
    let label = |v: &Value, ctx: &str| -> Result<usize> {
        match v {
            Value::String(s) => labels.iter().position(|l| l == s).ok_or_else(|| cfg(format!("{ctx}: unknown label `{s}`"))),
            Value::Number(n) => match n.as_u64() {
                Some(k) if k >= 1 && (k as usize) <= labels.len() => Ok(k as usize - 1),
                _ => Err(cfg(format!("{ctx}: label index {n} out of range"))),
            },
            other => Err(cfg(format!("{ctx}: bad label {other}"))),
        }
    };
    let map_index = |v: &Value, ctx: &str| -> Result<usize> {
        match v.as_u64() {
            Some(k) if k >= 1 && (k as usize) <= map_count => Ok(k as usize - 1),
            _ => Err(cfg(format!("{ctx}: map index {v} out of range 1..={map_count}"))),
        }
    };
    let mut gluings = Vec::new();
    for (k, g) in field("gluings")?.as_array().ok_or_else(|| cfg("`gluings` must be a list".into()))?.iter().enumerate() {
        let ctx = format!("gluing #{}", k + 1);
        let a = g.as_array().filter(|a| a.len() == 4).ok_or_else(|| cfg(format!("{ctx}: expected [i, p, j, q]")))?;
        gluings.push(Gluing { i: map_index(&a[0], &ctx)?, p: label(&a[1], &ctx)?, j: map_index(&a[2], &ctx)?, q: label(&a[3], &ctx)? });
    }
    let mut template = Vec::new();
    for (k, t) in field("template")?.as_array().ok_or_else(|| cfg("`template` must be a list".into()))?.iter().enumerate() {
        let ctx = format!("template edge #{}", k + 1);
        let a = t.as_array().filter(|a| a.len() == 3).ok_or_else(|| cfg(format!("{ctx}: expected [p, q, resistance]")))?;
        template.push((label(&a[0], &ctx)?, label(&a[1], &ctx)?, exact_field(&a[2], &ctx)?));
    }
    let geometry = match obj.get("geometry") {
        None | Some(Value::Null) => None,
        Some(g) => {
            let pts = |k: &str| -> Result<Vec<[f64; 2]>> {
                g.get(k)
                    .and_then(Value::as_array)
                    .ok_or_else(|| cfg(format!("geometry.{k} must be a list of [x, y]")))?
                    .iter()
                    .map(|p| {
                        let a = p.as_array().filter(|a| a.len() == 2).ok_or_else(|| cfg(format!("geometry.{k}: expected [x, y]")))?;
                        Ok([a[0].as_f64().unwrap_or(f64::NAN), a[1].as_f64().unwrap_or(f64::NAN)])
                    })
                    .collect()
            };
            Some(Geometry { points: pts("points")?, fixed: pts("fixed")? })
        }
    };
    let fixed_points = match obj.get("fixed_points") {
        Some(Value::Array(list)) => {
            let mut fp = vec![usize::MAX; labels.len()];
            for (k, e) in list.iter().enumerate() {
                let ctx = format!("fixed point #{}", k + 1);
                let a = e.as_array().filter(|a| a.len() == 2).ok_or_else(|| cfg(format!("{ctx}: expected [label, map]")))?;
                fp[label(&a[0], &ctx)?] = map_index(&a[1], &ctx)?;
            }
            if let Some(p) = fp.iter().position(|f| *f == usize::MAX) {
                return Err(cfg(format!("no fixing map given for label {}", labels[p])));
            }
            fp
        }
        Some(_) => return Err(cfg("`fixed_points` must be a list of [label, map]".into())),
        None => match &geometry {
            Some(geo) => derive_fixed_points(map_count, &rho, geo)?,
            None => return Err(cfg("`fixed_points` is required when no geometry is given".into())),
        },
    };
    let mut groups = BTreeMap::new();
    if let Some(g) = obj.get("groups") {
        for (k, v) in g.as_object().ok_or_else(|| cfg("`groups` must be an object".into()))? {
            let cells = v
                .as_array()
                .ok_or_else(|| cfg(format!("group `{k}` must be a list of maps")))?
                .iter()
                .map(|c| map_index(c, &format!("group `{k}`")))
                .collect::<Result<Vec<_>>>()?;
            groups.insert(k.clone(), cells);
        }
    }
    let mut relations = BTreeMap::new();
    if let Some(r) = obj.get("relations") {
        for (k, v) in r.as_object().ok_or_else(|| cfg("`relations` must be an object".into()))? {
            let s = v.as_str().ok_or_else(|| cfg(format!("relation `{k}` must be a string like \"p1~p3\"")))?;
            relations.insert(k.clone(), s.to_string());
        }
    }
    let sys = FractalSystem { name, map_count, rho, labels, gluings, template, fixed_points, geometry, groups, relations };
    sys.validate()?;
    Ok(sys)
}

fn derive_fixed_points(n: usize, rho: &Ratio, geo: &Geometry) -> Result<Vec<usize>> {
    let rho = rho.to_f64();
    let mut out = Vec::new();
    for (k, p) in geo.points.iter().enumerate() {
        let f = (0..n.min(geo.fixed.len())).find(|&i| {
            let b = geo.fixed[i];
            let img = [rho * (p[0] - b[0]) + b[0], rho * (p[1] - b[1]) + b[1]];
            (img[0] - p[0]).hypot(img[1] - p[1]) < 1e-9
        });
        match f {
            Some(i) => out.push(i),
            None => return Err(Error::Config(format!("no map fixes boundary point #{}", k + 1))),
        }
    }
    Ok(out)
}

pub fn builtin(name: &str) -> Result<FractalSystem> {
    let sys = match name {
        "interval" => interval(),
        "sierpinski-gasket" | "gasket" => lattice(
            "sierpinski-gasket",
            Lattice::Triangular,
            2,
            &[(0, 0), (1, 0), (0, 1)],
            &[],
            &[("p1~p3", "p1~p3")],
        ),
        "vicsek" => lattice("vicsek", Lattice::Square, 3, &[(0, 0), (2, 0), (2, 2), (0, 2), (1, 1)], &[], &[]),
        "eyebolt-vicsek" | "eyebolt" => eyebolt(),
        "sickle" => sickle_family("sickle", 7, 5, &[(6, 0), (5, 0), (4, 0), (3, 0), (2, 1), (2, 2), (3, 2), (3, 3), (2, 4)]),
        "sickle-k1" => sickle_family("sickle-k1", 7, 5, &[(6, 0), (5, 0), (4, 0), (3, 1), (3, 2), (3, 3), (2, 4)]),
        "sickle-k2" => sickle_family("sickle-k2", 6, 4, &[(5, 0), (4, 0), (3, 0), (2, 1), (2, 2), (2, 3)]),
        "sickle-k3" => sickle_family("sickle-k3", 5, 3, &[(4, 0), (3, 0), (2, 1), (2, 2)]),
        "pentagasket" => pentagasket(),
        _ => {
            return Err(Error::UnknownFractal { name: name.to_string(), catalog: CATALOG.join(", ") });
        }
    };
    debug_assert!(sys.validate().is_ok(), "catalog entry {name} fails validation");
    Ok(sys)
}

#[derive(Clone, Copy)]
enum Lattice {
    Square,
    Triangular,
}

fn complete_template(m: usize) -> Vec<(usize, usize, Rational)> {
    let mut t = Vec::new();
    for a in 0..m {
        for b in a + 1..m {
            t.push((a, b, Rational::from(1)));
        }
    }
    t
}

fn labels(m: usize) -> Vec<String> {
    (1..=m).map(|k| format!("p{k}")).collect()
}

/// Lattice fractal: cells of side 1 at integer offsets inside a big cell of side `side`.
/// Gluings and fixed points come from coincident corners.
fn lattice(
    name: &str,
    kind: Lattice,
    side: i64,
    cells: &[(i64, i64)],
    groups: &[(&str, Vec<usize>)],
    relations: &[(&str, &str)],
) -> FractalSystem {
    let corners: &[(i64, i64)] = match kind {
        Lattice::Triangular => &[(0, 0), (1, 0), (0, 1)],
        Lattice::Square => &[(0, 0), (1, 0), (1, 1), (0, 1)],
    };
    let m = corners.len();
    let pos = |c: usize, p: usize| (cells[c].0 + corners[p].0, cells[c].1 + corners[p].1);
    let mut gluings = Vec::new();
    for a in 0..cells.len() * m {
        for b in a + 1..cells.len() * m {
            if a / m != b / m && pos(a / m, a % m) == pos(b / m, b % m) {
                gluings.push(Gluing { i: a / m, p: a % m, j: b / m, q: b % m });
            }
        }
    }
    let fixed_points = (0..m)
        .map(|p| {
            (0..cells.len())
                .find(|&c| pos(c, p) == (side * corners[p].0, side * corners[p].1))
                .expect("every corner is fixed by a map")
        })
        .collect();
    let cart = |u: f64, v: f64| match kind {
        Lattice::Square => [u, v],
        Lattice::Triangular => [u + v / 2.0, v * 3f64.sqrt() / 2.0],
    };
    let s = side as f64;
    let geometry = Geometry {
        points: corners.iter().map(|&(u, v)| cart(u as f64, v as f64)).collect(),
        fixed: cells.iter().map(|&(u, v)| cart(u as f64 / (s - 1.0), v as f64 / (s - 1.0))).collect(),
    };
    FractalSystem {
        name: name.to_string(),
        map_count: cells.len(),
        rho: Ratio::rational(1, side),
        labels: labels(m),
        gluings,
        template: complete_template(m),
        fixed_points,
        geometry: Some(geometry),
        groups: groups.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
        relations: relations.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
    }
}

fn interval() -> FractalSystem {
    FractalSystem {
        name: "interval".into(),
        map_count: 2,
        rho: Ratio::rational(1, 2),
        labels: labels(2),
        gluings: vec![Gluing { i: 0, p: 1, j: 1, q: 0 }],
        template: complete_template(2),
        fixed_points: vec![0, 1],
        geometry: Some(Geometry { points: vec![[0.0, 0.0], [1.0, 0.0]], fixed: vec![[0.0, 0.0], [1.0, 0.0]] }),
        groups: BTreeMap::new(),
        relations: BTreeMap::new(),
    }
}

/// Maps 1-9 are the diagonal sub-squares from p1 to p3; 10-21 form the two
/// anti-diagonal arms (8 squares) and the four eyebolt rings.
fn eyebolt() -> FractalSystem {
    let mut cells: Vec<(i64, i64)> = (0..9).map(|i| (i, i)).collect();
    cells.extend([(5, 3), (6, 2), (7, 1), (8, 0), (3, 5), (2, 6), (1, 7), (0, 8), (6, 0), (5, 1), (2, 8), (3, 7)]);
    lattice(
        "eyebolt-vicsek",
        Lattice::Square,
        9,
        &cells,
        &[("diagonal", (0..9).collect()), ("branch", (9..21).collect())],
        &[("p2~p4", "p2~p4")],
    )
}

/// Left cells run up the p1p3 side, then X, Y, Z at the top, then the right chain from p2.
fn sickle_family(name: &str, side: i64, left: i64, right: &[(i64, i64)]) -> FractalSystem {
    let mut cells: Vec<(i64, i64)> = (0..left).map(|j| (0, j)).collect();
    cells.extend([(0, left), (1, left), (0, left + 1)]);
    cells.extend_from_slice(right);
    let l = left as usize;
    let groups = vec![
        ("left", (0..l).collect()),
        ("top", (l..l + 3).collect()),
        ("right", (l + 3..cells.len()).collect()),
    ];
    lattice(name, Lattice::Triangular, side, &cells, &groups, &[("p1~p3", "p1~p3")])
}

/// F_i fixes p_i; neighbouring cells meet at F_i(p_{i+2}) = F_{i+1}(p_{i-1}).
fn pentagasket() -> FractalSystem {
    let m = 5;
    let gluings = (0..m).map(|i| Gluing { i, p: (i + 2) % m, j: (i + 1) % m, q: (i + m - 1) % m }).collect();
    let points: Vec<[f64; 2]> = (0..m)
        .map(|k| {
            let t = std::f64::consts::FRAC_PI_2 + 2.0 * std::f64::consts::PI * k as f64 / m as f64;
            [t.cos(), t.sin()]
        })
        .collect();
    let relations = [("p1~p2,p3~p4~p5", "p1~p2,p3~p4~p5"), ("p2~p3~p4~p5", "p2~p3~p4~p5"), ("p4~p5", "p4~p5")];
    FractalSystem {
        name: "pentagasket".into(),
        map_count: 5,
        rho: Ratio::parse("(3-sqrt(5))/2").expect("literal surd"),
        labels: labels(m),
        gluings,
        template: complete_template(m),
        fixed_points: (0..m).collect(),
        geometry: Some(Geometry { fixed: points.clone(), points }),
        groups: BTreeMap::new(),
        relations: relations.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
    }
}

pub(crate) struct UnionFind {
    parent: Vec<u32>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind { parent: (0..n as u32).collect() }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] as usize != x {
            let g = self.parent[self.parent[x] as usize];
            self.parent[x] = g;
            x = g as usize;
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        // Smaller root wins, which keeps representatives deterministic.
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi] = lo as u32;
        true
    }
}

/// V_n with canonical vertex ids. Vertex ids are ordered by their
/// lexicographically smallest (word, label) incarnation.
#[derive(Clone, Debug)]
pub struct LevelGraph {
    pub level: usize,
    maps: usize,
    labels: usize,
    /// cell * labels + label -> vertex
    cell_vertex: Vec<u32>,
    rep: Vec<u64>,
    boundary: Vec<u32>,
}

impl LevelGraph {
    pub fn build(sys: &FractalSystem, n: usize) -> LevelGraph {
        let mut g = LevelGraph::level0(sys);
        for _ in 0..n {
            g = g.next(sys);
        }
        g
    }

    /// All levels 0..=n.
    pub fn tower(sys: &FractalSystem, n: usize) -> Vec<LevelGraph> {
        let mut out = vec![LevelGraph::level0(sys)];
        for _ in 0..n {
            let g = out.last().expect("nonempty").next(sys);
            out.push(g);
        }
        out
    }

    fn level0(sys: &FractalSystem) -> LevelGraph {
        let m = sys.label_count();
        LevelGraph {
            level: 0,
            maps: sys.map_count,
            labels: m,
            cell_vertex: (0..m as u32).collect(),
            rep: (0..m as u64).collect(),
            boundary: (0..m as u32).collect(),
        }
    }

    fn next(&self, sys: &FractalSystem) -> LevelGraph {
        let (n, m) = (self.maps, self.labels);
        let v = self.vertex_count();
        let cells = self.cell_count();
        let mut uf = UnionFind::new(n * v);
        for g in &sys.gluings {
            uf.union(g.i * v + self.boundary[g.p] as usize, g.j * v + self.boundary[g.q] as usize);
        }
        let mut id_of_root = vec![u32::MAX; n * v];
        let mut rep = Vec::new();
        let mut cell_vertex = Vec::with_capacity(n * cells * m);
        for i in 0..n {
            for (e, &x) in self.cell_vertex.iter().enumerate() {
                let root = uf.find(i * v + x as usize);
                if id_of_root[root] == u32::MAX {
                    id_of_root[root] = rep.len() as u32;
                    rep.push((i * cells * m + e) as u64);
                }
                cell_vertex.push(id_of_root[root]);
            }
        }
        let boundary = (0..m)
            .map(|p| {
                let f = sys.fixed_points[p];
                id_of_root[uf.find(f * v + self.boundary[p] as usize)]
            })
            .collect();
        LevelGraph { level: self.level + 1, maps: n, labels: m, cell_vertex, rep, boundary }
    }

    pub fn vertex_count(&self) -> usize {
        self.rep.len()
    }

    pub fn cell_count(&self) -> usize {
        self.cell_vertex.len() / self.labels
    }

    pub fn boundary(&self) -> Vec<VertexId> {
        self.boundary.iter().map(|&b| VertexId(b)).collect()
    }

    pub fn vertex(&self, cell: usize, label: usize) -> VertexId {
        VertexId(self.cell_vertex[cell * self.labels + label])
    }

    pub fn cell_vertices(&self, cell: usize) -> &[u32] {
        &self.cell_vertex[cell * self.labels..(cell + 1) * self.labels]
    }

    /// Canonical (smallest) incarnation of a vertex.
    pub fn canonical(&self, v: VertexId) -> (CellAddress, usize) {
        let e = self.rep[v.idx()] as usize;
        (CellAddress::from_index(e / self.labels, self.maps, self.level), e % self.labels)
    }

    pub fn canonical_name(&self, sys: &FractalSystem, v: VertexId) -> String {
        let (w, p) = self.canonical(v);
        format!("{}/{}", w.render(), sys.labels[p])
    }

    pub fn parse_name(&self, sys: &FractalSystem, name: &str) -> Result<VertexId> {
        let (w, l) = name.rsplit_once('/').ok_or_else(|| Error::Argument(format!("bad vertex id `{name}`")))?;
        let word: Vec<usize> = if w.is_empty() {
            Vec::new()
        } else {
            w.split('.')
                .map(|t| t.parse::<usize>().ok().filter(|&k| k >= 1 && k <= self.maps).map(|k| k - 1))
                .collect::<Option<_>>()
                .ok_or_else(|| Error::Argument(format!("bad cell word in `{name}`")))?
        };
        if word.len() != self.level {
            return arg(format!("vertex id `{name}` is not at level {}", self.level));
        }
        let p = sys.label_index(l)?;
        Ok(self.vertex(CellAddress(word).index(self.maps), p))
    }

    /// Every (cell, label) incarnation of every vertex.
    pub fn incarnations(&self) -> Vec<Vec<(usize, usize)>> {
        let mut out = vec![Vec::new(); self.vertex_count()];
        for (e, &x) in self.cell_vertex.iter().enumerate() {
            out[x as usize].push((e / self.labels, e % self.labels));
        }
        out
    }

    /// Image of each vertex of `self` (level n-1) under the inclusion V_{n-1} -> V_n.
    pub fn embedding_into(&self, next: &LevelGraph, sys: &FractalSystem) -> Vec<u32> {
        assert_eq!(next.level, self.level + 1);
        (0..self.vertex_count())
            .map(|x| {
                let e = self.rep[x] as usize;
                let (c, p) = (e / self.labels, e % self.labels);
                next.cell_vertex[(c * self.maps + sys.fixed_points[p]) * self.labels + p]
            })
            .collect()
    }

    /// Image of each vertex of `self` (level n-1) under F_i into level n.
    pub fn shift_into(&self, next: &LevelGraph, i: usize) -> Vec<u32> {
        assert_eq!(next.level, self.level + 1);
        let cells = self.cell_count();
        (0..self.vertex_count())
            .map(|x| {
                let e = self.rep[x] as usize;
                let (c, p) = (e / self.labels, e % self.labels);
                next.cell_vertex[(i * cells + c) * self.labels + p]
            })
            .collect()
    }

    /// Level at which each vertex first appears (boundary vertices: 0).
    pub fn creation_levels(&self, sys: &FractalSystem) -> Vec<usize> {
        let n = self.level;
        let mut out = vec![n; self.vertex_count()];
        for (e, &x) in self.cell_vertex.iter().enumerate() {
            let (c, p) = (e / self.labels, e % self.labels);
            let f = sys.fixed_points[p];
            let word = CellAddress::from_index(c, self.maps, n).0;
            let run = word.iter().rev().take_while(|&&l| l == f).count();
            out[x as usize] = out[x as usize].min(n - run);
        }
        out
    }

    /// Deepest-first elimination order: vertices by creation level descending,
    /// grouped by the enclosing cell one level up.
    pub fn hierarchical_order(&self, sys: &FractalSystem) -> Vec<VertexId> {
        let created = self.creation_levels(sys);
        let mut key: Vec<(usize, usize, u32)> = Vec::new();
        let mut first_cell = vec![usize::MAX; self.vertex_count()];
        for (e, &x) in self.cell_vertex.iter().enumerate() {
            let c = e / self.labels;
            if first_cell[x as usize] == usize::MAX {
                first_cell[x as usize] = c;
            }
        }
        for x in 0..self.vertex_count() {
            let k = created[x];
            if k == 0 {
                continue;
            }
            let depth = self.level - (k - 1);
            let parent = first_cell[x] / self.maps.pow(depth as u32);
            key.push((usize::MAX - k, parent, x as u32));
        }
        key.sort_unstable();
        key.into_iter().map(|(_, _, x)| VertexId(x)).collect()
    }

    /// The level-n network with the system template on each cell.
    pub fn network<S: Scalar>(&self, sys: &FractalSystem, exec: Exec) -> ResistorNetwork<S> {
        let t: Vec<(usize, usize, S)> = sys.template_conductances();
        self.network_with(sys, exec, |_| t.clone())
    }

    /// As `network`, with per-cell template conductances.
    pub fn network_with<S, F>(&self, sys: &FractalSystem, exec: Exec, cell_edges: F) -> ResistorNetwork<S>
    where
        S: Scalar,
        F: Fn(usize) -> Vec<(usize, usize, S)> + Sync + Send,
    {
        let cells = self.cell_count();
        let chunk = 4096usize;
        let chunks = cells.div_ceil(chunk);
        let parts = par::map_range(exec, chunks, |k| {
            let mut edges = Vec::new();
            for c in k * chunk..((k + 1) * chunk).min(cells) {
                let vs = self.cell_vertices(c);
                for (a, b, w) in cell_edges(c) {
                    edges.push((vs[a] as usize, vs[b] as usize, w));
                }
            }
            edges
        });
        let edges = parts.into_iter().flatten().collect();
        let boundary = self.boundary.iter().map(|&b| b as usize).collect();
        let names = (0..self.vertex_count()).map(|x| self.canonical_name(sys, VertexId(x as u32))).collect();
        ResistorNetwork::new(self.vertex_count(), edges, boundary)
            .expect("level graphs of a validated system are connected")
            .with_names(names)
    }
}

/// Glues one small network per level-1 cell and traces onto the outer boundary.
/// With a relation, nodes are level-1 classes instead of vertices.
#[derive(Clone, Debug)]
pub struct Composite {
    pub node_count: usize,
    /// cell -> terminal -> node
    pub cell_nodes: Vec<Vec<usize>>,
    pub boundary_nodes: Vec<usize>,
}

impl Composite {
    pub fn primal(sys: &FractalSystem) -> Composite {
        let g1 = LevelGraph::build(sys, 1);
        let m = sys.label_count();
        Composite {
            node_count: g1.vertex_count(),
            cell_nodes: (0..sys.map_count).map(|i| (0..m).map(|p| g1.vertex(i, p).idx()).collect()).collect(),
            boundary_nodes: g1.boundary.iter().map(|&b| b as usize).collect(),
        }
    }

    pub fn compose<S: Scalar>(&self, cell_nets: &[&ResistorNetwork<S>]) -> Result<ResistorNetwork<S>> {
        assert_eq!(cell_nets.len(), self.cell_nodes.len());
        let mut edges = Vec::new();
        for (i, net) in cell_nets.iter().enumerate() {
            for (a, b, c) in net.edges() {
                let (x, y) = (self.cell_nodes[i][a.idx()], self.cell_nodes[i][b.idx()]);
                if x != y {
                    edges.push((x, y, c.clone()));
                }
            }
        }
        let net = ResistorNetwork::new(self.node_count, edges, self.boundary_nodes.clone())?;
        let keep: Vec<VertexId> = self.boundary_nodes.iter().map(|&b| VertexId::from(b)).collect();
        net.schur_trace(&keep)
    }

    /// One renormalization step with identical cells.
    pub fn renormalize<S: Scalar>(&self, net: &ResistorNetwork<S>) -> Result<ResistorNetwork<S>> {
        let nets = vec![net; self.cell_nodes.len()];
        self.compose(&nets)
    }

    /// Trace networks for levels 0..=n by repeated renormalization.
    pub fn trace_sequence<S: Scalar>(&self, start: ResistorNetwork<S>, n: usize) -> Result<Vec<ResistorNetwork<S>>> {
        let mut out = vec![start];
        for _ in 0..n {
            let next = self.renormalize(out.last().expect("nonempty"))?;
            out.push(next);
        }
        Ok(out)
    }
}

/// Trace of the level-n network onto V_0 by reducing the cell tree bottom-up.
/// Each parent cell traces its children independently, so a level is one
/// data-parallel pass. Cells may carry different templates.
pub fn cell_tree_trace<S, F>(sys: &FractalSystem, n: usize, exec: Exec, cell_edges: F) -> Result<ResistorNetwork<S>>
where
    S: Scalar,
    F: Fn(usize) -> Vec<(usize, usize, S)> + Sync + Send,
{
    let m = sys.label_count();
    let comp = Composite::primal(sys);
    let cells = sys.map_count.pow(n as u32);
    let mut layer: Vec<ResistorNetwork<S>> = par::map_range(exec, cells, |c| {
        ResistorNetwork::new(m, cell_edges(c), (0..m).collect()).expect("cell template connects its labels")
    });
    for _ in 0..n {
        let parents = layer.len() / sys.map_count;
        let next = par::map_range(exec, parents, |p| {
            let kids: Vec<&ResistorNetwork<S>> = layer[p * sys.map_count..(p + 1) * sys.map_count].iter().collect();
            comp.compose(&kids)
        });
        layer = next.into_iter().collect::<Result<_>>()?;
    }
    Ok(layer.pop().expect("root cell"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_sizes() {
        let e = builtin("eyebolt-vicsek").unwrap();
        assert_eq!((e.map_count, e.label_count()), (21, 4));
        assert_eq!(e.rho, Ratio::rational(1, 9));
        let s = builtin("sickle").unwrap();
        assert_eq!((s.map_count, s.label_count()), (17, 3));
        assert_eq!(s.rho, Ratio::rational(1, 7));
        assert_eq!(builtin("sickle-k1").unwrap().map_count, 15);
        assert_eq!(builtin("interval").unwrap().map_count, 2);
        for name in CATALOG {
            builtin(name).unwrap().validate().unwrap();
        }
        assert!(matches!(builtin("koch"), Err(Error::UnknownFractal { .. })));
    }

    #[test]
    fn fixed_point_maps() {
        let s = builtin("sickle").unwrap();
        assert_eq!(s.fixed_points, vec![0, 8, 7]);
        let e = builtin("eyebolt-vicsek").unwrap();
        assert_eq!(e.fixed_points[0], 0);
        assert_eq!(e.fixed_points[2], 8);
    }

    #[test]
    fn small_level_counts() {
        let g = builtin("sierpinski-gasket").unwrap();
        let l1 = LevelGraph::build(&g, 1);
        assert_eq!(l1.vertex_count(), 6);
        assert_eq!(l1.network::<Rational>(&g, Exec::Sequential).edge_count(), 9);
        let e = builtin("eyebolt-vicsek").unwrap();
        let l0 = LevelGraph::build(&e, 0);
        assert_eq!(l0.network::<Rational>(&e, Exec::Sequential).edge_count(), 6);
        let l1 = LevelGraph::build(&e, 1);
        assert_eq!(l1.network::<Rational>(&e, Exec::Sequential).edge_count(), 126);
        let i = builtin("interval").unwrap();
        for n in 0..6 {
            assert_eq!(LevelGraph::build(&i, n).vertex_count(), (1 << n) + 1);
        }
    }

    #[test]
    fn canonical_names_round_trip() {
        let s = builtin("sickle").unwrap();
        let g = LevelGraph::build(&s, 2);
        for x in 0..g.vertex_count() {
            let v = VertexId(x as u32);
            let name = g.canonical_name(&s, v);
            assert_eq!(g.parse_name(&s, &name).unwrap(), v);
        }
    }
}
