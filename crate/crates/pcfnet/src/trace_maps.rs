//! Closed-form trace maps of the catalog fractals and their weighted forms,
//! exact forward iteration, inverse iteration and pairwise resistances.
//!
//! Vectors are in spoke form: the eyebolt cell is a 4-spoke star (a, b, c, d)
//! on p1..p4 and a sickle-family cell is a Y with spokes (a, b, c) on p1..p3.

use std::collections::BTreeMap;

use rug::Rational;

use crate::arith::{HpFloat, Scalar};
use crate::error::{arg, Error, Result};
use crate::fractal::{cell_tree_trace, FractalSystem};
use crate::par::Exec;
use crate::transforms::{x_to_box, y_to_delta, XPair, YTriple};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SickleVariant {
    Sickle,
    /// The K1 map in its published form.
    K1,
    /// The K1 map as the reconstructed lattice geometry produces it.
    K1Lattice,
    K2,
    K3,
}

impl SickleVariant {
    /// a' = p·a + q·c + φ_a and b' = r·a + s·b + t·c + φ_b; c' = c + φ_c always.
    fn coeffs(self) -> ([i64; 2], [i64; 3]) {
        match self {
            SickleVariant::Sickle => ([6, 5], [6, 8, 5]),
            SickleVariant::K1 => ([6, 5], [5, 6, 4]),
            SickleVariant::K1Lattice => ([6, 5], [4, 6, 5]),
            SickleVariant::K2 => ([5, 4], [4, 5, 4]),
            SickleVariant::K3 => ([4, 3], [2, 4, 3]),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TraceMap {
    Eyebolt,
    Sickle(SickleVariant),
    /// τ′ on the 9 diagonal cells, τ″ on the 12 branch cells.
    WeightedEyebolt { diagonal: Rational, branch: Rational },
    WeightedSickle { left: Rational, right: Rational, top: Rational },
}

impl TraceMap {
    pub fn for_fractal(name: &str) -> Option<TraceMap> {
        Some(match name {
            "eyebolt-vicsek" | "eyebolt" => TraceMap::Eyebolt,
            "sickle" => TraceMap::Sickle(SickleVariant::Sickle),
            "sickle-k1" => TraceMap::Sickle(SickleVariant::K1),
            "sickle-k2" => TraceMap::Sickle(SickleVariant::K2),
            "sickle-k3" => TraceMap::Sickle(SickleVariant::K3),
            _ => return None,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            TraceMap::Eyebolt | TraceMap::WeightedEyebolt { .. } => 4,
            _ => 3,
        }
    }

    pub fn is_eyebolt(&self) -> bool {
        self.dim() == 4
    }

    /// Spoke form of the unit-resistance template cell.
    pub fn unit_start<S: Scalar>(&self) -> Vec<S> {
        let m = self.dim();
        vec![S::from_ratio(1, m as i64); m]
    }

    /// Checked evaluation: every entry must be positive.
    pub fn apply<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>> {
        self.check_len(x)?;
        if let Some(i) = x.iter().position(|v| !v.is_positive()) {
            return arg(format!("entry {} of {:?} is not positive", i + 1, x.iter().map(Scalar::render).collect::<Vec<_>>()));
        }
        Ok(self.eval(x))
    }

    /// Evaluation on the closed cone; the zero vector maps to zero.
    pub fn apply_nonneg<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>> {
        self.check_len(x)?;
        if x.iter().any(|v| *v < S::zero()) {
            return arg("entries must be nonnegative");
        }
        Ok(self.eval(x))
    }

    fn check_len<S>(&self, x: &[S]) -> Result<()> {
        if x.len() != self.dim() {
            return arg(format!("map expects {} entries, got {}", self.dim(), x.len()));
        }
        Ok(())
    }

    fn eval<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        if x.iter().all(Scalar::is_zero) {
            return vec![S::zero(); x.len()];
        }
        let w = |q: &Rational| S::from_rational(q);
        match self {
            TraceMap::Eyebolt => {
                let [d, b] = eyebolt_parts(x);
                d.into_iter().zip(b).map(|(p, q)| p + &q).collect()
            }
            TraceMap::WeightedEyebolt { diagonal, branch } => {
                let [d, b] = eyebolt_parts(x);
                let (td, tb) = (w(diagonal), w(branch));
                d.into_iter().zip(b).map(|(p, q)| td.clone() * &p + &(tb.clone() * &q)).collect()
            }
            TraceMap::Sickle(v) => {
                let ([p, q], [r, s, t]) = v.coeffs();
                let [pa, pb, pc] = sickle_phis(x);
                let i = |k: i64| S::from_i64(k);
                let (a, b, c) = (&x[0], &x[1], &x[2]);
                vec![
                    i(p) * a + &(i(q) * c) + &pa,
                    i(r) * a + &(i(s) * b) + &(i(t) * c) + &pb,
                    c.clone() + &pc,
                ]
            }
            TraceMap::WeightedSickle { left, right, top } => {
                let [l, r, t] = sickle_parts(x);
                let (tl, tr, tt) = (w(left), w(right), w(top));
                (0..3).map(|k| tl.clone() * &l[k] + &(tr.clone() * &r[k]) + &(tt.clone() * &t[k])).collect()
            }
        }
    }
}

fn eyebolt_phi<S: Scalar>(x: &[S]) -> S {
    let (a, b, c, d) = (&x[0], &x[1], &x[2], &x[3]);
    let bd = b.clone() + d;
    let two = S::from_i64(2);
    let num = bd.clone() * &(two.clone() * a + &(two.clone() * c) + &bd);
    num / &(two * &(a.clone() + b + c + d))
}

/// Contributions of the diagonal and branch cell groups to the eyebolt trace;
/// the map with weights (τ′, τ″) is τ′·diagonal + τ″·branch.
pub fn eyebolt_parts<S: Scalar>(x: &[S]) -> [Vec<S>; 2] {
    let (a, b, c, d) = (&x[0], &x[1], &x[2], &x[3]);
    let i = |k: i64| S::from_i64(k);
    let phi = eyebolt_phi(x);
    let arm = i(3) * b + &(i(3) * d) + &phi;
    [
        vec![i(5) * a + &(i(4) * c), b.clone(), i(4) * a + &(i(5) * c), d.clone()],
        vec![S::zero(), arm.clone(), S::zero(), arm],
    ]
}

/// φ_a, φ_b, φ_c with φ_a = (a+b)(a+c) / (2(a+b+c)).
fn sickle_phis<S: Scalar>(x: &[S]) -> [S; 3] {
    let (a, b, c) = (&x[0], &x[1], &x[2]);
    let den = S::from_i64(2) * &(a.clone() + b + c);
    let ab = a.clone() + b;
    let bc = b.clone() + c;
    let ca = c.clone() + a;
    [ab.clone() * &ca / &den, ab * &bc / &den, ca * &bc / &den]
}

/// Contributions of the left, right and top cell groups to the sickle trace.
pub fn sickle_parts<S: Scalar>(x: &[S]) -> [Vec<S>; 3] {
    let (a, b, c) = (&x[0], &x[1], &x[2]);
    let i = |k: i64| S::from_i64(k);
    let [pa, pb, pc] = sickle_phis(x);
    [
        vec![i(5) * a + &(i(5) * c), S::zero(), S::zero()],
        vec![S::zero(), i(6) * a + &(i(7) * b) + &(i(5) * c), S::zero()],
        vec![a.clone() + &pa, b.clone() + &pb, c.clone() + &pc],
    ]
}

/// Exact solve of Σ_g τ_g·parts[g] = target. The system may be
/// overdetermined; it must be consistent with a unique solution.
pub fn solve_weights(parts: &[Vec<Rational>], target: &[Rational]) -> Result<Vec<Rational>> {
    let k = parts.len();
    let m = target.len();
    if parts.iter().any(|p| p.len() != m) {
        return arg("part vectors and target differ in length");
    }
    let mut rows: Vec<Vec<Rational>> = (0..m)
        .map(|r| {
            let mut row: Vec<Rational> = parts.iter().map(|p| p[r].clone()).collect();
            row.push(target[r].clone());
            row
        })
        .collect();
    let mut rank = 0;
    let mut pivots = Vec::new();
    for col in 0..k {
        let Some(p) = (rank..m).find(|&r| !rows[r][col].is_zero()) else { continue };
        rows.swap(rank, p);
        let piv = rows[rank][col].clone();
        for v in rows[rank].iter_mut() {
            *v /= &piv;
        }
        for r in 0..m {
            if r != rank && !rows[r][col].is_zero() {
                let f = rows[r][col].clone();
                for c in 0..=k {
                    let sub = Rational::from(&f * &rows[rank][c]);
                    rows[r][c] -= sub;
                }
            }
        }
        pivots.push(col);
        rank += 1;
    }
    if rows[rank..].iter().any(|r| !r[k].is_zero()) {
        return Err(Error::Constraint("weight equations are inconsistent".into()));
    }
    if rank < k {
        return Err(Error::Indeterminate("weight equations do not determine every group".into()));
    }
    let mut out = vec![Rational::new(); k];
    for (r, &c) in pivots.iter().enumerate() {
        out[c] = rows[r][k].clone();
    }
    Ok(out)
}

/// (τ′, τ″) making (1,1,1,1) a fixed point of the weighted eyebolt map.
pub fn eyebolt_fixed_weights() -> Result<(Rational, Rational)> {
    let x = vec![Rational::from(1); 4];
    let w = solve_weights(&eyebolt_parts(&x), &x)?;
    Ok((w[0].clone(), w[1].clone()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SickleWeights {
    pub left: Rational,
    pub right: Rational,
    pub top: Rational,
}

impl SickleWeights {
    pub fn map(&self) -> TraceMap {
        TraceMap::WeightedSickle { left: self.left.clone(), right: self.right.clone(), top: self.top.clone() }
    }

    /// Per-map weights in map order: 5 left, 3 top, 9 right.
    pub fn per_map(&self) -> Vec<Rational> {
        let mut v = vec![self.left.clone(); 5];
        v.extend(vec![self.top.clone(); 3]);
        v.extend(vec![self.right.clone(); 9]);
        v
    }
}

/// Weights making (k, k, 1) a fixed point of the weighted sickle map.
pub fn sickle_fixed_weights(k: &Rational) -> Result<SickleWeights> {
    if *k <= 1 {
        return arg("the fixed ray needs k > 1");
    }
    let x = vec![k.clone(), k.clone(), Rational::from(1)];
    let [l, r, t] = sickle_parts(&x);
    let w = solve_weights(&[l, r, t], &x)?;
    Ok(SickleWeights { left: w[0].clone(), right: w[1].clone(), top: w[2].clone() })
}

/// The closed-form weights as usually quoted, with Q = k²+6k+3:
/// τ_L = k(k−1)/(5Q), τ_T = 2(2k+1)/Q and τ_R = (k²−1)/((13k+5)Q).
/// The quoted τ_R lacks the factor k that the solved value carries.
pub fn quoted_sickle_weights(k: &Rational) -> SickleWeights {
    let one = Rational::from(1);
    let q = Rational::from(k * k) + Rational::from(6 * k) + 3;
    SickleWeights {
        left: (k * Rational::from(k - &one)) / (Rational::from(5) * &q),
        right: (Rational::from(k * k) - &one) / ((Rational::from(13 * k) + 5) * &q),
        top: (2 * (Rational::from(2 * k) + &one)) / q,
    }
}

/// Denominator-size guard for exact iteration.
#[derive(Clone, Copy, Debug)]
pub struct IterGuard {
    pub max_bits: u64,
}

impl Default for IterGuard {
    fn default() -> Self {
        IterGuard { max_bits: 1 << 25 }
    }
}

/// [x0, Φx0, …, Φⁿx0]. In exact mode the run stops with `ExactOverflow`
/// once an iterate needs more than `guard.max_bits` bits.
pub fn iterate<S: Scalar>(map: &TraceMap, x0: &[S], n: usize, guard: IterGuard) -> Result<Vec<Vec<S>>> {
    let mut out = Vec::with_capacity(n + 1);
    let mut x = x0.to_vec();
    map.apply(&x)?;
    out.push(x.clone());
    for step in 1..=n {
        x = map.apply(&x)?;
        if S::EXACT {
            let bits: u64 = x.iter().map(Scalar::bits).sum();
            if bits > guard.max_bits {
                return Err(Error::ExactOverflow { step, bits, limit: guard.max_bits });
            }
        }
        out.push(x.clone());
    }
    Ok(out)
}

/// Normalized orbit: returns Φⁿx0/|Φⁿx0|₁ and the growth factors
/// |Φᵏx0|₁ / |Φᵏ⁻¹x0|₁ for k = 1..=n.
pub fn normalized_orbit(map: &TraceMap, x0: &[HpFloat], n: usize) -> Result<(Vec<HpFloat>, Vec<HpFloat>)> {
    map.apply_nonneg(x0)?;
    let mut x = normalize(x0);
    let mut growth = Vec::with_capacity(n);
    for _ in 0..n {
        let y = map.apply_nonneg(&x)?;
        let s = l1(&y);
        growth.push(s.clone());
        x = y.into_iter().map(|v| v / &s).collect();
    }
    Ok((x, growth))
}

fn l1<S: Scalar>(x: &[S]) -> S {
    x.iter().fold(S::zero(), |a, v| a + v)
}

fn normalize<S: Scalar>(x: &[S]) -> Vec<S> {
    let s = l1(x);
    x.iter().map(|v| v.clone() / &s).collect()
}

/// Branch resistances R(p_i, p_j), 0-based labels with i < j.
pub type DeltaResistances<S> = BTreeMap<(usize, usize), S>;

/// Pairwise resistances of a spoke-form cell. Three spokes go through the
/// Y-Δ transform, symmetric four-spoke data through the X-box transform, and
/// any other star through the star-mesh formula R_ij = r_i r_j Σ_k 1/r_k.
pub fn delta_form<S: Scalar>(x: &[S]) -> Result<DeltaResistances<S>> {
    if x.iter().any(|v| !v.is_positive()) {
        return arg("spoke resistances must be positive");
    }
    let mut out = BTreeMap::new();
    match x.len() {
        3 => {
            let d = y_to_delta(&YTriple { a: x[0].clone(), b: x[1].clone(), c: x[2].clone() })?;
            out.insert((0, 1), d.r12);
            out.insert((1, 2), d.r23);
            out.insert((0, 2), d.r31);
        }
        4 if x[0] == x[2] && x[1] == x[3] => {
            let q = x_to_box(&XPair { a: x[0].clone(), b: x[1].clone() })?;
            for i in 0..4 {
                let j = (i + 1) % 4;
                out.insert((i.min(j), i.max(j)), q.x.clone());
            }
            out.insert((0, 2), q.y);
            out.insert((1, 3), q.z);
        }
        m if m >= 2 => {
            let g = x.iter().fold(S::zero(), |a, r| a + &(S::one() / r));
            for i in 0..m {
                for j in i + 1..m {
                    out.insert((i, j), x[i].clone() * &x[j] * &g);
                }
            }
        }
        _ => return arg("a star needs at least two spokes"),
    }
    Ok(out)
}

/// Pairwise resistances of the level-n trace onto V0, by Schur reduction.
pub fn level_resistances<S: Scalar>(sys: &FractalSystem, n: usize, exec: Exec) -> Result<DeltaResistances<S>> {
    let t: Vec<(usize, usize, S)> = sys.template_conductances();
    let tr = cell_tree_trace(sys, n, exec, |_| t.clone())?;
    let mut out = BTreeMap::new();
    for ((i, j), r) in tr.branch_resistances() {
        if let Some(r) = r {
            out.insert((i, j), r);
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InverseMethod {
    /// The target is an eigen-direction: x = y/λ.
    Eigen,
    /// Symmetric eyebolt data (s, t, s, t) through the quadratic for t.
    Quadratic,
    Newton,
}

#[derive(Clone, Debug)]
pub struct InverseRun {
    /// y_0, y_1, …, y_n with Φ(y_k) = y_{k−1}.
    pub steps: Vec<Vec<HpFloat>>,
    pub methods: Vec<InverseMethod>,
    /// max_i |Φⁿ(y_n) − y_0|_i / |y_0|_∞.
    pub residual: f64,
}

/// Solves Φ(y_k) = y_{k−1} for k = 1..=n.
pub fn inverse_iterate(map: &TraceMap, y0: &[HpFloat], n: usize) -> Result<InverseRun> {
    map.apply_nonneg(y0)?;
    if y0.iter().all(Scalar::is_zero) {
        return arg("target must be nonzero");
    }
    let mut steps = vec![y0.to_vec()];
    let mut methods = Vec::new();
    for k in 1..=n {
        let (x, how) = inverse_step(map, &steps[k - 1], k)?;
        steps.push(x);
        methods.push(how);
    }
    let mut fwd = steps[n].clone();
    for _ in 0..n {
        fwd = map.apply_nonneg(&fwd)?;
    }
    Ok(InverseRun { residual: sup_rel(&fwd, y0), steps, methods })
}

fn sup_rel(x: &[HpFloat], y: &[HpFloat]) -> f64 {
    let scale = y.iter().map(|v| v.abs()).fold(HpFloat::zero(), HpFloat::max_of);
    x.iter().zip(y).map(|(a, b)| ((a.clone() - b).abs() / &scale).to_f64()).fold(0.0, f64::max)
}

/// One inverse step; `step` only labels errors.
pub fn inverse_step(map: &TraceMap, y: &[HpFloat], step: usize) -> Result<(Vec<HpFloat>, InverseMethod)> {
    let z = map.apply_nonneg(y)?;
    let lam = l1(&z) / &l1(y);
    if sup_rel(&z.iter().map(|v| v.clone() / &lam).collect::<Vec<_>>(), y) < 1e-32 {
        return Ok((y.iter().map(|v| v.clone() / &lam).collect(), InverseMethod::Eigen));
    }
    if y.iter().any(|v| !v.is_positive()) {
        // Off the eigen-direction a boundary target is handled by the box search.
        return certify_or_fail(map, y, step);
    }
    if *map == TraceMap::Eyebolt && y[0] == y[2] && y[1] == y[3] {
        let s = y[0].clone() / &HpFloat::from_i64(9);
        let tp = &y[1];
        // 8t² + (9s − t′)t − t′s = 0, positive root in cancellation-free form.
        let bq = HpFloat::from_i64(9) * &s - tp;
        let c4 = HpFloat::from_i64(32) * tp * &s;
        let disc = (bq.square() + &c4).sqrt().expect("discriminant is positive");
        let t = if bq > HpFloat::zero() {
            HpFloat::from_i64(2) * tp * &s / &(bq + &disc)
        } else {
            (disc - &bq) / &HpFloat::from_i64(16)
        };
        return Ok((vec![s.clone(), t.clone(), s, t], InverseMethod::Quadratic));
    }
    if let Some(x) = newton(map, y, &y.iter().map(|v| v.clone() / &lam).collect::<Vec<_>>()) {
        return Ok((x, InverseMethod::Newton));
    }
    certify_or_fail(map, y, step)
}

fn certify_or_fail(map: &TraceMap, y: &[HpFloat], step: usize) -> Result<(Vec<HpFloat>, InverseMethod)> {
    let yf: Vec<f64> = y.iter().map(Scalar::to_f64).collect();
    match exclude_preimages(map, &yf, 200_000) {
        Some(boxes) => Err(Error::InfeasibleInverse {
            step,
            reason: format!("monotone box search excluded the whole nonnegative cone ({boxes} boxes)"),
        }),
        None => Err(Error::Indeterminate(format!(
            "inverse step {step}: Newton did not converge and the box search could not exclude a preimage"
        ))),
    }
}

/// Damped Newton with a central-difference Jacobian, staying in the open cone.
fn newton(map: &TraceMap, y: &[HpFloat], start: &[HpFloat]) -> Option<Vec<HpFloat>> {
    let m = y.len();
    let resid = |x: &[HpFloat]| -> Vec<HpFloat> { map.eval(x).into_iter().zip(y).map(|(a, b)| a - b).collect() };
    let norm = |r: &[HpFloat]| r.iter().map(|v| v.abs()).fold(HpFloat::zero(), HpFloat::max_of);
    let scale = norm(y);
    let mut x = start.to_vec();
    let mut r = resid(&x);
    for _ in 0..200 {
        if (norm(&r) / &scale).to_f64() < 1e-34 {
            return Some(x);
        }
        let mut jac = vec![vec![HpFloat::zero(); m]; m];
        for j in 0..m {
            let h = HpFloat::new(1e-18) * &x[j];
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] = xp[j].clone() + &h;
            xm[j] = xm[j].clone() - &h;
            let (fp, fm) = (map.eval(&xp), map.eval(&xm));
            for i in 0..m {
                jac[i][j] = (fp[i].clone() - &fm[i]) / &(HpFloat::from_i64(2) * &h);
            }
        }
        let rhs: Vec<HpFloat> = r.iter().map(|v| -v.clone()).collect();
        let dx = solve_dense(jac, rhs)?;
        let base = norm(&r);
        let mut t = HpFloat::one();
        let mut accepted = false;
        for _ in 0..60 {
            let cand: Vec<HpFloat> = x.iter().zip(&dx).map(|(a, d)| a.clone() + &(t.clone() * d)).collect();
            if cand.iter().all(Scalar::is_positive) {
                let rc = resid(&cand);
                if norm(&rc) < base {
                    x = cand;
                    r = rc;
                    accepted = true;
                    break;
                }
            }
            t = t / &HpFloat::from_i64(2);
        }
        if !accepted {
            return None;
        }
    }
    None
}

/// Gaussian elimination with partial pivoting; `None` when singular.
pub(crate) fn solve_dense<S: Scalar>(mut a: Vec<Vec<S>>, mut b: Vec<S>) -> Option<Vec<S>> {
    let n = b.len();
    for col in 0..n {
        let p = (col..n).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap_or(std::cmp::Ordering::Equal))?;
        if a[p][col].is_zero() {
            return None;
        }
        a.swap(col, p);
        b.swap(col, p);
        for r in col + 1..n {
            let f = a[r][col].clone() / &a[col][col];
            for c in col..n {
                let v = f.clone() * &a[col][c];
                a[r][c] = a[r][c].clone() - &v;
            }
            let v = f * &b[col];
            b[r] = b[r].clone() - &v;
        }
    }
    let mut x = vec![S::zero(); n];
    for r in (0..n).rev() {
        let mut s = b[r].clone();
        for c in r + 1..n {
            s = s - &(a[r][c].clone() * &x[c]);
        }
        x[r] = s / &a[r][r];
    }
    Some(x)
}

/// Branch-and-bound over boxes in the nonnegative cone. Φ is monotone, so a
/// box [lo, hi] can hold a preimage only if Φ(lo) ≤ y ≤ Φ(hi). Preimages also
/// satisfy x_i·Φ_j(e_i) ≤ y_j, which bounds the starting box. Returns the
/// number of boxes visited when every box is excluded.
pub fn exclude_preimages(map: &TraceMap, y: &[f64], budget: usize) -> Option<usize> {
    let m = y.len();
    let mut hi0 = vec![f64::INFINITY; m];
    for i in 0..m {
        let mut e = vec![0.0; m];
        e[i] = 1.0;
        let f = map.eval(&e);
        for j in 0..m {
            if f[j] > 0.0 {
                hi0[i] = hi0[i].min(y[j] / f[j]);
            }
        }
        if !hi0[i].is_finite() {
            return None;
        }
    }
    let slack = 1e-12;
    let diam0 = hi0.iter().cloned().fold(0.0, f64::max);
    let mut stack = vec![(vec![0.0; m], hi0)];
    let mut visited = 0;
    while let Some((lo, hi)) = stack.pop() {
        visited += 1;
        if visited > budget {
            return None;
        }
        let (flo, fhi) = (map.eval(&lo), map.eval(&hi));
        let excluded = (0..m).any(|j| flo[j] > y[j] * (1.0 + slack) + 1e-300 || fhi[j] < y[j] * (1.0 - slack));
        if excluded {
            continue;
        }
        let (k, w) = (0..m).map(|k| (k, hi[k] - lo[k])).fold((0, -1.0), |a, b| if b.1 > a.1 { b } else { a });
        if w < 1e-10 * diam0 {
            return None;
        }
        let mid = lo[k] + w / 2.0;
        let mut h1 = hi.clone();
        h1[k] = mid;
        let mut l2 = lo.clone();
        l2[k] = mid;
        stack.push((lo, h1));
        stack.push((l2, hi));
    }
    Some(visited)
}

#[derive(Clone, Debug)]
pub struct FixedDirection {
    /// Fixed point of the normalized map on the simplex.
    pub point: Vec<HpFloat>,
    /// Φ(point) = λ·point.
    pub lambda: HpFloat,
    /// max_i |Φ(point) − λ·point|_i.
    pub residual: f64,
    pub iterations: usize,
    pub restarts: usize,
}

/// Fixed direction of a three-spoke map in D_ε = {a+b+c = 1, a+c ≥ ε}:
/// normalized iteration, then Newton polishing. Iterates leaving D_ε are
/// pulled back toward the centre; repeated exits are reported.
pub fn brouwer_fixed_point(map: &TraceMap, eps: f64) -> Result<FixedDirection> {
    if map.dim() != 3 {
        return arg("the simplex iteration is defined for three-spoke maps");
    }
    if !(eps > 0.0 && eps <= 1.0 / 3.0) {
        return arg("ε must lie in (0, 1/3]");
    }
    let third = HpFloat::from_ratio(1, 3);
    let centre = vec![third.clone(), third.clone(), third];
    let mut p = centre.clone();
    let mut restarts = 0;
    let mut iterations = 0;
    let max_iter = 20_000;
    loop {
        let q = normalize(&map.eval(&p));
        iterations += 1;
        let outside = (q[0].clone() + &q[2]).to_f64() < eps;
        if outside {
            restarts += 1;
            if restarts > 8 {
                return Err(Error::Indeterminate(format!(
                    "normalized iterates keep leaving D_ε (ε = {eps}) toward the corner (0,1,0)"
                )));
            }
            let half = HpFloat::from_ratio(1, 2);
            p = p.iter().zip(&centre).map(|(a, c)| half.clone() * &(a.clone() + c)).collect();
            continue;
        }
        let change = sup_rel(&q, &p);
        p = q;
        if change < 1e-14 || iterations >= max_iter {
            break;
        }
    }
    // F(p) = (Φ(p) − (ΣΦ(p))·p)_{1,2} and Σp − 1.
    for _ in 0..20 {
        let f = |x: &[HpFloat]| -> Vec<HpFloat> {
            let z = map.eval(x);
            let s = l1(&z);
            vec![z[0].clone() - &(s.clone() * &x[0]), z[1].clone() - &(s * &x[1]), l1(x) - &HpFloat::one()]
        };
        let r = f(&p);
        if r.iter().all(|v| v.abs().to_f64() < 1e-36) {
            break;
        }
        let mut jac = vec![vec![HpFloat::zero(); 3]; 3];
        for j in 0..3 {
            let h = HpFloat::new(1e-18);
            let mut xp = p.clone();
            let mut xm = p.clone();
            xp[j] = xp[j].clone() + &h;
            xm[j] = xm[j].clone() - &h;
            let (fp, fm) = (f(&xp), f(&xm));
            for i in 0..3 {
                jac[i][j] = (fp[i].clone() - &fm[i]) / &(HpFloat::from_i64(2) * &h);
            }
        }
        let Some(dx) = solve_dense(jac, r.iter().map(|v| -v.clone()).collect()) else { break };
        p = p.iter().zip(&dx).map(|(a, d)| a.clone() + d).collect();
    }
    let z = map.eval(&p);
    let lambda = l1(&z) / &l1(&p);
    let residual = z.iter().zip(&p).map(|(a, b)| (a.clone() - &(lambda.clone() * b)).abs().to_f64()).fold(0.0, f64::max);
    for k in 0..3 {
        let mut e = vec![0.0; 3];
        e[k] = 1.0;
        let d = p.iter().zip(&e).map(|(a, b)| (a.to_f64() - b).abs()).fold(0.0, f64::max);
        if d < 1e-6 {
            return Err(Error::Indeterminate(format!("iteration settled on the corner e{}", k + 1)));
        }
    }
    if (p[0].clone() + &p[2]).to_f64() < eps {
        return Err(Error::Indeterminate(format!("fixed direction lies outside D_ε (ε = {eps})")));
    }
    Ok(FixedDirection { point: p, lambda, residual, iterations, restarts })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(p: i64, r: i64) -> Rational {
        Rational::from((p, r))
    }

    #[test]
    fn eyebolt_examples() {
        let e = TraceMap::Eyebolt;
        let one = vec![q(1, 1); 4];
        assert_eq!(e.apply(&one).unwrap(), vec![q(9, 1), q(17, 2), q(9, 1), q(17, 2)]);
        let two = vec![q(2, 1); 4];
        assert_eq!(e.apply(&two).unwrap(), vec![q(18, 1), q(17, 1), q(18, 1), q(17, 1)]);
        let seq = iterate(&e, &one, 2, IterGuard::default()).unwrap();
        assert_eq!(seq[2][1], q(2533, 35));
        assert!(e.apply(&[q(1, 1), q(0, 1), q(1, 1), q(1, 1)]).is_err());
    }

    #[test]
    fn sickle_examples() {
        let s = TraceMap::Sickle(SickleVariant::Sickle);
        assert_eq!(s.apply(&vec![q(1, 1); 3]).unwrap(), vec![q(35, 3), q(59, 3), q(5, 3)]);
        let y = s.apply_nonneg(&[q(0, 1), q(1, 1), q(0, 1)]).unwrap();
        assert_eq!(y, vec![q(0, 1), q(17, 2), q(0, 1)]);
    }

    #[test]
    fn weights_solve() {
        let (a, b) = eyebolt_fixed_weights().unwrap();
        assert_eq!((a.clone(), b.clone()), (q(1, 9), q(16, 135)));
        let m = TraceMap::WeightedEyebolt { diagonal: a, branch: b };
        assert_eq!(m.apply(&vec![q(1, 1); 4]).unwrap(), vec![q(1, 1); 4]);
        let w = sickle_fixed_weights(&q(2, 1)).unwrap();
        assert_eq!(w.top, q(10, 19));
        let quoted = quoted_sickle_weights(&q(2, 1));
        assert_eq!((quoted.left.clone(), quoted.top.clone()), (w.left.clone(), w.top.clone()));
        assert_eq!(w.right, Rational::from(2) * &quoted.right);
        assert!(solve_weights(&[vec![q(1, 1), q(1, 1)]], &[q(1, 1), q(2, 1)]).is_err());
    }

    #[test]
    fn inverse_examples() {
        let e = TraceMap::Eyebolt;
        let y0 = vec![HpFloat::one(); 4];
        let run = inverse_iterate(&e, &y0, 1).unwrap();
        let t1 = HpFloat::from_i64(2).sqrt().unwrap() / &HpFloat::from_i64(12);
        assert!(crate::arith::rel_diff(&run.steps[1][1], &t1) < 1e-30);
        assert!(crate::arith::rel_diff(&run.steps[1][0], &HpFloat::from_ratio(1, 9)) < 1e-35);
        assert_eq!(inverse_iterate(&e, &y0, 0).unwrap().steps.len(), 1);
        let s = TraceMap::Sickle(SickleVariant::Sickle);
        let third = vec![HpFloat::from_ratio(1, 3); 3];
        assert!(matches!(inverse_iterate(&s, &third, 1), Err(Error::InfeasibleInverse { step: 1, .. })));
        let axis = vec![HpFloat::zero(), HpFloat::one(), HpFloat::zero()];
        let run = inverse_iterate(&s, &axis, 3).unwrap();
        assert!(crate::arith::rel_diff(&run.steps[3][1], &HpFloat::from_ratio(8, 4913)) < 1e-35);
    }

    #[test]
    fn delta_examples() {
        let r0 = delta_form(&TraceMap::Eyebolt.unit_start::<Rational>()).unwrap();
        assert!(r0.values().all(|v| *v == 1));
        let x1: Vec<Rational> = TraceMap::Eyebolt.apply(&vec![q(1, 4); 4]).unwrap();
        let r1 = delta_form(&x1).unwrap();
        assert_eq!((r1[&(0, 1)].clone(), r1[&(0, 2)].clone(), r1[&(1, 3)].clone()), (q(35, 4), q(315, 34), q(595, 72)));
        let mut skew = x1.clone();
        skew[0] += 1;
        let general = delta_form(&skew).unwrap();
        let star = crate::transforms::star_network(&skew).unwrap().trace_boundary().unwrap();
        for ((i, j), r) in star.branch_resistances() {
            assert_eq!(general[&(i, j)], r.unwrap());
        }
    }

    #[test]
    fn brouwer_k1() {
        let fd = brouwer_fixed_point(&TraceMap::Sickle(SickleVariant::K1), 0.01).unwrap();
        assert!(fd.residual < 1e-12);
        assert!((fd.lambda.to_f64() - 6.957506061).abs() < 1e-8);
        assert!(brouwer_fixed_point(&TraceMap::Sickle(SickleVariant::Sickle), 0.01).is_err());
    }
}
