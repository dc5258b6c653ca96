//! Local network equivalences: Δ-Y, ⊠-X, series and parallel.
//!
//! Terminals are p1..p4 counterclockwise. In a box the diagonal `y` joins
//! p1p3 and `z` joins p2p4; an X pair puts spoke `a` on p1,p3 and `b` on p2,p4.

use crate::arith::{rel_diff, Scalar};
use crate::error::{arg, Error, Result};
use crate::network::ResistorNetwork;

#[derive(Clone, Debug, PartialEq)]
pub struct DeltaTriple<S> {
    pub r12: S,
    pub r23: S,
    pub r31: S,
}

#[derive(Clone, Debug, PartialEq)]
pub struct YTriple<S> {
    pub a: S,
    pub b: S,
    pub c: S,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoxQuad<S> {
    pub x: S,
    pub y: S,
    pub z: S,
}

#[derive(Clone, Debug, PartialEq)]
pub struct XPair<S> {
    pub a: S,
    pub b: S,
}

fn positive<S: Scalar>(vals: &[&S], what: &str) -> Result<()> {
    if vals.iter().all(|v| v.is_positive()) {
        Ok(())
    } else {
        arg(format!("{what} entries must be positive"))
    }
}

pub fn delta_to_y<S: Scalar>(d: &DeltaTriple<S>) -> Result<YTriple<S>> {
    positive(&[&d.r12, &d.r23, &d.r31], "delta")?;
    let r = d.r12.clone() + &d.r23 + &d.r31;
    Ok(YTriple {
        a: d.r12.clone() * &d.r31 / &r,
        b: d.r12.clone() * &d.r23 / &r,
        c: d.r23.clone() * &d.r31 / &r,
    })
}

pub fn y_to_delta<S: Scalar>(y: &YTriple<S>) -> Result<DeltaTriple<S>> {
    positive(&[&y.a, &y.b, &y.c], "Y")?;
    let r = y.a.clone() * &y.b + &(y.b.clone() * &y.c) + &(y.c.clone() * &y.a);
    Ok(DeltaTriple { r12: r.clone() / &y.c, r23: r.clone() / &y.a, r31: r / &y.b })
}

/// Requires `yz = x²`, exactly in exact mode and to 1e-20 relative otherwise.
pub fn box_to_x<S: Scalar>(q: &BoxQuad<S>) -> Result<XPair<S>> {
    positive(&[&q.x, &q.y, &q.z], "box")?;
    let lhs = q.y.clone() * &q.z;
    let rhs = q.x.square();
    let ok = if S::EXACT { lhs == rhs } else { rel_diff(&lhs, &rhs) < 1e-20 };
    if !ok {
        return Err(Error::Constraint(format!(
            "box ({}, {}, {}) has yz != x^2 and is not X-representable",
            q.x.render(),
            q.y.render(),
            q.z.render()
        )));
    }
    let two = S::from_i64(2);
    Ok(XPair {
        a: q.x.clone() * &q.y / &(two.clone() * &(q.x.clone() + &q.y)),
        b: q.x.clone() * &q.z / &(two * &(q.x.clone() + &q.z)),
    })
}

pub fn x_to_box<S: Scalar>(p: &XPair<S>) -> Result<BoxQuad<S>> {
    positive(&[&p.a, &p.b], "X")?;
    let two = S::from_i64(2);
    let sum = p.a.clone() + &p.b;
    Ok(BoxQuad {
        x: two.clone() * &sum,
        y: two.clone() * &p.a / &p.b * &sum,
        z: two * &p.b / &p.a * &sum,
    })
}

pub fn series<S: Scalar>(rs: &[S]) -> S {
    rs.iter().fold(S::zero(), |a, r| a + r)
}

pub fn parallel<S: Scalar>(rs: &[S]) -> Result<S> {
    positive(&rs.iter().collect::<Vec<_>>(), "parallel")?;
    let g = rs.iter().fold(S::zero(), |a, r| a + &(S::one() / r));
    Ok(S::one() / g)
}

/// Oracle networks: terminals are vertices 0.. in label order.
pub fn delta_network<S: Scalar>(d: &DeltaTriple<S>) -> Result<ResistorNetwork<S>> {
    ResistorNetwork::from_resistances(
        3,
        vec![(0, 1, d.r12.clone()), (1, 2, d.r23.clone()), (2, 0, d.r31.clone())],
        vec![0, 1, 2],
    )
}

pub fn y_network<S: Scalar>(y: &YTriple<S>) -> Result<ResistorNetwork<S>> {
    ResistorNetwork::from_resistances(
        4,
        vec![(3, 0, y.a.clone()), (3, 1, y.b.clone()), (3, 2, y.c.clone())],
        vec![0, 1, 2],
    )
}

pub fn box_network<S: Scalar>(q: &BoxQuad<S>) -> Result<ResistorNetwork<S>> {
    ResistorNetwork::from_resistances(
        4,
        vec![
            (0, 1, q.x.clone()),
            (1, 2, q.x.clone()),
            (2, 3, q.x.clone()),
            (3, 0, q.x.clone()),
            (0, 2, q.y.clone()),
            (1, 3, q.z.clone()),
        ],
        vec![0, 1, 2, 3],
    )
}

/// A star with spokes `xi[k]` to terminal k.
pub fn star_network<S: Scalar>(xi: &[S]) -> Result<ResistorNetwork<S>> {
    let m = xi.len();
    let edges = xi.iter().enumerate().map(|(k, r)| (m, k, r.clone())).collect();
    ResistorNetwork::from_resistances(m + 1, edges, (0..m).collect())
}

pub fn x_network<S: Scalar>(p: &XPair<S>) -> Result<ResistorNetwork<S>> {
    star_network(&[p.a.clone(), p.b.clone(), p.a.clone(), p.b.clone()])
}
