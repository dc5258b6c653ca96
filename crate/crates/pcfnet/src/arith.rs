//! Scalar arithmetic: exact rationals (GMP), 128-bit MPFR floats, and plain f64.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;

use rug::ops::Pow;
use rug::{Float, Integer, Rational};

use crate::error::{Error, Result};

/// Working precision of float mode, in bits.
pub const PREC: u32 = 128;

/// Field operations shared by the exact and float back ends.
///
/// Generic code writes `a.clone() + &b`: rug's `&a + &b` yields lazy values,
/// so the owned-left form is the one every back end supports.
pub trait Scalar:
    Clone
    + fmt::Debug
    + PartialOrd
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + for<'a> Add<&'a Self, Output = Self>
    + for<'a> Sub<&'a Self, Output = Self>
    + for<'a> Mul<&'a Self, Output = Self>
    + for<'a> Div<&'a Self, Output = Self>
{
    const EXACT: bool;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_rational(q: &Rational) -> Self;
    fn from_i64(v: i64) -> Self;
    fn to_f64(&self) -> f64;
    fn to_hp(&self) -> HpFloat;
    fn is_zero(&self) -> bool;
    fn is_positive(&self) -> bool;
    /// `None` when the square root is not representable (irrational in exact mode).
    fn sqrt(&self) -> Option<Self>;
    /// `p/q` for rationals, a decimal string otherwise.
    fn render(&self) -> String;
    /// Size of the representation; 0 for fixed-size floats.
    fn bits(&self) -> u64 {
        0
    }

    fn abs(&self) -> Self {
        if self < &Self::zero() {
            -self.clone()
        } else {
            self.clone()
        }
    }
    fn from_ratio(p: i64, q: i64) -> Self {
        Self::from_rational(&Rational::from((p, q)))
    }
    fn square(&self) -> Self {
        self.clone() * self
    }
    fn max_of(a: Self, b: Self) -> Self {
        if a >= b {
            a
        } else {
            b
        }
    }
    fn min_of(a: Self, b: Self) -> Self {
        if a <= b {
            a
        } else {
            b
        }
    }
}

impl Scalar for Rational {
    const EXACT: bool = true;

    fn zero() -> Self {
        Rational::new()
    }
    fn one() -> Self {
        Rational::from(1)
    }
    fn from_rational(q: &Rational) -> Self {
        q.clone()
    }
    fn from_i64(v: i64) -> Self {
        Rational::from(v)
    }
    fn to_f64(&self) -> f64 {
        Rational::to_f64(self)
    }
    fn to_hp(&self) -> HpFloat {
        HpFloat(Float::with_val(PREC, self))
    }
    fn is_zero(&self) -> bool {
        self.cmp0() == Ordering::Equal
    }
    fn is_positive(&self) -> bool {
        self.cmp0() == Ordering::Greater
    }
    fn sqrt(&self) -> Option<Self> {
        if self.cmp0() == Ordering::Less {
            return None;
        }
        let (n, d) = self.clone().into_numer_denom();
        if n.is_perfect_square() && d.is_perfect_square() {
            Some(Rational::from((n.sqrt(), d.sqrt())))
        } else {
            None
        }
    }
    fn render(&self) -> String {
        if *self.denom() == 1 {
            self.numer().to_string()
        } else {
            format!("{}/{}", self.numer(), self.denom())
        }
    }
    fn bits(&self) -> u64 {
        u64::from(self.numer().significant_bits()) + u64::from(self.denom().significant_bits())
    }
}

/// An MPFR float at [`PREC`] bits with value semantics.
#[derive(Clone, PartialEq, PartialOrd)]
pub struct HpFloat(pub Float);

impl HpFloat {
    pub fn new(v: f64) -> Self {
        HpFloat(Float::with_val(PREC, v))
    }
    pub fn ln(&self) -> Self {
        HpFloat(Float::with_val(PREC, self.0.ln_ref()))
    }
    pub fn exp(&self) -> Self {
        HpFloat(Float::with_val(PREC, self.0.exp_ref()))
    }
    pub fn powf(&self, e: &HpFloat) -> Self {
        HpFloat(Float::with_val(PREC, (&self.0).pow(&e.0)))
    }
    pub fn powi(&self, e: i32) -> Self {
        HpFloat(Float::with_val(PREC, (&self.0).pow(e)))
    }
    pub fn is_finite(&self) -> bool {
        self.0.is_finite()
    }
}

impl fmt::Debug for HpFloat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.render())
    }
}

impl fmt::Display for HpFloat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.render())
    }
}

macro_rules! hp_binop {
    ($tr:ident, $m:ident) => {
        impl $tr for HpFloat {
            type Output = HpFloat;
            fn $m(self, rhs: HpFloat) -> HpFloat {
                HpFloat(Float::with_val(PREC, (&self.0).$m(&rhs.0)))
            }
        }
        impl<'a> $tr<&'a HpFloat> for HpFloat {
            type Output = HpFloat;
            fn $m(self, rhs: &'a HpFloat) -> HpFloat {
                HpFloat(Float::with_val(PREC, (&self.0).$m(&rhs.0)))
            }
        }
    };
}
hp_binop!(Add, add);
hp_binop!(Sub, sub);
hp_binop!(Mul, mul);
hp_binop!(Div, div);

impl Neg for HpFloat {
    type Output = HpFloat;
    fn neg(self) -> HpFloat {
        HpFloat(-self.0)
    }
}

impl Scalar for HpFloat {
    const EXACT: bool = false;

    fn zero() -> Self {
        HpFloat(Float::new(PREC))
    }
    fn one() -> Self {
        HpFloat(Float::with_val(PREC, 1))
    }
    fn from_rational(q: &Rational) -> Self {
        HpFloat(Float::with_val(PREC, q))
    }
    fn from_i64(v: i64) -> Self {
        HpFloat(Float::with_val(PREC, v))
    }
    fn to_f64(&self) -> f64 {
        self.0.to_f64()
    }
    fn to_hp(&self) -> HpFloat {
        self.clone()
    }
    fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
    fn is_positive(&self) -> bool {
        self.0.is_sign_positive() && !self.0.is_zero()
    }
    fn sqrt(&self) -> Option<Self> {
        if self.0.is_sign_negative() && !self.0.is_zero() {
            None
        } else {
            Some(HpFloat(Float::with_val(PREC, self.0.sqrt_ref())))
        }
    }
    fn render(&self) -> String {
        // 30 significant digits is below the 128-bit resolution.
        let s = self.0.to_string_radix(10, Some(30));
        tidy_float(&s)
    }
}

fn tidy_float(s: &str) -> String {
    match s.parse::<f64>() {
        Ok(v) if v != 0.0 && (v.abs() >= 1e15 || v.abs() < 1e-6) => s.to_string(),
        _ => {
            let (mant, exp) = match s.split_once('e') {
                Some((m, e)) => (m.to_string(), e.parse::<i32>().unwrap_or(0)),
                None => (s.to_string(), 0),
            };
            // Shift the decimal point by hand so the string stays exact.
            let neg = mant.starts_with('-');
            let body = mant.trim_start_matches('-');
            let (ip, fp) = body.split_once('.').unwrap_or((body, ""));
            let mut digits: String = format!("{ip}{fp}");
            let mut point = ip.len() as i32 + exp;
            if point <= 0 {
                digits = format!("{}{}", "0".repeat((1 - point) as usize), digits);
                point = 1;
            }
            while (digits.len() as i32) < point {
                digits.push('0');
            }
            let (a, b) = digits.split_at(point as usize);
            let b = b.trim_end_matches('0');
            let sign = if neg { "-" } else { "" };
            if b.is_empty() {
                format!("{sign}{a}")
            } else {
                format!("{sign}{a}.{b}")
            }
        }
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_rational(q: &Rational) -> Self {
        q.to_f64()
    }
    fn from_i64(v: i64) -> Self {
        v as f64
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn to_hp(&self) -> HpFloat {
        HpFloat::new(*self)
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn is_positive(&self) -> bool {
        *self > 0.0
    }
    fn sqrt(&self) -> Option<Self> {
        if *self < 0.0 {
            None
        } else {
            Some(f64::sqrt(*self))
        }
    }
    fn render(&self) -> String {
        format!("{self}")
    }
}

/// Relative difference |a-b| / max(|a|,|b|), computed at float precision.
pub fn rel_diff<S: Scalar>(a: &S, b: &S) -> f64 {
    let (a, b) = (a.to_hp(), b.to_hp());
    let d = (a.clone() - &b).abs();
    let m = HpFloat::max_of(a.abs(), b.abs());
    if m.is_zero() {
        0.0
    } else {
        (d / m).to_f64()
    }
}

/// Parses `p/q` or an integer, refusing decimals and exponents.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let t = s.trim();
    if t.is_empty() || t.contains(['.', 'e', 'E']) {
        return Err(Error::Config(format!(
            "`{s}` is not an exact rational; write it as p/q"
        )));
    }
    let mut parts = t.splitn(2, '/');
    let num = parts.next().unwrap_or("").trim();
    let den = parts.next().map(str::trim);
    let n = Integer::from_str(num).map_err(|_| Error::Config(format!("bad numerator in `{s}`")))?;
    let d = match den {
        Some(d) => Integer::from_str(d).map_err(|_| Error::Config(format!("bad denominator in `{s}`")))?,
        None => Integer::from(1),
    };
    if d == 0 {
        return Err(Error::Config(format!("zero denominator in `{s}`")));
    }
    Ok(Rational::from((n, d)))
}

/// Contraction ratio: a rational, or a quadratic surd `a + b*sqrt(d)`.
#[derive(Clone, Debug, PartialEq)]
pub enum Ratio {
    Rational(Rational),
    Surd { a: Rational, b: Rational, d: u32 },
}

impl Ratio {
    pub fn rational(p: i64, q: i64) -> Self {
        Ratio::Rational(Rational::from((p, q)))
    }

    /// Accepts `p/q`, `(x+y*sqrt(d))/z`, `x-sqrt(d)` and similar forms.
    pub fn parse(s: &str) -> Result<Self> {
        let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if !t.contains("sqrt") {
            return Ok(Ratio::Rational(parse_rational(&t)?));
        }
        let bad = || Error::Config(format!("cannot parse surd `{s}`"));
        let (body, denom) = match t.rsplit_once(")/") {
            Some((b, z)) if b.starts_with('(') => (b[1..].to_string(), parse_rational(z)?),
            _ => (t.clone(), Rational::from(1)),
        };
        let at = body.find("sqrt(").ok_or_else(bad)?;
        let close = body[at..].find(')').ok_or_else(bad)? + at;
        let d: u32 = body[at + 5..close].parse().map_err(|_| bad())?;
        let head = &body[..at];
        // head is "<x><sign>[<y>*]" with x possibly empty.
        let head = head.strip_suffix('*').unwrap_or(head);
        let split = head
            .char_indices()
            .skip(1)
            .filter(|(_, c)| *c == '+' || *c == '-')
            .map(|(i, _)| i)
            .last();
        let (x, ycoef) = match split {
            Some(i) => (&head[..i], &head[i..]),
            None if head.starts_with(['+', '-']) || head.is_empty() => ("", head),
            None => ("", head),
        };
        let x = if x.is_empty() { Rational::new() } else { parse_rational(x)? };
        let y = match ycoef {
            "" | "+" => Rational::from(1),
            "-" => Rational::from(-1),
            c => parse_rational(c.trim_start_matches('+'))?,
        };
        if !body[close + 1..].is_empty() {
            return Err(bad());
        }
        let r = Ratio::Surd { a: x / &denom, b: y / &denom, d };
        let v = r.to_f64();
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::Config(format!("contraction ratio `{s}` = {v} is not in (0,1)")));
        }
        Ok(r)
    }

    pub fn to_hp(&self) -> HpFloat {
        match self {
            Ratio::Rational(q) => q.to_hp(),
            Ratio::Surd { a, b, d } => {
                let root = HpFloat(Float::with_val(PREC, *d).sqrt());
                a.to_hp() + &(b.to_hp() * &root)
            }
        }
    }

    pub fn to_f64(&self) -> f64 {
        self.to_hp().to_f64()
    }

    pub fn as_rational(&self) -> Option<&Rational> {
        match self {
            Ratio::Rational(q) => Some(q),
            Ratio::Surd { .. } => None,
        }
    }

    pub fn render(&self) -> String {
        match self {
            Ratio::Rational(q) => q.render(),
            Ratio::Surd { a, b, d } => {
                let sign = if b.cmp0() == Ordering::Less { "-" } else { "+" };
                format!("{}{}{}*sqrt({})", a.render(), sign, b.clone().abs().render(), d)
            }
        }
    }
}
