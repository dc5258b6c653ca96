//! Electrical-network traces, renormalization maps, quotient networks and
//! Besov critical exponents for p.c.f. self-similar fractals.
//!
//! Exact mode uses GMP rationals; float mode uses 128-bit MPFR floats.

pub mod arith;
pub mod besov;
pub mod error;
pub mod exponents;
pub mod fractal;
pub mod network;
pub mod par;
pub mod quotient;
pub mod trace_maps;
pub mod transforms;

pub use arith::{HpFloat, Ratio, Scalar};
pub use error::{Error, Result};
pub use rug::Rational;
