//! Quantized piecewise-linear interval maps.
//!
//! A map `S` on `[0,1]` with integer slopes induces a bistochastic Markov
//! matrix `P_n` on the uniform `n`-cell partition. A unitary `U_n` with
//! `|U_xy|^2 = P_xy` is a quantization of `S`. This crate builds both,
//! decomposes `U_n`, and evaluates arc spectral projections, pointwise Weyl
//! sums, Egorov defects, quantum variances and Gaussian eigenvector
//! statistics.
//!
//! Coordinates that name cells of the partition (`x`, `y` in `1..=n`) are
//! 1-based. Matrix storage is 0-based.

pub mod doubling;
pub mod ergodic;
pub mod error;
pub mod interval_map;
pub mod io;
pub mod linalg;
pub mod markov;
pub mod quantize;
pub mod random_quant;
pub mod rng;
pub mod spectral;

pub use error::{Error, Result};

/// Double-precision complex scalar.
pub type C64 = num_complex::Complex64;

/// Exact rational used for map evaluation and Markov weights.
pub type Q = num_rational::Ratio<i64>;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const TAU: f64 = std::f64::consts::TAU;
