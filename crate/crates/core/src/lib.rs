//! Numerical laboratory for Strichartz-type space-time norms of the
//! Schrödinger flow on Zoll manifolds, with the round sphere `S^2` as the
//! concrete model.

pub mod arithmetic;
pub mod circle;
pub mod evolution;
pub mod experiment;
pub mod exponents;
pub mod harmonics;
pub mod quadrature;
pub mod spectrum;
pub mod tiling;
