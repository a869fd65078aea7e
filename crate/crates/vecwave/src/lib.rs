//! Orthonormal vector-valued wavelet bases of `L²(ℝᵈ, ℝᵐ)` built from a
//! scalar orthonormal wavelet.

pub mod cli;
pub mod error;
pub mod scalar_wavelet;
pub mod star_product;
pub mod tensor_multiwavelet;
pub mod vector_basis_1d;
pub mod vector_basis_nd;
pub mod vtransform;

pub use error::{Error, Result};
