//! Eyring–Kramers predictions for non-reversible metastable diffusions.
//!
//! The diffusion studied here is
//!
//! ```text
//! dx = -(∇U + ℓ)(x) dt + √(2ε) dW,      ℓ(x) = J(U(x)) ∇U(x),  J(u) skew-symmetric,
//! ```
//!
//! which keeps the Gibbs measure `Z⁻¹ e^{-U/ε}` invariant while breaking
//! reversibility. The crate is organised as:
//!
//! * [`landscape`] – potentials, skew generators and the derived field `ℓ`;
//! * [`spectral`] – dense eigen-solvers and the saddle matrix identities;
//! * [`topology`] – critical points and the level-`H` valley structure;
//! * [`kramers`] – Eyring–Kramers constants and predicted mean transition times;
//! * [`simulate`] – Euler–Maruyama ensembles, hitting times, Gibbs histograms;
//! * [`saddlecheck`] – the saddle-local test function and boundary-flux quadrature;
//! * [`cli`] – the command-line front end.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod kramers;
pub mod landscape;
pub mod linalg;
pub mod saddlecheck;
pub mod simulate;
pub mod spectral;
pub mod topology;

pub use kramers::{ek_constant, predict, EkConstant, EkPrediction};
pub use landscape::{LandscapeSpec, Polynomial, Potential, SkewGenerator};
pub use simulate::{EnsembleResult, SimConfig};
pub use spectral::SaddleSpectrum;
pub use topology::{CriticalPoint, CriticalKind, ValleyStructure};
