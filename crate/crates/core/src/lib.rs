//! Quasi-periodic solutions of the nonlinear polyharmonic equation
//! `(−Δ)ˡu + V u + σ|u|²u = λu` with a periodic potential `V`.
//!
//! Solutions are modulated plane waves `u = A e^{i⟨k,x⟩}(1 + ũ)`. They are
//! built by iterating the effective potential `W ↦ V + σ|u_W|²`, where `u_W`
//! is the Bloch eigenfunction of `(−Δ)ˡ + W` obtained from a contour-integral
//! perturbation series around the free level `|k|^{2l}`.
//!
//! Module map:
//! - [`lattice`]: Fourier-lattice arithmetic and momentum bookkeeping.
//! - [`bloch`]: the linear eigenpair (series and dense oracle).
//! - [`nonres`]: exponents and non-resonance tests.
//! - [`fixed_point`]: the nonlinear iteration and its diagnostics.
//! - [`galerkin`]: an independent Newton solver used as a verifier.
//! - [`iso`]: isoenergetic surfaces `λ(κν) = λ`.
//! - [`config`] and [`runner`]: the text configuration and output writers
//!   behind the `polywave` command.
//!
//! The `examples/` directory has one runnable program per capability.

pub mod bloch;
pub mod config;
pub mod context;
pub mod error;
pub mod fixed_point;
pub mod galerkin;
pub mod iso;
pub mod lattice;
pub mod nonres;
pub mod runner;

pub use context::{Backend, ModelContext, ResonanceGate};
pub use error::{Error, Result};
pub use lattice::{LatticeIndex, PeriodicFunction, QuasiMomentum};
