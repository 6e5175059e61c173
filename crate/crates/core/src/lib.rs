//! Integrable magnetic geodesic flows on the 2-torus.
//!
//! Liouville metrics `Λ₁(x) + Λ₂(y)` with zero magnetic field are deformed
//! along a symmetry flow of the stationary quasi-linear system for
//! `U = (Λ, u₀, f, g)`. The deformed metric and magnetic field keep a
//! quadratic-in-momenta first integral on the energy level `{H = 1/2}`.
//!
//! * [`field`]: truncated Fourier series on the torus.
//! * [`deformation`]: Taylor-in-t jet of the symmetry flow.
//! * [`assembly`]: magnetic system, first integral, stationary residuals.
//! * [`integrator`]: explicit Runge–Kutta solvers.
//! * [`dynamics`]: the magnetic geodesic flow and conservation checks.
//! * [`classify`]: all-energy-level quadratic integral conditions.

pub mod error;
pub mod assembly;
pub mod classify;
pub mod deformation;
pub mod dynamics;
pub mod field;
pub mod integrator;

pub use error::{Error, Result};
pub use field::{Field2, GridSampling, PointEvaluator, SpectralEntry, Symmetry};
