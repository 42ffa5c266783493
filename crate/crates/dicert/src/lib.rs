//! Device-independent randomness certification from rank-one qubit POVMs.
//!
//! The library derives, for any entangled two-qubit state angle and any
//! rank-one POVM, a saturated quantum (Tsirelson) bound on a linear
//! combination of correlations; simulates ideal and noisy measurement
//! statistics; and certifies eavesdropper guessing probability and
//! conditional von Neumann entropy through moment-matrix semidefinite
//! relaxations solved by a built-in dense interior-point method.
//!
//! Module map:
//! - [`qubit`]: 2x2 / 4x4 complex algebra, states, POVM validation and
//!   extremality.
//! - [`tsirelson`]: boundary coefficients, Bell operator, saturation checks.
//! - [`scenario`]: correlation tables, noise model, tilted CHSH, state-angle
//!   fit, example POVMs.
//! - [`ncpoly`]: noncommutative words over party-local operator symbols.
//! - [`npa`]: moment-matrix relaxations of the guessing and entropy programs.
//! - [`sdp`]: dense primal-dual interior-point semidefinite solver.
//! - [`certify`]: certification front end, quadrature, closed-form oracles.
//! - [`cli`]: command implementations behind the `dicert` binary.

pub mod qubit;
pub mod sdp;
pub mod scenario;
pub mod certify;
pub mod ncpoly;
pub mod npa;
pub mod tsirelson;
