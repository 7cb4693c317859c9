//! Singular rotationally symmetric gradient Ricci soliton profiles.
//!
//! The profile `h(r)` of a steady or expanding soliton with a conical-type tip
//! blows up like `c0 r^{-alpha}`, `alpha = sqrt(n) - 1`. Near the tip the
//! regularized unknown `w = r^alpha h` is the fixed point of a contraction map
//! ([`picard`]); the profile is then continued outward by an ODE integrator
//! ([`continuation`]), checked against the near-tip expansions
//! ([`asymptotics`]) and lifted to the warped-product metric ([`metric`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod cli;
pub mod constants;
pub mod continuation;
pub mod metric;
pub mod ode;
pub mod picard;
pub mod quadrature;
pub mod report;
pub mod verify;

pub use constants::{derive_params, Branch, ConstantsError, SolitonInputs, SolitonParams};
pub use continuation::{extend_global, ContinuationOptions, GlobalProfile, ProfileSource};
pub use picard::{solve_local, LocalSolution, PicardOptions};
pub use quadrature::{GridFunction, QuadratureError, RadialGrid};
