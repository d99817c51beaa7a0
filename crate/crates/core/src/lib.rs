//! Particle simulation of the transport–Stokes sedimentation system and a
//! toolkit for checking its quantitative stability properties.
//!
//! A density is carried by weighted particles. Each particle sinks in the
//! velocity field induced by all particles through the (regularized) Oseen
//! tensor. Around this core sit the verification tools: L^p and Yudovich-type
//! norms, Osgood moduli and Bihari–LaSalle bounds, exact and entropic
//! Wasserstein-1 solvers, and axisymmetry diagnostics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod density;
pub mod error;
pub mod fit;
pub mod flow;
pub mod kernel;
pub mod osgood;
pub mod quad;
pub mod transport;
pub mod velocity;

pub use error::{Error, Result};

/// Points and vectors in physical space.
pub type Vec3 = nalgebra::Vector3<f64>;
/// 3×3 tensors.
pub type Mat3 = nalgebra::Matrix3<f64>;
