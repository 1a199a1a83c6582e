//! Training and evaluation machinery for heterogeneous robot data.
//!
//! - [`se3`]: poses and the four end-effector action parameterizations.
//! - [`action_space`]: unified masked action space and embodiment maps.
//! - [`mixture`]: dataset registry, effective-frame accounting, trajectory
//!   ingestion and balanced sampling.
//! - [`policy`]: a small dual-expert transformer trained with flow matching.
//! - [`eval`]: grouped, blinded real-robot evaluation sessions and service.

pub mod action_space;
pub mod eval;
pub mod mixture;
pub mod policy;
pub mod se3;
