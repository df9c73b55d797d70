//! Curvature-integrated model predictive contouring control (CiMPCC) for
//! small-scale autonomous racing.
//!
//! The crate covers the offline track pipeline (curvature, smoothing,
//! normalization), the kinematic bicycle model, a sequential quadratic
//! programming solver for multiple-shooting problems, the MPCC and CiMPCC
//! planners, and a closed-loop race harness.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod harness;
pub mod nlp;
pub mod planner;
pub mod track;
pub mod tracks;
pub mod vehicle;
pub mod velocity_map;
