//! Multipole forward model for a fluid sphere holding two rigid spheres,
//! with binaural cues, localization, beamforming and tracking on top.
// `!(x > 0.0)` guards reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beamform;
pub mod config;
pub mod field;
pub mod localize;
mod par;
pub mod solver;
pub mod specfun;
pub mod track;
pub mod translation;
pub mod validation;
