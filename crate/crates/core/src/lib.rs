//! Numerical homogenization of Hamilton-Jacobi transmission problems across
//! a two-scale oscillatory interface.
//!
//! The crate is generic over the scalar type (see [`Real`]); the aliases at
//! the bottom of this file fix it to `f64`, which is what the command-line
//! front end and the acceptance suite use.

// Negated comparisons route NaN into the failure branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cell_problems;
pub mod control_model;
pub mod effective_solver;
pub mod error;
pub mod geometry;
pub mod hj_engines;
pub mod scalar;
pub mod vec2;

pub use error::{Error, Result};
pub use scalar::Real;
pub use vec2::{Axis, Vec2};

pub type Point = vec2::Vec2<f64>;
pub type Control = control_model::Control<f64>;
pub type ControlSide = control_model::ControlSide<f64>;
pub type MediumPair = control_model::MediumPair<f64>;
pub type FarFieldCost = control_model::FarFieldCost<f64>;
pub type ToothProfile = geometry::ToothProfile<f64>;
pub type InterfaceSpec = geometry::InterfaceSpec<f64>;
pub type FingerGeometry = geometry::FingerGeometry<f64>;
pub type EffectiveTable = cell_problems::EffectiveTable<f64>;
pub type FluxLimiterCurve = cell_problems::FluxLimiterCurve<f64>;
pub type SlopeThresholds = cell_problems::SlopeThresholds<f64>;
pub type CorrectorProfile = cell_problems::CorrectorProfile<f64>;
pub type Grid = hj_engines::Grid<f64>;
pub type ValueField = hj_engines::ValueField<f64>;
pub type ErgodicResult = hj_engines::ErgodicResult<f64>;
