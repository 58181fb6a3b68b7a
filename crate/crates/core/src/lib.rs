//! Off-road model-predictive trajectory planning over heightmap terrain.
//!
//! The crate provides two vehicle dynamics models (an extended single-track
//! model that rides a local tangent plane, and a 13-state single rigid body
//! model with per-wheel spring-damper suspension), rollover-prevention soft
//! constraints, a parallel sampling ("empirical argmin") optimal control
//! solver, and a closed-loop trial harness with Monte-Carlo batches.
//!
//! Terrain, dynamics, constraint and solver math is generic over the scalar
//! type through [`Real`]; the aliases at the crate root fix the common `f64`
//! and `f32` instantiations. The harness and file formats work in `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail validation

pub mod constraints;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod math;
pub mod planner;
pub mod scalar;
pub mod terrain;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Heightmap = terrain::Heightmap<f64>;
pub type Heightmap32 = terrain::Heightmap<f32>;
pub type SignedDistanceMap = terrain::SignedDistanceMap<f64>;
pub type SignedDistanceMap32 = terrain::SignedDistanceMap<f32>;
pub type Perimeter = terrain::Perimeter<f64>;
pub type VehicleParams = dynamics::VehicleParams<f64>;
pub type VehicleParams32 = dynamics::VehicleParams<f32>;
pub type TireParams = dynamics::TireParams<f64>;
pub type TireParams32 = dynamics::TireParams<f32>;
pub type EstState = dynamics::EstState<f64>;
pub type EstState32 = dynamics::EstState<f32>;
pub type SrbState = dynamics::SrbState<f64>;
pub type SrbState32 = dynamics::SrbState<f32>;
pub type Control = dynamics::Control<f64>;
pub type ControlSequence = dynamics::ControlSequence<f64>;
pub type ConstraintConfig = constraints::ConstraintConfig<f64>;
pub type PlannerConfig = planner::PlannerConfig<f64>;
pub type CostWeights = planner::CostWeights<f64>;
pub type Goal = planner::Goal<f64>;
