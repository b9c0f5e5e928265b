//! Model predictive controllers for social robot navigation with
//! uncertainty-aware costs and constraints, plus the crowd simulator and
//! scenario generators used to benchmark them.

pub mod controllers;
pub mod crowd;
pub mod dynamics;
pub mod error;
pub mod nmpc;
pub mod perception;
pub mod scenarios;
pub mod socialcost;

pub use error::{Error, Result};

/// Planar position or velocity vector.
pub type Vec2 = nalgebra::Vector2<f64>;
