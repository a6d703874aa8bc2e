//! Monocular tracking of deforming scenes.
//!
//! A two-view initializer seeds a sparse 3D map from two close frames. Each
//! following frame is then registered by a robust Levenberg-Marquardt solve
//! over the camera pose and a per-point deformation increment, regularized by
//! a K-nearest-neighbour deformation graph (spatial smoothness) and a
//! magnitude prior (slow deformation). A deforming-tube simulator and a
//! scale-aligned RMSE evaluator close the loop.

pub mod deform;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod image;
pub mod initializer;
pub mod io;
pub mod map;
pub mod nlls;
pub mod pipeline;
pub mod run;
pub mod sim;
pub mod tracker;

pub use error::{Error, Result};
