//! File formats: calibration text, CSV tables, PLY clouds, image folders.
//!
//! CSV files have a header row; floats are written in shortest round-trip
//! form, so reading a table back reproduces the values bit for bit.

pub mod calibration;
pub mod ply;
pub mod tables;

pub use ply::{read_ply, write_ply};
pub use tables::*;
