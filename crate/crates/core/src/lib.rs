//! Two-dimensional incompressible Bingham flow whose yield stress depends on
//! a transported pore-fluid pressure.
//!
//! Everything here is allocation-only numerics: the MAC grid and its
//! operators, the constitutive graph, the pore-pressure transport step, the
//! BDF2/AB2 momentum step and the diagnostics built on top of them. File
//! formats, configuration and scenario orchestration live in `bingham-sim`.
#![no_std]

extern crate alloc;

pub mod diagnostics;
mod error;
pub mod linalg;
pub mod mesh;
pub mod momentum;
pub mod rheology;
pub mod transport;

pub use error::{Error, Result};
