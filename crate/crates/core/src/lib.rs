//! Sparse training over atomic measures with integral feature maps.
//!
//! Modules:
//! - [`measure`]: signed atomic measures and their total-variation norm
//! - [`feature`]: integral neural feature maps and layer stacks
//! - [`pde`]: finite-difference Neumann solution operator, eigenbasis and
//!   the projected PDE feature map
//! - [`quotient`]: finite-dimensional checks on configuration maps
//!   (nullspaces, quotient norms, kernels, equivalence)
//! - [`solver`]: conditional-gradient training with fully-corrective steps
//! - [`harness`]: experiment configs, datasets and metric emission

pub mod error;
pub mod feature;
pub mod harness;
pub mod measure;
pub mod pde;
pub mod quotient;
pub mod solver;

pub use error::{GrkbsError, Result};
