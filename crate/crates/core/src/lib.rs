//! Differential 1-frames on uniform grids in two and three dimensions.

// `!(x > 0.0)` rejects NaN along with non-positive values; small fixed-size
// matrix loops read better with indices.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod degree;
pub mod diagnostics;
pub mod energy;
pub mod error;
pub mod form;
pub mod frame;
pub mod glue;
pub mod grid;
pub mod homotopy;
pub mod io;
pub mod linalg;
pub mod minimize;
pub mod sphere;
pub mod verify;
pub mod zoo;

pub use error::{Error, Result};
pub use form::FormField;
pub use frame::Frame;
pub use grid::{Annulus, Grid, Point, Region};
