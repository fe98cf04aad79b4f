//! Inputs shared by the benchmarks.

use qcframe::energy::{flatten, Objective};
use qcframe::glue::{glue_frames, FrameSource, GlueSpec, Radii};
use qcframe::verify::{cubic_forms, random_cubic_coefficients};
use qcframe::zoo::ZooMap;
use qcframe::{Annulus, FormField, Grid};

/// A random cubic 1-form on the cube `[-1, 1]^n`.
pub fn cubic_form(n: usize, res: usize) -> FormField {
    let grid = Grid::cube(n, res, 1.0).expect("valid grid");
    let coefs = random_cubic_coefficients(n, 1, 0);
    cubic_forms(&grid, &coefs).expect("forms on grid").remove(0)
}

/// The glued radial-stretch frame as a flat vector, with its objective.
pub fn glued_objective(n: usize, res: usize) -> (Objective, Vec<f64>) {
    let radii = Radii::new(0.5, 0.75, 1.25, 1.5).expect("ordered radii");
    let grid = Grid::cube(n, res, 1.6).expect("valid grid");
    let spec = GlueSpec {
        radii,
        inner: FrameSource::Map(ZooMap::parse("radial_stretch:alpha=2", n).expect("known map")),
        outer: FrameSource::Map(ZooMap::parse("identity", n).expect("known map")),
        k: 4.0,
    };
    let glued = glue_frames(&spec, &grid).expect("collars are 4-qc");
    let annulus = Annulus::new(radii.r, radii.big_r).expect("valid annulus");
    let obj = Objective::new(&grid, 2.0, 4.0, annulus, 1e-6).expect("valid objective");
    (obj, flatten(&glued.frame))
}
