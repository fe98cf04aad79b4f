//! Library results against closed forms and brute-force references computed
//! here, independently of the library's own algorithms.

use std::f64::consts::PI;

use qcframe::degree::{
    degree_sweep, degree_winding, excess_degree_integral, target_grid, DegreeOptions, Domain, FnMap, Winding,
};
use qcframe::energy::energy;
use qcframe::glue::{glue_frames, FrameSource, GlueSpec, Radii};
use qcframe::homotopy::{nodes_within, Homotopy, HomotopyConfig};
use qcframe::minimize::{minimize, MinimizeOptions};
use qcframe::zoo::ZooMap;
use qcframe::{Annulus, FormField, Frame, Grid, Point, Region};

fn cmul(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0)
}

/// `z^k + a z + b` as a planar map.
fn polynomial(k: u32, a: (f64, f64), b: (f64, f64)) -> impl Fn(&Point) -> Point + Sync {
    move |x: &Point| {
        let z = (x[0], x[1]);
        let mut p = (1.0, 0.0);
        for _ in 0..k {
            p = cmul(p, z);
        }
        let az = cmul(a, z);
        [p.0 + az.0 + b.0, p.1 + az.1 + b.1, 0.0]
    }
}

/// Winding number of `f(S¹)` about `y` by summing angle increments over a
/// dense sampling, plus the smallest distance from `y` to the curve.
fn argument_principle(f: &dyn Fn(&Point) -> Point, y: (f64, f64)) -> (i64, f64) {
    const SAMPLES: usize = 200_000;
    let mut total = 0.0;
    let mut closest = f64::INFINITY;
    let at = |i: usize| {
        let t = 2.0 * PI * i as f64 / SAMPLES as f64;
        let p = f(&[t.cos(), t.sin(), 0.0]);
        (p[0] - y.0, p[1] - y.1)
    };
    let mut prev = at(0);
    for i in 1..=SAMPLES {
        let cur = at(i % SAMPLES);
        closest = closest.min(cur.0.hypot(cur.1));
        total += (prev.0 * cur.1 - prev.1 * cur.0).atan2(prev.0 * cur.0 + prev.1 * cur.1);
        prev = cur;
    }
    ((total / (2.0 * PI)).round() as i64, closest)
}

#[test]
fn planar_degree_matches_the_argument_principle() {
    let cases = [
        (2, (0.3, -0.1), (0.05, 0.2)),
        (3, (-0.4, 0.2), (0.1, 0.0)),
        (3, (1.6, 0.0), (0.0, 0.3)),
        (4, (0.0, 0.9), (-0.2, 0.1)),
    ];
    let targets = [(0.0, 0.0), (0.3, -0.2), (-0.5, 0.4), (0.9, 0.6), (2.5, 0.0)];
    let mut compared = 0;
    for (k, a, b) in cases {
        let f = polynomial(k, a, b);
        let map = FnMap { n: 2, f: &f };
        for y in targets {
            let (expected, gap) = argument_principle(&f, y);
            if gap < 0.05 {
                continue;
            }
            let got = degree_winding(&map, &[y.0, y.1, 0.0], Domain::ball(1.0)).unwrap();
            assert_eq!(got, Winding::Degree(expected), "k={k} a={a:?} b={b:?} y={y:?}");
            compared += 1;
        }
    }
    assert!(compared >= 15, "only {compared} well-separated targets");
}

#[test]
fn reflection_reverses_spatial_degree() {
    for k in 1..=3u32 {
        let w = ZooMap::parse(&format!("winding3d:k={k}"), 3).unwrap();
        let mirrored = FnMap {
            n: 3,
            f: |x: &Point| {
                let p = qcframe::degree::SampledMap::eval(&w, x);
                [p[0], p[1], -p[2]]
            },
        };
        let y = [0.2, -0.1, 0.15];
        assert_eq!(
            degree_winding(&mirrored, &y, Domain::ball(1.0)).unwrap(),
            Winding::Degree(-(k as i64))
        );
        // Outside the image of the ball the degree vanishes.
        assert_eq!(
            degree_winding(&w, &[1.5, 0.0, 0.0], Domain::ball(1.0)).unwrap(),
            Winding::Degree(0)
        );
    }
}

#[test]
fn excess_of_the_square_map_is_pi() {
    let f = ZooMap::parse("winding2d:k=2", 2).unwrap();
    let domain = Domain::ball(1.0);
    let targets = target_grid(&f, domain, 128).unwrap();
    let field = degree_sweep(&f, domain, &targets, DegreeOptions::for_dim(2)).unwrap();
    let excess = excess_degree_integral(&field);
    assert!((excess - PI).abs() / PI < 0.02, "{excess}");
}

#[test]
fn energy_of_a_constant_curl_frame() {
    // ρ₁ = x dy has dρ₁ = dx∧dy; ρ₂ = 0. Then |dρ|₂² = 1/2 everywhere.
    let grid = Grid::cube(2, 17, 1.0).unwrap();
    let rho1 = FormField::from_fn(&grid, 1, |p| vec![0.0, p[0]]).unwrap();
    let rho2 = FormField::zeros(&grid, 1).unwrap();
    let frame = Frame::new(vec![rho1, rho2]).unwrap();
    for q in [1.0, 2.0, 3.5] {
        let e = energy(&frame, q, &Region::Whole).unwrap();
        let expected = 0.5f64.powf(q / 2.0) * 4.0;
        assert!((e - expected).abs() < 1e-12, "q={q}: {e} vs {expected}");
    }
}

#[test]
fn zoo_distortions_match_singular_values() {
    // Radial stretch |x|^{α−1}x has singular values α s^{α−1} (radial) and
    // s^{α−1} (tangential), so K = α^n / α for α ≥ 1.
    for (n, alpha) in [(2usize, 2.0f64), (3, 2.0), (3, 1.5)] {
        let grid = Grid::cube(n, 15, 1.0).unwrap();
        let f = ZooMap::parse(&format!("radial_stretch:alpha={alpha}"), n).unwrap();
        let region = Region::annulus(0.3, 0.9).unwrap();
        let d = f.exact_frame(&grid).distortion(&region).unwrap();
        let expected = alpha.powi(n as i32) / alpha;
        assert!((d.sup - expected).abs() < 1e-9 * expected, "n={n} α={alpha}: {}", d.sup);
    }
    // (s, θ, z) ↦ (s, kθ, z) has singular values (k, 1, 1) and Jacobian k.
    for k in 1..=3u32 {
        let grid = Grid::cube(3, 15, 1.0).unwrap();
        let f = ZooMap::parse(&format!("winding3d:k={k}"), 3).unwrap();
        let d = f
            .exact_frame(&grid)
            .distortion(&Region::annulus(0.3, 0.9).unwrap())
            .unwrap();
        assert!((d.sup - (k * k) as f64).abs() < 1e-9, "k={k}: {}", d.sup);
    }
}

#[test]
fn homotopy_recovers_a_quadratic_primitive() {
    let grid = Grid::cube(2, 81, 0.3).unwrap();
    let f = |p: &Point| 0.7 * p[0] * p[0] - 1.3 * p[0] * p[1] + 0.4 * p[1] + 2.0;
    let u = FormField::scalar(&grid, grid.points().map(|p| f(&p)).collect()).unwrap();
    let du = u.exterior_derivative().unwrap();
    let op = Homotopy::new(2, HomotopyConfig::default(), 1.0, [0.0; 3]).unwrap();
    let nodes = nodes_within(&grid, &[0.0; 3], 0.25);
    let t = op.apply(&du, &nodes).unwrap().form;
    let diffs: Vec<f64> = nodes
        .iter()
        .map(|&i| t.components()[0][i] - f(&grid.point(i)))
        .collect();
    let lo = diffs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = diffs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert!(hi - lo <= 10.0 * grid.spacing(), "variation {}", hi - lo);
}

#[test]
fn chain_identity_converges_at_second_order() {
    // Central differences and multilinear interpolation are both O(h²).
    let form = |res: usize| {
        let grid = Grid::cube(2, res, 1.0).unwrap();
        FormField::from_fn(&grid, 1, |p| {
            vec![p[0] * p[1] * p[1] - 0.5 * p[1], p[0].powi(3) + 0.3 * p[0] * p[1]]
        })
        .unwrap()
    };
    let op = Homotopy::new(2, HomotopyConfig::default(), 1.0, [0.0; 3]).unwrap();
    let coarse = op.chain_residual(&form(33)).unwrap();
    let fine = op.chain_residual(&form(65)).unwrap();
    assert!(coarse / fine > 3.0, "{coarse} -> {fine}");
}

fn radii() -> Radii {
    Radii::new(0.5, 0.75, 1.25, 1.5).unwrap()
}

#[test]
fn glue_agrees_with_its_inputs_off_the_annulus() {
    let grid = Grid::cube(2, 65, 1.6).unwrap();
    let inner = ZooMap::parse("winding2d:k=2", 2).unwrap();
    let outer = ZooMap::parse("identity", 2).unwrap();
    let spec = GlueSpec {
        radii: radii(),
        inner: FrameSource::Map(inner),
        outer: FrameSource::Map(outer),
        k: 4.0,
    };
    let glued = glue_frames(&spec, &grid).unwrap();
    let (rho0, rho1) = (inner.exact_frame(&grid), outer.exact_frame(&grid));
    for i in 0..grid.len() {
        let s = qcframe::grid::norm(&grid.point(i));
        let reference = if s <= 0.5 {
            &rho0
        } else if s >= 1.5 {
            &rho1
        } else {
            continue;
        };
        assert_eq!(glued.frame.matrix(i), reference.matrix(i), "node {i} at |x| = {s}");
    }
    assert!(glued.k_tilde.is_finite());
    assert!(energy(&glued.frame, 2.0, &radii().annulus()).unwrap().is_finite());
}

#[test]
fn planar_minimizer_descends_and_keeps_boundary_data() {
    let grid = Grid::cube(2, 24, 1.6).unwrap();
    let spec = GlueSpec {
        radii: radii(),
        inner: FrameSource::Map(ZooMap::parse("radial_stretch:alpha=2", 2).unwrap()),
        outer: FrameSource::Map(ZooMap::parse("identity", 2).unwrap()),
        k: 4.0,
    };
    let start = glue_frames(&spec, &grid).unwrap().frame;
    let annulus = Annulus::new(0.5, 1.5).unwrap();
    let mut opts = MinimizeOptions::new(2.0, 4.0, annulus);
    opts.max_iter = 300;
    let run = minimize(&start, &opts).unwrap();
    assert!(run.energy < run.initial_energy);
    assert_eq!(run.monotonicity_breaks, 0);
    for w in run.history.windows(2) {
        if w[0].mu == w[1].mu {
            assert!(w[1].objective <= w[0].objective, "{:?} -> {:?}", w[0], w[1]);
        }
    }
    for i in 0..grid.len() {
        let s = qcframe::grid::norm(&grid.point(i));
        if !(0.5 - 1e-12..=1.5 + 1e-12).contains(&s) {
            assert_eq!(run.frame.matrix(i), start.matrix(i));
        }
    }
}
