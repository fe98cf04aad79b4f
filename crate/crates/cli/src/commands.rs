//! The five subcommands. Each writes its files under `config.out` and a JSON
//! summary that embeds the configuration, grid resolution and version.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;
use serde_json::{json, Value};

use qcframe::degree::{
    degree_sweep, degree_winding, excess_degree_integral, negative_degree_integral, target_grid, DegreeOptions,
    GridMap, SampledMap, Winding,
};
use qcframe::diagnostics::diagnose;
use qcframe::energy::{curl_rms, energy, qc_violation};
use qcframe::glue::{glue_frames, FrameSource, GlueSpec};
use qcframe::io::{load_forms, load_frame, save_forms, save_frame};
use qcframe::minimize::{minimize, MinimizeOptions};
use qcframe::verify;
use qcframe::zoo::ZooMap;
use qcframe::{Annulus, Error, FormField, Frame, Grid, Region};

use crate::config::RunConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const OTHER: i32 = 1;
    pub const VALIDATION: i32 = 2;
    pub const NOT_CONVERGED: i32 = 3;
    pub const INVARIANT: i32 = 4;
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Invalid { .. }
            | Error::UnknownMap(_)
            | Error::InvalidGrid(_)
            | Error::CollarNotQc { .. }
            | Error::Infeasible { .. }
            | Error::SupportNotCovered(_)
            | Error::EmptyRegion(_)
            | Error::Degree(_)
            | Error::GridMismatch => exit::VALIDATION,
            _ => exit::OTHER,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Runs the configured subcommand; `Ok` carries the exit code.
pub fn run(config: &RunConfig) -> CliResult<i32> {
    fs::create_dir_all(&config.out)?;
    match config.subcommand.as_str() {
        "glue" => cmd_glue(config),
        "minimize" => cmd_minimize(config),
        "degree" => cmd_degree(config),
        "energy" => cmd_energy(config),
        "verify" => cmd_verify(config),
        other => Err(Error::invalid("subcommand", format!("unknown subcommand `{other}`")).into()),
    }
}

fn envelope(config: &RunConfig, resolution: &[usize], body: Value) -> Value {
    let mut v = json!({
        "version": VERSION,
        "command": config.subcommand,
        "config": config,
        "resolution": resolution,
    });
    if let (Value::Object(dst), Value::Object(src)) = (&mut v, body) {
        dst.extend(src);
    }
    v
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn out(config: &RunConfig, name: &str) -> PathBuf {
    config.out.join(name)
}

fn frame_grid(config: &RunConfig) -> CliResult<Grid> {
    Ok(Grid::cube(config.n, config.res, config.half_width())?)
}

fn annulus(config: &RunConfig) -> CliResult<Annulus> {
    let r = config.radii()?;
    Ok(Annulus::new(r.r, r.big_r)?)
}

/// The frame a command works on: `--input`, else `d(--map)`, else the glue
/// of `--inner` and `--outer`.
fn source_frame(config: &RunConfig) -> CliResult<(Frame, &'static str)> {
    if let Some(path) = &config.input {
        let frame = load_frame(path)?;
        if frame.dim() != config.n {
            return Err(
                Error::invalid("input", format!("frame has n = {}, expected {}", frame.dim(), config.n)).into(),
            );
        }
        return Ok((frame, "input"));
    }
    let grid = frame_grid(config)?;
    if let Some(m) = &config.map {
        return Ok((ZooMap::parse(m, config.n)?.exact_frame(&grid), "map"));
    }
    let glued = glue_frames(&glue_spec(config)?, &grid)?;
    Ok((glued.frame, "glue"))
}

fn glue_spec(config: &RunConfig) -> CliResult<GlueSpec> {
    Ok(GlueSpec {
        radii: config.radii()?,
        inner: FrameSource::Map(config.inner_map()?),
        outer: FrameSource::Map(config.outer_map()?),
        k: config.k,
    })
}

/// `K(x)` as a 0-form. Field files hold finite values only, and `K ≥ 1`, so
/// nodes outside the region are written as 0 and degenerate nodes as -1.
fn distortion_field(frame: &Frame, region: &Region) -> CliResult<(FormField, f64, usize)> {
    let d = frame.distortion(region)?;
    let values = d
        .field
        .iter()
        .map(|&k| match k {
            k if k.is_nan() => 0.0,
            k if k.is_infinite() => -1.0,
            k => k,
        })
        .collect();
    let field = FormField::scalar(frame.grid(), values)?;
    Ok((field, d.sup, d.degenerate.len()))
}

fn cmd_glue(config: &RunConfig) -> CliResult<i32> {
    let grid = frame_grid(config)?;
    let radii = config.radii()?;
    let glued = glue_frames(&glue_spec(config)?, &grid)?;
    save_frame(&out(config, "glued.qcfield"), &glued.frame)?;
    let (dist, sup, degenerate) = distortion_field(&glued.frame, &radii.annulus())?;
    save_forms(&out(config, "distortion.qcfield"), &[dist])?;
    let e = energy(&glued.frame, config.q, &radii.annulus())?;
    let summary = envelope(
        config,
        grid.dims(),
        json!({
            "k_tilde": glued.k_tilde,
            "inner_collar_k": glued.inner_collar_k,
            "outer_collar_k": glued.outer_collar_k,
            "distortion_sup": sup,
            "degenerate_nodes": degenerate,
            "zero_collar_nodes": glued.zero_collar_nodes,
            "clipped": glued.clipped,
            "energy": e,
            "cutoff_max_slope": glued.cutoff.max_slope(),
        }),
    );
    write_json(&out(config, "glue.json"), &summary)?;
    info!("glued frame written, K̃ = {}", glued.k_tilde);
    Ok(exit::OK)
}

fn cmd_minimize(config: &RunConfig) -> CliResult<i32> {
    let (initial, origin) = source_frame(config)?;
    let annulus = annulus(config)?;
    let mut opts = MinimizeOptions::new(config.q, config.k, annulus);
    opts.max_iter = config.max_iter;
    opts.feasibility = config.feasibility;
    opts.rel_decrease = config.rel_decrease;
    let run = minimize(&initial, &opts)?;
    save_frame(&out(config, "minimizer.qcfield"), &run.frame)?;
    run.write_history_csv(BufWriter::new(fs::File::create(out(config, "history.csv"))?))?;
    let diag = diagnose(&run.frame, config.q, annulus)?;
    write_json(
        &out(config, "diagnostics.json"),
        &envelope(config, initial.grid().dims(), json!({ "diagnostics": diag })),
    )?;
    let summary = envelope(
        config,
        initial.grid().dims(),
        json!({
            "initial_frame": origin,
            "status": run.status,
            "converged": run.converged(),
            "iterations": run.iterations(),
            "initial_energy": run.initial_energy,
            "energy": run.energy,
            "violation": run.violation,
            "feasibility_bound": run.feasibility_bound(),
            "mu": run.mu,
            "eps": run.eps,
            "monotonicity_breaks": run.monotonicity_breaks,
            "el_max": diag.el_max,
            "caccioppoli_pass": diag.caccioppoli_pass,
            "reverse_holder_max": diag.reverse_holder.max_ratio,
        }),
    );
    write_json(&out(config, "minimize.json"), &summary)?;
    if run.converged() {
        Ok(exit::OK)
    } else {
        Err(CliError {
            code: exit::NOT_CONVERGED,
            message: format!(
                "no convergence within {} iterations ({:?}); partial results written to {}",
                config.max_iter,
                run.status,
                config.out.display()
            ),
        })
    }
}

fn cmd_degree(config: &RunConfig) -> CliResult<i32> {
    let n = config.n;
    let domain = config.domain()?;
    let map: Box<dyn SampledMap> = match (&config.input, &config.map) {
        (Some(path), _) => {
            let forms = load_forms(path)?;
            if forms.len() != n || forms.iter().any(|f| f.degree() != 0 || f.dim() != n) {
                return Err(Error::invalid("input", format!("expected {n} scalar fields in {n} dimensions")).into());
            }
            let comps: Vec<Vec<f64>> = forms.iter().map(|f| f.components()[0].clone()).collect();
            Box::new(GridMap::new(forms[0].grid(), &comps)?)
        }
        (None, Some(m)) => Box::new(ZooMap::parse(m, n)?),
        (None, None) => return Err(Error::invalid("map", "degree needs --map or --input").into()),
    };
    let targets = target_grid(map.as_ref(), domain, config.res)?;
    let field = degree_sweep(map.as_ref(), domain, &targets, DegreeOptions::for_dim(n))?;
    field.write_csv(BufWriter::new(fs::File::create(out(config, "degree.csv"))?))?;
    let at_origin = match degree_winding(map.as_ref(), &[0.0; 3], domain) {
        Ok(Winding::Degree(k)) => json!(k),
        Ok(Winding::Masked) => json!("masked"),
        Err(e) => json!(e.to_string()),
    };
    let summary = envelope(
        config,
        targets.dims(),
        json!({
            "domain": domain,
            "excess_integral": excess_degree_integral(&field),
            "negative_integral": negative_degree_integral(&field),
            "degree_at_origin": at_origin,
            "min_degree": field.degree.iter().min(),
            "max_degree": field.degree.iter().max(),
            "masked": field.masked,
            "unresolved": field.unresolved,
            "evaluations": field.evaluations,
        }),
    );
    write_json(&out(config, "degree.json"), &summary)?;
    Ok(exit::OK)
}

fn cmd_energy(config: &RunConfig) -> CliResult<i32> {
    let (frame, origin) = source_frame(config)?;
    let annulus = annulus(config)?;
    let region = Region::Annulus(annulus);
    let (dist, sup, degenerate) = distortion_field(&frame, &region)?;
    save_forms(&out(config, "distortion.qcfield"), &[dist])?;
    let summary = envelope(
        config,
        frame.grid().dims(),
        json!({
            "initial_frame": origin,
            "energy": energy(&frame, config.q, &region)?,
            "qc_violation": qc_violation(&frame, config.k, &region)?,
            "distortion_sup": sup,
            "degenerate_nodes": degenerate,
            "is_k_qc": frame.is_k_qc(config.k, &region)?,
            "curl_rms": curl_rms(&frame, annulus)?,
            "rho_n_norm": frame.lp_norm(config.n as f64, &region)?,
        }),
    );
    write_json(&out(config, "energy.json"), &summary)?;
    Ok(exit::OK)
}

fn cmd_verify(config: &RunConfig) -> CliResult<i32> {
    let report = verify::run(&config.verify_config())?;
    for suite in &report.suites {
        for t in &suite.tables {
            let path = out(config, &format!("{}_{}.csv", suite.name, t.name));
            t.write_csv(BufWriter::new(fs::File::create(path)?))?;
        }
    }
    report.write_checks_csv(BufWriter::new(fs::File::create(out(config, "checks.csv"))?))?;
    let summary = envelope(
        config,
        &[config.res],
        json!({
            "suites": report.suites.iter().map(|s| json!({
                "name": s.name,
                "checks": s.checks,
                "values": s.values,
            })).collect::<Vec<_>>(),
            "hard_failures": report.hard_failures(),
            "soft_failures": report.soft_failures(),
        }),
    );
    write_json(&out(config, "verify.json"), &summary)?;
    let failures = report.hard_failures();
    if failures.is_empty() {
        Ok(exit::OK)
    } else {
        Err(CliError {
            code: exit::INVARIANT,
            message: format!("failing checks: {}", failures.join(", ")),
        })
    }
}
