//! Run configuration: defaults, an optional JSON file and command-line flags,
//! merged in that order of increasing precedence.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use qcframe::degree::Domain;
use qcframe::glue::Radii;
use qcframe::verify::VerifyConfig;
use qcframe::zoo::ZooMap;
use qcframe::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub subcommand: String,
    pub n: usize,
    /// Nodes per axis of the frame grid (target grid for `degree`).
    pub res: usize,
    pub radii: [f64; 4],
    pub q: f64,
    pub k: f64,
    /// Map whose differential is the frame (`minimize`, `energy`) or whose
    /// degree is computed (`degree`).
    pub map: Option<String>,
    /// Glue sources; the inner one defaults to a radial stretch.
    pub inner: Option<String>,
    pub outer: String,
    /// A QCFIELD frame (or, for `degree`, an n-tuple of 0-forms).
    pub input: Option<PathBuf>,
    /// `ball:RADIUS` or `annulus:INNER,OUTER`.
    pub domain: String,
    /// Half-width of the frame box; defaults to `16R/15`.
    pub half_width: Option<f64>,
    pub seed: u64,
    pub only: Vec<String>,
    pub refine: usize,
    pub max_iter: usize,
    pub trend_iter: usize,
    pub k_trend: f64,
    /// Feasibility tolerance relative to `max(1, E)`.
    pub feasibility: f64,
    /// Relative decrease over the stall window that ends a stage.
    pub rel_decrease: f64,
    /// Not echoed into reports, so runs in different directories compare equal.
    #[serde(skip_serializing)]
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let v = VerifyConfig::default();
        RunConfig {
            subcommand: String::new(),
            n: v.n,
            res: v.res,
            radii: v.radii,
            q: v.q,
            k: v.k,
            map: None,
            inner: None,
            outer: "identity".into(),
            input: None,
            domain: "ball:1".into(),
            half_width: None,
            seed: v.seed,
            only: Vec::new(),
            refine: v.refine,
            max_iter: v.max_iter,
            trend_iter: v.trend_iter,
            k_trend: v.k_trend,
            feasibility: 1e-8,
            rel_decrease: 1e-8,
            out: PathBuf::from("out"),
        }
    }
}

/// Command-line values; `None` leaves the file or default value in place.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub n: Option<usize>,
    pub res: Option<usize>,
    pub radii: Option<[f64; 4]>,
    pub q: Option<f64>,
    pub k: Option<f64>,
    pub map: Option<String>,
    pub inner: Option<String>,
    pub outer: Option<String>,
    pub input: Option<PathBuf>,
    pub domain: Option<String>,
    pub half_width: Option<f64>,
    pub seed: Option<u64>,
    pub only: Option<Vec<String>>,
    pub refine: Option<usize>,
    pub max_iter: Option<usize>,
    pub trend_iter: Option<usize>,
    pub k_trend: Option<f64>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Defaults, then `file`, then `flags`.
    pub fn resolve(subcommand: &str, file: Option<&Path>, flags: Overrides) -> Result<Self> {
        let mut c = match file {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        c.subcommand = subcommand.to_string();
        macro_rules! take {
            ($($f:ident),*) => { $(if let Some(v) = flags.$f { c.$f = v; })* };
        }
        take!(n, res, radii, q, k, seed, only, refine, max_iter, trend_iter, k_trend, out);
        macro_rules! take_opt {
            ($($f:ident),*) => { $(if flags.$f.is_some() { c.$f = flags.$f; })* };
        }
        take_opt!(map, inner, input, half_width);
        if let Some(v) = flags.outer {
            c.outer = v;
        }
        if let Some(v) = flags.domain {
            c.domain = v;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n != 2 && self.n != 3 {
            return Err(Error::invalid("n", format!("dimension {} not in {{2,3}}", self.n)));
        }
        if self.res < qcframe::grid::MIN_NODES {
            return Err(Error::invalid(
                "res",
                format!(
                    "need at least {} nodes per axis, got {}",
                    qcframe::grid::MIN_NODES,
                    self.res
                ),
            ));
        }
        let radii = self.radii()?;
        if let Some(h) = self.half_width {
            if !(h >= radii.big_r) {
                return Err(Error::invalid(
                    "half_width",
                    format!("box half-width {h} must be at least R = {}", radii.big_r),
                ));
            }
        }
        if !(self.q >= 1.0 && self.q.is_finite()) {
            return Err(Error::invalid("q", format!("need q ≥ 1, got {}", self.q)));
        }
        if !(self.k >= 1.0 && self.k.is_finite()) {
            return Err(Error::invalid("k", format!("need K ≥ 1, got {}", self.k)));
        }
        if let Some(m) = &self.map {
            ZooMap::parse(m, self.n)?;
        }
        self.inner_map()?;
        ZooMap::parse(&self.outer, self.n)?;
        self.domain()?;
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter", "must be positive"));
        }
        if !(self.feasibility > 0.0 && self.rel_decrease > 0.0) {
            return Err(Error::invalid("feasibility", "tolerances must be positive"));
        }
        if self.subcommand == "verify" {
            self.verify_config().validate()?;
        }
        Ok(())
    }

    pub fn radii(&self) -> Result<Radii> {
        Radii::from_slice(&self.radii)
    }

    pub fn half_width(&self) -> f64 {
        self.half_width.unwrap_or(self.radii[3] * 16.0 / 15.0)
    }

    pub fn inner_map(&self) -> Result<ZooMap> {
        ZooMap::parse(self.inner.as_deref().unwrap_or("radial_stretch:alpha=2"), self.n)
    }

    pub fn outer_map(&self) -> Result<ZooMap> {
        ZooMap::parse(&self.outer, self.n)
    }

    pub fn domain(&self) -> Result<Domain> {
        let bad = || {
            Error::invalid(
                "domain",
                format!("expected ball:R or annulus:r,R, got `{}`", self.domain),
            )
        };
        let (kind, rest) = self.domain.split_once(':').ok_or_else(bad)?;
        let values: Vec<f64> = rest
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let d = match (kind.trim(), values.as_slice()) {
            ("ball", [r]) if *r > 0.0 => Domain::ball(*r),
            ("annulus", [a, b]) if 0.0 < *a && a < b => Domain::Annulus { inner: *a, outer: *b },
            _ => return Err(bad()),
        };
        Ok(d)
    }

    pub fn verify_config(&self) -> VerifyConfig {
        VerifyConfig {
            n: self.n,
            res: self.res,
            refine: self.refine,
            seed: self.seed,
            only: self.only.clone(),
            q: self.q,
            k: self.k,
            k_trend: self.k_trend,
            radii: self.radii,
            max_iter: self.max_iter,
            trend_iter: self.trend_iter,
        }
    }
}

/// Parses `r,r',R',R`.
pub fn parse_radii(s: &str) -> std::result::Result<[f64; 4], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    v.try_into()
        .map_err(|v: Vec<f64>| format!("expected four radii, got {}", v.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_override_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"res": 20, "q": 3.0, "seed": 5}"#).unwrap();
        let c = RunConfig::resolve(
            "glue",
            Some(&path),
            Overrides {
                q: Some(2.5),
                ..Overrides::default()
            },
        )
        .unwrap();
        assert_eq!(c.res, 20);
        assert_eq!(c.q, 2.5);
        assert_eq!(c.seed, 5);
        assert_eq!(c.k, RunConfig::default().k);
        assert_eq!(c.subcommand, "glue");
    }

    #[test]
    fn unknown_file_fields_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"resolution": 20}"#).unwrap();
        assert!(RunConfig::resolve("glue", Some(&path), Overrides::default()).is_err());
    }

    #[test]
    fn validation_names_the_field() {
        let bad = |o: Overrides| match RunConfig::resolve("glue", None, o) {
            Err(Error::Invalid { field, .. }) => field,
            other => panic!("{other:?}"),
        };
        assert_eq!(
            bad(Overrides {
                radii: Some([1.0, 0.75, 1.25, 1.5]),
                ..Overrides::default()
            }),
            "radii"
        );
        assert_eq!(
            bad(Overrides {
                n: Some(4),
                ..Overrides::default()
            }),
            "n"
        );
        assert_eq!(
            bad(Overrides {
                domain: Some("disk:1".into()),
                ..Overrides::default()
            }),
            "domain"
        );
    }

    #[test]
    fn domains_and_radii_parse() {
        let mut c = RunConfig {
            domain: "annulus:0.5,1".into(),
            ..RunConfig::default()
        };
        assert_eq!(c.domain().unwrap(), Domain::Annulus { inner: 0.5, outer: 1.0 });
        c.domain = "ball:2".into();
        assert_eq!(c.domain().unwrap(), Domain::ball(2.0));
        assert_eq!(parse_radii("0.5,0.75,1.25,1.5").unwrap(), [0.5, 0.75, 1.25, 1.5]);
        assert!(parse_radii("0.5,0.75").is_err());
    }
}
