//! `qcfield 1` files: an ASCII header followed by little-endian f64 blocks.
//!
//! ```text
//! qcfield 1
//! n=3
//! degree=1
//! dims=32,32,32
//! origin=-1,-1,-1
//! spacing=0.06451612903225806
//! components=9
//!
//! <components × node-count f64 values>
//! ```
//!
//! A tuple of `m` forms of the same degree (a frame, or `dρ`) is stored with
//! `components = m · C(n, ℓ)`, member-major.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::form::{binomial, FormField};
use crate::frame::Frame;
use crate::grid::Grid;

pub fn write_forms<W: Write>(mut w: W, forms: &[FormField]) -> Result<()> {
    let first = forms.first().ok_or_else(|| Error::Format("nothing to write".into()))?;
    let grid = first.grid();
    if forms
        .iter()
        .any(|f| f.degree() != first.degree() || !f.grid().same_shape(grid))
    {
        return Err(Error::Format("members differ in degree or grid".into()));
    }
    let n = grid.dim();
    let join = |v: Vec<String>| v.join(",");
    writeln!(w, "qcfield 1")?;
    writeln!(w, "n={n}")?;
    writeln!(w, "degree={}", first.degree())?;
    writeln!(w, "dims={}", join(grid.dims().iter().map(|d| d.to_string()).collect()))?;
    writeln!(
        w,
        "origin={}",
        join(grid.origin().iter().map(|o| o.to_string()).collect())
    )?;
    writeln!(w, "spacing={}", grid.spacing())?;
    writeln!(w, "components={}", forms.len() * first.components().len())?;
    writeln!(w)?;
    let mut buf = Vec::with_capacity(grid.len() * 8);
    for f in forms {
        for c in f.components() {
            buf.clear();
            for v in c {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_forms<R: Read>(r: R) -> Result<Vec<FormField>> {
    let mut r = BufReader::new(r);
    let mut line = String::new();
    let mut next = |r: &mut BufReader<R>| -> Result<String> {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(Error::Format("truncated header".into()));
        }
        Ok(line.trim_end_matches(['\n', '\r']).to_string())
    };
    if next(&mut r)? != "qcfield 1" {
        return Err(Error::Format("missing `qcfield 1` magic line".into()));
    }
    let mut field = |r: &mut BufReader<R>, key: &str| -> Result<String> {
        let l = next(r)?;
        l.strip_prefix(key)
            .and_then(|s| s.strip_prefix('='))
            .map(str::to_string)
            .ok_or_else(|| Error::Format(format!("expected `{key}=`, found `{l}`")))
    };
    let bad = |what: &str, s: &str| Error::Format(format!("bad {what} `{s}`"));
    let n_s = field(&mut r, "n")?;
    let n: usize = n_s.parse().map_err(|_| bad("n", &n_s))?;
    let deg_s = field(&mut r, "degree")?;
    let degree: usize = deg_s.parse().map_err(|_| bad("degree", &deg_s))?;
    let dims_s = field(&mut r, "dims")?;
    let dims = dims_s
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| bad("dims", &dims_s))?;
    let origin_s = field(&mut r, "origin")?;
    let origin = origin_s
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| bad("origin", &origin_s))?;
    let h_s = field(&mut r, "spacing")?;
    let h: f64 = h_s.parse().map_err(|_| bad("spacing", &h_s))?;
    let c_s = field(&mut r, "components")?;
    let ncomp: usize = c_s.parse().map_err(|_| bad("components", &c_s))?;
    if !next(&mut r)?.is_empty() {
        return Err(Error::Format("expected blank line after header".into()));
    }
    let grid = Grid::new(n, &dims, &origin, h).map_err(|e| Error::Format(e.to_string()))?;
    if degree > n {
        return Err(Error::Format(format!("degree {degree} exceeds n = {n}")));
    }
    let per = binomial(n, degree);
    if ncomp == 0 || !ncomp.is_multiple_of(per) {
        return Err(Error::Format(format!(
            "{ncomp} components is not a multiple of C({n}, {degree}) = {per}"
        )));
    }
    let mut bytes = vec![0u8; grid.len() * 8];
    let mut blocks = Vec::with_capacity(ncomp);
    for _ in 0..ncomp {
        r.read_exact(&mut bytes)
            .map_err(|_| Error::Format("truncated data block".into()))?;
        blocks.push(
            bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect::<Vec<f64>>(),
        );
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing data after last block".into()));
    }
    if blocks.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Format("non-finite value".into()));
    }
    let mut forms = Vec::new();
    let mut it = blocks.into_iter();
    for _ in 0..ncomp / per {
        let comps: Vec<Vec<f64>> = it.by_ref().take(per).collect();
        forms.push(FormField::from_components(&grid, degree, comps)?);
    }
    Ok(forms)
}

pub fn save_forms(path: &Path, forms: &[FormField]) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_forms(std::io::BufWriter::new(f), forms)
}

pub fn load_forms(path: &Path) -> Result<Vec<FormField>> {
    read_forms(std::fs::File::open(path)?)
}

pub fn save_frame(path: &Path, frame: &Frame) -> Result<()> {
    save_forms(path, frame.members())
}

pub fn load_frame(path: &Path) -> Result<Frame> {
    Frame::new(load_forms(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let g = Grid::new(2, &[8, 9], &[-1.0, 0.5], 0.25).unwrap();
        let w = FormField::from_fn(&g, 1, |p| vec![p[0], -p[1]]).unwrap();
        let mut buf = Vec::new();
        write_forms(&mut buf, std::slice::from_ref(&w)).unwrap();
        let header = "qcfield 1\nn=2\ndegree=1\ndims=8,9\norigin=-1,0.5\nspacing=0.25\ncomponents=2\n\n";
        assert!(buf.starts_with(header.as_bytes()));
        assert_eq!(buf.len(), header.len() + 2 * 72 * 8);
        let back = read_forms(&buf[..]).unwrap();
        assert_eq!(back, vec![w]);
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_forms(&b"qcfield 2\n"[..]).is_err());
        let g = Grid::cube(2, 8, 1.0).unwrap();
        let w = FormField::zeros(&g, 0).unwrap();
        let mut buf = Vec::new();
        write_forms(&mut buf, &[w]).unwrap();
        buf.pop();
        assert!(matches!(read_forms(&buf[..]), Err(Error::Format(_))));
    }
}
