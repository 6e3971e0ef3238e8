//! CSV and JSON persistence of fields, Cauchy data and reports.
//!
//! Numbers are written in the shortest form that parses back to the same
//! `f64`, so every file round-trips bit-exactly. Files are written to a
//! temporary sibling and renamed into place.
//!
//! Column orders:
//!
//! * fields: `x1,t,u,m` for `n = 1`, `x1,x2,t,u,m` for `n = 2`, nodes in
//!   storage order (`x1` fastest, then `x2`, then `t`).
//! * Cauchy data: `face,index,coord,t,g0,g1,p0,p1`, faces in grid order,
//!   time-major within a face. `coord` is the tangential coordinate and is
//!   empty on point faces.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cauchy::{CauchyData, FaceData};
use crate::domain::{build_grid, DomainSpec, FaceId, Grid};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::scalar::Scalar;

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    let tmp = path.with_file_name(name);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

/// Shortest round-trip text of a number.
pub fn fmt_num<T: Scalar>(v: T) -> String {
    format!("{:e}", v.to_f64_lossy())
}

fn parse_num<T: Scalar>(s: &str, what: &str) -> Result<T> {
    s.trim().parse::<f64>().map(T::lit).map_err(|_| Error::Parse(format!("{what}: not a number: `{s}`")))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

fn writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory csv writer")).expect("csv output is utf-8")
}

/// Checks that a parsed coordinate matches the grid to a few ulps.
fn same_coord<T: Scalar>(parsed: T, grid_value: T) -> bool {
    (parsed - grid_value).abs() <= T::lit(1e-9) * (T::one() + grid_value.abs())
}

pub fn fields_to_csv<T: Scalar>(u: &ScalarField<T>, m: &ScalarField<T>) -> Result<String> {
    u.check_same_grid(m)?;
    let grid = u.grid();
    let mut w = writer();
    let header: &[&str] = if grid.dim() == 1 { &["x1", "t", "u", "m"] } else { &["x1", "x2", "t", "u", "m"] };
    w.write_record(header).map_err(csv_err)?;
    let ns = grid.n_space();
    for k in 0..grid.nt {
        for s in 0..ns {
            let (i1, i2) = grid.space_coords(s);
            let p = k * ns + s;
            let mut rec = vec![fmt_num(grid.x1(i1))];
            if grid.dim() == 2 {
                rec.push(fmt_num(grid.x2(i2)));
            }
            rec.extend([fmt_num(grid.t(k)), fmt_num(u.values()[p]), fmt_num(m.values()[p])]);
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    Ok(finish(w))
}

/// Reads `(u, m)` written by [`fields_to_csv`] onto `grid`.
pub fn fields_from_csv<T: Scalar>(text: &str, grid: &Arc<Grid<T>>) -> Result<(ScalarField<T>, ScalarField<T>)> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let width = grid.dim() + 3;
    let headers = r.headers().map_err(csv_err)?;
    if headers.len() != width {
        return Err(Error::Parse(format!("expected {width} field columns, got {}", headers.len())));
    }
    let ns = grid.n_space();
    let mut u = Vec::with_capacity(grid.n_nodes());
    let mut m = Vec::with_capacity(grid.n_nodes());
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        if row >= grid.n_nodes() {
            return Err(Error::Parse("more field rows than grid nodes".into()));
        }
        let (k, s) = (row / ns, row % ns);
        let (i1, i2) = grid.space_coords(s);
        let mut expect = vec![grid.x1(i1)];
        if grid.dim() == 2 {
            expect.push(grid.x2(i2));
        }
        expect.push(grid.t(k));
        for (c, e) in expect.iter().enumerate() {
            let v: T = parse_num(&rec[c], "coordinate")?;
            if !same_coord(v, *e) {
                return Err(Error::GridMismatch(format!("row {}: coordinate {} does not match the grid", row + 1, &rec[c])));
            }
        }
        u.push(parse_num(&rec[width - 2], "u")?);
        m.push(parse_num(&rec[width - 1], "m")?);
    }
    if u.len() != grid.n_nodes() {
        return Err(Error::Parse(format!("expected {} field rows, got {}", grid.n_nodes(), u.len())));
    }
    Ok((ScalarField::from_values(grid.clone(), u)?, ScalarField::from_values(grid.clone(), m)?))
}

pub fn cauchy_to_csv<T: Scalar>(data: &CauchyData<T>) -> Result<String> {
    let grid = data.grid();
    let mut w = writer();
    w.write_record(["face", "index", "coord", "t", "g0", "g1", "p0", "p1"]).map_err(csv_err)?;
    for fd in &data.faces {
        let face = grid.face(fd.id).ok_or_else(|| Error::Nonconforming(format!("face {} not on the grid", fd.id.label())))?;
        let len = face.len();
        for k in 0..grid.nt {
            for j in 0..len {
                let p = k * len + j;
                let coord = if face.tangential_spacing.is_some() { fmt_num(face.tangential_coords[j]) } else { String::new() };
                w.write_record([
                    fd.id.label().to_string(),
                    j.to_string(),
                    coord,
                    fmt_num(grid.t(k)),
                    fmt_num(fd.g0[p]),
                    fmt_num(fd.g1[p]),
                    fmt_num(fd.p0[p]),
                    fmt_num(fd.p1[p]),
                ])
                .map_err(csv_err)?;
            }
        }
    }
    Ok(finish(w))
}

/// Reads Cauchy data written by [`cauchy_to_csv`] onto `grid`.
pub fn cauchy_from_csv<T: Scalar>(text: &str, grid: &Arc<Grid<T>>) -> Result<CauchyData<T>> {
    let mut data = CauchyData::zeros(grid.clone());
    let mut seen = vec![0usize; data.faces.len()];
    let mut r = csv::Reader::from_reader(text.as_bytes());
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != 8 {
            return Err(Error::Parse(format!("row {}: expected 8 columns", row + 1)));
        }
        let id = FaceId::from_label(&rec[0]).ok_or_else(|| Error::Parse(format!("row {}: unknown face `{}`", row + 1, &rec[0])))?;
        let slot = data.faces.iter().position(|f| f.id == id).ok_or_else(|| Error::Nonconforming(format!("face {} not on the grid", id.label())))?;
        let face = grid.face(id).expect("face listed in zero data");
        let j: usize = rec[1].parse().map_err(|_| Error::Parse(format!("row {}: bad index `{}`", row + 1, &rec[1])))?;
        let t: T = parse_num(&rec[3], "t")?;
        let k = ((t / grid.ht).round()).to_f64_lossy() as usize;
        if j >= face.len() || k >= grid.nt || !same_coord(t, grid.t(k)) {
            return Err(Error::GridMismatch(format!("row {}: node ({j}, t = {}) is not on face {}", row + 1, &rec[3], id.label())));
        }
        let p = k * face.len() + j;
        let fd: &mut FaceData<T> = &mut data.faces[slot];
        fd.g0[p] = parse_num(&rec[4], "g0")?;
        fd.g1[p] = parse_num(&rec[5], "g1")?;
        fd.p0[p] = parse_num(&rec[6], "p0")?;
        fd.p1[p] = parse_num(&rec[7], "p1")?;
        seen[slot] += 1;
    }
    for (fd, n) in data.faces.iter().zip(&seen) {
        if *n != fd.g0.len() {
            return Err(Error::Nonconforming(format!("face {}: {} of {} rows present", fd.id.label(), n, fd.g0.len())));
        }
    }
    Ok(data)
}

/// Self-describing JSON form of Cauchy data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauchyBundle {
    pub domain: DomainSpec<f64>,
    pub nx1: usize,
    pub nxi: Vec<usize>,
    pub nt: usize,
    pub faces: Vec<FaceBundle>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceBundle {
    pub face: FaceId,
    pub g0: Vec<f64>,
    pub g1: Vec<f64>,
    pub p0: Vec<f64>,
    pub p1: Vec<f64>,
}

impl CauchyBundle {
    pub fn from_data<T: Scalar>(data: &CauchyData<T>) -> Self {
        let g = data.grid();
        let conv = |v: &[T]| v.iter().map(|x| x.to_f64_lossy()).collect::<Vec<_>>();
        let d = &g.domain;
        Self {
            domain: DomainSpec {
                n: d.n,
                a: d.a.to_f64_lossy(),
                b: d.b.to_f64_lossy(),
                half_widths: conv(&d.half_widths),
                t_end: d.t_end.to_f64_lossy(),
                alpha: d.alpha.to_f64_lossy(),
            },
            nx1: g.nx1,
            nxi: g.nxi.clone(),
            nt: g.nt,
            faces: data
                .faces
                .iter()
                .map(|f| FaceBundle { face: f.id, g0: conv(&f.g0), g1: conv(&f.g1), p0: conv(&f.p0), p1: conv(&f.p1) })
                .collect(),
        }
    }

    pub fn grid<T: Scalar>(&self) -> Result<Arc<Grid<T>>> {
        let d = &self.domain;
        let spec = DomainSpec {
            n: d.n,
            a: T::lit(d.a),
            b: T::lit(d.b),
            half_widths: d.half_widths.iter().map(|w| T::lit(*w)).collect(),
            t_end: T::lit(d.t_end),
            alpha: T::lit(d.alpha),
        };
        Ok(Arc::new(build_grid(spec, self.nx1, &self.nxi, self.nt)?))
    }

    /// Rebuilds the data on its own grid.
    pub fn to_data<T: Scalar>(&self) -> Result<CauchyData<T>> {
        self.to_data_on(self.grid()?)
    }

    /// Rebuilds the data on `grid`, which must match the recorded one.
    pub fn to_data_on<T: Scalar>(&self, grid: Arc<Grid<T>>) -> Result<CauchyData<T>> {
        if *self.grid::<T>()? != *grid {
            return Err(Error::GridMismatch("Cauchy bundle was recorded on a different grid".into()));
        }
        let conv = |v: &[f64]| v.iter().map(|x| T::lit(*x)).collect::<Vec<_>>();
        let faces =
            self.faces.iter().map(|f| FaceData { id: f.face, g0: conv(&f.g0), g1: conv(&f.g1), p0: conv(&f.p0), p1: conv(&f.p1) }).collect();
        CauchyData::from_faces(grid, faces)
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<S: Serialize>(value: &S) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn from_json<S: for<'de> Deserialize<'de>>(text: &str) -> Result<S> {
    serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cauchy::{extract_traces, perturb_to_delta};
    use crate::domain::DomainSpec;

    fn grids() -> Vec<Arc<Grid<f64>>> {
        vec![
            Arc::new(build_grid(DomainSpec::one_d(0.5, 1.0, 1.0, 0.5), 7, &[], 6).unwrap()),
            Arc::new(build_grid(DomainSpec::two_d(0.5, 1.0, 0.25, 1.0, 0.5), 5, &[6], 4).unwrap()),
        ]
    }

    fn awkward(grid: &Arc<Grid<f64>>, seed: f64) -> ScalarField<f64> {
        ScalarField::from_fn(grid.clone(), |x, y, t| (seed * x + 3.0 * y - t).sin() / 3.0 + 1e-300 * x)
    }

    #[test]
    fn fields_round_trip_bit_exactly() {
        for g in grids() {
            let (u, m) = (awkward(&g, 1.7), awkward(&g, -0.3));
            let text = fields_to_csv(&u, &m).unwrap();
            let (u2, m2) = fields_from_csv(&text, &g).unwrap();
            assert_eq!(u.values(), u2.values());
            assert_eq!(m.values(), m2.values());
            assert_eq!(fields_to_csv(&u2, &m2).unwrap(), text);
        }
    }

    #[test]
    fn cauchy_round_trips_through_csv_and_json() {
        for g in grids() {
            let data = perturb_to_delta(&extract_traces(&awkward(&g, 0.9), &awkward(&g, 2.1)).unwrap(), 1e-3, 5).unwrap();
            let csv = cauchy_to_csv(&data).unwrap();
            assert_eq!(cauchy_from_csv(&csv, &g).unwrap(), data);
            let json = to_json(&CauchyBundle::from_data(&data)).unwrap();
            let back: CauchyBundle = from_json(&json).unwrap();
            assert_eq!(back.to_data::<f64>().unwrap(), data);
            assert_eq!(back.to_data_on(g.clone()).unwrap(), data);
        }
    }

    #[test]
    fn mismatched_inputs_are_rejected() {
        let g = grids();
        let (u, m) = (awkward(&g[0], 1.0), awkward(&g[0], 2.0));
        let text = fields_to_csv(&u, &m).unwrap();
        assert!(fields_from_csv(&text, &g[1]).is_err());
        let short: String = text.lines().take(5).map(|l| format!("{l}\n")).collect();
        assert!(fields_from_csv(&short, &g[0]).is_err());
        let data = CauchyData::zeros(g[0].clone());
        let csv = cauchy_to_csv(&data).unwrap();
        let dropped: String = csv.lines().take(3).map(|l| format!("{l}\n")).collect();
        assert!(cauchy_from_csv(&dropped, &g[0]).is_err());
        let bundle = CauchyBundle::from_data(&data);
        assert!(bundle.to_data_on(g[1].clone()).is_err());
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = std::env::temp_dir().join(format!("mfg-io-{}", std::process::id()));
        let path = dir.join("nested").join("a.txt");
        atomic_write(&path, b"one").unwrap();
        atomic_write(&path, b"two").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"two");
        assert!(!path.with_file_name("a.txt.tmp").exists());
        fs::remove_dir_all(dir).unwrap();
    }
}
