//! File formats: legacy VTK structured points, CSV tables and the two-level
//! checkpoint. Numbers use the shortest decimal form that reads back to the
//! same bits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use bingham_core::diagnostics::{EnergySample, Profile};
use bingham_core::mesh::{Array2, CellScalar, Grid, SiteTensors, StaggeredVelocity, SymTensor, SymTensorField};
use bingham_core::momentum::MomentumState;

use crate::error::SimError;

pub const TIMESERIES_HEADER: &str = "t,kinetic,viscous_cum,plastic_cum,div_max,pf_min,pf_max,rigid_fraction";

pub fn num(x: f64) -> String {
    format!("{x:?}")
}

fn write_file(path: &Path, text: &str) -> Result<(), SimError> {
    fs::write(path, text).map_err(|e| SimError::io(path, e))
}

fn read_file(path: &Path) -> Result<String, SimError> {
    fs::read_to_string(path).map_err(|e| SimError::io(path, e))
}

fn malformed(path: &Path, reason: impl Into<String>) -> SimError {
    SimError::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// One scalar on the cell centres of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct VtkField {
    pub title: String,
    pub name: String,
    pub nx: usize,
    pub ny: usize,
    pub origin: [f64; 2],
    pub spacing: [f64; 2],
    /// x varies fastest.
    pub values: Vec<f64>,
}

impl VtkField {
    /// From x-major cell data (`i * ny + j`).
    pub fn from_cells(grid: &Grid, title: &str, name: &str, x_major: &[f64]) -> Self {
        let (nx, ny) = (grid.nx(), grid.ny());
        let mut values = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                values.push(x_major[i * ny + j]);
            }
        }
        Self {
            title: title.to_string(),
            name: name.to_string(),
            nx,
            ny,
            origin: [0.5 * grid.hx(), 0.5 * grid.hy()],
            spacing: [grid.hx(), grid.hy()],
            values,
        }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    pub fn render(&self) -> String {
        let mut s = String::with_capacity(self.values.len() * 24 + 256);
        s.push_str("# vtk DataFile Version 3.0\n");
        let _ = writeln!(s, "{}", self.title);
        s.push_str("ASCII\nDATASET STRUCTURED_POINTS\n");
        let _ = writeln!(s, "DIMENSIONS {} {} 1", self.nx, self.ny);
        let _ = writeln!(s, "ORIGIN {} {} 0", num(self.origin[0]), num(self.origin[1]));
        let _ = writeln!(s, "SPACING {} {} 1", num(self.spacing[0]), num(self.spacing[1]));
        let _ = writeln!(s, "POINT_DATA {}", self.values.len());
        let _ = writeln!(s, "SCALARS {} double 1", self.name);
        s.push_str("LOOKUP_TABLE default\n");
        for v in &self.values {
            s.push_str(&num(*v));
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        let mut next = |what: &str| lines.next().ok_or_else(|| format!("missing {what}"));
        if next("version line")? != "# vtk DataFile Version 3.0" {
            return Err("not a legacy VTK file".into());
        }
        let title = next("title")?.to_string();
        if next("format")? != "ASCII" || next("dataset")? != "DATASET STRUCTURED_POINTS" {
            return Err("expected ASCII structured points".into());
        }
        let fields = |line: &str, tag: &str, n: usize| -> Result<Vec<String>, String> {
            let parts: Vec<String> = line.split_whitespace().map(str::to_string).collect();
            if parts.len() != n + 1 || parts[0] != tag {
                return Err(format!("bad {tag} line"));
            }
            Ok(parts[1..].to_vec())
        };
        let f = |s: &str| s.parse::<f64>().map_err(|_| format!("bad number '{s}'"));
        let u = |s: &str| s.parse::<usize>().map_err(|_| format!("bad count '{s}'"));
        let dims = fields(next("dimensions")?, "DIMENSIONS", 3)?;
        let (nx, ny) = (u(&dims[0])?, u(&dims[1])?);
        let origin = fields(next("origin")?, "ORIGIN", 3)?;
        let spacing = fields(next("spacing")?, "SPACING", 3)?;
        let count = u(&fields(next("point data")?, "POINT_DATA", 1)?[0])?;
        let scalars = fields(next("scalars")?, "SCALARS", 3)?;
        if next("lookup table")? != "LOOKUP_TABLE default" {
            return Err("bad LOOKUP_TABLE line".into());
        }
        let values = lines.map(f).collect::<Result<Vec<_>, _>>()?;
        if count != nx * ny || values.len() != count {
            return Err(format!("expected {} values, found {}", nx * ny, values.len()));
        }
        Ok(Self {
            title,
            name: scalars[0].clone(),
            nx,
            ny,
            origin: [f(&origin[0])?, f(&origin[1])?],
            spacing: [f(&spacing[0])?, f(&spacing[1])?],
            values,
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), SimError> {
        write_file(path, &self.render())
    }

    pub fn read(path: &Path) -> Result<Self, SimError> {
        Self::parse(&read_file(path)?).map_err(|r| malformed(path, r))
    }
}

pub fn render_timeseries(samples: &[EnergySample]) -> String {
    let mut s = String::from(TIMESERIES_HEADER);
    s.push('\n');
    for r in samples {
        let row = [r.t, r.kinetic, r.viscous_cum, r.plastic_cum, r.divergence_max, r.pf_min, r.pf_max, r.rigid_fraction];
        s.push_str(&row.iter().map(|x| num(*x)).collect::<Vec<_>>().join(","));
        s.push('\n');
    }
    s
}

/// Rows of a time-series file in header order.
pub fn parse_timeseries(text: &str) -> Result<Vec<[f64; 8]>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(TIMESERIES_HEADER) {
        return Err("unexpected header".into());
    }
    lines
        .enumerate()
        .map(|(k, line)| {
            let vals: Vec<f64> = line
                .split(',')
                .map(|s| s.parse::<f64>().map_err(|_| format!("row {}: bad number '{s}'", k + 1)))
                .collect::<Result<_, _>>()?;
            vals.try_into().map_err(|_| format!("row {}: expected 8 columns", k + 1))
        })
        .collect()
}

pub fn write_timeseries(path: &Path, samples: &[EnergySample]) -> Result<(), SimError> {
    write_file(path, &render_timeseries(samples))
}

pub fn render_profiles(profiles: &[Profile]) -> String {
    let mut s = String::from("x,y,u\n");
    for p in profiles {
        for (y, u) in p.y.iter().zip(&p.u) {
            let _ = writeln!(s, "{},{},{}", num(p.x), num(*y), num(*u));
        }
    }
    s
}

pub fn write_profiles(path: &Path, profiles: &[Profile]) -> Result<(), SimError> {
    write_file(path, &render_profiles(profiles))
}

/// Two-level state needed to continue a run bitwise.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub state: MomentumState,
    pub p_f: CellScalar,
    /// Step size in force (after any halving).
    pub dt: f64,
}

const CHECKPOINT_MAGIC: &str = "bingham-checkpoint 1";

fn push_array(s: &mut String, name: &str, a: &Array2) {
    let (n0, n1) = a.shape();
    let _ = writeln!(s, "array {name} {n0} {n1}");
    for v in a.as_slice() {
        s.push_str(&num(*v));
        s.push('\n');
    }
}

fn site_arrays(t: &[SymTensor]) -> [Vec<f64>; 3] {
    [
        t.iter().map(|x| x.xx).collect(),
        t.iter().map(|x| x.yy).collect(),
        t.iter().map(|x| x.xy).collect(),
    ]
}

impl Checkpoint {
    pub fn render(&self) -> String {
        let st = &self.state;
        let g = st.grid();
        let mut s = String::new();
        let _ = writeln!(s, "{CHECKPOINT_MAGIC}");
        let _ = writeln!(s, "grid {} {} {} {}", g.nx(), g.ny(), num(g.lx()), num(g.ly()));
        let _ = writeln!(s, "t {}", num(st.t));
        let _ = writeln!(s, "step_index {}", st.step_index);
        let _ = writeln!(s, "last_dt {}", st.last_dt.map(num).unwrap_or_else(|| "none".into()));
        let _ = writeln!(s, "dt {}", num(self.dt));
        push_array(&mut s, "v_n.u", st.v_n.u());
        push_array(&mut s, "v_n.v", st.v_n.v());
        push_array(&mut s, "v_nm1.u", st.v_nm1.u());
        push_array(&mut s, "v_nm1.v", st.v_nm1.v());
        push_array(&mut s, "p", st.p.values());
        push_array(&mut s, "sigma.d11", st.sigma.d11());
        push_array(&mut s, "sigma.d22", st.sigma.d22());
        push_array(&mut s, "sigma.d12", st.sigma.d12());
        for (tag, sites) in [("cells", &st.lambda.cells), ("corners", &st.lambda.corners)] {
            for (comp, vals) in ["xx", "yy", "xy"].iter().zip(site_arrays(sites)) {
                let a = Array2::from_vec(vals.len(), 1, vals).expect("length matches");
                push_array(&mut s, &format!("lambda.{tag}.{comp}"), &a);
            }
        }
        push_array(&mut s, "p_f", self.p_f.values());
        s
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        if lines.next() != Some(CHECKPOINT_MAGIC) {
            return Err("not a checkpoint".into());
        }
        let mut header = |tag: &str| -> Result<Vec<String>, String> {
            let line = lines.next().ok_or_else(|| format!("missing {tag}"))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(tag) {
                return Err(format!("expected {tag}"));
            }
            Ok(parts.map(str::to_string).collect())
        };
        let f = |s: &str| s.parse::<f64>().map_err(|_| format!("bad number '{s}'"));
        let gl = header("grid")?;
        if gl.len() != 4 {
            return Err("bad grid line".into());
        }
        let us = |s: &str| s.parse::<usize>().map_err(|_| format!("bad count '{s}'"));
        let grid = Grid::new(us(&gl[0])?, us(&gl[1])?, f(&gl[2])?, f(&gl[3])?).map_err(|e| e.to_string())?;
        let t = f(&header("t")?.join(""))?;
        let step_index = us(&header("step_index")?.join(""))?;
        let last = header("last_dt")?.join("");
        let last_dt = if last == "none" { None } else { Some(f(&last)?) };
        let dt = f(&header("dt")?.join(""))?;
        let mut arrays = Vec::new();
        while let Some(line) = lines.next() {
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 4 || parts[0] != "array" {
                return Err(format!("bad array header '{line}'"));
            }
            let (n0, n1) = (us(parts[2])?, us(parts[3])?);
            let mut data = Vec::with_capacity(n0 * n1);
            for _ in 0..n0 * n1 {
                data.push(f(lines.next().ok_or("truncated array")?)?);
            }
            arrays.push((parts[1].to_string(), Array2::from_vec(n0, n1, data).map_err(|e| e.to_string())?));
        }
        let mut take = |name: &str| -> Result<Array2, String> {
            let k = arrays.iter().position(|(n, _)| n == name).ok_or_else(|| format!("missing array {name}"))?;
            Ok(arrays.remove(k).1)
        };
        let e = |r: bingham_core::Error| r.to_string();
        let v_n = StaggeredVelocity::from_parts(grid, take("v_n.u")?, take("v_n.v")?).map_err(e)?;
        let v_nm1 = StaggeredVelocity::from_parts(grid, take("v_nm1.u")?, take("v_nm1.v")?).map_err(e)?;
        let p = CellScalar::from_array(grid, take("p")?).map_err(e)?;
        let sigma = SymTensorField::from_parts(grid, take("sigma.d11")?, take("sigma.d22")?, take("sigma.d12")?).map_err(e)?;
        let mut lambda = SiteTensors::zeros(grid);
        for (tag, sites) in [("cells", &mut lambda.cells), ("corners", &mut lambda.corners)] {
            let xx = take(&format!("lambda.{tag}.xx"))?;
            let yy = take(&format!("lambda.{tag}.yy"))?;
            let xy = take(&format!("lambda.{tag}.xy"))?;
            if [&xx, &yy, &xy].iter().any(|a| a.as_slice().len() != sites.len()) {
                return Err(format!("lambda {tag} has the wrong length"));
            }
            for (k, site) in sites.iter_mut().enumerate() {
                *site = SymTensor::new(xx.as_slice()[k], yy.as_slice()[k], xy.as_slice()[k]);
            }
        }
        let p_f = CellScalar::from_array(grid, take("p_f")?).map_err(e)?;
        Ok(Self {
            state: MomentumState {
                v_n,
                v_nm1,
                p,
                sigma,
                lambda,
                t,
                step_index,
                last_dt,
            },
            p_f,
            dt,
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), SimError> {
        write_file(path, &self.render())
    }

    pub fn read(path: &Path) -> Result<Self, SimError> {
        Self::parse(&read_file(path)?).map_err(|r| malformed(path, r))
    }
}
