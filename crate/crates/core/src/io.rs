//! CSV formats.
//!
//! | file          | header                 |
//! |---------------|------------------------|
//! | measure       | `x,y,z,mx,my,mz`       |
//! | sensors       | `x,y,z,weight`         |
//! | field data    | `x,y,z,value`          |
//! | dual field    | `x,y,z,g`              |
//! | solver trace  | `iter,objective,cert_gap,step,active_nodes` |
//!
//! Writers emit `#` comment lines (units, scale) before the header; readers
//! skip them. Numbers are written in shortest round-trip form, so every file
//! reads back bit-exactly.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::certificate::LevelSetSample;
use crate::error::{Error, Result};
use crate::forward::SensorGrid;
use crate::measure::{location_key, Atom, DiscreteVectorMeasure, Point3, Vec3};
use crate::solver::IterRecord;

pub const MEASURE_HEADER: [&str; 6] = ["x", "y", "z", "mx", "my", "mz"];
pub const SENSOR_HEADER: [&str; 4] = ["x", "y", "z", "weight"];
pub const FIELD_HEADER: [&str; 4] = ["x", "y", "z", "value"];
pub const DUAL_FIELD_HEADER: [&str; 4] = ["x", "y", "z", "g"];
pub const ITER_TRACE_HEADER: [&str; 5] = ["iter", "objective", "cert_gap", "step", "active_nodes"];

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn write_table(path: &Path, comments: &[String], header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut out = String::new();
    for c in comments {
        for line in c.lines() {
            let _ = writeln!(out, "# {line}");
        }
    }
    let _ = writeln!(out, "{}", header.join(","));
    for row in rows {
        let _ = writeln!(out, "{}", row.join(","));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads a numeric table with the exact `header`, returning `(line, values)`.
fn read_table(path: &Path, header: &[&str]) -> Result<Vec<(u64, Vec<f64>)>> {
    let name = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let found: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if found != header {
        let line = rdr.position().line();
        return Err(Error::Parse {
            path: name,
            line,
            msg: format!("expected header `{}`, found `{}`", header.join(","), found.join(",")),
        });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            path: name.clone(),
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(Error::Parse {
                path: name,
                line,
                msg: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        let mut vals = Vec::with_capacity(rec.len());
        for (field, col) in rec.iter().zip(header) {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                path: name.clone(),
                line,
                msg: format!("column `{col}`: cannot parse `{field}` as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse { path: name, line, msg: format!("column `{col}`: non-finite value") });
            }
            vals.push(v);
        }
        rows.push((line, vals));
    }
    Ok(rows)
}

pub fn write_measure_csv(path: &Path, mu: &DiscreteVectorMeasure, comments: &[String]) -> Result<()> {
    let rows = mu.atoms().iter().map(|a| {
        [a.location.x, a.location.y, a.location.z, a.moment.x, a.moment.y, a.moment.z]
            .iter()
            .map(|&v| fmt_f64(v))
            .collect()
    });
    write_table(path, comments, &MEASURE_HEADER, rows)
}

/// Reads a measure; NaN/inf and duplicate locations are rejected with the
/// offending line number.
pub fn read_measure_csv(path: &Path) -> Result<DiscreteVectorMeasure> {
    let mut seen = HashSet::new();
    let mut atoms = Vec::new();
    for (line, v) in read_table(path, &MEASURE_HEADER)? {
        let p = Point3::new(v[0], v[1], v[2]);
        if !seen.insert(location_key(&p)) {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line,
                msg: format!("duplicate location ({}, {}, {})", p.x, p.y, p.z),
            });
        }
        atoms.push(Atom::new(p, Vec3::new(v[3], v[4], v[5])));
    }
    DiscreteVectorMeasure::new(atoms)
}

pub fn write_sensors_csv(path: &Path, sensors: &SensorGrid, comments: &[String]) -> Result<()> {
    let rows = sensors
        .points()
        .iter()
        .zip(sensors.weights())
        .map(|(p, w)| [p.x, p.y, p.z, *w].iter().map(|&v| fmt_f64(v)).collect());
    write_table(path, comments, &SENSOR_HEADER, rows)
}

/// Reads sensor locations and weights; the sensing direction is not part of
/// the file and must be supplied.
pub fn read_sensors_csv(path: &Path, direction: Vec3) -> Result<SensorGrid> {
    let rows = read_table(path, &SENSOR_HEADER)?;
    let points = rows.iter().map(|(_, v)| Point3::new(v[0], v[1], v[2])).collect();
    let weights = rows.iter().map(|(_, v)| v[3]).collect();
    SensorGrid::new(points, weights, direction)
}

pub fn write_field_csv(path: &Path, points: &[Point3], values: &[f64], comments: &[String]) -> Result<()> {
    let rows = points
        .iter()
        .zip(values)
        .map(|(p, g)| [p.x, p.y, p.z, *g].iter().map(|&v| fmt_f64(v)).collect());
    write_table(path, comments, &FIELD_HEADER, rows)
}

pub fn read_field_csv(path: &Path) -> Result<(Vec<Point3>, Vec<f64>)> {
    let rows = read_table(path, &FIELD_HEADER)?;
    Ok((
        rows.iter().map(|(_, v)| Point3::new(v[0], v[1], v[2])).collect(),
        rows.iter().map(|(_, v)| v[3]).collect(),
    ))
}

/// Field values aligned with `sensors`; locations must match row by row.
pub fn read_field_for_sensors(path: &Path, sensors: &SensorGrid) -> Result<Vec<f64>> {
    let rows = read_table(path, &FIELD_HEADER)?;
    if rows.len() != sensors.len() {
        return Err(Error::Dimension { expected: sensors.len(), got: rows.len() });
    }
    let tol = 1e-12;
    for ((line, v), p) in rows.iter().zip(sensors.points()) {
        let q = Point3::new(v[0], v[1], v[2]);
        if (q - p).norm() > tol * (1.0 + p.coords.norm()) {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: *line,
                msg: "field location does not match the sensor file".into(),
            });
        }
    }
    Ok(rows.into_iter().map(|(_, v)| v[3]).collect())
}

pub fn write_dual_field_csv(path: &Path, sample: &LevelSetSample, comments: &[String]) -> Result<()> {
    let rows = sample
        .points()
        .iter()
        .zip(sample.values())
        .map(|(p, g)| [p.x, p.y, p.z, *g].iter().map(|&v| fmt_f64(v)).collect());
    write_table(path, comments, &DUAL_FIELD_HEADER, rows)
}

/// Dual-field samples as `(points, values)`.
pub fn read_dual_field_csv(path: &Path) -> Result<(Vec<Point3>, Vec<f64>)> {
    let rows = read_table(path, &DUAL_FIELD_HEADER)?;
    Ok((
        rows.iter().map(|(_, v)| Point3::new(v[0], v[1], v[2])).collect(),
        rows.iter().map(|(_, v)| v[3]).collect(),
    ))
}

pub fn write_iter_trace_csv(path: &Path, trace: &[IterRecord]) -> Result<()> {
    let rows = trace.iter().map(|r| {
        vec![
            r.iter.to_string(),
            fmt_f64(r.objective),
            fmt_f64(r.cert_gap),
            fmt_f64(r.step),
            r.active_nodes.to_string(),
        ]
    });
    write_table(path, &[], &ITER_TRACE_HEADER, rows)
}

pub fn read_iter_trace_csv(path: &Path) -> Result<Vec<IterRecord>> {
    Ok(read_table(path, &ITER_TRACE_HEADER)?
        .into_iter()
        .map(|(_, v)| IterRecord {
            iter: v[0] as usize,
            objective: v[1],
            cert_gap: v[2],
            step: v[3],
            active_nodes: v[4] as usize,
        })
        .collect())
}
