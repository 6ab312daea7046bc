//! CSV tables, JSON reports and run manifests.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::lattice::StateVector;
use crate::mcstats::EnsembleSummary;
use crate::rate::ControlPath;
use crate::simulate::Trajectory;

fn site_header(dim: usize) -> Vec<String> {
    (1..=dim).map(|k| format!("i{k}")).collect()
}

fn write_long_rows<W: Write>(w: &mut csv::Writer<W>, t: f64, u: &StateVector) -> Result<()> {
    let shape = u.shape();
    for (k, x) in u.values().iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(shape.site(k).iter().map(i64::to_string));
        row.push(x.to_string());
        w.write_record(&row)?;
    }
    Ok(())
}

/// Long format: one row per (time, site) with columns `time, i1..iN, value`.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let dim = traj.states.first().map_or(1, |s| s.shape().dim());
    let mut header = vec!["time".to_string()];
    header.extend(site_header(dim));
    header.push("value".into());
    w.write_record(&header)?;
    for (t, u) in traj.times.iter().zip(&traj.states) {
        write_long_rows(&mut w, *t, u)?;
    }
    w.flush()?;
    Ok(())
}

/// Control values at the left endpoint of each interval, long format.
pub fn write_control_csv<W: Write>(h: &ControlPath, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["time".to_string()];
    header.extend(site_header(h.shape().dim()));
    header.push("value".into());
    w.write_record(&header)?;
    for (k, v) in h.values().iter().enumerate() {
        write_long_rows(&mut w, k as f64 * h.dt(), v)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per saved time.
pub fn write_summary_csv<W: Write>(s: &EnsembleSummary, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["time".to_string(), "mean_norm_sq".into(), "se_norm_sq".into()];
    for k in &s.tail_ks {
        header.push(format!("tail_{k}_mean"));
        header.push(format!("tail_{k}_se"));
    }
    w.write_record(&header)?;
    for (i, t) in s.times.iter().enumerate() {
        let mut row = vec![t.to_string(), s.mean_norm_sq[i].to_string(), s.se_norm_sq[i].to_string()];
        for (m, e) in s.tail_mean[i].iter().zip(&s.tail_se[i]) {
            row.push(m.to_string());
            row.push(e.to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Site table with one column per named field.
pub fn write_sites_csv<W: Write>(columns: &[(&str, &StateVector)], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let Some((_, first)) = columns.first() else {
        return Ok(());
    };
    let shape = first.shape();
    let mut header = site_header(shape.dim());
    header.extend(columns.iter().map(|(n, _)| n.to_string()));
    w.write_record(&header)?;
    for k in 0..shape.site_count() {
        let mut row: Vec<String> = shape.site(k).iter().map(i64::to_string).collect();
        row.extend(columns.iter().map(|(_, v)| v.values()[k].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn write_text(text: &str, path: &Path) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

/// Enough to re-run a job: the command line, the configuration and the seeds.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command_line: Vec<String>,
    pub subcommand: String,
    pub config_path: String,
    pub config: BTreeMap<String, String>,
    pub base_seed: u64,
    pub n_paths: usize,
    pub workers: Option<usize>,
    pub outputs: Vec<String>,
    pub wall_time_seconds: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeShape;

    #[test]
    fn trajectory_rows_are_long_format() {
        let shape = LatticeShape::new(2, 1).unwrap();
        let traj = Trajectory {
            times: vec![0.0, 0.5],
            states: vec![StateVector::zeros(shape), StateVector::from_fn(shape, |i| i[0] as f64)],
            seed: 0,
            path_index: 0,
        };
        let mut buf = Vec::new();
        write_trajectory_csv(&traj, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "time,i1,i2,value");
        assert_eq!(lines.len(), 1 + 2 * 9);
        assert_eq!(lines[10], "0.5,-1,-1,-1");
    }
}
