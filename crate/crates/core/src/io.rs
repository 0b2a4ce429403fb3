//! CSV formats for observations, latent paths, trajectories, marginals,
//! chain logs and estimate series.
//!
//! Floats are written in Rust's shortest round-trip form, so re-parsing a
//! file reproduces the in-memory values exactly. Lines starting with `#` are
//! comments.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::filter::FilterTrace;
use crate::model::{ObservationRecord, StateValue};
use crate::smoother::{SmoothingMarginals, Trajectory};

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(r)
}

fn parse_f64(field: &str) -> Result<f64> {
    field.parse().map_err(|_| Error::Parse(format!("bad number '{field}'")))
}

fn parse_usize(field: &str) -> Result<usize> {
    field.parse().map_err(|_| Error::Parse(format!("bad index '{field}'")))
}

fn check_header(rdr: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<()> {
    let header = rdr.headers()?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::Parse(format!(
            "expected header '{}', got '{}'",
            expected.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(())
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::InvalidInput(format!("cannot create {}: {e}", path.display())))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::InvalidInput(format!("cannot open {}: {e}", path.display())))
}

/// Writes `k,y` (or `k,y0,y1,...` for vector observations), with optional
/// leading comment lines.
pub fn write_observations<W: Write>(mut w: W, obs: &ObservationRecord, comments: &[&str]) -> Result<()> {
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(w);
    let mut header = vec!["k".to_string()];
    if obs.dim() == 1 {
        header.push("y".into());
    } else {
        header.extend((0..obs.dim()).map(|i| format!("y{i}")));
    }
    w.write_record(&header)?;
    for (k, y) in obs.iter().enumerate() {
        let mut row = vec![k.to_string()];
        row.extend(y.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_observations<R: Read>(r: R) -> Result<ObservationRecord> {
    let mut rdr = reader(r);
    let header = rdr.headers()?.clone();
    if header.len() < 2 || &header[0] != "k" {
        return Err(Error::Parse("observation file needs a 'k' column followed by value columns".into()));
    }
    let mut values = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if parse_usize(&rec[0])? != row {
            return Err(Error::Parse(format!("observation rows must be numbered 0,1,..; row {row} has k={}", &rec[0])));
        }
        values.push(rec.iter().skip(1).map(parse_f64).collect::<Result<Vec<_>>>()?);
    }
    ObservationRecord::new(values)
}

pub fn save_observations(path: &Path, obs: &ObservationRecord, comments: &[&str]) -> Result<()> {
    write_observations(create(path)?, obs, comments)
}

pub fn load_observations(path: &Path) -> Result<ObservationRecord> {
    read_observations(open(path)?)
}

/// Writes a two-column `k,<name>` table.
pub fn write_indexed<W: Write>(w: W, name: &str, values: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["k", name])?;
    for (k, v) in values.iter().enumerate() {
        w.write_record([k.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a two-column `k,<name>` table written by [`write_indexed`].
pub fn read_indexed<R: Read>(r: R, name: &str) -> Result<Vec<f64>> {
    let mut rdr = reader(r);
    check_header(&mut rdr, &["k", name])?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if parse_usize(&rec[0])? != out.len() {
            return Err(Error::Parse("rows must be numbered 0,1,..".into()));
        }
        out.push(parse_f64(&rec[1])?);
    }
    Ok(out)
}

/// `k,x` latent path.
pub fn save_latent<S: StateValue>(path: &Path, states: &[S]) -> Result<()> {
    let values: Vec<f64> = states.iter().map(StateValue::to_f64).collect();
    write_indexed(create(path)?, "x", &values)
}

pub fn write_trajectory<S: StateValue, W: Write>(w: W, traj: &Trajectory<S>) -> Result<()> {
    write_indexed(w, "x", &traj.values())
}

/// `k,estimate` per-time estimates.
pub fn save_estimates(path: &Path, estimates: &[f64]) -> Result<()> {
    write_indexed(create(path)?, "estimate", estimates)
}

pub fn load_estimates(path: &Path) -> Result<Vec<f64>> {
    read_indexed(open(path)?, "estimate")
}

/// `k,i,v` marginal weights; zero weights are omitted.
pub fn write_marginals<W: Write>(w: W, marginals: &SmoothingMarginals) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["k", "i", "v"])?;
    for (k, weights) in marginals.weights.iter().enumerate() {
        for (i, v) in weights.iter().enumerate().filter(|(_, v)| **v != 0.0) {
            w.write_record([k.to_string(), i.to_string(), v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads marginals for clouds of `n_particles` particles.
pub fn read_marginals<R: Read>(r: R, n_particles: usize) -> Result<SmoothingMarginals> {
    let mut rdr = reader(r);
    check_header(&mut rdr, &["k", "i", "v"])?;
    let mut weights: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let (k, i, v) = (parse_usize(&rec[0])?, parse_usize(&rec[1])?, parse_f64(&rec[2])?);
        if i >= n_particles {
            return Err(Error::Parse(format!("particle index {i} out of range")));
        }
        while weights.len() <= k {
            weights.push(vec![0.0; n_particles]);
        }
        weights[k][i] = v;
    }
    Ok(SmoothingMarginals { weights, pairwise: None })
}

/// One row of the per-sweep chain log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainLogRow {
    pub sweep: usize,
    pub accepted: bool,
    pub log_z: f64,
    pub tau_pf: f64,
    pub tau_bs: f64,
}

pub const CHAIN_LOG_HEADER: [&str; 5] = ["sweep", "accepted", "log_z", "tau_pf_s", "tau_bs_s"];

pub fn write_chain_log<W: Write>(w: W, rows: &[ChainLogRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(CHAIN_LOG_HEADER)?;
    for r in rows {
        w.write_record([
            r.sweep.to_string(),
            u8::from(r.accepted).to_string(),
            r.log_z.to_string(),
            r.tau_pf.to_string(),
            r.tau_bs.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_chain_log<R: Read>(r: R) -> Result<Vec<ChainLogRow>> {
    let mut rdr = reader(r);
    check_header(&mut rdr, &CHAIN_LOG_HEADER)?;
    rdr.records()
        .map(|rec| {
            let rec = rec?;
            Ok(ChainLogRow {
                sweep: parse_usize(&rec[0])?,
                accepted: match &rec[1] {
                    "1" => true,
                    "0" => false,
                    other => return Err(Error::Parse(format!("bad accepted flag '{other}'"))),
                },
                log_z: parse_f64(&rec[2])?,
                tau_pf: parse_f64(&rec[3])?,
                tau_bs: parse_f64(&rec[4])?,
            })
        })
        .collect()
}

/// Writes a `sweep,k,<name>` long table from `[sweep][k]` values.
pub fn write_sweep_series<W: Write>(w: W, name: &str, per_sweep: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["sweep", "k", name])?;
    for (r, values) in per_sweep.iter().enumerate() {
        for (k, v) in values.iter().enumerate() {
            w.write_record([r.to_string(), k.to_string(), v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a `sweep,k,<name>` table back into `[sweep][k]` values.
pub fn read_sweep_series<R: Read>(r: R, name: &str) -> Result<Vec<Vec<f64>>> {
    let mut rdr = reader(r);
    check_header(&mut rdr, &["sweep", "k", name])?;
    let mut out: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let (sweep, k, v) = (parse_usize(&rec[0])?, parse_usize(&rec[1])?, parse_f64(&rec[2])?);
        if sweep == out.len() && k == 0 {
            out.push(Vec::new());
        }
        let rows = out.len();
        match out.last_mut() {
            Some(row) if sweep + 1 == rows && k == row.len() => row.push(v),
            _ => return Err(Error::Parse(format!("rows out of order at sweep {sweep}, k {k}"))),
        }
    }
    Ok(out)
}

/// Writes every particle of every cloud:
/// `k,i,position,log_weight,log_adjustment,ancestor` (ancestor empty at `k = 0`).
pub fn write_trace<S: StateValue, W: Write>(w: W, trace: &FilterTrace<S>) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["k", "i", "position", "log_weight", "log_adjustment", "ancestor"])?;
    for cloud in &trace.clouds {
        for i in 0..cloud.len() {
            let ancestor = cloud.ancestors.as_ref().map_or(String::new(), |a| a[i].to_string());
            w.write_record([
                cloud.time.to_string(),
                i.to_string(),
                cloud.positions[i].to_f64().to_string(),
                cloud.log_weights[i].to_string(),
                cloud.log_adjustments[i].to_string(),
                ancestor,
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
