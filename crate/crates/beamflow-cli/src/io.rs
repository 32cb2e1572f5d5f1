//! CSV and JSON emission/parsing. Floats are written with 17 significant
//! digits so every file round-trips to the exact bits that were computed,
//! and identical runs produce byte-identical files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use beamflow_core::dynamics::Snapshot;
use beamflow_core::SampleGrid;

use crate::error::CliError;

pub const TRAJECTORY_HEADER: [&str; 8] = ["t", "m", "a_m", "alpha_m", "x_m", "y_m", "vx_m", "vy_m"];
pub const TARGET_HEADER: [&str; 3] = ["rho", "theta", "magnitude"];
pub const PATTERN_HEADER: [&str; 4] = ["rho", "theta", "magnitude", "achieved"];
pub const POLAR_HEADER: [&str; 4] = ["theta", "desired", "initial", "final"];
pub const EVOLUTION_HEADER: [&str; 4] = ["t", "agent", "amplitude", "phase_mod_2pi"];

/// 17 significant digits: enough to reconstruct any f64 exactly.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Refuses to clobber an existing file unless the caller passed --force.
pub fn guard_overwrite(path: &Path, force: bool) -> Result<(), CliError> {
    if !force && path.exists() {
        return Err(CliError::io(path, "already exists (pass --force to overwrite)"));
    }
    Ok(())
}

fn create(path: &Path) -> Result<csv::Writer<BufWriter<File>>, CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn finish(mut writer: csv::Writer<BufWriter<File>>, path: &Path) -> Result<(), CliError> {
    writer.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}

/// One trajectory record: a single agent's state at one snapshot time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub agent: usize,
    pub amplitude: f64,
    pub phase: f64,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
}

pub fn write_trajectory(path: &Path, samples: &[Snapshot]) -> Result<(), CliError> {
    let mut w = create(path)?;
    w.write_record(TRAJECTORY_HEADER).map_err(|e| CliError::io(path, e))?;
    for snapshot in samples {
        for (m, agent) in snapshot.agents.iter().enumerate() {
            w.write_record([
                format_float(snapshot.t),
                m.to_string(),
                format_float(agent.amplitude),
                format_float(agent.phase),
                format_float(agent.position.x),
                format_float(agent.position.y),
                format_float(agent.velocity.x),
                format_float(agent.velocity.y),
            ])
            .map_err(|e| CliError::io(path, e))?;
        }
    }
    finish(w, path)
}

/// Desired-target rows: `rho,theta,magnitude`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TargetRow {
    pub rho: f64,
    pub theta: f64,
    pub magnitude: f64,
}

pub fn write_targets(path: &Path, grid: &SampleGrid) -> Result<(), CliError> {
    let mut w = create(path)?;
    w.write_record(TARGET_HEADER).map_err(|e| CliError::io(path, e))?;
    for i in 0..grid.len() {
        let (rho, theta) = grid.point(i);
        w.write_record([format_float(rho), format_float(theta), format_float(grid.target(i))])
            .map_err(|e| CliError::io(path, e))?;
    }
    finish(w, path)
}

/// Pattern rows: the desired target plus the magnitude a team achieved.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PatternRow {
    pub rho: f64,
    pub theta: f64,
    pub magnitude: f64,
    pub achieved: f64,
}

pub fn write_pattern(path: &Path, grid: &SampleGrid, achieved: &[f64]) -> Result<(), CliError> {
    assert_eq!(achieved.len(), grid.len(), "one achieved magnitude per grid point");
    let mut w = create(path)?;
    w.write_record(PATTERN_HEADER).map_err(|e| CliError::io(path, e))?;
    for i in 0..grid.len() {
        let (rho, theta) = grid.point(i);
        w.write_record([
            format_float(rho),
            format_float(theta),
            format_float(grid.target(i)),
            format_float(achieved[i]),
        ])
        .map_err(|e| CliError::io(path, e))?;
    }
    finish(w, path)
}

pub fn write_polar(path: &Path, rows: &[[f64; 4]]) -> Result<(), CliError> {
    let mut w = create(path)?;
    w.write_record(POLAR_HEADER).map_err(|e| CliError::io(path, e))?;
    for row in rows {
        w.write_record(row.map(format_float)).map_err(|e| CliError::io(path, e))?;
    }
    finish(w, path)
}

pub fn write_evolution(path: &Path, rows: &[(f64, usize, f64, f64)]) -> Result<(), CliError> {
    let mut w = create(path)?;
    w.write_record(EVOLUTION_HEADER).map_err(|e| CliError::io(path, e))?;
    for (t, agent, amplitude, phase) in rows {
        w.write_record([
            format_float(*t),
            agent.to_string(),
            format_float(*amplitude),
            format_float(*phase),
        ])
        .map_err(|e| CliError::io(path, e))?;
    }
    finish(w, path)
}

/// Reads a headered CSV into records of `N` fields, reporting the 1-based
/// line number of any malformed row.
fn read_rows<const N: usize>(path: &Path, header: [&str; N]) -> Result<Vec<[f64; N]>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::io(path, e))?;
    {
        let got = reader.headers().map_err(|e| CliError::invalid(path, e))?;
        let want: Vec<&str> = header.to_vec();
        if got.iter().collect::<Vec<_>>() != want {
            return Err(CliError::invalid(
                path,
                format!("line 1: expected header {}, got {}", want.join(","), got.iter().collect::<Vec<_>>().join(",")),
            ));
        }
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| CliError::invalid(path, format!("line {line}: {e}")))?;
        if record.len() != N {
            return Err(CliError::invalid(
                path,
                format!("line {line}: expected {N} fields, got {}", record.len()),
            ));
        }
        let mut row = [0.0; N];
        for (j, field) in record.iter().enumerate() {
            row[j] = field.trim().parse::<f64>().map_err(|_| {
                CliError::invalid(
                    path,
                    format!("line {line}: field {} ({field:?}) is not a number", header[j]),
                )
            })?;
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_trajectory(path: &Path) -> Result<Vec<TrajectoryRow>, CliError> {
    let rows = read_rows(path, TRAJECTORY_HEADER)?;
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            let line = i + 2;
            let agent = r[1];
            if agent < 0.0 || agent.fract() != 0.0 {
                return Err(CliError::invalid(
                    path,
                    format!("line {line}: agent index {agent} is not a non-negative integer"),
                ));
            }
            Ok(TrajectoryRow {
                t: r[0],
                agent: agent as usize,
                amplitude: r[2],
                phase: r[3],
                x: r[4],
                y: r[5],
                vx: r[6],
                vy: r[7],
            })
        })
        .collect()
}

pub fn read_targets(path: &Path) -> Result<Vec<TargetRow>, CliError> {
    let rows = read_rows(path, TARGET_HEADER)?;
    Ok(rows.iter().map(|r| TargetRow { rho: r[0], theta: r[1], magnitude: r[2] }).collect())
}

pub fn read_pattern(path: &Path) -> Result<Vec<PatternRow>, CliError> {
    let rows = read_rows(path, PATTERN_HEADER)?;
    Ok(rows
        .iter()
        .map(|r| PatternRow { rho: r[0], theta: r[1], magnitude: r[2], achieved: r[3] })
        .collect())
}

/// Run report: everything a later analysis step needs, except wall time,
/// which goes to stderr so identical runs write identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub stop_reason: String,
    pub fast_steps: u64,
    pub slow_steps: u64,
    pub rejected_steps: u64,
    pub initial: ObjectiveBreakdown,
    pub r#final: ObjectiveBreakdown,
    pub agents: Vec<AgentFinal>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    pub pattern_term: f64,
    pub motion_term: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentFinal {
    pub amplitude: f64,
    pub phase_mod_2pi: f64,
    pub position: [f64; 2],
}

pub fn write_summary(path: &Path, summary: &RunSummary) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut writer = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut writer, summary).map_err(|e| CliError::io(path, e))?;
    writer.write_all(b"\n").map_err(|e| CliError::io(path, e))?;
    writer.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}

#[cfg(test)]
pub fn read_summary(path: &Path) -> Result<RunSummary, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::invalid(path, e))
}
