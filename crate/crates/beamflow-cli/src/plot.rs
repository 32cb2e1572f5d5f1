//! `plot-data`: reshape a run's outputs into long-format CSVs that any
//! external plotting tool can consume directly.

use std::path::PathBuf;

use clap::Args;

use crate::error::CliError;
use crate::io;

#[derive(Args, Debug)]
pub struct PlotArgs {
    /// Run output directory holding trajectory.csv, pattern_initial.csv,
    /// and pattern_final.csv.
    pub dir: PathBuf,

    /// Trajectory file (default: DIR/trajectory.csv).
    #[arg(long)]
    pub trajectory: Option<PathBuf>,

    /// Initial achieved pattern (default: DIR/pattern_initial.csv).
    #[arg(long)]
    pub initial: Option<PathBuf>,

    /// Final achieved pattern (default: DIR/pattern_final.csv).
    #[arg(long = "final")]
    pub final_pattern: Option<PathBuf>,

    /// Where to write pattern_polar.csv and evolution.csv (default: DIR).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,

    /// Overwrite existing output files.
    #[arg(long)]
    pub force: bool,
}

pub fn run(args: &PlotArgs) -> Result<(), CliError> {
    let trajectory_path = args.trajectory.clone().unwrap_or_else(|| args.dir.join("trajectory.csv"));
    let initial_path = args.initial.clone().unwrap_or_else(|| args.dir.join("pattern_initial.csv"));
    let final_path = args.final_pattern.clone().unwrap_or_else(|| args.dir.join("pattern_final.csv"));
    let out_dir = args.out_dir.clone().unwrap_or_else(|| args.dir.clone());

    let rows = io::read_trajectory(&trajectory_path)?;
    if rows.is_empty() {
        return Err(CliError::invalid(&trajectory_path, "no samples"));
    }
    let initial = io::read_pattern(&initial_path)?;
    let fin = io::read_pattern(&final_path)?;
    if initial.len() != fin.len() {
        return Err(CliError::Validation(format!(
            "grid mismatch: {} has {} rows, {} has {}",
            initial_path.display(),
            initial.len(),
            final_path.display(),
            fin.len()
        )));
    }
    for (i, (a, b)) in initial.iter().zip(&fin).enumerate() {
        if a.rho != b.rho || a.theta != b.theta || a.magnitude != b.magnitude {
            return Err(CliError::Validation(format!(
                "grid mismatch at row {}: ({}, {}, {}) vs ({}, {}, {})",
                i + 2,
                a.rho,
                a.theta,
                a.magnitude,
                b.rho,
                b.theta,
                b.magnitude
            )));
        }
    }

    std::fs::create_dir_all(&out_dir).map_err(|e| CliError::io(&out_dir, e))?;
    let polar_path = out_dir.join("pattern_polar.csv");
    let evolution_path = out_dir.join("evolution.csv");
    io::guard_overwrite(&polar_path, args.force)?;
    io::guard_overwrite(&evolution_path, args.force)?;

    let polar: Vec<[f64; 4]> = initial
        .iter()
        .zip(&fin)
        .map(|(a, b)| [a.theta, a.magnitude, a.achieved, b.achieved])
        .collect();
    io::write_polar(&polar_path, &polar)?;

    let evolution: Vec<(f64, usize, f64, f64)> = rows
        .iter()
        .map(|r| (r.t, r.agent, r.amplitude, r.phase.rem_euclid(std::f64::consts::TAU)))
        .collect();
    io::write_evolution(&evolution_path, &evolution)?;

    println!(
        "wrote {} polar rows and {} evolution rows to {}",
        polar.len(),
        evolution.len(),
        out_dir.display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args_for(dir: &std::path::Path) -> PlotArgs {
        PlotArgs {
            dir: dir.to_path_buf(),
            trajectory: None,
            initial: None,
            final_pattern: None,
            out_dir: None,
            force: false,
        }
    }

    fn write_pattern_file(path: &std::path::Path, rows: &[(f64, f64, f64, f64)]) {
        let mut text = String::from("rho,theta,magnitude,achieved\n");
        for (rho, theta, magnitude, achieved) in rows {
            text.push_str(&format!("{rho},{theta},{magnitude},{achieved}\n"));
        }
        std::fs::write(path, text).expect("write pattern file");
    }

    #[test]
    fn header_only_trajectory_is_reported_as_no_samples() {
        let dir = tempfile::tempdir().expect("temp dir");
        std::fs::write(
            dir.path().join("trajectory.csv"),
            "t,m,a_m,alpha_m,x_m,y_m,vx_m,vy_m\n",
        )
        .expect("write");
        write_pattern_file(&dir.path().join("pattern_initial.csv"), &[(10.0, 0.0, 1.0, 0.9)]);
        write_pattern_file(&dir.path().join("pattern_final.csv"), &[(10.0, 0.0, 1.0, 1.0)]);
        let err = run(&args_for(dir.path())).expect_err("empty trajectory must fail");
        assert!(err.to_string().contains("no samples"), "got: {err}");
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn pattern_grids_must_agree() {
        let dir = tempfile::tempdir().expect("temp dir");
        std::fs::write(
            dir.path().join("trajectory.csv"),
            "t,m,a_m,alpha_m,x_m,y_m,vx_m,vy_m\n0.0,0,1.0,0.0,0.0,0.0,0.0,0.0\n",
        )
        .expect("write");
        write_pattern_file(&dir.path().join("pattern_initial.csv"), &[(10.0, 0.0, 1.0, 0.9)]);
        write_pattern_file(&dir.path().join("pattern_final.csv"), &[(10.0, 0.25, 1.0, 1.0)]);
        let err = run(&args_for(dir.path())).expect_err("different grids must fail");
        assert!(err.to_string().contains("grid mismatch"), "got: {err}");
    }
}
