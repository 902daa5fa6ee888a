//! File formats: grid-value files, plot-ready CSV output, and the JSON
//! diagnostics summary. Float columns use the shortest round-trip decimal
//! form, so reruns of the same configuration are byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::config::RunConfig;
use crate::diagnostics::{MeasureReport, RegularityReport};
use crate::error::ConfigError;
use crate::flow::{DissipationReport, Trajectory};
use crate::stepper::classify_contacts;
use crate::studies::{EpsStudyRow, RhoStudyRow, TauStudyRow};

/// Contents of a grid-value file: a 3-line header (dimension, per-axis
/// resolutions, per-axis extents) followed by one value per line, row-major
/// over the full grid including the boundary ring.
#[derive(Debug, Clone)]
pub struct ValuesFile {
    pub dimension: usize,
    pub resolutions: Vec<usize>,
    pub extents: Vec<f64>,
    pub values: Vec<f64>,
}

pub fn read_values_file(path: &Path) -> Result<ValuesFile, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_values(&text).map_err(|message| ConfigError::ObstacleFile {
        path: path.display().to_string(),
        message,
    })
}

fn parse_values(text: &str) -> Result<ValuesFile, String> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let dimension: usize = lines
        .next()
        .ok_or("missing dimension header line")?
        .parse()
        .map_err(|_| "bad dimension header line".to_string())?;
    let resolutions: Vec<usize> = split_list(lines.next().ok_or("missing resolution header line")?)
        .map_err(|e| format!("bad resolution header: {e}"))?;
    let extents: Vec<f64> = split_list(lines.next().ok_or("missing extent header line")?)
        .map_err(|e| format!("bad extent header: {e}"))?;
    if resolutions.len() != dimension || extents.len() != dimension {
        return Err(format!(
            "header promises {dimension} axes but gives {} resolutions and {} extents",
            resolutions.len(),
            extents.len()
        ));
    }
    let expected: usize = resolutions.iter().map(|r| r + 2).product();
    let values: Vec<f64> = lines
        .map(|l| l.parse().map_err(|_| format!("bad value line `{l}`")))
        .collect::<Result<_, _>>()?;
    if values.len() != expected {
        return Err(format!(
            "expected {expected} values (full grid including boundary ring), got {}",
            values.len()
        ));
    }
    Ok(ValuesFile {
        dimension,
        resolutions,
        extents,
        values,
    })
}

fn split_list<T: std::str::FromStr>(line: &str) -> Result<Vec<T>, String> {
    line.split([',', ' '])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| format!("cannot parse `{s}`")))
        .collect()
}

/// Write a grid-value file in the format [`read_values_file`] parses.
pub fn write_values_file(
    path: &Path,
    dimension: usize,
    resolutions: &[usize],
    extents: &[f64],
    values: &[f64],
) -> std::io::Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "{dimension}");
    let _ = writeln!(
        out,
        "{}",
        resolutions
            .iter()
            .map(|r| r.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    );
    let _ = writeln!(
        out,
        "{}",
        extents
            .iter()
            .map(|e| e.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    );
    for v in values {
        let _ = writeln!(out, "{v}");
    }
    fs::write(path, out)
}

/// Trajectory CSV: one row per (step, node) with coordinates, state,
/// velocity, residual density, and contact flags. Step 0 carries the
/// initial state with zero velocity and residual.
pub fn trajectory_csv(traj: &Trajectory, active_tol: f64) -> String {
    let mut out = String::from("# plateflow trajectory-csv v1\n");
    out.push_str("step,time,node,x,y,u,v,mu,lower_contact,upper_contact\n");
    let grid = traj.grid();
    let n = grid.node_count();
    let (lo0, up0) = classify_contacts(traj.pair(), traj.state(0), active_tol);
    for j in 0..n {
        let c = grid.coords(j);
        let _ = writeln!(
            out,
            "0,0,{j},{},{},{},0,0,{},{}",
            c[0],
            c[1],
            traj.state(0)[j],
            u8::from(lo0[j]),
            u8::from(up0[j]),
        );
    }
    for (i, step) in traj.step_results().iter().enumerate() {
        let t = traj.timestamp(i + 1);
        for j in 0..n {
            let c = grid.coords(j);
            let _ = writeln!(
                out,
                "{},{t},{j},{},{},{},{},{},{},{}",
                i + 1,
                c[0],
                c[1],
                step.u_new[j],
                step.velocity[j],
                step.mu[j],
                u8::from(step.lower_contact[j]),
                u8::from(step.upper_contact[j]),
            );
        }
    }
    out
}

/// JSON diagnostics summary written next to the trajectory CSV.
#[derive(Debug, Serialize)]
pub struct DiagnosticsSummary<'a> {
    pub schema: &'static str,
    pub initial_projected: bool,
    pub dissipation: &'a DissipationReport,
    pub measure: &'a MeasureReport,
    pub regularity: &'a RegularityReport,
}

pub fn diagnostics_json(
    traj: &Trajectory,
    dissipation: &DissipationReport,
    measure: &MeasureReport,
    regularity: &RegularityReport,
) -> String {
    let summary = DiagnosticsSummary {
        schema: "plateflow-diagnostics-v1",
        initial_projected: traj.initial_was_projected(),
        dissipation,
        measure,
        regularity,
    };
    let mut text = serde_json::to_string_pretty(&summary).expect("reports serialize");
    text.push('\n');
    text
}

pub fn rho_study_csv(rows: &[RhoStudyRow]) -> String {
    let mut out = String::from("# plateflow rho-study-csv v1\n");
    out.push_str(
        "rho,gap_h,lower_violation_mass,upper_violation_mass,bound_rho_e0,newton_iterations\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.rho,
            r.gap_h,
            r.lower_violation_mass,
            r.upper_violation_mass,
            r.bound_rho_e0,
            r.newton_iterations
        );
    }
    out
}

pub fn eps_study_csv(rows: &[EpsStudyRow]) -> String {
    let mut out = String::from("# plateflow eps-study-csv v1\n");
    out.push_str("epsilon,step,time,gap_max\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.epsilon, r.step, r.time, r.gap_max);
    }
    out
}

pub fn tau_study_csv(rows: &[TauStudyRow]) -> String {
    let mut out = String::from("# plateflow tau-study-csv v1\n");
    out.push_str(
        "steps,tau,gap_to_double,holder_quarter,cumulative_tv2,cumulative_signed2,\
         cumulative_d2_sup2,velocity_square_sum,bound_two_e0,dissipation_ok\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.steps,
            r.tau,
            if r.gap_to_double.is_nan() {
                String::from("nan")
            } else {
                r.gap_to_double.to_string()
            },
            r.holder_quarter,
            r.cumulative_tv2,
            r.cumulative_signed2,
            r.cumulative_d2_sup2,
            r.velocity_square_sum,
            r.bound_two_e0,
            u8::from(r.dissipation_ok)
        );
    }
    out
}

/// Write a file, creating the parent directory if needed. Rerunning a study
/// with the same configuration overwrites the file identically.
pub fn write_output(dir: &Path, name: &str, contents: &str) -> std::io::Result<std::path::PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

/// Echo of the effective configuration for reproducibility.
pub fn config_echo(config: &RunConfig) -> String {
    format!(
        "# plateflow config echo\n\
         dimension = {}\nextent = {:?}\nresolution = {:?}\nhorizon = {}\nsteps = {}\n\
         method = {:?}\nseed = {}\n",
        config.dimension,
        config.extents,
        config.resolutions,
        config.horizon,
        config.steps,
        config.method,
        config.seed
    )
}
