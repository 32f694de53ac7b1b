//! CSV writers for trajectories, errors and training curves.
//!
//! Floats use Rust's shortest round-trip formatting, so parsing a written
//! value gives back the exact `f64`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::bench::eval::EvalReport;
use crate::error::{Error, Result};
use crate::meta::MetaCurvePoint;
use crate::trainer::CurvePoint;
use crate::world::TaskSpec;

pub const TRAJECTORY_HEADER: &str = "t,x,y,psi,ref_x,ref_y,err";

/// Writes `contents` to `path` as a whole file.
pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// One row per controller step `t = 0..=T`: the state reached after applying
/// `u_t`, its reference point and the distance between them.
pub fn trajectory_csv(report: &EvalReport) -> String {
    let tr = &report.tracking;
    let mut out = String::from(TRAJECTORY_HEADER);
    out.push('\n');
    for (t, ((x, r), e)) in tr.states[1..].iter().zip(&tr.reference).zip(&tr.errors).enumerate() {
        let _ = writeln!(out, "{t},{},{},{},{},{},{}", x[0], x[1], x[2], r[0], r[1], e);
    }
    out
}

pub fn export_trajectory_csv(report: &EvalReport, path: &Path) -> Result<()> {
    write_file(path, &trajectory_csv(report))
}

/// File name for the trajectory of `method` on held-out task `task`.
pub fn trajectory_file_name(method: &str, task: usize) -> String {
    format!("trajectory_{method}_{task}.csv")
}

pub fn errors_file_name(method: &str) -> String {
    format!("errors_{method}.csv")
}

pub const ERRORS_HEADER: &str = "task,kind,mean_error,max_error,episode_return,final_cost";

/// One row per evaluated task.
pub fn errors_csv(rows: &[(&TaskSpec, &EvalReport)]) -> String {
    let mut out = String::from(ERRORS_HEADER);
    out.push('\n');
    for (i, (spec, r)) in rows.iter().enumerate() {
        let final_cost = r.controller_costs.last().copied().unwrap_or(f64::NAN);
        let _ = writeln!(
            out,
            "{i},{},{},{},{},{}",
            spec.path.kind().name(),
            r.mean_error,
            r.max_error,
            r.episode_return,
            final_cost
        );
    }
    out
}

pub fn learning_curve_csv(curve: &[CurvePoint]) -> String {
    let mut out = String::from("iteration,mean_return,return_std\n");
    for p in curve {
        let _ = writeln!(out, "{},{},{}", p.iteration, p.mean_return, p.return_std);
    }
    out
}

pub fn meta_curve_csv(curve: &[MetaCurvePoint]) -> String {
    let mut out = String::from("meta_iteration,mean_pre_return,mean_post_return\n");
    for p in curve {
        let _ = writeln!(out, "{},{},{}", p.iteration, p.mean_pre_return, p.mean_post_return);
    }
    out
}
