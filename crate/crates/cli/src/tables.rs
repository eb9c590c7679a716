//! Comma-separated tables and atomic file output.
//!
//! Numbers are written with 17 significant digits, so reading a table back
//! reproduces every value exactly.

use std::io::Write;
use std::path::Path;

use nalgebra::Vector2;
use purcell_core::integrator::StateTrajectory;
use purcell_core::se2::AlgebraCovector;
use purcell_core::{AbnormalityFlag, Costate, ControlVector, GroupElement, ShapeState};

use crate::config::Units;
use crate::error::CliError;

pub const TRAJECTORY_HEADER: [&str; 8] = ["Time", "alpha1", "alpha2", "u1", "u2", "x", "y", "theta"];
pub const PHASE_HEADER: [&str; 6] = ["Time", "alpha1", "alpha2", "x", "y", "theta"];
pub const CONTROLS_HEADER: [&str; 2] = ["u1", "u2"];
pub const COSTATES_HEADER: [&str; 9] =
    ["step", "zeta_vx", "zeta_vy", "zeta_omega", "rho_vx", "rho_vy", "rho_omega", "xi1", "xi2"];

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `contents` to a temporary file next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| CliError::Io(e.error))?;
    Ok(())
}

fn render<R: IntoIterator<Item = Vec<String>>>(header: &[&str], rows: R) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(vec![]);
    w.write_record(header).expect("writing to memory");
    for row in rows {
        w.write_record(&row).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("ascii output")
}

/// `N + 1` rows; the last row repeats the final control so state and control
/// columns align.
pub fn trajectory_table(traj: &StateTrajectory, h: f64, units: Units) -> String {
    let a = units.angle_scale();
    let n = traj.steps();
    render(
        &TRAJECTORY_HEADER,
        (0..=n).map(|k| {
            let alpha = traj.alphas[k].0;
            let u = traj.controls.get(k).or(traj.controls.last()).copied().unwrap_or_else(Vector2::zeros);
            let g = traj.poses[k];
            vec![
                num(h * k as f64),
                num(alpha[0] * a),
                num(alpha[1] * a),
                num(u[0] * a),
                num(u[1] * a),
                num(g.x),
                num(g.y),
                num(g.theta * a),
            ]
        }),
    )
}

/// Rows at every multiple of `interval` seconds that falls on a step.
pub fn phase_table(traj: &StateTrajectory, h: f64, interval: f64, units: Units) -> String {
    let a = units.angle_scale();
    let stride = ((interval / h).round() as usize).max(1);
    render(
        &PHASE_HEADER,
        (0..=traj.steps()).step_by(stride).map(|k| {
            let alpha = traj.alphas[k].0;
            let g = traj.poses[k];
            vec![num(h * k as f64), num(alpha[0] * a), num(alpha[1] * a), num(g.x), num(g.y), num(g.theta * a)]
        }),
    )
}

/// Joint rates in rad/s, one row per step.
pub fn controls_table(controls: &[ControlVector]) -> String {
    render(&CONTROLS_HEADER, controls.iter().map(|u| vec![num(u[0]), num(u[1])]))
}

pub fn costates_table(costates: &[Costate], nu: AbnormalityFlag) -> String {
    let body = render(
        &COSTATES_HEADER,
        costates.iter().enumerate().map(|(k, c)| {
            let mut row = vec![k.to_string()];
            row.extend(c.zeta.0.iter().chain(c.rho.0.iter()).chain(c.xi.iter()).map(|v| num(*v)));
            row
        }),
    );
    format!("# nu = {}\n{body}", nu.nu())
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>, CliError> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Parses every record as floats, checking the header.
fn read_rows(path: &Path, header: &[&str]) -> Result<Vec<Vec<f64>>, CliError> {
    let mut rd = reader(path)?;
    let found = rd.headers().map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(CliError::Input(format!(
            "{}: expected header {}, found {}",
            path.display(),
            header.join(","),
            found.iter().collect::<Vec<_>>().join(",")
        )));
    }
    rd.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            if rec.len() != header.len() {
                return Err(CliError::Input(format!("{}: row {} has {} fields", path.display(), i + 1, rec.len())));
            }
            rec.iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| CliError::Input(format!("{}: row {}: invalid number {f:?}", path.display(), i + 1)))
                })
                .collect()
        })
        .collect()
}

pub fn read_controls(path: &Path) -> Result<Vec<ControlVector>, CliError> {
    Ok(read_rows(path, &CONTROLS_HEADER)?.into_iter().map(|r| Vector2::new(r[0], r[1])).collect())
}

/// Times and trajectory from a trajectory table; the controls are the first
/// `N` rows.
pub fn read_trajectory(path: &Path, units: Units) -> Result<(Vec<f64>, StateTrajectory), CliError> {
    let rows = read_rows(path, &TRAJECTORY_HEADER)?;
    if rows.len() < 2 {
        return Err(CliError::Input(format!("{}: need at least two rows", path.display())));
    }
    let a = units.angle_scale();
    let times = rows.iter().map(|r| r[0]).collect();
    let alphas = rows.iter().map(|r| ShapeState::new(r[1] / a, r[2] / a)).collect();
    let poses = rows.iter().map(|r| GroupElement::new(r[5], r[6], r[7] / a)).collect();
    let controls = rows[..rows.len() - 1].iter().map(|r| Vector2::new(r[3] / a, r[4] / a)).collect();
    Ok((times, StateTrajectory { alphas, poses, controls }))
}

pub fn read_costates(path: &Path) -> Result<(Vec<Costate>, AbnormalityFlag), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let nu = text
        .lines()
        .filter_map(|l| l.trim().strip_prefix('#'))
        .find_map(|l| l.trim().strip_prefix("nu").map(|r| r.trim_start_matches([' ', '=']).trim().to_string()))
        .ok_or_else(|| CliError::Input(format!("{}: missing '# nu = ...' line", path.display())))?;
    let nu = nu
        .parse::<f64>()
        .map_err(|_| CliError::Input(format!("{}: invalid nu {nu:?}", path.display())))
        .and_then(|v| AbnormalityFlag::from_nu(v).map_err(|e| CliError::Input(e.to_string())))?;
    let costates = read_rows(path, &COSTATES_HEADER)?
        .into_iter()
        .map(|r| Costate {
            zeta: AlgebraCovector::new(r[1], r[2], r[3]),
            rho: AlgebraCovector::new(r[4], r[5], r[6]),
            xi: Vector2::new(r[7], r[8]),
        })
        .collect();
    Ok((costates, nu))
}
