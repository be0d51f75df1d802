//! Deterministic machine-readable outputs: CSV tables with 17-significant-
//! digit floats and LF line endings, plus serde_json reports.

use std::fmt::Write as _;
use std::path::Path;

use contactum_core::Trajectory;

/// Format a double with 17 significant digits so it round-trips bit-exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Trajectory CSV: `t,chart,coord_0..coord_{2n}` rows.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let dim = traj.samples[0].1.coords.len();
    let mut out = String::from("t,chart");
    for k in 0..dim {
        let _ = write!(out, ",coord_{k}");
    }
    out.push('\n');
    for (t, point) in &traj.samples {
        let _ = write!(out, "{},{}", fmt_f64(*t), point.chart);
        for c in &point.coords {
            let _ = write!(out, ",{}", fmt_f64(*c));
        }
        out.push('\n');
    }
    out
}

/// Characteristics CSV: one block per launch, `launch,t,chart,coord_*`.
pub fn characteristics_csv(trajectories: &[Trajectory]) -> String {
    let dim = trajectories
        .first()
        .map(|t| t.samples[0].1.coords.len())
        .unwrap_or(0);
    let mut out = String::from("launch,t,chart");
    for k in 0..dim {
        let _ = write!(out, ",coord_{k}");
    }
    out.push('\n');
    for (index, traj) in trajectories.iter().enumerate() {
        for (t, point) in &traj.samples {
            let _ = write!(out, "{index},{},{}", fmt_f64(*t), point.chart);
            for c in &point.coords {
                let _ = write!(out, ",{}", fmt_f64(*c));
            }
            out.push('\n');
        }
    }
    out
}

pub fn write_text(dir: &Path, name: &str, content: &str) -> anyhow::Result<std::path::PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, content)?;
    Ok(path)
}

pub fn write_json<T: serde::Serialize>(
    dir: &Path,
    name: &str,
    value: &T,
) -> anyhow::Result<std::path::PathBuf> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(dir, name, &text)
}
