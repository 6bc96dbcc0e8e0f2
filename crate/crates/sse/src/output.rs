//! Trajectory CSV, key=value metrics and two-column figure data.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use sse_core::sim::{mean_error_after, rms_voltage_error, sup_error_after, Trajectory};

use crate::error::CliError;

/// Writes `t, x_i, xhat_i, sigma, pi_j, v_i, vhat_i, sample_flag`. `sigma` is
/// 1-based; `xhat` is the selected estimate. Sample rows are always kept.
pub fn write_trajectory_csv<W: Write>(out: W, traj: &Trajectory, every: usize) -> Result<(), CliError> {
    let n = traj.x.first().map_or(0, |x| x.len());
    let n_pi = traj.pi.first().map_or(0, |p| p.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x_{i}")));
    header.extend((1..=n).map(|i| format!("xhat_{i}")));
    header.push("sigma".into());
    header.extend((1..=n_pi).map(|j| format!("pi_{j}")));
    header.extend((1..=n).map(|i| format!("v_{i}")));
    header.extend((1..=n).map(|i| format!("vhat_{i}")));
    header.push("sample_flag".into());
    w.write_record(&header).map_err(csv_err)?;
    let every = every.max(1);
    for i in 0..traj.len() {
        if i % every != 0 && !traj.sample_flag[i] && i + 1 != traj.len() {
            continue;
        }
        let mut row: Vec<String> = Vec::with_capacity(header.len());
        row.push(traj.t[i].to_string());
        row.extend(traj.x[i].iter().map(f64::to_string));
        row.extend(traj.selected[i].iter().map(f64::to_string));
        row.push((traj.sigma[i] + 1).to_string());
        row.extend(traj.pi[i].iter().map(f64::to_string));
        match &traj.voltage {
            Some(v) => {
                row.extend(v.v[i].iter().map(f64::to_string));
                row.extend(v.v_hat[i].iter().map(f64::to_string));
            }
            None => row.extend(std::iter::repeat_n(String::new(), 2 * n)),
        }
        row.push(u8::from(traj.sample_flag[i]).to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(std::io::Error::other(e.to_string()))
}

/// Ordered key=value pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metrics(pub Vec<(String, String)>);

impl Metrics {
    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.0.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.0 {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    pub fn parse(text: &str) -> Self {
        Metrics(
            text.lines()
                .filter_map(|l| l.split_once('='))
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .collect(),
        )
    }
}

pub const REFERENCE_RMS_V: f64 = 0.0234;

pub fn trajectory_metrics(traj: &Trajectory, rms_start: f64, transient: f64) -> Result<Metrics, CliError> {
    let mut m = Metrics::default();
    let after = transient.min(0.5 * traj.horizon());
    m.push("rms_voltage_error", rms_voltage_error(traj, rms_start)?);
    m.push("rms_voltage_error_reference", REFERENCE_RMS_V);
    m.push("sup_error", sup_error_after(traj, 0.0)?);
    m.push("sup_error_after_transient", sup_error_after(traj, after)?);
    m.push("mean_error_after_transient", mean_error_after(traj, after)?);
    m.push("transient_s", after);
    m.push("sigma_switches", traj.sigma_switches());
    m.push("samples", traj.samples.len());
    m.push("grid_points", traj.len());
    m.push("negative_voltage_points", traj.voltage.as_ref().map_or(0, |v| v.negative));
    Ok(m)
}

/// One `t value` file per customer with the selected estimation error `x_i − x̂_i`.
pub fn write_error_panels(dir: &Path, prefix: &str, traj: &Trajectory, every: usize) -> Result<Vec<String>, CliError> {
    std::fs::create_dir_all(dir)?;
    let n = traj.x.first().map_or(0, |x| x.len());
    let mut names = Vec::new();
    for c in 0..n {
        let name = format!("{prefix}_customer{}.dat", c + 1);
        let mut s = String::new();
        let _ = writeln!(s, "# t_s x_tilde_{}_VAr", c + 1);
        for i in (0..traj.len()).filter(|i| i % every.max(1) == 0 || traj.sample_flag[*i]) {
            let _ = writeln!(s, "{} {}", traj.t[i], traj.x[i][c] - traj.selected[i][c]);
        }
        std::fs::write(dir.join(&name), s)?;
        names.push(name);
    }
    Ok(names)
}
