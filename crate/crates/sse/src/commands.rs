//! The five subcommands. Each returns `Ok` on success or the error whose exit
//! code the binary reports; reports go to stdout and, when an output
//! directory is given, to files inside it.

use std::fmt::Write as _;
use std::path::Path;

use sse_core::lmi::{build_block_matrices, design_stage1, design_stage2, verify_certificates, BlockMatrices};
use sse_core::lyapunov::{
    assemble_q_family, check_jump_condition, check_sandwich, iss_constants, lyapunov_series, qbar_negative_on_grid,
    sandwich_bounds, schur_implication_check,
};
use sse_core::observer::SubsetFamily;
use sse_core::sim::{integrate, Scenario, Trajectory};

use crate::config::Config;
use crate::design_file::DesignFile;
use crate::error::CliError;
use crate::output::{trajectory_metrics, write_error_panels, write_trajectory_csv, Metrics, REFERENCE_RMS_V};

/// Absolute bound on `λ_max` of the restricted `Q₁ − Q₂`.
pub const SCHUR_TOL: f64 = 1e-8;
/// Relative tolerance of the sandwich and jump checks.
pub const TRAJECTORY_REL_TOL: f64 = 1e-8;

struct Setup {
    scenario: Scenario,
    family: SubsetFamily,
    bm: BlockMatrices,
}

fn setup(cfg: &Config) -> Result<Setup, CliError> {
    let scenario = cfg.scenario()?;
    let family = cfg.family()?;
    let bm = build_block_matrices(&scenario.system, &family)?;
    Ok(Setup { scenario, family, bm })
}

pub struct DesignRun {
    pub file: DesignFile,
    pub report: String,
    pub stage1_feasible: bool,
    pub stage2_feasible: bool,
}

impl DesignRun {
    pub fn status(&self) -> Result<(), CliError> {
        if !self.stage1_feasible {
            return Err(CliError::Infeasible(format!("stage 1: margin {:.3e}", self.file.stage1.margin)));
        }
        match &self.file.stage2 {
            Some(s) if !s.feasible => Err(CliError::Infeasible(match &s.obstruction {
                Some(o) => format!("stage 2 at T̄ = {} s: {o}", s.t_bar_s),
                None => format!("stage 2 at T̄ = {} s: best margin {:.3e}", s.t_bar_s, s.margin),
            })),
            _ => Ok(()),
        }
    }
}

/// Runs stage 1 and, if it succeeds, stage 2. Infeasibility is reported, not raised.
pub fn run_design(cfg: &Config) -> Result<DesignRun, CliError> {
    let Setup { scenario, family, bm } = setup(cfg)?;
    let settings = cfg.synthesis_settings();
    let t_bar = cfg.sampling.t_bar_s;
    let s1 = design_stage1(&bm, &settings)?;
    let s2 = if s1.feasible { Some(design_stage2(&bm, &s1.gains, t_bar, &settings)?) } else { None };
    let file = DesignFile::new(&scenario.system, &family, t_bar, &s1, s2.as_ref());

    let mut r = String::new();
    let c = &s1.certificate;
    let _ = writeln!(r, "bank: N_c = {}, N_a = {}, {} observers", family.n_c, family.n_a, family.n_observers());
    let _ = writeln!(r, "stage 1: {}", if s1.feasible { "feasible" } else { "INFEASIBLE" });
    let _ = writeln!(r, "  nu = {:.6}  mu_d = {:.6}  mu_w = {:.6}", c.nu, c.mu_d, c.mu_w);
    let _ =
        writeln!(r, "  margin = {:.3e}  solver = {:?} after {} iterations", s1.margin, s1.solver_status, s1.iterations);
    let _ = writeln!(
        r,
        "  lambda_max reduced = {:.3e}, full = {:.3e} ({} zero rows per observer removed)",
        s1.reduced_lambda_max, s1.full_lambda_max, s1.removed_rows
    );
    for note in &s1.notes {
        let _ = writeln!(r, "  note: {note}");
    }
    match &s2 {
        None => {
            let _ = writeln!(r, "stage 2: skipped");
        }
        Some(s2) => {
            let _ = writeln!(r, "stage 2 (T̄ = {t_bar} s): {}", if s2.feasible { "feasible" } else { "INFEASIBLE" });
            let _ = writeln!(r, "  margin = {:.3e}", s2.margin);
            let _ = writeln!(r, "  lambda_max second = {:.3e}, third = {:.3e}", s2.lmi8_lambda_max, s2.lmi9_lambda_max);
            if let Some(o) = &s2.obstruction {
                let _ = writeln!(r, "  obstruction: {}", o.detail);
            }
        }
    }
    Ok(DesignRun {
        stage1_feasible: s1.feasible,
        stage2_feasible: s2.as_ref().is_some_and(|s| s.feasible),
        file,
        report: r,
    })
}

pub fn cmd_design(cfg: &Config, out: &Path) -> Result<(), CliError> {
    let run = run_design(cfg)?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("design.json"), run.file.to_json())?;
    print!("{}", run.report);
    println!("design written to {}", out.join("design.json").display());
    run.status()
}

pub fn load_design(path: &Path) -> Result<DesignFile, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read design file {}: {e}", path.display())))?;
    DesignFile::from_json(&text)
}

pub struct SimulationRun {
    pub trajectory: Trajectory,
    pub metrics: Metrics,
}

/// Simulates the configured scenario with the design's gains and the attack at `scale`.
pub fn run_simulation(cfg: &Config, design: &DesignFile, scale: f64) -> Result<SimulationRun, CliError> {
    let Setup { mut scenario, family, .. } = setup(cfg)?;
    design.check_matches(&scenario.system, &family, cfg.sampling.t_bar_s)?;
    let bank = design.gains()?.bank(&family)?;
    scenario.attack = cfg.attack(scale);
    let trajectory = integrate(&scenario, &bank)?;
    let mut metrics = trajectory_metrics(&trajectory, cfg.simulation.rms_start_s, cfg.simulation.transient_s)?;
    metrics.push("attack_scale", scale);
    metrics.push("seed", cfg.noise.seed);
    Ok(SimulationRun { trajectory, metrics })
}

pub fn write_simulation(cfg: &Config, run: &SimulationRun, out: &Path, prefix: &str) -> Result<(), CliError> {
    std::fs::create_dir_all(out)?;
    let csv_file = std::fs::File::create(out.join(format!("{prefix}trajectory.csv")))?;
    write_trajectory_csv(std::io::BufWriter::new(csv_file), &run.trajectory, cfg.simulation.csv_every)?;
    std::fs::write(out.join(format!("{prefix}metrics.txt")), run.metrics.render())?;
    let panel = if prefix.is_empty() { "run" } else { prefix.trim_end_matches('_') };
    write_error_panels(&out.join("figures"), panel, &run.trajectory, cfg.simulation.csv_every)?;
    Ok(())
}

/// One simulation, or a sweep when more than one scale is given.
pub fn cmd_simulate(cfg: &Config, design: &Path, out: &Path, scales: &[f64]) -> Result<(), CliError> {
    let design = load_design(design)?;
    if scales.len() > 1 {
        return sweep(cfg, &design, out, scales);
    }
    let scale = scales.first().copied().unwrap_or(cfg.attack.scale);
    let run = run_simulation(cfg, &design, scale)?;
    write_simulation(cfg, &run, out, "")?;
    print!("{}", run.metrics.render());
    Ok(())
}

pub const SWEEP_COLUMNS: [&str; 6] = [
    "attack_scale",
    "rms_voltage_error",
    "sup_error_after_transient",
    "mean_error_after_transient",
    "sigma_switches",
    "samples",
];

/// Runs one simulation per scale on scoped threads and writes `sweep.csv`.
pub fn sweep(cfg: &Config, design: &DesignFile, out: &Path, scales: &[f64]) -> Result<(), CliError> {
    if scales.is_empty() {
        return Err(CliError::Usage("sweep needs at least one --attack-scale".into()));
    }
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(scales.len());
    let chunk = scales.len().div_ceil(workers);
    let results: Vec<Result<Metrics, CliError>> = std::thread::scope(|s| {
        let handles: Vec<_> = scales
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter().map(|&c| run_simulation(cfg, design, c).map(|r| r.metrics)).collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("simulation thread panicked")).collect()
    });
    std::fs::create_dir_all(out)?;
    let mut w = csv::Writer::from_path(out.join("sweep.csv")).map_err(|e| CliError::Io(std::io::Error::other(e)))?;
    w.write_record(SWEEP_COLUMNS).map_err(|e| CliError::Io(std::io::Error::other(e)))?;
    for m in results {
        let m = m?;
        let row: Vec<&str> = SWEEP_COLUMNS.iter().map(|k| m.get(k).unwrap_or("")).collect();
        println!("{}", row.join(","));
        w.write_record(&row).map_err(|e| CliError::Io(std::io::Error::other(e)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_sweep(cfg: &Config, design: &Path, out: &Path, scales: &[f64]) -> Result<(), CliError> {
    let design = load_design(design)?;
    let scales = if scales.is_empty() { vec![0.0, 1.0, 10.0] } else { scales.to_vec() };
    sweep(cfg, &design, out, &scales)
}

#[derive(Debug, Clone, Default)]
pub struct VerifyRun {
    pub report: String,
    pub failures: Vec<String>,
}

impl VerifyRun {
    pub fn status(&self) -> Result<(), CliError> {
        if self.failures.is_empty() {
            Ok(())
        } else {
            Err(CliError::Verification(self.failures.iter().map(|f| format!("  - {f}\n")).collect()))
        }
    }
}

/// Certificate checks, the `Q̄(τ)` grid, the `Q₁ − Q₂` check and, with
/// `simulate`, the sandwich and jump conditions along the configured run.
pub fn run_verify(cfg: &Config, design: &DesignFile, simulate: bool) -> Result<VerifyRun, CliError> {
    let Setup { scenario, family, bm } = setup(cfg)?;
    design.check_matches(&scenario.system, &family, cfg.sampling.t_bar_s)?;
    let settings = cfg.synthesis_settings();
    let gains = design.gains()?;
    let c1 = design.stage1_certificate()?;
    let mut v = VerifyRun::default();
    let r = &mut v.report;
    let Some(c2) = design.stage2_certificate()? else {
        v.failures.push("design has no stage-2 certificate (stage 1 was infeasible)".into());
        let _ = writeln!(r, "no stage-2 certificate; nothing further to check");
        return Ok(v);
    };

    let rep = verify_certificates(&bm, &gains, &c1, &c2, &settings)?;
    let _ = writeln!(
        r,
        "lambda_max first condition = {:.3e} (as printed: {:.3e})",
        rep.lmi7_lambda_max, rep.lmi7_printed_lambda_max
    );
    let _ = writeln!(r, "lambda_max second = {:.3e}, third = {:.3e}", rep.lmi8_lambda_max, rep.lmi9_lambda_max);
    let _ = writeln!(
        r,
        "lambda_min P1 = {:.3e}, P2 = {:.3e}, P3 = {:.3e}; min U = {:.3e}; gain mismatch = {:.3e}",
        rep.p1_lambda_min, rep.p2_lambda_min, rep.p3_lambda_min, rep.u_min, rep.gain_mismatch
    );
    v.failures.extend(rep.failures.iter().cloned());

    let qf = match assemble_q_family(&bm, &gains, &c1, &c2) {
        Ok(qf) => qf,
        Err(e) => {
            v.failures.push(format!("Q-matrix family: {e}"));
            return Ok(v);
        }
    };
    let qb = qbar_negative_on_grid(&qf, cfg.synthesis.qbar_grid_points)?;
    let _ = writeln!(
        r,
        "Qbar grid ({} points): worst lambda_max = {:.3e} at tau = {:.4}, kappa = {:.3e}",
        qb.grid.len(),
        qb.worst,
        qb.worst_tau,
        qb.kappa
    );
    if qb.worst.is_nan() || qb.worst >= 0.0 {
        v.failures.push(format!(
            "Qbar(tau) not negative definite: lambda_max = {:.3e} at tau = {:.4}",
            qb.worst, qb.worst_tau
        ));
    }
    let sc = schur_implication_check(&bm, &gains, &qf, cfg.synthesis.schur_samples, cfg.noise.seed);
    let _ = writeln!(
        r,
        "Q1 - Q2: lambda_max = {:.3e}; restricted worst over {} sector samples = {:.3e}",
        sc.lambda_max, sc.samples, sc.worst_restricted
    );
    if sc.worst_restricted > SCHUR_TOL {
        v.failures.push(format!("Q1 - Q2 restricted lambda_max {:.3e} exceeds {SCHUR_TOL:e}", sc.worst_restricted));
    }
    match iss_constants(&bm, &gains, &c1, &c2, qb.kappa) {
        Ok(b) => {
            let _ = writeln!(
                r,
                "ISS: a_lower = {:.3e}, a_upper = {:.3e}, Pi = {:.3e}, Theta = {:.3e}, decay rate = {:.3e}",
                b.a_lower,
                b.a_upper,
                b.worst.pi,
                b.worst.theta,
                b.decay_rate()
            );
        }
        Err(e) => {
            let _ = writeln!(r, "ISS constants unavailable: {e}");
        }
    }

    if simulate {
        let bank = gains.bank(&family)?;
        let traj = integrate(&scenario, &bank)?;
        let points = traj.error_points();
        let series = lyapunov_series(&points, &c1, &c2)?;
        let sw = check_sandwich(&series, sandwich_bounds(&c1, &c2), TRAJECTORY_REL_TOL);
        let jp = check_jump_condition(&points, &series, TRAJECTORY_REL_TOL);
        let _ = writeln!(
            r,
            "sandwich_checks = {}, lower_violations = {}, upper_violations = {}",
            sw.checked, sw.lower_violations, sw.upper_violations
        );
        let _ = writeln!(r, "jump_checks = {}, jump_violations = {}", jp.checked, jp.violations);
        if sw.lower_violations + sw.upper_violations > 0 {
            v.failures.push(format!(
                "sandwich bound violated at {} of {} points (first at t = {:.4} s)",
                sw.lower_violations + sw.upper_violations,
                sw.checked,
                sw.first_violation.unwrap_or(f64::NAN)
            ));
        }
        if jp.violations > 0 {
            v.failures.push(format!("jump condition violated at {} of {} samples", jp.violations, jp.checked));
        }
    }
    Ok(v)
}

pub fn cmd_verify(cfg: &Config, design: &Path, out: Option<&Path>, simulate: bool) -> Result<(), CliError> {
    let design = load_design(design)?;
    let v = run_verify(cfg, &design, simulate)?;
    let text = render_verify(&v);
    print!("{text}");
    if let Some(out) = out {
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join("verify.txt"), &text)?;
    }
    v.status()
}

fn render_verify(v: &VerifyRun) -> String {
    let mut s = v.report.clone();
    if v.failures.is_empty() {
        s.push_str("verification: PASS\n");
    } else {
        s.push_str("verification: FAIL\n");
        for f in &v.failures {
            let _ = writeln!(s, "  - {f}");
        }
    }
    s
}

/// Design, attacked and attack-free simulations, verification and a summary.
/// Every step runs; the exit status is that of the first failing step.
pub fn cmd_reproduce(cfg: &Config, out: &Path, scale: f64) -> Result<(), CliError> {
    std::fs::create_dir_all(out)?;
    let mut table: Vec<(String, bool, String)> = Vec::new();
    let mut first_err: Option<CliError> = None;
    let note = |e: Result<(), CliError>, first: &mut Option<CliError>| {
        if let Err(e) = e {
            first.get_or_insert(e);
        }
    };

    let design = run_design(cfg)?;
    std::fs::write(out.join("design.json"), design.file.to_json())?;
    std::fs::write(out.join("design.txt"), &design.report)?;
    print!("{}", design.report);
    table.push((
        "stage 1 feasible".into(),
        design.stage1_feasible,
        format!("margin {:.3e}", design.file.stage1.margin),
    ));
    let s2_detail = design.file.stage2.as_ref().map_or("skipped".to_string(), |s| format!("margin {:.3e}", s.margin));
    table.push(("stage 2 feasible".into(), design.stage2_feasible, s2_detail));
    note(design.status(), &mut first_err);

    let attacked = run_simulation(cfg, &design.file, scale)?;
    write_simulation(cfg, &attacked, out, "attacked_")?;
    let baseline = run_simulation(cfg, &design.file, 0.0)?;
    write_simulation(cfg, &baseline, out, "baseline_")?;
    let rms = attacked.metrics.get("rms_voltage_error").and_then(|v| v.parse::<f64>().ok()).unwrap_or(f64::NAN);
    let in_band = (0.005..=0.1).contains(&rms);
    table.push((
        "rms voltage error in [0.005, 0.1] V".into(),
        in_band,
        format!("{rms:.6} V (reference {REFERENCE_RMS_V} V)"),
    ));
    let sup = |m: &Metrics| m.get("sup_error_after_transient").and_then(|v| v.parse::<f64>().ok()).unwrap_or(f64::NAN);
    let (sa, sb) = (sup(&attacked.metrics), sup(&baseline.metrics));
    let ratio = sa.max(sb) / sa.min(sb).max(f64::MIN_POSITIVE);
    let band = sa == sb || ratio <= 2.0;
    table.push(("attacked vs attack-free within factor 2".into(), band, format!("sup errors {sa:.4e} / {sb:.4e}")));

    let verify = run_verify(cfg, &design.file, true)?;
    let vtext = render_verify(&verify);
    std::fs::write(out.join("verify.txt"), &vtext)?;
    print!("{vtext}");
    table.push((
        "certificate verification".into(),
        verify.failures.is_empty(),
        format!("{} failures", verify.failures.len()),
    ));
    note(verify.status(), &mut first_err);

    let mut summary = String::new();
    let _ = writeln!(summary, "N_c = {}, N_a = {}, attack scale = {scale}", cfg.n_customers(), cfg.observer.n_a);
    let _ = writeln!(summary, "rms_voltage_error = {rms:.6} V");
    let _ = writeln!(summary, "rms_voltage_error_reference = {REFERENCE_RMS_V} V");
    for (name, ok, detail) in &table {
        let _ = writeln!(summary, "{:<4} {name}: {detail}", if *ok { "PASS" } else { "FAIL" });
    }
    std::fs::write(out.join("summary.txt"), &summary)?;
    print!("{summary}");
    match first_err {
        Some(e) => Err(e),
        None => Ok(()),
    }
}
