//! Scenario configuration in TOML. Keys carry their unit in the name.

// unit suffixes keep their SI capitalization (`_W`, `_VAr`, `_V2`)
#![allow(non_snake_case)]

use serde::{Deserialize, Serialize};
use sse_core::channel::{AttackScenario, SamplingSchedule, ScheduleMode};
use sse_core::lmi::{Lmi89Variant, SynthesisSettings};
use sse_core::lure::{DeadZoneShape, GridTopology, PowerConvention};
use sse_core::observer::{enumerate_subsets, SubsetFamily};
use sse_core::signal::Signal;
use sse_core::sim::{InitialEstimate, InitialState, Scenario};

use crate::error::CliError;

pub const FEEDER: &str = include_str!("../configs/feeder.toml");
pub const REDUCED: &str = include_str!("../configs/reduced.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub grid: GridSection,
    pub observer: ObserverSection,
    pub sampling: SamplingSection,
    pub attack: AttackSection,
    pub noise: NoiseSection,
    pub simulation: SimulationSection,
    pub synthesis: SynthesisSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    /// Number of customers taken from the start of the per-customer lists.
    pub customers: usize,
    pub line_r_ohm: Vec<f64>,
    pub line_x_ohm: Vec<f64>,
    pub service_r_ohm: Vec<f64>,
    pub service_x_ohm: Vec<f64>,
    pub rho_g_W: Vec<f64>,
    pub rho_c_W: Vec<f64>,
    pub q_c_VAr: Vec<f64>,
    pub s_bar_VA: Vec<f64>,
    /// One entry per customer, or a single value for all.
    pub a_g_per_s: Vec<f64>,
    pub v_bar_V: f64,
    pub v0_offset_V: f64,
    pub v0_amplitude_V: f64,
    pub v0_omega_rad_per_s: f64,
    pub dead_zone_w_min_V2: f64,
    pub dead_zone_w_m_V2: f64,
    pub dead_zone_w_n_V2: f64,
    pub dead_zone_w_max_V2: f64,
    /// `net` (ρ = ρ_g − ρ_c) or `consumption` (ρ = ρ_c).
    pub power_convention: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObserverSection {
    pub n_a: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingSection {
    #[serde(rename = "T_bar_s")]
    pub t_bar_s: f64,
    /// `case_study` (eight-gap pattern scaled by T̄), `uniform` or `explicit`.
    pub pattern: String,
    /// Gaps for `explicit`, repeated until the horizon.
    pub gaps_s: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackSection {
    /// `case_study` or `none`.
    pub kind: String,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub amplitude_V2: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StateSpec {
    Named(String),
    Values(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    pub horizon_s: f64,
    pub step_s: f64,
    /// `zero`, `equilibrium` or a list of reactive powers in VAr.
    pub x0_VAr: StateSpec,
    /// `zero`, `plant` or a list.
    pub x_hat0_VAr: StateSpec,
    pub rms_start_s: f64,
    /// Transient excluded from the sup/mean error metrics.
    pub transient_s: f64,
    /// Keep every n-th CSV row (sample rows are always kept).
    pub csv_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesisSection {
    pub eps_feas: f64,
    pub eps_nonstrict: f64,
    pub scalar_cap: f64,
    pub p_cap: f64,
    pub scale_c: bool,
    /// `schur` or `printed` layout of the P₂ row in the sampling conditions.
    pub lmi89_layout: String,
    pub qbar_grid_points: usize,
    pub schur_samples: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            grid: GridSection::default(),
            observer: ObserverSection { n_a: 2 },
            sampling: SamplingSection::default(),
            attack: AttackSection { kind: "case_study".into(), scale: 1.0 },
            noise: NoiseSection { amplitude_V2: 0.0, seed: 0 },
            simulation: SimulationSection::default(),
            synthesis: SynthesisSection::default(),
        }
    }
}

impl Default for GridSection {
    fn default() -> Self {
        let t = GridTopology::benchmark_feeder();
        let dz = DeadZoneShape::default();
        let (v0_offset_V, v0_amplitude_V, v0_omega_rad_per_s) = match t.v0 {
            Signal::Sine { offset, amplitude, omega, .. } => (offset, amplitude, omega),
            _ => unreachable!("the benchmark feeder has a sinusoidal substation voltage"),
        };
        Self {
            customers: t.n_customers(),
            line_r_ohm: t.line_r,
            line_x_ohm: t.line_x,
            service_r_ohm: t.service_r,
            service_x_ohm: t.service_x,
            rho_g_W: t.rho_g,
            rho_c_W: t.rho_c,
            q_c_VAr: t.q_c,
            s_bar_VA: t.s_bar,
            a_g_per_s: vec![1.0],
            v_bar_V: t.v_bar,
            v0_offset_V,
            v0_amplitude_V,
            v0_omega_rad_per_s,
            dead_zone_w_min_V2: dz.w_min,
            dead_zone_w_m_V2: dz.w_m,
            dead_zone_w_n_V2: dz.w_n,
            dead_zone_w_max_V2: dz.w_max,
            power_convention: "net".into(),
        }
    }
}

impl Default for ObserverSection {
    fn default() -> Self {
        Self { n_a: 2 }
    }
}

impl Default for SamplingSection {
    fn default() -> Self {
        Self { t_bar_s: 1.0, pattern: "case_study".into(), gaps_s: Vec::new() }
    }
}

impl Default for AttackSection {
    fn default() -> Self {
        Self { kind: "case_study".into(), scale: 1.0 }
    }
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self { amplitude_V2: 0.0, seed: 0 }
    }
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            horizon_s: 20.0,
            step_s: 1e-3,
            x0_VAr: StateSpec::Named("zero".into()),
            x_hat0_VAr: StateSpec::Named("zero".into()),
            rms_start_s: 0.0,
            transient_s: 5.0,
            csv_every: 1,
        }
    }
}

impl Default for SynthesisSection {
    fn default() -> Self {
        let s = SynthesisSettings::default();
        Self {
            eps_feas: s.eps_feas,
            eps_nonstrict: s.eps_nonstrict,
            scalar_cap: s.scalar_cap,
            p_cap: s.p_cap,
            scale_c: s.scale_c,
            lmi89_layout: "schur".into(),
            qbar_grid_points: 101,
            schur_samples: 50,
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Resolves `key` (dotted, or a bare key that is unique across sections) to a
/// path into the declared schema.
fn resolve_key(schema: &toml::Table, key: &str) -> Result<(String, String), CliError> {
    if let Some((section, field)) = key.split_once('.') {
        let known = schema.get(section).and_then(|s| s.as_table()).is_some_and(|t| t.contains_key(field));
        return if known {
            Ok((section.into(), field.into()))
        } else {
            Err(usage(format!("unknown config key `{key}`")))
        };
    }
    let hits: Vec<&String> =
        schema.iter().filter(|(_, v)| v.as_table().is_some_and(|t| t.contains_key(key))).map(|(s, _)| s).collect();
    match hits.as_slice() {
        [one] => Ok(((*one).clone(), key.into())),
        [] => Err(usage(format!("unknown config key `{key}`"))),
        _ => Err(usage(format!("config key `{key}` is ambiguous; prefix it with its section"))),
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

impl Config {
    /// Parses TOML text, then applies `key=value` overrides.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let parsed: Config = toml::from_str(text).map_err(|e| usage(format!("config: {e}")))?;
        if overrides.is_empty() {
            parsed.validate()?;
            return Ok(parsed);
        }
        let schema = toml::Table::try_from(Config::default()).map_err(|e| usage(e.to_string()))?;
        let mut table = toml::Table::try_from(&parsed).map_err(|e| usage(e.to_string()))?;
        for ov in overrides {
            let (key, raw) = ov.split_once('=').ok_or_else(|| usage(format!("override `{ov}` is not key=value")))?;
            let (section, field) = resolve_key(&schema, key.trim())?;
            let sec = table
                .entry(section)
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| usage("config section is not a table"))?;
            sec.insert(field, parse_value(raw.trim()));
        }
        let cfg: Config = table.try_into().map_err(|e| usage(format!("override: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let g = &self.grid;
        let n = g.customers;
        let lists = [
            ("line_r_ohm", &g.line_r_ohm),
            ("line_x_ohm", &g.line_x_ohm),
            ("service_r_ohm", &g.service_r_ohm),
            ("service_x_ohm", &g.service_x_ohm),
            ("rho_g_W", &g.rho_g_W),
            ("rho_c_W", &g.rho_c_W),
            ("q_c_VAr", &g.q_c_VAr),
            ("s_bar_VA", &g.s_bar_VA),
        ];
        if n == 0 {
            return Err(usage("grid.customers must be at least 1"));
        }
        for (name, v) in lists {
            if v.len() < n {
                return Err(usage(format!("grid.{name} has {} entries for {n} customers", v.len())));
            }
        }
        if g.a_g_per_s.len() != 1 && g.a_g_per_s.len() < n {
            return Err(usage(format!("grid.a_g_per_s needs 1 or {n} entries")));
        }
        if !matches!(g.power_convention.as_str(), "net" | "consumption") {
            return Err(usage(format!("grid.power_convention `{}` is not net|consumption", g.power_convention)));
        }
        if 2 * self.observer.n_a >= n {
            return Err(usage(format!("observer.n_a = {} needs 2·n_a < {n} customers", self.observer.n_a)));
        }
        if !matches!(self.sampling.pattern.as_str(), "case_study" | "uniform" | "explicit") {
            return Err(usage(format!(
                "sampling.pattern `{}` is not case_study|uniform|explicit",
                self.sampling.pattern
            )));
        }
        if self.sampling.pattern == "explicit" && self.sampling.gaps_s.is_empty() {
            return Err(usage("sampling.gaps_s is empty"));
        }
        if !matches!(self.attack.kind.as_str(), "case_study" | "none") {
            return Err(usage(format!("attack.kind `{}` is not case_study|none", self.attack.kind)));
        }
        if !matches!(self.synthesis.lmi89_layout.as_str(), "schur" | "printed") {
            return Err(usage(format!(
                "synthesis.lmi89_layout `{}` is not schur|printed",
                self.synthesis.lmi89_layout
            )));
        }
        if self.simulation.csv_every == 0 {
            return Err(usage("simulation.csv_every must be at least 1"));
        }
        for (name, spec, allowed) in [
            ("x0_VAr", &self.simulation.x0_VAr, ["zero", "equilibrium"]),
            ("x_hat0_VAr", &self.simulation.x_hat0_VAr, ["zero", "plant"]),
        ] {
            match spec {
                StateSpec::Named(s) if !allowed.contains(&s.as_str()) => {
                    return Err(usage(format!(
                        "simulation.{name} `{s}` is not {}|{} or a list",
                        allowed[0], allowed[1]
                    )))
                }
                StateSpec::Values(v) if v.len() != n => {
                    return Err(usage(format!("simulation.{name} has {} entries for {n} customers", v.len())))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn n_customers(&self) -> usize {
        self.grid.customers
    }

    pub fn topology(&self) -> GridTopology {
        let g = &self.grid;
        let n = g.customers;
        let cut = |v: &Vec<f64>| v[..n].to_vec();
        let a_g = if g.a_g_per_s.len() == 1 { vec![g.a_g_per_s[0]; n] } else { cut(&g.a_g_per_s) };
        GridTopology {
            line_r: cut(&g.line_r_ohm),
            line_x: cut(&g.line_x_ohm),
            service_r: cut(&g.service_r_ohm),
            service_x: cut(&g.service_x_ohm),
            a_g,
            s_bar: cut(&g.s_bar_VA),
            rho_g: cut(&g.rho_g_W),
            rho_c: cut(&g.rho_c_W),
            q_c: cut(&g.q_c_VAr),
            v_bar: g.v_bar_V,
            v0: Signal::Sine {
                offset: g.v0_offset_V,
                amplitude: g.v0_amplitude_V,
                omega: g.v0_omega_rad_per_s,
                phase: 0.0,
            },
            dead_zone: DeadZoneShape {
                w_min: g.dead_zone_w_min_V2,
                w_m: g.dead_zone_w_m_V2,
                w_n: g.dead_zone_w_n_V2,
                w_max: g.dead_zone_w_max_V2,
            },
            power_convention: if g.power_convention == "consumption" {
                PowerConvention::Consumption
            } else {
                PowerConvention::Net
            },
        }
    }

    pub fn family(&self) -> Result<SubsetFamily, CliError> {
        Ok(enumerate_subsets(self.n_customers(), self.observer.n_a)?)
    }

    pub fn schedule(&self) -> SamplingSchedule {
        let t = self.sampling.t_bar_s;
        match self.sampling.pattern.as_str() {
            "uniform" => SamplingSchedule::uniform(t),
            "explicit" => {
                let gaps = self.sampling.gaps_s.clone();
                let lo = gaps.iter().cloned().fold(f64::INFINITY, f64::min);
                SamplingSchedule { pattern: gaps, t_lower: lo, t_upper: t, mode: ScheduleMode::Repeat }
            }
            _ => SamplingSchedule::case_study_pattern(t),
        }
    }

    /// Attack at the given scale, restricted to the configured customers.
    pub fn attack(&self, scale: f64) -> AttackScenario {
        let n = self.n_customers();
        match self.attack.kind.as_str() {
            "none" => AttackScenario::none(self.observer.n_a),
            _ => AttackScenario::case_study(scale).restricted(n, self.observer.n_a),
        }
    }

    pub fn synthesis_settings(&self) -> SynthesisSettings {
        let s = &self.synthesis;
        SynthesisSettings {
            eps_feas: s.eps_feas,
            eps_nonstrict: s.eps_nonstrict,
            scalar_cap: s.scalar_cap,
            p_cap: s.p_cap,
            scale_c: s.scale_c,
            lmi89: if s.lmi89_layout == "printed" { Lmi89Variant::Printed } else { Lmi89Variant::SchurConsistent },
            ..SynthesisSettings::default()
        }
    }

    pub fn scenario(&self) -> Result<Scenario, CliError> {
        let mut sc = Scenario::grid(&self.topology())?;
        let sim = &self.simulation;
        sc.schedule = self.schedule();
        sc.attack = self.attack(self.attack.scale);
        sc.noise_amplitude = self.noise.amplitude_V2;
        sc.seed = self.noise.seed;
        sc.horizon = sim.horizon_s;
        sc.step = sim.step_s;
        sc.x0 = match &sim.x0_VAr {
            StateSpec::Named(s) if s == "equilibrium" => InitialState::Equilibrium,
            StateSpec::Named(_) => InitialState::Zero,
            StateSpec::Values(v) => InitialState::Given(nalgebra::DVector::from_vec(v.clone())),
        };
        sc.x_hat0 = match &sim.x_hat0_VAr {
            StateSpec::Named(s) if s == "plant" => InitialEstimate::Plant,
            StateSpec::Named(_) => InitialEstimate::Zero,
            StateSpec::Values(v) => InitialEstimate::Common(nalgebra::DVector::from_vec(v.clone())),
        };
        Ok(sc)
    }
}
