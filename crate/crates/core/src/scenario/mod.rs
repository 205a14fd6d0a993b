//! Scenario configuration, hypothesis checks, presets, trajectory driver
//! and file output.

mod run;
mod snapshot;
pub mod verify;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{apply_boundary, Advection, BcSpec, Grid};
use crate::material::{
    convexity_guard_bound, material_violations, BiotDamageParams, DissipationParams, Material, MobilityParams, Moduli,
    Threshold,
};
use crate::preset::{realize, LoadTerm, Loads, Profile, Temporal};
use crate::scheme::{SolverSettings, State};
use crate::tensor::{Dim, MAX_INTERNAL};

pub use run::{run_scenario, RunStatus, RunSummary, Simulation, ENV_OUT_DIR, NORM_GROWTH_FACTOR};
pub use snapshot::{
    export_snapshot, read_snapshot_csv, read_vtk_cell_data, snapshot_columns, SnapshotEntry, SnapshotFormat,
    SnapshotManifest,
};

/// One failed hypothesis or configuration check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// Hypothesis tag such as `ass:4`, or `config` for plain input errors.
    pub hypothesis: String,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}) {}", self.hypothesis, self.message)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BcMode {
    #[default]
    Walls,
    Periodic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DomainConfig {
    pub d: usize,
    /// Cells per axis.
    pub n: usize,
    #[serde(rename = "L")]
    pub length: f64,
    pub bc_mode: BcMode,
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self { d: 2, n: 32, length: 1.0, bc_mode: BcMode::Walls }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeConfig {
    pub t_end: f64,
    pub tau: f64,
    pub tau_min: f64,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self { t_end: 0.1, tau: 2e-3, tau_min: 1e-6 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub picard_tol: f64,
    pub picard_max: usize,
    pub lin_tol: f64,
    pub lin_max: usize,
    pub relax: f64,
    pub advection: Advection,
    pub inner_max: usize,
    pub freeze_velocity: bool,
    /// Run-level ceiling for the tracked norms.
    pub norm_ceiling: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let s = SolverSettings::default();
        Self {
            picard_tol: s.picard_tol,
            picard_max: s.picard_max,
            lin_tol: s.lin_tol,
            lin_max: s.lin_max,
            relax: s.relax,
            advection: s.advection,
            inner_max: s.inner_max,
            freeze_velocity: s.freeze_velocity,
            norm_ceiling: 1e6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
    /// Write an energy row every this many steps.
    pub energy_every: usize,
    /// Snapshot every this many steps; 0 keeps only the initial and final states.
    pub snapshot_every: usize,
    pub formats: Vec<SnapshotFormat>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "out".into(), energy_every: 1, snapshot_every: 0, formats: vec![SnapshotFormat::Csv] }
    }
}

/// Initial data as sums of analytic profiles. Missing `alpha` means
/// undamaged (all ones), missing `chi` means `χ_eq`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialConfig {
    pub v: Vec<Profile>,
    pub ee: Vec<Profile>,
    pub ep: Vec<Profile>,
    pub alpha: Option<Vec<Profile>>,
    pub chi: Option<Vec<Profile>>,
}

/// Complete description of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub name: String,
    pub domain: DomainConfig,
    pub time: TimeConfig,
    pub moduli: Moduli<f64>,
    pub material: BiotDamageParams<f64>,
    pub dissipation: DissipationParams<f64>,
    pub mobility: MobilityParams<f64>,
    /// Number of internal variables ℓ.
    pub internal_variables: usize,
    pub loads: Loads,
    pub initial: InitialConfig,
    pub solver: SolverConfig,
    pub output: OutputConfig,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "custom".into(),
            domain: DomainConfig::default(),
            time: TimeConfig::default(),
            moduli: Moduli::default(),
            material: BiotDamageParams::default(),
            dissipation: DissipationParams::default(),
            mobility: MobilityParams::default(),
            internal_variables: 1,
            loads: Loads::default(),
            initial: InitialConfig::default(),
            solver: SolverConfig::default(),
            output: OutputConfig::default(),
            seed: 0,
        }
    }
}

/// Parses and validates a JSON scenario; every violation is reported.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| {
        if e.is_syntax() || e.is_eof() {
            Error::ConfigSyntax { line: e.line(), column: e.column(), message: e.to_string() }
        } else {
            Error::Config(e.to_string())
        }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

fn violation(tag: &str, message: String) -> Violation {
    Violation { hypothesis: tag.into(), message }
}

impl ScenarioConfig {
    pub fn material(&self) -> Material<f64> {
        Material { biot: self.material, diss: self.dissipation, mobility: self.mobility, ell: self.internal_variables }
    }

    pub fn settings(&self) -> SolverSettings {
        let s = &self.solver;
        SolverSettings {
            tau: self.time.tau,
            tau_min: self.time.tau_min,
            picard_tol: s.picard_tol,
            picard_max: s.picard_max,
            lin_tol: s.lin_tol,
            lin_max: s.lin_max,
            relax: s.relax,
            advection: s.advection,
            inner_max: s.inner_max,
            freeze_velocity: s.freeze_velocity,
        }
    }

    /// Every violated hypothesis and configuration rule.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out: Vec<Violation> =
            material_violations(&self.material()).into_iter().map(|(t, m)| violation(&t, m)).collect();
        let m = &self.moduli;
        for (name, x) in [("rho", m.rho), ("kv", m.kv), ("kp", m.kp), ("ka", m.ka), ("ke", m.ke)] {
            if !(x > 0.0) {
                out.push(violation("ass:4", format!("modulus {name} = {x} must be positive")));
            }
        }
        if !(m.gamma >= 0.0) {
            out.push(violation("config", format!("boundary drag gamma = {} must be nonnegative", m.gamma)));
        }

        let dm = &self.domain;
        if dm.d != 1 && dm.d != 2 {
            out.push(violation("config", format!("dimension d = {} must be 1 or 2", dm.d)));
        }
        if dm.n < 4 {
            out.push(violation("config", format!("need at least 4 cells per axis, got {}", dm.n)));
        }
        if !(dm.length > 0.0 && dm.length.is_finite()) {
            out.push(violation("config", format!("domain length L = {} must be positive", dm.length)));
        }
        let t = &self.time;
        if !(t.t_end > 0.0 && t.t_end.is_finite()) {
            out.push(violation("config", format!("t_end = {} must be positive", t.t_end)));
        }
        if let Err(e) = self.settings().validate() {
            out.push(violation("config", e.to_string()));
        }
        if !(self.solver.norm_ceiling > 0.0) {
            out.push(violation("config", format!("norm_ceiling = {} must be positive", self.solver.norm_ceiling)));
        }
        if self.output.energy_every == 0 {
            out.push(violation("config", "energy_every must be at least 1".into()));
        }

        let d = dm.d.clamp(1, 2);
        let ms = if d == 2 { 3 } else { 1 };
        let ell = self.internal_variables;
        let ic = &self.initial;
        let mut profiles = |name: &str, list: &[Profile], ncomp: usize, h1: bool| {
            for p in list {
                if let Err(msg) = p.validate(ncomp, d) {
                    out.push(violation("config", format!("initial {name}: {msg}")));
                }
                if h1 && matches!(p, Profile::Noise { .. }) {
                    out.push(violation("ass:5", format!("initial {name} must be H1; noise profiles are only L2")));
                }
            }
        };
        profiles("v", &ic.v, d, false);
        profiles("ee", &ic.ee, ms, false);
        profiles("ep", &ic.ep, ms, true);
        if (1..=MAX_INTERNAL).contains(&ell) {
            profiles("alpha", ic.alpha.as_deref().unwrap_or(&[]), ell, true);
        }
        profiles("chi", ic.chi.as_deref().unwrap_or(&[]), 1, false);
        if let Err(e) = self.loads.validate(d) {
            out.push(violation("ass:6", e.to_string()));
        }
        let terms = [&self.loads.f, &self.loads.g, &self.loads.h];
        if !terms.iter().flat_map(|v| v.iter()).all(|term| term.profile.is_finite()) {
            out.push(violation("ass:6", "load parameters must be finite".into()));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Hypotheses(v))
        }
    }

    pub fn grid(&self) -> Result<Grid<f64>> {
        let dim = Dim::new(self.domain.d)?;
        match self.domain.bc_mode {
            BcMode::Walls => Grid::boxed(dim, self.domain.n, self.domain.length),
            BcMode::Periodic => Grid::periodic(dim, self.domain.n, self.domain.length),
        }
    }

    /// Initial state realised from the profiles, with derived fields refreshed.
    pub fn initial_state(&self) -> Result<State<f64>> {
        let g = self.grid()?;
        let mat = self.material();
        let ell = self.internal_variables;
        let ms = g.dim().sym_len();
        let ic = &self.initial;
        let mut s = State::zeros(&g, ell);
        s.v = realize(&g, g.d(), &ic.v, self.seed);
        s.ee = realize(&g, ms, &ic.ee, self.seed.wrapping_add(1));
        s.ep = realize(&g, ms, &ic.ep, self.seed.wrapping_add(2));
        let ones = [Profile::Constant { value: vec![1.0; ell] }];
        s.alpha = realize(&g, ell, ic.alpha.as_deref().unwrap_or(&ones), self.seed.wrapping_add(3));
        let eq = [Profile::Constant { value: vec![mat.biot.chi_eq] }];
        s.chi = realize(&g, 1, ic.chi.as_deref().unwrap_or(&eq), self.seed.wrapping_add(4));
        let bc = if g.faces().is_empty() { BcSpec::Periodic } else { BcSpec::HomNeumann };
        apply_boundary(&mut s.v, &bc, &g)?;
        s.refresh(&self.moduli, &mat)?;
        Ok(s)
    }

    /// Number of steps of size τ needed to reach `t_end`.
    pub fn nominal_steps(&self) -> usize {
        (self.time.t_end / self.time.tau - 1e-9).ceil().max(1.0) as usize
    }

    /// Named preset, or `None` if unknown. See [`PRESETS`].
    pub fn preset(name: &str) -> Option<Self> {
        let mut c = Self { name: name.into(), ..Self::default() };
        c.domain.n = 64;
        c.time = TimeConfig { t_end: 1.0, tau: 2e-3, tau_min: 1e-6 };
        c.solver.advection = Advection::Central;
        let pulse = |amp: Vec<f64>, width: f64| Profile::GaussianPulse { amplitude: amp, center: vec![0.5, 0.5], width };
        match name {
            "viscous-decay" => {
                c.dissipation.sigma_y = Threshold::constant(1e6);
                c.dissipation.a_y = Threshold::constant(1e6);
                c.mobility = MobilityParams { m0: 1e-6, m1: 0.0, m_min: 1e-6 };
                c.initial.v = vec![pulse(vec![0.5, 0.15], 0.1)];
            }
            "damage-pulse" => {
                c.dissipation.sigma_y = Threshold::constant(0.2);
                c.material.c_h = 0.01;
                c.loads.f = vec![LoadTerm {
                    profile: pulse(vec![16.0, 8.0], 0.08),
                    time: Temporal::Pulse { start: 0.0, duration: 0.2 },
                }];
            }
            "diffusion-relaxation" => {
                c.mobility = MobilityParams { m0: 0.1, m1: 0.0, m_min: 0.05 };
                c.initial.chi = Some(vec![Profile::Constant { value: vec![0.3] }, pulse(vec![0.2], 0.1)]);
            }
            "equilibrium" => {
                c.time = TimeConfig { t_end: 0.2, tau: 2e-3, tau_min: 1e-6 };
                c.domain.n = 16;
            }
            "wave-1d" => {
                c.domain = DomainConfig { d: 1, n: 1024, length: 1.0, bc_mode: BcMode::Walls };
                c.time = TimeConfig { t_end: 0.2, tau: 2.5e-4, tau_min: 1e-8 };
                c.moduli = Moduli { rho: 1.0, kv: 1e-5, kp: 1e-8, ka: 1e-8, ke: 1e-8, gamma: 0.0 };
                c.material = BiotDamageParams { k_bulk: 1.0, m_biot: 1.0, beta: 1.0, chi_eq: 0.0, g1: 0.0, eps_sat: 0.0, g0: 1.0, c_h: 0.0 };
                c.dissipation.sigma_y = Threshold::constant(1e12);
                c.dissipation.a_y = Threshold::constant(1e12);
                c.mobility = MobilityParams { m0: 1e-12, m1: 0.0, m_min: 1e-12 };
                c.initial.v = vec![Profile::GaussianPulse { amplitude: vec![1e-3], center: vec![0.3], width: 0.01 }];
                c.output.snapshot_every = 40;
            }
            _ => return None,
        }
        Some(c)
    }
}

/// Names accepted by [`ScenarioConfig::preset`].
pub const PRESETS: [&str; 5] = ["viscous-decay", "damage-pulse", "diffusion-relaxation", "equilibrium", "wave-1d"];

/// The three presets of the energy audit.
pub const ENERGY_PRESETS: [&str; 3] = ["viscous-decay", "damage-pulse", "diffusion-relaxation"];

/// Guard bound for the configured material, exposed for error messages and tests.
pub fn guard_bound(cfg: &ScenarioConfig) -> f64 {
    convexity_guard_bound(&cfg.material)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(r#"{"domain": {"d": 1}}"#).unwrap();
        assert_eq!(c.domain.n, 32);
        assert_eq!(c.moduli, Moduli::default());
        assert_eq!(c.internal_variables, 1);
    }

    #[test]
    fn zero_viscosity_cites_positivity() {
        let err = parse_config(r#"{"moduli": {"kv": 0.0}}"#).unwrap_err();
        match err {
            Error::Hypotheses(v) => assert!(v.iter().any(|x| x.hypothesis == "ass:4" && x.message.contains("kv"))),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn convexity_guard_reports_bound() {
        let err = parse_config(r#"{"material": {"g0": 0.1, "g1": 1.0}}"#).unwrap_err();
        let Error::Hypotheses(v) = err else { panic!() };
        let c = ScenarioConfig { material: BiotDamageParams { g0: 0.1, ..Default::default() }, ..Default::default() };
        let bound = format!("{:.6}", guard_bound(&c));
        assert!(v.iter().any(|x| x.hypothesis == "ass:1" && x.message.contains(&bound)), "{v:?}");
    }

    #[test]
    fn all_violations_are_listed() {
        let err = parse_config(r#"{"moduli": {"kv": 0.0, "rho": -1}, "mobility": {"m0": 0, "m_min": 0}}"#).unwrap_err();
        let Error::Hypotheses(v) = err else { panic!() };
        assert!(v.iter().filter(|x| x.hypothesis == "ass:4").count() >= 2);
        assert!(v.iter().any(|x| x.hypothesis == "ass:3"));
    }

    #[test]
    fn syntax_error_has_position() {
        match parse_config("{\n  \"domain\": {\"d\": 2,,}\n}") {
            Err(Error::ConfigSyntax { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_a_config_error() {
        assert!(matches!(parse_config(r#"{"domian": {}}"#), Err(Error::Config(_))));
    }

    #[test]
    fn presets_validate() {
        for p in PRESETS {
            ScenarioConfig::preset(p).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn noisy_inelastic_strain_is_rejected() {
        let c = r#"{"initial": {"ep": [{"family": "noise", "amplitude": [0.1, 0.1, 0.1]}]}}"#;
        let Error::Hypotheses(v) = parse_config(c).unwrap_err() else { panic!() };
        assert!(v.iter().any(|x| x.hypothesis == "ass:5"));
    }
}
