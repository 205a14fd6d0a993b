//! Trajectory driver and run artifacts.
//!
//! A run directory holds `energy.csv` (one row per reported step),
//! `audit.csv` (per-step solver and slack data), `snapshots/`,
//! `manifest.json` and `summary.json`. The manifest and summary are written
//! on abort as well.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::audit::{AuditInput, EnergyLedger, EnergyReport, NormMonitor, NormValues, StoredEnergy, ENERGY_COLUMNS, ENERGY_CSV_VERSION};
use crate::error::{Error, Result};
use crate::material::{Material, Moduli};
use crate::preset::Loads;
use crate::scheme::ops::LoadSample;
use crate::scheme::{rothe_step, SolverSettings, State, StepError, StepReport};

use super::snapshot::{export_snapshot, SnapshotEntry, SnapshotManifest};
use super::ScenarioConfig;

/// Environment variable overriding the configured output directory.
pub const ENV_OUT_DIR: &str = "PORODYN_OUT";

/// Growth factor over the quarter-mark value beyond which a norm is
/// reported as growing.
pub const NORM_GROWTH_FACTOR: f64 = 10.0;

/// Relative slack beyond which the final step is treated as reaching `t_end`.
const END_EPS: f64 = 1e-12;

/// A scenario being stepped in memory.
pub struct Simulation {
    pub cfg: ScenarioConfig,
    pub state: State<f64>,
    pub m: Moduli<f64>,
    pub mat: Material<f64>,
    pub settings: SolverSettings,
    pub loads: Loads,
    pub ledger: EnergyLedger,
    pub monitor: NormMonitor,
    pub steps: usize,
    pub halvings: usize,
    pub last: Option<StepReport>,
}

impl Simulation {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let state = cfg.initial_state()?;
        let mat = cfg.material();
        let ledger = EnergyLedger::new(&state, &cfg.moduli, &mat)?;
        let monitor = NormMonitor::new(&state)?;
        Ok(Self {
            cfg: cfg.clone(),
            state,
            m: cfg.moduli,
            mat,
            settings: cfg.settings(),
            loads: cfg.loads.clone(),
            ledger,
            monitor,
            steps: 0,
            halvings: 0,
            last: None,
        })
    }

    pub fn finished(&self) -> bool {
        self.state.t >= self.cfg.time.t_end * (1.0 - END_EPS)
    }

    /// Advances one step, clipping the last one to `t_end`, and audits it.
    pub fn step(&mut self) -> std::result::Result<(StepReport, EnergyReport), StepError> {
        let mut st = self.settings;
        let remaining = self.cfg.time.t_end - self.state.t;
        if remaining < st.tau {
            st.tau = remaining;
            st.tau_min = st.tau_min.min(remaining);
        }
        let (next, rep) = rothe_step(&self.state, &self.loads, &self.m, &self.mat, &st)?;
        let sample = LoadSample::average(&self.loads, &self.state.grid, self.state.t, rep.tau_used);
        let inp = AuditInput {
            loads: &sample,
            m: &self.m,
            mat: &self.mat,
            tau: rep.tau_used,
            mode: st.advection,
            picard_tol: st.picard_tol,
        };
        let energy = self.ledger.energy_report(&next, &self.state, &inp)?;
        self.monitor.update(&next, &self.state, rep.tau_used)?;
        self.state = next;
        self.steps += 1;
        self.halvings += rep.halvings;
        self.last = Some(rep.clone());
        Ok((rep, energy))
    }

    /// Steps until `t_end` or the first failure.
    pub fn run_to_end(&mut self) -> std::result::Result<(), StepError> {
        while !self.finished() {
            self.step()?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Completed,
    /// Reached `t_end` but a tracked norm exceeded the configured ceiling.
    NormCeiling,
    /// The solver gave up.
    Aborted,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Completed => 0,
            RunStatus::NormCeiling | RunStatus::Aborted => 1,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub scenario: String,
    pub status: RunStatus,
    pub message: Option<String>,
    pub steps: usize,
    pub t_final: f64,
    pub tau_halvings: usize,
    pub initial_energy: StoredEnergy,
    pub final_energy: EnergyReport,
    pub max_abs_step_slack: f64,
    pub min_step_margin: f64,
    pub all_steps_pass: bool,
    pub norms: NormValues,
    pub norm_ceiling: f64,
    pub norms_over_ceiling: Vec<String>,
    /// Norms whose final value exceeds [`NORM_GROWTH_FACTOR`] times their quarter-mark value.
    pub norms_growing: Vec<String>,
    pub wall_seconds: f64,
    pub out_dir: PathBuf,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn csv_row(values: &[f64]) -> String {
    let v: Vec<String> = values.iter().map(|x| x.to_string()).collect();
    v.join(",")
}

const AUDIT_COLUMNS: [&str; 10] =
    ["t", "tau", "picard", "halvings", "residual", "certificate", "slack", "tol", "xi_over_zeta", "pass"];

struct Artifacts {
    dir: PathBuf,
    energy: BufWriter<File>,
    audit: BufWriter<File>,
    manifest: SnapshotManifest,
}

impl Artifacts {
    fn open(dir: &Path, name: &str) -> Result<Self> {
        fs::create_dir_all(dir.join("snapshots")).map_err(|e| Error::io(dir, e))?;
        let epath = dir.join("energy.csv");
        let mut energy = create(&epath)?;
        writeln!(energy, "# porodyn energy csv v{ENERGY_CSV_VERSION}").map_err(|e| Error::io(&epath, e))?;
        writeln!(energy, "{}", ENERGY_COLUMNS.join(",")).map_err(|e| Error::io(&epath, e))?;
        let apath = dir.join("audit.csv");
        let mut audit = create(&apath)?;
        writeln!(audit, "{}", AUDIT_COLUMNS.join(",")).map_err(|e| Error::io(&apath, e))?;
        Ok(Self { dir: dir.into(), energy, audit, manifest: SnapshotManifest { scenario: name.into(), entries: Vec::new() } })
    }

    fn energy_row(&mut self, r: &EnergyReport) -> Result<()> {
        let p = self.dir.join("energy.csv");
        writeln!(self.energy, "{}", csv_row(&r.values())).map_err(|e| Error::io(&p, e))
    }

    fn audit_row(&mut self, sim: &Simulation, rep: &StepReport) -> Result<()> {
        let a = sim.ledger.steps.last().copied().unwrap_or_default();
        let row = format!(
            "{},{},{},{},{},{},{},{},{},{}",
            a.t,
            rep.tau_used,
            rep.picard_iterations,
            rep.halvings,
            rep.residuals.combined,
            rep.residuals.certificate,
            a.slack,
            a.tol,
            a.xi_over_zeta.map_or(String::new(), |x| x.to_string()),
            u8::from(a.passes()),
        );
        let p = self.dir.join("audit.csv");
        writeln!(self.audit, "{row}").map_err(|e| Error::io(&p, e))
    }

    fn snapshot(&mut self, sim: &Simulation, formats: &[super::SnapshotFormat]) -> Result<()> {
        for &f in formats {
            let rel = PathBuf::from("snapshots").join(format!("step_{:06}.{}", sim.steps, f.extension()));
            let fields = export_snapshot(&sim.state, &sim.mat, f, &self.dir.join(&rel))?;
            self.manifest.entries.push(SnapshotEntry { time: sim.state.t, step: sim.steps, path: rel, fields, format: f });
        }
        Ok(())
    }

    fn finish(mut self, summary: &RunSummary) -> Result<()> {
        let p = self.dir.join("energy.csv");
        self.energy.flush().map_err(|e| Error::io(&p, e))?;
        let p = self.dir.join("audit.csv");
        self.audit.flush().map_err(|e| Error::io(&p, e))?;
        for (name, text) in [
            ("manifest.json", serde_json::to_string_pretty(&self.manifest)),
            ("summary.json", serde_json::to_string_pretty(summary)),
        ] {
            let p = self.dir.join(name);
            let text = text.map_err(|e| Error::Config(e.to_string()))?;
            fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

/// Runs `cfg` to `t_end`, writing all artifacts to `out_dir`. Solver
/// failures are reported through the summary status, not as `Err`.
pub fn run_scenario(cfg: &ScenarioConfig, out_dir: &Path) -> Result<RunSummary> {
    let clock = Instant::now();
    let mut sim = Simulation::new(cfg)?;
    let mut art = Artifacts::open(out_dir, &cfg.name)?;
    let out = &cfg.output;
    art.snapshot(&sim, &out.formats)?;

    let mut failure = None;
    while !sim.finished() {
        match sim.step() {
            Ok((rep, energy)) => {
                art.audit_row(&sim, &rep)?;
                let last = sim.finished();
                if sim.steps % out.energy_every == 0 || last {
                    art.energy_row(&energy)?;
                }
                if (out.snapshot_every > 0 && sim.steps % out.snapshot_every == 0) || last {
                    art.snapshot(&sim, &out.formats)?;
                }
            }
            Err(StepError::Setup(e)) => return Err(e),
            Err(e) => {
                failure = Some(e.to_string());
                break;
            }
        }
    }

    let over: Vec<String> =
        sim.monitor.exceeding(cfg.solver.norm_ceiling).into_iter().map(str::to_string).collect();
    let status = match (&failure, over.is_empty()) {
        (Some(_), _) => RunStatus::Aborted,
        (None, false) => RunStatus::NormCeiling,
        (None, true) => RunStatus::Completed,
    };
    let message = failure.or_else(|| (!over.is_empty()).then(|| format!("norms above ceiling: {}", over.join(", "))));
    let summary = RunSummary {
        scenario: cfg.name.clone(),
        status,
        message,
        steps: sim.steps,
        t_final: sim.state.t,
        tau_halvings: sim.halvings,
        initial_energy: sim.ledger.initial,
        final_energy: sim.ledger.reports.last().copied().unwrap_or_else(|| sim.ledger.initial_report()),
        max_abs_step_slack: sim.ledger.steps.iter().map(|s| s.slack.abs()).fold(0.0, f64::max),
        min_step_margin: sim.ledger.min_step_margin(),
        all_steps_pass: sim.ledger.all_steps_pass(),
        norms: sim.monitor.values(),
        norm_ceiling: cfg.solver.norm_ceiling,
        norms_over_ceiling: over,
        norms_growing: sim.monitor.blow_up(NORM_GROWTH_FACTOR).into_iter().map(str::to_string).collect(),
        wall_seconds: clock.elapsed().as_secs_f64(),
        out_dir: out_dir.into(),
    };
    art.finish(&summary)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read_energy(dir: &Path) -> Vec<Vec<f64>> {
        let text = fs::read_to_string(dir.join("energy.csv")).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), format!("# porodyn energy csv v{ENERGY_CSV_VERSION}"));
        assert_eq!(lines.next().unwrap(), ENERGY_COLUMNS.join(","));
        lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect()
    }

    #[test]
    fn equilibrium_rows_are_zero() {
        let cfg = ScenarioConfig::preset("equilibrium").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let s = run_scenario(&cfg, dir.path()).unwrap();
        assert_eq!(s.status, RunStatus::Completed);
        assert_eq!(s.steps, 100);
        let rows = read_energy(dir.path());
        assert_eq!(rows.len(), 100);
        for r in &rows {
            assert!(r[1..].iter().all(|x| *x == 0.0), "{r:?}");
        }
        let m: SnapshotManifest =
            serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(m.entries.len(), 2);
        assert!(m.entries.iter().all(|e| dir.path().join(&e.path).exists()));
    }

    #[test]
    fn same_seed_gives_identical_csv() {
        let mut cfg = ScenarioConfig::preset("damage-pulse").unwrap();
        cfg.domain.n = 8;
        cfg.time.t_end = 0.02;
        cfg.initial.ee = vec![crate::preset::Profile::Noise { amplitude: vec![1e-2, 1e-2, 1e-2] }];
        cfg.seed = 7;
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run_scenario(&cfg, a.path()).unwrap();
        run_scenario(&cfg, b.path()).unwrap();
        for f in ["energy.csv", "audit.csv", "snapshots/step_000010.csv"] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
        }
    }
}
