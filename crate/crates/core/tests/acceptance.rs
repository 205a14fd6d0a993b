//! Acceptance criteria, one line per criterion. Runs without the test
//! harness so the lines are always printed; exits nonzero if any fails.

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use porodyn::audit::Compensated;
use porodyn::field::Advection;
use porodyn::material::Threshold;
use porodyn::preset::Profile;
use porodyn::scenario::verify::{
    gradient_errors, lemma_outcomes, prox_max_certificate, trace_identity_error, verify_suite, VerifyKind,
    VerifyOptions,
};
use porodyn::scenario::{
    read_snapshot_csv, run_scenario, ScenarioConfig, Simulation, SnapshotFormat, SnapshotManifest, ENERGY_PRESETS,
    NORM_GROWTH_FACTOR,
};
use porodyn::State64;

const GRADIENT_TOL: f64 = 1e-6;
const GRADIENT_SAMPLES: usize = 1000;
const PROX_TOL: f64 = 1e-12;
const PROX_SAMPLES: usize = 100_000;
const LEMMA_MIN_ORDER: f64 = 1.9;
const LEMMA_LEVELS: usize = 4;
const ENERGY_STEPS: usize = 500;
const ENERGY_CELLS: [usize; 3] = [32, 64, 128];
/// Relative allowance when comparing cumulative slack across resolutions.
const SLACK_MONOTONE_RTOL: f64 = 1e-9;
const EQUILIBRIUM_STEPS: usize = 100;
const EQUILIBRIUM_TOL: f64 = 1e-12;
const WATER_STEPS: usize = 1000;
const WATER_RTOL: f64 = 1e-12;
const WAVE_SPEED: f64 = std::f64::consts::SQRT_2;
const WAVE_RTOL: f64 = 0.05;
const TIME_MIN_ORDER: f64 = 0.9;
/// Largest step of the ladder; Picard converges without halving below about 5e-3.
const TIME_TAU0: f64 = 3.125e-3;
const TIME_LEVELS: u32 = 4;
const TRACE_TOL: f64 = 1e-12;
const TRACE_STATES: usize = 100;

struct Line {
    id: u32,
    name: &'static str,
    passed: bool,
    detail: String,
    seconds: f64,
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = Instant::now();
    let out = f();
    (out, t.elapsed().as_secs_f64())
}

fn gradients() -> Line {
    let (w, s) = timed(|| gradient_errors(GRADIENT_SAMPLES, 1));
    let worst = w.iter().copied().fold(0.0, f64::max);
    Line {
        id: 1,
        name: "gradient consistency",
        passed: worst <= GRADIENT_TOL && s < 1.0,
        detail: format!(
            "max rel FD error {worst:.2e} (stress {:.1e}, dphi_dalpha {:.1e}, mu {:.1e}) <= {GRADIENT_TOL:.0e}, {GRADIENT_SAMPLES} samples",
            w[0], w[1], w[2]
        ),
        seconds: s,
    }
}

fn prox() -> Line {
    let ((worst, locked, flowing), s) = timed(|| prox_max_certificate(PROX_SAMPLES, 2));
    Line {
        id: 2,
        name: "prox inclusion certificates",
        passed: worst <= PROX_TOL && locked > 0 && flowing > 0 && s < 1.0,
        detail: format!("max certificate {worst:.2e} <= {PROX_TOL:.0e}, {locked} locked / {flowing} flowing"),
        seconds: s,
    }
}

fn lemma() -> Line {
    let (out, s) = timed(|| lemma_outcomes(LEMMA_LEVELS).expect("lemma fixtures"));
    let min = out.iter().map(|o| o.min_order()).fold(f64::INFINITY, f64::min);
    let parts: Vec<String> = out.iter().map(|o| format!("{:?}/d{} {:.3}", o.kind, o.d, o.min_order())).collect();
    Line {
        id: 3,
        name: "lemma identities",
        passed: min >= LEMMA_MIN_ORDER && s < 30.0,
        detail: format!("min order {min:.3} >= {LEMMA_MIN_ORDER} over n = 32..256 [{}]", parts.join(", ")),
        seconds: s,
    }
}

struct EnergyRun {
    preset: &'static str,
    cells: usize,
    min_margin: f64,
    all_pass: bool,
    final_slack: f64,
    growing: Vec<&'static str>,
}

fn energy_run(preset: &'static str, cells: usize) -> EnergyRun {
    let mut cfg = ScenarioConfig::preset(preset).expect("preset");
    cfg.domain.n = cells;
    let mut sim = Simulation::new(&cfg).expect("valid preset");
    for _ in 0..ENERGY_STEPS {
        sim.step().unwrap_or_else(|e| panic!("{preset} at {cells}: {e}"));
    }
    EnergyRun {
        preset,
        cells,
        min_margin: sim.ledger.min_step_margin(),
        all_pass: sim.ledger.all_steps_pass(),
        final_slack: sim.ledger.reports.last().map_or(0.0, |r| r.slack),
        growing: sim.monitor.blow_up(NORM_GROWTH_FACTOR),
    }
}

fn energy(runs: &[EnergyRun], s: f64) -> Line {
    let mut passed = s < 600.0;
    let mut parts = Vec::new();
    for p in ENERGY_PRESETS {
        let mine: Vec<&EnergyRun> = runs.iter().filter(|r| r.preset == p).collect();
        let on64 = mine.iter().find(|r| r.cells == 64).expect("64 run");
        let slacks: Vec<f64> = mine.iter().map(|r| r.final_slack.abs()).collect();
        let monotone = slacks.windows(2).all(|w| w[1] >= w[0] * (1.0 - SLACK_MONOTONE_RTOL));
        passed &= on64.all_pass && monotone;
        parts.push(format!(
            "{p}: min(slack+tol) {:.2e}, |cum slack| {}",
            on64.min_margin,
            slacks.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(" -> ")
        ));
    }
    Line { id: 4, name: "discrete energy balance", passed, detail: parts.join("; "), seconds: s }
}

fn sup_drift(a: &State64, b: &State64) -> f64 {
    let g = &a.grid;
    let pairs = [(&a.v, &b.v), (&a.ee, &b.ee), (&a.ep, &b.ep), (&a.alpha, &b.alpha), (&a.chi, &b.chi), (&a.mu, &b.mu), (&a.s, &b.s)];
    let mut worst = 0.0f64;
    for (x, y) in pairs {
        for k in 0..x.ncomp() {
            for c in g.interior_indices() {
                worst = worst.max((x.at(k, c) - y.at(k, c)).abs());
            }
        }
    }
    worst
}

fn equilibrium() -> (Line, Vec<&'static str>) {
    let ((drift, growing), s) = timed(|| {
        let cfg = ScenarioConfig::preset("equilibrium").expect("preset");
        let mut sim = Simulation::new(&cfg).expect("valid");
        let s0 = sim.state.clone();
        let mut worst = 0.0f64;
        for _ in 0..EQUILIBRIUM_STEPS {
            sim.step().expect("equilibrium step");
            worst = worst.max(sup_drift(&s0, &sim.state));
        }
        (worst, sim.monitor.blow_up(NORM_GROWTH_FACTOR))
    });
    let line = Line {
        id: 5,
        name: "equilibrium fixed point",
        passed: drift <= EQUILIBRIUM_TOL && s < 10.0,
        detail: format!("sup drift {drift:.2e} <= {EQUILIBRIUM_TOL:.0e} over {EQUILIBRIUM_STEPS} steps"),
        seconds: s,
    };
    (line, growing)
}

fn water_total(s: &State64) -> f64 {
    let mut acc = Compensated::default();
    for c in s.grid.interior_indices() {
        acc.add(s.chi.at(0, c));
    }
    acc.total() * s.grid.cell_volume()
}

fn water() -> (Line, Vec<&'static str>) {
    let ((drift, total0, growing), s) = timed(|| {
        let mut cfg = ScenarioConfig::preset("diffusion-relaxation").expect("preset");
        cfg.domain.n = 24;
        cfg.time.tau = 1e-3;
        cfg.time.t_end = 1.0;
        cfg.solver.freeze_velocity = true;
        let mut sim = Simulation::new(&cfg).expect("valid");
        let w0 = water_total(&sim.state);
        let mut worst = 0.0f64;
        for _ in 0..WATER_STEPS {
            sim.step().expect("diffusion step");
            worst = worst.max((water_total(&sim.state) - w0).abs());
        }
        (worst, w0, sim.monitor.blow_up(NORM_GROWTH_FACTOR))
    });
    let rel = drift / total0.abs();
    let line = Line {
        id: 6,
        name: "water conservation",
        passed: rel <= WATER_RTOL && s < 30.0,
        detail: format!("max |int chi - int chi0| / |int chi0| = {rel:.2e} <= {WATER_RTOL:.0e} over {WATER_STEPS} steps"),
        seconds: s,
    };
    (line, growing)
}

/// Centroid of `v²` to the right of the release point, per snapshot.
fn front_positions(dir: &Path, release: f64) -> Vec<(f64, f64)> {
    let text = std::fs::read_to_string(dir.join("manifest.json")).expect("manifest");
    let m: SnapshotManifest = serde_json::from_str(&text).expect("manifest json");
    m.entries
        .iter()
        .filter(|e| e.format == SnapshotFormat::Csv)
        .map(|e| {
            let (h, rows) = read_snapshot_csv(&dir.join(&e.path)).expect("snapshot");
            let iv = h.iter().position(|c| c == "v_x").expect("v_x column");
            let (mut w, mut wx) = (0.0, 0.0);
            for r in rows.iter().filter(|r| r[0] > release) {
                w += r[iv] * r[iv];
                wx += r[iv] * r[iv] * r[0];
            }
            (e.time, wx / w)
        })
        .collect()
}

fn least_squares_slope(p: &[(f64, f64)]) -> f64 {
    let n = p.len() as f64;
    let (mt, mx) = (p.iter().map(|x| x.0).sum::<f64>() / n, p.iter().map(|x| x.1).sum::<f64>() / n);
    let num: f64 = p.iter().map(|(t, x)| (t - mt) * (x - mx)).sum();
    let den: f64 = p.iter().map(|(t, _)| (t - mt) * (t - mt)).sum();
    num / den
}

fn wave() -> (Line, Vec<String>) {
    let ((speed, predicted, growing), s) = timed(|| {
        let cfg = ScenarioConfig::preset("wave-1d").expect("preset");
        let dir = tempfile::tempdir().expect("tempdir");
        let sum = run_scenario(&cfg, dir.path()).expect("wave run");
        let Profile::GaussianPulse { center, width, .. } = &cfg.initial.v[0] else { panic!("pulse") };
        // skip snapshots where the two halves still overlap
        let pts: Vec<(f64, f64)> =
            front_positions(dir.path(), center[0]).into_iter().filter(|(t, _)| *t * WAVE_SPEED > 6.0 * width).collect();
        // semi-discrete group velocity of the dominant wavenumber
        let h = cfg.domain.length / cfg.domain.n as f64;
        let k = 1.0 / width;
        (least_squares_slope(&pts), WAVE_SPEED * (k * h / 2.0).cos(), sum.norms_growing)
    });
    let rel = (speed - WAVE_SPEED).abs() / WAVE_SPEED;
    let line = Line {
        id: 7,
        name: "1-D elastic wave speed",
        passed: rel <= WAVE_RTOL && s < 60.0,
        detail: format!(
            "front speed {speed:.4} vs sqrt 2 (rel {rel:.2e} <= {WAVE_RTOL}), semi-discrete prediction {predicted:.4}, n = 1024"
        ),
        seconds: s,
    };
    (line, growing)
}

/// Smooth Maxwell fixture: no yield threshold, internal variable locked.
fn time_order_fixture(tau: f64) -> ScenarioConfig {
    let mut c = ScenarioConfig { name: "time-order".into(), ..Default::default() };
    c.domain.n = 32;
    c.time.t_end = 0.1;
    c.time.tau = tau;
    c.solver.advection = Advection::Central;
    c.solver.picard_tol = 1e-10;
    c.dissipation.sigma_y = Threshold::constant(0.0);
    c.dissipation.a_y = Threshold::constant(1e6);
    c.mobility.m0 = 0.1;
    c.initial.v = vec![Profile::GaussianPulse { amplitude: vec![0.2, -0.1], center: vec![0.5, 0.5], width: 0.15 }];
    c.initial.chi = Some(vec![Profile::GaussianPulse { amplitude: vec![0.1], center: vec![0.4, 0.6], width: 0.15 }]);
    c
}

fn state_distance(a: &State64, b: &State64) -> f64 {
    let g = &a.grid;
    let mut acc = 0.0;
    for (x, y) in [(&a.v, &b.v), (&a.ee, &b.ee), (&a.ep, &b.ep), (&a.chi, &b.chi)] {
        for k in 0..x.ncomp() {
            for c in g.interior_indices() {
                acc += (x.at(k, c) - y.at(k, c)).powi(2);
            }
        }
    }
    (acc * g.cell_volume()).sqrt()
}

fn time_order() -> Line {
    let ((diffs, orders, halvings), s) = timed(|| {
        let mut halvings = 0;
        let finals: Vec<State64> = (0..TIME_LEVELS)
            .map(|i| {
                let mut sim = Simulation::new(&time_order_fixture(TIME_TAU0 / f64::from(1 << i))).expect("valid fixture");
                sim.run_to_end().expect("fixture run");
                halvings += sim.halvings;
                sim.state
            })
            .collect();
        let diffs: Vec<f64> = finals.windows(2).map(|w| state_distance(&w[0], &w[1])).collect();
        let orders: Vec<f64> = diffs.windows(2).map(|d| (d[0] / d[1]).log2()).collect();
        (diffs, orders, halvings)
    });
    let min = orders.iter().copied().fold(f64::INFINITY, f64::min);
    Line {
        id: 8,
        name: "time order",
        passed: min >= TIME_MIN_ORDER && halvings == 0 && s < 120.0,
        detail: format!(
            "orders {} >= {TIME_MIN_ORDER} from differences {}, {halvings} step halvings",
            orders.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(", "),
            diffs.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>().join(", ")
        ),
        seconds: s,
    }
}

fn hypotheses() -> Line {
    let ((report, trace), s) = timed(|| {
        let opts = VerifyOptions { samples: Some(1), ..Default::default() };
        (verify_suite(VerifyKind::Hypotheses, &opts).expect("suite"), trace_identity_error(TRACE_STATES, 9).expect("trace"))
    });
    let rejected: Vec<&str> = report.checks.iter().filter(|c| c.name.contains("rejected") && c.passed).map(|c| &c.name[..5]).collect();
    Line {
        id: 9,
        name: "hypothesis validation",
        passed: rejected.len() == 4 && trace <= TRACE_TOL && s < 5.0,
        detail: format!("rejected [{}]; max |tr S_str + 2 phi| {trace:.2e} <= {TRACE_TOL:.0e}", rejected.join(", ")),
        seconds: s,
    }
}

fn main() -> ExitCode {
    let mut lines = vec![gradients(), prox(), lemma()];
    let (runs, s4) = timed(|| {
        let mut out = Vec::new();
        for p in ENERGY_PRESETS {
            for n in ENERGY_CELLS {
                out.push(energy_run(p, n));
            }
        }
        out
    });
    lines.push(energy(&runs, s4));
    let (l5, g5) = equilibrium();
    let (l6, g6) = water();
    let (l7, g7) = wave();
    lines.extend([l5, l6, l7, time_order(), hypotheses()]);

    let mut growing: Vec<String> = Vec::new();
    for r in runs.iter().filter(|r| r.cells == 64) {
        growing.extend(r.growing.iter().map(|n| format!("{}:{n}", r.preset)));
    }
    growing.extend(g5.iter().map(|n| format!("equilibrium:{n}")));
    growing.extend(g6.iter().map(|n| format!("diffusion-frozen:{n}")));
    growing.extend(g7.iter().map(|n| format!("wave-1d:{n}")));
    lines.push(Line {
        id: 10,
        name: "norm monitors",
        passed: growing.is_empty(),
        detail: format!(
            "norms above {NORM_GROWTH_FACTOR}x their quarter-mark value: {}",
            if growing.is_empty() { "none".to_string() } else { growing.join(", ") }
        ),
        seconds: 0.0,
    });

    let mut ok = true;
    for l in &lines {
        ok &= l.passed;
        println!("[{}] {:>2} {}: {} ({:.1} s)", if l.passed { "PASS" } else { "FAIL" }, l.id, l.name, l.detail, l.seconds);
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
