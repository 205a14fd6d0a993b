use porodyn::audit::{fit_spatial_constant, C_H};
use porodyn::scenario::{run_scenario, ScenarioConfig, Simulation};
use porodyn::scheme::{rothe_step, SolverSettings};

#[test]
fn frozen_spatial_constant_covers_the_fit() {
    let mut fits = Vec::new();
    for n in [16, 32, 64] {
        let mut cfg = ScenarioConfig::preset("viscous-decay").unwrap();
        cfg.domain.n = n;
        cfg.time.t_end = 0.2;
        let mut sim = Simulation::new(&cfg).unwrap();
        sim.run_to_end().unwrap();
        assert!(sim.ledger.all_steps_pass());
        fits.push(fit_spatial_constant(&sim.ledger.steps, cfg.solver.picard_tol));
    }
    assert!(fits.iter().all(|f| *f <= C_H), "{fits:?}");
}

#[test]
fn viscous_decay_total_energy_decreases() {
    let mut cfg = ScenarioConfig::preset("viscous-decay").unwrap();
    cfg.domain.n = 16;
    cfg.time.t_end = 0.2;
    let dir = tempfile::tempdir().unwrap();
    let s = run_scenario(&cfg, dir.path()).unwrap();
    assert_eq!(s.status.exit_code(), 0);
    let text = std::fs::read_to_string(dir.path().join("energy.csv")).unwrap();
    let header: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    let stored = ["kinetic", "stored_phi", "stored_gradEp", "stored_gradAlpha"]
        .map(|name| header.iter().position(|h| *h == name).unwrap());
    let total: Vec<f64> = text
        .lines()
        .skip(2)
        .map(|l| {
            let row: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
            stored.iter().map(|&k| row[k]).sum()
        })
        .collect();
    assert_eq!(total.len(), 100);
    let e0 = &s.initial_energy;
    assert!(total[0] < e0.kinetic + e0.phi + e0.grad_ep + e0.grad_alpha);
    assert!(total.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn single_precision_step_tracks_double() {
    let mut cfg = ScenarioConfig::preset("damage-pulse").unwrap();
    cfg.domain.n = 8;
    cfg.initial.v = vec![porodyn::preset::Profile::GaussianPulse {
        amplitude: vec![0.2, 0.1],
        center: vec![0.5, 0.5],
        width: 0.2,
    }];
    let s64 = cfg.initial_state().unwrap();
    let mat = cfg.material();
    let st = SolverSettings { tau: 2e-3, picard_tol: 1e-4, lin_tol: 1e-6, ..cfg.settings() };
    let (a, _) = rothe_step(&s64, &cfg.loads, &cfg.moduli, &mat, &st).unwrap();
    let (b, _) = rothe_step(&s64.cast::<f32>(), &cfg.loads, &cfg.moduli.cast(), &mat.cast(), &st).unwrap();
    assert!(b.all_finite());
    let g = &a.grid;
    for c in g.interior_indices() {
        for k in 0..2 {
            assert!((a.v.at(k, c) - f64::from(b.v.at(k, c))).abs() < 1e-3);
        }
    }
}

#[test]
fn determinism_across_runs() {
    let mut cfg = ScenarioConfig::preset("diffusion-relaxation").unwrap();
    cfg.domain.n = 8;
    cfg.time.t_end = 0.01;
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_scenario(&cfg, a.path()).unwrap();
    run_scenario(&cfg, b.path()).unwrap();
    let read = |d: &std::path::Path| std::fs::read(d.join("energy.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}
