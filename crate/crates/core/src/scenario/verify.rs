//! Self-contained verification suites behind `porodyn verify`.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::audit::{lemma_identity_check, LemmaFields, LemmaKind};
use crate::error::{Error, Result};
use crate::field::{apply_boundary, Advection, BcSpec, Grid};
use crate::material::{
    chemical_potential, dphi_dalpha, free_energy, prox_rates, stress, BiotDamageParams, DissipationParams, Threshold,
};
use crate::preset::{realize, Profile};
use crate::scheme::ops::structural_stress;
use crate::scheme::alpha_at;
use crate::tensor::{Dim, InternalVec, SymTensor, MAX_INTERNAL};

use super::{Simulation, ScenarioConfig};

/// Default thresholds of the suites.
pub const GRADIENT_TOL: f64 = 1e-6;
pub const PROX_TOL: f64 = 1e-12;
pub const LEMMA_MIN_ORDER: f64 = 1.9;
pub const TRACE_TOL: f64 = 1e-12;

/// Floor of the denominator in the relative finite-difference error.
const FD_FLOOR: f64 = 1e-3;
/// Step of the four-point difference quotient.
const FD_STEP: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum VerifyKind {
    Gradients,
    Prox,
    Lemma,
    Energy,
    Hypotheses,
}

#[derive(Clone, Debug, Default)]
pub struct VerifyOptions {
    /// Scenario for the energy suite; the viscous-decay preset if absent.
    pub config: Option<ScenarioConfig>,
    pub samples: Option<usize>,
    pub levels: Option<usize>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, measured: f64, threshold: f64) -> Self {
        Self { name: name.into(), measured, threshold, passed: measured <= threshold }
    }

    fn at_least(name: impl Into<String>, measured: f64, threshold: f64) -> Self {
        Self { name: name.into(), measured, threshold, passed: measured >= threshold }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub kind: VerifyKind,
    pub passed: bool,
    pub seconds: f64,
    pub checks: Vec<Check>,
}

/// Runs one suite; `Err` only for invalid options or configuration.
pub fn verify_suite(kind: VerifyKind, opts: &VerifyOptions) -> Result<VerifyReport> {
    let clock = Instant::now();
    let checks = match kind {
        VerifyKind::Gradients => gradient_checks(opts.samples.unwrap_or(1000), opts.seed),
        VerifyKind::Prox => prox_checks(opts.samples.unwrap_or(100_000), opts.seed),
        VerifyKind::Lemma => lemma_checks(opts.levels.unwrap_or(4))?,
        VerifyKind::Energy => {
            let cfg = match &opts.config {
                Some(c) => c.clone(),
                None => ScenarioConfig::preset("viscous-decay").expect("known preset"),
            };
            energy_checks(&cfg)?
        }
        VerifyKind::Hypotheses => hypothesis_checks(opts.samples.unwrap_or(100), opts.seed)?,
    };
    Ok(VerifyReport { kind, passed: checks.iter().all(|c| c.passed), seconds: clock.elapsed().as_secs_f64(), checks })
}

fn random_params(rng: &mut ChaCha8Rng) -> BiotDamageParams<f64> {
    BiotDamageParams {
        k_bulk: rng.gen_range(0.1..3.0),
        m_biot: rng.gen_range(0.1..3.0),
        beta: rng.gen_range(0.1..1.0),
        chi_eq: rng.gen_range(0.0..0.5),
        g1: rng.gen_range(0.0..2.0),
        eps_sat: rng.gen_range(0.0..2.0),
        g0: rng.gen_range(0.1..2.0),
        c_h: rng.gen_range(0.0..0.5),
    }
}

fn random_sym(rng: &mut ChaCha8Rng, dim: Dim, r: f64) -> SymTensor<f64> {
    match dim {
        Dim::One => SymTensor::new1(rng.gen_range(-r..r)),
        Dim::Two => SymTensor::new2(rng.gen_range(-r..r), rng.gen_range(-r..r), rng.gen_range(-r..r)),
    }
}

fn random_alpha(rng: &mut ChaCha8Rng, ell: usize) -> InternalVec<f64> {
    let v: Vec<f64> = (0..ell).map(|_| rng.gen_range(0.0..1.0)).collect();
    InternalVec::from_slice(&v).expect("ell in range")
}

/// Four-point central difference of `f` at 0.
fn fd(f: impl Fn(f64) -> f64) -> f64 {
    let h = FD_STEP;
    (8.0 * (f(h) - f(-h)) - (f(2.0 * h) - f(-2.0 * h))) / (12.0 * h)
}

fn rel_err(fd: f64, exact: f64) -> f64 {
    (fd - exact).abs() / exact.abs().max(FD_FLOOR)
}

/// Largest relative errors of `stress`, `dphi_dalpha` and
/// `chemical_potential` against differences of `free_energy`.
pub fn gradient_errors(samples: usize, seed: u64) -> [f64; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = [0.0f64; 3];
    for _ in 0..samples {
        let p = random_params(&mut rng);
        let dim = if rng.gen_bool(0.5) { Dim::Two } else { Dim::One };
        // |E| ≤ 0.1 with the off-diagonal entry counted twice
        let e = random_sym(&mut rng, dim, 0.05);
        let ell = rng.gen_range(1..=MAX_INTERNAL);
        let a = random_alpha(&mut rng, ell);
        let chi = p.chi_eq + rng.gen_range(-0.5..0.5);

        let s = stress(&e, &a, chi, &p);
        for k in 0..dim.sym_len() {
            let g = fd(|t| {
                let mut x = e;
                x.packed_mut()[k] += t;
                free_energy(&x, &a, chi, &p)
            });
            // off-diagonal packed entries stand for two tensor entries
            let exact = dim.sym_weight(k) * s.packed()[k];
            worst[0] = worst[0].max(rel_err(g, exact));
        }
        let da = dphi_dalpha(&e, &a, chi, &p);
        for k in 0..ell {
            let g = fd(|t| {
                let mut x = a;
                x[k] += t;
                free_energy(&e, &x, chi, &p)
            });
            worst[1] = worst[1].max(rel_err(g, da[k]));
        }
        let g = fd(|t| free_energy(&e, &a, chi + t, &p));
        worst[2] = worst[2].max(rel_err(g, chemical_potential(&e, &a, chi, &p)));
    }
    worst
}

fn gradient_checks(samples: usize, seed: u64) -> Vec<Check> {
    let w = gradient_errors(samples, seed);
    ["stress", "dphi_dalpha", "chemical_potential"]
        .iter()
        .zip(w)
        .map(|(n, x)| Check::at_most(format!("{n} max relative FD error"), x, GRADIENT_TOL))
        .collect()
}

/// Largest inclusion certificate over random driving forces whose norms
/// straddle the thresholds, so both locked and flowing regimes occur.
pub fn prox_max_certificate(samples: usize, seed: u64) -> (f64, usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let (mut locked, mut flowing) = (0, 0);
    for _ in 0..samples {
        let dp = DissipationParams {
            sigma_y: Threshold { c0: rng.gen_range(0.0..2.0), c_alpha: rng.gen_range(-0.5..0.5), c_chi: 0.0 },
            eta_p: 10f64.powf(rng.gen_range(-3.0..3.0)),
            a_y: Threshold { c0: rng.gen_range(0.0..2.0), c_alpha: 0.0, c_chi: rng.gen_range(-0.5..0.5) },
            eta_alpha: 10f64.powf(rng.gen_range(-3.0..3.0)),
        };
        let dim = if rng.gen_bool(0.5) { Dim::Two } else { Dim::One };
        let ell = rng.gen_range(1..=MAX_INTERNAL);
        let a = random_alpha(&mut rng, ell);
        let chi = rng.gen_range(0.0..1.0);
        let scale = 10f64.powf(rng.gen_range(-3.0..2.0));
        let drv_p = random_sym(&mut rng, dim, scale);
        let mut drv_a = random_alpha(&mut rng, ell);
        for x in drv_a.as_mut_slice() {
            *x = (*x - 0.5) * 2.0 * scale;
        }
        let r = prox_rates(&a, chi, &drv_p, &drv_a, &dp);
        worst = worst.max(r.certificate);
        if r.rate_p.norm() == 0.0 {
            locked += 1;
        } else {
            flowing += 1;
        }
    }
    (worst, locked, flowing)
}

fn prox_checks(samples: usize, seed: u64) -> Vec<Check> {
    let (worst, locked, flowing) = prox_max_certificate(samples, seed);
    let share = locked.min(flowing) as f64 / samples.max(1) as f64;
    vec![
        Check::at_most("max inclusion certificate", worst, PROX_TOL),
        Check::at_least("smaller regime share", share, 0.05),
    ]
}

/// Orders of both integral identities for `d = 1, 2` on `levels` grids
/// `32·2^i`, central advection.
pub fn lemma_outcomes(levels: usize) -> Result<Vec<crate::audit::LemmaOutcome>> {
    if levels < 2 {
        return Err(Error::Parameter("lemma check needs at least two levels".into()));
    }
    let cells: Vec<usize> = (0..levels).map(|i| 32 << i).collect();
    let mut out = Vec::new();
    for d in [1, 2] {
        let fields = LemmaFields::standard(d);
        for kind in [LemmaKind::Kinetic, LemmaKind::Gradient] {
            out.push(lemma_identity_check(kind, &fields, &cells, Advection::Central)?);
        }
    }
    Ok(out)
}

fn lemma_checks(levels: usize) -> Result<Vec<Check>> {
    Ok(lemma_outcomes(levels)?
        .into_iter()
        .map(|o| Check::at_least(format!("{:?} identity d={} min order", o.kind, o.d), o.min_order(), LEMMA_MIN_ORDER))
        .collect())
}

fn energy_checks(cfg: &ScenarioConfig) -> Result<Vec<Check>> {
    let mut sim = Simulation::new(cfg)?;
    let aborted = sim.run_to_end().is_err();
    let margin = sim.ledger.min_step_margin();
    Ok(vec![
        Check::at_least("completed", if aborted { 0.0 } else { 1.0 }, 1.0),
        Check::at_least("min step slack + tol_E", margin, 0.0),
        Check::at_most("norms above ceiling", sim.monitor.exceeding(cfg.solver.norm_ceiling).len() as f64, 0.0),
    ])
}

/// One configuration per parameter hypothesis, each violating only it.
pub fn hypothesis_fixtures() -> Vec<(&'static str, ScenarioConfig)> {
    let base = ScenarioConfig::default();
    let mut c1 = base.clone();
    c1.material.eps_sat = 1.0;
    c1.material.g1 = 4.0;
    c1.material.g0 = 0.1;
    let mut c2 = base.clone();
    c2.dissipation.eta_p = 0.0;
    let mut c3 = base.clone();
    c3.mobility.m0 = 0.0;
    c3.mobility.m_min = 0.0;
    let mut c4 = base;
    c4.moduli.ke = 0.0;
    vec![("ass:1", c1), ("ass:2", c2), ("ass:3", c3), ("ass:4", c4)]
}

/// Largest `|tr S_str + 2φ|` relative to `max(1, |φ|)` over random states
/// on a 2-D grid.
pub fn trace_identity_error(states: usize, seed: u64) -> Result<f64> {
    let g = Grid::boxed(Dim::Two, 12, 1.0)?;
    let cfg = ScenarioConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..states {
        let mut m = cfg.moduli;
        m.kp = rng.gen_range(0.0..1.0);
        m.ka = rng.gen_range(0.0..1.0);
        let mut mat = cfg.material();
        mat.biot = random_params(&mut rng);
        mat.ell = rng.gen_range(1..=MAX_INTERNAL);
        let noise = |n: usize, a: f64| vec![Profile::Noise { amplitude: vec![a; n] }];
        let s = rng.gen();
        let mut ep = realize(&g, 3, &noise(3, 0.3), s);
        let mut al = realize(&g, mat.ell, &noise(mat.ell, 0.5), s + 1);
        let ee = realize(&g, 3, &noise(3, 0.3), s + 2);
        let chi = realize(&g, 1, &noise(1, 0.5), s + 3);
        apply_boundary(&mut ep, &BcSpec::HomNeumann, &g)?;
        apply_boundary(&mut al, &BcSpec::HomNeumann, &g)?;
        let st = structural_stress(&ep, &al, &ee, &chi, &m, &mat, &g);
        for c in g.interior_indices() {
            let phi = free_energy(&ee.sym_at(Dim::Two, c), &alpha_at(&al, c), chi.at(0, c), &mat.biot);
            let tr = st.at(0, c) + st.at(3, c);
            worst = worst.max((tr + 2.0 * phi).abs() / phi.abs().max(1.0));
        }
    }
    Ok(worst)
}

fn hypothesis_checks(states: usize, seed: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for (tag, cfg) in hypothesis_fixtures() {
        let named = match cfg.validate() {
            Err(Error::Hypotheses(v)) => v.iter().any(|x| x.hypothesis == tag),
            _ => false,
        };
        out.push(Check::at_least(format!("{tag} violation rejected"), if named { 1.0 } else { 0.0 }, 1.0));
    }
    out.push(Check::at_most("max |tr S_str + 2 phi|", trace_identity_error(states, seed)?, TRACE_TOL));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_point_difference_is_exact_on_quartics() {
        let d = fd(|t| (1.0 + t).powi(4));
        assert!((d - 4.0).abs() < 1e-11);
    }

    #[test]
    fn small_gradient_sweep_passes() {
        assert!(gradient_errors(50, 3).iter().all(|x| *x <= GRADIENT_TOL));
    }

    #[test]
    fn prox_sweep_covers_both_regimes() {
        let (w, locked, flowing) = prox_max_certificate(2000, 1);
        assert!(w <= PROX_TOL);
        assert!(locked > 100 && flowing > 100);
    }

    #[test]
    fn each_fixture_violates_its_hypothesis() {
        let r = verify_suite(VerifyKind::Hypotheses, &VerifyOptions { samples: Some(3), ..Default::default() }).unwrap();
        assert!(r.passed, "{:?}", r.checks);
    }
}
