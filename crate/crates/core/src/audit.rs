//! Energy bookkeeping of accepted steps, recomputed from the states alone.
//!
//! The audit shares the stencils of [`crate::field`] with the solver but
//! sums with its own quadrature: reversed traversal and compensated
//! summation in `f64`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{
    apply_boundary, convective_derivative, grad, laplacian, sym_of_grad, Advection, BcSpec, Field, Grid,
};
use crate::material::{dissipation_potential, dissipation_rate_xi, dphi_dalpha, free_energy, mobility, Material, Moduli};
use crate::scalar::Real;
use crate::scheme::ops::LoadSample;
use crate::scheme::{alpha_at, State};
use crate::tensor::{Dim, SymTensor};

/// Spatial-error constant of the energy tolerance, calibrated on the
/// viscous-decay fixture at n = 16, 32, 64 with a tenfold margin.
pub const C_H: f64 = 2.0;

/// Version tag written in the first line of energy CSV files.
pub const ENERGY_CSV_VERSION: u32 = 1;

/// Column names of the energy CSV, in [`EnergyReport`] field order.
pub const ENERGY_COLUMNS: [&str; 15] = [
    "t",
    "kinetic",
    "stored_phi",
    "stored_gradEp",
    "stored_gradAlpha",
    "diss_zeta",
    "diss_viscous",
    "diss_darcy",
    "diss_stressdiff",
    "diss_reg",
    "diss_boundary",
    "power_bulk",
    "power_boundary",
    "reg_credit",
    "slack",
];

/// Neumaier-compensated sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct Compensated {
    sum: f64,
    carry: f64,
}

impl Compensated {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.carry
    }
}

/// `∫ f` over the interior, traversed back to front.
fn cell_sum<T: Real>(grid: &Grid<T>, mut f: impl FnMut(usize) -> f64) -> f64 {
    let mut acc = Compensated::default();
    for c in grid.interior_indices().into_iter().rev() {
        acc.add(f(c));
    }
    acc.total() * grid.cell_volume().to64()
}

/// Face-area weighted sum over wall faces, back to front.
fn face_sum<T: Real>(grid: &Grid<T>, mut f: impl FnMut(usize) -> f64) -> f64 {
    let mut acc = Compensated::default();
    for (fi, face) in grid.faces().iter().enumerate().rev() {
        acc.add(face.area.to64() * f(fi));
    }
    acc.total()
}

/// Pointwise squared norm of a gradient field of `m` components with
/// optional packed-tensor weights.
fn grad_sq<T: Real>(g: &Field<T>, c: usize, d: usize, weights: Option<Dim>) -> f64 {
    let m = g.ncomp() / d;
    let mut s = 0.0;
    for k in 0..m {
        let w = weights.map_or(1.0, |dim| dim.sym_weight(k));
        for a in 0..d {
            let x = g.at(k * d + a, c).to64();
            s += w * x * x;
        }
    }
    s
}

fn packed_sq<T: Real>(f: &Field<T>, c: usize, dim: Dim) -> f64 {
    (0..f.ncomp()).map(|k| dim.sym_weight(k) * f.at(k, c).to64().powi(2)).sum()
}

fn plain_sq<T: Real>(f: &Field<T>, c: usize) -> f64 {
    (0..f.ncomp()).map(|k| f.at(k, c).to64().powi(2)).sum()
}

fn with_mirror<T: Real>(f: &Field<T>, g: &Grid<T>) -> Result<Field<T>> {
    let mut x = f.clone();
    apply_boundary(&mut x, &BcSpec::HomNeumann, g)?;
    Ok(x)
}

/// Stored energy split by contribution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct StoredEnergy {
    pub kinetic: f64,
    pub phi: f64,
    pub grad_ep: f64,
    pub grad_alpha: f64,
}

impl StoredEnergy {
    pub fn total(&self) -> f64 {
        self.kinetic + self.phi + self.grad_ep + self.grad_alpha
    }
}

/// `∫ ρ/2|v|² + φ + k_p/2|∇E_p|² + k_a/2|∇α|²`, split.
pub fn stored_energy<T: Real>(s: &State<T>, m: &Moduli<T>, mat: &Material<T>) -> Result<StoredEnergy> {
    let g = &s.grid;
    let dim = g.dim();
    let d = g.d();
    let gp = grad(&with_mirror(&s.ep, g)?, g);
    let ga = grad(&with_mirror(&s.alpha, g)?, g);
    let rho = m.rho.to64();
    Ok(StoredEnergy {
        kinetic: cell_sum(g, |c| 0.5 * rho * plain_sq(&s.v, c)),
        phi: cell_sum(g, |c| free_energy(&s.ee.sym_at(dim, c), &alpha_at(&s.alpha, c), s.chi.at(0, c), &mat.biot).to64()),
        grad_ep: cell_sum(g, |c| 0.5 * m.kp.to64() * grad_sq(&gp, c, d, Some(dim))),
        grad_alpha: cell_sum(g, |c| 0.5 * m.ka.to64() * grad_sq(&ga, c, d, None)),
    })
}

/// Increments of one step: stored energies at the new time and
/// τ-weighted rates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct StepTerms {
    pub stored: StoredEnergy,
    pub diss_zeta: f64,
    /// `τ∫ξ`, reported alongside ζ but not part of the balance.
    pub diss_xi: f64,
    pub diss_viscous: f64,
    pub diss_darcy: f64,
    pub diss_stressdiff: f64,
    pub diss_reg: f64,
    pub diss_boundary: f64,
    pub power_bulk: f64,
    pub power_boundary: f64,
    pub reg_credit: f64,
}

impl StepTerms {
    pub fn dissipated(&self) -> f64 {
        self.diss_zeta + self.diss_viscous + self.diss_darcy + self.diss_stressdiff + self.diss_reg + self.diss_boundary
    }

    pub fn supplied(&self) -> f64 {
        self.power_bulk + self.power_boundary + self.reg_credit
    }
}

/// Data of the step being audited beyond the two states.
#[derive(Clone, Copy)]
pub struct AuditInput<'a, T> {
    pub loads: &'a LoadSample<T>,
    pub m: &'a Moduli<T>,
    pub mat: &'a Material<T>,
    pub tau: T,
    pub mode: Advection,
    pub picard_tol: f64,
}

/// Every term of the discrete energy-like balance for the step `prev → next`.
pub fn step_terms<T: Real>(next: &State<T>, prev: &State<T>, inp: &AuditInput<'_, T>) -> Result<StepTerms> {
    let g = &next.grid;
    let dim = g.dim();
    let d = g.d();
    let (m, mat, mode) = (inp.m, inp.mat, inp.mode);
    let tau = inp.tau;
    let tau64 = tau.to64();
    let sqrt_tau = tau64.sqrt();

    let mut v = next.v.clone();
    let slip = BcSpec::NormalZeroSlip { gamma: m.gamma, kv: m.kv, traction: &inp.loads.traction, stress: Some(&next.s) };
    apply_boundary(&mut v, &slip, g)?;
    let e_v = sym_of_grad(&grad(&v, g), g);
    let ep = with_mirror(&next.ep, g)?;
    let al = with_mirror(&next.alpha, g)?;
    let mtd_ep = convective_derivative(&ep, &prev.ep, &v, tau, g, mode)?;
    let mtd_al = convective_derivative(&al, &prev.alpha, &v, tau, g, mode)?;

    let mut mob = Field::scalar(g);
    g.for_interior(|c| mob.set(0, c, mobility(&alpha_at(&prev.alpha, c), prev.chi.at(0, c), &mat.mobility)));
    let mut mu = next.mu.clone();
    apply_boundary(&mut mu, &BcSpec::FluxNeumann { flux: &inp.loads.flux, mobility: &mob }, g)?;
    let gmu = grad(&mu, g);
    let gs = grad(&with_mirror(&next.s, g)?, g);

    let rates = |c: usize| {
        let rp = mtd_ep.sym_at(dim, c);
        let ra = alpha_at(&mtd_al, c);
        (alpha_at(&prev.alpha, c), prev.chi.at(0, c), rp, ra)
    };
    let diss_zeta = tau64
        * cell_sum(g, |c| {
            let (a, chi, rp, ra) = rates(c);
            dissipation_potential(&a, chi, &rp, &ra, &mat.diss).to64()
        });
    let diss_xi = tau64
        * cell_sum(g, |c| {
            let (a, chi, rp, ra) = rates(c);
            dissipation_rate_xi(&a, chi, &rp, &ra, &mat.diss).to64()
        });
    let diss_reg = tau64
        * sqrt_tau
        * cell_sum(g, |c| {
            (0..next.ell()).map(|k| ((next.alpha.at(k, c) - prev.alpha.at(k, c)).to64() / tau64).powi(2)).sum::<f64>()
        });
    let reg_credit = tau64 * 0.5 * sqrt_tau * cell_sum(g, |c| plain_sq(&mtd_al, c));

    let faces = g.faces();
    let wall_velocity = |fi: usize| {
        let f = &faces[fi];
        let mut w = [0.0; 2];
        for (k, x) in w.iter_mut().enumerate().take(d) {
            if k != f.axis {
                *x = 0.5 * (v.at(k, f.inner) + v.at(k, f.ghost)).to64();
            }
        }
        w
    };

    Ok(StepTerms {
        stored: stored_energy(next, m, mat)?,
        diss_zeta,
        diss_xi,
        diss_viscous: tau64 * m.kv.to64() * cell_sum(g, |c| packed_sq(&e_v, c, dim)),
        diss_darcy: tau64 * cell_sum(g, |c| mob.at(0, c).to64() * grad_sq(&gmu, c, d, None)),
        diss_stressdiff: tau64 * m.ke.to64() * cell_sum(g, |c| grad_sq(&gs, c, d, Some(dim))),
        diss_reg,
        diss_boundary: tau64
            * m.gamma.to64()
            * face_sum(g, |fi| {
                let w = wall_velocity(fi);
                w[0] * w[0] + w[1] * w[1]
            }),
        power_bulk: tau64 * cell_sum(g, |c| (0..d).map(|k| (inp.loads.f.at(k, c) * v.at(k, c)).to64()).sum::<f64>()),
        power_boundary: tau64
            * face_sum(g, |fi| {
                let w = wall_velocity(fi);
                let f = &faces[fi];
                let gt = inp.loads.traction[fi];
                let mu_face = 0.5 * (mu.at(0, f.inner) + mu.at(0, f.ghost)).to64();
                gt[0].to64() * w[0] + gt[1].to64() * w[1] + inp.loads.flux[fi].to64() * mu_face
            }),
        reg_credit,
    })
}

/// Cumulative energy ledger row; the column set of the energy CSV.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct EnergyReport {
    pub t: f64,
    pub kinetic: f64,
    pub stored_phi: f64,
    #[serde(rename = "stored_gradEp")]
    pub stored_grad_ep: f64,
    #[serde(rename = "stored_gradAlpha")]
    pub stored_grad_alpha: f64,
    pub diss_zeta: f64,
    pub diss_viscous: f64,
    pub diss_darcy: f64,
    pub diss_stressdiff: f64,
    pub diss_reg: f64,
    pub diss_boundary: f64,
    pub power_bulk: f64,
    pub power_boundary: f64,
    pub reg_credit: f64,
    /// Right minus left side of the balance, accumulated from t = 0.
    pub slack: f64,
}

impl EnergyReport {
    /// Values in [`ENERGY_COLUMNS`] order.
    pub fn values(&self) -> [f64; 15] {
        [
            self.t,
            self.kinetic,
            self.stored_phi,
            self.stored_grad_ep,
            self.stored_grad_alpha,
            self.diss_zeta,
            self.diss_viscous,
            self.diss_darcy,
            self.diss_stressdiff,
            self.diss_reg,
            self.diss_boundary,
            self.power_bulk,
            self.power_boundary,
            self.reg_credit,
            self.slack,
        ]
    }

    pub fn stored_total(&self) -> f64 {
        self.kinetic + self.stored_phi + self.stored_grad_ep + self.stored_grad_alpha
    }

    fn dissipation_entries(&self) -> [f64; 6] {
        [self.diss_zeta, self.diss_viscous, self.diss_darcy, self.diss_stressdiff, self.diss_reg, self.diss_boundary]
    }
}

/// Per-step slack against its tolerance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct StepAudit {
    pub t: f64,
    pub slack: f64,
    pub tol: f64,
    /// Energy scale multiplying the solver tolerance.
    pub energy_scale: f64,
    /// `h·G_k`, the spatial part before the constant.
    pub spatial_scale: f64,
    pub xi_over_zeta: Option<f64>,
}

impl StepAudit {
    pub fn passes(&self) -> bool {
        self.slack >= -self.tol
    }
}

/// `h·G_k` with `G_k = τ‖v‖∞(‖∇E_e‖‖∇S‖ + ‖∇α‖‖∇∂_αφ‖ + ‖∇χ‖‖∇μ‖ + k_p‖∇E_p‖‖ΔE_p‖ + k_a‖∇α‖‖Δα‖)`.
pub fn spatial_scale<T: Real>(next: &State<T>, inp: &AuditInput<'_, T>) -> Result<f64> {
    let g = &next.grid;
    let dim = g.dim();
    let d = g.d();
    let (m, mat) = (inp.m, inp.mat);
    let l2 = |f: &Field<T>, w: Option<Dim>| cell_sum(g, |c| grad_sq(f, c, d, w)).sqrt();
    let l2v = |f: &Field<T>, w: Option<Dim>| {
        cell_sum(g, |c| match w {
            Some(dim) => packed_sq(f, c, dim),
            None => plain_sq(f, c),
        })
        .sqrt()
    };
    let ee = with_mirror(&next.ee, g)?;
    let ep = with_mirror(&next.ep, g)?;
    let al = with_mirror(&next.alpha, g)?;
    let chi = with_mirror(&next.chi, g)?;
    let s = with_mirror(&next.s, g)?;
    let mut dphi = Field::zeros(g, next.ell());
    g.for_interior(|c| {
        let x = dphi_dalpha(&next.ee.sym_at(dim, c), &alpha_at(&next.alpha, c), next.chi.at(0, c), &mat.biot);
        for k in 0..next.ell() {
            dphi.set(k, c, x[k]);
        }
    });
    let dphi = with_mirror(&dphi, g)?;
    let mu = with_mirror(&next.mu, g)?;
    let vmax = next.v.max_abs(g).to64();
    let gk = vmax
        * (l2(&grad(&ee, g), Some(dim)) * l2(&grad(&s, g), Some(dim))
            + l2(&grad(&al, g), None) * l2(&grad(&dphi, g), None)
            + l2(&grad(&chi, g), None) * l2(&grad(&mu, g), None)
            + m.kp.to64() * l2(&grad(&ep, g), Some(dim)) * l2v(&laplacian(&ep, g), Some(dim))
            + m.ka.to64() * l2(&grad(&al, g), None) * l2v(&laplacian(&al, g), None));
    Ok(g.h_max().to64() * inp.tau.to64() * gk)
}

/// `10·picard_tol·E_scale + C_H·h·G_k`.
pub fn energy_tolerance(picard_tol: f64, energy_scale: f64, spatial_scale: f64) -> f64 {
    10.0 * picard_tol * energy_scale + C_H * spatial_scale
}

/// Trajectory ledger: cumulative reports and per-step audits.
#[derive(Clone, Debug, Default, Serialize)]
pub struct EnergyLedger {
    pub t0: f64,
    pub initial: StoredEnergy,
    pub reports: Vec<EnergyReport>,
    pub steps: Vec<StepAudit>,
    cumulative: EnergyReport,
}

impl EnergyLedger {
    pub fn new<T: Real>(initial: &State<T>, m: &Moduli<T>, mat: &Material<T>) -> Result<Self> {
        let e0 = stored_energy(initial, m, mat)?;
        let cumulative = EnergyReport {
            t: initial.t.to64(),
            kinetic: e0.kinetic,
            stored_phi: e0.phi,
            stored_grad_ep: e0.grad_ep,
            stored_grad_alpha: e0.grad_alpha,
            ..Default::default()
        };
        Ok(Self { t0: initial.t.to64(), initial: e0, reports: Vec::new(), steps: Vec::new(), cumulative })
    }

    /// Report of the state before any step.
    pub fn initial_report(&self) -> EnergyReport {
        EnergyReport {
            t: self.t0,
            kinetic: self.initial.kinetic,
            stored_phi: self.initial.phi,
            stored_grad_ep: self.initial.grad_ep,
            stored_grad_alpha: self.initial.grad_alpha,
            ..Default::default()
        }
    }

    /// Audits the accepted step `prev → next` and appends its report.
    pub fn energy_report<T: Real>(&mut self, next: &State<T>, prev: &State<T>, inp: &AuditInput<'_, T>) -> Result<EnergyReport> {
        let st = step_terms(next, prev, inp)?;
        let before = stored_energy(prev, inp.m, inp.mat)?;
        let step_slack = before.total() + st.supplied() - st.stored.total() - st.dissipated();
        let energy_scale = before.total().abs() + st.stored.total().abs() + st.dissipated().abs() + st.supplied().abs();
        let spatial = spatial_scale(next, inp)?;
        let zeta = st.diss_zeta;
        self.steps.push(StepAudit {
            t: next.t.to64(),
            slack: step_slack,
            tol: energy_tolerance(inp.picard_tol, energy_scale, spatial),
            energy_scale,
            spatial_scale: spatial,
            xi_over_zeta: (zeta > 0.0).then(|| st.diss_xi / zeta),
        });

        let c = &mut self.cumulative;
        c.t = next.t.to64();
        c.kinetic = st.stored.kinetic;
        c.stored_phi = st.stored.phi;
        c.stored_grad_ep = st.stored.grad_ep;
        c.stored_grad_alpha = st.stored.grad_alpha;
        c.diss_zeta += st.diss_zeta;
        c.diss_viscous += st.diss_viscous;
        c.diss_darcy += st.diss_darcy;
        c.diss_stressdiff += st.diss_stressdiff;
        c.diss_reg += st.diss_reg;
        c.diss_boundary += st.diss_boundary;
        c.power_bulk += st.power_bulk;
        c.power_boundary += st.power_boundary;
        c.reg_credit += st.reg_credit;
        c.slack = self.initial.total() + c.power_bulk + c.power_boundary + c.reg_credit
            - c.stored_total()
            - c.dissipation_entries().iter().sum::<f64>();
        let rep = *c;
        debug_assert!(rep.dissipation_entries().iter().all(|x| *x >= -1e-14 * energy_scale.max(1.0)));
        self.reports.push(rep);
        Ok(rep)
    }

    pub fn min_step_margin(&self) -> f64 {
        self.steps.iter().map(|s| s.slack + s.tol).fold(f64::INFINITY, f64::min)
    }

    pub fn min_step_slack(&self) -> f64 {
        self.steps.iter().map(|s| s.slack).fold(f64::INFINITY, f64::min)
    }

    pub fn all_steps_pass(&self) -> bool {
        self.steps.iter().all(StepAudit::passes)
    }
}

/// `C_H` fitted from per-step audits: ten times the largest spatial
/// deficit per unit `h·G_k`.
pub fn fit_spatial_constant(steps: &[StepAudit], picard_tol: f64) -> f64 {
    let worst = steps
        .iter()
        .filter(|s| s.spatial_scale > 0.0)
        .map(|s| ((-s.slack - 10.0 * picard_tol * s.energy_scale) / s.spatial_scale).max(0.0))
        .fold(0.0, f64::max);
    10.0 * worst
}

/// `∫ζ` and `∫ξ` of one set of rates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct DissipationLedger {
    pub zeta: f64,
    pub xi: f64,
}

impl DissipationLedger {
    /// `∫ξ / ∫ζ`, or `None` when nothing dissipates.
    pub fn ratio(&self) -> Option<f64> {
        (self.zeta > 0.0).then(|| self.xi / self.zeta)
    }
}

/// Domain integrals of ζ and ξ for the given rate fields, with the
/// thresholds frozen at `(alpha, chi)`.
pub fn dissipation_xi_ledger<T: Real>(
    grid: &Grid<T>,
    alpha: &Field<T>,
    chi: &Field<T>,
    rate_p: &Field<T>,
    rate_alpha: &Field<T>,
    mat: &Material<T>,
) -> DissipationLedger {
    let dim = grid.dim();
    let at = |c: usize| (alpha_at(alpha, c), chi.at(0, c), rate_p.sym_at(dim, c), alpha_at(rate_alpha, c));
    DissipationLedger {
        zeta: cell_sum(grid, |c| {
            let (a, x, rp, ra) = at(c);
            dissipation_potential(&a, x, &rp, &ra, &mat.diss).to64()
        }),
        xi: cell_sum(grid, |c| {
            let (a, x, rp, ra) = at(c);
            dissipation_rate_xi(&a, x, &rp, &ra, &mat.diss).to64()
        }),
    }
}

/// Tracked a-priori norms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct NormValues {
    pub sup_l2_v: f64,
    pub sup_l2_ee: f64,
    pub sup_l2_chi: f64,
    pub l2_h1_v: f64,
    pub l2_h1_s: f64,
    pub l2_h1_mu: f64,
    pub sup_h1_ep: f64,
    pub sup_h1_alpha: f64,
    pub l43_dt_ep: f64,
    pub l43_dt_alpha: f64,
}

impl NormValues {
    pub const NAMES: [&'static str; 10] = [
        "sup_l2_v",
        "sup_l2_ee",
        "sup_l2_chi",
        "l2_h1_v",
        "l2_h1_s",
        "l2_h1_mu",
        "sup_h1_ep",
        "sup_h1_alpha",
        "l43_dt_ep",
        "l43_dt_alpha",
    ];

    pub fn as_array(&self) -> [f64; 10] {
        [
            self.sup_l2_v,
            self.sup_l2_ee,
            self.sup_l2_chi,
            self.l2_h1_v,
            self.l2_h1_s,
            self.l2_h1_mu,
            self.sup_h1_ep,
            self.sup_h1_alpha,
            self.l43_dt_ep,
            self.l43_dt_alpha,
        ]
    }
}

/// Running a-priori norms of a trajectory. Time-integrated norms are kept
/// as accumulated powers and reported as norms.
#[derive(Clone, Debug, Default, Serialize)]
pub struct NormMonitor {
    sup_l2_v: f64,
    sup_l2_ee: f64,
    sup_l2_chi: f64,
    acc_h1_v: f64,
    acc_h1_s: f64,
    acc_h1_mu: f64,
    sup_h1_ep: f64,
    sup_h1_alpha: f64,
    acc_dt_ep: f64,
    acc_dt_alpha: f64,
    pub steps: usize,
    /// Values after every update.
    pub history: Vec<NormValues>,
}

fn h1_sq<T: Real>(f: &Field<T>, g: &Grid<T>, w: Option<Dim>) -> Result<f64> {
    let d = g.d();
    let x = with_mirror(f, g)?;
    let gx = grad(&x, g);
    Ok(cell_sum(g, |c| {
        let v = match w {
            Some(dim) => packed_sq(f, c, dim),
            None => plain_sq(f, c),
        };
        v + grad_sq(&gx, c, d, w)
    }))
}

impl NormMonitor {
    /// Monitor seeded with the sup-type norms of the initial state.
    pub fn new<T: Real>(initial: &State<T>) -> Result<Self> {
        let mut m = Self::default();
        m.observe_sup(initial)?;
        Ok(m)
    }

    fn observe_sup<T: Real>(&mut self, s: &State<T>) -> Result<()> {
        let g = &s.grid;
        let dim = g.dim();
        self.sup_l2_v = self.sup_l2_v.max(cell_sum(g, |c| plain_sq(&s.v, c)).sqrt());
        self.sup_l2_ee = self.sup_l2_ee.max(cell_sum(g, |c| packed_sq(&s.ee, c, dim)).sqrt());
        self.sup_l2_chi = self.sup_l2_chi.max(cell_sum(g, |c| plain_sq(&s.chi, c)).sqrt());
        self.sup_h1_ep = self.sup_h1_ep.max(h1_sq(&s.ep, g, Some(dim))?.sqrt());
        self.sup_h1_alpha = self.sup_h1_alpha.max(h1_sq(&s.alpha, g, None)?.sqrt());
        Ok(())
    }

    /// Folds in the accepted step `prev → next`.
    pub fn update<T: Real>(&mut self, next: &State<T>, prev: &State<T>, tau: f64) -> Result<NormValues> {
        let g = &next.grid;
        let dim = g.dim();
        self.observe_sup(next)?;
        self.acc_h1_v += tau * h1_sq(&next.v, g, None)?;
        self.acc_h1_s += tau * h1_sq(&next.s, g, Some(dim))?;
        self.acc_h1_mu += tau * h1_sq(&next.mu, g, None)?;
        let p43 = |x: f64| x.powf(2.0 / 3.0);
        self.acc_dt_ep += tau
            * cell_sum(g, |c| {
                let r: SymTensor<T> = next.ep.sym_at(dim, c) - prev.ep.sym_at(dim, c);
                p43(r.norm_sq().to64()) / tau.powf(4.0 / 3.0)
            });
        self.acc_dt_alpha += tau
            * cell_sum(g, |c| {
                let s: f64 = (0..next.ell()).map(|k| (next.alpha.at(k, c) - prev.alpha.at(k, c)).to64().powi(2)).sum();
                p43(s) / tau.powf(4.0 / 3.0)
            });
        self.steps += 1;
        let v = self.values();
        self.history.push(v);
        Ok(v)
    }

    pub fn values(&self) -> NormValues {
        NormValues {
            sup_l2_v: self.sup_l2_v,
            sup_l2_ee: self.sup_l2_ee,
            sup_l2_chi: self.sup_l2_chi,
            l2_h1_v: self.acc_h1_v.sqrt(),
            l2_h1_s: self.acc_h1_s.sqrt(),
            l2_h1_mu: self.acc_h1_mu.sqrt(),
            sup_h1_ep: self.sup_h1_ep,
            sup_h1_alpha: self.sup_h1_alpha,
            l43_dt_ep: self.acc_dt_ep.powf(0.75),
            l43_dt_alpha: self.acc_dt_alpha.powf(0.75),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.values().as_array().iter().all(|x| x.is_finite())
    }

    /// Names of norms above `ceiling`; non-finite norms always count.
    pub fn exceeding(&self, ceiling: f64) -> Vec<&'static str> {
        let v = self.values().as_array();
        NormValues::NAMES.iter().zip(v).filter(|(_, x)| !x.is_finite() || *x > ceiling).map(|(n, _)| *n).collect()
    }

    /// Names of norms whose final value exceeds `factor` times their value
    /// at the quarter mark of the recorded history.
    pub fn blow_up(&self, factor: f64) -> Vec<&'static str> {
        let n = self.history.len();
        if n < 4 {
            return Vec::new();
        }
        let q = self.history[n / 4 - 1].as_array();
        let last = self.history[n - 1].as_array();
        NormValues::NAMES
            .iter()
            .enumerate()
            .filter(|(i, _)| !last[*i].is_finite() || last[*i] > factor * q[*i] + 1e-12)
            .map(|(_, n)| *n)
            .collect()
    }
}

/// Which integral identity to test.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum LemmaKind {
    /// `d/dt ∫ρ/2|v|² = ∫ρ(v̇ + ½(div v)v)·v`.
    Kinetic,
    /// `d/dt ∫½|∇A|² = ∫(½|∇A|²I − ∇A⊠∇A):E(v) − ΔA·Ȧ`.
    Gradient,
}

type Analytic = Box<dyn Fn(f64, [f64; 2]) -> [f64; 2] + Send + Sync>;
type AnalyticScalar = Box<dyn Fn(f64, [f64; 2]) -> f64 + Send + Sync>;

/// Smooth test fields on the unit box `[0, 1]^d`.
pub struct LemmaFields {
    pub d: usize,
    pub velocity: Analytic,
    pub scalar: AnalyticScalar,
    pub time: f64,
}

impl LemmaFields {
    /// Wall-tangential velocity and a Neumann scalar, both time dependent.
    pub fn standard(d: usize) -> Self {
        use std::f64::consts::PI;
        if d == 1 {
            Self {
                d,
                velocity: Box::new(|t, x| [(PI * x[0]).sin() * t.cos(), 0.0]),
                scalar: Box::new(|t, x| (PI * x[0]).cos() * (1.0 + 0.5 * t.sin()) + 0.3 * (2.0 * PI * x[0]).cos()),
                time: 0.4,
            }
        } else {
            Self {
                d,
                velocity: Box::new(|t, x| {
                    let (sx, sy) = ((PI * x[0]).sin(), (PI * x[1]).sin());
                    [sx * (PI * x[1]).cos() * t.cos() + 0.3 * sx, sy * (2.0 * PI * x[0]).cos() * (1.0 + t)]
                }),
                scalar: Box::new(|t, x| {
                    (PI * x[0]).cos() * (PI * x[1]).cos() * (1.0 + 0.5 * t.sin()) + 0.2 * (2.0 * PI * x[1]).cos() * t
                }),
                time: 0.4,
            }
        }
    }
}

/// Measured discrepancy of one identity per resolution.
#[derive(Clone, Debug, Serialize)]
pub struct LemmaOutcome {
    pub kind: LemmaKind,
    pub d: usize,
    pub cells: Vec<usize>,
    pub errors: Vec<f64>,
    /// Richardson orders between consecutive levels.
    pub orders: Vec<f64>,
}

impl LemmaOutcome {
    pub fn min_order(&self) -> f64 {
        self.orders.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

fn sample_field(grid: &Grid<f64>, ncomp: usize, f: impl Fn([f64; 2]) -> [f64; 2]) -> Field<f64> {
    let mut out = Field::zeros(grid, ncomp);
    for c in 0..grid.total() {
        let x = grid.center(c);
        let val = f(x);
        for (k, v) in val.iter().enumerate().take(ncomp) {
            out.set(k, c, *v);
        }
    }
    out.mark_ghosts_filled();
    out
}

fn check_boundary_requirements(fields: &LemmaFields, grid: &Grid<f64>) -> Result<()> {
    let eps = 1e-6;
    for f in grid.faces() {
        let x = f.center;
        let v = (fields.velocity)(fields.time, x);
        if v[f.axis].abs() > 1e-10 {
            return Err(Error::Parameter(format!("test velocity has normal component {:.3e} at {:?}", v[f.axis], x)));
        }
        let mut xin = x;
        xin[f.axis] -= f.sign * eps;
        let dn = ((fields.scalar)(fields.time, x) - (fields.scalar)(fields.time, xin)) / eps;
        if dn.abs() > 1e-4 {
            return Err(Error::Parameter(format!("test scalar has normal derivative {dn:.3e} at {x:?}")));
        }
    }
    Ok(())
}

/// Left minus right side of one identity on an `n^d` grid.
fn lemma_discrepancy(kind: LemmaKind, fields: &LemmaFields, n: usize, mode: Advection) -> Result<f64> {
    let dim = Dim::new(fields.d)?;
    let g = Grid::<f64>::boxed(dim, n, 1.0)?;
    check_boundary_requirements(fields, &g)?;
    let d = fields.d;
    let t = fields.time;
    let dt = g.h(0);
    let vel = |s: f64| sample_field(&g, d, |x| (fields.velocity)(s, x));
    let sca = |s: f64| sample_field(&g, 1, |x| [(fields.scalar)(s, x), 0.0]);
    let v = vel(t);
    match kind {
        LemmaKind::Kinetic => {
            let energy = |f: &Field<f64>| cell_sum(&g, |c| 0.5 * plain_sq(f, c));
            let lhs = (energy(&vel(t + dt)) - energy(&vel(t - dt))) / (2.0 * dt);
            let (vp, vm) = (vel(t + dt), vel(t - dt));
            let adv = crate::field::advect(&v, &v, &g, mode);
            let divv = crate::field::div(&v, &g);
            let rhs = cell_sum(&g, |c| {
                (0..d)
                    .map(|k| {
                        let vt = (vp.at(k, c) - vm.at(k, c)) / (2.0 * dt);
                        (vt + adv.at(k, c) + 0.5 * divv.at(0, c) * v.at(k, c)) * v.at(k, c)
                    })
                    .sum::<f64>()
            });
            Ok(lhs - rhs)
        }
        LemmaKind::Gradient => {
            let a = sca(t);
            let energy = |f: &Field<f64>| {
                let gf = grad(f, &g);
                cell_sum(&g, |c| 0.5 * grad_sq(&gf, c, d, None))
            };
            let lhs = (energy(&sca(t + dt)) - energy(&sca(t - dt))) / (2.0 * dt);
            let (ap, am) = (sca(t + dt), sca(t - dt));
            let ga = grad(&a, &g);
            let e_v = sym_of_grad(&grad(&v, &g), &g);
            let lap = laplacian(&a, &g);
            let adv = crate::field::advect(&a, &v, &g, mode);
            let rhs = cell_sum(&g, |c| {
                let gsq = grad_sq(&ga, c, d, None);
                let mut korteweg = 0.0;
                for i in 0..d {
                    for j in 0..d {
                        let e = e_v.at(dim.sym_index(i, j), c);
                        let delta = if i == j { 0.5 * gsq } else { 0.0 };
                        korteweg += (delta - ga.at(i, c) * ga.at(j, c)) * e;
                    }
                }
                let mtd = (ap.at(0, c) - am.at(0, c)) / (2.0 * dt) + adv.at(0, c);
                korteweg - lap.at(0, c) * mtd
            });
            Ok(lhs - rhs)
        }
    }
}

/// Refinement study of one identity: discrepancies on `n = cells[i]` and the
/// observed orders between consecutive levels (each level doubling `n`).
pub fn lemma_identity_check(kind: LemmaKind, fields: &LemmaFields, cells: &[usize], mode: Advection) -> Result<LemmaOutcome> {
    if cells.len() < 2 {
        return Err(Error::Parameter("need at least two resolutions".into()));
    }
    let errors = cells.iter().map(|&n| lemma_discrepancy(kind, fields, n, mode).map(f64::abs)).collect::<Result<Vec<_>>>()?;
    let orders = errors
        .windows(2)
        .zip(cells.windows(2))
        .map(|(e, n)| {
            if e[0] == 0.0 && e[1] == 0.0 {
                f64::INFINITY
            } else {
                (e[0] / e[1]).ln() / (n[1] as f64 / n[0] as f64).ln()
            }
        })
        .collect();
    Ok(LemmaOutcome { kind, d: fields.d, cells: cells.to_vec(), errors, orders })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut c = Compensated::default();
        c.add(1.0);
        for _ in 0..10 {
            c.add(1e-17);
        }
        c.add(-1.0);
        assert!((c.total() - 1e-16).abs() < 1e-30);
    }

    #[test]
    fn kinetic_identity_converges_1d() {
        let f = LemmaFields::standard(1);
        let out = lemma_identity_check(LemmaKind::Kinetic, &f, &[32, 64, 128, 256], Advection::Central).unwrap();
        assert!(out.min_order() >= 1.9, "{out:?}");
    }

    #[test]
    fn gradient_identity_converges_2d() {
        let f = LemmaFields::standard(2);
        let out = lemma_identity_check(LemmaKind::Gradient, &f, &[32, 64, 128], Advection::Central).unwrap();
        assert!(out.min_order() >= 1.9, "{out:?}");
    }

    #[test]
    fn zero_velocity_and_constant_scalar_are_trivial() {
        let f = LemmaFields { d: 2, velocity: Box::new(|_, _| [0.0, 0.0]), scalar: Box::new(|_, _| 1.5), time: 0.1 };
        for kind in [LemmaKind::Kinetic, LemmaKind::Gradient] {
            let out = lemma_identity_check(kind, &f, &[16, 32], Advection::Central).unwrap();
            assert!(out.errors.iter().all(|e| *e < 1e-14), "{out:?}");
        }
    }

    #[test]
    fn rejects_velocity_through_the_wall() {
        let f = LemmaFields { d: 1, velocity: Box::new(|_, _| [1.0, 0.0]), scalar: Box::new(|_, _| 0.0), time: 0.0 };
        assert!(lemma_identity_check(LemmaKind::Kinetic, &f, &[16, 32], Advection::Central).is_err());
    }
}
