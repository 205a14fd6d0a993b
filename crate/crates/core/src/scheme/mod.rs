//! Fully implicit Rothe step: outer Picard sweeps over momentum, total
//! strain, flow rules and diffusion, with τ-halving on failure.

pub mod ops;
pub mod residual;
pub mod state;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{apply_boundary, grad, sym_of_grad, Advection, BcSpec, Field, Grid};
use crate::linsolve::LinStats;
use crate::material::{
    dphi_dalpha_affine, elastic_tangent, mobility, prox_jacobian_alpha, prox_jacobian_p, prox_rates, stress, Material,
    Moduli,
};
use crate::preset::Loads;
use crate::scalar::Real;
use crate::tensor::{InternalVec, SymTensor};

use ops::{
    laplacian_weight, neumann_laplacian, solve_affine, transport, transport_diag, water_flux, LoadSample,
    MomentumOperator,
};
pub use residual::{residual_norms, ResidualInput, ResidualRecord};
pub use state::{alpha_at, State};

/// Numerical controls of one step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    pub tau: f64,
    pub tau_min: f64,
    /// Relative combined residual accepted by the outer iteration.
    pub picard_tol: f64,
    pub picard_max: usize,
    pub lin_tol: f64,
    pub lin_max: usize,
    /// Under-relaxation of the velocity update, in (0, 1].
    pub relax: f64,
    pub advection: Advection,
    /// Cap on alternating flow-rule Newton sweeps per outer iteration.
    pub inner_max: usize,
    /// Hold the velocity at its initial value (frozen mechanics).
    pub freeze_velocity: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tau: 1e-3,
            tau_min: 1e-6,
            picard_tol: 1e-8,
            picard_max: 40,
            lin_tol: 1e-11,
            lin_max: 400,
            relax: 1.0,
            advection: Advection::Upwind,
            inner_max: 25,
            freeze_velocity: false,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Parameter(m));
        if !(self.tau_min > 0.0) || !(self.tau >= self.tau_min) || !self.tau.is_finite() {
            return bad(format!("need tau >= tau_min > 0, got tau = {}, tau_min = {}", self.tau, self.tau_min));
        }
        if !(self.picard_tol > 0.0 && self.picard_tol < 1.0) {
            return bad(format!("picard_tol must lie in (0, 1), got {}", self.picard_tol));
        }
        if !(self.lin_tol > 0.0 && self.lin_tol < 1.0) {
            return bad(format!("lin_tol must lie in (0, 1), got {}", self.lin_tol));
        }
        if !(self.relax > 0.0 && self.relax <= 1.0) {
            return bad(format!("relax must lie in (0, 1], got {}", self.relax));
        }
        if self.picard_max == 0 || self.lin_max == 0 || self.inner_max == 0 {
            return bad("iteration limits must be positive".into());
        }
        Ok(())
    }
}

/// Diagnostics of an accepted step.
#[derive(Clone, Debug, Default, Serialize)]
pub struct StepReport {
    pub picard_iterations: usize,
    pub residuals: ResidualRecord,
    pub tau_used: f64,
    pub halvings: usize,
    /// Linear iterations summed over all sub-solves.
    pub linear_iterations: usize,
    /// Largest inner flow-rule sweep count of any outer iteration.
    pub inner_sweeps: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum StepError {
    #[error("no convergence at t = {t} with tau = {tau} (combined residual {residual:.3e})")]
    NonConvergence { t: f64, tau: f64, residual: f64, residuals: ResidualRecord },
    #[error("non-finite values at t = {t}")]
    NonFinite { t: f64 },
    #[error(transparent)]
    Setup(#[from] Error),
}

enum Attempt<T> {
    Done(State<T>, StepReport),
    Stalled(ResidualRecord),
}

/// One step of the scheme from `prev`, halving τ on failure down to `tau_min`.
pub fn rothe_step<T: Real>(
    prev: &State<T>,
    loads: &Loads,
    m: &Moduli<T>,
    mat: &Material<T>,
    settings: &SolverSettings,
) -> std::result::Result<(State<T>, StepReport), StepError> {
    settings.validate()?;
    let mut tau = settings.tau;
    let mut halvings = 0;
    loop {
        let sample = LoadSample::average(loads, &prev.grid, prev.t, T::of(tau));
        match attempt(prev, &sample, m, mat, settings, T::of(tau))? {
            Attempt::Done(next, mut rep) => {
                rep.tau_used = tau;
                rep.halvings = halvings;
                return Ok((next, rep));
            }
            Attempt::Stalled(res) => {
                if !res.combined.is_finite() {
                    return Err(StepError::NonFinite { t: prev.t.to64() });
                }
                if tau * 0.5 < settings.tau_min {
                    return Err(StepError::NonConvergence {
                        t: prev.t.to64(),
                        tau,
                        residual: res.combined,
                        residuals: res,
                    });
                }
                tau *= 0.5;
                halvings += 1;
            }
        }
    }
}

fn attempt<T: Real>(
    prev: &State<T>,
    loads: &LoadSample<T>,
    m: &Moduli<T>,
    mat: &Material<T>,
    st: &SolverSettings,
    tau: T,
) -> std::result::Result<Attempt<T>, StepError> {
    let g = prev.grid.clone();
    let mut cur = prev.clone();
    cur.t = prev.t + tau;
    let mut rep = StepReport::default();
    let mut last = ResidualRecord { combined: f64::INFINITY, ..Default::default() };
    let inp = ResidualInput { loads, m, mat, tau, mode: st.advection, frozen_velocity: st.freeze_velocity };
    let mut lin_failures = 0;
    for it in 1..=st.picard_max {
        rep.picard_iterations = it;
        let mut lin_ok = true;
        let track = |s: LinStats, rep: &mut StepReport| {
            rep.linear_iterations += s.iterations;
            s.converged
        };

        let v = if st.freeze_velocity {
            let mut v = cur.v.clone();
            fill_slip(&mut v, &cur.s, loads, m, &g)?;
            v
        } else {
            let (mut v, s) = momentum_solve(prev, &cur, loads, m, mat, tau, st)?;
            lin_ok &= track(s, &mut rep);
            if st.relax < 1.0 {
                let w = T::of(st.relax);
                for (x, y) in v.data_mut().iter_mut().zip(cur.v.data()) {
                    *x = w * *x + (T::one() - w) * *y;
                }
                fill_slip(&mut v, &cur.s, loads, m, &g)?;
            }
            v
        };

        let (y, s) = strain_update(prev, &cur, &v, m, tau, st)?;
        lin_ok &= track(s, &mut rep);
        let fr = flow_rule_solve(&y, &cur, prev, &v, m, mat, tau, st)?;
        rep.linear_iterations += fr.linear_iterations;
        rep.inner_sweeps = rep.inner_sweeps.max(fr.sweeps);
        lin_ok &= fr.converged;

        let mut ee = y;
        ee.axpy(-T::one(), &fr.ep);
        let (chi, s) = diffusion_solve(&ee, &cur.chi, prev, &v, loads, mat, tau, st)?;
        lin_ok &= track(s, &mut rep);

        cur.v = v;
        cur.ee = ee;
        cur.ep = fr.ep;
        cur.alpha = fr.alpha;
        cur.chi = chi;
        cur.refresh(m, mat)?;
        if !cur.all_finite() {
            return Err(StepError::NonFinite { t: cur.t.to64() });
        }
        last = residual_norms(&cur, prev, &inp)?;
        rep.residuals = last;
        if last.combined <= st.picard_tol {
            return Ok(Attempt::Done(cur, rep));
        }
        lin_failures = if lin_ok { 0 } else { lin_failures + 1 };
        if lin_failures >= 3 {
            break;
        }
    }
    Ok(Attempt::Stalled(last))
}

fn fill_slip<T: Real>(v: &mut Field<T>, s: &Field<T>, loads: &LoadSample<T>, m: &Moduli<T>, g: &Grid<T>) -> Result<()> {
    let spec = BcSpec::NormalZeroSlip { gamma: m.gamma, kv: m.kv, traction: &loads.traction, stress: Some(s) };
    apply_boundary(v, &spec, g)
}

/// Linearised momentum solve around the iterate `cur`: the stress enters as
/// `S^m − S_str^m + τC:(E(v) − E(v^m))`, the advecting velocity is `v^m`.
/// Returns the new velocity with slip ghosts.
pub fn momentum_solve<T: Real>(
    prev: &State<T>,
    cur: &State<T>,
    loads: &LoadSample<T>,
    m: &Moduli<T>,
    mat: &Material<T>,
    tau: T,
    st: &SolverSettings,
) -> Result<(Field<T>, LinStats)> {
    let g = &cur.grid;
    let dim = g.dim();
    let d = g.d();
    let ms = dim.sym_len();
    let mut adv = cur.v.clone();
    fill_slip(&mut adv, &cur.s, loads, m, g)?;
    let e_m = sym_of_grad(&grad(&adv, g), g);
    let mut tangent = Field::zeros(g, ms * ms);
    let mut base = Field::zeros(g, d * d);
    g.for_interior(|c| {
        let c_el = elastic_tangent(&cur.ee.sym_at(dim, c), &cur.alpha_at(c), cur.chi.at(0, c), &mat.biot);
        let mut ds = [T::zero(); 3];
        for r in 0..ms {
            for q in 0..ms {
                let x = tau * c_el[r * ms + q];
                tangent.set(r * ms + q, c, x);
                ds[r] += x * e_m.at(q, c);
            }
        }
        for i in 0..d {
            for j in 0..d {
                let s = dim.sym_index(i, j);
                base.set(i * d + j, c, cur.s.at(s, c) - cur.s_str.at(i * d + j, c) - ds[s]);
            }
        }
    });
    let op = MomentumOperator {
        grid: g,
        m,
        tau,
        mode: st.advection,
        v_prev: &prev.v,
        adv: &adv,
        base: &base,
        tangent: &tangent,
        s_wall: &cur.s,
        loads,
    };
    let mut v = cur.v.clone();
    let stats = solve_affine(g, &mut v, &op.diag(), T::of(st.lin_tol), st.lin_max, |p| op.residual(p));
    op.fill_velocity(&mut v)?;
    Ok((v, stats))
}

/// Total strain `Y = E_e + E_p` from `(1/τ + v·∇)Y = Y_prev/τ + E(v) + k_e ΔS^m`;
/// the elastic part follows as `Y − E_p` once the flow rule is solved.
pub fn strain_update<T: Real>(
    prev: &State<T>,
    cur: &State<T>,
    v: &Field<T>,
    m: &Moduli<T>,
    tau: T,
    st: &SolverSettings,
) -> Result<(Field<T>, LinStats)> {
    let g = &cur.grid;
    let ms = g.dim().sym_len();
    let e_v = sym_of_grad(&grad(v, g), g);
    let lap_s = if m.ke > T::zero() { Some(neumann_laplacian(&cur.s, g)?) } else { None };
    let inv = T::one() / tau;
    let mut rhs = Field::sym(g);
    for k in 0..ms {
        g.for_interior(|c| {
            let mut x = (prev.ee.at(k, c) + prev.ep.at(k, c)) * inv + e_v.at(k, c);
            if let Some(l) = &lap_s {
                x += m.ke * l.at(k, c);
            }
            rhs.set(k, c, x);
        });
    }
    let mut y = cur.ee.clone();
    y.axpy(T::one(), &cur.ep);
    let diag = transport_diag(v, tau, g, ms, st.advection);
    let stats = solve_affine(g, &mut y, &diag, T::of(st.lin_tol), st.lin_max, |p| {
        let mut r = transport(p, v, tau, g, st.advection).expect("layout");
        r.axpy(-T::one(), &rhs);
        r
    });
    apply_boundary(&mut y, &BcSpec::HomNeumann, g)?;
    Ok((y, stats))
}

/// Result of [`flow_rule_solve`].
pub struct FlowRuleOutcome<T> {
    pub ep: Field<T>,
    pub alpha: Field<T>,
    pub sweeps: usize,
    pub linear_iterations: usize,
    pub converged: bool,
}

fn max_abs_diff<T: Real>(a: &Field<T>, b: &Field<T>, g: &Grid<T>) -> f64 {
    let mut s = 0.0f64;
    for k in 0..a.ncomp() {
        g.for_interior(|c| s = s.max((a.at(k, c) - b.at(k, c)).to64().abs()));
    }
    s
}

/// Both flow rules for fixed total strain `y`, velocity and water content:
/// alternating semismooth Newton sweeps on
/// `(X − X_prev)/τ + (v·∇)X = Prox(driving(X))` for `X = E_p` and `X = α`,
/// each sweep solving the linearised transport equation implicitly.
#[allow(clippy::too_many_arguments)]
pub fn flow_rule_solve<T: Real>(
    y: &Field<T>,
    cur: &State<T>,
    prev: &State<T>,
    v: &Field<T>,
    m: &Moduli<T>,
    mat: &Material<T>,
    tau: T,
    st: &SolverSettings,
) -> Result<FlowRuleOutcome<T>> {
    let g = &cur.grid;
    let dim = g.dim();
    let ms = dim.sym_len();
    let ell = cur.ell();
    let inv = T::one() / tau;
    let sqrt_tau = tau.sqrt();
    let lw = laplacian_weight(g);
    let adv_diag = transport_diag(v, tau, g, 1, st.advection);
    let tol = T::of(st.lin_tol);
    let mut ep = cur.ep.clone();
    let mut alpha = cur.alpha.clone();
    let mut out = FlowRuleOutcome { ep: ep.clone(), alpha: alpha.clone(), sweeps: 0, linear_iterations: 0, converged: true };
    let thresholds = |c: usize| {
        let a_prev = alpha_at(&prev.alpha, c);
        let chi_prev = prev.chi.at(0, c);
        (mat.diss.sigma_y.eval(a_prev[0], chi_prev), mat.diss.a_y.eval(a_prev[0], chi_prev), a_prev, chi_prev)
    };
    let inner_tol = 0.1 * st.picard_tol;

    for sweep in 1..=st.inner_max {
        out.sweeps = sweep;
        // inelastic strain
        let k_ep = ep.clone();
        let lap_k = neumann_laplacian(&k_ep, g)?;
        let mut jac = Field::zeros(g, ms * ms);
        let mut cten = Field::zeros(g, ms * ms);
        let mut rate = Field::sym(g);
        let mut diag = Vec::with_capacity(ms * g.interior_count());
        let mut dvals = vec![Vec::with_capacity(g.interior_count()); ms];
        let mut idx = 0;
        g.for_interior(|c| {
            let (sigma, _, a_prev, chi_prev) = thresholds(c);
            let e = y.sym_at(dim, c) - k_ep.sym_at(dim, c);
            let a = alpha_at(&alpha, c);
            let chi = cur.chi.at(0, c);
            let mut drv = stress(&e, &a, chi, &mat.biot);
            for (k, x) in drv.packed_mut().iter_mut().enumerate() {
                *x += m.kp * lap_k.at(k, c);
            }
            let j = prox_jacobian_p(&drv, sigma, mat.diss.eta_p);
            let ct = elastic_tangent(&e, &a, chi, &mat.biot);
            let pr = prox_rates(&a_prev, chi_prev, &drv, &InternalVec::zero(ell).expect("ell"), &mat.diss);
            for r in 0..ms {
                rate.set(r, c, pr.rate_p.packed()[r]);
                for q in 0..ms {
                    jac.set(r * ms + q, c, j[r * ms + q]);
                    cten.set(r * ms + q, c, ct[r * ms + q]);
                }
            }
            for r in 0..ms {
                let mut jc = T::zero();
                for q in 0..ms {
                    jc += j[r * ms + q] * ct[q * ms + r];
                }
                dvals[r].push(adv_diag[idx] + j[r * ms + r] * m.kp * lw + jc);
            }
            idx += 1;
        });
        for dv in dvals {
            diag.extend(dv);
        }
        let mut next_ep = ep.clone();
        let s = solve_affine(g, &mut next_ep, &diag, tol, st.lin_max, |x| {
            let mut r = transport(x, v, tau, g, st.advection).expect("layout");
            let lap_x = neumann_laplacian(x, g).expect("layout");
            g.for_interior(|c| {
                let mut lin = [T::zero(); 3];
                for q in 0..ms {
                    let mut cdx = T::zero();
                    for p in 0..ms {
                        cdx += cten.at(q * ms + p, c) * (x.at(p, c) - k_ep.at(p, c));
                    }
                    lin[q] = m.kp * (lap_x.at(q, c) - lap_k.at(q, c)) - cdx;
                }
                for rr in 0..ms {
                    let mut jl = T::zero();
                    for q in 0..ms {
                        jl += jac.at(rr * ms + q, c) * lin[q];
                    }
                    let cur_r = r.at(rr, c);
                    r.set(rr, c, cur_r - prev.ep.at(rr, c) * inv - jl - rate.at(rr, c));
                }
            });
            r
        });
        out.linear_iterations += s.iterations;
        out.converged &= s.converged;
        apply_boundary(&mut next_ep, &BcSpec::HomNeumann, g)?;
        let inc_p = max_abs_diff(&next_ep, &ep, g);
        let scale_p = next_ep.max_abs(g).to64();
        ep = next_ep;

        // internal variables
        let k_al = alpha.clone();
        let lap_k = neumann_laplacian(&k_al, g)?;
        let mut jac = Field::zeros(g, ell * ell);
        let mut coef = Field::zeros(g, ell);
        let mut rate = Field::zeros(g, ell);
        let mut dvals = vec![Vec::with_capacity(g.interior_count()); ell];
        let mut idx = 0;
        g.for_interior(|c| {
            let (_, ay, a_prev, chi_prev) = thresholds(c);
            let e: SymTensor<T> = y.sym_at(dim, c) - ep.sym_at(dim, c);
            let (aa, bb) = dphi_dalpha_affine(&e, ell, &mat.biot);
            let mut drv = InternalVec::zero(ell).expect("ell");
            for k in 0..ell {
                let a = k_al.at(k, c);
                drv[k] = m.ka * lap_k.at(k, c) - (aa[k] * a + bb[k]) - (a - prev.alpha.at(k, c)) / sqrt_tau;
                coef.set(k, c, aa[k] + T::one() / sqrt_tau);
            }
            let j = prox_jacobian_alpha(&drv, ay, mat.diss.eta_alpha);
            let pr = prox_rates(&a_prev, chi_prev, &SymTensor::zero(dim), &drv, &mat.diss);
            for r in 0..ell {
                rate.set(r, c, pr.rate_alpha[r]);
                for q in 0..ell {
                    jac.set(r * ell + q, c, j[r * ell + q]);
                }
                dvals[r].push(adv_diag[idx] + j[r * ell + r] * (m.ka * lw + aa[r] + T::one() / sqrt_tau));
            }
            idx += 1;
        });
        let diag: Vec<T> = dvals.into_iter().flatten().collect();
        let mut next_al = alpha.clone();
        let s = solve_affine(g, &mut next_al, &diag, tol, st.lin_max, |x| {
            let mut r = transport(x, v, tau, g, st.advection).expect("layout");
            let lap_x = neumann_laplacian(x, g).expect("layout");
            g.for_interior(|c| {
                let mut lin = [T::zero(); 4];
                for q in 0..ell {
                    lin[q] = m.ka * (lap_x.at(q, c) - lap_k.at(q, c)) - coef.at(q, c) * (x.at(q, c) - k_al.at(q, c));
                }
                for rr in 0..ell {
                    let mut jl = T::zero();
                    for q in 0..ell {
                        jl += jac.at(rr * ell + q, c) * lin[q];
                    }
                    let cur_r = r.at(rr, c);
                    r.set(rr, c, cur_r - prev.alpha.at(rr, c) * inv - jl - rate.at(rr, c));
                }
            });
            r
        });
        out.linear_iterations += s.iterations;
        out.converged &= s.converged;
        apply_boundary(&mut next_al, &BcSpec::HomNeumann, g)?;
        let inc_a = max_abs_diff(&next_al, &alpha, g);
        let scale_a = next_al.max_abs(g).to64();
        alpha = next_al;

        if inc_p <= inner_tol * scale_p.max(f64::MIN_POSITIVE) && inc_a <= inner_tol * scale_a.max(f64::MIN_POSITIVE) {
            break;
        }
    }
    out.ep = ep;
    out.alpha = alpha;
    Ok(out)
}

/// Implicit water transport with `μ = M_b(χ − χ_eq − β tr E_e)` substituted
/// and the mobility frozen at the previous step. A final constant shift
/// removes the mean residual so the discrete water balance closes exactly.
#[allow(clippy::too_many_arguments)]
pub fn diffusion_solve<T: Real>(
    ee: &Field<T>,
    chi0: &Field<T>,
    prev: &State<T>,
    v: &Field<T>,
    loads: &LoadSample<T>,
    mat: &Material<T>,
    tau: T,
    st: &SolverSettings,
) -> Result<(Field<T>, LinStats)> {
    let g = &prev.grid;
    let dim = g.dim();
    let p = &mat.biot;
    let mut mob = Field::scalar(g);
    let mut base = Field::scalar(g);
    g.for_interior(|c| {
        mob.set(0, c, mobility(&prev.alpha_at(c), prev.chi.at(0, c), &mat.mobility));
        base.set(0, c, -p.m_biot * (p.chi_eq + p.beta * ee.sym_at(dim, c).trace()));
    });
    let inv = T::one() / tau;
    let residual = |x: &Field<T>| {
        let mut r = transport(x, v, tau, g, st.advection).expect("layout");
        let mut mu = Field::scalar(g);
        g.for_interior(|c| mu.set(0, c, p.m_biot * x.at(0, c) + base.at(0, c)));
        apply_boundary(&mut mu, &BcSpec::FluxNeumann { flux: &loads.flux, mobility: &mob }, g).expect("layout");
        let dq = crate::field::div(&water_flux(&mu, &mob, &loads.flux, g), g);
        g.for_interior(|c| {
            let cur = r.at(0, c);
            r.set(0, c, cur - prev.chi.at(0, c) * inv - dq.at(0, c));
        });
        r
    };
    let lw = laplacian_weight(g);
    let mut diag = transport_diag(v, tau, g, 1, st.advection);
    let mut i = 0;
    g.for_interior(|c| {
        diag[i] += mob.at(0, c) * p.m_biot * lw;
        i += 1;
    });
    let mut chi = chi0.clone();
    let stats = solve_affine(g, &mut chi, &diag, T::of(st.lin_tol), st.lin_max, residual);
    let r = residual(&chi);
    let mut sum = T::zero();
    g.for_interior(|c| sum += r.at(0, c));
    let shift = tau * sum / T::count(g.interior_count());
    if shift != T::zero() {
        g.for_interior(|c| {
            let x = chi.at(0, c);
            chi.set(0, c, x - shift);
        });
    }
    apply_boundary(&mut chi, &BcSpec::HomNeumann, g)?;
    Ok((chi, stats))
}
