//! Residuals of the five discrete equations, evaluated directly from two
//! consecutive states without touching the solver path.

use serde::Serialize;

use crate::error::Result;
use crate::field::{
    apply_boundary, convective_derivative, div, grad, laplacian, sym_of_grad, Advection, BcSpec, Field, Grid,
};
use crate::material::{dphi_dalpha, mobility, prox_rates, stress, Material, Moduli};
use crate::scalar::Real;
use crate::tensor::{InternalVec, SymTensor};

use super::ops::{fill_stress_ghosts, skew_advection, upwind_dissipation, water_flux, LoadSample};
use super::state::{alpha_at, State};

/// Discrete L² residual of each equation, relative to the sum of the norms
/// of its terms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct ResidualRecord {
    pub momentum: f64,
    pub strain: f64,
    pub flow_p: f64,
    pub flow_alpha: f64,
    pub diffusion: f64,
    /// Max over the equations that were solved.
    pub combined: f64,
    /// Largest pointwise prox certificate of the flow-rule rates.
    pub certificate: f64,
}

fn l2<T: Real>(f: &Field<T>, grid: &Grid<T>) -> f64 {
    let mut s = 0.0;
    for k in 0..f.ncomp() {
        let src = f.comp(k);
        grid.for_interior(|c| s += src[c].to64() * src[c].to64());
    }
    (s * grid.cell_volume().to64()).sqrt()
}

fn scaled<T: Real>(f: &Field<T>, a: T, grid: &Grid<T>) -> f64 {
    l2(f, grid) * a.to64().abs()
}

fn rel(res: f64, scale: f64) -> f64 {
    if res == 0.0 {
        0.0
    } else if scale > 0.0 {
        res / scale
    } else {
        f64::INFINITY
    }
}

/// Everything [`residual_norms`] needs beyond the two states.
pub struct ResidualInput<'a, T> {
    pub loads: &'a LoadSample<T>,
    pub m: &'a Moduli<T>,
    pub mat: &'a Material<T>,
    pub tau: T,
    pub mode: Advection,
    /// Skip the momentum equation (velocity held fixed).
    pub frozen_velocity: bool,
}

/// Residuals of the momentum, strain, two flow-rule and diffusion equations at `next`.
pub fn residual_norms<T: Real>(next: &State<T>, prev: &State<T>, inp: &ResidualInput<'_, T>) -> Result<ResidualRecord> {
    let g = &next.grid;
    let dim = g.dim();
    let d = g.d();
    let ms = dim.sym_len();
    let (m, mat, tau, mode) = (inp.m, inp.mat, inp.tau, inp.mode);
    let inv = T::one() / tau;

    let mut v = next.v.clone();
    let slip = BcSpec::NormalZeroSlip { gamma: m.gamma, kv: m.kv, traction: &inp.loads.traction, stress: Some(&next.s) };
    apply_boundary(&mut v, &slip, g)?;
    let e_v = sym_of_grad(&grad(&v, g), g);

    // momentum
    let mut r_mom = 0.0;
    let mut s_mom = 0.0;
    if !inp.frozen_velocity {
        let mut t = Field::zeros(g, d * d);
        g.for_interior(|c| {
            for i in 0..d {
                for j in 0..d {
                    let s = dim.sym_index(i, j);
                    let val = next.s.at(s, c) - next.s_str.at(i * d + j, c) + m.kv * e_v.at(s, c);
                    t.set(i * d + j, c, val);
                }
            }
        });
        fill_stress_ghosts(g, &mut t, &v, m.gamma, &inp.loads.traction);
        let dt = div(&t, g);
        let sk = skew_advection(&v, &v, g);
        let up = (mode == Advection::Upwind).then(|| upwind_dissipation(&v, &v, m.rho, g));
        let mut r = Field::vector(g);
        for k in 0..d {
            g.for_interior(|c| {
                let mut x = m.rho * (v.at(k, c) - prev.v.at(k, c)) * inv + m.rho * sk.at(k, c) - dt.at(k, c)
                    - inp.loads.f.at(k, c);
                if let Some(u) = &up {
                    x += u.at(k, c);
                }
                r.set(k, c, x);
            });
        }
        r_mom = l2(&r, g);
        s_mom = scaled(&v, m.rho * inv, g)
            + scaled(&prev.v, m.rho * inv, g)
            + scaled(&sk, m.rho, g)
            + l2(&dt, g)
            + l2(&inp.loads.f, g)
            + up.as_ref().map_or(0.0, |u| l2(u, g));
    }

    // strain split
    let mut ee = next.ee.clone();
    let mut ep = next.ep.clone();
    let mut al = next.alpha.clone();
    let mut chi = next.chi.clone();
    for f in [&mut ee, &mut ep, &mut al, &mut chi] {
        apply_boundary(f, &BcSpec::HomNeumann, g)?;
    }
    let mtd_ee = convective_derivative(&ee, &prev.ee, &v, tau, g, mode)?;
    let mtd_ep = convective_derivative(&ep, &prev.ep, &v, tau, g, mode)?;
    let mtd_al = convective_derivative(&al, &prev.alpha, &v, tau, g, mode)?;
    let mut s = Field::sym(g);
    g.for_interior(|c| s.set_sym(c, &stress(&ee.sym_at(dim, c), &alpha_at(&al, c), chi.at(0, c), &mat.biot)));
    apply_boundary(&mut s, &BcSpec::HomNeumann, g)?;
    let lap_s = laplacian(&s, g);
    let mut r = Field::sym(g);
    for k in 0..ms {
        g.for_interior(|c| r.set(k, c, mtd_ee.at(k, c) + mtd_ep.at(k, c) - e_v.at(k, c) - m.ke * lap_s.at(k, c)));
    }
    let r_str = l2(&r, g);
    let s_str = l2(&mtd_ee, g) + l2(&mtd_ep, g) + l2(&e_v, g) + scaled(&lap_s, m.ke, g) + scaled(&ee, inv, g);

    // flow rules
    let lap_p = laplacian(&ep, g);
    let lap_a = laplacian(&al, g);
    let sqrt_tau = tau.sqrt();
    let ell = next.ell();
    let mut rp = Field::sym(g);
    let mut ra = Field::zeros(g, ell);
    let mut drv_p = Field::sym(g);
    let mut drv_a = Field::zeros(g, ell);
    let mut cert = 0.0f64;
    g.for_interior(|c| {
        let a = alpha_at(&al, c);
        let e = ee.sym_at(dim, c);
        let mut dp = s.sym_at(dim, c);
        for (k, x) in dp.packed_mut().iter_mut().enumerate() {
            *x += m.kp * lap_p.at(k, c);
        }
        let dphi = dphi_dalpha(&e, &a, chi.at(0, c), &mat.biot);
        let mut da = InternalVec::zero(ell).expect("valid ell");
        for k in 0..ell {
            da[k] = m.ka * lap_a.at(k, c) - dphi[k] - (a[k] - prev.alpha.at(k, c)) / sqrt_tau;
        }
        let pr = prox_rates(&alpha_at(&prev.alpha, c), prev.chi.at(0, c), &dp, &da, &mat.diss);
        cert = cert.max(pr.certificate.to64());
        for k in 0..ms {
            rp.set(k, c, mtd_ep.at(k, c) - pr.rate_p.packed()[k]);
            drv_p.set(k, c, dp.packed()[k]);
        }
        for k in 0..ell {
            ra.set(k, c, mtd_al.at(k, c) - pr.rate_alpha[k]);
            drv_a.set(k, c, da[k]);
        }
    });
    let r_fp = l2(&rp, g);
    let s_fp = scaled(&ep, inv, g) + scaled(&prev.ep, inv, g) + l2(&mtd_ep, g) + scaled(&drv_p, T::one() / mat.diss.eta_p, g);
    let r_fa = l2(&ra, g);
    let s_fa =
        scaled(&al, inv, g) + scaled(&prev.alpha, inv, g) + l2(&mtd_al, g) + scaled(&drv_a, T::one() / mat.diss.eta_alpha, g);

    // diffusion
    let mut mu = Field::scalar(g);
    let mut mob = Field::scalar(g);
    g.for_interior(|c| {
        let e: SymTensor<T> = ee.sym_at(dim, c);
        mu.set(0, c, mat.biot.m_biot * (chi.at(0, c) - mat.biot.chi_eq - mat.biot.beta * e.trace()));
        mob.set(0, c, mobility(&alpha_at(&prev.alpha, c), prev.chi.at(0, c), &mat.mobility));
    });
    apply_boundary(&mut mu, &BcSpec::FluxNeumann { flux: &inp.loads.flux, mobility: &mob }, g)?;
    let q = water_flux(&mu, &mob, &inp.loads.flux, g);
    let dq = div(&q, g);
    let mtd_chi = convective_derivative(&chi, &prev.chi, &v, tau, g, mode)?;
    let mut r = Field::scalar(g);
    g.for_interior(|c| r.set(0, c, mtd_chi.at(0, c) - dq.at(0, c)));
    let r_dif = l2(&r, g);
    let s_dif = scaled(&chi, inv, g) + scaled(&prev.chi, inv, g) + l2(&mtd_chi, g) + l2(&dq, g);

    let mut rec = ResidualRecord {
        momentum: rel(r_mom, s_mom),
        strain: rel(r_str, s_str),
        flow_p: rel(r_fp, s_fp),
        flow_alpha: rel(r_fa, s_fa),
        diffusion: rel(r_dif, s_dif),
        combined: 0.0,
        certificate: cert,
    };
    rec.combined = [rec.momentum, rec.strain, rec.flow_p, rec.flow_alpha, rec.diffusion].into_iter().fold(0.0, f64::max);
    Ok(rec)
}
