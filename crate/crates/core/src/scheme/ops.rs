//! Discrete building blocks shared by the solver and the residual check.

use crate::error::Result;
use crate::field::{
    advect, apply_boundary, div, fill_flux_ghosts, grad, laplacian, sym_of_grad, Advection, BcSpec, Field, Grid,
};
use crate::linsolve::{bicgstab, LinStats};
use crate::material::{free_energy, Material, Moduli};
use crate::preset::{step_average, Loads};
use crate::scalar::Real;
use crate::tensor::{boxtimes, GradBlock};

use super::state::alpha_at;

/// Per-point gradient block of component `k·d + axis` layout.
fn block_at<T: Real>(g: &Field<T>, m: usize, d: usize, c: usize) -> Vec<[T; 2]> {
    (0..m)
        .map(|k| {
            let mut v = [T::zero(); 2];
            for (a, x) in v.iter_mut().enumerate().take(d) {
                *x = g.at(k * d + a, c);
            }
            v
        })
        .collect()
}

/// `k_p ∇E_p⊠∇E_p + k_a ∇α⊠∇α − (φ + k_p/2|∇E_p|² + k_a/2|∇α|²) I`, full
/// `d×d` row-major. Ghosts of `ep` and `alpha` must be filled.
pub fn structural_stress<T: Real>(
    ep: &Field<T>,
    alpha: &Field<T>,
    ee: &Field<T>,
    chi: &Field<T>,
    m: &Moduli<T>,
    mat: &Material<T>,
    grid: &Grid<T>,
) -> Field<T> {
    let dim = grid.dim();
    let d = grid.d();
    let gp = grad(ep, grid);
    let ga = grad(alpha, grid);
    let mut out = Field::zeros(grid, d * d);
    grid.for_interior(|c| {
        let bp = GradBlock::sym_tensor(dim, &block_at(&gp, dim.sym_len(), d, c)).expect("packed tensor");
        let ba = GradBlock::plain(dim, &block_at(&ga, alpha.ncomp(), d, c)).expect("internal block");
        let kp = boxtimes(&bp, &bp).expect("same block");
        let ka = boxtimes(&ba, &ba).expect("same block");
        let phi = free_energy(&ee.sym_at(dim, c), &alpha_at(alpha, c), chi.at(0, c), &mat.biot);
        let p = phi + m.kp * T::half() * bp.norm_sq() + m.ka * T::half() * ba.norm_sq();
        for i in 0..d {
            for j in 0..d {
                let diag = if i == j { p } else { T::zero() };
                out.set(i * d + j, c, m.kp * kp.get(i, j) + m.ka * ka.get(i, j) - diag);
            }
        }
    });
    out
}

/// Step-averaged loads on one grid.
#[derive(Clone, Debug)]
pub struct LoadSample<T> {
    /// Body force, d components.
    pub f: Field<T>,
    /// Traction per wall face (both Cartesian components).
    pub traction: Vec<[T; 2]>,
    /// Normal water flux per wall face.
    pub flux: Vec<T>,
}

impl<T: Real> LoadSample<T> {
    pub fn zero(grid: &Grid<T>) -> Self {
        let nf = grid.faces().len();
        Self { f: Field::vector(grid), traction: vec![[T::zero(); 2]; nf], flux: vec![T::zero(); nf] }
    }

    /// Averages of `f`, `g`, `h` over `[t0, t0 + τ]`.
    pub fn average(loads: &Loads, grid: &Grid<T>, t0: T, tau: T) -> Self {
        let mut s = Self::zero(grid);
        if loads.is_zero() {
            return s;
        }
        let (a, b) = (t0.to64(), (t0 + tau).to64());
        let len = [grid.length(0).to64(), if grid.d() == 2 { grid.length(1).to64() } else { 1.0 }];
        let d = grid.d();
        if !loads.f.is_empty() {
            grid.for_interior(|c| {
                let x = grid.center(c);
                let x = [x[0].to64(), x[1].to64()];
                let v = step_average(a, b, |t| loads.body_force(t, x, len));
                for k in 0..d {
                    s.f.set(k, c, T::of(v[k]));
                }
            });
        }
        for (fi, face) in grid.faces().iter().enumerate() {
            let x = [face.center[0].to64(), face.center[1].to64()];
            if !loads.g.is_empty() {
                let v = step_average(a, b, |t| loads.traction(t, x, len));
                s.traction[fi] = [T::of(v[0]), T::of(v[1])];
            }
            if !loads.h.is_empty() {
                s.flux[fi] = T::of(step_average(a, b, |t| [loads.flux(t, x, len)])[0]);
            }
        }
        s
    }
}

/// Interior values of all components, component-major.
pub fn pack<T: Real>(f: &Field<T>, grid: &Grid<T>) -> Vec<T> {
    let mut v = Vec::with_capacity(f.ncomp() * grid.interior_count());
    for k in 0..f.ncomp() {
        let src = f.comp(k);
        grid.for_interior(|c| v.push(src[c]));
    }
    v
}

/// Inverse of [`pack`]; ghosts are left stale.
pub fn unpack<T: Real>(v: &[T], f: &mut Field<T>, grid: &Grid<T>) {
    let mut i = 0;
    for k in 0..f.ncomp() {
        let dst = f.comp_mut(k);
        grid.for_interior(|c| {
            dst[c] = v[i];
            i += 1;
        });
    }
}

/// Solves the affine equation `F(x) = 0` by BiCGStab on `L p = F(p) − F(0)`,
/// starting from `x`. `residual` must fill the ghosts of its argument itself.
pub fn solve_affine<T: Real>(
    grid: &Grid<T>,
    x: &mut Field<T>,
    diag: &[T],
    tol: T,
    max_iter: usize,
    residual: impl Fn(&Field<T>) -> Field<T>,
) -> LinStats {
    let mut work = Field::zeros(grid, x.ncomp());
    let f0 = pack(&residual(&work), grid);
    let b: Vec<T> = f0.iter().map(|r| -*r).collect();
    let mut sol = pack(x, grid);
    let stats = bicgstab(
        |p, out| {
            unpack(p, &mut work, grid);
            let fp = pack(&residual(&work), grid);
            for ((o, a), z) in out.iter_mut().zip(&fp).zip(&f0) {
                *o = *a - *z;
            }
        },
        diag,
        &b,
        &mut sol,
        tol,
        max_iter,
    );
    unpack(&sol, x, grid);
    stats
}

/// Transport part `X/τ + (v·∇)X` with mirror ghosts on `X`.
pub fn transport<T: Real>(x: &Field<T>, v: &Field<T>, tau: T, grid: &Grid<T>, mode: Advection) -> Result<Field<T>> {
    let mut xx = x.clone();
    apply_boundary(&mut xx, &BcSpec::HomNeumann, grid)?;
    let mut out = advect(&xx, v, grid, mode);
    let inv = T::one() / tau;
    for k in 0..x.ncomp() {
        let (src, dst) = (xx.comp(k).to_vec(), out.comp_mut(k));
        grid.for_interior(|c| dst[c] += src[c] * inv);
    }
    Ok(out)
}

/// Jacobi diagonal of `1/τ + (v·∇)` (upwind), repeated for `ncomp` components.
pub fn transport_diag<T: Real>(v: &Field<T>, tau: T, grid: &Grid<T>, ncomp: usize, mode: Advection) -> Vec<T> {
    let d = grid.d();
    let mut one = Vec::with_capacity(grid.interior_count());
    grid.for_interior(|c| {
        let mut s = T::one() / tau;
        if mode == Advection::Upwind {
            for a in 0..d {
                s += v.at(a, c).abs() / grid.h(a);
            }
        }
        one.push(s);
    });
    let mut out = Vec::with_capacity(ncomp * one.len());
    for _ in 0..ncomp {
        out.extend_from_slice(&one);
    }
    out
}

/// Whether the neighbour of interior cell `c` in direction `dir` (±1) along
/// `axis` lies behind a wall.
#[inline]
fn behind_wall<T: Real>(grid: &Grid<T>, c: usize, axis: usize, dir: i32) -> bool {
    if grid.is_periodic(axis) {
        return false;
    }
    let (i, j) = grid.coords(c);
    let p = if axis == 0 { i } else { j };
    (dir < 0 && p == 1) || (dir > 0 && p == grid.cells(axis))
}

/// `½[(a·∇)v + div(a⊗v)]` with central stencils; `v` needs filled ghosts,
/// `a` must be tangential at walls.
pub fn skew_advection<T: Real>(v: &Field<T>, a: &Field<T>, grid: &Grid<T>) -> Field<T> {
    let d = grid.d();
    let mut out = advect(v, a, grid, Advection::Central);
    let mut flux = Field::zeros(grid, d * d);
    grid.for_interior(|c| {
        for i in 0..d {
            for j in 0..d {
                flux.set(i * d + j, c, v.at(i, c) * a.at(j, c));
            }
        }
    });
    fill_flux_ghosts(grid, &mut flux, |_, _, _| T::zero());
    let dv = div(&flux, grid);
    for k in 0..d {
        let (src, dst) = (dv.comp(k).to_vec(), out.comp_mut(k));
        grid.for_interior(|c| dst[c] = T::half() * (dst[c] + src[c]));
    }
    out
}

/// Face viscosity `½ρ|a_f|h` of the upwind momentum stabilisation; wall faces are skipped.
pub fn upwind_dissipation<T: Real>(v: &Field<T>, a: &Field<T>, rho: T, grid: &Grid<T>) -> Field<T> {
    let d = grid.d();
    let mut out = Field::zeros(grid, v.ncomp());
    for ax in 0..d {
        let off = grid.offset(ax);
        let h = grid.h(ax);
        let an = a.comp(ax);
        grid.for_interior(|c| {
            for (dir, nb) in [(-1i32, c - off), (1, c + off)] {
                if behind_wall(grid, c, ax, dir) {
                    continue;
                }
                let nu = T::half() * rho * (T::half() * (an[c] + an[nb])).abs() / h;
                for k in 0..v.ncomp() {
                    let x = nu * (v.at(k, c) - v.at(k, nb));
                    let cur = out.at(k, c);
                    out.set(k, c, cur + x);
                }
            }
        });
    }
    out
}

/// Fills the ghosts of a full `d×d` total-stress field: normal-normal mirror,
/// tangential-normal set so the face value equals `n·(g − γ w)`.
pub fn fill_stress_ghosts<T: Real>(grid: &Grid<T>, t: &mut Field<T>, v: &Field<T>, gamma: T, traction: &[[T; 2]]) {
    let faces = grid.faces().to_vec();
    fill_flux_ghosts(grid, t, |k, fi, fin| {
        let f = &faces[fi];
        if k == f.axis {
            fin
        } else {
            let w = T::half() * (v.at(k, f.inner) + v.at(k, f.ghost));
            f.sign * (traction[fi][k] - gamma * w)
        }
    });
}

/// Frozen data of one linearised momentum solve.
pub struct MomentumOperator<'a, T> {
    pub grid: &'a Grid<T>,
    pub m: &'a Moduli<T>,
    pub tau: T,
    pub mode: Advection,
    pub v_prev: &'a Field<T>,
    /// Advecting velocity (previous Picard iterate), ghosts filled.
    pub adv: &'a Field<T>,
    /// `S − S_str − τ C:E(v_m)` at cells, `d×d` row-major.
    pub base: &'a Field<T>,
    /// Packed elastic tangent scaled by τ, `m²` components.
    pub tangent: &'a Field<T>,
    /// Packed `S` used in the slip ghost rule.
    pub s_wall: &'a Field<T>,
    pub loads: &'a LoadSample<T>,
}

impl<T: Real> MomentumOperator<'_, T> {
    /// Velocity ghosts from the slip condition.
    pub fn fill_velocity(&self, v: &mut Field<T>) -> Result<()> {
        let spec = BcSpec::NormalZeroSlip {
            gamma: self.m.gamma,
            kv: self.m.kv,
            traction: &self.loads.traction,
            stress: Some(self.s_wall),
        };
        apply_boundary(v, &spec, self.grid)
    }

    /// Total stress `base + k_v E(v) + τC:E(v)` with ghosts; `v` needs ghosts.
    pub fn total_stress(&self, v: &Field<T>) -> Field<T> {
        let g = self.grid;
        let d = g.d();
        let dim = g.dim();
        let ms = dim.sym_len();
        let e = sym_of_grad(&grad(v, g), g);
        let mut t = self.base.clone();
        g.for_interior(|c| {
            let mut ds = [T::zero(); 3];
            for r in 0..ms {
                for q in 0..ms {
                    ds[r] += self.tangent.at(r * ms + q, c) * e.at(q, c);
                }
            }
            for i in 0..d {
                for j in 0..d {
                    let s = dim.sym_index(i, j);
                    let cur = t.at(i * d + j, c);
                    t.set(i * d + j, c, cur + self.m.kv * e.at(s, c) + ds[s]);
                }
            }
        });
        fill_stress_ghosts(g, &mut t, v, self.m.gamma, &self.loads.traction);
        t
    }

    /// Affine residual `ρ(v − v_prev)/τ + ρ A(v) − div T(v) − f`.
    pub fn residual(&self, v_in: &Field<T>) -> Field<T> {
        let g = self.grid;
        let d = g.d();
        let mut v = v_in.clone();
        self.fill_velocity(&mut v).expect("velocity layout");
        let t = self.total_stress(&v);
        let dt = div(&t, g);
        let sk = skew_advection(&v, self.adv, g);
        let up = match self.mode {
            Advection::Upwind => Some(upwind_dissipation(&v, self.adv, self.m.rho, g)),
            Advection::Central => None,
        };
        let rho = self.m.rho;
        let inv = T::one() / self.tau;
        let mut out = Field::vector(g);
        for k in 0..d {
            let dst = out.comp_mut(k);
            let (vv, vp, a, b, f) = (v.comp(k), self.v_prev.comp(k), sk.comp(k), dt.comp(k), self.loads.f.comp(k));
            let u = up.as_ref().map(|u| u.comp(k));
            g.for_interior(|c| {
                let mut r = rho * (vv[c] - vp[c]) * inv + rho * a[c] - b[c] - f[c];
                if let Some(u) = u {
                    r += u[c];
                }
                dst[c] = r;
            });
        }
        out
    }

    /// Approximate Jacobi diagonal.
    pub fn diag(&self) -> Vec<T> {
        let g = self.grid;
        let d = g.d();
        let ms = g.dim().sym_len();
        let mut one = Vec::with_capacity(g.interior_count());
        g.for_interior(|c| {
            let mut cmax = T::zero();
            for r in 0..ms {
                cmax = cmax.max(self.tangent.at(r * ms + r, c).abs());
            }
            let mut s = self.m.rho / self.tau;
            for a in 0..d {
                let h2 = g.h(a) * g.h(a);
                s += (self.m.kv + cmax) / (T::two() * h2);
                if self.mode == Advection::Upwind {
                    s += self.m.rho * self.adv.at(a, c).abs() / g.h(a);
                }
            }
            one.push(s);
        });
        let mut out = Vec::with_capacity(d * one.len());
        for _ in 0..d {
            out.extend_from_slice(&one);
        }
        out
    }
}

/// `laplacian` after mirror ghosts.
pub fn neumann_laplacian<T: Real>(x: &Field<T>, grid: &Grid<T>) -> Result<Field<T>> {
    let mut xx = x.clone();
    apply_boundary(&mut xx, &BcSpec::HomNeumann, grid)?;
    Ok(laplacian(&xx, grid))
}

/// Flux `M ∇μ` with the Neumann flux data in its ghosts; `mu` needs flux ghosts.
pub fn water_flux<T: Real>(mu: &Field<T>, mob: &Field<T>, flux: &[T], grid: &Grid<T>) -> Field<T> {
    let d = grid.d();
    let mut q = grad(mu, grid);
    grid.for_interior(|c| {
        let mm = mob.at(0, c);
        for a in 0..d {
            let cur = q.at(a, c);
            q.set(a, c, mm * cur);
        }
    });
    let faces = grid.faces().to_vec();
    fill_flux_ghosts(grid, &mut q, |_, fi, _| faces[fi].sign * flux[fi]);
    q
}

/// Central-difference Jacobi weight of the wide Laplacian, `Σ 1/(2h²)`.
pub fn laplacian_weight<T: Real>(grid: &Grid<T>) -> T {
    (0..grid.d()).map(|a| T::one() / (T::two() * grid.h(a) * grid.h(a))).fold(T::zero(), |s, x| s + x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::inner;
    use crate::tensor::Dim;
    use crate::material::{BiotDamageParams, DissipationParams, MobilityParams, Threshold};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mat() -> (Moduli<f64>, Material<f64>) {
        let m = Moduli { rho: 1.0, kv: 0.1, kp: 0.3, ka: 0.2, ke: 0.0, gamma: 0.0 };
        let biot = BiotDamageParams { k_bulk: 1.0, m_biot: 1.0, beta: 0.8, chi_eq: 0.2, g1: 0.5, eps_sat: 1.0, g0: 0.5, c_h: 0.1 };
        let diss = DissipationParams { sigma_y: Threshold::constant(1.0), eta_p: 1.0, a_y: Threshold::constant(1.0), eta_alpha: 1.0 };
        (m, Material { biot, diss, mobility: MobilityParams { m0: 1.0, m1: 0.0, m_min: 0.5 }, ell: 1 })
    }

    fn random(g: &Grid<f64>, m: usize, amp: f64, rng: &mut ChaCha8Rng) -> Field<f64> {
        let mut f = Field::zeros(g, m);
        for k in 0..m {
            let v: Vec<(usize, f64)> = g.interior_indices().into_iter().map(|c| (c, amp * rng.gen_range(-1.0..1.0))).collect();
            for (c, x) in v {
                f.set(k, c, x);
            }
        }
        apply_boundary(&mut f, &BcSpec::HomNeumann, g).unwrap();
        f
    }

    #[test]
    fn structural_stress_trace_is_minus_two_phi() {
        let g = Grid::<f64>::boxed(Dim::Two, 8, 1.0).unwrap();
        let (m, mt) = mat();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (ep, al, ee, chi) = (random(&g, 3, 0.1, &mut rng), random(&g, 1, 1.0, &mut rng), random(&g, 3, 0.1, &mut rng), random(&g, 1, 0.3, &mut rng));
        let s = structural_stress(&ep, &al, &ee, &chi, &m, &mt, &g);
        for c in g.interior_indices() {
            let phi = free_energy(&ee.sym_at(Dim::Two, c), &alpha_at(&al, c), chi.at(0, c), &mt.biot);
            assert!((s.at(0, c) + s.at(3, c) + 2.0 * phi).abs() < 1e-12);
            assert!((s.at(1, c) - s.at(2, c)).abs() < 1e-14);
        }
    }

    #[test]
    fn skew_advection_is_energy_neutral_periodic() {
        let g = Grid::<f64>::periodic(Dim::Two, 12, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut v = random(&g, 2, 1.0, &mut rng);
        let mut a = random(&g, 2, 1.0, &mut rng);
        apply_boundary(&mut v, &BcSpec::Periodic, &g).unwrap();
        apply_boundary(&mut a, &BcSpec::Periodic, &g).unwrap();
        let s = skew_advection(&v, &a, &g);
        assert!(inner(&s, &v, &g).abs() < 1e-13);
        let u = upwind_dissipation(&v, &a, 1.0, &g);
        assert!(inner(&u, &v, &g) >= 0.0);
    }

    #[test]
    fn affine_solver_recovers_transport() {
        let g = Grid::<f64>::boxed(Dim::Two, 10, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = random(&g, 2, 2.0, &mut rng);
        let target = random(&g, 1, 1.0, &mut rng);
        let tau = 0.05;
        let rhs = transport(&target, &v, tau, &g, Advection::Upwind).unwrap();
        let mut x = Field::scalar(&g);
        let diag = transport_diag(&v, tau, &g, 1, Advection::Upwind);
        let st = solve_affine(&g, &mut x, &diag, 1e-13, 200, |p| {
            let mut r = transport(p, &v, tau, &g, Advection::Upwind).unwrap();
            r.axpy(-1.0, &rhs);
            r
        });
        assert!(st.converged);
        for c in g.interior_indices() {
            assert!((x.at(0, c) - target.at(0, c)).abs() < 1e-10);
        }
    }
}
