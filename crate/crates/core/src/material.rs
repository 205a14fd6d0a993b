//! Biot-damage free energy, the separable dissipation potential with its
//! proximal resolvent, and the mobility.
//!
//! φ(E, α, χ) = K/2 (tr E)² + M_b/2 (β tr E − χ + χ_eq)²
//!            + G(α) s/(1 + ε s) + G₀ s + φ_h(α),  s = |dev E|²,
//! with G(α) = G₁ α₁² and φ_h(α) = c_h Σ (1 − α_i)².

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::{dev_sph_tr, InternalVec, SymTensor};

/// Tolerated excursion of α outside [0, 1] before a warning; the guard
/// factor below covers G(α) on this range.
pub const ALPHA_RANGE: (f64, f64) = (-0.05, 1.05);

/// Convexity guard safety factor (covers α₁ ≤ 1.05).
pub const GUARD_FACTOR: f64 = 1.05 * 1.05;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound = "T: Real")]
pub struct BiotDamageParams<T> {
    /// Bulk modulus K.
    pub k_bulk: T,
    /// Biot modulus M_b.
    pub m_biot: T,
    /// Biot coefficient β.
    pub beta: T,
    /// Equilibrium water content.
    pub chi_eq: T,
    /// Damage-degraded shear modulus scale G₁.
    pub g1: T,
    /// Saturation parameter ε_sat.
    pub eps_sat: T,
    /// Residual shear modulus G₀.
    pub g0: T,
    /// Healing potential scale c_h.
    pub c_h: T,
}

/// `max(0, c0 + c_alpha·α₁ + c_chi·χ)`, frozen at the previous step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound = "T: Real")]
pub struct Threshold<T> {
    pub c0: T,
    #[serde(default)]
    pub c_alpha: T,
    #[serde(default)]
    pub c_chi: T,
}

impl<T: Real> Threshold<T> {
    pub fn constant(c0: T) -> Self {
        Self { c0, c_alpha: T::zero(), c_chi: T::zero() }
    }

    #[inline]
    pub fn eval(&self, alpha1: T, chi: T) -> T {
        (self.c0 + self.c_alpha * alpha1 + self.c_chi * chi).max(T::zero())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound = "T: Real")]
pub struct DissipationParams<T> {
    pub sigma_y: Threshold<T>,
    pub eta_p: T,
    pub a_y: Threshold<T>,
    pub eta_alpha: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound = "T: Real")]
pub struct MobilityParams<T> {
    pub m0: T,
    #[serde(default)]
    pub m1: T,
    pub m_min: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound = "T: Real")]
pub struct Moduli<T> {
    /// Mass density ϱ.
    pub rho: T,
    /// Kelvin–Voigt viscosity.
    pub kv: T,
    /// Inelastic-strain gradient modulus.
    pub kp: T,
    /// Internal-variable gradient modulus.
    pub ka: T,
    /// Stress-diffusion coefficient.
    pub ke: T,
    /// Boundary drag.
    pub gamma: T,
}

/// Complete constitutive description.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Real")]
pub struct Material<T> {
    pub biot: BiotDamageParams<T>,
    pub diss: DissipationParams<T>,
    pub mobility: MobilityParams<T>,
    /// Number of internal variables ℓ.
    pub ell: usize,
}

impl<T: Real> Default for BiotDamageParams<T> {
    fn default() -> Self {
        let f = T::of;
        Self { k_bulk: f(1.0), m_biot: f(1.0), beta: f(0.5), chi_eq: f(0.3), g1: f(1.0), eps_sat: f(1.0), g0: f(0.5), c_h: f(0.05) }
    }
}

impl<T: Real> Default for Threshold<T> {
    fn default() -> Self {
        Self::constant(T::of(0.01))
    }
}

impl<T: Real> Default for DissipationParams<T> {
    fn default() -> Self {
        Self { sigma_y: Threshold::default(), eta_p: T::one(), a_y: Threshold::constant(T::of(0.002)), eta_alpha: T::one() }
    }
}

impl<T: Real> Default for MobilityParams<T> {
    fn default() -> Self {
        Self { m0: T::of(0.05), m1: T::zero(), m_min: T::of(0.01) }
    }
}

impl<T: Real> Default for Moduli<T> {
    fn default() -> Self {
        let f = T::of;
        Self { rho: f(1.0), kv: f(0.02), kp: f(1e-3), ka: f(1e-3), ke: f(1e-4), gamma: f(0.1) }
    }
}

macro_rules! cast_struct {
    ($name:ident { $($f:ident),* }) => {
        impl<T: Real> $name<T> {
            /// Converts to another scalar type.
            pub fn cast<U: Real>(&self) -> $name<U> {
                $name { $($f: U::of(self.$f.to64())),* }
            }
        }
    };
}

cast_struct!(BiotDamageParams { k_bulk, m_biot, beta, chi_eq, g1, eps_sat, g0, c_h });
cast_struct!(Threshold { c0, c_alpha, c_chi });
cast_struct!(MobilityParams { m0, m1, m_min });
cast_struct!(Moduli { rho, kv, kp, ka, ke, gamma });

impl<T: Real> DissipationParams<T> {
    pub fn cast<U: Real>(&self) -> DissipationParams<U> {
        DissipationParams {
            sigma_y: self.sigma_y.cast(),
            eta_p: U::of(self.eta_p.to64()),
            a_y: self.a_y.cast(),
            eta_alpha: U::of(self.eta_alpha.to64()),
        }
    }
}

impl<T: Real> Material<T> {
    pub fn cast<U: Real>(&self) -> Material<U> {
        Material { biot: self.biot.cast(), diss: self.diss.cast(), mobility: self.mobility.cast(), ell: self.ell }
    }
}

#[inline]
fn sat<T: Real>(eps: T, s: T) -> (T, T, T) {
    // ψ(s) = s/(1+εs) and its first two derivatives
    let q = T::one() / (T::one() + eps * s);
    (s * q, q * q, -T::two() * eps * q * q * q)
}

#[inline]
fn degraded_shear<T: Real>(alpha: &InternalVec<T>, p: &BiotDamageParams<T>) -> (T, T) {
    let a = alpha[0];
    (p.g1 * a * a, T::two() * p.g1 * a)
}

/// Free energy density φ(E, α, χ).
pub fn free_energy<T: Real>(e: &SymTensor<T>, alpha: &InternalVec<T>, chi: T, p: &BiotDamageParams<T>) -> T {
    let (dev, sph, tr) = dev_sph_tr(e);
    let d = T::count(e.dim().n());
    let s = dev.norm_sq();
    let q = p.beta * tr - chi + p.chi_eq;
    let (g, _) = degraded_shear(alpha, p);
    let (psi, _, _) = sat(p.eps_sat, s);
    let heal: T = alpha.as_slice().iter().map(|a| (T::one() - *a) * (T::one() - *a)).sum();
    d * p.k_bulk / T::two() * sph.norm_sq() + p.m_biot / T::two() * q * q + g * psi + p.g0 * s + p.c_h * heal
}

/// Stress `S = ∂_E φ`.
pub fn stress<T: Real>(e: &SymTensor<T>, alpha: &InternalVec<T>, chi: T, p: &BiotDamageParams<T>) -> SymTensor<T> {
    let (dev, _, tr) = dev_sph_tr(e);
    let s = dev.norm_sq();
    let q = p.beta * tr - chi + p.chi_eq;
    let (g, _) = degraded_shear(alpha, p);
    let (_, dpsi, _) = sat(p.eps_sat, s);
    SymTensor::diag(e.dim(), p.k_bulk * tr + p.m_biot * p.beta * q) + dev * (T::two() * (g * dpsi + p.g0))
}

/// `∂_α φ`.
pub fn dphi_dalpha<T: Real>(e: &SymTensor<T>, alpha: &InternalVec<T>, _chi: T, p: &BiotDamageParams<T>) -> InternalVec<T> {
    let (dev, _, _) = dev_sph_tr(e);
    let (psi, _, _) = sat(p.eps_sat, dev.norm_sq());
    let (_, dg) = degraded_shear(alpha, p);
    let mut out = *alpha;
    for (o, a) in out.as_mut_slice().iter_mut().zip(alpha.as_slice()) {
        *o = -T::two() * p.c_h * (T::one() - *a);
    }
    out[0] += dg * psi;
    out
}

/// `∂_α φ = A ⊙ α + b` is affine in α for fixed E; returns the diagonal `A` and offset `b`.
pub fn dphi_dalpha_affine<T: Real>(e: &SymTensor<T>, ell: usize, p: &BiotDamageParams<T>) -> ([T; 4], [T; 4]) {
    let (dev, _, _) = dev_sph_tr(e);
    let (psi, _, _) = sat(p.eps_sat, dev.norm_sq());
    let mut a = [T::zero(); 4];
    let mut b = [T::zero(); 4];
    for i in 0..ell {
        a[i] = T::two() * p.c_h;
        b[i] = -T::two() * p.c_h;
    }
    a[0] += T::two() * p.g1 * psi;
    (a, b)
}

/// Chemical potential `μ = ∂_χ φ = M_b(χ − χ_eq − β tr E)`.
pub fn chemical_potential<T: Real>(e: &SymTensor<T>, _alpha: &InternalVec<T>, chi: T, p: &BiotDamageParams<T>) -> T {
    p.m_biot * (chi - p.chi_eq - p.beta * e.trace())
}

/// Second derivative of φ in the (E, χ) block applied to `(dE, dχ)`.
pub fn hessian_action<T: Real>(
    e: &SymTensor<T>,
    alpha: &InternalVec<T>,
    _chi: T,
    p: &BiotDamageParams<T>,
    de: &SymTensor<T>,
    dchi: T,
) -> (SymTensor<T>, T) {
    let (dev, _, _) = dev_sph_tr(e);
    let (ddev, _, dtr) = dev_sph_tr(de);
    let s = dev.norm_sq();
    let (g, _) = degraded_shear(alpha, p);
    let (_, dpsi, ddpsi) = sat(p.eps_sat, s);
    let dq = p.beta * dtr - dchi;
    let ds = SymTensor::diag(e.dim(), p.k_bulk * dtr + p.m_biot * p.beta * dq)
        + ddev * (T::two() * (g * dpsi + p.g0))
        + dev * (T::of(4.0) * g * ddpsi * dev.dot(&ddev));
    (ds, -p.m_biot * dq)
}

/// Packed elastic tangent `∂S/∂E` (χ fixed) as a row-major `m×m` block.
pub fn elastic_tangent<T: Real>(e: &SymTensor<T>, alpha: &InternalVec<T>, chi: T, p: &BiotDamageParams<T>) -> [T; 9] {
    let dim = e.dim();
    let m = dim.sym_len();
    let mut c = [T::zero(); 9];
    for col in 0..m {
        let mut de = SymTensor::zero(dim);
        de.packed_mut()[col] = T::one();
        let (ds, _) = hessian_action(e, alpha, chi, p, &de, T::zero());
        for row in 0..m {
            c[row * m + col] = ds.packed()[row];
        }
    }
    c
}

/// Output of [`prox_rates`].
#[derive(Clone, Copy, Debug)]
pub struct ProxRates<T> {
    pub rate_p: SymTensor<T>,
    pub rate_alpha: InternalVec<T>,
    /// Inclusion residual relative to `max(1, |driving|)`.
    pub certificate: T,
}

#[inline]
fn shrink_factor<T: Real>(norm: T, sigma: T) -> T {
    if norm > sigma {
        T::one() - sigma / norm
    } else {
        T::zero()
    }
}

/// Pointwise resolvent of `∂ζ(α_prev, χ_prev; ·) ∋ driving`.
pub fn prox_rates<T: Real>(
    alpha_prev: &InternalVec<T>,
    chi_prev: T,
    driving_p: &SymTensor<T>,
    driving_alpha: &InternalVec<T>,
    dp: &DissipationParams<T>,
) -> ProxRates<T> {
    let sigma = dp.sigma_y.eval(alpha_prev[0], chi_prev);
    let ay = dp.a_y.eval(alpha_prev[0], chi_prev);
    let np = driving_p.norm();
    let na = driving_alpha.norm();
    let rate_p = *driving_p * (shrink_factor(np, sigma) / dp.eta_p);
    let rate_alpha = driving_alpha.scaled(shrink_factor(na, ay) / dp.eta_alpha);
    let cp = inclusion_residual_p(driving_p, &rate_p, sigma, dp.eta_p) / T::one().max(np);
    let ca = inclusion_residual_alpha(driving_alpha, &rate_alpha, ay, dp.eta_alpha) / T::one().max(na);
    ProxRates { rate_p, rate_alpha, certificate: cp.max(ca) }
}

/// `|driving − η r − σ r/|r||` if `r ≠ 0`, else `max(0, |driving| − σ)`.
pub fn inclusion_residual_p<T: Real>(driving: &SymTensor<T>, rate: &SymTensor<T>, sigma: T, eta: T) -> T {
    let nr = rate.norm();
    if nr > T::zero() {
        (*driving - *rate * eta - *rate * (sigma / nr)).norm()
    } else {
        (driving.norm() - sigma).max(T::zero())
    }
}

/// Vector analogue of [`inclusion_residual_p`].
pub fn inclusion_residual_alpha<T: Real>(driving: &InternalVec<T>, rate: &InternalVec<T>, a: T, eta: T) -> T {
    let nr = rate.norm();
    if nr > T::zero() {
        let mut r = *driving;
        for (x, y) in r.as_mut_slice().iter_mut().zip(rate.as_slice()) {
            *x -= eta * *y + a * *y / nr;
        }
        r.norm()
    } else {
        (driving.norm() - a).max(T::zero())
    }
}

/// Derivative of the tensor shrinkage with respect to the packed driving
/// force, row-major `m×m`.
pub fn prox_jacobian_p<T: Real>(driving: &SymTensor<T>, sigma: T, eta: T) -> [T; 9] {
    let dim = driving.dim();
    let m = dim.sym_len();
    let mut j = [T::zero(); 9];
    let n = driving.norm();
    if n <= sigma || n == T::zero() {
        if sigma == T::zero() {
            for c in 0..m {
                j[c * m + c] = T::one() / eta;
            }
        }
        return j;
    }
    let f = T::one() - sigma / n;
    let r = driving.packed();
    let k = sigma / (n * n * n);
    for c in 0..m {
        for d in 0..m {
            let w = T::of(dim.sym_weight(d));
            j[c * m + d] = (if c == d { f } else { T::zero() } + k * r[c] * w * r[d]) / eta;
        }
    }
    j
}

/// Derivative of the vector shrinkage, row-major `ℓ×ℓ`.
pub fn prox_jacobian_alpha<T: Real>(driving: &InternalVec<T>, a: T, eta: T) -> [T; 16] {
    let l = driving.len();
    let mut j = [T::zero(); 16];
    let n = driving.norm();
    if n <= a || n == T::zero() {
        if a == T::zero() {
            for c in 0..l {
                j[c * l + c] = T::one() / eta;
            }
        }
        return j;
    }
    let f = T::one() - a / n;
    let k = a / (n * n * n);
    for c in 0..l {
        for d in 0..l {
            j[c * l + d] = (if c == d { f } else { T::zero() } + k * driving[c] * driving[d]) / eta;
        }
    }
    j
}

/// ζ(α_prev, χ_prev; r_P, r_α).
pub fn dissipation_potential<T: Real>(
    alpha: &InternalVec<T>,
    chi: T,
    rate_p: &SymTensor<T>,
    rate_alpha: &InternalVec<T>,
    dp: &DissipationParams<T>,
) -> T {
    let sigma = dp.sigma_y.eval(alpha[0], chi);
    let ay = dp.a_y.eval(alpha[0], chi);
    let (np, na) = (rate_p.norm(), rate_alpha.norm());
    sigma * np + dp.eta_p / T::two() * np * np + ay * na + dp.eta_alpha / T::two() * na * na
}

/// ξ = σ_y|r_P| + η_p|r_P|² + a_y|r_α| + η_α|r_α|².
pub fn dissipation_rate_xi<T: Real>(
    alpha: &InternalVec<T>,
    chi: T,
    rate_p: &SymTensor<T>,
    rate_alpha: &InternalVec<T>,
    dp: &DissipationParams<T>,
) -> T {
    let sigma = dp.sigma_y.eval(alpha[0], chi);
    let ay = dp.a_y.eval(alpha[0], chi);
    let (np, na) = (rate_p.norm(), rate_alpha.norm());
    sigma * np + dp.eta_p * np * np + ay * na + dp.eta_alpha * na * na
}

/// Isotropic mobility `max(m₀ + m₁α₁, m_min)`.
pub fn mobility<T: Real>(alpha: &InternalVec<T>, _chi: T, mp: &MobilityParams<T>) -> T {
    (mp.m0 + mp.m1 * alpha[0]).max(mp.m_min)
}

/// Largest `c` with `∂²_X [ψ(|X|²)] ≥ −2c` over all deviators, found by a scan over `u = ε s`.
pub fn convexity_constant(eps_sat: f64) -> f64 {
    if eps_sat <= 0.0 {
        return 0.0;
    }
    // smallest eigenvalue of the saturating Hessian divided by 2G, as a function of u
    let lam = |u: f64| (1.0 - 3.0 * u) / (1.0 + u).powi(3);
    let n = 4000;
    let (lo, hi) = (-8.0f64, 8.0f64);
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..=n {
        let u = 10f64.powf(lo + (hi - lo) * i as f64 / n as f64);
        let l = lam(u);
        if l < best.0 {
            best = (l, u);
        }
    }
    // golden-section refinement around the coarse minimiser
    let (mut a, mut b) = (best.1 / 1.1, best.1 * 1.1);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if lam(c) < lam(d) {
            b = d;
        } else {
            a = c;
        }
    }
    (-lam(0.5 * (a + b))).max(0.0)
}

/// Lower bound G₀ must exceed: `GUARD_FACTOR · c(ε_sat) · G₁`.
pub fn convexity_guard_bound(p: &BiotDamageParams<f64>) -> f64 {
    GUARD_FACTOR * convexity_constant(p.eps_sat) * p.g1
}

/// Full symmetric Hessian of φ in the orthonormal coordinates
/// `(packed E with off-diagonals scaled by √2, χ)`, evaluated analytically.
pub fn e_chi_hessian<T: Real>(e: &SymTensor<T>, alpha: &InternalVec<T>, chi: T, p: &BiotDamageParams<T>) -> nalgebra::DMatrix<f64> {
    let dim = e.dim();
    let m = dim.sym_len();
    let basis = |c: usize| -> (SymTensor<T>, T) {
        if c == m {
            return (SymTensor::zero(dim), T::one());
        }
        let mut de = SymTensor::zero(dim);
        de.packed_mut()[c] = T::one() / T::of(dim.sym_weight(c)).sqrt();
        (de, T::zero())
    };
    let mut h = nalgebra::DMatrix::zeros(m + 1, m + 1);
    for i in 0..=m {
        let (dei, dci) = basis(i);
        let (ds, dmu) = hessian_action(e, alpha, chi, p, &dei, dci);
        for j in 0..=m {
            let (dej, dcj) = basis(j);
            h[(j, i)] = (ds.dot(&dej) + dmu * dcj).to64();
        }
    }
    h
}

/// Smallest eigenvalue of the (E, χ) Hessian block.
pub fn min_e_chi_eigenvalue<T: Real>(e: &SymTensor<T>, alpha: &InternalVec<T>, chi: T, p: &BiotDamageParams<T>) -> f64 {
    let h = e_chi_hessian(e, alpha, chi, p);
    let h = (&h + h.transpose()) * 0.5;
    h.symmetric_eigenvalues().min()
}

/// Smallest eigenvalue of the Hessian of `φ + |α|²/(2ε_c)` in all of
/// `(E, α, χ)`, from central differences of the analytic gradients.
pub fn min_semiconvex_eigenvalue(e: &SymTensor<f64>, alpha: &InternalVec<f64>, chi: f64, p: &BiotDamageParams<f64>, eps_c: f64) -> f64 {
    let dim = e.dim();
    let m = dim.sym_len();
    let l = alpha.len();
    let n = m + l + 1;
    let scale: Vec<f64> = (0..m).map(|c| 1.0 / dim.sym_weight(c).sqrt()).collect();
    let unpack = |x: &[f64]| -> (SymTensor<f64>, InternalVec<f64>, f64) {
        let mut ee = *e;
        for c in 0..m {
            ee.packed_mut()[c] += x[c] * scale[c];
        }
        let mut aa = *alpha;
        for i in 0..l {
            aa[i] += x[m + i];
        }
        (ee, aa, chi + x[m + l])
    };
    let gradient = |x: &[f64]| -> Vec<f64> {
        let (ee, aa, cc) = unpack(x);
        let s = stress(&ee, &aa, cc, p);
        let da = dphi_dalpha(&ee, &aa, cc, p);
        let mu = chemical_potential(&ee, &aa, cc, p);
        let mut g = Vec::with_capacity(n);
        for c in 0..m {
            g.push(s.packed()[c] * dim.sym_weight(c) * scale[c]);
        }
        for i in 0..l {
            g.push(da[i] + aa[i] / eps_c);
        }
        g.push(mu);
        g
    };
    let step = 1e-6;
    let mut h = nalgebra::DMatrix::zeros(n, n);
    for j in 0..n {
        let mut xp = vec![0.0; n];
        let mut xm = vec![0.0; n];
        xp[j] = step;
        xm[j] = -step;
        let (gp, gm) = (gradient(&xp), gradient(&xm));
        for i in 0..n {
            h[(i, j)] = (gp[i] - gm[i]) / (2.0 * step);
        }
    }
    let h = (&h + h.transpose()) * 0.5;
    h.symmetric_eigenvalues().min()
}

/// Checks the parameter-only hypotheses on material data; returns a
/// description of every violation.
pub fn material_violations(mat: &Material<f64>) -> Vec<(String, String)> {
    let mut v = Vec::new();
    let p = &mat.biot;
    let mut need = |ok: bool, tag: &str, msg: String| {
        if !ok {
            v.push((tag.to_string(), msg));
        }
    };
    need(p.k_bulk > 0.0, "ass:1", format!("bulk modulus K = {} must be positive", p.k_bulk));
    need(p.m_biot > 0.0, "ass:1", format!("Biot modulus M_b = {} must be positive", p.m_biot));
    need(p.g0 > 0.0, "ass:1", format!("residual shear modulus G0 = {} must be positive", p.g0));
    need(p.beta > 0.0 && p.beta <= 1.0, "ass:1", format!("Biot coefficient beta = {} must lie in (0, 1]", p.beta));
    need(p.g1 >= 0.0 && p.eps_sat >= 0.0 && p.c_h >= 0.0, "ass:1", format!(
        "G1 = {}, eps_sat = {}, c_h = {} must be nonnegative",
        p.g1, p.eps_sat, p.c_h
    ));
    let bound = convexity_guard_bound(p);
    need(p.g0 > bound, "ass:1", format!("G0 = {} does not exceed the convexity bound {:.6} (eps_sat = {})", p.g0, bound, p.eps_sat));
    let d = &mat.diss;
    need(d.eta_p > 0.0, "ass:2", format!("inelastic viscosity eta_p = {} must be positive", d.eta_p));
    need(d.eta_alpha > 0.0, "ass:2", format!("internal-variable viscosity eta_alpha = {} must be positive", d.eta_alpha));
    for (name, th) in [("sigma_y", &d.sigma_y), ("a_y", &d.a_y)] {
        let lo = [0.0, 1.0].iter().map(|a| th.c0 + th.c_alpha * a).fold(f64::INFINITY, f64::min);
        need(lo >= 0.0 || th.c_chi != 0.0, "ass:2", format!("threshold {name} = {lo} must be nonnegative on alpha in [0, 1]"));
    }
    let mp = &mat.mobility;
    need(mp.m0 > 0.0, "ass:3", format!("base mobility m0 = {} must be positive", mp.m0));
    need(mp.m_min > 0.0, "ass:3", format!("mobility floor m_min = {} must be positive", mp.m_min));
    if mp.m_min > 0.0 {
        let lo = (mp.m0).min(mp.m0 + mp.m1);
        need(lo >= mp.m_min, "ass:3", format!("mobility m0 + m1*alpha reaches {lo} < m_min = {} on alpha in [0, 1]", mp.m_min));
    }
    need(mat.ell >= 1 && mat.ell <= crate::tensor::MAX_INTERNAL, "ass:1", format!("internal dimension {} out of range", mat.ell));
    v
}

/// Rejects `ell` outside the supported range.
pub fn check_ell(ell: usize) -> Result<()> {
    if ell == 0 || ell > crate::tensor::MAX_INTERNAL {
        return Err(Error::Parameter(format!("internal dimension must lie in 1..={}", crate::tensor::MAX_INTERNAL)));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Dim;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn example_params() -> BiotDamageParams<f64> {
        BiotDamageParams { k_bulk: 1.0, m_biot: 1.0, beta: 1.0, chi_eq: 0.0, g1: 1.0, eps_sat: 0.0, g0: 0.1, c_h: 0.0 }
    }

    fn diss(sigma: f64, eta: f64) -> DissipationParams<f64> {
        DissipationParams { sigma_y: Threshold::constant(sigma), eta_p: eta, a_y: Threshold::constant(sigma), eta_alpha: eta }
    }

    #[test]
    fn ground_state_is_zero() {
        let p = BiotDamageParams { c_h: 0.3, eps_sat: 2.0, chi_eq: 0.2, ..example_params() };
        let a = InternalVec::scalar(1.0);
        assert_eq!(free_energy(&SymTensor::zero(Dim::Two), &a, 0.2, &p), 0.0);
        assert_eq!(stress(&SymTensor::zero(Dim::Two), &a, 0.2, &p), SymTensor::zero(Dim::Two));
        assert_eq!(dphi_dalpha(&SymTensor::zero(Dim::Two), &a, 0.2, &p)[0], 0.0);
    }

    #[test]
    fn worked_example_values() {
        let p = example_params();
        let e = SymTensor::new2(0.02, 0.0, 0.0);
        let a = InternalVec::scalar(1.0);
        // (K + M_b)(trE)²/2 + (G1 + G0)|devE|² evaluated by hand
        let by_hand = 0.5 * 0.02f64.powi(2) + 0.5 * 0.02f64.powi(2) + 1.1 * 2.0 * 0.01f64.powi(2);
        assert!((free_energy(&e, &a, 0.0, &p) - 0.00062).abs() < 1e-15);
        assert!((by_hand - 0.00062).abs() < 1e-15);
        let s = stress(&e, &a, 0.0, &p);
        assert!((s.get(0, 0) - 0.062).abs() < 1e-15 && (s.get(1, 1) - 0.018).abs() < 1e-15 && s.get(0, 1) == 0.0);
    }

    #[test]
    fn isotropy_and_evenness() {
        let p = BiotDamageParams { eps_sat: 3.0, ..example_params() };
        let a = InternalVec::scalar(0.6);
        let s = stress(&SymTensor::diag(Dim::Two, 0.03), &a, 0.1, &p);
        assert_eq!(s.get(0, 1), 0.0);
        assert!((s.get(0, 0) - s.get(1, 1)).abs() < 1e-15);
        let e = SymTensor::new2(0.03, 0.01, -0.02);
        let (dev, sph, _) = dev_sph_tr(&e);
        let flipped = sph - dev;
        assert!((free_energy(&e, &a, 0.1, &p) - free_energy(&flipped, &a, 0.1, &p)).abs() < 1e-16);
    }

    #[test]
    fn local_fluid_equilibrium() {
        let p = BiotDamageParams { beta: 0.7, chi_eq: 0.3, ..example_params() };
        let e = SymTensor::new2(0.01, 0.004, 0.02);
        let chi = 0.3 + 0.7 * e.trace();
        assert!(chemical_potential(&e, &InternalVec::scalar(1.0), chi, &p).abs() < 1e-16);
    }

    #[test]
    fn hessian_is_linear_and_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = BiotDamageParams { eps_sat: 5.0, c_h: 0.2, beta: 0.6, ..example_params() };
        for _ in 0..100 {
            let e = SymTensor::new2(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1));
            let a = InternalVec::scalar(rng.gen_range(0.0..1.0));
            let x1 = SymTensor::new2(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let x2 = SymTensor::new2(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let (c1, c2) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let (h1, m1) = hessian_action(&e, &a, 0.0, &p, &x1, c1);
            let (h2, m2) = hessian_action(&e, &a, 0.0, &p, &x2, c2);
            let l = h1.dot(&x2) + m1 * c2;
            let r = h2.dot(&x1) + m2 * c1;
            assert!((l - r).abs() < 1e-12);
            let (z, zm) = hessian_action(&e, &a, 0.0, &p, &SymTensor::zero(Dim::Two), 0.0);
            assert_eq!(z.norm(), 0.0);
            assert_eq!(zm, 0.0);
        }
    }

    #[test]
    fn prox_examples() {
        let dp = diss(1.0, 1.0);
        let a = InternalVec::scalar(1.0);
        let drv = SymTensor::new2(0.5, 0.2, -0.3);
        let r = prox_rates(&a, 0.0, &drv, &InternalVec::scalar(0.4), &dp);
        assert_eq!(r.rate_p.norm(), 0.0);
        assert_eq!(r.rate_alpha.norm(), 0.0);
        let drv = SymTensor::new2(2.0, 0.0, 0.0);
        let r = prox_rates(&a, 0.0, &drv, &InternalVec::scalar(0.0), &dp);
        assert!((r.rate_p.norm() - 1.0).abs() < 1e-15);
        assert!(r.certificate <= 1e-12);
        let dp0 = diss(0.0, 2.0);
        let drv = SymTensor::new2(0.3, -0.1, 0.2);
        let r = prox_rates(&a, 0.0, &drv, &InternalVec::scalar(0.5), &dp0);
        assert!((r.rate_p - drv * 0.5).norm() < 1e-16);
        assert!((r.rate_alpha[0] - 0.25).abs() < 1e-16);
    }

    #[test]
    fn prox_matches_line_search_minimiser() {
        // minimise ζ(r) − driving·r along the driving direction
        let dp = diss(1.0, 1.0);
        let drv = SymTensor::new2(1.2, 0.8, -0.4);
        let dir = drv * (1.0 / drv.norm());
        let obj = |t: f64| {
            let r = dir * t;
            1.0 * r.norm() + 0.5 * r.norm_sq() - drv.dot(&r)
        };
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..=200_000 {
            let t = 3.0 * i as f64 / 200_000.0;
            let o = obj(t);
            if o < best.0 {
                best = (o, t);
            }
        }
        let r = prox_rates(&InternalVec::scalar(1.0), 0.0, &drv, &InternalVec::scalar(0.0), &dp);
        assert!((r.rate_p.norm() - best.1).abs() < 2e-5);
    }

    #[test]
    fn prox_jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let drv = SymTensor::new2(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let (sigma, eta) = (0.5, 1.7);
            let j = prox_jacobian_p(&drv, sigma, eta);
            let f = |t: &SymTensor<f64>| *t * (shrink_factor(t.norm(), sigma) / eta);
            for d in 0..3 {
                let mut dp = drv;
                dp.packed_mut()[d] += 1e-7;
                let mut dm = drv;
                dm.packed_mut()[d] -= 1e-7;
                let fd = (f(&dp) - f(&dm)) * (1.0 / 2e-7);
                for c in 0..3 {
                    assert!((fd.packed()[c] - j[c * 3 + d]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn xi_and_zeta() {
        let dp = diss(0.0, 1.3);
        let a = InternalVec::scalar(1.0);
        let rp = SymTensor::new2(0.2, 0.1, 0.3);
        let ra = InternalVec::scalar(0.4);
        let xi = dissipation_rate_xi(&a, 0.0, &rp, &ra, &dp);
        let zeta = dissipation_potential(&a, 0.0, &rp, &ra, &dp);
        assert!((xi - 2.0 * zeta).abs() < 1e-15);
        assert_eq!(dissipation_rate_xi(&a, 0.0, &SymTensor::zero(Dim::Two), &InternalVec::scalar(0.0), &dp), 0.0);
    }

    #[test]
    fn mobility_examples() {
        let a = InternalVec::scalar(1.0);
        assert_eq!(mobility(&a, 0.0, &MobilityParams { m0: 1.0, m1: 0.5, m_min: 0.01 }), 1.5);
        assert_eq!(mobility(&a, 0.0, &MobilityParams { m0: 0.1, m1: -0.2, m_min: 0.01 }), 0.01);
        assert_eq!(mobility(&InternalVec::scalar(0.3), 0.0, &MobilityParams { m0: 0.7, m1: 0.0, m_min: 0.01 }), 0.7);
    }

    #[test]
    fn convexity_constant_matches_closed_form() {
        // min over u of (1 − 3u)/(1 + u)³ is −1/4 at u = 1
        assert!((convexity_constant(3.0) - 0.25).abs() < 1e-10);
        assert_eq!(convexity_constant(0.0), 0.0);
    }

    #[test]
    fn guard_implies_positive_e_chi_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let p = BiotDamageParams { eps_sat: 50.0, g1: 1.0, g0: 0.3, beta: 0.8, ..example_params() };
        assert!(p.g0 > convexity_guard_bound(&p));
        let mut lo = f64::INFINITY;
        for _ in 0..2000 {
            let e = SymTensor::new2(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1));
            let a = InternalVec::scalar(rng.gen_range(0.0..1.0));
            lo = lo.min(min_e_chi_eigenvalue(&e, &a, 0.0, &p));
        }
        assert!(lo > 0.0, "{lo}");
    }
}
