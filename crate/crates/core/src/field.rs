//! Collocated cell-centred grid with one ghost layer and the discrete
//! operators built on it.
//!
//! Layout: x is the fastest index, ghosts included. A field with `m`
//! components stores them component-major. The gradient of an `m`-component
//! field has `m·d` components ordered `k·d + axis`; the same layout is the
//! input of [`div`], so `laplacian = div ∘ grad` by construction.
//!
//! Central differences `(u[c+1] − u[c−1])/2h` and the matching divergence
//! are exact adjoints up to the face pairing returned by [`boundary_pairing`].

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::{Dim, SymTensor};

/// One wall face: the ghost cell, its interior neighbour and the outward sign.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Face<T> {
    pub axis: usize,
    /// +1 on the high side, −1 on the low side.
    pub sign: T,
    pub ghost: usize,
    pub inner: usize,
    pub center: [T; 2],
    pub area: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    dim: Dim,
    n: [usize; 2],
    len: [T; 2],
    h: [T; 2],
    periodic: [bool; 2],
    sx: usize,
    sy: usize,
    faces: Vec<Face<T>>,
}

impl<T: Real> Grid<T> {
    /// `n`, `len` and `periodic` carry one entry per axis.
    pub fn new(dim: Dim, n: &[usize], len: &[T], periodic: &[bool]) -> Result<Self> {
        let d = dim.n();
        if n.len() != d || len.len() != d || periodic.len() != d {
            return Err(Error::Grid(format!("expected {d} entries per axis")));
        }
        let mut nn = [1usize; 2];
        let mut ll = [T::one(); 2];
        let mut hh = [T::one(); 2];
        let mut pp = [true; 2];
        for a in 0..d {
            if n[a] < 4 {
                return Err(Error::Grid(format!("need at least 4 cells per axis, got {}", n[a])));
            }
            if !(len[a] > T::zero()) || !len[a].is_finite() {
                return Err(Error::Grid(format!("box length must be positive, got {}", len[a])));
            }
            nn[a] = n[a];
            ll[a] = len[a];
            hh[a] = len[a] / T::count(n[a]);
            pp[a] = periodic[a];
        }
        let sx = nn[0] + 2;
        let sy = if d == 2 { nn[1] + 2 } else { 1 };
        let mut g = Self { dim, n: nn, len: ll, h: hh, periodic: pp, sx, sy, faces: Vec::new() };
        g.faces = g.build_faces();
        Ok(g)
    }

    /// Unit-box style shorthand with all walls.
    pub fn boxed(dim: Dim, n: usize, len: T) -> Result<Self> {
        let d = dim.n();
        Self::new(dim, &vec![n; d], &vec![len; d], &vec![false; d])
    }

    /// Fully periodic shorthand.
    pub fn periodic(dim: Dim, n: usize, len: T) -> Result<Self> {
        let d = dim.n();
        Self::new(dim, &vec![n; d], &vec![len; d], &vec![true; d])
    }

    fn build_faces(&self) -> Vec<Face<T>> {
        let mut faces = Vec::new();
        let d = self.dim.n();
        for a in 0..d {
            if self.periodic[a] {
                continue;
            }
            for side in [-1i32, 1] {
                let (g, inn) = if side < 0 { (0, 1) } else { (self.n[a] + 1, self.n[a]) };
                let t = 1 - a;
                let tr = if d == 2 { 1..=self.n[t] } else { 0..=0 };
                for q in tr {
                    let (gi, gj, ii, ij) = if a == 0 { (g, q, inn, q) } else { (q, g, q, inn) };
                    let ghost = self.idx(gi, gj);
                    let inner = self.idx(ii, ij);
                    let mut center = self.center(inner);
                    center[a] = if side < 0 { T::zero() } else { self.len[a] };
                    let area = if d == 2 { self.h[t] } else { T::one() };
                    faces.push(Face { axis: a, sign: T::of(side as f64), ghost, inner, center, area });
                }
            }
        }
        faces
    }

    #[inline]
    pub fn dim(&self) -> Dim {
        self.dim
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.dim.n()
    }

    #[inline]
    pub fn cells(&self, axis: usize) -> usize {
        self.n[axis]
    }

    #[inline]
    pub fn length(&self, axis: usize) -> T {
        self.len[axis]
    }

    #[inline]
    pub fn h(&self, axis: usize) -> T {
        self.h[axis]
    }

    /// Largest spacing.
    pub fn h_max(&self) -> T {
        (0..self.d()).map(|a| self.h[a]).fold(T::zero(), T::max)
    }

    #[inline]
    pub fn is_periodic(&self, axis: usize) -> bool {
        self.periodic[axis]
    }

    /// Number of storage slots per component, ghosts included.
    #[inline]
    pub fn total(&self) -> usize {
        self.sx * self.sy
    }

    pub fn interior_count(&self) -> usize {
        (0..self.d()).map(|a| self.n[a]).product()
    }

    /// Cell measure Π h_i.
    pub fn cell_volume(&self) -> T {
        (0..self.d()).map(|a| self.h[a]).fold(T::one(), |p, h| p * h)
    }

    /// Neighbour offset along `axis`.
    #[inline]
    pub fn offset(&self, axis: usize) -> usize {
        if axis == 0 {
            1
        } else {
            self.sx
        }
    }

    /// Storage index of ghost-inclusive coordinates.
    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.sx + i
    }

    /// Ghost-inclusive coordinates of a storage index.
    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.sx, idx / self.sx)
    }

    /// Cell centre of a storage index.
    pub fn center(&self, idx: usize) -> [T; 2] {
        let (i, j) = self.coords(idx);
        let x = (T::count(i) - T::half()) * self.h[0];
        let y = if self.d() == 2 { (T::count(j) - T::half()) * self.h[1] } else { T::zero() };
        [x, y]
    }

    /// Contiguous interior index ranges, one per interior row.
    pub fn rows(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        let jr = if self.d() == 2 { 1..self.n[1] + 1 } else { 0..1 };
        jr.map(move |j| {
            let s = j * self.sx + 1;
            s..s + self.n[0]
        })
    }

    /// Calls `f` on every interior storage index in row-major order.
    #[inline]
    pub fn for_interior(&self, mut f: impl FnMut(usize)) {
        for r in self.rows() {
            for c in r {
                f(c);
            }
        }
    }

    pub fn interior_indices(&self) -> Vec<usize> {
        let mut v = Vec::with_capacity(self.interior_count());
        self.for_interior(|c| v.push(c));
        v
    }

    /// Wall faces (empty on fully periodic grids).
    pub fn faces(&self) -> &[Face<T>] {
        &self.faces
    }

    /// Axes along which the grid wraps around, paired with their (ghost, source) pairs.
    fn periodic_pairs(&self, mut f: impl FnMut(usize, usize)) {
        let d = self.d();
        for a in 0..d {
            if !self.periodic[a] {
                continue;
            }
            if a == 0 {
                let jr = if d == 2 { 1..self.n[1] + 1 } else { 0..1 };
                for j in jr {
                    f(self.idx(0, j), self.idx(self.n[0], j));
                    f(self.idx(self.n[0] + 1, j), self.idx(1, j));
                }
            } else {
                for i in 1..self.n[0] + 1 {
                    f(self.idx(i, 0), self.idx(i, self.n[1]));
                    f(self.idx(i, self.n[1] + 1), self.idx(i, 1));
                }
            }
        }
    }
}

/// Multi-component cell field with one ghost layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Field<T> {
    ncomp: usize,
    total: usize,
    data: Vec<T>,
    ghosts: bool,
}

impl<T: Real> Field<T> {
    pub fn zeros(grid: &Grid<T>, ncomp: usize) -> Self {
        let total = grid.total();
        Self { ncomp, total, data: vec![T::zero(); ncomp * total], ghosts: false }
    }

    pub fn scalar(grid: &Grid<T>) -> Self {
        Self::zeros(grid, 1)
    }

    pub fn vector(grid: &Grid<T>) -> Self {
        Self::zeros(grid, grid.d())
    }

    pub fn sym(grid: &Grid<T>) -> Self {
        Self::zeros(grid, grid.dim().sym_len())
    }

    /// Builds a field from flat storage laid out like [`Field::data`].
    pub fn from_data(grid: &Grid<T>, ncomp: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != ncomp * grid.total() {
            return Err(Error::Shape(format!("expected {} values, got {}", ncomp * grid.total(), data.len())));
        }
        Ok(Self { ncomp, total: grid.total(), data, ghosts: false })
    }

    /// Evaluates `f(center)` at every interior cell.
    pub fn from_fn(grid: &Grid<T>, ncomp: usize, mut f: impl FnMut([T; 2]) -> Vec<T>) -> Self {
        let mut fld = Self::zeros(grid, ncomp);
        grid.for_interior(|c| {
            let vals = f(grid.center(c));
            for (k, v) in vals.into_iter().take(ncomp).enumerate() {
                fld.data[k * fld.total + c] = v;
            }
        });
        fld
    }

    #[inline]
    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    #[inline]
    pub fn comp(&self, k: usize) -> &[T] {
        &self.data[k * self.total..(k + 1) * self.total]
    }

    #[inline]
    pub fn comp_mut(&mut self, k: usize) -> &mut [T] {
        self.ghosts = false;
        &mut self.data[k * self.total..(k + 1) * self.total]
    }

    #[inline]
    pub fn at(&self, k: usize, c: usize) -> T {
        self.data[k * self.total + c]
    }

    #[inline]
    pub fn set(&mut self, k: usize, c: usize, v: T) {
        self.ghosts = false;
        self.data[k * self.total + c] = v;
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        self.ghosts = false;
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn ghosts_filled(&self) -> bool {
        self.ghosts
    }

    /// Declares the ghost layer consistent without touching it.
    pub fn mark_ghosts_filled(&mut self) {
        self.ghosts = true;
    }

    #[inline]
    pub fn sym_at(&self, dim: Dim, c: usize) -> SymTensor<T> {
        let mut t = SymTensor::zero(dim);
        for (k, x) in t.packed_mut().iter_mut().enumerate() {
            *x = self.data[k * self.total + c];
        }
        t
    }

    #[inline]
    pub fn set_sym(&mut self, c: usize, t: &SymTensor<T>) {
        self.ghosts = false;
        for (k, x) in t.packed().iter().enumerate() {
            self.data[k * self.total + c] = *x;
        }
    }

    #[inline]
    pub fn vec_at(&self, c: usize) -> [T; 2] {
        let mut v = [T::zero(); 2];
        for (k, x) in v.iter_mut().enumerate().take(self.ncomp.min(2)) {
            *x = self.data[k * self.total + c];
        }
        v
    }

    /// Copies interior values of all components into `out` (ghosts untouched).
    pub fn copy_interior_from(&mut self, grid: &Grid<T>, src: &Field<T>) {
        self.ghosts = false;
        for k in 0..self.ncomp {
            for r in grid.rows() {
                let o = k * self.total;
                self.data[o + r.start..o + r.end].copy_from_slice(&src.data[o + r.start..o + r.end]);
            }
        }
    }

    /// `self += a·x` over all storage.
    pub fn axpy(&mut self, a: T, x: &Field<T>) {
        self.ghosts = false;
        for (s, v) in self.data.iter_mut().zip(&x.data) {
            *s += a * *v;
        }
    }

    pub fn all_finite(&self, grid: &Grid<T>) -> bool {
        let mut ok = true;
        for k in 0..self.ncomp {
            let cmp = self.comp(k);
            grid.for_interior(|c| ok &= cmp[c].is_finite());
        }
        ok
    }

    /// Maximum interior absolute value over all components.
    pub fn max_abs(&self, grid: &Grid<T>) -> T {
        let mut m = T::zero();
        for k in 0..self.ncomp {
            let cmp = self.comp(k);
            grid.for_interior(|c| m = m.max(cmp[c].abs()));
        }
        m
    }
}

/// Boundary condition attached to a field.
#[derive(Clone, Copy, Debug)]
pub enum BcSpec<'a, T> {
    /// Mirror copy: zero normal derivative.
    HomNeumann,
    /// Wraparound on every axis.
    Periodic,
    /// Velocity: zero normal component, tangential traction balance
    /// `(T n)_t + γ v_t = g_t` with `T = stress + k_v E(v)`.
    NormalZeroSlip {
        gamma: T,
        kv: T,
        /// Traction load per wall face (d components, tangential part used).
        traction: &'a [[T; 2]],
        /// Packed symmetric stress entering the traction, if any.
        stress: Option<&'a Field<T>>,
    },
    /// Scalar potential with prescribed flux `M ∂_n u = h` per wall face.
    FluxNeumann { flux: &'a [T], mobility: &'a Field<T> },
}

/// Fills the ghost layer of `u` according to `spec`. Periodic axes always wrap.
pub fn apply_boundary<T: Real>(u: &mut Field<T>, spec: &BcSpec<'_, T>, grid: &Grid<T>) -> Result<()> {
    let total = grid.total();
    let m = u.ncomp;
    let nf = grid.faces().len();
    match spec {
        BcSpec::HomNeumann => {}
        BcSpec::Periodic => {
            if grid.faces().iter().next().is_some() {
                return Err(Error::BoundaryKind("periodic condition on a grid with walls".into()));
            }
        }
        BcSpec::NormalZeroSlip { traction, stress, .. } => {
            if m != grid.d() {
                return Err(Error::BoundaryKind(format!("slip condition needs a {}-vector field, got {m} components", grid.d())));
            }
            if traction.len() != nf {
                return Err(Error::BoundaryKind(format!("traction has {} faces, grid has {nf}", traction.len())));
            }
            if let Some(s) = stress {
                if s.ncomp != grid.dim().sym_len() {
                    return Err(Error::BoundaryKind("slip stress must be a packed symmetric field".into()));
                }
            }
        }
        BcSpec::FluxNeumann { flux, mobility } => {
            if m != 1 {
                return Err(Error::BoundaryKind(format!("flux condition needs a scalar field, got {m} components")));
            }
            if flux.len() != nf || mobility.ncomp != 1 {
                return Err(Error::BoundaryKind(format!("flux data has {} faces, grid has {nf}", flux.len())));
            }
        }
    }
    let data = &mut u.data;
    grid.periodic_pairs(|g, s| {
        for k in 0..m {
            data[k * total + g] = data[k * total + s];
        }
    });
    let dim = grid.dim();
    for (fi, f) in grid.faces().iter().enumerate() {
        match spec {
            BcSpec::HomNeumann | BcSpec::Periodic => {
                for k in 0..m {
                    data[k * total + f.ghost] = data[k * total + f.inner];
                }
            }
            BcSpec::NormalZeroSlip { gamma, kv, traction, stress } => {
                let a = f.axis;
                data[a * total + f.ghost] = -data[a * total + f.inner];
                if grid.d() == 2 {
                    let t = 1 - a;
                    let vin = data[t * total + f.inner];
                    let s_tn = stress.map_or(T::zero(), |s| s.at(dim.sym_index(t, a), f.inner));
                    let kh = *kv / (T::two() * grid.h(a));
                    let den = kh + T::half() * *gamma;
                    data[t * total + f.ghost] = if den > T::zero() {
                        (traction[fi][t] - f.sign * s_tn + vin * (kh - T::half() * *gamma)) / den
                    } else {
                        vin
                    };
                }
            }
            BcSpec::FluxNeumann { flux, mobility } => {
                let mob = mobility.at(0, f.inner);
                data[f.ghost] = data[f.inner] + f.sign * flux[fi] * grid.h(f.axis) / mob;
            }
        }
    }
    u.ghosts = true;
    Ok(())
}

/// Fills the ghosts of a flux field (layout `k·d + axis`) from prescribed
/// normal face values: ghost = 2·face − interior for the normal component,
/// mirror for the others. `face(k, face_index, interior_normal_value)`
/// returns the face value of component `k·d + axis`.
pub fn fill_flux_ghosts<T: Real>(grid: &Grid<T>, flux: &mut Field<T>, mut face: impl FnMut(usize, usize, T) -> T) {
    let d = grid.d();
    let total = grid.total();
    let m = flux.ncomp / d;
    let data = &mut flux.data;
    grid.periodic_pairs(|g, s| {
        for k in 0..m * d {
            data[k * total + g] = data[k * total + s];
        }
    });
    for (fi, f) in grid.faces().iter().enumerate() {
        for k in 0..m {
            for a in 0..d {
                let c = (k * d + a) * total;
                let fin = data[c + f.inner];
                data[c + f.ghost] = if a == f.axis { T::two() * face(k, fi, fin) - fin } else { fin };
            }
        }
    }
    flux.ghosts = true;
}

/// Zero-normal-flux ghosts for a gradient field (derived from HomNeumann).
pub fn fill_gradient_ghosts<T: Real>(grid: &Grid<T>, g: &mut Field<T>) {
    fill_flux_ghosts(grid, g, |_, _, _| T::zero());
}

/// Central gradient; output layout `k·d + axis`, interior cells only.
pub fn grad<T: Real>(u: &Field<T>, grid: &Grid<T>) -> Field<T> {
    debug_assert!(u.ghosts, "grad: ghosts not filled");
    let d = grid.d();
    let mut out = Field::zeros(grid, u.ncomp * d);
    for k in 0..u.ncomp {
        let src = u.comp(k);
        for a in 0..d {
            let off = grid.offset(a);
            let inv = T::one() / (T::two() * grid.h(a));
            let dst = out.comp_mut(k * d + a);
            for r in grid.rows() {
                for c in r {
                    dst[c] = (src[c + off] - src[c - off]) * inv;
                }
            }
        }
    }
    out
}

/// Central divergence of a flux field with layout `k·d + axis`; returns `m` components.
pub fn div<T: Real>(flux: &Field<T>, grid: &Grid<T>) -> Field<T> {
    debug_assert!(flux.ghosts, "div: ghosts not filled");
    let d = grid.d();
    let m = flux.ncomp / d;
    let mut out = Field::zeros(grid, m);
    for k in 0..m {
        for a in 0..d {
            let off = grid.offset(a);
            let inv = T::one() / (T::two() * grid.h(a));
            let src = flux.comp(k * d + a);
            let dst = out.comp_mut(k);
            for r in grid.rows() {
                for c in r {
                    dst[c] += (src[c + off] - src[c - off]) * inv;
                }
            }
        }
    }
    out
}

/// Divergence of a vector field.
pub fn div_vec<T: Real>(v: &Field<T>, grid: &Grid<T>) -> Field<T> {
    div(v, grid)
}

/// Row-wise divergence of a matrix field stored row-major (`i·d + j`).
pub fn div_tensor<T: Real>(t: &Field<T>, grid: &Grid<T>) -> Field<T> {
    div(t, grid)
}

/// `sym ∇v` as a packed symmetric field.
pub fn symgrad<T: Real>(v: &Field<T>, grid: &Grid<T>) -> Field<T> {
    let g = grad(v, grid);
    sym_of_grad(&g, grid)
}

/// Packs `sym G` from a velocity-gradient field (`G[i·d + j] = ∂_j v_i`).
pub fn sym_of_grad<T: Real>(g: &Field<T>, grid: &Grid<T>) -> Field<T> {
    let mut e = Field::sym(grid);
    match grid.dim() {
        Dim::One => e.comp_mut(0).copy_from_slice(g.comp(0)),
        Dim::Two => {
            let total = grid.total();
            let gd = g.data();
            let ed = e.data_mut();
            grid.for_interior(|c| {
                ed[c] = gd[c];
                ed[total + c] = T::half() * (gd[total + c] + gd[2 * total + c]);
                ed[2 * total + c] = gd[3 * total + c];
            });
        }
    }
    e
}

/// `div(∇u)` with zero-flux gradient ghosts; `u` must have ghosts filled.
pub fn laplacian<T: Real>(u: &Field<T>, grid: &Grid<T>) -> Field<T> {
    let mut g = grad(u, grid);
    fill_gradient_ghosts(grid, &mut g);
    div(&g, grid)
}

/// Discretisation of `(a·∇)` terms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Advection {
    /// First-order donor cell.
    #[default]
    Upwind,
    /// Second-order central, for verification runs.
    Central,
}

/// `(a·∇)u` for every component of `u`; `a` is a d-vector field.
pub fn advect<T: Real>(u: &Field<T>, a: &Field<T>, grid: &Grid<T>, mode: Advection) -> Field<T> {
    debug_assert!(u.ghosts, "advect: ghosts not filled");
    let mut out = Field::zeros(grid, u.ncomp);
    advect_into(u, a, grid, mode, &mut out);
    out
}

/// Adds `(a·∇)u` into `out`.
pub fn advect_into<T: Real>(u: &Field<T>, a: &Field<T>, grid: &Grid<T>, mode: Advection, out: &mut Field<T>) {
    let d = grid.d();
    for ax in 0..d {
        let off = grid.offset(ax);
        let h = grid.h(ax);
        let vel = a.comp(ax);
        for k in 0..u.ncomp {
            let src = u.comp(k);
            let dst = out.comp_mut(k);
            match mode {
                Advection::Upwind => {
                    let inv = T::one() / h;
                    for r in grid.rows() {
                        for c in r {
                            let w = vel[c];
                            let du = if w > T::zero() { src[c] - src[c - off] } else { src[c + off] - src[c] };
                            dst[c] += w * du * inv;
                        }
                    }
                }
                Advection::Central => {
                    let inv = T::one() / (T::two() * h);
                    for r in grid.rows() {
                        for c in r {
                            dst[c] += vel[c] * (src[c + off] - src[c - off]) * inv;
                        }
                    }
                }
            }
        }
    }
}

/// `(f_k − f_km1)/τ + (v·∇)f_k`; `f_k` must have ghosts filled.
pub fn convective_derivative<T: Real>(
    f_k: &Field<T>,
    f_km1: &Field<T>,
    v: &Field<T>,
    tau: T,
    grid: &Grid<T>,
    mode: Advection,
) -> Result<Field<T>> {
    if !(tau > T::zero()) {
        return Err(Error::NonPositiveStep(tau.to64()));
    }
    let mut out = Field::zeros(grid, f_k.ncomp);
    let inv = T::one() / tau;
    for k in 0..f_k.ncomp {
        let (a, b) = (f_k.comp(k), f_km1.comp(k));
        let dst = out.comp_mut(k);
        grid.for_interior(|c| dst[c] = (a[c] - b[c]) * inv);
    }
    advect_into(f_k, v, grid, mode, &mut out);
    Ok(out)
}

/// Cell-sum quadrature of component `k` over the interior.
pub fn integrate_domain<T: Real>(u: &Field<T>, k: usize, grid: &Grid<T>) -> T {
    let src = u.comp(k);
    let mut s = T::zero();
    grid.for_interior(|c| s += src[c]);
    s * grid.cell_volume()
}

/// Face-sum quadrature of one value per wall face.
pub fn integrate_boundary<T: Real>(values: &[T], grid: &Grid<T>) -> T {
    grid.faces().iter().zip(values).map(|(f, v)| f.area * *v).sum()
}

/// Boundary term `B(w, F)` with `⟨w, div F⟩ + ⟨∇w, F⟩ = B(w, F)` exactly.
/// `F` has layout `k·d + axis`, `w` has the matching `m` components; both
/// need filled ghosts.
pub fn boundary_pairing<T: Real>(w: &Field<T>, flux: &Field<T>, grid: &Grid<T>) -> T {
    let d = grid.d();
    let m = w.ncomp;
    let mut s = T::zero();
    for f in grid.faces() {
        for k in 0..m {
            let fc = flux.comp(k * d + f.axis);
            let wc = w.comp(k);
            s += f.area * f.sign * T::half() * (wc[f.inner] * fc[f.ghost] + wc[f.ghost] * fc[f.inner]);
        }
    }
    s
}

/// Cell-sum inner product over all components.
pub fn inner<T: Real>(a: &Field<T>, b: &Field<T>, grid: &Grid<T>) -> T {
    let mut s = T::zero();
    for k in 0..a.ncomp {
        let (x, y) = (a.comp(k), b.comp(k));
        grid.for_interior(|c| s += x[c] * y[c]);
    }
    s * grid.cell_volume()
}
