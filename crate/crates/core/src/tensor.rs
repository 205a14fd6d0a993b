//! Pointwise symmetric-tensor algebra for d ∈ {1, 2}.
//!
//! Symmetric tensors are packed upper-triangular: `[xx]` for d = 1 and
//! `[xx, xy, yy]` for d = 2. Frobenius products weight the off-diagonal
//! entry by 2 so that `|E|²` matches the full-matrix value.

use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Largest supported internal-variable dimension ℓ.
pub const MAX_INTERNAL: usize = 4;

/// Largest component count of a field whose gradient enters [`boxtimes`].
pub const MAX_GRAD_COMPONENTS: usize = 4;

/// Spatial dimension of the model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub enum Dim {
    One,
    Two,
}

impl Dim {
    pub fn new(d: usize) -> Result<Self> {
        match d {
            1 => Ok(Dim::One),
            2 => Ok(Dim::Two),
            _ => Err(Error::Dimension(d)),
        }
    }

    #[inline]
    pub fn n(self) -> usize {
        match self {
            Dim::One => 1,
            Dim::Two => 2,
        }
    }

    /// Number of packed components of a symmetric tensor.
    #[inline]
    pub fn sym_len(self) -> usize {
        match self {
            Dim::One => 1,
            Dim::Two => 3,
        }
    }

    /// Packed index of entry (i, j).
    #[inline]
    pub fn sym_index(self, i: usize, j: usize) -> usize {
        match self {
            Dim::One => 0,
            Dim::Two => i + j,
        }
    }

    /// Frobenius weight of packed component `c`.
    #[inline]
    pub fn sym_weight(self, c: usize) -> f64 {
        if self == Dim::Two && c == 1 {
            2.0
        } else {
            1.0
        }
    }

    /// Whether packed component `c` lies on the diagonal.
    #[inline]
    pub fn sym_is_diag(self, c: usize) -> bool {
        !(self == Dim::Two && c == 1)
    }
}

impl TryFrom<usize> for Dim {
    type Error = Error;
    fn try_from(d: usize) -> Result<Self> {
        Dim::new(d)
    }
}

impl From<Dim> for usize {
    fn from(d: Dim) -> usize {
        d.n()
    }
}

/// Symmetric d×d tensor in packed storage.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymTensor<T> {
    dim: Dim,
    e: [T; 3],
}

impl<T: Real> SymTensor<T> {
    pub fn zero(dim: Dim) -> Self {
        Self { dim, e: [T::zero(); 3] }
    }

    pub fn identity(dim: Dim) -> Self {
        Self::diag(dim, T::one())
    }

    /// `c·I`.
    pub fn diag(dim: Dim, c: T) -> Self {
        let mut t = Self::zero(dim);
        match dim {
            Dim::One => t.e[0] = c,
            Dim::Two => {
                t.e[0] = c;
                t.e[2] = c;
            }
        }
        t
    }

    /// Builds from packed components; `packed.len()` must equal `dim.sym_len()`.
    pub fn from_packed(dim: Dim, packed: &[T]) -> Result<Self> {
        if packed.len() != dim.sym_len() {
            return Err(Error::Shape(format!(
                "symmetric tensor of dimension {} needs {} packed entries, got {}",
                dim.n(),
                dim.sym_len(),
                packed.len()
            )));
        }
        let mut t = Self::zero(dim);
        t.e[..packed.len()].copy_from_slice(packed);
        Ok(t)
    }

    /// 2-D constructor from `xx, xy, yy`.
    pub fn new2(xx: T, xy: T, yy: T) -> Self {
        Self { dim: Dim::Two, e: [xx, xy, yy] }
    }

    /// 1-D constructor.
    pub fn new1(xx: T) -> Self {
        Self { dim: Dim::One, e: [xx, T::zero(), T::zero()] }
    }

    #[inline]
    pub fn dim(&self) -> Dim {
        self.dim
    }

    #[inline]
    pub fn packed(&self) -> &[T] {
        &self.e[..self.dim.sym_len()]
    }

    #[inline]
    pub fn packed_mut(&mut self) -> &mut [T] {
        let n = self.dim.sym_len();
        &mut self.e[..n]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.e[self.dim.sym_index(i, j)]
    }

    #[inline]
    pub fn trace(&self) -> T {
        match self.dim {
            Dim::One => self.e[0],
            Dim::Two => self.e[0] + self.e[2],
        }
    }

    /// Frobenius product `A:B`.
    #[inline]
    pub fn dot(&self, o: &Self) -> T {
        match self.dim {
            Dim::One => self.e[0] * o.e[0],
            Dim::Two => self.e[0] * o.e[0] + T::two() * self.e[1] * o.e[1] + self.e[2] * o.e[2],
        }
    }

    #[inline]
    pub fn norm_sq(&self) -> T {
        self.dot(self)
    }

    #[inline]
    pub fn norm(&self) -> T {
        self.norm_sq().sqrt()
    }

    pub fn to_matrix(&self) -> Matrix<T> {
        let mut m = Matrix::zero(self.dim);
        let d = self.dim.n();
        for i in 0..d {
            for j in 0..d {
                m.set(i, j, self.get(i, j));
            }
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        self.packed().iter().all(|x| x.is_finite())
    }
}

impl<T: Real> Add for SymTensor<T> {
    type Output = Self;
    fn add(mut self, o: Self) -> Self {
        for k in 0..3 {
            self.e[k] += o.e[k];
        }
        self
    }
}

impl<T: Real> Sub for SymTensor<T> {
    type Output = Self;
    fn sub(mut self, o: Self) -> Self {
        for k in 0..3 {
            self.e[k] -= o.e[k];
        }
        self
    }
}

impl<T: Real> Neg for SymTensor<T> {
    type Output = Self;
    fn neg(mut self) -> Self {
        for k in 0..3 {
            self.e[k] = -self.e[k];
        }
        self
    }
}

impl<T: Real> Mul<T> for SymTensor<T> {
    type Output = Self;
    fn mul(mut self, c: T) -> Self {
        for k in 0..3 {
            self.e[k] *= c;
        }
        self
    }
}

/// General d×d matrix, row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Matrix<T> {
    dim: Dim,
    e: [T; 4],
}

impl<T: Real> Matrix<T> {
    pub fn zero(dim: Dim) -> Self {
        Self { dim, e: [T::zero(); 4] }
    }

    pub fn identity(dim: Dim) -> Self {
        let mut m = Self::zero(dim);
        for i in 0..dim.n() {
            m.set(i, i, T::one());
        }
        m
    }

    /// Builds from row-major entries; `rows.len()` must be d².
    pub fn from_rows(dim: Dim, rows: &[T]) -> Result<Self> {
        let d = dim.n();
        if rows.len() != d * d {
            return Err(Error::Shape(format!("matrix of dimension {d} needs {} entries, got {}", d * d, rows.len())));
        }
        let mut m = Self::zero(dim);
        for i in 0..d {
            for j in 0..d {
                m.set(i, j, rows[i * d + j]);
            }
        }
        Ok(m)
    }

    #[inline]
    pub fn dim(&self) -> Dim {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.e[i * 2 + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, x: T) {
        self.e[i * 2 + j] = x;
    }

    pub fn transpose(&self) -> Self {
        let mut m = Self::zero(self.dim);
        let d = self.dim.n();
        for i in 0..d {
            for j in 0..d {
                m.set(i, j, self.get(j, i));
            }
        }
        m
    }

    pub fn trace(&self) -> T {
        (0..self.dim.n()).map(|i| self.get(i, i)).sum()
    }

    /// Frobenius product over all d² entries.
    pub fn dot(&self, o: &Self) -> T {
        let d = self.dim.n();
        let mut s = T::zero();
        for i in 0..d {
            for j in 0..d {
                s += self.get(i, j) * o.get(i, j);
            }
        }
        s
    }

    pub fn norm_sq(&self) -> T {
        self.dot(self)
    }
}

impl<T: Real> Add for Matrix<T> {
    type Output = Self;
    fn add(mut self, o: Self) -> Self {
        for k in 0..4 {
            self.e[k] += o.e[k];
        }
        self
    }
}

impl<T: Real> Sub for Matrix<T> {
    type Output = Self;
    fn sub(mut self, o: Self) -> Self {
        for k in 0..4 {
            self.e[k] -= o.e[k];
        }
        self
    }
}

impl<T: Real> Mul<T> for Matrix<T> {
    type Output = Self;
    fn mul(mut self, c: T) -> Self {
        for k in 0..4 {
            self.e[k] *= c;
        }
        self
    }
}

/// Internal-variable vector α ∈ R^ℓ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InternalVec<T> {
    len: usize,
    e: [T; MAX_INTERNAL],
}

impl<T: Real> InternalVec<T> {
    pub fn zero(len: usize) -> Result<Self> {
        if len == 0 || len > MAX_INTERNAL {
            return Err(Error::Shape(format!("internal dimension must lie in 1..={MAX_INTERNAL}, got {len}")));
        }
        Ok(Self { len, e: [T::zero(); MAX_INTERNAL] })
    }

    pub fn from_slice(v: &[T]) -> Result<Self> {
        let mut a = Self::zero(v.len())?;
        a.e[..v.len()].copy_from_slice(v);
        Ok(a)
    }

    /// ℓ = 1 shorthand.
    pub fn scalar(x: T) -> Self {
        let mut e = [T::zero(); MAX_INTERNAL];
        e[0] = x;
        Self { len: 1, e }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.e[..self.len]
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.e[..self.len]
    }

    pub fn dot(&self, o: &Self) -> T {
        self.as_slice().iter().zip(o.as_slice()).map(|(a, b)| *a * *b).sum()
    }

    pub fn norm(&self) -> T {
        self.dot(self).sqrt()
    }

    pub fn scaled(mut self, c: T) -> Self {
        for x in self.as_mut_slice() {
            *x *= c;
        }
        self
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|x| x.is_finite())
    }
}

impl<T> std::ops::Index<usize> for InternalVec<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        assert!(i < self.len);
        &self.e[i]
    }
}

impl<T> std::ops::IndexMut<usize> for InternalVec<T> {
    fn index_mut(&mut self, i: usize) -> &mut T {
        assert!(i < self.len);
        &mut self.e[i]
    }
}

/// `(A + Aᵀ)/2`.
pub fn sym<T: Real>(a: &Matrix<T>) -> SymTensor<T> {
    let dim = a.dim();
    match dim {
        Dim::One => SymTensor::new1(a.get(0, 0)),
        Dim::Two => SymTensor::new2(a.get(0, 0), T::half() * (a.get(0, 1) + a.get(1, 0)), a.get(1, 1)),
    }
}

/// Splits `E` into deviatoric part, spherical part `(tr E/d)·I` and trace.
pub fn dev_sph_tr<T: Real>(e: &SymTensor<T>) -> (SymTensor<T>, SymTensor<T>, T) {
    let tr = e.trace();
    let sph = SymTensor::diag(e.dim(), tr / T::count(e.dim().n()));
    (*e - sph, sph, tr)
}

/// Gradient of a multi-component field at one point: one d-vector per
/// component plus the Frobenius weight of that component.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradBlock<T> {
    dim: Dim,
    comps: usize,
    g: [[T; 2]; MAX_GRAD_COMPONENTS],
    w: [T; MAX_GRAD_COMPONENTS],
}

impl<T: Real> GradBlock<T> {
    /// Unit-weight components (scalar or internal-variable fields).
    pub fn plain(dim: Dim, grads: &[[T; 2]]) -> Result<Self> {
        Self::weighted(dim, grads, &vec![T::one(); grads.len()])
    }

    /// Components of a packed symmetric-tensor field; off-diagonals count twice.
    pub fn sym_tensor(dim: Dim, grads: &[[T; 2]]) -> Result<Self> {
        if grads.len() != dim.sym_len() {
            return Err(Error::Shape(format!(
                "tensor gradient block needs {} components, got {}",
                dim.sym_len(),
                grads.len()
            )));
        }
        let w: Vec<T> = (0..grads.len()).map(|c| T::of(dim.sym_weight(c))).collect();
        Self::weighted(dim, grads, &w)
    }

    fn weighted(dim: Dim, grads: &[[T; 2]], w: &[T]) -> Result<Self> {
        if grads.is_empty() || grads.len() > MAX_GRAD_COMPONENTS {
            return Err(Error::Shape(format!(
                "gradient block needs 1..={MAX_GRAD_COMPONENTS} components, got {}",
                grads.len()
            )));
        }
        let mut b = Self { dim, comps: grads.len(), g: [[T::zero(); 2]; MAX_GRAD_COMPONENTS], w: [T::zero(); MAX_GRAD_COMPONENTS] };
        for (k, gk) in grads.iter().enumerate() {
            b.g[k] = *gk;
            if dim == Dim::One {
                b.g[k][1] = T::zero();
            }
            b.w[k] = w[k];
        }
        Ok(b)
    }

    #[inline]
    pub fn comps(&self) -> usize {
        self.comps
    }

    /// Frobenius norm squared `|G|²`.
    pub fn norm_sq(&self) -> T {
        let mut s = T::zero();
        for k in 0..self.comps {
            for i in 0..self.dim.n() {
                s += self.w[k] * self.g[k][i] * self.g[k][i];
            }
        }
        s
    }
}

/// `[GA ⊠ GB]_ij = Σ_components ∂_i a · ∂_j b`.
pub fn boxtimes<T: Real>(ga: &GradBlock<T>, gb: &GradBlock<T>) -> Result<Matrix<T>> {
    if ga.comps != gb.comps || ga.dim != gb.dim {
        return Err(Error::Shape(format!("boxtimes component mismatch: {} vs {}", ga.comps, gb.comps)));
    }
    let d = ga.dim.n();
    let mut m = Matrix::zero(ga.dim);
    for i in 0..d {
        for j in 0..d {
            let mut s = T::zero();
            for k in 0..ga.comps {
                s += ga.w[k] * ga.g[k][i] * gb.g[k][j];
            }
            m.set(i, j, s);
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sym_examples() {
        let i = Matrix::<f64>::identity(Dim::Two);
        assert_eq!(sym(&i), SymTensor::identity(Dim::Two));
        let a = Matrix::from_rows(Dim::Two, &[0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(sym(&a), SymTensor::new2(0.0, 0.5, 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let r: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let a = Matrix::from_rows(Dim::Two, &r).unwrap();
            let s = sym(&a);
            for i in 0..2 {
                for j in 0..2 {
                    assert!((s.get(i, j) - 0.5 * (r[i * 2 + j] + r[j * 2 + i])).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn dev_sph_examples() {
        let (dev, sph, tr) = dev_sph_tr(&SymTensor::<f64>::identity(Dim::Two));
        assert_eq!(dev, SymTensor::zero(Dim::Two));
        assert_eq!(sph, SymTensor::identity(Dim::Two));
        assert_eq!(tr, 2.0);

        let (dev, sph, tr) = dev_sph_tr(&SymTensor::<f64>::new2(0.02, 0.0, 0.0));
        assert!((tr - 0.02).abs() < 1e-17);
        assert!((sph.get(0, 0) - 0.01).abs() < 1e-17 && (sph.get(1, 1) - 0.01).abs() < 1e-17);
        assert!((dev.get(0, 0) - 0.01).abs() < 1e-17 && (dev.get(1, 1) + 0.01).abs() < 1e-17);

        let (dev, _, _) = dev_sph_tr(&SymTensor::new1(0.7));
        assert_eq!(dev.norm(), 0.0);
    }

    #[test]
    fn dimension_three_is_rejected() {
        assert!(Dim::new(3).is_err());
        assert!(Dim::new(0).is_err());
    }

    #[test]
    fn packed_frobenius_matches_full_matrix() {
        let e = SymTensor::new2(1.0, 2.0, -3.0);
        assert_eq!(e.norm_sq(), e.to_matrix().norm_sq());
    }

    #[test]
    fn boxtimes_examples() {
        let z = GradBlock::plain(Dim::Two, &[[0.0, 0.0]]).unwrap();
        assert_eq!(boxtimes(&z, &z).unwrap(), Matrix::zero(Dim::Two));
        let g = GradBlock::plain(Dim::Two, &[[1.0, 0.0]]).unwrap();
        assert_eq!(boxtimes(&g, &g).unwrap(), Matrix::from_rows(Dim::Two, &[1.0, 0.0, 0.0, 0.0]).unwrap());
        let g2 = GradBlock::plain(Dim::Two, &[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert!(boxtimes(&g, &g2).is_err());
    }

    #[test]
    fn boxtimes_trace_matches_double_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let grads: Vec<[f64; 2]> = (0..3).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
            let g = GradBlock::sym_tensor(Dim::Two, &grads).unwrap();
            let m = boxtimes(&g, &g).unwrap();
            // full 2x2x2 double sum over the unpacked tensor field
            let full = |k: usize| -> usize {
                match k {
                    0 => 0,
                    1 | 2 => 1,
                    _ => 2,
                }
            };
            let mut direct = 0.0;
            for kl in 0..4 {
                for i in 0..2 {
                    direct += grads[full(kl)][i].powi(2);
                }
            }
            assert!((m.trace() - direct).abs() <= 1e-14 * direct.max(1.0));
            assert!((m.trace() - g.norm_sq()).abs() <= 1e-14 * direct.max(1.0));
        }
    }
}
