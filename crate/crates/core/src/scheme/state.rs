use crate::error::Result;
use crate::field::{apply_boundary, BcSpec, Field, Grid};
use crate::material::{chemical_potential, stress, Material, Moduli};
use crate::scalar::Real;
use crate::tensor::{InternalVec, SymTensor};

use super::ops::structural_stress;

/// All unknowns on one grid at one discrete time.
#[derive(Clone, Debug, PartialEq)]
pub struct State<T> {
    pub grid: Grid<T>,
    pub t: T,
    pub v: Field<T>,
    pub ee: Field<T>,
    pub ep: Field<T>,
    pub alpha: Field<T>,
    pub chi: Field<T>,
    pub mu: Field<T>,
    /// Cached `∂_E φ`.
    pub s: Field<T>,
    /// Cached structural stress, full `d×d` row-major.
    pub s_str: Field<T>,
}

impl<T: Real> State<T> {
    /// All fields zero with `ℓ` internal variables.
    pub fn zeros(grid: &Grid<T>, ell: usize) -> Self {
        let d = grid.d();
        Self {
            grid: grid.clone(),
            t: T::zero(),
            v: Field::vector(grid),
            ee: Field::sym(grid),
            ep: Field::sym(grid),
            alpha: Field::zeros(grid, ell),
            chi: Field::scalar(grid),
            mu: Field::scalar(grid),
            s: Field::sym(grid),
            s_str: Field::zeros(grid, d * d),
        }
    }

    /// Undamaged, unstrained, at rest, `χ = χ_eq`.
    pub fn ground(grid: &Grid<T>, m: &Moduli<T>, mat: &Material<T>) -> Result<Self> {
        let mut s = Self::zeros(grid, mat.ell);
        for k in 0..mat.ell {
            s.alpha.comp_mut(k).iter_mut().for_each(|x| *x = T::one());
        }
        s.chi.comp_mut(0).iter_mut().for_each(|x| *x = mat.biot.chi_eq);
        s.refresh(m, mat)?;
        Ok(s)
    }

    #[inline]
    pub fn ell(&self) -> usize {
        self.alpha.ncomp()
    }

    #[inline]
    pub fn sym_at(&self, f: &Field<T>, c: usize) -> SymTensor<T> {
        f.sym_at(self.grid.dim(), c)
    }

    #[inline]
    pub fn alpha_at(&self, c: usize) -> InternalVec<T> {
        alpha_at(&self.alpha, c)
    }

    /// Recomputes μ, S and S_str from the primary fields and fills the
    /// Neumann ghost layers.
    pub fn refresh(&mut self, m: &Moduli<T>, mat: &Material<T>) -> Result<()> {
        let g = self.grid.clone();
        for f in [&mut self.ee, &mut self.ep, &mut self.alpha, &mut self.chi] {
            apply_boundary(f, &BcSpec::HomNeumann, &g)?;
        }
        let dim = g.dim();
        for c in g.interior_indices() {
            let e = self.ee.sym_at(dim, c);
            let a = alpha_at(&self.alpha, c);
            let chi = self.chi.at(0, c);
            self.mu.set(0, c, chemical_potential(&e, &a, chi, &mat.biot));
            self.s.set_sym(c, &stress(&e, &a, chi, &mat.biot));
        }
        apply_boundary(&mut self.s, &BcSpec::HomNeumann, &g)?;
        self.s_str = structural_stress(&self.ep, &self.alpha, &self.ee, &self.chi, m, mat, &g);
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        let g = &self.grid;
        [&self.v, &self.ee, &self.ep, &self.alpha, &self.chi, &self.mu, &self.s, &self.s_str].iter().all(|f| f.all_finite(g))
            && self.t.is_finite()
    }

    /// Converts every field to another scalar type.
    pub fn cast<U: Real>(&self) -> State<U> {
        let grid = cast_grid(&self.grid);
        let cf = |f: &Field<T>| {
            let data = f.data().iter().map(|x| U::of(x.to64())).collect();
            Field::from_data(&grid, f.ncomp(), data).expect("same layout")
        };
        State {
            t: U::of(self.t.to64()),
            v: cf(&self.v),
            ee: cf(&self.ee),
            ep: cf(&self.ep),
            alpha: cf(&self.alpha),
            chi: cf(&self.chi),
            mu: cf(&self.mu),
            s: cf(&self.s),
            s_str: cf(&self.s_str),
            grid,
        }
    }
}

/// Reads the internal-variable vector at cell `c`.
#[inline]
pub fn alpha_at<T: Real>(alpha: &Field<T>, c: usize) -> InternalVec<T> {
    let mut a = InternalVec::zero(alpha.ncomp()).expect("valid ell");
    for k in 0..alpha.ncomp() {
        a[k] = alpha.at(k, c);
    }
    a
}

/// Same grid in another scalar type.
pub fn cast_grid<T: Real, U: Real>(g: &Grid<T>) -> Grid<U> {
    let d = g.d();
    let n: Vec<usize> = (0..d).map(|a| g.cells(a)).collect();
    let len: Vec<U> = (0..d).map(|a| U::of(g.length(a).to64())).collect();
    let per: Vec<bool> = (0..d).map(|a| g.is_periodic(a)).collect();
    Grid::new(g.dim(), &n, &len, &per).expect("valid grid")
}
