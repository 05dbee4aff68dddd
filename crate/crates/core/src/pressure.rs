//! Elliptic problem for the pressure.
//!
//! Applying `∇^φ·` to the momentum equation and asking that `div^φ v` stay
//! zero gives, at interior nodes,
//!
//! ```text
//! ∇^φ·∇^φ q = ∇^φ·A + (∂_t∇^φ·) v,      A = −(v̄·∂̄ + V_𝐍∂₃)v + Σ_k (F_k·∇^φ)F_k,
//! ```
//!
//! where `(∂_t∇^φ·)` differentiates only the coefficients `1/∂₃φ`, `∂_τφ/∂₃φ`
//! (they move with `∂_tψ`). On `Σ` the regularised Dirichlet condition
//! `q = σℋ(ψ) + κ(1−Δ̄)²ψ + κ(1−Δ̄)(v·N)` holds; on the bottom the third
//! momentum component with `v₃ = 0` gives `∂₃^φ q = A₃`.
//!
//! The discrete operator is the product of the same dealiased flattened
//! gradient and divergence used everywhere else, so the discrete
//! `d/dt div^φ v` vanishes at interior nodes up to the solver tolerance.
//! It acts on the 2/3-band; modes outside the band are mapped by the
//! identity so the system stays non-singular.

use crate::calculus::{div_phi, grad_phi};
use crate::error::{Error, Result};
use crate::geometry::Geometry;
use crate::grid::{Field, Grid, VecField};
use crate::linalg::{gmres, DenseLu, SolveReport};
use crate::scalar::{idx, lit, Real};
use crate::state::{Model, State};
use num_complex::Complex;
use std::collections::BTreeMap;

/// Iteration controls for the pressure solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PressureSettings<T> {
    /// Relative residual target.
    pub tol: T,
    pub max_iter: usize,
    pub restart: usize,
}

impl<T: Real> Default for PressureSettings<T> {
    fn default() -> Self {
        PressureSettings { tol: lit(1e-10), max_iter: 500, restart: 40 }
    }
}

/// Per-mode inverse of the flat operator `∂₃² − |k|²` with the same boundary
/// rows (Dirichlet top, `∂₃` bottom).
#[derive(Debug)]
pub struct FlatPreconditioner<T> {
    nz: usize,
    lus: Vec<DenseLu<T>>,
    /// Index into `lus` for every spectral index, `None` outside the band.
    mode: Vec<Option<usize>>,
}

impl<T: Real> FlatPreconditioner<T> {
    pub fn new(grid: &Grid<T>) -> Result<Self> {
        let nz = grid.nz;
        let d = grid.dz_matrix();
        let mut d2 = vec![T::zero(); nz * nz];
        for i in 0..nz {
            for j in 0..nz {
                d2[i * nz + j] = (0..nz).map(|l| d[i * nz + l] * d[l * nz + j]).sum();
            }
        }
        let mut by_k2: BTreeMap<i64, usize> = BTreeMap::new();
        let mut lus = Vec::new();
        let mut mode = vec![None; grid.nx * grid.ny];
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                if !grid.keeps(i, j) {
                    continue;
                }
                let (k1, k2) = grid.wavenumber(i, j);
                let kk = k1 * k1 + k2 * k2;
                let slot = match by_k2.get(&kk) {
                    Some(&s) => s,
                    None => {
                        let k2f: T = idx(kk as usize);
                        let mut m = d2.clone();
                        for r in 0..nz {
                            m[r * nz + r] = m[r * nz + r] - k2f;
                        }
                        for c in 0..nz {
                            m[(nz - 1) * nz + c] = if c == nz - 1 { T::one() } else { T::zero() };
                            m[c] = d[c];
                        }
                        lus.push(DenseLu::new(m, nz)?);
                        by_k2.insert(kk, lus.len() - 1);
                        lus.len() - 1
                    }
                };
                mode[i + grid.nx * j] = Some(slot);
            }
        }
        Ok(FlatPreconditioner { nz, lus, mode })
    }

    pub fn apply(&self, grid: &Grid<T>, r: &Field<T>) -> Field<T> {
        let mut s = grid.forward(r);
        let n = grid.layer_len();
        let nz = self.nz;
        let mut re = vec![T::zero(); nz];
        let mut im = vec![T::zero(); nz];
        for (m, slot) in self.mode.iter().enumerate() {
            let Some(slot) = slot else { continue };
            for iz in 0..nz {
                let c = s.data[iz * n + m];
                re[iz] = c.re;
                im[iz] = c.im;
            }
            self.lus[*slot].solve_in_place(&mut re);
            self.lus[*slot].solve_in_place(&mut im);
            for iz in 0..nz {
                s.data[iz * n + m] = Complex::new(re[iz], im[iz]);
            }
        }
        grid.inverse(&s)
    }
}

/// The discrete pressure operator including its boundary rows.
pub fn apply_operator<T: Real>(grid: &Grid<T>, geom: &Geometry<T>, q: &Field<T>) -> Field<T> {
    let qp = grid.dealias(q);
    let g = grad_phi(grid, geom, &qp);
    let mut out = div_phi(grid, geom, &g);
    out.set_layer(grid.nz - 1, &qp.top());
    out.set_layer(0, &g[2].bottom());
    out.axpy(T::one(), q);
    out.axpy(-T::one(), &qp);
    out
}

/// `(∂_t∇^φ·)X`: the divergence with only its coefficients differentiated
/// in time.
pub fn dt_div_phi<T: Real>(grid: &Grid<T>, geom: &Geometry<T>, x: &VecField<T>) -> Field<T> {
    let mut raw = geom.dt_inv_j.hadamard(&grid.dz(&x[2]));
    raw.axpy(-T::one(), &geom.dt_c1.hadamard(&grid.dz(&x[0])));
    raw.axpy(-T::one(), &geom.dt_c2.hadamard(&grid.dz(&x[1])));
    grid.dealias(&raw)
}

/// Solves the pressure system with the given interior source, Dirichlet
/// data on `Σ` and Neumann data `∂₃^φq` on the bottom.
pub fn solve_elliptic<T: Real>(
    model: &Model<T>,
    geom: &Geometry<T>,
    interior: &Field<T>,
    top: &Field<T>,
    bottom: &Field<T>,
    guess: Option<&Field<T>>,
) -> Result<(Field<T>, SolveReport)> {
    let grid = &model.grid;
    if interior.nz != grid.nz || top.nz != 1 || bottom.nz != 1 {
        return Err(Error::ShapeMismatch("pressure data has the wrong shape".into()));
    }
    let mut rhs = grid.dealias(interior);
    rhs.set_layer(grid.nz - 1, &grid.dealias(top));
    rhs.set_layer(0, &grid.dealias(bottom));
    let wrap = |data: &[T]| Field { nx: grid.nx, ny: grid.ny, nz: grid.nz, data: data.to_vec() };
    let settings = model.pressure;
    let (x, report) = gmres(
        |x| apply_operator(grid, geom, &wrap(x)).data,
        |r| model.precond.apply(grid, &wrap(r)).data,
        &rhs.data,
        guess.map(|g| g.data.as_slice()),
        settings.tol,
        settings.max_iter,
        settings.restart,
    )?;
    Ok((grid.dealias(&wrap(&x)), report))
}

/// Pressure of a state in the nonlinear system.
pub fn solve_pressure<T: Real>(
    model: &Model<T>,
    state: &State<T>,
    geom: &Geometry<T>,
    guess: Option<&Field<T>>,
) -> Result<(Field<T>, SolveReport)> {
    let coeffs = crate::evolution::Coefficients::from_parts(model, state, geom.clone());
    let t = crate::evolution::evaluate(model, &coeffs, &state.v, &state.f, &state.psi, guess)?;
    Ok((t.q, t.solve))
}
