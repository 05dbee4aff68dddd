//! The flattening map `φ = x₃ + χ(x₃)ψ`, its Jacobian and the normals.
//!
//! Every coefficient the flattened operators need is precomputed here once
//! per surface, already projected onto the dealiased band so that the
//! operator kernels only ever multiply band-limited factors.

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, VecField};
use crate::scalar::{lit, to_f64, Real};

/// Default Jacobian floor below which a state is declared broken down.
pub const DEFAULT_JACOBIAN_FLOOR: f64 = 0.05;

/// Quintic smoothstep `6t⁵ − 15t⁴ + 10t³` and its derivatives on `[0, 1]`.
fn smoothstep<T: Real>(t: T) -> (T, T, T) {
    let t = t.max(T::zero()).min(T::one());
    let (c6, c10, c15, c30, c60): (T, T, T, T, T) = (lit(6.0), lit(10.0), lit(15.0), lit(30.0), lit(60.0));
    let t2 = t * t;
    let s = t2 * t * (t * (c6 * t - c15) + c10);
    let ds = c30 * t2 * (t - T::one()) * (t - T::one());
    let dds = c60 * t * (T::one() - t) * (T::one() - lit::<T>(2.0) * t);
    (s, ds, dds)
}

/// Vertical cutoff `χ(x₃)`: `0` near the bottom, `1` near the surface.
///
/// The ramp is a quintic smoothstep between `−b+δ₀` and `−δ₀`, so χ is C² and
/// flat on both plateaus. With `δ₀ = 0` the ramp spans the whole depth and χ
/// is a single polynomial of degree five; Chebyshev collocation then
/// differentiates it exactly, which is the default used by the solver.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cutoff<T> {
    pub b: T,
    pub delta0: T,
}

impl<T: Real> Cutoff<T> {
    /// Validates `0 ≤ δ₀ < b/2` and, when a slope bound is requested, that the
    /// ramp can honour it (`max|χ′| = 15/(8(b − 2δ₀))`).
    pub fn new(b: T, delta0: T, slope_bound: Option<T>) -> Result<Self> {
        if !(b > T::zero()) {
            return Err(Error::InvalidCutoff("b must be > 0".into()));
        }
        if !(delta0 >= T::zero() && delta0 < b / lit(2.0)) {
            return Err(Error::InvalidCutoff(format!("delta0 = {delta0} outside [0, b/2)")));
        }
        let c = Cutoff { b, delta0 };
        if let Some(bound) = slope_bound {
            if !(bound > T::zero()) {
                return Err(Error::InvalidCutoff("slope bound must be > 0".into()));
            }
            if c.max_slope() > bound {
                return Err(Error::InvalidCutoff(format!(
                    "slope bound {:.6} infeasible: ramp of length {:.6} needs at least {:.6}",
                    to_f64(bound),
                    to_f64(c.ramp_length()),
                    to_f64(c.max_slope())
                )));
            }
        }
        Ok(c)
    }

    pub fn ramp_length(&self) -> T {
        self.b - lit::<T>(2.0) * self.delta0
    }

    /// Exact `sup|χ′|`, attained mid-ramp.
    pub fn max_slope(&self) -> T {
        lit::<T>(15.0 / 8.0) / self.ramp_length()
    }

    fn t(&self, z: T) -> T {
        (z + self.b - self.delta0) / self.ramp_length()
    }

    pub fn chi(&self, z: T) -> T {
        smoothstep(self.t(z)).0
    }

    pub fn dchi(&self, z: T) -> T {
        smoothstep(self.t(z)).1 / self.ramp_length()
    }

    pub fn ddchi(&self, z: T) -> T {
        let l = self.ramp_length();
        smoothstep(self.t(z)).2 / (l * l)
    }
}

/// `χ(z)` for the given depth, plateau and optional slope bound.
pub fn cutoff_chi<T: Real>(z: T, b: T, delta0: T, slope_bound: Option<T>) -> Result<T> {
    if z < -b || z > T::zero() {
        return Err(Error::InvalidArgument(format!("z = {z} outside [-b, 0]")));
    }
    Ok(Cutoff::new(b, delta0, slope_bound)?.chi(z))
}

/// Surface normal `N = (−∂₁ψ, −∂₂ψ, 1)` and its length `√(1+|∇̄ψ|²)`.
pub fn surface_normals<T: Real>(grid: &Grid<T>, psi: &Field<T>) -> Result<(VecField<T>, Field<T>)> {
    if psi.nz != 1 {
        return Err(Error::ShapeMismatch("surface normals need a surface field".into()));
    }
    grid.check(psi)?;
    let (p1, p2) = grid.grad_h(psi);
    let len = p1.zip_map(&p2, |a, b| (T::one() + a * a + b * b).sqrt());
    let one = Field::constant(psi.nx, psi.ny, 1, T::one());
    Ok(([p1.scale(-T::one()), p2.scale(-T::one()), one], len))
}

/// Flattened geometry for one surface `ψ` and its velocity `∂_tψ`.
#[derive(Clone, Debug)]
pub struct Geometry<T> {
    pub psi: Field<T>,
    pub psi_t: Field<T>,
    /// `χ` and `χ′` on the vertical nodes.
    pub chi: Vec<T>,
    pub dchi: Vec<T>,
    pub phi: Field<T>,
    /// `∂₁φ = χ∂₁ψ`, `∂₂φ = χ∂₂ψ`.
    pub d1phi: Field<T>,
    pub d2phi: Field<T>,
    /// Jacobian `∂₃φ = 1 + χ′ψ`.
    pub d3phi: Field<T>,
    /// `∂_tφ = χ∂_tψ`.
    pub dtphi: Field<T>,
    /// Interior normal `𝐍 = (−∂₁φ, −∂₂φ, 1)`.
    pub normal: VecField<T>,
    /// Surface normal `N = 𝐍|_Σ` and `|N|`.
    pub n_surf: VecField<T>,
    pub n_len: Field<T>,
    /// Dealiased `1/∂₃φ` and `∂_τφ/∂₃φ`.
    pub inv_j: Field<T>,
    pub c1: Field<T>,
    pub c2: Field<T>,
    /// Time derivatives of the coefficients, driven by `∂_tψ`:
    /// `∂_t∂_τφ = χ∂_τ∂_tψ`, `∂_t∂₃φ = χ′∂_tψ`.
    pub dt_d1phi: Field<T>,
    pub dt_d2phi: Field<T>,
    pub dt_d3phi: Field<T>,
    /// Time derivatives of the dealiased coefficients `inv_j`, `c1`, `c2`.
    pub dt_inv_j: Field<T>,
    pub dt_c1: Field<T>,
    pub dt_c2: Field<T>,
    /// `min ∂₃φ` over the grid.
    pub c0: T,
}

/// Builds the flattened geometry, failing if `|ψ|_∞ > b/2` or if the
/// Jacobian falls to `floor` or below.
pub fn build_geometry<T: Real>(
    grid: &Grid<T>,
    cutoff: &Cutoff<T>,
    psi: &Field<T>,
    psi_t: &Field<T>,
    floor: T,
) -> Result<Geometry<T>> {
    if psi.nz != 1 || psi_t.nz != 1 {
        return Err(Error::ShapeMismatch("ψ and ∂_tψ must be surface fields".into()));
    }
    grid.check(psi)?;
    grid.check(psi_t)?;
    if cutoff.b != grid.b {
        return Err(Error::InvalidCutoff("cutoff depth differs from grid depth".into()));
    }
    let limit = grid.b / lit(2.0);
    let amp = psi.max_abs();
    if !psi.all_finite() || amp > limit {
        return Err(Error::AmplitudeTooLarge { amplitude: to_f64(amp), limit: to_f64(limit) });
    }

    let chi: Vec<T> = grid.z.iter().map(|&z| cutoff.chi(z)).collect();
    let dchi: Vec<T> = grid.z.iter().map(|&z| cutoff.dchi(z)).collect();

    let (p1, p2) = grid.grad_h(psi);
    let d1phi = grid.outer(&chi, &p1);
    let d2phi = grid.outer(&chi, &p2);
    let mut phi = grid.outer(&chi, psi);
    for (iz, &z) in grid.z.iter().enumerate() {
        phi.layer_mut(iz).iter_mut().for_each(|x| *x = *x + z);
    }
    let mut d3phi = grid.outer(&dchi, psi);
    d3phi.data.iter_mut().for_each(|x| *x = *x + T::one());
    let c0 = d3phi.min();
    if !(c0 > floor) {
        return Err(Error::DiffeomorphismBreakdown { min_d3phi: to_f64(c0), floor: to_f64(floor) });
    }
    let dtphi = grid.outer(&chi, psi_t);
    let (pt1, pt2) = grid.grad_h(psi_t);

    let inv_j = grid.dealias(&d3phi.map(|j| T::one() / j));
    let c1 = grid.mul(&d1phi, &inv_j);
    let c2 = grid.mul(&d2phi, &inv_j);
    let dt_d1phi = grid.outer(&chi, &pt1);
    let dt_d2phi = grid.outer(&chi, &pt2);
    let dt_d3phi = grid.outer(&dchi, psi_t);
    // d/dt P(1/J) = P(−∂_tJ/J²); the products below follow the same
    // projections as inv_j, c1, c2 so the time derivative is exact.
    let dt_inv_j = grid.dealias(&dt_d3phi.zip_map(&d3phi, |a, j| -a / (j * j)));
    let dt_c1 = grid.dealias(&dt_d1phi.hadamard(&inv_j).add(&d1phi.hadamard(&dt_inv_j)));
    let dt_c2 = grid.dealias(&dt_d2phi.hadamard(&inv_j).add(&d2phi.hadamard(&dt_inv_j)));
    let normal = [d1phi.scale(-T::one()), d2phi.scale(-T::one()), grid.volume_from_fn(|_, _, _| T::one())];
    let (n_surf, n_len) = surface_normals(grid, psi)?;

    Ok(Geometry {
        psi: psi.clone(),
        psi_t: psi_t.clone(),
        dt_d1phi,
        dt_d2phi,
        dt_d3phi,
        dt_inv_j,
        dt_c1,
        dt_c2,
        chi,
        dchi,
        phi,
        d1phi,
        d2phi,
        d3phi,
        dtphi,
        normal,
        n_surf,
        n_len,
        inv_j,
        c1,
        c2,
        c0,
    })
}

impl<T: Real> Geometry<T> {
    /// Flat geometry `ψ ≡ 0`.
    pub fn flat(grid: &Grid<T>, cutoff: &Cutoff<T>) -> Geometry<T> {
        let z = grid.surface_zeros();
        build_geometry(grid, cutoff, &z, &z, T::zero()).expect("flat geometry is always valid")
    }

    pub fn min_d3phi(&self) -> T {
        self.c0
    }
}
