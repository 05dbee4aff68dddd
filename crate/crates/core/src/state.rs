//! Unknowns `(v, F, q, ψ)`, the simulation context, constraint-compatible
//! initial data and constraint monitoring.

use crate::calculus::div_phi;
use crate::error::{Error, Result};
use crate::geometry::{build_geometry, Cutoff, Geometry, DEFAULT_JACOBIAN_FLOOR};
use crate::grid::{vec_zeros, Field, Grid, VecField};
use crate::pressure::{FlatPreconditioner, PressureSettings};
use crate::scalar::{lit, to_f64, Real};
use std::sync::Arc;

/// Physical and regularisation constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Params<T> {
    /// Surface tension `σ ≥ 0`.
    pub sigma: T,
    /// Artificial viscosity `κ ≥ 0`; `κ = 0` is the unregularised system.
    pub kappa: T,
    /// Slab depth.
    pub b: T,
    /// Cutoff plateau depth; `0` selects the full-depth polynomial ramp.
    pub delta0: T,
}

impl<T: Real> Params<T> {
    pub fn new(sigma: T, kappa: T, b: T) -> Self {
        Params { sigma, kappa, b, delta0: T::zero() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= T::zero()) {
            return Err(Error::InvalidArgument("sigma must be >= 0".into()));
        }
        if !(self.kappa >= T::zero()) {
            return Err(Error::InvalidArgument("kappa must be >= 0".into()));
        }
        if !(self.b > T::zero()) {
            return Err(Error::InvalidArgument("b must be > 0".into()));
        }
        Ok(())
    }
}

/// Everything that stays fixed during a run: grid, cutoff, constants and
/// solver settings.
#[derive(Clone, Debug)]
pub struct Model<T: Real> {
    pub grid: Grid<T>,
    pub cutoff: Cutoff<T>,
    pub params: Params<T>,
    pub pressure: PressureSettings<T>,
    /// Jacobian floor for breakdown detection.
    pub floor: T,
    pub(crate) precond: Arc<FlatPreconditioner<T>>,
}

impl<T: Real> Model<T> {
    pub fn new(grid: Grid<T>, params: Params<T>) -> Result<Self> {
        params.validate()?;
        if params.b != grid.b {
            return Err(Error::InvalidArgument("params.b differs from grid depth".into()));
        }
        let cutoff = Cutoff::new(params.b, params.delta0, None)?;
        let precond = Arc::new(FlatPreconditioner::new(&grid)?);
        Ok(Model {
            grid,
            cutoff,
            params,
            pressure: PressureSettings::default(),
            floor: lit(DEFAULT_JACOBIAN_FLOOR),
            precond,
        })
    }

    /// Same model with different constants (the grid and preconditioner are
    /// shared).
    pub fn with_params(&self, params: Params<T>) -> Result<Self> {
        params.validate()?;
        let mut m = self.clone();
        m.cutoff = Cutoff::new(params.b, params.delta0, None)?;
        m.params = params;
        Ok(m)
    }

    pub fn geometry(&self, psi: &Field<T>, psi_t: &Field<T>) -> Result<Geometry<T>> {
        build_geometry(&self.grid, &self.cutoff, psi, psi_t, self.floor)
    }
}

/// One snapshot of the unknowns.
#[derive(Clone, Debug, PartialEq)]
pub struct State<T> {
    pub t: T,
    pub v: VecField<T>,
    /// Deformation tensor by columns: `f[k][i] = F_{ik}`.
    pub f: [VecField<T>; 3],
    pub q: Field<T>,
    pub psi: Field<T>,
    /// Cached `∂_tψ = v·N`.
    pub psi_t: Field<T>,
}

impl<T: Real> State<T> {
    pub fn zeros(grid: &Grid<T>) -> Self {
        State {
            t: T::zero(),
            v: vec_zeros(grid),
            f: [vec_zeros(grid), vec_zeros(grid), vec_zeros(grid)],
            q: grid.volume_zeros(),
            psi: grid.surface_zeros(),
            psi_t: grid.surface_zeros(),
        }
    }

    /// Flat rest state with constant horizontal deformation columns
    /// `F₁ = (a,0,0)`, `F₂ = (0,a,0)`, `F₃ = 0`.
    pub fn flat_rest(grid: &Grid<T>, a: T) -> Self {
        let mut s = Self::zeros(grid);
        s.f[0][0] = grid.volume_from_fn(|_, _, _| a);
        s.f[1][1] = grid.volume_from_fn(|_, _, _| a);
        s
    }

    /// All volume and surface fields, in a fixed order.
    pub fn fields(&self) -> Vec<&Field<T>> {
        let mut out: Vec<&Field<T>> = self.v.iter().collect();
        for col in &self.f {
            out.extend(col.iter());
        }
        out.push(&self.psi);
        out
    }

    pub fn all_finite(&self) -> bool {
        self.fields().iter().all(|f| f.all_finite()) && self.q.all_finite()
    }
}

/// `v·N` on `Σ`, dealiased.
pub fn kinematic_velocity<T: Real>(grid: &Grid<T>, v: &VecField<T>, n: &VecField<T>) -> Field<T> {
    let top = |i: usize| v[i].top();
    let mut raw = top(0).hadamard(&n[0]);
    raw.axpy(T::one(), &top(1).hadamard(&n[1]));
    let mut out = grid.dealias(&raw);
    out.add_assign(&top(2).hadamard(&n[2]));
    out
}

/// Horizontal data for one deformation column: `J F̄ = mean + ∇^⊥ζ`.
#[derive(Clone, Debug, PartialEq)]
pub struct ElasticColumn<T> {
    pub mean: [T; 2],
    /// Optional stream function `ζ` on the volume grid.
    pub stream: Option<Field<T>>,
}

impl<T: Real> ElasticColumn<T> {
    pub fn zero() -> Self {
        ElasticColumn { mean: [T::zero(); 2], stream: None }
    }
}

/// Inputs to [`build_initial_data`].
#[derive(Clone, Debug, PartialEq)]
pub struct InitialData<T> {
    pub psi0: Field<T>,
    /// Vector potential `A` on the reference slab; the velocity is the
    /// Piola pullback of `curl A`. `A₁, A₂` must vanish on the bottom.
    pub potential: Option<VecField<T>>,
    pub columns: [ElasticColumn<T>; 3],
}

/// Builds `(v₀, F⁰, q₀, ψ₀)` satisfying the constraints.
///
/// With `W = curl A` (flat curl), the velocity is defined through
/// `(J v₁, J v₂, v·𝐍) = W`. Since `∇^φ·X = J⁻¹[∂₁(JX₁) + ∂₂(JX₂) + ∂₃(X·𝐍)]`,
/// `v` is divergence free. Each column `F_k` is tangent to the level sets of
/// `φ` (`F_k·𝐍 = 0` everywhere) with `J F̄_k = c̄_k + ∇^⊥ζ_k`, which makes it
/// divergence free as well and gives `F_{3k} = 0` on the bottom.
pub fn build_initial_data<T: Real>(model: &Model<T>, data: &InitialData<T>) -> Result<State<T>> {
    let grid = &model.grid;
    let b = model.params.b;
    let amp = data.psi0.max_abs();
    let limit = b / lit(3.0);
    if !(amp < limit) {
        return Err(Error::AmplitudeTooLarge { amplitude: to_f64(amp), limit: to_f64(limit) });
    }
    let psi = grid.dealias(&data.psi0);
    let geom0 = model.geometry(&psi, &grid.surface_zeros())?;
    let inv_j = &geom0.inv_j;

    let v = match &data.potential {
        None => vec_zeros(grid),
        Some(a) => {
            let (_, a1_2) = grid.grad_h(&a[0]);
            let (a2_1, _) = grid.grad_h(&a[1]);
            let (a3_1, a3_2) = grid.grad_h(&a[2]);
            let w1 = a3_2.sub(&grid.dz(&a[1]));
            let w2 = grid.dz(&a[0]).sub(&a3_1);
            let w3 = a2_1.sub(&a1_2);
            let v1 = grid.mul(&w1, inv_j);
            let v2 = grid.mul(&w2, inv_j);
            let mut v3 = w3;
            let mut tang = v1.hadamard(&geom0.d1phi);
            tang.axpy(T::one(), &v2.hadamard(&geom0.d2phi));
            v3.add_assign(&grid.dealias(&tang));
            [v1, v2, v3]
        }
    };

    let mut f: [VecField<T>; 3] = [vec_zeros(grid), vec_zeros(grid), vec_zeros(grid)];
    for (k, col) in data.columns.iter().enumerate() {
        let mut h1 = grid.volume_from_fn(|_, _, _| col.mean[0]);
        let mut h2 = grid.volume_from_fn(|_, _, _| col.mean[1]);
        if let Some(zeta) = &col.stream {
            let (z1, z2) = grid.grad_h(zeta);
            h1.axpy(-T::one(), &z2);
            h2.add_assign(&z1);
        }
        let f1 = grid.mul(&h1, inv_j);
        let f2 = grid.mul(&h2, inv_j);
        let mut f3 = f1.hadamard(&geom0.d1phi);
        f3.axpy(T::one(), &f2.hadamard(&geom0.d2phi));
        f[k] = [f1, f2, grid.dealias(&f3)];
    }

    let psi_t = kinematic_velocity(grid, &v, &geom0.n_surf);
    let mut state = State { t: T::zero(), v, f, q: grid.volume_zeros(), psi, psi_t };
    let geom = model.geometry(&state.psi, &state.psi_t)?;
    let report = constraint_report(grid, &state, &geom);
    let tol = 1e-8;
    for (name, value) in report.named() {
        if !(value <= tol) {
            return Err(Error::ConstraintResidualTooLarge { name, value, tol });
        }
    }
    let (q, _) = crate::pressure::solve_pressure(model, &state, &geom, None)?;
    state.q = q;
    Ok(state)
}

/// Constraint residuals of a state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstraintReport {
    pub r_divv: f64,
    pub r_divf: f64,
    pub r_fn: f64,
    pub r_bottom: f64,
}

impl ConstraintReport {
    pub fn named(&self) -> [(&'static str, f64); 4] {
        [("r_divv", self.r_divv), ("r_divF", self.r_divf), ("r_FN", self.r_fn), ("r_bottom", self.r_bottom)]
    }

    pub fn max(&self) -> f64 {
        self.r_divv.max(self.r_divf).max(self.r_fn).max(self.r_bottom)
    }
}

pub fn constraint_report<T: Real>(grid: &Grid<T>, state: &State<T>, geom: &Geometry<T>) -> ConstraintReport {
    let r_divv = to_f64(div_phi(grid, geom, &state.v).max_abs());
    let mut r_divf = 0.0f64;
    let mut r_fn = 0.0f64;
    let mut r_bottom = to_f64(state.v[2].bottom().max_abs());
    for col in &state.f {
        r_divf = r_divf.max(to_f64(div_phi(grid, geom, col).max_abs()));
        let mut fn_ = col[0].top().hadamard(&geom.n_surf[0]);
        fn_.axpy(T::one(), &col[1].top().hadamard(&geom.n_surf[1]));
        fn_.add_assign(&col[2].top());
        r_fn = r_fn.max(to_f64(fn_.max_abs()));
        r_bottom = r_bottom.max(to_f64(col[2].bottom().max_abs()));
    }
    ConstraintReport { r_divv, r_divf, r_fn, r_bottom }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    fn model(n: usize, nz: usize) -> Model<f64> {
        Model::new(make_grid(n, n, nz, 1.0).unwrap(), Params::new(0.5, 0.1, 1.0)).unwrap()
    }

    #[test]
    fn flat_equilibrium_is_clean() {
        let m = model(8, 9);
        let mut data = InitialData {
            psi0: m.grid.surface_zeros(),
            potential: None,
            columns: [ElasticColumn::zero(), ElasticColumn::zero(), ElasticColumn::zero()],
        };
        data.columns[0].mean = [0.7, 0.0];
        data.columns[1].mean = [0.0, 0.7];
        let s = build_initial_data(&m, &data).unwrap();
        let geom = m.geometry(&s.psi, &s.psi_t).unwrap();
        let r = constraint_report(&m.grid, &s, &geom);
        assert!(r.max() <= 1e-14, "{r:?}");
        assert!(s.q.max_abs() <= 1e-12);
        assert_eq!(s, {
            let mut e = State::flat_rest(&m.grid, 0.7);
            e.q = s.q.clone();
            e
        });
    }

    #[test]
    fn curved_data_satisfies_constraints() {
        let m = model(32, 33);
        let g = &m.grid;
        let data = InitialData {
            psi0: g.surface_from_fn(|x, _| 0.05 * x.sin()),
            potential: Some([
                g.volume_from_fn(|_, y, z| 0.1 * (z + 1.0) * y.cos()),
                g.volume_from_fn(|x, _, z| 0.2 * (z + 1.0) * x.sin()),
                g.volume_from_fn(|x, y, z| 0.1 * (x + y).cos() * z),
            ]),
            columns: [
                ElasticColumn { mean: [1.0, 0.0], stream: Some(g.volume_from_fn(|_, y, _| 0.1 * y.cos())) },
                ElasticColumn { mean: [0.0, 1.0], stream: Some(g.volume_from_fn(|x, _, z| 0.1 * x.cos() * z)) },
                ElasticColumn::zero(),
            ],
        };
        let s = build_initial_data(&m, &data).unwrap();
        let geom = m.geometry(&s.psi, &s.psi_t).unwrap();
        let r = constraint_report(g, &s, &geom);
        assert!(r.max() <= 1e-8, "{r:?}");
        assert!(s.psi_t.max_abs() > 0.1);
    }

    #[test]
    fn flat_pullback_is_the_physical_curl() {
        let m = model(16, 17);
        let g = &m.grid;
        let data = InitialData {
            psi0: g.surface_zeros(),
            potential: Some([g.volume_zeros(), g.volume_from_fn(|x, _, z| (z + 1.0) * x.sin()), g.volume_zeros()]),
            columns: [ElasticColumn::zero(), ElasticColumn::zero(), ElasticColumn::zero()],
        };
        let s = build_initial_data(&m, &data).unwrap();
        // curl(0, (z+1) sin x, 0) = (−sin x, 0, (z+1) cos x)
        assert!(s.v[0].add(&g.volume_from_fn(|x, _, _| x.sin())).max_abs() < 1e-13);
        assert!(s.v[1].max_abs() < 1e-13);
        assert!(s.v[2].sub(&g.volume_from_fn(|x, _, z| (z + 1.0) * x.cos())).max_abs() < 1e-13);
    }

    #[test]
    fn amplitude_precondition() {
        let m = model(8, 9);
        let data = InitialData {
            psi0: m.grid.surface_from_fn(|x, _| 0.4 * x.sin()),
            potential: None,
            columns: [ElasticColumn::zero(), ElasticColumn::zero(), ElasticColumn::zero()],
        };
        assert!(matches!(build_initial_data(&m, &data), Err(Error::AmplitudeTooLarge { .. })));
    }

    #[test]
    fn broken_state_is_detected() {
        let m = model(16, 17);
        let g = &m.grid;
        let psi = g.surface_from_fn(|x, _| 0.1 * x.sin());
        let geom = m.geometry(&psi, &g.surface_zeros()).unwrap();
        let mut s = State::zeros(g);
        s.psi = psi;
        // F₁ = N on Σ (extended constant in depth) gives F₁·N = |N|² ≥ 1
        for i in 0..3 {
            s.f[0][i] = g.extend_const(&geom.n_surf[i]);
        }
        let r = constraint_report(g, &s, &geom);
        assert!(r.r_fn >= 1.0);
        let n2 = geom.n_len.hadamard(&geom.n_len).max();
        assert!((r.r_fn - n2).abs() < 1e-12);
    }
}
