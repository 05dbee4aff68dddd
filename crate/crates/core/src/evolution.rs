//! Semi-discrete right-hand side of the κ-regularised system and explicit
//! RK4 time stepping.
//!
//! The tendency is evaluated by one kernel, [`evaluate`], that takes the
//! transport and deformation coefficients as a separate [`Coefficients`]
//! value. The nonlinear system uses coefficients built from the unknowns
//! themselves; the linearised (Picard) system passes frozen ones.

use crate::calculus::{grad_phi, mean_curvature, multiplier, normal_transport, normal_transport_static, Symbol};
use crate::error::{Error, Result};
use crate::geometry::Geometry;
use crate::grid::{Field, Grid, VecField};
use crate::linalg::SolveReport;
use crate::pressure::{dt_div_phi, solve_elliptic};
use crate::scalar::{idx, lit, to_f64, Real};
use crate::diagnostics::{energy_e0, energy_e4, EnergyRecord};
use crate::state::{constraint_report, kinematic_velocity, Model, State};

/// Coefficients of the transport/deformation operators and the boundary
/// data that do not depend on the unknowns.
#[derive(Clone, Debug)]
pub struct Coefficients<T> {
    /// Geometry `φ̊` (with `∂_tψ̊`) in which all derivatives are taken.
    pub geom: Geometry<T>,
    /// Horizontal transport velocity `v̊₁, v̊₂`.
    pub transport_h: [Field<T>; 2],
    /// Vertical transport `V = (v̊·𝐍 − ∂_tφ̊)/∂₃φ̊`.
    pub transport_n: Field<T>,
    /// Directional fields `𝔉̊_k` and their contravariant third components
    /// `(𝔉̊_k·𝐍̊)/∂₃φ̊`.
    pub tensor: [VecField<T>; 3],
    pub tensor_n: [Field<T>; 3],
    /// Normal used in the kinematic condition `∂_tψ = v·N̊`.
    pub n_kin: VecField<T>,
    /// `σℋ(ψ̊)`.
    pub surface_force: Field<T>,
}

impl<T: Real> Coefficients<T> {
    /// Self-consistent coefficients of the nonlinear system.
    pub fn nonlinear(model: &Model<T>, state: &State<T>) -> Result<Self> {
        let grid = &model.grid;
        let (n_surf, _) = crate::geometry::surface_normals(grid, &state.psi)?;
        let psi_t = kinematic_velocity(grid, &state.v, &n_surf);
        let geom = model.geometry(&state.psi, &psi_t)?;
        Ok(Self::from_parts(model, state, geom))
    }

    /// Nonlinear coefficients with a prebuilt geometry.
    pub fn from_parts(model: &Model<T>, state: &State<T>, geom: Geometry<T>) -> Self {
        let grid = &model.grid;
        let transport_n = normal_transport(grid, &geom, &state.v);
        let tensor_n = [0, 1, 2].map(|k| normal_transport_static(grid, &geom, &state.f[k]));
        let surface_force = mean_curvature(grid, &state.psi).scale(model.params.sigma);
        Coefficients {
            transport_h: [state.v[0].clone(), state.v[1].clone()],
            transport_n,
            tensor: state.f.clone(),
            tensor_n,
            n_kin: geom.n_surf.clone(),
            surface_force,
            geom,
        }
    }
}

/// Time derivatives of the unknowns plus the pressure that produced them.
#[derive(Clone, Debug)]
pub struct Tendency<T> {
    pub dv: VecField<T>,
    pub df: [VecField<T>; 3],
    pub dpsi: Field<T>,
    pub q: Field<T>,
    /// `κ|⟨∂̄⟩∂_tψ|²_{L²(Σ)}`, the rate at which the regularisation dissipates.
    pub dissipation_rate: T,
    pub solve: SolveReport,
    /// Interior `A = −(transport) v + Σ(𝔉̊_k·∇^φ)F_k` before the pressure.
    pub accel: VecField<T>,
}

struct Partials<T> {
    d1: Field<T>,
    d2: Field<T>,
    d3: Field<T>,
}

fn partials<T: Real>(grid: &Grid<T>, f: &Field<T>) -> Partials<T> {
    let (d1, d2) = grid.grad_h(f);
    Partials { d1, d2, d3: grid.dz(f) }
}

/// `a₁∂₁g + a₂∂₂g + a₃∂₃g`, unprojected.
fn contract<T: Real>(a1: &Field<T>, a2: &Field<T>, a3: &Field<T>, p: &Partials<T>) -> Field<T> {
    let mut out = a1.hadamard(&p.d1);
    out.axpy(T::one(), &a2.hadamard(&p.d2));
    out.axpy(T::one(), &a3.hadamard(&p.d3));
    out
}

/// Evaluates the tendency of `(v, F, ψ)` under the given coefficients,
/// solving for the pressure on the way.
pub fn evaluate<T: Real>(
    model: &Model<T>,
    c: &Coefficients<T>,
    v: &VecField<T>,
    f: &[VecField<T>; 3],
    psi: &Field<T>,
    guess: Option<&Field<T>>,
) -> Result<Tendency<T>> {
    let grid = &model.grid;
    let geom = &c.geom;
    let [th1, th2] = &c.transport_h;
    let tn = &c.transport_n;
    let pv: Vec<Partials<T>> = v.iter().map(|x| partials(grid, x)).collect();
    let pf: Vec<Vec<Partials<T>>> = f.iter().map(|col| col.iter().map(|x| partials(grid, x)).collect()).collect();

    let mut accel: Vec<Field<T>> = Vec::with_capacity(3);
    for i in 0..3 {
        let mut raw = contract(th1, th2, tn, &pv[i]).scale(-T::one());
        for k in 0..3 {
            raw.add_assign(&contract(&c.tensor[k][0], &c.tensor[k][1], &c.tensor_n[k], &pf[k][i]));
        }
        accel.push(grid.dealias(&raw));
    }
    let accel: VecField<T> = [accel[0].clone(), accel[1].clone(), accel[2].clone()];

    let mut df: [VecField<T>; 3] = std::array::from_fn(|_| std::array::from_fn(|_| grid.volume_zeros()));
    for (k, col) in df.iter_mut().enumerate() {
        for (i, out) in col.iter_mut().enumerate() {
            let mut raw = contract(&c.tensor[k][0], &c.tensor[k][1], &c.tensor_n[k], &pv[i]);
            raw.axpy(-T::one(), &contract(th1, th2, tn, &pf[k][i]));
            *out = grid.dealias(&raw);
        }
        col[2].fill_layer(0, T::zero());
    }

    let dpsi = kinematic_velocity(grid, v, &c.n_kin);
    let kappa = model.params.kappa;
    let mut top = c.surface_force.clone();
    if kappa != T::zero() {
        top.axpy(kappa, &multiplier(grid, psi, Symbol::OneMinusLapSq));
        top.axpy(kappa, &multiplier(grid, &dpsi, Symbol::OneMinusLap));
    }
    let interior = crate::calculus::div_phi(grid, geom, &accel).add(&dt_div_phi(grid, geom, v));
    let bottom = accel[2].bottom();
    let (q, solve) = solve_elliptic(model, geom, &interior, &top, &bottom, guess)?;

    let gq = grad_phi(grid, geom, &q);
    let mut dv: VecField<T> = [accel[0].sub(&gq[0]), accel[1].sub(&gq[1]), accel[2].sub(&gq[2])];
    dv[2].fill_layer(0, T::zero());

    let dissipation_rate = if kappa == T::zero() {
        T::zero()
    } else {
        kappa * crate::calculus::surface_quadratic(grid, &dpsi, |k1, k2| Symbol::OneMinusLap.eval(k1, k2))
    };
    Ok(Tendency { dv, df, dpsi, q, dissipation_rate, solve, accel })
}

/// Tendency of the nonlinear κ-system at `state`.
pub fn rhs<T: Real>(model: &Model<T>, state: &State<T>) -> Result<Tendency<T>> {
    let c = Coefficients::nonlinear(model, state)?;
    evaluate(model, &c, &state.v, &state.f, &state.psi, Some(&state.q))
}

/// Discrete `d/dt div^φ v` at interior nodes for a computed tendency; zero
/// up to the pressure-solver tolerance.
pub fn divergence_rate<T: Real>(model: &Model<T>, c: &Coefficients<T>, v: &VecField<T>, t: &Tendency<T>) -> T {
    let grid = &model.grid;
    let mut r = crate::calculus::div_phi(grid, &c.geom, &t.dv).add(&dt_div_phi(grid, &c.geom, v));
    r.fill_layer(0, T::zero());
    r.fill_layer(grid.nz - 1, T::zero());
    r.max_abs()
}

/// Stable time step:
/// `safety · min(dx/max(|v| + max_j|F_j|), √(dx³/(2πσ)), dx²/(1 + κk⁴dx²))`,
/// the last branch only when `κ > 0`.
pub fn cfl_dt<T: Real>(model: &Model<T>, state: &State<T>, safety: T) -> Result<T> {
    if !(safety > T::zero() && safety <= T::one()) {
        return Err(Error::InvalidTimeStep("safety factor must lie in (0, 1]".into()));
    }
    let grid = &model.grid;
    let dx = grid.dx_min();
    let n = grid.layer_len() * grid.nz;
    let mut speed = T::zero();
    for p in 0..n {
        let vmag = (0..3).map(|i| state.v[i].data[p] * state.v[i].data[p]).sum::<T>().sqrt();
        let fmax = (0..3)
            .map(|k| (0..3).map(|i| state.f[k][i].data[p] * state.f[k][i].data[p]).sum::<T>().sqrt())
            .fold(T::zero(), T::max);
        let s = vmag + fmax;
        if !s.is_finite() {
            return Err(Error::InvalidTimeStep("non-finite speed".into()));
        }
        speed = speed.max(s);
    }
    let mut dt = T::infinity();
    if speed > T::zero() {
        dt = dt.min(dx / speed);
    }
    let sigma = model.params.sigma;
    if sigma > T::zero() {
        dt = dt.min((dx * dx * dx / (T::TAU() * sigma)).sqrt());
    }
    let kappa = model.params.kappa;
    if kappa > T::zero() {
        let kmax: T = idx(grid.k_max_dealiased());
        let k4 = kmax * kmax * kmax * kmax;
        dt = dt.min(dx * dx / (T::one() + kappa * k4 * dx * dx));
    }
    if !dt.is_finite() {
        return Err(Error::InvalidTimeStep("all speeds vanish and σ = κ = 0".into()));
    }
    Ok(safety * dt)
}

fn combine<T: Real>(base: &State<T>, tend: &Tendency<T>, h: T) -> State<T> {
    let mut s = base.clone();
    for i in 0..3 {
        s.v[i].axpy(h, &tend.dv[i]);
        for k in 0..3 {
            s.f[k][i].axpy(h, &tend.df[k][i]);
        }
    }
    s.psi.axpy(h, &tend.dpsi);
    s.q = tend.q.clone();
    s.t = base.t + h;
    s
}

/// Result of one RK4 step.
#[derive(Clone, Debug)]
pub struct Step<T> {
    pub state: State<T>,
    /// `∫κ|⟨∂̄⟩∂_tψ|²` over the step, integrated with the same RK4 weights.
    pub dissipation: T,
    /// Tendency at the new state (its pressure is `state.q`).
    pub tendency: Tendency<T>,
}

/// One classical RK4 step starting from a known tendency `k1` at `state`.
pub fn advance<T: Real>(model: &Model<T>, state: &State<T>, k1: &Tendency<T>, dt: T) -> Result<Step<T>> {
    if !(dt >= T::zero()) || !dt.is_finite() {
        return Err(Error::InvalidTimeStep(format!("dt = {dt}")));
    }
    let half = dt / lit(2.0);
    let s2 = combine(state, k1, half);
    let k2 = rhs(model, &s2)?;
    let s3 = combine(state, &k2, half);
    let k3 = rhs(model, &s3)?;
    let s4 = combine(state, &k3, dt);
    let k4 = rhs(model, &s4)?;

    let w = dt / lit(6.0);
    let two: T = lit(2.0);
    let mut next = state.clone();
    for i in 0..3 {
        let upd = |a: &Field<T>, b: &Field<T>, c: &Field<T>, d: &Field<T>| {
            let mut s = a.clone();
            s.axpy(two, b);
            s.axpy(two, c);
            s.add_assign(d);
            s
        };
        next.v[i].axpy(w, &upd(&k1.dv[i], &k2.dv[i], &k3.dv[i], &k4.dv[i]));
        for k in 0..3 {
            next.f[k][i].axpy(w, &upd(&k1.df[k][i], &k2.df[k][i], &k3.df[k][i], &k4.df[k][i]));
        }
    }
    let mut dpsi = k1.dpsi.clone();
    dpsi.axpy(two, &k2.dpsi);
    dpsi.axpy(two, &k3.dpsi);
    dpsi.add_assign(&k4.dpsi);
    next.psi.axpy(w, &dpsi);
    next.t = state.t + dt;
    next.q = k4.q.clone();
    let dissipation =
        w * (k1.dissipation_rate + two * k2.dissipation_rate + two * k3.dissipation_rate + k4.dissipation_rate);

    let tendency = rhs(model, &next)?;
    next.q = tendency.q.clone();
    next.psi_t = tendency.dpsi.clone();
    if !next.all_finite() {
        return Err(Error::InvalidTimeStep("state became non-finite".into()));
    }
    Ok(Step { state: next, dissipation, tendency })
}

/// One RK4 step of the nonlinear κ-system.
pub fn step_rk4<T: Real>(model: &Model<T>, state: &State<T>, dt: T) -> Result<State<T>> {
    let k1 = rhs(model, state)?;
    Ok(advance(model, state, &k1, dt)?.state)
}

/// Controls for [`run`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunOptions<T> {
    pub t_final: T,
    /// CFL safety factor in `(0, 1]`.
    pub safety: T,
    /// Diagnostics are recorded every `cadence` steps (and at the end).
    pub cadence: usize,
    /// Fixed step instead of the CFL step; the last step is shortened to
    /// land on `t_final`.
    pub fixed_dt: Option<T>,
    /// Compute `E₄^κ` for the diagnostic rows.
    pub with_e4: bool,
}

impl<T: Real> RunOptions<T> {
    pub fn new(t_final: T) -> Self {
        RunOptions { t_final, safety: lit(0.5), cadence: 1, fixed_dt: None, with_e4: false }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_final > T::zero()) || !self.t_final.is_finite() {
            return Err(Error::InvalidArgument("t_final must be > 0".into()));
        }
        if !(self.safety > T::zero() && self.safety <= T::one()) {
            return Err(Error::InvalidArgument("safety must lie in (0, 1]".into()));
        }
        if self.cadence == 0 {
            return Err(Error::InvalidArgument("cadence must be >= 1".into()));
        }
        if let Some(dt) = self.fixed_dt {
            if !(dt > T::zero()) || !dt.is_finite() {
                return Err(Error::InvalidArgument("fixed dt must be > 0".into()));
            }
        }
        Ok(())
    }
}

/// One row of `diag.csv`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagRow {
    pub step: usize,
    pub t: f64,
    pub e0: f64,
    pub e4: f64,
    pub r_divv: f64,
    pub r_divf: f64,
    pub r_fn: f64,
    pub min_d3phi: f64,
    pub dt: f64,
    pub energy: EnergyRecord,
}

impl DiagRow {
    pub const HEADER: &'static str = "t,E0,E4,r_divv,r_divF,r_FN,min_d3phi,dt";

    pub fn csv(&self) -> String {
        format!(
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
            self.t, self.e0, self.e4, self.r_divv, self.r_divf, self.r_fn, self.min_d3phi, self.dt
        )
    }
}

/// Where and why a run stopped early.
#[derive(Clone, Debug, PartialEq)]
pub struct Breakdown {
    pub t: f64,
    pub step: usize,
    pub cause: String,
}

/// Outcome of [`run`].
#[derive(Clone, Debug)]
pub struct Trajectory<T> {
    pub rows: Vec<DiagRow>,
    pub final_state: State<T>,
    pub steps: usize,
    pub breakdown: Option<Breakdown>,
    pub dissipated: T,
}

impl<T: Real> Trajectory<T> {
    /// `max_t |E₀(t) − E₀(0)| / E₀(0)` over the recorded rows.
    pub fn max_relative_drift(&self) -> f64 {
        let e = self.rows.first().map_or(0.0, |r| r.e0);
        self.rows.iter().map(|r| ((r.e0 - e) / e).abs()).fold(0.0, f64::max)
    }
}

/// Diagnostics of a state; `psi_t` must be the kinematic velocity.
pub fn diagnose<T: Real>(model: &Model<T>, state: &State<T>, dissipated: T, step: usize, dt: T) -> Result<DiagRow> {
    let geom = model.geometry(&state.psi, &state.psi_t)?;
    let energy = energy_e0(model, state, &geom, dissipated);
    let c = constraint_report(&model.grid, state, &geom);
    Ok(DiagRow {
        step,
        t: to_f64(state.t),
        e0: energy.e0,
        e4: f64::NAN,
        r_divv: c.r_divv,
        r_divf: c.r_divf,
        r_fn: c.r_fn,
        min_d3phi: to_f64(geom.min_d3phi()),
        dt: to_f64(dt),
        energy,
    })
}

/// Integrates the κ-system from `initial` to `opts.t_final`.
///
/// A geometric breakdown or solver failure ends the run early and is
/// reported in [`Trajectory::breakdown`]; the rows up to that point are
/// kept. `on_step` sees every accepted state (including the initial one)
/// and may abort the run by returning an error.
pub fn run<T: Real>(
    model: &Model<T>,
    initial: &State<T>,
    opts: &RunOptions<T>,
    mut on_step: impl FnMut(usize, &State<T>) -> Result<()>,
) -> Result<Trajectory<T>> {
    opts.validate()?;
    let mut state = initial.clone();
    let mut k1 = rhs(model, &state)?;
    state.q = k1.q.clone();
    state.psi_t = k1.dpsi.clone();
    let mut dissipated = T::zero();
    let mut window: Vec<State<T>> = Vec::new();
    let mut rows = Vec::new();
    let mut step = 0usize;
    let mut breakdown = None;

    let planned = |s: &State<T>| -> Result<T> {
        match opts.fixed_dt {
            Some(dt) => Ok(dt),
            None => cfl_dt(model, s, opts.safety),
        }
    };
    let e4_of = |window: &[State<T>]| -> f64 {
        if !opts.with_e4 || window.is_empty() {
            return f64::NAN;
        }
        energy_e4(model, window, window.len() - 1, false).unwrap_or(f64::NAN)
    };

    let first_dt = planned(&state)?;
    if opts.with_e4 {
        window.push(state.clone());
    }
    let mut row = diagnose(model, &state, dissipated, 0, first_dt)?;
    row.e4 = e4_of(&window);
    rows.push(row);
    on_step(0, &state)?;

    let eps = opts.t_final * lit(1e-12);
    while state.t < opts.t_final - eps {
        let mut dt = match planned(&state) {
            Ok(dt) => dt,
            Err(e) => {
                breakdown = Some(Breakdown { t: to_f64(state.t), step, cause: e.to_string() });
                break;
            }
        };
        if state.t + dt > opts.t_final - eps {
            dt = opts.t_final - state.t;
        }
        let next = match advance(model, &state, &k1, dt) {
            Ok(s) => s,
            Err(e) if e.is_breakdown() || matches!(e, Error::InvalidTimeStep(_)) => {
                breakdown = Some(Breakdown { t: to_f64(state.t), step, cause: e.to_string() });
                break;
            }
            Err(e) => return Err(e),
        };
        step += 1;
        dissipated = dissipated + next.dissipation;
        state = next.state;
        k1 = next.tendency;
        if opts.with_e4 {
            if window.len() == 5 {
                window.remove(0);
            }
            window.push(state.clone());
        }
        let last = state.t >= opts.t_final - eps;
        if step.is_multiple_of(opts.cadence) || last {
            let mut row = diagnose(model, &state, dissipated, step, dt)?;
            row.e4 = e4_of(&window);
            rows.push(row);
        }
        on_step(step, &state)?;
    }
    Ok(Trajectory { rows, final_state: state, steps: step, breakdown, dissipated })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::state::{build_initial_data, ElasticColumn, InitialData, Params};

    fn model(n: usize, nz: usize, sigma: f64, kappa: f64) -> Model<f64> {
        Model::new(make_grid(n, n, nz, 1.0).unwrap(), Params::new(sigma, kappa, 1.0)).unwrap()
    }

    fn wave(m: &Model<f64>, amp: f64, u: f64) -> State<f64> {
        let g = &m.grid;
        let data = InitialData {
            psi0: g.surface_from_fn(|x, _| amp * x.sin()),
            potential: Some([g.volume_zeros(), g.volume_from_fn(|x, y, z| u * (z + 1.0) * (x + y).sin()), g.volume_zeros()]),
            columns: [
                ElasticColumn { mean: [1.0, 0.0], stream: None },
                ElasticColumn { mean: [0.0, 1.0], stream: None },
                ElasticColumn::zero(),
            ],
        };
        build_initial_data(m, &data).unwrap()
    }

    #[test]
    fn flat_rest_has_zero_tendency() {
        let m = model(8, 9, 0.5, 0.1);
        let s = State::flat_rest(&m.grid, 1.3);
        let t = rhs(&m, &s).unwrap();
        let worst = t.dv.iter().chain(t.df.iter().flatten()).map(|f| f.max_abs()).fold(0.0, f64::max);
        assert!(worst <= 1e-14);
        assert!(t.dpsi.max_abs() == 0.0 && t.q.max_abs() <= 1e-14);
    }

    #[test]
    fn flat_rest_is_fixed_point() {
        let m = model(8, 9, 0.5, 0.1);
        let s = State::flat_rest(&m.grid, 1.0);
        let next = step_rk4(&m, &s, 0.01).unwrap();
        for (a, b) in s.fields().iter().zip(next.fields()) {
            assert!(a.sub(b).max_abs() <= 1e-12);
        }
        let same = step_rk4(&m, &s, 0.0).unwrap();
        assert_eq!(same.v, s.v);
    }

    #[test]
    fn divergence_is_preserved_by_tendency() {
        let m = model(16, 17, 0.5, 0.1);
        let s = wave(&m, 0.02, 0.05);
        let c = Coefficients::nonlinear(&m, &s).unwrap();
        let t = evaluate(&m, &c, &s.v, &s.f, &s.psi, None).unwrap();
        let r = divergence_rate(&m, &c, &s.v, &t);
        let scale = t.accel.iter().map(|f| f.max_abs()).fold(1.0, f64::max);
        assert!(r <= 1e-8 * scale, "{r}");
    }

    #[test]
    fn cfl_branches() {
        let m = model(16, 17, 0.5, 0.0);
        let s = State::zeros(&m.grid);
        let dx = m.grid.dx_min();
        let dt = cfl_dt(&m, &s, 0.5).unwrap();
        assert!((dt - 0.5 * (dx.powi(3) / std::f64::consts::PI).sqrt()).abs() < 1e-15);
        let m2 = model(16, 17, 1e-9, 0.0);
        let mut s2 = State::zeros(&m2.grid);
        s2.v[0] = m2.grid.volume_from_fn(|_, _, _| 10.0);
        assert!((cfl_dt(&m2, &s2, 1.0).unwrap() - dx / 10.0).abs() < 1e-15);
        let m3 = model(8, 9, 0.0, 0.0);
        assert!(cfl_dt(&m3, &State::zeros(&m3.grid), 0.5).is_err());
        assert!(cfl_dt(&m, &s, 0.0).is_err());
    }

    #[test]
    fn fourth_order_local_error() {
        let m = model(16, 17, 0.5, 0.1);
        let s = wave(&m, 0.02, 0.2);
        let reference = {
            let mut x = s.clone();
            for _ in 0..32 {
                x = step_rk4(&m, &x, 0.04 / 32.0).unwrap();
            }
            x
        };
        let err = |n: usize| {
            let mut x = s.clone();
            for _ in 0..n {
                x = step_rk4(&m, &x, 0.04 / n as f64).unwrap();
            }
            x.psi.sub(&reference.psi).max_abs().max(x.v[2].sub(&reference.v[2]).max_abs())
        };
        let (e1, e2) = (err(4), err(8));
        let order = (e1 / e2).log2();
        assert!(order > 3.3, "observed order {order} ({e1:e}, {e2:e})");
    }
}
