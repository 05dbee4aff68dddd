//! Energies, norm assemblies and the κ → 0 harness.

use crate::calculus::{div_phi, curl_phi, sobolev_norm_interior, sobolev_norm_surface, surface_quadratic};
use crate::error::{Error, Result};
use crate::geometry::Geometry;
use crate::grid::{Field, Grid, VecField};
use crate::scalar::{idx, lit, to_f64, Real};
use crate::state::{Model, State};

/// Components of `E₀^κ` at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyRecord {
    pub t: f64,
    /// `½∫|v|²∂₃φ`.
    pub kinetic: f64,
    /// `½∫Σ_k|F_k|²∂₃φ`.
    pub elastic: f64,
    /// `σ∫_Σ√(1+|∇̄ψ|²)`.
    pub surface: f64,
    /// `½κ|(1−Δ̄)ψ|²_{L²(Σ)}`.
    pub kappa_term: f64,
    /// `∫₀ᵗ κ|⟨∂̄⟩∂_tψ|²`.
    pub dissipated: f64,
    pub e0: f64,
    /// `E₄^κ` when enough history was available (otherwise NaN).
    pub e4: f64,
}

/// `E₀^κ(t)` with its breakdown.
///
/// The surface-tension contribution carries coefficient `σ` (not `σ/2`):
/// the Dirichlet condition `q = σℋ(ψ)` exchanges energy with exactly
/// `σ·area`, so this is the combination whose time derivative vanishes.
pub fn energy_e0<T: Real>(model: &Model<T>, state: &State<T>, geom: &Geometry<T>, dissipated: T) -> EnergyRecord {
    let grid = &model.grid;
    let half: T = lit(0.5);
    let sq = |fs: &[&Field<T>]| {
        let mut acc = grid.volume_zeros();
        for f in fs {
            acc.add_assign(&f.hadamard(f));
        }
        half * grid.integrate_volume(&acc.hadamard(&geom.d3phi))
    };
    let kinetic = sq(&[&state.v[0], &state.v[1], &state.v[2]]);
    let cols: Vec<&Field<T>> = state.f.iter().flatten().collect();
    let elastic = sq(&cols);
    let surface = model.params.sigma * grid.integrate_surface(&geom.n_len);
    let kappa = model.params.kappa;
    let kappa_term = if kappa == T::zero() {
        T::zero()
    } else {
        half * kappa
            * surface_quadratic(grid, &state.psi, |k1, k2| {
                let s: T = idx((k1 * k1 + k2 * k2) as usize);
                (T::one() + s) * (T::one() + s)
            })
    };
    let e0 = kinetic + elastic + surface + kappa_term + dissipated;
    EnergyRecord {
        t: to_f64(state.t),
        kinetic: to_f64(kinetic),
        elastic: to_f64(elastic),
        surface: to_f64(surface),
        kappa_term: to_f64(kappa_term),
        dissipated: to_f64(dissipated),
        e0: to_f64(e0),
        e4: f64::NAN,
    }
}

/// One entry of the time history used by [`energy_e4`].
#[derive(Clone, Debug)]
pub struct Snapshot<T> {
    pub t: T,
    pub v: VecField<T>,
    pub f: [VecField<T>; 3],
    pub psi: Field<T>,
}

impl<T: Real> Snapshot<T> {
    pub fn of(state: &State<T>) -> Self {
        Snapshot { t: state.t, v: state.v.clone(), f: state.f.clone(), psi: state.psi.clone() }
    }

    fn fields(&self) -> Vec<&Field<T>> {
        let mut out: Vec<&Field<T>> = self.v.iter().collect();
        out.extend(self.f.iter().flatten());
        out
    }
}

/// Finite-difference weights for the `m`-th derivative at `x0` on nodes
/// `xs` (Fornberg's recursion).
pub fn fornberg_weights(x0: f64, xs: &[f64], m: usize) -> Vec<f64> {
    let n = xs.len();
    let mut c = vec![vec![0.0; m + 1]; n];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[m]).collect()
}

fn combine_snapshots<T: Real>(
    window: &[Snapshot<T>],
    w: &[f64],
    pick: impl Fn(&Snapshot<T>) -> Vec<&Field<T>>,
) -> Vec<Field<T>> {
    let mut out: Vec<Field<T>> = pick(&window[0]).iter().map(|f| f.scale(T::zero())).collect();
    for (s, &wi) in window.iter().zip(w) {
        for (o, f) in out.iter_mut().zip(pick(s)) {
            o.axpy(lit(wi), f);
        }
    }
    out
}

/// `E₄^κ` at `window[at]` from a window of consecutive snapshots.
///
/// `∂_t⁰` is the snapshot itself, `∂_t¹` comes from the equations, `∂_t^l`
/// for `l ≥ 2` from finite differences over the window. With `s` snapshots
/// the derivatives up to `min(4, s − 1)` are included; the full functional
/// needs five. `strict` rejects shorter windows.
pub fn energy_e4<T: Real>(model: &Model<T>, window: &[State<T>], at: usize, strict: bool) -> Result<f64> {
    let needed = if strict { 5 } else { 1 };
    if window.len() < needed {
        return Err(Error::InsufficientHistory { needed, have: window.len() });
    }
    if at >= window.len() {
        return Err(Error::InvalidArgument(format!("snapshot index {at} outside window of {}", window.len())));
    }
    let grid = &model.grid;
    let centre = at;
    let state = &window[centre];
    let snaps: Vec<Snapshot<T>> = window.iter().map(Snapshot::of).collect();
    let ts: Vec<f64> = window.iter().map(|s| to_f64(s.t)).collect();
    let lmax = 4.min(window.len() - 1).max(1);
    let sigma = model.params.sigma;
    let kappa = model.params.kappa;
    let mut total = 0.0;

    let mut add_level = |l: usize, vols: &[&Field<T>], psi: &Field<T>| -> Result<()> {
        for f in vols {
            let n = to_f64(sobolev_norm_interior(grid, f, 4 - l)?);
            total += n * n;
        }
        let ns = to_f64(sobolev_norm_surface(grid, psi, idx(5 - l))?);
        let nk = to_f64(sobolev_norm_surface(grid, psi, idx(6 - l))?);
        total += to_f64(sigma) * ns * ns + to_f64(kappa) * nk * nk;
        Ok(())
    };

    let base = Snapshot::of(state);
    add_level(0, &base.fields(), &base.psi)?;

    let tend = crate::evolution::rhs(model, state)?;
    let mut first: Vec<&Field<T>> = tend.dv.iter().collect();
    first.extend(tend.df.iter().flatten());
    add_level(1, &first, &tend.dpsi)?;

    for l in 2..=lmax {
        let w = fornberg_weights(ts[centre], &ts, l);
        let vols = combine_snapshots(&snaps, &w, |s| s.fields());
        let psi = combine_snapshots(&snaps, &w, |s| vec![&s.psi]).remove(0);
        let refs: Vec<&Field<T>> = vols.iter().collect();
        add_level(l, &refs, &psi)?;
    }
    Ok(total)
}

/// Right-hand-side quantities of the div–curl estimate for one vector field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HodgeTerms {
    /// `‖∇^φ·X‖₃`.
    pub div: f64,
    /// `‖∇^φ×X‖₃`.
    pub curl: f64,
    /// `‖∂̄⁴X‖₀`, the pure tangential part.
    pub tangential: f64,
    /// `‖X‖₀`.
    pub l2: f64,
    /// `‖X‖₄`, the left side.
    pub full: f64,
}

impl HodgeTerms {
    pub fn rhs_sum(&self) -> f64 {
        self.div + self.curl + self.tangential + self.l2
    }
}

fn vec_norm<T: Real>(grid: &Grid<T>, x: &[Field<T>], s: usize) -> Result<f64> {
    let mut acc = 0.0;
    for f in x {
        let n = to_f64(sobolev_norm_interior(grid, f, s)?);
        acc += n * n;
    }
    Ok(acc.sqrt())
}

/// Tangential `‖∂̄⁴X‖₀` through the horizontal symbol `|k|⁴`.
fn tangential4<T: Real>(grid: &Grid<T>, x: &[Field<T>]) -> f64 {
    let mut acc = 0.0;
    for f in x {
        let g = grid.lap_h(&grid.lap_h(f));
        acc += to_f64(grid.integrate_volume(&g.hadamard(&g)));
    }
    acc.sqrt()
}

pub fn hodge_terms<T: Real>(grid: &Grid<T>, geom: &Geometry<T>, x: &VecField<T>) -> Result<HodgeTerms> {
    let div = vec_norm(grid, std::slice::from_ref(&div_phi(grid, geom, x)), 3)?;
    let curl = vec_norm(grid, &curl_phi(grid, geom, x), 3)?;
    Ok(HodgeTerms {
        div,
        curl,
        tangential: tangential4(grid, x),
        l2: vec_norm(grid, x, 0)?,
        full: vec_norm(grid, x, 4)?,
    })
}

/// Div–curl quantities for `v` and each column `F_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct HodgeReport {
    pub v: HodgeTerms,
    pub f: [HodgeTerms; 3],
}

pub fn hodge_decomposition_report<T: Real>(grid: &Grid<T>, state: &State<T>, geom: &Geometry<T>) -> Result<HodgeReport> {
    Ok(HodgeReport {
        v: hodge_terms(grid, geom, &state.v)?,
        f: [
            hodge_terms(grid, geom, &state.f[0])?,
            hodge_terms(grid, geom, &state.f[1])?,
            hodge_terms(grid, geom, &state.f[2])?,
        ],
    })
}

/// `‖v−v'‖₀ + Σ_k‖F_k−F_k'‖₀ + |ψ−ψ'|₁`.
pub fn state_distance<T: Real>(grid: &Grid<T>, a: &State<T>, b: &State<T>) -> Result<f64> {
    let diff = |x: &VecField<T>, y: &VecField<T>| -> Result<f64> {
        let d: Vec<Field<T>> = x.iter().zip(y).map(|(p, q)| p.sub(q)).collect();
        vec_norm(grid, &d, 0)
    };
    let mut out = diff(&a.v, &b.v)?;
    for k in 0..3 {
        out += diff(&a.f[k], &b.f[k])?;
    }
    out += to_f64(sobolev_norm_surface(grid, &a.psi.sub(&b.psi), T::one())?);
    Ok(out)
}

/// One row of the κ study.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KappaPair {
    pub kappa_a: f64,
    pub kappa_b: f64,
    pub distance: f64,
}

/// Per-member record of a κ study run.
#[derive(Clone, Debug, PartialEq)]
pub struct MemberSummary {
    pub kappa: f64,
    /// Steps completed.
    pub steps: usize,
    /// `max_t |E₀(t) − E₀(0)|/E₀(0)`.
    pub max_drift: f64,
    /// `max_t max_Σ|F_j·N|` and `max_t ‖div^φF_j‖_∞`.
    pub max_r_fn: f64,
    pub max_r_divf: f64,
    pub min_d3phi: f64,
    /// Why the member stopped early, if it did.
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KappaStudy {
    pub pairs: Vec<KappaPair>,
    pub members: Vec<MemberSummary>,
    pub dt: f64,
    pub steps: usize,
    /// Strictly decreasing distances over a complete table.
    pub monotone: bool,
}

struct Member<T: Real> {
    model: Model<T>,
    state: State<T>,
    k1: Option<crate::evolution::Tendency<T>>,
    dissipated: T,
    e_start: f64,
    summary: MemberSummary,
}

impl<T: Real> Member<T> {
    fn observe(&mut self, step: usize, dt: T) -> Result<()> {
        let row = crate::evolution::diagnose(&self.model, &self.state, self.dissipated, step, dt)?;
        if step == 0 {
            self.e_start = row.e0;
        }
        let s = &mut self.summary;
        s.steps = step;
        s.max_drift = s.max_drift.max(((row.e0 - self.e_start) / self.e_start).abs());
        s.max_r_fn = s.max_r_fn.max(row.r_fn);
        s.max_r_divf = s.max_r_divf.max(row.r_divf);
        s.min_d3phi = s.min_d3phi.min(row.min_d3phi);
        Ok(())
    }

    fn fail(&mut self, e: Error) {
        self.summary.failure = Some(e.to_string());
        self.k1 = None;
    }
}

/// Runs the same initial data for each `κ` (descending, at least three)
/// on one common time grid and compares consecutive trajectories with
/// `sup_t(‖Δv‖₀ + Σ_k‖ΔF_k‖₀ + |Δψ|₁)`, the supremum taken over every step.
///
/// The common step is the CFL step of the largest `κ`, the most
/// restrictive one. Members advance in lockstep so only the current states
/// are held in memory. Each member also records its energy drift and
/// constraint residuals.
pub fn kappa_convergence_study<T: Real>(
    model: &Model<T>,
    initial: &State<T>,
    kappas: &[T],
    t_final: T,
    safety: T,
) -> Result<KappaStudy> {
    if kappas.len() < 3 {
        return Err(Error::InvalidArgument("the κ study needs at least three values".into()));
    }
    if kappas.iter().any(|&k| !(k >= T::zero())) || kappas.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::InvalidArgument("κ values must be non-negative and listed in descending order".into()));
    }
    if !(t_final > T::zero()) {
        return Err(Error::InvalidArgument("t_final must be > 0".into()));
    }
    let with_kappa = |kappa: T| model.with_params(crate::state::Params { kappa, ..model.params });
    let dt_cfl = crate::evolution::cfl_dt(&with_kappa(kappas[0])?, initial, safety)?;
    let steps = (t_final / dt_cfl).ceil().to_usize().unwrap_or(1).max(1);
    let dt = t_final / idx(steps);

    let mut members = Vec::with_capacity(kappas.len());
    for &kappa in kappas {
        let m = with_kappa(kappa)?;
        let mut member = Member {
            state: initial.clone(),
            k1: None,
            dissipated: T::zero(),
            e_start: 0.0,
            summary: MemberSummary {
                kappa: to_f64(kappa),
                steps: 0,
                max_drift: 0.0,
                max_r_fn: 0.0,
                max_r_divf: 0.0,
                min_d3phi: f64::INFINITY,
                failure: None,
            },
            model: m,
        };
        match crate::evolution::rhs(&member.model, &member.state) {
            Ok(k1) => {
                member.state.q = k1.q.clone();
                member.state.psi_t = k1.dpsi.clone();
                member.k1 = Some(k1);
                if let Err(e) = member.observe(0, dt) {
                    member.fail(e);
                }
            }
            Err(e) => member.fail(e),
        }
        members.push(member);
    }

    let n = kappas.len();
    let mut sup = vec![0.0f64; n - 1];
    let mut alive_pair = vec![true; n - 1];
    let track = |members: &[Member<T>], sup: &mut [f64], alive: &mut [bool]| -> Result<()> {
        for i in 0..n - 1 {
            if members[i].k1.is_none() || members[i + 1].k1.is_none() {
                alive[i] = false;
            }
            if alive[i] {
                sup[i] = sup[i].max(state_distance(&model.grid, &members[i].state, &members[i + 1].state)?);
            }
        }
        Ok(())
    };
    track(&members, &mut sup, &mut alive_pair)?;
    for step in 1..=steps {
        for member in members.iter_mut() {
            let Some(k1) = member.k1.take() else { continue };
            match crate::evolution::advance(&member.model, &member.state, &k1, dt) {
                Ok(next) => {
                    member.state = next.state;
                    member.dissipated = member.dissipated + next.dissipation;
                    member.k1 = Some(next.tendency);
                    if let Err(e) = member.observe(step, dt) {
                        member.fail(e);
                    }
                }
                Err(e) => member.fail(e),
            }
        }
        track(&members, &mut sup, &mut alive_pair)?;
    }

    let pairs: Vec<KappaPair> = (0..n - 1)
        .filter(|&i| alive_pair[i])
        .map(|i| KappaPair { kappa_a: to_f64(kappas[i]), kappa_b: to_f64(kappas[i + 1]), distance: sup[i] })
        .collect();
    let monotone = pairs.len() == n - 1 && pairs.windows(2).all(|w| w[1].distance < w[0].distance);
    Ok(KappaStudy { pairs, members: members.into_iter().map(|m| m.summary).collect(), dt: to_f64(dt), steps, monotone })
}
