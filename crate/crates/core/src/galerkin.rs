//! Desk-scale versions of the existence machinery: the symmetric matrix
//! form of the linearised system, the modified deformation tensor and its
//! extension operator, a Galerkin evolution and the Picard iteration.
//!
//! The linearised system around a basic state `Ů = (v̊, F̊, ψ̊)` reads
//!
//! ```text
//! D_t^{φ̊} v + ∇^{φ̊} q = (𝔉̊_k·∇^{φ̊}) F_k,   D_t^{φ̊} F_j = (𝔉̊_j·∇^{φ̊}) v,
//! ∂_tψ = v·N̊,   q|_Σ = σℋ(ψ̊) + κ(1−Δ̄)²ψ + κ(1−Δ̄)∂_tψ,
//! ```
//!
//! where `D_t^{φ̊}` transports with `v̊` and `V = (v̊·𝐍̇ − ∂_tφ̊)/∂₃φ̊`, `𝐍̇`
//! being the normal of a lagged surface. It is discretised by the same
//! kernel as the nonlinear system ([`evaluate`]) with the coefficients
//! frozen from the basic state.

use crate::calculus::{mean_curvature, normal_transport_static, sobolev_norm_interior, sobolev_norm_surface, surface_quadratic, Symbol};
use crate::error::{Error, Result};
use crate::evolution::{cfl_dt, evaluate, Coefficients, Tendency};
use crate::geometry::{surface_normals, Cutoff};
use crate::grid::{vec_zeros, Field, Grid, VecField};
use crate::scalar::{idx, lit, to_f64, Real};
use crate::state::{kinematic_velocity, Model, State};
use num_complex::Complex;

/// Dimension of the per-column system `U = (q, v, F_k)`.
pub const DIM: usize = 7;

pub type Matrix7<T> = [[T; DIM]; DIM];

/// Point values of the basic state entering the matrices.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BasicPoint<T> {
    pub v: [T; 3],
    /// Column `𝔉̊_k` of the modified tensor.
    pub frak_f: [T; 3],
    /// `𝐍̊ = (−∂₁φ̊, −∂₂φ̊, 1)`.
    pub normal: [T; 3],
    /// Lagged normal `𝐍̇` used by the transport.
    pub normal_lag: [T; 3],
    pub d3phi: T,
    pub dtphi: T,
}

/// `A₀, A₁, A₂, A₃` at one point, for one column `k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoefficientMatrices<T> {
    pub a: [Matrix7<T>; 4],
}

impl<T: Real> CoefficientMatrices<T> {
    pub fn a0(&self) -> &Matrix7<T> {
        &self.a[0]
    }

    /// Largest `|A_ij − A_ji|` over `A₁, A₂, A₃`.
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for m in &self.a[1..] {
            for i in 0..DIM {
                for j in 0..DIM {
                    worst = worst.max((m[i][j] - m[j][i]).abs());
                }
            }
        }
        worst
    }
}

/// Writes the block pattern `[0, cᵀ, 0; c, dI, −eI; 0, −eI, dI]`, filling
/// both triangles from the same value so symmetry is exact.
fn block<T: Real>(c: [T; 3], d: T, e: T) -> Matrix7<T> {
    let mut m = [[T::zero(); DIM]; DIM];
    for i in 0..3 {
        m[0][1 + i] = c[i];
        m[1 + i][0] = c[i];
        m[1 + i][1 + i] = d;
        m[4 + i][4 + i] = d;
        m[1 + i][4 + i] = -e;
        m[4 + i][1 + i] = -e;
    }
    m
}

/// Assembles the matrices of the symmetric form `A₀∂_tU + Σ Aᵢ∂ᵢU = 0`.
pub fn assemble_matrices<T: Real>(p: &BasicPoint<T>) -> Result<CoefficientMatrices<T>> {
    if !(p.d3phi > T::zero()) {
        return Err(Error::DiffeomorphismBreakdown { min_d3phi: to_f64(p.d3phi), floor: 0.0 });
    }
    let mut a0 = [[T::zero(); DIM]; DIM];
    for (i, row) in a0.iter_mut().enumerate().skip(1) {
        row[i] = T::one();
    }
    let unit = |t: usize| {
        let mut e = [T::zero(); 3];
        e[t] = T::one();
        e
    };
    let a1 = block(unit(0), p.v[0], p.frak_f[0]);
    let a2 = block(unit(1), p.v[1], p.frak_f[1]);
    let dot = |a: [T; 3], b: [T; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let inv = T::one() / p.d3phi;
    let n = p.normal.map(|x| x * inv);
    let diag = (dot(p.v, p.normal_lag) - p.dtphi) * inv;
    let cross = dot(p.frak_f, p.normal) * inv;
    let a3 = block(n, diag, cross);
    Ok(CoefficientMatrices { a: [a0, a1, a2, a3] })
}

/// `𝔑g = χ(x₃)·Σ_k ĝ(k)e^{⟨k⟩x₃}e^{ik·x̄}` with `⟨k⟩ = √(1+|k|²)`.
pub fn extension_operator<T: Real>(grid: &Grid<T>, cutoff: &Cutoff<T>, g: &Field<T>) -> Result<Field<T>> {
    if g.nz != 1 {
        return Err(Error::ShapeMismatch("extension of a volume field".into()));
    }
    grid.check(g)?;
    let mut spec = grid.forward(&grid.extend_const(g));
    let n = grid.layer_len();
    let brackets: Vec<T> = (0..grid.ny)
        .flat_map(|j| (0..grid.nx).map(move |i| (i, j)))
        .map(|(i, j)| {
            let (k1, k2) = grid.wavenumber(i, j);
            Symbol::Bracket.eval(k1, k2)
        })
        .collect();
    for (iz, &z) in grid.z.iter().enumerate() {
        let chi = cutoff.chi(z);
        for (c, &br) in spec.data[iz * n..(iz + 1) * n].iter_mut().zip(&brackets) {
            *c = *c * Complex::new(chi * (br * z).exp(), T::zero());
        }
    }
    Ok(grid.inverse(&spec))
}

/// `F·N|_Σ` for one column, with the pointwise surface normal.
pub fn boundary_defect<T: Real>(grid: &Grid<T>, col: &VecField<T>, psi: &Field<T>) -> Result<Field<T>> {
    let (n, _) = surface_normals(grid, psi)?;
    let mut d = col[0].top().hadamard(&n[0]);
    d.axpy(T::one(), &col[1].top().hadamard(&n[1]));
    d.add_assign(&col[2].top());
    Ok(d)
}

/// The modified tensor `𝔉`: rows 1–2 of every column copied from `F`,
/// `𝔉_{3k} = F_{3k} + 𝔑(F_{1k}∂₁ψ + F_{2k}∂₂ψ − F_{3k})|_Σ`.
pub fn modified_deformation<T: Real>(
    grid: &Grid<T>,
    cutoff: &Cutoff<T>,
    f: &[VecField<T>; 3],
    psi: &Field<T>,
) -> Result<[VecField<T>; 3]> {
    let mut out = f.clone();
    for (k, col) in f.iter().enumerate() {
        let defect = boundary_defect(grid, col, psi)?.scale(-T::one());
        if defect.max_abs() == T::zero() {
            continue;
        }
        out[k][2].add_assign(&extension_operator(grid, cutoff, &defect)?);
    }
    Ok(out)
}

/// Basic state of the linearised system.
#[derive(Clone, Debug)]
pub struct BasicState<T> {
    pub v: VecField<T>,
    pub f: [VecField<T>; 3],
    pub psi: Field<T>,
    pub psi_t: Field<T>,
    /// Surface whose normal `𝐍̇` enters the transport velocity.
    pub psi_lag: Field<T>,
}

impl<T: Real> BasicState<T> {
    pub fn zeros(grid: &Grid<T>) -> Self {
        BasicState {
            v: vec_zeros(grid),
            f: [vec_zeros(grid), vec_zeros(grid), vec_zeros(grid)],
            psi: grid.surface_zeros(),
            psi_t: grid.surface_zeros(),
            psi_lag: grid.surface_zeros(),
        }
    }

    /// A state frozen in time: `∂_tψ̊ = v̊·N̊` and no lag.
    pub fn snapshot(grid: &Grid<T>, s: &State<T>) -> Result<Self> {
        let (n, _) = surface_normals(grid, &s.psi)?;
        Ok(BasicState {
            v: s.v.clone(),
            f: s.f.clone(),
            psi: s.psi.clone(),
            psi_t: kinematic_velocity(grid, &s.v, &n),
            psi_lag: s.psi.clone(),
        })
    }
}

/// Frozen coefficients of the linearised system around `basic`.
pub fn linearized_coefficients<T: Real>(model: &Model<T>, basic: &BasicState<T>) -> Result<Coefficients<T>> {
    let grid = &model.grid;
    let geom = model.geometry(&basic.psi, &basic.psi_t)?;
    let (l1, l2) = grid.grad_h(&basic.psi_lag);
    let mut vn = basic.v[0].hadamard(&grid.outer(&geom.chi, &l1));
    vn.axpy(T::one(), &basic.v[1].hadamard(&grid.outer(&geom.chi, &l2)));
    let mut vn = grid.dealias(&vn).scale(-T::one());
    vn.add_assign(&basic.v[2]);
    vn.axpy(-T::one(), &geom.dtphi);
    let transport_n = grid.mul(&vn, &geom.inv_j);
    let tensor = modified_deformation(grid, &model.cutoff, &basic.f, &basic.psi)?;
    let tensor_n = [0, 1, 2].map(|k| normal_transport_static(grid, &geom, &tensor[k]));
    Ok(Coefficients {
        transport_h: [basic.v[0].clone(), basic.v[1].clone()],
        transport_n,
        tensor,
        tensor_n,
        n_kin: geom.n_surf.clone(),
        surface_force: mean_curvature(grid, &basic.psi).scale(model.params.sigma),
        geom,
    })
}

/// Point values of `basic` at flat index `p` for column `k`.
pub fn basic_point<T: Real>(model: &Model<T>, basic: &BasicState<T>, k: usize, p: usize) -> Result<BasicPoint<T>> {
    let grid = &model.grid;
    let geom = model.geometry(&basic.psi, &basic.psi_t)?;
    let frak = modified_deformation(grid, &model.cutoff, &basic.f, &basic.psi)?;
    let iz = p / grid.layer_len();
    let (l1, l2) = grid.grad_h(&basic.psi_lag);
    let m = p % grid.layer_len();
    let chi = geom.chi[iz];
    Ok(BasicPoint {
        v: [0, 1, 2].map(|i| basic.v[i].data[p]),
        frak_f: [0, 1, 2].map(|i| frak[k][i].data[p]),
        normal: [0, 1, 2].map(|i| geom.normal[i].data[p]),
        normal_lag: [-chi * l1.data[m], -chi * l2.data[m], T::one()],
        d3phi: geom.d3phi.data[p],
        dtphi: geom.dtphi.data[p],
    })
}

// ---- Galerkin ---------------------------------------------------------------

/// Identifies one basis function: horizontal wavenumber, cosine/sine and
/// Chebyshev degree.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BasisLabel {
    pub k: (i64, i64),
    pub sine: bool,
    pub degree: usize,
}

/// First `m` tensor products `cos/sin(k·x̄)·T_p(s)`, ordered by `|k|² + p²`,
/// orthonormalised in `L²(Ω)`; the distinct horizontal factors are
/// orthonormalised separately on `Σ` for the surface unknown.
#[derive(Clone, Debug)]
pub struct GalerkinBasis<T> {
    pub labels: Vec<BasisLabel>,
    volume: Vec<Field<T>>,
    surface: Vec<Field<T>>,
}

impl<T: Real> GalerkinBasis<T> {
    pub fn new(grid: &Grid<T>, m: usize) -> Result<Self> {
        if m == 0 || m > 64 {
            return Err(Error::InvalidArgument(format!("Galerkin dimension m = {m} outside 1..=64")));
        }
        let kmax = grid.k_max_dealiased() as i64;
        let pmax = grid.nz - 1;
        let mut cands = Vec::new();
        for k1 in 0..=kmax {
            for k2 in -kmax..=kmax {
                if k1 == 0 && k2 < 0 {
                    continue;
                }
                for sine in [false, true] {
                    if k1 == 0 && k2 == 0 && sine {
                        continue;
                    }
                    for degree in 0..=pmax {
                        cands.push(BasisLabel { k: (k1, k2), sine, degree });
                    }
                }
            }
        }
        cands.sort_by_key(|l| (2 * (l.k.0.abs() + l.k.1.abs()) + l.degree as i64, l.degree, l.k, l.sine));
        if cands.len() < m {
            return Err(Error::InvalidArgument(format!("grid supports only {} basis functions", cands.len())));
        }
        cands.truncate(m);
        let b = grid.b;
        let horizontal = |l: &BasisLabel| {
            let (k1, k2): (T, T) = (lit(l.k.0 as f64), lit(l.k.1 as f64));
            grid.surface_from_fn(|x, y| if l.sine { (k1 * x + k2 * y).sin() } else { (k1 * x + k2 * y).cos() })
        };
        let mut volume: Vec<Field<T>> = Vec::with_capacity(m);
        for l in &cands {
            let profile: Vec<T> = grid
                .z
                .iter()
                .map(|&z| {
                    let s = (lit::<T>(2.0) * (z + b) / b - T::one()).max(-T::one()).min(T::one());
                    (idx::<T>(l.degree) * s.acos()).cos()
                })
                .collect();
            let mut f = grid.outer(&profile, &horizontal(l));
            // two passes of Gram–Schmidt for numerical orthogonality
            for _ in 0..2 {
                for e in &volume {
                    let c = grid.integrate_volume(&f.hadamard(e));
                    f.axpy(-c, e);
                }
            }
            let norm = grid.integrate_volume(&f.hadamard(&f)).sqrt();
            volume.push(f.scale(T::one() / norm));
        }
        let mut surface: Vec<Field<T>> = Vec::new();
        let mut seen: Vec<((i64, i64), bool)> = Vec::new();
        for l in &cands {
            if seen.contains(&(l.k, l.sine)) {
                continue;
            }
            seen.push((l.k, l.sine));
            let h = horizontal(l);
            let norm = grid.integrate_surface(&h.hadamard(&h)).sqrt();
            surface.push(h.scale(T::one() / norm));
        }
        Ok(GalerkinBasis { labels: cands, volume, surface })
    }

    pub fn dim(&self) -> usize {
        self.volume.len()
    }

    pub fn surface_dim(&self) -> usize {
        self.surface.len()
    }

    pub fn coefficients(&self, grid: &Grid<T>, f: &Field<T>) -> Vec<T> {
        self.volume.iter().map(|e| grid.integrate_volume(&f.hadamard(e))).collect()
    }

    pub fn surface_coefficients(&self, grid: &Grid<T>, g: &Field<T>) -> Vec<T> {
        self.surface.iter().map(|e| grid.integrate_surface(&g.hadamard(e))).collect()
    }

    fn synthesize(basis: &[Field<T>], c: &[T], zero: Field<T>) -> Field<T> {
        let mut out = zero;
        for (e, &a) in basis.iter().zip(c) {
            out.axpy(a, e);
        }
        out
    }

    /// `L²(Ω)` projection onto the span.
    pub fn project(&self, grid: &Grid<T>, f: &Field<T>) -> Field<T> {
        Self::synthesize(&self.volume, &self.coefficients(grid, f), grid.volume_zeros())
    }

    /// `L²(Σ)` projection onto the horizontal factors.
    pub fn project_surface(&self, grid: &Grid<T>, g: &Field<T>) -> Field<T> {
        Self::synthesize(&self.surface, &self.surface_coefficients(grid, g), grid.surface_zeros())
    }

    /// Projects every unknown of a state; `q` included.
    pub fn project_state(&self, grid: &Grid<T>, s: &State<T>) -> State<T> {
        let mut out = s.clone();
        for i in 0..3 {
            out.v[i] = self.project(grid, &s.v[i]);
            for k in 0..3 {
                out.f[k][i] = self.project(grid, &s.f[k][i]);
            }
        }
        out.q = self.project(grid, &s.q);
        out.psi = self.project_surface(grid, &s.psi);
        out.psi_t = self.project_surface(grid, &s.psi_t);
        out
    }

    /// Coefficient vector `(q, v, F, ψ)` of a projected state.
    pub fn state_coefficients(&self, grid: &Grid<T>, s: &State<T>) -> Vec<f64> {
        let mut c: Vec<f64> = Vec::new();
        let mut push = |f: &Field<T>| c.extend(self.coefficients(grid, f).into_iter().map(to_f64));
        push(&s.q);
        for i in 0..3 {
            push(&s.v[i]);
        }
        for k in 0..3 {
            for i in 0..3 {
                push(&s.f[k][i]);
            }
        }
        c.extend(self.surface_coefficients(grid, &s.psi).into_iter().map(to_f64));
        c
    }
}

/// `‖U‖₀² = ∫_Ω (q² + |v|² + Σ_k|F_k|²)`.
pub fn u_norm_sq<T: Real>(grid: &Grid<T>, s: &State<T>) -> T {
    let mut e = grid.integrate_volume(&s.q.hadamard(&s.q));
    for i in 0..3 {
        e = e + grid.integrate_volume(&s.v[i].hadamard(&s.v[i]));
        for k in 0..3 {
            e = e + grid.integrate_volume(&s.f[k][i].hadamard(&s.f[k][i]));
        }
    }
    e
}

fn kappa_surface_sq<T: Real>(grid: &Grid<T>, kappa: T, g: &Field<T>, s: i32) -> T {
    kappa * surface_quadratic(grid, g, |k1, k2| Symbol::OneMinusLap.eval::<T>(k1, k2).powi(s))
}

/// Result of [`galerkin_evolve`].
#[derive(Clone, Debug)]
pub struct GalerkinRun<T> {
    pub m: usize,
    pub dt: f64,
    pub times: Vec<f64>,
    /// `E^m(t) = ‖U^m‖₀² + |√κψ^m|₂² + ∫₀ᵗ|√κ∂_tψ^m|₁²`.
    pub energy: Vec<f64>,
    /// `(q, v, F, ψ)` coefficients at every recorded time.
    pub coefficients: Vec<Vec<f64>>,
    pub final_state: State<T>,
}

/// `(C, r)` with `E(t) ≤ C·E(0)·e^{rt}` on the samples: `r` is the
/// least-squares slope of `ln(E/E(0))`, `C` the smallest prefactor that makes
/// the envelope hold.
pub fn fit_growth(times: &[f64], energy: &[f64]) -> Option<(f64, f64)> {
    let e0 = *energy.first()?;
    if !(e0 > 0.0) || times.len() != energy.len() || times.len() < 2 {
        return None;
    }
    let ys: Vec<f64> = energy.iter().map(|e| (e / e0).max(1e-300).ln()).collect();
    let n = times.len() as f64;
    let (mt, my) = (times.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = times.iter().map(|t| (t - mt) * (t - mt)).sum();
    let sxy: f64 = times.iter().zip(&ys).map(|(t, y)| (t - mt) * (y - my)).sum();
    let r = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let c = times.iter().zip(energy).map(|(t, e)| e / (e0 * (r * t).exp())).fold(1.0, f64::max);
    Some((c, r))
}

fn galerkin_rhs<T: Real>(
    model: &Model<T>,
    basis: &GalerkinBasis<T>,
    c: &Coefficients<T>,
    s: &State<T>,
) -> Result<(Tendency<T>, T)> {
    let grid = &model.grid;
    let mut t = evaluate(model, c, &s.v, &s.f, &s.psi, Some(&s.q))?;
    for i in 0..3 {
        t.dv[i] = basis.project(grid, &t.dv[i]);
        for k in 0..3 {
            t.df[k][i] = basis.project(grid, &t.df[k][i]);
        }
    }
    t.dpsi = basis.project_surface(grid, &t.dpsi);
    t.q = basis.project(grid, &t.q);
    let rate = kappa_surface_sq(grid, model.params.kappa, &t.dpsi, 1);
    Ok((t, rate))
}

fn shifted<T: Real>(base: &State<T>, t: &Tendency<T>, h: T) -> State<T> {
    let mut s = base.clone();
    for i in 0..3 {
        s.v[i].axpy(h, &t.dv[i]);
        for k in 0..3 {
            s.f[k][i].axpy(h, &t.df[k][i]);
        }
    }
    s.psi.axpy(h, &t.dpsi);
    s.q = t.q.clone();
    s.psi_t = t.dpsi.clone();
    s.t = base.t + h;
    s
}

fn rk4_combine<T: Real>(base: &State<T>, k: [&Tendency<T>; 4], h: T) -> State<T> {
    let w = [h / lit(6.0), h / lit(3.0), h / lit(3.0), h / lit(6.0)];
    let mut s = base.clone();
    for (kk, &wk) in k.iter().zip(&w) {
        for i in 0..3 {
            s.v[i].axpy(wk, &kk.dv[i]);
            for c in 0..3 {
                s.f[c][i].axpy(wk, &kk.df[c][i]);
            }
        }
        s.psi.axpy(wk, &kk.dpsi);
    }
    s.t = base.t + h;
    s
}

/// Integrates the Galerkin system of dimension `m` (per unknown component)
/// for the linearisation around the frozen `basic` state, with RK4 and step
/// `dt`. The initial data are projected onto the span first.
pub fn galerkin_evolve<T: Real>(
    model: &Model<T>,
    basic: &BasicState<T>,
    initial: &State<T>,
    m: usize,
    dt: T,
    t_final: T,
) -> Result<GalerkinRun<T>> {
    if !(dt > T::zero()) || !dt.is_finite() || !(t_final >= T::zero()) {
        return Err(Error::InvalidTimeStep(format!("dt = {dt}, T = {t_final}")));
    }
    let grid = &model.grid;
    let basis = GalerkinBasis::new(grid, m)?;
    let coeffs = linearized_coefficients(model, basic)?;
    let kappa = model.params.kappa;
    let steps = (to_f64(t_final / dt) - 1e-9).ceil().max(0.0) as usize;
    let h = if steps == 0 { dt } else { t_final / idx(steps) };

    let mut s = basis.project_state(grid, initial);
    s.t = T::zero();
    let (mut k1, mut r1) = galerkin_rhs(model, &basis, &coeffs, &s)?;
    s.q = k1.q.clone();
    s.psi_t = k1.dpsi.clone();
    let energy_of = |s: &State<T>, acc: T| to_f64(u_norm_sq(grid, s) + kappa_surface_sq(grid, kappa, &s.psi, 2) + acc);
    let mut dissipated = T::zero();
    let mut run = GalerkinRun {
        m,
        dt: to_f64(h),
        times: vec![0.0],
        energy: vec![energy_of(&s, dissipated)],
        coefficients: vec![basis.state_coefficients(grid, &s)],
        final_state: s.clone(),
    };
    let half = h / lit(2.0);
    for _ in 0..steps {
        let (k2, r2) = galerkin_rhs(model, &basis, &coeffs, &shifted(&s, &k1, half))?;
        let (k3, r3) = galerkin_rhs(model, &basis, &coeffs, &shifted(&s, &k2, half))?;
        let (k4, r4) = galerkin_rhs(model, &basis, &coeffs, &shifted(&s, &k3, h))?;
        let next = rk4_combine(&s, [&k1, &k2, &k3, &k4], h);
        dissipated = dissipated + h / lit(6.0) * (r1 + lit::<T>(2.0) * (r2 + r3) + r4);
        let (kn, rn) = galerkin_rhs(model, &basis, &coeffs, &next)?;
        s = next;
        s.q = kn.q.clone();
        s.psi_t = kn.dpsi.clone();
        if !s.all_finite() {
            return Err(Error::InvalidTimeStep(format!("Galerkin state non-finite at t = {}", s.t)));
        }
        k1 = kn;
        r1 = rn;
        run.times.push(to_f64(s.t));
        run.energy.push(energy_of(&s, dissipated));
        run.coefficients.push(basis.state_coefficients(grid, &s));
    }
    run.final_state = s;
    Ok(run)
}

// ---- Picard -------------------------------------------------------------------

/// One stage value of an iterate together with its tendency.
#[derive(Clone, Debug)]
struct Sample<T> {
    v: VecField<T>,
    f: [VecField<T>; 3],
    psi: Field<T>,
    dv: VecField<T>,
    df: [VecField<T>; 3],
    dpsi: Field<T>,
}

impl<T: Real> Sample<T> {
    fn zeros(grid: &Grid<T>) -> Self {
        Sample {
            v: vec_zeros(grid),
            f: [vec_zeros(grid), vec_zeros(grid), vec_zeros(grid)],
            psi: grid.surface_zeros(),
            dv: vec_zeros(grid),
            df: [vec_zeros(grid), vec_zeros(grid), vec_zeros(grid)],
            dpsi: grid.surface_zeros(),
        }
    }

    fn new(s: &State<T>, t: &Tendency<T>) -> Self {
        Sample { v: s.v.clone(), f: s.f.clone(), psi: s.psi.clone(), dv: t.dv.clone(), df: t.df.clone(), dpsi: t.dpsi.clone() }
    }
}

/// Controls for [`picard_iterate`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PicardOptions<T> {
    pub n_max: usize,
    pub t_final: T,
    /// Number of RK4 steps; `None` picks the CFL step of the initial data.
    pub steps: Option<usize>,
    pub safety: T,
}

impl<T: Real> PicardOptions<T> {
    pub fn new(n_max: usize, t_final: T) -> Self {
        PicardOptions { n_max, t_final, steps: None, safety: lit(0.5) }
    }
}

/// `[E]^{[n]}` and `ρ_n` for one difference `f^{[n+1]} − f^{[n]}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PicardRow {
    pub n: usize,
    pub energy: f64,
    pub rho: Option<f64>,
    /// The difference energy did not decrease from the previous row.
    pub increased: bool,
}

impl PicardRow {
    pub const HEADER: &'static str = "n,E3_diff,rho,flag";

    pub fn csv(&self) -> String {
        let rho = self.rho.map(|r| format!("{r:.17e}")).unwrap_or_default();
        let flag = if self.increased { "no contraction" } else { "" };
        format!("{},{:.17e},{},{}", self.n, self.energy, rho, flag)
    }
}

#[derive(Clone, Debug)]
pub struct PicardReport<T> {
    pub steps: usize,
    pub dt: f64,
    /// Iterates `1..=n_max` at the final time.
    pub iterates: Vec<State<T>>,
    pub rows: Vec<PicardRow>,
    /// False when some difference energy failed to decrease.
    pub contracting: bool,
    /// `max_k |F_k·N|` on `Σ` of the last iterate at the final time.
    pub boundary_defect: f64,
    /// Why the iteration stopped before `n_max`, if it did.
    pub breakdown: Option<String>,
}

impl<T> PicardReport<T> {
    /// `max ρ_n` over `n ≥ from`.
    pub fn max_rho(&self, from: usize) -> Option<f64> {
        self.rows.iter().filter(|r| r.n >= from).filter_map(|r| r.rho).reduce(f64::max)
    }
}

/// Truncated difference energy at one time level:
/// `Σ_{l≤1} ‖∂_t^l([v],[F])‖²_{3−l} + κ Σ_{l≤1} |∂_t^l[ψ]|²_{5−l}`.
fn difference_energy<T: Real>(grid: &Grid<T>, kappa: T, a: &Sample<T>, b: &Sample<T>) -> Result<f64> {
    let mut e = T::zero();
    let mut add = |x: &Field<T>, y: &Field<T>, s: usize| -> Result<()> {
        let n = sobolev_norm_interior(grid, &x.sub(y), s)?;
        e = e + n * n;
        Ok(())
    };
    for i in 0..3 {
        add(&a.v[i], &b.v[i], 3)?;
        add(&a.dv[i], &b.dv[i], 2)?;
        for k in 0..3 {
            add(&a.f[k][i], &b.f[k][i], 3)?;
            add(&a.df[k][i], &b.df[k][i], 2)?;
        }
    }
    let p0 = sobolev_norm_surface(grid, &a.psi.sub(&b.psi), lit(5.0))?;
    let p1 = sobolev_norm_surface(grid, &a.dpsi.sub(&b.dpsi), lit(4.0))?;
    Ok(to_f64(e + kappa * (p0 * p0 + p1 * p1)))
}

/// Solves the linearised system once. `prev` holds the coefficient iterate
/// at every RK stage (`4·steps + 1` samples), `lag` the one before it.
fn picard_sweep<T: Real>(
    model: &Model<T>,
    initial: &State<T>,
    prev: &[Sample<T>],
    lag: &[Sample<T>],
    steps: usize,
    h: T,
) -> Result<(Vec<Sample<T>>, State<T>)> {
    let coeffs = |i: usize| {
        let basic = BasicState {
            v: prev[i].v.clone(),
            f: prev[i].f.clone(),
            psi: prev[i].psi.clone(),
            psi_t: prev[i].dpsi.clone(),
            psi_lag: lag[i].psi.clone(),
        };
        linearized_coefficients(model, &basic)
    };
    let half = h / lit(2.0);
    let mut out = Vec::with_capacity(4 * steps + 1);
    let mut s = initial.clone();
    for j in 0..steps {
        let k1 = evaluate(model, &coeffs(4 * j)?, &s.v, &s.f, &s.psi, Some(&s.q))?;
        out.push(Sample::new(&s, &k1));
        let s2 = shifted(&s, &k1, half);
        let k2 = evaluate(model, &coeffs(4 * j + 1)?, &s2.v, &s2.f, &s2.psi, Some(&k1.q))?;
        out.push(Sample::new(&s2, &k2));
        let s3 = shifted(&s, &k2, half);
        let k3 = evaluate(model, &coeffs(4 * j + 2)?, &s3.v, &s3.f, &s3.psi, Some(&k2.q))?;
        out.push(Sample::new(&s3, &k3));
        let s4 = shifted(&s, &k3, h);
        let k4 = evaluate(model, &coeffs(4 * j + 3)?, &s4.v, &s4.f, &s4.psi, Some(&k3.q))?;
        out.push(Sample::new(&s4, &k4));
        let mut next = rk4_combine(&s, [&k1, &k2, &k3, &k4], h);
        next.q = k4.q.clone();
        if !next.all_finite() {
            return Err(Error::InvalidTimeStep(format!("Picard iterate non-finite at t = {}", next.t)));
        }
        s = next;
    }
    let kend = evaluate(model, &coeffs(4 * steps)?, &s.v, &s.f, &s.psi, Some(&s.q))?;
    out.push(Sample::new(&s, &kend));
    s.q = kend.q;
    s.psi_t = kend.dpsi;
    Ok((out, s))
}

/// Picard iteration for the κ-system on `[0, T]` starting from the zero
/// iterate. Iterate `n+1` solves the linearised system whose coefficients
/// are iterate `n` (and iterate `n−1` for the lagged normal), sampled at the
/// same RK stages; a converged sequence is therefore a fixed point of the
/// nonlinear RK4 scheme with `F` replaced by `𝔉`.
pub fn picard_iterate<T: Real>(model: &Model<T>, initial: &State<T>, opts: &PicardOptions<T>) -> Result<PicardReport<T>> {
    if opts.n_max == 0 {
        return Err(Error::InvalidArgument("n_max must be >= 1".into()));
    }
    if !(opts.t_final > T::zero()) || !opts.t_final.is_finite() {
        return Err(Error::InvalidTimeStep(format!("T = {}", opts.t_final)));
    }
    let grid = &model.grid;
    let steps = match opts.steps {
        Some(0) => return Err(Error::InvalidArgument("steps must be >= 1".into())),
        Some(n) => n,
        None => {
            let dt = cfl_dt(model, initial, opts.safety)?;
            (to_f64(opts.t_final / dt) - 1e-9).ceil().max(1.0) as usize
        }
    };
    let h = opts.t_final / idx(steps);
    let mut start = initial.clone();
    start.t = T::zero();

    let zeros: Vec<Sample<T>> = (0..4 * steps + 1).map(|_| Sample::zeros(grid)).collect();
    let mut lag = zeros.clone();
    let mut prev = zeros;
    let mut energies: Vec<f64> = Vec::new();
    let mut iterates = Vec::with_capacity(opts.n_max);
    let mut breakdown = None;
    for n in 1..=opts.n_max {
        let (cur, end) = match picard_sweep(model, &start, &prev, &lag, steps, h) {
            Ok(r) => r,
            Err(e) if e.is_breakdown() || matches!(e, Error::InvalidTimeStep(_)) => {
                breakdown = Some(format!("iterate {n}: {e}"));
                break;
            }
            Err(e) => return Err(e),
        };
        if n >= 2 {
            let mut sup = 0.0f64;
            for j in 0..=steps {
                sup = sup.max(difference_energy(grid, model.params.kappa, &cur[4 * j], &prev[4 * j])?);
            }
            energies.push(sup);
        }
        iterates.push(end);
        lag = std::mem::replace(&mut prev, cur);
    }
    // energies[i] is [E]^{[i+1]} = E(f^{[i+2]} − f^{[i+1]})
    let rows: Vec<PicardRow> = energies
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            let n = i + 1;
            let rho = if n >= 3 {
                let d = energies[i - 1] + energies[i - 2];
                Some(if d > 0.0 { e / d } else { 0.0 })
            } else {
                None
            };
            let increased = i > 0 && !(e < energies[i - 1] || energies[i - 1] == 0.0);
            PicardRow { n, energy: e, rho, increased }
        })
        .collect();
    let contracting = breakdown.is_none() && energies.windows(2).all(|w| w[1] < w[0] || w[0] == 0.0);
    let mut boundary = f64::NAN;
    if let Some(last) = iterates.last() {
        boundary = 0.0;
        for col in &last.f {
            boundary = boundary.max(to_f64(boundary_defect(grid, col, &last.psi)?.max_abs()));
        }
    }
    Ok(PicardReport { steps, dt: to_f64(h), iterates, rows, contracting, boundary_defect: boundary, breakdown })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::state::Params;

    fn model(n: usize, nz: usize) -> Model<f64> {
        Model::new(make_grid(n, n, nz, 1.0).unwrap(), Params::new(0.5, 0.1, 1.0)).unwrap()
    }

    #[test]
    fn flat_zero_state_matrices() {
        let p = BasicPoint {
            v: [0.0; 3],
            frak_f: [0.0; 3],
            normal: [0.0, 0.0, 1.0],
            normal_lag: [0.0, 0.0, 1.0],
            d3phi: 1.0,
            dtphi: 0.0,
        };
        let m = assemble_matrices(&p).unwrap();
        let a3 = m.a[3];
        for i in 0..DIM {
            for j in 0..DIM {
                let expect = if (i, j) == (0, 3) || (i, j) == (3, 0) { 1.0 } else { 0.0 };
                assert_eq!(a3[i][j], expect, "({i},{j})");
            }
        }
        assert!(assemble_matrices(&BasicPoint { d3phi: 0.0, ..p }).is_err());
    }

    #[test]
    fn extension_of_constants_and_cosines() {
        let m = model(16, 17);
        let g = &m.grid;
        let c = extension_operator(g, &m.cutoff, &g.surface_from_fn(|_, _| 0.7)).unwrap();
        let expect = g.volume_from_fn(|_, _, z| 0.7 * m.cutoff.chi(z) * z.exp());
        assert!(c.sub(&expect).max_abs() < 1e-13);
        let e = extension_operator(g, &m.cutoff, &g.surface_from_fn(|x, _| x.cos())).unwrap();
        let expect = g.volume_from_fn(|x, _, z| m.cutoff.chi(z) * (2f64.sqrt() * z).exp() * x.cos());
        assert!(e.sub(&expect).max_abs() < 1e-13);
    }

    #[test]
    fn constant_defect_is_removed() {
        let m = model(8, 9);
        let g = &m.grid;
        let mut f = [vec_zeros(g), vec_zeros(g), vec_zeros(g)];
        f[0][2] = g.volume_from_fn(|_, _, _| 1.0);
        let psi = g.surface_zeros();
        let frak = modified_deformation(g, &m.cutoff, &f, &psi).unwrap();
        assert!(frak[0][2].top().max_abs() < 1e-14);
        assert!((frak[0][2].bottom().max_abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn basis_is_orthonormal() {
        let m = model(16, 17);
        let g = &m.grid;
        let basis = GalerkinBasis::new(g, 32).unwrap();
        for a in 0..basis.dim() {
            for b in 0..basis.dim() {
                let ip = g.integrate_volume(&basis.volume[a].hadamard(&basis.volume[b]));
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((ip - expect).abs() < 1e-12, "({a},{b}) {ip}");
            }
        }
        let f = basis.volume[5].scale(2.0).add(&basis.volume[9]);
        assert!(basis.project(g, &f).sub(&f).max_abs() < 1e-12);
        assert!(GalerkinBasis::new(g, 65).is_err());
    }

    #[test]
    fn zero_data_stays_zero() {
        let m = model(8, 9);
        let g = &m.grid;
        let zero = State::zeros(g);
        let run = galerkin_evolve(&m, &BasicState::zeros(g), &zero, 8, 0.01, 0.03).unwrap();
        assert_eq!(run.times.len(), 4);
        assert!(run.energy.iter().all(|&e| e == 0.0));
        assert!(run.coefficients.iter().flatten().all(|&c| c == 0.0));
        let rep = picard_iterate(&m, &zero, &PicardOptions { steps: Some(2), ..PicardOptions::new(4, 0.02) }).unwrap();
        assert!(rep.rows.iter().all(|r| r.energy == 0.0));
        assert!(rep.iterates.iter().all(|s| s.v.iter().chain(s.f.iter().flatten()).all(|f| f.max_abs() == 0.0)));
    }
}
