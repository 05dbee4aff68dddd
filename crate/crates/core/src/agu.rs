//! Alinhac good unknowns, the commutators `𝒞_i`, `𝒟`, and exact checks of
//!
//! ```text
//! D^α∂_i^φ f = ∂_i^φ(D^αf − D^αφ ∂₃^φf) + 𝒞_i(f),
//! D^α D_t^φ f = D_t^φ(D^αf − D^αφ ∂₃^φf) + 𝒟(f),
//! ```
//!
//! with `D^α = ∂_t^{α₀}∂₁^{α₁}∂₂^{α₂}`. The checks run on manufactured
//! fields whose derivatives are exact (Taylor jets), so any residual beyond
//! round-off is an error in the formulas.
//!
//! The displayed commutators contain a term `[D^{α−β}, 1/(∂₃φ)²]D^β∂₃φ`
//! with `|β| = 1`. Two readings are implemented: a single `β ≤ α` (the
//! first non-zero direction of `α`), and the sum over all admissible unit
//! `β`. The first is exact since
//! `D^α(1/J) = −D^αJ/J² − [D^{α−β}, 1/J²]D^βJ` holds for any one `β`.

use crate::diagnostics::fornberg_weights;
use crate::error::{Error, Result};
use crate::geometry::Cutoff;
use crate::grid::{Field, Grid};
use crate::jet::{Jet, JetSpace};
use crate::scalar::{lit, to_f64, Real};
use rand::Rng;

/// `(α₀, α₁, α₂)`: orders of `∂_t`, `∂₁`, `∂₂`.
pub type MultiIndex = [usize; 3];

fn exps(a: MultiIndex) -> [usize; 4] {
    [a[0], a[1], a[2], 0]
}

fn order(a: MultiIndex) -> usize {
    a.iter().sum()
}

/// All `α` with `|α| ≤ max_total` and `α₀ ≤ max_time`.
pub fn multi_indices(max_total: usize, max_time: usize) -> Vec<MultiIndex> {
    let mut out = Vec::new();
    for a0 in 0..=max_time.min(max_total) {
        for a1 in 0..=max_total - a0 {
            for a2 in 0..=max_total - a0 - a1 {
                out.push([a0, a1, a2]);
            }
        }
    }
    out
}

/// How the single `β` in the displayed commutators is read.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BetaReading {
    /// One fixed unit `β ≤ α`.
    Single,
    /// Sum over every unit `β ≤ α`.
    Sum,
}

impl BetaReading {
    fn betas(self, a: MultiIndex) -> Vec<usize> {
        let dirs: Vec<usize> = (0..3).filter(|&d| a[d] > 0).collect();
        match self {
            BetaReading::Single => dirs.into_iter().take(1).collect(),
            BetaReading::Sum => dirs,
        }
    }
}

/// `amp · sin(k₀t + k₁x₁ + k₂x₂ + θ) · (e^{m x₃} + p₀ + p₁x₃ + p₂x₃²)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mode<T> {
    pub amp: T,
    pub k: [T; 3],
    pub phase: T,
    pub rate: T,
    pub poly: [T; 3],
}

impl<T: Real> Mode<T> {
    fn jet(&self, vars: &[Jet<T>; 4]) -> Jet<T> {
        let arg = &(&(&vars[0].scale(self.k[0]) + &vars[1].scale(self.k[1])) + &vars[2].scale(self.k[2]))
            + &Jet::constant(vars[0].space(), self.phase);
        let vertical = &vars[3].scale(self.rate).exp() + &vars[3].poly(&self.poly);
        (&arg.sin() * &vertical).scale(self.amp)
    }

    fn random(rng: &mut impl Rng, amp: f64) -> Self {
        let int = |rng: &mut dyn rand::RngCore| -> T { lit(rng.gen_range(-2i32..=2) as f64) };
        Mode {
            amp: lit(amp * rng.gen_range(0.5..1.0)),
            k: [lit(rng.gen_range(-1.0..1.0)), int(rng), int(rng)],
            phase: lit(rng.gen_range(0.0..std::f64::consts::TAU)),
            rate: lit(rng.gen_range(-1.0..1.0)),
            poly: [lit(rng.gen_range(-0.5..0.5)), lit(rng.gen_range(-0.5..0.5)), lit(rng.gen_range(-0.5..0.5))],
        }
    }
}

/// Manufactured `(f, v, ψ)` with `φ = x₃ + χ(x₃)ψ(t, x̄)` and the full-depth
/// quintic cutoff.
#[derive(Clone, Debug, PartialEq)]
pub struct ManufacturedCase<T> {
    pub b: T,
    pub f: Vec<Mode<T>>,
    pub v: [Vec<Mode<T>>; 3],
    /// `ψ = amp·sin(l₁x₁ + l₂x₂ − ωt + θ)` as `(amp, [−ω, l₁, l₂], θ)`.
    pub psi: (T, [T; 3], T),
}

impl<T: Real> ManufacturedCase<T> {
    pub fn random(rng: &mut impl Rng) -> Self {
        let modes = |rng: &mut _, n: usize| (0..n).map(|_| Mode::random(rng, 1.0)).collect::<Vec<_>>();
        let f = modes(rng, 2);
        let v = [modes(rng, 1), modes(rng, 1), modes(rng, 1)];
        let l1 = rng.gen_range(-2i32..=2);
        let l2 = if l1 == 0 { rng.gen_range(1..=2) } else { rng.gen_range(-2i32..=2) };
        let psi = (
            lit(rng.gen_range(0.02..0.1)),
            [lit(rng.gen_range(-1.0..1.0)), lit(l1 as f64), lit(l2 as f64)],
            lit(rng.gen_range(0.0..std::f64::consts::TAU)),
        );
        ManufacturedCase { b: T::one(), f, v, psi }
    }

    /// Flat geometry (`ψ ≡ 0`) with the same `f` and `v`.
    pub fn flattened(&self) -> Self {
        ManufacturedCase { psi: (T::zero(), self.psi.1, self.psi.2), ..self.clone() }
    }

    /// A random evaluation point with `x₃ ∈ [−b, 0]`.
    pub fn random_point(&self, rng: &mut impl Rng) -> [T; 4] {
        [
            lit(rng.gen_range(0.0..1.0)),
            lit(rng.gen_range(0.0..std::f64::consts::TAU)),
            lit(rng.gen_range(0.0..std::f64::consts::TAU)),
            lit(-to_f64(self.b) * rng.gen_range(0.0..1.0)),
        ]
    }
}

/// Every jet the identities need at one point.
pub struct PointContext<T> {
    f: Jet<T>,
    phi: Jet<T>,
    d3f: Jet<T>,
    inv_j: Jet<T>,
    inv_j2: Jet<T>,
    j: Jet<T>,
    /// `∂_τφ/∂₃φ`.
    a: [Jet<T>; 2],
    /// `(∂_τφ/∂₃φ)∂₃f`.
    a_d3f: [Jet<T>; 2],
    /// `∂₃^φ f`.
    p3f: Jet<T>,
    /// `∂_i^φ f` and `D_t^φ f`.
    pf: [Jet<T>; 3],
    dtf: Jet<T>,
    v: [Jet<T>; 3],
    /// `𝐍 = (−∂₁φ, −∂₂φ, 1)` and `W = v·𝐍 − ∂_tφ`, `c = W/∂₃φ`.
    n: [Jet<T>; 3],
    vn: Jet<T>,
    w: Jet<T>,
    c: Jet<T>,
    c_d3f: Jet<T>,
    /// `v̄·∇̄f`.
    vgf: Jet<T>,
    /// `(1/J²)·∂_βJ` for `β ∈ {t, x₁, x₂}`.
    g_beta: [Jet<T>; 3],
}

impl<T: Real> PointContext<T> {
    pub fn new(case: &ManufacturedCase<T>, point: [T; 4], max_alpha: usize) -> Self {
        let space = JetSpace::new(max_alpha + 3);
        let vars: [Jet<T>; 4] = std::array::from_fn(|d| Jet::variable(&space, d, point[d]));
        let sum = |modes: &[Mode<T>]| {
            modes.iter().fold(Jet::constant(&space, T::zero()), |acc, m| &acc + &m.jet(&vars))
        };
        let f = sum(&case.f);
        let v: [Jet<T>; 3] = std::array::from_fn(|i| sum(&case.v[i]));
        let (amp, l, theta) = case.psi;
        let arg = &(&(&vars[0].scale(l[0]) + &vars[1].scale(l[1])) + &vars[2].scale(l[2])) + &Jet::constant(&space, theta);
        let psi = arg.sin().scale(amp);
        // χ(z) = 10r³ − 15r⁴ + 6r⁵, r = (z + b)/b
        let r = (&vars[3] + &Jet::constant(&space, case.b)).scale(T::one() / case.b);
        let chi = r.poly(&[T::zero(), T::zero(), T::zero(), lit(10.0), lit(-15.0), lit(6.0)]);
        let phi = &vars[3] + &(&chi * &psi);

        let j = phi.diff(3);
        let inv_j = j.recip();
        let inv_j2 = &inv_j * &inv_j;
        let d3f = f.diff(3);
        let a: [Jet<T>; 2] = std::array::from_fn(|t| &phi.diff(t + 1) * &inv_j);
        let a_d3f: [Jet<T>; 2] = std::array::from_fn(|t| &a[t] * &d3f);
        let p3f = &inv_j * &d3f;
        let pf = [&f.diff(1) - &a_d3f[0], &f.diff(2) - &a_d3f[1], p3f.clone()];
        let n = [-&phi.diff(1), -&phi.diff(2), Jet::constant(&space, T::one())];
        let vn = &(&(&v[0] * &n[0]) + &(&v[1] * &n[1])) + &v[2];
        let w = &vn - &phi.diff(0);
        let c = &w * &inv_j;
        let c_d3f = &c * &d3f;
        let vgf = &(&v[0] * &f.diff(1)) + &(&v[1] * &f.diff(2));
        let dtf = &(&f.diff(0) + &vgf) + &c_d3f;
        let g_beta: [Jet<T>; 3] = std::array::from_fn(|d| &inv_j2 * &j.diff(d));
        PointContext { f, phi, d3f, inv_j, inv_j2, j, a, a_d3f, p3f, pf, dtf, v, n, vn, w, c, c_d3f, vgf, g_beta }
    }

    fn da(&self, x: &Jet<T>, a: MultiIndex) -> T {
        x.derivative_value(exps(a))
    }

    /// `[D^α, x, y] = D^α(xy) − D^αx·y − x·D^αy`, with `xy` given.
    fn triple(&self, a: MultiIndex, xy: &Jet<T>, x: &Jet<T>, y: &Jet<T>) -> T {
        self.da(xy, a) - self.da(x, a) * y.value() - x.value() * self.da(y, a)
    }

    /// `Σ_β [D^{α−β}, 1/J²] D^βJ` under the given reading.
    fn beta_term(&self, a: MultiIndex, reading: BetaReading) -> T {
        let mut acc = T::zero();
        for d in reading.betas(a) {
            let mut rest = a;
            rest[d] -= 1;
            acc = acc + self.da(&self.g_beta[d], rest) - self.inv_j2.value() * self.da(&self.j, a);
        }
        acc
    }

    /// The good unknown `D^αf − D^αφ ∂₃^φf` as a jet (`f` itself for
    /// `α = 0`).
    pub fn good_unknown(&self, a: MultiIndex) -> Jet<T> {
        if order(a) == 0 {
            return self.f.clone();
        }
        let e = exps(a);
        &self.f.diff_multi(e) - &(&self.phi.diff_multi(e) * &self.p3f)
    }

    /// `𝒞_i(f)` for `i ∈ {0, 1, 2}` (meaning `x₁, x₂, x₃`).
    pub fn commutator_c(&self, a: MultiIndex, i: usize, reading: BetaReading) -> T {
        if order(a) == 0 {
            return T::zero();
        }
        let dphi = self.da(&self.phi, a);
        let d3f = self.d3f.value();
        match i {
            0 | 1 => {
                let tau = i + 1;
                let p3 = &self.p3f;
                let ptau_p3 = p3.derivative_value(unit(tau)) - self.a[i].value() * p3.derivative_value(unit(3));
                let dtau_phi = self.phi.diff(tau);
                dphi * ptau_p3 - self.triple(a, &self.a_d3f[i], &self.a[i], &self.d3f)
                    - d3f * self.triple(a, &self.a[i], &dtau_phi, &self.inv_j)
                    + d3f * dtau_phi.value() * self.beta_term(a, reading)
            }
            2 => {
                let p33 = self.inv_j.value() * self.p3f.derivative_value(unit(3));
                dphi * p33 + self.triple(a, &self.p3f, &self.inv_j, &self.d3f) - d3f * self.beta_term(a, reading)
            }
            _ => panic!("direction index must be 0, 1 or 2"),
        }
    }

    fn material(&self, x: &Jet<T>) -> T {
        x.derivative_value(unit(0))
            + self.v[0].value() * x.derivative_value(unit(1))
            + self.v[1].value() * x.derivative_value(unit(2))
            + self.c.value() * x.derivative_value(unit(3))
    }

    /// `𝒟(f)`.
    pub fn commutator_dcal(&self, a: MultiIndex, reading: BetaReading) -> T {
        if order(a) == 0 {
            return T::zero();
        }
        let e = exps(a);
        let dphi = self.da(&self.phi, a);
        let d3f = self.d3f.value();
        let daf = self.f.diff_multi(e);
        let v_grad_daf = self.v[0].value() * daf.derivative_value(unit(1)) + self.v[1].value() * daf.derivative_value(unit(2));
        let comm_v = self.da(&self.vgf, a) - v_grad_daf;
        let v_dan: T = (0..2).map(|k| self.v[k].value() * self.da(&self.n[k], a)).sum();
        let comm_vn = self.da(&self.vn, a) - v_dan;
        dphi * self.material(&self.p3f)
            + comm_v
            + self.triple(a, &self.c_d3f, &self.c, &self.d3f)
            + self.triple(a, &self.c, &self.inv_j, &self.w) * d3f
            - self.w.value() * d3f * self.beta_term(a, reading)
            + self.inv_j.value() * d3f * comm_vn
    }

    /// `(‖LHS − RHS‖ for i = 1, 2, 3; for the 𝒟 identity)` at this point,
    /// with the sizes of the left-hand sides for scaling.
    pub fn residuals(&self, a: MultiIndex, reading: BetaReading) -> ([T; 3], T, T) {
        let e = exps(a);
        let agu = self.good_unknown(a);
        let d3 = agu.derivative_value(unit(3));
        let mut c = [T::zero(); 3];
        let mut scale = T::one();
        for i in 0..3 {
            let lhs = self.pf[i].derivative_value(e);
            let grad = if i < 2 {
                agu.derivative_value(unit(i + 1)) - self.a[i].value() * d3
            } else {
                self.inv_j.value() * d3
            };
            let rhs = grad + self.commutator_c(a, i, reading);
            c[i] = (lhs - rhs).abs();
            scale = scale.max(lhs.abs());
        }
        let lhs = self.dtf.derivative_value(e);
        let rhs = self.material(&agu) + self.commutator_dcal(a, reading);
        scale = scale.max(lhs.abs());
        (c, (lhs - rhs).abs(), scale)
    }
}

fn unit(d: usize) -> [usize; 4] {
    let mut e = [0; 4];
    e[d] = 1;
    e
}

/// Worst residuals of one manufactured case.
#[derive(Clone, Debug, PartialEq)]
pub struct CaseResidual {
    pub case: usize,
    pub worst_alpha: MultiIndex,
    /// `max |LHS − RHS|` of the `∂_i^φ` identities and of the `D_t^φ`
    /// identity (single-β reading), and the same under the sum reading.
    pub c_single: f64,
    pub d_single: f64,
    pub c_sum: f64,
    pub d_sum: f64,
    /// Largest left-hand side, for scale.
    pub scale: f64,
}

/// Residual table over a seeded manufactured suite.
#[derive(Clone, Debug, PartialEq)]
pub struct AguReport {
    pub seed: u64,
    pub rows: Vec<CaseResidual>,
    pub alphas: usize,
    /// The reading under which both identities hold (to `tol`), if any.
    pub selected: Option<BetaReading>,
    pub max_single: f64,
    pub max_sum: f64,
}

/// Checks both identities on `cases` random manufactured inputs, for every
/// `|α| ≤ max_total`, `α₀ ≤ max_time`, at `points` random points each.
pub fn verify_suite(seed: u64, cases: usize, points: usize, max_total: usize, max_time: usize, tol: f64) -> AguReport {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let alphas = multi_indices(max_total, max_time);
    let mut rows = Vec::new();
    for case_id in 0..cases {
        let case: ManufacturedCase<f64> = ManufacturedCase::random(&mut rng);
        let mut row = CaseResidual { case: case_id, worst_alpha: [0; 3], c_single: 0.0, d_single: 0.0, c_sum: 0.0, d_sum: 0.0, scale: 0.0 };
        let mut worst = -1.0;
        for _ in 0..points {
            let p = case.random_point(&mut rng);
            let ctx = PointContext::new(&case, p, max_total);
            for &a in &alphas {
                let (c1, d1, s) = ctx.residuals(a, BetaReading::Single);
                let (c2, d2, _) = ctx.residuals(a, BetaReading::Sum);
                let cmax = c1.iter().copied().fold(0.0, f64::max);
                row.c_single = row.c_single.max(cmax);
                row.d_single = row.d_single.max(d1);
                row.c_sum = row.c_sum.max(c2.iter().copied().fold(0.0, f64::max));
                row.d_sum = row.d_sum.max(d2);
                row.scale = row.scale.max(s);
                if cmax.max(d1) > worst {
                    worst = cmax.max(d1);
                    row.worst_alpha = a;
                }
            }
        }
        rows.push(row);
    }
    let max_single = rows.iter().map(|r| r.c_single.max(r.d_single)).fold(0.0, f64::max);
    let max_sum = rows.iter().map(|r| r.c_sum.max(r.d_sum)).fold(0.0, f64::max);
    let selected = if max_single <= tol {
        Some(BetaReading::Single)
    } else if max_sum <= tol {
        Some(BetaReading::Sum)
    } else {
        None
    };
    AguReport { seed, rows, alphas: alphas.len(), selected, max_single, max_sum }
}

/// Good unknown of sampled fields at `times[at]`.
///
/// Horizontal derivatives are spectral; `∂_t^{α₀}` uses finite differences
/// over the supplied snapshots; `∂₃^φf = ∂₃f/∂₃φ` is pointwise.
pub fn good_unknown<T: Real>(
    grid: &Grid<T>,
    f: &[Field<T>],
    phi: &[Field<T>],
    times: &[T],
    at: usize,
    alpha: MultiIndex,
) -> Result<Field<T>> {
    if f.len() != times.len() || phi.len() != times.len() || at >= times.len() {
        return Err(Error::ShapeMismatch("time series lengths differ".into()));
    }
    if times.len() < alpha[0] + 1 {
        return Err(Error::InsufficientHistory { needed: alpha[0] + 1, have: times.len() });
    }
    let ts: Vec<f64> = times.iter().map(|&t| to_f64(t)).collect();
    let w = fornberg_weights(ts[at], &ts, alpha[0]);
    let horizontal = |g: &Field<T>| {
        let k_pow = |k: i64, p: usize| -> num_complex::Complex<T> {
            let ik = num_complex::Complex::new(T::zero(), T::from_i64(k).unwrap());
            (0..p).fold(num_complex::Complex::new(T::one(), T::zero()), |acc, _| acc * ik)
        };
        let mut s = grid.forward(g);
        let (n1, n2) = (grid.nx as i64 / 2, grid.ny as i64 / 2);
        s.scale_by(grid, |k1, k2| {
            if (alpha[1] % 2 == 1 && k1 == -n1) || (alpha[2] % 2 == 1 && k2 == -n2) {
                num_complex::Complex::default()
            } else {
                k_pow(k1, alpha[1]) * k_pow(k2, alpha[2])
            }
        });
        grid.inverse(&s)
    };
    let dalpha = |series: &[Field<T>]| {
        let mut acc = series[0].scale(T::zero());
        for (g, &wi) in series.iter().zip(&w) {
            if wi != 0.0 {
                acc.axpy(lit(wi), g);
            }
        }
        horizontal(&acc)
    };
    if order(alpha) == 0 {
        return Ok(f[at].clone());
    }
    let p3f = grid.dz(&f[at]).zip_map(&grid.dz(&phi[at]), |a, b| a / b);
    Ok(dalpha(f).sub(&dalpha(phi).hadamard(&p3f)))
}

/// `φ = x₃ + χ(x₃)ψ` sampled on the grid.
pub fn sample_phi<T: Real>(grid: &Grid<T>, cutoff: &Cutoff<T>, psi: &Field<T>) -> Field<T> {
    let profile: Vec<T> = grid.z.iter().map(|&z| cutoff.chi(z)).collect();
    let mut phi = grid.outer(&profile, psi);
    for (iz, &z) in grid.z.iter().enumerate() {
        let n = grid.layer_len();
        for x in &mut phi.data[iz * n..(iz + 1) * n] {
            *x = *x + z;
        }
    }
    phi
}
