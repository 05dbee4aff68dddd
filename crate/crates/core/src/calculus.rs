//! Flattened differential operators, surface operators, Fourier multipliers
//! and Sobolev norms.
//!
//! With `J = ∂₃φ` the induced operators are
//! `∂_τ^φ = ∂_τ − (∂_τφ/J)∂₃` and `∂₃^φ = (1/J)∂₃`. All inputs are assumed
//! band-limited; products are projected back onto the 2/3 band. Because the
//! projection is linear, sums of products are projected once.

use crate::error::{Error, Result};
use crate::geometry::Geometry;
use crate::grid::{Field, Grid, VecField};
use crate::scalar::{idx, Real};

/// `∇^φ f`.
pub fn grad_phi<T: Real>(grid: &Grid<T>, geom: &Geometry<T>, f: &Field<T>) -> VecField<T> {
    let (f1, f2) = grid.grad_h(f);
    let f3 = grid.dz(f);
    grad_phi_from_parts(grid, geom, f1, f2, &f3)
}

/// `∇^φ f` from precomputed flat derivatives `(∂₁f, ∂₂f, ∂₃f)`.
pub fn grad_phi_from_parts<T: Real>(
    grid: &Grid<T>,
    geom: &Geometry<T>,
    mut f1: Field<T>,
    mut f2: Field<T>,
    f3: &Field<T>,
) -> VecField<T> {
    f1.axpy(-T::one(), &grid.mul(&geom.c1, f3));
    f2.axpy(-T::one(), &grid.mul(&geom.c2, f3));
    [f1, f2, grid.mul(&geom.inv_j, f3)]
}

/// `∇^φ·X`.
pub fn div_phi<T: Real>(grid: &Grid<T>, geom: &Geometry<T>, x: &VecField<T>) -> Field<T> {
    let d1 = grid.d1(&x[0]);
    let d2 = grid.d2(&x[1]);
    let z1 = grid.dz(&x[0]);
    let z2 = grid.dz(&x[1]);
    let z3 = grid.dz(&x[2]);
    let mut raw = geom.inv_j.hadamard(&z3);
    raw.axpy(-T::one(), &geom.c1.hadamard(&z1));
    raw.axpy(-T::one(), &geom.c2.hadamard(&z2));
    let mut out = grid.dealias(&raw);
    out.add_assign(&d1);
    out.add_assign(&d2);
    out
}

/// `∇^φ×X`.
pub fn curl_phi<T: Real>(grid: &Grid<T>, geom: &Geometry<T>, x: &VecField<T>) -> VecField<T> {
    let [g0, g1, g2] = [0, 1, 2].map(|i| grad_phi(grid, geom, &x[i]));
    [g2[1].sub(&g1[2]), g0[2].sub(&g2[0]), g1[0].sub(&g0[1])]
}

/// Transport velocity `V_𝐍 = (v·𝐍 − ∂_tφ)/∂₃φ`, vanishing on `Σ` when
/// `∂_tψ = v·N`.
pub fn normal_transport<T: Real>(grid: &Grid<T>, geom: &Geometry<T>, v: &VecField<T>) -> Field<T> {
    let mut vn = v[0].hadamard(&geom.normal[0]);
    vn.axpy(T::one(), &v[1].hadamard(&geom.normal[1]));
    let mut vn = grid.dealias(&vn);
    vn.add_assign(&v[2]);
    vn.axpy(-T::one(), &geom.dtphi);
    grid.mul(&vn, &geom.inv_j)
}

/// Spatial part of the material derivative, `v̄·∂̄f + V_𝐍∂₃f`, for a given
/// transport velocity.
pub fn advect<T: Real>(grid: &Grid<T>, v: &VecField<T>, vn: &Field<T>, f: &Field<T>) -> Field<T> {
    let (f1, f2) = grid.grad_h(f);
    let f3 = grid.dz(f);
    advect_parts(grid, v, vn, &f1, &f2, &f3)
}

pub(crate) fn advect_parts<T: Real>(
    grid: &Grid<T>,
    v: &VecField<T>,
    vn: &Field<T>,
    f1: &Field<T>,
    f2: &Field<T>,
    f3: &Field<T>,
) -> Field<T> {
    let mut raw = v[0].hadamard(f1);
    raw.axpy(T::one(), &v[1].hadamard(f2));
    raw.axpy(T::one(), &vn.hadamard(f3));
    grid.dealias(&raw)
}

/// `D_t^φ f = ∂_tf + v̄·∂̄f + (1/∂₃φ)(v·𝐍 − ∂_tφ)∂₃f`.
pub fn material_derivative<T: Real>(
    grid: &Grid<T>,
    geom: &Geometry<T>,
    f: &Field<T>,
    f_t: &Field<T>,
    v: &VecField<T>,
) -> Field<T> {
    let vn = normal_transport(grid, geom, v);
    advect(grid, v, &vn, f).add(f_t)
}

/// Directional derivative `(a·∇^φ)g = a₁∂₁g + a₂∂₂g + ((a·𝐍)/∂₃φ)∂₃g`.
pub fn directional<T: Real>(grid: &Grid<T>, geom: &Geometry<T>, a: &VecField<T>, g: &Field<T>) -> Field<T> {
    let an = normal_transport_static(grid, geom, a);
    advect(grid, a, &an, g)
}

/// `(a·𝐍)/∂₃φ` without the `∂_tφ` shift.
pub fn normal_transport_static<T: Real>(grid: &Grid<T>, geom: &Geometry<T>, a: &VecField<T>) -> Field<T> {
    let mut an = a[0].hadamard(&geom.normal[0]);
    an.axpy(T::one(), &a[1].hadamard(&geom.normal[1]));
    let mut an = grid.dealias(&an);
    an.add_assign(&a[2]);
    grid.mul(&an, &geom.inv_j)
}

/// Mean curvature `ℋ(ψ) = −∇̄·(∇̄ψ/√(1+|∇̄ψ|²))`, so that `q = σℋ` on `Σ`.
pub fn mean_curvature<T: Real>(grid: &Grid<T>, psi: &Field<T>) -> Field<T> {
    let (p1, p2) = grid.grad_h(psi);
    let inv_len = grid.dealias(&p1.zip_map(&p2, |a, b| T::one() / (T::one() + a * a + b * b).sqrt()));
    let a = grid.mul(&p1, &inv_len);
    let b = grid.mul(&p2, &inv_len);
    grid.d1(&a).add(&grid.d2(&b)).scale(-T::one())
}

/// Fourier multipliers used by the κ-regularisation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Symbol {
    /// `1 + |k|²`, i.e. `1 − Δ̄`.
    OneMinusLap,
    /// `(1 + |k|²)²`.
    OneMinusLapSq,
    /// `⟨k⟩ = √(1 + |k|²)`.
    Bracket,
}

impl Symbol {
    pub fn eval<T: Real>(self, k1: i64, k2: i64) -> T {
        let m: T = idx::<T>((1 + k1 * k1 + k2 * k2) as usize);
        match self {
            Symbol::OneMinusLap => m,
            Symbol::OneMinusLapSq => m * m,
            Symbol::Bracket => m.sqrt(),
        }
    }
}

pub fn multiplier<T: Real>(grid: &Grid<T>, f: &Field<T>, symbol: Symbol) -> Field<T> {
    grid.apply_symbol(f, |k1, k2| symbol.eval(k1, k2))
}

/// `|f|_s = (Σ_k (1+|k|²)^s |f̂(k)|² (2π)²)^{1/2}` for a surface field.
pub fn sobolev_norm_surface<T: Real>(grid: &Grid<T>, f: &Field<T>, s: T) -> Result<T> {
    if !(s >= T::zero()) {
        return Err(Error::InvalidArgument("Sobolev order must be >= 0".into()));
    }
    if f.nz != 1 {
        return Err(Error::ShapeMismatch("surface norm of a volume field".into()));
    }
    grid.check(f)?;
    let spec = grid.forward(f);
    let area = T::TAU() * T::TAU();
    let e = spec.weighted_energy(grid, 0, |k1, k2| idx::<T>((1 + k1 * k1 + k2 * k2) as usize).powf(s));
    Ok((e * area).sqrt())
}

/// `‖f‖_s = (Σ_{|γ|≤s} ‖∂^γ f‖²_{L²(Ω)})^{1/2}` for integer `s ≤ 4`.
pub fn sobolev_norm_interior<T: Real>(grid: &Grid<T>, f: &Field<T>, s: usize) -> Result<T> {
    if s > 4 {
        return Err(Error::InvalidArgument("interior Sobolev order must be in 0..=4".into()));
    }
    if f.nz != grid.nz {
        return Err(Error::ShapeMismatch("interior norm of a surface field".into()));
    }
    grid.check(f)?;
    // vertical derivatives ∂₃^c f for c = 0..s
    let mut vert = vec![f.clone()];
    for c in 1..=s {
        let next = grid.dz(&vert[c - 1]);
        vert.push(next);
    }
    let mut total = T::zero();
    for (c, g) in vert.iter().enumerate() {
        let spec = grid.forward(g);
        let rem = s - c;
        // Σ_{a+b ≤ rem} k₁^{2a} k₂^{2b}, via Parseval per layer
        let weight = |k1: i64, k2: i64| -> T {
            let (x, y): (T, T) = (idx((k1 * k1) as usize), idx((k2 * k2) as usize));
            let mut w = T::zero();
            for a in 0..=rem {
                for b in 0..=(rem - a) {
                    w = w + x.powi(a as i32) * y.powi(b as i32);
                }
            }
            w
        };
        let area = T::TAU() * T::TAU();
        for (iz, &wz) in grid.cc_weights().iter().enumerate() {
            total = total + wz * area * spec.weighted_energy(grid, iz, weight);
        }
    }
    Ok(total.sqrt())
}

/// `∫_Σ |⟨∂̄⟩^s f|²` style quadratic forms: `Σ_k m(k)|f̂(k)|² (2π)²`.
pub(crate) fn surface_quadratic<T: Real>(grid: &Grid<T>, f: &Field<T>, m: impl Fn(i64, i64) -> T) -> T {
    let spec = grid.forward(f);
    spec.weighted_energy(grid, 0, m) * T::TAU() * T::TAU()
}

/// `∫_Ω f ∂₃φ dx`.
pub fn integrate_with_jacobian<T: Real>(grid: &Grid<T>, geom: &Geometry<T>, f: &Field<T>) -> T {
    grid.integrate_volume(&f.hadamard(&geom.d3phi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_geometry, Cutoff};
    use crate::grid::make_grid;
    use std::f64::consts::PI;

    fn setup(n: usize, nz: usize, amp: f64) -> (Grid<f64>, Geometry<f64>) {
        let g = make_grid::<f64>(n, n, nz, 1.0).unwrap();
        let cut = Cutoff::new(1.0, 0.0, None).unwrap();
        let psi = g.surface_from_fn(|x, _| amp * x.sin());
        let geo = build_geometry(&g, &cut, &psi, &g.surface_zeros(), 0.05).unwrap();
        (g, geo)
    }

    #[test]
    fn flat_gradient_examples() {
        let (g, geo) = setup(8, 9, 0.0);
        let f = g.volume_from_fn(|_, _, z| z);
        let gr = grad_phi(&g, &geo, &f);
        assert!(gr[0].max_abs() < 1e-14 && gr[1].max_abs() < 1e-14);
        assert!(gr[2].data.iter().all(|&x| (x - 1.0).abs() < 1e-13));
        let f = g.volume_from_fn(|x, _, _| x.sin());
        let gr = grad_phi(&g, &geo, &f);
        assert!(gr[0].sub(&g.volume_from_fn(|x, _, _| x.cos())).max_abs() < 1e-14);
    }

    #[test]
    fn flat_div_curl_examples() {
        let (g, geo) = setup(8, 9, 0.0);
        let x = [g.volume_from_fn(|_, _, z| z), g.volume_zeros(), g.volume_zeros()];
        assert!(div_phi(&g, &geo, &x).max_abs() < 1e-13);
        let c = curl_phi(&g, &geo, &x);
        assert!(c[1].data.iter().all(|&v| (v - 1.0).abs() < 1e-13));
        let x = [g.volume_zeros(), g.volume_zeros(), g.volume_from_fn(|x, _, _| x.sin())];
        let c = curl_phi(&g, &geo, &x);
        assert!(c[1].add(&g.volume_from_fn(|x, _, _| x.cos())).max_abs() < 1e-13);
    }

    /// Chain-rule oracle: for `f(x̄, x₃)` the flattened gradient equals the
    /// physical gradient of `f∘Φ⁻¹`. Here `f = sin x₁ cos(πx₃)` and the
    /// physical-space derivatives follow from the inverse function theorem.
    #[test]
    fn curved_gradient_matches_chain_rule() {
        let amp = 0.05;
        let (g, geo) = setup(32, 25, amp);
        let cut = Cutoff::new(1.0, 0.0, None).unwrap();
        let f = g.volume_from_fn(|x, _, z| x.sin() * (PI * z).cos());
        let gr = grad_phi(&g, &geo, &f);
        let exact = |x: f64, z: f64| {
            let (fx, fz) = (x.cos() * (PI * z).cos(), -PI * x.sin() * (PI * z).sin());
            let j = 1.0 + cut.dchi(z) * amp * x.sin();
            let p1 = cut.chi(z) * amp * x.cos();
            (fx - p1 / j * fz, fz / j)
        };
        let e1 = g.volume_from_fn(|x, _, z| exact(x, z).0);
        let e3 = g.volume_from_fn(|x, _, z| exact(x, z).1);
        let err = gr[0].sub(&e1).max_abs().max(gr[2].sub(&e3).max_abs());
        assert!(err < 1e-8 * e3.max_abs(), "{err}");
    }

    #[test]
    fn curl_grad_and_div_curl_vanish() {
        let (g, geo) = setup(32, 33, 0.05);
        let f = g.volume_from_fn(|x, y, z| (x + y).sin() * (z * z + z) + (2.0 * y).cos() * z);
        let c = curl_phi(&g, &geo, &grad_phi(&g, &geo, &f));
        let m = c.iter().map(|c| c.max_abs()).fold(0.0, f64::max);
        assert!(m < 1e-8, "{m}");
        let x = [
            g.volume_from_fn(|x, y, z| (x - y).cos() * z),
            g.volume_from_fn(|x, _, z| x.sin() * (1.0 + z)),
            g.volume_from_fn(|_, y, z| y.cos() * z * z),
        ];
        let d = div_phi(&g, &geo, &curl_phi(&g, &geo, &x));
        assert!(d.max_abs() < 1e-8, "{}", d.max_abs());
    }

    #[test]
    fn product_rule() {
        let (g, geo) = setup(24, 17, 0.05);
        let f = g.volume_from_fn(|x, _, z| 1.0 + 0.3 * x.cos() * (1.0 + z));
        let x = [
            g.volume_from_fn(|_, y, z| y.sin() * z),
            g.volume_from_fn(|x, _, _| x.cos()),
            g.volume_from_fn(|x, y, z| (x + y).sin() * z * z),
        ];
        let fx = [0, 1, 2].map(|i| g.mul(&f, &x[i]));
        let lhs = div_phi(&g, &geo, &fx);
        let gf = grad_phi(&g, &geo, &f);
        let rhs = g.mul(&f, &div_phi(&g, &geo, &x)).add(&crate::grid::dot3(&g, &gf, &x));
        assert!(lhs.sub(&rhs).max_abs() < 1e-8);
    }

    #[test]
    fn material_derivative_examples() {
        let (g, geo) = setup(8, 9, 0.0);
        let one = g.volume_from_fn(|_, _, _| 1.0);
        let v = [one.clone(), g.volume_zeros(), g.volume_zeros()];
        let f = g.volume_from_fn(|x, _, _| x.sin());
        let d = material_derivative(&g, &geo, &f, &g.volume_zeros(), &v);
        assert!(d.sub(&g.volume_from_fn(|x, _, _| x.cos())).max_abs() < 1e-13);
        let gt = g.volume_from_fn(|x, y, z| x.cos() * y.sin() * z);
        let d = material_derivative(&g, &geo, &f, &gt, &crate::grid::vec_zeros(&g));
        assert!(d.sub(&gt).max_abs() < 1e-15);
    }

    #[test]
    fn material_derivative_expanded_matches_composed() {
        let g = make_grid::<f64>(32, 32, 33, 1.0).unwrap();
        let cut = Cutoff::new(1.0, 0.0, None).unwrap();
        let psi = g.surface_from_fn(|x, y| 0.05 * (x + y).sin());
        let psi_t = g.surface_from_fn(|x, _| 0.02 * x.cos());
        let geo = build_geometry(&g, &cut, &psi, &psi_t, 0.05).unwrap();
        let v = [
            g.volume_from_fn(|_, y, _| 0.3 * y.cos()),
            g.volume_from_fn(|x, _, z| 0.2 * x.sin() * z),
            g.volume_from_fn(|x, _, z| 0.1 * x.cos() * (z + 1.0)),
        ];
        let f = g.volume_from_fn(|x, y, z| (x - y).cos() * (1.0 + z * z));
        let ft = g.volume_from_fn(|x, _, z| x.sin() * z);
        let expanded = material_derivative(&g, &geo, &f, &ft, &v);
        // ∂_t^φ f + v·∇^φ f with ∂_t^φ = ∂_t − (∂_tφ/∂₃φ)∂₃
        let f3 = g.dz(&f);
        let dtphi_f = ft.sub(&g.mul(&g.mul(&geo.dtphi, &geo.inv_j), &f3));
        let composed = dtphi_f.add(&crate::grid::dot3(&g, &v, &grad_phi(&g, &geo, &f)));
        let err = expanded.sub(&composed).max_abs();
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn mean_curvature_matches_symbolic() {
        let g = make_grid::<f64>(64, 8, 9, 1.0).unwrap();
        assert!(mean_curvature(&g, &g.surface_zeros()).max_abs() == 0.0);
        let c = g.surface_from_fn(|_, _| 0.3);
        assert!(mean_curvature(&g, &c).max_abs() < 1e-15);
        let psi = g.surface_from_fn(|x, _| 0.1 * x.sin());
        let h = mean_curvature(&g, &psi);
        // −∂₁(a cos x / √(1 + a² cos² x)) = a sin x / (1 + a² cos² x)^{3/2}
        let exact = g.surface_from_fn(|x, _| 0.1 * x.sin() / (1.0 + 0.01 * x.cos().powi(2)).powf(1.5));
        assert!(h.sub(&exact).max_abs() < 1e-8, "{}", h.sub(&exact).max_abs());
    }

    #[test]
    fn multipliers() {
        let g = make_grid::<f64>(8, 8, 9, 1.0).unwrap();
        let f = g.surface_from_fn(|x, _| x.cos());
        let b = multiplier(&g, &f, Symbol::Bracket);
        assert!(b.sub(&f.scale(2f64.sqrt())).max_abs() < 1e-14);
        let f = g.surface_from_fn(|x, y| (x + y).cos());
        assert!(multiplier(&g, &f, Symbol::OneMinusLapSq).sub(&f.scale(9.0)).max_abs() < 1e-12);
        let c = g.surface_from_fn(|_, _| 2.5);
        assert!(multiplier(&g, &c, Symbol::OneMinusLap).sub(&c).max_abs() < 1e-15);
        let f = g.surface_from_fn(|x, y| (2.0 * x).sin() + (x - 3.0 * y).cos());
        let bb = multiplier(&g, &multiplier(&g, &f, Symbol::Bracket), Symbol::Bracket);
        assert!(bb.sub(&multiplier(&g, &f, Symbol::OneMinusLap)).max_abs() < 1e-12);
    }

    #[test]
    fn surface_norms() {
        let g = make_grid::<f64>(16, 16, 9, 1.0).unwrap();
        let f = g.surface_from_fn(|x, _| x.sin());
        assert!((sobolev_norm_surface(&g, &f, 0.0).unwrap() - PI * 2f64.sqrt()).abs() < 1e-12);
        assert!((sobolev_norm_surface(&g, &f, 1.0).unwrap() - 2.0 * PI).abs() < 1e-12);
        assert!(sobolev_norm_surface(&g, &f, -1.0).is_err());
    }

    #[test]
    fn interior_norm_matches_analytic() {
        // f = (1+x₃) sin x₁ on b = 1:
        // ‖f‖₀² = π·2π·(1/3), ‖∂₁f‖² = same, ‖∂₃f‖² = 2π²
        let exact = (2.0 * PI * PI / 3.0 * 2.0 + 2.0 * PI * PI).sqrt();
        for (n, nz) in [(8, 9), (16, 17)] {
            let g = make_grid::<f64>(n, n, nz, 1.0).unwrap();
            let f = g.volume_from_fn(|x, _, z| (1.0 + z) * x.sin());
            let v = sobolev_norm_interior(&g, &f, 1).unwrap();
            assert!((v - exact).abs() < 1e-8 * exact, "{v} vs {exact}");
        }
        let g = make_grid::<f64>(8, 8, 9, 1.0).unwrap();
        assert!(sobolev_norm_interior(&g, &g.volume_zeros(), 5).is_err());
    }
}
