//! Tensor-product grid on the slab `T² × (−b, 0)`.
//!
//! Horizontally the grid is Fourier collocation with period `2π` in both
//! directions; vertically it uses Chebyshev–Gauss–Lobatto nodes mapped onto
//! `[−b, 0]`, with `z[0] = −b` (bottom) and `z[nz−1] = 0` (free surface).
//!
//! Field samples are stored with `x₁` fastest, then `x₂`, then `z`, i.e. one
//! contiguous horizontal layer per vertical node.

use crate::error::{Error, Result};
use crate::scalar::{idx, lit, Real};
use num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::fmt;
use std::sync::Arc;

/// Discrete slab domain plus the transform machinery attached to it.
#[derive(Clone)]
pub struct Grid<T: Real> {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// Slab depth.
    pub b: T,
    /// Vertical collocation nodes, strictly increasing from `−b` to `0`.
    pub z: Vec<T>,
    /// Chebyshev differentiation matrix in `z`, row-major `nz × nz`.
    dz: Vec<T>,
    /// Clenshaw–Curtis weights on `[−b, 0]`.
    cc: Vec<T>,
    k1: Vec<i64>,
    k2: Vec<i64>,
    keep1: Vec<bool>,
    keep2: Vec<bool>,
    fft_x: Arc<dyn Fft<T>>,
    ifft_x: Arc<dyn Fft<T>>,
    fft_y: Arc<dyn Fft<T>>,
    ifft_y: Arc<dyn Fft<T>>,
}

impl<T: Real> fmt::Debug for Grid<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("nx", &self.nx)
            .field("ny", &self.ny)
            .field("nz", &self.nz)
            .field("b", &self.b)
            .finish()
    }
}

impl<T: Real> PartialEq for Grid<T> {
    fn eq(&self, other: &Self) -> bool {
        self.nx == other.nx && self.ny == other.ny && self.nz == other.nz && self.b == other.b
    }
}

/// Builds a grid, validating mode counts and depth.
pub fn make_grid<T: Real>(nx: usize, ny: usize, nz: usize, b: T) -> Result<Grid<T>> {
    Grid::new(nx, ny, nz, b)
}

impl<T: Real> Grid<T> {
    pub fn new(nx: usize, ny: usize, nz: usize, b: T) -> Result<Self> {
        for (name, n) in [("nx", nx), ("ny", ny)] {
            if n % 2 != 0 {
                return Err(Error::InvalidGrid(format!("{name} must be even")));
            }
            if n < 8 {
                return Err(Error::InvalidGrid(format!("{name} must be >= 8")));
            }
        }
        if nz < 9 {
            return Err(Error::InvalidGrid("nz must be >= 9".into()));
        }
        if !(b > T::zero()) || !b.is_finite() {
            return Err(Error::InvalidGrid("b must be > 0".into()));
        }

        let m = nz - 1;
        let half = b / lit(2.0);
        let pi = T::PI();
        let z: Vec<T> = (0..nz)
            .map(|j| {
                if j == 0 {
                    -b
                } else if j == m {
                    T::zero()
                } else {
                    -half * (T::one() + (pi * idx(j) / idx(m)).cos())
                }
            })
            .collect();

        let mut planner = FftPlanner::<T>::new();
        let k_of = |n: usize| -> Vec<i64> {
            (0..n).map(|i| if i < n / 2 { i as i64 } else { i as i64 - n as i64 }).collect()
        };
        let keep_of = |ks: &[i64], n: usize| -> Vec<bool> {
            ks.iter().map(|&k| k.unsigned_abs() as usize <= n / 3).collect()
        };
        let k1 = k_of(nx);
        let k2 = k_of(ny);
        Ok(Grid {
            nx,
            ny,
            nz,
            b,
            dz: chebyshev_diff_matrix(&z),
            cc: clenshaw_curtis_weights(nz, half),
            keep1: keep_of(&k1, nx),
            keep2: keep_of(&k2, ny),
            k1,
            k2,
            fft_x: planner.plan_fft_forward(nx),
            ifft_x: planner.plan_fft_inverse(nx),
            fft_y: planner.plan_fft_forward(ny),
            ifft_y: planner.plan_fft_inverse(ny),
            z,
        })
    }

    /// Number of samples in one horizontal layer.
    #[inline]
    pub fn layer_len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn x1(&self, ix: usize) -> T {
        T::TAU() * idx(ix) / idx(self.nx)
    }

    pub fn x2(&self, iy: usize) -> T {
        T::TAU() * idx(iy) / idx(self.ny)
    }

    /// Integer wavenumbers `(k₁, k₂)` of spectral index `(i, j)`.
    pub fn wavenumber(&self, i: usize, j: usize) -> (i64, i64) {
        (self.k1[i], self.k2[j])
    }

    /// Wavenumbers along `x₁` in FFT order, `{−nx/2, …, nx/2−1}` as a set.
    pub fn k1_values(&self) -> &[i64] {
        &self.k1
    }

    pub fn k2_values(&self) -> &[i64] {
        &self.k2
    }

    /// Whether mode `(i, j)` survives the 2/3-rule truncation.
    #[inline]
    pub fn keeps(&self, i: usize, j: usize) -> bool {
        self.keep1[i] && self.keep2[j]
    }

    /// Largest wavenumber magnitude retained per direction.
    pub fn k_max_dealiased(&self) -> usize {
        (self.nx / 3).min(self.ny / 3)
    }

    /// Smallest horizontal grid spacing.
    pub fn dx_min(&self) -> T {
        T::TAU() / idx(self.nx.max(self.ny))
    }

    /// Horizontal quadrature weight (uniform trapezoid on the torus).
    pub fn area_weight(&self) -> T {
        T::TAU() * T::TAU() / idx(self.nx * self.ny)
    }

    pub fn cc_weights(&self) -> &[T] {
        &self.cc
    }

    /// Row-major Chebyshev differentiation matrix.
    pub fn dz_matrix(&self) -> &[T] {
        &self.dz
    }

    pub(crate) fn check(&self, f: &Field<T>) -> Result<()> {
        if f.nx != self.nx || f.ny != self.ny || (f.nz != self.nz && f.nz != 1) {
            return Err(Error::ShapeMismatch(format!(
                "field {}x{}x{} on grid {}x{}x{}",
                f.nx, f.ny, f.nz, self.nx, self.ny, self.nz
            )));
        }
        Ok(())
    }

    // ---- horizontal transforms ------------------------------------------

    /// Forward horizontal transform of every layer, normalised by `1/(nx·ny)`
    /// so that mode `(0,0)` is the horizontal mean.
    pub fn forward(&self, f: &Field<T>) -> Spectrum<T> {
        let (nx, ny) = (self.nx, self.ny);
        let mut buf: Vec<Complex<T>> = f.data.iter().map(|&x| Complex::new(x, T::zero())).collect();
        self.fft_2d(&mut buf, f.nz, true);
        let scale = T::one() / idx(nx * ny);
        for c in buf.iter_mut() {
            *c = *c * scale;
        }
        Spectrum { nx, ny, nz: f.nz, data: buf }
    }

    /// Inverse horizontal transform; the imaginary part is discarded.
    pub fn inverse(&self, s: &Spectrum<T>) -> Field<T> {
        let mut buf = s.data.clone();
        self.fft_2d(&mut buf, s.nz, false);
        Field { nx: s.nx, ny: s.ny, nz: s.nz, data: buf.into_iter().map(|c| c.re).collect() }
    }

    fn fft_2d(&self, buf: &mut [Complex<T>], nz: usize, forward: bool) {
        let (nx, ny) = (self.nx, self.ny);
        let (fx, fy) = if forward { (&self.fft_x, &self.fft_y) } else { (&self.ifft_x, &self.ifft_y) };
        fx.process(buf);
        let mut tr = vec![Complex::new(T::zero(), T::zero()); nx * ny];
        for layer in buf.chunks_mut(nx * ny).take(nz) {
            for j in 0..ny {
                for i in 0..nx {
                    tr[j + ny * i] = layer[i + nx * j];
                }
            }
            fy.process(&mut tr);
            for j in 0..ny {
                for i in 0..nx {
                    layer[i + nx * j] = tr[j + ny * i];
                }
            }
        }
    }

    /// Symbol table over one layer, premultiplied by the `1/(nx·ny)`
    /// transform normalisation.
    fn symbol_table(&self, m: impl Fn(usize, usize) -> Complex<T>) -> Vec<Complex<T>> {
        let scale = T::one() / idx(self.nx * self.ny);
        (0..self.ny).flat_map(|j| (0..self.nx).map(move |i| (i, j))).map(|(i, j)| m(i, j) * scale).collect()
    }

    /// Applies Hermitian symbols (real fields to real fields) to every layer.
    ///
    /// Such a multiplier acts on `a + ib` as `Ma + iMb`, so two real layers
    /// share one complex transform.
    fn filter_many(&self, f: &Field<T>, tables: &[Vec<Complex<T>>]) -> Vec<Field<T>> {
        let n = self.layer_len();
        let nz = f.nz;
        let np = nz.div_ceil(2);
        let mut buf = vec![Complex::new(T::zero(), T::zero()); np * n];
        for (p, dst) in buf.chunks_mut(n).enumerate() {
            let a = &f.data[2 * p * n..(2 * p + 1) * n];
            if 2 * p + 1 < nz {
                let b = &f.data[(2 * p + 1) * n..(2 * p + 2) * n];
                for ((d, &x), &y) in dst.iter_mut().zip(a).zip(b) {
                    *d = Complex::new(x, y);
                }
            } else {
                for (d, &x) in dst.iter_mut().zip(a) {
                    *d = Complex::new(x, T::zero());
                }
            }
        }
        self.fft_2d(&mut buf, np, true);
        tables
            .iter()
            .map(|table| {
                let mut work = buf.clone();
                for layer in work.chunks_mut(n) {
                    for (c, &m) in layer.iter_mut().zip(table) {
                        *c = *c * m;
                    }
                }
                self.fft_2d(&mut work, np, false);
                let mut data = vec![T::zero(); nz * n];
                for (p, src) in work.chunks(n).enumerate() {
                    for (d, c) in data[2 * p * n..(2 * p + 1) * n].iter_mut().zip(src) {
                        *d = c.re;
                    }
                    if 2 * p + 1 < nz {
                        for (d, c) in data[(2 * p + 1) * n..(2 * p + 2) * n].iter_mut().zip(src) {
                            *d = c.im;
                        }
                    }
                }
                Field { nx: f.nx, ny: f.ny, nz, data }
            })
            .collect()
    }

    /// Applies a real, even Fourier symbol `m(k₁, k₂)` to every layer.
    pub fn apply_symbol(&self, f: &Field<T>, symbol: impl Fn(i64, i64) -> T) -> Field<T> {
        let table = self.symbol_table(|i, j| Complex::new(symbol(self.k1[i], self.k2[j]), T::zero()));
        self.filter_many(f, &[table]).remove(0)
    }

    /// 2/3-rule projection.
    pub fn dealias(&self, f: &Field<T>) -> Field<T> {
        let table = self.symbol_table(|i, j| if self.keeps(i, j) { Complex::new(T::one(), T::zero()) } else { Complex::default() });
        self.filter_many(f, &[table]).remove(0)
    }

    /// Pointwise product followed by 2/3-rule projection. Both factors are
    /// expected to be band-limited already.
    pub fn mul(&self, a: &Field<T>, b: &Field<T>) -> Field<T> {
        self.dealias(&a.hadamard(b))
    }

    /// Horizontal derivatives `(∂₁f, ∂₂f)` from a single forward transform.
    pub fn grad_h(&self, f: &Field<T>) -> (Field<T>, Field<T>) {
        let n1 = self.nx as i64 / 2;
        let n2 = self.ny as i64 / 2;
        let ik = |k: i64, nyq: i64| if k == -nyq { Complex::default() } else { Complex::new(T::zero(), idx_i(k)) };
        let t1 = self.symbol_table(|i, _| ik(self.k1[i], n1));
        let t2 = self.symbol_table(|_, j| ik(self.k2[j], n2));
        let mut out = self.filter_many(f, &[t1, t2]);
        let d2 = out.pop().unwrap();
        (out.pop().unwrap(), d2)
    }

    pub fn d1(&self, f: &Field<T>) -> Field<T> {
        self.grad_h(f).0
    }

    pub fn d2(&self, f: &Field<T>) -> Field<T> {
        self.grad_h(f).1
    }

    /// Horizontal Laplacian `Δ̄f`.
    pub fn lap_h(&self, f: &Field<T>) -> Field<T> {
        self.apply_symbol(f, |k1, k2| -idx_i::<T>(k1 * k1 + k2 * k2))
    }

    /// Vertical Chebyshev derivative `∂₃f`.
    pub fn dz(&self, f: &Field<T>) -> Field<T> {
        assert_eq!(f.nz, self.nz, "vertical derivative needs a volume field");
        let n = self.layer_len();
        let nz = self.nz;
        let mut out = vec![T::zero(); n * nz];
        for i in 0..nz {
            let dst = &mut out[i * n..(i + 1) * n];
            for j in 0..nz {
                let d = self.dz[i * nz + j];
                if d == T::zero() {
                    continue;
                }
                let src = &f.data[j * n..(j + 1) * n];
                for (o, &s) in dst.iter_mut().zip(src) {
                    *o = *o + d * s;
                }
            }
        }
        Field { nx: f.nx, ny: f.ny, nz, data: out }
    }

    // ---- quadrature -----------------------------------------------------

    /// `∫_Ω f dx` by trapezoid (horizontal) × Clenshaw–Curtis (vertical).
    pub fn integrate_volume(&self, f: &Field<T>) -> T {
        assert_eq!(f.nz, self.nz);
        let n = self.layer_len();
        let aw = self.area_weight();
        let mut total = T::zero();
        for (k, w) in self.cc.iter().enumerate() {
            let s: T = f.data[k * n..(k + 1) * n].iter().copied().sum();
            total = total + *w * s;
        }
        total * aw
    }

    /// `∫_{T²} g dx̄` for a surface field.
    pub fn integrate_surface(&self, g: &Field<T>) -> T {
        assert_eq!(g.nz, 1);
        g.data.iter().copied().sum::<T>() * self.area_weight()
    }

    // ---- field constructors --------------------------------------------

    pub fn volume_from_fn(&self, mut f: impl FnMut(T, T, T) -> T) -> Field<T> {
        let mut data = Vec::with_capacity(self.layer_len() * self.nz);
        for iz in 0..self.nz {
            for iy in 0..self.ny {
                for ix in 0..self.nx {
                    data.push(f(self.x1(ix), self.x2(iy), self.z[iz]));
                }
            }
        }
        Field { nx: self.nx, ny: self.ny, nz: self.nz, data }
    }

    pub fn surface_from_fn(&self, mut f: impl FnMut(T, T) -> T) -> Field<T> {
        let mut data = Vec::with_capacity(self.layer_len());
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                data.push(f(self.x1(ix), self.x2(iy)));
            }
        }
        Field { nx: self.nx, ny: self.ny, nz: 1, data }
    }

    pub fn volume_zeros(&self) -> Field<T> {
        Field::zeros(self.nx, self.ny, self.nz)
    }

    pub fn surface_zeros(&self) -> Field<T> {
        Field::zeros(self.nx, self.ny, 1)
    }

    /// Volume field constant along `z`, equal to `g` on every layer.
    pub fn extend_const(&self, g: &Field<T>) -> Field<T> {
        assert_eq!(g.nz, 1);
        let mut data = Vec::with_capacity(self.layer_len() * self.nz);
        for _ in 0..self.nz {
            data.extend_from_slice(&g.data);
        }
        Field { nx: g.nx, ny: g.ny, nz: self.nz, data }
    }

    /// Volume field `p(z)·g(x̄)`.
    pub fn outer(&self, profile: &[T], g: &Field<T>) -> Field<T> {
        assert_eq!(profile.len(), self.nz);
        let mut data = Vec::with_capacity(self.layer_len() * self.nz);
        for &p in profile {
            data.extend(g.data.iter().map(|&x| p * x));
        }
        Field { nx: g.nx, ny: g.ny, nz: self.nz, data }
    }
}

#[inline(always)]
fn idx_i<T: Real>(k: i64) -> T {
    T::from_i64(k).expect("wavenumber representable")
}

/// Barycentric differentiation matrix on Chebyshev–Lobatto nodes, with the
/// diagonal set by the negative row sum.
fn chebyshev_diff_matrix<T: Real>(z: &[T]) -> Vec<T> {
    let n = z.len();
    let w: Vec<T> = (0..n)
        .map(|j| {
            let s = if j % 2 == 0 { T::one() } else { -T::one() };
            if j == 0 || j == n - 1 {
                s / lit(2.0)
            } else {
                s
            }
        })
        .collect();
    let mut d = vec![T::zero(); n * n];
    for i in 0..n {
        let mut row = T::zero();
        for j in 0..n {
            if i != j {
                let v = (w[j] / w[i]) / (z[i] - z[j]);
                d[i * n + j] = v;
                row = row + v;
            }
        }
        d[i * n + i] = -row;
    }
    d
}

/// Clenshaw–Curtis weights for `nz` Lobatto nodes, scaled by the half-depth.
fn clenshaw_curtis_weights<T: Real>(nz: usize, half: T) -> Vec<T> {
    let n = nz - 1;
    let nf: T = idx(n);
    let mut w = vec![T::zero(); nz];
    let theta = |j: usize| T::PI() * idx(j) / nf;
    let four: T = lit(4.0);
    if n.is_multiple_of(2) {
        w[0] = T::one() / (nf * nf - T::one());
        w[n] = w[0];
        for (j, wj) in w.iter_mut().enumerate().take(n).skip(1) {
            let mut v = T::one();
            for k in 1..n / 2 {
                let kf: T = idx(k);
                v = v - lit::<T>(2.0) * (lit::<T>(2.0) * kf * theta(j)).cos() / (four * kf * kf - T::one());
            }
            v = v - (nf * theta(j)).cos() / (nf * nf - T::one());
            *wj = lit::<T>(2.0) * v / nf;
        }
    } else {
        w[0] = T::one() / (nf * nf);
        w[n] = w[0];
        for (j, wj) in w.iter_mut().enumerate().take(n).skip(1) {
            let mut v = T::one();
            for k in 1..=(n - 1) / 2 {
                let kf: T = idx(k);
                v = v - lit::<T>(2.0) * (lit::<T>(2.0) * kf * theta(j)).cos() / (four * kf * kf - T::one());
            }
            *wj = lit::<T>(2.0) * v / nf;
        }
    }
    w.into_iter().map(|x| x * half).collect()
}

// ---------------------------------------------------------------------------

/// Real samples on the grid: `nz` layers for volume fields, one layer for
/// surface fields.
#[derive(Clone, Debug, PartialEq)]
pub struct Field<T> {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub data: Vec<T>,
}

/// Three scalar components of a vector field.
pub type VecField<T> = [Field<T>; 3];

impl<T: Real> Field<T> {
    pub fn zeros(nx: usize, ny: usize, nz: usize) -> Self {
        Field { nx, ny, nz, data: vec![T::zero(); nx * ny * nz] }
    }

    pub fn constant(nx: usize, ny: usize, nz: usize, c: T) -> Self {
        Field { nx, ny, nz, data: vec![c; nx * ny * nz] }
    }

    pub fn is_surface(&self) -> bool {
        self.nz == 1
    }

    #[inline]
    pub fn layer(&self, iz: usize) -> &[T] {
        let n = self.nx * self.ny;
        &self.data[iz * n..(iz + 1) * n]
    }

    #[inline]
    pub fn layer_mut(&mut self, iz: usize) -> &mut [T] {
        let n = self.nx * self.ny;
        &mut self.data[iz * n..(iz + 1) * n]
    }

    /// Copy of one layer as a surface field.
    pub fn layer_field(&self, iz: usize) -> Field<T> {
        Field { nx: self.nx, ny: self.ny, nz: 1, data: self.layer(iz).to_vec() }
    }

    /// Trace on the free surface `Σ` (last layer).
    pub fn top(&self) -> Field<T> {
        self.layer_field(self.nz - 1)
    }

    /// Trace on the bottom `Σ_b` (first layer).
    pub fn bottom(&self) -> Field<T> {
        self.layer_field(0)
    }

    pub fn set_layer(&mut self, iz: usize, values: &Field<T>) {
        self.layer_mut(iz).copy_from_slice(&values.data);
    }

    pub fn fill_layer(&mut self, iz: usize, c: T) {
        self.layer_mut(iz).iter_mut().for_each(|x| *x = c);
    }

    #[inline]
    pub fn at(&self, ix: usize, iy: usize, iz: usize) -> T {
        self.data[ix + self.nx * (iy + self.ny * iz)]
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    pub fn min(&self) -> T {
        self.data.iter().fold(T::infinity(), |m, &x| m.min(x))
    }

    pub fn max(&self) -> T {
        self.data.iter().fold(T::neg_infinity(), |m, &x| m.max(x))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Field<T> {
        Field { nx: self.nx, ny: self.ny, nz: self.nz, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn zip_map(&self, other: &Field<T>, f: impl Fn(T, T) -> T) -> Field<T> {
        assert_eq!(self.data.len(), other.data.len(), "field shapes differ");
        Field {
            nx: self.nx,
            ny: self.ny,
            nz: self.nz,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// Raw pointwise product (no dealiasing).
    pub fn hadamard(&self, other: &Field<T>) -> Field<T> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn add(&self, other: &Field<T>) -> Field<T> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field<T>) -> Field<T> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, c: T) -> Field<T> {
        self.map(|x| c * x)
    }

    /// `self += c·x`.
    pub fn axpy(&mut self, c: T, x: &Field<T>) {
        assert_eq!(self.data.len(), x.data.len(), "field shapes differ");
        for (a, &b) in self.data.iter_mut().zip(&x.data) {
            *a = *a + c * b;
        }
    }

    pub fn add_assign(&mut self, x: &Field<T>) {
        self.axpy(T::one(), x);
    }

    /// Multiplies layer `iz` by `p[iz]`.
    pub fn scale_layers(&self, p: &[T]) -> Field<T> {
        assert_eq!(p.len(), self.nz);
        let n = self.nx * self.ny;
        let mut out = self.clone();
        for (iz, &c) in p.iter().enumerate() {
            out.data[iz * n..(iz + 1) * n].iter_mut().for_each(|x| *x = *x * c);
        }
        out
    }

    /// Multiplies every layer pointwise by the surface field `g`.
    pub fn mul_surface(&self, g: &Field<T>) -> Field<T> {
        assert_eq!(g.nz, 1);
        let n = self.nx * self.ny;
        let mut out = self.clone();
        for layer in out.data.chunks_mut(n) {
            for (x, &y) in layer.iter_mut().zip(&g.data) {
                *x = *x * y;
            }
        }
        out
    }

    pub fn dot(&self, other: &Field<T>) -> T {
        self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).sum()
    }

    pub fn norm2(&self) -> T {
        self.dot(self).sqrt()
    }
}

/// Zero vector field on the volume grid.
pub fn vec_zeros<T: Real>(grid: &Grid<T>) -> VecField<T> {
    [grid.volume_zeros(), grid.volume_zeros(), grid.volume_zeros()]
}

/// Pointwise dot product of two vector fields, dealiased.
pub fn dot3<T: Real>(grid: &Grid<T>, a: &VecField<T>, b: &VecField<T>) -> Field<T> {
    let raw = a[0].hadamard(&b[0]).add(&a[1].hadamard(&b[1])).add(&a[2].hadamard(&b[2]));
    grid.dealias(&raw)
}

// ---------------------------------------------------------------------------

/// Horizontal Fourier coefficients of every layer of a field.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum<T> {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub data: Vec<Complex<T>>,
}

impl<T: Real> Spectrum<T> {
    /// Coefficient of mode `(k₁, k₂)` in layer `iz`.
    pub fn coeff(&self, k1: i64, k2: i64, iz: usize) -> Complex<T> {
        let i = k1.rem_euclid(self.nx as i64) as usize;
        let j = k2.rem_euclid(self.ny as i64) as usize;
        self.data[iz * self.nx * self.ny + i + self.nx * j]
    }

    /// Multiplies every coefficient by `m(k₁, k₂)`.
    pub fn scale_by(&mut self, grid: &Grid<T>, m: impl Fn(i64, i64) -> Complex<T>) {
        let (nx, ny) = (self.nx, self.ny);
        let table: Vec<Complex<T>> =
            (0..ny).flat_map(|j| (0..nx).map(move |i| (i, j))).map(|(i, j)| m(grid.k1[i], grid.k2[j])).collect();
        for layer in self.data.chunks_mut(nx * ny) {
            for (c, &f) in layer.iter_mut().zip(&table) {
                *c = *c * f;
            }
        }
    }

    /// Zeroes modes outside the 2/3-rule band.
    pub fn truncate(&mut self, grid: &Grid<T>) {
        let (nx, ny) = (self.nx, self.ny);
        for layer in self.data.chunks_mut(nx * ny) {
            for j in 0..ny {
                for i in 0..nx {
                    if !grid.keeps(i, j) {
                        layer[i + nx * j] = Complex::default();
                    }
                }
            }
        }
    }

    /// `Σ |ĉ(k)|²` over the modes of layer `iz`, weighted by `w(k₁,k₂)`.
    pub fn weighted_energy(&self, grid: &Grid<T>, iz: usize, w: impl Fn(i64, i64) -> T) -> T {
        let (nx, ny) = (self.nx, self.ny);
        let layer = &self.data[iz * nx * ny..(iz + 1) * nx * ny];
        let mut s = T::zero();
        for j in 0..ny {
            for i in 0..nx {
                s = s + w(grid.k1[i], grid.k2[j]) * layer[i + nx * j].norm_sqr();
            }
        }
        s
    }
}

/// Forward horizontal spectrum of a field on `grid`.
pub fn horizontal_spectrum<T: Real>(grid: &Grid<T>, f: &Field<T>) -> Result<Spectrum<T>> {
    grid.check(f)?;
    Ok(grid.forward(f))
}

/// Inverse of [`horizontal_spectrum`].
pub fn inverse_spectrum<T: Real>(grid: &Grid<T>, s: &Spectrum<T>) -> Result<Field<T>> {
    if s.nx != grid.nx || s.ny != grid.ny || s.data.len() != s.nx * s.ny * s.nz {
        return Err(Error::ShapeMismatch(format!("spectrum {}x{}x{} on grid {}x{}", s.nx, s.ny, s.nz, grid.nx, grid.ny)));
    }
    Ok(grid.inverse(s))
}
