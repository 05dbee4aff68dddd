//! Truncated multivariate Taylor jets in `(t, x₁, x₂, x₃)`.
//!
//! A jet of order `N` at a point stores `c_e = ∂^e f / e!` for every
//! exponent `e ∈ ℕ⁴` with `|e| ≤ N`. Arithmetic is exact up to order `N`;
//! differentiation lowers the order of validity by one. This gives exact
//! (round-off only) derivatives of manufactured fields, which is what the
//! good-unknown identities are checked against.

use crate::scalar::{idx, Real};
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

/// Exponent bookkeeping shared by all jets of one order.
#[derive(Debug)]
pub struct JetSpace {
    pub order: usize,
    exps: Vec<[usize; 4]>,
    /// Dense lookup from `(e₀,e₁,e₂,e₃)` (base `order+1`) to the slot.
    lookup: Vec<Option<usize>>,
    /// `(i, j, k)` with `exps[i] + exps[j] = exps[k]`.
    products: Vec<(u32, u32, u32)>,
}

impl JetSpace {
    pub fn new(order: usize) -> Arc<Self> {
        let base = order + 1;
        let mut exps = Vec::new();
        for total in 0..=order {
            for e0 in 0..=total {
                for e1 in 0..=total - e0 {
                    for e2 in 0..=total - e0 - e1 {
                        exps.push([e0, e1, e2, total - e0 - e1 - e2]);
                    }
                }
            }
        }
        let mut lookup = vec![None; base.pow(4)];
        for (i, e) in exps.iter().enumerate() {
            lookup[((e[0] * base + e[1]) * base + e[2]) * base + e[3]] = Some(i);
        }
        let key = |e: [usize; 4]| ((e[0] * base + e[1]) * base + e[2]) * base + e[3];
        let mut products = Vec::new();
        for (i, a) in exps.iter().enumerate() {
            for (j, b) in exps.iter().enumerate() {
                let s = [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]];
                if s.iter().sum::<usize>() <= order {
                    products.push((i as u32, j as u32, lookup[key(s)].unwrap() as u32));
                }
            }
        }
        Arc::new(JetSpace { order, exps, lookup, products })
    }

    pub fn len(&self) -> usize {
        self.exps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exps.is_empty()
    }

    fn slot(&self, e: [usize; 4]) -> Option<usize> {
        if e.iter().sum::<usize>() > self.order {
            return None;
        }
        let base = self.order + 1;
        self.lookup[((e[0] * base + e[1]) * base + e[2]) * base + e[3]]
    }
}

#[derive(Clone, Debug)]
pub struct Jet<T> {
    space: Arc<JetSpace>,
    c: Vec<T>,
}

impl<T: Real> Jet<T> {
    pub fn constant(space: &Arc<JetSpace>, v: T) -> Self {
        let mut c = vec![T::zero(); space.len()];
        c[0] = v;
        Jet { space: space.clone(), c }
    }

    /// The coordinate `dir` (0 = t, 1..=3 = x₁..x₃) at the value `at`.
    pub fn variable(space: &Arc<JetSpace>, dir: usize, at: T) -> Self {
        let mut j = Self::constant(space, at);
        let mut e = [0; 4];
        e[dir] = 1;
        if let Some(s) = space.slot(e) {
            j.c[s] = T::one();
        }
        j
    }

    pub fn space(&self) -> &Arc<JetSpace> {
        &self.space
    }

    pub fn value(&self) -> T {
        self.c[0]
    }

    /// `∂^e f` at the expansion point.
    pub fn derivative_value(&self, e: [usize; 4]) -> T {
        match self.space.slot(e) {
            None => T::nan(),
            Some(s) => {
                let fact: usize = e.iter().map(|&k| (1..=k).product::<usize>()).product();
                self.c[s] * idx(fact)
            }
        }
    }

    /// `∂_{dir} f` as a jet (valid to one order less).
    pub fn diff(&self, dir: usize) -> Self {
        let mut out = vec![T::zero(); self.c.len()];
        for (i, e) in self.space.exps.iter().enumerate() {
            let mut up = *e;
            up[dir] += 1;
            if let Some(s) = self.space.slot(up) {
                out[i] = self.c[s] * idx(up[dir]);
            }
        }
        Jet { space: self.space.clone(), c: out }
    }

    /// `∂^e f` as a jet.
    pub fn diff_multi(&self, e: [usize; 4]) -> Self {
        let mut j = self.clone();
        for (dir, &k) in e.iter().enumerate() {
            for _ in 0..k {
                j = j.diff(dir);
            }
        }
        j
    }

    pub fn scale(&self, s: T) -> Self {
        Jet { space: self.space.clone(), c: self.c.iter().map(|&x| x * s).collect() }
    }

    /// `Σ_k a_k w^k` with `w = self − self(0)`.
    fn series(&self, coeffs: &[T]) -> Self {
        let mut w = self.clone();
        w.c[0] = T::zero();
        let mut out = Self::constant(&self.space, coeffs[0]);
        let mut pow = Self::constant(&self.space, T::one());
        for &a in &coeffs[1..] {
            pow = &pow * &w;
            if a != T::zero() {
                out = &out + &pow.scale(a);
            }
        }
        out
    }

    fn factorials(&self) -> Vec<T> {
        let mut f = vec![T::one(); self.space.order + 1];
        for k in 1..f.len() {
            f[k] = f[k - 1] * idx(k);
        }
        f
    }

    pub fn sin(&self) -> Self {
        let (s, c) = (self.c[0].sin(), self.c[0].cos());
        let coeffs: Vec<T> = self
            .factorials()
            .iter()
            .enumerate()
            .map(|(k, &f)| {
                let base = match k % 4 {
                    0 => s,
                    1 => c,
                    2 => -s,
                    _ => -c,
                };
                base / f
            })
            .collect();
        self.series(&coeffs)
    }

    pub fn cos(&self) -> Self {
        let (s, c) = (self.c[0].sin(), self.c[0].cos());
        let coeffs: Vec<T> = self
            .factorials()
            .iter()
            .enumerate()
            .map(|(k, &f)| {
                let base = match k % 4 {
                    0 => c,
                    1 => -s,
                    2 => -c,
                    _ => s,
                };
                base / f
            })
            .collect();
        self.series(&coeffs)
    }

    pub fn exp(&self) -> Self {
        let e = self.c[0].exp();
        let coeffs: Vec<T> = self.factorials().iter().map(|&f| e / f).collect();
        self.series(&coeffs)
    }

    /// `1/f`; the value at the point must be non-zero.
    pub fn recip(&self) -> Self {
        let u0 = self.c[0];
        let coeffs: Vec<T> = (0..=self.space.order).map(|k| (-T::one()).powi(k as i32) / u0.powi(k as i32 + 1)).collect();
        self.series(&coeffs)
    }

    /// Polynomial `Σ p_k f^k` by Horner.
    pub fn poly(&self, p: &[T]) -> Self {
        let mut out = Self::constant(&self.space, T::zero());
        for &a in p.iter().rev() {
            out = &(&out * self) + &Self::constant(&self.space, a);
        }
        out
    }
}

impl<T: Real> Add for &Jet<T> {
    type Output = Jet<T>;
    fn add(self, o: &Jet<T>) -> Jet<T> {
        Jet { space: self.space.clone(), c: self.c.iter().zip(&o.c).map(|(&a, &b)| a + b).collect() }
    }
}

impl<T: Real> Sub for &Jet<T> {
    type Output = Jet<T>;
    fn sub(self, o: &Jet<T>) -> Jet<T> {
        Jet { space: self.space.clone(), c: self.c.iter().zip(&o.c).map(|(&a, &b)| a - b).collect() }
    }
}

impl<T: Real> Neg for &Jet<T> {
    type Output = Jet<T>;
    fn neg(self) -> Jet<T> {
        self.scale(-T::one())
    }
}

impl<T: Real> Mul for &Jet<T> {
    type Output = Jet<T>;
    fn mul(self, o: &Jet<T>) -> Jet<T> {
        let mut c = vec![T::zero(); self.c.len()];
        for &(i, j, k) in &self.space.products {
            let (a, b) = (self.c[i as usize], o.c[j as usize]);
            if a != T::zero() && b != T::zero() {
                c[k as usize] = c[k as usize] + a * b;
            }
        }
        Jet { space: self.space.clone(), c }
    }
}
