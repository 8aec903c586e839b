//! Small dense linear algebra and polynomial root finding.
//!
//! The systems here are at most 7x7, so a fixed-size LU with partial
//! pivoting generic over [`Real`] is used; it keeps `f32` and `f64`
//! paths identical. Polynomial roots go through nalgebra's eigenvalue
//! solver on the companion matrix.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Condition estimates above this value are reported as singular.
pub const MAX_CONDITION: f64 = 1e14;

/// LU factorisation `P A = L U` of a square matrix.
#[derive(Clone, Debug)]
pub struct Lu<T, const N: usize> {
    lu: [[T; N]; N],
    perm: [usize; N],
    norm1: T,
}

impl<T: Real, const N: usize> Lu<T, N> {
    /// Factorise `a`; fails with `SingularSystem` on an exactly zero pivot.
    pub fn new(a: [[T; N]; N]) -> Result<Self> {
        let norm1 = norm1(&a);
        let mut lu = a;
        let mut perm = [0usize; N];
        for (i, p) in perm.iter_mut().enumerate() {
            *p = i;
        }
        for k in 0..N {
            let pivot_row = (k..N)
                .max_by(|&i, &j| lu[i][k].abs().partial_cmp(&lu[j][k].abs()).unwrap_or(std::cmp::Ordering::Equal))
                .unwrap_or(k);
            if !(lu[pivot_row][k].abs() > T::zero()) {
                return Err(Error::SingularSystem {
                    condition: f64::INFINITY,
                });
            }
            lu.swap(k, pivot_row);
            perm.swap(k, pivot_row);
            let pivot = lu[k][k];
            for i in k + 1..N {
                let m = lu[i][k] / pivot;
                lu[i][k] = m;
                if m != T::zero() {
                    for j in k + 1..N {
                        lu[i][j] = lu[i][j] - m * lu[k][j];
                    }
                }
            }
        }
        Ok(Lu { lu, perm, norm1 })
    }

    pub fn solve(&self, b: &[T; N]) -> [T; N] {
        let mut y = [T::zero(); N];
        for i in 0..N {
            let mut acc = b[self.perm[i]];
            for j in 0..i {
                acc = acc - self.lu[i][j] * y[j];
            }
            y[i] = acc;
        }
        for i in (0..N).rev() {
            let mut acc = y[i];
            for j in i + 1..N {
                acc = acc - self.lu[i][j] * y[j];
            }
            y[i] = acc / self.lu[i][i];
        }
        y
    }

    /// 1-norm condition number `||A||_1 ||A^-1||_1`, with the inverse formed column by column.
    pub fn condition(&self) -> T {
        let mut inv_norm = T::zero();
        for c in 0..N {
            let mut e = [T::zero(); N];
            e[c] = T::one();
            let col = self.solve(&e);
            let s = col.iter().fold(T::zero(), |acc, v| acc + v.abs());
            inv_norm = inv_norm.max(s);
        }
        self.norm1 * inv_norm
    }
}

fn norm1<T: Real, const N: usize>(a: &[[T; N]; N]) -> T {
    (0..N)
        .map(|j| (0..N).fold(T::zero(), |acc, i| acc + a[i][j].abs()))
        .fold(T::zero(), T::max)
}

/// Condition threshold for `T`: `1e14`, or `1/epsilon` if that is smaller.
pub fn condition_limit<T: Real>() -> T {
    T::lit(MAX_CONDITION).min(T::one() / T::epsilon())
}

/// Solve `a x = b`, rejecting systems whose condition estimate exceeds [`condition_limit`].
pub fn solve<T: Real, const N: usize>(a: [[T; N]; N], b: [T; N]) -> Result<[T; N]> {
    let lu = Lu::new(a)?;
    let cond = lu.condition();
    if !(cond <= condition_limit::<T>()) {
        return Err(Error::SingularSystem {
            condition: cond.to_f64_lossy(),
        });
    }
    Ok(lu.solve(&b))
}

pub fn mat_vec<T: Real, const N: usize>(a: &[[T; N]; N], x: &[T; N]) -> [T; N] {
    let mut out = [T::zero(); N];
    for (o, row) in out.iter_mut().zip(a) {
        *o = row.iter().zip(x).fold(T::zero(), |acc, (r, v)| acc + *r * *v);
    }
    out
}

pub fn norm_inf<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |acc, x| acc.max(x.abs()))
}

/// Dense polynomial with coefficients in increasing degree, `c[0] + c[1] x + ...`.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly(pub Vec<f64>);

impl Poly {
    pub fn constant(c: f64) -> Self {
        Poly(vec![c])
    }

    /// `c0 + c1 x`.
    pub fn linear(c0: f64, c1: f64) -> Self {
        Poly(vec![c0, c1])
    }

    pub fn degree(&self) -> usize {
        self.0.iter().rposition(|c| *c != 0.0).unwrap_or(0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn derivative(&self) -> Poly {
        if self.0.len() <= 1 {
            return Poly::constant(0.0);
        }
        Poly(self.0.iter().enumerate().skip(1).map(|(k, c)| k as f64 * c).collect())
    }

    pub fn add(&self, rhs: &Poly) -> Poly {
        let n = self.0.len().max(rhs.0.len());
        Poly((0..n)
            .map(|k| self.0.get(k).copied().unwrap_or(0.0) + rhs.0.get(k).copied().unwrap_or(0.0))
            .collect())
    }

    pub fn sub(&self, rhs: &Poly) -> Poly {
        self.add(&rhs.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Poly {
        Poly(self.0.iter().map(|c| c * s).collect())
    }

    pub fn mul(&self, rhs: &Poly) -> Poly {
        let mut out = vec![0.0; self.0.len() + rhs.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in rhs.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly(out)
    }

    /// Real roots: companion-matrix eigenvalues with a small imaginary part,
    /// polished by Newton and kept when the residual is at rounding level.
    pub fn real_roots(&self) -> Vec<f64> {
        let n = self.degree();
        if n == 0 {
            return Vec::new();
        }
        let lead = self.0[n];
        let companion = DMatrix::from_fn(n, n, |i, j| {
            if i == 0 {
                -self.0[n - 1 - j] / lead
            } else if i == j + 1 {
                1.0
            } else {
                0.0
            }
        });
        let d = self.derivative();
        let mut roots: Vec<f64> = companion
            .complex_eigenvalues()
            .iter()
            .filter(|z| z.im.abs() <= 1e-6 * z.re.abs().max(1.0))
            .map(|z| {
                let mut x = z.re;
                for _ in 0..20 {
                    let (f, df) = (self.eval(x), d.eval(x));
                    if df == 0.0 {
                        break;
                    }
                    let step = f / df;
                    x -= step;
                    if step.abs() <= 1e-16 * x.abs().max(1.0) {
                        break;
                    }
                }
                x
            })
            .filter(|x| {
                let mag: f64 = self.0[..=n]
                    .iter()
                    .enumerate()
                    .map(|(k, c)| (c * x.powi(k as i32)).abs())
                    .sum();
                self.eval(*x).abs() <= 1e-9 * mag.max(f64::MIN_POSITIVE)
            })
            .collect();
        roots.sort_by(f64::total_cmp);
        roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * a.abs().max(1.0));
        roots
    }
}
