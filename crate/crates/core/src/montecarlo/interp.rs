//! Monotone piecewise cubic Hermite interpolation (Fritsch–Carlson slopes)
//! of several channels sharing one set of nodes.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Pchip<const C: usize> {
    x: Vec<f64>,
    y: Vec<[f64; C]>,
    d: Vec<[f64; C]>,
}

/// Three-point end slope, clipped to preserve shape.
fn edge_slope(h0: f64, h1: f64, m0: f64, m1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if d.signum() != m0.signum() {
        0.0
    } else if m0.signum() != m1.signum() && d.abs() > 3.0 * m0.abs() {
        3.0 * m0
    } else {
        d
    }
}

impl<const C: usize> Pchip<C> {
    /// Nodes must be strictly increasing, at least two.
    pub fn new(x: Vec<f64>, y: Vec<[f64; C]>) -> Result<Self> {
        let n = x.len();
        if n < 2 || y.len() != n || x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("interpolation nodes must be >= 2 and strictly increasing".into()));
        }
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let mut d = vec![[0.0; C]; n];
        for c in 0..C {
            let m: Vec<f64> = (0..n - 1).map(|k| (y[k + 1][c] - y[k][c]) / h[k]).collect();
            if n == 2 {
                d[0][c] = m[0];
                d[1][c] = m[0];
                continue;
            }
            for k in 1..n - 1 {
                d[k][c] = if m[k - 1] * m[k] <= 0.0 {
                    0.0
                } else {
                    let w1 = 2.0 * h[k] + h[k - 1];
                    let w2 = h[k] + 2.0 * h[k - 1];
                    (w1 + w2) / (w1 / m[k - 1] + w2 / m[k])
                };
            }
            d[0][c] = edge_slope(h[0], h[1], m[0], m[1]);
            d[n - 1][c] = edge_slope(h[n - 2], h[n - 3], m[n - 2], m[n - 3]);
        }
        Ok(Pchip { x, y, d })
    }

    pub fn lo(&self) -> f64 {
        self.x[0]
    }

    pub fn hi(&self) -> f64 {
        self.x[self.x.len() - 1]
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.lo() && t <= self.hi()
    }

    /// Interpolated channels at `t`, which must lie in `[lo, hi]`.
    pub fn eval(&self, t: f64) -> [f64; C] {
        let k = self.x.partition_point(|&v| v <= t).clamp(1, self.x.len() - 1) - 1;
        let h = self.x[k + 1] - self.x[k];
        let s = (t - self.x[k]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        std::array::from_fn(|c| {
            h00 * self.y[k][c] + h10 * h * self.d[k][c] + h01 * self.y[k + 1][c] + h11 * h * self.d[k + 1][c]
        })
    }
}
