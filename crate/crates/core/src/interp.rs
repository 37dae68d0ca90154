//! Shape-preserving piecewise-cubic Hermite interpolation (PCHIP).
//!
//! Knot derivatives follow the Fritsch–Butland weighted harmonic mean, so
//! monotone data gives a monotone interpolant and flat runs stay flat.
//! The antiderivative of the interpolant is exact (piecewise quartic) and is
//! precomputed at the knots.

use crate::error::{Error, Result};

/// Behaviour outside `[x_first, x_last]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extrapolation {
    /// Hold the endpoint value.
    Clamp,
    /// Continue with the endpoint derivative.
    Linear,
}

#[derive(Debug, Clone)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
    /// `cum[k] = ∫_{x[0]}^{x[k]} p(u) du`
    cum: Vec<f64>,
    extrapolation: Extrapolation,
}

impl Pchip {
    pub fn new(x: Vec<f64>, y: Vec<f64>, extrapolation: Extrapolation) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::Config(format!(
                "interpolant needs equal-length columns, got {} and {}",
                x.len(),
                y.len()
            )));
        }
        if x.is_empty() {
            return Err(Error::Config(
                "interpolant needs at least one sample".into(),
            ));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Config("interpolant samples must be finite".into()));
        }
        if let Some(w) = x.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!(
                "abscissae must be strictly increasing ({} followed by {})",
                w[0], w[1]
            )));
        }
        let d = knot_slopes(&x, &y);
        let mut p = Pchip {
            x,
            y,
            d,
            cum: Vec::new(),
            extrapolation,
        };
        let mut cum = Vec::with_capacity(p.x.len());
        cum.push(0.0);
        for k in 0..p.x.len() - 1 {
            let prev = cum[k];
            cum.push(prev + p.segment_integral(k, 1.0));
        }
        p.cum = cum;
        Ok(p)
    }

    pub fn xs(&self) -> &[f64] {
        &self.x
    }

    pub fn ys(&self) -> &[f64] {
        &self.y
    }

    pub fn x_min(&self) -> f64 {
        self.x[0]
    }

    pub fn x_max(&self) -> f64 {
        self.x[self.x.len() - 1]
    }

    /// Index `k` with `x[k] <= v < x[k+1]`, restricted to interior segments.
    fn segment(&self, v: f64) -> usize {
        let n = self.x.len();
        debug_assert!(n >= 2);
        match self
            .x
            .binary_search_by(|p| p.partial_cmp(&v).unwrap_or(std::cmp::Ordering::Less))
        {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        }
    }

    pub fn eval(&self, v: f64) -> f64 {
        let n = self.x.len();
        if n == 1 {
            return self.y[0];
        }
        if v <= self.x[0] {
            return match self.extrapolation {
                Extrapolation::Clamp => self.y[0],
                Extrapolation::Linear => self.y[0] + self.d[0] * (v - self.x[0]),
            };
        }
        if v >= self.x[n - 1] {
            return match self.extrapolation {
                Extrapolation::Clamp => self.y[n - 1],
                Extrapolation::Linear => self.y[n - 1] + self.d[n - 1] * (v - self.x[n - 1]),
            };
        }
        let k = self.segment(v);
        let h = self.x[k + 1] - self.x[k];
        let t = (v - self.x[k]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.y[k] + h10 * h * self.d[k] + h01 * self.y[k + 1] + h11 * h * self.d[k + 1]
    }

    /// First derivative of the interpolant.
    pub fn derivative(&self, v: f64) -> f64 {
        let n = self.x.len();
        if n == 1 {
            return 0.0;
        }
        if v < self.x[0] || v > self.x[n - 1] {
            return match self.extrapolation {
                Extrapolation::Clamp => 0.0,
                Extrapolation::Linear => {
                    if v < self.x[0] {
                        self.d[0]
                    } else {
                        self.d[n - 1]
                    }
                }
            };
        }
        let k = self.segment(v);
        let h = self.x[k + 1] - self.x[k];
        let t = (v - self.x[k]) / h;
        let t2 = t * t;
        let dh00 = (6.0 * t2 - 6.0 * t) / h;
        let dh10 = 3.0 * t2 - 4.0 * t + 1.0;
        let dh01 = (-6.0 * t2 + 6.0 * t) / h;
        let dh11 = 3.0 * t2 - 2.0 * t;
        dh00 * self.y[k] + dh10 * self.d[k] + dh01 * self.y[k + 1] + dh11 * self.d[k + 1]
    }

    /// `∫_{x[k]}^{x[k] + tau*h} p(u) du` on segment `k`.
    fn segment_integral(&self, k: usize, tau: f64) -> f64 {
        let h = self.x[k + 1] - self.x[k];
        let t2 = tau * tau;
        let t3 = t2 * tau;
        let t4 = t3 * tau;
        let i00 = tau - t3 + 0.5 * t4;
        let i10 = 0.5 * t2 - 2.0 / 3.0 * t3 + 0.25 * t4;
        let i01 = t3 - 0.5 * t4;
        let i11 = -t3 / 3.0 + 0.25 * t4;
        h * (i00 * self.y[k] + i10 * h * self.d[k] + i01 * self.y[k + 1] + i11 * h * self.d[k + 1])
    }

    /// Exact `∫_{x[0]}^{v} p(u) du`, extrapolation included.
    pub fn antiderivative(&self, v: f64) -> f64 {
        let n = self.x.len();
        let x0 = self.x[0];
        if n == 1 {
            return self.y[0] * (v - x0);
        }
        if v <= x0 {
            let dv = v - x0;
            return match self.extrapolation {
                Extrapolation::Clamp => self.y[0] * dv,
                Extrapolation::Linear => self.y[0] * dv + 0.5 * self.d[0] * dv * dv,
            };
        }
        let xn = self.x[n - 1];
        if v >= xn {
            let dv = v - xn;
            let tail = match self.extrapolation {
                Extrapolation::Clamp => self.y[n - 1] * dv,
                Extrapolation::Linear => self.y[n - 1] * dv + 0.5 * self.d[n - 1] * dv * dv,
            };
            return self.cum[n - 1] + tail;
        }
        let k = self.segment(v);
        let tau = (v - self.x[k]) / (self.x[k + 1] - self.x[k]);
        self.cum[k] + self.segment_integral(k, tau)
    }

    /// Exact `∫_a^b p(u) du`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        self.antiderivative(b) - self.antiderivative(a)
    }
}

fn knot_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 1 {
        return vec![0.0];
    }
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    if n == 2 {
        return vec![delta[0], delta[0]];
    }
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        let (a, b) = (delta[k - 1], delta[k]);
        if a == 0.0 || b == 0.0 || a.signum() != b.signum() {
            d[k] = 0.0;
        } else {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / a + w2 / b);
        }
    }
    d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

// One-sided three-point estimate, limited to keep the end segment monotone.
fn end_slope(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d.signum() != del0.signum() || del0 == 0.0 {
        0.0
    } else if del0.signum() != del1.signum() && d.abs() > 3.0 * del0.abs() {
        3.0 * del0
    } else {
        d
    }
}
