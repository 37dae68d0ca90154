//! Per-device nonlinear characteristics.
//!
//! A [`DeviceModel`] bundles the tabulated I-V grid that defines the
//! equivalent channel resistance, the junction-capacitance curves, and the
//! lumped parallel/recovery capacitances. Everything here is immutable once
//! built.

use crate::error::{check_finite, Error, Result};
use crate::interp::{Extrapolation, Pchip};
use crate::quad::adaptive_simpson;

/// Relative tolerance for `q_oss`/`e_oss` quadrature.
pub const QUAD_REL_TOL: f64 = 1e-9;

/// Tabulated channel characteristic: one `i_d(v_ds)` curve per gate voltage.
///
/// Positive current flows drain → source. Each curve covers forward and
/// reverse (third-quadrant / body-diode) conduction and passes through the
/// origin.
#[derive(Debug, Clone)]
pub struct IvGrid {
    gate_voltages: Vec<f64>,
    curves: Vec<Pchip>,
}

impl IvGrid {
    /// Builds the grid from `(v_gs, v_ds, i_d)` triplets in any order.
    pub fn from_triplets(triplets: &[(f64, f64, f64)]) -> Result<Self> {
        if triplets.is_empty() {
            return Err(Error::Config("I-V grid is empty".into()));
        }
        if triplets
            .iter()
            .any(|(a, b, c)| !(a.is_finite() && b.is_finite() && c.is_finite()))
        {
            return Err(Error::Config("I-V grid contains non-finite values".into()));
        }
        let mut sorted = triplets.to_vec();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let mut curves = Vec::new();
        let mut i = 0;
        while i < sorted.len() {
            let vgs = sorted[i].0;
            let mut j = i;
            while j < sorted.len() && sorted[j].0 == vgs {
                j += 1;
            }
            let vds: Vec<f64> = sorted[i..j].iter().map(|t| t.1).collect();
            let id: Vec<f64> = sorted[i..j].iter().map(|t| t.2).collect();
            curves.push((vgs, vds, id));
            i = j;
        }
        Self::from_curves(curves)
    }

    /// Builds the grid from per-gate-voltage curves `(v_gs, v_ds[], i_d[])`.
    pub fn from_curves(curves: Vec<(f64, Vec<f64>, Vec<f64>)>) -> Result<Self> {
        if curves.is_empty() {
            return Err(Error::Config("I-V grid is empty".into()));
        }
        let mut gate_voltages = Vec::with_capacity(curves.len());
        let mut interps = Vec::with_capacity(curves.len());
        for (vgs, vds, id) in curves {
            if let Some(&last) = gate_voltages.last() {
                if vgs <= last {
                    return Err(Error::Config(format!(
                        "gate voltages must be strictly increasing ({last} then {vgs})"
                    )));
                }
            }
            if let Some(w) = vds.windows(2).find(|w| w[1] <= w[0]) {
                return Err(Error::Config(format!(
                    "curve v_gs = {vgs} V: v_ds not strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
            if let Some(k) = id.windows(2).position(|w| w[1] < w[0]) {
                return Err(Error::Config(format!(
                    "curve v_gs = {vgs} V: current decreases between v_ds = {} and {}",
                    vds[k],
                    vds[k + 1]
                )));
            }
            match vds.iter().position(|&v| v == 0.0) {
                Some(k) if id[k].abs() <= 1e-12 => {}
                Some(k) => {
                    return Err(Error::Config(format!(
                        "curve v_gs = {vgs} V: i_d(0) = {} must be zero",
                        id[k]
                    )))
                }
                None => {
                    return Err(Error::Config(format!(
                        "curve v_gs = {vgs} V: no sample at v_ds = 0"
                    )))
                }
            }
            gate_voltages.push(vgs);
            interps.push(Pchip::new(vds, id, Extrapolation::Linear)?);
        }
        Ok(IvGrid {
            gate_voltages,
            curves: interps,
        })
    }

    pub fn gate_voltages(&self) -> &[f64] {
        &self.gate_voltages
    }

    /// Tabulated `v_ds` knots of the curve at gate index `k`.
    pub fn curve_vds(&self, k: usize) -> &[f64] {
        self.curves[k].xs()
    }

    pub fn curve_id(&self, k: usize) -> &[f64] {
        self.curves[k].ys()
    }

    /// Bracketing curve indices and the linear weight of the upper one.
    fn bracket(&self, v_gs: f64) -> (usize, usize, f64) {
        let g = &self.gate_voltages;
        let n = g.len();
        if n == 1 || v_gs <= g[0] {
            return (0, 0, 0.0);
        }
        if v_gs >= g[n - 1] {
            return (n - 1, n - 1, 0.0);
        }
        let hi = g.partition_point(|&x| x <= v_gs);
        let lo = hi - 1;
        let w = (v_gs - g[lo]) / (g[hi] - g[lo]);
        (lo, hi, w)
    }

    /// Current without input validation; `v_gs` is clamped to the grid span.
    pub fn current(&self, v_gs: f64, v_ds: f64) -> f64 {
        let (lo, hi, w) = self.bracket(v_gs);
        let a = self.curves[lo].eval(v_ds);
        if w == 0.0 {
            return a;
        }
        let b = self.curves[hi].eval(v_ds);
        (1.0 - w) * a + w * b
    }

    /// `(∂i/∂v_gs, ∂i/∂v_ds)` of the interpolant.
    pub fn current_partials(&self, v_gs: f64, v_ds: f64) -> (f64, f64) {
        let (lo, hi, w) = self.bracket(v_gs);
        if lo == hi {
            return (0.0, self.curves[lo].derivative(v_ds));
        }
        let g = &self.gate_voltages;
        let (a, b) = (self.curves[lo].eval(v_ds), self.curves[hi].eval(v_ds));
        let (da, db) = (
            self.curves[lo].derivative(v_ds),
            self.curves[hi].derivative(v_ds),
        );
        ((b - a) / (g[hi] - g[lo]), (1.0 - w) * da + w * db)
    }

    /// Small-signal slope at the origin, from the samples nearest `v_ds = 0`.
    fn origin_slope(&self, v_gs: f64) -> f64 {
        let (lo, hi, w) = self.bracket(v_gs);
        let slope = |k: usize| {
            let c = &self.curves[k];
            let xs = c.xs();
            let z = xs.iter().position(|&v| v == 0.0).unwrap_or(0);
            let (a, b) = if z > 0 && z + 1 < xs.len() {
                (xs[z - 1], xs[z + 1])
            } else if z + 1 < xs.len() {
                (xs[z], xs[z + 1])
            } else if z > 0 {
                (xs[z - 1], xs[z])
            } else {
                return 0.0;
            };
            (c.eval(b) - c.eval(a)) / (b - a)
        };
        if lo == hi {
            slope(lo)
        } else {
            (1.0 - w) * slope(lo) + w * slope(hi)
        }
    }
}

/// Junction capacitance `c(v)`, clamped to its endpoint values outside the
/// tabulated span.
#[derive(Debug, Clone)]
pub struct CapacitanceCurve {
    interp: Pchip,
}

impl CapacitanceCurve {
    pub fn new(v: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        if let Some(bad) = c.iter().find(|&&x| !(x > 0.0)) {
            return Err(Error::Config(format!(
                "capacitance must be positive, got {bad}"
            )));
        }
        Ok(CapacitanceCurve {
            interp: Pchip::new(v, c, Extrapolation::Clamp)?,
        })
    }

    /// Voltage-independent curve.
    pub fn constant(c: f64) -> Result<Self> {
        Self::new(vec![0.0], vec![c])
    }

    pub fn samples(&self) -> (&[f64], &[f64]) {
        (self.interp.xs(), self.interp.ys())
    }

    pub fn at(&self, v: f64) -> f64 {
        self.interp.eval(v)
    }

    /// Exact `∫_0^v c(u) du` of the interpolant (signed for `v < 0`).
    pub fn charge(&self, v: f64) -> f64 {
        self.interp.antiderivative(v) - self.interp.antiderivative(0.0)
    }

    /// `∫_0^v u·c(u) du` by adaptive Simpson.
    pub fn energy(&self, v: f64) -> f64 {
        adaptive_simpson(|u| u * self.at(u), 0.0, v, QUAD_REL_TOL, self.interp.xs())
    }

    pub fn knots(&self) -> &[f64] {
        self.interp.xs()
    }

    /// Voltage where the curve falls to twice its high-voltage asymptote
    /// (the last sample). `None` when the curve never exceeds that level.
    pub fn knee_voltage(&self) -> Option<f64> {
        let (xs, ys) = self.samples();
        let target = 2.0 * ys[ys.len() - 1];
        if ys[0] <= target {
            return None;
        }
        let k = ys.iter().rposition(|&c| c > target)?;
        if k + 1 >= xs.len() {
            return None;
        }
        let (mut a, mut b) = (xs[k], xs[k + 1]);
        for _ in 0..80 {
            let m = 0.5 * (a + b);
            if self.at(m) > target {
                a = m;
            } else {
                b = m;
            }
        }
        Some(0.5 * (a + b))
    }
}

/// One transistor's equivalent-circuit characterization.
#[derive(Debug, Clone)]
pub struct DeviceModel {
    pub name: String,
    pub iv: IvGrid,
    /// Gate-source capacitance, voltage independent (F).
    pub c_gs: f64,
    pub c_gd: CapacitanceCurve,
    pub c_ds: CapacitanceCurve,
    /// Parallel capacitance across gate-drain (F).
    pub c_par_gd: f64,
    /// Parallel capacitance across drain-source (F).
    pub c_par_ds: f64,
    /// Threshold voltage (V).
    pub v_th: f64,
    /// Total reverse-recovery charge (C); zero disables the recovery capacitance.
    pub q_rr: f64,
    /// Gate-off level used when the gate-drain argument is shifted (V, positive).
    pub v_ee_ref: f64,
}

impl DeviceModel {
    pub fn validate(&self) -> Result<()> {
        let g = self.iv.gate_voltages();
        if !(self.v_th >= g[0] && self.v_th <= g[g.len() - 1]) {
            return Err(Error::Config(format!(
                "{}: v_th = {} V lies outside the gate-voltage span [{}, {}]",
                self.name,
                self.v_th,
                g[0],
                g[g.len() - 1]
            )));
        }
        for (label, v) in [
            ("q_rr", self.q_rr),
            ("c_par_gd", self.c_par_gd),
            ("c_par_ds", self.c_par_ds),
        ] {
            if !(v >= 0.0) {
                return Err(Error::Config(format!(
                    "{}: {label} must be >= 0, got {v}",
                    self.name
                )));
            }
        }
        if !(self.c_gs > 0.0) {
            return Err(Error::Config(format!("{}: c_gs must be > 0", self.name)));
        }
        Ok(())
    }

    /// Total parallel capacitance `c_par_gd + c_par_ds`.
    pub fn c_par(&self) -> f64 {
        self.c_par_gd + self.c_par_ds
    }

    /// Output capacitance `c_gd(v) + c_ds(v)` (parallel parts excluded).
    pub fn c_oss(&self, v: f64) -> f64 {
        self.c_gd.at(v) + self.c_ds.at(v)
    }

    /// Channel current (all non-displacement current), drain → source positive.
    pub fn channel_current(&self, v_gs: f64, v_ds: f64) -> Result<f64> {
        check_finite("v_gs", v_gs)?;
        check_finite("v_ds", v_ds)?;
        Ok(self.iv.current(v_gs, v_ds))
    }

    /// Equivalent resistance `v_ds / i`. Infinite while the channel blocks.
    pub fn r_s(&self, v_gs: f64, v_ds: f64) -> Result<f64> {
        let i = self.channel_current(v_gs, v_ds)?;
        if v_ds == 0.0 {
            let g = self.iv.origin_slope(v_gs);
            return Ok(if g > 0.0 { 1.0 / g } else { f64::INFINITY });
        }
        if i == 0.0 || i.signum() != v_ds.signum() {
            return Ok(f64::INFINITY);
        }
        Ok(v_ds / i)
    }

    fn require_nonneg(v: f64) -> Result<()> {
        check_finite("v", v)?;
        if v < 0.0 {
            return Err(Error::Input(format!("voltage must be >= 0, got {v}")));
        }
        Ok(())
    }

    /// `∫_0^v (c_gd + c_ds) du`.
    pub fn q_oss(&self, v: f64) -> Result<f64> {
        Self::require_nonneg(v)?;
        let mut knots: Vec<f64> = self
            .c_gd
            .knots()
            .iter()
            .chain(self.c_ds.knots())
            .copied()
            .collect();
        knots.sort_by(f64::total_cmp);
        Ok(adaptive_simpson(
            |u| self.c_oss(u),
            0.0,
            v,
            QUAD_REL_TOL,
            &knots,
        ))
    }

    /// `∫_0^v u·(c_gd + c_ds) du`.
    pub fn e_oss(&self, v: f64) -> Result<f64> {
        Self::require_nonneg(v)?;
        let mut knots: Vec<f64> = self
            .c_gd
            .knots()
            .iter()
            .chain(self.c_ds.knots())
            .copied()
            .collect();
        knots.sort_by(f64::total_cmp);
        Ok(adaptive_simpson(
            |u| u * self.c_oss(u),
            0.0,
            v,
            QUAD_REL_TOL,
            &knots,
        ))
    }

    pub fn e_gd(&self, v: f64) -> Result<f64> {
        Self::require_nonneg(v)?;
        Ok(self.c_gd.energy(v))
    }

    pub fn e_ds(&self, v: f64) -> Result<f64> {
        Self::require_nonneg(v)?;
        Ok(self.c_ds.energy(v))
    }

    /// Lumped recovery capacitance for a hard-switched swing of `swing` volts.
    ///
    /// Constant `q_rr / swing` while charge remains to be extracted, zero once
    /// `q_removed` reaches `q_rr` or when the device has no recovery charge.
    pub fn c_rr(&self, swing: f64, q_removed: f64) -> Result<f64> {
        check_finite("swing", swing)?;
        check_finite("q_removed", q_removed)?;
        if q_removed < 0.0 {
            return Err(Error::Input(format!(
                "q_removed must be >= 0, got {q_removed}"
            )));
        }
        if self.q_rr == 0.0 || q_removed >= self.q_rr || swing <= 0.0 {
            return Ok(0.0);
        }
        Ok(self.q_rr / swing)
    }
}
