//! Parametric SiC-like device generator.
//!
//! Produces tabulated I-V grids and junction-capacitance curves from a
//! handful of parameters: a square-law channel with a body diode for the
//! I-V data, and `c_min + c0 / (1 + v/v_j)^m` junction capacitances. Used
//! for demo configurations, property tests, and randomized acceptance runs.

use serde::{Deserialize, Serialize};

use crate::device::{CapacitanceCurve, DeviceModel, IvGrid};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JunctionCap {
    /// Zero-bias excess capacitance (F).
    pub c0: f64,
    /// Built-in potential (V).
    pub v_j: f64,
    /// Grading exponent.
    pub m: f64,
    /// High-voltage floor (F).
    pub c_min: f64,
}

impl JunctionCap {
    pub fn at(&self, v: f64) -> f64 {
        self.c_min + self.c0 / (1.0 + v.max(0.0) / self.v_j).powf(self.m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDevice {
    pub name: String,
    /// On-resistance at `v_gs_rated` (Ω).
    pub r_on: f64,
    pub v_gs_rated: f64,
    pub v_th: f64,
    /// Saturation-region output conductance factor (1/V).
    pub lambda: f64,
    pub diode_knee: f64,
    pub diode_r: f64,
    pub c_gs: f64,
    pub c_gd: JunctionCap,
    pub c_ds: JunctionCap,
    pub c_par_gd: f64,
    pub c_par_ds: f64,
    pub q_rr: f64,
    pub v_ee_ref: f64,
    /// Upper end of the tabulated drain-voltage range (V).
    pub v_max: f64,
}

impl SyntheticDevice {
    /// 1.2 kV SiC MOSFET in the 80 mΩ class.
    pub fn sic_80mohm() -> Self {
        SyntheticDevice {
            name: "sic80-synthetic".into(),
            r_on: 0.08,
            v_gs_rated: 20.0,
            v_th: 2.6,
            lambda: 2e-3,
            diode_knee: 2.8,
            diode_r: 0.05,
            c_gs: 950e-12,
            c_gd: JunctionCap {
                c0: 700e-12,
                v_j: 2.0,
                m: 1.0,
                c_min: 12e-12,
            },
            c_ds: JunctionCap {
                c0: 1200e-12,
                v_j: 5.0,
                m: 0.8,
                c_min: 50e-12,
            },
            c_par_gd: 0.0,
            c_par_ds: 10e-12,
            q_rr: 0.0,
            v_ee_ref: 5.0,
            v_max: 1200.0,
        }
    }

    fn k_factor(&self) -> f64 {
        1.0 / (2.0 * self.r_on * (self.v_gs_rated - self.v_th))
    }

    /// Analytic channel + body-diode current used to fill the grid.
    pub fn current(&self, v_gs: f64, v_ds: f64) -> f64 {
        let k = self.k_factor();
        let v_ov = (v_gs - self.v_th).max(0.0);
        let channel = |v: f64| {
            if v_ov == 0.0 {
                0.0
            } else if v < v_ov {
                k * (2.0 * v_ov * v - v * v)
            } else {
                k * v_ov * v_ov * (1.0 + self.lambda * (v - v_ov))
            }
        };
        if v_ds >= 0.0 {
            channel(v_ds)
        } else {
            let r = -v_ds;
            let diode = (r - self.diode_knee).max(0.0) / self.diode_r;
            -(channel(r) + diode)
        }
    }

    pub fn gate_grid(&self) -> Vec<f64> {
        let mut g = vec![-10.0, -5.0, 0.0];
        if self.v_th > 0.0 {
            g.push(self.v_th);
        }
        let mut v = self.v_th + 0.25;
        while v < self.v_th + 10.0 {
            g.push(v);
            v += 0.25;
        }
        let mut v = (self.v_th + 10.0).ceil();
        while v <= 26.0 {
            g.push(v);
            v += 1.0;
        }
        g.sort_by(f64::total_cmp);
        g.dedup();
        g
    }

    pub fn drain_grid(&self) -> Vec<f64> {
        let mut pos = vec![
            0.02, 0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0,
            12.5, 15.0, 20.0, 25.0, 30.0, 40.0, 50.0, 75.0, 100.0, 150.0, 200.0, 300.0, 400.0,
            600.0, 800.0,
        ];
        pos.retain(|&v| v < self.v_max);
        pos.push(self.v_max);
        let mut neg: Vec<f64> = vec![
            0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0, 7.0, 10.0, 20.0,
        ];
        neg.push(self.diode_knee);
        neg.sort_by(f64::total_cmp);
        neg.dedup();
        let mut all: Vec<f64> = neg.iter().rev().map(|v| -v).collect();
        all.push(0.0);
        all.extend(pos);
        all
    }

    pub fn cap_grid(&self) -> Vec<f64> {
        let mut v = vec![
            0.0, 0.5, 1.0, 2.0, 3.0, 5.0, 7.0, 10.0, 15.0, 20.0, 30.0, 50.0, 70.0, 100.0, 150.0,
            200.0, 300.0, 400.0, 500.0, 600.0, 800.0, 1000.0,
        ];
        v.retain(|&x| x < self.v_max);
        v.push(self.v_max);
        v
    }

    pub fn iv_triplets(&self) -> Vec<(f64, f64, f64)> {
        let vds = self.drain_grid();
        self.gate_grid()
            .into_iter()
            .flat_map(|g| {
                vds.iter()
                    .map(move |&v| (g, v, self.current(g, v)))
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    pub fn to_model(&self) -> Result<DeviceModel> {
        let vds = self.drain_grid();
        let curves = self
            .gate_grid()
            .into_iter()
            .map(|g| {
                (
                    g,
                    vds.clone(),
                    vds.iter().map(|&v| self.current(g, v)).collect(),
                )
            })
            .collect();
        let vc = self.cap_grid();
        let dev = DeviceModel {
            name: self.name.clone(),
            iv: IvGrid::from_curves(curves)?,
            c_gs: self.c_gs,
            c_gd: CapacitanceCurve::new(vc.clone(), vc.iter().map(|&v| self.c_gd.at(v)).collect())?,
            c_ds: CapacitanceCurve::new(vc.clone(), vc.iter().map(|&v| self.c_ds.at(v)).collect())?,
            c_par_gd: self.c_par_gd,
            c_par_ds: self.c_par_ds,
            v_th: self.v_th,
            q_rr: self.q_rr,
            v_ee_ref: self.v_ee_ref,
        };
        dev.validate()?;
        Ok(dev)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builds_valid_model() {
        let s = SyntheticDevice::sic_80mohm();
        let d = s.to_model().unwrap();
        // on-resistance near the rated gate voltage
        let r = d.r_s(20.0, 0.5).unwrap();
        assert!((r - 0.08).abs() / 0.08 < 0.05, "r_on = {r}");
        assert!(d.r_s(-5.0, 100.0).unwrap().is_infinite());
        // body diode conducts in reverse while the gate is off
        assert!(d.channel_current(-5.0, -3.3).unwrap() < -5.0);
    }

    #[test]
    fn resistance_falls_with_gate_voltage() {
        let d = SyntheticDevice::sic_80mohm().to_model().unwrap();
        for v_ds in [0.5, 2.0, 10.0] {
            let mut prev = f64::INFINITY;
            for g in d.iv.gate_voltages().iter().filter(|&&g| g > d.v_th) {
                let r = d.r_s(*g, v_ds).unwrap();
                assert!(r <= prev + 1e-12);
                prev = r;
            }
        }
    }
}
