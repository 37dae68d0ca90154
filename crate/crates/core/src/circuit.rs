//! Half-bridge network assembly.
//!
//! Unknowns are `x = [v_gs_s1, v_gs_s2, v_m, i_L]`. The rail is an ideal DC
//! link, so `v_ds_s1 = v_dc - v_m` and `v_ds_s2 = v_m` hold by construction.
//! The S1 gate driver is referenced to the midpoint, the S2 driver to ground.
//!
//! The network is written in charge form, `d q(x)/dt = f(t, x)`:
//!
//! * row 0, S1 gate node: `q = C_gs1·v_gs1 − Q_gd1(v_dg1)`, `f = i_g1`
//! * row 1, midpoint supernode (midpoint + S1 gate loop):
//!   `q = −Q_gd1 − Q_ds1 + Q_gd2 + Q_ds2 + Q_rr2`, `f = i_rs1 − i_rs2 + i_L`
//! * row 2, S2 gate node: `q = C_gs2·v_gs2 − Q_gd2(v_dg2)`, `f = i_g2`
//! * row 3, load: `L·i_L` with `f = −v_m` (inductor to ground), or a fixed
//!   current.
//!
//! `i_L` is signed positive when flowing into the midpoint.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::device::DeviceModel;
use crate::error::{Error, Result};
use crate::solver::{ChargeSystem, Event};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadDirection {
    IntoMidpoint,
    OutOfMidpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Load {
    /// Ideal current source of magnitude `i_l` (A).
    ConstantCurrent { i_l: f64, direction: LoadDirection },
    /// Inductor from the midpoint to ground; `i_l0` is signed into the midpoint.
    Inductor { l: f64, i_l0: f64 },
}

impl Load {
    /// Initial load current, signed into the midpoint.
    pub fn initial_current(&self) -> f64 {
        match *self {
            Load::ConstantCurrent {
                i_l,
                direction: LoadDirection::IntoMidpoint,
            } => i_l,
            Load::ConstantCurrent {
                i_l,
                direction: LoadDirection::OutOfMidpoint,
            } => -i_l,
            Load::Inductor { i_l0, .. } => i_l0,
        }
    }

    pub fn direction(&self) -> Option<LoadDirection> {
        let i = self.initial_current();
        if i > 0.0 {
            Some(LoadDirection::IntoMidpoint)
        } else if i < 0.0 {
            Some(LoadDirection::OutOfMidpoint)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Zvs,
    Hs,
    IzvsCase1,
    IzvsCase2,
}

impl Scenario {
    pub fn label(&self) -> &'static str {
        match self {
            Scenario::Zvs => "ZVS",
            Scenario::Hs => "HS",
            Scenario::IzvsCase1 => "iZVS case 1",
            Scenario::IzvsCase2 => "iZVS case 2",
        }
    }

    /// Load direction the scenario requires.
    pub fn load_direction(&self) -> LoadDirection {
        match self {
            Scenario::Zvs | Scenario::IzvsCase1 => LoadDirection::IntoMidpoint,
            Scenario::Hs | Scenario::IzvsCase2 => LoadDirection::OutOfMidpoint,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HalfBridgeConfig {
    pub v_dc: f64,
    /// High gate-drive level of S1 (V).
    pub gate_on: f64,
    /// Gate-off level (negative, V).
    pub gate_off: f64,
    /// Level S2's gate is held at; defaults to `gate_off`.
    pub gate_s2_hold: Option<f64>,
    pub r_g_s1: f64,
    pub r_g_s2: f64,
    pub load: Load,
    pub dev_s1: Arc<DeviceModel>,
    pub dev_s2: Arc<DeviceModel>,
    pub scenario: Scenario,
    /// Initial S1 drain-source voltage for the iZVS scenarios (V).
    pub delta_v: f64,
    /// Lets S2 carry forward channel current (shoot-through path).
    pub shoot_through_enabled: bool,
}

impl HalfBridgeConfig {
    pub fn validate(&self) -> Result<()> {
        let fin = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be finite")))
            }
        };
        fin("v_dc", self.v_dc)?;
        fin("gate_on", self.gate_on)?;
        fin("gate_off", self.gate_off)?;
        fin("delta_v", self.delta_v)?;
        if !(self.v_dc > 0.0) {
            return Err(Error::Config(format!(
                "v_dc must be > 0, got {}",
                self.v_dc
            )));
        }
        if !(self.r_g_s1 > 0.0) || !(self.r_g_s2 > 0.0) {
            return Err(Error::Config("gate resistances must be > 0".into()));
        }
        if self.gate_on <= self.gate_off {
            return Err(Error::Config("gate_on must exceed gate_off".into()));
        }
        match self.load {
            Load::ConstantCurrent { i_l, .. } if !(i_l >= 0.0) => {
                return Err(Error::Config(format!(
                    "load current magnitude must be >= 0, got {i_l}"
                )))
            }
            Load::Inductor { l, i_l0 } if !(l > 0.0) || !i_l0.is_finite() => {
                return Err(Error::Config("inductor needs l > 0 and finite i_l0".into()))
            }
            _ => {}
        }
        self.dev_s1.validate()?;
        self.dev_s2.validate()?;
        if matches!(self.scenario, Scenario::IzvsCase1 | Scenario::IzvsCase2)
            && !(self.delta_v > 0.0 && self.delta_v < self.v_dc)
        {
            return Err(Error::Config(format!(
                "iZVS needs 0 < delta_v < v_dc, got delta_v = {} with v_dc = {}",
                self.delta_v, self.v_dc
            )));
        }
        match self.load.direction() {
            Some(d) if d == self.scenario.load_direction() => Ok(()),
            Some(d) => Err(Error::Config(format!(
                "scenario {} needs load current {:?}, config has {:?}",
                self.scenario.label(),
                self.scenario.load_direction(),
                d
            ))),
            None => Err(Error::Config(format!(
                "scenario {} needs a nonzero load current",
                self.scenario.label()
            ))),
        }
    }

    pub fn gate_s2_level(&self) -> f64 {
        self.gate_s2_hold.unwrap_or(self.gate_off)
    }
}

/// Snapshot of the circuit unknowns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircuitState {
    pub t: f64,
    pub v_gs_s1: f64,
    pub v_gs_s2: f64,
    pub v_m: f64,
    pub i_l: f64,
    pub q_rr_removed: f64,
}

impl CircuitState {
    pub fn v_ds_s1(&self, v_dc: f64) -> f64 {
        v_dc - self.v_m
    }

    pub fn v_ds_s2(&self) -> f64 {
        self.v_m
    }
}

/// Every branch current at one instant. Displacement currents are charging
/// currents `C(v)·dv/dt` of the capacitor voltage (drain→gate for `C_gd`,
/// drain→source for `C_ds`, gate→source for `C_gs`).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BranchCurrents {
    pub i_rs1: f64,
    pub i_rs2: f64,
    pub i_cgs_s1: f64,
    pub i_cgd_s1: f64,
    pub i_cds_s1: f64,
    pub i_cpar_gd_s1: f64,
    pub i_cpar_ds_s1: f64,
    pub i_cgs_s2: f64,
    pub i_cgd_s2: f64,
    pub i_cds_s2: f64,
    pub i_cpar_gd_s2: f64,
    pub i_cpar_ds_s2: f64,
    pub i_crr_s2: f64,
    pub i_g_s1: f64,
    pub i_g_s2: f64,
    /// Sum of S1's drain-side displacement currents.
    pub i_c_s1: f64,
    /// Sum of S2's drain-side displacement currents, recovery included.
    pub i_c_s2: f64,
    /// S2 drain-terminal current.
    pub i_d_s2: f64,
    /// Current delivered by the DC link into the upper rail.
    pub i_dc: f64,
    /// Load current into the midpoint.
    pub i_l: f64,
}

impl BranchCurrents {
    fn dominant(&self) -> f64 {
        [
            self.i_rs1,
            self.i_rs2,
            self.i_cgs_s1,
            self.i_cgd_s1,
            self.i_cds_s1,
            self.i_cgs_s2,
            self.i_cgd_s2,
            self.i_cds_s2,
            self.i_g_s1,
            self.i_g_s2,
            self.i_dc,
            self.i_l,
            self.i_d_s2,
            self.i_crr_s2,
        ]
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// KCL residuals `[gate S1, gate S2, midpoint]`, relative to the dominant
    /// branch magnitude.
    pub fn kcl_residuals(&self) -> [f64; 3] {
        let scale = self.dominant().max(1e-30);
        [
            (self.i_g_s1 + self.i_cgd_s1 + self.i_cpar_gd_s1 - self.i_cgs_s1).abs() / scale,
            (self.i_g_s2 + self.i_cgd_s2 + self.i_cpar_gd_s2 - self.i_cgs_s2).abs() / scale,
            (self.i_dc + self.i_l - self.i_d_s2).abs() / scale,
        ]
    }
}

/// Lumped recovery capacitance of S2: constant `q_rr / v_dc` over a
/// `v_dc`-wide window of `v_m` starting where S2's reverse conduction
/// ceases, so the stored charge is released exactly once.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryCap {
    pub capacitance: f64,
    pub v_start: f64,
    pub swing: f64,
}

impl RecoveryCap {
    pub fn charge(&self, v_m: f64) -> f64 {
        self.capacitance * (v_m - self.v_start).clamp(0.0, self.swing)
    }

    pub fn incremental(&self, v_m: f64) -> f64 {
        if v_m > self.v_start && v_m < self.v_start + self.swing {
            self.capacitance
        } else {
            0.0
        }
    }
}

/// Assembled half-bridge ready for integration.
#[derive(Debug, Clone)]
pub struct CircuitSystem {
    pub config: HalfBridgeConfig,
    pub recovery: Option<RecoveryCap>,
    initial: DVector<f64>,
}

pub const N_STATE: usize = 4;

/// Builds the state-space system and scenario initial state.
pub fn assemble(config: HalfBridgeConfig) -> Result<CircuitSystem> {
    config.validate()?;
    let i_l = config.load.initial_current();
    let v_m0 = match config.scenario {
        Scenario::Zvs | Scenario::Hs => static_midpoint(&config, i_l)?,
        Scenario::IzvsCase1 | Scenario::IzvsCase2 => config.v_dc - config.delta_v,
    };
    let recovery = if config.scenario == Scenario::Hs && config.dev_s2.q_rr > 0.0 {
        let c = config.dev_s2.c_rr(config.v_dc, 0.0)?;
        let v_start = conduction_edge(&config, v_m0, i_l.abs());
        Some(RecoveryCap {
            capacitance: c,
            v_start,
            swing: config.v_dc,
        })
    } else {
        None
    };
    let initial = DVector::from_vec(vec![config.gate_off, config.gate_s2_level(), v_m0, i_l]);
    Ok(CircuitSystem {
        config,
        recovery,
        initial,
    })
}

/// Midpoint voltage at which the channels carry the load with gates off.
fn static_midpoint(cfg: &HalfBridgeConfig, i_l: f64) -> Result<f64> {
    let g = |v_m: f64| {
        cfg.dev_s1.iv.current(cfg.gate_off, cfg.v_dc - v_m)
            - s2_current(cfg, cfg.gate_s2_level(), v_m)
            + i_l
    };
    let (mut lo, mut hi) = (-cfg.v_dc - 100.0, 2.0 * cfg.v_dc + 100.0);
    if !(g(lo) > 0.0 && g(hi) < 0.0) {
        return Err(Error::Config(
            "no static midpoint: the devices cannot carry the load current with the gates off"
                .into(),
        ));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Midpoint voltage above which S2's reverse current has fallen below
/// 0.1 % of the load current.
fn conduction_edge(cfg: &HalfBridgeConfig, v_from: f64, i_load: f64) -> f64 {
    let level = -1e-3 * i_load.max(1e-3);
    let g = |v: f64| s2_current(cfg, cfg.gate_s2_level(), v) - level;
    let (mut lo, mut hi) = (v_from.min(0.0), 0.0);
    if g(lo) >= 0.0 {
        return lo;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

fn s2_current(cfg: &HalfBridgeConfig, v_gs: f64, v_ds: f64) -> f64 {
    let i = cfg.dev_s2.iv.current(v_gs, v_ds);
    if cfg.shoot_through_enabled {
        i
    } else {
        i.min(0.0)
    }
}

fn s2_partials(cfg: &HalfBridgeConfig, v_gs: f64, v_ds: f64) -> (f64, f64) {
    if !cfg.shoot_through_enabled && cfg.dev_s2.iv.current(v_gs, v_ds) > 0.0 {
        return (0.0, 0.0);
    }
    cfg.dev_s2.iv.current_partials(v_gs, v_ds)
}

impl CircuitSystem {
    pub fn initial_state(&self) -> DVector<f64> {
        self.initial.clone()
    }

    pub fn v_dc(&self) -> f64 {
        self.config.v_dc
    }

    /// S1 drive voltage: `gate_on` from `t = 0` on.
    pub fn drive_s1(&self, t: f64) -> f64 {
        if t >= 0.0 {
            self.config.gate_on
        } else {
            self.config.gate_off
        }
    }

    pub fn drive_s2(&self, _t: f64) -> f64 {
        self.config.gate_s2_level()
    }

    pub fn to_state(&self, t: f64, x: &DVector<f64>) -> CircuitState {
        CircuitState {
            t,
            v_gs_s1: x[0],
            v_gs_s2: x[1],
            v_m: x[2],
            i_l: x[3],
            q_rr_removed: self.recovery.map_or(0.0, |r| r.charge(x[2])),
        }
    }

    pub fn from_state(&self, s: &CircuitState) -> DVector<f64> {
        DVector::from_vec(vec![s.v_gs_s1, s.v_gs_s2, s.v_m, s.i_l])
    }

    /// `dx/dt` from `M(x)·dx/dt = f(t, x)`.
    pub fn rhs(&self, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.derivative(t, x)
    }

    pub fn channel_currents(&self, x: &DVector<f64>) -> (f64, f64) {
        let cfg = &self.config;
        (
            cfg.dev_s1.iv.current(x[0], cfg.v_dc - x[2]),
            s2_current(cfg, x[1], x[2]),
        )
    }

    /// Branch currents from a state and its derivative.
    pub fn branch_currents(&self, t: f64, x: &DVector<f64>, dx: &DVector<f64>) -> BranchCurrents {
        let cfg = &self.config;
        let (d1, d2) = (&cfg.dev_s1, &cfg.dev_s2);
        let v_ds1 = cfg.v_dc - x[2];
        let v_dg1 = v_ds1 - x[0];
        let v_dg2 = x[2] - x[1];
        let dv_ds1 = -dx[2];
        let dv_dg1 = dv_ds1 - dx[0];
        let dv_dg2 = dx[2] - dx[1];
        let (i_rs1, i_rs2) = self.channel_currents(x);

        let i_cgs_s1 = d1.c_gs * dx[0];
        let i_cgd_s1 = d1.c_gd.at(v_dg1) * dv_dg1;
        let i_cpar_gd_s1 = d1.c_par_gd * dv_dg1;
        let i_cds_s1 = d1.c_ds.at(v_ds1) * dv_ds1;
        let i_cpar_ds_s1 = d1.c_par_ds * dv_ds1;
        let i_cgs_s2 = d2.c_gs * dx[1];
        let i_cgd_s2 = d2.c_gd.at(v_dg2) * dv_dg2;
        let i_cpar_gd_s2 = d2.c_par_gd * dv_dg2;
        let i_cds_s2 = d2.c_ds.at(x[2]) * dx[2];
        let i_cpar_ds_s2 = d2.c_par_ds * dx[2];
        let i_crr_s2 = self.recovery.map_or(0.0, |r| r.incremental(x[2])) * dx[2];

        let i_c_s1 = i_cgd_s1 + i_cpar_gd_s1 + i_cds_s1 + i_cpar_ds_s1;
        let i_c_s2 = i_cgd_s2 + i_cpar_gd_s2 + i_cds_s2 + i_cpar_ds_s2 + i_crr_s2;
        BranchCurrents {
            i_rs1,
            i_rs2,
            i_cgs_s1,
            i_cgd_s1,
            i_cds_s1,
            i_cpar_gd_s1,
            i_cpar_ds_s1,
            i_cgs_s2,
            i_cgd_s2,
            i_cds_s2,
            i_cpar_gd_s2,
            i_cpar_ds_s2,
            i_crr_s2,
            i_g_s1: (self.drive_s1(t) - x[0]) / cfg.r_g_s1,
            i_g_s2: (self.drive_s2(t) - x[1]) / cfg.r_g_s2,
            i_c_s1,
            i_c_s2,
            i_d_s2: i_rs2 + i_c_s2,
            i_dc: i_rs1 + i_c_s1,
            i_l: x[3],
        }
    }

    /// Event functions used by the phase segmentation: the S1 threshold
    /// crossing, the current-commutation balance `i_rs1 + i_L`, and `i_dc`.
    pub fn standard_events(&self) -> Vec<Event<CircuitSystem>> {
        let v_th = self.config.dev_s1.v_th;
        vec![
            Event::new(EVENT_VTH, move |_: &CircuitSystem, _t, x: &DVector<f64>| {
                x[0] - v_th
            }),
            Event::new(
                EVENT_CC_BALANCE,
                |s: &CircuitSystem, _t, x: &DVector<f64>| {
                    let (i1, _) = s.channel_currents(x);
                    i1 + x[3]
                },
            ),
            Event::new(
                EVENT_IDC,
                |s: &CircuitSystem, t, x: &DVector<f64>| match s.derivative(t, x) {
                    Ok(dx) => s.branch_currents(t, x, &dx).i_dc,
                    Err(_) => f64::NAN,
                },
            ),
        ]
    }
}

pub const EVENT_VTH: &str = "vth_s1";
pub const EVENT_CC_BALANCE: &str = "cc_balance";
pub const EVENT_IDC: &str = "i_dc";

impl ChargeSystem for CircuitSystem {
    fn dim(&self) -> usize {
        N_STATE
    }

    fn charge(&self, x: &DVector<f64>) -> DVector<f64> {
        let cfg = &self.config;
        let (d1, d2) = (&cfg.dev_s1, &cfg.dev_s2);
        let v_ds1 = cfg.v_dc - x[2];
        let v_dg1 = v_ds1 - x[0];
        let v_dg2 = x[2] - x[1];
        let q_gd1 = d1.c_gd.charge(v_dg1) + d1.c_par_gd * v_dg1;
        let q_ds1 = d1.c_ds.charge(v_ds1) + d1.c_par_ds * v_ds1;
        let q_gd2 = d2.c_gd.charge(v_dg2) + d2.c_par_gd * v_dg2;
        let q_ds2 = d2.c_ds.charge(x[2]) + d2.c_par_ds * x[2];
        let q_rr = self.recovery.map_or(0.0, |r| r.charge(x[2]));
        let q_load = match cfg.load {
            Load::Inductor { l, .. } => l * x[3],
            Load::ConstantCurrent { .. } => x[3],
        };
        DVector::from_vec(vec![
            d1.c_gs * x[0] - q_gd1,
            -q_gd1 - q_ds1 + q_gd2 + q_ds2 + q_rr,
            d2.c_gs * x[1] - q_gd2,
            q_load,
        ])
    }

    fn capacitance(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let cfg = &self.config;
        let (d1, d2) = (&cfg.dev_s1, &cfg.dev_s2);
        let v_ds1 = cfg.v_dc - x[2];
        let v_dg1 = v_ds1 - x[0];
        let v_dg2 = x[2] - x[1];
        let cgd1 = d1.c_gd.at(v_dg1) + d1.c_par_gd;
        let cds1 = d1.c_ds.at(v_ds1) + d1.c_par_ds;
        let cgd2 = d2.c_gd.at(v_dg2) + d2.c_par_gd;
        let cds2 = d2.c_ds.at(x[2]) + d2.c_par_ds;
        let crr = self.recovery.map_or(0.0, |r| r.incremental(x[2]));
        let l = match cfg.load {
            Load::Inductor { l, .. } => l,
            Load::ConstantCurrent { .. } => 1.0,
        };
        #[rustfmt::skip]
        let m = DMatrix::from_row_slice(4, 4, &[
            d1.c_gs + cgd1, 0.0,            cgd1,                             0.0,
            cgd1,           -cgd2,          cgd1 + cds1 + cgd2 + cds2 + crr,  0.0,
            0.0,            d2.c_gs + cgd2, -cgd2,                            0.0,
            0.0,            0.0,            0.0,                              l,
        ]);
        m
    }

    fn current(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        let cfg = &self.config;
        let (i1, i2) = self.channel_currents(x);
        let f_load = match cfg.load {
            Load::Inductor { .. } => -x[2],
            Load::ConstantCurrent { .. } => 0.0,
        };
        DVector::from_vec(vec![
            (self.drive_s1(t) - x[0]) / cfg.r_g_s1,
            i1 - i2 + x[3],
            (self.drive_s2(t) - x[1]) / cfg.r_g_s2,
            f_load,
        ])
    }

    fn current_jacobian(&self, _t: f64, x: &DVector<f64>) -> DMatrix<f64> {
        let cfg = &self.config;
        let (g1, d1) = cfg.dev_s1.iv.current_partials(x[0], cfg.v_dc - x[2]);
        let (g2, d2) = s2_partials(cfg, x[1], x[2]);
        let l_row = match cfg.load {
            Load::Inductor { .. } => -1.0,
            Load::ConstantCurrent { .. } => 0.0,
        };
        #[rustfmt::skip]
        let j = DMatrix::from_row_slice(4, 4, &[
            -1.0 / cfg.r_g_s1, 0.0,               0.0,       0.0,
            g1,                -g2,               -d1 - d2,  1.0,
            0.0,               -1.0 / cfg.r_g_s2, 0.0,       0.0,
            0.0,               0.0,               l_row,     0.0,
        ]);
        j
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::synthetic::SyntheticDevice;

    pub(crate) fn config(scenario: Scenario, i_l: f64) -> HalfBridgeConfig {
        let dev = Arc::new(SyntheticDevice::sic_80mohm().to_model().unwrap());
        HalfBridgeConfig {
            v_dc: 400.0,
            gate_on: 20.0,
            gate_off: -5.0,
            gate_s2_hold: None,
            r_g_s1: 10.0,
            r_g_s2: 10.0,
            load: Load::ConstantCurrent {
                i_l,
                direction: scenario.load_direction(),
            },
            dev_s1: dev.clone(),
            dev_s2: dev,
            scenario,
            delta_v: 255.0,
            shoot_through_enabled: false,
        }
    }

    #[test]
    fn zvs_initial_state_clamps_to_rail() {
        let sys = assemble(config(Scenario::Zvs, 10.0)).unwrap();
        let x = sys.initial_state();
        let v_ds1 = sys.v_dc() - x[2];
        // S1 body diode carries the load current
        assert!(v_ds1 < -2.8 && v_ds1 > -5.0, "v_ds1 = {v_ds1}");
        let (i1, _) = sys.channel_currents(&x);
        assert!((i1 + 10.0).abs() < 1e-6);
    }

    #[test]
    fn hs_initial_state_in_s2_reverse_channel() {
        let sys = assemble(config(Scenario::Hs, 10.0)).unwrap();
        let x = sys.initial_state();
        assert!(x[2] < 0.0 && x[2] > -5.0);
        let (_, i2) = sys.channel_currents(&x);
        assert!((i2 + 10.0).abs() < 1e-6);
    }

    #[test]
    fn izvs_case2_initial_delta_v() {
        let sys = assemble(config(Scenario::IzvsCase2, 2.0)).unwrap();
        let x = sys.initial_state();
        assert!((sys.v_dc() - x[2] - 255.0).abs() < 1e-12);
    }

    #[test]
    fn inconsistent_scenario_load_rejected() {
        let mut c = config(Scenario::Hs, 10.0);
        c.load = Load::ConstantCurrent {
            i_l: 10.0,
            direction: LoadDirection::IntoMidpoint,
        };
        assert!(matches!(assemble(c), Err(Error::Config(_))));
    }

    /// All-blocking half-bridge with no load current and drives held off.
    pub(crate) fn idle_system() -> CircuitSystem {
        let mut c = config(Scenario::IzvsCase2, 0.0);
        c.gate_on = c.gate_off + 1e-12;
        // bypasses the load-direction check, which rejects a zero load
        CircuitSystem {
            initial: DVector::from_vec(vec![-5.0, -5.0, 145.0, 0.0]),
            config: c,
            recovery: None,
        }
    }

    #[test]
    fn equilibrium_has_zero_derivative() {
        let sys = idle_system();
        let x = sys.initial_state();
        let dx = sys.rhs(-1.0, &x).unwrap();
        assert!(dx.iter().all(|v| v.abs() < 1e-9), "{dx}");
        let b = sys.branch_currents(-1.0, &x, &dx);
        assert!(b.i_cgd_s1.abs() < 1e-18 && b.i_cds_s2.abs() < 1e-18);
    }

    #[test]
    fn kcl_residuals_vanish() {
        let sys = assemble(config(Scenario::IzvsCase2, 2.0)).unwrap();
        let mut x = sys.initial_state();
        x[0] = 6.0;
        x[1] = -4.0;
        let dx = sys.rhs(1e-9, &x).unwrap();
        let b = sys.branch_currents(1e-9, &x, &dx);
        for r in b.kcl_residuals() {
            assert!(r < 1e-9, "{r}");
        }
    }

    #[test]
    fn kvl_identity() {
        let sys = assemble(config(Scenario::IzvsCase1, 3.0)).unwrap();
        let s = sys.to_state(0.0, &sys.initial_state());
        assert_eq!(s.v_ds_s1(sys.v_dc()) + s.v_ds_s2(), sys.v_dc());
    }

    #[test]
    fn analytic_jacobians_match_finite_differences() {
        let sys = assemble(config(Scenario::IzvsCase2, 2.0)).unwrap();
        // off the gate-voltage knots, where the bilinear slope is discontinuous
        let x = DVector::from_vec(vec![7.2, -4.6, 210.0, -2.0]);
        let m = sys.capacitance(&x);
        let j = sys.current_jacobian(1e-9, &x);
        for k in 0..4 {
            let h = 1e-4 * x[k].abs().max(1.0);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let dq = (sys.charge(&xp) - sys.charge(&xm)) / (2.0 * h);
            let df = (sys.current(1e-9, &xp) - sys.current(1e-9, &xm)) / (2.0 * h);
            for r in 0..4 {
                let sq = m[(r, k)].abs().max(1e-15);
                assert!((dq[r] - m[(r, k)]).abs() < 1e-3 * sq + 1e-18, "M[{r},{k}]");
                let sf = j[(r, k)].abs().max(1e-9);
                assert!((df[r] - j[(r, k)]).abs() < 1e-3 * sf, "J[{r},{k}]");
            }
        }
    }
}
