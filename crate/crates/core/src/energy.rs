//! Turn-on energy accounting.
//!
//! Three independent routes to `E_on` are provided: the direct dissipation
//! integral over a simulated trace, the charge-conservation ledger and the
//! energy-conservation ledger. The ledgers also run in a datasheet-only
//! "analytic" mode where the waveform integrals are closed by a simple
//! gate-charge model instead of a simulation. The conventional incomplete-ZVS
//! estimate is included as a baseline.

use serde::{Deserialize, Serialize};

use crate::circuit::CircuitSystem;
use crate::device::{DeviceModel, QUAD_REL_TOL};
use crate::error::{check_finite, Error, Result};
use crate::phases::{EventKind, PhaseTimeline};
use crate::quad::adaptive_simpson;
use crate::trace::WaveformTrace;

/// Integration window `[start, end]` in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

impl Window {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        check_finite("window start", start)?;
        check_finite("window end", end)?;
        if !(end > start) {
            return Err(Error::Window { start, end });
        }
        Ok(Window { start, end })
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    fn check_within(&self, trace: &WaveformTrace) -> Result<()> {
        if trace.is_empty() || self.start < trace.t_start() || self.end > trace.t_end() {
            return Err(Error::Window {
                start: self.start,
                end: self.end,
            });
        }
        Ok(())
    }
}

/// Trapezoid integral of tabulated `y(t)` over `[a, b]`, with the endpoint
/// values linearly interpolated between samples.
pub fn window_integral(t: &[f64], y: &[f64], a: f64, b: f64) -> f64 {
    let n = t.len();
    if n < 2 || b <= a {
        return 0.0;
    }
    let lerp = |x: f64| {
        let k = t.partition_point(|&s| s <= x).clamp(1, n - 1) - 1;
        let w = ((x - t[k]) / (t[k + 1] - t[k])).clamp(0.0, 1.0);
        y[k] + w * (y[k + 1] - y[k])
    };
    let lo = t.partition_point(|&s| s <= a);
    let hi = t.partition_point(|&s| s < b);
    let mut acc = 0.0;
    let (mut tp, mut yp) = (a, lerp(a));
    for k in lo..hi {
        acc += 0.5 * (t[k] - tp) * (y[k] + yp);
        tp = t[k];
        yp = y[k];
    }
    acc + 0.5 * (b - tp) * (lerp(b) + yp)
}

fn integral_of(trace: &WaveformTrace, w: &Window, f: impl Fn(usize) -> f64) -> f64 {
    let y: Vec<f64> = (0..trace.len()).map(f).collect();
    window_integral(&trace.t, &y, w.start, w.end)
}

/// `∫ v_ds,S1 · i_RS1 dt` over the window.
pub fn e_on_direct(trace: &WaveformTrace, window: &Window) -> Result<f64> {
    window.check_within(trace)?;
    let v_dc = trace.v_dc();
    Ok(integral_of(trace, window, |k| {
        trace.states[k].v_ds_s1(v_dc) * trace.currents[k].i_rs1
    }))
}

fn check_swing(v_dc: f64, delta_v: f64) -> Result<()> {
    check_finite("v_dc", v_dc)?;
    check_finite("delta_v", delta_v)?;
    if !(v_dc > 0.0) || delta_v < 0.0 || delta_v > v_dc {
        return Err(Error::Input(format!(
            "need 0 <= delta_v <= v_dc, got delta_v = {delta_v}, v_dc = {v_dc}"
        )));
    }
    Ok(())
}

/// Charge taken up by S2's output capacitance and by its parallel
/// capacitance while its voltage rises from `v_dc - delta_v` to `v_dc`.
pub fn delta_q_s2(
    dev_s2: &DeviceModel,
    c_par_s2: f64,
    v_dc: f64,
    delta_v: f64,
) -> Result<(f64, f64)> {
    check_swing(v_dc, delta_v)?;
    Ok((
        dev_s2.q_oss(v_dc)? - dev_s2.q_oss(v_dc - delta_v)?,
        c_par_s2 * delta_v,
    ))
}

/// Energy absorbed by S2 over the same swing, shoot-through loss included.
pub fn s2_absorbed_energy(
    dev_s2: &DeviceModel,
    c_par_s2: f64,
    v_dc: f64,
    delta_v: f64,
    shoot_through: f64,
) -> Result<f64> {
    check_swing(v_dc, delta_v)?;
    let low = v_dc - delta_v;
    Ok(dev_s2.e_oss(v_dc)? - dev_s2.e_oss(low)?
        + 0.5 * c_par_s2 * (v_dc * v_dc - low * low)
        + shoot_through)
}

/// Operating point and waveform integrals consumed by the ledgers.
///
/// Currents follow the circuit convention: `i_l` is positive into the
/// midpoint, `i_rs2` positive drain to source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionInputs {
    pub v_dc: f64,
    /// Residual S1 blocking voltage at the start of the window (V).
    pub delta_v: f64,
    pub window: Window,
    pub int_i_rs2: f64,
    pub int_vds2_i_rs2: f64,
    pub int_i_l: f64,
    pub int_vds2_i_l: f64,
    pub c_par_s1: f64,
    pub c_par_s2: f64,
    /// Gate plateau voltage, when known (reported only).
    pub v_gp: Option<f64>,
}

impl PredictionInputs {
    /// Integrals from a simulated trace over `window`.
    pub fn from_trace(
        trace: &WaveformTrace,
        window: &Window,
        dev_s1: &DeviceModel,
        dev_s2: &DeviceModel,
    ) -> Result<Self> {
        window.check_within(trace)?;
        let v_dc = trace.v_dc();
        let delta_v = (v_dc - trace.state_at(window.start)[2]).clamp(0.0, v_dc);
        let s = &trace.states;
        let c = &trace.currents;
        Ok(PredictionInputs {
            v_dc,
            delta_v,
            window: *window,
            int_i_rs2: integral_of(trace, window, |k| c[k].i_rs2),
            int_vds2_i_rs2: integral_of(trace, window, |k| s[k].v_m * c[k].i_rs2),
            int_i_l: integral_of(trace, window, |k| s[k].i_l),
            int_vds2_i_l: integral_of(trace, window, |k| s[k].v_m * s[k].i_l),
            c_par_s1: dev_s1.c_par(),
            c_par_s2: dev_s2.c_par(),
            v_gp: None,
        })
    }

    fn validate(&self) -> Result<()> {
        check_swing(self.v_dc, self.delta_v)?;
        for (name, v) in [
            ("int_i_rs2", self.int_i_rs2),
            ("int_vds2_i_rs2", self.int_vds2_i_rs2),
            ("int_i_l", self.int_i_l),
            ("int_vds2_i_l", self.int_vds2_i_l),
            ("c_par_s1", self.c_par_s1),
            ("c_par_s2", self.c_par_s2),
        ] {
            check_finite(name, v)?;
        }
        Ok(())
    }
}

/// The six labelled terms of the charge-conservation expression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChargeLedgerTerms {
    /// Energy provided by the DC source to the half-bridge.
    pub dc_source_energy: f64,
    /// Energy provided by the load (AC-link) side.
    pub ac_link_energy: f64,
    /// Energy stored by S2's output capacitance.
    pub s2_output_cap_energy: f64,
    /// Energy dissipated in S2 by shoot-through.
    pub s2_shoot_through: f64,
    /// Energy stored by S2's parallel capacitance.
    pub s2_parallel_cap_energy: f64,
    /// Energy released in S1's channel by discharging its own capacitances.
    pub s1_discharge_energy: f64,
}

impl ChargeLedgerTerms {
    pub fn total(&self) -> f64 {
        self.dc_source_energy + self.ac_link_energy
            - self.s2_output_cap_energy
            - self.s2_shoot_through
            - self.s2_parallel_cap_energy
            + self.s1_discharge_energy
    }
}

/// `E_on` from charge conservation, with its itemized terms.
pub fn charge_ledger_e_on(
    dev_s1: &DeviceModel,
    dev_s2: &DeviceModel,
    p: &PredictionInputs,
) -> Result<(f64, ChargeLedgerTerms)> {
    p.validate()?;
    let (dq, dq_par) = delta_q_s2(dev_s2, p.c_par_s2, p.v_dc, p.delta_v)?;
    let low = p.v_dc - p.delta_v;
    let terms = ChargeLedgerTerms {
        dc_source_energy: p.v_dc * (p.int_i_rs2 + dq + dq_par - p.int_i_l),
        ac_link_energy: p.int_vds2_i_l,
        s2_output_cap_energy: dev_s2.e_oss(p.v_dc)? - dev_s2.e_oss(low)?,
        s2_shoot_through: p.int_vds2_i_rs2,
        s2_parallel_cap_energy: 0.5 * p.c_par_s2 * (p.v_dc * p.v_dc - low * low),
        s1_discharge_energy: dev_s1.e_oss(p.delta_v)? + 0.5 * p.c_par_s1 * p.delta_v * p.delta_v,
    };
    Ok((terms.total(), terms))
}

/// Quantities of the energy-conservation route.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub delta_q_s2: f64,
    pub delta_q_par_s2: f64,
    pub delta_q_dc: f64,
    pub w_dc: f64,
    pub w_l: f64,
    pub e_initial: f64,
    pub e_final: f64,
    pub e_dissipated_s2: f64,
    pub e_delivered: f64,
    /// `E_initial - E_final - E_delivered - E_dissipated,S2`.
    pub e_on: f64,
    /// The same quantity written in the charge-ledger closed form.
    pub e_on_closed_form: f64,
}

/// `E_on` from energy conservation over the window.
pub fn energy_ledger_e_on(
    dev_s1: &DeviceModel,
    dev_s2: &DeviceModel,
    p: &PredictionInputs,
) -> Result<EnergyLedger> {
    p.validate()?;
    let (dq, dq_par) = delta_q_s2(dev_s2, p.c_par_s2, p.v_dc, p.delta_v)?;
    let low = p.v_dc - p.delta_v;
    let e_initial = dev_s1.e_oss(p.delta_v)?
        + 0.5 * p.c_par_s1 * p.delta_v * p.delta_v
        + dev_s2.e_oss(low)?
        + 0.5 * p.c_par_s2 * low * low;
    let e_final = dev_s2.e_oss(p.v_dc)? + 0.5 * p.c_par_s2 * p.v_dc * p.v_dc;
    let delta_q_dc = dq + dq_par + p.int_i_rs2 - p.int_i_l;
    let w_dc = p.v_dc * delta_q_dc;
    let w_l = p.int_vds2_i_l;
    let e_delivered = -(w_dc + w_l);
    let e_dissipated_s2 = p.int_vds2_i_rs2;
    let e_on = e_initial - e_final - e_delivered - e_dissipated_s2;
    let (closed, _) = charge_ledger_e_on(dev_s1, dev_s2, p)?;
    Ok(EnergyLedger {
        delta_q_s2: dq,
        delta_q_par_s2: dq_par,
        delta_q_dc,
        w_dc,
        w_l,
        e_initial,
        e_final,
        e_dissipated_s2,
        e_delivered,
        e_on,
        e_on_closed_form: closed,
    })
}

/// Conventional incomplete-ZVS estimate built from the output-capacitance
/// curves alone: the residual energy of S1 plus the net energy drawn from the
/// link to recharge S2.
pub fn predict_conventional(
    dev_s1: &DeviceModel,
    dev_s2: &DeviceModel,
    v_dc: f64,
    delta_v: f64,
) -> Result<f64> {
    check_swing(v_dc, delta_v)?;
    let low = v_dc - delta_v;
    let dq = dev_s2.q_oss(v_dc)? - dev_s2.q_oss(low)?;
    let de = dev_s2.e_oss(v_dc)? - dev_s2.e_oss(low)?;
    Ok(dev_s1.e_oss(delta_v)? + v_dc * dq - de)
}

/// Gate-drive and load assumptions of the datasheet-only prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyticAssumptions {
    /// Load current leaving the midpoint (A, >= 0).
    pub i_out: f64,
    /// Gate-drive high level (V).
    pub gate_on: f64,
    /// Total gate-loop resistance of S1 (Ω).
    pub r_g: f64,
    /// Drain voltage at which the plateau is read off the transfer
    /// characteristic (V).
    #[serde(default = "default_probe")]
    pub v_ds_probe: f64,
}

fn default_probe() -> f64 {
    20.0
}

impl Default for AnalyticAssumptions {
    fn default() -> Self {
        AnalyticAssumptions {
            i_out: 10.0,
            gate_on: 20.0,
            r_g: 10.0,
            v_ds_probe: default_probe(),
        }
    }
}

/// Datasheet-only prediction with the closure's intermediate quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticPrediction {
    pub e_on: f64,
    pub terms: ChargeLedgerTerms,
    pub v_gp: f64,
    pub t_cc: f64,
    pub t_vf: f64,
    pub t_diss: f64,
    /// `∫ v_ds,S1 dt` over the whole window (V·s).
    pub int_vds1: f64,
    pub inputs: PredictionInputs,
}

fn knots_of(devs: &[&DeviceModel]) -> Vec<f64> {
    let mut k: Vec<f64> = devs
        .iter()
        .flat_map(|d| d.c_gd.knots().iter().chain(d.c_ds.knots()).copied())
        .collect();
    k.sort_by(f64::total_cmp);
    k.dedup();
    k
}

/// Datasheet-only `E_on` estimate.
///
/// The waveform integrals of the charge ledger are closed by a two-segment,
/// piecewise-constant model of S1's channel current while `v_ds,S1` moves
/// from `delta_v` to zero:
///
/// 1. Commutation: the gate charges from `v_th` to the plateau `V_gp` through
///    `r_g` and the input capacitance. The channel picks up the load current
///    and `v_ds,S1` is taken to stay at `delta_v`.
/// 2. Voltage fall: the plateau gate current `(gate_on - V_gp) / r_g`
///    discharges S1's gate-drain capacitance over the swing, which fixes the
///    fall time. The net current into the midpoint capacitance
///    `C_tot(v) = C_oss,S1(v) + C_par,S1 + C_oss,S2(v_dc - v) + C_par,S2`
///    is constant, so `∫ v dt = (T_vf / Q) ∫ v C_tot(v) dv`.
///
/// `V_gp` is the gate voltage at which the transfer characteristic, read at
/// `v_ds_probe`, carries `i_out`.
pub fn predict_proposed_analytic(
    dev_s1: &DeviceModel,
    dev_s2: &DeviceModel,
    v_dc: f64,
    delta_v: f64,
    a: &AnalyticAssumptions,
) -> Result<AnalyticPrediction> {
    check_swing(v_dc, delta_v)?;
    for (name, v) in [
        ("i_out", a.i_out),
        ("gate_on", a.gate_on),
        ("r_g", a.r_g),
        ("v_ds_probe", a.v_ds_probe),
    ] {
        check_finite(name, v)?;
    }
    if a.i_out < 0.0 || !(a.r_g > 0.0) || !(a.gate_on > dev_s1.v_th) || !(a.v_ds_probe > 0.0) {
        return Err(Error::Input(format!(
            "analytic closure needs i_out >= 0, r_g > 0, v_ds_probe > 0 and gate_on > v_th, got {a:?}"
        )));
    }
    let mut breaks = knots_of(&[dev_s1, dev_s2]);
    let mirrored: Vec<f64> = breaks
        .iter()
        .map(|k| v_dc - k)
        .filter(|&k| k > 0.0)
        .collect();
    breaks.extend(mirrored);
    breaks.sort_by(f64::total_cmp);
    let c_tot = |v: f64| {
        dev_s1.c_oss(v) + dev_s1.c_par() + dev_s2.c_oss((v_dc - v).max(0.0)) + dev_s2.c_par()
    };

    let carries = |g: f64| dev_s1.iv.current(g, a.v_ds_probe) >= a.i_out;
    let v_gp = if a.i_out == 0.0 {
        dev_s1.v_th
    } else if !carries(a.gate_on) {
        return Err(Error::Input(format!(
            "S1 cannot carry {} A at v_gs = {} V and v_ds = {} V",
            a.i_out, a.gate_on, a.v_ds_probe
        )));
    } else {
        let (mut lo, mut hi) = (dev_s1.v_th, a.gate_on);
        for _ in 0..100 {
            let m = 0.5 * (lo + hi);
            if carries(m) {
                hi = m;
            } else {
                lo = m;
            }
        }
        hi
    };

    let tau = a.r_g * (dev_s1.c_gs + dev_s1.c_gd.at(delta_v) + dev_s1.c_par_gd);
    let t_cc = tau * ((a.gate_on - dev_s1.v_th) / (a.gate_on - v_gp)).ln();
    let int_cc = delta_v * t_cc;

    let i_g = (a.gate_on - v_gp) / a.r_g;
    let q_gd = adaptive_simpson(
        |u| dev_s1.c_gd.at(u) + dev_s1.c_par_gd,
        0.0,
        delta_v,
        QUAD_REL_TOL,
        dev_s1.c_gd.knots(),
    );
    let t_vf = q_gd / i_g;
    let q_vf = adaptive_simpson(c_tot, 0.0, delta_v, QUAD_REL_TOL, &breaks);
    let int_vf = if q_vf > 0.0 {
        adaptive_simpson(|u| u * c_tot(u), 0.0, delta_v, QUAD_REL_TOL, &breaks) * t_vf / q_vf
    } else {
        0.0
    };

    let t_diss = t_cc + t_vf;
    let int_vds1 = int_cc + int_vf;
    let window = Window {
        start: 0.0,
        end: t_diss.max(f64::MIN_POSITIVE),
    };
    let inputs = PredictionInputs {
        v_dc,
        delta_v,
        window,
        int_i_rs2: 0.0,
        int_vds2_i_rs2: 0.0,
        int_i_l: -a.i_out * t_diss,
        int_vds2_i_l: -a.i_out * (v_dc * t_diss - int_vds1),
        c_par_s1: dev_s1.c_par(),
        c_par_s2: dev_s2.c_par(),
        v_gp: Some(v_gp),
    };
    let (e_on, terms) = charge_ledger_e_on(dev_s1, dev_s2, &inputs)?;
    Ok(AnalyticPrediction {
        e_on,
        terms,
        v_gp,
        t_cc,
        t_vf,
        t_diss,
        int_vds1,
        inputs,
    })
}

/// Relative prediction errors (percent) and the error-reduction ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub err_conv_pct: f64,
    pub err_prop_pct: f64,
    /// `|err_conv| / |err_prop|`; infinite when the proposed error is zero
    /// and the conventional one is not, 1 when both vanish.
    pub reduction: f64,
}

pub fn error_metrics(
    measured: f64,
    predicted_conv: f64,
    predicted_prop: f64,
) -> Result<ErrorMetrics> {
    check_finite("measured", measured)?;
    check_finite("predicted_conv", predicted_conv)?;
    check_finite("predicted_prop", predicted_prop)?;
    if !(measured > 0.0) {
        return Err(Error::Input(format!(
            "measured energy must be > 0, got {measured}"
        )));
    }
    let ec = (predicted_conv - measured) / measured * 100.0;
    let ep = (predicted_prop - measured) / measured * 100.0;
    let reduction = if ec.abs() == ep.abs() {
        1.0
    } else if ep == 0.0 {
        f64::INFINITY
    } else {
        ec.abs() / ep.abs()
    };
    Ok(ErrorMetrics {
        err_conv_pct: ec,
        err_prop_pct: ep,
        reduction,
    })
}

/// Absolute and relative size of a discrepancy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub abs: f64,
    pub rel: f64,
}

impl Residual {
    pub fn of(value: f64, reference: f64) -> Self {
        let rel = if reference != 0.0 {
            (value / reference).abs()
        } else if value == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        Residual { abs: value, rel }
    }
}

/// Network-level energy balance of a simulated window.
///
/// Every capacitor (gate ones included) contributes to the stored energy;
/// the DC link, the load and both gate drivers are the external sources;
/// channels and gate resistors dissipate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationBalance {
    pub e_initial: f64,
    pub e_final: f64,
    pub e_on: f64,
    pub e_channel_s2: f64,
    pub e_gate_resistors: f64,
    pub e_dissipated: f64,
    pub w_dc: f64,
    pub w_load: f64,
    pub w_drivers: f64,
    /// `-(w_dc + w_load + w_drivers)`.
    pub e_delivered: f64,
    /// `e_initial - e_dissipated - e_delivered - e_final`.
    pub residual: Residual,
}

/// Energy stored in every capacitor of the network for state `x`.
pub fn stored_energy(sys: &CircuitSystem, v_gs1: f64, v_gs2: f64, v_m: f64) -> f64 {
    let c = &sys.config;
    let (d1, d2) = (&c.dev_s1, &c.dev_s2);
    let v_ds1 = c.v_dc - v_m;
    let v_dg1 = v_ds1 - v_gs1;
    let v_dg2 = v_m - v_gs2;
    let half = |cap: f64, v: f64| 0.5 * cap * v * v;
    let rr = sys.recovery.map_or(0.0, |r| {
        let hi = (v_m - r.v_start).clamp(0.0, r.swing);
        // ∫ v dq over the active window, q = c (v - v_start)
        r.capacitance * (r.v_start * hi + 0.5 * hi * hi)
    });
    half(d1.c_gs, v_gs1)
        + d1.c_gd.energy(v_dg1)
        + d1.c_ds.energy(v_ds1)
        + half(d1.c_par_gd, v_dg1)
        + half(d1.c_par_ds, v_ds1)
        + half(d2.c_gs, v_gs2)
        + d2.c_gd.energy(v_dg2)
        + d2.c_ds.energy(v_m)
        + half(d2.c_par_gd, v_dg2)
        + half(d2.c_par_ds, v_m)
        + rr
}

pub fn simulation_balance(
    trace: &WaveformTrace,
    sys: &CircuitSystem,
    window: &Window,
) -> Result<SimulationBalance> {
    window.check_within(trace)?;
    let cfg = &sys.config;
    let v_dc = cfg.v_dc;
    let s = &trace.states;
    let c = &trace.currents;
    let energy_at = |t: f64| {
        let x = trace.state_at(t);
        stored_energy(sys, x[0], x[1], x[2])
    };
    let e_initial = energy_at(window.start);
    let e_final = energy_at(window.end);
    let e_on = integral_of(trace, window, |k| s[k].v_ds_s1(v_dc) * c[k].i_rs1);
    let e_channel_s2 = integral_of(trace, window, |k| s[k].v_m * c[k].i_rs2);
    let e_gate_resistors = integral_of(trace, window, |k| {
        c[k].i_g_s1 * c[k].i_g_s1 * cfg.r_g_s1 + c[k].i_g_s2 * c[k].i_g_s2 * cfg.r_g_s2
    });
    let w_dc = integral_of(trace, window, |k| v_dc * c[k].i_dc);
    let w_load = integral_of(trace, window, |k| s[k].v_m * s[k].i_l);
    let w_drivers = integral_of(trace, window, |k| {
        let t = trace.t[k];
        sys.drive_s1(t) * c[k].i_g_s1 + sys.drive_s2(t) * c[k].i_g_s2
    });
    let e_dissipated = e_on + e_channel_s2 + e_gate_resistors;
    let e_delivered = -(w_dc + w_load + w_drivers);
    let residual = Residual::of(e_initial - e_dissipated - e_delivered - e_final, e_initial);
    Ok(SimulationBalance {
        e_initial,
        e_final,
        e_on,
        e_channel_s2,
        e_gate_resistors,
        e_dissipated,
        w_dc,
        w_load,
        w_drivers,
        e_delivered,
        residual,
    })
}

/// Displacement-charge bookkeeping of one capacitor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargeCheck {
    pub name: String,
    /// `∫ i dt` over the window (C).
    pub integral: f64,
    /// `Q(v_end) - Q(v_start)` from the capacitance curve (C).
    pub delta_q: f64,
    pub residual: Residual,
}

/// Compares each capacitor's integrated displacement current with the
/// change of its charge function.
pub fn charge_bookkeeping(
    trace: &WaveformTrace,
    sys: &CircuitSystem,
    window: &Window,
) -> Result<Vec<ChargeCheck>> {
    window.check_within(trace)?;
    let cfg = &sys.config;
    let (d1, d2) = (&cfg.dev_s1, &cfg.dev_s2);
    let v_dc = cfg.v_dc;
    let xa = trace.state_at(window.start);
    let xb = trace.state_at(window.end);
    let c = &trace.currents;
    type QFn<'a> = Box<dyn Fn(&nalgebra::DVector<f64>) -> f64 + 'a>;
    type IFn<'a> = Box<dyn Fn(usize) -> f64 + 'a>;
    let entries: Vec<(&str, QFn, IFn)> = vec![
        (
            "c_gs_s1",
            Box::new(|x| d1.c_gs * x[0]),
            Box::new(|k| c[k].i_cgs_s1),
        ),
        (
            "c_gd_s1",
            Box::new(|x| d1.c_gd.charge(v_dc - x[2] - x[0])),
            Box::new(|k| c[k].i_cgd_s1),
        ),
        (
            "c_ds_s1",
            Box::new(|x| d1.c_ds.charge(v_dc - x[2])),
            Box::new(|k| c[k].i_cds_s1),
        ),
        (
            "c_par_gd_s1",
            Box::new(|x| d1.c_par_gd * (v_dc - x[2] - x[0])),
            Box::new(|k| c[k].i_cpar_gd_s1),
        ),
        (
            "c_par_ds_s1",
            Box::new(|x| d1.c_par_ds * (v_dc - x[2])),
            Box::new(|k| c[k].i_cpar_ds_s1),
        ),
        (
            "c_gs_s2",
            Box::new(|x| d2.c_gs * x[1]),
            Box::new(|k| c[k].i_cgs_s2),
        ),
        (
            "c_gd_s2",
            Box::new(|x| d2.c_gd.charge(x[2] - x[1])),
            Box::new(|k| c[k].i_cgd_s2),
        ),
        (
            "c_ds_s2",
            Box::new(|x| d2.c_ds.charge(x[2])),
            Box::new(|k| c[k].i_cds_s2),
        ),
        (
            "c_par_gd_s2",
            Box::new(|x| d2.c_par_gd * (x[2] - x[1])),
            Box::new(|k| c[k].i_cpar_gd_s2),
        ),
        (
            "c_par_ds_s2",
            Box::new(|x| d2.c_par_ds * x[2]),
            Box::new(|k| c[k].i_cpar_ds_s2),
        ),
        (
            "c_rr_s2",
            Box::new(|x| sys.recovery.map_or(0.0, |r| r.charge(x[2]))),
            Box::new(|k| c[k].i_crr_s2),
        ),
    ];
    let mut out = Vec::new();
    for (name, q, i) in entries {
        let delta_q = q(&xb) - q(&xa);
        let integral = integral_of(trace, window, i);
        if delta_q == 0.0 && integral == 0.0 {
            continue;
        }
        out.push(ChargeCheck {
            name: name.into(),
            integral,
            delta_q,
            residual: Residual::of(integral - delta_q, delta_q),
        });
    }
    Ok(out)
}

/// Complete energy report of one simulated turn-on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub window: Window,
    pub t_diss: f64,
    pub delta_v: f64,
    pub e_on_direct: f64,
    pub e_on_direct_full_trace: f64,
    pub e_on_charge_ledger: f64,
    pub e_on_energy_ledger: f64,
    pub e_on_proposed_analytic: Option<f64>,
    pub e_on_conventional: f64,
    pub terms: ChargeLedgerTerms,
    pub ledger: EnergyLedger,
    pub inputs: PredictionInputs,
    pub analytic: Option<AnalyticPrediction>,
    pub direct_vs_charge_ledger: Residual,
    pub charge_vs_energy_ledger: Residual,
    pub balance: SimulationBalance,
    pub charges: Vec<ChargeCheck>,
    pub notes: Vec<String>,
}

impl EnergyReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::Internal(format!("report serialization: {e}")))
    }
}

/// Ledger window of a timeline: onset to the end of the voltage fall, or to
/// the settle marker (then the trace end) when no fall was detected.
pub fn ledger_window(
    trace: &WaveformTrace,
    tl: &PhaseTimeline,
) -> Result<(Window, Option<String>)> {
    let end = tl.first(EventKind::VfEnd);
    let (end, note) = match end {
        Some(e) => (e, None),
        None => {
            let e = tl
                .first(EventKind::SettleStart)
                .filter(|&e| e > tl.onset)
                .unwrap_or(trace.t_end());
            (
                e,
                Some(
                    "no voltage-fall end detected; ledger window closes at settle/trace end"
                        .to_string(),
                ),
            )
        }
    };
    Ok((Window::new(tl.onset, end)?, note))
}

/// Runs every pipeline on a simulated trace.
pub fn energy_report(
    trace: &WaveformTrace,
    sys: &CircuitSystem,
    tl: &PhaseTimeline,
    analytic: Option<&AnalyticAssumptions>,
) -> Result<EnergyReport> {
    let (d1, d2) = (&*sys.config.dev_s1, &*sys.config.dev_s2);
    let (window, note) = ledger_window(trace, tl)?;
    let mut notes: Vec<String> = note.into_iter().collect();
    if sys.recovery.is_some() {
        notes.push("the ledgers carry no recovery-charge term; the recovery capacitance energy shows up as a ledger deficit".into());
    }
    let inputs = PredictionInputs::from_trace(trace, &window, d1, d2)?;
    let direct = e_on_direct(trace, &window)?;
    let full = e_on_direct(trace, &Window::new(trace.t_start(), trace.t_end())?)?;
    let (charge, terms) = charge_ledger_e_on(d1, d2, &inputs)?;
    let ledger = energy_ledger_e_on(d1, d2, &inputs)?;
    let conventional = predict_conventional(d1, d2, inputs.v_dc, inputs.delta_v)?;
    let analytic = match analytic {
        Some(a) => match predict_proposed_analytic(d1, d2, inputs.v_dc, inputs.delta_v, a) {
            Ok(p) => Some(p),
            Err(e) => {
                notes.push(format!("analytic prediction unavailable: {e}"));
                None
            }
        },
        None => None,
    };
    let balance = simulation_balance(trace, sys, &window)?;
    let charges = charge_bookkeeping(trace, sys, &window)?;
    Ok(EnergyReport {
        window,
        t_diss: window.duration(),
        delta_v: inputs.delta_v,
        e_on_direct: direct,
        e_on_direct_full_trace: full,
        e_on_charge_ledger: charge,
        e_on_energy_ledger: ledger.e_on,
        e_on_proposed_analytic: analytic.map(|a| a.e_on),
        e_on_conventional: conventional,
        terms,
        ledger,
        inputs,
        analytic,
        direct_vs_charge_ledger: Residual::of(charge - direct, direct),
        charge_vs_energy_ledger: Residual::of(ledger.e_on - charge, charge),
        balance,
        charges,
        notes,
    })
}
