//! Scenario classification and turn-on phase segmentation.
//!
//! A timeline is anchored at the switching-on onset: the first upward
//! crossing of the S1 threshold after which the forward channel resistance
//! leaves infinity and stays finite. The remaining markers (current
//! commutation, voltage fall, recovery, Miller platform and its sub-phases,
//! DC-link current reversals) are located on the trace afterwards.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::circuit::{
    CircuitState, HalfBridgeConfig, LoadDirection, Scenario, EVENT_CC_BALANCE, EVENT_IDC, EVENT_VTH,
};
use crate::device::DeviceModel;
use crate::error::{Error, Result};
use crate::solver::hermite;
use crate::trace::WaveformTrace;

/// Pre-switching operating point used for classification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialConditions {
    /// Load current magnitude (A).
    pub i_l: f64,
    pub direction: LoadDirection,
    /// S1 drain-source voltage just before switching (V).
    pub v_ds_s1: f64,
}

impl InitialConditions {
    pub fn from_config(cfg: &HalfBridgeConfig, v_m0: f64) -> Self {
        InitialConditions {
            i_l: cfg.load.initial_current().abs(),
            direction: cfg
                .load
                .direction()
                .unwrap_or(cfg.scenario.load_direction()),
            v_ds_s1: cfg.v_dc - v_m0,
        }
    }
}

/// Classifies a configured half-bridge from its pre-switching state.
pub fn classify(cfg: &HalfBridgeConfig, state: &CircuitState) -> Result<Scenario> {
    let init = InitialConditions {
        i_l: state.i_l.abs(),
        direction: if state.i_l < 0.0 {
            LoadDirection::OutOfMidpoint
        } else {
            LoadDirection::IntoMidpoint
        },
        v_ds_s1: state.v_ds_s1(cfg.v_dc),
    };
    classify_scenario(cfg.v_dc, &init, &ClassifyBands::default())
}

/// Tolerance bands used to decide which regime an operating point is in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyBands {
    /// Below this |v_ds_s1| (V) S1 is treated as clamped by its own reverse
    /// conduction.
    pub clamp_v: f64,
    /// Below this load current (A) the direction is considered undefined.
    pub min_current: f64,
    /// Fraction of `v_dc` above which S1 counts as fully blocking.
    pub full_block: f64,
}

impl Default for ClassifyBands {
    fn default() -> Self {
        ClassifyBands {
            clamp_v: 10.0,
            min_current: 1e-3,
            full_block: 0.98,
        }
    }
}

/// Determines the scenario from the load direction and the initial S1
/// blocking voltage.
///
/// * ZVS: load current flows into the midpoint and S1 is clamped near zero.
/// * HS: load current flows out of the midpoint and S1 blocks the full rail.
/// * iZVS case 1: partial blocking voltage with current into the midpoint.
/// * iZVS case 2: partial blocking voltage with current out of the midpoint.
pub fn classify_scenario(
    v_dc: f64,
    init: &InitialConditions,
    bands: &ClassifyBands,
) -> Result<Scenario> {
    if !(v_dc > 0.0) || !init.v_ds_s1.is_finite() || !init.i_l.is_finite() {
        return Err(Error::Classification(format!(
            "non-physical operating point: v_dc = {v_dc}, v_ds_s1 = {}, i_l = {}",
            init.v_ds_s1, init.i_l
        )));
    }
    let criteria = "ZVS needs current into the midpoint with |v_ds_s1| <= clamp; \
                    HS needs current out of the midpoint with v_ds_s1 >= full_block * v_dc; \
                    iZVS needs clamp < v_ds_s1 < full_block * v_dc";
    if init.i_l < bands.min_current {
        return Err(Error::Classification(format!(
            "load current {} A is inside the zero band ({} A); {criteria}",
            init.i_l, bands.min_current
        )));
    }
    let v = init.v_ds_s1;
    let full = bands.full_block * v_dc;
    let into = init.direction == LoadDirection::IntoMidpoint;
    if v.abs() <= bands.clamp_v {
        if into {
            return Ok(Scenario::Zvs);
        }
        return Err(Error::Classification(format!(
            "S1 clamped at {v} V while the load drives current out of the midpoint; {criteria}"
        )));
    }
    if v >= full {
        if !into {
            return Ok(Scenario::Hs);
        }
        return Err(Error::Classification(format!(
            "S1 blocks {v} V with current into the midpoint, which would already have \
             discharged the node; {criteria}"
        )));
    }
    if v < -bands.clamp_v {
        return Err(Error::Classification(format!(
            "S1 reverse voltage {v} V exceeds the clamp band; {criteria}"
        )));
    }
    Ok(if into {
        Scenario::IzvsCase1
    } else {
        Scenario::IzvsCase2
    })
}

/// Detection knobs for [`detect_onset`] and [`segment`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentParams {
    /// Time the gate must stay above threshold for a crossing to count (s).
    pub min_hold: f64,
    /// Fraction of the v_ds_s1 swing that marks the voltage-fall boundaries.
    pub vf_fraction: f64,
    /// Minimum v_ds_s1 swing, as a fraction of v_dc, for a voltage fall.
    pub vf_min_swing: f64,
    /// Platform threshold on |dv_gs/dt| relative to its pre-platform peak.
    pub platform_ratio: f64,
    /// i_dc reversal hysteresis as a fraction of max |i_dc|.
    pub idc_band: f64,
    /// Forward drain voltage at which the channel state is probed (V).
    pub probe_vds: f64,
}

impl Default for SegmentParams {
    fn default() -> Self {
        SegmentParams {
            min_hold: 0.5e-9,
            vf_fraction: 0.02,
            vf_min_swing: 0.02,
            platform_ratio: 0.25,
            idc_band: 0.02,
            probe_vds: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Onset,
    CcComplete,
    VfStart,
    VfEnd,
    RrStart,
    RrPeak,
    IdcReversal,
    MillerStart,
    /// Boundary that opens Miller sub-phase `n` (n >= 2).
    MillerSub(u8),
    MillerEnd,
    SettleStart,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventKind::Onset => f.write_str("onset"),
            EventKind::CcComplete => f.write_str("cc_complete"),
            EventKind::VfStart => f.write_str("vf_start"),
            EventKind::VfEnd => f.write_str("vf_end"),
            EventKind::RrStart => f.write_str("rr_start"),
            EventKind::RrPeak => f.write_str("rr_peak"),
            EventKind::IdcReversal => f.write_str("idc_reversal"),
            EventKind::MillerStart => f.write_str("miller_start"),
            EventKind::MillerSub(n) => write!(f, "miller_sub{n}"),
            EventKind::MillerEnd => f.write_str("miller_end"),
            EventKind::SettleStart => f.write_str("settle_start"),
        }
    }
}

impl FromStr for EventKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "onset" => EventKind::Onset,
            "cc_complete" => EventKind::CcComplete,
            "vf_start" => EventKind::VfStart,
            "vf_end" => EventKind::VfEnd,
            "rr_start" => EventKind::RrStart,
            "rr_peak" => EventKind::RrPeak,
            "idc_reversal" => EventKind::IdcReversal,
            "miller_start" => EventKind::MillerStart,
            "miller_end" => EventKind::MillerEnd,
            "settle_start" => EventKind::SettleStart,
            other => {
                let n = other
                    .strip_prefix("miller_sub")
                    .and_then(|n| n.parse::<u8>().ok())
                    .ok_or_else(|| Error::Parse(format!("unknown phase event `{other}`")))?;
                EventKind::MillerSub(n)
            }
        })
    }
}

impl Serialize for EventKind {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EventKind {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseEvent {
    pub t: f64,
    pub kind: EventKind,
    pub note: String,
}

/// Ordered phase events of one turn-on transient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimeline {
    pub scenario: Scenario,
    pub onset: f64,
    pub events: Vec<PhaseEvent>,
    pub warnings: Vec<String>,
}

impl PhaseTimeline {
    pub fn first(&self, kind: EventKind) -> Option<f64> {
        self.events.iter().find(|e| e.kind == kind).map(|e| e.t)
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    pub fn has_platform(&self) -> bool {
        self.first(EventKind::MillerStart).is_some()
    }

    /// Number of Miller sub-phases (zero without a platform).
    pub fn miller_subphases(&self) -> usize {
        if self.has_platform() {
            1 + self
                .events
                .iter()
                .filter(|e| matches!(e.kind, EventKind::MillerSub(_)))
                .count()
        } else {
            0
        }
    }

    /// Sub-phase intervals `(start, end)` in order.
    pub fn miller_intervals(&self) -> Vec<(f64, f64)> {
        let (Some(a), Some(b)) = (
            self.first(EventKind::MillerStart),
            self.first(EventKind::MillerEnd),
        ) else {
            return Vec::new();
        };
        let mut edges = vec![a];
        edges.extend(
            self.events
                .iter()
                .filter(|e| matches!(e.kind, EventKind::MillerSub(_)))
                .map(|e| e.t),
        );
        edges.push(b);
        edges.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::Internal(format!("timeline serialization: {e}")))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse(format!("timeline JSON: {e}")))
    }

    fn push(&mut self, t: f64, kind: EventKind, note: impl Into<String>) {
        self.events.push(PhaseEvent {
            t,
            kind,
            note: note.into(),
        });
    }
}

/// Channel state of S1 probed at a small forward drain voltage, so that
/// reverse conduction through the body diode does not count as "on".
fn forward_open(dev: &DeviceModel, v_gs: f64, probe: f64) -> bool {
    dev.iv.current(v_gs, probe) > 0.0
}

/// Hermite-refined time where column `y` (with derivative `dy`) crosses
/// `level` inside sample interval `[k, k+1]`.
fn refine(t: &[f64], y: &[f64], dy: Option<&[f64]>, k: usize, level: f64) -> f64 {
    let (t0, t1) = (t[k], t[k + 1]);
    let f = |s: f64| match dy {
        Some(d) => hermite(t0, t1, y[k], y[k + 1], d[k], d[k + 1], s) - level,
        None => y[k] + (y[k + 1] - y[k]) * (s - t0) / (t1 - t0) - level,
    };
    let (mut a, mut b) = (t0, t1);
    let fa = f(a);
    if fa == 0.0 {
        return a;
    }
    if fa.signum() == f(b).signum() {
        // Interpolant does not bracket (shape mismatch); fall back to linear.
        let w = (level - y[k]) / (y[k + 1] - y[k]);
        return t0 + w.clamp(0.0, 1.0) * (t1 - t0);
    }
    for _ in 0..100 {
        let m = 0.5 * (a + b);
        if f(m).signum() == fa.signum() {
            a = m;
        } else {
            b = m;
        }
        if b - a <= 1e-6 * (t1 - t0) {
            break;
        }
    }
    0.5 * (a + b)
}

/// First crossing of `level` at or after sample `from`, in the requested
/// direction (`rising` = upward). Returns the interval index and time.
fn crossing(
    t: &[f64],
    y: &[f64],
    dy: Option<&[f64]>,
    from: usize,
    level: f64,
    rising: bool,
) -> Option<(usize, f64)> {
    (from..y.len().saturating_sub(1)).find_map(|k| {
        let hit = if rising {
            y[k] < level && y[k + 1] >= level
        } else {
            y[k] > level && y[k + 1] <= level
        };
        hit.then(|| (k, refine(t, y, dy, k, level)))
    })
}

/// Solver marker of `name` lying in sample interval `k`, when available.
fn marker_in(trace: &WaveformTrace, name: &str, k: usize, direction: i8) -> Option<f64> {
    let (a, b) = (trace.t[k], trace.t[k + 1]);
    trace
        .markers
        .iter()
        .find(|m| m.name == name && m.direction == direction && m.t >= a && m.t <= b)
        .map(|m| m.t)
}

/// Switching-on onset of S1.
///
/// The earliest upward crossing of `v_th` by `v_gs_s1` after which the
/// forward channel is open and the gate stays above threshold for
/// `min_hold` (or to the end of the trace). Crossings that fall back below
/// threshold sooner are rejected as blips.
pub fn detect_onset(
    trace: &WaveformTrace,
    dev_s1: &DeviceModel,
    params: &SegmentParams,
) -> Result<f64> {
    if trace.len() < 2 {
        return Err(Error::NotSwitched(
            "trace has fewer than two samples".into(),
        ));
    }
    let vgs = trace.v_gs_s1();
    let dv: Vec<f64> = trace.derivs.iter().map(|d| d[0]).collect();
    let v_th = dev_s1.v_th;
    let mut from = 0;
    while let Some((k, tc)) = crossing(&trace.t, &vgs, Some(&dv), from, v_th, true) {
        if forward_open(dev_s1, vgs[k], params.probe_vds) {
            // already conducting forward before the crossing: not an onset
            from = k + 1;
            continue;
        }
        let t_hold = tc + params.min_hold;
        let held = (k + 1..trace.len())
            .take_while(|&j| trace.t[j] <= t_hold)
            .all(|j| vgs[j] >= v_th);
        let opens = std::iter::once(k + 1)
            .chain((k + 2..trace.len()).take_while(|&j| trace.t[j] <= t_hold))
            .any(|j| forward_open(dev_s1, vgs[j], params.probe_vds));
        if held && opens {
            return Ok(marker_in(trace, EVENT_VTH, k, 1).unwrap_or(tc));
        }
        from = k + 1;
    }
    Err(Error::NotSwitched(format!(
        "v_gs_s1 never rises and holds above v_th = {v_th} V (max {:.3} V)",
        vgs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    )))
}

/// Voltage where `c(v)` falls to twice its value at `v_max`.
fn knee(c: impl Fn(f64) -> f64, v_lo: f64, v_max: f64) -> Option<f64> {
    let target = 2.0 * c(v_max);
    if c(v_lo) <= target {
        return None;
    }
    let (mut a, mut b) = (v_lo, v_max);
    for _ in 0..100 {
        let m = 0.5 * (a + b);
        if c(m) > target {
            a = m;
        } else {
            b = m;
        }
    }
    Some(0.5 * (a + b))
}

fn last_knot(dev: &DeviceModel) -> f64 {
    let a = dev.c_gd.knots();
    let b = dev.c_ds.knots();
    a[a.len() - 1].min(b[b.len() - 1])
}

/// Index of the maximum of `y` over `[a, b]` (inclusive sample indices).
fn argmax(y: &[f64], a: usize, b: usize) -> usize {
    (a..=b).max_by(|&i, &j| y[i].total_cmp(&y[j])).unwrap_or(a)
}

/// Locates the phase events of a turn-on transient.
pub fn segment(
    trace: &WaveformTrace,
    scenario: Scenario,
    dev_s1: &DeviceModel,
    dev_s2: &DeviceModel,
    params: &SegmentParams,
) -> Result<PhaseTimeline> {
    let onset = detect_onset(trace, dev_s1, params)?;
    let mut tl = PhaseTimeline {
        scenario,
        onset,
        events: Vec::new(),
        warnings: Vec::new(),
    };
    tl.push(
        onset,
        EventKind::Onset,
        format!("v_gs_s1 crosses v_th = {} V", dev_s1.v_th),
    );

    let t = &trace.t;
    let n = trace.len();
    let k0 = trace.index_at(onset).min(n - 2);
    let vds = trace.v_ds_s1();
    let dvds: Vec<f64> = trace.derivs.iter().map(|d| -d[2]).collect();
    let dvgs: Vec<f64> = trace.derivs.iter().map(|d| d[0]).collect();
    let vm: Vec<f64> = trace.states.iter().map(|s| s.v_m).collect();
    let dvm: Vec<f64> = trace.derivs.iter().map(|d| d[2]).collect();
    let i_dc: Vec<f64> = trace.currents.iter().map(|c| c.i_dc).collect();
    let i_d2: Vec<f64> = trace.currents.iter().map(|c| c.i_d_s2).collect();
    let v_dc = trace.v_dc();

    // Current commutation.
    let cc = match scenario {
        Scenario::Hs | Scenario::IzvsCase2 => {
            let bal: Vec<f64> = trace.currents.iter().map(|c| c.i_rs1 + c.i_l).collect();
            crossing(t, &bal, None, k0, 0.0, true).map(|(k, tc)| {
                (
                    marker_in(trace, EVENT_CC_BALANCE, k, 1).unwrap_or(tc),
                    "i_rs1 carries the load",
                )
            })
        }
        Scenario::IzvsCase1 => crossing(t, &i_dc, None, k0, 0.0, true).map(|(k, tc)| {
            (
                marker_in(trace, EVENT_IDC, k, 1).unwrap_or(tc),
                "i_dc turns positive",
            )
        }),
        Scenario::Zvs => {
            let (a, b) = (vds[k0], vds[n - 1]);
            let level = a + 0.9 * (b - a);
            let up = b > a;
            crossing(t, &vds, Some(&dvds), k0, level, up)
                .map(|(_, tc)| (tc, "v_ds_s1 settles to 90 % of its change"))
        }
    };
    let Some((t_cc, note)) = cc else {
        tl.warnings
            .push("current commutation not completed within the trace".into());
        return Ok(finish(tl));
    };
    let t_cc = t_cc.max(onset);
    tl.push(t_cc, EventKind::CcComplete, note);
    let k_cc = trace.index_at(t_cc).min(n - 2);

    // Voltage fall.
    let v_start = trace.state_at(t_cc)[2];
    let v_start = v_dc - v_start;
    let v_final = vds[n - 1];
    let swing = v_start - v_final;
    let mut vf: Option<(f64, f64)> = None;
    if swing > params.vf_min_swing * v_dc {
        let level = v_final + params.vf_fraction * swing;
        match crossing(t, &vds, Some(&dvds), k_cc, level, false) {
            Some((_, t_end)) => {
                tl.push(
                    t_cc,
                    EventKind::VfStart,
                    format!("v_ds_s1 falls from {v_start:.1} V"),
                );
                tl.push(
                    t_end,
                    EventKind::VfEnd,
                    format!(
                        "v_ds_s1 within {:.0} % of {v_final:.2} V",
                        100.0 * params.vf_fraction
                    ),
                );
                vf = Some((t_cc, t_end));
            }
            None => tl
                .warnings
                .push("voltage fall did not complete within the trace".into()),
        }
    } else if scenario != Scenario::Zvs {
        tl.warnings.push(format!(
            "no voltage fall: v_ds_s1 swing {swing:.2} V after commutation"
        ));
    }

    // Reverse recovery.
    if scenario == Scenario::Hs {
        let q: Vec<f64> = trace.states.iter().map(|s| s.q_rr_removed).collect();
        let q_max = q.iter().cloned().fold(0.0, f64::max);
        let started = if q[k0] > 0.0 {
            Some((k0, onset))
        } else {
            crossing(t, &q, None, k0, 1e-6 * q_max, true)
        };
        match started.filter(|_| q_max > 0.0) {
            Some((_, t_rr)) => {
                tl.push(
                    t_rr,
                    EventKind::RrStart,
                    "recovery charge extraction begins",
                );
                if let Some((a, b)) = vf {
                    let (ia, ib) = (trace.index_at(a), trace.index_at(b).min(n - 1));
                    let kp = argmax(&i_d2, ia, ib.max(ia));
                    tl.push(
                        t[kp],
                        EventKind::RrPeak,
                        format!("i_d_s2 peaks at {:.2} A", i_d2[kp]),
                    );
                }
            }
            None => tl
                .warnings
                .push("no reverse-recovery charge extracted".into()),
        }
    }

    // DC-link current reversals with hysteresis.
    let peak = i_dc[k0..].iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let band = params.idc_band * peak;
    let mut sign = 0i8;
    let mut last_zero = None;
    for k in k0..n {
        let v = i_dc[k];
        if k > k0 && (i_dc[k - 1] <= 0.0) != (v <= 0.0) {
            last_zero = Some(refine(t, &i_dc, None, k - 1, 0.0));
        }
        let s = if v > band {
            1
        } else if v < -band {
            -1
        } else {
            0
        };
        if s != 0 && s != sign {
            if sign != 0 {
                let tz = last_zero.unwrap_or(t[k]);
                let dir = if s > 0 { "positive" } else { "negative" };
                tl.push(
                    tz.max(onset),
                    EventKind::IdcReversal,
                    format!("i_dc turns {dir}"),
                );
            }
            sign = s;
        }
    }

    // Miller platform.
    if let Some((a, b)) = vf {
        let (ia, ib) = (trace.index_at(a), trace.index_at(b).min(n - 1));
        let pk = dvgs[k0..=ia.max(k0)]
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()));
        let thr = params.platform_ratio * pk;
        if let Some(ks) = (ia..=ib).find(|&k| dvgs[k].abs() < thr) {
            let ke = (ib..n).find(|&k| dvgs[k].abs() >= thr).unwrap_or(n - 1);
            let (ts, te) = (t[ks], t[ke]);
            tl.push(
                ts,
                EventKind::MillerStart,
                format!(
                    "|dv_gs/dt| below {:.0} % of its peak",
                    100.0 * params.platform_ratio
                ),
            );
            let mut bounds: Vec<(f64, String)> = Vec::new();
            let v_top = last_knot(dev_s2);
            if let Some(vk) = knee(|v| dev_s2.c_oss(v), 0.0, v_top) {
                if let Some((_, tk)) = crossing(t, &vm, Some(&dvm), ks, vk, true) {
                    bounds.push((
                        tk,
                        format!("C_oss,S2 leaves its high-capacitance region at v_m = {vk:.1} V"),
                    ));
                }
            }
            let kp = argmax(&i_d2, ks, ke);
            if kp > ks && kp < ke {
                bounds.push((
                    t[kp],
                    format!("d(i_d_s2)/dt turns negative at {:.2} A", i_d2[kp]),
                ));
            }
            if scenario != Scenario::Hs {
                let kv = argmax(&dvm, ks, ke);
                if kv > ks && kv < ke {
                    bounds.push((t[kv], "dv/dt passes its peak".into()));
                }
            }
            let v_top1 = last_knot(dev_s1);
            if let Some(vk) = knee(|v| dev_s1.c_gd.at(v), 0.0, v_top1) {
                if let Some((_, tk)) = crossing(t, &vds, Some(&dvds), ks, vk, false) {
                    bounds.push((
                        tk,
                        format!(
                            "C_gd,S1 enters its high-capacitance region at v_ds_s1 = {vk:.1} V"
                        ),
                    ));
                }
            }
            bounds.retain(|(tb, _)| *tb > ts && *tb < te);
            bounds.sort_by(|x, y| x.0.total_cmp(&y.0));
            let min_gap = 0.02 * (te - ts);
            let mut kept: Vec<(f64, String)> = Vec::new();
            for (tb, note) in bounds {
                match kept.last() {
                    Some((prev, _)) if tb - prev < min_gap => {
                        tl.warnings
                            .push(format!("merged sub-phase boundary at {tb:e} s ({note})"));
                    }
                    _ => kept.push((tb, note)),
                }
            }
            for (i, (tb, note)) in kept.into_iter().enumerate() {
                tl.push(tb, EventKind::MillerSub(i as u8 + 2), note);
            }
            tl.push(te, EventKind::MillerEnd, "gate resumes charging");
        } else {
            tl.warnings
                .push("no Miller platform inside the voltage fall".into());
        }
    }

    let settle = [tl.first(EventKind::VfEnd), tl.first(EventKind::MillerEnd)]
        .into_iter()
        .flatten()
        .fold(t_cc, f64::max);
    tl.push(settle, EventKind::SettleStart, "transient complete");
    Ok(finish(tl))
}

fn finish(mut tl: PhaseTimeline) -> PhaseTimeline {
    tl.events.sort_by(|a, b| a.t.total_cmp(&b.t));
    tl
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::assemble;
    use crate::circuit::tests::config;
    use crate::solver::SolverSettings;
    use crate::trace::simulate;
    use proptest::prelude::*;

    fn init(i: f64, dir: LoadDirection, v: f64) -> InitialConditions {
        InitialConditions {
            i_l: i,
            direction: dir,
            v_ds_s1: v,
        }
    }

    #[test]
    fn classifies_reference_points() {
        let b = ClassifyBands::default();
        use LoadDirection::*;
        assert_eq!(
            classify_scenario(400.0, &init(10.0, IntoMidpoint, -3.3), &b).unwrap(),
            Scenario::Zvs
        );
        assert_eq!(
            classify_scenario(400.0, &init(10.0, OutOfMidpoint, 403.0), &b).unwrap(),
            Scenario::Hs
        );
        assert_eq!(
            classify_scenario(400.0, &init(3.0, IntoMidpoint, 100.0), &b).unwrap(),
            Scenario::IzvsCase1
        );
        assert_eq!(
            classify_scenario(400.0, &init(3.0, OutOfMidpoint, 255.0), &b).unwrap(),
            Scenario::IzvsCase2
        );
    }

    #[test]
    fn classification_rejects_contradictions() {
        let b = ClassifyBands::default();
        use LoadDirection::*;
        for bad in [
            init(0.0, IntoMidpoint, 200.0),
            init(5.0, OutOfMidpoint, 0.0),
            init(5.0, IntoMidpoint, 400.0),
        ] {
            let e = classify_scenario(400.0, &bad, &b).unwrap_err();
            assert!(matches!(e, Error::Classification(_)), "{e}");
        }
    }

    #[test]
    fn event_kind_round_trips() {
        for k in [
            EventKind::Onset,
            EventKind::MillerSub(3),
            EventKind::SettleStart,
            EventKind::RrPeak,
        ] {
            assert_eq!(k.to_string().parse::<EventKind>().unwrap(), k);
        }
        assert!("nope".parse::<EventKind>().is_err());
    }

    fn run(scenario: Scenario, i_l: f64) -> (WaveformTrace, crate::circuit::CircuitSystem) {
        let sys = assemble(config(scenario, i_l)).unwrap();
        let tr = simulate(&sys, &SolverSettings::default(), 120e-9).unwrap();
        (tr, sys)
    }

    #[test]
    fn hs_timeline_is_ordered_with_single_onset() {
        let (tr, sys) = run(Scenario::Hs, 10.0);
        let c = &sys.config;
        let tl = segment(
            &tr,
            Scenario::Hs,
            &c.dev_s1,
            &c.dev_s2,
            &SegmentParams::default(),
        )
        .unwrap();
        assert_eq!(tl.count(EventKind::Onset), 1);
        assert!(tl.events.windows(2).all(|w| w[0].t <= w[1].t));
        assert!(tl.has_platform(), "{:?}", tl);
        let json = tl.to_json().unwrap();
        assert_eq!(PhaseTimeline::from_json(&json).unwrap(), tl);
    }

    #[test]
    fn gate_held_off_never_switches() {
        let mut c = config(Scenario::Hs, 10.0);
        c.gate_on = 0.0;
        let sys = assemble(c).unwrap();
        let tr = simulate(&sys, &SolverSettings::default(), 30e-9).unwrap();
        let e = detect_onset(&tr, &sys.config.dev_s1, &SegmentParams::default()).unwrap_err();
        assert!(matches!(e, Error::NotSwitched(_)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn classification_is_total_and_consistent(
            v in -50.0f64..450.0, i in 0.0f64..30.0, into in any::<bool>()
        ) {
            let dir = if into { LoadDirection::IntoMidpoint } else { LoadDirection::OutOfMidpoint };
            match classify_scenario(400.0, &init(i, dir, v), &ClassifyBands::default()) {
                Ok(s) => prop_assert_eq!(s.load_direction(), dir),
                Err(e) => prop_assert!(matches!(e, Error::Classification(_))),
            }
        }
    }

    fn gate_trace(vgs: impl Fn(f64) -> f64) -> WaveformTrace {
        let t: Vec<f64> = (0..=400).map(|k| k as f64 * 0.05e-9).collect();
        let g: Vec<f64> = t.iter().map(|&x| vgs(x)).collect();
        let n = t.len();
        let cols = vec![
            ("t".to_string(), t),
            ("v_gs_s1".to_string(), g),
            ("v_gs_s2".to_string(), vec![-5.0; n]),
            ("v_m".to_string(), vec![0.0; n]),
            ("i_l".to_string(), vec![-10.0; n]),
            ("v_ds_s1".to_string(), vec![400.0; n]),
        ];
        WaveformTrace::from_columns(&cols, vec![]).unwrap()
    }

    fn sic() -> DeviceModel {
        crate::synthetic::SyntheticDevice::sic_80mohm()
            .to_model()
            .unwrap()
    }

    #[test]
    fn short_blip_above_threshold_is_rejected() {
        // 0.2 ns excursion to 3 V at 2 ns, real turn-on at 10 ns
        let tr = gate_trace(|t| {
            if (2.0e-9..2.2e-9).contains(&t) {
                3.0
            } else if t >= 10e-9 {
                12.0
            } else {
                -5.0
            }
        });
        let t_on = detect_onset(&tr, &sic(), &SegmentParams::default()).unwrap();
        assert!(t_on > 9.9e-9 && t_on < 10e-9, "{t_on}");
    }

    #[test]
    fn ringing_gate_picks_first_sustained_crossing() {
        // crosses at ~1 ns, falls back at 1.3 ns, then rises for good at 4 ns
        let tr = gate_trace(|t| {
            if (1.0e-9..1.3e-9).contains(&t) || t >= 4.0e-9 {
                8.0
            } else {
                0.0
            }
        });
        let t_on = detect_onset(&tr, &sic(), &SegmentParams::default()).unwrap();
        assert!(t_on > 3.9e-9 && t_on < 4.0e-9, "{t_on}");
        let never = gate_trace(|t| {
            if (1.0e-9..1.3e-9).contains(&t) {
                8.0
            } else {
                0.0
            }
        });
        assert!(matches!(
            detect_onset(&never, &sic(), &SegmentParams::default()),
            Err(Error::NotSwitched(_))
        ));
    }

    #[test]
    fn assembled_systems_classify_as_configured() {
        for (sc, i) in [
            (Scenario::Zvs, 10.0),
            (Scenario::Hs, 10.0),
            (Scenario::IzvsCase1, 1.0),
            (Scenario::IzvsCase2, 2.0),
        ] {
            let sys = assemble(config(sc, i)).unwrap();
            let st = sys.to_state(0.0, &sys.initial_state());
            assert_eq!(classify(&sys.config, &st).unwrap(), sc);
        }
    }
}
