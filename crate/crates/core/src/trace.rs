//! Waveform records produced by a circuit simulation.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::circuit::{BranchCurrents, CircuitState, CircuitSystem, Scenario};
use crate::error::{Error, Result};
use crate::solver::{
    hermite, integrate, ChargeSystem, Marker, Solution, SolverSettings, StepStats,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub v_dc: f64,
    pub scenario: Option<Scenario>,
    pub config_hash: Option<String>,
    pub settings: Option<SolverSettings>,
    pub stats: StepStats,
}

/// Time-indexed node voltages, state derivatives and branch currents.
#[derive(Debug, Clone)]
pub struct WaveformTrace {
    pub t: Vec<f64>,
    pub states: Vec<CircuitState>,
    /// `d/dt [v_gs_s1, v_gs_s2, v_m, i_L]` at each sample.
    pub derivs: Vec<[f64; 4]>,
    pub currents: Vec<BranchCurrents>,
    pub markers: Vec<Marker>,
    pub meta: TraceMeta,
}

/// Names of the exported per-sample columns, in CSV order.
pub const COLUMNS: &[&str] = &[
    "t",
    "v_gs_s1",
    "v_gs_s2",
    "v_m",
    "i_l",
    "q_rr_removed",
    "v_ds_s1",
    "v_ds_s2",
    "dv_gs_s1_dt",
    "dv_gs_s2_dt",
    "dv_m_dt",
    "di_l_dt",
    "i_rs1",
    "i_rs2",
    "i_cgs_s1",
    "i_cgd_s1",
    "i_cds_s1",
    "i_cpar_gd_s1",
    "i_cpar_ds_s1",
    "i_cgs_s2",
    "i_cgd_s2",
    "i_cds_s2",
    "i_cpar_gd_s2",
    "i_cpar_ds_s2",
    "i_crr_s2",
    "i_g_s1",
    "i_g_s2",
    "i_c_s1",
    "i_c_s2",
    "i_d_s2",
    "i_dc",
];

/// Runs the circuit from its scenario initial state to `t_end` with the
/// standard event set.
pub fn simulate(
    sys: &CircuitSystem,
    settings: &SolverSettings,
    t_end: f64,
) -> Result<WaveformTrace> {
    let events = sys.standard_events();
    let sol = integrate(sys, sys.initial_state(), settings, t_end, &events)?;
    Ok(WaveformTrace::from_solution(sys, &sol, Some(*settings)))
}

impl WaveformTrace {
    pub fn from_solution(
        sys: &CircuitSystem,
        sol: &Solution,
        settings: Option<SolverSettings>,
    ) -> Self {
        let mut tr = WaveformTrace {
            t: Vec::with_capacity(sol.t.len()),
            states: Vec::with_capacity(sol.t.len()),
            derivs: Vec::with_capacity(sol.t.len()),
            currents: Vec::with_capacity(sol.t.len()),
            markers: sol.markers.clone(),
            meta: TraceMeta {
                v_dc: sys.v_dc(),
                scenario: Some(sys.config.scenario),
                config_hash: None,
                settings,
                stats: sol.stats,
            },
        };
        for k in 0..sol.t.len() {
            tr.push_sample(sys, sol.t[k], &sol.x[k], &sol.dx[k]);
        }
        tr
    }

    fn push_sample(&mut self, sys: &CircuitSystem, t: f64, x: &DVector<f64>, dx: &DVector<f64>) {
        self.t.push(t);
        self.states.push(sys.to_state(t, x));
        self.derivs.push([dx[0], dx[1], dx[2], dx[3]]);
        self.currents.push(sys.branch_currents(t, x, dx));
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn t_start(&self) -> f64 {
        self.t[0]
    }

    pub fn t_end(&self) -> f64 {
        self.t[self.t.len() - 1]
    }

    pub fn v_dc(&self) -> f64 {
        self.meta.v_dc
    }

    pub fn v_ds_s1(&self) -> Vec<f64> {
        self.states
            .iter()
            .map(|s| s.v_ds_s1(self.meta.v_dc))
            .collect()
    }

    pub fn v_gs_s1(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.v_gs_s1).collect()
    }

    /// Per-sample values of an exported column, `None` for unknown names.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let v_dc = self.meta.v_dc;
        let pick = |f: &dyn Fn(usize) -> f64| Some((0..self.len()).map(f).collect());
        let s = &self.states;
        let d = &self.derivs;
        let c = &self.currents;
        match name {
            "t" => Some(self.t.clone()),
            "v_gs_s1" => pick(&|k| s[k].v_gs_s1),
            "v_gs_s2" => pick(&|k| s[k].v_gs_s2),
            "v_m" => pick(&|k| s[k].v_m),
            "i_l" => pick(&|k| s[k].i_l),
            "q_rr_removed" => pick(&|k| s[k].q_rr_removed),
            "v_ds_s1" => pick(&|k| s[k].v_ds_s1(v_dc)),
            "v_ds_s2" => pick(&|k| s[k].v_ds_s2()),
            "dv_gs_s1_dt" => pick(&|k| d[k][0]),
            "dv_gs_s2_dt" => pick(&|k| d[k][1]),
            "dv_m_dt" => pick(&|k| d[k][2]),
            "di_l_dt" => pick(&|k| d[k][3]),
            "i_rs1" => pick(&|k| c[k].i_rs1),
            "i_rs2" => pick(&|k| c[k].i_rs2),
            "i_cgs_s1" => pick(&|k| c[k].i_cgs_s1),
            "i_cgd_s1" => pick(&|k| c[k].i_cgd_s1),
            "i_cds_s1" => pick(&|k| c[k].i_cds_s1),
            "i_cpar_gd_s1" => pick(&|k| c[k].i_cpar_gd_s1),
            "i_cpar_ds_s1" => pick(&|k| c[k].i_cpar_ds_s1),
            "i_cgs_s2" => pick(&|k| c[k].i_cgs_s2),
            "i_cgd_s2" => pick(&|k| c[k].i_cgd_s2),
            "i_cds_s2" => pick(&|k| c[k].i_cds_s2),
            "i_cpar_gd_s2" => pick(&|k| c[k].i_cpar_gd_s2),
            "i_cpar_ds_s2" => pick(&|k| c[k].i_cpar_ds_s2),
            "i_crr_s2" => pick(&|k| c[k].i_crr_s2),
            "i_g_s1" => pick(&|k| c[k].i_g_s1),
            "i_g_s2" => pick(&|k| c[k].i_g_s2),
            "i_c_s1" => pick(&|k| c[k].i_c_s1),
            "i_c_s2" => pick(&|k| c[k].i_c_s2),
            "i_d_s2" => pick(&|k| c[k].i_d_s2),
            "i_dc" => pick(&|k| c[k].i_dc),
            _ => None,
        }
    }

    /// Builds a trace from exported columns (the inverse of [`Self::column`]).
    pub fn from_columns(cols: &[(String, Vec<f64>)], markers: Vec<Marker>) -> Result<Self> {
        let get = |name: &str| -> Result<&Vec<f64>> {
            cols.iter()
                .find(|(n, _)| n == name)
                .map(|(_, v)| v)
                .ok_or_else(|| Error::Parse(format!("trace is missing column `{name}`")))
        };
        let t = get("t")?.clone();
        let n = t.len();
        if n < 2 {
            return Err(Error::Parse("trace needs at least two samples".into()));
        }
        for (name, v) in cols {
            if v.len() != n {
                return Err(Error::Parse(format!(
                    "column `{name}` has {} rows, expected {n}",
                    v.len()
                )));
            }
        }
        if let Some(k) = t.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::Parse(format!(
                "time not strictly increasing at row {}",
                k + 1
            )));
        }
        let (vg1, vg2, vm, il) = (get("v_gs_s1")?, get("v_gs_s2")?, get("v_m")?, get("i_l")?);
        let v_dc = get("v_ds_s1")?[0] + vm[0];
        let optional = |name: &str| get(name).ok().cloned().unwrap_or_else(|| vec![0.0; n]);
        let qrr = optional("q_rr_removed");
        let derivs_cols: Vec<Vec<f64>> = ["dv_gs_s1_dt", "dv_gs_s2_dt", "dv_m_dt", "di_l_dt"]
            .iter()
            .map(|c| optional(c))
            .collect();
        let cur: Vec<Vec<f64>> = COLUMNS[12..].iter().map(|c| optional(c)).collect();
        let mut tr = WaveformTrace {
            t: t.clone(),
            states: Vec::with_capacity(n),
            derivs: Vec::with_capacity(n),
            currents: Vec::with_capacity(n),
            markers,
            meta: TraceMeta {
                v_dc,
                scenario: None,
                config_hash: None,
                settings: None,
                stats: StepStats::default(),
            },
        };
        for k in 0..n {
            tr.states.push(CircuitState {
                t: t[k],
                v_gs_s1: vg1[k],
                v_gs_s2: vg2[k],
                v_m: vm[k],
                i_l: il[k],
                q_rr_removed: qrr[k],
            });
            tr.derivs.push([
                derivs_cols[0][k],
                derivs_cols[1][k],
                derivs_cols[2][k],
                derivs_cols[3][k],
            ]);
            tr.currents.push(BranchCurrents {
                i_rs1: cur[0][k],
                i_rs2: cur[1][k],
                i_cgs_s1: cur[2][k],
                i_cgd_s1: cur[3][k],
                i_cds_s1: cur[4][k],
                i_cpar_gd_s1: cur[5][k],
                i_cpar_ds_s1: cur[6][k],
                i_cgs_s2: cur[7][k],
                i_cgd_s2: cur[8][k],
                i_cds_s2: cur[9][k],
                i_cpar_gd_s2: cur[10][k],
                i_cpar_ds_s2: cur[11][k],
                i_crr_s2: cur[12][k],
                i_g_s1: cur[13][k],
                i_g_s2: cur[14][k],
                i_c_s1: cur[15][k],
                i_c_s2: cur[16][k],
                i_d_s2: cur[17][k],
                i_dc: cur[18][k],
                i_l: il[k],
            });
        }
        Ok(tr)
    }

    /// Index of the last sample with `t[k] <= t`.
    pub fn index_at(&self, t: f64) -> usize {
        self.t.partition_point(|&s| s <= t).saturating_sub(1)
    }

    /// Dense-output circuit state at `t`.
    pub fn state_at(&self, t: f64) -> DVector<f64> {
        let n = self.len();
        let vec_of = |k: usize| {
            let s = &self.states[k];
            DVector::from_vec(vec![s.v_gs_s1, s.v_gs_s2, s.v_m, s.i_l])
        };
        if t <= self.t[0] {
            return vec_of(0);
        }
        if t >= self.t[n - 1] {
            return vec_of(n - 1);
        }
        let k = self.index_at(t);
        let (a, b) = (vec_of(k), vec_of(k + 1));
        let (da, db) = (&self.derivs[k], &self.derivs[k + 1]);
        DVector::from_iterator(
            4,
            (0..4).map(|i| hermite(self.t[k], self.t[k + 1], a[i], b[i], da[i], db[i], t)),
        )
    }
}

/// Uniformly resampled copy of `trace` using cubic-Hermite dense output.
///
/// The last sample always lands on the trace end; markers are kept.
pub fn resample(trace: &WaveformTrace, sys: &CircuitSystem, dt: f64) -> Result<WaveformTrace> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Input(format!("resample step must be > 0, got {dt}")));
    }
    let (t0, t1) = (trace.t_start(), trace.t_end());
    let n = ((t1 - t0) / dt).floor() as usize;
    let mut times: Vec<f64> = (0..=n).map(|k| t0 + k as f64 * dt).collect();
    if t1 - times[times.len() - 1] > 1e-9 * dt {
        times.push(t1);
    } else {
        let last = times.len() - 1;
        times[last] = t1;
    }
    let mut out = WaveformTrace {
        t: Vec::with_capacity(times.len()),
        states: Vec::with_capacity(times.len()),
        derivs: Vec::with_capacity(times.len()),
        currents: Vec::with_capacity(times.len()),
        markers: trace.markers.clone(),
        meta: trace.meta.clone(),
    };
    for &t in &times {
        let x = trace.state_at(t);
        let dx = sys.derivative(t, &x)?;
        out.push_sample(sys, t, &x, &dx);
    }
    Ok(out)
}
