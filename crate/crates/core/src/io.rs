//! File formats: capacitance and I-V curve CSVs, device manifests, half-bridge
//! configurations and waveform traces.
//!
//! Every parser has a text entry point (`parse_*`) that never panics on
//! malformed input, and a path-based wrapper that resolves relative file
//! references and attaches the path to I/O errors.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::circuit::{HalfBridgeConfig, Load, LoadDirection, Scenario};
use crate::device::{CapacitanceCurve, DeviceModel, IvGrid};
use crate::energy::AnalyticAssumptions;
use crate::error::{Error, Result};
use crate::phases::SegmentParams;
use crate::solver::{Marker, SolverSettings};
use crate::synthetic::SyntheticDevice;
use crate::trace::{WaveformTrace, COLUMNS};

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Reads a headed CSV whose columns must be exactly `expected` (case and
/// surrounding whitespace ignored). Rows of all-empty fields are skipped.
fn parse_numeric_csv(text: &str, expected: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse(format!("bad CSV header: {e}")))?
        .clone();
    let names: Vec<String> = header.iter().map(|h| h.to_ascii_lowercase()).collect();
    if names != expected {
        return Err(Error::Parse(format!(
            "expected columns {expected:?}, found {names:?}"
        )));
    }
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(format!("row {}: {e}", k + 2)))?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        Error::Parse(format!("row {}: `{f}` is not a finite number", k + 2))
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse("CSV has no data rows".into()));
    }
    Ok(rows)
}

/// Capacitance curve CSV with columns `v,c` (volts, farads).
pub fn parse_capacitance_csv(text: &str) -> Result<CapacitanceCurve> {
    let rows = parse_numeric_csv(text, &["v", "c"])?;
    let (v, c) = rows.into_iter().map(|r| (r[0], r[1])).unzip();
    CapacitanceCurve::new(v, c)
}

/// I-V grid CSV in long format with columns `vgs,vds,id`.
pub fn parse_iv_csv(text: &str) -> Result<IvGrid> {
    let rows = parse_numeric_csv(text, &["vgs", "vds", "id"])?;
    let triplets: Vec<(f64, f64, f64)> = rows.into_iter().map(|r| (r[0], r[1], r[2])).collect();
    IvGrid::from_triplets(&triplets)
}

pub fn capacitance_csv(curve: &CapacitanceCurve) -> String {
    let (v, c) = curve.samples();
    let mut s = String::from("v,c\n");
    for (a, b) in v.iter().zip(c) {
        s.push_str(&format!("{a},{b}\n"));
    }
    s
}

pub fn iv_csv(triplets: &[(f64, f64, f64)]) -> String {
    let mut s = String::from("vgs,vds,id\n");
    for (g, v, i) in triplets {
        s.push_str(&format!("{g},{v},{i}\n"));
    }
    s
}

/// Device manifest: curve file references plus scalar parameters, each key
/// carrying its unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceManifest {
    pub name: String,
    pub iv_csv: String,
    pub c_gd_csv: String,
    pub c_ds_csv: String,
    pub c_gs_f: f64,
    #[serde(default)]
    pub c_par_gd_f: f64,
    #[serde(default)]
    pub c_par_ds_f: f64,
    pub v_th_v: f64,
    #[serde(default)]
    pub q_rr_c: f64,
    #[serde(default = "default_v_ee")]
    pub v_ee_ref_v: f64,
}

fn default_v_ee() -> f64 {
    5.0
}

pub fn parse_device_manifest(text: &str) -> Result<DeviceManifest> {
    serde_json::from_str(text).map_err(|e| Error::Parse(format!("device manifest: {e}")))
}

impl DeviceManifest {
    /// Loads the referenced curves (relative to `base`) and validates the model.
    pub fn load(&self, base: &Path) -> Result<DeviceModel> {
        let resolve = |p: &str| base.join(p);
        let iv = parse_iv_csv(&read_text(&resolve(&self.iv_csv))?)
            .map_err(|e| Error::Parse(format!("{}: {e}", self.iv_csv)))?;
        let c_gd = parse_capacitance_csv(&read_text(&resolve(&self.c_gd_csv))?)
            .map_err(|e| Error::Parse(format!("{}: {e}", self.c_gd_csv)))?;
        let c_ds = parse_capacitance_csv(&read_text(&resolve(&self.c_ds_csv))?)
            .map_err(|e| Error::Parse(format!("{}: {e}", self.c_ds_csv)))?;
        let dev = DeviceModel {
            name: self.name.clone(),
            iv,
            c_gs: self.c_gs_f,
            c_gd,
            c_ds,
            c_par_gd: self.c_par_gd_f,
            c_par_ds: self.c_par_ds_f,
            v_th: self.v_th_v,
            q_rr: self.q_rr_c,
            v_ee_ref: self.v_ee_ref_v,
        };
        dev.validate()?;
        Ok(dev)
    }
}

/// Prefix selecting a built-in generated device instead of a manifest path.
pub const BUILTIN_PREFIX: &str = "builtin:";

/// Loads a device from a manifest path or a `builtin:` name.
pub fn load_device(reference: &str, base: &Path) -> Result<DeviceModel> {
    if let Some(name) = reference.strip_prefix(BUILTIN_PREFIX) {
        return match name {
            "sic80" => SyntheticDevice::sic_80mohm().to_model(),
            _ => Err(Error::Config(format!(
                "unknown built-in device `{name}` (available: sic80)"
            ))),
        };
    }
    let path = base.join(reference);
    let manifest = parse_device_manifest(&read_text(&path)?)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    manifest.load(path.parent().unwrap_or(Path::new(".")))
}

/// Load section of a configuration file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LoadSpec {
    ConstantCurrent {
        i_l_a: f64,
        direction: LoadDirection,
    },
    /// `i_l0_a` is signed, positive into the midpoint.
    Inductor { l_h: f64, i_l0_a: f64 },
}

impl From<LoadSpec> for Load {
    fn from(l: LoadSpec) -> Load {
        match l {
            LoadSpec::ConstantCurrent { i_l_a, direction } => Load::ConstantCurrent {
                i_l: i_l_a,
                direction,
            },
            LoadSpec::Inductor { l_h, i_l0_a } => Load::Inductor {
                l: l_h,
                i_l0: i_l0_a,
            },
        }
    }
}

/// Simulation configuration file. Keys carry their unit as a suffix; unknown
/// keys are rejected by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub scenario: Scenario,
    pub v_dc_v: f64,
    #[serde(default)]
    pub delta_v_v: f64,
    pub gate_on_v: f64,
    pub gate_off_v: f64,
    #[serde(default)]
    pub gate_s2_hold_v: Option<f64>,
    pub r_g_s1_ohm: f64,
    pub r_g_s2_ohm: f64,
    pub load: LoadSpec,
    /// Manifest path (relative to the config file) or `builtin:<name>`.
    pub device_s1: String,
    pub device_s2: String,
    /// Overrides S2's recovery charge from the manifest.
    #[serde(default)]
    pub q_rr_s2_c: Option<f64>,
    #[serde(default)]
    pub shoot_through_enabled: bool,
    #[serde(default = "default_t_end")]
    pub t_end_s: f64,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub phases: SegmentParams,
}

fn default_t_end() -> f64 {
    150e-9
}

pub fn parse_config(text: &str) -> Result<ConfigFile> {
    serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))
}

impl ConfigFile {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Builds the half-bridge, loading devices relative to `base`.
    pub fn resolve(&self, base: &Path) -> Result<HalfBridgeConfig> {
        let dev_s1 = load_device(&self.device_s1, base)?;
        let mut dev_s2 = load_device(&self.device_s2, base)?;
        if let Some(q) = self.q_rr_s2_c {
            dev_s2.q_rr = q;
        }
        let cfg = HalfBridgeConfig {
            v_dc: self.v_dc_v,
            gate_on: self.gate_on_v,
            gate_off: self.gate_off_v,
            gate_s2_hold: self.gate_s2_hold_v,
            r_g_s1: self.r_g_s1_ohm,
            r_g_s2: self.r_g_s2_ohm,
            load: self.load.into(),
            dev_s1: Arc::new(dev_s1),
            dev_s2: Arc::new(dev_s2),
            scenario: self.scenario,
            delta_v: self.delta_v_v,
            shoot_through_enabled: self.shoot_through_enabled,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Gate and load assumptions for the datasheet-only prediction.
    pub fn analytic_assumptions(&self) -> AnalyticAssumptions {
        let i_out = match self.load {
            LoadSpec::ConstantCurrent { i_l_a, .. } => i_l_a,
            LoadSpec::Inductor { i_l0_a, .. } => i_l0_a.abs(),
        };
        AnalyticAssumptions {
            i_out,
            gate_on: self.gate_on_v,
            r_g: self.r_g_s1_ohm,
            ..Default::default()
        }
    }
}

/// Loads a configuration file and its devices.
pub fn load_config(path: &Path) -> Result<(ConfigFile, HalfBridgeConfig)> {
    let file = parse_config(&read_text(path)?)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let cfg = file.resolve(path.parent().unwrap_or(Path::new(".")))?;
    Ok((file, cfg))
}

/// Trace CSV with one column per exported quantity.
pub fn trace_csv(trace: &WaveformTrace) -> String {
    trace_csv_with_comment(trace, None)
}

/// Trace CSV preceded by `# <comment>` lines.
pub fn trace_csv_with_comment(trace: &WaveformTrace, comment: Option<&str>) -> String {
    let cols: Vec<Vec<f64>> = COLUMNS
        .iter()
        .map(|c| trace.column(c).expect("known column"))
        .collect();
    let mut s = String::new();
    for line in comment.into_iter().flat_map(str::lines) {
        s.push_str("# ");
        s.push_str(line);
        s.push('\n');
    }
    s.push_str(&COLUMNS.join(","));
    s.push('\n');
    for k in 0..trace.len() {
        let row: Vec<String> = cols.iter().map(|c| format!("{}", c[k])).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

/// Parses a trace CSV. Column order is free and unknown columns are
/// ignored; the state columns and `v_ds_s1` are required. Lines starting
/// with `#` are comments.
pub fn parse_trace_csv(text: &str, markers: Vec<Marker>) -> Result<WaveformTrace> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse(format!("bad trace header: {e}")))?
        .clone();
    let names: Vec<String> = header.iter().map(str::to_string).collect();
    if let Some(dup) = names
        .iter()
        .enumerate()
        .find(|(i, n)| names[..*i].contains(n))
    {
        return Err(Error::Parse(format!("duplicate trace column `{}`", dup.1)));
    }
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(format!("row {}: {e}", k + 2)))?;
        if rec.len() != names.len() {
            return Err(Error::Parse(format!(
                "row {} has {} fields, expected {}",
                k + 2,
                rec.len(),
                names.len()
            )));
        }
        for (j, f) in rec.iter().enumerate() {
            let v = f
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    Error::Parse(format!("row {}: `{f}` is not a finite number", k + 2))
                })?;
            cols[j].push(v);
        }
    }
    let named: Vec<(String, Vec<f64>)> = names.into_iter().zip(cols).collect();
    WaveformTrace::from_columns(&named, markers)
}

pub fn markers_json(markers: &[Marker]) -> String {
    serde_json::to_string_pretty(markers).expect("markers serialize")
}

pub fn parse_markers_json(text: &str) -> Result<Vec<Marker>> {
    serde_json::from_str(text).map_err(|e| Error::Parse(format!("marker sidecar: {e}")))
}

/// Path of the marker sidecar next to a trace CSV.
pub fn marker_sidecar(trace_path: &Path) -> PathBuf {
    trace_path.with_extension("markers.json")
}

/// Writes the trace CSV (with optional comment header) and its marker sidecar.
pub fn write_trace(path: &Path, trace: &WaveformTrace, comment: Option<&str>) -> Result<()> {
    write_text(path, &trace_csv_with_comment(trace, comment))?;
    write_text(&marker_sidecar(path), &markers_json(&trace.markers))
}

/// Reads a trace CSV and, when present, its marker sidecar.
pub fn read_trace(path: &Path) -> Result<WaveformTrace> {
    let sidecar = marker_sidecar(path);
    let markers = if sidecar.exists() {
        parse_markers_json(&read_text(&sidecar)?)?
    } else {
        Vec::new()
    };
    parse_trace_csv(&read_text(path)?, markers)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn capacitance_csv_round_trip_and_rejections() {
        let c = parse_capacitance_csv("v,c\n0,1e-9\n100, 5e-10\n# note\n400,1e-10\n").unwrap();
        assert_eq!(c.samples().0, &[0.0, 100.0, 400.0]);
        let again = parse_capacitance_csv(&capacitance_csv(&c)).unwrap();
        assert_eq!(again.samples(), c.samples());
        for bad in [
            "",
            "v,c\n",
            "v,q\n0,1\n",
            "v,c\n0,-1e-9\n",
            "v,c\n1,1e-9\n0,1e-9\n",
            "v,c\n0,NaN\n",
            "v,c\n0\n",
        ] {
            assert!(parse_capacitance_csv(bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn iv_csv_round_trip() {
        let s = SyntheticDevice::sic_80mohm();
        let g = parse_iv_csv(&iv_csv(&s.iv_triplets())).unwrap();
        let d = s.to_model().unwrap();
        for (vgs, vds) in [(10.0, 3.0), (20.0, -4.0), (2.0, 100.0)] {
            assert_eq!(g.current(vgs, vds), d.iv.current(vgs, vds));
        }
        assert!(parse_iv_csv("vgs,vds,id\n").is_err());
        assert!(parse_iv_csv("vgs,vds\n1,2\n").is_err());
    }

    #[test]
    fn config_rejects_unknown_key_by_name() {
        let ok = r#"{"scenario":"izvs_case2","v_dc_v":400,"delta_v_v":255,"gate_on_v":20,"gate_off_v":-5,
            "r_g_s1_ohm":10,"r_g_s2_ohm":10,"load":{"kind":"constant_current","i_l_a":2,"direction":"out_of_midpoint"},
            "device_s1":"builtin:sic80","device_s2":"builtin:sic80"}"#;
        let f = parse_config(ok).unwrap();
        assert_eq!(f.t_end_s, 150e-9);
        let cfg = f.resolve(Path::new(".")).unwrap();
        assert_eq!(cfg.load.initial_current(), -2.0);
        let bad = ok.replace("\"v_dc_v\"", "\"v_dc\"");
        let e = parse_config(&bad).unwrap_err().to_string();
        assert!(e.contains("v_dc"), "{e}");
        let bad = ok.replace("\"i_l_a\"", "\"i_l\"");
        let e = parse_config(&bad).unwrap_err().to_string();
        assert!(e.contains("i_l"), "{e}");
        let back = parse_config(&f.to_json()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn manifest_requires_units() {
        let m = r#"{"name":"x","iv_csv":"iv.csv","c_gd_csv":"a.csv","c_ds_csv":"b.csv","c_gs_f":1e-9,"v_th_v":2.6}"#;
        let d = parse_device_manifest(m).unwrap();
        assert_eq!(d.v_ee_ref_v, 5.0);
        assert!(parse_device_manifest(&m.replace("c_gs_f", "c_gs")).is_err());
        assert!(load_device("builtin:nope", Path::new(".")).is_err());
    }

    #[test]
    fn trace_parser_rejects_ragged_rows() {
        assert!(parse_trace_csv("t,v_gs_s1\n0,1\n1\n", vec![]).is_err());
        assert!(parse_trace_csv("t,t\n0,0\n", vec![]).is_err());
        assert!(parse_trace_csv("", vec![]).is_err());
    }
}
