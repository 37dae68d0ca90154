//! Published turn-on energy comparison table: embedded dataset, arithmetic
//! re-derivation and prediction runs against supplied device curves.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::energy::{
    error_metrics, predict_conventional, predict_proposed_analytic, AnalyticAssumptions,
    AnalyticPrediction,
};
use crate::error::{Error, Result};
use crate::io::{load_device, read_text};

/// The comparison table as shipped with the crate.
pub const TABLE1_CSV: &str = include_str!("../data/table1.csv");

/// Published tolerance on recomputed percentages (percentage points).
pub const ERROR_TOL_PP: f64 = 0.1;
/// Published tolerance on recomputed reduction ratios (relative).
pub const REDUCTION_TOL_REL: f64 = 0.02;

/// Conventional-error range stated alongside the table (percent).
pub const CONV_RANGE_PCT: (f64, f64) = (-80.05, -34.41);
/// Proposed-error range stated alongside the table (percent).
pub const PROP_RANGE_PCT: (f64, f64) = (-11.60, 6.70);
pub const MEAN_REDUCTION: f64 = 17.0;
pub const MEAN_REDUCTION_TOL: f64 = 1.0;

/// A printed value together with the number of decimals it was printed with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Printed {
    pub value: f64,
    pub decimals: u32,
}

impl Printed {
    fn parse(s: &str) -> Option<Printed> {
        let value: f64 = s.parse().ok().filter(|v: &f64| v.is_finite())?;
        let decimals = s.split_once('.').map_or(0, |(_, f)| f.len() as u32);
        Some(Printed { value, decimals })
    }

    /// Half a unit in the last printed place.
    pub fn half_ulp(&self) -> f64 {
        0.5 * 10f64.powi(-(self.decimals as i32))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub r_ds_class_mohm: u32,
    pub v_dc: f64,
    pub delta_v: f64,
    pub measured_uj: Printed,
    pub conv_pred_uj: Printed,
    pub err_conv_pct: f64,
    pub prop_pred_uj: Printed,
    pub err_prop_pct: f64,
    pub reduction: f64,
}

impl Table1Row {
    pub fn label(&self) -> String {
        format!(
            "{} mΩ / {} V / ΔV = {}",
            self.r_ds_class_mohm, self.v_dc, self.delta_v
        )
    }
}

/// Parses the comparison-table CSV.
pub fn parse_table1(text: &str) -> Result<Vec<Table1Row>> {
    const HEADER: [&str; 9] = [
        "r_ds_class_mohm",
        "v_dc_v",
        "delta_v_v",
        "measured_uj",
        "conv_pred_uj",
        "err_conv_pct",
        "prop_pred_uj",
        "err_prop_pct",
        "reduction",
    ];
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse(format!("table header: {e}")))?
        .clone();
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(Error::Parse(format!("table header must be {HEADER:?}")));
    }
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(format!("table row {}: {e}", k + 2)))?;
        let bad = |col: &str| Error::Parse(format!("table row {}: bad `{col}`", k + 2));
        let p = |j: usize| Printed::parse(rec.get(j).unwrap_or("")).ok_or_else(|| bad(HEADER[j]));
        let class = p(0)?;
        if class.decimals != 0 || !(class.value > 0.0 && class.value < 1e6) {
            return Err(bad(HEADER[0]));
        }
        rows.push(Table1Row {
            r_ds_class_mohm: class.value as u32,
            v_dc: p(1)?.value,
            delta_v: p(2)?.value,
            measured_uj: p(3)?,
            conv_pred_uj: p(4)?,
            err_conv_pct: p(5)?.value,
            prop_pred_uj: p(6)?,
            err_prop_pct: p(7)?.value,
            reduction: p(8)?.value,
        });
    }
    if rows.is_empty() {
        return Err(Error::Parse("table has no rows".into()));
    }
    Ok(rows)
}

pub fn table1() -> Vec<Table1Row> {
    parse_table1(TABLE1_CSV).expect("embedded table parses")
}

/// Re-derivation of one row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowCheck {
    pub row: Table1Row,
    pub err_conv_pct: f64,
    pub err_prop_pct: f64,
    /// From the recomputed percentages.
    pub reduction: f64,
    /// From the published percentages.
    pub reduction_from_published_pct: f64,
    pub dev_conv_pp: f64,
    pub dev_prop_pp: f64,
    pub dev_reduction_rel: f64,
    pub pass: bool,
    /// Range of each error when the printed energies are varied within
    /// their rounding interval.
    pub err_conv_interval: (f64, f64),
    pub err_prop_interval: (f64, f64),
    /// Whether each published percentage is reachable from some energies
    /// that round to the printed ones.
    pub conv_rounding_consistent: bool,
    pub prop_rounding_consistent: bool,
}

fn error_interval(measured: Printed, predicted: Printed) -> (f64, f64) {
    let (m, hm) = (measured.value, measured.half_ulp());
    let (p, hp) = (predicted.value, predicted.half_ulp());
    (
        ((p - hp) / (m + hm) - 1.0) * 100.0,
        ((p + hp) / (m - hm) - 1.0) * 100.0,
    )
}

pub fn check_row(row: &Table1Row) -> Result<RowCheck> {
    let m = error_metrics(
        row.measured_uj.value,
        row.conv_pred_uj.value,
        row.prop_pred_uj.value,
    )?;
    let dev_conv_pp = m.err_conv_pct - row.err_conv_pct;
    let dev_prop_pp = m.err_prop_pct - row.err_prop_pct;
    let dev_reduction_rel = (m.reduction - row.reduction) / row.reduction;
    let ic = error_interval(row.measured_uj, row.conv_pred_uj);
    let ip = error_interval(row.measured_uj, row.prop_pred_uj);
    // published percentages carry two decimals
    let within = |i: (f64, f64), x: f64| x >= i.0 - 0.005 && x <= i.1 + 0.005;
    Ok(RowCheck {
        row: row.clone(),
        err_conv_pct: m.err_conv_pct,
        err_prop_pct: m.err_prop_pct,
        reduction: m.reduction,
        reduction_from_published_pct: row.err_conv_pct.abs() / row.err_prop_pct.abs(),
        dev_conv_pp,
        dev_prop_pp,
        dev_reduction_rel,
        pass: dev_conv_pp.abs() <= ERROR_TOL_PP
            && dev_prop_pp.abs() <= ERROR_TOL_PP
            && dev_reduction_rel.abs() <= REDUCTION_TOL_REL,
        err_conv_interval: ic,
        err_prop_interval: ip,
        conv_rounding_consistent: within(ic, row.err_conv_pct),
        prop_rounding_consistent: within(ip, row.err_prop_pct),
    })
}

/// Stated summary ranges checked against the recomputed and published columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeChecks {
    pub conv_range_recomputed: (f64, f64),
    pub prop_range_recomputed: (f64, f64),
    pub conv_range_published: (f64, f64),
    pub prop_range_published: (f64, f64),
    /// Recomputed conventional extremes within tolerance of the stated range.
    pub conv_pass: bool,
    /// Every recomputed proposed error within the stated range (with tolerance).
    pub prop_pass: bool,
    /// Mean of the per-row ratios of recomputed errors.
    pub mean_reduction_of_ratios: f64,
    /// Mean of the published reduction column.
    pub mean_reduction_published: f64,
    /// Mean |conventional error| over mean |proposed error|.
    pub ratio_of_mean_errors: f64,
    pub mean_pass: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Report {
    pub rows: Vec<RowCheck>,
    pub n_rows: usize,
    pub n_pass: usize,
    pub max_dev_conv_pp: f64,
    pub max_dev_prop_pp: f64,
    pub max_dev_reduction_rel: f64,
    /// Rows outside tolerance whose published values are nevertheless
    /// reachable under rounding of the printed energies.
    pub n_fail_explained_by_rounding: usize,
    pub ranges: RangeChecks,
    pub arithmetic_pass: bool,
}

fn extremes(v: impl Iterator<Item = f64>) -> (f64, f64) {
    v.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
        (lo.min(x), hi.max(x))
    })
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Recomputes every derived column of `rows` and the summary claims.
pub fn verify_rows(rows: &[Table1Row]) -> Result<Table1Report> {
    let checks: Vec<RowCheck> = rows.iter().map(check_row).collect::<Result<_>>()?;
    let conv_r = extremes(checks.iter().map(|c| c.err_conv_pct));
    let prop_r = extremes(checks.iter().map(|c| c.err_prop_pct));
    let conv_p = extremes(rows.iter().map(|r| r.err_conv_pct));
    let prop_p = extremes(rows.iter().map(|r| r.err_prop_pct));
    let mean_ratios = mean(checks.iter().map(|c| c.reduction));
    let mean_pub = mean(rows.iter().map(|r| r.reduction));
    let ratio_of_means = mean(checks.iter().map(|c| c.err_conv_pct.abs()))
        / mean(checks.iter().map(|c| c.err_prop_pct.abs()));
    let conv_pass = (conv_r.0 - CONV_RANGE_PCT.0).abs() <= ERROR_TOL_PP
        && (conv_r.1 - CONV_RANGE_PCT.1).abs() <= ERROR_TOL_PP;
    let prop_pass =
        prop_r.0 >= PROP_RANGE_PCT.0 - ERROR_TOL_PP && prop_r.1 <= PROP_RANGE_PCT.1 + ERROR_TOL_PP;
    let mean_pass = (mean_ratios - MEAN_REDUCTION).abs() <= MEAN_REDUCTION_TOL;
    let ranges = RangeChecks {
        conv_range_recomputed: conv_r,
        prop_range_recomputed: prop_r,
        conv_range_published: conv_p,
        prop_range_published: prop_p,
        conv_pass,
        prop_pass,
        mean_reduction_of_ratios: mean_ratios,
        mean_reduction_published: mean_pub,
        ratio_of_mean_errors: ratio_of_means,
        mean_pass,
        pass: conv_pass && prop_pass && mean_pass,
    };
    let n_pass = checks.iter().filter(|c| c.pass).count();
    let n_explained = checks
        .iter()
        .filter(|c| !c.pass && c.conv_rounding_consistent && c.prop_rounding_consistent)
        .count();
    Ok(Table1Report {
        n_rows: checks.len(),
        n_pass,
        max_dev_conv_pp: checks
            .iter()
            .map(|c| c.dev_conv_pp.abs())
            .fold(0.0, f64::max),
        max_dev_prop_pp: checks
            .iter()
            .map(|c| c.dev_prop_pp.abs())
            .fold(0.0, f64::max),
        max_dev_reduction_rel: checks
            .iter()
            .map(|c| c.dev_reduction_rel.abs())
            .fold(0.0, f64::max),
        n_fail_explained_by_rounding: n_explained,
        arithmetic_pass: n_pass == checks.len(),
        rows: checks,
        ranges,
    })
}

/// Arithmetic re-derivation of the embedded table.
pub fn verify_table1_arithmetic() -> Table1Report {
    verify_rows(&table1()).expect("embedded table has positive measurements")
}

/// One device class entry of a prediction-run index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassDevice {
    pub r_ds_class_mohm: u32,
    /// Manifest path relative to the index, or `builtin:<name>`.
    pub device: String,
    pub assumptions: AnalyticAssumptions,
}

/// Index file naming the device used for each class of the table.
pub const INDEX_FILE: &str = "comparison_devices.json";

pub fn parse_class_index(text: &str) -> Result<Vec<ClassDevice>> {
    serde_json::from_str(text).map_err(|e| Error::Parse(format!("{INDEX_FILE}: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub row: Table1Row,
    pub device: String,
    pub conventional_uj: f64,
    pub proposed_uj: f64,
    pub dev_conventional_rel: f64,
    pub dev_proposed_rel: f64,
    pub err_conv_pct: f64,
    pub err_prop_pct: f64,
    pub analytic: AnalyticPrediction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationSummary {
    pub r_ds_class_mohm: u32,
    pub n_rows: usize,
    pub mean_abs_dev_conventional: f64,
    pub max_abs_dev_conventional: f64,
    pub mean_abs_dev_proposed: f64,
    pub max_abs_dev_proposed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionReport {
    pub rows: Vec<PredictionRow>,
    pub summaries: Vec<DeviationSummary>,
    pub notices: Vec<String>,
}

/// Runs both predictions for every table row whose device class has curves
/// under `curve_dir`. Missing index or devices yield notices, not errors.
pub fn run_table1_predictions(curve_dir: &Path) -> Result<PredictionReport> {
    let rows = table1();
    let mut report = PredictionReport {
        rows: Vec::new(),
        summaries: Vec::new(),
        notices: Vec::new(),
    };
    let index_path = curve_dir.join(INDEX_FILE);
    if !index_path.exists() {
        report.notices.push(format!(
            "no {INDEX_FILE} in {}; no rows evaluated",
            curve_dir.display()
        ));
        return Ok(report);
    }
    let index = parse_class_index(&read_text(&index_path)?)?;
    for class in &index {
        let dev = match load_device(&class.device, curve_dir) {
            Ok(d) => d,
            Err(e) => {
                report
                    .notices
                    .push(format!("class {} mΩ skipped: {e}", class.r_ds_class_mohm));
                continue;
            }
        };
        let mut devs_c = Vec::new();
        let mut devs_p = Vec::new();
        for row in rows
            .iter()
            .filter(|r| r.r_ds_class_mohm == class.r_ds_class_mohm)
        {
            let conv = predict_conventional(&dev, &dev, row.v_dc, row.delta_v)? * 1e6;
            let analytic =
                predict_proposed_analytic(&dev, &dev, row.v_dc, row.delta_v, &class.assumptions)?;
            let prop = analytic.e_on * 1e6;
            let m = error_metrics(row.measured_uj.value, conv, prop)?;
            let dc = conv / row.conv_pred_uj.value - 1.0;
            let dp = prop / row.prop_pred_uj.value - 1.0;
            devs_c.push(dc.abs());
            devs_p.push(dp.abs());
            report.rows.push(PredictionRow {
                row: row.clone(),
                device: dev.name.clone(),
                conventional_uj: conv,
                proposed_uj: prop,
                dev_conventional_rel: dc,
                dev_proposed_rel: dp,
                err_conv_pct: m.err_conv_pct,
                err_prop_pct: m.err_prop_pct,
                analytic,
            });
        }
        if devs_c.is_empty() {
            report.notices.push(format!(
                "class {} mΩ has no table rows",
                class.r_ds_class_mohm
            ));
            continue;
        }
        report.summaries.push(DeviationSummary {
            r_ds_class_mohm: class.r_ds_class_mohm,
            n_rows: devs_c.len(),
            mean_abs_dev_conventional: mean(devs_c.iter().copied()),
            max_abs_dev_conventional: devs_c.iter().copied().fold(0.0, f64::max),
            mean_abs_dev_proposed: mean(devs_p.iter().copied()),
            max_abs_dev_proposed: devs_p.iter().copied().fold(0.0, f64::max),
        });
    }
    Ok(report)
}

impl PredictionReport {
    /// Per-row CSV with every ledger term of the proposed prediction (µJ).
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "r_ds_class_mohm,v_dc_v,delta_v_v,measured_uj,published_conv_uj,conv_uj,published_prop_uj,prop_uj,\
             dev_conv_pct,dev_prop_pct,dc_source_uj,ac_link_uj,s2_output_cap_uj,s2_shoot_through_uj,\
             s2_parallel_cap_uj,s1_discharge_uj,v_gp_v,t_cc_ns,t_vf_ns,t_diss_ns\n",
        );
        for r in &self.rows {
            let t = &r.analytic.terms;
            s.push_str(&format!(
                "{},{},{},{},{},{:.4},{},{:.4},{:.3},{:.3},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}\n",
                r.row.r_ds_class_mohm,
                r.row.v_dc,
                r.row.delta_v,
                r.row.measured_uj.value,
                r.row.conv_pred_uj.value,
                r.conventional_uj,
                r.row.prop_pred_uj.value,
                r.proposed_uj,
                r.dev_conventional_rel * 100.0,
                r.dev_proposed_rel * 100.0,
                t.dc_source_energy * 1e6,
                t.ac_link_energy * 1e6,
                t.s2_output_cap_energy * 1e6,
                t.s2_shoot_through * 1e6,
                t.s2_parallel_cap_energy * 1e6,
                t.s1_discharge_energy * 1e6,
                r.analytic.v_gp,
                r.analytic.t_cc * 1e9,
                r.analytic.t_vf * 1e9,
                r.analytic.t_diss * 1e9,
            ));
        }
        s
    }
}

impl Table1Report {
    /// Per-row CSV mirroring the published columns next to the recomputed ones.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "r_ds_class_mohm,v_dc_v,delta_v_v,measured_uj,conv_pred_uj,prop_pred_uj,err_conv_pub_pct,err_conv_pct,\
             err_prop_pub_pct,err_prop_pct,reduction_pub,reduction,dev_conv_pp,dev_prop_pp,dev_reduction_pct,pass,\
             rounding_consistent\n",
        );
        for c in &self.rows {
            let r = &c.row;
            s.push_str(&format!(
                "{},{},{},{},{},{},{:.2},{:.4},{:.2},{:.4},{:.2},{:.4},{:.4},{:.4},{:.3},{},{}\n",
                r.r_ds_class_mohm,
                r.v_dc,
                r.delta_v,
                r.measured_uj.value,
                r.conv_pred_uj.value,
                r.prop_pred_uj.value,
                r.err_conv_pct,
                c.err_conv_pct,
                r.err_prop_pct,
                c.err_prop_pct,
                r.reduction,
                c.reduction,
                c.dev_conv_pp,
                c.dev_prop_pp,
                c.dev_reduction_rel * 100.0,
                c.pass,
                c.conv_rounding_consistent && c.prop_rounding_consistent,
            ));
        }
        s
    }
}
