//! Subcommand implementations.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use turnon_core::circuit::{assemble, CircuitSystem, LoadDirection, Scenario};
use turnon_core::energy::{
    energy_report, predict_conventional, predict_proposed_analytic, AnalyticAssumptions,
    EnergyReport,
};
use turnon_core::io::{load_device, parse_config, read_text, write_trace, ConfigFile, LoadSpec};
use turnon_core::phases::{segment, PhaseTimeline, SegmentParams};
use turnon_core::trace::{simulate as run_solver, WaveformTrace};
use turnon_core::validation::{
    parse_class_index, run_table1_predictions, verify_table1_arithmetic, INDEX_FILE,
};

use crate::manifest::{csv_with_hash, json_with_hash, write_file, RunManifest};
use crate::plot::waveforms_svg;
use crate::{
    Overrides, PhasesArgs, PredictArgs, SimulateArgs, SweepArgs, SweepMode, SweepParam,
    ValidateArgs,
};

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))
}

fn parent_of(path: &Path) -> PathBuf {
    path.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn read_config(path: &Path) -> Result<ConfigFile> {
    let text = read_text(path).with_context(|| format!("reading config {}", path.display()))?;
    parse_config(&text).with_context(|| format!("parsing config {}", path.display()))
}

/// Sets the load current magnitude, keeping the direction the load already has.
fn set_load_current(file: &mut ConfigFile, magnitude: f64) {
    file.load = match file.load {
        LoadSpec::ConstantCurrent { direction, .. } => LoadSpec::ConstantCurrent {
            i_l_a: magnitude,
            direction,
        },
        LoadSpec::Inductor { l_h, i_l0_a } => {
            let sign = if i_l0_a != 0.0 {
                i_l0_a.signum()
            } else if file.scenario.load_direction() == LoadDirection::IntoMidpoint {
                1.0
            } else {
                -1.0
            };
            LoadSpec::Inductor {
                l_h,
                i_l0_a: sign * magnitude,
            }
        }
    };
}

pub fn apply_overrides(file: &mut ConfigFile, o: &Overrides) {
    if let Some(v) = o.v_dc {
        file.v_dc_v = v;
    }
    if let Some(v) = o.delta_v {
        file.delta_v_v = v;
    }
    if let Some(v) = o.i_l {
        set_load_current(file, v);
    }
    if let Some(v) = o.r_g_s1 {
        file.r_g_s1_ohm = v;
    }
    if let Some(v) = o.gate_on {
        file.gate_on_v = v;
    }
    if let Some(v) = o.t_end {
        file.t_end_s = v;
    }
    if let Some(v) = o.rel_tol {
        file.solver.rel_tol = v;
    }
    if let Some(v) = o.abs_tol {
        file.solver.abs_tol = v;
    }
    if let Some(v) = o.max_step {
        file.solver.max_step = v;
    }
    if let Some(v) = o.q_rr_s2 {
        file.q_rr_s2_c = Some(v);
    }
}

struct Run {
    sys: CircuitSystem,
    trace: WaveformTrace,
    timeline: Result<PhaseTimeline>,
}

fn run_file(file: &ConfigFile, base: &Path) -> Result<Run> {
    file.solver.validate().context("solver settings")?;
    let cfg = file.resolve(base).context("resolving configuration")?;
    let sys = assemble(cfg).context("assembling circuit")?;
    let trace = run_solver(&sys, &file.solver, file.t_end_s).context("integrating circuit")?;
    let c = &sys.config;
    let timeline =
        segment(&trace, c.scenario, &c.dev_s1, &c.dev_s2, &file.phases).context("segmenting trace");
    Ok(Run {
        sys,
        trace,
        timeline,
    })
}

fn report_of(run: &Run, file: &ConfigFile) -> Result<EnergyReport> {
    let tl = run.timeline.as_ref().map_err(|e| anyhow!("{e:#}"))?;
    energy_report(&run.trace, &run.sys, tl, Some(&file.analytic_assumptions()))
        .context("energy analysis")
}

pub fn simulate(a: &SimulateArgs) -> Result<ExitCode> {
    let mut file = read_config(&a.config)?;
    apply_overrides(&mut file, &a.overrides);
    let base = parent_of(&a.config);
    ensure_dir(&a.out)?;

    let params = serde_json::to_value(&file)?;
    let mut manifest = RunManifest::new("simulate", &a.out, params);
    manifest.config = Some(a.config.display().to_string());
    manifest.add_file(&a.config)?;
    manifest.add_device(&file.device_s1, &base)?;
    manifest.add_device(&file.device_s2, &base)?;
    let hash = manifest.write(&a.out)?;

    let run = run_file(&file, &base)?;
    let trace_path = a.out.join("trace.csv");
    write_trace(
        &trace_path,
        &run.trace,
        Some(&format!("manifest_hash: {hash}")),
    )
    .with_context(|| format!("writing {}", trace_path.display()))?;
    let tl = match &run.timeline {
        Ok(tl) => tl,
        Err(e) => bail!("trace written to {} but {e:#}", trace_path.display()),
    };
    write_file(&a.out.join("timeline.json"), &json_with_hash(tl, &hash)?)?;
    let report = report_of(&run, &file)?;
    write_file(&a.out.join("energy.json"), &json_with_hash(&report, &hash)?)?;
    if a.plot {
        let caption = format!(
            "{} turn-on, v_dc {} V, manifest_hash {hash}",
            file.scenario.label(),
            file.v_dc_v
        );
        write_file(
            &a.out.join("waveforms.svg"),
            &waveforms_svg(&run.trace, Some(tl), &caption),
        )?;
    }

    println!("scenario        {}", file.scenario.label());
    println!(
        "samples         {} ({} rejected steps)",
        run.trace.len(),
        run.trace.meta.stats.rejected
    );
    for e in &tl.events {
        println!(
            "  {:>10.3} ns  {:<14} {}",
            e.t * 1e9,
            e.kind.to_string(),
            e.note
        );
    }
    for w in &tl.warnings {
        println!("  warning: {w}");
    }
    println!("delta_v         {:.3} V", report.delta_v);
    println!(
        "window          {:.3} .. {:.3} ns",
        report.window.start * 1e9,
        report.window.end * 1e9
    );
    println!("E_on direct     {:.4} uJ", report.e_on_direct * 1e6);
    println!("E_on charge     {:.4} uJ", report.e_on_charge_ledger * 1e6);
    println!("E_on energy     {:.4} uJ", report.e_on_energy_ledger * 1e6);
    if let Some(p) = report.e_on_proposed_analytic {
        println!("E_on analytic   {:.4} uJ", p * 1e6);
    }
    println!("E_on C*dV^2     {:.4} uJ", report.e_on_conventional * 1e6);
    println!(
        "balance resid   {:.3e} (relative)",
        report.balance.residual.rel
    );
    for n in &report.notes {
        println!("note: {n}");
    }
    println!("outputs in {}", a.out.display());
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Serialize)]
struct PredictRow {
    v_dc_v: f64,
    delta_v_v: f64,
    e_on_conventional_uj: f64,
    e_on_proposed_uj: Option<f64>,
    v_gp_v: Option<f64>,
    t_cc_ns: Option<f64>,
    t_vf_ns: Option<f64>,
    error: Option<String>,
}

impl PredictRow {
    const HEADER: &'static str =
        "v_dc_v,delta_v_v,e_on_conventional_uj,e_on_proposed_uj,v_gp_v,t_cc_ns,t_vf_ns,error";

    fn csv_line(&self) -> String {
        let o = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.v_dc_v,
            self.delta_v_v,
            self.e_on_conventional_uj,
            o(self.e_on_proposed_uj),
            o(self.v_gp_v),
            o(self.t_cc_ns),
            o(self.t_vf_ns),
            self.error
                .as_deref()
                .unwrap_or("")
                .replace([',', '\n'], ";")
        )
    }
}

fn predict_row(
    d1: &turnon_core::device::DeviceModel,
    d2: &turnon_core::device::DeviceModel,
    v_dc: f64,
    dv: f64,
    a: &AnalyticAssumptions,
) -> Result<PredictRow> {
    let conv = predict_conventional(d1, d2, v_dc, dv)?;
    let mut row = PredictRow {
        v_dc_v: v_dc,
        delta_v_v: dv,
        e_on_conventional_uj: conv * 1e6,
        e_on_proposed_uj: None,
        v_gp_v: None,
        t_cc_ns: None,
        t_vf_ns: None,
        error: None,
    };
    match predict_proposed_analytic(d1, d2, v_dc, dv, a) {
        Ok(p) => {
            row.e_on_proposed_uj = Some(p.e_on * 1e6);
            row.v_gp_v = Some(p.v_gp);
            row.t_cc_ns = Some(p.t_cc * 1e9);
            row.t_vf_ns = Some(p.t_vf * 1e9);
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    Ok(row)
}

pub fn predict(a: &PredictArgs) -> Result<ExitCode> {
    let here = Path::new(".");
    let ref2 = a.device_s2.clone().unwrap_or_else(|| a.device_s1.clone());
    let d1 = load_device(&a.device_s1, here)
        .with_context(|| format!("loading S1 device {}", a.device_s1))?;
    let d2 = load_device(&ref2, here).with_context(|| format!("loading S2 device {ref2}"))?;
    let assumptions = AnalyticAssumptions {
        i_out: a.i_out,
        gate_on: a.gate_on,
        r_g: a.r_g,
        v_ds_probe: a.v_ds_probe,
    };
    ensure_dir(&a.out)?;

    let params = serde_json::json!({
        "v_dc_v": a.v_dc,
        "delta_v_v": a.delta_v,
        "assumptions": assumptions,
    });
    let mut manifest = RunManifest::new("predict", &a.out, params);
    manifest.add_device(&a.device_s1, here)?;
    manifest.add_device(&ref2, here)?;
    let hash = manifest.write(&a.out)?;

    let rows: Vec<PredictRow> = a
        .delta_v
        .iter()
        .map(|&dv| predict_row(&d1, &d2, a.v_dc, dv, &assumptions))
        .collect::<Result<_>>()?;
    let mut csv = String::from(PredictRow::HEADER);
    csv.push('\n');
    println!(
        "{:>10} {:>14} {:>14}",
        "delta_v", "conv (uJ)", "proposed (uJ)"
    );
    for r in &rows {
        csv.push_str(&r.csv_line());
        csv.push('\n');
        let p = r
            .e_on_proposed_uj
            .map(|x| format!("{x:14.4}"))
            .unwrap_or_else(|| format!("{:>14}", "n/a"));
        println!("{:>10.2} {:>14.4} {p}", r.delta_v_v, r.e_on_conventional_uj);
    }
    write_file(&a.out.join("predictions.csv"), &csv_with_hash(&csv, &hash))?;
    write_file(
        &a.out.join("predictions.json"),
        &json_with_hash(&rows, &hash)?,
    )?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Default, Serialize)]
struct SweepRow {
    value: f64,
    delta_v_v: Option<f64>,
    e_on_direct_uj: Option<f64>,
    e_on_charge_ledger_uj: Option<f64>,
    e_on_energy_ledger_uj: Option<f64>,
    e_on_proposed_uj: Option<f64>,
    e_on_conventional_uj: Option<f64>,
    balance_rel: Option<f64>,
    max_charge_rel: Option<f64>,
    accepted_steps: Option<usize>,
    error: Option<String>,
}

impl SweepRow {
    const HEADER: &'static str =
        "value,delta_v_v,e_on_direct_uj,e_on_charge_ledger_uj,e_on_energy_ledger_uj,\
e_on_proposed_uj,e_on_conventional_uj,balance_rel,max_charge_rel,accepted_steps,error";

    fn csv_line(&self, param: &str) -> String {
        let o = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let _ = param;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.value,
            o(self.delta_v_v),
            o(self.e_on_direct_uj),
            o(self.e_on_charge_ledger_uj),
            o(self.e_on_energy_ledger_uj),
            o(self.e_on_proposed_uj),
            o(self.e_on_conventional_uj),
            o(self.balance_rel),
            o(self.max_charge_rel),
            self.accepted_steps
                .map(|x| x.to_string())
                .unwrap_or_default(),
            self.error
                .as_deref()
                .unwrap_or("")
                .replace([',', '\n'], ";")
        )
    }
}

fn param_name(p: SweepParam) -> &'static str {
    match p {
        SweepParam::DeltaV => "delta_v_v",
        SweepParam::VDc => "v_dc_v",
        SweepParam::ILoad => "i_l_a",
        SweepParam::RGate => "r_g_s1_ohm",
        SweepParam::TolScale => "tol_scale",
    }
}

fn with_param(file: &ConfigFile, p: SweepParam, v: f64) -> ConfigFile {
    let mut f = file.clone();
    match p {
        SweepParam::DeltaV => f.delta_v_v = v,
        SweepParam::VDc => f.v_dc_v = v,
        SweepParam::ILoad => set_load_current(&mut f, v),
        SweepParam::RGate => f.r_g_s1_ohm = v,
        SweepParam::TolScale => f.solver = f.solver.scaled(v),
    }
    f
}

fn sweep_simulate_point(file: &ConfigFile, base: &Path) -> Result<SweepRow> {
    let run = run_file(file, base)?;
    let r = report_of(&run, file)?;
    Ok(SweepRow {
        delta_v_v: Some(r.delta_v),
        e_on_direct_uj: Some(r.e_on_direct * 1e6),
        e_on_charge_ledger_uj: Some(r.e_on_charge_ledger * 1e6),
        e_on_energy_ledger_uj: Some(r.e_on_energy_ledger * 1e6),
        e_on_proposed_uj: r.e_on_proposed_analytic.map(|x| x * 1e6),
        e_on_conventional_uj: Some(r.e_on_conventional * 1e6),
        balance_rel: Some(r.balance.residual.rel),
        max_charge_rel: Some(
            r.charges
                .iter()
                .map(|c| c.residual.rel.abs())
                .fold(0.0, f64::max),
        ),
        accepted_steps: Some(run.trace.meta.stats.accepted),
        ..Default::default()
    })
}

fn sweep_predict_point(
    file: &ConfigFile,
    d1: &turnon_core::device::DeviceModel,
    d2: &turnon_core::device::DeviceModel,
) -> Result<SweepRow> {
    let p = predict_row(
        d1,
        d2,
        file.v_dc_v,
        file.delta_v_v,
        &file.analytic_assumptions(),
    )?;
    Ok(SweepRow {
        delta_v_v: Some(p.delta_v_v),
        e_on_proposed_uj: p.e_on_proposed_uj,
        e_on_conventional_uj: Some(p.e_on_conventional_uj),
        error: p.error,
        ..Default::default()
    })
}

pub fn sweep(a: &SweepArgs) -> Result<ExitCode> {
    if a.mode == SweepMode::Predict && a.param == SweepParam::TolScale {
        bail!("tol_scale only applies to --mode simulate");
    }
    let file = read_config(&a.config)?;
    let base = parent_of(&a.config);
    ensure_dir(&a.out)?;
    let name = param_name(a.param);

    let params = serde_json::json!({
        "config": file,
        "param": name,
        "values": a.values,
        "mode": format!("{:?}", a.mode).to_lowercase(),
    });
    let mut manifest = RunManifest::new("sweep", &a.out, params);
    manifest.config = Some(a.config.display().to_string());
    manifest.add_file(&a.config)?;
    manifest.add_device(&file.device_s1, &base)?;
    manifest.add_device(&file.device_s2, &base)?;
    let hash = manifest.write(&a.out)?;

    let devices = match a.mode {
        SweepMode::Predict => {
            let cfg = file.resolve(&base).context("resolving configuration")?;
            Some((cfg.dev_s1, cfg.dev_s2))
        }
        SweepMode::Simulate => None,
    };
    let rows: Vec<SweepRow> = a
        .values
        .par_iter()
        .map(|&v| {
            let f = with_param(&file, a.param, v);
            let point = match &devices {
                Some((d1, d2)) => sweep_predict_point(&f, d1, d2),
                None => sweep_simulate_point(&f, &base),
            };
            let mut row = point.unwrap_or_else(|e| SweepRow {
                error: Some(format!("{e:#}")),
                ..Default::default()
            });
            row.value = v;
            row
        })
        .collect();

    let mut csv = SweepRow::HEADER.replacen("value", name, 1);
    csv.push('\n');
    let mut n_err = 0;
    for r in &rows {
        csv.push_str(&r.csv_line(name));
        csv.push('\n');
        match &r.error {
            Some(e) if r.e_on_conventional_uj.is_none() => {
                n_err += 1;
                println!("{name} = {}: error: {e}", r.value);
            }
            _ => println!(
                "{name} = {}: direct {} uJ, proposed {} uJ, conventional {} uJ",
                r.value,
                r.e_on_direct_uj
                    .map(|x| format!("{x:.4}"))
                    .unwrap_or_else(|| "n/a".into()),
                r.e_on_proposed_uj
                    .map(|x| format!("{x:.4}"))
                    .unwrap_or_else(|| "n/a".into()),
                r.e_on_conventional_uj
                    .map(|x| format!("{x:.4}"))
                    .unwrap_or_else(|| "n/a".into()),
            ),
        }
    }
    write_file(&a.out.join("sweep.csv"), &csv_with_hash(&csv, &hash))?;
    write_file(&a.out.join("sweep.json"), &json_with_hash(&rows, &hash)?)?;
    if n_err == rows.len() {
        bail!("every sweep point failed");
    }
    Ok(ExitCode::SUCCESS)
}

pub fn validate(a: &ValidateArgs) -> Result<ExitCode> {
    ensure_dir(&a.out)?;
    let params = serde_json::json!({ "curve_dir": a.curve_dir, "strict": a.strict });
    let mut manifest = RunManifest::new("validate", &a.out, params);
    if let Some(dir) = &a.curve_dir {
        let index = dir.join(INDEX_FILE);
        if index.exists() {
            manifest.add_file(&index)?;
            let classes = parse_class_index(&read_text(&index)?)
                .with_context(|| format!("parsing {}", index.display()))?;
            for c in &classes {
                manifest.add_device(&c.device, dir)?;
            }
        }
    }
    let hash = manifest.write(&a.out)?;

    let t = verify_table1_arithmetic();
    write_file(
        &a.out.join("table1_check.csv"),
        &csv_with_hash(&t.to_csv(), &hash),
    )?;
    write_file(
        &a.out.join("table1_check.json"),
        &json_with_hash(&t, &hash)?,
    )?;
    let verdict = |b: bool| if b { "PASS" } else { "FAIL" };
    println!(
        "table arithmetic: {} ({} of {} rows within tolerance; {} of the others consistent with rounding)",
        verdict(t.arithmetic_pass),
        t.n_pass,
        t.n_rows,
        t.n_fail_explained_by_rounding
    );
    println!(
        "  max deviation: conventional {:.3} pp, proposed {:.3} pp, reduction {:.2}%",
        t.max_dev_conv_pp,
        t.max_dev_prop_pp,
        t.max_dev_reduction_rel * 100.0
    );
    let r = &t.ranges;
    println!(
        "summary ranges: {} (conventional {:.2}..{:.2}%, proposed {:.2}..{:.2}%, mean reduction {:.2})",
        verdict(r.pass),
        r.conv_range_recomputed.0,
        r.conv_range_recomputed.1,
        r.prop_range_recomputed.0,
        r.prop_range_recomputed.1,
        r.mean_reduction_of_ratios
    );

    if let Some(dir) = &a.curve_dir {
        let p = run_table1_predictions(dir)
            .with_context(|| format!("predictions from {}", dir.display()))?;
        write_file(
            &a.out.join("predictions.csv"),
            &csv_with_hash(&p.to_csv(), &hash),
        )?;
        write_file(&a.out.join("predictions.json"), &json_with_hash(&p, &hash)?)?;
        for n in &p.notices {
            println!("notice: {n}");
        }
        for s in &p.summaries {
            println!(
                "class {} mOhm, {} rows: conventional mean |dev| {:.2}% (max {:.2}%), proposed mean |dev| {:.2}% (max {:.2}%)",
                s.r_ds_class_mohm,
                s.n_rows,
                s.mean_abs_dev_conventional * 100.0,
                s.max_abs_dev_conventional * 100.0,
                s.mean_abs_dev_proposed * 100.0,
                s.max_abs_dev_proposed * 100.0
            );
        }
    }
    if a.strict && !(t.arithmetic_pass && r.pass) {
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_scenario(s: &str) -> Result<Scenario> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| anyhow!("unknown scenario `{s}` (expected zvs, hs, izvs_case1 or izvs_case2)"))
}

pub fn phases(a: &PhasesArgs) -> Result<ExitCode> {
    let here = PathBuf::from(".");
    let (scenario, ref1, ref2, base, params, config) = match &a.config {
        Some(path) => {
            let f = read_config(path)?;
            (
                f.scenario,
                f.device_s1,
                f.device_s2,
                parent_of(path),
                f.phases,
                Some(path),
            )
        }
        None => {
            let r1 = a
                .device_s1
                .clone()
                .ok_or_else(|| anyhow!("--device-s1 is required without --config"))?;
            let r2 = a.device_s2.clone().unwrap_or_else(|| r1.clone());
            let sc = parse_scenario(a.scenario.as_deref().unwrap_or_default())?;
            (sc, r1, r2, here, SegmentParams::default(), None)
        }
    };
    let d1 = load_device(&ref1, &base).with_context(|| format!("loading S1 device {ref1}"))?;
    let d2 = load_device(&ref2, &base).with_context(|| format!("loading S2 device {ref2}"))?;
    let trace = turnon_core::io::read_trace(&a.trace)
        .with_context(|| format!("reading trace {}", a.trace.display()))?;
    ensure_dir(&a.out)?;

    let mut manifest = RunManifest::new(
        "phases",
        &a.out,
        serde_json::json!({ "trace": a.trace, "scenario": scenario, "segment": params }),
    );
    manifest.add_file(&a.trace)?;
    if let Some(p) = config {
        manifest.config = Some(p.display().to_string());
        manifest.add_file(p)?;
    }
    manifest.add_device(&ref1, &base)?;
    manifest.add_device(&ref2, &base)?;
    let hash = manifest.write(&a.out)?;

    let tl = segment(&trace, scenario, &d1, &d2, &params).context("segmenting trace")?;
    write_file(&a.out.join("timeline.json"), &json_with_hash(&tl, &hash)?)?;
    if a.plot {
        let caption = format!(
            "{} phases of {}, manifest_hash {hash}",
            scenario.label(),
            a.trace.display()
        );
        write_file(
            &a.out.join("waveforms.svg"),
            &waveforms_svg(&trace, Some(&tl), &caption),
        )?;
    }
    for e in &tl.events {
        println!(
            "{:>10.3} ns  {:<14} {}",
            e.t * 1e9,
            e.kind.to_string(),
            e.note
        );
    }
    for w in &tl.warnings {
        println!("warning: {w}");
    }
    Ok(ExitCode::SUCCESS)
}
