//! Output writers. JSON files embed the resolved request config for
//! provenance; CSV files always start with a header row. Writing is
//! deterministic: same response, same bytes.

use std::io::Write;
use std::path::PathBuf;

use serde_json::{json, Value};

use tension_api as api;
use tension_core::superadd::GammaPoint;
use tension_core::tension::{TensionKind, TensionSample};

fn emit(out: &Option<PathBuf>, bytes: &[u8]) -> anyhow::Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, bytes)?;
            Ok(())
        }
        None => {
            std::io::stdout().write_all(bytes)?;
            Ok(())
        }
    }
}

/// {config, result} with a trailing newline.
pub fn write_json(out: &Option<PathBuf>, config: &Value, result: &Value) -> anyhow::Result<()> {
    let doc = json!({ "config": config, "result": result });
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    emit(out, text.as_bytes())
}

fn tension_row(t: &TensionSample) -> (String, String, String) {
    match &t.kind {
        TensionKind::Fixed => ("fixed".into(), format!("{}", t.value), String::new()),
        TensionKind::Free { delta } => {
            (format!("free({delta})"), format!("{}", t.value), String::new())
        }
        TensionKind::Annealed { stderr, .. } => {
            ("annealed".into(), format!("{}", t.value), format!("{stderr}"))
        }
    }
}

/// Columns: s_1..s_m, n, kind, value, stderr.
pub fn write_tension_csv(
    out: &Option<PathBuf>,
    _config: &Value,
    samples: &[TensionSample],
) -> anyhow::Result<()> {
    let m = samples.first().map(|t| t.s.len()).unwrap_or(0);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (1..=m).map(|i| format!("s_{i}")).collect();
    header.extend(["n", "kind", "value", "stderr"].map(String::from));
    w.write_record(&header)?;
    for t in samples {
        let mut row: Vec<String> = t.s.iter().map(|v| format!("{v}")).collect();
        let (kind, value, stderr) = tension_row(t);
        row.push(format!("{}", t.n));
        row.push(kind);
        row.push(value);
        row.push(stderr);
        w.write_record(&row)?;
    }
    emit(out, &w.into_inner()?)
}

pub fn write_sweep_csv(
    out: &Option<PathBuf>,
    _config: &Value,
    resp: &api::SweepResponse,
) -> anyhow::Result<()> {
    let m = resp.fixed.first().map(|t| t.s.len()).unwrap_or(0);
    let s = resp.fixed.first().map(|t| t.s.clone()).unwrap_or_default();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (1..=m).map(|i| format!("s_{i}")).collect();
    header.extend(["n", "kind", "value", "stderr"].map(String::from));
    w.write_record(&header)?;
    for t in &resp.fixed {
        let mut row: Vec<String> = t.s.iter().map(|v| format!("{v}")).collect();
        let (kind, value, stderr) = tension_row(t);
        row.push(format!("{}", t.n));
        row.push(kind);
        row.push(value);
        row.push(stderr);
        w.write_record(&row)?;
    }
    if let Some(points) = &resp.homogenization {
        for p in points {
            let mut row: Vec<String> = s.iter().map(|v| format!("{v}")).collect();
            row.push(format!("{}", p.n));
            row.push("annealed".into());
            row.push(format!("{}", p.mean));
            row.push(format!("{}", p.std / (p.samples as f64).sqrt()));
            w.write_record(&row)?;
            let mut row: Vec<String> = s.iter().map(|v| format!("{v}")).collect();
            row.push(format!("{}", p.n));
            row.push("cross_std".into());
            row.push(format!("{}", p.std));
            row.push(String::new());
            w.write_record(&row)?;
        }
    }
    emit(out, &w.into_inner()?)
}

pub fn write_gamma_csv(
    out: &Option<PathBuf>,
    _config: &Value,
    s: &[f64],
    points: &[GammaPoint],
) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (1..=s.len()).map(|i| format!("s_{i}")).collect();
    header.extend(["n", "kind", "value", "stderr"].map(String::from));
    w.write_record(&header)?;
    for p in points {
        let mut row: Vec<String> = s.iter().map(|v| format!("{v}")).collect();
        row.push(format!("{}", p.n));
        row.push("gamma".into());
        row.push(format!("{}", p.mean));
        row.push(format!("{}", p.stderr));
        w.write_record(&row)?;
    }
    emit(out, &w.into_inner()?)
}

/// One JSON object per line: {check, instance_hash, defect-or-slack, pass}.
pub fn write_superadd_jsonl(
    out: &Option<PathBuf>,
    _config: &Value,
    resp: &api::SuperaddResponse,
) -> anyhow::Result<()> {
    let mut buf = Vec::new();
    if let Some(defects) = &resp.defects {
        for d in defects {
            let line = json!({
                "check": "defect",
                "instance_hash": format!("{:016x}", d.instance_hash),
                "defect": d.defect,
                "pass": d.pass,
            });
            buf.extend_from_slice(serde_json::to_string(&line)?.as_bytes());
            buf.push(b'\n');
        }
    }
    if let Some(p) = &resp.maximal {
        let line = json!({
            "check": "maximal",
            "instance_hash": format!("{:016x}", 0),
            "slack": p.bound + 3.0 * p.binomial_stderr - p.empirical_prob,
            "pass": p.pass,
        });
        buf.extend_from_slice(serde_json::to_string(&line)?.as_bytes());
        buf.push(b'\n');
    }
    emit(out, &buf)
}

/// Long form: sweep, x_1..x_m, height. The sweep column is the chain sweep
/// counter at which the sample was recorded.
pub fn write_samples_csv(
    out: &Option<PathBuf>,
    req: &api::SampleRequest,
    resp: &api::SampleResponse,
) -> anyhow::Result<()> {
    let bbox = tension_core::LatticeBox::new(resp.lo.clone(), resp.hi.clone())?;
    let m = bbox.dim();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = vec!["sweep".into()];
    header.extend((1..=m).map(|i| format!("x_{i}")));
    header.push("height".into());
    w.write_record(&header)?;
    let interior = bbox.sites().filter(|x| !bbox.is_inner_boundary(x)).count() as u64;
    let burn_in = req.params.burn_in.unwrap_or(100 * interior);
    for (i, sample) in resp.samples.iter().enumerate() {
        let sweep = burn_in + i as u64 * req.params.thin;
        for (idx, x) in bbox.sites().enumerate() {
            let mut row: Vec<String> = vec![format!("{sweep}")];
            row.extend(x.iter().map(|v| format!("{v}")));
            row.push(format!("{}", sample[idx]));
            w.write_record(&row)?;
        }
    }
    emit(out, &w.into_inner()?)
}

/// Fixed-width little-endian layout: u32 m, then m i32 lo, m i32 hi, then
/// each sample as |B| i32 heights in raster order (axis 0 fastest).
pub fn write_samples_bin(
    out: &Option<PathBuf>,
    resp: &api::SampleResponse,
) -> anyhow::Result<()> {
    let m = resp.lo.len();
    let mut buf = Vec::new();
    buf.extend_from_slice(&(m as u32).to_le_bytes());
    for v in resp.lo.iter().chain(&resp.hi) {
        buf.extend_from_slice(&(*v as i32).to_le_bytes());
    }
    for sample in &resp.samples {
        for h in sample {
            buf.extend_from_slice(&(*h as i32).to_le_bytes());
        }
    }
    emit(out, &buf)
}

/// Columns: config_id, H, prob.
pub fn write_distribution_csv(path: &PathBuf, rows: &[(f64, f64)]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["config_id", "H", "prob"])?;
    for (i, (h, p)) in rows.iter().enumerate() {
        w.write_record(&[format!("{i}"), format!("{h}"), format!("{p}")])?;
    }
    std::fs::write(path, w.into_inner()?)?;
    Ok(())
}

/// Columns: x_1..x_m, h.
pub fn write_profile_csv(out: &Option<PathBuf>, resp: &api::SolveResponse) -> anyhow::Result<()> {
    let m = resp.nodes.first().map(|n| n.len()).unwrap_or(0);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (1..=m).map(|i| format!("x_{i}")).collect();
    header.push("h".into());
    w.write_record(&header)?;
    for (node, value) in resp.nodes.iter().zip(&resp.values) {
        let mut row: Vec<String> = node.iter().map(|v| format!("{v}")).collect();
        row.push(format!("{value}"));
        w.write_record(&row)?;
    }
    emit(out, &w.into_inner()?)
}
