use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use serde::Serialize;
use volising::Method;

use crate::config::RunConfig;
use crate::pipeline::{Dataset, PointResult, SweepResult};

#[derive(Serialize)]
struct SweepRow<'a> {
    dt: usize,
    chi: f64,
    tau: Option<usize>,
    method: &'a str,
    status: &'a str,
    mean_abs: Option<f64>,
    leading_eigenvalue: Option<f64>,
    q_eq: Option<f64>,
    q_syn: Option<f64>,
    q_asyn: Option<f64>,
    error: String,
}

fn q_against(p: &PointResult, other: Method) -> Option<f64> {
    p.q.iter().find(|(m, _)| *m == other).map(|(_, q)| *q)
}

/// One row per (dt, chi, tau, method) point, in grid order.
pub fn write_sweep_csv(path: &Path, sweep: &SweepResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for p in sweep.points() {
        let metrics = p.outcome.as_ref().ok();
        w.serialize(SweepRow {
            dt: p.dt,
            chi: p.chi,
            tau: p.tau,
            method: p.method.tag(),
            status: if metrics.is_some() { "ok" } else { "failed" },
            mean_abs: metrics.map(|m| m.mean_abs),
            leading_eigenvalue: metrics.map(|m| m.leading_eigenvalue),
            q_eq: q_against(p, Method::Equilibrium),
            q_syn: q_against(p, Method::Synchronous),
            q_asyn: q_against(p, Method::Asynchronous),
            error: p.outcome.as_ref().err().map(|e| e.to_string()).unwrap_or_default(),
        })?;
    }
    w.flush()?;
    Ok(())
}

fn secs(d: Duration) -> String {
    format!("{:.3} s", d.as_secs_f64())
}

fn relative(base: &Path, p: &Path) -> String {
    p.strip_prefix(base).unwrap_or(p).display().to_string()
}

/// Human-readable run summary: parameters, input, per-mapping diagnostics and
/// timings, failures and the file manifest.
pub fn write_report(
    path: &Path,
    cfg: &RunConfig,
    data: &Dataset,
    sweep: &SweepResult,
    extra_files: &[PathBuf],
    total: Duration,
) -> Result<()> {
    let mut r = String::new();
    r.push_str("volising run report\n\n[parameters]\n");
    for (k, v) in cfg.describe() {
        let _ = writeln!(r, "{k} = {v}");
    }
    let _ = writeln!(r, "\n[input]\nhash = {}", data.hash);
    for note in &data.notes {
        let _ = writeln!(r, "{note}");
    }
    let _ = writeln!(r, "load: {}", secs(data.load_time));

    let points: Vec<&PointResult> = sweep.points().collect();
    let failures = sweep.failures();
    let _ = writeln!(r, "\n[points]\n{} points, {} failures", points.len(), failures);

    for m in &sweep.mappings {
        let _ = writeln!(r, "\n[dt={} chi={}]", m.key.dt, m.key.chi);
        match &m.error {
            Some(err) => {
                let _ = writeln!(r, "failed: {err}");
            }
            None => {
                let _ = writeln!(r, "stocks kept: {}", m.kept);
                let dropped = if m.dropped.is_empty() { "none".to_string() } else { m.dropped.join(", ") };
                let _ = writeln!(r, "dropped (constant spins): {dropped}");
                let _ = writeln!(r, "samples: {}", m.n_samples);
                if let Some(floor) = m.floor {
                    let _ = writeln!(r, "significance floor: {floor:.3e}");
                }
            }
        }
        for (stage, d) in &m.timings {
            let _ = writeln!(r, "  {stage}: {}", secs(*d));
        }
        for p in &m.points {
            let lag = p.tau.map_or(String::new(), |t| format!(" tau={t}"));
            let status = match &p.outcome {
                Ok(metrics) => format!("ok, mean |J| = {:.4e}", metrics.mean_abs),
                Err(e) => format!("FAILED {e}"),
            };
            let stages: Vec<String> = p.timings.iter().map(|(s, d)| format!("{s} {}", secs(*d))).collect();
            let _ = writeln!(r, "  {}{lag}: {status}", p.method.tag());
            if !stages.is_empty() {
                let _ = writeln!(r, "    {}", stages.join(", "));
            }
        }
    }

    let mut manifest: Vec<String> = sweep
        .mappings
        .iter()
        .flat_map(|m| m.files.iter().chain(m.points.iter().flat_map(|p| p.files.iter())))
        .chain(extra_files)
        .map(|f| relative(&cfg.out, f))
        .collect();
    manifest.push(relative(&cfg.out, path));
    manifest.sort();
    let _ = writeln!(r, "\n[files]");
    for f in manifest {
        let _ = writeln!(r, "{f}");
    }
    let _ = writeln!(r, "\ntotal wall-clock: {}", secs(total));
    fs::write(path, r).with_context(|| format!("writing {}", path.display()))
}
