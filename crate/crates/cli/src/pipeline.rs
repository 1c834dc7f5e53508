use std::collections::BTreeSet;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{Context, Result};
use nalgebra::DMatrix;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use volising::analyze::{mean_abs_coupling, rescale_to_mean, similarity_q, summarize, Bins};
use volising::binarize::{build_spin_matrix, filter_degenerate, MappingParams};
use volising::infer::{infer_asynchronous, infer_equilibrium, infer_synchronous};
use volising::ingest::{clip_and_grid, parse_ticks, read_ticker_list, TickFormat, VolumeGrid};
use volising::netexport::{to_dot, to_edge_list_json, top_edges};
use volising::stats::{corr_derivative, estimate_moments, MomentSet};
use volising::synth::MarketSpec;
use volising::{CouplingModel, Method, SpinMatrix};

use crate::config::{RunConfig, Source};

/// The gridded input plus what the report needs to know about it.
pub struct Dataset {
    pub grid: VolumeGrid,
    /// SHA-256 over the input bytes and every setting that shapes the grid.
    pub hash: String,
    pub notes: Vec<String>,
    pub load_time: Duration,
}

pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let start = Instant::now();
    let mut hasher = Sha256::new();
    let mut notes = Vec::new();
    let grid = match &cfg.source {
        Source::Synth(spec) => {
            hasher.update(format!("synth:{spec};seed={}", cfg.seed));
            let mut market = MarketSpec::new(
                spec.stocks,
                spec.days,
                spec.day_length,
                spec.blocks.clone(),
                spec.common,
                cfg.seed,
            );
            if let Some(sector) = spec.sector {
                market.sector_factor_strength = sector;
            }
            market.generate().context("generating synthetic volumes")?
        }
        Source::Ticks {
            input,
            tickers,
            has_header,
            days,
            raw_day_length,
            clip_length,
        } => {
            let bytes = fs::read(input).with_context(|| format!("reading {}", input.display()))?;
            hasher.update(&bytes);
            let format = TickFormat {
                has_header: *has_header,
                ..TickFormat::default()
            };
            let ticks = parse_ticks(&bytes[..], &format).with_context(|| format!("parsing {}", input.display()))?;
            let stocks = match tickers {
                Some(path) => {
                    let list = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
                    hasher.update(b"\0tickers\0");
                    hasher.update(&list);
                    read_ticker_list(&list[..]).with_context(|| format!("parsing {}", path.display()))?
                }
                None => {
                    let set: BTreeSet<&str> = ticks.iter().map(|t| t.stock.as_str()).collect();
                    set.into_iter().map(String::from).collect()
                }
            };
            let days = match days {
                Some(d) => *d,
                None => ticks.iter().map(|t| t.day as usize + 1).max().unwrap_or(0),
            };
            hasher.update(format!("\0days={days};raw={raw_day_length};clip={clip_length}"));
            let gridded = clip_and_grid(&ticks, &stocks, days, *raw_day_length, *clip_length)?;
            notes.push(format!(
                "{} ticks read, {} with tickers outside the list, {} outside the central window",
                ticks.len(),
                gridded.unknown_ticker,
                gridded.outside_window
            ));
            gridded.grid
        }
    };
    notes.push(format!(
        "{} stocks, {} days of {} s",
        grid.n_stocks(),
        grid.days(),
        grid.day_length()
    ));
    let hash = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
    Ok(Dataset {
        grid,
        hash,
        notes,
        load_time: start.elapsed(),
    })
}

#[derive(Debug, Clone)]
pub struct StageError {
    pub stage: &'static str,
    pub message: String,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.stage, self.message)
    }
}

fn stage<T, E: fmt::Display>(name: &'static str, r: std::result::Result<T, E>) -> std::result::Result<T, StageError> {
    r.map_err(|e| StageError {
        stage: name,
        message: e.to_string(),
    })
}

/// Shared-stage cache key: a mapping point of one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct MappingKey {
    pub input_hash: String,
    pub dt: usize,
    pub chi: f64,
}

#[derive(Debug, Clone)]
pub struct PointMetrics {
    pub mean_abs: f64,
    pub leading_eigenvalue: f64,
}

#[derive(Debug, Clone)]
pub struct PointResult {
    pub dt: usize,
    pub chi: f64,
    pub tau: Option<usize>,
    pub method: Method,
    pub outcome: std::result::Result<PointMetrics, StageError>,
    /// Q against each other requested method at the same point.
    pub q: Vec<(Method, f64)>,
    pub timings: Vec<(&'static str, Duration)>,
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct MappingResult {
    pub key: MappingKey,
    pub kept: usize,
    pub dropped: Vec<String>,
    pub n_samples: usize,
    pub floor: Option<f64>,
    pub error: Option<StageError>,
    pub timings: Vec<(&'static str, Duration)>,
    pub files: Vec<PathBuf>,
    pub points: Vec<PointResult>,
}

pub struct SweepResult {
    pub mappings: Vec<MappingResult>,
}

impl SweepResult {
    pub fn points(&self) -> impl Iterator<Item = &PointResult> {
        self.mappings.iter().flat_map(|m| m.points.iter())
    }

    pub fn failures(&self) -> usize {
        self.points().filter(|p| p.outcome.is_err()).count()
    }
}

fn timed<T>(timings: &mut Vec<(&'static str, Duration)>, name: &'static str, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    timings.push((name, start.elapsed()));
    out
}

fn mapping_dir(out: &Path, dt: usize, chi: f64) -> PathBuf {
    out.join(format!("dt{dt}_chi{chi}"))
}

fn point_dir(out: &Path, dt: usize, chi: f64, tau: Option<usize>, method: Method) -> PathBuf {
    let base = mapping_dir(out, dt, chi);
    match tau {
        Some(tau) => base.join(format!("tau{tau}")).join(method.tag()),
        None => base.join(method.tag()),
    }
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    body(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Runs every (dt, chi) mapping point in parallel; within a point the
/// binarized series and moments are computed once and shared by all methods
/// and lags.
pub fn run_sweep(cfg: &RunConfig, data: &Dataset) -> Result<SweepResult> {
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    let keys: Vec<MappingKey> = cfg
        .dts
        .iter()
        .flat_map(|&dt| {
            cfg.chis.iter().map(move |&chi| MappingKey {
                input_hash: data.hash.clone(),
                dt,
                chi,
            })
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs).build()?;
    let mappings = pool.install(|| keys.into_par_iter().map(|key| run_mapping(cfg, data, key)).collect());
    Ok(SweepResult { mappings })
}

struct Shared {
    spins: SpinMatrix,
    dropped: Vec<String>,
    moments: MomentSet,
    /// Lags that could not be estimated, with the reason.
    bad_taus: Vec<(usize, String)>,
    derivative: std::result::Result<(), StageError>,
}

fn shared_stages(
    cfg: &RunConfig,
    data: &Dataset,
    key: &MappingKey,
    timings: &mut Vec<(&'static str, Duration)>,
) -> std::result::Result<Shared, StageError> {
    let params = MappingParams {
        dt: key.dt,
        chi: key.chi,
        ds: cfg.ds,
    };
    let raw = timed(timings, "binarize", || stage("binarize", build_spin_matrix(&data.grid, params)))?;
    let (spins, dropped) = timed(timings, "filter", || stage("filter", filter_degenerate(&raw)))?;

    let per_day = spins.samples_per_day();
    let mut good_taus = Vec::new();
    let mut bad_taus = Vec::new();
    for &tau in &cfg.taus {
        if tau % cfg.ds != 0 {
            bad_taus.push((tau, format!("lag {tau} s is not a multiple of the window shift {} s", cfg.ds)));
        } else if tau / cfg.ds >= per_day {
            bad_taus.push((tau, format!("lag {tau} s does not fit in a day of {per_day} samples")));
        } else {
            good_taus.push(tau);
        }
    }
    let mut moments = timed(timings, "moments", || stage("moments", estimate_moments(&spins, &good_taus, None)))?;
    let derivative = if cfg.methods.contains(&Method::Asynchronous) {
        timed(timings, "derivative", || {
            stage("moments", corr_derivative(&spins, key.dt)).map(|dc| {
                moments.dc = Some(dc);
            })
        })
    } else {
        Ok(())
    };
    Ok(Shared {
        spins,
        dropped,
        moments,
        bad_taus,
        derivative,
    })
}

fn blank_point(key: &MappingKey, tau: Option<usize>, method: Method, err: StageError) -> PointResult {
    PointResult {
        dt: key.dt,
        chi: key.chi,
        tau,
        method,
        outcome: Err(err),
        q: Vec::new(),
        timings: Vec::new(),
        files: Vec::new(),
    }
}

fn failed_mapping(
    cfg: &RunConfig,
    key: MappingKey,
    err: StageError,
    timings: Vec<(&'static str, Duration)>,
    files: Vec<PathBuf>,
) -> MappingResult {
    eprintln!("dt={} chi={}: {err}", key.dt, key.chi);
    let points = cfg
        .tau_points()
        .into_iter()
        .flat_map(|tau| cfg.methods.iter().map(move |&m| (tau, m)))
        .map(|(tau, m)| blank_point(&key, tau, m, err.clone()))
        .collect();
    MappingResult {
        key,
        kept: 0,
        dropped: Vec::new(),
        n_samples: 0,
        floor: None,
        error: Some(err),
        timings,
        files,
        points,
    }
}

fn run_mapping(cfg: &RunConfig, data: &Dataset, key: MappingKey) -> MappingResult {
    let mut timings = Vec::new();
    let mut files = Vec::new();
    let shared = match shared_stages(cfg, data, &key, &mut timings) {
        Ok(s) => s,
        Err(err) => return failed_mapping(cfg, key, err, timings, files),
    };

    let dir = mapping_dir(&cfg.out, key.dt, key.chi);
    let written = fs::create_dir_all(&dir).map_err(anyhow::Error::from).and_then(|_| {
        let path = dir.join("moments.json");
        write_file(&path, |w| Ok(shared.moments.write_json(w)?))?;
        files.push(path);
        if cfg.dump_spins {
            let path = dir.join("spins.csv");
            write_file(&path, |w| Ok(shared.spins.write_csv(w, &shared.dropped)?))?;
            files.push(path);
        }
        Ok(())
    });
    if let Err(e) = written {
        let err = StageError {
            stage: "write",
            message: format!("{e:#}"),
        };
        return failed_mapping(cfg, key, err, timings, files);
    }

    let mut points = Vec::new();
    for tau in cfg.tau_points() {
        let mut models: Vec<(usize, CouplingModel)> = Vec::new();
        for &method in &cfg.methods {
            let placeholder = StageError {
                stage: "infer",
                message: String::new(),
            };
            let mut point = blank_point(&key, tau, method, placeholder);
            point.outcome = run_point(cfg, &shared, &key, tau, method, &mut point).map(|(metrics, model)| {
                models.push((points.len(), model));
                metrics
            });
            if let Err(err) = &point.outcome {
                let lag = tau.map_or(String::new(), |t| format!(" tau={t}"));
                eprintln!("dt={} chi={}{lag} {}: {err}", key.dt, key.chi, method.tag());
            }
            points.push(point);
        }
        attach_similarities(&mut points, &models);
    }

    MappingResult {
        kept: shared.spins.n_stocks(),
        dropped: shared.dropped,
        n_samples: shared.spins.n_samples(),
        floor: Some(shared.moments.significance_floor()),
        key,
        error: None,
        timings,
        files,
        points,
    }
}

fn run_point(
    cfg: &RunConfig,
    shared: &Shared,
    key: &MappingKey,
    tau: Option<usize>,
    method: Method,
    point: &mut PointResult,
) -> std::result::Result<(PointMetrics, CouplingModel), StageError> {
    let timings = &mut point.timings;
    let mom = &shared.moments;
    let model = timed(timings, "infer", || match method {
        Method::Equilibrium => stage("infer", infer_equilibrium(mom, cfg.lambda)),
        Method::Synchronous => {
            let tau = tau.expect("validated: directed methods have a lag");
            if let Some((_, why)) = shared.bad_taus.iter().find(|(t, _)| *t == tau) {
                return Err(StageError {
                    stage: "moments",
                    message: why.clone(),
                });
            }
            stage("infer", infer_synchronous(mom, tau, cfg.lambda))
        }
        Method::Asynchronous => {
            shared.derivative.clone()?;
            stage("infer", infer_asynchronous(mom, cfg.lambda))
        }
    })?;
    let mut model = model;
    model.params.dt = Some(key.dt);
    model.params.chi = Some(key.chi);

    let summary = timed(timings, "analyze", || stage("analyze", summarize(&model.j, &Bins::Count(cfg.bins))))?;
    let metrics = PointMetrics {
        mean_abs: stage("analyze", mean_abs_coupling(&model.j))?,
        leading_eigenvalue: summary.top_eigenvalues.first().copied().unwrap_or(f64::NAN),
    };
    let network = timed(timings, "network", || stage("network", top_edges(&model, cfg.top_k, cfg.ranking)))?;

    let dir = point_dir(&cfg.out, key.dt, key.chi, tau, method);
    let tag = method.tag();
    let files = &mut point.files;
    let written = timed(timings, "write", || -> Result<()> {
        fs::create_dir_all(&dir)?;
        let mut emit = |name: String, body: &dyn Fn(&mut BufWriter<File>) -> Result<()>| -> Result<()> {
            let path = dir.join(name);
            write_file(&path, |w| body(w))?;
            files.push(path);
            Ok(())
        };
        emit(format!("couplings_{tag}.csv"), &|w| Ok(model.write_couplings_csv(w)?))?;
        emit(format!("couplings_{tag}.json"), &|w| Ok(model.write_params_json(w)?))?;
        emit(format!("fields_{tag}.csv"), &|w| Ok(model.write_fields_csv(w)?))?;
        emit("summary.json".into(), &|w| Ok(summary.write_json(w)?))?;
        emit("network.json".into(), &|w| {
            writeln!(w, "{}", to_edge_list_json(&network)?)?;
            Ok(())
        })?;
        emit("network.dot".into(), &|w| Ok(w.write_all(to_dot(&network).as_bytes())?))?;
        Ok(())
    });
    stage("write", written.map_err(|e| format!("{e:#}")))?;
    Ok((metrics, model))
}

/// Q between every pair of successful methods at one point, both matrices
/// rescaled to unit mean off-diagonal coupling first.
fn attach_similarities(points: &mut [PointResult], models: &[(usize, CouplingModel)]) {
    let rescaled: Vec<(usize, Method, Option<DMatrix<f64>>)> = models
        .iter()
        .map(|(idx, m)| (*idx, m.method, rescale_to_mean(&m.j, 1.0).ok()))
        .collect();
    for (idx, method, a) in &rescaled {
        for (_, other, b) in &rescaled {
            if other == method {
                continue;
            }
            if let (Some(a), Some(b)) = (a, b) {
                if let Ok(q) = similarity_q(a, b) {
                    points[*idx].q.push((*other, q));
                }
            }
        }
    }
}
