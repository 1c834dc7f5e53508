//! `volising`: traded volumes to interaction networks.
//!
//! Exit codes: 0 when every point succeeds, 2 when some points fail, 1 on a
//! configuration or I/O error.

mod config;
mod pipeline;
mod report;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;
use clap::Parser;
use volising::Method;

use config::{read_config_file, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "volising", version, about = "Infer stock interaction networks from traded volumes")]
struct Cli {
    /// Flat `key = value` config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Tick CSV: ticker,day,second,volume.
    #[arg(long)]
    input: Option<PathBuf>,
    /// One ticker per line; defaults to every ticker in the input.
    #[arg(long)]
    tickers: Option<PathBuf>,
    /// The tick CSV starts with a header line.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    has_header: Option<bool>,
    /// Number of trading days; defaults to the largest day index plus one.
    #[arg(long)]
    days: Option<usize>,
    /// Length of a raw trading day in seconds.
    #[arg(long)]
    raw_day_length: Option<usize>,
    /// Length of the central window kept from each day.
    #[arg(long)]
    clip_length: Option<usize>,
    /// Synthetic market instead of tick input, e.g.
    /// `stocks=30,days=5,day_length=4000,blocks=2:2:26,common=1.0`.
    #[arg(long)]
    synth: Option<String>,
    /// Window lengths in seconds (comma separated or repeated).
    #[arg(long, value_delimiter = ',')]
    dt: Vec<usize>,
    /// Volume thresholds relative to the average.
    #[arg(long, value_delimiter = ',')]
    chi: Vec<f64>,
    /// Lags in seconds for the directed methods.
    #[arg(long, value_delimiter = ',')]
    tau: Vec<usize>,
    /// Window shift in seconds.
    #[arg(long)]
    ds: Option<usize>,
    /// Inference method: eq, syn or asyn (repeatable).
    #[arg(long, value_delimiter = ',')]
    method: Vec<Method>,
    /// Ridge added to the correlation matrix before inversion.
    #[arg(long)]
    lambda: Option<f64>,
    /// Number of edges in each exported network.
    #[arg(long)]
    top_k: Option<usize>,
    /// Edge ranking: signed or absolute.
    #[arg(long)]
    ranking: Option<String>,
    /// Histogram bins in summaries.
    #[arg(long)]
    bins: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// Also write the binarized series of each mapping point.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    dump_spins: Option<bool>,
}

impl Cli {
    /// Flag values as config pairs, to be laid over the file's.
    fn pairs(&self) -> BTreeMap<String, String> {
        fn join<T: ToString>(xs: &[T]) -> Option<String> {
            (!xs.is_empty()).then(|| xs.iter().map(T::to_string).collect::<Vec<_>>().join(","))
        }
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let methods: Vec<&str> = self.method.iter().map(|m| m.tag()).collect();
        let entries = [
            ("input", path(&self.input)),
            ("tickers", path(&self.tickers)),
            ("has_header", self.has_header.map(|b| b.to_string())),
            ("days", self.days.map(|v| v.to_string())),
            ("raw_day_length", self.raw_day_length.map(|v| v.to_string())),
            ("clip_length", self.clip_length.map(|v| v.to_string())),
            ("synth", self.synth.clone()),
            ("dt", join(&self.dt)),
            ("chi", join(&self.chi)),
            ("tau", join(&self.tau)),
            ("ds", self.ds.map(|v| v.to_string())),
            ("method", join(&methods)),
            ("lambda", self.lambda.map(|v| v.to_string())),
            ("top_k", self.top_k.map(|v| v.to_string())),
            ("ranking", self.ranking.clone()),
            ("bins", self.bins.map(|v| v.to_string())),
            ("out", path(&self.out)),
            ("seed", self.seed.map(|v| v.to_string())),
            ("jobs", self.jobs.map(|v| v.to_string())),
            ("dump_spins", self.dump_spins.map(|b| b.to_string())),
        ];
        entries
            .into_iter()
            .filter_map(|(k, v)| v.map(|v| (k.to_string(), v)))
            .collect()
    }
}

fn run(cli: &Cli) -> Result<bool> {
    let start = Instant::now();
    let mut pairs = match &cli.config {
        Some(path) => read_config_file(path)?,
        None => BTreeMap::new(),
    };
    let flags = cli.pairs();
    // a data source given on the command line replaces the file's
    if flags.contains_key("input") {
        pairs.remove("synth");
    }
    if flags.contains_key("synth") {
        for k in ["input", "tickers", "has_header", "days", "raw_day_length", "clip_length"] {
            pairs.remove(k);
        }
    }
    pairs.extend(flags);
    let cfg = RunConfig::from_pairs(&pairs)?;

    let data = pipeline::load_dataset(&cfg)?;
    let sweep = pipeline::run_sweep(&cfg, &data)?;
    let sweep_path = cfg.out.join("sweep.csv");
    report::write_sweep_csv(&sweep_path, &sweep)?;
    let report_path = cfg.out.join("report.txt");
    report::write_report(&report_path, &cfg, &data, &sweep, &[sweep_path], start.elapsed())?;

    let total = sweep.points().count();
    let failures = sweep.failures();
    eprintln!(
        "{} of {total} points ok; results in {}",
        total - failures,
        cfg.out.display()
    );
    Ok(failures == 0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
