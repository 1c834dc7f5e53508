use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use volising::netexport::Ranking;
use volising::Method;

/// Keys accepted in the config file; flags map onto the same names.
pub const KEYS: &[&str] = &[
    "input",
    "tickers",
    "has_header",
    "days",
    "raw_day_length",
    "clip_length",
    "synth",
    "dt",
    "chi",
    "tau",
    "ds",
    "method",
    "lambda",
    "top_k",
    "ranking",
    "bins",
    "out",
    "seed",
    "jobs",
    "dump_spins",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub stocks: usize,
    pub days: usize,
    pub day_length: usize,
    pub blocks: Vec<usize>,
    pub common: f64,
    pub sector: Option<f64>,
}

impl FromStr for SynthSpec {
    type Err = anyhow::Error;

    /// `stocks=30,days=5,day_length=4000,blocks=2:2:26,common=1.0,sector=0.2`;
    /// `blocks` defaults to one stock per sector.
    fn from_str(s: &str) -> Result<Self> {
        let mut fields = BTreeMap::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| anyhow!("synth field {part:?} is not key=value"))?;
            if fields.insert(k.trim(), v.trim()).is_some() {
                bail!("synth field {k:?} given twice");
            }
        }
        let take = |k: &str| fields.get(k).copied();
        let stocks: usize = parse_field("synth stocks", take("stocks").ok_or_else(|| anyhow!("synth needs stocks="))?)?;
        let days = parse_field("synth days", take("days").unwrap_or("5"))?;
        let day_length = parse_field("synth day_length", take("day_length").unwrap_or("4000"))?;
        let common = parse_field("synth common", take("common").unwrap_or("1.0"))?;
        let sector = take("sector").map(|v| parse_field("synth sector", v)).transpose()?;
        let blocks = match take("blocks") {
            Some(b) => b
                .split(':')
                .map(|x| parse_field("synth block", x))
                .collect::<Result<Vec<usize>>>()?,
            None => vec![1; stocks],
        };
        for k in fields.keys() {
            if !["stocks", "days", "day_length", "blocks", "common", "sector"].contains(k) {
                bail!("unknown synth field {k:?}");
            }
        }
        Ok(Self {
            stocks,
            days,
            day_length,
            blocks,
            common,
            sector,
        })
    }
}

impl fmt::Display for SynthSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let blocks: Vec<String> = self.blocks.iter().map(|b| b.to_string()).collect();
        write!(
            f,
            "stocks={},days={},day_length={},blocks={},common={}",
            self.stocks,
            self.days,
            self.day_length,
            blocks.join(":"),
            self.common
        )?;
        if let Some(s) = self.sector {
            write!(f, ",sector={s}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Ticks {
        input: PathBuf,
        tickers: Option<PathBuf>,
        has_header: bool,
        days: Option<usize>,
        raw_day_length: usize,
        clip_length: usize,
    },
    Synth(SynthSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub source: Source,
    pub dts: Vec<usize>,
    pub chis: Vec<f64>,
    /// Lags in seconds; empty when only equilibrium inference is requested.
    pub taus: Vec<usize>,
    pub ds: usize,
    pub methods: Vec<Method>,
    pub lambda: f64,
    pub top_k: usize,
    pub ranking: Ranking,
    pub bins: usize,
    pub out: PathBuf,
    pub seed: u64,
    pub jobs: usize,
    pub dump_spins: bool,
}

fn parse_field<T: FromStr>(what: &str, v: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    v.trim().parse().map_err(|e| anyhow!("invalid {what} {v:?}: {e}"))
}

fn parse_list<T: FromStr>(what: &str, v: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    v.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| parse_field(what, x))
        .collect()
}

/// Drops repeated values, keeping first occurrences in order.
fn dedup<T: PartialEq>(xs: Vec<T>) -> Vec<T> {
    let mut out: Vec<T> = Vec::with_capacity(xs.len());
    for x in xs {
        if !out.contains(&x) {
            out.push(x);
        }
    }
    out
}

fn parse_bool(what: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        other => bail!("invalid {what} {other:?}: expected true or false"),
    }
}

/// Reads `key = value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut pairs = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("config line {}: expected key = value", n + 1))?;
        let key = k.trim().replace('-', "_");
        if !KEYS.contains(&key.as_str()) {
            bail!("config line {}: unknown key {key:?}", n + 1);
        }
        if pairs.insert(key.clone(), v.trim().to_string()).is_some() {
            bail!("config line {}: key {key:?} given twice", n + 1);
        }
    }
    Ok(pairs)
}

pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    parse_config_text(&text).with_context(|| format!("in config {}", path.display()))
}

impl RunConfig {
    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self> {
        let get = |k: &str| pairs.get(k).map(String::as_str);

        let source = match (get("input"), get("synth")) {
            (Some(_), Some(_)) => bail!("give either input or synth, not both"),
            (None, None) => bail!("no data: give input (with optional tickers) or synth"),
            (None, Some(spec)) => Source::Synth(spec.parse()?),
            (Some(input), None) => Source::Ticks {
                input: PathBuf::from(input),
                tickers: get("tickers").map(PathBuf::from),
                has_header: get("has_header").map(|v| parse_bool("has_header", v)).transpose()?.unwrap_or(false),
                days: get("days").map(|v| parse_field("days", v)).transpose()?,
                raw_day_length: get("raw_day_length")
                    .map(|v| parse_field("raw_day_length", v))
                    .transpose()?
                    .unwrap_or(23_400),
                clip_length: get("clip_length")
                    .map(|v| parse_field("clip_length", v))
                    .transpose()?
                    .unwrap_or(volising::ingest::DEFAULT_CLIP_LENGTH),
            },
        };
        if matches!(source, Source::Synth(_)) {
            for k in ["tickers", "has_header", "days", "raw_day_length", "clip_length"] {
                if pairs.contains_key(k) {
                    bail!("{k} only applies to tick input, not synth");
                }
            }
        }

        let methods: Vec<Method> = dedup(get("method").map(|v| parse_list("method", v)).transpose()?.unwrap_or_default());

        let cfg = Self {
            source,
            dts: dedup(get("dt").map(|v| parse_list("dt", v)).transpose()?.unwrap_or_default()),
            chis: dedup(get("chi").map(|v| parse_list("chi", v)).transpose()?.unwrap_or_default()),
            taus: dedup(get("tau").map(|v| parse_list("tau", v)).transpose()?.unwrap_or_default()),
            ds: get("ds").map(|v| parse_field("ds", v)).transpose()?.unwrap_or(1),
            methods,
            lambda: get("lambda").map(|v| parse_field("lambda", v)).transpose()?.unwrap_or(0.0),
            top_k: get("top_k")
                .map(|v| parse_field("top_k", v))
                .transpose()?
                .ok_or_else(|| anyhow!("top_k (number of network edges) is required"))?,
            ranking: get("ranking").map(|v| parse_field("ranking", v)).transpose()?.unwrap_or_default(),
            bins: get("bins").map(|v| parse_field("bins", v)).transpose()?.unwrap_or(50),
            out: get("out").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out")),
            seed: get("seed").map(|v| parse_field("seed", v)).transpose()?.unwrap_or(0),
            jobs: get("jobs")
                .map(|v| parse_field("jobs", v))
                .transpose()?
                .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())),
            dump_spins: get("dump_spins").map(|v| parse_bool("dump_spins", v)).transpose()?.unwrap_or(false),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            bail!("at least one method is required (eq, syn, asyn)");
        }
        if self.dts.is_empty() || self.chis.is_empty() {
            bail!("at least one dt and one chi value are required");
        }
        if self.methods.iter().any(|m| m.is_directed()) && self.taus.is_empty() {
            bail!("tau is required when syn or asyn is requested");
        }
        if let Some(chi) = self.chis.iter().find(|c| !c.is_finite() || **c < 0.0) {
            bail!("chi must be finite and non-negative, got {chi}");
        }
        if self.dts.contains(&0) || self.ds == 0 {
            bail!("dt and ds must be positive");
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            bail!("lambda must be finite and non-negative");
        }
        if self.top_k == 0 || self.bins == 0 || self.jobs == 0 {
            bail!("top_k, bins and jobs must be positive");
        }
        Ok(())
    }

    /// Lags to run: one entry per requested tau, or a single `None`.
    pub fn tau_points(&self) -> Vec<Option<usize>> {
        if self.taus.is_empty() {
            vec![None]
        } else {
            self.taus.iter().copied().map(Some).collect()
        }
    }

    /// Canonical `key = value` listing.
    pub fn describe(&self) -> Vec<(String, String)> {
        fn join<T: ToString>(xs: &[T]) -> String {
            xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
        }
        let mut out = Vec::new();
        match &self.source {
            Source::Ticks {
                input,
                tickers,
                has_header,
                days,
                raw_day_length,
                clip_length,
            } => {
                out.push(("input".into(), input.display().to_string()));
                if let Some(t) = tickers {
                    out.push(("tickers".into(), t.display().to_string()));
                }
                out.push(("has_header".into(), has_header.to_string()));
                if let Some(d) = days {
                    out.push(("days".into(), d.to_string()));
                }
                out.push(("raw_day_length".into(), raw_day_length.to_string()));
                out.push(("clip_length".into(), clip_length.to_string()));
            }
            Source::Synth(spec) => out.push(("synth".into(), spec.to_string())),
        }
        out.push(("dt".into(), join(&self.dts)));
        out.push(("chi".into(), join(&self.chis)));
        out.push(("tau".into(), join(&self.taus)));
        out.push(("ds".into(), self.ds.to_string()));
        let methods: Vec<&str> = self.methods.iter().map(|m| m.tag()).collect();
        out.push(("method".into(), methods.join(",")));
        out.push(("lambda".into(), self.lambda.to_string()));
        out.push(("top_k".into(), self.top_k.to_string()));
        let ranking = match self.ranking {
            Ranking::Signed => "signed",
            Ranking::Absolute => "absolute",
        };
        out.push(("ranking".into(), ranking.into()));
        out.push(("bins".into(), self.bins.to_string()));
        out.push(("out".into(), self.out.display().to_string()));
        out.push(("seed".into(), self.seed.to_string()));
        out.push(("jobs".into(), self.jobs.to_string()));
        out.push(("dump_spins".into(), self.dump_spins.to_string()));
        out
    }
}
