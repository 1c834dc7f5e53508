//! Tick ingestion: CSV parsing, central-window clipping and dense per-second
//! volume grids.

use std::collections::HashMap;
use std::io::{BufRead, Read, Write};

use crate::error::{Error, Result};

/// Default length of the clipped trading day, in seconds.
pub const DEFAULT_CLIP_LENGTH: usize = 10_000;

/// One trade event. Prices are not carried.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TradeTick {
    pub stock: String,
    pub day: u32,
    /// Second of the raw trading day.
    pub second: u32,
    pub volume: u64,
}

/// Column positions of the four tick fields in a CSV record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColumnMap {
    pub ticker: usize,
    pub day: usize,
    pub second: usize,
    pub volume: usize,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            ticker: 0,
            day: 1,
            second: 2,
            volume: 3,
        }
    }
}

impl ColumnMap {
    fn width(&self) -> usize {
        1 + self.ticker.max(self.day).max(self.second).max(self.volume)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TickFormat {
    pub columns: ColumnMap,
    pub has_header: bool,
}

/// Parses `ticker,day,second,volume` records.
///
/// Line numbers in errors are 1-based physical lines of the input, so a header
/// line counts as line 1.
pub fn parse_ticks<R: Read>(input: R, format: &TickFormat) -> Result<Vec<TradeTick>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(format.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(input);

    let cols = format.columns;
    let mut ticks = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        let more = reader.read_record(&mut record).map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::Parse {
                line,
                reason: e.to_string(),
            }
        })?;
        if !more {
            break;
        }
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() < cols.width() {
            return Err(Error::Parse {
                line,
                reason: format!("expected at least {} fields, found {}", cols.width(), record.len()),
            });
        }
        let ticker = &record[cols.ticker];
        if ticker.is_empty() {
            return Err(Error::Parse {
                line,
                reason: "empty ticker".into(),
            });
        }
        let day = parse_field(&record[cols.day], "day", line)?;
        let second = parse_field(&record[cols.second], "second", line)?;
        let volume = parse_field(&record[cols.volume], "volume", line)?;
        ticks.push(TradeTick {
            stock: ticker.to_string(),
            day: u32::try_from(day).map_err(|_| Error::InvalidTick {
                line,
                reason: format!("day {day} out of range"),
            })?,
            second: u32::try_from(second).map_err(|_| Error::InvalidTick {
                line,
                reason: format!("second {second} out of range"),
            })?,
            volume: volume as u64,
        });
    }
    Ok(ticks)
}

fn parse_field(raw: &str, name: &str, line: u64) -> Result<i64> {
    let value: i64 = raw.parse().map_err(|_| Error::Parse {
        line,
        reason: format!("{name} is not an integer: {raw:?}"),
    })?;
    if value < 0 {
        return Err(Error::InvalidTick {
            line,
            reason: format!("negative {name} {value}"),
        });
    }
    Ok(value)
}

/// Reads a ticker list: one ticker per line, order defines the stock index.
/// Blank lines and `#` comments are ignored.
pub fn read_ticker_list<R: BufRead>(input: R) -> Result<Vec<String>> {
    let mut seen = HashMap::new();
    let mut tickers = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        let ticker = line.trim();
        if ticker.is_empty() || ticker.starts_with('#') {
            continue;
        }
        if let Some(first) = seen.insert(ticker.to_string(), n + 1) {
            return Err(Error::validation(format!(
                "ticker {ticker} listed twice (lines {first} and {})",
                n + 1
            )));
        }
        tickers.push(ticker.to_string());
    }
    Ok(tickers)
}

/// Dense per-second traded volumes, laid out `[stock][day][second]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeGrid {
    stocks: Vec<String>,
    days: usize,
    day_length: usize,
    volumes: Vec<u32>,
    avg_rate: Vec<f64>,
}

impl VolumeGrid {
    pub fn new(stocks: Vec<String>, days: usize, day_length: usize, volumes: Vec<u32>) -> Result<Self> {
        if day_length == 0 {
            return Err(Error::validation("day length must be positive"));
        }
        let expected = stocks.len() * days * day_length;
        if volumes.len() != expected {
            return Err(Error::validation(format!(
                "volume buffer has {} cells, expected {} stocks x {} days x {} s = {expected}",
                volumes.len(),
                stocks.len(),
                days,
                day_length
            )));
        }
        let mut grid = Self {
            stocks,
            days,
            day_length,
            volumes,
            avg_rate: Vec::new(),
        };
        grid.avg_rate = (0..grid.n_stocks()).map(|i| grid.rate_of(i)).collect();
        Ok(grid)
    }

    fn rate_of(&self, stock: usize) -> f64 {
        let cells = self.days * self.day_length;
        if cells == 0 {
            return 0.0;
        }
        let total: u64 = self.stock_series(stock).iter().map(|&v| v as u64).sum();
        total as f64 / cells as f64
    }

    pub fn stocks(&self) -> &[String] {
        &self.stocks
    }

    pub fn n_stocks(&self) -> usize {
        self.stocks.len()
    }

    pub fn days(&self) -> usize {
        self.days
    }

    pub fn day_length(&self) -> usize {
        self.day_length
    }

    pub fn volumes(&self) -> &[u32] {
        &self.volumes
    }

    /// Per-second volumes of one stock on one day.
    pub fn series(&self, stock: usize, day: usize) -> &[u32] {
        let start = (stock * self.days + day) * self.day_length;
        &self.volumes[start..start + self.day_length]
    }

    /// All days of one stock, concatenated.
    pub fn stock_series(&self, stock: usize) -> &[u32] {
        let span = self.days * self.day_length;
        &self.volumes[stock * span..(stock + 1) * span]
    }

    /// Average traded volume per second, V_av.
    pub fn average_volume_rate(&self, stock: usize) -> f64 {
        self.avg_rate[stock]
    }

    pub fn avg_rates(&self) -> &[f64] {
        &self.avg_rate
    }

    pub fn total_volume(&self) -> u64 {
        self.volumes.iter().map(|&v| v as u64).sum()
    }

    /// Keeps the central `clip_length` seconds of every day.
    pub fn clip_central(&self, clip_length: usize) -> Result<VolumeGrid> {
        let start = window_start(self.day_length, clip_length)?;
        let mut volumes = Vec::with_capacity(self.n_stocks() * self.days * clip_length);
        for i in 0..self.n_stocks() {
            for d in 0..self.days {
                volumes.extend_from_slice(&self.series(i, d)[start..start + clip_length]);
            }
        }
        VolumeGrid::new(self.stocks.clone(), self.days, clip_length, volumes)
    }

    /// Writes every non-zero cell as a `ticker,day,second,volume` line, the
    /// format [`parse_ticks`] reads with the default column map.
    pub fn write_ticks<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        for (i, ticker) in self.stocks.iter().enumerate() {
            for d in 0..self.days {
                for (t, &v) in self.series(i, d).iter().enumerate() {
                    if v > 0 {
                        writer.write_record([ticker.as_str(), &d.to_string(), &t.to_string(), &v.to_string()])?;
                    }
                }
            }
        }
        writer.flush()?;
        Ok(())
    }
}

fn window_start(raw_day_length: usize, clip_length: usize) -> Result<usize> {
    if clip_length == 0 || clip_length > raw_day_length {
        return Err(Error::validation(format!(
            "clip length {clip_length} must be in 1..={raw_day_length}"
        )));
    }
    Ok((raw_day_length - clip_length) / 2)
}

/// A gridded dataset plus counts of ticks that did not make it into the grid.
#[derive(Debug, Clone)]
pub struct Gridded {
    pub grid: VolumeGrid,
    /// Ticks whose ticker is not in the stock list.
    pub unknown_ticker: usize,
    /// Ticks outside the central window.
    pub outside_window: usize,
}

/// Builds a [`VolumeGrid`] from raw ticks, keeping only the centered window of
/// `clip_length` seconds of each `raw_day_length`-second day. Same-second
/// volumes are summed.
pub fn clip_and_grid(
    ticks: &[TradeTick],
    stocks: &[String],
    days: usize,
    raw_day_length: usize,
    clip_length: usize,
) -> Result<Gridded> {
    let start = window_start(raw_day_length, clip_length)?;
    let index: HashMap<&str, usize> = stocks.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    if index.len() != stocks.len() {
        return Err(Error::validation("duplicate tickers in stock list"));
    }

    let mut volumes = vec![0u32; stocks.len() * days * clip_length];
    let mut unknown_ticker = 0;
    let mut outside_window = 0;
    for tick in ticks {
        let Some(&i) = index.get(tick.stock.as_str()) else {
            unknown_ticker += 1;
            continue;
        };
        let day = tick.day as usize;
        if day >= days {
            return Err(Error::validation(format!(
                "tick for {} on day {day}, but only {days} days declared",
                tick.stock
            )));
        }
        let second = tick.second as usize;
        if second >= raw_day_length {
            return Err(Error::validation(format!(
                "tick for {} at second {second}, beyond day length {raw_day_length}",
                tick.stock
            )));
        }
        if second < start || second >= start + clip_length {
            outside_window += 1;
            continue;
        }
        let cell = &mut volumes[(i * days + day) * clip_length + (second - start)];
        *cell = u32::try_from(*cell as u64 + tick.volume)
            .map_err(|_| Error::validation(format!("volume overflow for {} day {day} second {second}", tick.stock)))?;
    }
    let grid = VolumeGrid::new(stocks.to_vec(), days, clip_length, volumes)?;
    Ok(Gridded {
        grid,
        unknown_ticker,
        outside_window,
    })
}

/// Average traded volume per second of one stock.
pub fn average_volume_rate(grid: &VolumeGrid, stock: usize) -> f64 {
    grid.average_volume_rate(stock)
}
