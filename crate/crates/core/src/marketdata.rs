//! Bar data: ingestion, synthesis, chronological partitioning and the
//! rolling fold schedule.
//!
//! All intervals are half-open `[start, end)`. A trading day is a UTC
//! calendar date that carries at least one bar.

use std::path::Path;

use chrono::{DateTime, Datelike, Duration, NaiveDate, TimeZone, Utc, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: timestamp {timestamp} does not strictly follow the previous bar")]
    NonIncreasing { line: u64, timestamp: DateTime<Utc> },
    #[error("line {line}: invalid bar: {message}")]
    InvalidBar { line: u64, message: String },
    #[error("empty file: {0}")]
    EmptyFile(String),
    #[error("empty series")]
    EmptySeries,
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("range {name} lies outside the data span")]
    OutOfSpan { name: &'static str },
    #[error("segment {name} contains no bars")]
    EmptySegment { name: &'static str },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub timestamp: DateTime<Utc>,
    pub bid_open: f64,
    pub bid_high: f64,
    pub bid_low: f64,
    pub bid_close: f64,
    /// ask = bid + spread
    pub spread: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub volume: Option<f64>,
}

impl Bar {
    pub fn validate(&self) -> Result<(), String> {
        let finite = [
            self.bid_open,
            self.bid_high,
            self.bid_low,
            self.bid_close,
            self.spread,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err("non-finite price".into());
        }
        if self.bid_high < self.bid_open.max(self.bid_close) {
            return Err("high below max(open, close)".into());
        }
        if self.bid_low > self.bid_open.min(self.bid_close) {
            return Err("low above min(open, close)".into());
        }
        if self.spread < 0.0 {
            return Err("negative spread".into());
        }
        if let Some(v) = self.volume {
            if !(v >= 0.0) {
                return Err("negative volume".into());
            }
        }
        Ok(())
    }

    pub fn date(&self) -> NaiveDate {
        self.timestamp.date_naive()
    }

    pub fn ask_close(&self) -> f64 {
        self.bid_close + self.spread
    }
}

/// Half-open timestamp interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interval {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl Interval {
    pub fn new(start: DateTime<Utc>, end: DateTime<Utc>) -> Self {
        Self { start, end }
    }

    /// `[start-of(first), start-of(day after last))` for whole UTC dates.
    pub fn from_dates(first: NaiveDate, last_inclusive: NaiveDate) -> Self {
        Self {
            start: midnight(first),
            end: midnight(last_inclusive + Duration::days(1)),
        }
    }

    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        self.start <= t && t < self.end
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

pub fn midnight(date: NaiveDate) -> DateTime<Utc> {
    Utc.from_utc_datetime(&date.and_hms_opt(0, 0, 0).expect("midnight is valid"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketSeries {
    pub symbol: String,
    /// Seconds per bar.
    pub bar_period_secs: i64,
    bars: Vec<Bar>,
}

impl MarketSeries {
    /// Validates every bar and the strict timestamp ordering.
    pub fn new(symbol: impl Into<String>, bar_period_secs: i64, bars: Vec<Bar>) -> Result<Self, DataError> {
        if bars.is_empty() {
            return Err(DataError::EmptySeries);
        }
        for (i, bar) in bars.iter().enumerate() {
            bar.validate().map_err(|message| DataError::InvalidBar {
                line: i as u64 + 1,
                message,
            })?;
            if i > 0 && bar.timestamp <= bars[i - 1].timestamp {
                return Err(DataError::NonIncreasing {
                    line: i as u64 + 1,
                    timestamp: bar.timestamp,
                });
            }
        }
        Ok(Self {
            symbol: symbol.into(),
            bar_period_secs,
            bars,
        })
    }

    pub fn bars(&self) -> &[Bar] {
        &self.bars
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    pub fn first_timestamp(&self) -> DateTime<Utc> {
        self.bars[0].timestamp
    }

    pub fn last_timestamp(&self) -> DateTime<Utc> {
        self.bars[self.bars.len() - 1].timestamp
    }

    /// Bars with timestamps in `range`, as a new series.
    pub fn slice(&self, range: Interval) -> Option<MarketSeries> {
        let lo = self.bars.partition_point(|b| b.timestamp < range.start);
        let hi = self.bars.partition_point(|b| b.timestamp < range.end);
        if lo >= hi {
            return None;
        }
        Some(MarketSeries {
            symbol: self.symbol.clone(),
            bar_period_secs: self.bar_period_secs,
            bars: self.bars[lo..hi].to_vec(),
        })
    }

    /// Series without its first `k` bars (time-shifted start).
    pub fn skip(&self, k: usize) -> Option<MarketSeries> {
        if k >= self.bars.len() {
            return None;
        }
        Some(MarketSeries {
            symbol: self.symbol.clone(),
            bar_period_secs: self.bar_period_secs,
            bars: self.bars[k..].to_vec(),
        })
    }

    /// Sorted distinct trading dates.
    pub fn trading_dates(&self) -> Vec<NaiveDate> {
        let mut out: Vec<NaiveDate> = Vec::new();
        for b in &self.bars {
            let d = b.date();
            if out.last() != Some(&d) {
                out.push(d);
            }
        }
        out
    }

    pub fn into_bars(self) -> Vec<Bar> {
        self.bars
    }
}

/// Number of distinct UTC dates in `range` carrying at least one bar.
pub fn trading_days(series: &MarketSeries, range: Interval) -> usize {
    let mut count = 0;
    let mut last: Option<NaiveDate> = None;
    for b in series.bars().iter().filter(|b| range.contains(b.timestamp)) {
        let d = b.date();
        if last != Some(d) {
            count += 1;
            last = Some(d);
        }
    }
    count
}

pub const CSV_HEADER: [&str; 7] = [
    "timestamp_iso8601",
    "bid_open",
    "bid_high",
    "bid_low",
    "bid_close",
    "spread",
    "volume",
];

pub fn load_csv(path: impl AsRef<Path>, symbol: &str, bar_period_secs: i64) -> Result<MarketSeries, DataError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: display.clone(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| DataError::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if headers.is_empty() {
        return Err(DataError::EmptyFile(display));
    }
    let got: Vec<&str> = headers.iter().collect();
    if got != CSV_HEADER {
        return Err(DataError::Parse {
            line: 1,
            message: format!("expected header {:?}, found {:?}", CSV_HEADER.join(","), got.join(",")),
        });
    }

    let mut bars: Vec<Bar> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let record = record.map_err(|e| DataError::Parse {
            line,
            message: e.to_string(),
        })?;
        let field = |idx: usize| record.get(idx).unwrap_or("");
        let timestamp = DateTime::parse_from_rfc3339(field(0))
            .map_err(|e| DataError::Parse {
                line,
                message: format!("bad timestamp {:?}: {e}", field(0)),
            })?
            .with_timezone(&Utc);
        let num = |idx: usize, name: &str| -> Result<f64, DataError> {
            field(idx).parse::<f64>().map_err(|_| DataError::Parse {
                line,
                message: format!("bad {name} {:?}", field(idx)),
            })
        };
        let volume = match field(6) {
            "" => None,
            s => Some(s.parse::<f64>().map_err(|_| DataError::Parse {
                line,
                message: format!("bad volume {s:?}"),
            })?),
        };
        let bar = Bar {
            timestamp,
            bid_open: num(1, "bid_open")?,
            bid_high: num(2, "bid_high")?,
            bid_low: num(3, "bid_low")?,
            bid_close: num(4, "bid_close")?,
            spread: num(5, "spread")?,
            volume,
        };
        bar.validate()
            .map_err(|message| DataError::InvalidBar { line, message })?;
        if let Some(prev) = bars.last() {
            if bar.timestamp <= prev.timestamp {
                return Err(DataError::NonIncreasing {
                    line,
                    timestamp: bar.timestamp,
                });
            }
        }
        bars.push(bar);
    }
    if bars.is_empty() {
        return Err(DataError::EmptyFile(display));
    }
    MarketSeries::new(symbol, bar_period_secs, bars)
}

/// Symbol from the file stem, bar period from the smallest timestamp gap
/// (0 for a single bar).
pub fn load_csv_auto(path: impl AsRef<Path>) -> Result<MarketSeries, DataError> {
    let path = path.as_ref();
    let symbol = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let series = load_csv(path, &symbol, 0)?;
    let period = series
        .bars()
        .windows(2)
        .map(|w| (w[1].timestamp - w[0].timestamp).num_seconds())
        .min()
        .unwrap_or(0);
    MarketSeries::new(symbol, period, series.into_bars())
}

pub fn write_csv(series: &MarketSeries, mut out: impl std::io::Write) -> std::io::Result<()> {
    writeln!(out, "{}", CSV_HEADER.join(","))?;
    for b in series.bars() {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            b.timestamp.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            b.bid_open,
            b.bid_high,
            b.bid_low,
            b.bid_close,
            b.spread,
            b.volume.map(|v| v.to_string()).unwrap_or_default()
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeConfig {
    /// Per-bar log drift.
    pub drift: f64,
    /// Per-bar log volatility.
    pub volatility: f64,
    pub mean_spread: f64,
    /// Per-bar pull of log price toward its starting level (0 = pure random walk).
    #[serde(default)]
    pub mean_reversion: f64,
}

fn default_symbol() -> String {
    "SYNTH".into()
}
fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2022, 1, 1).expect("valid date")
}
fn default_price() -> f64 {
    100.0
}
fn default_spread_dispersion() -> f64 {
    0.25
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    /// Number of trading days to generate.
    pub n_days: usize,
    pub bars_per_day: usize,
    pub regimes: Vec<RegimeConfig>,
    /// Per-bar probability of switching to another regime.
    pub regime_switch_prob: f64,
    #[serde(default = "default_symbol")]
    pub symbol: String,
    #[serde(default = "default_start")]
    pub start_date: NaiveDate,
    #[serde(default = "default_price")]
    pub initial_price: f64,
    /// Log-sd of the lognormal spread around each regime's mean.
    #[serde(default = "default_spread_dispersion")]
    pub spread_dispersion: f64,
    #[serde(default = "default_true")]
    pub skip_weekends: bool,
    /// Optional seed; the caller's seed argument wins when both are present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Dated regime overrides: from each date on, the listed regime is
    /// forced and random switching is off. Sorted by date.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub regime_schedule: Vec<ScheduledRegime>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduledRegime {
    pub from: NaiveDate,
    pub regime: usize,
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: &str| Err(DataError::InvalidConfig(m.to_string()));
        if self.n_days < 1 {
            return bad("n_days must be >= 1");
        }
        if self.bars_per_day < 1 || 86_400 % self.bars_per_day != 0 {
            return bad("bars_per_day must divide 86400 seconds");
        }
        if self.regimes.is_empty() {
            return bad("at least one regime required");
        }
        for r in &self.regimes {
            if !(r.volatility >= 0.0) || !r.volatility.is_finite() {
                return bad("volatility must be >= 0");
            }
            if !(r.mean_spread >= 0.0) {
                return bad("mean_spread must be >= 0");
            }
            if !r.drift.is_finite() || !(0.0..1.0).contains(&r.mean_reversion) {
                return bad("drift must be finite and mean_reversion in [0, 1)");
            }
        }
        if !(0.0..=1.0).contains(&self.regime_switch_prob) {
            return bad("regime_switch_prob must be in [0, 1]");
        }
        if !(self.initial_price > 0.0) {
            return bad("initial_price must be > 0");
        }
        if !(self.spread_dispersion >= 0.0) {
            return bad("spread_dispersion must be >= 0");
        }
        if self.regime_schedule.iter().any(|r| r.regime >= self.regimes.len()) {
            return bad("regime_schedule names an unknown regime");
        }
        if self.regime_schedule.windows(2).any(|w| w[0].from >= w[1].from) {
            return bad("regime_schedule dates must be increasing");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSeries {
    pub series: MarketSeries,
    /// Regime index active on each bar.
    pub regimes: Vec<usize>,
}

/// Regime-switching geometric random walk with lognormal spreads.
///
/// Volatility of zero is accepted so degenerate constant-price paths can be
/// produced for tests.
pub fn generate_synthetic(config: &SyntheticConfig, seed: u64) -> Result<SyntheticSeries, DataError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let period = 86_400 / config.bars_per_day as i64;
    let n_regimes = config.regimes.len();

    let mut bars = Vec::with_capacity(config.n_days * config.bars_per_day);
    let mut labels = Vec::with_capacity(bars.capacity());
    let mut regime = 0usize;
    // log price relative to the initial price, so a flat regime stays exact
    let mut x = 0.0f64;
    let mut date = config.start_date;
    let mut produced_days = 0;
    while produced_days < config.n_days {
        if config.skip_weekends && matches!(date.weekday(), Weekday::Sat | Weekday::Sun) {
            date = date.succ_opt().expect("date in range");
            continue;
        }
        let day_start = midnight(date);
        let forced = config.regime_schedule.iter().rev().find(|r| r.from <= date).map(|r| r.regime);
        for k in 0..config.bars_per_day {
            let switch: f64 = rng.random();
            if let Some(r) = forced {
                regime = r;
            } else if n_regimes > 1 && switch < config.regime_switch_prob {
                let offset = rng.random_range(1..n_regimes);
                regime = (regime + offset) % n_regimes;
            }
            let r = &config.regimes[regime];
            let z: f64 = StandardNormal.sample(&mut rng);
            let wick_hi: f64 = StandardNormal.sample(&mut rng);
            let wick_lo: f64 = StandardNormal.sample(&mut rng);
            let zs: f64 = StandardNormal.sample(&mut rng);

            let open = config.initial_price * x.exp();
            x += r.drift + r.volatility * z - r.mean_reversion * x;
            let close = config.initial_price * x.exp();
            let high = open.max(close) * (0.5 * r.volatility * wick_hi.abs()).exp();
            let low = open.min(close) * (-0.5 * r.volatility * wick_lo.abs()).exp();
            let sd = config.spread_dispersion;
            let spread = r.mean_spread * (sd * zs - 0.5 * sd * sd).exp();
            let volume = (rng.random_range(1..1000)) as f64;

            bars.push(Bar {
                timestamp: day_start + Duration::seconds(period * k as i64),
                bid_open: open,
                bid_high: high,
                bid_low: low,
                bid_close: close,
                spread,
                volume: Some(volume),
            });
            labels.push(regime);
        }
        produced_days += 1;
        date = date.succ_opt().expect("date in range");
    }
    Ok(SyntheticSeries {
        series: MarketSeries::new(config.symbol.clone(), period, bars)?,
        regimes: labels,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    #[serde(rename = "is")]
    pub is_range: Interval,
    #[serde(rename = "wfa")]
    pub wfa_range: Interval,
    #[serde(rename = "oos")]
    pub oos_range: Interval,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        for (name, r) in [("is", self.is_range), ("wfa", self.wfa_range), ("oos", self.oos_range)] {
            if r.is_empty() {
                return Err(DataError::InvalidSplit(format!("{name} range is empty")));
            }
        }
        if self.is_range.end > self.wfa_range.start || self.wfa_range.end > self.oos_range.start {
            return Err(DataError::InvalidSplit(
                "ranges must be disjoint and ordered is < wfa < oos".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Partitioned {
    pub is: MarketSeries,
    pub wfa: MarketSeries,
    pub oos: MarketSeries,
}

pub fn partition(series: &MarketSeries, split: &SplitSpec) -> Result<Partitioned, DataError> {
    split.validate()?;
    let first = series.first_timestamp();
    let last = series.last_timestamp();
    let take = |name: &'static str, r: Interval| -> Result<MarketSeries, DataError> {
        if r.end <= first || r.start > last {
            return Err(DataError::OutOfSpan { name });
        }
        series.slice(r).ok_or(DataError::EmptySegment { name })
    };
    Ok(Partitioned {
        is: take("is", split.is_range)?,
        wfa: take("wfa", split.wfa_range)?,
        oos: take("oos", split.oos_range)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    pub index: usize,
    pub train_range: Interval,
    pub purge_range: Interval,
    pub test_range: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSchedule {
    pub folds: Vec<Fold>,
    pub purge_days: usize,
    /// `calendar_months` or `trading_days`.
    pub block_rule: String,
}

/// Rolling schedule over `n_folds + 1` contiguous blocks: fold `i` trains on
/// block `i` and tests on block `i + 1` after dropping its first `purge_days`
/// trading days.
///
/// Blocks are whole calendar months when the WFA span is a whole number of
/// months divisible by `n_folds + 1`; otherwise blocks are equal counts of
/// trading days and the last block absorbs the remainder.
pub fn build_fold_schedule(wfa: &MarketSeries, n_folds: usize, purge_days: usize) -> Result<FoldSchedule, DataError> {
    if n_folds < 1 {
        return Err(DataError::InsufficientData("n_folds must be >= 1".into()));
    }
    let dates = wfa.trading_dates();
    let n_blocks = n_folds + 1;
    if dates.len() < n_blocks {
        return Err(DataError::InsufficientData(format!(
            "{} trading days cannot form {} blocks",
            dates.len(),
            n_blocks
        )));
    }
    let first = dates[0];
    let last = *dates.last().expect("non-empty");
    let span_end = midnight(last + Duration::days(1));

    let month_index = |d: NaiveDate| d.year() as i64 * 12 + d.month0() as i64;
    let n_months = month_index(last) - month_index(first) + 1;
    let month_aligned = covers_whole_months(first, last)
        && n_months % n_blocks as i64 == 0
        && n_months >= n_blocks as i64;

    let (block_starts, rule): (Vec<DateTime<Utc>>, &str) = if month_aligned {
        let per = n_months / n_blocks as i64;
        let starts = (0..n_blocks as i64)
            .map(|b| {
                let m = month_index(first) + b * per;
                midnight(NaiveDate::from_ymd_opt((m / 12) as i32, (m % 12) as u32 + 1, 1).expect("valid month"))
            })
            .collect();
        (starts, "calendar_months")
    } else {
        let per = dates.len() / n_blocks;
        let starts = (0..n_blocks).map(|b| midnight(dates[b * per])).collect();
        (starts, "trading_days")
    };

    let mut folds = Vec::with_capacity(n_folds);
    for i in 0..n_folds {
        let train = Interval::new(block_starts[i], block_starts[i + 1]);
        let block_end = if i + 2 < n_blocks { block_starts[i + 2] } else { span_end };
        let test_block_dates: Vec<NaiveDate> = dates
            .iter()
            .copied()
            .filter(|d| {
                let t = midnight(*d);
                t >= block_starts[i + 1] && t < block_end
            })
            .collect();
        let train_days = dates
            .iter()
            .filter(|d| train.contains(midnight(**d)))
            .count();
        if train_days == 0 {
            return Err(DataError::InsufficientData(format!("fold {} has an empty train window", i + 1)));
        }
        if test_block_dates.len() <= purge_days {
            return Err(DataError::InsufficientData(format!(
                "fold {} has no test days left after a {}-day purge",
                i + 1,
                purge_days
            )));
        }
        let purge_end = if purge_days == 0 {
            block_starts[i + 1]
        } else {
            midnight(test_block_dates[purge_days - 1] + Duration::days(1))
        };
        folds.push(Fold {
            index: i + 1,
            train_range: train,
            purge_range: Interval::new(block_starts[i + 1], purge_end),
            test_range: Interval::new(purge_end, block_end),
        });
    }
    Ok(FoldSchedule {
        folds,
        purge_days,
        block_rule: rule.to_string(),
    })
}

// Data starting in the first week of a month and ending in the last week of
// a month is treated as covering those months entirely (weekends and
// holidays may hide the literal first/last calendar day).
fn covers_whole_months(first: NaiveDate, last: NaiveDate) -> bool {
    let next_month_start = last
        .with_day(1)
        .and_then(|d| d.checked_add_months(chrono::Months::new(1)))
        .expect("valid month");
    first.day() <= 7 && (next_month_start - last).num_days() <= 7
}

/// Content fingerprint of a segment: bar count plus SHA-256 over the bars.
pub fn fingerprint(series: &MarketSeries) -> (usize, String) {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(series.symbol.as_bytes());
    for b in series.bars() {
        h.update(b.timestamp.timestamp().to_le_bytes());
        for v in [b.bid_open, b.bid_high, b.bid_low, b.bid_close, b.spread, b.volume.unwrap_or(-1.0)] {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    (series.len(), hex::encode(h.finalize()))
}
