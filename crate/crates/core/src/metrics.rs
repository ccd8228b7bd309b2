//! Performance, risk and feasibility metrics, and benchmark evaluation.
//!
//! Undefined quantities (zero-variance Sharpe, zero-drawdown Calmar, cost
//! cushion with no trades) are `None`, never NaN.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::engine::{SessionResult, TradeRecord};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("non-positive equity {0}")]
    NonPositiveEquity(f64),
    #[error("sharpe undefined: zero return variance")]
    UndefinedSharpe,
    #[error("calmar undefined: zero drawdown")]
    UndefinedCalmar,
    #[error("cagr inputs must be positive")]
    InvalidCagrInput,
    #[error("cost cushion undefined: no trades")]
    NoTrades,
    #[error("invalid benchmark: {0}")]
    InvalidBenchmark(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    Daily,
    PerBar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    pub sampling: Sampling,
    pub periods_per_year: f64,
    /// Per-period risk-free rate.
    pub risk_free: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            sampling: Sampling::Daily,
            periods_per_year: 252.0,
            risk_free: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquityPoint {
    pub timestamp: DateTime<Utc>,
    pub equity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    pub returns: Vec<f64>,
    pub sampling: Sampling,
    pub periods_per_year: f64,
}

/// Last equity of each UTC date, in order.
pub fn daily_last(curve: &[EquityPoint]) -> Vec<EquityPoint> {
    let mut out: Vec<EquityPoint> = Vec::new();
    let mut last_date: Option<NaiveDate> = None;
    for p in curve {
        let d = p.timestamp.date_naive();
        if last_date == Some(d) {
            *out.last_mut().expect("date seen") = *p;
        } else {
            out.push(*p);
            last_date = Some(d);
        }
    }
    out
}

/// Log returns `ln(E_t / E_{t-1})`, optionally after daily resampling.
pub fn returns_from_equity(curve: &[EquityPoint], sampling: Sampling, periods_per_year: f64) -> Result<ReturnSeries, MetricsError> {
    let sampled = match sampling {
        Sampling::Daily => daily_last(curve),
        Sampling::PerBar => curve.to_vec(),
    };
    log_returns(&sampled.iter().map(|p| p.equity).collect::<Vec<_>>()).map(|returns| ReturnSeries {
        returns,
        sampling,
        periods_per_year,
    })
}

pub fn log_returns(equity: &[f64]) -> Result<Vec<f64>, MetricsError> {
    if equity.len() < 2 {
        return Err(MetricsError::TooFewSamples {
            need: 2,
            got: equity.len(),
        });
    }
    if let Some(&bad) = equity.iter().find(|e| !(**e > 0.0)) {
        return Err(MetricsError::NonPositiveEquity(bad));
    }
    Ok(equity.windows(2).map(|w| (w[1] / w[0]).ln()).collect())
}

/// Annualized Sharpe with sample standard deviation (T - 1 denominator).
pub fn sharpe(rs: &ReturnSeries, risk_free: f64) -> Result<f64, MetricsError> {
    let r = &rs.returns;
    if r.len() < 2 {
        return Err(MetricsError::TooFewSamples { need: 2, got: r.len() });
    }
    let n = r.len() as f64;
    let mean = r.iter().sum::<f64>() / n;
    let var = r.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    // Relative floor: a constant series can carry rounding noise in `mean`.
    if !(sd > 1e-14 * mean.abs().max(f64::MIN_POSITIVE)) || sd == 0.0 {
        return Err(MetricsError::UndefinedSharpe);
    }
    Ok((mean - risk_free) / sd * rs.periods_per_year.sqrt())
}

pub fn cagr(e_start: f64, e_end: f64, years: f64) -> Result<f64, MetricsError> {
    if !(e_start > 0.0 && e_end > 0.0 && years > 0.0) {
        return Err(MetricsError::InvalidCagrInput);
    }
    Ok((e_end / e_start).powf(1.0 / years) - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Drawdown {
    pub mdd: f64,
    pub peak_index: usize,
    pub trough_index: usize,
}

/// Single-pass running-peak maximum drawdown.
pub fn max_drawdown(equity: &[f64]) -> Drawdown {
    let mut best = Drawdown {
        mdd: 0.0,
        peak_index: 0,
        trough_index: 0,
    };
    let Some(&first) = equity.first() else {
        return best;
    };
    let mut peak = first;
    let mut peak_index = 0;
    for (i, &e) in equity.iter().enumerate() {
        if e > peak {
            peak = e;
            peak_index = i;
        }
        let dd = (peak - e) / peak;
        if dd > best.mdd {
            best = Drawdown {
                mdd: dd,
                peak_index,
                trough_index: i,
            };
        }
    }
    best
}

pub fn calmar(cagr: f64, mdd: f64) -> Result<f64, MetricsError> {
    if !(mdd > 0.0) {
        return Err(MetricsError::UndefinedCalmar);
    }
    Ok(cagr / mdd)
}

pub fn cost_cushion(trades: &[TradeRecord]) -> Result<f64, MetricsError> {
    if trades.is_empty() {
        return Err(MetricsError::NoTrades);
    }
    Ok(trades.iter().map(|t| t.profit).sum::<f64>() / trades.len() as f64)
}

/// Fragile when the cushion does not cover the assumed per-trade cost.
pub fn execution_fragile(c_max: f64, assumed_cost: f64) -> bool {
    c_max < assumed_cost
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricVector {
    pub sharpe: Option<f64>,
    pub cagr: Option<f64>,
    pub mdd: Option<f64>,
    pub calmar: Option<f64>,
    pub n_trades: Option<u64>,
    pub trades_per_day: Option<f64>,
    pub c_max: Option<f64>,
    pub span_years: Option<f64>,
}

impl MetricVector {
    /// Sharpe used for ranking and selection; an undefined Sharpe (flat
    /// equity) ranks as zero.
    pub fn sharpe_or_zero(&self) -> f64 {
        self.sharpe.unwrap_or(0.0)
    }

    pub fn get(&self, metric: MetricName) -> Option<f64> {
        match metric {
            MetricName::Sharpe => self.sharpe,
            MetricName::Cagr => self.cagr,
            MetricName::Mdd => self.mdd,
            MetricName::Calmar => self.calmar,
            MetricName::NTrades => self.n_trades.map(|n| n as f64),
            MetricName::TradesPerDay => self.trades_per_day,
            MetricName::CMax => self.c_max,
        }
    }

    /// Injected vector with Sharpe, Calmar and MDD only.
    pub fn reported(sharpe: f64, calmar: f64, mdd: f64) -> Self {
        Self {
            sharpe: Some(sharpe),
            calmar: Some(calmar),
            mdd: Some(mdd),
            ..Default::default()
        }
    }

    pub fn from_session(session: &SessionResult, trading_days: usize, cfg: &MetricsConfig) -> Self {
        let mut curve = Vec::with_capacity(session.equity_curve.len() + 1);
        curve.push(session.initial_equity);
        curve.extend(session.equity_curve.iter().map(|p| p.equity));

        let sampled: Vec<f64> = match cfg.sampling {
            Sampling::Daily => std::iter::once(session.initial_equity)
                .chain(daily_last(&session.equity_curve).iter().map(|p| p.equity))
                .collect(),
            Sampling::PerBar => curve.clone(),
        };
        let periods = match cfg.sampling {
            Sampling::Daily => trading_days as f64,
            Sampling::PerBar => session.equity_curve.len() as f64,
        };
        let span_years = (periods > 0.0).then(|| periods / cfg.periods_per_year);

        let sharpe = log_returns(&sampled).ok().and_then(|returns| {
            sharpe(
                &ReturnSeries {
                    returns,
                    sampling: cfg.sampling,
                    periods_per_year: cfg.periods_per_year,
                },
                cfg.risk_free,
            )
            .ok()
        });
        let e_end = *curve.last().expect("initial equity present");
        let cagr_v = span_years.and_then(|n| cagr(session.initial_equity, e_end, n).ok());
        let mdd = if curve.iter().all(|e| *e > 0.0) {
            max_drawdown(&curve).mdd
        } else {
            // equity at or below zero is a total loss
            1.0 - f64::EPSILON
        };
        let calmar_v = cagr_v.and_then(|c| calmar(c, mdd).ok());
        let n_trades = session.trades.len() as u64;
        MetricVector {
            sharpe,
            cagr: cagr_v,
            mdd: Some(mdd),
            calmar: calmar_v,
            n_trades: Some(n_trades),
            trades_per_day: (trading_days > 0).then(|| n_trades as f64 / trading_days as f64),
            c_max: cost_cushion(&session.trades).ok(),
            span_years,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    Sharpe,
    Cagr,
    Mdd,
    Calmar,
    NTrades,
    TradesPerDay,
    CMax,
}

impl MetricName {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricName::Sharpe => "sharpe",
            MetricName::Cagr => "cagr",
            MetricName::Mdd => "mdd",
            MetricName::Calmar => "calmar",
            MetricName::NTrades => "n_trades",
            MetricName::TradesPerDay => "trades_per_day",
            MetricName::CMax => "c_max",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "sharpe" => MetricName::Sharpe,
            "cagr" => MetricName::Cagr,
            "mdd" => MetricName::Mdd,
            "calmar" => MetricName::Calmar,
            "n_trades" => MetricName::NTrades,
            "trades_per_day" => MetricName::TradesPerDay,
            "c_max" => MetricName::CMax,
            _ => return None,
        })
    }
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparison {
    AtLeast,
    Below,
}

impl Comparison {
    fn symbol(self) -> &'static str {
        match self {
            Comparison::AtLeast => ">=",
            Comparison::Below => "<",
        }
    }

    pub fn holds(self, value: f64, bound: f64) -> bool {
        match self {
            Comparison::AtLeast => value >= bound,
            Comparison::Below => value < bound,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    pub metric: MetricName,
    pub bound: f64,
    pub direction: Comparison,
}

/// Pre-committed threshold vector. JSON form:
/// `{"sharpe": {">=": 2.0}, "mdd": {"<": 0.07}}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    thresholds: Vec<Threshold>,
}

impl Benchmark {
    pub fn new(thresholds: Vec<Threshold>) -> Result<Self, MetricsError> {
        let mut seen = std::collections::BTreeSet::new();
        for t in &thresholds {
            if !seen.insert(t.metric) {
                return Err(MetricsError::InvalidBenchmark(format!("{} appears twice", t.metric)));
            }
            if !t.bound.is_finite() {
                return Err(MetricsError::InvalidBenchmark(format!("{} bound not finite", t.metric)));
            }
        }
        let mut thresholds = thresholds;
        thresholds.sort_by_key(|t| t.metric);
        Ok(Self { thresholds })
    }

    pub fn thresholds(&self) -> &[Threshold] {
        &self.thresholds
    }

    pub fn bound(&self, metric: MetricName) -> Option<&Threshold> {
        self.thresholds.iter().find(|t| t.metric == metric)
    }

    /// SR >= 2.0, Calmar >= 1.5, MDD < 7%, trades/day >= 5.
    pub fn desk_default() -> Self {
        Self::new(vec![
            Threshold { metric: MetricName::Sharpe, bound: 2.0, direction: Comparison::AtLeast },
            Threshold { metric: MetricName::Calmar, bound: 1.5, direction: Comparison::AtLeast },
            Threshold { metric: MetricName::Mdd, bound: 0.07, direction: Comparison::Below },
            Threshold { metric: MetricName::TradesPerDay, bound: 5.0, direction: Comparison::AtLeast },
        ])
        .expect("default benchmark is valid")
    }

    pub fn without(&self, metric: MetricName) -> Self {
        Self {
            thresholds: self.thresholds.iter().copied().filter(|t| t.metric != metric).collect(),
        }
    }
}

impl Default for Benchmark {
    fn default() -> Self {
        Self::desk_default()
    }
}

impl Serialize for Benchmark {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let map: BTreeMap<&str, BTreeMap<&str, f64>> = self
            .thresholds
            .iter()
            .map(|t| (t.metric.as_str(), BTreeMap::from([(t.direction.symbol(), t.bound)])))
            .collect();
        map.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Benchmark {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let raw: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::deserialize(d)?;
        let mut thresholds = Vec::new();
        for (name, cond) in raw {
            let metric = MetricName::parse(&name).ok_or_else(|| D::Error::custom(format!("unknown metric {name:?}")))?;
            if cond.len() != 1 {
                return Err(D::Error::custom(format!("{name}: exactly one comparison expected")));
            }
            let (op, bound) = cond.into_iter().next().expect("one entry");
            let direction = match op.as_str() {
                ">=" => Comparison::AtLeast,
                "<" => Comparison::Below,
                other => return Err(D::Error::custom(format!("{name}: unsupported comparison {other:?}"))),
            };
            thresholds.push(Threshold { metric, bound, direction });
        }
        Benchmark::new(thresholds).map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricStatus {
    Pass,
    Fail,
    Unavailable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateStatus {
    Pass,
    Fail,
    OpenItem,
}

impl GateStatus {
    /// Pass or open item; an open item never fails a gate by itself.
    pub fn advances(self) -> bool {
        !matches!(self, GateStatus::Fail)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkOutcome {
    pub status: GateStatus,
    pub per_metric: BTreeMap<MetricName, MetricStatus>,
}

impl BenchmarkOutcome {
    /// Strict pass: every named metric available and satisfied.
    pub fn pass(&self) -> bool {
        self.status == GateStatus::Pass
    }
}

/// The "meets all thresholds" relation. A Calmar left undefined by a zero
/// drawdown passes any `>=` Calmar threshold.
pub fn meets_benchmark(m: &MetricVector, b: &Benchmark) -> BenchmarkOutcome {
    let mut per_metric = BTreeMap::new();
    for t in b.thresholds() {
        let value = m.get(t.metric);
        let status = match value {
            Some(v) if t.direction.holds(v, t.bound) => MetricStatus::Pass,
            Some(_) => MetricStatus::Fail,
            None if t.metric == MetricName::Calmar
                && t.direction == Comparison::AtLeast
                && m.mdd == Some(0.0) =>
            {
                MetricStatus::Pass
            }
            None => MetricStatus::Unavailable,
        };
        per_metric.insert(t.metric, status);
    }
    let status = if per_metric.values().any(|s| *s == MetricStatus::Fail) {
        GateStatus::Fail
    } else if per_metric.values().any(|s| *s == MetricStatus::Unavailable) {
        GateStatus::OpenItem
    } else {
        GateStatus::Pass
    };
    BenchmarkOutcome { status, per_metric }
}
