//! Stage I: grid mapping on the IS segment, viability, the plateau region,
//! trade-count filter, cliff veto and the locked shortlist.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical;
use crate::engine::{run_session, ConstraintSet, ExecutionConfig, SessionError, SessionSpec};
use crate::marketdata::MarketSeries;
use crate::metrics::{meets_benchmark, Benchmark, BenchmarkOutcome, GateStatus, MetricVector, MetricsConfig};
use crate::strategy::{reset_state, ParameterGrid, ParameterPoint, Strategy, StrategyError};

#[derive(Debug, Error)]
pub enum IsError {
    #[error("grid has {size} points, budget is {budget}")]
    BudgetExceeded { size: usize, budget: usize },
    #[error("empty parameter grid")]
    EmptyGrid,
    #[error("point {0} not in map")]
    UnknownPoint(String),
    #[error("invalid stage_is config: {0}")]
    InvalidConfig(String),
    #[error("empty kept set")]
    EmptyKept,
    #[error("shortlist is locked")]
    Locked,
    #[error("shortlist lock hash mismatch")]
    LockMismatch,
    #[error(transparent)]
    Grid(#[from] StrategyError),
    #[error(transparent)]
    Session(#[from] SessionError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IsConfig {
    pub alpha: f64,
    pub sr_min: f64,
    pub n_min: u64,
    pub tau_sr: f64,
    pub tau_dd: f64,
    pub shortlist_size: usize,
}

impl Default for IsConfig {
    fn default() -> Self {
        Self {
            alpha: 0.9,
            sr_min: 1.0,
            n_min: 100,
            tau_sr: 0.5,
            tau_dd: 0.03,
            shortlist_size: 5,
        }
    }
}

impl IsConfig {
    pub fn validate(&self) -> Result<(), IsError> {
        let bad = |m: &str| Err(IsError::InvalidConfig(m.into()));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must be in (0, 1)");
        }
        if !(self.sr_min > 0.0) {
            return bad("sr_min must be > 0");
        }
        if self.n_min < 1 {
            return bad("n_min must be >= 1");
        }
        if !(self.tau_sr >= 0.0) || !(self.tau_dd >= 0.0) {
            return bad("tau values must be >= 0");
        }
        if self.shortlist_size < 1 {
            return bad("shortlist_size must be >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapEntry {
    pub point: ParameterPoint,
    pub metrics: MetricVector,
    pub feasible: bool,
}

/// Entries sorted by parameter point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityMap {
    entries: Vec<MapEntry>,
    pub sr_opt: f64,
    pub budget_used: usize,
}

impl StabilityMap {
    pub fn from_entries(mut entries: Vec<MapEntry>) -> Result<Self, IsError> {
        if entries.is_empty() {
            return Err(IsError::EmptyGrid);
        }
        entries.sort_by(|a, b| a.point.cmp(&b.point));
        entries.dedup_by(|a, b| a.point == b.point);
        let sr_opt = entries
            .iter()
            .map(|e| e.metrics.sharpe_or_zero())
            .fold(f64::NEG_INFINITY, f64::max);
        let budget_used = entries.len();
        Ok(Self {
            entries,
            sr_opt,
            budget_used,
        })
    }

    pub fn entries(&self) -> &[MapEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, point: &ParameterPoint) -> Option<&MetricVector> {
        self.entries
            .binary_search_by(|e| e.point.cmp(point))
            .ok()
            .map(|i| &self.entries[i].metrics)
    }

    fn require(&self, point: &ParameterPoint) -> Result<&MetricVector, IsError> {
        self.get(point).ok_or_else(|| IsError::UnknownPoint(point.label()))
    }

    pub fn points(&self) -> impl Iterator<Item = &ParameterPoint> {
        self.entries.iter().map(|e| &e.point)
    }
}

/// One IS session per grid point, each from canonical state.
pub fn map_parameter_space(
    is_segment: &MarketSeries,
    strategy: &dyn Strategy,
    grid: &ParameterGrid,
    exec: &ExecutionConfig,
    constraints: &ConstraintSet,
    metrics: &MetricsConfig,
) -> Result<StabilityMap, IsError> {
    grid.validate()?;
    let size = grid.size();
    if size == 0 {
        return Err(IsError::EmptyGrid);
    }
    if size > grid.budget {
        return Err(IsError::BudgetExceeded {
            size,
            budget: grid.budget,
        });
    }
    let days = is_segment.trading_dates().len();
    let entries = grid
        .enumerate()
        .into_par_iter()
        .map(|point| {
            let spec = SessionSpec {
                strategy,
                params: &point,
                exec,
                constraints,
            };
            let session = run_session(is_segment, spec, reset_state())?;
            Ok(MapEntry {
                metrics: MetricVector::from_session(&session, days, metrics),
                feasible: session.feasible,
                point,
            })
        })
        .collect::<Result<Vec<_>, IsError>>()?;
    StabilityMap::from_entries(entries)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Viability {
    Pass,
    Refactor,
}

pub fn viability_check(map: &StabilityMap, sr_min: f64) -> Viability {
    if sr_min > 0.0 && map.sr_opt >= sr_min {
        Viability::Pass
    } else {
        Viability::Refactor
    }
}

pub fn stable_region(map: &StabilityMap, alpha: f64) -> BTreeSet<ParameterPoint> {
    let floor = alpha * map.sr_opt;
    map.entries
        .iter()
        .filter(|e| e.metrics.sharpe_or_zero() >= floor)
        .map(|e| e.point.clone())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub point: ParameterPoint,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Filtered {
    pub kept: BTreeSet<ParameterPoint>,
    pub rejected: Vec<Rejection>,
}

pub fn trade_count_filter(region: &BTreeSet<ParameterPoint>, map: &StabilityMap, n_min: u64) -> Result<Filtered, IsError> {
    let mut out = Filtered::default();
    for p in region {
        let n = map.require(p)?.n_trades.unwrap_or(0);
        if n < n_min {
            out.rejected.push(Rejection {
                point: p.clone(),
                reason: format!("n_trades {n} < n_min {n_min}"),
            });
        } else {
            out.kept.insert(p.clone());
        }
    }
    Ok(out)
}

fn in_map_neighbors<'a>(map: &'a StabilityMap, grid: &ParameterGrid, point: &ParameterPoint) -> Result<Vec<&'a MetricVector>, IsError> {
    map.require(point)?;
    Ok(grid
        .neighbors(point)?
        .iter()
        .filter_map(|n| map.get(n))
        .collect())
}

pub fn cliff_sr(map: &StabilityMap, grid: &ParameterGrid, point: &ParameterPoint) -> Result<f64, IsError> {
    let sr = map.require(point)?.sharpe_or_zero();
    Ok(in_map_neighbors(map, grid, point)?
        .iter()
        .map(|m| (sr - m.sharpe_or_zero()).max(0.0))
        .fold(0.0, f64::max))
}

pub fn cliff_dd(map: &StabilityMap, grid: &ParameterGrid, point: &ParameterPoint) -> Result<f64, IsError> {
    let dd = map.require(point)?.mdd.unwrap_or(0.0);
    Ok(in_map_neighbors(map, grid, point)?
        .iter()
        .map(|m| (m.mdd.unwrap_or(0.0) - dd).max(0.0))
        .fold(0.0, f64::max))
}

pub fn cliff_veto(
    region: &BTreeSet<ParameterPoint>,
    map: &StabilityMap,
    grid: &ParameterGrid,
    tau_sr: f64,
    tau_dd: f64,
) -> Result<Filtered, IsError> {
    let mut out = Filtered::default();
    for p in region {
        let c_sr = cliff_sr(map, grid, p)?;
        let c_dd = cliff_dd(map, grid, p)?;
        let mut reasons = Vec::new();
        if c_sr > tau_sr {
            reasons.push(format!("cliff_sr {c_sr:.4} > {tau_sr}"));
        }
        if c_dd > tau_dd {
            reasons.push(format!("cliff_dd {c_dd:.4} > {tau_dd}"));
        }
        if reasons.is_empty() {
            out.kept.insert(p.clone());
        } else {
            out.rejected.push(Rejection {
                point: p.clone(),
                reason: reasons.join("; "),
            });
        }
    }
    Ok(out)
}

pub const RANKING_RULE: &str = "calmar desc, mdd asc, parameters lexicographic";

fn desc_none_last(a: Option<f64>, b: Option<f64>) -> Ordering {
    match (a, b) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    }
}

fn asc_none_last(a: Option<f64>, b: Option<f64>) -> Ordering {
    match (a, b) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    }
}

pub fn rank_order(a: (&ParameterPoint, &MetricVector), b: (&ParameterPoint, &MetricVector)) -> Ordering {
    desc_none_last(a.1.calmar, b.1.calmar)
        .then_with(|| asc_none_last(a.1.mdd, b.1.mdd))
        .then_with(|| a.0.cmp(b.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LockRecord {
    pub locked_dimensions: ParameterGrid,
    /// Last IS bar; the lock is a function of data up to here.
    pub locked_at: Option<DateTime<Utc>>,
    pub is_config: IsConfig,
    pub ranking_rule: String,
    pub candidates_hash: String,
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shortlist {
    candidates: Vec<ParameterPoint>,
    lock_record: LockRecord,
}

impl Shortlist {
    pub fn lock(
        candidates: Vec<ParameterPoint>,
        grid: &ParameterGrid,
        is_config: &IsConfig,
        locked_at: Option<DateTime<Utc>>,
    ) -> Result<Self, IsError> {
        if candidates.is_empty() {
            return Err(IsError::EmptyKept);
        }
        let candidates_hash = canonical::hash(&candidates);
        Ok(Self {
            lock_record: LockRecord {
                locked_dimensions: grid.clone(),
                locked_at,
                is_config: is_config.clone(),
                ranking_rule: RANKING_RULE.to_string(),
                candidates_hash,
                violations: Vec::new(),
            },
            candidates,
        })
    }

    pub fn candidates(&self) -> &[ParameterPoint] {
        &self.candidates
    }

    pub fn lock_record(&self) -> &LockRecord {
        &self.lock_record
    }

    pub fn rank_of(&self, point: &ParameterPoint) -> Option<usize> {
        self.candidates.iter().position(|c| c == point)
    }

    /// Checks membership against the hash taken at lock time.
    pub fn verify(&self) -> Result<(), IsError> {
        if canonical::hash(&self.candidates) == self.lock_record.candidates_hash {
            Ok(())
        } else {
            Err(IsError::LockMismatch)
        }
    }

    /// Always rejected; the attempt is recorded in the lock record.
    pub fn try_amend(&mut self, proposed: &[ParameterPoint]) -> Result<(), IsError> {
        let labels: Vec<String> = proposed.iter().map(ParameterPoint::label).collect();
        self.lock_record
            .violations
            .push(format!("rejected amendment to [{}]", labels.join(", ")));
        Err(IsError::Locked)
    }
}

pub fn rank_shortlist(
    kept: &BTreeSet<ParameterPoint>,
    map: &StabilityMap,
    shortlist_size: usize,
    grid: &ParameterGrid,
    is_config: &IsConfig,
    locked_at: Option<DateTime<Utc>>,
) -> Result<Shortlist, IsError> {
    if kept.is_empty() {
        return Err(IsError::EmptyKept);
    }
    let mut ranked: Vec<(&ParameterPoint, &MetricVector)> =
        kept.iter().map(|p| map.require(p).map(|m| (p, m))).collect::<Result<_, _>>()?;
    ranked.sort_by(|a, b| rank_order(*a, *b));
    let candidates = ranked.into_iter().take(shortlist_size).map(|(p, _)| p.clone()).collect();
    Shortlist::lock(candidates, grid, is_config, locked_at)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsReport {
    pub viability: Viability,
    pub sr_opt: f64,
    pub config: IsConfig,
    /// The four sets below partition the mapped points.
    pub below_plateau: Vec<ParameterPoint>,
    pub rejected_by_trades: Vec<Rejection>,
    pub rejected_by_cliff: Vec<Rejection>,
    pub kept: Vec<ParameterPoint>,
    pub omega_stable: Vec<ParameterPoint>,
    pub shortlist: Option<Shortlist>,
    pub top_metrics: Option<MetricVector>,
    pub benchmark: Option<BenchmarkOutcome>,
    pub gate_g1: GateStatus,
    pub map: StabilityMap,
}

impl IsReport {
    pub fn plateau_and_filters(map: StabilityMap, config: &IsConfig, grid: &ParameterGrid, benchmark: &Benchmark, locked_at: Option<DateTime<Utc>>) -> Result<Self, IsError> {
        let viability = viability_check(&map, config.sr_min);
        let mut report = IsReport {
            viability,
            sr_opt: map.sr_opt,
            config: config.clone(),
            below_plateau: Vec::new(),
            rejected_by_trades: Vec::new(),
            rejected_by_cliff: Vec::new(),
            kept: Vec::new(),
            omega_stable: Vec::new(),
            shortlist: None,
            top_metrics: None,
            benchmark: None,
            gate_g1: GateStatus::Fail,
            map,
        };
        if viability == Viability::Refactor {
            report.below_plateau = report.map.points().cloned().collect();
            return Ok(report);
        }
        let region = stable_region(&report.map, config.alpha);
        let by_trades = trade_count_filter(&region, &report.map, config.n_min)?;
        let by_cliff = cliff_veto(&by_trades.kept, &report.map, grid, config.tau_sr, config.tau_dd)?;
        report.below_plateau = report.map.points().filter(|p| !region.contains(*p)).cloned().collect();
        report.omega_stable = region.into_iter().collect();
        report.rejected_by_trades = by_trades.rejected;
        report.rejected_by_cliff = by_cliff.rejected;
        report.kept = by_cliff.kept.iter().cloned().collect();
        if by_cliff.kept.is_empty() {
            return Ok(report);
        }
        let shortlist = rank_shortlist(&by_cliff.kept, &report.map, config.shortlist_size, grid, config, locked_at)?;
        let top = report.map.require(&shortlist.candidates()[0])?.clone();
        let outcome = meets_benchmark(&top, benchmark);
        report.gate_g1 = outcome.status;
        report.top_metrics = Some(top);
        report.benchmark = Some(outcome);
        report.shortlist = Some(shortlist);
        Ok(report)
    }
}

pub struct IsInputs<'a> {
    pub segment: &'a MarketSeries,
    pub strategy: &'a dyn Strategy,
    pub grid: &'a ParameterGrid,
    pub exec: &'a ExecutionConfig,
    pub constraints: &'a ConstraintSet,
    pub metrics: &'a MetricsConfig,
    pub config: &'a IsConfig,
    pub benchmark: &'a Benchmark,
}

pub fn run_stage_is(inputs: &IsInputs<'_>) -> Result<IsReport, IsError> {
    inputs.config.validate()?;
    let map = map_parameter_space(
        inputs.segment,
        inputs.strategy,
        inputs.grid,
        inputs.exec,
        inputs.constraints,
        inputs.metrics,
    )?;
    let locked_at = Some(inputs.segment.last_timestamp());
    IsReport::plateau_and_filters(map, inputs.config, inputs.grid, inputs.benchmark, locked_at)
}
