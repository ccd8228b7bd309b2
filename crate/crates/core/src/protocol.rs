//! IS → WFA → OOS under Policy A, the locked holdout and the evidence pack.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical;
use crate::engine::{
    ablation_run, apply_stress, run_session, AblationResult, ConstraintSet, ExecutionConfig, Guard, SessionError,
    SessionSpec, StressSpec,
};
use crate::marketdata::{build_fold_schedule, fingerprint, partition, DataError, FoldSchedule, MarketSeries, Partitioned, SplitSpec};
use crate::metrics::{daily_last, meets_benchmark, Benchmark, BenchmarkOutcome, EquityPoint, GateStatus, MetricVector, MetricsConfig};
use crate::stage_is::{run_stage_is, IsConfig, IsError, IsInputs, IsReport, Shortlist};
use crate::stage_wfa::{run_stage_wfa, FoldContext, ThetaStarLock, Verdict, WfaConfig, WfaError, WfaReport};
use crate::strategy::{by_name, reset_state, ParameterGrid, ParameterPoint, Strategy, StrategyError};

pub const TOOL_NAME: &str = "alphagate";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Is(#[from] IsError),
    #[error(transparent)]
    Wfa(#[from] WfaError),
    #[error("theta lock mismatch: OOS parameters differ from the WFA lock")]
    LockMismatch,
    #[error("config hash changed between gates")]
    ConfigDrift,
    #[error("gate order violated: {0}")]
    GateOrder(String),
    #[error("incomplete gate sequence")]
    Incomplete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoldsConfig {
    pub n_folds: usize,
    pub purge_days: usize,
}

impl Default for FoldsConfig {
    fn default() -> Self {
        Self {
            n_folds: 3,
            purge_days: 5,
        }
    }
}

fn default_lot() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    /// `grid` or `trail`.
    pub strategy: String,
    #[serde(default = "default_lot")]
    pub lot: f64,
    pub grid: ParameterGrid,
    pub split: SplitSpec,
    #[serde(default)]
    pub folds: FoldsConfig,
    #[serde(default)]
    pub stage_is: IsConfig,
    #[serde(default)]
    pub stage_wfa: WfaConfig,
    #[serde(default)]
    pub benchmark: Benchmark,
    #[serde(default)]
    pub execution: ExecutionConfig,
    #[serde(default)]
    pub constraints: ConstraintSet,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub stress: Option<StressSpec>,
    /// Guards to ablate on the OOS segment after G3; report only.
    #[serde(default)]
    pub ablation: Vec<Guard>,
    #[serde(default)]
    pub seed: u64,
}

impl ProtocolConfig {
    pub fn from_json(text: &str) -> Result<Self, ProtocolError> {
        serde_json::from_str(text).map_err(|e| ProtocolError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        by_name(&self.strategy, self.lot)?;
        self.grid.validate()?;
        if self.grid.size() > self.grid.budget {
            return Err(IsError::BudgetExceeded {
                size: self.grid.size(),
                budget: self.grid.budget,
            }
            .into());
        }
        self.split.validate()?;
        if self.folds.n_folds == 0 {
            return Err(ProtocolError::Config("folds.n_folds must be >= 1".into()));
        }
        self.stage_is.validate()?;
        self.stage_wfa.validate()?;
        self.execution.validate()?;
        self.constraints.validate()?;
        if !(self.metrics.periods_per_year > 0.0) {
            return Err(ProtocolError::Config("metrics.periods_per_year must be > 0".into()));
        }
        if let Some(s) = &self.stress {
            apply_stress(&self.execution, s)?;
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        canonical::hash(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GateId {
    G1,
    G2,
    G3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Deploy,
    Reject,
    Refactor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyDecision {
    pub outcome: Outcome,
    pub failed_gate: Option<GateId>,
    /// Deploy with at least one open-item gate.
    pub conditional: bool,
}

/// Policy A over gate statuses in chronological order. A failed gate ends
/// the sequence; G1 fail maps to Refactor, G2 or G3 fail to Reject.
pub fn policy_a(gates: &[GateStatus]) -> Result<PolicyDecision, ProtocolError> {
    let ids = [GateId::G1, GateId::G2, GateId::G3];
    if gates.len() > ids.len() {
        return Err(ProtocolError::Incomplete);
    }
    for (i, g) in gates.iter().enumerate() {
        if *g == GateStatus::Fail {
            if i + 1 != gates.len() {
                return Err(ProtocolError::GateOrder(format!("gate after failed {:?}", ids[i])));
            }
            return Ok(PolicyDecision {
                outcome: if i == 0 { Outcome::Refactor } else { Outcome::Reject },
                failed_gate: Some(ids[i]),
                conditional: false,
            });
        }
    }
    if gates.len() < ids.len() {
        return Err(ProtocolError::Incomplete);
    }
    Ok(PolicyDecision {
        outcome: Outcome::Deploy,
        failed_gate: None,
        conditional: gates.contains(&GateStatus::OpenItem),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateRecord {
    /// Logical sequence number; gates complete in this order.
    pub seq: u32,
    pub gate: GateId,
    pub status: GateStatus,
    pub detail: String,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolVerdict {
    pub outcome: Outcome,
    pub failed_gate: Option<GateId>,
    pub conditional: bool,
    pub trace: Vec<GateRecord>,
}

impl ProtocolVerdict {
    pub fn label(&self) -> &'static str {
        match (self.outcome, self.conditional) {
            (Outcome::Deploy, true) => "Deploy-conditional",
            (Outcome::Deploy, false) => "Deploy",
            (Outcome::Reject, _) => "Reject",
            (Outcome::Refactor, _) => "Refactor",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OosReport {
    pub theta_star_used: ParameterPoint,
    pub theta_hash: String,
    pub m_oos: MetricVector,
    pub benchmark: BenchmarkOutcome,
    pub gate_g3: GateStatus,
    pub feasible: bool,
    pub within_band_note: String,
    pub equity_daily: Vec<EquityPoint>,
}

/// Single locked session on the holdout. The only parameter input is θ*,
/// which must hash to the WFA lock.
#[allow(clippy::too_many_arguments)]
pub fn run_oos(
    oos_segment: &MarketSeries,
    theta: &ParameterPoint,
    lock: &ThetaStarLock,
    strategy: &dyn Strategy,
    exec: &ExecutionConfig,
    constraints: &ConstraintSet,
    metrics: &MetricsConfig,
    benchmark: &Benchmark,
) -> Result<OosReport, ProtocolError> {
    let hash = canonical::hash(theta);
    if hash != lock.hash || *theta != lock.theta_star {
        return Err(ProtocolError::LockMismatch);
    }
    let spec = SessionSpec {
        strategy,
        params: theta,
        exec,
        constraints,
    };
    let session = run_session(oos_segment, spec, reset_state())?;
    let m_oos = MetricVector::from_session(&session, oos_segment.trading_dates().len(), metrics);
    let outcome = meets_benchmark(&m_oos, benchmark);
    Ok(OosReport {
        theta_star_used: theta.clone(),
        theta_hash: hash,
        gate_g3: outcome.status,
        benchmark: outcome,
        feasible: session.feasible,
        within_band_note: String::new(),
        equity_daily: daily_last(&session.equity_curve),
        m_oos,
    })
}

/// OOS Sharpe against the forward fold Sharpe range.
pub fn within_band_note(sr_oos: Option<f64>, fold_srs: &[f64]) -> String {
    let Some(sr) = sr_oos else {
        return "OOS Sharpe undefined".into();
    };
    if fold_srs.is_empty() {
        return "no forward folds to compare".into();
    }
    let lo = fold_srs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = fold_srs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let place = if sr < lo {
        "below"
    } else if sr > hi {
        "above"
    } else {
        "within"
    };
    format!("OOS Sharpe {sr:.2} {place} WFA forward band [{lo:.2}, {hi:.2}]")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Degradation {
    pub sr_is: Option<f64>,
    pub sr_wfa_mean: Option<f64>,
    pub sr_oos: Option<f64>,
    pub sr_oos_minus_is: Option<f64>,
    pub sr_oos_minus_wfa: Option<f64>,
    pub mdd_is: Option<f64>,
    pub mdd_wfa_mean: Option<f64>,
    pub mdd_oos: Option<f64>,
    pub notes: Vec<String>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Cross-stage comparison; text only, read by no gate. WFA values are
/// means over the forward metrics of the evaluable folds.
pub fn degradation_diagnostics(m_is: &MetricVector, forward: &[MetricVector], m_oos: &MetricVector) -> Degradation {
    let fold_sr: Vec<f64> = forward.iter().filter_map(|m| m.sharpe).collect();
    let fold_mdd: Vec<f64> = forward.iter().filter_map(|m| m.mdd).collect();
    let sr_wfa_mean = mean(&fold_sr);
    let mdd_wfa_mean = mean(&fold_mdd);
    let sub = |a: Option<f64>, b: Option<f64>| a.zip(b).map(|(x, y)| x - y);
    let sr_oos_minus_is = sub(m_oos.sharpe, m_is.sharpe);
    let sr_oos_minus_wfa = sub(m_oos.sharpe, sr_wfa_mean);
    let mut notes = Vec::new();
    match sr_oos_minus_is {
        Some(d) if d >= 0.0 => notes.push("no degradation vs IS".to_string()),
        Some(d) => notes.push(format!("OOS Sharpe {:.2} below IS", -d)),
        None => notes.push("IS/OOS Sharpe comparison undefined".to_string()),
    }
    match sr_oos_minus_wfa {
        Some(d) if d < 0.0 => notes.push("OOS Sharpe normalizes below the WFA mean".to_string()),
        Some(_) => notes.push("OOS Sharpe at or above the WFA mean".to_string()),
        None => notes.push("WFA/OOS Sharpe comparison undefined".to_string()),
    }
    if let (Some(is), Some(wfa), Some(oos)) = (m_is.mdd, mdd_wfa_mean, m_oos.mdd) {
        let (lo, hi) = if is <= wfa { (is, wfa) } else { (wfa, is) };
        if oos >= lo && oos <= hi {
            notes.push("drawdown integrity holds".to_string());
        } else if oos > hi {
            notes.push("OOS drawdown exceeds both IS and WFA".to_string());
        } else {
            notes.push("OOS drawdown below both IS and WFA".to_string());
        }
    }
    Degradation {
        sr_is: m_is.sharpe,
        sr_wfa_mean,
        sr_oos: m_oos.sharpe,
        sr_oos_minus_is,
        sr_oos_minus_wfa,
        mdd_is: m_is.mdd,
        mdd_wfa_mean,
        mdd_oos: m_oos.mdd,
        notes,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentFingerprint {
    pub bars: usize,
    pub sha256: String,
    pub first: DateTime<Utc>,
    pub last: DateTime<Utc>,
}

impl SegmentFingerprint {
    pub fn of(series: &MarketSeries) -> Self {
        let (bars, sha256) = fingerprint(series);
        Self {
            bars,
            sha256,
            first: series.first_timestamp(),
            last: series.last_timestamp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTransparency {
    pub grid_size: usize,
    pub budget: usize,
    pub budget_used: usize,
    pub dimensions: usize,
    pub shortlist_size: usize,
    pub folds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressReport {
    pub spec: StressSpec,
    pub base: MetricVector,
    pub stressed: MetricVector,
    pub stressed_benchmark: BenchmarkOutcome,
    pub net_pnl_base: f64,
    pub net_pnl_stressed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u32,
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidencePack {
    pub tool: String,
    pub version: String,
    /// The only wall-clock field.
    pub generated_at: String,
    pub seed: u64,
    pub config: ProtocolConfig,
    pub config_hash: String,
    pub data: BTreeMap<String, SegmentFingerprint>,
    pub data_source: String,
    pub search: SearchTransparency,
    pub stage_is: IsReport,
    pub is_equity_daily: Vec<EquityPoint>,
    pub stage_wfa: Option<WfaReport>,
    pub stage_oos: Option<OosReport>,
    pub degradation: Option<Degradation>,
    pub stress: Option<StressReport>,
    pub ablation: Vec<AblationResult>,
    pub verdict: ProtocolVerdict,
    pub events: Vec<Event>,
}

impl EvidencePack {
    pub fn to_canonical(&self) -> String {
        canonical::to_string(self)
    }

    /// Canonical form with the wall-clock field blanked.
    pub fn deterministic_body(&self) -> String {
        let mut v = canonical::to_value(self);
        v["generated_at"] = serde_json::Value::String(String::new());
        canonical::to_string(&v)
    }
}

/// Config, strategy and partitioned data, validated before any simulation.
pub struct Prepared {
    pub config: ProtocolConfig,
    pub config_hash: String,
    pub strategy: Box<dyn Strategy>,
    pub segments: Partitioned,
    pub schedule: FoldSchedule,
}

impl Prepared {
    pub fn new(series: &MarketSeries, config: ProtocolConfig) -> Result<Self, ProtocolError> {
        config.validate()?;
        let config_hash = config.hash();
        let strategy = by_name(&config.strategy, config.lot)?;
        let segments = partition(series, &config.split)?;
        let schedule = build_fold_schedule(&segments.wfa, config.folds.n_folds, config.folds.purge_days)?;
        Ok(Self {
            config,
            config_hash,
            strategy,
            segments,
            schedule,
        })
    }

    fn check_hash(&self) -> Result<(), ProtocolError> {
        if self.config.hash() == self.config_hash {
            Ok(())
        } else {
            Err(ProtocolError::ConfigDrift)
        }
    }

    pub fn stage_is(&self) -> Result<IsReport, ProtocolError> {
        let c = &self.config;
        Ok(run_stage_is(&IsInputs {
            segment: &self.segments.is,
            strategy: self.strategy.as_ref(),
            grid: &c.grid,
            exec: &c.execution,
            constraints: &c.constraints,
            metrics: &c.metrics,
            config: &c.stage_is,
            benchmark: &c.benchmark,
        })?)
    }

    pub fn stage_wfa(&self, shortlist: &Shortlist) -> Result<WfaReport, ProtocolError> {
        let c = &self.config;
        Ok(run_stage_wfa(
            &self.schedule,
            &FoldContext {
                wfa_segment: &self.segments.wfa,
                shortlist,
                strategy: self.strategy.as_ref(),
                exec: &c.execution,
                constraints: &c.constraints,
                metrics: &c.metrics,
                config: &c.stage_wfa,
                benchmark: &c.benchmark,
            },
        )?)
    }

    pub fn stage_oos(&self, theta: &ParameterPoint, lock: &ThetaStarLock) -> Result<OosReport, ProtocolError> {
        let c = &self.config;
        run_oos(
            &self.segments.oos,
            theta,
            lock,
            self.strategy.as_ref(),
            &c.execution,
            &c.constraints,
            &c.metrics,
            &c.benchmark,
        )
    }

    pub fn stress(&self, theta: &ParameterPoint, stress: &StressSpec) -> Result<StressReport, ProtocolError> {
        let c = &self.config;
        let stressed_exec = apply_stress(&c.execution, stress)?;
        let oos = &self.segments.oos;
        let shifted = oos
            .skip(stress.time_shift_bars)
            .ok_or(ProtocolError::Config("time_shift_bars exceeds OOS length".into()))?;
        let run = |segment: &MarketSeries, exec: &ExecutionConfig| {
            let spec = SessionSpec {
                strategy: self.strategy.as_ref(),
                params: theta,
                exec,
                constraints: &c.constraints,
            };
            run_session(segment, spec, reset_state()).map(|s| {
                let m = MetricVector::from_session(&s, segment.trading_dates().len(), &c.metrics);
                (m, s.net_pnl())
            })
        };
        let (base, net_pnl_base) = run(oos, &c.execution)?;
        let (stressed, net_pnl_stressed) = run(&shifted, &stressed_exec)?;
        Ok(StressReport {
            spec: *stress,
            stressed_benchmark: meets_benchmark(&stressed, &c.benchmark),
            base,
            stressed,
            net_pnl_base,
            net_pnl_stressed,
        })
    }

    pub fn ablate(&self, theta: &ParameterPoint, guards: &[Guard]) -> Result<Vec<AblationResult>, ProtocolError> {
        let c = &self.config;
        let spec = SessionSpec {
            strategy: self.strategy.as_ref(),
            params: theta,
            exec: &c.execution,
            constraints: &c.constraints,
        };
        guards
            .iter()
            .map(|&g| ablation_run(&self.segments.oos, spec, &c.metrics, g).map_err(Into::into))
            .collect()
    }

    fn is_equity(&self, shortlist: Option<&Shortlist>) -> Result<Vec<EquityPoint>, ProtocolError> {
        let Some(top) = shortlist.and_then(|s| s.candidates().first()) else {
            return Ok(Vec::new());
        };
        let c = &self.config;
        let spec = SessionSpec {
            strategy: self.strategy.as_ref(),
            params: top,
            exec: &c.execution,
            constraints: &c.constraints,
        };
        Ok(daily_last(&run_session(&self.segments.is, spec, reset_state())?.equity_curve))
    }
}

struct Trace {
    events: Vec<Event>,
    gates: Vec<GateRecord>,
    seq: u32,
}

impl Trace {
    fn event(&mut self, stage: &str, message: impl Into<String>) {
        self.seq += 1;
        self.events.push(Event {
            seq: self.seq,
            stage: stage.into(),
            message: message.into(),
        });
    }

    fn gate(&mut self, gate: GateId, status: GateStatus, detail: String, config_hash: &str) {
        self.event(&format!("{gate:?}"), format!("{gate:?} {status:?}: {detail}"));
        self.gates.push(GateRecord {
            seq: self.seq,
            gate,
            status,
            detail,
            config_hash: config_hash.to_string(),
        });
    }
}

pub struct ProtocolRun {
    pub verdict: ProtocolVerdict,
    pub pack: EvidencePack,
}

pub fn run_protocol(series: &MarketSeries, config: ProtocolConfig, data_source: &str) -> Result<ProtocolRun, ProtocolError> {
    let prepared = Prepared::new(series, config)?;
    run_prepared(&prepared, data_source)
}

pub fn run_prepared(p: &Prepared, data_source: &str) -> Result<ProtocolRun, ProtocolError> {
    let c = &p.config;
    let hash = p.config_hash.clone();
    let mut trace = Trace {
        events: Vec::new(),
        gates: Vec::new(),
        seq: 0,
    };
    trace.event("config", format!("config hash {hash}"));

    trace.event("is", "stage I started");
    let is_report = p.stage_is()?;
    let g1_detail = match (&is_report.shortlist, is_report.viability) {
        (_, crate::stage_is::Viability::Refactor) => {
            format!("sr_opt {:.4} below sr_min {}", is_report.sr_opt, c.stage_is.sr_min)
        }
        (None, _) => "no candidate survived plateau, trade-count and cliff filters".to_string(),
        (Some(s), _) => format!("{} candidates locked; top {}", s.candidates().len(), s.candidates()[0].label()),
    };
    trace.gate(GateId::G1, is_report.gate_g1, g1_detail, &hash);
    let is_equity = p.is_equity(is_report.shortlist.as_ref())?;

    let mut statuses = vec![is_report.gate_g1];
    let mut wfa_report = None;
    let mut oos_report = None;
    let mut degradation = None;
    let mut stress = None;
    let mut ablation = Vec::new();

    if is_report.gate_g1.advances() {
        let shortlist = is_report
            .shortlist
            .as_ref()
            .ok_or_else(|| ProtocolError::GateOrder("G1 advanced without a shortlist".into()))?;
        trace.event("wfa", "stage II started");
        let wfa = p.stage_wfa(shortlist)?;
        let g2 = match wfa.verdict {
            Verdict::Pass => GateStatus::Pass,
            Verdict::Fail => GateStatus::Fail,
        };
        trace.gate(GateId::G2, g2, wfa.gate.reason.clone(), &hash);
        statuses.push(g2);

        if let (GateStatus::Pass, Some(lock)) = (g2, &wfa.theta_star) {
            trace.event("oos", format!("stage III started with theta* {}", lock.theta_star.label()));
            let mut oos = p.stage_oos(&lock.theta_star, lock)?;
            let forward: Vec<MetricVector> = wfa
                .folds
                .iter()
                .filter(|f| wfa.gate.evaluable_set.contains(&f.index))
                .filter_map(|f| f.m_test.clone())
                .collect();
            let fold_srs: Vec<f64> = forward.iter().filter_map(|m| m.sharpe).collect();
            oos.within_band_note = within_band_note(oos.m_oos.sharpe, &fold_srs);
            p.check_hash()?;
            trace.gate(GateId::G3, oos.gate_g3, oos.within_band_note.clone(), &p.config.hash());
            statuses.push(oos.gate_g3);
            if let Some(m_is) = &is_report.top_metrics {
                degradation = Some(degradation_diagnostics(m_is, &forward, &oos.m_oos));
            }
            if let Some(spec) = &c.stress {
                trace.event("stress", "stress envelope (report only)");
                stress = Some(p.stress(&lock.theta_star, spec)?);
            }
            if !c.ablation.is_empty() {
                trace.event("ablation", "guard ablation (report only)");
                ablation = p.ablate(&lock.theta_star, &c.ablation)?;
            }
            oos_report = Some(oos);
        } else {
            trace.event("oos", "OOS not opened after WFA FAIL");
        }
        wfa_report = Some(wfa);
    } else {
        trace.event("wfa", "halted at G1");
    }

    let decision = policy_a(&statuses)?;
    let verdict = ProtocolVerdict {
        outcome: decision.outcome,
        failed_gate: decision.failed_gate,
        conditional: decision.conditional,
        trace: trace.gates.clone(),
    };
    trace.event("verdict", verdict.label());

    let mut data = BTreeMap::new();
    data.insert("is".to_string(), SegmentFingerprint::of(&p.segments.is));
    data.insert("wfa".to_string(), SegmentFingerprint::of(&p.segments.wfa));
    data.insert("oos".to_string(), SegmentFingerprint::of(&p.segments.oos));
    let pack = EvidencePack {
        tool: TOOL_NAME.to_string(),
        version: TOOL_VERSION.to_string(),
        generated_at: Utc::now().to_rfc3339(),
        seed: c.seed,
        config: c.clone(),
        config_hash: hash,
        data,
        data_source: data_source.to_string(),
        search: SearchTransparency {
            grid_size: c.grid.size(),
            budget: c.grid.budget,
            budget_used: is_report.map.budget_used,
            dimensions: c.grid.dimensions.len(),
            shortlist_size: c.stage_is.shortlist_size,
            folds: p.schedule.folds.len(),
        },
        stage_is: is_report,
        is_equity_daily: is_equity,
        stage_wfa: wfa_report,
        stage_oos: oos_report,
        degradation,
        stress,
        ablation,
        verdict: verdict.clone(),
        events: trace.events,
    };
    Ok(ProtocolRun { verdict, pack })
}
