//! Stage II: purged rolling walk-forward over the locked shortlist.
//!
//! Each fold re-selects θ_i on its train window only, skips the purge gap,
//! and forward-tests θ_i on the test window as an independent session from
//! canonical state. The gate is evaluated in fold order: non-evaluable folds
//! are skipped, a veto fails the stage immediately, otherwise the share of
//! passing folds among evaluable ones must reach `q`.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical;
use crate::engine::{run_session, ConstraintSet, ExecutionConfig, SessionError, SessionSpec};
use crate::marketdata::{Fold, FoldSchedule, Interval, MarketSeries};
use crate::metrics::{daily_last, meets_benchmark, Benchmark, EquityPoint, GateStatus, MetricVector, MetricsConfig};
use crate::stage_is::{IsError, Shortlist};
use crate::strategy::{reset_state, ParameterPoint, Strategy};

#[derive(Debug, Error)]
pub enum WfaError {
    #[error("empty shortlist")]
    EmptyShortlist,
    #[error("invalid stage_wfa config: {0}")]
    InvalidConfig(String),
    #[error("theta* requested on a failed walk-forward")]
    NotPassed,
    #[error("empty fold schedule")]
    NoFolds,
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Lock(#[from] IsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WfaConfig {
    pub q: f64,
    pub veto_mdd: f64,
    pub min_fold_trades: u64,
}

impl Default for WfaConfig {
    fn default() -> Self {
        Self {
            q: 2.0 / 3.0,
            veto_mdd: 0.07,
            min_fold_trades: 10,
        }
    }
}

impl WfaConfig {
    pub fn validate(&self) -> Result<(), WfaError> {
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(WfaError::InvalidConfig("q must be in (0, 1]".into()));
        }
        if !(self.veto_mdd > 0.0 && self.veto_mdd < 1.0) {
            return Err(WfaError::InvalidConfig("veto_mdd must be in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub point: ParameterPoint,
    pub metrics: MetricVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub theta: ParameterPoint,
    pub scores: Vec<CandidateScore>,
}

impl Selection {
    pub fn m_train(&self) -> &MetricVector {
        &self
            .scores
            .iter()
            .find(|s| s.point == self.theta)
            .expect("selected candidate scored")
            .metrics
    }
}

/// Restricted re-optimization: argmax train Sharpe over the shortlist,
/// ties to the better shortlist rank. Sees only the train segment.
pub fn select_fold_params(
    train: &MarketSeries,
    shortlist: &Shortlist,
    strategy: &dyn Strategy,
    exec: &ExecutionConfig,
    constraints: &ConstraintSet,
    metrics: &MetricsConfig,
) -> Result<Selection, WfaError> {
    let candidates = shortlist.candidates();
    if candidates.is_empty() {
        return Err(WfaError::EmptyShortlist);
    }
    let days = train.trading_dates().len();
    let mut scores = Vec::with_capacity(candidates.len());
    for point in candidates {
        let spec = SessionSpec {
            strategy,
            params: point,
            exec,
            constraints,
        };
        let session = run_session(train, spec, reset_state())?;
        scores.push(CandidateScore {
            point: point.clone(),
            metrics: MetricVector::from_session(&session, days, metrics),
        });
    }
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if s.metrics.sharpe_or_zero() > scores[best].metrics.sharpe_or_zero() {
            best = i;
        }
    }
    Ok(Selection {
        theta: scores[best].point.clone(),
        scores,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub index: usize,
    pub train_range: Interval,
    pub purge_range: Interval,
    pub test_range: Interval,
    pub theta: Option<ParameterPoint>,
    pub train_scores: Vec<CandidateScore>,
    pub m_train: Option<MetricVector>,
    pub m_test: Option<MetricVector>,
    pub evaluable: bool,
    pub benchmark_status: Option<GateStatus>,
    /// Strict benchmark pass; an open item does not pass.
    pub fold_pass: bool,
    pub veto_triggered: bool,
    pub hard_violation: bool,
    /// Simulated after the veto that decided the stage; report only.
    pub post_veto: bool,
    pub note: Option<String>,
    pub test_equity_daily: Vec<EquityPoint>,
}

impl FoldResult {
    fn empty(fold: &Fold) -> Self {
        Self {
            index: fold.index,
            train_range: fold.train_range,
            purge_range: fold.purge_range,
            test_range: fold.test_range,
            theta: None,
            train_scores: Vec::new(),
            m_train: None,
            m_test: None,
            evaluable: false,
            benchmark_status: None,
            fold_pass: false,
            veto_triggered: false,
            hard_violation: false,
            post_veto: false,
            note: None,
            test_equity_daily: Vec::new(),
        }
    }

    /// Fold gate from the forward metric vector.
    pub fn evaluate(&mut self, m_test: MetricVector, hard_violation: bool, cfg: &WfaConfig, benchmark: &Benchmark) {
        let n = m_test.n_trades.unwrap_or(0);
        self.evaluable = n >= cfg.min_fold_trades;
        if !self.evaluable {
            self.note = Some(format!("insufficient forward sample: {n} trades < {}", cfg.min_fold_trades));
        }
        let outcome = meets_benchmark(&m_test, benchmark);
        self.fold_pass = self.evaluable && outcome.status == GateStatus::Pass;
        self.benchmark_status = Some(outcome.status);
        self.hard_violation = hard_violation;
        self.veto_triggered = self.evaluable && (m_test.mdd.is_some_and(|d| d >= cfg.veto_mdd) || hard_violation);
        self.m_test = Some(m_test);
    }

    /// A fold built from already-computed metric vectors.
    pub fn from_metrics(
        fold: &Fold,
        theta: ParameterPoint,
        m_train: Option<MetricVector>,
        m_test: MetricVector,
        cfg: &WfaConfig,
        benchmark: &Benchmark,
    ) -> Self {
        let mut r = Self::empty(fold);
        r.theta = Some(theta);
        r.m_train = m_train;
        r.evaluate(m_test, false, cfg, benchmark);
        r
    }
}

pub struct FoldContext<'a> {
    pub wfa_segment: &'a MarketSeries,
    pub shortlist: &'a Shortlist,
    pub strategy: &'a dyn Strategy,
    pub exec: &'a ExecutionConfig,
    pub constraints: &'a ConstraintSet,
    pub metrics: &'a MetricsConfig,
    pub config: &'a WfaConfig,
    pub benchmark: &'a Benchmark,
}

/// Any failure inside the fold marks it non-evaluable.
pub fn run_fold(fold: &Fold, ctx: &FoldContext<'_>) -> FoldResult {
    let mut r = FoldResult::empty(fold);
    let Some(train) = ctx.wfa_segment.slice(fold.train_range) else {
        r.note = Some("no train bars".into());
        return r;
    };
    let Some(test) = ctx.wfa_segment.slice(fold.test_range) else {
        r.note = Some("no test bars".into());
        return r;
    };
    let selection = match select_fold_params(&train, ctx.shortlist, ctx.strategy, ctx.exec, ctx.constraints, ctx.metrics) {
        Ok(s) => s,
        Err(e) => {
            r.note = Some(format!("train simulation failed: {e}"));
            return r;
        }
    };
    r.m_train = Some(selection.m_train().clone());
    r.theta = Some(selection.theta.clone());
    r.train_scores = selection.scores;
    let spec = SessionSpec {
        strategy: ctx.strategy,
        params: &selection.theta,
        exec: ctx.exec,
        constraints: ctx.constraints,
    };
    let session = match run_session(&test, spec, reset_state()) {
        Ok(s) => s,
        Err(e) => {
            r.note = Some(format!("test simulation failed: {e}"));
            return r;
        }
    };
    let m_test = MetricVector::from_session(&session, test.trading_dates().len(), ctx.metrics);
    r.test_equity_daily = daily_last(&session.equity_curve);
    r.evaluate(m_test, session.hard_violation(), ctx.config, ctx.benchmark);
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    pub verdict: Verdict,
    /// Indices of evaluable folds (the set I).
    pub evaluable_set: Vec<usize>,
    pub passes: usize,
    pub pass_fraction: Option<f64>,
    pub veto_fold: Option<usize>,
    pub reason: String,
}

/// Majority-pass gate with catastrophic veto, in fold order.
pub fn majority_gate(folds: &[FoldResult], q: f64) -> GateDecision {
    let mut evaluable_set = Vec::new();
    let mut passes = 0usize;
    let mut veto_fold = None;
    for f in folds {
        if !f.evaluable {
            continue;
        }
        evaluable_set.push(f.index);
        if f.veto_triggered {
            veto_fold = Some(f.index);
            break;
        }
        if f.fold_pass {
            passes += 1;
        }
    }
    let n = evaluable_set.len();
    let pass_fraction = (n > 0).then(|| passes as f64 / n as f64);
    let (verdict, reason) = if let Some(i) = veto_fold {
        (Verdict::Fail, format!("catastrophic veto in fold {i}"))
    } else if n == 0 {
        (Verdict::Fail, "no evaluable folds".to_string())
    } else if passes as f64 >= q * n as f64 - 1e-12 {
        (Verdict::Pass, format!("{passes}/{n} folds passed, q = {q:.4}"))
    } else {
        (Verdict::Fail, format!("{passes}/{n} folds passed, below q = {q:.4}"))
    };
    GateDecision {
        verdict,
        evaluable_set,
        passes,
        pass_fraction,
        veto_fold,
        reason,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaCandidate {
    pub point: ParameterPoint,
    pub median_sr_test: f64,
    pub folds_used: usize,
    pub shortlist_rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaStarLock {
    pub theta_star: ParameterPoint,
    pub rule: String,
    pub inputs: Vec<ThetaCandidate>,
    pub hash: String,
}

pub const THETA_RULE: &str = "max median test Sharpe over evaluable folds; ties: more folds, better shortlist rank";

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub fn theta_order(a: &ThetaCandidate, b: &ThetaCandidate) -> Ordering {
    b.median_sr_test
        .total_cmp(&a.median_sr_test)
        .then(b.folds_used.cmp(&a.folds_used))
        .then(a.shortlist_rank.cmp(&b.shortlist_rank))
}

pub fn lock_theta_star(folds: &[FoldResult], gate: &GateDecision, shortlist: &Shortlist) -> Result<ThetaStarLock, WfaError> {
    if gate.verdict != Verdict::Pass {
        return Err(WfaError::NotPassed);
    }
    let mut candidates: Vec<(ParameterPoint, Vec<f64>)> = Vec::new();
    for f in folds.iter().filter(|f| gate.evaluable_set.contains(&f.index)) {
        let (Some(theta), Some(m)) = (&f.theta, &f.m_test) else {
            continue;
        };
        let sr = m.sharpe_or_zero();
        match candidates.iter_mut().find(|(p, _)| p == theta) {
            Some((_, v)) => v.push(sr),
            None => candidates.push((theta.clone(), vec![sr])),
        }
    }
    let mut inputs: Vec<ThetaCandidate> = candidates
        .into_iter()
        .map(|(point, mut srs)| ThetaCandidate {
            shortlist_rank: shortlist.rank_of(&point).unwrap_or(usize::MAX),
            folds_used: srs.len(),
            median_sr_test: median(&mut srs),
            point,
        })
        .collect();
    inputs.sort_by(theta_order);
    let theta_star = inputs.first().ok_or(WfaError::NotPassed)?.point.clone();
    let hash = canonical::hash(&theta_star);
    Ok(ThetaStarLock {
        theta_star,
        rule: THETA_RULE.to_string(),
        inputs,
        hash,
    })
}

/// Report-only; nothing in the gate or selection path reads these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldDiagnostics {
    pub index: usize,
    pub sr_train: Option<f64>,
    pub sr_test: Option<f64>,
    pub delta_sr: Option<f64>,
    pub eta: Option<f64>,
    pub eta_undefined: bool,
    /// Negative train Sharpe with positive test Sharpe, or the reverse.
    pub eta_negative: bool,
}

pub fn diagnostics(folds: &[FoldResult]) -> Vec<FoldDiagnostics> {
    folds
        .iter()
        .map(|f| {
            let sr_train = f.m_train.as_ref().and_then(|m| m.sharpe);
            let sr_test = f.m_test.as_ref().and_then(|m| m.sharpe);
            let delta_sr = sr_train.zip(sr_test).map(|(a, b)| b - a);
            let eta = sr_train.zip(sr_test).and_then(|(a, b)| (a != 0.0).then(|| b / a));
            FoldDiagnostics {
                index: f.index,
                sr_train,
                sr_test,
                delta_sr,
                eta,
                eta_undefined: eta.is_none(),
                eta_negative: eta.is_some_and(|e| e < 0.0),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WfaReport {
    pub config: WfaConfig,
    pub schedule: FoldSchedule,
    pub folds: Vec<FoldResult>,
    pub gate: GateDecision,
    pub verdict: Verdict,
    pub theta_star: Option<ThetaStarLock>,
    pub diagnostics: Vec<FoldDiagnostics>,
}

impl WfaReport {
    /// Gate, post-veto flags, θ* and diagnostics from evaluated folds.
    pub fn assemble(config: &WfaConfig, schedule: FoldSchedule, mut folds: Vec<FoldResult>, shortlist: &Shortlist) -> Result<Self, WfaError> {
        folds.sort_by_key(|f| f.index);
        let gate = majority_gate(&folds, config.q);
        if let Some(v) = gate.veto_fold {
            for f in folds.iter_mut().filter(|f| f.index > v) {
                f.post_veto = true;
            }
        }
        let theta_star = match gate.verdict {
            Verdict::Pass => Some(lock_theta_star(&folds, &gate, shortlist)?),
            Verdict::Fail => None,
        };
        Ok(WfaReport {
            config: config.clone(),
            schedule,
            diagnostics: diagnostics(&folds),
            verdict: gate.verdict,
            gate,
            folds,
            theta_star,
        })
    }
}

pub fn run_stage_wfa(schedule: &FoldSchedule, ctx: &FoldContext<'_>) -> Result<WfaReport, WfaError> {
    ctx.config.validate()?;
    ctx.shortlist.verify()?;
    if ctx.shortlist.candidates().is_empty() {
        return Err(WfaError::EmptyShortlist);
    }
    if schedule.folds.is_empty() {
        return Err(WfaError::NoFolds);
    }
    let folds: Vec<FoldResult> = schedule.folds.par_iter().map(|f| run_fold(f, ctx)).collect();
    WfaReport::assemble(ctx.config, schedule.clone(), folds, ctx.shortlist)
}
