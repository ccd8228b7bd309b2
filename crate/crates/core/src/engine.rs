//! Bar-by-bar session execution under costs and the constraint set.
//!
//! Per bar: mark-to-market, equity protection (kill switch, circuit
//! breaker), `decide`, constraint filtering, fills at the bar close, state
//! transition, equity sample.
//!
//! Fill convention: longs enter at `bid + spread_eff + slippage` and exit at
//! `bid - slippage`; shorts enter at `bid - slippage` and exit at
//! `bid + spread_eff + slippage`, where `spread_eff = spread *
//! spread_multiplier`. Open longs are marked at the bid, open shorts at the
//! ask, each net of its entry commission.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::marketdata::{Bar, MarketSeries};
use crate::metrics::{EquityPoint, MetricName, MetricVector, MetricsConfig};
use crate::strategy::{
    reset_state, transition, Action, Direction, Executed, ParameterPoint, Position, Strategy, StrategyError,
    StrategyState,
};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("empty segment")]
    EmptySegment,
    #[error("invalid initial state: {0}")]
    InvalidState(String),
    #[error("invalid execution config: {0}")]
    InvalidConfig(String),
    #[error("unknown guard {0:?}")]
    UnknownGuard(String),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecutionConfig {
    pub commission_per_lot: f64,
    pub slippage: f64,
    pub spread_multiplier: f64,
    pub commission_multiplier: f64,
    pub initial_deposit: f64,
    pub leverage: f64,
    pub contract_size: f64,
}

impl Default for ExecutionConfig {
    fn default() -> Self {
        Self {
            commission_per_lot: 0.0,
            slippage: 0.0,
            spread_multiplier: 1.0,
            commission_multiplier: 1.0,
            initial_deposit: 100_000.0,
            leverage: 100.0,
            contract_size: 100_000.0,
        }
    }
}

impl ExecutionConfig {
    pub fn validate(&self) -> Result<(), SessionError> {
        let bad = |m: &str| Err(SessionError::InvalidConfig(m.into()));
        if !(self.initial_deposit > 0.0) {
            return bad("initial_deposit must be > 0");
        }
        if !(self.spread_multiplier >= 1.0) || !(self.commission_multiplier >= 1.0) {
            return bad("multipliers must be >= 1");
        }
        if !(self.slippage >= 0.0) || !(self.commission_per_lot >= 0.0) {
            return bad("slippage and commission must be >= 0");
        }
        if !(self.leverage > 0.0) || !(self.contract_size > 0.0) {
            return bad("leverage and contract_size must be > 0");
        }
        Ok(())
    }

    pub fn commission_for(&self, lot: f64) -> f64 {
        self.commission_per_lot * self.commission_multiplier * lot
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Guard {
    SpreadGuard,
    LeverageCap,
    PositionCap,
    CircuitBreaker,
    KillSwitch,
}

impl Guard {
    pub const ALL: [Guard; 5] = [
        Guard::SpreadGuard,
        Guard::LeverageCap,
        Guard::PositionCap,
        Guard::CircuitBreaker,
        Guard::KillSwitch,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Guard::SpreadGuard => "spread_guard",
            Guard::LeverageCap => "leverage_cap",
            Guard::PositionCap => "position_cap",
            Guard::CircuitBreaker => "circuit_breaker",
            Guard::KillSwitch => "kill_switch",
        }
    }
}

impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Guard {
    type Err = SessionError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Guard::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| SessionError::UnknownGuard(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitBreakerConfig {
    /// Fraction of day-start equity.
    pub daily_loss_pct: f64,
    pub cooldown_bars: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSet {
    pub max_spread: f64,
    pub max_leverage_used: f64,
    pub max_open_positions: usize,
    pub circuit_breaker: CircuitBreakerConfig,
    /// Fraction of peak equity.
    pub kill_switch_dd_pct: f64,
    /// Guards switched off, for ablation only.
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub disabled: BTreeSet<Guard>,
}

impl Default for ConstraintSet {
    fn default() -> Self {
        Self {
            max_spread: f64::MAX,
            max_leverage_used: 30.0,
            max_open_positions: 10,
            circuit_breaker: CircuitBreakerConfig {
                daily_loss_pct: 0.03,
                cooldown_bars: 12,
            },
            kill_switch_dd_pct: 0.15,
            disabled: BTreeSet::new(),
        }
    }
}

impl ConstraintSet {
    pub fn validate(&self) -> Result<(), SessionError> {
        let ok = self.max_spread > 0.0
            && self.max_leverage_used > 0.0
            && self.max_open_positions > 0
            && self.circuit_breaker.daily_loss_pct > 0.0
            && self.circuit_breaker.cooldown_bars > 0
            && self.kill_switch_dd_pct > 0.0
            && self.kill_switch_dd_pct <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(SessionError::InvalidConfig(
                "constraint thresholds must be positive and kill_switch_dd_pct in (0, 1]".into(),
            ))
        }
    }

    pub fn enabled(&self, guard: Guard) -> bool {
        !self.disabled.contains(&guard)
    }

    pub fn with_disabled(&self, guard: Guard) -> Self {
        let mut c = self.clone();
        c.disabled.insert(guard);
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeRecord {
    pub open_time: DateTime<Utc>,
    pub close_time: DateTime<Utc>,
    pub direction: Direction,
    pub lot: f64,
    pub entry_price: f64,
    pub exit_price: f64,
    /// Bid-to-bid P&L before costs.
    pub gross: f64,
    pub costs: f64,
    /// `gross - costs`.
    pub profit: f64,
    pub commission: f64,
    pub spread_cost: f64,
    pub slippage_cost: f64,
    /// Closed by the kill switch or state normalization.
    pub forced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub timestamp: DateTime<Utc>,
    pub guard: Guard,
    pub action_blocked: Option<Action>,
    /// Hard violations break feasibility; blocked entries do not.
    pub hard: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Halt {
    None,
    /// Entries were paused at least once; the session ran to the end.
    CircuitBreaker,
    KillSwitch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FillRecord {
    pub timestamp: DateTime<Utc>,
    pub direction: Direction,
    pub entry: bool,
    pub price: f64,
    pub effective_spread: f64,
    pub commission: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResult {
    pub initial_equity: f64,
    pub equity_curve: Vec<EquityPoint>,
    pub trades: Vec<TradeRecord>,
    pub violations: Vec<Violation>,
    pub fills: Vec<FillRecord>,
    pub halt: Halt,
    pub feasible: bool,
    pub final_state: StrategyState,
}

impl SessionResult {
    pub fn net_pnl(&self) -> f64 {
        self.trades.iter().map(|t| t.profit).sum()
    }

    pub fn final_equity(&self) -> f64 {
        self.equity_curve.last().map(|p| p.equity).unwrap_or(self.initial_equity)
    }

    pub fn hard_violation(&self) -> bool {
        self.violations.iter().any(|v| v.hard)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquityStatus {
    pub equity: f64,
    pub peak: f64,
    pub day_start_equity: f64,
    pub cooldown_remaining: usize,
}

impl EquityStatus {
    pub fn drawdown(&self) -> f64 {
        if self.peak > 0.0 {
            (self.peak - self.equity) / self.peak
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protection {
    None,
    HaltNewEntries { cooldown_bars: usize },
    Kill,
}

/// Equity-protection decision for the current bar; thresholds trip only
/// when strictly exceeded.
pub fn equity_protection_step(status: &EquityStatus, constraints: &ConstraintSet) -> Protection {
    if constraints.enabled(Guard::KillSwitch) && status.drawdown() > constraints.kill_switch_dd_pct {
        return Protection::Kill;
    }
    if constraints.enabled(Guard::CircuitBreaker) && status.cooldown_remaining == 0 && status.day_start_equity > 0.0 {
        let loss = (status.day_start_equity - status.equity) / status.day_start_equity;
        if loss > constraints.circuit_breaker.daily_loss_pct {
            return Protection::HaltNewEntries {
                cooldown_bars: constraints.circuit_breaker.cooldown_bars,
            };
        }
    }
    Protection::None
}

#[derive(Debug, Clone, PartialEq)]
pub struct Filtered {
    pub accepted: Vec<Action>,
    pub blocked: Vec<Violation>,
}

/// Entry filtering. Closes and adjustments always pass.
pub fn apply_constraints(
    actions: Vec<Action>,
    state: &StrategyState,
    bar: &Bar,
    status: &EquityStatus,
    constraints: &ConstraintSet,
    exec: &ExecutionConfig,
) -> Filtered {
    let spread = bar.spread * exec.spread_multiplier;
    let mut notional: f64 = state
        .open_positions
        .iter()
        .map(|p| p.lot * exec.contract_size * bar.bid_close)
        .sum();
    let mut open_count = state.open_positions.len();
    let mut accepted = Vec::with_capacity(actions.len());
    let mut blocked = Vec::new();
    for action in actions {
        let Action::Open { lot, .. } = action else {
            if action != Action::NoOp {
                accepted.push(action);
            }
            continue;
        };
        let block = |guard: Guard| Violation {
            timestamp: bar.timestamp,
            guard,
            action_blocked: Some(action.clone()),
            hard: false,
        };
        if constraints.enabled(Guard::CircuitBreaker) && status.cooldown_remaining > 0 {
            blocked.push(block(Guard::CircuitBreaker));
            continue;
        }
        if constraints.enabled(Guard::SpreadGuard) && spread > constraints.max_spread {
            blocked.push(block(Guard::SpreadGuard));
            continue;
        }
        if constraints.enabled(Guard::PositionCap) && open_count >= constraints.max_open_positions {
            blocked.push(block(Guard::PositionCap));
            continue;
        }
        let add = lot * exec.contract_size * bar.bid_close;
        let projected = if status.equity > 0.0 {
            (notional + add) / status.equity
        } else {
            f64::INFINITY
        };
        if constraints.enabled(Guard::LeverageCap) && projected > constraints.max_leverage_used {
            blocked.push(block(Guard::LeverageCap));
            continue;
        }
        notional += add;
        open_count += 1;
        accepted.push(action);
    }
    Filtered { accepted, blocked }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StressSpec {
    pub spread_multiplier: f64,
    pub commission_multiplier: f64,
    pub slippage: f64,
    /// Start the stressed session this many bars late.
    #[serde(default)]
    pub time_shift_bars: usize,
}

impl StressSpec {
    pub fn identity() -> Self {
        Self {
            spread_multiplier: 1.0,
            commission_multiplier: 1.0,
            slippage: 0.0,
            time_shift_bars: 0,
        }
    }
}

pub fn apply_stress(exec: &ExecutionConfig, stress: &StressSpec) -> Result<ExecutionConfig, SessionError> {
    if !(stress.spread_multiplier >= 1.0) || !(stress.commission_multiplier >= 1.0) {
        return Err(SessionError::InvalidConfig("stress multipliers must be >= 1".into()));
    }
    if !(stress.slippage >= 0.0) {
        return Err(SessionError::InvalidConfig("stress slippage must be >= 0".into()));
    }
    Ok(ExecutionConfig {
        spread_multiplier: stress.spread_multiplier,
        commission_multiplier: stress.commission_multiplier,
        slippage: stress.slippage,
        ..exec.clone()
    })
}

struct Book<'a> {
    exec: &'a ExecutionConfig,
    balance: f64,
}

impl Book<'_> {
    fn unrealized(&self, p: &Position, bar: &Bar, spread: f64) -> f64 {
        let cs = self.exec.contract_size;
        let mark = match p.direction {
            Direction::Long => bar.bid_close,
            Direction::Short => bar.bid_close + spread,
        };
        (mark - p.entry_price) * p.direction.sign() * p.lot * cs - p.entry_commission
    }

    fn equity(&self, state: &StrategyState, bar: &Bar, spread: f64) -> f64 {
        self.balance
            + state
                .open_positions
                .iter()
                .map(|p| self.unrealized(p, bar, spread))
                .sum::<f64>()
    }

    fn entry_fill(&self, direction: Direction, bar: &Bar, spread: f64) -> f64 {
        match direction {
            Direction::Long => bar.bid_close + spread + self.exec.slippage,
            Direction::Short => bar.bid_close - self.exec.slippage,
        }
    }

    fn close(&mut self, p: &Position, bar: &Bar, spread: f64, forced: bool) -> (TradeRecord, FillRecord) {
        let cs = self.exec.contract_size;
        let slip = self.exec.slippage;
        let (exit_price, spread_paid) = match p.direction {
            Direction::Long => (bar.bid_close - slip, p.entry_spread),
            Direction::Short => (bar.bid_close + spread + slip, spread),
        };
        let gross = (bar.bid_close - p.entry_bid) * p.direction.sign() * p.lot * cs;
        let spread_cost = spread_paid * p.lot * cs;
        let slippage_cost = 2.0 * slip * p.lot * cs;
        let costs = p.entry_commission + spread_cost + slippage_cost;
        let profit = gross - costs;
        self.balance += profit;
        let trade = TradeRecord {
            open_time: p.entry_time,
            close_time: bar.timestamp,
            direction: p.direction,
            lot: p.lot,
            entry_price: p.entry_price,
            exit_price,
            gross,
            costs,
            profit,
            commission: p.entry_commission,
            spread_cost,
            slippage_cost,
            forced,
        };
        let fill = FillRecord {
            timestamp: bar.timestamp,
            direction: p.direction,
            entry: false,
            price: exit_price,
            effective_spread: spread,
            commission: 0.0,
        };
        (trade, fill)
    }
}

/// Everything a session needs besides the bars.
#[derive(Clone, Copy)]
pub struct SessionSpec<'a> {
    pub strategy: &'a dyn Strategy,
    pub params: &'a ParameterPoint,
    pub exec: &'a ExecutionConfig,
    pub constraints: &'a ConstraintSet,
}

struct Session<'a> {
    spec: SessionSpec<'a>,
    book: Book<'a>,
    state: StrategyState,
    peak: f64,
    day: Option<NaiveDate>,
    day_start_equity: f64,
    last_equity: f64,
    cooldown: usize,
    leverage_breached: bool,
    halted: bool,
    cb_tripped: bool,
    out: SessionResult,
}

impl<'a> Session<'a> {
    fn new(spec: SessionSpec<'a>, initial_state: StrategyState) -> Self {
        let deposit = spec.exec.initial_deposit;
        Self {
            spec,
            book: Book {
                exec: spec.exec,
                balance: deposit,
            },
            state: initial_state,
            peak: deposit,
            day: None,
            day_start_equity: deposit,
            last_equity: deposit,
            cooldown: 0,
            leverage_breached: false,
            halted: false,
            cb_tripped: false,
            out: SessionResult {
                initial_equity: deposit,
                equity_curve: Vec::new(),
                trades: Vec::new(),
                violations: Vec::new(),
                fills: Vec::new(),
                halt: Halt::None,
                feasible: true,
                final_state: reset_state(),
            },
        }
    }

    fn sample(&mut self, bar: &Bar, equity: f64) {
        self.out.equity_curve.push(EquityPoint {
            timestamp: bar.timestamp,
            equity,
        });
        self.last_equity = equity;
        self.peak = self.peak.max(equity);
    }

    fn flatten(&mut self, bar: &Bar, spread: f64) {
        let positions = std::mem::take(&mut self.state.open_positions);
        for p in &positions {
            let (trade, fill) = self.book.close(p, bar, spread, true);
            self.out.trades.push(trade);
            self.out.fills.push(fill);
        }
    }

    fn step(&mut self, bar: &Bar) -> Result<(), SessionError> {
        let exec = self.spec.exec;
        let constraints = self.spec.constraints;
        let spread = bar.spread * exec.spread_multiplier;
        if self.halted {
            let e = self.book.balance;
            self.sample(bar, e);
            return Ok(());
        }
        let date = bar.date();
        if self.day != Some(date) {
            self.day = Some(date);
            self.day_start_equity = self.last_equity;
        }

        let equity = self.book.equity(&self.state, bar, spread);
        let status = EquityStatus {
            equity,
            peak: self.peak.max(equity),
            day_start_equity: self.day_start_equity,
            cooldown_remaining: self.cooldown,
        };

        if constraints.enabled(Guard::LeverageCap) {
            let notional: f64 = self
                .state
                .open_positions
                .iter()
                .map(|p| p.lot * exec.contract_size * bar.bid_close)
                .sum();
            let used = if equity > 0.0 {
                notional / equity
            } else if notional > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            let breached = used > constraints.max_leverage_used;
            if breached && !self.leverage_breached {
                self.out.violations.push(Violation {
                    timestamp: bar.timestamp,
                    guard: Guard::LeverageCap,
                    action_blocked: None,
                    hard: true,
                });
            }
            self.leverage_breached = breached;
        }

        match equity_protection_step(&status, constraints) {
            Protection::Kill => {
                self.flatten(bar, spread);
                self.out.violations.push(Violation {
                    timestamp: bar.timestamp,
                    guard: Guard::KillSwitch,
                    action_blocked: None,
                    hard: true,
                });
                self.halted = true;
                self.out.halt = Halt::KillSwitch;
                let e = self.book.balance;
                self.sample(bar, e);
                return Ok(());
            }
            Protection::HaltNewEntries { cooldown_bars } => {
                self.cooldown = cooldown_bars;
                self.cb_tripped = true;
                self.out.violations.push(Violation {
                    timestamp: bar.timestamp,
                    guard: Guard::CircuitBreaker,
                    action_blocked: None,
                    hard: false,
                });
            }
            Protection::None => {}
        }
        let status = EquityStatus {
            cooldown_remaining: self.cooldown,
            ..status
        };

        let actions = self.spec.strategy.decide(self.spec.params, bar, &self.state);
        let filtered = apply_constraints(actions, &self.state, bar, &status, constraints, exec);
        self.out.violations.extend(filtered.blocked);

        let mut executed = Vec::with_capacity(filtered.accepted.len());
        let mut closed: BTreeSet<u64> = BTreeSet::new();
        for action in filtered.accepted {
            match &action {
                Action::Open { direction, lot, .. } => {
                    let price = self.book.entry_fill(*direction, bar, spread);
                    let commission = exec.commission_for(*lot);
                    self.out.fills.push(FillRecord {
                        timestamp: bar.timestamp,
                        direction: *direction,
                        entry: true,
                        price,
                        effective_spread: spread,
                        commission,
                    });
                    executed.push(Executed {
                        action,
                        fill_price: Some(price),
                        commission,
                        spread,
                    });
                }
                Action::Close { position_id } => {
                    let id = *position_id;
                    let pos = match self.state.position(id) {
                        Some(p) if !closed.contains(&id) => p.clone(),
                        _ => return Err(StrategyError::UnknownPosition(id).into()),
                    };
                    closed.insert(id);
                    let (trade, fill) = self.book.close(&pos, bar, spread, false);
                    let exit = trade.exit_price;
                    self.out.trades.push(trade);
                    self.out.fills.push(fill);
                    executed.push(Executed {
                        action,
                        fill_price: Some(exit),
                        commission: 0.0,
                        spread,
                    });
                }
                _ => executed.push(Executed::unfilled(action)),
            }
        }
        let mut next = transition(self.spec.strategy, self.spec.params, &self.state, bar, &executed)?;
        next.margin_used = next
            .open_positions
            .iter()
            .map(|p| p.lot * exec.contract_size * bar.bid_close / exec.leverage)
            .sum();
        self.state = next;

        let e = self.book.equity(&self.state, bar, spread);
        self.sample(bar, e);
        self.cooldown = self.cooldown.saturating_sub(1);
        Ok(())
    }

    fn finish(mut self) -> SessionResult {
        if self.out.halt == Halt::None && self.cb_tripped {
            self.out.halt = Halt::CircuitBreaker;
        }
        self.out.feasible = !self.out.violations.iter().any(|v| v.hard);
        self.out.final_state = self.state;
        self.out
    }
}

fn check_inputs(segment: &MarketSeries, spec: &SessionSpec<'_>, initial_state: &StrategyState) -> Result<(), SessionError> {
    if segment.is_empty() {
        return Err(SessionError::EmptySegment);
    }
    spec.exec.validate()?;
    spec.constraints.validate()?;
    if initial_state.open_positions.iter().any(|p| !(p.lot > 0.0)) {
        return Err(SessionError::InvalidState("position with non-positive lot".into()));
    }
    let mut ids: Vec<u64> = initial_state.open_positions.iter().map(|p| p.id).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) || ids.iter().any(|&id| id >= initial_state.next_position_id) {
        return Err(SessionError::InvalidState("inconsistent position ids".into()));
    }
    Ok(())
}

pub fn run_session(
    segment: &MarketSeries,
    spec: SessionSpec<'_>,
    initial_state: StrategyState,
) -> Result<SessionResult, SessionError> {
    check_inputs(segment, &spec, &initial_state)?;
    let mut session = Session::new(spec, initial_state);
    for bar in segment.bars() {
        session.step(bar)?;
    }
    Ok(session.finish())
}

/// One continuous run over `segment` with state normalization at
/// `reset_at`: positions are force-closed on the last bar before the
/// boundary, strategy state returns to canonical and the account is
/// re-based to the initial deposit. Returns the pre-boundary part and the
/// forward part.
pub fn run_session_with_reset(
    segment: &MarketSeries,
    reset_at: DateTime<Utc>,
    spec: SessionSpec<'_>,
) -> Result<(Option<SessionResult>, SessionResult), SessionError> {
    let initial_state = reset_state();
    check_inputs(segment, &spec, &initial_state)?;
    let bars = segment.bars();
    let split = bars.partition_point(|b| b.timestamp < reset_at);
    if split == bars.len() {
        return Err(SessionError::EmptySegment);
    }
    let prefix = if split > 0 {
        let mut pre = Session::new(spec, initial_state);
        for bar in &bars[..split] {
            pre.step(bar)?;
        }
        let last = &bars[split - 1];
        let spread = last.spread * spec.exec.spread_multiplier;
        if !pre.halted {
            pre.flatten(last, spread);
        }
        Some(pre.finish())
    } else {
        None
    };
    let mut forward = Session::new(spec, reset_state());
    for bar in &bars[split..] {
        forward.step(bar)?;
    }
    Ok((prefix, forward.finish()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub guard: Guard,
    pub on: MetricVector,
    pub off: MetricVector,
    /// `M(on) - M(off)`; `None` where either side is undefined.
    pub delta: std::collections::BTreeMap<MetricName, Option<f64>>,
    pub guard_fired: bool,
}

pub const ABLATION_METRICS: [MetricName; 7] = [
    MetricName::Sharpe,
    MetricName::Cagr,
    MetricName::Mdd,
    MetricName::Calmar,
    MetricName::NTrades,
    MetricName::TradesPerDay,
    MetricName::CMax,
];

pub fn metric_delta(on: &MetricVector, off: &MetricVector) -> std::collections::BTreeMap<MetricName, Option<f64>> {
    ABLATION_METRICS
        .iter()
        .map(|&m| {
            let d = match (on.get(m), off.get(m)) {
                (Some(a), Some(b)) => Some(a - b),
                _ => None,
            };
            (m, d)
        })
        .collect()
}

/// ΔM(g): the session with every guard on minus the session with `guard` off.
pub fn ablation_run(
    segment: &MarketSeries,
    spec: SessionSpec<'_>,
    metrics: &MetricsConfig,
    guard: Guard,
) -> Result<AblationResult, SessionError> {
    let days = segment.trading_dates().len();
    let on_session = run_session(segment, spec, reset_state())?;
    let off_constraints = spec.constraints.with_disabled(guard);
    let off_session = run_session(
        segment,
        SessionSpec {
            constraints: &off_constraints,
            ..spec
        },
        reset_state(),
    )?;
    let on = MetricVector::from_session(&on_session, days, metrics);
    let off = MetricVector::from_session(&off_session, days, metrics);
    Ok(AblationResult {
        guard,
        delta: metric_delta(&on, &off),
        guard_fired: on_session.violations.iter().any(|v| v.guard == guard),
        on,
        off,
    })
}
