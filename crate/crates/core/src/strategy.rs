//! Stateful strategy contract and the reference strategies.
//!
//! A strategy is a pair of pure functions: a policy `decide` that maps
//! `(params, bar, state)` to actions, and state dynamics applied by
//! [`transition`] once the engine has filled the accepted actions. All
//! path dependence lives in [`StrategyState`], so resetting it to
//! [`reset_state`] removes every trace of prior bars.

use std::cmp::Ordering;
use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::marketdata::Bar;

#[derive(Debug, Error, PartialEq)]
pub enum StrategyError {
    #[error("action references unknown position id {0}")]
    UnknownPosition(u64),
    #[error("invalid open action: lot must be > 0")]
    InvalidLot,
    #[error("invalid parameter grid: {0}")]
    InvalidGrid(String),
    #[error("parameter {name}={value} is not on its grid")]
    OffGrid { name: String, value: f64 },
    #[error("unknown strategy {0:?}")]
    UnknownStrategy(String),
    #[error("missing parameter {0:?}")]
    MissingParameter(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Dimension {
    pub fn len(&self) -> usize {
        ((self.max - self.min) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Rounded to 12 decimals so `0.1 + 2 * 0.01` prints as `0.12`.
    pub fn value_at(&self, k: usize) -> f64 {
        let v = self.min + k as f64 * self.step;
        (v * 1e12).round() / 1e12
    }

    /// Grid index of `value`, if it lies on this dimension's grid.
    pub fn index_of(&self, value: f64) -> Option<usize> {
        let k = ((value - self.min) / self.step).round();
        if k < 0.0 || k as usize >= self.len() {
            return None;
        }
        let on_grid = (self.value_at(k as usize) - value).abs() <= 1e-9 * value.abs().max(1.0);
        on_grid.then_some(k as usize)
    }
}

/// One grid point. Values are keyed by dimension name; ordering is
/// lexicographic by name, then by value.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterPoint {
    pub values: BTreeMap<String, f64>,
}

impl ParameterPoint {
    pub fn new(values: impl IntoIterator<Item = (String, f64)>) -> Self {
        Self {
            values: values.into_iter().collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }

    pub fn require(&self, name: &str) -> Result<f64, StrategyError> {
        self.get(name)
            .ok_or_else(|| StrategyError::MissingParameter(name.to_string()))
    }

    pub fn label(&self) -> String {
        self.values
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(",")
    }
}

impl PartialEq for ParameterPoint {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for ParameterPoint {}

impl PartialOrd for ParameterPoint {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ParameterPoint {
    fn cmp(&self, other: &Self) -> Ordering {
        let mut a = self.values.iter();
        let mut b = other.values.iter();
        loop {
            match (a.next(), b.next()) {
                (None, None) => return Ordering::Equal,
                (None, Some(_)) => return Ordering::Less,
                (Some(_), None) => return Ordering::Greater,
                (Some((ka, va)), Some((kb, vb))) => {
                    let o = ka.cmp(kb).then(va.total_cmp(vb));
                    if o != Ordering::Equal {
                        return o;
                    }
                }
            }
        }
    }
}

/// The finite search space and its evaluation budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterGrid {
    pub dimensions: Vec<Dimension>,
    pub budget: usize,
}

impl ParameterGrid {
    pub fn validate(&self) -> Result<(), StrategyError> {
        if self.dimensions.is_empty() {
            return Err(StrategyError::InvalidGrid("grid has no dimensions".into()));
        }
        let mut names: Vec<&str> = self.dimensions.iter().map(|d| d.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(StrategyError::InvalidGrid("duplicate dimension name".into()));
        }
        for d in &self.dimensions {
            if !(d.step > 0.0) || !(d.min <= d.max) || !d.min.is_finite() || !d.max.is_finite() {
                return Err(StrategyError::InvalidGrid(format!(
                    "dimension {} needs step > 0 and min <= max",
                    d.name
                )));
            }
        }
        Ok(())
    }

    fn sorted_dims(&self) -> Vec<&Dimension> {
        let mut dims: Vec<&Dimension> = self.dimensions.iter().collect();
        dims.sort_by(|a, b| a.name.cmp(&b.name));
        dims
    }

    pub fn size(&self) -> usize {
        self.dimensions.iter().map(Dimension::len).product()
    }

    /// All points, lexicographic by dimension name then value.
    pub fn enumerate(&self) -> Vec<ParameterPoint> {
        let dims = self.sorted_dims();
        let mut out = Vec::with_capacity(self.size());
        let mut idx = vec![0usize; dims.len()];
        loop {
            out.push(self.point_from(&dims, &idx));
            let mut d = dims.len();
            loop {
                if d == 0 {
                    return out;
                }
                d -= 1;
                idx[d] += 1;
                if idx[d] < dims[d].len() {
                    break;
                }
                idx[d] = 0;
            }
        }
    }

    fn point_from(&self, dims: &[&Dimension], idx: &[usize]) -> ParameterPoint {
        ParameterPoint::new(
            dims.iter()
                .zip(idx)
                .map(|(d, &k)| (d.name.clone(), d.value_at(k))),
        )
    }

    pub fn contains(&self, point: &ParameterPoint) -> bool {
        self.indices_of(point).is_ok()
    }

    pub fn indices_of(&self, point: &ParameterPoint) -> Result<Vec<usize>, StrategyError> {
        let dims = self.sorted_dims();
        if point.values.len() != dims.len() {
            return Err(StrategyError::InvalidGrid("point dimensionality mismatch".into()));
        }
        dims.iter()
            .map(|d| {
                let v = point.require(&d.name)?;
                d.index_of(v).ok_or(StrategyError::OffGrid {
                    name: d.name.clone(),
                    value: v,
                })
            })
            .collect()
    }

    /// Axis-aligned ±1 step neighbours that lie inside the grid.
    pub fn neighbors(&self, point: &ParameterPoint) -> Result<Vec<ParameterPoint>, StrategyError> {
        let dims = self.sorted_dims();
        let idx = self.indices_of(point)?;
        let mut out = Vec::new();
        for d in 0..dims.len() {
            if idx[d] > 0 {
                let mut n = idx.clone();
                n[d] -= 1;
                out.push(self.point_from(&dims, &n));
            }
            if idx[d] + 1 < dims[d].len() {
                let mut n = idx.clone();
                n[d] += 1;
                out.push(self.point_from(&dims, &n));
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Long,
    Short,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Long => 1.0,
            Direction::Short => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub id: u64,
    pub direction: Direction,
    pub lot: f64,
    pub entry_price: f64,
    pub entry_time: chrono::DateTime<chrono::Utc>,
    pub stop: Option<f64>,
    pub take_profit: Option<f64>,
    /// Entry-side costs carried until the position closes.
    pub entry_commission: f64,
    pub entry_spread: f64,
    pub entry_bid: f64,
}

/// Internal strategy state; everything that makes a strategy path dependent.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StrategyState {
    pub open_positions: Vec<Position>,
    pub grid_level: i64,
    /// Reference price for trailing or ladder logic.
    pub trailing_anchor: Option<f64>,
    pub counters: BTreeMap<String, i64>,
    pub margin_used: f64,
    /// Recent closes for lookback features, most recent last.
    pub lookback: VecDeque<f64>,
    pub next_position_id: u64,
}

impl StrategyState {
    pub fn is_canonical(&self) -> bool {
        self.open_positions.is_empty()
            && self.grid_level == 0
            && self.trailing_anchor.is_none()
            && self.counters.values().all(|&c| c == 0)
            && self.margin_used == 0.0
            && self.lookback.is_empty()
            && self.next_position_id == 0
    }

    pub fn position(&self, id: u64) -> Option<&Position> {
        self.open_positions.iter().find(|p| p.id == id)
    }

    pub fn counter(&self, name: &str) -> i64 {
        self.counters.get(name).copied().unwrap_or(0)
    }
}

pub fn reset_state() -> StrategyState {
    StrategyState::default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    Open {
        direction: Direction,
        lot: f64,
        stop: Option<f64>,
        take_profit: Option<f64>,
    },
    Close {
        position_id: u64,
    },
    AdjustStop {
        position_id: u64,
        stop: Option<f64>,
    },
    AdjustTakeProfit {
        position_id: u64,
        take_profit: Option<f64>,
    },
    NoOp,
}

impl Action {
    pub fn is_entry(&self) -> bool {
        matches!(self, Action::Open { .. })
    }
}

/// An accepted action together with its fill.
#[derive(Debug, Clone, PartialEq)]
pub struct Executed {
    pub action: Action,
    /// Fill price for opens and closes; `None` for adjustments.
    pub fill_price: Option<f64>,
    pub commission: f64,
    pub spread: f64,
}

impl Executed {
    pub fn unfilled(action: Action) -> Self {
        Self {
            action,
            fill_price: None,
            commission: 0.0,
            spread: 0.0,
        }
    }
}

/// Pluggable strategy contract. Implementations must be deterministic and
/// must not keep mutable state outside [`StrategyState`].
pub trait Strategy: Send + Sync {
    fn name(&self) -> &str;

    fn decide(&self, params: &ParameterPoint, bar: &Bar, state: &StrategyState) -> Vec<Action>;

    /// Strategy-specific dynamics, applied after position bookkeeping.
    fn update(&self, params: &ParameterPoint, state: &mut StrategyState, bar: &Bar, executed: &[Executed]);
}

/// State dynamics: position bookkeeping for executed actions, then the
/// strategy's own update.
pub fn transition(
    strategy: &dyn Strategy,
    params: &ParameterPoint,
    state: &StrategyState,
    bar: &Bar,
    executed: &[Executed],
) -> Result<StrategyState, StrategyError> {
    let mut next = state.clone();
    for ex in executed {
        match &ex.action {
            Action::Open {
                direction,
                lot,
                stop,
                take_profit,
            } => {
                if !(*lot > 0.0) {
                    return Err(StrategyError::InvalidLot);
                }
                let id = next.next_position_id;
                next.next_position_id += 1;
                next.open_positions.push(Position {
                    id,
                    direction: *direction,
                    lot: *lot,
                    entry_price: ex.fill_price.unwrap_or(bar.bid_close),
                    entry_time: bar.timestamp,
                    stop: *stop,
                    take_profit: *take_profit,
                    entry_commission: ex.commission,
                    entry_spread: ex.spread,
                    entry_bid: bar.bid_close,
                });
            }
            Action::Close { position_id } => {
                let at = next
                    .open_positions
                    .iter()
                    .position(|p| p.id == *position_id)
                    .ok_or(StrategyError::UnknownPosition(*position_id))?;
                next.open_positions.remove(at);
            }
            Action::AdjustStop { position_id, stop } => {
                let p = next
                    .open_positions
                    .iter_mut()
                    .find(|p| p.id == *position_id)
                    .ok_or(StrategyError::UnknownPosition(*position_id))?;
                p.stop = *stop;
            }
            Action::AdjustTakeProfit {
                position_id,
                take_profit,
            } => {
                let p = next
                    .open_positions
                    .iter_mut()
                    .find(|p| p.id == *position_id)
                    .ok_or(StrategyError::UnknownPosition(*position_id))?;
                p.take_profit = *take_profit;
            }
            Action::NoOp => {}
        }
    }
    strategy.update(params, &mut next, bar, executed);
    Ok(next)
}

/// Grid mean reversion: ladders positions every `grid_step` against the
/// move away from the anchor, up to `max_levels`, each with a fixed
/// `take_profit` distance.
///
/// Rules, evaluated on the bar close:
/// - first bar of a session sets the anchor, no entries;
/// - each open position whose take-profit is reached is closed;
/// - with `grid_level >= 0` and `close <= anchor - grid_step`, open long;
/// - with `grid_level <= 0` and `close >= anchor + grid_step`, open short;
/// - the anchor moves to the close on every entry and whenever the book
///   goes flat.
#[derive(Debug, Clone)]
pub struct GridStrategy {
    pub lot: f64,
}

impl Default for GridStrategy {
    fn default() -> Self {
        Self { lot: 1.0 }
    }
}

impl Strategy for GridStrategy {
    fn name(&self) -> &str {
        "grid"
    }

    fn decide(&self, params: &ParameterPoint, bar: &Bar, state: &StrategyState) -> Vec<Action> {
        let step = params.get("grid_step").unwrap_or(f64::INFINITY);
        let max_levels = params.get("max_levels").unwrap_or(0.0).round() as i64;
        let tp = params.get("take_profit").unwrap_or(f64::INFINITY);
        let close = bar.bid_close;
        let mut actions = Vec::new();

        let mut closing = 0;
        for p in &state.open_positions {
            let hit = match (p.direction, p.take_profit) {
                (Direction::Long, Some(t)) => close >= t,
                (Direction::Short, Some(t)) => close <= t,
                _ => false,
            };
            if hit {
                actions.push(Action::Close { position_id: p.id });
                closing += 1;
            }
        }

        let Some(anchor) = state.trailing_anchor else {
            return actions;
        };
        let level = state.grid_level;
        let all_closing = closing == state.open_positions.len();
        if level >= 0 && level < max_levels && close <= anchor - step {
            actions.push(Action::Open {
                direction: Direction::Long,
                lot: self.lot,
                stop: None,
                take_profit: Some(close + tp),
            });
        } else if level <= 0 && -level < max_levels && close >= anchor + step && (level < 0 || all_closing) {
            actions.push(Action::Open {
                direction: Direction::Short,
                lot: self.lot,
                stop: None,
                take_profit: Some(close - tp),
            });
        }
        actions
    }

    fn update(&self, _params: &ParameterPoint, state: &mut StrategyState, bar: &Bar, executed: &[Executed]) {
        let longs = state
            .open_positions
            .iter()
            .filter(|p| p.direction == Direction::Long)
            .count() as i64;
        let shorts = state.open_positions.len() as i64 - longs;
        state.grid_level = longs - shorts;
        let opened = executed.iter().any(|e| e.action.is_entry());
        let flattened = state.open_positions.is_empty()
            && executed.iter().any(|e| matches!(e.action, Action::Close { .. }));
        if state.trailing_anchor.is_none() || opened || flattened {
            state.trailing_anchor = Some(bar.bid_close);
        }
        let fills = executed.iter().filter(|e| e.fill_price.is_some()).count() as i64;
        if fills > 0 {
            *state.counters.entry("fills".into()).or_insert(0) += fills;
        }
    }
}

/// Moving-average cross entry with a trailing stop.
///
/// During the first `slow_len` bars of a session the strategy only
/// accumulates its lookback window. Afterwards a change in sign of
/// `fast_ma - slow_ma` opens a position in the direction of the new sign
/// (one position at a time). An open position is closed when the close
/// retraces `trail_dist` from the best close since entry, or on the
/// opposite cross; otherwise its stop is ratcheted behind the anchor.
#[derive(Debug, Clone)]
pub struct TrailStrategy {
    pub lot: f64,
}

impl Default for TrailStrategy {
    fn default() -> Self {
        Self { lot: 1.0 }
    }
}

struct TrailParams {
    fast: usize,
    slow: usize,
    trail: f64,
}

impl TrailStrategy {
    fn params(params: &ParameterPoint) -> Option<TrailParams> {
        let fast = params.get("fast_len")?.round();
        let slow = params.get("slow_len")?.round();
        let trail = params.get("trail_dist")?;
        if fast < 1.0 || slow <= fast || !(trail > 0.0) {
            return None;
        }
        Some(TrailParams {
            fast: fast as usize,
            slow: slow as usize,
            trail,
        })
    }

    /// Sign of fast-minus-slow MA over the lookback plus the current close;
    /// `None` while warming up.
    fn cross_sign(p: &TrailParams, lookback: &VecDeque<f64>, close: f64) -> Option<i64> {
        if lookback.len() + 1 < p.slow {
            return None;
        }
        let window: Vec<f64> = lookback
            .iter()
            .copied()
            .skip(lookback.len() + 1 - p.slow)
            .chain(std::iter::once(close))
            .collect();
        let slow = window.iter().sum::<f64>() / p.slow as f64;
        let fast = window[p.slow - p.fast..].iter().sum::<f64>() / p.fast as f64;
        Some(match fast.partial_cmp(&slow) {
            Some(Ordering::Greater) => 1,
            Some(Ordering::Less) => -1,
            _ => 0,
        })
    }
}

impl Strategy for TrailStrategy {
    fn name(&self) -> &str {
        "trail"
    }

    fn decide(&self, params: &ParameterPoint, bar: &Bar, state: &StrategyState) -> Vec<Action> {
        let Some(p) = Self::params(params) else {
            return Vec::new();
        };
        let close = bar.bid_close;
        let Some(sign) = Self::cross_sign(&p, &state.lookback, close) else {
            return Vec::new();
        };
        let prev = state.counter("cross_sign");

        if let Some(pos) = state.open_positions.first() {
            let anchor = state.trailing_anchor.unwrap_or(pos.entry_bid);
            let (anchor, retraced, opposite) = match pos.direction {
                Direction::Long => {
                    let a = anchor.max(close);
                    (a, close <= a - p.trail, sign < 0 && prev >= 0)
                }
                Direction::Short => {
                    let a = anchor.min(close);
                    (a, close >= a + p.trail, sign > 0 && prev <= 0)
                }
            };
            if retraced || opposite {
                return vec![Action::Close {
                    position_id: pos.id,
                }];
            }
            let new_stop = anchor - pos.direction.sign() * p.trail;
            let improves = match (pos.direction, pos.stop) {
                (_, None) => true,
                (Direction::Long, Some(s)) => new_stop > s,
                (Direction::Short, Some(s)) => new_stop < s,
            };
            if improves {
                return vec![Action::AdjustStop {
                    position_id: pos.id,
                    stop: Some(new_stop),
                }];
            }
            return Vec::new();
        }

        if prev != 0 && sign != 0 && sign != prev {
            let direction = if sign > 0 { Direction::Long } else { Direction::Short };
            return vec![Action::Open {
                direction,
                lot: self.lot,
                stop: Some(close - direction.sign() * p.trail),
                take_profit: None,
            }];
        }
        Vec::new()
    }

    fn update(&self, params: &ParameterPoint, state: &mut StrategyState, bar: &Bar, _executed: &[Executed]) {
        let close = bar.bid_close;
        if let Some(p) = Self::params(params) {
            if let Some(sign) = Self::cross_sign(&p, &state.lookback, close) {
                if sign != 0 {
                    state.counters.insert("cross_sign".into(), sign);
                }
            }
            state.lookback.push_back(close);
            while state.lookback.len() > p.slow {
                state.lookback.pop_front();
            }
        }
        state.trailing_anchor = state.open_positions.first().map(|pos| {
            let prior = state.trailing_anchor.unwrap_or(pos.entry_bid);
            match pos.direction {
                Direction::Long => prior.max(close),
                Direction::Short => prior.min(close),
            }
        });
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum ScriptStep {
    Open { direction: Direction, lot: f64 },
    CloseAll,
}

/// Replays a fixed timetable of entries and exits; ignores prices and
/// parameters entirely. Used for cost and guard tests where fills must not
/// depend on execution assumptions.
#[derive(Debug, Clone, Default)]
pub struct ScriptedStrategy {
    pub steps: BTreeMap<chrono::DateTime<chrono::Utc>, Vec<ScriptStep>>,
}

impl ScriptedStrategy {
    pub fn new(steps: impl IntoIterator<Item = (chrono::DateTime<chrono::Utc>, ScriptStep)>) -> Self {
        let mut map: BTreeMap<_, Vec<ScriptStep>> = BTreeMap::new();
        for (t, s) in steps {
            map.entry(t).or_default().push(s);
        }
        Self { steps: map }
    }
}

impl Strategy for ScriptedStrategy {
    fn name(&self) -> &str {
        "scripted"
    }

    fn decide(&self, _params: &ParameterPoint, bar: &Bar, state: &StrategyState) -> Vec<Action> {
        let Some(steps) = self.steps.get(&bar.timestamp) else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for s in steps {
            match s {
                ScriptStep::Open { direction, lot } => out.push(Action::Open {
                    direction: *direction,
                    lot: *lot,
                    stop: None,
                    take_profit: None,
                }),
                ScriptStep::CloseAll => out.extend(
                    state
                        .open_positions
                        .iter()
                        .map(|p| Action::Close { position_id: p.id }),
                ),
            }
        }
        out
    }

    fn update(&self, _params: &ParameterPoint, _state: &mut StrategyState, _bar: &Bar, _executed: &[Executed]) {}
}

/// Reference strategy by config name.
pub fn by_name(name: &str, lot: f64) -> Result<Box<dyn Strategy>, StrategyError> {
    match name {
        "grid" => Ok(Box::new(GridStrategy { lot })),
        "trail" => Ok(Box::new(TrailStrategy { lot })),
        other => Err(StrategyError::UnknownStrategy(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marketdata::midnight;
    use chrono::{Duration, NaiveDate};

    pub(crate) fn bar(i: i64, close: f64) -> Bar {
        Bar {
            timestamp: midnight(NaiveDate::from_ymd_opt(2024, 1, 1).unwrap()) + Duration::minutes(5 * i),
            bid_open: close,
            bid_high: close,
            bid_low: close,
            bid_close: close,
            spread: 0.0,
            volume: None,
        }
    }

    fn grid_params(step: f64, levels: f64, tp: f64) -> ParameterPoint {
        ParameterPoint::new([
            ("grid_step".to_string(), step),
            ("max_levels".to_string(), levels),
            ("take_profit".to_string(), tp),
        ])
    }

    fn fill_all(state: &StrategyState, bar: &Bar, actions: Vec<Action>) -> Vec<Executed> {
        let _ = state;
        actions
            .into_iter()
            .map(|a| match a {
                Action::Open { .. } | Action::Close { .. } => Executed {
                    action: a,
                    fill_price: Some(bar.bid_close),
                    commission: 0.0,
                    spread: 0.0,
                },
                other => Executed::unfilled(other),
            })
            .collect()
    }

    fn run_plain(s: &dyn Strategy, p: &ParameterPoint, closes: &[f64], init: StrategyState) -> (StrategyState, Vec<Vec<Action>>) {
        let mut state = init;
        let mut log = Vec::new();
        for (i, &c) in closes.iter().enumerate() {
            let b = bar(i as i64, c);
            let acts = s.decide(p, &b, &state);
            log.push(acts.clone());
            let ex = fill_all(&state, &b, acts);
            state = transition(s, p, &state, &b, &ex).unwrap();
        }
        (state, log)
    }

    #[test]
    fn grid_enumeration_order_and_neighbors() {
        let g = ParameterGrid {
            dimensions: vec![
                Dimension { name: "b".into(), min: 1.0, max: 3.0, step: 1.0 },
                Dimension { name: "a".into(), min: 0.5, max: 1.0, step: 0.5 },
            ],
            budget: 10,
        };
        let pts = g.enumerate();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[0].values["a"], 0.5);
        assert_eq!(pts[0].values["b"], 1.0);
        assert_eq!(pts[1].values["b"], 2.0);
        let mut sorted = pts.clone();
        sorted.sort();
        assert_eq!(sorted, pts);
        let corner = g.neighbors(&pts[0]).unwrap();
        assert_eq!(corner.len(), 2);
        let mid = ParameterPoint::new([("a".to_string(), 0.5), ("b".to_string(), 2.0)]);
        assert_eq!(g.neighbors(&mid).unwrap().len(), 3);
        let off = ParameterPoint::new([("a".to_string(), 0.7), ("b".to_string(), 2.0)]);
        assert!(!g.contains(&off));
    }

    #[test]
    fn invalid_grids() {
        let mut g = ParameterGrid {
            dimensions: vec![Dimension { name: "a".into(), min: 0.0, max: 1.0, step: 0.0 }],
            budget: 10,
        };
        assert!(g.validate().is_err());
        g.dimensions = vec![
            Dimension { name: "a".into(), min: 0.0, max: 1.0, step: 1.0 },
            Dimension { name: "a".into(), min: 0.0, max: 1.0, step: 1.0 },
        ];
        assert!(g.validate().is_err());
        g.dimensions = vec![Dimension { name: "a".into(), min: 2.0, max: 1.0, step: 1.0 }];
        assert!(g.validate().is_err());
    }

    #[test]
    fn reset_is_canonical_and_idempotent() {
        assert_eq!(reset_state(), reset_state());
        assert!(reset_state().is_canonical());
        let s = GridStrategy::default();
        let p = grid_params(1.0, 3.0, 1.0);
        let (mid, _) = run_plain(&s, &p, &[100.0, 99.0, 98.0, 97.5], reset_state());
        assert!(!mid.is_canonical());
        let _ = mid;
        assert!(reset_state().is_canonical());
    }

    #[test]
    fn trend_strategy_flat_market_no_op() {
        let s = TrailStrategy::default();
        let p = ParameterPoint::new([
            ("fast_len".to_string(), 3.0),
            ("slow_len".to_string(), 8.0),
            ("trail_dist".to_string(), 0.5),
        ]);
        let (_, log) = run_plain(&s, &p, &[100.0; 50], reset_state());
        assert!(log.iter().all(Vec::is_empty));
    }

    #[test]
    fn grid_one_step_below_anchor_opens_long() {
        // Hand trace: bar0 sets anchor 100; bar1 99.5 is within one step;
        // bar2 99.0 is exactly one step below -> open long with tp 100.0.
        let s = GridStrategy { lot: 0.1 };
        let p = grid_params(1.0, 3.0, 1.0);
        let (_, log) = run_plain(&s, &p, &[100.0, 99.5, 99.0, 99.2, 100.1], reset_state());
        assert!(log[0].is_empty());
        assert!(log[1].is_empty());
        assert_eq!(
            log[2],
            vec![Action::Open {
                direction: Direction::Long,
                lot: 0.1,
                stop: None,
                take_profit: Some(100.0)
            }]
        );
        assert!(log[3].is_empty());
        assert_eq!(log[4], vec![Action::Close { position_id: 0 }]);
    }

    #[test]
    fn decide_is_pure() {
        let s = GridStrategy::default();
        let p = grid_params(1.0, 3.0, 1.0);
        let (state, _) = run_plain(&s, &p, &[100.0, 99.0], reset_state());
        let b = bar(2, 98.0);
        assert_eq!(s.decide(&p, &b, &state), s.decide(&p, &b, &state));
    }

    #[test]
    fn transition_open_and_close() {
        let s = ScriptedStrategy::default();
        let p = ParameterPoint::new([]);
        let b = bar(0, 100.0);
        let open = Action::Open { direction: Direction::Long, lot: 0.1, stop: None, take_profit: None };
        let st = transition(&s, &p, &reset_state(), &b, &fill_all(&reset_state(), &b, vec![open])).unwrap();
        assert_eq!(st.open_positions.len(), 1);
        let close = Action::Close { position_id: st.open_positions[0].id };
        let st2 = transition(&s, &p, &st, &b, &fill_all(&st, &b, vec![close.clone()])).unwrap();
        assert!(st2.open_positions.is_empty());
        assert_eq!(
            transition(&s, &p, &st2, &b, &fill_all(&st2, &b, vec![close])),
            Err(StrategyError::UnknownPosition(0))
        );
        let bad = Action::Open { direction: Direction::Long, lot: 0.0, stop: None, take_profit: None };
        assert_eq!(
            transition(&s, &p, &st2, &b, &fill_all(&st2, &b, vec![bad])),
            Err(StrategyError::InvalidLot)
        );
    }

    #[test]
    fn transition_no_signal_keeps_canonical() {
        let s = ScriptedStrategy::default();
        let st = transition(&s, &ParameterPoint::new([]), &reset_state(), &bar(0, 1.0), &[]).unwrap();
        assert!(st.is_canonical());
    }

    // Independent replay of the grid rules on a 100-bar scripted path.
    #[test]
    fn grid_replay_oracle_100_bars() {
        let closes: Vec<f64> = (0..100)
            .map(|i| 100.0 + 3.0 * ((i as f64) * 0.37).sin() + 0.5 * ((i as f64) * 1.9).cos())
            .collect();
        let (step, levels, tp) = (0.8, 3i64, 0.6);
        let s = GridStrategy { lot: 1.0 };
        let (state, _) = run_plain(&s, &grid_params(step, levels as f64, tp), &closes, reset_state());

        // oracle: (direction sign, tp price) list plus anchor and level
        let mut book: Vec<(u64, i64, f64)> = Vec::new();
        let mut anchor: Option<f64> = None;
        let mut next_id = 0u64;
        for &c in &closes {
            let before = book.len();
            // level as seen by decide: before this bar's take-profit exits
            let level: i64 = book.iter().map(|b| b.1).sum();
            book.retain(|&(_, d, t)| !((d > 0 && c >= t) || (d < 0 && c <= t)));
            let closed = before - book.len();
            let mut opened = false;
            if let Some(a) = anchor {
                if level >= 0 && level < levels && c <= a - step {
                    book.push((next_id, 1, c + tp));
                    next_id += 1;
                    opened = true;
                } else if level <= 0 && -level < levels && c >= a + step && (level < 0 || closed == before) {
                    book.push((next_id, -1, c - tp));
                    next_id += 1;
                    opened = true;
                }
            }
            if anchor.is_none() || opened || (closed > 0 && book.is_empty()) {
                anchor = Some(c);
            }
        }
        let got: Vec<(u64, i64, f64)> = state
            .open_positions
            .iter()
            .map(|p| (p.id, p.direction.sign() as i64, p.take_profit.unwrap()))
            .collect();
        assert_eq!(got, book);
        assert_eq!(state.trailing_anchor, anchor);
        assert_eq!(state.grid_level, book.iter().map(|b| b.1).sum::<i64>());
        assert_eq!(state.next_position_id, next_id);
    }

    #[test]
    fn path_dependence_witness_grid() {
        let s = GridStrategy { lot: 1.0 };
        let p = grid_params(1.0, 5.0, 2.0);
        // Same final bar, different histories.
        let (a, _) = run_plain(&s, &p, &[100.0, 99.0, 98.5], reset_state());
        let (b, _) = run_plain(&s, &p, &[98.5, 98.5, 98.5], reset_state());
        let last = bar(3, 98.0);
        assert_ne!(s.decide(&p, &last, &a), s.decide(&p, &last, &b));
    }

    #[test]
    fn path_dependence_witness_trail() {
        let s = TrailStrategy { lot: 1.0 };
        let p = ParameterPoint::new([
            ("fast_len".to_string(), 2.0),
            ("slow_len".to_string(), 4.0),
            ("trail_dist".to_string(), 5.0),
        ]);
        let up: Vec<f64> = vec![100.0, 99.0, 98.0, 97.0, 99.0, 101.0, 103.0];
        let (a, _) = run_plain(&s, &p, &up, reset_state());
        assert_eq!(a.open_positions.len(), 1);
        let mut other = a.clone();
        other.open_positions.clear();
        other.trailing_anchor = None;
        let last = bar(10, 104.0);
        assert_ne!(s.decide(&p, &last, &a), s.decide(&p, &last, &other));
    }

    #[test]
    fn trail_warmup_emits_nothing() {
        let s = TrailStrategy { lot: 1.0 };
        let p = ParameterPoint::new([
            ("fast_len".to_string(), 2.0),
            ("slow_len".to_string(), 6.0),
            ("trail_dist".to_string(), 5.0),
        ]);
        let closes = [100.0, 90.0, 110.0, 80.0, 120.0];
        let (_, log) = run_plain(&s, &p, &closes, reset_state());
        assert!(log.iter().all(Vec::is_empty));
    }
}
