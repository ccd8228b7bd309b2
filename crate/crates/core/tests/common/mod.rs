#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use alphagate::engine::{run_session, run_session_with_reset, CircuitBreakerConfig, ConstraintSet, ExecutionConfig, SessionSpec};
use alphagate::marketdata::{
    build_fold_schedule, generate_synthetic, midnight, Bar, Interval, MarketSeries, RegimeConfig, SyntheticConfig,
};
use alphagate::metrics::MetricsConfig;
use alphagate::protocol::ProtocolConfig;
use alphagate::stage_is::{IsConfig, Shortlist};
use alphagate::stage_wfa::{run_fold, FoldContext, WfaConfig};
use alphagate::strategy::{reset_state, GridStrategy, ParameterGrid, ParameterPoint, Strategy, TrailStrategy};

pub fn fixture_dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn load_fixture(name: &str) -> (MarketSeries, ProtocolConfig) {
    let dir = fixture_dir(name);
    let config = ProtocolConfig::from_json(&std::fs::read_to_string(dir.join("config.json")).unwrap()).unwrap();
    let series = alphagate::cli::load_data(&dir.join("data.json"), config.seed).unwrap();
    (series, config)
}

pub fn point(pairs: &[(&str, f64)]) -> ParameterPoint {
    ParameterPoint::new(pairs.iter().map(|(k, v)| (k.to_string(), *v)))
}

pub fn random_series(rng: &mut ChaCha8Rng, n_days: usize, bars_per_day: usize) -> MarketSeries {
    let cfg = SyntheticConfig {
        n_days,
        bars_per_day,
        regimes: vec![
            RegimeConfig {
                drift: 0.0,
                volatility: rng.random_range(0.001..0.004),
                mean_spread: rng.random_range(0.005..0.02),
                mean_reversion: rng.random_range(0.0..0.05),
            },
            RegimeConfig {
                drift: rng.random_range(-1e-4..1e-4),
                volatility: rng.random_range(0.001..0.004),
                mean_spread: rng.random_range(0.005..0.02),
                mean_reversion: 0.0,
            },
        ],
        regime_switch_prob: rng.random_range(0.0..0.02),
        symbol: "R".into(),
        start_date: NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(),
        initial_price: 100.0,
        spread_dispersion: 0.25,
        skip_weekends: true,
        seed: None,
        regime_schedule: Vec::new(),
    };
    generate_synthetic(&cfg, rng.random()).unwrap().series
}

pub fn desk_exec() -> ExecutionConfig {
    ExecutionConfig {
        commission_per_lot: 4.0,
        contract_size: 1000.0,
        ..Default::default()
    }
}

pub fn roomy_constraints() -> ConstraintSet {
    ConstraintSet {
        max_spread: 1.0,
        max_leverage_used: 50.0,
        max_open_positions: 10,
        circuit_breaker: CircuitBreakerConfig {
            daily_loss_pct: 0.05,
            cooldown_bars: 6,
        },
        kill_switch_dd_pct: 0.25,
        disabled: BTreeSet::new(),
    }
}

fn grid_point(rng: &mut ChaCha8Rng) -> ParameterPoint {
    point(&[
        ("grid_step", (rng.random_range(0.1..0.5f64) * 100.0).round() / 100.0),
        ("max_levels", rng.random_range(1..5) as f64),
        ("take_profit", (rng.random_range(0.05..0.3f64) * 100.0).round() / 100.0),
    ])
}

fn trail_point(rng: &mut ChaCha8Rng) -> ParameterPoint {
    let fast = rng.random_range(2..10);
    point(&[
        ("fast_len", fast as f64),
        ("slow_len", rng.random_range(fast + 1..fast + 25) as f64),
        ("trail_dist", (rng.random_range(0.05..0.5f64) * 100.0).round() / 100.0),
    ])
}

/// Copies `series`, scaling every bar inside `range` so any leak of test
/// data into training would move the selection.
pub fn mutate_window(series: &MarketSeries, range: Interval, factor: f64) -> MarketSeries {
    let bars: Vec<Bar> = series
        .bars()
        .iter()
        .map(|b| {
            if range.contains(b.timestamp) {
                Bar {
                    bid_open: b.bid_open * factor,
                    bid_high: b.bid_high * factor,
                    bid_low: b.bid_low * factor,
                    bid_close: b.bid_close * factor,
                    spread: b.spread * 2.0,
                    ..b.clone()
                }
            } else {
                b.clone()
            }
        })
        .collect();
    MarketSeries::new(series.symbol.clone(), series.bar_period_secs, bars).unwrap()
}

/// Purge and no-peeking over random datasets and schedules. Returns the
/// number of folds checked.
pub fn check_purge_no_peeking(datasets: usize) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0006);
    let strategy = GridStrategy { lot: 0.5 };
    let exec = desk_exec();
    let constraints = roomy_constraints();
    let metrics = MetricsConfig::default();
    let cfg = WfaConfig::default();
    let benchmark = alphagate::metrics::Benchmark::desk_default();
    let mut folds_checked = 0;
    let mut mutated_sessions = 0;
    for ds in 0..datasets {
        let n_folds = rng.random_range(1..5usize);
        let purge = rng.random_range(0..6usize);
        let n_days = rng.random_range((n_folds + 1) * (purge + 4)..(n_folds + 1) * (purge + 4) + 30);
        let series = random_series(&mut rng, n_days, 24);
        let schedule = build_fold_schedule(&series, n_folds, purge).map_err(|e| format!("dataset {ds}: {e}"))?;
        let dates = series.trading_dates();
        let candidates: Vec<ParameterPoint> = (0..3).map(|_| grid_point(&mut rng)).collect::<BTreeSet<_>>().into_iter().collect();
        let grid = ParameterGrid {
            dimensions: Vec::new(),
            budget: 0,
        };
        let shortlist = Shortlist::lock(candidates, &grid, &IsConfig::default(), None).map_err(|e| e.to_string())?;
        for fold in &schedule.folds {
            let train = series.slice(fold.train_range).ok_or(format!("dataset {ds} fold {}: empty train", fold.index))?;
            let test = series.slice(fold.test_range).ok_or(format!("dataset {ds} fold {}: empty test", fold.index))?;
            if train.last_timestamp() >= test.first_timestamp() {
                return Err(format!("dataset {ds} fold {}: train overlaps test", fold.index));
            }
            let last_train = train.last_timestamp().date_naive();
            let first_test = test.first_timestamp().date_naive();
            let gap = dates.iter().filter(|d| **d > last_train && **d < first_test).count();
            if gap < purge {
                return Err(format!("dataset {ds} fold {}: gap {gap} < purge {purge}", fold.index));
            }
            if fold.purge_range.contains(train.last_timestamp()) || fold.purge_range.contains(test.first_timestamp()) {
                return Err(format!("dataset {ds} fold {}: purge window overlaps a segment", fold.index));
            }

            let ctx = |seg: &MarketSeries| -> alphagate::stage_wfa::FoldResult {
                run_fold(
                    fold,
                    &FoldContext {
                        wfa_segment: seg,
                        shortlist: &shortlist,
                        strategy: &strategy,
                        exec: &exec,
                        constraints: &constraints,
                        metrics: &metrics,
                        config: &cfg,
                        benchmark: &benchmark,
                    },
                )
            };
            let base = ctx(&series);
            let mutated = ctx(&mutate_window(&series, fold.test_range, rng.random_range(0.7..1.3)));
            mutated_sessions += 1;
            if base.theta != mutated.theta || base.m_train != mutated.m_train || base.train_scores != mutated.train_scores {
                return Err(format!("dataset {ds} fold {}: test-window mutation moved the selection", fold.index));
            }
            folds_checked += 1;
        }
    }
    Ok(format!("{datasets} datasets, {folds_checked} folds, {mutated_sessions} mutated re-runs, 0 violations"))
}

/// Forced-reset continuation against an independent session from the reset
/// bar, for both reference strategies.
pub fn check_state_normalization(folds_per_strategy: usize) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0007);
    let exec = desk_exec();
    let constraints = roomy_constraints();
    let grid = GridStrategy { lot: 0.5 };
    let trail = TrailStrategy { lot: 0.5 };
    let mut trades = 0usize;
    for (name, strategy) in [("grid", &grid as &dyn Strategy), ("trail", &trail as &dyn Strategy)] {
        for k in 0..folds_per_strategy {
            let n_days = rng.random_range(10..30);
            let series = random_series(&mut rng, n_days, 48);
            let bars = series.bars();
            let idx = rng.random_range(bars.len() / 5..bars.len() * 4 / 5);
            let reset_at = bars[idx].timestamp;
            let params = if name == "grid" { grid_point(&mut rng) } else { trail_point(&mut rng) };
            let spec = SessionSpec {
                strategy,
                params: &params,
                exec: &exec,
                constraints: &constraints,
            };
            let (_, forward) = run_session_with_reset(&series, reset_at, spec).map_err(|e| e.to_string())?;
            let tail = series
                .slice(Interval::new(reset_at, series.last_timestamp() + Duration::seconds(1)))
                .ok_or("empty tail")?;
            let independent = run_session(&tail, spec, reset_state()).map_err(|e| e.to_string())?;
            if forward.trades != independent.trades {
                return Err(format!("{name} fold {k}: trade lists differ"));
            }
            let same_curve = forward.equity_curve.len() == independent.equity_curve.len()
                && forward
                    .equity_curve
                    .iter()
                    .zip(&independent.equity_curve)
                    .all(|(a, b)| a.timestamp == b.timestamp && a.equity.to_bits() == b.equity.to_bits());
            if !same_curve {
                return Err(format!("{name} fold {k}: equity curves differ"));
            }
            trades += forward.trades.len();
        }
    }
    Ok(format!("2 strategies x {folds_per_strategy} folds identical ({trades} forward trades compared)"))
}

pub fn bar_at(i: i64, close: f64, spread: f64) -> Bar {
    Bar {
        timestamp: midnight(NaiveDate::from_ymd_opt(2024, 1, 1).unwrap()) + Duration::minutes(5 * i),
        bid_open: close,
        bid_high: close,
        bid_low: close,
        bid_close: close,
        spread,
        volume: None,
    }
}

pub fn flat_series(closes: &[f64], spread: f64) -> MarketSeries {
    let bars = closes.iter().enumerate().map(|(i, &c)| bar_at(i as i64, c, spread)).collect();
    MarketSeries::new("T", 300, bars).unwrap()
}
