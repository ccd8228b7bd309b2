//! Acceptance run: one PASS/FAIL line per criterion, process fails if any
//! criterion fails. Tolerances and time limits are pinned below.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use alphagate::compare::{rank_alphas, rank_reversal_report, wfa_dispersion, AlphaRecord, Mandate};
use alphagate::engine::{ablation_run, run_session, Guard, Halt, SessionSpec};
use alphagate::marketdata::{Fold, Interval};
use alphagate::metrics::{max_drawdown, meets_benchmark, Benchmark, GateStatus, MetricName, MetricStatus, MetricVector, MetricsConfig};
use alphagate::protocol::{policy_a, run_protocol, GateId, Outcome, Prepared, ProtocolError};
use alphagate::stage_is::{cliff_dd, cliff_sr, stable_region, MapEntry, Shortlist, StabilityMap};
use alphagate::stage_wfa::{majority_gate, FoldResult, Verdict, WfaConfig};
use alphagate::strategy::{reset_state, Dimension, Direction, ParameterGrid, ParameterPoint, ScriptStep, ScriptedStrategy};

use common::*;

/// Two-decimal rounding of the reported tables.
const TABLE_TOL: f64 = 0.005;
const MDD_ORACLE_TOL: f64 = 1e-12;
const SLACK_TOL: f64 = 1e-12;
const GATE_LIMIT: Duration = Duration::from_secs(1);
const MDD_LIMIT: Duration = Duration::from_secs(10);
const DESK_LIMIT: Duration = Duration::from_secs(300);

type Check = fn() -> Result<String, String>;

fn main() {
    let criteria: [(&str, Check); 12] = [
        ("gate arithmetic on reported fold metrics", c01_gate_arithmetic),
        ("stage verdicts on reported IS and OOS values", c02_stage_verdicts),
        ("rank reversal leaders and control flag", c03_rank_reversal),
        ("WFA dispersion of v4", c04_dispersion),
        ("streaming MDD against pairwise oracle", c05_mdd_oracle),
        ("purge and no-peeking", c06_purge),
        ("state-normalization equivalence", c07_normalization),
        ("plateau monotonicity and flat-map cliffs", c08_plateau),
        ("gate truth table and Policy A", c09_truth_table),
        ("safeguards", c10_safeguards),
        ("determinism and lock tampering", c11_determinism),
        ("desk-scale end-to-end", c12_desk),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {:>2} {name} [{secs:.2}s] {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name} [{secs:.2}s] {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn month_fold(i: usize) -> Fold {
    let d = |m: usize| chrono::NaiveDate::from_ymd_opt(2024, m as u32, 1).unwrap();
    Fold {
        index: i,
        train_range: Interval::from_dates(d(i), d(i + 1)),
        purge_range: Interval::from_dates(d(i + 1), d(i + 1)),
        test_range: Interval::from_dates(d(i + 1), d(i + 2)),
    }
}

fn theta() -> ParameterPoint {
    point(&[("x", 1.0)])
}

/// Trades are not reported per fold; any count above the evaluability
/// floor leaves the gate arithmetic unchanged.
fn injected(sr: f64, mdd_pct: f64, calmar: f64) -> MetricVector {
    let mut m = MetricVector::reported(sr, calmar, mdd_pct / 100.0);
    m.n_trades = Some(1000);
    m
}

fn c01_gate_arithmetic() -> Result<String, String> {
    let start = Instant::now();
    let b = Benchmark::desk_default().without(MetricName::TradesPerDay);
    let cfg = WfaConfig::default();
    let folds: Vec<FoldResult> = [(3.81, 3.61, 3.39), (1.36, 2.89, 2.34), (6.20, 2.30, 16.89)]
        .iter()
        .enumerate()
        .map(|(i, &(sr, mdd, cal))| FoldResult::from_metrics(&month_fold(i + 1), theta(), None, injected(sr, mdd, cal), &cfg, &b))
        .collect();
    let verdicts: Vec<&str> = folds.iter().map(|f| if f.fold_pass { "PASS" } else { "FAIL" }).collect();
    ensure(verdicts == ["PASS", "FAIL", "PASS"], format!("fold verdicts {verdicts:?}"))?;
    ensure(folds.iter().all(|f| !f.veto_triggered), "unexpected veto")?;
    let gate = majority_gate(&folds, cfg.q);
    ensure(gate.verdict == Verdict::Pass && gate.veto_fold.is_none(), format!("gate {:?}", gate.verdict))?;
    let elapsed = start.elapsed();
    ensure(elapsed < GATE_LIMIT, format!("took {elapsed:?}"))?;
    Ok(format!("PASS/FAIL/PASS, {}/3 >= 2/3, no veto, WFA PASS in {:.1} ms", gate.passes, elapsed.as_secs_f64() * 1e3))
}

fn c02_stage_verdicts() -> Result<String, String> {
    let b = Benchmark::desk_default();
    let core = [MetricName::Sharpe, MetricName::Calmar, MetricName::Mdd];
    let mut is = MetricVector::reported(2.12, 1.69, 0.0646);
    is.n_trades = Some(2625);
    let is_out = meets_benchmark(&is, &b);
    for m in core {
        ensure(is_out.per_metric[&m] == MetricStatus::Pass, format!("IS {m} not passing"))?;
    }
    let oos = MetricVector::reported(2.34, 3.01, 0.0421);
    let oos_out = meets_benchmark(&oos, &b);
    for m in core {
        ensure(oos_out.per_metric[&m] == MetricStatus::Pass, format!("OOS {m} not passing"))?;
    }
    ensure(
        oos_out.per_metric[&MetricName::TradesPerDay] == MetricStatus::Unavailable && oos_out.status == GateStatus::OpenItem,
        "OOS trades/day not reported as open item",
    )?;
    Ok(format!("IS SR/Calmar/MDD pass (G1 {:?}); OOS SR/Calmar/MDD pass, trades/day open_item (G3 {:?})", is_out.status, oos_out.status))
}

fn four_alphas() -> Vec<AlphaRecord> {
    let mv = |s: f64, c: f64, d: f64| MetricVector::reported(s, c, d / 100.0);
    [
        ("v1", mv(2.43, 1.85, 6.96), mv(2.19, 2.74, 4.43), [2.97, 1.37, 5.19]),
        ("v2", mv(2.29, 1.83, 6.52), mv(2.56, 3.52, 4.41), [2.56, 1.14, 5.08]),
        ("v3", mv(2.20, 1.72, 6.69), mv(2.61, 3.48, 4.36), [2.53, 1.17, 5.02]),
        ("v4", mv(2.12, 1.69, 6.46), mv(2.34, 3.01, 4.21), [3.81, 1.36, 6.20]),
    ]
    .into_iter()
    .map(|(n, is, oos, f)| AlphaRecord::new(n, is, oos, f.to_vec(), true).unwrap())
    .collect()
}

fn c03_rank_reversal() -> Result<String, String> {
    let recs = four_alphas();
    let sr = rank_alphas(&recs, Mandate::MaxOosSharpe).map_err(|e| e.to_string())?;
    let cal = rank_alphas(&recs, Mandate::MaxOosCalmar).map_err(|e| e.to_string())?;
    let mdd = rank_alphas(&recs, Mandate::MinOosMdd).map_err(|e| e.to_string())?;
    ensure(sr.leader() == "v3" && sr.rows[0].value == Some(2.61), "Sharpe leader")?;
    ensure(cal.leader() == "v2" && cal.rows[0].value == Some(3.52), "Calmar leader")?;
    ensure(mdd.leader() == "v4" && (mdd.rows[0].value.unwrap() - 0.0421).abs() < 1e-12, "MDD leader")?;
    let rep = rank_reversal_report(&recs, &Mandate::ALL).map_err(|e| e.to_string())?;
    let control = rep.control.as_ref().ok_or("no control observation")?;
    ensure(rep.reversal, "no reversal flagged")?;
    ensure(control.is_sharpe_leader == "v1" && control.is_leader_oos_weakest, "control flag not on v1")?;
    Ok("leaders Sharpe v3 (2.61), Calmar v2 (3.52), MDD v4 (4.21%); control flag v1".into())
}

fn c04_dispersion() -> Result<String, String> {
    let d = wfa_dispersion(&four_alphas()[3]).map_err(|e| e.to_string())?;
    ensure((d.mean - 3.79).abs() <= TABLE_TOL, format!("mean {}", d.mean))?;
    ensure((d.range - 4.84).abs() <= TABLE_TOL, format!("range {}", d.range))?;
    Ok(format!("mean {:.4}, range {:.4} (tol {TABLE_TOL})", d.mean, d.range))
}

fn pairwise_mdd(e: &[f64]) -> f64 {
    let mut best = 0.0f64;
    for i in 0..e.len() {
        for j in i..e.len() {
            best = best.max((e[i] - e[j]) / e[i]);
        }
    }
    best
}

fn c05_mdd_oracle() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for k in 0..1000 {
        let n = rng.random_range(1..=1000);
        let mut e = Vec::with_capacity(n);
        let mut x: f64 = rng.random_range(50.0..200.0);
        for _ in 0..n {
            x *= (rng.random_range(-0.03..0.03f64)).exp();
            e.push(x);
        }
        let diff = (max_drawdown(&e).mdd - pairwise_mdd(&e)).abs();
        worst = worst.max(diff);
        ensure(diff <= MDD_ORACLE_TOL, format!("curve {k}: diff {diff:e}"))?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < MDD_LIMIT, format!("took {elapsed:?}"))?;
    Ok(format!("1000 curves, max |diff| {worst:e} <= {MDD_ORACLE_TOL:e}"))
}

fn c06_purge() -> Result<String, String> {
    check_purge_no_peeking(100)
}

fn c07_normalization() -> Result<String, String> {
    check_state_normalization(50)
}

fn c08_plateau() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut memberships = 0usize;
    for k in 0..500 {
        let grid = ParameterGrid {
            dimensions: vec![
                Dimension { name: "a".into(), min: 0.0, max: rng.random_range(1..6) as f64, step: 1.0 },
                Dimension { name: "b".into(), min: 0.0, max: rng.random_range(1..6) as f64, step: 1.0 },
            ],
            budget: 100,
        };
        let mut entries: Vec<MapEntry> = grid
            .enumerate()
            .into_iter()
            .map(|p| {
                let mut m = MetricVector::reported(rng.random_range(-2.0..5.0), 1.0, rng.random_range(0.01..0.2));
                if rng.random_bool(0.05) {
                    m.sharpe = None;
                }
                MapEntry { point: p, metrics: m, feasible: true }
            })
            .collect();
        // only viable maps reach the plateau step
        entries[0].metrics.sharpe = Some(rng.random_range(1.0..5.0));
        let map = StabilityMap::from_entries(entries).map_err(|e| e.to_string())?;
        let (a1, a2) = {
            let x: f64 = rng.random_range(0.0..1.0);
            let y: f64 = rng.random_range(0.0..1.0);
            (x.min(y), x.max(y))
        };
        let wide = stable_region(&map, a1);
        let narrow = stable_region(&map, a2);
        ensure(narrow.is_subset(&wide), format!("map {k}: Omega({a2}) not within Omega({a1})"))?;
        memberships += narrow.len();

        let flat: Vec<MapEntry> = grid
            .enumerate()
            .into_iter()
            .map(|p| MapEntry { point: p, metrics: MetricVector::reported(1.7, 2.0, 0.05), feasible: true })
            .collect();
        let flat = StabilityMap::from_entries(flat).map_err(|e| e.to_string())?;
        for p in flat.points() {
            let (s, d) = (cliff_sr(&flat, &grid, p).map_err(|e| e.to_string())?, cliff_dd(&flat, &grid, p).map_err(|e| e.to_string())?);
            ensure(s == 0.0 && d == 0.0, format!("map {k}: cliff on a flat map"))?;
        }
    }
    Ok(format!("500 maps, 0 violations ({memberships} narrow-plateau members checked); flat-map cliffs all 0"))
}

fn c09_truth_table() -> Result<String, String> {
    let b = Benchmark::desk_default().without(MetricName::TradesPerDay);
    let cfg = WfaConfig::default();
    let mut cases = 0;
    for pattern in 0u8..8 {
        for veto in [None, Some(0usize), Some(1), Some(2)] {
            let folds: Vec<FoldResult> = (0..3)
                .map(|i| {
                    let pass = pattern & (1 << i) != 0;
                    let m = if pass { injected(3.0, 3.0, 3.0) } else { injected(1.0, 3.0, 1.0) };
                    let mut f = FoldResult::from_metrics(&month_fold(i + 1), theta(), None, m.clone(), &cfg, &b);
                    if veto == Some(i) {
                        f.evaluate(m, true, &cfg, &b);
                    }
                    f
                })
                .collect();
            let passes = pattern.count_ones();
            let expected = if veto.is_some() || passes < 2 { Verdict::Fail } else { Verdict::Pass };
            let got = majority_gate(&folds, cfg.q);
            ensure(got.verdict == expected, format!("pattern {pattern:03b} veto {veto:?}: {:?}", got.verdict))?;
            cases += 1;
        }
    }

    let all = [GateStatus::Pass, GateStatus::Fail, GateStatus::OpenItem];
    let mut policy_cases = 0;
    for g1 in all {
        for g2 in all {
            for g3 in all {
                let seq: Vec<GateStatus> = match (g1, g2) {
                    (GateStatus::Fail, _) => vec![g1],
                    (_, GateStatus::Fail) => vec![g1, g2],
                    _ => vec![g1, g2, g3],
                };
                let d = policy_a(&seq).map_err(|e| format!("{seq:?}: {e}"))?;
                let (outcome, gate, conditional) = if g1 == GateStatus::Fail {
                    (Outcome::Refactor, Some(GateId::G1), false)
                } else if g2 == GateStatus::Fail {
                    (Outcome::Reject, Some(GateId::G2), false)
                } else if g3 == GateStatus::Fail {
                    (Outcome::Reject, Some(GateId::G3), false)
                } else {
                    (Outcome::Deploy, None, [g1, g2, g3].contains(&GateStatus::OpenItem))
                };
                ensure(d.outcome == outcome && d.failed_gate == gate, format!("{seq:?}: {:?}", d.outcome))?;
                if outcome == Outcome::Deploy {
                    ensure(d.conditional == conditional, format!("{seq:?}: conditional {}", d.conditional))?;
                }
                policy_cases += 1;
            }
        }
    }
    Ok(format!("{cases} fold-pattern x veto cases; {policy_cases} gate-outcome combinations"))
}

fn c10_safeguards() -> Result<String, String> {
    let exec = alphagate::engine::ExecutionConfig {
        contract_size: 100.0,
        ..Default::default()
    };
    let params = ParameterPoint::new([]);
    let metrics = MetricsConfig::default();

    // kill switch: 10 lots long into a steady decline, 1% of equity per bar
    let t0 = bar_at(0, 0.0, 0.0).timestamp;
    let long = ScriptedStrategy::new([(t0, ScriptStep::Open { direction: Direction::Long, lot: 10.0 })]);
    let closes: Vec<f64> = (0..40).map(|i| 100.0 - i as f64).collect();
    let mut c = roomy_constraints();
    c.max_leverage_used = 1e9;
    c.circuit_breaker.daily_loss_pct = 0.99;
    c.kill_switch_dd_pct = 0.10;
    let r = run_session(&flat_series(&closes, 0.0), SessionSpec { strategy: &long, params: &params, exec: &exec, constraints: &c }, reset_state())
        .map_err(|e| e.to_string())?;
    ensure(r.halt == Halt::KillSwitch, format!("halt {:?}", r.halt))?;
    let eq: Vec<f64> = r.equity_curve.iter().map(|p| p.equity).collect();
    let realized = max_drawdown(&eq).mdd;
    let slack = eq
        .windows(2)
        .map(|w| (w[0] - w[1]).max(0.0) / w[0])
        .fold(0.0f64, f64::max);
    ensure(realized <= c.kill_switch_dd_pct + slack + SLACK_TOL, format!("MDD {realized} > {} + {slack}", c.kill_switch_dd_pct))?;
    ensure(eq.last() == eq.get(eq.len() - 2), "equity not flat after halt")?;

    // inactive guard: no spread ever reaches the cap
    let round_trips: Vec<_> = (0..10)
        .flat_map(|i| {
            let t = |k: i64| bar_at(k, 0.0, 0.0).timestamp;
            [
                (t(3 * i), ScriptStep::Open { direction: Direction::Long, lot: 1.0 }),
                (t(3 * i + 2), ScriptStep::CloseAll),
            ]
        })
        .collect();
    let scripted = ScriptedStrategy::new(round_trips);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut x = 100.0f64;
    let walk: Vec<f64> = (0..40)
        .map(|_| {
            x += rng.random_range(-0.2..0.2);
            x
        })
        .collect();
    let series = flat_series(&walk, 0.02);
    let mut caps = roomy_constraints();
    caps.max_spread = 0.5;
    let spec = SessionSpec { strategy: &scripted, params: &params, exec: &exec, constraints: &caps };
    let ab = ablation_run(&series, spec, &metrics, Guard::SpreadGuard).map_err(|e| e.to_string())?;
    ensure(!ab.guard_fired, "spread guard fired")?;
    ensure(ab.delta.values().all(|d| d.is_none_or(|v| v == 0.0)), format!("non-zero delta {:?}", ab.delta))?;

    // spread multipliers on a cost-independent script
    let mut pnl = Vec::new();
    for m in [1.0, 1.5, 2.0] {
        let e = alphagate::engine::ExecutionConfig { spread_multiplier: m, ..exec };
        let r = run_session(&series, SessionSpec { strategy: &scripted, params: &params, exec: &e, constraints: &caps }, reset_state())
            .map_err(|e| e.to_string())?;
        pnl.push(r.net_pnl());
    }
    ensure(pnl.windows(2).all(|w| w[1] <= w[0]), format!("net P&L not non-increasing: {pnl:?}"))?;
    Ok(format!(
        "kill switch MDD {:.2}% <= {:.0}% + {:.2}% slack; inactive-guard delta 0; net P&L {:.1} >= {:.1} >= {:.1}",
        realized * 100.0,
        c.kill_switch_dd_pct * 100.0,
        slack * 100.0,
        pnl[0],
        pnl[1],
        pnl[2]
    ))
}

fn c11_determinism() -> Result<String, String> {
    let (series, config) = load_fixture("pass");
    let a = run_protocol(&series, config.clone(), "fixture").map_err(|e| e.to_string())?;
    let b = run_protocol(&series, config.clone(), "fixture").map_err(|e| e.to_string())?;
    let (ba, bb) = (a.pack.deterministic_body(), b.pack.deterministic_body());
    ensure(ba == bb, "evidence packs differ")?;
    let cli_bytes = cli_packs_identical()?;

    let prepared = Prepared::new(&series, config).map_err(|e| e.to_string())?;
    let lock = a
        .pack
        .stage_wfa
        .as_ref()
        .and_then(|w| w.theta_star.clone())
        .ok_or("fixture produced no theta* lock")?;
    let mut forged = lock.theta_star.clone();
    let key = forged.values.keys().next().cloned().ok_or("empty theta")?;
    *forged.values.get_mut(&key).unwrap() += 0.05;
    let tampered_theta = matches!(prepared.stage_oos(&forged, &lock), Err(ProtocolError::LockMismatch));
    let mut bad_lock = lock.clone();
    bad_lock.theta_star = forged.clone();
    let tampered_lock = matches!(prepared.stage_oos(&forged, &bad_lock), Err(ProtocolError::LockMismatch));
    ensure(tampered_theta && tampered_lock, "tampered theta* accepted")?;

    let shortlist = a.pack.stage_is.shortlist.clone().ok_or("no shortlist")?;
    let mut v = serde_json::to_value(&shortlist).unwrap();
    v["candidates"][0] = serde_json::to_value(&forged).unwrap();
    let edited: Shortlist = serde_json::from_value(v).map_err(|e| e.to_string())?;
    ensure(edited.verify().is_err(), "edited shortlist verified")?;
    ensure(prepared.stage_wfa(&edited).is_err(), "WFA accepted an edited shortlist")?;
    Ok(format!(
        "{} byte-identical bodies; two CLI runs identical over {cli_bytes} bytes; theta*, lock and shortlist tampering rejected",
        ba.len()
    ))
}

/// Two `run-protocol` processes into separate directories; the written
/// packs may differ only in `generated_at`.
fn cli_packs_identical() -> Result<usize, String> {
    let dir = fixture_dir("pass");
    let mut packs = Vec::new();
    for _ in 0..2 {
        let out = tempfile::tempdir().map_err(|e| e.to_string())?;
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_alphagate"))
            .args(["--out", out.path().to_str().unwrap(), "run-protocol", "--config"])
            .arg(dir.join("config.json"))
            .arg("--data")
            .arg(dir.join("data.json"))
            .output()
            .map_err(|e| e.to_string())?;
        ensure(status.status.code() == Some(0), format!("run-protocol exited {:?}", status.status.code()))?;
        let text = std::fs::read_to_string(out.path().join("evidence_pack.json")).map_err(|e| e.to_string())?;
        let mut v: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        v["generated_at"] = serde_json::Value::Null;
        packs.push((text.len(), serde_json::to_string(&v).unwrap()));
    }
    ensure(packs[0].1 == packs[1].1, "CLI evidence packs differ")?;
    Ok(packs[0].0)
}

fn c12_desk() -> Result<String, String> {
    let start = Instant::now();
    let (series, config) = load_fixture("desk");
    let bars = series.len();
    let grid = config.grid.size();
    let run = run_protocol(&series, config, "desk fixture").map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let p = &run.pack;
    let wfa = p.stage_wfa.as_ref().ok_or("no WFA report")?;
    ensure(grid == 100 && p.stage_is.map.len() == 100, "grid is not 100 points")?;
    ensure(wfa.folds.len() == 3, "not 3 folds")?;
    ensure(p.stage_oos.is_some() && p.degradation.is_some(), "pack lacks OOS or degradation")?;
    ensure(p.data.len() == 3 && !p.events.is_empty() && p.verdict.trace.len() == 3, "pack lacks fingerprints or trace")?;
    ensure(elapsed < DESK_LIMIT, format!("took {elapsed:?}"))?;
    Ok(format!(
        "{bars} bars, {grid}-point grid, 3 folds, verdict {} in {:.1}s (limit {}s)",
        p.verdict.label(),
        elapsed.as_secs_f64(),
        DESK_LIMIT.as_secs()
    ))
}
