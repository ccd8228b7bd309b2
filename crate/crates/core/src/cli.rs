//! Command-line entry point. Exit codes: 0 Deploy or success, 2 Reject,
//! 3 Refactor, 1 operational error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::canonical;
use crate::compare::{self, AlphaRecord, Mandate};
use crate::engine::{Guard, StressSpec};
use crate::marketdata::{self, generate_synthetic, MarketSeries, SyntheticConfig};
use crate::metrics::{EquityPoint, GateStatus, MetricVector};
use crate::plot::{line_chart, Line};
use crate::protocol::{run_prepared, EvidencePack, Outcome, Prepared, ProtocolConfig};
use crate::stage_is::{Shortlist, StabilityMap};
use crate::stage_wfa::{FoldResult, ThetaStarLock, Verdict};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_REJECT: i32 = 2;
pub const EXIT_REFACTOR: i32 = 3;

pub const IS_LOCK: &str = "is_lock.json";
pub const WFA_LOCK: &str = "wfa_lock.json";
pub const EVIDENCE_PACK: &str = "evidence_pack.json";

#[derive(Debug, Parser)]
#[command(name = "alphagate", version, about = "Chronological IS / WFA / OOS validation of trading strategies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Output directory; every artifact is written under it.
    #[arg(long, global = true, env = "ALPHAGATE_OUT")]
    pub out: Option<PathBuf>,
    /// Overrides the config seed and the synthetic data seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for grid mapping and folds.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct Inputs {
    #[arg(long)]
    pub config: PathBuf,
    /// Bar CSV, or a synthetic generator spec when the file ends in `.json`.
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic bars from a generator spec.
    GenData {
        #[arg(long)]
        data: PathBuf,
    },
    /// Stage I only; writes the IS lock.
    RunIs(Inputs),
    /// Stage II only; needs the IS lock and writes the WFA lock.
    RunWfa(Inputs),
    /// Stage III only; refuses to run without the WFA lock.
    RunOos(Inputs),
    /// All stages with gates and the evidence pack.
    RunProtocol {
        #[command(flatten)]
        inputs: Inputs,
        /// Stress spec JSON; replaces the config's stress section.
        #[arg(long)]
        stress: Option<PathBuf>,
    },
    /// Stress envelope on the locked θ* over the OOS segment.
    Stress {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        stress: Option<PathBuf>,
    },
    /// Guard ablation on the locked θ* over the OOS segment.
    Ablate {
        #[command(flatten)]
        inputs: Inputs,
        /// Guard to disable; repeatable. Defaults to every guard.
        #[arg(long)]
        guard: Vec<Guard>,
    },
    /// Rank evidence packs of passing runs.
    Compare {
        #[arg(long = "pack", visible_alias = "data", required = true)]
        packs: Vec<PathBuf>,
        /// Mandate to rank by; repeatable. Defaults to all three.
        #[arg(long)]
        mandate: Vec<Mandate>,
    },
    /// Render summary, tables and plots from an evidence pack.
    Report {
        #[arg(long = "pack", visible_alias = "data")]
        pack: PathBuf,
    },
}

#[derive(Debug, Serialize, Deserialize)]
pub struct IsLockFile {
    pub config_hash: String,
    pub shortlist: Shortlist,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WfaLockFile {
    pub config_hash: String,
    pub shortlist_hash: String,
    pub theta_star: ThetaStarLock,
}

/// Parses and dispatches, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    let result = match cli.jobs {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            Ok(pool) => pool.install(|| dispatch(&cli)),
            Err(e) => Err(anyhow!(e)),
        },
        None => dispatch(&cli),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    }
}

pub fn exit_code(outcome: Outcome) -> i32 {
    match outcome {
        Outcome::Deploy => EXIT_OK,
        Outcome::Reject => EXIT_REJECT,
        Outcome::Refactor => EXIT_REFACTOR,
    }
}

pub fn dispatch(cli: &Cli) -> Result<i32> {
    let out = cli
        .out
        .clone()
        .ok_or_else(|| anyhow!("no output directory: pass --out or set ALPHAGATE_OUT"))?;
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    match &cli.command {
        Command::GenData { data } => {
            let spec = read_synthetic(data)?;
            let seed = cli.seed.or(spec.seed).unwrap_or(0);
            let synth = generate_synthetic(&spec, seed)?;
            let mut buf = Vec::new();
            marketdata::write_csv(&synth.series, &mut buf)?;
            write(&out, "data.csv", &buf)?;
            println!("{} bars written (seed {seed})", synth.series.len());
            Ok(EXIT_OK)
        }
        Command::RunIs(inputs) => {
            let p = prepare(inputs, cli.seed, None)?;
            let report = p.stage_is()?;
            write(&out, "is_report.json", canonical::to_string(&report))?;
            write(&out, "is_surface.csv", surface_csv(&report.map))?;
            let lock_path = out.join(IS_LOCK);
            match &report.shortlist {
                Some(s) if report.gate_g1.advances() => {
                    let lock = IsLockFile {
                        config_hash: p.config_hash.clone(),
                        shortlist: s.clone(),
                    };
                    write(&out, IS_LOCK, canonical::to_string(&lock))?;
                }
                _ => remove_stale(&lock_path)?,
            }
            println!("G1 {:?}", report.gate_g1);
            Ok(if report.gate_g1.advances() { EXIT_OK } else { EXIT_REFACTOR })
        }
        Command::RunWfa(inputs) => {
            let p = prepare(inputs, cli.seed, None)?;
            let lock: IsLockFile = read_lock(&out, IS_LOCK, "run-is")?;
            check_config(&lock.config_hash, &p)?;
            lock.shortlist.verify().context("IS lock")?;
            let report = p.stage_wfa(&lock.shortlist)?;
            write(&out, "wfa_report.json", canonical::to_string(&report))?;
            write(&out, "folds.csv", folds_csv(&report.folds))?;
            match (&report.verdict, &report.theta_star) {
                (Verdict::Pass, Some(theta)) => {
                    let wl = WfaLockFile {
                        config_hash: p.config_hash.clone(),
                        shortlist_hash: lock.shortlist.lock_record().candidates_hash.clone(),
                        theta_star: theta.clone(),
                    };
                    write(&out, WFA_LOCK, canonical::to_string(&wl))?;
                }
                _ => remove_stale(&out.join(WFA_LOCK))?,
            }
            println!("G2 {:?}: {}", report.verdict, report.gate.reason);
            Ok(if report.verdict == Verdict::Pass { EXIT_OK } else { EXIT_REJECT })
        }
        Command::RunOos(inputs) => {
            let (p, lock) = prepare_locked(inputs, cli.seed, &out)?;
            let report = p.stage_oos(&lock.theta_star.theta_star, &lock.theta_star)?;
            write(&out, "oos_report.json", canonical::to_string(&report))?;
            write_equity(&out, "equity_oos", "OOS equity", &report.equity_daily)?;
            println!("G3 {:?}", report.gate_g3);
            Ok(if report.gate_g3 == GateStatus::Fail { EXIT_REJECT } else { EXIT_OK })
        }
        Command::RunProtocol { inputs, stress } => {
            let stress = stress.as_deref().map(read_stress).transpose()?;
            let p = prepare(inputs, cli.seed, stress)?;
            let run = run_prepared(&p, &inputs.data.display().to_string())?;
            write(&out, EVIDENCE_PACK, run.pack.to_canonical())?;
            write_locks(&out, &run.pack)?;
            emit_report(&run.pack, &out)?;
            println!("{}", run.verdict.label());
            Ok(exit_code(run.verdict.outcome))
        }
        Command::Stress { inputs, stress } => {
            let spec = match stress {
                Some(path) => read_stress(path)?,
                None => {
                    let c = read_config(&inputs.config)?;
                    c.stress.ok_or_else(|| anyhow!("no stress spec: pass --stress or set config.stress"))?
                }
            };
            let (p, lock) = prepare_locked(inputs, cli.seed, &out)?;
            let report = p.stress(&lock.theta_star.theta_star, &spec)?;
            write(&out, "stress_report.json", canonical::to_string(&report))?;
            println!(
                "net P&L base {:.2} stressed {:.2}; stressed benchmark {:?}",
                report.net_pnl_base, report.net_pnl_stressed, report.stressed_benchmark.status
            );
            Ok(EXIT_OK)
        }
        Command::Ablate { inputs, guard } => {
            let (p, lock) = prepare_locked(inputs, cli.seed, &out)?;
            let guards: Vec<Guard> = if !guard.is_empty() {
                guard.clone()
            } else if !p.config.ablation.is_empty() {
                p.config.ablation.clone()
            } else {
                Guard::ALL.to_vec()
            };
            let results = p.ablate(&lock.theta_star.theta_star, &guards)?;
            write(&out, "ablation.json", canonical::to_string(&results))?;
            for r in &results {
                println!("{}: fired {}", r.guard, r.guard_fired);
            }
            Ok(EXIT_OK)
        }
        Command::Compare { packs, mandate } => {
            let mut records = Vec::new();
            for path in packs {
                let pack = read_pack(path)?;
                let name = alpha_name(packs, path);
                records.push(AlphaRecord::from_pack(name, &pack)?);
            }
            let mandates = if mandate.is_empty() { Mandate::ALL.to_vec() } else { mandate.clone() };
            let report = compare::rank_reversal_report(&records, &mandates)?;
            write(&out, "leaderboard.csv", compare::leaderboard_csv(&report.boards))?;
            let text = compare::reversal_text(&report, &records);
            write(&out, "reversal.txt", &text)?;
            write(&out, "oos_equity_normalized.svg", compare::normalized_oos_svg(&records))?;
            print!("{text}");
            Ok(EXIT_OK)
        }
        Command::Report { pack } => {
            let pack = read_pack(pack)?;
            emit_report(&pack, &out)?;
            print!("{}", summary(&pack));
            Ok(EXIT_OK)
        }
    }
}

/// File stem when unique among the packs, else the parent directory name,
/// else the full path.
fn alpha_name(paths: &[PathBuf], path: &Path) -> String {
    let unique = |f: fn(&Path) -> Option<String>| {
        let key = f(path)?;
        (paths.iter().filter(|p| f(p).as_ref() == Some(&key)).count() == 1).then_some(key)
    };
    let stem = |p: &Path| p.file_stem().map(|s| s.to_string_lossy().into_owned());
    let parent = |p: &Path| p.parent().and_then(Path::file_name).map(|s| s.to_string_lossy().into_owned());
    unique(stem).or_else(|| unique(parent)).unwrap_or_else(|| path.display().to_string())
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn remove_stale(path: &Path) -> Result<()> {
    if path.exists() {
        fs::remove_file(path).with_context(|| format!("removing stale {}", path.display()))?;
    }
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_config(path: &Path) -> Result<ProtocolConfig> {
    ProtocolConfig::from_json(&read_text(path)?).with_context(|| format!("config {}", path.display()))
}

fn read_synthetic(path: &Path) -> Result<SyntheticConfig> {
    serde_json::from_str(&read_text(path)?).with_context(|| format!("synthetic spec {}", path.display()))
}

fn read_stress(path: &Path) -> Result<StressSpec> {
    serde_json::from_str(&read_text(path)?).with_context(|| format!("stress spec {}", path.display()))
}

fn read_pack(path: &Path) -> Result<EvidencePack> {
    serde_json::from_str(&read_text(path)?).with_context(|| format!("malformed evidence pack {}", path.display()))
}

fn read_lock<T: for<'de> Deserialize<'de>>(out: &Path, name: &str, producer: &str) -> Result<T> {
    let path = out.join(name);
    if !path.exists() {
        bail!("lock missing: {} not found; run `{producer}` first", path.display());
    }
    serde_json::from_str(&read_text(&path)?).with_context(|| format!("malformed lock {}", path.display()))
}

fn check_config(lock_hash: &str, p: &Prepared) -> Result<()> {
    if lock_hash != p.config_hash {
        bail!("config hash {} does not match the lock ({lock_hash})", p.config_hash);
    }
    Ok(())
}

/// A `.json` path is a synthetic generator spec; anything else is bar CSV.
pub fn load_data(path: &Path, seed: u64) -> Result<MarketSeries> {
    if path.extension().is_some_and(|e| e == "json") {
        let spec = read_synthetic(path)?;
        return Ok(generate_synthetic(&spec, spec.seed.unwrap_or(seed))?.series);
    }
    Ok(marketdata::load_csv_auto(path)?)
}

fn prepare(inputs: &Inputs, seed: Option<u64>, stress: Option<StressSpec>) -> Result<Prepared> {
    let mut config = read_config(&inputs.config)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    if stress.is_some() {
        config.stress = stress;
    }
    let series = match seed {
        // an explicit seed also wins over the generator spec's own
        Some(s) if inputs.data.extension().is_some_and(|e| e == "json") => {
            generate_synthetic(&read_synthetic(&inputs.data)?, s)?.series
        }
        _ => load_data(&inputs.data, config.seed)?,
    };
    Ok(Prepared::new(&series, config)?)
}

fn prepare_locked(inputs: &Inputs, seed: Option<u64>, out: &Path) -> Result<(Prepared, WfaLockFile)> {
    let lock: WfaLockFile = read_lock(out, WFA_LOCK, "run-wfa")?;
    let p = prepare(inputs, seed, None)?;
    check_config(&lock.config_hash, &p)?;
    if canonical::hash(&lock.theta_star.theta_star) != lock.theta_star.hash {
        bail!("WFA lock hash mismatch: theta* was modified after locking");
    }
    Ok((p, lock))
}

fn write_locks(out: &Path, pack: &EvidencePack) -> Result<()> {
    let Some(shortlist) = pack.stage_is.shortlist.as_ref().filter(|_| pack.stage_is.gate_g1.advances()) else {
        remove_stale(&out.join(IS_LOCK))?;
        remove_stale(&out.join(WFA_LOCK))?;
        return Ok(());
    };
    let is_lock = IsLockFile {
        config_hash: pack.config_hash.clone(),
        shortlist: shortlist.clone(),
    };
    write(out, IS_LOCK, canonical::to_string(&is_lock))?;
    match pack.stage_wfa.as_ref().filter(|w| w.verdict == Verdict::Pass).and_then(|w| w.theta_star.as_ref()) {
        Some(theta) => {
            let wl = WfaLockFile {
                config_hash: pack.config_hash.clone(),
                shortlist_hash: shortlist.lock_record().candidates_hash.clone(),
                theta_star: theta.clone(),
            };
            write(out, WFA_LOCK, canonical::to_string(&wl))
        }
        None => remove_stale(&out.join(WFA_LOCK)),
    }
}

fn cell(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}")).unwrap_or_else(|| "-".into())
}

fn pct(v: Option<f64>) -> String {
    v.map(|x| format!("{:.2}%", x * 100.0)).unwrap_or_else(|| "-".into())
}

fn csv_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.10}")).unwrap_or_default()
}

fn metrics_csv_cells(m: &MetricVector) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        csv_opt(m.sharpe),
        csv_opt(m.cagr),
        csv_opt(m.mdd),
        csv_opt(m.calmar),
        m.n_trades.map(|n| n.to_string()).unwrap_or_default(),
        csv_opt(m.trades_per_day),
        csv_opt(m.c_max)
    )
}

pub fn surface_csv(map: &StabilityMap) -> String {
    let mut s = String::from("point,sharpe,cagr,mdd,calmar,n_trades,trades_per_day,c_max,feasible\n");
    for e in map.entries() {
        let _ = writeln!(s, "\"{}\",{},{}", e.point.label(), metrics_csv_cells(&e.metrics), e.feasible);
    }
    s
}

/// Gate column: PASS, FAIL, or N/E for a fold outside the evaluable set.
pub fn fold_gate(f: &FoldResult) -> &'static str {
    match (f.evaluable, f.fold_pass) {
        (false, _) => "N/E",
        (true, true) => "PASS",
        (true, false) => "FAIL",
    }
}

pub fn folds_csv(folds: &[FoldResult]) -> String {
    let mut s = String::from(
        "fold,train_start,train_end,test_start,test_end,theta,sharpe,cagr,mdd,calmar,n_trades,trades_per_day,c_max,gate,veto,post_veto\n",
    );
    for f in folds {
        let m = f.m_test.clone().unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},\"{}\",{},{},{},{}",
            f.index,
            f.train_range.start.to_rfc3339(),
            f.train_range.end.to_rfc3339(),
            f.test_range.start.to_rfc3339(),
            f.test_range.end.to_rfc3339(),
            f.theta.as_ref().map(|t| t.label()).unwrap_or_default(),
            metrics_csv_cells(&m),
            fold_gate(f),
            f.veto_triggered,
            f.post_veto
        );
    }
    s
}

/// Fixed-width fold table: test SR, MDD, Calmar, trades, trades/day and gate.
pub fn fold_table(folds: &[FoldResult]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<5} {:>8} {:>8} {:>8} {:>7} {:>6}  {:<5} note", "fold", "SR", "MDD", "Calmar", "trades", "tpd", "gate");
    for f in folds {
        let m = f.m_test.clone().unwrap_or_default();
        let mut note = f.note.clone().unwrap_or_default();
        if f.veto_triggered {
            note = format!("veto {note}");
        }
        let line = format!(
            "{:<5} {:>8} {:>8} {:>8} {:>7} {:>6}  {:<5} {}",
            f.index,
            cell(m.sharpe, 2),
            pct(m.mdd),
            cell(m.calmar, 2),
            m.n_trades.map(|n| n.to_string()).unwrap_or_else(|| "-".into()),
            cell(m.trades_per_day, 2),
            fold_gate(f),
            note.trim()
        );
        let _ = writeln!(s, "{}", line.trim_end());
    }
    s
}

fn metric_line(label: &str, m: &MetricVector) -> String {
    format!(
        "  {label:<10} SR {}  CAGR {}  MDD {}  Calmar {}  trades {}  trades/day {}  C_max {}\n",
        cell(m.sharpe, 2),
        pct(m.cagr),
        pct(m.mdd),
        cell(m.calmar, 2),
        m.n_trades.map(|n| n.to_string()).unwrap_or_else(|| "-".into()),
        cell(m.trades_per_day, 2),
        cell(m.c_max, 2)
    )
}

pub fn summary(pack: &EvidencePack) -> String {
    let mut s = String::new();
    let v = &pack.verdict;
    let _ = writeln!(s, "{} {}", pack.tool, pack.version);
    let _ = writeln!(s, "config hash {}", pack.config_hash);
    let _ = writeln!(s, "data {}", pack.data_source);
    let _ = write!(s, "verdict: {}", v.label());
    match v.failed_gate {
        Some(g) => {
            let _ = writeln!(s, " (halted at {g:?})");
        }
        None => s.push('\n'),
    }
    let _ = writeln!(s, "\ngate trace");
    for g in &v.trace {
        let _ = writeln!(s, "  #{:<3} {:?} {:?}: {}", g.seq, g.gate, g.status, g.detail);
    }

    let is = &pack.stage_is;
    let _ = writeln!(s, "\nstage I (IS)");
    let _ = writeln!(
        s,
        "  grid {} points, budget used {}; sr_opt {:.3}; viability {:?}",
        pack.search.grid_size, pack.search.budget_used, is.sr_opt, is.viability
    );
    let _ = writeln!(
        s,
        "  below plateau {}, rejected by trades {}, rejected by cliff {}, kept {}",
        is.below_plateau.len(),
        is.rejected_by_trades.len(),
        is.rejected_by_cliff.len(),
        is.kept.len()
    );
    if let Some(sl) = &is.shortlist {
        let _ = writeln!(s, "  shortlist ({}):", sl.candidates().len());
        for (i, c) in sl.candidates().iter().enumerate() {
            let _ = writeln!(s, "    {}. {}", i + 1, c.label());
        }
    }
    if let Some(m) = &is.top_metrics {
        s.push_str(&metric_line("top", m));
    }

    if let Some(w) = &pack.stage_wfa {
        let _ = writeln!(s, "\nstage II (WFA)");
        for line in fold_table(&w.folds).lines() {
            let _ = writeln!(s, "  {line}");
        }
        let _ = writeln!(s, "  gate {:?}: {}", w.verdict, w.gate.reason);
        if let Some(t) = &w.theta_star {
            let _ = writeln!(s, "  theta* {} (hash {})", t.theta_star.label(), &t.hash[..12]);
        }
        for d in &w.diagnostics {
            let _ = writeln!(
                s,
                "  fold {} diagnostics: dSR {}  eta {}{}",
                d.index,
                cell(d.delta_sr, 2),
                cell(d.eta, 2),
                if d.eta_undefined { " (undefined)" } else { "" }
            );
        }
    }

    if let Some(o) = &pack.stage_oos {
        let _ = writeln!(s, "\nstage III (OOS)");
        s.push_str(&metric_line("oos", &o.m_oos));
        let _ = writeln!(s, "  G3 {:?}; {}", o.gate_g3, o.within_band_note);
    }
    if let Some(d) = &pack.degradation {
        let _ = writeln!(s, "\ndegradation (diagnostic)");
        let _ = writeln!(
            s,
            "  SR IS {} / WFA {} / OOS {};  MDD IS {} / WFA {} / OOS {}",
            cell(d.sr_is, 2),
            cell(d.sr_wfa_mean, 2),
            cell(d.sr_oos, 2),
            pct(d.mdd_is),
            pct(d.mdd_wfa_mean),
            pct(d.mdd_oos)
        );
        for n in &d.notes {
            let _ = writeln!(s, "  - {n}");
        }
    }
    if let Some(st) = &pack.stress {
        let _ = writeln!(s, "\nstress envelope (report only)");
        s.push_str(&metric_line("base", &st.base));
        s.push_str(&metric_line("stressed", &st.stressed));
        let _ = writeln!(s, "  net P&L {:.2} -> {:.2}", st.net_pnl_base, st.net_pnl_stressed);
    }
    if !pack.ablation.is_empty() {
        let _ = writeln!(s, "\nguard ablation (report only)");
        for a in &pack.ablation {
            let deltas: Vec<String> = a.delta.iter().map(|(k, v)| format!("{k} {}", cell(*v, 4))).collect();
            let _ = writeln!(s, "  {:<18} fired {:<5} {}", a.guard.to_string(), a.guard_fired, deltas.join("  "));
        }
    }
    s
}

fn equity_csv(points: &[EquityPoint]) -> String {
    let mut s = String::from("date,equity\n");
    for p in points {
        let _ = writeln!(s, "{},{:.6}", p.timestamp.date_naive(), p.equity);
    }
    s
}

fn write_equity(out: &Path, stem: &str, title: &str, points: &[EquityPoint]) -> Result<()> {
    write(out, &format!("{stem}.csv"), equity_csv(points))?;
    let values: Vec<f64> = points.iter().map(|p| p.equity).collect();
    write(out, &format!("{stem}.svg"), line_chart(title, &[Line { label: stem, values: &values }]))
}

/// Summary text, fold table, surface and one equity CSV + SVG per stage.
pub fn emit_report(pack: &EvidencePack, out: &Path) -> Result<()> {
    write(out, "summary.txt", summary(pack))?;
    write(out, "is_surface.csv", surface_csv(&pack.stage_is.map))?;
    write_equity(out, "equity_is", "IS equity (top shortlist candidate)", &pack.is_equity_daily)?;
    if let Some(w) = &pack.stage_wfa {
        write(out, "folds.csv", folds_csv(&w.folds))?;
        let mut s = String::from("fold,date,equity\n");
        for f in &w.folds {
            for p in &f.test_equity_daily {
                let _ = writeln!(s, "{},{},{:.6}", f.index, p.timestamp.date_naive(), p.equity);
            }
        }
        write(out, "equity_wfa.csv", s)?;
        let curves: Vec<(String, Vec<f64>)> = w
            .folds
            .iter()
            .filter(|f| !f.test_equity_daily.is_empty())
            .map(|f| (format!("fold {}", f.index), f.test_equity_daily.iter().map(|p| p.equity).collect()))
            .collect();
        let lines: Vec<Line<'_>> = curves.iter().map(|(l, v)| Line { label: l, values: v }).collect();
        write(out, "equity_wfa.svg", line_chart("WFA forward-test equity by fold", &lines))?;
    }
    if let Some(o) = &pack.stage_oos {
        write_equity(out, "equity_oos", "OOS equity (theta*)", &o.equity_daily)?;
    }
    Ok(())
}
