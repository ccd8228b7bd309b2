//! Post-validation comparison of alphas that passed every gate. Ranking is
//! OOS-first; IS metrics and WFA dispersion are carried for the report only.

use std::cmp::Ordering;
use std::fmt::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::MetricVector;
use crate::plot::{line_chart, Line};
use crate::protocol::{EvidencePack, Outcome};

/// Top-two gap below which the leaderboard prints an untested-difference
/// caveat. MDD is compared in percentage points.
pub const SMALL_DIFFERENCE: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum CompareError {
    #[error("no records to compare")]
    Empty,
    #[error("record {0} does not come from a passing run")]
    NotPassed(String),
    #[error("record {0} has no forward folds")]
    NoFolds(String),
    #[error("record {0}: {1}")]
    Incomplete(String, &'static str),
    #[error("unknown mandate {0:?}")]
    UnknownMandate(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaRecord {
    pub name: String,
    pub m_is: MetricVector,
    pub m_oos: MetricVector,
    pub fold_sr: Vec<f64>,
    pub wfa_mean_sr: f64,
    pub wfa_range: f64,
    pub passed: bool,
    /// Daily OOS equity divided by the initial deposit.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub oos_equity_normalized: Vec<f64>,
}

impl AlphaRecord {
    pub fn new(name: impl Into<String>, m_is: MetricVector, m_oos: MetricVector, fold_sr: Vec<f64>, passed: bool) -> Result<Self, CompareError> {
        let name = name.into();
        let d = dispersion(&fold_sr).ok_or_else(|| CompareError::NoFolds(name.clone()))?;
        Ok(Self {
            name,
            m_is,
            m_oos,
            fold_sr,
            wfa_mean_sr: d.mean,
            wfa_range: d.range,
            passed,
            oos_equity_normalized: Vec::new(),
        })
    }

    /// IS metrics are those of θ* on the stability map; fold Sharpes are the
    /// evaluable forward folds.
    pub fn from_pack(name: impl Into<String>, pack: &EvidencePack) -> Result<Self, CompareError> {
        let name = name.into();
        let passed = pack.verdict.outcome == Outcome::Deploy;
        if !passed {
            return Err(CompareError::NotPassed(name));
        }
        let wfa = pack
            .stage_wfa
            .as_ref()
            .ok_or(CompareError::Incomplete(name.clone(), "missing WFA report"))?;
        let oos = pack
            .stage_oos
            .as_ref()
            .ok_or(CompareError::Incomplete(name.clone(), "missing OOS report"))?;
        let m_is = pack
            .stage_is
            .map
            .get(&oos.theta_star_used)
            .cloned()
            .or_else(|| pack.stage_is.top_metrics.clone())
            .ok_or(CompareError::Incomplete(name.clone(), "missing IS metrics"))?;
        let fold_sr = wfa
            .folds
            .iter()
            .filter(|f| wfa.gate.evaluable_set.contains(&f.index))
            .filter_map(|f| f.m_test.as_ref().map(MetricVector::sharpe_or_zero))
            .collect();
        let deposit = pack.config.execution.initial_deposit;
        let mut rec = Self::new(name, m_is, oos.m_oos.clone(), fold_sr, passed)?;
        rec.oos_equity_normalized = oos.equity_daily.iter().map(|p| p.equity / deposit).collect();
        Ok(rec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mandate {
    MaxOosSharpe,
    MaxOosCalmar,
    MinOosMdd,
}

impl Mandate {
    pub const ALL: [Mandate; 3] = [Mandate::MaxOosSharpe, Mandate::MaxOosCalmar, Mandate::MinOosMdd];

    pub fn as_str(self) -> &'static str {
        match self {
            Mandate::MaxOosSharpe => "max_oos_sharpe",
            Mandate::MaxOosCalmar => "max_oos_calmar",
            Mandate::MinOosMdd => "min_oos_mdd",
        }
    }

    pub fn value(self, m: &MetricVector) -> Option<f64> {
        match self {
            Mandate::MaxOosSharpe => m.sharpe,
            Mandate::MaxOosCalmar => m.calmar,
            Mandate::MinOosMdd => m.mdd,
        }
    }

    /// Best first; undefined values sort last.
    fn cmp_values(self, a: Option<f64>, b: Option<f64>) -> Ordering {
        match (a, b) {
            (Some(x), Some(y)) => match self {
                Mandate::MinOosMdd => x.total_cmp(&y),
                _ => y.total_cmp(&x),
            },
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (None, None) => Ordering::Equal,
        }
    }

    /// Gap in the unit the caveat margin is stated in.
    fn gap(self, a: f64, b: f64) -> f64 {
        let d = (a - b).abs();
        match self {
            Mandate::MinOosMdd => d * 100.0,
            _ => d,
        }
    }
}

impl fmt::Display for Mandate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mandate {
    type Err = CompareError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mandate::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| CompareError::UnknownMandate(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeaderRow {
    pub rank: usize,
    pub name: String,
    pub value: Option<f64>,
    pub oos_calmar: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Leaderboard {
    pub mandate: Mandate,
    pub rows: Vec<LeaderRow>,
    pub caveat: Option<String>,
}

impl Leaderboard {
    pub fn leader(&self) -> &str {
        &self.rows[0].name
    }
}

fn order(mandate: Mandate, a: &AlphaRecord, b: &AlphaRecord) -> Ordering {
    mandate
        .cmp_values(mandate.value(&a.m_oos), mandate.value(&b.m_oos))
        .then_with(|| Mandate::MaxOosCalmar.cmp_values(a.m_oos.calmar, b.m_oos.calmar))
        .then_with(|| a.name.cmp(&b.name))
}

pub fn rank_alphas(records: &[AlphaRecord], mandate: Mandate) -> Result<Leaderboard, CompareError> {
    if records.is_empty() {
        return Err(CompareError::Empty);
    }
    if let Some(r) = records.iter().find(|r| !r.passed) {
        return Err(CompareError::NotPassed(r.name.clone()));
    }
    let mut sorted: Vec<&AlphaRecord> = records.iter().collect();
    sorted.sort_by(|a, b| order(mandate, a, b));
    let rows: Vec<LeaderRow> = sorted
        .iter()
        .enumerate()
        .map(|(i, r)| LeaderRow {
            rank: i + 1,
            name: r.name.clone(),
            value: mandate.value(&r.m_oos),
            oos_calmar: r.m_oos.calmar,
        })
        .collect();
    let caveat = match (rows.first().and_then(|r| r.value), rows.get(1).and_then(|r| r.value)) {
        (Some(a), Some(b)) if mandate.gap(a, b) < SMALL_DIFFERENCE => Some(format!(
            "small-difference, untested: {} vs {} differ by {:.4} < {SMALL_DIFFERENCE}{}",
            rows[0].name,
            rows[1].name,
            mandate.gap(a, b),
            if mandate == Mandate::MinOosMdd { " pp" } else { "" }
        )),
        _ => None,
    };
    Ok(Leaderboard { mandate, rows, caveat })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlObservation {
    pub is_sharpe_leader: String,
    pub oos_sharpe_leader: String,
    /// The IS leader also has the lowest OOS Sharpe.
    pub is_leader_oos_weakest: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReversalReport {
    pub leaders: Vec<(Mandate, String)>,
    pub reversal: bool,
    pub control: Option<ControlObservation>,
    pub boards: Vec<Leaderboard>,
}

/// Leader per mandate plus the IS-peak control observation. IS Sharpe never
/// enters a leaderboard; it is only compared after the fact.
pub fn rank_reversal_report(records: &[AlphaRecord], mandates: &[Mandate]) -> Result<ReversalReport, CompareError> {
    let boards = mandates
        .iter()
        .map(|&m| rank_alphas(records, m))
        .collect::<Result<Vec<_>, _>>()?;
    let leaders: Vec<(Mandate, String)> = boards.iter().map(|b| (b.mandate, b.leader().to_string())).collect();
    let reversal = leaders.windows(2).any(|w| w[0].1 != w[1].1);

    let oos = rank_alphas(records, Mandate::MaxOosSharpe)?;
    let is_leader = records
        .iter()
        .min_by(|a, b| {
            Mandate::MaxOosSharpe
                .cmp_values(a.m_is.sharpe, b.m_is.sharpe)
                .then_with(|| a.name.cmp(&b.name))
        })
        .ok_or(CompareError::Empty)?;
    let control = (records.len() >= 2 && is_leader.name != oos.leader()).then(|| ControlObservation {
        is_sharpe_leader: is_leader.name.clone(),
        oos_sharpe_leader: oos.leader().to_string(),
        is_leader_oos_weakest: oos.rows.last().is_some_and(|r| r.name == is_leader.name),
    });
    Ok(ReversalReport {
        leaders,
        reversal,
        control,
        boards,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Dispersion {
    pub mean: f64,
    pub range: f64,
}

fn dispersion(fold_sr: &[f64]) -> Option<Dispersion> {
    if fold_sr.is_empty() {
        return None;
    }
    let mean = fold_sr.iter().sum::<f64>() / fold_sr.len() as f64;
    let max = fold_sr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = fold_sr.iter().copied().fold(f64::INFINITY, f64::min);
    Some(Dispersion { mean, range: max - min })
}

/// Mean and max − min of forward fold Sharpes. Diagnostic only.
pub fn wfa_dispersion(record: &AlphaRecord) -> Result<Dispersion, CompareError> {
    dispersion(&record.fold_sr).ok_or_else(|| CompareError::NoFolds(record.name.clone()))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// One row per (mandate, rank).
pub fn leaderboard_csv(boards: &[Leaderboard]) -> String {
    let mut s = String::from("mandate,rank,name,value,oos_calmar\n");
    for b in boards {
        for r in &b.rows {
            let _ = writeln!(s, "{},{},{},{},{}", b.mandate, r.rank, r.name, opt(r.value), opt(r.oos_calmar));
        }
    }
    s
}

pub fn reversal_text(report: &ReversalReport, records: &[AlphaRecord]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "leaders by mandate (OOS-first)");
    for (m, name) in &report.leaders {
        let _ = writeln!(s, "  {m:<16} {name}");
    }
    let _ = writeln!(s, "rank reversal: {}", if report.reversal { "yes" } else { "no" });
    for b in &report.boards {
        if let Some(c) = &b.caveat {
            let _ = writeln!(s, "  [{}] {c}", b.mandate);
        }
    }
    let _ = writeln!(s, "control observation:");
    match &report.control {
        Some(c) => {
            let _ = writeln!(
                s,
                "  IS Sharpe leader {} is not the OOS Sharpe leader {}{}",
                c.is_sharpe_leader,
                c.oos_sharpe_leader,
                if c.is_leader_oos_weakest { "; it has the weakest OOS Sharpe" } else { "" }
            );
        }
        None => {
            let _ = writeln!(s, "  none");
        }
    }
    let _ = writeln!(s, "WFA dispersion (diagnostic, not used for ranking)");
    let _ = writeln!(s, "  {:<12} {:>8} {:>8}  folds", "alpha", "mean", "range");
    for r in records {
        let folds: Vec<String> = r.fold_sr.iter().map(|v| format!("{v:.2}")).collect();
        let _ = writeln!(s, "  {:<12} {:>8.2} {:>8.2}  [{}]", r.name, r.wfa_mean_sr, r.wfa_range, folds.join(", "));
    }
    let _ = writeln!(s, "small-difference margin: {SMALL_DIFFERENCE} (MDD in percentage points); no significance test applied");
    s
}

pub fn normalized_oos_svg(records: &[AlphaRecord]) -> String {
    let lines: Vec<Line<'_>> = records
        .iter()
        .map(|r| Line {
            label: &r.name,
            values: &r.oos_equity_normalized,
        })
        .collect();
    line_chart("Normalized OOS equity (equity / initial deposit)", &lines)
}
