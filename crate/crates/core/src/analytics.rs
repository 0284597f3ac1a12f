//! Statistics over recorded feedback logs: sign tallies, positive/negative
//! ratios, descriptive statistics and paired t-tests.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tamer::{FeedbackEvent, Sign};

/// One recorded session. Events are ordered by (episode, step) and always
/// carry a sign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackLog {
    pub session_id: String,
    pub participant_id: String,
    pub condition: String,
    pub events: Vec<FeedbackEvent>,
}

impl FeedbackLog {
    pub fn new(session_id: impl Into<String>, participant_id: impl Into<String>, condition: impl Into<String>) -> Self {
        Self {
            session_id: session_id.into(),
            participant_id: participant_id.into(),
            condition: condition.into(),
            events: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, ev) in self.events.iter().enumerate() {
            if ev.sign.is_none() {
                return Err(Error::LogValidation(format!(
                    "session {}: event {i} has no sign",
                    self.session_id
                )));
            }
        }
        for pair in self.events.windows(2) {
            if (pair[0].episode, pair[0].step) >= (pair[1].episode, pair[1].step) {
                return Err(Error::LogValidation(format!(
                    "session {}: event (episode {}, step {}) follows (episode {}, step {})",
                    self.session_id, pair[1].episode, pair[1].step, pair[0].episode, pair[0].step
                )));
            }
        }
        Ok(())
    }
}

/// `(positive, negative)` tallies.
pub fn counts(log: &FeedbackLog) -> (usize, usize) {
    log.events.iter().fold((0, 0), |(p, n), ev| match ev.sign {
        Some(Sign::Positive) => (p + 1, n),
        Some(Sign::Negative) => (p, n + 1),
        None => (p, n),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Ratio {
    Value(f64),
    /// Positive feedback only; the ratio is undefined.
    AllPositive,
}

impl Ratio {
    pub fn value(self) -> Option<f64> {
        match self {
            Ratio::Value(v) => Some(v),
            Ratio::AllPositive => None,
        }
    }
}

pub fn ratio_from_counts(positive: usize, negative: usize) -> Result<Ratio> {
    match (positive, negative) {
        (0, 0) => Err(Error::Stats("no feedback to analyze".into())),
        (_, 0) => Ok(Ratio::AllPositive),
        (p, n) => Ok(Ratio::Value(p as f64 / n as f64)),
    }
}

pub fn pos_neg_ratio(log: &FeedbackLog) -> Result<Ratio> {
    let (p, n) = counts(log);
    ratio_from_counts(p, n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Descriptive {
    pub n: usize,
    pub mean: f64,
    /// Sample (n - 1) standard deviation; `None` for a single value.
    pub std: Option<f64>,
}

impl fmt::Display for Descriptive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.std {
            Some(s) => write!(f, "{:.2} ± {:.2}", self.mean, s),
            None => write!(f, "{:.2} ± n/a", self.mean),
        }
    }
}

pub fn descriptive(values: &[f64]) -> Result<Descriptive> {
    if values.is_empty() {
        return Err(Error::Stats("descriptive statistics need at least one value".into()));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = (n >= 2).then(|| (centered_sum_of_squares(values, mean) / (n - 1) as f64).sqrt());
    Ok(Descriptive { n, mean, std })
}

/// Corrected two-pass sum of squared deviations.
fn centered_sum_of_squares(values: &[f64], mean: f64) -> f64 {
    let (sq, lin) = values.iter().fold((0.0, 0.0), |(sq, lin), &v| {
        let d = v - mean;
        (sq + d * d, lin + d)
    });
    (sq - lin * lin / values.len() as f64).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tail {
    /// Alternative: mean(x - y) > 0.
    OneTailedGreater,
    TwoTailed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t: f64,
    pub df: usize,
    pub p: f64,
    pub tail: Tail,
    pub mean_difference: f64,
    pub std_difference: f64,
}

/// Paired t-test on `x - y`.
///
/// If every difference is exactly zero there is no evidence either way and
/// the result is `t = 0, p = 1`. Constant non-zero differences have zero
/// variance and an infinite statistic, which is reported as an error.
pub fn paired_t(x: &[f64], y: &[f64], tail: Tail) -> Result<TTestResult> {
    if x.len() != y.len() {
        return Err(Error::Stats(format!("paired samples differ in length: {} vs {}", x.len(), y.len())));
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::Stats("paired t-test needs at least two pairs".into()));
    }
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let df = n - 1;
    let sum: f64 = d.iter().sum();
    let mean = sum / n as f64;
    let ss = centered_sum_of_squares(&d, mean);
    let std = (ss / df as f64).sqrt();

    if d.iter().all(|&v| v == 0.0) {
        let p = match tail {
            Tail::TwoTailed => 1.0,
            Tail::OneTailedGreater => 0.5,
        };
        return Ok(TTestResult { t: 0.0, df, p, tail, mean_difference: 0.0, std_difference: 0.0 });
    }
    if ss == 0.0 || d.iter().all(|&v| v == d[0]) {
        return Err(Error::Stats("differences have zero variance".into()));
    }

    // sum / sqrt(n * ss / df) is mean / (std / sqrt(n)) with one fewer rounding.
    let t = sum / (n as f64 * ss / df as f64).sqrt();
    let p = match tail {
        Tail::TwoTailed => student_t_two_sided(t, df as f64),
        Tail::OneTailedGreater => student_t_sf(t, df as f64),
    };
    Ok(TTestResult { t, df, p, tail, mean_difference: mean, std_difference: std })
}

/// `P(|T| > |t|)` for Student's t with `df` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    let x = df / (df + t * t);
    regularized_incomplete_beta(x, df / 2.0, 0.5).clamp(0.0, 1.0)
}

/// `P(T > t)`.
pub fn student_t_sf(t: f64, df: f64) -> f64 {
    let tail = 0.5 * student_t_two_sided(t, df);
    if t >= 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

/// `P(T <= t)`.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    1.0 - student_t_sf(t, df)
}

/// Lanczos approximation (g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).abs().ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// `I_x(a, b)` via the continued fraction, using the symmetry relation where
/// it converges faster.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

/// Modified Lentz evaluation.
fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const MAX_ITER: usize = 10_000;
    const EPS: f64 = 1e-16;
    const TINY: f64 = 1e-300;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;

        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;

        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

// ---------------------------------------------------------------------------
// JSON-lines log files

/// One line of a log file. A `session` header starts a new log; the `event`
/// lines after it belong to that log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogLine {
    Session {
        session_id: String,
        participant_id: String,
        condition: String,
    },
    Event(FeedbackEvent),
}

pub fn write_logs<W: Write>(logs: &[FeedbackLog], mut out: W) -> Result<()> {
    for log in logs {
        let header = LogLine::Session {
            session_id: log.session_id.clone(),
            participant_id: log.participant_id.clone(),
            condition: log.condition.clone(),
        };
        writeln!(out, "{}", serde_json::to_string(&header)?)?;
        for ev in &log.events {
            writeln!(out, "{}", serde_json::to_string(&LogLine::Event(ev.clone()))?)?;
        }
    }
    Ok(())
}

pub fn logs_to_string(logs: &[FeedbackLog]) -> Result<String> {
    let mut buf = Vec::new();
    write_logs(logs, &mut buf)?;
    Ok(String::from_utf8(buf).expect("json is utf-8"))
}

pub fn save_logs(logs: &[FeedbackLog], path: impl AsRef<Path>) -> Result<()> {
    write_logs(logs, File::create(path)?)
}

/// Parses JSON-lines text. `origin` only labels error messages.
pub fn parse_logs<R: BufRead>(input: R, origin: &Path) -> Result<Vec<FeedbackLog>> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut logs: Vec<FeedbackLog> = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: LogLine = serde_json::from_str(&line).map_err(|e| parse_err(lineno, e.to_string()))?;
        match parsed {
            LogLine::Session { session_id, participant_id, condition } => {
                logs.push(FeedbackLog::new(session_id, participant_id, condition));
            }
            LogLine::Event(ev) => {
                if ev.sign.is_none() {
                    return Err(parse_err(lineno, "event without a sign".into()));
                }
                logs.last_mut()
                    .ok_or_else(|| parse_err(lineno, "event before any session header".into()))?
                    .events
                    .push(ev);
            }
        }
    }
    for log in &logs {
        log.validate()?;
    }
    Ok(logs)
}

/// Loads one `.jsonl` file, or every `.jsonl` file of a directory in name
/// order.
pub fn load_logs(path: impl AsRef<Path>) -> Result<Vec<FeedbackLog>> {
    let path = path.as_ref();
    let files: Vec<PathBuf> = if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        files.retain(|p| p.extension().is_some_and(|ext| ext == "jsonl"));
        files.sort();
        files
    } else {
        vec![path.to_path_buf()]
    };
    let mut logs = Vec::new();
    for file in files {
        logs.extend(parse_logs(BufReader::new(File::open(&file)?), &file)?);
    }
    Ok(logs)
}

// ---------------------------------------------------------------------------
// Condition comparison

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionSummary {
    pub condition: String,
    pub sessions: usize,
    pub participants: usize,
    pub positive: usize,
    pub negative: usize,
    /// Per-participant ratios, excluding all-positive participants.
    pub ratio: Option<Descriptive>,
    pub all_positive: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub summaries: Vec<ConditionSummary>,
    /// `(first, second)` conditions compared, first minus second.
    pub compared: Option<(String, String)>,
    pub pairs: usize,
    pub test: Option<TTestResult>,
}

/// Per-participant positive/negative counts for each condition.
fn participant_counts(logs: &[FeedbackLog]) -> BTreeMap<String, BTreeMap<String, (usize, usize)>> {
    let mut by_cond: BTreeMap<String, BTreeMap<String, (usize, usize)>> = BTreeMap::new();
    for log in logs {
        let (p, n) = counts(log);
        let entry = by_cond
            .entry(log.condition.clone())
            .or_default()
            .entry(log.participant_id.clone())
            .or_default();
        entry.0 += p;
        entry.1 += n;
    }
    by_cond
}

/// Groups logs by condition, summarizes each group's per-participant ratio,
/// and when exactly two conditions are present (or `order` names two), runs a
/// paired t-test on the ratios of participants seen in both.
pub fn analyze_by_condition(logs: &[FeedbackLog], tail: Tail, order: Option<(&str, &str)>) -> Result<ConditionReport> {
    if logs.iter().all(|l| counts(l) == (0, 0)) {
        return Err(Error::Stats("no feedback to analyze".into()));
    }
    let by_cond = participant_counts(logs);
    let mut summaries = Vec::new();
    for (cond, parts) in &by_cond {
        let ratios: Vec<f64> = parts
            .values()
            .filter_map(|&(p, n)| ratio_from_counts(p, n).ok().and_then(Ratio::value))
            .collect();
        summaries.push(ConditionSummary {
            condition: cond.clone(),
            sessions: logs.iter().filter(|l| &l.condition == cond).count(),
            participants: parts.len(),
            positive: parts.values().map(|c| c.0).sum(),
            negative: parts.values().map(|c| c.1).sum(),
            ratio: descriptive(&ratios).ok(),
            all_positive: parts.values().filter(|&&(p, n)| p > 0 && n == 0).count(),
        });
    }

    let compared = match order {
        Some((a, b)) => {
            for c in [a, b] {
                if !by_cond.contains_key(c) {
                    return Err(Error::Stats(format!("no logs with condition {c:?}")));
                }
            }
            Some((a.to_string(), b.to_string()))
        }
        None if by_cond.len() == 2 => {
            let mut it = by_cond.keys();
            Some((it.next().unwrap().clone(), it.next().unwrap().clone()))
        }
        None => None,
    };

    let mut pairs = 0;
    let mut test = None;
    if let Some((a, b)) = &compared {
        let (xa, xb) = (&by_cond[a], &by_cond[b]);
        let (mut x, mut y) = (Vec::new(), Vec::new());
        for (pid, &(p, n)) in xa {
            let Some(&(p2, n2)) = xb.get(pid) else { continue };
            if let (Ok(Ratio::Value(r1)), Ok(Ratio::Value(r2))) = (ratio_from_counts(p, n), ratio_from_counts(p2, n2)) {
                x.push(r1);
                y.push(r2);
            }
        }
        pairs = x.len();
        test = paired_t(&x, &y, tail).ok();
    }
    Ok(ConditionReport { summaries, compared, pairs, test })
}

impl fmt::Display for ConditionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<16} {:>8} {:>12} {:>8} {:>8} {:>16} {:>12}",
            "condition", "sessions", "participants", "pos", "neg", "ratio", "all-positive"
        )?;
        for s in &self.summaries {
            let ratio = s.ratio.map_or_else(|| "n/a".to_string(), |d| d.to_string());
            writeln!(
                f,
                "{:<16} {:>8} {:>12} {:>8} {:>8} {:>16} {:>12}",
                s.condition, s.sessions, s.participants, s.positive, s.negative, ratio, s.all_positive
            )?;
        }
        match (&self.compared, &self.test) {
            (Some((a, b)), Some(t)) => write!(
                f,
                "paired t-test ({a} - {b}, {} pairs, {:?}): t({}) = {:.3}, p = {:.4}",
                self.pairs, t.tail, t.df, t.t, t.p
            ),
            (Some((a, b)), None) => write!(f, "paired t-test ({a} - {b}): not computable from {} pairs", self.pairs),
            (None, _) => write!(f, "paired t-test: needs exactly two conditions"),
        }
    }
}

/// Machine-readable form of a report: one row per condition plus one row for
/// the test.
pub fn write_report_csv<W: Write>(report: &ConditionReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "row", "condition", "sessions", "participants", "pos", "neg", "ratio_mean", "ratio_std", "all_positive",
        "t", "df", "p", "tail",
    ])?;
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for s in &report.summaries {
        w.write_record([
            "condition".to_string(),
            s.condition.clone(),
            s.sessions.to_string(),
            s.participants.to_string(),
            s.positive.to_string(),
            s.negative.to_string(),
            opt(s.ratio.map(|d| d.mean)),
            opt(s.ratio.and_then(|d| d.std)),
            s.all_positive.to_string(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
        ])?;
    }
    if let (Some((a, b)), Some(t)) = (&report.compared, &report.test) {
        let tail = match t.tail {
            Tail::TwoTailed => "two",
            Tail::OneTailedGreater => "one",
        };
        w.write_record([
            "paired_t".to_string(),
            format!("{a}-{b}"),
            String::new(),
            report.pairs.to_string(),
            String::new(),
            String::new(),
            t.mean_difference.to_string(),
            t.std_difference.to_string(),
            String::new(),
            t.t.to_string(),
            t.df.to_string(),
            t.p.to_string(),
            tail.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
