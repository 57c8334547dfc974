//! Input parsing, validation, and loan labeling.
//!
//! Three kinds of files enter the pipeline: a delimited loan-origination
//! file, a delimited monthly performance file, and one two-column CSV per
//! macroeconomic series. Parsing never skips a row silently: every input row
//! either becomes a typed record or a rejection with its line number and
//! reason, and every loan that cannot be labeled becomes an exclusion record,
//! so downstream reports can account for the full input.
//!
//! Labeling follows the fixed-window convention: a loan is *bad* at the
//! first month its delinquency bucket reaches the threshold (60+ days past
//! due under the default of 2 thirty-day buckets), and its history is
//! truncated there; otherwise it is *good*, truncated at the horizon month
//! (Type I censoring, 36 months by default).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::month::CalMonth;
use crate::types::Status;

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// A loan's origination attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoanOrigination {
    pub loan_id: String,
    pub orig_month: CalMonth,
    /// Credit score at origination, in score points (300–850).
    pub fico: i32,
    /// Debt-to-income ratio, percent.
    pub dti: f64,
    /// Combined loan-to-value ratio, percent.
    pub cltv: f64,
    /// Unpaid principal balance at origination, currency units.
    pub orig_upb: f64,
    /// Note rate, percent per annum.
    pub orig_int_rt: f64,
}

/// One monthly performance observation as read from the performance file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PerformanceRow {
    pub loan_id: String,
    pub month: CalMonth,
    /// Number of 30-day delinquency buckets: 0 = current, 2 = 60–89 days
    /// past due, and so on.
    pub dlq_status: u32,
}

/// A labeled, censored loan history.
///
/// Months are consecutive starting at `first_month`; every row is good
/// except that a bad-terminal loan's final row is bad. Those invariants are
/// enforced by construction, so the history is stored compactly as a first
/// month, a length, and the terminal label.
#[derive(Debug, Clone, PartialEq)]
pub struct LoanHistory {
    origination: LoanOrigination,
    first_month: CalMonth,
    n_months: u32,
    terminal_status: Status,
}

impl LoanHistory {
    /// Builds a history directly. Panics if `n_months` is zero; labeled
    /// histories always have at least the row that labeled them.
    pub fn new(
        origination: LoanOrigination,
        first_month: CalMonth,
        n_months: u32,
        terminal_status: Status,
    ) -> Self {
        assert!(n_months >= 1, "a loan history cannot be empty");
        LoanHistory { origination, first_month, n_months, terminal_status }
    }

    pub fn origination(&self) -> &LoanOrigination {
        &self.origination
    }

    pub fn loan_id(&self) -> &str {
        &self.origination.loan_id
    }

    pub fn first_month(&self) -> CalMonth {
        self.first_month
    }

    pub fn n_months(&self) -> u32 {
        self.n_months
    }

    pub fn last_month(&self) -> CalMonth {
        self.first_month + (self.n_months as i32 - 1)
    }

    pub fn terminal_status(&self) -> Status {
        self.terminal_status
    }

    /// Calendar month of the 0-based row index.
    pub fn month_at(&self, index: u32) -> CalMonth {
        debug_assert!(index < self.n_months);
        self.first_month + index as i32
    }

    /// Status of the 0-based row index: bad only on the final row of a
    /// bad-terminal history.
    pub fn status_at(&self, index: u32) -> Status {
        debug_assert!(index < self.n_months);
        if index == self.n_months - 1 {
            self.terminal_status
        } else {
            Status::Good
        }
    }

    /// The `(month, status)` rows in calendar order.
    pub fn rows(&self) -> impl Iterator<Item = (CalMonth, Status)> + '_ {
        (0..self.n_months).map(|i| (self.month_at(i), self.status_at(i)))
    }
}

/// Native observation frequency of a macro series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frequency {
    Monthly,
    Quarterly,
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Frequency::Monthly => f.write_str("monthly"),
            Frequency::Quarterly => f.write_str("quarterly"),
        }
    }
}

/// A validated macroeconomic series: sorted, gap-free at its native
/// frequency, finite values only.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroSeries {
    name: String,
    native_frequency: Frequency,
    observations: Vec<(CalMonth, f64)>,
}

impl MacroSeries {
    /// Validates and wraps a series: months strictly increasing with the
    /// step implied by `frequency` (1 month or 3 months), all values finite.
    pub fn new(
        name: impl Into<String>,
        frequency: Frequency,
        observations: Vec<(CalMonth, f64)>,
    ) -> Result<Self, IngestError> {
        let name = name.into();
        if observations.is_empty() {
            return Err(IngestError::EmptyMacroSeries { name });
        }
        let step = match frequency {
            Frequency::Monthly => 1,
            Frequency::Quarterly => 3,
        };
        for pair in observations.windows(2) {
            let (prev, next) = (pair[0].0, pair[1].0);
            let got = next - prev;
            if got == 0 {
                return Err(IngestError::DuplicateMacroMonth { name, month: next });
            }
            if got < 0 {
                return Err(IngestError::NonMonotoneMacroMonths { name, month: next });
            }
            if got != step {
                return Err(IngestError::FrequencyMismatch {
                    name,
                    frequency,
                    step: got,
                    month: next,
                });
            }
        }
        if let Some(&(month, value)) = observations.iter().find(|(_, v)| !v.is_finite()) {
            return Err(IngestError::NonFiniteMacroValue { name, month, value });
        }
        Ok(MacroSeries { name, native_frequency: frequency, observations })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn native_frequency(&self) -> Frequency {
        self.native_frequency
    }

    pub fn observations(&self) -> &[(CalMonth, f64)] {
        &self.observations
    }

    pub fn first_month(&self) -> CalMonth {
        self.observations[0].0
    }

    pub fn last_month(&self) -> CalMonth {
        self.observations[self.observations.len() - 1].0
    }

    /// The series value effective in `month`, or `None` outside coverage.
    ///
    /// Monthly series answer only their exact observation months. Quarterly
    /// series are step-held: an observation covers its own month and the two
    /// following months, which aligns a quarterly series to the monthly
    /// panel regardless of which month of the quarter the source stamps.
    pub fn value_at(&self, month: CalMonth) -> Option<f64> {
        let pos = self.observations.partition_point(|(m, _)| *m <= month);
        if pos == 0 {
            return None;
        }
        let (obs_month, value) = self.observations[pos - 1];
        let hold = match self.native_frequency {
            Frequency::Monthly => 1,
            Frequency::Quarterly => 3,
        };
        (month - obs_month < hold).then_some(value)
    }
}

/// A per-month tally of observation rows by status.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MonthTally {
    pub bads: u64,
    pub goods: u64,
}

/// Counts of bad and good observation rows per calendar month — the sampling
/// stage keys its selection rates on these.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MonthlyCounts {
    months: BTreeMap<CalMonth, MonthTally>,
}

impl MonthlyCounts {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one observation row.
    pub fn record(&mut self, month: CalMonth, status: Status) {
        let tally = self.months.entry(month).or_default();
        match status {
            Status::Bad => tally.bads += 1,
            Status::Good => tally.goods += 1,
        }
    }

    /// Inserts a precomputed tally (used when reading a counts artifact).
    pub fn insert(&mut self, month: CalMonth, tally: MonthTally) {
        self.months.insert(month, tally);
    }

    pub fn get(&self, month: CalMonth) -> Option<MonthTally> {
        self.months.get(&month).copied()
    }

    /// The count of rows with `status` in `month`, or `None` if the month is
    /// absent from the table entirely.
    pub fn count_for(&self, month: CalMonth, status: Status) -> Option<u64> {
        self.months.get(&month).map(|t| match status {
            Status::Bad => t.bads,
            Status::Good => t.goods,
        })
    }

    /// Months in calendar order with their tallies.
    pub fn iter(&self) -> impl Iterator<Item = (CalMonth, MonthTally)> + '_ {
        self.months.iter().map(|(m, t)| (*m, *t))
    }

    pub fn is_empty(&self) -> bool {
        self.months.is_empty()
    }

    /// Total rows counted, all months and both statuses.
    pub fn total_observations(&self) -> u64 {
        self.months.values().map(|t| t.bads + t.goods).sum()
    }
}

/// Tallies every history row by calendar month and row status.
pub fn monthly_counts(histories: &[LoanHistory]) -> MonthlyCounts {
    let mut counts = MonthlyCounts::new();
    for history in histories {
        for (month, status) in history.rows() {
            counts.record(month, status);
        }
    }
    counts
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

/// 0-based field positions of the required loan-file columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoanColumns {
    pub loan_id: usize,
    pub orig_month: usize,
    pub fico: usize,
    pub dti: usize,
    pub cltv: usize,
    pub orig_upb: usize,
    pub orig_int_rt: usize,
}

impl Default for LoanColumns {
    fn default() -> Self {
        LoanColumns {
            loan_id: 0,
            orig_month: 1,
            fico: 2,
            dti: 3,
            cltv: 4,
            orig_upb: 5,
            orig_int_rt: 6,
        }
    }
}

/// Shape of the loan-origination file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoanFormat {
    pub delimiter: char,
    pub skip_header: bool,
    pub columns: LoanColumns,
}

impl Default for LoanFormat {
    fn default() -> Self {
        LoanFormat { delimiter: '|', skip_header: false, columns: LoanColumns::default() }
    }
}

/// Shape of the performance file; columns are fixed as
/// `loan_id, month, dlq_status`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerfFormat {
    pub delimiter: char,
    pub skip_header: bool,
}

impl Default for PerfFormat {
    fn default() -> Self {
        PerfFormat { delimiter: '|', skip_header: false }
    }
}

/// One input row that could not be turned into a record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseRejection {
    /// 1-based line number in the source file.
    pub line: usize,
    pub reason: String,
}

/// Result of parsing the loan file: parsed rows plus accounted rejections.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedLoans {
    pub loans: Vec<LoanOrigination>,
    pub rejections: Vec<ParseRejection>,
}

/// Result of parsing the performance file.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedPerformance {
    pub rows: Vec<PerformanceRow>,
    pub rejections: Vec<ParseRejection>,
}

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Fatal ingest failures. Row-level problems are never fatal — they become
/// [`ParseRejection`]s or [`Exclusion`]s instead.
#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    MalformedMacroRow { path: PathBuf, line: usize, message: String },
    #[error("macro series {name:?}: duplicate month {month}")]
    DuplicateMacroMonth { name: String, month: CalMonth },
    #[error("macro series {name:?}: months decrease at {month}")]
    NonMonotoneMacroMonths { name: String, month: CalMonth },
    #[error("macro series {name:?} is declared {frequency} but steps {step} months at {month}")]
    FrequencyMismatch { name: String, frequency: Frequency, step: i32, month: CalMonth },
    #[error("macro series {name:?}: non-finite value {value} at {month}")]
    NonFiniteMacroValue { name: String, month: CalMonth, value: f64 },
    #[error("macro series {name:?} has no observations")]
    EmptyMacroSeries { name: String },
}

// ---------------------------------------------------------------------------
// Loan and performance parsing
// ---------------------------------------------------------------------------

fn read_lines(path: &Path) -> Result<Vec<String>, IngestError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| IngestError::Io { path: path.to_path_buf(), source })?;
    Ok(text.lines().map(str::to_string).collect())
}

fn field<'a>(fields: &[&'a str], index: usize, name: &str) -> Result<&'a str, String> {
    fields.get(index).copied().ok_or_else(|| {
        format!("missing column {name} (row has {} fields, need index {index})", fields.len())
    })
}

fn parse_field<T: FromStr>(
    fields: &[&str],
    index: usize,
    name: &str,
    kind: &str,
) -> Result<T, String> {
    let raw = field(fields, index, name)?;
    raw.parse::<T>().map_err(|_| format!("column {name}: invalid {kind} {raw:?}"))
}

/// Loan ids flow verbatim into comma-separated report files, so restrict
/// them to printable ASCII without separators or quoting characters.
fn check_loan_id(id: &str) -> Result<(), String> {
    if id.is_empty() {
        return Err("column loan_id: empty".to_string());
    }
    if !id.chars().all(|c| c.is_ascii_graphic() && !matches!(c, ',' | '|' | '"')) {
        return Err(format!("column loan_id: {id:?} contains characters unusable in report files"));
    }
    Ok(())
}

fn parse_loan_row(fields: &[&str], cols: &LoanColumns) -> Result<LoanOrigination, String> {
    let loan_id = field(fields, cols.loan_id, "loan_id")?.to_string();
    check_loan_id(&loan_id)?;
    let orig_month: CalMonth = parse_field(fields, cols.orig_month, "orig_month", "month")?;
    let fico: i32 = parse_field(fields, cols.fico, "fico", "integer")?;
    let dti: f64 = parse_field(fields, cols.dti, "dti", "number")?;
    let cltv: f64 = parse_field(fields, cols.cltv, "cltv", "number")?;
    let orig_upb: f64 = parse_field(fields, cols.orig_upb, "orig_upb", "number")?;
    let orig_int_rt: f64 = parse_field(fields, cols.orig_int_rt, "orig_int_rt", "number")?;

    if !(300..=850).contains(&fico) {
        return Err(format!("column fico: {fico} outside 300..=850"));
    }
    if !dti.is_finite() || dti < 0.0 {
        return Err(format!("column dti: {dti} must be a finite value >= 0"));
    }
    if !cltv.is_finite() || cltv <= 0.0 {
        return Err(format!("column cltv: {cltv} must be a finite value > 0"));
    }
    if !orig_upb.is_finite() || orig_upb <= 0.0 {
        return Err(format!("column orig_upb: {orig_upb} must be a finite value > 0"));
    }
    if !orig_int_rt.is_finite() || orig_int_rt <= 0.0 {
        return Err(format!("column orig_int_rt: {orig_int_rt} must be a finite value > 0"));
    }
    Ok(LoanOrigination { loan_id, orig_month, fico, dti, cltv, orig_upb, orig_int_rt })
}

/// Parses the loan-origination file. Malformed rows (and re-uses of a loan
/// id) are returned as rejections; only an unreadable file is fatal.
pub fn parse_loans(path: &Path, format: &LoanFormat) -> Result<ParsedLoans, IngestError> {
    let lines = read_lines(path)?;
    let mut loans = Vec::new();
    let mut rejections = Vec::new();
    let mut seen_ids = HashSet::new();
    for (i, line) in lines.iter().enumerate() {
        if (i == 0 && format.skip_header) || line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(format.delimiter).collect();
        match parse_loan_row(&fields, &format.columns) {
            Ok(loan) => {
                if seen_ids.insert(loan.loan_id.clone()) {
                    loans.push(loan);
                } else {
                    rejections.push(ParseRejection {
                        line: i + 1,
                        reason: format!("duplicate loan_id {:?}", loan.loan_id),
                    });
                }
            }
            Err(reason) => rejections.push(ParseRejection { line: i + 1, reason }),
        }
    }
    Ok(ParsedLoans { loans, rejections })
}

/// Parses the performance file (`loan_id, month, dlq_status` per row).
pub fn parse_performance(
    path: &Path,
    format: &PerfFormat,
) -> Result<ParsedPerformance, IngestError> {
    let lines = read_lines(path)?;
    let mut rows = Vec::new();
    let mut rejections = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        if (i == 0 && format.skip_header) || line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(format.delimiter).collect();
        let parsed = (|| -> Result<PerformanceRow, String> {
            let loan_id = field(&fields, 0, "loan_id")?.to_string();
            check_loan_id(&loan_id)?;
            let month: CalMonth = parse_field(&fields, 1, "month", "month")?;
            let dlq_status: u32 = parse_field(&fields, 2, "dlq_status", "non-negative integer")?;
            Ok(PerformanceRow { loan_id, month, dlq_status })
        })();
        match parsed {
            Ok(row) => rows.push(row),
            Err(reason) => rejections.push(ParseRejection { line: i + 1, reason }),
        }
    }
    Ok(ParsedPerformance { rows, rejections })
}

// ---------------------------------------------------------------------------
// Labeling
// ---------------------------------------------------------------------------

/// Labeling parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelOptions {
    /// Follow-up window in months; histories are censored here.
    pub horizon: u32,
    /// Delinquency bucket count that defines a bad (2 = 60+ days past due).
    pub bad_threshold: u32,
}

impl Default for LabelOptions {
    fn default() -> Self {
        LabelOptions { horizon: 36, bad_threshold: 2 }
    }
}

/// Why a loan was dropped during labeling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExclusionReason {
    /// Origination present but no performance rows.
    NoPerformance,
    /// Performance rows present but no origination record.
    NoOrigination,
    /// A calendar gap between consecutive performance months.
    GapInMonths { before: CalMonth, after: CalMonth },
    /// The same performance month reported twice.
    DuplicateMonth { month: CalMonth },
    /// Performance months go backwards.
    NonChronological { month: CalMonth },
}

impl fmt::Display for ExclusionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExclusionReason::NoPerformance => f.write_str("no performance rows"),
            ExclusionReason::NoOrigination => {
                f.write_str("performance rows without an origination record")
            }
            ExclusionReason::GapInMonths { before, after } => {
                write!(f, "gap in performance months between {before} and {after}")
            }
            ExclusionReason::DuplicateMonth { month } => {
                write!(f, "duplicate performance month {month}")
            }
            ExclusionReason::NonChronological { month } => {
                write!(f, "performance months out of order at {month}")
            }
        }
    }
}

/// One excluded loan with the reason, for the exclusion report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exclusion {
    pub loan_id: String,
    pub reason: ExclusionReason,
}

/// Labeled histories plus the exclusions that account for every dropped loan.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelOutcome {
    pub histories: Vec<LoanHistory>,
    pub exclusions: Vec<Exclusion>,
}

/// Labels and censors every loan.
///
/// A loan turns bad at its first month with `dlq_status >= bad_threshold`
/// inside the horizon window and its history is truncated at that month;
/// otherwise all its months are good and the history is truncated at the
/// horizon. Loans with gapped, duplicated, or out-of-order months are
/// excluded, as are originations without performance and performance
/// without origination.
pub fn validate_and_label(
    loans: &[LoanOrigination],
    perf_rows: &[PerformanceRow],
    options: LabelOptions,
) -> LabelOutcome {
    assert!(options.horizon >= 1, "horizon must be at least one month");
    assert!(options.bad_threshold >= 1, "bad_threshold must be at least one bucket");

    let mut by_loan: HashMap<&str, Vec<(CalMonth, u32)>> = HashMap::new();
    for row in perf_rows {
        by_loan.entry(&row.loan_id).or_default().push((row.month, row.dlq_status));
    }

    let mut histories = Vec::new();
    let mut exclusions = Vec::new();

    for loan in loans {
        let Some(months) = by_loan.remove(loan.loan_id.as_str()) else {
            exclusions.push(Exclusion {
                loan_id: loan.loan_id.clone(),
                reason: ExclusionReason::NoPerformance,
            });
            continue;
        };
        match label_one(loan, &months, options) {
            Ok(history) => histories.push(history),
            Err(reason) => exclusions.push(Exclusion { loan_id: loan.loan_id.clone(), reason }),
        }
    }

    // Performance rows whose loan id never appeared in the loan file.
    let mut orphans: Vec<&str> = by_loan.into_keys().collect();
    orphans.sort_unstable();
    for loan_id in orphans {
        exclusions.push(Exclusion {
            loan_id: loan_id.to_string(),
            reason: ExclusionReason::NoOrigination,
        });
    }

    LabelOutcome { histories, exclusions }
}

fn label_one(
    loan: &LoanOrigination,
    months: &[(CalMonth, u32)],
    options: LabelOptions,
) -> Result<LoanHistory, ExclusionReason> {
    for pair in months.windows(2) {
        let ((prev, _), (next, _)) = (pair[0], pair[1]);
        match next - prev {
            1 => {}
            0 => return Err(ExclusionReason::DuplicateMonth { month: next }),
            d if d < 0 => return Err(ExclusionReason::NonChronological { month: next }),
            _ => return Err(ExclusionReason::GapInMonths { before: prev, after: next }),
        }
    }

    let window = months.len().min(options.horizon as usize);
    let first_bad = months[..window].iter().position(|&(_, dlq)| dlq >= options.bad_threshold);
    let (n_months, terminal_status) = match first_bad {
        Some(index) => (index as u32 + 1, Status::Bad),
        None => (window as u32, Status::Good),
    };
    Ok(LoanHistory::new(loan.clone(), months[0].0, n_months, terminal_status))
}

// ---------------------------------------------------------------------------
// Macro series loading
// ---------------------------------------------------------------------------

/// Loads one macro series from a `month,value` CSV.
///
/// A first line whose month field does not parse is treated as a header.
/// Structural problems — duplicate or decreasing months, gaps inconsistent
/// with the declared frequency, non-finite values — are fatal, because a
/// broken macro series silently corrupts every downstream regressor.
pub fn load_macro(
    path: &Path,
    name: &str,
    frequency: Frequency,
) -> Result<MacroSeries, IngestError> {
    let lines = read_lines(path)?;
    let mut observations = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let month_raw = fields.next().unwrap_or("");
        let value_raw = fields.next().unwrap_or("");
        let month = match month_raw.trim().parse::<CalMonth>() {
            Ok(m) => m,
            Err(_) if i == 0 => continue, // header row
            Err(e) => {
                return Err(IngestError::MalformedMacroRow {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: e.to_string(),
                })
            }
        };
        let value =
            value_raw.trim().parse::<f64>().map_err(|_| IngestError::MalformedMacroRow {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("invalid value {value_raw:?}"),
            })?;
        observations.push((month, value));
    }
    MacroSeries::new(name, frequency, observations)
}

/// Named macro series, looked up by the feature stage.
#[derive(Debug, Clone, Default)]
pub struct MacroStore {
    series: BTreeMap<String, MacroSeries>,
}

impl MacroStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, series: MacroSeries) {
        self.series.insert(series.name().to_string(), series);
    }

    pub fn get(&self, name: &str) -> Option<&MacroSeries> {
        self.series.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.series.keys().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn month(s: &str) -> CalMonth {
        s.parse().expect("test month")
    }

    fn write_temp(contents: &str) -> tempfile::NamedTempFile {
        let mut file = tempfile::NamedTempFile::new().expect("temp file");
        file.write_all(contents.as_bytes()).expect("write temp");
        file
    }

    fn loan(id: &str, orig: &str) -> LoanOrigination {
        LoanOrigination {
            loan_id: id.to_string(),
            orig_month: month(orig),
            fico: 720,
            dti: 35.0,
            cltv: 80.0,
            orig_upb: 250_000.0,
            orig_int_rt: 4.5,
        }
    }

    fn perf(id: &str, first: &str, dlqs: &[u32]) -> Vec<PerformanceRow> {
        let start = month(first);
        dlqs.iter()
            .enumerate()
            .map(|(i, &dlq)| PerformanceRow {
                loan_id: id.to_string(),
                month: start + i as i32,
                dlq_status: dlq,
            })
            .collect()
    }

    // ---- parse_loans -----------------------------------------------------

    #[test]
    fn parses_a_pipe_delimited_loan_row_with_the_identity_column_map() {
        let file = write_temp("L1|2018-02|720|35|80|250000|4.5\n");
        let parsed = parse_loans(file.path(), &LoanFormat::default()).unwrap();
        assert_eq!(parsed.rejections, vec![]);
        assert_eq!(parsed.loans.len(), 1);
        let l = &parsed.loans[0];
        assert_eq!(l.loan_id, "L1");
        assert_eq!(l.orig_month, month("2018-02"));
        assert_eq!(l.fico, 720);
        assert_eq!(l.dti, 35.0);
        assert_eq!(l.cltv, 80.0);
        assert_eq!(l.orig_upb, 250_000.0);
        assert_eq!(l.orig_int_rt, 4.5);
    }

    #[test]
    fn empty_fico_is_rejected_citing_the_column() {
        let file = write_temp("L1|2018-02||35|80|250000|4.5\n");
        let parsed = parse_loans(file.path(), &LoanFormat::default()).unwrap();
        assert!(parsed.loans.is_empty());
        assert_eq!(parsed.rejections.len(), 1);
        assert_eq!(parsed.rejections[0].line, 1);
        assert!(parsed.rejections[0].reason.contains("fico"), "{}", parsed.rejections[0].reason);
    }

    #[test]
    fn one_malformed_row_out_of_three_yields_two_loans_and_one_rejection() {
        let file = write_temp(
            "L1|2018-02|720|35|80|250000|4.5\n\
             L2|2018-03|oops|35|80|250000|4.5\n\
             L3|2018-04|700|30|75|200000|4.25\n",
        );
        let parsed = parse_loans(file.path(), &LoanFormat::default()).unwrap();
        assert_eq!(parsed.loans.len(), 2);
        assert_eq!(parsed.rejections.len(), 1);
        assert_eq!(parsed.rejections[0].line, 2);
    }

    #[test]
    fn honors_custom_delimiter_header_and_column_positions() {
        let file = write_temp(
            "rate;score;id;month;upb;ltv;ratio\n\
             4.5;720;L1;2018-02;250000;80;35\n",
        );
        let format = LoanFormat {
            delimiter: ';',
            skip_header: true,
            columns: LoanColumns {
                loan_id: 2,
                orig_month: 3,
                fico: 1,
                dti: 6,
                cltv: 5,
                orig_upb: 4,
                orig_int_rt: 0,
            },
        };
        let parsed = parse_loans(file.path(), &format).unwrap();
        assert_eq!(parsed.rejections, vec![]);
        assert_eq!(parsed.loans[0].loan_id, "L1");
        assert_eq!(parsed.loans[0].fico, 720);
        assert_eq!(parsed.loans[0].orig_upb, 250_000.0);
    }

    #[test]
    fn duplicate_loan_ids_are_rejected_not_overwritten() {
        let file = write_temp(
            "L1|2018-02|720|35|80|250000|4.5\n\
             L1|2018-03|700|30|75|200000|4.25\n",
        );
        let parsed = parse_loans(file.path(), &LoanFormat::default()).unwrap();
        assert_eq!(parsed.loans.len(), 1);
        assert_eq!(parsed.loans[0].orig_month, month("2018-02"));
        assert!(parsed.rejections[0].reason.contains("duplicate"));
    }

    #[test]
    fn out_of_range_attributes_are_rejected() {
        let rows = [
            "L1|2018-02|299|35|80|250000|4.5", // fico below range
            "L2|2018-02|720|-1|80|250000|4.5", // negative dti
            "L3|2018-02|720|35|0|250000|4.5",  // zero cltv
            "L4|2018-02|720|35|80|0|4.5",      // zero balance
            "L5|2018-02|720|35|80|250000|0",   // zero rate
        ];
        let file = write_temp(&(rows.join("\n") + "\n"));
        let parsed = parse_loans(file.path(), &LoanFormat::default()).unwrap();
        assert!(parsed.loans.is_empty());
        assert_eq!(parsed.rejections.len(), rows.len());
    }

    #[test]
    fn unreadable_loan_file_is_fatal() {
        let err = parse_loans(Path::new("/nonexistent/loans.psv"), &LoanFormat::default());
        assert!(matches!(err, Err(IngestError::Io { .. })));
    }

    // ---- parse_performance -----------------------------------------------

    #[test]
    fn parses_performance_rows_and_rejects_bad_ones() {
        let file = write_temp(
            "L1|2018-02|0\n\
             L1|2018-03|2\n\
             L2|2018-02|-1\n",
        );
        let parsed = parse_performance(file.path(), &PerfFormat::default()).unwrap();
        assert_eq!(parsed.rows.len(), 2);
        assert_eq!(parsed.rows[1].dlq_status, 2);
        assert_eq!(parsed.rejections.len(), 1);
        assert_eq!(parsed.rejections[0].line, 3);
    }

    // ---- validate_and_label ------------------------------------------------

    #[test]
    fn labels_first_sixty_day_delinquency_and_truncates_there() {
        let loans = vec![loan("L1", "2018-02")];
        let rows = perf("L1", "2018-02", &[0, 0, 1, 2, 3, 3]);
        let out = validate_and_label(&loans, &rows, LabelOptions::default());
        assert_eq!(out.exclusions, vec![]);
        let h = &out.histories[0];
        assert_eq!(h.n_months(), 4);
        assert_eq!(h.terminal_status(), Status::Bad);
        let statuses: Vec<u8> = h.rows().map(|(_, s)| s.code()).collect();
        assert_eq!(statuses, vec![0, 0, 0, 1]);
        assert_eq!(h.last_month(), month("2018-05"));
    }

    #[test]
    fn clean_forty_month_loan_is_censored_at_thirty_six() {
        let loans = vec![loan("L1", "2018-02")];
        let rows = perf("L1", "2018-02", &[0; 40]);
        let out = validate_and_label(&loans, &rows, LabelOptions::default());
        let h = &out.histories[0];
        assert_eq!(h.n_months(), 36);
        assert_eq!(h.terminal_status(), Status::Good);
    }

    #[test]
    fn delinquency_after_the_horizon_window_does_not_count() {
        let loans = vec![loan("L1", "2018-02")];
        let mut dlqs = vec![0; 40];
        dlqs[37] = 3; // month 38, outside the 36-month window
        let rows = perf("L1", "2018-02", &dlqs);
        let out = validate_and_label(&loans, &rows, LabelOptions::default());
        let h = &out.histories[0];
        assert_eq!(h.n_months(), 36);
        assert_eq!(h.terminal_status(), Status::Good);
    }

    #[test]
    fn gapped_months_are_excluded_with_the_gap_named() {
        let loans = vec![loan("L1", "2018-02")];
        let rows = vec![
            PerformanceRow { loan_id: "L1".into(), month: month("2018-02"), dlq_status: 0 },
            PerformanceRow { loan_id: "L1".into(), month: month("2018-04"), dlq_status: 0 },
        ];
        let out = validate_and_label(&loans, &rows, LabelOptions::default());
        assert!(out.histories.is_empty());
        assert_eq!(
            out.exclusions[0].reason,
            ExclusionReason::GapInMonths { before: month("2018-02"), after: month("2018-04") }
        );
    }

    #[test]
    fn duplicate_and_backward_months_are_excluded() {
        let loans = vec![loan("L1", "2018-02"), loan("L2", "2018-02")];
        let rows = vec![
            PerformanceRow { loan_id: "L1".into(), month: month("2018-02"), dlq_status: 0 },
            PerformanceRow { loan_id: "L1".into(), month: month("2018-02"), dlq_status: 0 },
            PerformanceRow { loan_id: "L2".into(), month: month("2018-03"), dlq_status: 0 },
            PerformanceRow { loan_id: "L2".into(), month: month("2018-02"), dlq_status: 0 },
        ];
        let out = validate_and_label(&loans, &rows, LabelOptions::default());
        assert!(out.histories.is_empty());
        assert_eq!(out.exclusions.len(), 2);
        assert!(matches!(out.exclusions[0].reason, ExclusionReason::DuplicateMonth { .. }));
        assert!(matches!(out.exclusions[1].reason, ExclusionReason::NonChronological { .. }));
    }

    #[test]
    fn loans_without_performance_and_performance_without_loans_are_both_excluded() {
        let loans = vec![loan("L1", "2018-02")];
        let rows = perf("L9", "2018-02", &[0, 0]);
        let out = validate_and_label(&loans, &rows, LabelOptions::default());
        assert!(out.histories.is_empty());
        assert_eq!(
            out.exclusions,
            vec![
                Exclusion { loan_id: "L1".into(), reason: ExclusionReason::NoPerformance },
                Exclusion { loan_id: "L9".into(), reason: ExclusionReason::NoOrigination },
            ]
        );
    }

    #[test]
    fn immediately_delinquent_loan_has_a_single_bad_month() {
        let loans = vec![loan("L1", "2018-02")];
        let rows = perf("L1", "2018-02", &[2, 3]);
        let out = validate_and_label(&loans, &rows, LabelOptions::default());
        let h = &out.histories[0];
        assert_eq!(h.n_months(), 1);
        assert_eq!(h.terminal_status(), Status::Bad);
    }

    #[test]
    fn bad_threshold_is_configurable() {
        let loans = vec![loan("L1", "2018-02")];
        let rows = perf("L1", "2018-02", &[0, 1, 0, 1]);
        let strict = LabelOptions { bad_threshold: 1, ..LabelOptions::default() };
        let out = validate_and_label(&loans, &rows, strict);
        assert_eq!(out.histories[0].n_months(), 2);
        assert_eq!(out.histories[0].terminal_status(), Status::Bad);
    }

    /// Re-labeling the performance implied by labeled histories reproduces
    /// them: labeling is idempotent.
    #[test]
    fn labeling_is_idempotent() {
        let loans = vec![loan("L1", "2018-02"), loan("L2", "2019-01"), loan("L3", "2020-06")];
        let mut rows = perf("L1", "2018-02", &[0, 0, 1, 2, 4]);
        rows.extend(perf("L2", "2019-01", &[0; 50]));
        rows.extend(perf("L3", "2020-06", &[0, 0, 0]));
        let options = LabelOptions::default();
        let first = validate_and_label(&loans, &rows, options);

        let implied: Vec<PerformanceRow> = first
            .histories
            .iter()
            .flat_map(|h| {
                h.rows().map(|(m, s)| PerformanceRow {
                    loan_id: h.loan_id().to_string(),
                    month: m,
                    dlq_status: if s.is_bad() { options.bad_threshold } else { 0 },
                })
            })
            .collect();
        let second = validate_and_label(&loans, &implied, options);
        assert_eq!(first.histories, second.histories);
    }

    // ---- monthly_counts ----------------------------------------------------

    #[test]
    fn counts_bads_and_goods_per_calendar_month() {
        let loans = vec![loan("A", "2020-04"), loan("B", "2020-04")];
        let mut rows = perf("A", "2020-04", &[0, 2]);
        rows.extend(perf("B", "2020-04", &[0, 0]));
        let out = validate_and_label(&loans, &rows, LabelOptions::default());
        let counts = monthly_counts(&out.histories);
        assert_eq!(counts.get(month("2020-04")), Some(MonthTally { bads: 0, goods: 2 }));
        assert_eq!(counts.get(month("2020-05")), Some(MonthTally { bads: 1, goods: 1 }));
        assert_eq!(counts.total_observations(), 4);
    }

    #[test]
    fn empty_input_gives_an_empty_table() {
        let counts = monthly_counts(&[]);
        assert!(counts.is_empty());
        assert_eq!(counts.total_observations(), 0);
    }

    #[test]
    fn total_counts_equal_total_history_length() {
        let loans = vec![loan("A", "2018-02"), loan("B", "2018-07"), loan("C", "2019-01")];
        let mut rows = perf("A", "2018-02", &[0, 0, 0, 2]);
        rows.extend(perf("B", "2018-07", &[0; 12]));
        rows.extend(perf("C", "2019-01", &[0, 3]));
        let out = validate_and_label(&loans, &rows, LabelOptions::default());
        let counts = monthly_counts(&out.histories);
        let total_rows: u64 = out.histories.iter().map(|h| u64::from(h.n_months())).sum();
        assert_eq!(counts.total_observations(), total_rows);
    }

    // ---- load_macro ----------------------------------------------------------

    #[test]
    fn loads_a_monthly_series_in_order() {
        let file = write_temp("month,value\n2020-01,3.5\n2020-02,3.6\n2020-03,3.9\n");
        let series = load_macro(file.path(), "UNRATENSA", Frequency::Monthly).unwrap();
        assert_eq!(series.observations().len(), 3);
        assert_eq!(series.value_at(month("2020-02")), Some(3.6));
        assert_eq!(series.value_at(month("2020-04")), None);
        assert_eq!(series.value_at(month("2019-12")), None);
    }

    #[test]
    fn duplicate_month_is_fatal() {
        let file = write_temp("2020-04,1.0\n2020-05,1.1\n2020-05,1.2\n");
        let err = load_macro(file.path(), "X", Frequency::Monthly).unwrap_err();
        assert!(matches!(err, IngestError::DuplicateMacroMonth { .. }), "{err}");
    }

    #[test]
    fn decreasing_months_are_fatal() {
        let file = write_temp("2020-05,1.0\n2020-04,1.1\n");
        let err = load_macro(file.path(), "X", Frequency::Monthly).unwrap_err();
        assert!(matches!(err, IngestError::NonMonotoneMacroMonths { .. }), "{err}");
    }

    #[test]
    fn quarterly_data_declared_monthly_is_a_frequency_mismatch() {
        let file = write_temp("2020-01,1.0\n2020-04,1.1\n2020-07,1.2\n");
        let err = load_macro(file.path(), "X", Frequency::Monthly).unwrap_err();
        assert!(matches!(err, IngestError::FrequencyMismatch { step: 3, .. }), "{err}");
    }

    #[test]
    fn quarterly_series_is_step_held_for_three_months() {
        let file = write_temp("2020-01,1.0\n2020-04,2.0\n");
        let series = load_macro(file.path(), "X", Frequency::Quarterly).unwrap();
        assert_eq!(series.value_at(month("2020-01")), Some(1.0));
        assert_eq!(series.value_at(month("2020-02")), Some(1.0));
        assert_eq!(series.value_at(month("2020-03")), Some(1.0));
        assert_eq!(series.value_at(month("2020-04")), Some(2.0));
        assert_eq!(series.value_at(month("2020-06")), Some(2.0));
        assert_eq!(series.value_at(month("2020-07")), None);
    }

    #[test]
    fn non_finite_values_are_fatal() {
        let file = write_temp("2020-01,1.0\n2020-02,nan\n");
        let err = load_macro(file.path(), "X", Frequency::Monthly).unwrap_err();
        assert!(matches!(err, IngestError::NonFiniteMacroValue { .. }), "{err}");
    }

    #[test]
    fn macro_store_looks_up_by_name() {
        let mut store = MacroStore::new();
        store.insert(
            MacroSeries::new("A", Frequency::Monthly, vec![(month("2020-01"), 1.0)]).unwrap(),
        );
        assert!(store.get("A").is_some());
        assert!(store.get("B").is_none());
    }
}
