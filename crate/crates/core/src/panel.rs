//! Exploded-panel construction, backward weighted sampling, and the
//! train/test split.
//!
//! A labeled history of `n` months explodes into `n` stacked sub-panels: the
//! sub-panel starting at month `s` (its *snapshot*) runs from `s` to `n` with
//! a `loan_age` counter starting at 0, so the full exploded panel has
//! `n(n+1)/2` rows. At production scale that panel is far too large to
//! materialize, so the pipeline instead draws a *backward weighted sample*
//! directly from the original rows: each exploded row survives with a
//! probability `p` read from a tier table keyed by the row's status and its
//! calendar month's observation count, and carries weight `1/p`, making
//! weighted totals unbiased for full-panel totals (Horvitz–Thompson).
//!
//! The sampler never builds the panel. An original observation at 1-based
//! month index `m` appears exactly `m` times in the full panel — once per
//! snapshot `1..=m`, at ages `m-1..=0` — and all `m` replicas share one
//! calendar month and status, hence one `p`. Keeping each replica
//! independently with probability `p` is therefore equivalent to drawing
//! `K ~ Binomial(m, p)` and picking `K` distinct ages uniformly without
//! replacement, which is what [`backward_weighted_sample`] does, loan by
//! loan, on a per-loan random substream.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::distr::Distribution;
use rand_distr::Binomial;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{LoanHistory, MonthlyCounts};
use crate::month::CalMonth;
use crate::rng::{stable_hash64, substream};
use crate::types::Status;

// ---------------------------------------------------------------------------
// Panel rows
// ---------------------------------------------------------------------------

/// One observation of the (possibly sampled) exploded panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelRow {
    pub loan_id: Arc<str>,
    /// First month of the sub-panel this row belongs to.
    pub snapshot_month: CalMonth,
    /// The month this row observes; equals `snapshot_month + loan_age`.
    pub calendar_month: CalMonth,
    /// Months since the snapshot, starting at 0.
    pub loan_age: u32,
    /// Months on book at the snapshot.
    pub snapshot_mob: u32,
    pub status: Status,
    /// Inverse selection probability; 1 for unsampled rows.
    pub weight: f64,
}

/// Header of the sampled-panel CSV artifact.
pub const PANEL_CSV_HEADER: &str =
    "loan_id,snapshot_month,calendar_month,loan_age,snapshot_mob,status,weight";

/// Failure to interpret a CSV line as a [`PanelRow`].
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("bad panel row: {0}")]
pub struct ParsePanelRowError(String);

impl PanelRow {
    /// The row as a line of the panel CSV artifact (no trailing newline).
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.loan_id,
            self.snapshot_month,
            self.calendar_month,
            self.loan_age,
            self.snapshot_mob,
            self.status.code(),
            self.weight
        )
    }

    /// Parses a line previously produced by [`PanelRow::to_csv_line`].
    pub fn from_csv_line(line: &str) -> Result<Self, ParsePanelRowError> {
        let err = |what: &str| ParsePanelRowError(format!("{what} in {line:?}"));
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(err("expected 7 fields"));
        }
        Ok(PanelRow {
            loan_id: Arc::from(fields[0]),
            snapshot_month: fields[1].parse().map_err(|_| err("bad snapshot_month"))?,
            calendar_month: fields[2].parse().map_err(|_| err("bad calendar_month"))?,
            loan_age: fields[3].parse().map_err(|_| err("bad loan_age"))?,
            snapshot_mob: fields[4].parse().map_err(|_| err("bad snapshot_mob"))?,
            status: fields[5].parse().map_err(|_| err("bad status"))?,
            weight: fields[6]
                .parse()
                .ok()
                .filter(|w: &f64| w.is_finite() && *w > 0.0)
                .ok_or_else(|| err("bad weight"))?,
        })
    }
}

/// Rows of the full exploded panel of an `n`-month history: `n(n+1)/2`.
pub fn exploded_size(n: u64) -> u64 {
    n * (n + 1) / 2
}

/// Materializes the full exploded panel of one history, snapshot by
/// snapshot, every row at weight 1.
///
/// Intended for test-scale oracles and tiny demos; production inputs go
/// through [`backward_weighted_sample`] instead.
pub fn explode_full(history: &LoanHistory, mob_offset: u32) -> impl Iterator<Item = PanelRow> + '_ {
    let loan_id: Arc<str> = Arc::from(history.loan_id());
    let n = history.n_months();
    (1..=n).flat_map(move |s| {
        let loan_id = loan_id.clone();
        (0..=(n - s)).map(move |age| PanelRow {
            loan_id: loan_id.clone(),
            snapshot_month: history.month_at(s - 1),
            calendar_month: history.month_at(s - 1 + age),
            loan_age: age,
            snapshot_mob: s - 1 + mob_offset,
            status: history.status_at(s - 1 + age),
            weight: 1.0,
        })
    })
}

// ---------------------------------------------------------------------------
// Sampling rate table
// ---------------------------------------------------------------------------

/// One tier: counts in `lo..=hi` (unbounded above when `hi` is `None`) are
/// sampled with probability `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateTier {
    pub lo: u64,
    pub hi: Option<u64>,
    pub p: f64,
}

impl RateTier {
    const fn new(lo: u64, hi: Option<u64>, p: f64) -> Self {
        RateTier { lo, hi, p }
    }
}

/// Selection probabilities keyed by row status and the row's calendar-month
/// observation count. Rare statuses keep high probabilities (bads are kept
/// outright in thin months); abundant ones are thinned aggressively.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingRateTable {
    pub bad_tiers: Vec<RateTier>,
    pub good_tiers: Vec<RateTier>,
}

impl Default for SamplingRateTable {
    fn default() -> Self {
        SamplingRateTable {
            bad_tiers: vec![
                RateTier::new(1, Some(500), 1.0),
                RateTier::new(501, Some(1000), 0.95),
                RateTier::new(1001, Some(2000), 0.90),
                RateTier::new(2001, Some(3000), 0.85),
                RateTier::new(3001, Some(4000), 0.80),
                RateTier::new(4001, Some(5000), 0.75),
                RateTier::new(5001, Some(6000), 0.70),
                RateTier::new(6001, None, 0.65),
            ],
            good_tiers: vec![
                RateTier::new(1, Some(100_000), 0.1),
                RateTier::new(100_001, Some(200_000), 0.1),
                RateTier::new(200_001, Some(300_000), 0.05),
                RateTier::new(300_001, Some(400_000), 1.0 / 30.0),
                RateTier::new(400_001, Some(500_000), 0.025),
                RateTier::new(500_001, Some(600_000), 0.02),
                RateTier::new(600_001, Some(700_000), 1.0 / 60.0),
                RateTier::new(700_001, Some(800_000), 1.0 / 70.0),
                RateTier::new(800_001, Some(900_000), 0.0125),
                RateTier::new(900_001, None, 1.0 / 90.0),
            ],
        }
    }
}

/// A structurally invalid [`SamplingRateTable`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum RateTableError {
    #[error("{status} tiers are empty")]
    Empty { status: Status },
    #[error("{status} tiers must start at count 1, found {lo}")]
    BadStart { status: Status, lo: u64 },
    #[error(
        "{status} tier starting at {lo} does not follow the previous tier ending at {prev_hi}"
    )]
    NotContiguous { status: Status, prev_hi: u64, lo: u64 },
    #[error("{status} tier {lo}..={hi} has inverted bounds")]
    InvertedBounds { status: Status, lo: u64, hi: u64 },
    #[error("{status} tier starting at {lo} is unbounded but not last")]
    UnboundedInterior { status: Status, lo: u64 },
    #[error("{status} tiers must end with an unbounded tier")]
    BoundedTail { status: Status },
    #[error("{status} tier starting at {lo} has probability {p} outside (0, 1]")]
    ProbabilityOutOfRange { status: Status, lo: u64, p: f64 },
}

impl SamplingRateTable {
    /// Checks that each status's tiers partition `[1, ∞)` with probabilities
    /// in `(0, 1]`.
    pub fn validate(&self) -> Result<(), RateTableError> {
        for (status, tiers) in [(Status::Bad, &self.bad_tiers), (Status::Good, &self.good_tiers)] {
            if tiers.is_empty() {
                return Err(RateTableError::Empty { status });
            }
            let mut expected_lo = 1u64;
            for (i, tier) in tiers.iter().enumerate() {
                if i == 0 && tier.lo != 1 {
                    return Err(RateTableError::BadStart { status, lo: tier.lo });
                }
                if tier.lo != expected_lo {
                    return Err(RateTableError::NotContiguous {
                        status,
                        prev_hi: expected_lo - 1,
                        lo: tier.lo,
                    });
                }
                if !(tier.p > 0.0 && tier.p <= 1.0) {
                    return Err(RateTableError::ProbabilityOutOfRange {
                        status,
                        lo: tier.lo,
                        p: tier.p,
                    });
                }
                match tier.hi {
                    Some(hi) => {
                        if hi < tier.lo {
                            return Err(RateTableError::InvertedBounds { status, lo: tier.lo, hi });
                        }
                        if i == tiers.len() - 1 {
                            return Err(RateTableError::BoundedTail { status });
                        }
                        expected_lo = hi + 1;
                    }
                    None => {
                        if i != tiers.len() - 1 {
                            return Err(RateTableError::UnboundedInterior { status, lo: tier.lo });
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Selection probability for a row of `status` in a month counting
    /// `monthly_count` rows of that status.
    ///
    /// Panics if `monthly_count` is 0 (a month cannot contain a row it does
    /// not count) or if the table is invalid; call [`Self::validate`] on
    /// untrusted tables first.
    pub fn rate_for(&self, status: Status, monthly_count: u64) -> f64 {
        assert!(monthly_count >= 1, "a row's own month must count it");
        let tiers = match status {
            Status::Bad => &self.bad_tiers,
            Status::Good => &self.good_tiers,
        };
        tiers
            .iter()
            .find(|t| monthly_count >= t.lo && t.hi.is_none_or(|hi| monthly_count <= hi))
            .unwrap_or_else(|| {
                panic!("no tier for {status} count {monthly_count}; table not validated")
            })
            .p
    }
}

// ---------------------------------------------------------------------------
// Backward weighted sampling
// ---------------------------------------------------------------------------

/// What the keep/drop decision applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingUnit {
    /// Each exploded row is kept or dropped independently (the default).
    #[default]
    Row,
    /// Each snapshot sub-panel is kept or dropped whole, keyed by the
    /// sub-panel's final row — which for every snapshot of a loan is the
    /// loan's last history month.
    Snapshot,
}

/// Sampling parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleOptions {
    pub seed: u64,
    /// Months already on book at the first performance month; added to every
    /// row's `snapshot_mob`.
    pub mob_offset: u32,
    pub unit: SamplingUnit,
}

impl SampleOptions {
    pub fn new(seed: u64) -> Self {
        SampleOptions { seed, mob_offset: 0, unit: SamplingUnit::Row }
    }
}

/// Sampling failures; all indicate the counts table does not describe the
/// population being sampled.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SampleError {
    #[error("calendar month {month} is missing from the monthly counts table")]
    MissingMonth { month: CalMonth },
    #[error("monthly counts record zero {status} rows in {month}, but loan {loan_id} has one")]
    InconsistentCount { loan_id: String, month: CalMonth, status: Status },
}

/// Draws the backward weighted sample for a whole portfolio.
///
/// Distributionally equivalent to materializing [`explode_full`] for every
/// loan and keeping each row independently with its tier probability at
/// weight `1/p` — without materializing anything. Work is keyed per loan on
/// [`substream`]s, so the result is a pure function of `(histories, counts,
/// table, options)` regardless of thread count, and rows come out grouped by
/// loan in input order.
///
/// `counts` must tally the same population being sampled (or a superset
/// month-wise); a missing month or a zero count for a present status is an
/// error rather than a silent mis-weighting.
pub fn backward_weighted_sample(
    histories: &[LoanHistory],
    counts: &MonthlyCounts,
    table: &SamplingRateTable,
    options: SampleOptions,
) -> Result<Vec<PanelRow>, SampleError> {
    let per_loan: Vec<Vec<PanelRow>> = histories
        .par_iter()
        .map(|h| sample_loan(h, counts, table, options))
        .collect::<Result<_, _>>()?;
    Ok(per_loan.into_iter().flatten().collect())
}

/// Samples one loan's exploded rows; see [`backward_weighted_sample`].
pub fn sample_loan(
    history: &LoanHistory,
    counts: &MonthlyCounts,
    table: &SamplingRateTable,
    options: SampleOptions,
) -> Result<Vec<PanelRow>, SampleError> {
    match options.unit {
        SamplingUnit::Row => sample_loan_rows(history, counts, table, options),
        SamplingUnit::Snapshot => sample_loan_snapshots(history, counts, table, options),
    }
}

fn rate_for_row(
    history: &LoanHistory,
    counts: &MonthlyCounts,
    table: &SamplingRateTable,
    month: CalMonth,
    status: Status,
) -> Result<f64, SampleError> {
    let count = counts.count_for(month, status).ok_or(SampleError::MissingMonth { month })?;
    if count == 0 {
        return Err(SampleError::InconsistentCount {
            loan_id: history.loan_id().to_string(),
            month,
            status,
        });
    }
    Ok(table.rate_for(status, count))
}

/// Draws `K ~ Binomial(n, p)` then `K` distinct values from `0..n`, returned
/// ascending. With `p = 1` the generator is untouched and all of `0..n` is
/// returned.
fn thinned_indices(rng: &mut impl rand::Rng, n: usize, p: f64) -> Vec<usize> {
    if p >= 1.0 {
        return (0..n).collect();
    }
    let binomial = Binomial::new(n as u64, p).expect("tier probability validated in (0, 1]");
    let k = binomial.sample(rng) as usize;
    let mut picked = rand::seq::index::sample(rng, n, k).into_vec();
    picked.sort_unstable();
    picked
}

fn sample_loan_rows(
    history: &LoanHistory,
    counts: &MonthlyCounts,
    table: &SamplingRateTable,
    options: SampleOptions,
) -> Result<Vec<PanelRow>, SampleError> {
    let mut rng = substream(options.seed, "panel.sample.rows", history.loan_id());
    let loan_id: Arc<str> = Arc::from(history.loan_id());
    let mut out = Vec::new();
    for m in 1..=history.n_months() {
        let month = history.month_at(m - 1);
        let status = history.status_at(m - 1);
        let p = rate_for_row(history, counts, table, month, status)?;
        let weight = 1.0 / p;
        // The observation at 1-based index m has m replicas, at ages 0..m.
        for age in thinned_indices(&mut rng, m as usize, p) {
            let age = age as u32;
            let snapshot = m - age; // 1-based snapshot index
            out.push(PanelRow {
                loan_id: loan_id.clone(),
                snapshot_month: history.month_at(snapshot - 1),
                calendar_month: month,
                loan_age: age,
                snapshot_mob: snapshot - 1 + options.mob_offset,
                status,
                weight,
            });
        }
    }
    Ok(out)
}

fn sample_loan_snapshots(
    history: &LoanHistory,
    counts: &MonthlyCounts,
    table: &SamplingRateTable,
    options: SampleOptions,
) -> Result<Vec<PanelRow>, SampleError> {
    let mut rng = substream(options.seed, "panel.sample.snapshots", history.loan_id());
    let loan_id: Arc<str> = Arc::from(history.loan_id());
    let n = history.n_months();
    // Every snapshot's final row is the loan's last history month, so one
    // rate covers all n sub-panels.
    let p = rate_for_row(history, counts, table, history.last_month(), history.terminal_status())?;
    let weight = 1.0 / p;
    let mut out = Vec::new();
    for snapshot_index in thinned_indices(&mut rng, n as usize, p) {
        let s = snapshot_index as u32 + 1; // 1-based snapshot index
        for age in 0..=(n - s) {
            out.push(PanelRow {
                loan_id: loan_id.clone(),
                snapshot_month: history.month_at(s - 1),
                calendar_month: history.month_at(s - 1 + age),
                loan_age: age,
                snapshot_mob: s - 1 + options.mob_offset,
                status: history.status_at(s - 1 + age),
                weight,
            });
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Stratified split
// ---------------------------------------------------------------------------

/// Which side of the train/test split a loan landed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Train => f.write_str("train"),
            Split::Test => f.write_str("test"),
        }
    }
}

/// Failure to interpret a string as a [`Split`].
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("expected train or test, got {0:?}")]
pub struct SplitParseError(String);

impl FromStr for Split {
    type Err = SplitParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(SplitParseError(other.to_string())),
        }
    }
}

/// Loan-level train/test assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitAssignment {
    train_fraction: f64,
    assignments: std::collections::BTreeMap<String, Split>,
}

impl SplitAssignment {
    /// Rebuilds an assignment from stored parts (e.g. a split artifact).
    pub fn from_parts(
        train_fraction: f64,
        assignments: impl IntoIterator<Item = (String, Split)>,
    ) -> Self {
        SplitAssignment { train_fraction, assignments: assignments.into_iter().collect() }
    }

    pub fn train_fraction(&self) -> f64 {
        self.train_fraction
    }

    pub fn split_of(&self, loan_id: &str) -> Option<Split> {
        self.assignments.get(loan_id).copied()
    }

    /// Assignments in loan-id order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, Split)> {
        self.assignments.iter().map(|(id, s)| (id.as_str(), *s))
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn count_of(&self, split: Split) -> usize {
        self.assignments.values().filter(|&&s| s == split).count()
    }
}

/// Splits loans into train/test at `train_fraction`, stratified by terminal
/// status so each stratum lands within one loan of the target share.
///
/// Within a stratum, loans are ordered by a seeded stable hash of their id
/// (ties broken by the id itself) and the first `round(n · fraction)` become
/// train. The assignment therefore depends only on `(loan ids, terminal
/// statuses, train_fraction, seed)` — not on input order.
///
/// Panics if `train_fraction` is outside `(0, 1)` or a loan id repeats.
pub fn stratified_split(
    histories: &[LoanHistory],
    train_fraction: f64,
    seed: u64,
) -> SplitAssignment {
    assert!(
        train_fraction > 0.0 && train_fraction < 1.0,
        "train_fraction must be inside (0, 1), got {train_fraction}"
    );
    let mut assignments = std::collections::BTreeMap::new();
    for stratum in [Status::Bad, Status::Good] {
        let mut ids: Vec<&str> = histories
            .iter()
            .filter(|h| h.terminal_status() == stratum)
            .map(LoanHistory::loan_id)
            .collect();
        ids.sort_unstable_by(|a, b| {
            (stable_hash64(seed, "split", a), *a).cmp(&(stable_hash64(seed, "split", b), *b))
        });
        let n_train = (ids.len() as f64 * train_fraction).round() as usize;
        for (i, id) in ids.into_iter().enumerate() {
            let split = if i < n_train { Split::Train } else { Split::Test };
            let previous = assignments.insert(id.to_string(), split);
            assert!(previous.is_none(), "duplicate loan id {id:?} in split input");
        }
    }
    SplitAssignment { train_fraction, assignments }
}
