//! Scorecard evaluation: monthly backtests, ROC and Youden cutoff
//! selection, log-odds→score conversion, score-band tables, confusion
//! matrices, and classification metrics.
//!
//! Everything here is a pure, order-insensitive aggregation over scored
//! rows. Aggregations are sampling-weighted throughout, so evaluations run
//! on a backward weighted sample estimate the corresponding full-panel
//! quantities.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::month::CalMonth;
use crate::types::Status;

/// Evaluation failures.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("no rows to evaluate")]
    NoRows,
    #[error("evaluation needs positive weight in both classes")]
    SingleClass,
    #[error("hazard {hazard} is outside (0, 1); log-odds undefined")]
    InvalidHazard { hazard: f64 },
    #[error("invalid score scale: {0}")]
    InvalidScale(String),
    #[error("cannot calibrate a score scale: all predictions share one log-odds value")]
    DegenerateScale,
    #[error("band width must be at least 1, got {width}")]
    InvalidBandWidth { width: u32 },
}

// ---------------------------------------------------------------------------
// Backtest
// ---------------------------------------------------------------------------

/// One evaluated panel row: what happened, what the model said, and the
/// sampling weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredRow {
    pub calendar_month: CalMonth,
    pub status: Status,
    pub weight: f64,
    pub hazard: f64,
}

/// Weighted actual and predicted bad rates for one calendar month.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonthlyBacktest {
    pub month: CalMonth,
    pub actual_rate: f64,
    pub predicted_rate: f64,
    pub weight: f64,
}

/// The monthly backtest with its summary error metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub months: Vec<MonthlyBacktest>,
    pub mae: f64,
    pub rmse: f64,
    /// Mean absolute percentage error over months with a nonzero actual
    /// rate; `None` when no month qualifies.
    pub mape: Option<f64>,
    /// Months left out of MAPE because their actual rate was zero (MAPE is
    /// undefined there, not infinite).
    pub zero_actual_months_excluded: usize,
}

/// Compares weighted actual bad rates with weighted mean predicted hazards
/// month by month.
pub fn backtest(rows: &[ScoredRow]) -> Result<BacktestReport, EvalError> {
    if rows.is_empty() {
        return Err(EvalError::NoRows);
    }
    let mut tallies: BTreeMap<CalMonth, (f64, f64, f64)> = BTreeMap::new();
    for row in rows {
        let entry = tallies.entry(row.calendar_month).or_insert((0.0, 0.0, 0.0));
        entry.0 += row.weight;
        entry.1 += row.weight * row.status.as_f64();
        entry.2 += row.weight * row.hazard;
    }
    let months: Vec<MonthlyBacktest> = tallies
        .into_iter()
        .map(|(month, (w, bad_w, pred_w))| MonthlyBacktest {
            month,
            actual_rate: bad_w / w,
            predicted_rate: pred_w / w,
            weight: w,
        })
        .collect();

    let n = months.len() as f64;
    let mae = months.iter().map(|m| (m.actual_rate - m.predicted_rate).abs()).sum::<f64>() / n;
    let rmse =
        (months.iter().map(|m| (m.actual_rate - m.predicted_rate).powi(2)).sum::<f64>() / n).sqrt();
    let nonzero: Vec<&MonthlyBacktest> = months.iter().filter(|m| m.actual_rate > 0.0).collect();
    let zero_actual_months_excluded = months.len() - nonzero.len();
    let mape = if nonzero.is_empty() {
        None
    } else {
        Some(
            nonzero
                .iter()
                .map(|m| (m.actual_rate - m.predicted_rate).abs() / m.actual_rate)
                .sum::<f64>()
                / nonzero.len() as f64,
        )
    };
    Ok(BacktestReport { months, mae, rmse, mape, zero_actual_months_excluded })
}

// ---------------------------------------------------------------------------
// ROC and Youden
// ---------------------------------------------------------------------------

/// One operating point: classify bad when the prediction is at least
/// `threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
}

/// The full ROC sweep with its trapezoid area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// Sweeps every distinct prediction value as a threshold, from the
/// all-negative corner `(∞, 0, 0)` down to `(min prediction, 1, 1)`.
/// Weighted: TPR is cumulated bad weight over total bad weight, FPR the
/// same for goods.
pub fn roc(rows: &[(Status, f64, f64)]) -> Result<RocCurve, EvalError> {
    if rows.is_empty() {
        return Err(EvalError::NoRows);
    }
    let total_bad: f64 = rows.iter().filter(|(s, _, _)| s.is_bad()).map(|(_, w, _)| w).sum();
    let total_good: f64 = rows.iter().filter(|(s, _, _)| !s.is_bad()).map(|(_, w, _)| w).sum();
    if total_bad <= 0.0 || total_good <= 0.0 {
        return Err(EvalError::SingleClass);
    }

    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| rows[b].2.total_cmp(&rows[a].2));

    let mut points = vec![RocPoint { threshold: f64::INFINITY, tpr: 0.0, fpr: 0.0 }];
    let (mut bad_w, mut good_w) = (0.0f64, 0.0f64);
    let mut i = 0;
    while i < order.len() {
        let threshold = rows[order[i]].2;
        // Consume the whole tie group: one operating point per distinct value.
        while i < order.len() && rows[order[i]].2 == threshold {
            let (status, w, _) = rows[order[i]];
            if status.is_bad() {
                bad_w += w;
            } else {
                good_w += w;
            }
            i += 1;
        }
        points.push(RocPoint { threshold, tpr: bad_w / total_bad, fpr: good_w / total_good });
    }

    let auc = points.windows(2).map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0).sum();
    Ok(RocCurve { points, auc })
}

/// The threshold maximizing Youden's `J = TPR − FPR`, ties broken toward
/// the higher threshold (fewer loans flagged bad).
pub fn youden_cutoff(curve: &RocCurve) -> (f64, f64) {
    let mut best = (f64::INFINITY, f64::NEG_INFINITY);
    for point in &curve.points {
        let j = point.tpr - point.fpr;
        // Points come in descending-threshold order, so strict improvement
        // keeps the highest threshold among ties.
        if j > best.1 {
            best = (point.threshold, j);
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Score scale
// ---------------------------------------------------------------------------

/// Score range endpoints shared by every scale.
pub const SCORE_MIN: i32 = 300;
pub const SCORE_MAX: i32 = 850;

/// How default log-odds map onto the 300–850 score range. Both modes are
/// strictly decreasing in the hazard before rounding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ScoreScale {
    /// Affine map sending `logodds_lo` (least risky) to 850 and
    /// `logodds_hi` (most risky) to 300; typically calibrated to the
    /// min/max predicted log-odds on train data.
    RangeCalibrated { logodds_lo: f64, logodds_hi: f64 },
    /// Industry-style anchor: `anchor_odds` maps to `anchor_score`, and
    /// each doubling of the default odds costs `points_to_double_odds`
    /// points.
    AnchorBased { anchor_score: f64, anchor_odds: f64, points_to_double_odds: f64 },
}

impl ScoreScale {
    pub fn validate(&self) -> Result<(), EvalError> {
        match *self {
            ScoreScale::RangeCalibrated { logodds_lo, logodds_hi } => {
                if !(logodds_lo.is_finite() && logodds_hi.is_finite() && logodds_lo < logodds_hi) {
                    return Err(EvalError::InvalidScale(format!(
                        "range endpoints must be finite with lo < hi, got {logodds_lo}, {logodds_hi}"
                    )));
                }
            }
            ScoreScale::AnchorBased { anchor_score, anchor_odds, points_to_double_odds } => {
                if !(anchor_score.is_finite()
                    && anchor_odds.is_finite()
                    && anchor_odds > 0.0
                    && points_to_double_odds.is_finite()
                    && points_to_double_odds > 0.0)
                {
                    return Err(EvalError::InvalidScale(format!(
                        "anchor needs finite score, positive odds and positive points-to-double, got {anchor_score}, {anchor_odds}, {points_to_double_odds}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// A range-calibrated scale spanning the given hazards' log-odds.
    pub fn calibrated_to(hazards: impl IntoIterator<Item = f64>) -> Result<Self, EvalError> {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for h in hazards {
            let logodds = log_odds(h)?;
            lo = lo.min(logodds);
            hi = hi.max(logodds);
        }
        if lo == f64::INFINITY {
            return Err(EvalError::NoRows);
        }
        if lo == hi {
            return Err(EvalError::DegenerateScale);
        }
        Ok(ScoreScale::RangeCalibrated { logodds_lo: lo, logodds_hi: hi })
    }
}

fn log_odds(hazard: f64) -> Result<f64, EvalError> {
    if !(hazard > 0.0 && hazard < 1.0) {
        return Err(EvalError::InvalidHazard { hazard });
    }
    Ok((hazard / (1.0 - hazard)).ln())
}

/// Converts a hazard to an integer score: strictly decreasing in the hazard
/// before rounding, clamped to `[300, 850]`.
pub fn to_score(hazard: f64, scale: &ScoreScale) -> Result<i32, EvalError> {
    let logodds = log_odds(hazard)?;
    let raw = match *scale {
        ScoreScale::RangeCalibrated { logodds_lo, logodds_hi } => {
            let span = logodds_hi - logodds_lo;
            SCORE_MAX as f64 + (logodds - logodds_lo) * (SCORE_MIN - SCORE_MAX) as f64 / span
        }
        ScoreScale::AnchorBased { anchor_score, anchor_odds, points_to_double_odds } => {
            let odds = hazard / (1.0 - hazard);
            anchor_score - points_to_double_odds * (odds / anchor_odds).log2()
        }
    };
    Ok((raw.round() as i32).clamp(SCORE_MIN, SCORE_MAX))
}

// ---------------------------------------------------------------------------
// Score bands
// ---------------------------------------------------------------------------

/// One score band's weighted composition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreBand {
    pub lo: i32,
    pub hi: i32,
    pub bad_weight: f64,
    pub good_weight: f64,
    pub total_weight: f64,
    /// Weighted mean predicted hazard; 0 for an empty band.
    pub mean_predicted_hazard: f64,
}

/// A row ready for banding: its integer score plus what the band tallies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandRow {
    pub score: i32,
    pub status: Status,
    pub weight: f64,
    pub hazard: f64,
}

/// Cuts the score range into fixed-width bands — `[300, 300+w]` first, then
/// `[lo, lo+w−1]` steps up to 850 — and tallies weighted goods, bads, and
/// mean predicted hazard per band. Empty bands are emitted with zeros.
pub fn score_band_table(rows: &[BandRow], band_width: u32) -> Result<Vec<ScoreBand>, EvalError> {
    if band_width == 0 {
        return Err(EvalError::InvalidBandWidth { width: band_width });
    }
    let w = band_width as i32;
    let band_index = |score: i32| -> usize {
        debug_assert!((SCORE_MIN..=SCORE_MAX).contains(&score));
        if score <= SCORE_MIN + w {
            0
        } else {
            ((score - SCORE_MIN - 1) / w) as usize
        }
    };
    let n_bands = band_index(SCORE_MAX) + 1;
    let mut bands: Vec<ScoreBand> = (0..n_bands)
        .map(|k| {
            let hi = (SCORE_MIN + (k as i32 + 1) * w).min(SCORE_MAX);
            let lo = if k == 0 { SCORE_MIN } else { SCORE_MIN + k as i32 * w + 1 };
            ScoreBand {
                lo,
                hi,
                bad_weight: 0.0,
                good_weight: 0.0,
                total_weight: 0.0,
                mean_predicted_hazard: 0.0,
            }
        })
        .collect();

    let mut hazard_weight = vec![0.0f64; n_bands];
    for row in rows {
        let band = &mut bands[band_index(row.score.clamp(SCORE_MIN, SCORE_MAX))];
        band.total_weight += row.weight;
        if row.status.is_bad() {
            band.bad_weight += row.weight;
        } else {
            band.good_weight += row.weight;
        }
        hazard_weight[band_index(row.score.clamp(SCORE_MIN, SCORE_MAX))] += row.weight * row.hazard;
    }
    for (band, hw) in bands.iter_mut().zip(hazard_weight) {
        if band.total_weight > 0.0 {
            band.mean_predicted_hazard = hw / band.total_weight;
        }
    }
    Ok(bands)
}

// ---------------------------------------------------------------------------
// Confusion matrices and classification metrics
// ---------------------------------------------------------------------------

/// Actual × predicted tallies. Weighted reals so the same type serves
/// count (weight 1) and weighted evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub true_negative: f64,
    pub false_positive: f64,
    pub false_negative: f64,
    pub true_positive: f64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> f64 {
        self.true_negative + self.false_positive + self.false_negative + self.true_positive
    }
}

/// Tallies loans against a score cutoff: a loan is predicted bad exactly
/// when its score is strictly below the cutoff (a score equal to the cutoff
/// is approved).
pub fn confusion_at(rows: &[(Status, i32, f64)], cutoff: i32) -> ConfusionMatrix {
    let mut m = ConfusionMatrix::default();
    for &(status, score, weight) in rows {
        let predicted_bad = score < cutoff;
        match (status.is_bad(), predicted_bad) {
            (false, false) => m.true_negative += weight,
            (false, true) => m.false_positive += weight,
            (true, false) => m.false_negative += weight,
            (true, true) => m.true_positive += weight,
        }
    }
    m
}

/// Accuracy, precision, recall, and F1. Undefined metrics (zero
/// denominators) are `None`, never silently 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

pub fn classification_metrics(m: &ConfusionMatrix) -> ClassificationMetrics {
    let total = m.total();
    let ratio = |num: f64, den: f64| if den > 0.0 { Some(num / den) } else { None };
    let accuracy = ratio(m.true_positive + m.true_negative, total);
    let precision = ratio(m.true_positive, m.true_positive + m.false_positive);
    let recall = ratio(m.true_positive, m.true_positive + m.false_negative);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    ClassificationMetrics { accuracy, precision, recall, f1 }
}
