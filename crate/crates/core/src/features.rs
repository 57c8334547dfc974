//! Regressor construction: piecewise-linear splines, spread at origination,
//! macro-series transforms, calendar indicators, and the FICO × balance
//! interaction.
//!
//! All transforms are resolved into a serializable [`FeatureSpec`] before any
//! row is touched, so a fit can be re-applied to new data bit-identically.
//! Row evaluation is pure: the same panel row, loan, and spec always produce
//! the same vector.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{LoanOrigination, MacroSeries, MacroStore};
use crate::month::CalMonth;
use crate::panel::PanelRow;
use crate::types::Status;

// ---------------------------------------------------------------------------
// Splines
// ---------------------------------------------------------------------------

/// Piecewise-linear spline basis term: `max(x − knot, 0)`.
///
/// Adding one such term per knot to a linear effect lets the fitted slope
/// change at each knot while staying continuous.
pub fn pspline(x: f64, knot: f64) -> f64 {
    (x - knot).max(0.0)
}

/// Knot locations for one variable's spline expansion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineSpec {
    pub variable: String,
    pub knots: Vec<f64>,
}

impl SplineSpec {
    pub fn new(variable: impl Into<String>, knots: Vec<f64>) -> Self {
        SplineSpec { variable: variable.into(), knots }
    }

    fn validate(&self) -> Result<(), FeatureError> {
        let increasing = self.knots.windows(2).all(|w| w[0] < w[1]);
        let finite = self.knots.iter().all(|k| k.is_finite());
        if !increasing || !finite {
            return Err(FeatureError::InvalidKnots { variable: self.variable.clone() });
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Spread at origination
// ---------------------------------------------------------------------------

/// Spread at origination: how far the note rate sits above the prevailing
/// market rate in the origination month (positive = borrower pays above
/// market). `market_minus_rate` flips the sign for shops using the opposite
/// convention.
pub fn sato(orig_int_rt: f64, market_rate_at_orig: f64, market_minus_rate: bool) -> f64 {
    if market_minus_rate {
        market_rate_at_orig - orig_int_rt
    } else {
        orig_int_rt - market_rate_at_orig
    }
}

// ---------------------------------------------------------------------------
// Macro transforms
// ---------------------------------------------------------------------------

/// How a macro series value is turned into a regressor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    /// Difference from the value 12 months earlier.
    YoyDiff,
    /// Difference from the value 3 months (one quarter) earlier.
    QoqDiff,
    /// Percentage change from the value 12 months earlier.
    YoyPctchg,
    /// Percentage change from the value 3 months earlier.
    QoqPctchg,
    /// The raw (possibly lagged) series value.
    Lag,
}

/// One macro regressor: a series, a transform, and an extra lag applied to
/// the evaluation month before the transform's own base offset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacroTransformSpec {
    pub series: String,
    pub transform: Transform,
    #[serde(default)]
    pub lag_months: u32,
}

impl MacroTransformSpec {
    /// The regressor's column name, e.g. `UNRATENSA_lag_1month` or
    /// `RCMFLBACTDPDPCT90P_q_to_q_pctchg`.
    pub fn regressor_name(&self) -> String {
        let mut name = self.series.clone();
        match self.transform {
            Transform::YoyDiff => name.push_str("_y_to_y_diff"),
            Transform::QoqDiff => name.push_str("_q_to_q_diff"),
            Transform::YoyPctchg => name.push_str("_y_to_y_pctchg"),
            Transform::QoqPctchg => name.push_str("_q_to_q_pctchg"),
            Transform::Lag => {}
        }
        if self.lag_months > 0 {
            name.push_str(&format!("_lag_{}month", self.lag_months));
        }
        name
    }
}

/// Evaluates one macro regressor at `month`.
///
/// The extra `lag_months` shifts the evaluation point first; diff/pctchg
/// transforms then reach back 12 (year) or 3 (quarter) further months for
/// their base. Quarterly series are step-held to monthly by
/// [`MacroSeries::value_at`], so a 3-month reach-back always lands one
/// quarterly observation earlier.
///
/// A month outside the series' coverage or a zero percentage-change base
/// makes the *row* unusable (see [`FeatureError::is_row_skip`]) rather than
/// aborting the run.
pub fn macro_transform(
    series: &MacroSeries,
    spec: &MacroTransformSpec,
    month: CalMonth,
) -> Result<f64, FeatureError> {
    let name = spec.regressor_name();
    let at = |m: CalMonth| {
        series.value_at(m).ok_or_else(|| FeatureError::MissingMacroValue {
            name: name.clone(),
            series: spec.series.clone(),
            month: m,
        })
    };
    let t = month - spec.lag_months as i32;
    let current = at(t)?;
    let base_offset = match spec.transform {
        Transform::Lag => return Ok(current),
        Transform::YoyDiff | Transform::YoyPctchg => 12,
        Transform::QoqDiff | Transform::QoqPctchg => 3,
    };
    let base = at(t - base_offset)?;
    match spec.transform {
        Transform::YoyDiff | Transform::QoqDiff => Ok(current - base),
        Transform::YoyPctchg | Transform::QoqPctchg => {
            if base == 0.0 {
                Err(FeatureError::ZeroPctchgBase { name, month: t })
            } else {
                Ok((current - base) / base)
            }
        }
        Transform::Lag => unreachable!("returned above"),
    }
}

// ---------------------------------------------------------------------------
// Calendar indicators
// ---------------------------------------------------------------------------

/// Closed month range flagged by the stress indicator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CovidWindow {
    pub start: CalMonth,
    pub end: CalMonth,
}

impl Default for CovidWindow {
    fn default() -> Self {
        CovidWindow { start: CalMonth::new(2020, 4), end: CalMonth::new(2020, 9) }
    }
}

/// `(covid_index, quarter1, quarter3)` for a calendar month. Quarter 1 is
/// Jan–Mar and quarter 3 is Jul–Sep; quarter 4 is the model's reference
/// quarter and quarter 2 is deliberately not emitted.
pub fn indicators(month: CalMonth, covid: CovidWindow) -> (f64, f64, f64) {
    let covid_index = (month >= covid.start && month <= covid.end) as u8 as f64;
    let quarter1 = (month.quarter() == 1) as u8 as f64;
    let quarter3 = (month.quarter() == 3) as u8 as f64;
    (covid_index, quarter1, quarter3)
}

// ---------------------------------------------------------------------------
// FICO × balance interaction
// ---------------------------------------------------------------------------

/// The fitted FICO × origination-balance interaction: FICO enters the model
/// multiplied by a constant per balance band, chosen so the bad-rate-vs-FICO
/// slope is equalized across bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionSpec {
    /// Band boundaries: band `g` covers `[edges[g-1], edges[g])` with
    /// `[0, edges[0])` first and `[edges.last(), ∞)` last.
    pub upb_band_edges: Vec<f64>,
    /// One multiplier per band (`edges.len() + 1` of them).
    pub band_multipliers: Vec<f64>,
    /// The common slope the multipliers calibrate each band to.
    pub average_slope: f64,
}

impl Default for InteractionSpec {
    fn default() -> Self {
        InteractionSpec::identity(vec![160_000.0, 238_000.0, 350_000.0])
    }
}

impl InteractionSpec {
    /// A pass-through spec: every band multiplies FICO by 1.
    pub fn identity(upb_band_edges: Vec<f64>) -> Self {
        let bands = upb_band_edges.len() + 1;
        InteractionSpec { upb_band_edges, band_multipliers: vec![1.0; bands], average_slope: 0.0 }
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        let edges_ok = self.upb_band_edges.windows(2).all(|w| w[0] < w[1])
            && self.upb_band_edges.iter().all(|e| e.is_finite() && *e > 0.0);
        let count_ok = self.band_multipliers.len() == self.upb_band_edges.len() + 1;
        let multipliers_ok = self.band_multipliers.iter().all(|m| m.is_finite() && *m > 0.0);
        if !edges_ok || !count_ok || !multipliers_ok {
            return Err(FeatureError::InvalidInteraction(format!(
                "{} edges / {} multipliers",
                self.upb_band_edges.len(),
                self.band_multipliers.len()
            )));
        }
        Ok(())
    }

    /// 0-based band of a balance.
    pub fn band_of(&self, orig_upb: f64) -> usize {
        self.upb_band_edges.partition_point(|&e| e <= orig_upb)
    }
}

/// FICO scaled by the multiplier of the band containing the balance.
pub fn apply_interaction(fico: f64, orig_upb: f64, spec: &InteractionSpec) -> f64 {
    fico * spec.band_multipliers[spec.band_of(orig_upb)]
}

/// One observation for [`fit_interaction`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteractionObs {
    pub fico: f64,
    pub orig_upb: f64,
    pub status: Status,
    pub weight: f64,
}

/// Calibrates the FICO × balance interaction from data.
///
/// Rows are cut into `n_fico_groups × n_upb_groups` weighted equal-frequency
/// cells. Within each balance group the bad-rate-vs-FICO relationship is
/// summarized by its endpoint slope — `(rate at lowest-FICO group − rate at
/// highest) / (n_fico_groups − 1)` — and each group's multiplier is the
/// ratio of the average slope to its own, so that FICO × multiplier has a
/// common slope everywhere. Band edges are the midpoints between adjacent
/// balance groups' boundary values.
pub fn fit_interaction(
    rows: &[InteractionObs],
    n_fico_groups: usize,
    n_upb_groups: usize,
) -> Result<InteractionSpec, FeatureError> {
    assert!(
        n_fico_groups >= 2 && n_upb_groups >= 1,
        "need at least 2 FICO groups and 1 balance group"
    );
    if rows.is_empty() {
        return Err(FeatureError::NoRows);
    }
    let fico_groups = weighted_quantile_groups(
        &rows.iter().map(|r| (r.fico, r.weight)).collect::<Vec<_>>(),
        n_fico_groups,
    );
    let upb_values: Vec<(f64, f64)> = rows.iter().map(|r| (r.orig_upb, r.weight)).collect();
    let upb_groups = weighted_quantile_groups(&upb_values, n_upb_groups);

    // Weighted bad rate per (upb group, fico group) cell.
    let mut weight = vec![vec![0.0f64; n_fico_groups]; n_upb_groups];
    let mut bad_weight = vec![vec![0.0f64; n_fico_groups]; n_upb_groups];
    for (i, row) in rows.iter().enumerate() {
        let (g, f) = (upb_groups[i], fico_groups[i]);
        weight[g][f] += row.weight;
        bad_weight[g][f] += row.weight * row.status.as_f64();
    }

    let mut slopes = Vec::with_capacity(n_upb_groups);
    for g in 0..n_upb_groups {
        let rate = |f: usize| -> Result<f64, FeatureError> {
            if weight[g][f] == 0.0 {
                return Err(FeatureError::EmptyInteractionCell {
                    upb_group: g + 1,
                    fico_group: f + 1,
                });
            }
            Ok(bad_weight[g][f] / weight[g][f])
        };
        // Rates at every cell must exist even though the slope uses only the
        // endpoints; an empty interior cell still means the grouping failed.
        for f in 0..n_fico_groups {
            rate(f)?;
        }
        let slope = (rate(0)? - rate(n_fico_groups - 1)?) / (n_fico_groups - 1) as f64;
        if slope <= 0.0 {
            return Err(FeatureError::NonPositiveSlope { upb_group: g + 1, slope });
        }
        slopes.push(slope);
    }
    let average_slope = slopes.iter().sum::<f64>() / slopes.len() as f64;
    let band_multipliers: Vec<f64> = slopes.iter().map(|s| average_slope / s).collect();
    let upb_band_edges = quantile_group_edges(&upb_values, &upb_groups, n_upb_groups);

    let spec = InteractionSpec { upb_band_edges, band_multipliers, average_slope };
    spec.validate()?;
    Ok(spec)
}

/// Weighted equal-frequency group per input row: all rows sharing a value
/// land in one group, chosen by the weight accumulated strictly below that
/// value — `min(k−1, ⌊cum_weight_below · k / total⌋)`.
fn weighted_quantile_groups(values: &[(f64, f64)], k: usize) -> Vec<usize> {
    debug_assert!(values.iter().all(|(v, w)| v.is_finite() && w.is_finite() && *w > 0.0));
    let total: f64 = values.iter().map(|(_, w)| w).sum();
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].0.total_cmp(&values[b].0));

    let mut groups = vec![0usize; values.len()];
    let mut cum_below = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        // One run of tied values shares a group.
        let value = values[order[i]].0;
        let mut run_weight = 0.0;
        let run_start = i;
        while i < order.len() && values[order[i]].0 == value {
            run_weight += values[order[i]].1;
            i += 1;
        }
        let group = (((cum_below * k as f64) / total) as usize).min(k - 1);
        for &idx in &order[run_start..i] {
            groups[idx] = group;
        }
        cum_below += run_weight;
    }
    groups
}

/// Midpoint edges between adjacent occupied quantile groups.
fn quantile_group_edges(values: &[(f64, f64)], groups: &[usize], k: usize) -> Vec<f64> {
    let mut min_of = vec![f64::INFINITY; k];
    let mut max_of = vec![f64::NEG_INFINITY; k];
    for (i, &(v, _)) in values.iter().enumerate() {
        let g = groups[i];
        min_of[g] = min_of[g].min(v);
        max_of[g] = max_of[g].max(v);
    }
    let occupied: Vec<usize> = (0..k).filter(|&g| min_of[g].is_finite()).collect();
    occupied.windows(2).map(|w| (max_of[w[0]] + min_of[w[1]]) / 2.0).collect()
}

// ---------------------------------------------------------------------------
// Bivariate log-odds tables
// ---------------------------------------------------------------------------

/// One equal-frequency bin of a bivariate log-odds table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BivariateBin {
    /// Smallest and largest variable value observed in the bin.
    pub lo: f64,
    pub hi: f64,
    pub weight: f64,
    pub bad_weight: f64,
    pub bad_rate: f64,
    /// `ln(rate / (1 − rate))`; `None` flags a degenerate all-good or
    /// all-bad bin instead of emitting ±∞.
    pub log_odds: Option<f64>,
}

/// Cuts `(value, status, weight)` rows into weighted equal-frequency bins
/// and reports each bin's weighted bad rate and log-odds, the raw material
/// for eyeballing a variable's relationship with default.
pub fn bivariate_logodds_table(
    rows: &[(f64, Status, f64)],
    n_bins: usize,
) -> Result<Vec<BivariateBin>, FeatureError> {
    if n_bins < 2 {
        return Err(FeatureError::TooFewBins { n_bins });
    }
    if rows.is_empty() {
        return Err(FeatureError::NoRows);
    }
    let values: Vec<(f64, f64)> = rows.iter().map(|&(v, _, w)| (v, w)).collect();
    let groups = weighted_quantile_groups(&values, n_bins);

    let mut bins: Vec<Option<BivariateBin>> = vec![None; n_bins];
    for (i, &(value, status, weight)) in rows.iter().enumerate() {
        let bin = bins[groups[i]].get_or_insert(BivariateBin {
            lo: value,
            hi: value,
            weight: 0.0,
            bad_weight: 0.0,
            bad_rate: 0.0,
            log_odds: None,
        });
        bin.lo = bin.lo.min(value);
        bin.hi = bin.hi.max(value);
        bin.weight += weight;
        bin.bad_weight += weight * status.as_f64();
    }
    let mut finished: Vec<BivariateBin> = bins.into_iter().flatten().collect();
    for bin in &mut finished {
        bin.bad_rate = bin.bad_weight / bin.weight;
        bin.log_odds = if bin.bad_rate > 0.0 && bin.bad_rate < 1.0 {
            Some((bin.bad_rate / (1.0 - bin.bad_rate)).ln())
        } else {
            None
        };
    }
    Ok(finished)
}

// ---------------------------------------------------------------------------
// Feature spec and row assembly
// ---------------------------------------------------------------------------

/// The complete, serializable recipe for turning a panel row into the
/// model's regressor vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureSpec {
    pub loan_age_knots: Vec<f64>,
    pub snapshot_mob_knots: Vec<f64>,
    pub cltv_knots: Vec<f64>,
    /// Series holding the prevailing market mortgage rate, for SATO.
    pub market_rate_series: String,
    /// Flips SATO to market − note rate.
    pub sato_market_minus_rate: bool,
    pub macro_transforms: Vec<MacroTransformSpec>,
    pub covid_window: CovidWindow,
    pub interaction: InteractionSpec,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        FeatureSpec {
            loan_age_knots: vec![8.0, 20.0],
            snapshot_mob_knots: vec![9.0, 21.0],
            cltv_knots: vec![80.0],
            market_rate_series: "MORTGAGE30US".to_string(),
            sato_market_minus_rate: false,
            macro_transforms: vec![
                // 90+ DPD balance share, quarter-over-quarter percentage change.
                MacroTransformSpec {
                    series: "RCMFLBACTDPDPCT90P".to_string(),
                    transform: Transform::QoqPctchg,
                    lag_months: 0,
                },
                // Unemployment rate, lagged one month.
                MacroTransformSpec {
                    series: "UNRATENSA".to_string(),
                    transform: Transform::Lag,
                    lag_months: 1,
                },
            ],
            covid_window: CovidWindow::default(),
            interaction: InteractionSpec::default(),
        }
    }
}

impl FeatureSpec {
    pub fn validate(&self) -> Result<(), FeatureError> {
        SplineSpec::new("loan_age", self.loan_age_knots.clone()).validate()?;
        SplineSpec::new("snapshot_mob", self.snapshot_mob_knots.clone()).validate()?;
        SplineSpec::new("cltv", self.cltv_knots.clone()).validate()?;
        self.interaction.validate()?;
        if self.covid_window.start > self.covid_window.end {
            return Err(FeatureError::InvalidCovidWindow {
                start: self.covid_window.start,
                end: self.covid_window.end,
            });
        }
        Ok(())
    }

    /// Regressor column names in design-matrix order (intercept excluded).
    pub fn regressor_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        let splined = |names: &mut Vec<String>, var: &str, knots: &[f64]| {
            names.push(var.to_string());
            for i in 1..=knots.len() {
                names.push(format!("{var}_pspline{i}"));
            }
        };
        splined(&mut names, "loan_age", &self.loan_age_knots);
        splined(&mut names, "snapshot_mob", &self.snapshot_mob_knots);
        names.push("fico".to_string());
        names.push("dti".to_string());
        names.push("orig_int_rt".to_string());
        splined(&mut names, "cltv", &self.cltv_knots);
        names.push("sato".to_string());
        names.push("fico_orig_upb".to_string());
        for m in &self.macro_transforms {
            names.push(m.regressor_name());
        }
        names.push("covid_index".to_string());
        names.push("quarter1".to_string());
        names.push("quarter3".to_string());
        names
    }
}

/// Everything wrong a feature stage can hit. [`Self::is_row_skip`] separates
/// per-row data gaps (count and move on) from configuration and data errors
/// that must abort.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeatureError {
    #[error("knots for {variable} must be finite and strictly increasing")]
    InvalidKnots { variable: String },
    #[error("invalid interaction spec: {0}")]
    InvalidInteraction(String),
    #[error("covid window {start}..{end} is inverted")]
    InvalidCovidWindow { start: CalMonth, end: CalMonth },
    #[error("macro series {name} is not loaded")]
    UnknownSeries { name: String },
    #[error("market rate series {series} has no value for origination month {month}")]
    MissingMarketRate { series: String, month: CalMonth },
    #[error("{name}: series {series} has no value at {month}")]
    MissingMacroValue { name: String, series: String, month: CalMonth },
    #[error("{name}: base value at {month} is zero, percentage change undefined")]
    ZeroPctchgBase { name: String, month: CalMonth },
    #[error("interaction cell (balance group {upb_group}, FICO group {fico_group}) is empty")]
    EmptyInteractionCell { upb_group: usize, fico_group: usize },
    #[error("balance group {upb_group}: bad rate is not decreasing in FICO (slope {slope}); interaction not identifiable")]
    NonPositiveSlope { upb_group: usize, slope: f64 },
    #[error("bivariate tables need at least 2 bins, got {n_bins}")]
    TooFewBins { n_bins: usize },
    #[error("no rows to process")]
    NoRows,
}

impl FeatureError {
    /// True for gaps that invalidate a single row (skip it, count the
    /// reason) rather than the whole run.
    pub fn is_row_skip(&self) -> bool {
        matches!(self, FeatureError::MissingMacroValue { .. } | FeatureError::ZeroPctchgBase { .. })
    }

    /// Stable label for skip accounting.
    pub fn skip_label(&self) -> &'static str {
        match self {
            FeatureError::MissingMacroValue { .. } => "missing_macro_value",
            FeatureError::ZeroPctchgBase { .. } => "zero_pctchg_base",
            _ => "fatal",
        }
    }
}

/// A validated [`FeatureSpec`] bound to its macro series, ready to evaluate
/// rows.
#[derive(Debug, Clone)]
pub struct FeatureAssembler {
    spec: FeatureSpec,
    names: Vec<String>,
    market: MacroSeries,
    macros: Vec<(MacroTransformSpec, MacroSeries)>,
}

impl FeatureAssembler {
    /// Validates the spec and resolves every referenced series. Fails fast on
    /// unknown series so row evaluation can never miss a whole series.
    pub fn new(spec: FeatureSpec, store: &MacroStore) -> Result<Self, FeatureError> {
        spec.validate()?;
        let lookup = |name: &str| -> Result<MacroSeries, FeatureError> {
            store
                .get(name)
                .cloned()
                .ok_or_else(|| FeatureError::UnknownSeries { name: name.to_string() })
        };
        let market = lookup(&spec.market_rate_series)?;
        let macros = spec
            .macro_transforms
            .iter()
            .map(|m| Ok((m.clone(), lookup(&m.series)?)))
            .collect::<Result<Vec<_>, FeatureError>>()?;
        let names = spec.regressor_names();
        Ok(FeatureAssembler { spec, names, market, macros })
    }

    /// Regressor column names in design-matrix order (intercept excluded).
    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn spec(&self) -> &FeatureSpec {
        &self.spec
    }

    /// The regressor vector for one panel row, in [`Self::names`] order.
    ///
    /// Errors with `is_row_skip() == true` mean this row lacks macro
    /// coverage and should be counted and dropped; anything else is fatal.
    pub fn assemble(
        &self,
        row: &PanelRow,
        loan: &LoanOrigination,
    ) -> Result<Vec<f64>, FeatureError> {
        let mut x = Vec::with_capacity(self.names.len());
        let splined = |x: &mut Vec<f64>, value: f64, knots: &[f64]| {
            x.push(value);
            for &knot in knots {
                x.push(pspline(value, knot));
            }
        };
        splined(&mut x, row.loan_age as f64, &self.spec.loan_age_knots);
        splined(&mut x, row.snapshot_mob as f64, &self.spec.snapshot_mob_knots);
        x.push(loan.fico as f64);
        x.push(loan.dti);
        x.push(loan.orig_int_rt);
        splined(&mut x, loan.cltv, &self.spec.cltv_knots);

        let market_rate = self.market.value_at(loan.orig_month).ok_or_else(|| {
            FeatureError::MissingMarketRate {
                series: self.spec.market_rate_series.clone(),
                month: loan.orig_month,
            }
        })?;
        x.push(sato(loan.orig_int_rt, market_rate, self.spec.sato_market_minus_rate));
        x.push(apply_interaction(loan.fico as f64, loan.orig_upb, &self.spec.interaction));

        for (transform, series) in &self.macros {
            x.push(macro_transform(series, transform, row.calendar_month)?);
        }

        let (covid, q1, q3) = indicators(row.calendar_month, self.spec.covid_window);
        x.push(covid);
        x.push(q1);
        x.push(q3);

        debug_assert_eq!(x.len(), self.names.len());
        Ok(x)
    }
}
