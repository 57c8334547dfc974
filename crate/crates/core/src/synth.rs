//! Synthetic portfolio generation.
//!
//! Draws loan originations, macro paths, and month-by-month default
//! outcomes from a known hazard model, then serializes them in exactly the
//! file formats the ingest stage reads. Because the true coefficients are
//! known, fitted models can be checked against ground truth end to end.
//!
//! Generation is deterministic: every loan consumes its own named RNG
//! substream, so output is byte-identical across runs and independent of
//! thread count or loan order.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::features::{FeatureAssembler, FeatureError, FeatureSpec, InteractionSpec};
use crate::hazard::predict_hazard;
use crate::ingest::{Frequency, LoanOrigination, MacroSeries, MacroStore, PerformanceRow};
use crate::month::CalMonth;
use crate::panel::PanelRow;
use crate::rng::substream;
use crate::types::Status;

/// Generation failures.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error("true_beta must hold an intercept plus one coefficient per regressor: expected {expected}, got {got}")]
    BetaLength { expected: usize, got: usize },
    #[error("no macro path generates the market-rate series {series:?}")]
    MissingMarketSeries { series: String },
    #[error("loan {loan_id}: note rate {rate} is not positive; widen the spread bounds or raise the market path")]
    NonPositiveRate { loan_id: String, rate: f64 },
    #[error("{outside} of {total} hazard evaluations fell outside (0, 0.5); the true model is implausible as a monthly default rate")]
    ImplausibleHazards { outside: u64, total: u64 },
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

/// A normal distribution restricted to `[lo, hi]`, sampled by inverse-CDF
/// so one uniform draw yields one sample regardless of how extreme the
/// bounds are.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncatedNormal {
    pub mean: f64,
    pub sd: f64,
    pub lo: f64,
    pub hi: f64,
}

impl TruncatedNormal {
    pub fn new(mean: f64, sd: f64, lo: f64, hi: f64) -> Self {
        TruncatedNormal { mean, sd, lo, hi }
    }

    pub fn validate(&self, what: &str) -> Result<(), SynthError> {
        let finite = [self.mean, self.sd, self.lo, self.hi].iter().all(|v| v.is_finite());
        if !finite || self.sd <= 0.0 || self.lo >= self.hi {
            return Err(SynthError::InvalidSpec(format!(
                "{what}: needs finite parameters, sd > 0, lo < hi (got mean {}, sd {}, bounds [{}, {}])",
                self.mean, self.sd, self.lo, self.hi
            )));
        }
        let (u_lo, u_hi) = self.cdf_bounds();
        let mass = u_hi - u_lo;
        if !mass.is_finite() || mass <= 0.0 {
            return Err(SynthError::InvalidSpec(format!(
                "{what}: bounds [{}, {}] carry no probability mass under N({}, {})",
                self.lo, self.hi, self.mean, self.sd
            )));
        }
        Ok(())
    }

    fn cdf_bounds(&self) -> (f64, f64) {
        let std = Normal::standard();
        (std.cdf((self.lo - self.mean) / self.sd), std.cdf((self.hi - self.mean) / self.sd))
    }

    /// One draw. Consumes exactly one `f64` from the RNG stream.
    pub fn sample(&self, rng: &mut impl rand::Rng) -> f64 {
        let (u_lo, u_hi) = self.cdf_bounds();
        let u = rng.random_range(u_lo..u_hi);
        let x = self.mean + self.sd * Normal::standard().inverse_cdf(u);
        // inverse_cdf can overshoot at the uniform's edges; the bounds are
        // the contract.
        x.clamp(self.lo, self.hi)
    }
}

/// A deterministic macro series shape: linear drift plus a seasonal sine
/// plus Gaussian noise, optionally floored (rates cannot go negative).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroPath {
    pub name: String,
    pub frequency: Frequency,
    pub base: f64,
    /// Added per observation (per month or per quarter).
    pub drift_per_obs: f64,
    pub seasonal_amplitude: f64,
    /// Observations per seasonal cycle.
    pub seasonal_period_obs: u32,
    pub noise_sd: f64,
    pub floor: Option<f64>,
}

impl MacroPath {
    fn validate(&self) -> Result<(), SynthError> {
        if self.name.is_empty() {
            return Err(SynthError::InvalidSpec("macro path with an empty name".to_string()));
        }
        let finite = [self.base, self.drift_per_obs, self.seasonal_amplitude, self.noise_sd]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.noise_sd < 0.0 || self.seasonal_period_obs == 0 {
            return Err(SynthError::InvalidSpec(format!(
                "macro path {}: needs finite parameters, noise_sd >= 0, seasonal period >= 1",
                self.name
            )));
        }
        Ok(())
    }

    /// Materializes the path over `[first, last]` (inclusive, in months).
    /// Quarterly paths start on a quarter boundary at or before `first`.
    fn materialize(&self, first: CalMonth, last: CalMonth, seed: u64) -> MacroSeries {
        let mut rng = substream(seed, "synth.macro", &self.name);
        let (start, step) = match self.frequency {
            Frequency::Monthly => (first, 1),
            Frequency::Quarterly => (first - (first.month() as i32 - 1) % 3, 3),
        };
        let mut observations = Vec::new();
        let mut month = start;
        let mut i = 0u32;
        while month <= last {
            let angle =
                2.0 * std::f64::consts::PI * f64::from(i) / f64::from(self.seasonal_period_obs);
            let noise: f64 = if self.noise_sd > 0.0 {
                self.noise_sd * Normal::standard().inverse_cdf(rng.random_range(0.0..1.0))
            } else {
                0.0
            };
            let mut value = self.base
                + self.drift_per_obs * f64::from(i)
                + self.seasonal_amplitude * angle.sin()
                + noise;
            if let Some(floor) = self.floor {
                value = value.max(floor);
            }
            observations.push((month, value));
            month = month + step;
            i += 1;
        }
        MacroSeries::new(self.name.clone(), self.frequency, observations)
            .expect("generated observations are contiguous and finite")
    }
}

/// Everything needed to draw a portfolio from a known hazard model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorSpec {
    pub n_loans: u32,
    /// Origination months are uniform over `[orig_start, orig_end]`.
    pub orig_start: CalMonth,
    pub orig_end: CalMonth,
    /// Follow-up window: histories are censored here if no default occurs.
    pub horizon_months: u32,
    pub fico: TruncatedNormal,
    pub dti: TruncatedNormal,
    pub cltv: TruncatedNormal,
    pub orig_upb: TruncatedNormal,
    /// Note-rate spread over the market-rate path at origination; the
    /// spread is exactly what the SATO regressor later recovers.
    pub rate_spread: TruncatedNormal,
    /// Chance that a surviving month shows a 30-day blip (delinquency
    /// bucket 1), which is still a good outcome.
    pub delinquency_blip_rate: f64,
    pub macro_paths: Vec<MacroPath>,
    /// The true feature layout. Its interaction multipliers must not all be
    /// equal, or the interaction column duplicates FICO and the design is
    /// singular.
    pub feature_spec: FeatureSpec,
    /// Intercept first, then one coefficient per
    /// [`FeatureSpec::regressor_names`] entry.
    pub true_beta: Vec<f64>,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        let feature_spec = FeatureSpec {
            interaction: InteractionSpec {
                upb_band_edges: vec![160_000.0, 238_000.0, 350_000.0],
                band_multipliers: vec![1.15, 1.05, 0.95, 0.85],
                average_slope: 1.0,
            },
            ..FeatureSpec::default()
        };
        // Keyed to the default regressor order. The spline terms are zero
        // and the two age terms are equal, so the hazard depends on loan
        // age and calendar time only — the panel model is then correctly
        // specified no matter which snapshot a row comes from.
        let true_beta = vec![
            -1.9,    // intercept
            0.015,   // loan_age
            0.0,     // loan_age_pspline1
            0.0,     // loan_age_pspline2
            0.015,   // snapshot_mob
            0.0,     // snapshot_mob_pspline1
            0.0,     // snapshot_mob_pspline2
            -0.008,  // fico
            0.015,   // dti
            0.25,    // orig_int_rt
            0.012,   // cltv
            0.015,   // cltv_pspline1
            0.35,    // sato
            -0.0012, // fico_orig_upb
            1.5,     // delinquency-rate q/q change
            0.06,    // unemployment, 1-month lag
            0.8,     // covid_index
            -0.12,   // quarter1
            0.10,    // quarter3
        ];
        GeneratorSpec {
            n_loans: 2_000,
            orig_start: CalMonth::new(2018, 1),
            orig_end: CalMonth::new(2021, 6),
            horizon_months: 36,
            fico: TruncatedNormal::new(740.0, 50.0, 580.0, 850.0),
            dti: TruncatedNormal::new(33.0, 9.0, 5.0, 65.0),
            cltv: TruncatedNormal::new(72.0, 15.0, 20.0, 110.0),
            orig_upb: TruncatedNormal::new(280_000.0, 120_000.0, 40_000.0, 900_000.0),
            rate_spread: TruncatedNormal::new(0.25, 0.35, -0.75, 1.75),
            delinquency_blip_rate: 0.01,
            macro_paths: vec![
                MacroPath {
                    name: "MORTGAGE30US".to_string(),
                    frequency: Frequency::Monthly,
                    base: 4.0,
                    drift_per_obs: 0.0,
                    seasonal_amplitude: 0.8,
                    seasonal_period_obs: 48,
                    noise_sd: 0.05,
                    floor: Some(0.5),
                },
                MacroPath {
                    name: "RCMFLBACTDPDPCT90P".to_string(),
                    frequency: Frequency::Quarterly,
                    base: 1.1,
                    drift_per_obs: 0.005,
                    seasonal_amplitude: 0.25,
                    seasonal_period_obs: 16,
                    noise_sd: 0.02,
                    floor: Some(0.05),
                },
                MacroPath {
                    name: "UNRATENSA".to_string(),
                    frequency: Frequency::Monthly,
                    base: 5.0,
                    drift_per_obs: 0.0,
                    seasonal_amplitude: 1.2,
                    seasonal_period_obs: 60,
                    noise_sd: 0.08,
                    floor: Some(2.5),
                },
            ],
            feature_spec,
            true_beta,
        }
    }
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_loans == 0 {
            return Err(SynthError::InvalidSpec("n_loans must be at least 1".to_string()));
        }
        if self.orig_start > self.orig_end {
            return Err(SynthError::InvalidSpec(format!(
                "origination window [{}, {}] is empty",
                self.orig_start, self.orig_end
            )));
        }
        if self.horizon_months == 0 {
            return Err(SynthError::InvalidSpec("horizon_months must be at least 1".to_string()));
        }
        if !(0.0..1.0).contains(&self.delinquency_blip_rate) {
            return Err(SynthError::InvalidSpec(format!(
                "delinquency_blip_rate {} outside [0, 1)",
                self.delinquency_blip_rate
            )));
        }
        self.fico.validate("fico")?;
        if self.fico.lo < 300.0 || self.fico.hi > 850.0 {
            return Err(SynthError::InvalidSpec(format!(
                "fico bounds [{}, {}] must stay within the 300-850 score range",
                self.fico.lo, self.fico.hi
            )));
        }
        self.dti.validate("dti")?;
        self.cltv.validate("cltv")?;
        if self.cltv.lo <= 0.0 {
            return Err(SynthError::InvalidSpec("cltv must be positive".to_string()));
        }
        self.orig_upb.validate("orig_upb")?;
        if self.orig_upb.lo <= 0.0 {
            return Err(SynthError::InvalidSpec("orig_upb must be positive".to_string()));
        }
        self.rate_spread.validate("rate_spread")?;
        for path in &self.macro_paths {
            path.validate()?;
        }
        let mut names: Vec<&str> = self.macro_paths.iter().map(|p| p.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(SynthError::InvalidSpec("duplicate macro path names".to_string()));
        }
        self.feature_spec.validate()?;
        let expected = self.feature_spec.regressor_names().len() + 1;
        if self.true_beta.len() != expected {
            return Err(SynthError::BetaLength { expected, got: self.true_beta.len() });
        }
        if self.true_beta.iter().any(|b| !b.is_finite()) {
            return Err(SynthError::InvalidSpec("true_beta holds a non-finite value".to_string()));
        }
        Ok(())
    }

    /// How far back the macro paths must reach so every transform in the
    /// feature spec can evaluate at the earliest origination month.
    fn macro_coverage(&self) -> (CalMonth, CalMonth) {
        let max_lag =
            self.feature_spec.macro_transforms.iter().map(|t| t.lag_months).max().unwrap_or(0);
        // Year-over-year bases reach 12 months behind the (lag-shifted)
        // evaluation point; pad a quarter beyond for step-held series.
        let first = self.orig_start - (max_lag as i32 + 12 + 3);
        let last = self.orig_end + self.horizon_months as i32 + 3;
        (first, last)
    }
}

/// One generated portfolio, plus the ground truth that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub loans: Vec<LoanOrigination>,
    /// Monthly rows, grouped by loan in origination order, months ascending;
    /// ends at the default month or at the horizon.
    pub performance: Vec<PerformanceRow>,
    pub macros: Vec<MacroSeries>,
    /// Per loan (same order as `loans`): the true monthly hazard for every
    /// month of the full horizon, whether or not the loan survived to it.
    pub true_hazards: Vec<Vec<f64>>,
    /// Loans whose history ends in default.
    pub bad_loans: usize,
}

struct LoanDraw {
    loan: LoanOrigination,
    performance: Vec<PerformanceRow>,
    hazards: Vec<f64>,
    bad: bool,
    implausible_hazards: u64,
}

/// Draws a full portfolio. Byte-reproducible for a given `(spec, seed)`:
/// every loan and macro path consumes its own named substream, so results
/// do not depend on thread count.
pub fn generate(spec: &GeneratorSpec, seed: u64) -> Result<SynthOutput, SynthError> {
    spec.validate()?;

    let (first, last) = spec.macro_coverage();
    let macros: Vec<MacroSeries> =
        spec.macro_paths.iter().map(|p| p.materialize(first, last, seed)).collect();
    let mut store = MacroStore::new();
    for series in &macros {
        store.insert(series.clone());
    }
    let market = store
        .get(&spec.feature_spec.market_rate_series)
        .ok_or_else(|| SynthError::MissingMarketSeries {
            series: spec.feature_spec.market_rate_series.clone(),
        })?
        .clone();
    let assembler = FeatureAssembler::new(spec.feature_spec.clone(), &store)?;

    let draws: Vec<LoanDraw> = (0..spec.n_loans)
        .into_par_iter()
        .map(|i| draw_loan(spec, seed, i, &market, &assembler))
        .collect::<Result<_, _>>()?;

    let total_hazards = draws.iter().map(|d| d.hazards.len() as u64).sum::<u64>();
    let outside = draws.iter().map(|d| d.implausible_hazards).sum::<u64>();
    if outside as f64 > 0.01 * total_hazards as f64 {
        return Err(SynthError::ImplausibleHazards { outside, total: total_hazards });
    }

    let mut output = SynthOutput {
        loans: Vec::with_capacity(draws.len()),
        performance: Vec::new(),
        macros,
        true_hazards: Vec::with_capacity(draws.len()),
        bad_loans: 0,
    };
    for draw in draws {
        output.loans.push(draw.loan);
        output.performance.extend(draw.performance);
        output.true_hazards.push(draw.hazards);
        output.bad_loans += usize::from(draw.bad);
    }
    Ok(output)
}

fn draw_loan(
    spec: &GeneratorSpec,
    seed: u64,
    index: u32,
    market: &MacroSeries,
    assembler: &FeatureAssembler,
) -> Result<LoanDraw, SynthError> {
    let loan_id = format!("L{:07}", index + 1);
    let mut rng = substream(seed, "synth.loan", &loan_id);

    // Draw order is part of the reproducibility contract: origination
    // month, fico, dti, cltv, upb, spread, then one uniform per surviving
    // month (plus one for the terminal severity or the delinquency blip).
    let span = spec.orig_end - spec.orig_start;
    let orig_month = spec.orig_start + rng.random_range(0..=span);
    let fico = spec.fico.sample(&mut rng).round() as i32;
    let dti = spec.dti.sample(&mut rng);
    let cltv = spec.cltv.sample(&mut rng);
    let orig_upb = spec.orig_upb.sample(&mut rng);
    let spread = spec.rate_spread.sample(&mut rng);
    let market_rate =
        market.value_at(orig_month).expect("macro coverage starts before the origination window");
    let orig_int_rt = market_rate + spread;
    if orig_int_rt <= 0.0 {
        return Err(SynthError::NonPositiveRate { loan_id, rate: orig_int_rt });
    }
    let loan = LoanOrigination { loan_id, orig_month, fico, dti, cltv, orig_upb, orig_int_rt };

    // The true hazard trajectory: the loan's own timeline, so each month is
    // its first (and only) observation of itself — age runs with the month
    // and the snapshot dimension is zero.
    let mut hazards = Vec::with_capacity(spec.horizon_months as usize);
    let mut implausible = 0u64;
    for t in 1..=spec.horizon_months {
        let row = PanelRow {
            loan_id: loan.loan_id.as_str().into(),
            snapshot_month: orig_month,
            calendar_month: orig_month + (t as i32 - 1),
            loan_age: t - 1,
            snapshot_mob: 0,
            status: Status::Good,
            weight: 1.0,
        };
        let features = assembler.assemble(&row, &loan)?;
        let hazard = predict_hazard(&features, &spec.true_beta);
        if !(hazard > 0.0 && hazard < 0.5) {
            implausible += 1;
        }
        hazards.push(hazard);
    }

    let mut performance = Vec::new();
    let mut bad = false;
    for (t, &hazard) in (1u32..).zip(&hazards) {
        let month = orig_month + (t as i32 - 1);
        if rng.random::<f64>() < hazard {
            // Default: severity draw picks 60 or 90 days past due.
            let dlq_status = if rng.random::<f64>() < 0.3 { 3 } else { 2 };
            performance.push(PerformanceRow { loan_id: loan.loan_id.clone(), month, dlq_status });
            bad = true;
            break;
        }
        let dlq_status = u32::from(rng.random::<f64>() < spec.delinquency_blip_rate);
        performance.push(PerformanceRow { loan_id: loan.loan_id.clone(), month, dlq_status });
    }

    Ok(LoanDraw { loan, performance, hazards, bad, implausible_hazards: implausible })
}

// ---------------------------------------------------------------------------
// File serialization (the exact shapes the ingest parsers read)
// ---------------------------------------------------------------------------

/// Pipe-delimited origination file in the default column order, no header.
pub fn loan_file(loans: &[LoanOrigination]) -> String {
    let mut out = String::new();
    for loan in loans {
        out.push_str(&format!(
            "{}|{}|{}|{}|{}|{}|{}\n",
            loan.loan_id,
            loan.orig_month,
            loan.fico,
            loan.dti,
            loan.cltv,
            loan.orig_upb,
            loan.orig_int_rt
        ));
    }
    out
}

/// Pipe-delimited performance file (`loan_id|month|dlq_status`), no header.
pub fn performance_file(rows: &[PerformanceRow]) -> String {
    let mut out = String::new();
    for row in rows {
        out.push_str(&format!("{}|{}|{}\n", row.loan_id, row.month, row.dlq_status));
    }
    out
}

/// `month,value` CSV with a header, one file per series.
pub fn macro_csv(series: &MacroSeries) -> String {
    let mut out = String::from("month,value\n");
    for (month, value) in series.observations() {
        out.push_str(&format!("{month},{value}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{
        parse_loans, parse_performance, validate_and_label, LabelOptions, LoanFormat, PerfFormat,
    };
    use std::collections::BTreeSet;
    use std::io::Write;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut file = tempfile::NamedTempFile::new().expect("temp file");
        file.write_all(content.as_bytes()).expect("write");
        file
    }

    fn intercept_only_spec(hazard: f64, n_loans: u32) -> GeneratorSpec {
        let mut spec = GeneratorSpec { n_loans, ..GeneratorSpec::default() };
        spec.true_beta = vec![0.0; spec.true_beta.len()];
        spec.true_beta[0] = (hazard / (1.0 - hazard)).ln();
        spec
    }

    #[test]
    fn default_spec_validates() {
        GeneratorSpec::default().validate().unwrap();
    }

    #[test]
    fn generated_files_round_trip_ingest_without_losses() {
        let spec = GeneratorSpec { n_loans: 300, ..GeneratorSpec::default() };
        let output = generate(&spec, 11).unwrap();
        assert_eq!(output.loans.len(), 300);

        let loan_temp = write_temp(&loan_file(&output.loans));
        let parsed = parse_loans(loan_temp.path(), &LoanFormat::default()).unwrap();
        assert!(parsed.rejections.is_empty(), "{:?}", parsed.rejections);
        assert_eq!(parsed.loans, output.loans, "originations survive the file round trip");

        let perf_temp = write_temp(&performance_file(&output.performance));
        let parsed_perf = parse_performance(perf_temp.path(), &PerfFormat::default()).unwrap();
        assert!(parsed_perf.rejections.is_empty());
        assert_eq!(parsed_perf.rows, output.performance);

        let outcome = validate_and_label(&parsed.loans, &parsed_perf.rows, LabelOptions::default());
        assert!(outcome.exclusions.is_empty(), "{:?}", outcome.exclusions);
        assert_eq!(outcome.histories.len(), 300);
        let bads = outcome.histories.iter().filter(|h| h.terminal_status() == Status::Bad).count();
        assert_eq!(bads, output.bad_loans, "labeling agrees with the generator's count");
    }

    #[test]
    fn macro_files_round_trip_ingest() {
        let spec = GeneratorSpec { n_loans: 1, ..GeneratorSpec::default() };
        let output = generate(&spec, 3).unwrap();
        for series in &output.macros {
            let temp = write_temp(&macro_csv(series));
            let reloaded =
                crate::ingest::load_macro(temp.path(), series.name(), series.native_frequency())
                    .unwrap();
            assert_eq!(&reloaded, series);
        }
    }

    #[test]
    fn generation_is_byte_reproducible_per_seed() {
        let spec = GeneratorSpec { n_loans: 60, ..GeneratorSpec::default() };
        let a = generate(&spec, 5).unwrap();
        let b = generate(&spec, 5).unwrap();
        assert_eq!(loan_file(&a.loans), loan_file(&b.loans));
        assert_eq!(performance_file(&a.performance), performance_file(&b.performance));
        for (sa, sb) in a.macros.iter().zip(&b.macros) {
            assert_eq!(macro_csv(sa), macro_csv(sb));
        }
        let c = generate(&spec, 6).unwrap();
        assert_ne!(loan_file(&a.loans), loan_file(&c.loans), "seed must matter");
    }

    #[test]
    fn generation_does_not_depend_on_thread_count() {
        let spec = GeneratorSpec { n_loans: 80, ..GeneratorSpec::default() };
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| generate(&spec, 9).unwrap());
        let several = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| generate(&spec, 9).unwrap());
        assert_eq!(single, several);
    }

    #[test]
    fn intercept_only_hazard_is_exactly_flat() {
        let spec = intercept_only_spec(0.01, 20);
        let output = generate(&spec, 2).unwrap();
        for hazards in &output.true_hazards {
            assert_eq!(hazards.len(), 36);
            for &h in hazards {
                assert!((h - 0.01).abs() < 1e-13, "flat model must give a flat hazard, got {h}");
            }
        }
    }

    #[test]
    fn intercept_only_bad_fraction_matches_the_survival_formula() {
        let hazard = 0.01f64;
        let n = 4_000u32;
        let spec = intercept_only_spec(hazard, n);
        let output = generate(&spec, 17).unwrap();
        let expected = 1.0 - (1.0 - hazard).powi(36);
        let observed = output.bad_loans as f64 / f64::from(n);
        let sigma = (expected * (1.0 - expected) / f64::from(n)).sqrt();
        assert!(
            (observed - expected).abs() < 3.0 * sigma,
            "bad fraction {observed} vs expected {expected} (3σ = {})",
            3.0 * sigma
        );
    }

    #[test]
    fn histories_end_at_first_default_or_horizon() {
        let spec = GeneratorSpec { n_loans: 400, ..GeneratorSpec::default() };
        let output = generate(&spec, 23).unwrap();
        let mut by_loan: std::collections::BTreeMap<&str, Vec<&PerformanceRow>> =
            Default::default();
        for row in &output.performance {
            by_loan.entry(row.loan_id.as_str()).or_default().push(row);
        }
        assert_eq!(by_loan.len(), 400, "every loan has at least one month");
        let mut saw_bad = false;
        for (loan, rows) in by_loan {
            for pair in rows.windows(2) {
                assert_eq!(pair[1].month - pair[0].month, 1, "{loan}: months are contiguous");
            }
            let (last, earlier) = rows.split_last().unwrap();
            assert!(
                earlier.iter().all(|r| r.dlq_status < 2),
                "{loan}: delinquency bucket 2+ may appear only at the end"
            );
            if last.dlq_status >= 2 {
                saw_bad = true;
                assert!(rows.len() <= 36);
            } else {
                assert_eq!(rows.len(), 36, "{loan}: survivors are censored at the horizon");
            }
        }
        assert!(saw_bad, "a 400-loan portfolio should contain defaults");
        assert!(output.bad_loans > 0);
    }

    #[test]
    fn originations_spread_across_at_least_a_year_of_months() {
        let spec = GeneratorSpec::default();
        let output = generate(&spec, 31).unwrap();
        let months: BTreeSet<CalMonth> = output.loans.iter().map(|l| l.orig_month).collect();
        assert!(
            months.len() >= 12,
            "SATO needs rate variation across originations, got {} distinct months",
            months.len()
        );
        assert!(months.iter().all(|m| (spec.orig_start..=spec.orig_end).contains(m)));
    }

    #[test]
    fn attributes_respect_their_bounds() {
        let spec = GeneratorSpec { n_loans: 500, ..GeneratorSpec::default() };
        let output = generate(&spec, 41).unwrap();
        for loan in &output.loans {
            assert!((580..=850).contains(&loan.fico));
            assert!((5.0..=65.0).contains(&loan.dti));
            assert!((20.0..=110.0).contains(&loan.cltv));
            assert!((40_000.0..=900_000.0).contains(&loan.orig_upb));
            assert!(loan.orig_int_rt > 0.0);
        }
    }

    #[test]
    fn truncated_normal_concentrates_near_its_mean() {
        let dist = TruncatedNormal::new(10.0, 2.0, 0.0, 20.0);
        dist.validate("x").unwrap();
        let mut rng = substream(1, "synth.test", "tnorm");
        let n = 20_000;
        let mean = (0..n).map(|_| dist.sample(&mut rng)).sum::<f64>() / f64::from(n);
        // Symmetric bounds leave the mean at 10; 3σ of the sample mean.
        assert!((mean - 10.0).abs() < 3.0 * 2.0 / f64::from(n).sqrt());
    }

    #[test]
    fn truncated_normal_rejects_empty_or_unreachable_bounds() {
        assert!(TruncatedNormal::new(0.0, 1.0, 5.0, 5.0).validate("x").is_err());
        assert!(TruncatedNormal::new(0.0, 0.0, -1.0, 1.0).validate("x").is_err());
        assert!(
            TruncatedNormal::new(0.0, 1.0, 500.0, 501.0).validate("x").is_err(),
            "bounds carrying no mass cannot be sampled"
        );
    }

    #[test]
    fn macro_paths_follow_their_frequency_grid() {
        let spec = GeneratorSpec { n_loans: 1, ..GeneratorSpec::default() };
        let output = generate(&spec, 7).unwrap();
        for series in &output.macros {
            let step = match series.native_frequency() {
                Frequency::Monthly => 1,
                Frequency::Quarterly => 3,
            };
            for pair in series.observations().windows(2) {
                assert_eq!(pair[1].0 - pair[0].0, step);
            }
            if series.native_frequency() == Frequency::Quarterly {
                assert!(matches!(series.first_month().month(), 1 | 4 | 7 | 10));
            }
        }
    }

    #[test]
    fn macro_coverage_reaches_every_transform_base() {
        // A 6-month lag on a year-over-year difference needs values 18
        // months before the first origination.
        let mut spec = GeneratorSpec { n_loans: 5, ..GeneratorSpec::default() };
        spec.feature_spec.macro_transforms = vec![crate::features::MacroTransformSpec {
            series: "UNRATENSA".to_string(),
            transform: crate::features::Transform::YoyDiff,
            lag_months: 6,
        }];
        spec.true_beta = vec![0.0; spec.feature_spec.regressor_names().len() + 1];
        spec.true_beta[0] = -5.0;
        generate(&spec, 13).unwrap();
    }

    #[test]
    fn hazards_outside_a_plausible_monthly_range_are_refused() {
        let mut spec = GeneratorSpec { n_loans: 30, ..GeneratorSpec::default() };
        spec.true_beta = vec![0.0; spec.true_beta.len()];
        spec.true_beta[0] = 1.0; // hazard ≈ 0.73 every month
        match generate(&spec, 1) {
            Err(SynthError::ImplausibleHazards { outside, total }) => {
                assert_eq!(outside, total, "every evaluation is out of range");
            }
            other => panic!("expected ImplausibleHazards, got {other:?}"),
        }
    }

    #[test]
    fn beta_length_mismatch_is_reported_with_both_sizes() {
        let mut spec = GeneratorSpec::default();
        spec.true_beta.pop();
        match spec.validate() {
            Err(SynthError::BetaLength { expected, got }) => {
                assert_eq!(expected, got + 1);
            }
            other => panic!("expected BetaLength, got {other:?}"),
        }
    }

    #[test]
    fn generator_spec_round_trips_through_serde() {
        let spec = GeneratorSpec::default();
        let json = serde_json::to_string(&spec).unwrap();
        let back: GeneratorSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
    }
}
