//! The pipeline stages. Each stage reads its predecessors' artifacts, writes
//! its own, and reports integer tallies for the manifest.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use hazardcard_core::eval::{
    self, BandRow, ClassificationMetrics, ConfusionMatrix, ScoreScale, ScoredRow,
};
use hazardcard_core::features::{
    bivariate_logodds_table, fit_interaction, FeatureAssembler, InteractionObs,
};
use hazardcard_core::hazard::{
    self, predict_hazard, wald_report, weighted_correlations, CoefficientTable, DesignRow,
};
use hazardcard_core::ingest::{
    self, load_macro, monthly_counts, LoanHistory, LoanOrigination, MacroStore, MonthlyCounts,
    ParseRejection,
};
use hazardcard_core::panel::{
    backward_weighted_sample, stratified_split, SampleOptions, PANEL_CSV_HEADER,
};
use hazardcard_core::synth;
use hazardcard_core::{FeatureSpec, PanelRow, Split, SplitAssignment, Status};

use crate::artifacts::{
    self, csv_field, design_header, design_line, parse_counts, parse_design, parse_histories,
    parse_loan_scores, parse_panel, parse_split, read_artifact, write_artifact, DesignData, Layout,
    LoanScore,
};
use crate::config::{InteractionMode, PipelineConfig, ScaleMode};

/// A pipeline stage, in no particular order; `all` runs them in dependency
/// order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Synth,
    Ingest,
    Split,
    Counts,
    Sample,
    Features,
    Fit,
    Backtest,
    Score,
    Cutoff,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Ingest => "ingest",
            Stage::Split => "split",
            Stage::Counts => "counts",
            Stage::Sample => "sample",
            Stage::Features => "features",
            Stage::Fit => "fit",
            Stage::Backtest => "backtest",
            Stage::Score => "score",
            Stage::Cutoff => "cutoff",
            Stage::Report => "report",
        }
    }
}

/// Integer tallies a stage reports into the manifest.
pub type Tallies = BTreeMap<String, u64>;

fn tally<const N: usize>(entries: [(&str, u64); N]) -> Tallies {
    entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// Runs one stage against the given configuration and layout.
pub fn run(stage: Stage, config: &PipelineConfig, layout: &Layout) -> Result<Tallies> {
    match stage {
        Stage::Synth => run_synth(config, layout),
        Stage::Ingest => run_ingest(config, layout),
        Stage::Split => run_split(config, layout),
        Stage::Counts => run_counts(config, layout),
        Stage::Sample => run_sample(config, layout),
        Stage::Features => run_features(config, layout),
        Stage::Fit => run_fit(config, layout),
        Stage::Backtest => run_backtest(config, layout),
        Stage::Score => run_score(config, layout),
        Stage::Cutoff => run_cutoff(config, layout),
        Stage::Report => run_report(config, layout),
    }
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

fn run_synth(config: &PipelineConfig, layout: &Layout) -> Result<Tallies> {
    let output = synth::generate(&config.synth, config.seed).context("generating the portfolio")?;
    write_artifact(&layout.synth_loans(), &synth::loan_file(&output.loans))?;
    write_artifact(&layout.synth_performance(), &synth::performance_file(&output.performance))?;
    for series in &output.macros {
        write_artifact(&layout.synth_macro(series.name()), &synth::macro_csv(series))?;
    }
    Ok(tally([
        ("loans", output.loans.len() as u64),
        ("performance_rows", output.performance.len() as u64),
        ("macro_series", output.macros.len() as u64),
        ("bad_loans", output.bad_loans as u64),
    ]))
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

/// Errors on a missing input file: synth-supplied inputs name the stage to
/// run; explicitly configured paths are the user's to fix.
fn require_input(path: &Path, synth_supplied: bool, role: &str) -> Result<()> {
    if path.exists() {
        return Ok(());
    }
    if synth_supplied {
        bail!("missing {}: run synth first", path.display());
    }
    bail!("configured {role} {} does not exist", path.display());
}

fn rejections_csv(loans: &[ParseRejection], performance: &[ParseRejection]) -> String {
    let mut out = String::from("source,line,reason\n");
    for (source, rejections) in [("loans", loans), ("performance", performance)] {
        for r in rejections {
            out.push_str(&format!("{source},{},{}\n", r.line, csv_field(&r.reason)));
        }
    }
    out
}

fn run_ingest(config: &PipelineConfig, layout: &Layout) -> Result<Tallies> {
    let loan_path = config.loan_file();
    let perf_path = config.performance_file();
    require_input(&loan_path, config.paths.loan_file.is_none(), "loan file")?;
    require_input(&perf_path, config.paths.performance_file.is_none(), "performance file")?;

    let loans = ingest::parse_loans(&loan_path, &config.loan_format)
        .with_context(|| format!("parsing {}", loan_path.display()))?;
    let perf = ingest::parse_performance(&perf_path, &config.perf_format)
        .with_context(|| format!("parsing {}", perf_path.display()))?;
    let mut outcome = ingest::validate_and_label(&loans.loans, &perf.rows, config.labeling);
    outcome.histories.sort_by(|a, b| a.loan_id().cmp(b.loan_id()));
    outcome.exclusions.sort_by(|a, b| a.loan_id.cmp(&b.loan_id));

    write_artifact(&layout.histories(), &artifacts::histories_csv(&outcome.histories))?;
    write_artifact(&layout.rejections(), &rejections_csv(&loans.rejections, &perf.rejections))?;
    let mut exclusions = String::from("loan_id,reason\n");
    for e in &outcome.exclusions {
        exclusions.push_str(&format!("{},{}\n", e.loan_id, csv_field(&e.reason.to_string())));
    }
    write_artifact(&layout.exclusions(), &exclusions)?;

    let bad = outcome.histories.iter().filter(|h| h.terminal_status().is_bad()).count();
    Ok(tally([
        ("loans_parsed", loans.loans.len() as u64),
        ("loan_rejections", loans.rejections.len() as u64),
        ("performance_rows", perf.rows.len() as u64),
        ("performance_rejections", perf.rejections.len() as u64),
        ("histories", outcome.histories.len() as u64),
        ("bad_histories", bad as u64),
        ("exclusions", outcome.exclusions.len() as u64),
    ]))
}

// ---------------------------------------------------------------------------
// split
// ---------------------------------------------------------------------------

fn read_histories(layout: &Layout) -> Result<Vec<LoanHistory>> {
    let path = layout.histories();
    parse_histories(&read_artifact(&path, "ingest")?, &path)
}

fn run_split(config: &PipelineConfig, layout: &Layout) -> Result<Tallies> {
    let histories = read_histories(layout)?;
    let assignment = stratified_split(&histories, config.split.train_fraction, config.seed);
    let mut out = String::from(artifacts::SPLIT_HEADER);
    out.push('\n');
    for (loan_id, split) in assignment.iter() {
        out.push_str(&format!("{loan_id},{split}\n"));
    }
    write_artifact(&layout.split_file(), &out)?;
    Ok(tally([
        ("train_loans", assignment.count_of(Split::Train) as u64),
        ("test_loans", assignment.count_of(Split::Test) as u64),
    ]))
}

// ---------------------------------------------------------------------------
// counts
// ---------------------------------------------------------------------------

fn read_split(config: &PipelineConfig, layout: &Layout) -> Result<SplitAssignment> {
    let path = layout.split_file();
    let pairs = parse_split(&read_artifact(&path, "split")?, &path)?;
    Ok(SplitAssignment::from_parts(config.split.train_fraction, pairs))
}

/// Partitions histories into (train, test) per the split artifact; a history
/// missing from the artifact means the artifacts are out of sync.
fn partition(
    histories: Vec<LoanHistory>,
    assignment: &SplitAssignment,
) -> Result<(Vec<LoanHistory>, Vec<LoanHistory>)> {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for history in histories {
        match assignment.split_of(history.loan_id()) {
            Some(Split::Train) => train.push(history),
            Some(Split::Test) => test.push(history),
            None => bail!(
                "loan {} is not in the split artifact; rerun split after ingest",
                history.loan_id()
            ),
        }
    }
    Ok((train, test))
}

fn run_counts(config: &PipelineConfig, layout: &Layout) -> Result<Tallies> {
    let histories = read_histories(layout)?;
    let assignment = read_split(config, layout)?;
    let overall = monthly_counts(&histories);
    let (train, test) = partition(histories, &assignment)?;
    let train_counts = monthly_counts(&train);
    let test_counts = monthly_counts(&test);
    write_artifact(&layout.counts_overall(), &artifacts::counts_csv(&overall))?;
    write_artifact(&layout.counts(Split::Train), &artifacts::counts_csv(&train_counts))?;
    write_artifact(&layout.counts(Split::Test), &artifacts::counts_csv(&test_counts))?;
    Ok(tally([
        ("months", overall.iter().count() as u64),
        ("observations", overall.total_observations()),
        ("train_observations", train_counts.total_observations()),
        ("test_observations", test_counts.total_observations()),
    ]))
}

// ---------------------------------------------------------------------------
// sample
// ---------------------------------------------------------------------------

fn read_counts(layout: &Layout, split: Split) -> Result<MonthlyCounts> {
    let path = layout.counts(split);
    parse_counts(&read_artifact(&path, "counts")?, &path)
}

fn run_sample(config: &PipelineConfig, layout: &Layout) -> Result<Tallies> {
    let histories = read_histories(layout)?;
    let assignment = read_split(config, layout)?;
    let (train, test) = partition(histories, &assignment)?;
    let options = SampleOptions {
        seed: config.seed,
        mob_offset: config.sampling.mob_offset,
        unit: config.sampling.unit,
    };

    let mut tallies = Tallies::new();
    for (split, split_histories) in [(Split::Train, train), (Split::Test, test)] {
        let counts = read_counts(layout, split)?;
        let rows =
            backward_weighted_sample(&split_histories, &counts, &config.sampling.rates, options)
                .with_context(|| format!("sampling the {split} panel"))?;
        let mut out = String::from(PANEL_CSV_HEADER);
        out.push('\n');
        for row in &rows {
            out.push_str(&row.to_csv_line());
            out.push('\n');
        }
        write_artifact(&layout.panel(split), &out)?;
        tallies.insert(format!("panel_{split}_rows"), rows.len() as u64);
    }
    Ok(tallies)
}

// ---------------------------------------------------------------------------
// features
// ---------------------------------------------------------------------------

fn load_macro_store(config: &PipelineConfig) -> Result<MacroStore> {
    let dir = config.macro_dir();
    let synth_supplied = config.paths.macro_dir.is_none();
    let mut store = MacroStore::new();
    for (name, &frequency) in &config.macros {
        let path = dir.join(format!("{name}.csv"));
        require_input(&path, synth_supplied, "macro series file")?;
        let series = load_macro(&path, name, frequency)
            .with_context(|| format!("loading macro series {name}"))?;
        store.insert(series);
    }
    Ok(store)
}

fn read_panel(layout: &Layout, split: Split) -> Result<Vec<PanelRow>> {
    let path = layout.panel(split);
    parse_panel(&read_artifact(&path, "sample")?, &path)
}

/// Looks up each panel row's origination record.
fn originations_by_id(histories: &[LoanHistory]) -> BTreeMap<String, LoanOrigination> {
    histories.iter().map(|h| (h.loan_id().to_string(), h.origination().clone())).collect()
}

fn origination_of<'a>(
    originations: &'a BTreeMap<String, LoanOrigination>,
    loan_id: &str,
) -> Result<&'a LoanOrigination> {
    originations.get(loan_id).ok_or_else(|| {
        anyhow!("panel row references loan {loan_id}, which ingest did not produce; rerun sample")
    })
}

fn bivariate_csv(rows: &[(f64, Status, f64)], n_bins: usize) -> Result<String> {
    let bins = bivariate_logodds_table(rows, n_bins)?;
    let mut out = String::from("lo,hi,weight,bad_weight,bad_rate,log_odds\n");
    for bin in bins {
        let log_odds = bin.log_odds.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            bin.lo, bin.hi, bin.weight, bin.bad_weight, bin.bad_rate, log_odds
        ));
    }
    Ok(out)
}

fn collinearity_csv(names: &[String], rows: &[DesignRow]) -> String {
    let matrix = weighted_correlations(rows);
    let mut out = String::from("variable");
    for name in names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (name, row) in names.iter().zip(&matrix) {
        out.push_str(name);
        for value in row {
            out.push_str(&format!(",{value}"));
        }
        out.push('\n');
    }
    out
}

fn run_features(config: &PipelineConfig, layout: &Layout) -> Result<Tallies> {
    let histories = read_histories(layout)?;
    let originations = originations_by_id(&histories);
    let panel_train = read_panel(layout, Split::Train)?;
    let panel_test = read_panel(layout, Split::Test)?;
    let store = load_macro_store(config)?;

    let interaction = match config.features.interaction.mode {
        InteractionMode::Fixed => {
            config.features.interaction.spec.clone().expect("validated when mode is fixed")
        }
        InteractionMode::Fit => {
            let obs = panel_train
                .iter()
                .map(|row| {
                    let orig = origination_of(&originations, &row.loan_id)?;
                    Ok(InteractionObs {
                        fico: f64::from(orig.fico),
                        orig_upb: orig.orig_upb,
                        status: row.status,
                        weight: row.weight,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            fit_interaction(
                &obs,
                config.features.interaction.n_fico_groups,
                config.features.interaction.n_upb_groups,
            )
            .context("calibrating the balance interaction on the train panel")?
        }
    };
    let spec = config.features.feature_spec(interaction);
    let assembler = FeatureAssembler::new(spec, &store).context("resolving feature inputs")?;
    let json = serde_json::to_string_pretty(assembler.spec()).expect("feature spec serializes");
    write_artifact(&layout.feature_spec(), &(json + "\n"))?;
    let mut tallies = Tallies::new();
    tallies.insert("regressors".to_string(), assembler.names().len() as u64);

    let mut train_rows: Vec<DesignRow> = Vec::new();
    for (split, panel) in [(Split::Train, &panel_train), (Split::Test, &panel_test)] {
        // Row-skip failures (a month outside macro coverage) drop the row;
        // anything else aborts the stage.
        let assembled = panel
            .par_iter()
            .map(|row| {
                let orig = origination_of(&originations, &row.loan_id)?;
                match assembler.assemble(row, orig) {
                    Ok(features) => {
                        Ok(Some(DesignRow { features, status: row.status, weight: row.weight }))
                    }
                    Err(e) if e.is_row_skip() => Ok(None),
                    Err(e) => Err(anyhow!(e).context(format!(
                        "assembling features for loan {} at {}",
                        row.loan_id, row.calendar_month
                    ))),
                }
            })
            .collect::<Result<Vec<Option<DesignRow>>>>()?;

        let mut out = design_header(assembler.names());
        out.push('\n');
        let mut kept = 0u64;
        let mut skipped = 0u64;
        for (panel_row, design_row) in panel.iter().zip(&assembled) {
            match design_row {
                Some(row) => {
                    out.push_str(&design_line(&panel_row.loan_id, panel_row.calendar_month, row));
                    out.push('\n');
                    kept += 1;
                }
                None => skipped += 1,
            }
        }
        write_artifact(&layout.design(split), &out)?;
        tallies.insert(format!("design_{split}_rows"), kept);
        tallies.insert(format!("skipped_{split}_rows"), skipped);
        if split == Split::Train {
            train_rows = assembled.into_iter().flatten().collect();
        }
    }

    // Diagnostics on the train panel: bivariate log-odds tables for the raw
    // origination attributes, and the design correlation matrix.
    type AttributeOf = fn(&LoanOrigination) -> f64;
    let attributes: [(&str, AttributeOf); 4] = [
        ("fico", |o| f64::from(o.fico)),
        ("dti", |o| o.dti),
        ("cltv", |o| o.cltv),
        ("orig_int_rt", |o| o.orig_int_rt),
    ];
    for (name, value_of) in attributes {
        let rows = panel_train
            .iter()
            .map(|row| {
                let orig = origination_of(&originations, &row.loan_id)?;
                Ok((value_of(orig), row.status, row.weight))
            })
            .collect::<Result<Vec<_>>>()?;
        let csv = bivariate_csv(&rows, config.features.bivariate_bins)
            .with_context(|| format!("binning {name} on the train panel"))?;
        write_artifact(&layout.bivariate(name), &csv)?;
    }
    write_artifact(&layout.collinearity(), &collinearity_csv(assembler.names(), &train_rows))?;
    Ok(tallies)
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

fn read_design(layout: &Layout, split: Split) -> Result<DesignData> {
    let path = layout.design(split);
    parse_design(&read_artifact(&path, "features")?, &path)
}

fn read_model(layout: &Layout) -> Result<CoefficientTable> {
    let path = layout.model();
    let text = read_artifact(&path, "fit")?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Rejects a design artifact whose columns disagree with the fitted model —
/// the sign of artifacts from two different feature configurations.
fn check_model_matches(design: &DesignData, model: &CoefficientTable) -> Result<()> {
    let model_names: Vec<&str> = model.names().into_iter().skip(1).collect();
    let design_names: Vec<&str> = design.names.iter().map(String::as_str).collect();
    if model_names != design_names {
        bail!(
            "the fitted model's regressors do not match the design matrix; \
             rerun fit after features"
        );
    }
    Ok(())
}

fn run_fit(config: &PipelineConfig, layout: &Layout) -> Result<Tallies> {
    let design = read_design(layout, Split::Train)?;
    let table = hazard::fit(&design.rows, &design.names, &config.fit)
        .context("fitting the hazard model")?;

    let mut coefficients = String::from("name,estimate,standard_error,wald_chi_square,p_value\n");
    for row in &table.rows {
        coefficients.push_str(&format!(
            "{},{},{},{},{}\n",
            row.name, row.estimate, row.standard_error, row.wald_chi_square, row.p_value
        ));
    }
    write_artifact(&layout.coefficients(), &coefficients)?;
    let json = serde_json::to_string_pretty(&table).expect("coefficient table serializes");
    write_artifact(&layout.model(), &(json + "\n"))?;
    write_artifact(&layout.fit_report(), &wald_report(&table))?;
    Ok(tally([
        ("rows", table.n_rows as u64),
        ("parameters", table.rows.len() as u64),
        ("iterations", table.iterations as u64),
    ]))
}

// ---------------------------------------------------------------------------
// backtest
// ---------------------------------------------------------------------------

/// One split's backtest summary as serialized into the JSON artifact.
#[derive(Debug, Clone, PartialEq, Serialize)]
struct BacktestSummary {
    months: usize,
    mae: f64,
    rmse: f64,
    mape: Option<f64>,
    zero_actual_months_excluded: usize,
}

fn run_backtest(_config: &PipelineConfig, layout: &Layout) -> Result<Tallies> {
    let model = read_model(layout)?;
    let beta = model.estimates();

    let mut tallies = Tallies::new();
    let mut summaries: BTreeMap<&str, BacktestSummary> = BTreeMap::new();
    for split in [Split::Train, Split::Test] {
        let design = read_design(layout, split)?;
        check_model_matches(&design, &model)?;
        let scored: Vec<ScoredRow> = design
            .rows
            .iter()
            .zip(&design.months)
            .map(|(row, &month)| ScoredRow {
                calendar_month: month,
                status: row.status,
                weight: row.weight,
                hazard: predict_hazard(&row.features, &beta),
            })
            .collect();
        let report =
            eval::backtest(&scored).with_context(|| format!("backtesting the {split} panel"))?;

        let mut out = String::from("month,actual_rate,predicted_rate,weight\n");
        for m in &report.months {
            out.push_str(&format!(
                "{},{},{},{}\n",
                m.month, m.actual_rate, m.predicted_rate, m.weight
            ));
        }
        write_artifact(&layout.backtest(split), &out)?;
        tallies.insert(format!("months_{split}"), report.months.len() as u64);
        summaries.insert(
            match split {
                Split::Train => "train",
                Split::Test => "test",
            },
            BacktestSummary {
                months: report.months.len(),
                mae: report.mae,
                rmse: report.rmse,
                mape: report.mape,
                zero_actual_months_excluded: report.zero_actual_months_excluded,
            },
        );
    }
    let json = serde_json::to_string_pretty(&summaries).expect("summaries serialize");
    write_artifact(&layout.backtest_summary(), &(json + "\n"))?;
    Ok(tallies)
}

// ---------------------------------------------------------------------------
// score
// ---------------------------------------------------------------------------

fn bands_csv(rows: &[BandRow], band_width: u32) -> Result<String> {
    let bands = eval::score_band_table(rows, band_width)?;
    let mut out = String::from("lo,hi,bad_weight,good_weight,total_weight,mean_predicted_hazard\n");
    for band in &bands {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            band.lo,
            band.hi,
            band.bad_weight,
            band.good_weight,
            band.total_weight,
            band.mean_predicted_hazard
        ));
    }
    Ok(out)
}

/// Scores one loan: projects its hazard over the full horizon from its first
/// performance month, then reduces the trajectory to the artifact row.
fn score_loan(
    history: &LoanHistory,
    assembler: &FeatureAssembler,
    beta: &[f64],
    scale: &ScoreScale,
    horizon: u32,
    mob_offset: u32,
) -> Result<LoanScore> {
    let orig = history.origination();
    let loan_id: Arc<str> = Arc::from(history.loan_id());
    let mut hazards = Vec::with_capacity(horizon as usize);
    for t in 0..horizon {
        let row = PanelRow {
            loan_id: loan_id.clone(),
            snapshot_month: history.first_month(),
            calendar_month: history.first_month() + t as i32,
            loan_age: t,
            snapshot_mob: mob_offset,
            status: Status::Good,
            weight: 1.0,
        };
        let features = assembler.assemble(&row, orig).map_err(|e| {
            anyhow!(e).context(format!(
                "projecting loan {} at {}: scoring needs macro coverage over the whole horizon",
                history.loan_id(),
                row.calendar_month
            ))
        })?;
        hazards.push(predict_hazard(&features, beta));
    }
    let hazard = hazards[0];
    let horizon_pd = hazard::horizon_pd(&hazards)
        .map_err(|e| anyhow!(e).context(format!("projecting loan {}", history.loan_id())))?;
    let score = eval::to_score(hazard, scale)
        .map_err(|e| anyhow!(e).context(format!("scoring loan {}", history.loan_id())))?;
    Ok(LoanScore {
        loan_id: history.loan_id().to_string(),
        hazard,
        horizon_pd,
        score,
        terminal_status: history.terminal_status(),
    })
}

fn run_score(config: &PipelineConfig, layout: &Layout) -> Result<Tallies> {
    let model = read_model(layout)?;
    let beta = model.estimates();
    let spec_path = layout.feature_spec();
    let spec: FeatureSpec = serde_json::from_str(&read_artifact(&spec_path, "features")?)
        .with_context(|| format!("parsing {}", spec_path.display()))?;
    let design_train = read_design(layout, Split::Train)?;
    let design_test = read_design(layout, Split::Test)?;
    check_model_matches(&design_train, &model)?;
    check_model_matches(&design_test, &model)?;

    let scale = match config.scoring.mode {
        ScaleMode::RangeCalibrated => {
            let train_hazards =
                design_train.rows.iter().map(|r| predict_hazard(&r.features, &beta));
            ScoreScale::calibrated_to(train_hazards)
                .context("calibrating the score scale to the train panel")?
        }
        ScaleMode::AnchorBased => config.scoring.anchor_scale(),
    };
    let json = serde_json::to_string_pretty(&scale).expect("scale serializes");
    write_artifact(&layout.score_scale(), &(json + "\n"))?;

    let mut tallies = Tallies::new();
    for (split, design) in [(Split::Train, &design_train), (Split::Test, &design_test)] {
        let hazards: Vec<f64> =
            design.rows.iter().map(|r| predict_hazard(&r.features, &beta)).collect();
        let band_rows = design
            .rows
            .iter()
            .zip(&hazards)
            .map(|(row, &hazard)| {
                Ok(BandRow {
                    score: eval::to_score(hazard, &scale)?,
                    status: row.status,
                    weight: row.weight,
                    hazard,
                })
            })
            .collect::<Result<Vec<_>, eval::EvalError>>()
            .with_context(|| format!("banding the {split} panel"))?;
        let csv = bands_csv(&band_rows, config.scoring.band_width)
            .with_context(|| format!("banding the {split} panel"))?;
        write_artifact(&layout.score_bands(split), &csv)?;
        tallies.insert(format!("banded_{split}_rows"), band_rows.len() as u64);
    }

    // Loan-level scores: every labeled loan, projected over the horizon.
    let histories = read_histories(layout)?;
    let assignment = read_split(config, layout)?;
    let (train, test) = partition(histories, &assignment)?;
    let store = load_macro_store(config)?;
    let assembler = FeatureAssembler::new(spec, &store).context("resolving feature inputs")?;
    for (split, split_histories) in [(Split::Train, train), (Split::Test, test)] {
        let scores = split_histories
            .par_iter()
            .map(|history| {
                score_loan(
                    history,
                    &assembler,
                    &beta,
                    &scale,
                    config.labeling.horizon,
                    config.sampling.mob_offset,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        write_artifact(&layout.loan_scores(split), &artifacts::loan_scores_csv(&scores))?;
        tallies.insert(format!("scored_{split}_loans"), scores.len() as u64);
    }
    Ok(tallies)
}

// ---------------------------------------------------------------------------
// cutoff
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
struct YoudenSummary {
    /// Hazard threshold maximizing TPR − FPR on train loans.
    threshold_hazard: f64,
    youden_j: f64,
    /// The threshold on the score scale, when it maps to one.
    threshold_score: Option<i32>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct CutoffRow {
    score: i32,
    matrix: ConfusionMatrix,
    metrics: ClassificationMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct CutoffReport {
    /// Area under the train-loan ROC curve.
    auc: f64,
    youden: YoudenSummary,
    /// Confusion at each configured cutoff, evaluated on test loans.
    cutoffs: Vec<CutoffRow>,
}

fn run_cutoff(config: &PipelineConfig, layout: &Layout) -> Result<Tallies> {
    let scale_path = layout.score_scale();
    let scale: ScoreScale = serde_json::from_str(&read_artifact(&scale_path, "score")?)
        .with_context(|| format!("parsing {}", scale_path.display()))?;
    let train_path = layout.loan_scores(Split::Train);
    let train = parse_loan_scores(&read_artifact(&train_path, "score")?, &train_path)?;
    let test_path = layout.loan_scores(Split::Test);
    let test = parse_loan_scores(&read_artifact(&test_path, "score")?, &test_path)?;

    let roc_rows: Vec<(Status, f64, f64)> =
        train.iter().map(|s| (s.terminal_status, 1.0, s.hazard)).collect();
    let curve = eval::roc(&roc_rows).context("sweeping the ROC curve on train loans")?;
    let mut out = String::from("threshold,tpr,fpr\n");
    for p in &curve.points {
        out.push_str(&format!("{},{},{}\n", p.threshold, p.tpr, p.fpr));
    }
    write_artifact(&layout.roc(), &out)?;

    let (threshold_hazard, youden_j) = eval::youden_cutoff(&curve);
    let threshold_score = eval::to_score(threshold_hazard, &scale).ok();
    let confusion_rows: Vec<(Status, i32, f64)> =
        test.iter().map(|s| (s.terminal_status, s.score, 1.0)).collect();
    let cutoffs = config
        .scoring
        .cutoffs
        .iter()
        .map(|&score| {
            let matrix = eval::confusion_at(&confusion_rows, score);
            let metrics = eval::classification_metrics(&matrix);
            CutoffRow { score, matrix, metrics }
        })
        .collect::<Vec<_>>();

    let report = CutoffReport {
        auc: curve.auc,
        youden: YoudenSummary { threshold_hazard, youden_j, threshold_score },
        cutoffs,
    };
    let json = serde_json::to_string_pretty(&report).expect("cutoff report serializes");
    write_artifact(&layout.cutoff_report(), &(json + "\n"))?;
    Ok(tally([
        ("roc_points", curve.points.len() as u64),
        ("cutoffs_evaluated", config.scoring.cutoffs.len() as u64),
    ]))
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

fn count_data_lines(layout_path: &Path, producer: &str) -> Result<u64> {
    let text = read_artifact(layout_path, producer)?;
    Ok(text.lines().count().saturating_sub(1) as u64)
}

fn run_report(config: &PipelineConfig, layout: &Layout) -> Result<Tallies> {
    let histories = read_histories(layout)?;
    let assignment = read_split(config, layout)?;
    let bad = histories.iter().filter(|h| h.terminal_status().is_bad()).count();
    let panel_train_rows = count_data_lines(&layout.panel(Split::Train), "sample")?;
    let panel_test_rows = count_data_lines(&layout.panel(Split::Test), "sample")?;
    let model = read_model(layout)?;

    let parse_json = |path: &Path, producer: &str| -> Result<serde_json::Value> {
        serde_json::from_str(&read_artifact(path, producer)?)
            .with_context(|| format!("parsing {}", path.display()))
    };
    let backtest = parse_json(&layout.backtest_summary(), "backtest")?;
    let scale = parse_json(&layout.score_scale(), "score")?;
    let cutoff = parse_json(&layout.cutoff_report(), "cutoff")?;

    let report = serde_json::json!({
        "seed": config.seed,
        "config_hash": config.content_hash(),
        "portfolio": {
            "loans": histories.len(),
            "bad_loans": bad,
            "train_loans": assignment.count_of(Split::Train),
            "test_loans": assignment.count_of(Split::Test),
        },
        "panel": {
            "train_rows": panel_train_rows,
            "test_rows": panel_test_rows,
        },
        "model": {
            "parameters": model.rows.len(),
            "iterations": model.iterations,
            "log_likelihood": model.log_likelihood,
            "n_rows": model.n_rows,
            "total_weight": model.total_weight,
            "coefficients": model.rows,
        },
        "backtest": backtest,
        "scoring": {
            "scale": scale,
            "cutoff": cutoff,
        },
    });
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_artifact(&layout.report(), &(json + "\n"))?;
    Ok(tally([
        ("loans", histories.len() as u64),
        ("panel_train_rows", panel_train_rows),
        ("panel_test_rows", panel_test_rows),
    ]))
}
