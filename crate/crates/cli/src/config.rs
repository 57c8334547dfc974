//! Pipeline configuration: the TOML schema, defaults, validation, and the
//! content hash recorded in the manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use hazardcard_core::eval::{ScoreScale, SCORE_MAX, SCORE_MIN};
use hazardcard_core::features::{CovidWindow, InteractionSpec, MacroTransformSpec};
use hazardcard_core::hazard::FitOptions;
use hazardcard_core::ingest::{Frequency, LabelOptions, LoanFormat, PerfFormat};
use hazardcard_core::panel::{SamplingRateTable, SamplingUnit};
use hazardcard_core::synth::GeneratorSpec;
use hazardcard_core::FeatureSpec;

/// Everything the pipeline needs, loadable from one TOML file.
///
/// Every field has a default, so an empty file — or no `--config` at all —
/// runs the synthetic-portfolio demo pipeline end to end. Input paths left
/// unset resolve to the synth stage's outputs under the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Master seed; every stochastic stage derives its own named substreams
    /// from it.
    pub seed: u64,
    pub paths: Paths,
    /// Macro series to load from the macro directory: series name (also the
    /// file stem) → native observation frequency.
    pub macros: BTreeMap<String, Frequency>,
    pub loan_format: LoanFormat,
    pub perf_format: PerfFormat,
    pub labeling: LabelOptions,
    pub split: SplitSettings,
    pub sampling: SamplingSettings,
    pub features: FeatureSettings,
    pub fit: FitOptions,
    pub scoring: ScoringSettings,
    /// Portfolio generator used by the `synth` stage (and by `all` whenever
    /// any input path is unset).
    pub synth: GeneratorSpec,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 20_260_819,
            paths: Paths::default(),
            macros: default_macros(),
            loan_format: LoanFormat::default(),
            perf_format: PerfFormat::default(),
            labeling: LabelOptions::default(),
            split: SplitSettings::default(),
            sampling: SamplingSettings::default(),
            features: FeatureSettings::default(),
            fit: FitOptions::default(),
            scoring: ScoringSettings::default(),
            synth: GeneratorSpec::default(),
        }
    }
}

fn default_macros() -> BTreeMap<String, Frequency> {
    BTreeMap::from([
        ("MORTGAGE30US".to_string(), Frequency::Monthly),
        ("RCMFLBACTDPDPCT90P".to_string(), Frequency::Quarterly),
        ("UNRATENSA".to_string(), Frequency::Monthly),
    ])
}

/// Input and output locations. Only these (plus `--threads`) are excluded
/// from the config hash: they say where artifacts live, not what they hold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Root of all artifacts; each stage writes under its own subdirectory.
    pub out_dir: PathBuf,
    /// Loan-origination file; defaults to the synth stage's output.
    pub loan_file: Option<PathBuf>,
    /// Monthly performance file; defaults to the synth stage's output.
    pub performance_file: Option<PathBuf>,
    /// Directory holding one `<SERIES>.csv` per macro series; defaults to
    /// the synth stage's output.
    pub macro_dir: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            out_dir: PathBuf::from("out"),
            loan_file: None,
            performance_file: None,
            macro_dir: None,
        }
    }
}

/// Train/test split settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSettings {
    /// Share of loans assigned to train, stratified by terminal status.
    pub train_fraction: f64,
}

impl Default for SplitSettings {
    fn default() -> Self {
        SplitSettings { train_fraction: 0.7 }
    }
}

/// Backward-sampling settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSettings {
    /// Whether rows or whole snapshot sub-panels are kept or dropped.
    pub unit: SamplingUnit,
    /// Months already on book at the first performance month; added to
    /// every row's `snapshot_mob`.
    pub mob_offset: u32,
    /// Selection probabilities by status and monthly observation count.
    pub rates: SamplingRateTable,
}

impl Default for SamplingSettings {
    fn default() -> Self {
        SamplingSettings {
            unit: SamplingUnit::Row,
            mob_offset: 0,
            rates: SamplingRateTable::default(),
        }
    }
}

/// How the FICO × balance interaction is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionMode {
    /// Calibrate multipliers on the train panel during the features stage.
    Fit,
    /// Use the multipliers given in `[features.interaction.spec]` verbatim.
    Fixed,
}

/// Interaction settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InteractionSettings {
    pub mode: InteractionMode,
    /// FICO quantile groups used when fitting.
    pub n_fico_groups: usize,
    /// Balance quantile groups used when fitting.
    pub n_upb_groups: usize,
    /// The spec applied verbatim when `mode = "fixed"`; ignored otherwise.
    pub spec: Option<InteractionSpec>,
}

impl Default for InteractionSettings {
    fn default() -> Self {
        InteractionSettings {
            mode: InteractionMode::Fit,
            n_fico_groups: 5,
            n_upb_groups: 4,
            spec: None,
        }
    }
}

/// Feature-stage settings: everything in [`FeatureSpec`] except the fitted
/// interaction, plus the bivariate-table bin count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSettings {
    pub loan_age_knots: Vec<f64>,
    pub snapshot_mob_knots: Vec<f64>,
    pub cltv_knots: Vec<f64>,
    /// Series holding the prevailing market mortgage rate, for SATO.
    pub market_rate_series: String,
    /// Flips SATO to market − note rate.
    pub sato_market_minus_rate: bool,
    pub macro_transforms: Vec<MacroTransformSpec>,
    pub covid_window: CovidWindow,
    /// Equal-frequency bins in the bivariate log-odds diagnostics.
    pub bivariate_bins: usize,
    pub interaction: InteractionSettings,
}

impl Default for FeatureSettings {
    fn default() -> Self {
        let spec = FeatureSpec::default();
        FeatureSettings {
            loan_age_knots: spec.loan_age_knots,
            snapshot_mob_knots: spec.snapshot_mob_knots,
            cltv_knots: spec.cltv_knots,
            market_rate_series: spec.market_rate_series,
            sato_market_minus_rate: spec.sato_market_minus_rate,
            macro_transforms: spec.macro_transforms,
            covid_window: spec.covid_window,
            bivariate_bins: 10,
            interaction: InteractionSettings::default(),
        }
    }
}

impl FeatureSettings {
    /// The full feature recipe once the interaction is known.
    pub fn feature_spec(&self, interaction: InteractionSpec) -> FeatureSpec {
        FeatureSpec {
            loan_age_knots: self.loan_age_knots.clone(),
            snapshot_mob_knots: self.snapshot_mob_knots.clone(),
            cltv_knots: self.cltv_knots.clone(),
            market_rate_series: self.market_rate_series.clone(),
            sato_market_minus_rate: self.sato_market_minus_rate,
            macro_transforms: self.macro_transforms.clone(),
            covid_window: self.covid_window,
            interaction,
        }
    }
}

/// How hazards map to scores and which cutoffs get confusion matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleMode {
    /// Calibrate the affine log-odds map to the train panel's predicted
    /// hazard range during the score stage.
    RangeCalibrated,
    /// Anchor a reference odds at a reference score with a fixed
    /// points-to-double-odds.
    AnchorBased,
}

/// Score-stage settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringSettings {
    pub mode: ScaleMode,
    /// Width of each score band in the banding tables.
    pub band_width: u32,
    /// Score cutoffs evaluated on test loans by the cutoff stage.
    pub cutoffs: Vec<i32>,
    /// Anchor-mode parameters; required when `mode = "anchor_based"`.
    pub anchor_score: Option<f64>,
    pub anchor_odds: Option<f64>,
    pub points_to_double_odds: Option<f64>,
}

impl Default for ScoringSettings {
    fn default() -> Self {
        ScoringSettings {
            mode: ScaleMode::RangeCalibrated,
            band_width: 50,
            cutoffs: vec![600, 621, 640],
            anchor_score: None,
            anchor_odds: None,
            points_to_double_odds: None,
        }
    }
}

impl ScoringSettings {
    /// The anchor-based scale assembled from the settings. Call only after
    /// [`PipelineConfig::validate`]; the fields are then known to be present
    /// and valid.
    pub fn anchor_scale(&self) -> ScoreScale {
        ScoreScale::AnchorBased {
            anchor_score: self.anchor_score.expect("validated"),
            anchor_odds: self.anchor_odds.expect("validated"),
            points_to_double_odds: self.points_to_double_odds.expect("validated"),
        }
    }
}

impl PipelineConfig {
    /// Loads the configuration, or the defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(PipelineConfig::default());
        };
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config file {}", path.display()))
    }

    /// Applies command-line overrides on top of the file.
    pub fn apply_overrides(&mut self, seed: Option<u64>, out: Option<PathBuf>) {
        if let Some(seed) = seed {
            self.seed = seed;
        }
        if let Some(out) = out {
            self.paths.out_dir = out;
        }
    }

    /// Rejects invalid settings before any stage runs.
    pub fn validate(&self) -> Result<()> {
        for (path, role) in [
            (&self.paths.loan_file, "paths.loan_file"),
            (&self.paths.performance_file, "paths.performance_file"),
            (&self.paths.macro_dir, "paths.macro_dir"),
        ] {
            if let Some(path) = path {
                if !path.exists() {
                    bail!("{role} {} does not exist", path.display());
                }
            }
        }
        let f = self.split.train_fraction;
        if !(f > 0.0 && f < 1.0) {
            bail!("split.train_fraction must be inside (0, 1), got {f}");
        }
        if self.labeling.horizon < 1 {
            bail!("labeling.horizon must be at least one month");
        }
        if self.labeling.bad_threshold < 1 {
            bail!("labeling.bad_threshold must be at least one delinquency bucket");
        }
        self.sampling.rates.validate().context("sampling.rates")?;

        let interaction = &self.features.interaction;
        let placeholder = match interaction.mode {
            InteractionMode::Fit => {
                if interaction.n_fico_groups < 2 {
                    bail!("features.interaction.n_fico_groups must be at least 2");
                }
                if interaction.n_upb_groups < 1 {
                    bail!("features.interaction.n_upb_groups must be at least 1");
                }
                InteractionSpec::identity(Vec::new())
            }
            InteractionMode::Fixed => match &interaction.spec {
                Some(spec) => spec.clone(),
                None => bail!("features.interaction.mode is \"fixed\" but [features.interaction.spec] is missing"),
            },
        };
        self.features.feature_spec(placeholder).validate().context("features")?;
        if self.features.bivariate_bins < 2 {
            bail!("features.bivariate_bins must be at least 2");
        }
        for t in &self.features.macro_transforms {
            if !self.macros.contains_key(&t.series) {
                bail!(
                    "features.macro_transforms references series {:?}, which is not declared in [macros]",
                    t.series
                );
            }
        }
        if !self.macros.contains_key(&self.features.market_rate_series) {
            bail!(
                "features.market_rate_series {:?} is not declared in [macros]",
                self.features.market_rate_series
            );
        }

        if !(self.fit.tol > 0.0 && self.fit.tol.is_finite()) {
            bail!("fit.tol must be a positive finite number, got {}", self.fit.tol);
        }
        if self.fit.max_iter < 1 {
            bail!("fit.max_iter must be at least 1");
        }
        if !(self.fit.ridge >= 0.0 && self.fit.ridge.is_finite()) {
            bail!("fit.ridge must be a non-negative finite number, got {}", self.fit.ridge);
        }

        if self.scoring.band_width < 1 {
            bail!("scoring.band_width must be at least 1");
        }
        if self.scoring.cutoffs.is_empty() {
            bail!("scoring.cutoffs must list at least one score cutoff");
        }
        for &cutoff in &self.scoring.cutoffs {
            if !(SCORE_MIN..=SCORE_MAX).contains(&cutoff) {
                bail!("scoring.cutoffs entry {cutoff} is outside the {SCORE_MIN}–{SCORE_MAX} score range");
            }
        }
        if self.scoring.mode == ScaleMode::AnchorBased {
            if self.scoring.anchor_score.is_none()
                || self.scoring.anchor_odds.is_none()
                || self.scoring.points_to_double_odds.is_none()
            {
                bail!(
                    "scoring.mode is \"anchor_based\"; scoring.anchor_score, scoring.anchor_odds \
                     and scoring.points_to_double_odds are all required"
                );
            }
            self.scoring.anchor_scale().validate().context("scoring")?;
        }

        self.synth.validate().context("synth")?;
        if self.synth_feeds_inputs() {
            for (name, &frequency) in &self.macros {
                match self.synth.macro_paths.iter().find(|p| &p.name == name) {
                    None => bail!(
                        "[macros] declares {name:?} but no input macro_dir is configured and \
                         [synth] does not generate that series"
                    ),
                    Some(path) if path.frequency != frequency => bail!(
                        "[macros] declares {name:?} as {frequency} but [synth] generates it as {}",
                        path.frequency
                    ),
                    Some(_) => {}
                }
            }
        }
        Ok(())
    }

    /// Resolved loan-origination file: the configured path, or the synth
    /// stage's output.
    pub fn loan_file(&self) -> PathBuf {
        self.paths
            .loan_file
            .clone()
            .unwrap_or_else(|| self.paths.out_dir.join("synth").join("loans.psv"))
    }

    /// Resolved performance file.
    pub fn performance_file(&self) -> PathBuf {
        self.paths
            .performance_file
            .clone()
            .unwrap_or_else(|| self.paths.out_dir.join("synth").join("performance.psv"))
    }

    /// Resolved macro directory.
    pub fn macro_dir(&self) -> PathBuf {
        self.paths
            .macro_dir
            .clone()
            .unwrap_or_else(|| self.paths.out_dir.join("synth").join("macros"))
    }

    /// Whether `all` must generate its own inputs: true when any input path
    /// is left to default to the synth stage's output.
    pub fn synth_feeds_inputs(&self) -> bool {
        self.paths.loan_file.is_none()
            || self.paths.performance_file.is_none()
            || self.paths.macro_dir.is_none()
    }

    /// SHA-256 over the settings that shape artifact content. Paths and
    /// thread counts are excluded, so the same logical run hashes the same
    /// wherever it lands and however it is parallelized; the seed is
    /// recorded next to the hash in the manifest rather than inside it.
    pub fn content_hash(&self) -> String {
        // Field order is fixed by the struct definition, and every map in
        // the tree is a BTreeMap, so the JSON is canonical.
        #[derive(Serialize)]
        struct HashView<'a> {
            macros: &'a BTreeMap<String, Frequency>,
            loan_format: &'a LoanFormat,
            perf_format: &'a PerfFormat,
            labeling: &'a LabelOptions,
            split: &'a SplitSettings,
            sampling: &'a SamplingSettings,
            features: &'a FeatureSettings,
            fit: &'a FitOptions,
            scoring: &'a ScoringSettings,
            synth: &'a GeneratorSpec,
        }
        let view = HashView {
            macros: &self.macros,
            loan_format: &self.loan_format,
            perf_format: &self.perf_format,
            labeling: &self.labeling,
            split: &self.split,
            sampling: &self.sampling,
            features: &self.features,
            fit: &self.fit,
            scoring: &self.scoring,
            synth: &self.synth,
        };
        let json = serde_json::to_string(&view).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_validates() {
        PipelineConfig::default().validate().unwrap();
    }

    #[test]
    fn empty_toml_is_the_default_config() {
        let parsed: PipelineConfig = toml::from_str("").unwrap();
        assert_eq!(parsed, PipelineConfig::default());
    }

    #[test]
    fn toml_round_trip_preserves_the_config() {
        let config = PipelineConfig::default();
        let text = toml::to_string_pretty(&config).unwrap();
        let back: PipelineConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<PipelineConfig>("sed = 7").unwrap_err();
        assert!(err.to_string().contains("sed"), "{err}");
    }

    #[test]
    fn overrides_replace_seed_and_out_dir() {
        let mut config = PipelineConfig::default();
        config.apply_overrides(Some(99), Some(PathBuf::from("elsewhere")));
        assert_eq!(config.seed, 99);
        assert_eq!(config.paths.out_dir, PathBuf::from("elsewhere"));
    }

    #[test]
    fn bad_train_fraction_fails_validation() {
        let mut config = PipelineConfig::default();
        config.split.train_fraction = 1.0;
        let err = config.validate().unwrap_err();
        assert!(err.to_string().contains("train_fraction"), "{err}");
    }

    #[test]
    fn configured_input_path_must_exist_at_validation() {
        let mut config = PipelineConfig::default();
        config.paths.loan_file = Some(PathBuf::from("/no/such/loans.psv"));
        let err = config.validate().unwrap_err();
        assert!(err.to_string().contains("paths.loan_file"), "{err}");
    }

    #[test]
    fn fixed_interaction_without_spec_fails_validation() {
        let mut config = PipelineConfig::default();
        config.features.interaction.mode = InteractionMode::Fixed;
        let err = config.validate().unwrap_err();
        assert!(err.to_string().contains("fixed"), "{err}");
    }

    #[test]
    fn anchor_mode_requires_all_three_parameters() {
        let mut config = PipelineConfig::default();
        config.scoring.mode = ScaleMode::AnchorBased;
        config.scoring.anchor_score = Some(660.0);
        config.scoring.anchor_odds = Some(0.01);
        assert!(config.validate().is_err());
        config.scoring.points_to_double_odds = Some(20.0);
        config.validate().unwrap();
    }

    #[test]
    fn undeclared_macro_series_fails_validation() {
        let mut config = PipelineConfig::default();
        config.macros.remove("UNRATENSA");
        let err = config.validate().unwrap_err();
        assert!(err.to_string().contains("UNRATENSA"), "{err}");
    }

    #[test]
    fn content_hash_ignores_paths_but_not_settings() {
        let base = PipelineConfig::default();
        let mut moved = base.clone();
        moved.paths.out_dir = PathBuf::from("/somewhere/else");
        assert_eq!(base.content_hash(), moved.content_hash());

        let mut reseeded = base.clone();
        reseeded.seed = base.seed + 1;
        assert_eq!(base.content_hash(), reseeded.content_hash());

        let mut retuned = base.clone();
        retuned.fit.tol = 1e-6;
        assert_ne!(base.content_hash(), retuned.content_hash());
    }

    #[test]
    fn cutoff_outside_score_range_fails_validation() {
        let mut config = PipelineConfig::default();
        config.scoring.cutoffs = vec![299];
        assert!(config.validate().is_err());
    }
}
