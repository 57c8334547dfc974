//! Artifact plumbing: where every file lives, the run manifest, and the CSV
//! codecs for artifacts that later stages read back.
//!
//! Stages communicate only through these files, so any stage can be re-run
//! on its own. Floats are written with `{}` — the shortest representation
//! that round-trips — which keeps artifacts byte-stable across runs and
//! thread counts.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use hazardcard_core::hazard::DesignRow;
use hazardcard_core::ingest::{LoanHistory, LoanOrigination, MonthTally, MonthlyCounts};
use hazardcard_core::{CalMonth, PanelRow, Split, Status};

// ---------------------------------------------------------------------------
// Layout
// ---------------------------------------------------------------------------

/// Resolves every artifact path under one output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    out: PathBuf,
}

fn split_name(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::Test => "test",
    }
}

impl Layout {
    pub fn new(out_dir: &Path) -> Self {
        Layout { out: out_dir.to_path_buf() }
    }

    pub fn manifest(&self) -> PathBuf {
        self.out.join("manifest.json")
    }

    pub fn synth_loans(&self) -> PathBuf {
        self.out.join("synth").join("loans.psv")
    }

    pub fn synth_performance(&self) -> PathBuf {
        self.out.join("synth").join("performance.psv")
    }

    pub fn synth_macro(&self, series: &str) -> PathBuf {
        self.out.join("synth").join("macros").join(format!("{series}.csv"))
    }

    pub fn histories(&self) -> PathBuf {
        self.out.join("ingest").join("histories.csv")
    }

    pub fn rejections(&self) -> PathBuf {
        self.out.join("ingest").join("rejections.csv")
    }

    pub fn exclusions(&self) -> PathBuf {
        self.out.join("ingest").join("exclusions.csv")
    }

    pub fn split_file(&self) -> PathBuf {
        self.out.join("split").join("split.csv")
    }

    pub fn counts_overall(&self) -> PathBuf {
        self.out.join("counts").join("counts_overall.csv")
    }

    pub fn counts(&self, split: Split) -> PathBuf {
        self.out.join("counts").join(format!("counts_{}.csv", split_name(split)))
    }

    pub fn panel(&self, split: Split) -> PathBuf {
        self.out.join("sample").join(format!("panel_{}.csv", split_name(split)))
    }

    pub fn feature_spec(&self) -> PathBuf {
        self.out.join("features").join("feature_spec.json")
    }

    pub fn design(&self, split: Split) -> PathBuf {
        self.out.join("features").join(format!("design_{}.csv", split_name(split)))
    }

    pub fn bivariate(&self, variable: &str) -> PathBuf {
        self.out.join("features").join(format!("bivariate_{variable}.csv"))
    }

    pub fn collinearity(&self) -> PathBuf {
        self.out.join("features").join("collinearity.csv")
    }

    pub fn coefficients(&self) -> PathBuf {
        self.out.join("fit").join("coefficients.csv")
    }

    pub fn model(&self) -> PathBuf {
        self.out.join("fit").join("model.json")
    }

    pub fn fit_report(&self) -> PathBuf {
        self.out.join("fit").join("fit_report.txt")
    }

    pub fn backtest(&self, split: Split) -> PathBuf {
        self.out.join("backtest").join(format!("backtest_{}.csv", split_name(split)))
    }

    pub fn backtest_summary(&self) -> PathBuf {
        self.out.join("backtest").join("backtest_summary.json")
    }

    pub fn score_scale(&self) -> PathBuf {
        self.out.join("score").join("score_scale.json")
    }

    pub fn loan_scores(&self, split: Split) -> PathBuf {
        self.out.join("score").join(format!("loan_scores_{}.csv", split_name(split)))
    }

    pub fn score_bands(&self, split: Split) -> PathBuf {
        self.out.join("score").join(format!("score_bands_{}.csv", split_name(split)))
    }

    pub fn roc(&self) -> PathBuf {
        self.out.join("cutoff").join("roc.csv")
    }

    pub fn cutoff_report(&self) -> PathBuf {
        self.out.join("cutoff").join("cutoff.json")
    }

    pub fn report(&self) -> PathBuf {
        self.out.join("report").join("report.json")
    }
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

/// One stage's run record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub elapsed_ms: u64,
    /// Row counts and other integer tallies the stage reported.
    pub counts: BTreeMap<String, u64>,
}

/// The run manifest: which configuration produced the artifacts, and what
/// each stage did. Rewritten from scratch whenever the configuration hash or
/// seed changes, so stale stage records never outlive the artifacts they
/// describe.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub stages: BTreeMap<String, StageRecord>,
}

impl Manifest {
    pub fn new(config_hash: String, seed: u64) -> Self {
        Manifest { config_hash, seed, stages: BTreeMap::new() }
    }

    /// Loads the manifest if present and produced by the same config+seed;
    /// otherwise starts fresh.
    pub fn load_or_new(path: &Path, config_hash: &str, seed: u64) -> Result<Self> {
        if !path.exists() {
            return Ok(Manifest::new(config_hash.to_string(), seed));
        }
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading manifest {}", path.display()))?;
        let manifest: Manifest = serde_json::from_str(&text)
            .with_context(|| format!("parsing manifest {}", path.display()))?;
        if manifest.config_hash != config_hash || manifest.seed != seed {
            return Ok(Manifest::new(config_hash.to_string(), seed));
        }
        Ok(manifest)
    }

    pub fn record(&mut self, stage: &str, elapsed_ms: u64, counts: BTreeMap<String, u64>) {
        self.stages.insert(stage.to_string(), StageRecord { elapsed_ms, counts });
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_artifact(path, &(json + "\n"))
    }
}

// ---------------------------------------------------------------------------
// File helpers
// ---------------------------------------------------------------------------

/// Writes an artifact, creating its directory.
pub fn write_artifact(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .with_context(|| format!("creating directory {}", parent.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Reads an artifact a stage depends on; a missing file names the stage that
/// produces it.
pub fn read_artifact(path: &Path, producer: &str) -> Result<String> {
    if !path.exists() {
        bail!("missing {}: run {} first", path.display(), producer);
    }
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Quotes a CSV field if it needs it (commas, quotes, newlines).
pub fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn data_lines(text: &str, header: &str, path: &Path) -> Result<Vec<String>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(first) if first == header => {}
        _ => bail!("{} does not start with the expected header {header:?}", path.display()),
    }
    Ok(lines.map(str::to_string).collect())
}

// ---------------------------------------------------------------------------
// Histories
// ---------------------------------------------------------------------------

pub const HISTORIES_HEADER: &str =
    "loan_id,orig_month,first_month,n_months,terminal_status,fico,dti,cltv,orig_upb,orig_int_rt";

/// Serializes labeled histories, one line per loan.
pub fn histories_csv(histories: &[LoanHistory]) -> String {
    let mut out = String::from(HISTORIES_HEADER);
    out.push('\n');
    for h in histories {
        let o = h.origination();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            o.loan_id,
            o.orig_month,
            h.first_month(),
            h.n_months(),
            h.terminal_status(),
            o.fico,
            o.dti,
            o.cltv,
            o.orig_upb,
            o.orig_int_rt
        ));
    }
    out
}

/// Parses the histories artifact back into labeled histories.
pub fn parse_histories(text: &str, path: &Path) -> Result<Vec<LoanHistory>> {
    let mut histories = Vec::new();
    for (i, line) in data_lines(text, HISTORIES_HEADER, path)?.iter().enumerate() {
        let err = || format!("{} line {}: bad history row {line:?}", path.display(), i + 2);
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            bail!("{}", err());
        }
        let origination = LoanOrigination {
            loan_id: fields[0].to_string(),
            orig_month: fields[1].parse().with_context(err)?,
            fico: fields[5].parse().with_context(err)?,
            dti: fields[6].parse().with_context(err)?,
            cltv: fields[7].parse().with_context(err)?,
            orig_upb: fields[8].parse().with_context(err)?,
            orig_int_rt: fields[9].parse().with_context(err)?,
        };
        histories.push(LoanHistory::new(
            origination,
            fields[2].parse().with_context(err)?,
            fields[3].parse().with_context(err)?,
            fields[4].parse().with_context(err)?,
        ));
    }
    Ok(histories)
}

// ---------------------------------------------------------------------------
// Split assignments
// ---------------------------------------------------------------------------

pub const SPLIT_HEADER: &str = "loan_id,split";

/// Parses the split artifact into `(loan_id, split)` pairs.
pub fn parse_split(text: &str, path: &Path) -> Result<Vec<(String, Split)>> {
    let mut pairs = Vec::new();
    for (i, line) in data_lines(text, SPLIT_HEADER, path)?.iter().enumerate() {
        let err = || format!("{} line {}: bad split row {line:?}", path.display(), i + 2);
        let Some((loan_id, split)) = line.split_once(',') else {
            bail!("{}", err());
        };
        pairs.push((loan_id.to_string(), split.parse().with_context(err)?));
    }
    Ok(pairs)
}

// ---------------------------------------------------------------------------
// Monthly counts
// ---------------------------------------------------------------------------

pub const COUNTS_HEADER: &str = "month,bad,good";

/// Serializes a monthly counts table.
pub fn counts_csv(counts: &MonthlyCounts) -> String {
    let mut out = String::from(COUNTS_HEADER);
    out.push('\n');
    for (month, tally) in counts.iter() {
        out.push_str(&format!("{},{},{}\n", month, tally.bads, tally.goods));
    }
    out
}

/// Parses a monthly counts artifact.
pub fn parse_counts(text: &str, path: &Path) -> Result<MonthlyCounts> {
    let mut counts = MonthlyCounts::new();
    for (i, line) in data_lines(text, COUNTS_HEADER, path)?.iter().enumerate() {
        let err = || format!("{} line {}: bad counts row {line:?}", path.display(), i + 2);
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            bail!("{}", err());
        }
        let month: CalMonth = fields[0].parse().with_context(err)?;
        let tally = MonthTally {
            bads: fields[1].parse().with_context(err)?,
            goods: fields[2].parse().with_context(err)?,
        };
        counts.insert(month, tally);
    }
    Ok(counts)
}

// ---------------------------------------------------------------------------
// Sampled panels
// ---------------------------------------------------------------------------

/// Parses a sampled-panel artifact.
pub fn parse_panel(text: &str, path: &Path) -> Result<Vec<PanelRow>> {
    let mut rows = Vec::new();
    for (i, line) in
        data_lines(text, hazardcard_core::panel::PANEL_CSV_HEADER, path)?.iter().enumerate()
    {
        let row = PanelRow::from_csv_line(line)
            .with_context(|| format!("{} line {}", path.display(), i + 2))?;
        rows.push(row);
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Design matrices
// ---------------------------------------------------------------------------

/// A design-matrix artifact read back into memory: per-row identifiers and
/// calendar months alongside the rows the fitter consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignData {
    pub names: Vec<String>,
    pub loan_ids: Vec<String>,
    pub months: Vec<CalMonth>,
    pub rows: Vec<DesignRow>,
}

const DESIGN_PREFIX: &str = "loan_id,calendar_month,status,weight";

pub fn design_header(names: &[String]) -> String {
    let mut header = String::from(DESIGN_PREFIX);
    for name in names {
        header.push(',');
        header.push_str(name);
    }
    header
}

pub fn design_line(loan_id: &str, month: CalMonth, row: &DesignRow) -> String {
    let mut line = format!("{},{},{},{}", loan_id, month, row.status, row.weight);
    for x in &row.features {
        line.push_str(&format!(",{x}"));
    }
    line
}

/// Parses a design-matrix artifact, recovering the regressor names from the
/// header.
pub fn parse_design(text: &str, path: &Path) -> Result<DesignData> {
    let mut lines = text.lines();
    let header = match lines.next() {
        Some(h) if h.starts_with(DESIGN_PREFIX) => h,
        _ => bail!(
            "{} does not start with the expected header {DESIGN_PREFIX:?},...",
            path.display()
        ),
    };
    let names: Vec<String> = header.split(',').skip(4).map(str::to_string).collect();
    let mut data = DesignData { names, loan_ids: Vec::new(), months: Vec::new(), rows: Vec::new() };
    for (i, line) in lines.enumerate() {
        let err = || format!("{} line {}: bad design row {line:?}", path.display(), i + 2);
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 + data.names.len() {
            bail!("{}", err());
        }
        let status: Status = fields[2].parse().with_context(err)?;
        let weight: f64 = fields[3].parse().with_context(err)?;
        let features = fields[4..]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .with_context(err)?;
        data.loan_ids.push(fields[0].to_string());
        data.months.push(fields[1].parse().with_context(err)?);
        data.rows.push(DesignRow { features, status, weight });
    }
    Ok(data)
}

// ---------------------------------------------------------------------------
// Loan scores
// ---------------------------------------------------------------------------

pub const LOAN_SCORES_HEADER: &str = "loan_id,hazard,horizon_pd,score,terminal_status";

/// One scored loan, as written by the score stage and read by the cutoff
/// stage.
#[derive(Debug, Clone, PartialEq)]
pub struct LoanScore {
    pub loan_id: String,
    /// First-month hazard of the loan's projected trajectory.
    pub hazard: f64,
    /// Probability of default within the configured horizon.
    pub horizon_pd: f64,
    pub score: i32,
    pub terminal_status: Status,
}

pub fn loan_scores_csv(scores: &[LoanScore]) -> String {
    let mut out = String::from(LOAN_SCORES_HEADER);
    out.push('\n');
    for s in scores {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            s.loan_id, s.hazard, s.horizon_pd, s.score, s.terminal_status
        ));
    }
    out
}

pub fn parse_loan_scores(text: &str, path: &Path) -> Result<Vec<LoanScore>> {
    let mut scores = Vec::new();
    for (i, line) in data_lines(text, LOAN_SCORES_HEADER, path)?.iter().enumerate() {
        let err = || format!("{} line {}: bad loan score row {line:?}", path.display(), i + 2);
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            bail!("{}", err());
        }
        scores.push(LoanScore {
            loan_id: fields[0].to_string(),
            hazard: fields[1].parse().with_context(err)?,
            horizon_pd: fields[2].parse().with_context(err)?,
            score: fields[3].parse().with_context(err)?,
            terminal_status: fields[4].parse().with_context(err)?,
        });
    }
    Ok(scores)
}
