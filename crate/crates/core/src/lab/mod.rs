//! Experiment pipelines, their configuration and their reports.
//!
//! A configuration is one JSON document `{ "experiment", "params", "output",
//! "seed", "strategy" }`. Every report echoes the resolved configuration,
//! lists its checks with margins and carries CSV tables for the metrics.

mod equidistribution;
mod main_inequality;
mod sqrt_recurrence;
mod theorem_stage;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{LabError, Result};
use crate::exec::Strategy;

pub use equidistribution::{exp_equidistribution, EquidistributionParams};
pub use main_inequality::{exp_main_inequality, function_battery, ConvergentCheck, MainInequalityParams};
pub use sqrt_recurrence::{exp_sqrt_recurrence, SetSpec, SqrtRecurrenceParams, SystemSpec};
pub use theorem_stage::{exp_theorem_stage, TheoremStageParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    MainInequality,
    SqrtRecurrence,
    TheoremStage,
    Equidistribution,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 4] = [
        ExperimentKind::MainInequality,
        ExperimentKind::SqrtRecurrence,
        ExperimentKind::TheoremStage,
        ExperimentKind::Equidistribution,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::MainInequality => "main_inequality",
            ExperimentKind::SqrtRecurrence => "sqrt_recurrence",
            ExperimentKind::TheoremStage => "theorem_stage",
            ExperimentKind::Equidistribution => "equidistribution",
        }
    }

    pub fn summary(self) -> &'static str {
        match self {
            ExperimentKind::MainInequality => {
                "weighted triple averages on exact Weyl models against L3 with the 2/sqrt(k) ||f||^2 bound"
            }
            ExperimentKind::SqrtRecurrence => "triple intersections along sqrt(BH) in exact rotation and Weyl models",
            ExperimentKind::TheoremStage => "staged certificates for S^2 built from band witnesses and combination",
            ExperimentKind::Equidistribution => "decay of character averages along n alpha + n^2 beta",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub params: Value,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub strategy: Strategy,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn parse_params<T: for<'de> Deserialize<'de>>(v: &Value) -> Result<T> {
    let v = if v.is_null() { Value::Object(Default::default()) } else { v.clone() };
    serde_json::from_value(v).map_err(|e| LabError::InvalidInput(format!("bad params: {e}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Outcome {
    Pass,
    /// An exact inequality or identity failed.
    Refuted,
    /// An empirical tolerance was exceeded, or there was nothing to test.
    Inconclusive,
}

/// One asserted inequality `value <= bound` (or a boolean property), with
/// its margin.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub exact: bool,
    pub passed: bool,
    pub value: f64,
    pub bound: f64,
    pub margin: f64,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl Check {
    pub fn at_most(name: impl Into<String>, exact: bool, value: f64, bound: f64, passed: bool) -> Self {
        Check {
            name: name.into(),
            exact,
            passed,
            value,
            bound,
            margin: bound - value,
            detail: String::new(),
        }
    }

    pub fn holds(name: impl Into<String>, exact: bool, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            exact,
            passed,
            value: f64::from(u8::from(passed)),
            bound: 1.0,
            margin: if passed { 0.0 } else { -1.0 },
            detail: detail.into(),
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r
                .iter()
                .map(|c| {
                    if c.contains(',') || c.contains('"') {
                        format!("\"{}\"", c.replace('"', "\"\""))
                    } else {
                        c.clone()
                    }
                })
                .collect();
            writeln!(out, "{}", cells.join(",")).expect("write to string");
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: ExperimentKind,
    /// The resolved configuration, defaults filled in.
    pub config: Value,
    pub outcome: Outcome,
    pub checks: Vec<Check>,
    pub metrics: BTreeMap<String, Value>,
    pub tables: BTreeMap<String, Table>,
    pub artifacts: Vec<String>,
    pub notes: Vec<String>,
    pub wall_clock_ms: u128,
}

impl ExperimentReport {
    pub(crate) fn new(experiment: ExperimentKind, config: Value) -> Self {
        ExperimentReport {
            experiment,
            config,
            outcome: Outcome::Pass,
            checks: Vec::new(),
            metrics: BTreeMap::new(),
            tables: BTreeMap::new(),
            artifacts: Vec::new(),
            notes: Vec::new(),
            wall_clock_ms: 0,
        }
    }

    pub(crate) fn metric(&mut self, key: &str, v: impl Serialize) {
        self.metrics
            .insert(key.to_string(), serde_json::to_value(v).expect("metric serializes"));
    }

    /// `Refuted` if an exact check failed, else `Inconclusive` if an
    /// empirical one failed, else `Pass`.
    pub fn settle(&mut self) {
        self.outcome = if self.checks.iter().any(|c| c.exact && !c.passed) {
            Outcome::Refuted
        } else if self.checks.iter().any(|c| !c.exact && !c.passed) {
            Outcome::Inconclusive
        } else {
            Outcome::Pass
        };
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    /// Writes `report.json` and one CSV per table into `dir`, each through a
    /// temporary file renamed into place.
    pub fn write_to_dir(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for (name, table) in &self.tables {
            let path = dir.join(format!("{name}.csv"));
            write_atomic(&path, table.to_csv().as_bytes())?;
            written.push(path);
        }
        let path = dir.join("report.json");
        let json = serde_json::to_vec_pretty(self).map_err(|e| LabError::Io(e.to_string()))?;
        write_atomic(&path, &json)?;
        written.push(path);
        Ok(written)
    }
}

/// Write through `<path>.tmp` and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Run-wide settings handed to each experiment.
#[derive(Debug, Clone, Copy)]
pub struct Context<'a> {
    pub seed: u64,
    pub strategy: Strategy,
    /// Directory for artifacts such as certificates.
    pub output: Option<&'a Path>,
}

impl Context<'static> {
    pub fn new(seed: u64, strategy: Strategy) -> Self {
        Context {
            seed,
            strategy,
            output: None,
        }
    }
}

/// Parse the parameters, run the experiment and, when the configuration
/// names an output directory, persist the report.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let start = Instant::now();
    let ctx = Context {
        seed: config.seed,
        strategy: config.strategy,
        output: config.output.as_deref(),
    };
    let mut report = match config.experiment {
        ExperimentKind::MainInequality => exp_main_inequality(&parse_params(&config.params)?, &ctx)?,
        ExperimentKind::SqrtRecurrence => exp_sqrt_recurrence(&parse_params(&config.params)?, &ctx)?,
        ExperimentKind::TheoremStage => exp_theorem_stage(&parse_params(&config.params)?, &ctx)?,
        ExperimentKind::Equidistribution => exp_equidistribution(&parse_params(&config.params)?, &ctx)?,
    };
    if let Value::Object(map) = &mut report.config {
        map.insert("seed".into(), config.seed.into());
        map.insert(
            "strategy".into(),
            serde_json::to_value(config.strategy).expect("strategy serializes"),
        );
        if let Some(out) = &config.output {
            map.insert("output".into(), out.display().to_string().into());
        }
    }
    report.settle();
    report.wall_clock_ms = start.elapsed().as_millis();
    if let Some(dir) = &config.output {
        report.write_to_dir(dir)?;
    }
    Ok(report)
}

pub(crate) fn echo(kind: ExperimentKind, params: &impl Serialize) -> Value {
    serde_json::json!({
        "experiment": kind,
        "params": serde_json::to_value(params).expect("params serialize"),
    })
}
