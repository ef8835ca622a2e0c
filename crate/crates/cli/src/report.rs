//! Reports and their two output formats.

use std::io;
use std::path::{Path, PathBuf};

use kdq_core::quasiprob::ComplexJointDistribution;
use kdq_core::C64;
use serde_json::ser::Formatter;
use serde::{Deserialize, Serialize};

use crate::config::{Pair, ScenarioConfig};
use crate::error::{CliError, Result};

pub const ARTIFACT_NAME: &str = env!("CARGO_PKG_NAME");
pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    /// `|lhs - rhs| <= tolerance`
    Eq,
    /// `lhs <= rhs + tolerance`
    Le,
    /// `lhs >= rhs - tolerance`
    Ge,
}

impl Relation {
    pub fn holds(self, lhs: f64, rhs: f64, tolerance: f64) -> bool {
        match self {
            Relation::Eq => (lhs - rhs).abs() <= tolerance,
            Relation::Le => lhs <= rhs + tolerance,
            Relation::Ge => lhs >= rhs - tolerance,
        }
    }
}

/// Reals that may be non-finite are written as strings (`"NaN"`, `"inf"`, `"-inf"`).
mod real {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&v.to_string())
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub relation: Relation,
    #[serde(with = "real")]
    pub lhs: f64,
    #[serde(with = "real")]
    pub rhs: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckRecord {
    pub fn new(name: impl Into<String>, relation: Relation, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            relation,
            lhs,
            rhs,
            tolerance,
            pass: relation.holds(lhs, rhs, tolerance),
        }
    }

    pub fn eq(name: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        Self::new(name, Relation::Eq, lhs, rhs, tolerance)
    }
}

pub fn pair(c: C64) -> Pair {
    [c.re, c.im]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub nonclassicality: f64,
    pub negativity: f64,
    pub imaginarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionRecord {
    pub name: String,
    pub labels_a: Vec<String>,
    pub labels_b: Vec<String>,
    /// Row-major over `(a, b)`.
    pub values: Vec<Vec<Pair>>,
    pub marginal_a: Vec<Pair>,
    pub marginal_b: Vec<Pair>,
    pub summary: SummaryRecord,
}

impl DistributionRecord {
    pub fn from_distribution(name: impl Into<String>, rho: &ComplexJointDistribution) -> Self {
        let (da, db) = rho.dims();
        let s = rho.summary();
        Self {
            name: name.into(),
            labels_a: rho.labels_a().to_vec(),
            labels_b: rho.labels_b().to_vec(),
            values: (0..da)
                .map(|a| (0..db).map(|b| pair(rho.get(a, b))).collect())
                .collect(),
            marginal_a: rho.marginal_a().into_iter().map(pair).collect(),
            marginal_b: rho.marginal_b().into_iter().map(pair).collect(),
            summary: SummaryRecord {
                nonclassicality: s.nonclassicality,
                negativity: s.negativity,
                imaginarity: s.imaginarity,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutRecord {
    pub name: String,
    pub coupling: f64,
    pub spread: f64,
    /// Present for Monte Carlo readouts.
    pub seed: Option<u64>,
    pub samples: u64,
    pub postselection_probability: f64,
    pub mean_position_shift: f64,
    pub mean_momentum_shift: f64,
    pub standard_errors: [f64; 2],
    pub estimate: Pair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagatorRecord {
    pub name: String,
    pub dimension: usize,
    pub length: f64,
    pub mass: f64,
    pub hbar: f64,
    pub t: f64,
    pub x0: f64,
    pub p0: f64,
    /// `p(x_t | x_0, p_0)` over lattice sites.
    pub values: Vec<Pair>,
    pub kernel_width: f64,
    pub coarse_grained: Vec<f64>,
    pub classical_position: f64,
    pub argmax_position: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub name: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub scenario: String,
    /// The check or stage that was running.
    pub context: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub artifact: Artifact,
    /// The fully resolved config.
    pub scenario: ScenarioConfig,
    pub passed: bool,
    pub error: Option<ErrorRecord>,
    pub checks: Vec<CheckRecord>,
    pub distributions: Vec<DistributionRecord>,
    pub readouts: Vec<ReadoutRecord>,
    pub propagators: Vec<PropagatorRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

impl Report {
    pub fn new(scenario: ScenarioConfig) -> Self {
        Self {
            artifact: Artifact {
                name: ARTIFACT_NAME.into(),
                version: ARTIFACT_VERSION.into(),
            },
            scenario,
            passed: false,
            error: None,
            checks: Vec::new(),
            distributions: Vec::new(),
            readouts: Vec::new(),
            propagators: Vec::new(),
            timing: None,
        }
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &CheckRecord> {
        self.checks.iter().filter(|c| !c.pass)
    }

    /// The structured document without timing.
    pub fn payload(&self) -> Result<String> {
        let mut stripped = self.clone();
        stripped.timing = None;
        to_document(&stripped)
    }
}

/// Pretty JSON with every real at 17 significant digits.
struct PreciseFormatter(serde_json::ser::PrettyFormatter<'static>);

impl Formatter for PreciseFormatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_document(report: &Report) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(
        &mut out,
        PreciseFormatter(serde_json::ser::PrettyFormatter::new()),
    );
    report.serialize(&mut ser)?;
    out.push(b'\n');
    Ok(String::from_utf8(out).expect("serde_json emits UTF-8"))
}

pub fn from_document(text: &str) -> Result<Report> {
    Ok(serde_json::from_str(text)?)
}

pub const TABLE_HEADER: [&str; 7] = ["scenario", "check", "lhs", "rhs", "|lhs-rhs|", "tolerance", "pass"];

pub fn to_table(report: &Report) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TABLE_HEADER)?;
    let real = |v: f64| format!("{v:.16e}");
    for c in &report.checks {
        w.write_record([
            report.scenario.name.clone(),
            c.name.clone(),
            real(c.lhs),
            real(c.rhs),
            real((c.lhs - c.rhs).abs()),
            real(c.tolerance),
            c.pass.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io {
        path: PathBuf::from("<table>"),
        source: e.into_error(),
    })?;
    Ok(String::from_utf8(bytes).expect("csv of UTF-8 fields"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum OutputFormat {
    /// JSON document
    #[default]
    Structured,
    /// CSV of check rows
    Tabular,
    Both,
}

/// Writes the report into `dir` and returns the paths written.
pub fn emit(report: &Report, format: OutputFormat, dir: &Path) -> Result<Vec<PathBuf>> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CliError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    let stem = &report.scenario.name;
    if matches!(format, OutputFormat::Structured | OutputFormat::Both) {
        let path = dir.join(format!("{stem}.report.json"));
        std::fs::write(&path, to_document(report)?).map_err(io_err(&path))?;
        written.push(path);
    }
    if matches!(format, OutputFormat::Tabular | OutputFormat::Both) {
        let path = dir.join(format!("{stem}.checks.csv"));
        std::fs::write(&path, to_table(report)?).map_err(io_err(&path))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_report() -> Report {
        let cfg = ScenarioConfig::from_json(r#"{"name": "s", "kind": "identity-suite", "dimension": 2}"#)
            .unwrap()
            .resolved()
            .unwrap();
        let mut r = Report::new(cfg);
        r.checks.push(CheckRecord::eq("a", 0.1 + 0.2, 0.3, 1e-10));
        r.checks.push(CheckRecord::new("b", Relation::Le, f64::NAN, 1.0, 0.0));
        r.checks.push(CheckRecord::new("c", Relation::Ge, 1.0 / 3.0, f64::INFINITY, 0.0));
        r
    }

    #[test]
    fn relations() {
        assert!(Relation::Eq.holds(1.0, 1.0 + 1e-12, 1e-10));
        assert!(!Relation::Eq.holds(1.0, 1.1, 1e-10));
        assert!(Relation::Le.holds(0.5, 0.6, 0.0));
        assert!(!Relation::Le.holds(0.7, 0.6, 0.0));
        assert!(Relation::Ge.holds(0.6, 0.6 + 1e-11, 1e-10));
        assert!(!Relation::Le.holds(f64::NAN, 1.0, 0.0));
    }

    #[test]
    fn document_round_trips_bit_exactly() {
        let r = sample_report();
        let doc = to_document(&r).unwrap();
        let back = from_document(&doc).unwrap();
        assert_eq!(back.checks[0].lhs.to_bits(), r.checks[0].lhs.to_bits());
        assert!(back.checks[1].lhs.is_nan());
        assert_eq!(back.checks[2].rhs, f64::INFINITY);
        assert_eq!(back.scenario, r.scenario);
        assert!(doc.contains("3.0000000000000004e-1"));
    }

    #[test]
    fn empty_check_list_is_a_valid_document() {
        let mut r = sample_report();
        r.checks.clear();
        let doc = to_document(&r).unwrap();
        let v: serde_json::Value = serde_json::from_str(&doc).unwrap();
        assert_eq!(v["checks"], serde_json::json!([]));
        assert_eq!(from_document(&doc).unwrap(), r);
    }

    #[test]
    fn table_has_one_row_per_check() {
        let t = to_table(&sample_report()).unwrap();
        let mut rd = csv::Reader::from_reader(t.as_bytes());
        assert_eq!(rd.headers().unwrap().iter().collect::<Vec<_>>(), TABLE_HEADER);
        let rows: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 3);
        assert_eq!(&rows[0][1], "a");
        assert_eq!(&rows[0][6], "true");
        assert_eq!(&rows[1][6], "false");
    }

    #[test]
    fn payload_ignores_timing() {
        let mut a = sample_report();
        let mut b = a.clone();
        a.timing = Some(Timing { elapsed_seconds: 1.0 });
        b.timing = Some(Timing { elapsed_seconds: 2.0 });
        assert_eq!(a.payload().unwrap(), b.payload().unwrap());
        assert_ne!(to_document(&a).unwrap(), to_document(&b).unwrap());
    }
}
