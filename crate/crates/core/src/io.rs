//! Point files, plan files and JSON reports.
//!
//! Point files are CSV with a header: coordinate columns `x0, x1, …`, an
//! optional `weight` column and an optional integer `label` column. Reports
//! are JSON objects `{command, config, results, version}`; floats are
//! written in their shortest exactly round-tripping form. Every file is
//! written to a temporary sibling first and renamed into place.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::applications::{ComparativeVerdict, DaReport};
use crate::clustering::{ClusterAssignment, ClusterScores};
use crate::distribution::DiscreteDistribution;
use crate::error::{Error, Result};
use crate::fitting::{FitMetrics, FitResult};
use crate::mode_count::ModeSweepReport;
use crate::nw::NwResult;
use crate::ot::TransportPlan;

/// Version stamped into every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Weight sums further than this from 1 are renormalized with a warning.
pub const WEIGHT_SUM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct PointsFile {
    pub data: DiscreteDistribution,
    pub labels: Option<Vec<usize>>,
    /// Set when the weight column had to be rescaled to sum to one.
    pub renormalized: bool,
}

enum Column {
    Coord,
    Weight,
    Label,
}

pub fn read_points(path: impl AsRef<Path>) -> Result<PointsFile> {
    read_points_from(File::open(path)?)
}

pub fn read_points_from(reader: impl Read) -> Result<PointsFile> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::EmptyDataset);
    }
    let mut columns = Vec::with_capacity(headers.len());
    let mut dim = 0;
    for h in headers.iter() {
        columns.push(match h {
            "weight" => Column::Weight,
            "label" => Column::Label,
            _ if h == format!("x{dim}") => {
                dim += 1;
                Column::Coord
            }
            _ => return Err(Error::Format(format!("unexpected column `{h}`"))),
        });
    }
    if dim == 0 {
        return Err(Error::Format("no coordinate columns x0, x1, …".into()));
    }
    let has_weight = headers.iter().any(|h| h == "weight");
    let has_label = headers.iter().any(|h| h == "label");
    let (mut coords, mut weights, mut labels) = (Vec::new(), Vec::new(), Vec::new());
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let line = row + 2;
        for (field, column) in record.iter().zip(&columns) {
            let bad = |what: &str| Error::Format(format!("line {line}: invalid {what} `{field}`"));
            match column {
                Column::Coord => coords.push(field.parse::<f64>().map_err(|_| bad("coordinate"))?),
                Column::Weight => weights.push(field.parse::<f64>().map_err(|_| bad("weight"))?),
                Column::Label => labels.push(field.parse::<usize>().map_err(|_| bad("label"))?),
            }
        }
    }
    let n = coords.len() / dim;
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut renormalized = false;
    let weights = if has_weight {
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidWeights(format!("weight {w} is not a finite nonnegative number")));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidWeights("weights sum to zero".into()));
        }
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            renormalized = true;
        }
        weights.iter().map(|w| w / total).collect()
    } else {
        vec![1.0 / n as f64; n]
    };
    let data = DiscreteDistribution::from_flat(dim, coords, weights)?;
    Ok(PointsFile { data, labels: has_label.then_some(labels), renormalized })
}

/// Writes `data` with a `weight` column when the weights are not uniform
/// and a `label` column when labels are given.
pub fn write_points(path: impl AsRef<Path>, data: &DiscreteDistribution, labels: Option<&[usize]>) -> Result<()> {
    if let Some(l) = labels {
        if l.len() != data.len() {
            return Err(Error::LengthMismatch(l.len(), data.len()));
        }
    }
    let uniform = 1.0 / data.len() as f64;
    let with_weight = data.weights().iter().any(|&w| w != uniform);
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (0..data.dim()).map(|a| format!("x{a}")).collect();
    if with_weight {
        header.push("weight".into());
    }
    if labels.is_some() {
        header.push("label".into());
    }
    wtr.write_record(&header)?;
    for (i, p) in data.points().enumerate() {
        let mut record: Vec<String> = p.iter().map(|v| v.to_string()).collect();
        if with_weight {
            record.push(data.weights()[i].to_string());
        }
        if let Some(l) = labels {
            record.push(l[i].to_string());
        }
        wtr.write_record(&record)?;
    }
    write_atomic(path, &finish_csv(wtr)?)
}

/// Writes the nonzero entries of a plan as `source,target,mass` rows.
pub fn write_plan(path: impl AsRef<Path>, plan: &TransportPlan) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["source", "target", "mass"])?;
    for &(i, j, f) in plan.entries() {
        wtr.write_record([i.to_string(), j.to_string(), f.to_string()])?;
    }
    write_atomic(path, &finish_csv(wtr)?)
}

/// Writes `k,nw,first_diff` rows for plotting a sweep.
pub fn write_sweep_csv(path: impl AsRef<Path>, report: &ModeSweepReport) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["k", "nw", "first_diff"])?;
    for ((k, v), d) in report.ks.iter().zip(&report.nw_values).zip(&report.first_diffs) {
        wtr.write_record([k.to_string(), v.to_string(), d.map_or(String::new(), |d| d.to_string())])?;
    }
    write_atomic(path, &finish_csv(wtr)?)
}

/// Writes `label,distance` rows of a cluster assignment.
pub fn write_assignment(path: impl AsRef<Path>, assignment: &ClusterAssignment) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["label", "distance"])?;
    for (l, d) in assignment.labels.iter().zip(&assignment.distances) {
        wtr.write_record([l.to_string(), d.to_string()])?;
    }
    write_atomic(path, &finish_csv(wtr)?)
}

fn finish_csv(wtr: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    wtr.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Writes `bytes` to a temporary file next to `path` and renames it.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Invariants a stored result must satisfy when it is loaded again.
pub trait Validate {
    fn validate(&self) -> Result<()>;
}

impl Validate for NwResult {
    fn validate(&self) -> Result<()> {
        NwResult::validate(self)
    }
}

impl Validate for ModeSweepReport {
    fn validate(&self) -> Result<()> {
        ModeSweepReport::validate(self)
    }
}

impl Validate for ComparativeVerdict {
    fn validate(&self) -> Result<()> {
        ComparativeVerdict::validate(self)
    }
}

impl Validate for DaReport {
    fn validate(&self) -> Result<()> {
        DaReport::validate(self)
    }
}

/// Results of a fit, with metrics when reference labels were available.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub lambda_reg: f64,
    pub fit: FitResult,
    pub metrics: Option<FitMetrics>,
}

impl Validate for FitReport {
    fn validate(&self) -> Result<()> {
        self.fit.validate(self.lambda_reg)
    }
}

/// Results of clustering: the fit and, with reference labels, the scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub lambda_reg: f64,
    pub fit: FitResult,
    pub cluster_sizes: Vec<usize>,
    pub scores: Option<ClusterScores>,
}

impl Validate for ClusterReport {
    fn validate(&self) -> Result<()> {
        if self.cluster_sizes.len() != self.fit.model.k() {
            return Err(Error::LengthMismatch(self.cluster_sizes.len(), self.fit.model.k()));
        }
        if let Some(s) = &self.scores {
            let unit = 0.0..=1.0;
            if !(unit.contains(&s.purity) && unit.contains(&s.nmi) && (-1.0..=1.0).contains(&s.ari)) {
                return Err(Error::Format("cluster scores out of range".into()));
            }
        }
        self.fit.validate(self.lambda_reg)
    }
}

/// Result of a plain transport computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WassersteinReport {
    pub value: f64,
    pub plan: TransportPlan,
}

impl Validate for WassersteinReport {
    fn validate(&self) -> Result<()> {
        if (self.plan.objective() - self.value).abs() > 1e-9 * (1.0 + self.value.abs()) {
            return Err(Error::Format("value differs from the plan objective".into()));
        }
        self.plan.check_marginals()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report<C, R> {
    pub command: String,
    pub config: C,
    pub results: R,
    pub version: String,
}

impl<C, R> Report<C, R> {
    pub fn new(command: &str, config: C, results: R) -> Self {
        Self { command: command.to_string(), config, results, version: VERSION.to_string() }
    }
}

pub fn write_report<C: Serialize, R: Serialize>(path: impl AsRef<Path>, report: &Report<C, R>) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(report)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Loads a report and re-checks the invariants of its results.
pub fn read_report<C: DeserializeOwned, R: DeserializeOwned + Validate>(path: impl AsRef<Path>) -> Result<Report<C, R>> {
    let report: Report<C, R> = serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?;
    report.results.validate()?;
    Ok(report)
}
