//! Report structure, JSON emission and text rendering.
//!
//! The JSON layout is documented in `docs/report.schema.json`. Optional
//! sections are omitted rather than written as `null`, which lets the writer
//! treat any `null` as a non-finite number and refuse to emit it.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::Value;

use super::config::PipelineConfig;
use crate::evidence::{DirichletParams, QueryEvidence, SubjectiveOpinion};
use crate::identification::{BranchIdentification, PartitionSet};
use crate::losses::{CalibratedLabels, LossReport, Stage};
use crate::transport::TransportPlan;
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CategoryCounts {
    pub precise: usize,
    pub polysemous: usize,
    pub under_determined: usize,
}

impl From<[usize; 3]> for CategoryCounts {
    fn from(c: [usize; 3]) -> Self {
        Self {
            precise: c[0],
            polysemous: c[1],
            under_determined: c[2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchReport {
    pub evidence: Vec<QueryEvidence>,
    pub identification: BranchIdentification,
    pub counts: CategoryCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchReports {
    pub frame: BranchReport,
    pub clip: BranchReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FusedReport {
    pub categories: PartitionSet,
    pub counts: CategoryCounts,
    pub opinions: Vec<SubjectiveOpinion>,
    pub dirichlet: Vec<DirichletParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnReport {
    pub query: usize,
    pub excluded: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clip_distribution: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intra_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VideoReport {
    pub video: usize,
    pub plan: TransportPlan,
    pub columns: Vec<ColumnReport>,
    pub intra_mean: f64,
    pub all_excluded: bool,
}

/// Recall at 1, 5 and 10 in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecallReport {
    pub r1: f64,
    pub r5: f64,
    pub r10: f64,
    pub sum_r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RetrievalReport {
    pub frame: RecallReport,
    pub clip: RecallReport,
    pub overall: RecallReport,
}

/// Agreement with planted categories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecoveryReport {
    pub accuracy: f64,
    pub frame_accuracy: f64,
    pub clip_accuracy: f64,
    /// `confusion[planted][predicted]`, ordered precise, polysemous,
    /// under-determined.
    pub confusion: [[usize; 3]; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub stage: Stage,
    pub config: PipelineConfig,
    pub n_queries: usize,
    pub n_videos: usize,
    pub branches: BranchReports,
    pub fused: FusedReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibrated_labels: Option<CalibratedLabels>,
    pub transport: Vec<VideoReport>,
    pub losses: LossReport,
    /// Stage 2 only: no video produced a usable plan column.
    pub intra_all_excluded: bool,
    pub retrieval: RetrievalReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recovery: Option<RecoveryReport>,
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        to_json_finite(self, "report")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = self.to_json()?;
        std::fs::write(path, text).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Pretty formatter that fails on `null`. serde_json writes non-finite
/// floats as `null`, so this turns them into an error.
struct FiniteFormatter(PrettyFormatter<'static>);

impl Formatter for FiniteFormatter {
    fn write_null<W: ?Sized + io::Write>(&mut self, _: &mut W) -> io::Result<()> {
        Err(io::Error::other("non-finite number"))
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

/// Pretty JSON with a trailing newline; any non-finite number is an error.
pub fn to_json_finite<T: Serialize + ?Sized>(value: &T, what: &str) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FiniteFormatter(PrettyFormatter::new()));
    value
        .serialize(&mut ser)
        .map_err(|_| Error::NonFinite(what.to_string()))?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

fn field<'a>(v: &'a Value, path: &[&str]) -> Result<&'a Value> {
    path.iter().try_fold(v, |cur, key| {
        cur.get(key)
            .ok_or_else(|| Error::Input(format!("report is missing `{}`", path.join("."))))
    })
}

fn num(v: &Value, path: &[&str]) -> Result<f64> {
    field(v, path)?
        .as_f64()
        .ok_or_else(|| Error::Input(format!("`{}` is not a number", path.join("."))))
}

fn array<'a>(v: &'a Value, path: &[&str]) -> Result<&'a Vec<Value>> {
    field(v, path)?
        .as_array()
        .ok_or_else(|| Error::Input(format!("`{}` is not an array", path.join("."))))
}

/// Plain-text summary tables of a parsed report.
pub fn render_summary(report: &Value) -> Result<String> {
    let version = num(report, &["schema_version"])?;
    if version != f64::from(SCHEMA_VERSION) {
        return Err(Error::Input(format!("unsupported schema version {version}")));
    }
    let mut out = String::new();
    let w = &mut out;
    writeln!(
        w,
        "queries {}  videos {}  stage {}",
        num(report, &["n_queries"])?,
        num(report, &["n_videos"])?,
        num(report, &["stage"])?
    )
    .unwrap();

    writeln!(w, "\n{:<10} {:>8} {:>11} {:>17}", "partition", "precise", "polysemous", "under_determined").unwrap();
    for (name, path) in [
        ("frame", &["branches", "frame", "counts"][..]),
        ("clip", &["branches", "clip", "counts"][..]),
        ("fused", &["fused", "counts"][..]),
    ] {
        let c = field(report, path)?;
        writeln!(
            w,
            "{:<10} {:>8} {:>11} {:>17}",
            name,
            num(c, &["precise"])?,
            num(c, &["polysemous"])?,
            num(c, &["under_determined"])?
        )
        .unwrap();
    }

    writeln!(w, "\n{:<10} {:>8} {:>8} {:>8} {:>8}", "retrieval", "R@1", "R@5", "R@10", "SumR").unwrap();
    for name in ["frame", "clip", "overall"] {
        let r = field(report, &["retrieval", name])?;
        writeln!(
            w,
            "{:<10} {:>8.2} {:>8.2} {:>8.2} {:>8.2}",
            name,
            num(r, &["r1"])?,
            num(r, &["r5"])?,
            num(r, &["r10"])?,
            num(r, &["sum_r"])?
        )
        .unwrap();
    }

    writeln!(w, "\n{:<10} {:>12}", "loss", "value").unwrap();
    for name in ["l_sim", "l_div", "l_inter", "l_intra", "l_agg"] {
        writeln!(w, "{:<10} {:>12.6}", name, num(report, &["losses", name])?).unwrap();
    }

    let videos = array(report, &["transport"])?;
    let mut unconverged = 0;
    let mut dustbin = 0.0;
    for v in videos {
        if field(v, &["plan", "converged"])?.as_bool() != Some(true) {
            unconverged += 1;
        }
        if let Some(col) = v.pointer("/plan/dustbin/column").and_then(Value::as_array) {
            dustbin += col.iter().filter_map(Value::as_f64).sum::<f64>();
        }
    }
    writeln!(
        w,
        "\ntransport: {} videos, {} not converged, mean dustbin mass {:.4}",
        videos.len(),
        unconverged,
        if videos.is_empty() { 0.0 } else { dustbin / videos.len() as f64 }
    )
    .unwrap();

    if let Some(rec) = report.get("recovery") {
        writeln!(
            w,
            "\nrecovery: fused {:.4}  frame {:.4}  clip {:.4}",
            num(rec, &["accuracy"])?,
            num(rec, &["frame_accuracy"])?,
            num(rec, &["clip_accuracy"])?
        )
        .unwrap();
        writeln!(w, "{:<18} {:>8} {:>11} {:>17}", "planted \\ found", "precise", "polysemous", "under_determined").unwrap();
        let names = ["precise", "polysemous", "under_determined"];
        for (name, row) in names.iter().zip(array(rec, &["confusion"])?) {
            let cells: Vec<f64> = row
                .as_array()
                .map(|r| r.iter().filter_map(Value::as_f64).collect())
                .unwrap_or_default();
            if cells.len() != 3 {
                return Err(Error::Input("`recovery.confusion` must be 3x3".into()));
            }
            writeln!(w, "{:<18} {:>8} {:>11} {:>17}", name, cells[0], cells[1], cells[2]).unwrap();
        }
    }
    Ok(out)
}

/// Per-query CSV for external plotting: categories, uncertainties and the
/// inter-video loss terms.
pub fn plot_csv(report: &Value) -> Result<String> {
    let fused = array(report, &["fused", "categories"])?;
    let frame = array(report, &["branches", "frame", "evidence"])?;
    let clip = array(report, &["branches", "clip", "evidence"])?;
    let opinions = array(report, &["fused", "opinions"])?;
    let losses = array(report, &["losses", "per_query"])?;
    let n = fused.len();
    if [frame.len(), clip.len(), opinions.len(), losses.len()].iter().any(|&l| l != n) {
        return Err(Error::Input("per-query sections of the report differ in length".into()));
    }
    let mut out = String::from(
        "query,category,frame_u,clip_u,fused_u,frame_c,clip_c,frame_xi,clip_xi,loss_frame,loss_clip,loss_fused\n",
    );
    for i in 0..n {
        let cat = fused[i]
            .as_str()
            .ok_or_else(|| Error::Input(format!("category {i} is not a string")))?;
        writeln!(
            out,
            "{i},{cat},{},{},{},{},{},{},{},{},{},{}",
            num(&frame[i], &["opinion", "uncertainty"])?,
            num(&clip[i], &["opinion", "uncertainty"])?,
            num(&opinions[i], &["uncertainty"])?,
            num(&frame[i], &["consistency"])?,
            num(&clip[i], &["consistency"])?,
            num(&frame[i], &["aleatoric"])?,
            num(&clip[i], &["aleatoric"])?,
            num(&losses[i], &["frame"])?,
            num(&losses[i], &["clip"])?,
            num(&losses[i], &["fused"])?,
        )
        .unwrap();
    }
    Ok(out)
}
