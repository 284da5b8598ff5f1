//! Instance directories of headered CSV files.
//!
//! ```text
//! <dir>/sim_frame.csv           header video_0..video_{K-1}; one row per query
//! <dir>/sim_clip.csv            same layout as sim_frame.csv
//! <dir>/labels.csv              header `label`; one video index per query
//! <dir>/clip_query/video_<v>.csv  header q<i>..; one row per clip   (optional)
//! <dir>/query_embeddings.csv    header d_0..d_{D-1}; one row per query   (optional)
//! <dir>/planted.csv             header `category`; one per query   (optional)
//! ```
//!
//! Numbers are written with Rust's shortest round-trip formatting, so
//! write → read → write reproduces the files byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::instance::{ClipQueryMatrix, Instance};
use crate::identification::QueryCategory;
use crate::matrix::Matrix;
use crate::{Error, Result};

pub const SIM_FRAME: &str = "sim_frame.csv";
pub const SIM_CLIP: &str = "sim_clip.csv";
pub const LABELS: &str = "labels.csv";
pub const CLIP_QUERY_DIR: &str = "clip_query";
pub const EMBEDDINGS: &str = "query_embeddings.csv";
pub const PLANTED: &str = "planted.csv";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// A parsed CSV table: header fields and data rows with their line numbers.
struct Table {
    header: Vec<String>,
    rows: Vec<(u64, Vec<String>)>,
}

fn read_table(path: &Path) -> Result<Table> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect::<Vec<_>>();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(parse_err(path, 1, "missing header"));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(parse_err(
                path,
                line,
                format!(
                    "data row {} has {} fields but the header has {}",
                    rows.len(),
                    record.len(),
                    header.len()
                ),
            ));
        }
        rows.push((line, record.iter().map(str::to_owned).collect()));
    }
    Ok(Table { header, rows })
}

fn parse_f64(path: &Path, line: u64, field: &str) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| parse_err(path, line, format!("invalid number {field:?}")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, format!("non-finite number {field:?}")));
    }
    Ok(v)
}

fn read_matrix(path: &Path) -> Result<(Vec<String>, Matrix)> {
    let table = read_table(path)?;
    let mut data = Vec::with_capacity(table.rows.len() * table.header.len());
    for (line, fields) in &table.rows {
        for f in fields {
            data.push(parse_f64(path, *line, f)?);
        }
    }
    let m = Matrix::from_vec(table.rows.len(), table.header.len(), data)?;
    Ok((table.header, m))
}

fn format_matrix(header: &[String], m: &Matrix) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in m.iter_rows() {
        let mut first = true;
        for v in row {
            if !first {
                out.push(',');
            }
            first = false;
            write!(out, "{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(io_err(path))
}

fn indexed_header(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn clip_query_path(dir: &Path, video: usize) -> PathBuf {
    dir.join(CLIP_QUERY_DIR).join(format!("video_{video}.csv"))
}

/// Writes `inst` into `dir`, creating it if needed.
pub fn write_instance(inst: &Instance, dir: &Path) -> Result<()> {
    inst.validate()?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let header = indexed_header("video_", inst.n_videos());
    write_file(&dir.join(SIM_FRAME), &format_matrix(&header, &inst.s_f))?;
    write_file(&dir.join(SIM_CLIP), &format_matrix(&header, &inst.s_c))?;

    let mut labels = String::from("label\n");
    for l in &inst.labels {
        writeln!(labels, "{l}").unwrap();
    }
    write_file(&dir.join(LABELS), &labels)?;

    if !inst.clip_query.is_empty() {
        let sub = dir.join(CLIP_QUERY_DIR);
        fs::create_dir_all(&sub).map_err(io_err(&sub))?;
        for (&v, cq) in &inst.clip_query {
            let header: Vec<String> = cq.queries.iter().map(|q| format!("q{q}")).collect();
            write_file(&clip_query_path(dir, v), &format_matrix(&header, &cq.scores))?;
        }
    }
    if let Some(e) = &inst.query_embeddings {
        let m = Matrix::from_rows(e.clone())?;
        write_file(&dir.join(EMBEDDINGS), &format_matrix(&indexed_header("d_", m.cols()), &m))?;
    }
    if let Some(p) = &inst.planted {
        let mut out = String::from("category\n");
        for c in p {
            writeln!(out, "{}", c.as_str()).unwrap();
        }
        write_file(&dir.join(PLANTED), &out)?;
    }
    Ok(())
}

fn read_single_column(path: &Path, column: &str) -> Result<Vec<(u64, String)>> {
    let table = read_table(path)?;
    if table.header != [column] {
        return Err(parse_err(path, 1, format!("expected a single `{column}` column")));
    }
    Ok(table
        .rows
        .into_iter()
        .map(|(line, mut f)| (line, f.remove(0)))
        .collect())
}

/// Reads an instance directory written by [`write_instance`].
pub fn read_instance(dir: &Path) -> Result<Instance> {
    let frame_path = dir.join(SIM_FRAME);
    let (_, s_f) = read_matrix(&frame_path)?;
    let (_, s_c) = read_matrix(&dir.join(SIM_CLIP))?;

    let label_path = dir.join(LABELS);
    let labels = read_single_column(&label_path, "label")?
        .into_iter()
        .map(|(line, f)| {
            f.parse::<usize>()
                .map_err(|_| parse_err(&label_path, line, format!("invalid label {f:?}")))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut clip_query = BTreeMap::new();
    let sub = dir.join(CLIP_QUERY_DIR);
    if sub.is_dir() {
        let mut entries = Vec::new();
        for entry in fs::read_dir(&sub).map_err(io_err(&sub))? {
            let path = entry.map_err(io_err(&sub))?.path();
            let video = path
                .file_name()
                .and_then(|n| n.to_str())
                .and_then(|n| n.strip_prefix("video_"))
                .and_then(|n| n.strip_suffix(".csv"))
                .and_then(|n| n.parse::<usize>().ok());
            if let Some(v) = video {
                entries.push((v, path));
            }
        }
        for (v, path) in entries {
            let (header, scores) = read_matrix(&path)?;
            let queries = header
                .iter()
                .map(|h| {
                    h.strip_prefix('q')
                        .and_then(|q| q.parse::<usize>().ok())
                        .ok_or_else(|| parse_err(&path, 1, format!("bad query column {h:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            clip_query.insert(v, ClipQueryMatrix { queries, scores });
        }
    }

    let emb_path = dir.join(EMBEDDINGS);
    let query_embeddings = if emb_path.is_file() {
        Some(read_matrix(&emb_path)?.1.to_rows())
    } else {
        None
    };

    let planted_path = dir.join(PLANTED);
    let planted = if planted_path.is_file() {
        Some(
            read_single_column(&planted_path, "category")?
                .into_iter()
                .map(|(line, f)| {
                    QueryCategory::parse(&f)
                        .ok_or_else(|| parse_err(&planted_path, line, format!("unknown category {f:?}")))
                })
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };

    let inst = Instance {
        s_f,
        s_c,
        labels,
        clip_query,
        query_embeddings,
        planted,
    };
    inst.validate()?;
    Ok(inst)
}

/// Per-query label rows as CSV with a `video_<j>` header.
pub fn format_label_rows(rows: &[Vec<f64>]) -> Result<String> {
    let m = Matrix::from_rows(rows.to_vec())?;
    Ok(format_matrix(&indexed_header("video_", m.cols()), &m))
}

pub fn write_label_rows(path: &Path, rows: &[Vec<f64>]) -> Result<()> {
    write_file(path, &format_label_rows(rows)?)
}
