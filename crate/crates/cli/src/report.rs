//! Per-pair evaluation tables and their CSV/JSON emission.

use std::fmt;
use std::io::Write;
use std::path::Path;

use ccpl_core::cross_channel::nmcc_loss;
use ccpl_core::features::{feature_distillation_loss, FeatureExtractor, ToyExtractor};
use ccpl_core::metrics::{pcc, psnr, ssim, Psnr};
use ccpl_core::perception::dual_perception_loss;
use ccpl_core::{CcplConfig, RgbImage};
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::error::{io_at, Result};
use crate::imageio::read_rgb_png;
use crate::manifest::{PairEntry, PairManifest};

pub const REPORT_COLUMNS: [&str; 10] = [
    "L_H", "L_D", "L_dual", "L_fd", "R_g", "R_r", "L_cross", "psnr", "ssim", "pcc",
];
pub const EVAL_COLUMNS: [&str; 3] = ["psnr", "ssim", "pcc"];

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Psnr(Psnr),
    Empty,
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Num(v) => write!(f, "{v}"),
            Cell::Psnr(p) => write!(f, "{p}"),
            Cell::Empty => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TableRow {
    pub id: String,
    pub cells: Vec<Cell>,
    pub errors: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<TableRow>,
}

impl Table {
    pub fn failed(&self) -> usize {
        self.rows.iter().filter(|r| !r.errors.is_empty()).count()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["identifier"];
        header.extend(&self.columns);
        header.push("errors");
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![row.id.clone()];
            rec.extend(row.cells.iter().map(Cell::to_string));
            rec.push(row.errors.join("; "));
            w.write_record(&rec)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
    }

    /// Per-column mean over the rows that have a value. A PSNR column
    /// containing an infinite entry averages to "inf".
    pub fn means(&self) -> Map<String, Value> {
        let mut means = Map::new();
        for (i, name) in self.columns.iter().enumerate() {
            let (mut sum, mut n, mut infinite) = (0.0, 0usize, false);
            for row in &self.rows {
                match row.cells[i] {
                    Cell::Num(v) | Cell::Psnr(Psnr::Finite(v)) => {
                        sum += v;
                        n += 1;
                    }
                    Cell::Psnr(Psnr::Infinite) => infinite = true,
                    Cell::Empty => {}
                }
            }
            let v = if infinite {
                json!("inf")
            } else if n == 0 {
                Value::Null
            } else {
                json!(sum / n as f64)
            };
            means.insert((*name).to_string(), v);
        }
        means
    }

    pub fn summary(&self, cfg: &CcplConfig) -> Value {
        let errors: Vec<Value> = self
            .rows
            .iter()
            .filter(|r| !r.errors.is_empty())
            .map(|r| json!({ "identifier": r.id, "errors": r.errors }))
            .collect();
        json!({
            "pairs": self.rows.len(),
            "failed": self.failed(),
            "means": self.means(),
            "errors": errors,
            "config": cfg,
        })
    }
}

/// Which groups of report columns to compute; skipped groups stay empty.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Selection {
    pub dual: bool,
    pub fd: bool,
    pub nmcc: bool,
    pub metrics: bool,
}

impl Default for Selection {
    fn default() -> Self {
        Self {
            dual: true,
            fd: true,
            nmcc: true,
            metrics: true,
        }
    }
}

fn load_pair(entry: &PairEntry) -> Result<(RgbImage, RgbImage)> {
    Ok((read_rgb_png(&entry.gen)?, read_rgb_png(&entry.real)?))
}

fn record<T>(
    errors: &mut Vec<String>,
    label: &str,
    r: ccpl_core::Result<T>,
) -> Option<T> {
    r.map_err(|e| errors.push(format!("{label}: {e}"))).ok()
}

fn num(v: Option<f64>) -> Cell {
    v.map_or(Cell::Empty, Cell::Num)
}

fn metric_cells(gen: &RgbImage, real: &RgbImage, errors: &mut Vec<String>) -> [Cell; 3] {
    [
        record(errors, "psnr", psnr(gen, real)).map_or(Cell::Empty, Cell::Psnr),
        num(record(errors, "ssim", ssim(gen, real))),
        num(record(errors, "pcc", pcc(gen, real))),
    ]
}

pub fn report_row(entry: &PairEntry, cfg: &CcplConfig, sel: Selection) -> TableRow {
    let mut cells = vec![Cell::Empty; REPORT_COLUMNS.len()];
    let mut errors = Vec::new();
    let (gen, real) = match load_pair(entry) {
        Ok(p) => p,
        Err(e) => {
            return TableRow {
                id: entry.id.clone(),
                cells,
                errors: vec![e.to_string()],
            }
        }
    };
    let (m, i0) = (&cfg.stain_matrix, cfg.reference_intensity);

    if sel.dual {
        let r = dual_perception_loss(&gen, &real, &cfg.dcp, &cfg.fod_h, &cfg.fod_d, m, i0);
        if let Some(b) = record(&mut errors, "L_dual", r) {
            cells[0..3].copy_from_slice(&[Cell::Num(b.l_h), Cell::Num(b.l_d), Cell::Num(b.l_dual)]);
        }
    }
    if sel.fd {
        let r = ToyExtractor
            .extract(&gen)
            .and_then(|g| feature_distillation_loss(&g, &ToyExtractor.extract(&real)?, &cfg.fd));
        cells[3] = num(record(&mut errors, "L_fd", r).map(|b| b.l_fd));
    }
    if sel.nmcc {
        let r = nmcc_loss(&gen, &real, &ToyExtractor, m, &cfg.nmcc, i0);
        if let Some(b) = record(&mut errors, "L_cross", r) {
            cells[4..7].copy_from_slice(&[Cell::Num(b.r_g), Cell::Num(b.r_r), Cell::Num(b.l_cross)]);
        }
    }
    if sel.metrics {
        cells[7..10].copy_from_slice(&metric_cells(&gen, &real, &mut errors));
    }
    TableRow {
        id: entry.id.clone(),
        cells,
        errors,
    }
}

pub fn eval_row(entry: &PairEntry) -> TableRow {
    let mut errors = Vec::new();
    let cells = match load_pair(entry) {
        Ok((gen, real)) => metric_cells(&gen, &real, &mut errors).to_vec(),
        Err(e) => {
            errors.push(e.to_string());
            vec![Cell::Empty; EVAL_COLUMNS.len()]
        }
    };
    TableRow {
        id: entry.id.clone(),
        cells,
        errors,
    }
}

/// Evaluates every pair on a pool of `workers` threads. Rows come back in
/// manifest order.
pub fn run_rows(
    manifest: &PairManifest,
    workers: usize,
    row: impl Fn(&PairEntry) -> TableRow + Sync,
) -> Result<Vec<TableRow>> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
    Ok(pool.install(|| manifest.entries().par_iter().map(&row).collect()))
}

pub fn run_report(manifest: &PairManifest, cfg: &CcplConfig, sel: Selection) -> Result<Table> {
    Ok(Table {
        columns: REPORT_COLUMNS.to_vec(),
        rows: run_rows(manifest, cfg.workers, |e| report_row(e, cfg, sel))?,
    })
}

pub fn run_eval(manifest: &PairManifest, workers: usize) -> Result<Table> {
    Ok(Table {
        columns: EVAL_COLUMNS.to_vec(),
        rows: run_rows(manifest, workers, eval_row)?,
    })
}

pub fn write_outputs(table: &Table, summary: &Value, csv_path: &Path, json_path: &Path) -> Result<()> {
    std::fs::write(csv_path, table.csv_string()?).map_err(io_at(csv_path))?;
    let mut text = serde_json::to_string_pretty(summary)?;
    text.push('\n');
    std::fs::write(json_path, text).map_err(io_at(json_path))?;
    Ok(())
}
