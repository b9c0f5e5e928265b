use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;

use serde_json::json;

use crate::config::BenchConfig;
use crate::stats::{MetricsSummary, Stats, QUARTILE_METHOD};
use crate::suite::{scene_seed, Record};
use crate::{BenchError, Result};

pub const RECORDS_HEADER: [&str; 9] = [
    "scenario",
    "n_ped",
    "scene_id",
    "controller",
    "steps_to_target",
    "collisions",
    "timeout",
    "solver_failures",
    "wall_time_s",
];

const METRICS: [&str; 4] = ["steps", "collisions", "timeouts", "solver_failures"];
const TABLE_METRICS: [&str; 3] = ["Steps to Target", "Collisions", "Timeouts"];
const ROW_LAYOUT: &str = "Q1 | Median | Mean | Q3";

/// Creates the output directories and checks every output file can be
/// opened for writing. Existing files are left untouched.
pub fn preflight(cfg: &BenchConfig) -> Result<()> {
    let out = &cfg.output;
    fs::create_dir_all(&out.dir).map_err(|e| BenchError::io(&out.dir, e))?;
    if cfg.trace {
        let t = out.traces_dir();
        fs::create_dir_all(&t).map_err(|e| BenchError::io(&t, e))?;
    }
    for path in [out.records_path(), out.summary_path(), out.table_path(), out.manifest_path()] {
        OpenOptions::new()
            .append(true)
            .create(true)
            .open(&path)
            .map_err(|e| BenchError::io(&path, e))?;
    }
    Ok(())
}

pub fn records_csv(records: &[Record]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(RECORDS_HEADER).map_err(csv_err)?;
    for r in records {
        w.serialize(r).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| BenchError::Records(e.to_string()))
}

pub fn read_records(path: &Path) -> Result<Vec<Record>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| BenchError::Records(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(String::from).collect();
    if header != RECORDS_HEADER {
        return Err(BenchError::Records(format!("unexpected header {:?}", header.join(","))));
    }
    rdr.deserialize()
        .map(|r| r.map_err(|e| BenchError::Records(format!("{}: {e}", path.display()))))
        .collect()
}

fn csv_err(e: csv::Error) -> BenchError {
    BenchError::Records(e.to_string())
}

fn stat_fields(s: Option<&Stats>) -> [String; 4] {
    match s {
        Some(s) => [s.q1, s.median, s.mean, s.q3].map(|v| v.to_string()),
        None => Default::default(),
    }
}

pub fn summary_csv(summaries: &[MetricsSummary]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ["scenario", "n_ped", "controller", "episodes", "timeout_count"]
        .map(String::from)
        .to_vec();
    for m in METRICS {
        for s in ["q1", "median", "mean", "q3"] {
            header.push(format!("{m}_{s}"));
        }
    }
    w.write_record(&header).map_err(csv_err)?;
    for s in summaries {
        let mut row = vec![
            s.scenario.to_string(),
            s.n_ped.to_string(),
            s.controller.clone(),
            s.episodes.to_string(),
            s.timeout_count.to_string(),
        ];
        for st in [s.steps.as_ref(), Some(&s.collisions), Some(&s.timeouts), Some(&s.solver_failures)] {
            row.extend(stat_fields(st));
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| BenchError::Records(e.to_string()))
}

/// Aligned text table, one row per group, each metric rendered as
/// "Q1 | Median | Mean | Q3".
pub fn summary_table(summaries: &[MetricsSummary]) -> String {
    let mut rows: Vec<Vec<String>> = vec![
        ["Scenario", "N", "Controller"]
            .into_iter()
            .map(String::from)
            .chain(TABLE_METRICS.iter().map(|m| format!("{m} ({ROW_LAYOUT})")))
            .collect(),
    ];
    for s in summaries {
        rows.push(vec![
            s.scenario.to_string(),
            s.n_ped.to_string(),
            s.controller.clone(),
            s.steps.map(|x| x.format_row()).unwrap_or_else(|| "-".into()),
            s.collisions.format_row(),
            s.timeouts.format_row(),
        ]);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap())
        .collect();
    let mut out = String::new();
    for (i, r) in rows.iter().enumerate() {
        let line: Vec<String> = r.iter().zip(&widths).map(|(cell, w)| format!("{cell:<w$}")).collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
    }
    out
}

pub fn manifest(cfg: &BenchConfig, record_count: usize) -> serde_json::Value {
    let cells: Vec<_> = cfg
        .scenarios
        .iter()
        .flat_map(|&kind| {
            cfg.n_ped_values().map(move |n| {
                let seeds: Vec<u64> = (0..cfg.scenes_per_cell)
                    .map(|i| scene_seed(cfg.master_seed, kind, n, i))
                    .collect();
                json!({ "scenario": kind, "n_ped": n, "seeds": seeds })
            })
        })
        .collect();
    json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "quartile_method": QUARTILE_METHOD,
        "steps_statistics": "timeouts excluded",
        "records": record_count,
        "config": cfg,
        "cells": cells,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| BenchError::io(path, e))?;
    f.write_all(bytes).map_err(|e| BenchError::io(path, e))
}

/// Writes the records CSV, summary CSV, text table and manifest.
pub fn emit(summaries: &[MetricsSummary], records: &[Record], cfg: &BenchConfig) -> Result<()> {
    let out = &cfg.output;
    fs::create_dir_all(&out.dir).map_err(|e| BenchError::io(&out.dir, e))?;
    write_file(&out.records_path(), &records_csv(records)?)?;
    write_file(&out.summary_path(), &summary_csv(summaries)?)?;
    write_file(&out.table_path(), summary_table(summaries).as_bytes())?;
    let mut m = serde_json::to_string_pretty(&manifest(cfg, records.len())).expect("manifest serialises");
    m.push('\n');
    write_file(&out.manifest_path(), m.as_bytes())
}
