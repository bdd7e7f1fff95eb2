//! Metrics files and derived statistics: per-seed evaluation CSVs, the
//! cross-seed aggregate, error traces, buffer composition tables, and the
//! retention score.
//!
//! CSV values are written at six significant digits; curves are never
//! smoothed on disk.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::agent::{EvalRecord, TdPoint};
use crate::error::{Error, Result};

/// Formats one value at six significant digits.
fn sig6(x: f64) -> String {
    format!("{x:.5e}")
}

/// Header for a per-seed metrics file with `num_tasks` tasks.
pub fn metrics_header(num_tasks: usize) -> String {
    let mut h = String::from("global_step,training_task");
    for t in 0..num_tasks {
        let _ = write!(h, ",success_task_{t}");
    }
    for t in 0..num_tasks {
        let _ = write!(h, ",return_task_{t}");
    }
    h.push_str(",max_td_error,loss_ma");
    h
}

/// Renders evaluation records as CSV text, one row per record.
pub fn metrics_csv(records: &[EvalRecord]) -> Result<String> {
    let num_tasks = records
        .first()
        .map(|r| r.per_task_success.len())
        .ok_or(Error::NoDataRows)?;
    let mut out = metrics_header(num_tasks);
    out.push('\n');
    for r in records {
        if r.per_task_success.len() != num_tasks || r.per_task_mean_return.len() != num_tasks {
            return Err(Error::LengthMismatch {
                left: r.per_task_success.len(),
                right: num_tasks,
            });
        }
        let _ = write!(out, "{},{}", r.global_step, r.training_task);
        for v in &r.per_task_success {
            let _ = write!(out, ",{}", sig6(*v));
        }
        for v in &r.per_task_mean_return {
            let _ = write!(out, ",{}", sig6(*v));
        }
        let _ = writeln!(out, ",{},{}", sig6(r.max_td_error_seen), sig6(r.loss_ma));
    }
    Ok(out)
}

pub fn write_metrics_csv(records: &[EvalRecord], path: &Path) -> Result<()> {
    fs::write(path, metrics_csv(records)?)?;
    Ok(())
}

/// Number of tasks a metrics header describes, or an error naming the first
/// deviation from the expected schema.
pub fn parse_metrics_header(header: &str) -> Result<usize> {
    let cols: Vec<&str> = header.trim_end().split(',').collect();
    let num_tasks = cols
        .iter()
        .filter(|c| c.starts_with("success_task_"))
        .count();
    let expected = metrics_header(num_tasks);
    if header.trim_end() != expected {
        return Err(Error::CsvSchema(format!(
            "expected header {expected:?}, got {header:?}"
        )));
    }
    if num_tasks == 0 {
        return Err(Error::CsvSchema("no success_task_ columns".into()));
    }
    Ok(num_tasks)
}

fn parse_f64(field: &str, line: usize) -> Result<f64> {
    field
        .parse()
        .map_err(|_| Error::CsvSchema(format!("line {line}: bad number {field:?}")))
}

/// Parses a per-seed metrics file. Header-only files yield an empty list.
pub fn read_metrics_csv(path: &Path) -> Result<Vec<EvalRecord>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::CsvSchema("empty file".into()))?;
    let num_tasks = parse_metrics_header(header)?;
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let expected = 2 * num_tasks + 4;
        if fields.len() != expected {
            return Err(Error::CsvSchema(format!(
                "line {line_no}: expected {expected} fields, got {}",
                fields.len()
            )));
        }
        let global_step = fields[0]
            .parse()
            .map_err(|_| Error::CsvSchema(format!("line {line_no}: bad step {:?}", fields[0])))?;
        let training_task = fields[1]
            .parse()
            .map_err(|_| Error::CsvSchema(format!("line {line_no}: bad task {:?}", fields[1])))?;
        let mut values = fields[2..]
            .iter()
            .map(|f| parse_f64(f, line_no))
            .collect::<Result<Vec<f64>>>()?
            .into_iter();
        records.push(EvalRecord {
            global_step,
            training_task,
            per_task_success: values.by_ref().take(num_tasks).collect(),
            per_task_mean_return: values.by_ref().take(num_tasks).collect(),
            max_td_error_seen: values.next().expect("field count checked"),
            loss_ma: values.next().expect("field count checked"),
        });
    }
    Ok(records)
}

/// Renders an error trace as CSV.
pub fn td_trace_csv(trace: &[TdPoint]) -> String {
    let mut out = String::from("global_step,interval_max,running_max\n");
    for p in trace {
        let _ = writeln!(
            out,
            "{},{},{}",
            p.global_step,
            sig6(p.interval_max),
            sig6(p.running_max)
        );
    }
    out
}

pub fn write_td_trace_csv(trace: &[TdPoint], path: &Path) -> Result<()> {
    fs::write(path, td_trace_csv(trace))?;
    Ok(())
}

/// Mean and population standard deviation of aligned evaluation runs.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub global_step: u64,
    pub training_task: usize,
    pub success_mean: Vec<f64>,
    pub success_std: Vec<f64>,
    pub return_mean: Vec<f64>,
    pub return_std: Vec<f64>,
    pub max_td_mean: f64,
    pub max_td_std: f64,
    pub loss_mean: f64,
    pub loss_std: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Aligns per-seed records row by row and reduces each column to mean and
/// standard deviation. Every run must share the evaluation schedule.
pub fn aggregate_records(per_seed: &[Vec<EvalRecord>]) -> Result<Vec<AggregateRow>> {
    let first = per_seed.first().ok_or(Error::NoExperiences)?;
    if first.is_empty() {
        return Err(Error::NoDataRows);
    }
    let num_tasks = first[0].per_task_success.len();
    for run in per_seed {
        if run.len() != first.len() {
            return Err(Error::LengthMismatch {
                left: run.len(),
                right: first.len(),
            });
        }
    }
    let mut rows = Vec::with_capacity(first.len());
    for i in 0..first.len() {
        let step = first[i].global_step;
        let task = first[i].training_task;
        for run in per_seed {
            if run[i].global_step != step || run[i].training_task != task {
                return Err(Error::CsvSchema(format!(
                    "row {i}: evaluation schedules diverge across seeds"
                )));
            }
            if run[i].per_task_success.len() != num_tasks {
                return Err(Error::LengthMismatch {
                    left: run[i].per_task_success.len(),
                    right: num_tasks,
                });
            }
        }
        let column = |f: &dyn Fn(&EvalRecord) -> f64| -> (f64, f64) {
            let values: Vec<f64> = per_seed.iter().map(|run| f(&run[i])).collect();
            mean_std(&values)
        };
        let mut row = AggregateRow {
            global_step: step,
            training_task: task,
            success_mean: Vec::with_capacity(num_tasks),
            success_std: Vec::with_capacity(num_tasks),
            return_mean: Vec::with_capacity(num_tasks),
            return_std: Vec::with_capacity(num_tasks),
            max_td_mean: 0.0,
            max_td_std: 0.0,
            loss_mean: 0.0,
            loss_std: 0.0,
        };
        for t in 0..num_tasks {
            let (m, s) = column(&|r: &EvalRecord| r.per_task_success[t]);
            row.success_mean.push(m);
            row.success_std.push(s);
            let (m, s) = column(&|r: &EvalRecord| r.per_task_mean_return[t]);
            row.return_mean.push(m);
            row.return_std.push(s);
        }
        (row.max_td_mean, row.max_td_std) = column(&|r: &EvalRecord| r.max_td_error_seen);
        (row.loss_mean, row.loss_std) = column(&|r: &EvalRecord| r.loss_ma);
        rows.push(row);
    }
    Ok(rows)
}

/// Header for an aggregate file with `num_tasks` tasks.
pub fn aggregate_header(num_tasks: usize) -> String {
    let mut h = String::from("global_step,training_task");
    for t in 0..num_tasks {
        let _ = write!(h, ",success_task_{t}_mean,success_task_{t}_std");
    }
    for t in 0..num_tasks {
        let _ = write!(h, ",return_task_{t}_mean,return_task_{t}_std");
    }
    h.push_str(",max_td_error_mean,max_td_error_std,loss_ma_mean,loss_ma_std");
    h
}

/// Renders aggregate rows as CSV.
pub fn aggregate_csv(rows: &[AggregateRow]) -> Result<String> {
    let num_tasks = rows
        .first()
        .map(|r| r.success_mean.len())
        .ok_or(Error::NoDataRows)?;
    let mut out = aggregate_header(num_tasks);
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{},{}", r.global_step, r.training_task);
        for t in 0..num_tasks {
            let _ = write!(out, ",{},{}", sig6(r.success_mean[t]), sig6(r.success_std[t]));
        }
        for t in 0..num_tasks {
            let _ = write!(out, ",{},{}", sig6(r.return_mean[t]), sig6(r.return_std[t]));
        }
        let _ = writeln!(
            out,
            ",{},{},{},{}",
            sig6(r.max_td_mean),
            sig6(r.max_td_std),
            sig6(r.loss_mean),
            sig6(r.loss_std)
        );
    }
    Ok(out)
}

pub fn write_aggregate_csv(rows: &[AggregateRow], path: &Path) -> Result<()> {
    fs::write(path, aggregate_csv(rows)?)?;
    Ok(())
}

/// Number of tasks an aggregate header describes.
pub fn parse_aggregate_header(header: &str) -> Result<usize> {
    let num_tasks = header
        .trim_end()
        .split(',')
        .filter(|c| c.starts_with("success_task_") && c.ends_with("_mean"))
        .count();
    let expected = aggregate_header(num_tasks);
    if header.trim_end() != expected {
        return Err(Error::CsvSchema(format!(
            "expected header {expected:?}, got {header:?}"
        )));
    }
    Ok(num_tasks)
}

/// Parses an aggregate file. Header-only files yield an empty list.
pub fn read_aggregate_csv(path: &Path) -> Result<Vec<AggregateRow>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::CsvSchema("empty file".into()))?;
    let num_tasks = parse_aggregate_header(header)?;
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let expected = 2 + 4 * num_tasks + 4;
        if fields.len() != expected {
            return Err(Error::CsvSchema(format!(
                "line {line_no}: expected {expected} fields, got {}",
                fields.len()
            )));
        }
        let global_step = fields[0]
            .parse()
            .map_err(|_| Error::CsvSchema(format!("line {line_no}: bad step {:?}", fields[0])))?;
        let training_task = fields[1]
            .parse()
            .map_err(|_| Error::CsvSchema(format!("line {line_no}: bad task {:?}", fields[1])))?;
        let mut values = fields[2..]
            .iter()
            .map(|f| parse_f64(f, line_no))
            .collect::<Result<Vec<f64>>>()?
            .into_iter();
        let mut row = AggregateRow {
            global_step,
            training_task,
            success_mean: Vec::with_capacity(num_tasks),
            success_std: Vec::with_capacity(num_tasks),
            return_mean: Vec::with_capacity(num_tasks),
            return_std: Vec::with_capacity(num_tasks),
            max_td_mean: 0.0,
            max_td_std: 0.0,
            loss_mean: 0.0,
            loss_std: 0.0,
        };
        for _ in 0..num_tasks {
            row.success_mean.push(values.next().expect("checked"));
            row.success_std.push(values.next().expect("checked"));
        }
        for _ in 0..num_tasks {
            row.return_mean.push(values.next().expect("checked"));
            row.return_std.push(values.next().expect("checked"));
        }
        row.max_td_mean = values.next().expect("checked");
        row.max_td_std = values.next().expect("checked");
        row.loss_mean = values.next().expect("checked");
        row.loss_std = values.next().expect("checked");
        rows.push(row);
    }
    Ok(rows)
}

/// Per-task retention: final success divided by the peak success observed
/// while that task was the one training. A task that never rose above zero
/// during its own training has nothing to forget and scores 1; backward
/// transfer past the peak clamps to 1.
pub fn forgetting_score(records: &[EvalRecord]) -> Vec<f64> {
    let Some(last) = records.last() else {
        return Vec::new();
    };
    let num_tasks = last.per_task_success.len();
    (0..num_tasks)
        .map(|task| {
            let peak = records
                .iter()
                .filter(|r| r.training_task == task)
                .map(|r| r.per_task_success[task])
                .fold(0.0, f64::max);
            if peak <= 0.0 {
                1.0
            } else {
                (last.per_task_success[task] / peak).clamp(0.0, 1.0)
            }
        })
        .collect()
}

/// Final per-task buffer occupancy for one seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompositionRow {
    pub seed: u64,
    pub task: usize,
    pub episodic: usize,
    pub fifo: usize,
}

/// Flattens per-seed composition maps into rows covering `num_tasks` tasks.
pub fn composition_rows(
    num_tasks: usize,
    per_seed: &[(u64, BTreeMap<usize, usize>, BTreeMap<usize, usize>)],
) -> Vec<CompositionRow> {
    let mut rows = Vec::new();
    for (seed, episodic, fifo) in per_seed {
        for task in 0..num_tasks {
            rows.push(CompositionRow {
                seed: *seed,
                task,
                episodic: *episodic.get(&task).unwrap_or(&0),
                fifo: *fifo.get(&task).unwrap_or(&0),
            });
        }
    }
    rows
}

/// Renders the end-of-run composition table as CSV.
pub fn composition_csv(rows: &[CompositionRow]) -> String {
    let mut out = String::from("seed,task,episodic_count,fifo_count\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.seed, r.task, r.episodic, r.fifo);
    }
    out
}

pub fn write_composition_csv(rows: &[CompositionRow], path: &Path) -> Result<()> {
    fs::write(path, composition_csv(rows))?;
    Ok(())
}
