//! Success-curve rendering: hand-built SVG with one line per task, shaded
//! bands for whichever task was training, and mean plus or minus one
//! standard deviation envelopes for aggregate inputs.
//!
//! CSV files stay unsmoothed; the optional window-5 moving average applies
//! only here and is labeled in the legend.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::agent::EvalRecord;
use crate::error::{Error, Result};
use crate::harness::metrics::{read_aggregate_csv, read_metrics_csv, AggregateRow};

const WIDTH: f64 = 880.0;
const HEIGHT: f64 = 520.0;
const PLOT_LEFT: f64 = 70.0;
const PLOT_RIGHT: f64 = 850.0;
const PLOT_TOP: f64 = 40.0;
const PLOT_BOTTOM: f64 = 450.0;
const SMOOTH_WINDOW: usize = 5;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

fn color(task: usize) -> &'static str {
    PALETTE[task % PALETTE.len()]
}

/// One parsed curve file, already shape-checked.
#[derive(Debug, Clone)]
pub enum PlotInput {
    /// Per-seed evaluation rows; drawn as plain lines.
    Metrics(Vec<EvalRecord>),
    /// Cross-seed rows; drawn as mean lines with deviation envelopes.
    Aggregate(Vec<AggregateRow>),
}

impl PlotInput {
    fn num_tasks(&self) -> usize {
        match self {
            PlotInput::Metrics(rows) => rows.first().map_or(0, |r| r.per_task_success.len()),
            PlotInput::Aggregate(rows) => rows.first().map_or(0, |r| r.success_mean.len()),
        }
    }

    fn last_step(&self) -> u64 {
        match self {
            PlotInput::Metrics(rows) => rows.last().map_or(0, |r| r.global_step),
            PlotInput::Aggregate(rows) => rows.last().map_or(0, |r| r.global_step),
        }
    }

    /// Training-task spans as (task, start_step, end_step).
    fn bands(&self) -> Vec<(usize, u64, u64)> {
        let steps_tasks: Vec<(u64, usize)> = match self {
            PlotInput::Metrics(rows) => {
                rows.iter().map(|r| (r.global_step, r.training_task)).collect()
            }
            PlotInput::Aggregate(rows) => {
                rows.iter().map(|r| (r.global_step, r.training_task)).collect()
            }
        };
        let mut bands: Vec<(usize, u64, u64)> = Vec::new();
        let mut span_start = 0;
        for &(step, task) in &steps_tasks {
            match bands.last_mut() {
                Some((t, _, end)) if *t == task => *end = step,
                _ => {
                    bands.push((task, span_start, step));
                }
            }
            span_start = step;
        }
        bands
    }
}

/// Reads a curve file, telling per-seed and aggregate schemas apart by
/// their headers. Header-only files are an error.
pub fn load_plot_input(path: &Path) -> Result<PlotInput> {
    let text = fs::read_to_string(path)?;
    let header = text.lines().next().unwrap_or("");
    let input = if header.contains("_mean") {
        PlotInput::Aggregate(read_aggregate_csv(path)?)
    } else {
        PlotInput::Metrics(read_metrics_csv(path)?)
    };
    if input.num_tasks() == 0 {
        return Err(Error::NoDataRows);
    }
    Ok(input)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PlotOptions {
    /// Apply a window-5 trailing moving average, labeled in the legend.
    pub smooth: bool,
}

/// Trailing moving average; early points average what exists so far.
fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    values
        .iter()
        .enumerate()
        .map(|(i, _)| {
            let lo = (i + 1).saturating_sub(window);
            let slice = &values[lo..=i];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect()
}

struct Frame {
    max_step: f64,
}

impl Frame {
    fn x(&self, step: f64) -> f64 {
        PLOT_LEFT + (step / self.max_step) * (PLOT_RIGHT - PLOT_LEFT)
    }

    fn y(&self, value: f64) -> f64 {
        PLOT_BOTTOM - value.clamp(0.0, 1.0) * (PLOT_BOTTOM - PLOT_TOP)
    }
}

fn polyline(frame: &Frame, steps: &[u64], values: &[f64]) -> String {
    let mut d = String::new();
    for (i, (&s, &v)) in steps.iter().zip(values).enumerate() {
        let cmd = if i == 0 { 'M' } else { 'L' };
        let _ = write!(d, "{cmd}{:.2},{:.2} ", frame.x(s as f64), frame.y(v));
    }
    d.trim_end().to_string()
}

/// Closed band between `upper` and `lower`, traversed out and back.
fn envelope(frame: &Frame, steps: &[u64], upper: &[f64], lower: &[f64]) -> String {
    let mut d = String::new();
    for (i, (&s, &v)) in steps.iter().zip(upper).enumerate() {
        let cmd = if i == 0 { 'M' } else { 'L' };
        let _ = write!(d, "{cmd}{:.2},{:.2} ", frame.x(s as f64), frame.y(v));
    }
    for i in (0..steps.len()).rev() {
        let _ = write!(
            d,
            "L{:.2},{:.2} ",
            frame.x(steps[i] as f64),
            frame.y(lower[i])
        );
    }
    d.push('Z');
    d
}

/// Renders parsed inputs to a standalone SVG document. Every input must
/// describe the same number of tasks; bands come from the first input.
pub fn render_curves(inputs: &[PlotInput], opts: &PlotOptions) -> Result<String> {
    let first = inputs.first().ok_or(Error::NoDataRows)?;
    let num_tasks = first.num_tasks();
    if num_tasks == 0 {
        return Err(Error::NoDataRows);
    }
    for input in inputs {
        if input.num_tasks() != num_tasks {
            return Err(Error::CsvSchema(format!(
                "inputs disagree on task count: {} vs {num_tasks}",
                input.num_tasks()
            )));
        }
    }
    let max_step = inputs.iter().map(PlotInput::last_step).max().unwrap_or(0);
    let frame = Frame {
        max_step: (max_step as f64).max(1.0),
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
         font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(
        svg,
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>"
    );

    // Training-task bands behind everything else.
    for (task, start, end) in first.bands() {
        let x = frame.x(start as f64);
        let w = frame.x(end as f64) - x;
        let _ = writeln!(
            svg,
            "<rect x=\"{x:.2}\" y=\"{PLOT_TOP}\" width=\"{w:.2}\" \
             height=\"{:.2}\" fill=\"{}\" fill-opacity=\"0.08\"/>",
            PLOT_BOTTOM - PLOT_TOP,
            color(task)
        );
    }

    // Axes and gridlines.
    for i in 0..=4 {
        let v = i as f64 / 4.0;
        let y = frame.y(v);
        let _ = writeln!(
            svg,
            "<line x1=\"{PLOT_LEFT}\" y1=\"{y:.2}\" x2=\"{PLOT_RIGHT}\" y2=\"{y:.2}\" \
             stroke=\"#dddddd\" stroke-width=\"1\"/>"
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{v:.2}</text>",
            PLOT_LEFT - 8.0,
            y + 4.0
        );
    }
    for i in 0..=4 {
        let step = frame.max_step * i as f64 / 4.0;
        let x = frame.x(step);
        let _ = writeln!(
            svg,
            "<text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
            PLOT_BOTTOM + 18.0,
            step.round() as u64
        );
    }
    let _ = writeln!(
        svg,
        "<rect x=\"{PLOT_LEFT}\" y=\"{PLOT_TOP}\" width=\"{:.2}\" height=\"{:.2}\" \
         fill=\"none\" stroke=\"#333333\" stroke-width=\"1\"/>",
        PLOT_RIGHT - PLOT_LEFT,
        PLOT_BOTTOM - PLOT_TOP
    );
    let _ = writeln!(
        svg,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">environment step</text>",
        (PLOT_LEFT + PLOT_RIGHT) / 2.0,
        PLOT_BOTTOM + 40.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"18\" y=\"{:.2}\" text-anchor=\"middle\" \
         transform=\"rotate(-90 18 {:.2})\">success rate</text>",
        (PLOT_TOP + PLOT_BOTTOM) / 2.0,
        (PLOT_TOP + PLOT_BOTTOM) / 2.0
    );

    // Envelopes under their mean lines, then every line.
    for input in inputs {
        if let PlotInput::Aggregate(rows) = input {
            let steps: Vec<u64> = rows.iter().map(|r| r.global_step).collect();
            for task in 0..num_tasks {
                let mut mean: Vec<f64> = rows.iter().map(|r| r.success_mean[task]).collect();
                let mut std: Vec<f64> = rows.iter().map(|r| r.success_std[task]).collect();
                if opts.smooth {
                    mean = moving_average(&mean, SMOOTH_WINDOW);
                    std = moving_average(&std, SMOOTH_WINDOW);
                }
                let upper: Vec<f64> = mean.iter().zip(&std).map(|(m, s)| m + s).collect();
                let lower: Vec<f64> = mean.iter().zip(&std).map(|(m, s)| m - s).collect();
                let _ = writeln!(
                    svg,
                    "<path d=\"{}\" fill=\"{}\" fill-opacity=\"0.15\" stroke=\"none\"/>",
                    envelope(&frame, &steps, &upper, &lower),
                    color(task)
                );
            }
        }
    }
    for input in inputs {
        let (steps, series, width): (Vec<u64>, Vec<Vec<f64>>, f64) = match input {
            PlotInput::Metrics(rows) => (
                rows.iter().map(|r| r.global_step).collect(),
                (0..num_tasks)
                    .map(|t| rows.iter().map(|r| r.per_task_success[t]).collect())
                    .collect(),
                1.4,
            ),
            PlotInput::Aggregate(rows) => (
                rows.iter().map(|r| r.global_step).collect(),
                (0..num_tasks)
                    .map(|t| rows.iter().map(|r| r.success_mean[t]).collect())
                    .collect(),
                2.2,
            ),
        };
        for (task, values) in series.iter().enumerate() {
            let drawn = if opts.smooth {
                moving_average(values, SMOOTH_WINDOW)
            } else {
                values.clone()
            };
            let _ = writeln!(
                svg,
                "<path d=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"{width}\"/>",
                polyline(&frame, &steps, &drawn),
                color(task)
            );
        }
    }

    // Legend along the top edge.
    for task in 0..num_tasks {
        let x = PLOT_LEFT + task as f64 * 130.0;
        let label = if opts.smooth {
            format!("task {task} (MA-{SMOOTH_WINDOW})")
        } else {
            format!("task {task}")
        };
        let _ = writeln!(
            svg,
            "<line x1=\"{x:.2}\" y1=\"20\" x2=\"{:.2}\" y2=\"20\" stroke=\"{}\" \
             stroke-width=\"3\"/>",
            x + 24.0,
            color(task)
        );
        let _ = writeln!(svg, "<text x=\"{:.2}\" y=\"24\">{label}</text>", x + 30.0);
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Loads curve files and writes the rendered SVG to `out`.
pub fn plot_curves(paths: &[std::path::PathBuf], opts: &PlotOptions, out: &Path) -> Result<()> {
    let inputs = paths
        .iter()
        .map(|p| load_plot_input(p))
        .collect::<Result<Vec<_>>>()?;
    let svg = render_curves(&inputs, opts)?;
    fs::write(out, svg)?;
    Ok(())
}
