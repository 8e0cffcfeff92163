use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{sim_label, Metrics, RunSpec};

/// One run. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub strategy: String,
    pub sim: String,
    pub change_rate_per_min: f64,
    pub duration_s: f64,
    pub time_scale: f64,
    pub clients: usize,
    pub requests: u64,
    pub heartbeats: u64,
    pub responses_with_data: u64,
    pub payload_bytes: u64,
    pub changes_produced: u64,
    pub changes_delivered: u64,
    pub changes_missed: u64,
    pub inter_arrival_samples: usize,
    pub mean_inter_arrival_ms: Option<f64>,
    pub min_inter_arrival_ms: Option<f64>,
    pub max_inter_arrival_ms: Option<f64>,
    pub mean_latency_ms: Option<f64>,
    pub max_latency_ms: Option<f64>,
    pub mean_hold_ms: Option<f64>,
    pub mean_change_interval_ms: Option<f64>,
}

pub const CSV_COLUMNS: &[&str] = &[
    "strategy",
    "sim",
    "change_rate_per_min",
    "duration_s",
    "time_scale",
    "clients",
    "requests",
    "heartbeats",
    "responses_with_data",
    "payload_bytes",
    "changes_produced",
    "changes_delivered",
    "changes_missed",
    "inter_arrival_samples",
    "mean_inter_arrival_ms",
    "min_inter_arrival_ms",
    "max_inter_arrival_ms",
    "mean_latency_ms",
    "max_latency_ms",
    "mean_hold_ms",
    "mean_change_interval_ms",
];

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1000.0
}

impl ReportRow {
    pub fn from_run(spec: &RunSpec, m: &Metrics) -> Self {
        Self {
            strategy: spec.strategy.label(),
            sim: sim_label(spec.sim.as_ref()),
            change_rate_per_min: spec.change_rate_per_min(),
            duration_s: spec.duration.as_secs_f64(),
            time_scale: spec.time_scale,
            clients: spec.clients,
            requests: m.requests,
            heartbeats: m.heartbeats,
            responses_with_data: m.responses_with_data,
            payload_bytes: m.payload_bytes,
            changes_produced: m.changes_produced,
            changes_delivered: m.changes_delivered,
            changes_missed: m.changes_missed,
            inter_arrival_samples: m.inter_arrival.len(),
            mean_inter_arrival_ms: m.mean_inter_arrival().map(ms),
            min_inter_arrival_ms: m.inter_arrival.iter().min().copied().map(ms),
            max_inter_arrival_ms: m.inter_arrival.iter().max().copied().map(ms),
            mean_latency_ms: m.mean_latency().map(ms),
            max_latency_ms: m.latencies.iter().max().copied().map(ms),
            mean_hold_ms: m.mean_hold_time.map(ms),
            mean_change_interval_ms: m.mean_change_interval().map(ms),
        }
    }

    /// Mean hold time times the nominal change rate; 1 at steady state.
    pub fn hold_times_rate(&self) -> Option<f64> {
        let z = self.change_rate_per_min / 60.0;
        self.mean_hold_ms.filter(|_| z > 0.0).map(|h| h / 1000.0 * z)
    }

    fn strategy_rank(&self) -> u8 {
        if self.strategy.starts_with("fixed") {
            0
        } else {
            1
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    rows: Vec<ReportRow>,
}

impl Report {
    /// Rows are kept sorted by strategy, then change rate.
    pub fn new(mut rows: Vec<ReportRow>) -> Self {
        rows.sort_by(|a, b| {
            a.strategy_rank()
                .cmp(&b.strategy_rank())
                .then_with(|| a.strategy.cmp(&b.strategy))
                .then_with(|| a.change_rate_per_min.total_cmp(&b.change_rate_per_min))
                .then_with(|| a.sim.cmp(&b.sim))
                .then_with(|| a.clients.cmp(&b.clients))
        });
        Self { rows }
    }

    pub fn rows(&self) -> &[ReportRow] {
        &self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        w.write_record(CSV_COLUMNS)?;
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn from_csv<R: io::Read>(input: R) -> csv::Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let rows = r.deserialize().collect::<csv::Result<Vec<ReportRow>>>()?;
        Ok(Self::new(rows))
    }

    /// Every metric family, one table each.
    pub fn render_text(&self) -> String {
        Family::ALL
            .iter()
            .map(|f| format!("{}\n{}", f.title(), self.render_family(*f)))
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn render_family(&self, family: Family) -> String {
        let columns = family.columns();
        let widths: Vec<usize> = columns.iter().map(|c| c.len().max(MIN_WIDTH)).collect();
        let mut out = String::new();
        let header: Vec<String> = columns
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect();
        let _ = writeln!(out, "{}", header.join("  "));
        for row in &self.rows {
            let cells: Vec<String> = family
                .cells(row)
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect();
            let _ = writeln!(out, "{}", cells.join("  "));
        }
        out
    }
}

const MIN_WIDTH: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Requests,
    Payload,
    InterArrival,
    Latency,
    Misses,
    Hold,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_owned(), |v| format!("{v:.1}"))
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Requests,
        Family::Payload,
        Family::InterArrival,
        Family::Latency,
        Family::Misses,
        Family::Hold,
    ];

    pub fn title(self) -> &'static str {
        match self {
            Family::Requests => "requests",
            Family::Payload => "payload bytes",
            Family::InterArrival => "request inter-arrival (ms)",
            Family::Latency => "change latency (ms)",
            Family::Misses => "changes produced / delivered / missed",
            Family::Hold => "server hold time",
        }
    }

    fn columns(self) -> &'static [&'static str] {
        match self {
            Family::Requests => &["strategy", "sim", "rate/min", "requests", "heartbeats"],
            Family::Payload => &["strategy", "sim", "rate/min", "responses", "bytes"],
            Family::InterArrival => &["strategy", "sim", "samples", "mean", "min", "max", "change_mean"],
            Family::Latency => &["strategy", "sim", "mean", "max", "delivered", "missed"],
            Family::Misses => &["strategy", "sim", "rate/min", "produced", "delivered", "missed"],
            Family::Hold => &["strategy", "sim", "rate/min", "hold_ms", "hold*Z"],
        }
    }

    fn cells(self, r: &ReportRow) -> Vec<String> {
        let mut cells = vec![r.strategy.clone(), r.sim.clone()];
        let rate = format!("{:.1}", r.change_rate_per_min);
        match self {
            Family::Requests => cells.extend([rate, r.requests.to_string(), r.heartbeats.to_string()]),
            Family::Payload => cells.extend([rate, r.responses_with_data.to_string(), r.payload_bytes.to_string()]),
            Family::InterArrival => cells.extend([
                r.inter_arrival_samples.to_string(),
                opt(r.mean_inter_arrival_ms),
                opt(r.min_inter_arrival_ms),
                opt(r.max_inter_arrival_ms),
                opt(r.mean_change_interval_ms),
            ]),
            Family::Latency => cells.extend([
                opt(r.mean_latency_ms),
                opt(r.max_latency_ms),
                r.changes_delivered.to_string(),
                r.changes_missed.to_string(),
            ]),
            Family::Misses => cells.extend([
                rate,
                r.changes_produced.to_string(),
                r.changes_delivered.to_string(),
                r.changes_missed.to_string(),
            ]),
            Family::Hold => cells.extend([rate, opt(r.mean_hold_ms), r.hold_times_rate().map_or("-".into(), |v| format!("{v:.3}"))]),
        }
        cells
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmitFormat {
    Text,
    Csv,
}

impl std::str::FromStr for EmitFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(EmitFormat::Text),
            "csv" => Ok(EmitFormat::Csv),
            _ => Err(format!("unknown format {s:?}; use text or csv")),
        }
    }
}

pub fn emit(report: &Report, path: &Path, format: EmitFormat) -> io::Result<()> {
    let body = match format {
        EmitFormat::Text => report.render_text(),
        EmitFormat::Csv => report.to_csv(),
    };
    fs::write(path, body)
}

/// A report shown through one metric family.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteTable {
    pub title: String,
    pub family: Family,
    pub report: Report,
}

impl SuiteTable {
    pub fn new(title: impl Into<String>, family: Family, report: Report) -> Self {
        Self {
            title: title.into(),
            family,
            report,
        }
    }

    pub fn render(&self) -> String {
        format!("{}\n{}", self.title, self.report.render_family(self.family))
    }
}
