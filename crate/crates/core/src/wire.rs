//! Delimited wire format for monitor responses and setpoint bodies.
//!
//! A snapshot body is one `value~quality~timestamp` group per tag in handle
//! order, groups joined by `;` with no trailing separator. Timestamps are
//! ISO-8601 UTC with milliseconds; values use Rust's shortest round-trip
//! float rendering, so parsing a formatted body restores every value
//! bit-for-bit.

use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;
use thiserror::Error;

use crate::hub::{Handle, Sequence, Snapshot};

pub const ITEM_SEPARATOR: char = ';';
pub const FIELD_SEPARATOR: char = '~';

pub const SETPOINT_RANGE_MESSAGE: &str = "Invalid value!Check setpoints values";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WireFormat {
    #[default]
    Delimited,
    Json,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireSnapshot {
    pub body: String,
    /// Echoed to clients in the `X-Seq` header.
    pub sequence: Sequence,
}

/// The client-visible fields of one tag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WireItem {
    pub value: f64,
    pub quality: u16,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("empty snapshot body")]
    Empty,
    #[error("item {index}: expected 3 `~`-separated fields, found {found}")]
    FieldCount { index: usize, found: usize },
    #[error("item {index}: bad value {text:?}")]
    Value { index: usize, text: String },
    #[error("item {index}: bad quality {text:?}")]
    Quality { index: usize, text: String },
    #[error("item {index}: bad timestamp {text:?}")]
    Timestamp { index: usize, text: String },
}

pub fn format_timestamp(at: DateTime<Utc>) -> String {
    at.to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub fn format_snapshot(snapshot: &Snapshot) -> WireSnapshot {
    let mut body = String::with_capacity(snapshot.items.len() * 40);
    for (i, item) in snapshot.items.iter().enumerate() {
        if i > 0 {
            body.push(ITEM_SEPARATOR);
        }
        body.push_str(&format!(
            "{}{FIELD_SEPARATOR}{}{FIELD_SEPARATOR}{}",
            item.value,
            item.quality,
            format_timestamp(item.timestamp)
        ));
    }
    WireSnapshot {
        body,
        sequence: snapshot.sequence,
    }
}

pub fn parse_snapshot(body: &str) -> Result<Vec<WireItem>, WireError> {
    if body.is_empty() {
        return Err(WireError::Empty);
    }
    body.split(ITEM_SEPARATOR)
        .enumerate()
        .map(|(index, group)| {
            let fields: Vec<&str> = group.split(FIELD_SEPARATOR).collect();
            let [value, quality, timestamp] = fields[..] else {
                return Err(WireError::FieldCount {
                    index,
                    found: fields.len(),
                });
            };
            Ok(WireItem {
                value: value.parse().map_err(|_| WireError::Value {
                    index,
                    text: value.to_owned(),
                })?,
                quality: quality.parse().map_err(|_| WireError::Quality {
                    index,
                    text: quality.to_owned(),
                })?,
                timestamp: DateTime::parse_from_rfc3339(timestamp)
                    .map_err(|_| WireError::Timestamp {
                        index,
                        text: timestamp.to_owned(),
                    })?
                    .with_timezone(&Utc),
            })
        })
        .collect()
}

#[derive(Serialize)]
struct JsonItem<'a> {
    handle: Handle,
    name: &'a str,
    value: f64,
    quality: u16,
    timestamp: String,
}

#[derive(Serialize)]
struct JsonSnapshot<'a> {
    sequence: Sequence,
    items: Vec<JsonItem<'a>>,
}

/// JSON rendering offered to the HMI behind a config flag.
pub fn format_snapshot_json(snapshot: &Snapshot) -> String {
    let doc = JsonSnapshot {
        sequence: snapshot.sequence,
        items: snapshot
            .items
            .iter()
            .map(|t| JsonItem {
                handle: t.handle,
                name: &t.name,
                value: t.value,
                quality: t.quality,
                timestamp: format_timestamp(t.timestamp),
            })
            .collect(),
    };
    serde_json::to_string(&doc).expect("snapshot serializes")
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SetpointError {
    #[error("setpoint {index} is empty")]
    EmptyField { index: usize },
    #[error("setpoint {index} is not a number: {text:?}")]
    NotNumeric { index: usize, text: String },
    #[error("expected {expected} setpoints, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("{SETPOINT_RANGE_MESSAGE}")]
    OutOfRange { index: usize, value: f64 },
}

impl SetpointError {
    /// HTTP status the gateway answers with.
    pub fn status(&self) -> u16 {
        match self {
            SetpointError::OutOfRange { .. } => 422,
            _ => 400,
        }
    }
}

/// Splits a `v1;v2;...` body into finite numbers, trimming whitespace
/// around each field.
pub fn parse_setpoint_values(body: &str) -> Result<Vec<f64>, SetpointError> {
    body.split(ITEM_SEPARATOR)
        .enumerate()
        .map(|(index, field)| {
            let text = field.trim();
            if text.is_empty() {
                return Err(SetpointError::EmptyField { index });
            }
            match text.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(SetpointError::NotNumeric {
                    index,
                    text: text.to_owned(),
                }),
            }
        })
        .collect()
}

/// Exclusive bounds: a value must satisfy `low < v < high`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpenRange {
    pub low: f64,
    pub high: f64,
}

impl OpenRange {
    pub fn contains(&self, v: f64) -> bool {
        v > self.low && v < self.high
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SetpointTargets {
    pub handles: Vec<Handle>,
    pub ranges: Vec<OpenRange>,
}

impl SetpointTargets {
    /// Same range for every target handle.
    pub fn uniform(handles: Vec<Handle>, range: OpenRange) -> Self {
        let ranges = vec![range; handles.len()];
        Self { handles, ranges }
    }
}

impl Default for SetpointTargets {
    fn default() -> Self {
        let handles = (4..=6).filter_map(Handle::new).collect();
        Self::uniform(handles, OpenRange { low: 0.0, high: 100.0 })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SetpointCommand {
    pub values: Vec<f64>,
    pub target_handles: Vec<Handle>,
}

pub fn parse_setpoints(body: &str, targets: &SetpointTargets) -> Result<SetpointCommand, SetpointError> {
    let values = parse_setpoint_values(body)?;
    if values.len() != targets.handles.len() {
        return Err(SetpointError::Arity {
            expected: targets.handles.len(),
            got: values.len(),
        });
    }
    for (index, (&value, range)) in values.iter().zip(&targets.ranges).enumerate() {
        if !range.contains(value) {
            return Err(SetpointError::OutOfRange { index, value });
        }
    }
    Ok(SetpointCommand {
        values,
        target_handles: targets.handles.clone(),
    })
}
