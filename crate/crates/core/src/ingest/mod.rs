//! Raw log ingestion: delimited records in, ordered UTC segments out.

mod synthetic;
mod time;

use std::io::{BufRead, Write};

use bytes::Bytes;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};

pub use synthetic::{
    generate_synthetic, generate_synthetic_with, SyntheticParams, SYNTHETIC_EPOCH,
};
pub use time::{
    parse_time, parse_tz_offset, DatePattern, FieldSelector, TimeError, TimeFieldSpec, TimeFormat,
    MAX_TZ_OFFSET_MINUTES,
};

/// One stream tuple: the original record and its UTC second.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub t: u64,
    pub payload: Bytes,
}

impl Event {
    pub fn new(t: u64, payload: impl Into<Bytes>) -> Self {
        Event {
            t,
            payload: payload.into(),
        }
    }
}

/// A bounded, chronologically ordered run of events.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamSegment {
    id: String,
    events: Vec<Event>,
    t_min: u64,
    t_max: u64,
    span_seconds: u64,
}

impl StreamSegment {
    /// Builds a segment, stably sorting `events` by time.
    ///
    /// `declared_span` defaults to the observed `t_max - t_min + 1`. An
    /// empty event list yields `t_min = t_max = 0`.
    pub fn new(
        id: impl Into<String>,
        events: Vec<Event>,
        declared_span: Option<u64>,
    ) -> Result<Self> {
        Self::new_with(id, events, declared_span, Execution::default())
    }

    pub fn new_with(
        id: impl Into<String>,
        mut events: Vec<Event>,
        declared_span: Option<u64>,
        exec: Execution,
    ) -> Result<Self> {
        if events.iter().any(|e| e.payload.contains(&b'\n')) {
            return Err(Error::config("event payload contains a newline"));
        }
        exec::stable_sort_by_key(exec, &mut events, |e| e.t);
        Self::from_sorted(id.into(), events, declared_span)
    }

    pub(crate) fn from_sorted(
        id: String,
        events: Vec<Event>,
        declared_span: Option<u64>,
    ) -> Result<Self> {
        debug_assert!(events.windows(2).all(|w| w[0].t <= w[1].t));
        let (t_min, t_max) = match (events.first(), events.last()) {
            (Some(a), Some(b)) => (a.t, b.t),
            _ => (0, 0),
        };
        let span_seconds = match declared_span {
            Some(0) => return Err(Error::config("declared span must be at least 1 second")),
            Some(s) => s,
            None => t_max - t_min + 1,
        };
        Ok(StreamSegment {
            id,
            events,
            t_min,
            t_max,
            span_seconds,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    pub fn t_min(&self) -> u64 {
        self.t_min
    }

    pub fn t_max(&self) -> u64 {
        self.t_max
    }

    pub fn count(&self) -> usize {
        self.events.len()
    }

    pub fn span_seconds(&self) -> u64 {
        self.span_seconds
    }

    /// Seconds actually covered by events, `t_max - t_min + 1`.
    pub fn observed_span(&self) -> u64 {
        self.t_max - self.t_min + 1
    }
}

/// Record layout of a delimited input file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub delimiter: u8,
    pub has_header: bool,
    pub time: TimeFieldSpec,
}

impl Schema {
    pub fn new(delimiter: u8, has_header: bool, time: TimeFieldSpec) -> Result<Self> {
        if delimiter == b'\n' || delimiter == b'\r' {
            return Err(Error::config("delimiter cannot be a line terminator"));
        }
        if matches!(time.field, FieldSelector::Name(_)) && !has_header {
            return Err(Error::config(
                "selecting the time field by name requires a header row",
            ));
        }
        Ok(Schema {
            delimiter,
            has_header,
            time,
        })
    }
}

#[derive(Debug)]
pub struct IngestOutcome {
    pub segment: StreamSegment,
    /// Records that produced an event.
    pub parsed: u64,
    /// Records copied to the rejects sink.
    pub rejected: u64,
}

/// Reads newline-delimited records, extracts the time field and returns a
/// stably sorted segment.
///
/// Lines that fail to parse are copied verbatim to `rejects` (one per line)
/// and counted; they never abort the run. The header row, when present, is
/// not counted as an input line.
pub fn ingest<R, W>(
    id: &str,
    mut source: R,
    schema: &Schema,
    declared_span: Option<u64>,
    rejects: &mut W,
) -> Result<IngestOutcome>
where
    R: BufRead,
    W: Write,
{
    if declared_span == Some(0) {
        return Err(Error::config("declared span must be at least 1 second"));
    }
    let mut buf = Vec::new();
    let mut line_no = 0u64;

    let column = match &schema.time.field {
        FieldSelector::Index(i) => {
            if schema.has_header {
                read_record(&mut source, &mut buf)?;
                line_no += 1;
            }
            *i
        }
        FieldSelector::Name(name) => {
            if !read_record(&mut source, &mut buf)? {
                return Err(Error::EmptyInput { rejected: 0 });
            }
            line_no += 1;
            buf.split(|&b| b == schema.delimiter)
                .position(|f| f == name.as_bytes())
                .ok_or_else(|| Error::config(format!("header has no column named `{name}`")))?
        }
    };

    let mut events = Vec::new();
    let mut rejected = 0u64;
    while read_record(&mut source, &mut buf)? {
        line_no += 1;
        let field = buf.split(|&b| b == schema.delimiter).nth(column);
        let parsed = match field.map(std::str::from_utf8) {
            Some(Ok(text)) => parse_time(text, &schema.time)
                .map_err(|e| e.into_error(line_no, &schema.time.field)),
            Some(Err(_)) => Err(Error::Parse {
                line: line_no,
                field: schema.time.field.to_string(),
                reason: "field is not valid UTF-8".into(),
            }),
            None => Err(Error::Parse {
                line: line_no,
                field: schema.time.field.to_string(),
                reason: format!("record has no column {column}"),
            }),
        };
        match parsed {
            Ok(t) => events.push(Event::new(t, Bytes::copy_from_slice(&buf))),
            Err(e) => {
                log::debug!("rejected: {e}");
                rejects.write_all(&buf)?;
                rejects.write_all(b"\n")?;
                rejected += 1;
            }
        }
    }
    rejects.flush()?;
    if events.is_empty() {
        return Err(Error::EmptyInput { rejected });
    }
    if rejected > 0 {
        log::warn!("{id}: {rejected} record(s) rejected");
    }
    let parsed = events.len() as u64;
    let segment = StreamSegment::new(id, events, declared_span)?;
    Ok(IngestOutcome {
        segment,
        parsed,
        rejected,
    })
}

/// Reads one record without its terminator. Returns false at end of input.
fn read_record<R: BufRead>(source: &mut R, buf: &mut Vec<u8>) -> Result<bool> {
    buf.clear();
    if source.read_until(b'\n', buf)? == 0 {
        return Ok(false);
    }
    if buf.last() == Some(&b'\n') {
        buf.pop();
    }
    if buf.last() == Some(&b'\r') {
        buf.pop();
    }
    Ok(true)
}
