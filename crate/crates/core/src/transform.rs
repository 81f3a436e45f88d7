//! Time-axis compression and per-second thinning.
//!
//! A segment spanning `span` seconds is min-max normalized onto `W` integer
//! buckets, which piles `span / W` seconds worth of events into each bucket.
//! Sampling then keeps `round(m / multiple)` of the `m` events in every
//! bucket so the per-bucket rate matches the original per-second rate.

use std::fmt;
use std::str::FromStr;

use bytes::Bytes;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::ingest::StreamSegment;

/// Event placed on the compressed time axis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScaledEvent {
    pub scale_stamp: u64,
    pub t_original: u64,
    pub payload: Bytes,
}

/// Within-bucket selection rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleMode {
    /// Keep the first `k` events of each bucket.
    Prefix,
    /// Keep events at positions `floor(j * multiple)`.
    #[default]
    Systematic,
}

impl fmt::Display for SampleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SampleMode::Prefix => "prefix",
            SampleMode::Systematic => "systematic",
        })
    }
}

impl FromStr for SampleMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prefix" => Ok(SampleMode::Prefix),
            "systematic" => Ok(SampleMode::Systematic),
            _ => Err(Error::config(format!(
                "unknown sampling mode `{s}` (expected systematic or prefix)"
            ))),
        }
    }
}

/// Exact compression factor `span / W`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Multiple(Ratio<u64>);

impl Multiple {
    pub fn new(numer: u64, denom: u64) -> Result<Self> {
        if numer == 0 || denom == 0 {
            return Err(Error::config("multiple must be a positive ratio"));
        }
        Ok(Multiple(Ratio::new(numer, denom)))
    }

    pub fn numer(&self) -> u64 {
        *self.0.numer()
    }

    pub fn denom(&self) -> u64 {
        *self.0.denom()
    }

    pub fn to_f64(&self) -> f64 {
        self.numer() as f64 / self.denom() as f64
    }

    /// `round(m / multiple)`, halves rounded up, in exact integer arithmetic.
    pub fn keep_count(&self, m: usize) -> usize {
        let (p, q) = (u128::from(self.numer()), u128::from(self.denom()));
        ((2 * m as u128 * q + p) / (2 * p)) as usize
    }

    /// `floor(j * multiple)`.
    pub fn stride_index(&self, j: usize) -> usize {
        (j as u128 * u128::from(self.numer()) / u128::from(self.denom())) as usize
    }
}

impl fmt::Display for Multiple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numer(), self.denom())
    }
}

impl FromStr for Multiple {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::config(format!("bad multiple `{s}` (expected P/Q)"));
        let (p, q) = s.split_once('/').ok_or_else(bad)?;
        Multiple::new(p.parse().map_err(|_| bad())?, q.parse().map_err(|_| bad())?)
    }
}

impl Serialize for Multiple {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Multiple {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Where a simulated stream came from and how it was made.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub segment_id: String,
    pub segment_count: u64,
    pub segment_t_min: u64,
    pub segment_t_max: u64,
    pub segment_span: u64,
    pub window: u64,
    pub mode: SampleMode,
    pub multiple: Multiple,
}

impl Provenance {
    /// True if `segment` matches the recorded source.
    pub fn matches(&self, segment: &StreamSegment) -> bool {
        self.segment_id == segment.id()
            && self.segment_count == segment.count() as u64
            && self.segment_t_min == segment.t_min()
            && self.segment_t_max == segment.t_max()
            && self.segment_span == segment.span_seconds()
    }
}

/// A compressed, thinned stream ready for replay.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimulatedStream {
    pub id: String,
    pub window: u64,
    pub multiple: Multiple,
    pub events: Vec<ScaledEvent>,
    pub provenance: Provenance,
}

/// Maps each event onto `[0, window)` with floored min-max scaling.
pub fn normalize(segment: &StreamSegment, window: u64) -> Result<Vec<ScaledEvent>> {
    normalize_with(segment, window, Execution::default())
}

pub fn normalize_with(
    segment: &StreamSegment,
    window: u64,
    exec: Execution,
) -> Result<Vec<ScaledEvent>> {
    if window == 0 {
        return Err(Error::config("time range must be at least 1 second"));
    }
    let (t_min, t_max) = (segment.t_min(), segment.t_max());
    let range = u128::from(t_max - t_min);
    let w = u128::from(window);
    Ok(exec::map_slice(exec, segment.events(), |e| {
        // exact floor((t - t_min) / (t_max - t_min) * W), t_max clamped;
        // a zero-width segment puts everything in bucket 0
        let stamp = (u128::from(e.t - t_min) * w)
            .checked_div(range)
            .map_or(0, |s| (s as u64).min(window - 1));
        ScaledEvent {
            scale_stamp: stamp,
            t_original: e.t,
            payload: e.payload.clone(),
        }
    }))
}

/// Half-open index ranges of equal-stamp runs in a bucket-ordered slice.
pub(crate) fn bucket_bounds(scaled: &[ScaledEvent]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=scaled.len() {
        if i == scaled.len() || scaled[i].scale_stamp != scaled[start].scale_stamp {
            out.push((start, i));
            start = i;
        }
    }
    out
}

/// Thins each bucket to `round(m / multiple)` events.
pub fn sample(
    scaled: &[ScaledEvent],
    multiple: Multiple,
    mode: SampleMode,
) -> Result<Vec<ScaledEvent>> {
    sample_with(scaled, multiple, mode, Execution::default())
}

pub fn sample_with(
    scaled: &[ScaledEvent],
    multiple: Multiple,
    mode: SampleMode,
    exec: Execution,
) -> Result<Vec<ScaledEvent>> {
    if multiple.numer() < multiple.denom() {
        return Err(Error::config(format!(
            "multiple {multiple} is below 1: the target time range exceeds the source span \
             and would require duplicating events; choose a range no longer than the span"
        )));
    }
    if scaled
        .windows(2)
        .any(|w| w[0].scale_stamp > w[1].scale_stamp)
    {
        return Err(Error::Invariant(
            "sampling input is not bucket-ordered".into(),
        ));
    }
    let bounds = bucket_bounds(scaled);
    let kept = exec::map_slice(exec, &bounds, |&(lo, hi)| {
        let bucket = &scaled[lo..hi];
        let k = multiple.keep_count(bucket.len());
        match mode {
            SampleMode::Prefix => bucket[..k].to_vec(),
            SampleMode::Systematic => (0..k)
                .map(|j| bucket[multiple.stride_index(j)].clone())
                .collect(),
        }
    });
    Ok(kept.into_iter().flatten().collect())
}

/// Normalizes then samples a segment into a `window`-second stream.
pub fn simulate(
    segment: &StreamSegment,
    stream_id: &str,
    window: u64,
    mode: SampleMode,
) -> Result<SimulatedStream> {
    simulate_with(segment, stream_id, window, mode, Execution::default())
}

pub fn simulate_with(
    segment: &StreamSegment,
    stream_id: &str,
    window: u64,
    mode: SampleMode,
    exec: Execution,
) -> Result<SimulatedStream> {
    if window == 0 {
        return Err(Error::config("time range must be at least 1 second"));
    }
    if window > segment.span_seconds() {
        return Err(Error::config(format!(
            "time range {window}s exceeds the segment span {}s; upsampling is not supported",
            segment.span_seconds()
        )));
    }
    let multiple = Multiple::new(segment.span_seconds(), window)?;
    let scaled = normalize_with(segment, window, exec)?;
    let events = sample_with(&scaled, multiple, mode, exec)?;
    Ok(SimulatedStream {
        id: stream_id.to_string(),
        window,
        multiple,
        events,
        provenance: Provenance {
            segment_id: segment.id().to_string(),
            segment_count: segment.count() as u64,
            segment_t_min: segment.t_min(),
            segment_t_max: segment.t_max(),
            segment_span: segment.span_seconds(),
            window,
            mode,
            multiple,
        },
    })
}
