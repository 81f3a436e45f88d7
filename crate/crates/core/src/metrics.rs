//! Per-second histograms, volatility statistics and fidelity reports.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::ingest::StreamSegment;
use crate::transform::SimulatedStream;

/// Events (and optionally payload bytes) per second over `range` seconds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerSecondHistogram {
    pub range: u64,
    pub counts: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bytes: Option<Vec<u64>>,
}

impl PerSecondHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Counts second indices into `range` bins.
pub fn histogram<I>(indices: I, range: u64) -> Result<PerSecondHistogram>
where
    I: IntoIterator<Item = u64>,
{
    let mut counts = vec![0u64; range as usize];
    for i in indices {
        let slot = counts
            .get_mut(i as usize)
            .filter(|_| i < range)
            .ok_or_else(|| Error::Invariant(format!("second index {i} outside [0, {range})")))?;
        *slot += 1;
    }
    Ok(PerSecondHistogram {
        range,
        counts,
        bytes: None,
    })
}

/// Seconds the original row is measured over: the declared span, widened to
/// the observed span if events fall beyond it.
pub fn original_range(segment: &StreamSegment) -> u64 {
    segment.span_seconds().max(segment.observed_span())
}

/// Histogram of an original segment at one-second resolution, offset from
/// `t_min`, with payload bytes.
pub fn segment_histogram(segment: &StreamSegment) -> Result<PerSecondHistogram> {
    segment_histogram_with(segment, Execution::default())
}

pub fn segment_histogram_with(
    segment: &StreamSegment,
    exec: Execution,
) -> Result<PerSecondHistogram> {
    let range = original_range(segment);
    let t_min = segment.t_min();
    let (counts, bytes) = exec::bin_counts(exec, segment.events(), range as usize, |e| {
        (e.t - t_min, e.payload.len() as u64)
    })
    .ok_or_else(|| Error::Invariant("segment event outside its own range".into()))?;
    Ok(PerSecondHistogram {
        range,
        counts,
        bytes: Some(bytes),
    })
}

/// Histogram of a simulated stream by `scale_stamp`, with payload bytes.
pub fn stream_histogram(stream: &SimulatedStream) -> Result<PerSecondHistogram> {
    stream_histogram_with(stream, Execution::default())
}

pub fn stream_histogram_with(
    stream: &SimulatedStream,
    exec: Execution,
) -> Result<PerSecondHistogram> {
    let (counts, bytes) = exec::bin_counts(exec, &stream.events, stream.window as usize, |e| {
        (e.scale_stamp, e.payload.len() as u64)
    })
    .ok_or_else(|| {
        Error::Invariant(format!(
            "stream `{}` has a scale_stamp outside [0, {})",
            stream.id, stream.window
        ))
    })?;
    Ok(PerSecondHistogram {
        range: stream.window,
        counts,
        bytes: Some(bytes),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolatilityStats {
    pub average: f64,
    pub variance: f64,
    pub standard_variance: f64,
}

/// Average, population variance (divisor `R`) and its square root.
pub fn volatility(hist: &PerSecondHistogram) -> Result<VolatilityStats> {
    if hist.range == 0 || hist.counts.is_empty() {
        return Err(Error::Invariant(
            "volatility needs at least one second".into(),
        ));
    }
    let r = hist.counts.len() as f64;
    let sum: u64 = hist.counts.iter().sum();
    let average = sum as f64 / r;
    let mut acc = 0.0f64;
    for &q in &hist.counts {
        let d = q as f64 - average;
        acc += d * d;
    }
    let variance = acc / r;
    Ok(VolatilityStats {
        average,
        variance,
        standard_variance: variance.sqrt(),
    })
}

/// Averages `series` into `points` contiguous blocks with boundaries
/// `floor(i * len / points)`.
pub fn block_average(series: &[f64], points: usize) -> Result<Vec<f64>> {
    let len = series.len();
    if points == 0 || points > len {
        return Err(Error::config(format!(
            "cannot block-average {len} values into {points} points"
        )));
    }
    Ok((0..points)
        .map(|i| {
            let lo = i * len / points;
            let hi = (i + 1) * len / points;
            series[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect())
}

/// Pearson correlation of two equal-length series.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::config(
            "correlation needs two non-empty series of equal length",
        ));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("series is constant"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Correlation between the original bytes-per-second series, block-averaged
/// down to the simulated range, and the simulated bytes-per-second series.
pub fn bytes_trend_correlation(orig: &PerSecondHistogram, sim: &PerSecondHistogram) -> Result<f64> {
    let series = |h: &PerSecondHistogram| -> Result<Vec<f64>> {
        h.bytes
            .as_ref()
            .map(|b| b.iter().map(|&v| v as f64).collect())
            .ok_or_else(|| Error::config("histogram carries no byte counts"))
    };
    let orig = block_average(&series(orig)?, sim.range as usize)?;
    pearson(&orig, &series(sim)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deltas {
    pub average: f64,
    pub variance: f64,
    pub standard_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OriginalRow {
    pub range: u64,
    pub count: u64,
    pub stats: VolatilityStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamRow {
    pub stream_id: String,
    pub window: u64,
    pub multiple: String,
    pub count: u64,
    pub stats: VolatilityStats,
    pub abs_delta: Deltas,
    /// `None` for a statistic whose original value is zero.
    pub rel_delta: RelDeltas,
    pub bytes_correlation: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelDeltas {
    pub average: Option<f64>,
    pub variance: Option<f64>,
    pub standard_variance: Option<f64>,
}

/// Original-versus-simulated volatility comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub segment_id: String,
    pub original: OriginalRow,
    pub streams: Vec<StreamRow>,
}

fn rel(sim: f64, orig: f64) -> Option<f64> {
    (orig != 0.0).then(|| (sim - orig).abs() / orig.abs())
}

/// Compares each stream with the segment it was derived from.
pub fn fidelity(segment: &StreamSegment, streams: &[&SimulatedStream]) -> Result<FidelityReport> {
    fidelity_with(segment, streams, Execution::default())
}

pub fn fidelity_with(
    segment: &StreamSegment,
    streams: &[&SimulatedStream],
    exec: Execution,
) -> Result<FidelityReport> {
    if let Some(s) = streams.iter().find(|s| !s.provenance.matches(segment)) {
        return Err(Error::config(format!(
            "stream `{}` was derived from `{}`, not from `{}`",
            s.id,
            s.provenance.segment_id,
            segment.id()
        )));
    }
    let orig_hist = segment_histogram_with(segment, exec)?;
    let orig = volatility(&orig_hist)?;
    let rows = exec::map_slice(exec, streams, |s| -> Result<StreamRow> {
        let hist = stream_histogram_with(s, exec)?;
        let stats = volatility(&hist)?;
        let bytes_correlation = match bytes_trend_correlation(&orig_hist, &hist) {
            Ok(r) => Some(r),
            Err(Error::UndefinedCorrelation(_)) | Err(Error::Config(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(StreamRow {
            stream_id: s.id.clone(),
            window: s.window,
            multiple: s.multiple.to_string(),
            count: s.events.len() as u64,
            stats,
            abs_delta: Deltas {
                average: (stats.average - orig.average).abs(),
                variance: (stats.variance - orig.variance).abs(),
                standard_variance: (stats.standard_variance - orig.standard_variance).abs(),
            },
            rel_delta: RelDeltas {
                average: rel(stats.average, orig.average),
                variance: rel(stats.variance, orig.variance),
                standard_variance: rel(stats.standard_variance, orig.standard_variance),
            },
            bytes_correlation,
        })
    });
    Ok(FidelityReport {
        segment_id: segment.id().to_string(),
        original: OriginalRow {
            range: orig_hist.range,
            count: segment.count() as u64,
            stats: orig,
        },
        streams: rows.into_iter().collect::<Result<_>>()?,
    })
}

/// Aligned `Time Range | Average | Variance | Standard Variance` table.
pub fn volatility_table<'a, I>(rows: I) -> String
where
    I: IntoIterator<Item = (String, &'a VolatilityStats)>,
{
    let header = ["Time Range (s)", "Average", "Variance", "Standard Variance"];
    let body: Vec<[String; 4]> = rows
        .into_iter()
        .map(|(label, s)| {
            [
                label,
                format!("{:.2}", s.average),
                format!("{:.2}", s.variance),
                format!("{:.2}", s.standard_variance),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: [&str; 4]| {
        let _ = writeln!(
            out,
            "{:<w0$} | {:>w1$} | {:>w2$} | {:>w3$}",
            cells[0],
            cells[1],
            cells[2],
            cells[3],
            w0 = widths[0],
            w1 = widths[1],
            w2 = widths[2],
            w3 = widths[3]
        );
    };
    line(&mut out, header);
    let _ = writeln!(
        out,
        "{}-+-{}-+-{}-+-{}",
        "-".repeat(widths[0]),
        "-".repeat(widths[1]),
        "-".repeat(widths[2]),
        "-".repeat(widths[3])
    );
    for row in &body {
        line(&mut out, [&row[0], &row[1], &row[2], &row[3]]);
    }
    out
}

impl FidelityReport {
    pub fn to_table(&self) -> String {
        let mut rows: Vec<(String, &VolatilityStats)> = self
            .streams
            .iter()
            .map(|r| (r.window.to_string(), &r.stats))
            .collect();
        rows.push((
            format!("original ({})", self.original.range),
            &self.original.stats,
        ));
        volatility_table(rows)
    }
}
