//! Exit criteria. Each test prints one `[PASS]`/`[FAIL]` line and then
//! asserts. Run with `--nocapture` to see the lines:
//!
//! ```text
//! cargo test -p chronoflow-core --test acceptance -- --nocapture
//! ```

use std::io::{BufRead, BufReader};
use std::net::TcpListener;
use std::sync::{Mutex, OnceLock};
use std::thread;

use bytes::Bytes;
use chronoflow::ingest::{generate_synthetic, Event, SyntheticParams};
use chronoflow::metrics::{
    bytes_trend_correlation, fidelity, segment_histogram, stream_histogram, volatility,
    PerSecondHistogram,
};
use chronoflow::replay::{self, open_sink, Buckets, Sink, Status, SystemClock};
use chronoflow::store::{encode_stream_data, SegmentOrigin, Store};
use chronoflow::transform::{normalize, simulate, simulate_with};
use chronoflow::{Error, Execution, SampleMode, StreamSegment};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Tolerances.
const C1_WINDOWS: [u64; 6] = [600, 1200, 1800, 2400, 3000, 3600];
const C1_AVERAGE_REL: f64 = 0.05;
const C1_STDDEV_REL: f64 = 0.10;
const C2_WALL_MIN_S: f64 = 9.0;
const C2_WALL_MAX_S: f64 = 12.0;
const C2_MIN_SPEEDUP: f64 = 20.0;
const C2_PAPER_SPEEDUP: f64 = 24.0;
const C3_MAX_LATENESS_MS: f64 = 100.0;
const C4_CASES: usize = 1000;
const C4_SQRT_REL: f64 = 1e-9;
const C5_CASES: u32 = 1000;
const C6_MIN_CORRELATION: f64 = 0.8;

/// Keeps the CPU-heavy criteria from overlapping the real-clock ones.
static EXCLUSIVE: Mutex<()> = Mutex::new(());

fn exclusive() -> std::sync::MutexGuard<'static, ()> {
    EXCLUSIVE.lock().unwrap_or_else(|p| p.into_inner())
}

fn verdict(criterion: &str, pass: bool, detail: String) {
    println!(
        "[{}] {criterion}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "{criterion} failed: {detail}");
}

fn day_segment() -> &'static StreamSegment {
    static DAY: OnceLock<StreamSegment> = OnceLock::new();
    DAY.get_or_init(|| {
        generate_synthetic(
            "day",
            &SyntheticParams {
                span: 86_400,
                mean_rate: 25.0,
                diurnal_amplitude: 0.5,
                seed: 2008,
            },
        )
        .unwrap()
    })
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn c1_volatility_preservation() {
    let _g = exclusive();
    let seg = day_segment();
    let streams: Vec<_> = C1_WINDOWS
        .iter()
        .map(|&w| simulate(seg, &format!("day-w{w}"), w, SampleMode::Systematic).unwrap())
        .collect();
    let refs: Vec<_> = streams.iter().collect();
    let report = fidelity(seg, &refs).unwrap();
    println!("{}", report.to_table());

    let orig = report.original.stats;
    let mut pass = report.streams.len() == C1_WINDOWS.len();
    let mut worst = (0.0f64, 0.0f64);
    for row in &report.streams {
        let ra = rel(row.stats.average, orig.average);
        let rs = rel(row.stats.standard_variance, orig.standard_variance);
        worst = (worst.0.max(ra), worst.1.max(rs));
        pass &= ra <= C1_AVERAGE_REL && rs <= C1_STDDEV_REL;
    }
    verdict(
        "C1 volatility preservation",
        pass,
        format!(
            "N={} original avg={:.3} sd={:.3}; worst rel avg={:.4} (<= {C1_AVERAGE_REL}), \
             worst rel sd={:.4} (<= {C1_STDDEV_REL}) over W={C1_WINDOWS:?}",
            seg.count(),
            orig.average,
            orig.standard_variance,
            worst.0,
            worst.1
        ),
    );
}

/// Discards records but keeps the byte count.
#[derive(Default)]
struct CountingSink {
    records: u64,
    bytes: u64,
}

impl Sink for CountingSink {
    fn open(&mut self) -> std::io::Result<()> {
        Ok(())
    }
    fn emit(&mut self, batch: &[Bytes]) -> std::io::Result<u64> {
        let n: u64 = batch.iter().map(|b| b.len() as u64 + 1).sum();
        self.records += batch.len() as u64;
        self.bytes += n;
        Ok(n)
    }
    fn close(&mut self) -> std::io::Result<()> {
        Ok(())
    }
    fn bytes_emitted(&self) -> u64 {
        self.bytes
    }
}

fn desk_stream() -> chronoflow::SimulatedStream {
    let seg = generate_synthetic(
        "desk",
        &SyntheticParams {
            span: 240,
            mean_rate: 25.0,
            diurnal_amplitude: 0.5,
            seed: 7,
        },
    )
    .unwrap();
    simulate(&seg, "desk-w10", 10, SampleMode::Systematic).unwrap()
}

#[test]
fn c2_speedup() {
    let _g = exclusive();
    let stream = desk_stream();
    let span = stream.provenance.segment_span as f64;
    let buckets = Buckets::from_stream(&stream).unwrap();
    let mut sink = CountingSink::default();
    let report = replay::replay(&buckets, &mut sink, &SystemClock::new());
    let wall = report.wall_time_seconds;
    let speedup = span / wall;
    let paper_config = 86_400.0 / 3600.0;
    let pass = report.status == Status::Success
        && (C2_WALL_MIN_S..=C2_WALL_MAX_S).contains(&wall)
        && speedup >= C2_MIN_SPEEDUP
        && paper_config >= C2_PAPER_SPEEDUP
        && sink.records == stream.events.len() as u64;
    verdict(
        "C2 speedup",
        pass,
        format!(
            "span {span}s replayed in {wall:.3}s (window [{C2_WALL_MIN_S}, {C2_WALL_MAX_S}]); \
             speedup {speedup:.2}x (>= {C2_MIN_SPEEDUP}); 86400->3600 gives {paper_config}x \
             (>= {C2_PAPER_SPEEDUP})"
        ),
    );
}

#[test]
fn c3_replay_timing_and_tcp_completeness() {
    let _g = exclusive();
    let stream = desk_stream();
    let expected: Vec<Bytes> = stream.events.iter().map(|e| e.payload.clone()).collect();
    let buckets = Buckets::from_stream(&stream).unwrap();

    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let server = thread::spawn(move || {
        let (conn, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(conn);
        let mut lines = Vec::new();
        let mut unterminated = false;
        loop {
            let mut line = Vec::new();
            if reader.read_until(b'\n', &mut line).unwrap() == 0 {
                break;
            }
            if line.pop() != Some(b'\n') {
                unterminated = true;
            }
            lines.push(line);
        }
        (lines, unterminated)
    });

    let mut sink = open_sink(&format!("tcp:{addr}")).unwrap();
    let report = replay::replay(&buckets, sink.as_mut(), &SystemClock::new());
    let (received, unterminated) = server.join().unwrap();

    let max_late = report.max_lateness_ms();
    let first_half: f64 = report.ticks[..5].iter().map(|t| t.lateness_ms).sum::<f64>() / 5.0;
    let second_half: f64 = report.ticks[5..].iter().map(|t| t.lateness_ms).sum::<f64>() / 5.0;
    let in_order = received.len() == expected.len()
        && received.iter().zip(&expected).all(|(a, b)| a[..] == b[..]);
    let pass = report.status == Status::Success
        && report.ticks.len() == 10
        && max_late < C3_MAX_LATENESS_MS
        && second_half < C3_MAX_LATENESS_MS
        && in_order
        && !unterminated
        && report.total_bytes == sink.bytes_emitted();
    verdict(
        "C3 replay timing and completeness",
        pass,
        format!(
            "max lateness {max_late:.3}ms (< {C3_MAX_LATENESS_MS}); mean lateness ticks 0-4 \
             {first_half:.3}ms, ticks 5-9 {second_half:.3}ms; TCP received {}/{} records in \
             order={in_order}, newline-framed={}",
            received.len(),
            expected.len(),
            !unterminated
        ),
    );
}

/// Textbook two-pass population statistics.
fn naive_volatility(q: &[u64]) -> (f64, f64, f64) {
    let n = q.len() as f64;
    let mut total = 0.0;
    for &x in q {
        total += x as f64;
    }
    let mean = total / n;
    let mut sq = 0.0;
    for &x in q {
        sq += (x as f64 - mean) * (x as f64 - mean);
    }
    let var = sq / n;
    (mean, var, var.sqrt())
}

#[test]
fn c4_metric_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatches = 0;
    let mut worst_sqrt = 0.0f64;
    for _ in 0..C4_CASES {
        let len = rng.random_range(1..=100);
        let counts: Vec<u64> = (0..len).map(|_| rng.random_range(0..=1000)).collect();
        let hist = PerSecondHistogram {
            range: len as u64,
            counts: counts.clone(),
            bytes: None,
        };
        let got = volatility(&hist).unwrap();
        let want = naive_volatility(&counts);
        if (got.average, got.variance, got.standard_variance) != want {
            mismatches += 1;
        }
        if got.variance > 0.0 {
            worst_sqrt = worst_sqrt.max(rel(got.standard_variance.powi(2), got.variance));
        }
    }
    verdict(
        "C4 metric oracle equivalence",
        mismatches == 0 && worst_sqrt <= C4_SQRT_REL,
        format!(
            "{C4_CASES} random histograms, {mismatches} mismatches vs naive reference; \
             worst |sd^2 - var|/var = {worst_sqrt:.2e} (<= {C4_SQRT_REL:e})"
        ),
    );
}

fn arb_segment() -> impl Strategy<Value = (StreamSegment, u64, SampleMode)> {
    (
        proptest::collection::vec(0u64..5_000, 1..400),
        0u64..3_000,
        any::<bool>(),
        any::<prop::sample::Index>(),
    )
        .prop_map(|(ts, extra_span, prefix, w_pick)| {
            let events = ts
                .iter()
                .enumerate()
                .map(|(i, &t)| Event::new(1_000_000 + t, Bytes::from(format!("id{i}"))))
                .collect();
            let probe = StreamSegment::new("p", events, None).unwrap();
            let span = probe.observed_span() + extra_span;
            let seg = StreamSegment::new("p", probe.into_events(), Some(span)).unwrap();
            let w = 1 + w_pick.index(span as usize) as u64;
            let mode = if prefix {
                SampleMode::Prefix
            } else {
                SampleMode::Systematic
            };
            (seg, w, mode)
        })
}

#[test]
fn c5_transform_properties() {
    let mut runner = TestRunner::new(Config {
        cases: C5_CASES,
        failure_persistence: None,
        ..Config::default()
    });
    let outcome = runner.run(&arb_segment(), |(seg, w, mode)| {
        let scaled = normalize(&seg, w).unwrap();
        // monotone in t
        for (a, b) in scaled.iter().zip(scaled.iter().skip(1)) {
            prop_assert!(a.t_original <= b.t_original && a.scale_stamp <= b.scale_stamp);
        }
        // endpoints
        prop_assert_eq!(scaled.first().unwrap().scale_stamp, 0);
        let last = scaled.last().unwrap().scale_stamp;
        if seg.t_max() > seg.t_min() {
            prop_assert_eq!(last, w - 1);
        } else {
            prop_assert_eq!(last, 0);
        }

        let out = simulate(&seg, "s", w, mode).unwrap();
        // subset, no duplicates
        let source: std::collections::HashMap<&[u8], u64> =
            seg.events().iter().map(|e| (&e.payload[..], e.t)).collect();
        let mut seen = std::collections::HashSet::new();
        for e in &out.events {
            prop_assert_eq!(source.get(&e.payload[..]), Some(&e.t_original));
            prop_assert!(seen.insert(e.payload.clone()));
        }
        // kept-count bound
        let mut stamps: Vec<u64> = scaled.iter().map(|e| e.scale_stamp).collect();
        stamps.dedup();
        let target = seg.count() as f64 * w as f64 / seg.span_seconds() as f64;
        prop_assert!((out.events.len() as f64 - target).abs() <= stamps.len() as f64);
        // determinism, across runs and execution strategies
        let again = simulate_with(&seg, "s", w, mode, Execution::Sequential).unwrap();
        prop_assert_eq!(encode_stream_data(&out), encode_stream_data(&again));
        Ok(())
    });
    let pass = outcome.is_ok();
    verdict(
        "C5 transform properties",
        pass,
        match outcome {
            Ok(()) => format!(
                "{C5_CASES} random segments: monotone, endpoints 0 and W-1, subset, \
                 |kept - N*W/span| <= non-empty buckets, deterministic"
            ),
            Err(e) => format!("{e}"),
        },
    );
}

#[test]
fn c6_bytes_trend_fidelity() {
    let _g = exclusive();
    let seg = day_segment();
    let stream = simulate(seg, "day-w600", 600, SampleMode::Systematic).unwrap();
    let r = bytes_trend_correlation(
        &segment_histogram(seg).unwrap(),
        &stream_histogram(&stream).unwrap(),
    )
    .unwrap();
    verdict(
        "C6 bytes-trend fidelity",
        r >= C6_MIN_CORRELATION,
        format!("Pearson r = {r:.4} at W=600 (>= {C6_MIN_CORRELATION})"),
    );
}

#[test]
fn c7_store_integrity() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::new(dir.path());

    let mut round_trips = 0;
    let mut failures = Vec::new();
    for seed in 0..8u64 {
        let seg = generate_synthetic(
            &format!("seg{seed}"),
            &SyntheticParams {
                span: 120 + seed * 30,
                mean_rate: 3.0 + seed as f64,
                diurnal_amplitude: 0.4,
                seed,
            },
        )
        .unwrap();
        store
            .write_segment(&seg, SegmentOrigin::Unspecified)
            .unwrap();
        if store.read_segment(seg.id()).unwrap() != seg {
            failures.push(format!("segment {}", seg.id()));
        }
        let stream = simulate(
            &seg,
            &format!("str{seed}"),
            10 + seed,
            SampleMode::Systematic,
        )
        .unwrap();
        store.write_stream(&stream).unwrap();
        let back = store.read_stream(&stream.id).unwrap();
        if back != stream || encode_stream_data(&back) != encode_stream_data(&stream) {
            failures.push(format!("stream {}", stream.id));
        }
        round_trips += 2;
    }

    // every single-byte corruption of a small data file must be caught
    let small = StreamSegment::new(
        "small",
        (0..12u64)
            .map(|i| Event::new(i / 3, format!("row {i}\tx")))
            .collect(),
        None,
    )
    .unwrap();
    store
        .write_segment(&small, SegmentOrigin::Unspecified)
        .unwrap();
    let small_stream = simulate(&small, "small-w2", 2, SampleMode::Prefix).unwrap();
    store.write_stream(&small_stream).unwrap();
    let mut flips = 0;
    let mut undetected = 0;
    for (kind, id) in [("segment", "small"), ("stream", "small-w2")] {
        let path = dir.path().join(kind).join(id).join("data.tsv");
        let original = std::fs::read(&path).unwrap();
        for pos in 0..original.len() {
            for mask in [0x01u8, 0x80] {
                let mut bad = original.clone();
                bad[pos] ^= mask;
                std::fs::write(&path, &bad).unwrap();
                let detected = match kind {
                    "segment" => matches!(store.read_segment(id), Err(Error::Corruption { .. })),
                    _ => matches!(store.read_stream(id), Err(Error::Corruption { .. })),
                };
                flips += 1;
                undetected += usize::from(!detected);
            }
        }
        std::fs::write(&path, &original).unwrap();
    }

    let dup = store.write_segment(&small, SegmentOrigin::Unspecified);
    let dup_stream = store.write_stream(&small_stream);
    let dup_rejected = matches!(dup, Err(Error::Conflict { .. }))
        && matches!(dup_stream, Err(Error::Conflict { .. }));

    verdict(
        "C7 store integrity",
        failures.is_empty() && undetected == 0 && dup_rejected,
        format!(
            "{}/{round_trips} round trips byte-identical; {}/{flips} single-byte corruptions \
             detected; duplicate ids rejected={dup_rejected}",
            round_trips - failures.len(),
            flips - undetected
        ),
    );
}
