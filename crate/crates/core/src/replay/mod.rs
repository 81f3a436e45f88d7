//! Paced replay: one bucket per second against an absolute schedule.
//!
//! Tick `i` is due at `start + i` seconds on the monotonic clock. Deadlines
//! never depend on when the previous tick actually ran, so scheduling jitter
//! shows up as per-tick lateness instead of accumulating. A tick that
//! overruns its second delays the next one (order wins over timing).

mod clock;
mod sink;

use std::time::Duration;

use bytes::Bytes;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::Store;
use crate::transform::SimulatedStream;

pub use clock::{Clock, SystemClock, VirtualClock};
pub use sink::{open_sink, LineSink, Sink, SinkSpec};

/// Payloads grouped by `scale_stamp`, one group per second of the window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Buckets {
    buckets: Vec<Vec<Bytes>>,
}

impl Buckets {
    pub fn from_stream(stream: &SimulatedStream) -> Result<Self> {
        let mut buckets = vec![Vec::new(); stream.window as usize];
        for e in &stream.events {
            buckets
                .get_mut(e.scale_stamp as usize)
                .ok_or_else(|| {
                    Error::Invariant(format!(
                        "scale_stamp {} outside window {}",
                        e.scale_stamp, stream.window
                    ))
                })?
                .push(e.payload.clone());
        }
        Ok(Buckets { buckets })
    }

    pub fn from_vec(buckets: Vec<Vec<Bytes>>) -> Self {
        Buckets { buckets }
    }

    pub fn window(&self) -> u64 {
        self.buckets.len() as u64
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.buckets.iter().map(Vec::len).collect()
    }

    pub fn get(&self, i: usize) -> Option<&[Bytes]> {
        self.buckets.get(i).map(Vec::as_slice)
    }

    pub fn total(&self) -> usize {
        self.buckets.iter().map(Vec::len).sum()
    }
}

/// Loads stream `id` and groups it into `window` buckets.
pub fn load(store: &Store, id: &str, window: u64) -> Result<Buckets> {
    let stream = store.read_stream(id)?;
    if stream.window != window {
        return Err(Error::config(format!(
            "stream `{id}` was simulated for {}s, not {window}s",
            stream.window
        )));
    }
    Buckets::from_stream(&stream)
}

/// Replay outcome code: 0 success, 1 fault.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    Fault,
}

impl Status {
    pub fn code(self) -> u8 {
        match self {
            Status::Success => 0,
            Status::Fault => 1,
        }
    }
}

impl Serialize for Status {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.code())
    }
}

impl<'de> Deserialize<'de> for Status {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(Status::Success),
            1 => Ok(Status::Fault),
            n => Err(serde::de::Error::custom(format!("unknown status {n}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u64,
    pub events_emitted: u64,
    pub bytes_emitted: u64,
    /// Emission start minus scheduled deadline.
    pub lateness_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub status: Status,
    pub window: u64,
    pub ticks: Vec<TickRecord>,
    pub total_events: u64,
    pub total_bytes: u64,
    pub last_completed_tick: Option<u64>,
    pub error: Option<String>,
    pub wall_time_seconds: f64,
}

impl ReplayReport {
    pub fn max_lateness_ms(&self) -> f64 {
        self.ticks.iter().map(|t| t.lateness_ms).fold(0.0, f64::max)
    }
}

/// Emits bucket `i` at `start + i` seconds, then holds until the window's
/// final second has elapsed and closes the sink.
///
/// Failures stop the run at the failing tick and are reported with
/// `Status::Fault`; this function itself does not return an error.
pub fn replay(buckets: &Buckets, sink: &mut dyn Sink, clock: &dyn Clock) -> ReplayReport {
    let start = clock.now();
    let mut report = ReplayReport {
        status: Status::Success,
        window: buckets.window(),
        ticks: Vec::with_capacity(buckets.buckets.len()),
        total_events: 0,
        total_bytes: 0,
        last_completed_tick: None,
        error: None,
        wall_time_seconds: 0.0,
    };

    let outcome = (|| -> Result<()> {
        for (i, batch) in buckets.buckets.iter().enumerate() {
            let deadline = start + Duration::from_secs(i as u64);
            clock.sleep_until(deadline)?;
            let began = clock.now();
            let bytes = if batch.is_empty() {
                0
            } else {
                sink.emit(batch).map_err(|e| {
                    Error::Io(std::io::Error::new(e.kind(), format!("tick {i}: {e}")))
                })?
            };
            report.ticks.push(TickRecord {
                tick: i as u64,
                events_emitted: batch.len() as u64,
                bytes_emitted: bytes,
                lateness_ms: began.saturating_sub(deadline).as_secs_f64() * 1000.0,
            });
            report.total_events += batch.len() as u64;
            report.total_bytes += bytes;
            report.last_completed_tick = Some(i as u64);
        }
        clock.sleep_until(start + Duration::from_secs(buckets.window()))?;
        sink.close()?;
        Ok(())
    })();

    if let Err(e) = outcome {
        log::error!("replay stopped: {e}");
        let _ = sink.close();
        report.status = Status::Fault;
        report.error = Some(e.to_string());
    }
    report.wall_time_seconds = clock.now().saturating_sub(start).as_secs_f64();
    report
}

#[cfg(test)]
mod tests {
    use std::io;

    use super::*;

    #[derive(Default)]
    struct Recorder {
        seen: Vec<Bytes>,
        fail_on_call: Option<usize>,
        calls: usize,
        bytes: u64,
        closed: bool,
        slow: Option<(VirtualClock, Duration)>,
    }

    impl Sink for Recorder {
        fn open(&mut self) -> io::Result<()> {
            Ok(())
        }
        fn emit(&mut self, batch: &[Bytes]) -> io::Result<u64> {
            let call = self.calls;
            self.calls += 1;
            if self.fail_on_call == Some(call) {
                return Err(io::Error::new(io::ErrorKind::BrokenPipe, "peer went away"));
            }
            if let Some((clock, d)) = &self.slow {
                clock.advance(*d);
            }
            self.seen.extend(batch.iter().cloned());
            let n: u64 = batch.iter().map(|b| b.len() as u64 + 1).sum();
            self.bytes += n;
            Ok(n)
        }
        fn close(&mut self) -> io::Result<()> {
            self.closed = true;
            Ok(())
        }
        fn bytes_emitted(&self) -> u64 {
            self.bytes
        }
    }

    fn buckets(sizes: &[usize]) -> Buckets {
        let mut n = 0;
        Buckets::from_vec(
            sizes
                .iter()
                .map(|&k| {
                    (0..k)
                        .map(|_| {
                            n += 1;
                            Bytes::from(format!("rec{n}"))
                        })
                        .collect()
                })
                .collect(),
        )
    }

    #[test]
    fn virtual_replay_emits_in_order() {
        let b = buckets(&[2, 0, 1]);
        let mut sink = Recorder::default();
        let clock = VirtualClock::new();
        let report = replay(&b, &mut sink, &clock);
        assert_eq!(report.status, Status::Success);
        assert_eq!(report.ticks.len(), 3);
        let emitted: Vec<_> = report.ticks.iter().map(|t| t.events_emitted).collect();
        assert_eq!(emitted, vec![2, 0, 1]);
        assert_eq!(sink.seen, vec!["rec1", "rec2", "rec3"]);
        assert_eq!(report.total_bytes, sink.bytes_emitted());
        assert_eq!(report.wall_time_seconds, 3.0);
        assert!(report.ticks.iter().all(|t| t.lateness_ms == 0.0));
        assert!(sink.closed);
        // one emit per non-empty bucket
        assert_eq!(sink.calls, 2);
    }

    #[test]
    fn single_empty_bucket() {
        let report = replay(
            &buckets(&[0]),
            &mut Recorder::default(),
            &VirtualClock::new(),
        );
        assert_eq!(report.status, Status::Success);
        assert_eq!(report.ticks.len(), 1);
        assert_eq!(report.total_events, 0);
    }

    #[test]
    fn sink_failure_stops_run() {
        let mut sink = Recorder {
            fail_on_call: Some(1),
            ..Default::default()
        };
        let report = replay(&buckets(&[1, 1, 1]), &mut sink, &VirtualClock::new());
        assert_eq!(report.status, Status::Fault);
        assert_eq!(sink.seen.len(), 1);
        assert_eq!(report.last_completed_tick, Some(0));
        assert!(report.error.as_deref().unwrap().contains("tick 1"));
        assert!(sink.closed);
    }

    #[test]
    fn overrun_delays_next_tick_without_drift() {
        let clock = VirtualClock::new();
        let mut sink = Recorder {
            slow: Some((clock.clone(), Duration::from_millis(1500))),
            ..Default::default()
        };
        let report = replay(&buckets(&[1, 1, 1, 0]), &mut sink, &clock);
        let late: Vec<_> = report.ticks.iter().map(|t| t.lateness_ms).collect();
        // tick0 runs 0..1.5, tick1 due 1.0 starts 1.5, runs to 3.0,
        // tick2 due 2.0 starts 3.0 and ends 4.5, tick3 due 3.0 starts 4.5
        assert_eq!(late, vec![0.0, 500.0, 1000.0, 1500.0]);
        assert_eq!(report.wall_time_seconds, 4.5);
    }

    struct BrokenClock;
    impl Clock for BrokenClock {
        fn now(&self) -> Duration {
            Duration::ZERO
        }
        fn sleep_until(&self, _: Duration) -> Result<()> {
            Err(Error::Clock("timer unavailable".into()))
        }
    }

    #[test]
    fn clock_failure_is_fault() {
        let report = replay(&buckets(&[1]), &mut Recorder::default(), &BrokenClock);
        assert_eq!(report.status, Status::Fault);
        assert_eq!(report.last_completed_tick, None);
    }

    #[test]
    fn grouping_from_stream() {
        use crate::ingest::{Event, StreamSegment};
        use crate::transform::{simulate, SampleMode};
        let seg = StreamSegment::new(
            "s",
            vec![Event::new(0, "a"), Event::new(0, "b"), Event::new(2, "c")],
            None,
        )
        .unwrap();
        let stream = simulate(&seg, "x", 3, SampleMode::Systematic).unwrap();
        assert_eq!(
            Buckets::from_stream(&stream).unwrap().sizes(),
            vec![2, 0, 1]
        );
    }

    #[test]
    fn report_json_is_reproducible() {
        let b = buckets(&[3, 1, 0, 2]);
        let a = replay(&b, &mut Recorder::default(), &VirtualClock::new());
        let c = replay(&b, &mut Recorder::default(), &VirtualClock::new());
        let ja = serde_json::to_string(&a).unwrap();
        assert_eq!(ja, serde_json::to_string(&c).unwrap());
        assert!(ja.starts_with("{\"status\":0,"));
        let back: ReplayReport = serde_json::from_str(&ja).unwrap();
        assert_eq!(back, a);
    }
}
