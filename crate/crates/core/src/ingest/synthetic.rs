use std::f64::consts::TAU;

use bytes::Bytes;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Event, StreamSegment};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};

/// First second of every synthetic segment (2008-06-01T00:00:00+08:00).
pub const SYNTHETIC_EPOCH: u64 = 1_212_249_600;

/// Parameters of the diurnal generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub span: u64,
    pub mean_rate: f64,
    pub diurnal_amplitude: f64,
    pub seed: u64,
}

impl SyntheticParams {
    fn validate(&self) -> Result<()> {
        if self.span == 0 {
            return Err(Error::config("span must be at least 1 second"));
        }
        if !(self.mean_rate.is_finite() && self.mean_rate > 0.0) {
            return Err(Error::config("mean rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.diurnal_amplitude) {
            return Err(Error::config(
                "diurnal amplitude must lie in [0, 1) or the rate goes negative",
            ));
        }
        Ok(())
    }

    /// Expected events in second `s`.
    pub fn expected_rate(&self, s: u64) -> f64 {
        let phase = TAU * s as f64 / self.span as f64;
        self.mean_rate * (1.0 + self.diurnal_amplitude * phase.sin())
    }
}

fn second_rng(seed: u64, s: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s);
    rng
}

/// Per-second count: the expected rate with its fractional part resolved
/// by one Bernoulli draw, so each second carries floor or ceil of the rate.
fn draw_count(rng: &mut ChaCha8Rng, rate: f64) -> u64 {
    let whole = rate.floor();
    let extra = rng.random::<f64>() < rate - whole;
    whole as u64 + u64::from(extra)
}

/// Generates a deterministic day-shaped segment.
///
/// Each second draws from its own ChaCha stream keyed by `(seed, second)`,
/// so output is independent of the execution strategy. Payloads are
/// `seq<TAB>t<TAB>token` with a global sequence number.
pub fn generate_synthetic(id: &str, params: &SyntheticParams) -> Result<StreamSegment> {
    generate_synthetic_with(id, params, Execution::default())
}

pub fn generate_synthetic_with(
    id: &str,
    params: &SyntheticParams,
    exec: Execution,
) -> Result<StreamSegment> {
    params.validate()?;
    let span = usize::try_from(params.span).map_err(|_| Error::config("span too large"))?;

    let counts = exec::map_range(exec, span, |s| {
        let s = s as u64;
        draw_count(&mut second_rng(params.seed, s), params.expected_rate(s))
    });
    let mut offsets = Vec::with_capacity(span);
    let mut total = 0u64;
    for c in &counts {
        offsets.push(total);
        total += c;
    }

    let per_second = exec::map_range(exec, span, |s| {
        let mut rng = second_rng(params.seed, s as u64);
        let n = draw_count(&mut rng, params.expected_rate(s as u64));
        let t = SYNTHETIC_EPOCH + s as u64;
        (0..n)
            .map(|j| {
                let len = rng.random_range(8..=24);
                let token: String = (0..len)
                    .map(|_| char::from(b'a' + rng.random_range(0..26u8)))
                    .collect();
                let payload = format!("{}\t{t}\t{token}", offsets[s] + j);
                Event::new(t, Bytes::from(payload))
            })
            .collect::<Vec<_>>()
    });
    let mut events = Vec::with_capacity(total as usize);
    per_second.into_iter().for_each(|v| events.extend(v));
    StreamSegment::from_sorted(id.to_string(), events, Some(params.span))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(span: u64, rate: f64, amp: f64, seed: u64) -> SyntheticParams {
        SyntheticParams {
            span,
            mean_rate: rate,
            diurnal_amplitude: amp,
            seed,
        }
    }

    #[test]
    fn flat_rate_gives_expected_count() {
        let seg = generate_synthetic("s", &params(10, 2.0, 0.0, 7)).unwrap();
        assert_eq!(seg.span_seconds(), 10);
        // Poisson(20) has sd ~4.5; integer rates are reproduced exactly here
        assert_eq!(seg.count(), 20);
        let again = generate_synthetic("s", &params(10, 2.0, 0.0, 7)).unwrap();
        assert_eq!(seg, again);
    }

    #[test]
    fn amplitude_boundary() {
        assert!(generate_synthetic("s", &params(10, 2.0, 0.99, 1)).is_ok());
        assert!(matches!(
            generate_synthetic("s", &params(10, 2.0, 1.0, 1)),
            Err(Error::Config(_))
        ));
        assert!(generate_synthetic("s", &params(0, 2.0, 0.0, 1)).is_err());
        assert!(generate_synthetic("s", &params(10, 0.0, 0.0, 1)).is_err());
    }

    #[test]
    fn single_second_is_deterministic() {
        let a = generate_synthetic("s", &params(1, 1.0, 0.0, 1)).unwrap();
        let b = generate_synthetic("s", &params(1, 1.0, 0.0, 1)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.count(), 1);
    }

    #[test]
    fn sequence_numbers_are_contiguous_and_strategies_agree() {
        let p = params(500, 3.7, 0.6, 42);
        let seq = generate_synthetic_with("s", &p, Execution::Sequential).unwrap();
        let par = generate_synthetic_with("s", &p, Execution::Parallel).unwrap();
        assert_eq!(seq, par);
        for (i, e) in seq.events().iter().enumerate() {
            let text = std::str::from_utf8(&e.payload).unwrap();
            let mut fields = text.split('\t');
            assert_eq!(fields.next().unwrap(), i.to_string());
            assert_eq!(fields.next().unwrap(), e.t.to_string());
        }
    }

    #[test]
    fn seeds_differ() {
        let a = generate_synthetic("s", &params(50, 3.5, 0.3, 1)).unwrap();
        let b = generate_synthetic("s", &params(50, 3.5, 0.3, 2)).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn per_second_counts_track_the_diurnal_curve() {
        let p = params(1000, 20.0, 0.5, 9);
        let seg = generate_synthetic("s", &p).unwrap();
        let mut counts = vec![0u64; 1000];
        for e in seg.events() {
            counts[(e.t - SYNTHETIC_EPOCH) as usize] += 1;
        }
        for (s, &c) in counts.iter().enumerate() {
            let rate = p.expected_rate(s as u64);
            assert!((c as f64 - rate).abs() < 1.0, "second {s}: {c} vs {rate}");
        }
    }
}
