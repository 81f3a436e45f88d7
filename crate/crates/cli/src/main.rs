use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chronoflow::ingest::{
    self, generate_synthetic, parse_tz_offset, FieldSelector, Schema, SyntheticParams,
    TimeFieldSpec, TimeFormat,
};
use chronoflow::metrics::{self, volatility_table};
use chronoflow::replay::{self, open_sink, Clock, SinkSpec, SystemClock, VirtualClock};
use chronoflow::store::{self, Kind, ManifestBody, SegmentOrigin, Store};
use chronoflow::transform::{self, SampleMode};
use chronoflow::{Error, Result};
use clap::{ArgGroup, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "chronoflow",
    version,
    about = "Compress and replay timestamped event streams"
)]
#[command(arg_required_else_help = true)]
struct Cli {
    /// Store root directory.
    #[arg(long, global = true, env = "CHRONO_STORE", default_value = "store")]
    store: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic diurnal segment.
    Generate {
        /// Span in seconds.
        #[arg(long, default_value_t = 86_400, value_parser = clap::value_parser!(u64).range(1..))]
        span: u64,
        /// Mean events per second.
        #[arg(long, default_value_t = 25.0, value_parser = positive_f64)]
        rate: f64,
        /// Diurnal amplitude as a fraction of the mean, in [0, 1).
        #[arg(long, default_value_t = 0.5, value_parser = amplitude)]
        amplitude: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Segment id to store under.
        #[arg(long, value_parser = store_id)]
        out: String,
    },
    /// Parse a delimited log file into a stored segment.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        /// Single-byte field delimiter (`tab`, `\t` or a character).
        #[arg(long, default_value = "tab", value_parser = delimiter)]
        delimiter: u8,
        /// Time column: zero-based index or header name.
        #[arg(long)]
        time_field: String,
        /// `epoch`, `epoch-ms` or `pattern:STR` (e.g. `pattern:YYYY-MM-DD HH:MM:SS`).
        #[arg(long, default_value = "epoch", value_parser = time_format)]
        time_format: TimeFormat,
        /// Offset of wall-clock timestamps from UTC, `+HH:MM`.
        #[arg(long, default_value = "+00:00", value_parser = tz, allow_hyphen_values = true)]
        tz: i32,
        /// Declared original time range in seconds.
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        span: Option<u64>,
        /// The first line is a header row.
        #[arg(long)]
        header: bool,
        /// Segment id; unparseable lines go to `<store>/<ID>.rejects`.
        #[arg(long, value_parser = store_id)]
        out: String,
    },
    /// Compress a segment into a shorter time range.
    Simulate {
        #[arg(long, value_parser = store_id)]
        segment: String,
        /// Target time range in seconds.
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        range: u64,
        #[arg(long, default_value = "systematic", value_parser = sample_mode)]
        mode: SampleMode,
        /// Stream id (default `<segment>-w<range>`).
        #[arg(long, value_parser = store_id)]
        out: Option<String>,
    },
    /// Replay a stored stream, one bucket per second.
    Replay {
        #[arg(long, value_parser = store_id)]
        stream: String,
        /// `stdout`, `file:PATH` or `tcp:HOST:PORT`.
        #[arg(long, value_parser = sink_spec)]
        sink: String,
        /// Advance time instantly instead of waiting.
        #[arg(long)]
        virtual_clock: bool,
        /// Write the replay report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Print the volatility of a stream or segment.
    #[command(group(ArgGroup::new("target").required(true).args(["stream", "segment"])))]
    Stats {
        #[arg(long, value_parser = store_id)]
        stream: Option<String>,
        #[arg(long, value_parser = store_id)]
        segment: Option<String>,
    },
    /// Compare a segment with streams simulated from it.
    Report {
        #[arg(long, value_parser = store_id)]
        segment: String,
        /// Comma-separated stream ids.
        #[arg(long, value_delimiter = ',', required = true, value_parser = store_id)]
        streams: Vec<String>,
        /// JSON output; an aligned table is written next to it with `.txt` appended.
        #[arg(long)]
        out: PathBuf,
    },
    /// List stored segments and streams.
    List,
}

fn store_id(s: &str) -> std::result::Result<String, String> {
    store::validate_id(s)
        .map(|_| s.to_string())
        .map_err(|e| e.to_string())
}

fn positive_f64(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        _ => Err(format!("`{s}` is not a positive number")),
    }
}

fn amplitude(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if (0.0..1.0).contains(&v) => Ok(v),
        _ => Err(format!("`{s}` is not in [0, 1)")),
    }
}

fn delimiter(s: &str) -> std::result::Result<u8, String> {
    match s {
        "tab" | "\\t" | "\t" => Ok(b'\t'),
        _ if s.len() == 1 && s != "\n" && s != "\r" => Ok(s.as_bytes()[0]),
        _ => Err(format!("`{s}` is not a single-byte delimiter")),
    }
}

fn time_format(s: &str) -> std::result::Result<TimeFormat, String> {
    TimeFormat::parse(s).map_err(|e| e.to_string())
}

fn tz(s: &str) -> std::result::Result<i32, String> {
    parse_tz_offset(s).map_err(|e| e.to_string())
}

fn sample_mode(s: &str) -> std::result::Result<SampleMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn sink_spec(s: &str) -> std::result::Result<String, String> {
    match s.parse::<SinkSpec>() {
        Ok(SinkSpec::Broker(_)) => Err("broker sinks are not supported in this build".into()),
        Ok(_) => Ok(s.to_string()),
        Err(e) => Err(e.to_string()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let store = Store::new(&cli.store);
    match run(&store, cli.command) {
        Ok(code) => code,
        Err(e) => {
            let diag = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{diag}");
            ExitCode::from(1)
        }
    }
}

fn run(store: &Store, command: Command) -> Result<ExitCode> {
    match command {
        Command::Generate {
            span,
            rate,
            amplitude,
            seed,
            out,
        } => {
            refuse_existing(store, Kind::Segment, &out)?;
            let params = SyntheticParams {
                span,
                mean_rate: rate,
                diurnal_amplitude: amplitude,
                seed,
            };
            let segment = generate_synthetic(&out, &params)?;
            let m = store.write_segment(&segment, SegmentOrigin::Synthetic(params))?;
            println!(
                "segment {} events={} span={}s {}",
                m.id, m.count, span, m.digest
            );
        }
        Command::Ingest {
            input,
            delimiter,
            time_field,
            time_format,
            tz,
            span,
            header,
            out,
        } => {
            let spec = TimeFieldSpec::new(FieldSelector::parse(&time_field), time_format, tz)?;
            let schema = Schema::new(delimiter, header, spec)?;
            refuse_existing(store, Kind::Segment, &out)?;
            let source = BufReader::new(File::open(&input).map_err(|e| with_path(&input, e))?);
            fs::create_dir_all(store.root())?;
            let rejects_path = store.rejects_path(&out);
            let mut rejects = BufWriter::new(
                File::create(&rejects_path).map_err(|e| with_path(&rejects_path, e))?,
            );
            let outcome = ingest::ingest(&out, source, &schema, span, &mut rejects)?;
            rejects.flush()?;
            let m = store.write_segment(
                &outcome.segment,
                SegmentOrigin::Ingest {
                    source: input.display().to_string(),
                    schema,
                    declared_span: span,
                    rejected: outcome.rejected,
                },
            )?;
            println!(
                "segment {} events={} rejected={} span={}s {}",
                m.id,
                m.count,
                outcome.rejected,
                outcome.segment.span_seconds(),
                m.digest
            );
            if outcome.rejected > 0 {
                eprintln!("rejected lines written to {}", rejects_path.display());
            }
        }
        Command::Simulate {
            segment,
            range,
            mode,
            out,
        } => {
            let out = out.unwrap_or_else(|| format!("{segment}-w{range}"));
            store::validate_id(&out)?;
            refuse_existing(store, Kind::Stream, &out)?;
            let seg = store.read_segment(&segment)?;
            let stream = transform::simulate(&seg, &out, range, mode)?;
            let m = store.write_stream(&stream)?;
            println!(
                "stream {} events={} range={}s multiple={} {}",
                m.id, m.count, range, stream.multiple, m.digest
            );
        }
        Command::Replay {
            stream,
            sink,
            virtual_clock,
            report,
        } => {
            let window = match store.manifest(Kind::Stream, &stream)?.body {
                ManifestBody::Stream { window, .. } => window,
                ManifestBody::Segment { .. } => unreachable!("manifest kind is checked on load"),
            };
            let buckets = replay::load(store, &stream, window)?;
            let mut sink = open_sink(&sink)?;
            let clock: Box<dyn Clock> = if virtual_clock {
                Box::new(VirtualClock::new())
            } else {
                Box::new(SystemClock::new())
            };
            let result = replay::replay(&buckets, sink.as_mut(), clock.as_ref());
            if let Some(path) = report {
                write_json(&path, &result)?;
            }
            eprintln!(
                "replay {stream}: status={} events={} bytes={} wall={:.3}s max_lateness={:.1}ms",
                result.status.code(),
                result.total_events,
                result.total_bytes,
                result.wall_time_seconds,
                result.max_lateness_ms()
            );
            if let Some(err) = &result.error {
                let diag = serde_json::json!({ "error": "replay", "message": err });
                eprintln!("{diag}");
            }
            return Ok(ExitCode::from(result.status.code()));
        }
        Command::Stats { stream, segment } => {
            let (label, hist) = match (stream, segment) {
                (Some(id), _) => {
                    let s = store.read_stream(&id)?;
                    (s.window.to_string(), metrics::stream_histogram(&s)?)
                }
                (None, Some(id)) => {
                    let s = store.read_segment(&id)?;
                    let h = metrics::segment_histogram(&s)?;
                    (format!("original ({})", h.range), h)
                }
                (None, None) => unreachable!("clap requires one target"),
            };
            let stats = metrics::volatility(&hist)?;
            print!("{}", volatility_table([(label, &stats)]));
        }
        Command::Report {
            segment,
            streams,
            out,
        } => {
            let seg = store.read_segment(&segment)?;
            let loaded = streams
                .iter()
                .map(|id| store.read_stream(id))
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<_> = loaded.iter().collect();
            let report = metrics::fidelity(&seg, &refs)?;
            let table = report.to_table();
            write_json(&out, &report)?;
            fs::write(table_path(&out), &table)?;
            print!("{table}");
        }
        Command::List => {
            let catalog = store.list();
            for m in &catalog.entries {
                let detail = match &m.body {
                    ManifestBody::Segment { span_seconds, .. } => format!("span={span_seconds}s"),
                    ManifestBody::Stream {
                        window, provenance, ..
                    } => format!(
                        "range={window}s source={} multiple={}",
                        provenance.segment_id, provenance.multiple
                    ),
                };
                println!("{}\t{}\tevents={}\t{detail}", m.kind(), m.id, m.count);
            }
            for (path, e) in &catalog.errors {
                let diag = serde_json::json!({
                    "error": e.kind(),
                    "path": path.display().to_string(),
                    "message": e.to_string(),
                });
                eprintln!("{diag}");
            }
            if !catalog.errors.is_empty() {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn refuse_existing(store: &Store, kind: Kind, id: &str) -> Result<()> {
    if store.exists(kind, id) {
        return Err(Error::Conflict {
            kind: kind.as_str(),
            id: id.to_string(),
        });
    }
    Ok(())
}

fn with_path(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(
        e.kind(),
        format!("{}: {e}", path.display()),
    ))
}

fn table_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".txt");
    PathBuf::from(s)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut json = serde_json::to_vec_pretty(value)?;
    json.push(b'\n');
    fs::write(path, json)?;
    Ok(())
}
