use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::net::{Shutdown, TcpStream};
use std::path::PathBuf;
use std::str::FromStr;

use bytes::Bytes;

use crate::error::{Error, Result};

/// Downstream destination for replayed records.
///
/// The replay engine calls `emit` once per non-empty tick, from one thread
/// at a time.
pub trait Sink {
    fn open(&mut self) -> io::Result<()>;

    /// Writes `batch` in order and returns the bytes written, framing
    /// included.
    fn emit(&mut self, batch: &[Bytes]) -> io::Result<u64>;

    fn close(&mut self) -> io::Result<()>;

    /// Running total of bytes written.
    fn bytes_emitted(&self) -> u64;
}

/// Parsed form of `stdout | file:PATH | tcp:HOST:PORT`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SinkSpec {
    Stdout,
    File(PathBuf),
    Tcp(String),
    /// Reserved for message-broker producers; not implemented.
    Broker(String),
}

impl FromStr for SinkSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "stdout" {
            return Ok(SinkSpec::Stdout);
        }
        if let Some(path) = s.strip_prefix("file:").filter(|p| !p.is_empty()) {
            return Ok(SinkSpec::File(PathBuf::from(path)));
        }
        if let Some(addr) = s.strip_prefix("tcp:") {
            match addr.rsplit_once(':') {
                Some((host, port)) if !host.is_empty() && port.parse::<u16>().is_ok() => {
                    return Ok(SinkSpec::Tcp(addr.to_string()))
                }
                _ => {}
            }
        }
        if let Some(target) = s.strip_prefix("broker:") {
            return Ok(SinkSpec::Broker(target.to_string()));
        }
        Err(Error::config(format!(
            "bad sink `{s}` (expected stdout, file:PATH or tcp:HOST:PORT)"
        )))
    }
}

/// Writes each record followed by `\n`.
pub struct LineSink<W: Write> {
    out: Option<W>,
    require_utf8: bool,
    bytes: u64,
    on_close: fn(&mut W) -> io::Result<()>,
}

impl<W: Write> LineSink<W> {
    pub fn new(out: W) -> Self {
        LineSink {
            out: Some(out),
            require_utf8: false,
            bytes: 0,
            on_close: |_| Ok(()),
        }
    }

    fn writer(&mut self) -> io::Result<&mut W> {
        self.out
            .as_mut()
            .ok_or_else(|| io::Error::new(io::ErrorKind::NotConnected, "sink is closed"))
    }
}

impl<W: Write> Sink for LineSink<W> {
    fn open(&mut self) -> io::Result<()> {
        self.writer().map(|_| ())
    }

    fn emit(&mut self, batch: &[Bytes]) -> io::Result<u64> {
        let require_utf8 = self.require_utf8;
        let out = self.writer()?;
        let mut written = 0u64;
        let mut result = Ok(());
        for record in batch {
            if record.contains(&b'\n') {
                result = Err(io::Error::new(
                    io::ErrorKind::InvalidData,
                    "record contains a newline",
                ));
                break;
            }
            if require_utf8 && std::str::from_utf8(record).is_err() {
                result = Err(io::Error::new(
                    io::ErrorKind::InvalidData,
                    "record is not UTF-8",
                ));
                break;
            }
            if let Err(e) = out.write_all(record).and_then(|_| out.write_all(b"\n")) {
                result = Err(e);
                break;
            }
            written += record.len() as u64 + 1;
        }
        let result = result.and_then(|_| out.flush());
        self.bytes += written;
        result.map(|_| written)
    }

    fn close(&mut self) -> io::Result<()> {
        match self.out.take() {
            Some(mut w) => {
                w.flush()?;
                (self.on_close)(&mut w)
            }
            None => Ok(()),
        }
    }

    fn bytes_emitted(&self) -> u64 {
        self.bytes
    }
}

/// Builds and opens the sink named by `spec`. TCP endpoints are connected
/// here, so an unreachable peer fails before any replay starts.
pub fn open_sink(spec: &str) -> Result<Box<dyn Sink>> {
    let mut sink: Box<dyn Sink> = match spec.parse::<SinkSpec>()? {
        SinkSpec::Stdout => Box::new(LineSink::new(BufWriter::new(io::stdout()))),
        SinkSpec::File(path) => {
            let file: File = OpenOptions::new().create(true).append(true).open(&path)?;
            Box::new(LineSink::new(BufWriter::new(file)))
        }
        SinkSpec::Tcp(addr) => {
            let stream = TcpStream::connect(&addr).map_err(|source| Error::Connection {
                addr: addr.clone(),
                source,
            })?;
            stream.set_nodelay(true)?;
            let mut sink = LineSink::new(BufWriter::new(stream));
            sink.require_utf8 = true;
            sink.on_close = |w| match w.get_ref().shutdown(Shutdown::Write) {
                Err(e) if e.kind() != io::ErrorKind::NotConnected => Err(e),
                _ => Ok(()),
            };
            Box::new(sink)
        }
        SinkSpec::Broker(target) => {
            return Err(Error::config(format!(
                "broker sink `{target}` is not supported in this build"
            )))
        }
    };
    sink.open()?;
    Ok(sink)
}
