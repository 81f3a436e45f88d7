//! File-backed store for segments and simulated streams.
//!
//! Layout under the root:
//!
//! ```text
//! segment/<id>/manifest.json
//! segment/<id>/data.tsv        t<TAB>payload
//! stream/<id>/manifest.json
//! stream/<id>/data.tsv         scale_stamp<TAB>t_original<TAB>payload
//! ```
//!
//! Data files are UTF-8 with `\n` line endings. The manifest records the
//! SHA-256 of `data.tsv`, verified on every read. Entries are written to a
//! hidden temporary directory and renamed into place, so a crashed write
//! never leaves a half-registered entry.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use bytes::Bytes;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ingest::{Event, Schema, StreamSegment, SyntheticParams};
use crate::transform::{Provenance, ScaledEvent, SimulatedStream};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DATA_FILE: &str = "data.tsv";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Segment,
    Stream,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Segment => "segment",
            Kind::Stream => "stream",
        }
    }

    fn other(self) -> Kind {
        match self {
            Kind::Segment => Kind::Stream,
            Kind::Stream => Kind::Segment,
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How a segment was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SegmentOrigin {
    Ingest {
        source: String,
        schema: Schema,
        declared_span: Option<u64>,
        rejected: u64,
    },
    Synthetic(SyntheticParams),
    Unspecified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ManifestBody {
    Segment {
        t_min: u64,
        t_max: u64,
        span_seconds: u64,
        origin: SegmentOrigin,
    },
    Stream {
        window: u64,
        provenance: Provenance,
        /// Digest of the source segment's data file at simulation time.
        source_digest: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub id: String,
    pub format_version: u32,
    pub count: u64,
    /// `sha256:<hex>` of `data.tsv`.
    pub digest: String,
    #[serde(flatten)]
    pub body: ManifestBody,
}

impl Manifest {
    pub fn kind(&self) -> Kind {
        match self.body {
            ManifestBody::Segment { .. } => Kind::Segment,
            ManifestBody::Stream { .. } => Kind::Stream,
        }
    }
}

/// Result of [`Store::list`].
#[derive(Debug, Default)]
pub struct Catalog {
    pub entries: Vec<Manifest>,
    pub errors: Vec<(PathBuf, Error)>,
}

pub fn digest_hex(data: &[u8]) -> String {
    format!("sha256:{}", hex::encode(Sha256::digest(data)))
}

/// Ids are 1-128 characters of `[A-Za-z0-9._-]` and do not start with `.`.
pub fn validate_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'.' | b'_' | b'-'));
    if ok {
        Ok(())
    } else {
        Err(Error::config(format!(
            "invalid id `{id}`: use 1-128 characters from [A-Za-z0-9._-], not starting with '.'"
        )))
    }
}

pub fn encode_segment_data(segment: &StreamSegment) -> Vec<u8> {
    let mut out = Vec::with_capacity(segment.count() * 48);
    for e in segment.events() {
        let _ = write!(out, "{}\t", e.t);
        out.extend_from_slice(&e.payload);
        out.push(b'\n');
    }
    out
}

pub fn encode_stream_data(stream: &SimulatedStream) -> Vec<u8> {
    let mut out = Vec::with_capacity(stream.events.len() * 48);
    for e in &stream.events {
        let _ = write!(out, "{}\t{}\t", e.scale_stamp, e.t_original);
        out.extend_from_slice(&e.payload);
        out.push(b'\n');
    }
    out
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Store { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn entry_dir(&self, kind: Kind, id: &str) -> PathBuf {
        self.root.join(kind.as_str()).join(id)
    }

    /// Where `ingest` diverts unparseable lines for segment `id`.
    pub fn rejects_path(&self, id: &str) -> PathBuf {
        self.root.join(format!("{id}.rejects"))
    }

    pub fn exists(&self, kind: Kind, id: &str) -> bool {
        self.entry_dir(kind, id).exists()
    }

    pub fn write_segment(
        &self,
        segment: &StreamSegment,
        origin: SegmentOrigin,
    ) -> Result<Manifest> {
        validate_id(segment.id())?;
        let data = encode_segment_data(segment);
        let manifest = Manifest {
            id: segment.id().to_string(),
            format_version: FORMAT_VERSION,
            count: segment.count() as u64,
            digest: digest_hex(&data),
            body: ManifestBody::Segment {
                t_min: segment.t_min(),
                t_max: segment.t_max(),
                span_seconds: segment.span_seconds(),
                origin,
            },
        };
        self.commit(Kind::Segment, &manifest, &data)?;
        Ok(manifest)
    }

    /// Persists a stream. The source segment must already be stored; its
    /// digest is recorded so the stream can be regenerated and checked.
    pub fn write_stream(&self, stream: &SimulatedStream) -> Result<Manifest> {
        validate_id(&stream.id)?;
        if stream.events.iter().any(|e| e.payload.contains(&b'\n')) {
            return Err(Error::config("stream payload contains a newline"));
        }
        if stream.events.iter().any(|e| e.scale_stamp >= stream.window)
            || stream
                .events
                .windows(2)
                .any(|w| w[0].scale_stamp > w[1].scale_stamp)
        {
            return Err(Error::Invariant(format!(
                "stream `{}` is not bucket-ordered within [0, {})",
                stream.id, stream.window
            )));
        }
        let source = self.manifest(Kind::Segment, &stream.provenance.segment_id)?;
        let data = encode_stream_data(stream);
        let manifest = Manifest {
            id: stream.id.clone(),
            format_version: FORMAT_VERSION,
            count: stream.events.len() as u64,
            digest: digest_hex(&data),
            body: ManifestBody::Stream {
                window: stream.window,
                provenance: stream.provenance.clone(),
                source_digest: source.digest,
            },
        };
        self.commit(Kind::Stream, &manifest, &data)?;
        Ok(manifest)
    }

    fn commit(&self, kind: Kind, manifest: &Manifest, data: &[u8]) -> Result<()> {
        let conflict = || Error::Conflict {
            kind: kind.as_str(),
            id: manifest.id.clone(),
        };
        let final_dir = self.entry_dir(kind, &manifest.id);
        if final_dir.exists() {
            return Err(conflict());
        }
        let parent = self.root.join(kind.as_str());
        fs::create_dir_all(&parent)?;
        let tmp = parent.join(format!(".tmp-{}-{}", manifest.id, std::process::id()));
        if tmp.exists() {
            fs::remove_dir_all(&tmp)?;
        }
        fs::create_dir(&tmp)?;
        let staged = (|| -> Result<()> {
            write_synced(&tmp.join(DATA_FILE), data)?;
            let mut json = serde_json::to_vec_pretty(manifest)?;
            json.push(b'\n');
            write_synced(&tmp.join(MANIFEST_FILE), &json)?;
            Ok(())
        })();
        if let Err(e) = staged {
            let _ = fs::remove_dir_all(&tmp);
            return Err(e);
        }
        match fs::rename(&tmp, &final_dir) {
            Ok(()) => Ok(()),
            Err(e) => {
                let _ = fs::remove_dir_all(&tmp);
                if final_dir.exists() {
                    Err(conflict())
                } else {
                    Err(e.into())
                }
            }
        }
    }

    /// Loads and checks the manifest of `kind/id`.
    pub fn manifest(&self, kind: Kind, id: &str) -> Result<Manifest> {
        validate_id(id)?;
        let dir = self.entry_dir(kind, id);
        if !dir.exists() {
            if self.exists(kind.other(), id) {
                return Err(Error::KindMismatch {
                    id: id.to_string(),
                    expected: kind.as_str(),
                    found: kind.other().as_str(),
                });
            }
            return Err(Error::NotFound {
                kind: kind.as_str(),
                id: id.to_string(),
            });
        }
        let manifest = read_manifest(&dir.join(MANIFEST_FILE))?;
        if manifest.kind() != kind || manifest.id != id {
            return Err(Error::Corruption {
                path: dir.join(MANIFEST_FILE),
                reason: format!("manifest describes {} `{}`", manifest.kind(), manifest.id),
            });
        }
        Ok(manifest)
    }

    fn verified_data(&self, kind: Kind, manifest: &Manifest) -> Result<(PathBuf, Vec<u8>)> {
        let path = self.entry_dir(kind, &manifest.id).join(DATA_FILE);
        let data = fs::read(&path).map_err(|e| corruption(&path, e))?;
        let digest = digest_hex(&data);
        if digest != manifest.digest {
            return Err(Error::Corruption {
                path,
                reason: format!(
                    "digest mismatch: manifest {} vs data {digest}",
                    manifest.digest
                ),
            });
        }
        Ok((path, data))
    }

    pub fn read_segment(&self, id: &str) -> Result<StreamSegment> {
        let manifest = self.manifest(Kind::Segment, id)?;
        let (path, data) = self.verified_data(Kind::Segment, &manifest)?;
        let ManifestBody::Segment {
            t_min,
            t_max,
            span_seconds,
            ..
        } = manifest.body
        else {
            unreachable!("manifest kind checked above");
        };
        let data = Bytes::from(data);
        let mut events = Vec::with_capacity(manifest.count as usize);
        for (n, line) in lines(&data) {
            let bad = |why: &str| Error::Corruption {
                path: path.clone(),
                reason: format!("line {n}: {why}"),
            };
            let tab = line
                .iter()
                .position(|&b| b == b'\t')
                .ok_or_else(|| bad("missing TAB"))?;
            let t = parse_u64(&line[..tab]).ok_or_else(|| bad("bad timestamp"))?;
            if events.last().is_some_and(|e: &Event| e.t > t) {
                return Err(bad("events out of order"));
            }
            events.push(Event::new(t, line.slice(tab + 1..)));
        }
        let segment = StreamSegment::from_sorted(id.to_string(), events, Some(span_seconds))?;
        if segment.count() as u64 != manifest.count
            || (segment.count() > 0 && (segment.t_min() != t_min || segment.t_max() != t_max))
        {
            return Err(Error::Corruption {
                path,
                reason: "data disagrees with manifest counts or bounds".into(),
            });
        }
        Ok(segment)
    }

    pub fn read_stream(&self, id: &str) -> Result<SimulatedStream> {
        let manifest = self.manifest(Kind::Stream, id)?;
        let (path, data) = self.verified_data(Kind::Stream, &manifest)?;
        let ManifestBody::Stream {
            window, provenance, ..
        } = manifest.body
        else {
            unreachable!("manifest kind checked above");
        };
        let data = Bytes::from(data);
        let mut events = Vec::with_capacity(manifest.count as usize);
        for (n, line) in lines(&data) {
            let bad = |why: &str| Error::Corruption {
                path: path.clone(),
                reason: format!("line {n}: {why}"),
            };
            let mut tabs = line
                .iter()
                .enumerate()
                .filter(|(_, &b)| b == b'\t')
                .map(|(i, _)| i);
            let (a, b) = match (tabs.next(), tabs.next()) {
                (Some(a), Some(b)) => (a, b),
                _ => return Err(bad("expected three fields")),
            };
            let scale_stamp = parse_u64(&line[..a]).ok_or_else(|| bad("bad scale_stamp"))?;
            let t_original = parse_u64(&line[a + 1..b]).ok_or_else(|| bad("bad t_original"))?;
            if scale_stamp >= window
                || events
                    .last()
                    .is_some_and(|e: &ScaledEvent| e.scale_stamp > scale_stamp)
            {
                return Err(bad("scale_stamp out of order or range"));
            }
            events.push(ScaledEvent {
                scale_stamp,
                t_original,
                payload: line.slice(b + 1..),
            });
        }
        if events.len() as u64 != manifest.count {
            return Err(Error::Corruption {
                path,
                reason: "record count disagrees with manifest".into(),
            });
        }
        Ok(SimulatedStream {
            id: id.to_string(),
            window,
            multiple: provenance.multiple,
            events,
            provenance,
        })
    }

    /// Every stored manifest; unreadable ones are reported individually.
    pub fn list(&self) -> Catalog {
        let mut catalog = Catalog::default();
        for kind in [Kind::Segment, Kind::Stream] {
            let dir = self.root.join(kind.as_str());
            let entries = match fs::read_dir(&dir) {
                Ok(rd) => rd,
                Err(e) if e.kind() == io::ErrorKind::NotFound => continue,
                Err(e) => {
                    catalog.errors.push((dir, e.into()));
                    continue;
                }
            };
            let mut names: Vec<_> = entries
                .filter_map(|e| e.ok())
                .map(|e| e.file_name().to_string_lossy().into_owned())
                .filter(|n| !n.starts_with('.'))
                .collect();
            names.sort();
            for name in names {
                match self.manifest(kind, &name) {
                    Ok(m) => catalog.entries.push(m),
                    Err(e) => catalog.errors.push((dir.join(&name), e)),
                }
            }
        }
        catalog
    }
}

fn read_manifest(path: &Path) -> Result<Manifest> {
    let bytes = fs::read(path).map_err(|e| corruption(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Corruption {
        path: path.to_path_buf(),
        reason: format!("unreadable manifest: {e}"),
    })
}

fn corruption(path: &Path, e: io::Error) -> Error {
    Error::Corruption {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

fn write_synced(path: &Path, data: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(data)?;
    f.sync_all()?;
    Ok(())
}

fn parse_u64(b: &[u8]) -> Option<u64> {
    if b.is_empty() || !b.iter().all(u8::is_ascii_digit) {
        return None;
    }
    std::str::from_utf8(b).ok()?.parse().ok()
}

/// Newline-terminated lines as zero-copy slices, numbered from 1.
fn lines(data: &Bytes) -> impl Iterator<Item = (usize, Bytes)> + '_ {
    let mut start = 0;
    let mut n = 0;
    std::iter::from_fn(move || {
        if start >= data.len() {
            return None;
        }
        let end = data[start..]
            .iter()
            .position(|&b| b == b'\n')
            .map_or(data.len(), |p| start + p);
        let line = data.slice(start..end);
        start = end + 1;
        n += 1;
        Some((n, line))
    })
}
