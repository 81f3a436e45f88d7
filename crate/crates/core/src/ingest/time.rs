use std::fmt;

use chrono::format::ParseErrorKind;
use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest timezone offset accepted, in minutes (UTC±14:00).
pub const MAX_TZ_OFFSET_MINUTES: i32 = 14 * 60;

/// Which column carries the timestamp.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldSelector {
    /// Zero-based column index.
    Index(usize),
    /// Header name; requires a header row.
    Name(String),
}

impl FieldSelector {
    /// All-digit text selects by index, anything else by header name.
    pub fn parse(s: &str) -> Self {
        match s.parse::<usize>() {
            Ok(i) => FieldSelector::Index(i),
            Err(_) => FieldSelector::Name(s.to_string()),
        }
    }
}

impl fmt::Display for FieldSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldSelector::Index(i) => write!(f, "#{i}"),
            FieldSelector::Name(n) => f.write_str(n),
        }
    }
}

/// A wall-clock pattern such as `YYYY-MM-DD HH:MM:SS`.
///
/// Tokens: `YYYY` year, `MM` month (or minute once an hour token has been
/// seen), `DD` day, `HH` hour, `mm` minute, `SS`/`ss` second. Everything
/// else is matched literally.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct DatePattern {
    source: String,
    strftime: String,
}

impl DatePattern {
    pub fn new(pattern: &str) -> Result<Self> {
        let mut out = String::with_capacity(pattern.len() + 8);
        let (mut year, mut month, mut day, mut hour, mut minute, mut second) =
            (false, false, false, false, false, false);
        let mut rest = pattern;
        while !rest.is_empty() {
            let token = ["YYYY", "MM", "DD", "HH", "mm", "SS", "ss"]
                .into_iter()
                .find(|t| rest.starts_with(t));
            match token {
                Some("YYYY") => {
                    out.push_str("%Y");
                    year = true;
                }
                Some("MM") if !hour => {
                    out.push_str("%m");
                    month = true;
                }
                Some("MM") | Some("mm") => {
                    out.push_str("%M");
                    minute = true;
                }
                Some("DD") => {
                    out.push_str("%d");
                    day = true;
                }
                Some("HH") => {
                    out.push_str("%H");
                    hour = true;
                }
                Some(_) => {
                    out.push_str("%S");
                    second = true;
                }
                None => {
                    let c = rest.chars().next().unwrap();
                    if c == '%' {
                        out.push_str("%%");
                    } else {
                        out.push(c);
                    }
                    rest = &rest[c.len_utf8()..];
                    continue;
                }
            }
            rest = &rest[token.unwrap().len()..];
        }
        if !(year && month && day && hour && minute && second) {
            return Err(Error::config(format!(
                "time pattern `{pattern}` must contain year, month, day, hour, minute and second"
            )));
        }
        Ok(DatePattern {
            source: pattern.to_string(),
            strftime: out,
        })
    }

    pub fn as_str(&self) -> &str {
        &self.source
    }
}

impl From<DatePattern> for String {
    fn from(p: DatePattern) -> String {
        p.source
    }
}

impl TryFrom<String> for DatePattern {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        DatePattern::new(&s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeFormat {
    EpochSeconds,
    EpochMillis,
    Pattern(DatePattern),
}

impl TimeFormat {
    /// Parses the command-line form: `epoch`, `epoch-ms` or `pattern:STR`.
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "epoch" | "epoch-s" => Ok(TimeFormat::EpochSeconds),
            "epoch-ms" => Ok(TimeFormat::EpochMillis),
            _ => match s.strip_prefix("pattern:") {
                Some(p) => Ok(TimeFormat::Pattern(DatePattern::new(p)?)),
                None => Err(Error::config(format!(
                    "unknown time format `{s}` (expected epoch, epoch-ms or pattern:STR)"
                ))),
            },
        }
    }
}

/// Where the timestamp lives in a record and how to read it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeFieldSpec {
    pub field: FieldSelector,
    pub format: TimeFormat,
    tz_offset_minutes: i32,
}

impl TimeFieldSpec {
    pub fn new(field: FieldSelector, format: TimeFormat, tz_offset_minutes: i32) -> Result<Self> {
        if tz_offset_minutes.abs() > MAX_TZ_OFFSET_MINUTES {
            return Err(Error::config(format!(
                "timezone offset {tz_offset_minutes} min outside ±{MAX_TZ_OFFSET_MINUTES}"
            )));
        }
        Ok(TimeFieldSpec {
            field,
            format,
            tz_offset_minutes,
        })
    }

    pub fn tz_offset_minutes(&self) -> i32 {
        self.tz_offset_minutes
    }
}

/// Parses `+HH:MM`, `-HH:MM`, `Z` or `UTC` into signed minutes.
pub fn parse_tz_offset(s: &str) -> Result<i32> {
    if s == "Z" || s.eq_ignore_ascii_case("utc") {
        return Ok(0);
    }
    let bad = || Error::config(format!("bad timezone offset `{s}` (expected +HH:MM)"));
    let (sign, body) = match s.as_bytes().first() {
        Some(b'+') => (1, &s[1..]),
        Some(b'-') => (-1, &s[1..]),
        _ => return Err(bad()),
    };
    let (h, m) = body.split_once(':').ok_or_else(bad)?;
    let h: i32 = h.parse().map_err(|_| bad())?;
    let m: i32 = m.parse().map_err(|_| bad())?;
    if h.to_string().len() > 2 || !(0..60).contains(&m) {
        return Err(bad());
    }
    let total = sign * (h * 60 + m);
    if total.abs() > MAX_TZ_OFFSET_MINUTES {
        return Err(bad());
    }
    Ok(total)
}

/// Why a single time value was rejected.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TimeError {
    #[error("unparseable `{raw}`: {reason}")]
    Unparseable { raw: String, reason: String },
    #[error("`{raw}` is out of range: {reason}")]
    OutOfRange { raw: String, reason: String },
}

impl TimeError {
    pub(crate) fn into_error(self, line: u64, field: &FieldSelector) -> Error {
        match self {
            TimeError::Unparseable { .. } => Error::Parse {
                line,
                field: field.to_string(),
                reason: self.to_string(),
            },
            TimeError::OutOfRange { .. } => Error::Range(format!("line {line}: {self}")),
        }
    }
}

/// Converts a raw time field into UTC epoch seconds, flooring sub-second
/// precision and applying the configured offset to wall-clock values.
pub fn parse_time(raw: &str, spec: &TimeFieldSpec) -> Result<u64, TimeError> {
    let raw_trim = raw.trim();
    let unparseable = |reason: &str| TimeError::Unparseable {
        raw: raw.to_string(),
        reason: reason.to_string(),
    };
    let out_of_range = |reason: &str| TimeError::OutOfRange {
        raw: raw.to_string(),
        reason: reason.to_string(),
    };
    if raw_trim.is_empty() {
        return Err(unparseable("empty field"));
    }
    let seconds: i64 = match &spec.format {
        TimeFormat::EpochSeconds => parse_integer(raw_trim).map_err(|e| e.with_raw(raw))?,
        TimeFormat::EpochMillis => parse_integer(raw_trim)
            .map_err(|e| e.with_raw(raw))?
            .div_euclid(1000),
        TimeFormat::Pattern(p) => {
            let local =
                NaiveDateTime::parse_from_str(raw_trim, &p.strftime).map_err(|e| {
                    match e.kind() {
                        ParseErrorKind::OutOfRange | ParseErrorKind::Impossible => {
                            out_of_range(&e.to_string())
                        }
                        _ => unparseable(&e.to_string()),
                    }
                })?;
            local.and_utc().timestamp() - i64::from(spec.tz_offset_minutes) * 60
        }
    };
    u64::try_from(seconds).map_err(|_| out_of_range("before the Unix epoch"))
}

fn parse_integer(s: &str) -> Result<i64, TimeError> {
    if !s
        .bytes()
        .enumerate()
        .all(|(i, b)| b.is_ascii_digit() || (i == 0 && b == b'-'))
    {
        return Err(TimeError::Unparseable {
            raw: String::new(),
            reason: "not an integer".into(),
        });
    }
    s.parse::<i64>().map_err(|e| TimeError::OutOfRange {
        raw: String::new(),
        reason: e.to_string(),
    })
}

impl TimeError {
    fn with_raw(self, raw: &str) -> Self {
        match self {
            TimeError::Unparseable { reason, .. } => TimeError::Unparseable {
                raw: raw.into(),
                reason,
            },
            TimeError::OutOfRange { reason, .. } => TimeError::OutOfRange {
                raw: raw.into(),
                reason,
            },
        }
    }
}
