use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::rt_e2::{Cqi, Tti};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("cannot read trace {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: expected `tti_offset,cqi`, found {content:?}")]
    Malformed { line: usize, content: String },
    #[error("line {line}: cqi {value} is outside 1..=15")]
    CqiOutOfRange { line: usize, value: i64 },
    #[error("line {line}: tti offset {offset} does not increase")]
    NotIncreasing { line: usize, offset: Tti },
    #[error("line {line}: first tti offset must be 0, found {offset}")]
    NonZeroStart { line: usize, offset: Tti },
    #[error("trace has no samples")]
    Empty,
}

/// CQI samples replayed cyclically.
///
/// The value at offset `o` is the last sample with `tti_offset <= o`. One
/// cycle lasts `last offset + period` TTIs, where `period` is the spacing of
/// the first two samples.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CqiTrace {
    samples: Vec<(Tti, Cqi)>,
    period: Tti,
}

impl CqiTrace {
    pub fn new(samples: Vec<(Tti, Cqi)>) -> Result<Self, TraceError> {
        let Some(&(first, _)) = samples.first() else {
            return Err(TraceError::Empty);
        };
        if first != 0 {
            return Err(TraceError::NonZeroStart {
                line: 1,
                offset: first,
            });
        }
        for (i, w) in samples.windows(2).enumerate() {
            if w[1].0 <= w[0].0 {
                return Err(TraceError::NotIncreasing {
                    line: i + 2,
                    offset: w[1].0,
                });
            }
        }
        let period = samples.get(1).map_or(1, |s| s.0);
        Ok(CqiTrace { samples, period })
    }

    pub fn samples(&self) -> &[(Tti, Cqi)] {
        &self.samples
    }

    pub fn period(&self) -> Tti {
        self.period
    }

    pub fn cycle_len(&self) -> Tti {
        self.samples[self.samples.len() - 1].0 + self.period
    }

    pub fn at(&self, tti: Tti) -> Cqi {
        let pos = tti % self.cycle_len();
        let i = self.samples.partition_point(|&(o, _)| o <= pos);
        self.samples[i - 1].1
    }
}

/// Parses trace CSV text: one `tti_offset,cqi` pair per line, with an
/// optional header line. Blank lines and `#` comments are skipped.
pub fn parse_trace(text: &str) -> Result<CqiTrace, TraceError> {
    let mut samples = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        let malformed = || TraceError::Malformed {
            line,
            content: content.to_string(),
        };
        let mut fields = content.split(',').map(str::trim);
        let (Some(a), Some(b), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(malformed());
        };
        let (offset, value) = match (a.parse::<Tti>(), b.parse::<i64>()) {
            (Ok(o), Ok(v)) => (o, v),
            _ if samples.is_empty() && content.chars().any(char::is_alphabetic) => continue,
            _ => return Err(malformed()),
        };
        let cqi = u8::try_from(value)
            .ok()
            .and_then(Cqi::new)
            .ok_or(TraceError::CqiOutOfRange { line, value })?;
        if let Some(&(prev, _)) = samples.last() {
            if offset <= prev {
                return Err(TraceError::NotIncreasing { line, offset });
            }
        } else if offset != 0 {
            return Err(TraceError::NonZeroStart { line, offset });
        }
        samples.push((offset, cqi));
    }
    CqiTrace::new(samples)
}

pub fn load_trace(path: &Path) -> Result<CqiTrace, TraceError> {
    let text = fs::read_to_string(path).map_err(|source| TraceError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_trace(&text)
}

/// Renders a trace in the format read by [`parse_trace`].
pub fn write_trace_csv(trace: &CqiTrace) -> String {
    let mut out = String::from("tti_offset,cqi\n");
    for (o, c) in trace.samples() {
        out.push_str(&format!("{o},{c}\n"));
    }
    out
}
