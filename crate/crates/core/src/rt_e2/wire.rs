//! Fixed-layout binary encoding of RT-E2 frames.
//!
//! Every frame starts with a little-endian `u16` version followed by a `u8`
//! frame kind. All integers are little-endian; weights and media buffer
//! values are IEEE-754 binary64 stored by bit pattern, so decoding is exact.
//!
//! ```text
//! header   : version u16 | kind u8
//! report   : ran_time u64 | n u32 | n * (rnti u32 | cqi u8 | backlog u64 | tx u64)
//! policy   : ric_time u64 | n u32 | n * (rnti u32 | weight f64)
//! appstate : emitted_at u64 | rnti u32 | media_buffer_s f64
//! close    : (empty)
//! ```

use std::collections::BTreeMap;

use thiserror::Error;

use super::msg::{AppStateMsg, Cqi, MsgError, PolicyMsg, ReportMsg, UeReport};

pub const WIRE_VERSION: u16 = 1;

pub const HEADER_LEN: usize = 3;
pub const REPORT_UE_LEN: usize = 4 + 1 + 8 + 8;
pub const POLICY_UE_LEN: usize = 4 + 8;

const KIND_REPORT: u8 = 1;
const KIND_POLICY: u8 = 2;
const KIND_APP_STATE: u8 = 3;
const KIND_CLOSE: u8 = 4;

#[derive(Clone, Debug, PartialEq)]
pub enum Frame {
    Report(ReportMsg),
    Policy(PolicyMsg),
    AppState(AppStateMsg),
    Close,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WireError {
    #[error("frame truncated at offset {offset}: needed {needed} more bytes")]
    Truncated { offset: usize, needed: usize },
    #[error("unsupported wire version {0}")]
    BadVersion(u16),
    #[error("unknown frame kind {0}")]
    UnknownKind(u8),
    #[error("{0} trailing bytes after frame")]
    TrailingBytes(usize),
    #[error("cqi {cqi} at offset {offset} is outside 1..=15")]
    BadCqi { offset: usize, cqi: u8 },
    #[error("frame content invalid: {0}")]
    Invalid(#[from] MsgError),
}

fn put_header(buf: &mut Vec<u8>, kind: u8) {
    buf.extend_from_slice(&WIRE_VERSION.to_le_bytes());
    buf.push(kind);
}

pub fn encode_report(msg: &ReportMsg) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + 12 + msg.ues().len() * REPORT_UE_LEN);
    encode_report_into(msg, &mut buf);
    buf
}

/// Appends the encoding of `msg` to `buf`, reusing its allocation.
pub fn encode_report_into(msg: &ReportMsg, buf: &mut Vec<u8>) {
    put_header(buf, KIND_REPORT);
    buf.extend_from_slice(&msg.ran_time().to_le_bytes());
    buf.extend_from_slice(&(msg.ues().len() as u32).to_le_bytes());
    for ue in msg.ues() {
        buf.extend_from_slice(&ue.rnti.to_le_bytes());
        buf.push(ue.cqi.get());
        buf.extend_from_slice(&ue.backlog_bytes.to_le_bytes());
        buf.extend_from_slice(&ue.tx_bytes_last_tti.to_le_bytes());
    }
}

pub fn encode_policy(msg: &PolicyMsg) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + 12 + msg.weights().len() * POLICY_UE_LEN);
    encode_policy_into(msg, &mut buf);
    buf
}

pub fn encode_policy_into(msg: &PolicyMsg, buf: &mut Vec<u8>) {
    put_header(buf, KIND_POLICY);
    buf.extend_from_slice(&msg.ric_time().to_le_bytes());
    buf.extend_from_slice(&(msg.weights().len() as u32).to_le_bytes());
    for (rnti, weight) in msg.weights() {
        buf.extend_from_slice(&rnti.to_le_bytes());
        buf.extend_from_slice(&weight.to_bits().to_le_bytes());
    }
}

pub fn encode_app_state_into(msg: &AppStateMsg, buf: &mut Vec<u8>) {
    put_header(buf, KIND_APP_STATE);
    buf.extend_from_slice(&msg.emitted_at.to_le_bytes());
    buf.extend_from_slice(&msg.rnti.to_le_bytes());
    buf.extend_from_slice(&msg.media_buffer_s.to_bits().to_le_bytes());
}

pub fn encode_close_into(buf: &mut Vec<u8>) {
    put_header(buf, KIND_CLOSE);
}

pub fn encode_frame(frame: &Frame) -> Vec<u8> {
    let mut buf = Vec::new();
    match frame {
        Frame::Report(m) => encode_report_into(m, &mut buf),
        Frame::Policy(m) => encode_policy_into(m, &mut buf),
        Frame::AppState(m) => encode_app_state_into(m, &mut buf),
        Frame::Close => encode_close_into(&mut buf),
    }
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], WireError> {
        let end = self.pos + N;
        if end > self.bytes.len() {
            return Err(WireError::Truncated {
                offset: self.pos,
                needed: end - self.bytes.len(),
            });
        }
        let mut out = [0u8; N];
        out.copy_from_slice(&self.bytes[self.pos..end]);
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take::<1>()?[0])
    }

    fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_le_bytes(self.take()?))
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64, WireError> {
        Ok(f64::from_bits(self.u64()?))
    }

    /// Rejects counts whose payload cannot fit in the remaining bytes, so a
    /// corrupt count never drives a huge allocation.
    fn count(&mut self, item_len: usize) -> Result<usize, WireError> {
        let n = self.u32()? as usize;
        let remaining = self.bytes.len() - self.pos;
        if n.saturating_mul(item_len) > remaining {
            return Err(WireError::Truncated {
                offset: self.pos,
                needed: n.saturating_mul(item_len) - remaining,
            });
        }
        Ok(n)
    }
}

pub fn decode(bytes: &[u8]) -> Result<Frame, WireError> {
    let mut r = Reader { bytes, pos: 0 };
    let version = r.u16()?;
    if version != WIRE_VERSION {
        return Err(WireError::BadVersion(version));
    }
    let frame = match r.u8()? {
        KIND_REPORT => {
            let ran_time = r.u64()?;
            let n = r.count(REPORT_UE_LEN)?;
            let mut ues = Vec::with_capacity(n);
            for _ in 0..n {
                let rnti = r.u32()?;
                let offset = r.pos;
                let raw = r.u8()?;
                let cqi = Cqi::new(raw).ok_or(WireError::BadCqi { offset, cqi: raw })?;
                ues.push(UeReport {
                    rnti,
                    cqi,
                    backlog_bytes: r.u64()?,
                    tx_bytes_last_tti: r.u64()?,
                });
            }
            Frame::Report(ReportMsg::new(ran_time, ues)?)
        }
        KIND_POLICY => {
            let ric_time = r.u64()?;
            let n = r.count(POLICY_UE_LEN)?;
            let mut weights = BTreeMap::new();
            for _ in 0..n {
                let rnti = r.u32()?;
                let w = r.f64()?;
                if weights.insert(rnti, w).is_some() {
                    return Err(MsgError::DuplicateRnti(rnti).into());
                }
            }
            Frame::Policy(PolicyMsg::new(ric_time, weights)?)
        }
        KIND_APP_STATE => {
            let emitted_at = r.u64()?;
            let rnti = r.u32()?;
            let mb = r.f64()?;
            Frame::AppState(AppStateMsg::new(rnti, emitted_at, mb)?)
        }
        KIND_CLOSE => Frame::Close,
        other => return Err(WireError::UnknownKind(other)),
    };
    if r.pos != bytes.len() {
        return Err(WireError::TrailingBytes(bytes.len() - r.pos));
    }
    Ok(frame)
}
