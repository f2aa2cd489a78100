//! Wire format, little-endian throughout:
//!
//! ```text
//! "FSK1" | version u8 = 1 | kind u8 | sender u16 | block_index u32
//!        | iteration u64 | payload_len u32 | payload_len × f64
//! ```
//!
//! Kind codes are 0 = U, 1 = V, 2 = Q, 3 = R and 4 = S (scalars and control).

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::envelope::{Envelope, Kind};

pub const MAGIC: &[u8; 4] = b"FSK1";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 24;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrameError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("unknown kind byte {0}")]
    BadKind(u8),
    #[error("frame length mismatch: header declares {declared} payload values, {actual} bytes follow")]
    Length { declared: u64, actual: usize },
    #[error("payload of {0} values does not fit the length field")]
    TooLong(usize),
    #[error("payload length {got} does not match expected {expected}")]
    PayloadMismatch { expected: usize, got: usize },
}

pub fn encode(env: &Envelope) -> Result<Vec<u8>, FrameError> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * env.payload.len());
    write_header(&mut out, env)?;
    for x in &env.payload {
        out.extend_from_slice(&x.to_le_bytes());
    }
    Ok(out)
}

fn write_header(out: &mut Vec<u8>, env: &Envelope) -> Result<(), FrameError> {
    let len = u32::try_from(env.payload.len()).map_err(|_| FrameError::TooLong(env.payload.len()))?;
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(env.kind.code());
    out.extend_from_slice(&env.sender.to_le_bytes());
    out.extend_from_slice(&env.block_index.to_le_bytes());
    out.extend_from_slice(&env.iteration.to_le_bytes());
    out.extend_from_slice(&len.to_le_bytes());
    Ok(())
}

struct Header {
    kind: Kind,
    sender: u16,
    block_index: u32,
    iteration: u64,
    len: u32,
}

fn parse_header(h: &[u8; HEADER_LEN]) -> Result<Header, FrameError> {
    let magic: [u8; 4] = h[0..4].try_into().unwrap();
    if &magic != MAGIC {
        return Err(FrameError::BadMagic(magic));
    }
    if h[4] != VERSION {
        return Err(FrameError::BadVersion(h[4]));
    }
    let kind = Kind::from_code(h[5]).ok_or(FrameError::BadKind(h[5]))?;
    Ok(Header {
        kind,
        sender: u16::from_le_bytes(h[6..8].try_into().unwrap()),
        block_index: u32::from_le_bytes(h[8..12].try_into().unwrap()),
        iteration: u64::from_le_bytes(h[12..20].try_into().unwrap()),
        len: u32::from_le_bytes(h[20..24].try_into().unwrap()),
    })
}

fn payload_from(bytes: &[u8]) -> Vec<f64> {
    bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()
}

pub fn decode(bytes: &[u8]) -> Result<Envelope, FrameError> {
    if bytes.len() < HEADER_LEN {
        return Err(FrameError::Length { declared: 0, actual: bytes.len() });
    }
    let h = parse_header(bytes[..HEADER_LEN].try_into().unwrap())?;
    let body = &bytes[HEADER_LEN..];
    if body.len() as u64 != 8 * h.len as u64 {
        return Err(FrameError::Length { declared: h.len as u64, actual: body.len() });
    }
    Ok(Envelope {
        sender: h.sender,
        kind: h.kind,
        iteration: h.iteration,
        block_index: h.block_index,
        payload: payload_from(body),
    })
}

#[derive(Debug, Error)]
pub enum ReadError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

pub fn read_frame<R: Read>(r: &mut R) -> Result<Envelope, ReadError> {
    let mut h = [0u8; HEADER_LEN];
    r.read_exact(&mut h)?;
    let h = parse_header(&h)?;
    let mut body = vec![0u8; 8 * h.len as usize];
    r.read_exact(&mut body)?;
    Ok(Envelope {
        sender: h.sender,
        kind: h.kind,
        iteration: h.iteration,
        block_index: h.block_index,
        payload: payload_from(&body),
    })
}

pub fn write_frame<W: Write>(w: &mut W, env: &Envelope) -> Result<usize, ReadError> {
    let bytes = encode(env)?;
    w.write_all(&bytes)?;
    Ok(bytes.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_is_trailing_ieee_bytes() {
        let bytes = encode(&Envelope::new(3, Kind::V, 9, 1, vec![1.0])).unwrap();
        assert_eq!(&bytes[..4], b"FSK1");
        assert_eq!(bytes[4], 1);
        assert_eq!(bytes[5], 1);
        assert_eq!(&bytes[bytes.len() - 8..], &[0, 0, 0, 0, 0, 0, 0xF0, 0x3F]);
        assert_eq!(bytes.len(), HEADER_LEN + 8);
    }

    #[test]
    fn rejects_kind_seven() {
        let mut bytes = encode(&Envelope::new(0, Kind::U, 0, 0, vec![2.0])).unwrap();
        bytes[5] = 7;
        assert_eq!(decode(&bytes).unwrap_err(), FrameError::BadKind(7));
    }

    #[test]
    fn rejects_bad_magic_version_and_length() {
        let good = encode(&Envelope::new(0, Kind::Q, 0, 0, vec![2.0, 3.0])).unwrap();
        let mut b = good.clone();
        b[0] = b'X';
        assert!(matches!(decode(&b), Err(FrameError::BadMagic(_))));
        let mut b = good.clone();
        b[4] = 2;
        assert_eq!(decode(&b).unwrap_err(), FrameError::BadVersion(2));
        assert!(matches!(decode(&good[..good.len() - 1]), Err(FrameError::Length { .. })));
    }

    #[test]
    fn stream_roundtrip() {
        let envs = [Envelope::new(1, Kind::R, 5, 2, vec![-0.0, f64::MIN_POSITIVE]), Envelope::control(4, 17)];
        let mut buf = Vec::new();
        for e in &envs {
            write_frame(&mut buf, e).unwrap();
        }
        let mut cur = &buf[..];
        for e in &envs {
            assert!(read_frame(&mut cur).unwrap().bit_eq(e));
        }
    }
}
