use std::fmt;

use serde::{Deserialize, Serialize};

/// Payload kind. `U`/`V` carry scaling-vector blocks, `Q`/`R` carry scattered
/// kernel products and `S` carries scalars and control markers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Kind {
    U,
    V,
    Q,
    R,
    S,
}

impl Kind {
    pub const ALL: [Kind; 5] = [Kind::U, Kind::V, Kind::Q, Kind::R, Kind::S];

    pub fn code(self) -> u8 {
        match self {
            Kind::U => 0,
            Kind::V => 1,
            Kind::Q => 2,
            Kind::R => 3,
            Kind::S => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<Kind> {
        Kind::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub sender: u16,
    pub kind: Kind,
    /// Sender's iteration stamp at send time.
    pub iteration: u64,
    pub block_index: u32,
    pub payload: Vec<f64>,
}

impl Envelope {
    pub fn new(sender: usize, kind: Kind, iteration: u64, block_index: usize, payload: Vec<f64>) -> Self {
        Envelope {
            sender: sender as u16,
            kind,
            iteration,
            block_index: block_index as u32,
            payload,
        }
    }

    pub fn control(sender: usize, code: u32) -> Self {
        Envelope {
            sender: sender as u16,
            kind: Kind::S,
            iteration: 0,
            block_index: code,
            payload: Vec::new(),
        }
    }

    /// Bitwise equality, distinguishing `-0.0` and NaN payloads.
    pub fn bit_eq(&self, other: &Envelope) -> bool {
        self.sender == other.sender
            && self.kind == other.kind
            && self.iteration == other.iteration
            && self.block_index == other.block_index
            && self.payload.len() == other.payload.len()
            && self.payload.iter().zip(&other.payload).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Control codes carried in the block index of empty `S` frames.
pub mod control {
    pub const HELLO: u32 = u32::MAX;
    pub const ASYNC_BEGIN: u32 = u32::MAX - 1;
    pub const ASYNC_END: u32 = u32::MAX - 2;
}
