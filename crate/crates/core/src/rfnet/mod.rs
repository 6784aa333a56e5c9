//! Radio link between the hub and the vehicles: frame codec, channel
//! assignment and a seeded lossy broadcast medium.

mod codec;
mod medium;

use thiserror::Error;

pub use codec::{
    crc16_ccitt_false, decode, encode, Message, MessageKind, TelemetryPayload, WireFrame, MAX_FRAME_LEN,
    MAX_PAYLOAD_LEN,
};
pub use medium::{read_capture, write_capture, CaptureRecord, Medium, MediumConfig, Radio, RadioId};

/// Number of distinct transceiver frequencies.
pub const CHANNEL_COUNT: u32 = 128;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RfError {
    #[error("vehicle id {0} exceeds the {CHANNEL_COUNT}-channel limit")]
    VehicleLimitExceeded(u32),
    #[error("payload of {0} bytes does not fit in a frame")]
    PayloadTooLarge(usize),
    #[error("missing sync byte")]
    BadSync,
    #[error("unsupported frame version")]
    BadVersion,
    #[error("frame length does not match its header")]
    BadLength,
    #[error("frame checksum mismatch")]
    CrcMismatch,
    #[error("unknown message kind {0}")]
    UnknownKind(u8),
    #[error("truncated capture record")]
    TruncatedCapture,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Channel(u8);

impl Channel {
    pub fn new(index: u32) -> Result<Self, RfError> {
        if index < CHANNEL_COUNT {
            Ok(Self(index as u8))
        } else {
            Err(RfError::VehicleLimitExceeded(index))
        }
    }

    pub fn index(self) -> u8 {
        self.0
    }
}

/// Each vehicle listens on its own frequency: channel index = vehicle id.
pub fn assign_channel(vehicle_id: u32) -> Result<Channel, RfError> {
    Channel::new(vehicle_id)
}
