//! Byte layout of a radio frame:
//!
//! ```text
//! 0x7E | 0x01 | kind | vehicle_id | length | payload[length] | crc16 (BE)
//! ```
//!
//! The CRC is CRC-16/CCITT-FALSE over `version..=payload`. Frames never
//! exceed 32 bytes, which caps the payload at 25 bytes.

use crate::grid::NodeId;

use super::RfError;

pub const SYNC: u8 = 0x7E;
pub const VERSION: u8 = 0x01;
pub const MAX_FRAME_LEN: usize = 32;
pub const HEADER_LEN: usize = 5;
pub const CRC_LEN: usize = 2;
pub const MAX_PAYLOAD_LEN: usize = MAX_FRAME_LEN - HEADER_LEN - CRC_LEN;

const CRC_TABLE: [u16; 256] = build_crc_table();

const fn build_crc_table() -> [u16; 256] {
    let mut table = [0u16; 256];
    let mut i = 0;
    while i < 256 {
        let mut crc = (i as u16) << 8;
        let mut bit = 0;
        while bit < 8 {
            crc = if crc & 0x8000 != 0 { (crc << 1) ^ 0x1021 } else { crc << 1 };
            bit += 1;
        }
        table[i] = crc;
        i += 1;
    }
    table
}

/// CRC-16/CCITT-FALSE (poly 0x1021, init 0xFFFF, no reflection, no final xor).
pub fn crc16_ccitt_false(data: &[u8]) -> u16 {
    data.iter()
        .fold(0xFFFF, |crc, &b| (crc << 8) ^ CRC_TABLE[(((crc >> 8) as u8) ^ b) as usize])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MessageKind {
    Activate = 1,
    AssignDestination = 2,
    Telemetry = 3,
    Ack = 4,
}

impl MessageKind {
    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            1 => Some(Self::Activate),
            2 => Some(Self::AssignDestination),
            3 => Some(Self::Telemetry),
            4 => Some(Self::Ack),
            _ => None,
        }
    }

    fn payload_len(self) -> usize {
        match self {
            Self::Activate | Self::Ack => 0,
            Self::AssignDestination => 4,
            Self::Telemetry => 9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TelemetryPayload {
    pub x_mm: u16,
    pub y_mm: u16,
    pub speed_mm_s: u16,
    /// Heading in hundredths of a degree, `[0, 36000)`.
    pub heading_cdeg: u16,
    pub state: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Message {
    Activate { vehicle: u8 },
    AssignDestination { vehicle: u8, dest: NodeId },
    Telemetry { vehicle: u8, data: TelemetryPayload },
    Ack { vehicle: u8 },
}

impl Message {
    pub fn kind(&self) -> MessageKind {
        match self {
            Message::Activate { .. } => MessageKind::Activate,
            Message::AssignDestination { .. } => MessageKind::AssignDestination,
            Message::Telemetry { .. } => MessageKind::Telemetry,
            Message::Ack { .. } => MessageKind::Ack,
        }
    }

    pub fn vehicle(&self) -> u8 {
        match *self {
            Message::Activate { vehicle }
            | Message::AssignDestination { vehicle, .. }
            | Message::Telemetry { vehicle, .. }
            | Message::Ack { vehicle } => vehicle,
        }
    }

    fn payload(&self) -> Vec<u8> {
        match self {
            Message::Activate { .. } | Message::Ack { .. } => Vec::new(),
            Message::AssignDestination { dest, .. } => [dest.ix.to_be_bytes(), dest.iy.to_be_bytes()].concat(),
            Message::Telemetry { data, .. } => {
                let mut p = Vec::with_capacity(9);
                for v in [data.x_mm, data.y_mm, data.speed_mm_s, data.heading_cdeg] {
                    p.extend_from_slice(&v.to_be_bytes());
                }
                p.push(data.state);
                p
            }
        }
    }
}

/// Encoded frame bytes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WireFrame(Vec<u8>);

impl WireFrame {
    /// Frames an arbitrary payload under `kind`.
    pub fn build(kind: u8, vehicle: u8, payload: &[u8]) -> Result<Self, RfError> {
        if payload.len() > MAX_PAYLOAD_LEN {
            return Err(RfError::PayloadTooLarge(payload.len()));
        }
        let mut bytes = Vec::with_capacity(HEADER_LEN + payload.len() + CRC_LEN);
        bytes.extend_from_slice(&[SYNC, VERSION, kind, vehicle, payload.len() as u8]);
        bytes.extend_from_slice(payload);
        let crc = crc16_ccitt_false(&bytes[1..]);
        bytes.extend_from_slice(&crc.to_be_bytes());
        Ok(Self(bytes))
    }

    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn encode(message: &Message) -> Result<WireFrame, RfError> {
    WireFrame::build(message.kind() as u8, message.vehicle(), &message.payload())
}

pub fn decode(bytes: &[u8]) -> Result<Message, RfError> {
    if bytes.first() != Some(&SYNC) {
        return Err(RfError::BadSync);
    }
    match bytes.get(1) {
        Some(&VERSION) => {}
        Some(_) => return Err(RfError::BadVersion),
        None => return Err(RfError::BadLength),
    }
    if bytes.len() < HEADER_LEN + CRC_LEN || bytes.len() > MAX_FRAME_LEN {
        return Err(RfError::BadLength);
    }
    let len = bytes[4] as usize;
    if len > MAX_PAYLOAD_LEN || bytes.len() != HEADER_LEN + len + CRC_LEN {
        return Err(RfError::BadLength);
    }
    let body_end = HEADER_LEN + len;
    let crc = u16::from_be_bytes([bytes[body_end], bytes[body_end + 1]]);
    if crc != crc16_ccitt_false(&bytes[1..body_end]) {
        return Err(RfError::CrcMismatch);
    }
    let kind = MessageKind::from_byte(bytes[2]).ok_or(RfError::UnknownKind(bytes[2]))?;
    if len != kind.payload_len() {
        return Err(RfError::BadLength);
    }
    let vehicle = bytes[3];
    let p = &bytes[HEADER_LEN..body_end];
    let u16_at = |i: usize| u16::from_be_bytes([p[i], p[i + 1]]);
    Ok(match kind {
        MessageKind::Activate => Message::Activate { vehicle },
        MessageKind::Ack => Message::Ack { vehicle },
        MessageKind::AssignDestination => Message::AssignDestination { vehicle, dest: NodeId::new(u16_at(0), u16_at(2)) },
        MessageKind::Telemetry => Message::Telemetry {
            vehicle,
            data: TelemetryPayload {
                x_mm: u16_at(0),
                y_mm: u16_at(2),
                speed_mm_s: u16_at(4),
                heading_cdeg: u16_at(6),
                state: p[8],
            },
        },
    })
}
