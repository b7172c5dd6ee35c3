//! Domain frames and their bit-exact wire layouts.
//!
//! All layouts are most-significant-bit first with fields in a fixed order:
//!
//! ```text
//! IAMKeys : ENC_DATA(W*blocks) SEQ_NO(32) REF_FRM_SEQ_NO(32) FIELD_NO(8) TONE(8) SENDER_AUTH(8)
//! KEMESIS : FRM_TYPE(8) SEQ_NO(32) FRAME_NO(8) FIELD_NO(8) KEY_USED(8) SIG(8) ENC_DATA(field width)
//! ACK     : 0xAC(8) ACKED_SEQ_NO(32)
//! ```

use thiserror::Error;

use crate::bits::BitString;

pub const ACK_TYPE_BYTE: u8 = 0xAC;
pub const ACK_WIDTH: usize = 40;
/// Header bits of an IAMKeys frame besides ENC_DATA.
pub const IAMKEYS_HEADER_BITS: usize = 88;
/// Header bits of a KEMESIS frame besides ENC_DATA.
pub const KEMESIS_HEADER_BITS: usize = 72;
pub const TONE_MIN: u8 = 1;
pub const TONE_MAX: u8 = 5;
pub const TIMESTAMP_BITS: usize = 32;
pub const READING_BITS: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("expected {expected} bits, got {got}")]
    Length { expected: usize, got: usize },
    #[error("ENC_DATA is {got} bits, configuration expects {expected}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("tone {0} outside 1..=5")]
    ToneOutOfRange(u8),
    #[error("field number {field} outside 0..{limit}")]
    FieldOutOfRange { field: u8, limit: usize },
    #[error("frame number {frame} outside 0..{limit}")]
    FrameOutOfRange { frame: u8, limit: usize },
    #[error("{name} flag byte {value:#04x} is neither 0 nor 1")]
    BadFlag { name: &'static str, value: u8 },
    #[error("frame type byte {0:#04x} is not an ACK")]
    FrameType(u8),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Widths and table dimensions shared by every frame of a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameConfig {
    /// IAMKeys block width W (two halves).
    pub block_width: usize,
    /// IAMKeys ENC_DATA carries this many W-bit blocks.
    pub enc_blocks: usize,
    /// Sensor readings per data frame (alpha).
    pub num_readings: usize,
    /// KEMESIS dummy table rows (n).
    pub table_frames: usize,
    /// KEMESIS dummy table columns (k).
    pub table_fields: usize,
    /// KEMESIS field and ENC_DATA width in bits.
    pub field_width: usize,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self::analysis()
    }
}

impl FrameConfig {
    /// 16x8 table of 8-bit fields; 64-bit IAMKeys payload in 16-bit blocks.
    pub const fn analysis() -> Self {
        Self {
            block_width: 16,
            enc_blocks: 4,
            num_readings: 3,
            table_frames: 16,
            table_fields: 8,
            field_width: 8,
        }
    }

    /// 256x16 table of 16-bit fields.
    pub const fn realistic() -> Self {
        Self {
            table_frames: 256,
            table_fields: 16,
            field_width: 16,
            ..Self::analysis()
        }
    }

    /// One 16-bit IAMKeys block per frame: the 104-bit wire layout.
    pub const fn single_block() -> Self {
        Self {
            enc_blocks: 1,
            ..Self::analysis()
        }
    }

    /// Single-block frames with `alpha` readings, the unit of the cost model.
    pub const fn cost_model(alpha: usize) -> Self {
        Self {
            num_readings: alpha,
            ..Self::single_block()
        }
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        let bad = |m: &str| Err(CodecError::Config(m.to_string()));
        if self.block_width < 2 || !self.block_width.is_multiple_of(2) {
            return bad("block width must be even and at least 2");
        }
        if self.enc_blocks == 0 {
            return bad("ENC_DATA needs at least one block");
        }
        if self.num_readings > 255 {
            return bad("too many readings for an 8-bit FIELD_NO");
        }
        if !(1..=256).contains(&self.table_frames) || !(1..=256).contains(&self.table_fields) {
            return bad("table dimensions must be within 1..=256");
        }
        if self.field_width != 8 && self.field_width != 16 {
            return bad("KEMESIS field width must be 8 or 16");
        }
        Ok(())
    }

    pub fn enc_width(&self) -> usize {
        self.block_width * self.enc_blocks
    }

    /// Number of seed-eligible fields, alpha + 1.
    pub fn hashable_len(&self) -> usize {
        self.num_readings + 1
    }

    pub fn iamkeys_width(&self) -> usize {
        self.enc_width() + IAMKEYS_HEADER_BITS
    }

    pub fn kemesis_width(&self) -> usize {
        KEMESIS_HEADER_BITS + self.field_width
    }
}

/// One aggregated set of readings; also the content of a reference frame.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DataFrame {
    pub seq_no: u32,
    pub timestamp: u32,
    pub readings: Vec<u8>,
}

impl DataFrame {
    pub fn new(seq_no: u32, timestamp: u32, readings: Vec<u8>) -> Self {
        Self {
            seq_no,
            timestamp,
            readings,
        }
    }

    /// Timestamp low byte followed by the readings.
    pub fn hashable_fields(&self) -> Vec<u8> {
        std::iter::once(self.timestamp as u8)
            .chain(self.readings.iter().copied())
            .collect()
    }

    pub fn hashable_field(&self, index: usize) -> Option<u8> {
        match index {
            0 => Some(self.timestamp as u8),
            i => self.readings.get(i - 1).copied(),
        }
    }

    /// Readings then timestamp, zero padded (or cut) to `width` bits.
    pub fn encode_payload(&self, width: usize) -> BitString {
        let mut bits = BitString::new();
        for &r in &self.readings {
            bits.push_uint(u64::from(r), READING_BITS);
        }
        bits.push_uint(u64::from(self.timestamp), TIMESTAMP_BITS);
        fit(bits, width)
    }

    /// Inverse of [`DataFrame::encode_payload`]; bits that were cut read as zero.
    pub fn decode_payload(seq_no: u32, payload: &BitString, num_readings: usize) -> Self {
        let full = num_readings * READING_BITS + TIMESTAMP_BITS;
        let bits = fit(payload.clone(), full);
        let readings = (0..num_readings)
            .map(|i| bits.read_uint(i * READING_BITS..(i + 1) * READING_BITS) as u8)
            .collect();
        let ts_start = num_readings * READING_BITS;
        let timestamp = bits.read_uint(ts_start..ts_start + TIMESTAMP_BITS) as u32;
        Self::new(seq_no, timestamp, readings)
    }

    /// The frame exactly as a receiver reconstructs it from `width` payload bits.
    pub fn projected(&self, width: usize) -> Self {
        Self::decode_payload(self.seq_no, &self.encode_payload(width), self.readings.len())
    }
}

fn fit(mut bits: BitString, width: usize) -> BitString {
    if bits.len() > width {
        bits = bits.slice(0..width);
    }
    while bits.len() < width {
        bits.push(false);
    }
    bits
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IamkeysWireFrame {
    pub enc_data: BitString,
    pub seq_no: u32,
    pub ref_frm_seq_no: u32,
    pub field_no: u8,
    pub tone: u8,
    pub sender_auth: u8,
}

pub fn serialize_iamkeys(frame: &IamkeysWireFrame, config: &FrameConfig) -> Result<BitString, CodecError> {
    if frame.enc_data.len() != config.enc_width() {
        return Err(CodecError::WidthMismatch {
            expected: config.enc_width(),
            got: frame.enc_data.len(),
        });
    }
    let mut bits = frame.enc_data.clone();
    bits.push_uint(u64::from(frame.seq_no), 32);
    bits.push_uint(u64::from(frame.ref_frm_seq_no), 32);
    bits.push_uint(u64::from(frame.field_no), 8);
    bits.push_uint(u64::from(frame.tone), 8);
    bits.push_uint(u64::from(frame.sender_auth), 8);
    Ok(bits)
}

pub fn deserialize_iamkeys(bits: &BitString, config: &FrameConfig) -> Result<IamkeysWireFrame, CodecError> {
    let expected = config.iamkeys_width();
    if bits.len() != expected {
        return Err(CodecError::Length {
            expected,
            got: bits.len(),
        });
    }
    let w = config.enc_width();
    let frame = IamkeysWireFrame {
        enc_data: bits.slice(0..w),
        seq_no: bits.read_uint(w..w + 32) as u32,
        ref_frm_seq_no: bits.read_uint(w + 32..w + 64) as u32,
        field_no: bits.read_uint(w + 64..w + 72) as u8,
        tone: bits.read_uint(w + 72..w + 80) as u8,
        sender_auth: bits.read_uint(w + 80..w + 88) as u8,
    };
    if !(TONE_MIN..=TONE_MAX).contains(&frame.tone) {
        return Err(CodecError::ToneOutOfRange(frame.tone));
    }
    if usize::from(frame.field_no) >= config.hashable_len() {
        return Err(CodecError::FieldOutOfRange {
            field: frame.field_no,
            limit: config.hashable_len(),
        });
    }
    Ok(frame)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FrameType {
    Data = 0,
    Control = 1,
}

/// Which of the two keys encrypted a KEMESIS frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KeyChoice {
    K1 = 0,
    K2 = 1,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct KemesisWireFrame {
    pub frm_type: FrameType,
    pub seq_no: u32,
    pub frame_no: u8,
    pub field_no: u8,
    pub key_used: KeyChoice,
    pub sig: u8,
    pub enc_data: BitString,
}

pub fn serialize_kemesis(frame: &KemesisWireFrame, config: &FrameConfig) -> Result<BitString, CodecError> {
    if frame.enc_data.len() != config.field_width {
        return Err(CodecError::WidthMismatch {
            expected: config.field_width,
            got: frame.enc_data.len(),
        });
    }
    let mut bits = BitString::new();
    bits.push_uint(frame.frm_type as u64, 8);
    bits.push_uint(u64::from(frame.seq_no), 32);
    bits.push_uint(u64::from(frame.frame_no), 8);
    bits.push_uint(u64::from(frame.field_no), 8);
    bits.push_uint(frame.key_used as u64, 8);
    bits.push_uint(u64::from(frame.sig), 8);
    bits.extend(&frame.enc_data);
    Ok(bits)
}

fn flag(name: &'static str, value: u8) -> Result<bool, CodecError> {
    match value {
        0 => Ok(false),
        1 => Ok(true),
        value => Err(CodecError::BadFlag { name, value }),
    }
}

pub fn deserialize_kemesis(bits: &BitString, config: &FrameConfig) -> Result<KemesisWireFrame, CodecError> {
    let expected = config.kemesis_width();
    if bits.len() != expected {
        return Err(CodecError::Length {
            expected,
            got: bits.len(),
        });
    }
    let frm_type = if flag("FRM_TYPE", bits.read_uint(0..8) as u8)? {
        FrameType::Control
    } else {
        FrameType::Data
    };
    let key_used = if flag("KEY_USED", bits.read_uint(56..64) as u8)? {
        KeyChoice::K2
    } else {
        KeyChoice::K1
    };
    let frame = KemesisWireFrame {
        frm_type,
        seq_no: bits.read_uint(8..40) as u32,
        frame_no: bits.read_uint(40..48) as u8,
        field_no: bits.read_uint(48..56) as u8,
        key_used,
        sig: bits.read_uint(64..72) as u8,
        enc_data: bits.slice(72..expected),
    };
    if usize::from(frame.frame_no) >= config.table_frames {
        return Err(CodecError::FrameOutOfRange {
            frame: frame.frame_no,
            limit: config.table_frames,
        });
    }
    if usize::from(frame.field_no) >= config.table_fields {
        return Err(CodecError::FieldOutOfRange {
            field: frame.field_no,
            limit: config.table_fields,
        });
    }
    Ok(frame)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AckFrame {
    pub acked_seq_no: u32,
}

pub fn serialize_ack(ack: &AckFrame) -> BitString {
    let mut bits = BitString::from_uint(u64::from(ACK_TYPE_BYTE), 8);
    bits.push_uint(u64::from(ack.acked_seq_no), 32);
    bits
}

pub fn deserialize_ack(bits: &BitString) -> Result<AckFrame, CodecError> {
    if bits.len() != ACK_WIDTH {
        return Err(CodecError::Length {
            expected: ACK_WIDTH,
            got: bits.len(),
        });
    }
    let ty = bits.read_uint(0..8) as u8;
    if ty != ACK_TYPE_BYTE {
        return Err(CodecError::FrameType(ty));
    }
    Ok(AckFrame {
        acked_seq_no: bits.read_uint(8..40) as u32,
    })
}

/// Anything that can arrive on a sensor-WCC link.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KemesisLinkMessage {
    Frame(KemesisWireFrame),
    Ack(AckFrame),
}

/// Dispatches on the first byte: 0xAC is an ACK, anything else a KEMESIS frame.
pub fn decode_kemesis_link(bits: &BitString, config: &FrameConfig) -> Result<KemesisLinkMessage, CodecError> {
    if bits.len() >= 8 && bits.read_uint(0..8) as u8 == ACK_TYPE_BYTE {
        deserialize_ack(bits).map(KemesisLinkMessage::Ack)
    } else {
        deserialize_kemesis(bits, config).map(KemesisLinkMessage::Frame)
    }
}
