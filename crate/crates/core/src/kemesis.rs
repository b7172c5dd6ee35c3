//! KEMESIS: sensor-to-WCC key management.
//!
//! Every node holds the same n x k dummy table. A frame points at one cell;
//! the cell value seeds the keystream LFSR and its rotated value is the
//! signature. Data is XORed with K1 or with its complement, chosen per frame.
//!
//! Control frames replace one cell at a time. The pointer doubles as the
//! update target, so a control frame is keyed by the value it replaces.
//! The responder commits when it sends the ACK, the initiator when it gets
//! the ACK.

use thiserror::Error;

use crate::bits::BitString;
use crate::framing::{AckFrame, CodecError, FrameConfig, FrameType, KemesisWireFrame, KeyChoice};
use crate::opcount::OpCounter;
use crate::rng::{keystream, pick_uniform, LfsrState, RngError};

/// Data frames accepted between WCC-initiated refreshes.
pub const DEFAULT_REFRESH_PERIOD: u32 = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KemesisError {
    #[error("sensor is asleep until the next ACK")]
    Asleep,
    #[error("a refresh is already awaiting its ACK")]
    PendingRefresh,
    #[error("table is {frames}x{fields}, got {got} values")]
    TableShape { frames: usize, fields: usize, got: usize },
    #[error("data width {data} does not match field width {field}")]
    WidthMismatch { data: usize, field: usize },
    #[error("value {value:#x} does not fit in {width} bits")]
    ValueTooWide { value: u32, width: usize },
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Rng(#[from] RngError),
}

/// Why an endpoint dropped a frame. No ACK is sent.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KemesisRejection {
    #[error("cell ({frame}, {field}) outside the table")]
    IndexOutOfRange { frame: u8, field: u8 },
    #[error("signature mismatch")]
    SignatureMismatch,
    #[error("replay: seq {seq} not above last seen {last_seen}")]
    Replay { seq: u32, last_seen: u32 },
    #[error("sensor is asleep")]
    Asleep,
    #[error("enc_data width {0} does not match the field width")]
    Width(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DummyTable {
    frames: usize,
    fields: usize,
    width: usize,
    values: Vec<u16>,
}

impl DummyTable {
    /// Row-major values; each must fit in `config.field_width` bits.
    pub fn new(config: &FrameConfig, values: Vec<u16>) -> Result<Self, KemesisError> {
        let (frames, fields, width) = (config.table_frames, config.table_fields, config.field_width);
        if values.len() != frames * fields {
            return Err(KemesisError::TableShape {
                frames,
                fields,
                got: values.len(),
            });
        }
        if let Some(&v) = values.iter().find(|&&v| u32::from(v) >> width != 0) {
            return Err(KemesisError::ValueTooWide {
                value: u32::from(v),
                width,
            });
        }
        Ok(Self {
            frames,
            fields,
            width,
            values,
        })
    }

    pub fn from_fn(config: &FrameConfig, mut f: impl FnMut(usize, usize) -> u16) -> Result<Self, KemesisError> {
        let mut values = Vec::with_capacity(config.table_frames * config.table_fields);
        for i in 0..config.table_frames {
            for j in 0..config.table_fields {
                values.push(f(i, j));
            }
        }
        Self::new(config, values)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn fields(&self) -> usize {
        self.fields
    }

    pub fn field_width(&self) -> usize {
        self.width
    }

    pub fn get(&self, frame: usize, field: usize) -> Option<u16> {
        (frame < self.frames && field < self.fields).then(|| self.values[frame * self.fields + field])
    }

    fn set(&mut self, frame: usize, field: usize, value: u16) {
        self.values[frame * self.fields + field] = value;
    }

    /// Cells where the two tables differ.
    pub fn diff(&self, other: &DummyTable) -> Vec<(usize, usize)> {
        self.values
            .iter()
            .zip(&other.values)
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(|(i, _)| (i / self.fields, i % self.fields))
            .collect()
    }
}

/// Key for one cell: the keystream seeded with the cell's low byte, or its complement.
pub fn kemesis_derive_key(
    table: &DummyTable,
    frame_no: usize,
    field_no: usize,
    key_used: KeyChoice,
) -> Result<BitString, KemesisError> {
    let cell = table.get(frame_no, field_no).ok_or(CodecError::FrameOutOfRange {
        frame: frame_no.min(255) as u8,
        limit: table.frames(),
    })?;
    let k1 = keystream(cell as u8, table.field_width());
    Ok(match key_used {
        KeyChoice::K1 => k1,
        KeyChoice::K2 => k1.complement(),
    })
}

pub fn kemesis_encrypt(data: &BitString, key: &BitString) -> Result<BitString, KemesisError> {
    data.xor(key).ok_or(KemesisError::WidthMismatch {
        data: data.len(),
        field: key.len(),
    })
}

/// One circular left shift. 16-bit fields are folded to a byte first.
pub fn kemesis_sign(field_value: u16) -> u8 {
    let folded = (field_value as u8) ^ ((field_value >> 8) as u8);
    folded.rotate_left(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Sensor,
    Wcc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PendingRefresh {
    pub seq_no: u32,
    pub frame_no: usize,
    pub field_no: usize,
    pub new_value: u16,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KemesisEmission {
    pub wire: KemesisWireFrame,
    pub key: BitString,
    /// The plaintext value carried: a reading or a replacement cell value.
    pub value: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Accepted {
    Data(u16),
    Refreshed {
        frame_no: usize,
        field_no: usize,
        old: u16,
        new: u16,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KemesisDelivery {
    pub accepted: Accepted,
    pub ack: AckFrame,
    pub key: BitString,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AckOutcome {
    pub woke: bool,
    pub committed: Option<PendingRefresh>,
}

/// One end of one sensor-WCC link.
#[derive(Debug, Clone)]
pub struct KemesisEndpoint {
    config: FrameConfig,
    role: Role,
    table: DummyTable,
    awake: bool,
    next_seq: u32,
    last_seen_seq: u32,
    last_acked_seq: u32,
    selector: LfsrState,
    pending_refresh: Option<PendingRefresh>,
    refresh_period: u32,
    data_since_refresh: u32,
    frames_since_last_ack: u32,
}

impl KemesisEndpoint {
    pub fn new(config: FrameConfig, role: Role, table: DummyTable, selector: LfsrState) -> Result<Self, KemesisError> {
        config.validate()?;
        if table.frames() != config.table_frames
            || table.fields() != config.table_fields
            || table.field_width() != config.field_width
        {
            return Err(KemesisError::TableShape {
                frames: config.table_frames,
                fields: config.table_fields,
                got: table.frames() * table.fields(),
            });
        }
        Ok(Self {
            config,
            role,
            table,
            awake: true,
            next_seq: 1,
            last_seen_seq: 0,
            last_acked_seq: 0,
            selector,
            pending_refresh: None,
            refresh_period: DEFAULT_REFRESH_PERIOD,
            data_since_refresh: 0,
            frames_since_last_ack: 0,
        })
    }

    pub fn with_refresh_period(mut self, period: u32) -> Self {
        self.refresh_period = period;
        self
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn table(&self) -> &DummyTable {
        &self.table
    }

    pub fn awake(&self) -> bool {
        self.awake
    }

    pub fn next_seq(&self) -> u32 {
        self.next_seq
    }

    pub fn last_seen_seq(&self) -> u32 {
        self.last_seen_seq
    }

    pub fn pending_refresh(&self) -> Option<&PendingRefresh> {
        self.pending_refresh.as_ref()
    }

    pub fn frames_since_last_ack(&self) -> u32 {
        self.frames_since_last_ack
    }

    pub fn selector(&self) -> LfsrState {
        self.selector
    }

    /// True once `refresh_period` data frames arrived since the last refresh
    /// and nothing is outstanding. A period of 0 disables refreshes.
    pub fn refresh_due(&self) -> bool {
        self.refresh_period > 0 && self.pending_refresh.is_none() && self.data_since_refresh >= self.refresh_period
    }

    fn value_bits(&self, value: u16) -> BitString {
        BitString::from_uint(u64::from(value), self.config.field_width)
    }

    fn draw_cell(&mut self) -> Result<(usize, usize), KemesisError> {
        let frame_no = pick_uniform(&mut self.selector, self.config.table_frames)?;
        let field_no = pick_uniform(&mut self.selector, self.config.table_fields)?;
        Ok((frame_no, field_no))
    }

    fn draw_key(&mut self) -> Result<KeyChoice, KemesisError> {
        Ok(match pick_uniform(&mut self.selector, 2)? {
            0 => KeyChoice::K1,
            _ => KeyChoice::K2,
        })
    }

    fn build(
        &mut self,
        frm_type: FrameType,
        cell: (usize, usize),
        key_used: KeyChoice,
        value: u16,
        meter: &mut OpCounter,
    ) -> Result<KemesisEmission, KemesisError> {
        let (frame_no, field_no) = cell;
        let current = self.table.get(frame_no, field_no).expect("drawn in range");
        let key = kemesis_derive_key(&self.table, frame_no, field_no, key_used)?;
        meter.rand();
        meter.invert();
        meter.xor(key.len());
        let enc_data = kemesis_encrypt(&self.value_bits(value), &key)?;
        let sig = kemesis_sign(current);
        meter.hash(1);
        let wire = KemesisWireFrame {
            frm_type,
            seq_no: self.next_seq,
            frame_no: frame_no as u8,
            field_no: field_no as u8,
            key_used,
            sig,
            enc_data,
        };
        self.next_seq += 1;
        meter.add();
        self.frames_since_last_ack += 1;
        meter.add();
        Ok(KemesisEmission { wire, key, value })
    }

    pub fn emit_data(&mut self, reading: u16) -> Result<KemesisEmission, KemesisError> {
        self.emit_data_metered(reading, &mut OpCounter::new())
    }

    /// Encrypts one reading. A sensor then sleeps until an ACK arrives.
    pub fn emit_data_metered(&mut self, reading: u16, meter: &mut OpCounter) -> Result<KemesisEmission, KemesisError> {
        if self.role == Role::Sensor && !self.awake {
            return Err(KemesisError::Asleep);
        }
        if u32::from(reading) >> self.config.field_width != 0 {
            return Err(KemesisError::ValueTooWide {
                value: u32::from(reading),
                width: self.config.field_width,
            });
        }
        let cell = self.draw_cell()?;
        meter.rand();
        meter.rand();
        let key_used = self.draw_key()?;
        let out = self.build(FrameType::Data, cell, key_used, reading, meter)?;
        if self.role == Role::Sensor {
            self.awake = false;
        }
        Ok(out)
    }

    pub fn emit_refresh(&mut self) -> Result<KemesisEmission, KemesisError> {
        self.emit_refresh_metered(&mut OpCounter::new())
    }

    /// Picks a cell and a replacement whose signature differs from the
    /// current one, so the control frame cannot be replayed after commit.
    pub fn emit_refresh_metered(&mut self, meter: &mut OpCounter) -> Result<KemesisEmission, KemesisError> {
        if self.pending_refresh.is_some() {
            return Err(KemesisError::PendingRefresh);
        }
        let cell = self.draw_cell()?;
        meter.rand();
        meter.rand();
        let current = self.table.get(cell.0, cell.1).expect("drawn in range");
        let width = self.config.field_width as u32;
        let new_value = loop {
            let v = self.selector.next_bits(width) as u16;
            if kemesis_sign(v) != kemesis_sign(current) {
                break v;
            }
        };
        let key_used = self.draw_key()?;
        let out = self.build(FrameType::Control, cell, key_used, new_value, meter)?;
        self.pending_refresh = Some(PendingRefresh {
            seq_no: out.wire.seq_no,
            frame_no: cell.0,
            field_no: cell.1,
            new_value,
        });
        self.data_since_refresh = 0;
        Ok(out)
    }

    pub fn accept(&mut self, frame: &KemesisWireFrame) -> Result<KemesisDelivery, KemesisRejection> {
        self.accept_metered(frame, &mut OpCounter::new())
    }

    /// Index check, signature, replay, then decryption. A control frame is
    /// committed here, together with the ACK.
    pub fn accept_metered(
        &mut self,
        frame: &KemesisWireFrame,
        meter: &mut OpCounter,
    ) -> Result<KemesisDelivery, KemesisRejection> {
        if self.role == Role::Sensor && !self.awake {
            return Err(KemesisRejection::Asleep);
        }
        let (i, j) = (usize::from(frame.frame_no), usize::from(frame.field_no));
        let current = self.table.get(i, j).ok_or(KemesisRejection::IndexOutOfRange {
            frame: frame.frame_no,
            field: frame.field_no,
        })?;
        if frame.enc_data.len() != self.config.field_width {
            return Err(KemesisRejection::Width(frame.enc_data.len()));
        }
        if kemesis_sign(current) != frame.sig {
            return Err(KemesisRejection::SignatureMismatch);
        }
        if frame.seq_no <= self.last_seen_seq {
            return Err(KemesisRejection::Replay {
                seq: frame.seq_no,
                last_seen: self.last_seen_seq,
            });
        }
        meter.hash(1);
        let key = kemesis_derive_key(&self.table, i, j, frame.key_used).expect("index checked");
        meter.rand();
        meter.invert();
        meter.xor(key.len());
        let value = kemesis_encrypt(&frame.enc_data, &key).expect("width checked").to_uint() as u16;
        self.last_seen_seq = frame.seq_no;
        meter.add();
        let ack = AckFrame {
            acked_seq_no: frame.seq_no,
        };
        let accepted = match frame.frm_type {
            FrameType::Data => {
                self.data_since_refresh += 1;
                Accepted::Data(value)
            }
            FrameType::Control => {
                self.table.set(i, j, value);
                meter.refresh();
                Accepted::Refreshed {
                    frame_no: i,
                    field_no: j,
                    old: current,
                    new: value,
                }
            }
        };
        Ok(KemesisDelivery { accepted, ack, key })
    }

    pub fn on_ack(&mut self, ack: &AckFrame) -> AckOutcome {
        self.on_ack_metered(ack, &mut OpCounter::new())
    }

    /// Any ACK wakes a sensor. A matching ACK commits the pending refresh.
    pub fn on_ack_metered(&mut self, ack: &AckFrame, meter: &mut OpCounter) -> AckOutcome {
        let woke = self.role == Role::Sensor && !self.awake;
        if self.role == Role::Sensor {
            self.awake = true;
        }
        if ack.acked_seq_no > self.last_acked_seq && ack.acked_seq_no < self.next_seq {
            self.last_acked_seq = ack.acked_seq_no;
            self.frames_since_last_ack = 0;
        }
        let committed = match self.pending_refresh {
            Some(p) if p.seq_no == ack.acked_seq_no => {
                self.table.set(p.frame_no, p.field_no, p.new_value);
                meter.refresh();
                self.pending_refresh.take()
            }
            _ => None,
        };
        AckOutcome { woke, committed }
    }

    /// Gives up on an unacknowledged refresh, leaving the table as it was.
    pub fn abandon_refresh(&mut self) -> Option<PendingRefresh> {
        self.pending_refresh.take()
    }

    /// Wakes a sensor without an ACK (watchdog).
    pub fn wake(&mut self) {
        self.awake = true;
    }
}
