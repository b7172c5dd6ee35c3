//! IAMKeys: WCC-to-monitor key management.
//!
//! Both ends hold five reference frames. For every frame the sender picks a
//! reference frame and one of its fields, seeds the keystream LFSR with that
//! field to get K1 (K2 is its complement), encrypts with the two-round
//! cross-half cipher and signs with a tone-rotated checksum of the reference
//! frame. Only pointers travel on the wire; the receiver rebuilds the same
//! keys from its own copy of the list.
//!
//! The receiver's list trails the sender's by one accepted frame: it ACKs a
//! frame, holds it as `pending_update`, and commits it on the next
//! acceptance. Reference lookups consult the pending frame too.

use std::collections::VecDeque;

use thiserror::Error;

use crate::bits::BitString;
use crate::framing::{AckFrame, CodecError, DataFrame, FrameConfig, IamkeysWireFrame, TONE_MAX, TONE_MIN};
use crate::opcount::OpCounter;
use crate::rng::{derive_keypair, pick_uniform, KeyPair, LfsrState, RngError};

pub const REF_LIST_LEN: usize = 5;
/// Unacknowledged emissions (sender) or missed frames (receiver) that raise the alarm.
pub const ALARM_THRESHOLD: u32 = 10;
pub const UNACKED_CAPACITY: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IamkeysError {
    #[error("reference list needs exactly {REF_LIST_LEN} frames, got {0}")]
    RefListLen(usize),
    #[error("duplicate reference sequence number {0}")]
    DuplicateSeq(u32),
    #[error("connection alarm latched; administrator reset required")]
    AlarmLatched,
    #[error("data frame has {got} readings, configuration expects {expected}")]
    ReadingsCount { expected: usize, got: usize },
    #[error("block width mismatch: data {data} bits, keys {key} bits")]
    WidthMismatch { data: usize, key: usize },
    #[error("tone {0} outside 1..=5")]
    Tone(u8),
    #[error(transparent)]
    Rng(#[from] RngError),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// Why a receiver dropped a frame. No ACK is sent for any of these.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Rejection {
    #[error("replay: seq {seq} not above last seen {last_seen}")]
    Replay { seq: u32, last_seen: u32 },
    #[error("unknown reference frame {0}")]
    UnknownReference(u32),
    #[error("sender authentication failed")]
    AuthFailure,
    #[error("connection considered lost")]
    ConnectionLost,
}

/// Sequence number of the `i`th deployed dummy frame.
///
/// Dummies take the five numbers just below 1 (mod 2^32) so they are older
/// than every session frame and never collide with one.
pub fn dummy_seq_no(i: usize) -> u32 {
    (i as u32).wrapping_sub(REF_LIST_LEN as u32 - 1)
}

fn age_key(seq: u32) -> u32 {
    seq.wrapping_add(REF_LIST_LEN as u32)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceFrameList {
    frames: Vec<DataFrame>,
}

impl ReferenceFrameList {
    pub fn new(frames: Vec<DataFrame>) -> Result<Self, IamkeysError> {
        if frames.len() != REF_LIST_LEN {
            return Err(IamkeysError::RefListLen(frames.len()));
        }
        for (i, f) in frames.iter().enumerate() {
            if frames[..i].iter().any(|g| g.seq_no == f.seq_no) {
                return Err(IamkeysError::DuplicateSeq(f.seq_no));
            }
        }
        Ok(Self { frames })
    }

    /// Loads dummy content, assigning the reserved dummy sequence numbers.
    pub fn deploy(dummies: Vec<(u32, Vec<u8>)>) -> Result<Self, IamkeysError> {
        let frames = dummies
            .into_iter()
            .enumerate()
            .map(|(i, (ts, readings))| DataFrame::new(dummy_seq_no(i), ts, readings))
            .collect();
        Self::new(frames)
    }

    pub fn frames(&self) -> &[DataFrame] {
        &self.frames
    }

    pub fn get(&self, seq_no: u32) -> Option<&DataFrame> {
        self.frames.iter().find(|f| f.seq_no == seq_no)
    }

    pub fn oldest_index(&self) -> usize {
        self.frames
            .iter()
            .enumerate()
            .min_by_key(|(_, f)| age_key(f.seq_no))
            .map(|(i, _)| i)
            .expect("list is never empty")
    }

    /// Replaces the oldest entry and returns it.
    pub fn replace_oldest(&mut self, frame: DataFrame) -> DataFrame {
        let i = self.oldest_index();
        std::mem::replace(&mut self.frames[i], frame)
    }

    /// Entries sorted by sequence number, for comparisons across endpoints.
    pub fn sorted_seqs(&self) -> Vec<u32> {
        let mut s: Vec<u32> = self.frames.iter().map(|f| f.seq_no).collect();
        s.sort_by_key(|&q| age_key(q));
        s
    }
}

/// The reference frame and field picked for one frame's key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedChoice {
    pub ref_index: usize,
    pub ref_seq_no: u32,
    pub field_no: u8,
    pub seed: u8,
}

pub fn choose_seed(
    ref_list: &ReferenceFrameList,
    selector: &mut LfsrState,
    hashable_len: usize,
) -> Result<SeedChoice, IamkeysError> {
    let ref_index = pick_uniform(selector, REF_LIST_LEN)?;
    let field_no = pick_uniform(selector, hashable_len)?;
    let frame = &ref_list.frames()[ref_index];
    let seed = frame.hashable_field(field_no).ok_or(CodecError::FieldOutOfRange {
        field: field_no as u8,
        limit: frame.readings.len() + 1,
    })?;
    Ok(SeedChoice {
        ref_index,
        ref_seq_no: frame.seq_no,
        field_no: field_no as u8,
        seed,
    })
}

fn xor_metered(a: &BitString, b: &BitString, meter: &mut OpCounter) -> BitString {
    meter.xor(a.len());
    a.xor(b).expect("halves share a width")
}

/// Two-round cross-half cipher on one block, with op accounting.
pub fn encrypt_block_metered(
    data: &BitString,
    keys: &KeyPair,
    meter: &mut OpCounter,
) -> Result<BitString, IamkeysError> {
    if data.len() != keys.width() || !data.len().is_multiple_of(2) {
        return Err(IamkeysError::WidthMismatch {
            data: data.len(),
            key: keys.width(),
        });
    }
    let (ld, rd) = data.halves();
    let (lk1, rk1) = keys.k1().halves();
    let (lk2, rk2) = keys.k2().halves();
    let e1 = BitString::concat(&xor_metered(&rd, &lk1, meter), &xor_metered(&ld, &rk1, meter));
    let (le1, re1) = e1.halves();
    Ok(BitString::concat(
        &xor_metered(&re1, &lk2, meter),
        &xor_metered(&le1, &rk2, meter),
    ))
}

/// E1 = [RHD^LHK1 | LHD^RHK1], E2 = [RHE1^LHK2 | LHE1^RHK2]; returns E2.
pub fn encrypt_block(data: &BitString, keys: &KeyPair) -> Result<BitString, IamkeysError> {
    encrypt_block_metered(data, keys, &mut OpCounter::new())
}

/// The cipher is an involution, so decryption is encryption.
pub fn decrypt_block(data: &BitString, keys: &KeyPair) -> Result<BitString, IamkeysError> {
    encrypt_block(data, keys)
}

/// Applies the block cipher to consecutive key-width blocks.
pub fn encrypt_payload_metered(
    payload: &BitString,
    keys: &KeyPair,
    meter: &mut OpCounter,
) -> Result<BitString, IamkeysError> {
    let w = keys.width();
    if w == 0 || !payload.len().is_multiple_of(w) {
        return Err(IamkeysError::WidthMismatch {
            data: payload.len(),
            key: w,
        });
    }
    let mut out = BitString::new();
    for start in (0..payload.len()).step_by(w) {
        out.extend(&encrypt_block_metered(&payload.slice(start..start + w), keys, meter)?);
    }
    Ok(out)
}

/// Checksum of the hashable fields rotated left `tone` times, with op accounting.
pub fn sign_frame_metered(ref_frame: &DataFrame, tone: u8, meter: &mut OpCounter) -> Result<u8, IamkeysError> {
    if !(TONE_MIN..=TONE_MAX).contains(&tone) {
        return Err(IamkeysError::Tone(tone));
    }
    let fields = ref_frame.hashable_fields();
    let mut sum = fields[0];
    for &f in &fields[1..] {
        meter.add();
        sum = sum.wrapping_add(f);
    }
    meter.hash(u64::from(tone));
    Ok((0..tone).fold(sum, |v, _| v.rotate_left(1)))
}

pub fn sign_frame(ref_frame: &DataFrame, tone: u8) -> Result<u8, IamkeysError> {
    sign_frame_metered(ref_frame, tone, &mut OpCounter::new())
}

/// Everything the sender produced for one frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Emission {
    pub wire: IamkeysWireFrame,
    /// The frame as the receiver will reconstruct it.
    pub plaintext: DataFrame,
    pub keys: KeyPair,
    pub choice: SeedChoice,
}

/// WBAN central controller side.
#[derive(Debug, Clone)]
pub struct IamkeysSender {
    config: FrameConfig,
    ref_list: ReferenceFrameList,
    next_seq: u32,
    sent_unacked: VecDeque<DataFrame>,
    frames_since_last_ack: u32,
    selector: LfsrState,
    alarmed: bool,
}

impl IamkeysSender {
    pub fn new(config: FrameConfig, ref_list: ReferenceFrameList, selector: LfsrState) -> Result<Self, IamkeysError> {
        config.validate()?;
        Ok(Self {
            config,
            ref_list,
            next_seq: 1,
            sent_unacked: VecDeque::with_capacity(UNACKED_CAPACITY),
            frames_since_last_ack: 0,
            selector,
            alarmed: false,
        })
    }

    pub fn config(&self) -> &FrameConfig {
        &self.config
    }

    pub fn ref_list(&self) -> &ReferenceFrameList {
        &self.ref_list
    }

    pub fn next_seq(&self) -> u32 {
        self.next_seq
    }

    pub fn sent_unacked(&self) -> impl Iterator<Item = &DataFrame> {
        self.sent_unacked.iter()
    }

    pub fn frames_since_last_ack(&self) -> u32 {
        self.frames_since_last_ack
    }

    pub fn selector(&self) -> LfsrState {
        self.selector
    }

    pub fn alarmed(&self) -> bool {
        self.alarmed
    }

    pub fn emit(&mut self, timestamp: u32, readings: &[u8]) -> Result<Emission, IamkeysError> {
        self.emit_metered(timestamp, readings, &mut OpCounter::new())
    }

    /// Encrypts and frames the newest readings. Lost frames are never re-sent;
    /// every call consumes a fresh sequence number.
    pub fn emit_metered(
        &mut self,
        timestamp: u32,
        readings: &[u8],
        meter: &mut OpCounter,
    ) -> Result<Emission, IamkeysError> {
        if self.alarmed {
            return Err(IamkeysError::AlarmLatched);
        }
        if readings.len() != self.config.num_readings {
            return Err(IamkeysError::ReadingsCount {
                expected: self.config.num_readings,
                got: readings.len(),
            });
        }
        let current = DataFrame::new(self.next_seq, timestamp, readings.to_vec());
        let enc_width = self.config.enc_width();
        let payload = current.encode_payload(enc_width);

        let mut selector = self.selector;
        let choice = choose_seed(&self.ref_list, &mut selector, self.config.hashable_len())?;
        meter.rand();
        meter.rand();
        let keys = derive_keypair(choice.seed, self.config.block_width)?;
        meter.rand();
        meter.invert();
        let enc_data = encrypt_payload_metered(&payload, &keys, meter)?;
        let tone = pick_uniform(&mut selector, usize::from(TONE_MAX))? as u8 + 1;
        meter.rand();
        let sender_auth = sign_frame_metered(&self.ref_list.frames()[choice.ref_index], tone, meter)?;

        let wire = IamkeysWireFrame {
            enc_data,
            seq_no: current.seq_no,
            ref_frm_seq_no: choice.ref_seq_no,
            field_no: choice.field_no,
            tone,
            sender_auth,
        };

        self.selector = selector;
        self.next_seq += 1;
        meter.add();
        self.frames_since_last_ack += 1;
        meter.add();
        if self.frames_since_last_ack >= ALARM_THRESHOLD {
            self.alarmed = true;
        }
        let plaintext = current.projected(enc_width);
        if self.sent_unacked.len() == UNACKED_CAPACITY {
            self.sent_unacked.pop_front();
        }
        self.sent_unacked.push_back(plaintext.clone());
        meter.transmit();

        Ok(Emission {
            wire,
            plaintext,
            keys,
            choice,
        })
    }

    pub fn on_ack(&mut self, ack: &AckFrame) -> bool {
        self.on_ack_metered(ack, &mut OpCounter::new())
    }

    /// Replaces the oldest reference frame with the acknowledged one. Returns
    /// whether a refresh happened; duplicate and unknown ACKs are no-ops.
    pub fn on_ack_metered(&mut self, ack: &AckFrame, meter: &mut OpCounter) -> bool {
        let Some(pos) = self.sent_unacked.iter().position(|f| f.seq_no == ack.acked_seq_no) else {
            return false;
        };
        let frame = self.sent_unacked.remove(pos).expect("position is valid");
        self.ref_list.replace_oldest(frame);
        meter.refresh();
        self.frames_since_last_ack = 0;
        true
    }

    /// Administrator reset: reload references and clear the alarm.
    pub fn reset(&mut self, ref_list: ReferenceFrameList) {
        self.ref_list = ref_list;
        self.sent_unacked.clear();
        self.frames_since_last_ack = 0;
        self.alarmed = false;
    }
}

/// A frame the receiver accepted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub frame: DataFrame,
    pub ack: AckFrame,
    pub keys: KeyPair,
    /// The previously pending frame that this acceptance committed.
    pub committed: Option<u32>,
}

/// Monitoring-station side.
#[derive(Debug, Clone)]
pub struct IamkeysReceiver {
    config: FrameConfig,
    ref_list: ReferenceFrameList,
    pending_update: Option<DataFrame>,
    last_seen_seq: u32,
    missed_run: u32,
    served_this_slot: bool,
    alarmed: bool,
}

impl IamkeysReceiver {
    pub fn new(config: FrameConfig, ref_list: ReferenceFrameList) -> Result<Self, IamkeysError> {
        config.validate()?;
        Ok(Self {
            config,
            ref_list,
            pending_update: None,
            last_seen_seq: 0,
            missed_run: 0,
            served_this_slot: false,
            alarmed: false,
        })
    }

    pub fn ref_list(&self) -> &ReferenceFrameList {
        &self.ref_list
    }

    pub fn pending_update(&self) -> Option<&DataFrame> {
        self.pending_update.as_ref()
    }

    pub fn last_seen_seq(&self) -> u32 {
        self.last_seen_seq
    }

    pub fn missed_run(&self) -> u32 {
        self.missed_run
    }

    pub fn alarmed(&self) -> bool {
        self.alarmed
    }

    fn lookup(&self, seq_no: u32) -> Option<&DataFrame> {
        self.ref_list
            .get(seq_no)
            .or(self.pending_update.as_ref().filter(|p| p.seq_no == seq_no))
    }

    pub fn accept(&mut self, frame: &IamkeysWireFrame) -> Result<Delivery, Rejection> {
        self.accept_metered(frame, &mut OpCounter::new())
    }

    /// Replay check, reference lookup, sender authentication, then key
    /// derivation and decryption. State is untouched on rejection except for
    /// the alarm latch.
    pub fn accept_metered(&mut self, frame: &IamkeysWireFrame, meter: &mut OpCounter) -> Result<Delivery, Rejection> {
        if self.alarmed {
            return Err(Rejection::ConnectionLost);
        }
        if frame.seq_no <= self.last_seen_seq {
            return Err(Rejection::Replay {
                seq: frame.seq_no,
                last_seen: self.last_seen_seq,
            });
        }
        let reference = self
            .lookup(frame.ref_frm_seq_no)
            .ok_or(Rejection::UnknownReference(frame.ref_frm_seq_no))?
            .clone();
        let mut scratch = OpCounter::new();
        let expected = sign_frame_metered(&reference, frame.tone, &mut scratch).map_err(|_| Rejection::AuthFailure)?;
        if expected != frame.sender_auth {
            return Err(Rejection::AuthFailure);
        }
        let seed = reference
            .hashable_field(usize::from(frame.field_no))
            .ok_or(Rejection::AuthFailure)?;
        let gap = frame.seq_no - self.last_seen_seq - 1;
        if gap >= ALARM_THRESHOLD {
            self.alarmed = true;
            self.missed_run = self.missed_run.max(gap);
            return Err(Rejection::ConnectionLost);
        }

        let keys = derive_keypair(seed, self.config.block_width).expect("validated width");
        meter.rand();
        meter.invert();
        let payload = encrypt_payload_metered(&frame.enc_data, &keys, meter).map_err(|_| Rejection::AuthFailure)?;
        // Authentication is charged once its result is used.
        meter.add_bit_ops += scratch.add_bit_ops;
        meter.hash_ops += scratch.hash_ops;
        let plaintext = DataFrame::decode_payload(frame.seq_no, &payload, self.config.num_readings);

        let ack = AckFrame {
            acked_seq_no: frame.seq_no,
        };
        meter.transmit();
        let committed = self.pending_update.take().map(|p| {
            let seq = p.seq_no;
            self.ref_list.replace_oldest(p);
            meter.refresh();
            seq
        });
        self.pending_update = Some(plaintext.clone());
        self.last_seen_seq = frame.seq_no;
        meter.add();
        self.missed_run = 0;
        self.served_this_slot = true;

        Ok(Delivery {
            frame: plaintext,
            ack,
            keys,
            committed,
        })
    }

    /// Closes one frame slot. A slot without an accepted frame extends the
    /// missed run; returns true when this call latched the alarm.
    pub fn end_slot(&mut self) -> bool {
        if std::mem::take(&mut self.served_this_slot) {
            return false;
        }
        self.missed_run += 1;
        if !self.alarmed && self.missed_run >= ALARM_THRESHOLD {
            self.alarmed = true;
            return true;
        }
        false
    }

    /// Administrator reset. Sequence tracking is kept so old frames stay replays.
    pub fn reset(&mut self, ref_list: ReferenceFrameList) {
        self.ref_list = ref_list;
        self.pending_update = None;
        self.missed_run = 0;
        self.served_this_slot = false;
        self.alarmed = false;
    }
}
