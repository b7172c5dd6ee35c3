//! Fibonacci LFSRs, the key-pair derivation built on them, and unbiased
//! small-range selection.
//!
//! Register convention: the output bit is bit 0, the feedback bit is the XOR
//! of the tap positions, and the register shifts right with the feedback
//! entering the top bit. Under this convention the first `width` output bits
//! of a freshly loaded register are its state read least-significant first.

use thiserror::Error;

use crate::bits::BitString;

/// Seed loaded in place of 0, which would freeze the register.
pub const ZERO_SEED_SUBSTITUTE: u8 = 0x5A;

/// x^8 + x^6 + x^5 + x^4 + 1.
pub const TAPS_8: &[u8] = &[6, 5, 4, 0];
/// x^4 + x^3 + 1.
pub const TAPS_4: &[u8] = &[3, 0];
/// x^16 + x^14 + x^13 + x^11 + 1.
pub const TAPS_16: &[u8] = &[14, 13, 11, 0];

/// Width of one selector draw for ranges up to 16.
pub const DRAW_BITS: u32 = 4;

/// Largest range `pick_uniform` accepts.
pub const MAX_PICK_RANGE: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RngError {
    #[error("LFSR state must be nonzero")]
    ZeroState,
    #[error("unsupported LFSR width {0}")]
    BadWidth(u8),
    #[error("tap {tap} outside a {width}-bit register")]
    TapOutOfRange { tap: u8, width: u8 },
    #[error("taps must include bit 0 or the register can collapse to zero")]
    SingularTaps,
    #[error("key width {0} must be even and at least 2")]
    OddWidth(usize),
    #[error("selection range {0} outside 1..={MAX_PICK_RANGE}")]
    BadRange(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LfsrState {
    width: u8,
    taps: u32,
    state: u32,
}

impl LfsrState {
    pub fn new(width: u8, taps: &[u8], state: u32) -> Result<Self, RngError> {
        if width == 0 || width > 31 {
            return Err(RngError::BadWidth(width));
        }
        let mut mask = 0u32;
        for &tap in taps {
            if tap >= width {
                return Err(RngError::TapOutOfRange { tap, width });
            }
            mask |= 1 << tap;
        }
        if mask & 1 == 0 {
            return Err(RngError::SingularTaps);
        }
        let state = state & ((1u32 << width) - 1);
        if state == 0 {
            return Err(RngError::ZeroState);
        }
        Ok(Self {
            width,
            taps: mask,
            state,
        })
    }

    /// The 8-bit keystream register loaded with `seed` (0 is remapped).
    pub fn keystream_register(seed: u8) -> Self {
        let seed = if seed == 0 { ZERO_SEED_SUBSTITUTE } else { seed };
        Self::new(8, TAPS_8, u32::from(seed)).expect("default taps are valid")
    }

    /// A selector register of the given width using the default taps.
    pub fn selector(width: u8, seed: u32) -> Result<Self, RngError> {
        let taps = default_taps(width).ok_or(RngError::BadWidth(width))?;
        Self::new(width, taps, seed)
    }

    pub fn width(&self) -> u8 {
        self.width
    }

    pub fn state(&self) -> u32 {
        self.state
    }

    pub fn tap_positions(&self) -> Vec<u8> {
        (0..self.width).filter(|t| self.taps >> t & 1 == 1).collect()
    }

    /// Clocks once and returns the output bit.
    pub fn step(&mut self) -> bool {
        let out = self.state & 1 == 1;
        let feedback = (self.state & self.taps).count_ones() & 1;
        self.state = (self.state >> 1) | (feedback << (self.width - 1));
        out
    }

    /// Clocks `n` times and packs the outputs, first bit most significant.
    pub fn next_bits(&mut self, n: u32) -> u32 {
        (0..n).fold(0, |acc, _| (acc << 1) | u32::from(self.step()))
    }

    /// Number of steps before the state first repeats.
    pub fn period(&self) -> u64 {
        let mut s = *self;
        let mut n = 0u64;
        loop {
            s.step();
            n += 1;
            if s.state == self.state {
                return n;
            }
        }
    }

    pub fn is_maximal(&self) -> bool {
        self.period() == (1u64 << self.width) - 1
    }
}

pub fn default_taps(width: u8) -> Option<&'static [u8]> {
    match width {
        4 => Some(TAPS_4),
        8 => Some(TAPS_8),
        16 => Some(TAPS_16),
        _ => None,
    }
}

/// Functional form of [`LfsrState::step`].
pub fn lfsr_step(s: LfsrState) -> (bool, LfsrState) {
    let mut next = s;
    let bit = next.step();
    (bit, next)
}

/// `len` output bits of the 8-bit register seeded with `seed`.
pub fn keystream(seed: u8, len: usize) -> BitString {
    let mut reg = LfsrState::keystream_register(seed);
    (0..len).map(|_| reg.step()).collect()
}

/// K1 and its complement K2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyPair {
    k1: BitString,
    k2: BitString,
}

impl KeyPair {
    pub fn from_k1(k1: BitString) -> Self {
        let k2 = k1.complement();
        Self { k1, k2 }
    }

    pub fn k1(&self) -> &BitString {
        &self.k1
    }

    pub fn k2(&self) -> &BitString {
        &self.k2
    }

    pub fn width(&self) -> usize {
        self.k1.len()
    }
}

pub fn derive_keypair(seed: u8, width: usize) -> Result<KeyPair, RngError> {
    if width < 2 || !width.is_multiple_of(2) {
        return Err(RngError::OddWidth(width));
    }
    Ok(KeyPair::from_k1(keystream(seed, width)))
}

/// Bits per draw for a range of `m` values.
pub fn draw_bits_for(m: usize) -> u32 {
    let needed = usize::BITS - (m.max(1) - 1).leading_zeros();
    needed.max(DRAW_BITS)
}

/// Uniform index in `0..m` by rejection sampling over selector draws.
///
/// `m == 1` returns 0 without clocking the selector.
pub fn pick_uniform(sel: &mut LfsrState, m: usize) -> Result<usize, RngError> {
    if m == 0 || m > MAX_PICK_RANGE {
        return Err(RngError::BadRange(m));
    }
    if m == 1 {
        return Ok(0);
    }
    let bits = draw_bits_for(m);
    loop {
        let draw = sel.next_bits(bits) as usize;
        if draw < m {
            return Ok(draw);
        }
    }
}
