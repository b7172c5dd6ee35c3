//! Fixed-width bit strings, most-significant bit first.
//!
//! Every frame, key and keystream in the crate is a `BitString`. Index 0 is
//! the leftmost (most significant) bit, which is also the first bit on the
//! wire.

use std::fmt;
use std::ops::Range;

use bitvec::prelude::*;

#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct BitString(BitVec<u8, Msb0>);

impl BitString {
    pub fn new() -> Self {
        Self(BitVec::new())
    }

    pub fn zeros(len: usize) -> Self {
        Self(bitvec![u8, Msb0; 0; len])
    }

    pub fn ones(len: usize) -> Self {
        Self(bitvec![u8, Msb0; 1; len])
    }

    /// The low `width` bits of `value`, most significant first.
    pub fn from_uint(value: u64, width: usize) -> Self {
        let mut out = Self::new();
        out.push_uint(value, width);
        out
    }

    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        Self(bits.into_iter().collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<bool> {
        self.0.get(index).map(|b| *b)
    }

    pub fn set(&mut self, index: usize, value: bool) {
        self.0.set(index, value);
    }

    pub fn flip(&mut self, index: usize) {
        let bit = self.0[index];
        self.0.set(index, !bit);
    }

    pub fn push(&mut self, bit: bool) {
        self.0.push(bit);
    }

    pub fn push_uint(&mut self, value: u64, width: usize) {
        assert!(width <= 64, "field wider than 64 bits");
        for i in (0..width).rev() {
            self.0.push((value >> i) & 1 == 1);
        }
    }

    pub fn extend(&mut self, other: &BitString) {
        self.0.extend_from_bitslice(&other.0);
    }

    /// Reads `range` as an unsigned integer, most significant bit first.
    pub fn read_uint(&self, range: Range<usize>) -> u64 {
        assert!(range.len() <= 64, "field wider than 64 bits");
        self.0[range].iter().fold(0u64, |acc, b| (acc << 1) | u64::from(*b))
    }

    /// The whole string as an integer; panics above 64 bits.
    pub fn to_uint(&self) -> u64 {
        self.read_uint(0..self.len())
    }

    pub fn slice(&self, range: Range<usize>) -> BitString {
        Self(self.0[range].to_bitvec())
    }

    /// Left half and right half. The length must be even.
    pub fn halves(&self) -> (BitString, BitString) {
        let h = self.len() / 2;
        debug_assert_eq!(h * 2, self.len());
        (self.slice(0..h), self.slice(h..self.len()))
    }

    pub fn concat(left: &BitString, right: &BitString) -> BitString {
        let mut out = left.clone();
        out.extend(right);
        out
    }

    /// Bitwise XOR; `None` when the widths differ.
    pub fn xor(&self, other: &BitString) -> Option<BitString> {
        if self.len() != other.len() {
            return None;
        }
        let mut out = self.0.clone();
        out ^= other.0.as_bitslice();
        Some(Self(out))
    }

    pub fn complement(&self) -> BitString {
        Self(!self.0.clone())
    }

    pub fn count_ones(&self) -> usize {
        self.0.count_ones()
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.0.iter().by_vals()
    }

    /// Packed bytes; a trailing partial byte is zero padded on the right.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = self.0.clone();
        v.set_uninitialized(false);
        v.into_vec()
    }

    pub fn from_bytes(bytes: &[u8], len: usize) -> Option<BitString> {
        if len > bytes.len() * 8 {
            return None;
        }
        let mut v = BitVec::<u8, Msb0>::from_slice(bytes);
        v.truncate(len);
        Some(Self(v))
    }

    pub fn to_hex(&self) -> String {
        self.to_bytes().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Parses hex produced by [`BitString::to_hex`] back into `len` bits.
    pub fn from_hex(hex: &str, len: usize) -> Option<BitString> {
        let hex = hex.trim();
        if !hex.len().is_multiple_of(2) || hex.len() != len.div_ceil(8) * 2 {
            return None;
        }
        let bytes = (0..hex.len())
            .step_by(2)
            .map(|i| u8::from_str_radix(&hex[i..i + 2], 16).ok())
            .collect::<Option<Vec<u8>>>()?;
        Self::from_bytes(&bytes, len)
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString({}b ", self.len())?;
        for b in self.iter() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        f.write_str(")")
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl FromIterator<bool> for BitString {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        Self::from_bits(iter)
    }
}
