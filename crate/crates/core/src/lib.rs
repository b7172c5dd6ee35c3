//! Lightweight key management and encryption for wireless body area networks.
//!
//! Two schemes share a bit-string codec and a small LFSR family:
//! [`iamkeys`] protects the WBAN controller to monitoring station link and
//! [`kemesis`] protects sensor to controller links. [`opcount`] tallies the
//! logical operations each frame costs and [`simnet`] drives both over a
//! lossy, slot-discrete network.

pub mod bits;
pub mod framing;
pub mod iamkeys;
pub mod kemesis;
pub mod opcount;
pub mod rng;
pub mod simnet;

pub use bits::BitString;
pub use framing::{AckFrame, CodecError, DataFrame, FrameConfig};
pub use opcount::OpCounter;
pub use rng::{KeyPair, LfsrState, RngError};
