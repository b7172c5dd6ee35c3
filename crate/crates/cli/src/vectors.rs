//! Golden vectors: one `name: hex` pair per line, `#` starts a comment.

use std::collections::BTreeMap;
use std::path::Path;

use wban_core::bits::BitString;
use wban_core::framing::{
    serialize_ack, serialize_iamkeys, serialize_kemesis, AckFrame, DataFrame, FrameConfig, FrameType, IamkeysWireFrame,
    KemesisWireFrame, KeyChoice,
};
use wban_core::iamkeys::{encrypt_block, sign_frame, IamkeysSender};
use wban_core::kemesis::{kemesis_derive_key, kemesis_sign};
use wban_core::rng::{derive_keypair, keystream};
use wban_core::simnet::{Deployment, Profile};

use crate::{read_file, write_file, CliError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VectorMode {
    Generate,
    Verify,
}

fn setup(e: impl std::fmt::Display) -> CliError {
    CliError::Setup(e.to_string())
}

fn byte(v: u8) -> String {
    BitString::from_uint(u64::from(v), 8).to_hex()
}

/// Recomputes every vector in a fixed order.
pub fn golden_vectors() -> Result<Vec<(String, String)>, CliError> {
    let mut v = Vec::new();

    for (seed, len) in [(0x01, 16), (0x5A, 16), (0xA5, 8), (0xA5, 16), (0x00, 16), (0xFF, 32)] {
        v.push((
            format!("keystream.seed{seed:02x}.len{len}"),
            keystream(seed, len).to_hex(),
        ));
    }

    let pt = BitString::from_uint(0x5A7C, 16);
    for seed in [0x01u8, 0x5A, 0xA5, 0xC3] {
        let keys = derive_keypair(seed, 16).map_err(setup)?;
        let ct = encrypt_block(&pt, &keys).map_err(setup)?;
        v.push((format!("block.seed{seed:02x}.pt5a7c"), ct.to_hex()));
    }

    let reference = DataFrame::new(7, 0x0000_1234, vec![10, 20, 30]);
    for tone in 1..=5 {
        v.push((
            format!("sign.iamkeys.tone{tone}"),
            byte(sign_frame(&reference, tone).map_err(setup)?),
        ));
    }
    for value in [0x00u16, 0x34, 0xA5, 0xFF, 0x1234] {
        v.push((format!("sign.kemesis.{value:04x}"), byte(kemesis_sign(value))));
    }

    let analysis = FrameConfig::analysis();
    let iamkeys = IamkeysWireFrame {
        enc_data: BitString::from_uint(0x0123_4567_89AB_CDEF, 64),
        seq_no: 0x0000_002A,
        ref_frm_seq_no: 0xFFFF_FFFD,
        field_no: 2,
        tone: 3,
        sender_auth: 0x9C,
    };
    v.push(("frame.iamkeys".into(), serialize_iamkeys(&iamkeys, &analysis)?.to_hex()));

    let kemesis = KemesisWireFrame {
        frm_type: FrameType::Control,
        seq_no: 0x0102_0304,
        frame_no: 15,
        field_no: 7,
        key_used: KeyChoice::K2,
        sig: 0x68,
        enc_data: BitString::from_uint(0xC3, 8),
    };
    v.push((
        "frame.kemesis.analysis".into(),
        serialize_kemesis(&kemesis, &analysis)?.to_hex(),
    ));
    let wide = KemesisWireFrame {
        frm_type: FrameType::Data,
        frame_no: 200,
        field_no: 12,
        key_used: KeyChoice::K1,
        enc_data: BitString::from_uint(0xBEEF, 16),
        ..kemesis
    };
    v.push((
        "frame.kemesis.realistic".into(),
        serialize_kemesis(&wide, &FrameConfig::realistic())?.to_hex(),
    ));
    v.push((
        "frame.ack".into(),
        serialize_ack(&AckFrame {
            acked_seq_no: 0xDEAD_BEEF,
        })
        .to_hex(),
    ));

    // End to end: the first frame a seed-1 deployment emits.
    let d = Deployment::new(1, Profile::Analysis)?;
    let mut sender = IamkeysSender::new(analysis, d.refs, d.wcc_selector).map_err(setup)?;
    let e = sender.emit(1, &[72, 110, 98]).map_err(setup)?;
    v.push((
        "emit.iamkeys.seed1".into(),
        serialize_iamkeys(&e.wire, &analysis)?.to_hex(),
    ));
    let key = kemesis_derive_key(&d.table, 3, 5, KeyChoice::K2).map_err(setup)?;
    v.push(("key.kemesis.seed1.cell3_5.k2".into(), key.to_hex()));

    Ok(v)
}

fn parse(path: &Path, text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (name, hex) = line.split_once(':').ok_or(CliError::VectorSyntax {
            path: path.to_path_buf(),
            line: i + 1,
        })?;
        out.insert(name.trim().to_string(), hex.trim().to_ascii_lowercase());
    }
    Ok(out)
}

/// Generate writes the vectors to `path`; verify diffs `path` against a
/// fresh computation and fails naming every differing or missing vector.
/// Returns the number of vectors written or checked.
pub fn cmd_vectors(mode: VectorMode, path: &Path) -> Result<usize, CliError> {
    let vectors = golden_vectors()?;
    match mode {
        VectorMode::Generate => {
            let mut text = String::from("# name: hex, MSB first, zero-padded to whole bytes\n");
            for (name, hex) in &vectors {
                text.push_str(&format!("{name}: {hex}\n"));
            }
            write_file(path, &text)?;
        }
        VectorMode::Verify => {
            let mut stored = parse(path, &read_file(path)?)?;
            let mut names = Vec::new();
            for (name, hex) in &vectors {
                if stored.remove(name).as_deref() != Some(hex.as_str()) {
                    names.push(name.clone());
                }
            }
            names.extend(stored.into_keys());
            if !names.is_empty() {
                return Err(CliError::Mismatch { names });
            }
        }
    }
    Ok(vectors.len())
}
