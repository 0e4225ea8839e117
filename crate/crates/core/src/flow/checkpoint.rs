//! Checkpoint byte layout (all little-endian):
//!
//! | bytes     | content                        |
//! |-----------|--------------------------------|
//! | 0..4      | magic `b"TMPF"`                |
//! | 4..8      | format version, `u32` (= 1)    |
//! | 8..16     | hidden width `H`, `u64`        |
//! | 16..      | `param_count(H)` values, `f64` |

use std::path::Path;

use super::{param_count, PolicyParams};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"TMPF";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

pub fn encode_params(params: &PolicyParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * params.len());
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.hidden() as u64).to_le_bytes());
    for v in params.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_params(bytes: &[u8]) -> Result<PolicyParams> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Checkpoint(format!("truncated header ({} bytes)", bytes.len())));
    }
    if bytes[0..4] != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let hidden = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = &bytes[HEADER_LEN..];
    let expected = param_count(hidden);
    if body.len() != 8 * expected {
        return Err(Error::Checkpoint(format!(
            "expected {expected} parameters for H={hidden}, found {} bytes",
            body.len()
        )));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    PolicyParams::from_flat(hidden, data)
}

pub fn save_params(params: &PolicyParams, path: &Path) -> Result<()> {
    std::fs::write(path, encode_params(params))?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<PolicyParams> {
    decode_params(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let p = PolicyParams::init(3, 1);
        let bytes = encode_params(&p);
        assert_eq!(&bytes[0..4], b"TMPF");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..16], &3u64.to_le_bytes());
        assert_eq!(bytes.len(), 16 + 8 * param_count(3));
        assert_eq!(&bytes[16..24], &p.as_slice()[0].to_le_bytes());
    }

    #[test]
    fn rejects_corrupt_input() {
        let mut bytes = encode_params(&PolicyParams::init(3, 1));
        assert!(decode_params(&bytes[..10]).is_err());
        assert!(decode_params(&bytes[..bytes.len() - 1]).is_err());
        bytes[0] = b'X';
        assert!(decode_params(&bytes).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip(h in 1usize..12, seed in any::<u64>()) {
            let p = PolicyParams::init(h, seed);
            prop_assert_eq!(decode_params(&encode_params(&p)).unwrap(), p);
        }
    }
}
