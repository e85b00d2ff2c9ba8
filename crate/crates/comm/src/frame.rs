//! TCP wire format.
//!
//! ```text
//! +--------+----------------+-------------+----------------+-----------+
//! | "MHB1" | source u32 LE  | tag u32 LE  | length u64 LE  | payload   |
//! +--------+----------------+-------------+----------------+-----------+
//! ```
//!
//! Every connection starts with a hello frame (tag [`HELLO_TAG`], empty
//! payload) whose source field identifies the connecting rank.

use std::io::{self, Read, Write};

use crate::error::{CommError, Result};

pub const MAGIC: [u8; 4] = *b"MHB1";
pub const HEADER_LEN: usize = 20;
pub const HELLO_TAG: u32 = 0xFFFF_FFFF;
/// Bootstrap frame carrying a listen address (worker to coordinator) or the
/// full address table (coordinator to worker).
pub const ADDRESS_TAG: u32 = 0xFFFF_FFFE;

/// Upper bound accepted on the length field of an incoming frame.
pub const MAX_PAYLOAD: u64 = 1 << 36;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub source: u32,
    pub tag: u32,
    pub payload: Vec<u8>,
}

pub fn encode_header(source: u32, tag: u32, len: u64) -> [u8; HEADER_LEN] {
    let mut header = [0u8; HEADER_LEN];
    header[0..4].copy_from_slice(&MAGIC);
    header[4..8].copy_from_slice(&source.to_le_bytes());
    header[8..12].copy_from_slice(&tag.to_le_bytes());
    header[12..20].copy_from_slice(&len.to_le_bytes());
    header
}

pub fn write_frame<W: Write>(w: &mut W, source: u32, tag: u32, payload: &[u8]) -> io::Result<()> {
    w.write_all(&encode_header(source, tag, payload.len() as u64))?;
    w.write_all(payload)
}

/// Reads one frame. Returns `Ok(None)` on a clean end of stream at a frame
/// boundary.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Frame>> {
    let mut header = [0u8; HEADER_LEN];
    let mut filled = 0;
    while filled < HEADER_LEN {
        match r.read(&mut header[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => {
                return Err(CommError::Frame(format!(
                    "stream ended inside a frame header ({filled} of {HEADER_LEN} bytes)"
                )))
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    if header[0..4] != MAGIC {
        return Err(CommError::Frame(format!("bad magic {:02x?}", &header[0..4])));
    }
    let source = u32::from_le_bytes(header[4..8].try_into().unwrap());
    let tag = u32::from_le_bytes(header[8..12].try_into().unwrap());
    let len = u64::from_le_bytes(header[12..20].try_into().unwrap());
    if len > MAX_PAYLOAD {
        return Err(CommError::Frame(format!("payload length {len} exceeds limit")));
    }
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            CommError::Frame(format!("stream ended inside a {len}-byte payload"))
        } else {
            e.into()
        }
    })?;
    Ok(Some(Frame { source, tag, payload }))
}
