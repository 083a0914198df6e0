//! Binary checkpoint layout, all integers little-endian:
//!
//! ```text
//! "QCIA" | version u32 | arch_len u32 | arch JSON | params f32 × P
//!        | rng_seed u64 | epochs_trained u64 | velocity f32 × P | crc32 u32
//! ```
//!
//! The CRC covers every byte before it. Velocity and the training counters let a
//! loaded network resume exactly where it stopped.

use std::fs;
use std::path::Path;

use super::arch::ArchSpec;
use super::network::Network;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"QCIA";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(net: &Network) -> Result<Vec<u8>> {
    let arch = serde_json::to_vec(net.arch())?;
    let mut out = Vec::with_capacity(32 + arch.len() + 8 * net.param_count());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(arch.len() as u32).to_le_bytes());
    out.extend_from_slice(&arch);
    out.extend(net.params().iter().flat_map(|w| w.to_le_bytes()));
    out.extend_from_slice(&net.rng_seed().to_le_bytes());
    out.extend_from_slice(&net.epochs_trained().to_le_bytes());
    out.extend(net.velocity().iter().flat_map(|w| w.to_le_bytes()));
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::CorruptStream(format!("checkpoint truncated at byte {} (needed {n} more)", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::CorruptStream("size overflow".into()))?)?;
        Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Network> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    if cur.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::CorruptStream("not a checkpoint (bad magic)".into()));
    }
    let version = cur.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch { found: version, expected: CHECKPOINT_VERSION });
    }
    let arch_len = cur.u32()? as usize;
    let arch_bytes = cur.take(arch_len)?;
    // the architecture fixes every remaining length, so truncation is caught before the CRC
    let arch: ArchSpec = serde_json::from_slice(arch_bytes)
        .map_err(|e| Error::CorruptStream(format!("bad architecture block: {e}")))?;
    let n = arch.param_count()?;
    let params = cur.f32s(n)?;
    let rng_seed = cur.u64()?;
    let epochs = cur.u64()?;
    let velocity = cur.f32s(n)?;
    let body_end = cur.pos;
    let stored = cur.u32()?;
    if cur.pos != bytes.len() {
        return Err(Error::CorruptStream(format!("{} trailing bytes", bytes.len() - cur.pos)));
    }
    if crc32fast::hash(&bytes[..body_end]) != stored {
        return Err(Error::ChecksumMismatch);
    }
    Network::from_parts(arch, params, Some(velocity), rng_seed, epochs)
}

pub fn save_checkpoint(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_checkpoint(net)?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    decode_checkpoint(&bytes)
}
