//! Binary PGM (P5) and PPM (P6) with maxval 255.

use crate::error::{Error, Result};
use crate::imageio::Raster;

pub fn encode_pnm(r: &Raster) -> Vec<u8> {
    let magic = if r.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", r.width(), r.height()).into_bytes();
    out.extend_from_slice(r.pixels());
    out
}

pub fn decode_pnm(bytes: &[u8]) -> Result<Raster> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(Error::UnsupportedFormat("not a binary PGM/PPM".into())),
    };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        *field = read_header_int(bytes, &mut pos)?;
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::CorruptStream("missing separator after PNM header".into()));
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::UnsupportedFormat(format!("PNM maxval {maxval}")));
    }
    let len = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::CorruptStream("PNM dimensions overflow".into()))?;
    let data = bytes
        .get(pos..pos + len)
        .ok_or_else(|| Error::CorruptStream("truncated PNM raster".into()))?;
    Raster::new(width, height, channels, data.to_vec())
        .map_err(|e| Error::CorruptStream(e.to_string()))
}

fn read_header_int(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    loop {
        match bytes.get(*pos) {
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(b'#') => {
                while bytes.get(*pos).is_some_and(|&b| b != b'\n') {
                    *pos += 1;
                }
            }
            Some(_) => break,
            None => return Err(Error::CorruptStream("truncated PNM header".into())),
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(u8::is_ascii_digit) {
        *pos += 1;
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::CorruptStream("bad PNM header field".into()))
}
