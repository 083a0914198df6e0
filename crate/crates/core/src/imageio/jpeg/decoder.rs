//! Baseline sequential (Huffman, 8-bit) JPEG decoder.

use super::dct;
use super::tables::ZIGZAG;
use crate::error::{Error, Result};
use crate::imageio::Raster;

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptStream(msg.into())
}

#[derive(Clone)]
struct Huffman {
    // canonical decoding tables indexed by code length 1..=16
    maxcode: [i32; 17],
    valptr: [i32; 17],
    mincode: [i32; 17],
    vals: Vec<u8>,
}

impl Huffman {
    fn new(bits: &[u8], vals: Vec<u8>) -> Result<Self> {
        let total: usize = bits.iter().map(|&b| b as usize).sum();
        if total != vals.len() || total > 256 {
            return Err(corrupt("inconsistent Huffman table"));
        }
        let mut h = Huffman { maxcode: [-1; 17], valptr: [0; 17], mincode: [0; 17], vals };
        let mut code = 0i32;
        let mut k = 0i32;
        for len in 1..=16 {
            let n = bits[len - 1] as i32;
            if n > 0 {
                h.valptr[len] = k;
                h.mincode[len] = code;
                code += n;
                k += n;
                h.maxcode[len] = code - 1;
            }
            if code > (1 << len) {
                return Err(corrupt("oversubscribed Huffman table"));
            }
            code <<= 1;
        }
        Ok(h)
    }
}

struct BitReader<'a> {
    data: &'a [u8],
    pos: usize,
    acc: u32,
    nbits: u32,
    // set once a marker is reached inside entropy data
    marker_hit: bool,
}

impl<'a> BitReader<'a> {
    fn new(data: &'a [u8], pos: usize) -> Self {
        Self { data, pos, acc: 0, nbits: 0, marker_hit: false }
    }

    fn fill(&mut self) -> Result<()> {
        while self.nbits <= 24 {
            let byte = if self.marker_hit {
                0
            } else {
                let b = *self.data.get(self.pos).ok_or_else(|| corrupt("truncated entropy data"))?;
                if b == 0xFF {
                    let next =
                        *self.data.get(self.pos + 1).ok_or_else(|| corrupt("truncated entropy data"))?;
                    if next == 0x00 {
                        self.pos += 2;
                        0xFF
                    } else {
                        self.marker_hit = true;
                        0
                    }
                } else {
                    self.pos += 1;
                    b
                }
            };
            self.acc |= (byte as u32) << (24 - self.nbits);
            self.nbits += 8;
        }
        Ok(())
    }

    fn bit(&mut self) -> Result<u32> {
        if self.nbits == 0 {
            self.fill()?;
        }
        let b = self.acc >> 31;
        self.acc <<= 1;
        self.nbits -= 1;
        Ok(b)
    }

    fn bits(&mut self, n: u8) -> Result<u32> {
        if n == 0 {
            return Ok(0);
        }
        if self.nbits < n as u32 {
            self.fill()?;
        }
        let v = self.acc >> (32 - n as u32);
        self.acc <<= n;
        self.nbits -= n as u32;
        Ok(v)
    }

    fn decode(&mut self, h: &Huffman) -> Result<u8> {
        let mut code = 0i32;
        for len in 1..=16 {
            code = (code << 1) | self.bit()? as i32;
            if code <= h.maxcode[len] {
                let idx = h.valptr[len] + code - h.mincode[len];
                return Ok(h.vals[idx as usize]);
            }
        }
        Err(corrupt("invalid Huffman code"))
    }

    fn receive_extend(&mut self, size: u8) -> Result<i32> {
        if size == 0 {
            return Ok(0);
        }
        if size > 16 {
            return Err(corrupt("coefficient magnitude category out of range"));
        }
        let v = self.bits(size)? as i32;
        Ok(if v < (1 << (size - 1)) { v - (1 << size) + 1 } else { v })
    }

    /// Drops buffered bits and consumes an expected RSTn marker.
    fn restart(&mut self) -> Result<()> {
        self.acc = 0;
        self.nbits = 0;
        self.marker_hit = false;
        match self.data.get(self.pos..self.pos + 2) {
            Some([0xFF, m]) if (0xD0..=0xD7).contains(m) => {
                self.pos += 2;
                Ok(())
            }
            _ => Err(corrupt("missing restart marker")),
        }
    }

    /// Byte offset just past the entropy-coded segment.
    fn end_position(&self) -> usize {
        let mut p = self.pos;
        while p + 1 < self.data.len() {
            if self.data[p] == 0xFF && self.data[p + 1] != 0x00 && !(0xD0..=0xD7).contains(&self.data[p + 1])
            {
                return p;
            }
            p += 1;
        }
        self.data.len()
    }
}

#[derive(Clone)]
struct Component {
    id: u8,
    h: usize,
    v: usize,
    tq: usize,
    td: usize,
    ta: usize,
}

fn read_u16(data: &[u8], pos: usize) -> Result<usize> {
    data.get(pos..pos + 2)
        .map(|b| u16::from_be_bytes([b[0], b[1]]) as usize)
        .ok_or_else(|| corrupt("truncated marker segment"))
}

pub fn decode(data: &[u8]) -> Result<Raster> {
    if data.get(..2) != Some(&[0xFF, 0xD8]) {
        return Err(Error::UnsupportedFormat("missing JPEG SOI marker".into()));
    }
    let mut pos = 2;
    let mut qtables: [Option<[u16; 64]>; 4] = [None; 4];
    let mut dc_tables: [Option<Huffman>; 4] = Default::default();
    let mut ac_tables: [Option<Huffman>; 4] = Default::default();
    let mut frame: Option<(usize, usize, Vec<Component>)> = None;
    let mut restart_interval = 0usize;
    let mut planes: Option<Vec<Plane>> = None;

    loop {
        // tolerate fill bytes between segments
        while data.get(pos) == Some(&0xFF) && data.get(pos + 1) == Some(&0xFF) {
            pos += 1;
        }
        let m = match data.get(pos..pos + 2) {
            Some([0xFF, m]) => *m,
            Some(_) => return Err(corrupt("expected marker")),
            None => return Err(corrupt("stream ends before EOI")),
        };
        pos += 2;
        match m {
            0xD9 => break,
            0xD0..=0xD7 | 0x01 => continue,
            0xC0 | 0xC1 => {
                let len = read_u16(data, pos)?;
                let seg = data.get(pos + 2..pos + len).ok_or_else(|| corrupt("truncated SOF"))?;
                if seg.len() < 6 || seg[0] != 8 {
                    return Err(Error::UnsupportedFormat("only 8-bit precision is supported".into()));
                }
                let height = u16::from_be_bytes([seg[1], seg[2]]) as usize;
                let width = u16::from_be_bytes([seg[3], seg[4]]) as usize;
                let nc = seg[5] as usize;
                if width == 0 || height == 0 {
                    return Err(Error::UnsupportedFormat("zero or deferred frame dimensions".into()));
                }
                if nc != 1 && nc != 3 {
                    return Err(Error::UnsupportedFormat(format!("{nc} components")));
                }
                if seg.len() < 6 + 3 * nc {
                    return Err(corrupt("truncated SOF components"));
                }
                let mut comps = Vec::with_capacity(nc);
                for c in seg[6..6 + 3 * nc].chunks_exact(3) {
                    let (h, v) = ((c[1] >> 4) as usize, (c[1] & 15) as usize);
                    if !(1..=4).contains(&h) || !(1..=4).contains(&v) || c[2] > 3 {
                        return Err(corrupt("bad component parameters"));
                    }
                    comps.push(Component { id: c[0], h, v, tq: c[2] as usize, td: 0, ta: 0 });
                }
                frame = Some((width, height, comps));
                pos += len;
            }
            0xC2 | 0xC3 | 0xC5..=0xC7 | 0xC9..=0xCB | 0xCD..=0xCF => {
                return Err(Error::UnsupportedFormat("only baseline sequential JPEG is supported".into()))
            }
            0xDB => {
                let len = read_u16(data, pos)?;
                let seg = data.get(pos + 2..pos + len).ok_or_else(|| corrupt("truncated DQT"))?;
                let mut p = 0;
                while p < seg.len() {
                    let (pq, tq) = (seg[p] >> 4, (seg[p] & 15) as usize);
                    if tq > 3 {
                        return Err(corrupt("bad quant table id"));
                    }
                    p += 1;
                    let mut t = [0u16; 64];
                    for &n in ZIGZAG.iter() {
                        t[n] = if pq == 0 {
                            let v = *seg.get(p).ok_or_else(|| corrupt("truncated DQT"))? as u16;
                            p += 1;
                            v
                        } else {
                            let v = read_u16(seg, p)? as u16;
                            p += 2;
                            v
                        };
                    }
                    qtables[tq] = Some(t);
                }
                pos += len;
            }
            0xC4 => {
                let len = read_u16(data, pos)?;
                let seg = data.get(pos + 2..pos + len).ok_or_else(|| corrupt("truncated DHT"))?;
                let mut p = 0;
                while p < seg.len() {
                    let (tc, th) = (seg[p] >> 4, (seg[p] & 15) as usize);
                    let bits = seg.get(p + 1..p + 17).ok_or_else(|| corrupt("truncated DHT"))?;
                    let n: usize = bits.iter().map(|&b| b as usize).sum();
                    let vals = seg.get(p + 17..p + 17 + n).ok_or_else(|| corrupt("truncated DHT"))?;
                    let table = Huffman::new(bits, vals.to_vec())?;
                    match (tc, th) {
                        (0, 0..=3) => dc_tables[th] = Some(table),
                        (1, 0..=3) => ac_tables[th] = Some(table),
                        _ => return Err(corrupt("bad Huffman table id")),
                    }
                    p += 17 + n;
                }
                pos += len;
            }
            0xDD => {
                restart_interval = read_u16(data, pos + 2)?;
                pos += read_u16(data, pos)?;
            }
            0xDA => {
                let len = read_u16(data, pos)?;
                let seg = data.get(pos + 2..pos + len).ok_or_else(|| corrupt("truncated SOS"))?;
                let (width, height, comps) =
                    frame.as_mut().ok_or_else(|| corrupt("SOS before SOF"))?;
                let ns = *seg.first().ok_or_else(|| corrupt("empty SOS"))? as usize;
                if ns != comps.len() {
                    return Err(Error::UnsupportedFormat("non-interleaved scans".into()));
                }
                for s in seg.get(1..1 + 2 * ns).ok_or_else(|| corrupt("truncated SOS"))?.chunks_exact(2) {
                    let c = comps
                        .iter_mut()
                        .find(|c| c.id == s[0])
                        .ok_or_else(|| corrupt("scan references unknown component"))?;
                    c.td = (s[1] >> 4) as usize;
                    c.ta = (s[1] & 15) as usize;
                    if c.td > 3 || c.ta > 3 {
                        return Err(corrupt("bad Huffman selector"));
                    }
                }
                pos += len;
                let (w, h) = (*width, *height);
                let comps = comps.clone();
                let (decoded, end) =
                    decode_scan(data, pos, w, h, &comps, &qtables, &dc_tables, &ac_tables, restart_interval)?;
                planes = Some(decoded);
                pos = end;
            }
            0xE0..=0xEF | 0xFE | 0xDC | 0xDE | 0xDF => {
                pos += read_u16(data, pos)?;
            }
            other => return Err(corrupt(format!("unexpected marker 0xFF{other:02X}"))),
        }
    }

    let (width, height, comps) = frame.ok_or_else(|| corrupt("no frame header"))?;
    let planes = planes.ok_or_else(|| corrupt("no scan data"))?;
    Ok(assemble(width, height, &comps, &planes))
}

#[allow(clippy::too_many_arguments)]
fn decode_scan(
    data: &[u8],
    start: usize,
    width: usize,
    height: usize,
    comps: &[Component],
    qtables: &[Option<[u16; 64]>; 4],
    dc_tables: &[Option<Huffman>; 4],
    ac_tables: &[Option<Huffman>; 4],
    restart_interval: usize,
) -> Result<(Vec<Plane>, usize)> {
    let hmax = comps.iter().map(|c| c.h).max().unwrap();
    let vmax = comps.iter().map(|c| c.v).max().unwrap();
    let single = comps.len() == 1;
    // a single-component scan is not interleaved: its MCU is one block
    let (mcux, mcuy) = if single {
        (width.div_ceil(8), height.div_ceil(8))
    } else {
        (width.div_ceil(8 * hmax), height.div_ceil(8 * vmax))
    };
    let mut planes = Vec::new();
    let mut strides = Vec::new();
    for c in comps {
        let (bw, bh) = if single { (mcux, mcuy) } else { (mcux * c.h, mcuy * c.v) };
        strides.push(bw * 8);
        planes.push(vec![0u8; bw * 8 * bh * 8]);
        if qtables[c.tq].is_none() {
            return Err(corrupt("missing quantization table"));
        }
        if dc_tables[c.td].is_none() || ac_tables[c.ta].is_none() {
            return Err(corrupt("missing Huffman table"));
        }
    }

    let mut reader = BitReader::new(data, start);
    let mut pred = vec![0i32; comps.len()];
    let total = mcux * mcuy;
    for mcu in 0..total {
        if restart_interval > 0 && mcu > 0 && mcu % restart_interval == 0 {
            reader.restart()?;
            pred.iter_mut().for_each(|p| *p = 0);
        }
        let (mx, my) = (mcu % mcux, mcu / mcux);
        for (ci, c) in comps.iter().enumerate() {
            let (nh, nv) = if single { (1, 1) } else { (c.h, c.v) };
            for by in 0..nv {
                for bx in 0..nh {
                    let coefs = decode_block(
                        &mut reader,
                        dc_tables[c.td].as_ref().unwrap(),
                        ac_tables[c.ta].as_ref().unwrap(),
                        &mut pred[ci],
                    )?;
                    let q = qtables[c.tq].as_ref().unwrap();
                    let mut deq = [0.0; 64];
                    for i in 0..64 {
                        deq[i] = (coefs[i] * q[i] as i32) as f64;
                    }
                    let samples = dct::inverse(&deq);
                    let (x0, y0) = ((mx * nh + bx) * 8, (my * nv + by) * 8);
                    let stride = strides[ci];
                    for y in 0..8 {
                        for x in 0..8 {
                            planes[ci][(y0 + y) * stride + x0 + x] =
                                (samples[y * 8 + x] + 128.0).round().clamp(0.0, 255.0) as u8;
                        }
                    }
                }
            }
        }
    }
    let end = reader.end_position();
    let planes = planes.into_iter().zip(strides).map(|(data, stride)| Plane { stride, data }).collect();
    Ok((planes, end))
}

fn decode_block(r: &mut BitReader, dc: &Huffman, ac: &Huffman, pred: &mut i32) -> Result<[i32; 64]> {
    let mut out = [0i32; 64];
    let size = r.decode(dc)?;
    *pred += r.receive_extend(size)?;
    out[0] = *pred;
    let mut k = 1;
    while k < 64 {
        let rs = r.decode(ac)?;
        let (run, size) = ((rs >> 4) as usize, rs & 15);
        if size == 0 {
            if run == 15 {
                k += 16;
                continue;
            }
            break;
        }
        k += run;
        if k > 63 {
            return Err(corrupt("AC coefficient index out of range"));
        }
        out[ZIGZAG[k]] = r.receive_extend(size)?;
        k += 1;
    }
    Ok(out)
}

struct Plane {
    stride: usize,
    data: Vec<u8>,
}

fn assemble(width: usize, height: usize, comps: &[Component], planes: &[Plane]) -> Raster {
    let hmax = comps.iter().map(|c| c.h).max().unwrap();
    let vmax = comps.iter().map(|c| c.v).max().unwrap();
    let sample = |ci: usize, x: usize, y: usize| -> u8 {
        let p = &planes[ci];
        let c = &comps[ci];
        let (sx, sy) = if comps.len() == 1 { (x, y) } else { (x * c.h / hmax, y * c.v / vmax) };
        p.data[sy * p.stride + sx]
    };
    if comps.len() == 1 {
        let mut px = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                px.push(sample(0, x, y));
            }
        }
        return Raster::new(width, height, 1, px).expect("decoded dimensions are valid");
    }
    let mut px = Vec::with_capacity(width * height * 3);
    for y in 0..height {
        for x in 0..width {
            let yy = sample(0, x, y) as f64;
            let cb = sample(1, x, y) as f64 - 128.0;
            let cr = sample(2, x, y) as f64 - 128.0;
            let to_u8 = |v: f64| v.round().clamp(0.0, 255.0) as u8;
            px.push(to_u8(yy + 1.402 * cr));
            px.push(to_u8(yy - 0.344136 * cb - 0.714136 * cr));
            px.push(to_u8(yy + 1.772 * cb));
        }
    }
    Raster::new(width, height, 3, px).expect("decoded dimensions are valid")
}
