use super::dct;
use super::tables::*;
use super::{jpeg_quant_table, QuantTable};
use crate::error::Result;
use crate::imageio::Raster;

struct BitWriter {
    out: Vec<u8>,
    acc: u32,
    nbits: u32,
}

impl BitWriter {
    fn new(out: Vec<u8>) -> Self {
        Self { out, acc: 0, nbits: 0 }
    }

    fn put(&mut self, code: u16, len: u8) {
        if len == 0 {
            return;
        }
        self.acc = (self.acc << len) | (code as u32 & ((1u32 << len) - 1));
        self.nbits += len as u32;
        while self.nbits >= 8 {
            let byte = (self.acc >> (self.nbits - 8)) as u8;
            self.out.push(byte);
            if byte == 0xFF {
                self.out.push(0x00);
            }
            self.nbits -= 8;
        }
        self.acc &= (1u32 << self.nbits) - 1;
    }

    /// Pads the final partial byte with 1-bits.
    fn finish(mut self) -> Vec<u8> {
        if self.nbits > 0 {
            let pad = 8 - self.nbits as u8;
            self.put((1u16 << pad) - 1, pad);
        }
        self.out
    }
}

struct HuffTables {
    dc: [(u16, u8); 256],
    ac: [(u16, u8); 256],
}

fn magnitude(v: i32) -> (u16, u8) {
    let size = (32 - v.unsigned_abs().leading_zeros()) as u8;
    let bits = if v < 0 { (v - 1) as u16 } else { v as u16 };
    (bits, size)
}

fn write_block(w: &mut BitWriter, q: &[i32; 64], prev_dc: &mut i32, h: &HuffTables) {
    let diff = q[0] - *prev_dc;
    *prev_dc = q[0];
    let (bits, size) = magnitude(diff);
    let (code, len) = h.dc[size as usize];
    w.put(code, len);
    w.put(bits, size);

    let mut run = 0;
    for k in 1..64 {
        let v = q[ZIGZAG[k]];
        if v == 0 {
            run += 1;
            continue;
        }
        while run > 15 {
            let (code, len) = h.ac[0xF0];
            w.put(code, len);
            run -= 16;
        }
        let (bits, size) = magnitude(v);
        let (code, len) = h.ac[(run << 4) | size as usize];
        w.put(code, len);
        w.put(bits, size);
        run = 0;
    }
    if run > 0 {
        let (code, len) = h.ac[0x00];
        w.put(code, len);
    }
}

fn quantize(block: &[f64; 64], table: &QuantTable) -> [i32; 64] {
    let coefs = dct::forward(block);
    let mut q = [0i32; 64];
    for i in 0..64 {
        // f64::round rounds half away from zero
        q[i] = (coefs[i] / table.values()[i] as f64).round() as i32;
    }
    q
}

/// A level-shifted plane padded by edge replication to `pw`×`ph`.
struct Plane {
    w: usize,
    data: Vec<f64>,
}

impl Plane {
    fn block(&self, bx: usize, by: usize) -> [f64; 64] {
        let mut b = [0.0; 64];
        for y in 0..8 {
            let row = (by * 8 + y) * self.w + bx * 8;
            b[y * 8..y * 8 + 8].copy_from_slice(&self.data[row..row + 8]);
        }
        b
    }
}

fn padded_plane(src: &[f64], w: usize, h: usize, pw: usize, ph: usize) -> Plane {
    let mut data = Vec::with_capacity(pw * ph);
    for y in 0..ph {
        let sy = y.min(h - 1);
        for x in 0..pw {
            data.push(src[sy * w + x.min(w - 1)] - 128.0);
        }
    }
    Plane { w: pw, data }
}

/// 2×2 box average; odd edges replicate.
fn subsample(src: &[f64], w: usize, h: usize) -> (Vec<f64>, usize, usize) {
    let (cw, ch) = (w.div_ceil(2), h.div_ceil(2));
    let mut out = Vec::with_capacity(cw * ch);
    for y in 0..ch {
        for x in 0..cw {
            let (x0, y0) = (2 * x, 2 * y);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
            out.push(
                (src[y0 * w + x0] + src[y0 * w + x1] + src[y1 * w + x0] + src[y1 * w + x1]) / 4.0,
            );
        }
    }
    (out, cw, ch)
}

fn marker(out: &mut Vec<u8>, m: u8) {
    out.extend_from_slice(&[0xFF, m]);
}

fn segment(out: &mut Vec<u8>, m: u8, payload: &[u8]) {
    marker(out, m);
    out.extend_from_slice(&((payload.len() + 2) as u16).to_be_bytes());
    out.extend_from_slice(payload);
}

fn dqt(out: &mut Vec<u8>, id: u8, table: &QuantTable) {
    let mut p = vec![id];
    p.extend(ZIGZAG.iter().map(|&n| table.values()[n] as u8));
    segment(out, 0xDB, &p);
}

fn dht(out: &mut Vec<u8>, class_id: u8, bits: &[u8; 16], vals: &[u8]) {
    let mut p = vec![class_id];
    p.extend_from_slice(bits);
    p.extend_from_slice(vals);
    segment(out, 0xC4, &p);
}

pub fn encode(r: &Raster, quality: i32) -> Result<Vec<u8>> {
    let luma_q = jpeg_quant_table(&QuantTable::standard_luma(), quality)?;
    let chroma_q = jpeg_quant_table(&QuantTable::standard_chroma(), quality)?;
    let (w, h) = (r.width(), r.height());
    let color = r.channels() == 3;

    let mut out = Vec::new();
    marker(&mut out, 0xD8);
    segment(&mut out, 0xE0, &[b'J', b'F', b'I', b'F', 0, 1, 1, 0, 0, 1, 0, 1, 0, 0]);
    dqt(&mut out, 0, &luma_q);
    if color {
        dqt(&mut out, 1, &chroma_q);
    }
    let mut sof = vec![8];
    sof.extend_from_slice(&(h as u16).to_be_bytes());
    sof.extend_from_slice(&(w as u16).to_be_bytes());
    if color {
        sof.extend_from_slice(&[3, 1, 0x22, 0, 2, 0x11, 1, 3, 0x11, 1]);
    } else {
        sof.extend_from_slice(&[1, 1, 0x11, 0]);
    }
    segment(&mut out, 0xC0, &sof);
    dht(&mut out, 0x00, &DC_LUMA_BITS, &DC_LUMA_VALS);
    dht(&mut out, 0x10, &AC_LUMA_BITS, &AC_LUMA_VALS);
    if color {
        dht(&mut out, 0x01, &DC_CHROMA_BITS, &DC_CHROMA_VALS);
        dht(&mut out, 0x11, &AC_CHROMA_BITS, &AC_CHROMA_VALS);
    }
    if color {
        segment(&mut out, 0xDA, &[3, 1, 0x00, 2, 0x11, 3, 0x11, 0, 63, 0]);
    } else {
        segment(&mut out, 0xDA, &[1, 1, 0x00, 0, 63, 0]);
    }

    let luma_h = HuffTables {
        dc: huffman_codes(&DC_LUMA_BITS, &DC_LUMA_VALS),
        ac: huffman_codes(&AC_LUMA_BITS, &AC_LUMA_VALS),
    };
    let mut bw = BitWriter::new(out);

    if color {
        let n = w * h;
        let (mut ys, mut cbs, mut crs) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for (i, px) in r.pixels().chunks_exact(3).enumerate() {
            let (rr, gg, bb) = (px[0] as f64, px[1] as f64, px[2] as f64);
            ys[i] = 0.299 * rr + 0.587 * gg + 0.114 * bb;
            cbs[i] = -0.168736 * rr - 0.331264 * gg + 0.5 * bb + 128.0;
            crs[i] = 0.5 * rr - 0.418688 * gg - 0.081312 * bb + 128.0;
        }
        let chroma_h = HuffTables {
            dc: huffman_codes(&DC_CHROMA_BITS, &DC_CHROMA_VALS),
            ac: huffman_codes(&AC_CHROMA_BITS, &AC_CHROMA_VALS),
        };
        let (mx, my) = (w.div_ceil(16), h.div_ceil(16));
        let y_plane = padded_plane(&ys, w, h, mx * 16, my * 16);
        let (cb_sub, cw, ch) = subsample(&cbs, w, h);
        let (cr_sub, _, _) = subsample(&crs, w, h);
        let cb_plane = padded_plane(&cb_sub, cw, ch, mx * 8, my * 8);
        let cr_plane = padded_plane(&cr_sub, cw, ch, mx * 8, my * 8);
        let mut dc = [0i32; 3];
        for my_i in 0..my {
            for mx_i in 0..mx {
                for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    let q = quantize(&y_plane.block(mx_i * 2 + dx, my_i * 2 + dy), &luma_q);
                    write_block(&mut bw, &q, &mut dc[0], &luma_h);
                }
                let q = quantize(&cb_plane.block(mx_i, my_i), &chroma_q);
                write_block(&mut bw, &q, &mut dc[1], &chroma_h);
                let q = quantize(&cr_plane.block(mx_i, my_i), &chroma_q);
                write_block(&mut bw, &q, &mut dc[2], &chroma_h);
            }
        }
    } else {
        let ys: Vec<f64> = r.pixels().iter().map(|&v| v as f64).collect();
        let (bx, by) = (w.div_ceil(8), h.div_ceil(8));
        let plane = padded_plane(&ys, w, h, bx * 8, by * 8);
        let mut dc = 0;
        for y in 0..by {
            for x in 0..bx {
                let q = quantize(&plane.block(x, y), &luma_q);
                write_block(&mut bw, &q, &mut dc, &luma_h);
            }
        }
    }

    let mut out = bw.finish();
    marker(&mut out, 0xD9);
    Ok(out)
}
