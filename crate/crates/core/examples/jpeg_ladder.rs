//! Walks the JPEG quality ladder on one desk image: scaled quant tables, stream
//! size and reconstruction error per quality factor.
//!
//! cargo run --release --example jpeg_ladder

use qcia::corpus::{synthesize, CorpusSpec};
use qcia::imageio::{jpeg_decode, jpeg_encode, jpeg_quant_table, QuantTable};

fn main() -> qcia::Result<()> {
    let img = synthesize(&CorpusSpec::default(), 0).image;
    let luma = QuantTable::standard_luma();
    println!("{:>4} {:>6} {:>8} {:>8}", "Q", "T[0,0]", "bytes", "MAE");
    for q in [100, 95, 75, 50, 27, 21, 15, 9, 3, 1] {
        let table = jpeg_quant_table(&luma, q)?;
        let bytes = jpeg_encode(&img, q)?;
        let back = jpeg_decode(&bytes)?;
        println!("{q:>4} {:>6} {:>8} {:>8.3}", table.get(0, 0), bytes.len(), back.mean_abs_diff(&img));
    }
    Ok(())
}
