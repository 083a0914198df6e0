//! Compares backpropagated gradients with central differences on random small
//! networks covering every layer kind.
//!
//! cargo run --release --example gradcheck -- [nets] [seed]

use qcia::neuralnet::{grad_check, random_check_case};

fn main() -> qcia::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<u64>().expect("numeric argument"));
    let nets = args.next().unwrap_or(20);
    let seed = args.next().unwrap_or(0);
    let mut worst = 0.0f64;
    for i in 0..nets {
        let case = random_check_case(seed * 1_000_003 + i)?;
        let err = grad_check(&case.net, &case.batch, &case.labels, 1e-5)?;
        let a = case.net.arch();
        println!(
            "net {i:>2}: input {}x{}x{} params {:>4} batch {} rel err {err:.2e}",
            a.input.channels,
            a.input.height,
            a.input.width,
            case.net.param_count(),
            case.batch.len()
        );
        worst = worst.max(err);
    }
    println!("worst {worst:.2e}");
    Ok(())
}
