//! Randomized flipping of masked bits and the per-bit budget it buys.

use cdpa::codec::{epsilon_of, flip_words, float_to_fixed, p_of_epsilon, FlipMask};
use cdpa::rng::{keyed_rng, Stream};

fn main() -> cdpa::Result<()> {
    for p in [0.6, 0.8, 0.9, 0.98, 0.999] {
        println!("p = {p:<6} epsilon = {:.3}", epsilon_of(p)?);
    }
    println!("epsilon = 2 needs p = {:.6}", p_of_epsilon(2.0)?);

    let mask = FlipMask::new(vec![2, 3], 0.9, 4, 16)?;
    let (clean, _) = float_to_fixed(&vec![0.5; 100_000], 4, 16)?;
    let sent = flip_words(&clean, &mask, &mut keyed_rng(1, Stream::Flip, &[]))?;
    for pos in 0..16u8 {
        let flips = clean.iter().zip(&sent).filter(|(a, b)| a.bit(pos) != b.bit(pos)).count();
        if flips > 0 || mask.contains(pos) {
            println!("position {pos}: flip rate {:.4}", flips as f64 / clean.len() as f64);
        }
    }
    Ok(())
}
