//! Fixed-point encoding of a single value and the effect of each bit.

use cdpa::codec::{fixed_to_float, float_to_fixed, toggle_magnitude};

fn main() -> cdpa::Result<()> {
    let (z, m) = (4, 16);
    let (words, _) = float_to_fixed(&[2.7813, -2.7813], z, m)?;
    for w in &words {
        let bits = format!("{:016b}", w.raw());
        let grouped: Vec<&str> = (0..4).map(|i| &bits[4 * i..4 * i + 4]).collect();
        println!("{:>8} -> {}", w.value(), grouped.join(" "));
    }
    println!("decoded {:?}", fixed_to_float(&words, z));
    for pos in 0..m {
        let toggled = words[0].toggled(pos);
        println!(
            "bit {pos:>2}: +-{:<10} -> {}",
            toggle_magnitude(pos, m, z),
            fixed_to_float(&[toggled], z)[0]
        );
    }
    Ok(())
}
