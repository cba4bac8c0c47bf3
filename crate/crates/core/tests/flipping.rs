use cdpa::codec::{bit_flip, fixed_to_float, FixedWord, FlipMask};
use cdpa::rng::{keyed_rng, Stream};
use rand::Rng;

#[test]
fn flip_rate_at_a_million_trials() {
    let p = 0.98;
    let mask = FlipMask::new(vec![2, 3], p, 4, 16).unwrap();
    let word = FixedWord::from_value(27813, 16).unwrap();
    let mut rng = keyed_rng(7, Stream::Flip, &[]);
    let n = 1_000_000;
    let mut flips = [0usize; 16];
    for _ in 0..n {
        let sent = bit_flip(word, &mask, &mut rng).unwrap();
        for (i, f) in flips.iter_mut().enumerate() {
            *f += usize::from(sent.bit(i as u8) != word.bit(i as u8));
        }
    }
    let sigma = (p * (1.0 - p) / n as f64).sqrt();
    for (i, &f) in flips.iter().enumerate() {
        if mask.contains(i as u8) {
            let rate = f as f64 / n as f64;
            assert!((rate - (1.0 - p)).abs() <= 3.0 * sigma, "position {i}: {rate}");
        } else {
            assert_eq!(f, 0, "unmasked position {i} flipped");
        }
    }
}

#[test]
fn magnitude_law_all_sixteen_positions() {
    let mut rng = keyed_rng(3, Stream::Probe, &[]);
    for _ in 0..1000 {
        let w = FixedWord::from_value(rng.random_range(-32768..32768), 16).unwrap();
        let before = fixed_to_float(&[w], 4)[0];
        for i in 0..16u8 {
            let after = fixed_to_float(&[w.toggled(i)], 4)[0];
            let expect = f64::from(1u32 << (15 - i)) / 1e4;
            assert!(((after - before).abs() - expect).abs() < 1e-9, "position {i}");
        }
    }
}
