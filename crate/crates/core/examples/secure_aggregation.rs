//! Bitwise secure addition of client payloads and thresholded recovery.

use cdpa::aggregator::{decode_global, LayerAggregation, LayerSpec, RoundState};
use cdpa::codec::{flip_words, float_to_fixed, pack_payload, FlipMask, PayloadLayer};
use cdpa::rng::{keyed_rng, Stream};

fn main() -> cdpa::Result<()> {
    let (clients, p, z, m) = (20, 0.98, 4, 16);
    let mask = FlipMask::new(vec![2, 3], p, z, m)?;
    let target = [0.25, -0.5, 1.0, 0.0];
    let layout = vec![LayerSpec {
        layer_id: 0,
        name: "w".into(),
        param_count: target.len(),
        m,
        z,
        mask: mask.positions().to_vec(),
        aggregation: LayerAggregation::Bitwise,
    }];
    let mut state = RoundState::new(layout.clone(), clients)?.with_round(1);
    for c in 0..clients as u32 {
        let (words, _) = float_to_fixed(&target, z, m)?;
        let sent = flip_words(&words, &mask, &mut keyed_rng(3, Stream::Flip, &[c as u64]))?;
        let layer = PayloadLayer::new(0, m, z, mask.positions().to_vec(), &sent)?;
        state.accumulate_bytes(&pack_payload(1, c, &[layer])?)?;
    }
    let counts: Vec<u32> = state.counters(0)[..m as usize].to_vec();
    println!("ones per bit position, first parameter: {counts:?}");
    let global = decode_global(&state.recover(p)?, &layout)?;
    println!("recovered {:?}", global.get("w").unwrap());
    Ok(())
}
