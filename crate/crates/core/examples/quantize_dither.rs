//! Plain, dithered and subtractive-dithered lattice quantization of one vector.

use cdpa::quantizer::{dq_quantize, lattice_quantize, sdq_quantize, LatticeSpec};

fn main() -> cdpa::Result<()> {
    let spec = LatticeSpec::decimal(4, 500, 4)?;
    let v = [0.0123, -0.2871, 0.1, 0.49, -0.0001, 0.33];
    println!("input  {v:?}");
    println!("plain  {:?}", lattice_quantize(&v, &spec));
    println!("dq     {:?}", dq_quantize(&v, &spec, 7));
    println!("sdq    {:?}", sdq_quantize(&v, &spec, 7));

    // Averaging SDQ over fresh dithers converges on the input.
    let n = 20_000;
    let mut mean = vec![0.0; v.len()];
    for seed in 0..n {
        for (m, q) in mean.iter_mut().zip(sdq_quantize(&v, &spec, seed)) {
            *m += q / n as f64;
        }
    }
    println!("sdq mean over {n} dithers {mean:.4?}");
    println!("covering radius {}", spec.covering_radius());
    Ok(())
}
