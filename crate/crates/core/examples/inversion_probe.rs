//! Single-sample input reconstruction from plain and CDPA-encoded gradients.

use cdpa::harness::{run_probe_experiment, ExperimentConfig};

fn main() -> cdpa::Result<()> {
    let mut cfg = ExperimentConfig::from_file(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/configs/probe.toml"))?;
    cfg.probe.trials = 30;
    let results = run_probe_experiment(&cfg)?;
    let median = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    println!("median cosine, plain gradient {:.4}", median(results.iter().map(|r| r.cosine_plain).collect()));
    println!("median cosine, cdpa gradient  {:.4}", median(results.iter().map(|r| r.cosine_cdpa).collect()));
    Ok(())
}
