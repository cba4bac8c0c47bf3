//! A short CDPA training run on synthetic blobs with per-round metrics.

use cdpa::harness::{write_metrics_csv, ExperimentConfig, Simulation, Summary};

fn main() -> cdpa::Result<()> {
    let mut cfg = ExperimentConfig::synthetic_default(5);
    cfg.rounds = 15;
    let clients = cfg.clients;
    let mut sim = Simulation::new(cfg)?;
    let mut metrics = Vec::new();
    for _ in 0..15 {
        metrics.push(sim.run_round()?.metrics);
    }
    write_metrics_csv(&metrics, std::io::stdout().lock())?;
    print!("{}", Summary::new(&metrics, clients).render());
    Ok(())
}
