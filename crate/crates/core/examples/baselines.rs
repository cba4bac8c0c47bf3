//! Same client gradients through FedAvg, LDP-Laplace, signSGD and GradDrop.

use cdpa::aggregator::{fedavg, graddrop_filter, ldp_aggregate, signsgd_aggregate};
use cdpa::analysis::cosine_similarity;
use cdpa::model::GradientSet;
use cdpa::rng::{keyed_rng, Stream};
use rand::Rng;

fn main() -> cdpa::Result<()> {
    let mut rng = keyed_rng(8, Stream::Data, &[]);
    let truth: Vec<f64> = (0..50).map(|_| rng.random_range(-1.0..1.0)).collect();
    let clients: Vec<GradientSet> = (0..20)
        .map(|_| GradientSet::new(vec![("w".into(), truth.iter().map(|t| t + rng.random_range(-0.3..0.3)).collect())]))
        .collect();
    let mean = fedavg(&clients)?;
    let flat = |g: &GradientSet| g.values().collect::<Vec<_>>();
    let report = |name: &str, g: &GradientSet| println!("{name:<10} cosine to truth {:.4}", cosine_similarity(&flat(g), &truth));
    report("fedavg", &mean);
    for eps in [0.5, 4.0] {
        report(&format!("ldp e={eps}"), &ldp_aggregate(&clients, eps, 1.0, &mut keyed_rng(8, Stream::Laplace, &[]))?);
    }
    report("signsgd", &signsgd_aggregate(&clients)?);
    let dropped = clients.iter().map(|g| graddrop_filter(g, 0.8)).collect::<cdpa::Result<Vec<_>>>()?;
    report("graddrop", &fedavg(&dropped)?);
    Ok(())
}
