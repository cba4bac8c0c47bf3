use serde::{Deserialize, Serialize};

use super::format_sig9;
use crate::codec::{fixed_to_float, FlipMask};
use crate::data::Dataset;
use crate::model::{compute_gradient, GradientSet, Model, ModelKind};
use crate::pipeline::encode_layer;
use crate::quantizer::LatticeSpec;
use crate::rng::{derive_seed, keyed_rng, Stream};
use crate::{Error, Result};

/// What a client applies to its gradient before sending it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbePipeline {
    pub lattice: Option<LatticeSpec>,
    pub mask: FlipMask,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub cosine_plain: f64,
    pub cosine_cdpa: f64,
    pub mse_plain: f64,
    pub mse_cdpa: f64,
}

/// Cosine of the angle between `a` and `b`; zero when either is zero.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len().max(1) as f64
}

/// Recovers a single training input from the gradient of a one-layer model.
///
/// Row `k` of the weight gradient is `dL/db_k * x`, so the row whose bias
/// gradient is largest in magnitude is divided by that bias gradient.
/// Returns `None` when every bias gradient is zero.
pub fn reconstruct_input(model: &Model, grads: &GradientSet) -> Result<Option<Vec<f64>>> {
    if model.kind() == ModelKind::Mlp {
        return Err(Error::Unsupported("inversion probe needs a linear or logistic model".into()));
    }
    let layer = &model.layers()[0];
    let g = grads
        .get(&layer.name)
        .ok_or_else(|| Error::Shape(format!("gradient has no layer {}", layer.name)))?;
    let (d, k) = (layer.in_dim, layer.out_dim);
    if g.len() != d * k + k {
        return Err(Error::Shape(format!("layer {} gradient has {} values", layer.name, g.len())));
    }
    let bias = &g[d * k..];
    let best = (0..k)
        .max_by(|&a, &b| bias[a].abs().total_cmp(&bias[b].abs()))
        .expect("at least one output");
    if bias[best] == 0.0 {
        return Ok(None);
    }
    Ok(Some(g[best * d..(best + 1) * d].iter().map(|w| w / bias[best]).collect()))
}

fn score(model: &Model, grads: &GradientSet, x: &[f64]) -> Result<(f64, f64)> {
    Ok(match reconstruct_input(model, grads)? {
        Some(xh) => (cosine_similarity(&xh, x), mse(&xh, x)),
        None => (0.0, mse(&vec![0.0; x.len()], x)),
    })
}

/// Inverts the plain gradient of `sample` and the same gradient after the
/// client pipeline. `trial` keys the dither and flip streams.
pub fn inversion_probe(model: &Model, sample: &Dataset, pipeline: &ProbePipeline, trial: u64) -> Result<ProbeResult> {
    if model.kind() == ModelKind::Mlp {
        return Err(Error::Unsupported("inversion probe needs a linear or logistic model".into()));
    }
    if sample.n_examples() != 1 {
        return Err(Error::Shape(format!("probe needs one example, got {}", sample.n_examples())));
    }
    let (plain, _) = compute_gradient(model, sample)?;
    let mut sent = Vec::with_capacity(plain.layers().len());
    for (li, (name, values)) in plain.layers().iter().enumerate() {
        let path = [trial, li as u64];
        let enc = encode_layer(
            values,
            pipeline.lattice.as_ref(),
            derive_seed(pipeline.seed, Stream::Dither, &path),
            &pipeline.mask,
            &mut keyed_rng(pipeline.seed, Stream::Probe, &path),
        )?;
        sent.push((name.clone(), fixed_to_float(&enc.sent, pipeline.mask.z())));
    }
    let x = sample.row(0);
    let (cosine_plain, mse_plain) = score(model, &plain, x)?;
    let (cosine_cdpa, mse_cdpa) = score(model, &GradientSet::new(sent), x)?;
    Ok(ProbeResult {
        cosine_plain,
        cosine_cdpa,
        mse_plain,
        mse_cdpa,
    })
}

/// Probes `trials` examples drawn uniformly from `data`.
pub fn run_probe(model: &Model, data: &Dataset, trials: usize, pipeline: &ProbePipeline) -> Result<Vec<ProbeResult>> {
    use rand::Rng;
    if data.is_empty() {
        return Err(Error::Shape("probe dataset is empty".into()));
    }
    let mut pick = keyed_rng(pipeline.seed, Stream::Probe, &[u64::MAX]);
    (0..trials)
        .map(|t| {
            let i = pick.random_range(0..data.n_examples());
            inversion_probe(model, &data.subset(&[i]), pipeline, t as u64)
        })
        .collect()
}

/// Writes `probe.csv` rows: trial, cosine_plain, cosine_cdpa, mse_plain, mse_cdpa.
pub fn write_probe_csv<W: std::io::Write>(results: &[ProbeResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let enc = |e: csv::Error| Error::Encode(format!("csv: {e}"));
    w.write_record(["trial", "cosine_plain", "cosine_cdpa", "mse_plain", "mse_cdpa"])
        .map_err(enc)?;
    for (t, r) in results.iter().enumerate() {
        w.write_record([
            t.to_string(),
            format_sig9(r.cosine_plain),
            format_sig9(r.cosine_cdpa),
            format_sig9(r.mse_plain),
            format_sig9(r.mse_cdpa),
        ])
        .map_err(enc)?;
    }
    w.flush().map_err(|e| Error::Encode(format!("csv: {e}")))?;
    Ok(())
}
