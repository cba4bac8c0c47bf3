use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Timing};
use crate::aggregator::{
    decode_global, fedavg, graddrop_filter, ldp_aggregate, signsgd_aggregate, AggregationMode, LayerAggregation,
    LayerSpec, RoundState, SharedRoundState,
};
use crate::analysis::{carbon_estimate, run_probe, ProbePipeline, ProbeResult};
use crate::codec::{epsilon_of, FlipMask, Payload, PayloadLayer};
use crate::data::{partition_iid, Dataset};
use crate::model::{apply_update, compute_gradient, evaluate, mean_loss, GradientSet, Model};
use crate::pipeline::encode_layer;
use crate::rng::{derive_seed, keyed_rng, Stream};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    pub accuracy: f64,
    pub comm_bits_per_client: u64,
    pub epsilon_per_bit: f64,
    pub clamp_count: u64,
    pub cdpa_vs_mean_l2: f64,
    pub wall_ms: f64,
    pub kg_co2: f64,
}

/// Everything one round produced, for callers that need more than metrics.
#[derive(Debug, Clone)]
pub struct RoundOutcome {
    pub metrics: RoundMetrics,
    /// Each client's net local update, before any encoding.
    pub updates: Vec<GradientSet>,
    /// What the server applied to the global model.
    pub aggregate: GradientSet,
    /// Serialized payloads, in client order (CDPA only).
    pub payloads: Vec<Vec<u8>>,
    /// Per client and layer, the bits flipping changed in each word (CDPA only).
    pub flip_residue: Vec<Vec<Vec<u32>>>,
}

struct ClientMessage {
    bytes: Vec<u8>,
    clamped: usize,
    residue: Vec<Vec<u32>>,
}

/// A federated run held in memory: global model, client shards, test split.
#[derive(Debug, Clone)]
pub struct Simulation {
    config: ExperimentConfig,
    model: Model,
    train: Dataset,
    test: Dataset,
    shards: Vec<Dataset>,
    round: usize,
}

impl Simulation {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let seed = config.seed;
        let full = config.dataset.load(derive_seed(seed, Stream::Data, &[]))?;
        let (train, test) = full.split(config.dataset.test_fraction(), seed)?;
        let shards = partition_iid(&train, config.clients, seed)?;
        let model = Model::for_dataset(config.model.kind, &train, config.model.hidden_dim, seed)?;
        Ok(Self {
            config,
            model,
            train,
            test,
            shards,
            round: 0,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn set_model(&mut self, model: Model) -> Result<()> {
        if model.layout() != self.model.layout() {
            return Err(Error::Shape("replacement model has a different layout".into()));
        }
        self.model = model;
        Ok(())
    }

    pub fn train_data(&self) -> &Dataset {
        &self.train
    }

    pub fn test_data(&self) -> &Dataset {
        &self.test
    }

    pub fn shards(&self) -> &[Dataset] {
        &self.shards
    }

    /// Rounds completed so far.
    pub fn rounds_done(&self) -> usize {
        self.round
    }

    /// Per-layer server layout. A layer is recovered bitwise when it is
    /// selected and the codec mask is non-empty; otherwise its decoded values
    /// are averaged.
    pub fn round_layout(&self) -> Vec<LayerSpec> {
        let codec = &self.config.codec;
        let layers = self.model.layers();
        layers
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let bitwise = !codec.mask.is_empty()
                    && self.config.aggregator.layer_selection.selects(&l.name, i, layers.len());
                LayerSpec {
                    layer_id: i as u16,
                    name: l.name.clone(),
                    param_count: l.param_count(),
                    m: codec.m,
                    z: codec.z,
                    mask: if bitwise { codec.mask.clone() } else { Vec::new() },
                    aggregation: if bitwise {
                        LayerAggregation::Bitwise
                    } else {
                        LayerAggregation::Mean
                    },
                }
            })
            .collect()
    }

    /// Runs `local_iters` SGD steps from the global model on the client's
    /// shard and returns `(initial - final) / lr` with the first step's loss.
    pub fn client_update(&self, client: usize) -> Result<(GradientSet, f64)> {
        let shard = &self.shards[client];
        let lr = self.config.lr;
        let mut local = self.model.clone();
        let mut first_loss = f64::NAN;
        for it in 0..self.config.local_iters {
            let batch = match self.config.batch_size {
                Some(b) if b < shard.n_examples() => {
                    let mut idx: Vec<usize> = (0..shard.n_examples()).collect();
                    let path = [self.round as u64, client as u64, it as u64];
                    idx.shuffle(&mut keyed_rng(self.config.seed, Stream::Batch, &path));
                    idx.truncate(b);
                    idx.sort_unstable();
                    shard.subset(&idx)
                }
                _ => shard.clone(),
            };
            let (g, loss) = compute_gradient(&local, &batch)?;
            if it == 0 {
                first_loss = loss;
            }
            apply_update(&mut local, &g, lr)?;
        }
        let update = self.model.parameters().sub(&local.parameters())?.map(|v| v / lr);
        Ok((update, first_loss))
    }

    fn encode_client(&self, client: usize, update: &GradientSet, layout: &[LayerSpec]) -> Result<ClientMessage> {
        let codec = &self.config.codec;
        let seed = self.config.seed;
        let mut layers = Vec::with_capacity(layout.len());
        let mut clamped = 0;
        let mut residue = Vec::with_capacity(layout.len());
        for (spec, (_, values)) in layout.iter().zip(update.layers()) {
            let mask = if spec.mask.is_empty() {
                FlipMask::empty(codec.z, codec.m)?
            } else {
                FlipMask::new(spec.mask.clone(), codec.p, codec.z, codec.m)?
            };
            let path = [self.round as u64, client as u64, u64::from(spec.layer_id)];
            let enc = encode_layer(
                values,
                self.config.lattice.as_ref(),
                derive_seed(seed, Stream::Dither, &path),
                &mask,
                &mut keyed_rng(seed, Stream::Flip, &path),
            )?;
            clamped += enc.clamped;
            residue.push(enc.clean.iter().zip(&enc.sent).map(|(c, s)| c.raw() ^ s.raw()).collect());
            layers.push(PayloadLayer::new(spec.layer_id, spec.m, spec.z, spec.mask.clone(), &enc.sent)?);
        }
        let payload = Payload {
            round: self.round as u32,
            client_id: client as u32,
            layers,
        };
        Ok(ClientMessage {
            bytes: payload.to_bytes()?,
            clamped,
            residue,
        })
    }

    /// One global round: local training, encoding and transmission,
    /// aggregation, and the global update.
    pub fn run_round(&mut self) -> Result<RoundOutcome> {
        let start = Instant::now();
        let round = self.round;
        let cfg = &self.config;
        let r = cfg.clients;
        let ctx = |client: usize| move |e: Error| e.context(format!("round {round}, client {client}"));

        let results: Vec<(GradientSet, f64)> = (0..r)
            .into_par_iter()
            .map(|c| self.client_update(c).map_err(ctx(c)))
            .collect::<Result<_>>()?;
        let (updates, _losses): (Vec<_>, Vec<_>) = results.into_iter().unzip();
        let n_params = self.model.parameter_count() as u64;

        let mut payloads = Vec::new();
        let mut flip_residue = Vec::new();
        let mut clamp_count = 0u64;
        let mut disagreement = 0.0;
        let (aggregate, comm_bits, epsilon) = match cfg.aggregator.mode {
            AggregationMode::Cdpa => {
                let layout = self.round_layout();
                let messages: Vec<ClientMessage> = updates
                    .par_iter()
                    .enumerate()
                    .map(|(c, u)| self.encode_client(c, u, &layout).map_err(ctx(c)))
                    .collect::<Result<_>>()?;
                let shared = SharedRoundState::new(RoundState::new(layout.clone(), r)?.with_round(round as u32));
                messages
                    .par_iter()
                    .enumerate()
                    .try_for_each(|(c, msg)| shared.submit_bytes(&msg.bytes).map_err(ctx(c)))?;
                let state = shared.into_inner();
                let recovered = state
                    .recover_with_threshold(cfg.recovery_p(), cfg.aggregator.threshold)
                    .map_err(|e| e.context(format!("round {round}")))?;
                let aggregate = decode_global(&recovered, &layout)?;
                disagreement = aggregate.sub(&state.mean_decoded()?)?.l2_norm();
                let bits = messages.iter().map(|m| m.bytes.len() as u64 * 8).max().unwrap_or(0);
                let any_flipped = layout.iter().any(|l| l.aggregation == LayerAggregation::Bitwise);
                let eps = if any_flipped { epsilon_of(cfg.codec.p)? } else { f64::INFINITY };
                for msg in messages {
                    clamp_count += msg.clamped as u64;
                    payloads.push(msg.bytes);
                    flip_residue.push(msg.residue);
                }
                (aggregate, bits, eps)
            }
            AggregationMode::Fedavg => (fedavg(&updates)?, n_params * u64::from(cfg.baseline_bits), f64::INFINITY),
            AggregationMode::Ldp => {
                let eps = cfg.aggregator.epsilon.expect("validated");
                let clip = cfg.aggregator.clip.expect("validated");
                let mut rng = keyed_rng(cfg.seed, Stream::Laplace, &[round as u64]);
                (
                    ldp_aggregate(&updates, eps, clip, &mut rng)?,
                    n_params * u64::from(cfg.baseline_bits),
                    eps,
                )
            }
            AggregationMode::Signsgd => (signsgd_aggregate(&updates)?, n_params, f64::INFINITY),
            AggregationMode::Graddrop => {
                let f = cfg.aggregator.drop_fraction.expect("validated");
                let kept = updates
                    .iter()
                    .map(|u| graddrop_filter(u, f))
                    .collect::<Result<Vec<_>>>()?;
                let kept_count = (((1.0 - f) * n_params as f64).ceil() as u64).min(n_params);
                (fedavg(&kept)?, kept_count * u64::from(cfg.baseline_bits), f64::INFINITY)
            }
        };

        apply_update(&mut self.model, &aggregate, cfg.lr)?;
        let train_loss = mean_loss(&self.model, &self.train)?;
        let (accuracy, test_loss) = if self.test.is_empty() {
            evaluate(&self.model, &self.train)?
        } else {
            evaluate(&self.model, &self.test)?
        };
        let wall_ms = match cfg.timing {
            Timing::Measured => start.elapsed().as_secs_f64() * 1e3,
            Timing::Off => 0.0,
        };
        self.round += 1;
        Ok(RoundOutcome {
            metrics: RoundMetrics {
                round,
                train_loss,
                test_loss,
                accuracy,
                comm_bits_per_client: comm_bits,
                epsilon_per_bit: epsilon,
                clamp_count,
                cdpa_vs_mean_l2: disagreement,
                wall_ms,
                kg_co2: carbon_estimate(wall_ms, cfg.carbon_factor),
            },
            updates,
            aggregate,
            payloads,
            flip_residue,
        })
    }
}

/// Runs every configured round and returns one metrics row per round.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RoundMetrics>> {
    let mut sim = Simulation::new(config.clone())?;
    (0..config.rounds).map(|_| sim.run_round().map(|o| o.metrics)).collect()
}

/// Trains with plain FedAvg for `probe.warmup_rounds`, then inverts
/// `probe.trials` single-example gradients from the training split, once
/// plain and once through the configured client pipeline.
pub fn run_probe_experiment(config: &ExperimentConfig) -> Result<Vec<ProbeResult>> {
    let mut warm = config.clone();
    warm.aggregator = crate::aggregator::AggregatorConfig::new(AggregationMode::Fedavg);
    warm.timing = Timing::Off;
    let mut sim = Simulation::new(warm)?;
    for _ in 0..config.probe.warmup_rounds {
        sim.run_round()?;
    }
    let pipeline = ProbePipeline {
        lattice: config.lattice,
        mask: config.codec.flip_mask()?,
        seed: derive_seed(config.seed, Stream::Probe, &[]),
    };
    run_probe(sim.model(), sim.train_data(), config.probe.trials, &pipeline)
}
