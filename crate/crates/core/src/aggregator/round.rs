use std::collections::HashSet;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::codec::{scale_factor, Payload, MAX_WIDTH, MIN_WIDTH};
use crate::model::GradientSet;
use crate::{Error, Result};

/// Recovery threshold applied to the scaled count.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerAggregation {
    /// Per-bit counting and thresholded recovery.
    Bitwise,
    /// Mean of the decoded fixed-point values.
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub layer_id: u16,
    pub name: String,
    pub param_count: usize,
    pub m: u8,
    pub z: u8,
    /// Flip-mask positions, sorted, 0-based from the MSB.
    pub mask: Vec<u8>,
    pub aggregation: LayerAggregation,
}

impl LayerSpec {
    fn is_masked(&self, position: usize) -> bool {
        self.mask.binary_search(&(position as u8)).is_ok()
    }
}

/// Per-bit-position counters for one round.
///
/// Counters are integers, so the final state does not depend on the order in
/// which payloads arrive. Every layer also keeps the integer sum of its
/// decoded words, which backs the exact-mean path and the diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundState {
    layout: Vec<LayerSpec>,
    round: Option<u32>,
    expected: usize,
    clients: HashSet<u32>,
    /// `counters[l][j * m + i]`: ones seen at position `i` (from the MSB) of word `j`.
    counters: Vec<Vec<u32>>,
    sums: Vec<Vec<i64>>,
}

/// Zeroed state for `layout`, waiting for `expected` payloads.
pub fn new_round_state(layout: Vec<LayerSpec>, expected: usize) -> Result<RoundState> {
    RoundState::new(layout, expected)
}

impl RoundState {
    pub fn new(layout: Vec<LayerSpec>, expected: usize) -> Result<Self> {
        if layout.is_empty() {
            return Err(Error::Config("round layout has no layers".into()));
        }
        if expected == 0 {
            return Err(Error::Config("expected client count must be >= 1".into()));
        }
        let mut ids = HashSet::new();
        for l in &layout {
            if !(MIN_WIDTH..=MAX_WIDTH).contains(&l.m) {
                return Err(Error::Config(format!("layer {}: width {} out of range", l.name, l.m)));
            }
            if l.mask.iter().any(|&p| p >= l.m) || !l.mask.windows(2).all(|w| w[0] < w[1]) {
                return Err(Error::Config(format!("layer {}: invalid mask {:?}", l.name, l.mask)));
            }
            if !ids.insert(l.layer_id) {
                return Err(Error::Config(format!("duplicate layer id {}", l.layer_id)));
            }
        }
        let counters = layout
            .iter()
            .map(|l| match l.aggregation {
                LayerAggregation::Bitwise => vec![0; l.param_count * l.m as usize],
                LayerAggregation::Mean => Vec::new(),
            })
            .collect();
        let sums = layout.iter().map(|l| vec![0; l.param_count]).collect();
        Ok(Self {
            layout,
            round: None,
            expected,
            clients: HashSet::new(),
            counters,
            sums,
        })
    }

    /// Pins the round number payloads must carry.
    pub fn with_round(mut self, round: u32) -> Self {
        self.round = Some(round);
        self
    }

    pub fn layout(&self) -> &[LayerSpec] {
        &self.layout
    }

    pub fn round(&self) -> Option<u32> {
        self.round
    }

    pub fn expected(&self) -> usize {
        self.expected
    }

    pub fn clients_received(&self) -> usize {
        self.clients.len()
    }

    pub fn is_complete(&self) -> bool {
        self.clients.len() == self.expected
    }

    /// Bit counters of layer `index`, laid out word by word, MSB first.
    pub fn counters(&self, index: usize) -> &[u32] {
        &self.counters[index]
    }

    pub fn counter_count(&self) -> usize {
        self.counters.iter().map(Vec::len).sum()
    }

    /// Clears all counters and received clients, keeping layout and round.
    pub fn reset(&mut self) {
        self.clients.clear();
        self.counters.iter_mut().for_each(|c| c.iter_mut().for_each(|v| *v = 0));
        self.sums.iter_mut().for_each(|s| s.iter_mut().for_each(|v| *v = 0));
    }

    fn check(&self, payload: &Payload) -> Result<()> {
        if let Some(r) = self.round {
            if payload.round != r {
                return Err(Error::Rejected(format!(
                    "client {} sent round {}, state is collecting round {r}",
                    payload.client_id, payload.round
                )));
            }
        }
        if self.clients.contains(&payload.client_id) {
            return Err(Error::Rejected(format!(
                "duplicate submission from client {}",
                payload.client_id
            )));
        }
        if self.is_complete() {
            return Err(Error::Rejected(format!(
                "round already holds all {} payloads",
                self.expected
            )));
        }
        if payload.layers.len() != self.layout.len() {
            return Err(Error::Rejected(format!(
                "client {} sent {} layers, layout has {}",
                payload.client_id,
                payload.layers.len(),
                self.layout.len()
            )));
        }
        for (spec, layer) in self.layout.iter().zip(&payload.layers) {
            if spec.layer_id != layer.layer_id
                || spec.param_count != layer.words.len()
                || spec.m != layer.m
                || spec.z != layer.z
                || spec.mask != layer.mask
            {
                return Err(Error::Rejected(format!(
                    "client {}: layer {} does not match layout entry `{}`",
                    payload.client_id, layer.layer_id, spec.name
                )));
            }
        }
        Ok(())
    }

    /// Adds one client's words to the counters. The payload is validated in
    /// full before any counter moves, so a rejection leaves the state intact.
    pub fn accumulate(&mut self, payload: &Payload) -> Result<()> {
        self.check(payload)?;
        for ((spec, layer), (counters, sums)) in self
            .layout
            .iter()
            .zip(&payload.layers)
            .zip(self.counters.iter_mut().zip(self.sums.iter_mut()))
        {
            let m = spec.m as usize;
            let shift = 32 - m as u32;
            for (j, &w) in layer.words.iter().enumerate() {
                sums[j] += i64::from(((w << shift) as i32) >> shift);
                if spec.aggregation == LayerAggregation::Bitwise {
                    let base = j * m;
                    let mut bits = w;
                    while bits != 0 {
                        let b = bits.trailing_zeros() as usize;
                        counters[base + m - 1 - b] += 1;
                        bits &= bits - 1;
                    }
                }
            }
        }
        self.round.get_or_insert(payload.round);
        self.clients.insert(payload.client_id);
        Ok(())
    }

    /// Parses and accumulates a serialized payload.
    pub fn accumulate_bytes(&mut self, bytes: &[u8]) -> Result<()> {
        self.accumulate(&Payload::from_bytes(bytes)?)
    }

    fn ensure_complete(&self) -> Result<()> {
        if self.is_complete() {
            Ok(())
        } else {
            Err(Error::NotReady {
                received: self.clients.len(),
                expected: self.expected,
            })
        }
    }

    /// Thresholded recovery with the default threshold of one half.
    pub fn recover(&self, p: f64) -> Result<Vec<RecoveredLayer>> {
        self.recover_with_threshold(p, DEFAULT_THRESHOLD)
    }

    /// Rebuilds each bitwise layer's words position by position: a masked
    /// position is set when `count / (R p) >= threshold`, an unmasked one when
    /// `count / R >= threshold`. Mean layers yield the average decoded value.
    pub fn recover_with_threshold(&self, p: f64, threshold: f64) -> Result<Vec<RecoveredLayer>> {
        if !(p > 0.5 && p <= 1.0) {
            return Err(Error::Domain(format!("recovery needs 0.5 < p <= 1, got {p}")));
        }
        self.ensure_complete()?;
        let r = self.expected;
        Ok(self
            .layout
            .iter()
            .zip(self.counters.iter().zip(&self.sums))
            .map(|(spec, (counters, sums))| {
                let values = match spec.aggregation {
                    LayerAggregation::Bitwise => {
                        let m = spec.m as usize;
                        let masked: Vec<bool> = (0..m).map(|i| spec.is_masked(i)).collect();
                        RecoveredValues::Words(
                            counters
                                .chunks_exact(m)
                                .map(|word| {
                                    word.iter().zip(&masked).fold(0u32, |acc, (&c, &is_masked)| {
                                        (acc << 1) | u32::from(recover_bit(c, r, p, is_masked, threshold))
                                    })
                                })
                                .collect(),
                        )
                    }
                    LayerAggregation::Mean => {
                        let denom = r as f64 * scale_factor(spec.z);
                        RecoveredValues::Mean(sums.iter().map(|&s| s as f64 / denom).collect())
                    }
                };
                RecoveredLayer {
                    layer_id: spec.layer_id,
                    m: spec.m,
                    z: spec.z,
                    values,
                }
            })
            .collect())
    }

    /// Exact mean of the decoded words of every layer, ignoring recovery.
    pub fn mean_decoded(&self) -> Result<GradientSet> {
        self.ensure_complete()?;
        let r = self.expected as f64;
        Ok(GradientSet::new(
            self.layout
                .iter()
                .zip(&self.sums)
                .map(|(spec, sums)| {
                    let denom = r * scale_factor(spec.z);
                    (spec.name.clone(), sums.iter().map(|&s| s as f64 / denom).collect())
                })
                .collect(),
        ))
    }
}

/// One recovered bit. `masked` selects the `1 / (R p)` scaling; unmasked
/// positions use `1 / R`. Equality with the threshold recovers a one.
pub fn recover_bit(count: u32, clients: usize, p: f64, masked: bool, threshold: f64) -> bool {
    let scale = if masked { clients as f64 * p } else { clients as f64 };
    !((count as f64) / scale < threshold)
}

#[derive(Debug, Clone, PartialEq)]
pub enum RecoveredValues {
    /// Raw `m`-bit words rebuilt from recovered bits.
    Words(Vec<u32>),
    /// Already-decoded means.
    Mean(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredLayer {
    pub layer_id: u16,
    pub m: u8,
    pub z: u8,
    pub values: RecoveredValues,
}

/// Turns recovered layers into real-valued gradients named after `layout`.
pub fn decode_global(recovered: &[RecoveredLayer], layout: &[LayerSpec]) -> Result<GradientSet> {
    if recovered.len() != layout.len() {
        return Err(Error::Shape(format!(
            "{} recovered layers for a {}-layer layout",
            recovered.len(),
            layout.len()
        )));
    }
    let mut layers = Vec::with_capacity(layout.len());
    for (rec, spec) in recovered.iter().zip(layout) {
        if rec.layer_id != spec.layer_id {
            return Err(Error::Shape(format!(
                "recovered layer {} where layout expects {}",
                rec.layer_id, spec.layer_id
            )));
        }
        let values = match &rec.values {
            RecoveredValues::Words(words) => {
                let shift = 32 - rec.m as u32;
                let scale = scale_factor(rec.z);
                words
                    .iter()
                    .map(|&w| (((w << shift) as i32) >> shift) as f64 / scale)
                    .collect()
            }
            RecoveredValues::Mean(v) => v.clone(),
        };
        layers.push((spec.name.clone(), values));
    }
    Ok(GradientSet::new(layers))
}

/// Round state shared by concurrent client submitters.
#[derive(Debug)]
pub struct SharedRoundState {
    inner: Mutex<RoundState>,
}

impl SharedRoundState {
    pub fn new(state: RoundState) -> Self {
        Self {
            inner: Mutex::new(state),
        }
    }

    pub fn submit(&self, payload: &Payload) -> Result<()> {
        self.inner
            .lock()
            .expect("round state lock poisoned")
            .accumulate(payload)
    }

    pub fn submit_bytes(&self, bytes: &[u8]) -> Result<()> {
        let payload = Payload::from_bytes(bytes)?;
        self.submit(&payload)
    }

    pub fn clients_received(&self) -> usize {
        self.inner.lock().expect("round state lock poisoned").clients_received()
    }

    /// Ends the submission phase; recovery needs exclusive access.
    pub fn into_inner(self) -> RoundState {
        self.inner.into_inner().expect("round state lock poisoned")
    }
}
