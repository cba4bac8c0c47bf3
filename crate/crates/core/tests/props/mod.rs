//! Property suites shared by the `properties` test target and the acceptance
//! runner. Each suite runs 1000 cases from a fixed seed.

use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed, TestRunner};

use cdpa::aggregator::{
    graddrop_filter, signsgd_aggregate, LayerAggregation, LayerSpec, RecoveredValues, RoundState,
};
use cdpa::analysis::recovery_success_prob;
use cdpa::codec::{
    epsilon_of, fixed_to_float, flip_words, float_to_fixed, p_of_epsilon, toggle_magnitude, unpack_payload,
    FixedWord, FlipMask, Payload, PayloadLayer,
};
use cdpa::data::{partition_iid, Dataset};
use cdpa::model::{compute_gradient, mean_loss, set_parameters, GradientSet, Model, ModelKind};
use cdpa::quantizer::{sdq_quantize, LatticeSpec};
use cdpa::rng::{keyed_rng, Stream};

pub const CASES: u32 = 1000;

pub type Suite = (&'static str, fn() -> Result<(), String>);

pub const ALL: &[Suite] = &[
    ("flip rate converges to 1 - p", flip_rate),
    ("toggle magnitude law", magnitude_law),
    ("fixed-point roundtrip", fixed_roundtrip),
    ("payload pack/unpack roundtrip", payload_roundtrip),
    ("payload parser never panics", payload_fuzz),
    ("accumulate is order independent", accumulate_commutes),
    ("unanimous words recover exactly", unanimity),
    ("SDQ distortion bound", sdq_bound),
    ("gradients match finite differences", gradient_fd),
    ("partition soundness", partition_sound),
    ("recovery probability monotone in p", recovery_monotone),
    ("budget monotone and invertible", budget_inverse),
    ("graddrop drop count", graddrop_count),
    ("signsgd emits signs", signsgd_signs),
];

fn runner() -> TestRunner {
    TestRunner::new(Config {
        cases: CASES,
        failure_persistence: None,
        rng_seed: RngSeed::Fixed(0x5eed),
        ..Config::default()
    })
}

fn check<S: Strategy>(strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    runner().run(&strategy, test).map_err(|e| e.to_string())
}

fn width_and_value() -> impl Strategy<Value = (u8, i64)> {
    (8u8..=32).prop_flat_map(|m| {
        let half = 1i64 << (m - 1);
        (Just(m), -half..half)
    })
}

pub fn flip_rate() -> Result<(), String> {
    const WORDS: usize = 4000;
    let strat = (0.51f64..=1.0, proptest::collection::btree_set(0u8..16, 1..5), any::<u64>());
    check(strat, |(p, positions, seed)| {
        let mask = FlipMask::new(positions.iter().copied().collect(), p, 4, 16).unwrap();
        let words = vec![FixedWord::from_value(12345, 16).unwrap(); WORDS];
        let sent = flip_words(&words, &mask, &mut keyed_rng(seed, Stream::Flip, &[])).unwrap();
        let sigma = (p * (1.0 - p) / WORDS as f64).sqrt();
        for i in 0..16u8 {
            let flips = words.iter().zip(&sent).filter(|(a, b)| a.bit(i) != b.bit(i)).count();
            let rate = flips as f64 / WORDS as f64;
            if mask.contains(i) {
                prop_assert!((rate - (1.0 - p)).abs() <= 5.0 * sigma + 1e-12, "pos {i}: {rate} vs {}", 1.0 - p);
            } else {
                prop_assert_eq!(flips, 0);
            }
        }
        Ok(())
    })
}

pub fn magnitude_law() -> Result<(), String> {
    let strat = width_and_value().prop_flat_map(|(m, v)| (Just(m), Just(v), 0..m, 0u8..=8));
    check(strat, |(m, v, pos, z)| {
        let w = FixedWord::from_value(v, m).unwrap();
        let t = w.toggled(pos);
        let delta = (i64::from(t.value()) - i64::from(w.value())).unsigned_abs();
        prop_assert_eq!(delta, 1u64 << (m - 1 - pos));
        let real = delta as f64 / 10f64.powi(z as i32);
        prop_assert!((toggle_magnitude(pos, m, z) - real).abs() <= 1e-15 * real);
        Ok(())
    })
}

pub fn fixed_roundtrip() -> Result<(), String> {
    let strat = (8u8..=32, 0u8..=6).prop_flat_map(|(m, z)| {
        let lim = ((1i64 << (m - 1)) - 1) as f64 / 10f64.powi(z as i32);
        (Just(m), Just(z), proptest::collection::vec(-lim..=lim, 1..20))
    });
    check(strat, |(m, z, v)| {
        let (words, clamped) = float_to_fixed(&v, z, m).unwrap();
        prop_assert_eq!(clamped, 0);
        let back = fixed_to_float(&words, z);
        for (a, b) in v.iter().zip(&back) {
            prop_assert!((a - b).abs() <= 0.5 * 10f64.powi(-(z as i32)) + f64::EPSILON * a.abs());
        }
        for w in &words {
            prop_assert_eq!(FixedWord::from_raw(w.raw(), m).unwrap(), *w);
        }
        Ok(())
    })
}

fn arb_layer(layer_id: u16) -> impl Strategy<Value = PayloadLayer> {
    (8u8..=32, 0u8..=8).prop_flat_map(move |(m, z)| {
        let top = if m == 32 { u32::MAX } else { (1u32 << m) - 1 };
        (
            proptest::collection::btree_set(0..m, 0..4),
            proptest::collection::vec(0..=top, 0..40),
        )
            .prop_map(move |(mask, raw)| {
                let words: Vec<FixedWord> = raw.iter().map(|&r| FixedWord::from_raw(r, m).unwrap()).collect();
                PayloadLayer::new(layer_id, m, z, mask.into_iter().collect(), &words).unwrap()
            })
    })
}

fn arb_payload() -> impl Strategy<Value = Payload> {
    (any::<u32>(), any::<u32>(), proptest::collection::vec(arb_layer(0), 1..4)).prop_map(|(round, client_id, mut layers)| {
        for (i, l) in layers.iter_mut().enumerate() {
            l.layer_id = i as u16 * 3;
        }
        Payload {
            round,
            client_id,
            layers,
        }
    })
}

pub fn payload_roundtrip() -> Result<(), String> {
    check(arb_payload(), |payload| {
        let bytes = payload.to_bytes().unwrap();
        prop_assert_eq!(bytes.len(), payload.encoded_len());
        prop_assert_eq!(unpack_payload(&bytes).unwrap(), payload);
        Ok(())
    })
}

pub fn payload_fuzz() -> Result<(), String> {
    let strat = (
        arb_payload(),
        proptest::collection::vec(any::<u8>(), 0..64),
        any::<prop::sample::Index>(),
        any::<u8>(),
    );
    check(strat, |(payload, noise, at, byte)| {
        let _ = unpack_payload(&noise);
        let mut bytes = payload.to_bytes().unwrap();
        let i = at.index(bytes.len());
        bytes[i] ^= byte | 1;
        if let Ok(parsed) = unpack_payload(&bytes) {
            prop_assert_eq!(parsed.to_bytes().unwrap(), bytes.clone());
        }
        let _ = unpack_payload(&bytes[..i]);
        Ok(())
    })
}

fn small_layout(mask: Vec<u8>, params: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec {
            layer_id: 0,
            name: "a".into(),
            param_count: params,
            m: 12,
            z: 2,
            mask,
            aggregation: LayerAggregation::Bitwise,
        },
        LayerSpec {
            layer_id: 1,
            name: "b".into(),
            param_count: 2,
            m: 12,
            z: 2,
            mask: Vec::new(),
            aggregation: LayerAggregation::Mean,
        },
    ]
}

fn client_payload(client: u32, raw_a: &[u32], raw_b: &[u32], mask: &[u8]) -> Payload {
    let w = |r: &[u32]| -> Vec<FixedWord> { r.iter().map(|&x| FixedWord::from_raw(x, 12).unwrap()).collect() };
    Payload {
        round: 4,
        client_id: client,
        layers: vec![
            PayloadLayer::new(0, 12, 2, mask.to_vec(), &w(raw_a)).unwrap(),
            PayloadLayer::new(1, 12, 2, Vec::new(), &w(raw_b)).unwrap(),
        ],
    }
}

pub fn accumulate_commutes() -> Result<(), String> {
    let strat = (1usize..8, proptest::collection::btree_set(0u8..12, 0..4)).prop_flat_map(|(r, mask)| {
        (
            Just(mask),
            proptest::collection::vec(
                (proptest::collection::vec(0u32..4096, 5), proptest::collection::vec(0u32..4096, 2)),
                r,
            ),
            Just(()).prop_perturb(move |_, mut rng| {
                let mut order: Vec<usize> = (0..r).collect();
                for i in (1..r).rev() {
                    order.swap(i, rng.random_range(0..=i));
                }
                order
            }),
            0.51f64..=1.0,
        )
    });
    check(strat, |(mask, clients, order, p)| {
        let mask: Vec<u8> = mask.into_iter().collect();
        let r = clients.len();
        let payloads: Vec<Payload> = clients
            .iter()
            .enumerate()
            .map(|(c, (a, b))| client_payload(c as u32, a, b, &mask))
            .collect();
        let mut forward = RoundState::new(small_layout(mask.clone(), 5), r).unwrap();
        let mut shuffled = forward.clone();
        for pl in &payloads {
            forward.accumulate(pl).unwrap();
        }
        for &i in &order {
            shuffled.accumulate(&payloads[i]).unwrap();
        }
        prop_assert_eq!(&forward, &shuffled);
        for layer in 0..1 {
            prop_assert!(forward.counters(layer).iter().all(|&c| c as usize <= r));
        }
        prop_assert_eq!(forward.recover(p).unwrap(), shuffled.recover(p).unwrap());
        prop_assert!(forward.accumulate(&payloads[0]).is_err());
        Ok(())
    })
}

pub fn unanimity() -> Result<(), String> {
    let strat = (
        1usize..30,
        proptest::collection::btree_set(0u8..12, 0..4),
        proptest::collection::vec(0u32..4096, 5),
    );
    check(strat, |(r, mask, raw)| {
        let mask: Vec<u8> = mask.into_iter().collect();
        let mut state = RoundState::new(small_layout(mask.clone(), 5), r).unwrap();
        for c in 0..r {
            state.accumulate(&client_payload(c as u32, &raw, &[7, 4000], &mask)).unwrap();
        }
        let rec = state.recover(1.0).unwrap();
        prop_assert_eq!(&rec[0].values, &RecoveredValues::Words(raw.clone()));
        Ok(())
    })
}

pub fn sdq_bound() -> Result<(), String> {
    let strat = (
        proptest::collection::vec(-100.0f64..100.0, 1..40),
        1usize..8,
        1e-3f64..1.0,
        any::<u64>(),
    );
    check(strat, |(v, dim, delta, seed)| {
        let spec = LatticeSpec::new(dim, delta).unwrap();
        let q = sdq_quantize(&v, &spec, seed);
        prop_assert_eq!(q.len(), v.len());
        for (a, b) in v.iter().zip(&q) {
            prop_assert!((a - b).abs() <= delta / 2.0 + 1e-12 * (a.abs() + delta), "{a} -> {b}");
        }
        Ok(())
    })
}

fn arb_problem() -> impl Strategy<Value = (Model, Dataset)> {
    (0usize..3, 1usize..5, 2usize..4, 1usize..4, 1usize..6, any::<u64>()).prop_flat_map(
        |(kind, d, classes, hidden, n, seed)| {
            let kind = [ModelKind::Linear, ModelKind::Logistic, ModelKind::Mlp][kind];
            let out = if kind == ModelKind::Linear { 1 } else { classes };
            (
                proptest::collection::vec(-2.0f64..2.0, n * d),
                proptest::collection::vec(0..classes, n),
                proptest::collection::vec(-1.0f64..1.0, n),
            )
                .prop_map(move |(x, cls, y)| {
                    let model = Model::new(kind, d, out, Some(hidden), seed).unwrap();
                    let data = if kind == ModelKind::Linear {
                        Dataset::new(x, y, d, None).unwrap()
                    } else {
                        Dataset::new(x, cls.iter().map(|&c| c as f64).collect(), d, Some(classes)).unwrap()
                    };
                    (model, data)
                })
        },
    )
}

pub fn gradient_fd() -> Result<(), String> {
    const H: f64 = 1e-5;
    check(arb_problem(), |(model, data)| {
        let (grad, loss) = compute_gradient(&model, &data).unwrap();
        prop_assert!((loss - mean_loss(&model, &data).unwrap()).abs() <= 1e-12 * (1.0 + loss.abs()));
        let params = model.parameters();
        let flat: Vec<f64> = params.values().collect();
        let analytic: Vec<f64> = grad.values().collect();
        let eval = |values: &[f64]| {
            let mut it = values.iter();
            let set = GradientSet::new(
                params
                    .layers()
                    .iter()
                    .map(|(n, v)| (n.clone(), v.iter().map(|_| *it.next().unwrap()).collect()))
                    .collect(),
            );
            let mut m = model.clone();
            set_parameters(&mut m, &set).unwrap();
            mean_loss(&m, &data).unwrap()
        };
        for i in 0..flat.len() {
            let mut plus = flat.clone();
            let mut minus = flat.clone();
            plus[i] += H;
            minus[i] -= H;
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * H);
            let a = analytic[i];
            prop_assert!(
                (a - fd).abs() <= 1e-4 * a.abs().max(fd.abs()) + 1e-8,
                "param {i}: analytic {a}, finite difference {fd}"
            );
        }
        Ok(())
    })
}

pub fn partition_sound() -> Result<(), String> {
    let strat = (1usize..200).prop_flat_map(|n| (Just(n), 1..=n, any::<u64>()));
    check(strat, |(n, r, seed)| {
        let data = Dataset::new((0..n).map(|i| i as f64).collect(), (0..n).map(|i| i as f64).collect(), 1, None).unwrap();
        let shards = partition_iid(&data, r, seed).unwrap();
        prop_assert_eq!(shards.len(), r);
        let sizes: Vec<usize> = shards.iter().map(|s| s.n_examples()).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let mut seen: Vec<usize> = shards.iter().flat_map(|s| s.labels().iter().map(|&l| l as usize)).collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
        Ok(())
    })
}

pub fn recovery_monotone() -> Result<(), String> {
    let strat = (1usize..300, 0.5f64..=1.0, 0.5f64..=1.0);
    check(strat, |(r, a, b)| {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (s_lo, s_hi) = (recovery_success_prob(r, lo).unwrap(), recovery_success_prob(r, hi).unwrap());
        prop_assert!((0.0..=1.0).contains(&s_lo) && (0.0..=1.0).contains(&s_hi));
        prop_assert!(s_lo <= s_hi + 1e-12, "R={r}: {s_lo} at {lo} > {s_hi} at {hi}");
        Ok(())
    })
}

pub fn budget_inverse() -> Result<(), String> {
    let strat = (0.5f64..1.0, 0.5f64..1.0, 0.0f64..10.0);
    check(strat, |(a, b, eps)| {
        prop_assume!(a > 0.5 && b > 0.5 && a != b);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(epsilon_of(lo).unwrap() < epsilon_of(hi).unwrap());
        let p = p_of_epsilon(eps).unwrap();
        if p > 0.5 {
            prop_assert!((epsilon_of(p).unwrap() - eps).abs() <= 1e-12);
        }
        Ok(())
    })
}

pub fn graddrop_count() -> Result<(), String> {
    let strat = (
        proptest::collection::vec(proptest::collection::vec(0.01f64..10.0, 1..20), 1..4),
        0.0f64..1.0,
        proptest::collection::vec(any::<bool>(), 80),
    );
    check(strat, |(layers, f, signs)| {
        let mut k = 0;
        let g = GradientSet::new(
            layers
                .into_iter()
                .enumerate()
                .map(|(i, v)| {
                    let v = v
                        .into_iter()
                        .map(|x| {
                            k += 1;
                            if signs[k % signs.len()] { -x } else { x }
                        })
                        .collect();
                    (format!("l{i}"), v)
                })
                .collect(),
        );
        let n = g.total_len();
        let out = graddrop_filter(&g, f).unwrap();
        let zeros = out.values().filter(|&v| v == 0.0).count();
        prop_assert_eq!(zeros, n - ((1.0 - f) * n as f64).ceil() as usize);
        let kept_min = out.values().filter(|v| *v != 0.0).map(f64::abs).fold(f64::INFINITY, f64::min);
        let dropped_max = g
            .values()
            .zip(out.values())
            .filter(|(_, o)| *o == 0.0)
            .map(|(v, _)| v.abs())
            .fold(0.0, f64::max);
        prop_assert!(dropped_max <= kept_min);
        Ok(())
    })
}

pub fn signsgd_signs() -> Result<(), String> {
    let strat = proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 6), 1..10);
    check(strat, |clients| {
        let sets: Vec<GradientSet> = clients.into_iter().map(|v| GradientSet::new(vec![("w".into(), v)])).collect();
        let out = signsgd_aggregate(&sets).unwrap();
        prop_assert!(out.values().all(|v| v == 1.0 || v == -1.0));
        Ok(())
    })
}
