use std::collections::BTreeMap;
use std::path::PathBuf;

use autograd::{Graph, Tensor};
use mpe::models::{
    build_model, count_params, load_checkpoint, presets, save_checkpoint, Family, Mode, Model, ModelConfig, BOTTLENECK,
};
use mpe::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Parameter count written out layer by layer, independent of the builder.
fn analytic_count(c: &ModelConfig) -> usize {
    let conv = |cin: usize, cout: usize, kh: usize, kw: usize| cin * cout * kh * kw + cout;
    let dc = |cin: usize, mid: usize, cout: usize, k: usize| cin * mid * k * k + 2 * mid + mid * cout * k * k + 2 * cout;
    let [n0, n1, n2, n3] = c.channels;
    let mut total = 2 * 6 * 216;
    total += conv(n0, n1, 3, 3) + conv(n1, n2, 75, 1) + conv(n2, n3, 1, 1) + conv(n3, 1, 1, 1);
    match c.family {
        Family::Cnn => total += conv(6, n0, 15, 15),
        Family::Dcnn | Family::Drcnn => total += conv(6, n0, 15, 15) + 4 * conv(n0, n0, 15, 15),
        _ => {
            let g = c.gamma.unwrap();
            total += dc(6, g, g, 15) + dc(g, 2 * g, 2 * g, 15) + dc(2 * g, 4 * g, 4 * g, 9) + dc(4 * g, 8 * g, 8 * g, 5);
            total += dc(8 * g, 8 * g, 8 * g, 3);
            total += dc(16 * g, 8 * g, 4 * g, 3) + dc(8 * g, 4 * g, 2 * g, 5) + dc(4 * g, 2 * g, g, 9) + dc(2 * g, g, n0, 15);
            let d = 8 * g;
            let lambda = c.lambda.unwrap_or(0);
            let encoder = 4 * d * d + 4 * d + 2 * d + 2 * d * lambda + lambda + d + 2 * d;
            match c.family {
                Family::SaUnet => total += 2 * encoder,
                Family::SaUsnet => total += 4 * encoder,
                Family::BlUnet => {
                    let features = d * 13;
                    let mut input = features;
                    for _ in 0..c.blstm_layers {
                        total += 2 * (4 * lambda * input + 4 * lambda * lambda + 8 * lambda);
                        input = 2 * lambda;
                    }
                    if 2 * lambda != features {
                        total += 2 * lambda * features + features;
                    }
                }
                Family::PUnet => total += conv(d, 64, 3, 3) + conv(64, 24, 1, 1),
                _ => {}
            }
        }
    }
    total
}

fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/param_counts.tsv")
}

#[test]
fn parameter_counts_match_oracle_golden_and_reference() {
    let mut realized = BTreeMap::new();
    let mut lines = vec!["preset\tparams".to_string()];
    for p in presets() {
        let n = count_params(&build_model(&p.config, 0).unwrap());
        assert_eq!(n, analytic_count(&p.config), "{}", p.name());
        let ratio = n as f64 / p.reference_params as f64;
        assert!((0.75..=1.25).contains(&ratio), "{}: {n} vs {}", p.name(), p.reference_params);
        lines.push(format!("{}\t{n}", p.name()));
        realized.insert(p.name(), n);
    }
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(golden_path(), lines.join("\n") + "\n").unwrap();
    }
    let golden = std::fs::read_to_string(golden_path()).unwrap();
    let golden: BTreeMap<String, usize> = golden
        .lines()
        .skip(1)
        .map(|l| {
            let (k, v) = l.split_once('\t').unwrap();
            (k.to_string(), v.parse().unwrap())
        })
        .collect();
    assert_eq!(golden, realized);
}

fn tiny(family: Family) -> ModelConfig {
    let (gamma, lambda) = match family {
        Family::Cnn | Family::Dcnn | Family::Drcnn => (None, None),
        Family::Unet | Family::PUnet => (Some(1), None),
        _ => (Some(1), Some(6)),
    };
    ModelConfig::new(family, [2, 3, 2, 2], gamma, lambda)
}

fn random_batch(b: usize, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(&[b, 6, 75, 216], |_| rng.random_range(0.0..2.0))
}

#[test]
fn every_family_honours_the_output_contract() {
    for family in Family::ALL {
        let model = Model::<f64>::build(&tiny(family), 1).unwrap();
        let out = model.predict(&random_batch(3, 2)).unwrap();
        assert_eq!(out.batch, 3);
        assert_eq!(out.pitch_activity.len(), 3 * 72, "{family}");
        assert!(out.pitch_activity.iter().all(|&v| v > 0.0 && v < 1.0), "{family}");
        assert_eq!(out.polyphony_logits.is_some(), family == Family::PUnet, "{family}");
        if let Some(logits) = &out.polyphony_logits {
            assert_eq!(logits.len(), 3 * 24);
            for row in logits.chunks(24) {
                let m = row.iter().cloned().fold(f32::MIN, f32::max);
                let s: f64 = row.iter().map(|&v| ((v - m) as f64).exp()).sum();
                let probs: f64 = row.iter().map(|&v| ((v - m) as f64).exp() / s).sum();
                assert!((probs - 1.0).abs() < 1e-9);
            }
        }
        let zeros = model.predict(&Tensor::zeros(&[1, 6, 75, 216])).unwrap();
        assert!(zeros.pitch_activity.iter().all(|&v| v > 0.0 && v < 1.0 && v.is_finite()));
    }
}

#[test]
fn batch_of_25() {
    let model = build_model(&tiny(Family::Cnn), 0).unwrap();
    let out = model.predict(&Tensor::zeros(&[25, 6, 75, 216])).unwrap();
    assert_eq!(out.pitch_activity.len(), 25 * 72);
}

#[test]
fn shape_errors() {
    let model = Model::<f64>::build(&tiny(Family::Unet), 0).unwrap();
    for shape in [[1, 6, 74, 216], [1, 5, 75, 216], [0, 6, 75, 216]] {
        assert!(matches!(model.predict(&Tensor::zeros(&shape)), Err(Error::Shape { .. })));
    }
    let mut nan = Tensor::zeros(&[1, 6, 75, 216]);
    nan.data_mut()[5] = f64::NAN;
    assert!(model.predict(&nan).is_err());
}

#[test]
fn invalid_config_fails_before_allocation() {
    let bad = ModelConfig::new(Family::SaUnet, [64, 30, 20, 10], Some(8), None);
    assert!(matches!(build_model(&bad, 0), Err(Error::Config(_))));
}

#[test]
fn gradients_are_finite_at_the_smallest_sizes() {
    let smallest: BTreeMap<Family, ModelConfig> =
        presets().into_iter().rev().map(|p| (p.family, p.config)).collect();
    for (family, config) in smallest {
        let model = build_model(&config, 3).unwrap();
        let g = Graph::new();
        let x = g.constant(random_batch(2, 4).cast());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let out = model.forward_graph(&g, x, Mode::Train, &mut rng).unwrap();
        let targets = Tensor::from_fn(&[2, 72], |i| (i % 5 == 0) as u8 as f32);
        let mut loss = out.pitch_logits.bce_with_logits(&targets);
        if let Some(p) = out.polyphony_logits {
            loss = loss.add(p.cross_entropy(&[3, 0]).scale(0.04));
        }
        let grads = g.backward(loss);
        let store = model.store();
        for id in store.ids().filter(|&id| store.is_trainable(id)) {
            let grad = grads.param(id).unwrap_or_else(|| panic!("{family}: no gradient for {}", store.name(id)));
            assert!(grad.is_finite(), "{family}: non-finite gradient for {}", store.name(id));
        }
    }
}

fn attention_outputs(positional: bool, perm: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let model = Model::<f64>::build(&ModelConfig::new(Family::SaUnet, [2, 2, 2, 2], Some(1), Some(16)), 7).unwrap();
    let (l, d) = (BOTTLENECK.0 * BOTTLENECK.1, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let tokens = Tensor::from_fn(&[1, l, d], |_| rng.random_range(-1.0..1.0));
    let permuted = Tensor::from_fn(&[1, l, d], |i| tokens.data()[perm[i / d] * d + i % d]);
    let run = |t: Tensor<f64>| {
        let g = Graph::new();
        let x = g.constant(t);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        model.bottleneck_sequence(&g, x, positional, Mode::Eval, &mut rng).unwrap().value().data().to_vec()
    };
    let plain = run(tokens);
    let shuffled = run(permuted);
    // Undo the permutation on the output rows.
    let mut restored = vec![0.0; plain.len()];
    for (i, &src) in perm.iter().enumerate() {
        restored[src * d..(src + 1) * d].copy_from_slice(&shuffled[i * d..(i + 1) * d]);
    }
    (plain, restored)
}

#[test]
fn attention_is_permutation_equivariant_without_positions() {
    let l = BOTTLENECK.0 * BOTTLENECK.1;
    assert_eq!(l, 52);
    let perm: Vec<usize> = (0..l).map(|i| (i * 7 + 3) % l).collect();
    let (plain, restored) = attention_outputs(false, &perm);
    let worst = plain.iter().zip(&restored).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-12, "{worst}");
    let (plain, restored) = attention_outputs(true, &perm);
    let worst = plain.iter().zip(&restored).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst > 1e-3, "positional encodings should break equivariance");
}

#[test]
fn sausnet_adds_one_identically_shaped_pair() {
    let sa = Model::<f32>::build(&ModelConfig::new(Family::SaUnet, [4, 4, 4, 4], Some(2), Some(32)), 0).unwrap();
    let saus = Model::<f32>::build(&ModelConfig::new(Family::SaUsnet, [4, 4, 4, 4], Some(2), Some(32)), 0).unwrap();
    let shapes = |m: &Model<f32>, prefix: &str| -> Vec<Vec<usize>> {
        m.store().iter().filter(|(n, ..)| n.starts_with(prefix)).map(|(_, _, t)| t.shape().to_vec()).collect()
    };
    assert_eq!(shapes(&saus, "unet.skip_attention"), shapes(&saus, "unet.attention"));
    let extra: usize = saus.store().iter().filter(|(n, ..)| n.starts_with("unet.skip_attention")).map(|(.., t)| t.numel()).sum();
    assert_eq!(count_params(&saus) - count_params(&sa), extra);
}

#[test]
fn checkpoints_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    for family in [Family::SaUsnet, Family::BlUnet, Family::PUnet, Family::Drcnn] {
        let model = build_model(&tiny(family), 11).unwrap();
        let path = dir.path().join(format!("{family}.ckpt"));
        save_checkpoint(&model, &path).unwrap();
        let back: Model<f32> = load_checkpoint(&path).unwrap();
        assert_eq!(back.config(), model.config());
        let x = random_batch(1, 12).cast();
        assert_eq!(back.predict(&x).unwrap(), model.predict(&x).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn counts_grow_with_every_width(
        family_idx in 0usize..8, ch in prop::array::uniform4(1usize..6), gamma in 1usize..3, lambda in 1usize..40,
        which in 0usize..6,
    ) {
        let family = Family::ALL[family_idx];
        let mut base = tiny(family);
        base.channels = ch;
        if base.gamma.is_some() { base.gamma = Some(gamma); }
        if base.lambda.is_some() { base.lambda = Some(lambda); }
        let mut bigger = base.clone();
        match which {
            0..=3 => bigger.channels[which] += 1,
            4 => if let Some(g) = bigger.gamma.as_mut() { *g += 1 },
            _ => if let Some(l) = bigger.lambda.as_mut() { *l += 1 },
        }
        let a = count_params(&Model::<f32>::build(&base, 0).unwrap());
        let b = count_params(&Model::<f32>::build(&bigger, 0).unwrap());
        prop_assert_eq!(a, analytic_count(&base));
        prop_assert!(b >= a);
    }
}
