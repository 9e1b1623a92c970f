use autograd::Graph;
use mpe::datasets::{Patch, N_PITCHES, PATCH_LEN};
use mpe::models::{Family, Mode, Model, ModelConfig};
use mpe::training::{
    collate, effective_seed, graph_loss, loss_mpe, loss_total, run_schedule, train, Learner, PatchDataset, TrainConfig, TrainHistory, MAX_SEED,
};
use mpe::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bce_oracle(p: &[f32], t: &[u8]) -> f64 {
    let mut s = 0.0;
    for (&p, &t) in p.iter().zip(t) {
        let p = (p as f64).max(1e-12).min(1.0 - 1e-12);
        let t = t as f64;
        s += -(t * p.ln() + (1.0 - t) * (1.0 - p).ln());
    }
    s / p.len() as f64
}

fn random_patches(n: usize, seed: u64) -> Vec<Patch> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let input = (0..PATCH_LEN).map(|_| rng.random_range(0.0..1.0f32)).collect();
            let mut t = [0u8; N_PITCHES];
            for _ in 0..rng.random_range(0..4) {
                t[rng.random_range(0..N_PITCHES)] = 1;
            }
            Patch::new(input, t).unwrap()
        })
        .collect()
}

fn quick_config() -> TrainConfig {
    TrainConfig {
        batch_size: 2,
        batches_per_epoch: 2,
        max_epochs: 2,
        initial_lr: Some(1e-3),
        ..TrainConfig::default()
    }
}

#[test]
fn bce_matches_scalar_oracle() {
    assert!((loss_mpe(&[0.5, 0.5], &[1, 0]).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let n = rng.random_range(1..300);
        let p: Vec<f32> = (0..n).map(|_| rng.random_range(0.0..=1.0)).collect();
        let t: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        assert!((loss_mpe(&p, &t).unwrap() - bce_oracle(&p, &t)).abs() < 1e-9);
    }
    // Exact saturation stays finite.
    assert!(loss_mpe(&[0.0, 1.0], &[1, 0]).unwrap().is_finite());
    assert!(loss_mpe(&[0.5], &[1, 0]).is_err());
}

#[test]
fn total_loss_is_linear_in_the_polyphony_weight() {
    let model = Model::<f32>::build(&ModelConfig::new(Family::PUnet, [2, 3, 2, 2], Some(1), None), 1).unwrap();
    let patches = random_patches(3, 5);
    let batch = collate::<f32>(&patches);
    let out = model.predict(&batch.inputs).unwrap();
    let targets: Vec<u8> = patches.iter().flat_map(|p| p.pitch_target).collect();
    let classes: Vec<u8> = patches.iter().map(|p| p.polyphony_target).collect();
    let l0 = loss_total(&out, &targets, Some(&classes), 0.0).unwrap();
    let l1 = loss_total(&out, &targets, Some(&classes), 1.0).unwrap();
    let l2 = loss_total(&out, &targets, Some(&classes), 0.04).unwrap();
    assert!((l0 - loss_mpe(&out.pitch_activity, &targets).unwrap()).abs() < 1e-12);
    assert!((l2 - (l0 + 0.04 * (l1 - l0))).abs() < 1e-9);
    assert!(l1 > l0);

    // Graph loss and value-level loss agree in evaluation mode.
    let g = Graph::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let f = model.forward_graph(&g, g.constant(batch.inputs.clone()), Mode::Eval, &mut rng).unwrap();
    let graph = graph_loss(f.pitch_logits, f.polyphony_logits, &batch, 0.04).value().item() as f64;
    assert!((graph - l2).abs() < 1e-5, "{graph} vs {l2}");

    let cnn = Model::<f32>::build(&ModelConfig::new(Family::Cnn, [2, 3, 2, 2], None, None), 1).unwrap();
    let out = cnn.predict(&batch.inputs).unwrap();
    assert!(loss_total(&out, &targets, None, 0.04).is_ok());
    assert!(loss_total(&out, &targets, Some(&classes), 0.04).is_err());
}

/// Replays a fixed validation-loss sequence; parameters are the epoch index.
struct Scripted {
    losses: Vec<f64>,
    epoch: usize,
    params: usize,
    lrs: Vec<f64>,
}

impl Learner for Scripted {
    type Snapshot = usize;
    fn train_epoch(&mut self, epoch: usize, lr: f64) -> mpe::Result<f64> {
        self.epoch = epoch;
        self.params = epoch;
        self.lrs.push(lr);
        Ok(0.0)
    }
    fn validation_loss(&mut self) -> mpe::Result<f64> {
        Ok(self.losses[self.epoch.min(self.losses.len() - 1)])
    }
    fn snapshot(&self) -> usize {
        self.params
    }
    fn restore(&mut self, s: usize) -> mpe::Result<()> {
        self.params = s;
        Ok(())
    }
}

fn scripted(losses: Vec<f64>, max_epochs: usize) -> (Scripted, TrainHistory) {
    let mut s = Scripted { losses, epoch: 0, params: 0, lrs: Vec::new() };
    let cfg = TrainConfig { max_epochs, ..TrainConfig::default() };
    let h = run_schedule(&mut s, &cfg, 1.0).unwrap();
    (s, h)
}

#[test]
fn schedule_halves_after_plateau_and_restores_best() {
    let (s, h) = scripted(vec![1.0, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9], 8);
    assert_eq!(s.lrs, vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.5]);
    assert_eq!(h.best_epoch, 1);
    assert_eq!(s.params, 1);
    assert!(!h.stopped_early);
}

#[test]
fn schedule_stops_after_twelve_flat_epochs() {
    let mut losses = vec![2.0, 1.0, 0.5];
    losses.extend(std::iter::repeat_n(0.6, 20));
    let (s, h) = scripted(losses, 100);
    assert!(h.stopped_early);
    assert_eq!(h.epochs.len(), 3 + 12);
    assert_eq!(h.best_epoch, 2);
    assert_eq!(s.params, 2);
    assert_eq!(h.epochs.last().unwrap().learning_rate, 0.25);
}

#[test]
fn non_finite_validation_loss_aborts() {
    let mut s = Scripted { losses: vec![1.0, f64::NAN], epoch: 0, params: 0, lrs: Vec::new() };
    let err = run_schedule(&mut s, &TrainConfig::default(), 1.0).unwrap_err();
    assert!(matches!(err, Error::NonFiniteLoss { epoch: 1, .. }));
}

#[test]
fn training_is_reproducible_in_deterministic_mode() {
    let data = PatchDataset::from_patches(random_patches(6, 1));
    let val = PatchDataset::from_patches(random_patches(3, 2));
    let cfg = ModelConfig::new(Family::Cnn, [2, 3, 2, 2], None, None);
    let a = train(&cfg, &data, &val, &quick_config()).unwrap();
    let b = train(&cfg, &data, &val, &quick_config()).unwrap();
    let strip = |h: &TrainHistory| h.epochs.iter().map(|e| (e.train_loss, e.validation_loss)).collect::<Vec<_>>();
    assert_eq!(strip(&a.history), strip(&b.history));
    assert_eq!(a.history.effective_seed, 0);
    for id in a.model.store().ids() {
        assert_eq!(a.model.store().get(id).data(), b.model.store().get(id).data());
    }

    let loose = TrainConfig { deterministic: false, ..quick_config() };
    let c = train(&cfg, &data, &val, &loose).unwrap();
    let d = train(&cfg, &data, &val, &loose).unwrap();
    assert_ne!(c.history.effective_seed, d.history.effective_seed);
    assert_ne!(strip(&c.history), strip(&d.history));
}

#[test]
fn history_roundtrips_through_json() {
    let (_, h) = scripted(vec![1.0, 0.5, 0.7], 3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("history.json");
    h.save(&path).unwrap();
    assert_eq!(TrainHistory::load(&path).unwrap(), h);
}

#[test]
fn non_finite_input_aborts_training() {
    let mut bad = random_patches(4, 9);
    for p in &mut bad {
        p.input[0] = f32::INFINITY;
    }
    let data = PatchDataset::from_patches(bad);
    let val = PatchDataset::from_patches(random_patches(2, 2));
    let cfg = ModelConfig::new(Family::Cnn, [2, 3, 2, 2], None, None);
    let err = train(&cfg, &data, &val, &quick_config()).err().unwrap();
    assert!(matches!(err, Error::NonFiniteLoss { epoch: 0, batch: 0, .. }), "{err:?}");
}

#[test]
fn invalid_configs_are_rejected() {
    for cfg in [
        TrainConfig { batch_size: 0, ..TrainConfig::default() },
        TrainConfig { lr_factor: 1.0, ..TrainConfig::default() },
        TrainConfig { initial_lr: Some(-1.0), ..TrainConfig::default() },
        TrainConfig { seed: u64::MAX, ..TrainConfig::default() },
    ] {
        assert!(cfg.validate().is_err());
    }
}

#[test]
fn non_deterministic_seeds_fit_signed_range() {
    let cfg = TrainConfig { seed: u64::MAX, deterministic: false, ..TrainConfig::default() };
    for _ in 0..64 {
        assert!(effective_seed(&cfg) <= MAX_SEED);
    }
}

proptest! {
    #[test]
    fn bce_is_non_negative_and_bounded(p in prop::collection::vec(0.0f32..=1.0, 1..64), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t: Vec<u8> = p.iter().map(|_| rng.random_range(0..2)).collect();
        let l = loss_mpe(&p, &t).unwrap();
        prop_assert!(l >= 0.0 && l <= -(1e-12f64).ln() + 1e-9);
    }
}
