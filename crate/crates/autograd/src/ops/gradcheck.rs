use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::params::ParamStore;
use crate::{concat, Conv2dSpec, ConvRoute, Graph, PoolSpec, RunningStats, Tensor, Var};

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Compares analytic input gradients with central differences of
/// `sum(build(inputs) * r)` for a fixed random `r`.
fn check<B>(inputs: &[Tensor<f64>], build: B)
where
    B: for<'g> Fn(&'g Graph<f64>, &[Var<'g, f64>]) -> Var<'g, f64>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let probe_shape = {
        let g = Graph::new();
        let vars: Vec<_> = inputs.iter().map(|t| g.constant(t.clone())).collect();
        build(&g, &vars).shape()
    };
    let r = random(&probe_shape, &mut rng);
    let eval = |ins: &[Tensor<f64>]| -> f64 {
        let g = Graph::new();
        let vars: Vec<_> = ins.iter().map(|t| g.constant(t.clone())).collect();
        let out = build(&g, &vars);
        out.value().zip_map(&r, |a, b| a * b).sum()
    };
    let g = Graph::new();
    let vars: Vec<_> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = build(&g, &vars);
    let loss = out.mul(g.constant(r.clone())).sum();
    let grads = g.backward(loss);
    let h = 1e-6;
    for (i, input) in inputs.iter().enumerate() {
        let analytic = grads.wrt(vars[i]).expect("missing gradient").clone();
        for j in 0..input.numel() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += h;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= h;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let a = analytic.data()[j];
            let err = (a - numeric).abs() / (a.abs().max(numeric.abs()).max(1e-3));
            assert!(err < 1e-5, "input {i} element {j}: analytic {a} numeric {numeric}");
        }
    }
}

#[test]
fn elementwise_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = random(&[3, 4], &mut rng);
    let b = random(&[3, 4], &mut rng);
    check(&[a.clone(), b.clone()], |_, v| v[0].mul(v[1]).add(v[0]).sub(v[1].scale(0.3)).add_scalar(2.0));
    check(&[a.clone()], |_, v| v[0].sigmoid());
    check(&[a.clone()], |_, v| v[0].tanh());
    check(&[a.clone()], |_, v| v[0].leaky_relu(0.3));
    check(&[a.clone()], |_, v| v[0].mean());
}

#[test]
fn broadcast_along_axis() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random(&[2, 3, 4], &mut rng);
    let b = random(&[3], &mut rng);
    check(&[x.clone(), b.clone()], |_, v| v[0].add_along(v[1], 1));
    check(&[x, b], |_, v| v[0].mul_along(v[1], 1));
}

#[test]
fn shape_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random(&[2, 3, 4, 5], &mut rng);
    let y = random(&[2, 2, 4, 5], &mut rng);
    check(&[x.clone()], |_, v| v[0].permute(&[0, 2, 1, 3]).reshape(&[8, 15]));
    check(&[x.clone()], |_, v| v[0].narrow(2, 1, 2));
    check(&[x.clone()], |_, v| v[0].pad2d(1, 0, 2, 1));
    check(&[x, y], |_, v| concat(&[v[0], v[1]], 1));
}

#[test]
fn matrix_products() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random(&[2, 3, 4], &mut rng);
    let w = random(&[5, 4], &mut rng);
    let b = random(&[5], &mut rng);
    check(&[x, w, b], |_, v| v[0].linear(v[1], Some(v[2])));
    for (ta, tb) in [(false, false), (true, false), (false, true), (true, true)] {
        let a = random(if ta { &[2, 4, 3] } else { &[2, 3, 4] }, &mut rng);
        let bm = random(if tb { &[2, 5, 4] } else { &[2, 4, 5] }, &mut rng);
        check(&[a, bm], |_, v| v[0].bmm(v[1], ta, tb));
    }
}

#[test]
fn convolution() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random(&[2, 3, 7, 8], &mut rng);
    let w = random(&[4, 3, 3, 3], &mut rng);
    let b = random(&[4], &mut rng);
    check(&[x.clone(), w.clone(), b.clone()], |_, v| v[0].conv2d(v[1], Some(v[2]), Conv2dSpec::same(3, 3)));
    let spec = Conv2dSpec { stride: (1, 3), padding: (1, 0) };
    check(&[x.clone(), w.clone()], |_, v| v[0].conv2d(v[1], None, spec));
    let w1 = random(&[2, 3, 1, 1], &mut rng);
    check(&[x.clone(), w1], |_, v| v[0].conv2d(v[1], None, Conv2dSpec::valid()));
    let wt = random(&[2, 3, 7, 1], &mut rng);
    check(&[x.clone(), wt], |_, v| v[0].conv2d(v[1], None, Conv2dSpec::valid()));
    let wf = random(&[2, 3, 5, 3], &mut rng);
    let spec = Conv2dSpec { stride: (1, 1), padding: (2, 1) };
    check(&[x.clone(), wf.clone()], |_, v| v[0].conv2d_via(v[1], None, spec, ConvRoute::Fft));
    check(&[x, wf], |_, v| v[0].conv2d_via(v[1], None, Conv2dSpec::valid(), ConvRoute::Fft));
}

#[test]
fn pooling_and_resize() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = random(&[2, 2, 9, 5], &mut rng);
    check(&[x.clone()], |_, v| v[0].max_pool2d(PoolSpec::square(2)));
    let spec = PoolSpec { kernel: (5, 1), stride: (1, 1), padding: (2, 0) };
    check(&[x.clone()], |_, v| v[0].max_pool2d(spec));
    check(&[x.clone()], |_, v| v[0].resize_bilinear(18, 10));
    check(&[x], |_, v| v[0].global_avg_pool2d());
}

#[test]
fn normalisation() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = random(&[3, 2, 4], &mut rng);
    let gamma = random(&[8], &mut rng);
    let beta = random(&[8], &mut rng);
    check(&[x, gamma, beta], |_, v| v[0].layer_norm(v[1], v[2]));

    let x = random(&[3, 2, 3, 4], &mut rng);
    let gamma = random(&[2], &mut rng);
    let beta = random(&[2], &mut rng);
    let mut store = ParamStore::new();
    let mean = store.buffer("m", Tensor::zeros(&[2]));
    let var = store.buffer("v", Tensor::ones(&[2]));
    for train in [true, false] {
        let stats = RunningStats { store: &store, mean, var, momentum: 0.1 };
        check(&[x.clone(), gamma.clone(), beta.clone()], |_, v| v[0].batch_norm2d(v[1], v[2], &stats, train));
    }
}

#[test]
fn losses_and_softmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let z = random(&[4, 5], &mut rng).map(|v| v * 3.0);
    let t = Tensor::from_fn(&[4, 5], |i| if i % 3 == 0 { 1.0 } else { 0.0 });
    check(&[z.clone()], |_, v| v[0].softmax());
    check(&[z.clone()], |_, v| v[0].bce_with_logits(&t));
    check(&[z], |_, v| v[0].cross_entropy(&[0, 4, 2, 2]));
}
