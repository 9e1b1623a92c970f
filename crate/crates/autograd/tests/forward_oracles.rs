use autograd::{Conv2dSpec, ConvRoute, Graph, PoolSpec, Tensor};
use proptest::prelude::*;

fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, spec: Conv2dSpec) -> Tensor<f64> {
    let (b, c, h, wd) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
    let (co, kh, kw) = (w.dim(0), w.dim(2), w.dim(3));
    let (sh, sw) = spec.stride;
    let (ph, pw) = spec.padding;
    let oh = (h + 2 * ph - kh) / sh + 1;
    let ow = (wd + 2 * pw - kw) / sw + 1;
    let mut out = Tensor::zeros(&[b, co, oh, ow]);
    for s in 0..b {
        for o in 0..co {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0;
                    for i in 0..c {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * sh + ky) as isize - ph as isize;
                                let ix = (ox * sw + kx) as isize - pw as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                let xv = x.data()[((s * c + i) * h + iy as usize) * wd + ix as usize];
                                let wv = w.data()[((o * c + i) * kh + ky) * kw + kx];
                                acc += xv * wv;
                            }
                        }
                    }
                    out.data_mut()[((s * co + o) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    out
}

fn pseudo(shape: &[usize], seed: u64) -> Tensor<f64> {
    Tensor::from_fn(shape, |i| (((i as u64 + 1) * 2654435761 + seed * 97) % 1000) as f64 / 500.0 - 1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn conv_matches_direct_sum(
        b in 1usize..3, c in 1usize..4, co in 1usize..4,
        h in 1usize..12, w in 1usize..12, kh in 1usize..6, kw in 1usize..6,
        sh in 1usize..3, sw in 1usize..4, ph in 0usize..3, pw in 0usize..3, seed in 0u64..1000,
    ) {
        prop_assume!(h + 2 * ph >= kh && w + 2 * pw >= kw);
        let x = pseudo(&[b, c, h, w], seed);
        let k = pseudo(&[co, c, kh, kw], seed + 1);
        let spec = Conv2dSpec { stride: (sh, sw), padding: (ph, pw) };
        let g = Graph::new();
        let y = g.constant(x.clone()).conv2d(g.constant(k.clone()), None, spec).value();
        let expect = naive_conv(&x, &k, spec);
        prop_assert_eq!(y.shape(), expect.shape());
        for (a, e) in y.data().iter().zip(expect.data()) {
            prop_assert!((a - e).abs() < 1e-10);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn fft_route_matches_direct_sum(
        b in 1usize..3, c in 1usize..4, co in 1usize..4,
        h in 1usize..14, w in 1usize..14, kh in 1usize..8, kw in 1usize..8,
        ph in 0usize..4, pw in 0usize..4, seed in 0u64..1000,
    ) {
        prop_assume!(h + 2 * ph >= kh && w + 2 * pw >= kw);
        let x = pseudo(&[b, c, h, w], seed);
        let k = pseudo(&[co, c, kh, kw], seed + 1);
        let spec = Conv2dSpec { stride: (1, 1), padding: (ph, pw) };
        let g = Graph::new();
        let y = g.constant(x.clone()).conv2d_via(g.constant(k.clone()), None, spec, ConvRoute::Fft).value();
        let expect = naive_conv(&x, &k, spec);
        prop_assert_eq!(y.shape(), expect.shape());
        for (a, e) in y.data().iter().zip(expect.data()) {
            prop_assert!((a - e).abs() < 1e-9);
        }
    }
}

#[test]
fn fft_and_direct_gradients_agree_at_model_scale() {
    let x = pseudo(&[2, 6, 75, 216], 11).map(|v| v as f32 as f64);
    let k = pseudo(&[4, 6, 15, 15], 12);
    let spec = Conv2dSpec::same(15, 15);
    let run = |route| {
        let g = Graph::<f32>::new();
        let xv = g.leaf(x.cast());
        let kv = g.leaf(k.cast());
        let y = xv.conv2d_via(kv, None, spec, route);
        let loss = y.mul(y).sum();
        let grads = g.backward(loss);
        (y.value(), grads.wrt(xv).unwrap().clone(), grads.wrt(kv).unwrap().clone())
    };
    let (ya, gxa, gka) = run(ConvRoute::Direct);
    let (yb, gxb, gkb) = run(ConvRoute::Fft);
    let close = |a: &Tensor<f32>, b: &Tensor<f32>| {
        let scale = a.data().iter().fold(0f32, |m, v| m.max(v.abs()));
        a.data().iter().zip(b.data()).all(|(x, y)| (x - y).abs() <= 1e-4 * scale)
    };
    assert!(close(&ya, &yb));
    assert!(close(&gxa, &gxb));
    assert!(close(&gka, &gkb));
}

#[test]
fn large_conv_crosses_chunk_boundaries() {
    // Big enough that the scratch matrix is split into several row chunks.
    let x = pseudo(&[1, 6, 40, 60], 3);
    let k = pseudo(&[3, 6, 15, 15], 4);
    let spec = Conv2dSpec::same(15, 15);
    let g = Graph::new();
    let y = g.constant(x.clone()).conv2d(g.constant(k.clone()), None, spec).value();
    let expect = naive_conv(&x, &k, spec);
    for (a, e) in y.data().iter().zip(expect.data()) {
        assert!((a - e).abs() < 1e-9);
    }
}

#[test]
fn max_pool_pads_with_negative_infinity() {
    let x = Tensor::from_vec(&[1, 1, 4, 1], vec![-5.0, -1.0, -7.0, -3.0]);
    let g = Graph::<f64>::new();
    let spec = PoolSpec { kernel: (3, 1), stride: (1, 1), padding: (1, 0) };
    let y = g.constant(x).max_pool2d(spec).value();
    assert_eq!(y.data(), &[-1.0, -1.0, -1.0, -3.0]);
    let x = Tensor::from_vec(&[1, 1, 3, 3], (0..9).map(|v| v as f64).collect());
    let y = g.constant(x).max_pool2d(PoolSpec::square(2)).value();
    assert_eq!(y.shape(), &[1, 1, 1, 1]);
    assert_eq!(y.data(), &[4.0]);
}

#[test]
fn bilinear_resize_aligns_corners() {
    let x = Tensor::from_vec(&[1, 1, 2, 2], vec![0.0, 1.0, 2.0, 3.0]);
    let g = Graph::<f64>::new();
    let y = g.constant(x).resize_bilinear(3, 3).value();
    let expect = [0.0, 0.5, 1.0, 1.0, 1.5, 2.0, 2.0, 2.5, 3.0];
    for (a, e) in y.data().iter().zip(expect) {
        assert!((a - e).abs() < 1e-12);
    }
}

#[test]
fn layer_norm_output_is_standardised() {
    let g = Graph::<f64>::new();
    let x = g.constant(pseudo(&[3, 10], 5));
    let y = x
        .layer_norm(g.constant(Tensor::ones(&[10])), g.constant(Tensor::zeros(&[10])))
        .value();
    for row in y.data().chunks(10) {
        let m: f64 = row.iter().sum::<f64>() / 10.0;
        let v: f64 = row.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / 10.0;
        assert!(m.abs() < 1e-12);
        assert!((v - 1.0).abs() < 1e-3);
    }
}

#[test]
fn softmax_rows_sum_to_one() {
    let g = Graph::<f64>::new();
    let y = g.constant(pseudo(&[4, 7], 8).map(|v| v * 50.0)).softmax().value();
    for row in y.data().chunks(7) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn bce_is_stable_for_large_logits() {
    let g = Graph::<f32>::new();
    let z = g.constant(Tensor::from_vec(&[2], vec![200.0, -200.0]));
    let loss = z.bce_with_logits(&Tensor::from_vec(&[2], vec![1.0, 0.0])).value().item();
    assert!(loss.is_finite() && loss < 1e-6);
    let loss = z.bce_with_logits(&Tensor::from_vec(&[2], vec![0.0, 1.0])).value().item();
    assert!((loss - 200.0).abs() < 1e-3);
}
