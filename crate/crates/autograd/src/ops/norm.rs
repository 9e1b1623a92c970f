use crate::graph::Var;
use crate::params::{ParamId, ParamStore};
use crate::{Float, Tensor};

pub const NORM_EPS: f64 = 1e-5;

/// Running statistics consumed and refreshed by [`Var::batch_norm2d`].
pub struct RunningStats<'a, F> {
    pub store: &'a ParamStore<F>,
    pub mean: ParamId,
    pub var: ParamId,
    pub momentum: f64,
}

/// Turns the gradient with respect to `xhat = (x - mu) * inv_std` into the
/// gradient with respect to `x`, in place. Each statistics set is a list of
/// index ranges that shared one mean and variance.
fn normalize_backward<F: Float>(gxhat: &mut [F], xhat: &[F], inv_std: &[F], sets: &[Vec<(usize, usize)>]) {
    for (set, &is) in sets.iter().zip(inv_std) {
        let n = set.iter().map(|&(s, e)| e - s).sum::<usize>();
        let inv_n = F::of(1.0 / n as f64);
        let (mut sg, mut sgx) = (F::zero(), F::zero());
        for &(s, e) in set {
            for i in s..e {
                sg += gxhat[i];
                sgx += gxhat[i] * xhat[i];
            }
        }
        let (mg, mgx) = (sg * inv_n, sgx * inv_n);
        for &(s, e) in set {
            for i in s..e {
                gxhat[i] = is * (gxhat[i] - mg - xhat[i] * mgx);
            }
        }
    }
}

impl<'g, F: Float> Var<'g, F> {
    /// Normalises over the trailing elements of each row, where a row spans
    /// `gamma.numel()` values, then applies the elementwise affine map.
    pub fn layer_norm(self, gamma: Var<'g, F>, beta: Var<'g, F>) -> Var<'g, F> {
        let x = self.value();
        let n = gamma.value().numel();
        assert_eq!(beta.value().numel(), n, "layer_norm gamma/beta size mismatch");
        assert_eq!(x.numel() % n, 0, "layer_norm width {n} does not divide input {:?}", x.shape());
        let rows = x.numel() / n;
        let mut xhat = vec![F::zero(); x.numel()];
        let mut inv_std = Vec::with_capacity(rows);
        for (r, row) in x.data().chunks(n).enumerate() {
            let mean = row.iter().copied().sum::<F>() / F::of(n as f64);
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / F::of(n as f64);
            let is = F::one() / (var + F::of(NORM_EPS)).sqrt();
            inv_std.push(is);
            for (o, &v) in xhat[r * n..(r + 1) * n].iter_mut().zip(row) {
                *o = (v - mean) * is;
            }
        }
        let gm = gamma.value();
        let bt = beta.value();
        let mut out = xhat.clone();
        for row in out.chunks_mut(n) {
            for ((o, &gv), &bv) in row.iter_mut().zip(gm.data()).zip(bt.data()) {
                *o = *o * gv + bv;
            }
        }
        let shape = x.shape().to_vec();
        self.graph.op(Tensor::from_vec(&shape, out), &[self, gamma, beta], move |g, need| {
            let gd = g.data();
            let ggamma = need[1].then(|| {
                let mut acc = vec![F::zero(); n];
                for (gr, xr) in gd.chunks(n).zip(xhat.chunks(n)) {
                    for ((a, &gv), &xv) in acc.iter_mut().zip(gr).zip(xr) {
                        *a += gv * xv;
                    }
                }
                Tensor::from_vec(gm.shape(), acc)
            });
            let gbeta = need[2].then(|| {
                let mut acc = vec![F::zero(); n];
                for gr in gd.chunks(n) {
                    for (a, &gv) in acc.iter_mut().zip(gr) {
                        *a += gv;
                    }
                }
                Tensor::from_vec(bt.shape(), acc)
            });
            let gx = need[0].then(|| {
                let mut gxhat: Vec<F> = gd.to_vec();
                for row in gxhat.chunks_mut(n) {
                    for (v, &gv) in row.iter_mut().zip(gm.data()) {
                        *v *= gv;
                    }
                }
                let sets: Vec<Vec<(usize, usize)>> = (0..rows).map(|r| vec![(r * n, (r + 1) * n)]).collect();
                normalize_backward(&mut gxhat, &xhat, &inv_std, &sets);
                Tensor::from_vec(&shape, gxhat)
            });
            vec![gx, ggamma, gbeta]
        })
    }

    /// Per-channel normalisation of `[b, c, h, w]`. In training mode batch
    /// statistics are used and the running statistics are refreshed through
    /// the graph's update queue; otherwise the running statistics are used.
    pub fn batch_norm2d(self, gamma: Var<'g, F>, beta: Var<'g, F>, running: &RunningStats<'_, F>, train: bool) -> Var<'g, F> {
        let x = self.value();
        let shape = x.shape().to_vec();
        let &[b, c, h, w] = shape.as_slice() else { panic!("batch_norm2d expects a 4-d tensor, got {shape:?}") };
        let hw = h * w;
        let count = b * hw;
        let xd = x.data();
        let chan = |ch: usize| (0..b).map(move |s| ((s * c + ch) * hw, (s * c + ch + 1) * hw));
        let (mean, var): (Vec<F>, Vec<F>) = if train {
            let m: Vec<F> = (0..c)
                .map(|ch| chan(ch).map(|(s, e)| xd[s..e].iter().copied().sum::<F>()).sum::<F>() / F::of(count as f64))
                .collect();
            let v: Vec<F> = (0..c)
                .map(|ch| {
                    chan(ch).map(|(s, e)| xd[s..e].iter().map(|&v| (v - m[ch]) * (v - m[ch])).sum::<F>()).sum::<F>()
                        / F::of(count as f64)
                })
                .collect();
            let mom = F::of(running.momentum);
            let unbias = F::of(count as f64 / (count.max(2) - 1) as f64);
            let rm = running.store.get(running.mean);
            let rv = running.store.get(running.var);
            let new_m = Tensor::from_fn(&[c], |i| (F::one() - mom) * rm.data()[i] + mom * m[i]);
            let new_v = Tensor::from_fn(&[c], |i| (F::one() - mom) * rv.data()[i] + mom * v[i] * unbias);
            self.graph.queue_update(running.mean, new_m);
            self.graph.queue_update(running.var, new_v);
            (m, v)
        } else {
            (
                running.store.get(running.mean).data().to_vec(),
                running.store.get(running.var).data().to_vec(),
            )
        };
        let inv_std: Vec<F> = var.iter().map(|&v| F::one() / (v + F::of(NORM_EPS)).sqrt()).collect();
        let mut xhat = vec![F::zero(); xd.len()];
        for ch in 0..c {
            for (s, e) in chan(ch) {
                for i in s..e {
                    xhat[i] = (xd[i] - mean[ch]) * inv_std[ch];
                }
            }
        }
        let gm = gamma.value();
        let bt = beta.value();
        let mut out = xhat.clone();
        for ch in 0..c {
            for (s, e) in chan(ch) {
                for v in &mut out[s..e] {
                    *v = *v * gm.data()[ch] + bt.data()[ch];
                }
            }
        }
        self.graph.op(Tensor::from_vec(&shape, out), &[self, gamma, beta], move |g, need| {
            let gd = g.data();
            let chan = |ch: usize| (0..b).map(move |s| ((s * c + ch) * hw, (s * c + ch + 1) * hw));
            let ggamma = need[1].then(|| {
                Tensor::from_fn(&[c], |ch| {
                    chan(ch).map(|(s, e)| (s..e).map(|i| gd[i] * xhat[i]).sum::<F>()).sum::<F>()
                })
            });
            let gbeta =
                need[2].then(|| Tensor::from_fn(&[c], |ch| chan(ch).map(|(s, e)| gd[s..e].iter().copied().sum::<F>()).sum::<F>()));
            let gx = need[0].then(|| {
                let mut gxhat = gd.to_vec();
                for ch in 0..c {
                    for (s, e) in chan(ch) {
                        for v in &mut gxhat[s..e] {
                            *v *= gm.data()[ch];
                        }
                    }
                }
                if train {
                    let sets: Vec<Vec<(usize, usize)>> = (0..c).map(|ch| chan(ch).collect()).collect();
                    normalize_backward(&mut gxhat, &xhat, &inv_std, &sets);
                } else {
                    for ch in 0..c {
                        for (s, e) in chan(ch) {
                            for v in &mut gxhat[s..e] {
                                *v *= inv_std[ch];
                            }
                        }
                    }
                }
                Tensor::from_vec(&shape, gxhat)
            });
            vec![gx, ggamma, gbeta]
        })
    }
}
