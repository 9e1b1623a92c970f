use crate::graph::Var;
use crate::{Float, Tensor};

use super::elementwise::sigmoid;

impl<'g, F: Float> Var<'g, F> {
    /// Softmax over the last axis.
    pub fn softmax(self) -> Var<'g, F> {
        let x = self.value();
        let n = *x.shape().last().expect("softmax on a scalar");
        let mut out = x.data().to_vec();
        for row in out.chunks_mut(n) {
            let m = row.iter().copied().fold(F::neg_infinity(), F::max);
            let mut s = F::zero();
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                s += *v;
            }
            for v in row.iter_mut() {
                *v /= s;
            }
        }
        let y = Tensor::from_vec(x.shape(), out);
        let yc = y.clone();
        self.graph.op(y, &[self], move |g, _| {
            let mut gx = g.data().to_vec();
            for (gr, yr) in gx.chunks_mut(n).zip(yc.data().chunks(n)) {
                let dot: F = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                for (gv, &yv) in gr.iter_mut().zip(yr) {
                    *gv = yv * (*gv - dot);
                }
            }
            vec![Some(Tensor::from_vec(yc.shape(), gx))]
        })
    }

    /// Mean binary cross-entropy between `sigmoid(self)` and `targets` in [0, 1].
    pub fn bce_with_logits(self, targets: &Tensor<F>) -> Var<'g, F> {
        let z = self.value();
        assert_eq!(z.shape(), targets.shape(), "bce target shape mismatch");
        let n = z.numel();
        // max(z, 0) - z t + log(1 + exp(-|z|))
        let loss: F = z
            .data()
            .iter()
            .zip(targets.data())
            .map(|(&z, &t)| z.max(F::zero()) - z * t + (-z.abs()).exp().ln_1p())
            .sum::<F>()
            / F::of(n as f64);
        let targets = targets.clone();
        self.graph.op(Tensor::scalar(loss), &[self], move |g, _| {
            let s = g.item() / F::of(n as f64);
            vec![Some(z.zip_map(&targets, |z, t| (sigmoid(z) - t) * s))]
        })
    }

    /// Mean cross-entropy of `[b, classes]` logits against class indices.
    pub fn cross_entropy(self, classes: &[usize]) -> Var<'g, F> {
        let z = self.value();
        let &[b, k] = z.shape() else { panic!("cross_entropy expects [batch, classes] logits") };
        assert_eq!(classes.len(), b, "cross_entropy label count mismatch");
        let mut probs = z.data().to_vec();
        let mut loss = F::zero();
        for (row, &c) in probs.chunks_mut(k).zip(classes) {
            assert!(c < k, "class index {c} out of range for {k} classes");
            let m = row.iter().copied().fold(F::neg_infinity(), F::max);
            let lse = row.iter().map(|&v| (v - m).exp()).sum::<F>().ln() + m;
            loss += lse - row[c];
            for v in row.iter_mut() {
                *v = (*v - lse).exp();
            }
        }
        loss /= F::of(b as f64);
        let classes = classes.to_vec();
        self.graph.op(Tensor::scalar(loss), &[self], move |g, _| {
            let s = g.item() / F::of(b as f64);
            let mut gz = probs;
            for (row, &c) in gz.chunks_mut(k).zip(&classes) {
                row[c] -= F::one();
                for v in row.iter_mut() {
                    *v *= s;
                }
            }
            vec![Some(Tensor::from_vec(&[b, k], gz))]
        })
    }
}
