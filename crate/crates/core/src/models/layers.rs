use autograd::{concat, fan_in_uniform, uniform, Conv2dSpec, Float, Graph, ParamId, ParamStore, PoolSpec, RunningStats, Tensor, Var};
use rand::Rng;

/// Whether dropout is active and batch norm uses batch statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Shared state for one forward pass.
pub(crate) struct Ctx<'g, 's, F: Float, R: Rng> {
    pub g: &'g Graph<F>,
    pub store: &'s ParamStore<F>,
    pub mode: Mode,
    pub rng: &'s mut R,
}

impl<'g, F: Float, R: Rng> Ctx<'g, '_, F, R> {
    pub fn p(&self, id: ParamId) -> Var<'g, F> {
        self.g.param(self.store, id)
    }

    pub fn dropout(&mut self, x: Var<'g, F>, rate: f64) -> Var<'g, F> {
        if self.mode == Mode::Train && rate > 0.0 {
            x.dropout(rate, self.rng)
        } else {
            x
        }
    }
}

/// Allocates named parameters with fan-in scaled initialisation.
pub(crate) struct Builder<'a, F: Float, R: Rng> {
    pub store: &'a mut ParamStore<F>,
    pub rng: &'a mut R,
}

impl<F: Float, R: Rng> Builder<'_, F, R> {
    pub fn conv(&mut self, name: &str, cin: usize, cout: usize, k: (usize, usize), bias: bool, spec: Conv2dSpec) -> Conv {
        let fan_in = cin * k.0 * k.1;
        let weight = self.store.trainable(format!("{name}.weight"), fan_in_uniform(&[cout, cin, k.0, k.1], fan_in, self.rng));
        let bias = bias.then(|| self.store.trainable(format!("{name}.bias"), fan_in_uniform(&[cout], fan_in, self.rng)));
        Conv { weight, bias, spec }
    }

    pub fn linear(&mut self, name: &str, input: usize, output: usize) -> Linear {
        let weight = self.store.trainable(format!("{name}.weight"), fan_in_uniform(&[output, input], input, self.rng));
        let bias = self.store.trainable(format!("{name}.bias"), fan_in_uniform(&[output], input, self.rng));
        Linear { weight, bias }
    }

    pub fn layer_norm(&mut self, name: &str, shape: &[usize]) -> Norm {
        Norm {
            gamma: self.store.trainable(format!("{name}.gamma"), Tensor::ones(shape)),
            beta: self.store.trainable(format!("{name}.beta"), Tensor::zeros(shape)),
        }
    }

    pub fn batch_norm(&mut self, name: &str, c: usize) -> BatchNorm {
        BatchNorm {
            norm: self.layer_norm(name, &[c]),
            mean: self.store.buffer(format!("{name}.running_mean"), Tensor::zeros(&[c])),
            var: self.store.buffer(format!("{name}.running_var"), Tensor::ones(&[c])),
        }
    }

    /// Two `k x k` convolutions, each followed by batch norm and ReLU.
    pub fn double_conv(&mut self, name: &str, cin: usize, mid: usize, cout: usize, k: usize) -> DoubleConv {
        let spec = Conv2dSpec::same(k, k);
        DoubleConv {
            conv1: self.conv(&format!("{name}.conv1"), cin, mid, (k, k), false, spec),
            bn1: self.batch_norm(&format!("{name}.bn1"), mid),
            conv2: self.conv(&format!("{name}.conv2"), mid, cout, (k, k), false, spec),
            bn2: self.batch_norm(&format!("{name}.bn2"), cout),
        }
    }

    pub fn encoder_layer(&mut self, name: &str, d: usize, hidden: usize) -> EncoderLayer {
        EncoderLayer {
            qkv: self.linear(&format!("{name}.qkv"), d, 3 * d),
            out: self.linear(&format!("{name}.out"), d, d),
            norm1: self.layer_norm(&format!("{name}.norm1"), &[d]),
            ff1: self.linear(&format!("{name}.ff1"), d, hidden),
            ff2: self.linear(&format!("{name}.ff2"), hidden, d),
            norm2: self.layer_norm(&format!("{name}.norm2"), &[d]),
        }
    }

    pub fn lstm_direction(&mut self, name: &str, input: usize, hidden: usize) -> LstmDirection {
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut t = |suffix: &str, shape: &[usize]| {
            let v = uniform(shape, bound, self.rng);
            self.store.trainable(format!("{name}.{suffix}"), v)
        };
        LstmDirection {
            w_input: t("w_input", &[4 * hidden, input]),
            w_hidden: t("w_hidden", &[4 * hidden, hidden]),
            b_input: t("b_input", &[4 * hidden]),
            b_hidden: t("b_hidden", &[4 * hidden]),
            hidden,
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Conv {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub spec: Conv2dSpec,
}

impl Conv {
    pub fn apply<'g, F: Float, R: Rng>(&self, cx: &Ctx<'g, '_, F, R>, x: Var<'g, F>) -> Var<'g, F> {
        x.conv2d(cx.p(self.weight), self.bias.map(|b| cx.p(b)), self.spec)
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn apply<'g, F: Float, R: Rng>(&self, cx: &Ctx<'g, '_, F, R>, x: Var<'g, F>) -> Var<'g, F> {
        x.linear(cx.p(self.weight), Some(cx.p(self.bias)))
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Norm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl Norm {
    pub fn apply<'g, F: Float, R: Rng>(&self, cx: &Ctx<'g, '_, F, R>, x: Var<'g, F>) -> Var<'g, F> {
        x.layer_norm(cx.p(self.gamma), cx.p(self.beta))
    }
}

#[derive(Clone, Debug)]
pub(crate) struct BatchNorm {
    pub norm: Norm,
    pub mean: ParamId,
    pub var: ParamId,
}

impl BatchNorm {
    pub fn apply<'g, F: Float, R: Rng>(&self, cx: &Ctx<'g, '_, F, R>, x: Var<'g, F>) -> Var<'g, F> {
        let running = RunningStats { store: cx.store, mean: self.mean, var: self.var, momentum: 0.1 };
        x.batch_norm2d(cx.p(self.norm.gamma), cx.p(self.norm.beta), &running, cx.mode == Mode::Train)
    }
}

#[derive(Clone, Debug)]
pub(crate) struct DoubleConv {
    pub conv1: Conv,
    pub bn1: BatchNorm,
    pub conv2: Conv,
    pub bn2: BatchNorm,
}

impl DoubleConv {
    pub fn apply<'g, F: Float, R: Rng>(&self, cx: &Ctx<'g, '_, F, R>, x: Var<'g, F>) -> Var<'g, F> {
        let x = self.bn1.apply(cx, self.conv1.apply(cx, x)).relu();
        self.bn2.apply(cx, self.conv2.apply(cx, x)).relu()
    }

    /// 2x2 max pooling, then the double convolution.
    pub fn down<'g, F: Float, R: Rng>(&self, cx: &Ctx<'g, '_, F, R>, x: Var<'g, F>) -> Var<'g, F> {
        self.apply(cx, x.max_pool2d(PoolSpec::square(2)))
    }

    /// Bilinear 2x upsampling, padding to the skip size, concatenation
    /// `[skip, up]` along channels, then the double convolution.
    pub fn up<'g, F: Float, R: Rng>(&self, cx: &Ctx<'g, '_, F, R>, x: Var<'g, F>, skip: Var<'g, F>) -> Var<'g, F> {
        let (h, w) = (x.dim(2), x.dim(3));
        let x = x.resize_bilinear(2 * h, 2 * w);
        let (dy, dx) = (skip.dim(2) - 2 * h, skip.dim(3) - 2 * w);
        let x = if dy + dx > 0 { x.pad2d(dy / 2, dy - dy / 2, dx / 2, dx - dx / 2) } else { x };
        self.apply(cx, concat(&[skip, x], 1))
    }
}

/// Post-norm transformer encoder layer with ReLU feed-forward.
#[derive(Clone, Debug)]
pub(crate) struct EncoderLayer {
    pub qkv: Linear,
    pub out: Linear,
    pub norm1: Norm,
    pub ff1: Linear,
    pub ff2: Linear,
    pub norm2: Norm,
}

impl EncoderLayer {
    /// `x`: `[batch, length, d]`.
    pub fn apply<'g, F: Float, R: Rng>(
        &self,
        cx: &mut Ctx<'g, '_, F, R>,
        x: Var<'g, F>,
        heads: usize,
        dropout: f64,
    ) -> Var<'g, F> {
        let (b, l, d) = (x.dim(0), x.dim(1), x.dim(2));
        let dh = d / heads;
        let qkv = self.qkv.apply(cx, x);
        let split = |i: usize| {
            qkv.narrow(2, i * d, d).reshape(&[b, l, heads, dh]).permute(&[0, 2, 1, 3]).reshape(&[b * heads, l, dh])
        };
        let (q, k, v) = (split(0), split(1), split(2));
        let weights = q.bmm(k, false, true).scale(1.0 / (dh as f64).sqrt()).softmax();
        let weights = cx.dropout(weights, dropout);
        let ctx = weights.bmm(v, false, false).reshape(&[b, heads, l, dh]).permute(&[0, 2, 1, 3]).reshape(&[b, l, d]);
        let attended = self.out.apply(cx, ctx);
        let attended = cx.dropout(attended, dropout);
        let x = self.norm1.apply(cx, x.add(attended));
        let hidden = self.ff1.apply(cx, x).relu();
        let hidden = cx.dropout(hidden, dropout);
        let ff = self.ff2.apply(cx, hidden);
        let ff = cx.dropout(ff, dropout);
        self.norm2.apply(cx, x.add(ff))
    }
}

/// Sinusoidal position table `[length, d]`.
pub fn positional_encoding<F: Float>(length: usize, d: usize) -> Tensor<F> {
    Tensor::from_fn(&[length, d], |i| {
        let (pos, j) = ((i / d) as f64, i % d);
        let rate = 10000f64.powf(-((j - j % 2) as f64) / d as f64);
        F::of(if j % 2 == 0 { (pos * rate).sin() } else { (pos * rate).cos() })
    })
}

#[derive(Clone, Debug)]
pub(crate) struct LstmDirection {
    pub w_input: ParamId,
    pub w_hidden: ParamId,
    pub b_input: ParamId,
    pub b_hidden: ParamId,
    pub hidden: usize,
}

impl LstmDirection {
    /// Runs over `steps` (each `[batch, features]`) in the given order and
    /// returns the hidden states in that same order.
    fn run<'g, F: Float, R: Rng>(&self, cx: &Ctx<'g, '_, F, R>, steps: &[Var<'g, F>], reverse: bool) -> Vec<Var<'g, F>> {
        let b = steps[0].dim(0);
        let hsz = self.hidden;
        let (wi, wh, bi, bh) = (cx.p(self.w_input), cx.p(self.w_hidden), cx.p(self.b_input), cx.p(self.b_hidden));
        let mut h = cx.g.constant(Tensor::zeros(&[b, hsz]));
        let mut c = cx.g.constant(Tensor::zeros(&[b, hsz]));
        let mut out = vec![None; steps.len()];
        let order: Vec<usize> = if reverse { (0..steps.len()).rev().collect() } else { (0..steps.len()).collect() };
        for t in order {
            let gates = steps[t].linear(wi, Some(bi)).add(h.linear(wh, Some(bh)));
            let i = gates.narrow(1, 0, hsz).sigmoid();
            let f = gates.narrow(1, hsz, hsz).sigmoid();
            let g = gates.narrow(1, 2 * hsz, hsz).tanh();
            let o = gates.narrow(1, 3 * hsz, hsz).sigmoid();
            c = f.mul(c).add(i.mul(g));
            h = o.mul(c.tanh());
            out[t] = Some(h);
        }
        out.into_iter().map(|v| v.expect("every step visited")).collect()
    }
}

/// One bidirectional LSTM layer over `[batch, time, features]`, returning
/// `[batch, time, 2 * hidden]`.
pub(crate) fn bilstm<'g, F: Float, R: Rng>(
    cx: &Ctx<'g, '_, F, R>,
    dirs: &[LstmDirection; 2],
    x: Var<'g, F>,
) -> Var<'g, F> {
    let (b, t, feat) = (x.dim(0), x.dim(1), x.dim(2));
    let steps: Vec<_> = (0..t).map(|i| x.narrow(1, i, 1).reshape(&[b, feat])).collect();
    let fwd = dirs[0].run(cx, &steps, false);
    let bwd = dirs[1].run(cx, &steps, true);
    let hsz = dirs[0].hidden;
    let per_step: Vec<_> = fwd
        .into_iter()
        .zip(bwd)
        .map(|(f, b_)| concat(&[f, b_], 1).reshape(&[b, 1, 2 * hsz]))
        .collect();
    concat(&per_step, 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positional_table() {
        let pe: Tensor<f64> = positional_encoding(4, 6);
        assert_eq!(pe.data()[0], 0.0);
        assert_eq!(pe.data()[1], 1.0);
        // Position 1, pair 1: sin(1 / 10000^(2/6)).
        assert!((pe.data()[6 + 2] - (1.0f64 / 10000f64.powf(2.0 / 6.0)).sin()).abs() < 1e-15);
    }
}
