use rand::Rng;

use crate::graph::Var;
use crate::tensor::split_axis;
use crate::{Float, Tensor};

impl<'g, F: Float> Var<'g, F> {
    pub fn add(self, other: Var<'g, F>) -> Var<'g, F> {
        let (a, b) = (self.value(), other.value());
        let out = a.zip_map(&b, |x, y| x + y);
        self.graph.op(out, &[self, other], |g, _| vec![Some(g.clone()), Some(g.clone())])
    }

    pub fn sub(self, other: Var<'g, F>) -> Var<'g, F> {
        let (a, b) = (self.value(), other.value());
        let out = a.zip_map(&b, |x, y| x - y);
        self.graph.op(out, &[self, other], |g, _| vec![Some(g.clone()), Some(g.map(|x| -x))])
    }

    pub fn mul(self, other: Var<'g, F>) -> Var<'g, F> {
        let (a, b) = (self.value(), other.value());
        let out = a.zip_map(&b, |x, y| x * y);
        self.graph.op(out, &[self, other], move |g, need| {
            vec![
                need[0].then(|| g.zip_map(&b, |g, y| g * y)),
                need[1].then(|| g.zip_map(&a, |g, x| g * x)),
            ]
        })
    }

    pub fn scale(self, s: f64) -> Var<'g, F> {
        let s = F::of(s);
        let out = self.value().map(|x| x * s);
        self.graph.op(out, &[self], move |g, _| vec![Some(g.map(|x| x * s))])
    }

    pub fn add_scalar(self, s: f64) -> Var<'g, F> {
        let s = F::of(s);
        let out = self.value().map(|x| x + s);
        self.graph.op(out, &[self], |g, _| vec![Some(g.clone())])
    }

    /// Adds a vector of length `shape[axis]` broadcast along every other axis.
    pub fn add_along(self, bias: Var<'g, F>, axis: usize) -> Var<'g, F> {
        let x = self.value();
        let b = bias.value();
        let (outer, n, inner) = split_axis(x.shape(), axis);
        assert_eq!(b.shape(), &[n], "bias length must match axis {axis}");
        let mut out = (*x).clone();
        let d = out.data_mut();
        for o in 0..outer {
            for (c, &bv) in b.data().iter().enumerate() {
                let base = (o * n + c) * inner;
                for v in &mut d[base..base + inner] {
                    *v += bv;
                }
            }
        }
        self.graph.op(out, &[self, bias], move |g, need| {
            let gb = need[1].then(|| {
                let mut acc = vec![F::zero(); n];
                for o in 0..outer {
                    for (c, a) in acc.iter_mut().enumerate() {
                        let base = (o * n + c) * inner;
                        *a += g.data()[base..base + inner].iter().copied().sum::<F>();
                    }
                }
                Tensor::from_vec(&[n], acc)
            });
            vec![Some(g.clone()), gb]
        })
    }

    /// Multiplies by a vector of length `shape[axis]` broadcast along every other axis.
    pub fn mul_along(self, scale: Var<'g, F>, axis: usize) -> Var<'g, F> {
        let x = self.value();
        let s = scale.value();
        let (outer, n, inner) = split_axis(x.shape(), axis);
        assert_eq!(s.shape(), &[n], "scale length must match axis {axis}");
        let mut out = (*x).clone();
        let d = out.data_mut();
        for o in 0..outer {
            for (c, &sv) in s.data().iter().enumerate() {
                let base = (o * n + c) * inner;
                for v in &mut d[base..base + inner] {
                    *v *= sv;
                }
            }
        }
        self.graph.op(out, &[self, scale], move |g, need| {
            let gx = need[0].then(|| {
                let mut gx = g.clone();
                let d = gx.data_mut();
                for o in 0..outer {
                    for (c, &sv) in s.data().iter().enumerate() {
                        let base = (o * n + c) * inner;
                        for v in &mut d[base..base + inner] {
                            *v *= sv;
                        }
                    }
                }
                gx
            });
            let gs = need[1].then(|| {
                let mut acc = vec![F::zero(); n];
                for o in 0..outer {
                    for (c, a) in acc.iter_mut().enumerate() {
                        let base = (o * n + c) * inner;
                        *a += g.data()[base..base + inner]
                            .iter()
                            .zip(&x.data()[base..base + inner])
                            .map(|(&g, &x)| g * x)
                            .sum::<F>();
                    }
                }
                Tensor::from_vec(&[n], acc)
            });
            vec![gx, gs]
        })
    }

    pub fn relu(self) -> Var<'g, F> {
        self.leaky_relu(0.0)
    }

    pub fn leaky_relu(self, slope: f64) -> Var<'g, F> {
        let slope = F::of(slope);
        let x = self.value();
        let out = x.map(|v| if v > F::zero() { v } else { v * slope });
        self.graph.op(out, &[self], move |g, _| {
            vec![Some(g.zip_map(&x, |g, v| if v > F::zero() { g } else { g * slope }))]
        })
    }

    pub fn sigmoid(self) -> Var<'g, F> {
        let out = self.value().map(sigmoid);
        let y = out.clone();
        self.graph.op(out, &[self], move |g, _| {
            vec![Some(g.zip_map(&y, |g, y| g * y * (F::one() - y)))]
        })
    }

    pub fn tanh(self) -> Var<'g, F> {
        let out = self.value().map(|v| v.tanh());
        let y = out.clone();
        self.graph.op(out, &[self], move |g, _| {
            vec![Some(g.zip_map(&y, |g, y| g * (F::one() - y * y)))]
        })
    }

    /// Inverted dropout: zeroes each element with probability `p` and scales
    /// survivors by `1/(1-p)`. Identity when `p == 0`.
    pub fn dropout<R: Rng + ?Sized>(self, p: f64, rng: &mut R) -> Var<'g, F> {
        if p <= 0.0 {
            return self;
        }
        assert!(p < 1.0, "dropout probability must be below 1");
        let keep = F::of(1.0 / (1.0 - p));
        let x = self.value();
        let mask = Tensor::from_fn(x.shape(), |_| if rng.random::<f64>() < p { F::zero() } else { keep });
        let out = x.zip_map(&mask, |x, m| x * m);
        self.graph.op(out, &[self], move |g, _| vec![Some(g.zip_map(&mask, |g, m| g * m))])
    }

    pub fn sum(self) -> Var<'g, F> {
        let x = self.value();
        let shape = x.shape().to_vec();
        let out = Tensor::scalar(x.sum());
        self.graph.op(out, &[self], move |g, _| vec![Some(Tensor::full(&shape, g.item()))])
    }

    pub fn mean(self) -> Var<'g, F> {
        let n = self.value().numel();
        self.sum().scale(1.0 / n as f64)
    }
}

pub(crate) fn sigmoid<F: Float>(v: F) -> F {
    if v >= F::zero() {
        F::one() / (F::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (F::one() + e)
    }
}
