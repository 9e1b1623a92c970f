use crate::graph::Var;
use crate::tensor::{inverse_permutation, split_axis};
use crate::{Float, Tensor};

impl<'g, F: Float> Var<'g, F> {
    pub fn reshape(self, shape: &[usize]) -> Var<'g, F> {
        let x = self.value();
        let orig = x.shape().to_vec();
        let out = (*x).clone().reshape(shape);
        self.graph.op(out, &[self], move |g, _| vec![Some(g.clone().reshape(&orig))])
    }

    pub fn permute(self, perm: &[usize]) -> Var<'g, F> {
        let out = self.value().permute(perm);
        let inv = inverse_permutation(perm);
        self.graph.op(out, &[self], move |g, _| vec![Some(g.permute(&inv))])
    }

    pub fn narrow(self, axis: usize, start: usize, len: usize) -> Var<'g, F> {
        let x = self.value();
        let shape = x.shape().to_vec();
        let out = x.narrow(axis, start, len);
        self.graph.op(out, &[self], move |g, _| {
            let (outer, n, inner) = split_axis(&shape, axis);
            let mut gx = Tensor::zeros(&shape);
            let d = gx.data_mut();
            for o in 0..outer {
                let dst = o * n * inner + start * inner;
                let src = o * len * inner;
                d[dst..dst + len * inner].copy_from_slice(&g.data()[src..src + len * inner]);
            }
            vec![Some(gx)]
        })
    }

    /// Zero-pads the last two axes of a 4-d tensor by `(top, bottom, left, right)`.
    pub fn pad2d(self, top: usize, bottom: usize, left: usize, right: usize) -> Var<'g, F> {
        let x = self.value();
        let &[b, c, h, w] = x.shape() else { panic!("pad2d expects a 4-d tensor") };
        let (oh, ow) = (h + top + bottom, w + left + right);
        let mut out = Tensor::zeros(&[b, c, oh, ow]);
        {
            let d = out.data_mut();
            for p in 0..b * c {
                for y in 0..h {
                    let src = (p * h + y) * w;
                    let dst = (p * oh + y + top) * ow + left;
                    d[dst..dst + w].copy_from_slice(&x.data()[src..src + w]);
                }
            }
        }
        self.graph.op(out, &[self], move |g, _| {
            let mut gx = Tensor::zeros(&[b, c, h, w]);
            let d = gx.data_mut();
            for p in 0..b * c {
                for y in 0..h {
                    let dst = (p * h + y) * w;
                    let src = (p * oh + y + top) * ow + left;
                    d[dst..dst + w].copy_from_slice(&g.data()[src..src + w]);
                }
            }
            vec![Some(gx)]
        })
    }
}

/// Concatenates along `axis`; all other extents must agree.
pub fn concat<'g, F: Float>(parts: &[Var<'g, F>], axis: usize) -> Var<'g, F> {
    assert!(!parts.is_empty(), "concat of nothing");
    let graph = parts[0].graph;
    let values: Vec<_> = parts.iter().map(|p| p.value()).collect();
    let mut shape = values[0].shape().to_vec();
    let lens: Vec<usize> = values
        .iter()
        .map(|v| {
            let mut s = v.shape().to_vec();
            let l = s[axis];
            s[axis] = shape[axis];
            assert_eq!(s, shape, "concat extents differ off axis {axis}");
            l
        })
        .collect();
    shape[axis] = lens.iter().sum();
    let (outer, total, inner) = split_axis(&shape, axis);
    let mut data = Vec::with_capacity(outer * total * inner);
    for o in 0..outer {
        for (v, &l) in values.iter().zip(&lens) {
            data.extend_from_slice(&v.data()[o * l * inner..(o + 1) * l * inner]);
        }
    }
    let out = Tensor::from_vec(&shape, data);
    graph.op(out, parts, move |g, need| {
        let mut start = 0;
        lens.iter()
            .zip(need)
            .map(|(&l, &nd)| {
                let r = nd.then(|| g.narrow(axis, start, l));
                start += l;
                r
            })
            .collect()
    })
}
