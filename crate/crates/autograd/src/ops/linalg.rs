use crate::float::{gemm, Mat};
use crate::graph::Var;
use crate::{Float, Tensor};

fn view<F: Float>(d: &[F], rows: usize, cols: usize, trans: bool) -> Mat<'_, F> {
    let m = Mat::new(d, rows, cols);
    if trans {
        m.t()
    } else {
        m
    }
}

impl<'g, F: Float> Var<'g, F> {
    /// Affine map over the last axis: `x @ weight^T + bias`, with `weight`
    /// shaped `[out, in]`.
    pub fn linear(self, weight: Var<'g, F>, bias: Option<Var<'g, F>>) -> Var<'g, F> {
        let x = self.value();
        let w = weight.value();
        let shape = x.shape().to_vec();
        let k = *shape.last().expect("linear on a scalar");
        let &[n, k2] = w.shape() else { panic!("linear weight must be 2-d") };
        assert_eq!(k, k2, "linear input width {k} does not match weight {k2}");
        let m = x.numel() / k;
        let mut out_shape = shape.clone();
        *out_shape.last_mut().unwrap() = n;
        let mut out = vec![F::zero(); m * n];
        gemm(F::one(), Mat::new(x.data(), m, k), Mat::new(w.data(), n, k).t(), F::zero(), &mut out, n);
        let y = self.graph.op(Tensor::from_vec(&out_shape, out), &[self, weight], move |g, need| {
            let gx = need[0].then(|| {
                let mut gx = vec![F::zero(); m * k];
                gemm(F::one(), Mat::new(g.data(), m, n), Mat::new(w.data(), n, k), F::zero(), &mut gx, k);
                Tensor::from_vec(&shape, gx)
            });
            let gw = need[1].then(|| {
                let mut gw = vec![F::zero(); n * k];
                gemm(F::one(), Mat::new(g.data(), m, n).t(), Mat::new(x.data(), m, k), F::zero(), &mut gw, k);
                Tensor::from_vec(&[n, k], gw)
            });
            vec![gx, gw]
        });
        match bias {
            Some(b) => {
                let last = out_shape.len() - 1;
                y.add_along(b, last)
            }
            None => y,
        }
    }

    /// Batched product of `[b, m, k]` by `[b, k, n]`, either operand optionally
    /// read transposed (`[b, k, m]` / `[b, n, k]` storage).
    pub fn bmm(self, other: Var<'g, F>, trans_a: bool, trans_b: bool) -> Var<'g, F> {
        let a = self.value();
        let b = other.value();
        let &[ba, a0, a1] = a.shape() else { panic!("bmm lhs must be 3-d") };
        let &[bb, b0, b1] = b.shape() else { panic!("bmm rhs must be 3-d") };
        assert_eq!(ba, bb, "bmm batch mismatch");
        let (m, k) = if trans_a { (a1, a0) } else { (a0, a1) };
        let (k2, n) = if trans_b { (b1, b0) } else { (b0, b1) };
        assert_eq!(k, k2, "bmm inner mismatch");
        let mut out = vec![F::zero(); ba * m * n];
        for i in 0..ba {
            let ad = &a.data()[i * a0 * a1..(i + 1) * a0 * a1];
            let bd = &b.data()[i * b0 * b1..(i + 1) * b0 * b1];
            gemm(F::one(), view(ad, a0, a1, trans_a), view(bd, b0, b1, trans_b), F::zero(), &mut out[i * m * n..], n);
        }
        self.graph.op(Tensor::from_vec(&[ba, m, n], out), &[self, other], move |g, need| {
            // C = A B  =>  dA = dC B^T, dB = A^T dC (in logical orientation).
            let ga = need[0].then(|| {
                let mut ga = vec![F::zero(); ba * a0 * a1];
                for i in 0..ba {
                    let gd = &g.data()[i * m * n..(i + 1) * m * n];
                    let bd = &b.data()[i * b0 * b1..(i + 1) * b0 * b1];
                    let dst = &mut ga[i * a0 * a1..(i + 1) * a0 * a1];
                    if trans_a {
                        // stored A^T (k x m) gets B dC^T
                        gemm(F::one(), view(bd, b0, b1, trans_b), Mat::new(gd, m, n).t(), F::zero(), dst, m);
                    } else {
                        gemm(F::one(), Mat::new(gd, m, n), view(bd, b0, b1, !trans_b), F::zero(), dst, k);
                    }
                }
                Tensor::from_vec(&[ba, a0, a1], ga)
            });
            let gb = need[1].then(|| {
                let mut gb = vec![F::zero(); ba * b0 * b1];
                for i in 0..ba {
                    let gd = &g.data()[i * m * n..(i + 1) * m * n];
                    let ad = &a.data()[i * a0 * a1..(i + 1) * a0 * a1];
                    let dst = &mut gb[i * b0 * b1..(i + 1) * b0 * b1];
                    if trans_b {
                        // stored B^T (n x k) gets dC^T A
                        gemm(F::one(), Mat::new(gd, m, n).t(), view(ad, a0, a1, trans_a), F::zero(), dst, k);
                    } else {
                        gemm(F::one(), view(ad, a0, a1, !trans_a), Mat::new(gd, m, n), F::zero(), dst, n);
                    }
                }
                Tensor::from_vec(&[ba, b0, b1], gb)
            });
            vec![ga, gb]
        })
    }
}
