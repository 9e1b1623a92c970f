use crate::graph::Var;
use crate::{Float, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PoolSpec {
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
}

impl PoolSpec {
    /// Non-overlapping `k x k` pooling.
    pub fn square(k: usize) -> Self {
        Self { kernel: (k, k), stride: (k, k), padding: (0, 0) }
    }
}

fn dims4(shape: &[usize], what: &str) -> (usize, usize, usize, usize) {
    let &[b, c, h, w] = shape else { panic!("{what} expects a 4-d tensor, got {shape:?}") };
    (b, c, h, w)
}

#[derive(Clone, Copy)]
struct PoolGeom {
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    sh: usize,
    sw: usize,
    ph: usize,
    pw: usize,
    oh: usize,
    ow: usize,
}

impl PoolGeom {
    /// Calls `f(oy, iy, lo, ix0, n)` for every output row `oy`, every input
    /// row `iy` in its window (ascending) and every tap column, where outputs
    /// `lo..lo+n` read inputs `ix0, ix0+sw, ...` of that row. Taps are visited
    /// in row-major window order, so the first hit is the first maximum.
    fn visit(&self, mut f: impl FnMut(usize, usize, usize, usize, usize)) {
        for oy in 0..self.oh {
            let y0 = (oy * self.sh).saturating_sub(self.ph);
            let y1 = (oy * self.sh + self.kh).saturating_sub(self.ph).min(self.h);
            for iy in y0..y1 {
                for kx in 0..self.kw {
                    let lo = if kx >= self.pw { 0 } else { (self.pw - kx).div_ceil(self.sw) };
                    let hi = if self.w + self.pw > kx { ((self.w + self.pw - kx - 1) / self.sw + 1).min(self.ow) } else { 0 };
                    if hi > lo {
                        f(oy, iy, lo, lo * self.sw + kx - self.pw, hi - lo);
                    }
                }
            }
        }
    }
}

/// Source coordinate and weights for align-corners linear interpolation.
fn lerp_table(n_in: usize, n_out: usize) -> Vec<(usize, usize, f64)> {
    (0..n_out)
        .map(|o| {
            let pos = if n_out > 1 { o as f64 * (n_in - 1) as f64 / (n_out - 1) as f64 } else { 0.0 };
            let i0 = (pos.floor() as usize).min(n_in - 1);
            let i1 = (i0 + 1).min(n_in - 1);
            (i0, i1, pos - i0 as f64)
        })
        .collect()
}

impl<'g, F: Float> Var<'g, F> {
    /// Max pooling over the last two axes; padding behaves as negative infinity.
    /// Gradients flow to the first maximal element of each window.
    pub fn max_pool2d(self, spec: PoolSpec) -> Var<'g, F> {
        let x = self.value();
        let (b, c, h, w) = dims4(x.shape(), "max_pool2d");
        let (kh, kw) = spec.kernel;
        let (sh, sw) = spec.stride;
        let (ph, pw) = spec.padding;
        let geo = PoolGeom { h, w, kh, kw, sh, sw, ph, pw, oh: (h + 2 * ph - kh) / sh + 1, ow: (w + 2 * pw - kw) / sw + 1 };
        let (oh, ow) = (geo.oh, geo.ow);
        let mut out = vec![F::neg_infinity(); b * c * oh * ow];
        for (plane, dst) in x.data().chunks(h * w).zip(out.chunks_mut(oh * ow)) {
            geo.visit(|oy, iy, lo, ix0, n| {
                let best = &mut dst[oy * ow + lo..oy * ow + lo + n];
                let row = &plane[iy * w..(iy + 1) * w];
                if sw == 1 {
                    for (bv, &v) in best.iter_mut().zip(&row[ix0..ix0 + n]) {
                        *bv = bv.max(v);
                    }
                } else {
                    for (j, bv) in best.iter_mut().enumerate() {
                        *bv = bv.max(row[ix0 + j * sw]);
                    }
                }
            });
        }
        let y = Tensor::from_vec(&[b, c, oh, ow], out);
        let yc = y.clone();
        self.graph.op(y, &[self], move |g, _| {
            let mut gx = Tensor::zeros(&[b, c, h, w]);
            let mut taken = vec![false; oh * ow];
            for ((plane, gplane), (yp, gp)) in x
                .data()
                .chunks(h * w)
                .zip(gx.data_mut().chunks_mut(h * w))
                .zip(yc.data().chunks(oh * ow).zip(g.data().chunks(oh * ow)))
            {
                taken.fill(false);
                geo.visit(|oy, iy, lo, ix0, n| {
                    let o = oy * ow + lo;
                    let row = &plane[iy * w..(iy + 1) * w];
                    let grow = &mut gplane[iy * w..(iy + 1) * w];
                    for j in 0..n {
                        let ix = ix0 + j * sw;
                        let hit = !taken[o + j] && row[ix] == yp[o + j];
                        if hit {
                            taken[o + j] = true;
                            grow[ix] += gp[o + j];
                        }
                    }
                });
            }
            vec![Some(gx)]
        })
    }

    /// Bilinear resize of the last two axes with corner pixels aligned.
    pub fn resize_bilinear(self, oh: usize, ow: usize) -> Var<'g, F> {
        let x = self.value();
        let (b, c, h, w) = dims4(x.shape(), "resize_bilinear");
        let ty = lerp_table(h, oh);
        let tx = lerp_table(w, ow);
        let mut out = vec![F::zero(); b * c * oh * ow];
        let xd = x.data();
        for p in 0..b * c {
            let plane = &xd[p * h * w..(p + 1) * h * w];
            let dst = &mut out[p * oh * ow..(p + 1) * oh * ow];
            for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
                let (fy, gy) = (F::of(fy), F::of(1.0 - fy));
                for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                    let (fx, gx) = (F::of(fx), F::of(1.0 - fx));
                    dst[oy * ow + ox] = gy * (gx * plane[y0 * w + x0] + fx * plane[y0 * w + x1])
                        + fy * (gx * plane[y1 * w + x0] + fx * plane[y1 * w + x1]);
                }
            }
        }
        self.graph.op(Tensor::from_vec(&[b, c, oh, ow], out), &[self], move |g, _| {
            let mut gx = Tensor::zeros(&[b, c, h, w]);
            let d = gx.data_mut();
            for p in 0..b * c {
                let gp = &g.data()[p * oh * ow..(p + 1) * oh * ow];
                let dst = &mut d[p * h * w..(p + 1) * h * w];
                for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
                    let (fy, gy) = (F::of(fy), F::of(1.0 - fy));
                    for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                        let (fx, gxw) = (F::of(fx), F::of(1.0 - fx));
                        let v = gp[oy * ow + ox];
                        dst[y0 * w + x0] += v * gy * gxw;
                        dst[y0 * w + x1] += v * gy * fx;
                        dst[y1 * w + x0] += v * fy * gxw;
                        dst[y1 * w + x1] += v * fy * fx;
                    }
                }
            }
            vec![Some(gx)]
        })
    }

    /// Mean over the last two axes: `[b, c, h, w] -> [b, c]`.
    pub fn global_avg_pool2d(self) -> Var<'g, F> {
        let x = self.value();
        let (b, c, h, w) = dims4(x.shape(), "global_avg_pool2d");
        let n = h * w;
        let inv = F::of(1.0 / n as f64);
        let out: Vec<F> = x.data().chunks(n).map(|pl| pl.iter().copied().sum::<F>() * inv).collect();
        self.graph.op(Tensor::from_vec(&[b, c], out), &[self], move |g, _| {
            let mut gx = Vec::with_capacity(b * c * n);
            for &gv in g.data() {
                gx.extend(std::iter::repeat_n(gv * inv, n));
            }
            vec![Some(Tensor::from_vec(&[b, c, h, w], gx))]
        })
    }
}
