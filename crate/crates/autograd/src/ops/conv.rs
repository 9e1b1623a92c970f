use crate::float::{gemm, Mat};
use crate::graph::Var;
use crate::{Float, Tensor};

use super::fftconv;

/// Upper bound on the scratch matrix built per chunk, in elements.
const COL_BUDGET: usize = 1 << 21;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub stride: (usize, usize),
    pub padding: (usize, usize),
}

impl Conv2dSpec {
    pub fn same(kh: usize, kw: usize) -> Self {
        Self { stride: (1, 1), padding: (kh / 2, kw / 2) }
    }

    pub fn valid() -> Self {
        Self { stride: (1, 1), padding: (0, 0) }
    }
}

/// Algorithm used by [`Var::conv2d_via`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConvRoute {
    /// Pick the cheaper of the two by operation count.
    Auto,
    /// Patch matrix (im2col) times weight matrix.
    Direct,
    /// Products of 2-d spectra; stride 1 only.
    Fft,
}

impl Default for Conv2dSpec {
    fn default() -> Self {
        Self::valid()
    }
}

#[derive(Clone, Copy, Debug)]
struct Geom {
    c: usize,
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

impl Geom {
    fn k(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.sh == 1 && self.sw == 1 && self.ph == 0 && self.pw == 0
    }

    /// Output row chunks `[oy0, oy1)` sized to keep the scratch matrix bounded.
    fn chunks(&self) -> impl Iterator<Item = (usize, usize)> {
        let rows = (COL_BUDGET / (self.k() * self.ow).max(1)).clamp(1, self.oh.max(1));
        let oh = self.oh;
        (0..oh).step_by(rows).map(move |s| (s, (s + rows).min(oh)))
    }

    /// Output columns `[lo, hi)` whose input column `ox*sw + kx - pw` is in range.
    fn valid_cols(&self, kx: usize) -> (usize, usize) {
        let lo = if kx >= self.pw { 0 } else { (self.pw - kx).div_ceil(self.sw) };
        // need ox*sw + kx - pw <= w - 1
        let hi = if self.w + self.pw > kx { (self.w + self.pw - kx - 1) / self.sw + 1 } else { 0 };
        (lo.min(self.ow), hi.min(self.ow).max(lo.min(self.ow)))
    }

    fn input_row(&self, oy: usize, ky: usize) -> Option<usize> {
        let iy = (oy * self.sh + ky) as isize - self.ph as isize;
        (iy >= 0 && (iy as usize) < self.h).then_some(iy as usize)
    }
}

fn im2col<F: Float>(x: &[F], g: &Geom, oy0: usize, oy1: usize, col: &mut [F]) {
    let p = (oy1 - oy0) * g.ow;
    for ci in 0..g.c {
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (ci * g.kh + ky) * g.kw + kx;
                let dst = &mut col[row * p..(row + 1) * p];
                let (lo, hi) = g.valid_cols(kx);
                for oy in oy0..oy1 {
                    let d = &mut dst[(oy - oy0) * g.ow..(oy - oy0 + 1) * g.ow];
                    let Some(iy) = g.input_row(oy, ky) else {
                        d.fill(F::zero());
                        continue;
                    };
                    let src = &x[(ci * g.h + iy) * g.w..(ci * g.h + iy + 1) * g.w];
                    d[..lo].fill(F::zero());
                    d[hi..].fill(F::zero());
                    let ix0 = lo * g.sw + kx - g.pw;
                    if g.sw == 1 {
                        d[lo..hi].copy_from_slice(&src[ix0..ix0 + hi - lo]);
                    } else {
                        for (j, v) in d[lo..hi].iter_mut().enumerate() {
                            *v = src[ix0 + j * g.sw];
                        }
                    }
                }
            }
        }
    }
}

fn col2im<F: Float>(col: &[F], g: &Geom, oy0: usize, oy1: usize, x: &mut [F]) {
    let p = (oy1 - oy0) * g.ow;
    for ci in 0..g.c {
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (ci * g.kh + ky) * g.kw + kx;
                let srcrow = &col[row * p..(row + 1) * p];
                let (lo, hi) = g.valid_cols(kx);
                if lo >= hi {
                    continue;
                }
                for oy in oy0..oy1 {
                    let Some(iy) = g.input_row(oy, ky) else { continue };
                    let s = &srcrow[(oy - oy0) * g.ow..(oy - oy0 + 1) * g.ow];
                    let dst = &mut x[(ci * g.h + iy) * g.w..(ci * g.h + iy + 1) * g.w];
                    let ix0 = lo * g.sw + kx - g.pw;
                    for (j, &v) in s[lo..hi].iter().enumerate() {
                        dst[ix0 + j * g.sw] += v;
                    }
                }
            }
        }
    }
}

fn strided<F>(data: &[F], rows: usize, cols: usize, ld: usize) -> Mat<'_, F> {
    Mat { data, rows, cols, ld, trans: false }
}

impl<'g, F: Float> Var<'g, F> {
    /// 2-d cross-correlation of `[b, c_in, h, w]` with `[c_out, c_in, kh, kw]`.
    pub fn conv2d(self, weight: Var<'g, F>, bias: Option<Var<'g, F>>, spec: Conv2dSpec) -> Var<'g, F> {
        self.conv2d_via(weight, bias, spec, ConvRoute::Auto)
    }

    pub fn conv2d_via(self, weight: Var<'g, F>, bias: Option<Var<'g, F>>, spec: Conv2dSpec, route: ConvRoute) -> Var<'g, F> {
        let x = self.value();
        let w = weight.value();
        let &[b, c, h, wd] = x.shape() else { panic!("conv2d input must be 4-d, got {:?}", x.shape()) };
        let &[co, ci, kh, kw] = w.shape() else { panic!("conv2d weight must be 4-d") };
        assert_eq!(c, ci, "conv2d channel mismatch: input {c}, weight {ci}");
        let (sh, sw) = spec.stride;
        let (ph, pw) = spec.padding;
        assert!(h + 2 * ph >= kh && wd + 2 * pw >= kw, "conv2d kernel larger than padded input");
        let geo = Geom {
            c,
            h,
            w: wd,
            kh,
            kw,
            sh,
            sw,
            ph,
            pw,
            oh: (h + 2 * ph - kh) / sh + 1,
            ow: (wd + 2 * pw - kw) / sw + 1,
        };
        let fshape = fftconv::Shape { b, c, h, w: wd, co, kh, kw, ph, pw, oh: geo.oh, ow: geo.ow };
        let use_fft = match route {
            ConvRoute::Direct => false,
            ConvRoute::Fft => {
                assert_eq!(spec.stride, (1, 1), "FFT convolution needs unit stride");
                true
            }
            ConvRoute::Auto => spec.stride == (1, 1) && !geo.pointwise() && fshape.fft_cost() < fshape.direct_cost(),
        };
        if use_fft {
            let out = fftconv::forward(&fshape, x.data(), w.data());
            let y = self.graph.op(Tensor::from_vec(&[b, co, geo.oh, geo.ow], out), &[self, weight], move |g, need| {
                let (gx, gw) = fftconv::backward(&fshape, x.data(), w.data(), g.data(), need[0], need[1]);
                vec![
                    gx.map(|v| Tensor::from_vec(&[b, c, h, wd], v)),
                    gw.map(|v| Tensor::from_vec(&[co, ci, kh, kw], v)),
                ]
            });
            return match bias {
                Some(bias) => y.add_along(bias, 1),
                None => y,
            };
        }
        let k = geo.k();
        let n_out = geo.oh * geo.ow;
        let n_in = c * h * wd;
        let mut out = vec![F::zero(); b * co * n_out];
        let mut col = Vec::new();
        for s in 0..b {
            let xs = &x.data()[s * n_in..(s + 1) * n_in];
            let os = &mut out[s * co * n_out..(s + 1) * co * n_out];
            if geo.pointwise() {
                gemm(F::one(), Mat::new(w.data(), co, k), Mat::new(xs, k, n_out), F::zero(), os, n_out);
                continue;
            }
            for (oy0, oy1) in geo.chunks() {
                let p = (oy1 - oy0) * geo.ow;
                col.resize(k * p, F::zero());
                im2col(xs, &geo, oy0, oy1, &mut col);
                gemm(F::one(), Mat::new(w.data(), co, k), Mat::new(&col, k, p), F::zero(), &mut os[oy0 * geo.ow..], n_out);
            }
        }
        let y = self.graph.op(Tensor::from_vec(&[b, co, geo.oh, geo.ow], out), &[self, weight], move |g, need| {
            let mut gx = need[0].then(|| vec![F::zero(); b * n_in]);
            let mut gw = need[1].then(|| vec![F::zero(); co * k]);
            let mut col = Vec::new();
            let mut gcol = Vec::new();
            for s in 0..b {
                let xs = &x.data()[s * n_in..(s + 1) * n_in];
                let gs = &g.data()[s * co * n_out..(s + 1) * co * n_out];
                if geo.pointwise() {
                    if let Some(gw) = gw.as_mut() {
                        gemm(F::one(), Mat::new(gs, co, n_out), Mat::new(xs, k, n_out).t(), F::one(), gw, k);
                    }
                    if let Some(gx) = gx.as_mut() {
                        let dst = &mut gx[s * n_in..(s + 1) * n_in];
                        gemm(F::one(), Mat::new(w.data(), co, k).t(), Mat::new(gs, co, n_out), F::zero(), dst, n_out);
                    }
                    continue;
                }
                for (oy0, oy1) in geo.chunks() {
                    let p = (oy1 - oy0) * geo.ow;
                    let gchunk = strided(&gs[oy0 * geo.ow..], co, p, n_out);
                    if let Some(gw) = gw.as_mut() {
                        col.resize(k * p, F::zero());
                        im2col(xs, &geo, oy0, oy1, &mut col);
                        gemm(F::one(), gchunk, Mat::new(&col, k, p).t(), F::one(), gw, k);
                    }
                    if let Some(gx) = gx.as_mut() {
                        gcol.resize(k * p, F::zero());
                        gemm(F::one(), Mat::new(w.data(), co, k).t(), gchunk, F::zero(), &mut gcol, p);
                        col2im(&gcol, &geo, oy0, oy1, &mut gx[s * n_in..(s + 1) * n_in]);
                    }
                }
            }
            vec![
                gx.map(|v| Tensor::from_vec(&[b, c, h, wd], v)),
                gw.map(|v| Tensor::from_vec(&[co, ci, kh, kw], v)),
            ]
        });
        match bias {
            Some(bias) => y.add_along(bias, 1),
            None => y,
        }
    }
}
