//! Stride-1 convolution through 2-d FFTs, used when kernels are large.
//!
//! Every plane is embedded in a `p x q` grid with `p >= h + 2*pad_h` and
//! `q >= w + 2*pad_w`, which is large enough for circular correlation to
//! agree with linear correlation on every output we read back.

use std::sync::Arc;

use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::Float;

/// Smallest 5-smooth integer `>= n` (even when `even` is set).
fn smooth_size(n: usize, even: bool) -> usize {
    let mut m = n.max(2);
    loop {
        if !even || m % 2 == 0 {
            let mut r = m;
            for f in [2, 3, 5] {
                while r % f == 0 {
                    r /= f;
                }
            }
            if r == 1 {
                return m;
            }
        }
        m += 1;
    }
}

pub(crate) struct Plan2d<F: Float> {
    pub p: usize,
    pub q: usize,
    qh: usize,
    row_fwd: Arc<dyn RealToComplex<F>>,
    row_inv: Arc<dyn ComplexToReal<F>>,
    col_fwd: Arc<dyn Fft<F>>,
    col_inv: Arc<dyn Fft<F>>,
    rbuf: Vec<F>,
    cbuf: Vec<Complex<F>>,
    rscratch: Vec<Complex<F>>,
    cscratch: Vec<Complex<F>>,
}

impl<F: Float> Plan2d<F> {
    pub fn new(min_p: usize, min_q: usize) -> Self {
        let p = smooth_size(min_p, false);
        let q = smooth_size(min_q, true);
        let mut rp = RealFftPlanner::<F>::new();
        let mut cp = FftPlanner::<F>::new();
        let row_fwd = rp.plan_fft_forward(q);
        let row_inv = rp.plan_fft_inverse(q);
        let col_fwd = cp.plan_fft_forward(p);
        let col_inv = cp.plan_fft_inverse(p);
        let rlen = row_fwd.get_scratch_len().max(row_inv.get_scratch_len());
        let clen = col_fwd.get_inplace_scratch_len().max(col_inv.get_inplace_scratch_len());
        Self {
            p,
            q,
            qh: q / 2 + 1,
            row_fwd,
            row_inv,
            col_fwd,
            col_inv,
            rbuf: vec![F::zero(); q],
            cbuf: vec![Complex::default(); q / 2 + 1],
            rscratch: vec![Complex::default(); rlen],
            cscratch: vec![Complex::default(); clen],
        }
    }

    /// Number of complex values in one spectrum.
    pub fn spectrum_len(&self) -> usize {
        self.p * self.qh
    }

    /// Spectrum of an `h x w` plane placed at `(top, left)` in the zero grid.
    /// Layout is column-major: `out[c * p + r]`.
    pub fn forward(&mut self, src: &[F], h: usize, w: usize, top: usize, left: usize, out: &mut [Complex<F>]) {
        let (p, qh) = (self.p, self.qh);
        debug_assert!(top + h <= p && left + w <= self.q);
        out.fill(Complex::default());
        for r in 0..h {
            self.rbuf.fill(F::zero());
            self.rbuf[left..left + w].copy_from_slice(&src[r * w..(r + 1) * w]);
            self.row_fwd
                .process_with_scratch(&mut self.rbuf, &mut self.cbuf, &mut self.rscratch)
                .expect("row fft length");
            for (c, &v) in self.cbuf.iter().enumerate() {
                out[c * p + top + r] = v;
            }
        }
        for c in 0..qh {
            self.col_fwd.process_with_scratch(&mut out[c * p..(c + 1) * p], &mut self.cscratch);
        }
    }

    /// Inverse transform of `spec` (destroyed), adding rows `[r0, r0+h)` and
    /// columns `[c0, c0+w)` of the real result into `dst` (`h x w`).
    #[allow(clippy::too_many_arguments)]
    pub fn inverse_add(&mut self, spec: &mut [Complex<F>], r0: usize, h: usize, c0: usize, w: usize, dst: &mut [F]) {
        let (p, qh) = (self.p, self.qh);
        for c in 0..qh {
            self.col_inv.process_with_scratch(&mut spec[c * p..(c + 1) * p], &mut self.cscratch);
        }
        let scale = F::of(1.0 / (p * self.q) as f64);
        for r in 0..h {
            for c in 0..qh {
                self.cbuf[c] = spec[c * p + r0 + r];
            }
            self.cbuf[0].im = F::zero();
            self.cbuf[qh - 1].im = F::zero();
            self.row_inv
                .process_with_scratch(&mut self.cbuf, &mut self.rbuf, &mut self.rscratch)
                .expect("row ifft input");
            for (d, &v) in dst[r * w..(r + 1) * w].iter_mut().zip(&self.rbuf[c0..c0 + w]) {
                *d += v * scale;
            }
        }
    }
}

/// `acc += a * conj(b)` elementwise.
pub(crate) fn mac_conj<F: Float>(acc: &mut [Complex<F>], a: &[Complex<F>], b: &[Complex<F>]) {
    for ((o, x), y) in acc.iter_mut().zip(a).zip(b) {
        o.re += x.re * y.re + x.im * y.im;
        o.im += x.im * y.re - x.re * y.im;
    }
}

/// `acc += a * b` elementwise.
pub(crate) fn mac<F: Float>(acc: &mut [Complex<F>], a: &[Complex<F>], b: &[Complex<F>]) {
    for ((o, x), y) in acc.iter_mut().zip(a).zip(b) {
        o.re += x.re * y.re - x.im * y.im;
        o.im += x.re * y.im + x.im * y.re;
    }
}

pub(crate) struct Shape {
    pub b: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub co: usize,
    pub kh: usize,
    pub kw: usize,
    pub ph: usize,
    pub pw: usize,
    pub oh: usize,
    pub ow: usize,
}

impl Shape {
    fn plan<F: Float>(&self) -> Plan2d<F> {
        Plan2d::new(self.h + 2 * self.ph, self.w + 2 * self.pw)
    }

    /// Rough operation count of the FFT route, comparable with `2*k*n` gemm flops.
    pub fn fft_cost(&self) -> f64 {
        let p = smooth_size(self.h + 2 * self.ph, false) as f64;
        let q = smooth_size(self.w + 2 * self.pw, true) as f64;
        let f = p * (q / 2.0 + 1.0);
        let planes = (self.b * (self.c + self.co) + self.c * self.co) as f64;
        let fft = planes * p * q * (p * q).log2() * 2.5;
        let products = (self.b * self.c * self.co) as f64 * f * 8.0;
        fft + products
    }

    pub fn direct_cost(&self) -> f64 {
        2.0 * (self.b * self.co * self.c * self.kh * self.kw * self.oh * self.ow) as f64
    }
}

fn spectra<F: Float>(plan: &mut Plan2d<F>, data: &[F], planes: usize, h: usize, w: usize, top: usize, left: usize) -> Vec<Complex<F>> {
    let n = plan.spectrum_len();
    let mut out = vec![Complex::default(); planes * n];
    for i in 0..planes {
        plan.forward(&data[i * h * w..(i + 1) * h * w], h, w, top, left, &mut out[i * n..(i + 1) * n]);
    }
    out
}

pub(crate) fn forward<F: Float>(s: &Shape, x: &[F], w: &[F]) -> Vec<F> {
    let mut plan = s.plan::<F>();
    let n = plan.spectrum_len();
    let xs = spectra(&mut plan, x, s.b * s.c, s.h, s.w, s.ph, s.pw);
    let mut out = vec![F::zero(); s.b * s.co * s.oh * s.ow];
    let mut acc = vec![Complex::default(); n];
    let kk = s.kh * s.kw;
    for o in 0..s.co {
        let ws = spectra(&mut plan, &w[o * s.c * kk..(o + 1) * s.c * kk], s.c, s.kh, s.kw, 0, 0);
        for b in 0..s.b {
            acc.fill(Complex::default());
            for i in 0..s.c {
                let xi = &xs[(b * s.c + i) * n..(b * s.c + i + 1) * n];
                mac_conj(&mut acc, xi, &ws[i * n..(i + 1) * n]);
            }
            let plane = s.oh * s.ow;
            let dst = &mut out[(b * s.co + o) * plane..(b * s.co + o + 1) * plane];
            plan.inverse_add(&mut acc, 0, s.oh, 0, s.ow, dst);
        }
    }
    out
}

pub(crate) fn backward<F: Float>(
    s: &Shape,
    x: &[F],
    w: &[F],
    g: &[F],
    need_x: bool,
    need_w: bool,
) -> (Option<Vec<F>>, Option<Vec<F>>) {
    let mut plan = s.plan::<F>();
    let n = plan.spectrum_len();
    let kk = s.kh * s.kw;
    let gs = spectra(&mut plan, g, s.b * s.co, s.oh, s.ow, 0, 0);
    let xs = need_w.then(|| spectra(&mut plan, x, s.b * s.c, s.h, s.w, s.ph, s.pw));
    let mut gx_spec = need_x.then(|| vec![Complex::default(); s.b * s.c * n]);
    let mut gw = need_w.then(|| vec![F::zero(); s.co * s.c * kk]);
    let mut acc = vec![Complex::default(); n];
    for o in 0..s.co {
        if let Some(gx_spec) = gx_spec.as_mut() {
            let ws = spectra(&mut plan, &w[o * s.c * kk..(o + 1) * s.c * kk], s.c, s.kh, s.kw, 0, 0);
            for b in 0..s.b {
                let go = &gs[(b * s.co + o) * n..(b * s.co + o + 1) * n];
                for i in 0..s.c {
                    mac(&mut gx_spec[(b * s.c + i) * n..(b * s.c + i + 1) * n], go, &ws[i * n..(i + 1) * n]);
                }
            }
        }
        if let (Some(gw), Some(xs)) = (gw.as_mut(), xs.as_ref()) {
            for i in 0..s.c {
                acc.fill(Complex::default());
                for b in 0..s.b {
                    let xi = &xs[(b * s.c + i) * n..(b * s.c + i + 1) * n];
                    let go = &gs[(b * s.co + o) * n..(b * s.co + o + 1) * n];
                    mac_conj(&mut acc, xi, go);
                }
                plan.inverse_add(&mut acc, 0, s.kh, 0, s.kw, &mut gw[(o * s.c + i) * kk..(o * s.c + i + 1) * kk]);
            }
        }
    }
    let gx = gx_spec.map(|mut spec| {
        let plane = s.h * s.w;
        let mut gx = vec![F::zero(); s.b * s.c * plane];
        for (j, dst) in gx.chunks_mut(plane).enumerate() {
            plan.inverse_add(&mut spec[j * n..(j + 1) * n], s.ph, s.h, s.pw, s.w, dst);
        }
        gx
    });
    (gx, gw)
}
