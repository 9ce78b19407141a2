//! Layer kernels on planar `f64` tensors.

use std::cell::RefCell;
use std::collections::HashMap;

use rustfft::num_complex::Complex64;

use super::graph::{BatchNorm, Conv2d, FullyConnected, Lrn, Pool, Shape};
use super::pool;
use crate::fft::{good_size, Fft2, Workspace};

/// Output indices `o` in `[lo, hi)` with `0 <= o * s + k - p < in_len`.
fn valid_range(out_len: usize, in_len: usize, k: usize, s: usize, p: usize) -> (usize, usize) {
    let lo = if p > k { (p - k).div_ceil(s) } else { 0 };
    let hi = if in_len + p > k {
        ((in_len + p - k - 1) / s + 1).min(out_len)
    } else {
        0
    };
    (lo, hi.max(lo))
}

pub fn conv2d_direct(c: &Conv2d, x: &[f64], xs: Shape, ys: Shape) -> Vec<f64> {
    let (kh, kw) = c.kernel;
    let (sh, sw) = c.stride;
    let (ph, pw) = c.pad;
    let ipg = c.in_per_group();
    let opg = c.out_per_group();
    let mut out = pool::zeros(ys.len());
    for (oc, o) in out.chunks_mut(ys.plane()).enumerate() {
        if !c.bias.is_empty() {
            o.fill(c.bias[oc] as f64);
        }
        let g = oc / opg;
        for icg in 0..ipg {
            let ic = g * ipg + icg;
            let xp = &x[ic * xs.plane()..(ic + 1) * xs.plane()];
            let wbase = (oc * ipg + icg) * kh * kw;
            for ky in 0..kh {
                let (oy0, oy1) = valid_range(ys.height, xs.height, ky, sh, ph);
                for kx in 0..kw {
                    let w = c.weight[wbase + ky * kw + kx] as f64;
                    if w == 0.0 {
                        continue;
                    }
                    let (ox0, ox1) = valid_range(ys.width, xs.width, kx, sw, pw);
                    if ox0 == ox1 {
                        continue;
                    }
                    for oy in oy0..oy1 {
                        let iy = oy * sh + ky - ph;
                        let orow = &mut o[oy * ys.width + ox0..oy * ys.width + ox1];
                        let xrow = &xp[iy * xs.width..(iy + 1) * xs.width];
                        if sw == 1 {
                            let ix0 = ox0 + kx - pw;
                            for (ov, xv) in orow.iter_mut().zip(&xrow[ix0..]) {
                                *ov += w * xv;
                            }
                        } else {
                            for (j, ov) in orow.iter_mut().enumerate() {
                                *ov += w * xrow[(ox0 + j) * sw + kx - pw];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Direct convolution evaluated only at the flat output indices `at`.
pub fn conv2d_direct_at(c: &Conv2d, x: &[f64], xs: Shape, ys: Shape, at: &[usize]) -> Vec<f64> {
    let (kh, kw) = c.kernel;
    let ipg = c.in_per_group();
    let opg = c.out_per_group();
    at.iter()
        .map(|&k| {
            let oc = k / ys.plane();
            let (oy, ox) = ((k % ys.plane()) / ys.width, k % ys.width);
            let mut v = if c.bias.is_empty() { 0.0 } else { c.bias[oc] as f64 };
            let g = oc / opg;
            for icg in 0..ipg {
                let ic = g * ipg + icg;
                let wbase = (oc * ipg + icg) * kh * kw;
                for ky in 0..kh {
                    let Some(iy) = (oy * c.stride.0 + ky).checked_sub(c.pad.0).filter(|&y| y < xs.height) else {
                        continue;
                    };
                    for kx in 0..kw {
                        let Some(ix) = (ox * c.stride.1 + kx).checked_sub(c.pad.1).filter(|&x| x < xs.width) else {
                            continue;
                        };
                        v += c.weight[wbase + ky * kw + kx] as f64 * x[ic * xs.plane() + iy * xs.width + ix];
                    }
                }
            }
            v
        })
        .collect()
}

/// Pixels of each input channel that differ from that channel's first
/// pixel, row by row.
pub struct SparseInput {
    background: Vec<f64>,
    /// Per channel, offsets into `points` of each row start (`height + 1`).
    rows: Vec<Vec<usize>>,
    /// Per channel, `(column, value - background)`.
    points: Vec<Vec<(usize, f64)>>,
}

impl SparseInput {
    /// `None` once more than `limit` pixels of one channel differ.
    pub fn new(x: &[f64], xs: Shape, limit: usize) -> Option<Self> {
        let mut s = SparseInput {
            background: Vec::with_capacity(xs.channels),
            rows: Vec::with_capacity(xs.channels),
            points: Vec::with_capacity(xs.channels),
        };
        for plane in x.chunks(xs.plane()) {
            let b = plane[0];
            let mut rows = Vec::with_capacity(xs.height + 1);
            let mut points = Vec::new();
            for row in plane.chunks(xs.width) {
                rows.push(points.len());
                for (ix, &v) in row.iter().enumerate() {
                    if v != b {
                        if points.len() == limit {
                            return None;
                        }
                        points.push((ix, v - b));
                    }
                }
            }
            rows.push(points.len());
            s.background.push(b);
            s.rows.push(rows);
            s.points.push(points);
        }
        Some(s)
    }
}

/// Summed-area table of every kernel, `(kh + 1) * (kw + 1)` entries each.
pub fn kernel_prefix_sums(c: &Conv2d) -> Vec<f64> {
    let (kh, kw) = c.kernel;
    let stride = (kh + 1) * (kw + 1);
    let mut out = vec![0.0; c.weight.len() / (kh * kw) * stride];
    for (w, p) in c.weight.chunks(kh * kw).zip(out.chunks_mut(stride)) {
        for y in 0..kh {
            let mut run = 0.0;
            for x in 0..kw {
                run += w[y * kw + x] as f64;
                p[(y + 1) * (kw + 1) + x + 1] = p[y * (kw + 1) + x + 1] + run;
            }
        }
    }
    out
}

/// In-bounds kernel taps `[lo, hi)` for output `o`.
fn tap_range(o: usize, in_len: usize, k: usize, s: usize, p: usize) -> (usize, usize) {
    let start = o * s;
    let lo = p.saturating_sub(start);
    let hi = (in_len + p).saturating_sub(start).min(k);
    (lo, hi.max(lo))
}

/// Whether the sparse evaluation beats direct summation over the window.
pub fn prefer_sparse(c: &Conv2d, s: &SparseInput, xs: Shape, ys: Shape) -> bool {
    let rows = Crop::new(xs.height, ys.height, c.kernel.0, c.stride.0, c.pad.0);
    let cols = Crop::new(xs.width, ys.width, c.kernel.1, c.stride.1, c.pad.1);
    let points = s.points.iter().map(Vec::len).max().unwrap_or(0);
    2 * points + 8 < rows.len * cols.len
}

/// Convolution at the flat output indices `at` as the background response,
/// read from the prefix sums, plus the contribution of differing pixels.
pub fn conv2d_sparse_at(c: &Conv2d, sums: &[f64], s: &SparseInput, xs: Shape, ys: Shape, at: &[usize]) -> Vec<f64> {
    let (kh, kw) = c.kernel;
    let (sh, sw) = c.stride;
    let (ph, pw) = c.pad;
    let ipg = c.in_per_group();
    let opg = c.out_per_group();
    let span = (kh + 1) * (kw + 1);
    at.iter()
        .map(|&k| {
            let oc = k / ys.plane();
            let (oy, ox) = ((k % ys.plane()) / ys.width, k % ys.width);
            let (ky0, ky1) = tap_range(oy, xs.height, kh, sh, ph);
            let (kx0, kx1) = tap_range(ox, xs.width, kw, sw, pw);
            let mut v = if c.bias.is_empty() { 0.0 } else { c.bias[oc] as f64 };
            if ky0 == ky1 || kx0 == kx1 {
                return v;
            }
            let g = oc / opg;
            for icg in 0..ipg {
                let ic = g * ipg + icg;
                let widx = oc * ipg + icg;
                let p = &sums[widx * span..(widx + 1) * span];
                let at = |y: usize, x: usize| p[y * (kw + 1) + x];
                v += s.background[ic] * (at(ky1, kx1) - at(ky0, kx1) - at(ky1, kx0) + at(ky0, kx0));
                let w = &c.weight[widx * kh * kw..(widx + 1) * kh * kw];
                let rows = &s.rows[ic];
                let points = &s.points[ic];
                let (y0, x0) = (oy * sh + ky0 - ph, ox * sw + kx0 - pw);
                let x1 = ox * sw + kx1 - pw;
                for (dy, iy) in (y0..oy * sh + ky1 - ph).enumerate() {
                    let wrow = &w[(ky0 + dy) * kw..];
                    for &(ix, d) in &points[rows[iy]..rows[iy + 1]] {
                        if ix >= x0 && ix < x1 {
                            v += wrow[kx0 + ix - x0] as f64 * d;
                        }
                    }
                }
            }
            v
        })
        .collect()
}

/// Kernel rows (or columns) that can ever touch real input, and the
/// resulting offset of output 0 relative to input 0.
#[derive(Debug, Clone, Copy)]
struct Crop {
    k0: usize,
    len: usize,
    /// Output `o` reads the circular result at `o * stride - origin`.
    origin: usize,
    transform: usize,
}

impl Crop {
    fn new(in_len: usize, out_len: usize, k: usize, s: usize, p: usize) -> Self {
        let reach = (out_len - 1) * s;
        let k0 = p.saturating_sub(reach);
        let k1 = (k - 1).min(p + in_len - 1);
        let len = (k1 + 1).saturating_sub(k0);
        let origin = p - k0;
        let transform = good_size((in_len + origin).max((reach + len).saturating_sub(origin)).max(len));
        Self {
            k0,
            len,
            origin,
            transform,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Source {
    /// The channel computed for this unique kernel.
    Representative,
    /// `sign` times the output of an earlier channel.
    Alias {
        of: usize,
        sign: f64,
    },
    Zero,
}

#[derive(Debug, Clone)]
struct Pair {
    /// Input channel and precomputed `conj(W_a) + i * conj(W_b)` spectrum.
    terms: Vec<(usize, Vec<Complex64>)>,
    /// Output channels receiving the real and imaginary parts.
    real: usize,
    imag: Option<usize>,
}

/// Frequency-domain convolution for large kernels.
///
/// Cross-correlation is computed as a circular correlation on a transform
/// large enough that wrap-around only ever reads zero padding. Kernel
/// spectra are precomputed once. Identical or negated kernels share one
/// transform, and two real outputs are packed into each complex inverse
/// transform.
#[derive(Debug, Clone)]
pub struct FftConvPlan {
    fft: Fft2,
    rows: Crop,
    cols: Crop,
    pairs: Vec<Pair>,
    sources: Vec<Source>,
    inputs_used: Vec<bool>,
}

fn leading_sign(w: &[f32]) -> Option<f32> {
    w.iter().find(|v| **v != 0.0).map(|v| v.signum())
}

impl FftConvPlan {
    pub fn new(c: &Conv2d, xs: Shape, ys: Shape) -> Self {
        let rows = Crop::new(xs.height, ys.height, c.kernel.0, c.stride.0, c.pad.0);
        let cols = Crop::new(xs.width, ys.width, c.kernel.1, c.stride.1, c.pad.1);
        let fft = Fft2::new(rows.transform, cols.transform);
        let (kh, kw) = c.kernel;
        let ipg = c.in_per_group();
        let opg = c.out_per_group();
        let per_out = ipg * kh * kw;
        let weights = |oc: usize| &c.weight[oc * per_out..(oc + 1) * per_out];

        // Kernels are compared in canonical form, first nonzero weight positive.
        let mut seen: HashMap<(usize, Vec<u32>), usize> = HashMap::new();
        let mut uniques: Vec<usize> = Vec::new();
        let mut sources = Vec::with_capacity(c.out_channels);
        for oc in 0..c.out_channels {
            let Some(sign) = leading_sign(weights(oc)) else {
                sources.push(Source::Zero);
                continue;
            };
            let key: Vec<u32> = weights(oc).iter().map(|&v| (sign * v + 0.0).to_bits()).collect();
            match seen.get(&(oc / opg, key.clone())) {
                Some(&rep) => {
                    let rep_sign = leading_sign(weights(rep)).unwrap();
                    sources.push(Source::Alias {
                        of: rep,
                        sign: f64::from(sign * rep_sign),
                    });
                }
                None => {
                    seen.insert((oc / opg, key), oc);
                    uniques.push(oc);
                    sources.push(Source::Representative);
                }
            }
        }

        let mut ws = Workspace::default();
        let mut inputs_used = vec![false; c.in_channels];
        let kernel_spectrum = |oc: usize, icg: usize, ws: &mut Workspace| {
            let base = (oc * ipg + icg) * kh * kw;
            let mut buf = vec![Complex64::new(0.0, 0.0); fft.len()];
            let mut any = false;
            for j in 0..rows.len {
                for i in 0..cols.len {
                    let v = c.weight[base + (rows.k0 + j) * kw + cols.k0 + i];
                    if v != 0.0 {
                        any = true;
                        buf[j * cols.transform + i].re = v as f64;
                    }
                }
            }
            if !any {
                return None;
            }
            fft.forward_transposed(&mut buf, rows.len, ws);
            for v in &mut buf {
                *v = v.conj();
            }
            Some(buf)
        };

        let mut pairs = Vec::new();
        for chunk in uniques.chunks(2) {
            let mut terms: Vec<(usize, Vec<Complex64>)> = Vec::new();
            for (slot, &oc) in chunk.iter().enumerate() {
                let g = oc / opg;
                for icg in 0..ipg {
                    let ic = g * ipg + icg;
                    let Some(mut spec) = kernel_spectrum(oc, icg, &mut ws) else {
                        continue;
                    };
                    inputs_used[ic] = true;
                    if slot == 1 {
                        for v in &mut spec {
                            *v = Complex64::new(-v.im, v.re);
                        }
                    }
                    match terms.iter_mut().find(|(i, _)| *i == ic) {
                        Some((_, acc)) => {
                            for (a, b) in acc.iter_mut().zip(&spec) {
                                *a += b;
                            }
                        }
                        None => terms.push((ic, spec)),
                    }
                }
            }
            pairs.push(Pair {
                terms,
                real: chunk[0],
                imag: chunk.get(1).copied(),
            });
        }

        Self {
            fft,
            rows,
            cols,
            pairs,
            sources,
            inputs_used,
        }
    }

    pub fn transform_size(&self) -> (usize, usize) {
        (self.fft.rows(), self.fft.cols())
    }

    pub fn unique_kernels(&self) -> usize {
        self.pairs.iter().map(|p| 1 + p.imag.is_some() as usize).sum()
    }

    pub fn apply(&self, c: &Conv2d, x: &[f64], xs: Shape, ys: Shape) -> Vec<f64> {
        WORKSPACE.with(|ws| self.apply_in(c, x, xs, ys, &mut ws.borrow_mut()))
    }

    /// Outputs at the flat indices `at` only, in that order.
    pub fn apply_at(&self, c: &Conv2d, x: &[f64], xs: Shape, ys: Shape, at: &[usize]) -> Vec<f64> {
        WORKSPACE.with(|ws| self.apply_at_in(c, x, xs, ys, at, &mut ws.borrow_mut()))
    }

    fn input_spectra(&self, x: &[f64], xs: Shape, used: &[bool], ws: &mut Workspace) -> Vec<Option<Vec<Complex64>>> {
        let (mr, mc) = (self.fft.rows(), self.fft.cols());
        used.iter()
            .enumerate()
            .map(|(ic, &u)| {
                if !u {
                    return None;
                }
                let mut buf = pool::complex_zeros(mr * mc);
                let plane = &x[ic * xs.plane()..(ic + 1) * xs.plane()];
                for (y, row) in plane.chunks(xs.width).enumerate() {
                    for (b, v) in buf[y * mc..y * mc + xs.width].iter_mut().zip(row) {
                        b.re = *v;
                    }
                }
                self.fft.forward_transposed(&mut buf, xs.height, ws);
                Some(buf)
            })
            .collect()
    }

    fn pair_spectrum(&self, pair: &Pair, spectra: &[Option<Vec<Complex64>>], acc: &mut [Complex64]) {
        for (t, (ic, spec)) in pair.terms.iter().enumerate() {
            let xspec = spectra[*ic].as_ref().expect("input spectrum computed");
            if t == 0 {
                for ((a, xv), wv) in acc.iter_mut().zip(xspec).zip(spec) {
                    *a = xv * wv;
                }
            } else {
                for ((a, xv), wv) in acc.iter_mut().zip(xspec).zip(spec) {
                    *a += xv * wv;
                }
            }
        }
    }

    fn apply_at_in(&self, c: &Conv2d, x: &[f64], xs: Shape, ys: Shape, at: &[usize], ws: &mut Workspace) -> Vec<f64> {
        let (mr, mc) = (self.fft.rows(), self.fft.cols());
        let plane = ys.plane();
        // representative channel and sign of every requested output
        let resolved: Vec<Option<(usize, f64)>> = at
            .iter()
            .map(|&k| match self.sources[k / plane] {
                Source::Representative => Some((k / plane, 1.0)),
                Source::Alias { of, sign } => Some((of, sign)),
                Source::Zero => None,
            })
            .collect();
        let mut wanted: HashMap<usize, Vec<usize>> = HashMap::new();
        for (j, r) in resolved.iter().enumerate() {
            if let Some((oc, _)) = r {
                wanted.entry(*oc).or_default().push(j);
            }
        }
        let live: Vec<&Pair> = self
            .pairs
            .iter()
            .filter(|p| wanted.contains_key(&p.real) || p.imag.is_some_and(|i| wanted.contains_key(&i)))
            .collect();
        let mut used = vec![false; c.in_channels];
        for p in &live {
            for (ic, _) in &p.terms {
                used[*ic] = true;
            }
        }
        let spectra = self.input_spectra(x, xs, &used, ws);
        let circ = |k: usize| {
            let p = k % plane;
            let r = ((p / ys.width) * c.stride.0 + mr - self.rows.origin) % mr;
            let ci = ((p % ys.width) * c.stride.1 + mc - self.cols.origin) % mc;
            (r, ci)
        };

        let mut out = vec![0.0; at.len()];
        let mut acc = pool::complex_zeros(mr * mc);
        for pair in live {
            self.pair_spectrum(pair, &spectra, &mut acc);
            let targets: Vec<(usize, bool)> = [(pair.real, false)]
                .into_iter()
                .chain(pair.imag.map(|i| (i, true)))
                .collect();
            let mut rows: Vec<usize> = targets
                .iter()
                .flat_map(|(oc, _)| wanted.get(oc).into_iter().flatten())
                .map(|&j| circ(at[j]).0)
                .collect();
            rows.sort_unstable();
            rows.dedup();
            self.fft.inverse_transposed(&mut acc, &rows, ws);
            for (oc, imag) in targets {
                for &j in wanted.get(&oc).into_iter().flatten() {
                    let (r, ci) = circ(at[j]);
                    let v = acc[r * mc + ci];
                    out[j] = resolved[j].unwrap().1 * if imag { v.im } else { v.re };
                }
            }
        }
        pool::recycle_complex(acc);
        for s in spectra.into_iter().flatten() {
            pool::recycle_complex(s);
        }
        if !c.bias.is_empty() {
            for (o, &k) in out.iter_mut().zip(at) {
                *o += c.bias[k / plane] as f64;
            }
        }
        out
    }

    fn apply_in(&self, c: &Conv2d, x: &[f64], xs: Shape, ys: Shape, ws: &mut Workspace) -> Vec<f64> {
        let (mr, mc) = (self.fft.rows(), self.fft.cols());
        let spectra = self.input_spectra(x, xs, &self.inputs_used, ws);
        let row_idx: Vec<usize> = (0..ys.height)
            .map(|o| (o * c.stride.0 + mr - self.rows.origin) % mr)
            .collect();
        let col_idx: Vec<usize> = (0..ys.width)
            .map(|o| (o * c.stride.1 + mc - self.cols.origin) % mc)
            .collect();
        let mut needed = row_idx.clone();
        needed.sort_unstable();
        needed.dedup();

        let plane = ys.plane();
        let mut y = pool::zeros(ys.len());
        let mut acc = pool::complex_zeros(mr * mc);
        for pair in &self.pairs {
            self.pair_spectrum(pair, &spectra, &mut acc);
            self.fft.inverse_transposed(&mut acc, &needed, ws);
            let targets = [(pair.real, false)].into_iter().chain(pair.imag.map(|i| (i, true)));
            for (oc, imag) in targets {
                let out = &mut y[oc * plane..(oc + 1) * plane];
                let mut k = 0;
                for &r in &row_idx {
                    let row = &acc[r * mc..(r + 1) * mc];
                    for &ci in &col_idx {
                        out[k] = if imag { row[ci].im } else { row[ci].re };
                        k += 1;
                    }
                }
            }
        }
        pool::recycle_complex(acc);
        for s in spectra.into_iter().flatten() {
            pool::recycle_complex(s);
        }

        for oc in 0..c.out_channels {
            if let Source::Alias { of, sign } = self.sources[oc] {
                let (head, tail) = y.split_at_mut(oc * plane);
                for (o, v) in tail[..plane].iter_mut().zip(&head[of * plane..(of + 1) * plane]) {
                    *o = sign * v;
                }
            }
        }
        if !c.bias.is_empty() {
            for (oc, p) in y.chunks_mut(plane).enumerate() {
                let b = c.bias[oc] as f64;
                for v in p {
                    *v += b;
                }
            }
        }
        y
    }
}

thread_local! {
    static WORKSPACE: RefCell<Workspace> = RefCell::new(Workspace::default());
}

/// Rough cost comparison between direct summation and the FFT plan.
pub fn prefer_fft(c: &Conv2d, xs: Shape, ys: Shape) -> bool {
    prefer_fft_at(c, xs, ys, ys.len())
}

/// As [`prefer_fft`] when only `outputs` values are needed.
pub fn prefer_fft_at(c: &Conv2d, xs: Shape, ys: Shape, outputs: usize) -> bool {
    let rows = Crop::new(xs.height, ys.height, c.kernel.0, c.stride.0, c.pad.0);
    let cols = Crop::new(xs.width, ys.width, c.kernel.1, c.stride.1, c.pad.1);
    let direct = (outputs * rows.len * cols.len * c.in_per_group()) as f64;
    let mm = (rows.transform * cols.transform) as f64;
    let pairs = c.out_channels.div_ceil(2) as f64;
    let transforms = (c.in_channels as f64 + pairs) * mm * mm.log2() * 2.5;
    let products = pairs * c.in_per_group() as f64 * mm * 4.0;
    transforms + products < direct
}

pub fn fully_connected(f: &FullyConnected, x: &[f64]) -> Vec<f64> {
    f.weight
        .chunks(f.in_features)
        .enumerate()
        .map(|(o, w)| {
            let b = f.bias.get(o).map_or(0.0, |&b| b as f64);
            b + w.iter().zip(x).map(|(&w, &x)| w as f64 * x).sum::<f64>()
        })
        .collect()
}

pub fn relu(x: &mut [f64]) {
    for v in x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

fn pool(
    p: &Pool,
    x: &[f64],
    xs: Shape,
    ys: Shape,
    init: f64,
    step: impl Fn(f64, f64) -> f64,
    finish: impl Fn(f64, usize) -> f64,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(ys.len());
    for c in 0..xs.channels {
        let xp = &x[c * xs.plane()..(c + 1) * xs.plane()];
        for oy in 0..ys.height {
            let y0 = (oy * p.stride.0).saturating_sub(p.pad.0);
            let y1 = (oy * p.stride.0 + p.kernel.0 - p.pad.0).min(xs.height);
            for ox in 0..ys.width {
                let x0 = (ox * p.stride.1).saturating_sub(p.pad.1);
                let x1 = (ox * p.stride.1 + p.kernel.1 - p.pad.1).min(xs.width);
                let mut acc = init;
                for iy in y0..y1 {
                    for v in &xp[iy * xs.width + x0..iy * xs.width + x1] {
                        acc = step(acc, *v);
                    }
                }
                out.push(finish(acc, (y1 - y0) * (x1 - x0)));
            }
        }
    }
    out
}

pub fn max_pool(p: &Pool, x: &[f64], xs: Shape, ys: Shape) -> Vec<f64> {
    pool(p, x, xs, ys, f64::NEG_INFINITY, f64::max, |a, _| a)
}

/// Average over the in-bounds part of each window.
pub fn avg_pool(p: &Pool, x: &[f64], xs: Shape, ys: Shape) -> Vec<f64> {
    pool(p, x, xs, ys, 0.0, |a, v| a + v, |a, n| a / n as f64)
}

pub fn lrn(l: &Lrn, x: &[f64], xs: Shape) -> Vec<f64> {
    let n = xs.plane();
    let half = l.size / 2;
    let mut out = vec![0.0; x.len()];
    for c in 0..xs.channels {
        let lo = c.saturating_sub(half);
        let hi = (c + half).min(xs.channels - 1);
        for i in 0..n {
            let ss: f64 = (lo..=hi).map(|j| x[j * n + i] * x[j * n + i]).sum();
            let scale = l.k + l.alpha / l.size as f64 * ss;
            out[c * n + i] = x[c * n + i] / scale.powf(l.beta);
        }
    }
    out
}

pub fn batch_norm(b: &BatchNorm, x: &mut [f64], xs: Shape) {
    for (c, plane) in x.chunks_mut(xs.plane()).enumerate() {
        let inv = (b.gamma[c] as f64) / (b.var[c] as f64 + b.eps).sqrt();
        let shift = b.beta[c] as f64 - b.mean[c] as f64 * inv;
        for v in plane {
            *v = *v * inv + shift;
        }
    }
}

/// Softmax across channels at each spatial position.
pub fn softmax_channels(x: &mut [f64], xs: Shape) {
    let n = xs.plane();
    let mut col = vec![0.0; xs.channels];
    for i in 0..n {
        for (c, v) in col.iter_mut().enumerate() {
            *v = x[c * n + i];
        }
        softmax_in_place(&mut col);
        for (c, v) in col.iter().enumerate() {
            x[c * n + i] = *v;
        }
    }
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}
