//! Small 2-D FFT helper over `rustfft`.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Smallest `n' >= n` of the form `2^a 3^b`, times at most one factor of
/// 5 or 7 (the lengths `rustfft` handles fastest).
pub fn good_size(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 || r == 5 || r == 7 {
            return m;
        }
        m += 1;
    }
}

/// Planned 2-D transform on a row-major `rows`x`cols` complex buffer.
#[derive(Clone)]
pub struct Fft2 {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Fft2({}x{})", self.rows, self.cols)
    }
}

impl Fft2 {
    pub fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            col_fwd: planner.plan_fft_forward(rows),
            row_inv: planner.plan_fft_inverse(cols),
            col_inv: planner.plan_fft_inverse(rows),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Unnormalized forward transform in place.
    pub fn forward(&self, buf: &mut [Complex64], scratch: &mut Vec<Complex64>) {
        self.run(buf, scratch, &self.row_fwd, &self.col_fwd);
    }

    /// Inverse transform in place, normalized by `1 / (rows * cols)`.
    pub fn inverse(&self, buf: &mut [Complex64], scratch: &mut Vec<Complex64>) {
        self.run(buf, scratch, &self.row_inv, &self.col_inv);
        let s = 1.0 / self.len() as f64;
        for v in buf.iter_mut() {
            *v *= s;
        }
    }

    fn run(
        &self,
        buf: &mut [Complex64],
        scratch: &mut Vec<Complex64>,
        row: &Arc<dyn Fft<f64>>,
        col: &Arc<dyn Fft<f64>>,
    ) {
        assert_eq!(buf.len(), self.len());
        let need = row
            .get_inplace_scratch_len()
            .max(col.get_inplace_scratch_len())
            .max(self.len());
        if scratch.len() < need {
            scratch.resize(need, Complex64::new(0.0, 0.0));
        }
        row.process_with_scratch(buf, &mut scratch[..row.get_inplace_scratch_len()]);
        transpose(buf, &mut scratch[..self.len()], self.rows, self.cols);
        buf.copy_from_slice(&scratch[..self.len()]);
        col.process_with_scratch(buf, &mut scratch[..col.get_inplace_scratch_len()]);
        transpose(buf, &mut scratch[..self.len()], self.cols, self.rows);
        buf.copy_from_slice(&scratch[..self.len()]);
    }
}

/// Reusable buffers for the pruned transforms.
#[derive(Debug, Default)]
pub struct Workspace {
    tmp: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl Fft2 {
    fn reserve(&self, ws: &mut Workspace) {
        let need = self
            .row_fwd
            .get_inplace_scratch_len()
            .max(self.col_fwd.get_inplace_scratch_len())
            .max(self.row_inv.get_inplace_scratch_len())
            .max(self.col_inv.get_inplace_scratch_len());
        if ws.scratch.len() < need {
            ws.scratch.resize(need, Complex64::new(0.0, 0.0));
        }
        if ws.tmp.len() != self.len() {
            ws.tmp.resize(self.len(), Complex64::new(0.0, 0.0));
        }
    }

    /// Forward transform of a row-major buffer whose rows from `live_rows`
    /// on are zero. The spectrum is left transposed (`cols` x `rows`), which
    /// is the layout [`Fft2::inverse_transposed`] consumes.
    pub fn forward_transposed(&self, buf: &mut Vec<Complex64>, live_rows: usize, ws: &mut Workspace) {
        assert_eq!(buf.len(), self.len());
        self.reserve(ws);
        let live = live_rows.min(self.rows) * self.cols;
        let s = self.row_fwd.get_inplace_scratch_len();
        self.row_fwd
            .process_with_scratch(&mut buf[..live], &mut ws.scratch[..s]);
        transpose(buf, &mut ws.tmp, self.rows, self.cols);
        std::mem::swap(buf, &mut ws.tmp);
        let s = self.col_fwd.get_inplace_scratch_len();
        self.col_fwd.process_with_scratch(buf, &mut ws.scratch[..s]);
    }

    /// Inverse of [`Fft2::forward_transposed`], normalized, computing only
    /// the listed output rows. Other rows of `buf` are left unspecified.
    pub fn inverse_transposed(&self, buf: &mut Vec<Complex64>, rows: &[usize], ws: &mut Workspace) {
        assert_eq!(buf.len(), self.len());
        self.reserve(ws);
        let s = self.col_inv.get_inplace_scratch_len();
        self.col_inv.process_with_scratch(buf, &mut ws.scratch[..s]);
        const B: usize = 16;
        for block in rows.chunks(B) {
            for c0 in (0..self.cols).step_by(B) {
                for c in c0..(c0 + B).min(self.cols) {
                    let line = &buf[c * self.rows..(c + 1) * self.rows];
                    for &r in block {
                        ws.tmp[r * self.cols + c] = line[r];
                    }
                }
            }
        }
        std::mem::swap(buf, &mut ws.tmp);
        let s = self.row_inv.get_inplace_scratch_len();
        let scale = 1.0 / self.len() as f64;
        for &r in rows {
            let row = &mut buf[r * self.cols..(r + 1) * self.cols];
            self.row_inv.process_with_scratch(row, &mut ws.scratch[..s]);
            for v in row {
                *v *= scale;
            }
        }
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    const B: usize = 16;
    for r0 in (0..rows).step_by(B) {
        for c0 in (0..cols).step_by(B) {
            for r in r0..(r0 + B).min(rows) {
                for c in c0..(c0 + B).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn good_sizes() {
        assert_eq!(good_size(223), 224);
        assert_eq!(good_size(11), 12);
        assert_eq!(good_size(1), 1);
        assert_eq!(good_size(121), 126);
        assert_eq!(good_size(137), 144);
    }

    #[test]
    fn matches_direct_dft() {
        let (r, c) = (3, 5);
        let input: Vec<Complex64> = (0..r * c)
            .map(|i| Complex64::new((i as f64 * 0.7).sin(), (i as f64 * 1.3).cos()))
            .collect();
        let mut buf = input.clone();
        let plan = Fft2::new(r, c);
        let mut scratch = Vec::new();
        plan.forward(&mut buf, &mut scratch);
        for u in 0..r {
            for v in 0..c {
                let mut acc = Complex64::new(0.0, 0.0);
                for y in 0..r {
                    for x in 0..c {
                        let ang = -2.0 * std::f64::consts::PI * ((u * y) as f64 / r as f64 + (v * x) as f64 / c as f64);
                        acc += input[y * c + x] * Complex64::from_polar(1.0, ang);
                    }
                }
                assert!((acc - buf[u * c + v]).norm() < 1e-10);
            }
        }
        plan.inverse(&mut buf, &mut scratch);
        for (a, b) in buf.iter().zip(&input) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn pruned_transforms_round_trip() {
        let (r, c) = (6, 10);
        let live = 4;
        let input: Vec<Complex64> = (0..r * c)
            .map(|i| {
                if i < live * c {
                    Complex64::new((i as f64 * 0.3).cos(), 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        let plan = Fft2::new(r, c);
        let mut full = input.clone();
        plan.forward(&mut full, &mut Vec::new());
        let mut ws = Workspace::default();
        let mut buf = input.clone();
        plan.forward_transposed(&mut buf, live, &mut ws);
        for u in 0..r {
            for v in 0..c {
                assert!((buf[v * r + u] - full[u * c + v]).norm() < 1e-12);
            }
        }
        plan.inverse_transposed(&mut buf, &[1, 3, 5], &mut ws);
        for row in [1, 3, 5] {
            for x in 0..c {
                assert!((buf[row * c + x] - input[row * c + x]).norm() < 1e-12);
            }
        }
    }
}
