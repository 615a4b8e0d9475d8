//! Direct 2D cross-correlation kernels over `C×H×W` planes.
//!
//! Products and sums run in `f64`; only the stored results are narrowed.

use rayon::prelude::*;

use crate::diffcore::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub h_out: usize,
    pub w_out: usize,
}

impl ConvGeometry {
    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }

    fn col_rows(&self) -> usize {
        self.c_in * self.k * self.k
    }

    fn positions(&self) -> usize {
        self.h_out * self.w_out
    }
}

/// Unfolds the padded input into a `(C_in·k·k) × (H'·W')` column matrix.
fn im2col<T: Real>(x: &[T], g: &ConvGeometry) -> Vec<f64> {
    let p = g.positions();
    let mut cols = vec![0.0f64; g.col_rows() * p];
    cols.par_chunks_mut(p).enumerate().for_each(|(row, out)| {
        let ci = row / (g.k * g.k);
        let ky = (row / g.k) % g.k;
        let kx = row % g.k;
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for oy in 0..g.h_out {
            let iy = (oy * g.stride + ky) as isize - g.pad as isize;
            if iy < 0 || iy >= g.h as isize {
                continue;
            }
            let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
            let dst = &mut out[oy * g.w_out..(oy + 1) * g.w_out];
            for (ox, d) in dst.iter_mut().enumerate() {
                let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                if ix >= 0 && ix < g.w as isize {
                    *d = src[ix as usize].as_f64();
                }
            }
        }
    });
    cols
}

/// Folds column-matrix gradients back onto the input plane layout.
fn col2im<T: Real>(dcols: &[f64], g: &ConvGeometry) -> Vec<T> {
    let p = g.positions();
    let kk = g.k * g.k;
    let mut dx = vec![T::zero(); g.c_in * g.h * g.w];
    dx.par_chunks_mut(g.h * g.w)
        .enumerate()
        .for_each(|(ci, plane)| {
            let mut acc = vec![0.0f64; g.h * g.w];
            for r in 0..kk {
                let ky = r / g.k;
                let kx = r % g.k;
                let src = &dcols[(ci * kk + r) * p..(ci * kk + r + 1) * p];
                for oy in 0..g.h_out {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    for ox in 0..g.w_out {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            acc[iy as usize * g.w + ix as usize] += src[oy * g.w_out + ox];
                        }
                    }
                }
            }
            for (d, a) in plane.iter_mut().zip(&acc) {
                *d = T::from_f64(*a);
            }
        });
    dx
}

fn columns<T: Real>(x: &[T], g: &ConvGeometry) -> Vec<f64> {
    if g.is_pointwise() {
        x.iter().map(|v| v.as_f64()).collect()
    } else {
        im2col(x, g)
    }
}

pub fn conv2d_forward<T: Real>(x: &[T], w: &[T], b: Option<&[T]>, g: &ConvGeometry) -> Vec<T> {
    let cols = columns(x, g);
    let p = g.positions();
    let rows = g.col_rows();
    let mut out = vec![T::zero(); g.c_out * p];
    out.par_chunks_mut(p).enumerate().for_each(|(co, dst)| {
        let bias = b.map_or(0.0, |b| b[co].as_f64());
        let mut acc = vec![bias; p];
        let wrow = &w[co * rows..(co + 1) * rows];
        for (j, wj) in wrow.iter().enumerate() {
            let wj = wj.as_f64();
            if wj == 0.0 {
                continue;
            }
            let col = &cols[j * p..(j + 1) * p];
            for (a, c) in acc.iter_mut().zip(col) {
                *a += wj * c;
            }
        }
        for (d, a) in dst.iter_mut().zip(&acc) {
            *d = T::from_f64(*a);
        }
    });
    out
}

pub struct ConvGrads<T> {
    pub dx: Option<Vec<T>>,
    pub dw: Option<Vec<T>>,
    pub db: Option<Vec<T>>,
}

pub fn conv2d_backward<T: Real>(
    x: &[T],
    w: &[T],
    gout: &[T],
    g: &ConvGeometry,
    need: (bool, bool, bool),
) -> ConvGrads<T> {
    let p = g.positions();
    let rows = g.col_rows();
    let gout64: Vec<f64> = gout.iter().map(|v| v.as_f64()).collect();

    let dw = need.1.then(|| {
        let cols = columns(x, g);
        let mut dw = vec![T::zero(); g.c_out * rows];
        dw.par_chunks_mut(rows).enumerate().for_each(|(co, dst)| {
            let go = &gout64[co * p..(co + 1) * p];
            for (j, d) in dst.iter_mut().enumerate() {
                let col = &cols[j * p..(j + 1) * p];
                let s: f64 = go.iter().zip(col).map(|(a, b)| a * b).sum();
                *d = T::from_f64(s);
            }
        });
        dw
    });

    let db = need.2.then(|| {
        (0..g.c_out)
            .map(|co| T::from_f64(gout64[co * p..(co + 1) * p].iter().sum()))
            .collect()
    });

    let dx = need.0.then(|| {
        let mut dcols = vec![0.0f64; rows * p];
        dcols.par_chunks_mut(p).enumerate().for_each(|(j, dst)| {
            for co in 0..g.c_out {
                let wv = w[co * rows + j].as_f64();
                if wv == 0.0 {
                    continue;
                }
                let go = &gout64[co * p..(co + 1) * p];
                for (d, gv) in dst.iter_mut().zip(go) {
                    *d += wv * gv;
                }
            }
        });
        if g.is_pointwise() {
            dcols.into_iter().map(T::from_f64).collect()
        } else {
            col2im(&dcols, g)
        }
    });

    ConvGrads { dx, dw, db }
}
