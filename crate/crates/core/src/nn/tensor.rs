use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Dense row-major 2-D array of `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape {
                op: "tensor",
                detail: format!("{} values for shape {rows}x{cols}", data.len()),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn scalar(v: f64) -> Self {
        Self { rows: 1, cols: 1, data: vec![v] }
    }

    pub fn column(values: Vec<f64>) -> Self {
        Self { rows: values.len(), cols: 1, data: values }
    }

    pub fn row(values: Vec<f64>) -> Self {
        Self { rows: 1, cols: values.len(), data: values }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn item(&self) -> f64 {
        self.data[0]
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// `out = alpha * op(a) * op(b) + beta * out` where `op` optionally
/// transposes. Shapes are given after transposition.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    out: &mut [f64],
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    // Row-major a is m x k (or k x m when transposed).
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: slices cover the strided extents described above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub(crate) fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.cols != b.rows {
        return Err(Error::Shape {
            op: "matmul",
            detail: format!("{}x{} times {}x{}", a.rows, a.cols, b.rows, b.cols),
        });
    }
    let mut out = Tensor::zeros(a.rows, b.cols);
    gemm(a.rows, a.cols, b.cols, &a.data, false, &b.data, false, &mut out.data, 0.0);
    Ok(out)
}

pub(crate) fn add_row(x: &Tensor, bias: &Tensor) -> Result<Tensor> {
    if bias.rows != 1 || bias.cols != x.cols {
        return Err(Error::Shape {
            op: "add_row",
            detail: format!("bias {}x{} against {}x{}", bias.rows, bias.cols, x.rows, x.cols),
        });
    }
    let mut out = x.clone();
    for row in out.data.chunks_mut(x.cols.max(1)) {
        for (v, b) in row.iter_mut().zip(&bias.data) {
            *v += b;
        }
    }
    Ok(out)
}

pub(crate) fn map(x: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor { rows: x.rows, cols: x.cols, data: x.data.iter().map(|&v| f(v)).collect() }
}

/// Pool consecutive row segments; `offsets` holds `segments + 1` row
/// boundaries. Rows are accumulated in index order.
pub(crate) fn segment_pool(x: &Tensor, offsets: &[usize], mean: bool) -> Result<Tensor> {
    if offsets.len() < 2 || offsets[0] != 0 || *offsets.last().unwrap() != x.rows {
        return Err(Error::Shape {
            op: "segment_pool",
            detail: format!("offsets {:?} do not partition {} rows", offsets, x.rows),
        });
    }
    let segs = offsets.len() - 1;
    let mut out = Tensor::zeros(segs, x.cols);
    for s in 0..segs {
        let (lo, hi) = (offsets[s], offsets[s + 1]);
        if hi <= lo {
            return Err(Error::Shape { op: "segment_pool", detail: format!("empty segment {s}") });
        }
        let acc = &mut out.data[s * x.cols..(s + 1) * x.cols];
        for r in lo..hi {
            for (a, v) in acc.iter_mut().zip(x.row_slice(r)) {
                *a += v;
            }
        }
        if mean {
            let inv = (hi - lo) as f64;
            acc.iter_mut().for_each(|a| *a /= inv);
        }
    }
    Ok(out)
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}
