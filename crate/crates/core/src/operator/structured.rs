use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::filterbank::{Dims, FilterBank};
use crate::error::{Error, Result};
use crate::model_sparse::BlockLayout;

/// Input signal geometry: `M` channels of length `D` (or `D x D`), filters
/// applied with stride `t` and no padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputGeometry {
    pub dims: Dims,
    pub input_len: usize,
    pub stride: usize,
}

impl InputGeometry {
    pub fn new(dims: Dims, input_len: usize, stride: usize) -> Result<Self> {
        if input_len == 0 || stride == 0 {
            return Err(Error::InvalidParameter(
                "input length and stride must be positive".into(),
            ));
        }
        Ok(Self {
            dims,
            input_len,
            stride,
        })
    }

    /// Number of shifts `n = (D - len)/t + 1` per spatial dimension.
    pub fn shifts(&self, filter_len: usize) -> Result<usize> {
        if filter_len > self.input_len {
            return Err(Error::GeometryMismatch(format!(
                "filter length {filter_len} exceeds input length {}",
                self.input_len
            )));
        }
        let span = self.input_len - filter_len;
        if !span.is_multiple_of(self.stride) {
            return Err(Error::GeometryMismatch(format!(
                "(D - len) = {span} is not divisible by stride {}",
                self.stride
            )));
        }
        Ok(span / self.stride + 1)
    }
}

/// The `Kn x MD` (or `Kn^2 x MD^2`) matrix `W` of a convolutional layer,
/// applied by direct convolution.
///
/// Row `i*n + j` (1-d) or `i*n^2 + jr*n + jc` (2-d) is filter `i` shifted by
/// `j*t`, concatenated over channels. Columns are ordered channel-major, then
/// spatial row-major.
#[derive(Debug, Clone)]
pub struct StructuredOperator {
    bank: FilterBank,
    geom: InputGeometry,
    // 1-d operators are handled as 2-d with a height-1 filter and input.
    f_h: usize,
    f_w: usize,
    d_h: usize,
    d_w: usize,
    n_h: usize,
    n_w: usize,
    // weights as (filter, spatial row, spatial col, channel)
    channel_last: Vec<f64>,
}

pub fn build_operator(bank: FilterBank, geom: InputGeometry) -> Result<StructuredOperator> {
    if bank.dims() != geom.dims {
        return Err(Error::GeometryMismatch(format!(
            "filter bank is {}-d but geometry is {}-d",
            bank.dims().count(),
            geom.dims.count()
        )));
    }
    let n = geom.shifts(bank.filter_len())?;
    let l = bank.filter_len();
    let d = geom.input_len;
    let (f_h, d_h, n_h) = match geom.dims {
        Dims::One => (1, 1, 1),
        Dims::Two => (l, d, n),
    };
    let (k, m_count) = (bank.num_filters(), bank.num_channels());
    let fsz = f_h * l;
    let mut channel_last = vec![0.0; bank.weights().len()];
    for i in 0..k {
        let filt = bank.filter(i);
        for m in 0..m_count {
            for p in 0..fsz {
                channel_last[(i * fsz + p) * m_count + m] = filt[m * fsz + p];
            }
        }
    }
    Ok(StructuredOperator {
        bank,
        geom,
        f_h,
        f_w: l,
        d_h,
        d_w: d,
        n_h,
        n_w: n,
        channel_last,
    })
}

impl StructuredOperator {
    pub fn bank(&self) -> &FilterBank {
        &self.bank
    }

    pub fn geometry(&self) -> InputGeometry {
        self.geom
    }

    /// Shifts per spatial dimension.
    pub fn shifts(&self) -> usize {
        self.n_w
    }

    pub fn row_count(&self) -> usize {
        self.bank.num_filters() * self.n_h * self.n_w
    }

    pub fn col_count(&self) -> usize {
        self.bank.num_channels() * self.d_h * self.d_w
    }

    /// Block structure of the hidden activation: one block per filter.
    pub fn block_layout(&self) -> BlockLayout {
        BlockLayout::new(self.bank.num_filters(), self.n_w, self.geom.dims)
    }

    fn check_len(expected: usize, actual: usize) -> Result<()> {
        if expected != actual {
            return Err(Error::DimensionMismatch { expected, actual });
        }
        Ok(())
    }

    /// Filter `i` at spatial tap `p` (row-major), all channels.
    pub(crate) fn tap(&self, i: usize, p: usize) -> &[f64] {
        let m = self.bank.num_channels();
        let fsz = self.f_h * self.f_w;
        &self.channel_last[(i * fsz + p) * m..(i * fsz + p + 1) * m]
    }

    /// `h = W x`: valid cross-correlation summed over channels.
    pub fn apply_forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Self::check_len(self.col_count(), x.len())?;
        let m_count = self.bank.num_channels();
        let plane = self.d_h * self.d_w;
        // channel-last copy of x: (row, col, channel)
        let mut xc = vec![0.0; x.len()];
        for m in 0..m_count {
            for q in 0..plane {
                xc[q * m_count + m] = x[m * plane + q];
            }
        }
        let t = self.geom.stride;
        let mut h = Vec::with_capacity(self.row_count());
        for i in 0..self.bank.num_filters() {
            for jr in 0..self.n_h {
                for jc in 0..self.n_w {
                    let mut acc = 0.0;
                    for a in 0..self.f_h {
                        for b in 0..self.f_w {
                            let q = (jr * t + a) * self.d_w + jc * t + b;
                            let xs = &xc[q * m_count..(q + 1) * m_count];
                            acc += crate::dot(self.tap(i, a * self.f_w + b), xs);
                        }
                    }
                    h.push(acc);
                }
            }
        }
        Ok(h)
    }

    /// `x = W^T z`: transposed convolution. Zero entries of `z` are skipped,
    /// so the cost scales with the number of nonzeros.
    pub fn apply_adjoint(&self, z: &[f64]) -> Result<Vec<f64>> {
        Self::check_len(self.row_count(), z.len())?;
        let m_count = self.bank.num_channels();
        let plane = self.d_h * self.d_w;
        let mut xc = vec![0.0; self.col_count()];
        for (r, &v) in z.iter().enumerate() {
            if v != 0.0 {
                self.add_row_channel_last(r, v, &mut xc);
            }
        }
        let mut x = vec![0.0; xc.len()];
        for q in 0..plane {
            for m in 0..m_count {
                x[m * plane + q] = xc[q * m_count + m];
            }
        }
        Ok(x)
    }

    fn add_row_channel_last(&self, row: usize, scale: f64, out: &mut [f64]) {
        let per_filter = self.n_h * self.n_w;
        let (i, j) = (row / per_filter, row % per_filter);
        let (jr, jc) = (j / self.n_w, j % self.n_w);
        let t = self.geom.stride;
        let m_count = self.bank.num_channels();
        for a in 0..self.f_h {
            for b in 0..self.f_w {
                let q = (jr * t + a) * self.d_w + jc * t + b;
                let dst = &mut out[q * m_count..(q + 1) * m_count];
                for (o, &w) in dst.iter_mut().zip(self.tap(i, a * self.f_w + b)) {
                    *o += scale * w;
                }
            }
        }
    }

    /// `out += scale * W[row, :]` in the public column order.
    fn add_row(&self, row: usize, scale: f64, out: &mut [f64]) {
        let per_filter = self.n_h * self.n_w;
        let (i, j) = (row / per_filter, row % per_filter);
        let (jr, jc) = (j / self.n_w, j % self.n_w);
        let t = self.geom.stride;
        let plane = self.d_h * self.d_w;
        let fsz = self.f_h * self.f_w;
        let filt = self.bank.filter(i);
        for m in 0..self.bank.num_channels() {
            let w = &filt[m * fsz..(m + 1) * fsz];
            for a in 0..self.f_h {
                let start = m * plane + (jr * t + a) * self.d_w + jc * t;
                let ws = &w[a * self.f_w..(a + 1) * self.f_w];
                for (o, &wv) in out[start..start + self.f_w].iter_mut().zip(ws) {
                    *o += scale * wv;
                }
            }
        }
    }

    /// Row `r` of `W` as a dense vector.
    pub fn row(&self, r: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.col_count()];
        self.add_row(r, 1.0, &mut out);
        out
    }

    /// Explicit dense matrix; intended for small test instances.
    pub fn materialize_dense(&self) -> DMatrix<f64> {
        let mut w = DMatrix::zeros(self.row_count(), self.col_count());
        for r in 0..self.row_count() {
            let row = self.row(r);
            for (c, v) in row.into_iter().enumerate() {
                w[(r, c)] = v;
            }
        }
        w
    }
}
