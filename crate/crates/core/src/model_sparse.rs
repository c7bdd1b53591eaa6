//! Block-sparse signal model `M_k`, max pooling with switches, upsampling,
//! and the structured sparse approximation `upsample(max_pool(h), s)`.
//!
//! A hidden activation has `K` blocks (one per filter) of `n` (1-d) or
//! `n x n` (2-d) shift positions. Pooling either covers a whole block or
//! tiles it with non-overlapping `p` / `p x p` regions. Regions are numbered
//! block-major, then region-row-major; positions inside a region are
//! numbered row-major.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::Dims;

/// `K` blocks of `n^dims` positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockLayout {
    pub blocks: usize,
    pub shifts: usize,
    pub dims: Dims,
}

impl BlockLayout {
    pub fn new(blocks: usize, shifts: usize, dims: Dims) -> Self {
        Self {
            blocks,
            shifts,
            dims,
        }
    }

    pub fn block_len(&self) -> usize {
        self.dims.volume(self.shifts)
    }

    pub fn len(&self) -> usize {
        self.blocks * self.block_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Pooling {
    /// One region per filter block (pooling over all shifts).
    FullBlock,
    /// Non-overlapping `size` (1-d) or `size x size` (2-d) tiles.
    Regions { size: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolingGeometry {
    layout: BlockLayout,
    mode: Pooling,
}

impl PoolingGeometry {
    pub fn full_block(layout: BlockLayout) -> Self {
        Self {
            layout,
            mode: Pooling::FullBlock,
        }
    }

    pub fn regions(layout: BlockLayout, size: usize) -> Result<Self> {
        if size == 0 || !layout.shifts.is_multiple_of(size) {
            return Err(Error::GeometryMismatch(format!(
                "pooling size {size} does not tile {} shifts",
                layout.shifts
            )));
        }
        Ok(Self {
            layout,
            mode: Pooling::Regions { size },
        })
    }

    pub fn new(layout: BlockLayout, mode: Pooling) -> Result<Self> {
        match mode {
            Pooling::FullBlock => Ok(Self::full_block(layout)),
            Pooling::Regions { size } => Self::regions(layout, size),
        }
    }

    pub fn layout(&self) -> BlockLayout {
        self.layout
    }

    pub fn mode(&self) -> Pooling {
        self.mode
    }

    /// Side length of a pooling region.
    fn side(&self) -> usize {
        match self.mode {
            Pooling::FullBlock => self.layout.shifts,
            Pooling::Regions { size } => size,
        }
    }

    fn regions_per_side(&self) -> usize {
        self.layout.shifts / self.side()
    }

    pub fn regions_per_block(&self) -> usize {
        self.layout.dims.volume(self.regions_per_side())
    }

    pub fn region_count(&self) -> usize {
        self.layout.blocks * self.regions_per_block()
    }

    pub fn region_len(&self) -> usize {
        self.layout.dims.volume(self.side())
    }

    pub fn signal_len(&self) -> usize {
        self.layout.len()
    }

    /// Flat index of position `q` (row-major) inside region `region`.
    pub fn flat_index(&self, region: usize, q: usize) -> usize {
        let rpb = self.regions_per_block();
        let (block, r) = (region / rpb, region % rpb);
        let side = self.side();
        let n = self.layout.shifts;
        let base = block * self.layout.block_len();
        match self.layout.dims {
            Dims::One => base + r * side + q,
            Dims::Two => {
                let rps = self.regions_per_side();
                let (rr, rc) = (r / rps, r % rps);
                let (qr, qc) = (q / side, q % side);
                base + (rr * side + qr) * n + rc * side + qc
            }
        }
    }

    /// Inverse of [`flat_index`](Self::flat_index): `(region, q)`.
    pub fn region_of(&self, flat: usize) -> (usize, usize) {
        let bl = self.layout.block_len();
        let (block, p) = (flat / bl, flat % bl);
        let side = self.side();
        let rpb = self.regions_per_block();
        match self.layout.dims {
            Dims::One => (block * rpb + p / side, p % side),
            Dims::Two => {
                let n = self.layout.shifts;
                let (pr, pc) = (p / n, p % n);
                let rps = self.regions_per_side();
                let region = block * rpb + (pr / side) * rps + pc / side;
                (region, (pr % side) * side + pc % side)
            }
        }
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.signal_len() {
            return Err(Error::DimensionMismatch {
                expected: self.signal_len(),
                actual: len,
            });
        }
        Ok(())
    }
}

/// Within-region index of the retained value for each pooling region.
/// All-zero regions store index 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Switches(pub Vec<usize>);

/// Where upsampling places a pooled value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Upsampling {
    /// At the recorded switch position.
    Switches,
    /// At the first position of the region.
    Naive,
}

/// A vector of `M_k` (or its per-region analogue) with explicit support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSparseSignal {
    pub coeffs: Vec<f64>,
    /// `(block, position within block)` of every nonzero, ascending.
    pub support: Vec<(usize, usize)>,
    pub k: usize,
}

impl ModelSparseSignal {
    /// Wraps `coeffs`, deriving the support from its nonzeros.
    pub fn from_coeffs(coeffs: Vec<f64>, layout: BlockLayout, k: usize) -> Self {
        let bl = layout.block_len();
        let support = coeffs
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| (i / bl, i % bl))
            .collect();
        Self { coeffs, support, k }
    }

    pub fn zeros(layout: BlockLayout, k: usize) -> Self {
        Self {
            coeffs: vec![0.0; layout.len()],
            support: Vec::new(),
            k,
        }
    }

    pub fn nnz(&self) -> usize {
        self.support.len()
    }

    pub fn flat_support(&self, layout: BlockLayout) -> Vec<usize> {
        let bl = layout.block_len();
        self.support.iter().map(|&(b, p)| b * bl + p).collect()
    }
}

/// Draws `z` in `M_k`: `k` distinct blocks, a uniform position in each, and
/// i.i.d. `Uniform[-1, 1]` nonzero values.
pub fn sample_model_sparse<R: Rng + ?Sized>(
    layout: BlockLayout,
    k: usize,
    rng: &mut R,
) -> Result<ModelSparseSignal> {
    if k > layout.blocks {
        return Err(Error::SparsityTooLarge {
            k,
            blocks: layout.blocks,
        });
    }
    let bl = layout.block_len();
    let mut coeffs = vec![0.0; layout.len()];
    let mut blocks = sample(rng, layout.blocks, k).into_vec();
    blocks.sort_unstable();
    for b in blocks {
        let pos = rng.random_range(0..bl);
        coeffs[b * bl + pos] = nonzero_uniform(rng);
    }
    Ok(ModelSparseSignal::from_coeffs(coeffs, layout, k))
}

/// Draws a per-region sparse `z`: each pooling region is active independently
/// with probability `fraction`, holding one `Uniform[-1, 1]` value at a
/// uniform position. May return the zero vector.
pub fn sample_region_sparse<R: Rng + ?Sized>(
    geom: &PoolingGeometry,
    fraction: f64,
    rng: &mut R,
) -> Result<ModelSparseSignal> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "region fraction must be in (0, 1], got {fraction}"
        )));
    }
    let mut coeffs = vec![0.0; geom.signal_len()];
    for region in 0..geom.region_count() {
        if rng.random_bool(fraction) {
            let q = rng.random_range(0..geom.region_len());
            coeffs[geom.flat_index(region, q)] = nonzero_uniform(rng);
        }
    }
    Ok(ModelSparseSignal::from_coeffs(
        coeffs,
        geom.layout(),
        geom.region_count(),
    ))
}

fn nonzero_uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let v: f64 = rng.random_range(-1.0..=1.0);
        if v != 0.0 {
            return v;
        }
    }
}

/// Per-region value of maximum absolute value (sign kept) and its position.
/// Ties go to the lowest index.
pub fn max_pool(h: &[f64], geom: &PoolingGeometry) -> Result<(Vec<f64>, Switches)> {
    geom.check_len(h.len())?;
    let rl = geom.region_len();
    let mut pooled = Vec::with_capacity(geom.region_count());
    let mut switches = Vec::with_capacity(geom.region_count());
    for region in 0..geom.region_count() {
        let (mut best_q, mut best) = (0, h[geom.flat_index(region, 0)]);
        for q in 1..rl {
            let v = h[geom.flat_index(region, q)];
            if v.abs() > best.abs() {
                best_q = q;
                best = v;
            }
        }
        pooled.push(best);
        switches.push(best_q);
    }
    Ok((pooled, Switches(switches)))
}

/// Places pooled values back at full resolution, zeros elsewhere.
pub fn upsample(
    pooled: &[f64],
    switches: Option<&Switches>,
    mode: Upsampling,
    geom: &PoolingGeometry,
) -> Result<Vec<f64>> {
    let regions = geom.region_count();
    if pooled.len() != regions {
        return Err(Error::DimensionMismatch {
            expected: regions,
            actual: pooled.len(),
        });
    }
    let rl = geom.region_len();
    let mut out = vec![0.0; geom.signal_len()];
    for (region, &v) in pooled.iter().enumerate() {
        let q = match mode {
            Upsampling::Naive => 0,
            Upsampling::Switches => {
                let s = switches.ok_or_else(|| {
                    Error::InvalidParameter("switch upsampling requires switches".into())
                })?;
                if s.0.len() != regions {
                    return Err(Error::DimensionMismatch {
                        expected: regions,
                        actual: s.0.len(),
                    });
                }
                let q = s.0[region];
                if q >= rl {
                    return Err(Error::SwitchOutOfRange {
                        region,
                        switch: q,
                        size: rl,
                    });
                }
                q
            }
        };
        if v != 0.0 {
            out[geom.flat_index(region, q)] = v;
        }
    }
    Ok(out)
}

/// Structured sparse approximation `upsample(max_pool(h), s)` restricted to
/// the `k` regions with the largest pooled magnitudes (ties to the lowest
/// region index). `k >= region_count` disables the cap.
pub fn structured_approx(
    h: &[f64],
    k: usize,
    geom: &PoolingGeometry,
    mode: Upsampling,
) -> Result<(ModelSparseSignal, Switches)> {
    let (mut pooled, switches) = max_pool(h, geom)?;
    if k < pooled.len() {
        let mut order: Vec<usize> = (0..pooled.len()).collect();
        // stable sort keeps lower indices first among equal magnitudes
        order.sort_by(|&a, &b| pooled[b].abs().total_cmp(&pooled[a].abs()));
        for &r in &order[k..] {
            pooled[r] = 0.0;
        }
    }
    let coeffs = upsample(&pooled, Some(&switches), mode, geom)?;
    Ok((
        ModelSparseSignal::from_coeffs(coeffs, geom.layout(), k),
        switches,
    ))
}

/// The `l2`-closest point of the model to `h` (max pooling with true
/// switches followed by a global top-`k`).
pub fn project_model_sparse(
    h: &[f64],
    k: usize,
    geom: &PoolingGeometry,
) -> Result<(ModelSparseSignal, Switches)> {
    structured_approx(h, k, geom, Upsampling::Switches)
}

/// Exact membership test: at most one nonzero per pooling region and at
/// most `k` nonzeros overall.
pub fn is_model_sparse(z: &[f64], k: usize, geom: &PoolingGeometry) -> bool {
    if z.len() != geom.signal_len() {
        return false;
    }
    let mut used = vec![false; geom.region_count()];
    let mut nnz = 0;
    for (i, &v) in z.iter().enumerate() {
        if v != 0.0 {
            let (region, _) = geom.region_of(i);
            if std::mem::replace(&mut used[region], true) {
                return false;
            }
            nnz += 1;
        }
    }
    nnz <= k
}
