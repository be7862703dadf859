//! Reference estimators: Gaussian product-kernel KDE and a fixed-grid
//! histogram with Sturges' bin count.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustc_hash::FxHashMap;

use crate::error::{check_dim, Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandwidthRule {
    /// `σ · (4 / ((d + 2) n))^{1/(d+4)}` with `σ = sqrt(trace(V)/d)`.
    Silverman,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct KdeModel {
    support: Matrix,
    bandwidth: f64,
}

impl KdeModel {
    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn dim(&self) -> usize {
        self.support.ncols()
    }

    pub fn density_at(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(self.density_unchecked(x))
    }

    fn density_unchecked(&self, x: &[f64]) -> f64 {
        let h = self.bandwidth;
        let d = self.dim() as f64;
        let inv_two_h2 = 0.5 / (h * h);
        let sum: f64 = self
            .support
            .rows()
            .map(|p| {
                let r2: f64 = p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                (-r2 * inv_two_h2).exp()
            })
            .sum();
        let norm = (h * (2.0 * PI).sqrt()).powf(d);
        sum / (self.support.nrows() as f64 * norm)
    }

    pub fn densities(&self, data: &Matrix) -> Result<Vec<f64>> {
        check_dim(self.dim(), data.ncols())?;
        let d = self.dim();
        Ok(data
            .as_slice()
            .par_chunks_exact(d)
            .map(|x| self.density_unchecked(x))
            .collect())
    }
}

pub fn silverman_bandwidth(data: &Matrix) -> Result<f64> {
    let n = data.nrows();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, found: n });
    }
    let d = data.ncols() as f64;
    let sigma = data.pooled_std();
    if !(sigma > 0.0) {
        return Err(Error::DegenerateData(
            "zero spread, Silverman bandwidth undefined".into(),
        ));
    }
    Ok(sigma * (4.0 / ((d + 2.0) * n as f64)).powf(1.0 / (d + 4.0)))
}

pub fn fit_kde(data: &Matrix, rule: BandwidthRule) -> Result<KdeModel> {
    if data.ncols() == 0 {
        return Err(Error::InvalidDimension(0));
    }
    let bandwidth = match rule {
        BandwidthRule::Silverman => silverman_bandwidth(data)?,
        BandwidthRule::Fixed(h) => {
            if data.nrows() == 0 {
                return Err(Error::Empty);
            }
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::InvalidParameter(format!("bandwidth must be positive, got {h}")));
            }
            h
        }
    };
    Ok(KdeModel {
        support: data.clone(),
        bandwidth,
    })
}

pub fn kde_density_at(m: &KdeModel, x: &[f64]) -> Result<f64> {
    m.density_at(x)
}

/// Sturges' rule: `⌈log₂ n⌉ + 1`.
pub fn sturges_bins(n: usize) -> usize {
    (n as f64).log2().ceil() as usize + 1
}

/// Axis-aligned histogram over the data's bounding box.
#[derive(Debug, Clone, PartialEq)]
pub struct HdeModel {
    lo: Vec<f64>,
    hi: Vec<f64>,
    bins_per_axis: usize,
    cells: FxHashMap<Box<[i64]>, f64>,
    bin_volume: f64,
}

impl HdeModel {
    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn bins_per_axis(&self) -> usize {
        self.bins_per_axis
    }

    pub fn ranges(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.lo.iter().copied().zip(self.hi.iter().copied())
    }

    pub fn bin_volume(&self) -> f64 {
        self.bin_volume
    }

    pub fn total_mass(&self) -> f64 {
        self.cells.values().sum::<f64>() * self.bin_volume
    }

    /// Grid cell of `x`, or `None` outside the fitted box. The upper edge
    /// belongs to the last bin.
    fn cell_of(&self, x: &[f64], out: &mut [i64]) -> bool {
        let k = self.bins_per_axis;
        for (((o, v), lo), hi) in out.iter_mut().zip(x).zip(&self.lo).zip(&self.hi) {
            if !(*v >= *lo && *v <= *hi) {
                return false;
            }
            let j = ((v - lo) / (hi - lo) * k as f64).floor() as i64;
            *o = j.clamp(0, k as i64 - 1);
        }
        true
    }

    pub fn density_at(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        let mut idx = vec![0; self.dim()];
        Ok(self.density_into(x, &mut idx))
    }

    fn density_into(&self, x: &[f64], idx: &mut [i64]) -> f64 {
        if !self.cell_of(x, idx) {
            return 0.0;
        }
        self.cells.get(&idx[..]).copied().unwrap_or(0.0)
    }

    pub fn densities(&self, data: &Matrix) -> Result<Vec<f64>> {
        check_dim(self.dim(), data.ncols())?;
        let mut idx = vec![0; self.dim()];
        Ok(data.rows().map(|x| self.density_into(x, &mut idx)).collect())
    }
}

pub fn fit_hde(data: &Matrix) -> Result<HdeModel> {
    let n = data.nrows();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, found: n });
    }
    let d = data.ncols();
    if d == 0 {
        return Err(Error::InvalidDimension(0));
    }
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for x in data.rows() {
        for j in 0..d {
            lo[j] = lo[j].min(x[j]);
            hi[j] = hi[j].max(x[j]);
        }
    }
    if let Some(j) = (0..d).find(|&j| !(hi[j] > lo[j])) {
        return Err(Error::DegenerateData(format!("axis {j} has zero range")));
    }
    let k = sturges_bins(n);
    let bin_volume: f64 = lo.iter().zip(&hi).map(|(l, h)| (h - l) / k as f64).product();
    let mut model = HdeModel {
        lo,
        hi,
        bins_per_axis: k,
        cells: FxHashMap::default(),
        bin_volume,
    };
    let mut counts: FxHashMap<Box<[i64]>, usize> = FxHashMap::default();
    let mut idx = vec![0; d];
    for x in data.rows() {
        model.cell_of(x, &mut idx);
        *counts.entry(idx.clone().into_boxed_slice()).or_insert(0) += 1;
    }
    model.cells = counts
        .into_iter()
        .map(|(key, c)| (key, c as f64 / (n as f64 * bin_volume)))
        .collect();
    Ok(model)
}

pub fn hde_density_at(m: &HdeModel, x: &[f64]) -> Result<f64> {
    m.density_at(x)
}
