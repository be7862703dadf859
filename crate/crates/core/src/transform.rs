//! Random histogram transforms `H(x) = R · S · x + b`.
//!
//! A transform pulls the integer lattice back into input space: the cell of
//! `x` is labelled by `⌊H(x)⌋`, and every cell is a parallelepiped of volume
//! `∏ 1/sᵢ`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::matrix::Matrix;

/// Proper rotation stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationMatrix {
    dim: usize,
    entries: Vec<f64>,
}

impl RotationMatrix {
    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![0.0; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = 1.0;
        }
        Self { dim, entries }
    }

    /// Wraps row-major entries, checking orthogonality and orientation to
    /// within `1e-10`.
    pub fn from_row_major(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(0));
        }
        if entries.len() != dim * dim {
            return Err(Error::LengthMismatch {
                expected: dim * dim,
                found: entries.len(),
            });
        }
        let r = Self { dim, entries };
        if r.orthogonality_error() > 1e-10 || (r.determinant() - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidParameter(
                "rotation matrix is not a proper orthogonal matrix".into(),
            ));
        }
        Ok(r)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.entries)
    }

    /// Largest absolute entry of `RᵀR − I`.
    pub fn orthogonality_error(&self) -> f64 {
        let r = self.to_nalgebra();
        let gram = r.transpose() * &r - DMatrix::<f64>::identity(self.dim, self.dim);
        gram.amax()
    }

    pub fn determinant(&self) -> f64 {
        self.to_nalgebra().determinant()
    }
}

/// Log-scale bounds for the stretching prior, anchored at a reference scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleParams {
    pub s_min: f64,
    pub s_max: f64,
    pub reference_scale: f64,
}

impl ScaleParams {
    pub fn new(s_min: f64, s_max: f64, reference_scale: f64) -> Result<Self> {
        let p = Self {
            s_min,
            s_max,
            reference_scale,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s_min.is_finite() && self.s_max.is_finite() && self.s_min < self.s_max) {
            return Err(Error::InvalidParameter(format!(
                "need finite s_min < s_max, got ({}, {})",
                self.s_min, self.s_max
            )));
        }
        if !(self.reference_scale.is_finite() && self.reference_scale > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "reference scale must be positive, got {}",
                self.reference_scale
            )));
        }
        Ok(())
    }

    /// `[log s̲₀, log s̄₀]`.
    pub fn log_scale_bounds(&self) -> (f64, f64) {
        let anchor = self.reference_scale.ln();
        (self.s_min + anchor, self.s_max + anchor)
    }

    /// Smallest and largest admissible bin widths `(h̲₀, h̄₀)`.
    pub fn bin_width_bounds(&self) -> (f64, f64) {
        let (lo, hi) = self.log_scale_bounds();
        ((-hi).exp(), (-lo).exp())
    }
}

/// Integer label of a transformed cell.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BinIndex(pub Vec<i64>);

impl BinIndex {
    pub fn as_slice(&self) -> &[i64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramTransform {
    rotation: RotationMatrix,
    scales: Vec<f64>,
    translation: Vec<f64>,
}

impl HistogramTransform {
    pub fn new(rotation: RotationMatrix, scales: Vec<f64>, translation: Vec<f64>) -> Result<Self> {
        let d = rotation.dim();
        check_dim(d, scales.len())?;
        check_dim(d, translation.len())?;
        if let Some(s) = scales
            .iter()
            .find(|s| !(s.is_finite() && **s > 0.0 && (1.0 / **s).is_finite()))
        {
            return Err(Error::InvalidParameter(format!("scale {s} is not a finite positive")));
        }
        if let Some(b) = translation.iter().find(|b| !(0.0..1.0).contains(*b)) {
            return Err(Error::InvalidParameter(format!("translation {b} outside [0, 1)")));
        }
        Ok(Self {
            rotation,
            scales,
            translation,
        })
    }

    /// Axis-aligned transform `x ↦ S·x + b` without range checks on `b`.
    ///
    /// Used to express fixed grids (such as Sturges histograms) as
    /// histogram transforms.
    pub fn axis_aligned(scales: Vec<f64>, offset: Vec<f64>) -> Result<Self> {
        check_dim(scales.len(), offset.len())?;
        if scales.is_empty() {
            return Err(Error::InvalidDimension(0));
        }
        Ok(Self {
            rotation: RotationMatrix::identity(scales.len()),
            scales,
            translation: offset,
        })
    }

    pub fn dim(&self) -> usize {
        self.scales.len()
    }

    pub fn rotation(&self) -> &RotationMatrix {
        &self.rotation
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn translation(&self) -> &[f64] {
        &self.translation
    }

    pub fn bin_widths(&self) -> Vec<f64> {
        self.scales.iter().map(|s| 1.0 / s).collect()
    }

    /// `R·(S·x) + b`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        let mut out = vec![0.0; self.dim()];
        let mut scratch = vec![0.0; self.dim()];
        self.apply_into(x, &mut scratch, &mut out);
        Ok(out)
    }

    /// Unchecked form of [`apply`](Self::apply); all slices have length `dim`.
    pub(crate) fn apply_into(&self, x: &[f64], scaled: &mut [f64], out: &mut [f64]) {
        let d = self.dim();
        for ((z, xi), si) in scaled.iter_mut().zip(x).zip(&self.scales) {
            *z = si * xi;
        }
        let rot = self.rotation.entries();
        for (k, o) in out.iter_mut().enumerate() {
            let row = &rot[k * d..(k + 1) * d];
            let mut acc = 0.0;
            for (r, z) in row.iter().zip(scaled.iter()) {
                acc += r * z;
            }
            *o = acc + self.translation[k];
        }
    }

    /// Cell label `⌊H(x)⌋`.
    pub fn bin_index(&self, x: &[f64]) -> Result<BinIndex> {
        check_dim(self.dim(), x.len())?;
        let mut idx = vec![0; self.dim()];
        let mut scratch = BinScratch::new(self.dim());
        self.bin_index_into(x, &mut scratch, &mut idx);
        Ok(BinIndex(idx))
    }

    pub(crate) fn bin_index_into(&self, x: &[f64], scratch: &mut BinScratch, idx: &mut [i64]) {
        self.apply_into(x, &mut scratch.scaled, &mut scratch.image);
        for (i, v) in idx.iter_mut().zip(&scratch.image) {
            *i = v.floor() as i64;
        }
    }

    /// Volume `∏ 1/sᵢ` shared by every cell.
    pub fn cell_volume(&self) -> f64 {
        self.scales.iter().map(|s| 1.0 / s).product()
    }
}

/// Reusable buffers for repeated binning.
pub(crate) struct BinScratch {
    scaled: Vec<f64>,
    image: Vec<f64>,
}

impl BinScratch {
    pub(crate) fn new(d: usize) -> Self {
        Self {
            scaled: vec![0.0; d],
            image: vec![0.0; d],
        }
    }
}

/// Haar-distributed proper rotation.
///
/// Draws a `d × d` standard normal matrix row by row, takes its QR
/// factorization, flips columns so the triangular factor has a positive
/// diagonal and finally negates the first column if the determinant is
/// negative. For `d = 1` the only proper rotation is `[[1]]`; no variates are
/// consumed in that case.
pub fn sample_rotation<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Result<RotationMatrix> {
    if d == 0 {
        return Err(Error::InvalidDimension(0));
    }
    if d == 1 {
        return Ok(RotationMatrix::identity(1));
    }
    let draws: Vec<f64> = (0..d * d).map(|_| rng.sample(StandardNormal)).collect();
    let m = DMatrix::from_row_slice(d, d, &draws);
    let qr = m.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    if q.determinant() < 0.0 {
        q.column_mut(0).neg_mut();
    }
    let mut entries = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            entries.push(q[(i, j)]);
        }
    }
    Ok(RotationMatrix { dim: d, entries })
}

/// Data-driven reference scale `ŝ = (3.5σ)⁻¹ n^{1/(2+d)}`, with
/// `σ = sqrt(trace(V)/d)` from the `n − 1` divisor covariance.
pub fn reference_scale(data: &Matrix) -> Result<f64> {
    let n = data.nrows();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, found: n });
    }
    let d = data.ncols();
    if d == 0 {
        return Err(Error::InvalidDimension(0));
    }
    if data.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("data contains non-finite values".into()));
    }
    let sigma = data.pooled_std();
    if !(sigma > 0.0) {
        return Err(Error::DegenerateData("all rows are identical (sigma = 0)".into()));
    }
    Ok((n as f64).powf(1.0 / (2.0 + d as f64)) / (3.5 * sigma))
}

/// Independent log-uniform scales on `[s_min + log ŝ, s_max + log ŝ]`.
pub fn sample_stretching<R: Rng + ?Sized>(rng: &mut R, d: usize, params: &ScaleParams) -> Result<Vec<f64>> {
    params.validate()?;
    let (lo, hi) = params.log_scale_bounds();
    Ok((0..d)
        .map(|_| {
            let u: f64 = rng.random();
            (lo + u * (hi - lo)).min(hi).exp()
        })
        .collect())
}

/// I.i.d. `Unif[0, 1)` offsets.
pub fn sample_translation<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random::<f64>()).collect()
}

/// Rotation, then stretching, then translation, all from `rng`.
pub fn sample_transform<R: Rng + ?Sized>(rng: &mut R, d: usize, params: &ScaleParams) -> Result<HistogramTransform> {
    let rotation = sample_rotation(rng, d)?;
    let scales = sample_stretching(rng, d, params)?;
    let translation = sample_translation(rng, d);
    HistogramTransform::new(rotation, scales, translation)
}
