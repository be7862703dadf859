//! Piecewise-constant densities on the cells of one histogram transform.

use std::fmt;
use std::str::FromStr;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::matrix::Matrix;
use crate::transform::{BinIndex, BinScratch, HistogramTransform};

/// How a weak learner turns sample weights into a density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearnerMode {
    /// Cell mass proportional to the weight it collects.
    WeightedHistogram,
    /// All mass on the single cell with the largest weight per unit volume.
    #[default]
    GreedyCell,
}

impl fmt::Display for LearnerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LearnerMode::WeightedHistogram => "weighted",
            LearnerMode::GreedyCell => "greedy",
        })
    }
}

impl FromStr for LearnerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weighted" | "weighted-histogram" => Ok(LearnerMode::WeightedHistogram),
            "greedy" | "greedy-cell" => Ok(LearnerMode::GreedyCell),
            other => Err(Error::InvalidParameter(format!("unknown learner mode `{other}`"))),
        }
    }
}

/// A density that is constant on each cell of `transform`.
///
/// Only occupied cells are stored; every other cell has density zero.
#[derive(Debug, Clone, PartialEq)]
pub struct HtDensity {
    transform: HistogramTransform,
    cells: FxHashMap<Box<[i64]>, f64>,
    cell_volume: f64,
}

impl HtDensity {
    /// Rebuilds a density from stored cells, checking `Σ cⱼ μ = 1`.
    pub fn from_cells(transform: HistogramTransform, cells: Vec<(BinIndex, f64)>) -> Result<Self> {
        let d = transform.dim();
        let cell_volume = transform.cell_volume();
        let mut map = FxHashMap::default();
        for (idx, mass) in cells {
            check_dim(d, idx.0.len())?;
            if !(mass.is_finite() && mass >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "cell mass {mass} is not a nonnegative finite"
                )));
            }
            if map.insert(idx.0.into_boxed_slice(), mass).is_some() {
                return Err(Error::InvalidParameter("duplicate cell index".into()));
            }
        }
        let f = Self {
            transform,
            cells: map,
            cell_volume,
        };
        let total = f.total_mass();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "cell masses integrate to {total}, not 1"
            )));
        }
        Ok(f)
    }

    pub fn transform(&self) -> &HistogramTransform {
        &self.transform
    }

    pub fn dim(&self) -> usize {
        self.transform.dim()
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    pub fn occupied_cells(&self) -> usize {
        self.cells.len()
    }

    /// `Σⱼ cⱼ · μ(Aⱼ)`.
    pub fn total_mass(&self) -> f64 {
        let mut masses: Vec<f64> = self.cells.values().copied().collect();
        masses.sort_by(f64::total_cmp);
        masses.iter().sum::<f64>() * self.cell_volume
    }

    /// Occupied cells in lexicographic index order.
    pub fn cells_sorted(&self) -> Vec<(BinIndex, f64)> {
        let mut out: Vec<_> = self.cells.iter().map(|(k, v)| (BinIndex(k.to_vec()), *v)).collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    pub fn mass_of(&self, idx: &BinIndex) -> f64 {
        self.cells.get(idx.as_slice()).copied().unwrap_or(0.0)
    }

    pub fn density_at(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        let mut probe = Probe::new(self.dim());
        Ok(self.density_with(x, &mut probe))
    }

    pub(crate) fn density_with(&self, x: &[f64], probe: &mut Probe) -> f64 {
        self.transform.bin_index_into(x, &mut probe.scratch, &mut probe.index);
        self.cells.get(&probe.index[..]).copied().unwrap_or(0.0)
    }
}

/// Scratch space for repeated point lookups.
pub(crate) struct Probe {
    scratch: BinScratch,
    index: Vec<i64>,
}

impl Probe {
    pub(crate) fn new(d: usize) -> Self {
        Self {
            scratch: BinScratch::new(d),
            index: vec![0; d],
        }
    }
}

/// Cell membership of every row of a data set under one transform.
pub(crate) struct CellAssignment {
    /// Distinct occupied cells in order of first appearance.
    pub keys: Vec<Box<[i64]>>,
    /// `cell_of[i]` indexes `keys` for row `i`.
    pub cell_of: Vec<usize>,
}

impl CellAssignment {
    pub(crate) fn new(data: &Matrix, t: &HistogramTransform) -> Self {
        let d = t.dim();
        let mut lookup: FxHashMap<Box<[i64]>, usize> = FxHashMap::default();
        let mut keys = Vec::new();
        let mut cell_of = Vec::with_capacity(data.nrows());
        let mut probe = Probe::new(d);
        for x in data.rows() {
            t.bin_index_into(x, &mut probe.scratch, &mut probe.index);
            let id = match lookup.get(&probe.index[..]) {
                Some(&id) => id,
                None => {
                    let key: Box<[i64]> = probe.index.clone().into_boxed_slice();
                    let id = keys.len();
                    keys.push(key.clone());
                    lookup.insert(key, id);
                    id
                }
            };
            cell_of.push(id);
        }
        Self { keys, cell_of }
    }

    pub(crate) fn cell_count(&self) -> usize {
        self.keys.len()
    }
}

/// Per-cell masses from per-row weights; `None` weights means unit weights.
pub(crate) fn learner_masses(
    assign: &CellAssignment,
    weights: Option<&[f64]>,
    mode: LearnerMode,
    cell_volume: f64,
) -> Vec<f64> {
    let mut cell_weight = vec![0.0; assign.cell_count()];
    let mut total = 0.0;
    for (i, &c) in assign.cell_of.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        cell_weight[c] += w;
        total += w;
    }
    match mode {
        LearnerMode::WeightedHistogram => cell_weight.iter().map(|w| (w / total) / cell_volume).collect(),
        LearnerMode::GreedyCell => {
            // Cells share one volume, so the largest weight per unit volume is
            // the largest weight.
            let mut best = 0;
            for j in 1..cell_weight.len() {
                let better = cell_weight[j] > cell_weight[best]
                    || (cell_weight[j] == cell_weight[best] && assign.keys[j] < assign.keys[best]);
                if better {
                    best = j;
                }
            }
            let mut masses = vec![0.0; cell_weight.len()];
            masses[best] = 1.0 / cell_volume;
            masses
        }
    }
}

pub(crate) fn density_from_masses(t: &HistogramTransform, assign: &CellAssignment, masses: &[f64]) -> HtDensity {
    let cells = assign
        .keys
        .iter()
        .zip(masses)
        .filter(|(_, m)| **m > 0.0)
        .map(|(k, m)| (k.clone(), *m))
        .collect();
    HtDensity {
        transform: t.clone(),
        cells,
        cell_volume: t.cell_volume(),
    }
}

fn check_data(data: &Matrix, t: &HistogramTransform) -> Result<()> {
    if data.nrows() == 0 {
        return Err(Error::Empty);
    }
    check_dim(t.dim(), data.ncols())
}

/// Empirical histogram: `cⱼ = countⱼ / (n μ)`.
pub fn fit_ht(data: &Matrix, t: &HistogramTransform) -> Result<HtDensity> {
    check_data(data, t)?;
    let assign = CellAssignment::new(data, t);
    let masses = learner_masses(&assign, None, LearnerMode::WeightedHistogram, t.cell_volume());
    Ok(density_from_masses(t, &assign, &masses))
}

pub(crate) fn check_weights(weights: &[f64], n: usize) -> Result<()> {
    if weights.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: weights.len(),
        });
    }
    if let Some((index, &value)) = weights.iter().enumerate().find(|(_, w)| !(w.is_finite() && **w > 0.0)) {
        return Err(Error::NonPositiveWeight { index, value });
    }
    Ok(())
}

/// Weak learner fitted under positive sample weights.
pub fn fit_weighted_ht(data: &Matrix, weights: &[f64], t: &HistogramTransform, mode: LearnerMode) -> Result<HtDensity> {
    check_data(data, t)?;
    check_weights(weights, data.nrows())?;
    let assign = CellAssignment::new(data, t);
    let masses = learner_masses(&assign, Some(weights), mode, t.cell_volume());
    Ok(density_from_masses(t, &assign, &masses))
}

pub fn ht_density_at(f: &HtDensity, x: &[f64]) -> Result<f64> {
    f.density_at(x)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::transform::RotationMatrix;

    fn unit_1d() -> HistogramTransform {
        HistogramTransform::new(RotationMatrix::identity(1), vec![1.0], vec![0.0]).unwrap()
    }

    #[test]
    fn empirical_fit_counts() {
        let data = Matrix::column_vector(&[0.1, 0.2, 0.6, 1.5]);
        let f = fit_ht(&data, &unit_1d()).unwrap();
        assert_eq!(f.mass_of(&BinIndex(vec![0])), 0.75);
        assert_eq!(f.mass_of(&BinIndex(vec![1])), 0.25);
        assert_eq!(f.occupied_cells(), 2);
        assert_eq!(f.density_at(&[0.99]).unwrap(), 0.75);
        assert_eq!(f.density_at(&[1.0]).unwrap(), 0.25);
        assert_eq!(f.density_at(&[-50.0]).unwrap(), 0.0);
    }

    #[test]
    fn single_point_fit() {
        let t = HistogramTransform::new(RotationMatrix::identity(2), vec![2.0, 5.0], vec![0.3, 0.9]).unwrap();
        let data = Matrix::from_rows(&[[0.4, -1.2]]).unwrap();
        let f = fit_ht(&data, &t).unwrap();
        assert_eq!(f.occupied_cells(), 1);
        assert_eq!(f.density_at(&[0.4, -1.2]).unwrap(), 1.0 / t.cell_volume());
        assert_eq!(f.density_at(&[40.0, 40.0]).unwrap(), 0.0);
    }

    #[test]
    fn weighted_examples() {
        let data = Matrix::column_vector(&[0.5, 1.5]);
        let t = unit_1d();
        let f = fit_weighted_ht(&data, &[3.0, 1.0], &t, LearnerMode::WeightedHistogram).unwrap();
        assert_eq!(f.mass_of(&BinIndex(vec![0])), 0.75);
        assert_eq!(f.mass_of(&BinIndex(vec![1])), 0.25);
        let g = fit_weighted_ht(&data, &[3.0, 1.0], &t, LearnerMode::GreedyCell).unwrap();
        assert_eq!(g.cells_sorted(), vec![(BinIndex(vec![0]), 1.0)]);
    }

    #[test]
    fn greedy_ties_pick_smallest_index() {
        let data = Matrix::column_vector(&[2.5, -3.5, 0.5]);
        let g = fit_weighted_ht(&data, &[1.0, 1.0, 1.0], &unit_1d(), LearnerMode::GreedyCell).unwrap();
        assert_eq!(g.cells_sorted(), vec![(BinIndex(vec![-4]), 1.0)]);
    }

    #[test]
    fn weight_errors() {
        let data = Matrix::column_vector(&[0.5, 1.5]);
        let t = unit_1d();
        assert!(matches!(
            fit_weighted_ht(&data, &[1.0, 0.0], &t, LearnerMode::WeightedHistogram),
            Err(Error::NonPositiveWeight { index: 1, .. })
        ));
        assert!(matches!(
            fit_weighted_ht(&data, &[1.0], &t, LearnerMode::WeightedHistogram),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(fit_ht(&Matrix::zeros(0, 1), &t), Err(Error::Empty)));
    }

    #[test]
    fn from_cells_checks_normalization() {
        let t = unit_1d();
        assert!(HtDensity::from_cells(t.clone(), vec![(BinIndex(vec![0]), 0.5)]).is_err());
        let f = HtDensity::from_cells(t, vec![(BinIndex(vec![0]), 0.5), (BinIndex(vec![3]), 0.5)]).unwrap();
        assert_eq!(f.density_at(&[3.2]).unwrap(), 0.5);
    }

    #[test]
    fn trapezoid_integral_is_one() {
        let t = HistogramTransform::new(RotationMatrix::identity(1), vec![1.7], vec![0.37]).unwrap();
        let xs: Vec<f64> = (0..200).map(|i| ((i * 37) % 101) as f64 / 13.0 - 3.0).collect();
        let f = fit_ht(&Matrix::column_vector(&xs), &t).unwrap();
        // Integrate exactly cell by cell, then by a fine midpoint rule.
        let (lo, hi) = (-5.0, 10.0);
        let steps = 1_500_000;
        let h = (hi - lo) / steps as f64;
        let integral: f64 = (0..steps)
            .map(|i| f.density_at(&[lo + (i as f64 + 0.5) * h]).unwrap() * h)
            .sum();
        assert!((integral - 1.0).abs() < 1e-6, "{integral}");
    }

    type Case = (Vec<[f64; 2]>, Vec<f64>, [f64; 2], [f64; 2], f64);

    fn arb_case() -> impl Strategy<Value = Case> {
        (
            prop::collection::vec(prop::array::uniform2(-5.0..5.0f64), 1..60),
            prop::collection::vec(0.01..10.0f64, 60),
            prop::array::uniform2(0.2..4.0f64),
            prop::array::uniform2(0.0..1.0f64),
            0.0..std::f64::consts::TAU,
        )
    }

    fn rotation(theta: f64) -> RotationMatrix {
        let (s, c) = theta.sin_cos();
        // Rebuild from an exact orthogonal pair to stay within the checker's tolerance.
        RotationMatrix::from_row_major(2, vec![c, -s, s, c]).unwrap()
    }

    proptest! {
        #[test]
        fn normalization_and_unit_weight_reduction((rows, weights, s, b, theta) in arb_case()) {
            let t = HistogramTransform::new(rotation(theta), s.to_vec(), b.to_vec()).unwrap();
            let data = Matrix::from_rows(&rows).unwrap();
            let n = data.nrows();
            let plain = fit_ht(&data, &t).unwrap();
            prop_assert!((plain.total_mass() - 1.0).abs() < 1e-9);
            let unit = fit_weighted_ht(&data, &vec![1.0; n], &t, LearnerMode::WeightedHistogram).unwrap();
            prop_assert_eq!(plain.cells_sorted(), unit.cells_sorted());
            let weighted = fit_weighted_ht(&data, &weights[..n], &t, LearnerMode::WeightedHistogram).unwrap();
            prop_assert!((weighted.total_mass() - 1.0).abs() < 1e-9);
            let greedy = fit_weighted_ht(&data, &weights[..n], &t, LearnerMode::GreedyCell).unwrap();
            prop_assert_eq!(greedy.occupied_cells(), 1);
            prop_assert_eq!(greedy.cells_sorted()[0].1, 1.0 / t.cell_volume());
            for x in &rows {
                let idx = t.bin_index(x).unwrap();
                prop_assert_eq!(weighted.density_at(x).unwrap(), weighted.mass_of(&idx));
                prop_assert!(plain.density_at(x).unwrap() > 0.0);
            }
        }
    }
}
