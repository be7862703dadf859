//! Accuracy metrics and cross-validated selection of the scale range.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boost::{fit_gbht, GbhtConfig, GbhtModel};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::synthetic::SyntheticKind;

pub const REPORT_FORMAT: u32 = 1;

/// Mean absolute error between estimated and true densities.
pub fn mae(estimates: &[f64], truths: &[f64]) -> Result<f64> {
    if estimates.len() != truths.len() {
        return Err(Error::LengthMismatch {
            expected: truths.len(),
            found: estimates.len(),
        });
    }
    if estimates.is_empty() {
        return Err(Error::Empty);
    }
    let total: f64 = estimates.iter().zip(truths).map(|(e, t)| (e - t).abs()).sum();
    Ok(total / estimates.len() as f64)
}

/// Average negative log-likelihood from per-point log densities.
pub fn anll(log_densities: &[f64]) -> Result<f64> {
    if log_densities.is_empty() {
        return Err(Error::Empty);
    }
    Ok(-log_densities.iter().sum::<f64>() / log_densities.len() as f64)
}

/// Area under the ROC curve via the Mann–Whitney statistic.
///
/// Larger scores mean "more likely positive". Tied scores receive their
/// average rank, which gives half credit to tied positive/negative pairs.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: labels.len(),
            found: scores.len(),
        });
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::InvalidParameter(format!("score {s} is not comparable")));
    }
    let n_pos = labels.iter().filter(|l| **l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidParameter(
            "AUC needs both positive and negative labels".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j share their mean
        let mean_rank = (i + 1 + j) as f64 / 2.0;
        let positives = order[i..j].iter().filter(|&&k| labels[k]).count();
        pos_rank_sum += mean_rank * positives as f64;
        i = j;
    }
    let n_pos_f = n_pos as f64;
    Ok((pos_rank_sum - n_pos_f * (n_pos_f + 1.0) / 2.0) / (n_pos_f * n_neg as f64))
}

/// Metrics of one model on one test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub anll: f64,
    pub mae: Option<f64>,
    pub auc: Option<f64>,
    pub n_test: usize,
    pub config: serde_json::Value,
    pub format: u32,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// ANLL (and MAE against `truth`, when given) of `model` on `test`.
pub fn evaluate(model: &GbhtModel, test: &Matrix, truth: Option<&SyntheticKind>) -> Result<EvalReport> {
    let densities = model.densities(test)?;
    let floor = model.config().density_floor;
    let logs: Vec<f64> = densities.iter().map(|f| f.max(floor).ln()).collect();
    let mae = match truth {
        Some(kind) => Some(mae(&densities, &kind.pdfs(test)?)?),
        None => None,
    };
    Ok(EvalReport {
        anll: anll(&logs)?,
        mae,
        auc: None,
        n_test: test.nrows(),
        config: serde_json::to_value(model.config()).expect("config serializes"),
        format: REPORT_FORMAT,
    })
}

/// One `(s_min, s_max)` candidate with its per-fold validation ANLL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub s_min: f64,
    pub gap: f64,
    pub s_max: f64,
    pub fold_anll: Vec<f64>,
    pub mean_anll: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub folds: usize,
    pub rows: Vec<CvRow>,
    pub chosen_s_min: f64,
    pub chosen_s_max: f64,
}

impl CvResult {
    pub fn chosen_row(&self) -> &CvRow {
        &self.rows[argmin_row(&self.rows)]
    }
}

/// First row (in table order) attaining the smallest mean ANLL. NaN never
/// wins.
pub(crate) fn argmin_row(rows: &[CvRow]) -> usize {
    let mut best = 0;
    for (i, r) in rows.iter().enumerate().skip(1) {
        let cur = rows[best].mean_anll;
        if r.mean_anll < cur || (cur.is_nan() && !r.mean_anll.is_nan()) {
            best = i;
        }
    }
    best
}

/// Row indices of each fold after a uniform random permutation; sizes differ
/// by at most one.
pub fn fold_partition<R: Rng + ?Sized>(n: usize, folds: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    (0..folds)
        .map(|f| perm[f * n / folds..(f + 1) * n / folds].to_vec())
        .collect()
}

/// `start:step:stop` inclusive arithmetic grid.
pub fn arithmetic_grid(start: f64, step: f64, stop: f64) -> Result<Vec<f64>> {
    if !(start.is_finite() && step.is_finite() && stop.is_finite()) || step <= 0.0 || stop < start {
        return Err(Error::InvalidParameter(format!("bad grid {start}:{step}:{stop}")));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|k| start + step * k as f64).collect())
}

/// K-fold grid search over `s_min` and `s_max − s_min` by validation ANLL.
///
/// Every grid point sees the same folds and, per fold, the same random
/// stream, so identical configurations score identically. The table is in
/// grid order (`s_min` outer, gap inner) and ties go to the earlier row.
pub fn cross_validate<R: Rng + ?Sized>(
    data: &Matrix,
    base_cfg: &GbhtConfig,
    smin_grid: &[f64],
    gap_grid: &[f64],
    folds: usize,
    rng: &mut R,
) -> Result<CvResult> {
    if smin_grid.is_empty() || gap_grid.is_empty() {
        return Err(Error::InvalidParameter("cross-validation grid is empty".into()));
    }
    if folds < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 folds, got {folds}")));
    }
    if data.nrows() < folds {
        return Err(Error::InsufficientData {
            needed: folds,
            found: data.nrows(),
        });
    }
    if let Some(g) = gap_grid.iter().find(|g| !(**g > 0.0)) {
        return Err(Error::InvalidParameter(format!("gap {g} must be positive")));
    }
    let parts = fold_partition(data.nrows(), folds, rng);
    let stream_seed: u64 = rng.random();
    let splits: Vec<(Matrix, Matrix)> = (0..folds)
        .map(|f| {
            let train: Vec<usize> = parts
                .iter()
                .enumerate()
                .filter(|(g, _)| *g != f)
                .flat_map(|(_, p)| p.iter().copied())
                .collect();
            (data.select_rows(&train), data.select_rows(&parts[f]))
        })
        .collect();

    let grid: Vec<(f64, f64)> = smin_grid
        .iter()
        .flat_map(|&s| gap_grid.iter().map(move |&g| (s, g)))
        .collect();
    let jobs: Vec<(usize, usize)> = (0..grid.len()).flat_map(|g| (0..folds).map(move |f| (g, f))).collect();
    let scores: Vec<f64> = jobs
        .par_iter()
        .map(|&(g, f)| {
            let (s_min, gap) = grid[g];
            let cfg = GbhtConfig {
                s_min,
                s_max: s_min + gap,
                ..*base_cfg
            };
            let mut stream = ChaCha8Rng::seed_from_u64(stream_seed);
            stream.set_stream(f as u64);
            let (train, valid) = &splits[f];
            let model = fit_gbht(train, &cfg, &mut stream)?;
            anll(&model.log_densities(valid)?)
        })
        .collect::<Result<_>>()?;

    let rows: Vec<CvRow> = grid
        .iter()
        .enumerate()
        .map(|(g, &(s_min, gap))| {
            let fold_anll = scores[g * folds..(g + 1) * folds].to_vec();
            let mean_anll = fold_anll.iter().sum::<f64>() / folds as f64;
            CvRow {
                s_min,
                gap,
                s_max: s_min + gap,
                fold_anll,
                mean_anll,
            }
        })
        .collect();
    let best = argmin_row(&rows);
    Ok(CvResult {
        folds,
        chosen_s_min: rows[best].s_min,
        chosen_s_max: rows[best].s_max,
        rows,
    })
}
