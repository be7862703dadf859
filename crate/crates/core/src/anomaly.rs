//! Density-threshold anomaly detection over a fitted model.

use crate::boost::GbhtModel;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyResult {
    /// Negated model density; larger means more anomalous.
    pub scores: Vec<f64>,
    pub flags: Vec<bool>,
    pub threshold: f64,
}

pub fn anomaly_scores(model: &GbhtModel, data: &Matrix) -> Result<Vec<f64>> {
    Ok(model.densities(data)?.into_iter().map(|f| -f).collect())
}

fn check_threshold(rho: f64) -> Result<()> {
    if !(rho >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "density threshold must be nonnegative, got {rho}"
        )));
    }
    Ok(())
}

/// Flags every row whose model density is at most `rho`.
pub fn detect(model: &GbhtModel, data: &Matrix, rho: f64) -> Result<Vec<bool>> {
    check_threshold(rho)?;
    Ok(model.densities(data)?.into_iter().map(|f| f <= rho).collect())
}

/// Scores and flags in one pass.
pub fn score_and_flag(model: &GbhtModel, data: &Matrix, rho: f64) -> Result<AnomalyResult> {
    check_threshold(rho)?;
    let densities = model.densities(data)?;
    Ok(AnomalyResult {
        flags: densities.iter().map(|f| *f <= rho).collect(),
        scores: densities.iter().map(|f| -f).collect(),
        threshold: rho,
    })
}

/// Empirical `q`-quantile of `densities`: the `⌈q n⌉`-th smallest value, or 0
/// when `q n < 1`. Thresholding at it flags roughly a `q` fraction.
pub fn contamination_threshold(densities: &[f64], q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidParameter(format!(
            "contamination must lie in [0, 1], got {q}"
        )));
    }
    if densities.is_empty() {
        return Err(Error::Empty);
    }
    let mut sorted = densities.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = (q * sorted.len() as f64).ceil() as usize;
    Ok(if k == 0 { 0.0 } else { sorted[k.min(sorted.len()) - 1] })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    use super::*;
    use crate::boost::{fit_gbht_seeded, GbhtConfig};
    use crate::eval::auc;

    fn model_and_data() -> (GbhtModel, Matrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let v: Vec<f64> = (0..400).map(|_| StandardNormal.sample(&mut rng)).collect();
        let data = Matrix::new(200, 2, v).unwrap();
        let cfg = GbhtConfig {
            iterations: 10,
            ..GbhtConfig::default()
        };
        (fit_gbht_seeded(&data, &cfg).unwrap(), data)
    }

    #[test]
    fn scores_are_negated_densities() {
        let (model, data) = model_and_data();
        let far = Matrix::from_rows(&[[100.0, 100.0], [0.0, 0.0]]).unwrap();
        let s = anomaly_scores(&model, &far).unwrap();
        assert_eq!(s[0], 0.0);
        assert!(s[1] < 0.0);
        let scores = anomaly_scores(&model, &data).unwrap();
        assert!(scores.iter().all(|s| *s < 0.0));
    }

    #[test]
    fn thresholds() {
        let (model, data) = model_and_data();
        let mut probe = data.clone().into_vec();
        probe.extend_from_slice(&[50.0, 50.0]);
        let probe = Matrix::new(201, 2, probe).unwrap();
        let zero = detect(&model, &probe, 0.0).unwrap();
        assert_eq!(zero.iter().filter(|f| **f).count(), 1);
        assert!(zero[200]);
        assert!(detect(&model, &probe, f64::MAX).unwrap().iter().all(|f| *f));
        assert!(detect(&model, &probe, -1.0).is_err());

        let densities = model.densities(&data).unwrap();
        let mut sorted = densities.clone();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[99];
        let flagged = detect(&model, &data, median).unwrap().iter().filter(|f| **f).count();
        assert_eq!(flagged, densities.iter().filter(|f| **f <= median).count());
        assert!(flagged >= 100);
    }

    #[test]
    fn monotone_in_threshold() {
        let (model, data) = model_and_data();
        let densities = model.densities(&data).unwrap();
        let scores = anomaly_scores(&model, &data).unwrap();
        let mut prev = vec![false; data.nrows()];
        for q in [0.0, 0.05, 0.2, 0.5, 0.9, 1.0] {
            let rho = contamination_threshold(&densities, q).unwrap();
            let r = score_and_flag(&model, &data, rho).unwrap();
            for i in 0..data.nrows() {
                assert!(!prev[i] || r.flags[i]);
                assert_eq!(r.flags[i], scores[i] >= -rho);
            }
            prev = r.flags;
        }
        assert!(prev.iter().all(|f| *f));
    }

    #[test]
    fn log_scores_give_same_auc() {
        let (model, _) = model_and_data();
        let pts: Vec<[f64; 2]> = (0..10).map(|i| [i as f64 * 0.45 - 1.0, (i % 3) as f64 - 1.0]).collect();
        let pts = Matrix::from_rows(&pts).unwrap();
        let labels = [false, true, false, false, true, false, true, false, false, true];
        let raw = anomaly_scores(&model, &pts).unwrap();
        let floor = model.config().density_floor;
        let logged: Vec<f64> = raw.iter().map(|s| -(-s).max(floor).ln()).collect();
        assert_eq!(auc(&raw, &labels).unwrap(), auc(&logged, &labels).unwrap());
    }

    #[test]
    fn contamination_quantile() {
        let d = [0.5, 0.1, 0.3, 0.2];
        assert_eq!(contamination_threshold(&d, 0.0).unwrap(), 0.0);
        assert_eq!(contamination_threshold(&d, 0.25).unwrap(), 0.1);
        assert_eq!(contamination_threshold(&d, 0.3).unwrap(), 0.2);
        assert_eq!(contamination_threshold(&d, 1.0).unwrap(), 0.5);
        assert!(contamination_threshold(&d, 1.5).is_err());
    }
}
