//! Density estimation by gradient boosting of random histogram transforms.
//!
//! The estimator is a mixture of piecewise-constant densities, each defined
//! on the cells of a randomly rotated, stretched and shifted grid. Rounds are
//! added by functional gradient steps on the negative log-likelihood with an
//! exact line search over the mixing weight.
//!
//! ```
//! use gbht::{fit_gbht_seeded, GbhtConfig, Matrix};
//!
//! let xs: Vec<f64> = (0..200).map(|i| (i as f64 * 0.37).sin()).collect();
//! let data = Matrix::column_vector(&xs);
//! let cfg = GbhtConfig { iterations: 10, ..GbhtConfig::default() };
//! let model = fit_gbht_seeded(&data, &cfg).unwrap();
//! assert!(model.density_at(&[0.0]).unwrap() > 0.0);
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anomaly;
pub mod baselines;
pub mod boost;
pub mod error;
pub mod eval;
pub mod ht;
pub mod io;
pub mod matrix;
pub mod synthetic;
pub mod transform;

pub use anomaly::{anomaly_scores, contamination_threshold, detect, score_and_flag, AnomalyResult};
pub use baselines::{fit_hde, fit_kde, hde_density_at, kde_density_at, BandwidthRule, HdeModel, KdeModel};

pub use boost::{
    boost_step, fit_gbht, fit_gbht_seeded, gbht_density_at, gbht_log_density_at, init_f0, line_search_alpha,
    mixture_weights, Booster, GbhtConfig, GbhtModel,
};
pub use error::{Error, Result};
pub use eval::{
    anll, arithmetic_grid, auc, cross_validate, evaluate, fold_partition, mae, CvResult, CvRow, EvalReport,
};
pub use ht::{fit_ht, fit_weighted_ht, ht_density_at, HtDensity, LearnerMode};
pub use io::{load_csv, load_model, minmax_scale, pca_reduce, save_model, write_csv, Dataset, PcaProjection};
pub use matrix::Matrix;
pub use synthetic::{sample_synthetic, true_pdf, SyntheticKind, SyntheticType};
pub use transform::{
    reference_scale, sample_rotation, sample_stretching, sample_transform, sample_translation, BinIndex,
    HistogramTransform, RotationMatrix, ScaleParams,
};
