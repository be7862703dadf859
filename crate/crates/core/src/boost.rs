//! Gradient boosting of histogram-transform densities under the negative
//! log-likelihood loss.
//!
//! Each round reweights the training points by the reciprocal of the current
//! mixture density, fits a weak learner on a freshly drawn transform and mixes
//! it in with the step size that minimizes the training NLL:
//!
//! ```text
//! F_t = (1 − α_t) F_{t−1} + α_t f_t
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::ht::{density_from_masses, learner_masses, CellAssignment, HtDensity, LearnerMode, Probe};
use crate::matrix::Matrix;
use crate::transform::{reference_scale, sample_transform, HistogramTransform, ScaleParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbhtConfig {
    /// Number of boosting rounds `T`.
    pub iterations: usize,
    pub s_min: f64,
    pub s_max: f64,
    pub learner_mode: LearnerMode,
    /// Multiplier applied to every line-search step.
    pub shrinkage: f64,
    pub alpha_upper: f64,
    pub alpha_tolerance: f64,
    /// Floor applied before taking logs of test densities.
    pub density_floor: f64,
    pub seed: u64,
}

impl Default for GbhtConfig {
    fn default() -> Self {
        Self {
            iterations: 100,
            s_min: -1.0,
            s_max: 0.0,
            learner_mode: LearnerMode::GreedyCell,
            shrinkage: 1.0,
            alpha_upper: 1.0 - 1e-6,
            alpha_tolerance: 1e-8,
            density_floor: 1e-12,
            seed: 0,
        }
    }
}

impl GbhtConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if !(self.s_min.is_finite() && self.s_max.is_finite() && self.s_min < self.s_max) {
            return bad(format!("need s_min < s_max, got ({}, {})", self.s_min, self.s_max));
        }
        if !(self.shrinkage > 0.0 && self.shrinkage <= 1.0) {
            return bad(format!("shrinkage must lie in (0, 1], got {}", self.shrinkage));
        }
        if !(0.0..1.0).contains(&self.alpha_upper) {
            return bad(format!("alpha_upper must lie in [0, 1), got {}", self.alpha_upper));
        }
        if !(self.alpha_tolerance > 0.0) {
            return bad(format!(
                "alpha_tolerance must be positive, got {}",
                self.alpha_tolerance
            ));
        }
        if !(self.density_floor >= 0.0 && self.density_floor.is_finite()) {
            return bad(format!("density floor must be nonnegative, got {}", self.density_floor));
        }
        Ok(())
    }

    pub fn scale_params(&self, reference_scale: f64) -> Result<ScaleParams> {
        ScaleParams::new(self.s_min, self.s_max, reference_scale)
    }
}

/// Boosted mixture `w₀ F₀ + Σⱼ wⱼ fⱼ`.
#[derive(Debug, Clone, PartialEq)]
pub struct GbhtModel {
    config: GbhtConfig,
    scale_params: ScaleParams,
    f0: HtDensity,
    components: Vec<HtDensity>,
    alphas: Vec<f64>,
    mixture_weights: Vec<f64>,
    train_nll_trace: Vec<f64>,
}

impl GbhtModel {
    /// Assembles a model from stored parts, recomputing the mixture weights
    /// from the step sizes.
    pub fn from_parts(
        config: GbhtConfig,
        scale_params: ScaleParams,
        f0: HtDensity,
        components: Vec<HtDensity>,
        alphas: Vec<f64>,
        train_nll_trace: Vec<f64>,
    ) -> Result<Self> {
        if components.len() != alphas.len() {
            return Err(Error::LengthMismatch {
                expected: components.len(),
                found: alphas.len(),
            });
        }
        let d = f0.dim();
        for c in &components {
            check_dim(d, c.dim())?;
        }
        if let Some(a) = alphas.iter().find(|a| !(0.0..1.0).contains(*a)) {
            return Err(Error::InvalidParameter(format!("step size {a} outside [0, 1)")));
        }
        Ok(Self {
            config,
            scale_params,
            f0,
            components,
            mixture_weights: mixture_weights(&alphas),
            alphas,
            train_nll_trace,
        })
    }

    pub fn dim(&self) -> usize {
        self.f0.dim()
    }

    pub fn config(&self) -> &GbhtConfig {
        &self.config
    }

    pub fn scale_params(&self) -> &ScaleParams {
        &self.scale_params
    }

    pub fn f0(&self) -> &HtDensity {
        &self.f0
    }

    pub fn components(&self) -> &[HtDensity] {
        &self.components
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    /// `(w_{T,0}, …, w_{T,T})`.
    pub fn mixture_weights(&self) -> &[f64] {
        &self.mixture_weights
    }

    /// Training NLL of `F₀, F₁, …, F_T`.
    pub fn train_nll_trace(&self) -> &[f64] {
        &self.train_nll_trace
    }

    pub fn density_at(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        let mut probe = Probe::new(self.dim());
        Ok(self.density_with(x, &mut probe))
    }

    fn density_with(&self, x: &[f64], probe: &mut Probe) -> f64 {
        let mut total = self.mixture_weights[0] * self.f0.density_with(x, probe);
        for (w, f) in self.mixture_weights[1..].iter().zip(&self.components) {
            if *w > 0.0 {
                total += w * f.density_with(x, probe);
            }
        }
        total
    }

    /// Densities at every row of `data`.
    pub fn densities(&self, data: &Matrix) -> Result<Vec<f64>> {
        check_dim(self.dim(), data.ncols())?;
        let d = self.dim();
        Ok(data
            .as_slice()
            .par_chunks_exact(d)
            .map_init(|| Probe::new(d), |probe, x| self.density_with(x, probe))
            .collect())
    }

    /// `log(max(F(x), floor))` using the configured floor.
    pub fn log_density_at(&self, x: &[f64]) -> Result<f64> {
        Ok(floored_log(self.density_at(x)?, self.config.density_floor))
    }

    pub fn log_densities(&self, data: &Matrix) -> Result<Vec<f64>> {
        let floor = self.config.density_floor;
        Ok(self
            .densities(data)?
            .into_iter()
            .map(|f| floored_log(f, floor))
            .collect())
    }
}

pub(crate) fn floored_log(density: f64, floor: f64) -> f64 {
    density.max(floor).ln()
}

/// `w_{t,0} = ∏ (1 − α_j)` and `w_{t,j} = α_j ∏_{k>j} (1 − α_k)`.
pub fn mixture_weights(alphas: &[f64]) -> Vec<f64> {
    let mut weights = vec![0.0; alphas.len() + 1];
    let mut tail = 1.0;
    for (j, a) in alphas.iter().enumerate().rev() {
        weights[j + 1] = a * tail;
        tail *= 1.0 - a;
    }
    weights[0] = tail;
    weights
}

/// Uniform density on the cells of `t0` that contain data.
pub fn init_f0(data: &Matrix, t0: &HistogramTransform) -> Result<HtDensity> {
    if data.nrows() == 0 {
        return Err(Error::Empty);
    }
    check_dim(t0.dim(), data.ncols())?;
    let assign = CellAssignment::new(data, t0);
    let m = assign.cell_count() as f64;
    let masses = vec![(1.0 / m) / t0.cell_volume(); assign.cell_count()];
    Ok(density_from_masses(t0, &assign, &masses))
}

/// Step size minimizing `g(α) = Σ −log((1−α)·prevᵢ + α·candᵢ)` on
/// `[0, alpha_upper]`.
///
/// `g` is convex, so the search runs a bracketed Newton iteration on `g′`,
/// falling back to bisection whenever Newton leaves the bracket. A constant
/// objective returns 0.
pub fn line_search_alpha(prev: &[f64], cand: &[f64], cfg: &GbhtConfig) -> Result<f64> {
    if prev.len() != cand.len() {
        return Err(Error::LengthMismatch {
            expected: prev.len(),
            found: cand.len(),
        });
    }
    if let Some(p) = prev.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
        return Err(Error::Internal(format!(
            "current density {p} at a training point is not positive"
        )));
    }
    if let Some(c) = cand.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
        return Err(Error::Internal(format!(
            "candidate density {c} is not a nonnegative finite"
        )));
    }
    let upper = cfg.alpha_upper;
    let tol = cfg.alpha_tolerance;
    // Points outside the candidate's support contribute −log(1−α) each, so
    // only the rest need a per-point pass.
    let support: Vec<(f64, f64)> = prev
        .iter()
        .zip(cand)
        .filter(|(_, c)| **c > 0.0)
        .map(|(p, c)| (*p, *c))
        .collect();
    let zeros = (prev.len() - support.len()) as f64;
    // g′ and g″ at α.
    let derivatives = |alpha: f64| {
        let r0 = 1.0 / (1.0 - alpha);
        let (mut g1, mut g2) = (zeros * r0, zeros * r0 * r0);
        for (p, c) in &support {
            let r = (p - c) / (p + alpha * (c - p));
            g1 += r;
            g2 += r * r;
        }
        (g1, g2)
    };

    let (g1_lo, g2_lo) = derivatives(0.0);
    if g1_lo >= 0.0 || upper == 0.0 {
        return Ok(0.0);
    }
    if derivatives(upper).0 <= 0.0 {
        return Ok(upper);
    }
    let (mut lo, mut hi) = (0.0, upper);
    let mut alpha = newton_or_bisect(0.0, g1_lo, g2_lo, lo, hi);
    for _ in 0..200 {
        let (g1, g2) = derivatives(alpha);
        if g1 == 0.0 {
            return Ok(alpha);
        }
        if g1 < 0.0 {
            lo = alpha;
        } else {
            hi = alpha;
        }
        let next = newton_or_bisect(alpha, g1, g2, lo, hi);
        let step = (next - alpha).abs();
        alpha = next;
        if step <= tol || hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    Ok(alpha.clamp(0.0, upper))
}

fn newton_or_bisect(alpha: f64, g1: f64, g2: f64, lo: f64, hi: f64) -> f64 {
    if g2 > 0.0 {
        let next = alpha - g1 / g2;
        if next > lo && next < hi {
            return next;
        }
    }
    0.5 * (lo + hi)
}

fn mean_nll(values: &[f64]) -> f64 {
    values.iter().map(|v| -v.ln()).sum::<f64>() / values.len() as f64
}

/// Incremental boosting state over one training set.
///
/// Keeps `F_t(xᵢ)` for every training point so a round costs one binning pass
/// instead of a full model evaluation.
pub struct Booster<'a> {
    data: &'a Matrix,
    model: GbhtModel,
    values: Vec<f64>,
}

impl<'a> Booster<'a> {
    /// Computes the reference scale, draws the partition for `F₀` and
    /// initializes the mixture.
    pub fn new<R: Rng + ?Sized>(data: &'a Matrix, cfg: &GbhtConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        if data.ncols() == 0 {
            return Err(Error::InvalidDimension(0));
        }
        let params = cfg.scale_params(reference_scale(data)?)?;
        let t0 = sample_transform(rng, data.ncols(), &params)?;
        let f0 = init_f0(data, &t0)?;
        Self::from_initial(data, cfg, params, f0)
    }

    fn from_initial(data: &'a Matrix, cfg: &GbhtConfig, params: ScaleParams, f0: HtDensity) -> Result<Self> {
        let mut probe = Probe::new(f0.dim());
        let values: Vec<f64> = data.rows().map(|x| f0.density_with(x, &mut probe)).collect();
        let model = GbhtModel {
            config: *cfg,
            scale_params: params,
            f0,
            components: Vec::new(),
            alphas: Vec::new(),
            mixture_weights: vec![1.0],
            train_nll_trace: vec![mean_nll(&values)],
        };
        Ok(Self { data, model, values })
    }

    /// Resumes boosting from an existing model fitted on `data`.
    pub fn resume(data: &'a Matrix, model: GbhtModel) -> Result<Self> {
        check_dim(model.dim(), data.ncols())?;
        let values = model.densities(data)?;
        if values.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Internal("model assigns zero density to a training point".into()));
        }
        Ok(Self { data, model, values })
    }

    pub fn model(&self) -> &GbhtModel {
        &self.model
    }

    /// Current mixture density at each training point.
    pub fn train_values(&self) -> &[f64] {
        &self.values
    }

    /// One boosting round.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let cfg = self.model.config;
        let t = sample_transform(rng, self.data.ncols(), &self.model.scale_params)?;
        let weights: Vec<f64> = self.values.iter().map(|v| 1.0 / v).collect();
        let assign = CellAssignment::new(self.data, &t);
        let masses = learner_masses(&assign, Some(&weights), cfg.learner_mode, t.cell_volume());
        let cand: Vec<f64> = assign.cell_of.iter().map(|&c| masses[c]).collect();

        let mut alpha = cfg.shrinkage * line_search_alpha(&self.values, &cand, &cfg)?;
        let prev_nll = *self.model.train_nll_trace.last().expect("trace starts with F0");
        let mut nll = prev_nll;
        if alpha > 0.0 {
            let updated: Vec<f64> = self
                .values
                .iter()
                .zip(&cand)
                .map(|(p, c)| (1.0 - alpha) * p + alpha * c)
                .collect();
            let updated_nll = mean_nll(&updated);
            // Rounding can push a near-zero step uphill; reject it.
            if updated_nll <= prev_nll {
                self.values = updated;
                nll = updated_nll;
            } else {
                alpha = 0.0;
            }
        }

        self.model.components.push(density_from_masses(&t, &assign, &masses));
        self.model.alphas.push(alpha);
        self.model.mixture_weights = mixture_weights(&self.model.alphas);
        self.model.train_nll_trace.push(nll);
        Ok(())
    }

    pub fn finish(self) -> GbhtModel {
        self.model
    }
}

/// Runs one boosting round on a standalone model.
///
/// Recomputes the model density at every training point first; prefer
/// [`Booster`] for repeated rounds.
pub fn boost_step<R: Rng + ?Sized>(model: GbhtModel, data: &Matrix, rng: &mut R) -> Result<GbhtModel> {
    let mut booster = Booster::resume(data, model)?;
    booster.step(rng)?;
    Ok(booster.finish())
}

/// Fits `F₀` and runs `cfg.iterations` boosting rounds, all randomness drawn
/// from `rng`.
pub fn fit_gbht<R: Rng + ?Sized>(data: &Matrix, cfg: &GbhtConfig, rng: &mut R) -> Result<GbhtModel> {
    let mut booster = Booster::new(data, cfg, rng)?;
    for _ in 0..cfg.iterations {
        booster.step(rng)?;
    }
    Ok(booster.finish())
}

/// [`fit_gbht`] with a ChaCha stream seeded from `cfg.seed`.
pub fn fit_gbht_seeded(data: &Matrix, cfg: &GbhtConfig) -> Result<GbhtModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    fit_gbht(data, cfg, &mut rng)
}

pub fn gbht_density_at(model: &GbhtModel, x: &[f64]) -> Result<f64> {
    model.density_at(x)
}

pub fn gbht_log_density_at(model: &GbhtModel, x: &[f64], cfg: &GbhtConfig) -> Result<f64> {
    Ok(floored_log(model.density_at(x)?, cfg.density_floor))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    use super::*;
    use crate::transform::{BinIndex, RotationMatrix};

    fn cfg(iterations: usize) -> GbhtConfig {
        GbhtConfig {
            iterations,
            ..GbhtConfig::default()
        }
    }

    fn normal_sample(n: usize, d: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..n * d).map(|_| StandardNormal.sample(&mut rng)).collect();
        Matrix::new(n, d, v).unwrap()
    }

    #[test]
    fn f0_is_uniform_on_occupied_cells() {
        let t = HistogramTransform::new(RotationMatrix::identity(1), vec![1.0], vec![0.0]).unwrap();
        let f0 = init_f0(&Matrix::column_vector(&[0.5, 1.5, 1.7]), &t).unwrap();
        assert_eq!(f0.mass_of(&BinIndex(vec![0])), 0.5);
        assert_eq!(f0.mass_of(&BinIndex(vec![1])), 0.5);
        let single = init_f0(&Matrix::column_vector(&[0.1, 0.2]), &t).unwrap();
        assert_eq!(single.cells_sorted(), vec![(BinIndex(vec![0]), 1.0)]);
    }

    #[test]
    fn line_search_examples() {
        let c = GbhtConfig::default();
        assert_eq!(line_search_alpha(&[1.0, 2.0], &[1.0, 2.0], &c).unwrap(), 0.0);
        let a = line_search_alpha(&[1.0, 1.0], &[2.0, 0.5], &c).unwrap();
        assert!((a - 0.5).abs() < 1e-8, "{a}");
        assert_eq!(line_search_alpha(&[1.0, 1.0], &[1.5, 3.0], &c).unwrap(), c.alpha_upper);
        assert_eq!(line_search_alpha(&[1.0, 1.0], &[0.5, 0.0], &c).unwrap(), 0.0);
        assert!(matches!(
            line_search_alpha(&[1.0, 0.0], &[1.0, 1.0], &c),
            Err(Error::Internal(_))
        ));
    }

    #[test]
    fn mixture_weight_recurrence() {
        assert_eq!(mixture_weights(&[0.5, 0.5]), vec![0.25, 0.25, 0.5]);
        assert_eq!(mixture_weights(&[]), vec![1.0]);
        assert_eq!(mixture_weights(&[0.3, 0.0]), vec![0.7, 0.3, 0.0]);
    }

    #[test]
    fn fit_is_deterministic_and_monotone() {
        let data = normal_sample(300, 2, 1);
        let c = GbhtConfig { seed: 5, ..cfg(20) };
        let a = fit_gbht_seeded(&data, &c).unwrap();
        let b = fit_gbht_seeded(&data, &c).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.train_nll_trace().len(), 21);
        assert!(a.train_nll_trace().windows(2).all(|w| w[1] <= w[0]));
        let sum: f64 = a.mixture_weights().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert_eq!(a.mixture_weights(), &mixture_weights(a.alphas())[..]);
    }

    #[test]
    fn zero_iteration_model_equals_f0() {
        let data = normal_sample(100, 1, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let booster = Booster::new(&data, &cfg(1), &mut rng).unwrap();
        let model = booster.finish();
        for i in -40..40 {
            let x = [i as f64 / 10.0];
            assert_eq!(model.density_at(&x).unwrap(), model.f0().density_at(&x).unwrap());
        }
        assert_eq!(model.density_at(&[1e6]).unwrap(), 0.0);
    }

    #[test]
    fn boost_step_matches_booster() {
        let data = normal_sample(200, 2, 3);
        let c = cfg(3);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut booster = Booster::new(&data, &c, &mut rng).unwrap();
        booster.step(&mut rng).unwrap();
        let model = booster.model().clone();
        let mut r1 = rng.clone();
        booster.step(&mut rng).unwrap();
        let stepped = boost_step(model, &data, &mut r1).unwrap();
        assert_eq!(stepped.components(), booster.model().components());
        assert!((stepped.alphas()[1] - booster.model().alphas()[1]).abs() < 1e-9);
    }

    #[test]
    fn one_dimensional_fit_integrates_to_one() {
        let data = normal_sample(500, 1, 4);
        let model = fit_gbht_seeded(&data, &cfg(15)).unwrap();
        // Exact quadrature of a step function: sum over the pieces between
        // consecutive cell edges.
        let mut edges = Vec::new();
        for f in std::iter::once(model.f0()).chain(model.components()) {
            let (s, b) = (f.transform().scales()[0], f.transform().translation()[0]);
            for (idx, _) in f.cells_sorted() {
                let k = idx.0[0] as f64;
                edges.push((k - b) / s);
                edges.push((k + 1.0 - b) / s);
            }
        }
        edges.sort_by(f64::total_cmp);
        let integral: f64 = edges
            .windows(2)
            .map(|w| model.density_at(&[0.5 * (w[0] + w[1])]).unwrap() * (w[1] - w[0]))
            .sum();
        assert!((integral - 1.0).abs() < 1e-6, "{integral}");
    }

    #[test]
    fn log_density_floor() {
        let data = normal_sample(100, 1, 5);
        let model = fit_gbht_seeded(&data, &cfg(2)).unwrap();
        let c = GbhtConfig::default();
        let far = gbht_log_density_at(&model, &[1e9], &c).unwrap();
        assert!((far - (1e-12f64).ln()).abs() < 1e-12);
        assert!((far + 27.631).abs() < 1e-3);
        let unfloored = GbhtConfig {
            density_floor: 0.0,
            ..c
        };
        assert_eq!(
            gbht_log_density_at(&model, &[1e9], &unfloored).unwrap(),
            f64::NEG_INFINITY
        );
        assert!(model.density_at(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(GbhtConfig {
            iterations: 0,
            ..cfg(1)
        }
        .validate()
        .is_err());
        assert!(GbhtConfig {
            shrinkage: 0.0,
            ..cfg(1)
        }
        .validate()
        .is_err());
        assert!(GbhtConfig {
            alpha_upper: 1.0,
            ..cfg(1)
        }
        .validate()
        .is_err());
        assert!(GbhtConfig {
            s_min: 1.0,
            s_max: 1.0,
            ..cfg(1)
        }
        .validate()
        .is_err());
        let same = Matrix::column_vector(&[3.0, 3.0, 3.0]);
        assert!(matches!(fit_gbht_seeded(&same, &cfg(1)), Err(Error::DegenerateData(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn boosting_invariants(seed in 0u64..1000, greedy in any::<bool>(), shrinkage in 0.1..=1.0f64) {
            let data = normal_sample(120, 2, seed);
            let c = GbhtConfig {
                iterations: 8,
                learner_mode: if greedy { LearnerMode::GreedyCell } else { LearnerMode::WeightedHistogram },
                shrinkage,
                seed,
                ..GbhtConfig::default()
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut booster = Booster::new(&data, &c, &mut rng).unwrap();
            for _ in 0..c.iterations {
                booster.step(&mut rng).unwrap();
                prop_assert!(booster.train_values().iter().all(|v| *v > 0.0));
            }
            let model = booster.finish();
            prop_assert!(model.train_nll_trace().windows(2).all(|w| w[1] <= w[0]));
            prop_assert!(model.mixture_weights().iter().all(|w| *w >= 0.0));
            prop_assert!((model.mixture_weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let recomputed = mixture_weights(model.alphas());
            for (a, b) in recomputed.iter().zip(model.mixture_weights()) {
                prop_assert!((a - b).abs() <= 1e-14);
            }
            for x in data.rows() {
                prop_assert!(model.density_at(x).unwrap() > 0.0);
            }
        }
    }
}
