//! The four synthetic benchmark families and their exact densities.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Beta, Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SyntheticType {
    /// `0.4·N(e, 0.25 I) + 0.6·N(−e, 0.25 I)` with `e = (1, …, 1)`.
    TypeI,
    /// Independent `0.7·Beta(2, 10) + 0.3·Unif(0.6, 1)` marginals.
    TypeII,
    /// Independent `0.5·Laplace(0, 0.5) + 0.5·Unif(2, 4)` marginals.
    TypeIII,
    /// `Exp(scale 0.5)` (mean 0.5) on the first `d − 1` axes, `Unif(0, 5)` on the last.
    TypeIV,
}

impl SyntheticType {
    pub const ALL: [SyntheticType; 4] = [Self::TypeI, Self::TypeII, Self::TypeIII, Self::TypeIV];
}

impl fmt::Display for SyntheticType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::TypeI => "I",
            Self::TypeII => "II",
            Self::TypeIII => "III",
            Self::TypeIV => "IV",
        })
    }
}

impl FromStr for SyntheticType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "I" | "1" => Ok(Self::TypeI),
            "II" | "2" => Ok(Self::TypeII),
            "III" | "3" => Ok(Self::TypeIII),
            "IV" | "4" => Ok(Self::TypeIV),
            other => Err(Error::InvalidParameter(format!("unknown synthetic type `{other}`"))),
        }
    }
}

/// A synthetic family at a fixed dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticKind {
    pub tag: SyntheticType,
    pub dim: usize,
}

const TYPE_I_VAR: f64 = 0.25;
const LAPLACE_SCALE: f64 = 0.5;
// Exp(0.5) read as scale 0.5, i.e. rate 2.
const EXP_RATE: f64 = 2.0;
// 1 / B(2, 10) = 11! / (1! 9!)
const BETA_2_10_NORM: f64 = 110.0;

impl SyntheticKind {
    pub fn new(tag: SyntheticType, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(0));
        }
        Ok(Self { tag, dim })
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Matrix {
        let d = self.dim;
        let mut data = Vec::with_capacity(n * d);
        let beta = Beta::new(2.0, 10.0).expect("valid beta parameters");
        let exp = Exp::new(EXP_RATE).expect("valid rate");
        for _ in 0..n {
            match self.tag {
                SyntheticType::TypeI => {
                    let centre = if rng.random::<f64>() < 0.4 { 1.0 } else { -1.0 };
                    let sd = TYPE_I_VAR.sqrt();
                    for _ in 0..d {
                        let z: f64 = rng.sample(StandardNormal);
                        data.push(centre + sd * z);
                    }
                }
                SyntheticType::TypeII => {
                    for _ in 0..d {
                        let v = if rng.random::<f64>() < 0.7 {
                            beta.sample(rng)
                        } else {
                            0.6 + 0.4 * rng.random::<f64>()
                        };
                        data.push(v);
                    }
                }
                SyntheticType::TypeIII => {
                    for _ in 0..d {
                        let v = if rng.random::<f64>() < 0.5 {
                            sample_laplace(rng, LAPLACE_SCALE)
                        } else {
                            2.0 + 2.0 * rng.random::<f64>()
                        };
                        data.push(v);
                    }
                }
                SyntheticType::TypeIV => {
                    for _ in 0..d - 1 {
                        data.push(exp.sample(rng));
                    }
                    data.push(5.0 * rng.random::<f64>());
                }
            }
        }
        Matrix::new(n, d, data).expect("buffer sized n × d")
    }

    pub fn pdf(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        Ok(match self.tag {
            SyntheticType::TypeI => {
                let d = self.dim as f64;
                let norm = (2.0 * PI * TYPE_I_VAR).powf(-0.5 * d);
                let (mut plus, mut minus) = (0.0, 0.0);
                for v in x {
                    plus += (v - 1.0) * (v - 1.0);
                    minus += (v + 1.0) * (v + 1.0);
                }
                norm * (0.4 * (-plus / (2.0 * TYPE_I_VAR)).exp() + 0.6 * (-minus / (2.0 * TYPE_I_VAR)).exp())
            }
            SyntheticType::TypeII => x.iter().map(|&v| type_ii_marginal(v)).product(),
            SyntheticType::TypeIII => x.iter().map(|&v| type_iii_marginal(v)).product(),
            SyntheticType::TypeIV => {
                let (last, rest) = x.split_last().expect("dim >= 1");
                let tail: f64 = rest.iter().map(|&v| exp_pdf(v)).product();
                tail * uniform_pdf(*last, 0.0, 5.0)
            }
        })
    }

    pub fn pdfs(&self, data: &Matrix) -> Result<Vec<f64>> {
        check_dim(self.dim, data.ncols())?;
        data.rows().map(|x| self.pdf(x)).collect()
    }

    /// Density of the `axis`-th one-dimensional marginal.
    pub fn marginal_pdf(&self, axis: usize, v: f64) -> f64 {
        match self.tag {
            SyntheticType::TypeI => {
                let norm = 1.0 / (2.0 * PI * TYPE_I_VAR).sqrt();
                norm * (0.4 * (-(v - 1.0).powi(2) / (2.0 * TYPE_I_VAR)).exp()
                    + 0.6 * (-(v + 1.0).powi(2) / (2.0 * TYPE_I_VAR)).exp())
            }
            SyntheticType::TypeII => type_ii_marginal(v),
            SyntheticType::TypeIII => type_iii_marginal(v),
            SyntheticType::TypeIV if axis + 1 == self.dim => uniform_pdf(v, 0.0, 5.0),
            SyntheticType::TypeIV => exp_pdf(v),
        }
    }
}

fn sample_laplace<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> f64 {
    // Inverse CDF on u ∈ (−1/2, 1/2).
    let u = rng.random::<f64>() - 0.5;
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

fn uniform_pdf(v: f64, lo: f64, hi: f64) -> f64 {
    if (lo..=hi).contains(&v) {
        1.0 / (hi - lo)
    } else {
        0.0
    }
}

fn exp_pdf(v: f64) -> f64 {
    if v >= 0.0 {
        EXP_RATE * (-EXP_RATE * v).exp()
    } else {
        0.0
    }
}

fn type_ii_marginal(v: f64) -> f64 {
    let beta = if (0.0..=1.0).contains(&v) {
        BETA_2_10_NORM * v * (1.0 - v).powi(9)
    } else {
        0.0
    };
    0.7 * beta + 0.3 * uniform_pdf(v, 0.6, 1.0)
}

fn type_iii_marginal(v: f64) -> f64 {
    let laplace = (-v.abs() / LAPLACE_SCALE).exp() / (2.0 * LAPLACE_SCALE);
    0.5 * laplace + 0.5 * uniform_pdf(v, 2.0, 4.0)
}

pub fn sample_synthetic<R: Rng + ?Sized>(kind: &SyntheticKind, n: usize, rng: &mut R) -> Matrix {
    kind.sample(n, rng)
}

pub fn true_pdf(kind: &SyntheticKind, x: &[f64]) -> Result<f64> {
    kind.pdf(x)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn kind(tag: SyntheticType, dim: usize) -> SyntheticKind {
        SyntheticKind::new(tag, dim).unwrap()
    }

    #[test]
    fn pdf_examples() {
        assert!((kind(SyntheticType::TypeIII, 1).pdf(&[0.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!((kind(SyntheticType::TypeIV, 2).pdf(&[0.0, 2.5]).unwrap() - 0.4).abs() < 1e-15);
        let f = kind(SyntheticType::TypeI, 2).pdf(&[1.0, 1.0]).unwrap();
        let expected = 0.4 / (2.0 * PI * 0.25) + 0.6 / (2.0 * PI * 0.25) * (-16f64).exp();
        assert!((f - expected).abs() < 1e-15);
        assert!((f - 0.254648).abs() < 1e-6);
    }

    #[test]
    fn pdf_vanishes_outside_support() {
        let ii = kind(SyntheticType::TypeII, 2);
        assert_eq!(ii.pdf(&[1.2, 0.5]).unwrap(), 0.0);
        assert_eq!(ii.pdf(&[-0.1, 0.5]).unwrap(), 0.0);
        let iv = kind(SyntheticType::TypeIV, 3);
        assert_eq!(iv.pdf(&[1.0, 1.0, 5.5]).unwrap(), 0.0);
        assert_eq!(iv.pdf(&[-1.0, 1.0, 2.0]).unwrap(), 0.0);
        assert!(iv.pdf(&[1.0, 1.0]).is_err());
    }

    #[test]
    fn sampler_supports() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ii = kind(SyntheticType::TypeII, 4).sample(5000, &mut rng);
        assert!(ii.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        let iv = kind(SyntheticType::TypeIV, 3).sample(5000, &mut rng);
        for r in iv.rows() {
            assert!(r[0] >= 0.0 && r[1] >= 0.0 && (0.0..=5.0).contains(&r[2]));
        }
    }

    #[test]
    fn type_i_mixture_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let data = kind(SyntheticType::TypeI, 2).sample(100_000, &mut rng);
        for m in data.column_means() {
            assert!((m + 0.2).abs() < 0.02, "{m}");
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let k = kind(SyntheticType::TypeIII, 3);
        let a = k.sample(50, &mut ChaCha8Rng::seed_from_u64(3));
        let b = k.sample(50, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
    }

    #[test]
    fn parse_tags() {
        assert_eq!("III".parse::<SyntheticType>().unwrap(), SyntheticType::TypeIII);
        assert!("V".parse::<SyntheticType>().is_err());
        assert!(SyntheticKind::new(SyntheticType::TypeI, 0).is_err());
    }
}
