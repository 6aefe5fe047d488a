//! Parametric families behind the class-conditional feature model.
//!
//! Four families are used: [`Bernoulli`] (gender, clinical code indicators),
//! [`Categorical`] (age decade, region, specialty), [`Poisson`] (patient
//! counts, shifted code frequencies) and a multivariate [`Gaussian`] over the
//! standardized claims features. Every density is evaluated in natural-log
//! space; products over dozens of features underflow otherwise.
//!
//! Fitting is closed-form maximum likelihood. Bernoulli and categorical fits
//! take an additive smoothing constant so that no fitted probability is
//! exactly zero.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;
use thiserror::Error;

/// Default additive smoothing for Bernoulli and categorical fits.
pub const DEFAULT_SMOOTHING: f64 = 1.0;

/// Smallest Poisson rate a fit may return.
pub const POISSON_RATE_FLOOR: f64 = 1e-6;

/// First diagonal jitter tried when a covariance fails to factorize.
pub const COVARIANCE_JITTER: f64 = 1e-6;

const MAX_JITTER_DOUBLINGS: usize = 64;
const PROB_SUM_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistError {
    #[error("{feature}: value {value} is outside the support")]
    OutOfSupport { feature: String, value: String },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("covariance matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("cannot fit {family} parameters to an empty sample")]
    EmptySample { family: &'static str },
    #[error("gaussian fit needs at least {needed} samples but got {got}; fall back to pooled parameters")]
    TooFewSamples { needed: usize, got: usize },
}

impl DistError {
    /// Attach a feature name to a support error raised by a bare family.
    pub fn for_feature(self, name: &str) -> Self {
        match self {
            DistError::OutOfSupport { value, .. } => DistError::OutOfSupport {
                feature: name.to_string(),
                value,
            },
            other => other,
        }
    }
}

fn check_probability(p: f64) -> Result<(), DistError> {
    if p.is_finite() && (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(DistError::InvalidParam(format!("probability {p} not in [0, 1]")))
    }
}

fn check_smoothing(smoothing: f64) -> Result<(), DistError> {
    if smoothing.is_finite() && smoothing >= 0.0 {
        Ok(())
    } else {
        Err(DistError::InvalidParam(format!(
            "smoothing {smoothing} must be finite and nonnegative"
        )))
    }
}

/// `ln(p)` with the convention `ln(0) = -inf`.
#[inline]
fn ln_prob(p: f64) -> f64 {
    if p > 0.0 {
        p.ln()
    } else {
        f64::NEG_INFINITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bernoulli {
    pub p: f64,
}

impl Bernoulli {
    pub fn new(p: f64) -> Result<Self, DistError> {
        check_probability(p)?;
        Ok(Self { p })
    }

    #[inline]
    pub fn log_density(&self, value: bool) -> f64 {
        if value {
            ln_prob(self.p)
        } else {
            ln_prob(1.0 - self.p)
        }
    }

    /// `p = (k + s) / (n + 2s)` from `k` successes in `n` trials.
    pub fn fit_counts(successes: usize, trials: usize, smoothing: f64) -> Result<Self, DistError> {
        check_smoothing(smoothing)?;
        if trials == 0 {
            return Err(DistError::EmptySample { family: "bernoulli" });
        }
        if successes > trials {
            return Err(DistError::InvalidParam(format!(
                "{successes} successes out of {trials} trials"
            )));
        }
        let p = (successes as f64 + smoothing) / (trials as f64 + 2.0 * smoothing);
        Self::new(p)
    }

    pub fn fit(observations: &[bool], smoothing: f64) -> Result<Self, DistError> {
        let k = observations.iter().filter(|&&b| b).count();
        Self::fit_counts(k, observations.len(), smoothing)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> bool {
        rng.random::<f64>() < self.p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Categorical {
    pub probs: Vec<f64>,
}

impl Categorical {
    pub fn new(probs: Vec<f64>) -> Result<Self, DistError> {
        if probs.is_empty() {
            return Err(DistError::InvalidParam("categorical with no categories".into()));
        }
        for &p in &probs {
            check_probability(p)?;
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(DistError::InvalidParam(format!(
                "categorical probabilities sum to {total}"
            )));
        }
        Ok(Self { probs })
    }

    /// Normalizes nonnegative weights into a distribution.
    pub fn from_weights(weights: &[f64]) -> Result<Self, DistError> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(DistError::InvalidParam("weights must be nonnegative with a positive sum".into()));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn num_categories(&self) -> usize {
        self.probs.len()
    }

    pub fn log_density(&self, index: usize) -> Result<f64, DistError> {
        match self.probs.get(index) {
            Some(&p) => Ok(ln_prob(p)),
            None => Err(DistError::OutOfSupport {
                feature: "categorical".into(),
                value: format!("{index} (categories: {})", self.probs.len()),
            }),
        }
    }

    /// `probs[c] = (count_c + s) / (n + C s)`.
    pub fn fit_counts(counts: &[usize], smoothing: f64) -> Result<Self, DistError> {
        check_smoothing(smoothing)?;
        let n: usize = counts.iter().sum();
        if n == 0 {
            return Err(DistError::EmptySample { family: "categorical" });
        }
        let denom = n as f64 + counts.len() as f64 * smoothing;
        Self::new(counts.iter().map(|&c| (c as f64 + smoothing) / denom).collect())
    }

    pub fn fit(observations: &[usize], num_categories: usize, smoothing: f64) -> Result<Self, DistError> {
        let mut counts = vec![0usize; num_categories];
        for &obs in observations {
            match counts.get_mut(obs) {
                Some(c) => *c += 1,
                None => {
                    return Err(DistError::OutOfSupport {
                        feature: "categorical".into(),
                        value: format!("{obs} (categories: {num_categories})"),
                    })
                }
            }
        }
        Self::fit_counts(&counts, smoothing)
    }

    /// Inverse-CDF draw; falls back to the last category with positive mass
    /// when rounding leaves the cumulative sum short of the uniform draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > 0.0 {
                acc += p;
                last_positive = i;
                if u < acc {
                    return i;
                }
            }
        }
        last_positive
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Poisson {
    pub lambda: f64,
}

impl Poisson {
    pub fn new(lambda: f64) -> Result<Self, DistError> {
        if lambda.is_finite() && lambda > 0.0 {
            Ok(Self { lambda })
        } else {
            Err(DistError::InvalidParam(format!("poisson rate {lambda} must be positive")))
        }
    }

    #[inline]
    pub fn log_density(&self, k: u64) -> f64 {
        k as f64 * self.lambda.ln() - self.lambda - ln_factorial(k)
    }

    /// Sample mean, floored at [`POISSON_RATE_FLOOR`].
    pub fn fit(observations: &[u64]) -> Result<Self, DistError> {
        if observations.is_empty() {
            return Err(DistError::EmptySample { family: "poisson" });
        }
        let sum: f64 = observations.iter().map(|&k| k as f64).sum();
        Self::fit_sum(sum, observations.len())
    }

    pub fn fit_sum(sum: f64, n: usize) -> Result<Self, DistError> {
        if n == 0 {
            return Err(DistError::EmptySample { family: "poisson" });
        }
        Self::new((sum / n as f64).max(POISSON_RATE_FLOOR))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        // rand_distr rejects rates it cannot represent; the floor keeps us clear of 0.
        let dist = rand_distr::Poisson::new(self.lambda).expect("validated poisson rate");
        let draw: f64 = dist.sample(rng);
        draw as u64
    }
}

/// Multivariate normal with a dense covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

/// A [`Gaussian`] with its Cholesky factor cached for repeated evaluation.
#[derive(Debug, Clone)]
pub struct GaussianFactor {
    mean: DVector<f64>,
    chol_lower: DMatrix<f64>,
    log_norm: f64,
}

impl Gaussian {
    /// Validates shape and symmetry. Positive definiteness is checked lazily
    /// by [`Gaussian::factor`].
    pub fn new(mean: Vec<f64>, cov: Vec<Vec<f64>>) -> Result<Self, DistError> {
        let d = mean.len();
        if d == 0 {
            return Err(DistError::InvalidParam("gaussian with zero dimensions".into()));
        }
        if cov.len() != d || cov.iter().any(|row| row.len() != d) {
            return Err(DistError::InvalidParam(format!("covariance is not {d}x{d}")));
        }
        if mean.iter().chain(cov.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(DistError::InvalidParam("non-finite gaussian parameter".into()));
        }
        for i in 0..d {
            for j in 0..i {
                if (cov[i][j] - cov[j][i]).abs() > SYMMETRY_TOL {
                    return Err(DistError::InvalidParam("covariance is not symmetric".into()));
                }
            }
        }
        Ok(Self { mean, cov })
    }

    /// Like [`Gaussian::new`], but adds `eps * I` to the covariance
    /// (doubling `eps` from [`COVARIANCE_JITTER`]) until it factorizes.
    pub fn regularized(mean: Vec<f64>, cov: Vec<Vec<f64>>) -> Result<Self, DistError> {
        let mut g = Self::new(mean, cov)?;
        if g.factor().is_ok() {
            return Ok(g);
        }
        let base = g.cov.clone();
        let mut eps = COVARIANCE_JITTER;
        for _ in 0..MAX_JITTER_DOUBLINGS {
            for (i, row) in g.cov.iter_mut().enumerate() {
                row[i] = base[i][i] + eps;
            }
            if g.factor().is_ok() {
                return Ok(g);
            }
            eps *= 2.0;
        }
        Err(DistError::NotPositiveDefinite)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn cov_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| self.cov[i][j])
    }

    pub fn factor(&self) -> Result<GaussianFactor, DistError> {
        let chol = self
            .cov_matrix()
            .cholesky()
            .ok_or(DistError::NotPositiveDefinite)?;
        let lower = chol.l();
        let log_det: f64 = 2.0 * lower.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        if !log_det.is_finite() {
            return Err(DistError::NotPositiveDefinite);
        }
        let d = self.dim() as f64;
        Ok(GaussianFactor {
            mean: DVector::from_column_slice(&self.mean),
            chol_lower: lower,
            log_norm: -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + log_det),
        })
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64, DistError> {
        self.factor()?.log_density(x)
    }

    /// Sample mean and (biased, maximum-likelihood) sample covariance,
    /// regularized until positive definite.
    pub fn fit<R: AsRef<[f64]>>(observations: &[R]) -> Result<Self, DistError> {
        let (mean, cov) = sample_moments(observations)?;
        let d = mean.len();
        if observations.len() < d + 1 {
            return Err(DistError::TooFewSamples { needed: d + 1, got: observations.len() });
        }
        Self::regularized(mean, cov)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>, DistError> {
        Ok(self.factor()?.sample(rng))
    }
}

/// Mean and `1/n` covariance of a nonempty sample of equal-length vectors.
pub fn sample_moments<R: AsRef<[f64]>>(observations: &[R]) -> Result<(Vec<f64>, Vec<Vec<f64>>), DistError> {
    let first = observations
        .first()
        .ok_or(DistError::EmptySample { family: "gaussian" })?;
    let d = first.as_ref().len();
    let n = observations.len() as f64;
    let mut mean = vec![0.0; d];
    for obs in observations {
        let obs = obs.as_ref();
        if obs.len() != d {
            return Err(DistError::InvalidParam("observations differ in dimension".into()));
        }
        for (m, v) in mean.iter_mut().zip(obs) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut cov = vec![vec![0.0; d]; d];
    for obs in observations {
        let obs = obs.as_ref();
        for i in 0..d {
            let di = obs[i] - mean[i];
            for j in 0..=i {
                cov[i][j] += di * (obs[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in 0..=i {
            cov[i][j] /= n;
            cov[j][i] = cov[i][j];
        }
    }
    Ok((mean, cov))
}

impl GaussianFactor {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64, DistError> {
        if x.len() != self.dim() {
            return Err(DistError::OutOfSupport {
                feature: "gaussian".into(),
                value: format!("vector of length {} (expected {})", x.len(), self.dim()),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(DistError::OutOfSupport {
                feature: "gaussian".into(),
                value: format!("{x:?}"),
            });
        }
        let centered = DVector::from_column_slice(x) - &self.mean;
        let solved = self
            .chol_lower
            .solve_lower_triangular(&centered)
            .ok_or(DistError::NotPositiveDefinite)?;
        Ok(self.log_norm - 0.5 * solved.norm_squared())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| StandardNormal.sample(rng));
        let x = &self.mean + &self.chol_lower * z;
        x.iter().copied().collect()
    }
}
