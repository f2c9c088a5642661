//! Acquisition functions over the separately modeled AL composite
//! `Y = Y_f + lambda^T Y_c + (1 / 2 rho) sum_j max(0, Y_cj)^2`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::erf::erfc;

use crate::auglag::AlParams;
use crate::error::{Error, Result};
use crate::gp::{GpSurrogate, Prediction};
use crate::problem::{Hyperrectangle, ObjectiveFn};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
pub fn norm_pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Standard normal distribution function.
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Closed-form expected improvement `E max(0, f_min - Y)`, `Y ~ N(mu, sigma^2)`.
pub fn ei_gaussian(mu: f64, sigma: f64, f_min: f64) -> f64 {
    let diff = f_min - mu;
    if !(sigma > 0.0) {
        return diff.max(0.0);
    }
    let z = diff / sigma;
    (diff * norm_cdf(z) + sigma * norm_pdf(z)).max(0.0)
}

/// `E max(0, Y)^2` for `Y ~ N(mu, sigma^2)`, via the second generalized EI
/// moment: `sigma^2 [(1 + z^2) Phi(z) + z phi(z)]` with `z = mu / sigma`.
pub fn expected_sq_hinge(mu: f64, sigma: f64) -> f64 {
    if !(sigma > 0.0) {
        let h = mu.max(0.0);
        return h * h;
    }
    let z = mu / sigma;
    // expanded form stays finite as sigma -> 0
    ((sigma * sigma + mu * mu) * norm_cdf(z) + mu * sigma * norm_pdf(z)).max(0.0)
}

/// Predictive distributions for the objective and each constraint at one
/// input. A known objective has zero variance.
#[derive(Debug, Clone, PartialEq)]
pub struct PointPrediction {
    pub objective: Prediction,
    pub constraints: Vec<Prediction>,
}

/// Closed-form `E{Y}`. With `drop_max` the squared term uses
/// `E{Y_c^2} = mu^2 + sigma^2`.
pub fn ey_composite(pred: &PointPrediction, al: &AlParams, drop_max: bool) -> f64 {
    let linear: f64 = al
        .lambda
        .iter()
        .zip(&pred.constraints)
        .map(|(l, p)| l * p.mean)
        .sum();
    let squares: f64 = pred
        .constraints
        .iter()
        .map(|p| {
            if drop_max {
                p.mean * p.mean + p.variance
            } else {
                expected_sq_hinge(p.mean, p.sd())
            }
        })
        .sum();
    pred.objective.mean + linear + squares / (2.0 * al.rho)
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcquisitionScore {
    pub value: f64,
    pub std_error: f64,
}

/// Standard normal draws shared by every candidate scored in one search
/// step (common random numbers).
#[derive(Debug, Clone)]
pub struct McDraws {
    samples: usize,
    m: usize,
    objective: Vec<f64>,
    constraints: Vec<f64>,
}

impl McDraws {
    pub fn new(seed: u64, samples: usize, m: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut objective = Vec::with_capacity(samples);
        let mut constraints = Vec::with_capacity(samples * m);
        for _ in 0..samples {
            objective.push(StandardNormal.sample(&mut rng));
            for _ in 0..m {
                constraints.push(StandardNormal.sample(&mut rng));
            }
        }
        McDraws {
            samples,
            m,
            objective,
            constraints,
        }
    }

    pub fn samples(&self) -> usize {
        self.samples
    }
}

/// Monte Carlo EI of the composite: the average of `max(0, y_min - y^(t))`
/// over the draws.
pub fn mc_ei(
    pred: &PointPrediction,
    al: &AlParams,
    y_min: f64,
    drop_max: bool,
    draws: &McDraws,
) -> Result<AcquisitionScore> {
    if !y_min.is_finite() {
        return Err(Error::invalid(format!("EI needs a finite incumbent, got {y_min}")));
    }
    if draws.samples == 0 {
        return Err(Error::invalid("EI needs at least one Monte Carlo sample"));
    }
    let m = pred.constraints.len();
    if m != draws.m || m != al.lambda.len() {
        return Err(Error::invalid(format!(
            "{m} constraint predictions, {} draws per sample, {} multipliers",
            draws.m,
            al.lambda.len()
        )));
    }
    let sd_f = pred.objective.sd();
    let sds: Vec<f64> = pred.constraints.iter().map(Prediction::sd).collect();
    // Welford accumulation: identical improvements give exactly zero spread
    let mut mean = 0.0;
    let mut m2 = 0.0;
    let mut yc = vec![0.0; m];
    for t in 0..draws.samples {
        let yf = pred.objective.mean + sd_f * draws.objective[t];
        let z = &draws.constraints[t * m..(t + 1) * m];
        for j in 0..m {
            yc[j] = pred.constraints[j].mean + sds[j] * z[j];
        }
        let y = composite(yf, &yc, al, drop_max);
        let imp = (y_min - y).max(0.0);
        let delta = imp - mean;
        mean += delta / (t + 1) as f64;
        m2 += delta * (imp - mean);
    }
    let t = draws.samples as f64;
    let std_error = if draws.samples > 1 {
        (m2.max(0.0) / (t - 1.0) / t).sqrt()
    } else {
        0.0
    };
    Ok(AcquisitionScore {
        value: mean,
        std_error,
    })
}

#[inline]
fn composite(yf: f64, yc: &[f64], al: &AlParams, drop_max: bool) -> f64 {
    // same operation order as `al_value`, so zero-variance draws reproduce it
    let mut linear = 0.0;
    let mut squares = 0.0;
    for (l, c) in al.lambda.iter().zip(yc) {
        let h = if drop_max { *c } else { c.max(0.0) };
        linear += l * c;
        squares += h * h;
    }
    yf + linear + squares / (2.0 * al.rho)
}

/// Closed-form EI of the single-constraint composite without the max,
/// `f + lambda Y_c + Y_c^2 / (2 rho)` with `Y_c ~ N(mu, sigma^2)` and known `f`.
pub fn analytic_ei_nomax(f: f64, mu: f64, sigma: f64, lambda: f64, rho: f64, y_min: f64) -> f64 {
    let disc = lambda * lambda - 2.0 * (f - y_min) / rho;
    if disc < 0.0 {
        return 0.0;
    }
    if !(sigma > 0.0) {
        return (y_min - (f + lambda * mu + mu * mu / (2.0 * rho))).max(0.0);
    }
    let root = disc.sqrt();
    let u_minus = rho * (-lambda - root);
    let u_plus = rho * (-lambda + root);
    let v1 = (u_minus - mu) / sigma;
    let v2 = (u_plus - mu) / sigma;
    let (p1, p2) = (norm_pdf(v1), norm_pdf(v2));
    let mass = norm_cdf(v2) - norm_cdf(v1);
    let s2_2rho = sigma * sigma / (2.0 * rho);
    let level = y_min - (mu * mu / (2.0 * rho) + lambda * mu + f) - s2_2rho;
    let ei = level * mass + (sigma * mu / rho + lambda * sigma) * (p2 - p1) + s2_2rho * (v2 * p2 - v1 * p1);
    ei.max(0.0)
}

/// How the objective enters the composite.
#[derive(Clone, Copy)]
pub enum ObjectiveModel<'a> {
    Known(&'a ObjectiveFn),
    Surrogate(&'a GpSurrogate),
}

/// Everything needed to score candidate inputs at one search step.
#[derive(Clone, Copy)]
pub struct AcquisitionContext<'a> {
    /// Box used to map inputs onto the unit cube the surrogates live on.
    pub bounds: &'a Hyperrectangle,
    pub constraints: &'a [GpSurrogate],
    pub objective: ObjectiveModel<'a>,
    pub al: &'a AlParams,
    /// Best composite value observed so far under `al`.
    pub y_min: f64,
    pub drop_max: bool,
    /// Monte Carlo sample count `T`.
    pub samples: usize,
    pub seed: u64,
}

impl AcquisitionContext<'_> {
    pub fn predict(&self, x: &[f64]) -> Result<PointPrediction> {
        let u = self.bounds.to_unit(x);
        let objective = match self.objective {
            ObjectiveModel::Known(f) => Prediction::deterministic(f(x)),
            ObjectiveModel::Surrogate(gp) => gp.predict(&u)?,
        };
        let constraints = self
            .constraints
            .iter()
            .map(|gp| gp.predict(&u))
            .collect::<Result<Vec<_>>>()?;
        Ok(PointPrediction {
            objective,
            constraints,
        })
    }

    pub fn draws(&self) -> McDraws {
        McDraws::new(self.seed, self.samples, self.constraints.len())
    }

    pub fn ey(&self, x: &[f64]) -> Result<f64> {
        Ok(ey_composite(&self.predict(x)?, self.al, self.drop_max))
    }

    /// Monte Carlo EI at `x`. Draws are regenerated from `seed`, so every
    /// input scored under the same context sees the same random numbers.
    pub fn ei(&self, x: &[f64]) -> Result<AcquisitionScore> {
        mc_ei(&self.predict(x)?, self.al, self.y_min, self.drop_max, &self.draws())
    }
}
