//! Gaussian process surrogates.
//!
//! Isotropic squared-exponential kernel on inputs scaled to the unit cube,
//! zero prior mean on standardized responses. The covariance of a fit is
//! `scale * R(lengthscale) + (nugget + jitter) * I`; the jitter starts at zero
//! and escalates through `1e-8 * scale, 1e-7 * scale, ..., 1e-2 * scale` until
//! the Cholesky factorization succeeds.

use crate::error::{Error, Result};
use crate::linalg::Cholesky;

/// Inputs closer than this (Euclidean) are treated as duplicates.
pub const DUPLICATE_TOL: f64 = 1e-12;

const JITTER_START: f64 = 1e-8;
const JITTER_MAX: f64 = 1e-2;

/// Default lengthscale search interval for [`GpSurrogate::mle_lengthscale`].
pub const DEFAULT_LENGTHSCALE_BOUNDS: (f64, f64) = (1e-2, 10.0);

/// Input/response pairs used to train a surrogate.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSet {
    dim: usize,
    inputs: Vec<Vec<f64>>,
    responses: Vec<f64>,
}

impl DesignSet {
    pub fn new(inputs: Vec<Vec<f64>>, responses: Vec<f64>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::invalid("design set must contain at least one point"));
        }
        if inputs.len() != responses.len() {
            return Err(Error::invalid(format!(
                "{} inputs but {} responses",
                inputs.len(),
                responses.len()
            )));
        }
        let mut design = DesignSet {
            dim: inputs[0].len(),
            inputs: Vec::with_capacity(inputs.len()),
            responses: Vec::with_capacity(responses.len()),
        };
        if design.dim == 0 {
            return Err(Error::invalid("inputs must have at least one coordinate"));
        }
        for (x, y) in inputs.into_iter().zip(responses) {
            design.push(x, y)?;
        }
        Ok(design)
    }

    /// Append one pair after checking dimension, range and distinctness.
    pub fn push(&mut self, x: Vec<f64>, y: f64) -> Result<()> {
        self.check_new_point(&x, y)?;
        self.inputs.push(x);
        self.responses.push(y);
        Ok(())
    }

    fn check_new_point(&self, x: &[f64], y: f64) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::invalid(format!(
                "input has dimension {}, design has {}",
                x.len(),
                self.dim
            )));
        }
        if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid(format!(
                "design input {x:?} is outside the unit cube"
            )));
        }
        if !y.is_finite() {
            return Err(Error::invalid(format!("non-finite response {y}")));
        }
        if let Some(index) = self
            .inputs
            .iter()
            .position(|p| sq_dist(p, x) <= DUPLICATE_TOL * DUPLICATE_TOL)
        {
            return Err(Error::DuplicateInput { index });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }
}

/// Kernel hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpHyper {
    /// Squared-exponential range, in unit-cube coordinates.
    pub lengthscale: f64,
    /// Diagonal noise term, in standardized response units.
    pub nugget: f64,
    /// Prior variance, in standardized response units.
    pub scale: f64,
}

impl Default for GpHyper {
    fn default() -> Self {
        GpHyper {
            lengthscale: 0.2,
            nugget: 1e-8,
            scale: 1.0,
        }
    }
}

impl GpHyper {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lengthscale > 0.0
            && self.lengthscale.is_finite()
            && self.scale > 0.0
            && self.scale.is_finite()
            && self.nugget >= 0.0
            && self.nugget.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid GP hyperparameters {self:?}")))
        }
    }
}

/// Gaussian predictive distribution at one input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

impl Prediction {
    pub fn deterministic(mean: f64) -> Self {
        Prediction {
            mean,
            variance: 0.0,
        }
    }

    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

#[inline]
fn correlation(a: &[f64], b: &[f64], lengthscale: f64) -> f64 {
    (-0.5 * sq_dist(a, b) / (lengthscale * lengthscale)).exp()
}

/// Cholesky factor of the correlation matrix `R + (ratio + j) I`, where the
/// relative jitter `j` is the smallest of the escalation ladder that works.
struct CorrelationFactor {
    chol: Cholesky,
    rel_jitter: f64,
}

fn jitter_ladder() -> impl Iterator<Item = f64> {
    std::iter::once(0.0).chain(
        std::iter::successors(Some(JITTER_START), |j| Some(j * 10.0))
            .take_while(|j| *j <= JITTER_MAX * (1.0 + 1e-9)),
    )
}

fn factor_correlation(
    inputs: &[Vec<f64>],
    lengthscale: f64,
    nugget_ratio: f64,
) -> Result<CorrelationFactor> {
    let n = inputs.len();
    let mut r = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..i {
            let v = correlation(&inputs[i], &inputs[j], lengthscale);
            r[i * n + j] = v;
            r[j * n + i] = v;
        }
    }
    for rel_jitter in jitter_ladder() {
        for i in 0..n {
            r[i * n + i] = 1.0 + nugget_ratio + rel_jitter;
        }
        if let Some(chol) = Cholesky::factor(&r, n) {
            if rel_jitter > 0.0 {
                log::trace!("correlation factor for {n} points needed relative jitter {rel_jitter}");
            }
            return Ok(CorrelationFactor { chol, rel_jitter });
        }
    }
    Err(Error::IllConditioned(format!(
        "Cholesky failed for {n} points at lengthscale {lengthscale} with jitter up to {JITTER_MAX} x scale"
    )))
}

fn standardize(responses: &[f64]) -> (f64, f64, Vec<f64>) {
    let n = responses.len() as f64;
    let mean = responses.iter().sum::<f64>() / n;
    let sd = if responses.len() > 1 {
        let ss: f64 = responses.iter().map(|y| (y - mean) * (y - mean)).sum();
        (ss / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let sd = if sd > 0.0 && sd.is_finite() { sd } else { 1.0 };
    let z = responses.iter().map(|y| (y - mean) / sd).collect();
    (mean, sd, z)
}

/// A fitted Gaussian process. Immutable; updates return new values.
#[derive(Debug, Clone)]
pub struct GpSurrogate {
    design: DesignSet,
    hypers: GpHyper,
    chol: Cholesky,
    rel_jitter: f64,
    y_mean: f64,
    y_sd: f64,
    z: Vec<f64>,
    /// `(R + (nugget/scale + j) I)^{-1} z`
    weights: Vec<f64>,
}

/// Fit a GP to `design` with fixed hyperparameters.
pub fn fit_gp(design: DesignSet, hypers: GpHyper) -> Result<GpSurrogate> {
    hypers.validate()?;
    if design.is_empty() {
        return Err(Error::invalid("cannot fit a GP to an empty design"));
    }
    let factor = factor_correlation(
        design.inputs(),
        hypers.lengthscale,
        hypers.nugget / hypers.scale,
    )?;
    Ok(GpSurrogate::assemble(design, hypers, factor.chol, factor.rel_jitter))
}

impl GpSurrogate {
    fn assemble(design: DesignSet, hypers: GpHyper, chol: Cholesky, rel_jitter: f64) -> Self {
        let (y_mean, y_sd, z) = standardize(design.responses());
        let weights = chol.solve(&z);
        GpSurrogate {
            design,
            hypers,
            chol,
            rel_jitter,
            y_mean,
            y_sd,
            z,
            weights,
        }
    }

    pub fn design(&self) -> &DesignSet {
        &self.design
    }

    pub fn hypers(&self) -> GpHyper {
        self.hypers
    }

    /// Absolute jitter added to the diagonal on top of the nugget.
    pub fn jitter(&self) -> f64 {
        self.rel_jitter * self.hypers.scale
    }

    pub fn dim(&self) -> usize {
        self.design.dim()
    }

    /// Response mean and standard deviation used for standardization.
    pub fn standardization(&self) -> (f64, f64) {
        (self.y_mean, self.y_sd)
    }

    /// Dense row-major lower factor `L` with `L L^T = K + (nugget + jitter) I`
    /// in standardized units.
    pub fn covariance_factor(&self) -> Vec<f64> {
        let n = self.chol.dim();
        let s = self.hypers.scale.sqrt();
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for (j, v) in self.chol.row(i).iter().enumerate() {
                out[i * n + j] = v * s;
            }
        }
        out
    }

    /// Posterior mean and variance at `x`, in response units. The variance is
    /// that of the latent function (nugget excluded).
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        if x.len() != self.dim() {
            return Err(Error::invalid(format!(
                "query has dimension {}, surrogate has {}",
                x.len(),
                self.dim()
            )));
        }
        let mut k: Vec<f64> = self
            .design
            .inputs()
            .iter()
            .map(|xi| correlation(xi, x, self.hypers.lengthscale))
            .collect();
        let mean_z: f64 = k.iter().zip(&self.weights).map(|(a, b)| a * b).sum();
        self.chol.solve_lower_in_place(&mut k);
        let explained: f64 = k.iter().map(|v| v * v).sum();
        let var_z = (self.hypers.scale * (1.0 - explained)).max(0.0);
        Ok(Prediction {
            mean: self.y_mean + self.y_sd * mean_z,
            variance: self.y_sd * self.y_sd * var_z,
        })
    }

    pub fn predict_many(&self, xs: &[Vec<f64>]) -> Result<Vec<Prediction>> {
        xs.iter().map(|x| self.predict(x)).collect()
    }

    /// Augment the design by one pair at quadratic cost, keeping hypers.
    pub fn update(&self, x: Vec<f64>, y: f64) -> Result<GpSurrogate> {
        self.design.check_new_point(&x, y)?;
        let ell = self.hypers.lengthscale;
        let mut entries: Vec<f64> = self
            .design
            .inputs()
            .iter()
            .map(|xi| correlation(xi, &x, ell))
            .collect();
        entries.push(1.0 + self.hypers.nugget / self.hypers.scale + self.rel_jitter);
        let mut design = self.design.clone();
        design.inputs.push(x);
        design.responses.push(y);
        let mut chol = self.chol.clone();
        if chol.append_row(&entries) {
            Ok(GpSurrogate::assemble(design, self.hypers, chol, self.rel_jitter))
        } else {
            // the current jitter no longer suffices; escalate from scratch
            fit_gp(design, self.hypers)
        }
    }

    /// Gaussian log-likelihood of the standardized responses.
    pub fn log_likelihood(&self) -> f64 {
        let n = self.z.len() as f64;
        let quad: f64 = self.z.iter().zip(&self.weights).map(|(a, b)| a * b).sum();
        -0.5 * quad / self.hypers.scale
            - 0.5 * (n * self.hypers.scale.ln() + self.chol.log_det())
            - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }

    /// Maximize the marginal likelihood over the lengthscale, with the scale
    /// profiled out in closed form and the nugget-to-scale ratio held fixed.
    ///
    /// The result never has a lower [`log_likelihood`](Self::log_likelihood)
    /// than the current hyperparameters; otherwise they are returned as is.
    pub fn mle_lengthscale(&self, bounds: (f64, f64)) -> Result<GpHyper> {
        let (lo, hi) = bounds;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return Err(Error::invalid(format!("invalid lengthscale bounds {bounds:?}")));
        }
        let current = self.hypers;
        if self.design.len() < 2 {
            return Ok(current);
        }
        let clamped = GpHyper {
            lengthscale: current.lengthscale.clamp(lo, hi),
            ..current
        };
        let ratio = current.nugget / current.scale;
        let inputs = self.design.inputs();
        let z = &self.z;
        let zz: f64 = z.iter().map(|v| v * v).sum();
        if zz <= 1e-300 {
            // flat likelihood: nothing to learn from constant responses
            return Ok(clamped);
        }

        let profile = |log_ell: f64| -> Option<(f64, f64)> {
            let ell = log_ell.exp();
            let factor = factor_correlation(inputs, ell, ratio).ok()?;
            let w = factor.chol.solve(z);
            let n = z.len() as f64;
            let tau2 = z.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / n;
            if !(tau2 > 0.0 && tau2.is_finite()) {
                return None;
            }
            let ll = -0.5 * n * tau2.ln() - 0.5 * factor.chol.log_det();
            Some((ll, tau2))
        };
        let objective = |log_ell: f64| profile(log_ell).map_or(f64::NEG_INFINITY, |p| p.0);

        let best_log = golden_section_max(objective, lo.ln(), hi.ln());
        let mut best = current;
        let mut best_ll = self.log_likelihood();
        let mut consider = |log_ell: f64| {
            if let Some((_, tau2)) = profile(log_ell) {
                let cand = GpHyper {
                    lengthscale: log_ell.exp(),
                    nugget: ratio * tau2,
                    scale: tau2,
                };
                if let Ok(fit) = fit_gp(self.design.clone(), cand) {
                    let ll = fit.log_likelihood();
                    if ll > best_ll {
                        best_ll = ll;
                        best = cand;
                    }
                }
            }
        };
        consider(best_log);
        consider(clamped.lengthscale.ln());
        Ok(best)
    }
}

/// Maximize a univariate function on `[a, b]`: a coarse grid locates the
/// best bracket, then golden-section search refines it.
fn golden_section_max(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    const GRID: usize = 9;
    const TOL: f64 = 1e-3;
    let grid: Vec<f64> = (0..GRID)
        .map(|i| a + (b - a) * i as f64 / (GRID - 1) as f64)
        .collect();
    let values: Vec<f64> = grid.iter().map(|&t| f(t)).collect();
    let mut imax = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[imax] {
            imax = i;
        }
    }
    let mut lo = grid[imax.saturating_sub(1)];
    let mut hi = grid[(imax + 1).min(GRID - 1)];
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > TOL {
        if fc >= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    let mid = 0.5 * (lo + hi);
    if f(mid) >= values[imax] {
        mid
    } else {
        grid[imax]
    }
}
