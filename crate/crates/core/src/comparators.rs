//! Baselines: penalized simulated annealing and random objective-improving
//! sampling. Both emit traces with the same schema as the AL optimizer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::design::{gen_oic_candidates, uniform_point};
use crate::error::{Error, Result};
use crate::problem::{Evaluation, Problem};
use crate::trace::{Decision, ProgressTrace};

/// Uniform draws used to balance the objective against the constraint
/// penalty when no weight is given.
pub const CALIBRATION_SAMPLES: usize = 100;

/// Out-of-box proposals redrawn before giving up on a step.
const MAX_REDRAWS: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SannConfig {
    pub initial_temperature: f64,
    pub evals_per_temperature: usize,
    /// Weight on `sum_j |c_j|`. `None` calibrates it from uniform samples so
    /// that both terms have equal average magnitude.
    pub penalty_weight: Option<f64>,
    pub budget: usize,
    pub seed: u64,
}

impl SannConfig {
    pub fn new(budget: usize, seed: u64) -> Self {
        SannConfig {
            initial_temperature: 10.0,
            evals_per_temperature: 10,
            penalty_weight: None,
            budget,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.initial_temperature > 0.0 && self.initial_temperature.is_finite()) {
            return Err(Error::invalid("initial temperature must be positive"));
        }
        if self.evals_per_temperature == 0 || self.budget == 0 {
            return Err(Error::invalid("budget and evals per temperature must be positive"));
        }
        if let Some(w) = self.penalty_weight {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::invalid(format!("penalty weight must be nonnegative, got {w}")));
            }
        }
        Ok(())
    }

    /// Temperature after `evals` counted evaluations: logarithmic cooling,
    /// held constant within each stage.
    pub fn temperature(&self, evals: usize) -> f64 {
        let stage = evals / self.evals_per_temperature;
        let t = (stage * self.evals_per_temperature) as f64 + std::f64::consts::E;
        self.initial_temperature / t.ln()
    }
}

/// `f + w * sum_j |c_j|`.
pub fn penalized(f: f64, c: &[f64], weight: f64) -> f64 {
    f + weight * c.iter().map(|v| v.abs()).sum::<f64>()
}

/// Weight equalizing mean `|f|` and mean `sum |c|` over uniform draws. The
/// calibration evaluations are not part of the trace.
pub fn calibrate_penalty_weight<R: Rng>(problem: &Problem, rng: &mut R) -> Result<f64> {
    let (mut fs, mut cs) = (0.0, 0.0);
    for _ in 0..CALIBRATION_SAMPLES {
        let e = problem.evaluate(&uniform_point(problem.bounds(), rng))?;
        fs += e.f.abs();
        cs += e.c.iter().map(|v| v.abs()).sum::<f64>();
    }
    Ok(if cs > 0.0 { fs / cs } else { 1.0 })
}

fn with_partial(trace: ProgressTrace, r: Result<()>) -> Result<ProgressTrace> {
    match r {
        Ok(()) => Ok(trace),
        Err(e) if trace.is_empty() => Err(e),
        Err(e) => Err(Error::Aborted {
            trace: Box::new(trace),
            source: Box::new(e),
        }),
    }
}

/// A finished annealing run.
#[derive(Debug, Clone)]
pub struct SannRun {
    pub trace: ProgressTrace,
    /// Composite value of the chain's current state after each row.
    pub current: Vec<f64>,
    pub penalty_weight: f64,
}

/// Metropolis annealing on the unit-scaled box with Gaussian steps whose
/// scale shrinks with the temperature.
pub fn run_sann(problem: &Problem, config: &SannConfig) -> Result<ProgressTrace> {
    run_sann_detailed(problem, config).map(|r| r.trace)
}

pub fn run_sann_detailed(problem: &Problem, config: &SannConfig) -> Result<SannRun> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let weight = match config.penalty_weight {
        Some(w) => w,
        None => calibrate_penalty_weight(problem, &mut rng)?,
    };
    log::debug!("SANN penalty weight {weight}");
    let mut trace = ProgressTrace::new(problem.dim(), problem.num_constraints());
    let mut current = Vec::with_capacity(config.budget);
    let r = anneal(problem, config, weight, &mut rng, &mut trace, &mut current);
    with_partial(trace, r).map(|trace| SannRun {
        trace,
        current,
        penalty_weight: weight,
    })
}

fn anneal(
    problem: &Problem,
    config: &SannConfig,
    weight: f64,
    rng: &mut ChaCha8Rng,
    trace: &mut ProgressTrace,
    current: &mut Vec<f64>,
) -> Result<()> {
    let bounds = problem.bounds();
    let d = problem.dim();
    let t0 = config.initial_temperature;
    let mut u: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
    let first = problem.evaluate(&bounds.from_unit(&u))?;
    let mut y = penalized(first.f, &first.c, weight);
    trace.push(&first, None, Decision::Sann);
    current.push(y);

    while trace.len() < config.budget {
        let t = config.temperature(trace.len() - 1);
        let sd = t / t0;
        let proposal = (0..MAX_REDRAWS)
            .map(|_| {
                u.iter()
                    .map(|&ui| ui + sd * rng.sample::<f64, _>(StandardNormal))
                    .collect::<Vec<f64>>()
            })
            .find(|v| v.iter().all(|x| (0.0..=1.0).contains(x)))
            .ok_or_else(|| Error::invalid("SANN could not draw an in-box proposal"))?;
        let e: Evaluation = problem.evaluate(&bounds.from_unit(&proposal))?;
        let y_try = penalized(e.f, &e.c, weight);
        let dy = y_try - y;
        if dy <= 0.0 || rng.random::<f64>() < (-dy / t).exp() {
            u = proposal;
            y = y_try;
        }
        trace.push(&e, None, Decision::Sann);
        current.push(y);
    }
    Ok(())
}

/// One objective-improving uniform candidate per step, evaluated directly.
/// Stops early if the improving region becomes too small to sample.
pub fn run_oic_random(problem: &Problem, budget: usize, seed: u64) -> Result<ProgressTrace> {
    let f = problem
        .known_objective()
        .ok_or_else(|| Error::invalid("random OIC sampling needs a known objective"))?
        .clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = ProgressTrace::new(problem.dim(), problem.num_constraints());
    let mut step = || -> Result<()> {
        while trace.len() < budget {
            let f_star = trace
                .rows()
                .last()
                .and_then(|r| r.best_valid_f)
                .unwrap_or(f64::INFINITY);
            let cands = gen_oic_candidates(problem.bounds(), &f, f_star, 1, &mut rng);
            let Some(x) = cands.points.first() else {
                log::warn!("no improving candidates after {} evaluations", trace.len());
                break;
            };
            let e = problem.evaluate(x)?;
            trace.push(&e, None, Decision::Oic);
        }
        Ok(())
    };
    let r = step();
    with_partial(trace, r)
}
