//! The surrogate-assisted augmented Lagrangian driver.
//!
//! Each blackbox evaluation updates one GP per constraint (and one for the
//! objective when it is not known). Inner iterations score a fresh set of
//! candidates by `E{Y}` or Monte Carlo EI of the composite; an inner loop
//! ends when `stall_limit` evaluations pass without improving the best
//! composite value, or when the best EI falls below `ei_tol`. Then the
//! multipliers and penalty are updated from the inner loop's incumbent.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::acquisition::{ey_composite, mc_ei, AcquisitionContext, ObjectiveModel};
use crate::auglag::{al_value, best_al_index, best_al_value, outer_update, AlParams};
use crate::design::{gen_oic_candidates, gen_uniform_candidates, initial_design, CandidateSet};
use crate::error::{Error, Result};
use crate::gp::{fit_gp, DesignSet, GpHyper, GpSurrogate, DEFAULT_LENGTHSCALE_BOUNDS};
use crate::problem::{Evaluation, Hyperrectangle, Problem};
use crate::trace::{Decision, ProgressTrace};

/// Consecutive empty candidate sets tolerated before the run stops.
const MAX_EMPTY_CANDIDATE_SETS: usize = 3;

/// Acquisition used inside the AL loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Ey,
    Ei,
    EyNomax,
    EiNomax,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Ey, Variant::Ei, Variant::EyNomax, Variant::EiNomax];

    pub fn drop_max(self) -> bool {
        matches!(self, Variant::EyNomax | Variant::EiNomax)
    }

    pub fn uses_ei(self) -> bool {
        matches!(self, Variant::Ei | Variant::EiNomax)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Ey => "EY",
            Variant::Ei => "EI",
            Variant::EyNomax => "EY-nomax",
            Variant::EiNomax => "EI-nomax",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown variant `{s}`")))
    }
}

/// Heuristic knobs of the search.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    /// Size of the space-filling initial design (counts against the budget).
    pub n_init: usize,
    /// Candidates scored per inner iteration.
    pub n_cand: usize,
    /// Monte Carlo samples per EI evaluation.
    pub samples: usize,
    /// Non-improving evaluations that end an inner loop.
    pub stall_limit: usize,
    /// An inner loop also ends when the best EI drops below this.
    pub ei_tol: f64,
    /// EI variants switch to `E{Y}` for an iteration when fewer than this
    /// fraction of candidates have nonzero EI.
    pub ei_fraction: f64,
    pub variant: Variant,
    /// Total blackbox evaluations.
    pub budget: usize,
    pub seed: u64,
    pub lengthscale_bounds: (f64, f64),
    /// Starting hyperparameters for each surrogate (the lengthscale and scale
    /// are re-estimated after every evaluation).
    pub initial_hypers: GpHyper,
}

impl SearchConfig {
    pub fn new(variant: Variant, budget: usize, seed: u64) -> Self {
        SearchConfig {
            n_init: 10,
            n_cand: 1000,
            samples: 100,
            stall_limit: 10,
            ei_tol: 1e-5,
            ei_fraction: 0.05,
            variant,
            budget,
            seed,
            lengthscale_bounds: DEFAULT_LENGTHSCALE_BOUNDS,
            initial_hypers: GpHyper::default(),
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.n_init < dim + 1 {
            return Err(Error::invalid(format!(
                "n_init = {} must be at least d + 1 = {}",
                self.n_init,
                dim + 1
            )));
        }
        if self.budget < self.n_init {
            return Err(Error::invalid(format!(
                "budget {} is smaller than the initial design ({})",
                self.budget, self.n_init
            )));
        }
        if !(self.ei_fraction > 0.0 && self.ei_fraction < 1.0) {
            return Err(Error::invalid("ei_fraction must lie in (0, 1)"));
        }
        if self.samples == 0 || self.n_cand == 0 || self.stall_limit == 0 {
            return Err(Error::invalid("samples, n_cand and stall_limit must be positive"));
        }
        if !(self.ei_tol >= 0.0) {
            return Err(Error::invalid("ei_tol must be nonnegative"));
        }
        self.initial_hypers.validate()
    }
}

/// Why an inner loop ended without proposing a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Convergence {
    Stalled,
    SmallEi,
    NoCandidates,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InnerStep {
    Propose { x: Vec<f64>, decision: Decision },
    Converged(Convergence),
}

/// State of the current inner loop.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InnerProgress {
    /// Evaluations made so far in this inner loop.
    pub trials: usize,
    /// Consecutive evaluations without improving the best composite value.
    pub stalled: usize,
}

fn argmax_first(values: &[f64]) -> Option<(usize, f64)> {
    values.iter().copied().enumerate().fold(None, |best, (i, v)| match best {
        Some((_, b)) if b >= v => best,
        _ => Some((i, v)),
    })
}

fn argmin_first(values: &[f64]) -> Option<(usize, f64)> {
    values.iter().copied().enumerate().fold(None, |best, (i, v)| match best {
        Some((_, b)) if b <= v => best,
        _ => Some((i, v)),
    })
}

/// One inner iteration: pick the next input or declare the inner loop done.
/// Ties go to the lowest candidate index.
pub fn inner_search(
    ctx: &AcquisitionContext<'_>,
    config: &SearchConfig,
    candidates: &CandidateSet,
    progress: InnerProgress,
) -> Result<InnerStep> {
    if progress.stalled >= config.stall_limit {
        return Ok(InnerStep::Converged(Convergence::Stalled));
    }
    if candidates.is_empty() {
        return Ok(InnerStep::Converged(Convergence::NoCandidates));
    }
    let preds = candidates
        .points
        .par_iter()
        .map(|x| ctx.predict(x))
        .collect::<Result<Vec<_>>>()?;

    if config.variant.uses_ei() {
        let draws = ctx.draws();
        let eis = preds
            .par_iter()
            .map(|p| mc_ei(p, ctx.al, ctx.y_min, ctx.drop_max, &draws).map(|s| s.value))
            .collect::<Result<Vec<f64>>>()?;
        let nonzero = eis.iter().filter(|v| **v > 0.0).count();
        if nonzero as f64 >= config.ei_fraction * eis.len() as f64 {
            let (i, best) = argmax_first(&eis).expect("nonempty");
            // every inner loop proposes at least once
            if best < config.ei_tol && progress.trials > 0 {
                return Ok(InnerStep::Converged(Convergence::SmallEi));
            }
            return Ok(InnerStep::Propose {
                x: candidates.points[i].clone(),
                decision: Decision::Ei,
            });
        }
        log::debug!(
            "{nonzero} of {} candidates have nonzero EI; using E{{Y}}",
            eis.len()
        );
    }
    let eys: Vec<f64> = preds
        .iter()
        .map(|p| ey_composite(p, ctx.al, ctx.drop_max))
        .collect();
    let (i, _) = argmin_first(&eys).expect("nonempty");
    Ok(InnerStep::Propose {
        x: candidates.points[i].clone(),
        decision: Decision::Ey,
    })
}

/// Constraint surrogates plus an optional objective surrogate.
struct Models {
    constraints: Vec<GpSurrogate>,
    objective: Option<GpSurrogate>,
}

fn fit_with_mle(design: DesignSet, config: &SearchConfig) -> Result<GpSurrogate> {
    let gp = fit_gp(design, config.initial_hypers)?;
    refit_mle(gp, config)
}

fn refit_mle(gp: GpSurrogate, config: &SearchConfig) -> Result<GpSurrogate> {
    let h = gp.mle_lengthscale(config.lengthscale_bounds)?;
    if h == gp.hypers() {
        Ok(gp)
    } else {
        fit_gp(gp.design().clone(), h)
    }
}

impl Models {
    fn fit(
        history: &[Evaluation],
        bounds: &Hyperrectangle,
        m: usize,
        model_objective: bool,
        config: &SearchConfig,
    ) -> Result<Self> {
        let inputs: Vec<Vec<f64>> = history.iter().map(|e| bounds.to_unit(&e.x)).collect();
        let constraints = (0..m)
            .map(|j| {
                let ys = history.iter().map(|e| e.c[j]).collect();
                fit_with_mle(DesignSet::new(inputs.clone(), ys)?, config)
            })
            .collect::<Result<Vec<_>>>()?;
        let objective = if model_objective {
            let ys = history.iter().map(|e| e.f).collect();
            Some(fit_with_mle(DesignSet::new(inputs, ys)?, config)?)
        } else {
            None
        };
        Ok(Models {
            constraints,
            objective,
        })
    }

    fn add(&mut self, eval: &Evaluation, bounds: &Hyperrectangle, config: &SearchConfig) -> Result<()> {
        let u = bounds.to_unit(&eval.x);
        let mut next = Vec::with_capacity(self.constraints.len());
        for (gp, &c) in self.constraints.iter().zip(&eval.c) {
            match gp.update(u.clone(), c) {
                Ok(g) => next.push(refit_mle(g, config)?),
                Err(Error::DuplicateInput { index }) => {
                    log::warn!("evaluation {} duplicates design point {index}; surrogates unchanged", eval.index);
                    return Ok(());
                }
                Err(e) => return Err(e),
            }
        }
        if let Some(gp) = &self.objective {
            self.objective = Some(refit_mle(gp.update(u, eval.f)?, config)?);
        }
        self.constraints = next;
        Ok(())
    }
}

/// Run the hybrid optimizer until the evaluation budget is spent.
pub fn optim_auglag(problem: &Problem, config: &SearchConfig) -> Result<ProgressTrace> {
    config.validate(problem.dim())?;
    let mut trace = ProgressTrace::new(problem.dim(), problem.num_constraints());
    match drive(problem, config, &mut trace) {
        Ok(()) => Ok(trace),
        Err(e) if trace.is_empty() => Err(e),
        Err(e) => Err(Error::Aborted {
            trace: Box::new(trace),
            source: Box::new(e),
        }),
    }
}

fn drive(problem: &Problem, config: &SearchConfig, trace: &mut ProgressTrace) -> Result<()> {
    let bounds = problem.bounds();
    let m = problem.num_constraints();
    let drop_max = config.variant.drop_max();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut al = AlParams::initial(m);
    let mut history: Vec<Evaluation> = Vec::with_capacity(config.budget);

    for x in initial_design(bounds, config.n_init, rng.random()) {
        let eval = problem.evaluate(&x)?;
        trace.push(&eval, Some(&al), Decision::Init);
        history.push(eval);
    }
    if history.len() >= config.budget {
        return Ok(());
    }

    let known_f = problem.known_objective();
    let mut models = Models::fit(&history, bounds, m, known_f.is_none(), config)?;
    let mut y_min = best_al_value(&history, &al, drop_max)?;
    let mut inner_start = history.len();
    let mut stalled = 0;
    let mut empty_sets = 0;

    while history.len() < config.budget {
        let candidates = match known_f {
            Some(f) => {
                let f_star = trace.rows().last().and_then(|r| r.best_valid_f);
                gen_oic_candidates(bounds, f, f_star.unwrap_or(f64::INFINITY), config.n_cand, &mut rng)
            }
            None => gen_uniform_candidates(bounds, config.n_cand, &mut rng),
        };
        let objective = match (known_f, &models.objective) {
            (Some(f), _) => ObjectiveModel::Known(f),
            (None, Some(gp)) => ObjectiveModel::Surrogate(gp),
            (None, None) => unreachable!("objective surrogate is fitted when f is unknown"),
        };
        let ctx = AcquisitionContext {
            bounds,
            constraints: &models.constraints,
            objective,
            al: &al,
            y_min,
            drop_max,
            samples: config.samples,
            seed: rng.random(),
        };
        let progress = InnerProgress {
            trials: history.len() - inner_start,
            stalled,
        };
        match inner_search(&ctx, config, &candidates, progress)? {
            InnerStep::Converged(Convergence::NoCandidates) => {
                empty_sets += 1;
                if empty_sets >= MAX_EMPTY_CANDIDATE_SETS {
                    log::info!(
                        "no objective-improving candidates left after {} evaluations",
                        history.len()
                    );
                    return Ok(());
                }
            }
            InnerStep::Converged(reason) => {
                let inner = &history[inner_start..];
                let xk = match best_al_index(inner, &al, drop_max) {
                    Some((i, _)) => &inner[i],
                    None => {
                        let (i, _) = best_al_index(&history, &al, drop_max).expect("nonempty");
                        &history[i]
                    }
                };
                let next = outer_update(&al, &xk.c);
                log::debug!(
                    "outer iteration {} ends ({reason:?}) after {} evaluations: lambda {:?}, rho {}",
                    next.k,
                    history.len(),
                    next.lambda,
                    next.rho
                );
                al = next;
                y_min = best_al_value(&history, &al, drop_max)?;
                inner_start = history.len();
                stalled = 0;
            }
            InnerStep::Propose { x, decision } => {
                empty_sets = 0;
                let eval = problem.evaluate(&x)?;
                trace.push(&eval, Some(&al), decision);
                let v = al_value(eval.f, &eval.c, &al, drop_max).value;
                if v < y_min {
                    y_min = v;
                    stalled = 0;
                } else {
                    stalled += 1;
                }
                models.add(&eval, bounds, config)?;
                history.push(eval);
            }
        }
    }
    Ok(())
}
