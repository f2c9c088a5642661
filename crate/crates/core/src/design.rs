//! Space-filling initial designs and objective-improving candidate sets.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::problem::{Hyperrectangle, ObjectiveFn};

/// Number of random Latin hypercubes compared by the maximin criterion.
const MAXIMIN_TRIES: usize = 100;

/// Rejection sampling gives up once this many proposals have been made with
/// an acceptance rate below [`MIN_ACCEPTANCE`].
pub const MAX_PROPOSALS: usize = 1_000_000;
pub const MIN_ACCEPTANCE: f64 = 1e-4;

/// One random Latin hypercube of `n` points in `[0,1]^dim`.
pub fn latin_hypercube<R: Rng>(n: usize, dim: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![0.0; dim]; n];
    let mut bins: Vec<usize> = (0..n).collect();
    for k in 0..dim {
        bins.shuffle(rng);
        for (p, &b) in pts.iter_mut().zip(&bins) {
            p[k] = (b as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    pts
}

/// Smallest pairwise Euclidean distance.
pub fn min_pairwise_distance(pts: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..pts.len() {
        for j in 0..i {
            let d: f64 = pts[i]
                .iter()
                .zip(&pts[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            best = best.min(d);
        }
    }
    best.sqrt()
}

/// Maximin Latin hypercube in `bounds`: the best of a batch of random
/// hypercubes by smallest pairwise distance. Deterministic per seed.
pub fn initial_design(bounds: &Hyperrectangle, n_init: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = bounds.dim();
    let mut best = latin_hypercube(n_init, dim, &mut rng);
    let mut best_d = min_pairwise_distance(&best);
    for _ in 1..MAXIMIN_TRIES {
        let cand = latin_hypercube(n_init, dim, &mut rng);
        let d = min_pairwise_distance(&cand);
        if d > best_d {
            best = cand;
            best_d = d;
        }
    }
    best.iter().map(|u| bounds.from_unit(u)).collect()
}

/// Uniform draw from the box.
pub fn uniform_point<R: Rng>(bounds: &Hyperrectangle, rng: &mut R) -> Vec<f64> {
    let u: Vec<f64> = (0..bounds.dim()).map(|_| rng.random::<f64>()).collect();
    bounds.from_unit(&u)
}

/// Candidate inputs for one search step.
#[derive(Debug, Clone, Default)]
pub struct CandidateSet {
    pub points: Vec<Vec<f64>>,
    /// Known-objective values at `points`, when the objective is known.
    pub f_values: Option<Vec<f64>>,
    pub proposals: usize,
    /// Set when sampling stopped before the requested count because the
    /// acceptance region is too small.
    pub exhausted: bool,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Objective-improving candidates `{x in B : f(x) < f_star_min}` by rejection
/// sampling. `f_star_min = inf` (no valid point yet) gives uniform points.
pub fn gen_oic_candidates<R: Rng>(
    bounds: &Hyperrectangle,
    f: &ObjectiveFn,
    f_star_min: f64,
    n_cand: usize,
    rng: &mut R,
) -> CandidateSet {
    let mut points = Vec::with_capacity(n_cand);
    let mut f_values = Vec::with_capacity(n_cand);
    let mut proposals = 0;
    let mut exhausted = false;
    while points.len() < n_cand {
        if proposals >= MAX_PROPOSALS && (points.len() as f64) < MIN_ACCEPTANCE * proposals as f64 {
            log::warn!(
                "OIC sampling accepted {} of {proposals} proposals below f = {f_star_min}",
                points.len()
            );
            exhausted = true;
            break;
        }
        proposals += 1;
        let x = uniform_point(bounds, rng);
        let fx = f(&x);
        if fx < f_star_min {
            points.push(x);
            f_values.push(fx);
        }
    }
    CandidateSet {
        points,
        f_values: Some(f_values),
        proposals,
        exhausted,
    }
}

/// Uniform candidates, for problems whose objective is itself a blackbox.
pub fn gen_uniform_candidates<R: Rng>(
    bounds: &Hyperrectangle,
    n_cand: usize,
    rng: &mut R,
) -> CandidateSet {
    CandidateSet {
        points: (0..n_cand).map(|_| uniform_point(bounds, rng)).collect(),
        f_values: None,
        proposals: n_cand,
        exhausted: false,
    }
}
