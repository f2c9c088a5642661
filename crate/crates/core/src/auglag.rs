//! Augmented Lagrangian composite and the outer-loop parameter updates.

use crate::error::{Error, Result};
use crate::problem::Evaluation;

/// Starting penalty parameter.
pub const INITIAL_RHO: f64 = 0.5;

/// Lagrange multipliers, penalty parameter and outer-iteration index.
#[derive(Debug, Clone, PartialEq)]
pub struct AlParams {
    pub lambda: Vec<f64>,
    pub rho: f64,
    pub k: usize,
}

impl AlParams {
    /// `lambda = 0`, `rho = 1/2`, `k = 0`.
    pub fn initial(m: usize) -> Self {
        AlParams {
            lambda: vec![0.0; m],
            rho: INITIAL_RHO,
            k: 0,
        }
    }

    pub fn new(lambda: Vec<f64>, rho: f64) -> Result<Self> {
        let p = AlParams { lambda, rho, k: 0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(Error::invalid(format!("penalty must be positive, got {}", self.rho)));
        }
        if self.lambda.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            return Err(Error::invalid(format!(
                "multipliers must be nonnegative, got {:?}",
                self.lambda
            )));
        }
        Ok(())
    }

    pub fn num_constraints(&self) -> usize {
        self.lambda.len()
    }
}

/// `L_A` split into its three terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlValue {
    pub value: f64,
    pub objective: f64,
    pub linear: f64,
    pub penalty: f64,
}

/// `f + lambda^T c + (1 / 2 rho) sum_j max(0, c_j)^2`. With `drop_max` the
/// hinge is removed and every `c_j` is squared.
pub fn al_value(f: f64, c: &[f64], p: &AlParams, drop_max: bool) -> AlValue {
    debug_assert_eq!(c.len(), p.lambda.len());
    let linear: f64 = p.lambda.iter().zip(c).map(|(l, cj)| l * cj).sum();
    let squares: f64 = c
        .iter()
        .map(|&cj| {
            let h = if drop_max { cj } else { cj.max(0.0) };
            h * h
        })
        .sum();
    let penalty = squares / (2.0 * p.rho);
    AlValue {
        value: f + linear + penalty,
        objective: f,
        linear,
        penalty,
    }
}

/// `lambda_j <- max(0, lambda_j + c_j / rho)`, using the incoming `rho`.
pub fn update_multipliers(p: &AlParams, c_at_xk: &[f64]) -> AlParams {
    let lambda = p
        .lambda
        .iter()
        .zip(c_at_xk)
        .map(|(l, c)| (l + c / p.rho).max(0.0))
        .collect();
    AlParams {
        lambda,
        rho: p.rho,
        k: p.k,
    }
}

/// Halve `rho` unless `c(x^k) <= 0`.
pub fn update_penalty(p: &AlParams, c_at_xk: &[f64]) -> AlParams {
    let feasible = c_at_xk.iter().all(|c| *c <= 0.0);
    AlParams {
        lambda: p.lambda.clone(),
        rho: if feasible { p.rho } else { 0.5 * p.rho },
        k: p.k,
    }
}

/// One full outer step: multipliers (with the old penalty), then penalty,
/// then `k + 1`.
pub fn outer_update(p: &AlParams, c_at_xk: &[f64]) -> AlParams {
    let mut next = update_penalty(&update_multipliers(p, c_at_xk), c_at_xk);
    next.k = p.k + 1;
    next
}

/// Position and value of the smallest `L_A` in `history` under `p`.
pub fn best_al_index(history: &[Evaluation], p: &AlParams, drop_max: bool) -> Option<(usize, f64)> {
    history
        .iter()
        .map(|e| al_value(e.f, &e.c, p, drop_max).value)
        .enumerate()
        .fold(None, |best, (i, v)| match best {
            Some((_, b)) if b <= v => best,
            _ => Some((i, v)),
        })
}

/// Best `L_A` observed so far, recomputed under the current parameters.
pub fn best_al_value(history: &[Evaluation], p: &AlParams, drop_max: bool) -> Result<f64> {
    best_al_index(history, p, drop_max)
        .map(|(_, v)| v)
        .ok_or_else(|| Error::invalid("best AL value of an empty history"))
}
