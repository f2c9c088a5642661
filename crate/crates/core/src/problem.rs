//! Problem definitions: bounding box, objective, and the constraint blackbox.

use std::f64::consts::PI;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};

mod external;

pub use external::{ExternalBlackbox, ExternalObjective, ExternalSpec};

/// The known box `B = {x : lower <= x <= upper}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperrectangle {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Hyperrectangle {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::invalid(format!(
                "bounds must be nonempty and of equal length (got {} and {})",
                lower.len(),
                upper.len()
            )));
        }
        let ok = lower
            .iter()
            .zip(&upper)
            .all(|(l, u)| l.is_finite() && u.is_finite() && l < u);
        if !ok {
            return Err(Error::invalid(format!(
                "need finite lower < upper componentwise, got {lower:?} and {upper:?}"
            )));
        }
        Ok(Hyperrectangle { lower, upper })
    }

    pub fn unit(dim: usize) -> Self {
        Hyperrectangle {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    /// Map a point of the box onto the unit cube.
    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| ((v - l) / (u - l)).clamp(0.0, 1.0))
            .collect()
    }

    /// Map a point of the unit cube into the box.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(t, (l, h))| (l + t * (h - l)).clamp(*l, *h))
            .collect()
    }
}

pub type ObjectiveFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Either a cheap closed-form objective or one returned by the blackbox.
#[derive(Clone)]
pub enum Objective {
    Known(ObjectiveFn),
    Blackbox,
}

impl fmt::Debug for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Objective::Known(_) => f.write_str("Known"),
            Objective::Blackbox => f.write_str("Blackbox"),
        }
    }
}

/// Raw output of one blackbox call.
#[derive(Debug, Clone, PartialEq)]
pub struct BlackboxOutput {
    pub objective: Option<f64>,
    pub constraints: Vec<f64>,
}

/// The expensive part of a problem.
pub trait Blackbox: Send + Sync {
    fn call(&self, x: &[f64]) -> Result<BlackboxOutput>;
}

impl<F> Blackbox for F
where
    F: Fn(&[f64]) -> Vec<f64> + Send + Sync,
{
    fn call(&self, x: &[f64]) -> Result<BlackboxOutput> {
        Ok(BlackboxOutput {
            objective: None,
            constraints: self(x),
        })
    }
}

/// One blackbox evaluation `(x, f(x), c(x))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// 1-based position in the problem's call sequence.
    pub index: usize,
    pub x: Vec<f64>,
    pub f: f64,
    pub c: Vec<f64>,
}

impl Evaluation {
    /// Strict validity: every constraint `<= 0`.
    pub fn is_valid(&self) -> bool {
        self.is_valid_within(0.0)
    }

    /// Validity up to `max_j max(0, c_j) <= tol`.
    pub fn is_valid_within(&self, tol: f64) -> bool {
        self.c.iter().all(|c| *c <= tol)
    }
}

pub struct Problem {
    name: String,
    bounds: Hyperrectangle,
    m: usize,
    objective: Objective,
    blackbox: Box<dyn Blackbox>,
    calls: AtomicUsize,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("bounds", &self.bounds)
            .field("m", &self.m)
            .field("objective", &self.objective)
            .field("calls", &self.evaluation_count())
            .finish()
    }
}

impl Problem {
    pub fn new(
        name: impl Into<String>,
        bounds: Hyperrectangle,
        m: usize,
        objective: Objective,
        blackbox: Box<dyn Blackbox>,
    ) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("a problem needs at least one constraint"));
        }
        Ok(Problem {
            name: name.into(),
            bounds,
            m,
            objective,
            blackbox,
            calls: AtomicUsize::new(0),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn num_constraints(&self) -> usize {
        self.m
    }

    pub fn bounds(&self) -> &Hyperrectangle {
        &self.bounds
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn known_objective(&self) -> Option<&ObjectiveFn> {
        match &self.objective {
            Objective::Known(f) => Some(f),
            Objective::Blackbox => None,
        }
    }

    /// Number of blackbox calls made through this problem so far.
    pub fn evaluation_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Run the blackbox at `x`. Out-of-bounds points are rejected before any
    /// call is made and do not count.
    pub fn evaluate(&self, x: &[f64]) -> Result<Evaluation> {
        if !self.bounds.contains(x) {
            return Err(Error::OutOfBounds { x: x.to_vec() });
        }
        let index = self.calls.fetch_add(1, Ordering::SeqCst) + 1;
        let out = self.blackbox.call(x)?;
        log::trace!("{} call {index}: x = {x:?} -> {out:?}", self.name);
        if out.constraints.len() != self.m {
            return Err(Error::Protocol {
                message: format!(
                    "expected {} constraint values, got {}",
                    self.m,
                    out.constraints.len()
                ),
                raw: format!("{out:?}"),
            });
        }
        let f = match (&self.objective, out.objective) {
            (Objective::Known(f), _) => f(x),
            (Objective::Blackbox, Some(f)) => f,
            (Objective::Blackbox, None) => {
                return Err(Error::Protocol {
                    message: "blackbox did not return an objective value".into(),
                    raw: format!("{out:?}"),
                })
            }
        };
        if !f.is_finite() || out.constraints.iter().any(|c| !c.is_finite()) {
            let mut values = vec![f];
            values.extend_from_slice(&out.constraints);
            return Err(Error::NonFinite {
                x: x.to_vec(),
                values,
            });
        }
        Ok(Evaluation {
            index,
            x: x.to_vec(),
            f,
            c: out.constraints,
        })
    }
}

/// Objective of the two-dimensional toy problem.
pub fn toy_objective(x: &[f64]) -> f64 {
    x[0] + x[1]
}

/// The two blackbox constraints of the toy problem.
pub fn toy_constraints(x: &[f64]) -> Vec<f64> {
    let (x1, x2) = (x[0], x[1]);
    let c1 = 1.5 - x1 - 2.0 * x2 - 0.5 * (2.0 * PI * (x1 * x1 - 2.0 * x2)).sin();
    let c2 = x1 * x1 + x2 * x2 - 1.5;
    vec![c1, c2]
}

/// Linear objective on `[0,1]^2` with two nonlinear constraints. Three local
/// minimizers; the global one is near `(0.1954, 0.4044)` with `f ~ 0.5998`.
pub fn toy_problem() -> Problem {
    Problem::new(
        "toy",
        Hyperrectangle::unit(2),
        2,
        Objective::Known(Arc::new(toy_objective)),
        Box::new(toy_constraints),
    )
    .expect("toy problem is well formed")
}

/// Problem whose blackbox is a child process speaking the line protocol.
pub fn external_blackbox(spec: &ExternalSpec) -> Result<Problem> {
    let bounds = match (&spec.lower, &spec.upper) {
        (Some(l), Some(u)) => Hyperrectangle::new(l.clone(), u.clone())?,
        (None, None) => Hyperrectangle::unit(spec.dim),
        _ => return Err(Error::invalid("give both lower and upper bounds or neither")),
    };
    if bounds.dim() != spec.dim {
        return Err(Error::invalid(format!(
            "bounds have dimension {}, expected {}",
            bounds.dim(),
            spec.dim
        )));
    }
    let objective = match spec.objective {
        ExternalObjective::Blackbox => Objective::Blackbox,
        ExternalObjective::Sum => Objective::Known(Arc::new(|x: &[f64]| x.iter().sum())),
    };
    let child = ExternalBlackbox::spawn(&spec.command, spec.m, spec.timeout)?;
    Problem::new(
        format!("external:{}", spec.command),
        bounds,
        spec.m,
        objective,
        Box::new(child),
    )
}

/// Buildable description of a problem, so each run can own its instance.
#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSpec {
    Toy,
    External(ExternalSpec),
}

impl ProblemSpec {
    pub fn build(&self) -> Result<Problem> {
        match self {
            ProblemSpec::Toy => Ok(toy_problem()),
            ProblemSpec::External(spec) => external_blackbox(spec),
        }
    }
}
