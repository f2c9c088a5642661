use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use auglag_bo::acquisition::{ey_composite, AcquisitionContext, ObjectiveModel};
use auglag_bo::design::{
    gen_oic_candidates, initial_design, latin_hypercube, min_pairwise_distance, CandidateSet,
};
use auglag_bo::optimizer::{inner_search, Convergence, InnerProgress, InnerStep};
use auglag_bo::problem::{toy_constraints, toy_objective, Blackbox, BlackboxOutput, Objective, ObjectiveFn};
use auglag_bo::{
    fit_gp, optim_auglag, toy_problem, AlParams, Decision, DesignSet, Error, GpHyper, GpSurrogate,
    Hyperrectangle, Problem, ProgressTrace, SearchConfig, Variant,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn check_al_schedule(t: &ProgressTrace) {
    let rows = t.rows();
    let first = rows[0].al.as_ref().unwrap();
    assert_eq!(first, &AlParams::initial(2));
    for w in rows.windows(2) {
        let (a, b) = (w[0].al.as_ref().unwrap(), w[1].al.as_ref().unwrap());
        assert!(b.lambda.iter().all(|l| *l >= 0.0));
        assert!(b.k == a.k || b.k == a.k + 1, "k {} -> {}", a.k, b.k);
        if b.k == a.k {
            assert_eq!(a, b);
        } else {
            assert!(b.rho == a.rho || b.rho == a.rho / 2.0);
        }
    }
}

fn check_oic(t: &ProgressTrace, n_init: usize) {
    let rows = t.rows();
    for (i, r) in rows.iter().enumerate() {
        assert!(r.x.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(r.f, toy_objective(&r.x));
        if i >= n_init {
            assert_ne!(r.decision, Decision::Init);
            if let Some(best) = rows[i - 1].best_valid_f {
                assert!(r.f < best, "row {}: f {} not below incumbent {best}", r.n, r.f);
            }
        } else {
            assert_eq!(r.decision, Decision::Init);
        }
    }
}

#[test]
fn every_variant_keeps_the_al_invariants() {
    for variant in Variant::ALL {
        for seed in [1, 2] {
            let p = toy_problem();
            let t = optim_auglag(&p, &SearchConfig::new(variant, 40, seed)).unwrap();
            assert_eq!(t.len(), 40);
            assert_eq!(p.evaluation_count(), 40);
            check_al_schedule(&t);
            check_oic(&t, 10);
            assert!(t.rows().last().unwrap().al.as_ref().unwrap().k >= 1, "{variant} never updated");
        }
    }
}

#[test]
fn runs_are_deterministic_per_seed() {
    let cfg = SearchConfig::new(Variant::Ei, 30, 77);
    let a = optim_auglag(&toy_problem(), &cfg).unwrap();
    let b = optim_auglag(&toy_problem(), &cfg).unwrap();
    assert_eq!(a, b);
    let c = optim_auglag(&toy_problem(), &SearchConfig::new(Variant::Ei, 30, 78)).unwrap();
    assert_ne!(a, c);
}

#[test]
fn initial_design_only_when_budget_is_design_size() {
    let p = toy_problem();
    let t = optim_auglag(&p, &SearchConfig::new(Variant::Ey, 10, 0)).unwrap();
    assert_eq!((t.len(), p.evaluation_count()), (10, 10));
    assert!(t.rows().iter().all(|r| r.decision == Decision::Init));
}

struct ToyWithObjective;

impl Blackbox for ToyWithObjective {
    fn call(&self, x: &[f64]) -> auglag_bo::Result<BlackboxOutput> {
        Ok(BlackboxOutput {
            objective: Some(toy_objective(x)),
            constraints: toy_constraints(x),
        })
    }
}

#[test]
fn blackbox_objective_is_modelled() {
    let p = Problem::new("toy-bb", Hyperrectangle::unit(2), 2, Objective::Blackbox, Box::new(ToyWithObjective))
        .unwrap();
    let t = optim_auglag(&p, &SearchConfig::new(Variant::Ei, 25, 3)).unwrap();
    assert_eq!(t.len(), 25);
    check_al_schedule(&t);
}

#[test]
fn failing_blackbox_keeps_partial_trace() {
    let calls = AtomicUsize::new(0);
    let bb = move |x: &[f64]| {
        if calls.fetch_add(1, Ordering::SeqCst) >= 15 {
            vec![f64::NAN, 0.0]
        } else {
            toy_constraints(x)
        }
    };
    let f: ObjectiveFn = Arc::new(toy_objective);
    let p = Problem::new("flaky", Hyperrectangle::unit(2), 2, Objective::Known(f), Box::new(bb)).unwrap();
    match optim_auglag(&p, &SearchConfig::new(Variant::Ei, 40, 5)) {
        Err(Error::Aborted { trace, source }) => {
            assert_eq!(trace.len(), 15);
            assert!(matches!(*source, Error::NonFinite { .. }));
        }
        other => panic!("expected an aborted run, got {other:?}"),
    }
}

fn model(points: &[[f64; 2]], c: impl Fn(&[f64]) -> f64) -> GpSurrogate {
    let xs: Vec<Vec<f64>> = points.iter().map(|p| p.to_vec()).collect();
    let ys = xs.iter().map(|x| c(x)).collect();
    fit_gp(DesignSet::new(xs, ys).unwrap(), GpHyper::default()).unwrap()
}

const DESIGN: [[f64; 2]; 6] = [[0.1, 0.1], [0.9, 0.2], [0.5, 0.5], [0.2, 0.8], [0.8, 0.9], [0.4, 0.3]];

fn with_context<T>(y_min: f64, run: impl FnOnce(&AcquisitionContext<'_>) -> T) -> T {
    let bounds = Hyperrectangle::unit(2);
    let gps = vec![
        model(&DESIGN, |x| toy_constraints(x)[0]),
        model(&DESIGN, |x| toy_constraints(x)[1]),
    ];
    let f: ObjectiveFn = Arc::new(toy_objective);
    let al = AlParams::new(vec![0.5, 0.1], 0.25).unwrap();
    let ctx = AcquisitionContext {
        bounds: &bounds,
        constraints: &gps,
        objective: ObjectiveModel::Known(&f),
        al: &al,
        y_min,
        drop_max: false,
        samples: 100,
        seed: 12,
    };
    run(&ctx)
}

fn candidates(n: usize) -> CandidateSet {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    CandidateSet {
        points: latin_hypercube(n, 2, &mut rng),
        ..CandidateSet::default()
    }
}

#[test]
fn hopeless_incumbent_falls_back_to_predictive_mean() {
    let cands = candidates(50);
    let cfg = SearchConfig::new(Variant::Ei, 100, 0);
    with_context(-100.0, |ctx| {
        let eys: Vec<f64> = cands
            .points
            .iter()
            .map(|x| ey_composite(&ctx.predict(x).unwrap(), ctx.al, false))
            .collect();
        let best = (0..eys.len()).fold(0, |b, i| if eys[i] < eys[b] { i } else { b });
        let step = inner_search(ctx, &cfg, &cands, InnerProgress::default()).unwrap();
        assert_eq!(
            step,
            InnerStep::Propose {
                x: cands.points[best].clone(),
                decision: Decision::Ey
            }
        );
    });
}

#[test]
fn single_candidate_with_generous_incumbent_uses_ei() {
    let cands = candidates(1);
    let cfg = SearchConfig::new(Variant::Ei, 100, 0);
    with_context(100.0, |ctx| {
        let step = inner_search(ctx, &cfg, &cands, InnerProgress::default()).unwrap();
        assert_eq!(
            step,
            InnerStep::Propose {
                x: cands.points[0].clone(),
                decision: Decision::Ei
            }
        );
    });
}

#[test]
fn small_ei_converges_only_after_a_trial() {
    let cands = candidates(20);
    let mut cfg = SearchConfig::new(Variant::Ei, 100, 0);
    cfg.ei_tol = 1e6;
    with_context(1.0, |ctx| {
        let first = inner_search(ctx, &cfg, &cands, InnerProgress::default()).unwrap();
        assert!(matches!(first, InnerStep::Propose { decision: Decision::Ei, .. }));
        let later = InnerProgress { trials: 1, stalled: 0 };
        assert_eq!(
            inner_search(ctx, &cfg, &cands, later).unwrap(),
            InnerStep::Converged(Convergence::SmallEi)
        );
    });
}

#[test]
fn ey_variant_ignores_incumbent() {
    let cands = candidates(30);
    let cfg = SearchConfig::new(Variant::Ey, 100, 0);
    let a = with_context(-100.0, |ctx| inner_search(ctx, &cfg, &cands, InnerProgress::default()).unwrap());
    let b = with_context(100.0, |ctx| inner_search(ctx, &cfg, &cands, InnerProgress::default()).unwrap());
    assert_eq!(a, b);
}

#[test]
fn oic_acceptance_matches_region_area() {
    // {x1 + x2 < 0.7} covers 0.245 of the unit square.
    let f: ObjectiveFn = Arc::new(toy_objective);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let set = gen_oic_candidates(&Hyperrectangle::unit(2), &f, 0.7, 24_500, &mut rng);
    assert_eq!(set.len(), 24_500);
    assert!(!set.exhausted);
    assert!(set.points.iter().all(|x| x[0] + x[1] < 0.7 && x.iter().all(|v| (0.0..=1.0).contains(v))));
    let p = 0.245;
    let n = set.proposals as f64;
    let rate = set.len() as f64 / n;
    assert!((rate - p).abs() <= 3.0 * (p * (1.0 - p) / n).sqrt(), "rate {rate} from {n} proposals");
}

#[test]
fn oic_without_incumbent_is_uniform() {
    let f: ObjectiveFn = Arc::new(toy_objective);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let set = gen_oic_candidates(&Hyperrectangle::unit(2), &f, f64::INFINITY, 500, &mut rng);
    assert_eq!((set.len(), set.proposals), (500, 500));
}

#[test]
fn empty_improving_region_is_flagged() {
    let f: ObjectiveFn = Arc::new(toy_objective);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let set = gen_oic_candidates(&Hyperrectangle::unit(2), &f, 0.0, 10, &mut rng);
    assert!(set.is_empty() && set.exhausted);
}

#[test]
fn maximin_design_beats_typical_random_hypercube() {
    let bounds = Hyperrectangle::unit(2);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut random: Vec<f64> = (0..100)
        .map(|_| min_pairwise_distance(&latin_hypercube(10, 2, &mut rng)))
        .collect();
    random.sort_by(f64::total_cmp);
    let median = 0.5 * (random[49] + random[50]);
    for seed in 0..10 {
        let d = initial_design(&bounds, 10, seed);
        assert_eq!(d.len(), 10);
        assert!(min_pairwise_distance(&d) >= median, "seed {seed}");
    }
    assert_eq!(initial_design(&bounds, 10, 4), initial_design(&bounds, 10, 4));
}
