use auglag_bo::auglag::{al_value, outer_update, update_multipliers, update_penalty, INITIAL_RHO};
use auglag_bo::AlParams;
use proptest::prelude::*;

fn cvec(m: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, m)
}

proptest! {
    #[test]
    fn multipliers_stay_nonnegative(steps in prop::collection::vec(cvec(3), 1..30)) {
        let mut p = AlParams::initial(3);
        for c in &steps {
            p = outer_update(&p, c);
            prop_assert!(p.lambda.iter().all(|l| *l >= 0.0));
        }
    }

    #[test]
    fn penalty_only_halves(steps in prop::collection::vec(cvec(2), 1..40)) {
        let mut p = AlParams::initial(2);
        for (k, c) in steps.iter().enumerate() {
            let next = outer_update(&p, c);
            let feasible = c.iter().all(|v| *v <= 0.0);
            prop_assert_eq!(next.rho, if feasible { p.rho } else { p.rho / 2.0 });
            prop_assert_eq!(next.k, k + 1);
            p = next;
        }
        let halvings = (INITIAL_RHO / p.rho).log2();
        prop_assert_eq!(halvings, halvings.round());
    }

    #[test]
    fn zero_multipliers_and_feasible_give_objective(f in -10.0f64..10.0, c in prop::collection::vec(-3.0f64..=0.0, 1..5), rho in 0.001f64..10.0) {
        let p = AlParams::new(vec![0.0; c.len()], rho).unwrap();
        prop_assert_eq!(al_value(f, &c, &p, false).value, f);
    }

    #[test]
    fn hinge_variants_agree_on_violated_constraints(f in -1.0f64..1.0, c in prop::collection::vec(0.0f64..3.0, 2), l in prop::collection::vec(0.0f64..2.0, 2), rho in 0.01f64..2.0) {
        let p = AlParams::new(l, rho).unwrap();
        prop_assert_eq!(al_value(f, &c, &p, false).value, al_value(f, &c, &p, true).value);
    }

    #[test]
    fn penalty_nonnegative(f in -1.0f64..1.0, c in cvec(3), rho in 0.01f64..2.0) {
        let p = AlParams::new(vec![0.0; 3], rho).unwrap();
        prop_assert!(al_value(f, &c, &p, false).value >= f);
        prop_assert!(al_value(f, &c, &p, true).value >= f);
    }
}

#[test]
fn worked_outer_step() {
    let p = AlParams::initial(2);
    let m = update_multipliers(&p, &[0.2, -0.3]);
    assert_eq!(m.lambda, vec![0.4, 0.0]);
    assert_eq!(update_penalty(&p, &[0.2, -0.3]).rho, 0.25);
    let next = outer_update(&p, &[0.2, -0.3]);
    assert_eq!((next.lambda.clone(), next.rho, next.k), (vec![0.4, 0.0], 0.25, 1));
}
