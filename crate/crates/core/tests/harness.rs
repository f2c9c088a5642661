use std::fs;
use std::path::Path;

use auglag_bo::harness::{
    quantile_type7, read_trace_dir, run_experiment, summarize, trace_path, write_trace_file, ExperimentSpec,
    Method, Settings, RELAXED_TOL,
};
use auglag_bo::problem::ExternalObjective;
use auglag_bo::{Decision, Evaluation, ProblemSpec, ProgressTrace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Textbook type-7 definition on 1-based order statistics.
fn oracle_quantile(values: &[f64], p: f64) -> f64 {
    let mut x = values.to_vec();
    x.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = x.len() as f64;
    let h = (n - 1.0) * p + 1.0;
    let j = h.floor();
    let g = h - j;
    let j = j as usize;
    if j >= x.len() {
        return x[x.len() - 1];
    }
    (1.0 - g) * x[j - 1] + g * x[j]
}

fn trace_from(rows: &[(f64, f64)]) -> ProgressTrace {
    let mut t = ProgressTrace::new(1, 1);
    for (i, &(f, c)) in rows.iter().enumerate() {
        let e = Evaluation {
            index: i + 1,
            x: vec![0.5],
            f,
            c: vec![c],
        };
        t.push(&e, None, Decision::Oic);
    }
    t
}

fn random_traces(n: usize, len: usize, seed: u64) -> Vec<ProgressTrace> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let rows: Vec<(f64, f64)> = (0..len)
                .map(|_| (rng.random_range(0.5..2.0), rng.random_range(-1.0..0.3)))
                .collect();
            trace_from(&rows)
        })
        .collect()
}

fn best_valid(t: &ProgressTrace, n: usize, tol: f64) -> Option<f64> {
    t.rows()[..n]
        .iter()
        .filter(|r| r.c.iter().all(|c| *c <= tol))
        .map(|r| r.f)
        .reduce(f64::min)
}

#[test]
fn summary_matches_brute_force_oracle() {
    let traces = random_traces(100, 30, 1);
    let groups = vec![("M".to_string(), traces.clone())];
    let table = summarize(&groups, &[1, 5, 30], Some(9.0)).unwrap();
    for n in [1, 5, 30] {
        let vals: Vec<f64> = traces.iter().map(|t| best_valid(t, n, 0.0).unwrap_or(9.0)).collect();
        let relaxed: Vec<f64> = traces
            .iter()
            .map(|t| best_valid(t, n, RELAXED_TOL).unwrap_or(9.0))
            .collect();
        let row = table.row("M", n).unwrap();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        assert!((row.mean - mean).abs() < 1e-12);
        assert!((row.q05 - oracle_quantile(&vals, 0.05)).abs() < 1e-12);
        assert!((row.q95 - oracle_quantile(&vals, 0.95)).abs() < 1e-12);
        assert!((row.mean_relaxed - relaxed.iter().sum::<f64>() / 100.0).abs() < 1e-12);
        assert_eq!(row.no_valid, traces.iter().filter(|t| best_valid(t, n, 0.0).is_none()).count());
        assert_eq!(row.reps, 100);
    }
}

#[test]
fn quantiles_agree_with_oracle_on_random_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for n in [1, 2, 3, 7, 20, 100] {
        let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        for p in [0.0, 0.05, 0.25, 0.5, 0.9, 0.95, 1.0] {
            assert!((quantile_type7(&v, p) - oracle_quantile(&v, p)).abs() < 1e-14);
        }
    }
}

#[test]
fn simple_summaries() {
    let constant = vec![("c".to_string(), vec![trace_from(&[(0.75, -1.0); 5]); 10])];
    let t = summarize(&constant, &[5], None).unwrap();
    let r = t.row("c", 5).unwrap();
    assert_eq!((r.mean, r.q05, r.q95), (0.75, 0.75, 0.75));

    let mixed = vec![(
        "m".to_string(),
        vec![trace_from(&[(0.6, -1.0)]), trace_from(&[(0.7, -1.0)]), trace_from(&[(0.8, -1.0)])],
    )];
    assert!((summarize(&mixed, &[1], None).unwrap().rows[0].mean - 0.7).abs() < 1e-12);

    let single = vec![("s".to_string(), vec![trace_from(&[(0.9, -1.0), (0.65, 0.0)])])];
    let r = &summarize(&single, &[2], None).unwrap().rows[0];
    assert_eq!((r.mean, r.q05, r.q95), (0.65, 0.65, 0.65));
}

#[test]
fn reps_without_valid_points_use_placeholder() {
    let groups = vec![(
        "p".to_string(),
        vec![trace_from(&[(0.5, 1.0), (0.4, 0.0005)]), trace_from(&[(0.9, -1.0), (0.3, 2.0)])],
    )];
    let t = summarize(&groups, &[1, 2], None).unwrap();
    assert_eq!(t.placeholder, 1.8);
    let r = t.row("p", 2).unwrap();
    assert_eq!(r.no_valid, 1);
    assert!((r.mean - (1.8 + 0.9) / 2.0).abs() < 1e-12);
    // the 5e-4 violation counts under the relaxed tolerance
    assert!((r.mean_relaxed - (0.4 + 0.9) / 2.0).abs() < 1e-12);
    let given = summarize(&groups, &[2], Some(5.0)).unwrap();
    assert_eq!(given.row("p", 2).unwrap().mean, 2.95);
}

#[test]
fn checkpoint_beyond_traces_is_rejected() {
    let groups = vec![("a".to_string(), random_traces(3, 10, 2))];
    assert!(summarize(&groups, &[11], None).is_err());
    assert!(summarize(&groups, &[0], None).is_err());
    assert!(summarize(&groups, &[], None).is_err());
    let mut s = Settings::default();
    s.set("budget", "50");
    s.set("checkpoints", "25,100");
    assert!(ExperimentSpec::from_settings(&s).is_err());
}

#[test]
fn trace_files_round_trip_through_summary() {
    let dir = tempfile::tempdir().unwrap();
    let a = random_traces(12, 20, 3);
    let b = random_traces(7, 20, 4);
    for (i, t) in a.iter().enumerate() {
        write_trace_file(&trace_path(dir.path(), "EI", i), t, i).unwrap();
    }
    for (i, t) in b.iter().enumerate() {
        write_trace_file(&trace_path(dir.path(), "OIC-random", i), t, i).unwrap();
    }
    let read = read_trace_dir(dir.path()).unwrap();
    let groups = vec![("EI".to_string(), a), ("OIC-random".to_string(), b)];
    assert_eq!(read, groups);
    assert_eq!(
        summarize(&read, &[10, 20], None).unwrap(),
        summarize(&groups, &[10, 20], None).unwrap()
    );
}

fn spec(out: &Path, workers: usize) -> ExperimentSpec {
    ExperimentSpec {
        problem: ProblemSpec::Toy,
        methods: vec![Method::Sann, Method::OicRandom, "EI".parse().unwrap()],
        reps: 4,
        budget: 15,
        base_seed: 10,
        checkpoints: vec![12, 15],
        out: out.to_path_buf(),
        workers,
        placeholder: None,
    }
}

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let r1 = run_experiment(&spec(d1.path(), 1)).unwrap();
    let r2 = run_experiment(&spec(d2.path(), 3)).unwrap();
    assert_eq!(r1.summary, r2.summary);
    assert!(r1.failures.is_empty());
    assert_eq!(fs::read(d1.path().join("summary.csv")).unwrap(), fs::read(d2.path().join("summary.csv")).unwrap());
    let t1 = dir_contents(&d1.path().join("traces"));
    assert_eq!(t1.len(), 12);
    assert_eq!(t1, dir_contents(&d2.path().join("traces")));
    assert!(t1.iter().any(|(name, _)| name == "OIC-random_rep003.csv"));
}

/// Answers feasibly until asked about a point with `x1 > 0.9`, then exits.
const FLAKY_CHILD: &str = "python3 -u -c '
import sys
for line in sys.stdin:
    x = [float(v) for v in line.split()]
    if x[0] > 0.9:
        sys.exit(1)
    print(0, -1, -1, flush=True)
'";

#[test]
fn failing_reps_are_reported_and_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = Settings::default();
    for (k, v) in [
        ("blackbox-cmd", FLAKY_CHILD),
        ("dim", "2"),
        ("m", "2"),
        ("objective", "sum"),
        ("method", "OIC-random"),
        ("reps", "30"),
        ("budget", "5"),
        ("checkpoints", "5"),
        ("workers", "2"),
    ] {
        s.set(k, v);
    }
    s.set("out", dir.path().display().to_string());
    let spec = ExperimentSpec::from_settings(&s).unwrap();
    match &spec.problem {
        ProblemSpec::External(e) => assert_eq!(e.objective, ExternalObjective::Sum),
        other => panic!("{other:?}"),
    }
    let report = run_experiment(&spec).unwrap();
    let row = report.summary.row("OIC-random", 5).unwrap();
    assert!(!report.failures.is_empty());
    assert!(row.reps > 0);
    assert_eq!(row.reps + report.failures.len(), 30);
    for f in &report.failures {
        assert!(!trace_path(&dir.path().join("traces"), "OIC-random", f.rep).exists());
    }
}

#[test]
fn all_reps_failing_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = Settings::default();
    for (k, v) in [("blackbox-cmd", "exit 3"), ("dim", "2"), ("m", "1"), ("method", "SANN"), ("reps", "3"), ("budget", "5")] {
        s.set(k, v);
    }
    s.set("out", dir.path().display().to_string());
    let err = run_experiment(&ExperimentSpec::from_settings(&s).unwrap()).unwrap_err();
    assert_eq!(err.exit_code(), 2, "{err}");
}
