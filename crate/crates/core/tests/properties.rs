//! Property tests over randomly drawn specifications.

use proptest::prelude::*;
use rmbp_core::analytics::{solve_alpha_star, PsiFunction};
use rmbp_core::engine::{coupled_rmbp_paths, queue_trajectory, rmp_trajectory, PathConfig, SampleKind, SampleMeta, TailSampleSet};
use rmbp_core::tail::{double_pareto_fit, empirical_ccdf, hill_estimator, loglog_slope};
use rmbp_core::{ModulatorSpec, OffspringDist, OffspringSpec, RngStream};

fn normalize(w: &[f64]) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

fn iid_spec() -> impl Strategy<Value = ModulatorSpec> {
    (2usize..6)
        .prop_flat_map(|k| (prop::collection::vec(0.05f64..5.0, k), prop::collection::vec(0.05f64..1.0, k)))
        .prop_map(|(v, w)| ModulatorSpec::iid(v, normalize(&w)).unwrap())
}

fn markov_spec() -> impl Strategy<Value = ModulatorSpec> {
    (2usize..5)
        .prop_flat_map(|k| (prop::collection::vec(0.05f64..5.0, k), prop::collection::vec(prop::collection::vec(0.05f64..1.0, k), k)))
        .prop_map(|(v, rows)| {
            let q = rows.iter().map(|r| normalize(r)).collect();
            ModulatorSpec::markov(v, q, None).unwrap()
        })
}

/// A chain with a positive root: values spread around 1, negative drift.
fn rooted_markov() -> impl Strategy<Value = ModulatorSpec> {
    markov_spec().prop_filter("needs drift < 0 and some value > 1", |m| {
        m.mean_log() < -0.01 && m.values().iter().any(|v| *v > 1.05)
    })
}

fn pareto_set(seed: u64, n: usize) -> TailSampleSet {
    use rand::Rng;
    let mut rng = RngStream::new(seed, 0).rng();
    let logs = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln() / 1.5).collect();
    TailSampleSet::from_logs(logs, SampleKind::Rmp, SampleMeta::default())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn psi_vanishes_at_zero(m in prop_oneof![iid_spec(), markov_spec()]) {
        let psi = PsiFunction::for_multiplicative(&m);
        prop_assert!(psi.eval(0.0).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn psi_midpoint_convex(m in prop_oneof![iid_spec(), markov_spec()]) {
        let psi = PsiFunction::for_multiplicative(&m);
        let top = psi.domain_upper().min(8.0);
        let grid: Vec<f64> = (0..50).map(|i| -top + 2.0 * top * i as f64 / 49.0).collect();
        for w in grid.windows(3).step_by(1) {
            let (a, b) = (w[0], w[2]);
            let mid = psi.eval(0.5 * (a + b)).unwrap();
            let avg = 0.5 * (psi.eval(a).unwrap() + psi.eval(b).unwrap());
            prop_assert!(mid <= avg + 1e-9, "a={a} b={b} mid={mid} avg={avg}");
        }
    }

    #[test]
    fn one_state_chain_matches_iid(v in 0.05f64..5.0, a in -3.0f64..3.0) {
        let chain = ModulatorSpec::markov(vec![v], vec![vec![1.0]], None).unwrap();
        let iid = ModulatorSpec::iid(vec![v], vec![1.0]).unwrap();
        let x = PsiFunction::for_multiplicative(&chain).eval(a).unwrap();
        let y = PsiFunction::for_multiplicative(&iid).eval(a).unwrap();
        prop_assert_eq!(x, y);
    }

    #[test]
    fn root_invariant_under_relabeling(m in rooted_markov(), shift in 1usize..4) {
        let k = m.n_states();
        let perm: Vec<usize> = (0..k).map(|i| (i + shift) % k).collect();
        let q = m.transition().unwrap();
        let values: Vec<f64> = perm.iter().map(|&i| m.values()[i]).collect();
        // Unnormalized rows rescaled by a constant and renormalized.
        let rows: Vec<Vec<f64>> = perm.iter().map(|&i| normalize(&perm.iter().map(|&j| 3.7 * q[i][j]).collect::<Vec<_>>())).collect();
        let p = ModulatorSpec::markov(values, rows, None).unwrap();
        let a = solve_alpha_star(&PsiFunction::for_multiplicative(&m)).unwrap().value;
        let b = solve_alpha_star(&PsiFunction::for_multiplicative(&p)).unwrap().value;
        prop_assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }

    #[test]
    fn iid_root_invariant_under_relabeling(v in prop::collection::vec(0.1f64..4.0, 3), w in prop::collection::vec(0.1f64..1.0, 3)) {
        let m = ModulatorSpec::iid(v.clone(), normalize(&w)).unwrap();
        prop_assume!(m.mean_log() < -0.01 && v.iter().any(|x| *x > 1.05));
        let p = ModulatorSpec::iid(vec![v[2], v[0], v[1]], normalize(&[5.0 * w[2], 5.0 * w[0], 5.0 * w[1]])).unwrap();
        let a = solve_alpha_star(&PsiFunction::for_multiplicative(&m)).unwrap().value;
        let b = solve_alpha_star(&PsiFunction::for_multiplicative(&p)).unwrap().value;
        prop_assert!((a - b).abs() < 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn two_state_closed_form(u in 1.05f64..10.0, q in 0.01f64..0.9, gap in 0.01f64..0.95) {
        let p = q + gap * (1.0 - q);
        prop_assume!(p < 0.999 && p - q > 1e-3);
        let m = ModulatorSpec::two_state_markov([u, 1.0 / u], p, q).unwrap();
        let closed = ((1.0 - q).ln() - (1.0 - p).ln()) / u.ln();
        let root = solve_alpha_star(&PsiFunction::for_multiplicative(&m)).unwrap().value;
        prop_assert!((closed - root).abs() < 1e-8, "closed {closed} eigen {root}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn queue_is_log_of_rmp(m in iid_spec(), seed in any::<u64>()) {
        let cfg = PathConfig::new(1.0).with_horizon(500);
        let a = rmp_trajectory(&m, &cfg, &mut RngStream::new(seed, 0).rng()).unwrap();
        let b = queue_trajectory(&m, &cfg, &mut RngStream::new(seed, 0).rng()).unwrap();
        prop_assert!(a.log_domain);
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert_eq!(x.to_bits(), y.to_bits());
            prop_assert!(*y >= 0.0);
        }
    }

    #[test]
    fn coupled_barriers_ordered(seed in any::<u64>(), mut ls in prop::collection::vec(1u64..40, 2..5), p in 0.1f64..0.5) {
        ls.sort_unstable();
        // P[state 0] <= 0.5 keeps the drift negative
        let m = ModulatorSpec::iid(vec![1.0, 2.0], vec![p, 1.0 - p]).unwrap();
        let o = OffspringSpec::new(vec![OffspringDist::Poisson(1.5), OffspringDist::Poisson(0.6)]).unwrap();
        let paths = coupled_rmbp_paths(&m, &o, &ls, 200, RngStream::new(seed, 0)).unwrap();
        for (k, l) in ls.iter().enumerate() {
            prop_assert!(paths[k].iter().all(|x| x >= l));
        }
        for w in paths.windows(2) {
            prop_assert!(w[0].iter().zip(&w[1]).all(|(a, b)| a <= b));
        }
    }

    #[test]
    fn ccdf_nonincreasing(seed in any::<u64>()) {
        let c = empirical_ccdf(&pareto_set(seed, 2000), 100).unwrap();
        prop_assert!(c.ccdf.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(c.grid.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn hill_and_slope_scale_free(seed in any::<u64>(), c in 0.01f64..100.0) {
        let s = pareto_set(seed, 5000);
        let t = s.scaled(c);
        let (hs, ht) = (hill_estimator(&s, 200).unwrap().alpha, hill_estimator(&t, 200).unwrap().alpha);
        // equal up to rounding of log(c x)
        prop_assert!((hs - ht).abs() <= 1e-10 * hs);
        let (cs, ct) = (empirical_ccdf(&s, 200).unwrap(), empirical_ccdf(&t, 200).unwrap());
        // window edges sit between grid points so both fits see the same points
        let lo = (cs.grid[19] * cs.grid[20]).sqrt();
        let hi = (cs.grid[180] * cs.grid[181]).sqrt();
        let fs = loglog_slope(&cs, lo, hi).unwrap();
        let ft = loglog_slope(&ct, lo / c, hi / c).unwrap();
        prop_assert_eq!(fs.n_points, ft.n_points);
        prop_assert!((fs.slope - ft.slope).abs() < 1e-12, "{} {}", fs.slope, ft.slope);
    }

    #[test]
    fn two_segments_never_worse(seed in any::<u64>()) {
        let f = double_pareto_fit(&empirical_ccdf(&pareto_set(seed, 5000), 200).unwrap()).unwrap();
        prop_assert!(f.sse <= f.single_sse + 1e-12);
    }
}
