//! Distributional invariants of the engine, checked by simulation.

use rmbp_core::engine::{backward_sup_samples, replicate, rmbp_samples, rmp_samples, run_mbp, PathConfig};
use rmbp_core::modulator::sample_state_path;
use rmbp_core::offspring::sample_offspring_sum;
use rmbp_core::tail::{ks_two_sample, SortedSample};
use rmbp_core::{LogLaw, ModulatorSpec, OffspringDist, OffspringSpec, RngStream, TailFn};

fn figure_two() -> (ModulatorSpec, OffspringSpec) {
    let m = ModulatorSpec::iid(vec![1.0, 2.0], vec![0.4, 0.6]).unwrap();
    let o = OffspringSpec::new(vec![OffspringDist::Poisson(1.5), OffspringDist::Poisson(0.6)]).unwrap();
    (m, o)
}

fn mm1() -> ModulatorSpec {
    ModulatorSpec::continuous(LogLaw::Lindley {
        service: TailFn::Exponential { rate: 2.0 },
        arrival_rate: 1.0,
    })
    .unwrap()
}

#[test]
fn aggregated_sums_match_individual_draws() {
    let families = [
        OffspringDist::Deterministic(2),
        OffspringDist::Poisson(1.3),
        OffspringDist::ShiftedPoisson { shift: 1, mean: 0.7 },
        OffspringDist::TwoPoint { a: 0, b: 3, p: 0.4 },
        OffspringDist::GeneralDiscrete { support: vec![0, 1, 3], probs: vec![0.2, 0.5, 0.3] },
    ];
    for (f, d) in families.iter().enumerate() {
        let spec = OffspringSpec::new(vec![d.clone()]).unwrap();
        for n in [1u64, 7, 100] {
            let draws = 100_000;
            let stream = RngStream::new(11, f as u64 * 1000 + n);
            let agg = replicate(draws, stream.child(0), |_, rng| sample_offspring_sum(&spec, 0, n, rng)).unwrap();
            let ind = replicate(draws, stream.child(1), |_, rng| Ok((0..n).map(|_| d.sample_one(rng)).sum::<u64>())).unwrap();
            let a: Vec<f64> = agg.iter().map(|x| *x as f64).collect();
            let b: Vec<f64> = ind.iter().map(|x| *x as f64).collect();
            let ks = ks_two_sample(&a, &b).unwrap();
            assert!(ks.p_value > 0.01, "{d:?} n={n}: {ks:?}");
        }
    }
}

#[test]
fn same_stream_same_output() {
    let (m, o) = figure_two();
    let cfg = PathConfig::new(5.0);
    let a = rmbp_samples(&m, &o, &cfg, 2000, RngStream::new(5, 2)).unwrap();
    let b = rmbp_samples(&m, &o, &cfg, 2000, RngStream::new(5, 2)).unwrap();
    assert_eq!(a.logs, b.logs);
    let c = rmbp_samples(&m, &o, &cfg, 2000, RngStream::new(5, 3)).unwrap();
    assert_ne!(a.logs, c.logs);
}

#[test]
fn thread_count_does_not_matter() {
    let m = mm1();
    let cfg = PathConfig::new(1.0);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| rmp_samples(&m, &cfg, 5000, RngStream::new(9, 0)).unwrap())
    };
    let one = run(1);
    let four = run(4);
    assert_eq!(
        one.logs.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
        four.logs.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
    );
}

#[test]
fn markov_occupation_converges() {
    let m = ModulatorSpec::markov(
        vec![0.5, 1.0, 2.0],
        vec![vec![0.8, 0.1, 0.1], vec![0.3, 0.4, 0.3], vec![0.05, 0.15, 0.8]],
        None,
    )
    .unwrap();
    let pi = m.stationary();
    let horizon = 1_000_000;
    let path = sample_state_path(&m, horizon, &mut RngStream::new(3, 0).rng()).unwrap();
    // batch means give a standard error that accounts for correlation
    let batches = 100;
    let len = horizon / batches;
    for (j, p) in pi.iter().enumerate() {
        let means: Vec<f64> = path
            .chunks(len)
            .map(|c| c.iter().filter(|s| **s == j).count() as f64 / c.len() as f64)
            .collect();
        let mean = means.iter().sum::<f64>() / batches as f64;
        let var = means.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
        let se = (var / batches as f64).sqrt();
        assert!((mean - p).abs() < 3.0 * se, "state {j}: {mean} vs {p} (se {se})");
    }
}

#[test]
fn backward_and_forward_agree() {
    let m = mm1();
    let fwd = rmp_samples(&m, &PathConfig::new(1.0), 20_000, RngStream::new(21, 0)).unwrap();
    let bwd = backward_sup_samples(&m, None, 20_000, RngStream::new(21, 1)).unwrap();
    let ks = ks_two_sample(&fwd.logs, &bwd.logs).unwrap();
    assert!(ks.p_value > 0.01, "{ks:?}");
}

#[test]
fn reflected_samples_stay_above_barrier() {
    let (m, o) = figure_two();
    let s = rmbp_samples(&m, &o, &PathConfig::new(13.0), 5000, RngStream::new(4, 0)).unwrap();
    assert!(s.values().all(|x| x >= 13.0 - 1e-9));
    let r = rmp_samples(&mm1(), &PathConfig::new(1.0), 5000, RngStream::new(4, 1)).unwrap();
    assert!(r.logs.iter().all(|x| *x >= 0.0));
}

#[test]
fn superadditive_in_barrier() {
    let (m, o) = figure_two();
    let n = 100_000;
    let big = rmbp_samples(&m, &o, &PathConfig::new(10.0), n, RngStream::new(31, 0)).unwrap();
    let a = rmbp_samples(&m, &o, &PathConfig::new(5.0), n, RngStream::new(31, 1)).unwrap();
    let b = rmbp_samples(&m, &o, &PathConfig::new(5.0), n, RngStream::new(31, 2)).unwrap();
    let sum: Vec<f64> = a.values().zip(b.values()).map(|(x, y)| (x + y).round()).collect();
    let big = SortedSample::new(&big);
    let sum = SortedSample::from_values(&sum);
    for i in 0..200 {
        let x = 10.0 * 1000f64.powf(i as f64 / 199.0);
        let (p, q) = (big.ccdf(x), sum.ccdf(x));
        let se = (big.ccdf_se(x).powi(2) + sum.ccdf_se(x).powi(2)).sqrt();
        assert!(p <= q + 3.0 * se, "x={x}: {p} > {q} (se {se})");
    }
}

#[test]
fn subcritical_paths_die_out() {
    let (m, o) = figure_two();
    let horizons = [10u64, 30, 100, 300, 1000];
    let absorbed = replicate(10_000, RngStream::new(41, 0), |_, rng| {
        Ok(run_mbp(&m, &o, 10, 1000, rng)?.absorbed_at)
    })
    .unwrap();
    let fractions: Vec<f64> = horizons
        .iter()
        .map(|h| absorbed.iter().filter(|a| a.is_some_and(|n| n as u64 <= *h)).count() as f64 / 1e4)
        .collect();
    assert!(fractions.windows(2).all(|w| w[1] >= w[0]), "{fractions:?}");
    assert!(fractions[4] >= 0.99, "{fractions:?}");
}
