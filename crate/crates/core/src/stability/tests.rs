use approx::assert_relative_eq;
use proptest::prelude::*;

use super::*;
use crate::optim::{erm_solve, optimization_error};
use crate::problems::{make_problem, DesignSpec, ProblemParams};

fn line_problem() -> Problem<f64> {
    make_problem(
        ProblemKind::LeastSquares,
        1,
        &ProblemParams {
            design: Some(DesignSpec::Points { points: vec![vec![1.0]] }),
            w_star: Some(vec![0.0]),
            noise_level: 1.0,
            ..Default::default()
        },
    )
    .unwrap()
}

fn noisy_plane(noise: f64) -> Problem<f64> {
    make_problem(
        ProblemKind::LeastSquares,
        2,
        &ProblemParams {
            design: Some(DesignSpec::ScaledHypercube { scales: vec![1.0, 0.6] }),
            w_star: Some(vec![0.8, -0.4]),
            noise_level: noise,
            ..Default::default()
        },
    )
    .unwrap()
}

fn z(x: f64, y: f64) -> Sample<f64> {
    Sample { x: vec![x], y }
}

#[test]
fn replacing_one_label_moves_the_erm() {
    let p = line_problem();
    let s = Dataset::new(vec![z(1.0, 1.0), z(1.0, 1.0)], 0, "s".into());
    let probes = [z(1.0, 1.0), z(1.0, -1.0)];
    let sup = replace_one_sup(&p, &Algorithm::Erm, &s, 2, z(1.0, -1.0), &probes, 0).unwrap();
    assert_relative_eq!(sup, 1.5, epsilon = 1e-12);
}

#[test]
fn identical_replacement_gives_zero() {
    let p = noisy_plane(0.5);
    let data = sample_dataset(&p, 20, 3);
    let probes = default_probe_grid(&p);
    let sgd = Algorithm::Sgd {
        steps: 400,
        schedule: StepSchedule::Constant { eta: 0.1 },
    };
    for alg in [Algorithm::Erm, sgd] {
        for i in [1, 7, 20] {
            let same = data.samples()[i - 1].clone();
            assert_eq!(replace_one_sup(&p, &alg, &data, i, same, &probes, 9).unwrap(), 0.0);
        }
    }
}

#[test]
fn report_invariants_and_determinism() {
    let p = noisy_plane(0.5);
    let probes = default_probe_grid(&p);
    let idx = default_replacement_indices(12, 0);
    let a = empirical_uniform_stability(&p, 12, &Algorithm::Erm, &idx, &probes, 5, 0.2, 11).unwrap();
    let b = empirical_uniform_stability(&p, 12, &Algorithm::Erm, &idx, &probes, 5, 0.2, 11).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.per_index_sup.len(), 12);
    assert!(a.per_index_sup.iter().all(|&v| v >= 0.0));
    assert_eq!(a.empirical_sup, a.per_index_sup.iter().copied().fold(0.0, f64::max));
    assert!(a.quantile_1_minus_delta <= a.empirical_sup);
    assert_eq!(a.probe_grid_size, probes.len());
}

#[test]
fn probe_grid_and_indices() {
    let p = noisy_plane(0.5);
    // 4 design points, two labels each
    assert_eq!(default_probe_grid(&p).len(), 8);
    assert_eq!(default_probe_grid(&noisy_plane(0.0)).len(), 4);
    assert_eq!(default_replacement_indices(64, 1), (1..=64).collect::<Vec<_>>());
    let idx = default_replacement_indices(500, 1);
    assert_eq!(idx.len(), SAMPLED_INDICES);
    assert!(idx.windows(2).all(|w| w[0] < w[1]));
    assert!(idx.iter().all(|&i| (1..=500).contains(&i)));
    assert_eq!(idx, default_replacement_indices(500, 1));
}

#[test]
fn bad_requests_are_refused() {
    let p = noisy_plane(0.5);
    let probes = default_probe_grid(&p);
    assert!(empirical_uniform_stability(&p, 8, &Algorithm::Erm, &[1], &[], 1, 0.1, 0).is_err());
    assert!(empirical_uniform_stability(&p, 8, &Algorithm::Erm, &[9], &probes, 1, 0.1, 0).is_err());
    assert!(empirical_uniform_stability(&p, 8, &Algorithm::Erm, &[0], &probes, 1, 0.1, 0).is_err());
    assert!(empirical_uniform_stability(&p, 8, &Algorithm::Erm, &[1], &probes, 1, 1.0, 0).is_err());
}

#[test]
fn divergence_reports_the_trial() {
    let p = noisy_plane(0.5);
    let probes = default_probe_grid(&p);
    let alg = Algorithm::Sgd {
        steps: 1000,
        schedule: StepSchedule::Constant { eta: 5.0 },
    };
    let err = empirical_uniform_stability(&p, 8, &alg, &[1], &probes, 2, 0.1, 0).unwrap_err();
    assert!(matches!(err, Error::Trial { trial: 0, .. }), "{err}");
    assert!(matches!(err.root(), Error::Diverged { .. }));
}

#[test]
fn closed_form_bounds() {
    let erm = theoretical_stability_bound(&BoundKind::ErmQg { l: 1.0, mu: 1.0, n: 100 }).unwrap();
    assert_relative_eq!(erm.value, 0.04, epsilon = 1e-15);
    assert_eq!(erm.vacuous, None);
    let sgd = theoretical_stability_bound(&BoundKind::SgdQg {
        l: 1.0,
        mu: 1.0,
        n: 100,
        eps_opt: 0.0,
    })
    .unwrap();
    assert_relative_eq!(sgd.value, 0.04, epsilon = 1e-15);
    let exp = theoretical_stability_bound(&BoundKind::ExpansionNonconvex {
        c: 1.0,
        beta: 1.0,
        t: 1000,
        n: 10_000,
        delta: 0.05,
        loss_bound_m: 1.0,
    })
    .unwrap();
    let oracle = 1000.0 * (200_000f64.ln() / 10_000.0).sqrt();
    assert_relative_eq!(exp.value, oracle, max_relative = 1e-12);
    assert_eq!(exp.vacuous, Some(true));
    assert!(theoretical_stability_bound(&BoundKind::ErmQg { l: 1.0, mu: 0.0, n: 10 }).is_err());
    assert!(theoretical_stability_bound(&BoundKind::ErmQg { l: -1.0, mu: 1.0, n: 10 }).is_err());
    assert!(theoretical_stability_bound(&BoundKind::SgdQg {
        l: 1.0,
        mu: 1.0,
        n: 10,
        eps_opt: -1.0
    })
    .is_err());
}

#[test]
fn klochkov_and_bernstein_arithmetic() {
    let v = klochkov_excess_bound(0.0, 0.0, 0.0, 1.0, 0.0, 100, 1.0, (-1f64).exp()).unwrap();
    assert_relative_eq!(v, 0.02, epsilon = 1e-15);
    let v = klochkov_excess_bound(0.04, 0.0, 0.0, 0.0, 0.0, 100, 1.0, (-1f64).exp()).unwrap();
    assert_relative_eq!(v, 2.0 * 0.04 * 100f64.ln(), epsilon = 1e-12);
    assert_relative_eq!(v, 0.368, epsilon = 1e-3);
    assert_eq!(bernstein_from_qg(1.0, 2.0).unwrap(), 1.0);
    assert!(klochkov_excess_bound(0.0, 0.0, 0.0, 1.0, 0.0, 100, 0.0, 0.5).is_err());
}

#[test]
fn erm_stability_is_dominated_by_the_qg_bound() {
    let p = noisy_plane(0.5);
    let c = p.certificate();
    let probes = default_probe_grid(&p);
    for n in [16, 32, 64] {
        let idx = default_replacement_indices(n, 0);
        let r = empirical_uniform_stability(&p, n, &Algorithm::Erm, &idx, &probes, 3, 0.1, 5).unwrap();
        let bound = theoretical_stability_bound(&BoundKind::ErmQg {
            l: c.lipschitz_l.unwrap(),
            mu: c.mu_qg.unwrap(),
            n,
        })
        .unwrap();
        assert!(r.empirical_sup > 0.0);
        assert!(r.empirical_sup <= bound.value, "n={n}: {} > {}", r.empirical_sup, bound.value);
    }
}

#[test]
fn sgd_stability_is_dominated_with_measured_optimization_error() {
    let p = noisy_plane(0.5);
    let c = p.certificate().clone();
    let (mu, beta) = (c.mu_qg.unwrap(), c.smooth_beta.unwrap());
    let n = 16;
    let schedule = StepSchedule::inverse_time_for(mu, beta);
    let alg = Algorithm::Sgd { steps: n * n, schedule };
    let probes = default_probe_grid(&p);
    let idx = default_replacement_indices(n, 0);
    let trials = 3;
    let seed = 21;
    let r = empirical_uniform_stability(&p, n, &alg, &idx, &probes, trials, 0.1, seed).unwrap();

    // ε_opt over every dataset the runs saw
    let mut eps_opt = 0.0f64;
    for t in 0..trials {
        let (data_seed, replace_seed, sgd_seed) = trial_seeds(seed, t);
        let base = sample_dataset(&p, n, data_seed);
        let mut sets = vec![base.clone()];
        sets.extend(idx.iter().map(|&i| base.replaced(i - 1, p.sample(replace_seed, (i - 1) as u64))));
        for s in sets {
            let w = alg.run(&p, &s, sgd_seed).unwrap();
            let erm = erm_solve(&s, &p).unwrap();
            eps_opt = eps_opt.max(optimization_error(&p, &w, &erm, &s).value);
        }
    }
    let bound = theoretical_stability_bound(&BoundKind::SgdQg {
        l: c.lipschitz_l.unwrap(),
        mu,
        n,
        eps_opt,
    })
    .unwrap();
    assert!(r.empirical_sup <= bound.value, "{} > {}", r.empirical_sup, bound.value);
}

#[test]
fn sweep_csv_layout() {
    let rows = [StabilitySweepRow {
        n: 16,
        algorithm: Algorithm::Erm.label(),
        empirical_sup: 0.5,
        quantile: 0.25,
        bound_erm_qg: Some(2.0),
        bound_sgd_qg: None,
        bound_expansion: None,
    }];
    let mut out = Vec::new();
    write_stability_csv(&rows, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "n,algorithm,empirical_sup,q_1_minus_delta,bound_erm_qg,bound_sgd_qg,bound_expansion"
    );
    assert_eq!(lines[1], "16,erm,5e-1,2.5e-1,2e0,,");
}

#[test]
fn nearest_rank_conventions() {
    let v: Vec<f64> = (1..=100).map(f64::from).collect();
    assert_eq!(nearest_rank(&v, 0.95), 95.0);
    assert_eq!(nearest_rank(&v, 0.5), 50.0);
    assert_eq!(nearest_rank(&[3.0; 7], 0.9), 3.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn zero_replacement_is_exactly_stable(seed in any::<u64>(), n in 2usize..20, i in 0usize..20, sgd in any::<bool>()) {
        let p = noisy_plane(0.3);
        let data = sample_dataset(&p, n, seed);
        let i = i % n + 1;
        let alg = if sgd {
            Algorithm::Sgd { steps: 50, schedule: StepSchedule::Constant { eta: 0.2 } }
        } else {
            Algorithm::Erm
        };
        let same = data.samples()[i - 1].clone();
        let gap = replace_one_sup(&p, &alg, &data, i, same, &default_probe_grid(&p), seed).unwrap();
        prop_assert_eq!(gap, 0.0);
    }

    #[test]
    fn report_sup_is_max_of_entries(seed in any::<u64>(), n in 4usize..12, trials in 1usize..4) {
        let p = noisy_plane(0.3);
        let idx = default_replacement_indices(n, seed);
        let r = empirical_uniform_stability(&p, n, &Algorithm::Erm, &idx, &default_probe_grid(&p), trials, 0.25, seed).unwrap();
        prop_assert!(r.per_index_sup.iter().all(|&v| v >= 0.0));
        prop_assert_eq!(r.empirical_sup, r.per_index_sup.iter().copied().fold(0.0, f64::max));
        prop_assert!(r.quantile_1_minus_delta <= r.empirical_sup);
    }
}
