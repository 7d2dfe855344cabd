use approx::assert_relative_eq;
use proptest::prelude::*;

use super::*;
use crate::problems::{make_problem, sample_dataset, DesignSpec, ProblemKind, ProblemParams};

fn quadratic_1d(scale: f64) -> Problem<f64> {
    // F(w) = ½ s² (w − 1)² + const
    make_problem(
        ProblemKind::LeastSquares,
        1,
        &ProblemParams {
            design: Some(DesignSpec::Points {
                points: vec![vec![scale], vec![-scale]],
            }),
            w_star: Some(vec![1.0]),
            noise_level: 0.0,
            ..Default::default()
        },
    )
    .unwrap()
}

fn rotated_quadratic(seed: u64) -> Problem<f64> {
    make_problem(
        ProblemKind::LeastSquares,
        3,
        &ProblemParams {
            design: Some(DesignSpec::RotatedHypercube {
                scales: vec![1.0, 0.7, 1.4],
                rotation_seed: seed,
            }),
            w_star: Some(vec![0.5, -0.5, 1.0]),
            noise_level: 0.2,
            ..Default::default()
        },
    )
    .unwrap()
}

fn one_d(kind: ProblemKind) -> Problem<f64> {
    make_problem(kind, 1, &ProblemParams::default()).unwrap()
}

/// Independent PL ratio oracle for the sine objective on a dense grid.
fn sine_pl_oracle(lo: f64, hi: f64, excl: f64) -> f64 {
    let mut best = f64::INFINITY;
    let mut k = 0u64;
    loop {
        let w = lo + 1e-4 * k as f64;
        if w > hi {
            break;
        }
        k += 1;
        if w.abs() <= excl {
            continue;
        }
        let f = w * w + w.sin().powi(2);
        let g = 2.0 * w + (2.0 * w).sin();
        best = best.min(g * g / (2.0 * f));
    }
    best
}

#[test]
fn qg_on_unit_quadratic_is_tight() {
    let p = quadratic_1d(1.0);
    let r = certify(Condition::Qg, Target::PopulationF, &p, None, 1.0, 200, 1).unwrap();
    assert!(r.passed);
    assert_relative_eq!(r.worst_ratio, 1.0, epsilon = 1e-12);
}

#[test]
fn sine_pl_passes_with_grid_estimate() {
    let p = one_d(ProblemKind::Pl1dSine);
    let mu = estimate_constant(ConstantKind::Pl, &p, None, &GridSpec::on_interval(-10.0, 10.0, 1e-4)).unwrap();
    let oracle = sine_pl_oracle(-10.0, 10.0, 1e-3 * p.radius());
    assert_relative_eq!(mu, oracle, max_relative = 1e-9);
    assert!((mu - 1.0742).abs() < 1e-3);
    let r = certify(Condition::Pl, Target::PopulationF, &p, None, mu, 500, 2).unwrap();
    assert!(r.passed, "ratio {}", r.worst_ratio);
}

#[test]
fn quartic_is_qg_but_not_pl() {
    let p = one_d(ProblemKind::Qg1dQuartic);
    let mu = estimate_constant(ConstantKind::Qg, &p, None, &GridSpec::on_interval(-3.0, 3.0, 1e-4)).unwrap();
    // 2(F − F*)/dist² = 2(|w| + 2)², smallest at the origin
    assert!(mu > 0.0);
    assert_relative_eq!(mu, 8.0, max_relative = 1e-3);
    let qg = certify(Condition::Qg, Target::PopulationF, &p, None, mu, 500, 3).unwrap();
    assert!(qg.passed);
    let pl = certify(Condition::Pl, Target::PopulationF, &p, None, mu, 500, 3).unwrap();
    assert!(!pl.passed);
    assert!(pl.worst_point[0][0].abs() < 1e-3, "{:?}", pl.worst_point);
    // independent re-check: F(w) − F* ≤ F′(w)²/(2μ) is violated there
    let w = pl.worst_point[0][0];
    let f = (w * w - 4.0).powi(2);
    let g = 4.0 * w * (w * w - 4.0);
    assert!(f > g * g / (2.0 * mu));
}

#[test]
fn pl_estimate_of_scaled_quadratic() {
    let p = quadratic_1d(3f64.sqrt());
    let mu = estimate_constant(ConstantKind::Pl, &p, None, &GridSpec::with_step(1e-3)).unwrap();
    assert_relative_eq!(mu, 3.0, max_relative = 1e-2);
}

#[test]
fn pl_estimate_is_stable_under_refinement() {
    for p in [one_d(ProblemKind::Pl1dSine), rotated_quadratic(4)] {
        let step = if p.dimension() == 1 { 1e-3 } else { 1.0 };
        let coarse = estimate_constant(ConstantKind::Pl, &p, None, &GridSpec::with_step(step)).unwrap();
        let fine = estimate_constant(ConstantKind::Pl, &p, None, &GridSpec::with_step(step / 2.0)).unwrap();
        assert!((coarse - fine).abs() / fine < 0.02, "{coarse} vs {fine}");
    }
}

#[test]
fn sigma_sq_of_identical_samples_is_zero() {
    let p = quadratic_1d(1.0);
    let z = p.sample(1, 0);
    let data = Dataset::new(vec![z; 10], 1, "same".into());
    let s = estimate_constant(ConstantKind::SigmaSq, &p, Some(&data), &GridSpec::with_step(0.1)).unwrap();
    assert_eq!(s, 0.0);
}

#[test]
fn estimates_match_certificates_on_least_squares() {
    let p = rotated_quadratic(9);
    let c = p.certificate().clone();
    let beta = estimate_constant(ConstantKind::SmoothBeta, &p, None, &GridSpec::with_step(0.5)).unwrap();
    assert!(beta <= c.smooth_beta.unwrap() * (1.0 + 1e-9));
    let l = estimate_constant(ConstantKind::LipschitzL, &p, None, &GridSpec::with_step(0.5)).unwrap();
    assert!(l <= c.lipschitz_l.unwrap() * (1.0 + 1e-9));
    let g = estimate_constant(ConstantKind::G, &p, None, &GridSpec::with_step(0.5)).unwrap();
    assert!(g <= c.relaxed_grad_g * (1.0 + 1e-9));
    let b = estimate_constant(ConstantKind::Bstar, &p, None, &GridSpec::with_step(0.5)).unwrap();
    let r = certify(Condition::BernsteinAtOpt, Target::PopulationF, &p, None, b, 100, 0).unwrap();
    assert!(r.passed);
    if b > 0.0 {
        let r = certify(Condition::BernsteinAtOpt, Target::PopulationF, &p, None, b * 0.5, 100, 0).unwrap();
        assert!(!r.passed);
    }
}

#[test]
fn certified_constants_pass_their_own_checks() {
    let p = rotated_quadratic(2);
    let c = p.certificate().clone();
    // the certificate σ² is the variance at w*; over the ball it is larger
    let sigma = estimate_constant(ConstantKind::SigmaSq, &p, None, &GridSpec::with_step(0.25)).unwrap();
    let checks = [
        (Condition::Lipschitz, Target::PerSampleF, c.lipschitz_l.unwrap()),
        (Condition::Smooth, Target::PerSampleF, c.smooth_beta.unwrap()),
        (Condition::Holder, Target::PerSampleF, c.holder_p),
        (Condition::RelaxedGradient, Target::PerSampleF, c.relaxed_grad_g),
        (Condition::VarianceBound, Target::PopulationF, sigma * 1.2),
        (Condition::BernsteinAtOpt, Target::PopulationF, c.bernstein_bstar),
        (Condition::Qg, Target::PopulationF, c.mu_qg.unwrap()),
        (Condition::Pl, Target::PopulationF, c.mu_pl.unwrap()),
    ];
    for (cond, target, constant) in checks {
        let r = certify(cond, target, &p, None, constant, 300, 5).unwrap();
        assert!(r.passed, "{cond:?}: {}", r.worst_ratio);
        assert_eq!(reevaluate(&r, &p, None).unwrap(), r.worst_ratio);
    }
}

#[test]
fn empirical_target_uses_erm_minimizer() {
    let p = rotated_quadratic(3);
    let data = sample_dataset(&p, 200, 4);
    let mu = estimate_constant(ConstantKind::Qg, &p, Some(&data), &GridSpec::with_step(0.5)).unwrap();
    let r = certify(Condition::Qg, Target::EmpiricalFs, &p, Some(&data), mu * 0.99, 200, 6).unwrap();
    assert!(r.passed, "{}", r.worst_ratio);
    let sigma = estimate_constant(ConstantKind::SigmaSq, &p, Some(&data), &GridSpec::with_step(0.5)).unwrap();
    let v = certify(Condition::VarianceBound, Target::EmpiricalFs, &p, Some(&data), sigma, 200, 6).unwrap();
    // random probes are inside the grid's convex hull but not on it
    assert!(v.worst_ratio <= 1.05);
}

#[test]
fn rejects_bad_requests() {
    let p = quadratic_1d(1.0);
    assert!(certify(Condition::Qg, Target::PerSampleF, &p, None, 1.0, 200, 0).is_err());
    assert!(certify(Condition::Qg, Target::PopulationF, &p, None, 1.0, 99, 0).is_err());
    assert!(certify(Condition::Qg, Target::PopulationF, &p, None, 0.0, 200, 0).is_err());
    assert!(certify(Condition::Qg, Target::EmpiricalFs, &p, None, 1.0, 200, 0).is_err());
    let tiny = GridSpec {
        step: 1e-4,
        bounds: Some(vec![(1.0, 1.0)]),
        exclusion_radius: None,
    };
    assert!(matches!(
        estimate_constant(ConstantKind::Pl, &p, None, &tiny),
        Err(Error::Config(_))
    ));
}

#[test]
fn infinite_ratio_serializes_as_string() {
    let p = one_d(ProblemKind::Qg1dQuartic);
    let mut r = certify(Condition::Pl, Target::PopulationF, &p, None, 8.0, 200, 0).unwrap();
    r.worst_ratio = f64::INFINITY;
    let v = r.to_json();
    assert_eq!(v["worst_ratio"], "inf");
    assert_eq!(v["condition"], "pl");
    assert_eq!(v["probes"], r.probe_count);
}

#[test]
fn monte_carlo_population_target_carries_error_bars() {
    let params = |samples| ProblemParams {
        design: Some(DesignSpec::Hypercube { radius: 1.0 }),
        w_star: Some(vec![1.0, 0.0]),
        noise_level: 0.5,
        pop_risk_mode: PopRiskMode::MonteCarlo { samples, seed: 1 },
        ..Default::default()
    };
    let p: Problem<f64> = make_problem(ProblemKind::LeastSquares, 2, &params(4000)).unwrap();
    // QG at half the true constant leaves a wide margin
    let r = certify(Condition::Qg, Target::PopulationF, &p, None, 0.25, 100, 2).unwrap();
    assert!(r.mc_error_bar.is_some());
    assert!(r.passed);
    // at the tight constant the margin vanishes and the bars dominate
    let tight: Problem<f64> = make_problem(ProblemKind::LeastSquares, 2, &params(50)).unwrap();
    let r = certify(Condition::Qg, Target::PopulationF, &tight, None, 0.5, 100, 2);
    assert!(matches!(r, Err(Error::MonteCarloTooNoisy { .. })), "{r:?}");
}

#[test]
fn hierarchy_on_strongly_convex_quadratic() {
    let p = quadratic_1d(1.0);
    let audit = hierarchy_audit(&p, &ChainConstants::from_strong_convexity(1.0, p.radius()), 200, 7).unwrap();
    assert_eq!(audit.results.len(), 6);
    assert!(audit.all_passed(), "{:?}", audit.first_failure);
    let (estimate, record) = audit.convex_pl.clone().unwrap();
    assert!(estimate > 0.0);
    assert!(record.unwrap().passed);
    let names: Vec<_> = audit.results.iter().map(|r| r.condition).collect();
    assert_eq!(
        names,
        vec![Condition::Sc, Condition::Wsc, Condition::Rsi, Condition::Eb, Condition::Pl, Condition::Qg]
    );
}

#[test]
fn hierarchy_on_sine_and_quartic() {
    let sine = one_d(ProblemKind::Pl1dSine);
    let mu = estimate_constant(ConstantKind::Pl, &sine, None, &GridSpec::with_step(1e-4)).unwrap();
    let audit = hierarchy_audit(&sine, &ChainConstants::from_strong_convexity(mu, sine.radius()), 300, 8).unwrap();
    assert_eq!(audit.first_failure, Some(Condition::Sc));
    assert!(audit.result(Condition::Pl).unwrap().passed);
    assert!(audit.result(Condition::Qg).unwrap().passed);

    let quartic = one_d(ProblemKind::Qg1dQuartic);
    let audit = hierarchy_audit(&quartic, &ChainConstants::from_strong_convexity(8.0, quartic.radius()), 300, 8).unwrap();
    assert!(audit.result(Condition::Qg).unwrap().passed);
    let pl = audit.result(Condition::Pl).unwrap();
    assert!(!pl.passed);
    assert!(pl.worst_point[0][0].abs() < 1e-3);
    assert!(audit.convex_pl.is_none());
}

#[test]
fn failing_worst_points_violate_the_inequality() {
    // smoothness claimed too small on a quadratic with curvature 4
    let p = quadratic_1d(2.0);
    let r = certify(Condition::Smooth, Target::PerSampleF, &p, None, 3.0, 200, 9).unwrap();
    assert!(!r.passed);
    let (a, b) = (r.worst_point[0][0], r.worst_point[1][0]);
    let z = r.worst_sample.clone().unwrap();
    let g = |w: f64| (w * z.x[0] - z.y) * z.x[0];
    assert!((g(a) - g(b)).abs() > 3.0 * (a - b).abs());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn pl_pass_implies_qg_pass(seed in 0u64..1000, frac in 0.1f64..1.0) {
        let p = rotated_quadratic(seed);
        let mu = p.certificate().mu_pl.unwrap() * frac;
        let pl = certify(Condition::Pl, Target::PopulationF, &p, None, mu, 150, seed).unwrap();
        let qg = certify(Condition::Qg, Target::PopulationF, &p, None, mu, 150, seed).unwrap();
        prop_assert!(!pl.passed || qg.passed);
    }

    #[test]
    fn monotone_in_constant(seed in 0u64..1000, c in 0.05f64..20.0, factor in 1.0f64..4.0) {
        let p = rotated_quadratic(seed % 7);
        for cond in [Condition::Smooth, Condition::Lipschitz] {
            let lo = certify(cond, Target::PerSampleF, &p, None, c, 120, seed).unwrap();
            let hi = certify(cond, Target::PerSampleF, &p, None, c * factor, 120, seed).unwrap();
            prop_assert!(!lo.passed || hi.passed);
        }
        for cond in [Condition::Qg, Condition::Pl] {
            let hi = certify(cond, Target::PopulationF, &p, None, c, 120, seed).unwrap();
            let lo = certify(cond, Target::PopulationF, &p, None, c / factor, 120, seed).unwrap();
            prop_assert!(!hi.passed || lo.passed);
        }
    }

    #[test]
    fn worst_points_reproduce(seed in 0u64..1000, c in 0.1f64..3.0) {
        let p = one_d(ProblemKind::Qg1dQuartic);
        for cond in [Condition::Qg, Condition::Pl, Condition::Rsi, Condition::Eb] {
            let r = certify(cond, Target::PopulationF, &p, None, c, 100, seed).unwrap();
            let again = reevaluate(&r, &p, None).unwrap();
            prop_assert!(again == r.worst_ratio || (again.is_infinite() && r.worst_ratio.is_infinite()));
        }
    }
}
