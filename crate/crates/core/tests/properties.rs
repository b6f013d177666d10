use privcvar::estimators::{
    nonprivate_convex_cvar, private_convex_cvar, private_scalar_cvar, ConvexLearnerConfig,
    ConvexProblem,
};
use privcvar::harness::fit_power_law;
use privcvar::instances::{
    EmbeddedLinearProblem, LinearLowerFamily, PackingInstance, ScalarHardPair, SignVectorSource,
};
use privcvar::mechanisms::exponential_mechanism_probabilities;
use privcvar::risk::{
    empirical_cvar, lifted_loss, lifted_subgradient, population_cvar_discrete, ru_objective,
};
use privcvar::{
    BoundedLossVector, LiftedPoint, LossBound, PrivacyBudget, RandomStream, SensitivityValue,
    TailMass,
};
use proptest::prelude::*;

fn sample_strategy(max_n: usize) -> impl Strategy<Value = (Vec<f64>, f64, f64)> {
    (0.1f64..5.0, 1..=max_n).prop_flat_map(|(b, n)| {
        (
            prop::collection::vec(
                prop_oneof![
                    Just(0.0),
                    Just(1.0),
                    0.0f64..=1.0,
                    (0u8..=4).prop_map(|k| k as f64 / 4.0)
                ],
                n,
            ),
            Just(b),
            0.01f64..=1.0,
        )
            .prop_map(|(v, b, tau)| (v.into_iter().map(|x| x * b).collect(), b, tau))
    })
}

fn vector(values: &[f64], b: f64) -> BoundedLossVector {
    BoundedLossVector::new(values.to_vec(), LossBound::new(b).unwrap()).unwrap()
}

/// Maximum of `Σ q_i x_i` over the vertices of `{0 ≤ q_i ≤ 1/(nτ), Σ q_i = 1}`:
/// every vertex has all coordinates at a bound except possibly one.
fn vertex_brute_force(x: &[f64], tau: f64) -> f64 {
    let n = x.len();
    let cap = 1.0 / (n as f64 * tau);
    let mut best = f64::NEG_INFINITY;
    for mask in 0u32..(1 << n) {
        let full = mask.count_ones() as f64;
        let rest = 1.0 - full * cap;
        if rest < -1e-12 || rest > cap + 1e-12 {
            continue;
        }
        let base: f64 = (0..n)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| cap * x[i])
            .sum();
        if rest <= 1e-12 {
            best = best.max(base);
        }
        for j in (0..n).filter(|j| mask >> j & 1 == 0) {
            best = best.max(base + rest.max(0.0) * x[j]);
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn cvar_is_the_ru_minimum_over_breakpoints((v, b, tau) in sample_strategy(10)) {
        let s = vector(&v, b);
        let t = TailMass::new(tau).unwrap();
        let brute = v
            .iter()
            .chain([0.0, b].iter())
            .map(|&eta| ru_objective(eta, &s, t).unwrap())
            .fold(f64::INFINITY, f64::min);
        prop_assert!((empirical_cvar(&s, t) - brute).abs() <= 1e-10 * b.max(1.0));
    }

    #[test]
    fn cvar_matches_vertex_enumeration((v, b, tau) in sample_strategy(8)) {
        let s = vector(&v, b);
        let got = empirical_cvar(&s, TailMass::new(tau).unwrap());
        prop_assert!((got - vertex_brute_force(&v, tau)).abs() <= 1e-9 * b.max(1.0));
    }

    #[test]
    fn cvar_monotone_in_tau_and_above_mean((v, b, tau) in sample_strategy(12), shrink in 0.05f64..1.0) {
        let s = vector(&v, b);
        let wide = empirical_cvar(&s, TailMass::new(tau).unwrap());
        let narrow = empirical_cvar(&s, TailMass::new(tau * shrink).unwrap());
        let tol = 1e-12 * b.max(1.0);
        prop_assert!(narrow >= wide - tol);
        prop_assert!(wide >= s.mean() - tol);
        prop_assert!((empirical_cvar(&s, TailMass::new(1.0).unwrap()) - s.mean()).abs() <= tol);
    }

    #[test]
    fn one_record_change_within_sensitivity(
        (v, b, tau) in sample_strategy(12),
        idx in any::<prop::sample::Index>(),
        new in 0.0f64..=1.0,
    ) {
        let s = vector(&v, b);
        let t = TailMass::new(tau).unwrap();
        let i = idx.index(v.len());
        let moved = s.with_value(i, new * b).unwrap();
        let bound = b * (1.0f64).min(1.0 / (v.len() as f64 * tau));
        prop_assert!((empirical_cvar(&s, t) - empirical_cvar(&moved, t)).abs() <= bound + 1e-12);
    }

    #[test]
    fn lifted_average_moves_at_most_b_over_ntau(
        (v, b, tau) in sample_strategy(12),
        idx in any::<prop::sample::Index>(),
        new in 0.0f64..=1.0,
        lambda in 0.1f64..3.0,
        u_frac in 0.0f64..=1.0,
    ) {
        let bound = LossBound::new(b).unwrap();
        let t = TailMass::new(tau).unwrap();
        let point = LiftedPoint::new(vec![], u_frac * b / lambda);
        let avg = |xs: &[f64]| -> f64 {
            xs.iter().map(|&x| lifted_loss(&point, x, lambda, t, bound).unwrap()).sum::<f64>()
                / xs.len() as f64
        };
        let mut moved = v.clone();
        moved[idx.index(v.len())] = new * b;
        let change = (avg(&v) - avg(&moved)).abs();
        prop_assert!(change <= b / (v.len() as f64 * tau) + 1e-12);
    }

    #[test]
    fn lifted_subgradient_matches_finite_difference(
        loss_frac in 0.0f64..=1.0,
        u_frac in 0.0f64..=1.0,
        lambda in 0.2f64..3.0,
        tau in 0.05f64..=1.0,
        slope in -1.0f64..=1.0,
    ) {
        // scalar loss ℓ(w) = c + slope·w around w = 0; the lifted loss in u is piecewise linear
        let b = 1.0;
        let bound = LossBound::new(b).unwrap();
        let t = TailMass::new(tau).unwrap();
        let u = u_frac * b / lambda;
        let loss = 0.25 + 0.5 * loss_frac;
        prop_assume!((loss - lambda * u).abs() > 1e-3);
        let h = 1e-7;
        let f = |w: f64, u: f64| {
            lifted_loss(&LiftedPoint::new(vec![w], u), loss + slope * w, lambda, t, bound).unwrap()
        };
        let u_probe = u.clamp(h, b / lambda - h);
        prop_assume!((loss - lambda * u_probe).abs() > 1e-3);
        let (gw, gu) = lifted_subgradient(
            &LiftedPoint::new(vec![0.0], u_probe), loss, &[slope], lambda, t, bound, 1.0,
        ).unwrap();
        let fd_w = (f(h, u_probe) - f(-h, u_probe)) / (2.0 * h);
        let fd_u = (f(0.0, u_probe + h) - f(0.0, u_probe - h)) / (2.0 * h);
        let rel = |a: f64, e: f64| (a - e).abs() / e.abs().max(1.0);
        prop_assert!(rel(fd_w, gw[0]) <= 1e-5);
        prop_assert!(rel(fd_u, gu) <= 1e-5);
    }

    #[test]
    fn exponential_mechanism_shift_invariant(
        scores in prop::collection::vec(-5.0f64..5.0, 2..16),
        shift in -100.0f64..100.0,
        eps in 0.1f64..2.0,
    ) {
        let sens = SensitivityValue::new(0.5).unwrap();
        let budget = PrivacyBudget::pure(eps).unwrap();
        let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
        let a = exponential_mechanism_probabilities(&scores, sens, budget).unwrap();
        let c = exponential_mechanism_probabilities(&shifted, sens, budget).unwrap();
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (x, y) in a.iter().zip(&c) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn private_scalar_output_stays_in_range((v, b, tau) in sample_strategy(12), eps in 0.01f64..5.0, seed in any::<u64>()) {
        let s = vector(&v, b);
        let budget = PrivacyBudget::pure(eps).unwrap();
        let mut rng = RandomStream::new(seed, 0);
        let r = private_scalar_cvar(&s, TailMass::new(tau).unwrap(), budget, &mut rng).unwrap();
        prop_assert!((0.0..=b).contains(&r.output));
        prop_assert_eq!(r.budget, Some(budget));
    }

    #[test]
    fn scalar_pairs_are_valid_and_gaps_exact(
        n in 1usize..100_000,
        tau in 0.001f64..=1.0,
        eps in 0.01f64..=1.0,
        b in 0.1f64..10.0,
        c in 0.01f64..=1.0,
    ) {
        let t = TailMass::new(tau).unwrap();
        let bound = LossBound::new(b).unwrap();
        let pairs = [
            ScalarHardPair::privacy(n, t, PrivacyBudget::pure(eps).unwrap(), bound, c).unwrap(),
            ScalarHardPair::statistical(n, t, bound, c.min(0.5)).unwrap(),
        ];
        for pair in pairs {
            let [d0, d1] = pair.distributions();
            for d in [d0, d1] {
                let total: f64 = d.atoms().iter().map(|a| a.1).sum();
                prop_assert!((total - 1.0).abs() <= 1e-12);
                prop_assert!(d.atoms().iter().all(|&(v, p)| p >= 0.0 && (0.0..=b).contains(&v)));
            }
            let recomputed = population_cvar_discrete(d1, t) - population_cvar_discrete(d0, t);
            prop_assert!((recomputed - pair.gap).abs() <= 1e-12 * b.max(1.0));
        }
    }

    #[test]
    fn packing_gaps_match_population_cvar(
        m in 2usize..12,
        n in 1usize..10_000,
        tau in 0.01f64..=1.0,
        eps in 0.01f64..=1.0,
    ) {
        let t = TailMass::new(tau).unwrap();
        let bound = LossBound::new(1.0).unwrap();
        let inst = PackingInstance::new(m, n, t, PrivacyBudget::pure(eps).unwrap(), bound, 0.125).unwrap();
        prop_assert!(inst.p() <= tau);
        for j in 0..m {
            let best = population_cvar_discrete(&inst.loss_distribution(j, j).unwrap(), t);
            for r in 0..m {
                let value = population_cvar_discrete(&inst.loss_distribution(r, j).unwrap(), t);
                prop_assert!((value - best - inst.excess(r, j)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn power_law_fit_has_valid_r_squared(
        ys in prop::collection::vec(1e-6f64..1e3, 3..10),
    ) {
        let xs: Vec<f64> = (1..=ys.len()).map(|i| i as f64).collect();
        let f = fit_power_law("n", &xs, &ys).unwrap();
        prop_assert!((0.0..=1.0).contains(&f.r_squared));
        prop_assert_eq!(f.n_points, ys.len());
    }
}

fn linear_problem(d: usize, seed: u64) -> EmbeddedLinearProblem {
    let family = LinearLowerFamily::new(d, 1.0, 1.0, LossBound::new(1.0).unwrap()).unwrap();
    let mut rng = RandomStream::new(seed, 0);
    let source =
        SignVectorSource::antipodal(SignVectorSource::random_signs(d, &mut rng), 0.5).unwrap();
    EmbeddedLinearProblem::new(family, source).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn convex_output_in_domain_and_lifted_value_dominates_cvar(
        d in 1usize..6,
        n in 50usize..400,
        tau in 0.1f64..=1.0,
        eps in 0.2f64..=1.0,
        seed in any::<u64>(),
    ) {
        let problem = linear_problem(d, seed);
        let t = TailMass::new(tau).unwrap();
        let mut rng = RandomStream::new(seed, 1);
        let sample = problem.sample(n, tau, &mut rng);
        let budget = PrivacyBudget::new(eps, 1.0 / (n * n) as f64).unwrap();
        let report = private_convex_cvar(&problem, &sample, t, budget, &ConvexLearnerConfig::default(), &mut rng).unwrap();
        prop_assert_eq!(report.budget, Some(budget));
        let out = &report.output;
        let mut projected = out.w.clone();
        problem.project(&mut projected);
        let drift: f64 = projected.iter().zip(&out.w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(drift <= 1e-9);
        let b = problem.bound().value();
        prop_assert!(out.threshold >= 0.0 && out.threshold <= b * (1.0 + 1e-12));

        let losses: Vec<f64> = sample.iter().map(|z| problem.loss(&out.w, z)).collect();
        let s = BoundedLossVector::new(losses.clone(), problem.bound()).unwrap();
        let point = LiftedPoint::new(out.w.clone(), out.threshold / out.lambda);
        let lifted = losses
            .iter()
            .map(|&x| lifted_loss(&point, x, out.lambda, t, problem.bound()).unwrap())
            .sum::<f64>()
            / n as f64;
        prop_assert!(empirical_cvar(&s, t) <= lifted + 1e-9);
    }
}

#[test]
fn noiseless_learner_reaches_the_lifted_optimum_on_a_line() {
    // one-dimensional linear instance: the empirical lifted optimum is a CVaR
    // minimum over the segment, located here by a fine grid
    let problem = linear_problem(1, 5);
    let tau = TailMass::new(0.5).unwrap();
    let mut rng = RandomStream::new(5, 1);
    let sample = problem.sample(200, 0.5, &mut rng);
    let cvar_at = |w: f64| {
        let losses: Vec<f64> = sample.iter().map(|z| problem.loss(&[w], z)).collect();
        empirical_cvar(
            &BoundedLossVector::new(losses, problem.bound()).unwrap(),
            tau,
        )
    };
    let r = problem.family.radius();
    let best = (0..=20_000)
        .map(|i| cvar_at(-r + 2.0 * r * i as f64 / 20_000.0))
        .fold(f64::INFINITY, f64::min);
    let t_iter = 40_000;
    let config = ConvexLearnerConfig {
        iterations: Some(t_iter),
        ..Default::default()
    };
    let out = nonprivate_convex_cvar(&problem, &sample, tau, &config)
        .unwrap()
        .output;
    let lambda = out.lambda;
    let (g, b, diam) = (
        problem.lipschitz(),
        problem.bound().value(),
        problem.diameter(),
    );
    let lift_l = (g * g + lambda * lambda).sqrt() / tau.value();
    let lift_d = (diam * diam + (b / lambda).powi(2)).sqrt();
    let gap = cvar_at(out.w[0]) - best;
    assert!(gap <= lift_d * lift_l / (t_iter as f64).sqrt(), "gap {gap}");
}
