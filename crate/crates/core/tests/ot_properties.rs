use nwot::{
    cost_matrix, solve_ot, wasserstein, wasserstein_bruteforce, DiscreteDistribution, Exponent, MixtureComponent,
    MixtureModel, SimplexVector,
};
use proptest::prelude::*;

const DENOMINATOR: u32 = 12;

/// Up to `max` points in the plane with weights `c_i / 12`.
fn rational_cloud(max: usize) -> impl Strategy<Value = DiscreteDistribution> {
    (1..=max).prop_flat_map(|n| {
        (
            prop::collection::vec(-5.0..5.0f64, 2 * n),
            prop::collection::vec(0..=DENOMINATOR, n).prop_filter("positive total", |c| c.iter().any(|&v| v > 0)),
        )
            .prop_map(|(coords, counts)| {
                // shift the remainder onto the first nonzero count so the
                // weights are exact multiples of 1/12
                let total: u32 = counts.iter().sum();
                let mut counts: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
                let scale = DENOMINATOR as f64 / total as f64;
                let mut floored: Vec<u32> = counts.iter().map(|c| (c * scale).floor() as u32).collect();
                let missing = DENOMINATOR - floored.iter().sum::<u32>();
                let first = counts.iter().position(|&c| c > 0.0).unwrap();
                floored[first] += missing;
                counts = floored.iter().map(|&c| c as f64 / DENOMINATOR as f64).collect();
                DiscreteDistribution::from_flat(2, coords, counts).unwrap()
            })
    })
}

fn cloud(max: usize) -> impl Strategy<Value = DiscreteDistribution> {
    (1..=max).prop_flat_map(|n| {
        (prop::collection::vec(-5.0..5.0f64, 2 * n), prop::collection::vec(0.01..1.0f64, n)).prop_map(
            |(coords, w)| {
                let total: f64 = w.iter().sum();
                DiscreteDistribution::from_flat(2, coords, w.iter().map(|v| v / total).collect()).unwrap()
            },
        )
    })
}

fn exponent() -> impl Strategy<Value = Exponent> {
    prop_oneof![Just(Exponent::One), Just(Exponent::Two)]
}

fn scaled(d: &DiscreteDistribution, c: f64) -> DiscreteDistribution {
    DiscreteDistribution::from_flat(d.dim(), d.coords().iter().map(|v| v * c).collect(), d.weights().to_vec()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn exact_solver_matches_exhaustive_oracle(a in rational_cloud(6), b in rational_cloud(6), p in exponent()) {
        let sol = solve_ot(&a, &b, p).unwrap();
        let (oracle, oracle_plan) = wasserstein_bruteforce(&a, &b, p).unwrap();
        prop_assert!((sol.value - oracle).abs() <= 1e-7, "{} vs {}", sol.value, oracle);
        let cost = cost_matrix(&a, &b, p).unwrap();
        oracle_plan.verify(&cost).unwrap();
        sol.plan.verify(&cost).unwrap();
        // dual feasibility and zero duality gap
        prop_assert!(sol.certificate.max_violation(&cost) <= 1e-6);
        let dual = sol.certificate.objective(a.weights(), b.weights());
        prop_assert!((dual - sol.value).abs() <= 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metric_axioms(a in cloud(7), b in cloud(7), c in cloud(7), p in exponent()) {
        let w = |x: &DiscreteDistribution, y: &DiscreteDistribution| wasserstein(x, y, p).unwrap().0;
        let root = |v: f64| v.max(0.0).powf(1.0 / p.value());
        prop_assert!(w(&a, &a).abs() <= 1e-12);
        prop_assert!(w(&a, &b) >= 0.0);
        prop_assert!((w(&a, &b) - w(&b, &a)).abs() <= 1e-9);
        prop_assert!(root(w(&a, &c)) <= root(w(&a, &b)) + root(w(&b, &c)) + 1e-9);
    }

    #[test]
    fn scale_equivariance(a in cloud(7), b in cloud(7), p in exponent(), c in 0.1..10.0f64) {
        let base = wasserstein(&a, &b, p).unwrap().0;
        let scaled_value = wasserstein(&scaled(&a, c), &scaled(&b, c), p).unwrap().0;
        let factor = c.powf(p.value());
        prop_assert!((scaled_value - factor * base).abs() <= 1e-9 * (1.0 + factor * base));
    }

    #[test]
    fn flattened_mixture_has_unit_mass(comps in prop::collection::vec(cloud(5), 1..5), raw in prop::collection::vec(0.0..1.0f64, 5)) {
        let k = comps.len();
        let raw: Vec<f64> = raw[..k].iter().map(|v| v + 0.01).collect();
        let pi = SimplexVector::normalized(raw).unwrap();
        let model = MixtureModel::new(comps.into_iter().map(MixtureComponent::from).collect(), pi).unwrap();
        let flat = model.flatten();
        prop_assert!((flat.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let owners = model.flat_owner();
        for g in 0..k {
            let mass: f64 = owners.iter().zip(flat.weights()).filter(|(&o, _)| o == g).map(|(_, w)| w).sum();
            prop_assert!((mass - model.proportions()[g]).abs() <= 1e-12);
        }
    }
}

#[test]
fn one_dimensional_closed_form() {
    // In 1-D with p = 1, W is the L1 distance between the CDFs.
    let a = DiscreteDistribution::from_flat(1, vec![0.0, 1.0, 3.0], vec![0.5, 0.25, 0.25]).unwrap();
    let b = DiscreteDistribution::from_flat(1, vec![0.5, 2.0], vec![0.5, 0.5]).unwrap();
    // CDF gaps: 0.5 on [0, 0.5), 0 on [0.5, 1), 0.25 on [1, 2), 0.25 on [2, 3)
    let expected = 0.5 * 0.5 + 0.25 * 1.0 + 0.25 * 1.0;
    assert!((wasserstein(&a, &b, Exponent::One).unwrap().0 - expected).abs() < 1e-12);
}

#[test]
fn uniform_three_by_three_is_the_best_permutation() {
    let a = DiscreteDistribution::from_flat_uniform(2, vec![0.0, 0.0, 2.0, 1.0, -1.0, 3.0]).unwrap();
    let b = DiscreteDistribution::from_flat_uniform(2, vec![1.0, 1.0, 0.0, -2.0, 3.0, 3.0]).unwrap();
    for p in [Exponent::One, Exponent::Two] {
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let best = perms
            .iter()
            .map(|s| (0..3).map(|i| p.cost(a.point(i), b.point(s[i]))).sum::<f64>() / 3.0)
            .fold(f64::INFINITY, f64::min);
        assert!((wasserstein(&a, &b, p).unwrap().0 - best).abs() < 1e-12);
    }
}
