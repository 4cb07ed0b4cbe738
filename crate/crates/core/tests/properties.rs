use approx::assert_relative_eq;
use lambda_lqg::delay::{Agent, DiscreteDelays, InformationGraph};
use lambda_lqg::linalg::Mat;
use lambda_lqg::lti::{zoh_pair, PartitionedPlant};
use lambda_lqg::plant::reduced_scalar_plant;
use lambda_lqg::scenario::{ArchitectureChoice, Scenario};
use lambda_lqg::sim::{self, BurstPattern, MonteCarlo};
use lambda_lqg::synthesis::{
    block_diagonal_lqg, decentralized_delayed_lqg, legacy_baseline, LegacyParams,
};
use proptest::prelude::*;

fn reduced() -> PartitionedPlant {
    reduced_scalar_plant().unwrap()
}

fn delays() -> impl Strategy<Value = DiscreteDelays> {
    (0usize..4, 0usize..4).prop_map(|(d1, extra)| DiscreteDelays::new(d1, d1 + extra).unwrap())
}

/// Largest entry of the controller's Markov parameters that the delay
/// pattern forbids.
fn forbidden_markov_mass(plant: &PartitionedPlant, delays: DiscreteDelays, mk: &[Mat]) -> f64 {
    let graph = InformationGraph::new(delays);
    let mut worst: f64 = 0.0;
    for (k, m) in mk.iter().enumerate() {
        for i in 0..2 {
            for j in 0..2 {
                if graph.allows(Agent::from_index(i), Agent::from_index(j), k) {
                    continue;
                }
                for r in plant.blocks[i].inputs.clone() {
                    for c in plant.blocks[j].outputs.clone() {
                        worst = worst.max(m[(r, c)].abs());
                    }
                }
            }
        }
    }
    worst
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn zoh_of_a_scalar_matches_the_closed_form(a in -5.0f64..5.0, b in -3.0f64..3.0, h in 1e-3f64..0.5) {
        prop_assume!(a.abs() > 1e-3);
        let (ad, bd) = zoh_pair(&Mat::from_element(1, 1, a), &Mat::from_element(1, 1, b), h).unwrap();
        assert_relative_eq!(ad[(0, 0)], (a * h).exp(), max_relative = 1e-12);
        assert_relative_eq!(bd[(0, 0)], ((a * h).exp() - 1.0) / a * b, max_relative = 1e-10);
    }

    #[test]
    fn zoh_composes_over_consecutive_intervals(h1 in 1e-3f64..0.2, h2 in 1e-3f64..0.2) {
        let a = Mat::from_row_slice(2, 2, &[0.0, 1.0, -40.0, -3.0]);
        let b = Mat::from_row_slice(2, 1, &[0.0, 1.0]);
        let (a1, b1) = zoh_pair(&a, &b, h1).unwrap();
        let (a2, b2) = zoh_pair(&a, &b, h2).unwrap();
        let (a12, b12) = zoh_pair(&a, &b, h1 + h2).unwrap();
        assert_relative_eq!(a12, &a2 * &a1, epsilon = 1e-12);
        assert_relative_eq!(b12, &a2 * &b1 + &b2, epsilon = 1e-12);
    }

    #[test]
    fn decentralized_markov_parameters_respect_the_pattern(d in delays()) {
        let g = reduced();
        let k = decentralized_delayed_lqg(&g, d).unwrap();
        let mk = k.state_space().markov_parameters(d.d2 + 3);
        prop_assert!(forbidden_markov_mass(&g, d, &mk) <= 1e-12);
        // The pattern is tight: the first allowed cross tap is used.
        if d.d2 > d.d1 {
            let cross = mk[d.d2][(g.blocks[0].inputs.start, g.blocks[1].outputs.start)].abs()
                + mk[d.d2][(g.blocks[1].inputs.start, g.blocks[0].outputs.start)].abs();
            prop_assert!(cross > 1e-9);
        }
    }

    #[test]
    fn block_diagonal_design_has_no_cross_terms(d1 in 0usize..4) {
        let g = reduced();
        let k = block_diagonal_lqg(&g, d1).unwrap();
        let mk = k.state_space().markov_parameters(12);
        let never = DiscreteDelays::new(d1, 1000).unwrap();
        prop_assert!(forbidden_markov_mass(&g, never, &mk) <= 1e-12);
    }

    #[test]
    fn linear_legacy_reproduces_block_diagonal_commands(d in delays(), seed in 0u64..1000) {
        let g = reduced();
        let bd = block_diagonal_lqg(&g, d.d1).unwrap();
        let legacy = legacy_baseline(&g, d, LegacyParams::default()).unwrap();
        let burst = BurstPattern::continuous();
        let a = sim::simulate(&g.realization, &bd, 200, seed, burst).unwrap();
        let b = sim::simulate(&g.realization, &legacy, 200, seed, burst).unwrap();
        for (ua, ub) in a.u.iter().zip(&b.u) {
            for (x, y) in ua.iter().zip(ub) {
                prop_assert!((x - y).abs() <= 1e-10 * (1.0 + x.abs()));
            }
        }
    }

    #[test]
    fn simulation_is_a_function_of_the_seed(seed in 0u64..10_000) {
        let g = reduced();
        let k = decentralized_delayed_lqg(&g, DiscreteDelays::new(1, 2).unwrap()).unwrap();
        let burst = BurstPattern::new(2, 1).unwrap();
        let a = sim::simulate(&g.realization, &k, 100, seed, burst).unwrap();
        let b = sim::simulate(&g.realization, &k, 100, seed, burst).unwrap();
        let c = sim::simulate(&g.realization, &k, 100, seed + 1, burst).unwrap();
        prop_assert_eq!(&a.cost, &b.cost);
        prop_assert_ne!(&a.cost, &c.cost);
    }

    #[test]
    fn scenario_round_trip_is_byte_identical(
        name in "[a-z][a-z0-9_]{0,12}",
        rho in 1e-6f64..1.0,
        eps in 1e-12f64..1e-2,
        seed in any::<u64>(),
        interburst in 0usize..20,
        fir in 4usize..64,
        limit in proptest::option::of(0.01f64..2.0),
    ) {
        let mut s = Scenario::default();
        s.name = name;
        s.pzt.rho = rho;
        s.eps_reg = eps;
        s.monte_carlo.base_seed = seed;
        s.burst.interburst_steps = interburst;
        s.fir_length = fir;
        s.legacy.fine_limit = limit;
        s.architectures.push(ArchitectureChoice::Fir);
        let first = s.to_json().unwrap();
        let parsed: Scenario = serde_json::from_str(&first).unwrap();
        prop_assert_eq!(&parsed, &s);
        prop_assert_eq!(parsed.to_json().unwrap(), first);
    }
}

#[test]
fn dropping_measurements_raises_the_cost() {
    let g = reduced();
    let k = decentralized_delayed_lqg(&g, DiscreteDelays::new(1, 2).unwrap()).unwrap();
    let mc = MonteCarlo {
        n_runs: 16,
        steps: 20_000,
        base_seed: 3,
    };
    let full = sim::estimate_cost("full", &g.realization, &k, mc, BurstPattern::continuous(), None).unwrap();
    let gated = sim::estimate_cost("gated", &g.realization, &k, mc, BurstPattern::new(1, 3).unwrap(), None).unwrap();
    let (diff, se) = gated.paired_difference(&full).unwrap();
    assert!(diff > 5.0 * se, "diff {diff}, stderr {se}");
    assert!(gated.runs.iter().zip(&full.runs).all(|(g, f)| g > f));
}

#[test]
fn monte_carlo_reports_are_reproducible() {
    let g = reduced();
    let k = decentralized_delayed_lqg(&g, DiscreteDelays::new(1, 2).unwrap()).unwrap();
    let mc = MonteCarlo {
        n_runs: 4,
        steps: 2000,
        base_seed: 11,
    };
    let burst = BurstPattern::continuous();
    let a = sim::estimate_cost("dec", &g.realization, &k, mc, burst, None).unwrap();
    let b = sim::estimate_cost("dec", &g.realization, &k, mc, burst, None).unwrap();
    assert_eq!(a, b);
}
