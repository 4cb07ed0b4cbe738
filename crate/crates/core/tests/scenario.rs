use lambda_lqg::delay::DiscreteDelays;
use lambda_lqg::plant::reduced_scalar_plant;
use lambda_lqg::report::{self, SweepParameter};
use lambda_lqg::scenario::{compare_architectures, ArchitectureChoice, OrderingCheck, Scenario};
use lambda_lqg::sim::MonteCarlo;
use lambda_lqg::synthesis::{legacy_baseline, LegacyParams};
use lambda_lqg::{Error, ErrorClass};

fn bundled() -> String {
    std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/default.json")).unwrap()
}

fn quick() -> Scenario {
    Scenario {
        monte_carlo: MonteCarlo {
            n_runs: 4,
            steps: 2000,
            base_seed: 5,
        },
        ..Scenario::default()
    }
}

#[test]
fn bundled_scenario_is_the_default_and_round_trips() {
    let text = bundled();
    let s = Scenario::from_json(&text).unwrap();
    assert_eq!(s, Scenario::default());
    assert_eq!(s.to_json().unwrap(), text);
    let m = s.build().unwrap();
    assert_eq!((m.delays.d1, m.delays.d2), (2, 3));
}

#[test]
fn invalid_fields_are_config_errors() {
    let mut s = Scenario::default();
    s.delays.tau_cross = 3.0 * s.delays.tau_self;
    let e = s.validate().unwrap_err();
    assert_eq!(e.class(), ErrorClass::Config);
    assert!(e.to_string().contains("2τ1 > τ2"));

    let mut s = Scenario::default();
    s.architectures.clear();
    assert!(matches!(s.validate(), Err(Error::InvalidParameter { name: "architectures", .. })));

    let mut s = Scenario::default();
    s.architectures.push(ArchitectureChoice::Fir);
    s.fir_length = 3;
    assert!(matches!(s.validate(), Err(Error::InvalidParameter { name: "fir_length", .. })));

    let text = bundled().replace("\"trace_steps\"", "\"trace_len\"");
    assert!(matches!(Scenario::from_json(&text), Err(Error::Serde(_))));
}

#[test]
fn ordering_check_is_strict_only_with_distinct_positive_delays() {
    let d = |a, b| DiscreteDelays::new(a, b).unwrap();
    assert!(OrderingCheck::new(1.0, 1.0 + 1e-9, 2.0, d(2, 3)).holds);
    assert!(!OrderingCheck::new(1.0, 1.0 + 1e-11, 2.0, d(2, 3)).holds);
    let equal = OrderingCheck::new(1.0, 1.0, 2.0, d(2, 2));
    assert!(!equal.strict && equal.holds);
    assert!(!OrderingCheck::new(1.0, 0.9, 2.0, d(0, 0)).holds);
}

#[test]
fn comparison_reports_are_sorted_and_carry_the_legacy_gap() {
    let (c, designs) = compare_architectures(&quick()).unwrap();
    assert_eq!(c.reports.len(), 5);
    assert_eq!(designs.len(), 5);
    assert!(c.reports.windows(2).all(|w| w[0].mc_mean <= w[1].mc_mean));
    let o = c.ordering.unwrap();
    assert!(o.strict && o.holds);
    let gap = c.legacy_gap.unwrap();
    assert!((gap.paired_z - gap.difference / gap.paired_stderr).abs() < 1e-12);
    assert!(c.report("legacy").unwrap().exact_h2.is_none());
}

#[test]
fn rho_sweep_reports_without_asserting() {
    let mut s = quick();
    s.architectures = vec![ArchitectureChoice::Dec];
    let r = report::sweep(&s, SweepParameter::RhoP, &[1e-3, 1e-2, 1e-1]).unwrap();
    let v = r.verdict.unwrap();
    assert!(!v.asserted);
    assert!(v.holds);
    let costs: Vec<f64> = r.rows.iter().map(|row| row.cost(ArchitectureChoice::Dec).unwrap()).collect();
    assert!(costs.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn interburst_sweep_uses_monte_carlo() {
    let mut s = quick();
    s.architectures = vec![ArchitectureChoice::Blockdiag];
    let r = report::sweep(&s, SweepParameter::Interburst, &[0.0, 2.0]).unwrap();
    assert!(r.verdict.is_none());
    assert!(r.rows.iter().all(|row| row.cells[0].stderr.is_some()));
    assert!(report::sweep(&s, SweepParameter::Interburst, &[1.5]).is_err());
    assert!(report::sweep(&s, SweepParameter::Interburst, &[]).is_err());
}

#[test]
fn legacy_rejects_bad_knobs_and_plants() {
    let g = reduced_scalar_plant().unwrap();
    let d = DiscreteDelays::new(1, 2).unwrap();
    let bad = [
        LegacyParams { fine_limit: Some(0.0), ..LegacyParams::default() },
        LegacyParams { coarse_deadband: -1.0, ..LegacyParams::default() },
        LegacyParams { desat_gain: f64::NAN, ..LegacyParams::default() },
    ];
    for p in bad {
        assert!(matches!(legacy_baseline(&g, d, p), Err(Error::InvalidParameter { name: "legacy", .. })));
    }
    let s = Scenario::default();
    let mut m = s.build().unwrap();
    let n = m.plant.realization.n_states();
    m.plant.realization.a[(0, n - 1)] = 0.1;
    assert!(legacy_baseline(&m.plant, d, LegacyParams::default()).is_err());
}
