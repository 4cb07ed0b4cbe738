use lambda_lqg::delay::DiscreteDelays;
use lambda_lqg::lti::PartitionedPlant;
use lambda_lqg::plant::{assemble_global_plant, build_cost_matrices, default_subsystems, discretize_plant};
use lambda_lqg::synthesis::*;

fn default_plant() -> PartitionedPlant {
    let subs = default_subsystems().unwrap();
    let cost = build_cost_matrices(&subs, 1e-8).unwrap();
    let pc = assemble_global_plant(&subs, &cost).unwrap();
    discretize_plant(&pc, 1.0 / 6000.0).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn unconstrained_fir_recovers_delay_free_lqg() {
    let p = default_plant();
    let cen = lqg_delay_free(&p.realization).unwrap();
    let dl = DiscreteDelays::new(2, 3).unwrap();
    for n in [1, 4] {
        let r = structured_fir_youla(&p, dl, n, FirStructure::Unconstrained, InnerLoop::Centralized)
            .unwrap();
        assert!(rel(r.h2_cost, cen.design_cost) < 1e-9, "n={n}: {}", r.h2_cost);
    }
}

#[test]
fn delayed_fir_matches_dynamic_programming() {
    let p = default_plant();
    let dl = DiscreteDelays::new(2, 3).unwrap();
    let dec = decentralized_delayed_lqg(&p, dl).unwrap();
    let r = structured_fir_youla(&p, dl, 12, FirStructure::Delayed, InnerLoop::Centralized).unwrap();
    assert!(rel(r.h2_cost, dec.design_cost) < 1e-8);
    assert!(rel(r.ls_cost, r.h2_cost) < 1e-8);
}

#[test]
fn no_cross_fir_equals_block_diagonal() {
    let p = default_plant();
    let dl = DiscreteDelays::new(2, 3).unwrap();
    let bd = block_diagonal_lqg(&p, 2).unwrap();
    let r = structured_fir_youla(&p, dl, 6, FirStructure::NoCross, InnerLoop::BlockDiagonal).unwrap();
    assert!(rel(r.h2_cost, bd.design_cost) < 1e-8);
}

#[test]
fn block_diagonal_inner_loop_improves_with_length() {
    let p = default_plant();
    let dl = DiscreteDelays::new(2, 3).unwrap();
    let mut last = f64::INFINITY;
    for n in [4, 8, 16] {
        let r = structured_fir_youla(&p, dl, n, FirStructure::Delayed, InnerLoop::BlockDiagonal)
            .unwrap();
        assert!(r.h2_cost <= last * (1.0 + 1e-12));
        last = r.h2_cost;
    }
}

#[test]
fn taps_respect_the_delay_pattern() {
    let p = default_plant();
    let dl = DiscreteDelays::new(2, 3).unwrap();
    let r = structured_fir_youla(&p, dl, 8, FirStructure::Delayed, InnerLoop::Centralized).unwrap();
    let taps = r.taps();
    assert_eq!(taps.len(), 8);
    for (a, tap) in taps.iter().enumerate() {
        for blk_u in &p.blocks {
            for blk_y in &p.blocks {
                let lag = if std::ptr::eq(blk_u, blk_y) { 2 } else { 3 };
                if a < lag {
                    for i in blk_u.inputs.clone() {
                        for j in blk_y.outputs.clone() {
                            assert_eq!(tap[(i, j)], 0.0, "age {a} ({i},{j})");
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn rejects_short_windows_and_inconsistent_inner_loops() {
    let p = default_plant();
    let dl = DiscreteDelays::new(2, 3).unwrap();
    assert!(structured_fir_youla(&p, dl, 3, FirStructure::Delayed, InnerLoop::Centralized).is_err());
    assert!(structured_fir_youla(&p, dl, 8, FirStructure::NoCross, InnerLoop::Centralized).is_err());
}
