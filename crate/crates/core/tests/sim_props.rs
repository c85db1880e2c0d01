use proptest::prelude::*;

use swbound::catalog;
use swbound::linalg::RVec;
use swbound::reproduce::{affine_example, nonlinear_example};
use swbound::sim::{
    containment, falsify, simulate, ContainmentBounds, ContainmentSettings, FalsifyConfig, FalsifyTarget,
    History, PerturbationPolicy, PerturbationRule, SignalPolicy, SimOptions, SwitchingSignal, Trajectory,
};
use swbound::system::{PerturbationBound, SwitchingSystem};

fn run(sys: &SwitchingSystem, signal: SignalPolicy, rule: PerturbationRule, x0: RVec, tf: f64, seed: u64) -> Trajectory {
    let sig = SwitchingSignal::generate(signal, sys.modes.len(), tf).unwrap();
    simulate(
        sys,
        &sig,
        &PerturbationPolicy::uniform(rule),
        &History::Constant(x0),
        &SimOptions {
            tf,
            dt: 0.01,
            seed,
            v: Some(catalog::v_nonlinear()),
        },
    )
    .unwrap()
}

fn unperturbed_example() -> SwitchingSystem {
    let sys = catalog::example_system(catalog::TAU_BAR);
    let outputs: Vec<usize> = sys.modes.iter().map(|m| m.bound.outputs()).collect();
    sys.with_bounds(|i| PerturbationBound::Constant {
        w: RVec::zeros(outputs[i]),
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn deterministic_and_admissible(seed in any::<u64>(), rule in 0usize..3) {
        let sys = catalog::example_system(catalog::TAU_BAR);
        let rule = match rule {
            0 => PerturbationRule::RandomInBox { seed },
            1 => PerturbationRule::VertexBang { seed },
            _ => PerturbationRule::AdversarialToward { direction: vec![1.0, 0.0, 1.0] },
        };
        let signal = SignalPolicy::RandomDwell { min: 0.05, max: 0.5, seed };
        let x0 = RVec::from_row_slice(&[1.0, -2.0, 0.5]);
        let a = run(&sys, signal.clone(), rule.clone(), x0.clone(), 5.0, seed);
        let b = run(&sys, signal, rule, x0, 5.0, seed);
        prop_assert_eq!(&a.states, &b.states);
        prop_assert_eq!(&a.perturbations, &b.perturbations);
        prop_assert!(a.max_admissibility_excess <= 1e-12, "excess {}", a.max_admissibility_excess);
    }
}

#[test]
fn zero_perturbation_decays() {
    let sys = unperturbed_example();
    let x0 = RVec::from_row_slice(&[3.0, -1.0, 2.0]);
    for seed in 0..5 {
        let traj = run(
            &sys,
            SignalPolicy::RandomDwell { min: 0.05, max: 0.5, seed },
            PerturbationRule::Zero,
            x0.clone(),
            80.0,
            seed,
        );
        let end = traj.states.last().unwrap().amax();
        assert!(end < 1e-2 * x0.amax(), "seed {seed}: |x(tf)| = {end}");
    }
}

#[test]
fn zero_bound_contains_at_origin() {
    let sys = unperturbed_example();
    let x0 = RVec::from_row_slice(&[0.5, 0.5, -0.5]);
    let traj = run(&sys, SignalPolicy::Periodic { period: 0.3 }, PerturbationRule::Zero, x0, 150.0, 0);
    let rep = containment(
        &traj,
        &catalog::v_nonlinear(),
        &ContainmentBounds {
            b: Some(RVec::zeros(3)),
            ..Default::default()
        },
        &ContainmentSettings {
            settle_fraction: 0.1,
            rel_slack: 0.0,
            abs_slack: 1e-6,
        },
    )
    .unwrap();
    assert!(rep.ultimate.unwrap().pass);
}

#[test]
fn vertex_bang_stays_in_affine_box() {
    let ex = affine_example().unwrap();
    let sys = catalog::example_system(catalog::TAU_BAR);
    let v = ex.polished.v.clone();
    let bound = ex.report.abs_v_b_tilde.clone().unwrap();
    for seed in 0..8 {
        let sig = SwitchingSignal::generate(
            SignalPolicy::RandomDwell { min: 0.05, max: 0.5, seed },
            sys.modes.len(),
            50.0,
        )
        .unwrap();
        let traj = simulate(
            &sys,
            &sig,
            &PerturbationPolicy::uniform(PerturbationRule::VertexBang { seed }),
            &History::Constant(&bound * 0.5),
            &SimOptions {
                tf: 50.0,
                dt: 0.01,
                seed,
                v: Some(v.clone()),
            },
        )
        .unwrap();
        for (t, x) in traj.times.iter().zip(&traj.states).filter(|(t, _)| **t >= 15.0) {
            for j in 0..3 {
                assert!(x[j].abs() <= bound[j], "seed {seed}, t = {t}: x{} = {}", j + 1, x[j]);
            }
        }
    }
}

#[test]
fn nonlinear_transient_over_100_seeds() {
    let (cand, rep) = nonlinear_example().unwrap();
    let target = FalsifyTarget {
        v: cand.v.clone(),
        bounds: ContainmentBounds {
            beta: Some(rep.beta.clone()),
            b: None,
            admissible_init: Some(rep.margin.admissible_init.clone()),
        },
    };
    let summary = falsify(
        &catalog::example_system(catalog::TAU_BAR),
        &target,
        &FalsifyConfig {
            trials: 100,
            seed: 42,
            tf: 40.0,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(summary.violations, 0, "max transient ratio {}", summary.max_transient_ratio);
    assert!(summary.records.iter().all(|r| r.report.initial.as_ref().unwrap().pass));
    assert!(summary.max_admissibility_excess <= 1e-12);
    assert!(summary.max_transient_ratio > 0.0);
}

/// Histories near `T_γ(β)` need about 60 time units to settle onto `b`.
#[test]
fn nonlinear_ultimate_after_settling() {
    let (cand, rep) = nonlinear_example().unwrap();
    let target = FalsifyTarget {
        v: cand.v.clone(),
        bounds: ContainmentBounds {
            b: Some(rep.b.clone()),
            admissible_init: Some(rep.margin.admissible_init.clone()),
            ..Default::default()
        },
    };
    let summary = falsify(
        &catalog::example_system(catalog::TAU_BAR),
        &target,
        &FalsifyConfig {
            trials: 24,
            seed: 42,
            tf: 150.0,
            containment: ContainmentSettings {
                settle_fraction: 0.4,
                ..Default::default()
            },
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(summary.violations, 0, "max ultimate ratio {}", summary.max_ultimate_ratio);
}

#[test]
fn falsify_is_reproducible() {
    let (cand, rep) = nonlinear_example().unwrap();
    let target = FalsifyTarget {
        v: cand.v.clone(),
        bounds: ContainmentBounds {
            b: Some(rep.b.clone()),
            ..Default::default()
        },
    };
    let cfg = FalsifyConfig {
        trials: 12,
        seed: 9,
        tf: 10.0,
        ..Default::default()
    };
    let sys = catalog::example_system(catalog::TAU_BAR);
    let a = serde_json::to_string(&falsify(&sys, &target, &cfg).unwrap()).unwrap();
    let b = serde_json::to_string(&falsify(&sys, &target, &cfg).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn csv_has_header_and_rows() {
    let sys = catalog::example_system(catalog::TAU_BAR);
    let traj = run(
        &sys,
        SignalPolicy::Periodic { period: 0.5 },
        PerturbationRule::VertexBang { seed: 1 },
        RVec::from_row_slice(&[0.1, 0.1, 0.1]),
        1.0,
        1,
    );
    let csv = traj.to_csv();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("t,x1,x2,x3,mode"));
    assert_eq!(lines.count(), traj.times.len());
}
