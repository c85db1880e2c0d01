mod common;

use swbound::catalog;
use swbound::lyapunov::QuadraticCertificate;
use swbound::metzler::{cqlf_from_diag, diagonal_lyapunov, verify_cqlf, Tolerances};
use swbound::transform::{assemble_transform, Objective};

#[test]
fn random_feasible_instances() {
    let failures = common::cqlf_chain_suite(50, 5);
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn other_seeds_hold_too() {
    for seed in [11, 12, 13] {
        let failures = common::cqlf_chain_suite(20, seed);
        assert!(failures.is_empty(), "seed {seed}: {failures:#?}");
    }
}

#[test]
fn example_system_chain() {
    let sys = catalog::example_system(0.0);
    let tol = Tolerances::default();
    let cand = assemble_transform(&catalog::v_nonlinear(), &sys, &Objective::Plain).unwrap();
    let d = diagonal_lyapunov(&cand.lambda, &tol).unwrap();
    assert!(d.margin < 0.0);
    let p = cqlf_from_diag(&cand.v, &d.d, &tol).unwrap();
    let verdict = verify_cqlf(&p, &sys.a_matrices(), 0.0).unwrap();
    assert!(verdict.pass, "{:?}", verdict.margins);
}

#[test]
fn printed_p_is_a_cqlf() {
    let sys = catalog::example_system(0.0);
    let cert = QuadraticCertificate::supplied(&catalog::p_nonlinear(), &sys, &Tolerances::default()).unwrap();
    assert!(cert.mode_margins.iter().all(|m| *m < 1e-3), "{:?}", cert.mode_margins);
}
