#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use swbound::linalg::{self, matrix_exponential, to_complex, RMat};
use swbound::metzler::{cqlf_from_diag, diagonal_lyapunov, neg_inverse, random_metzler, verify_cqlf, Tolerances};
use swbound::search::unperturbed;
use swbound::transform::{assemble_transform, Objective};

pub const SLACK: f64 = 1e-10;

/// Metzler matrix shifted so its abscissa lies in `[-0.5, -0.01]`.
pub fn metzler_hurwitz(rng: &mut ChaCha8Rng, n: usize) -> RMat {
    let m = random_metzler(rng, n, 1.0, -2.0, 0.0);
    let a = linalg::spectral_abscissa(&m).unwrap();
    let shift = a + rng.random_range(0.01..0.5);
    m - RMat::identity(n, n) * shift
}

/// Real matrix with condition number below `limit`.
pub fn well_conditioned(rng: &mut ChaCha8Rng, n: usize, limit: f64) -> RMat {
    loop {
        let v = RMat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        if linalg::condition_number(&to_complex(&v)) < limit {
            return v;
        }
    }
}

/// `e^{Λt} ⪰ 0` for `t ≥ 0` and `-Λ⁻¹ ⪰ 0` when also Hurwitz, over
/// `count` random matrices each. Returns the failures.
pub fn metzler_suite(count: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tol = Tolerances::default();
    let mut failures = Vec::new();
    for k in 0..count {
        let n = rng.random_range(2..=6);
        let m = random_metzler(&mut rng, n, 2.0, -3.0, 1.0);
        for t in [0.0, 0.05, 0.5, 2.0] {
            let e = matrix_exponential(&m, t).unwrap();
            let scale = e.amax().max(1.0);
            if e.min() < -SLACK * scale {
                failures.push(format!("exp: matrix {k}, t = {t}, min entry {:.3e}", e.min()));
            }
        }
    }
    for k in 0..count {
        let n = rng.random_range(2..=6);
        let m = metzler_hurwitz(&mut rng, n);
        let ni = neg_inverse(&m, &tol).unwrap();
        let scale = ni.amax().max(1.0);
        if ni.min() < -SLACK * scale {
            failures.push(format!("inverse: matrix {k}, min entry {:.3e}", ni.min()));
        }
    }
    failures
}

/// Modes `A_i = VΛ_iV⁻¹` whose transformed comparison matrix is dominated
/// by a Metzler Hurwitz `Λ̄`; then `diagonal_lyapunov → cqlf_from_diag →
/// verify_cqlf` must succeed. Returns the failures.
pub fn cqlf_chain_suite(count: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tol = Tolerances::default();
    let mut failures = Vec::new();
    for k in 0..count {
        let n = rng.random_range(2..=4);
        let modes = rng.random_range(2..=3);
        let bar = metzler_hurwitz(&mut rng, n);
        let v = well_conditioned(&mut rng, n, 1e3);
        let vi = linalg::inverse_r(&v).unwrap();
        let a: Vec<RMat> = (0..modes)
            .map(|_| {
                let l = RMat::from_fn(n, n, |i, j| {
                    if i == j {
                        bar[(i, j)] - rng.random_range(0.0..0.5)
                    } else {
                        bar[(i, j)] * rng.random_range(-1.0..1.0)
                    }
                });
                &v * l * &vi
            })
            .collect();
        let sys = unperturbed(&a).unwrap();
        let vc = to_complex(&v);
        let cand = assemble_transform(&vc, &sys, &Objective::Plain).unwrap();
        let dl = match diagonal_lyapunov(&cand.lambda, &tol) {
            Ok(d) if d.margin < 0.0 => d,
            other => {
                failures.push(format!("instance {k}: diagonal_lyapunov {other:?}"));
                continue;
            }
        };
        let p = match cqlf_from_diag(&vc, &dl.d, &tol) {
            Ok(p) => p,
            Err(e) => {
                failures.push(format!("instance {k}: cqlf_from_diag {e}"));
                continue;
            }
        };
        let verdict = verify_cqlf(&p, &a, 0.0).unwrap();
        if !verdict.pass {
            failures.push(format!("instance {k}: margins {:?}", verdict.margins));
        }
    }
    failures
}

/// `ρ(-Λ⁻¹F̄) < 1 ⇔ a(Λ + F̄) < 0` over `count` random pairs. Returns the
/// discrepancies and the number of stable pairs.
pub fn equivalence_suite(count: usize, seed: u64) -> (Vec<String>, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tol = Tolerances::default();
    let mut failures = Vec::new();
    let mut stable = 0;
    for k in 0..count {
        let n = rng.random_range(2..=5);
        let l = metzler_hurwitz(&mut rng, n);
        let a = -linalg::spectral_abscissa(&l).unwrap();
        let scale = a * 10f64.powf(rng.random_range(-1.0..0.7)) / n as f64;
        let f = RMat::from_fn(n, n, |_, _| rng.random_range(0.0..2.0) * scale);
        let r = neg_inverse(&l, &tol).unwrap() * &f;
        let rho = linalg::spectral_radius(&r).unwrap();
        let abscissa = linalg::spectral_abscissa(&(&l + &f)).unwrap();
        if (rho < 1.0) != (abscissa < 0.0) {
            failures.push(format!("pair {k}: rho {rho:.12}, abscissa {abscissa:.3e}"));
        }
        stable += (rho < 1.0) as usize;
    }
    (failures, stable)
}
