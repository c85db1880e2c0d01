mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use swbound::linalg::{self, matrix_exponential, RMat, RVec};
use swbound::metzler::{is_metzler, neg_inverse, random_metzler, Tolerances};

#[test]
fn suite_over_100_matrices_each() {
    let failures = common::metzler_suite(100, 6);
    assert!(failures.is_empty(), "{failures:#?}");
}

fn metzler_strategy() -> impl Strategy<Value = RMat> {
    (2usize..6, any::<u64>()).prop_map(|(n, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        random_metzler(&mut rng, n, 3.0, -4.0, 2.0)
    })
}

fn hurwitz_strategy() -> impl Strategy<Value = RMat> {
    (2usize..6, any::<u64>()).prop_map(|(n, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        common::metzler_hurwitz(&mut rng, n)
    })
}

proptest! {
    #[test]
    fn exponential_is_nonnegative(m in metzler_strategy(), t in 0.0f64..3.0) {
        let e = matrix_exponential(&m, t).unwrap();
        prop_assert!(e.min() >= -common::SLACK * e.amax().max(1.0));
    }

    #[test]
    fn exponential_preserves_order(m in metzler_strategy(), t in 0.0f64..2.0, seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = m.nrows();
        let x = RVec::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let y = &x + RVec::from_fn(n, |_, _| rng.random_range(0.0..1.0));
        let e = matrix_exponential(&m, t).unwrap();
        let d = &e * &y - &e * &x;
        prop_assert!(d.min() >= -common::SLACK * e.amax().max(1.0));
    }

    #[test]
    fn neg_inverse_is_nonnegative(m in hurwitz_strategy()) {
        let ni = neg_inverse(&m, &Tolerances::default()).unwrap();
        prop_assert!(ni.min() >= -common::SLACK * ni.amax().max(1.0));
        let id = -&m * &ni;
        prop_assert!((id - RMat::identity(m.nrows(), m.nrows())).amax() < 1e-8);
    }

    #[test]
    fn shifted_matrix_is_metzler_hurwitz(m in hurwitz_strategy()) {
        prop_assert!(is_metzler(&m, 0.0));
        prop_assert!(linalg::spectral_abscissa(&m).unwrap() < 0.0);
    }
}

#[test]
fn neg_inverse_rejects_non_hurwitz() {
    let m = RMat::from_row_slice(2, 2, &[-1.0, 2.0, 2.0, -1.0]);
    assert!(neg_inverse(&m, &Tolerances::default()).is_err());
}
