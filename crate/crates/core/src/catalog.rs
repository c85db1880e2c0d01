//! Embedded data of the worked examples: systems, printed transforms and
//! certificates, and the reference values with per-row tolerances.

use nalgebra::dvector;
use num_complex::Complex64;

use crate::linalg::{CMat, RMat, RVec};
use crate::system::{parse_bound_expr, AffineCap, Mode, PerturbationBound, SwitchingSystem};

pub const TAU_BAR: f64 = 0.1;

pub const DELTA1: &str = "clamp(sin(t3), 0, 1, pi/2)";
pub const DELTA2: [&str; 2] = ["piecewise(t1 - 1/2, t1*exp(-2*t1) + 1, exp(-1)/2 + 1)", "5*t3 + 1"];
/// Raw bounds before taking the order-preserving envelope.
pub const DELTA1_RAW: &str = "abs(sin(t3))";
pub const DELTA2_RAW: [&str; 2] = ["t1*exp(-2*t1) + abs(cos(t2))", "5*t3 + 1"];

pub fn a1() -> RMat {
    RMat::from_row_slice(3, 3, &[-6.91, 1.92, 4.4, 1.32, -1.54, -1.41, 4.47, -3.02, -5.43])
}

pub fn a2() -> RMat {
    RMat::from_row_slice(3, 3, &[-9.27, -0.19, 7.15, 2.02, -1.38, -1.94, 6.84, -4.28, -6.64])
}

pub fn h1() -> RMat {
    RMat::from_row_slice(3, 1, &[0.0, 0.02, 0.0])
}

pub fn h2() -> RMat {
    RMat::from_row_slice(3, 2, &[0.01, -0.05, 0.01, 0.0, 0.02, 0.03])
}

pub fn cap1() -> AffineCap {
    AffineCap {
        f: RMat::from_row_slice(1, 3, &[0.0, 0.0, 1.0]),
        w: dvector![0.0],
    }
}

pub fn cap2() -> AffineCap {
    AffineCap {
        f: RMat::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 5.0]),
        w: dvector![1.0, 1.0],
    }
}

/// The three-state, two-mode example with its order-preserving bounds and
/// declared affine caps.
pub fn example_system(tau_bar: f64) -> SwitchingSystem {
    let expr = |texts: &[&str], cap: AffineCap| PerturbationBound::Expression {
        components: texts.iter().map(|t| parse_bound_expr(t, 3).expect("embedded expression")).collect(),
        cap: Some(cap),
        envelope: None,
    };
    SwitchingSystem::new(
        vec![
            Mode {
                a: a1(),
                h: h1(),
                bound: expr(&[DELTA1], cap1()),
            },
            Mode {
                a: a2(),
                h: h2(),
                bound: expr(&DELTA2, cap2()),
            },
        ],
        tau_bar,
    )
    .expect("embedded system is valid")
}

/// Same modes with the affine caps as the bounds themselves.
pub fn example_system_affine(tau_bar: f64) -> SwitchingSystem {
    example_system(tau_bar)
        .with_bounds(|i| {
            let c = if i == 0 { cap1() } else { cap2() };
            PerturbationBound::Affine { f: c.f, w: c.w }
        })
        .expect("embedded system is valid")
}

fn cmat(re: &[f64], im: &[f64], n: usize) -> CMat {
    CMat::from_fn(n, n, |i, j| Complex64::new(re[i * n + j], im[i * n + j]))
}

/// Transform printed for the nonlinear analysis.
pub fn v_nonlinear() -> CMat {
    cmat(
        &[2.408, 1.745, 0.162, -0.634, -1.363, 0.0351, -2.144, 2.217, 0.118],
        &[0.443, 2.059, 1.558, -0.117, -1.815, 0.494, -0.399, 3.247, 1.652],
        3,
    )
}

/// Transform printed for the affine analysis.
pub fn v_affine() -> CMat {
    cmat(
        &[2.244, -2.715, 0.0, 0.706, 0.715, -4.302, 2.359, 2.418, 1.674],
        &[-4.401, 2.891, 0.0, -1.385, -0.761, -3.789, -4.625, -2.575, 1.470],
        3,
    )
}

pub fn lambda_nonlinear() -> RMat {
    RMat::from_row_slice(
        3,
        3,
        &[-11.34, 1.145, 0.191, 0.0067, -0.0979, 0.0038, 0.0130, 1.912, -1.605],
    )
}

pub const ABSCISSA_NONLINEAR: f64 = -0.0923;

pub fn lambda_affine() -> RMat {
    RMat::from_row_slice(
        3,
        3,
        &[-1.599, 0.001, 2.620, 0.268, -11.34, 1.028, 0.006, 0.004, -0.103],
    )
}

pub fn f_bar_affine() -> RMat {
    RMat::from_row_slice(
        3,
        3,
        &[0.633, 0.450, 0.205, 2.749, 1.879, 1.150, 0.390, 0.269, 0.154],
    ) * 0.1
}

pub fn w_bar_affine() -> RVec {
    dvector![0.5, 1.17, 0.2] * 0.01
}

/// Quadratic form printed for the nonlinear analysis.
pub fn p_nonlinear() -> RMat {
    RMat::from_row_slice(
        3,
        3,
        &[0.1638, 0.1634, 0.012, 0.1634, 1.9577, -0.3602, 0.012, -0.3602, 0.2285],
    )
}

pub fn d_nonlinear() -> RVec {
    dvector![0.0411, 0.5584, 0.0800]
}

pub fn d_affine() -> RVec {
    dvector![0.1812, 0.5127, 9.962]
}

pub fn p_affine() -> RMat {
    RMat::from_row_slice(
        3,
        3,
        &[0.0111, -0.003, -0.0064, -0.003, 0.245, -0.0692, -0.0064, -0.0692, 0.0301],
    )
}

pub struct Golden {
    pub beta: [f64; 3],
    pub t0_beta: [f64; 3],
    pub b_nonlinear: [f64; 3],
    pub vb_nonlinear: [f64; 3],
    pub eps_bar: f64,
    pub eps_used: f64,
    pub t_gamma_beta: [f64; 3],
    pub b_tilde: [f64; 3],
    pub vb_tilde: [f64; 3],
    pub b_refined: [f64; 3],
    pub vb_refined: [f64; 3],
    pub k_level: f64,
    pub x_bar: [f64; 3],
    pub combined: [f64; 3],
}

pub const GOLDEN: Golden = Golden {
    beta: [4.235, 19.23, 26.82],
    t0_beta: [3.235, 18.23, 25.82],
    b_nonlinear: [0.127, 0.715, 1.017],
    vb_nonlinear: [3.84, 2.21, 4.78],
    eps_bar: 0.8384,
    eps_used: 0.838,
    t_gamma_beta: [4.073, 19.068, 26.658],
    b_tilde: [0.903, 0.098, 0.521],
    vb_tilde: [4.85, 4.49, 6.20],
    b_refined: [0.365, 0.0403, 0.212],
    vb_refined: [1.96, 1.82, 2.51],
    k_level: 0.0989,
    x_bar: [4.0448, 0.7926, 4.1443],
    combined: [1.96, 0.7926, 2.51],
};

/// Acceptance tolerances.
pub const TOL_LAMBDA_ABS: f64 = 1e-2;
pub const TOL_LAMBDA_REL: f64 = 0.01;
pub const TOL_ABSCISSA: f64 = 0.005;
pub const TOL_REL_2: f64 = 0.02;
pub const TOL_K: f64 = 0.10;
pub const TOL_REL_5: f64 = 0.05;
pub const TOL_CQLF: f64 = 1e-3;
pub const TOL_P_ABS: f64 = 1e-3;
pub const TOL_VERGE: f64 = 0.02;

/// `3 + √8 − 10⁻³`, just inside the range where a common quadratic
/// Lyapunov function exists.
pub fn verge_a() -> f64 {
    3.0 + 8f64.sqrt() - 1e-3
}

pub fn v_verge() -> CMat {
    cmat(&[-6.0069, 5.5729, -0.3554, -1.0843], &[0.8605, -2.6151, -2.4885, -2.3081], 2)
}
