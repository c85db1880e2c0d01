//! Metzler / M-matrix machinery: `M(·)`, Hurwitz tests, diagonal Lyapunov
//! matrices and the quadratic forms they induce.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    self, ensure_square, inverse_c, inverse_r, max_symmetric_eigenvalue, symmetric_eigenvalues,
    CMat, RMat, RVec, COND_LIMIT,
};

/// Numerical thresholds shared by the Metzler/Lyapunov checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Hurwitz iff abscissa < -hurwitz_margin.
    pub hurwitz_margin: f64,
    /// Off-diagonals ≥ -metzler_slack count as nonnegative.
    pub metzler_slack: f64,
    /// Entrywise slack for nonnegativity of `-Λ⁻¹` and `e^{Λt}`.
    pub nonneg_slack: f64,
    /// Positive definite iff smallest eigenvalue > pd_rel·‖P‖.
    pub pd_rel: f64,
    /// Negative definite iff largest eigenvalue < -neg_def.
    pub neg_def: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            hurwitz_margin: 0.0,
            metzler_slack: 1e-12,
            nonneg_slack: 1e-10,
            pd_rel: 1e-10,
            neg_def: 1e-12,
        }
    }
}

/// `M(N)`: real parts on the diagonal, moduli off the diagonal.
pub fn metzlerize(n: &CMat) -> Result<RMat> {
    let dim = ensure_square(n)?;
    Ok(RMat::from_fn(dim, dim, |i, j| {
        if i == j {
            n[(i, j)].re
        } else {
            n[(i, j)].norm()
        }
    }))
}

/// First off-diagonal entry below `-slack`, if any.
pub fn metzler_violation(m: &RMat, slack: f64) -> Option<(usize, usize, f64)> {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i != j && m[(i, j)] < -slack {
                return Some((i, j, m[(i, j)]));
            }
        }
    }
    None
}

pub fn is_metzler(m: &RMat, slack: f64) -> bool {
    m.nrows() == m.ncols() && metzler_violation(m, slack).is_none()
}

pub fn require_metzler(m: &RMat, slack: f64) -> Result<()> {
    ensure_square(m)?;
    match metzler_violation(m, slack) {
        Some((row, col, value)) => Err(Error::NotMetzler { row, col, value }),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetzlerHurwitz {
    pub is_metzler: bool,
    pub is_hurwitz: bool,
    pub abscissa: f64,
    #[serde(with = "linalg::json::opt_real_matrix")]
    pub neg_inverse: Option<RMat>,
}

pub fn metzler_hurwitz_check(lambda: &RMat, tol: &Tolerances) -> Result<MetzlerHurwitz> {
    ensure_square(lambda)?;
    let is_metzler = is_metzler(lambda, tol.metzler_slack);
    let abscissa = linalg::spectral_abscissa(lambda)?;
    let is_hurwitz = abscissa < -tol.hurwitz_margin;
    let neg_inverse = if is_metzler && is_hurwitz {
        let ni = -inverse_r(lambda)?;
        let min = ni.min();
        if min < -tol.nonneg_slack {
            return Err(Error::Singular(format!(
                "-Λ⁻¹ of a Metzler Hurwitz matrix has entry {min:.3e} < 0; Λ is numerically singular"
            )));
        }
        Some(ni)
    } else {
        None
    };
    Ok(MetzlerHurwitz {
        is_metzler,
        is_hurwitz,
        abscissa,
        neg_inverse,
    })
}

/// `-Λ⁻¹` for a Metzler Hurwitz `Λ`, erroring otherwise.
pub fn neg_inverse(lambda: &RMat, tol: &Tolerances) -> Result<RMat> {
    require_metzler(lambda, tol.metzler_slack)?;
    let check = metzler_hurwitz_check(lambda, tol)?;
    check.neg_inverse.ok_or(Error::NotHurwitz(check.abscissa))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalLyapunov {
    #[serde(with = "linalg::json::vector")]
    pub d: RVec,
    pub margin: f64,
    /// Diagonal shift used by the fallback, zero when the plain quotient worked.
    pub shift: f64,
}

impl DiagonalLyapunov {
    pub fn matrix(&self) -> RMat {
        RMat::from_diagonal(&self.d)
    }
}

fn quotient_diag(lambda: &RMat) -> Result<RVec> {
    let n = lambda.nrows();
    let ones = RVec::from_element(n, 1.0);
    let v = -inverse_r(lambda)? * &ones;
    let u = -inverse_r(&lambda.transpose())? * &ones;
    if v.iter().chain(u.iter()).any(|x| !(*x > 0.0)) {
        return Err(Error::Singular(
            "-Λ⁻¹𝟙 is not strictly positive; Λ is numerically singular".into(),
        ));
    }
    Ok(u.component_div(&v))
}

fn lyapunov_margin(lambda: &RMat, d: &RVec) -> Result<f64> {
    let dm = RMat::from_diagonal(d);
    max_symmetric_eigenvalue(&(lambda.transpose() * &dm + &dm * lambda))
}

/// Diagonal `D ≻ 0` with `Λ̄'D + DΛ̄ ≺ 0` from `d = u/v`, `v = -Λ̄⁻¹𝟙`,
/// `u = -Λ̄'⁻¹𝟙`.
pub fn diagonal_lyapunov(lambda_bar: &RMat, tol: &Tolerances) -> Result<DiagonalLyapunov> {
    require_metzler(lambda_bar, tol.metzler_slack)?;
    let abscissa = linalg::spectral_abscissa(lambda_bar)?;
    if !(abscissa < -tol.hurwitz_margin) {
        return Err(Error::NotHurwitz(abscissa));
    }
    let d = quotient_diag(lambda_bar)?;
    let margin = lyapunov_margin(lambda_bar, &d)?;
    if margin < -tol.neg_def {
        return Ok(DiagonalLyapunov {
            d,
            margin,
            shift: 0.0,
        });
    }

    // Borderline: build D from Λ̄ + sI, which sits further from the
    // boundary, and keep the first dyadic shift that verifies on Λ̄ itself.
    let n = lambda_bar.nrows();
    let span = -abscissa;
    for level in 1..=20u32 {
        let denom = f64::from(1u32 << level);
        for k in (1..(1u32 << level)).step_by(2) {
            let s = span * f64::from(k) / denom;
            let shifted = lambda_bar + RMat::identity(n, n) * s;
            let Ok(ds) = quotient_diag(&shifted) else {
                continue;
            };
            let m = lyapunov_margin(lambda_bar, &ds)?;
            if m < -tol.neg_def {
                return Ok(DiagonalLyapunov {
                    d: ds,
                    margin: m,
                    shift: s,
                });
            }
        }
    }
    Err(Error::NotHurwitz(margin))
}

/// Check `P` is symmetric positive definite per the relative threshold.
pub fn require_positive_definite(p: &RMat, tol: &Tolerances) -> Result<f64> {
    let ev = symmetric_eigenvalues(p)?;
    let min = ev.first().copied().unwrap_or(0.0);
    let scale = ev.iter().map(|x| x.abs()).fold(0.0, f64::max);
    if min > tol.pd_rel * scale && min > 0.0 {
        Ok(min)
    } else {
        Err(Error::NotPositiveDefinite(min))
    }
}

/// `P = Re{(V⁻¹)* D V⁻¹}`.
pub fn cqlf_from_diag(v: &CMat, d: &RVec, tol: &Tolerances) -> Result<RMat> {
    let n = ensure_square(v)?;
    if d.len() != n {
        return Err(Error::Dimension(format!(
            "D has {} entries but V is {n}x{n}",
            d.len()
        )));
    }
    if d.iter().any(|x| !(*x > 0.0)) {
        return Err(Error::InvalidArgument("D must be strictly positive".into()));
    }
    let cond = linalg::condition_number(v);
    if cond > COND_LIMIT {
        return Err(Error::IllConditioned {
            cond,
            limit: COND_LIMIT,
        });
    }
    let vi = inverse_c(v)?;
    let dc = CMat::from_diagonal(&d.map(|x| num_complex::Complex64::new(x, 0.0)));
    let full = vi.adjoint() * dc * &vi;
    let p = linalg::real_part(&full);
    let p = (&p + p.transpose()) * 0.5;
    require_positive_definite(&p, tol)?;
    Ok(p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CqlfVerdict {
    pub margins: Vec<f64>,
    pub pass: bool,
}

/// Largest eigenvalue of `A_i'P + PA_i` per mode; pass iff all are `< tol`.
pub fn verify_cqlf(p: &RMat, modes: &[RMat], tol: f64) -> Result<CqlfVerdict> {
    let n = ensure_square(p)?;
    let mut margins = Vec::with_capacity(modes.len());
    for a in modes {
        if a.nrows() != n || a.ncols() != n {
            return Err(Error::Dimension(format!(
                "mode matrix is {}x{} but P is {n}x{n}",
                a.nrows(),
                a.ncols()
            )));
        }
        margins.push(max_symmetric_eigenvalue(&(a.transpose() * p + p * a))?);
    }
    let pass = margins.iter().all(|m| *m < tol);
    Ok(CqlfVerdict { margins, pass })
}

/// Random Metzler matrix with off-diagonals in `[0, off_max)` and diagonal in
/// `[diag_lo, diag_hi)`; test and property-suite helper.
pub fn random_metzler<R: rand::Rng>(
    rng: &mut R,
    n: usize,
    off_max: f64,
    diag_lo: f64,
    diag_hi: f64,
) -> RMat {
    RMat::from_fn(n, n, |i, j| {
        if i == j {
            rng.random_range(diag_lo..diag_hi)
        } else {
            rng.random_range(0.0..off_max)
        }
    })
}

/// Random Metzler Hurwitz matrix made strictly row-diagonally dominant.
pub fn random_metzler_hurwitz<R: rand::Rng>(rng: &mut R, n: usize) -> RMat {
    let mut m = random_metzler(rng, n, 1.0, 0.0, 0.0);
    for i in 0..n {
        let row: f64 = (0..n).filter(|j| *j != i).map(|j| m[(i, j)]).sum();
        m[(i, i)] = -(row + rng.random_range(0.05..1.0));
    }
    m
}

pub fn ones(n: usize) -> RVec {
    DVector::from_element(n, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn metzlerize_diagonal() {
        let n = CMat::from_diagonal(&DVector::from_vec(vec![c(-1.0, 2.0), c(-3.0, 0.0)]));
        let m = metzlerize(&n).unwrap();
        assert_eq!(m, RMat::from_diagonal(&DVector::from_vec(vec![-1.0, -3.0])));
    }

    #[test]
    fn metzlerize_elementwise_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = CMat::from_fn(4, 4, |_, _| {
            c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0))
        });
        let m = metzlerize(&n).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let z = n[(i, j)];
                let want = if i == j { z.re } else { (z.re * z.re + z.im * z.im).sqrt() };
                assert!((m[(i, j)] - want).abs() < 1e-15);
            }
        }
        assert!(is_metzler(&m, 0.0));
    }

    #[test]
    fn metzlerize_rejects_non_square() {
        assert!(matches!(
            metzlerize(&CMat::zeros(2, 3)),
            Err(Error::NotSquare { .. })
        ));
    }

    #[test]
    fn swap_matrix_not_hurwitz() {
        let m = RMat::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let r = metzler_hurwitz_check(&m, &Tolerances::default()).unwrap();
        assert!(r.is_metzler);
        assert!(!r.is_hurwitz);
        assert!(r.neg_inverse.is_none());
        assert!((r.abscissa - 1.0).abs() < 1e-12);
    }

    #[test]
    fn minus_identity_gives_unit_d() {
        let d = diagonal_lyapunov(&(-RMat::identity(3, 3)), &Tolerances::default()).unwrap();
        assert!((d.d - ones(3)).amax() < 1e-14);
        assert!((d.margin + 2.0).abs() < 1e-12);
        assert_eq!(d.shift, 0.0);
    }

    #[test]
    fn diagonal_lyapunov_rejects_non_metzler() {
        let m = RMat::from_row_slice(2, 2, &[-1.0, -0.5, 0.0, -1.0]);
        assert!(matches!(
            diagonal_lyapunov(&m, &Tolerances::default()),
            Err(Error::NotMetzler { .. })
        ));
    }

    #[test]
    fn cqlf_identity_v() {
        let v = linalg::to_complex(&RMat::identity(2, 2));
        let p = cqlf_from_diag(&v, &DVector::from_vec(vec![2.0, 3.0]), &Tolerances::default())
            .unwrap();
        assert!((p - RMat::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0])).amax() < 1e-15);
    }

    #[test]
    fn cqlf_unitary_v_gives_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let z = CMat::from_fn(4, 4, |_, _| {
            c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let q = z.qr().q();
        let p = cqlf_from_diag(&q, &ones(4), &Tolerances::default()).unwrap();
        assert!((p - RMat::identity(4, 4)).amax() < 1e-12);
    }

    #[test]
    fn verify_cqlf_trivial() {
        let v = verify_cqlf(&RMat::identity(2, 2), &[-RMat::identity(2, 2)], 0.0).unwrap();
        assert!((v.margins[0] + 2.0).abs() < 1e-14);
        assert!(v.pass);
    }

    #[test]
    fn verify_cqlf_dimension_mismatch() {
        assert!(matches!(
            verify_cqlf(&RMat::identity(2, 2), &[RMat::identity(3, 3)], 0.0),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn cqlf_for_shared_eigenbasis() {
        // Upper-triangular modes with negative diagonals share the basis e_1..e_n.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 3;
        let basis = CMat::from_fn(n, n, |_, _| {
            c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let modes: Vec<RMat> = (0..3)
            .map(|_| {
                let t = CMat::from_fn(n, n, |i, j| {
                    if i == j {
                        c(rng.random_range(-3.0..-1.0), 0.0)
                    } else if j > i {
                        c(rng.random_range(-0.3..0.3), 0.0)
                    } else {
                        c(0.0, 0.0)
                    }
                });
                let re = linalg::real_part(&basis);
                let re_inv = inverse_r(&re).unwrap();
                linalg::real_part(&(linalg::to_complex(&re) * t * linalg::to_complex(&re_inv)))
            })
            .collect();
        let v = linalg::to_complex(&linalg::real_part(&basis));
        let vi = inverse_c(&v).unwrap();
        let lambda = modes
            .iter()
            .map(|a| metzlerize(&(&vi * linalg::to_complex(a) * &v)).unwrap())
            .reduce(|x, y| linalg::entrywise_max(&x, &y))
            .unwrap();
        let tol = Tolerances::default();
        let dl = diagonal_lyapunov(&lambda, &tol).unwrap();
        let p = cqlf_from_diag(&v, &dl.d, &tol).unwrap();
        let verdict = verify_cqlf(&p, &modes, 0.0).unwrap();
        assert!(verdict.pass, "{:?}", verdict.margins);
    }
}
