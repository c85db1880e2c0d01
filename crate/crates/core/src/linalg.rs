//! Dense real/complex matrix helpers on top of nalgebra.
//!
//! Everything in the crate works with dynamically sized matrices; the state
//! dimensions involved are small (n ≤ 10 in practice), so no effort is spent
//! on blocking or sparsity.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type RMat = DMatrix<f64>;
pub type CMat = DMatrix<Complex64>;
pub type RVec = DVector<f64>;

/// Condition number above which a transform is rejected outright.
pub const COND_LIMIT: f64 = 1e12;

pub fn ensure_square<T>(m: &DMatrix<T>) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(m.nrows())
}

pub fn ensure_finite(m: &RMat, what: &str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{what} has non-finite entries")))
    }
}

pub fn to_complex(m: &RMat) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Entrywise modulus `|M|`.
pub fn abs_c(m: &CMat) -> RMat {
    m.map(|z| z.norm())
}

pub fn abs_r(m: &RMat) -> RMat {
    m.map(f64::abs)
}

pub fn abs_vec(v: &RVec) -> RVec {
    v.map(f64::abs)
}

/// True when every imaginary part is exactly zero.
pub fn is_real(m: &CMat) -> bool {
    m.iter().all(|z| z.im == 0.0)
}

pub fn real_part(m: &CMat) -> RMat {
    m.map(|z| z.re)
}

pub fn entrywise_max(a: &RMat, b: &RMat) -> RMat {
    a.zip_map(b, f64::max)
}

pub fn vec_max(a: &RVec, b: &RVec) -> RVec {
    a.zip_map(b, f64::max)
}

pub fn vec_min(a: &RVec, b: &RVec) -> RVec {
    a.zip_map(b, f64::min)
}

/// Componentwise `a ⪯ b + slack`.
pub fn vec_le(a: &RVec, b: &RVec, slack: f64) -> bool {
    a.iter().zip(b.iter()).all(|(x, y)| *x <= *y + slack)
}

/// Componentwise strict `a ≺ b`.
pub fn vec_lt(a: &RVec, b: &RVec) -> bool {
    a.iter().zip(b.iter()).all(|(x, y)| x < y)
}

pub fn inverse_r(m: &RMat) -> Result<RMat> {
    ensure_square(m)?;
    let inv = m
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("real LU inverse failed".into()))?;
    if inv.iter().all(|x| x.is_finite()) {
        Ok(inv)
    } else {
        Err(Error::Singular("real inverse has non-finite entries".into()))
    }
}

pub fn inverse_c(m: &CMat) -> Result<CMat> {
    ensure_square(m)?;
    let inv = m
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("complex LU inverse failed".into()))?;
    if inv.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(inv)
    } else {
        Err(Error::Singular("complex inverse has non-finite entries".into()))
    }
}

/// 2-norm condition number via the singular values.
pub fn condition_number(m: &CMat) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Eigenvalues with their spectral abscissa and radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralInfo {
    pub eigenvalues: Vec<[f64; 2]>,
    pub abscissa: f64,
    pub radius: f64,
}

impl SpectralInfo {
    pub fn eigenvalues_complex(&self) -> Vec<Complex64> {
        self.eigenvalues
            .iter()
            .map(|e| Complex64::new(e[0], e[1]))
            .collect()
    }
}

const SCHUR_MAX_SWEEPS: usize = 10_000;

pub fn eigenvalues(m: &RMat) -> Result<Vec<Complex64>> {
    let n = ensure_square(m)?;
    ensure_finite(m, "matrix")?;
    if n == 0 {
        return Ok(Vec::new());
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, SCHUR_MAX_SWEEPS)
        .ok_or(Error::EigenNonConvergence(n))?;
    Ok(schur.complex_eigenvalues().iter().cloned().collect())
}

pub fn spectral_info(m: &RMat) -> Result<SpectralInfo> {
    let ev = eigenvalues(m)?;
    let abscissa = ev.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let radius = ev.iter().map(|z| z.norm()).fold(0.0, f64::max);
    Ok(SpectralInfo {
        eigenvalues: ev.iter().map(|z| [z.re, z.im]).collect(),
        abscissa,
        radius,
    })
}

pub fn spectral_abscissa(m: &RMat) -> Result<f64> {
    Ok(spectral_info(m)?.abscissa)
}

pub fn spectral_radius(m: &RMat) -> Result<f64> {
    Ok(spectral_info(m)?.radius)
}

/// `e^{Λt}` by scaling and squaring with a Padé approximant.
pub fn matrix_exponential(lambda: &RMat, t: f64) -> Result<RMat> {
    ensure_square(lambda)?;
    ensure_finite(lambda, "Λ")?;
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "time must be finite and nonnegative, got {t}"
        )));
    }
    if lambda.nrows() == 0 {
        return Ok(lambda.clone());
    }
    let scaled = lambda * t;
    let e = scaled.exp();
    if e.iter().all(|x| x.is_finite()) {
        Ok(e)
    } else {
        Err(Error::ExpOverflow(scaled.norm()))
    }
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn symmetric_eigenvalues(m: &RMat) -> Result<Vec<f64>> {
    ensure_square(m)?;
    ensure_finite(m, "symmetric matrix")?;
    let sym = (m + m.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().cloned().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    Ok(ev)
}

pub fn max_symmetric_eigenvalue(m: &RMat) -> Result<f64> {
    Ok(*symmetric_eigenvalues(m)?
        .last()
        .ok_or_else(|| Error::InvalidArgument("empty matrix".into()))?)
}

/// Serde adapters for the report format: matrices are row-major arrays of
/// rows; complex entries are `[re, im]` pairs and real entries bare numbers.
/// Both entry forms are accepted when reading.
pub mod json {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Entry {
        Real(f64),
        Complex([f64; 2]),
    }

    impl Entry {
        fn value(&self) -> Complex64 {
            match *self {
                Entry::Real(x) => Complex64::new(x, 0.0),
                Entry::Complex([re, im]) => Complex64::new(re, im),
            }
        }
    }

    fn rows_to_cmat(rows: Vec<Vec<Entry>>) -> std::result::Result<CMat, String> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err("ragged matrix rows".into());
        }
        Ok(CMat::from_fn(nrows, ncols, |i, j| rows[i][j].value()))
    }

    pub fn cmat_from_value(v: &serde_json::Value) -> Result<CMat> {
        let rows: Vec<Vec<Entry>> = serde_json::from_value(v.clone())?;
        rows_to_cmat(rows).map_err(Error::Config)
    }

    pub fn rmat_from_value(v: &serde_json::Value) -> Result<RMat> {
        let m = cmat_from_value(v)?;
        if !is_real(&m) {
            return Err(Error::Config("expected a real matrix".into()));
        }
        Ok(real_part(&m))
    }

    pub fn rmat_rows(m: &RMat) -> Vec<Vec<f64>> {
        (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
            .collect()
    }

    pub fn cmat_rows(m: &CMat) -> Vec<Vec<[f64; 2]>> {
        (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
            .collect()
    }

    pub mod real_matrix {
        use super::*;

        pub fn serialize<S: Serializer>(m: &RMat, s: S) -> std::result::Result<S::Ok, S::Error> {
            rmat_rows(m).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<RMat, D::Error> {
            let rows = Vec::<Vec<Entry>>::deserialize(d)?;
            let m = rows_to_cmat(rows).map_err(serde::de::Error::custom)?;
            if !is_real(&m) {
                return Err(serde::de::Error::custom("expected a real matrix"));
            }
            Ok(real_part(&m))
        }
    }

    pub mod complex_matrix {
        use super::*;

        pub fn serialize<S: Serializer>(m: &CMat, s: S) -> std::result::Result<S::Ok, S::Error> {
            cmat_rows(m).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<CMat, D::Error> {
            let rows = Vec::<Vec<Entry>>::deserialize(d)?;
            rows_to_cmat(rows).map_err(serde::de::Error::custom)
        }
    }

    pub mod opt_real_matrix {
        use super::*;

        pub fn serialize<S: Serializer>(
            m: &Option<RMat>,
            s: S,
        ) -> std::result::Result<S::Ok, S::Error> {
            m.as_ref().map(rmat_rows).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(
            d: D,
        ) -> std::result::Result<Option<RMat>, D::Error> {
            let rows = Option::<Vec<Vec<f64>>>::deserialize(d)?;
            Ok(rows.map(|r| {
                let ncols = r.first().map_or(0, Vec::len);
                RMat::from_fn(r.len(), ncols, |i, j| r[i][j])
            }))
        }
    }

    pub mod real_matrices {
        use super::*;

        pub fn serialize<S: Serializer>(m: &[RMat], s: S) -> std::result::Result<S::Ok, S::Error> {
            m.iter().map(rmat_rows).collect::<Vec<_>>().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(
            d: D,
        ) -> std::result::Result<Vec<RMat>, D::Error> {
            let all = Vec::<Vec<Vec<f64>>>::deserialize(d)?;
            Ok(all
                .into_iter()
                .map(|r| {
                    let ncols = r.first().map_or(0, Vec::len);
                    RMat::from_fn(r.len(), ncols, |i, j| r[i][j])
                })
                .collect())
        }
    }

    pub mod vector {
        use super::*;

        pub fn serialize<S: Serializer>(v: &RVec, s: S) -> std::result::Result<S::Ok, S::Error> {
            v.as_slice().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<RVec, D::Error> {
            Ok(RVec::from_vec(Vec::<f64>::deserialize(d)?))
        }
    }

    pub mod opt_vector {
        use super::*;

        pub fn serialize<S: Serializer>(
            v: &Option<RVec>,
            s: S,
        ) -> std::result::Result<S::Ok, S::Error> {
            v.as_ref().map(|v| v.as_slice().to_vec()).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(
            d: D,
        ) -> std::result::Result<Option<RVec>, D::Error> {
            Ok(Option::<Vec<f64>>::deserialize(d)?.map(RVec::from_vec))
        }
    }

    /// Finite values as numbers, non-finite ones as `"inf"`, `"-inf"`, `"nan"`.
    pub mod lenient_f64 {
        use super::*;

        #[derive(Serialize, Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }

        pub fn serialize<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
            if x.is_finite() {
                Repr::Num(*x)
            } else if x.is_nan() {
                Repr::Text("nan".into())
            } else if *x > 0.0 {
                Repr::Text("inf".into())
            } else {
                Repr::Text("-inf".into())
            }
            .serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
            match Repr::deserialize(d)? {
                Repr::Num(x) => Ok(x),
                Repr::Text(t) => match t.as_str() {
                    "inf" => Ok(f64::INFINITY),
                    "-inf" => Ok(f64::NEG_INFINITY),
                    "nan" => Ok(f64::NAN),
                    other => Err(serde::de::Error::custom(format!("not a number: {other}"))),
                },
            }
        }
    }

    pub mod vectors {
        use super::*;

        pub fn serialize<S: Serializer>(v: &[RVec], s: S) -> std::result::Result<S::Ok, S::Error> {
            v.iter()
                .map(|v| v.as_slice().to_vec())
                .collect::<Vec<_>>()
                .serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(
            d: D,
        ) -> std::result::Result<Vec<RVec>, D::Error> {
            Ok(Vec::<Vec<f64>>::deserialize(d)?
                .into_iter()
                .map(RVec::from_vec)
                .collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_spectrum() {
        let info = spectral_info(&RMat::identity(4, 4)).unwrap();
        assert!((info.abscissa - 1.0).abs() < 1e-14);
        assert!((info.radius - 1.0).abs() < 1e-14);
    }

    #[test]
    fn exp_of_minus_identity() {
        let e = matrix_exponential(&(-RMat::identity(3, 3)), 1.0).unwrap();
        let expected = RMat::identity(3, 3) * (-1.0f64).exp();
        assert!((e - expected).amax() < 1e-15);
    }

    #[test]
    fn exp_at_zero_is_identity() {
        let m = RMat::from_row_slice(2, 2, &[-3.0, 1.0, 2.0, -5.0]);
        let e = matrix_exponential(&m, 0.0).unwrap();
        assert!((e - RMat::identity(2, 2)).amax() < 1e-15);
    }

    #[test]
    fn exp_rejects_negative_time() {
        assert!(matrix_exponential(&RMat::identity(2, 2), -1.0).is_err());
    }

    #[test]
    fn exp_overflow_is_reported() {
        let m = RMat::identity(2, 2) * 1e4;
        assert!(matches!(
            matrix_exponential(&m, 1.0),
            Err(Error::ExpOverflow(_))
        ));
    }

    #[test]
    fn non_square_rejected() {
        let m = RMat::zeros(2, 3);
        assert!(matches!(spectral_info(&m), Err(Error::NotSquare { .. })));
    }

    #[test]
    fn json_accepts_bare_and_pairs() {
        let v: serde_json::Value = serde_json::json!([[1.0, [2.0, 3.0]], [[0.0, -1.0], 4.0]]);
        let m = json::cmat_from_value(&v).unwrap();
        assert_eq!(m[(0, 1)], Complex64::new(2.0, 3.0));
        assert_eq!(m[(1, 0)], Complex64::new(0.0, -1.0));
        assert!(json::rmat_from_value(&v).is_err());
    }
}
