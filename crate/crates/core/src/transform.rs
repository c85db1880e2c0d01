//! Transformed comparison systems: `Λ_i = V⁻¹A_iV`, `M_i = M(Λ_i)`,
//! `Λ = max_i M_i`, and the lifted affine caps `F̄`, `w̄`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, abs_c, entrywise_max, inverse_c, json, to_complex, CMat, RMat, RVec};
use crate::metzler::metzlerize;
use crate::nelder_mead::{self, NelderMeadOptions};
use crate::system::{AffineCap, SwitchingSystem};

/// Condition number beyond which `V` is rejected.
pub const V_COND_LIMIT: f64 = 1e10;

/// What the transform search minimises.
#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    /// `a(Λ)`.
    Plain,
    /// `a(Λ + F̄)` with `F̄` lifted from per-mode caps.
    Affine(Vec<AffineCap>),
}

impl Objective {
    pub fn name(&self) -> &'static str {
        match self {
            Objective::Plain => "plain",
            Objective::Affine(_) => "affine",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformCandidate {
    #[serde(rename = "V", with = "json::complex_matrix")]
    pub v: CMat,
    #[serde(rename = "V_inv", with = "json::complex_matrix")]
    pub v_inv: CMat,
    #[serde(rename = "M_i", with = "json::real_matrices")]
    pub m_i: Vec<RMat>,
    #[serde(rename = "Lambda", with = "json::real_matrix")]
    pub lambda: RMat,
    #[serde(rename = "F_bar", with = "json::opt_real_matrix")]
    pub f_bar: Option<RMat>,
    #[serde(rename = "w_bar", with = "json::opt_vector")]
    pub w_bar: Option<RVec>,
    pub objective_kind: String,
    #[serde(with = "crate::linalg::json::lenient_f64")]
    pub objective: f64,
    #[serde(with = "crate::linalg::json::lenient_f64")]
    pub condition_v: f64,
}

impl TransformCandidate {
    pub fn n(&self) -> usize {
        self.lambda.nrows()
    }

    /// `|V|`.
    pub fn abs_v(&self) -> RMat {
        abs_c(&self.v)
    }

    /// `V⁻¹H_i`.
    pub fn vinv_h(&self, h: &RMat) -> CMat {
        &self.v_inv * to_complex(h)
    }

    /// `Λ_i = V⁻¹A_iV` (complex, before `M(·)`).
    pub fn lambda_i(&self, a: &RMat) -> CMat {
        &self.v_inv * to_complex(a) * &self.v
    }
}

/// `F̄ = max_i |V⁻¹H_i|F̄_i|V|` and `w̄ = max_i |V⁻¹H_i|w̄_i`.
pub fn lift_affine_caps(
    v: &CMat,
    v_inv: &CMat,
    system: &SwitchingSystem,
    caps: &[AffineCap],
) -> Result<(RMat, RVec)> {
    if caps.len() != system.modes.len() {
        return Err(Error::Dimension(format!(
            "{} affine caps for {} modes",
            caps.len(),
            system.modes.len()
        )));
    }
    let n = system.n;
    let abs_v = abs_c(v);
    let mut f_bar = RMat::zeros(n, n);
    let mut w_bar = RVec::zeros(n);
    for (mode, cap) in system.modes.iter().zip(caps) {
        if cap.f.nrows() != mode.h.ncols() || cap.f.ncols() != n || cap.w.len() != mode.h.ncols() {
            return Err(Error::Dimension("affine cap does not match H".into()));
        }
        let b = abs_c(&(v_inv * to_complex(&mode.h)));
        f_bar = entrywise_max(&f_bar, &(&b * &cap.f * &abs_v));
        w_bar = linalg::vec_max(&w_bar, &(&b * &cap.w));
    }
    Ok((f_bar, w_bar))
}

fn metzler_max(v: &CMat, v_inv: &CMat, system: &SwitchingSystem) -> Result<(Vec<RMat>, RMat)> {
    let m_i = system
        .modes
        .iter()
        .map(|m| metzlerize(&(v_inv * to_complex(&m.a) * v)))
        .collect::<Result<Vec<_>>>()?;
    let lambda = m_i
        .iter()
        .skip(1)
        .fold(m_i[0].clone(), |acc, m| entrywise_max(&acc, m));
    Ok((m_i, lambda))
}

/// Build the transform artifact for a given `V`.
pub fn assemble_transform(
    v: &CMat,
    system: &SwitchingSystem,
    objective: &Objective,
) -> Result<TransformCandidate> {
    let n = linalg::ensure_square(v)?;
    if n != system.n {
        return Err(Error::Dimension(format!(
            "V is {n}x{n}, system has n = {}",
            system.n
        )));
    }
    if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidArgument("V has non-finite entries".into()));
    }
    let condition_v = linalg::condition_number(v);
    if !(condition_v < V_COND_LIMIT) {
        return Err(Error::IllConditioned {
            cond: condition_v,
            limit: V_COND_LIMIT,
        });
    }
    let v_inv = inverse_c(v)?;
    let (m_i, lambda) = metzler_max(v, &v_inv, system)?;
    let (f_bar, w_bar, target) = match objective {
        Objective::Plain => (None, None, lambda.clone()),
        Objective::Affine(caps) => {
            let (f, w) = lift_affine_caps(v, &v_inv, system, caps)?;
            let t = &lambda + &f;
            (Some(f), Some(w), t)
        }
    };
    let value = linalg::spectral_abscissa(&target)?;
    Ok(TransformCandidate {
        v: v.clone(),
        v_inv,
        m_i,
        lambda,
        f_bar,
        w_bar,
        objective_kind: objective.name().to_string(),
        objective: value,
        condition_v,
    })
}

/// Objective value only, skipping the artifact; `None` for unusable `V`.
pub fn objective_value(v: &CMat, system: &SwitchingSystem, objective: &Objective) -> Option<f64> {
    let v_inv = v.clone().try_inverse()?;
    let (_, lambda) = metzler_max(v, &v_inv, system).ok()?;
    let target = match objective {
        Objective::Plain => lambda,
        Objective::Affine(caps) => {
            let (f, _) = lift_affine_caps(v, &v_inv, system, caps).ok()?;
            lambda + f
        }
    };
    linalg::spectral_abscissa(&target).ok()
}

/// Number of decimals in the shortest decimal representation of `x`.
pub fn printed_decimals(x: f64) -> u32 {
    let text = format!("{x}");
    match text.split_once('.') {
        Some((_, frac)) => frac.len() as u32,
        None => 0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolishReport {
    pub objective_before: f64,
    pub objective_after: f64,
    pub evals: usize,
    /// Largest |change| relative to the half-unit of the printed last digit.
    pub max_relative_move: f64,
}

/// Minimise the transform objective over `V` restricted to the rounding box
/// of its printed entries: each nonzero real or imaginary part may move by at
/// most half a unit in its last printed decimal, printed zeros stay fixed.
pub fn polish_transform(
    v_printed: &CMat,
    system: &SwitchingSystem,
    objective: &Objective,
    max_evals: usize,
) -> Result<(CMat, PolishReport)> {
    let n = linalg::ensure_square(v_printed)?;
    let start = assemble_transform(v_printed, system, objective)?;
    // (row, col, imaginary?, center, half-width)
    let mut free = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let z = v_printed[(i, j)];
            for (imag, x) in [(false, z.re), (true, z.im)] {
                if x != 0.0 {
                    let half = 0.5 * 10f64.powi(-(printed_decimals(x) as i32));
                    free.push((i, j, imag, x, half));
                }
            }
        }
    }
    let build = |u: &[f64]| {
        let mut v = v_printed.clone();
        for (k, (i, j, imag, x, half)) in free.iter().enumerate() {
            let value = x + half * u[k].tanh();
            let z = &mut v[(*i, *j)];
            if *imag {
                *z = Complex64::new(z.re, value);
            } else {
                *z = Complex64::new(value, z.im);
            }
        }
        v
    };
    let result = nelder_mead::minimize(
        |u| objective_value(&build(u), system, objective).unwrap_or(f64::INFINITY),
        &vec![0.0; free.len()],
        &NelderMeadOptions {
            max_evals,
            step: 0.5,
            f_tol: 1e-15,
            x_tol: 1e-9,
            target: f64::NEG_INFINITY,
        },
    );
    let polished = if result.f < start.objective {
        build(&result.x)
    } else {
        v_printed.clone()
    };
    let max_relative_move = free
        .iter()
        .map(|(i, j, imag, x, half)| {
            let z = polished[(*i, *j)];
            let now = if *imag { z.im } else { z.re };
            (now - x).abs() / half
        })
        .fold(0.0, f64::max);
    Ok((
        polished,
        PolishReport {
            objective_before: start.objective,
            objective_after: result.f.min(start.objective),
            evals: result.evals,
            max_relative_move,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{Mode, PerturbationBound};
    use nalgebra::dvector;

    fn single(a: RMat) -> SwitchingSystem {
        let n = a.nrows();
        SwitchingSystem::new(
            vec![Mode {
                a,
                h: RMat::zeros(n, 1),
                bound: PerturbationBound::Constant { w: dvector![0.0] },
            }],
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn identity_v_keeps_metzler_mode() {
        let a = RMat::from_row_slice(2, 2, &[-2.0, 1.0, 0.5, -3.0]);
        let sys = single(a.clone());
        let t = assemble_transform(&to_complex(&RMat::identity(2, 2)), &sys, &Objective::Plain)
            .unwrap();
        assert_eq!(t.lambda, a);
        let recomputed = linalg::spectral_abscissa(&t.lambda).unwrap();
        assert!((t.objective - recomputed).abs() < 1e-10);
    }

    #[test]
    fn singular_v_rejected() {
        let sys = single(-RMat::identity(2, 2));
        let v = to_complex(&RMat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]));
        assert!(assemble_transform(&v, &sys, &Objective::Plain).is_err());
    }

    #[test]
    fn decimals_from_shortest_repr() {
        assert_eq!(printed_decimals(2.408), 3);
        assert_eq!(printed_decimals(0.0351), 4);
        assert_eq!(printed_decimals(-4.0), 0);
        assert_eq!(printed_decimals(1.5), 1);
    }

    #[test]
    fn polish_stays_in_rounding_box() {
        let a = RMat::from_row_slice(2, 2, &[-1.0, 3.0, -0.2, -1.5]);
        let sys = single(a);
        let v = CMat::from_row_slice(
            2,
            2,
            &[
                Complex64::new(1.23, 0.4),
                Complex64::new(0.0, 0.71),
                Complex64::new(-0.5, 0.0),
                Complex64::new(2.1, -0.3),
            ],
        );
        let (p, rep) = polish_transform(&v, &sys, &Objective::Plain, 2000).unwrap();
        assert!(rep.objective_after <= rep.objective_before);
        assert!(rep.max_relative_move <= 1.0 + 1e-12);
        assert_eq!(p[(0, 1)].re, 0.0);
        assert_eq!(p[(1, 0)].im, 0.0);
    }
}
