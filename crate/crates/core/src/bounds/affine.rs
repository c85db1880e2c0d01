//! Global ultimate bounds under affine caps: `R = -Λ⁻¹F̄`,
//! `b̃ = (I - R)⁻¹(-Λ⁻¹w̄)`, optional refinement by a tighter majorant.

use serde::{Deserialize, Serialize};

use super::nonlinear::{invariance_affine, iterate_t0, InvarianceVerdict, IterOptions};
use super::{AffineMajorant, Comparison, Majorant};
use crate::error::Result;
use crate::linalg::{self, abs_c, json, CMat, RMat, RVec};
use crate::metzler::Tolerances;
use crate::system::{AffineCap, SwitchingSystem};
use crate::transform::{lift_affine_caps, TransformCandidate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineBoundReport {
    #[serde(rename = "F_bar", with = "json::real_matrix")]
    pub f_bar: RMat,
    #[serde(rename = "w_bar", with = "json::vector")]
    pub w_bar: RVec,
    #[serde(rename = "R", with = "json::real_matrix")]
    pub r: RMat,
    pub rho_r: f64,
    /// `a(Λ + F̄)`; negative exactly when `ρ(R) < 1`.
    pub abscissa_lambda_plus_f: f64,
    pub equivalence_consistent: bool,
    pub stable: bool,
    #[serde(with = "json::opt_vector")]
    pub b_tilde: Option<RVec>,
    #[serde(with = "json::opt_vector")]
    pub abs_v_b_tilde: Option<RVec>,
    #[serde(with = "json::opt_vector")]
    pub b_refined: Option<RVec>,
    #[serde(with = "json::opt_vector")]
    pub abs_v_b_refined: Option<RVec>,
    pub invariance: Option<InvarianceVerdict>,
}

/// Lift the caps, test `ρ(R) < 1`, form `b̃`, and refine with `refine` when
/// given (iterating `T₀` from `b̃`).
pub fn affine_pipeline(
    candidate: &TransformCandidate,
    system: &SwitchingSystem,
    caps: &[AffineCap],
    refine: Option<&dyn Majorant>,
    tol: &Tolerances,
    opts: &IterOptions,
) -> Result<AffineBoundReport> {
    let n = candidate.n();
    let (f_bar, w_bar) = lift_affine_caps(&candidate.v, &candidate.v_inv, system, caps)?;
    let cmp = Comparison::new(&candidate.lambda, tol)?;
    let r = &cmp.neg_inv * &f_bar;
    let rho_r = linalg::spectral_radius(&r)?;
    let abscissa_lambda_plus_f = linalg::spectral_abscissa(&(&candidate.lambda + &f_bar))?;
    let stable = rho_r < 1.0;
    let equivalence_consistent = stable == (abscissa_lambda_plus_f < 0.0);
    let abs_v = abs_c(&candidate.v);
    let mut report = AffineBoundReport {
        f_bar: f_bar.clone(),
        w_bar: w_bar.clone(),
        r: r.clone(),
        rho_r,
        abscissa_lambda_plus_f,
        equivalence_consistent,
        stable,
        b_tilde: None,
        abs_v_b_tilde: None,
        b_refined: None,
        abs_v_b_refined: None,
        invariance: None,
    };
    if !stable {
        return Ok(report);
    }
    let b_tilde = linalg::inverse_r(&(RMat::identity(n, n) - &r))? * (&cmp.neg_inv * &w_bar);
    let affine = AffineMajorant { f_bar, w_bar };
    report.invariance = Some(invariance_affine(&cmp, &affine, &b_tilde, 8)?);
    if let Some(delta) = refine {
        let b = iterate_t0(&cmp, delta, &b_tilde, opts)?.b;
        report.abs_v_b_refined = Some(&abs_v * &b);
        report.b_refined = Some(b);
    }
    report.abs_v_b_tilde = Some(&abs_v * &b_tilde);
    report.b_tilde = Some(b_tilde);
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coords {
    Transformed,
    Original,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxBound {
    pub coords: Coords,
    #[serde(with = "json::vector")]
    pub radii: RVec,
}

/// `|x| ⪯ |V|r` whenever `|V⁻¹x| ⪯ r`.
pub fn to_original_box(v: &CMat, radii: &RVec) -> BoxBound {
    BoxBound {
        coords: Coords::Original,
        radii: abs_c(v) * radii,
    }
}

/// Uniform-stability certificate: `ρ(R) < 1` with `w̄ = 0` gives `b̃ = 0`.
pub fn is_zero_bound(report: &AffineBoundReport) -> bool {
    report.b_tilde.as_ref().is_some_and(|b| b.iter().all(|x| *x == 0.0))
}
