//! Componentwise bounds in the transformed coordinates `ξ = V⁻¹x`.
//!
//! Every bound is driven by a comparison matrix `Λ` (Metzler, Hurwitz) and a
//! majorant of the transformed perturbation, either `ψ` built from the
//! per-mode bounds or the lifted affine cap `F̄x + w̄`.

pub mod affine;
pub mod constant;
pub mod nonlinear;

use serde::{Deserialize, Serialize};

pub use affine::{affine_pipeline, to_original_box, AffineBoundReport, BoxBound};
pub use constant::{constant_bounds, ConstantBoundReport};
pub use nonlinear::{
    find_beta, gamma_margin, invariance_check, iterate_t0, nonlinear_pipeline, semiglobal_bound,
    GammaMargin, InvarianceVerdict, IterOptions, NonlinearBoundReport, SemiglobalReport,
};

use crate::error::{Error, Result};
use crate::linalg::{self, abs_c, CMat, RMat, RVec};
use crate::metzler::{neg_inverse, Tolerances};
use crate::system::{eval_bound, PerturbationBound, SwitchingSystem};
use crate::transform::TransformCandidate;

/// Largest `q` handled by exact vertex enumeration.
pub const VERTEX_LIMIT: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCase {
    #[serde(with = "linalg::json::vector")]
    pub value: RVec,
    /// False when the `|B|d` relaxation was used instead of enumeration.
    pub exact: bool,
}

/// Componentwise `max_{|w| ⪯ d} |Bw|`.
///
/// Each row of `B` is a complex linear form whose modulus is convex, so the
/// maximum sits at a vertex of the box; vertices are enumerated when
/// `q ≤ 20` (half of them, by the `w ↦ -w` symmetry). Real `B` gives `|B|d`.
pub fn worst_case_image(b: &CMat, d: &RVec, allow_overbound: bool) -> Result<WorstCase> {
    if b.ncols() != d.len() {
        return Err(Error::Dimension(format!(
            "B has {} columns, d has {} entries",
            b.ncols(),
            d.len()
        )));
    }
    if d.iter().any(|x| !(*x >= 0.0)) {
        return Err(Error::InvalidArgument("d must be ⪰ 0".into()));
    }
    let q = d.len();
    if linalg::is_real(b) {
        return Ok(WorstCase {
            value: abs_c(b) * d,
            exact: true,
        });
    }
    if q > VERTEX_LIMIT {
        if !allow_overbound {
            return Err(Error::InvalidArgument(format!(
                "q = {q} exceeds the vertex enumeration limit {VERTEX_LIMIT}; enable the |B|d overbound"
            )));
        }
        return Ok(WorstCase {
            value: abs_c(b) * d,
            exact: false,
        });
    }
    let p = b.nrows();
    let mut out = RVec::zeros(p);
    let patterns = if q == 0 { 1 } else { 1usize << (q - 1) };
    for i in 0..p {
        let terms: Vec<_> = (0..q).map(|j| b[(i, j)] * d[j]).collect();
        let mut best = 0.0f64;
        for s in 0..patterns {
            let mut acc = terms.first().copied().unwrap_or_default();
            for (j, t) in terms.iter().enumerate().skip(1) {
                if s >> (j - 1) & 1 == 1 {
                    acc -= t;
                } else {
                    acc += t;
                }
            }
            best = best.max(acc.norm());
        }
        out[i] = best;
    }
    Ok(WorstCase {
        value: out,
        exact: true,
    })
}

/// `Λ` with its `-Λ⁻¹`, validated Metzler and Hurwitz.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub lambda: RMat,
    pub neg_inv: RMat,
}

impl Comparison {
    pub fn new(lambda: &RMat, tol: &Tolerances) -> Result<Self> {
        Ok(Comparison {
            lambda: lambda.clone(),
            neg_inv: neg_inverse(lambda, tol)?,
        })
    }

    pub fn n(&self) -> usize {
        self.lambda.nrows()
    }

    /// `T_γ(x) = -Λ⁻¹δ(x) + γ`.
    pub fn t_gamma(&self, delta: &dyn Majorant, x: &RVec, gamma: &RVec) -> Result<RVec> {
        Ok(&self.neg_inv * delta.eval(x)? + gamma)
    }

    /// `T₀(x) = -Λ⁻¹δ(x)`.
    pub fn t0(&self, delta: &dyn Majorant, x: &RVec) -> Result<RVec> {
        Ok(&self.neg_inv * delta.eval(x)?)
    }
}

/// An order-preserving overbound of the transformed perturbation.
pub trait Majorant {
    fn eval(&self, x: &RVec) -> Result<RVec>;
}

/// `ψ(x) = max_i worst_case_image(V⁻¹H_i, δ_i(|V|x))`.
pub struct Psi {
    vinv_h: Vec<CMat>,
    abs_v: RMat,
    bounds: Vec<PerturbationBound>,
}

impl Psi {
    pub fn new(candidate: &TransformCandidate, system: &SwitchingSystem) -> Self {
        Psi {
            vinv_h: system.modes.iter().map(|m| candidate.vinv_h(&m.h)).collect(),
            abs_v: candidate.abs_v(),
            bounds: system.modes.iter().map(|m| m.bound.clone()).collect(),
        }
    }
}

impl Majorant for Psi {
    fn eval(&self, x: &RVec) -> Result<RVec> {
        let theta = &self.abs_v * x;
        let mut out = RVec::zeros(self.abs_v.nrows());
        for (b, bound) in self.vinv_h.iter().zip(&self.bounds) {
            let d = eval_bound(bound, &theta)?;
            let w = worst_case_image(b, &d, false)?;
            out = linalg::vec_max(&out, &w.value);
        }
        Ok(out)
    }
}

/// `x ↦ F̄x + w̄`.
pub struct AffineMajorant {
    pub f_bar: RMat,
    pub w_bar: RVec,
}

impl Majorant for AffineMajorant {
    fn eval(&self, x: &RVec) -> Result<RVec> {
        Ok(&self.f_bar * x + &self.w_bar)
    }
}
