//! Transient and ultimate bounds under constant perturbation bounds.

use serde::{Deserialize, Serialize};

use super::{worst_case_image, Comparison};
use crate::error::{Error, Result};
use crate::linalg::{self, json, matrix_exponential, RMat, RVec};
use crate::metzler::Tolerances;
use crate::system::SwitchingSystem;
use crate::transform::TransformCandidate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantBoundReport {
    #[serde(with = "json::vector")]
    pub z: RVec,
    #[serde(with = "json::vector")]
    pub eta: RVec,
    #[serde(with = "json::vector")]
    pub ultimate: RVec,
    #[serde(rename = "Lambda", with = "json::real_matrix")]
    pub lambda: RMat,
    pub exact_vertices: bool,
}

impl ConstantBoundReport {
    /// `-Λ⁻¹z + e^{Λt}η`.
    pub fn envelope(&self, t: f64) -> Result<RVec> {
        Ok(&self.ultimate + matrix_exponential(&self.lambda, t)? * &self.eta)
    }

    /// Sampled `(t, envelope)` rows as CSV.
    pub fn envelope_csv(&self, times: &[f64]) -> Result<String> {
        let mut out = String::from("t");
        for j in 0..self.z.len() {
            out.push_str(&format!(",bound{}", j + 1));
        }
        out.push('\n');
        for t in times {
            let e = self.envelope(*t)?;
            out.push_str(&format!("{t}"));
            for v in e.iter() {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        Ok(out)
    }
}

/// `z = max_i worst_case_image(V⁻¹H_i, w_i)`, `η = max{|V⁻¹x(0)| + Λ⁻¹z, 0}`.
pub fn constant_bounds(
    candidate: &TransformCandidate,
    system: &SwitchingSystem,
    w: &[RVec],
    initial_box: &RVec,
    tol: &Tolerances,
) -> Result<ConstantBoundReport> {
    if w.len() != system.modes.len() {
        return Err(Error::Dimension(format!(
            "{} constant bounds for {} modes",
            w.len(),
            system.modes.len()
        )));
    }
    let n = candidate.n();
    if initial_box.len() != n || initial_box.iter().any(|x| !(*x >= 0.0)) {
        return Err(Error::InvalidArgument("initial box must be a nonnegative n-vector".into()));
    }
    let cmp = Comparison::new(&candidate.lambda, tol)?;
    let mut z = RVec::zeros(n);
    let mut exact = true;
    for (mode, wi) in system.modes.iter().zip(w) {
        let wc = worst_case_image(&candidate.vinv_h(&mode.h), wi, false)?;
        exact &= wc.exact;
        z = linalg::vec_max(&z, &wc.value);
    }
    let ultimate = &cmp.neg_inv * &z;
    let eta = (initial_box - &ultimate).map(|x| x.max(0.0));
    Ok(ConstantBoundReport {
        z,
        eta,
        ultimate,
        lambda: cmp.lambda,
        exact_vertices: exact,
    })
}
