//! Fixed-point bounds for order-preserving perturbation bounds:
//! `T_γ(x) = -Λ⁻¹δ(x) + γ`, its limit from a strict super-solution, the
//! admissible-initial-condition margin, and the semi-global affine variant.

use serde::{Deserialize, Serialize};

use super::{AffineMajorant, Comparison, Majorant};
use crate::error::{Error, Result};
use crate::linalg::{self, json, RMat, RVec};
use crate::metzler::ones;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IterOptions {
    /// Componentwise relative step tolerance.
    pub tol: f64,
    pub abs_floor: f64,
    pub max_iter: usize,
    /// Divergence threshold is `cap_factor·(1 + ‖α‖)`.
    pub cap_factor: f64,
}

impl Default for IterOptions {
    fn default() -> Self {
        IterOptions {
            tol: 1e-10,
            abs_floor: 1e-14,
            max_iter: 100_000,
            cap_factor: 1e9,
        }
    }
}

fn converged(prev: &RVec, next: &RVec, opts: &IterOptions) -> bool {
    prev.iter()
        .zip(next.iter())
        .all(|(a, b)| (a - b).abs() <= opts.tol * b.abs() + opts.abs_floor)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaResult {
    #[serde(with = "json::vector")]
    pub beta: RVec,
    #[serde(with = "json::vector")]
    pub t0_beta: RVec,
    pub iterations: usize,
}

/// Limit of `x ← T_α(x)` from `0`, checked to satisfy `T₀(β) ≺ β`.
pub fn find_beta(
    cmp: &Comparison,
    delta: &dyn Majorant,
    alpha: &RVec,
    opts: &IterOptions,
) -> Result<BetaResult> {
    if alpha.len() != cmp.n() || alpha.iter().any(|a| !(*a > 0.0)) {
        return Err(Error::InvalidArgument("α must be a strictly positive n-vector".into()));
    }
    let cap = opts.cap_factor * (1.0 + alpha.norm());
    let mut x = RVec::zeros(cmp.n());
    for k in 1..=opts.max_iter {
        let next = cmp.t_gamma(delta, &x, alpha)?;
        if next.iter().any(|v| !(v.abs() <= cap)) {
            return Err(Error::Divergence { iterations: k, cap });
        }
        let done = converged(&x, &next, opts);
        x = next;
        if done {
            let t0_beta = cmp.t0(delta, &x)?;
            if !linalg::vec_lt(&t0_beta, &x) {
                return Err(Error::Degenerate(format!(
                    "β = {:?}, T₀(β) = {:?}",
                    x.as_slice(),
                    t0_beta.as_slice()
                )));
            }
            return Ok(BetaResult {
                beta: x,
                t0_beta,
                iterations: k,
            });
        }
    }
    Err(Error::NoConvergence(opts.max_iter))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateResult {
    #[serde(with = "json::vector")]
    pub b: RVec,
    pub iterations: usize,
    /// `max_j |T₀(b) - b|_j` at termination.
    pub residual: f64,
}

/// Limit of `T₀ᵏ(start)`, asserting a componentwise nonincreasing sequence.
pub fn iterate_t0(
    cmp: &Comparison,
    delta: &dyn Majorant,
    start: &RVec,
    opts: &IterOptions,
) -> Result<IterateResult> {
    if start.len() != cmp.n() || start.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::InvalidArgument("start must be a nonnegative n-vector".into()));
    }
    let slack = |v: f64| 1e-12 * v.abs() + opts.abs_floor;
    let mut x = start.clone();
    for k in 1..=opts.max_iter {
        let next = cmp.t0(delta, &x)?;
        for j in 0..x.len() {
            if next[j] > x[j] + slack(x[j]) {
                return Err(Error::NotMonotone {
                    step: k,
                    component: j,
                    before: x[j],
                    after: next[j],
                });
            }
        }
        let done = converged(&x, &next, opts);
        x = next;
        if done {
            let residual = (cmp.t0(delta, &x)? - &x).amax();
            return Ok(IterateResult {
                b: x,
                iterations: k,
                residual,
            });
        }
    }
    Err(Error::NoConvergence(opts.max_iter))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaMargin {
    #[serde(with = "json::vector")]
    pub p_c: RVec,
    pub eps_bar: f64,
    pub slack: f64,
    #[serde(with = "json::vector")]
    pub gamma: RVec,
    #[serde(with = "json::vector")]
    pub admissible_init: RVec,
    /// `-Λ⁻¹[δ(β) + max{-Λγ, 0}] ≺ β` re-checked for the returned `γ`.
    pub verified: bool,
}

pub const EPS_SLACK: f64 = 1e-3;

/// `p(c) = max{-Λc, 0}`, `ε̄ = min_j [β - T₀(β)]_j / [-Λ⁻¹p(c)]_j`,
/// `γ = c·ε̄(1 - slack)`.
pub fn gamma_margin(cmp: &Comparison, delta: &dyn Majorant, beta: &RVec, c: &RVec) -> Result<GammaMargin> {
    if c.len() != cmp.n() || c.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidArgument("c must be strictly positive".into()));
    }
    let t0_beta = cmp.t0(delta, beta)?;
    if !linalg::vec_lt(&t0_beta, beta) {
        return Err(Error::Degenerate("T₀(β) ≺ β does not hold".into()));
    }
    let p_c = (-&cmp.lambda * c).map(|v| v.max(0.0));
    let q = &cmp.neg_inv * &p_c;
    let gap = beta - &t0_beta;
    let eps_bar = (0..beta.len())
        .filter(|j| q[*j] > 0.0)
        .map(|j| gap[j] / q[j])
        .fold(f64::INFINITY, f64::min);
    if !eps_bar.is_finite() {
        return Err(Error::Degenerate("p(c) = 0".into()));
    }
    let gamma = c * (eps_bar * (1.0 - EPS_SLACK));
    let admissible_init = &t0_beta + &gamma;
    let lhs = &cmp.neg_inv * (delta.eval(beta)? + (-&cmp.lambda * &gamma).map(|v| v.max(0.0)));
    Ok(GammaMargin {
        p_c,
        eps_bar,
        slack: EPS_SLACK,
        gamma,
        admissible_init,
        verified: linalg::vec_lt(&lhs, beta),
    })
}

/// Dominant eigenvector of a nonnegative matrix by power iteration, scaled to
/// max 1.
pub fn perron_vector(m: &RMat) -> RVec {
    let n = m.nrows();
    let mut x = ones(n);
    for _ in 0..500 {
        let y = m * &x + &x * 1e-12;
        let s = y.amax();
        if !(s > 0.0) {
            return ones(n);
        }
        x = y / s;
    }
    x
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub eps: f64,
    #[serde(with = "json::opt_vector")]
    pub beta_eps: Option<RVec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceVerdict {
    pub passed: bool,
    pub constructive: bool,
    pub probes: Vec<ProbeResult>,
}

/// Dominant direction of the secant map `h ↦ T₀(b + sh) - T₀(b)` near `b`,
/// i.e. the Perron vector of the local linearisation of `T₀`.
fn secant_perron(cmp: &Comparison, delta: &dyn Majorant, b: &RVec) -> Result<Option<RVec>> {
    let n = cmp.n();
    let base = cmp.t0(delta, b)?;
    let s = 1e-6 * (1.0 + b.amax());
    let mut h = ones(n);
    for _ in 0..200 {
        let next = (cmp.t0(delta, &(b + &h * s))? - &base) / s + &h * 1e-9;
        let m = next.amax();
        if !(m > 0.0) || !m.is_finite() {
            return Ok(None);
        }
        h = next.map(|v| v.max(0.0)) / m;
    }
    Ok(Some(h))
}

/// For `ε_j = 2⁻ʲ`, look for `β_ε ∈ [b, b + ε𝟙]` with `T₀(β_ε) ≺ β_ε`,
/// trying offsets along `𝟙`, the Perron vector of `-Λ⁻¹`, `-Λ⁻¹𝟙` and the
/// Perron vector of the linearised `T₀` at `b`. Passing is evidence, not
/// proof, since only finitely many `ε` are probed.
pub fn invariance_check(
    cmp: &Comparison,
    delta: &dyn Majorant,
    b: &RVec,
    probes: usize,
) -> Result<InvarianceVerdict> {
    let n = cmp.n();
    let push = &cmp.neg_inv * ones(n);
    let mut directions = vec![ones(n), perron_vector(&cmp.neg_inv), &push / push.amax()];
    if let Some(h) = secant_perron(cmp, delta, b)? {
        directions.push(h);
    }
    let mut results = Vec::with_capacity(probes);
    for j in 1..=probes {
        let eps = 0.5f64.powi(j as i32);
        let mut found = None;
        'search: for dir in &directions {
            for t in [0.5, 1.0, 0.25, 0.75] {
                let cand = b + dir * (eps * t);
                if linalg::vec_lt(&cmp.t0(delta, &cand)?, &cand) {
                    found = Some(cand);
                    break 'search;
                }
            }
        }
        results.push(ProbeResult { eps, beta_eps: found });
    }
    Ok(InvarianceVerdict {
        passed: results.iter().all(|r| r.beta_eps.is_some()),
        constructive: false,
        probes: results,
    })
}

/// Affine case: `β_ε = b̃ + α_ε x` with `x = (I - R)⁻¹𝟙` satisfies
/// `ℓ(β_ε) = β_ε - α_ε𝟙 ≺ β_ε`.
pub fn invariance_affine(
    cmp: &Comparison,
    affine: &AffineMajorant,
    b_tilde: &RVec,
    probes: usize,
) -> Result<InvarianceVerdict> {
    let n = cmp.n();
    let r = &cmp.neg_inv * &affine.f_bar;
    let x = linalg::inverse_r(&(RMat::identity(n, n) - r))? * ones(n);
    let mut results = Vec::with_capacity(probes);
    for j in 1..=probes {
        let eps = 0.5f64.powi(j as i32);
        let cand = b_tilde + &x * (0.5 * eps / x.amax());
        let ok = linalg::vec_lt(&cmp.t0(affine, &cand)?, &cand);
        results.push(ProbeResult {
            eps,
            beta_eps: ok.then_some(cand),
        });
    }
    Ok(InvarianceVerdict {
        passed: results.iter().all(|r| r.beta_eps.is_some()),
        constructive: true,
        probes: results,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemiglobalReport {
    #[serde(with = "json::vector")]
    pub xi: RVec,
    #[serde(with = "json::vector")]
    pub v: RVec,
    #[serde(with = "json::vector")]
    pub x: RVec,
    pub alpha: f64,
    #[serde(with = "json::vector")]
    pub beta: RVec,
    #[serde(with = "json::vector")]
    pub gamma: RVec,
    /// `ℓ(β) + v ≺ β`.
    pub verified: bool,
    #[serde(with = "json::vector")]
    pub b: RVec,
}

pub const SEMIGLOBAL_HEADROOM: f64 = 1.05;

/// Semi-global bound from an initial-history box `ξ` under an affine cap
/// with `ρ(R) < 1`; `b` iterates `T₀` of `delta` from `β`.
pub fn semiglobal_bound(
    cmp: &Comparison,
    affine: &AffineMajorant,
    delta: &dyn Majorant,
    xi: &RVec,
    opts: &IterOptions,
) -> Result<SemiglobalReport> {
    let n = cmp.n();
    if xi.len() != n || xi.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::InvalidArgument("ξ must be a nonnegative n-vector".into()));
    }
    let r = &cmp.neg_inv * &affine.f_bar;
    let rho = linalg::spectral_radius(&r)?;
    if !(rho < 1.0) {
        return Err(Error::SpectralRadius(rho));
    }
    let v = &cmp.neg_inv * (-&cmp.lambda * xi).map(|t| t.max(0.0));
    let x = linalg::inverse_r(&(RMat::identity(n, n) - &r))? * ones(n);
    let z = &cmp.neg_inv * &affine.w_bar + &v;
    let alpha = (SEMIGLOBAL_HEADROOM * z.max()).max(f64::MIN_POSITIVE.sqrt());
    let beta = &x * alpha;
    let lhs = &r * &beta + &cmp.neg_inv * &affine.w_bar + &v;
    let verified = linalg::vec_lt(&lhs, &beta);
    let b = iterate_t0(cmp, delta, &beta, opts)?.b;
    Ok(SemiglobalReport {
        xi: xi.clone(),
        v,
        x,
        alpha,
        beta,
        gamma: xi.clone(),
        verified,
        b,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearBoundReport {
    #[serde(with = "json::vector")]
    pub alpha: RVec,
    #[serde(with = "json::vector")]
    pub beta: RVec,
    #[serde(rename = "T0_beta", with = "json::vector")]
    pub t0_beta: RVec,
    #[serde(with = "json::vector")]
    pub b: RVec,
    #[serde(with = "json::vector")]
    pub abs_v_b: RVec,
    #[serde(with = "json::vector")]
    pub abs_v_beta: RVec,
    pub margin: GammaMargin,
    pub invariance: InvarianceVerdict,
    pub beta_iterations: usize,
    pub b_iterations: usize,
    pub fixed_point_residual: f64,
}

/// `β` from `T_α`, `b = lim T₀ᵏ(β)`, the `γ` margin for `c`, and the
/// invariance probe at `b`.
pub fn nonlinear_pipeline(
    cmp: &Comparison,
    delta: &dyn Majorant,
    abs_v: &RMat,
    alpha: &RVec,
    c: &RVec,
    probes: usize,
    opts: &IterOptions,
) -> Result<NonlinearBoundReport> {
    let beta = find_beta(cmp, delta, alpha, opts)?;
    let lim = iterate_t0(cmp, delta, &beta.beta, opts)?;
    let margin = gamma_margin(cmp, delta, &beta.beta, c)?;
    let invariance = invariance_check(cmp, delta, &lim.b, probes)?;
    Ok(NonlinearBoundReport {
        alpha: alpha.clone(),
        abs_v_b: abs_v * &lim.b,
        abs_v_beta: abs_v * &beta.beta,
        beta: beta.beta,
        t0_beta: beta.t0_beta,
        b: lim.b,
        margin,
        invariance,
        beta_iterations: beta.iterations,
        b_iterations: lim.iterations,
        fixed_point_residual: lim.residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metzler::Tolerances;
    use nalgebra::dvector;

    struct Zero(usize);
    impl Majorant for Zero {
        fn eval(&self, _: &RVec) -> Result<RVec> {
            Ok(RVec::zeros(self.0))
        }
    }

    fn cmp(l: RMat) -> Comparison {
        Comparison::new(&l, &Tolerances::default()).unwrap()
    }

    #[test]
    fn zero_delta_beta_is_alpha() {
        let c = cmp(RMat::from_row_slice(2, 2, &[-1.0, 0.2, 0.1, -2.0]));
        let alpha = dvector![1.0, 2.0];
        let r = find_beta(&c, &Zero(2), &alpha, &IterOptions::default()).unwrap();
        assert_eq!(r.beta, alpha);
        assert!(r.iterations <= 2);
        let b = iterate_t0(&c, &Zero(2), &r.beta, &IterOptions::default()).unwrap();
        assert_eq!(b.b, RVec::zeros(2));
        assert!(b.iterations <= 2);
    }

    #[test]
    fn divergent_affine_flagged() {
        // R = -Λ⁻¹F̄ has ρ(R) = 2.
        let c = cmp(-RMat::identity(2, 2));
        let aff = AffineMajorant {
            f_bar: RMat::from_element(2, 2, 1.0),
            w_bar: dvector![1.0, 1.0],
        };
        assert!(matches!(
            find_beta(&c, &aff, &dvector![1.0, 1.0], &IterOptions::default()),
            Err(Error::Divergence { .. })
        ));
    }

    #[test]
    fn affine_fixed_point_is_neumann_sum() {
        let l = RMat::from_row_slice(2, 2, &[-2.0, 0.5, 0.3, -1.5]);
        let c = cmp(l.clone());
        let aff = AffineMajorant {
            f_bar: RMat::from_row_slice(2, 2, &[0.2, 0.1, 0.3, 0.4]),
            w_bar: dvector![1.0, 0.5],
        };
        let r = &c.neg_inv * &aff.f_bar;
        let want = linalg::inverse_r(&(RMat::identity(2, 2) - &r)).unwrap() * (&c.neg_inv * &aff.w_bar);
        let beta = find_beta(&c, &aff, &dvector![0.5, 0.5], &IterOptions::default()).unwrap();
        let b = iterate_t0(&c, &aff, &beta.beta, &IterOptions::default()).unwrap();
        assert!((b.b - want).amax() < 1e-8);
    }

    #[test]
    fn non_monotone_start_reported() {
        let c = cmp(-RMat::identity(1, 1));
        let aff = AffineMajorant {
            f_bar: RMat::zeros(1, 1),
            w_bar: dvector![2.0],
        };
        assert!(matches!(
            iterate_t0(&c, &aff, &dvector![1.0], &IterOptions::default()),
            Err(Error::NotMonotone { step: 1, .. })
        ));
    }

    #[test]
    fn zero_gamma_always_admissible() {
        let c = cmp(RMat::from_row_slice(2, 2, &[-1.0, 0.2, 0.1, -2.0]));
        let aff = AffineMajorant {
            f_bar: RMat::from_element(2, 2, 0.1),
            w_bar: dvector![0.3, 0.1],
        };
        let beta = find_beta(&c, &aff, &dvector![1.0, 1.0], &IterOptions::default()).unwrap();
        let lhs = &c.neg_inv * aff.eval(&beta.beta).unwrap();
        assert!(linalg::vec_lt(&lhs, &beta.beta));
        let m = gamma_margin(&c, &aff, &beta.beta, &dvector![1.0, 1.0]).unwrap();
        assert!(m.eps_bar > 0.0);
        assert!(m.verified);
        assert!(gamma_margin(&c, &aff, &beta.beta, &dvector![1.0, 0.0]).is_err());
    }

    #[test]
    fn zero_delta_invariance() {
        let c = cmp(-RMat::identity(2, 2));
        let v = invariance_check(&c, &Zero(2), &RVec::zeros(2), 6).unwrap();
        assert!(v.passed);
        assert_eq!(v.probes[0].beta_eps, Some(dvector![0.25, 0.25]));
    }

    #[test]
    fn semiglobal_toy() {
        let c = cmp(RMat::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]));
        let aff = AffineMajorant {
            f_bar: RMat::from_element(2, 2, 0.1),
            w_bar: dvector![1.0, 1.0],
        };
        let rep = semiglobal_bound(&c, &aff, &aff, &dvector![5.0, 5.0], &IterOptions::default())
            .unwrap();
        assert!(rep.verified);
        assert!(linalg::vec_lt(&rep.xi, &rep.beta));
        // Direct substitution: ℓ(β) + v ≺ β.
        let lhs = &c.neg_inv * (&aff.f_bar * &rep.beta + &aff.w_bar) + &rep.v;
        assert!(linalg::vec_lt(&lhs, &rep.beta));
    }
}
