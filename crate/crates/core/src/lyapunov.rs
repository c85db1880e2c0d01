//! Ultimate bounds from a quadratic Lyapunov function `L(x) = x'Px`:
//! the `L̇` overbound, the smallest level `k` beyond which it is negative,
//! and componentwise extents of the level set.

use nalgebra::Cholesky;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, json, CMat, RMat, RVec};
use crate::metzler::{cqlf_from_diag, require_positive_definite, verify_cqlf, Tolerances};
use crate::nelder_mead::{self, NelderMeadOptions};
use crate::system::{affine_overbound, eval_bound, AffineCap, SwitchingSystem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CertificateSource {
    Supplied,
    FromDiag {
        #[serde(with = "json::vector")]
        d: RVec,
        #[serde(rename = "V", with = "json::complex_matrix")]
        v: CMat,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticCertificate {
    #[serde(rename = "P", with = "json::real_matrix")]
    pub p: RMat,
    pub source: CertificateSource,
    pub mode_margins: Vec<f64>,
}

impl QuadraticCertificate {
    pub fn supplied(p: &RMat, system: &SwitchingSystem, tol: &Tolerances) -> Result<Self> {
        let sym = (p + p.transpose()) * 0.5;
        if (&sym - p).amax() > 1e-12 * (1.0 + p.amax()) {
            return Err(Error::InvalidArgument("P must be symmetric".into()));
        }
        require_positive_definite(&sym, tol)?;
        let margins = verify_cqlf(&sym, &system.a_matrices(), 0.0)?.margins;
        Ok(QuadraticCertificate {
            p: sym,
            source: CertificateSource::Supplied,
            mode_margins: margins,
        })
    }

    pub fn from_diag(v: &CMat, d: &RVec, system: &SwitchingSystem, tol: &Tolerances) -> Result<Self> {
        let p = cqlf_from_diag(v, d, tol)?;
        let margins = verify_cqlf(&p, &system.a_matrices(), 0.0)?.margins;
        Ok(QuadraticCertificate {
            p,
            source: CertificateSource::FromDiag {
                d: d.clone(),
                v: v.clone(),
            },
            mode_margins: margins,
        })
    }
}

fn row_abs(x: &RVec, ph: &RMat) -> RVec {
    (ph.transpose() * x).map(f64::abs)
}

/// `max_i x'(A_i'P + PA_i)x + 2|x'PH_i|δ_i(|x|)`.
pub fn ldot_bound(p: &RMat, system: &SwitchingSystem, x: &RVec) -> Result<f64> {
    let n = system.n;
    if p.nrows() != n || p.ncols() != n || x.len() != n {
        return Err(Error::Dimension(format!(
            "P is {}x{}, x has {} entries, system n = {n}",
            p.nrows(),
            p.ncols(),
            x.len()
        )));
    }
    let ax = x.map(f64::abs);
    let mut best = f64::NEG_INFINITY;
    for m in &system.modes {
        let quad = 2.0 * x.dot(&(p * (&m.a * x)));
        let lin = 2.0 * row_abs(x, &(p * &m.h)).dot(&eval_bound(&m.bound, &ax)?);
        best = best.max(quad + lin);
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelMethod {
    /// Closed form per direction using the declared affine caps.
    Caps,
    /// Root of `s ↦ L̇(su)` with the bounds themselves, bracketed by the caps.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LevelSearchConfig {
    pub samples: usize,
    pub refine: usize,
    pub refine_evals: usize,
    pub margin: f64,
    pub seed: u64,
    pub method: LevelMethod,
    /// Grid points of the per-direction scan in the exact method.
    pub scan_points: usize,
    /// Half-width of the box on which declared caps are validated.
    pub cap_box: f64,
    pub cap_samples: usize,
}

impl Default for LevelSearchConfig {
    fn default() -> Self {
        LevelSearchConfig {
            samples: 10_000,
            refine: 32,
            refine_evals: 600,
            margin: 0.02,
            seed: 0,
            method: LevelMethod::Exact,
            scan_points: 256,
            cap_box: 100.0,
            cap_samples: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementStep {
    pub start_k: f64,
    pub refined_k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSetReport {
    pub method: LevelMethod,
    pub feasible: bool,
    /// Raw supremum of `k(u)` over sampled and refined directions.
    pub k_sup: Option<f64>,
    /// `(1 + margin)·k_sup`.
    pub k: Option<f64>,
    pub margin: f64,
    pub direction_samples: usize,
    #[serde(with = "json::opt_vector")]
    pub x_bar: Option<RVec>,
    /// Direction on `{u'Pu = 1}` where the quadratic part is not negative.
    pub witness: Option<Vec<f64>>,
    #[serde(with = "json::opt_vector")]
    pub worst_direction: Option<RVec>,
    pub refinement_trace: Vec<RefinementStep>,
}

struct LevelProblem<'a> {
    p: &'a RMat,
    system: &'a SwitchingSystem,
    q: Vec<RMat>,
    ph: Vec<RMat>,
    caps: Vec<AffineCap>,
    chol_t_inv: RMat,
    scan: usize,
}

enum DirK {
    Value(f64),
    Unbounded,
}

impl LevelProblem<'_> {
    fn direction(&self, g: &RVec) -> RVec {
        let norm = g.norm();
        &self.chol_t_inv * (g / if norm > 0.0 { norm } else { 1.0 })
    }

    /// `k(u) = max_i (b_i/-a_i)²` under the caps.
    fn k_caps(&self, u: &RVec) -> DirK {
        let au = u.map(f64::abs);
        let mut k = 0.0f64;
        for ((q, ph), cap) in self.q.iter().zip(&self.ph).zip(&self.caps) {
            let r = row_abs(u, ph);
            let a = u.dot(&(q * u)) + 2.0 * r.dot(&(&cap.f * &au));
            let b = 2.0 * r.dot(&cap.w);
            if a >= 0.0 {
                return DirK::Unbounded;
            }
            k = k.max((b / -a).powi(2));
        }
        DirK::Value(k)
    }

    fn k_exact(&self, u: &RVec) -> Result<DirK> {
        let DirK::Value(kc) = self.k_caps(u) else {
            return Ok(DirK::Unbounded);
        };
        let s_hi = kc.sqrt() * (1.0 + 1e-9);
        if s_hi == 0.0 {
            return Ok(DirK::Value(0.0));
        }
        let f = |s: f64| ldot_bound(self.p, self.system, &(u * s));
        let mut last = None;
        for j in (1..=self.scan).rev() {
            let s = s_hi * j as f64 / self.scan as f64;
            if f(s)? >= 0.0 {
                last = Some(j);
                break;
            }
        }
        let Some(j) = last else {
            return Ok(DirK::Value(0.0));
        };
        if j == self.scan {
            return Ok(DirK::Value(kc));
        }
        let (mut lo, mut hi) = (s_hi * j as f64 / self.scan as f64, s_hi * (j + 1) as f64 / self.scan as f64);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if f(mid)? >= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(DirK::Value(hi * hi))
    }

    fn k_of(&self, method: LevelMethod, g: &RVec) -> Result<DirK> {
        let u = self.direction(g);
        match method {
            LevelMethod::Caps => Ok(self.k_caps(&u)),
            LevelMethod::Exact => self.k_exact(&u),
        }
    }
}

/// Smallest sampled `k` with `L̇ < 0` outside `{x'Px ≤ k}`, inflated by the
/// safety margin. Requires `τ̄ = 0`.
pub fn level_search(p: &RMat, system: &SwitchingSystem, cfg: &LevelSearchConfig) -> Result<LevelSetReport> {
    if system.tau_bar != 0.0 {
        return Err(Error::DelayNotSupported(system.tau_bar));
    }
    let n = system.n;
    if p.nrows() != n || p.ncols() != n {
        return Err(Error::Dimension("P does not match the system".into()));
    }
    if cfg.samples == 0 {
        return Err(Error::InvalidArgument("level search needs ≥ 1 direction".into()));
    }
    let chol = Cholesky::new(p.clone()).ok_or(Error::NotPositiveDefinite(f64::NAN))?;
    let chol_t_inv = linalg::inverse_r(&chol.l().transpose())?;
    let hi = RVec::from_element(n, cfg.cap_box);
    let caps = system
        .modes
        .iter()
        .enumerate()
        .map(|(i, m)| {
            affine_overbound(&m.bound, &hi, cfg.cap_samples, cfg.seed.wrapping_add(i as u64))?
                .ok_or_else(|| Error::Config(format!("mode {} has no affine cap to bracket the level search", i + 1)))
        })
        .collect::<Result<Vec<_>>>()?;
    let problem = LevelProblem {
        p,
        system,
        q: system.modes.iter().map(|m| m.a.transpose() * p + p * &m.a).collect(),
        ph: system.modes.iter().map(|m| p * &m.h).collect(),
        caps,
        chol_t_inv,
        scan: cfg.scan_points.max(2),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dirs: Vec<RVec> = (0..cfg.samples)
        .map(|_| RVec::from_fn(n, |_, _| StandardNormal.sample(&mut rng)))
        .collect();
    let ks: Vec<DirK> = dirs
        .par_iter()
        .map(|g| problem.k_of(cfg.method, g))
        .collect::<Result<Vec<_>>>()?;

    let mut base = LevelSetReport {
        method: cfg.method,
        feasible: false,
        k_sup: None,
        k: None,
        margin: cfg.margin,
        direction_samples: cfg.samples,
        x_bar: None,
        witness: None,
        worst_direction: None,
        refinement_trace: Vec::new(),
    };
    if let Some(i) = ks.iter().position(|k| matches!(k, DirK::Unbounded)) {
        base.witness = Some(problem.direction(&dirs[i]).as_slice().to_vec());
        return Ok(base);
    }
    let values: Vec<f64> = ks
        .iter()
        .map(|k| match k {
            DirK::Value(v) => *v,
            DirK::Unbounded => f64::INFINITY,
        })
        .collect();
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|a, b| values[*b].total_cmp(&values[*a]).then(a.cmp(b)));
    order.truncate(cfg.refine);

    let refined: Vec<(RefinementStep, RVec, bool)> = order
        .par_iter()
        .map(|&i| {
            let mut unbounded = false;
            let r = nelder_mead::minimize(
                |g| {
                    let g = RVec::from_column_slice(g);
                    match problem.k_of(cfg.method, &g) {
                        Ok(DirK::Value(v)) => -v,
                        Ok(DirK::Unbounded) => {
                            unbounded = true;
                            f64::NEG_INFINITY
                        }
                        Err(_) => f64::INFINITY,
                    }
                },
                dirs[i].as_slice(),
                &NelderMeadOptions {
                    max_evals: cfg.refine_evals,
                    step: 0.05,
                    f_tol: 1e-14,
                    x_tol: 1e-10,
                    target: f64::NEG_INFINITY,
                },
            );
            (
                RefinementStep {
                    start_k: values[i],
                    refined_k: (-r.f).max(values[i]),
                },
                RVec::from_vec(r.x),
                unbounded,
            )
        })
        .collect();

    if let Some((_, g, _)) = refined.iter().find(|(_, _, u)| *u) {
        base.witness = Some(problem.direction(g).as_slice().to_vec());
        return Ok(base);
    }
    let mut k_sup = values.iter().cloned().fold(0.0, f64::max);
    let mut worst = order.first().map(|i| dirs[*i].clone());
    for (step, g, _) in &refined {
        if step.refined_k > k_sup {
            k_sup = step.refined_k;
            worst = Some(g.clone());
        }
    }
    let k = k_sup * (1.0 + cfg.margin);
    base.feasible = true;
    base.k_sup = Some(k_sup);
    base.k = Some(k);
    base.x_bar = Some(component_extent(p, k)?);
    base.worst_direction = worst.map(|g| problem.direction(&g));
    base.refinement_trace = refined.into_iter().map(|(s, _, _)| s).collect();
    Ok(base)
}

/// Largest `L̇` bound over `samples` random points of `{x'Px = level}`.
pub fn max_ldot_on_level(p: &RMat, system: &SwitchingSystem, level: f64, samples: usize, seed: u64) -> Result<f64> {
    let n = system.n;
    let chol = Cholesky::new(p.clone()).ok_or(Error::NotPositiveDefinite(f64::NAN))?;
    let lt_inv = linalg::inverse_r(&chol.l().transpose())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dirs: Vec<RVec> = (0..samples)
        .map(|_| RVec::from_fn(n, |_, _| StandardNormal.sample(&mut rng)))
        .collect();
    let vals = dirs
        .par_iter()
        .map(|g| ldot_bound(p, system, &(&lt_inv * (g / g.norm()) * level.sqrt())))
        .collect::<Result<Vec<_>>>()?;
    Ok(vals.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

/// `x̄_j = max_{x'Px = k} x_j = √(k·(P⁻¹)_jj)`.
pub fn component_extent(p: &RMat, k: f64) -> Result<RVec> {
    if !(k >= 0.0) {
        return Err(Error::InvalidArgument(format!("level k must be ≥ 0, got {k}")));
    }
    require_positive_definite(p, &Tolerances::default())?;
    let pinv = linalg::inverse_r(p)?;
    Ok(RVec::from_fn(p.nrows(), |j, _| (k * pinv[(j, j)]).sqrt()))
}

/// Componentwise minimum of ultimate-bound boxes in the same coordinates.
pub fn combine_boxes(boxes: &[RVec]) -> Result<RVec> {
    let first = boxes
        .first()
        .ok_or_else(|| Error::InvalidArgument("no boxes to combine".into()))?;
    if boxes.iter().any(|b| b.len() != first.len()) {
        return Err(Error::Dimension("boxes differ in dimension".into()));
    }
    Ok(boxes.iter().skip(1).fold(first.clone(), |acc, b| linalg::vec_min(&acc, b)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search::unperturbed;
    use nalgebra::dvector;

    #[test]
    fn unforced_mode_gives_quadratic_form() {
        let a = RMat::from_row_slice(2, 2, &[-1.0, 2.0, 0.0, -3.0]);
        let sys = unperturbed(&[a.clone()]).unwrap();
        let p = RMat::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let x = dvector![0.3, -1.2];
        let want = x.dot(&((a.transpose() * &p + &p * &a) * &x));
        assert!((ldot_bound(&p, &sys, &x).unwrap() - want).abs() < 1e-14);
        assert_eq!(ldot_bound(&p, &sys, &RVec::zeros(2)).unwrap(), 0.0);
    }

    #[test]
    fn zero_perturbation_level_is_zero() {
        let sys = unperturbed(&[-RMat::identity(2, 2)]).unwrap();
        let rep = level_search(
            &RMat::identity(2, 2),
            &sys,
            &LevelSearchConfig {
                samples: 200,
                refine: 4,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(rep.feasible);
        assert_eq!(rep.k, Some(0.0));
        assert_eq!(rep.x_bar, Some(RVec::zeros(2)));
    }

    #[test]
    fn delay_rejected() {
        let mut sys = unperturbed(&[-RMat::identity(2, 2)]).unwrap();
        sys.tau_bar = 0.1;
        assert!(matches!(
            level_search(&RMat::identity(2, 2), &sys, &LevelSearchConfig::default()),
            Err(Error::DelayNotSupported(_))
        ));
    }

    #[test]
    fn extent_of_identity() {
        assert_eq!(component_extent(&RMat::identity(3, 3), 4.0).unwrap(), dvector![2.0, 2.0, 2.0]);
    }

    #[test]
    fn combine_is_componentwise_min() {
        let a = dvector![1.96, 1.82, 2.51];
        let b = dvector![4.0448, 0.7926, 4.1443];
        let c = combine_boxes(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(c, dvector![1.96, 0.7926, 2.51]);
        assert_eq!(combine_boxes(&[b, a.clone()]).unwrap(), c);
        assert_eq!(combine_boxes(&[a.clone()]).unwrap(), a);
        assert!(combine_boxes(&[]).is_err());
    }
}
