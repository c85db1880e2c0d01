//! Switching systems `ẋ = A_σ x + H_σ w_σ` with `|w_i| ⪯ δ_i(θ)`, where
//! `θ(t)` is the componentwise max of `|x|` over the last `τ̄` time units.

pub mod envelope;
pub mod expr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use envelope::{cni_envelope_grid, uniform_axis, GridTable};
pub use expr::{parse_bound_expr, Expr};

use crate::error::{Error, Result};
use crate::linalg::{json, RMat, RVec};

/// Declared affine overbound `δ(θ) ⪯ F̄θ + w̄`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineCap {
    #[serde(rename = "F", with = "json::real_matrix")]
    pub f: RMat,
    #[serde(with = "json::vector")]
    pub w: RVec,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PerturbationBound {
    Constant {
        w: RVec,
    },
    Affine {
        f: RMat,
        w: RVec,
    },
    /// Componentwise expressions, optionally replaced by their grid envelope.
    Expression {
        components: Vec<Expr>,
        cap: Option<AffineCap>,
        envelope: Option<GridTable>,
    },
}

impl PerturbationBound {
    pub fn outputs(&self) -> usize {
        match self {
            PerturbationBound::Constant { w } => w.len(),
            PerturbationBound::Affine { w, .. } => w.len(),
            PerturbationBound::Expression { components, .. } => components.len(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            PerturbationBound::Constant { w } => w.iter().all(|x| *x == 0.0),
            PerturbationBound::Affine { f, w } => {
                f.iter().all(|x| *x == 0.0) && w.iter().all(|x| *x == 0.0)
            }
            PerturbationBound::Expression { components, .. } => components
                .iter()
                .all(|e| matches!(e, Expr::Const(c) if *c == 0.0)),
        }
    }

    /// Order preservation is proven for constant and affine bounds only.
    pub fn cni_proven(&self) -> bool {
        !matches!(self, PerturbationBound::Expression { .. })
    }

    fn validate(&self, n: usize) -> Result<()> {
        let nonneg = |v: &RVec, what: &str| {
            if v.iter().all(|x| *x >= 0.0 && x.is_finite()) {
                Ok(())
            } else {
                Err(Error::Config(format!("{what} must be finite and nonnegative")))
            }
        };
        match self {
            PerturbationBound::Constant { w } => nonneg(w, "constant bound w"),
            PerturbationBound::Affine { f, w } => {
                check_cap(f, w, n)?;
                nonneg(w, "affine offset w̄")
            }
            PerturbationBound::Expression {
                components,
                cap,
                envelope,
            } => {
                if components.is_empty() {
                    return Err(Error::Config("expression bound has no components".into()));
                }
                if let Some(cap) = cap {
                    if cap.w.len() != components.len() {
                        return Err(Error::Config("cap offset length mismatch".into()));
                    }
                    check_cap(&cap.f, &cap.w, n)?;
                }
                if let Some(g) = envelope {
                    if g.dim() != n || g.outputs() != components.len() {
                        return Err(Error::Config("envelope grid shape mismatch".into()));
                    }
                }
                Ok(())
            }
        }
    }
}

fn check_cap(f: &RMat, w: &RVec, n: usize) -> Result<()> {
    if f.ncols() != n || f.nrows() != w.len() {
        return Err(Error::Config(format!(
            "affine cap F̄ is {}x{}, expected {}x{n}",
            f.nrows(),
            f.ncols(),
            w.len()
        )));
    }
    if f.iter().chain(w.iter()).any(|x| !(*x >= 0.0) || !x.is_finite()) {
        return Err(Error::Config("affine cap must be finite and nonnegative".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub a: RMat,
    pub h: RMat,
    pub bound: PerturbationBound,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingSystem {
    pub n: usize,
    pub tau_bar: f64,
    pub modes: Vec<Mode>,
}

impl SwitchingSystem {
    pub fn new(modes: Vec<Mode>, tau_bar: f64) -> Result<Self> {
        let first = modes
            .first()
            .ok_or_else(|| Error::Config("a system needs at least one mode".into()))?;
        let n = first.a.nrows();
        if !(tau_bar >= 0.0) || !tau_bar.is_finite() {
            return Err(Error::Config(format!("τ̄ must be ≥ 0, got {tau_bar}")));
        }
        for (i, m) in modes.iter().enumerate() {
            if m.a.nrows() != n || m.a.ncols() != n {
                return Err(Error::Dimension(format!(
                    "mode {} A is {}x{}, expected {n}x{n}",
                    i + 1,
                    m.a.nrows(),
                    m.a.ncols()
                )));
            }
            if m.h.nrows() != n || m.h.ncols() != m.bound.outputs() {
                return Err(Error::Dimension(format!(
                    "mode {} H is {}x{}, expected {n}x{}",
                    i + 1,
                    m.h.nrows(),
                    m.h.ncols(),
                    m.bound.outputs()
                )));
            }
            if m.a.iter().chain(m.h.iter()).any(|x| !x.is_finite()) {
                return Err(Error::Config(format!("mode {} has non-finite data", i + 1)));
            }
            m.bound.validate(n)?;
        }
        Ok(SwitchingSystem { n, tau_bar, modes })
    }

    pub fn a_matrices(&self) -> Vec<RMat> {
        self.modes.iter().map(|m| m.a.clone()).collect()
    }

    /// Same system with every perturbation bound replaced by `bound(i)`.
    pub fn with_bounds(&self, bound: impl Fn(usize) -> PerturbationBound) -> Result<Self> {
        let modes = self
            .modes
            .iter()
            .enumerate()
            .map(|(i, m)| Mode {
                a: m.a.clone(),
                h: m.h.clone(),
                bound: bound(i),
            })
            .collect();
        SwitchingSystem::new(modes, self.tau_bar)
    }

    pub fn from_config(cfg: &SystemConfig) -> Result<Self> {
        let n = cfg.n;
        let modes = cfg
            .modes
            .iter()
            .map(|m| {
                Ok(Mode {
                    a: json::rmat_from_value(&m.a)?,
                    h: json::rmat_from_value(&m.h)?,
                    bound: m.bound.build(n)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let sys = SwitchingSystem::new(modes, cfg.tau_bar)?;
        if sys.n != n {
            return Err(Error::Config(format!(
                "declared n = {n} but the modes are {}x{}",
                sys.n, sys.n
            )));
        }
        Ok(sys)
    }
}

/// `δ_i(θ)` for `θ ⪰ 0`.
pub fn eval_bound(bound: &PerturbationBound, theta: &RVec) -> Result<RVec> {
    if let Some((k, v)) = theta.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "θ component {} is {v}, must be ≥ 0",
            k + 1
        )));
    }
    match bound {
        PerturbationBound::Constant { w } => Ok(w.clone()),
        PerturbationBound::Affine { f, w } => {
            if f.ncols() != theta.len() {
                return Err(Error::Dimension(format!(
                    "F̄ has {} columns, θ has {}",
                    f.ncols(),
                    theta.len()
                )));
            }
            Ok(f * theta + w)
        }
        PerturbationBound::Expression {
            components,
            envelope,
            ..
        } => {
            let out = match envelope {
                Some(g) => RVec::from_vec(g.eval(theta.as_slice())?),
                None => RVec::from_iterator(
                    components.len(),
                    components.iter().map(|e| e.eval(theta.as_slice())),
                ),
            };
            if let Some(bad) = out.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
                return Err(Error::Evaluation(format!(
                    "δ(θ) has component {bad} at θ = {:?}",
                    theta.as_slice()
                )));
            }
            Ok(out)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum CniVerdict {
    Pass {
        samples: usize,
        /// False when the verdict rests on sampling alone.
        proven: bool,
    },
    Counterexample {
        x1: Vec<f64>,
        x2: Vec<f64>,
        delta1: Vec<f64>,
        delta2: Vec<f64>,
    },
}

impl CniVerdict {
    pub fn passed(&self) -> bool {
        matches!(self, CniVerdict::Pass { .. })
    }
}

/// Sample pairs `x1 ⪯ x2` in `[0, hi]` and look for `δ(x1) ⋠ δ(x2)`.
pub fn cni_check(bound: &PerturbationBound, hi: &RVec, samples: usize, seed: u64) -> Result<CniVerdict> {
    if samples == 0 {
        return Err(Error::InvalidArgument("cni_check needs ≥ 1 sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = hi.len();
    for s in 0..samples {
        let x1 = RVec::from_fn(n, |j, _| rng.random::<f64>() * hi[j]);
        let x2 = if s % 2 == 0 {
            RVec::from_fn(n, |j, _| x1[j] + rng.random::<f64>() * (hi[j] - x1[j]))
        } else {
            // Single-coordinate moves catch non-monotonicity in one variable.
            let mut x2 = x1.clone();
            if n > 0 {
                let j = rng.random_range(0..n);
                x2[j] += rng.random::<f64>() * (hi[j] - x1[j]);
            }
            x2
        };
        let d1 = eval_bound(bound, &x1)?;
        let d2 = eval_bound(bound, &x2)?;
        if d1.iter().zip(d2.iter()).any(|(a, b)| *a > *b + 1e-10) {
            return Ok(CniVerdict::Counterexample {
                x1: x1.as_slice().to_vec(),
                x2: x2.as_slice().to_vec(),
                delta1: d1.as_slice().to_vec(),
                delta2: d2.as_slice().to_vec(),
            });
        }
    }
    Ok(CniVerdict::Pass {
        samples,
        proven: bound.cni_proven(),
    })
}

/// Affine overbound of `bound`: as-is for affine, `F̄ = 0` for constant, the
/// declared cap (validated on `samples` points of `[0, hi]`) for expressions.
pub fn affine_overbound(
    bound: &PerturbationBound,
    hi: &RVec,
    samples: usize,
    seed: u64,
) -> Result<Option<AffineCap>> {
    match bound {
        PerturbationBound::Constant { w } => Ok(Some(AffineCap {
            f: RMat::zeros(w.len(), hi.len()),
            w: w.clone(),
        })),
        PerturbationBound::Affine { f, w } => Ok(Some(AffineCap {
            f: f.clone(),
            w: w.clone(),
        })),
        PerturbationBound::Expression { cap: None, .. } => Ok(None),
        PerturbationBound::Expression { cap: Some(cap), .. } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = hi.len();
            let corners = if n <= 16 { 1usize << n } else { 0 };
            for s in 0..samples + corners {
                let theta = if s < corners {
                    RVec::from_fn(n, |j, _| if s >> j & 1 == 1 { hi[j] } else { 0.0 })
                } else {
                    RVec::from_fn(n, |j, _| rng.random::<f64>() * hi[j])
                };
                let value = eval_bound(bound, &theta)?;
                let capv = &cap.f * &theta + &cap.w;
                if value.iter().zip(capv.iter()).any(|(v, c)| *v > *c + 1e-10) {
                    return Err(Error::CapViolated {
                        theta: theta.as_slice().to_vec(),
                        value: value.as_slice().to_vec(),
                        cap: capv.as_slice().to_vec(),
                    });
                }
            }
            Ok(Some(cap.clone()))
        }
    }
}

/// JSON system description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub n: usize,
    #[serde(default)]
    pub tau_bar: f64,
    pub modes: Vec<ModeConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeConfig {
    #[serde(rename = "A")]
    pub a: serde_json::Value,
    #[serde(rename = "H")]
    pub h: serde_json::Value,
    pub bound: BoundConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeConfig {
    /// Per-variable breakpoints; a single breakpoint marks an unused variable.
    pub axes: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BoundConfig {
    Constant {
        w: Vec<f64>,
    },
    Affine {
        #[serde(rename = "F")]
        f: Vec<Vec<f64>>,
        w: Vec<f64>,
    },
    Expr {
        components: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cap: Option<AffineCap>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        envelope: Option<EnvelopeConfig>,
    },
}

fn rows_to_rmat(rows: &[Vec<f64>], ncols: usize) -> Result<RMat> {
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Config("ragged matrix rows".into()));
    }
    Ok(RMat::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

impl BoundConfig {
    pub fn build(&self, n: usize) -> Result<PerturbationBound> {
        match self {
            BoundConfig::Constant { w } => Ok(PerturbationBound::Constant {
                w: RVec::from_vec(w.clone()),
            }),
            BoundConfig::Affine { f, w } => Ok(PerturbationBound::Affine {
                f: rows_to_rmat(f, n)?,
                w: RVec::from_vec(w.clone()),
            }),
            BoundConfig::Expr {
                components,
                cap,
                envelope,
            } => {
                let exprs = components
                    .iter()
                    .map(|c| parse_bound_expr(c, n))
                    .collect::<Result<Vec<_>>>()?;
                let envelope = match envelope {
                    Some(cfg) => {
                        if cfg.axes.len() != n {
                            return Err(Error::Config(format!(
                                "envelope needs {n} axes, got {}",
                                cfg.axes.len()
                            )));
                        }
                        Some(cni_envelope_grid(&exprs, cfg.axes.clone())?)
                    }
                    None => None,
                };
                Ok(PerturbationBound::Expression {
                    components: exprs,
                    cap: cap.clone(),
                    envelope,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn expr_bound(texts: &[&str], n: usize, cap: Option<AffineCap>) -> PerturbationBound {
        PerturbationBound::Expression {
            components: texts.iter().map(|t| parse_bound_expr(t, n).unwrap()).collect(),
            cap,
            envelope: None,
        }
    }

    #[test]
    fn eval_second_component_affine_expr() {
        let b = expr_bound(
            &["piecewise(t1 - 1/2, t1*exp(-2*t1) + 1, exp(-1)/2 + 1)", "5*t3 + 1"],
            3,
            None,
        );
        let v = eval_bound(&b, &dvector![0.0, 0.0, 1.0]).unwrap();
        assert_eq!(v[1], 6.0);
        let v = eval_bound(&b, &dvector![1.0, 0.0, 0.0]).unwrap();
        assert!((v[0] - 1.183_939_720_585_721).abs() < 1e-12);
    }

    #[test]
    fn eval_rejects_bad_theta() {
        let b = PerturbationBound::Constant { w: dvector![0.0] };
        assert_eq!(eval_bound(&b, &dvector![3.0, 1.0]).unwrap(), dvector![0.0]);
        assert!(eval_bound(&b, &dvector![-1.0, 0.0]).is_err());
        let a = PerturbationBound::Affine {
            f: RMat::zeros(1, 2),
            w: dvector![1.0],
        };
        assert!(matches!(
            eval_bound(&a, &dvector![1.0, 1.0, 1.0]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn raw_abs_sin_is_not_order_preserving() {
        let b = expr_bound(&["abs(sin(t3))"], 3, None);
        let v = cni_check(&b, &dvector![1.0, 1.0, 3.0], 10_000, 1).unwrap();
        match v {
            CniVerdict::Counterexample { x1, x2, .. } => {
                assert!(x1[2] < x2[2]);
                assert!(x2[2] > std::f64::consts::FRAC_PI_2);
            }
            _ => panic!("expected a counterexample"),
        }
    }

    #[test]
    fn clamped_sin_and_affine_pass() {
        let b = expr_bound(&["clamp(sin(t3), 0, 1, pi/2)"], 3, None);
        let v = cni_check(&b, &dvector![5.0, 5.0, 5.0], 10_000, 2).unwrap();
        assert_eq!(v, CniVerdict::Pass { samples: 10_000, proven: false });
        let a = PerturbationBound::Affine {
            f: RMat::from_row_slice(1, 2, &[0.5, 2.0]),
            w: dvector![1.0],
        };
        assert!(matches!(
            cni_check(&a, &dvector![3.0, 3.0], 1000, 3).unwrap(),
            CniVerdict::Pass { proven: true, .. }
        ));
    }

    #[test]
    fn declared_caps_validate() {
        let cap1 = AffineCap {
            f: RMat::from_row_slice(1, 3, &[0.0, 0.0, 1.0]),
            w: dvector![0.0],
        };
        let b1 = expr_bound(&["clamp(sin(t3), 0, 1, pi/2)"], 3, Some(cap1.clone()));
        let hi = dvector![10.0, 10.0, 10.0];
        assert_eq!(affine_overbound(&b1, &hi, 10_000, 4).unwrap(), Some(cap1));

        let cap2 = AffineCap {
            f: RMat::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 5.0]),
            w: dvector![1.0, 1.0],
        };
        let b2 = expr_bound(
            &["piecewise(t1 - 1/2, t1*exp(-2*t1) + 1, exp(-1)/2 + 1)", "5*t3 + 1"],
            3,
            Some(cap2.clone()),
        );
        assert_eq!(affine_overbound(&b2, &hi, 10_000, 5).unwrap(), Some(cap2));

        let c = PerturbationBound::Constant { w: dvector![1.0, 1.0] };
        let got = affine_overbound(&c, &hi, 10, 6).unwrap().unwrap();
        assert_eq!(got.f, RMat::zeros(2, 3));
        assert_eq!(got.w, dvector![1.0, 1.0]);
    }

    #[test]
    fn violated_cap_reports_witness() {
        let cap = AffineCap {
            f: RMat::from_row_slice(1, 1, &[0.1]),
            w: dvector![0.0],
        };
        let b = expr_bound(&["t1"], 1, Some(cap));
        assert!(matches!(
            affine_overbound(&b, &dvector![1.0], 100, 7),
            Err(Error::CapViolated { .. })
        ));
    }

    #[test]
    fn config_round_trip() {
        let text = r#"{
            "n": 2, "tau_bar": 0.1,
            "modes": [
                {"A": [[-1, 0], [0, -2]], "H": [[1], [0]], "bound": {"type": "constant", "w": [0.5]}},
                {"A": [[-1, 1], [0, -2]], "H": [[0], [1]],
                 "bound": {"type": "expr", "components": ["min(t1, 1)"],
                           "cap": {"F": [[1, 0]], "w": [0]}}}
            ]
        }"#;
        let cfg: SystemConfig = serde_json::from_str(text).unwrap();
        let sys = SwitchingSystem::from_config(&cfg).unwrap();
        assert_eq!(sys.n, 2);
        assert_eq!(sys.modes.len(), 2);
        let again: SystemConfig =
            serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn h_width_must_match_bound() {
        let m = Mode {
            a: -RMat::identity(2, 2),
            h: RMat::zeros(2, 2),
            bound: PerturbationBound::Constant { w: dvector![1.0] },
        };
        assert!(SwitchingSystem::new(vec![m], 0.0).is_err());
    }
}
