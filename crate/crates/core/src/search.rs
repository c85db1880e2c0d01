//! Multi-restart Nelder–Mead search for a transform `V` with `a(Λ) < 0`
//! (or `a(Λ+F̄) < 0`), plus the switching examples used to exercise it.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, to_complex, CMat, RMat};
use crate::nelder_mead::{self, NelderMeadOptions};
use crate::system::{Mode, PerturbationBound, SwitchingSystem};
use crate::transform::{assemble_transform, objective_value, Objective, TransformCandidate, V_COND_LIMIT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    Plain,
    Affine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub restarts: usize,
    pub max_evals: usize,
    pub seed: u64,
    pub entry_bound: f64,
    pub objective: ObjectiveKind,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            restarts: 50,
            max_evals: 4000,
            seed: 0,
            entry_bound: 10.0,
            objective: ObjectiveKind::Plain,
        }
    }
}

/// Objective value below which a restart stops early.
pub const EARLY_EXIT: f64 = -1e-6;
/// Condition number beyond which the log-penalty applies.
pub const PENALTY_COND: f64 = 1e6;
pub const PENALTY_WEIGHT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartLog {
    pub restart: usize,
    pub seed: u64,
    pub start: String,
    pub evals: usize,
    /// Penalised objective at the restart's best point.
    #[serde(with = "crate::linalg::json::lenient_f64")]
    pub best_objective: f64,
    /// Spectral abscissa without the conditioning penalty.
    #[serde(with = "crate::linalg::json::lenient_f64")]
    pub abscissa: f64,
    #[serde(with = "crate::linalg::json::lenient_f64")]
    pub condition_v: f64,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub best: TransformCandidate,
    pub best_restart: usize,
    pub success: bool,
    pub log: Vec<RestartLog>,
}

/// One JSON object per line, in restart order.
pub fn log_jsonl(log: &[RestartLog]) -> Result<String> {
    let mut out = String::new();
    for r in log {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

fn penalised(v: &CMat, system: &SwitchingSystem, objective: &Objective) -> f64 {
    let cond = linalg::condition_number(v);
    if !(cond < V_COND_LIMIT) {
        return f64::INFINITY;
    }
    let Some(a) = objective_value(v, system, objective) else {
        return f64::INFINITY;
    };
    if cond > PENALTY_COND {
        a + PENALTY_WEIGHT * cond.log10()
    } else {
        a
    }
}

/// Eigenvector basis of `a` by shifted inverse iteration, scaled so the
/// largest entry has modulus 1.
pub fn eigenvector_basis(a: &RMat) -> Option<CMat> {
    let n = a.nrows();
    let ev = linalg::eigenvalues(a).ok()?;
    let ac = to_complex(a);
    let mut v = CMat::zeros(n, n);
    for (k, lam) in ev.iter().enumerate() {
        let shift = lam + Complex64::new(1e-9 * (1.0 + lam.norm()), 0.0);
        let m = &ac - CMat::identity(n, n) * shift;
        let lu = m.lu();
        let mut x = nalgebra::DVector::from_fn(n, |i, _| Complex64::new(1.0, 0.1 * (i + k) as f64));
        for _ in 0..4 {
            x = lu.solve(&x)?;
            let s = x.iter().map(|z| z.norm()).fold(0.0, f64::max);
            if !(s > 0.0) || !s.is_finite() {
                return None;
            }
            x /= Complex64::new(s, 0.0);
        }
        v.set_column(k, &x);
    }
    if linalg::condition_number(&v) < V_COND_LIMIT {
        Some(v)
    } else {
        None
    }
}

struct Start {
    label: String,
    v: CMat,
    real_only: bool,
}

fn start_for(restart: usize, system: &SwitchingSystem, rng: &mut ChaCha8Rng, bound: f64) -> Start {
    let n = system.n;
    let modes = system.modes.len();
    let random = |rng: &mut ChaCha8Rng, imag: bool| {
        CMat::from_fn(n, n, |_, _| {
            let re = rng.random_range(-1.0..1.0) * bound.min(1.0);
            let im = if imag { rng.random_range(-1.0..1.0) * bound.min(1.0) } else { 0.0 };
            Complex64::new(re, im)
        })
    };
    if restart == 0 {
        return Start {
            label: "identity".into(),
            v: to_complex(&RMat::identity(n, n)),
            real_only: false,
        };
    }
    if restart <= modes {
        let i = restart - 1;
        if let Some(v) = eigenvector_basis(&system.modes[i].a) {
            return Start {
                label: format!("eigenbasis:{}", i + 1),
                v,
                real_only: false,
            };
        }
        return Start {
            label: format!("eigenbasis:{}-fallback-random", i + 1),
            v: random(rng, true),
            real_only: false,
        };
    }
    if restart == modes + 1 {
        let v = eigenvector_basis(&system.modes[0].a)
            .map(|v| v.map(|z| Complex64::new(z.re, 0.0)))
            .filter(|v| linalg::condition_number(v) < V_COND_LIMIT)
            .unwrap_or_else(|| to_complex(&RMat::identity(n, n)));
        return Start {
            label: "real-only".into(),
            v,
            real_only: true,
        };
    }
    Start {
        label: "random".into(),
        v: random(rng, true),
        real_only: false,
    }
}

fn run_restart(
    restart: usize,
    system: &SwitchingSystem,
    objective: &Objective,
    cfg: &SearchConfig,
) -> (RestartLog, CMat) {
    let seed = cfg.seed.wrapping_add(restart as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = start_for(restart, system, &mut rng, cfg.entry_bound);
    let n = system.n;
    let bound = cfg.entry_bound;
    let real_only = start.real_only;
    let to_v = |x: &[f64]| {
        CMat::from_fn(n, n, |i, j| {
            let k = i * n + j;
            let re = x[k].clamp(-bound, bound);
            let im = if real_only { 0.0 } else { x[n * n + k].clamp(-bound, bound) };
            Complex64::new(re, im)
        })
    };
    let mut x: Vec<f64> = start.v.iter().map(|_| 0.0).collect();
    for i in 0..n {
        for j in 0..n {
            x[i * n + j] = start.v[(i, j)].re;
        }
    }
    if !real_only {
        x.extend((0..n * n).map(|k| start.v[(k / n, k % n)].im));
    }

    let f = |x: &[f64]| penalised(&to_v(x), system, objective);
    let mut best_f = f(&x);
    let mut evals = 1usize;
    // Restart the simplex at the incumbent until the budget is spent or a
    // round brings no improvement.
    while evals < cfg.max_evals && best_f >= EARLY_EXIT {
        let budget = (cfg.max_evals - evals).min(cfg.max_evals / 4 + 1);
        let r = nelder_mead::minimize(
            f,
            &x,
            &NelderMeadOptions {
                max_evals: budget,
                step: 0.2,
                f_tol: 1e-12,
                x_tol: 1e-10,
                target: EARLY_EXIT,
            },
        );
        evals += r.evals;
        let improved = r.f < best_f - 1e-12;
        if r.f < best_f {
            best_f = r.f;
            x = r.x;
        }
        if !improved {
            break;
        }
    }
    let v = to_v(&x);
    let abscissa = objective_value(&v, system, objective).unwrap_or(f64::INFINITY);
    let log = RestartLog {
        restart,
        seed,
        start: start.label,
        evals,
        best_objective: best_f,
        abscissa,
        condition_v: linalg::condition_number(&v),
    };
    (log, v)
}

pub fn search_v(
    system: &SwitchingSystem,
    objective: &Objective,
    cfg: &SearchConfig,
) -> Result<SearchOutcome> {
    if cfg.restarts == 0 {
        return Err(Error::InvalidArgument("restarts must be ≥ 1".into()));
    }
    if !(cfg.entry_bound > 0.0) {
        return Err(Error::InvalidArgument("entry_bound must be > 0".into()));
    }
    let results: Vec<(RestartLog, CMat)> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| run_restart(r, system, objective, cfg))
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (k, (log, _)) in results.iter().enumerate() {
        if log.best_objective.is_finite() && best.is_none_or(|(_, f)| log.best_objective < f) {
            best = Some((k, log.best_objective));
        }
    }
    let log: Vec<RestartLog> = results.iter().map(|(l, _)| l.clone()).collect();
    let Some((k, _)) = best else {
        return Err(Error::NoFeasibleTransform(format!(
            "all {} restarts produced ill-conditioned or singular V",
            cfg.restarts
        )));
    };
    let candidate = assemble_transform(&results[k].1, system, objective)?;
    Ok(SearchOutcome {
        success: candidate.objective < 0.0,
        best: candidate,
        best_restart: k,
        log,
    })
}

/// The two-mode family `A₁ = [[-1,-1],[1,-1]]`, `A₂ = [[-1,-a],[1/a,-1]]`.
pub fn verge_example(a: f64) -> Result<(RMat, RMat)> {
    if a == 0.0 || !a.is_finite() {
        return Err(Error::InvalidArgument(format!("a must be finite and nonzero, got {a}")));
    }
    Ok((
        RMat::from_row_slice(2, 2, &[-1.0, -1.0, 1.0, -1.0]),
        RMat::from_row_slice(2, 2, &[-1.0, -a, 1.0 / a, -1.0]),
    ))
}

/// Unperturbed system over the given mode matrices.
pub fn unperturbed(modes: &[RMat]) -> Result<SwitchingSystem> {
    let n = modes.first().map_or(0, |a| a.nrows());
    SwitchingSystem::new(
        modes
            .iter()
            .map(|a| Mode {
                a: a.clone(),
                h: RMat::zeros(n, 1),
                bound: PerturbationBound::Constant {
                    w: nalgebra::DVector::zeros(1),
                },
            })
            .collect(),
        0.0,
    )
}

/// Three Hurwitz modes for which no useful transform exists.
pub fn counterexample_modes() -> Vec<RMat> {
    vec![
        RMat::from_row_slice(2, 2, &[0.0, 5.0, -30.0, -1.4]),
        RMat::from_row_slice(2, 2, &[0.0, 5.0, -26.0, -1.0]),
        RMat::from_row_slice(2, 2, &[-6.0, 27.0, -150.0, -1.0]),
    ]
}
