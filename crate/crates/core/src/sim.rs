//! Fixed-step RK4 simulation of the delayed switching system and empirical
//! containment checks against computed bounds.

use std::collections::VecDeque;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, abs_c, json, to_complex, CMat, RMat, RVec};
use crate::system::{eval_bound, SwitchingSystem};

pub const OVERFLOW_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SignalPolicy {
    /// Cycle through the modes in order, one per `period`.
    Periodic { period: f64 },
    /// Dwell times uniform in `[min, max]`, next mode uniform among the others.
    RandomDwell { min: f64, max: f64, seed: u64 },
    /// Mode `modes[k]` from `times[k]` on; `times[0] = 0`.
    FixedSequence { times: Vec<f64>, modes: Vec<usize> },
}

/// Right-continuous piecewise-constant mode index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchingSignal {
    pub policy: SignalPolicy,
    pub times: Vec<f64>,
    pub modes: Vec<usize>,
}

impl SwitchingSignal {
    pub fn generate(policy: SignalPolicy, n_modes: usize, tf: f64) -> Result<Self> {
        if n_modes == 0 {
            return Err(Error::InvalidArgument("no modes to switch between".into()));
        }
        let (times, modes) = match &policy {
            SignalPolicy::Periodic { period } => {
                if !(*period > 0.0) {
                    return Err(Error::InvalidArgument(format!("period must be > 0, got {period}")));
                }
                let count = (tf / period).ceil().max(1.0) as usize;
                let times = (0..count).map(|k| k as f64 * period).collect();
                (times, (0..count).map(|k| k % n_modes).collect())
            }
            SignalPolicy::RandomDwell { min, max, seed } => {
                if !(*min > 0.0 && max >= min) {
                    return Err(Error::InvalidArgument(format!("need 0 < min ≤ max, got [{min}, {max}]")));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let mut times = vec![0.0];
                let mut modes = vec![rng.random_range(0..n_modes)];
                let mut t = 0.0;
                loop {
                    t += if max > min { rng.random_range(*min..=*max) } else { *min };
                    if t >= tf {
                        break;
                    }
                    let cur = *modes.last().unwrap();
                    let next = if n_modes == 1 {
                        cur
                    } else {
                        (cur + 1 + rng.random_range(0..n_modes - 1)) % n_modes
                    };
                    times.push(t);
                    modes.push(next);
                }
                (times, modes)
            }
            SignalPolicy::FixedSequence { times, modes } => {
                if times.is_empty() || times.len() != modes.len() || times[0] != 0.0 {
                    return Err(Error::InvalidArgument(
                        "fixed sequence needs matching times/modes starting at t = 0".into(),
                    ));
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::InvalidArgument("switch times must increase".into()));
                }
                if let Some(m) = modes.iter().find(|m| **m >= n_modes) {
                    return Err(Error::InvalidArgument(format!("mode index {m} out of range")));
                }
                (times.clone(), modes.clone())
            }
        };
        Ok(SwitchingSignal { policy, times, modes })
    }

    pub fn mode_at(&self, t: f64) -> usize {
        let k = self.times.partition_point(|s| *s <= t);
        self.modes[k.saturating_sub(1)]
    }

    /// Mode per step with switch times rounded to the grid.
    fn step_modes(&self, steps: usize, dt: f64) -> Vec<usize> {
        let mut out = vec![self.modes[0]; steps];
        for (t, m) in self.times.iter().zip(&self.modes).skip(1) {
            let k = (t / dt).round() as usize;
            for slot in out.iter_mut().skip(k) {
                *slot = *m;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PerturbationRule {
    Zero,
    /// Uniform in the admissible box, redrawn every step.
    RandomInBox { seed: u64 },
    /// Box vertex maximizing the growth of `Σ_j |ξ_j|`.
    VertexBang { seed: u64 },
    /// Box vertex maximizing the growth of `Σ_j d_j |ξ_j|`.
    AdversarialToward { direction: Vec<f64> },
}

/// One rule for every mode, or one per mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationPolicy {
    pub rules: Vec<PerturbationRule>,
}

impl PerturbationPolicy {
    pub fn uniform(rule: PerturbationRule) -> Self {
        PerturbationPolicy { rules: vec![rule] }
    }

    fn rule(&self, mode: usize) -> &PerturbationRule {
        if self.rules.len() == 1 {
            &self.rules[0]
        } else {
            &self.rules[mode]
        }
    }
}

#[derive(Clone)]
pub enum History {
    Constant(RVec),
    Function(Arc<dyn Fn(f64) -> RVec + Send + Sync>),
}

impl History {
    fn at(&self, t: f64) -> RVec {
        match self {
            History::Constant(x) => x.clone(),
            History::Function(f) => f(t),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimOptions {
    pub tf: f64,
    pub dt: f64,
    pub seed: u64,
    /// Coordinates `ξ = V⁻¹x` used by the steering rules; identity if absent.
    pub v: Option<CMat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub tau_bar: f64,
    pub seed: u64,
    pub times: Vec<f64>,
    #[serde(with = "json::vectors")]
    pub states: Vec<RVec>,
    pub history_times: Vec<f64>,
    #[serde(with = "json::vectors")]
    pub history_states: Vec<RVec>,
    pub signal: SwitchingSignal,
    /// Active mode on `[t_k, t_{k+1})`.
    pub modes: Vec<usize>,
    /// Realized `w` at the start of each step.
    pub perturbations: Vec<Vec<f64>>,
    pub max_admissibility_excess: f64,
    pub overflow_at: Option<f64>,
}

impl Trajectory {
    /// `t,x1..xn,mode,w1..wq` rows; the last state has no mode or input.
    pub fn to_csv(&self) -> String {
        let n = self.states.first().map_or(0, |x| x.len());
        let q = self.perturbations.iter().map(Vec::len).max().unwrap_or(0);
        let mut out = String::from("t");
        for j in 1..=n {
            out.push_str(&format!(",x{j}"));
        }
        out.push_str(",mode");
        for j in 1..=q {
            out.push_str(&format!(",w{j}"));
        }
        out.push('\n');
        for (k, (t, x)) in self.times.iter().zip(&self.states).enumerate() {
            out.push_str(&t.to_string());
            for v in x.iter() {
                out.push_str(&format!(",{v}"));
            }
            match (self.modes.get(k), self.perturbations.get(k)) {
                (Some(m), Some(w)) => {
                    out.push_str(&format!(",{}", m + 1));
                    for j in 0..q {
                        out.push(',');
                        if let Some(v) = w.get(j) {
                            out.push_str(&v.to_string());
                        }
                    }
                }
                _ => out.push_str(&",".repeat(q + 1)),
            }
            out.push('\n');
        }
        out
    }
}

/// Sliding max of `|x|` over the last `m` grid samples, per component.
struct WindowMax {
    m: usize,
    queues: Vec<VecDeque<(usize, f64)>>,
}

impl WindowMax {
    fn new(n: usize, m: usize) -> Self {
        WindowMax {
            m,
            queues: vec![VecDeque::new(); n],
        }
    }

    fn push(&mut self, idx: usize, x: &RVec) {
        for (q, v) in self.queues.iter_mut().zip(x.iter()) {
            let v = v.abs();
            while q.back().is_some_and(|(_, b)| *b <= v) {
                q.pop_back();
            }
            q.push_back((idx, v));
            while q.front().is_some_and(|(i, _)| i + self.m <= idx) {
                q.pop_front();
            }
        }
    }

    fn value(&self, j: usize) -> f64 {
        self.queues[j].front().map_or(0.0, |(_, v)| *v)
    }
}

struct Steering {
    v_inv: CMat,
    vinv_h: Vec<CMat>,
    rngs: Vec<ChaCha8Rng>,
}

impl Steering {
    /// Sign pattern in `[-1, 1]^q` held for one step.
    fn pattern(&mut self, rule: &PerturbationRule, mode: usize, x: &RVec) -> Result<Vec<f64>> {
        let b = &self.vinv_h[mode];
        let q = b.ncols();
        let rng = &mut self.rngs[mode];
        let weights = match rule {
            PerturbationRule::Zero => return Ok(vec![0.0; q]),
            PerturbationRule::RandomInBox { .. } => {
                return Ok((0..q).map(|_| rng.random_range(-1.0..=1.0)).collect());
            }
            PerturbationRule::VertexBang { .. } => vec![1.0; b.nrows()],
            PerturbationRule::AdversarialToward { direction } => {
                if direction.len() != b.nrows() {
                    return Err(Error::Dimension(format!(
                        "steering direction has {} entries, expected {}",
                        direction.len(),
                        b.nrows()
                    )));
                }
                direction.clone()
            }
        };
        let xi = &self.v_inv * to_complex(&RMat::from_column_slice(x.len(), 1, x.as_slice()));
        let mut coef = vec![0.0; q];
        for (j, wj) in weights.iter().enumerate() {
            let z = xi[(j, 0)];
            let r = z.norm();
            if r == 0.0 || *wj == 0.0 {
                continue;
            }
            let unit: Complex64 = z.conj() / r;
            for (k, c) in coef.iter_mut().enumerate() {
                *c += wj * (unit * b[(j, k)]).re;
            }
        }
        Ok(coef
            .iter()
            .map(|c| {
                if *c > 0.0 {
                    1.0
                } else if *c < 0.0 {
                    -1.0
                } else if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect())
    }
}

fn rule_seed(rule: &PerturbationRule) -> u64 {
    match rule {
        PerturbationRule::RandomInBox { seed } | PerturbationRule::VertexBang { seed } => *seed,
        _ => 0,
    }
}

/// Integrate `ẋ = A_σx + H_σw` on `[0, tf]` with step `dt`. `θ` at each
/// stage is the max of the buffered grid samples inside `(t - τ̄, t]`, the
/// interpolated state at `t - τ̄`, and the stage state itself. `τ̄` must be
/// a multiple of `dt`.
pub fn simulate(
    system: &SwitchingSystem,
    signal: &SwitchingSignal,
    policy: &PerturbationPolicy,
    history: &History,
    opts: &SimOptions,
) -> Result<Trajectory> {
    let (tf, dt) = (opts.tf, opts.dt);
    if !(dt > 0.0 && tf > 0.0 && dt <= tf) {
        return Err(Error::InvalidArgument(format!("need 0 < dt ≤ tf, got dt = {dt}, tf = {tf}")));
    }
    if policy.rules.len() != 1 && policy.rules.len() != system.modes.len() {
        return Err(Error::InvalidArgument("need one perturbation rule or one per mode".into()));
    }
    let n = system.n;
    let m_ratio = system.tau_bar / dt;
    let m = m_ratio.round() as usize;
    if (m as f64 - m_ratio).abs() > 1e-9 * m_ratio.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "τ̄ = {} is not a multiple of dt = {dt}",
            system.tau_bar
        )));
    }
    let steps = (tf / dt).round() as usize;
    let v = opts.v.clone().unwrap_or_else(|| to_complex(&RMat::identity(n, n)));
    let v_inv = linalg::inverse_c(&v)?;
    let mut steering = Steering {
        vinv_h: system.modes.iter().map(|md| &v_inv * to_complex(&md.h)).collect(),
        v_inv,
        rngs: (0..system.modes.len())
            .map(|i| {
                let salt = rule_seed(policy.rule(i)).wrapping_mul(0x9E37_79B9_7F4A_7C15);
                ChaCha8Rng::seed_from_u64(opts.seed ^ salt ^ (i as u64).rotate_left(32))
            })
            .collect(),
    };

    let history_times: Vec<f64> = (0..=m).map(|j| (j as f64 - m as f64) * dt).collect();
    let history_states: Vec<RVec> = history_times.iter().map(|t| history.at(*t)).collect();
    if history_states.iter().any(|x| x.len() != n || x.iter().any(|v| !v.is_finite())) {
        return Err(Error::InvalidArgument("history must be finite n-vectors".into()));
    }
    // all[i] is the state at time (i - m)·dt.
    let mut all: Vec<RVec> = history_states.clone();
    let mut window = WindowMax::new(n, m.max(1));
    for (i, x) in all.iter().enumerate() {
        window.push(i, x);
    }
    let modes = signal.step_modes(steps, dt);
    let mut perturbations = Vec::with_capacity(steps);
    let mut max_excess = 0.0f64;
    let mut overflow_at = None;

    for (k, &mode) in modes.iter().enumerate() {
        let md = &system.modes[mode];
        let x = all[k + m].clone();
        let pattern = steering.pattern(policy.rule(mode), mode, &x)?;
        let theta = |c: f64, xs: &RVec| -> RVec {
            if m == 0 {
                return xs.map(f64::abs);
            }
            let lagged = &all[k] * (1.0 - c) + &all[k + 1] * c;
            RVec::from_fn(n, |j, _| window.value(j).max(lagged[j].abs()).max(xs[j].abs()))
        };
        let rhs = |c: f64, xs: &RVec| -> Result<(RVec, RVec)> {
            let d = eval_bound(&md.bound, &theta(c, xs))?;
            let w = RVec::from_fn(d.len(), |j, _| d[j] * pattern[j]);
            Ok((&md.a * xs + &md.h * &w, w))
        };
        let (k1, w0) = rhs(0.0, &x)?;
        let (k2, _) = rhs(0.5, &(&x + &k1 * (dt / 2.0)))?;
        let (k3, _) = rhs(0.5, &(&x + &k2 * (dt / 2.0)))?;
        let (k4, _) = rhs(1.0, &(&x + &k3 * dt))?;
        let d0 = eval_bound(&md.bound, &theta(0.0, &x))?;
        for (w, d) in w0.iter().zip(d0.iter()) {
            max_excess = max_excess.max(w.abs() - d);
        }
        perturbations.push(w0.as_slice().to_vec());
        let next = &x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        let blown = next.iter().any(|v| !(v.abs() <= OVERFLOW_LIMIT));
        window.push(k + m + 1, &next);
        all.push(next);
        if blown {
            overflow_at = Some((k + 1) as f64 * dt);
            break;
        }
    }
    let states = all.split_off(m);
    let times = (0..states.len()).map(|k| k as f64 * dt).collect();
    let executed = perturbations.len();
    Ok(Trajectory {
        dt,
        tau_bar: system.tau_bar,
        seed: opts.seed,
        times,
        states,
        history_times,
        history_states,
        signal: signal.clone(),
        modes: modes[..executed].to_vec(),
        perturbations,
        max_admissibility_excess: max_excess,
        overflow_at,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ContainmentBounds {
    #[serde(with = "json::opt_vector")]
    pub beta: Option<RVec>,
    #[serde(with = "json::opt_vector")]
    pub b: Option<RVec>,
    #[serde(with = "json::opt_vector")]
    pub admissible_init: Option<RVec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainmentSettings {
    pub settle_fraction: f64,
    pub rel_slack: f64,
    pub abs_slack: f64,
}

impl Default for ContainmentSettings {
    fn default() -> Self {
        ContainmentSettings {
            settle_fraction: 0.3,
            rel_slack: 0.01,
            abs_slack: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub pass: bool,
    pub first_violation: Option<f64>,
    /// Largest `|ξ_j| / bound_j` over the checked window.
    #[serde(with = "crate::linalg::json::lenient_f64")]
    pub worst_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainmentReport {
    pub settings: ContainmentSettings,
    pub settle_time: f64,
    pub initial: Option<Verdict>,
    pub transient: Option<Verdict>,
    pub ultimate: Option<Verdict>,
}

fn check(
    points: impl Iterator<Item = (f64, RVec)>,
    bound: &RVec,
    s: &ContainmentSettings,
) -> Verdict {
    let mut v = Verdict {
        pass: true,
        first_violation: None,
        worst_ratio: 0.0,
    };
    for (t, xi) in points {
        for (a, b) in xi.iter().zip(bound.iter()) {
            let ratio = if *b > 0.0 {
                a / b
            } else if *a > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            v.worst_ratio = v.worst_ratio.max(ratio);
            if *a > b * (1.0 + s.rel_slack) + s.abs_slack && v.pass {
                v.pass = false;
                v.first_violation = Some(t);
            }
        }
    }
    v
}

/// Check `|V⁻¹x(t)|` against each supplied bound: `admissible_init` on the
/// history, `beta` for all `t ≥ 0`, `b` on the trailing `settle_fraction`.
pub fn containment(
    traj: &Trajectory,
    v: &CMat,
    bounds: &ContainmentBounds,
    settings: &ContainmentSettings,
) -> Result<ContainmentReport> {
    let v_inv = linalg::inverse_c(v)?;
    let xi = |x: &RVec| -> RVec {
        let z = &v_inv * to_complex(&RMat::from_column_slice(x.len(), 1, x.as_slice()));
        RVec::from_fn(x.len(), |j, _| z[(j, 0)].norm())
    };
    let horizon = traj.times.last().copied().unwrap_or(0.0);
    let settle_time = horizon * (1.0 - settings.settle_fraction);
    let pts = |ts: &[f64], xs: &[RVec], from: f64| -> Vec<(f64, RVec)> {
        ts.iter()
            .zip(xs)
            .filter(|(t, _)| **t >= from - 1e-12)
            .map(|(t, x)| (*t, xi(x)))
            .collect()
    };
    let all_pts = pts(&traj.times, &traj.states, 0.0);
    let mut report = ContainmentReport {
        settings: settings.clone(),
        settle_time,
        initial: None,
        transient: None,
        ultimate: None,
    };
    if let Some(a) = &bounds.admissible_init {
        let hist = pts(&traj.history_times, &traj.history_states, f64::NEG_INFINITY);
        report.initial = Some(check(hist.into_iter(), a, settings));
    }
    if let Some(beta) = &bounds.beta {
        report.transient = Some(check(all_pts.iter().cloned(), beta, settings));
    }
    if let Some(b) = &bounds.b {
        report.ultimate = Some(check(
            all_pts.into_iter().filter(|(t, _)| *t >= settle_time - 1e-12),
            b,
            settings,
        ));
    }
    if traj.overflow_at.is_some() {
        for v in [&mut report.transient, &mut report.ultimate].into_iter().flatten() {
            if v.pass {
                v.pass = false;
                v.first_violation = traj.overflow_at;
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FalsifyTarget {
    #[serde(rename = "V", with = "json::complex_matrix")]
    pub v: CMat,
    #[serde(flatten)]
    pub bounds: ContainmentBounds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FalsifyConfig {
    pub trials: usize,
    pub seed: u64,
    pub tf: f64,
    pub dt: f64,
    pub containment: ContainmentSettings,
    /// Histories without `admissible_init` are drawn from `±scale·|V|b`.
    pub history_scale: f64,
}

impl Default for FalsifyConfig {
    fn default() -> Self {
        FalsifyConfig {
            trials: 200,
            seed: 0,
            tf: 50.0,
            dt: 0.01,
            containment: ContainmentSettings::default(),
            history_scale: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub signal: SignalPolicy,
    pub rule: PerturbationRule,
    pub history: Vec<f64>,
    pub report: ContainmentReport,
    pub overflow: bool,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FalsifySummary {
    pub config: FalsifyConfig,
    pub trials: usize,
    pub violations: usize,
    #[serde(with = "crate::linalg::json::lenient_f64")]
    pub max_ultimate_ratio: f64,
    #[serde(with = "crate::linalg::json::lenient_f64")]
    pub max_transient_ratio: f64,
    pub max_admissibility_excess: f64,
    pub records: Vec<TrialRecord>,
}

pub fn derive_seed(seed: u64, trial: usize) -> u64 {
    let mut z = seed ^ (trial as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn trial_setup(
    system: &SwitchingSystem,
    target: &FalsifyTarget,
    cfg: &FalsifyConfig,
    trial: usize,
    seed: u64,
) -> Result<(SignalPolicy, PerturbationRule, RVec)> {
    let n = system.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let signal = match trial % 3 {
        0 => SignalPolicy::Periodic {
            period: rng.random_range(0.05..1.0),
        },
        1 => SignalPolicy::RandomDwell {
            min: 0.05,
            max: 0.5,
            seed: rng.random(),
        },
        _ => {
            let count = rng.random_range(2..40);
            let mut times: Vec<f64> = (0..count).map(|_| rng.random_range(0.0..cfg.tf)).collect();
            times.push(0.0);
            times.sort_by(f64::total_cmp);
            times.dedup();
            let modes = times.iter().map(|_| rng.random_range(0..system.modes.len())).collect();
            SignalPolicy::FixedSequence { times, modes }
        }
    };
    let scale = target
        .bounds
        .b
        .as_ref()
        .or(target.bounds.beta.as_ref())
        .cloned()
        .unwrap_or_else(|| RVec::from_element(n, 1.0));
    let rule = match (trial / 3) % 4 {
        0 => PerturbationRule::RandomInBox { seed: rng.random() },
        1 => PerturbationRule::VertexBang { seed: rng.random() },
        2 => {
            let j = rng.random_range(0..n);
            let mut d = vec![0.0; n];
            d[j] = 1.0 / scale[j].max(f64::MIN_POSITIVE);
            PerturbationRule::AdversarialToward { direction: d }
        }
        _ => PerturbationRule::AdversarialToward {
            direction: scale.iter().map(|b| 1.0 / b.max(f64::MIN_POSITIVE)).collect(),
        },
    };
    let abs_v = abs_c(&target.v);
    let history = match &target.bounds.admissible_init {
        Some(a) => {
            let v_inv = linalg::inverse_c(&target.v)?;
            let hi = &abs_v * a;
            let mut x0 = RVec::zeros(n);
            for _ in 0..1000 {
                let x = RVec::from_fn(n, |j, _| rng.random_range(-1.0..=1.0) * hi[j]);
                let xi = &v_inv * to_complex(&RMat::from_column_slice(n, 1, x.as_slice()));
                if (0..n).all(|j| xi[(j, 0)].norm() <= a[j]) {
                    x0 = x;
                    break;
                }
            }
            x0
        }
        None => {
            let hi = &abs_v * &scale * cfg.history_scale;
            RVec::from_fn(n, |j, _| rng.random_range(-1.0..=1.0) * hi[j])
        }
    };
    Ok((signal, rule, history))
}

/// Run `cfg.trials` simulations over a grid of signals and steering rules,
/// each with a seed derived from `cfg.seed`, and count containment failures.
pub fn falsify(system: &SwitchingSystem, target: &FalsifyTarget, cfg: &FalsifyConfig) -> Result<FalsifySummary> {
    let records = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let seed = derive_seed(cfg.seed, trial);
            let (signal_policy, rule, x0) = trial_setup(system, target, cfg, trial, seed)?;
            let signal = SwitchingSignal::generate(signal_policy.clone(), system.modes.len(), cfg.tf)?;
            let traj = simulate(
                system,
                &signal,
                &PerturbationPolicy::uniform(rule.clone()),
                &History::Constant(x0.clone()),
                &SimOptions {
                    tf: cfg.tf,
                    dt: cfg.dt,
                    seed,
                    v: Some(target.v.clone()),
                },
            )?;
            let report = containment(&traj, &target.v, &target.bounds, &cfg.containment)?;
            let violated = [&report.transient, &report.ultimate]
                .into_iter()
                .flatten()
                .any(|v| !v.pass);
            Ok((
                TrialRecord {
                    trial,
                    seed,
                    signal: signal_policy,
                    rule,
                    history: x0.as_slice().to_vec(),
                    report,
                    overflow: traj.overflow_at.is_some(),
                    violated,
                },
                traj.max_admissibility_excess,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let ratio = |f: fn(&ContainmentReport) -> &Option<Verdict>| {
        records
            .iter()
            .filter_map(|(r, _)| f(&r.report).as_ref().map(|v| v.worst_ratio))
            .fold(0.0, f64::max)
    };
    Ok(FalsifySummary {
        config: cfg.clone(),
        trials: records.len(),
        violations: records.iter().filter(|(r, _)| r.violated).count(),
        max_ultimate_ratio: ratio(|r| &r.ultimate),
        max_transient_ratio: ratio(|r| &r.transient),
        max_admissibility_excess: records.iter().map(|(_, e)| *e).fold(0.0, f64::max),
        records: records.into_iter().map(|(r, _)| r).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search::unperturbed;
    use nalgebra::dvector;

    fn decay_system() -> SwitchingSystem {
        unperturbed(&[-RMat::identity(3, 3)]).unwrap()
    }

    fn run(sys: &SwitchingSystem, x0: RVec, tf: f64, dt: f64) -> Trajectory {
        let sig = SwitchingSignal::generate(SignalPolicy::Periodic { period: 1.0 }, sys.modes.len(), tf).unwrap();
        simulate(
            sys,
            &sig,
            &PerturbationPolicy::uniform(PerturbationRule::Zero),
            &History::Constant(x0),
            &SimOptions { tf, dt, seed: 1, v: None },
        )
        .unwrap()
    }

    #[test]
    fn scalar_decay() {
        let traj = run(&decay_system(), RVec::from_element(3, 1.0), 5.0, 1e-3);
        for (t, x) in traj.times.iter().zip(&traj.states) {
            assert!((x[0] - (-t).exp()).abs() < 1e-6);
        }
        assert_eq!(traj.states.len(), 5001);
    }

    #[test]
    fn rk4_order() {
        let a = RMat::from_row_slice(2, 2, &[-0.3, 1.0, -1.0, -0.3]);
        let sys = unperturbed(&[a.clone()]).unwrap();
        let x0 = dvector![1.0, 0.0];
        let exact = linalg::matrix_exponential(&a, 2.0).unwrap() * &x0;
        let e1 = (run(&sys, x0.clone(), 2.0, 0.1).states.last().unwrap() - &exact).norm();
        let e2 = (run(&sys, x0, 2.0, 0.05).states.last().unwrap() - &exact).norm();
        let ratio = e1 / e2;
        assert!(ratio > 12.0 && ratio < 20.0, "ratio {ratio}");
    }

    #[test]
    fn signal_is_right_continuous() {
        let s = SwitchingSignal::generate(
            SignalPolicy::FixedSequence {
                times: vec![0.0, 1.0, 2.5],
                modes: vec![0, 1, 0],
            },
            2,
            5.0,
        )
        .unwrap();
        assert_eq!(s.mode_at(0.999), 0);
        assert_eq!(s.mode_at(1.0), 1);
        assert_eq!(s.mode_at(2.5), 0);
        assert_eq!(s.step_modes(6, 0.5), vec![0, 0, 1, 1, 1, 0]);
    }

    #[test]
    fn random_dwell_respects_limits() {
        let s = SwitchingSignal::generate(
            SignalPolicy::RandomDwell { min: 0.05, max: 0.5, seed: 3 },
            3,
            50.0,
        )
        .unwrap();
        for w in s.times.windows(2) {
            assert!(w[1] - w[0] >= 0.05 && w[1] - w[0] <= 0.5);
        }
        assert!(s.modes.windows(2).all(|m| m[0] != m[1]));
    }

    #[test]
    fn zero_trajectory_contained() {
        let traj = run(&decay_system(), RVec::zeros(3), 1.0, 0.01);
        let rep = containment(
            &traj,
            &to_complex(&RMat::identity(3, 3)),
            &ContainmentBounds {
                b: Some(RVec::zeros(3)),
                beta: Some(RVec::zeros(3)),
                admissible_init: None,
            },
            &ContainmentSettings::default(),
        )
        .unwrap();
        assert!(rep.ultimate.unwrap().pass);
        assert!(rep.transient.unwrap().pass);
    }

    #[test]
    fn spike_is_caught() {
        let mut traj = run(&decay_system(), RVec::zeros(3), 1.0, 0.01);
        traj.states[40][1] = 5.0;
        let rep = containment(
            &traj,
            &to_complex(&RMat::identity(3, 3)),
            &ContainmentBounds {
                beta: Some(RVec::from_element(3, 1.0)),
                ..Default::default()
            },
            &ContainmentSettings::default(),
        )
        .unwrap();
        let v = rep.transient.unwrap();
        assert!(!v.pass);
        assert!((v.first_violation.unwrap() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn delay_must_align_with_grid() {
        let mut sys = decay_system();
        sys.tau_bar = 0.015;
        let sig = SwitchingSignal::generate(SignalPolicy::Periodic { period: 1.0 }, 1, 1.0).unwrap();
        assert!(simulate(
            &sys,
            &sig,
            &PerturbationPolicy::uniform(PerturbationRule::Zero),
            &History::Constant(RVec::zeros(3)),
            &SimOptions { tf: 1.0, dt: 0.01, seed: 0, v: None },
        )
        .is_err());
    }

    #[test]
    fn overflow_stops_early() {
        let sys = unperturbed(&[RMat::identity(1, 1) * 50.0]).unwrap();
        let traj = run(&sys, dvector![1.0], 10.0, 0.01);
        assert!(traj.overflow_at.is_some());
        assert!(traj.states.len() < 1001);
        assert_eq!(traj.modes.len() + 1, traj.states.len());
    }
}
