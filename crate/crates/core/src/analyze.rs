//! End-to-end analysis driven by an [`AnalysisConfig`].

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use crate::bounds::{
    affine_pipeline, constant_bounds, nonlinear_pipeline, semiglobal_bound, AffineMajorant, Comparison, Majorant,
    Psi,
};
use crate::config::{AnalysisConfig, Pipeline, VSource, SEED_CAPS, SEED_LEVEL, SEED_SEARCH};
use crate::error::{Error, Result};
use crate::linalg::{self, json, RVec};
use crate::lyapunov::{combine_boxes, level_search, QuadraticCertificate};
use crate::metzler::ones;
use crate::report::{Diagnostic, LyapunovSection, ReportDocument, SearchSummary, ToolInfo};
use crate::search::{search_v, ObjectiveKind};
use crate::sim::derive_seed;
use crate::system::{affine_overbound, AffineCap, PerturbationBound, SwitchingSystem};
use crate::transform::{assemble_transform, polish_transform, Objective};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NO_TRANSFORM: i32 = 2;
pub const EXIT_SPECTRAL_RADIUS: i32 = 3;
pub const EXIT_NO_BETA: i32 = 4;
/// `simulate` found a containment violation.
pub const EXIT_VIOLATION: i32 = 5;

/// Exit code for an error escaping a pipeline stage.
pub fn exit_code(stage: &str, err: &Error) -> i32 {
    match err {
        Error::NoFeasibleTransform(_) => EXIT_NO_TRANSFORM,
        Error::SpectralRadius(_) => EXIT_SPECTRAL_RADIUS,
        Error::Divergence { .. } | Error::Degenerate(_) | Error::NoConvergence(_) | Error::NotMonotone { .. }
            if stage == "nonlinear" =>
        {
            EXIT_NO_BETA
        }
        _ => EXIT_ERROR,
    }
}

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub pipeline: Option<Pipeline>,
    pub v_file: Option<PathBuf>,
    pub search: bool,
    pub seed: Option<u64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut AnalysisConfig) {
        if let Some(p) = self.pipeline {
            cfg.pipeline = p;
        }
        if let Some(f) = &self.v_file {
            let abs = std::path::absolute(f).unwrap_or_else(|_| f.clone());
            cfg.v_source = VSource::File(abs.to_string_lossy().into_owned());
        }
        if self.search && !matches!(cfg.v_source, VSource::Search(_)) {
            cfg.v_source = VSource::Search(Default::default());
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
    }
}

struct Run {
    doc: ReportDocument,
    timings: BTreeMap<String, f64>,
}

impl Run {
    fn fail(&mut self, stage: &str, err: &Error) {
        let code = exit_code(stage, err);
        self.diagnose(stage, code, err.to_string());
    }

    fn diagnose(&mut self, stage: &str, code: i32, message: String) {
        if self.doc.exit_code == EXIT_OK {
            self.doc.exit_code = code;
        }
        self.doc.diagnostics.push(Diagnostic {
            stage: stage.into(),
            exit_code: code,
            message,
        });
    }

    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.timings.insert(stage.into(), t.elapsed().as_secs_f64());
        out
    }
}

fn caps_of(system: &SwitchingSystem, cfg: &AnalysisConfig) -> Result<Option<Vec<AffineCap>>> {
    let hi = RVec::from_element(system.n, cfg.affine.cap_box);
    let seed = derive_seed(cfg.seed, SEED_CAPS);
    let caps = system
        .modes
        .iter()
        .enumerate()
        .map(|(i, m)| affine_overbound(&m.bound, &hi, cfg.affine.cap_samples, seed.wrapping_add(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(caps.into_iter().collect())
}

fn vec_or_ones(v: &Option<Vec<f64>>, n: usize, what: &str) -> Result<RVec> {
    match v {
        None => Ok(ones(n)),
        Some(v) if v.len() == n => Ok(RVec::from_vec(v.clone())),
        Some(v) => Err(Error::Config(format!("{what} has {} entries, expected {n}", v.len()))),
    }
}

/// Run the configured pipeline. Failures of individual stages are recorded
/// as diagnostics with their exit code; only configuration and I/O errors
/// before any stage runs are returned as `Err`.
pub fn analyze(cfg: &AnalysisConfig, with_timings: bool) -> Result<ReportDocument> {
    let system_cfg = cfg.system_config()?;
    let system = SwitchingSystem::from_config(&system_cfg)?;
    let n = system.n;
    let mut echo = cfg.clone();
    echo.base_dir = PathBuf::new();
    let mut run = Run {
        doc: ReportDocument {
            tool: ToolInfo::default(),
            config: echo,
            system: system_cfg,
            transform_source: String::new(),
            transform: None,
            polish: None,
            search: None,
            caps: None,
            constant: None,
            nonlinear: None,
            affine: None,
            semiglobal: None,
            lyapunov: None,
            combined_box: None,
            claims: Vec::new(),
            diagnostics: Vec::new(),
            exit_code: EXIT_OK,
            timings: None,
        },
        timings: BTreeMap::new(),
    };
    let caps = match caps_of(&system, cfg) {
        Ok(c) => c,
        Err(e) => {
            run.fail("caps", &e);
            None
        }
    };
    run.doc.caps = caps.clone();
    let affine_only = cfg.pipeline == Pipeline::Affine;
    let objective = match (&caps, affine_only) {
        (Some(c), true) => Objective::Affine(c.clone()),
        (None, true) => {
            run.diagnose("affine", EXIT_ERROR, "the affine pipeline needs an affine cap on every mode".into());
            return Ok(finish(run, with_timings));
        }
        _ => Objective::Plain,
    };

    // Transform.
    let supplied = cfg.supplied_v()?;
    let candidate = match supplied {
        Some(v) => {
            run.doc.transform_source = "supplied".into();
            let v = match cfg.polish_evals {
                Some(evals) => match run.time("polish", || polish_transform(&v, &system, &objective, evals)) {
                    Ok((pv, rep)) => {
                        run.doc.polish = Some(rep);
                        run.doc.transform_source = "supplied, polished within print rounding".into();
                        pv
                    }
                    Err(e) => {
                        run.fail("polish", &e);
                        return Ok(finish(run, with_timings));
                    }
                },
                None => v,
            };
            match assemble_transform(&v, &system, &objective) {
                Ok(c) => c,
                Err(e) => {
                    run.fail("transform", &e);
                    return Ok(finish(run, with_timings));
                }
            }
        }
        None => {
            let VSource::Search(mut scfg) = cfg.v_source.clone() else {
                unreachable!("supplied_v returns None only for search")
            };
            scfg.seed = derive_seed(cfg.seed, SEED_SEARCH);
            scfg.objective = match objective {
                Objective::Plain => ObjectiveKind::Plain,
                Objective::Affine(_) => ObjectiveKind::Affine,
            };
            run.doc.transform_source = "search".into();
            match run.time("search", || search_v(&system, &objective, &scfg)) {
                Ok(out) => {
                    run.doc.search = Some(SearchSummary {
                        best_restart: out.best_restart,
                        success: out.success,
                        log: out.log,
                    });
                    out.best
                }
                Err(e) => {
                    run.fail("search", &e);
                    return Ok(finish(run, with_timings));
                }
            }
        }
    };
    run.doc.claim("transform.Lambda", "max_i M(V^-1 A_i V)");
    // Only a(Lambda) gates here; a(Lambda + F_bar) >= 0 is the affine
    // stage's rho(R) >= 1 verdict.
    let abscissa = match linalg::spectral_abscissa(&candidate.lambda) {
        Ok(a) => a,
        Err(e) => {
            run.fail("transform", &e);
            return Ok(finish(run, with_timings));
        }
    };
    run.doc.transform = Some(candidate.clone());
    if !(abscissa < 0.0) {
        run.diagnose(
            "transform",
            EXIT_NO_TRANSFORM,
            format!("a(Lambda) = {abscissa:.6e} is not negative"),
        );
        return Ok(finish(run, with_timings));
    }
    let cmp = match Comparison::new(&candidate.lambda, &cfg.tolerances) {
        Ok(c) => c,
        Err(e) => {
            run.fail("transform", &e);
            return Ok(finish(run, with_timings));
        }
    };
    let psi = Psi::new(&candidate, &system);
    let abs_v = candidate.abs_v();
    let mut boxes: Vec<RVec> = Vec::new();

    if cfg.pipeline.runs(Pipeline::Constant) {
        let w: Option<Vec<RVec>> = system
            .modes
            .iter()
            .map(|m| match &m.bound {
                PerturbationBound::Constant { w } => Some(w.clone()),
                _ => None,
            })
            .collect();
        match w {
            Some(w) => {
                let x0 = match &cfg.constant.initial_box {
                    None => Ok(RVec::zeros(n)),
                    some => vec_or_ones(some, n, "initial_box"),
                };
                let res = x0.and_then(|x0| constant_bounds(&candidate, &system, &w, &x0, &cfg.tolerances));
                match run.time("constant", || res) {
                    Ok(r) => {
                        boxes.push(&abs_v * &r.ultimate);
                        run.doc.claim("constant.ultimate", "-Lambda^-1 z");
                        run.doc.claim("constant.eta", "max(|V^-1 x(0)| + Lambda^-1 z, 0)");
                        run.doc.constant = Some(r);
                    }
                    Err(e) => run.fail("constant", &e),
                }
            }
            None if cfg.pipeline == Pipeline::Constant => run.diagnose(
                "constant",
                EXIT_ERROR,
                "the constant pipeline needs constant bounds on every mode".into(),
            ),
            None => {}
        }
    }

    if cfg.pipeline.runs(Pipeline::Nonlinear) {
        let res = vec_or_ones(&cfg.nonlinear.alpha, n, "alpha").and_then(|alpha| {
            let c = vec_or_ones(&cfg.nonlinear.c, n, "c")?;
            nonlinear_pipeline(&cmp, &psi, &abs_v, &alpha, &c, cfg.nonlinear.probes, &cfg.iter)
        });
        match run.time("nonlinear", || res) {
            Ok(r) => {
                boxes.push(r.abs_v_b.clone());
                run.doc.claim("nonlinear.beta", "limit of T_alpha iterated from 0");
                run.doc.claim("nonlinear.b", "limit of T_0 iterated from beta");
                run.doc.claim("nonlinear.margin", "eps_bar = min_j (beta - T_0 beta)_j / (-Lambda^-1 p(c))_j");
                run.doc.claim("nonlinear.invariance", "probed super-solutions in [b, b + eps 1]");
                run.doc.nonlinear = Some(r);
            }
            Err(e) => run.fail("nonlinear", &e),
        }
    }

    if cfg.pipeline.runs(Pipeline::Affine) {
        match &caps {
            Some(caps) => {
                let refine: Option<&dyn Majorant> = if cfg.affine.refine { Some(&psi) } else { None };
                let res = affine_pipeline(&candidate, &system, caps, refine, &cfg.tolerances, &cfg.iter);
                match run.time("affine", || res) {
                    Ok(r) => {
                        run.doc.claim("affine.R", "-Lambda^-1 F_bar");
                        if r.stable {
                            run.doc.claim("affine.b_tilde", "(I - R)^-1 (-Lambda^-1 w_bar)");
                            if let Some(b) = r.abs_v_b_refined.as_ref().or(r.abs_v_b_tilde.as_ref()) {
                                boxes.push(b.clone());
                            }
                            if r.b_refined.is_some() {
                                run.doc.claim("affine.b_refined", "limit of T_0 iterated from b_tilde");
                            }
                            if let Some(xi) = &cfg.affine.semiglobal_xi {
                                let aff = AffineMajorant {
                                    f_bar: r.f_bar.clone(),
                                    w_bar: r.w_bar.clone(),
                                };
                                let xi = RVec::from_vec(xi.clone());
                                match semiglobal_bound(&cmp, &aff, &psi, &xi, &cfg.iter) {
                                    Ok(s) => {
                                        run.doc.claim("semiglobal.beta", "alpha (I - R)^-1 1");
                                        run.doc.semiglobal = Some(s);
                                    }
                                    Err(e) => run.fail("semiglobal", &e),
                                }
                            }
                        } else {
                            run.diagnose(
                                "affine",
                                EXIT_SPECTRAL_RADIUS,
                                format!("rho(R) = {:.6} >= 1", r.rho_r),
                            );
                        }
                        run.doc.affine = Some(r);
                    }
                    Err(e) => run.fail("affine", &e),
                }
            }
            None if cfg.pipeline == Pipeline::Affine => unreachable!("checked above"),
            None => {}
        }
    }

    if cfg.pipeline.runs(Pipeline::Lyapunov) && (cfg.lyapunov.p.is_some() || cfg.lyapunov.d.is_some()) {
        let res = (|| {
            let cert = match (&cfg.lyapunov.p, &cfg.lyapunov.d) {
                (Some(p), _) => QuadraticCertificate::supplied(&json::rmat_from_value(p)?, &system, &cfg.tolerances)?,
                (None, Some(d)) => QuadraticCertificate::from_diag(
                    &candidate.v,
                    &RVec::from_vec(d.clone()),
                    &system,
                    &cfg.tolerances,
                )?,
                (None, None) => unreachable!(),
            };
            let mut level_cfg = cfg.lyapunov.level.clone();
            level_cfg.seed = derive_seed(cfg.seed, SEED_LEVEL);
            let level = level_search(&cert.p, &system, &level_cfg)?;
            Ok::<_, Error>(LyapunovSection {
                certificate: cert,
                level,
            })
        })();
        match run.time("lyapunov", || res) {
            Ok(s) => {
                run.doc.claim("lyapunov.P", "common quadratic Lyapunov function");
                run.doc.claim("lyapunov.k", "sampled sup of per-direction level where Ldot bound turns negative");
                run.doc.claim("lyapunov.x_bar", "sqrt(k (P^-1)_jj)");
                if let Some(x) = &s.level.x_bar {
                    boxes.push(x.clone());
                }
                run.doc.lyapunov = Some(s);
            }
            Err(e) => run.fail("lyapunov", &e),
        }
    }

    if !boxes.is_empty() {
        run.doc.combined_box = combine_boxes(&boxes).ok().map(|b| b.as_slice().to_vec());
        run.doc.claim("combined_box", "componentwise min of the original-coordinate boxes");
    }
    Ok(finish(run, with_timings))
}

fn finish(mut run: Run, with_timings: bool) -> ReportDocument {
    if with_timings {
        run.doc.timings = Some(run.timings);
    }
    run.doc
}
