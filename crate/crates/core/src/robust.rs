//! Robust hierarchical synthesis: H∞ and H2 gain design as LMI feasibility
//! problems over the modal subsystems, the LQR-consistent variants with
//! recovered weights, the inverse-LQR weight recovery, and the fully
//! decentralized single-block baseline.
//!
//! Every feasible outcome is post-verified by an independent norm
//! computation before it is returned: the LMI conditions are sufficient
//! only, and the certificate is never trusted on its own.

use std::sync::Arc;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::analysis::{self, AnalysisError, NormReport};
use crate::graph::Interconnection;
use crate::linalg::{min_symmetric_eig, sym_part};
use crate::lmi::{
    self, build_problem, Assignment, LinearObjective, LmiBlock, LmiError, MatVar, SdpOutcome,
    SdpStatus, Sense, SolveOptions, VarId,
};
use crate::lqr::LqrError;
use crate::mas::{AgentModel, HierGain, MasError};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error(
        "LMI problem infeasible at ε = {eps}: {what}. The condition is sufficient only; \
         a controller meeting the bound may still exist."
    )]
    Infeasible { eps: f64, what: String },
    #[error("LMI reported feasible but the independent norm check failed: achieved {achieved} ≥ ε = {eps}")]
    VerificationFailed { achieved: f64, eps: f64 },
    #[error("solver did not reach the requested accuracy: {0}")]
    Inaccurate(String),
    #[error("recovered Q1 is not positive semidefinite (min eigenvalue {0:.3e} < -1e-7); run rejected")]
    QNotPsd(f64),
    #[error("gain does not stabilize the agent (closed-loop abscissa {0:.3e})")]
    NotStabilizing(f64),
    #[error("bad synthesis spec: {0}")]
    BadSpec(String),
    #[error(transparent)]
    Lmi(#[from] LmiError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Mas(#[from] MasError),
    #[error(transparent)]
    Lqr(#[from] LqrError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthMode {
    HinfGeneral,
    H2General,
    HinfLqr,
    H2Lqr,
    DecentralizedHinf,
    DecentralizedH2,
}

/// Input to one synthesis run.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub agent: AgentModel,
    pub k: Arc<Interconnection>,
    pub eps: f64,
    pub alpha: Vec<f64>,
    pub mode: SynthMode,
}

impl SynthSpec {
    pub fn new(
        agent: AgentModel,
        k: Arc<Interconnection>,
        eps: f64,
        alpha: Option<Vec<f64>>,
        mode: SynthMode,
    ) -> Result<Self, SynthError> {
        if !(eps > 0.0) {
            return Err(SynthError::BadSpec(format!("ε must be positive, got {eps}")));
        }
        let alpha = alpha.unwrap_or_else(|| vec![1.0; k.n()]);
        if alpha.len() != k.n() {
            return Err(SynthError::BadSpec(format!(
                "{} α values for {} modes",
                alpha.len(),
                k.n()
            )));
        }
        if alpha.iter().any(|&a| !(a > 0.0)) {
            return Err(SynthError::BadSpec("every α_i must be positive".into()));
        }
        if !k.is_psd() {
            return Err(SynthError::BadSpec(
                "K must be positive semidefinite for modal synthesis".into(),
            ));
        }
        Ok(Self {
            agent,
            k,
            eps,
            alpha,
            mode,
        })
    }
}

#[derive(Debug, Clone)]
pub struct RecoveredWeights {
    pub q1: DMatrix<f64>,
    pub q2: DMatrix<f64>,
    pub r1: DMatrix<f64>,
    pub r2: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct SynthDiagnostics {
    pub iterations: u32,
    pub worst_violation: f64,
    pub margin: f64,
    pub backend_status: String,
    /// Condition-number bound and scale from the uniqueness wrapper.
    pub t: Option<f64>,
    pub s: Option<f64>,
}

/// Output of a synthesis run. `certified_bound` is the independently
/// computed norm (global for hierarchical modes, per-agent for the
/// decentralized baselines), strictly below ε.
#[derive(Debug, Clone)]
pub struct SynthResult {
    pub gain: HierGain,
    pub y: DMatrix<f64>,
    pub w: Vec<DMatrix<f64>>,
    pub recovered: Option<RecoveredWeights>,
    pub certified_bound: f64,
    pub report: NormReport,
    pub diagnostics: SynthDiagnostics,
}

fn diag_from(outcome: &SdpOutcome, t: Option<f64>, s: Option<f64>) -> SynthDiagnostics {
    SynthDiagnostics {
        iterations: outcome.iterations,
        worst_violation: outcome.worst_violation,
        margin: outcome.margin,
        backend_status: outcome.backend_status.clone(),
        t,
        s,
    }
}

fn solve_mapped(problem: &lmi::Problem, opts: SolveOptions, eps: f64) -> Result<SdpOutcome, SynthError> {
    let outcome = lmi::solve(problem, opts)?;
    match outcome.status {
        SdpStatus::Feasible => Ok(outcome),
        SdpStatus::Infeasible => Err(SynthError::Infeasible {
            eps,
            what: outcome.backend_status,
        }),
        SdpStatus::Inaccurate => Err(SynthError::Inaccurate(format!(
            "{} (worst violation {:.3e})",
            outcome.backend_status, outcome.worst_violation
        ))),
    }
}

/// Clip eigenvalues below zero (used after the -1e-7 PSD assertion).
fn psd_clip(m: &DMatrix<f64>) -> Result<DMatrix<f64>, SynthError> {
    let (vals, u) = crate::linalg::sorted_symmetric_eigen(m)
        .map_err(|e| SynthError::Inaccurate(e.to_string()))?;
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        vals.len(),
        vals.iter().map(|&v| v.max(0.0)),
    ));
    Ok(sym_part(&(&u * d * u.transpose())))
}

fn invert_sym(y: &DMatrix<f64>) -> Result<DMatrix<f64>, SynthError> {
    y.clone()
        .lu()
        .try_inverse()
        .map(|m| sym_part(&m))
        .ok_or_else(|| SynthError::Inaccurate("certificate Y is numerically singular".into()))
}

/// `F = G Y^{-1}` via a linear solve.
fn gain_from(g: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>, SynthError> {
    let x = y
        .clone()
        .lu()
        .solve(&g.transpose())
        .ok_or_else(|| SynthError::Inaccurate("certificate Y is numerically singular".into()))?;
    Ok(x.transpose())
}

// ---------------------------------------------------------------------------
// Block builders (Y/G parameterization)
// ---------------------------------------------------------------------------

fn hinf_block(
    agent: &AgentModel,
    alpha: f64,
    gamma: Option<f64>,
    eps: f64,
    y: VarId,
    g1: VarId,
    g2: Option<VarId>,
    name: String,
) -> LmiBlock {
    let (a, b, c, d, bd) = (
        agent.a.clone(),
        agent.b.clone(),
        agent.c.clone(),
        agent.d.clone(),
        agent.bd.clone(),
    );
    let (n, p) = (agent.n(), agent.p());
    let mut deps = vec![y, g1];
    if let Some(g2) = g2 {
        deps.push(g2);
    }
    LmiBlock::new(name, n + p, Sense::LeqStrict, deps, move |asg: &Assignment| {
        let yv = asg.get(y);
        let mut gt = asg.get(g1).clone();
        if let (Some(g2), Some(gamma)) = (g2, gamma) {
            gt += asg.get(g2) * gamma;
        }
        let top = (&a * yv - &b * &gt) * alpha;
        let s11 = &top + top.transpose() + &bd * bd.transpose() / (eps * eps);
        let s21 = (&c * yv - &d * &gt) * alpha;
        let mut m = DMatrix::zeros(n + p, n + p);
        m.view_mut((0, 0), (n, n)).copy_from(&s11);
        m.view_mut((n, 0), (p, n)).copy_from(&s21);
        m.view_mut((0, n), (n, p)).copy_from(&s21.transpose());
        m.view_mut((n, n), (p, p))
            .copy_from(&(-DMatrix::identity(p, p)));
        m
    })
}

fn h2_gramian_block(
    agent: &AgentModel,
    alpha: f64,
    gamma: Option<f64>,
    y: VarId,
    g1: VarId,
    g2: Option<VarId>,
    name: String,
) -> LmiBlock {
    let (a, b, bd) = (agent.a.clone(), agent.b.clone(), agent.bd.clone());
    let (n, nd) = (agent.n(), agent.nd());
    let mut deps = vec![y, g1];
    if let Some(g2) = g2 {
        deps.push(g2);
    }
    LmiBlock::new(name, n + nd, Sense::LeqStrict, deps, move |asg: &Assignment| {
        let yv = asg.get(y);
        let mut gt = asg.get(g1).clone();
        if let (Some(g2), Some(gamma)) = (g2, gamma) {
            gt += asg.get(g2) * gamma;
        }
        let top = (&a * yv - &b * &gt) * alpha;
        let s11 = &top + top.transpose();
        let mut m = DMatrix::zeros(n + nd, n + nd);
        m.view_mut((0, 0), (n, n)).copy_from(&s11);
        m.view_mut((n, 0), (nd, n)).copy_from(&bd.transpose());
        m.view_mut((0, n), (n, nd)).copy_from(&bd);
        m.view_mut((n, n), (nd, nd))
            .copy_from(&(-DMatrix::identity(nd, nd)));
        m
    })
}

fn h2_output_block(
    agent: &AgentModel,
    alpha: f64,
    gamma: Option<f64>,
    y: VarId,
    g1: VarId,
    g2: Option<VarId>,
    w: VarId,
    name: String,
) -> LmiBlock {
    let (c, d) = (agent.c.clone(), agent.d.clone());
    let (n, p) = (agent.n(), agent.p());
    let mut deps = vec![y, g1, w];
    if let Some(g2) = g2 {
        deps.push(g2);
    }
    LmiBlock::new(name, n + p, Sense::GeqStrict, deps, move |asg: &Assignment| {
        let yv = asg.get(y);
        let mut gt = asg.get(g1).clone();
        if let (Some(g2), Some(gamma)) = (g2, gamma) {
            gt += asg.get(g2) * gamma;
        }
        let s21 = (&c * yv - &d * &gt) * alpha;
        let mut m = DMatrix::zeros(n + p, n + p);
        m.view_mut((0, 0), (n, n)).copy_from(&(yv * alpha));
        m.view_mut((n, 0), (p, n)).copy_from(&s21);
        m.view_mut((0, n), (n, p)).copy_from(&s21.transpose());
        m.view_mut((n, n), (p, p)).copy_from(asg.get(w));
        m
    })
}

// ---------------------------------------------------------------------------
// General H∞ / H2 synthesis (Y, G1, G2 variables)
// ---------------------------------------------------------------------------

/// Hierarchical H∞ synthesis: one bounded-real block per mode γᵢ with the
/// scaled Lyapunov variable `Yᵢ = αᵢY`. On success `F1 = G1 Y⁻¹`,
/// `F2 = G2 Y⁻¹` and the independently computed global H∞ norm is < ε.
pub fn synth_hinf(spec: &SynthSpec) -> Result<SynthResult, SynthError> {
    let n = spec.agent.n();
    let m = spec.agent.m();
    let y = MatVar::symmetric(0, n, "Y").psd(1e-6);
    let g1 = MatVar::rectangular(1, m, n, "G1");
    let g2 = MatVar::rectangular(2, m, n, "G2");
    let (yid, g1id, g2id) = (y.id, g1.id, g2.id);
    let mut blocks = Vec::new();
    for (i, (&gamma, &alpha)) in spec.k.gammas().iter().zip(&spec.alpha).enumerate() {
        blocks.push(hinf_block(
            &spec.agent,
            alpha,
            Some(gamma),
            spec.eps,
            yid,
            g1id,
            Some(g2id),
            format!("H∞ mode {i} (γ={gamma:.4})"),
        ));
    }
    let problem = build_problem(vec![y, g1, g2], blocks, None)?;
    finish_general(spec, &problem, yid, g1id, Some(g2id), false)
}

/// Hierarchical H2 synthesis: per-mode Gramian and output blocks plus the
/// trace budget `Σ trace(Wᵢ) < ε²`.
pub fn synth_h2(spec: &SynthSpec) -> Result<SynthResult, SynthError> {
    let n = spec.agent.n();
    let m = spec.agent.m();
    let p = spec.agent.p();
    let nmodes = spec.k.n();
    let y = MatVar::symmetric(0, n, "Y").psd(1e-6);
    let g1 = MatVar::rectangular(1, m, n, "G1");
    let g2 = MatVar::rectangular(2, m, n, "G2");
    let (yid, g1id, g2id) = (y.id, g1.id, g2.id);
    let mut vars = vec![y, g1, g2];
    let mut wids = Vec::with_capacity(nmodes);
    for i in 0..nmodes {
        let w = MatVar::symmetric(3 + i, p, &format!("W{i}")).psd(1e-9);
        wids.push(w.id);
        vars.push(w);
    }
    let mut blocks = Vec::new();
    for (i, (&gamma, &alpha)) in spec.k.gammas().iter().zip(&spec.alpha).enumerate() {
        blocks.push(h2_gramian_block(
            &spec.agent,
            alpha,
            Some(gamma),
            yid,
            g1id,
            Some(g2id),
            format!("H2 Gramian mode {i} (γ={gamma:.4})"),
        ));
        blocks.push(h2_output_block(
            &spec.agent,
            alpha,
            Some(gamma),
            yid,
            g1id,
            Some(g2id),
            wids[i],
            format!("H2 output mode {i} (γ={gamma:.4})"),
        ));
    }
    blocks.push(trace_budget_block(spec.eps, &wids, None, p));
    let problem = build_problem(vars, blocks, None)?;
    finish_general(spec, &problem, yid, g1id, Some(g2id), true)
}

/// `Σ trace(Wᵢ) < budget` as a strict 1x1 block; the budget is `ε²` or
/// `s·ε²` when a scale variable participates.
fn trace_budget_block(eps: f64, wids: &[VarId], s: Option<VarId>, _p: usize) -> LmiBlock {
    let wids: Vec<VarId> = wids.to_vec();
    let mut deps = wids.clone();
    if let Some(s) = s {
        deps.push(s);
    }
    LmiBlock::new("trace budget", 1, Sense::GeqStrict, deps, move |asg: &Assignment| {
        let total: f64 = wids.iter().map(|&w| asg.get(w).trace()).sum();
        let budget = match s {
            Some(s) => asg.get(s)[(0, 0)] * eps * eps,
            None => eps * eps,
        };
        DMatrix::from_element(1, 1, budget - total)
    })
}

fn finish_general(
    spec: &SynthSpec,
    problem: &lmi::Problem,
    yid: VarId,
    g1id: VarId,
    g2id: Option<VarId>,
    is_h2: bool,
) -> Result<SynthResult, SynthError> {
    let mut opts = SolveOptions::default();
    for attempt in 0..2 {
        let outcome = solve_mapped(problem, opts, spec.eps)?;
        let yv = sym_part(outcome.assignment.get(yid));
        let f1 = gain_from(outcome.assignment.get(g1id), &yv)?;
        let f2 = match g2id {
            Some(g2id) => gain_from(outcome.assignment.get(g2id), &yv)?,
            None => DMatrix::zeros(spec.agent.m(), spec.agent.n()),
        };
        let gain = HierGain::new(f1, f2, spec.k.clone())?;
        let report = analysis::global_norms(&spec.agent, &gain);
        let achieved = match &report {
            Ok(r) => {
                if is_h2 {
                    r.global_h2
                } else {
                    r.global_hinf
                }
            }
            Err(_) => f64::INFINITY,
        };
        if achieved < spec.eps {
            let w = collect_w(problem, &outcome.assignment, None);
            return Ok(SynthResult {
                gain,
                y: yv,
                w,
                recovered: None,
                certified_bound: achieved,
                report: report.expect("achieved finite implies report ok"),
                diagnostics: diag_from(&outcome, None, None),
            });
        }
        // solver-accuracy fault: re-solve once with a larger margin
        if attempt == 0 {
            opts.margin *= 10.0;
            opts.max_iter = opts.max_iter.max(400);
        } else {
            return Err(SynthError::VerificationFailed {
                achieved,
                eps: spec.eps,
            });
        }
    }
    unreachable!()
}

fn collect_w(problem: &lmi::Problem, asg: &Assignment, scale: Option<f64>) -> Vec<DMatrix<f64>> {
    let s = scale.unwrap_or(1.0);
    problem
        .vars
        .iter()
        .filter(|v| v.name.starts_with('W'))
        .map(|v| asg.get(v.id) / s)
        .collect()
}

/// Fully decentralized baseline: the single-mode problem without γ and G2;
/// `F2 = 0`. The certified bound is the per-agent norm.
pub fn synth_decentralized(spec: &SynthSpec) -> Result<SynthResult, SynthError> {
    let n = spec.agent.n();
    let m = spec.agent.m();
    let p = spec.agent.p();
    let is_h2 = matches!(spec.mode, SynthMode::DecentralizedH2);
    let y = MatVar::symmetric(0, n, "Y").psd(1e-6);
    let g1 = MatVar::rectangular(1, m, n, "G1");
    let (yid, g1id) = (y.id, g1.id);
    let mut vars = vec![y, g1];
    let mut blocks = Vec::new();
    if is_h2 {
        let w = MatVar::symmetric(2, p, "W0").psd(1e-9);
        let wid = w.id;
        vars.push(w);
        blocks.push(h2_gramian_block(
            &spec.agent,
            1.0,
            None,
            yid,
            g1id,
            None,
            "decentralized H2 Gramian".into(),
        ));
        blocks.push(h2_output_block(
            &spec.agent,
            1.0,
            None,
            yid,
            g1id,
            None,
            wid,
            "decentralized H2 output".into(),
        ));
        blocks.push(trace_budget_block(spec.eps, &[wid], None, p));
    } else {
        blocks.push(hinf_block(
            &spec.agent,
            1.0,
            None,
            spec.eps,
            yid,
            g1id,
            None,
            "decentralized H∞".into(),
        ));
    }
    let problem = build_problem(vars, blocks, None)?;

    let mut opts = SolveOptions::default();
    for attempt in 0..2 {
        let outcome = solve_mapped(&problem, opts, spec.eps)?;
        let yv = sym_part(outcome.assignment.get(yid));
        let f1 = gain_from(outcome.assignment.get(g1id), &yv)?;
        let gain = HierGain::new(f1.clone(), DMatrix::zeros(m, n), spec.k.clone())?;
        let report = analysis::global_norms(&spec.agent, &gain);
        // per-agent loop: every mode coincides when F2 = 0
        let acl = &spec.agent.a - &spec.agent.b * &f1;
        let ccl = &spec.agent.c - &spec.agent.d * &f1;
        let achieved = if is_h2 {
            analysis::h2_norm(&acl, &spec.agent.bd, &ccl).unwrap_or(f64::INFINITY)
        } else {
            analysis::hinf_norm(&acl, &spec.agent.bd, &ccl, &DMatrix::zeros(p, spec.agent.nd()))
                .unwrap_or(f64::INFINITY)
        };
        if achieved < spec.eps && report.is_ok() {
            let w = collect_w(&problem, &outcome.assignment, None);
            return Ok(SynthResult {
                gain,
                y: yv,
                w,
                recovered: None,
                certified_bound: achieved,
                report: report.expect("checked"),
                diagnostics: diag_from(&outcome, None, None),
            });
        }
        if attempt == 0 {
            opts.margin *= 10.0;
            opts.max_iter = opts.max_iter.max(400);
        } else {
            return Err(SynthError::VerificationFailed {
                achieved,
                eps: spec.eps,
            });
        }
    }
    unreachable!()
}

// ---------------------------------------------------------------------------
// LQR-consistent synthesis (scaled variables Ŷ = sY, R̂ = sR)
// ---------------------------------------------------------------------------

/// One scaled bounded-real block of the LQR-consistent H∞ program: the
/// congruence by `√s` makes the constant terms s-linear, so the
/// condition-number wrapper becomes a single SDP.
#[allow(clippy::too_many_arguments)]
fn hinf_lqr_block(
    agent: &AgentModel,
    alpha: f64,
    gamma: f64,
    eps: f64,
    yh: VarId,
    r1h: VarId,
    r2h: VarId,
    sid: VarId,
    name: String,
) -> LmiBlock {
    let (a, b, c, d, bd) = (
        agent.a.clone(),
        agent.b.clone(),
        agent.c.clone(),
        agent.d.clone(),
        agent.bd.clone(),
    );
    let (n, p) = (agent.n(), agent.p());
    LmiBlock::new(
        name,
        n + p,
        Sense::LeqStrict,
        vec![yh, r1h, r2h, sid],
        move |asg: &Assignment| {
            let yv = asg.get(yh);
            let rg = asg.get(r1h) + asg.get(r2h) * gamma;
            let s = asg.get(sid)[(0, 0)];
            let top = (&a * yv - &b * &rg * b.transpose()) * alpha;
            let s11 = &top + top.transpose() + &bd * bd.transpose() * (s / (eps * eps));
            let s21 = (&c * yv - &d * &rg * b.transpose()) * alpha;
            let mut m = DMatrix::zeros(n + p, n + p);
            m.view_mut((0, 0), (n, n)).copy_from(&s11);
            m.view_mut((n, 0), (p, n)).copy_from(&s21);
            m.view_mut((0, n), (n, p)).copy_from(&s21.transpose());
            m.view_mut((n, n), (p, p))
                .copy_from(&(-DMatrix::identity(p, p) * s));
            m
        },
    )
}

#[allow(clippy::too_many_arguments)]
fn h2_lqr_gramian_block(
    agent: &AgentModel,
    alpha: f64,
    gamma: f64,
    yh: VarId,
    r1h: VarId,
    r2h: VarId,
    sid: VarId,
    name: String,
) -> LmiBlock {
    let (a, b, bd) = (agent.a.clone(), agent.b.clone(), agent.bd.clone());
    let (n, nd) = (agent.n(), agent.nd());
    LmiBlock::new(
        name,
        n + nd,
        Sense::LeqStrict,
        vec![yh, r1h, r2h, sid],
        move |asg: &Assignment| {
            let yv = asg.get(yh);
            let rg = asg.get(r1h) + asg.get(r2h) * gamma;
            let s = asg.get(sid)[(0, 0)];
            let top = (&a * yv - &b * &rg * b.transpose()) * alpha;
            let s11 = &top + top.transpose();
            let mut m = DMatrix::zeros(n + nd, n + nd);
            m.view_mut((0, 0), (n, n)).copy_from(&s11);
            m.view_mut((n, 0), (nd, n)).copy_from(&(bd.transpose() * s));
            m.view_mut((0, n), (n, nd)).copy_from(&(&bd * s));
            m.view_mut((n, n), (nd, nd))
                .copy_from(&(-DMatrix::identity(nd, nd) * s));
            m
        },
    )
}

#[allow(clippy::too_many_arguments)]
fn h2_lqr_output_block(
    agent: &AgentModel,
    alpha: f64,
    gamma: f64,
    yh: VarId,
    r1h: VarId,
    r2h: VarId,
    w: VarId,
    name: String,
) -> LmiBlock {
    let (b, c, d) = (agent.b.clone(), agent.c.clone(), agent.d.clone());
    let (n, p) = (agent.n(), agent.p());
    LmiBlock::new(
        name,
        n + p,
        Sense::GeqStrict,
        vec![yh, r1h, r2h, w],
        move |asg: &Assignment| {
            let yv = asg.get(yh);
            let rg = asg.get(r1h) + asg.get(r2h) * gamma;
            let s21 = (&c * yv - &d * &rg * b.transpose()) * alpha;
            let mut m = DMatrix::zeros(n + p, n + p);
            m.view_mut((0, 0), (n, n)).copy_from(&(yv * alpha));
            m.view_mut((n, 0), (p, n)).copy_from(&s21);
            m.view_mut((0, n), (n, p)).copy_from(&s21.transpose());
            m.view_mut((n, n), (p, p)).copy_from(asg.get(w));
            m
        },
    )
}

/// The structural inverse-LQR block of the combined program:
/// `[[sym(AY - B R1 Bᵀ), B R1], [R1 Bᵀ, -R1]] ⪯ 0` (homogeneous, so scaled
/// variables satisfy it iff the unscaled ones do).
///
/// Declared strict: the condition-number objective otherwise drives this
/// block exactly active, which makes the recovered Q1 singular and the
/// weight pair unusable for a Riccati re-design. The margin shift keeps
/// every returned point inside the non-strict feasible set.
fn inverse_lqr_structure_block(agent: &AgentModel, yh: VarId, r1h: VarId) -> LmiBlock {
    let (a, b) = (agent.a.clone(), agent.b.clone());
    let (n, m) = (agent.n(), agent.m());
    LmiBlock::new(
        "inverse-LQR structure",
        n + m,
        Sense::LeqStrict,
        vec![yh, r1h],
        move |asg: &Assignment| {
            let yv = asg.get(yh);
            let r1 = asg.get(r1h);
            let top = &a * yv - &b * r1 * b.transpose();
            let s11 = &top + top.transpose();
            let br = &b * r1;
            let mut mm = DMatrix::zeros(n + m, n + m);
            mm.view_mut((0, 0), (n, n)).copy_from(&s11);
            mm.view_mut((0, n), (n, m)).copy_from(&br);
            mm.view_mut((n, 0), (m, n)).copy_from(&br.transpose());
            mm.view_mut((n, n), (m, m)).copy_from(&(-r1));
            mm
        },
    )
}

/// Conditioning blocks `I ⪯ blkdiag(Ŷ, R̂1, R̂2) ⪯ tI` over all decision
/// variables (size n + 2m).
fn conditioning_blocks(
    n: usize,
    m: usize,
    yh: VarId,
    r1h: VarId,
    r2h: VarId,
    tid: VarId,
) -> (LmiBlock, LmiBlock) {
    let blkdiag = move |asg: &Assignment| {
        let mut mm = DMatrix::zeros(n + 2 * m, n + 2 * m);
        mm.view_mut((0, 0), (n, n)).copy_from(asg.get(yh));
        mm.view_mut((n, n), (m, m)).copy_from(asg.get(r1h));
        mm.view_mut((n + m, n + m), (m, m)).copy_from(asg.get(r2h));
        mm
    };
    let lower = LmiBlock::new(
        "blkdiag(Y,R1,R2) ⪰ I",
        n + 2 * m,
        Sense::Geq,
        vec![yh, r1h, r2h],
        move |asg: &Assignment| blkdiag(asg) - DMatrix::identity(n + 2 * m, n + 2 * m),
    );
    let upper = LmiBlock::new(
        "blkdiag(Y,R1,R2) ⪯ tI",
        n + 2 * m,
        Sense::Geq,
        vec![yh, r1h, r2h, tid],
        move |asg: &Assignment| {
            DMatrix::identity(n + 2 * m, n + 2 * m) * asg.get(tid)[(0, 0)] - blkdiag(asg)
        },
    );
    (lower, upper)
}

const SCALE_FLOOR: f64 = 1e-6;

fn lqr_mode_vars(n: usize, m: usize) -> (Vec<MatVar>, VarId, VarId, VarId, VarId, VarId) {
    let yh = MatVar::symmetric(0, n, "Yh");
    let r1h = MatVar::symmetric(1, m, "R1h");
    let r2h = MatVar::symmetric(2, m, "R2h");
    let s = MatVar::scalar(3, "s");
    let t = MatVar::scalar(4, "t");
    let ids = (yh.id, r1h.id, r2h.id, s.id, t.id);
    (vec![yh, r1h, r2h, s, t], ids.0, ids.1, ids.2, ids.3, ids.4)
}

fn scale_floor_block(sid: VarId) -> LmiBlock {
    LmiBlock::new("s ⪰ s_min", 1, Sense::Geq, vec![sid], move |asg: &Assignment| {
        DMatrix::from_element(1, 1, asg.get(sid)[(0, 0)] - SCALE_FLOOR)
    })
}

struct LqrRecovery {
    gain: HierGain,
    y: DMatrix<f64>,
    recovered: RecoveredWeights,
    t: f64,
    s: f64,
    w: Vec<DMatrix<f64>>,
}

fn recover_lqr(
    spec: &SynthSpec,
    problem: &lmi::Problem,
    outcome: &SdpOutcome,
    yh: VarId,
    r1h: VarId,
    r2h: VarId,
    sid: VarId,
    tid: VarId,
) -> Result<LqrRecovery, SynthError> {
    let s = outcome.assignment.get(sid)[(0, 0)];
    let t = outcome.assignment.get(tid)[(0, 0)];
    if !(s > 0.0) {
        return Err(SynthError::Inaccurate(format!("scale s = {s} not positive")));
    }
    let yhat = sym_part(outcome.assignment.get(yh));
    let r1 = sym_part(outcome.assignment.get(r1h)) / s;
    let r2 = sym_part(outcome.assignment.get(r2h)) / s;
    let y = &yhat / s;
    let yinv = invert_sym(&y)?;
    let b = &spec.agent.b;
    let f1 = &r1 * b.transpose() * &yinv;
    let f2 = &r2 * b.transpose() * &yinv;
    // Q1 = -AᵀY⁻¹ - Y⁻¹A + Y⁻¹ B R1 Bᵀ Y⁻¹, Q2 = Y⁻¹ B R2 Bᵀ Y⁻¹
    let a = &spec.agent.a;
    let q1 = sym_part(&(-(a.transpose() * &yinv) - &yinv * a + &yinv * b * &r1 * b.transpose() * &yinv));
    let q2 = sym_part(&(&yinv * b * &r2 * b.transpose() * &yinv));
    let q1_min = min_symmetric_eig(&q1).map_err(|e| SynthError::Inaccurate(e.to_string()))?;
    if q1_min < -1e-7 {
        return Err(SynthError::QNotPsd(q1_min));
    }
    let q1 = psd_clip(&q1)?;
    let gain = HierGain::new(f1, f2, spec.k.clone())?;
    Ok(LqrRecovery {
        gain,
        y,
        recovered: RecoveredWeights { q1, q2, r1, r2 },
        t,
        s,
        w: collect_w(problem, &outcome.assignment, Some(s)),
    })
}

/// LQR-consistent H∞ synthesis (the combined program with the
/// condition-number-minimizing wrapper, solved as one SDP in scaled
/// variables). Returns gains `F1 = R1 Bᵀ Y⁻¹`, `F2 = R2 Bᵀ Y⁻¹` together
/// with the recovered LQR weights.
pub fn synth_hinf_lqr(spec: &SynthSpec) -> Result<SynthResult, SynthError> {
    let n = spec.agent.n();
    let m = spec.agent.m();
    let (vars, yh, r1h, r2h, sid, tid) = lqr_mode_vars(n, m);
    let mut blocks = Vec::new();
    for (i, (&gamma, &alpha)) in spec.k.gammas().iter().zip(&spec.alpha).enumerate() {
        blocks.push(hinf_lqr_block(
            &spec.agent,
            alpha,
            gamma,
            spec.eps,
            yh,
            r1h,
            r2h,
            sid,
            format!("H∞-LQR mode {i} (γ={gamma:.4})"),
        ));
    }
    blocks.push(inverse_lqr_structure_block(&spec.agent, yh, r1h));
    let (lo, hi) = conditioning_blocks(n, m, yh, r1h, r2h, tid);
    blocks.push(lo);
    blocks.push(hi);
    blocks.push(scale_floor_block(sid));
    let problem = build_problem(vars, blocks, Some(LinearObjective::minimize_scalar(tid)))?;
    finish_lqr(spec, &problem, yh, r1h, r2h, sid, tid, false)
}

/// LQR-consistent H2 synthesis (Gramian/output blocks, scaled trace budget,
/// inverse-LQR structure block, conditioning wrapper).
pub fn synth_h2_lqr(spec: &SynthSpec) -> Result<SynthResult, SynthError> {
    let n = spec.agent.n();
    let m = spec.agent.m();
    let p = spec.agent.p();
    let (mut vars, yh, r1h, r2h, sid, tid) = lqr_mode_vars(n, m);
    let mut wids = Vec::with_capacity(spec.k.n());
    for i in 0..spec.k.n() {
        let w = MatVar::symmetric(vars.len(), p, &format!("W{i}")).psd(1e-9);
        wids.push(w.id);
        vars.push(w);
    }
    let mut blocks = Vec::new();
    for (i, (&gamma, &alpha)) in spec.k.gammas().iter().zip(&spec.alpha).enumerate() {
        blocks.push(h2_lqr_gramian_block(
            &spec.agent,
            alpha,
            gamma,
            yh,
            r1h,
            r2h,
            sid,
            format!("H2-LQR Gramian mode {i} (γ={gamma:.4})"),
        ));
        blocks.push(h2_lqr_output_block(
            &spec.agent,
            alpha,
            gamma,
            yh,
            r1h,
            r2h,
            wids[i],
            format!("H2-LQR output mode {i} (γ={gamma:.4})"),
        ));
    }
    blocks.push(trace_budget_block(spec.eps, &wids, Some(sid), p));
    blocks.push(inverse_lqr_structure_block(&spec.agent, yh, r1h));
    let (lo, hi) = conditioning_blocks(n, m, yh, r1h, r2h, tid);
    blocks.push(lo);
    blocks.push(hi);
    blocks.push(scale_floor_block(sid));
    let problem = build_problem(vars, blocks, Some(LinearObjective::minimize_scalar(tid)))?;
    finish_lqr(spec, &problem, yh, r1h, r2h, sid, tid, true)
}

#[allow(clippy::too_many_arguments)]
fn finish_lqr(
    spec: &SynthSpec,
    problem: &lmi::Problem,
    yh: VarId,
    r1h: VarId,
    r2h: VarId,
    sid: VarId,
    tid: VarId,
    is_h2: bool,
) -> Result<SynthResult, SynthError> {
    let mut opts = SolveOptions::default();
    for attempt in 0..2 {
        let outcome = solve_mapped(problem, opts, spec.eps)?;
        let rec = recover_lqr(spec, problem, &outcome, yh, r1h, r2h, sid, tid)?;
        let report = analysis::global_norms(&spec.agent, &rec.gain);
        let achieved = match &report {
            Ok(r) => {
                if is_h2 {
                    r.global_h2
                } else {
                    r.global_hinf
                }
            }
            Err(_) => f64::INFINITY,
        };
        if achieved < spec.eps {
            return Ok(SynthResult {
                gain: rec.gain,
                y: rec.y,
                w: rec.w,
                recovered: Some(rec.recovered),
                certified_bound: achieved,
                report: report.expect("achieved finite implies report ok"),
                diagnostics: diag_from(&outcome, Some(rec.t), Some(rec.s)),
            });
        }
        if attempt == 0 {
            opts.margin *= 10.0;
            opts.max_iter = opts.max_iter.max(400);
        } else {
            return Err(SynthError::VerificationFailed {
                achieved,
                eps: spec.eps,
            });
        }
    }
    unreachable!()
}

/// Dispatch on `spec.mode`.
pub fn synthesize(spec: &SynthSpec) -> Result<SynthResult, SynthError> {
    match spec.mode {
        SynthMode::HinfGeneral => synth_hinf(spec),
        SynthMode::H2General => synth_h2(spec),
        SynthMode::HinfLqr => synth_hinf_lqr(spec),
        SynthMode::H2Lqr => synth_h2_lqr(spec),
        SynthMode::DecentralizedHinf | SynthMode::DecentralizedH2 => synth_decentralized(spec),
    }
}

// ---------------------------------------------------------------------------
// Inverse LQR (Proposition 1)
// ---------------------------------------------------------------------------

/// Result of the inverse-LQR feasibility problem: `F̃` is LQR-optimal for
/// the recovered pair; re-designing with `(q, r)` reproduces `F̃`.
#[derive(Debug, Clone)]
pub struct InverseLqr {
    pub z: DMatrix<f64>,
    pub r: DMatrix<f64>,
    /// Symmetrized and PSD-projected recovered state weight.
    pub q: DMatrix<f64>,
    /// Minimum eigenvalue of Q before projection (≥ -1e-7 by contract).
    pub q_min_eig_raw: f64,
    /// `‖F̃Z - RBᵀ‖` at the returned point.
    pub equality_residual: f64,
}

const EQUALITY_BAND: f64 = 1e-8;

/// Recover LQR weights for a stabilizing gain `F̃`: find `Z ≻ 0`, `R ≻ 0`
/// with `[[sym((A-BF̃)Z), ZF̃ᵀ], [F̃Z, -R]] ⪯ 0` and `F̃Z = RBᵀ`, then
/// `Q = -AᵀZ⁻¹ - Z⁻¹A + Z⁻¹BRBᵀZ⁻¹`.
///
/// The feasible set is a cone, so the `Z ≻ 0` strictness margin is set to
/// 1 (i.e. `Z ⪰ I`): this fixes the scale and keeps `‖Z⁻¹‖ ≤ 1`, bounding
/// the error amplification of the ±1e-8 equality band.
pub fn inverse_lqr(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    f_tilde: &DMatrix<f64>,
) -> Result<InverseLqr, SynthError> {
    let n = a.nrows();
    let m = b.ncols();
    if f_tilde.shape() != (m, n) {
        return Err(SynthError::BadSpec(format!(
            "gain is {}x{}, expected {m}x{n}",
            f_tilde.nrows(),
            f_tilde.ncols()
        )));
    }
    let acl = a - b * f_tilde;
    let abscissa = crate::linalg::spectral_abscissa(&acl);
    if abscissa >= 0.0 {
        return Err(SynthError::NotStabilizing(abscissa));
    }

    let z = MatVar::symmetric(0, n, "Z").psd(1.0);
    let r = MatVar::symmetric(1, m, "R").psd(1e-6);
    let (zid, rid) = (z.id, r.id);
    let mut blocks = Vec::new();
    {
        let (acl, ft) = (acl.clone(), f_tilde.clone());
        blocks.push(LmiBlock::new(
            "inverse-LQR main",
            n + m,
            Sense::Leq,
            vec![zid, rid],
            move |asg: &Assignment| {
                let zv = asg.get(zid);
                let top = &acl * zv;
                let s11 = &top + top.transpose();
                let zft = zv * ft.transpose();
                let mut mm = DMatrix::zeros(n + m, n + m);
                mm.view_mut((0, 0), (n, n)).copy_from(&s11);
                mm.view_mut((0, n), (n, m)).copy_from(&zft);
                mm.view_mut((n, 0), (m, n)).copy_from(&zft.transpose());
                mm.view_mut((n, n), (m, m)).copy_from(&(-asg.get(rid)));
                mm
            },
        ));
    }
    // F̃Z = RBᵀ as a pair of margin-free band inequalities per entry
    for i in 0..m {
        for j in 0..n {
            let (ft, bt) = (f_tilde.clone(), b.transpose().clone_owned());
            blocks.push(LmiBlock::new(
                format!("equality +({i},{j})"),
                1,
                Sense::Geq,
                vec![zid, rid],
                move |asg: &Assignment| {
                    let e = (&ft * asg.get(zid) - asg.get(rid) * &bt)[(i, j)];
                    DMatrix::from_element(1, 1, EQUALITY_BAND - e)
                },
            ));
            let (ft, bt) = (f_tilde.clone(), b.transpose().clone_owned());
            blocks.push(LmiBlock::new(
                format!("equality -({i},{j})"),
                1,
                Sense::Geq,
                vec![zid, rid],
                move |asg: &Assignment| {
                    let e = (&ft * asg.get(zid) - asg.get(rid) * &bt)[(i, j)];
                    DMatrix::from_element(1, 1, e + EQUALITY_BAND)
                },
            ));
        }
    }
    let problem = build_problem(vec![z, r], blocks, None)?;

    let mut opts = SolveOptions::default();
    let mut last_err = None;
    for attempt in 0..2 {
        match lmi::solve(&problem, opts)? {
            out if out.status == SdpStatus::Feasible => {
                let zv = sym_part(out.assignment.get(zid));
                let rv = sym_part(out.assignment.get(rid));
                let zinv = invert_sym(&zv)?;
                let q_raw = sym_part(
                    &(-(a.transpose() * &zinv) - &zinv * a + &zinv * b * &rv * b.transpose() * &zinv),
                );
                let q_min = min_symmetric_eig(&q_raw)
                    .map_err(|e| SynthError::Inaccurate(e.to_string()))?;
                if q_min < -1e-7 {
                    return Err(SynthError::QNotPsd(q_min));
                }
                let q = psd_clip(&q_raw)?;
                let equality_residual = (f_tilde * &zv - &rv * b.transpose()).norm();
                return Ok(InverseLqr {
                    z: zv,
                    r: rv,
                    q,
                    q_min_eig_raw: q_min,
                    equality_residual,
                });
            }
            out if out.status == SdpStatus::Infeasible => {
                return Err(SynthError::Infeasible {
                    eps: f64::NAN,
                    what: format!(
                        "F̃ is not inverse-optimal for any positive definite R within tolerance \
                         ({})",
                        out.backend_status
                    ),
                });
            }
            out => {
                last_err = Some(SynthError::Inaccurate(out.backend_status));
                if attempt == 0 {
                    opts.max_iter = 500;
                    opts.tol = 1e-10;
                }
            }
        }
    }
    Err(last_err.unwrap_or_else(|| SynthError::Inaccurate("solver stalled".into())))
}
