//! Affine matrix-inequality modeling and a semidefinite feasibility /
//! minimization backend.
//!
//! Blocks are declared as affine closures over matrix variables and probed
//! into canonical form: one block-diagonal PSD-cone constraint over the
//! symmetric vectorization (svec, off-diagonals scaled by √2), each block
//! prescaled by `1/max(1, ‖constant‖_F)` and strict senses shifted by a
//! reported margin `+δI`. The cone program is handed to Clarabel; the
//! backend is replaceable behind [`solve`], and [`verify`] recomputes every
//! block eigenvalue at the returned point independently of the solver path.

use std::fmt::Write as _;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus,
    SupportedConeT::{self, NonnegativeConeT, PSDTriangleConeT},
};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg::{max_abs_asymmetry, sorted_symmetric_eigen};

#[derive(Debug, Error)]
pub enum LmiError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("block '{0}' is not symmetric-valued (asymmetry {1:.3e})")]
    NotSymmetricValued(String, f64),
    #[error("block '{0}' is not affine in the declared variables")]
    NotAffine(String),
    #[error("solver setup failed: {0}")]
    Backend(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Symmetric,
    Rectangular,
    Scalar,
}

/// A matrix decision variable. `psd_required` adds an automatic
/// `X ⪰ psd_margin·I` block at build time.
#[derive(Debug, Clone)]
pub struct MatVar {
    pub id: VarId,
    pub rows: usize,
    pub cols: usize,
    pub kind: VarKind,
    pub psd_required: bool,
    pub psd_margin: f64,
    pub name: String,
}

impl MatVar {
    pub fn symmetric(id: usize, n: usize, name: &str) -> Self {
        MatVar {
            id: VarId(id),
            rows: n,
            cols: n,
            kind: VarKind::Symmetric,
            psd_required: false,
            psd_margin: 1e-6,
            name: name.into(),
        }
    }
    pub fn rectangular(id: usize, rows: usize, cols: usize, name: &str) -> Self {
        MatVar {
            id: VarId(id),
            rows,
            cols,
            kind: VarKind::Rectangular,
            psd_required: false,
            psd_margin: 0.0,
            name: name.into(),
        }
    }
    pub fn scalar(id: usize, name: &str) -> Self {
        MatVar {
            id: VarId(id),
            rows: 1,
            cols: 1,
            kind: VarKind::Scalar,
            psd_required: false,
            psd_margin: 0.0,
            name: name.into(),
        }
    }
    pub fn psd(mut self, margin: f64) -> Self {
        self.psd_required = true;
        self.psd_margin = margin;
        self
    }

    /// Number of scalar coordinates (triangle count for symmetric vars).
    pub fn coords(&self) -> usize {
        match self.kind {
            VarKind::Symmetric => self.rows * (self.rows + 1) / 2,
            VarKind::Rectangular => self.rows * self.cols,
            VarKind::Scalar => 1,
        }
    }

    /// Basis matrix of coordinate `t` (unit entry, symmetrized for
    /// symmetric variables).
    fn basis(&self, t: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        match self.kind {
            VarKind::Symmetric => {
                let (i, j) = triangle_index(self.rows, t);
                m[(i, j)] = 1.0;
                m[(j, i)] = 1.0;
            }
            VarKind::Rectangular => {
                m[(t % self.rows, t / self.rows)] = 1.0;
            }
            VarKind::Scalar => m[(0, 0)] = 1.0,
        }
        m
    }
}

/// (i, j) with i ≤ j for the t-th upper-triangle coordinate in column-major
/// order: (0,0), (0,1), (1,1), (0,2), ...
fn triangle_index(_n: usize, t: usize) -> (usize, usize) {
    let mut j = 0usize;
    let mut acc = 0usize;
    loop {
        if t < acc + j + 1 {
            return (t - acc, j);
        }
        acc += j + 1;
        j += 1;
    }
}

/// Values for every variable.
#[derive(Debug, Clone)]
pub struct Assignment {
    values: Vec<DMatrix<f64>>,
}

impl Assignment {
    pub fn zero(vars: &[MatVar]) -> Self {
        Assignment {
            values: vars.iter().map(|v| DMatrix::zeros(v.rows, v.cols)).collect(),
        }
    }
    pub fn get(&self, id: VarId) -> &DMatrix<f64> {
        &self.values[id.0]
    }
    pub fn set(&mut self, id: VarId, m: DMatrix<f64>) {
        self.values[id.0] = m;
    }
    /// Stacked Frobenius norm across all variables.
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    /// `block ⪰ 0`
    Geq,
    /// `block ≻ 0`, realized as `block ⪰ δI`
    GeqStrict,
    /// `block ⪯ 0`
    Leq,
    /// `block ≺ 0`, realized as `block ⪯ -δI`
    LeqStrict,
}

impl Sense {
    fn strict(self) -> bool {
        matches!(self, Sense::GeqStrict | Sense::LeqStrict)
    }
    fn geq(self) -> bool {
        matches!(self, Sense::Geq | Sense::GeqStrict)
    }
}

type BlockMap = Box<dyn Fn(&Assignment) -> DMatrix<f64> + Send + Sync>;

/// A symmetric-valued affine map constrained to a semidefinite cone.
pub struct LmiBlock {
    pub name: String,
    pub size: usize,
    pub sense: Sense,
    /// Strict-shift override in prescaled units; `None` takes the solve
    /// option default.
    pub margin: Option<f64>,
    pub deps: Vec<VarId>,
    map: BlockMap,
}

impl LmiBlock {
    pub fn new(
        name: impl Into<String>,
        size: usize,
        sense: Sense,
        deps: Vec<VarId>,
        map: impl Fn(&Assignment) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        LmiBlock {
            name: name.into(),
            size,
            sense,
            margin: None,
            deps,
            map: Box::new(map),
        }
    }

    pub fn with_margin(mut self, margin: f64) -> Self {
        self.margin = Some(margin);
        self
    }

    pub fn eval(&self, asg: &Assignment) -> DMatrix<f64> {
        (self.map)(asg)
    }

    /// Prescale factor `max(1, ‖constant term‖_F)`.
    pub fn scale(&self, vars: &[MatVar]) -> f64 {
        self.eval(&Assignment::zero(vars)).norm().max(1.0)
    }
}

impl std::fmt::Debug for LmiBlock {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LmiBlock")
            .field("name", &self.name)
            .field("size", &self.size)
            .field("sense", &self.sense)
            .finish()
    }
}

/// Linear objective `Σ trace(coefᵀ · X_var)`, minimized.
#[derive(Debug, Clone, Default)]
pub struct LinearObjective {
    pub terms: Vec<(VarId, DMatrix<f64>)>,
}

impl LinearObjective {
    pub fn minimize_scalar(id: VarId) -> Self {
        LinearObjective {
            terms: vec![(id, DMatrix::from_element(1, 1, 1.0))],
        }
    }
}

struct CanonicalBlock {
    /// scaled svec of the constant term, oriented for the cone
    b0: Vec<f64>,
    /// scaled svec coefficient per (global coordinate, row) — sparse columns
    cols: Vec<(usize, Vec<(usize, f64)>)>,
    /// svec positions of diagonal entries (margin shift applies there)
    diag_rows: Vec<usize>,
    size: usize,
    strict: bool,
    margin_override: Option<f64>,
    scale: f64,
    source: usize,
}

/// Canonicalized cone program.
pub struct Problem {
    pub vars: Vec<MatVar>,
    pub blocks: Vec<LmiBlock>,
    pub objective: Option<LinearObjective>,
    canon: Vec<CanonicalBlock>,
    coord_offset: Vec<usize>,
    ncoords: usize,
}

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Exact symmetric packing: upper triangle, column-major. Round trip through
/// [`smat`] is bitwise exact; the cone's √2 off-diagonal scaling is applied
/// separately when coefficient data is generated.
pub fn svec(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows();
    let mut out = DVector::zeros(n * (n + 1) / 2);
    let mut t = 0;
    for j in 0..n {
        for i in 0..=j {
            out[t] = m[(i, j)];
            t += 1;
        }
    }
    out
}

/// Inverse of [`svec`].
pub fn smat(v: &DVector<f64>) -> DMatrix<f64> {
    // n from triangle count
    let len = v.len();
    let n = ((((8 * len + 1) as f64).sqrt() as usize) - 1) / 2;
    assert_eq!(n * (n + 1) / 2, len, "not a triangle-packed length");
    let mut m = DMatrix::zeros(n, n);
    let mut t = 0;
    for j in 0..n {
        for i in 0..=j {
            m[(i, j)] = v[t];
            m[(j, i)] = v[t];
            t += 1;
        }
    }
    m
}

/// Cone-scaled svec (off-diagonals × √2), forward-only.
fn svec_scaled(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for j in 0..n {
        for i in 0..=j {
            out.push(if i == j { m[(i, j)] } else { m[(i, j)] * SQRT2 });
        }
    }
    out
}

fn diag_svec_rows(n: usize) -> Vec<usize> {
    let mut rows = Vec::with_capacity(n);
    let mut t = 0;
    for j in 0..n {
        rows.push(t + j);
        t += j + 1;
    }
    rows
}

/// Canonicalize variables and blocks into one block-diagonal PSD-cone
/// program (plus an optional linear objective).
pub fn build_problem(
    vars: Vec<MatVar>,
    mut blocks: Vec<LmiBlock>,
    objective: Option<LinearObjective>,
) -> Result<Problem, LmiError> {
    for (i, v) in vars.iter().enumerate() {
        if v.id.0 != i {
            return Err(LmiError::ShapeMismatch(format!(
                "variable '{}' has id {} at position {i}",
                v.name, v.id.0
            )));
        }
        if matches!(v.kind, VarKind::Symmetric | VarKind::Scalar) && v.rows != v.cols {
            return Err(LmiError::ShapeMismatch(format!(
                "symmetric/scalar variable '{}' must be square",
                v.name
            )));
        }
    }
    // automatic PSD blocks for flagged variables
    for v in vars.iter().filter(|v| v.psd_required) {
        let id = v.id;
        let n = v.rows;
        blocks.push(
            LmiBlock::new(
                format!("{} ⪰ 0", v.name),
                n,
                Sense::GeqStrict,
                vec![id],
                move |asg: &Assignment| asg.get(id).clone(),
            )
            .with_margin(v.psd_margin),
        );
    }

    let mut coord_offset = Vec::with_capacity(vars.len());
    let mut ncoords = 0usize;
    for v in &vars {
        coord_offset.push(ncoords);
        ncoords += v.coords();
    }

    let sym_tol = 1e-9;
    let mut canon = Vec::with_capacity(blocks.len());
    for (bi, blk) in blocks.iter().enumerate() {
        for dep in &blk.deps {
            if dep.0 >= vars.len() {
                return Err(LmiError::ShapeMismatch(format!(
                    "block '{}' references undeclared variable {}",
                    blk.name, dep.0
                )));
            }
        }
        let zero = Assignment::zero(&vars);
        let c0 = blk.eval(&zero);
        if c0.shape() != (blk.size, blk.size) {
            return Err(LmiError::ShapeMismatch(format!(
                "block '{}' evaluates to {}x{}, declared {}",
                blk.name,
                c0.nrows(),
                c0.ncols(),
                blk.size
            )));
        }
        let scale = c0.norm().max(1.0);
        let asym = max_abs_asymmetry(&c0);
        if asym > sym_tol * scale {
            return Err(LmiError::NotSymmetricValued(blk.name.clone(), asym));
        }

        let sign = if blk.sense.geq() { 1.0 } else { -1.0 };
        let b0: Vec<f64> = svec_scaled(&c0).iter().map(|x| sign * x / scale).collect();

        let mut cols = Vec::new();
        let mut probe = Assignment::zero(&vars);
        // affine-consistency checkpoint built alongside the probes
        let mut check = Assignment::zero(&vars);
        let mut predicted = c0.clone();
        for &dep in &blk.deps {
            let var = &vars[dep.0];
            for t in 0..var.coords() {
                let basis = var.basis(t);
                probe.set(dep, basis.clone());
                let at = blk.eval(&probe) - &c0;
                probe.set(dep, DMatrix::zeros(var.rows, var.cols));
                if max_abs_asymmetry(&at) > sym_tol * (at.norm().max(scale)) {
                    return Err(LmiError::NotSymmetricValued(blk.name.clone(), max_abs_asymmetry(&at)));
                }
                // pseudo-random but deterministic multiplier for the check
                let w = 0.25 + ((dep.0 * 31 + t * 17) % 13) as f64 / 13.0;
                let cur = check.get(dep) + &basis * w;
                check.set(dep, cur);
                predicted += &at * w;
                let col: Vec<(usize, f64)> = svec_scaled(&at)
                    .iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(r, &v)| (r, sign * v / scale))
                    .collect();
                cols.push((coord_offset[dep.0] + t, col));
            }
        }
        let actual = blk.eval(&check);
        if (actual - &predicted).norm() > 1e-7 * predicted.norm().max(1.0) {
            return Err(LmiError::NotAffine(blk.name.clone()));
        }
        canon.push(CanonicalBlock {
            b0,
            cols,
            diag_rows: diag_svec_rows(blk.size),
            size: blk.size,
            strict: blk.sense.strict(),
            margin_override: blk.margin,
            scale,
            source: bi,
        });
    }

    Ok(Problem {
        vars,
        blocks,
        objective,
        canon,
        coord_offset,
        ncoords,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub max_iter: u32,
    pub tol: f64,
    /// Default strict-inequality shift in prescaled block units.
    pub margin: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iter: 200,
            tol: 1e-9,
            margin: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Feasible,
    Infeasible,
    Inaccurate,
}

#[derive(Debug)]
pub struct SdpOutcome {
    pub status: SdpStatus,
    pub assignment: Assignment,
    /// Most negative block eigenvalue after the margin shift.
    pub worst_violation: f64,
    pub objective: Option<f64>,
    pub iterations: u32,
    /// The strict margin that was applied, in prescaled block units.
    pub margin: f64,
    /// Absolute duality gap at termination (minimization only).
    pub duality_gap: Option<f64>,
    pub backend_status: String,
}

impl Problem {
    fn unpack(&self, x: &[f64]) -> Assignment {
        let mut asg = Assignment::zero(&self.vars);
        for v in &self.vars {
            let off = self.coord_offset[v.id.0];
            let mut m = DMatrix::zeros(v.rows, v.cols);
            for t in 0..v.coords() {
                m += v.basis(t) * x[off + t];
            }
            asg.set(v.id, m);
        }
        asg
    }

    /// Plain-text sparse triplets of the canonical form:
    /// `block row col entry coefficient` with `entry = -1` for the constant.
    pub fn dump_canonical(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# block row col var-entry coefficient (svec-scaled, prescaled)");
        for (bi, cb) in self.canon.iter().enumerate() {
            let n = cb.size;
            let mut t = 0;
            for j in 0..n {
                for i in 0..=j {
                    if cb.b0[t] != 0.0 {
                        let _ = writeln!(out, "{bi} {i} {j} -1 {:.17e}", cb.b0[t]);
                    }
                    t += 1;
                }
            }
            for (coord, col) in &cb.cols {
                for &(row, v) in col {
                    let (i, j) = triangle_index(n, row);
                    let _ = writeln!(out, "{bi} {i} {j} {coord} {v:.17e}");
                }
            }
        }
        out
    }
}

/// Hand the canonical program to the conic backend, then gate the reported
/// feasibility through [`verify`]: a `Feasible` outcome always satisfies
/// `worst violation ≥ -1e-7·(1 + ‖assignment‖)`.
pub fn solve(problem: &Problem, options: SolveOptions) -> Result<SdpOutcome, LmiError> {
    let nrows: usize = problem.canon.iter().map(|c| c.b0.len()).sum();
    let ncols = problem.ncoords;

    // b with margin shifts on diagonal svec rows of strict blocks
    let mut b = Vec::with_capacity(nrows);
    let mut cones: Vec<SupportedConeT<f64>> = Vec::with_capacity(problem.canon.len());
    let mut applied_margin = options.margin;
    {
        let mut offset = 0usize;
        for cb in &problem.canon {
            let delta = if cb.strict {
                cb.margin_override.unwrap_or(options.margin)
            } else {
                0.0
            };
            if cb.strict {
                applied_margin = applied_margin.max(delta);
            }
            let mut rows = cb.b0.clone();
            for &d in &cb.diag_rows {
                rows[d] -= delta;
            }
            b.extend_from_slice(&rows);
            cones.push(if cb.size == 1 {
                NonnegativeConeT(1)
            } else {
                PSDTriangleConeT(cb.size)
            });
            offset += cb.b0.len();
        }
        debug_assert_eq!(offset, nrows);
    }

    // CSC of A (columns = coordinates), A x + s = b with A[:, t] = -sign·svec(A_t)
    let mut per_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); ncols];
    {
        let mut offset = 0usize;
        for cb in &problem.canon {
            for (coord, col) in &cb.cols {
                for &(row, v) in col {
                    per_col[*coord].push((offset + row, -v));
                }
            }
            offset += cb.b0.len();
        }
    }
    let mut colptr = Vec::with_capacity(ncols + 1);
    let mut rowval = Vec::new();
    let mut nzval = Vec::new();
    colptr.push(0usize);
    for col in &mut per_col {
        col.sort_by_key(|&(r, _)| r);
        for &(r, v) in col.iter() {
            rowval.push(r);
            nzval.push(v);
        }
        colptr.push(rowval.len());
    }
    let a = CscMatrix::new(nrows, ncols, colptr, rowval, nzval);

    let mut q = vec![0.0f64; ncols];
    if let Some(obj) = &problem.objective {
        for (id, coef) in &obj.terms {
            let var = &problem.vars[id.0];
            if coef.shape() != (var.rows, var.cols) {
                return Err(LmiError::ShapeMismatch(format!(
                    "objective coefficient for '{}' has wrong shape",
                    var.name
                )));
            }
            for t in 0..var.coords() {
                let basis = var.basis(t);
                q[problem.coord_offset[id.0] + t] += basis.dot(coef);
            }
        }
    }

    let p = CscMatrix::zeros((ncols, ncols));
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(options.max_iter)
        .tol_gap_abs(options.tol)
        .tol_gap_rel(options.tol)
        .tol_feas(options.tol)
        .build()
        .map_err(|e| LmiError::Backend(e.to_string()))?;
    let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings)
        .map_err(|e| LmiError::Backend(format!("{e:?}")))?;
    solver.solve();

    let status = solver.solution.status;
    let assignment = problem.unpack(&solver.solution.x);
    let report = verify_with_margin(&assignment, &problem.blocks, &problem.vars, applied_margin);
    let minimizing = problem.objective.is_some();
    let objective = minimizing.then_some(solver.solution.obj_val);
    let duality_gap = minimizing.then(|| (solver.solution.obj_val - solver.solution.obj_val_dual).abs());

    let feasibility_ok = report.worst >= -1e-7 * (1.0 + assignment.norm());
    let mapped = match status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => {
            if feasibility_ok {
                SdpStatus::Feasible
            } else {
                SdpStatus::Inaccurate
            }
        }
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SdpStatus::Infeasible,
        _ => SdpStatus::Inaccurate,
    };

    Ok(SdpOutcome {
        status: mapped,
        assignment,
        worst_violation: report.worst,
        objective,
        iterations: solver.info.iterations,
        margin: applied_margin,
        duality_gap,
        backend_status: format!("{status:?}"),
    })
}

/// Per-block violation at an assignment: the minimum eigenvalue of the block
/// oriented to `⪰ 0` form, after the margin shift.
#[derive(Debug, Clone)]
pub struct Violation {
    pub block: usize,
    pub name: String,
    pub min_eig_after_shift: f64,
}

#[derive(Debug, Clone)]
pub struct ViolationReport {
    pub per_block: Vec<Violation>,
    pub worst: f64,
}

impl ViolationReport {
    pub fn worst_block(&self) -> Option<&Violation> {
        self.per_block
            .iter()
            .min_by(|a, b| a.min_eig_after_shift.total_cmp(&b.min_eig_after_shift))
    }
}

/// Recompute every block eigenvalue at `asg`, independent of the solver.
/// Uses the default strict margin; see [`verify_with_margin`].
pub fn verify(asg: &Assignment, blocks: &[LmiBlock], vars: &[MatVar]) -> ViolationReport {
    verify_with_margin(asg, blocks, vars, SolveOptions::default().margin)
}

pub fn verify_with_margin(
    asg: &Assignment,
    blocks: &[LmiBlock],
    vars: &[MatVar],
    default_margin: f64,
) -> ViolationReport {
    let mut per_block = Vec::with_capacity(blocks.len());
    let mut worst = f64::INFINITY;
    for (i, blk) in blocks.iter().enumerate() {
        let m = blk.eval(asg);
        let scale = blk.scale(vars);
        let delta = if blk.sense.strict() {
            blk.margin.unwrap_or(default_margin) * scale
        } else {
            0.0
        };
        let oriented = if blk.sense.geq() { m } else { -m };
        let min_eig = sorted_symmetric_eigen(&oriented)
            .map(|(vals, _)| vals.first().copied().unwrap_or(f64::INFINITY))
            .unwrap_or(f64::NEG_INFINITY);
        let v = (min_eig - delta) / scale;
        worst = worst.min(v);
        per_block.push(Violation {
            block: i,
            name: blk.name.clone(),
            min_eig_after_shift: v,
        });
    }
    if per_block.is_empty() {
        worst = 0.0;
    }
    ViolationReport { per_block, worst }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn svec_smat_roundtrip_exact() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for n in [1usize, 2, 3, 7] {
            for _ in 0..50 {
                let raw = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1e3..1e3));
                let m = &raw + raw.transpose();
                let rt = smat(&svec(&m));
                assert_eq!(rt, m, "round trip must be bitwise exact");
            }
        }
    }

    #[test]
    fn triangle_indexing() {
        assert_eq!(triangle_index(3, 0), (0, 0));
        assert_eq!(triangle_index(3, 1), (0, 1));
        assert_eq!(triangle_index(3, 2), (1, 1));
        assert_eq!(triangle_index(3, 5), (2, 2));
        assert_eq!(diag_svec_rows(3), vec![0, 2, 5]);
    }

    #[test]
    fn min_trace_with_floor_is_identity() {
        // one sym var X (2x2), X - I ⪰ 0, minimize trace X → X = I
        let x = MatVar::symmetric(0, 2, "X");
        let id = x.id;
        let blk = LmiBlock::new("X - I ⪰ 0", 2, Sense::Geq, vec![id], move |a: &Assignment| {
            a.get(id) - DMatrix::identity(2, 2)
        });
        let obj = LinearObjective {
            terms: vec![(id, DMatrix::identity(2, 2))],
        };
        let p = build_problem(vec![x], vec![blk], Some(obj)).unwrap();
        let out = solve(&p, SolveOptions::default()).unwrap();
        assert_eq!(out.status, SdpStatus::Feasible);
        assert!((out.assignment.get(id) - DMatrix::identity(2, 2)).norm() < 1e-6);
        assert!(out.duality_gap.unwrap() <= 1e-7 * (1.0 + out.objective.unwrap().abs()));
    }

    #[test]
    fn scalar_lyapunov_feasibility() {
        // A = -1: sym(aY) ≺ 0 with Y ≻ 0 — any positive Y works
        let y = MatVar::symmetric(0, 1, "Y").psd(1e-6);
        let id = y.id;
        let blk = LmiBlock::new("sym(aY)", 1, Sense::LeqStrict, vec![id], move |a: &Assignment| {
            a.get(id) * (-2.0)
        });
        let p = build_problem(vec![y], vec![blk], None).unwrap();
        let out = solve(&p, SolveOptions::default()).unwrap();
        assert_eq!(out.status, SdpStatus::Feasible);
        assert!(out.assignment.get(id)[(0, 0)] > 0.0);
    }

    #[test]
    fn contradictory_cones_infeasible() {
        // X ⪰ I and -X ⪰ 0
        let x = MatVar::symmetric(0, 2, "X");
        let id = x.id;
        let b1 = LmiBlock::new("X - I", 2, Sense::Geq, vec![id], move |a: &Assignment| {
            a.get(id) - DMatrix::identity(2, 2)
        });
        let b2 = LmiBlock::new("-X", 2, Sense::Geq, vec![id], move |a: &Assignment| -a.get(id));
        let p = build_problem(vec![x], vec![b1, b2], None).unwrap();
        let out = solve(&p, SolveOptions::default()).unwrap();
        assert_eq!(out.status, SdpStatus::Infeasible);
        // certificate-level report: the returned point cannot satisfy both
        let rep = verify(&out.assignment, &p.blocks, &p.vars);
        assert!(rep.worst < 0.0);
    }

    #[test]
    fn bounded_real_scalar_against_norm_oracle() {
        // A=-1, B=1, C=1: true Hinf norm is 1
        let a = dmatrix![-1.0];
        let bd = dmatrix![1.0];
        let c = dmatrix![1.0];
        for (eps, expect_feasible) in [(2.0, true), (0.5, false)] {
            let y = MatVar::symmetric(0, 1, "Y").psd(1e-6);
            let id = y.id;
            let (ac, bdc, cc) = (a.clone(), bd.clone(), c.clone());
            let blk = LmiBlock::new(
                "bounded-real",
                2,
                Sense::LeqStrict,
                vec![id],
                move |asg: &Assignment| {
                    let yv = asg.get(id);
                    let top = &ac * yv;
                    let s11 = &top + top.transpose() + &bdc * bdc.transpose() / (eps * eps);
                    let s21 = &cc * yv;
                    let mut m = DMatrix::zeros(2, 2);
                    m.view_mut((0, 0), (1, 1)).copy_from(&s11);
                    m.view_mut((1, 0), (1, 1)).copy_from(&s21);
                    m.view_mut((0, 1), (1, 1)).copy_from(&s21.transpose());
                    m[(1, 1)] = -1.0;
                    m
                },
            );
            let p = build_problem(vec![y], vec![blk], None).unwrap();
            let out = solve(&p, SolveOptions::default()).unwrap();
            let oracle = crate::analysis::hinf_norm(&a, &bd, &c, &dmatrix![0.0]).unwrap();
            assert!((oracle - 1.0).abs() < 1e-4);
            if expect_feasible {
                assert_eq!(out.status, SdpStatus::Feasible, "eps={eps}");
                let rep = verify(&out.assignment, &p.blocks, &p.vars);
                assert!(rep.worst >= -1e-7 * (1.0 + out.assignment.norm()));
            } else {
                assert_eq!(out.status, SdpStatus::Infeasible, "eps={eps}");
            }
        }
    }

    #[test]
    fn verify_flags_perturbed_assignment() {
        let x = MatVar::symmetric(0, 2, "X");
        let id = x.id;
        let blk = LmiBlock::new("X - I", 2, Sense::Geq, vec![id], move |a: &Assignment| {
            a.get(id) - DMatrix::identity(2, 2)
        });
        let p = build_problem(vec![x], vec![blk], None).unwrap();
        let mut asg = Assignment::zero(&p.vars);
        asg.set(id, DMatrix::identity(2, 2) * 2.0);
        assert!(verify(&asg, &p.blocks, &p.vars).worst >= 0.0);
        asg.set(id, dmatrix![2.0, 0.0; 0.0, 0.5]);
        let rep = verify(&asg, &p.blocks, &p.vars);
        assert!(rep.worst < 0.0);
        assert_eq!(rep.worst_block().unwrap().block, 0);
    }

    #[test]
    fn non_affine_block_rejected() {
        let x = MatVar::symmetric(0, 1, "X");
        let id = x.id;
        let blk = LmiBlock::new("X²", 1, Sense::Geq, vec![id], move |a: &Assignment| {
            a.get(id) * a.get(id)
        });
        assert!(matches!(
            build_problem(vec![x], vec![blk], None),
            Err(LmiError::NotAffine(_))
        ));
    }

    #[test]
    fn dump_contains_triplets() {
        let x = MatVar::symmetric(0, 2, "X");
        let id = x.id;
        let blk = LmiBlock::new("X - I", 2, Sense::Geq, vec![id], move |a: &Assignment| {
            a.get(id) - DMatrix::identity(2, 2)
        });
        let p = build_problem(vec![x], vec![blk], None).unwrap();
        let dump = p.dump_canonical();
        // constant entries carry var-entry = -1; X has 3 coefficient columns
        assert!(dump.lines().any(|l| l.split_whitespace().nth(3) == Some("-1")));
        assert!(dump.lines().any(|l| l.split_whitespace().nth(3) == Some("0")));
        assert!(dump.lines().count() > 4);
    }
}
