//! Continuous algebraic Riccati equation `AᵀP + PA - P S P + Q = 0` via
//! ordered Schur decomposition of the Hamiltonian, plus the PBH tests backing
//! the standing assumptions (stabilizability / detectability).
//!
//! `S` is the quadratic term `B R1 Bᵀ`; passing `S` directly lets the same
//! solver serve both the full-order local equation and the reduced equation
//! in a projected basis.

use nalgebra::{Complex, DMatrix};
use thiserror::Error;

use crate::linalg::{
    self, complex_eigenvalues, cond_2, min_symmetric_eig, order_schur, psd_sqrt, real_schur,
    sigma_max, solve_lu, solve_lyapunov, sym_part, LinalgError,
};

#[derive(Debug, Error)]
pub enum RiccatiError {
    #[error("assumption violated: {0}")]
    AssumptionViolated(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("bad problem data: {0}")]
    BadData(String),
}

impl From<LinalgError> for RiccatiError {
    fn from(e: LinalgError) -> Self {
        RiccatiError::NumericalFailure(e.to_string())
    }
}

/// Which PBH surrogate was applied for the observability-side assumption.
pub const ASSUMPTION_CHECKS: &str =
    "stabilizability of (A, S^(1/2)) and detectability of (Q^(1/2), A)";

/// CARE data: `AᵀP + PA - P S P + Q = 0` with `S, Q ⪰ 0`.
#[derive(Debug, Clone)]
pub struct CareProblem {
    pub a: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub q: DMatrix<f64>,
}

impl CareProblem {
    pub fn new(a: DMatrix<f64>, s: DMatrix<f64>, q: DMatrix<f64>) -> Result<Self, RiccatiError> {
        let n = a.nrows();
        if a.ncols() != n || s.shape() != (n, n) || q.shape() != (n, n) {
            return Err(RiccatiError::BadData(format!(
                "A {}x{}, S {}x{}, Q {}x{} are not conformal",
                a.nrows(),
                a.ncols(),
                s.nrows(),
                s.ncols(),
                q.nrows(),
                q.ncols()
            )));
        }
        for (name, m) in [("S", &s), ("Q", &q)] {
            if linalg::max_abs_asymmetry(m) > 1e-10 * m.norm().max(1.0) {
                return Err(RiccatiError::BadData(format!("{name} is not symmetric")));
            }
            let lo = min_symmetric_eig(m)?;
            if lo < -1e-9 * sigma_max(m).max(1.0) {
                return Err(RiccatiError::BadData(format!(
                    "{name} is not positive semidefinite (min eig {lo:.3e})"
                )));
            }
        }
        Ok(Self {
            a,
            s: sym_part(&s),
            q: sym_part(&q),
        })
    }
}

/// The stabilizing solution with its certificates.
#[derive(Debug, Clone)]
pub struct CareSolution {
    pub p: DMatrix<f64>,
    /// Frobenius norm of `AᵀP + PA - P S P + Q`.
    pub residual: f64,
    /// Eigenvalues of `A - S P`, all in the open left half-plane.
    pub closed_loop_eigs: Vec<Complex<f64>>,
}

pub fn care_residual(p: &CareProblem, x: &DMatrix<f64>) -> f64 {
    (p.a.transpose() * x + x * &p.a - x * &p.s * x + &p.q).norm()
}

/// PBH controllability of `(A, B)` at every eigenvalue of `A`
/// (rank tolerance `1e-8 · ‖[A B]‖₂`).
pub fn is_controllable(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    linalg::pbh_all(a, b, false)
}

/// PBH stabilizability of `(A, B)`: the test restricted to eigenvalues with
/// nonnegative real part.
pub fn is_stabilizable(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    linalg::pbh_all(a, b, true)
}

/// The assumption-A2 surrogate actually enforced by the toolkit: PBH of
/// `(Q^(1/2), A)` at every non-stable eigenvalue of `A`, i.e. detectability.
/// (Unobservable but stable modes do not prevent the stabilizing Riccati
/// solution; see [`ASSUMPTION_CHECKS`].)
pub fn is_observable_sqrt_q(q: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<bool, RiccatiError> {
    let qs = psd_sqrt(&sym_part(q))?;
    Ok(linalg::pbh_all(&a.transpose(), &qs.transpose(), true))
}

/// Full PBH observability of `(Q^(1/2), A)` at every eigenvalue.
pub fn is_fully_observable_sqrt_q(
    q: &DMatrix<f64>,
    a: &DMatrix<f64>,
) -> Result<bool, RiccatiError> {
    let qs = psd_sqrt(&sym_part(q))?;
    Ok(linalg::pbh_all(&a.transpose(), &qs.transpose(), false))
}

/// Solve the CARE for its unique stabilizing positive definite solution.
///
/// Ordered Schur form of the Hamiltonian `[[A, -S], [-Q, -Aᵀ]]` selects the
/// stable invariant subspace, followed by one Newton (Kleinman) refinement
/// pass to restore residual lost to subspace conditioning.
pub fn solve_care(p: &CareProblem) -> Result<CareSolution, RiccatiError> {
    let n = p.a.nrows();
    let s_half = psd_sqrt(&p.s)?;
    if !is_stabilizable(&p.a, &s_half) {
        return Err(RiccatiError::AssumptionViolated(format!(
            "(A, S^(1/2)) is not stabilizable; checks applied: {ASSUMPTION_CHECKS}"
        )));
    }
    if !is_observable_sqrt_q(&p.q, &p.a)? {
        return Err(RiccatiError::AssumptionViolated(format!(
            "(Q^(1/2), A) is not detectable; checks applied: {ASSUMPTION_CHECKS}"
        )));
    }

    let mut ham = DMatrix::zeros(2 * n, 2 * n);
    ham.view_mut((0, 0), (n, n)).copy_from(&p.a);
    ham.view_mut((0, n), (n, n)).copy_from(&(-&p.s));
    ham.view_mut((n, 0), (n, n)).copy_from(&(-&p.q));
    ham.view_mut((n, n), (n, n)).copy_from(&(-p.a.transpose()));

    let (qs, ts) = real_schur(&ham)?;
    let (qs, _, dim) = order_schur(&qs, &ts, |l| l.re < 0.0)
        .map_err(|e| RiccatiError::NumericalFailure(e.to_string()))?;
    if dim != n {
        return Err(RiccatiError::NumericalFailure(format!(
            "Hamiltonian has {dim} stable eigenvalues, expected {n} \
             (eigenvalues on the imaginary axis?)"
        )));
    }
    let u11 = qs.view((0, 0), (n, n)).into_owned();
    let u21 = qs.view((n, 0), (n, n)).into_owned();
    if cond_2(&u11) > 1e12 {
        return Err(RiccatiError::NumericalFailure(
            "stable-subspace basis inversion is ill-conditioned (cond > 1e12)".into(),
        ));
    }
    // P = U21 U11^{-1}, via U11ᵀ Pᵀ = U21ᵀ
    let pt = solve_lu(&u11.transpose(), &u21.transpose())?;
    let mut x = sym_part(&pt.transpose());

    // one Kleinman step: (A - S X)ᵀ X⁺ + X⁺ (A - S X) + X S X + Q = 0
    let acl = &p.a - &p.s * &x;
    if let Ok(refined) = solve_lyapunov(&acl, &(&x * &p.s * &x + &p.q)) {
        if care_residual(p, &refined) < care_residual(p, &x) {
            x = refined;
        }
    }

    let residual = care_residual(p, &x);
    if residual > 1e-8 * (1.0 + x.norm().powi(2)) {
        return Err(RiccatiError::NumericalFailure(format!(
            "Riccati residual {residual:.3e} exceeds tolerance"
        )));
    }
    let closed_loop_eigs = complex_eigenvalues(&(&p.a - &p.s * &x));
    if closed_loop_eigs.iter().any(|l| l.re >= 0.0) {
        return Err(RiccatiError::NumericalFailure(
            "closed loop A - S P is not Hurwitz".into(),
        ));
    }
    let pmin = min_symmetric_eig(&x)?;
    if pmin <= 0.0 {
        return Err(RiccatiError::NumericalFailure(format!(
            "solution is not positive definite (min eig {pmin:.3e})"
        )));
    }
    Ok(CareSolution {
        p: x,
        residual,
        closed_loop_eigs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn scalar_care_a0() {
        let p = CareProblem::new(dmatrix![0.0], dmatrix![1.0], dmatrix![1.0]).unwrap();
        let sol = solve_care(&p).unwrap();
        assert!((sol.p[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((sol.closed_loop_eigs[0].re + 1.0).abs() < 1e-12);
    }

    #[test]
    fn scalar_care_a1_q3() {
        let p = CareProblem::new(dmatrix![1.0], dmatrix![1.0], dmatrix![3.0]).unwrap();
        let sol = solve_care(&p).unwrap();
        assert!((sol.p[(0, 0)] - 3.0).abs() < 1e-12);
        assert!((sol.closed_loop_eigs[0].re + 2.0).abs() < 1e-12);
    }

    #[test]
    fn example1_agent_care() {
        let a = dmatrix![0.0, 1.0; -1.0, -1.0];
        let b = dmatrix![0.0; 1.0];
        let s = &b * b.transpose(); // R1 = 1
        let p = CareProblem::new(a, s, DMatrix::identity(2, 2)).unwrap();
        let sol = solve_care(&p).unwrap();
        assert!(sol.residual <= 1e-8 * (1.0 + sol.p.norm().powi(2)));
        assert!(sol.closed_loop_eigs.iter().all(|l| l.re < 0.0));
    }

    #[test]
    fn controllability_examples() {
        assert!(is_controllable(&dmatrix![0.0], &dmatrix![1.0]));
        assert!(!is_controllable(&DMatrix::identity(2, 2), &dmatrix![1.0; 0.0]));
        let a = dmatrix![0.0, 1.0; -1.0, -1.0];
        let b = dmatrix![0.0; 1.0];
        assert!(is_controllable(&a, &b));
    }

    #[test]
    fn observability_surrogate_examples() {
        let a = dmatrix![0.0, 1.0; -1.0, -1.0];
        assert!(is_observable_sqrt_q(&DMatrix::identity(2, 2), &a).unwrap());
        // Q = 0 with an imaginary-axis eigenvalue is not detectable
        let osc = dmatrix![0.0, 1.0; -1.0, 0.0];
        assert!(!is_observable_sqrt_q(&DMatrix::zeros(2, 2), &osc).unwrap());
        // Q1 = nu q1 nuᵀ along the unstable direction of diag(1, -2):
        // detectable (the A2 surrogate) though not fully observable.
        let ad = dmatrix![1.0, 0.0; 0.0, -2.0];
        let q1 = dmatrix![3.0, 0.0; 0.0, 0.0];
        assert!(is_observable_sqrt_q(&q1, &ad).unwrap());
        assert!(!is_fully_observable_sqrt_q(&q1, &ad).unwrap());
    }

    #[test]
    fn unstabilizable_rejected() {
        // unstable mode decoupled from the input
        let a = dmatrix![1.0, 0.0; 0.0, -1.0];
        let s = dmatrix![0.0, 0.0; 0.0, 1.0];
        let p = CareProblem::new(a, s, DMatrix::identity(2, 2)).unwrap();
        assert!(matches!(
            solve_care(&p),
            Err(RiccatiError::AssumptionViolated(_))
        ));
    }

    #[test]
    fn indefinite_q_rejected() {
        let bad = CareProblem::new(dmatrix![0.0], dmatrix![1.0], dmatrix![-1.0]);
        assert!(matches!(bad, Err(RiccatiError::BadData(_))));
    }
}
