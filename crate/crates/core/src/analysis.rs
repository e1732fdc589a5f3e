//! Modal decomposition of the closed loop and H∞/H2 norms.
//!
//! Diagonalizing `K = U Γ Uᵀ` splits the `Nn`-state loop into `N`
//! independent subsystems `(A - B(F1 + γᵢ F2), B_d, C - D(F1 + γᵢ F2))`;
//! the global H∞ norm is the max over modes and the global H2 norm the
//! root-sum-square. All norm work happens at agent order `n`.

use nalgebra::{Complex, DMatrix};
use thiserror::Error;

use crate::linalg::{
    self, complex_eigenvalues, real_schur, sigma_max, solve_lyapunov, spectral_abscissa, CMatrix,
    LinalgError,
};
use crate::mas::{AgentModel, HierGain};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("system is not Hurwitz (spectral abscissa {0:.3e})")]
    Unstable(f64),
    #[error("H-infinity bracket failure: {0}")]
    BracketFailure(String),
    #[error("mode {index} is unstable (spectral abscissa {abscissa:.3e})")]
    ModeUnstable { index: usize, abscissa: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// One modal subsystem of the transformed closed loop.
#[derive(Debug, Clone)]
pub struct ModalSubsystem {
    pub index: usize,
    pub gamma: f64,
    pub a: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub bd: DMatrix<f64>,
}

/// Per-mode and aggregated norms of the closed loop.
#[derive(Debug, Clone)]
pub struct NormReport {
    pub gammas: Vec<f64>,
    pub per_mode_hinf: Vec<f64>,
    pub per_mode_h2sq: Vec<f64>,
    /// Spectral abscissa per mode.
    pub stability: Vec<f64>,
    pub global_hinf: f64,
    pub global_h2: f64,
}

/// Split the closed loop into its `N` modal subsystems, γ ascending.
pub fn modal_decompose(agent: &AgentModel, gain: &HierGain) -> Vec<ModalSubsystem> {
    gain.k
        .gammas()
        .iter()
        .enumerate()
        .map(|(index, &gamma)| {
            let fg = gain.modal_gain(gamma);
            ModalSubsystem {
                index,
                gamma,
                a: &agent.a - &agent.b * &fg,
                c: &agent.c - &agent.d * &fg,
                bd: agent.bd.clone(),
            }
        })
        .collect()
}

/// Frequency-response gain `σ_max(C (jωI - A)^{-1} B + D)`.
pub fn frequency_gain(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
    omega: f64,
) -> f64 {
    let n = a.nrows();
    let mut pencil = CMatrix::from_fn(n, n, |i, j| Complex::new(-a[(i, j)], 0.0));
    for i in 0..n {
        pencil[(i, i)] += Complex::new(0.0, omega);
    }
    let bc = CMatrix::from_fn(n, b.ncols(), |i, j| Complex::new(b[(i, j)], 0.0));
    let x = pencil.lu().solve(&bc).expect("jωI - A is nonsingular for Hurwitz A");
    let g = CMatrix::from_fn(c.nrows(), b.ncols(), |i, j| {
        (0..n).map(|k| Complex::new(c[(i, k)], 0.0) * x[(k, j)]).sum::<Complex<f64>>()
            + Complex::new(d[(i, j)], 0.0)
    });
    sigma_max(&linalg::embed_complex(&g))
}

/// Does the bounded-real Hamiltonian at level γ have an imaginary-axis
/// eigenvalue (i.e. is `‖G‖∞ ≥ γ`)?
fn hamiltonian_crosses(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
    gamma: f64,
) -> Result<bool, AnalysisError> {
    let n = a.nrows();
    let p = c.nrows();
    let m = b.ncols();
    // R = γ²I - DᵀD must stay positive definite along the bracket
    let r = DMatrix::identity(m, m) * gamma * gamma - d.transpose() * d;
    let rinv = r
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| AnalysisError::BracketFailure("γ²I - DᵀD singular".into()))?;
    let a_ham = a + b * &rinv * d.transpose() * c;
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&a_ham);
    h.view_mut((0, n), (n, n)).copy_from(&(b * &rinv * b.transpose()));
    let s = DMatrix::identity(p, p) + d * &rinv * d.transpose();
    h.view_mut((n, 0), (n, n)).copy_from(&(-(c.transpose() * s * c)));
    h.view_mut((n, n), (n, n)).copy_from(&(-a_ham.transpose()));
    let eigs = h.complex_eigenvalues();
    Ok(eigs.iter().any(|l| l.re.abs() <= 1e-8 * (1.0 + l.norm())))
}

/// H∞ norm by bisection on the Hamiltonian imaginary-axis test, relative
/// accuracy 1e-6.
///
/// The initial bracket follows the frequency samples at ω = 0 and the pole
/// frequencies (lower) and `2‖C‖‖B‖/|abscissa| + ‖D‖` doubled until the test
/// clears (upper).
pub fn hinf_norm(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
) -> Result<f64, AnalysisError> {
    let abscissa = spectral_abscissa(a);
    if abscissa >= -1e-9 {
        return Err(AnalysisError::Unstable(abscissa));
    }
    if sigma_max(b) == 0.0 || sigma_max(c) == 0.0 {
        return Ok(sigma_max(d));
    }
    let mut lo = 0.0f64;
    let mut omegas = vec![0.0];
    omegas.extend(a.complex_eigenvalues().iter().map(|l| l.im.abs()));
    for w in omegas {
        lo = lo.max(frequency_gain(a, b, c, d, w));
    }
    let mut hi = 2.0 * sigma_max(c) * sigma_max(b) / abscissa.abs() + sigma_max(d);
    hi = hi.max(lo * 2.0).max(1e-12);
    let mut doublings = 0;
    while hamiltonian_crosses(a, b, c, d, hi)? {
        hi *= 2.0;
        doublings += 1;
        if doublings > 200 {
            return Err(AnalysisError::BracketFailure(
                "upper bound kept crossing after 200 doublings".into(),
            ));
        }
    }
    let mut lo = (lo * (1.0 - 1e-9)).max(sigma_max(d));
    while hi - lo > 1e-6 * hi {
        let mid = 0.5 * (hi + lo);
        if hamiltonian_crosses(a, b, c, d, mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (hi + lo))
}

/// H2 norm `√trace(C X Cᵀ)` with `A X + X Aᵀ + B Bᵀ = 0` solved by the
/// Schur-based Lyapunov solver.
pub fn h2_norm(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> Result<f64, AnalysisError> {
    let abscissa = spectral_abscissa(a);
    if abscissa >= -1e-9 {
        return Err(AnalysisError::Unstable(abscissa));
    }
    let q = b * b.transpose();
    let x = solve_lyapunov(&a.transpose(), &q)?;
    let res = linalg::lyapunov_residual(&a.transpose(), &q, &x);
    if res > 1e-9 * (1.0 + x.norm()) {
        return Err(AnalysisError::BracketFailure(format!(
            "Lyapunov residual {res:.3e} exceeds tolerance"
        )));
    }
    let e = c * x * c.transpose();
    Ok(e.trace().max(0.0).sqrt())
}

/// Per-mode norms and the max / root-sum-square aggregates.
pub fn global_norms(agent: &AgentModel, gain: &HierGain) -> Result<NormReport, AnalysisError> {
    let modes = modal_decompose(agent, gain);
    let mut report = NormReport {
        gammas: modes.iter().map(|m| m.gamma).collect(),
        per_mode_hinf: Vec::with_capacity(modes.len()),
        per_mode_h2sq: Vec::with_capacity(modes.len()),
        stability: Vec::with_capacity(modes.len()),
        global_hinf: 0.0,
        global_h2: 0.0,
    };
    let zero_d = DMatrix::zeros(agent.p(), agent.nd());
    for m in &modes {
        let abscissa = spectral_abscissa(&m.a);
        if abscissa >= -1e-9 {
            return Err(AnalysisError::ModeUnstable {
                index: m.index,
                abscissa,
            });
        }
        report.stability.push(abscissa);
        let hinf = hinf_norm(&m.a, &m.bd, &m.c, &zero_d)?;
        let h2 = h2_norm(&m.a, &m.bd, &m.c)?;
        report.per_mode_hinf.push(hinf);
        report.per_mode_h2sq.push(h2 * h2);
    }
    report.global_hinf = report.per_mode_hinf.iter().copied().fold(0.0, f64::max);
    report.global_h2 = report.per_mode_h2sq.iter().sum::<f64>().sqrt();
    Ok(report)
}

/// Dense eigenvalues with a deterministic (re, im) sort; convergence
/// failures are surfaced rather than approximated.
pub fn spectrum(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>, AnalysisError> {
    let (_, t) = real_schur(m)?;
    Ok(complex_eigenvalues(&t))
}
