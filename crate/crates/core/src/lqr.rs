//! Hierarchical decentralized LQR design.
//!
//! The four-step procedure: solve the local Riccati equation
//! `P1 A + Aᵀ P1 - P1 B R1 Bᵀ P1 + Q1 = 0`, pick `K ⪰ 0`, set
//! `Q2 = P1 B R2 Bᵀ P1`, and read off `F1 = R1 Bᵀ P1`, `F2 = R2 Bᵀ P1`.
//! With `Q̃ = I ⊗ Q1 + K ⊗ Q2` and `R̃⁻¹ = I ⊗ R1 + K ⊗ R2` the lifted
//! `P̃ = I ⊗ P1` solves the global Riccati equation, so the structured gain
//! is globally optimal while all computation stays at agent order.
//!
//! The reduced-order variant restricts the design to an invariant subspace
//! spanned by left eigenvectors of selected (unstable or undesirable)
//! eigenvalues of `A`; the whole closed-loop spectrum is then predicted in
//! closed form, mode by mode.

use std::sync::Arc;

use nalgebra::{Complex, DMatrix, DVector};
use thiserror::Error;

use crate::graph::Interconnection;
use crate::linalg::{
    complex_eigenvalues, complex_null_vector, min_symmetric_eig, order_schur, real_schur,
    sigma_max, sort_complex, sym_part, CMatrix, LinalgError,
};
use crate::mas::{AgentModel, HierGain, MasError};
use crate::riccati::{self, CareProblem, RiccatiError};

#[derive(Debug, Error)]
pub enum LqrError {
    #[error("K is not positive semidefinite (min eigenvalue {0:.3e})")]
    KNotPsd(f64),
    #[error("R{0} is not positive definite")]
    RNotPd(usize),
    #[error("(A, B) is not controllable")]
    NotControllable,
    #[error("eigenvalues of A are not distinct: |λ_{0} - λ_{1}| below tolerance")]
    RepeatedEigenvalues(usize, usize),
    #[error("selection is not closed under conjugation (λ = {0} selected without its conjugate)")]
    SelectionNotConjugateClosed(Complex<f64>),
    #[error("selection picked every eigenvalue; a reduced design needs q < n")]
    AllSelected,
    #[error("selection is empty{}", if *.all_stable { " (all eigenvalues unselected; spectrum is stable)" } else { "" })]
    NoneSelected { all_stable: bool },
    #[error("(Qt1^(1/2), reduced A) fails the observability surrogate")]
    ReducedObservabilityFail,
    #[error("unstable mode is uncontrollable through B: r1 = {0:.3e} ≤ 1e-12")]
    R1ProjectionSingular(f64),
    #[error("{0} is not an eigenpair of Aᵀ (residual {1:.3e})")]
    NotAnEigenpair(Complex<f64>, f64),
    #[error(transparent)]
    Riccati(#[from] RiccatiError),
    #[error(transparent)]
    Mas(#[from] MasError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Weighting matrices defining `Q̃ = I ⊗ Q1 + K ⊗ Q2` and
/// `R̃⁻¹ = I ⊗ R1 + K ⊗ R2`.
#[derive(Debug, Clone)]
pub struct WeightingSpec {
    pub q1: DMatrix<f64>,
    pub q2: DMatrix<f64>,
    pub r1: DMatrix<f64>,
    pub r2: DMatrix<f64>,
}

impl WeightingSpec {
    pub fn new(
        q1: DMatrix<f64>,
        q2: DMatrix<f64>,
        r1: DMatrix<f64>,
        r2: DMatrix<f64>,
    ) -> Result<Self, LqrError> {
        for (m, which) in [(&r1, 1usize), (&r2, 2)] {
            if min_symmetric_eig(m)? <= 1e-12 {
                return Err(LqrError::RNotPd(which));
            }
        }
        for q in [&q1, &q2] {
            let lo = min_symmetric_eig(q)?;
            if lo < -1e-9 * sigma_max(q).max(1.0) {
                return Err(LqrError::Riccati(RiccatiError::BadData(format!(
                    "Q weight is not positive semidefinite (min eig {lo:.3e})"
                ))));
            }
        }
        Ok(Self { q1, q2, r1, r2 })
    }
}

/// A completed hierarchical design.
#[derive(Debug, Clone)]
pub struct LqrDesign {
    pub gain: HierGain,
    pub p1: DMatrix<f64>,
    pub weights: WeightingSpec,
    /// Filled by the reduced-order route (the closed-form mode spectrum).
    pub predicted_global_spectrum: Option<Vec<Complex<f64>>>,
}

/// Step 1 + Step 4: the local Riccati solution and gain `F1 = R1 Bᵀ P1`.
pub fn design_local(
    agent: &AgentModel,
    q1: &DMatrix<f64>,
    r1: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>), LqrError> {
    if !riccati::is_controllable(&agent.a, &agent.b) {
        return Err(LqrError::NotControllable);
    }
    if min_symmetric_eig(r1)? <= 1e-12 {
        return Err(LqrError::RNotPd(1));
    }
    let s = &agent.b * r1 * agent.b.transpose();
    let sol = riccati::solve_care(&CareProblem::new(agent.a.clone(), sym_part(&s), q1.clone())?)?;
    let f1 = r1 * agent.b.transpose() * &sol.p;
    Ok((sol.p, f1))
}

/// The full four-step design for a chosen `K ∈ 𝕂ₛ⁺`.
pub fn design_hierarchical(
    agent: &AgentModel,
    k: Arc<Interconnection>,
    q1: &DMatrix<f64>,
    r1: &DMatrix<f64>,
    r2: &DMatrix<f64>,
) -> Result<LqrDesign, LqrError> {
    if !k.is_psd() {
        return Err(LqrError::KNotPsd(k.gammas().first().copied().unwrap_or(0.0)));
    }
    if min_symmetric_eig(r2)? <= 1e-12 {
        return Err(LqrError::RNotPd(2));
    }
    let (p1, f1) = design_local(agent, q1, r1)?;
    let f2 = r2 * agent.b.transpose() * &p1;
    let q2 = &p1 * &agent.b * r2 * agent.b.transpose() * &p1;
    let weights = WeightingSpec::new(q1.clone(), sym_part(&q2), r1.clone(), r2.clone())?;
    let gain = HierGain::new(f1, f2, k)?;
    Ok(LqrDesign {
        gain,
        p1,
        weights,
        predicted_global_spectrum: None,
    })
}

/// Minimum cost `Σᵢ x₀ᵢᵀ P1 x₀ᵢ`; depends only on `P1`, hence identical for
/// every admissible interconnection.
pub fn optimal_cost(p1: &DMatrix<f64>, x0_list: &[DVector<f64>]) -> f64 {
    x0_list.iter().map(|x0| (x0.transpose() * p1 * x0)[(0, 0)]).sum()
}

/// Left-eigenvector basis of selected eigenvalues of `A`.
///
/// `real_v` is an orthonormal real basis of the invariant subspace of `Aᵀ`
/// spanned by the selected left eigenvectors (complex pairs contribute their
/// real and imaginary parts); `m_real` is the subspace representation,
/// `Aᵀ real_v = real_v · m_real`. The complex columns `v` carry the raw
/// eigenvectors, normalized to unit length with the first sizable component
/// rotated real-positive.
#[derive(Debug, Clone)]
pub struct ReducedBasis {
    pub lambdas: Vec<Complex<f64>>,
    pub v: CMatrix,
    pub real_v: DMatrix<f64>,
    pub m_real: DMatrix<f64>,
    /// `z = V* B` (complex, q x m).
    pub z: CMatrix,
    /// `ẑ = real_vᵀ B`, the real-basis counterpart of `z`.
    pub z_real: DMatrix<f64>,
    pub untouched: Vec<Complex<f64>>,
}

impl ReducedBasis {
    pub fn q(&self) -> usize {
        self.lambdas.len()
    }
}

fn normalize_phase(v: &mut DVector<Complex<f64>>) {
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm > 0.0 {
        *v /= Complex::new(norm, 0.0);
    }
    if let Some(lead) = v.iter().find(|z| z.norm() > 1e-8).copied() {
        let phase = lead / Complex::new(lead.norm(), 0.0);
        *v /= phase;
    }
}

/// Build the reduced basis for the eigenvalues of `A` picked by `select`.
///
/// Requires distinct eigenvalues, a conjugation-closed selection, and
/// `0 < q < n`.
pub fn reduced_basis(
    a: &DMatrix<f64>,
    select: impl Fn(Complex<f64>) -> bool,
) -> Result<ReducedBasis, LqrError> {
    let n = a.nrows();
    let eigs = complex_eigenvalues(a);
    let scale = sigma_max(a).max(1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            if (eigs[i] - eigs[j]).norm() <= 1e-8 * scale {
                return Err(LqrError::RepeatedEigenvalues(i, j));
            }
        }
    }
    let flags: Vec<bool> = eigs.iter().map(|&l| select(l)).collect();
    for (i, &l) in eigs.iter().enumerate() {
        if flags[i] && l.im != 0.0 {
            let conj_ok = eigs
                .iter()
                .enumerate()
                .any(|(j, &m)| flags[j] && (m - l.conj()).norm() <= 1e-8 * scale);
            if !conj_ok {
                return Err(LqrError::SelectionNotConjugateClosed(l));
            }
        }
    }
    let q: usize = flags.iter().filter(|&&f| f).count();
    if q == 0 {
        return Err(LqrError::NoneSelected {
            all_stable: eigs.iter().all(|l| l.re < 0.0),
        });
    }
    if q == n {
        return Err(LqrError::AllSelected);
    }
    let lambdas: Vec<Complex<f64>> = eigs
        .iter()
        .zip(&flags)
        .filter(|(_, &f)| f)
        .map(|(&l, _)| l)
        .collect();
    let untouched: Vec<Complex<f64>> = eigs
        .iter()
        .zip(&flags)
        .filter(|(_, &f)| !f)
        .map(|(&l, _)| l)
        .collect();

    // invariant subspace of Aᵀ for the selected eigenvalue set
    let at = a.transpose();
    let (qs, ts) = real_schur(&at)?;
    let is_selected = |l: Complex<f64>| {
        lambdas.iter().any(|&s| (s - l).norm() <= 1e-6 * scale)
            || lambdas.iter().any(|&s| (s.conj() - l).norm() <= 1e-6 * scale)
    };
    let (qs, ts, dim) = order_schur(&qs, &ts, is_selected)?;
    if dim != q {
        return Err(LqrError::Riccati(RiccatiError::NumericalFailure(format!(
            "selected subspace dimension {dim} does not match selection size {q}"
        ))));
    }
    let real_v = qs.view((0, 0), (n, q)).into_owned();
    let m_real = ts.view((0, 0), (q, q)).into_owned();
    let inv_res = (&at * &real_v - &real_v * &m_real).norm();
    if inv_res > 1e-9 * scale {
        return Err(LqrError::Riccati(RiccatiError::NumericalFailure(format!(
            "invariant-subspace residual {inv_res:.3e}"
        ))));
    }

    // complex left eigenvectors: Aᵀ ν = conj(λ) ν with ν = real_v · c
    let mut v = CMatrix::from_element(n, q, Complex::new(0.0, 0.0));
    for (col, &l) in lambdas.iter().enumerate() {
        let mut shifted = CMatrix::from_fn(q, q, |i, j| Complex::new(m_real[(i, j)], 0.0));
        for i in 0..q {
            shifted[(i, i)] -= l.conj();
        }
        let c = complex_null_vector(&shifted);
        let mut nu = DVector::from_fn(n, |i, _| {
            (0..q)
                .map(|r| Complex::new(real_v[(i, r)], 0.0) * c[r])
                .sum::<Complex<f64>>()
        });
        normalize_phase(&mut nu);
        let res = (0..n)
            .map(|i| {
                let ati: Complex<f64> = (0..n)
                    .map(|j| Complex::new(at[(i, j)], 0.0) * nu[j])
                    .sum();
                (ati - l.conj() * nu[i]).norm_sqr()
            })
            .sum::<f64>()
            .sqrt();
        if res > 1e-9 * scale {
            return Err(LqrError::NotAnEigenpair(l, res));
        }
        v.set_column(col, &nu);
    }
    Ok(ReducedBasis {
        lambdas,
        v,
        real_v,
        m_real,
        z: CMatrix::zeros(0, 0),
        z_real: DMatrix::zeros(0, 0),
        untouched,
    })
}

/// Attach the input projections `z = V* B` and `ẑ = realVᵀ B`.
fn with_input(basis: &ReducedBasis, b: &DMatrix<f64>) -> ReducedBasis {
    let mut out = basis.clone();
    let n = b.nrows();
    let m = b.ncols();
    let q = basis.q();
    let mut z = CMatrix::from_element(q, m, Complex::new(0.0, 0.0));
    for r in 0..q {
        for c in 0..m {
            z[(r, c)] = (0..n)
                .map(|i| basis.v[(i, r)].conj() * Complex::new(b[(i, c)], 0.0))
                .sum();
        }
    }
    out.z = z;
    out.z_real = basis.real_v.transpose() * b;
    out
}

/// Reduced-order design: solve the q-order Riccati equation in the real
/// basis, lift `P1 = realV P̂1 realVᵀ`, and predict the full closed-loop
/// spectrum.
pub fn reduced_design(
    agent: &AgentModel,
    k: Arc<Interconnection>,
    basis: &ReducedBasis,
    qt1: &DMatrix<f64>,
    r1: &DMatrix<f64>,
    r2: &DMatrix<f64>,
) -> Result<LqrDesign, LqrError> {
    if !k.is_psd() {
        return Err(LqrError::KNotPsd(k.gammas().first().copied().unwrap_or(0.0)));
    }
    for (m, which) in [(r1, 1usize), (r2, 2)] {
        if min_symmetric_eig(m)? <= 1e-12 {
            return Err(LqrError::RNotPd(which));
        }
    }
    let basis = with_input(basis, &agent.b);
    let m_t = basis.m_real.transpose();
    if !riccati::is_observable_sqrt_q(qt1, &m_t)? {
        return Err(LqrError::ReducedObservabilityFail);
    }
    let s_red = &basis.z_real * r1 * basis.z_real.transpose();
    let sol = riccati::solve_care(&CareProblem::new(m_t, sym_part(&s_red), qt1.clone())?)?;
    let p_hat = sol.p;
    let p1 = &basis.real_v * &p_hat * basis.real_v.transpose();
    let f1 = r1 * agent.b.transpose() * &p1;
    let f2 = r2 * agent.b.transpose() * &p1;
    let q1 = &basis.real_v * qt1 * basis.real_v.transpose();
    let q2 = &p1 * &agent.b * r2 * agent.b.transpose() * &p1;
    let spectrum = predicted_spectrum(&basis, &p_hat, r1, r2, &k, &agent.a);
    let weights = WeightingSpec::new(sym_part(&q1), sym_part(&q2), r1.clone(), r2.clone())?;
    Ok(LqrDesign {
        gain: HierGain::new(f1, f2, k)?,
        p1: sym_part(&p1),
        weights,
        predicted_global_spectrum: Some(spectrum),
    })
}

/// Closed-form spectrum of the reduced design:
/// every mode γ of `K` contributes the q eigenvalues of
/// `Ξ_γ = Mᵀ - ẑ (R1 + γ R2) ẑᵀ P̂1`, and each unselected eigenvalue of `A`
/// keeps multiplicity N.
pub fn predicted_spectrum(
    basis: &ReducedBasis,
    p_hat: &DMatrix<f64>,
    r1: &DMatrix<f64>,
    r2: &DMatrix<f64>,
    k: &Interconnection,
    a: &DMatrix<f64>,
) -> Vec<Complex<f64>> {
    let n_agents = k.n();
    let m_t = basis.m_real.transpose();
    let scale = sigma_max(a).max(1.0);
    let mut out = Vec::with_capacity(n_agents * a.nrows());
    for &gamma in k.gammas() {
        let xi = &m_t - &basis.z_real * (r1 + r2 * gamma) * basis.z_real.transpose() * p_hat;
        out.extend(complex_eigenvalues(&xi));
    }
    // untouched eigenvalues of A, multiplicity N each
    let eigs = complex_eigenvalues(a);
    for &l in &eigs {
        let selected = basis.lambdas.iter().any(|&s| (s - l).norm() <= 1e-6 * scale);
        if !selected {
            for _ in 0..n_agents {
                out.push(l);
            }
        }
    }
    sort_complex(&mut out);
    out
}

/// First-order design for a single real unstable eigenvalue (its left
/// eigenvector `v` is renormalized to unit length, leading component
/// positive):
/// `F = ((λ + √(λ² + q1 r1)) / r1) (I ⊗ R1 Bᵀ v vᵀ + K ⊗ R2 Bᵀ v vᵀ)`
/// with `r1 = vᵀ B R1 Bᵀ v`; the closed-loop spectrum comes in closed form.
pub fn corollary1_gain(
    agent: &AgentModel,
    lambda: f64,
    v: &DVector<f64>,
    q1: f64,
    r1: &DMatrix<f64>,
    r2: &DMatrix<f64>,
    k: Arc<Interconnection>,
) -> Result<(HierGain, Vec<Complex<f64>>), LqrError> {
    let mut v = v.clone();
    let norm = v.norm();
    if norm > 0.0 {
        v /= norm;
    }
    if let Some(lead) = v.iter().find(|x| x.abs() > 1e-8) {
        if *lead < 0.0 {
            v = -v;
        }
    }
    let res = (agent.a.transpose() * &v - &v * lambda).norm();
    let scale = sigma_max(&agent.a).max(1.0);
    if res > 1e-8 * scale {
        return Err(LqrError::NotAnEigenpair(Complex::new(lambda, 0.0), res));
    }
    let bt_v = agent.b.transpose() * &v; // m x 1
    let r1s = (bt_v.transpose() * r1 * &bt_v)[(0, 0)];
    let r2s = (bt_v.transpose() * r2 * &bt_v)[(0, 0)];
    if r1s <= 1e-12 {
        return Err(LqrError::R1ProjectionSingular(r1s));
    }
    let root = (lambda * lambda + q1 * r1s).sqrt();
    let factor = (lambda + root) / r1s;
    let vvt = &v * v.transpose();
    let f1 = r1 * agent.b.transpose() * &vvt * factor;
    let f2 = r2 * agent.b.transpose() * &vvt * factor;

    let mut spectrum = Vec::new();
    for &gamma in k.gammas() {
        spectrum.push(Complex::new(-root - gamma * r2s * (lambda + root) / r1s, 0.0));
    }
    for &l in &complex_eigenvalues(&agent.a) {
        if (l - Complex::new(lambda, 0.0)).norm() > 1e-6 * scale {
            for _ in 0..k.n() {
                spectrum.push(l);
            }
        }
    }
    sort_complex(&mut spectrum);
    Ok((HierGain::new(f1, f2, k)?, spectrum))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph;
    use crate::linalg::spectral_abscissa;
    use crate::mas::{assemble_global, close_loop};
    use nalgebra::dmatrix;

    fn scalar_agent(a: f64, b: f64) -> AgentModel {
        AgentModel::new(
            dmatrix![a],
            dmatrix![b],
            dmatrix![1.0],
            dmatrix![0.0],
            dmatrix![1.0],
        )
        .unwrap()
    }

    fn example1_agent() -> AgentModel {
        AgentModel::new(
            dmatrix![0.0, 1.0; -1.0, -1.0],
            dmatrix![0.0; 1.0],
            dmatrix![1.0, 0.0],
            dmatrix![0.0],
            dmatrix![0.0; 0.0],
        )
        .unwrap()
    }

    #[test]
    fn design_local_scalar_cases() {
        let (p1, f1) = design_local(&scalar_agent(1.0, 1.0), &dmatrix![3.0], &dmatrix![1.0]).unwrap();
        assert!((p1[(0, 0)] - 3.0).abs() < 1e-12);
        assert!((f1[(0, 0)] - 3.0).abs() < 1e-12);
        let (p1, f1) = design_local(&scalar_agent(0.0, 1.0), &dmatrix![1.0], &dmatrix![1.0]).unwrap();
        assert!((p1[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((f1[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn design_local_example1_stable() {
        let agent = example1_agent();
        let (_, f1) = design_local(&agent, &DMatrix::identity(2, 2), &dmatrix![1.0]).unwrap();
        let acl = &agent.a - &agent.b * &f1;
        assert!(spectral_abscissa(&acl) < -0.5);
    }

    #[test]
    fn hierarchical_with_zero_k_decouples() {
        let agent = example1_agent();
        let k = Arc::new(graph::custom_k(DMatrix::zeros(3, 3), &[]).unwrap());
        let d = design_hierarchical(
            &agent,
            k,
            &DMatrix::identity(2, 2),
            &dmatrix![1.0],
            &dmatrix![1.0],
        )
        .unwrap();
        let cl = close_loop(&agent, &d.gain);
        let local = &agent.a - &agent.b * &d.gain.f1;
        let lifted = assemble_global(
            &AgentModel::new(
                local.clone(),
                agent.b.clone(),
                agent.c.clone(),
                agent.d.clone(),
                agent.bd.clone(),
            )
            .unwrap(),
            3,
        );
        assert_eq!(cl.acl, lifted.atil);
    }

    #[test]
    fn hierarchical_q0_block_decoupling() {
        let agent = example1_agent();
        let kmat = dmatrix![1.0, -1.0, 0.0; -1.0, 1.0, 0.0; 0.0, 0.0, 0.0];
        let k = Arc::new(graph::custom_k(kmat, &[(0, 1)]).unwrap());
        let d = design_hierarchical(
            &agent,
            k,
            &DMatrix::identity(2, 2),
            &dmatrix![1.0],
            &dmatrix![1.0],
        )
        .unwrap();
        let cl = close_loop(&agent, &d.gain);
        // agent 3 decoupled: its off-diagonal blocks are exactly zero
        for i in 0..4 {
            for j in 4..6 {
                assert_eq!(cl.acl[(i, j)], 0.0);
                assert_eq!(cl.acl[(j, i)], 0.0);
            }
        }
    }

    #[test]
    fn hierarchical_scalar_spectrum() {
        let agent = scalar_agent(1.0, 1.0);
        let k = Arc::new(graph::path_laplacian(2, 1.0));
        let d = design_hierarchical(&agent, k, &dmatrix![3.0], &dmatrix![1.0], &dmatrix![1.0]).unwrap();
        assert!((d.gain.f1[(0, 0)] - 3.0).abs() < 1e-12);
        assert!((d.gain.f2[(0, 0)] - 3.0).abs() < 1e-12);
        let cl = close_loop(&agent, &d.gain);
        let mut eigs = complex_eigenvalues(&cl.acl);
        sort_complex(&mut eigs);
        assert!((eigs[0].re + 8.0).abs() < 1e-10);
        assert!((eigs[1].re + 2.0).abs() < 1e-10);
    }

    #[test]
    fn k_not_psd_rejected() {
        let agent = scalar_agent(1.0, 1.0);
        let kmat = dmatrix![1.0, -1.0, 0.0; -1.0, 0.0, 1.0; 0.0, 1.0, -1.0];
        let k = Arc::new(graph::custom_k(kmat, &[(0, 1), (1, 2)]).unwrap());
        let r = design_hierarchical(&agent, k, &dmatrix![1.0], &dmatrix![1.0], &dmatrix![1.0]);
        assert!(matches!(r, Err(LqrError::KNotPsd(_))));
    }

    #[test]
    fn optimal_cost_examples() {
        assert_eq!(
            optimal_cost(&dmatrix![1.0], &[dmatrix![1.0].column(0).into_owned(), dmatrix![2.0].column(0).into_owned()]),
            5.0
        );
        let p = DMatrix::identity(2, 2);
        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        let e2 = DVector::from_vec(vec![0.0, 1.0]);
        let e12 = DVector::from_vec(vec![1.0, 1.0]);
        assert_eq!(optimal_cost(&p, &[e1, e2, e12]), 4.0);
    }

    #[test]
    fn cost_invariant_across_k_bitwise() {
        let agent = example1_agent();
        let q1 = DMatrix::identity(2, 2);
        let r = dmatrix![1.0];
        let x0 = vec![
            DVector::from_vec(vec![1.0, 0.0]),
            DVector::from_vec(vec![2.0, 0.0]),
            DVector::from_vec(vec![3.0, 0.0]),
        ];
        let mut costs = Vec::new();
        for q in [0.0, 10.0, 20.0] {
            let kmat = dmatrix![1.0, -1.0, 0.0; -1.0, 1.0 + q, -q; 0.0, -q, q];
            let k = Arc::new(graph::custom_k_auto(kmat).unwrap());
            let d = design_hierarchical(&agent, k, &q1, &r, &r).unwrap();
            costs.push(optimal_cost(&d.p1, &x0));
        }
        assert!(costs.windows(2).all(|w| w[0].to_bits() == w[1].to_bits()));
    }

    #[test]
    fn reduced_basis_diagonal_case() {
        let a = dmatrix![1.0, 0.0; 0.0, -2.0];
        let basis = reduced_basis(&a, |l| l.re > 0.0).unwrap();
        assert_eq!(basis.q(), 1);
        assert!((basis.lambdas[0] - Complex::new(1.0, 0.0)).norm() < 1e-12);
        // left eigenvector is e1
        assert!((basis.v[(0, 0)].re - 1.0).abs() < 1e-10);
        assert!(basis.v[(1, 0)].norm() < 1e-10);
    }

    #[test]
    fn reduced_basis_empty_selection_flags_stable() {
        let a = dmatrix![0.0, 1.0; -1.0, -1.0];
        match reduced_basis(&a, |l| l.re > 0.0) {
            Err(LqrError::NoneSelected { all_stable }) => assert!(all_stable),
            other => panic!("expected NoneSelected, got {other:?}"),
        }
    }

    #[test]
    fn reduced_basis_complex_pair_real_span() {
        // one real unstable + stable complex pair
        let a = dmatrix![2.0, 0.0, 0.0; 0.0, -0.5, 1.0; 0.0, -1.0, -0.5];
        let basis = reduced_basis(&a, |l| l.re < 0.0).unwrap();
        assert_eq!(basis.q(), 2);
        // realV spans the same subspace as Re/Im of V: compare projectors
        let w = &basis.real_v;
        let proj_w = w * w.transpose();
        let mut cols: Vec<DVector<f64>> = Vec::new();
        for c in 0..basis.q() {
            cols.push(DVector::from_fn(3, |i, _| basis.v[(i, c)].re));
            cols.push(DVector::from_fn(3, |i, _| basis.v[(i, c)].im));
        }
        let mut raw = DMatrix::zeros(3, cols.len());
        for (i, c) in cols.iter().enumerate() {
            raw.set_column(i, c);
        }
        let qr = raw.qr();
        let qmat = qr.q().columns(0, 2).into_owned();
        let proj_v = &qmat * qmat.transpose();
        assert!((proj_w - proj_v).norm() < 1e-9);
    }

    #[test]
    fn reduced_basis_rejects_conjugate_splitting() {
        let a = dmatrix![2.0, 0.0, 0.0; 0.0, 1.0, 2.0; 0.0, -2.0, 1.0];
        let r = reduced_basis(&a, |l| l.re > 0.0 && l.im >= 0.0);
        assert!(matches!(r, Err(LqrError::SelectionNotConjugateClosed(_))));
    }

    #[test]
    fn reduced_basis_rejects_all_and_repeated() {
        let a = dmatrix![1.0, 0.0; 0.0, -2.0];
        assert!(matches!(reduced_basis(&a, |_| true), Err(LqrError::AllSelected)));
        let rep = DMatrix::identity(3, 3);
        assert!(matches!(
            reduced_basis(&rep, |l| l.re > 0.0),
            Err(LqrError::RepeatedEigenvalues(_, _))
        ));
    }

    #[test]
    fn reduced_design_diag_example_k0() {
        // A = diag(1,-2), B = [1;1], Qt1 = 3, R1 = R2 = 1, K = 0 (N = 1)
        let agent = AgentModel::new(
            dmatrix![1.0, 0.0; 0.0, -2.0],
            dmatrix![1.0; 1.0],
            dmatrix![1.0, 0.0],
            dmatrix![0.0],
            dmatrix![0.0; 0.0],
        )
        .unwrap();
        let k = Arc::new(graph::custom_k(DMatrix::zeros(1, 1), &[]).unwrap());
        let basis = reduced_basis(&agent.a, |l| l.re > 0.0).unwrap();
        let d = reduced_design(&agent, k, &basis, &dmatrix![3.0], &dmatrix![1.0], &dmatrix![1.0]).unwrap();
        // F1 = 3 [1, 0]
        assert!((d.gain.f1[(0, 0)] - 3.0).abs() < 1e-9);
        assert!(d.gain.f1[(0, 1)].abs() < 1e-9);
        let spec = d.predicted_global_spectrum.as_ref().unwrap();
        // {-2 (mode), -2 (untouched)}
        assert_eq!(spec.len(), 2);
        assert!(spec.iter().all(|l| (l.re + 2.0).abs() < 1e-9 && l.im.abs() < 1e-12));
        // dense closed loop agrees
        let cl = close_loop(&agent, &d.gain);
        let dense = complex_eigenvalues(&cl.acl);
        for (p, g) in spec.iter().zip(dense.iter()) {
            assert!((p - g).norm() < 1e-7);
        }
    }

    #[test]
    fn reduced_design_diag_example_path2() {
        let agent = AgentModel::new(
            dmatrix![1.0, 0.0; 0.0, -2.0],
            dmatrix![1.0; 1.0],
            dmatrix![1.0, 0.0],
            dmatrix![0.0],
            dmatrix![0.0; 0.0],
        )
        .unwrap();
        let k = Arc::new(graph::path_laplacian(2, 1.0));
        let basis = reduced_basis(&agent.a, |l| l.re > 0.0).unwrap();
        let d = reduced_design(&agent, k, &basis, &dmatrix![3.0], &dmatrix![1.0], &dmatrix![1.0]).unwrap();
        let spec = d.predicted_global_spectrum.as_ref().unwrap();
        // modes: γ=0 → -2, γ=2 → -8; untouched -2 ×2  ⇒ {-8, -2, -2, -2}
        assert_eq!(spec.len(), 4);
        assert!((spec[0].re + 8.0).abs() < 1e-9);
        for l in &spec[1..] {
            assert!((l.re + 2.0).abs() < 1e-9);
        }
        let cl = close_loop(&agent, &d.gain);
        let dense = complex_eigenvalues(&cl.acl);
        for (p, g) in spec.iter().zip(dense.iter()) {
            assert!((p - g).norm() < 1e-7);
        }
    }

    #[test]
    fn corollary1_matches_reduced_design() {
        let agent = AgentModel::new(
            dmatrix![1.0, 0.0; 0.0, -2.0],
            dmatrix![1.0; 1.0],
            dmatrix![1.0, 0.0],
            dmatrix![0.0],
            dmatrix![0.0; 0.0],
        )
        .unwrap();
        let k = Arc::new(graph::custom_k(DMatrix::zeros(1, 1), &[]).unwrap());
        let v = DVector::from_vec(vec![1.0, 0.0]);
        let (gain, spec) =
            corollary1_gain(&agent, 1.0, &v, 3.0, &dmatrix![1.0], &dmatrix![1.0], k).unwrap();
        assert!((gain.f1[(0, 0)] - 3.0).abs() < 1e-12);
        assert!(spec.iter().all(|l| (l.re + 2.0).abs() < 1e-12));
    }

    #[test]
    fn corollary1_q1_zero_reflects_lambda() {
        let agent = AgentModel::new(
            dmatrix![1.0, 0.0; 0.0, -2.0],
            dmatrix![1.0; 1.0],
            dmatrix![1.0, 0.0],
            dmatrix![0.0],
            dmatrix![0.0; 0.0],
        )
        .unwrap();
        let k = Arc::new(graph::custom_k(DMatrix::zeros(1, 1), &[]).unwrap());
        let v = DVector::from_vec(vec![1.0, 0.0]);
        let (gain, spec) =
            corollary1_gain(&agent, 1.0, &v, 0.0, &dmatrix![1.0], &dmatrix![1.0], k).unwrap();
        // factor = 2λ / r1 = 2
        assert!((gain.f1[(0, 0)] - 2.0).abs() < 1e-12);
        // mode eigenvalue at γ=0 is -λ
        assert!(spec.iter().any(|l| (l.re + 1.0).abs() < 1e-12));
    }

    #[test]
    fn corollary1_gamma_sweep_monotone() {
        let agent = AgentModel::new(
            dmatrix![1.0, 0.0; 0.0, -2.0],
            dmatrix![1.0; 1.0],
            dmatrix![1.0, 0.0],
            dmatrix![0.0],
            dmatrix![0.0; 0.0],
        )
        .unwrap();
        let k = Arc::new(graph::path_laplacian(3, 1.0));
        let v = DVector::from_vec(vec![1.0, 0.0]);
        let (_, spec) =
            corollary1_gain(&agent, 1.0, &v, 3.0, &dmatrix![1.0], &dmatrix![1.0], k.clone()).unwrap();
        // three distinct mode eigenvalues, decreasing in γ (r2 > 0)
        let mut modes: Vec<f64> = spec
            .iter()
            .filter(|l| (l.re + 2.0).abs() > 1e-9 || {
                // γ=0 mode sits at exactly -2 like the untouched ones; count occurrences instead
                false
            })
            .map(|l| l.re)
            .collect();
        modes.dedup();
        let root = 2.0f64;
        for (i, &gamma) in k.gammas().iter().enumerate() {
            let expect = -root - gamma * (1.0 + root) / 1.0;
            assert!(
                spec.iter().any(|l| (l.re - expect).abs() < 1e-9),
                "mode {i} expected {expect}"
            );
        }
    }

    #[test]
    fn corollary1_rejects_unreachable_mode() {
        let agent = AgentModel::new(
            dmatrix![1.0, 0.0; 0.0, -2.0],
            dmatrix![0.0; 1.0],
            dmatrix![1.0, 0.0],
            dmatrix![0.0],
            dmatrix![0.0; 0.0],
        )
        .unwrap();
        let k = Arc::new(graph::custom_k(DMatrix::zeros(1, 1), &[]).unwrap());
        let v = DVector::from_vec(vec![1.0, 0.0]);
        let r = corollary1_gain(&agent, 1.0, &v, 3.0, &dmatrix![1.0], &dmatrix![1.0], k);
        assert!(matches!(r, Err(LqrError::R1ProjectionSingular(_))));
    }
}
