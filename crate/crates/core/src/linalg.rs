//! Dense linear-algebra kernels shared across the crate: Kronecker products,
//! sorted symmetric eigendecomposition, real Schur form with eigenvalue
//! reordering, a Bartels–Stewart Lyapunov solver, and PBH rank tests.

use nalgebra::{Complex, DMatrix, DVector};
use thiserror::Error;

pub type CMatrix = DMatrix<Complex<f64>>;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("eigensolver failed to converge on a {0}x{0} matrix")]
    EigenConvergence(usize),
    #[error("Schur decomposition failed to converge on a {0}x{0} matrix")]
    SchurConvergence(usize),
    #[error("Schur block swap is ill-conditioned: {0}")]
    SwapIllConditioned(String),
    #[error("linear solve is singular or ill-conditioned: {0}")]
    SingularSolve(String),
}

/// Dense Kronecker product `a ⊗ b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

pub fn sym_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn max_abs_asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Eigendecomposition of a symmetric matrix with eigenvalues ascending and
/// the orthogonal eigenvector matrix permuted to match.
pub fn sorted_symmetric_eigen(m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>), LinalgError> {
    let n = m.nrows();
    if n == 0 {
        return Ok((Vec::new(), DMatrix::zeros(0, 0)));
    }
    let se = sym_part(m)
        .try_symmetric_eigen(f64::EPSILON, 0)
        .ok_or(LinalgError::EigenConvergence(n))?;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
    let vals: Vec<f64> = idx.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut u = DMatrix::zeros(n, n);
    for (col, &i) in idx.iter().enumerate() {
        u.set_column(col, &se.eigenvectors.column(i));
    }
    Ok((vals, u))
}

pub fn min_symmetric_eig(m: &DMatrix<f64>) -> Result<f64, LinalgError> {
    Ok(*sorted_symmetric_eigen(m)?
        .0
        .first()
        .unwrap_or(&f64::INFINITY))
}

/// Complex eigenvalues sorted by (re, im).
pub fn complex_eigenvalues(m: &DMatrix<f64>) -> Vec<Complex<f64>> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<Complex<f64>> = m.complex_eigenvalues().iter().copied().collect();
    sort_complex(&mut ev);
    ev
}

pub fn sort_complex(v: &mut [Complex<f64>]) {
    v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

/// Greedy nearest-neighbor matching distance between two eigenvalue
/// multisets (∞ when the lengths differ). Robust against sort-order ties
/// between conjugate pairs, unlike positional comparison after sorting.
pub fn spectra_match_distance(a: &[Complex<f64>], b: &[Complex<f64>]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut used = vec![false; b.len()];
    let mut worst = 0.0f64;
    for &x in a {
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for (j, &y) in b.iter().enumerate() {
            if !used[j] {
                let d = (x - y).norm();
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
        }
        used[best] = true;
        worst = worst.max(best_d);
    }
    worst
}

/// Largest real part over the spectrum.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> f64 {
    complex_eigenvalues(m)
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Largest singular value (spectral norm); 0 for empty matrices.
pub fn sigma_max(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().singular_values()[0]
}

/// Rank with an absolute singular-value threshold.
pub fn rank_with_tol(m: &DMatrix<f64>, tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    m.clone()
        .singular_values()
        .iter()
        .filter(|&&s| s > tol)
        .count()
}

/// Symmetric PSD square root; eigenvalues below zero are clipped.
pub fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    let (vals, u) = sorted_symmetric_eigen(m)?;
    let d = DMatrix::from_diagonal(&DVector::from_iterator(
        vals.len(),
        vals.iter().map(|&v| v.max(0.0).sqrt()),
    ));
    Ok(&u * d * u.transpose())
}

pub fn solve_lu(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| LinalgError::SingularSolve(format!("{}x{} system", a.nrows(), a.ncols())))
}

/// 2-norm condition number estimate via SVD.
pub fn cond_2(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let smax = sv[0];
    let smin = sv[sv.len() - 1];
    if smin == 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

// ---------------------------------------------------------------------------
// Real Schur form with reordering
// ---------------------------------------------------------------------------

/// Real Schur decomposition `m = Q T Qᵀ` with `T` quasi-upper-triangular.
pub fn real_schur(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>), LinalgError> {
    let n = m.nrows();
    let schur = m
        .clone()
        .try_schur(f64::EPSILON, 0)
        .ok_or(LinalgError::SchurConvergence(n))?;
    let (q, t) = schur.unpack();
    Ok((q, clean_quasi_triangular(t)))
}

/// Zero out negligible subdiagonal entries and everything below them.
fn clean_quasi_triangular(mut t: DMatrix<f64>) -> DMatrix<f64> {
    let n = t.nrows();
    let scale = t.norm().max(1.0);
    for i in 0..n {
        for j in 0..i {
            if j + 1 == i {
                if t[(i, j)].abs() <= f64::EPSILON * scale {
                    t[(i, j)] = 0.0;
                }
            } else {
                t[(i, j)] = 0.0;
            }
        }
    }
    t
}

/// Diagonal block layout of a quasi-triangular matrix: (start, size) pairs.
fn schur_blocks(t: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            blocks.push((i, 2));
            i += 2;
        } else {
            blocks.push((i, 1));
            i += 1;
        }
    }
    blocks
}

/// Eigenvalues of one 1x1 or 2x2 diagonal block.
fn block_eigs(t: &DMatrix<f64>, start: usize, size: usize) -> [Complex<f64>; 2] {
    if size == 1 {
        let l = Complex::new(t[(start, start)], 0.0);
        return [l, l];
    }
    let (a, b) = (t[(start, start)], t[(start, start + 1)]);
    let (c, d) = (t[(start + 1, start)], t[(start + 1, start + 1)]);
    let mean = 0.5 * (a + d);
    let disc = 0.25 * (a - d) * (a - d) + b * c;
    if disc >= 0.0 {
        let r = disc.sqrt();
        [Complex::new(mean - r, 0.0), Complex::new(mean + r, 0.0)]
    } else {
        let im = (-disc).sqrt();
        [Complex::new(mean, -im), Complex::new(mean, im)]
    }
}

/// Swap two adjacent diagonal blocks of the Schur form in place,
/// accumulating the transform into `q`.
fn swap_adjacent(
    t: &mut DMatrix<f64>,
    q: &mut DMatrix<f64>,
    i1: usize,
    s1: usize,
    s2: usize,
) -> Result<(), LinalgError> {
    let n = t.nrows();
    let w = s1 + s2;
    let t11 = t.view((i1, i1), (s1, s1)).into_owned();
    let t12 = t.view((i1, i1 + s1), (s1, s2)).into_owned();
    let t22 = t.view((i1 + s1, i1 + s1), (s2, s2)).into_owned();

    // X with T11 X - X T22 = -T12; columns of [X; I] span the T22 subspace.
    let m = kron(&DMatrix::identity(s2, s2), &t11) - kron(&t22.transpose(), &DMatrix::identity(s1, s1));
    let rhs = DVector::from_iterator(s1 * s2, (-&t12).iter().copied());
    if cond_2(&m) > 1.0 / (f64::EPSILON * 16.0) {
        return Err(LinalgError::SwapIllConditioned(format!(
            "eigenvalue clusters at block {i1} are too close to separate"
        )));
    }
    let xv = solve_lu(&m, &DMatrix::from_column_slice(s1 * s2, 1, rhs.as_slice()))?;
    let x = DMatrix::from_column_slice(s1, s2, xv.as_slice());

    let mut stacked = DMatrix::zeros(w, s2);
    stacked.view_mut((0, 0), (s1, s2)).copy_from(&x);
    stacked
        .view_mut((s1, 0), (s2, s2))
        .copy_from(&DMatrix::identity(s2, s2));
    let wfull = complete_orthonormal(&stacked)?;

    // congruence on the window, then on the full rows/cols and Q
    let mut rows = t.view((i1, 0), (w, n)).into_owned();
    rows = wfull.transpose() * rows;
    t.view_mut((i1, 0), (w, n)).copy_from(&rows);
    let mut cols = t.view((0, i1), (n, w)).into_owned();
    cols *= &wfull;
    t.view_mut((0, i1), (n, w)).copy_from(&cols);
    let mut qc = q.view((0, i1), (n, w)).into_owned();
    qc *= &wfull;
    q.view_mut((0, i1), (n, w)).copy_from(&qc);

    // the (2,1) block of the window must vanish
    let dust = t.view((i1 + s2, i1), (s1, s2)).norm();
    let scale = t.norm().max(1.0);
    if dust > 1e-11 * scale {
        return Err(LinalgError::SwapIllConditioned(format!(
            "residual {dust:.3e} after swapping blocks at {i1}"
        )));
    }
    for r in 0..s1 {
        for c in 0..s2 {
            t[(i1 + s2 + r, i1 + c)] = 0.0;
        }
    }
    // deflate within the moved blocks too
    let cleaned = clean_quasi_triangular(t.clone());
    t.copy_from(&cleaned);
    Ok(())
}

/// Orthonormal completion: columns of `m` orthonormalized, then extended with
/// unit-vector candidates to a square orthogonal matrix.
fn complete_orthonormal(m: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    let rows = m.nrows();
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(rows);
    let push_orthonormalized = |v: DVector<f64>, basis: &mut Vec<DVector<f64>>| -> bool {
        let mut w = v;
        for _ in 0..2 {
            for b in basis.iter() {
                let proj = b.dot(&w);
                w -= b * proj;
            }
        }
        let norm = w.norm();
        if norm > 1e-10 {
            basis.push(w / norm);
            true
        } else {
            false
        }
    };
    for c in 0..m.ncols() {
        if !push_orthonormalized(m.column(c).into_owned(), &mut basis) {
            return Err(LinalgError::SwapIllConditioned(
                "rank-deficient subspace basis in block swap".into(),
            ));
        }
    }
    for k in 0..rows {
        if basis.len() == rows {
            break;
        }
        let mut e = DVector::zeros(rows);
        e[k] = 1.0;
        push_orthonormalized(e, &mut basis);
    }
    if basis.len() != rows {
        return Err(LinalgError::SwapIllConditioned(
            "failed to complete orthonormal basis".into(),
        ));
    }
    let mut out = DMatrix::zeros(rows, rows);
    for (c, b) in basis.iter().enumerate() {
        out.set_column(c, b);
    }
    Ok(out)
}

/// Reorder a real Schur form so that every diagonal block whose eigenvalues
/// satisfy `select` appears first. Returns the updated `(Q, T)` and the total
/// dimension of the selected invariant subspace.
pub fn order_schur(
    q: &DMatrix<f64>,
    t: &DMatrix<f64>,
    select: impl Fn(Complex<f64>) -> bool,
) -> Result<(DMatrix<f64>, DMatrix<f64>, usize), LinalgError> {
    let mut q = q.clone();
    let mut t = t.clone();
    let mut blocks = schur_blocks(&t);
    let selected: Vec<bool> = blocks
        .iter()
        .map(|&(s, sz)| select(block_eigs(&t, s, sz)[0]) || select(block_eigs(&t, s, sz)[1]))
        .collect();
    let mut flags = selected;
    let mut dim = 0usize;
    let mut target = 0usize; // next block slot to fill
    loop {
        // first selected block at or after `target`
        let Some(src) = (target..blocks.len()).find(|&b| flags[b]) else {
            break;
        };
        // bubble it up
        for b in (target..src).rev() {
            let (i1, s1) = blocks[b];
            let (_, s2) = blocks[b + 1];
            swap_adjacent(&mut t, &mut q, i1, s1, s2)?;
            blocks[b] = (i1, s2);
            blocks[b + 1] = (i1 + s2, s1);
            flags.swap(b, b + 1);
        }
        dim += blocks[target].1;
        target += 1;
    }
    Ok((q, t, dim))
}

// ---------------------------------------------------------------------------
// Lyapunov equation
// ---------------------------------------------------------------------------

/// Solve `Fᵀ X + X F + Q = 0` by Bartels–Stewart (Schur form of `F`,
/// block forward substitution). `Q` symmetric, `F` Hurwitz for a unique
/// symmetric solution.
pub fn solve_lyapunov(f: &DMatrix<f64>, qmat: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    let n = f.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let (u, t) = real_schur(f)?;
    let qt = u.transpose() * qmat * &u;
    let blocks = schur_blocks(&t);
    let mut y = DMatrix::zeros(n, n);
    for (bj, &(j0, sj)) in blocks.iter().enumerate() {
        for (bi, &(i0, si)) in blocks.iter().enumerate() {
            let mut rhs = -qt.view((i0, j0), (si, sj)).into_owned();
            // accumulated terms from already-solved blocks
            for &(k0, sk) in blocks.iter().take(bi) {
                let tki = t.view((k0, i0), (sk, si)).into_owned();
                let ykj = y.view((k0, j0), (sk, sj)).into_owned();
                rhs -= tki.transpose() * ykj;
            }
            for &(k0, sk) in blocks.iter().take(bj) {
                let yik = y.view((i0, k0), (si, sk)).into_owned();
                let tkj = t.view((k0, j0), (sk, sj)).into_owned();
                rhs -= yik * tkj;
            }
            let tii = t.view((i0, i0), (si, si)).into_owned();
            let tjj = t.view((j0, j0), (sj, sj)).into_owned();
            // small Sylvester: Tiiᵀ Yij + Yij Tjj = rhs
            let m = kron(&DMatrix::identity(sj, sj), &tii.transpose())
                + kron(&tjj.transpose(), &DMatrix::identity(si, si));
            let sol = solve_lu(&m, &DMatrix::from_column_slice(si * sj, 1, rhs.as_slice()))?;
            y.view_mut((i0, j0), (si, sj))
                .copy_from(&DMatrix::from_column_slice(si, sj, sol.as_slice()));
        }
    }
    let x = &u * y * u.transpose();
    Ok(sym_part(&x))
}

pub fn lyapunov_residual(f: &DMatrix<f64>, qmat: &DMatrix<f64>, x: &DMatrix<f64>) -> f64 {
    (f.transpose() * x + x * f + qmat).norm()
}

// ---------------------------------------------------------------------------
// Complex embeddings and PBH rank tests
// ---------------------------------------------------------------------------

/// Real 2r x 2c embedding `[[Re, -Im], [Im, Re]]` of a complex matrix.
pub fn embed_complex(m: &CMatrix) -> DMatrix<f64> {
    let (r, c) = m.shape();
    let mut out = DMatrix::zeros(2 * r, 2 * c);
    for i in 0..r {
        for j in 0..c {
            let z = m[(i, j)];
            out[(i, j)] = z.re;
            out[(i, j + c)] = -z.im;
            out[(i + r, j)] = z.im;
            out[(i + r, j + c)] = z.re;
        }
    }
    out
}

/// Rank of a complex matrix via its real embedding (rank doubles exactly).
pub fn complex_rank(m: &CMatrix, tol: f64) -> usize {
    rank_with_tol(&embed_complex(m), tol) / 2
}

/// Unit-norm null vector of a complex matrix, from the smallest right
/// singular vector of the real embedding.
pub fn complex_null_vector(m: &CMatrix) -> DVector<Complex<f64>> {
    let e = embed_complex(m);
    let svd = e.svd(false, true);
    let vt = svd.v_t.expect("svd with v requested");
    let row = vt.nrows() - 1;
    let c = m.ncols();
    let mut v = DVector::from_element(c, Complex::new(0.0, 0.0));
    for j in 0..c {
        v[j] = Complex::new(vt[(row, j)], vt[(row, j + c)]);
    }
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v / Complex::new(norm, 0.0)
}

/// PBH test: `rank [A - λI, B] == n` at eigenvalue λ.
fn pbh_rank_ok(a: &DMatrix<f64>, b: &DMatrix<f64>, lambda: Complex<f64>, tol: f64) -> bool {
    let n = a.nrows();
    let m = b.ncols();
    let mut pencil = CMatrix::from_element(n, n + m, Complex::new(0.0, 0.0));
    for i in 0..n {
        for j in 0..n {
            pencil[(i, j)] = Complex::new(a[(i, j)], 0.0);
        }
        pencil[(i, i)] -= lambda;
        for j in 0..m {
            pencil[(i, n + j)] = Complex::new(b[(i, j)], 0.0);
        }
    }
    complex_rank(&pencil, tol) == n
}

/// PBH controllability-type test over a chosen subset of the spectrum.
/// `only_unstable` restricts to eigenvalues with `Re ≥ -re_tol`
/// (stabilizability); otherwise every eigenvalue is tested.
pub fn pbh_all(a: &DMatrix<f64>, b: &DMatrix<f64>, only_unstable: bool) -> bool {
    let mut ab = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    ab.view_mut((0, 0), a.shape()).copy_from(a);
    ab.view_mut((0, a.ncols()), b.shape()).copy_from(b);
    let tol = 1e-8 * sigma_max(&ab).max(1.0);
    let re_tol = 1e-9 * sigma_max(a).max(1.0);
    a.complex_eigenvalues()
        .iter()
        .filter(|l| !only_unstable || l.re >= -re_tol)
        .all(|&l| pbh_rank_ok(a, b, l, tol))
}
