//! Cooperation matrices: generators for path/grid Laplacians, validation of
//! custom symmetric matrices against an edge pattern, and their orthogonal
//! spectral decompositions `K = U diag(γ) Uᵀ`.

use nalgebra::DMatrix;
use std::collections::BTreeSet;
use thiserror::Error;

use crate::linalg::{self, LinalgError};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("K is not symmetric: |K - Kᵀ| max entry {0:.3e}")]
    NotSymmetric(f64),
    #[error("pattern violation at ({0}, {1}): {2}")]
    PatternViolation(usize, usize, &'static str),
    #[error("edge ({0}, {1}) out of range for {2} nodes")]
    EdgeOutOfRange(usize, usize, usize),
    #[error(transparent)]
    Eigen(#[from] LinalgError),
}

/// A validated cooperation matrix with its edge set and spectral
/// decomposition. Eigenvalues are ascending; ties keep the eigensolver's
/// deterministic output order, and downstream per-mode indexing follows this
/// sorted position.
#[derive(Debug, Clone)]
pub struct Interconnection {
    k: DMatrix<f64>,
    edges: BTreeSet<(usize, usize)>,
    gammas: Vec<f64>,
    u: DMatrix<f64>,
    psd: bool,
}

impl Interconnection {
    pub fn n(&self) -> usize {
        self.k.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.k
    }

    /// Unordered edge pairs (i < j), zero-based.
    pub fn edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    /// Eigenvalues of K, ascending.
    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    /// Orthogonal U with `K = U diag(γ) Uᵀ`.
    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    /// Membership in the positive-semidefinite subclass
    /// (min eigenvalue ≥ -1e-9·max(1, ‖K‖₂)).
    pub fn is_psd(&self) -> bool {
        self.psd
    }

    fn from_parts(k: DMatrix<f64>, edges: BTreeSet<(usize, usize)>) -> Result<Self, GraphError> {
        let asym = linalg::max_abs_asymmetry(&k);
        if asym > 1e-12 * k.norm().max(1.0) {
            return Err(GraphError::NotSymmetric(asym));
        }
        let (gammas, u) = spectral(&k)?;
        let knorm2 = gammas.iter().fold(0.0f64, |acc, g| acc.max(g.abs()));
        let psd = gammas.first().map_or(true, |&g| g >= -1e-9 * knorm2.max(1.0));
        Ok(Self {
            k,
            edges,
            gammas,
            u,
            psd,
        })
    }
}

/// Orthogonal spectral decomposition of a symmetric K: ascending eigenvalues
/// and an orthogonal U with `K = U diag(γ) Uᵀ`. Deterministic for identical
/// input; eigensolver convergence failures are surfaced.
pub fn spectral(k: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>), GraphError> {
    let (gammas, u) = linalg::sorted_symmetric_eigen(k)?;
    Ok((gammas, u))
}

/// Weighted path-graph Laplacian on `n` nodes (all edges share `weight`).
pub fn path_laplacian(n: usize, weight: f64) -> Interconnection {
    assert!(n >= 1, "path needs at least one node");
    assert!(weight > 0.0 && weight.is_finite(), "edge weight must be positive");
    let mut k = DMatrix::zeros(n, n);
    let mut edges = BTreeSet::new();
    for i in 0..n.saturating_sub(1) {
        k[(i, i)] += weight;
        k[(i + 1, i + 1)] += weight;
        k[(i, i + 1)] -= weight;
        k[(i + 1, i)] -= weight;
        edges.insert((i, i + 1));
    }
    Interconnection::from_parts(k, edges).expect("path Laplacian is symmetric")
}

/// Laplacian of the Cartesian product of two path graphs
/// (`rows × cols` grid, unit edge weights):
/// `L = L_rows ⊗ I + I ⊗ L_cols`. Node `(r, c)` has index `r·cols + c`.
pub fn grid_laplacian(rows: usize, cols: usize) -> Interconnection {
    assert!(rows >= 1 && cols >= 1, "grid needs at least one node");
    let lr = path_laplacian(rows, 1.0);
    let lc = path_laplacian(cols, 1.0);
    let k = linalg::kron(lr.matrix(), &DMatrix::identity(cols, cols))
        + linalg::kron(&DMatrix::identity(rows, rows), lc.matrix());
    let mut edges = BTreeSet::new();
    let id = |r: usize, c: usize| r * cols + c;
    for r in 0..rows {
        for c in 0..cols {
            if r + 1 < rows {
                edges.insert((id(r, c), id(r + 1, c)));
            }
            if c + 1 < cols {
                edges.insert((id(r, c), id(r, c + 1)));
            }
        }
    }
    Interconnection::from_parts(k, edges).expect("grid Laplacian is symmetric")
}

/// Validate an explicit symmetric matrix against an edge pattern.
///
/// Off-edge entries must be exactly zero and on-edge entries nonzero
/// (the class 𝕂ₛ); indefiniteness is recorded as a flag, not an error.
pub fn custom_k(k: DMatrix<f64>, edges: &[(usize, usize)]) -> Result<Interconnection, GraphError> {
    let n = k.nrows();
    let mut set = BTreeSet::new();
    for &(i, j) in edges {
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        if hi >= n || lo == hi {
            return Err(GraphError::EdgeOutOfRange(i, j, n));
        }
        set.insert((lo, hi));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let on_edge = set.contains(&(i, j));
            if on_edge && k[(i, j)] == 0.0 {
                return Err(GraphError::PatternViolation(i, j, "zero entry on an edge"));
            }
            if !on_edge && k[(i, j)] != 0.0 {
                return Err(GraphError::PatternViolation(
                    i,
                    j,
                    "nonzero entry off the edge set",
                ));
            }
        }
    }
    Interconnection::from_parts(k, set)
}

/// Like [`custom_k`] but derives the edge set from the nonzero off-diagonal
/// pattern of `k` itself.
pub fn custom_k_auto(k: DMatrix<f64>) -> Result<Interconnection, GraphError> {
    let n = k.nrows();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if k[(i, j)] != 0.0 {
                edges.push((i, j));
            }
        }
    }
    custom_k(k, &edges)
}
