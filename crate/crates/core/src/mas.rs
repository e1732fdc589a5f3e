//! Agent and network value types with Kronecker assembly of the global
//! system and closed loop.
//!
//! The library stores positive gains and always applies `u = -Fx`, so the
//! closed loop reads `Acl = I ⊗ (A - B F1) - K ⊗ (B F2)`.

use std::sync::Arc;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::graph::Interconnection;
use crate::linalg::kron;

#[derive(Debug, Error)]
pub enum MasError {
    #[error("matrix {name} has shape {got_r}x{got_c}, expected {want_r}x{want_c}")]
    Shape {
        name: &'static str,
        got_r: usize,
        got_c: usize,
        want_r: usize,
        want_c: usize,
    },
    #[error("matrix {0} contains a non-finite entry")]
    NonFinite(&'static str),
    #[error("gain dimensioned for K of size {gain_n}, got a network of {n} agents")]
    TopologyMismatch { gain_n: usize, n: usize },
}

fn check_finite(name: &'static str, m: &DMatrix<f64>) -> Result<(), MasError> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(MasError::NonFinite(name))
    }
}

fn check_shape(
    name: &'static str,
    m: &DMatrix<f64>,
    rows: usize,
    cols: usize,
) -> Result<(), MasError> {
    if m.nrows() == rows && m.ncols() == cols {
        Ok(())
    } else {
        Err(MasError::Shape {
            name,
            got_r: m.nrows(),
            got_c: m.ncols(),
            want_r: rows,
            want_c: cols,
        })
    }
}

/// One agent of the homogeneous network:
/// `ẋ = Ax + Bu + B_d d`, `y = Cx + Du`.
#[derive(Debug, Clone)]
pub struct AgentModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub bd: DMatrix<f64>,
}

impl AgentModel {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        bd: DMatrix<f64>,
    ) -> Result<Self, MasError> {
        let n = a.nrows();
        let m = b.ncols();
        let p = c.nrows();
        let nd = bd.ncols();
        if n == 0 || m == 0 {
            return Err(MasError::Shape {
                name: "A/B",
                got_r: n,
                got_c: m,
                want_r: 1,
                want_c: 1,
            });
        }
        check_shape("A", &a, n, n)?;
        check_shape("B", &b, n, m)?;
        check_shape("C", &c, p, n)?;
        check_shape("D", &d, p, m)?;
        check_shape("Bd", &bd, n, nd)?;
        for (name, m) in [("A", &a), ("B", &b), ("C", &c), ("D", &d), ("Bd", &bd)] {
            check_finite(name, m)?;
        }
        Ok(Self { a, b, c, d, bd })
    }

    /// State dimension n.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    /// Input dimension m.
    pub fn m(&self) -> usize {
        self.b.ncols()
    }
    /// Output dimension p.
    pub fn p(&self) -> usize {
        self.c.nrows()
    }
    /// Disturbance dimension n_d.
    pub fn nd(&self) -> usize {
        self.bd.ncols()
    }
}

/// Structured gain `F = I_N ⊗ F1 + K ⊗ F2`.
#[derive(Debug, Clone)]
pub struct HierGain {
    pub f1: DMatrix<f64>,
    pub f2: DMatrix<f64>,
    pub k: Arc<Interconnection>,
}

impl HierGain {
    pub fn new(f1: DMatrix<f64>, f2: DMatrix<f64>, k: Arc<Interconnection>) -> Result<Self, MasError> {
        check_shape("F2", &f2, f1.nrows(), f1.ncols())?;
        check_finite("F1", &f1)?;
        check_finite("F2", &f2)?;
        Ok(Self { f1, f2, k })
    }

    /// Number of agents the gain is wired for.
    pub fn agents(&self) -> usize {
        self.k.n()
    }

    /// The per-mode gain `F1 + γ F2`.
    pub fn modal_gain(&self, gamma: f64) -> DMatrix<f64> {
        &self.f1 + &self.f2 * gamma
    }
}

/// Kronecker-lifted open-loop matrices of the N-agent network.
#[derive(Debug, Clone)]
pub struct GlobalSystem {
    pub atil: DMatrix<f64>,
    pub btil: DMatrix<f64>,
    pub ctil: DMatrix<f64>,
    pub dtil: DMatrix<f64>,
    pub bdtil: DMatrix<f64>,
    pub agents: usize,
}

/// Closed-loop matrices under `u = -Fx`.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    pub acl: DMatrix<f64>,
    pub ccl: DMatrix<f64>,
    pub bdcl: DMatrix<f64>,
    pub agents: usize,
}

/// Lift one agent to the N-agent block-diagonal global system.
pub fn assemble_global(agent: &AgentModel, n_agents: usize) -> GlobalSystem {
    assert!(n_agents >= 1, "need at least one agent");
    let eye = DMatrix::identity(n_agents, n_agents);
    GlobalSystem {
        atil: kron(&eye, &agent.a),
        btil: kron(&eye, &agent.b),
        ctil: kron(&eye, &agent.c),
        dtil: kron(&eye, &agent.d),
        bdtil: kron(&eye, &agent.bd),
        agents: n_agents,
    }
}

/// Assemble the full `Nm x Nn` gain `I_N ⊗ F1 + K ⊗ F2`.
///
/// This is the one assembly routine; every consumer of the stacked gain goes
/// through it.
pub fn assemble_gain(gain: &HierGain, n_agents: usize) -> Result<DMatrix<f64>, MasError> {
    if gain.agents() != n_agents {
        return Err(MasError::TopologyMismatch {
            gain_n: gain.agents(),
            n: n_agents,
        });
    }
    let eye = DMatrix::identity(n_agents, n_agents);
    Ok(kron(&eye, &gain.f1) + kron(gain.k.matrix(), &gain.f2))
}

/// Close the loop: `Acl = I ⊗ (A - B F1) - K ⊗ (B F2)`,
/// `Ccl = I ⊗ (C - D F1) - K ⊗ (D F2)`, `Bdcl = I ⊗ B_d`.
pub fn close_loop(agent: &AgentModel, gain: &HierGain) -> ClosedLoop {
    let n_agents = gain.agents();
    let eye = DMatrix::identity(n_agents, n_agents);
    let k = gain.k.matrix();
    ClosedLoop {
        acl: kron(&eye, &(&agent.a - &agent.b * &gain.f1)) - kron(k, &(&agent.b * &gain.f2)),
        ccl: kron(&eye, &(&agent.c - &agent.d * &gain.f1)) - kron(k, &(&agent.d * &gain.f2)),
        bdcl: kron(&eye, &agent.bd),
        agents: n_agents,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph;
    use crate::linalg::spectral_abscissa;
    use nalgebra::{dmatrix, DVector};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn example1_agent() -> AgentModel {
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
    fn lift_n1_is_identity() {
        let agent = example1_agent();
        let g = assemble_global(&agent, 1);
        assert_eq!(g.atil, agent.a);
    }

    #[test]
    fn lift_n3_block_diagonal() {
        let agent = example1_agent();
        let g = assemble_global(&agent, 3);
        assert_eq!(g.atil.nrows(), 6);
        for blk in 0..3 {
            assert_eq!(g.atil.view((2 * blk, 2 * blk), (2, 2)).into_owned(), agent.a);
        }
        assert_eq!(g.atil[(0, 2)], 0.0);
        assert_eq!(g.atil[(4, 1)], 0.0);
    }

    #[test]
    fn lift_b_column_blocks() {
        let agent = example1_agent();
        let g = assemble_global(&agent, 2);
        let expect = dmatrix![0.0, 0.0; 1.0, 0.0; 0.0, 0.0; 0.0, 1.0];
        assert_eq!(g.btil, expect);
    }

    #[test]
    fn gain_zero_cooperative_is_block_diag() {
        let k = Arc::new(graph::path_laplacian(2, 1.0));
        let g = HierGain::new(dmatrix![1.0, 0.0], dmatrix![0.0, 0.0], k).unwrap();
        let f = assemble_gain(&g, 2).unwrap();
        assert_eq!(f, dmatrix![1.0, 0.0, 0.0, 0.0; 0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn gain_pure_cooperative_expansion() {
        let k = Arc::new(graph::path_laplacian(2, 1.0));
        let g = HierGain::new(dmatrix![0.0, 0.0], dmatrix![1.0, 0.0], k).unwrap();
        let f = assemble_gain(&g, 2).unwrap();
        assert_eq!(f, dmatrix![1.0, 0.0, -1.0, 0.0; -1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn gain_grid_corner_block() {
        // Example-2 published gains on the 5x6 grid Laplacian
        let k = Arc::new(graph::grid_laplacian(5, 6));
        let f1 = dmatrix![2.9904, 2.9187];
        let f2 = dmatrix![0.0696, 0.0905];
        let g = HierGain::new(f1.clone(), f2.clone(), k.clone()).unwrap();
        let f = assemble_gain(&g, 30).unwrap();
        assert_eq!(f.nrows(), 30);
        assert_eq!(f.ncols(), 60);
        let k11 = k.matrix()[(0, 0)];
        let expect = &f1 + &f2 * k11;
        assert_eq!(f.view((0, 0), (1, 2)).into_owned(), expect);
    }

    #[test]
    fn gain_topology_mismatch_rejected() {
        let k = Arc::new(graph::path_laplacian(2, 1.0));
        let g = HierGain::new(dmatrix![1.0, 0.0], dmatrix![0.0, 0.0], k).unwrap();
        assert!(matches!(
            assemble_gain(&g, 3),
            Err(MasError::TopologyMismatch { .. })
        ));
    }

    #[test]
    fn close_loop_open_when_gains_zero() {
        let agent = example1_agent();
        let k = Arc::new(graph::path_laplacian(3, 1.0));
        let g = HierGain::new(DMatrix::zeros(1, 2), DMatrix::zeros(1, 2), k).unwrap();
        let cl = close_loop(&agent, &g);
        assert_eq!(cl.acl, assemble_global(&agent, 3).atil);
    }

    #[test]
    fn close_loop_scalar() {
        let agent = AgentModel::new(
            dmatrix![1.0],
            dmatrix![1.0],
            dmatrix![1.0],
            dmatrix![0.0],
            dmatrix![1.0],
        )
        .unwrap();
        let k = Arc::new(graph::custom_k(DMatrix::zeros(1, 1), &[]).unwrap());
        let g = HierGain::new(dmatrix![3.0], dmatrix![0.0], k).unwrap();
        let cl = close_loop(&agent, &g);
        assert_eq!(cl.acl, dmatrix![-2.0]);
    }

    #[test]
    fn example1_theorem1_closed_loop_stable() {
        // q = 10 topology, Q1 = I, R1 = R2 = 1
        let agent = example1_agent();
        let k = Arc::new(graph::custom_k_auto(example1_k(10.0)).unwrap());
        let design = crate::lqr::design_hierarchical(
            &agent,
            k,
            &DMatrix::identity(2, 2),
            &DMatrix::identity(1, 1),
            &DMatrix::identity(1, 1),
        )
        .unwrap();
        let cl = close_loop(&agent, &design.gain);
        assert!(spectral_abscissa(&cl.acl) < 0.0);
    }

    pub(crate) fn example1_k(q: f64) -> DMatrix<f64> {
        dmatrix![1.0, -1.0, 0.0; -1.0, 1.0 + q, -q; 0.0, -q, q]
    }

    #[test]
    fn kronecker_identity_per_agent_evaluation() {
        // F x == per-agent F1 x_i + sum_j K_ij F2 x_j
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..25 {
            let n_agents = rng.random_range(1..=10usize);
            let n = rng.random_range(1..=3usize);
            let m = rng.random_range(1..=2usize);
            let kmat = graph::tests::random_ks_plus(&mut rng, n_agents);
            let k = Arc::new(graph::custom_k_auto(kmat).unwrap());
            let f1 = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
            let f2 = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
            let g = HierGain::new(f1.clone(), f2.clone(), k.clone()).unwrap();
            let f = assemble_gain(&g, n_agents).unwrap();
            let x = DVector::from_fn(n_agents * n, |_, _| rng.random_range(-1.0..1.0));
            let fx = &f * &x;
            for i in 0..n_agents {
                let xi = x.rows(i * n, n).into_owned();
                let mut ui = &f1 * &xi;
                for j in 0..n_agents {
                    let xj = x.rows(j * n, n).into_owned();
                    ui += &f2 * xj * k.matrix()[(i, j)];
                }
                let diff = (fx.rows(i * m, m) - ui).norm();
                assert!(diff <= 1e-12 * (1.0 + fx.norm()));
            }
        }
    }

    #[test]
    fn close_loop_linear_in_gains() {
        let agent = example1_agent();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let k = Arc::new(graph::custom_k_auto(example1_k(3.0)).unwrap());
        for _ in 0..10 {
            let f1a = DMatrix::from_fn(1, 2, |_, _| rng.random_range(-1.0..1.0));
            let f1b = DMatrix::from_fn(1, 2, |_, _| rng.random_range(-1.0..1.0));
            let f2 = DMatrix::from_fn(1, 2, |_, _| rng.random_range(-1.0..1.0));
            let zero = DMatrix::zeros(1, 2);
            let sum_gain = HierGain::new(&f1a + &f1b, f2.clone(), k.clone()).unwrap();
            let ga = HierGain::new(f1a, zero.clone(), k.clone()).unwrap();
            let gb = HierGain::new(f1b, f2, k.clone()).unwrap();
            let open = assemble_global(&agent, 3).atil;
            let lhs = close_loop(&agent, &sum_gain).acl;
            let rhs = &close_loop(&agent, &ga).acl + &close_loop(&agent, &gb).acl - &open;
            assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + open.norm()));
        }
    }
}
