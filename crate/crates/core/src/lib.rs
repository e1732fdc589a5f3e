//! Hierarchical decentralized controller synthesis for homogeneous linear
//! multi-agent systems.
//!
//! A network of `N` identical agents `ẋᵢ = Axᵢ + Buᵢ + B_d dᵢ`, coupled
//! through a symmetric cooperation matrix `K`, is controlled by structured
//! state feedback `u = -(I_N ⊗ F1 + K ⊗ F2) x`. The crate provides
//!
//! * LQR synthesis of `(F1, F2)` from a single low-order Riccati equation
//!   ([`lqr`]), including reduced-order designs built on selected
//!   eigenvalues of `A`,
//! * modal H∞/H2 analysis of the closed loop ([`analysis`]),
//! * LMI-based robust synthesis with H∞/H2 bounds, in general and
//!   LQR-consistent (inverse-optimal) forms ([`robust`]),
//! * an affine-LMI modeling layer with an SDP backend ([`lmi`]),
//! * a seeded fixed-step simulator with CSV/SVG export ([`sim`]).

extern crate openblas_src;

pub mod analysis;
pub mod graph;
pub mod linalg;
pub mod lmi;
pub mod lqr;
pub mod mas;
pub mod riccati;
pub mod robust;
pub mod sim;

pub use graph::Interconnection;
pub use mas::{AgentModel, ClosedLoop, GlobalSystem, HierGain};
