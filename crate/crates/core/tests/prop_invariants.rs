//! Property tests for the packing and graph invariants.

use hiermas::graph;
use hiermas::lmi::{smat, svec};
use nalgebra::DMatrix;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn svec_smat_roundtrip(entries in prop::collection::vec(-1e6f64..1e6, 1..=21)) {
        // triangle counts: 1, 3, 6, 10, 15, 21
        let n = (1..=6).rev().find(|k| k * (k + 1) / 2 <= entries.len()).unwrap();
        let len = n * (n + 1) / 2;
        let v = nalgebra::DVector::from_vec(entries[..len].to_vec());
        let m = smat(&v);
        prop_assert_eq!(svec(&m), v);
        let rt = smat(&svec(&m));
        prop_assert_eq!(rt, m);
    }

    #[test]
    fn grid_laplacian_invariants(rows in 1usize..5, cols in 1usize..6) {
        let g = graph::grid_laplacian(rows, cols);
        let k = g.matrix();
        for i in 0..g.n() {
            prop_assert!(k.row(i).sum().abs() <= 1e-12);
            for j in 0..g.n() {
                if i != j {
                    prop_assert!(k[(i, j)] <= 0.0);
                }
            }
        }
        prop_assert!(g.gammas()[0] >= -1e-9);
        prop_assert!(g.is_psd());
    }

    #[test]
    fn weighted_path_spectrum_scales(n in 1usize..8, w in 0.1f64..5.0) {
        let p1 = graph::path_laplacian(n, 1.0);
        let pw = graph::path_laplacian(n, w);
        for (a, b) in p1.gammas().iter().zip(pw.gammas()) {
            prop_assert!((a * w - b).abs() <= 1e-9 * (1.0 + w));
        }
    }

    #[test]
    fn custom_k_accepts_its_own_pattern(seed in 0u64..1000) {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=8usize);
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random_bool(0.4) {
                    let v = rng.random_range(0.1..2.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                    k[(i, j)] = v;
                    k[(j, i)] = v;
                }
            }
            k[(i, i)] = rng.random_range(-1.0..2.0);
        }
        let ic = graph::custom_k_auto(k.clone()).unwrap();
        prop_assert_eq!(ic.matrix(), &k);
        // reconstruction
        let gd = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(ic.gammas().to_vec()));
        let recon = ic.u() * gd * ic.u().transpose();
        prop_assert!((recon - &k).norm() <= 1e-9 * (1.0 + k.norm()));
    }
}
