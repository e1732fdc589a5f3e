//! Riccati solver properties on random controllable instances: residual
//! bound, invariance under orthogonal similarity, and monotonicity of the
//! solution in the state weight.

use hiermas::riccati::{self, CareProblem};
use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn random_instance(rng: &mut ChaCha8Rng, n: usize, m: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    loop {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let b = DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
        if riccati::is_controllable(&a, &b) {
            return (a, b);
        }
    }
}

fn random_psd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let mmat = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &mmat * mmat.transpose()
}

#[test]
fn residual_bound_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(301);
    for _ in 0..40 {
        let n = rng.random_range(1..=8usize);
        let m = rng.random_range(1..=3usize);
        let (a, b) = random_instance(&mut rng, n, m);
        let q = random_psd(&mut rng, n) + DMatrix::identity(n, n) * 0.01;
        let s = &b * b.transpose();
        let sol = riccati::solve_care(&CareProblem::new(a, s, q).unwrap()).unwrap();
        assert!(sol.residual <= 1e-8 * (1.0 + sol.p.norm().powi(2)));
        assert!(sol.closed_loop_eigs.iter().all(|l| l.re < 0.0));
    }
}

#[test]
fn solution_transforms_under_orthogonal_similarity() {
    let mut rng = ChaCha8Rng::seed_from_u64(302);
    let mut done = 0;
    while done < 25 {
        let n = rng.random_range(2..=6usize);
        let (a, b) = random_instance(&mut rng, n, 1);
        let q = random_psd(&mut rng, n) + DMatrix::identity(n, n) * 0.1;
        let s = &b * b.transpose();
        let p = riccati::solve_care(&CareProblem::new(a.clone(), s.clone(), q.clone()).unwrap())
            .unwrap()
            .p;
        // the absolute tolerance below presumes well-scaled instances; skip
        // near-uncontrollable draws whose solution blows up
        if p.norm() > 1e3 {
            continue;
        }
        done += 1;
        let raw = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let t = raw.qr().q();
        let a2 = t.transpose() * &a * &t;
        let s2 = t.transpose() * &s * &t;
        let q2 = t.transpose() * &q * &t;
        let p2 = riccati::solve_care(&CareProblem::new(a2, s2, q2).unwrap()).unwrap().p;
        let expected = t.transpose() * &p * &t;
        assert!(
            (p2 - expected).norm() <= 1e-7,
            "similarity image differs for n={n}"
        );
    }
}

#[test]
fn enlarging_q_never_shrinks_p() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for _ in 0..20 {
        let n = rng.random_range(1..=5usize);
        let (a, b) = random_instance(&mut rng, n, 1);
        let q = random_psd(&mut rng, n) + DMatrix::identity(n, n) * 0.01;
        let s = &b * b.transpose();
        let base = riccati::solve_care(&CareProblem::new(a.clone(), s.clone(), q.clone()).unwrap())
            .unwrap()
            .p;
        let base_min = hiermas::linalg::min_symmetric_eig(&base).unwrap();
        for epsilon in [0.1, 1.0] {
            let q_big = &q + DMatrix::identity(n, n) * epsilon;
            let big = riccati::solve_care(&CareProblem::new(a.clone(), s.clone(), q_big).unwrap())
                .unwrap()
                .p;
            let big_min = hiermas::linalg::min_symmetric_eig(&big).unwrap();
            assert!(
                big_min >= base_min - 1e-9,
                "min eig shrank: {base_min} -> {big_min} at ε={epsilon}"
            );
        }
    }
}
