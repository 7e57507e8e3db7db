use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sieve_lab::linalg::{
    identifiability_nu, matrix_closeness, matrix_from_csv, matrix_to_csv, min_eigenvalue, profile_matrix,
    profile_matrix_via_inverse, spectral_norm, PartitionedOperator,
};
use sieve_lab::oracle::random_spd;
use sieve_lab::Matrix;

fn spd(n: usize, seed: u64) -> Matrix {
    random_spd(n, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn orthogonal(n: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let g = DMatrix::from_fn(n, n, |_, _| rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, &mut rng));
    g.qr().q()
}

/// Largest singular value from the eigenvalues of `MᵀM`.
fn norm_by_gram(m: &Matrix) -> f64 {
    let g = m.transpose() * m;
    g.symmetric_eigen().eigenvalues.max().max(0.0).sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn schur_and_inverse_routes_agree(n in 2usize..=16, split_frac in 0.0f64..1.0, seed in any::<u64>()) {
        let split = 1 + ((n - 1) as f64 * split_frac) as usize;
        let split = split.min(n - 1);
        let op = PartitionedOperator::new(spd(n, seed), split).unwrap();
        let a = profile_matrix(&op).unwrap();
        let b = profile_matrix_via_inverse(&op).unwrap();
        prop_assert!((&a - &b).norm() <= 1e-10 * a.norm());
        prop_assert!(min_eigenvalue(&a) > 0.0);
    }

    #[test]
    fn spectral_norm_transpose_and_scaling(rows in 1usize..40, cols in 1usize..40, c in -5.0f64..5.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = DMatrix::from_fn(rows, cols, |_, _| rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, &mut rng));
        let s = spectral_norm(&m).unwrap();
        prop_assert!((s - spectral_norm(&m.transpose()).unwrap()).abs() <= 1e-10 * s.max(1.0));
        prop_assert!((spectral_norm(&(&m * c)).unwrap() - c.abs() * s).abs() <= 1e-10 * s.max(1.0));
        prop_assert!((s - norm_by_gram(&m)).abs() <= 1e-8 * s.max(1.0));
    }

    #[test]
    fn nu_is_invariant_under_blockwise_rotation(n in 3usize..=12, seed in any::<u64>()) {
        let split = n / 2;
        let d2 = spd(n, seed);
        let mut q = Matrix::zeros(n, n);
        q.view_mut((0, 0), (split, split)).copy_from(&orthogonal(split, seed));
        q.view_mut((split, split), (n - split, n - split)).copy_from(&orthogonal(n - split, seed + 1));
        let rotated = q.transpose() * &d2 * &q;
        let rotated = (&rotated + rotated.transpose()) * 0.5;
        let a = identifiability_nu(&PartitionedOperator::new(d2, split).unwrap()).unwrap();
        let b = identifiability_nu(&PartitionedOperator::new(rotated, split).unwrap()).unwrap();
        prop_assert!((a.rho - b.rho).abs() <= 1e-9);
    }

    #[test]
    fn closeness_of_identical_roots_is_zero(n in 1usize..10, seed in any::<u64>()) {
        let m = spd(n, seed);
        prop_assert!(matrix_closeness(&m, &m).unwrap() <= 1e-10);
    }

    #[test]
    fn csv_roundtrip_is_exact(rows in 1usize..8, cols in 1usize..8, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = DMatrix::from_fn(rows, cols, |_, _| rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, &mut rng));
        let back = matrix_from_csv(&matrix_to_csv(&m)).unwrap();
        prop_assert_eq!(back, m);
    }
}
