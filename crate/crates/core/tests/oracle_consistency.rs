use proptest::prelude::*;
use sieve_lab::audit::{
    alpha_of_m, beta_of_m, c_kappa, cross_term, estimate_b, estimate_delta, lambda_grid, tau_of_m,
};
use sieve_lab::certificate::{bound_a4, hat_alpha};
use sieve_lab::contrast::{finite_difference_errors, maximize_sieve, ContrastModel};
use sieve_lab::linalg::{principal_block, sym_sqrt, SieveFrame};
use sieve_lab::oracle::{exact_sieve_optimum, random_quadratic, random_quartic, QuadraticContrast};
use sieve_lab::{Matrix, Vector};

fn frame_for(seed: u64) -> SieveFrame {
    let p = 1 + (seed % 2) as usize;
    let p1 = 1 + (seed / 2 % 3) as usize;
    let tail = 1 + (seed / 6 % 4) as usize;
    SieveFrame::new(p, p1, p + p1 + tail).unwrap()
}

#[test]
fn sieve_maximizer_matches_closed_form() {
    for seed in 0..200 {
        let frame = frame_for(seed);
        let q = random_quadratic(frame, seed);
        let exact = exact_sieve_optimum(&q, &frame).unwrap();
        let solved = maximize_sieve(&q).unwrap();
        let scale = exact.ups_star_m.norm().max(1.0);
        assert!((&exact.ups_star_m - &solved.ups_star_m).norm() <= 1e-8 * scale, "seed {seed}");
        assert!((&exact.ups_star - &solved.ups_star).norm() <= 1e-8 * scale, "seed {seed}");
    }
}

/// `‖D⁻¹ A κ‖² = (Aκ)ᵀ D⁻² (Aκ)` with the inverse from an LU solve.
fn alpha_oracle(q: &QuadraticContrast) -> f64 {
    let (dp2, a, _) = q.sieve_blocks();
    let ak = a * q.frame.tail(&q.center);
    let x = dp2.lu().solve(&ak).unwrap();
    ak.dot(&x).sqrt()
}

/// `β² = λ_max(L⁻¹ A H⁻² Aᵀ L⁻ᵀ)` with `D_{p1}² = L Lᵀ`.
fn beta_oracle(q: &QuadraticContrast) -> f64 {
    let (dp2, a, h2) = q.sieve_blocks();
    let l = dp2.cholesky().unwrap().l();
    let l_inv = l.try_inverse().unwrap();
    let h_inv = h2.try_inverse().unwrap();
    let m = &l_inv * &a * h_inv * a.transpose() * l_inv.transpose();
    let m = (&m + m.transpose()) * 0.5;
    m.symmetric_eigen().eigenvalues.max().sqrt()
}

#[test]
fn audited_scalars_match_closed_forms_on_quadratics() {
    let grid = lambda_grid(21);
    for seed in 0..50 {
        let frame = frame_for(seed);
        let q = random_quadratic(frame, 1000 + seed);
        let opt = exact_sieve_optimum(&q, &frame).unwrap();
        let a = alpha_of_m(&q, &opt).unwrap();
        assert!((a - alpha_oracle(&q)).abs() <= 1e-10 * a.max(1.0));
        let b = beta_of_m(&q, &opt).unwrap();
        assert!((b - beta_oracle(&q)).abs() <= 1e-10 * b.max(1.0));
        let (_, _, h2) = q.sieve_blocks();
        let kappa = frame.tail(&q.center);
        let ck = kappa.dot(&(h2 * &kappa)) / frame.p1 as f64;
        assert!((c_kappa(&q, &opt).unwrap() - ck).abs() <= 1e-12 * ck.max(1.0));
        assert!(tau_of_m(&q, &opt, &grid).unwrap() <= 1e-12);
        assert!(cross_term(&q, &opt, &grid).unwrap() <= 1e-12);
    }
}

#[test]
fn quartic_cross_term_has_closed_form() {
    // H(λ) differs from H(υ*) by diag(ε w_i (λ − 1)² κ_i²), so the maximum
    // over λ ∈ [0, 1] is ε Σ w_i κ_i⁴ at λ = 0.
    for seed in 0..20 {
        let frame = frame_for(seed);
        for eps in [0.05, 0.1, 0.2] {
            let q = random_quartic(frame, eps, seed);
            let opt = exact_sieve_optimum(&q.base, &frame).unwrap();
            let kappa = frame.tail(&q.base.center);
            let w = frame.tail(&q.weights);
            let expected: f64 = eps * kappa.iter().zip(w.iter()).map(|(k, w)| w * k.powi(4)).sum::<f64>();
            let got = cross_term(&q, &opt, &lambda_grid(21)).unwrap();
            assert!((got - expected).abs() <= 1e-10 * expected.max(1.0), "{got} vs {expected}");
            let dense = cross_term(&q, &opt, &lambda_grid(1000)).unwrap();
            assert!((got - dense).abs() <= 1e-10 * expected.max(1.0));
            assert!(tau_of_m(&q, &opt, &lambda_grid(1000)).unwrap() <= 1e-10);
        }
    }
}

#[test]
fn audited_scalars_are_invariant_to_tail_permutation() {
    let grid = lambda_grid(11);
    for seed in 0..20 {
        let frame = SieveFrame::new(1, 2, 7).unwrap();
        let q = random_quadratic(frame, seed);
        let perm = [0usize, 1, 2, 6, 4, 3, 5];
        let p = Matrix::from_fn(7, 7, |i, j| if perm[i] == j { 1.0 } else { 0.0 });
        let q2 = QuadraticContrast::new(&p * &q.d2 * p.transpose(), &p * &q.center, frame).unwrap();
        let o1 = exact_sieve_optimum(&q, &frame).unwrap();
        let o2 = exact_sieve_optimum(&q2, &frame).unwrap();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-10 * a.abs().max(1.0);
        assert!(close(alpha_of_m(&q, &o1).unwrap(), alpha_of_m(&q2, &o2).unwrap()));
        assert!(close(beta_of_m(&q, &o1).unwrap(), beta_of_m(&q2, &o2).unwrap()));
        assert!(close(c_kappa(&q, &o1).unwrap(), c_kappa(&q2, &o2).unwrap()));
        assert!(close(tau_of_m(&q, &o1, &grid).unwrap(), tau_of_m(&q2, &o2, &grid).unwrap()));
    }
}

#[test]
fn sample_counts_make_estimates_one_sided() {
    for seed in 0..10 {
        let frame = frame_for(seed);
        let q = random_quartic(frame, 0.1, seed);
        let d = sym_sqrt(&q.base.d2).unwrap();
        let d0 = sym_sqrt(&principal_block(&q.base.d2, 0, frame.p_star())).unwrap();
        let center = q.base.center.clone();
        let mut prev_delta = 0.0;
        let mut prev_b = f64::INFINITY;
        for count in [8, 16, 64, 256] {
            let delta = estimate_delta(&q, &d0, &center, 1.5, count, seed).unwrap();
            let b = estimate_b(&q, &center, &d, 0.01, 5.0, count, seed).unwrap();
            assert!(delta >= prev_delta && b <= prev_b);
            prev_delta = delta;
            prev_b = b;
        }
    }
}

#[test]
fn bounds_are_monotone_in_their_inputs() {
    let base = hat_alpha(0.3, 0.1, 0.05, 0.1, 2.0).unwrap();
    assert!(hat_alpha(0.4, 0.1, 0.05, 0.1, 2.0).unwrap() >= base);
    assert!(hat_alpha(0.3, 0.2, 0.05, 0.1, 2.0).unwrap() >= base);
    assert!(hat_alpha(0.3, 0.1, 0.06, 0.1, 2.0).unwrap() >= base);
    assert!(hat_alpha(0.3, 0.1, 0.05, 0.2, 2.0).unwrap() >= base);
    let a4 = bound_a4(0.3, 0.4).unwrap();
    assert!(bound_a4(0.35, 0.4).unwrap() >= a4 && bound_a4(0.3, 0.45).unwrap() >= a4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn quartic_derivatives_match_differences(seed in any::<u64>(), eps in 0.0f64..0.5) {
        let frame = frame_for(seed % 24);
        let q = random_quartic(frame, eps, seed);
        let x = &q.base.center + Vector::from_fn(frame.p_max, |i, _| 0.3 * ((i as f64) - 1.0));
        let (g, h) = finite_difference_errors(&q, &x, 1e-5).unwrap();
        prop_assert!(g < 1e-6 && h < 1e-6);
    }

    #[test]
    fn hat_alpha_and_a4_monotone(nu in 0.0f64..0.95, alpha in 0.0f64..2.0, tau in 0.0f64..1.0,
                                 delta in 0.0f64..0.45, r in 0.0f64..5.0, beta in 0.0f64..0.95, bump in 0.0f64..0.04) {
        let h = hat_alpha(nu, alpha, tau, delta, r).unwrap();
        prop_assert!(hat_alpha((nu + bump).min(0.99), alpha, tau, delta, r).unwrap() >= h);
        prop_assert!(hat_alpha(nu, alpha + bump, tau, delta, r).unwrap() >= h);
        prop_assert!(hat_alpha(nu, alpha, tau, (delta + bump).min(0.49), r).unwrap() >= h);
        let a4 = bound_a4(nu, beta).unwrap();
        prop_assert!(bound_a4(nu, (beta + bump).min(0.99)).unwrap() >= a4);
    }
}

#[test]
fn neg_hessian_of_quadratic_is_constant() {
    let q = random_quadratic(SieveFrame::new(2, 2, 6).unwrap(), 3);
    let a = q.neg_hessian(&Vector::zeros(6)).unwrap();
    let b = q.neg_hessian(&Vector::from_element(6, 4.0)).unwrap();
    assert_eq!(a, b);
}
