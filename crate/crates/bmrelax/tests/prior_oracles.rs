//! Finite-difference oracles for both continuous-prior gradient paths. The
//! analytic gradients hold the mean-field marginals fixed; at a converged
//! fixed point that is exact (the marginals are a stationary point of the
//! variational objective), so the checks run the fit long enough to reach
//! machine-precision stationarity and then compare against re-solving
//! central differences of [prior value − log Z].

use bmrelax::rbm::{exact_log_partition, RBM};
use bmrelax::relaxation::{
    git_log_prob, git_log_prob_grads, git_prepare, mean_field_fit, relaxed_log_prob,
    relaxed_log_prob_grads_with_moments, NegativePhase,
};
use bmrelax::rng::{self, purpose};
use bmrelax::smoothing::SmoothingKind;
use ndarray::{Array1, Array2};
use rand::Rng;

const MF_ITERS: usize = 400;

fn test_rbm(seed: u64) -> RBM {
    let mut r = rng::stream(seed, purpose::DIAG, 7);
    RBM::random_bipartite(3, 3, 0.3, 0.2, &mut r)
}

fn rebuilt(rbm: &RBM, a: Array1<f64>, w: Array2<f64>) -> RBM {
    let (d1, d2) = rbm.bipartite().expect("test machines are bipartite");
    RBM::new_bipartite(a, w, d1, d2).expect("perturbed parameters stay valid")
}

fn interior_zeta(d: usize, seed: u64) -> Array1<f64> {
    let mut r = rng::stream(seed, purpose::DIAG, 8);
    Array1::from_shape_fn(d, |_| r.gen_range(0.1..0.9))
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// f(θ) = [H(m*) − Ê(m*)] − log Z(θ), refitting m* from scratch.
fn overlapping_objective(rbm: &RBM, kind: SmoothingKind, zeta: &Array1<f64>) -> f64 {
    let (value, _) = relaxed_log_prob(rbm, kind, zeta, MF_ITERS).unwrap();
    value - exact_log_partition(rbm).unwrap()
}

#[test]
fn mean_field_fixed_point_is_stationary_after_the_long_fit() {
    let rbm = test_rbm(11);
    let kind = SmoothingKind::PowerFunction { beta: 30.0 };
    let zeta = interior_zeta(rbm.d(), 11);
    let coeffs = kind.coefficients(zeta.as_slice().unwrap()).unwrap();
    let sol = mean_field_fit(&rbm, &coeffs, MF_ITERS).unwrap();
    // One more sweep must not move the marginals: the envelope argument the
    // gradient oracles rely on needs a genuinely converged fixed point.
    let again = mean_field_fit(&rbm, &coeffs, MF_ITERS + 1).unwrap();
    let drift = sol
        .m
        .iter()
        .zip(again.m.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0_f64, f64::max);
    assert!(
        drift < 1e-12,
        "mean-field marginals still drifting after {MF_ITERS} sweeps: {drift:.3e}"
    );
}

#[test]
fn overlapping_prior_gradients_match_finite_differences() {
    let rbm = test_rbm(11);
    let d = rbm.d();
    let kind = SmoothingKind::PowerFunction { beta: 30.0 };
    let zeta = interior_zeta(d, 11);
    let (_, sol) = relaxed_log_prob(&rbm, kind, &zeta, MF_ITERS).unwrap();
    let neg = NegativePhase::exact(&rbm).unwrap();
    let grads = relaxed_log_prob_grads_with_moments(&rbm, kind, &zeta, &sol, &neg).unwrap();

    let h = 1e-5;
    for i in 0..d {
        let mut up = rbm.a().clone();
        let mut down = rbm.a().clone();
        up[i] += h;
        down[i] -= h;
        let f_up = overlapping_objective(&rebuilt(&rbm, up, rbm.w().clone()), kind, &zeta);
        let f_down = overlapping_objective(&rebuilt(&rbm, down, rbm.w().clone()), kind, &zeta);
        let fd = (f_up - f_down) / (2.0 * h);
        assert!(
            rel_err(grads.grad_a[i], fd) < 1e-4,
            "bias gradient {i}: analytic {} vs FD {fd}",
            grads.grad_a[i]
        );
    }
    for i in 0..d {
        for j in (i + 1)..d {
            if !rbm.mask_allows(i, j) {
                continue;
            }
            let mut up = rbm.w().clone();
            let mut down = rbm.w().clone();
            up[[i, j]] += h;
            up[[j, i]] += h;
            down[[i, j]] -= h;
            down[[j, i]] -= h;
            let f_up = overlapping_objective(&rebuilt(&rbm, rbm.a().clone(), up), kind, &zeta);
            let f_down =
                overlapping_objective(&rebuilt(&rbm, rbm.a().clone(), down), kind, &zeta);
            let fd = (f_up - f_down) / (2.0 * h);
            assert!(
                rel_err(grads.grad_w[[i, j]], fd) < 1e-4,
                "tied coupling gradient ({i},{j}): analytic {} vs FD {fd}",
                grads.grad_w[[i, j]]
            );
        }
    }
    for i in 0..d {
        let mut up = zeta.clone();
        let mut down = zeta.clone();
        up[i] += h;
        down[i] -= h;
        let f_up = overlapping_objective(&rbm, kind, &up);
        let f_down = overlapping_objective(&rbm, kind, &down);
        let fd = (f_up - f_down) / (2.0 * h);
        assert!(
            rel_err(grads.grad_zeta[i], fd) < 1e-4,
            "zeta gradient {i}: analytic {} vs FD {fd}",
            grads.grad_zeta[i]
        );
    }
}

/// f(θ) = git value − log Z(θ), re-factoring the precision each time.
fn git_objective(rbm: &RBM, beta: f64, zeta: &Array1<f64>) -> f64 {
    let prior = git_prepare(rbm, beta).unwrap();
    git_log_prob(&prior, rbm, zeta).unwrap() - exact_log_partition(rbm).unwrap()
}

#[test]
fn git_prior_gradients_match_finite_differences() {
    let rbm = test_rbm(13);
    let d = rbm.d();
    let beta = 20.0;
    let mut zr = rng::stream(13, purpose::DIAG, 9);
    // The Gaussian-integral density lives on all of R^D.
    let zeta = Array1::from_shape_fn(d, |_| zr.gen_range(-0.3..1.3));
    let prior = git_prepare(&rbm, beta).unwrap();
    let neg = NegativePhase::exact(&rbm).unwrap();
    let grads = git_log_prob_grads(&prior, &rbm, &zeta, &neg).unwrap();

    let h = 1e-5;
    for i in 0..d {
        let mut up = rbm.a().clone();
        let mut down = rbm.a().clone();
        up[i] += h;
        down[i] -= h;
        let f_up = git_objective(&rebuilt(&rbm, up, rbm.w().clone()), beta, &zeta);
        let f_down = git_objective(&rebuilt(&rbm, down, rbm.w().clone()), beta, &zeta);
        let fd = (f_up - f_down) / (2.0 * h);
        assert!(
            rel_err(grads.grad_a[i], fd) < 1e-4,
            "git bias gradient {i}: analytic {} vs FD {fd}",
            grads.grad_a[i]
        );
    }
    for i in 0..d {
        for j in (i + 1)..d {
            if !rbm.mask_allows(i, j) {
                continue;
            }
            let mut up = rbm.w().clone();
            let mut down = rbm.w().clone();
            up[[i, j]] += h;
            up[[j, i]] += h;
            down[[i, j]] -= h;
            down[[j, i]] -= h;
            let f_up = git_objective(&rebuilt(&rbm, rbm.a().clone(), up), beta, &zeta);
            let f_down = git_objective(&rebuilt(&rbm, rbm.a().clone(), down), beta, &zeta);
            let fd = (f_up - f_down) / (2.0 * h);
            assert!(
                rel_err(grads.grad_w[[i, j]], fd) < 1e-4,
                "git tied coupling gradient ({i},{j}): analytic {} vs FD {fd}",
                grads.grad_w[[i, j]]
            );
        }
    }
    for i in 0..d {
        let mut up = zeta.clone();
        let mut down = zeta.clone();
        up[i] += h;
        down[i] -= h;
        let fd = (git_objective(&rbm, beta, &up) - git_objective(&rbm, beta, &down)) / (2.0 * h);
        assert!(
            rel_err(grads.grad_zeta[i], fd) < 1e-4,
            "git zeta gradient {i}: analytic {} vs FD {fd}",
            grads.grad_zeta[i]
        );
    }
}

#[test]
fn negative_phase_sample_moments_converge_to_the_exact_ones() {
    let rbm = test_rbm(17);
    let exact = NegativePhase::exact(&rbm).unwrap();
    // Long Gibbs run as an independent estimate of the same moments.
    let mut rng = rng::stream(17, purpose::NEG_PHASE, 0);
    let mut state = Array1::from_elem(rbm.d(), 0.0);
    let mut rows = Vec::new();
    for sweep in 0..60_000 {
        bmrelax::rbm::block_gibbs_sweep(&rbm, &mut state, &mut rng).unwrap();
        if sweep >= 5_000 {
            rows.extend(state.iter().copied());
        }
    }
    let samples = Array2::from_shape_vec((55_000, rbm.d()), rows).unwrap();
    let est = NegativePhase::from_samples(&samples).unwrap();
    for i in 0..rbm.d() {
        assert!(
            (est.mean_z[i] - exact.mean_z[i]).abs() < 0.02,
            "unit {i} first moment: Gibbs {} vs exact {}",
            est.mean_z[i],
            exact.mean_z[i]
        );
        for j in 0..rbm.d() {
            assert!(
                (est.mean_zz[[i, j]] - exact.mean_zz[[i, j]]).abs() < 0.02,
                "({i},{j}) second moment: Gibbs {} vs exact {}",
                est.mean_zz[[i, j]],
                exact.mean_zz[[i, j]]
            );
        }
    }
}
