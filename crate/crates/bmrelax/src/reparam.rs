//! Sampling ζ from a two-component smoothing mixture by numerical inverse
//! CDF, and implicit-function-theorem gradients of the sample.
//!
//! A posterior draw solves the monotone root problem
//!
//!   (1−q)·R(ζ|0) + q·R(ζ|1) = ρ,    ρ ~ U(0,1)            (the CDF root)
//!
//! for ζ. Because ζ is defined implicitly, its derivatives follow from the
//! implicit function theorem:
//!
//!   ∂ζ/∂q = (R(ζ|0) − R(ζ|1)) / mix_pdf(ζ)
//!   ∂ζ/∂β = −[(1−q)·∂R(ζ|0)/∂β + q·∂R(ζ|1)/∂β] / mix_pdf(ζ)
//!
//! with everything evaluated at the solved root.
//!
//! Solver: bisection on the support bracket down to width 1e-13, then two
//! Newton polish steps with the analytic mixture pdf. For the power-function
//! family at large β the root can sit many decades below 1e-13 (the mixture
//! packs mass astonishingly close to the endpoints), where linear-space
//! bisection cannot resolve it; if the residual still exceeds the 1e-12
//! contract the solver re-runs in log space (pure deep bisection on ln ζ or
//! ln(1−ζ) — a Newton slope from the endpoint-clamped density would be
//! wildly wrong down there).
//!
//! Finite-precision limits, stated honestly: near ζ = 0 the subnormal range
//! keeps floats log-dense down to 5e-324, so lower-tail roots (power β=30
//! puts them near 1e-81) resolve to full tolerance. Near ζ = 1 the float
//! grid is ~1.1e-16 coarse while sharp families' CDF slope can exceed 1e9,
//! so adjacent floats can straddle ρ by far more than the tolerance; the
//! solver then returns the closest representable value (possibly the
//! endpoint itself), which is the strongest guarantee f64 admits. Sharp
//! power-function smoothing is effectively discrete at that resolution.

use crate::error::{Error, Result};
use crate::smoothing::SmoothingKind;

/// ρ is clamped to [RHO_CLAMP, 1−RHO_CLAMP] before solving.
pub const RHO_CLAMP: f64 = 1e-12;
/// Residual target |mixture_cdf(ζ) − ρ| of the returned root.
pub const ROUND_TRIP_TOL: f64 = 1e-12;
/// Magnitude cap for gradients at mixture-pdf underflow.
pub const SATURATED_GRAD: f64 = 1e12;

/// Implicit gradients of a solved root. `saturated` flags underflow of the
/// mixture pdf at (clamped) endpoints, in which case both entries are capped
/// at ±`SATURATED_GRAD` instead of overflowing.
#[derive(Debug, Clone, Copy)]
pub struct ImplicitGrads {
    pub dzeta_dq: f64,
    pub dzeta_dbeta: f64,
    pub saturated: bool,
}

/// Solve the mixture-CDF root problem for a uniform draw ρ.
///
/// Deterministic given inputs; the returned ζ satisfies
/// |mixture_cdf(ζ) − ρ| ≤ 1e-12 whenever such a float exists.
pub fn sample_inverse_cdf(kind: SmoothingKind, q: f64, rho: f64) -> Result<f64> {
    kind.validate()?;
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidArgument(format!(
            "mixture weight q={q} outside [0,1]"
        )));
    }
    if !rho.is_finite() {
        return Err(Error::InvalidArgument(format!("rho={rho} not finite")));
    }
    let rho = rho.clamp(RHO_CLAMP, 1.0 - RHO_CLAMP);

    let (lo0, hi0) = bracket(kind);
    let f = |zeta: f64| kind.mixture_cdf(q, zeta) - rho;

    // Phase 1: bisection to width 1e-13. The CDF is monotone, so the
    // bracket stays valid throughout.
    let mut lo = lo0;
    let mut hi = hi0;
    for _ in 0..200 {
        if hi - lo <= 1e-13 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut zeta = 0.5 * (lo + hi);

    // Phase 2: two Newton polish steps with the analytic mixture pdf.
    for _ in 0..2 {
        let pdf = kind.mixture_pdf(q, zeta);
        if pdf > 0.0 && pdf.is_finite() {
            let step = f(zeta) / pdf;
            let candidate = (zeta - step).clamp(lo0, hi0);
            if candidate.is_finite() {
                zeta = candidate;
            }
        }
    }

    if f(zeta).abs() <= ROUND_TRIP_TOL {
        return Ok(zeta);
    }

    // Phase 3 (unit-interval families only): the root is buried in a tail
    // thinner than the linear-space resolution. Re-solve on a log axis, and
    // consider the exact endpoints: near 1 the float grid is ~1e-16 coarse,
    // so for very sharp families some ρ have no representable root at all
    // and the closest float wins.
    if kind.unit_support() {
        let mut best = zeta;
        let mut best_res = f(zeta).abs();
        let mut consider = |cand: f64| {
            let res = f(cand).abs();
            if res < best_res {
                best = cand;
                best_res = res;
            }
        };
        if let Some(c) = log_space_solve(kind, q, rho) {
            consider(c);
        }
        consider(0.0);
        consider(1.0);
        zeta = best;
    }
    Ok(zeta)
}

/// Support bracket per family: the unit interval, or mean-padded bounds
/// covering all but ~1e-30 of Gaussian mass.
fn bracket(kind: SmoothingKind) -> (f64, f64) {
    if kind.unit_support() {
        (0.0, 1.0)
    } else {
        let beta = kind.beta();
        let dm = kind.delta_mu();
        let pad = 12.0 / beta.sqrt();
        (dm.min(0.0) - pad, 1.0_f64.max(1.0 + dm) + pad)
    }
}

/// Deep bisection on t = ln ζ (lower tail) or s = ln(1−ζ) (upper tail).
/// Returns the better tail candidate, if either tail brackets the root.
///
/// Pure bisection, deliberately: the analytic mixture pdf clamps density
/// evaluation near the endpoints, so a Newton slope down here would be
/// wildly wrong. 140 halvings of a 745-wide log interval reach ~1e-40
/// relative width, and with dG/dt = pdf·ζ bounded by ~β on the unit
/// families the final residual sits far below the 1e-12 contract whenever
/// the root is representable.
fn log_space_solve(kind: SmoothingKind, q: f64, rho: f64) -> Option<f64> {
    // ln of the smallest positive subnormal, the hard floor of f64.
    const LOG_FLOOR: f64 = -745.0;
    const LOG_MID: f64 = -0.6931471805599453; // ln(1/2)

    let residual = |zeta: f64| kind.mixture_cdf(q, zeta) - rho;

    // Lower tail: G(t) = mixcdf(e^t) − ρ, increasing in t.
    let lower = {
        let g = |t: f64| residual(t.exp());
        if g(LOG_FLOOR) <= 0.0 && g(LOG_MID) >= 0.0 {
            let mut lo = LOG_FLOOR;
            let mut hi = LOG_MID;
            for _ in 0..140 {
                let mid = 0.5 * (lo + hi);
                if g(mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Some(0.5 * (lo + hi))
        } else {
            None
        }
        .map(|t| t.exp())
    };
    // Upper tail: H(s) = mixcdf(1−e^s) − ρ, decreasing in s.
    let upper = {
        let h = |s: f64| residual(1.0 - s.exp());
        if h(LOG_FLOOR) >= 0.0 && h(LOG_MID) <= 0.0 {
            let mut lo = LOG_FLOOR;
            let mut hi = LOG_MID;
            for _ in 0..140 {
                let mid = 0.5 * (lo + hi);
                if h(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Some(0.5 * (lo + hi))
        } else {
            None
        }
        .map(|s| 1.0 - s.exp())
    };
    match (lower, upper) {
        (Some(a), Some(b)) => {
            if residual(a).abs() <= residual(b).abs() {
                Some(a)
            } else {
                Some(b)
            }
        }
        (Some(a), None) => Some(a),
        (None, Some(b)) => Some(b),
        (None, None) => None,
    }
}

/// Implicit gradients at a solved root ζ of the (kind, q) mixture.
pub fn implicit_grads(kind: SmoothingKind, q: f64, zeta: f64) -> Result<ImplicitGrads> {
    kind.validate()?;
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidArgument(format!(
            "mixture weight q={q} outside [0,1]"
        )));
    }
    let mix_pdf = kind.mixture_pdf(q, zeta);
    let num_q = kind.cdf(zeta, false) - kind.cdf(zeta, true);
    let num_beta = -kind.mixture_cdf_dbeta(q, zeta);
    if mix_pdf < f64::MIN_POSITIVE {
        // Density underflow at a (clamped) endpoint: report capped values.
        return Ok(ImplicitGrads {
            dzeta_dq: SATURATED_GRAD * num_q.signum(),
            dzeta_dbeta: if num_beta == 0.0 {
                0.0
            } else {
                SATURATED_GRAD * num_beta.signum()
            },
            saturated: true,
        });
    }
    let cap = |x: f64| x.clamp(-SATURATED_GRAD, SATURATED_GRAD);
    Ok(ImplicitGrads {
        dzeta_dq: cap(num_q / mix_pdf),
        dzeta_dbeta: cap(num_beta / mix_pdf),
        saturated: false,
    })
}

/// Solve and differentiate in one call (the shape the posterior sampler
/// wants: one ρ per latent unit, reused for the pathwise gradient).
pub fn sample_with_grads(kind: SmoothingKind, q: f64, rho: f64) -> Result<(f64, ImplicitGrads)> {
    let zeta = sample_inverse_cdf(kind, q, rho)?;
    let grads = implicit_grads(kind, q, zeta)?;
    Ok((zeta, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smoothing::SmoothingKind;

    #[test]
    fn symmetric_midpoint_root() {
        for kind in [
            SmoothingKind::Exponential { beta: 9.0 },
            SmoothingKind::PowerFunction { beta: 14.0 },
            SmoothingKind::Gaussian { beta: 25.0 },
            SmoothingKind::UniformExp {
                beta: 20.0,
                epsilon: 0.05,
            },
        ] {
            let zeta = sample_inverse_cdf(kind, 0.5, 0.5).unwrap();
            assert!(
                (zeta - 0.5).abs() < 1e-11,
                "{}: zeta={zeta}",
                kind.name()
            );
        }
    }

    #[test]
    fn degenerate_mixture_is_single_component_quantile() {
        let kind = SmoothingKind::Exponential { beta: 6.0 };
        for &rho in &[0.05, 0.3, 0.77, 0.99] {
            let zeta = sample_inverse_cdf(kind, 1.0, rho).unwrap();
            assert!(
                (kind.cdf(zeta, true) - rho).abs() < 1e-12,
                "rho={rho} zeta={zeta}"
            );
        }
    }

    #[test]
    fn power_closed_form_gradient_point() {
        // dζ/dq at the symmetric point of power β=2:
        // (2·0.5^{1/2} − 1)/(0.5·0.5^{−1/2}) ≈ 0.58579.
        let kind = SmoothingKind::PowerFunction { beta: 2.0 };
        let g = implicit_grads(kind, 0.5, 0.5).unwrap();
        let want = (2.0 * 0.5_f64.sqrt() - 1.0) / (0.5 * 0.5_f64.powf(-0.5));
        assert!((g.dzeta_dq - want).abs() < 1e-12, "{} vs {want}", g.dzeta_dq);
        assert!(!g.saturated);
    }

    #[test]
    fn beta_gradient_vanishes_at_symmetric_midpoint() {
        for kind in [
            SmoothingKind::Exponential { beta: 11.0 },
            SmoothingKind::PowerFunction { beta: 17.0 },
            SmoothingKind::Gaussian { beta: 23.0 },
        ] {
            let g = implicit_grads(kind, 0.5, 0.5).unwrap();
            assert!(
                g.dzeta_dbeta.abs() < 1e-13,
                "{}: {}",
                kind.name(),
                g.dzeta_dbeta
            );
        }
    }

    #[test]
    fn deep_tail_power_roots_satisfy_round_trip() {
        // Roots far below the linear-space bisection floor: the log-space
        // fallback must take over. Lower-tail roots here sit near 1e-81.
        let kind = SmoothingKind::PowerFunction { beta: 30.0 };
        for &rho in &[1e-3, 1e-2, 0.05] {
            let zeta = sample_inverse_cdf(kind, 0.5, rho).unwrap();
            assert!(zeta > 0.0, "rho={rho}: hit zero");
            let res = (kind.mixture_cdf(0.5, zeta) - rho).abs();
            assert!(res <= ROUND_TRIP_TOL, "rho={rho} zeta={zeta:.3e} res={res:.3e}");
        }
        // Mirror: upper tail. Near 1 the float grid is ~1.1e-16 coarse while
        // the CDF slope is enormous, so "closest representable float" is the
        // strongest possible guarantee; measure the local float-grid CDF gap
        // and require the residual to be within a few gaps.
        for &rho in &[0.7, 0.8, 0.84] {
            let zeta = sample_inverse_cdf(kind, 0.5, rho).unwrap();
            assert!(zeta < 1.0);
            let res = (kind.mixture_cdf(0.5, zeta) - rho).abs();
            let gap = (kind.mixture_cdf(0.5, zeta.next_up())
                - kind.mixture_cdf(0.5, zeta.next_down()))
            .abs();
            let tol = ROUND_TRIP_TOL.max(3.0 * gap);
            assert!(res <= tol, "rho={rho} zeta={zeta} res={res:.3e} tol={tol:.3e}");
        }
    }

    #[test]
    fn unrepresentable_upper_root_saturates_to_endpoint() {
        // At power β=30, q=0.5 the true root for ρ=0.95 has 1−ζ ≈ 1e-30,
        // below the float spacing at 1; the solver must return the closest
        // representable value (the endpoint) rather than fail or wander.
        let kind = SmoothingKind::PowerFunction { beta: 30.0 };
        let zeta = sample_inverse_cdf(kind, 0.5, 0.95).unwrap();
        assert!(
            zeta > 1.0 - 1e-10 && zeta <= 1.0,
            "expected endpoint saturation, got {zeta}"
        );
        // Gradients at the saturated sample must still come back finite.
        let g = implicit_grads(kind, 0.5, zeta).unwrap();
        assert!(g.dzeta_dq.is_finite() && g.dzeta_dbeta.is_finite());
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let kind = SmoothingKind::Exponential { beta: 8.0 };
        assert!(sample_inverse_cdf(kind, -0.1, 0.5).is_err());
        assert!(sample_inverse_cdf(kind, 1.1, 0.5).is_err());
        assert!(sample_inverse_cdf(kind, 0.5, f64::NAN).is_err());
        assert!(implicit_grads(kind, 2.0, 0.5).is_err());
        let bad = SmoothingKind::PowerFunction { beta: 0.5 };
        assert!(sample_inverse_cdf(bad, 0.5, 0.5).is_err());
    }

    #[test]
    fn solver_is_deterministic() {
        let kind = SmoothingKind::UniformExp {
            beta: 30.0,
            epsilon: 0.05,
        };
        let a = sample_inverse_cdf(kind, 0.37, 0.81).unwrap();
        let b = sample_inverse_cdf(kind, 0.37, 0.81).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn shifted_gaussian_shifts_the_root_rigidly() {
        let base = SmoothingKind::ShiftedGaussian {
            beta: 18.0,
            delta_mu: 0.0,
        };
        let shifted = SmoothingKind::ShiftedGaussian {
            beta: 18.0,
            delta_mu: 0.25,
        };
        for &rho in &[0.1, 0.5, 0.9] {
            let z0 = sample_inverse_cdf(base, 0.3, rho).unwrap();
            let z1 = sample_inverse_cdf(shifted, 0.3, rho).unwrap();
            assert!(
                (z1 - z0 - 0.25).abs() < 1e-9,
                "rho={rho}: {z1} vs {z0}+0.25"
            );
        }
    }
}
