//! Overlapping smoothing transformations r(ζ|z).
//!
//! Each family maps a binary z ∈ {0,1} to a continuous ζ through a pair of
//! overlapping conditional densities sharing one support. The inverse
//! temperature β controls sharpness: larger β concentrates r(ζ|z) near z.
//! Besides densities and CDFs, this module computes the per-unit coefficients
//!
//!   b(ζ) = log r(ζ|1) − log r(ζ|0),   c(ζ) = log r(ζ|0),
//!
//! which shift a Boltzmann machine's energy so that p(z|ζ) is again a
//! Boltzmann machine, and the analytic partial derivatives (∂ζ, ∂β, ∂Δμ of
//! pdf; ∂β of CDF) that the implicit reparameterization gradients and the
//! trainable-β posterior need.
//!
//! Families on [0,1] (Exponential, UniformExp, PowerFunction) are defined by
//! their z=0 branch and mirrored: r(ζ|1) = r(1−ζ|0). The Gaussian families
//! live on all of ℝ. The power-function density diverges at its endpoint, so
//! density evaluation clamps ζ to [1e-7, 1−1e-7]; CDFs are never clamped.

use crate::error::{Error, Result};
use crate::math::{logaddexp, normal_cdf, normal_pdf};
use crate::rbm::AugmentedCoefficients;

/// Clamp margin for density evaluation of endpoint-divergent families.
pub const DENSITY_EDGE: f64 = 1e-7;

/// The smoothing family, tagged with its parameters.
///
/// `ShiftedGaussian` is posterior-only: its Δμ comes from the posterior
/// network and its β is trainable per unit, so instances of it are built
/// per-unit on the fly during sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SmoothingKind {
    /// r(ζ|0) ∝ e^{−βζ} on [0,1], normalizer Z_β = (1−e^{−β})/β.
    Exponential { beta: f64 },
    /// Exponential mixed with a uniform floor: (1−ε)·exp + ε on [0,1].
    UniformExp { beta: f64, epsilon: f64 },
    /// r(ζ|0) = (1/β)ζ^{1/β−1} on [0,1] (Beta(1/β,1) / mirrored Beta(1,1/β)).
    PowerFunction { beta: f64 },
    /// r(ζ|z) = N(ζ | z, 1/β) on ℝ.
    Gaussian { beta: f64 },
    /// r(ζ|z) = N(ζ | z + Δμ, 1/β) on ℝ; posterior-only.
    ShiftedGaussian { beta: f64, delta_mu: f64 },
}

/// Density, CDF, and log-density of one conditional at one point.
#[derive(Debug, Clone, Copy)]
pub struct Evaluation {
    pub pdf: f64,
    pub cdf: f64,
    pub log_pdf: f64,
}

/// Mixture density and CDF at one point.
#[derive(Debug, Clone, Copy)]
pub struct MixtureEvaluation {
    pub pdf: f64,
    pub cdf: f64,
}

impl SmoothingKind {
    /// Inverse temperature of the family.
    pub fn beta(&self) -> f64 {
        match *self {
            SmoothingKind::Exponential { beta }
            | SmoothingKind::UniformExp { beta, .. }
            | SmoothingKind::PowerFunction { beta }
            | SmoothingKind::Gaussian { beta }
            | SmoothingKind::ShiftedGaussian { beta, .. } => beta,
        }
    }

    /// Same family with a different β (used by finite-difference checks and
    /// the trainable-β posterior).
    pub fn with_beta(&self, beta: f64) -> SmoothingKind {
        match *self {
            SmoothingKind::Exponential { .. } => SmoothingKind::Exponential { beta },
            SmoothingKind::UniformExp { epsilon, .. } => {
                SmoothingKind::UniformExp { beta, epsilon }
            }
            SmoothingKind::PowerFunction { .. } => SmoothingKind::PowerFunction { beta },
            SmoothingKind::Gaussian { .. } => SmoothingKind::Gaussian { beta },
            SmoothingKind::ShiftedGaussian { delta_mu, .. } => {
                SmoothingKind::ShiftedGaussian { beta, delta_mu }
            }
        }
    }

    /// Mean shift (0 except for ShiftedGaussian).
    pub fn delta_mu(&self) -> f64 {
        match *self {
            SmoothingKind::ShiftedGaussian { delta_mu, .. } => delta_mu,
            _ => 0.0,
        }
    }

    /// True for families whose support is the unit interval.
    pub fn unit_support(&self) -> bool {
        matches!(
            self,
            SmoothingKind::Exponential { .. }
                | SmoothingKind::UniformExp { .. }
                | SmoothingKind::PowerFunction { .. }
        )
    }

    /// True when r(ζ|0) = r(1−ζ|1) pointwise.
    pub fn symmetric(&self) -> bool {
        !matches!(self, SmoothingKind::ShiftedGaussian { .. })
    }

    /// Short identifier used in CSV output and CLI flags.
    pub fn name(&self) -> &'static str {
        match self {
            SmoothingKind::Exponential { .. } => "exp",
            SmoothingKind::UniformExp { .. } => "unexp",
            SmoothingKind::PowerFunction { .. } => "power",
            SmoothingKind::Gaussian { .. } => "gauss",
            SmoothingKind::ShiftedGaussian { .. } => "shifted-gauss",
        }
    }

    /// Parameter validity: β > 0 everywhere, β > 1 for the power family
    /// (its density must be integrable at the endpoint), ε ∈ (0,1).
    pub fn validate(&self) -> Result<()> {
        let beta = self.beta();
        if !beta.is_finite() || beta <= 0.0 {
            return Err(Error::InvalidSmoothing(format!(
                "{}: beta must be positive and finite, got {beta}",
                self.name()
            )));
        }
        match *self {
            SmoothingKind::PowerFunction { beta } if beta <= 1.0 => {
                Err(Error::InvalidSmoothing(format!(
                    "power: beta must exceed 1, got {beta}"
                )))
            }
            SmoothingKind::UniformExp { epsilon, .. }
                if !(epsilon > 0.0 && epsilon < 1.0) =>
            {
                Err(Error::InvalidSmoothing(format!(
                    "unexp: epsilon must lie in (0,1), got {epsilon}"
                )))
            }
            SmoothingKind::ShiftedGaussian { delta_mu, .. } if !delta_mu.is_finite() => Err(
                Error::InvalidSmoothing(format!("shifted-gauss: delta_mu not finite: {delta_mu}")),
            ),
            _ => Ok(()),
        }
    }

    /// Support check used by the fallible `evaluate`/`mixture_evaluate` ops.
    pub fn in_support(&self, zeta: f64) -> bool {
        if self.unit_support() {
            (0.0..=1.0).contains(&zeta)
        } else {
            zeta.is_finite()
        }
    }

    // ----- densities and CDFs ------------------------------------------------

    /// Density r(ζ|z). Infalliable hot path: assumes a validated kind and a
    /// ζ in support (power-family ζ is clamped away from the endpoints).
    pub fn pdf(&self, zeta: f64, z: bool) -> f64 {
        match *self {
            SmoothingKind::Exponential { beta } => {
                let t = if z { 1.0 - zeta } else { zeta };
                exp_pdf0(beta, t.clamp(0.0, 1.0))
            }
            SmoothingKind::UniformExp { beta, epsilon } => {
                let t = if z { 1.0 - zeta } else { zeta };
                (1.0 - epsilon) * exp_pdf0(beta, t.clamp(0.0, 1.0)) + epsilon
            }
            SmoothingKind::PowerFunction { beta } => {
                let t = if z { 1.0 - zeta } else { zeta };
                let t = t.clamp(DENSITY_EDGE, 1.0 - DENSITY_EDGE);
                (1.0 / beta) * t.powf(1.0 / beta - 1.0)
            }
            SmoothingKind::Gaussian { beta } | SmoothingKind::ShiftedGaussian { beta, .. } => {
                let u = self.standardized(zeta, z);
                beta.sqrt() * normal_pdf(u)
            }
        }
    }

    /// log r(ζ|z), computed directly (not as ln∘pdf) for tail stability.
    pub fn log_pdf(&self, zeta: f64, z: bool) -> f64 {
        match *self {
            SmoothingKind::Exponential { beta } => {
                let t = if z { 1.0 - zeta } else { zeta };
                -beta * t.clamp(0.0, 1.0) - exp_log_norm(beta)
            }
            SmoothingKind::UniformExp { .. } => self.pdf(zeta, z).ln(),
            SmoothingKind::PowerFunction { beta } => {
                let t = if z { 1.0 - zeta } else { zeta };
                let t = t.clamp(DENSITY_EDGE, 1.0 - DENSITY_EDGE);
                -beta.ln() + (1.0 / beta - 1.0) * t.ln()
            }
            SmoothingKind::Gaussian { beta } | SmoothingKind::ShiftedGaussian { beta, .. } => {
                let u = self.standardized(zeta, z);
                0.5 * (beta / (2.0 * std::f64::consts::PI)).ln() - 0.5 * u * u
            }
        }
    }

    /// CDF R(ζ|z). Never clamped: the inverse-CDF solver needs honest tail
    /// values down to subnormal ζ.
    pub fn cdf(&self, zeta: f64, z: bool) -> f64 {
        match *self {
            SmoothingKind::Exponential { beta } => {
                if z {
                    1.0 - exp_cdf0(beta, (1.0 - zeta).clamp(0.0, 1.0))
                } else {
                    exp_cdf0(beta, zeta.clamp(0.0, 1.0))
                }
            }
            SmoothingKind::UniformExp { beta, epsilon } => {
                let zc = zeta.clamp(0.0, 1.0);
                if z {
                    1.0 - ((1.0 - epsilon) * exp_cdf0(beta, 1.0 - zc) + epsilon * (1.0 - zc))
                } else {
                    (1.0 - epsilon) * exp_cdf0(beta, zc) + epsilon * zc
                }
            }
            SmoothingKind::PowerFunction { beta } => {
                if z {
                    1.0 - (1.0 - zeta).clamp(0.0, 1.0).powf(1.0 / beta)
                } else {
                    zeta.clamp(0.0, 1.0).powf(1.0 / beta)
                }
            }
            SmoothingKind::Gaussian { beta } | SmoothingKind::ShiftedGaussian { beta, .. } => {
                let _ = beta;
                normal_cdf(self.standardized(zeta, z))
            }
        }
    }

    /// ∂ pdf / ∂ζ, at the same clamping convention as `pdf`.
    pub fn pdf_dzeta(&self, zeta: f64, z: bool) -> f64 {
        match *self {
            SmoothingKind::Exponential { beta } => {
                let sign = if z { beta } else { -beta };
                sign * self.pdf(zeta, z)
            }
            SmoothingKind::UniformExp { beta, epsilon } => {
                let t = if z { 1.0 - zeta } else { zeta };
                let d_eta = -beta * exp_pdf0(beta, t.clamp(0.0, 1.0)) * (1.0 - epsilon);
                if z {
                    -d_eta
                } else {
                    d_eta
                }
            }
            SmoothingKind::PowerFunction { beta } => {
                let t = if z { 1.0 - zeta } else { zeta };
                let t = t.clamp(DENSITY_EDGE, 1.0 - DENSITY_EDGE);
                let d0 = (1.0 / beta) * (1.0 / beta - 1.0) * t.powf(1.0 / beta - 2.0);
                if z {
                    -d0
                } else {
                    d0
                }
            }
            SmoothingKind::Gaussian { beta } | SmoothingKind::ShiftedGaussian { beta, .. } => {
                -beta * (zeta - self.mean_for(z)) * self.pdf(zeta, z)
            }
        }
    }

    /// ∂ R(ζ|z) / ∂β in closed form per family.
    pub fn cdf_dbeta(&self, zeta: f64, z: bool) -> f64 {
        match *self {
            SmoothingKind::Exponential { beta } => {
                if z {
                    -exp_cdf0_dbeta(beta, (1.0 - zeta).clamp(0.0, 1.0))
                } else {
                    exp_cdf0_dbeta(beta, zeta.clamp(0.0, 1.0))
                }
            }
            SmoothingKind::UniformExp { beta, epsilon } => {
                let scale = 1.0 - epsilon;
                if z {
                    -scale * exp_cdf0_dbeta(beta, (1.0 - zeta).clamp(0.0, 1.0))
                } else {
                    scale * exp_cdf0_dbeta(beta, zeta.clamp(0.0, 1.0))
                }
            }
            SmoothingKind::PowerFunction { beta } => {
                // ∂ζ^{1/β}/∂β = −ζ^{1/β}·ln ζ / β²; the ζ→0 limit is 0.
                if z {
                    let t = (1.0 - zeta).clamp(0.0, 1.0);
                    if t == 0.0 {
                        0.0
                    } else {
                        t.powf(1.0 / beta) * t.ln() / (beta * beta)
                    }
                } else {
                    let t = zeta.clamp(0.0, 1.0);
                    if t == 0.0 {
                        0.0
                    } else {
                        -t.powf(1.0 / beta) * t.ln() / (beta * beta)
                    }
                }
            }
            SmoothingKind::Gaussian { beta } | SmoothingKind::ShiftedGaussian { beta, .. } => {
                // R = Φ((ζ−mean)√β): ∂β = φ(u)·(ζ−mean)/(2√β).
                let mean = self.mean_for(z);
                let u = (zeta - mean) * beta.sqrt();
                normal_pdf(u) * (zeta - mean) / (2.0 * beta.sqrt())
            }
        }
    }

    /// ∂ pdf / ∂β in closed form per family.
    pub fn pdf_dbeta(&self, zeta: f64, z: bool) -> f64 {
        match *self {
            SmoothingKind::Exponential { beta } => {
                let t = if z { 1.0 - zeta } else { zeta };
                let t = t.clamp(0.0, 1.0);
                // ∂β ln r = −t + 1/β − e^{−β}/(β·Z_β)
                let zb = exp_norm(beta);
                self.pdf(zeta, z) * (-t + 1.0 / beta - (-beta).exp() / (beta * zb))
            }
            SmoothingKind::UniformExp { beta, epsilon } => {
                let inner = SmoothingKind::Exponential { beta };
                (1.0 - epsilon) * inner.pdf_dbeta(zeta, z)
            }
            SmoothingKind::PowerFunction { beta } => {
                let t = if z { 1.0 - zeta } else { zeta };
                let t = t.clamp(DENSITY_EDGE, 1.0 - DENSITY_EDGE);
                // ∂β ln r = −1/β − ln t / β²
                self.pdf(zeta, z) * (-1.0 / beta - t.ln() / (beta * beta))
            }
            SmoothingKind::Gaussian { beta } | SmoothingKind::ShiftedGaussian { beta, .. } => {
                let mean = self.mean_for(z);
                let d = zeta - mean;
                self.pdf(zeta, z) * (0.5 / beta - 0.5 * d * d)
            }
        }
    }

    /// ∂ pdf / ∂Δμ (zero except for ShiftedGaussian).
    pub fn pdf_ddelta(&self, zeta: f64, z: bool) -> f64 {
        match *self {
            SmoothingKind::ShiftedGaussian { beta, .. } => {
                let d = zeta - self.mean_for(z);
                beta * d * self.pdf(zeta, z)
            }
            _ => 0.0,
        }
    }

    // ----- fallible ops (the spec surface) -----------------------------------

    /// Density, CDF, and log-density with full validation.
    pub fn evaluate(&self, zeta: f64, z: bool) -> Result<Evaluation> {
        self.validate()?;
        if !self.in_support(zeta) {
            return Err(Error::OutsideSupport(format!(
                "zeta={zeta} outside the {} support",
                self.name()
            )));
        }
        Ok(Evaluation {
            pdf: self.pdf(zeta, z),
            cdf: self.cdf(zeta, z),
            log_pdf: self.log_pdf(zeta, z),
        })
    }

    /// Per-unit augmentation coefficients b_i = log r(ζ_i|1) − log r(ζ_i|0),
    /// c_i = log r(ζ_i|0) for a whole ζ vector.
    pub fn coefficients(&self, zeta: &[f64]) -> Result<AugmentedCoefficients> {
        self.validate()?;
        let mut b = Vec::with_capacity(zeta.len());
        let mut c = Vec::with_capacity(zeta.len());
        for (i, &x) in zeta.iter().enumerate() {
            if !self.in_support(x) {
                return Err(Error::OutsideSupport(format!(
                    "zeta[{i}]={x} outside the {} support",
                    self.name()
                )));
            }
            let (bi, ci) = self.coefficient_pair(x);
            b.push(bi);
            c.push(ci);
        }
        Ok(AugmentedCoefficients {
            b: b.into(),
            c: c.into(),
        })
    }

    /// Scalar (b, c) at one point (hot path; assumes validated kind).
    pub fn coefficient_pair(&self, zeta: f64) -> (f64, f64) {
        match *self {
            SmoothingKind::Exponential { beta } => {
                let zc = zeta.clamp(0.0, 1.0);
                (beta * (2.0 * zc - 1.0), -beta * zc - exp_log_norm(beta))
            }
            SmoothingKind::PowerFunction { beta } => {
                let t = zeta.clamp(DENSITY_EDGE, 1.0 - DENSITY_EDGE);
                let s = 1.0 / beta;
                (
                    (s - 1.0) * ((1.0 - t).ln() - t.ln()),
                    -beta.ln() + (s - 1.0) * t.ln(),
                )
            }
            SmoothingKind::Gaussian { beta } => {
                let c = 0.5 * (beta / (2.0 * std::f64::consts::PI)).ln() - 0.5 * beta * zeta * zeta;
                (beta * (zeta - 0.5), c)
            }
            SmoothingKind::ShiftedGaussian { beta, delta_mu } => {
                let t0 = zeta - delta_mu;
                let c = 0.5 * (beta / (2.0 * std::f64::consts::PI)).ln() - 0.5 * beta * t0 * t0;
                (beta * (t0 - 0.5), c)
            }
            SmoothingKind::UniformExp { .. } => {
                (
                    self.log_pdf(zeta, true) - self.log_pdf(zeta, false),
                    self.log_pdf(zeta, false),
                )
            }
        }
    }

    /// Derivatives (∂b/∂ζ, ∂c/∂ζ) at one point — the ζ-gradient path of the
    /// relaxed prior.
    pub fn coefficient_grads(&self, zeta: f64) -> (f64, f64) {
        match *self {
            SmoothingKind::Exponential { beta } => (2.0 * beta, -beta),
            SmoothingKind::PowerFunction { beta } => {
                let t = zeta.clamp(DENSITY_EDGE, 1.0 - DENSITY_EDGE);
                let s = 1.0 / beta;
                ((s - 1.0) * (-1.0 / (1.0 - t) - 1.0 / t), (s - 1.0) / t)
            }
            SmoothingKind::Gaussian { beta } => (beta, -beta * zeta),
            SmoothingKind::ShiftedGaussian { beta, delta_mu } => {
                (beta, -beta * (zeta - delta_mu))
            }
            SmoothingKind::UniformExp { .. } => {
                let p0 = self.pdf(zeta, false);
                let p1 = self.pdf(zeta, true);
                let d0 = self.pdf_dzeta(zeta, false);
                let d1 = self.pdf_dzeta(zeta, true);
                (d1 / p1 - d0 / p0, d0 / p0)
            }
        }
    }

    // ----- two-component mixtures --------------------------------------------

    /// Mixture density (1−q)r(ζ|0) + q·r(ζ|1). Hot path, assumes valid q.
    pub fn mixture_pdf(&self, q: f64, zeta: f64) -> f64 {
        (1.0 - q) * self.pdf(zeta, false) + q * self.pdf(zeta, true)
    }

    /// Mixture CDF (1−q)R(ζ|0) + q·R(ζ|1).
    pub fn mixture_cdf(&self, q: f64, zeta: f64) -> f64 {
        (1.0 - q) * self.cdf(zeta, false) + q * self.cdf(zeta, true)
    }

    /// log mixture density, stable deep in the tails where one component
    /// underflows.
    pub fn mixture_log_pdf(&self, q: f64, zeta: f64) -> f64 {
        let l0 = if q < 1.0 {
            (1.0 - q).ln() + self.log_pdf(zeta, false)
        } else {
            f64::NEG_INFINITY
        };
        let l1 = if q > 0.0 {
            q.ln() + self.log_pdf(zeta, true)
        } else {
            f64::NEG_INFINITY
        };
        logaddexp(l0, l1)
    }

    /// ∂ mixture cdf / ∂β.
    pub fn mixture_cdf_dbeta(&self, q: f64, zeta: f64) -> f64 {
        (1.0 - q) * self.cdf_dbeta(zeta, false) + q * self.cdf_dbeta(zeta, true)
    }

    /// Validated mixture evaluation (the spec op): errors on q ∉ [0,1] or ζ
    /// outside the support.
    pub fn mixture_evaluate(&self, q: f64, zeta: f64) -> Result<MixtureEvaluation> {
        self.validate()?;
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::InvalidArgument(format!(
                "mixture weight q={q} outside [0,1]"
            )));
        }
        if !self.in_support(zeta) {
            return Err(Error::OutsideSupport(format!(
                "zeta={zeta} outside the {} support",
                self.name()
            )));
        }
        Ok(MixtureEvaluation {
            pdf: self.mixture_pdf(q, zeta),
            cdf: self.mixture_cdf(q, zeta),
        })
    }

    // ----- internals ----------------------------------------------------------

    fn mean_for(&self, z: bool) -> f64 {
        let base = if z { 1.0 } else { 0.0 };
        base + self.delta_mu()
    }

    fn standardized(&self, zeta: f64, z: bool) -> f64 {
        (zeta - self.mean_for(z)) * self.beta().sqrt()
    }
}

/// Normalizer Z_β = (1−e^{−β})/β of the [0,1]-truncated exponential.
fn exp_norm(beta: f64) -> f64 {
    (-(-beta).exp_m1()) / beta
}

/// ln Z_β, stable for all β > 0.
fn exp_log_norm(beta: f64) -> f64 {
    (-(-beta).exp_m1()).ln() - beta.ln()
}

/// z=0 exponential density e^{−βt}/Z_β for t ∈ [0,1].
fn exp_pdf0(beta: f64, t: f64) -> f64 {
    (-beta * t).exp() / exp_norm(beta)
}

/// z=0 exponential CDF (1−e^{−βt})/(1−e^{−β}).
fn exp_cdf0(beta: f64, t: f64) -> f64 {
    (-(-beta * t).exp_m1()) / (-(-beta).exp_m1())
}

/// ∂/∂β of the z=0 exponential CDF (quotient rule).
fn exp_cdf0_dbeta(beta: f64, t: f64) -> f64 {
    let d = -(-beta).exp_m1(); // 1 − e^{−β}
    let n = -(-beta * t).exp_m1(); // 1 − e^{−βt}
    (t * (-beta * t).exp() * d - n * (-beta).exp()) / (d * d)
}

/// β validation grids quoted per family (selection grids), plus the
/// tradeoff-experiment grids, documented as named presets.
pub mod presets {
    /// Selection grid for exponential smoothing.
    pub const EXPONENTIAL: [f64; 4] = [8.0, 10.0, 12.0, 16.0];
    /// Selection grid for uniform+exp smoothing (with `UNIFORM_EXP_EPSILON`).
    pub const UNIFORM_EXP: [f64; 4] = [16.0, 20.0, 30.0, 40.0];
    /// Default mixing floor for uniform+exp.
    pub const UNIFORM_EXP_EPSILON: f64 = 0.05;
    /// Selection grid for power-function smoothing.
    pub const POWER_FUNCTION: [f64; 4] = [15.0, 20.0, 30.0, 40.0];
    /// Selection grid for Gaussian smoothing and the Gaussian-integral prior.
    pub const GAUSSIAN: [f64; 4] = [20.0, 25.0, 30.0, 40.0];
    /// Gradient-variance tradeoff grid, exponential branch.
    pub const TRADEOFF_EXPONENTIAL: [f64; 8] = [8.0, 9.0, 10.0, 11.0, 12.0, 13.0, 14.0, 15.0];
    /// Gradient-variance tradeoff grid, power branch.
    pub const TRADEOFF_POWER: [f64; 8] = [10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0];
}
