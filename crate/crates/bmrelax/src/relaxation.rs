//! The two continuous relaxations of the Boltzmann prior: the mean-field
//! overlapping relaxation and the Gaussian-integral prior.
//!
//! **Mean-field path.** The marginal p(ζ) = Σ_z p(z)·r(ζ|z) rewrites as an
//! augmented Boltzmann machine over z with per-unit energy shifts b(ζ), c(ζ).
//! Its log-partition (the intractable piece) is lower-bounded by fitting a
//! factorial m(z) with sequential coordinate sweeps; the training-time value
//! is H(m) − Ê(m), unnormalized (−log Z_θ is constant across the importance
//! samples inside one bound evaluation and enters only at reporting time).
//! Gradients follow the envelope form: m is treated as a constant, so the
//! parameter gradient is the familiar positive-phase-minus-negative-phase
//! moment difference, and the ζ gradient uses the closed-form ∂b/∂ζ, ∂c/∂ζ.
//!
//! **Gaussian-integral path.** Choosing Gaussian smoothing with shared
//! precision P = W + βI makes the pairwise terms cancel, so z marginalizes
//! analytically: log p(ζ) = ½log|P/2π| − ½ζᵀPζ + Σ softplus(a + Pζ − β/2),
//! again unnormalized. P must be positive definite, which bounds β below by
//! the most negative eigenvalue of W.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::math::{
    bernoulli_entropy, cholesky, cholesky_inverse, cholesky_log_det, sigmoid, softplus,
    LogSumExp,
};
use crate::rbm::{augmented_energy, exact_augmented_log_partition, RBM};
use crate::smoothing::SmoothingKind;

/// Marginal clamp applied before entropies and logs (0·log 0 := 0).
pub const M_CLAMP: f64 = 1e-7;
/// Exact augmented log-partitions enumerate 2^D states; refuse beyond this.
pub const EXACT_KL_MAX_D: usize = 20;

/// A fitted factorial approximation m(z) = ∏ mᵢ^{zᵢ}(1−mᵢ)^{1−zᵢ} to the
/// augmented posterior p̂(z|ζ), with the quantities training needs.
#[derive(Debug, Clone)]
pub struct MeanFieldSolution {
    /// Per-unit marginals m_i = m(z_i = 1), clamped inside (0, 1).
    pub m: Array1<f64>,
    /// Factorial entropy H(m), in [0, D·log 2].
    pub entropy: f64,
    /// H(m) − Ê(m): the relaxed log-probability estimate, unnormalized.
    pub unnormalized_log_prob: f64,
    /// KL(m ‖ p̂) when computed exactly (small D only); None otherwise.
    pub kl_to_target: Option<f64>,
}

fn check_coeffs(rbm: &RBM, coeffs: &crate::rbm::AugmentedCoefficients) -> Result<()> {
    if coeffs.len() != rbm.d() {
        return Err(Error::dim("augmented coefficients", rbm.d(), coeffs.len()));
    }
    Ok(())
}

/// Fit the factorial mean-field approximation by `iterations` full
/// sequential sweeps of mᵢ ← σ(aᵢ + bᵢ + Σⱼ Wᵢⱼ mⱼ), initialized at the
/// couplings-free solution mᵢ = σ(aᵢ + bᵢ).
pub fn mean_field_fit(
    rbm: &RBM,
    coeffs: &crate::rbm::AugmentedCoefficients,
    iterations: usize,
) -> Result<MeanFieldSolution> {
    let (solution, _) = mean_field_fit_inner(rbm, coeffs, iterations, false)?;
    Ok(solution)
}

/// Like `mean_field_fit`, additionally recording the marginals after
/// initialization and after each sweep (so `trace.len() == iterations + 1`).
/// This is what the KL-per-sweep diagnostics consume.
pub fn mean_field_fit_trace(
    rbm: &RBM,
    coeffs: &crate::rbm::AugmentedCoefficients,
    iterations: usize,
) -> Result<(MeanFieldSolution, Vec<Array1<f64>>)> {
    mean_field_fit_inner(rbm, coeffs, iterations, true)
}

fn mean_field_fit_inner(
    rbm: &RBM,
    coeffs: &crate::rbm::AugmentedCoefficients,
    iterations: usize,
    trace: bool,
) -> Result<(MeanFieldSolution, Vec<Array1<f64>>)> {
    check_coeffs(rbm, coeffs)?;
    if iterations == 0 {
        return Err(Error::InvalidArgument(
            "mean_field_fit needs at least one sweep".into(),
        ));
    }
    let d = rbm.d();
    let a = rbm.a();
    let w = rbm.w();
    let mut m = Array1::zeros(d);
    for i in 0..d {
        m[i] = sigmoid(a[i] + coeffs.b[i]);
    }
    let mut history = Vec::new();
    if trace {
        history.push(m.clone());
    }
    for _ in 0..iterations {
        for i in 0..d {
            let mut field = a[i] + coeffs.b[i];
            for j in 0..d {
                field += w[[i, j]] * m[j];
            }
            m[i] = sigmoid(field);
        }
        if trace {
            history.push(m.clone());
        }
    }
    m.mapv_inplace(|v| v.clamp(M_CLAMP, 1.0 - M_CLAMP));
    let entropy: f64 = m.iter().map(|&v| bernoulli_entropy(v)).sum();
    let e_hat = augmented_energy(rbm, coeffs, &m)?;
    let solution = MeanFieldSolution {
        m,
        entropy,
        unnormalized_log_prob: entropy - e_hat,
        kl_to_target: None,
    };
    Ok((solution, history))
}

/// Exact KL(m ‖ p̂) of a factorial distribution to the augmented Boltzmann
/// posterior: Ê(m) + log Σ_z e^{−Ê(z)} − H(m). Enumerates 2^D states, so
/// D ≤ 20; always ≥ 0 (clamped at 0 against rounding).
pub fn mean_field_kl_exact(
    rbm: &RBM,
    coeffs: &crate::rbm::AugmentedCoefficients,
    m: &Array1<f64>,
) -> Result<f64> {
    check_coeffs(rbm, coeffs)?;
    if m.len() != rbm.d() {
        return Err(Error::dim("mean-field marginals", rbm.d(), m.len()));
    }
    if rbm.d() > EXACT_KL_MAX_D {
        return Err(Error::TooLarge {
            context: "mean_field_kl_exact",
            d: rbm.d(),
            limit: EXACT_KL_MAX_D,
        });
    }
    let mc = m.mapv(|v| v.clamp(M_CLAMP, 1.0 - M_CLAMP));
    let entropy: f64 = mc.iter().map(|&v| bernoulli_entropy(v)).sum();
    let e_hat = augmented_energy(rbm, coeffs, &mc)?;
    let log_z_hat = exact_augmented_log_partition(rbm, coeffs)?;
    Ok((e_hat + log_z_hat - entropy).max(0.0))
}

/// Relaxed log p(ζ) via the mean-field substitution: computes the augmented
/// coefficients for this ζ, fits m, and returns H(m) − Ê(m) (unnormalized)
/// together with the fitted solution (its `kl_to_target` is filled in
/// exactly when D permits enumeration).
pub fn relaxed_log_prob(
    rbm: &RBM,
    kind: SmoothingKind,
    zeta: &Array1<f64>,
    mf_iterations: usize,
) -> Result<(f64, MeanFieldSolution)> {
    let coeffs = kind.coefficients(zeta.as_slice().expect("contiguous"))?;
    let mut solution = mean_field_fit(rbm, &coeffs, mf_iterations)?;
    if rbm.d() <= 12 {
        solution.kl_to_target = Some(mean_field_kl_exact(rbm, &coeffs, &solution.m)?);
    }
    Ok((solution.unnormalized_log_prob, solution))
}

/// Negative-phase moments E[z] and E[z zᵀ] under the model distribution,
/// estimated from a sampler batch or computed exactly by enumeration.
#[derive(Debug, Clone)]
pub struct NegativePhase {
    pub mean_z: Array1<f64>,
    pub mean_zz: Array2<f64>,
}

impl NegativePhase {
    /// Empirical moments of a batch of binary states (rows are samples).
    pub fn from_samples(samples: &Array2<f64>) -> Result<Self> {
        let n = samples.nrows();
        if n == 0 {
            return Err(Error::InvalidArgument(
                "negative-phase batch is empty".into(),
            ));
        }
        let d = samples.ncols();
        let mut mean_z = Array1::zeros(d);
        let mut mean_zz = Array2::zeros((d, d));
        for row in samples.rows() {
            for i in 0..d {
                mean_z[i] += row[i];
                for j in 0..d {
                    mean_zz[[i, j]] += row[i] * row[j];
                }
            }
        }
        mean_z /= n as f64;
        mean_zz /= n as f64;
        Ok(NegativePhase { mean_z, mean_zz })
    }

    /// Exact moments by 2^D enumeration (test oracle and small-D training).
    pub fn exact(rbm: &RBM) -> Result<Self> {
        let (mean_z, mean_zz) = crate::rbm::exact_moments(rbm)?;
        Ok(NegativePhase { mean_z, mean_zz })
    }
}

/// Parameter and input gradients of a relaxed prior log-probability.
#[derive(Debug, Clone)]
pub struct PriorGrads {
    pub grad_a: Array1<f64>,
    /// Symmetric; entry (i,j) is the derivative with respect to the tied
    /// pair {Wᵢⱼ, Wⱼᵢ}. Zero on the diagonal and off the coupling mask.
    pub grad_w: Array2<f64>,
    pub grad_zeta: Array1<f64>,
}

/// Gradients of [H(m) − Ê(m)] − log Z_θ with m held fixed (the mean-field
/// fixed point is not differentiated through; at convergence the envelope
/// theorem makes that exact). The −log Z_θ term contributes the negative
/// phase. `negative_samples` rows are model samples z ~ p(z).
pub fn relaxed_log_prob_grads(
    rbm: &RBM,
    kind: SmoothingKind,
    zeta: &Array1<f64>,
    m: &MeanFieldSolution,
    negative_samples: &Array2<f64>,
) -> Result<PriorGrads> {
    let neg = NegativePhase::from_samples(negative_samples)?;
    relaxed_log_prob_grads_with_moments(rbm, kind, zeta, m, &neg)
}

/// Core of `relaxed_log_prob_grads`, taking precomputed negative-phase
/// moments (shared across a batch, or exact for test oracles).
pub fn relaxed_log_prob_grads_with_moments(
    rbm: &RBM,
    kind: SmoothingKind,
    zeta: &Array1<f64>,
    m: &MeanFieldSolution,
    neg: &NegativePhase,
) -> Result<PriorGrads> {
    let d = rbm.d();
    if zeta.len() != d {
        return Err(Error::dim("zeta", d, zeta.len()));
    }
    if m.m.len() != d {
        return Err(Error::dim("mean-field marginals", d, m.m.len()));
    }
    if neg.mean_z.len() != d {
        return Err(Error::dim("negative-phase moments", d, neg.mean_z.len()));
    }
    // Positive phase: −∇Ê(m). ∂Ê/∂aᵢ = −mᵢ, ∂Ê/∂Wᵢⱼ(tied) = −mᵢmⱼ.
    let grad_a = &m.m - &neg.mean_z;
    // Filled per unordered pair so the tied slots are bitwise equal even if
    // the moment matrix carries rounding asymmetry.
    let mut grad_w = Array2::zeros((d, d));
    for i in 0..d {
        for j in (i + 1)..d {
            if rbm.mask_allows(i, j) {
                let v = m.m[i] * m.m[j] - neg.mean_zz[[i, j]];
                grad_w[[i, j]] = v;
                grad_w[[j, i]] = v;
            }
        }
    }
    // ζ gradient: ∂/∂ζᵢ [bᵢmᵢ + cᵢ] with the closed-form coefficient slopes.
    let mut grad_zeta = Array1::zeros(d);
    for i in 0..d {
        let (db, dc) = kind.coefficient_grads(zeta[i]);
        grad_zeta[i] = db * m.m[i] + dc;
    }
    Ok(PriorGrads {
        grad_a,
        grad_w,
        grad_zeta,
    })
}

/// Prepared Gaussian-integral prior: precision P = W + βI with its Cholesky
/// factor, inverse, and the constant ½ log |P/(2π)|.
#[derive(Debug, Clone)]
pub struct GitPrior {
    pub beta: f64,
    pub precision: Array2<f64>,
    chol: Array2<f64>,
    precision_inv: Array2<f64>,
    pub log_det_term: f64,
}

impl GitPrior {
    /// Lower-triangular Cholesky factor of the precision.
    pub fn chol(&self) -> &Array2<f64> {
        &self.chol
    }

    /// (W + βI)⁻¹, the shared covariance of the mixture components.
    pub fn precision_inverse(&self) -> &Array2<f64> {
        &self.precision_inv
    }
}

/// Power-iteration estimate of |λ_min(W)| — the smallest β that makes
/// W + βI positive definite. Uses a shifted matrix (W − sI, s = max row
/// sum) so the dominant eigenvalue maps to the most negative one of W.
fn lambda_min_bound(w: &Array2<f64>) -> f64 {
    let d = w.nrows();
    if d == 0 {
        return 0.0;
    }
    // Gershgorin shift guarantees s − λ(W) ≥ 0 with the most negative λ
    // becoming the dominant eigenvalue of sI − W.
    let shift = w
        .rows()
        .into_iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0_f64, f64::max)
        .max(1.0);
    let mut v = Array1::from_elem(d, (d as f64).sqrt().recip());
    // Deterministic asymmetric perturbation so v isn't orthogonal to the
    // dominant eigenvector by symmetry accidents.
    for i in 0..d {
        v[i] += 1e-3 * ((i % 7) as f64 - 3.0);
    }
    let mut eig = 0.0;
    for _ in 0..200 {
        // u = (sI − W) v
        let mut u = Array1::zeros(d);
        for i in 0..d {
            let mut acc = shift * v[i];
            for j in 0..d {
                acc -= w[[i, j]] * v[j];
            }
            u[i] = acc;
        }
        let norm = u.dot(&u).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        u /= norm;
        eig = norm; // Rayleigh growth factor of the normalized iterate.
        v = u;
    }
    // λ_min(W) = shift − dominant(sI − W); report |λ_min| when negative.
    (eig - shift).max(0.0)
}

/// Validate and factor the Gaussian-integral precision W + βI.
pub fn git_prepare(rbm: &RBM, beta: f64) -> Result<GitPrior> {
    if !(beta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "Gaussian-integral beta must be positive, got {beta}"
        )));
    }
    let d = rbm.d();
    let mut precision = rbm.w().clone();
    for i in 0..d {
        precision[[i, i]] += beta;
    }
    let chol = match cholesky(&precision) {
        Ok(l) => l,
        Err(_) => {
            return Err(Error::NotPositiveDefinite {
                beta,
                required_min: lambda_min_bound(rbm.w()),
            })
        }
    };
    let log_det_term = 0.5 * cholesky_log_det(&chol)
        - 0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln();
    let mut precision_inv = cholesky_inverse(&chol);
    // The triangular solves leave (i,j) and (j,i) a few ulps apart; tied
    // coupling gradients read both slots and must match bit for bit, so
    // restore exact symmetry here.
    for i in 0..d {
        for j in 0..i {
            let avg = 0.5 * (precision_inv[[i, j]] + precision_inv[[j, i]]);
            precision_inv[[i, j]] = avg;
            precision_inv[[j, i]] = avg;
        }
    }
    Ok(GitPrior {
        beta,
        precision,
        chol,
        precision_inv,
        log_det_term,
    })
}

/// Unnormalized Gaussian-integral log-density:
/// ½log|P/2π| − ½ζᵀPζ + Σᵢ softplus(aᵢ + (Pζ)ᵢ − β/2).
pub fn git_log_prob(prior: &GitPrior, rbm: &RBM, zeta: &Array1<f64>) -> Result<f64> {
    let d = rbm.d();
    if zeta.len() != d {
        return Err(Error::dim("zeta", d, zeta.len()));
    }
    if prior.precision.nrows() != d {
        return Err(Error::dim("GIT prior", d, prior.precision.nrows()));
    }
    let c = prior.precision.dot(zeta);
    let quad = 0.5 * zeta.dot(&c);
    let mut acc = prior.log_det_term - quad;
    let a = rbm.a();
    for i in 0..d {
        acc += softplus(a[i] + c[i] - prior.beta / 2.0);
    }
    Ok(acc)
}

/// Gradients of [git_log_prob − log Z_θ]. With s = σ(a + Pζ − β/2):
///   ∂/∂a  = s − E_neg[z]
///   ∂/∂Wᵢⱼ (tied pair) = (P⁻¹)ᵢⱼ − ζᵢζⱼ + sᵢζⱼ + sⱼζᵢ − E_neg[zᵢzⱼ]
///   ∂/∂ζ  = P(s − ζ)
/// The (P⁻¹)ᵢⱼ term is ∂(½log|P|)/∂Wᵢⱼ over the tied pair; the negative
/// phase again comes from −log Z_θ.
pub fn git_log_prob_grads(
    prior: &GitPrior,
    rbm: &RBM,
    zeta: &Array1<f64>,
    neg: &NegativePhase,
) -> Result<PriorGrads> {
    let d = rbm.d();
    if zeta.len() != d {
        return Err(Error::dim("zeta", d, zeta.len()));
    }
    if neg.mean_z.len() != d {
        return Err(Error::dim("negative-phase moments", d, neg.mean_z.len()));
    }
    let c = prior.precision.dot(zeta);
    let a = rbm.a();
    let s = Array1::from_shape_fn(d, |i| sigmoid(a[i] + c[i] - prior.beta / 2.0));
    let grad_a = &s - &neg.mean_z;
    // Filled per unordered pair so the tied slots are bitwise equal (the
    // two cross terms would otherwise be summed in opposite orders).
    let mut grad_w = Array2::zeros((d, d));
    for i in 0..d {
        for j in (i + 1)..d {
            if rbm.mask_allows(i, j) {
                let v = prior.precision_inv[[i, j]] - zeta[i] * zeta[j]
                    + s[i] * zeta[j]
                    + s[j] * zeta[i]
                    - neg.mean_zz[[i, j]];
                grad_w[[i, j]] = v;
                grad_w[[j, i]] = v;
            }
        }
    }
    let grad_zeta = prior.precision.dot(&(&s - zeta));
    Ok(PriorGrads {
        grad_a,
        grad_w,
        grad_zeta,
    })
}

/// Exact unnormalized log of the 2^D Gaussian-mixture form of the
/// Gaussian-integral prior: log Σ_z e^{−E(z)} N(ζ | z, P⁻¹). Enumeration
/// test oracle (D ≤ 20).
pub fn git_log_prob_enumerated(prior: &GitPrior, rbm: &RBM, zeta: &Array1<f64>) -> Result<f64> {
    let d = rbm.d();
    if d > EXACT_KL_MAX_D {
        return Err(Error::TooLarge {
            context: "git_log_prob_enumerated",
            d,
            limit: EXACT_KL_MAX_D,
        });
    }
    if zeta.len() != d {
        return Err(Error::dim("zeta", d, zeta.len()));
    }
    // log N(ζ|z,P⁻¹) = ½log|P/2π| − ½(ζ−z)ᵀP(ζ−z).
    let mut lse = LogSumExp::new();
    let mut z = Array1::zeros(d);
    for bits in 0u64..(1u64 << d) {
        for i in 0..d {
            z[i] = ((bits >> i) & 1) as f64;
        }
        let diff = zeta - &z;
        let quad = 0.5 * diff.dot(&prior.precision.dot(&diff));
        let neg_energy = -crate::rbm::energy(rbm, &z)?;
        lse.add(neg_energy + prior.log_det_term - quad);
    }
    Ok(lse.value())
}
