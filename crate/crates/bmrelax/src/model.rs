//! Importance-weighted training of a Boltzmann-prior VAE with smoothed
//! binary latents.
//!
//! The generative model is p(x|ζ)·p(ζ): a factorial Bernoulli decoder on
//! continuous latents ζ, whose prior is either the mean-field overlapping
//! relaxation of a Boltzmann machine ([`crate::relaxation::relaxed_log_prob`])
//! or the Gaussian-integral prior ([`crate::relaxation::git_log_prob`]).
//! The approximate posterior factors over `groups` blocks of latent units:
//! block g's Bernoulli logits are a network function of (x, ζ of earlier
//! blocks), and each unit's ζ is drawn by inverting the smoothing-mixture
//! CDF at a uniform ρ ([`crate::reparam::sample_inverse_cdf`]), so gradients
//! flow through the sample by the implicit function theorem.
//!
//! Gradients are hand-written reverse mode. For one datum and K posterior
//! samples the importance-weighted objective is
//!     L = log (1/K) Σ_k exp(log w_k),
//!     log w_k = log p(x|ζ_k) + λ·(log p̂(ζ_k) − log q(ζ_k|x)),
//! with log p̂ the *unnormalized* prior value and λ the KL warm-up
//! multiplier. ∇L = Σ_k softmax(log w)_k · ∇log w_k exactly, so a frozen-ρ
//! finite-difference check of the bound validates every code path. The
//! −log Z_θ term of the normalized prior enters only the Boltzmann-parameter
//! gradients, as negative-phase moments shared across the batch.
//!
//! Training metrics go to a CSV with `# key = value` comment lines followed
//! by the header `update,bound,logz,grad_norm,mf_kl_median,wall_time`;
//! `bound` is the batch-mean unnormalized objective, `logz` and
//! `mf_kl_median` are filled only on their snapshot cadences.

use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::data::bernoulli_ll_with_logits;
use crate::error::{Error, Result};
use crate::math::{log_mean_exp, mean, median, sigmoid};
use crate::nn::{Adam, Net, NetCache};
use crate::rbm::RBM;
use crate::relaxation::{
    git_log_prob, git_log_prob_grads, git_prepare, mean_field_fit, mean_field_kl_exact,
    relaxed_log_prob, relaxed_log_prob_grads_with_moments, GitPrior, MeanFieldSolution,
    NegativePhase, PriorGrads, EXACT_KL_MAX_D,
};
use crate::reparam::sample_with_grads;
use crate::rng::{self, purpose};
use crate::samplers::{
    ais_log_partition, pcd_negative_samples, population_annealing_run, AisConfig, PcdState,
    SamplerConfig, SamplerKind,
};
use crate::smoothing::SmoothingKind;

/// Architecture of one conditional network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Arch {
    /// A single affine map.
    Linear,
    /// Two tanh hidden layers of `hidden` units each.
    Mlp { hidden: usize },
}

impl Arch {
    /// The default deep architecture (two tanh layers of 200 units).
    pub fn mlp() -> Arch {
        Arch::Mlp { hidden: 200 }
    }

    fn build(&self, in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Net {
        match *self {
            Arch::Linear => Net::linear(in_dim, out_dim, rng),
            Arch::Mlp { hidden } => Net::mlp(in_dim, hidden, out_dim, rng),
        }
    }
}

/// Which continuous prior sits on the latents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PriorSpec {
    /// Mean-field overlapping relaxation with this smoothing family; the
    /// posterior uses the same family at the same β.
    Overlapping(SmoothingKind),
    /// Gaussian-integral prior with precision W + βI; the posterior then
    /// uses shifted-Gaussian smoothing with per-unit trainable β.
    Git { beta: f64 },
}

impl PriorSpec {
    fn describe(&self) -> String {
        match self {
            PriorSpec::Overlapping(kind) => format!("{}(beta={})", kind.name(), kind.beta()),
            PriorSpec::Git { beta } => format!("git(beta={beta})"),
        }
    }
}

/// Shape and composition of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Observed (binary) dimension.
    pub d_x: usize,
    /// Units on each side of the bipartite Boltzmann machine; D = d1 + d2.
    pub d1: usize,
    pub d2: usize,
    /// Number of hierarchical posterior blocks; must divide D.
    pub groups: usize,
    /// Architecture of each posterior conditional.
    pub arch: Arch,
    /// Architecture of the decoder.
    pub decoder_arch: Arch,
    /// Prior on ζ.
    pub prior: PriorSpec,
    /// Mean-field sweeps per prior evaluation (overlapping prior only).
    pub mf_iterations: usize,
}

impl ModelConfig {
    /// Total latent dimension.
    pub fn d(&self) -> usize {
        self.d1 + self.d2
    }

    /// Units per posterior block.
    pub fn group_size(&self) -> usize {
        self.d() / self.groups
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_x == 0 {
            return Err(Error::InvalidArgument("d_x must be at least 1".into()));
        }
        if self.d1 == 0 || self.d2 == 0 {
            return Err(Error::InvalidArgument(
                "both bipartite sides need at least one unit".into(),
            ));
        }
        if self.groups == 0 || self.d() % self.groups != 0 {
            return Err(Error::InvalidArgument(format!(
                "groups={} must be nonzero and divide D={}",
                self.groups,
                self.d()
            )));
        }
        match self.prior {
            PriorSpec::Overlapping(kind) => {
                kind.validate()?;
                if matches!(kind, SmoothingKind::ShiftedGaussian { .. }) {
                    return Err(Error::InvalidSmoothing(
                        "shifted-Gaussian smoothing is posterior-only; the overlapping prior \
                         needs a symmetric family"
                            .into(),
                    ));
                }
                if self.mf_iterations == 0 {
                    return Err(Error::InvalidArgument(
                        "mf_iterations must be at least 1".into(),
                    ));
                }
            }
            PriorSpec::Git { beta } => {
                if !(beta.is_finite() && beta > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "Gaussian-integral prior needs finite beta > 0, got {beta}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// All trainable state: decoder, posterior conditionals, Boltzmann machine,
/// per-unit posterior log β (Gaussian-integral models only), and the Adam
/// moments that the canonical parameter order indexes into.
///
/// The canonical parameter order — used by [`ModelState::for_each_param`],
/// [`ModelState::load_params`], the gradient vector of [`StepMetrics`], and
/// checkpoints — is: decoder, posterior nets 0..G (each net weights-then-bias
/// per layer), Boltzmann biases a, couplings W row-major (full matrix; keep
/// the symmetric slots equal), then per-unit log β if present.
#[derive(Debug, Clone)]
pub struct ModelState {
    pub config: ModelConfig,
    pub rbm: RBM,
    pub posterior: Vec<Net>,
    pub decoder: Net,
    /// Per-unit log of the posterior smoothing β (Gaussian-integral prior
    /// only; log keeps β positive under unconstrained updates).
    pub log_beta_q: Option<Array1<f64>>,
    pub adam: Adam,
    /// Number of gradient updates processed (skipped ones included).
    pub updates_done: u64,
    /// Number of updates skipped because a bound or gradient went non-finite.
    pub nan_skips: u64,
}

impl ModelState {
    /// Deterministic initialization: nets from ±1/√fan_in uniforms on
    /// dedicated init streams, Boltzmann machine with a = 0 and cross
    /// couplings ~ U(±0.01), per-unit log β at ln(prior β).
    pub fn new(config: ModelConfig, lr: f64, seed: u64) -> Result<ModelState> {
        config.validate()?;
        if !(lr.is_finite() && lr >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be finite and >= 0, got {lr}"
            )));
        }
        let d = config.d();
        let gs = config.group_size();
        let git = matches!(config.prior, PriorSpec::Git { .. });
        let decoder = {
            let mut r = rng::stream(seed, purpose::INIT, 0);
            config.decoder_arch.build(d, config.d_x, &mut r)
        };
        let mut posterior = Vec::with_capacity(config.groups);
        for g in 0..config.groups {
            let mut r = rng::stream(seed, purpose::INIT, 1 + g as u64);
            let out_dim = if git { 2 * gs } else { gs };
            posterior.push(config.arch.build(config.d_x + g * gs, out_dim, &mut r));
        }
        let rbm = {
            let mut r = rng::stream(seed, purpose::INIT, 50);
            RBM::random_bipartite(config.d1, config.d2, 0.0, 0.01, &mut r)
        };
        let log_beta_q = match config.prior {
            PriorSpec::Git { beta } => Some(Array1::from_elem(d, beta.ln())),
            PriorSpec::Overlapping(_) => None,
        };
        let mut state = ModelState {
            config,
            rbm,
            posterior,
            decoder,
            log_beta_q,
            adam: Adam::new(0, lr),
            updates_done: 0,
            nan_skips: 0,
        };
        state.adam = Adam::new(state.param_count(), lr);
        Ok(state)
    }

    /// Total scalar parameter count in the canonical order.
    pub fn param_count(&self) -> usize {
        let d = self.config.d();
        let mut n = self.decoder.param_count();
        for net in &self.posterior {
            n += net.param_count();
        }
        n += d + d * d;
        if self.log_beta_q.is_some() {
            n += d;
        }
        n
    }

    /// Visit every parameter in the canonical order.
    pub fn for_each_param(&self, f: &mut impl FnMut(f64)) {
        self.decoder.for_each_param(f);
        for net in &self.posterior {
            net.for_each_param(f);
        }
        for &v in self.rbm.a() {
            f(v);
        }
        for &v in self.rbm.w() {
            f(v);
        }
        if let Some(lb) = &self.log_beta_q {
            for &v in lb {
                f(v);
            }
        }
    }

    /// Flattened copy of all parameters in the canonical order.
    pub fn params_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        self.for_each_param(&mut |p| v.push(p));
        v
    }

    /// Overwrite every parameter from a flat slice in the canonical order.
    /// The W block must stay symmetric with a zero diagonal and respect the
    /// bipartite mask; this is the caller's contract (finite-difference
    /// probes should perturb tied coupling slots together).
    pub fn load_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::dim(
                "model parameter vector",
                self.param_count(),
                values.len(),
            ));
        }
        let mut it = values.iter().copied();
        self.decoder.load_params(&mut it);
        for net in &mut self.posterior {
            net.load_params(&mut it);
        }
        let d = self.config.d();
        {
            let a = self.rbm.a_mut();
            for i in 0..d {
                a[i] = it.next().expect("length checked");
            }
        }
        {
            let w = self.rbm.w_mut();
            for i in 0..d {
                for j in 0..d {
                    w[[i, j]] = it.next().expect("length checked");
                }
            }
        }
        if let Some(lb) = &mut self.log_beta_q {
            for i in 0..d {
                lb[i] = it.next().expect("length checked");
            }
        }
        Ok(())
    }

    /// The smoothing family of latent unit `i`, given that unit's mean shift
    /// (ignored except under the Gaussian-integral prior).
    fn unit_kind(&self, i: usize, delta_mu: f64) -> SmoothingKind {
        match self.config.prior {
            PriorSpec::Overlapping(kind) => kind,
            PriorSpec::Git { .. } => SmoothingKind::ShiftedGaussian {
                beta: self.log_beta_q.as_ref().expect("git posterior beta")[i].exp(),
                delta_mu,
            },
        }
    }
}

/// One posterior draw with everything the backward pass needs.
#[derive(Debug, Clone)]
pub struct PosteriorSample {
    pub zeta: Array1<f64>,
    /// log q(ζ|x) = Σᵢ log[(1−qᵢ)r(ζᵢ|0) + qᵢr(ζᵢ|1)].
    pub log_q: f64,
    pub logits: Array1<f64>,
    pub q: Array1<f64>,
    /// Per-unit mean shift (Gaussian-integral models only).
    pub delta_mu: Option<Array1<f64>>,
    /// Per-unit smoothing family actually used (carries β and Δμ).
    pub kinds: Vec<SmoothingKind>,
    /// ∂ζᵢ/∂qᵢ from the implicit function theorem.
    pub dzeta_dq: Array1<f64>,
    /// ∂ζᵢ/∂βᵢ (zero where β is not trainable).
    pub dzeta_dbeta: Array1<f64>,
    /// Units whose mixture density underflowed at the root (capped grads).
    pub saturated: usize,
    pub(crate) caches: Vec<NetCache>,
}

/// Draw ζ ~ q(·|x) hierarchically: block g's conditional network reads
/// (x, ζ of blocks < g), its logits define per-unit mixture weights
/// qᵢ = σ(logitᵢ), and each ζᵢ inverts the mixture CDF at ρᵢ ~ U[0,1).
/// Consumes exactly D uniforms in unit order, so draws for earlier blocks
/// never depend on later blocks' parameters.
pub fn posterior_sample(
    state: &ModelState,
    x: &Array1<f64>,
    rng: &mut impl Rng,
) -> Result<PosteriorSample> {
    let cfg = &state.config;
    if x.len() != cfg.d_x {
        return Err(Error::dim("posterior input x", cfg.d_x, x.len()));
    }
    let d = cfg.d();
    let gs = cfg.group_size();
    let git = matches!(cfg.prior, PriorSpec::Git { .. });
    let mut zeta = Array1::zeros(d);
    let mut logits = Array1::zeros(d);
    let mut q = Array1::zeros(d);
    let mut delta_mu = if git { Some(Array1::zeros(d)) } else { None };
    let mut kinds = Vec::with_capacity(d);
    let mut dzeta_dq = Array1::zeros(d);
    let mut dzeta_dbeta = Array1::zeros(d);
    let mut caches = Vec::with_capacity(cfg.groups);
    let mut log_q = 0.0;
    let mut saturated = 0usize;
    for g in 0..cfg.groups {
        let mut input = Vec::with_capacity(cfg.d_x + g * gs);
        input.extend(x.iter().copied());
        input.extend(zeta.iter().take(g * gs).copied());
        let input = Array1::from_vec(input);
        let (out, cache) = state.posterior[g].forward(&input);
        caches.push(cache);
        for loc in 0..gs {
            let i = g * gs + loc;
            let l = out[loc];
            let qi = sigmoid(l);
            let kind = state.unit_kind(i, if git { out[gs + loc] } else { 0.0 });
            let rho: f64 = rng.gen();
            let (z, grads) = sample_with_grads(kind, qi, rho)?;
            zeta[i] = z;
            logits[i] = l;
            q[i] = qi;
            if let Some(dm) = delta_mu.as_mut() {
                dm[i] = out[gs + loc];
            }
            kinds.push(kind);
            dzeta_dq[i] = grads.dzeta_dq;
            dzeta_dbeta[i] = grads.dzeta_dbeta;
            if grads.saturated {
                saturated += 1;
            }
            log_q += kind.mixture_log_pdf(qi, z);
        }
    }
    Ok(PosteriorSample {
        zeta,
        log_q,
        logits,
        q,
        delta_mu,
        kinds,
        dzeta_dq,
        dzeta_dbeta,
        saturated,
        caches,
    })
}

/// log p(x|ζ) under the factorial Bernoulli decoder. A decoder with all-zero
/// parameters gives exactly −d_x·ln 2 for any x.
pub fn decoder_log_likelihood(
    state: &ModelState,
    x: &Array1<f64>,
    zeta: &Array1<f64>,
) -> Result<f64> {
    if x.len() != state.config.d_x {
        return Err(Error::dim("decoder target x", state.config.d_x, x.len()));
    }
    if zeta.len() != state.config.d() {
        return Err(Error::dim("decoder input zeta", state.config.d(), zeta.len()));
    }
    let (logits, _) = state.decoder.forward(zeta);
    bernoulli_ll_with_logits(x, &logits)
}

/// Per-update prepared prior (the Gaussian-integral precision is factored
/// once per update, between coupling changes).
enum PriorPrep {
    Overlapping(SmoothingKind),
    Git(GitPrior),
}

fn prepare_prior(state: &ModelState) -> Result<PriorPrep> {
    match state.config.prior {
        PriorSpec::Overlapping(kind) => Ok(PriorPrep::Overlapping(kind)),
        PriorSpec::Git { beta } => Ok(PriorPrep::Git(git_prepare(&state.rbm, beta)?)),
    }
}

fn prior_value(
    state: &ModelState,
    prep: &PriorPrep,
    zeta: &Array1<f64>,
) -> Result<(f64, Option<MeanFieldSolution>)> {
    match prep {
        PriorPrep::Overlapping(kind) => {
            let (v, sol) = relaxed_log_prob(&state.rbm, *kind, zeta, state.config.mf_iterations)?;
            Ok((v, Some(sol)))
        }
        PriorPrep::Git(prior) => Ok((git_log_prob(prior, &state.rbm, zeta)?, None)),
    }
}

fn prior_grads(
    state: &ModelState,
    prep: &PriorPrep,
    zeta: &Array1<f64>,
    mf: Option<&MeanFieldSolution>,
    neg: &NegativePhase,
) -> Result<PriorGrads> {
    match prep {
        PriorPrep::Overlapping(kind) => relaxed_log_prob_grads_with_moments(
            &state.rbm,
            *kind,
            zeta,
            mf.expect("overlapping prior keeps its mean-field solution"),
            neg,
        ),
        PriorPrep::Git(prior) => git_log_prob_grads(prior, &state.rbm, zeta, neg),
    }
}

/// Direct (ζ held fixed) derivatives of log q's per-unit term
/// log[(1−q)r(ζ|0) + q·r(ζ|1)] — the score parts of the pathwise chain rule.
struct UnitQGrads {
    dlogq_dzeta: f64,
    dlogq_dq: f64,
    dlogq_dbeta: f64,
    dlogq_ddelta: f64,
}

fn unit_logq_grads(kind: SmoothingKind, q: f64, zeta: f64) -> UnitQGrads {
    let mp = kind.mixture_pdf(q, zeta).max(f64::MIN_POSITIVE);
    let p0 = kind.pdf(zeta, false);
    let p1 = kind.pdf(zeta, true);
    let dz = (1.0 - q) * kind.pdf_dzeta(zeta, false) + q * kind.pdf_dzeta(zeta, true);
    let db = (1.0 - q) * kind.pdf_dbeta(zeta, false) + q * kind.pdf_dbeta(zeta, true);
    let dd = (1.0 - q) * kind.pdf_ddelta(zeta, false) + q * kind.pdf_ddelta(zeta, true);
    UnitQGrads {
        dlogq_dzeta: dz / mp,
        dlogq_dq: (p1 - p0) / mp,
        dlogq_dbeta: db / mp,
        dlogq_ddelta: dd / mp,
    }
}

/// K-sample importance-weighted bound with an explicit warm-up multiplier λ
/// on the (prior − log q) terms; `iw_bound` is the λ = 1 case. Returns the
/// bound and the raw per-sample log-weights.
pub fn iw_bound_warmed(
    state: &ModelState,
    x: &Array1<f64>,
    k: usize,
    lambda: f64,
    rng: &mut impl Rng,
) -> Result<(f64, Vec<f64>)> {
    if k == 0 {
        return Err(Error::InvalidArgument(
            "importance-weighted bound needs K >= 1 samples".into(),
        ));
    }
    if !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "warm-up multiplier must be finite, got {lambda}"
        )));
    }
    let prep = prepare_prior(state)?;
    let mut lws = Vec::with_capacity(k);
    for _ in 0..k {
        let ps = posterior_sample(state, x, rng)?;
        let dec = decoder_log_likelihood(state, x, &ps.zeta)?;
        let (pv, _) = prior_value(state, &prep, &ps.zeta)?;
        lws.push(dec + lambda * (pv - ps.log_q));
    }
    Ok((log_mean_exp(&lws), lws))
}

/// K-sample importance-weighted evidence bound (unnormalized by log Z_θ:
/// subtract a partition-function estimate to compare against likelihoods).
pub fn iw_bound(
    state: &ModelState,
    x: &Array1<f64>,
    k: usize,
    rng: &mut impl Rng,
) -> Result<(f64, Vec<f64>)> {
    iw_bound_warmed(state, x, k, 1.0, rng)
}

/// What one gradient update reports.
#[derive(Debug, Clone)]
pub struct StepMetrics {
    /// Batch-mean warmed bound (NaN when the update was skipped for
    /// non-finite values).
    pub bound: f64,
    /// L2 norm of the full gradient vector.
    pub grad_norm: f64,
    /// True when the update was skipped (non-finite bound or gradient);
    /// parameters and optimizer moments are untouched in that case.
    pub skipped: bool,
    /// Total saturated inverse-CDF roots seen this update.
    pub saturated_units: u64,
    /// The loss gradient in the canonical parameter order (the loss is the
    /// negative bound, so Adam descends it directly).
    pub grads: Vec<f64>,
}

/// One importance-weighted update on a batch (rows of `batch`): K posterior
/// samples per datum, softmax-weighted pathwise gradients, a shared
/// negative phase for the Boltzmann parameters, and one Adam step. Counts
/// the update even when a non-finite bound/gradient forces a skip.
pub fn iw_gradient_step(
    state: &mut ModelState,
    batch: &Array2<f64>,
    k: usize,
    lambda: f64,
    neg: &NegativePhase,
    rng: &mut impl Rng,
) -> Result<StepMetrics> {
    if k == 0 {
        return Err(Error::InvalidArgument(
            "gradient step needs K >= 1 samples".into(),
        ));
    }
    if batch.nrows() == 0 {
        return Err(Error::InvalidArgument("empty training batch".into()));
    }
    if batch.ncols() != state.config.d_x {
        return Err(Error::dim(
            "training batch",
            state.config.d_x,
            batch.ncols(),
        ));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "warm-up multiplier must be finite and >= 0, got {lambda}"
        )));
    }
    let prep = prepare_prior(state)?;
    let cfg = state.config.clone();
    let d = cfg.d();
    let gs = cfg.group_size();
    let git = matches!(cfg.prior, PriorSpec::Git { .. });
    let bsz = batch.nrows();

    state.decoder.zero_grad();
    for net in &mut state.posterior {
        net.zero_grad();
    }
    let mut grad_a = Array1::<f64>::zeros(d);
    let mut grad_w = Array2::<f64>::zeros((d, d));
    let mut grad_logbeta = if git { Some(Array1::<f64>::zeros(d)) } else { None };

    let mut bounds = Vec::with_capacity(bsz);
    let mut saturated = 0u64;
    let mut bad = false;
    'batch: for b in 0..bsz {
        let x = batch.row(b).to_owned();
        let mut samples = Vec::with_capacity(k);
        let mut lws = vec![0.0; k];
        for s in 0..k {
            let ps = posterior_sample(state, &x, rng)?;
            saturated += ps.saturated as u64;
            let (dec_logits, dec_cache) = state.decoder.forward(&ps.zeta);
            let dec = bernoulli_ll_with_logits(&x, &dec_logits)?;
            let (pv, mf) = prior_value(state, &prep, &ps.zeta)?;
            lws[s] = dec + lambda * (pv - ps.log_q);
            samples.push((ps, dec_logits, dec_cache, mf));
        }
        let bound = log_mean_exp(&lws);
        bounds.push(bound);
        if !bound.is_finite() {
            bad = true;
            break 'batch;
        }
        let mx = lws.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut wt: Vec<f64> = lws.iter().map(|&l| (l - mx).exp()).collect();
        let sw: f64 = wt.iter().sum();
        for w in &mut wt {
            *w /= sw;
        }

        for (s, (ps, dec_logits, dec_cache, mf)) in samples.iter().enumerate() {
            // Every accumulation below is a gradient of the *loss* −bound;
            // this sample's share of ∂bound/∂· carries weight w̃_s / B.
            let scale = wt[s] / bsz as f64;
            let dy_dec =
                Array1::from_shape_fn(cfg.d_x, |j| -scale * (x[j] - sigmoid(dec_logits[j])));
            let mut dzeta = state.decoder.backward(dec_cache, &dy_dec);

            let pg = prior_grads(state, &prep, &ps.zeta, mf.as_ref(), neg)?;
            for i in 0..d {
                grad_a[i] += -scale * lambda * pg.grad_a[i];
            }
            for i in 0..d {
                for j in 0..d {
                    grad_w[[i, j]] += -scale * lambda * pg.grad_w[[i, j]];
                }
            }

            let uqs: Vec<UnitQGrads> = (0..d)
                .map(|i| unit_logq_grads(ps.kinds[i], ps.q[i], ps.zeta[i]))
                .collect();
            for i in 0..d {
                dzeta[i] += -scale * lambda * (pg.grad_zeta[i] - uqs[i].dlogq_dzeta);
            }

            // Blocks in reverse: a block's dζ must already include every
            // later block's chain through its conditioning input.
            for g in (0..cfg.groups).rev() {
                let net = &mut state.posterior[g];
                let mut dout = Array1::<f64>::zeros(net.out_dim());
                for loc in 0..gs {
                    let i = g * gs + loc;
                    let dq = dzeta[i] * ps.dzeta_dq[i] + scale * lambda * uqs[i].dlogq_dq;
                    dout[loc] = dq * ps.q[i] * (1.0 - ps.q[i]);
                    if git {
                        // The root shifts rigidly with Δμ (∂ζ/∂Δμ = 1).
                        dout[gs + loc] = dzeta[i] + scale * lambda * uqs[i].dlogq_ddelta;
                        let beta_i = ps.kinds[i].beta();
                        grad_logbeta.as_mut().expect("git gradient buffer")[i] += (dzeta[i]
                            * ps.dzeta_dbeta[i]
                            + scale * lambda * uqs[i].dlogq_dbeta)
                            * beta_i;
                    }
                }
                let dinput = net.backward(&ps.caches[g], &dout);
                for j in 0..g * gs {
                    dzeta[j] += dinput[cfg.d_x + j];
                }
            }
        }
    }

    let bound_mean = mean(&bounds);
    let mut grads = Vec::with_capacity(state.adam.m.len());
    state.decoder.for_each_param_grad(&mut |_, g| grads.push(g));
    for net in &mut state.posterior {
        net.for_each_param_grad(&mut |_, g| grads.push(g));
    }
    grads.extend(grad_a.iter().copied());
    grads.extend(grad_w.iter().copied());
    if let Some(glb) = &grad_logbeta {
        grads.extend(glb.iter().copied());
    }
    let finite = grads.iter().all(|g| g.is_finite());
    let grad_norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();

    let skipped = bad || !finite;
    if skipped {
        state.nan_skips += 1;
    } else {
        let ModelState {
            decoder,
            posterior,
            rbm,
            log_beta_q,
            adam,
            ..
        } = &mut *state;
        adam.begin_step();
        decoder.for_each_param_grad(&mut |p, g| adam.update(p, g));
        for net in posterior.iter_mut() {
            net.for_each_param_grad(&mut |p, g| adam.update(p, g));
        }
        {
            let a = rbm.a_mut();
            for i in 0..d {
                adam.update(&mut a[i], grad_a[i]);
            }
        }
        {
            let w = rbm.w_mut();
            for i in 0..d {
                for j in 0..d {
                    adam.update(&mut w[[i, j]], grad_w[[i, j]]);
                }
            }
        }
        if let Some(lb) = log_beta_q {
            let glb = grad_logbeta.as_ref().expect("git gradient buffer");
            for i in 0..d {
                adam.update(&mut lb[i], glb[i]);
            }
        }
        adam.end_step();
    }
    state.updates_done += 1;
    Ok(StepMetrics {
        bound: bound_mean,
        grad_norm,
        skipped,
        saturated_units: saturated,
        grads,
    })
}

/// Discrete-space evidence estimate: draw binary z hierarchically from the
/// posterior logits (the smoothing collapsed away), then average importance
/// weights −E_θ(z) − log Z_θ + log p(x|z) − log q(z|x) over `k` draws.
/// Needs a log-partition estimate; pass `None` to get [`Error::MissingLogZ`].
pub fn discrete_eval_ll(
    state: &ModelState,
    x: &Array1<f64>,
    k: usize,
    log_z: Option<f64>,
    rng: &mut impl Rng,
) -> Result<f64> {
    let log_z = log_z.ok_or(Error::MissingLogZ)?;
    if k == 0 {
        return Err(Error::InvalidArgument(
            "discrete evaluation needs K >= 1 samples".into(),
        ));
    }
    if x.len() != state.config.d_x {
        return Err(Error::dim("evaluation input x", state.config.d_x, x.len()));
    }
    let cfg = &state.config;
    let d = cfg.d();
    let gs = cfg.group_size();
    let mut lws = Vec::with_capacity(k);
    for _ in 0..k {
        let mut z = Array1::<f64>::zeros(d);
        let mut log_q = 0.0;
        for g in 0..cfg.groups {
            let mut input = Vec::with_capacity(cfg.d_x + g * gs);
            input.extend(x.iter().copied());
            input.extend(z.iter().take(g * gs).copied());
            let (out, _) = state.posterior[g].forward(&Array1::from_vec(input));
            for loc in 0..gs {
                let i = g * gs + loc;
                let l = out[loc];
                let zi = if rng.gen::<f64>() < sigmoid(l) { 1.0 } else { 0.0 };
                z[i] = zi;
                // z·l − softplus(l) = log Bern(z | σ(l)), stably.
                log_q += zi * l - crate::math::softplus(l);
            }
        }
        let energy = crate::rbm::energy(&state.rbm, &z)?;
        let dec = decoder_log_likelihood(state, x, &z)?;
        lws.push(-energy - log_z + dec - log_q);
    }
    Ok(log_mean_exp(&lws))
}

/// Mean discrete-space evidence over dataset rows, each row on its own
/// evaluation RNG stream (so the estimate is independent of row order and
/// of how many rows precede it).
pub fn discrete_eval_dataset(
    state: &ModelState,
    data: &Array2<f64>,
    k: usize,
    log_z: Option<f64>,
    seed: u64,
) -> Result<f64> {
    if data.nrows() == 0 {
        return Err(Error::InvalidArgument("empty evaluation dataset".into()));
    }
    let mut total = 0.0;
    for r in 0..data.nrows() {
        let mut rng = rng::stream(seed, purpose::EVAL, r as u64);
        total += discrete_eval_ll(state, &data.row(r).to_owned(), k, log_z, &mut rng)?;
    }
    Ok(total / data.nrows() as f64)
}

/// Linear KL warm-up: λ ramps 0 → 1 over the first `frac` of `total`
/// updates (by update index `t`, 0-based), then stays at 1.
pub fn warmup_lambda(t: u64, total: u64, frac: f64) -> f64 {
    let wu = (total as f64 * frac).ceil() as u64;
    if wu == 0 {
        1.0
    } else {
        (((t + 1) as f64) / wu as f64).min(1.0)
    }
}

/// Everything a training run needs beyond the model itself.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub seed: u64,
    pub updates: u64,
    pub batch_size: usize,
    /// Importance samples per datum.
    pub k: usize,
    pub lr: f64,
    /// Fraction of updates over which the KL warm-up ramps to 1.
    pub warmup_frac: f64,
    /// Negative-phase sampler refreshed every update.
    pub sampler: SamplerConfig,
    /// Cadence (in updates) of log Z snapshots in the metrics; 0 = never.
    pub ais_every: u64,
    /// The annealed-importance estimator used for snapshots and the final
    /// partition estimate.
    pub ais: AisConfig,
    /// Run one final partition estimate after the last update.
    pub final_ais: bool,
    /// Cadence of the mean-field KL diagnostic (exact, so D ≤ 20 and the
    /// overlapping prior only); 0 = never.
    pub diag_every: u64,
    /// Cadence of mid-run checkpoints; 0 = final checkpoint only.
    pub checkpoint_every: u64,
    pub checkpoint_path: Option<PathBuf>,
    pub metrics_path: Option<PathBuf>,
    /// Resume from this checkpoint (same config and seed required; training
    /// continues bit-identically apart from wall-clock columns).
    pub resume_from: Option<PathBuf>,
}

impl TrainConfig {
    /// Defaults: 2000 updates, batch 20, K = 5, Adam 1e-3, 30% warm-up,
    /// 100 persistent chains, final 1000-temperature × 100-sample partition
    /// estimate, mean-field KL diagnostic every 50 updates.
    pub fn new(model: ModelConfig, seed: u64) -> TrainConfig {
        TrainConfig {
            model,
            seed,
            updates: 2000,
            batch_size: 20,
            k: 5,
            lr: 1e-3,
            warmup_frac: 0.3,
            sampler: SamplerConfig::pcd(100, 1),
            ais_every: 0,
            ais: AisConfig::linear(1000, 100),
            final_ais: true,
            diag_every: 50,
            checkpoint_every: 0,
            checkpoint_path: None,
            metrics_path: None,
            resume_from: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        if self.k == 0 {
            return Err(Error::InvalidArgument("K must be >= 1".into()));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be finite and >= 0, got {}",
                self.lr
            )));
        }
        if !(0.0..=1.0).contains(&self.warmup_frac) {
            return Err(Error::InvalidArgument(format!(
                "warmup_frac must lie in [0,1], got {}",
                self.warmup_frac
            )));
        }
        self.sampler.validate()?;
        if self.final_ais || self.ais_every > 0 {
            self.ais.validate()?;
        }
        Ok(())
    }

    fn describe_sampler(&self) -> String {
        match self.sampler.kind {
            SamplerKind::Pcd => format!(
                "pcd(chains={}, sweeps={})",
                self.sampler.population, self.sampler.sweeps_per_update
            ),
            SamplerKind::Pa => format!(
                "pa(population={}, temperatures={})",
                self.sampler.population, self.sampler.pa_temperatures
            ),
        }
    }
}

/// One metrics row, written after the update it describes.
#[derive(Debug, Clone)]
pub struct MetricsRow {
    /// 1-based update index.
    pub update: u64,
    pub bound: f64,
    pub log_z_snapshot: Option<f64>,
    pub grad_norm: f64,
    pub mf_kl_median: Option<f64>,
    /// Seconds since this train() call started (not preserved on resume).
    pub wall_time: f64,
}

/// What [`train`] hands back.
#[derive(Debug)]
pub struct TrainReport {
    pub state: ModelState,
    pub rows: Vec<MetricsRow>,
    /// Final annealed-importance log-partition estimate, when requested.
    pub final_log_z: Option<f64>,
}

/// Write the metrics CSV: `# key = value` config echo lines, one header,
/// one row per update (empty cells where a column has no snapshot).
pub fn write_metrics_csv(
    path: &Path,
    config: &TrainConfig,
    rows: &[MetricsRow],
) -> Result<()> {
    let mut out = String::new();
    out.push_str("# bmrelax training metrics\n");
    out.push_str(&format!("# d_x = {}\n", config.model.d_x));
    out.push_str(&format!(
        "# d = {} ({} + {})\n",
        config.model.d(),
        config.model.d1,
        config.model.d2
    ));
    out.push_str(&format!("# groups = {}\n", config.model.groups));
    out.push_str(&format!("# prior = {}\n", config.model.prior.describe()));
    out.push_str(&format!("# k = {}\n", config.k));
    out.push_str(&format!("# batch_size = {}\n", config.batch_size));
    out.push_str(&format!("# updates = {}\n", config.updates));
    out.push_str(&format!("# lr = {}\n", config.lr));
    out.push_str(&format!("# seed = {}\n", config.seed));
    out.push_str(&format!("# sampler = {}\n", config.describe_sampler()));
    out.push_str(&format!("# warmup_frac = {}\n", config.warmup_frac));
    out.push_str("update,bound,logz,grad_norm,mf_kl_median,wall_time\n");
    for r in rows {
        let logz = r.log_z_snapshot.map(|v| v.to_string()).unwrap_or_default();
        let kl = r.mf_kl_median.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{:.3}\n",
            r.update, r.bound, logz, r.grad_norm, kl, r.wall_time
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Median exact mean-field KL over a few fresh posterior samples — the
/// per-update smoothness diagnostic. `None` for Gaussian-integral priors or
/// when D exceeds the enumeration limit.
fn mf_kl_median_diag(
    state: &ModelState,
    batch: &Array2<f64>,
    rng: &mut impl Rng,
) -> Result<Option<f64>> {
    let kind = match state.config.prior {
        PriorSpec::Overlapping(kind) => kind,
        PriorSpec::Git { .. } => return Ok(None),
    };
    if state.config.d() > EXACT_KL_MAX_D {
        return Ok(None);
    }
    let rows = batch.nrows().min(8);
    let mut kls = Vec::with_capacity(rows);
    for b in 0..rows {
        let ps = posterior_sample(state, &batch.row(b).to_owned(), rng)?;
        let coeffs = kind.coefficients(ps.zeta.as_slice().expect("contiguous"))?;
        let sol = mean_field_fit(&state.rbm, &coeffs, state.config.mf_iterations)?;
        kls.push(mean_field_kl_exact(&state.rbm, &coeffs, &sol.m)?);
    }
    Ok(Some(median(&kls)))
}

/// Run the trainer: per update draw a batch (uniform with replacement),
/// refresh the negative phase, take one importance-weighted Adam step, and
/// record metrics. Every random choice comes from a stream keyed by
/// (seed, purpose, update index), so a resumed run consumes exactly the
/// streams the uninterrupted run would have.
pub fn train(config: &TrainConfig, data: &Array2<f64>) -> Result<TrainReport> {
    config.validate()?;
    if data.ncols() != config.model.d_x {
        return Err(Error::dim("training data", config.model.d_x, data.ncols()));
    }
    if data.nrows() == 0 {
        return Err(Error::InvalidArgument("empty training dataset".into()));
    }

    let (mut state, mut pcd) = match &config.resume_from {
        Some(path) => {
            let loaded = crate::checkpoint::load_model(path)?;
            if loaded.seed != config.seed {
                return Err(Error::InvalidArgument(format!(
                    "resume seed mismatch: checkpoint has {}, config has {}",
                    loaded.seed, config.seed
                )));
            }
            if loaded.state.config != config.model {
                return Err(Error::InvalidArgument(
                    "resume config mismatch: the checkpointed model shape differs".into(),
                ));
            }
            let mut st = loaded.state;
            st.adam.lr = config.lr;
            (st, loaded.pcd)
        }
        None => (
            ModelState::new(config.model.clone(), config.lr, config.seed)?,
            None,
        ),
    };
    if config.sampler.kind == SamplerKind::Pcd && pcd.is_none() {
        let mut r = rng::stream(config.seed, purpose::INIT, 60);
        pcd = Some(PcdState::init(
            &state.rbm,
            config.sampler.population,
            &mut r,
        )?);
    }

    let start = Instant::now();
    let mut rows = Vec::new();
    for t in state.updates_done..config.updates {
        let lambda = warmup_lambda(t, config.updates, config.warmup_frac);

        let mut brng = rng::stream(config.seed, purpose::BATCH, t);
        let mut batch = Array2::<f64>::zeros((config.batch_size, config.model.d_x));
        for b in 0..config.batch_size {
            let r = brng.gen_range(0..data.nrows());
            batch.row_mut(b).assign(&data.row(r));
        }

        let mut nrng = rng::stream(config.seed, purpose::NEG_PHASE, t);
        let neg = match config.sampler.kind {
            SamplerKind::Pcd => {
                let chains = pcd_negative_samples(
                    &state.rbm,
                    pcd.as_mut().expect("pcd state initialized above"),
                    &config.sampler,
                    &mut nrng,
                )?;
                NegativePhase::from_samples(&chains)?
            }
            SamplerKind::Pa => {
                let outcome = population_annealing_run(&state.rbm, &config.sampler, &mut nrng)?;
                NegativePhase::from_samples(&outcome.samples)?
            }
        };

        let mut prng = rng::stream(config.seed, purpose::POSTERIOR_NOISE, t);
        let metrics = iw_gradient_step(&mut state, &batch, config.k, lambda, &neg, &mut prng)?;

        let log_z_snapshot = if config.ais_every > 0 && (t + 1) % config.ais_every == 0 {
            let mut arng = rng::stream(config.seed, purpose::AIS, t);
            Some(ais_log_partition(&state.rbm, &config.ais, &mut arng)?.log_z)
        } else {
            None
        };
        let mf_kl = if config.diag_every > 0 && t % config.diag_every == 0 {
            let mut drng = rng::stream(config.seed, purpose::DIAG, t);
            mf_kl_median_diag(&state, &batch, &mut drng)?
        } else {
            None
        };
        rows.push(MetricsRow {
            update: t + 1,
            bound: metrics.bound,
            log_z_snapshot,
            grad_norm: metrics.grad_norm,
            mf_kl_median: mf_kl,
            wall_time: start.elapsed().as_secs_f64(),
        });

        if config.checkpoint_every > 0 && (t + 1) % config.checkpoint_every == 0 {
            if let Some(path) = &config.checkpoint_path {
                crate::checkpoint::save_model(path, &state, pcd.as_ref(), config.seed)?;
            }
        }
    }

    let final_log_z = if config.final_ais {
        let mut arng = rng::stream(config.seed, purpose::AIS, config.updates);
        Some(ais_log_partition(&state.rbm, &config.ais, &mut arng)?.log_z)
    } else {
        None
    };
    if let Some(path) = &config.checkpoint_path {
        crate::checkpoint::save_model(path, &state, pcd.as_ref(), config.seed)?;
    }
    if let Some(path) = &config.metrics_path {
        write_metrics_csv(path, config, &rows)?;
    }
    Ok(TrainReport {
        state,
        rows,
        final_log_z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_synthetic, SyntheticSpec};
    use crate::rbm::exact_log_partition;

    fn tiny_config(prior: PriorSpec) -> ModelConfig {
        ModelConfig {
            d_x: 6,
            d1: 2,
            d2: 2,
            groups: 2,
            arch: Arch::Linear,
            decoder_arch: Arch::Linear,
            prior,
            mf_iterations: 10,
        }
    }

    fn power30() -> PriorSpec {
        PriorSpec::Overlapping(SmoothingKind::PowerFunction { beta: 30.0 })
    }

    fn test_x() -> Array1<f64> {
        Array1::from_vec(vec![1.0, 0.0, 1.0, 1.0, 0.0, 0.0])
    }

    #[test]
    fn config_validation_rejects_bad_shapes() {
        let mut c = tiny_config(power30());
        c.groups = 3;
        assert!(c.validate().is_err(), "groups=3 must not divide D=4");
        let mut c = tiny_config(power30());
        c.d_x = 0;
        assert!(c.validate().is_err(), "d_x=0 must be rejected");
        let c = tiny_config(PriorSpec::Overlapping(SmoothingKind::ShiftedGaussian {
            beta: 20.0,
            delta_mu: 0.0,
        }));
        assert!(
            matches!(c.validate(), Err(Error::InvalidSmoothing(_))),
            "shifted-Gaussian smoothing must be rejected as a prior family"
        );
    }

    #[test]
    fn posterior_sample_is_deterministic_per_stream() {
        let state = ModelState::new(tiny_config(power30()), 1e-3, 7).unwrap();
        let x = test_x();
        let mut r1 = rng::stream(7, purpose::POSTERIOR_NOISE, 3);
        let mut r2 = rng::stream(7, purpose::POSTERIOR_NOISE, 3);
        let s1 = posterior_sample(&state, &x, &mut r1).unwrap();
        let s2 = posterior_sample(&state, &x, &mut r2).unwrap();
        for i in 0..4 {
            assert_eq!(
                s1.zeta[i].to_bits(),
                s2.zeta[i].to_bits(),
                "unit {i} differs across identical streams"
            );
            assert!(
                (0.0..=1.0).contains(&s1.zeta[i]),
                "unit-support family produced zeta outside [0,1]: {}",
                s1.zeta[i]
            );
        }
        assert!(s1.log_q.is_finite(), "log q must be finite");
    }

    #[test]
    fn zero_decoder_gives_closed_form_likelihood() {
        let mut state = ModelState::new(tiny_config(power30()), 1e-3, 7).unwrap();
        let n = state.decoder.param_count();
        state
            .decoder
            .load_params(&mut std::iter::repeat(0.0).take(n));
        let zeta = Array1::from_vec(vec![0.2, 0.8, 0.5, 0.1]);
        let ll = decoder_log_likelihood(&state, &test_x(), &zeta).unwrap();
        let expect = -(6.0) * std::f64::consts::LN_2;
        assert!(
            (ll - expect).abs() < 1e-12,
            "zero decoder must give d_x*log(1/2): got {ll}, want {expect}"
        );
    }

    #[test]
    fn single_sample_bound_matches_manual_log_weight() {
        let state = ModelState::new(tiny_config(power30()), 1e-3, 7).unwrap();
        let x = test_x();
        let mut r1 = rng::stream(7, purpose::EVAL, 0);
        let (bound, lws) = iw_bound(&state, &x, 1, &mut r1).unwrap();
        assert_eq!(lws.len(), 1, "K=1 must produce one log-weight");

        let mut r2 = rng::stream(7, purpose::EVAL, 0);
        let ps = posterior_sample(&state, &x, &mut r2).unwrap();
        let dec = decoder_log_likelihood(&state, &x, &ps.zeta).unwrap();
        let kind = match state.config.prior {
            PriorSpec::Overlapping(k) => k,
            _ => unreachable!(),
        };
        let (pv, _) = relaxed_log_prob(&state.rbm, kind, &ps.zeta, 10).unwrap();
        let manual = dec + pv - ps.log_q;
        assert!(
            (bound - manual).abs() < 1e-12,
            "K=1 bound {bound} != manual log-weight {manual}"
        );
    }

    #[test]
    fn zero_learning_rate_step_changes_nothing() {
        let mut state = ModelState::new(tiny_config(power30()), 0.0, 7).unwrap();
        let before = state.params_vec();
        let data = Array2::from_shape_fn((3, 6), |(i, j)| ((i + j) % 2) as f64);
        let neg = NegativePhase::exact(&state.rbm).unwrap();
        let mut rng = rng::stream(7, purpose::POSTERIOR_NOISE, 0);
        let m = iw_gradient_step(&mut state, &data, 2, 1.0, &neg, &mut rng).unwrap();
        assert!(!m.skipped, "healthy step must not be skipped");
        assert!(m.bound.is_finite() && m.grad_norm.is_finite());
        assert!(
            m.grad_norm > 0.0,
            "gradient should be nonzero on random init"
        );
        let after = state.params_vec();
        assert_eq!(before.len(), after.len());
        for (i, (b, a)) in before.iter().zip(after.iter()).enumerate() {
            assert_eq!(
                b.to_bits(),
                a.to_bits(),
                "param {i} moved under lr=0: {b} -> {a}"
            );
        }
        assert_eq!(state.updates_done, 1, "update counter must advance");
    }

    #[test]
    fn nonfinite_values_skip_the_update_and_flag_it() {
        let mut state = ModelState::new(tiny_config(power30()), 1e-3, 7).unwrap();
        let mut params = state.params_vec();
        params[0] = f64::INFINITY;
        state.load_params(&params).unwrap();
        let data = Array2::from_shape_fn((2, 6), |(i, j)| ((i * j) % 2) as f64);
        let neg = NegativePhase::exact(&state.rbm).unwrap();
        let mut rng = rng::stream(7, purpose::POSTERIOR_NOISE, 0);
        let m = iw_gradient_step(&mut state, &data, 2, 1.0, &neg, &mut rng).unwrap();
        assert!(m.skipped, "infinite decoder weight must force a skip");
        assert_eq!(state.nan_skips, 1);
        assert_eq!(state.updates_done, 1);
        let after = state.params_vec();
        for (i, (b, a)) in params.iter().zip(after.iter()).enumerate() {
            assert_eq!(
                b.to_bits(),
                a.to_bits(),
                "param {i} must be untouched on a skipped update"
            );
        }
    }

    #[test]
    fn earlier_blocks_ignore_later_block_parameters() {
        let config = tiny_config(power30());
        let state1 = ModelState::new(config.clone(), 1e-3, 7).unwrap();
        let mut state2 = ModelState::new(config, 1e-3, 7).unwrap();
        // Scramble the *last* block's conditional; block 0 draws must not move.
        let n = state2.posterior[1].param_count();
        let mut shifted: Vec<f64> = Vec::with_capacity(n);
        state2.posterior[1].for_each_param(&mut |v| shifted.push(v + 0.37));
        state2.posterior[1].load_params(&mut shifted.into_iter());
        let x = test_x();
        let mut r1 = rng::stream(7, purpose::POSTERIOR_NOISE, 5);
        let mut r2 = rng::stream(7, purpose::POSTERIOR_NOISE, 5);
        let s1 = posterior_sample(&state1, &x, &mut r1).unwrap();
        let s2 = posterior_sample(&state2, &x, &mut r2).unwrap();
        for i in 0..2 {
            assert_eq!(
                s1.zeta[i].to_bits(),
                s2.zeta[i].to_bits(),
                "block-0 unit {i} changed when block 1 was perturbed"
            );
        }
        assert!(
            (0..2).any(|loc| s1.zeta[2 + loc].to_bits() != s2.zeta[2 + loc].to_bits()),
            "block-1 draws should move when its conditional is perturbed"
        );
    }

    #[test]
    fn git_model_trains_per_unit_beta_and_mean_shifts() {
        let mut state =
            ModelState::new(tiny_config(PriorSpec::Git { beta: 20.0 }), 1e-3, 7).unwrap();
        let lb = state.log_beta_q.clone().expect("git model carries log beta");
        assert_eq!(lb.len(), 4);
        for v in lb.iter() {
            assert!(
                (v - 20.0_f64.ln()).abs() < 1e-12,
                "per-unit beta must initialize at the prior beta"
            );
        }
        assert_eq!(
            state.posterior[0].out_dim(),
            4,
            "git conditional emits logits and mean shifts"
        );
        let x = test_x();
        let mut r = rng::stream(7, purpose::POSTERIOR_NOISE, 0);
        let ps = posterior_sample(&state, &x, &mut r).unwrap();
        assert!(ps.delta_mu.is_some(), "git samples carry mean shifts");
        assert!(ps.log_q.is_finite());

        let data = Array2::from_shape_fn((3, 6), |(i, j)| ((i + j) % 2) as f64);
        let neg = NegativePhase::exact(&state.rbm).unwrap();
        let mut rng = rng::stream(7, purpose::POSTERIOR_NOISE, 1);
        let before = state.params_vec();
        let m = iw_gradient_step(&mut state, &data, 2, 1.0, &neg, &mut rng).unwrap();
        assert!(!m.skipped, "git gradient step must stay finite");
        let after = state.params_vec();
        assert!(
            before.iter().zip(after.iter()).any(|(b, a)| b != a),
            "git step should move parameters"
        );
    }

    #[test]
    fn discrete_eval_matches_closed_form_on_zeroed_model() {
        let config = ModelConfig {
            d_x: 3,
            d1: 1,
            d2: 1,
            groups: 1,
            arch: Arch::Linear,
            decoder_arch: Arch::Linear,
            prior: power30(),
            mf_iterations: 5,
        };
        let mut state = ModelState::new(config, 1e-3, 7).unwrap();
        let zeros = vec![0.0; state.param_count()];
        state.load_params(&zeros).unwrap();
        let log_z = exact_log_partition(&state.rbm).unwrap();
        assert!(
            (log_z - (4.0_f64).ln()).abs() < 1e-12,
            "all-zero machine has log Z = ln 4"
        );
        let x = Array1::from_vec(vec![1.0, 0.0, 1.0]);
        let mut rng = rng::stream(3, purpose::EVAL, 0);
        let ll = discrete_eval_ll(&state, &x, 64, Some(log_z), &mut rng).unwrap();
        let expect = -3.0 * std::f64::consts::LN_2;
        assert!(
            (ll - expect).abs() < 1e-12,
            "zeroed model must score exactly d_x*log(1/2): got {ll}, want {expect}"
        );
        assert!(
            matches!(
                discrete_eval_ll(&state, &x, 64, None, &mut rng),
                Err(Error::MissingLogZ)
            ),
            "missing log Z must be a typed error"
        );
    }

    #[test]
    fn train_smoke_run_writes_metrics_and_advances() {
        let spec = SyntheticSpec {
            modes: 2,
            d_x: 6,
            noise: 0.1,
            n: 40,
        };
        let synth = make_synthetic(&spec, 21).unwrap();
        let mut config = TrainConfig::new(tiny_config(power30()), 11);
        config.updates = 15;
        config.batch_size = 4;
        config.k = 2;
        config.sampler = SamplerConfig::pcd(8, 1);
        config.diag_every = 5;
        config.final_ais = false;
        let mut path = std::env::temp_dir();
        path.push(format!("bmrelax-model-test-{}.csv", std::process::id()));
        config.metrics_path = Some(path.clone());

        let report = train(&config, &synth.data).unwrap();
        assert_eq!(report.rows.len(), 15);
        assert_eq!(report.state.updates_done, 15);
        assert!(report.final_log_z.is_none());
        for row in &report.rows {
            assert!(row.bound.is_finite(), "bound must stay finite in smoke run");
            assert!(row.grad_norm.is_finite());
        }
        assert!(
            report.rows[0].mf_kl_median.is_some(),
            "diag cadence 5 fills update 1"
        );
        assert!(report.rows[1].mf_kl_median.is_none());

        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines().filter(|l| !l.starts_with('#'));
        let header = lines.next().unwrap();
        assert_eq!(header, "update,bound,logz,grad_norm,mf_kl_median,wall_time");
        assert_eq!(lines.count(), 15, "one data row per update");
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn warmup_ramps_linearly_then_saturates() {
        assert!((warmup_lambda(0, 100, 0.3) - 1.0 / 30.0).abs() < 1e-12);
        assert!((warmup_lambda(14, 100, 0.3) - 0.5).abs() < 1e-12);
        assert!((warmup_lambda(29, 100, 0.3) - 1.0).abs() < 1e-12);
        assert_eq!(warmup_lambda(50, 100, 0.3), 1.0);
        assert_eq!(warmup_lambda(0, 100, 0.0), 1.0, "no warm-up means lambda=1");
    }
}
