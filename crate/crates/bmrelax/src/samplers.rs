//! Negative-phase samplers and log-partition estimation for bipartite
//! Boltzmann machines: persistent contrastive divergence (PCD), population
//! annealing (PA), and annealed importance sampling (AIS).
//!
//! All annealing uses the same path: the biases a stay fixed and only the
//! couplings W are scaled by λ ∈ [0, 1], so the base distribution (λ = 0)
//! is factorial with the exact log-partition Σᵢ softplus(aᵢ). Every sampler
//! is bit-for-bit reproducible from its RNG: serial loops, one stream.

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::math::{log_mean_exp, sigmoid, softplus, LogSumExp};
use crate::rbm::{block_gibbs_sweep, gibbs_sweep_scaled, RBM};

/// Which negative-phase sampler the trainer runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerKind {
    Pcd,
    Pa,
}

/// Negative-phase sampler configuration shared by PCD and PA.
#[derive(Debug, Clone, Copy)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    /// Persistent chains (PCD) or population size (PA).
    pub population: usize,
    /// Gibbs sweeps per parameter update (PCD) / per temperature (PA).
    pub sweeps_per_update: usize,
    /// Number of annealing steps in the linear PA grid.
    pub pa_temperatures: usize,
}

impl SamplerConfig {
    /// PCD with the stated chain count and sweeps per update.
    pub fn pcd(chains: usize, sweeps_per_update: usize) -> Self {
        SamplerConfig {
            kind: SamplerKind::Pcd,
            population: chains,
            sweeps_per_update,
            pa_temperatures: 0,
        }
    }

    /// PA defaults: population 1,000, 40 temperatures matching the
    /// 40-sweep budget (one sweep per temperature).
    pub fn pa(population: usize, pa_temperatures: usize) -> Self {
        SamplerConfig {
            kind: SamplerKind::Pa,
            population,
            sweeps_per_update: 1,
            pa_temperatures,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.population == 0 {
            return Err(Error::InvalidArgument("sampler population is 0".into()));
        }
        match self.kind {
            SamplerKind::Pcd => {
                if self.sweeps_per_update == 0 {
                    return Err(Error::InvalidArgument(
                        "PCD needs sweeps_per_update >= 1".into(),
                    ));
                }
            }
            SamplerKind::Pa => {
                if self.population < 2 {
                    return Err(Error::InvalidArgument(
                        "population annealing needs population >= 2".into(),
                    ));
                }
                if self.pa_temperatures == 0 {
                    return Err(Error::InvalidArgument(
                        "population annealing needs pa_temperatures >= 1".into(),
                    ));
                }
                if self.sweeps_per_update == 0 {
                    return Err(Error::InvalidArgument(
                        "population annealing needs sweeps >= 1 per temperature".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Persistent PCD chains. Lives across parameter updates and inside
/// checkpoints; rows are chains.
#[derive(Debug, Clone)]
pub struct PcdState {
    pub chains: Array2<f64>,
}

impl PcdState {
    /// Initialize chains from the factorial base model zᵢ ~ Bern(σ(aᵢ)).
    pub fn init(rbm: &RBM, chains: usize, rng: &mut impl Rng) -> Result<Self> {
        if chains == 0 {
            return Err(Error::InvalidArgument("PCD chain count is 0".into()));
        }
        let d = rbm.d();
        let mut state = Array2::zeros((chains, d));
        for mut row in state.rows_mut() {
            for i in 0..d {
                row[i] = if rng.gen::<f64>() < sigmoid(rbm.a()[i]) {
                    1.0
                } else {
                    0.0
                };
            }
        }
        Ok(PcdState { chains: state })
    }
}

/// Advance every persistent chain by `sweeps_per_update` block Gibbs sweeps
/// and return the updated chains as the negative-phase batch.
pub fn pcd_negative_samples(
    rbm: &RBM,
    state: &mut PcdState,
    config: &SamplerConfig,
    rng: &mut impl Rng,
) -> Result<Array2<f64>> {
    config.validate()?;
    if state.chains.ncols() != rbm.d() {
        return Err(Error::dim(
            "PCD persistent state",
            rbm.d(),
            state.chains.ncols(),
        ));
    }
    let mut buf = Array1::zeros(rbm.d());
    for mut row in state.chains.rows_mut() {
        buf.assign(&row);
        for _ in 0..config.sweeps_per_update {
            block_gibbs_sweep(rbm, &mut buf, rng)?;
        }
        row.assign(&buf);
    }
    Ok(state.chains.clone())
}

/// Result of one population-annealing run.
#[derive(Debug, Clone)]
pub struct PaOutcome {
    /// Final equally-weighted population at the target distribution.
    pub samples: Array2<f64>,
    /// Accumulated free-energy estimate of log Z.
    pub log_z: f64,
    /// True if the effective sample size ever fell below 2 (population
    /// collapse) — reported as a warning, not a failure.
    pub collapsed: bool,
}

/// Anneal a population from the factorial base (W × 0) to the target
/// (W × 1) along a linear coupling-scale grid, resampling systematically
/// whenever the effective sample size drops below half the population.
///
/// log Z accumulates as Σ over weight flushes of log-mean-exp of the
/// importance weights, plus the exact base log-partition.
pub fn population_annealing_run(
    rbm: &RBM,
    config: &SamplerConfig,
    rng: &mut impl Rng,
) -> Result<PaOutcome> {
    config.validate()?;
    if config.kind != SamplerKind::Pa {
        return Err(Error::InvalidArgument(
            "population_annealing_run called with a PCD config".into(),
        ));
    }
    if !rbm.is_bipartite() {
        return Err(Error::NotBipartite {
            context: "population_annealing_run",
        });
    }
    let n = config.population;
    let d = rbm.d();
    let base_log_z: f64 = rbm.a().iter().map(|&ai| softplus(ai)).sum();

    // Draw the initial population from the factorial base.
    let mut members = Array2::zeros((n, d));
    for mut row in members.rows_mut() {
        for i in 0..d {
            row[i] = if rng.gen::<f64>() < sigmoid(rbm.a()[i]) {
                1.0
            } else {
                0.0
            };
        }
    }
    let mut log_w = vec![0.0_f64; n];
    let mut log_z = base_log_z;
    let mut collapsed = false;
    let steps = config.pa_temperatures;
    let mut buf = Array1::zeros(d);

    for k in 0..steps {
        let lambda_prev = k as f64 / steps as f64;
        let lambda_next = (k + 1) as f64 / steps as f64;
        let dl = lambda_next - lambda_prev;
        // Reweight: p_{λ+dλ}/p_λ ∝ exp(dλ · ½ zᵀWz).
        for (m, row) in members.rows().into_iter().enumerate() {
            let mut pair = 0.0;
            for i in 0..d {
                if row[i] > 0.5 {
                    pair += rbm.w().row(i).dot(&row);
                }
            }
            log_w[m] += dl * 0.5 * pair;
        }
        let ess = effective_sample_size(&log_w);
        if ess < 2.0 {
            collapsed = true;
        }
        if ess < n as f64 / 2.0 {
            log_z += log_mean_exp(&log_w);
            let picks = systematic_resample_indices(&log_w, n, rng);
            members = resample_rows(&members, &picks);
            log_w.iter_mut().for_each(|w| *w = 0.0);
        }
        // Equilibrate at the new temperature.
        for mut row in members.rows_mut() {
            buf.assign(&row);
            for _ in 0..config.sweeps_per_update {
                gibbs_sweep_scaled(rbm, &mut buf, lambda_next, rng);
            }
            row.assign(&buf);
        }
    }
    // Flush remaining weights and return an equally-weighted population.
    log_z += log_mean_exp(&log_w);
    if log_w.iter().any(|&w| w != log_w[0]) {
        let picks = systematic_resample_indices(&log_w, n, rng);
        members = resample_rows(&members, &picks);
    }
    Ok(PaOutcome {
        samples: members,
        log_z,
        collapsed,
    })
}

/// ESS = (Σwᵢ)²/Σwᵢ² for unnormalized weights given in log space.
fn effective_sample_size(log_w: &[f64]) -> f64 {
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return 0.0;
    }
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for &w in log_w {
        let e = (w - max).exp();
        s1 += e;
        s2 += e * e;
    }
    if s2 == 0.0 {
        0.0
    } else {
        s1 * s1 / s2
    }
}

/// Systematic resampling: one uniform offset, N evenly spaced positions
/// inverted through the weight CDF. Preserves population size exactly.
fn systematic_resample_indices(log_w: &[f64], n: usize, rng: &mut impl Rng) -> Vec<usize> {
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_w.iter().map(|&w| (w - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let offset: f64 = rng.gen::<f64>();
    let mut picks = Vec::with_capacity(n);
    let mut cum = 0.0;
    let mut m = 0usize;
    for i in 0..n {
        let target = (i as f64 + offset) / n as f64 * total;
        while cum + weights[m] < target && m + 1 < log_w.len() {
            cum += weights[m];
            m += 1;
        }
        picks.push(m);
    }
    picks
}

fn resample_rows(members: &Array2<f64>, picks: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((picks.len(), members.ncols()));
    for (dst, &src) in picks.iter().enumerate() {
        out.row_mut(dst).assign(&members.row(src));
    }
    out
}

/// AIS configuration: the annealing grid runs 0 → 1 (inclusive), strictly
/// increasing; transitions happen between consecutive grid points.
#[derive(Debug, Clone)]
pub struct AisConfig {
    pub num_samples: usize,
    pub schedule: Vec<f64>,
}

impl AisConfig {
    /// Linear grid with `num_temperatures` points from 0 to 1.
    pub fn linear(num_temperatures: usize, num_samples: usize) -> Self {
        let k = num_temperatures.max(2);
        let schedule = (0..k)
            .map(|i| i as f64 / (k - 1) as f64)
            .collect();
        AisConfig {
            num_samples,
            schedule,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_samples == 0 {
            return Err(Error::InvalidArgument("AIS needs num_samples >= 1".into()));
        }
        if self.schedule.len() < 2 {
            return Err(Error::InvalidArgument(
                "AIS schedule needs at least the two endpoints".into(),
            ));
        }
        if self.schedule[0] != 0.0 {
            return Err(Error::InvalidArgument(format!(
                "AIS schedule must start at 0, got {}",
                self.schedule[0]
            )));
        }
        if *self.schedule.last().unwrap() != 1.0 {
            return Err(Error::InvalidArgument(format!(
                "AIS schedule must end at 1, got {}",
                self.schedule.last().unwrap()
            )));
        }
        for pair in self.schedule.windows(2) {
            if pair[1] <= pair[0] {
                return Err(Error::InvalidArgument(format!(
                    "AIS schedule must increase strictly: {} then {}",
                    pair[0], pair[1]
                )));
            }
        }
        Ok(())
    }
}

/// AIS estimate of log Z with a bootstrap standard error.
#[derive(Debug, Clone, Copy)]
pub struct AisOutcome {
    pub log_z: f64,
    pub std_error: f64,
}

/// Annealed importance sampling from the factorial base along the
/// W-scaling path. Estimate = base log Z + log-mean-exp of the per-sample
/// accumulated log-weights; the error bar is a 200-resample bootstrap of
/// that statistic.
pub fn ais_log_partition(
    rbm: &RBM,
    config: &AisConfig,
    rng: &mut impl Rng,
) -> Result<AisOutcome> {
    config.validate()?;
    if !rbm.is_bipartite() {
        return Err(Error::NotBipartite {
            context: "ais_log_partition",
        });
    }
    let d = rbm.d();
    let base_log_z: f64 = rbm.a().iter().map(|&ai| softplus(ai)).sum();
    let mut log_weights = Vec::with_capacity(config.num_samples);
    let mut z = Array1::zeros(d);
    for _ in 0..config.num_samples {
        for i in 0..d {
            z[i] = if rng.gen::<f64>() < sigmoid(rbm.a()[i]) {
                1.0
            } else {
                0.0
            };
        }
        let mut log_w = 0.0;
        for pair in config.schedule.windows(2) {
            let dl = pair[1] - pair[0];
            let mut pairwise = 0.0;
            for i in 0..d {
                if z[i] > 0.5 {
                    pairwise += rbm.w().row(i).dot(&z);
                }
            }
            log_w += dl * 0.5 * pairwise;
            gibbs_sweep_scaled(rbm, &mut z, pair[1], rng);
        }
        log_weights.push(log_w);
    }
    let log_z = base_log_z + log_mean_exp(&log_weights);

    // Bootstrap the log-mean-exp statistic.
    let std_error = if config.num_samples == 1 {
        0.0
    } else {
        let b = 200;
        let mut estimates = Vec::with_capacity(b);
        for _ in 0..b {
            let mut lse = LogSumExp::new();
            for _ in 0..log_weights.len() {
                lse.add(log_weights[rng.gen_range(0..log_weights.len())]);
            }
            estimates.push(lse.value() - (log_weights.len() as f64).ln());
        }
        let mean = estimates.iter().sum::<f64>() / b as f64;
        (estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (b - 1) as f64).sqrt()
    };
    Ok(AisOutcome { log_z, std_error })
}
