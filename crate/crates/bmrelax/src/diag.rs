//! Diagnostic experiments: gradient-variance/sharpness tradeoff curves,
//! exact mean-field KL traces, inverse-CDF transition curves, and the
//! PA-vs-PCD twin-training comparison. Each experiment returns typed rows
//! and has a CSV writer, so the command-line layer stays thin and tests can
//! assert on the numbers directly.

use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{discrete_eval_dataset, train, TrainConfig};
use crate::rbm::{exact_probs, RBM};
use crate::relaxation::{mean_field_fit_trace, mean_field_kl_exact, EXACT_KL_MAX_D};
use crate::reparam::{implicit_grads, sample_inverse_cdf};
use crate::rng::{self, purpose};
use crate::samplers::{SamplerConfig, SamplerKind};
use crate::smoothing::SmoothingKind;

/// One (family, β) summary of the sharpness/variance tradeoff.
#[derive(Debug, Clone)]
pub struct GradVarianceRow {
    pub kind: &'static str,
    pub beta: f64,
    /// Mean |ζ − 𝟙[ζ > 0.5]|: how far samples sit from the nearest corner.
    pub mean_abs_dist: f64,
    /// Var[∂ζ/∂q] over the ρ draws.
    pub grad_variance: f64,
}

/// Monte Carlo estimate of the tradeoff curve: for each family draw
/// `n_samples` roots ζ of the mixture CDF at fixed `q`, binarize at 0.5,
/// and accumulate the mean corner distance and the variance of the
/// implicit-function-theorem gradient ∂ζ/∂q. Streams in constant memory.
pub fn grad_variance_experiment(
    kinds: &[SmoothingKind],
    q: f64,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<GradVarianceRow>> {
    if n_samples < 10_000 {
        return Err(Error::InvalidArgument(format!(
            "gradient-variance experiment needs at least 10^4 samples, got {n_samples}"
        )));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidArgument(format!(
            "mixture weight q={q} outside [0,1]"
        )));
    }
    let mut rows = Vec::with_capacity(kinds.len());
    for (idx, &kind) in kinds.iter().enumerate() {
        kind.validate()?;
        let mut rng = rng::stream(seed, purpose::DIAG, idx as u64);
        // Welford accumulators: mean of |ζ−z| and mean/M2 of ∂ζ/∂q.
        let mut dist_mean = 0.0;
        let mut g_mean = 0.0;
        let mut g_m2 = 0.0;
        for n in 1..=n_samples {
            let rho: f64 = rng.gen();
            let zeta = sample_inverse_cdf(kind, q, rho)?;
            let grads = implicit_grads(kind, q, zeta)?;
            let z = if zeta > 0.5 { 1.0 } else { 0.0 };
            let dist = (zeta - z).abs();
            let nf = n as f64;
            dist_mean += (dist - dist_mean) / nf;
            let delta = grads.dzeta_dq - g_mean;
            g_mean += delta / nf;
            g_m2 += delta * (grads.dzeta_dq - g_mean);
        }
        rows.push(GradVarianceRow {
            kind: kind.name(),
            beta: kind.beta(),
            mean_abs_dist: dist_mean,
            grad_variance: g_m2 / (n_samples as f64 - 1.0),
        });
    }
    Ok(rows)
}

pub fn write_grad_variance_csv(path: &Path, rows: &[GradVarianceRow]) -> Result<()> {
    let mut out = String::from("kind,beta,mean_abs_dist,grad_variance\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.kind, r.beta, r.mean_abs_dist, r.grad_variance
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// One mean-field KL measurement: draw `zeta_index`, marginals after
/// `sweep` full sweeps (sweep 0 is the couplings-free initialization).
#[derive(Debug, Clone)]
pub struct MfKlTraceRow {
    pub beta: f64,
    pub zeta_index: usize,
    pub sweep: usize,
    pub kl: f64,
}

/// Draw ζ from the exact relaxed prior (enumerate p(z), then ζᵢ ~ r(·|zᵢ)),
/// fit mean field for `sweeps` sweeps, and record the exact KL to the
/// augmented posterior after every sweep. One trace per (β, ζ draw); β
/// comes from each entry of `kinds`. Every family replays the same z and ρ
/// draws (common random numbers), so traces with equal `zeta_index` differ
/// only through the smoothing family and are directly comparable across β.
/// Exact enumeration restricts D ≤ 20.
pub fn mf_kl_trace(
    rbm: &RBM,
    kinds: &[SmoothingKind],
    n_zeta: usize,
    sweeps: usize,
    seed: u64,
) -> Result<Vec<MfKlTraceRow>> {
    if rbm.d() > EXACT_KL_MAX_D {
        return Err(Error::TooLarge {
            context: "mf_kl_trace",
            d: rbm.d(),
            limit: EXACT_KL_MAX_D,
        });
    }
    if n_zeta == 0 || sweeps == 0 {
        return Err(Error::InvalidArgument(
            "mf_kl_trace needs n_zeta >= 1 and sweeps >= 1".into(),
        ));
    }
    let probs = exact_probs(rbm)?;
    let d = rbm.d();
    let mut rows = Vec::with_capacity(kinds.len() * n_zeta * (sweeps + 1));
    for &kind in kinds {
        kind.validate()?;
        let mut rng = rng::stream(seed, purpose::DIAG, 0);
        for draw in 0..n_zeta {
            // z ~ p(z) by inverse CDF over the enumerated distribution.
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut state_bits = probs.len() - 1;
            for (s, &p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    state_bits = s;
                    break;
                }
            }
            // ζᵢ | zᵢ via the degenerate mixture (q = zᵢ picks the component).
            let mut zeta = Array1::<f64>::zeros(d);
            for i in 0..d {
                let zi = ((state_bits >> i) & 1) as f64;
                let rho: f64 = rng.gen();
                zeta[i] = sample_inverse_cdf(kind, zi, rho)?;
            }
            let coeffs = kind.coefficients(zeta.as_slice().expect("contiguous"))?;
            let (_, trace) = mean_field_fit_trace(rbm, &coeffs, sweeps)?;
            for (sweep, m) in trace.iter().enumerate() {
                rows.push(MfKlTraceRow {
                    beta: kind.beta(),
                    zeta_index: draw,
                    sweep,
                    kl: mean_field_kl_exact(rbm, &coeffs, m)?,
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_mf_kl_csv(path: &Path, rows: &[MfKlTraceRow]) -> Result<()> {
    let mut out = String::from("beta,zeta_index,sweep,kl\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.beta, r.zeta_index, r.sweep, r.kl
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// One point of an inverse-CDF transition curve at fixed q.
#[derive(Debug, Clone)]
pub struct InvCdfRow {
    pub kind: &'static str,
    pub beta: f64,
    pub rho: f64,
    pub zeta: f64,
    pub dzeta_dq: f64,
}

/// Deterministic ζ(ρ) and ∂ζ/∂q(ρ) curves on the interior grid
/// ρ = (i+1)/(n+1): the sampler's transition sharpens as β grows, and the
/// gradient magnitude at ρ = 0.5 grows with it.
pub fn inverse_cdf_curves(
    kinds: &[SmoothingKind],
    q: f64,
    n_points: usize,
) -> Result<Vec<InvCdfRow>> {
    if n_points == 0 {
        return Err(Error::InvalidArgument(
            "inverse-CDF curves need at least one grid point".into(),
        ));
    }
    let mut rows = Vec::with_capacity(kinds.len() * n_points);
    for &kind in kinds {
        kind.validate()?;
        for i in 0..n_points {
            let rho = (i + 1) as f64 / (n_points + 1) as f64;
            let zeta = sample_inverse_cdf(kind, q, rho)?;
            let grads = implicit_grads(kind, q, zeta)?;
            rows.push(InvCdfRow {
                kind: kind.name(),
                beta: kind.beta(),
                rho,
                zeta,
                dzeta_dq: grads.dzeta_dq,
            });
        }
    }
    Ok(rows)
}

pub fn write_invcdf_csv(path: &Path, rows: &[InvCdfRow]) -> Result<()> {
    let mut out = String::from("kind,beta,rho,zeta,dzeta_dq\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.kind, r.beta, r.rho, r.zeta, r.dzeta_dq
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// One row of the sampler-comparison report: a model trained with `k`
/// importance samples and this negative-phase sampler, then evaluated in
/// discrete space.
#[derive(Debug, Clone)]
pub struct PaVsPcdRow {
    pub sampler: &'static str,
    pub k: usize,
    pub eval_ll: f64,
    pub log_z: f64,
}

/// Train twin models per K — identical configs and seeds except the
/// negative-phase sampler — and report the discrete importance-weighted
/// evidence of each on held-out rows. The quantitative ordering is
/// reported, not asserted.
pub fn pa_vs_pcd_report(
    base: &TrainConfig,
    ks: &[usize],
    pcd: SamplerConfig,
    pa: SamplerConfig,
    data: &Array2<f64>,
    eval_data: &Array2<f64>,
    eval_k: usize,
) -> Result<Vec<PaVsPcdRow>> {
    if ks.is_empty() {
        return Err(Error::InvalidArgument(
            "sampler comparison needs at least one K".into(),
        ));
    }
    if pcd.kind != SamplerKind::Pcd || pa.kind != SamplerKind::Pa {
        return Err(Error::InvalidArgument(
            "pass a PCD config and a PA config, in that order".into(),
        ));
    }
    let mut rows = Vec::with_capacity(2 * ks.len());
    for &k in ks {
        for (name, sampler) in [("pcd", pcd.clone()), ("pa", pa.clone())] {
            let mut config = base.clone();
            config.k = k;
            config.sampler = sampler;
            config.final_ais = true;
            let report = train(&config, data)?;
            let log_z = report
                .final_log_z
                .expect("final_ais=true always produces a partition estimate");
            let eval_ll = discrete_eval_dataset(
                &report.state,
                eval_data,
                eval_k,
                Some(log_z),
                config.seed,
            )?;
            rows.push(PaVsPcdRow {
                sampler: name,
                k,
                eval_ll,
                log_z,
            });
        }
    }
    Ok(rows)
}

pub fn write_pa_vs_pcd_csv(path: &Path, rows: &[PaVsPcdRow]) -> Result<()> {
    let mut out = String::from("sampler,k,eval_ll,logz\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.sampler, r.k, r.eval_ll, r.log_z));
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Arch, ModelConfig, PriorSpec};
    use crate::rng;

    #[test]
    fn grad_variance_rejects_small_sample_counts() {
        let kinds = [SmoothingKind::Exponential { beta: 10.0 }];
        assert!(
            grad_variance_experiment(&kinds, 0.5, 100, 1).is_err(),
            "fewer than 10^4 samples must be rejected"
        );
    }

    #[test]
    fn grad_variance_rows_are_deterministic_and_sane() {
        let kinds = [
            SmoothingKind::Exponential { beta: 10.0 },
            SmoothingKind::PowerFunction { beta: 30.0 },
        ];
        let a = grad_variance_experiment(&kinds, 0.5, 20_000, 5).unwrap();
        let b = grad_variance_experiment(&kinds, 0.5, 20_000, 5).unwrap();
        assert_eq!(a.len(), 2);
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(
                x.grad_variance.to_bits(),
                y.grad_variance.to_bits(),
                "same seed must reproduce the experiment bit for bit"
            );
            assert!(
                x.mean_abs_dist > 0.0 && x.mean_abs_dist < 0.5,
                "corner distance must land strictly inside (0, 0.5): {}",
                x.mean_abs_dist
            );
            assert!(
                x.grad_variance.is_finite() && x.grad_variance > 0.0,
                "gradient variance must be positive and finite"
            );
        }
        // Higher β concentrates mass nearer the corners.
        let sharp = grad_variance_experiment(
            &[SmoothingKind::Exponential { beta: 15.0 }],
            0.5,
            20_000,
            5,
        )
        .unwrap();
        assert!(
            sharp[0].mean_abs_dist < a[0].mean_abs_dist,
            "beta=15 exponential should sit closer to the corners than beta=10"
        );
    }

    #[test]
    fn mf_kl_is_zero_for_factorial_machines_and_monotone_in_sweeps() {
        let mut r = rng::stream(3, rng::purpose::INIT, 0);
        let free = RBM::random_bipartite(3, 3, 1.0, 0.0, &mut r);
        let kinds = [SmoothingKind::PowerFunction { beta: 20.0 }];
        let rows = mf_kl_trace(&free, &kinds, 4, 3, 9).unwrap();
        assert_eq!(rows.len(), 4 * 4, "4 draws x (3 sweeps + init)");
        for row in &rows {
            assert!(
                row.kl.abs() < 1e-9,
                "W=0 target is factorial, KL must vanish at sweep {}: {}",
                row.sweep,
                row.kl
            );
        }

        let coupled = RBM::random_bipartite(3, 3, 0.5, 0.6, &mut r);
        let rows = mf_kl_trace(&coupled, &kinds, 5, 6, 9).unwrap();
        for chunk in rows.chunks(7) {
            for pair in chunk.windows(2) {
                assert!(
                    pair[1].kl <= pair[0].kl + 1e-10,
                    "KL must be nonincreasing across sweeps: {} -> {}",
                    pair[0].kl,
                    pair[1].kl
                );
            }
        }
    }

    #[test]
    fn invcdf_curves_sharpen_with_beta() {
        let kinds = [
            SmoothingKind::Exponential { beta: 8.0 },
            SmoothingKind::Exponential { beta: 16.0 },
        ];
        let rows = inverse_cdf_curves(&kinds, 0.5, 99).unwrap();
        assert_eq!(rows.len(), 2 * 99);
        let (soft, sharp) = rows.split_at(99);
        // Monotone in ρ for both curves.
        for curve in [soft, sharp] {
            for pair in curve.windows(2) {
                assert!(
                    pair[1].zeta >= pair[0].zeta,
                    "inverse CDF must be nondecreasing in rho"
                );
            }
        }
        // Midpoint gradient magnitude grows with β (ρ = 0.5 is grid point 49).
        let mid = 49;
        assert!((soft[mid].rho - 0.5).abs() < 1e-12, "grid midpoint is rho=0.5");
        assert!(
            sharp[mid].dzeta_dq.abs() > soft[mid].dzeta_dq.abs(),
            "gradient at rho=0.5 must grow with beta: {} vs {}",
            sharp[mid].dzeta_dq,
            soft[mid].dzeta_dq
        );
        // Transition sharpens: the middle half of the ρ grid spans less ζ.
        let span = |c: &[InvCdfRow]| c[74].zeta - c[24].zeta;
        assert!(
            span(sharp) > span(soft),
            "larger beta should jump more of [0,1] across the middle rhos"
        );
    }

    #[test]
    fn pa_vs_pcd_report_schema_and_determinism() {
        let config = ModelConfig {
            d_x: 6,
            d1: 2,
            d2: 2,
            groups: 2,
            arch: Arch::Linear,
            decoder_arch: Arch::Linear,
            prior: PriorSpec::Overlapping(SmoothingKind::PowerFunction { beta: 30.0 }),
            mf_iterations: 5,
        };
        let mut base = TrainConfig::new(config, 17);
        base.updates = 3;
        base.batch_size = 3;
        base.diag_every = 0;
        base.ais = crate::samplers::AisConfig::linear(40, 20);
        let spec = crate::data::SyntheticSpec {
            modes: 2,
            d_x: 6,
            noise: 0.1,
            n: 24,
        };
        let synth = crate::data::make_synthetic(&spec, 23).unwrap();
        let eval = synth.data.slice(ndarray::s![0..6, ..]).to_owned();

        let rows = pa_vs_pcd_report(
            &base,
            &[1, 5],
            SamplerConfig::pcd(16, 1),
            SamplerConfig::pa(64, 8),
            &synth.data,
            &eval,
            16,
        )
        .unwrap();
        assert_eq!(rows.len(), 4, "one row per (sampler, K) pair");
        assert_eq!(rows[0].sampler, "pcd");
        assert_eq!(rows[1].sampler, "pa");
        assert_eq!(rows[0].k, 1);
        assert_eq!(rows[3].k, 5);
        for r in &rows {
            assert!(r.eval_ll.is_finite(), "eval bound must be finite");
            assert!(r.log_z.is_finite(), "partition estimate must be finite");
        }

        let again = pa_vs_pcd_report(
            &base,
            &[1, 5],
            SamplerConfig::pcd(16, 1),
            SamplerConfig::pa(64, 8),
            &synth.data,
            &eval,
            16,
        )
        .unwrap();
        for (x, y) in rows.iter().zip(again.iter()) {
            assert_eq!(
                x.eval_ll.to_bits(),
                y.eval_ll.to_bits(),
                "identical seeds and configs must reproduce the report exactly"
            );
        }
    }
}
