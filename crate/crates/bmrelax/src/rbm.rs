//! Boltzmann machine core: the parameter container, energy evaluation,
//! exact small-D oracles (log partition, relaxed log-density, moments), and
//! block Gibbs sampling for bipartite coupling masks.
//!
//! The distribution is p(z) = exp(aᵀz + ½ zᵀWz − log Z_θ) over z ∈ {0,1}^D,
//! i.e. energy E_θ(z) = −aᵀz − ½ zᵀWz with W symmetric and zero-diagonal.
//! A bipartite mask (restricted Boltzmann machine) additionally zeroes all
//! couplings within each side, which makes the two blocks conditionally
//! factorial — the basis for parallel Gibbs updates and the analytic
//! one-side marginalization used by the exact log-partition oracle.

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::math::{sigmoid, softplus, LogSumExp};
use crate::smoothing::SmoothingKind;

/// Largest D (or smaller bipartite side) the enumeration oracles accept.
pub const ENUMERATION_LIMIT: usize = 24;
/// Largest D for the exact relaxed log-density oracle.
pub const RELAXED_ENUMERATION_LIMIT: usize = 20;

/// Per-unit augmentation coefficients produced by a smoothing family at a
/// fixed ζ: b_i = log r(ζ_i|1) − log r(ζ_i|0) and c_i = log r(ζ_i|0).
/// Adding them to a Boltzmann machine's energy turns p(z|ζ) into another
/// Boltzmann machine with shifted biases.
#[derive(Debug, Clone)]
pub struct AugmentedCoefficients {
    pub b: Array1<f64>,
    pub c: Array1<f64>,
}

impl AugmentedCoefficients {
    /// All-zero coefficients (no augmentation).
    pub fn zeros(d: usize) -> Self {
        AugmentedCoefficients {
            b: Array1::zeros(d),
            c: Array1::zeros(d),
        }
    }

    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }

    /// Sum of the constant terms Σ_i c_i.
    pub fn c_sum(&self) -> f64 {
        self.c.sum()
    }
}

/// Boltzmann machine parameters with an optional bipartite mask.
#[derive(Debug, Clone)]
pub struct RBM {
    a: Array1<f64>,
    w: Array2<f64>,
    /// (D1, D2) with side 1 = units 0..D1, side 2 = units D1..D1+D2.
    bipartite: Option<(usize, usize)>,
}

impl RBM {
    /// General (densely coupled) machine. W must be symmetric with zero
    /// diagonal.
    pub fn new(a: Array1<f64>, w: Array2<f64>) -> Result<Self> {
        Self::build(a, w, None)
    }

    /// Restricted machine: units 0..d1 form side 1, units d1..d1+d2 side 2;
    /// W must vanish within each side.
    pub fn new_bipartite(a: Array1<f64>, w: Array2<f64>, d1: usize, d2: usize) -> Result<Self> {
        if d1 + d2 != a.len() {
            return Err(Error::dim("RBM bipartite sides", a.len(), d1 + d2));
        }
        Self::build(a, w, Some((d1, d2)))
    }

    fn build(a: Array1<f64>, w: Array2<f64>, bipartite: Option<(usize, usize)>) -> Result<Self> {
        let d = a.len();
        if w.nrows() != d || w.ncols() != d {
            return Err(Error::dim("RBM coupling matrix", d, w.nrows().max(w.ncols())));
        }
        for i in 0..d {
            if w[[i, i]] != 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "RBM coupling diagonal must be zero; W[{i},{i}] = {}",
                    w[[i, i]]
                )));
            }
            for j in 0..i {
                if w[[i, j]] != w[[j, i]] {
                    return Err(Error::InvalidArgument(format!(
                        "RBM coupling must be symmetric; W[{i},{j}] != W[{j},{i}]"
                    )));
                }
            }
        }
        if let Some((d1, _)) = bipartite {
            for i in 0..d {
                for j in 0..d {
                    let same_side = (i < d1) == (j < d1);
                    if same_side && w[[i, j]] != 0.0 {
                        return Err(Error::InvalidArgument(format!(
                            "bipartite mask violated: W[{i},{j}] nonzero within a side"
                        )));
                    }
                }
            }
        }
        Ok(RBM { a, w, bipartite })
    }

    /// Bipartite machine with a = 0 and cross-couplings drawn uniformly from
    /// ±`w_scale` (biases from ±`a_scale`). The workhorse for random test
    /// instances and the trainer's initialization.
    pub fn random_bipartite(
        d1: usize,
        d2: usize,
        a_scale: f64,
        w_scale: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let d = d1 + d2;
        let a = Array1::from_shape_fn(d, |_| rng.gen_range(-1.0..1.0) * a_scale);
        let mut w = Array2::<f64>::zeros((d, d));
        for i in 0..d1 {
            for j in d1..d {
                let v = rng.gen_range(-1.0..1.0) * w_scale;
                w[[i, j]] = v;
                w[[j, i]] = v;
            }
        }
        RBM {
            a,
            w,
            bipartite: Some((d1, d2)),
        }
    }

    pub fn d(&self) -> usize {
        self.a.len()
    }

    pub fn a(&self) -> &Array1<f64> {
        &self.a
    }

    pub fn w(&self) -> &Array2<f64> {
        &self.w
    }

    pub fn bipartite(&self) -> Option<(usize, usize)> {
        self.bipartite
    }

    /// Mutable bias access for the trainer. Invariants are unaffected.
    pub(crate) fn a_mut(&mut self) -> &mut Array1<f64> {
        &mut self.a
    }

    /// Mutable coupling access for the trainer. Callers must apply symmetric,
    /// mask-respecting updates; `debug_validate` guards this in debug builds.
    pub(crate) fn w_mut(&mut self) -> &mut Array2<f64> {
        &mut self.w
    }

    /// Re-check the structural invariants (debug builds only).
    #[allow(dead_code)]
    pub(crate) fn debug_validate(&self) {
        #[cfg(debug_assertions)]
        {
            let rebuilt = Self::build(self.a.clone(), self.w.clone(), self.bipartite);
            debug_assert!(rebuilt.is_ok(), "RBM invariant broken: {rebuilt:?}");
        }
    }

    /// True when a bipartite mask is present.
    pub fn is_bipartite(&self) -> bool {
        self.bipartite.is_some()
    }

    /// Whether the coupling mask admits a nonzero Wᵢⱼ: off-diagonal always
    /// for dense machines, cross-side only for bipartite ones.
    pub fn mask_allows(&self, i: usize, j: usize) -> bool {
        if i == j {
            return false;
        }
        match self.bipartite {
            None => true,
            Some((d1, _)) => (i < d1) != (j < d1),
        }
    }
}

/// E_θ(z) = −aᵀz − ½ zᵀWz for a binary z. Errors on wrong length or
/// non-binary entries.
pub fn energy(rbm: &RBM, z: &Array1<f64>) -> Result<f64> {
    if z.len() != rbm.d() {
        return Err(Error::dim("energy input", rbm.d(), z.len()));
    }
    if z.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidArgument(
            "energy input must be binary (entries 0 or 1)".into(),
        ));
    }
    Ok(energy_multilinear(rbm, z))
}

/// The same bilinear form evaluated at any real vector (the multilinear
/// extension of the energy; exact for binary inputs).
pub(crate) fn energy_multilinear(rbm: &RBM, m: &Array1<f64>) -> f64 {
    -(rbm.a.dot(m)) - 0.5 * m.dot(&rbm.w.dot(m))
}

/// Augmented energy Ê(m) = E(m) − bᵀm − Σ_i c_i, multilinearly extended to
/// m ∈ [0,1]^D (equals the discrete augmented energy at binary m).
pub fn augmented_energy(
    rbm: &RBM,
    coeffs: &AugmentedCoefficients,
    m: &Array1<f64>,
) -> Result<f64> {
    if m.len() != rbm.d() {
        return Err(Error::dim("augmented_energy input", rbm.d(), m.len()));
    }
    if coeffs.len() != rbm.d() {
        return Err(Error::dim("augmented_energy coefficients", rbm.d(), coeffs.len()));
    }
    Ok(energy_multilinear(rbm, m) - coeffs.b.dot(m) - coeffs.c_sum())
}

/// Visit every state z ∈ {0,1}^D in Gray-code order, passing the state's bit
/// pattern (bit i = z_i) and −E(z) + extraᵀz to the callback. The Gray-code
/// walk updates the local fields incrementally, so the whole enumeration
/// costs O(2^D · D) instead of O(2^D · D²).
pub(crate) fn for_each_state_neg_energy(
    rbm: &RBM,
    extra: Option<&Array1<f64>>,
    mut visit: impl FnMut(u64, f64),
) {
    let d = rbm.d();
    assert!(d < 64, "state enumeration needs D < 64 bits");
    let mut z = vec![0.0_f64; d];
    // h[i] = Σ_j W_ij z_j, maintained incrementally.
    let mut h = vec![0.0_f64; d];
    let mut neg_e = 0.0_f64; // (a+extra)ᵀz + ½ zᵀWz at the current state
    let bias =
        |i: usize| -> f64 { rbm.a[i] + extra.map_or(0.0, |e| e[i]) };
    visit(0, 0.0);
    let n: u64 = 1 << d;
    let mut bits: u64 = 0;
    for k in 1..n {
        let i = k.trailing_zeros() as usize; // bit flipped between k−1 and k in Gray order
        let delta = bias(i) + h[i];
        if z[i] == 0.0 {
            z[i] = 1.0;
            bits |= 1 << i;
            neg_e += delta;
            for j in 0..d {
                h[j] += rbm.w[[j, i]];
            }
        } else {
            z[i] = 0.0;
            bits &= !(1 << i);
            neg_e -= delta;
            for j in 0..d {
                h[j] -= rbm.w[[j, i]];
            }
        }
        visit(bits, neg_e);
    }
}

/// Exact log Z_θ. Bipartite machines marginalize the larger side
/// analytically and enumerate the smaller (min side ≤ 24); general machines
/// enumerate all 2^D states (D ≤ 24).
pub fn exact_log_partition(rbm: &RBM) -> Result<f64> {
    match rbm.bipartite {
        Some((d1, d2)) if d1.min(d2) <= ENUMERATION_LIMIT => {
            // Enumerate the smaller side s; for each of its states z_s,
            // the other side factorizes: Σ_{z_o} e^{a_oᵀz_o + z_oᵀW z_s}
            // = Π_j (1 + e^{a_j + (W z_s)_j}).
            let d = rbm.d();
            let (s_range, o_range) = if d1 <= d2 {
                (0..d1, d1..d)
            } else {
                (d1..d, 0..d1)
            };
            let s_idx: Vec<usize> = s_range.collect();
            let o_idx: Vec<usize> = o_range.collect();
            let mut acc = LogSumExp::new();
            let n: u64 = 1 << s_idx.len();
            for k in 0..n {
                let mut term = 0.0;
                for (b, &i) in s_idx.iter().enumerate() {
                    if (k >> b) & 1 == 1 {
                        term += rbm.a[i];
                    }
                }
                for &j in &o_idx {
                    let mut field = rbm.a[j];
                    for (b, &i) in s_idx.iter().enumerate() {
                        if (k >> b) & 1 == 1 {
                            field += rbm.w[[j, i]];
                        }
                    }
                    term += softplus(field);
                }
                acc.add(term);
            }
            Ok(acc.value())
        }
        Some((d1, d2)) => Err(Error::TooLarge {
            context: "exact_log_partition (bipartite side)",
            d: d1.min(d2),
            limit: ENUMERATION_LIMIT,
        }),
        None if rbm.d() <= ENUMERATION_LIMIT => {
            let mut acc = LogSumExp::new();
            for_each_state_neg_energy(rbm, None, |_, neg_e| acc.add(neg_e));
            Ok(acc.value())
        }
        None => Err(Error::TooLarge {
            context: "exact_log_partition",
            d: rbm.d(),
            limit: ENUMERATION_LIMIT,
        }),
    }
}

/// Log of the augmented partition function log Σ_z exp(−Ê(z)) for the given
/// coefficients (full enumeration; shared by the exact-KL diagnostics).
pub(crate) fn exact_augmented_log_partition(
    rbm: &RBM,
    coeffs: &AugmentedCoefficients,
) -> Result<f64> {
    if rbm.d() > RELAXED_ENUMERATION_LIMIT {
        return Err(Error::TooLarge {
            context: "exact_augmented_log_partition",
            d: rbm.d(),
            limit: RELAXED_ENUMERATION_LIMIT,
        });
    }
    let mut acc = LogSumExp::new();
    for_each_state_neg_energy(rbm, Some(&coeffs.b), |_, neg_e| acc.add(neg_e));
    Ok(acc.value() + coeffs.c_sum())
}

/// Exact normalized log p(ζ) = log Σ_z p(z) r(ζ|z) by enumeration (D ≤ 20).
/// The mixture identity log Σ_z e^{−E+bᵀz}·e^{Σc} − log Z_θ is used, with
/// coefficients from the smoothing family.
pub fn exact_relaxed_log_prob(rbm: &RBM, kind: SmoothingKind, zeta: &Array1<f64>) -> Result<f64> {
    if zeta.len() != rbm.d() {
        return Err(Error::dim("exact_relaxed_log_prob input", rbm.d(), zeta.len()));
    }
    if rbm.d() > RELAXED_ENUMERATION_LIMIT {
        return Err(Error::TooLarge {
            context: "exact_relaxed_log_prob",
            d: rbm.d(),
            limit: RELAXED_ENUMERATION_LIMIT,
        });
    }
    let coeffs = kind.coefficients(zeta.as_slice().expect("contiguous"))?;
    let log_zhat = exact_augmented_log_partition(rbm, &coeffs)?;
    let log_z = exact_log_partition(rbm)?;
    Ok(log_zhat - log_z)
}

/// Exact unnormalized relaxed log-density (excludes −log Z_θ); the quantity
/// the mean-field relaxation approximates during training.
pub fn exact_relaxed_log_prob_unnormalized(
    rbm: &RBM,
    kind: SmoothingKind,
    zeta: &Array1<f64>,
) -> Result<f64> {
    let coeffs = kind.coefficients(zeta.as_slice().expect("contiguous"))?;
    exact_augmented_log_partition(rbm, &coeffs)
}

/// Exact probabilities over all 2^D states, indexed by bit pattern
/// (bit i of the index = z_i). D ≤ 20.
pub fn exact_probs(rbm: &RBM) -> Result<Vec<f64>> {
    if rbm.d() > RELAXED_ENUMERATION_LIMIT {
        return Err(Error::TooLarge {
            context: "exact_probs",
            d: rbm.d(),
            limit: RELAXED_ENUMERATION_LIMIT,
        });
    }
    let mut acc = LogSumExp::new();
    for_each_state_neg_energy(rbm, None, |_, neg_e| acc.add(neg_e));
    let log_z = acc.value();
    let mut probs = vec![0.0_f64; 1 << rbm.d()];
    for_each_state_neg_energy(rbm, None, |bits, neg_e| {
        probs[bits as usize] = (neg_e - log_z).exp();
    });
    Ok(probs)
}

/// Exact first and second moments E[z], E[zzᵀ] of the Boltzmann
/// distribution (D ≤ 16 recommended; hard limit 20). The second-moment
/// matrix has E[z_i] on its diagonal.
pub fn exact_moments(rbm: &RBM) -> Result<(Array1<f64>, Array2<f64>)> {
    let d = rbm.d();
    let probs = exact_probs(rbm)?;
    let mut first = Array1::<f64>::zeros(d);
    let mut second = Array2::<f64>::zeros((d, d));
    for (bits, &p) in probs.iter().enumerate() {
        for i in 0..d {
            if (bits >> i) & 1 == 1 {
                first[i] += p;
                for j in 0..=i {
                    if (bits >> j) & 1 == 1 {
                        second[[i, j]] += p;
                    }
                }
            }
        }
    }
    for i in 0..d {
        for j in i + 1..d {
            second[[i, j]] = second[[j, i]];
        }
    }
    Ok((first, second))
}

/// One block Gibbs sweep for a bipartite machine: resample side 1 given
/// side 2, then side 2 given side 1, with conditionals σ(a_i + Σ_j W_ij z_j).
/// The state is updated in place.
pub fn block_gibbs_sweep(rbm: &RBM, state: &mut Array1<f64>, rng: &mut impl Rng) -> Result<()> {
    if !rbm.is_bipartite() {
        return Err(Error::NotBipartite {
            context: "block_gibbs_sweep",
        });
    }
    if state.len() != rbm.d() {
        return Err(Error::dim("block_gibbs_sweep state", rbm.d(), state.len()));
    }
    gibbs_sweep_scaled(rbm, state, 1.0, rng);
    Ok(())
}

/// Internal sweep with the couplings scaled by `w_scale` (the annealing
/// path used by AIS and population annealing). Assumes a bipartite machine.
pub(crate) fn gibbs_sweep_scaled(
    rbm: &RBM,
    state: &mut Array1<f64>,
    w_scale: f64,
    rng: &mut impl Rng,
) {
    let (d1, _) = rbm.bipartite.expect("scaled sweep requires bipartite mask");
    let d = rbm.d();
    for side in [0..d1, d1..d] {
        for i in side {
            // Same-side couplings are structurally zero, so the full row dot
            // only picks up the opposite side.
            let field = rbm.a[i] + w_scale * rbm.w.row(i).dot(state);
            state[i] = if rng.gen::<f64>() < sigmoid(field) {
                1.0
            } else {
                0.0
            };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::logsumexp;
    use crate::rng::{purpose, stream};
    use ndarray::array;

    fn w2(w: f64) -> Array2<f64> {
        array![[0.0, w], [w, 0.0]]
    }

    #[test]
    fn energy_closed_form_points() {
        let rbm = RBM::new(array![1.0, -1.0], w2(2.0)).unwrap();
        let e = energy(&rbm, &array![1.0, 1.0]).unwrap();
        assert!((e - (-2.0)).abs() < 1e-15, "got {e}");
        assert_eq!(energy(&rbm, &array![0.0, 0.0]).unwrap(), 0.0);

        let zero = RBM::new(Array1::zeros(3), Array2::zeros((3, 3))).unwrap();
        assert_eq!(energy(&zero, &array![1.0, 0.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn energy_rejects_bad_input() {
        let rbm = RBM::new(array![1.0, -1.0], w2(2.0)).unwrap();
        assert!(energy(&rbm, &array![1.0]).is_err(), "dimension mismatch");
        assert!(energy(&rbm, &array![0.5, 1.0]).is_err(), "non-binary");
    }

    #[test]
    fn constructor_enforces_structure() {
        assert!(RBM::new(array![0.0, 0.0], array![[0.1, 0.0], [0.0, 0.0]]).is_err());
        assert!(RBM::new(array![0.0, 0.0], array![[0.0, 1.0], [2.0, 0.0]]).is_err());
        let w_inside = array![
            [0.0, 0.5, 0.0],
            [0.5, 0.0, 0.0],
            [0.0, 0.0, 0.0]
        ];
        assert!(RBM::new_bipartite(Array1::zeros(3), w_inside, 2, 1).is_err());
    }

    #[test]
    fn log_partition_small_closed_forms() {
        let d1 = RBM::new(array![0.0], Array2::zeros((1, 1))).unwrap();
        assert!((exact_log_partition(&d1).unwrap() - 2.0_f64.ln()).abs() < 1e-14);

        for &w in &[0.7, -1.3, 2.4] {
            let rbm = RBM::new(array![0.0, 0.0], w2(w)).unwrap();
            let want = (3.0 + w.exp()).ln();
            let got = exact_log_partition(&rbm).unwrap();
            assert!((got - want).abs() < 1e-12, "w={w}: {got} vs {want}");
        }
    }

    #[test]
    fn bipartite_log_partition_matches_full_enumeration() {
        let mut rng = stream(11, purpose::DIAG, 0);
        let rbm = RBM::random_bipartite(3, 3, 0.8, 0.9, &mut rng);
        let analytic = exact_log_partition(&rbm).unwrap();
        // Independent full enumeration, no Gray-code machinery.
        let d = rbm.d();
        let mut terms = Vec::new();
        for bits in 0..(1_u64 << d) {
            let z = Array1::from_shape_fn(d, |i| ((bits >> i) & 1) as f64);
            terms.push(-energy(&rbm, &z).unwrap());
        }
        let brute = logsumexp(&terms);
        assert!(
            (analytic - brute).abs() < 1e-12,
            "analytic {analytic} vs brute {brute}"
        );
    }

    #[test]
    fn augmented_energy_reduces_to_discrete_at_vertices() {
        let mut rng = stream(3, purpose::DIAG, 1);
        let rbm = RBM::random_bipartite(2, 2, 1.0, 1.0, &mut rng);
        let coeffs = AugmentedCoefficients {
            b: array![0.3, -0.2, 0.9, 0.0],
            c: array![-0.1, 0.4, 0.0, 0.2],
        };
        for bits in 0..16_u64 {
            let z = Array1::from_shape_fn(4, |i| ((bits >> i) & 1) as f64);
            let direct =
                energy(&rbm, &z).unwrap() - coeffs.b.dot(&z) - coeffs.c_sum();
            let via = augmented_energy(&rbm, &coeffs, &z).unwrap();
            assert!((direct - via).abs() < 1e-13);
        }
    }

    #[test]
    fn relaxed_log_prob_symmetric_scalar_case() {
        let rbm = RBM::new(array![0.0], Array2::zeros((1, 1))).unwrap();
        let kind = SmoothingKind::PowerFunction { beta: 4.0 };
        let got = exact_relaxed_log_prob(&rbm, kind, &array![0.5]).unwrap();
        let want = kind.log_pdf(0.5, false);
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn relaxed_log_prob_factorial_identity() {
        // W=0: log p(ζ) = Σ_i log[(1−σ(a_i))r(ζ_i|0) + σ(a_i)r(ζ_i|1)].
        let a = array![0.4, -1.1, 0.0];
        let rbm = RBM::new(a.clone(), Array2::zeros((3, 3))).unwrap();
        let kind = SmoothingKind::Exponential { beta: 6.0 };
        let zeta = array![0.2, 0.8, 0.55];
        let got = exact_relaxed_log_prob(&rbm, kind, &zeta).unwrap();
        let want: f64 = zeta
            .iter()
            .zip(a.iter())
            .map(|(&x, &ai)| {
                let q = sigmoid(ai);
                ((1.0 - q) * kind.pdf(x, false) + q * kind.pdf(x, true)).ln()
            })
            .sum();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn relaxed_log_prob_rejects_out_of_support() {
        let rbm = RBM::new(array![0.0], Array2::zeros((1, 1))).unwrap();
        let kind = SmoothingKind::PowerFunction { beta: 4.0 };
        assert!(exact_relaxed_log_prob(&rbm, kind, &array![1.5]).is_err());
    }

    #[test]
    fn gray_code_enumeration_matches_direct_energies() {
        let mut rng = stream(5, purpose::DIAG, 2);
        let rbm = RBM::random_bipartite(3, 2, 0.7, 1.1, &mut rng);
        let extra = array![0.5, -0.3, 0.0, 0.2, -0.9];
        let mut seen = vec![false; 32];
        for_each_state_neg_energy(&rbm, Some(&extra), |bits, neg_e| {
            let z = Array1::from_shape_fn(5, |i| ((bits >> i) & 1) as f64);
            let want = -energy(&rbm, &z).unwrap() + extra.dot(&z);
            assert!(
                (neg_e - want).abs() < 1e-11,
                "state {bits}: {neg_e} vs {want}"
            );
            seen[bits as usize] = true;
        });
        assert!(seen.iter().all(|&s| s), "every state visited exactly once");
    }

    #[test]
    fn exact_moments_match_definition() {
        let mut rng = stream(9, purpose::DIAG, 3);
        let rbm = RBM::random_bipartite(2, 2, 0.6, 0.8, &mut rng);
        let probs = exact_probs(&rbm).unwrap();
        let (m1, m2) = exact_moments(&rbm).unwrap();
        let mut want1 = Array1::<f64>::zeros(4);
        let mut want2 = Array2::<f64>::zeros((4, 4));
        for (bits, &p) in probs.iter().enumerate() {
            for i in 0..4 {
                let zi = ((bits >> i) & 1) as f64;
                want1[i] += p * zi;
                for j in 0..4 {
                    let zj = ((bits >> j) & 1) as f64;
                    want2[[i, j]] += p * zi * zj;
                }
            }
        }
        for i in 0..4 {
            assert!((m1[i] - want1[i]).abs() < 1e-12);
            for j in 0..4 {
                assert!((m2[[i, j]] - want2[[i, j]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn probabilities_sum_to_one() {
        let mut rng = stream(13, purpose::DIAG, 4);
        let rbm = RBM::random_bipartite(4, 4, 0.9, 1.0, &mut rng);
        let probs = exact_probs(&rbm).unwrap();
        let total: f64 = probs.iter().sum();
        assert!((total - 1.0).abs() < 1e-10, "sum {total}");
    }

    #[test]
    fn gibbs_requires_bipartite_mask() {
        let rbm = RBM::new(array![0.0, 0.0], w2(0.5)).unwrap();
        let mut state = array![0.0, 1.0];
        let mut rng = stream(1, purpose::DIAG, 5);
        assert!(block_gibbs_sweep(&rbm, &mut state, &mut rng).is_err());
    }

    #[test]
    fn gibbs_trajectory_is_deterministic_given_seed() {
        let mut rng = stream(2, purpose::DIAG, 6);
        let rbm = RBM::random_bipartite(4, 4, 0.5, 0.7, &mut rng);
        let run = |seed: u64| {
            let mut state = Array1::<f64>::zeros(8);
            let mut r = stream(seed, purpose::DIAG, 7);
            let mut trace = Vec::new();
            for _ in 0..50 {
                block_gibbs_sweep(&rbm, &mut state, &mut r).unwrap();
                trace.push(state.clone());
            }
            trace
        };
        assert_eq!(run(42), run(42));
        assert_ne!(run(42), run(43));
    }

    #[test]
    fn gibbs_independent_units_match_sigmoid_marginals() {
        let a = array![0.8, -0.4, 0.0, 1.5];
        let rbm = RBM::new_bipartite(a.clone(), Array2::zeros((4, 4)), 2, 2).unwrap();
        let mut state = Array1::<f64>::zeros(4);
        let mut rng = stream(7, purpose::DIAG, 8);
        let n = 20_000;
        let mut counts = Array1::<f64>::zeros(4);
        for _ in 0..n {
            block_gibbs_sweep(&rbm, &mut state, &mut rng).unwrap();
            counts += &state;
        }
        for i in 0..4 {
            let p = sigmoid(a[i]);
            let se = (p * (1.0 - p) / n as f64).sqrt();
            let err = (counts[i] / n as f64 - p).abs();
            assert!(err < 4.0 * se, "unit {i}: err {err} vs 4se {}", 4.0 * se);
        }
    }
}
