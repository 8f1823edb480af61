//! Binary checkpoints: a typed key-value container holding model
//! parameters, optimizer moments, the update counter, the master seed, and
//! the persistent negative-phase chains — everything a resumed run needs to
//! continue bit-identically.
//!
//! Layout (all integers little-endian):
//!   magic `BMRXCKPT` (8 bytes) · version u32 · entry count u32 · entries.
//! Each entry is: key length u16 · UTF-8 key · tag u8 · payload, with tags
//!   1 = u64, 2 = i64, 3 = f64, 4 = f64 array, 5 = u64 array, 6 = bytes;
//! arrays and byte strings carry a u64 element/byte count first. Unknown
//! keys are preserved by readers (forward compatibility); missing required
//! keys and truncated payloads are [`Error::Format`] errors, never panics.
//! docs/checkpoint-format.md walks the byte layout with a worked example.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::model::{Arch, ModelConfig, ModelState, PriorSpec};
use crate::rbm::RBM;
use crate::samplers::PcdState;
use crate::smoothing::SmoothingKind;

const MAGIC: &[u8; 8] = b"BMRXCKPT";
const VERSION: u32 = 1;

/// One typed value in the container.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    U64(u64),
    I64(i64),
    F64(f64),
    F64Array(Vec<f64>),
    U64Array(Vec<u64>),
    Bytes(Vec<u8>),
}

/// An ordered key → typed-value map with the binary encoding above.
#[derive(Debug, Clone, Default)]
pub struct Container {
    entries: BTreeMap<String, Value>,
}

fn fmt_err(path: &Path, detail: impl Into<String>) -> Error {
    Error::Format {
        path: path.display().to_string(),
        detail: detail.into(),
    }
}

impl Container {
    pub fn new() -> Container {
        Container::default()
    }

    pub fn put(&mut self, key: &str, value: Value) {
        self.entries.insert(key.to_string(), value);
    }

    pub fn put_u64(&mut self, key: &str, v: u64) {
        self.put(key, Value::U64(v));
    }

    pub fn put_f64(&mut self, key: &str, v: f64) {
        self.put(key, Value::F64(v));
    }

    pub fn put_f64s(&mut self, key: &str, v: Vec<f64>) {
        self.put(key, Value::F64Array(v));
    }

    pub fn put_str(&mut self, key: &str, v: &str) {
        self.put(key, Value::Bytes(v.as_bytes().to_vec()));
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.entries.get(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|k| k.as_str())
    }

    fn require(&self, path: &Path, key: &str) -> Result<&Value> {
        self.entries
            .get(key)
            .ok_or_else(|| fmt_err(path, format!("missing required key `{key}`")))
    }

    fn req_u64(&self, path: &Path, key: &str) -> Result<u64> {
        match self.require(path, key)? {
            Value::U64(v) => Ok(*v),
            other => Err(fmt_err(path, format!("key `{key}` is not u64: {other:?}"))),
        }
    }

    fn req_f64(&self, path: &Path, key: &str) -> Result<f64> {
        match self.require(path, key)? {
            Value::F64(v) => Ok(*v),
            other => Err(fmt_err(path, format!("key `{key}` is not f64: {other:?}"))),
        }
    }

    fn req_f64s(&self, path: &Path, key: &str) -> Result<&[f64]> {
        match self.require(path, key)? {
            Value::F64Array(v) => Ok(v),
            other => Err(fmt_err(
                path,
                format!("key `{key}` is not an f64 array: {other:?}"),
            )),
        }
    }

    fn req_str(&self, path: &Path, key: &str) -> Result<String> {
        match self.require(path, key)? {
            Value::Bytes(v) => String::from_utf8(v.clone())
                .map_err(|_| fmt_err(path, format!("key `{key}` is not UTF-8"))),
            other => Err(fmt_err(
                path,
                format!("key `{key}` is not a byte string: {other:?}"),
            )),
        }
    }

    /// Serialize and write to `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (key, value) in &self.entries {
            out.extend_from_slice(&(key.len() as u16).to_le_bytes());
            out.extend_from_slice(key.as_bytes());
            match value {
                Value::U64(v) => {
                    out.push(1);
                    out.extend_from_slice(&v.to_le_bytes());
                }
                Value::I64(v) => {
                    out.push(2);
                    out.extend_from_slice(&v.to_le_bytes());
                }
                Value::F64(v) => {
                    out.push(3);
                    out.extend_from_slice(&v.to_le_bytes());
                }
                Value::F64Array(v) => {
                    out.push(4);
                    out.extend_from_slice(&(v.len() as u64).to_le_bytes());
                    for x in v {
                        out.extend_from_slice(&x.to_le_bytes());
                    }
                }
                Value::U64Array(v) => {
                    out.push(5);
                    out.extend_from_slice(&(v.len() as u64).to_le_bytes());
                    for x in v {
                        out.extend_from_slice(&x.to_le_bytes());
                    }
                }
                Value::Bytes(v) => {
                    out.push(6);
                    out.extend_from_slice(&(v.len() as u64).to_le_bytes());
                    out.extend_from_slice(v);
                }
            }
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Read and parse from `path`.
    pub fn load(path: &Path) -> Result<Container> {
        let bytes = std::fs::read(path)?;
        let mut r = Reader {
            bytes: &bytes,
            pos: 0,
            path,
        };
        let magic = r.take(8)?;
        if magic != MAGIC {
            return Err(fmt_err(path, "bad magic (not a bmrelax checkpoint)"));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(fmt_err(
                path,
                format!("unsupported checkpoint version {version} (expected {VERSION})"),
            ));
        }
        let count = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
        let mut entries = BTreeMap::new();
        for _ in 0..count {
            let klen = u16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes")) as usize;
            let key = String::from_utf8(r.take(klen)?.to_vec())
                .map_err(|_| fmt_err(path, "entry key is not UTF-8"))?;
            let tag = r.take(1)?[0];
            let value = match tag {
                1 => Value::U64(r.take_u64()?),
                2 => Value::I64(i64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"))),
                3 => Value::F64(r.take_f64()?),
                4 => {
                    let n = r.take_len()?;
                    let mut v = Vec::with_capacity(n);
                    for _ in 0..n {
                        v.push(r.take_f64()?);
                    }
                    Value::F64Array(v)
                }
                5 => {
                    let n = r.take_len()?;
                    let mut v = Vec::with_capacity(n);
                    for _ in 0..n {
                        v.push(r.take_u64()?);
                    }
                    Value::U64Array(v)
                }
                6 => {
                    let n = r.take_len()?;
                    Value::Bytes(r.take(n)?.to_vec())
                }
                other => {
                    return Err(fmt_err(
                        path,
                        format!("unknown value tag {other} for key `{key}`"),
                    ))
                }
            };
            entries.insert(key, value);
        }
        Ok(Container { entries })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(fmt_err(
                self.path,
                format!(
                    "truncated: wanted {n} bytes at offset {}, file has {}",
                    self.pos,
                    self.bytes.len()
                ),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn take_u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8")))
    }

    fn take_f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8")))
    }

    fn take_len(&mut self) -> Result<usize> {
        let n = self.take_u64()?;
        // A length can't exceed what's left in the file (8 bytes minimum per
        // element for the array tags, 1 for bytes); this bound rejects
        // corrupt lengths before we try to allocate them.
        if n > self.bytes.len() as u64 {
            return Err(fmt_err(
                self.path,
                format!("corrupt length {n} exceeds file size {}", self.bytes.len()),
            ));
        }
        Ok(n as usize)
    }
}

fn arch_keys(c: &mut Container, prefix: &str, arch: Arch) {
    match arch {
        Arch::Linear => c.put_str(prefix, "linear"),
        Arch::Mlp { hidden } => {
            c.put_str(prefix, "mlp");
            c.put_u64(&format!("{prefix}.hidden"), hidden as u64);
        }
    }
}

fn arch_from(c: &Container, path: &Path, prefix: &str) -> Result<Arch> {
    match c.req_str(path, prefix)?.as_str() {
        "linear" => Ok(Arch::Linear),
        "mlp" => Ok(Arch::Mlp {
            hidden: c.req_u64(path, &format!("{prefix}.hidden"))? as usize,
        }),
        other => Err(fmt_err(path, format!("unknown architecture `{other}`"))),
    }
}

fn smoothing_keys(c: &mut Container, kind: SmoothingKind) {
    c.put_str("config.smoothing", kind.name());
    c.put_f64("config.smoothing.beta", kind.beta());
    if let SmoothingKind::UniformExp { epsilon, .. } = kind {
        c.put_f64("config.smoothing.epsilon", epsilon);
    }
}

fn smoothing_from(c: &Container, path: &Path) -> Result<SmoothingKind> {
    let beta = c.req_f64(path, "config.smoothing.beta")?;
    match c.req_str(path, "config.smoothing")?.as_str() {
        "exp" => Ok(SmoothingKind::Exponential { beta }),
        "unexp" => Ok(SmoothingKind::UniformExp {
            beta,
            epsilon: c.req_f64(path, "config.smoothing.epsilon")?,
        }),
        "power" => Ok(SmoothingKind::PowerFunction { beta }),
        "gauss" => Ok(SmoothingKind::Gaussian { beta }),
        other => Err(fmt_err(
            path,
            format!("`{other}` is not a valid prior smoothing family"),
        )),
    }
}

/// Save the full training state: config echo, canonical parameter vector,
/// Adam moments, counters, master seed, and (when present) the persistent
/// negative-phase chains.
pub fn save_model(
    path: &Path,
    state: &ModelState,
    pcd: Option<&PcdState>,
    seed: u64,
) -> Result<()> {
    let mut c = Container::new();
    c.put_str("kind", "model");
    c.put_u64("config.d_x", state.config.d_x as u64);
    c.put_u64("config.d1", state.config.d1 as u64);
    c.put_u64("config.d2", state.config.d2 as u64);
    c.put_u64("config.groups", state.config.groups as u64);
    c.put_u64("config.mf_iterations", state.config.mf_iterations as u64);
    arch_keys(&mut c, "config.arch", state.config.arch);
    arch_keys(&mut c, "config.decoder_arch", state.config.decoder_arch);
    match state.config.prior {
        PriorSpec::Overlapping(kind) => {
            c.put_str("config.prior", "overlapping");
            smoothing_keys(&mut c, kind);
        }
        PriorSpec::Git { beta } => {
            c.put_str("config.prior", "git");
            c.put_f64("config.prior.beta", beta);
        }
    }
    c.put_f64s("params", state.params_vec());
    c.put_f64s("adam.m", state.adam.m.clone());
    c.put_f64s("adam.v", state.adam.v.clone());
    c.put_u64("adam.t", state.adam.t);
    c.put_f64("adam.lr", state.adam.lr);
    c.put_u64("updates_done", state.updates_done);
    c.put_u64("nan_skips", state.nan_skips);
    c.put_u64("seed", seed);
    if let Some(p) = pcd {
        c.put_u64("pcd.chains", p.chains.nrows() as u64);
        c.put_f64s(
            "pcd.state",
            p.chains.iter().copied().collect::<Vec<f64>>(),
        );
    }
    c.save(path)
}

/// A restored training state.
#[derive(Debug)]
pub struct LoadedModel {
    pub state: ModelState,
    pub pcd: Option<PcdState>,
    pub seed: u64,
}

/// Load what [`save_model`] wrote. The model is rebuilt from its config
/// echo, then every parameter, optimizer moment, and counter is overwritten
/// from the file, so the result is bit-identical to the saved state.
pub fn load_model(path: &Path) -> Result<LoadedModel> {
    let c = Container::load(path)?;
    if c.req_str(path, "kind")? != "model" {
        return Err(fmt_err(path, "not a model checkpoint"));
    }
    let prior = match c.req_str(path, "config.prior")?.as_str() {
        "overlapping" => PriorSpec::Overlapping(smoothing_from(&c, path)?),
        "git" => PriorSpec::Git {
            beta: c.req_f64(path, "config.prior.beta")?,
        },
        other => Err(fmt_err(path, format!("unknown prior kind `{other}`")))?,
    };
    let config = ModelConfig {
        d_x: c.req_u64(path, "config.d_x")? as usize,
        d1: c.req_u64(path, "config.d1")? as usize,
        d2: c.req_u64(path, "config.d2")? as usize,
        groups: c.req_u64(path, "config.groups")? as usize,
        arch: arch_from(&c, path, "config.arch")?,
        decoder_arch: arch_from(&c, path, "config.decoder_arch")?,
        prior,
        mf_iterations: c.req_u64(path, "config.mf_iterations")? as usize,
    };
    let seed = c.req_u64(path, "seed")?;
    let lr = c.req_f64(path, "adam.lr")?;
    let mut state = ModelState::new(config, lr, seed)?;
    let params = c.req_f64s(path, "params")?;
    state
        .load_params(params)
        .map_err(|e| fmt_err(path, format!("parameter vector mismatch: {e}")))?;
    let m = c.req_f64s(path, "adam.m")?;
    let v = c.req_f64s(path, "adam.v")?;
    if m.len() != state.param_count() || v.len() != state.param_count() {
        return Err(fmt_err(
            path,
            format!(
                "optimizer moment length {} / {} does not match {} parameters",
                m.len(),
                v.len(),
                state.param_count()
            ),
        ));
    }
    state.adam.m = m.to_vec();
    state.adam.v = v.to_vec();
    state.adam.t = c.req_u64(path, "adam.t")?;
    state.updates_done = c.req_u64(path, "updates_done")?;
    state.nan_skips = c.req_u64(path, "nan_skips")?;
    let pcd = match c.get("pcd.state") {
        Some(Value::F64Array(flat)) => {
            let rows = c.req_u64(path, "pcd.chains")? as usize;
            let d = state.config.d();
            if rows * d != flat.len() {
                return Err(fmt_err(
                    path,
                    format!(
                        "pcd state has {} values, expected {rows} x {d}",
                        flat.len()
                    ),
                ));
            }
            Some(PcdState {
                chains: Array2::from_shape_vec((rows, d), flat.clone())
                    .expect("shape checked above"),
            })
        }
        Some(other) => {
            return Err(fmt_err(
                path,
                format!("pcd.state is not an f64 array: {other:?}"),
            ))
        }
        None => None,
    };
    Ok(LoadedModel { state, pcd, seed })
}

/// Save a bare Boltzmann machine (biases, couplings, bipartite split).
pub fn save_rbm(path: &Path, rbm: &RBM) -> Result<()> {
    let mut c = Container::new();
    c.put_str("kind", "rbm");
    let (d1, d2) = rbm.bipartite().unwrap_or((0, 0));
    c.put_u64("rbm.d", rbm.d() as u64);
    c.put_u64("rbm.d1", d1 as u64);
    c.put_u64("rbm.d2", d2 as u64);
    c.put_f64s("rbm.a", rbm.a().to_vec());
    c.put_f64s("rbm.w", rbm.w().iter().copied().collect());
    c.save(path)
}

/// Load what [`save_rbm`] wrote (d1 = d2 = 0 marks a dense machine).
pub fn load_rbm(path: &Path) -> Result<RBM> {
    let c = Container::load(path)?;
    if c.req_str(path, "kind")? != "rbm" {
        return Err(fmt_err(path, "not a Boltzmann-machine checkpoint"));
    }
    let d = c.req_u64(path, "rbm.d")? as usize;
    let d1 = c.req_u64(path, "rbm.d1")? as usize;
    let d2 = c.req_u64(path, "rbm.d2")? as usize;
    let a = c.req_f64s(path, "rbm.a")?;
    let w = c.req_f64s(path, "rbm.w")?;
    if a.len() != d || w.len() != d * d {
        return Err(fmt_err(
            path,
            format!(
                "machine arrays have lengths {} and {}, expected {d} and {}",
                a.len(),
                w.len(),
                d * d
            ),
        ));
    }
    let a = Array1::from_vec(a.to_vec());
    let w = Array2::from_shape_vec((d, d), w.to_vec()).expect("length checked");
    if d1 == 0 && d2 == 0 {
        RBM::new(a, w)
    } else {
        RBM::new_bipartite(a, w, d1, d2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{iw_gradient_step, Arch, ModelConfig, PriorSpec};
    use crate::relaxation::NegativePhase;
    use crate::rng::{self, purpose};
    use crate::smoothing::SmoothingKind;

    fn tmp(name: &str) -> std::path::PathBuf {
        let mut p = std::env::temp_dir();
        p.push(format!("bmrelax-ckpt-test-{}-{name}", std::process::id()));
        p
    }

    fn small_config(prior: PriorSpec) -> ModelConfig {
        ModelConfig {
            d_x: 5,
            d1: 2,
            d2: 2,
            groups: 2,
            arch: Arch::Linear,
            decoder_arch: Arch::Linear,
            prior,
            mf_iterations: 5,
        }
    }

    #[test]
    fn container_round_trips_every_value_type() {
        let path = tmp("container");
        let mut c = Container::new();
        c.put_u64("alpha", 42);
        c.put("beta", Value::I64(-7));
        c.put_f64("gamma", -0.125);
        c.put_f64s("delta", vec![1.0, f64::MIN_POSITIVE, -3.5e300]);
        c.put("epsilon", Value::U64Array(vec![0, u64::MAX]));
        c.put_str("zeta", "hello checkpoint");
        c.save(&path).unwrap();
        let back = Container::load(&path).unwrap();
        for key in ["alpha", "beta", "gamma", "delta", "epsilon", "zeta"] {
            assert_eq!(
                c.get(key),
                back.get(key),
                "value for `{key}` changed across the round trip"
            );
        }
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn malformed_files_are_typed_errors_not_panics() {
        let path = tmp("malformed");
        std::fs::write(&path, b"NOTMAGIC").unwrap();
        assert!(
            matches!(Container::load(&path), Err(crate::Error::Format { .. })),
            "bad magic must be a format error"
        );
        std::fs::write(&path, &b"BMRXCKPT\x01\x00\x00\x00\x05\x00\x00\x00"[..]).unwrap();
        assert!(
            matches!(Container::load(&path), Err(crate::Error::Format { .. })),
            "truncated entry table must be a format error"
        );
        let mut with_bad_version = Vec::new();
        with_bad_version.extend_from_slice(b"BMRXCKPT");
        with_bad_version.extend_from_slice(&9u32.to_le_bytes());
        with_bad_version.extend_from_slice(&0u32.to_le_bytes());
        std::fs::write(&path, &with_bad_version).unwrap();
        assert!(
            matches!(Container::load(&path), Err(crate::Error::Format { .. })),
            "future versions must be rejected"
        );
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn rbm_round_trip_is_bitwise() {
        let path = tmp("rbm");
        let mut r = rng::stream(5, purpose::INIT, 0);
        let rbm = RBM::random_bipartite(3, 4, 0.5, 0.3, &mut r);
        save_rbm(&path, &rbm).unwrap();
        let back = load_rbm(&path).unwrap();
        assert_eq!(back.bipartite(), Some((3, 4)));
        for (x, y) in rbm.a().iter().zip(back.a().iter()) {
            assert_eq!(x.to_bits(), y.to_bits(), "bias changed across round trip");
        }
        for (x, y) in rbm.w().iter().zip(back.w().iter()) {
            assert_eq!(
                x.to_bits(),
                y.to_bits(),
                "coupling changed across round trip"
            );
        }
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn model_round_trip_preserves_params_moments_and_counters() {
        for prior in [
            PriorSpec::Overlapping(SmoothingKind::Exponential { beta: 10.0 }),
            PriorSpec::Git { beta: 20.0 },
        ] {
            let path = tmp(if matches!(prior, PriorSpec::Git { .. }) {
                "model-git"
            } else {
                "model-exp"
            });
            let mut state = ModelState::new(small_config(prior), 1e-3, 13).unwrap();
            // Take two real steps so the moments and counters are nontrivial.
            let data = ndarray::Array2::from_shape_fn((4, 5), |(i, j)| ((i + j) % 2) as f64);
            let neg = NegativePhase::exact(&state.rbm).unwrap();
            for t in 0..2 {
                let mut rng = rng::stream(13, purpose::POSTERIOR_NOISE, t);
                iw_gradient_step(&mut state, &data, 2, 0.7, &neg, &mut rng).unwrap();
            }
            let mut r = rng::stream(13, purpose::INIT, 60);
            let pcd = PcdState::init(&state.rbm, 6, &mut r).unwrap();
            save_model(&path, &state, Some(&pcd), 13).unwrap();

            let loaded = load_model(&path).unwrap();
            assert_eq!(loaded.seed, 13);
            assert_eq!(loaded.state.config, state.config);
            assert_eq!(loaded.state.updates_done, 2);
            assert_eq!(loaded.state.adam.t, state.adam.t);
            let a: Vec<f64> = state.params_vec();
            let b: Vec<f64> = loaded.state.params_vec();
            assert_eq!(a.len(), b.len());
            for (i, (x, y)) in a.iter().zip(b.iter()).enumerate() {
                assert_eq!(x.to_bits(), y.to_bits(), "param {i} not bit-identical");
            }
            for (i, (x, y)) in state.adam.m.iter().zip(loaded.state.adam.m.iter()).enumerate() {
                assert_eq!(x.to_bits(), y.to_bits(), "adam.m[{i}] not bit-identical");
            }
            for (i, (x, y)) in state.adam.v.iter().zip(loaded.state.adam.v.iter()).enumerate() {
                assert_eq!(x.to_bits(), y.to_bits(), "adam.v[{i}] not bit-identical");
            }
            let chains = loaded.pcd.expect("pcd chains were saved");
            assert_eq!(chains.chains.dim(), (6, 4));
            for (x, y) in pcd.chains.iter().zip(chains.chains.iter()) {
                assert_eq!(x.to_bits(), y.to_bits(), "pcd chain state changed");
            }
            std::fs::remove_file(&path).ok();
        }
    }

    #[test]
    fn model_checkpoint_rejects_wrong_kind() {
        let path = tmp("wrong-kind");
        let mut r = rng::stream(5, purpose::INIT, 0);
        let rbm = RBM::random_bipartite(2, 2, 0.1, 0.1, &mut r);
        save_rbm(&path, &rbm).unwrap();
        assert!(
            matches!(load_model(&path), Err(crate::Error::Format { .. })),
            "loading an RBM checkpoint as a model must fail cleanly"
        );
        std::fs::remove_file(&path).ok();
    }
}
