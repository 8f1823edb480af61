//! Dataset ingestion and synthesis: IDX image/label files, plain-text
//! binary rows, one-time static binarization, and the synthetic
//! mixture-of-prototypes generator used by desk-scale training.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::math::softplus;
use crate::rng;

/// IDX magic for unsigned-byte image tensors (rank 3).
pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
/// IDX magic for unsigned-byte label vectors (rank 1).
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn format_err(path: &Path, detail: impl Into<String>) -> Error {
    Error::Format {
        path: path.display().to_string(),
        detail: detail.into(),
    }
}

fn read_u32_be(reader: &mut impl Read, path: &Path, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    reader
        .read_exact(&mut buf)
        .map_err(|_| format_err(path, format!("truncated while reading {what}")))?;
    Ok(u32::from_be_bytes(buf))
}

/// Load an IDX unsigned-byte image file as rows of [0,1]-scaled reals
/// (one row per image, pixels flattened row-major).
pub fn load_idx_images(path: &Path) -> Result<Array2<f64>> {
    let file = File::open(path).map_err(Error::Io)?;
    let mut reader = BufReader::new(file);
    let magic = read_u32_be(&mut reader, path, "magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(format_err(
            path,
            format!("bad magic: expected {IDX_IMAGES_MAGIC:#010x}, found {magic:#010x}"),
        ));
    }
    let n = read_u32_be(&mut reader, path, "image count")? as usize;
    let rows = read_u32_be(&mut reader, path, "row count")? as usize;
    let cols = read_u32_be(&mut reader, path, "column count")? as usize;
    let pixels = rows
        .checked_mul(cols)
        .and_then(|p| p.checked_mul(n))
        .ok_or_else(|| format_err(path, "dimension overflow"))?;
    let mut raw = vec![0u8; pixels];
    reader
        .read_exact(&mut raw)
        .map_err(|_| format_err(path, "truncated pixel payload"))?;
    let mut out = Array2::zeros((n, rows * cols));
    for (i, chunk) in raw.chunks_exact(rows * cols).enumerate() {
        for (j, &b) in chunk.iter().enumerate() {
            out[[i, j]] = b as f64 / 255.0;
        }
    }
    Ok(out)
}

/// Load an IDX unsigned-byte label file.
pub fn load_idx_labels(path: &Path) -> Result<Array1<u8>> {
    let file = File::open(path).map_err(Error::Io)?;
    let mut reader = BufReader::new(file);
    let magic = read_u32_be(&mut reader, path, "magic")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(format_err(
            path,
            format!("bad magic: expected {IDX_LABELS_MAGIC:#010x}, found {magic:#010x}"),
        ));
    }
    let n = read_u32_be(&mut reader, path, "label count")? as usize;
    let mut raw = vec![0u8; n];
    reader
        .read_exact(&mut raw)
        .map_err(|_| format_err(path, "truncated label payload"))?;
    Ok(Array1::from_vec(raw))
}

/// Write rows of [0,1]-scaled reals as an IDX image file (n × rows × cols,
/// pixels quantized to bytes). Used by tests and the synthetic exporter.
pub fn write_idx_images(path: &Path, images: &Array2<f64>, rows: usize, cols: usize) -> Result<()> {
    if rows * cols != images.ncols() {
        return Err(Error::dim("IDX geometry", images.ncols(), rows * cols));
    }
    let mut file = File::create(path).map_err(Error::Io)?;
    file.write_all(&IDX_IMAGES_MAGIC.to_be_bytes())?;
    file.write_all(&(images.nrows() as u32).to_be_bytes())?;
    file.write_all(&(rows as u32).to_be_bytes())?;
    file.write_all(&(cols as u32).to_be_bytes())?;
    let mut raw = Vec::with_capacity(images.len());
    for v in images.iter() {
        raw.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
    }
    file.write_all(&raw)?;
    Ok(())
}

/// Load the plain-text binary-row format: one datum per line, each pixel a
/// '0' or '1' separated by whitespace (the conventional pre-binarized
/// dataset layout).
pub fn load_binary_rows(path: &Path) -> Result<Array2<f64>> {
    let file = File::open(path).map_err(Error::Io)?;
    let reader = BufReader::new(file);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(Error::Io)?;
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for tok in line.split_whitespace() {
            match tok {
                "0" => row.push(0.0),
                "1" => row.push(1.0),
                other => {
                    return Err(format_err(
                        path,
                        format!("line {}: expected 0/1, found {other:?}", lineno + 1),
                    ))
                }
            }
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(format_err(
                    path,
                    format!("line {}: width {} != first row {w}", lineno + 1, row.len()),
                ))
            }
            _ => {}
        }
        rows.push(row);
    }
    let w = width.unwrap_or(0);
    let mut out = Array2::zeros((rows.len(), w));
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            out[[i, j]] = v;
        }
    }
    Ok(out)
}

/// One-time static binarization: each pixel sampled once as
/// Bernoulli(intensity), from a dedicated stream of `seed`. Pixels must be
/// in [0,1]. The result is deterministic given (images, seed) and should be
/// computed once and reused; training never resamples it.
pub fn binarize_static(images: &Array2<f64>, seed: u64) -> Result<Array2<f64>> {
    if images.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
        return Err(Error::InvalidArgument(
            "binarize_static needs pixel values in [0,1]".into(),
        ));
    }
    let mut r = rng::stream(seed, rng::purpose::BINARIZE, 0);
    let mut out = images.clone();
    out.mapv_inplace(|p| if r.gen::<f64>() < p { 1.0 } else { 0.0 });
    Ok(out)
}

/// Synthetic dataset recipe: `modes` random prototypes in {0,1}^{d_x},
/// each datum a prototype with bits flipped at rate `noise`.
#[derive(Debug, Clone, Copy)]
pub struct SyntheticSpec {
    pub modes: usize,
    pub d_x: usize,
    pub noise: f64,
    pub n: usize,
}

/// A generated synthetic dataset together with its ground truth.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub data: Array2<f64>,
    pub prototypes: Array2<f64>,
    /// Mode index that generated each row.
    pub assignments: Vec<usize>,
}

/// Sample the mixture-of-noisy-prototypes dataset. Prototypes are drawn
/// fair-coin per bit; rows pick a mode uniformly, then flip each prototype
/// bit with probability `noise`.
pub fn make_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Synthetic> {
    if spec.modes == 0 {
        return Err(Error::InvalidArgument("synthetic spec needs modes >= 1".into()));
    }
    if spec.d_x == 0 {
        return Err(Error::InvalidArgument("synthetic spec needs d_x >= 1".into()));
    }
    if !(0.0..=0.5).contains(&spec.noise) {
        return Err(Error::InvalidArgument(format!(
            "synthetic noise must lie in [0, 0.5], got {}",
            spec.noise
        )));
    }
    let mut r = rng::stream(seed, rng::purpose::SYNTHETIC, 0);
    let mut prototypes = Array2::zeros((spec.modes, spec.d_x));
    for mut row in prototypes.rows_mut() {
        for v in row.iter_mut() {
            *v = if r.gen::<bool>() { 1.0 } else { 0.0 };
        }
    }
    let mut data = Array2::zeros((spec.n, spec.d_x));
    let mut assignments = Vec::with_capacity(spec.n);
    for mut row in data.rows_mut() {
        let mode = r.gen_range(0..spec.modes);
        assignments.push(mode);
        for (v, &p) in row.iter_mut().zip(prototypes.row(mode).iter()) {
            let flip = r.gen::<f64>() < spec.noise;
            *v = if flip { 1.0 - p } else { p };
        }
    }
    Ok(Synthetic {
        data,
        prototypes,
        assignments,
    })
}

/// Closed-form log-likelihood of the best factorial Bernoulli model fit to
/// a binary dataset (the baseline desk-scale training must beat): per-bit
/// MLE means, mean per-datum log-likelihood.
pub fn bernoulli_baseline_ll(data: &Array2<f64>) -> Result<f64> {
    let n = data.nrows();
    if n == 0 {
        return Err(Error::InvalidArgument(
            "Bernoulli baseline needs a nonempty dataset".into(),
        ));
    }
    let means = data.mean_axis(ndarray::Axis(0)).unwrap();
    let mut total = 0.0;
    for row in data.rows() {
        for (&x, &p) in row.iter().zip(means.iter()) {
            let pc = p.clamp(1e-7, 1.0 - 1e-7);
            total += if x > 0.5 { pc.ln() } else { (1.0 - pc).ln() };
        }
    }
    Ok(total / n as f64)
}

/// Mean log-likelihood of data under fixed Bernoulli logits (used by
/// closed-form oracles): Σ x·logit − softplus(logit).
pub fn bernoulli_ll_with_logits(x: &Array1<f64>, logits: &Array1<f64>) -> Result<f64> {
    if x.len() != logits.len() {
        return Err(Error::dim("Bernoulli logits", x.len(), logits.len()));
    }
    let mut total = 0.0;
    for (&xi, &l) in x.iter().zip(logits.iter()) {
        total += xi * l - softplus(l);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    fn tmp(name: &str) -> std::path::PathBuf {
        let mut p = std::env::temp_dir();
        p.push(format!("bmrelax-data-test-{}-{name}", std::process::id()));
        p
    }

    #[test]
    fn idx_round_trip_preserves_pixels() {
        let images = arr2(&[
            [0.0, 1.0, 0.0, 1.0, 0.5, 0.25, 0.75, 0.1, 0.9, 0.0, 1.0, 0.0, 0.2, 0.4, 0.6, 0.8],
            [1.0, 0.0, 1.0, 0.0, 0.3, 0.7, 0.2, 0.8, 0.05, 0.95, 0.5, 0.5, 0.0, 1.0, 0.0, 1.0],
        ]);
        let path = tmp("roundtrip.idx");
        write_idx_images(&path, &images, 4, 4).unwrap();
        let loaded = load_idx_images(&path).unwrap();
        assert_eq!(loaded.dim(), (2, 16));
        for (a, b) in images.iter().zip(loaded.iter()) {
            // Byte quantization: half a step of 1/255.
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12, "{a} vs {b}");
        }
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn idx_bad_magic_is_a_typed_error() {
        let path = tmp("badmagic.idx");
        std::fs::write(&path, 0x0000_0999_u32.to_be_bytes()).unwrap();
        let err = load_idx_images(&path).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("0x00000803") && msg.contains("0x00000999"),
            "error should name expected and found magic: {msg}"
        );
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn idx_truncation_is_detected() {
        let path = tmp("trunc.idx");
        // Valid header for 2 4x4 images, but only 5 payload bytes.
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
        bytes.extend_from_slice(&2_u32.to_be_bytes());
        bytes.extend_from_slice(&4_u32.to_be_bytes());
        bytes.extend_from_slice(&4_u32.to_be_bytes());
        bytes.extend_from_slice(&[7, 7, 7, 7, 7]);
        std::fs::write(&path, bytes).unwrap();
        let err = load_idx_images(&path).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
        std::fs::remove_file(&path).ok();

        let empty = tmp("empty.idx");
        std::fs::write(&empty, []).unwrap();
        assert!(load_idx_images(&empty).is_err());
        std::fs::remove_file(&empty).ok();
    }

    #[test]
    fn labels_round_trip() {
        let path = tmp("labels.idx");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
        bytes.extend_from_slice(&3_u32.to_be_bytes());
        bytes.extend_from_slice(&[5, 0, 9]);
        std::fs::write(&path, bytes).unwrap();
        let labels = load_idx_labels(&path).unwrap();
        assert_eq!(labels.to_vec(), vec![5, 0, 9]);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn text_rows_parse_and_reject_garbage() {
        let path = tmp("rows.txt");
        std::fs::write(&path, "0 1 0 1\n1 1 0 0\n\n0 0 0 1\n").unwrap();
        let data = load_binary_rows(&path).unwrap();
        assert_eq!(data.dim(), (3, 4));
        assert_eq!(data[[1, 0]], 1.0);
        std::fs::remove_file(&path).ok();

        let bad = tmp("rows-bad.txt");
        std::fs::write(&bad, "0 1\n0 2\n").unwrap();
        assert!(load_binary_rows(&bad).is_err());
        std::fs::remove_file(&bad).ok();

        let ragged = tmp("rows-ragged.txt");
        std::fs::write(&ragged, "0 1 0\n1 1\n").unwrap();
        assert!(load_binary_rows(&ragged).is_err());
        std::fs::remove_file(&ragged).ok();
    }

    #[test]
    fn binarization_is_deterministic_and_respects_extremes() {
        let images = arr2(&[[0.0, 1.0, 0.5, 0.25], [1.0, 0.0, 0.75, 0.5]]);
        let a = binarize_static(&images, 99).unwrap();
        let b = binarize_static(&images, 99).unwrap();
        assert_eq!(a, b, "same seed must binarize identically");
        assert_eq!(a[[0, 0]], 0.0);
        assert_eq!(a[[0, 1]], 1.0);
        assert_eq!(a[[1, 0]], 1.0);
        assert_eq!(a[[1, 1]], 0.0);
        let c = binarize_static(&images, 100).unwrap();
        assert!(a != c || images.len() < 8, "different seed should differ");
        assert!(binarize_static(&arr2(&[[1.5]]), 1).is_err());
    }

    #[test]
    fn synthetic_zero_noise_reproduces_prototypes() {
        let spec = SyntheticSpec {
            modes: 2,
            d_x: 12,
            noise: 0.0,
            n: 50,
        };
        let synth = make_synthetic(&spec, 7).unwrap();
        for (row, &mode) in synth.data.rows().into_iter().zip(&synth.assignments) {
            assert_eq!(row, synth.prototypes.row(mode), "noise=0 must copy");
        }
    }

    #[test]
    fn synthetic_bit_means_match_mixture_moments() {
        let spec = SyntheticSpec {
            modes: 4,
            d_x: 16,
            noise: 0.1,
            n: 20_000,
        };
        let synth = make_synthetic(&spec, 13).unwrap();
        let empirical = synth.data.mean_axis(ndarray::Axis(0)).unwrap();
        for j in 0..spec.d_x {
            // Mixture mean over equiprobable modes with flip noise.
            let mut want = 0.0;
            for m in 0..spec.modes {
                let p = synth.prototypes[[m, j]];
                want += (p * (1.0 - spec.noise) + (1.0 - p) * spec.noise) / spec.modes as f64;
            }
            let se = (want * (1.0 - want) / spec.n as f64).sqrt();
            assert!(
                (empirical[j] - want).abs() < 4.0 * se.max(1e-3),
                "bit {j}: {} vs {want}",
                empirical[j]
            );
        }
    }

    #[test]
    fn synthetic_edge_cases() {
        let empty = make_synthetic(
            &SyntheticSpec {
                modes: 3,
                d_x: 5,
                noise: 0.2,
                n: 0,
            },
            1,
        )
        .unwrap();
        assert_eq!(empty.data.nrows(), 0);
        assert!(make_synthetic(
            &SyntheticSpec {
                modes: 0,
                d_x: 5,
                noise: 0.2,
                n: 1,
            },
            1,
        )
        .is_err());
        assert!(make_synthetic(
            &SyntheticSpec {
                modes: 1,
                d_x: 5,
                noise: 0.9,
                n: 1,
            },
            1,
        )
        .is_err());
    }

    #[test]
    fn bernoulli_baseline_matches_hand_computation() {
        // 3 data over 2 bits: means (2/3, 1/3).
        let data = arr2(&[[1.0, 0.0], [1.0, 1.0], [0.0, 0.0]]);
        let got = bernoulli_baseline_ll(&data).unwrap();
        let p: [f64; 2] = [2.0 / 3.0, 1.0 / 3.0];
        let mut want = 0.0;
        for row in data.rows() {
            for (k, &x) in row.iter().enumerate() {
                want += if x > 0.5 { p[k].ln() } else { (1.0 - p[k]).ln() };
            }
        }
        want /= 3.0;
        assert!((got - want).abs() < 1e-12);
    }
}
