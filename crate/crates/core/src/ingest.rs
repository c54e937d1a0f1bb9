//! IDX image/label ingestion, grayscale conversion, PGM output, and the
//! streaming mean-image demo with coordinate-wise confidence intervals at a
//! Bonferroni-adjusted level.

use crate::model::{self, ModelSpec};
use crate::parallel::ParallelEstimator;
use crate::sgd::StepSchedule;
use crate::stats;
use std::io::{self, Write};
use thiserror::Error;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("bad IDX magic 0x{got:08x}, expected 0x{expected:08x}")]
    BadMagic { got: u32, expected: u32 },
    #[error("IDX payload has {got} bytes, expected {expected}")]
    Truncated { got: usize, expected: usize },
    #[error("IDX header is incomplete ({0} bytes)")]
    ShortHeader(usize),
    #[error("label {label} at index {index} is outside 0..=9")]
    LabelOutOfRange { label: u8, index: usize },
}

#[derive(Debug, Error)]
pub enum DemoError {
    #[error("digit {digit} has only {got} samples, need at least k = {k}")]
    InsufficientSamples { digit: u8, got: usize, k: usize },
    #[error("images and labels disagree: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("invalid parameters: {0}")]
    Invalid(String),
    #[error(transparent)]
    Inference(#[from] crate::parallel::InferenceError),
}

/// A parsed IDX image container (big-endian magic 0x00000803, then count,
/// rows, cols as 32-bit big-endian, then raw pixel bytes).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    count: u32,
    rows: u32,
    cols: u32,
    pixels: Vec<u8>,
}

impl IdxImages {
    pub fn new(count: u32, rows: u32, cols: u32, pixels: Vec<u8>) -> Result<Self, IdxError> {
        let expected = count as usize * rows as usize * cols as usize;
        if pixels.len() != expected {
            return Err(IdxError::Truncated {
                got: pixels.len(),
                expected,
            });
        }
        Ok(Self {
            count,
            rows,
            cols,
            pixels,
        })
    }

    pub fn count(&self) -> usize {
        self.count as usize
    }

    pub fn rows(&self) -> usize {
        self.rows as usize
    }

    pub fn cols(&self) -> usize {
        self.cols as usize
    }

    /// Pixels per image.
    pub fn dim(&self) -> usize {
        self.rows() * self.cols()
    }

    pub fn image(&self, index: usize) -> &[u8] {
        let d = self.dim();
        &self.pixels[index * d..(index + 1) * d]
    }

    /// Serializes back to the exact byte layout [`read_idx_images`] accepts.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.pixels.len());
        out.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
        out.extend_from_slice(&self.count.to_be_bytes());
        out.extend_from_slice(&self.rows.to_be_bytes());
        out.extend_from_slice(&self.cols.to_be_bytes());
        out.extend_from_slice(&self.pixels);
        out
    }
}

fn be_u32(bytes: &[u8], offset: usize) -> u32 {
    u32::from_be_bytes(bytes[offset..offset + 4].try_into().expect("checked length"))
}

pub fn read_idx_images(bytes: &[u8]) -> Result<IdxImages, IdxError> {
    if bytes.len() < 16 {
        return Err(IdxError::ShortHeader(bytes.len()));
    }
    let magic = be_u32(bytes, 0);
    if magic != IMAGE_MAGIC {
        return Err(IdxError::BadMagic {
            got: magic,
            expected: IMAGE_MAGIC,
        });
    }
    let count = be_u32(bytes, 4);
    let rows = be_u32(bytes, 8);
    let cols = be_u32(bytes, 12);
    IdxImages::new(count, rows, cols, bytes[16..].to_vec())
}

pub fn read_idx_labels(bytes: &[u8]) -> Result<Vec<u8>, IdxError> {
    if bytes.len() < 8 {
        return Err(IdxError::ShortHeader(bytes.len()));
    }
    let magic = be_u32(bytes, 0);
    if magic != LABEL_MAGIC {
        return Err(IdxError::BadMagic {
            got: magic,
            expected: LABEL_MAGIC,
        });
    }
    let count = be_u32(bytes, 4) as usize;
    let payload = &bytes[8..];
    if payload.len() != count {
        return Err(IdxError::Truncated {
            got: payload.len(),
            expected: count,
        });
    }
    for (index, &label) in payload.iter().enumerate() {
        if label > 9 {
            return Err(IdxError::LabelOutOfRange { label, index });
        }
    }
    Ok(payload.to_vec())
}

pub fn write_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Maps a byte pixel to the grayscale convention where -1 is black, 0 gray,
/// and 1 white.
#[inline]
pub fn normalize(pixel: u8) -> f64 {
    2.0 * pixel as f64 / 255.0 - 1.0
}

/// Inverse of [`normalize`], rounding half-up and clamping to 0..=255.
#[inline]
pub fn denormalize(value: f64) -> u8 {
    let raw = (value + 1.0) * 255.0 / 2.0;
    (raw + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// A real-valued image on the [-1, 1] grayscale.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl GrayImage {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), rows * cols, "value count mismatch");
        assert!(
            values.iter().all(|v| (-1.0..=1.0).contains(v)),
            "grayscale values must lie in [-1, 1]"
        );
        Self { rows, cols, values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Writes binary PGM (P5, maxval 255).
    pub fn write_pgm<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "P5\n{} {}\n255\n", self.cols, self.rows)?;
        let bytes: Vec<u8> = self.values.iter().map(|&v| denormalize(v)).collect();
        w.write_all(&bytes)
    }
}

/// Value written over coordinates whose upper confidence bound is negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DenoiseTarget {
    /// Black (-1), matching the grayscale convention.
    #[default]
    Black,
    /// Mid gray (0).
    Gray,
}

impl DenoiseTarget {
    fn value(&self) -> f64 {
        match self {
            DenoiseTarget::Black => -1.0,
            DenoiseTarget::Gray => 0.0,
        }
    }
}

/// Streaming mean-image estimate for one digit with adaptive denoising.
///
/// Normalized images of the digit are streamed through K parallel averaged
/// runs of the mean objective (a trailing partial round is dropped so the
/// runs stay aligned). Coordinate-wise intervals are built at the Bonferroni
/// level `1 - alpha/d`, i.e. per-coordinate quantile `t(1 - alpha/(2d), K-1)`,
/// and any coordinate whose upper bound falls below zero is overwritten with
/// the denoise target in the second returned image.
pub fn mnist_mean_demo(
    images: &IdxImages,
    labels: &[u8],
    digit: u8,
    k: usize,
    alpha: f64,
    schedule: &StepSchedule,
    target: DenoiseTarget,
) -> Result<(GrayImage, GrayImage), DemoError> {
    if labels.len() != images.count() {
        return Err(DemoError::CountMismatch {
            images: images.count(),
            labels: labels.len(),
        });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(DemoError::Invalid(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    if digit > 9 {
        return Err(DemoError::Invalid(format!("digit {digit} outside 0..=9")));
    }
    let selected: Vec<usize> = labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l == digit)
        .map(|(i, _)| i)
        .collect();
    let d = images.dim();
    let spec = ModelSpec::mean(d);
    let mut est = ParallelEstimator::new(k, d, *schedule)?;
    if selected.len() < k {
        return Err(DemoError::InsufficientSamples {
            digit,
            got: selected.len(),
            k,
        });
    }
    let usable = selected.len() - selected.len() % k;
    let mut raw = vec![0.0; d];
    for &index in &selected[..usable] {
        for (v, &p) in raw.iter_mut().zip(images.image(index)) {
            *v = normalize(p);
        }
        let raw_ref = &raw;
        est.ingest(|x, out| model::gradient_parts_into(&spec, x, raw_ref, 0.0, out))?;
    }

    let mean = est.parallel_mean()?;
    let per_coordinate_p = 1.0 - alpha / (2.0 * d as f64);
    if per_coordinate_p >= 1.0 {
        return Err(DemoError::Invalid(format!(
            "per-coordinate level 1 - {alpha}/(2*{d}) is indistinguishable from 1"
        )));
    }
    let t = stats::t_quantile(per_coordinate_p, (k - 1) as u32);
    let sqrt_k = (k as f64).sqrt();
    let mut denoised = mean.clone();
    for (j, out) in denoised.iter_mut().enumerate() {
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for run in est.runs() {
            let p = run.average()[j];
            sum += p;
            sum_sq += p * p;
        }
        let kf = k as f64;
        let center = sum / kf;
        let var = ((sum_sq - sum * sum / kf) / (kf - 1.0)).max(0.0);
        let upper = center + t * var.sqrt() / sqrt_k;
        if upper < 0.0 {
            *out = target.value();
        }
    }
    Ok((
        GrayImage::new(images.rows(), images.cols(), mean),
        GrayImage::new(images.rows(), images.cols(), denoised),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_seed, SeededStream};
    use proptest::prelude::*;

    fn tiny_image_file() -> Vec<u8> {
        // Header 00000803, dims (1, 1, 1), payload 0x80.
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&0x0000_0803u32.to_be_bytes());
        bytes.extend_from_slice(&1u32.to_be_bytes());
        bytes.extend_from_slice(&1u32.to_be_bytes());
        bytes.extend_from_slice(&1u32.to_be_bytes());
        bytes.push(0x80);
        bytes
    }

    #[test]
    fn parses_hand_constructed_image_file() {
        let parsed = read_idx_images(&tiny_image_file()).unwrap();
        assert_eq!(parsed.count(), 1);
        assert_eq!((parsed.rows(), parsed.cols()), (1, 1));
        assert_eq!(parsed.image(0), &[128]);
    }

    #[test]
    fn rejects_label_magic_on_image_parser() {
        let mut bytes = tiny_image_file();
        bytes[..4].copy_from_slice(&0x0000_0801u32.to_be_bytes());
        assert!(matches!(
            read_idx_images(&bytes),
            Err(IdxError::BadMagic { got: 0x0801, .. })
        ));
    }

    #[test]
    fn zero_images_is_valid() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&0x0000_0803u32.to_be_bytes());
        bytes.extend_from_slice(&0u32.to_be_bytes());
        bytes.extend_from_slice(&28u32.to_be_bytes());
        bytes.extend_from_slice(&28u32.to_be_bytes());
        let parsed = read_idx_images(&bytes).unwrap();
        assert_eq!(parsed.count(), 0);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let mut bytes = tiny_image_file();
        bytes.pop();
        assert!(matches!(
            read_idx_images(&bytes),
            Err(IdxError::Truncated { got: 0, expected: 1 })
        ));
    }

    #[test]
    fn label_parsing() {
        let bytes = write_idx_labels(&[0, 5, 9]);
        assert_eq!(read_idx_labels(&bytes).unwrap(), vec![0, 5, 9]);
        assert_eq!(read_idx_labels(&write_idx_labels(&[])).unwrap(), vec![]);
        let bad = write_idx_labels(&[0, 10]);
        assert!(matches!(
            read_idx_labels(&bad),
            Err(IdxError::LabelOutOfRange {
                label: 10,
                index: 1
            })
        ));
    }

    #[test]
    fn normalize_endpoints() {
        assert_eq!(normalize(0), -1.0);
        assert_eq!(normalize(255), 1.0);
        assert!((normalize(128) - 0.003922).abs() < 1e-6);
        assert_eq!(denormalize(-1.0), 0);
        assert_eq!(denormalize(1.0), 255);
    }

    proptest! {
        #[test]
        fn image_round_trip(
            count in 0u32..5,
            rows in 1u32..5,
            cols in 1u32..5,
            seed in 0u64..1000,
        ) {
            let len = (count * rows * cols) as usize;
            let mut draws = SeededStream::new(seed).next_draws();
            let pixels: Vec<u8> = (0..len).map(|_| (draws.next_u64() & 0xff) as u8).collect();
            let images = IdxImages::new(count, rows, cols, pixels).unwrap();
            let bytes = images.to_bytes();
            prop_assert_eq!(read_idx_images(&bytes).unwrap().to_bytes(), bytes);
        }

        #[test]
        fn pixel_round_trip(p in 0u8..=255) {
            prop_assert_eq!(denormalize(normalize(p)), p);
        }
    }

    #[test]
    fn pgm_layout() {
        let img = GrayImage::new(1, 2, vec![-1.0, 1.0]);
        let mut out = Vec::new();
        img.write_pgm(&mut out).unwrap();
        assert_eq!(out, b"P5\n2 1\n255\n\x00\xff");
    }

    /// Synthetic digit images with independent pixel noise around a target.
    fn synthetic_images(
        truth: &[f64],
        n: usize,
        noise_sd: f64,
        seed: u64,
    ) -> (IdxImages, Vec<u8>) {
        let d = truth.len();
        let mut pixels = Vec::with_capacity(n * d);
        let mut stream = SeededStream::new(seed);
        for _ in 0..n {
            let mut draws = stream.next_draws();
            for &t in truth {
                pixels.push(denormalize((t + noise_sd * draws.normal()).clamp(-1.0, 1.0)));
            }
        }
        let images = IdxImages::new(n as u32, 1, d as u32, pixels).unwrap();
        let labels = vec![7u8; n];
        (images, labels)
    }

    #[test]
    fn identical_images_give_degenerate_intervals() {
        let truth = vec![0.5, -0.5, 0.0, 0.25];
        let n = 12;
        let (images, labels) = synthetic_images(&truth, n, 0.0, 3);
        let sched = StepSchedule::new(1.0, 0.505).unwrap();
        let (mean, denoised) =
            mnist_mean_demo(&images, &labels, 7, 4, 0.001, &sched, DenoiseTarget::Black)
                .unwrap();
        // The mean is the common image (up to the byte quantization of the
        // fixture), and exactly the negative coordinates are blackened.
        for (m, &t) in mean.values().iter().zip(&truth) {
            assert!((m - t).abs() < 0.01, "{m} vs {t}");
        }
        for (j, (&v, &m)) in denoised.values().iter().zip(mean.values()).enumerate() {
            if m < 0.0 {
                assert_eq!(v, -1.0, "coordinate {j} should be blackened");
            } else {
                assert_eq!(v, m, "coordinate {j} should be kept");
            }
        }
    }

    #[test]
    fn synthetic_digit_denoising_separates_signs() {
        // Coordinates at +0.5 survive, -0.5 are blackened.
        let d = 784;
        let truth: Vec<f64> = (0..d)
            .map(|j| if j % 2 == 0 { 0.5 } else { -0.5 })
            .collect();
        let (images, labels) = synthetic_images(&truth, 10_000, 0.3, 8);
        let sched = StepSchedule::new(1.0, 0.505).unwrap();
        let (_, denoised) =
            mnist_mean_demo(&images, &labels, 7, 6, 0.001, &sched, DenoiseTarget::Black)
                .unwrap();
        for (j, &v) in denoised.values().iter().enumerate() {
            if j % 2 == 0 {
                assert!(v > 0.3, "positive coordinate {j} was blackened ({v})");
            } else {
                assert_eq!(v, -1.0, "negative coordinate {j} survived ({v})");
            }
        }
    }

    #[test]
    fn denoising_is_monotone_in_alpha() {
        let d = 64;
        let truth: Vec<f64> = (0..d).map(|j| (j as f64 / d as f64) - 0.5).collect();
        let (images, labels) = synthetic_images(&truth, 600, 0.4, 12);
        let sched = StepSchedule::new(1.0, 0.505).unwrap();
        let blackened = |alpha: f64| -> Vec<usize> {
            let (_, den) =
                mnist_mean_demo(&images, &labels, 7, 4, alpha, &sched, DenoiseTarget::Black)
                    .unwrap();
            den.values()
                .iter()
                .enumerate()
                .filter(|(_, &v)| v == -1.0)
                .map(|(j, _)| j)
                .collect()
        };
        // Lower alpha -> wider intervals -> fewer blackened coordinates.
        let strict = blackened(0.1);
        let loose = blackened(0.001);
        assert!(loose.iter().all(|j| strict.contains(j)));
    }

    #[test]
    fn bonferroni_guarantee_on_nonnegative_means() {
        // With every true mean >= 0 and the exact-pivot schedule, the chance
        // of blackening any coordinate is at most alpha (plus MC slack).
        let d = 16;
        let truth = vec![0.0; d];
        let alpha = 0.05;
        let sched = StepSchedule::new(1.0, 1.0).unwrap();
        let reps = 500;
        let mut any_blackened = 0;
        for rep in 0..reps {
            let (images, labels) = synthetic_images(&truth, 120, 0.5, derive_seed(777, rep));
            let (_, den) =
                mnist_mean_demo(&images, &labels, 7, 6, alpha, &sched, DenoiseTarget::Black)
                    .unwrap();
            if den.values().iter().any(|&v| v == -1.0) {
                any_blackened += 1;
            }
        }
        let rate = any_blackened as f64 / reps as f64;
        let slack = 4.0 * (alpha * (1.0 - alpha) / reps as f64).sqrt();
        assert!(rate <= alpha + slack, "blackening rate {rate}");
    }

    #[test]
    fn insufficient_samples_is_an_error() {
        let (images, labels) = synthetic_images(&[0.0; 4], 3, 0.1, 1);
        let sched = StepSchedule::default();
        assert!(matches!(
            mnist_mean_demo(&images, &labels, 7, 6, 0.001, &sched, DenoiseTarget::Black),
            Err(DemoError::InsufficientSamples { .. })
        ));
        // No samples of a different digit at all.
        assert!(matches!(
            mnist_mean_demo(&images, &labels, 3, 2, 0.001, &sched, DenoiseTarget::Black),
            Err(DemoError::InsufficientSamples { .. })
        ));
    }
}
