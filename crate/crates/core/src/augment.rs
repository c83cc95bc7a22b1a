//! Spectrogram-level augmentations (SpecAug, random time crop, mixup) plus
//! simple audio-level augmentations. Everything is a deterministic function
//! of (input, plan, seed).
//!
//! Feature stacks are [C, F, T] with the mask shared across channels.
//! Masked cells are set to the per-channel mean of the pre-mask stack so
//! later [0,1] scaling statistics are not distorted. In aligned mode the mask
//! positions are sampled once on the full F-band representation; non-aligned
//! mode samples independently inside each head's rows.

use crate::error::{Error, Result};
use crate::rng::derive_rng;
use crate::tensor::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpecAugPlan {
    pub n_freq_masks: usize,
    pub max_freq_width: usize,
    pub n_time_masks: usize,
    pub max_time_width: usize,
}

impl SpecAugPlan {
    pub fn disabled() -> SpecAugPlan {
        SpecAugPlan {
            n_freq_masks: 0,
            max_freq_width: 0,
            n_time_masks: 0,
            max_time_width: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentPlan {
    pub seed: u64,
    pub specaug: SpecAugPlan,
    /// Target frame count of the random time crop.
    pub crop_t: usize,
    /// Beta(α, α) parameter for mixup; α ≤ 0 disables mixup (λ = 1).
    pub mixup_alpha: f64,
    /// Sample SpecAug positions once globally instead of per head.
    pub aligned: bool,
}

impl AugmentPlan {
    pub fn validate(&self, f_bands: usize, t_frames: usize) -> Result<()> {
        if self.specaug.max_freq_width > f_bands {
            return Err(Error::InvalidArgument(format!(
                "max_freq_width {} exceeds F={f_bands}",
                self.specaug.max_freq_width
            )));
        }
        if self.specaug.max_time_width > t_frames {
            return Err(Error::InvalidArgument(format!(
                "max_time_width {} exceeds T={t_frames}",
                self.specaug.max_time_width
            )));
        }
        if self.crop_t == 0 || self.crop_t > t_frames {
            return Err(Error::InvalidArgument(format!(
                "crop_T {} must lie in [1, T={t_frames}]",
                self.crop_t
            )));
        }
        Ok(())
    }

    /// RNG stream for one example's augmentation draws.
    pub fn rng(&self, epoch: usize, example: usize) -> ChaCha8Rng {
        derive_rng(self.seed, "augment", &[epoch as u64, example as u64])
    }
}

fn draw_span(rng: &mut ChaCha8Rng, dim: usize, max_width: usize) -> (usize, usize) {
    let width = rng.random_range(0..=max_width.min(dim));
    let start = rng.random_range(0..=dim - width);
    (start, start + width)
}

fn or_masks_into(
    mask: &mut [bool],
    f_bands: usize,
    t_frames: usize,
    rows: &[usize],
    plan: &SpecAugPlan,
    rng: &mut ChaCha8Rng,
) {
    debug_assert_eq!(mask.len(), f_bands * t_frames);
    for _ in 0..plan.n_freq_masks {
        let (lo, hi) = draw_span(rng, rows.len(), plan.max_freq_width);
        for &r in &rows[lo..hi] {
            mask[r * t_frames..(r + 1) * t_frames].fill(true);
        }
    }
    for _ in 0..plan.n_time_masks {
        let (lo, hi) = draw_span(rng, t_frames, plan.max_time_width);
        for &r in rows {
            mask[r * t_frames + lo..r * t_frames + hi].fill(true);
        }
    }
}

/// Samples the boolean F×T SpecAug mask (true = replace with channel mean).
///
/// Aligned mode draws on the full band axis once; non-aligned re-draws per
/// head inside that head's rows (frequency spans index the head's local
/// rows, time spans apply to the head's rows only).
pub fn specaug_mask(
    f_bands: usize,
    t_frames: usize,
    head_rows: &[Vec<usize>],
    plan: &SpecAugPlan,
    aligned: bool,
    rng: &mut ChaCha8Rng,
) -> Vec<bool> {
    let mut mask = vec![false; f_bands * t_frames];
    if aligned || head_rows.len() <= 1 {
        let all: Vec<usize> = (0..f_bands).collect();
        or_masks_into(&mut mask, f_bands, t_frames, &all, plan, rng);
    } else {
        for rows in head_rows {
            or_masks_into(&mut mask, f_bands, t_frames, rows, plan, rng);
        }
    }
    mask
}

/// Mean of each leading-axis channel.
pub fn channel_means(stack: &Tensor) -> Vec<f64> {
    let channels = stack.shape()[0];
    let per = stack.numel() / channels;
    (0..channels)
        .map(|ch| stack.data()[ch * per..(ch + 1) * per].iter().sum::<f64>() / per as f64)
        .collect()
}

/// Replaces masked (f, t) cells of every channel with the given fill values.
///
/// `mask` has one entry per (row, frame) cell of a channel plane; `fills`
/// has one value per channel.
pub fn fill_masked(stack: &Tensor, mask: &[bool], fills: &[f64]) -> Result<Tensor> {
    let channels = stack.shape()[0];
    let per = stack.numel() / channels;
    if mask.len() != per || fills.len() != channels {
        return Err(Error::Shape(format!(
            "mask len {} / fills len {} vs stack {:?}",
            mask.len(),
            fills.len(),
            stack.shape()
        )));
    }
    let mut out = stack.clone();
    for ch in 0..channels {
        let fill = fills[ch];
        let plane = &mut out.data_mut()[ch * per..(ch + 1) * per];
        for (v, &m) in plane.iter_mut().zip(mask) {
            if m {
                *v = fill;
            }
        }
    }
    Ok(out)
}

/// SpecAug on a [C, F, T] stack: masked cells become the channel mean.
pub fn spec_augment(stack: &Tensor, mask: &[bool]) -> Result<Tensor> {
    let means = channel_means(stack);
    fill_masked(stack, mask, &means)
}

pub fn draw_crop_start(t_frames: usize, crop_t: usize, rng: &mut ChaCha8Rng) -> Result<usize> {
    if crop_t == 0 || crop_t > t_frames {
        return Err(Error::InvalidArgument(format!(
            "crop_T {crop_t} must lie in [1, T={t_frames}]"
        )));
    }
    Ok(rng.random_range(0..=t_frames - crop_t))
}

/// Start offset used at evaluation time: the centered window.
pub fn center_crop_start(t_frames: usize, crop_t: usize) -> Result<usize> {
    if crop_t == 0 || crop_t > t_frames {
        return Err(Error::InvalidArgument(format!(
            "crop_T {crop_t} must lie in [1, T={t_frames}]"
        )));
    }
    Ok((t_frames - crop_t) / 2)
}

/// Keeps contiguous frames [start, start+crop_t) of a [C, F, T] stack.
pub fn crop_time(stack: &Tensor, start: usize, crop_t: usize) -> Result<Tensor> {
    let (channels, f_bands, t_frames) = match stack.shape() {
        [c, f, t] => (*c, *f, *t),
        other => return Err(Error::Shape(format!("expected [C,F,T], got {other:?}"))),
    };
    if start + crop_t > t_frames {
        return Err(Error::InvalidArgument(format!(
            "crop [{start}, {}) exceeds T={t_frames}",
            start + crop_t
        )));
    }
    let mut data = Vec::with_capacity(channels * f_bands * crop_t);
    for ch in 0..channels {
        for f in 0..f_bands {
            let base = (ch * f_bands + f) * t_frames + start;
            data.extend_from_slice(&stack.data()[base..base + crop_t]);
        }
    }
    Tensor::from_vec(&[channels, f_bands, crop_t], data)
}

/// λ ~ Beta(α, α); α ≤ 0 disables mixing (λ = 1).
pub fn draw_mixup_lambda(alpha: f64, rng: &mut ChaCha8Rng) -> f64 {
    if alpha <= 0.0 {
        return 1.0;
    }
    Beta::new(alpha, alpha)
        .expect("alpha > 0 is a valid Beta parameter")
        .sample(rng)
}

/// Convex combination of two stacks and their soft labels.
pub fn mixup(
    a: &Tensor,
    b: &Tensor,
    label_a: &[f64],
    label_b: &[f64],
    lambda: f64,
) -> Result<(Tensor, Vec<f64>)> {
    if a.shape() != b.shape() || label_a.len() != label_b.len() {
        return Err(Error::Shape(format!(
            "mixup shapes differ: {:?} vs {:?}, labels {} vs {}",
            a.shape(),
            b.shape(),
            label_a.len(),
            label_b.len()
        )));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!(
            "mixup λ must lie in [0,1], got {lambda}"
        )));
    }
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| lambda * x + (1.0 - lambda) * y)
        .collect();
    let label = label_a
        .iter()
        .zip(label_b)
        .map(|(&x, &y)| lambda * x + (1.0 - lambda) * y)
        .collect();
    Ok((Tensor::from_vec(a.shape(), data)?, label))
}

/// Adds white Gaussian noise at the requested SNR (dB) relative to the
/// signal's own power. A silent signal is returned unchanged.
pub fn add_noise(wave: &[f64], snr_db: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let power = wave.iter().map(|v| v * v).sum::<f64>() / wave.len().max(1) as f64;
    if power == 0.0 {
        return wave.to_vec();
    }
    let noise_std = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    let normal = Normal::new(0.0, noise_std).expect("finite std");
    wave.iter().map(|&v| v + normal.sample(rng)).collect()
}

pub fn scale(wave: &[f64], gain: f64) -> Vec<f64> {
    wave.iter().map(|&v| v * gain).collect()
}

/// Blends two same-class clips: ratio·a + (1−ratio)·b.
pub fn same_class_mix(a: &[f64], b: &[f64], ratio: f64) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "clip lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter()
        .zip(b)
        .map(|(&x, &y)| ratio * x + (1.0 - ratio) * y)
        .collect())
}
